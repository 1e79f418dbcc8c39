//! Discrete-time surrogate of the pneumatic arm.
//!
//! Node pressures follow a leaky diffusion network driven by the actuation
//! pressure `u`:
//!
//! ```text
//! x[k+1] = (1 - λ(u)) x + C x + leak ⊙ (g(M) u + d(M))
//! λ_m(u) = leak_m (1 - stiff_m h(u)),   h(u) = r / (1 + r),  r = (u / knee)^p
//! g_m(M) = input_gain_m (1 - damping_m tanh(M / damping_sat))
//! d_m(M) = payload_gain_m tanh(M / payload_sat) + contact_gain_m tanh(M / contact_sat)
//! s[k]   = x[k] + noise
//! Θ[k]   = angle_weights · x[k] + angle_payload_slope M
//! ```
//!
//! Driving terms are scaled by the base leak so `input_gain` is the static
//! pressure gain of a node. The mass enters only through saturating terms.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{InputCondition, PressureStateSeries, TimeGrid, Window};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateParams {
    pub n_nodes: usize,
    /// Per-node leak rate in (0, 1].
    pub leak: Vec<f64>,
    /// Inter-node diffusion matrix, row-major `n_nodes x n_nodes`.
    pub coupling: Vec<Vec<f64>>,
    /// Static gain from actuation pressure, non-decreasing towards the tip.
    pub input_gain: Vec<f64>,
    /// Fractional leak reduction at high pressure, in [0, 1). All zeros disables it.
    pub stiffening: Vec<f64>,
    /// psi
    pub stiffening_knee: f64,
    pub stiffening_exponent: f64,
    /// Static load, psi at saturation.
    pub payload_gain: Vec<f64>,
    /// grams
    pub payload_sat: f64,
    /// Contact response, psi at saturation.
    pub contact_gain: Vec<f64>,
    /// grams
    pub contact_sat: f64,
    /// Fraction of input gain removed by a heavy payload, in [0, 1].
    pub payload_damping: Vec<f64>,
    /// grams
    pub damping_sat: f64,
    /// psi
    pub noise_std: f64,
    /// degrees/psi
    pub angle_weights: Vec<f64>,
    /// degrees/gram
    pub angle_payload_slope: f64,
    /// Noise seed. Not read from config files; the experiment seed is used.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        let n: usize = 7;
        let c = 0.01;
        let coupling = (0..n)
            .map(|i| (0..n).map(|j| if i.abs_diff(j) == 1 { c } else { 0.0 }).collect())
            .collect();
        Self {
            n_nodes: n,
            leak: vec![0.30, 0.25, 0.20, 0.15, 0.12, 0.10, 0.08],
            coupling,
            input_gain: vec![0.10, 0.11, 0.12, 0.13, 0.14, 0.15, 0.16],
            stiffening: vec![0.0, 0.0, 0.1, 0.3, 0.5, 0.7, 0.85],
            stiffening_knee: 40.0,
            stiffening_exponent: 8.0,
            payload_gain: vec![6.0, 3.0, -3.0, -6.0, 0.0, 6.0, 0.0],
            payload_sat: 300.0,
            contact_gain: vec![0.0, 6.0, 6.0, 0.0, -6.0, 0.0, 0.0],
            contact_sat: 30.0,
            payload_damping: vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.97],
            damping_sat: 50.0,
            noise_std: 0.2,
            angle_weights: vec![0.0, 0.0, 0.0, 0.5, 1.0, 2.0, 4.0],
            angle_payload_slope: 0.02,
            seed: 1,
        }
    }
}

impl SurrogateParams {
    /// Every invariant violation, one message each.
    pub fn problems(&self) -> Vec<String> {
        let n = self.n_nodes;
        let mut out = Vec::new();
        if n == 0 {
            out.push("n_nodes: must be > 0".to_string());
            return out;
        }
        let vectors: [(&str, &Vec<f64>); 7] = [
            ("leak", &self.leak),
            ("input_gain", &self.input_gain),
            ("stiffening", &self.stiffening),
            ("payload_gain", &self.payload_gain),
            ("contact_gain", &self.contact_gain),
            ("payload_damping", &self.payload_damping),
            ("angle_weights", &self.angle_weights),
        ];
        let mut shapes_ok = true;
        for (name, v) in vectors {
            if v.len() != n {
                out.push(format!("{name}: expected {n} entries, got {}", v.len()));
                shapes_ok = false;
            } else if v.iter().any(|x| !x.is_finite()) {
                out.push(format!("{name}: entries must be finite"));
                shapes_ok = false;
            }
        }
        if self.coupling.len() != n || self.coupling.iter().any(|r| r.len() != n) {
            out.push(format!("coupling: expected a {n}x{n} matrix"));
            shapes_ok = false;
        } else if self.coupling.iter().flatten().any(|x| !x.is_finite()) {
            out.push("coupling: entries must be finite".to_string());
            shapes_ok = false;
        }
        for (name, v) in [
            ("stiffening_knee", self.stiffening_knee),
            ("stiffening_exponent", self.stiffening_exponent),
            ("payload_sat", self.payload_sat),
            ("contact_sat", self.contact_sat),
            ("damping_sat", self.damping_sat),
        ] {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("{name}: must be finite and > 0"));
            }
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            out.push("noise_std: must be finite and >= 0".to_string());
        }
        if !self.angle_payload_slope.is_finite() {
            out.push("angle_payload_slope: must be finite".to_string());
        }
        if !shapes_ok {
            return out;
        }
        if self.leak.iter().any(|&l| !(l > 0.0 && l <= 1.0)) {
            out.push("leak: entries must lie in (0, 1]".to_string());
        }
        if self.input_gain.iter().any(|&g| g < 0.0) {
            out.push("input_gain: entries must be >= 0".to_string());
        }
        if self.input_gain.windows(2).any(|w| w[1] < w[0]) {
            out.push("input_gain: must be non-decreasing from base to tip".to_string());
        }
        if self.stiffening.iter().any(|&s| !(0.0..1.0).contains(&s)) {
            out.push("stiffening: entries must lie in [0, 1)".to_string());
        }
        if self.payload_damping.iter().any(|&d| !(0.0..=1.0).contains(&d)) {
            out.push("payload_damping: entries must lie in [0, 1]".to_string());
        }
        out
    }

    /// Smallest leak each node can reach under stiffening.
    pub fn min_leak(&self) -> Vec<f64> {
        self.leak.iter().zip(&self.stiffening).map(|(l, s)| l * (1.0 - s)).collect()
    }

    /// Worst-case row sum of the state-transition matrix over all inputs.
    /// Below 1 makes the update a contraction in the max-norm.
    pub fn contraction_factor(&self) -> f64 {
        self.min_leak()
            .iter()
            .zip(&self.coupling)
            .map(|(lmin, row)| {
                let off: f64 = row.iter().map(|c| c.abs()).sum();
                1.0 - lmin + off
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Validated surrogate, ready to simulate.
#[derive(Debug, Clone)]
pub struct Surrogate {
    params: SurrogateParams,
    coupling: DMatrix<f64>,
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream key for one (seed, condition, sensor) noise sequence.
fn noise_key(seed: u64, cond: &InputCondition, sensor: usize) -> u64 {
    let mut h = mix64(seed);
    for part in [cond.profile as u64, cond.payload as u64, cond.mass_g.to_bits(), sensor as u64] {
        h = mix64(h ^ part);
    }
    h
}

impl Surrogate {
    pub fn new(params: SurrogateParams) -> Result<Self> {
        if let Some(p) = params.problems().into_iter().next() {
            let (field, reason) = p.split_once(": ").unwrap_or(("surrogate", p.as_str()));
            return Err(Error::param(field, reason));
        }
        let rho = params.contraction_factor();
        if rho >= 1.0 {
            return Err(Error::Unstable(format!(
                "worst-case row sum {rho:.6} >= 1; raise leak or reduce coupling"
            )));
        }
        let n = params.n_nodes;
        let coupling = DMatrix::from_fn(n, n, |i, j| params.coupling[i][j]);
        Ok(Self { params, coupling })
    }

    pub fn params(&self) -> &SurrogateParams {
        &self.params
    }

    pub fn n_nodes(&self) -> usize {
        self.params.n_nodes
    }

    /// Copy with a different noise seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut s = self.clone();
        s.params.seed = seed;
        s
    }

    fn effective_gain(&self, payload: f64) -> Vec<f64> {
        let p = &self.params;
        let t = (payload / p.damping_sat).tanh();
        p.input_gain.iter().zip(&p.payload_damping).map(|(g, d)| g * (1.0 - d * t)).collect()
    }

    fn payload_drive(&self, payload: f64) -> Vec<f64> {
        let p = &self.params;
        let load = (payload / p.payload_sat).tanh();
        let contact = (payload / p.contact_sat).tanh();
        p.payload_gain.iter().zip(&p.contact_gain).map(|(a, b)| a * load + b * contact).collect()
    }

    fn stiffen(&self, u: f64) -> f64 {
        let p = &self.params;
        let r = (u.abs() / p.stiffening_knee).powf(p.stiffening_exponent);
        r / (1.0 + r)
    }

    /// Noise-free node trajectory, `n_samples x n_nodes`, row k = x[k].
    pub fn states(&self, s_in: &[f64], payload: f64, x0: Option<&[f64]>) -> DMatrix<f64> {
        let p = &self.params;
        let n = p.n_nodes;
        let gain = self.effective_gain(payload);
        let drive = self.payload_drive(payload);
        let mut x: Vec<f64> = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
        let mut next = vec![0.0; n];
        let mut out = DMatrix::zeros(s_in.len(), n);
        for (k, &u) in s_in.iter().enumerate() {
            for m in 0..n {
                out[(k, m)] = x[m];
            }
            let h = self.stiffen(u);
            for m in 0..n {
                let lam = p.leak[m] * (1.0 - p.stiffening[m] * h);
                let mut cx = 0.0;
                for j in 0..n {
                    cx += self.coupling[(m, j)] * x[j];
                }
                next[m] = (1.0 - lam) * x[m] + cx + p.leak[m] * (gain[m] * u + drive[m]);
            }
            std::mem::swap(&mut x, &mut next);
        }
        out
    }

    /// Full run: sensors with noise keyed by (seed, condition, sensor, sample).
    pub fn simulate(
        &self,
        s_in: &[f64],
        payload: f64,
        grid: &TimeGrid,
        condition: InputCondition,
    ) -> Result<PressureStateSeries> {
        if s_in.len() != grid.n_samples {
            return Err(Error::LengthMismatch {
                what: "s_in".into(),
                expected: grid.n_samples,
                got: s_in.len(),
            });
        }
        if !(payload.is_finite() && payload >= 0.0) {
            return Err(Error::param("payload", "must be finite and >= 0"));
        }
        let p = &self.params;
        let x = self.states(s_in, payload, None);
        let theta: Vec<f64> = x
            .row_iter()
            .map(|r| r.iter().zip(&p.angle_weights).map(|(a, b)| a * b).sum::<f64>() + p.angle_payload_slope * payload)
            .collect();
        let mut sensors = x;
        if p.noise_std > 0.0 {
            for m in 0..p.n_nodes {
                let mut rng = ChaCha8Rng::seed_from_u64(noise_key(p.seed, &condition, m));
                for k in 0..grid.n_samples {
                    let z: f64 = rng.sample(StandardNormal);
                    sensors[(k, m)] += p.noise_std * z;
                }
            }
        }
        PressureStateSeries::new(*grid, s_in.to_vec(), sensors, theta, condition)
    }

    /// Upper bound on `max |x|` for inputs bounded by `u_abs_max`.
    pub fn state_bound(&self, u_abs_max: f64, payload: f64, x0_abs_max: f64) -> f64 {
        let p = &self.params;
        let gain = self.effective_gain(payload);
        let drive = self.payload_drive(payload);
        let forcing = (0..p.n_nodes)
            .map(|m| p.leak[m] * (gain[m].abs() * u_abs_max + drive[m].abs()))
            .fold(0.0, f64::max);
        x0_abs_max.max(forcing / (1.0 - p.contraction_factor()))
    }

    /// Drives two random initial states with the same input (noise off) and
    /// checks that they agree within `tol` over every sample after `washout`.
    pub fn echo_check(&self, s_in: &[f64], payload: f64, grid: &TimeGrid, washout: Window) -> bool {
        self.echo_check_with(s_in, payload, grid, washout, 10.0, 1e-6)
    }

    pub fn echo_check_with(
        &self,
        s_in: &[f64],
        payload: f64,
        grid: &TimeGrid,
        washout: Window,
        init_scale: f64,
        tol: f64,
    ) -> bool {
        let n = self.params.n_nodes;
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(self.params.seed ^ 0xEC40));
        let mut draw = || -> Vec<f64> { (0..n).map(|_| rng.random_range(-init_scale..=init_scale)).collect() };
        let (xa, xb) = (draw(), draw());
        let a = self.states(s_in, payload, Some(&xa));
        let b = self.states(s_in, payload, Some(&xb));
        let start = grid.samples_in(washout.end - grid.t0).min(s_in.len());
        (start..s_in.len()).all(|k| (0..n).all(|m| (a[(k, m)] - b[(k, m)]).abs() < tol))
    }
}
