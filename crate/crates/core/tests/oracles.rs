mod common;

use armrc::grid::{InputCondition, PressureStateSeries, TimeGrid};
use armrc::profile::RampProfile;
use armrc::readout::{assemble, correlation_matrix, train, SensorMask, TrainingPart};
use armrc::surrogate::{Surrogate, SurrogateParams};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn carrier(s: DMatrix<f64>) -> PressureStateSeries {
    let n = s.nrows();
    let grid = TimeGrid::new(40.0, n, 0.0).unwrap();
    PressureStateSeries::new(grid, vec![0.0; n], s, vec![0.0; n], InputCondition::new(1, 1, 0.0)).unwrap()
}

/// (XᵀX + λI)⁻¹ Xᵀy through the Jacobi eigenbasis of the Gram matrix.
fn ridge_oracle(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Vec<f64> {
    let p = x[0].len();
    let gram: Vec<Vec<f64>> =
        (0..p).map(|i| (0..p).map(|j| x.iter().map(|r| r[i] * r[j]).sum()).collect()).collect();
    let xty: Vec<f64> = (0..p).map(|i| x.iter().zip(y).map(|(r, v)| r[i] * v).sum()).collect();
    let (vals, vecs) = common::jacobi_eigen(&gram);
    let mut w = vec![0.0; p];
    for k in 0..p {
        let proj: f64 = (0..p).map(|i| vecs[i][k] * xty[i]).sum::<f64>() / (vals[k] + lambda);
        for i in 0..p {
            w[i] += vecs[i][k] * proj;
        }
    }
    w
}

fn random_problem(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, Vec<f64>) {
    let rows = rng.random_range(15..=80);
    let k = rng.random_range(1..=7);
    let s = DMatrix::from_fn(rows, k, |_, _| rng.random_range(-4.0..4.0));
    let y = (0..rows).map(|_| rng.random_range(-2.0..2.0)).collect();
    (s, y)
}

#[test]
fn ridge_matches_regularized_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for lambda in [1e-3, 0.1, 10.0] {
        for _ in 0..10 {
            let (s, y) = random_problem(&mut rng);
            let n = s.nrows();
            let k = s.ncols();
            let src = carrier(s);
            let a = assemble(&[TrainingPart::single(&src, 0..n, &y)], &SensorMask::all(k)).unwrap();
            let w = train(&a, lambda).unwrap().column(0);
            let rows: Vec<Vec<f64>> = a.design.row_iter().map(|r| r.iter().copied().collect()).collect();
            let o = ridge_oracle(&rows, &y, lambda);
            assert!(common::rel_err(&w, &o) < 1e-9, "lambda {lambda}: {w:?} vs {o:?}");
        }
    }
}

#[test]
fn underdetermined_design_gives_min_norm_interpolant() {
    // 4 rows, 1 + 6 columns: exact fit, smallest norm
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let s = DMatrix::from_fn(4, 6, |_, _| rng.random_range(-1.0..1.0));
    let y = vec![0.3, -1.0, 2.0, 0.5];
    let src = carrier(s);
    let a = assemble(&[TrainingPart::single(&src, 0..4, &y)], &SensorMask::all(6)).unwrap();
    let w = train(&a, 0.0).unwrap().column(0);
    let fit = &a.design * DMatrix::from_column_slice(7, 1, &w);
    for (f, t) in fit.iter().zip(&y) {
        assert!((f - t).abs() < 1e-10);
    }
    let rows: Vec<Vec<f64>> = a.design.row_iter().map(|r| r.iter().copied().collect()).collect();
    // Gram eigenvalues of the null space sit at ~eps * λmax, above RCOND²
    let o = common::normal_equations(&rows, &y, 1e-6);
    assert!(common::rel_err(&w, &o) < 1e-8);
}

#[test]
fn correlation_matches_textbook_pearson() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let traces: Vec<Vec<f64>> = (0..5)
        .map(|i| (0..200).map(|k| (k as f64 * 0.05 * (i + 1) as f64).sin() + rng.random_range(-0.3..0.3)).collect())
        .collect();
    let c = correlation_matrix(&traces).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let want = if i == j { 1.0 } else { common::pearson(&traces[i], &traces[j]) };
            assert!((c[(i, j)] - want).abs() < 1e-12);
        }
    }
}

/// Triangle wave written as distance from the nearest peak.
fn ramp_oracle(p: &RampProfile, t: f64) -> f64 {
    let du = p.u_max - p.u_min;
    let (tp, td) = (du / p.r_up, du / p.r_down);
    let period = tp + td;
    if t >= period * p.n_cycles as f64 || t < 0.0 {
        return p.u_min;
    }
    let phase = t - (t / period).floor() * period;
    if phase < tp { p.u_min + p.r_up * phase } else { p.u_max - p.r_down * (phase - tp) }
}

#[test]
fn ramp_matches_piecewise_oracle() {
    let g = TimeGrid::new(40.0, 4000, 0.0).unwrap();
    for p in [RampProfile::new(0.0, 31.25, 5.0, 5.0, 8).unwrap(), RampProfile::new(2.0, 12.0, 2.5, 10.0, 3).unwrap()] {
        let u = p.generate(&g);
        for (k, v) in u.iter().enumerate() {
            let want = ramp_oracle(&p, g.time(k));
            assert!((v - want).abs() < 1e-9, "k={k}: {v} vs {want}");
        }
    }
}

/// Direct transcription of the node update with plain arrays.
fn surrogate_oracle(p: &SurrogateParams, u: &[f64], m: f64) -> Vec<Vec<f64>> {
    let n = p.n_nodes;
    let mut x = vec![0.0; n];
    let mut out = Vec::with_capacity(u.len());
    for &uk in u {
        out.push(x.clone());
        let r = (uk.abs() / p.stiffening_knee).powf(p.stiffening_exponent);
        let h = r / (1.0 + r);
        let mut nx = vec![0.0; n];
        for i in 0..n {
            let lam = p.leak[i] * (1.0 - p.stiffening[i] * h);
            let g = p.input_gain[i] * (1.0 - p.payload_damping[i] * (m / p.damping_sat).tanh());
            let d = p.payload_gain[i] * (m / p.payload_sat).tanh() + p.contact_gain[i] * (m / p.contact_sat).tanh();
            let cx: f64 = (0..n).map(|j| p.coupling[i][j] * x[j]).sum();
            nx[i] = (1.0 - lam) * x[i] + cx + p.leak[i] * (g * uk + d);
        }
        x = nx;
    }
    out
}

#[test]
fn surrogate_states_match_transcribed_recurrence() {
    let p = SurrogateParams::default();
    let s = Surrogate::new(p.clone()).unwrap();
    let g = TimeGrid::new(40.0, 4000, 0.0).unwrap();
    for (i, m) in [(1, 0.0), (4, 100.0), (7, 400.0)] {
        let u = RampProfile::standard(i).generate(&g);
        let x = s.states(&u, m, None);
        let o = surrogate_oracle(&p, &u, m);
        for k in (0..4000).step_by(37) {
            for j in 0..7 {
                assert!((x[(k, j)] - o[k][j]).abs() < 1e-9 * (1.0 + o[k][j].abs()));
            }
        }
    }
}

#[test]
fn noise_free_sensors_equal_states_and_theta_is_weighted_sum() {
    let p = SurrogateParams { noise_std: 0.0, ..SurrogateParams::default() };
    let s = Surrogate::new(p.clone()).unwrap();
    let g = TimeGrid::new(40.0, 800, 0.0).unwrap();
    let u = RampProfile::standard(3).generate(&g);
    let run = s.simulate(&u, 200.0, &g, InputCondition::new(3, 4, 200.0)).unwrap();
    let o = surrogate_oracle(&p, &u, 200.0);
    for k in 0..800 {
        let th: f64 = (0..7).map(|j| p.angle_weights[j] * o[k][j]).sum::<f64>() + p.angle_payload_slope * 200.0;
        assert!((run.theta[k] - th).abs() < 1e-9 * (1.0 + th.abs()));
        assert!((run.sensors[(k, 6)] - o[k][6]).abs() < 1e-9 * (1.0 + o[k][6].abs()));
    }
}
