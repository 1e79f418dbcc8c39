//! Shared domain types: the sampling clock, windows, input conditions and
//! the recorded (or simulated) pressure-state series.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when converting seconds to sample indices, so that e.g.
/// `0.7 s * 40 Hz` lands on sample 28 and not 27.
const INDEX_EPS: f64 = 1e-9;

pub const DEFAULT_SAMPLE_RATE: f64 = 40.0;
pub const DEFAULT_DURATION_S: f64 = 100.0;

/// Uniform sampling clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    /// Samples per second.
    pub sample_rate: f64,
    pub n_samples: usize,
    /// Time of sample 0, seconds.
    pub t0: f64,
}

impl TimeGrid {
    pub fn new(sample_rate: f64, n_samples: usize, t0: f64) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::param("sample_rate", "must be finite and > 0"));
        }
        if n_samples == 0 {
            return Err(Error::param("n_samples", "must be > 0"));
        }
        if !t0.is_finite() {
            return Err(Error::param("t0", "must be finite"));
        }
        Ok(Self { sample_rate, n_samples, t0 })
    }

    /// Grid covering `duration` seconds from t = 0.
    pub fn with_duration(sample_rate: f64, duration: f64) -> Result<Self> {
        let n = (duration * sample_rate + INDEX_EPS).floor();
        if !(n >= 1.0) {
            return Err(Error::param("duration", "must cover at least one sample"));
        }
        Self::new(sample_rate, n as usize, 0.0)
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 / self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.n_samples as f64 / self.sample_rate
    }

    pub fn end(&self) -> f64 {
        self.t0 + self.duration()
    }

    /// Number of samples in `seconds`, floored.
    pub fn samples_in(&self, seconds: f64) -> usize {
        (seconds * self.sample_rate + INDEX_EPS).floor().max(0.0) as usize
    }

    /// Sample index range selected by a half-open window.
    pub fn index_range(&self, w: Window) -> Result<std::ops::Range<usize>> {
        let tol = INDEX_EPS / self.sample_rate;
        if !(w.start <= w.end) || w.start < self.t0 - tol || w.end > self.end() + tol {
            return Err(Error::WindowOutOfRange {
                start: w.start,
                end: w.end,
                t0: self.t0,
                t_end: self.end(),
            });
        }
        let start = self.samples_in(w.start - self.t0);
        let count = self.samples_in(w.end - w.start);
        let end = (start + count).min(self.n_samples);
        Ok(start..end)
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { sample_rate: DEFAULT_SAMPLE_RATE, n_samples: 4000, t0: 0.0 }
    }
}

/// Half-open time interval `[start, end)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub const fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub const WASHOUT: Window = Window::new(0.0, 50.0);
    pub const TRAIN: Window = Window::new(50.0, 75.0);
    pub const TEST: Window = Window::new(75.0, 100.0);

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Window) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// One experiment run: pressure profile `P(profile)` with payload `M(payload)`.
///
/// Both indices are 1-based. `mass_g` carries the payload in grams so
/// grids with non-default payload sets stay self-describing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputCondition {
    pub profile: usize,
    pub payload: usize,
    pub mass_g: f64,
}

impl InputCondition {
    pub fn new(profile: usize, payload: usize, mass_g: f64) -> Self {
        Self { profile, payload, mass_g }
    }

    /// Sort/lookup key.
    pub fn key(&self) -> (usize, usize) {
        (self.profile, self.payload)
    }
}

impl fmt::Display for InputCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}M{}", self.profile, self.payload)
    }
}

/// Ordered payload masses in grams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PayloadSet {
    masses: Vec<f64>,
}

impl PayloadSet {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::param("payloads", "must not be empty"));
        }
        if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::param("payloads", "masses must be finite and >= 0"));
        }
        if masses.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("payloads", "masses must be strictly increasing"));
        }
        Ok(Self { masses })
    }

    /// {0, 100, 140, 160, 200, 240, 300} g.
    pub fn standard() -> Self {
        Self { masses: vec![0.0, 100.0, 140.0, 160.0, 200.0, 240.0, 300.0] }
    }

    /// {0, 100, 200, 300, 400} g, the 35-cell multi-task grid.
    pub fn multitask() -> Self {
        Self { masses: vec![0.0, 100.0, 200.0, 300.0, 400.0] }
    }

    /// {0, 100, ..., 600} g.
    pub fn extended() -> Self {
        Self { masses: (0..=6).map(|k| 100.0 * k as f64).collect() }
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Mass of `M(j)`, 1-based.
    pub fn mass(&self, j: usize) -> Option<f64> {
        j.checked_sub(1).and_then(|i| self.masses.get(i)).copied()
    }

    /// 1-based index of an exact mass.
    pub fn index_of(&self, mass: f64) -> Option<usize> {
        self.masses.iter().position(|m| *m == mass).map(|i| i + 1)
    }
}

impl TryFrom<Vec<f64>> for PayloadSet {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PayloadSet> for Vec<f64> {
    fn from(p: PayloadSet) -> Self {
        p.masses
    }
}

/// Profile-outer, payload-inner enumeration of all conditions.
pub fn condition_grid(profiles: usize, payloads: &PayloadSet) -> Vec<InputCondition> {
    let mut out = Vec::with_capacity(profiles * payloads.len());
    for i in 1..=profiles {
        for (j, &m) in payloads.masses().iter().enumerate() {
            out.push(InputCondition::new(i, j + 1, m));
        }
    }
    out
}

/// Sensor readings, actuation trace and ground-truth angle of one run.
///
/// `sensors` is stored sample-major (`n_samples x n_sensors`) so that a
/// window slice is directly a block of design-matrix rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureStateSeries {
    pub grid: TimeGrid,
    pub s_in: Vec<f64>,
    pub sensors: DMatrix<f64>,
    pub theta: Vec<f64>,
    pub condition: InputCondition,
}

impl PressureStateSeries {
    pub fn new(
        grid: TimeGrid,
        s_in: Vec<f64>,
        sensors: DMatrix<f64>,
        theta: Vec<f64>,
        condition: InputCondition,
    ) -> Result<Self> {
        let n = grid.n_samples;
        for (what, got) in [("s_in", s_in.len()), ("sensors", sensors.nrows()), ("theta", theta.len())] {
            if got != n {
                return Err(Error::LengthMismatch { what: what.into(), expected: n, got });
            }
        }
        Ok(Self { grid, s_in, sensors, theta, condition })
    }

    pub fn n_samples(&self) -> usize {
        self.grid.n_samples
    }

    pub fn n_sensors(&self) -> usize {
        self.sensors.ncols()
    }

    /// Column `k` (0-based) of the sensor matrix.
    pub fn sensor(&self, k: usize) -> Vec<f64> {
        self.sensors.column(k).iter().copied().collect()
    }

    /// Sub-series with t in `[w.start, w.end)`. May be empty.
    pub fn slice(&self, w: Window) -> Result<Self> {
        let r = self.grid.index_range(w)?;
        Ok(self.slice_rows(r))
    }

    pub(crate) fn slice_rows(&self, r: std::ops::Range<usize>) -> Self {
        let grid = TimeGrid {
            sample_rate: self.grid.sample_rate,
            n_samples: r.len(),
            t0: self.grid.time(r.start),
        };
        Self {
            grid,
            s_in: self.s_in[r.clone()].to_vec(),
            sensors: self.sensors.rows(r.start, r.len()).into_owned(),
            theta: self.theta[r].to_vec(),
            condition: self.condition,
        }
    }
}
