//! Ramp-cycle actuation profiles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Triangular ramp cycle: rise from `u_min` at `r_up`, fall back at `r_down`,
/// repeated `n_cycles` times, then hold at `u_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampProfile {
    /// psi
    pub u_min: f64,
    /// psi
    pub u_max: f64,
    /// psi/s
    #[serde(default = "default_rate")]
    pub r_up: f64,
    /// psi/s
    #[serde(default = "default_rate")]
    pub r_down: f64,
    #[serde(default = "default_cycles")]
    pub n_cycles: u32,
}

fn default_rate() -> f64 {
    5.0
}

fn default_cycles() -> u32 {
    8
}

/// Pressure swing of the default family, psi. One cycle lasts 12.5 s at
/// 5 psi/s so eight cycles span the whole 100 s run.
pub const DEFAULT_SWING: f64 = 31.25;
/// Offset between consecutive default profiles, psi.
pub const DEFAULT_STEP: f64 = 5.0;

impl RampProfile {
    pub fn new(u_min: f64, u_max: f64, r_up: f64, r_down: f64, n_cycles: u32) -> Result<Self> {
        let p = Self { u_min, u_max, r_up, r_down, n_cycles };
        let errs = p.problems();
        match errs.into_iter().next() {
            None => Ok(p),
            Some((field, reason)) => Err(Error::param(field, reason)),
        }
    }

    /// Every invariant violation as `(field, reason)`.
    pub fn problems(&self) -> Vec<(&'static str, &'static str)> {
        let mut out = Vec::new();
        if !(self.u_min.is_finite() && self.u_min >= 0.0) {
            out.push(("u_min", "must be finite and >= 0"));
        }
        if !(self.u_max.is_finite() && self.u_max > self.u_min) {
            out.push(("u_max", "must be finite and > u_min"));
        }
        if !(self.r_up.is_finite() && self.r_up > 0.0) {
            out.push(("r_up", "must be finite and > 0"));
        }
        if !(self.r_down.is_finite() && self.r_down > 0.0) {
            out.push(("r_down", "must be finite and > 0"));
        }
        out
    }

    /// Default `P(i)`, 1-based.
    pub fn standard(i: usize) -> Self {
        let u_min = DEFAULT_STEP * (i as f64 - 1.0);
        Self { u_min, u_max: u_min + DEFAULT_SWING, r_up: 5.0, r_down: 5.0, n_cycles: 8 }
    }

    pub fn swing(&self) -> f64 {
        self.u_max - self.u_min
    }

    /// Time to climb from `u_min` to `u_max`.
    pub fn peak_time(&self) -> f64 {
        self.swing() / self.r_up
    }

    /// Rise plus fall duration.
    pub fn cycle_period(&self) -> f64 {
        self.swing() / self.r_up + self.swing() / self.r_down
    }

    /// Commanded pressure at `t` seconds after the run starts.
    pub fn value_at(&self, t: f64) -> f64 {
        let period = self.cycle_period();
        if t < 0.0 || t >= self.n_cycles as f64 * period {
            return self.u_min;
        }
        let tm = t % period;
        let tp = self.peak_time();
        let u = if tm < tp {
            self.u_min + self.r_up * tm
        } else {
            self.u_max - self.r_down * (tm - tp)
        };
        u.clamp(self.u_min, self.u_max)
    }

    /// Trace sampled on `grid`, time measured from the first sample.
    pub fn generate(&self, grid: &TimeGrid) -> Vec<f64> {
        (0..grid.n_samples).map(|k| self.value_at(k as f64 / grid.sample_rate)).collect()
    }
}

/// Seven default profiles `P(1)..P(7)`.
pub fn standard_family() -> Vec<RampProfile> {
    (1..=7).map(RampProfile::standard).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(du: f64, up: f64, down: f64) -> RampProfile {
        RampProfile::new(2.0, 2.0 + du, up, down, 8).unwrap()
    }

    #[test]
    fn peak_and_period() {
        assert_eq!(p(10.0, 5.0, 5.0).peak_time(), 2.0);
        assert_eq!(p(7.5, 5.0, 5.0).peak_time(), 1.5);
        assert_eq!(p(10.0, 5.0, 5.0).cycle_period(), 4.0);
        assert_eq!(p(10.0, 10.0, 5.0).cycle_period(), 3.0);
        assert_eq!(p(12.5, 5.0, 5.0).cycle_period(), 5.0);
    }

    #[test]
    fn degenerate_specs_rejected() {
        assert!(RampProfile::new(3.0, 3.0, 5.0, 5.0, 8).is_err());
        assert!(RampProfile::new(0.0, 3.0, 0.0, 5.0, 8).is_err());
        assert!(RampProfile::new(-1.0, 3.0, 5.0, 5.0, 8).is_err());
        assert_eq!(RampProfile { u_min: 5.0, u_max: 1.0, r_up: 0.0, r_down: -1.0, n_cycles: 1 }.problems().len(), 3);
    }

    #[test]
    fn boundary_values() {
        let s = p(10.0, 5.0, 5.0);
        assert_eq!(s.value_at(0.0), 2.0);
        assert_eq!(s.value_at(1.0), 7.0);
        // falling branch at exactly T_peak
        assert_eq!(s.value_at(2.0), 12.0);
        assert_eq!(s.value_at(3.0), 7.0);
        assert_eq!(s.value_at(4.0), 2.0);
        assert_eq!(s.value_at(40.0), 2.0);
    }

    #[test]
    fn cycled_sample_count() {
        let s = p(10.0, 5.0, 5.0);
        let g = TimeGrid::new(40.0, 4000, 0.0).unwrap();
        let u = s.generate(&g);
        let in_cycle = (0..g.n_samples).filter(|&k| (k as f64 / 40.0) < 32.0).count();
        assert_eq!(in_cycle, 1280);
        assert!(u[1280..].iter().all(|&v| v == 2.0));
    }

    #[test]
    fn standard_family_spans_run() {
        let fam = standard_family();
        assert_eq!(fam.len(), 7);
        for (i, s) in fam.iter().enumerate() {
            assert_eq!(s.cycle_period(), 12.5);
            assert_eq!(s.u_min, 5.0 * i as f64);
        }
    }
}
