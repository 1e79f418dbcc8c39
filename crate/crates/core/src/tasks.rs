//! Target signals and decision rules for the perception tasks.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{PressureStateSeries, Window};
use crate::readout::{predict, Normalizer, ReadoutWeights, SensorMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    BendingAngle,
    PayloadDetect,
    PayloadMass,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::BendingAngle, TaskKind::PayloadDetect, TaskKind::PayloadMass];

    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::BendingAngle => "bending-angle",
            TaskKind::PayloadDetect => "payload-detect",
            TaskKind::PayloadMass => "payload-mass",
        }
    }

    /// Angle errors are relative to the angle's swing; mass and detection
    /// targets are constant over a run, so they use the magnitude instead.
    pub fn default_normalizer(&self) -> Normalizer {
        match self {
            TaskKind::BendingAngle => Normalizer::Range,
            TaskKind::PayloadDetect | TaskKind::PayloadMass => Normalizer::MaxAbs,
        }
    }

    /// Target trace of `series` over `rows`.
    pub fn target(&self, series: &PressureStateSeries, rows: Range<usize>) -> Vec<f64> {
        match self {
            TaskKind::BendingAngle => series.theta[rows].to_vec(),
            TaskKind::PayloadDetect => vec![detection_label(series.condition.mass_g); rows.len()],
            TaskKind::PayloadMass => vec![series.condition.mass_g; rows.len()],
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bending" | "bending-angle" | "angle" => Ok(TaskKind::BendingAngle),
            "detect" | "detection" | "payload-detect" => Ok(TaskKind::PayloadDetect),
            "mass" | "payload-mass" => Ok(TaskKind::PayloadMass),
            other => Err(Error::param("task", format!("unknown task `{other}`"))),
        }
    }
}

/// Ground-truth angle over `window`.
pub fn bending_target(series: &PressureStateSeries, window: Window) -> Result<Vec<f64>> {
    let r = series.grid.index_range(window)?;
    Ok(series.theta[r].to_vec())
}

/// +1 without payload, -1 with one.
pub fn detection_label(mass_g: f64) -> f64 {
    if mass_g > 0.0 { -1.0 } else { 1.0 }
}

/// `d_absent` seconds of +1 followed by `d_present` seconds of -1.
pub fn detection_target(d_absent: f64, d_present: f64, sample_rate: f64) -> Result<Vec<f64>> {
    for (name, d) in [("d_absent", d_absent), ("d_present", d_present)] {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::param(name, "both detection segments must be > 0 s"));
        }
    }
    let n = |d: f64| (d * sample_rate + 1e-9).floor() as usize;
    let mut out = vec![1.0; n(d_absent)];
    out.extend(std::iter::repeat_n(-1.0, n(d_present)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detection {
    Absent,
    Present,
}

impl Detection {
    /// Sign rule on a mean readout; an exact zero counts as present.
    pub fn from_mean(mean: f64) -> Self {
        if mean > 0.0 { Detection::Absent } else { Detection::Present }
    }

    pub fn is_present(&self) -> bool {
        *self == Detection::Present
    }
}

fn column_mean(m: &DMatrix<f64>, col: usize) -> f64 {
    let c = m.column(col);
    c.iter().sum::<f64>() / c.len() as f64
}

/// Applies the sign rule to the window mean of task column `col`.
pub fn detect_payload(
    weights: &ReadoutWeights,
    series: &PressureStateSeries,
    window: Window,
    mask: &SensorMask,
    col: usize,
) -> Result<Detection> {
    let y = predict(weights, series, window, mask)?;
    if y.nrows() == 0 {
        return Err(Error::Empty("detection window".into()));
    }
    Ok(Detection::from_mean(column_mean(&y, col)))
}

/// Concatenated constant segments, one per mass.
pub fn mass_step_target(masses: &[f64], per_segment: f64, sample_rate: f64) -> Result<Vec<f64>> {
    if masses.is_empty() {
        return Err(Error::Empty("mass list".into()));
    }
    if !(per_segment.is_finite() && per_segment > 0.0) {
        return Err(Error::param("per_segment", "must be > 0 s"));
    }
    let n = (per_segment * sample_rate + 1e-9).floor() as usize;
    Ok(masses.iter().flat_map(|&m| std::iter::repeat_n(m, n)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MassEstimator {
    #[default]
    Mean,
    Median,
}

/// Point estimate of the payload from the predicted mass trace.
pub fn estimate_mass(
    weights: &ReadoutWeights,
    series: &PressureStateSeries,
    window: Window,
    mask: &SensorMask,
    col: usize,
    estimator: MassEstimator,
) -> Result<f64> {
    let y = predict(weights, series, window, mask)?;
    if y.nrows() == 0 {
        return Err(Error::Empty("estimation window".into()));
    }
    Ok(match estimator {
        MassEstimator::Mean => column_mean(&y, col),
        MassEstimator::Median => {
            let mut v: Vec<f64> = y.column(col).iter().copied().collect();
            v.sort_by(f64::total_cmp);
            let n = v.len();
            if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
        }
    })
}

/// Column-stacks equal-length targets into a multi-task matrix.
pub fn stack_tasks(targets: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let first = targets.first().ok_or_else(|| Error::Empty("target list".into()))?;
    let n = first.len();
    if let Some(t) = targets.iter().find(|t| t.len() != n) {
        return Err(Error::LengthMismatch { what: "stacked targets".into(), expected: n, got: t.len() });
    }
    Ok(DMatrix::from_fn(n, targets.len(), |r, c| targets[c][r]))
}

/// Row offsets (relative to the training window start) of `k` segments of
/// `seg` samples laid out along a window of `window_len` samples.
///
/// Segments follow each other back to back while they fit, so two 12.5 s
/// segments fill a 25 s window as consecutive halves. When they do not fit
/// they are staggered evenly, overlapping in time, so every condition still
/// contributes `seg` samples and the set of segments covers the window.
pub fn segment_layout(k: usize, seg: usize, window_len: usize) -> Vec<Range<usize>> {
    let seg = seg.min(window_len);
    let step = if k <= 1 { 0 } else { seg.min((window_len - seg) / (k - 1)) };
    (0..k).map(|q| q * step..q * step + seg).collect()
}
