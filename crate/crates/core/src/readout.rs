//! Linear readout: design-matrix assembly, pseudoinverse / ridge training,
//! prediction and error scores.

use std::fmt;
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{InputCondition, PressureStateSeries, Window};

/// Singular values below `RCOND * σ_max` are treated as zero.
pub const RCOND: f64 = 1e-10;

/// Sorted, duplicate-free set of 0-based sensor columns.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct SensorMask(Vec<usize>);

impl SensorMask {
    /// From 0-based indices.
    pub fn new(mut idx: Vec<usize>) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::Empty("sensor mask".into()));
        }
        idx.sort_unstable();
        idx.dedup();
        Ok(Self(idx))
    }

    pub fn all(n: usize) -> Self {
        Self((0..n).collect())
    }

    /// The `k` sensors nearest the tip of an `n`-sensor arm.
    pub fn tip(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::param("sensor mask", format!("cannot take {k} of {n} sensors")));
        }
        Ok(Self((n - k..n).collect()))
    }

    /// Parses 1-based labels such as `"5,6,7"` or `"s5,s6,s7"`.
    pub fn parse(text: &str) -> Result<Self> {
        let idx = text
            .split(',')
            .map(|t| {
                let t = t.trim();
                let t = t.strip_prefix('s').unwrap_or(t);
                t.parse::<usize>()
                    .ok()
                    .filter(|&v| v >= 1)
                    .map(|v| v - 1)
                    .ok_or_else(|| Error::param("sensors", format!("bad sensor label `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(idx)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// 1-based labels, `s1`..`s7`.
    pub fn labels(&self) -> Vec<String> {
        self.0.iter().map(|i| format!("s{}", i + 1)).collect()
    }

    fn check(&self, n_sensors: usize) -> Result<()> {
        match self.0.last() {
            Some(&last) if last >= n_sensors => Err(Error::param(
                "sensor mask",
                format!("sensor s{} not present in a {n_sensors}-sensor series", last + 1),
            )),
            _ => Ok(()),
        }
    }
}

impl TryFrom<Vec<usize>> for SensorMask {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SensorMask> for Vec<usize> {
    fn from(m: SensorMask) -> Self {
        m.0
    }
}

impl fmt::Display for SensorMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.labels().join(","))
    }
}

/// Rows of one series contributing to a training assembly.
#[derive(Debug, Clone)]
pub struct TrainingPart<'a> {
    pub series: &'a PressureStateSeries,
    pub rows: Range<usize>,
    /// `rows.len() x n_tasks`
    pub targets: DMatrix<f64>,
}

impl<'a> TrainingPart<'a> {
    pub fn windowed(series: &'a PressureStateSeries, window: Window, targets: DMatrix<f64>) -> Result<Self> {
        let rows = series.grid.index_range(window)?;
        Ok(Self { series, rows, targets })
    }

    /// Single-task part from a target trace.
    pub fn single(series: &'a PressureStateSeries, rows: Range<usize>, target: &[f64]) -> Self {
        Self { series, rows, targets: DMatrix::from_column_slice(target.len(), 1, target) }
    }
}

/// Stacked `[1 | S]` design matrix and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingAssembly {
    pub design: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub conditions: Vec<InputCondition>,
    pub mask: SensorMask,
}

/// Builds `[1 | S_mask]` over all parts in the given order.
pub fn assemble(parts: &[TrainingPart<'_>], mask: &SensorMask) -> Result<TrainingAssembly> {
    let first = parts.first().ok_or_else(|| Error::Empty("training condition list".into()))?;
    let n_sensors = first.series.n_sensors();
    let n_tasks = first.targets.ncols();
    mask.check(n_sensors)?;
    let mut total = 0;
    for p in parts {
        if p.series.n_sensors() != n_sensors {
            return Err(Error::LengthMismatch {
                what: format!("sensor count of {}", p.series.condition),
                expected: n_sensors,
                got: p.series.n_sensors(),
            });
        }
        if p.rows.end > p.series.n_samples() || p.rows.start > p.rows.end {
            return Err(Error::param("rows", format!("{:?} outside {}", p.rows, p.series.condition)));
        }
        if p.targets.nrows() != p.rows.len() {
            return Err(Error::LengthMismatch {
                what: format!("targets of {}", p.series.condition),
                expected: p.rows.len(),
                got: p.targets.nrows(),
            });
        }
        if p.targets.ncols() != n_tasks {
            return Err(Error::LengthMismatch {
                what: "task count".into(),
                expected: n_tasks,
                got: p.targets.ncols(),
            });
        }
        total += p.rows.len();
    }
    let width = 1 + mask.len();
    let mut design = DMatrix::zeros(total, width);
    let mut targets = DMatrix::zeros(total, n_tasks);
    let mut r = 0;
    for p in parts {
        for (local, k) in p.rows.clone().enumerate() {
            design[(r, 0)] = 1.0;
            for (c, &s) in mask.indices().iter().enumerate() {
                design[(r, c + 1)] = p.series.sensors[(k, s)];
            }
            for t in 0..n_tasks {
                targets[(r, t)] = p.targets[(local, t)];
            }
            r += 1;
        }
    }
    Ok(TrainingAssembly {
        design,
        targets,
        conditions: parts.iter().map(|p| p.series.condition).collect(),
        mask: mask.clone(),
    })
}

/// Bias plus per-sensor weights, one column per task.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutWeights {
    /// `(1 + n_masked) x n_tasks`; row 0 is the bias.
    pub weights: DMatrix<f64>,
    pub mask: SensorMask,
}

impl ReadoutWeights {
    pub fn n_tasks(&self) -> usize {
        self.weights.ncols()
    }

    /// `[w_0, w_1, ...]` of task `t`.
    pub fn column(&self, t: usize) -> Vec<f64> {
        self.weights.column(t).iter().copied().collect()
    }

    /// Percentage of `Σ|w_i|` held by each sensor of task `t`, bias excluded.
    pub fn weight_shares(&self, t: usize) -> Vec<f64> {
        let abs: Vec<f64> = self.weights.column(t).iter().skip(1).map(|w| w.abs()).collect();
        let total: f64 = abs.iter().sum();
        if total == 0.0 {
            return vec![0.0; abs.len()];
        }
        abs.iter().map(|w| 100.0 * w / total).collect()
    }
}

/// Minimum-norm least squares (`ridge == 0`) or ridge regression, solved
/// through one SVD of the design matrix. Each target column is reduced with
/// an identical loop so multi-task and per-task training agree bit for bit.
pub fn train(assembly: &TrainingAssembly, ridge: f64) -> Result<ReadoutWeights> {
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::param("ridge", "must be finite and >= 0"));
    }
    let d = &assembly.design;
    if d.nrows() == 0 {
        return Err(Error::Empty("training assembly".into()));
    }
    let (p, n_tasks) = (d.ncols(), assembly.targets.ncols());
    let mut w = DMatrix::zeros(p, n_tasks);
    if d.iter().all(|&v| v == 0.0) {
        return Ok(ReadoutWeights { weights: w, mask: assembly.mask.clone() });
    }
    let svd = d.clone().svd(true, true);
    let (u, vt) = match (&svd.u, &svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => unreachable!("SVD requested with both factors"),
    };
    let sigma = &svd.singular_values;
    let smax = sigma.iter().copied().fold(0.0, f64::max);
    let cutoff = RCOND * smax;
    let gains: Vec<f64> = sigma
        .iter()
        .map(|&s| {
            if ridge > 0.0 {
                s / (s * s + ridge)
            } else if s > cutoff {
                1.0 / s
            } else {
                0.0
            }
        })
        .collect();
    let rank = sigma.len();
    let rows = d.nrows();
    for t in 0..n_tasks {
        let y = assembly.targets.column(t);
        for i in 0..rank {
            if gains[i] == 0.0 {
                continue;
            }
            let mut z = 0.0;
            for r in 0..rows {
                z += u[(r, i)] * y[r];
            }
            z *= gains[i];
            for c in 0..p {
                w[(c, t)] += vt[(i, c)] * z;
            }
        }
    }
    Ok(ReadoutWeights { weights: w, mask: assembly.mask.clone() })
}

/// `y = w_0 + Σ w_i s_i` over the rows in `window`; one column per task.
pub fn predict(
    weights: &ReadoutWeights,
    series: &PressureStateSeries,
    window: Window,
    mask: &SensorMask,
) -> Result<DMatrix<f64>> {
    let rows = series.grid.index_range(window)?;
    predict_rows(weights, series, rows, mask)
}

pub fn predict_rows(
    weights: &ReadoutWeights,
    series: &PressureStateSeries,
    rows: Range<usize>,
    mask: &SensorMask,
) -> Result<DMatrix<f64>> {
    if *mask != weights.mask {
        return Err(Error::MaskMismatch {
            trained: weights.mask.indices().iter().map(|i| i + 1).collect(),
            given: mask.indices().iter().map(|i| i + 1).collect(),
        });
    }
    mask.check(series.n_sensors())?;
    let w = &weights.weights;
    let mut out = DMatrix::zeros(rows.len(), w.ncols());
    for (r, k) in rows.enumerate() {
        for t in 0..w.ncols() {
            let mut y = w[(0, t)];
            for (c, &s) in mask.indices().iter().enumerate() {
                y += w[(c + 1, t)] * series.sensors[(k, s)];
            }
            out[(r, t)] = y;
        }
    }
    Ok(out)
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch { what: "rmse inputs".into(), expected: truth.len(), got: pred.len() });
    }
    if truth.is_empty() {
        return Err(Error::Empty("rmse inputs".into()));
    }
    let sq: f64 = pred.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sq / truth.len() as f64).sqrt())
}

/// Scale used to turn an RMSE into a percentage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalizer {
    /// max(truth) - min(truth)
    Range,
    /// max |truth|
    MaxAbs,
}

impl Normalizer {
    pub fn scale(&self, truth: &[f64]) -> Result<f64> {
        let s = match self {
            Normalizer::Range => {
                let (lo, hi) = truth.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                hi - lo
            }
            Normalizer::MaxAbs => truth.iter().fold(0.0f64, |a, v| a.max(v.abs())),
        };
        if s > 0.0 {
            Ok(s)
        } else {
            Err(Error::DegenerateNormalizer(match self {
                Normalizer::Range => "range",
                Normalizer::MaxAbs => "magnitude",
            }))
        }
    }
}

/// `100 * rmse / scale(truth)`.
pub fn percent_error(pred: &[f64], truth: &[f64], norm: Normalizer) -> Result<f64> {
    let e = rmse(pred, truth)?;
    Ok(100.0 * e / norm.scale(truth)?)
}

/// Arithmetic mean of per-condition errors.
pub fn averaged_error(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::Empty("error list".into()));
    }
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

/// Pearson correlation matrix. Traces with zero variance correlate 0 with
/// everything else (diagonal stays 1).
pub fn correlation_matrix(traces: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = traces.len();
    if n == 0 {
        return Err(Error::Empty("trace list".into()));
    }
    let len = traces[0].len();
    if len < 2 {
        return Err(Error::param("traces", "need at least 2 samples"));
    }
    if let Some(t) = traces.iter().find(|t| t.len() != len) {
        return Err(Error::LengthMismatch { what: "correlation traces".into(), expected: len, got: t.len() });
    }
    let centered: Vec<Vec<f64>> = traces
        .iter()
        .map(|t| {
            let mean = t.iter().sum::<f64>() / len as f64;
            t.iter().map(|v| v - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centered.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    for (i, s) in norms.iter().enumerate() {
        if *s == 0.0 {
            log::warn!("trace {i} has zero variance; its correlations are set to 0");
        }
    }
    let mut out = DMatrix::identity(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let r = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            out[(i, j)] = r;
            out[(j, i)] = r;
        }
    }
    Ok(out)
}

/// Mean |r| over the strict upper triangle.
pub fn mean_abs_offdiag(c: &DMatrix<f64>) -> f64 {
    let n = c.nrows();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            sum += c[(i, j)].abs();
            count += 1;
        }
    }
    if count == 0 { 0.0 } else { sum / count as f64 }
}
