//! Sweep engine: condition subsets, training-sample counts, sensor
//! ablations and the multi-task grid.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{InputCondition, PayloadSet, PressureStateSeries, TimeGrid, Window};
use crate::profile::RampProfile;
use crate::readout::{
    assemble, averaged_error, percent_error, predict, train, Normalizer, ReadoutWeights, SensorMask, TrainingPart,
};
use crate::surrogate::Surrogate;
use crate::tasks::{detection_label, stack_tasks, Detection, TaskKind};

/// Simulator plus the profile family; produces datasets on demand.
#[derive(Debug, Clone)]
pub struct Lab {
    pub surrogate: Surrogate,
    pub profiles: Vec<RampProfile>,
    pub grid: TimeGrid,
}

impl Lab {
    pub fn run(&self, cond: InputCondition) -> Result<PressureStateSeries> {
        let profile = cond
            .profile
            .checked_sub(1)
            .and_then(|i| self.profiles.get(i))
            .ok_or_else(|| Error::MissingCondition(format!("{cond}: no profile P{}", cond.profile)))?;
        let u = profile.generate(&self.grid);
        self.surrogate.simulate(&u, cond.mass_g, &self.grid, cond)
    }

    /// Simulates every condition, in parallel.
    pub fn dataset(&self, conds: &[InputCondition]) -> Result<Dataset> {
        let runs: Vec<PressureStateSeries> = conds.par_iter().map(|c| self.run(*c)).collect::<Result<_>>()?;
        Ok(Dataset::from_runs(runs))
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { surrogate: self.surrogate.with_seed(seed), ..self.clone() }
    }
}

/// Series keyed by `(profile, payload)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    runs: BTreeMap<(usize, usize), PressureStateSeries>,
}

impl Dataset {
    pub fn from_runs(runs: impl IntoIterator<Item = PressureStateSeries>) -> Self {
        Self { runs: runs.into_iter().map(|r| (r.condition.key(), r)).collect() }
    }

    pub fn get(&self, cond: &InputCondition) -> Result<&PressureStateSeries> {
        self.runs.get(&cond.key()).ok_or_else(|| Error::MissingCondition(cond.to_string()))
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PressureStateSeries> {
        self.runs.values()
    }
}

/// How much of the training window each condition of a subset contributes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SegmentRule {
    /// Whole training window per condition.
    FullWindow,
    /// `seconds` per condition, laid out back to back.
    Fixed { seconds: f64 },
    /// `max(floor, window / k)` seconds per condition of a k-subset.
    Spread { floor: f64 },
}

impl SegmentRule {
    pub fn default_for(task: TaskKind) -> Self {
        match task {
            TaskKind::BendingAngle => SegmentRule::FullWindow,
            TaskKind::PayloadDetect => SegmentRule::Fixed { seconds: 5.0 },
            TaskKind::PayloadMass => SegmentRule::Spread { floor: 5.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub task: TaskKind,
    pub subsets: Vec<Vec<InputCondition>>,
    pub evaluation: Vec<InputCondition>,
    pub train_window: Window,
    pub test_window: Window,
    pub mask: SensorMask,
    /// Caps the rows taken from each condition.
    pub samples_per_condition: Option<usize>,
    pub segment: SegmentRule,
    pub normalizer: Normalizer,
    pub ridge: f64,
}

impl SweepSpec {
    /// Defaults for `task`: 50-75 s training, 75-100 s testing, all 7 sensors.
    pub fn new(task: TaskKind, subsets: Vec<Vec<InputCondition>>, evaluation: Vec<InputCondition>) -> Self {
        Self {
            task,
            subsets,
            evaluation,
            train_window: Window::TRAIN,
            test_window: Window::TEST,
            mask: SensorMask::all(7),
            samples_per_condition: None,
            segment: SegmentRule::default_for(task),
            normalizer: task.default_normalizer(),
            ridge: 0.0,
        }
    }

    /// Training rows of each subset member.
    fn rows(&self, grid: &TimeGrid, k: usize) -> Result<Vec<Range<usize>>> {
        let win = grid.index_range(self.train_window)?;
        let len = win.len();
        let cap = self.samples_per_condition.unwrap_or(usize::MAX);
        if let Some(c) = self.samples_per_condition {
            if c == 0 || c > len {
                return Err(Error::param("samples_per_condition", format!("{c} not in 1..={len}")));
            }
        }
        let local = match self.segment {
            SegmentRule::FullWindow => vec![0..len.min(cap); k],
            SegmentRule::Fixed { seconds } => {
                let seg = grid.samples_in(seconds).min(cap);
                crate::tasks::segment_layout(k, seg, len)
            }
            SegmentRule::Spread { floor } => {
                let secs = floor.max(self.train_window.len() / k as f64);
                let seg = grid.samples_in(secs).min(cap);
                crate::tasks::segment_layout(k, seg, len)
            }
        };
        Ok(local.into_iter().map(|r| win.start + r.start..win.start + r.end).collect())
    }

    /// Trains the readout for one subset.
    pub fn fit(&self, data: &Dataset, subset: &[InputCondition]) -> Result<ReadoutWeights> {
        if subset.is_empty() {
            return Err(Error::Empty("training subset".into()));
        }
        let series: Vec<&PressureStateSeries> = subset.iter().map(|c| data.get(c)).collect::<Result<_>>()?;
        let rows = self.rows(&series[0].grid, subset.len())?;
        let parts: Vec<TrainingPart<'_>> = series
            .iter()
            .zip(rows)
            .map(|(s, r)| TrainingPart::single(s, r.clone(), &self.task.target(s, r)))
            .collect();
        train(&assemble(&parts, &self.mask)?, self.ridge)
    }

    /// Percent error and window-mean output on one evaluation condition.
    pub fn score(&self, w: &ReadoutWeights, s: &PressureStateSeries) -> Result<(f64, f64)> {
        let rows = s.grid.index_range(self.test_window)?;
        let truth = self.task.target(s, rows);
        let y: Vec<f64> = predict(w, s, self.test_window, &self.mask)?.column(0).iter().copied().collect();
        let mean = y.iter().sum::<f64>() / y.len().max(1) as f64;
        Ok((percent_error(&y, &truth, self.normalizer)?, mean))
    }
}

/// Error grid over (training subset, evaluation condition).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub task: TaskKind,
    pub subsets: Vec<Vec<InputCondition>>,
    pub evaluation: Vec<InputCondition>,
    /// `subsets x evaluation`, percent.
    pub error_grid: Vec<Vec<f64>>,
    /// `e_avg` per subset.
    pub row_means: Vec<f64>,
    /// Window-mean readout output per cell.
    pub output_means: Vec<Vec<f64>>,
    pub weights: Vec<ReadoutWeights>,
}

impl SweepResult {
    /// Sign-rule decisions per cell (meaningful for detection sweeps).
    pub fn detections(&self) -> Vec<Vec<Detection>> {
        self.output_means.iter().map(|r| r.iter().map(|&m| Detection::from_mean(m)).collect()).collect()
    }

    /// Index of the subset with the largest `e_avg`.
    pub fn worst_row(&self) -> Option<usize> {
        (0..self.row_means.len()).max_by(|&a, &b| self.row_means[a].total_cmp(&self.row_means[b]))
    }

    /// `subset, <eval labels...>, e_avg`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subset");
        for c in &self.evaluation {
            write!(out, ",{c}").unwrap();
        }
        out.push_str(",e_avg\n");
        for (r, subset) in self.subsets.iter().enumerate() {
            out.push_str(&subset_label(subset));
            for e in &self.error_grid[r] {
                write!(out, ",{e:.6}").unwrap();
            }
            writeln!(out, ",{:.6}", self.row_means[r]).unwrap();
        }
        out
    }
}

/// `P1M1+P7M1` style label.
pub fn subset_label(subset: &[InputCondition]) -> String {
    subset.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("+")
}

/// Train on each subset, evaluate on every evaluation condition.
pub fn subset_sweep(spec: &SweepSpec, data: &Dataset) -> Result<SweepResult> {
    if spec.evaluation.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let eval: Vec<&PressureStateSeries> = spec.evaluation.iter().map(|c| data.get(c)).collect::<Result<_>>()?;
    let rows: Vec<(ReadoutWeights, Vec<(f64, f64)>)> = spec
        .subsets
        .par_iter()
        .map(|subset| {
            let w = spec.fit(data, subset)?;
            let scores = eval.iter().map(|s| spec.score(&w, s)).collect::<Result<Vec<_>>>()?;
            Ok((w, scores))
        })
        .collect::<Result<_>>()?;
    let mut result = SweepResult {
        task: spec.task,
        subsets: spec.subsets.clone(),
        evaluation: spec.evaluation.clone(),
        error_grid: Vec::with_capacity(rows.len()),
        row_means: Vec::with_capacity(rows.len()),
        output_means: Vec::with_capacity(rows.len()),
        weights: Vec::with_capacity(rows.len()),
    };
    for (w, scores) in rows {
        let errs: Vec<f64> = scores.iter().map(|s| s.0).collect();
        result.row_means.push(averaged_error(&errs)?);
        result.error_grid.push(errs);
        result.output_means.push(scores.iter().map(|s| s.1).collect());
        result.weights.push(w);
    }
    Ok(result)
}

/// Mean and spread of errors per training-sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCountResult {
    pub counts: Vec<usize>,
    pub evaluation: Vec<InputCondition>,
    /// `counts x evaluation`
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
    /// `e_avg` mean and std per count.
    pub e_avg_mean: Vec<f64>,
    pub e_avg_std: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl SampleCountResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("samples");
        for c in &self.evaluation {
            write!(out, ",{c}_mean,{c}_std").unwrap();
        }
        out.push_str(",e_avg_mean,e_avg_std\n");
        for (i, n) in self.counts.iter().enumerate() {
            write!(out, "{n}").unwrap();
            for j in 0..self.evaluation.len() {
                write!(out, ",{:.6},{:.6}", self.mean[i][j], self.std[i][j]).unwrap();
            }
            writeln!(out, ",{:.6},{:.6}", self.e_avg_mean[i], self.e_avg_std[i]).unwrap();
        }
        out
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// Trains the single subset of `spec` on the first `count` samples of each
/// condition, for every count, repeated with noise seeds `base_seed + r`.
pub fn sample_count_sweep(
    lab: &Lab,
    spec: &SweepSpec,
    counts: &[usize],
    repeats: usize,
    base_seed: u64,
) -> Result<SampleCountResult> {
    let subset = match spec.subsets.as_slice() {
        [s] => s.clone(),
        _ => return Err(Error::param("subsets", "sample-count sweep takes exactly one training subset")),
    };
    if counts.is_empty() || repeats == 0 {
        return Err(Error::Empty("counts or repeats".into()));
    }
    let mut conds = subset.clone();
    conds.extend(spec.evaluation.iter().copied());
    conds.sort_by_key(|c| c.key());
    conds.dedup_by_key(|c| c.key());
    let seeds: Vec<u64> = (0..repeats as u64).map(|r| base_seed.wrapping_add(r)).collect();
    // per repeat: counts x evaluation errors
    let per_repeat: Vec<Vec<Vec<f64>>> = seeds
        .par_iter()
        .map(|&seed| {
            let data = lab.with_seed(seed).dataset(&conds)?;
            counts
                .iter()
                .map(|&n| {
                    let s = SweepSpec { samples_per_condition: Some(n), subsets: vec![subset.clone()], ..spec.clone() };
                    Ok(subset_sweep(&s, &data)?.error_grid.remove(0))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let ne = spec.evaluation.len();
    let mut res = SampleCountResult {
        counts: counts.to_vec(),
        evaluation: spec.evaluation.clone(),
        mean: vec![],
        std: vec![],
        e_avg_mean: vec![],
        e_avg_std: vec![],
        seeds,
    };
    for i in 0..counts.len() {
        let (mut m, mut s) = (Vec::with_capacity(ne), Vec::with_capacity(ne));
        for j in 0..ne {
            let vals: Vec<f64> = per_repeat.iter().map(|r| r[i][j]).collect();
            let (a, b) = mean_std(&vals);
            m.push(a);
            s.push(b);
        }
        let avgs: Vec<f64> = per_repeat.iter().map(|r| r[i].iter().sum::<f64>() / ne as f64).collect();
        let (a, b) = mean_std(&avgs);
        res.mean.push(m);
        res.std.push(s);
        res.e_avg_mean.push(a);
        res.e_avg_std.push(b);
    }
    Ok(res)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationResult {
    pub masks: Vec<SensorMask>,
    pub evaluation: Vec<InputCondition>,
    pub error_grid: Vec<Vec<f64>>,
    pub row_means: Vec<f64>,
    /// Per mask, percentage weight share of each sensor in the mask.
    pub shares: Vec<Vec<f64>>,
    pub n_sensors: usize,
}

impl AblationResult {
    /// `mask, <errors...>, e_avg, share_s1..share_sN` (blank share when the
    /// sensor is masked out).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mask");
        for c in &self.evaluation {
            write!(out, ",{c}").unwrap();
        }
        out.push_str(",e_avg");
        for k in 1..=self.n_sensors {
            write!(out, ",share_s{k}").unwrap();
        }
        out.push('\n');
        for (r, mask) in self.masks.iter().enumerate() {
            out.push_str(&mask.labels().join("+"));
            for e in &self.error_grid[r] {
                write!(out, ",{e:.6}").unwrap();
            }
            write!(out, ",{:.6}", self.row_means[r]).unwrap();
            for k in 0..self.n_sensors {
                match mask.indices().iter().position(|&i| i == k) {
                    Some(p) => write!(out, ",{:.6}", self.shares[r][p]).unwrap(),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Repeats the single-subset sweep of `spec` under each sensor mask.
pub fn sensor_ablation_sweep(spec: &SweepSpec, data: &Dataset, masks: &[SensorMask]) -> Result<AblationResult> {
    if masks.is_empty() {
        return Err(Error::Empty("mask list".into()));
    }
    if spec.subsets.len() != 1 {
        return Err(Error::param("subsets", "sensor ablation takes exactly one training subset"));
    }
    let rows: Vec<SweepResult> = masks
        .par_iter()
        .map(|m| subset_sweep(&SweepSpec { mask: m.clone(), ..spec.clone() }, data))
        .collect::<Result<_>>()?;
    let n_sensors = data.iter().next().map_or(0, |s| s.n_sensors());
    Ok(AblationResult {
        masks: masks.to_vec(),
        evaluation: spec.evaluation.clone(),
        error_grid: rows.iter().map(|r| r.error_grid[0].clone()).collect(),
        row_means: rows.iter().map(|r| r.row_means[0]).collect(),
        shares: rows.iter().map(|r| r.weights[0].weight_shares(0)).collect(),
        n_sensors,
    })
}

/// Named training selection on the multi-task grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultitaskSubset {
    pub name: String,
    /// 1-based profile indices.
    pub profiles: Vec<usize>,
    /// Payload masses, grams; must belong to the grid's payload set.
    pub payloads: Vec<f64>,
}

impl MultitaskSubset {
    pub fn new(name: &str, profiles: &[usize], payloads: &[f64]) -> Self {
        Self { name: name.into(), profiles: profiles.to_vec(), payloads: payloads.to_vec() }
    }

    pub fn cells(&self, set: &PayloadSet) -> Result<Vec<InputCondition>> {
        let mut out = Vec::new();
        for &p in &self.profiles {
            for &m in &self.payloads {
                let j = set
                    .index_of(m)
                    .ok_or_else(|| Error::MissingCondition(format!("{}: payload {m} g not in grid", self.name)))?;
                out.push(InputCondition::new(p, j, m));
            }
        }
        Ok(out)
    }

    /// Corner selection {P1, P7} x {0, 400 g}.
    pub fn two_by_two() -> Self {
        Self::new("2x2", &[1, 7], &[0.0, 400.0])
    }

    /// {P1, P3, P4, P5, P7} x {0, 400 g}.
    pub fn five_by_two() -> Self {
        Self::new("5x2", &[1, 3, 4, 5, 7], &[0.0, 400.0])
    }

    /// {P1, P4, P7} x {0, 200, 400 g}.
    pub fn three_by_three() -> Self {
        Self::new("3x3", &[1, 4, 7], &[0.0, 200.0, 400.0])
    }
}

/// Multi-task outcome for one training selection.
#[derive(Debug, Clone, PartialEq)]
pub struct MultitaskResult {
    pub name: String,
    pub cells: Vec<InputCondition>,
    /// Per grid cell, in grid order.
    pub grid: Vec<InputCondition>,
    pub detection: Vec<Detection>,
    /// Angle error per cell (always evaluated).
    pub angle_error: Vec<f64>,
    /// Mass error where payload present and detected.
    pub mass_error: Vec<Option<f64>>,
    pub weights: ReadoutWeights,
}

impl MultitaskResult {
    pub fn detections_correct(&self) -> usize {
        self.grid
            .iter()
            .zip(&self.detection)
            .filter(|(c, d)| d.is_present() == (c.mass_g > 0.0))
            .count()
    }

    /// Mean over every evaluated second-step error (angle and mass).
    pub fn step2_mean(&self) -> f64 {
        let all: Vec<f64> = self.angle_error.iter().copied().chain(self.mass_error.iter().flatten().copied()).collect();
        all.iter().sum::<f64>() / all.len() as f64
    }

    /// `cell, detection, detect_ok, angle_error, mass_error`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell,mass_g,detection,detect_ok,angle_error,mass_error\n");
        for (i, c) in self.grid.iter().enumerate() {
            let d = self.detection[i];
            let ok = d.is_present() == (c.mass_g > 0.0);
            let mass = self.mass_error[i].map_or(String::new(), |e| format!("{e:.6}"));
            let dname = if d.is_present() { "present" } else { "absent" };
            writeln!(out, "{c},{},{dname},{ok},{:.6},{mass}", c.mass_g, self.angle_error[i]).unwrap();
        }
        out
    }
}

/// Trains the stacked [angle, detection, mass] readout on each selection and
/// runs the two-step pipeline on every cell of `grid`: detection first, then
/// the angle everywhere and the mass only where a payload is both detected
/// and present (zero-payload cells have no mass to score).
#[allow(clippy::too_many_arguments)]
pub fn multitask_grid(
    data: &Dataset,
    grid: &[InputCondition],
    payloads: &PayloadSet,
    selections: &[MultitaskSubset],
    train_window: Window,
    test_window: Window,
    mask: &SensorMask,
    ridge: f64,
) -> Result<Vec<MultitaskResult>> {
    let eval: Vec<&PressureStateSeries> = grid.iter().map(|c| data.get(c)).collect::<Result<_>>()?;
    selections
        .par_iter()
        .map(|sel| {
            let cells = sel.cells(payloads)?;
            let series: Vec<&PressureStateSeries> = cells.iter().map(|c| data.get(c)).collect::<Result<_>>()?;
            let parts = series
                .iter()
                .map(|s| {
                    let rows = s.grid.index_range(train_window)?;
                    let n = rows.len();
                    let targets = stack_tasks(&[
                        s.theta[rows.clone()].to_vec(),
                        vec![detection_label(s.condition.mass_g); n],
                        vec![s.condition.mass_g; n],
                    ])?;
                    Ok(TrainingPart { series: s, rows, targets })
                })
                .collect::<Result<Vec<_>>>()?;
            let w = train(&assemble(&parts, mask)?, ridge)?;
            let mut res = MultitaskResult {
                name: sel.name.clone(),
                cells,
                grid: grid.to_vec(),
                detection: vec![],
                angle_error: vec![],
                mass_error: vec![],
                weights: w,
            };
            for s in &eval {
                let y = predict(&res.weights, s, test_window, mask)?;
                let rows = s.grid.index_range(test_window)?;
                let col = |t: usize| -> Vec<f64> { y.column(t).iter().copied().collect() };
                let det = col(1);
                let d = Detection::from_mean(det.iter().sum::<f64>() / det.len() as f64);
                res.angle_error.push(percent_error(&col(0), &s.theta[rows.clone()], Normalizer::Range)?);
                let m = s.condition.mass_g;
                res.mass_error.push(if d.is_present() && m > 0.0 {
                    Some(percent_error(&col(2), &vec![m; rows.len()], Normalizer::MaxAbs)?)
                } else {
                    None
                });
                res.detection.push(d);
            }
            Ok(res)
        })
        .collect()
}

/// Conditions `P(i)` at payload `M(payload)` for each profile in `profiles`.
pub fn profile_subset(profiles: &[usize], payload: usize, set: &PayloadSet) -> Vec<InputCondition> {
    let m = set.mass(payload).unwrap_or(0.0);
    profiles.iter().map(|&i| InputCondition::new(i, payload, m)).collect()
}

/// Conditions `M(j)` under profile `P(profile)` for each `j`.
pub fn payload_subset(payloads: &[usize], profile: usize, set: &PayloadSet) -> Vec<InputCondition> {
    payloads.iter().map(|&j| InputCondition::new(profile, j, set.mass(j).unwrap_or(0.0))).collect()
}

/// Bending rows: {P1}, {P1,P7}, {P1,P4,P7}, ... up to all seven profiles.
pub fn nested_bending_subsets() -> Vec<Vec<usize>> {
    vec![
        vec![1],
        vec![1, 7],
        vec![1, 4, 7],
        vec![1, 3, 5, 7],
        vec![1, 2, 4, 6, 7],
        vec![1, 2, 3, 5, 6, 7],
        vec![1, 2, 3, 4, 5, 6, 7],
    ]
}

/// Payload rows of sizes 2..6 over the non-zero masses M2..M7.
pub fn nested_payload_family() -> Vec<Vec<usize>> {
    vec![vec![2, 7], vec![2, 5, 7], vec![2, 4, 5, 7], vec![2, 3, 4, 5, 7], vec![2, 3, 4, 5, 6, 7]]
}

/// All k-element subsets of `1..=n`, lexicographic.
pub fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..=n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, n, k, &mut Vec::new(), &mut out);
    out
}
