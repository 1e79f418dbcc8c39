//! Experiment configuration (TOML). Unknown keys are rejected at parse time;
//! invariant checks collect every violation before failing.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::{
    nested_bending_subsets, nested_payload_family, payload_subset, profile_subset, Lab, MultitaskSubset, SegmentRule,
    SweepSpec,
};
use crate::grid::{condition_grid, InputCondition, PayloadSet, TimeGrid, Window};
use crate::profile::{standard_family, RampProfile};
use crate::readout::{Normalizer, SensorMask};
use crate::surrogate::{Surrogate, SurrogateParams};
use crate::tasks::{MassEstimator, TaskKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub ridge: f64,
    pub output_dir: String,
    pub grid: GridConfig,
    pub windows: WindowConfig,
    pub profiles: Vec<RampProfile>,
    pub payloads: PayloadConfig,
    pub surrogate: SurrogateParams,
    pub tasks: TaskConfig,
    pub sweeps: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Hz
    pub sample_rate: f64,
    /// s
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    pub washout: [f64; 2],
    pub train: [f64; 2],
    pub test: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PayloadConfig {
    /// Grams, the 7x7 grid.
    pub standard: Vec<f64>,
    /// Grams, the multi-task grid.
    pub multitask: Vec<f64>,
    pub extended: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    /// Seconds of each detection training segment.
    pub detection_segment: f64,
    /// Minimum seconds per condition for mass step targets.
    pub mass_segment_floor: f64,
    pub mass_estimator: MassEstimator,
    pub bending_normalizer: Normalizer,
    pub mass_normalizer: Normalizer,
    /// Profile used for the payload tasks.
    pub payload_profile: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Profile index sets for the bending condition sweep.
    pub bending_subsets: Vec<Vec<usize>>,
    /// Payload index sets (into the standard set) for the mass sweep.
    pub payload_subsets: Vec<Vec<usize>>,
    /// Payload index set for detection training.
    pub detection_subset: Vec<usize>,
    pub sample_counts: Vec<usize>,
    pub repeats: usize,
    /// Single training subsets for the sample-count and sensor sweeps.
    pub fixed_bending_subset: Vec<usize>,
    pub fixed_payload_subset: Vec<usize>,
    /// 1-based sensor sets for the ablation sweep.
    pub ablation_masks: Vec<Vec<usize>>,
    pub multitask: Vec<MultitaskSubset>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            ridge: 0.0,
            output_dir: "out".into(),
            grid: GridConfig::default(),
            windows: WindowConfig::default(),
            profiles: standard_family(),
            payloads: PayloadConfig::default(),
            surrogate: SurrogateParams::default(),
            tasks: TaskConfig::default(),
            sweeps: SweepConfig::default(),
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { sample_rate: 40.0, duration: 100.0 }
    }
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { washout: [0.0, 50.0], train: [50.0, 75.0], test: [75.0, 100.0] }
    }
}

impl Default for PayloadConfig {
    fn default() -> Self {
        Self {
            standard: PayloadSet::standard().into(),
            multitask: PayloadSet::multitask().into(),
            extended: PayloadSet::extended().into(),
        }
    }
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            detection_segment: 5.0,
            mass_segment_floor: 5.0,
            mass_estimator: MassEstimator::Mean,
            bending_normalizer: Normalizer::Range,
            mass_normalizer: Normalizer::MaxAbs,
            payload_profile: 1,
        }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            bending_subsets: nested_bending_subsets(),
            payload_subsets: nested_payload_family(),
            detection_subset: vec![1, 2],
            sample_counts: (1..=10).map(|k| 100 * k).collect(),
            repeats: 10,
            fixed_bending_subset: vec![1, 7],
            fixed_payload_subset: vec![2, 3, 4, 5, 6, 7],
            ablation_masks: (2..=7).rev().map(|k| (8 - k..=7).collect()).collect(),
            multitask: vec![
                MultitaskSubset::two_by_two(),
                MultitaskSubset::five_by_two(),
                MultitaskSubset::three_by_three(),
            ],
        }
    }
}

fn window(w: [f64; 2]) -> Window {
    Window::new(w[0], w[1])
}

impl ExperimentConfig {
    /// Every invariant violation, each prefixed with its field path.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let g = &self.grid;
        if !(g.sample_rate.is_finite() && g.sample_rate > 0.0) {
            out.push("grid.sample_rate: must be > 0".into());
        }
        if !(g.duration.is_finite() && g.duration * g.sample_rate >= 1.0) {
            out.push("grid.duration: must cover at least one sample".into());
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            out.push("ridge: must be >= 0".into());
        }
        let w = &self.windows;
        for (name, v) in [("washout", w.washout), ("train", w.train), ("test", w.test)] {
            if !(v[0].is_finite() && v[1].is_finite() && v[0] >= 0.0 && v[0] <= v[1] && v[1] <= g.duration) {
                out.push(format!("windows.{name}: must satisfy 0 <= start <= end <= grid.duration"));
            }
        }
        if w.train[0] >= w.train[1] {
            out.push("windows.train: must not be empty".into());
        }
        if w.test[0] >= w.test[1] {
            out.push("windows.test: must not be empty".into());
        }
        if window(w.train).overlaps(&window(w.test)) {
            out.push("windows: train and test windows overlap".into());
        }
        if w.train[0] < w.washout[1] || w.test[0] < w.washout[1] {
            out.push("windows: train and test windows must start after the washout".into());
        }
        if self.profiles.is_empty() {
            out.push("profiles: at least one profile is required".into());
        }
        for (i, p) in self.profiles.iter().enumerate() {
            for (field, reason) in p.problems() {
                out.push(format!("profiles[{i}].{field}: {reason}"));
            }
        }
        for (name, v) in [
            ("standard", &self.payloads.standard),
            ("multitask", &self.payloads.multitask),
            ("extended", &self.payloads.extended),
        ] {
            if let Err(e) = PayloadSet::new(v.clone()) {
                out.push(format!("payloads.{name}: {e}"));
            }
        }
        for p in self.surrogate.problems() {
            out.push(format!("surrogate.{p}"));
        }
        if self.surrogate.problems().is_empty() && self.surrogate.contraction_factor() >= 1.0 {
            out.push("surrogate: leak/coupling combination is not a contraction".into());
        }
        let t = &self.tasks;
        if !(t.detection_segment.is_finite() && t.detection_segment > 0.0) {
            out.push("tasks.detection_segment: must be > 0".into());
        }
        if !(t.mass_segment_floor.is_finite() && t.mass_segment_floor > 0.0) {
            out.push("tasks.mass_segment_floor: must be > 0".into());
        }
        let np = self.profiles.len();
        let nm = self.payloads.standard.len();
        if !(1..=np).contains(&t.payload_profile) {
            out.push(format!("tasks.payload_profile: must be in 1..={np}"));
        }
        let s = &self.sweeps;
        let check_sets = |out: &mut Vec<String>, name: &str, sets: &[Vec<usize>], max: usize| {
            if sets.is_empty() {
                out.push(format!("sweeps.{name}: must not be empty"));
            }
            for (i, set) in sets.iter().enumerate() {
                if set.is_empty() || set.iter().any(|&v| v == 0 || v > max) {
                    out.push(format!("sweeps.{name}[{i}]: indices must be in 1..={max}"));
                }
            }
        };
        check_sets(&mut out, "bending_subsets", &s.bending_subsets, np);
        check_sets(&mut out, "payload_subsets", &s.payload_subsets, nm);
        check_sets(&mut out, "detection_subset", std::slice::from_ref(&s.detection_subset), nm);
        check_sets(&mut out, "fixed_bending_subset", std::slice::from_ref(&s.fixed_bending_subset), np);
        check_sets(&mut out, "fixed_payload_subset", std::slice::from_ref(&s.fixed_payload_subset), nm);
        check_sets(&mut out, "ablation_masks", &s.ablation_masks, self.surrogate.n_nodes);
        for (i, set) in s.payload_subsets.iter().chain([&s.fixed_payload_subset]).enumerate() {
            if set.iter().any(|&j| self.payloads.standard.get(j.wrapping_sub(1)) == Some(&0.0)) {
                out.push(format!("sweeps: payload subset {i} contains a zero mass, which has no mass error"));
            }
        }
        let train_n = ((w.train[1] - w.train[0]) * g.sample_rate + 1e-9).floor() as usize;
        if s.sample_counts.is_empty() || s.sample_counts.iter().any(|&c| c == 0 || c > train_n) {
            out.push(format!("sweeps.sample_counts: counts must be in 1..={train_n}"));
        }
        if s.repeats == 0 {
            out.push("sweeps.repeats: must be >= 1".into());
        }
        for (i, m) in s.multitask.iter().enumerate() {
            if m.profiles.is_empty() || m.profiles.iter().any(|&p| p == 0 || p > np) {
                out.push(format!("sweeps.multitask[{i}].profiles: indices must be in 1..={np}"));
            }
            if m.payloads.is_empty() || m.payloads.iter().any(|p| !self.payloads.multitask.contains(p)) {
                out.push(format!("sweeps.multitask[{i}].payloads: masses must belong to payloads.multitask"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() { Ok(()) } else { Err(Error::Config(p)) }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON form, hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid::with_duration(self.grid.sample_rate, self.grid.duration).expect("validated grid")
    }

    pub fn washout(&self) -> Window {
        window(self.windows.washout)
    }

    pub fn train_window(&self) -> Window {
        window(self.windows.train)
    }

    pub fn test_window(&self) -> Window {
        window(self.windows.test)
    }

    pub fn standard_payloads(&self) -> PayloadSet {
        PayloadSet::new(self.payloads.standard.clone()).expect("validated payloads")
    }

    pub fn multitask_payloads(&self) -> PayloadSet {
        PayloadSet::new(self.payloads.multitask.clone()).expect("validated payloads")
    }

    pub fn extended_payloads(&self) -> PayloadSet {
        PayloadSet::new(self.payloads.extended.clone()).expect("validated payloads")
    }

    /// Surrogate with the config seed as noise seed.
    pub fn surrogate(&self) -> Result<Surrogate> {
        let mut p = self.surrogate.clone();
        p.seed = self.seed;
        Surrogate::new(p)
    }

    pub fn lab(&self) -> Result<Lab> {
        Ok(Lab { surrogate: self.surrogate()?, profiles: self.profiles.clone(), grid: self.time_grid() })
    }

    pub fn standard_grid(&self) -> Vec<InputCondition> {
        condition_grid(self.profiles.len(), &self.standard_payloads())
    }

    pub fn multitask_grid(&self) -> Vec<InputCondition> {
        condition_grid(self.profiles.len(), &self.multitask_payloads())
    }

    /// Sweep spec for `task` with this config's windows, ridge and task settings.
    pub fn spec(&self, task: TaskKind, subsets: Vec<Vec<InputCondition>>, evaluation: Vec<InputCondition>) -> SweepSpec {
        let mut s = SweepSpec::new(task, subsets, evaluation);
        s.train_window = self.train_window();
        s.test_window = self.test_window();
        s.mask = SensorMask::all(self.surrogate.n_nodes);
        s.ridge = self.ridge;
        match task {
            TaskKind::BendingAngle => s.normalizer = self.tasks.bending_normalizer,
            TaskKind::PayloadMass => {
                s.normalizer = self.tasks.mass_normalizer;
                s.segment = SegmentRule::Spread { floor: self.tasks.mass_segment_floor };
            }
            TaskKind::PayloadDetect => s.segment = SegmentRule::Fixed { seconds: self.tasks.detection_segment },
        }
        s
    }

    fn all_profiles(&self) -> Vec<usize> {
        (1..=self.profiles.len()).collect()
    }

    /// Bending sweep over `subsets` (profile index sets) at zero payload,
    /// evaluated on every profile.
    pub fn bending_spec(&self, subsets: &[Vec<usize>]) -> SweepSpec {
        let set = self.standard_payloads();
        let subsets = subsets.iter().map(|s| profile_subset(s, 1, &set)).collect();
        self.spec(TaskKind::BendingAngle, subsets, profile_subset(&self.all_profiles(), 1, &set))
    }

    /// Mass sweep under the payload profile, evaluated on the non-zero masses.
    pub fn mass_spec(&self, subsets: &[Vec<usize>]) -> SweepSpec {
        let set = self.standard_payloads();
        let p = self.tasks.payload_profile;
        let subsets = subsets.iter().map(|s| payload_subset(s, p, &set)).collect();
        let eval: Vec<usize> = (1..=set.len()).filter(|&j| set.mass(j) != Some(0.0)).collect();
        self.spec(TaskKind::PayloadMass, subsets, payload_subset(&eval, p, &set))
    }

    /// Detection trained on the configured subset, evaluated on every payload.
    pub fn detection_spec(&self) -> SweepSpec {
        let set = self.standard_payloads();
        let p = self.tasks.payload_profile;
        let all: Vec<usize> = (1..=set.len()).collect();
        self.spec(
            TaskKind::PayloadDetect,
            vec![payload_subset(&self.sweeps.detection_subset, p, &set)],
            payload_subset(&all, p, &set),
        )
    }

    /// Parses a condition list such as `P1,P7`, `P1M3,P2M3` or `M2,M7`.
    /// A bare `P<i>` means zero payload; a bare `M<j>` uses the payload profile.
    pub fn parse_conditions(&self, text: &str) -> Result<Vec<InputCondition>> {
        let set = self.standard_payloads();
        let np = self.profiles.len();
        let bad = |tok: &str, why: String| Error::param("subset", format!("`{tok}`: {why}"));
        let index = |tok: &str, digits: &str, max: usize| -> Result<usize> {
            match digits.parse::<usize>() {
                Ok(v) if (1..=max).contains(&v) => Ok(v),
                _ => Err(bad(tok, format!("index must be in 1..={max}"))),
            }
        };
        let mut out = Vec::new();
        for tok in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let upper = tok.to_ascii_uppercase();
            let (p, m) = if let Some(rest) = upper.strip_prefix('P') {
                match rest.split_once('M') {
                    Some((i, j)) => (index(tok, i, np)?, index(tok, j, set.len())?),
                    None => (index(tok, rest, np)?, 1),
                }
            } else if let Some(j) = upper.strip_prefix('M') {
                (self.tasks.payload_profile, index(tok, j, set.len())?)
            } else {
                return Err(bad(tok, "expected P<i>, M<j> or P<i>M<j>".into()));
            };
            out.push(InputCondition::new(p, m, set.mass(m).expect("index checked")));
        }
        if out.is_empty() {
            return Err(Error::Empty("condition list".into()));
        }
        Ok(out)
    }

    pub fn ablation_masks(&self) -> Vec<SensorMask> {
        self.sweeps
            .ablation_masks
            .iter()
            .map(|m| SensorMask::new(m.iter().map(|i| i - 1).collect()).expect("validated mask"))
            .collect()
    }
}

/// Reads and validates a TOML config.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_toml_str(&text)
}
