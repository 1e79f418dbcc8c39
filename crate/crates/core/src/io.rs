//! Run files (CSV + JSON sidecar), weight files and run manifests.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{InputCondition, PressureStateSeries, TimeGrid, Window};
use crate::readout::{ReadoutWeights, SensorMask};

/// Max deviation of a timestamp from the uniform clock.
pub const CLOCK_TOL: f64 = 1e-6;

/// Config hash and seed stamped on every output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    /// Leading comment line for CSV outputs.
    pub fn csv_comment(&self) -> String {
        format!("# config_sha256={} seed={}\n", self.config_sha256, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub time: String,
    pub pressure: String,
    pub angle: String,
    pub mass: String,
}

impl Default for Units {
    fn default() -> Self {
        Self { time: "s".into(), pressure: "psi".into(), angle: "deg".into(), mass: "g".into() }
    }
}

/// Metadata stored next to a run CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSidecar {
    pub sample_rate: f64,
    pub t0: f64,
    pub n_samples: usize,
    pub n_sensors: usize,
    pub condition: InputCondition,
    #[serde(default)]
    pub units: Units,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// Full-precision text: 17 significant digits, exact on re-parse.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn run_header(n_sensors: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "s_in".to_string()];
    h.extend((1..=n_sensors).map(|k| format!("s{k}")));
    h.push("theta".into());
    h
}

/// Sidecar path for a run CSV: `run.csv` -> `run.json`.
pub fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("json")
}

pub fn write_run_csv<W: Write>(out: W, series: &PressureStateSeries, prov: Option<&Provenance>) -> Result<()> {
    let mut out = BufWriter::new(out);
    if let Some(p) = prov {
        out.write_all(p.csv_comment().as_bytes())?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(run_header(series.n_sensors()))?;
    let mut rec: Vec<String> = Vec::with_capacity(series.n_sensors() + 3);
    for k in 0..series.n_samples() {
        rec.clear();
        rec.push(fmt_f64(series.grid.time(k)));
        rec.push(fmt_f64(series.s_in[k]));
        rec.extend(series.sensors.row(k).iter().map(|v| fmt_f64(*v)));
        rec.push(fmt_f64(series.theta[k]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `csv_path` and its JSON sidecar.
pub fn export_run(series: &PressureStateSeries, csv_path: &Path, prov: Option<&Provenance>) -> Result<()> {
    write_run_csv(File::create(csv_path)?, series, prov)?;
    let side = RunSidecar {
        sample_rate: series.grid.sample_rate,
        t0: series.grid.t0,
        n_samples: series.n_samples(),
        n_sensors: series.n_sensors(),
        condition: series.condition,
        units: Units::default(),
        provenance: prov.cloned(),
    };
    let f = File::create(sidecar_path(csv_path))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &side)?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<RunSidecar> {
    let f = File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

/// Parses a run CSV against its sidecar and validates the clock.
pub fn ingest_run(csv_path: &Path, sidecar: &RunSidecar) -> Result<PressureStateSeries> {
    let f = File::open(csv_path)?;
    parse_run(f, sidecar)
}

pub fn parse_run<R: std::io::Read>(input: R, side: &RunSidecar) -> Result<PressureStateSeries> {
    let grid = TimeGrid::new(side.sample_rate, side.n_samples, side.t0)?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).has_headers(true).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let want = run_header(side.n_sensors);
    for col in &want {
        if !header.contains(col) {
            return Err(Error::Schema(format!("missing column `{col}`")));
        }
    }
    if header != want {
        return Err(Error::Schema(format!("header must be `{}`, got `{}`", want.join(","), header.join(","))));
    }
    let ns = side.n_sensors;
    let n = side.n_samples;
    let mut s_in = Vec::with_capacity(n);
    let mut theta = Vec::with_capacity(n);
    let mut sensors = DMatrix::zeros(n, ns);
    let mut rows = 0usize;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if k >= n {
            return Err(Error::Schema(format!("more than the {n} rows declared in the sidecar")));
        }
        let mut vals = Vec::with_capacity(rec.len());
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::Schema(format!("row {}: column `{}` is not a number: `{cell}`", k + 1, want[c])))?;
            if !v.is_finite() {
                return Err(Error::Schema(format!("row {}: column `{}` is not finite", k + 1, want[c])));
            }
            vals.push(v);
        }
        let expected_t = grid.time(k);
        if (vals[0] - expected_t).abs() > CLOCK_TOL {
            return Err(Error::Schema(format!(
                "row {}: timestamp {} off the uniform {} Hz clock (expected {expected_t})",
                k + 1,
                vals[0],
                side.sample_rate
            )));
        }
        s_in.push(vals[1]);
        for m in 0..ns {
            sensors[(k, m)] = vals[2 + m];
        }
        theta.push(vals[2 + ns]);
        rows += 1;
    }
    if rows != n {
        return Err(Error::Schema(format!("expected {n} rows, found {rows}")));
    }
    PressureStateSeries::new(grid, s_in, sensors, theta, side.condition)
}

/// Reads `csv_path` using the sidecar next to it.
pub fn ingest_run_auto(csv_path: &Path) -> Result<PressureStateSeries> {
    let side = read_sidecar(&sidecar_path(csv_path))?;
    ingest_run(csv_path, &side)
}

/// JSON form of trained readout weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsFile {
    pub tasks: Vec<String>,
    /// Sensor labels in weight order, e.g. `["s5", "s6", "s7"]`.
    pub sensors: Vec<String>,
    /// One entry per task: `[w0 (bias), w1, ...]`.
    pub weights: Vec<Vec<f64>>,
    pub training: TrainingInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingInfo {
    pub conditions: Vec<String>,
    pub train_window: Window,
    pub test_window: Window,
    pub ridge: f64,
    pub provenance: Provenance,
}

impl WeightsFile {
    pub fn new(tasks: Vec<String>, w: &ReadoutWeights, training: TrainingInfo) -> Self {
        let weights = (0..w.n_tasks()).map(|t| w.column(t)).collect();
        Self { tasks, sensors: w.mask.labels(), weights, training }
    }

    pub fn readout(&self) -> Result<ReadoutWeights> {
        let mask = SensorMask::parse(&self.sensors.join(","))?;
        if self.weights.is_empty() || self.weights.len() != self.tasks.len() {
            return Err(Error::Schema("one weight column per task is required".into()));
        }
        let p = mask.len() + 1;
        if let Some(c) = self.weights.iter().find(|c| c.len() != p) {
            return Err(Error::Schema(format!("weight column has {} entries, expected {p}", c.len())));
        }
        let m = DMatrix::from_fn(p, self.weights.len(), |r, c| self.weights[c][r]);
        Ok(ReadoutWeights { weights: m, mask })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path)?;
        serde_json::to_writer_pretty(BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
    }
}

/// Writes `body` to `path` with a provenance comment on top.
pub fn write_result_csv(path: &Path, prov: &Provenance, body: &str) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(prov.csv_comment().as_bytes())?;
    f.write_all(body.as_bytes())?;
    f.flush()?;
    Ok(())
}
