use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use armrc::config::{load_config, ExperimentConfig};
use armrc::experiments::{
    k_subsets, multitask_grid, sample_count_sweep, sensor_ablation_sweep, subset_sweep, Dataset, SweepResult,
};
use armrc::grid::{InputCondition, PressureStateSeries, Window};
use armrc::io::{export_run, ingest_run_auto, write_result_csv, Provenance, TrainingInfo, WeightsFile};
use armrc::readout::{
    assemble, correlation_matrix, percent_error, predict, train, SensorMask, TrainingPart,
};
use armrc::tasks::{stack_tasks, Detection, TaskKind};
use armrc::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "armrc", version, about = "Soft-arm reservoir readouts: simulate, train, evaluate, sweep")]
struct Cli {
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the ridge parameter (0 = minimum-norm least squares).
    #[arg(long, global = true)]
    ridge: Option<f64>,
    /// Only log errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ConfigArg {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate every grid condition and write run CSVs.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = GridChoice::Standard)]
        grid: GridChoice,
    },
    /// Train readout weights on a subset of conditions.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        /// Task, or comma-separated tasks for a multi-task readout: bending, detect, mass.
        #[arg(long, short)]
        task: String,
        /// Training conditions, e.g. "P1,P7", "M2,M7" or "P1M1,P7M5".
        #[arg(long, short)]
        subset: String,
        /// Sensor subset, e.g. "s5,s6,s7"; all sensors when omitted.
        #[arg(long)]
        sensors: Option<String>,
        /// Directory of run CSVs to train on instead of simulating.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Print per-task errors of saved weights on one run.
    Evaluate {
        #[arg(long, short)]
        weights: PathBuf,
        #[arg(long, short)]
        run: PathBuf,
        /// Sensor subset to read from the run; must match the weights.
        #[arg(long)]
        sensors: Option<String>,
        /// Evaluation window "start,end" in seconds; the weights' test window by default.
        #[arg(long)]
        window: Option<String>,
    },
    /// Run one of the experiment sweeps.
    Sweep {
        #[arg(value_enum)]
        kind: SweepKind,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Correlation matrix of one channel across runs.
    Correlate {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// s1..sN, s_in or theta.
        #[arg(long, default_value = "s7")]
        channel: String,
        /// Window "start,end" in seconds; the whole run by default.
        #[arg(long)]
        window: Option<String>,
        #[command(flatten)]
        config: ConfigArg,
        /// Output CSV; stdout when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GridChoice {
    Standard,
    Multitask,
    Extended,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Conditions,
    Samples,
    Sensors,
    Multitask,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string();
            let prefix = format!("{}: ", e.kind());
            eprintln!("error: {}: {}", e.kind(), msg.strip_prefix(&prefix).unwrap_or(&msg));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let ov = Overrides { seed: cli.seed, ridge: cli.ridge };
    match cli.cmd {
        Cmd::Simulate { config, out, grid } => simulate(&ov.apply(&config)?, &out, grid),
        Cmd::Train { config, task, subset, sensors, data, out } => {
            train_cmd(&ov.apply(&config)?, &task, &subset, sensors.as_deref(), data.as_deref(), &out)
        }
        Cmd::Evaluate { weights, run, sensors, window } => {
            evaluate(&weights, &run, sensors.as_deref(), window.as_deref())
        }
        Cmd::Sweep { kind, config, out } => sweep(&ov.apply(&config)?, kind, &out),
        Cmd::Correlate { runs, channel, window, config, out } => {
            correlate(&ov.apply(&config)?, &runs, &channel, window.as_deref(), out.as_deref())
        }
    }
}

struct Overrides {
    seed: Option<u64>,
    ridge: Option<f64>,
}

impl Overrides {
    fn apply(&self, arg: &ConfigArg) -> Result<ExperimentConfig> {
        let mut cfg = match &arg.config {
            Some(p) => load_config(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.ridge {
            cfg.ridge = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn provenance(cfg: &ExperimentConfig) -> Provenance {
    Provenance { config_sha256: cfg.hash(), seed: cfg.seed }
}

fn run_file_name(c: &InputCondition) -> String {
    format!("run_{c}.csv")
}

fn parse_window(text: &str) -> Result<Window> {
    let bad = || Error::InvalidParam { field: "window".into(), reason: format!("expected \"start,end\", got `{text}`") };
    let (a, b) = text.split_once(',').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(bad());
    }
    Ok(Window::new(a, b))
}

fn parse_tasks(text: &str) -> Result<Vec<TaskKind>> {
    let tasks: Vec<TaskKind> = text.split(',').map(|t| t.trim().parse()).collect::<Result<_>>()?;
    if tasks.is_empty() {
        return Err(Error::Empty("task list".into()));
    }
    Ok(tasks)
}

/// Writes the run manifest, the only output carrying a timestamp.
fn write_manifest(dir: &Path, command: &str, cfg: &ExperimentConfig, mut files: Vec<String>) -> Result<()> {
    files.sort();
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let m = serde_json::json!({
        "tool": "armrc",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config_sha256": cfg.hash(),
        "seed": cfg.seed,
        "created_unix": created,
        "files": files,
    });
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&m)? + "\n")?;
    Ok(())
}

fn simulate(cfg: &ExperimentConfig, out: &Path, grid: GridChoice) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let conds = match grid {
        GridChoice::Standard => cfg.standard_grid(),
        GridChoice::Multitask => cfg.multitask_grid(),
        GridChoice::Extended => armrc::grid::condition_grid(cfg.profiles.len(), &cfg.extended_payloads()),
    };
    let data = cfg.lab()?.dataset(&conds)?;
    let prov = provenance(cfg);
    let mut files = Vec::new();
    for s in data.iter() {
        let name = run_file_name(&s.condition);
        export_run(s, &out.join(&name), Some(&prov))?;
        files.push(name.replace(".csv", ".json"));
        files.push(name);
    }
    log::info!("wrote {} runs to {}", data.len(), out.display());
    write_manifest(out, "simulate", cfg, files)
}

fn load_data(cfg: &ExperimentConfig, conds: &[InputCondition], dir: Option<&Path>) -> Result<Dataset> {
    match dir {
        None => cfg.lab()?.dataset(conds),
        Some(d) => {
            let runs = conds.iter().map(|c| ingest_run_auto(&d.join(run_file_name(c)))).collect::<Result<Vec<_>>>()?;
            Ok(Dataset::from_runs(runs))
        }
    }
}

fn train_cmd(
    cfg: &ExperimentConfig,
    task: &str,
    subset: &str,
    sensors: Option<&str>,
    data_dir: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let tasks = parse_tasks(task)?;
    let conds = cfg.parse_conditions(subset)?;
    let mask = match sensors {
        Some(s) => SensorMask::parse(s)?,
        None => SensorMask::all(cfg.surrogate.n_nodes),
    };
    let data = load_data(cfg, &conds, data_dir)?;
    let weights = if let [t] = tasks.as_slice() {
        let mut spec = cfg.spec(*t, vec![conds.clone()], conds.clone());
        spec.mask = mask;
        spec.fit(&data, &conds)?
    } else {
        // stacked targets over the full training window of every condition
        let series: Vec<&PressureStateSeries> = conds.iter().map(|c| data.get(c)).collect::<Result<_>>()?;
        let parts = series
            .iter()
            .map(|s| {
                let rows = s.grid.index_range(cfg.train_window())?;
                let cols: Vec<Vec<f64>> = tasks.iter().map(|t| t.target(s, rows.clone())).collect();
                Ok(TrainingPart { series: s, rows, targets: stack_tasks(&cols)? })
            })
            .collect::<Result<Vec<_>>>()?;
        train(&assemble(&parts, &mask)?, cfg.ridge)?
    };
    let info = TrainingInfo {
        conditions: conds.iter().map(|c| c.to_string()).collect(),
        train_window: cfg.train_window(),
        test_window: cfg.test_window(),
        ridge: cfg.ridge,
        provenance: provenance(cfg),
    };
    let names = tasks.iter().map(|t| t.name().to_string()).collect();
    WeightsFile::new(names, &weights, info).save(out)?;
    log::info!("trained {} on {} -> {}", task, subset, out.display());
    Ok(())
}

fn evaluate(weights: &Path, run: &Path, sensors: Option<&str>, window: Option<&str>) -> Result<()> {
    let file = WeightsFile::load(weights)?;
    let w = file.readout()?;
    let series = ingest_run_auto(run)?;
    let mask = match sensors {
        Some(s) => SensorMask::parse(s)?,
        None => w.mask.clone(),
    };
    let win = match window {
        Some(t) => parse_window(t)?,
        None => file.training.test_window,
    };
    let y = predict(&w, &series, win, &mask)?;
    let rows = series.grid.index_range(win)?;
    println!("task,percent_error,mean_output,decision");
    for (t, name) in file.tasks.iter().enumerate() {
        let task: TaskKind = name.parse()?;
        let col: Vec<f64> = y.column(t).iter().copied().collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let truth = task.target(&series, rows.clone());
        let err = match percent_error(&col, &truth, task.default_normalizer()) {
            Ok(e) => format!("{e:.6}"),
            Err(Error::DegenerateNormalizer(_)) => {
                log::warn!("{name}: truth is all zero on {}, error undefined", series.condition);
                String::new()
            }
            Err(e) => return Err(e),
        };
        let decision = match task {
            TaskKind::PayloadDetect => {
                if Detection::from_mean(mean).is_present() { "present" } else { "absent" }
            }
            _ => "",
        };
        println!("{name},{err},{mean:.6},{decision}");
    }
    Ok(())
}

fn detection_csv(r: &SweepResult) -> String {
    let mut out = String::from("condition,mass_g,mean_output,decision,correct\n");
    let det = r.detections();
    for (k, c) in r.evaluation.iter().enumerate() {
        let d = det[0][k];
        let name = if d.is_present() { "present" } else { "absent" };
        out.push_str(&format!(
            "{c},{},{:.6},{name},{}\n",
            c.mass_g,
            r.output_means[0][k],
            d.is_present() == (c.mass_g > 0.0)
        ));
    }
    out
}

fn sweep(cfg: &ExperimentConfig, kind: SweepKind, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let prov = provenance(cfg);
    let lab = cfg.lab()?;
    let mut files: Vec<(String, String)> = Vec::new();
    let command = match kind {
        SweepKind::Conditions => {
            let data = lab.dataset(&cfg.standard_grid())?;
            let np = cfg.profiles.len();
            let bend = subset_sweep(&cfg.bending_spec(&cfg.sweeps.bending_subsets), &data)?;
            files.push(("bending_conditions.csv".into(), bend.to_csv()));
            if np >= 2 {
                let pairs = subset_sweep(&cfg.bending_spec(&k_subsets(np, 2)), &data)?;
                files.push(("bending_pairs.csv".into(), pairs.to_csv()));
            }
            let mass = subset_sweep(&cfg.mass_spec(&cfg.sweeps.payload_subsets), &data)?;
            files.push(("mass_conditions.csv".into(), mass.to_csv()));
            let det = subset_sweep(&cfg.detection_spec(), &data)?;
            files.push(("detection.csv".into(), detection_csv(&det)));
            "sweep conditions"
        }
        SweepKind::Samples => {
            let counts = &cfg.sweeps.sample_counts;
            let reps = cfg.sweeps.repeats;
            let bend = cfg.bending_spec(std::slice::from_ref(&cfg.sweeps.fixed_bending_subset));
            let r = sample_count_sweep(&lab, &bend, counts, reps, cfg.seed)?;
            files.push(("bending_samples.csv".into(), r.to_csv()));
            let mass = cfg.mass_spec(std::slice::from_ref(&cfg.sweeps.fixed_payload_subset));
            let r = sample_count_sweep(&lab, &mass, counts, reps, cfg.seed)?;
            files.push(("mass_samples.csv".into(), r.to_csv()));
            "sweep samples"
        }
        SweepKind::Sensors => {
            let data = lab.dataset(&cfg.standard_grid())?;
            let masks = cfg.ablation_masks();
            let bend = cfg.bending_spec(std::slice::from_ref(&cfg.sweeps.fixed_bending_subset));
            files.push(("bending_sensors.csv".into(), sensor_ablation_sweep(&bend, &data, &masks)?.to_csv()));
            let mass = cfg.mass_spec(std::slice::from_ref(&cfg.sweeps.fixed_payload_subset));
            files.push(("mass_sensors.csv".into(), sensor_ablation_sweep(&mass, &data, &masks)?.to_csv()));
            "sweep sensors"
        }
        SweepKind::Multitask => {
            let grid = cfg.multitask_grid();
            let data = lab.dataset(&grid)?;
            let results = multitask_grid(
                &data,
                &grid,
                &cfg.multitask_payloads(),
                &cfg.sweeps.multitask,
                cfg.train_window(),
                cfg.test_window(),
                &SensorMask::all(cfg.surrogate.n_nodes),
                cfg.ridge,
            )?;
            let mut summary = String::from("selection,training_cells,detections_correct,cells,step2_mean\n");
            for r in &results {
                summary.push_str(&format!(
                    "{},{},{},{},{:.6}\n",
                    r.name,
                    r.cells.len(),
                    r.detections_correct(),
                    r.grid.len(),
                    r.step2_mean()
                ));
                files.push((format!("multitask_{}.csv", r.name), r.to_csv()));
            }
            files.push(("multitask_summary.csv".into(), summary));
            "sweep multitask"
        }
    };
    for (name, body) in &files {
        write_result_csv(&out.join(name), &prov, body)?;
    }
    log::info!("{command}: wrote {} files to {}", files.len(), out.display());
    write_manifest(out, command, cfg, files.into_iter().map(|f| f.0).collect())
}

fn channel(series: &PressureStateSeries, name: &str) -> Result<Vec<f64>> {
    match name {
        "s_in" => Ok(series.s_in.clone()),
        "theta" => Ok(series.theta.clone()),
        _ => {
            let k = name
                .strip_prefix('s')
                .and_then(|d| d.parse::<usize>().ok())
                .filter(|k| (1..=series.n_sensors()).contains(k))
                .ok_or_else(|| Error::InvalidParam {
                    field: "channel".into(),
                    reason: format!("`{name}` is not one of s1..s{}, s_in, theta", series.n_sensors()),
                })?;
            Ok(series.sensor(k - 1))
        }
    }
}

fn correlate(
    cfg: &ExperimentConfig,
    runs: &[PathBuf],
    name: &str,
    window: Option<&str>,
    out: Option<&Path>,
) -> Result<()> {
    let mut traces = Vec::new();
    let mut labels = Vec::new();
    for path in runs {
        let s = ingest_run_auto(path)?;
        let s = match window {
            Some(w) => s.slice(parse_window(w)?)?,
            None => s,
        };
        traces.push(channel(&s, name)?);
        labels.push(path.file_stem().map_or_else(|| s.condition.to_string(), |f| f.to_string_lossy().into_owned()));
    }
    let c = correlation_matrix(&traces)?;
    let mut body = String::from("run");
    for l in &labels {
        body.push(',');
        body.push_str(l);
    }
    body.push('\n');
    for (i, l) in labels.iter().enumerate() {
        body.push_str(l);
        for j in 0..labels.len() {
            body.push_str(&format!(",{:.6}", c[(i, j)]));
        }
        body.push('\n');
    }
    let prov = provenance(cfg);
    match out {
        Some(p) => write_result_csv(p, &prov, &body),
        None => {
            print!("{}{body}", prov.csv_comment());
            Ok(())
        }
    }
}
