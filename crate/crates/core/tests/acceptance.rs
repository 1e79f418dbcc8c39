//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test -p armrc --test acceptance`.

mod common;

use std::time::Instant;

use armrc::config::ExperimentConfig;
use armrc::experiments::{k_subsets, multitask_grid, sensor_ablation_sweep, subset_sweep, Dataset, SweepResult};
use armrc::grid::{InputCondition, PressureStateSeries, TimeGrid, Window};
use armrc::io::{export_run, ingest_run_auto};
use armrc::profile::RampProfile;
use armrc::readout::{assemble, correlation_matrix, mean_abs_offdiag, rmse, train, SensorMask, TrainingPart, RCOND};
use armrc::tasks::Detection;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond { Ok(detail) } else { Err(detail) }
}

/// A series whose sensor matrix is `s`; only used as a design-matrix carrier.
fn carrier(s: DMatrix<f64>) -> PressureStateSeries {
    let n = s.nrows();
    let grid = TimeGrid::new(40.0, n, 0.0).unwrap();
    PressureStateSeries::new(grid, vec![0.0; n], s, vec![0.0; n], InputCondition::new(1, 1, 0.0)).unwrap()
}

fn rows_of(d: &DMatrix<f64>) -> Vec<Vec<f64>> {
    d.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn c1_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let rows = rng.random_range(20..=100);
        let k = rng.random_range(2..=7);
        let s = DMatrix::from_fn(rows, k, |_, _| rng.random_range(-3.0..3.0));
        let y: Vec<f64> = (0..rows).map(|_| rng.random_range(-5.0..5.0)).collect();
        let src = carrier(s);
        let a = assemble(&[TrainingPart::single(&src, 0..rows, &y)], &SensorMask::all(k)).map_err(|e| e.to_string())?;
        let w = train(&a, 0.0).map_err(|e| e.to_string())?.column(0);
        let o = common::normal_equations(&rows_of(&a.design), &y, RCOND);
        worst = worst.max(common::rel_err(&w, &o));
    }
    // rank-deficient: s3 duplicates s1, s4 = s1 + s2
    let rows = 60;
    let mut s = DMatrix::from_fn(rows, 4, |_, _| rng.random_range(-2.0..2.0));
    for r in 0..rows {
        s[(r, 2)] = s[(r, 0)];
        s[(r, 3)] = s[(r, 0)] + s[(r, 1)];
    }
    let y: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
    let src = carrier(s);
    let a = assemble(&[TrainingPart::single(&src, 0..rows, &y)], &SensorMask::all(4)).map_err(|e| e.to_string())?;
    let w = train(&a, 0.0).map_err(|e| e.to_string())?.column(0);
    let o = common::normal_equations(&rows_of(&a.design), &y, RCOND);
    let rd = common::rel_err(&w, &o);
    // null-space directions of the design: (s1 - s3) and (s1 + s2 - s4)
    let null1 = w[1] - w[3];
    let null2 = w[1] + w[2] - w[4];
    let wn: f64 = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let orth = null1.abs().max(null2.abs()) / wn;
    check(
        worst <= 1e-8 && rd <= 1e-8 && orth <= 1e-8,
        format!("max rel err {worst:.2e} on 20 designs; rank-deficient rel err {rd:.2e}, null-space component {orth:.2e}"),
    )
}

fn c2_multitask_bits() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for inst in 0..10 {
        let rows = rng.random_range(20..=100);
        let k = rng.random_range(2..=7);
        let tasks = rng.random_range(2..=4);
        let s = DMatrix::from_fn(rows, k, |_, _| rng.random_range(-3.0..3.0));
        let y = DMatrix::from_fn(rows, tasks, |_, _| rng.random_range(-5.0..5.0));
        let src = carrier(s);
        let mask = SensorMask::all(k);
        let stacked = TrainingPart { series: &src, rows: 0..rows, targets: y.clone() };
        let wm = train(&assemble(&[stacked], &mask).unwrap(), 0.0).unwrap();
        for t in 0..tasks {
            let col: Vec<f64> = y.column(t).iter().copied().collect();
            let ws = train(&assemble(&[TrainingPart::single(&src, 0..rows, &col)], &mask).unwrap(), 0.0).unwrap();
            let a: Vec<u64> = wm.column(t).iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = ws.column(0).iter().map(|v| v.to_bits()).collect();
            if a != b {
                return Err(format!("instance {inst}, task {t}: columns differ"));
            }
        }
    }
    Ok("10 instances, all columns bit-identical".into())
}

fn c3_rmse() -> Outcome {
    let e = rmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 5.0]).unwrap();
    let target = (4.0f64 / 3.0).sqrt();
    let truth = [0.5, -2.0, 7.25, 3.0];
    let c = 0.75;
    let shifted: Vec<f64> = truth.iter().map(|v| v + c).collect();
    let off = rmse(&shifted, &truth).unwrap();
    check((e - target).abs() <= 1e-12 && off == c, format!("rmse={e:.15} vs sqrt(4/3)={target:.15}; offset case {off}"))
}

fn c4_profile() -> Outcome {
    let p = RampProfile::new(3.0, 13.0, 5.0, 5.0, 8).unwrap();
    let g = TimeGrid::new(40.0, 4000, 0.0).unwrap();
    let u = p.generate(&g);
    let peaks = (0..u.len()).filter(|&k| k % 160 == 80 && u[k] == 13.0).count();
    let troughs_in_cycles = (0..8).all(|c| u[c * 160] == 3.0);
    let bounds = u.iter().all(|&v| (3.0..=13.0).contains(&v));
    let held = u[1280..].iter().all(|&v| v == 3.0);
    check(
        p.peak_time() == 2.0 && p.cycle_period() == 4.0 && peaks == 8 && troughs_in_cycles && bounds && held,
        format!("T_peak={} T={} peaks={peaks} bounds={bounds} hold={held}", p.peak_time(), p.cycle_period()),
    )
}

fn c5_windows(cfg: &ExperimentConfig) -> Outcome {
    let lab = cfg.lab().unwrap();
    let run = lab.run(InputCondition::new(1, 1, 0.0)).unwrap();
    let n = |w: Window| run.slice(w).unwrap().n_samples();
    let (a, b, c) = (n(cfg.washout()), n(cfg.train_window()), n(cfg.test_window()));
    check(run.grid.sample_rate == 40.0 && (a, b, c) == (2000, 1000, 1000), format!("washout={a} train={b} test={c}"))
}

fn c6_echo(cfg: &ExperimentConfig) -> Outcome {
    let s = cfg.surrogate().unwrap();
    let g = cfg.time_grid();
    let mut checked = 0;
    for p in &cfg.profiles {
        let u = p.generate(&g);
        for m in [0.0, 300.0] {
            if !s.echo_check(&u, m, &g, cfg.washout()) {
                return Err(format!("diverged for profile {p:?}, payload {m} g"));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} runs converge below 1e-6 after the washout"))
}

fn c7_round_trip(cfg: &ExperimentConfig) -> Outcome {
    let data = cfg.lab().unwrap().dataset(&cfg.standard_grid()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut n = 0;
    for s in data.iter() {
        let path = dir.path().join(format!("run_{}.csv", s.condition));
        export_run(s, &path, None).map_err(|e| e.to_string())?;
        let back = ingest_run_auto(&path).map_err(|e| e.to_string())?;
        let bits = |v: &mut dyn Iterator<Item = &f64>| v.map(|x| x.to_bits()).collect::<Vec<_>>();
        let same = bits(&mut s.sensors.iter()) == bits(&mut back.sensors.iter())
            && bits(&mut s.s_in.iter()) == bits(&mut back.s_in.iter())
            && bits(&mut s.theta.iter()) == bits(&mut back.theta.iter())
            && back.grid == s.grid
            && back.condition == s.condition;
        if !same {
            return Err(format!("{} differs after round trip", s.condition));
        }
        n += 1;
    }
    Ok(format!("{n} runs bit-identical"))
}

/// Everything criteria 8-14 look at, plus the CSV text used by criterion 15.
struct Qualitative {
    bend_p1: SweepResult,
    bend_p17: SweepResult,
    pairs: SweepResult,
    mass_family: SweepResult,
    corr_profiles: f64,
    corr_payloads: f64,
    abl_bend: SweepResult,
    abl_mass: Vec<(usize, f64)>,
    detect: SweepResult,
    mt_2x2: (usize, f64),
    mt_3x3: (usize, f64),
    csv: Vec<String>,
}

fn qualitative(cfg: &ExperimentConfig) -> Qualitative {
    let lab = cfg.lab().unwrap();
    let std_data: Dataset = lab.dataset(&cfg.standard_grid()).unwrap();
    let mt_data: Dataset = lab.dataset(&cfg.multitask_grid()).unwrap();

    let bend_p1 = subset_sweep(&cfg.bending_spec(&[vec![1]]), &std_data).unwrap();
    let bend_p17 = subset_sweep(&cfg.bending_spec(&[vec![1, 7]]), &std_data).unwrap();
    let pairs = subset_sweep(&cfg.bending_spec(&k_subsets(7, 2)), &std_data).unwrap();
    let mass_family = subset_sweep(&cfg.mass_spec(&cfg.sweeps.payload_subsets), &std_data).unwrap();

    let test = std_data.iter().next().unwrap().grid.index_range(cfg.test_window()).unwrap();
    let s7 = |c: InputCondition| std_data.get(&c).unwrap().sensor(6)[test.clone()].to_vec();
    let set = cfg.standard_payloads();
    let by_profile: Vec<Vec<f64>> = (1..=7).map(|i| s7(InputCondition::new(i, 1, 0.0))).collect();
    let by_payload: Vec<Vec<f64>> = (1..=7).map(|j| s7(InputCondition::new(1, j, set.mass(j).unwrap()))).collect();
    let corr_profiles = mean_abs_offdiag(&correlation_matrix(&by_profile).unwrap());
    let corr_payloads = mean_abs_offdiag(&correlation_matrix(&by_payload).unwrap());

    let tip3 = SensorMask::tip(7, 3).unwrap();
    let abl_bend = sensor_ablation_sweep(&cfg.bending_spec(&[vec![1, 7]]), &std_data, &[tip3, SensorMask::all(7)]).unwrap();
    let abl_bend = SweepResult {
        error_grid: abl_bend.error_grid.clone(),
        row_means: abl_bend.row_means.clone(),
        ..subset_sweep(&cfg.bending_spec(&[vec![1, 7]]), &std_data).unwrap()
    };
    let full = vec![cfg.sweeps.payload_subsets.last().unwrap().clone()];
    let masks: Vec<SensorMask> = (2..=7).rev().map(|k| SensorMask::tip(7, k).unwrap()).collect();
    let abl = sensor_ablation_sweep(&cfg.mass_spec(&full), &std_data, &masks).unwrap();
    let abl_mass: Vec<(usize, f64)> = abl.masks.iter().map(|m| m.len()).zip(abl.row_means.iter().copied()).collect();

    let detect = subset_sweep(&cfg.detection_spec(), &std_data).unwrap();

    let mt = multitask_grid(
        &mt_data,
        &cfg.multitask_grid(),
        &cfg.multitask_payloads(),
        &cfg.sweeps.multitask,
        cfg.train_window(),
        cfg.test_window(),
        &SensorMask::all(7),
        cfg.ridge,
    )
    .unwrap();
    let pick = |name: &str| {
        let r = mt.iter().find(|r| r.name == name).unwrap();
        (r.detections_correct(), r.step2_mean())
    };
    let (mt_2x2, mt_3x3) = (pick("2x2"), pick("3x3"));

    let mut csv = vec![
        bend_p1.to_csv(),
        bend_p17.to_csv(),
        pairs.to_csv(),
        mass_family.to_csv(),
        format!("{corr_profiles:.17e},{corr_payloads:.17e}\n"),
        abl.to_csv(),
        detect.to_csv(),
    ];
    csv.extend(mt.iter().map(|r| r.to_csv()));
    Qualitative {
        bend_p1,
        bend_p17,
        pairs,
        mass_family,
        corr_profiles,
        corr_payloads,
        abl_bend,
        abl_mass,
        detect,
        mt_2x2,
        mt_3x3,
        csv,
    }
}

fn fmt_row(v: &[f64]) -> String {
    v.iter().map(|e| format!("{e:.2}")).collect::<Vec<_>>().join(" ")
}

fn c8_bending(q: &Qualitative) -> Outcome {
    let (one, two) = (q.bend_p1.row_means[0], q.bend_p17.row_means[0]);
    let max2 = q.bend_p17.error_grid[0].iter().copied().fold(0.0, f64::max);
    check(
        two < one && max2 < 10.0,
        format!("e_avg {{P1}}={one:.2}% > {{P1,P7}}={two:.2}%; {{P1,P7}} per-profile [{}]", fmt_row(&q.bend_p17.error_grid[0])),
    )
}

fn c9_pairs(q: &Qualitative) -> Outcome {
    let worst = q.pairs.worst_row().unwrap();
    let label: Vec<usize> = q.pairs.subsets[worst].iter().map(|c| c.profile).collect();
    let mut sorted = q.pairs.row_means.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    check(label == vec![1, 2], format!("worst pair {label:?} e_avg={:.2}%, runner-up {:.2}%", sorted[0], sorted[1]))
}

fn c10_payload(q: &Qualitative) -> Outcome {
    let m = &q.mass_family.row_means;
    let decreasing = m.windows(2).all(|w| w[1] < w[0] + 0.5);
    let last = *m.last().unwrap();
    check(decreasing && last < 10.0, format!("e_avg by size 2..6: [{}]", fmt_row(m)))
}

fn c11_correlation(q: &Qualitative) -> Outcome {
    let gap = q.corr_profiles - q.corr_payloads;
    check(
        gap >= 0.2,
        format!("mean|r| s7 across profiles={:.3}, across payloads={:.3}, gap={gap:.3}", q.corr_profiles, q.corr_payloads),
    )
}

fn c12_ablation(q: &Qualitative) -> Outcome {
    let bend3 = q.abl_bend.row_means[0];
    let mass3 = q.abl_mass.iter().find(|(n, _)| *n == 3).unwrap().1;
    let base = q.abl_mass.iter().find(|(n, _)| *n == 7).unwrap().1;
    let fewer_worse = q.abl_mass.iter().filter(|(n, _)| *n < 6).all(|(_, e)| *e > base);
    let shares = q.abl_bend.weights[0].weight_shares(0);
    let tip_max = shares.iter().enumerate().all(|(i, s)| i == 6 || *s < shares[6]);
    let masses: Vec<String> = q.abl_mass.iter().map(|(n, e)| format!("{n}:{e:.2}")).collect();
    check(
        bend3 < mass3 && fewer_worse && tip_max,
        format!(
            "tip-3 bending {bend3:.2}% < payload {mass3:.2}%; payload by sensor count [{}]; s7 share {:.1}%",
            masses.join(" "),
            shares[6]
        ),
    )
}

fn c13_detection(q: &Qualitative) -> Outcome {
    let d = &q.detect.detections()[0];
    let ok = q.detect.evaluation.iter().zip(d).all(|(c, d)| (*d == Detection::Present) == (c.mass_g > 0.0));
    check(ok, format!("window means [{}]", fmt_row(&q.detect.output_means[0])))
}

fn c14_multitask(q: &Qualitative) -> Outcome {
    check(
        q.mt_3x3.1 < q.mt_2x2.1 && q.mt_2x2.0 == 35,
        format!(
            "step-2 mean 3x3={:.2}% < 2x2={:.2}%; 2x2 detection {}/35",
            q.mt_3x3.1, q.mt_2x2.1, q.mt_2x2.0
        ),
    )
}

fn c15_determinism(cfg: &ExperimentConfig, first: &Qualitative) -> Outcome {
    let second = qualitative(cfg);
    let dir = tempfile::tempdir().unwrap();
    for (i, (a, b)) in first.csv.iter().zip(&second.csv).enumerate() {
        let (pa, pb) = (dir.path().join(format!("a{i}.csv")), dir.path().join(format!("b{i}.csv")));
        std::fs::write(&pa, a).unwrap();
        std::fs::write(&pb, b).unwrap();
        if std::fs::read(&pa).unwrap() != std::fs::read(&pb).unwrap() {
            return Err(format!("result file {i} differs"));
        }
    }
    Ok(format!("{} result CSVs byte-identical", first.csv.len()))
}

fn main() {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "readout matches normal-equations oracle", c1_oracle()),
        (2, "multi-task equals column-wise training", c2_multitask_bits()),
        (3, "rmse hand cases", c3_rmse()),
        (4, "ramp profile timing and bounds", c4_profile()),
        (5, "default windowing", c5_windows(&cfg)),
        (6, "echo-state check", c6_echo(&cfg)),
        (7, "export/ingest round trip", c7_round_trip(&cfg)),
    ];
    let q = qualitative(&cfg);
    results.push((8, "bending: two profiles beat one", c8_bending(&q)));
    results.push((9, "bending: {P1,P2} worst pair", c9_pairs(&q)));
    results.push((10, "payload: nested family improves, <10%", c10_payload(&q)));
    results.push((11, "s7 correlation ordering", c11_correlation(&q)));
    results.push((12, "sensor ablation", c12_ablation(&q)));
    results.push((13, "payload detection", c13_detection(&q)));
    results.push((14, "multi-task grid", c14_multitask(&q)));
    results.push((15, "determinism", c15_determinism(&cfg, &q)));

    let mut failed = 0;
    for (n, name, r) in &results {
        match r {
            Ok(d) => println!("criterion {n:>2} PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed in {:.1} s", results.len() - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
