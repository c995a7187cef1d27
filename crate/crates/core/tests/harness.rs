use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use dwnet::arch::Family;
use dwnet::datagen::{generate, SolverConfig, SystemKind};
use dwnet::harness::config::{RolloutSection, SweepSection, TrainSection};
use dwnet::harness::records::{load_csv, read_csv, save_csv, select_best, write_csv};
use dwnet::harness::{emit, pareto_front, pareto_indices, run_sweep, CostAxis, ParetoPoint, Record, SweepSpec};
use proptest::prelude::*;

/// O(n²) dominance filter, kept separate from the library's sweep.
fn brute_front(cost: &[f64], error: &[f64]) -> Vec<usize> {
    let n = cost.len();
    let mut keep: Vec<usize> = (0..n)
        .filter(|&i| {
            !(0..n).any(|j| cost[j] <= cost[i] && error[j] <= error[i] && (cost[j] < cost[i] || error[j] < error[i]))
        })
        .collect();
    keep.sort_by(|&a, &b| cost[a].total_cmp(&cost[b]).then(error[a].total_cmp(&error[b])).then(a.cmp(&b)));
    keep
}

fn coarse() -> impl Strategy<Value = f64> {
    // Few distinct values so ties on either axis are common.
    (1u32..40).prop_map(|v| v as f64 * 0.25)
}

proptest! {
    #[test]
    fn front_matches_brute_force(pts in prop::collection::vec((coarse(), coarse()), 1..120)) {
        let (c, e): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        prop_assert_eq!(pareto_indices(&c, &e), brute_front(&c, &e));
    }

    #[test]
    fn adding_a_dominated_point_changes_nothing(
        pts in prop::collection::vec((coarse(), coarse()), 1..60), pick in any::<prop::sample::Index>(),
        dc in 0.0f64..2.0, de in 0.01f64..2.0,
    ) {
        let points: Vec<ParetoPoint> = pts.iter().map(|&(c, e)| ParetoPoint::new(c, e)).collect();
        let front = pareto_front(&points);
        let base = pick.get(&points);
        let mut more = points.clone();
        more.push(ParetoPoint::new(base.cost + dc, base.error + de));
        prop_assert_eq!(pareto_front(&more), front);
    }

    #[test]
    fn adding_a_dominating_point_evicts(
        pts in prop::collection::vec((coarse(), coarse()), 1..60), pick in any::<prop::sample::Index>(),
    ) {
        let points: Vec<ParetoPoint> = pts.iter().map(|&(c, e)| ParetoPoint::new(c, e)).collect();
        let front = pareto_front(&points);
        let victim = pick.get(&front).clone();
        let mut more = points.clone();
        more.push(ParetoPoint::new(victim.cost - 0.1, victim.error - 0.1));
        let new_front = pareto_front(&more);
        prop_assert!(!new_front.contains(&victim));
        prop_assert!(new_front.iter().all(|p| points.contains(p) || (p.cost == victim.cost - 0.1)));
    }

    #[test]
    fn csv_rows_round_trip(records in prop::collection::vec(record(), 0..12)) {
        let mut a = Vec::new();
        write_csv(&mut a, &records).unwrap();
        let back = read_csv(a.as_slice()).unwrap();
        prop_assert_eq!(&back, &records);
        let mut b = Vec::new();
        write_csv(&mut b, &back).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn best_of_seeds_picks_the_cell_minimum(records in prop::collection::vec(record(), 1..30)) {
        let mut recs = records;
        select_best(&mut recs);
        let mut best: BTreeMap<_, f64> = BTreeMap::new();
        for r in &recs {
            if let Some(k) = r.selection_key() {
                let e = best.entry(r.cell()).or_insert(f64::INFINITY);
                *e = e.min(k);
            }
        }
        for (cell, min) in &best {
            let chosen: Vec<&Record> = recs.iter().filter(|r| &r.cell() == cell && r.selected).collect();
            prop_assert_eq!(chosen.len(), 1);
            prop_assert_eq!(chosen[0].selection_key(), Some(*min));
        }
        prop_assert!(recs.iter().filter(|r| r.failed()).all(|r| !r.selected));
    }
}

fn record() -> impl Strategy<Value = Record> {
    let err = prop_oneof![1 => Just(None), 4 => (0.0f64..10.0).prop_map(Some)];
    (
        prop_oneof![Just(SystemKind::Kolmogorov), Just(SystemKind::HasegawaWakatani)],
        prop::sample::select(Family::ALL.to_vec()),
        prop::sample::select(vec![4usize, 8]),
        0u64..3,
        (1usize..100_000, 0.001f64..1e3, 1e-6f64..1.0),
        (err.clone(), err),
        prop::sample::select(vec!["cpu a".to_string(), "x86, \"quoted\"".to_string()]),
    )
        .prop_map(|(system, family, width, seed, (params, train_s, infer), errs, hardware)| Record {
            system,
            family,
            width,
            waves: if family.is_multi_wave() { family.default_waves() } else { 1 },
            seed: 2 + 10 * seed,
            params,
            train_s,
            infer_s_per_step: infer,
            err_first: errs.0.and(errs.1).and(errs.0),
            err_last: errs.0.and(errs.1),
            selected: false,
            hardware,
        })
}

fn tiny_spec() -> SweepSpec {
    let sweep: SweepSection = toml::from_str(
        r#"
system = "kolmogorov"
families = ["unet_base", "dwnet"]
widths = [4, 8]
waves = { dwnet = [2] }
levels = 3
workers = 2
"#,
    )
    .unwrap();
    let train: TrainSection = toml::from_str("epochs = 2\nbatch_size = 4\n").unwrap();
    let rollout = RolloutSection { steps: 3, discard: None };
    SweepSpec::from_sections(&sweep, &train, &rollout).unwrap()
}

fn tiny_data() -> (Vec<dwnet::trajectory::Trajectory>, Vec<dwnet::trajectory::Trajectory>) {
    let mut cfg = SolverConfig::new(SystemKind::Kolmogorov, 16, 8);
    cfg.warmup_frames = 4;
    cfg.trajectories = 2;
    let mut t = generate(&cfg).unwrap();
    let test = t.split_off(1);
    (t, test)
}

#[test]
fn sweep_counts_records_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny_spec();
    let (train, test) = tiny_data();
    let all = run_sweep(&spec, &train, &test, dir.path(), "test machine").unwrap();
    assert_eq!(all.len(), 12);
    assert_eq!(all.iter().filter(|r| r.selected).count(), 4);
    let on_disk = load_csv(dir.path().join("records.csv")).unwrap();
    assert_eq!(on_disk, all);

    // Drop a few rows and resume: only those cells are trained again.
    let kept: Vec<Record> = all.iter().filter(|r| r.seed != 22).cloned().collect();
    save_csv(dir.path().join("records.csv"), &kept).unwrap();
    let again = run_sweep(&spec, &train, &test, dir.path(), "test machine").unwrap();
    assert_eq!(again.len(), 12);
    for r in &kept {
        let same = again.iter().find(|a| a.run_key() == r.run_key()).unwrap();
        assert_eq!(same.train_s, r.train_s);
    }

    let text = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
    assert_eq!(text.lines().count(), 13);

    let out = dir.path().join("plots");
    let fronts = emit::emit_all(&again, &out, CostAxis::Train).unwrap();
    let svg = std::fs::read_to_string(out.join("pareto.svg")).unwrap();
    roxmltree::Document::parse(&svg).unwrap();
    let front_csv = std::fs::read_to_string(out.join("front.csv")).unwrap();
    assert_eq!(front_csv.lines().count(), 1 + fronts["test machine"].len());
    emit::emit_all(&again, &dir.path().join("plots2"), CostAxis::Train).unwrap();
    assert_eq!(svg, std::fs::read_to_string(dir.path().join("plots2/pareto.svg")).unwrap());
}

fn rec(family: Family, width: usize, train_s: f64, err: Option<f64>, hw: &str) -> Record {
    Record {
        system: SystemKind::Kolmogorov,
        family,
        width,
        waves: if family.is_multi_wave() { 3 } else { 1 },
        seed: 2,
        params: 100 * width,
        train_s,
        infer_s_per_step: 0.01,
        err_first: err.map(|e| e / 2.0),
        err_last: err,
        selected: true,
        hardware: hw.into(),
    }
}

#[test]
fn fronts_skip_failed_cells_and_never_mix_machines() {
    let recs = vec![
        rec(Family::UNetBase, 4, 1.0, Some(0.5), "a"),
        rec(Family::UNetBase, 8, 2.0, None, "a"),
        rec(Family::DWNet, 4, 0.5, Some(0.9), "b"),
        rec(Family::DWNet, 8, 3.0, Some(0.1), "a"),
    ];
    let dir = tempfile::tempdir().unwrap();
    let fronts = emit::emit_all(&recs, dir.path(), CostAxis::Train).unwrap();
    assert_eq!(fronts.len(), 2);
    assert_eq!(fronts["a"].len(), 2);
    assert_eq!(fronts["b"].len(), 1);
    for name in ["pareto.svg", "pareto-1.svg"] {
        roxmltree::Document::parse(&std::fs::read_to_string(dir.path().join(name)).unwrap()).unwrap();
    }
}

fn dwnet_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dwnet"))
}

fn write_records(path: &Path, recs: &[Record]) {
    save_csv(path, recs).unwrap();
}

#[test]
fn cli_pareto_prints_the_single_front_point() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("records.csv");
    write_records(
        &csv,
        &[rec(Family::UNetBase, 4, 1.0, Some(1.0), "m"), rec(Family::UNetBase, 8, 2.0, Some(2.0), "m")],
    );
    let out = dwnet_bin().arg("--out-dir").arg(dir.path().join("o")).arg("pareto").arg(&csv).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let points: Vec<&str> = stdout.lines().filter(|l| l.contains("cost")).collect();
    assert_eq!(points.len(), 1, "{stdout}");
    assert!(points[0].contains("w0=4"));
}

#[test]
fn cli_usage_errors_exit_one() {
    let out = dwnet_bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    let out = dwnet_bin().arg("sweep").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = dwnet_bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn cli_runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dwnet_bin().arg("pareto").arg(dir.path().join("missing.csv")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cli_gradcheck_passes() {
    let out = dwnet_bin().args(["gradcheck", "--instances", "5"]).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn cli_sweep_emits_four_curve_points() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mini.toml");
    std::fs::write(
        &cfg,
        r#"
[solver]
system = "kolmogorov"
grid = 64
frames = 12
warmup_frames = 8
trajectories = 2
seed = 1

[train]
epochs = 8
batch_size = 4

[rollout]
steps = 4

[sweep]
system = "kolmogorov"
families = ["dwnet", "unet_base"]
widths = [4, 8]
workers = 2
"#,
    )
    .unwrap();
    let out = dwnet_bin()
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path().join("out"))
        .args(["--seed", "2", "sweep"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let recs = load_csv(dir.path().join("out/records.csv")).unwrap();
    assert_eq!(recs.len(), 4);
    assert_eq!(recs.iter().filter(|r| r.selected).count(), 4);
    assert!(dir.path().join("out/pareto.svg").exists());
}
