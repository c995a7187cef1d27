//! Sweep orchestration: train and evaluate every grid cell, persist raw
//! records as they finish, then select best-of-seeds and emit fronts.

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;

use super::config::{MetricKind, SweepSpec};
use super::records::{self, Record};
use crate::arch::{Family, Model, ModelConfig};
use crate::datagen::SystemKind;
use crate::error::{Error, Result};
use crate::metrics;
use crate::trainer;
use crate::trajectory::{FieldStats, Trajectory};

/// Frames dropped before comparing HW spectra when the config names none.
pub const HW_DEFAULT_DISCARD: usize = 100;

/// CPU model, architecture and thread count of this machine.
pub fn hardware_string() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{cpu} ({}, {threads} threads)", std::env::consts::ARCH)
}

/// Rollout errors of one trained model on held-out trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub err_first: f64,
    pub err_last: f64,
    pub infer_s_per_step: f64,
}

/// Evaluate `model` on each test trajectory.
///
/// `ScaledL2` averages the first- and last-step relative errors over
/// trajectories. `Spectrum` reports the spectrum error of field 0 and of the
/// last field after dropping `discard` leading rollout frames. A rollout that
/// blows up is an error.
pub fn evaluate(
    model: &Model,
    test: &[Trajectory],
    stats: &FieldStats,
    steps: usize,
    metric: MetricKind,
    discard: usize,
) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::EmptyDataset("no test trajectories".into()));
    }
    let m = model.config().out_channels;
    let hist = model.config().in_channels / m;
    let (mut first, mut last, mut secs) = (0.0, 0.0, 0.0);
    for traj in test {
        if traj.frames() <= hist {
            return Err(Error::EmptyDataset(format!("test trajectory has {} frames, need > {hist}", traj.frames())));
        }
        let n = steps.min(traj.frames() - hist);
        let truth = traj.slice(hist, hist + n)?;
        let r = metrics::rollout(model, &traj.slice(0, hist)?, n, stats)?;
        if let Some(s) = r.blew_up_at {
            return Err(Error::NonFinite(format!("rollout blew up at step {s}")));
        }
        secs += r.seconds_per_step;
        match metric {
            MetricKind::ScaledL2 => {
                let curve = metrics::scaled_l2_curve(&r.trajectory, &truth)?;
                first += curve[0];
                last += curve[curve.len() - 1];
            }
            MetricKind::Spectrum => {
                let skip = discard.min(n.saturating_sub(1) / 2);
                let e = metrics::spectrum_errors(&r.trajectory, &truth, skip)?;
                first += e[0];
                last += e[e.len() - 1];
            }
        }
    }
    let k = test.len() as f64;
    Ok(Evaluation { err_first: first / k, err_last: last / k, infer_s_per_step: secs / k })
}

/// Train and evaluate one cell. Training or rollout failures become a
/// failed record rather than an error.
pub fn run_cell(
    spec: &SweepSpec,
    cell: (Family, usize, usize, u64),
    train: &[Trajectory],
    test: &[Trajectory],
    hardware: &str,
) -> Result<Record> {
    let (family, width, waves, seed) = cell;
    let m = train.first().ok_or_else(|| Error::EmptyDataset("no training trajectories".into()))?.fields();
    let mut mc =
        ModelConfig::new(family, width, spec.train.history * m, m).with_levels(spec.levels).with_padding(spec.padding);
    if family.is_multi_wave() {
        mc = mc.with_waves(waves);
    }
    let mut model = Model::build(mc, seed)?;
    let mut rec = Record {
        system: spec.system,
        family,
        width,
        waves: mc.waves,
        seed,
        params: model.param_count(),
        train_s: f64::NAN,
        infer_s_per_step: f64::NAN,
        err_first: None,
        err_last: None,
        selected: false,
        hardware: hardware.to_string(),
    };
    let tc = spec.train.to_config(seed, Some(spec.system));
    let run = match trainer::train(&mut model, train, &tc) {
        Ok(r) => r,
        Err(e @ Error::NonFinite(_)) => {
            log::warn!("{} w0={width} seed={seed}: training failed: {e}", mc.label());
            return Ok(rec);
        }
        Err(e) => return Err(e),
    };
    rec.train_s = run.train_wall_seconds;
    let discard = spec.rollout.discard.unwrap_or(match spec.system {
        SystemKind::HasegawaWakatani => HW_DEFAULT_DISCARD,
        SystemKind::Kolmogorov => 0,
    });
    match evaluate(&model, test, &run.norm, spec.rollout.steps, spec.metric, discard) {
        Ok(ev) => {
            rec.infer_s_per_step = ev.infer_s_per_step;
            if ev.err_first.is_finite() && ev.err_last.is_finite() {
                rec.err_first = Some(ev.err_first);
                rec.err_last = Some(ev.err_last);
            }
        }
        Err(e @ (Error::NonFinite(_) | Error::DegenerateReference(_))) => {
            log::warn!("{} w0={width} seed={seed}: evaluation failed: {e}", mc.label());
        }
        Err(e) => return Err(e),
    }
    log::info!(
        "{} w0={width} seed={seed}: params {} train {:.2}s err_last {}",
        mc.label(),
        rec.params,
        rec.train_s,
        rec.err_last.map_or("failed".into(), |v| format!("{v:.4e}"))
    );
    Ok(rec)
}

pub fn records_path(out_dir: &Path) -> PathBuf {
    out_dir.join("records.csv")
}

/// Run every cell of `spec` not already recorded in `out_dir/records.csv`.
/// Returns all records (old and new), sorted, with best-of-seeds flags.
pub fn run_sweep(
    spec: &SweepSpec,
    train: &[Trajectory],
    test: &[Trajectory],
    out_dir: &Path,
    hardware: &str,
) -> Result<Vec<Record>> {
    spec.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset("no training trajectories".into()));
    }
    if test.is_empty() {
        return Err(Error::EmptyDataset("no test trajectories".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let path = records_path(out_dir);
    let existing = if path.exists() { records::load_csv(&path)? } else { Vec::new() };
    let done: HashSet<_> = existing.iter().map(Record::run_key).collect();
    let todo: Vec<_> = spec
        .cells()
        .into_iter()
        .filter(|&(f, w, k, s)| {
            let waves = if f.is_multi_wave() { k } else { 1 };
            !done.contains(&((spec.system, f, w, waves, hardware.to_string()), s))
        })
        .collect();
    log::info!("sweep: {} cells, {} already recorded", todo.len() + done.len(), done.len());

    // Rewrite the file in canonical form, then append rows as cells finish.
    let mut all = existing;
    records::save_csv(&path, &all)?;
    let sink = Mutex::new(
        csv::WriterBuilder::new().has_headers(false).from_writer(OpenOptions::new().append(true).open(&path)?),
    );
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let fresh: Vec<Record> = pool.install(|| {
        todo.par_iter()
            .map(|&cell| {
                let rec = run_cell(spec, cell, train, test, hardware)?;
                let mut w = sink.lock().expect("records writer poisoned");
                records::append_row(&mut w, &rec)?;
                Ok(rec)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    drop(sink);
    all.extend(fresh);
    records::sort_records(&mut all);
    records::select_best(&mut all);
    records::save_csv(&path, &all)?;
    Ok(all)
}
