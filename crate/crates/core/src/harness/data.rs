//! Resolving the train/test trajectories a run works on.

use std::path::{Path, PathBuf};

use super::config::Config;
use crate::datagen::{self, SystemKind};
use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load_all(base: &Path, paths: &[PathBuf]) -> Result<Vec<Trajectory>> {
    paths.iter().map(|p| Trajectory::load(resolve(base, p))).collect()
}

/// Hold out the last `test_trajectories` trajectories. A single trajectory is
/// instead split in time at `train_fraction` of its frames.
pub fn split(
    mut trajs: Vec<Trajectory>,
    test_trajectories: usize,
    train_fraction: f64,
) -> Result<(Vec<Trajectory>, Vec<Trajectory>)> {
    if trajs.is_empty() {
        return Err(Error::EmptyDataset("no trajectories to split".into()));
    }
    if trajs.len() == 1 {
        let t = trajs.pop().expect("one trajectory");
        let cut = ((t.frames() as f64) * train_fraction).round() as usize;
        if cut < 2 || cut + 2 > t.frames() {
            return Err(Error::Config(format!(
                "train_fraction {train_fraction} leaves too few frames on one side of {}",
                t.frames()
            )));
        }
        return Ok((vec![t.slice(0, cut)?], vec![t.slice(cut, t.frames())?]));
    }
    let k = test_trajectories.clamp(1, trajs.len() - 1);
    let test = trajs.split_off(trajs.len() - k);
    Ok((trajs, test))
}

/// Train and test sets from `[data]` files, or generated from `[solver]` when
/// no training files are listed.
pub fn datasets(cfg: &Config, base: &Path) -> Result<(Vec<Trajectory>, Vec<Trajectory>)> {
    let data = cfg.data.clone().unwrap_or_default();
    if !data.train.is_empty() {
        let train = load_all(base, &data.train)?;
        if data.test.is_empty() {
            return split(train, data.test_trajectories, data.train_fraction);
        }
        return Ok((train, load_all(base, &data.test)?));
    }
    let solver =
        cfg.solver.as_ref().ok_or_else(|| Error::Config("need [data] train files or a [solver] section".into()))?;
    log::info!("generating {} {} trajectories", solver.trajectories, solver.system);
    split(datagen::generate(solver)?, data.test_trajectories, data.train_fraction)
}

/// Physical system of a run: explicit config first, then field names.
pub fn system_of(cfg: &Config, sample: Option<&Trajectory>) -> Option<SystemKind> {
    cfg.data
        .as_ref()
        .and_then(|d| d.system)
        .or_else(|| cfg.sweep.as_ref().map(|s| s.system))
        .or_else(|| cfg.solver.as_ref().map(|s| s.system))
        .or_else(|| {
            let names: Vec<&str> = sample?.names.iter().map(String::as_str).collect();
            match names.as_slice() {
                ["omega"] => Some(SystemKind::Kolmogorov),
                ["n", "phi"] => Some(SystemKind::HasegawaWakatani),
                _ => None,
            }
        })
}
