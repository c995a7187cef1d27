use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dwnet::arch::{Checkpoint, Family, Model};
use dwnet::datagen;
use dwnet::error::{Error, Result};
use dwnet::gradcheck;
use dwnet::harness::config::{Config, CostAxis, SweepSpec, TrainSection};
use dwnet::harness::{data, emit, records, sweep};
use dwnet::metrics;
use dwnet::trainer;
use dwnet::trajectory::Trajectory;

#[derive(Parser, Debug)]
#[command(
    name = "dwnet",
    version,
    about = "Multi-wave U-Net surrogates for 2D PDE data: generate, train, evaluate, sweep"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the config (solver, training, or sweep seeds)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (data generation and sweep cells)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Use inference time per step instead of training time as the cost axis
    #[arg(long, global = true)]
    infer_cost: bool,
    /// Log more (-v debug, -vv trace)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate trajectories from the [solver] section
    GenData,
    /// Convert a (T, M, H, W) .npy array into a trajectory file
    Import {
        input: PathBuf,
        /// Time between frames
        #[arg(long)]
        dt: f64,
        /// Comma-separated field names
        #[arg(long, value_delimiter = ',')]
        names: Option<Vec<String>>,
        /// Mark the grid as non-periodic
        #[arg(long)]
        non_periodic: bool,
    },
    /// Train one model from [model], [train] and [data]
    Train,
    /// Roll a checkpoint forward from the start of a trajectory
    Rollout {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 16)]
        steps: usize,
        /// First frame of the history window
        #[arg(long, default_value_t = 0)]
        start: usize,
    },
    /// Rollout error of a checkpoint against reference trajectories
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(required = true)]
        data: Vec<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        /// Leading rollout frames dropped from spectra
        #[arg(long, default_value_t = 0)]
        discard: usize,
    },
    /// Finite-difference check of every operator and of a DW-Net-3
    Gradcheck {
        #[arg(long, default_value_t = 5)]
        instances: usize,
    },
    /// Train and evaluate the [sweep] grid; resumes from existing records
    Sweep,
    /// Pareto front of a records CSV
    Pareto { records: PathBuf },
    /// Sweep over wave counts of SineNet and DW-Net
    AblateWaves {
        /// Wave counts for SineNet
        #[arg(long, value_delimiter = ',', default_value = "2,4")]
        sinenet: Vec<usize>,
        /// Wave counts for DW-Net
        #[arg(long, value_delimiter = ',', default_value = "3,5")]
        dwnet: Vec<usize>,
    },
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.global.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.cmd {
        Cmd::GenData => gen_data(g),
        Cmd::Import { input, dt, names, non_periodic } => import(g, &input, dt, names, non_periodic),
        Cmd::Train => train(g),
        Cmd::Rollout { checkpoint, input, steps, start } => rollout(g, &checkpoint, &input, steps, start),
        Cmd::Eval { checkpoint, data, steps, discard } => eval(g, &checkpoint, &data, steps, discard),
        Cmd::Gradcheck { instances } => gradcheck_cmd(g, instances),
        Cmd::Sweep => sweep_cmd(g, None),
        Cmd::Pareto { records } => pareto(g, &records),
        Cmd::AblateWaves { sinenet, dwnet } => {
            let grid = BTreeMap::from([(Family::SineNet, sinenet), (Family::DWNet, dwnet)]);
            sweep_cmd(g, Some(grid))
        }
    }
}

fn load_config(g: &Global) -> CliResult<(Config, PathBuf)> {
    let path = g.config.as_ref().ok_or_else(|| Failure::Usage("this subcommand needs --config <path>".into()))?;
    Ok(Config::load(path)?)
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> CliResult<&'a T> {
    s.as_ref().ok_or_else(|| Failure::Runtime(Error::Config(format!("config has no [{name}] section"))))
}

fn gen_data(g: &Global) -> CliResult<()> {
    let (cfg, _) = load_config(g)?;
    let mut solver = section(&cfg.solver, "solver")?.clone();
    if let Some(s) = g.seed {
        solver.seed = s;
    }
    std::fs::create_dir_all(&g.out_dir).map_err(Error::from)?;
    let trajs = datagen::generate(&solver)?;
    for (i, t) in trajs.iter().enumerate() {
        let path = g.out_dir.join(format!("{}_{}.dwtrj", solver.system, solver.seed + i as u64));
        t.save(&path)?;
        println!("{} ({} frames of {}x{})", path.display(), t.frames(), t.height(), t.width());
    }
    Ok(())
}

fn import(g: &Global, input: &Path, dt: f64, names: Option<Vec<String>>, non_periodic: bool) -> CliResult<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Failure::Usage(format!("--dt must be positive, got {dt}")));
    }
    let mut t = Trajectory::import_npy(input, dt, names)?;
    if non_periodic {
        t.periodic = [false, false];
    }
    std::fs::create_dir_all(&g.out_dir).map_err(Error::from)?;
    let stem = input.file_stem().map_or("imported".into(), |s| s.to_string_lossy().into_owned());
    let path = g.out_dir.join(format!("{stem}.dwtrj"));
    t.save(&path)?;
    println!("{} {:?}", path.display(), t.dims());
    Ok(())
}

fn train(g: &Global) -> CliResult<()> {
    let (cfg, base) = load_config(g)?;
    let ms = section(&cfg.model, "model")?;
    let ts = section(&cfg.train, "train")?;
    let (train_set, _) = data::datasets(&cfg, &base)?;
    let system = data::system_of(&cfg, train_set.first());
    let seed = g.seed.or(ts.seed).unwrap_or(2);
    let m = train_set[0].fields();
    let mut model = Model::build(ms.to_config(ts.history * m, m), seed)?;
    let tc = ts.to_config(seed, system);
    log::info!("training {} ({} parameters), {} epochs", model.config().label(), model.param_count(), tc.epochs);
    let (rec, adam) = trainer::train_with_state(&mut model, &train_set, &tc, None)?;
    std::fs::create_dir_all(&g.out_dir).map_err(Error::from)?;
    let ckpt = g.out_dir.join("model.ckpt");
    Checkpoint { model, adam: Some(adam), norm: Some(rec.norm.clone()) }.save(&ckpt)?;
    let steps: Vec<f64> = (0..rec.step_losses.len()).map(|i| i as f64).collect();
    metrics::write_curve_csv(g.out_dir.join("loss.csv"), ["step", "loss"], &steps, &rec.step_losses)?;
    println!(
        "{}: {} params, {} steps in {:.2}s, final loss {:.4e} -> {}",
        rec.label,
        rec.params,
        rec.steps,
        rec.train_wall_seconds,
        rec.final_loss,
        ckpt.display()
    );
    Ok(())
}

fn load_checkpoint(path: &Path, fields: usize) -> CliResult<(Model, dwnet::trajectory::FieldStats)> {
    let ck = Checkpoint::load(path)?;
    let norm = ck.norm.unwrap_or_else(|| dwnet::trajectory::FieldStats::identity(fields));
    Ok((ck.model, norm))
}

fn rollout(g: &Global, ckpt: &Path, input: &Path, steps: usize, start: usize) -> CliResult<()> {
    let traj = Trajectory::load(input)?;
    let (model, norm) = load_checkpoint(ckpt, traj.fields())?;
    let hist = model.config().in_channels / traj.fields().max(1);
    if start + hist > traj.frames() {
        return Err(Failure::Usage(format!("--start {start} leaves fewer than {hist} history frames")));
    }
    let r = metrics::rollout(&model, &traj.slice(start, start + hist)?, steps, &norm)?;
    std::fs::create_dir_all(&g.out_dir).map_err(Error::from)?;
    let path = g.out_dir.join("rollout.dwtrj");
    r.trajectory.save(&path)?;
    println!(
        "{} frames -> {} ({:.3e} s/step{})",
        r.trajectory.frames(),
        path.display(),
        r.seconds_per_step,
        r.blew_up_at.map_or(String::new(), |s| format!(", blew up at step {s}"))
    );
    Ok(())
}

fn eval(g: &Global, ckpt: &Path, paths: &[PathBuf], steps: Option<usize>, discard: usize) -> CliResult<()> {
    let trajs: Vec<Trajectory> = paths.iter().map(Trajectory::load).collect::<Result<_>>()?;
    let (model, norm) = load_checkpoint(ckpt, trajs[0].fields())?;
    let hist = model.config().in_channels / trajs[0].fields().max(1);
    std::fs::create_dir_all(&g.out_dir).map_err(Error::from)?;
    for (i, t) in trajs.iter().enumerate() {
        if t.frames() <= hist {
            return Err(Failure::Runtime(Error::EmptyDataset(format!("{} has too few frames", paths[i].display()))));
        }
        let n = steps.unwrap_or(t.frames() - hist).min(t.frames() - hist);
        let truth = t.slice(hist, hist + n)?;
        let r = metrics::rollout(&model, &t.slice(0, hist)?, n, &norm)?;
        let curve = metrics::scaled_l2_curve(&r.trajectory, &truth)?;
        let x: Vec<f64> = (1..=curve.len()).map(|s| s as f64).collect();
        metrics::write_curve_csv(g.out_dir.join(format!("error_{i}.csv")), ["step", "scaled_l2"], &x, &curve)?;
        println!(
            "{}: {} steps, err_first {:.4e}, err_last {:.4e}{}",
            paths[i].display(),
            curve.len(),
            curve[0],
            curve[curve.len() - 1],
            r.blew_up_at.map_or(String::new(), |s| format!(" (blew up at step {s})"))
        );
        let skip = discard.min(r.trajectory.frames().saturating_sub(1));
        let truth = truth.slice(0, r.trajectory.frames())?;
        if let Ok(errs) = metrics::spectrum_errors(&r.trajectory, &truth, skip) {
            for (k, e) in errs.iter().enumerate() {
                println!("  spectrum error {}: {e:.4e}", truth.names[k]);
                let s = metrics::radial_spectrum(&r.trajectory, k, skip)?;
                metrics::write_spectrum_csv(g.out_dir.join(format!("spectrum_{i}_{}.csv", truth.names[k])), &s)?;
            }
        }
    }
    Ok(())
}

fn gradcheck_cmd(g: &Global, instances: usize) -> CliResult<()> {
    let seed = g.seed.unwrap_or(0);
    let mut ok = true;
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    for r in gradcheck::run_operator_suite(instances.max(1), seed)? {
        let w = worst.entry(r.name).or_insert(0.0);
        *w = w.max(r.rel_err);
    }
    for (name, err) in &worst {
        let pass = *err < 1e-3;
        ok &= pass;
        println!("{} {name}: max rel err {err:.2e}", if pass { "PASS" } else { "FAIL" });
    }
    let adj = (0..20).map(|i| gradcheck::adjoint_mismatch(seed + i)).collect::<Result<Vec<_>>>()?;
    let adj = adj.into_iter().fold(0.0, f64::max);
    ok &= adj < 1e-5;
    println!("{} conv_transpose2d adjoint: max mismatch {adj:.2e}", if adj < 1e-5 { "PASS" } else { "FAIL" });
    let spot = gradcheck::dwnet_spot_check(5, seed)?;
    let err = spot.iter().map(|s| s.2).fold(0.0, f64::max);
    ok &= err < 1e-2;
    println!("{} DW-Net-3 parameter spot check: max rel err {err:.2e}", if err < 1e-2 { "PASS" } else { "FAIL" });
    if ok {
        Ok(())
    } else {
        Err(Failure::Runtime(Error::InvalidArgument("gradient check failed".into())))
    }
}

fn sweep_cmd(g: &Global, ablation: Option<BTreeMap<Family, Vec<usize>>>) -> CliResult<()> {
    let (cfg, base) = load_config(g)?;
    let ss = section(&cfg.sweep, "sweep")?;
    let ts: &TrainSection = section(&cfg.train, "train")?;
    let rs = cfg.rollout.clone().unwrap_or_default();
    let mut spec = SweepSpec::from_sections(ss, ts, &rs)?;
    if let Some(s) = g.seed {
        spec.seeds = vec![s];
    }
    if let Some(n) = g.threads {
        spec.workers = n;
    }
    if g.infer_cost {
        spec.cost = CostAxis::Infer;
    }
    let out_dir = match ablation {
        Some(grid) => {
            spec.families = grid.keys().copied().collect();
            spec.waves = grid;
            spec.validate()?;
            g.out_dir.join("ablation")
        }
        None => g.out_dir.clone(),
    };
    let (train_set, test_set) = data::datasets(&cfg, &base)?;
    let hw = sweep::hardware_string();
    let recs = sweep::run_sweep(&spec, &train_set, &test_set, &out_dir, &hw)?;
    let fronts = emit::emit_all(&recs, &out_dir, spec.cost)?;
    let failed = recs.iter().filter(|r| r.failed()).count();
    println!("{} records ({failed} failed) in {}", recs.len(), sweep::records_path(&out_dir).display());
    print_fronts(&fronts);
    Ok(())
}

fn print_fronts(fronts: &BTreeMap<String, Vec<dwnet::harness::ParetoPoint>>) {
    for (hw, pts) in fronts {
        println!("front on {hw}:");
        for p in pts {
            println!(
                "  {:<12} w0={:<3} seed={:<3} cost {:.4e} error {:.4e}",
                p.family, p.width, p.seed, p.cost, p.error
            );
        }
    }
}

fn pareto(g: &Global, path: &Path) -> CliResult<()> {
    let recs = records::load_csv(path)?;
    if recs.is_empty() {
        return Err(Failure::Runtime(Error::EmptyDataset(format!("{} has no records", path.display()))));
    }
    let axis = if g.infer_cost { CostAxis::Infer } else { CostAxis::Train };
    let fronts = emit::emit_all(&recs, &g.out_dir, axis)?;
    print_fronts(&fronts);
    Ok(())
}
