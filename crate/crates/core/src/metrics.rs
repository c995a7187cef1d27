//! Autoregressive rollout, frame-wise relative error and statistical
//! diagnostics (radial spectra, autocorrelation, variance-normalized error).

use std::path::Path;
use std::time::Instant;

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::arch::Model;
use crate::error::{shape_err, Error, Result};
use crate::tensor::{Shape, Tensor};
use crate::trajectory::{FieldStats, Trajectory};

/// Predicted frames plus blow-up bookkeeping.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub trajectory: Trajectory,
    /// Step index (0-based) of the first non-finite prediction, if any.
    /// The trajectory is truncated before it.
    pub blew_up_at: Option<usize>,
    /// Mean wall time of one model evaluation.
    pub seconds_per_step: f64,
}

/// Roll `model` forward `steps` frames from a physical-units `history`
/// trajectory whose last `H_hist` frames seed the window. Normalization uses
/// `stats`; returned frames are de-normalized.
pub fn rollout(model: &Model, history: &Trajectory, steps: usize, stats: &FieldStats) -> Result<Rollout> {
    let [t, m, h, w] = history.dims();
    let cin = model.config().in_channels;
    if !cin.is_multiple_of(m) || model.config().out_channels != m {
        return Err(shape_err(
            "rollout",
            format!("model maps {cin} -> {} channels, trajectory has {m} fields", model.config().out_channels),
        ));
    }
    let hist = cin / m;
    if t < hist {
        return Err(shape_err("rollout", format!("need {hist} history frames, got {t}")));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("rollout needs at least one step".into()));
    }
    let norm = history.slice(t - hist, t)?.normalized(stats);
    let frame = m * h * w;
    let mut window: Vec<f32> = norm.data().to_vec();
    let mut out: Vec<f32> = Vec::with_capacity(steps * frame);
    let mut blew_up_at = None;
    let start = Instant::now();
    let mut evaluated = 0usize;
    for step in 0..steps {
        let x = Tensor::from_vec(Shape::new(1, cin, h, w), window.clone())?;
        let y = model.predict(&x)?;
        evaluated += 1;
        if !y.is_finite() {
            blew_up_at = Some(step);
            break;
        }
        out.extend_from_slice(y.data());
        window.drain(..frame);
        window.extend_from_slice(y.data());
    }
    let seconds_per_step = start.elapsed().as_secs_f64() / evaluated as f64;
    let frames = out.len() / frame;
    if frames == 0 {
        return Err(Error::NonFinite("first rollout step produced non-finite values".into()));
    }
    let mut traj = Trajectory::new([frames, m, h, w], out, history.dt, history.names.clone())?;
    traj.periodic = history.periodic;
    traj = traj.denormalized(stats);
    traj.stats = stats.clone();
    if let Some(s) = blew_up_at {
        log::warn!("rollout blew up at step {s}; truncated to {frames} frames");
    }
    Ok(Rollout { trajectory: traj, blew_up_at, seconds_per_step })
}

/// Mean over fields of `‖pred_k − true_k‖ / ‖true_k‖` for (M, H, W) frames.
pub fn scaled_l2(pred: &[f32], truth: &[f32], fields: usize) -> Result<f64> {
    if pred.len() != truth.len() || fields == 0 || !truth.len().is_multiple_of(fields) {
        return Err(shape_err("scaled_l2", format!("{} vs {} values, {fields} fields", pred.len(), truth.len())));
    }
    let plane = truth.len() / fields;
    let mut total = 0.0;
    for k in 0..fields {
        let p = &pred[k * plane..(k + 1) * plane];
        let t = &truth[k * plane..(k + 1) * plane];
        let num: f64 = p.iter().zip(t).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
        let den: f64 = t.iter().map(|&b| (b as f64).powi(2)).sum();
        if den == 0.0 {
            return Err(Error::DegenerateReference(format!("field {k} has zero norm")));
        }
        total += (num / den).sqrt();
    }
    Ok(total / fields as f64)
}

/// Per-step scaled L2 between two trajectories over their common length.
pub fn scaled_l2_curve(pred: &Trajectory, truth: &Trajectory) -> Result<Vec<f64>> {
    if pred.dims()[1..] != truth.dims()[1..] {
        return Err(shape_err("scaled_l2_curve", format!("{:?} vs {:?}", pred.dims(), truth.dims())));
    }
    let n = pred.frames().min(truth.frames());
    (0..n).map(|t| scaled_l2(pred.frame(t), truth.frame(t), truth.fields())).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub field: String,
    pub k: Vec<f64>,
    pub power: Vec<f64>,
}

/// Power of one real field by integer radial wavenumber `round(|k|)`.
///
/// Stores `|F|^2 / (H W)` of the unnormalized DFT, so the bins sum to the
/// spatial sum of squares. Bins run past Nyquist to the grid corners so no
/// mode is dropped.
pub fn radial_power(field: &[f32], h: usize, w: usize) -> Result<Vec<f64>> {
    if field.len() != h * w || h == 0 || w == 0 {
        return Err(shape_err("radial_power", format!("{} values for {h}x{w}", field.len())));
    }
    let mut planner = FftPlanner::<f64>::new();
    let row = planner.plan_fft_forward(w);
    let col = planner.plan_fft_forward(h);
    let mut buf: Vec<Complex<f64>> = field.iter().map(|&v| Complex::new(v as f64, 0.0)).collect();
    for r in buf.chunks_exact_mut(w) {
        row.process(r);
    }
    let mut column = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = buf[y * w + x];
        }
        col.process(&mut column);
        for y in 0..h {
            buf[y * w + x] = column[y];
        }
    }
    let signed = |i: usize, n: usize| if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
    let kmax = ((h / 2).pow(2) as f64 + (w / 2).pow(2) as f64).sqrt().round() as usize;
    let mut bins = vec![0.0; kmax + 1];
    let norm = (h * w) as f64;
    for y in 0..h {
        let ky = signed(y, h);
        for x in 0..w {
            let kx = signed(x, w);
            let b = (kx * kx + ky * ky).sqrt().round() as usize;
            bins[b] += buf[y * w + x].norm_sqr() / norm;
        }
    }
    Ok(bins)
}

/// Time-averaged radial spectrum of field `k`, over frames `skip..`.
pub fn radial_spectrum(traj: &Trajectory, k: usize, skip: usize) -> Result<Spectrum> {
    if k >= traj.fields() {
        return Err(Error::InvalidArgument(format!("field {k} of {}", traj.fields())));
    }
    if skip >= traj.frames() {
        return Err(Error::InvalidArgument(format!("skip {skip} leaves no frames of {}", traj.frames())));
    }
    if !traj.is_periodic() {
        log::warn!("radial spectrum of a non-periodic field '{}'", traj.names[k]);
    }
    let (h, w) = (traj.height(), traj.width());
    let mut acc: Vec<f64> = Vec::new();
    for t in skip..traj.frames() {
        let p = radial_power(traj.field(t, k), h, w)?;
        if acc.is_empty() {
            acc = p;
        } else {
            acc.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
        }
    }
    let n = (traj.frames() - skip) as f64;
    Ok(Spectrum {
        field: traj.names[k].clone(),
        k: (0..acc.len()).map(|i| i as f64).collect(),
        power: acc.into_iter().map(|v| v / n).collect(),
    })
}

/// Normalized autocorrelation `ρ(τ)` for `τ = 0..=max_lag` (lag 0 is 1).
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n < 2 || max_lag >= n {
        return Err(Error::InvalidArgument(format!("series of length {n} cannot give lag {max_lag}")));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0: f64 = d.iter().map(|v| v * v).sum();
    if c0 == 0.0 {
        return Err(Error::DegenerateReference("zero-variance series".into()));
    }
    Ok((0..=max_lag)
        .map(
            |lag| {
                if lag == 0 {
                    1.0
                } else {
                    d[..n - lag].iter().zip(&d[lag..]).map(|(a, b)| a * b).sum::<f64>() / c0
                }
            },
        )
        .collect())
}

/// Autocorrelation of a per-point field series averaged over the grid points
/// of field `k`; points with zero temporal variance are skipped.
pub fn field_autocorrelation(traj: &Trajectory, k: usize, max_lag: usize, skip: usize) -> Result<Vec<f64>> {
    let plane = traj.height() * traj.width();
    let mut acc = vec![0.0; max_lag + 1];
    let mut used = 0usize;
    let mut series = vec![0.0; traj.frames() - skip.min(traj.frames())];
    for p in 0..plane {
        for (i, t) in (skip..traj.frames()).enumerate() {
            series[i] = traj.field(t, k)[p] as f64;
        }
        match autocorrelation(&series, max_lag) {
            Ok(r) => {
                acc.iter_mut().zip(&r).for_each(|(a, b)| *a += b);
                used += 1;
            }
            Err(Error::DegenerateReference(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::DegenerateReference("every point series is constant".into()));
    }
    Ok(acc.into_iter().map(|v| v / used as f64).collect())
}

/// `mean((y − y_true)^2) / var(y_true)` with the population variance.
pub fn stat_err(y: &[f64], y_true: &[f64]) -> Result<f64> {
    if y.len() != y_true.len() || y.is_empty() {
        return Err(shape_err("stat_err", format!("{} vs {} samples", y.len(), y_true.len())));
    }
    let n = y.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let var = y_true.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(Error::DegenerateReference("reference curve has zero variance".into()));
    }
    let mse = y.iter().zip(y_true).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
    Ok(mse / var)
}

/// Spectrum errors for each field of a statistical comparison, after
/// dropping `skip` transient frames from both trajectories.
pub fn spectrum_errors(pred: &Trajectory, truth: &Trajectory, skip: usize) -> Result<Vec<f64>> {
    if pred.dims()[1..] != truth.dims()[1..] {
        return Err(shape_err("spectrum_errors", format!("{:?} vs {:?}", pred.dims(), truth.dims())));
    }
    (0..truth.fields())
        .map(|k| {
            let a = radial_spectrum(pred, k, skip)?;
            let b = radial_spectrum(truth, k, skip)?;
            stat_err(&a.power, &b.power)
        })
        .collect()
}

/// Write `(x, value)` rows with the given header.
pub fn write_curve_csv(path: impl AsRef<Path>, header: [&str; 2], x: &[f64], y: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for (a, b) in x.iter().zip(y) {
        w.write_record([a.to_string(), b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_spectrum_csv(path: impl AsRef<Path>, s: &Spectrum) -> Result<()> {
    write_curve_csv(path, ["k", "power"], &s.k, &s.power)
}

/// Log-log slope of a spectrum by least squares over bins `lo..=hi`.
pub fn spectral_slope(power: &[f64], lo: usize, hi: usize) -> Result<f64> {
    if lo == 0 || hi >= power.len() || lo >= hi {
        return Err(Error::InvalidArgument(format!("bin range {lo}..={hi} of {}", power.len())));
    }
    let pts: Vec<(f64, f64)> =
        (lo..=hi).filter(|&k| power[k] > 0.0).map(|k| ((k as f64).ln(), power[k].ln())).collect();
    if pts.len() < 2 {
        return Err(Error::DegenerateReference("fewer than two positive bins".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
