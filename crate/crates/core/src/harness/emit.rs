//! Pareto points from records, the front CSV, and a log-log SVG plot.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::config::CostAxis;
use super::pareto::{pareto_indices, ParetoPoint};
use super::records::Record;
use crate::error::{Error, Result};

/// Records that make up curves: the selected ones if any are flagged,
/// otherwise every non-failed record.
pub fn curve_records(records: &[Record]) -> Vec<&Record> {
    let ok = records.iter().filter(|r| !r.failed());
    if records.iter().any(|r| r.selected && !r.failed()) {
        ok.filter(|r| r.selected).collect()
    } else {
        ok.collect()
    }
}

pub fn point_of(r: &Record, axis: CostAxis) -> Option<ParetoPoint> {
    let cost = match axis {
        CostAxis::Train => r.train_s,
        CostAxis::Infer => r.infer_s_per_step,
    };
    let error = r.selection_key()?;
    if !(cost.is_finite() && error.is_finite()) {
        return None;
    }
    Some(ParetoPoint { cost, error, family: r.label(), width: r.width, waves: r.waves, seed: r.seed })
}

/// Points of `records`, grouped by hardware string. Machines are never mixed.
pub fn points_by_hardware(records: &[&Record], axis: CostAxis) -> BTreeMap<String, Vec<ParetoPoint>> {
    let mut out: BTreeMap<String, Vec<ParetoPoint>> = BTreeMap::new();
    for r in records {
        if let Some(p) = point_of(r, axis) {
            out.entry(r.hardware.clone()).or_default().push(p);
        }
    }
    out
}

/// Front of each hardware group, keyed like the input.
pub fn fronts(groups: &BTreeMap<String, Vec<ParetoPoint>>) -> BTreeMap<String, Vec<ParetoPoint>> {
    groups
        .iter()
        .map(|(hw, pts)| {
            let c: Vec<f64> = pts.iter().map(|p| p.cost).collect();
            let e: Vec<f64> = pts.iter().map(|p| p.error).collect();
            (hw.clone(), pareto_indices(&c, &e).into_iter().map(|i| pts[i].clone()).collect())
        })
        .collect()
}

pub fn write_front_csv<W: std::io::Write>(w: W, fronts: &BTreeMap<String, Vec<ParetoPoint>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["hardware_string", "model", "width", "waves", "seed", "cost", "error"])?;
    for (hw, pts) in fronts {
        for p in pts {
            w.write_record([
                hw.clone(),
                p.family.clone(),
                p.width.to_string(),
                p.waves.to_string(),
                p.seed.to_string(),
                p.cost.to_string(),
                p.error.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#7f7f7f"];
const W: f64 = 720.0;
const H: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

pub fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

struct LogAxis {
    lo: f64,
    hi: f64,
}

impl LogAxis {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| *v > 0.0 && v.is_finite()) {
            lo = lo.min(v.log10());
            hi = hi.max(v.log10());
        }
        if !lo.is_finite() {
            return LogAxis { lo: 0.0, hi: 1.0 };
        }
        let pad = ((hi - lo) * 0.05).max(0.05);
        LogAxis { lo: lo - pad, hi: hi + pad }
    }

    fn frac(&self, v: f64) -> f64 {
        (v.log10() - self.lo) / (self.hi - self.lo)
    }

    /// Ticks at 1, 2 and 5 times powers of ten inside the range.
    fn ticks(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for d in (self.lo.floor() as i32)..=(self.hi.ceil() as i32) {
            for m in [1.0, 2.0, 5.0] {
                let v = m * 10f64.powi(d);
                let f = self.frac(v);
                if (0.0..=1.0).contains(&f) {
                    out.push(v);
                }
            }
        }
        out
    }
}

fn tick_label(v: f64) -> String {
    if (1e-3..1e4).contains(&v) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:e}")
    }
}

/// Log-log plot of error against cost: one polyline per model over widths,
/// front points ringed and joined by a dashed step line.
pub fn render_svg(title: &str, axis: CostAxis, points: &[ParetoPoint], front: &[ParetoPoint]) -> String {
    let xa = LogAxis::fit(points.iter().map(|p| p.cost));
    let ya = LogAxis::fit(points.iter().map(|p| p.error));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |v: f64| LEFT + xa.frac(v) * pw;
    let py = |v: f64| TOP + (1.0 - ya.frac(v)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape_xml(title)
    );
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for v in xa.ticks() {
        let x = px(v);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.1}" y1="{TOP}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 16.0,
            tick_label(v)
        );
    }
    for v in ya.ticks() {
        let y = py(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0,
            tick_label(v)
        );
    }
    let xlabel = match axis {
        CostAxis::Train => "training wall time [s]",
        CostAxis::Infer => "inference wall time per step [s]",
    };
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xlabel}</text>"#, LEFT + pw / 2.0, H - 14.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">error</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    let mut curves: BTreeMap<&str, Vec<&ParetoPoint>> = BTreeMap::new();
    for p in points {
        curves.entry(&p.family).or_default().push(p);
    }
    for (i, (name, mut pts)) in curves.into_iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        pts.sort_by_key(|a| (a.width, a.seed));
        let path: Vec<String> = pts.iter().map(|p| format!("{:.1},{:.1}", px(p.cost), py(p.error))).collect();
        let _ =
            writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.join(" "));
        for p in &pts {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3.5" fill="{color}"><title>{} w0={} seed={}</title></circle>"#,
                px(p.cost),
                py(p.error),
                escape_xml(name),
                p.width,
                p.seed
            );
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 14.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape_xml(name)
        );
    }

    if !front.is_empty() {
        let mut step = Vec::new();
        for (i, p) in front.iter().enumerate() {
            if i > 0 {
                step.push(format!("{:.1},{:.1}", px(p.cost), py(front[i - 1].error)));
            }
            step.push(format!("{:.1},{:.1}", px(p.cost), py(p.error)));
        }
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#d62728" stroke-width="1" stroke-dasharray="4 3"/>"##,
            step.join(" ")
        );
        for p in front {
            let _ = writeln!(
                s,
                r##"<circle cx="{:.1}" cy="{:.1}" r="7" fill="none" stroke="#d62728" stroke-width="1.5"/>"##,
                px(p.cost),
                py(p.error)
            );
        }
        let ly = TOP
            + 10.0
            + 18.0 * points.iter().map(|p| &p.family).collect::<std::collections::BTreeSet<_>>().len() as f64;
        let lx = LEFT + pw + 14.0;
        let _ = writeln!(
            s,
            r##"<circle cx="{:.1}" cy="{ly:.1}" r="6" fill="none" stroke="#d62728" stroke-width="1.5"/><text x="{:.1}" y="{:.1}">Pareto front</text>"##,
            lx + 10.0,
            lx + 26.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Write `front.csv` and `pareto.svg` (one SVG per extra machine as
/// `pareto-<n>.svg`) for `records` into `out_dir`. Returns the fronts.
pub fn emit_all(records: &[Record], out_dir: &Path, axis: CostAxis) -> Result<BTreeMap<String, Vec<ParetoPoint>>> {
    if records.is_empty() {
        return Err(Error::EmptyDataset("no records to emit".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let groups = points_by_hardware(&curve_records(records), axis);
    let fr = fronts(&groups);
    write_front_csv(std::fs::File::create(out_dir.join("front.csv"))?, &fr)?;
    let system = records[0].system;
    for (i, (hw, pts)) in groups.iter().enumerate() {
        let name = if i == 0 { "pareto.svg".to_string() } else { format!("pareto-{i}.svg") };
        let svg = render_svg(&format!("{system}: {hw}"), axis, pts, &fr[hw]);
        std::fs::write(out_dir.join(name), svg)?;
    }
    Ok(fr)
}
