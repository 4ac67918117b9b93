//! Minimal deterministic SVG charts. Every number is written with a fixed
//! precision so identical input gives identical bytes.

use std::fmt::Write;
use std::path::PathBuf;

use clap::ValueEnum;

use crate::error::CliError;
use crate::table::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChartKind {
    Timeseries,
    Ecdf,
    MorrisScatter,
    Heatmap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartSpec {
    pub kind: ChartKind,
    pub input: PathBuf,
    pub output: PathBuf,
    pub x_label: Option<String>,
    pub y_label: Option<String>,
    /// Series to draw (timeseries), the sampled column (ecdf) or the cell
    /// value (heatmap).
    pub columns: Vec<String>,
    /// Metric to show in a Morris plot.
    pub metric: Option<String>,
    /// Vertical reference line of an ECDF.
    pub threshold: Option<f64>,
    /// Grid axes of a heatmap.
    pub x: Option<String>,
    pub y: Option<String>,
}

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f"];

pub fn render(spec: &ChartSpec) -> Result<String, CliError> {
    let table = Table::read(&spec.input)?;
    let what = spec.input.display().to_string();
    match spec.kind {
        ChartKind::Timeseries => timeseries(&table, spec, &what),
        ChartKind::Ecdf => ecdf(&table, spec, &what),
        ChartKind::MorrisScatter => morris_scatter(&table, spec, &what),
        ChartKind::Heatmap => heatmap(&table, spec, &what),
    }
}

pub fn write(spec: &ChartSpec) -> Result<(), CliError> {
    let svg = render(spec)?;
    if let Some(dir) = spec.output.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&spec.output, svg)?;
    Ok(())
}

fn px(v: f64) -> String {
    format!("{v:.2}")
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" { "0".into() } else { s.into() }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Data-to-pixel mapping of the plot area.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        Self { x: widen(x), y: widen(y) }
    }

    fn sx(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn sy(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn axes(&self, svg: &mut String, x_label: &str, y_label: &str) {
        let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = writeln!(
            svg,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#000"/>"##,
            px(l),
            px(t),
            px(r - l),
            px(b - t)
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = self.x.0 + f * (self.x.1 - self.x.0);
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            let (xp, yp) = (self.sx(xv), self.sy(yv));
            let _ = writeln!(svg, r##"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#000"/>"##, px(xp), px(b), px(b + 5.0));
            let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{}</text>"#, px(xp), px(b + 18.0), tick(xv));
            let _ = writeln!(svg, r##"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="#000"/>"##, px(l - 5.0), px(yp), px(l));
            let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{}</text>"#, px(l - 8.0), px(yp + 4.0), tick(yv));
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">{}</text>"#,
            px((l + r) / 2.0),
            px(H - 15.0),
            escape(x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{0}" y="{1}" font-size="13" text-anchor="middle" transform="rotate(-90 {0} {1})">{2}</text>"#,
            px(18.0),
            px((t + b) / 2.0),
            escape(y_label)
        );
    }
}

fn widen((lo, hi): (f64, f64)) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 0.5 } else { 0.05 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    vals.filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

fn open() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"#fff\"/>\n"
    )
}

fn close(mut svg: String) -> String {
    svg.push_str("</svg>\n");
    svg
}

fn timeseries(t: &Table, spec: &ChartSpec, what: &str) -> Result<String, CliError> {
    if t.header.len() < 2 {
        return Err(CliError::Config(format!("{what} needs a time column and at least one series")));
    }
    let names: Vec<&str> = if spec.columns.is_empty() {
        t.header[1..].iter().map(String::as_str).collect()
    } else {
        spec.columns.iter().map(String::as_str).collect()
    };
    let idx = t.require(&names, what)?;
    let x = t.floats(0)?;
    let series: Vec<Vec<Option<f64>>> = idx.iter().map(|&j| t.floats(j)).collect::<Result<_, _>>()?;
    let frame = Frame::new(
        range(x.iter().flatten().copied()),
        range(series.iter().flat_map(|s| s.iter().flatten().copied())),
    );
    let mut svg = open();
    frame.axes(&mut svg, spec.x_label.as_deref().unwrap_or(&t.header[0]), spec.y_label.as_deref().unwrap_or("value"));
    for (k, s) in series.iter().enumerate() {
        let mut d = String::new();
        let mut pen_down = false;
        for (xv, yv) in x.iter().zip(s) {
            match (xv, yv) {
                (Some(a), Some(b)) if a.is_finite() && b.is_finite() => {
                    let _ = write!(d, "{}{} {} ", if pen_down { "L" } else { "M" }, px(frame.sx(*a)), px(frame.sy(*b)));
                    pen_down = true;
                }
                _ => pen_down = false,
            }
        }
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"><title>{}</title></path>"#,
            d.trim_end(),
            escape(names[k])
        );
        if k < 12 {
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
                px(LEFT + 8.0),
                px(TOP + 14.0 + 13.0 * k as f64),
                escape(names[k])
            );
        }
    }
    Ok(close(svg))
}

fn ecdf(t: &Table, spec: &ChartSpec, what: &str) -> Result<String, CliError> {
    let [name] = spec.columns.as_slice() else {
        return Err(CliError::Config("ecdf takes exactly one column".into()));
    };
    let j = t.require(&[name.as_str()], what)?[0];
    let mut v: Vec<f64> = t.floats(j)?.into_iter().flatten().filter(|v| v.is_finite()).collect();
    if v.is_empty() {
        return Err(CliError::Config(format!("column `{name}` of {what} has no finite values")));
    }
    v.sort_by(f64::total_cmp);
    let mut xr = (v[0], v[v.len() - 1]);
    if let Some(th) = spec.threshold {
        xr = (xr.0.min(th), xr.1.max(th));
    }
    let frame = Frame::new(xr, (0.0, 1.0));
    let mut svg = open();
    frame.axes(&mut svg, spec.x_label.as_deref().unwrap_or(name), spec.y_label.as_deref().unwrap_or("cumulative probability"));
    let n = v.len() as f64;
    let mut d = format!("M{} {}", px(frame.sx(v[0])), px(frame.sy(0.0)));
    let mut i = 0;
    while i < v.len() {
        let mut k = i;
        while k + 1 < v.len() && v[k + 1] == v[i] {
            k += 1;
        }
        let _ = write!(d, " V{}", px(frame.sy((k + 1) as f64 / n)));
        if k + 1 < v.len() {
            let _ = write!(d, " H{}", px(frame.sx(v[k + 1])));
        }
        i = k + 1;
    }
    let _ = writeln!(svg, r##"<path class="ecdf" d="{d}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>"##);
    if let Some(th) = spec.threshold {
        let _ = writeln!(
            svg,
            r##"<line class="threshold" x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#d62728" stroke-dasharray="4 3"/>"##,
            px(frame.sx(th)),
            px(frame.sy(0.0)),
            px(frame.sy(1.0))
        );
    }
    Ok(close(svg))
}

fn morris_scatter(t: &Table, spec: &ChartSpec, what: &str) -> Result<String, CliError> {
    let idx = t.require(&["parameter", "metric", "mu_star_norm", "sigma_norm"], what)?;
    let (mu, sigma) = (t.floats(idx[2])?, t.floats(idx[3])?);
    let metric = spec.metric.clone().or_else(|| t.rows.first().map(|r| r[idx[1]].clone()));
    let mut pts = Vec::new();
    for (r, row) in t.rows.iter().enumerate() {
        if Some(&row[idx[1]]) != metric.as_ref() {
            continue;
        }
        if let (Some(m), Some(s)) = (mu[r], sigma[r]) {
            if m.is_finite() && s.is_finite() {
                pts.push((row[idx[0]].as_str(), m, s));
            }
        }
    }
    let xmax = pts.iter().map(|p| p.1).fold(1.0, f64::max) * 1.05;
    let ymax = pts.iter().map(|p| p.2).fold(0.1 * xmax, f64::max) * 1.05;
    let frame = Frame::new((0.0, xmax), (0.0, ymax));
    let mut svg = open();
    let title = metric.as_deref().unwrap_or("");
    frame.axes(
        &mut svg,
        spec.x_label.as_deref().unwrap_or("normalized mu*"),
        spec.y_label.as_deref().unwrap_or("normalized sigma"),
    );
    // σ/μ* = 1 (solid) and 0.1 (dashed), clipped to the plot area
    for (slope, dash) in [(1.0, ""), (0.1, r#" stroke-dasharray="6 4""#)] {
        let x2 = xmax.min(ymax / slope);
        let y2 = slope * x2;
        let _ = writeln!(
            svg,
            r##"<line class="guide" data-slope="{}" data-x1="0" data-y1="0" data-x2="{}" data-y2="{}" x1="{}" y1="{}" x2="{}" y2="{}" stroke="#555"{dash}/>"##,
            slope,
            x2,
            y2,
            px(frame.sx(0.0)),
            px(frame.sy(0.0)),
            px(frame.sx(x2)),
            px(frame.sy(y2))
        );
    }
    for (name, m, s) in &pts {
        let _ = writeln!(
            svg,
            r##"<circle cx="{}" cy="{}" r="3.5" fill="#1f77b4"><title>{}</title></circle>"##,
            px(frame.sx(*m)),
            px(frame.sy(*s)),
            escape(name)
        );
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="12">{}</text>"#, px(LEFT + 8.0), px(TOP + 14.0), escape(title));
    Ok(close(svg))
}

fn heatmap(t: &Table, spec: &ChartSpec, what: &str) -> Result<String, CliError> {
    let (Some(xn), Some(yn), [vn]) = (spec.x.as_deref(), spec.y.as_deref(), spec.columns.as_slice()) else {
        return Err(CliError::Config("heatmap needs --x, --y and exactly one value column".into()));
    };
    let idx = t.require(&[xn, yn, vn.as_str()], what)?;
    let (xs, ys, vs) = (t.floats(idx[0])?, t.floats(idx[1])?, t.floats(idx[2])?);
    let distinct = |c: &[Option<f64>]| {
        let mut u: Vec<f64> = c.iter().flatten().copied().collect();
        u.sort_by(f64::total_cmp);
        u.dedup();
        u
    };
    let (ux, uy) = (distinct(&xs), distinct(&ys));
    if ux.is_empty() || uy.is_empty() {
        return Err(CliError::Config(format!("{what} has no grid points")));
    }
    let (lo, hi) = widen(range(vs.iter().flatten().copied()));
    let frame = Frame::new((0.0, ux.len() as f64), (0.0, uy.len() as f64));
    let mut svg = open();
    let (cw, ch) = (frame.sx(1.0) - frame.sx(0.0), frame.sy(0.0) - frame.sy(1.0));
    for r in 0..t.rows.len() {
        let (Some(x), Some(y)) = (xs[r], ys[r]) else { continue };
        let i = ux.iter().position(|&u| u == x).unwrap();
        let k = uy.iter().position(|&u| u == y).unwrap();
        let fill = match vs[r] {
            Some(v) if v.is_finite() => color((v - lo) / (hi - lo)),
            _ => "#cccccc".into(),
        };
        let label = vs[r].map_or("missing".into(), tick);
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}"><title>{}={} {}={} {}={}</title></rect>"#,
            px(frame.sx(i as f64)),
            px(frame.sy((k + 1) as f64)),
            px(cw),
            px(ch),
            escape(xn),
            tick(x),
            escape(yn),
            tick(y),
            escape(vn),
            label
        );
    }
    // axes in grid units, labelled with the first and last grid values
    let _ = writeln!(
        svg,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#000"/>"##,
        px(LEFT),
        px(TOP),
        px(W - LEFT - RIGHT),
        px(H - TOP - BOTTOM)
    );
    let base = H - BOTTOM;
    for (k, v) in [(0usize, ux[0]), (ux.len() - 1, ux[ux.len() - 1])] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{}</text>"#,
            px(frame.sx(k as f64 + 0.5)),
            px(base + 18.0),
            tick(v)
        );
    }
    for (k, v) in [(0usize, uy[0]), (uy.len() - 1, uy[uy.len() - 1])] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{}</text>"#,
            px(LEFT - 8.0),
            px(frame.sy(k as f64 + 0.5) + 4.0),
            tick(v)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">{}</text>"#,
        px((LEFT + W - RIGHT) / 2.0),
        px(H - 15.0),
        escape(spec.x_label.as_deref().unwrap_or(xn))
    );
    let _ = writeln!(
        svg,
        r#"<text x="{0}" y="{1}" font-size="13" text-anchor="middle" transform="rotate(-90 {0} {1})">{2}</text>"#,
        px(18.0),
        px((TOP + H - BOTTOM) / 2.0),
        escape(spec.y_label.as_deref().unwrap_or(yn))
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{}: {} to {}</text>"#,
        px(W - RIGHT),
        px(H - 15.0),
        escape(vn),
        tick(lo),
        tick(hi)
    );
    Ok(close(svg))
}

/// Dark blue to yellow.
fn color(f: f64) -> String {
    let f = if f.is_finite() { f.clamp(0.0, 1.0) } else { 0.0 };
    let lerp = |a: f64, b: f64| (a + (b - a) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(68.0, 253.0), lerp(1.0, 231.0), lerp(84.0, 37.0))
}
