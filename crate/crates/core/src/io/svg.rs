//! Minimal static SVG line charts.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// A named curve made of one or more disjoint pieces (one per phase when
/// the curve jumps at switchings).
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub pieces: Vec<Vec<(f64, f64)>>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            pieces: vec![points],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseBand {
    pub start: f64,
    pub end: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub width: f64,
    pub height: f64,
    pub bands: Vec<PhaseBand>,
    /// Dashed vertical lines (switching times).
    pub markers: Vec<f64>,
    /// Highlighted points, drawn as stars.
    pub stars: Vec<(f64, f64)>,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self {
            title: String::new(),
            x_label: "t (days)".into(),
            y_label: String::new(),
            width: 760.0,
            height: 440.0,
            bands: Vec::new(),
            markers: Vec::new(),
            stars: Vec::new(),
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const BAND_FILL: [&str; 3] = ["#f2f2f2", "#e6eef7", "#f7efe6"];

const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn num(x: f64) -> String {
    let r = (x * 100.0).round() / 100.0;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Tick positions at 1, 2 or 5 times a power of ten.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= target as f64)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    let r = crate::io::export::round_sig(v);
    if r.abs() < 1e-12 {
        "0".into()
    } else {
        let s = format!("{:.6}", r);
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    }
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((a, b)) => Some((a.min(v), b.max(v))),
    })
}

/// Renders the series as a self-contained SVG document. Identical input
/// gives byte-identical output.
pub fn emit_svg(series: &[Series], style: &PlotStyle) -> Result<String> {
    if series.is_empty() || series.iter().any(|s| s.pieces.iter().all(Vec::is_empty)) {
        return Err(Error::InvalidInput("cannot plot an empty series".into()));
    }
    for s in series {
        for piece in &s.pieces {
            if piece.windows(2).any(|w| !(w[1].0 >= w[0].0)) {
                return Err(Error::InvalidInput(format!(
                    "series {} has non-ascending abscissae",
                    s.name
                )));
            }
            if piece.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "series {} has non-finite points",
                    s.name
                )));
            }
        }
    }
    let points = || series.iter().flat_map(|s| s.pieces.iter().flatten());
    let (mut x0, mut x1) = range(points().map(|p| p.0)).expect("nonempty");
    let (mut y0, mut y1) =
        range(points().map(|p| p.1).chain(style.stars.iter().map(|p| p.1))).expect("nonempty");
    for b in &style.bands {
        x0 = x0.min(b.start);
        x1 = x1.max(b.end);
    }
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 <= y0 {
        let pad = if y0 == 0.0 { 1.0 } else { 0.1 * y0.abs() };
        y0 -= pad;
        y1 += pad;
    } else {
        let pad = 0.05 * (y1 - y0);
        y0 -= pad;
        y1 += pad;
    }

    let (w, h) = (style.width, style.height);
    let pw = w - LEFT - RIGHT;
    let ph = h - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="12">"#,
        num(w),
        num(h),
        num(w),
        num(h)
    );
    let _ = writeln!(
        out,
        r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#,
        num(w),
        num(h)
    );

    for (k, b) in style.bands.iter().enumerate() {
        let (a, e) = (sx(b.start), sx(b.end));
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
            num(a),
            num(TOP),
            num(e - a),
            num(ph),
            BAND_FILL[k % BAND_FILL.len()]
        );
        let _ = writeln!(
            out,
            r##"<text x="{}" y="{}" text-anchor="middle" fill="#666">{}</text>"##,
            num(0.5 * (a + e)),
            num(TOP + 14.0),
            escape(&b.label)
        );
    }

    // Axes and ticks.
    let _ = writeln!(
        out,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        num(LEFT),
        num(TOP),
        num(pw),
        num(ph)
    );
    for t in ticks(x0, x1, 8) {
        let x = sx(t);
        let _ = writeln!(
            out,
            r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black"/><text x="{0}" y="{3}" text-anchor="middle">{4}</text>"#,
            num(x),
            num(TOP + ph),
            num(TOP + ph + 5.0),
            num(TOP + ph + 18.0),
            tick_label(t)
        );
    }
    for t in ticks(y0, y1, 6) {
        let y = sy(t);
        let _ = writeln!(
            out,
            r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="black"/><text x="{3}" y="{4}" text-anchor="end">{5}</text>"#,
            num(LEFT - 5.0),
            num(y),
            num(LEFT),
            num(LEFT - 8.0),
            num(y + 4.0),
            tick_label(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        num(LEFT + 0.5 * pw),
        num(h - 12.0),
        escape(&style.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        num(TOP + 0.5 * ph),
        escape(&style.y_label)
    );
    if !style.title.is_empty() {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            num(LEFT + 0.5 * pw),
            escape(&style.title)
        );
    }

    for m in &style.markers {
        let x = sx(*m);
        let _ = writeln!(
            out,
            r##"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#444" stroke-dasharray="5,4"/>"##,
            num(x),
            num(TOP),
            num(TOP + ph)
        );
    }

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        for piece in s.pieces.iter().filter(|p| !p.is_empty()) {
            let coords: Vec<String> = piece
                .iter()
                .map(|&(x, y)| format!("{},{}", num(sx(x)), num(sy(y))))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.6" points="{}"/>"#,
                color,
                coords.join(" ")
            );
        }
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{0}" y1="{2}" x2="{1}" y2="{2}" stroke="{3}" stroke-width="2"/><text x="{4}" y="{5}">{6}</text>"#,
            num(lx),
            num(lx + 22.0),
            num(ly),
            color,
            num(lx + 28.0),
            num(ly + 4.0),
            escape(&s.name)
        );
    }

    for &(x, y) in &style.stars {
        let (cx, cy) = (sx(x), sy(y));
        let pts: Vec<String> = (0..10)
            .map(|i| {
                let r = if i % 2 == 0 { 9.0 } else { 4.0 };
                let a = std::f64::consts::PI * (i as f64 / 5.0 - 0.5);
                format!("{},{}", num(cx + r * a.cos()), num(cy + r * a.sin()))
            })
            .collect();
        let _ = writeln!(
            out,
            r##"<polygon points="{}" fill="#ffd700" stroke="black"/>"##,
            pts.join(" ")
        );
    }

    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_one_polyline() {
        let svg = emit_svg(
            &[Series::new("y", vec![(0.0, 0.0), (1.0, 1.0)])],
            &PlotStyle::default(),
        )
        .unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let pts = svg
            .split("points=\"")
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap();
        assert_eq!(pts.split(' ').count(), 2);
    }

    #[test]
    fn empty_series_rejected() {
        assert!(emit_svg(&[], &PlotStyle::default()).is_err());
        assert!(emit_svg(&[Series::new("y", vec![])], &PlotStyle::default()).is_err());
    }

    #[test]
    fn descending_abscissae_rejected() {
        let s = Series::new("y", vec![(1.0, 0.0), (0.0, 1.0)]);
        assert!(emit_svg(&[s], &PlotStyle::default()).is_err());
    }

    #[test]
    fn tick_steps() {
        assert_eq!(
            ticks(0.0, 40.0, 8),
            vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0]
        );
        assert_eq!(
            ticks(0.0, 1.0, 6),
            vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]
        );
    }
}
