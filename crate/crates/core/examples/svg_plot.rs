//! Writes a small standalone SVG chart.

use hocp::io::svg::{emit_svg, PhaseBand, PlotStyle, Series};

fn main() -> hocp::Result<()> {
    let sine: Vec<(f64, f64)> = (0..=200)
        .map(|k| k as f64 * 0.05)
        .map(|t| (t, t.sin()))
        .collect();
    let damped: Vec<(f64, f64)> = sine
        .iter()
        .map(|&(t, y)| (t, y * (-0.2 * t).exp()))
        .collect();
    let style = PlotStyle {
        title: "sine and damped sine".into(),
        x_label: "t".into(),
        y_label: "y".into(),
        bands: vec![PhaseBand {
            start: 2.0,
            end: 5.0,
            label: "window".into(),
        }],
        markers: vec![std::f64::consts::PI],
        stars: vec![(std::f64::consts::FRAC_PI_2, 1.0)],
        ..PlotStyle::default()
    };
    let svg = emit_svg(
        &[Series::new("sin t", sine), Series::new("damped", damped)],
        &style,
    )?;
    let path = std::env::temp_dir().join("hocp_example.svg");
    std::fs::write(&path, svg).expect("write svg");
    println!("wrote {}", path.display());
    Ok(())
}
