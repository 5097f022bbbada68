//! Minimal SVG report plot: data points, predictive mean, shaded interval and
//! a dashed line between training and test data.

use std::fmt::Write;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;

pub struct PlotInput<'a> {
    pub times: &'a [f64],
    pub values: &'a [f64],
    pub n_train: usize,
    /// Prediction grid with mean and interval bounds.
    pub grid: &'a [f64],
    pub mean: &'a [f64],
    pub lower: &'a [f64],
    pub upper: &'a [f64],
}

struct Scale {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Scale {
    fn x(&self, v: f64) -> f64 {
        MARGIN + (v - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN - (v - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn range<'a>(it: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

fn points(xs: &[f64], ys: &[f64], s: &Scale) -> String {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| format!("{:.2},{:.2}", s.x(x), s.y(y)))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn render_svg(p: &PlotInput) -> String {
    let (x0, x1) = range(p.times.iter().chain(p.grid));
    let (y0, y1) = range(p.values.iter().chain(p.lower).chain(p.upper));
    let pad = 0.05 * (y1 - y0);
    let s = Scale { x0, x1, y0: y0 - pad, y1: y1 + pad };

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(out, r#"  <rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();

    let band: Vec<String> = vec![
        points(p.grid, p.upper, &s),
        {
            let rx: Vec<f64> = p.grid.iter().rev().copied().collect();
            let ry: Vec<f64> = p.lower.iter().rev().copied().collect();
            points(&rx, &ry, &s)
        },
    ];
    writeln!(out, r##"  <polygon class="interval" points="{}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>"##, band.join(" ")).unwrap();
    writeln!(out, r##"  <polyline class="mean" points="{}" fill="none" stroke="#08519c" stroke-width="1.5"/>"##, points(p.grid, p.mean, &s)).unwrap();

    if p.n_train > 0 && p.n_train < p.times.len() {
        let split = 0.5 * (p.times[p.n_train - 1] + p.times[p.n_train]);
        writeln!(
            out,
            r##"  <line class="split" x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#555" stroke-dasharray="6,4"/>"##,
            MARGIN,
            HEIGHT - MARGIN,
            x = s.x(split)
        )
        .unwrap();
    }

    out.push_str("  <g class=\"data\">\n");
    for (i, (&t, &v)) in p.times.iter().zip(p.values).enumerate() {
        let fill = if i < p.n_train { "#000" } else { "#d62728" };
        writeln!(out, r#"    <circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{fill}"/>"#, s.x(t), s.y(v)).unwrap();
    }
    out.push_str("  </g>\n");

    let axis_y = HEIGHT - MARGIN;
    writeln!(out, r##"  <line x1="{MARGIN}" y1="{axis_y}" x2="{}" y2="{axis_y}" stroke="#000"/>"##, WIDTH - MARGIN).unwrap();
    writeln!(out, r##"  <line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{axis_y}" stroke="#000"/>"##).unwrap();
    for (v, anchor, x) in [(x0, "start", MARGIN), (x1, "end", WIDTH - MARGIN)] {
        writeln!(out, r#"  <text x="{x}" y="{}" font-size="11" text-anchor="{anchor}">{v}</text>"#, axis_y + 16.0).unwrap();
    }
    for v in [s.y0, s.y1] {
        writeln!(out, r#"  <text x="{}" y="{:.2}" font-size="11" text-anchor="end">{v:.3}</text>"#, MARGIN - 4.0, s.y(v)).unwrap();
    }
    out.push_str("</svg>\n");
    out
}
