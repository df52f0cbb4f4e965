//! Phase plots of `(alpha, w)` trajectories as standalone SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const QUADRATIC_HEADER: [&str; 10] = ["t", "alpha", "w", "y", "L_train", "L_val", "L", "r_w", "r_y", "r_alpha"];

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 40.0;
const TICKS: usize = 5;

/// Reference points drawn on every plot.
pub const REFERENCE_POINTS: [(f64, f64, &str); 2] = [(1.0, 1.0, "(1,1)"), (2.0, 2.0, "(2,2)")];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotSpec {
    pub title: Option<String>,
    /// Extra marker, usually the closed-form equilibrium.
    pub equilibrium: Option<(f64, f64)>,
}

/// Reads the `(alpha, w)` columns of a quadratic trajectory CSV.
pub fn read_phase_points(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path)?;
    parse_phase_points(&text)
}

pub fn parse_phase_points(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        None => {
            return Err(Error::Csv {
                line: 1,
                message: "missing header".into(),
            })
        }
        Some(r) => r.map_err(|e| csv_error(1, e))?,
    };
    if header.iter().ne(QUADRATIC_HEADER.iter().copied()) {
        return Err(Error::Csv {
            line: 1,
            message: format!("expected header `{}`", QUADRATIC_HEADER.join(",")),
        });
    }
    let mut points = Vec::new();
    for (i, rec) in records.enumerate() {
        let fallback = i + 2;
        let rec = rec.map_err(|e| csv_error(fallback, e))?;
        let line = rec.position().map_or(fallback, |p| p.line() as usize);
        if rec.len() != QUADRATIC_HEADER.len() {
            return Err(Error::Csv {
                line,
                message: format!("expected {} fields, found {}", QUADRATIC_HEADER.len(), rec.len()),
            });
        }
        let mut values = [0.0; 10];
        for (slot, (field, name)) in values.iter_mut().zip(rec.iter().zip(QUADRATIC_HEADER)) {
            *slot = field
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Csv {
                    line,
                    message: format!("column {name}: `{field}` is not a finite number"),
                })?;
        }
        points.push((values[1], values[2]));
    }
    if points.is_empty() {
        return Err(Error::Csv {
            line: 1,
            message: "trajectory has no rows".into(),
        });
    }
    Ok(points)
}

fn csv_error(line: usize, e: csv::Error) -> Error {
    let line = e.position().map_or(line, |p| p.line() as usize);
    Error::Csv {
        line,
        message: e.to_string(),
    }
}

/// Affine map from data coordinates to the SVG canvas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotFrame {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

impl PlotFrame {
    /// Smallest padded frame holding every point.
    pub fn fit(points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in points {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        PlotFrame {
            x_range: pad(x0, x1),
            y_range: pad(y0, y1),
        }
    }

    pub fn to_svg(&self, x: f64, y: f64) -> (f64, f64) {
        let (x0, x1) = self.x_range;
        let (y0, y1) = self.y_range;
        (
            MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN),
            HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN),
        )
    }
}

fn pad(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo < 1e-9 {
        return (lo - 0.5, hi + 0.5);
    }
    let p = 0.05 * (hi - lo);
    (lo - p, hi + p)
}

fn ticks((lo, hi): (f64, f64)) -> impl Iterator<Item = f64> {
    (0..TICKS).map(move |i| lo + (hi - lo) * i as f64 / (TICKS - 1) as f64)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// SVG document for a phase trajectory.
pub fn render_svg(points: &[(f64, f64)], spec: &PlotSpec) -> Result<String> {
    let (first, last) = match (points.first(), points.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(Error::config("nothing to plot")),
    };
    let extra = REFERENCE_POINTS.iter().map(|&(x, y, _)| (x, y)).chain(spec.equilibrium);
    let frame = PlotFrame::fit(points.iter().copied().chain(extra));
    let (left, right) = (MARGIN, WIDTH - MARGIN);
    let (top, bottom) = (MARGIN, HEIGHT - MARGIN);

    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str("<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 600\" width=\"800\" height=\"600\" font-family=\"sans-serif\" font-size=\"11\">\n");
    s.push_str("<rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"white\"/>\n");
    if let Some(title) = &spec.title {
        let _ = writeln!(
            s,
            "<text x=\"400\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
            escape(title)
        );
    }
    let _ = writeln!(
        s,
        "<line x1=\"{left}\" y1=\"{bottom}\" x2=\"{right}\" y2=\"{bottom}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        s,
        "<line x1=\"{left}\" y1=\"{bottom}\" x2=\"{left}\" y2=\"{top}\" stroke=\"black\"/>"
    );
    for v in ticks(frame.x_range) {
        let (x, _) = frame.to_svg(v, frame.y_range.0);
        let _ = writeln!(
            s,
            "<line x1=\"{x:.2}\" y1=\"{bottom}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
            bottom + 5.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{v:.3}</text>",
            bottom + 17.0
        );
    }
    for v in ticks(frame.y_range) {
        let (_, y) = frame.to_svg(frame.x_range.0, v);
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{left}\" y2=\"{y:.2}\" stroke=\"black\"/>",
            left - 5.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" transform=\"rotate(-90 {:.2} {:.2})\">{v:.3}</text>",
            left - 8.0,
            y,
            left - 8.0,
            y
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">alpha</text>",
        right,
        bottom - 6.0
    );
    let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\">w</text>", left + 6.0, top + 10.0);

    s.push_str("<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"");
    for (i, &(a, w)) in points.iter().enumerate() {
        let (x, y) = frame.to_svg(a, w);
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x:.2},{y:.2}");
    }
    s.push_str("\"/>\n");

    for &(x, y, label) in &REFERENCE_POINTS {
        let (px, py) = frame.to_svg(x, y);
        let _ = writeln!(
            s,
            "<path d=\"M {:.2} {:.2} L {:.2} {:.2} M {:.2} {:.2} L {:.2} {:.2}\" stroke=\"gray\" stroke-width=\"2\"/>",
            px - 5.0,
            py - 5.0,
            px + 5.0,
            py + 5.0,
            px - 5.0,
            py + 5.0,
            px + 5.0,
            py - 5.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"gray\">{label}</text>",
            px + 7.0,
            py - 7.0
        );
    }
    if let Some((ex, ey)) = spec.equilibrium {
        let (px, py) = frame.to_svg(ex, ey);
        let _ = writeln!(
            s,
            "<path d=\"M {:.2} {:.2} L {:.2} {:.2} L {:.2} {:.2} L {:.2} {:.2} Z\" fill=\"none\" stroke=\"purple\" stroke-width=\"1.5\"/>",
            px,
            py - 6.0,
            px + 6.0,
            py,
            px,
            py + 6.0,
            px - 6.0,
            py
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"purple\">equilibrium</text>",
            px + 8.0,
            py + 14.0
        );
    }
    let (sx, sy) = frame.to_svg(first.0, first.1);
    let _ = writeln!(
        s,
        "<circle cx=\"{sx:.2}\" cy=\"{sy:.2}\" r=\"4\" fill=\"green\"><title>start</title></circle>"
    );
    let (ex, ey) = frame.to_svg(last.0, last.1);
    let _ = writeln!(
        s,
        "<circle cx=\"{ex:.2}\" cy=\"{ey:.2}\" r=\"4\" fill=\"red\"><title>end</title></circle>"
    );
    s.push_str("</svg>\n");
    Ok(s)
}

/// Renders `csv_path` into `svg_path` and returns the number of bytes written.
pub fn emit_plot(csv_path: &Path, svg_path: &Path, spec: &PlotSpec) -> Result<u64> {
    let points = read_phase_points(csv_path)?;
    let svg = render_svg(&points, spec)?;
    fs::write(svg_path, &svg)?;
    Ok(svg.len() as u64)
}
