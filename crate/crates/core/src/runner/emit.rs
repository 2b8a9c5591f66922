//! Byte-stable CSV and SVG writers.

use std::fmt::Write as _;
use std::path::Path;

use crate::distributions::GaussianParams;
use crate::error::{Error, Result};
use crate::gmm_fit::HEATMAP_CAP;
use crate::matrix::Matrix;

/// A table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

impl Cell {
    /// Reals use Rust's shortest round-trip formatting (`{:?}`): the fewest
    /// digits that parse back to the same `f64`, always with a decimal point
    /// or exponent, e.g. `0.7`, `1.0`, `1e-10`. Non-finite values print as
    /// `NaN`, `inf` and `-inf`.
    pub fn render(&self) -> String {
        match self {
            Cell::Real(v) => format!("{v:?}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.headers.len() {
            return Err(Error::invalid("table", format!("row has {} cells, header has {}", row.len(), self.headers.len())));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        if self.headers.is_empty() {
            return Err(Error::invalid("table", "no header"));
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::invalid("table", e.to_string());
        w.write_record(&self.headers).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| Error::invalid("table", e.to_string()))
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `table` as UTF-8 CSV with a header row and `\n` line endings.
pub fn emit_csv(table: &Table, path: &Path) -> Result<()> {
    write_file(path, &table.to_csv_bytes()?)
}

/// Number of colour bins spanning `[0, HEATMAP_CAP]`.
pub const HEATMAP_BINS: usize = 10;

/// Light to dark, bin 0 first.
const PALETTE: [&str; HEATMAP_BINS] = [
    "#fde725", "#b5de2b", "#6ece58", "#35b779", "#1f9e89", "#26828e", "#31688e", "#3e4989", "#482878", "#440154",
];

/// Colour bin of a heatmap value: `floor(v / cap * bins)` clamped to the
/// valid range, so `0` lands in the first bin and the cap in the last.
pub fn heatmap_bin(v: f64) -> usize {
    let b = (v / HEATMAP_CAP * HEATMAP_BINS as f64).floor();
    if b <= 0.0 {
        0
    } else {
        (b as usize).min(HEATMAP_BINS - 1)
    }
}

pub fn heatmap_color(v: f64) -> &'static str {
    PALETTE[heatmap_bin(v)]
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 110.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

fn check_axis(name: &'static str, axis: &[f64], len: usize) -> Result<()> {
    if axis.len() != len || len == 0 {
        return Err(Error::invalid(name, format!("expected {len} points, got {}", axis.len())));
    }
    if axis.iter().any(|v| !v.is_finite()) || axis.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid(name, "must be finite and strictly increasing"));
    }
    Ok(())
}

/// Cell edges around each axis point: midpoints inside, half a spacing
/// outside. A single point gets a unit-wide cell.
fn edges(axis: &[f64]) -> Vec<f64> {
    if axis.len() == 1 {
        return vec![axis[0] - 0.5, axis[0] + 0.5];
    }
    let n = axis.len();
    let mut e = Vec::with_capacity(n + 1);
    e.push(axis[0] - (axis[1] - axis[0]) / 2.0);
    e.extend(axis.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    e.push(axis[n - 1] + (axis[n - 1] - axis[n - 2]) / 2.0);
    e
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn axes_svg(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (l, r, t, b) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(out, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, r - l, b - t);
    for i in 0..=4 {
        let x = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
        let y = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let (px, py) = (f.px(x), f.py(y));
        let _ = writeln!(out, r#"<line x1="{px:.2}" y1="{b}" x2="{px:.2}" y2="{}" stroke="black"/>"#, b + 5.0);
        let _ = writeln!(out, r#"<text x="{px:.2}" y="{}" font-size="12" text-anchor="middle">{}</text>"#, b + 20.0, fmt_tick(x));
        let _ = writeln!(out, r#"<line x1="{}" y1="{py:.2}" x2="{l}" y2="{py:.2}" stroke="black"/>"#, l - 5.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" font-size="12" text-anchor="end">{}</text>"#, l - 8.0, py + 4.0, fmt_tick(y));
    }
    let _ = writeln!(
        out,
        r#"<text class="x-label" x="{:.2}" y="{}" font-size="16" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text class="y-label" x="20" y="{:.2}" font-size="16" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(y_label)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn svg_open() -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// Renders a heatmap with rows along `sigma_axis` and columns along
/// `mu_axis`, a colour bar over `[0, 3]` and a red star at `star`.
pub fn heatmap_svg(values: &Matrix, mu_axis: &[f64], sigma_axis: &[f64], star: &GaussianParams) -> Result<String> {
    check_axis("mu_axis", mu_axis, values.cols())?;
    check_axis("sigma_axis", sigma_axis, values.rows())?;
    if values.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("heatmap", "values must be finite"));
    }
    let (mx, sx) = (edges(mu_axis), edges(sigma_axis));
    let f = Frame {
        x0: mx[0],
        x1: mx[mx.len() - 1],
        y0: sx[0],
        y1: sx[sx.len() - 1],
    };
    let mut out = svg_open();
    out.push_str("<g class=\"cells\" shape-rendering=\"crispEdges\">\n");
    for i in 0..values.rows() {
        let (top, bottom) = (f.py(sx[i + 1]), f.py(sx[i]));
        // Runs of equal-bin cells along a row share one rect.
        let mut j = 0;
        while j < values.cols() {
            let bin = heatmap_bin(values.get(i, j));
            let mut end = j + 1;
            while end < values.cols() && heatmap_bin(values.get(i, end)) == bin {
                end += 1;
            }
            let (left, right) = (f.px(mx[j]), f.px(mx[end]));
            let _ = writeln!(
                out,
                r#"<rect x="{left:.3}" y="{top:.3}" width="{:.3}" height="{:.3}" fill="{}" data-bin="{bin}"/>"#,
                right - left,
                bottom - top,
                PALETTE[bin],
            );
            j = end;
        }
    }
    out.push_str("</g>\n");
    axes_svg(&mut out, &f, "μ", "σ");
    let bar_x = WIDTH - RIGHT + 20.0;
    let bar_h = (HEIGHT - TOP - BOTTOM) / HEATMAP_BINS as f64;
    out.push_str("<g class=\"colorbar\">\n");
    for (b, color) in PALETTE.iter().enumerate() {
        let y = HEIGHT - BOTTOM - (b + 1) as f64 * bar_h;
        let _ = writeln!(out, r#"<rect x="{bar_x}" y="{y:.3}" width="20" height="{bar_h:.3}" fill="{color}"/>"#);
    }
    for v in [0.0, 1.0, 2.0, 3.0] {
        let y = HEIGHT - BOTTOM - v / HEATMAP_CAP * (HEIGHT - TOP - BOTTOM);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" font-size="12">{v}</text>"#, bar_x + 26.0, y + 4.0);
    }
    out.push_str("</g>\n");
    let (cx, cy) = (f.px(star.mu()), f.py(star.sigma()));
    let points: Vec<String> = (0..10)
        .map(|k| {
            let radius = if k % 2 == 0 { 10.0 } else { 4.0 };
            let angle = std::f64::consts::PI * (k as f64 / 5.0 - 0.5);
            format!("{:.2},{:.2}", cx + radius * angle.cos(), cy + radius * angle.sin())
        })
        .collect();
    let _ = writeln!(
        out,
        r#"<polygon class="star" points="{}" fill="red" stroke="black" stroke-width="0.5"/>"#,
        points.join(" ")
    );
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_heatmap_svg(values: &Matrix, mu_axis: &[f64], sigma_axis: &[f64], star: &GaussianParams, path: &Path) -> Result<()> {
    write_file(path, heatmap_svg(values, mu_axis, sigma_axis, star)?.as_bytes())
}

/// One polyline of a line chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const LINE_COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line chart of the finite points of each series.
pub fn line_svg(series: &[Series], x_label: &str, y_label: &str) -> Result<String> {
    let finite = || series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    if finite().next().is_none() {
        return Err(Error::Empty("no finite points to plot"));
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in finite() {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 == x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let pad = if y1 > y0 { 0.05 * (y1 - y0) } else { 0.5 };
    let f = Frame {
        x0,
        x1,
        y0: y0 - pad,
        y1: y1 + pad,
    };
    let mut out = svg_open();
    axes_svg(&mut out, &f, x_label, y_label);
    for (k, s) in series.iter().enumerate() {
        let color = LINE_COLORS[k % LINE_COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, pts.join(" "));
        if pts.len() <= 50 {
            for p in &pts {
                let (px, py) = p.split_once(',').expect("formatted pair");
                let _ = writeln!(out, r#"<circle cx="{px}" cy="{py}" r="2.5" fill="{color}"/>"#);
            }
        }
        let ly = TOP + 15.0 + 18.0 * k as f64;
        let lx = WIDTH - RIGHT + 10.0;
        let _ = writeln!(out, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 15.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11">{}</text>"#, lx + 19.0, ly + 4.0, escape(&s.label));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_line_svg(series: &[Series], x_label: &str, y_label: &str, path: &Path) -> Result<()> {
    write_file(path, line_svg(series, x_label, y_label)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_round_trip() {
        for v in [0.7, 1.0, 1e-10, -2.5e300, 0.1 + 0.2, f64::MIN_POSITIVE] {
            let s = Cell::Real(v).render();
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(Cell::Real(0.7).render(), "0.7");
        assert_eq!(Cell::Real(1.0).render(), "1.0");
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = Table::new(["a", "b"]);
        assert_eq!(t.to_csv_bytes().unwrap(), b"a,b\n");
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new(["x", "name", "ok"]);
        t.push(vec![0.5.into(), "a,b".into(), true.into()]).unwrap();
        t.push(vec![Cell::Int(-3), "c".into(), false.into()]).unwrap();
        assert_eq!(String::from_utf8(t.to_csv_bytes().unwrap()).unwrap(), "x,name,ok\n0.5,\"a,b\",true\n-3,c,false\n");
        assert!(t.push(vec![1.0.into()]).is_err());
    }

    #[test]
    fn bins_cover_the_cap() {
        assert_eq!(heatmap_bin(0.0), 0);
        assert_eq!(heatmap_bin(-1e-12), 0);
        assert_eq!(heatmap_bin(HEATMAP_CAP), HEATMAP_BINS - 1);
        assert_eq!(heatmap_bin(0.31), 1);
    }

    #[test]
    fn heatmap_rejects_bad_input() {
        let star = GaussianParams::new(0.0, 1.0).unwrap();
        let m = Matrix::zeros(2, 2);
        assert!(heatmap_svg(&m, &[0.0, 1.0], &[1.0, 0.5], &star).is_err());
        assert!(heatmap_svg(&m, &[0.0], &[0.5, 1.0], &star).is_err());
        let mut bad = m.clone();
        bad.set(0, 0, f64::NAN);
        assert!(heatmap_svg(&bad, &[0.0, 1.0], &[0.5, 1.0], &star).is_err());
    }

    #[test]
    fn line_chart_needs_points() {
        assert!(line_svg(&[], "x", "y").is_err());
        let s = Series {
            label: "a".into(),
            points: vec![(0.0, 1.0), (1.0, f64::NAN)],
        };
        assert!(line_svg(&[s], "x", "y").unwrap().contains("<polyline"));
    }
}
