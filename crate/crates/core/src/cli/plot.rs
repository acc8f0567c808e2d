//! Static SVG rendering of simulation CSV files.

use std::fmt::Write;

use super::CliError;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
struct Point {
    x: f64,
    y: f64,
    low: f64,
    high: f64,
}

/// Points of one (sweep_var, receiver) pair, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub label: String,
    points: Vec<Point>,
}

impl PlotSeries {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Parsed contents of a simulation CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub x_label: String,
    pub series: Vec<PlotSeries>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, CliError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| CliError::Parse(format!("line 1: missing column '{name}'")))
}

/// Reads the simulate CSV schema; errors carry the offending line number.
pub fn read_plot_data(text: &str) -> Result<PlotData, CliError> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CliError::Parse(format!("line 1: {e}")))?
        .clone();
    let sweep = column(&headers, "sweep_var")?;
    let value = column(&headers, "value")?;
    let receiver = column(&headers, "receiver")?;
    let p_hat = column(&headers, "p_hat")?;
    let ci_low = column(&headers, "ci_low")?;
    let ci_high = column(&headers, "ci_high")?;

    let mut series: Vec<PlotSeries> = Vec::new();
    let mut x_label: Option<String> = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Parse(format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let number = |i: usize| -> Result<f64, CliError> {
            let field = record.get(i).unwrap_or("").trim();
            field.parse::<f64>().map_err(|_| {
                CliError::Parse(format!(
                    "line {line}: column '{}' is not a number: '{field}'",
                    &headers[i]
                ))
            })
        };
        let point = Point {
            x: number(value)?,
            y: number(p_hat)?,
            low: number(ci_low)?,
            high: number(ci_high)?,
        };
        let sweep_var = record.get(sweep).unwrap_or("").trim();
        let base = sweep_var.split(':').next().unwrap_or("").to_string();
        match &x_label {
            None => x_label = Some(base),
            Some(l) if *l != base => {
                return Err(CliError::Parse(format!(
                    "line {line}: mixes sweep variables '{l}' and '{base}'"
                )))
            }
            Some(_) => {}
        }
        let label = match sweep_var.split_once(':') {
            Some((_, qualifier)) => format!("{} ({qualifier})", record.get(receiver).unwrap_or("")),
            None => record.get(receiver).unwrap_or("").to_string(),
        };
        match series.iter_mut().find(|s| s.label == label) {
            Some(s) => s.points.push(point),
            None => series.push(PlotSeries {
                label,
                points: vec![point],
            }),
        }
    }
    Ok(PlotData {
        x_label: x_label.unwrap_or_default(),
        series,
    })
}

struct Axis {
    min: f64,
    max: f64,
    log: bool,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            min = min.min(v);
            max = max.max(v);
        }
        if !min.is_finite() {
            (min, max) = if log { (1e-3, 1.0) } else { (0.0, 1.0) };
        }
        if log {
            let (lo, hi) = (min.log10().floor(), max.log10().ceil());
            let hi = if hi <= lo { lo + 1.0 } else { hi };
            return Self {
                min: 10f64.powf(lo),
                max: 10f64.powf(hi),
                log,
            };
        }
        if max - min < 1e-12 {
            let pad = if min == 0.0 { 1.0 } else { 0.1 * min.abs() };
            (min, max) = (min - pad, max + pad);
        }
        let pad = 0.05 * (max - min);
        Self {
            min: min - pad,
            max: max + pad,
            log,
        }
    }

    fn fraction(&self, v: f64) -> f64 {
        if self.log {
            let v = v.max(self.min);
            (v.log10() - self.min.log10()) / (self.max.log10() - self.min.log10())
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (lo, hi) = (
                self.min.log10().round() as i32,
                self.max.log10().round() as i32,
            );
            return (lo..=hi).map(|e| 10f64.powi(e)).collect();
        }
        let raw = (self.max - self.min) / 5.0;
        let magnitude = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 2.5, 5.0, 10.0]
            .iter()
            .map(|m| m * magnitude)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * magnitude);
        let first = (self.min / step).ceil() as i64;
        let last = (self.max / step).floor() as i64;
        (first..=last).map(|k| k as f64 * step).collect()
    }
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        return format!("{v:.0e}");
    }
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Renders error probability against the sweep variable, one polyline with
/// confidence-interval whiskers per series.
pub fn render_svg(data: &PlotData, log_y: bool, title: Option<&str>) -> String {
    let points = || data.series.iter().flat_map(|s| s.points.iter());
    let x_axis = Axis::new(points().map(|p| p.x), false);
    let y_axis = Axis::new(points().flat_map(|p| [p.y, p.low, p.high]), log_y);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + x_axis.fraction(x) * plot_w;
    let py = |y: f64| TOP + (1.0 - y_axis.fraction(y)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for t in x_axis.ticks() {
        let x = px(t);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 20.0,
            tick_label(t)
        );
    }
    for t in y_axis.ticks() {
        let y = py(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0,
            tick_label(t)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        escape(&data.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">error probability</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );
    if let Some(t) = title {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + plot_w / 2.0,
            escape(t)
        );
    }

    for (k, s) in data.series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.x), py(p.y)))
            .collect();
        if path.len() > 1 {
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
                path.join(" ")
            );
        }
        for p in &s.points {
            let (x, y) = (px(p.x), py(p.y));
            let _ = writeln!(
                svg,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{colour}"/><circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{colour}"/>"#,
                py(p.low),
                py(p.high)
            );
        }
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = LEFT + plot_w + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
