use std::fmt::Write as _;
use std::path::Path;

use crate::spec::{CliError, RunSpec};

/// One output table: an x-like column followed by one column per curve.
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<f64>>) -> Table {
        debug_assert!(rows.iter().all(|r| r.len() == columns.len()));
        Table { columns, rows }
    }

    pub fn from_curve(x_name: &str, curve_name: &str, xs: &[f64], values: &[f64]) -> Table {
        Table::new(
            vec![x_name.to_string(), curve_name.to_string()],
            xs.iter().zip(values).map(|(&x, &v)| vec![x, v]).collect(),
        )
    }
}

pub fn write_csv(path: &Path, spec: &RunSpec, table: &Table) -> Result<(), CliError> {
    let mut text = String::new();
    for line in spec.lines() {
        let _ = writeln!(text, "# {line}");
    }
    let _ = writeln!(text, "{}", table.columns.join(","));
    for row in &table.rows {
        let rendered: Vec<String> = row.iter().map(|v| format!("{v:.8e}")).collect();
        let _ = writeln!(text, "{}", rendered.join(","));
    }
    std::fs::write(path, text)?;
    Ok(())
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const PLOT_LEFT: f64 = 60.0;
const PLOT_RIGHT: f64 = 620.0;
const PLOT_TOP: f64 = 30.0;
const PLOT_BOTTOM: f64 = 560.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

/// A figure: several named curves over a shared x axis, with the y axis
/// fixed to [0, 1] since every plotted quantity is a probability.
pub struct FigureSpec<'a> {
    pub x_label: &'a str,
    pub curves: Vec<(String, &'a [f64], &'a [f64])>,
}

fn x_to_px(x: f64, x_min: f64, x_max: f64) -> f64 {
    PLOT_LEFT + (x - x_min) / (x_max - x_min) * (PLOT_RIGHT - PLOT_LEFT)
}

fn y_to_px(y: f64) -> f64 {
    PLOT_BOTTOM - y.clamp(0.0, 1.0) * (PLOT_BOTTOM - PLOT_TOP)
}

pub fn write_svg(path: &Path, spec: &RunSpec, figure: &FigureSpec) -> Result<(), CliError> {
    let x_min = figure
        .curves
        .iter()
        .flat_map(|(_, xs, _)| xs.first().copied())
        .fold(f64::INFINITY, f64::min);
    let x_max = figure
        .curves
        .iter()
        .flat_map(|(_, xs, _)| xs.last().copied())
        .fold(f64::NEG_INFINITY, f64::max);

    let mut text = String::new();
    let _ = writeln!(
        text,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(text, "<!-- medmarg {} -->", env!("CARGO_PKG_VERSION"));
    for line in spec.lines() {
        let _ = writeln!(text, "<!-- {line} -->");
    }
    let _ = writeln!(
        text,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        text,
        r#"<rect x="{PLOT_LEFT}" y="{PLOT_TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        PLOT_RIGHT - PLOT_LEFT,
        PLOT_BOTTOM - PLOT_TOP
    );

    for i in 0..=5 {
        let frac = i as f64 / 5.0;
        let x = x_min + frac * (x_max - x_min);
        let px = x_to_px(x, x_min, x_max);
        let _ = writeln!(
            text,
            r#"<line x1="{px:.2}" y1="{PLOT_BOTTOM}" x2="{px:.2}" y2="{}" stroke="black"/>"#,
            PLOT_BOTTOM + 5.0
        );
        let _ = writeln!(
            text,
            r#"<text x="{px:.2}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{x:.2}</text>"#,
            PLOT_BOTTOM + 20.0
        );
        let py = y_to_px(frac);
        let _ = writeln!(
            text,
            r#"<line x1="{}" y1="{py:.2}" x2="{PLOT_LEFT}" y2="{py:.2}" stroke="black"/>"#,
            PLOT_LEFT - 5.0
        );
        let _ = writeln!(
            text,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="end">{frac:.1}</text>"#,
            PLOT_LEFT - 9.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        text,
        r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        (PLOT_LEFT + PLOT_RIGHT) / 2.0,
        PLOT_BOTTOM + 38.0,
        figure.x_label
    );

    for (i, (name, xs, values)) in figure.curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut points = String::new();
        for (&x, &v) in xs.iter().zip(*values) {
            let _ = write!(points, "{:.2},{:.2} ", x_to_px(x, x_min, x_max), y_to_px(v));
        }
        let _ = writeln!(
            text,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            points.trim_end()
        );
        let ly = 50.0 + 22.0 * i as f64;
        let _ = writeln!(
            text,
            r#"<line x1="635" y1="{ly}" x2="665" y2="{ly}" stroke="{color}" stroke-width="1.5"/>"#
        );
        let _ = writeln!(
            text,
            r#"<text x="670" y="{}" font-family="sans-serif" font-size="12">{name}</text>"#,
            ly + 4.0
        );
    }

    let _ = writeln!(text, "</svg>");
    std::fs::write(path, text)?;
    Ok(())
}
