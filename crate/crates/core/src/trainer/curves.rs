use std::fmt::Write;
use std::path::Path;

use super::{MetricsRecord, TrainError};

const PANEL_W: f64 = 520.0;
const PANEL_H: f64 = 260.0;
const MARGIN: f64 = 48.0;

struct Series<'a> {
    id: &'a str,
    color: &'a str,
    dashed: bool,
    values: Vec<f64>,
}

fn panel(svg: &mut String, top: f64, title: &str, series: &[Series], phase_break: Option<usize>) {
    let n = series[0].values.len();
    let ymax = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let x_of = |i: usize| MARGIN + PANEL_W * if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
    let y_of = |v: f64| top + PANEL_H - PANEL_H * (v / ymax).clamp(0.0, 1.0);

    let _ = writeln!(
        svg,
        r##"<g class="panel"><text x="{}" y="{}" font-size="14" font-family="sans-serif">{title}</text>"##,
        MARGIN,
        top - 8.0
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{MARGIN}" y="{top}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#999"/>"##
    );
    let _ = writeln!(
        svg,
        r##"<text x="4" y="{:.1}" font-size="10" font-family="sans-serif">{ymax:.3}</text><text x="4" y="{:.1}" font-size="10" font-family="sans-serif">0</text>"##,
        top + 10.0,
        top + PANEL_H
    );
    if let Some(b) = phase_break {
        let x = (x_of(b - 1) + x_of(b)) / 2.0;
        let _ = writeln!(
            svg,
            r##"<line class="phase-boundary" x1="{x:.1}" y1="{top}" x2="{x:.1}" y2="{:.1}" stroke="#444" stroke-dasharray="2,3"/>"##,
            top + PANEL_H
        );
    }
    for s in series {
        let points: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", x_of(i), y_of(if v.is_finite() { v } else { 0.0 })))
            .collect();
        let dash = if s.dashed { r#" stroke-dasharray="6,3""# } else { "" };
        let _ = writeln!(
            svg,
            r##"<polyline id="{}" fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"##,
            s.id,
            s.color,
            points.join(" ")
        );
    }
    let mut ly = top + 14.0;
    for s in series {
        let _ = writeln!(
            svg,
            r##"<text x="{:.1}" y="{ly:.1}" font-size="11" font-family="sans-serif" fill="{}">{}</text>"##,
            MARGIN + PANEL_W - 90.0,
            s.color,
            s.id
        );
        ly += 14.0;
    }
    svg.push_str("</g>\n");
}

/// Self-contained SVG with accuracy and loss panels (train/val each) over
/// epochs; a dashed vertical line marks the start of phase 2.
pub fn render_curves(history: &[MetricsRecord]) -> Result<String, TrainError> {
    if history.is_empty() {
        return Err(TrainError::Data("cannot plot an empty history".into()));
    }
    let phase_break = history.iter().position(|r| r.phase == 2).filter(|&i| i > 0);
    let width = PANEL_W + 2.0 * MARGIN;
    let height = 2.0 * PANEL_H + 3.0 * MARGIN;
    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    svg.push('\n');
    let col = |f: fn(&MetricsRecord) -> f64| history.iter().map(f).collect::<Vec<_>>();
    panel(
        &mut svg,
        MARGIN,
        "Accuracy vs epoch",
        &[
            Series { id: "train_acc", color: "#1f77b4", dashed: false, values: col(|r| r.train_acc) },
            Series { id: "val_acc", color: "#ff7f0e", dashed: true, values: col(|r| r.val_acc) },
        ],
        phase_break,
    );
    panel(
        &mut svg,
        2.0 * MARGIN + PANEL_H,
        "Loss vs epoch",
        &[
            Series { id: "train_loss", color: "#2ca02c", dashed: false, values: col(|r| r.train_loss) },
            Series { id: "val_loss", color: "#d62728", dashed: true, values: col(|r| r.val_loss) },
        ],
        phase_break,
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_curves(history: &[MetricsRecord], path: &Path) -> Result<(), TrainError> {
    let svg = render_curves(history)?;
    std::fs::write(path, svg).map_err(|e| TrainError::Data(format!("{}: {e}", path.display())))
}
