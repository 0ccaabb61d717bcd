//! Static SVG figures for run artifacts: occupancy heatmaps, escape
//! curves and bars, engine-vs-reference overlays, spectral-scan summaries,
//! and mitigation comparisons.

use std::path::Path;

use edgeburst::analysis::EscapeProfile;
use plotters::prelude::*;

use crate::pipeline::{MitigationReport, SpectralPoint};
use crate::{CliError, Result};

const SIZE: (u32, u32) = (900, 560);

fn perr<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Internal(format!("plot failed: {e}"))
}

/// White-to-navy color ramp for occupancy values in [0, 1].
fn ramp(v: f64) -> RGBColor {
    let v = v.clamp(0.0, 1.0);
    let mix = |a: f64, b: f64| (a + (b - a) * v) as u8;
    RGBColor(mix(255.0, 8.0), mix(255.0, 48.0), mix(255.0, 110.0))
}

/// Site-resolved occupancy history: time on x, flattened site on y, color
/// encoding the normalized occupancy (scaled to the series maximum).
pub fn occupancy_heatmap(path: &Path, time_grid: &[f64], occupancies: &[Vec<f64>]) -> Result<()> {
    if time_grid.len() < 2 || occupancies.len() != time_grid.len() {
        return Err(CliError::Internal("heatmap needs a populated series".into()));
    }
    let n_sites = occupancies[0].len();
    let t_max = *time_grid.last().unwrap();
    let peak = occupancies
        .iter()
        .flat_map(|row| row.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(perr)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("site occupancy (normalized)", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d(0.0..t_max, 0.0..n_sites as f64)
        .map_err(perr)?;
    chart
        .configure_mesh()
        .disable_mesh()
        .x_desc("time")
        .y_desc("flattened site")
        .draw()
        .map_err(perr)?;
    let mut cells = Vec::with_capacity((time_grid.len() - 1) * n_sites);
    for j in 0..time_grid.len() - 1 {
        for (z, &v) in occupancies[j].iter().enumerate() {
            cells.push(Rectangle::new(
                [(time_grid[j], z as f64), (time_grid[j + 1], (z + 1) as f64)],
                ramp(v / peak).filled(),
            ));
        }
    }
    chart.draw_series(cells).map_err(perr)?;
    root.present().map_err(perr)?;
    Ok(())
}

/// Per-cell escape accumulation P_x(t) with the total P(t) on top.
pub fn escape_curves(path: &Path, escape: &EscapeProfile) -> Result<()> {
    let t_max = *escape.time_grid.last().unwrap_or(&1.0);
    let n_cells = escape.final_px.len();
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(perr)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("escape accumulation", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d(0.0..t_max, 0.0..1.05)
        .map_err(perr)?;
    chart
        .configure_mesh()
        .x_desc("time")
        .y_desc("escape probability")
        .draw()
        .map_err(perr)?;
    for x in 0..n_cells {
        let color = Palette99::pick(x).mix(0.8);
        let series: Vec<(f64, f64)> = escape
            .time_grid
            .iter()
            .zip(&escape.p_x_of_t)
            .map(|(t, row)| (*t, row[x]))
            .collect();
        chart.draw_series(LineSeries::new(series, &color)).map_err(perr)?;
    }
    chart
        .draw_series(LineSeries::new(
            escape.time_grid.iter().zip(&escape.p_of_t).map(|(t, p)| (*t, *p)),
            BLACK.stroke_width(2),
        ))
        .map_err(perr)?
        .label("total P(t)")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], BLACK.stroke_width(2)));
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.85))
        .draw()
        .map_err(perr)?;
    root.present().map_err(perr)?;
    Ok(())
}

fn bar_chart(
    path: &Path,
    caption: &str,
    n_cells: usize,
    series: &[(&str, &[f64], RGBColor)],
) -> Result<()> {
    let y_max = series
        .iter()
        .flat_map(|(_, vals, _)| vals.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-3)
        * 1.15;
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(perr)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(caption, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d(0.5..n_cells as f64 + 0.5, 0.0..y_max)
        .map_err(perr)?;
    chart
        .configure_mesh()
        .x_desc("cell x")
        .y_desc("escape probability P_x")
        .draw()
        .map_err(perr)?;
    let k = series.len() as f64;
    let width = 0.8 / k;
    for (s, (name, vals, color)) in series.iter().enumerate() {
        let bars: Vec<Rectangle<(f64, f64)>> = vals
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let x0 = (i + 1) as f64 - 0.4 + s as f64 * width;
                Rectangle::new([(x0, 0.0), (x0 + width, v)], color.filled())
            })
            .collect();
        let color = *color;
        chart
            .draw_series(bars)
            .map_err(perr)?
            .label(*name)
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 12, y + 5)], color.filled()));
    }
    if series.len() > 1 {
        chart
            .configure_series_labels()
            .border_style(BLACK)
            .background_style(WHITE.mix(0.85))
            .draw()
            .map_err(perr)?;
    }
    root.present().map_err(perr)?;
    Ok(())
}

/// Final escape probabilities per cell.
pub fn escape_bars(path: &Path, final_px: &[f64]) -> Result<()> {
    bar_chart(path, "final escape profile", final_px.len(), &[("P_x", final_px, RGBColor(31, 119, 180))])
}

/// Engine profile next to the exact reference.
pub fn overlay_bars(path: &Path, engine_px: &[f64], oracle_px: &[f64]) -> Result<()> {
    bar_chart(
        path,
        "engine vs exact reference",
        engine_px.len().max(oracle_px.len()),
        &[
            ("engine", engine_px, RGBColor(31, 119, 180)),
            ("exact", oracle_px, RGBColor(214, 96, 37)),
        ],
    )
}

/// Mitigation pipelines next to the exact reference.
pub fn mitigation_bars(path: &Path, report: &MitigationReport) -> Result<()> {
    bar_chart(
        path,
        "escape profile: raw / readout / readout+extrapolation",
        report.oracle_px.len(),
        &[
            ("exact", &report.oracle_px, RGBColor(60, 60, 60)),
            ("raw", &report.raw_px, RGBColor(214, 96, 37)),
            ("readout only", &report.readout_px, RGBColor(255, 180, 60)),
            ("full", &report.full_px, RGBColor(31, 119, 180)),
        ],
    )
}

/// Extremal Im E and dissipative gap against the hopping ratio: oracle
/// curve with engine purification estimates on top.
pub fn spectral_plot(path: &Path, points: &[SpectralPoint], gamma: f64) -> Result<()> {
    if points.is_empty() {
        return Err(CliError::Internal("spectral plot needs at least one point".into()));
    }
    let x_min = points.first().unwrap().ratio;
    let x_max = points.last().unwrap().ratio;
    let pad = 0.05 * (x_max - x_min).max(1e-6);
    let y_min = points
        .iter()
        .flat_map(|p| [p.oracle_max_im, p.engine_max_im])
        .fold(0.0f64, f64::min)
        - 0.1 * gamma;
    let y_max = 0.1 * gamma;
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(perr)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("slowest-decay rate vs hopping ratio", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(64)
        .build_cartesian_2d(x_min - pad..x_max + pad, y_min..y_max)
        .map_err(perr)?;
    chart
        .configure_mesh()
        .x_desc("v1 / v2")
        .y_desc("max Im E")
        .draw()
        .map_err(perr)?;
    let oracle_color = RGBColor(60, 60, 60);
    chart
        .draw_series(LineSeries::new(
            points.iter().map(|p| (p.ratio, p.oracle_max_im)),
            oracle_color.stroke_width(2),
        ))
        .map_err(perr)?
        .label("exact spectrum")
        .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], oracle_color.stroke_width(2)));
    chart
        .draw_series(points.iter().map(|p| Circle::new((p.ratio, p.oracle_max_im), 4, oracle_color.filled())))
        .map_err(perr)?;
    let bloch_color = RGBColor(31, 119, 180);
    chart
        .draw_series(LineSeries::new(
            points.iter().map(|p| (p.ratio, -p.dissipative_gap)),
            bloch_color.stroke_width(1),
        ))
        .map_err(perr)?
        .label("-gap (continuous k)")
        .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], bloch_color.stroke_width(1)));
    let engine_color = RGBColor(214, 96, 37);
    chart
        .draw_series(points.iter().map(|p| Cross::new((p.ratio, p.engine_max_im), 6, engine_color.stroke_width(2))))
        .map_err(perr)?
        .label("purification estimate")
        .legend(move |(x, y)| Cross::new((x + 9, y), 5, engine_color.stroke_width(2)));
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.85))
        .draw()
        .map_err(perr)?;
    root.present().map_err(perr)?;
    Ok(())
}

// ----------------------------------------------------------------------------
