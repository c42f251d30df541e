use anyhow::{anyhow, Result};
use dropball_core::simulator::Experiment;
use plotters::prelude::*;
use std::path::Path;

const COLOURS: [RGBColor; 4] = [RGBColor(31, 119, 180), RGBColor(255, 127, 14), RGBColor(44, 160, 44), RGBColor(214, 39, 40)];

/// PI against session index, one line per phase.
pub fn pi_chart(exp: &Experiment, path: &Path) -> Result<()> {
    let sessions = exp.phases.iter().map(|p| p.sessions.len()).max().unwrap_or(0).max(1) as u32;
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    let draw = |e: &dyn std::fmt::Display| anyhow!("drawing {}: {e}", path.display());
    root.fill(&WHITE).map_err(|e| draw(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("Part {}: PI per session", exp.part.number()), ("sans-serif", 22))
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(1u32..sessions, 0f64..1f64)
        .map_err(|e| draw(&e))?;
    chart
        .configure_mesh()
        .x_desc("session")
        .y_desc("PI")
        .draw()
        .map_err(|e| draw(&e))?;
    for (n, phase) in exp.phases.iter().enumerate() {
        let colour = COLOURS[n % COLOURS.len()];
        let points = phase.sessions.iter().map(|s| (s.session + 1, s.report.pi));
        chart
            .draw_series(LineSeries::new(points, colour.stroke_width(2)))
            .map_err(|e| draw(&e))?
            .label(phase.config.label.clone())
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 18, y)], colour.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| draw(&e))?;
    root.present().map_err(|e| draw(&e))?;
    Ok(())
}
