use std::path::Path;

use plotters::prelude::*;

use super::CurveRow;
use crate::error::{Error, Result};

/// Mean reward against training episodes, with +-1 std lines and an
/// optional horizontal reference, as SVG.
pub fn plot_curve(path: &Path, rows: &[CurveRow], reference: Option<(&str, f64)>) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Plot("no rows to plot".into()));
    }
    let plot_err = |e: &dyn std::fmt::Display| Error::Plot(format!("{}: {e}", path.display()));
    let x_max = rows.iter().map(|r| r.episodes).max().unwrap_or(1).max(1) as f64;
    let mut lo = rows.iter().map(|r| r.mean - r.std).fold(f64::INFINITY, f64::min);
    let mut hi = rows.iter().map(|r| r.mean + r.std).fold(f64::NEG_INFINITY, f64::max);
    if let Some((_, y)) = reference {
        lo = lo.min(y);
        hi = hi.max(y);
    }
    let pad = ((hi - lo) * 0.05).max(1e-6);

    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..x_max, (lo - pad)..(hi + pad))
        .map_err(|e| plot_err(&e))?;
    chart
        .configure_mesh()
        .x_desc("training episodes")
        .y_desc("discounted reward")
        .draw()
        .map_err(|e| plot_err(&e))?;

    let pts = |f: fn(&CurveRow) -> f64| rows.iter().map(move |r| (r.episodes as f64, f(r)));
    chart
        .draw_series(LineSeries::new(pts(|r| r.mean), BLUE.stroke_width(2)))
        .map_err(|e| plot_err(&e))?
        .label("NeurWIN")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLUE));
    let band = BLUE.mix(0.3);
    chart
        .draw_series(LineSeries::new(pts(|r| r.mean + r.std), band))
        .map_err(|e| plot_err(&e))?;
    chart
        .draw_series(LineSeries::new(pts(|r| r.mean - r.std), band))
        .map_err(|e| plot_err(&e))?;
    if let Some((label, y)) = reference {
        chart
            .draw_series(LineSeries::new(vec![(0.0, y), (x_max, y)], RED))
            .map_err(|e| plot_err(&e))?
            .label(label)
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(&e))?;
    root.present().map_err(|e| plot_err(&e))?;
    Ok(())
}
