//! SVG line charts of forecasts against the truth.

use std::path::Path;

use plotters::prelude::*;
use strawcast_core::ForecastSeries;

use crate::error::{CliError, Result};

const PALETTE: [RGBColor; 4] = [RGBColor(31, 119, 180), RGBColor(255, 127, 14), RGBColor(44, 160, 44), RGBColor(148, 103, 189)];

fn plot_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// Draws the truth of the first series in black, then each labelled forecast.
pub fn forecast_plot(path: &Path, title: &str, lines: &[(String, ForecastSeries)]) -> Result<()> {
    let Some((_, first)) = lines.first() else {
        return Err(CliError::Data("nothing to plot".into()));
    };
    let truth = first.truth.clone().ok_or_else(|| CliError::Data(format!("{title}: forecasts carry no truth")))?;
    let n = first.len();
    let values = lines.iter().flat_map(|(_, f)| f.predicted.iter()).chain(&truth).copied().filter(|v| v.is_finite());
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return Err(CliError::Numeric(format!("{title}: no finite values to plot")));
    }
    let pad = ((hi - lo) * 0.05).max(1e-6);

    let root = SVGBackend::new(path, (960, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(0..n.max(2) - 1, (lo - pad)..(hi + pad))
        .map_err(|e| plot_err(path, e))?;
    let dates = first.dates.clone();
    chart
        .configure_mesh()
        .x_desc("date")
        .x_label_formatter(&|i| dates.get(*i).map(|d| d.to_string()).unwrap_or_default())
        .x_labels(6)
        .draw()
        .map_err(|e| plot_err(path, e))?;
    chart
        .draw_series(LineSeries::new(truth.iter().copied().enumerate(), BLACK.stroke_width(2)))
        .map_err(|e| plot_err(path, e))?
        .label("true")
        .legend(|(x, y)| PathElement::new([(x, y), (x + 16, y)], BLACK));
    for (i, (label, f)) in lines.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(f.predicted.iter().copied().enumerate(), color))
            .map_err(|e| plot_err(path, e))?
            .label(label.as_str())
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 16, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(path, e))?;
    root.present().map_err(|e| plot_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    #[test]
    fn writes_svg() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.svg");
        let dates: Vec<NaiveDate> = (0..10).map(|i| NaiveDate::from_ymd_opt(2018, 3, 1).unwrap() + chrono::Days::new(i)).collect();
        let truth: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let pred: Vec<f64> = truth.iter().map(|v| v + 0.5).collect();
        let f = ForecastSeries::new(dates, pred, Some(truth)).unwrap();
        forecast_plot(&path, "test", &[("m".into(), f)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("<polyline"));
    }
}
