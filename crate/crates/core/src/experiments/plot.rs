//! SVG figures: line plots, min/max bands and decision-boundary rasters.

use std::path::Path;

use plotters::prelude::*;

use crate::data::Dataset;
use crate::error::{Result, SimError};
use crate::network::Network;

pub const RASTER_SIZE: usize = 100;

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(255, 127, 14),
    RGBColor(148, 103, 189),
    RGBColor(90, 90, 90),
];

fn plot_err<E: std::fmt::Debug>(e: E) -> SimError {
    SimError::Plot(format!("{e:?}"))
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), points }
    }
}

/// Shaded min–max band with a mean line.
pub struct Band {
    pub label: String,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

fn bounds<'a>(xs: impl Iterator<Item = &'a (f64, f64)> + Clone) -> ((f64, f64), (f64, f64)) {
    let fold = |f: fn(&(f64, f64)) -> f64| {
        xs.clone()
            .map(f)
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let pad = |(lo, hi): (f64, f64)| {
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi + 0.05 * (hi - lo))
        }
    };
    (pad(fold(|p| p.0)), pad(fold(|p| p.1)))
}

pub fn line_plot(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<()> {
    let ((x0, x1), (y0, y1)) = bounds(series.iter().flat_map(|s| s.points.iter()));
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0.min(0.0)..y1)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(y_label)
        .draw()
        .map_err(plot_err)?;
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(s.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

pub fn band_plot(path: &Path, title: &str, x_label: &str, y_label: &str, bands: &[Band]) -> Result<()> {
    let all: Vec<(f64, f64)> = bands
        .iter()
        .flat_map(|b| b.x.iter().zip(&b.min).chain(b.x.iter().zip(&b.max)))
        .map(|(x, y)| (*x, *y))
        .collect();
    let ((x0, x1), (y0, y1)) = bounds(all.iter());
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0.min(0.0)..y1)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(y_label)
        .draw()
        .map_err(plot_err)?;
    for (k, b) in bands.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let outline: Vec<(f64, f64)> = b
            .x
            .iter()
            .zip(&b.max)
            .map(|(x, y)| (*x, *y))
            .chain(b.x.iter().zip(&b.min).rev().map(|(x, y)| (*x, *y)))
            .collect();
        chart
            .draw_series(std::iter::once(Polygon::new(outline, color.mix(0.25).filled())))
            .map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new(
                b.x.iter().zip(&b.mean).map(|(x, y)| (*x, *y)),
                color.stroke_width(2),
            ))
            .map_err(plot_err)?
            .label(b.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Network output on a `RASTER_SIZE × RASTER_SIZE` grid of cell centres
/// over `[-1, 1]²`, row 0 at the top (`x2 = +1`).
pub fn decision_grid(network: &Network) -> Result<Vec<Vec<f64>>> {
    if network.n_inputs() != 2 || network.n_outputs() != 1 {
        return Err(SimError::Plot("decision rasters need a 2-input, 1-output network".into()));
    }
    (0..RASTER_SIZE)
        .map(|row| {
            let x2 = 1.0 - (row as f64 + 0.5) * 2.0 / RASTER_SIZE as f64;
            (0..RASTER_SIZE)
                .map(|col| {
                    let x1 = -1.0 + (col as f64 + 0.5) * 2.0 / RASTER_SIZE as f64;
                    Ok(network.predict(&[x1, x2])?[0])
                })
                .collect()
        })
        .collect()
}

/// Red where the network predicts "inside", blue elsewhere, with the data
/// points drawn on top.
pub fn decision_raster(path: &Path, title: &str, grid: &[Vec<f64>], data: &Dataset) -> Result<()> {
    let root = SVGBackend::new(path, (520, 540)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(40)
        .build_cartesian_2d(-1.0..1.0, -1.0..1.0)
        .map_err(plot_err)?;
    chart.configure_mesh().disable_mesh().draw().map_err(plot_err)?;
    let cell = 2.0 / grid.len().max(1) as f64;
    let inside = RGBColor(244, 180, 180);
    let outside = RGBColor(176, 200, 236);
    chart
        .draw_series(grid.iter().enumerate().flat_map(|(row, cols)| {
            cols.iter().enumerate().map(move |(col, y)| {
                let x0 = -1.0 + col as f64 * cell;
                let y1 = 1.0 - row as f64 * cell;
                let fill = if *y > 0.0 { inside } else { outside };
                Rectangle::new([(x0, y1 - cell), (x0 + cell, y1)], fill.filled())
            })
        }))
        .map_err(plot_err)?;
    chart
        .draw_series(data.iter().map(|(x, t)| {
            let color = if t[0] > 0.0 { PALETTE[1] } else { PALETTE[0] };
            Circle::new((x[0], x[1]), 3, color.filled())
        }))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}
