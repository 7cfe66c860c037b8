//! Pixel-frequency histograms and the time × bins × bands cube built from them.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::raster::{Band, RasterImage};

pub const DEFAULT_BINS: usize = 32;
pub const DEFAULT_LO_PERCENTILE: f64 = 1.0;
pub const DEFAULT_HI_PERCENTILE: f64 = 99.0;
pub const DEFAULT_CUBE_WINDOW: usize = 140;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramConfig {
    pub n_bins: usize,
    /// `n_bins + 1` strictly increasing edges per band.
    pub edges: BTreeMap<Band, Vec<f64>>,
}

impl HistogramConfig {
    pub fn uniform(n_bins: usize, ranges: &[(Band, f64, f64)]) -> Result<Self> {
        if n_bins == 0 {
            return Err(DataError::InvalidParameter("n_bins must be >= 1".into()));
        }
        let mut edges = BTreeMap::new();
        for &(band, lo, hi) in ranges {
            if !(lo < hi) {
                return Err(DataError::InvalidParameter(format!("{band}: empty range [{lo}, {hi}]")));
            }
            let step = (hi - lo) / n_bins as f64;
            let mut e: Vec<f64> = (0..=n_bins).map(|i| lo + step * i as f64).collect();
            e[n_bins] = hi;
            edges.insert(band, e);
        }
        Ok(Self { n_bins, edges })
    }

    /// Bin of `v`; values below the first edge go to bin 0 and values at or
    /// above the last edge go to the last bin.
    fn bin_of(edges: &[f64], v: f64) -> usize {
        let n_bins = edges.len() - 1;
        // number of interior edges <= v
        edges[1..n_bins].partition_point(|&e| e <= v)
    }
}

/// Percentile with linear interpolation between closest ranks; `sorted` non-empty.
fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Uniform edges between the `lo_pct` and `hi_pct` percentiles of the
/// unmasked training pixels of each band present in `images`.
///
/// A zero-spread band is widened to ±0.5 around its value.
pub fn derive_bin_edges(images: &[RasterImage], n_bins: usize, lo_pct: f64, hi_pct: f64) -> Result<HistogramConfig> {
    if !(0.0..=100.0).contains(&lo_pct) || !(0.0..=100.0).contains(&hi_pct) || lo_pct >= hi_pct {
        return Err(DataError::InvalidParameter(format!("bad percentile pair ({lo_pct}, {hi_pct})")));
    }
    let mut by_band: BTreeMap<Band, Vec<f64>> = BTreeMap::new();
    for img in images {
        let values = by_band.entry(img.band).or_default();
        values.extend(img.valid_pixels().map(f64::from));
    }
    if by_band.is_empty() {
        return Err(DataError::Empty("training images"));
    }
    let mut ranges = Vec::new();
    for (band, mut values) in by_band {
        if values.is_empty() {
            return Err(DataError::AllMasked);
        }
        values.sort_by(f64::total_cmp);
        let (mut lo, mut hi) = (percentile(&values, lo_pct), percentile(&values, hi_pct));
        if hi <= lo {
            let mid = 0.5 * (lo + hi);
            lo = mid - 0.5;
            hi = mid + 0.5;
        }
        ranges.push((band, lo, hi));
    }
    HistogramConfig::uniform(n_bins, &ranges)
}

/// Counts unmasked pixels per bin, optionally normalized to sum to 1.
pub fn compute_histogram(img: &RasterImage, cfg: &HistogramConfig, normalize: bool) -> Result<Vec<f64>> {
    let edges = cfg
        .edges
        .get(&img.band)
        .ok_or_else(|| DataError::InvalidParameter(format!("no bin edges for band {}", img.band)))?;
    let mut counts = vec![0.0; cfg.n_bins];
    let mut total = 0usize;
    for v in img.valid_pixels() {
        counts[HistogramConfig::bin_of(edges, f64::from(v))] += 1.0;
        total += 1;
    }
    if total == 0 {
        return Err(DataError::AllMasked);
    }
    if normalize {
        let t = total as f64;
        counts.iter_mut().for_each(|c| *c /= t);
    }
    Ok(counts)
}

/// Per-day histograms of both bands.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DailyHistograms {
    pub n_bins: usize,
    pub bands: BTreeMap<Band, BTreeMap<NaiveDate, Vec<f64>>>,
}

impl DailyHistograms {
    pub fn new(n_bins: usize) -> Self {
        Self { n_bins, bands: BTreeMap::new() }
    }

    pub fn insert(&mut self, band: Band, date: NaiveDate, hist: Vec<f64>) {
        self.bands.entry(band).or_default().insert(date, hist);
    }

    fn get(&self, band: Band, date: NaiveDate) -> Result<&Vec<f64>> {
        self.bands
            .get(&band)
            .and_then(|m| m.get(&date))
            .ok_or(DataError::MissingBandDay { band: band.to_string(), date })
    }

    /// Days on which every band has a histogram.
    pub fn complete_days(&self) -> Vec<NaiveDate> {
        let Some(first) = self.bands.get(&Band::ALL[0]) else { return Vec::new() };
        first
            .keys()
            .filter(|d| Band::ALL[1..].iter().all(|b| self.bands.get(b).is_some_and(|m| m.contains_key(d))))
            .copied()
            .collect()
    }

    /// Histogram images, masked then binned, for every image in `images`.
    pub fn from_images(images: &[RasterImage], cfg: &HistogramConfig, normalize: bool) -> Result<Self> {
        let mut out = Self::new(cfg.n_bins);
        for img in images {
            out.insert(img.band, img.date, compute_histogram(img, cfg, normalize)?);
        }
        Ok(out)
    }
}

/// Time × bins × bands tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramCube {
    pub values: Array3<f64>,
    pub dates: Vec<NaiveDate>,
}

/// Cube over the `window` days ending at `end` (inclusive).
pub fn build_cube(hist: &DailyHistograms, end: NaiveDate, window: usize) -> Result<HistogramCube> {
    if window == 0 {
        return Err(DataError::InvalidParameter("cube window must be >= 1".into()));
    }
    let n_bands = Band::ALL.len();
    let mut values = Array3::zeros((window, hist.n_bins, n_bands));
    let mut dates = Vec::with_capacity(window);
    for t in 0..window {
        let date = end - chrono::Days::new((window - 1 - t) as u64);
        for band in Band::ALL {
            let h = hist.get(band, date)?;
            if h.len() != hist.n_bins {
                return Err(DataError::ShapeMismatch(format!("{band} on {date}: {} bins", h.len())));
            }
            for (k, &v) in h.iter().enumerate() {
                values[[t, k, band.index()]] = v;
            }
        }
        dates.push(date);
    }
    Ok(HistogramCube { values, dates })
}

/// Row `t` holds band 0's bins followed by band 1's bins.
pub fn flatten_cube(cube: &HistogramCube) -> Array2<f64> {
    let (t, bins, bands) = cube.values.dim();
    Array2::from_shape_fn((t, bins * bands), |(i, j)| cube.values[[i, j % bins, j / bins]])
}

pub fn unflatten_cube(flat: &Array2<f64>, n_bins: usize, dates: Vec<NaiveDate>) -> Result<HistogramCube> {
    let (t, width) = flat.dim();
    if n_bins == 0 || width % n_bins != 0 || dates.len() != t {
        return Err(DataError::ShapeMismatch(format!("{t}x{width} matrix with {n_bins} bins")));
    }
    let bands = width / n_bins;
    let values = Array3::from_shape_fn((t, n_bins, bands), |(i, k, b)| flat[[i, b * n_bins + k]]);
    Ok(HistogramCube { values, dates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{apply_mask, LandMask};
    use rand::{Rng, SeedableRng};

    fn day(n: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2017, 3, 1).unwrap() + chrono::Days::new(n)
    }

    fn img(w: usize, h: usize, band: Band, pixels: Vec<f32>) -> RasterImage {
        RasterImage::new(w, h, band, day(0), pixels).unwrap()
    }

    #[test]
    fn thirty_two_bins_have_thirty_three_edges() {
        let cfg = HistogramConfig::uniform(32, &[(Band::Moisture, 0.0, 1.0)]).unwrap();
        assert_eq!(cfg.edges[&Band::Moisture].len(), 33);
    }

    #[test]
    fn percentile_edges_on_uniform_pixels() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let pixels: Vec<f32> = (0..100 * 100).map(|_| rng.random_range(0.0f32..100.0)).collect();
        let image = img(100, 100, Band::SurfaceTemperature, pixels.clone());
        let cfg = derive_bin_edges(&[image], 32, 1.0, 99.0).unwrap();
        let e = &cfg.edges[&Band::SurfaceTemperature];

        // oracle: nearest-rank percentiles on the sorted sample
        let mut sorted: Vec<f64> = pixels.iter().map(|&p| p as f64).collect();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let lo = sorted[(0.01 * (n - 1) as f64).round() as usize];
        let hi = sorted[(0.99 * (n - 1) as f64).round() as usize];
        assert!((e[0] - lo).abs() < 0.05 && (e[32] - hi).abs() < 0.05);
        assert!((e[0] - 1.0).abs() < 0.5 && (e[32] - 99.0).abs() < 0.5);
        let step = (e[32] - e[0]) / 32.0;
        assert!(e.windows(2).all(|w| (w[1] - w[0] - step).abs() < 1e-9));
    }

    #[test]
    fn constant_pixels_widen() {
        let cfg = derive_bin_edges(&[img(2, 2, Band::Moisture, vec![0.3; 4])], 4, 1.0, 99.0).unwrap();
        let e = &cfg.edges[&Band::Moisture];
        assert!((e[0] - (0.3f32 as f64 - 0.5)).abs() < 1e-12);
        assert!((e[4] - (0.3f32 as f64 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn all_masked_is_an_error() {
        let image = apply_mask(&img(2, 2, Band::Moisture, vec![1.0; 4]), &LandMask::all(2, 2, false)).unwrap();
        assert!(matches!(derive_bin_edges(&[image.clone()], 8, 1.0, 99.0), Err(DataError::AllMasked)));
        let cfg = HistogramConfig::uniform(8, &[(Band::Moisture, 0.0, 1.0)]).unwrap();
        assert!(matches!(compute_histogram(&image, &cfg, false), Err(DataError::AllMasked)));
    }

    #[test]
    fn constant_image_fills_one_bin() {
        let cfg = HistogramConfig::uniform(32, &[(Band::SurfaceTemperature, 0.0, 32.0)]).unwrap();
        let h = compute_histogram(&img(4, 4, Band::SurfaceTemperature, vec![17.5; 16]), &cfg, false).unwrap();
        for (j, &c) in h.iter().enumerate() {
            assert_eq!(c, if j == 17 { 16.0 } else { 0.0 });
        }
    }

    #[test]
    fn hand_tally_four_bins() {
        // edges 0,1,2,3,4; includes clipping on both ends and a masked pixel
        let cfg = HistogramConfig::uniform(4, &[(Band::Moisture, 0.0, 4.0)]).unwrap();
        #[rustfmt::skip]
        let pixels = vec![
            0.5, 1.0, 1.5, 2.0,
            2.5, 3.0, 3.5, 4.0,
            -3.0, 9.0, 0.0, 0.99,
            crate::raster::DEFAULT_NODATA, 2.2, 3.9, 1.01,
        ];
        let h = compute_histogram(&img(4, 4, Band::Moisture, pixels.clone()), &cfg, false).unwrap();
        let mut oracle = [0.0; 4];
        for p in pixels {
            if p == crate::raster::DEFAULT_NODATA {
                continue;
            }
            let b = if p < 1.0 {
                0
            } else if p < 2.0 {
                1
            } else if p < 3.0 {
                2
            } else {
                3
            };
            oracle[b] += 1.0;
        }
        assert_eq!(h, oracle.to_vec());
        assert_eq!(h, vec![4.0, 3.0, 3.0, 5.0]);
        let normalized = compute_histogram(&img(4, 4, Band::Moisture, vec![1.7; 16]), &cfg, true).unwrap();
        assert!((normalized.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cube_shapes_and_flatten_order() {
        let mut hist = DailyHistograms::new(32);
        for d in 0..150 {
            hist.insert(Band::SurfaceTemperature, day(d), vec![d as f64; 32]);
            hist.insert(Band::Moisture, day(d), vec![-(d as f64); 32]);
        }
        let cube = build_cube(&hist, day(149), 140).unwrap();
        assert_eq!(cube.values.dim(), (140, 32, 2));
        assert_eq!(cube.dates[0], day(10));
        let flat = flatten_cube(&cube);
        assert_eq!(flat.dim(), (140, 64));
        assert_eq!(unflatten_cube(&flat, 32, cube.dates.clone()).unwrap(), cube);

        let mut one = DailyHistograms::new(2);
        one.insert(Band::SurfaceTemperature, day(0), vec![1.0, 2.0]);
        one.insert(Band::Moisture, day(0), vec![3.0, 4.0]);
        let flat = flatten_cube(&build_cube(&one, day(0), 1).unwrap());
        assert_eq!(flat.row(0).to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn missing_band_day() {
        let mut hist = DailyHistograms::new(2);
        hist.insert(Band::SurfaceTemperature, day(0), vec![1.0, 0.0]);
        assert!(matches!(build_cube(&hist, day(0), 1), Err(DataError::MissingBandDay { .. })));
        assert!(hist.complete_days().is_empty());
    }
}
