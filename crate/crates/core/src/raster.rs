//! Daily satellite rasters, land-cover masks and the portable grid container.
//!
//! A raster on disk is a JSON manifest (`*.json`) describing width, height,
//! band, date and no-data sentinel, next to a row-major little-endian `f32`
//! blob named by the manifest's `data_file`. Masks use the same container
//! with band `mask` and 0/1 pixel values.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};

pub const DEFAULT_NODATA: f32 = -9999.0;
const MASK_BAND: &str = "mask";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    SurfaceTemperature,
    Moisture,
}

impl Band {
    pub const ALL: [Band; 2] = [Band::SurfaceTemperature, Band::Moisture];

    pub fn as_str(&self) -> &'static str {
        match self {
            Band::SurfaceTemperature => "surface_temperature",
            Band::Moisture => "moisture",
        }
    }

    pub fn parse(s: &str) -> Option<Band> {
        Band::ALL.into_iter().find(|b| b.as_str() == s)
    }

    pub fn index(&self) -> usize {
        match self {
            Band::SurfaceTemperature => 0,
            Band::Moisture => 1,
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    pub band: Band,
    pub date: NaiveDate,
    pub nodata: f32,
    /// Row-major, `width * height` values.
    pub pixels: Vec<f32>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, band: Band, date: NaiveDate, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(DataError::ShapeMismatch(format!(
                "{width}x{height} raster needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self { width, height, band, date, nodata: DEFAULT_NODATA, pixels })
    }

    pub fn is_nodata(&self, v: f32) -> bool {
        v == self.nodata || !v.is_finite()
    }

    /// Values of pixels that carry a reading.
    pub fn valid_pixels(&self) -> impl Iterator<Item = f32> + '_ {
        self.pixels.iter().copied().filter(move |&v| !self.is_nodata(v))
    }

    pub fn valid_count(&self) -> usize {
        self.valid_pixels().count()
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LandMask {
    pub width: usize,
    pub height: usize,
    pub keep: Vec<bool>,
}

impl LandMask {
    pub fn new(width: usize, height: usize, keep: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || keep.len() != width * height {
            return Err(DataError::ShapeMismatch(format!(
                "{width}x{height} mask needs {} cells, got {}",
                width * height,
                keep.len()
            )));
        }
        Ok(Self { width, height, keep })
    }

    pub fn all(width: usize, height: usize, keep: bool) -> Self {
        Self { width, height, keep: vec![keep; width * height] }
    }

    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }
}

/// Pixels outside the mask become no-data; pixels inside are untouched.
pub fn apply_mask(img: &RasterImage, mask: &LandMask) -> Result<RasterImage> {
    if img.width != mask.width || img.height != mask.height {
        return Err(DataError::ShapeMismatch(format!(
            "image is {}x{}, mask is {}x{}",
            img.width, img.height, mask.width, mask.height
        )));
    }
    let pixels = img.pixels.iter().zip(&mask.keep).map(|(&p, &k)| if k { p } else { img.nodata }).collect();
    Ok(RasterImage { pixels, ..img.clone() })
}

/// Expands a sparse (3-day cadence) series to daily images.
///
/// Every source image is copied to the day before and the day after unless a
/// source already sits on that day. A day claimed by two sources takes the
/// nearer one, and on a tie the earlier one.
pub fn fill_moisture_gaps(series: &[RasterImage]) -> Result<Vec<RasterImage>> {
    for pair in series.windows(2) {
        if pair[1].date <= pair[0].date {
            return Err(DataError::InvalidParameter(format!(
                "moisture dates must be strictly increasing ({} then {})",
                pair[0].date, pair[1].date
            )));
        }
    }
    let mut assigned: BTreeMap<NaiveDate, (i64, usize)> = BTreeMap::new();
    for (idx, img) in series.iter().enumerate() {
        for offset in [0i64, -1, 1] {
            let day = img.date + chrono::Duration::days(offset);
            let distance = offset.abs();
            match assigned.get(&day) {
                // earlier sources were inserted first, so `<=` keeps them on ties
                Some(&(d, _)) if d <= distance => {}
                _ => {
                    assigned.insert(day, (distance, idx));
                }
            }
        }
    }
    Ok(assigned
        .into_iter()
        .map(|(day, (_, idx))| RasterImage { date: day, ..series[idx].clone() })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    width: usize,
    height: usize,
    band: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    date: Option<NaiveDate>,
    nodata: f32,
    data_file: String,
}

fn bad_manifest(path: &Path, message: impl Into<String>) -> DataError {
    DataError::BadManifest { path: path.to_path_buf(), message: message.into() }
}

fn write_container(manifest_path: &Path, manifest: &Manifest, pixels: &[f32]) -> Result<()> {
    let blob_path = manifest_path.with_file_name(&manifest.data_file);
    let bytes: Vec<u8> = pixels.iter().flat_map(|p| p.to_le_bytes()).collect();
    std::fs::write(&blob_path, bytes).map_err(|e| DataError::io(&blob_path, e))?;
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(manifest_path, text).map_err(|e| DataError::io(manifest_path, e))
}

fn read_container(manifest_path: &Path) -> Result<(Manifest, Vec<f32>)> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| DataError::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| bad_manifest(manifest_path, e.to_string()))?;
    if manifest.data_file.contains(['/', '\\']) {
        return Err(bad_manifest(manifest_path, "data_file must be a sibling file name"));
    }
    let blob_path = manifest_path.with_file_name(&manifest.data_file);
    let bytes = std::fs::read(&blob_path).map_err(|e| DataError::io(&blob_path, e))?;
    let expected = manifest.width * manifest.height * 4;
    if bytes.len() != expected {
        return Err(bad_manifest(
            manifest_path,
            format!("blob has {} bytes, expected {expected}", bytes.len()),
        ));
    }
    let pixels = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok((manifest, pixels))
}

fn blob_name(manifest_path: &Path) -> String {
    let stem = manifest_path.file_stem().and_then(|s| s.to_str()).unwrap_or("raster");
    format!("{stem}.bin")
}

pub fn write_raster(manifest_path: &Path, img: &RasterImage) -> Result<()> {
    let manifest = Manifest {
        width: img.width,
        height: img.height,
        band: img.band.as_str().to_string(),
        date: Some(img.date),
        nodata: img.nodata,
        data_file: blob_name(manifest_path),
    };
    write_container(manifest_path, &manifest, &img.pixels)
}

pub fn read_raster(manifest_path: &Path) -> Result<RasterImage> {
    let (m, pixels) = read_container(manifest_path)?;
    let band = Band::parse(&m.band).ok_or_else(|| bad_manifest(manifest_path, format!("unknown band `{}`", m.band)))?;
    let date = m.date.ok_or_else(|| bad_manifest(manifest_path, "raster manifest needs a date"))?;
    Ok(RasterImage { width: m.width, height: m.height, band, date, nodata: m.nodata, pixels })
}

pub fn write_mask(manifest_path: &Path, mask: &LandMask) -> Result<()> {
    let manifest = Manifest {
        width: mask.width,
        height: mask.height,
        band: MASK_BAND.into(),
        date: None,
        nodata: DEFAULT_NODATA,
        data_file: blob_name(manifest_path),
    };
    let pixels: Vec<f32> = mask.keep.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect();
    write_container(manifest_path, &manifest, &pixels)
}

pub fn read_mask(manifest_path: &Path) -> Result<LandMask> {
    let (m, pixels) = read_container(manifest_path)?;
    if m.band != MASK_BAND {
        return Err(bad_manifest(manifest_path, format!("expected band `mask`, found `{}`", m.band)));
    }
    let keep = pixels
        .iter()
        .map(|&v| match v {
            v if v == 1.0 => Ok(true),
            v if v == 0.0 => Ok(false),
            v => Err(bad_manifest(manifest_path, format!("mask values must be 0 or 1, found {v}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    LandMask::new(m.width, m.height, keep)
}

/// Loads every raster manifest in `dir`, skipping masks, sorted by (band, date).
pub fn read_raster_dir(dir: &Path) -> Result<Vec<RasterImage>> {
    let entries = std::fs::read_dir(dir).map_err(|e| DataError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut images = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(&path).map_err(|e| DataError::io(&path, e))?;
        let probe: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad_manifest(&path, e.to_string()))?;
        if probe.get("band").and_then(|b| b.as_str()) == Some(MASK_BAND) {
            continue;
        }
        images.push(read_raster(&path)?);
    }
    images.sort_by_key(|img| (img.band, img.date));
    Ok(images)
}
