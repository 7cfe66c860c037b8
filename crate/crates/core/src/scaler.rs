use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::lag::FeatureMatrix;

/// Per-feature min-max normalization fit on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Array1<f64>,
    pub max: Array1<f64>,
}

impl Scaler {
    pub fn fit(train: &Array2<f64>) -> Result<Self> {
        if train.nrows() == 0 || train.ncols() == 0 {
            return Err(DataError::Empty("scaler training matrix"));
        }
        let min = train.fold_axis(Axis(0), f64::INFINITY, |&a, &b| a.min(b));
        let max = train.fold_axis(Axis(0), f64::NEG_INFINITY, |&a, &b| a.max(b));
        Ok(Self { min, max })
    }

    /// Maps training min to 0 and max to 1. Constant columns map to 0.
    /// Unseen data may land outside [0, 1]; nothing is clipped.
    pub fn transform(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.min.len() {
            return Err(DataError::ShapeMismatch(format!(
                "scaler fit on {} features, got {}",
                self.min.len(),
                x.ncols()
            )));
        }
        let mut out = x.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (lo, span) = (self.min[j], self.max[j] - self.min[j]);
            if span > 0.0 {
                col.mapv_inplace(|v| (v - lo) / span);
            } else {
                col.fill(0.0);
            }
        }
        Ok(out)
    }

    pub fn inverse_transform(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (lo, span) = (self.min[j], self.max[j] - self.min[j]);
            col.mapv_inplace(|v| lo + v * span);
        }
        out
    }
}

pub fn fit_scaler(train: &FeatureMatrix) -> Result<Scaler> {
    Scaler::fit(&train.values)
}

pub fn apply_scaler(scaler: &Scaler, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    Ok(FeatureMatrix { values: scaler.transform(&x.values)?, ..x.clone() })
}
