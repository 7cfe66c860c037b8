//! Principal component projection, fit by thin SVD of the centered data.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::lag::FeatureMatrix;

pub const DEFAULT_COMPONENTS: usize = 36;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// Features × k, orthonormal columns ordered by explained variance.
    pub components: Array2<f64>,
    pub explained_variance: Array1<f64>,
    pub explained_variance_ratio: Array1<f64>,
}

impl PcaModel {
    pub fn fit(x: &Array2<f64>, k: usize) -> Result<Self> {
        let (rows, cols) = x.dim();
        if k == 0 || k > rows.min(cols) {
            return Err(DataError::ComponentsTooLarge { k, rows, cols });
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let centered = x - &mean;
        let m = DMatrix::from_row_iterator(rows, cols, centered.iter().cloned());
        let svd = m.svd(false, true);
        let v_t = svd.v_t.expect("requested V^T");

        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

        let dof = (rows.max(2) - 1) as f64;
        let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
        let mut components = Array2::zeros((cols, k));
        let mut variance = Array1::zeros(k);
        let mut ratio = Array1::zeros(k);
        for (c, &idx) in order.iter().take(k).enumerate() {
            let s = svd.singular_values[idx];
            let mut v: Vec<f64> = v_t.row(idx).iter().cloned().collect();
            // sign convention: largest-magnitude loading is positive
            let pivot = v.iter().cloned().fold(0.0f64, |acc, e| if e.abs() > acc.abs() { e } else { acc });
            if pivot < 0.0 {
                v.iter_mut().for_each(|e| *e = -*e);
            }
            components.column_mut(c).assign(&Array1::from(v));
            variance[c] = s * s / dof;
            ratio[c] = if total > 0.0 { s * s / total } else { 0.0 };
        }
        if ratio.iter().any(|&r| r < 1e-12) {
            log::warn!("PCA input is rank-deficient: some of the {k} components carry no variance");
        }
        Ok(Self { mean, components, explained_variance: variance, explained_variance_ratio: ratio })
    }

    pub fn n_components(&self) -> usize {
        self.components.ncols()
    }

    pub fn transform(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(DataError::ShapeMismatch(format!("PCA fit on {} features, got {}", self.mean.len(), x.ncols())));
        }
        Ok((x - &self.mean).dot(&self.components))
    }

    pub fn inverse_transform(&self, z: &Array2<f64>) -> Array2<f64> {
        z.dot(&self.components.t()) + &self.mean
    }
}

pub fn fit_pca(x: &FeatureMatrix, k: usize) -> Result<PcaModel> {
    PcaModel::fit(&x.values, k)
}

pub fn pca_transform(model: &PcaModel, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    let values = model.transform(&x.values)?;
    let names = (0..model.n_components()).map(|i| format!("pc{i}")).collect();
    FeatureMatrix::new(values, x.sample_dates.clone(), names)
}
