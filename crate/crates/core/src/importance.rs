//! Model-agnostic feature ranking by permutation importance.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DataError, Result};
use crate::lag::FeatureMatrix;

/// Anything that maps feature rows to scalar predictions.
pub trait Regressor {
    fn is_fitted(&self) -> bool;
    fn predict(&self, x: &Array2<f64>) -> Result<Vec<f64>>;
}

/// Ordinary least squares with an intercept.
#[derive(Debug, Clone, Default)]
pub struct LinearRegressor {
    coef: Option<(Array1<f64>, f64)>,
}

impl LinearRegressor {
    pub fn fit(x: &Array2<f64>, y: &[f64]) -> Result<Self> {
        let (n, p) = x.dim();
        if n == 0 {
            return Err(DataError::Empty("regression rows"));
        }
        if y.len() != n {
            return Err(DataError::ShapeMismatch(format!("{n} rows but {} targets", y.len())));
        }
        let design = DMatrix::from_fn(n, p + 1, |i, j| if j == p { 1.0 } else { x[[i, j]] });
        let target = DVector::from_column_slice(y);
        let beta = design
            .svd(true, true)
            .solve(&target, 1e-12)
            .map_err(|e| DataError::InvalidParameter(e.to_string()))?;
        let coef = Array1::from_iter(beta.iter().take(p).cloned());
        Ok(Self { coef: Some((coef, beta[p])) })
    }

    pub fn coefficients(&self) -> Option<(&Array1<f64>, f64)> {
        self.coef.as_ref().map(|(c, b)| (c, *b))
    }
}

impl Regressor for LinearRegressor {
    fn is_fitted(&self) -> bool {
        self.coef.is_some()
    }

    fn predict(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        let (coef, intercept) = self.coef.as_ref().ok_or(DataError::Unfitted)?;
        if x.ncols() != coef.len() {
            return Err(DataError::ShapeMismatch(format!("model has {} inputs, got {}", coef.len(), x.ncols())));
        }
        Ok(x.dot(coef).iter().map(|v| v + intercept).collect())
    }
}

pub(crate) fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64
}

/// Mean increase in MSE when each column is shuffled, averaged over `trials`
/// shuffles, sorted most important first.
pub fn rank_feature_importance(
    x: &FeatureMatrix,
    y: &[f64],
    model: &dyn Regressor,
    trials: usize,
    seed: u64,
) -> Result<Vec<(String, f64)>> {
    if !model.is_fitted() {
        return Err(DataError::Unfitted);
    }
    if trials < 1 {
        return Err(DataError::InvalidParameter("trials must be >= 1".into()));
    }
    if y.len() != x.n_samples() {
        return Err(DataError::ShapeMismatch(format!("{} rows but {} targets", x.n_samples(), y.len())));
    }
    let base = mse(&model.predict(&x.values)?, y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(x.n_features());
    for (j, name) in x.feature_names.iter().enumerate() {
        let mut permuted = x.values.clone();
        let mut total = 0.0;
        for _ in 0..trials {
            let mut col: Vec<f64> = x.values.column(j).to_vec();
            col.shuffle(&mut rng);
            permuted.column_mut(j).assign(&Array1::from(col));
            total += mse(&model.predict(&permuted)?, y) - base;
        }
        scores.push((name.clone(), total / trials as f64));
    }
    scores.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(scores)
}
