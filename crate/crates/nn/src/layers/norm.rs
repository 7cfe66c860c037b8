use ndarray::{Array2, Array3, Axis};
use rand_chacha::ChaCha8Rng;

use super::{from_rows, rows, Module};
use crate::param::Param;

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPSILON: f64 = 1e-3;

/// Per-channel batch normalization over batch and time.
///
/// Training uses batch statistics and updates the running averages;
/// inference uses the running averages.
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<(Array2<f64>, Array2<f64>, (usize, usize))>,
}

impl BatchNorm {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), vec![channels], Array2::ones((1, channels))),
            beta: Param::zeros(format!("{name}.beta"), vec![channels], (1, channels)),
            running_mean: Param::buffer(format!("{name}.running_mean"), vec![channels], Array2::zeros((1, channels))),
            running_var: Param::buffer(format!("{name}.running_var"), vec![channels], Array2::ones((1, channels))),
            momentum: BN_MOMENTUM,
            eps: BN_EPSILON,
            cache: None,
        }
    }
}

impl Module for BatchNorm {
    fn forward(&mut self, x: &Array3<f64>, _rng: &mut ChaCha8Rng) -> Array3<f64> {
        let (b, t, _) = x.dim();
        let m = rows(x);
        let mean = m.mean_axis(Axis(0)).expect("non-empty batch").insert_axis(Axis(0));
        let centered = &m - &mean;
        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch").insert_axis(Axis(0));
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let xhat = &centered * &inv_std;
        let out = &xhat * &self.gamma.value + &self.beta.value;

        let mo = self.momentum;
        self.running_mean.value = &self.running_mean.value * mo + &mean * (1.0 - mo);
        self.running_var.value = &self.running_var.value * mo + &var * (1.0 - mo);
        self.running_mean.round_to_f32();
        self.running_var.round_to_f32();

        self.cache = Some((xhat, inv_std, (b, t)));
        from_rows(out, b, t)
    }

    fn infer(&self, x: &Array3<f64>) -> Array3<f64> {
        let (b, t, _) = x.dim();
        let inv_std = self.running_var.value.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let scale = &self.gamma.value * &inv_std;
        let out = (&rows(x) - &self.running_mean.value) * &scale + &self.beta.value;
        from_rows(out, b, t)
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Array3<f64> {
        let (xhat, inv_std, (b, t)) = self.cache.as_ref().expect("forward before backward");
        let g = rows(grad);
        let n = g.nrows() as f64;
        self.gamma.grad += &(&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.beta.grad += &g.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dxhat = &g * &self.gamma.value;
        let sum_d = dxhat.sum_axis(Axis(0)).insert_axis(Axis(0));
        let sum_dx = (&dxhat * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
        let gx = (dxhat * n - &sum_d - &(xhat * &sum_dx)) * inv_std / n;
        from_rows(gx, *b, *t)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta, &self.running_mean, &self.running_var]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta, &mut self.running_mean, &mut self.running_var]
    }

    fn output_shape(&self, input: (usize, usize)) -> (usize, usize) {
        input
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn gradient() {
        let mut bn = BatchNorm::new("bn", 3);
        bn.gamma.value.assign(&ndarray::array![[1.5, -0.5, 0.8]]);
        bn.beta.value.fill(0.2);
        assert!(check_module(&mut bn, &random3((3, 4, 3), 1), 2) < 1e-5);
    }

    #[test]
    fn training_output_is_standardized() {
        let mut bn = BatchNorm::new("bn", 2);
        let x = random3((4, 5, 2), 3) * 7.0 + 3.0;
        let y = bn.forward(&x, &mut ChaCha8Rng::seed_from_u64(0));
        let m = rows(&y);
        for c in m.columns() {
            assert!(c.mean().unwrap().abs() < 1e-12);
            let var = c.mapv(|v| v * v).mean().unwrap();
            assert!((var - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn running_stats_converge() {
        let mut bn = BatchNorm::new("bn", 1);
        let x = random3((8, 8, 1), 5) + 4.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            bn.forward(&x, &mut rng);
        }
        let mean = x.mean().unwrap();
        assert!((bn.running_mean.value[[0, 0]] - mean).abs() < 1e-5);
        let y = bn.infer(&x);
        assert!(y.mean().unwrap().abs() < 1e-4);
    }
}
