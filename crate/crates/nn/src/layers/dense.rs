use ndarray::Array3;
use rand_chacha::ChaCha8Rng;

use super::{column_sums, from_rows, rows, Module};
use crate::param::Param;

/// Affine map applied independently at every time step.
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
    input: Option<Array3<f64>>,
}

impl Dense {
    pub fn new(name: &str, inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: Param::fan_in_uniform(format!("{name}.weight"), vec![inputs, outputs], (inputs, outputs), inputs, rng),
            bias: Param::zeros(format!("{name}.bias"), vec![outputs], (1, outputs)),
            input: None,
        }
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.ncols()
    }
}

impl Module for Dense {
    fn forward(&mut self, x: &Array3<f64>, _rng: &mut ChaCha8Rng) -> Array3<f64> {
        self.input = Some(x.clone());
        self.infer(x)
    }

    fn infer(&self, x: &Array3<f64>) -> Array3<f64> {
        let (b, t, _) = x.dim();
        from_rows(rows(x).dot(&self.weight.value) + &self.bias.value, b, t)
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Array3<f64> {
        let x = self.input.as_ref().expect("forward before backward");
        let (b, t, _) = x.dim();
        let g = rows(grad);
        self.weight.grad += &rows(x).t().dot(&g);
        self.bias.grad += &column_sums(g.view());
        from_rows(g.dot(&self.weight.value.t()), b, t)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn output_shape(&self, (t, _): (usize, usize)) -> (usize, usize) {
        (t, self.outputs())
    }
}
