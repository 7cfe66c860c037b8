//! Layer primitives. Activations are `(batch, time, channels)` tensors.
//!
//! Training-mode `forward` caches what `backward` needs and `backward`
//! accumulates parameter gradients; `infer` is a read-only pass.

mod attention;
mod conv;
mod dense;
mod norm;
mod recurrent;
mod residual;

pub use attention::{
    additive_attention, additive_attention_backward, additive_attention_weights, AdditiveAttention, AttentionParams,
};
pub use conv::{causal_conv, Conv1d, Padding};
pub use dense::Dense;
pub use norm::BatchNorm;
pub use recurrent::{Gru, Lstm};
pub use residual::ResidualBlock;

use ndarray::{s, Array2, Array3, ArrayView2, Axis, CowArray, Ix2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::param::Param;

pub trait Module: Send + Sync {
    fn forward(&mut self, x: &Array3<f64>, rng: &mut ChaCha8Rng) -> Array3<f64>;
    fn infer(&self, x: &Array3<f64>) -> Array3<f64>;
    fn backward(&mut self, grad: &Array3<f64>) -> Array3<f64>;
    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }
    /// Output `(time, channels)` for an input of `(time, channels)`.
    fn output_shape(&self, input: (usize, usize)) -> (usize, usize);
}

/// `(B, T, C)` as a `(B·T, C)` matrix, copying only when `x` is not in standard layout.
pub(crate) fn rows(x: &Array3<f64>) -> CowArray<'_, f64, Ix2> {
    let (b, t, c) = x.dim();
    x.as_standard_layout().into_shape_with_order((b * t, c)).expect("standard layout")
}

pub(crate) fn from_rows(m: Array2<f64>, b: usize, t: usize) -> Array3<f64> {
    let c = m.ncols();
    m.as_standard_layout().into_owned().into_shape_with_order((b, t, c)).expect("row count matches")
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

#[derive(Debug, Default)]
pub struct Relu {
    mask: Option<Array3<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Module for Relu {
    fn forward(&mut self, x: &Array3<f64>, _rng: &mut ChaCha8Rng) -> Array3<f64> {
        self.mask = Some(x.mapv(|v| v > 0.0));
        self.infer(x)
    }

    fn infer(&self, x: &Array3<f64>) -> Array3<f64> {
        x.mapv(|v| v.max(0.0))
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Array3<f64> {
        let mask = self.mask.as_ref().expect("forward before backward");
        let mut g = grad.clone();
        g.zip_mut_with(mask, |g, &m| {
            if !m {
                *g = 0.0
            }
        });
        g
    }

    fn output_shape(&self, input: (usize, usize)) -> (usize, usize) {
        input
    }
}

/// Inverted dropout; identity at inference.
#[derive(Debug)]
pub struct Dropout {
    pub rate: f64,
    scale: Option<Array3<f64>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Self {
        Self { rate, scale: None }
    }
}

impl Module for Dropout {
    fn forward(&mut self, x: &Array3<f64>, rng: &mut ChaCha8Rng) -> Array3<f64> {
        let keep = 1.0 - self.rate;
        let scale = x.mapv(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 });
        let out = x * &scale;
        self.scale = Some(scale);
        out
    }

    fn infer(&self, x: &Array3<f64>) -> Array3<f64> {
        x.clone()
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Array3<f64> {
        grad * self.scale.as_ref().expect("forward before backward")
    }

    fn output_shape(&self, input: (usize, usize)) -> (usize, usize) {
        input
    }
}

/// Non-overlapping max pooling over time; a trailing partial window is dropped.
#[derive(Debug)]
pub struct MaxPool1d {
    pub size: usize,
    cache: Option<(usize, Array3<usize>)>,
}

impl MaxPool1d {
    pub fn new(size: usize) -> Self {
        Self { size, cache: None }
    }

    fn pool(&self, x: &Array3<f64>) -> (Array3<f64>, Array3<usize>) {
        let (b, t, c) = x.dim();
        let to = t / self.size;
        let mut out = Array3::zeros((b, to, c));
        let mut arg = Array3::zeros((b, to, c));
        for bi in 0..b {
            for ti in 0..to {
                for ci in 0..c {
                    let mut best = ti * self.size;
                    for k in 1..self.size {
                        if x[[bi, ti * self.size + k, ci]] > x[[bi, best, ci]] {
                            best = ti * self.size + k;
                        }
                    }
                    out[[bi, ti, ci]] = x[[bi, best, ci]];
                    arg[[bi, ti, ci]] = best;
                }
            }
        }
        (out, arg)
    }
}

impl Module for MaxPool1d {
    fn forward(&mut self, x: &Array3<f64>, _rng: &mut ChaCha8Rng) -> Array3<f64> {
        let (out, arg) = self.pool(x);
        self.cache = Some((x.dim().1, arg));
        out
    }

    fn infer(&self, x: &Array3<f64>) -> Array3<f64> {
        self.pool(x).0
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Array3<f64> {
        let (t, arg) = self.cache.as_ref().expect("forward before backward");
        let (b, to, c) = grad.dim();
        let mut gx = Array3::zeros((b, *t, c));
        for bi in 0..b {
            for ti in 0..to {
                for ci in 0..c {
                    gx[[bi, arg[[bi, ti, ci]], ci]] += grad[[bi, ti, ci]];
                }
            }
        }
        gx
    }

    fn output_shape(&self, (t, c): (usize, usize)) -> (usize, usize) {
        (t / self.size, c)
    }
}

/// Keeps only the final time step.
#[derive(Debug, Default)]
pub struct LastStep {
    time: usize,
}

impl LastStep {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Module for LastStep {
    fn forward(&mut self, x: &Array3<f64>, _rng: &mut ChaCha8Rng) -> Array3<f64> {
        self.time = x.dim().1;
        self.infer(x)
    }

    fn infer(&self, x: &Array3<f64>) -> Array3<f64> {
        let t = x.dim().1;
        x.slice(s![.., t - 1..t, ..]).to_owned()
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Array3<f64> {
        let (b, _, c) = grad.dim();
        let mut gx = Array3::zeros((b, self.time, c));
        gx.slice_mut(s![.., self.time - 1.., ..]).assign(grad);
        gx
    }

    fn output_shape(&self, (_, c): (usize, usize)) -> (usize, usize) {
        (1, c)
    }
}

/// `(B, T, C)` → `(B, 1, T·C)`.
#[derive(Debug, Default)]
pub struct Flatten {
    shape: (usize, usize),
}

impl Flatten {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Module for Flatten {
    fn forward(&mut self, x: &Array3<f64>, _rng: &mut ChaCha8Rng) -> Array3<f64> {
        let (_, t, c) = x.dim();
        self.shape = (t, c);
        self.infer(x)
    }

    fn infer(&self, x: &Array3<f64>) -> Array3<f64> {
        let (b, t, c) = x.dim();
        x.as_standard_layout().into_owned().into_shape_with_order((b, 1, t * c)).expect("contiguous")
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Array3<f64> {
        let b = grad.dim().0;
        grad.as_standard_layout()
            .into_owned()
            .into_shape_with_order((b, self.shape.0, self.shape.1))
            .expect("contiguous")
    }

    fn output_shape(&self, (t, c): (usize, usize)) -> (usize, usize) {
        (1, t * c)
    }
}

/// Layers applied in order.
#[derive(Default)]
pub struct Sequential {
    pub layers: Vec<Box<dyn Module>>,
}

impl Sequential {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, layer: impl Module + 'static) {
        self.layers.push(Box::new(layer));
    }
}

impl Module for Sequential {
    fn forward(&mut self, x: &Array3<f64>, rng: &mut ChaCha8Rng) -> Array3<f64> {
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h, rng);
        }
        h
    }

    fn infer(&self, x: &Array3<f64>) -> Array3<f64> {
        let mut h = x.clone();
        for l in &self.layers {
            h = l.infer(&h);
        }
        h
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Array3<f64> {
        let mut g = grad.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g);
        }
        g
    }

    fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    fn output_shape(&self, input: (usize, usize)) -> (usize, usize) {
        self.layers.iter().fold(input, |s, l| l.output_shape(s))
    }
}

/// Sums `grad` over batch and time into a `(1, C)` row.
pub(crate) fn column_sums(grad: ArrayView2<'_, f64>) -> Array2<f64> {
    grad.sum_axis(Axis(0)).insert_axis(Axis(0))
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn simple_layer_gradients() {
        let x = random3((2, 6, 3), 1);
        assert!(check_module(&mut Relu::new(), &x, 2) < 1e-6);
        assert!(check_module(&mut MaxPool1d::new(2), &x, 3) < 1e-6);
        assert!(check_module(&mut LastStep::new(), &x, 4) < 1e-6);
        assert!(check_module(&mut Flatten::new(), &x, 5) < 1e-6);
        assert!(check_module(&mut Dropout::new(0.3), &x, 6) < 1e-6);
    }

    #[test]
    fn pool_and_shapes() {
        let x = Array3::from_shape_vec((1, 5, 1), vec![1.0, 3.0, 2.0, -1.0, 9.0]).unwrap();
        let mut p = MaxPool1d::new(2);
        let y = p.forward(&x, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(y.iter().cloned().collect::<Vec<_>>(), vec![3.0, 2.0]);
        assert_eq!(p.output_shape((5, 1)), (2, 1));
        assert_eq!(Flatten::new().infer(&x).dim(), (1, 1, 5));
    }

    #[test]
    fn dropout_is_identity_at_inference() {
        let x = random3((2, 3, 4), 9);
        assert_eq!(Dropout::new(0.5).infer(&x), x);
    }
}
