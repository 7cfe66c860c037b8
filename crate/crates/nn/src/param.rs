use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A named tensor owned by a layer, with its accumulated gradient.
///
/// Values are stored as a 2-D matrix; `shape` is the logical shape used in
/// weight files. Every stored value is exactly representable as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
    /// Buffers such as batch-norm running statistics are persisted but not optimized.
    pub trainable: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, value: Array2<f64>) -> Self {
        let grad = Array2::zeros(value.dim());
        let mut p = Self { name: name.into(), shape, value, grad, trainable: true };
        p.round_to_f32();
        p
    }

    pub fn buffer(name: impl Into<String>, shape: Vec<usize>, value: Array2<f64>) -> Self {
        Self { trainable: false, ..Self::new(name, shape, value) }
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>, dim: (usize, usize)) -> Self {
        Self::new(name, shape, Array2::zeros(dim))
    }

    /// Uniform in ±sqrt(3 / fan_in).
    pub fn fan_in_uniform(
        name: impl Into<String>,
        shape: Vec<usize>,
        dim: (usize, usize),
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let limit = (3.0 / fan_in.max(1) as f64).sqrt();
        Self::new(name, shape, Array2::from_shape_fn(dim, |_| rng.random_range(-limit..limit)))
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn round_to_f32(&mut self) {
        self.value.mapv_inplace(|v| v as f32 as f64);
    }
}
