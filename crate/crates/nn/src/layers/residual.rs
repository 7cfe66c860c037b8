use ndarray::Array3;
use rand_chacha::ChaCha8Rng;

use super::{BatchNorm, Conv1d, Dense, Module, Padding, Relu};
use crate::param::Param;

/// `skip(x) + relu(bn(causal_conv(x)))`; the skip is the identity unless
/// the channel count changes, in which case it is a 1×1 projection.
/// [`ResidualBlock::without_norm`] drops the batch normalization.
pub struct ResidualBlock {
    pub conv: Conv1d,
    pub norm: Option<BatchNorm>,
    relu: Relu,
    pub projection: Option<Dense>,
}

impl ResidualBlock {
    pub fn new(
        name: &str,
        channels: usize,
        filters: usize,
        taps: usize,
        dilation: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let conv = Conv1d::new(&format!("{name}.conv"), channels, filters, taps, dilation, Padding::Causal, rng);
        let projection = (channels != filters).then(|| Dense::new(&format!("{name}.skip"), channels, filters, rng));
        Self { conv, norm: Some(BatchNorm::new(&format!("{name}.bn"), filters)), relu: Relu::new(), projection }
    }

    pub fn without_norm(mut self) -> Self {
        self.norm = None;
        self
    }

    pub fn dilation(&self) -> usize {
        self.conv.dilation
    }
}

impl Module for ResidualBlock {
    fn forward(&mut self, x: &Array3<f64>, rng: &mut ChaCha8Rng) -> Array3<f64> {
        let h = self.conv.forward(x, rng);
        let h = match &mut self.norm {
            Some(n) => n.forward(&h, rng),
            None => h,
        };
        let h = self.relu.forward(&h, rng);
        match &mut self.projection {
            Some(p) => h + p.forward(x, rng),
            None => h + x,
        }
    }

    fn infer(&self, x: &Array3<f64>) -> Array3<f64> {
        let mut h = self.conv.infer(x);
        if let Some(n) = &self.norm {
            h = n.infer(&h);
        }
        let h = self.relu.infer(&h);
        match &self.projection {
            Some(p) => h + p.infer(x),
            None => h + x,
        }
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Array3<f64> {
        let g = self.relu.backward(grad);
        let g = match &mut self.norm {
            Some(n) => n.backward(&g),
            None => g,
        };
        let gx = self.conv.backward(&g);
        match &mut self.projection {
            Some(p) => gx + p.backward(grad),
            None => gx + grad,
        }
    }

    fn params(&self) -> Vec<&Param> {
        let mut v = self.conv.params();
        if let Some(n) = &self.norm {
            v.extend(n.params());
        }
        if let Some(p) = &self.projection {
            v.extend(p.params());
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.conv.params_mut();
        if let Some(n) = &mut self.norm {
            v.extend(n.params_mut());
        }
        if let Some(p) = &mut self.projection {
            v.extend(p.params_mut());
        }
        v
    }

    fn output_shape(&self, (t, _): (usize, usize)) -> (usize, usize) {
        (t, self.conv.filters())
    }
}
