use ndarray::{Array2, Array3};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{column_sums, from_rows, Module};
use crate::error::{NnError, Result};
use crate::param::Param;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// No padding; output is `(k − 1)·dilation` steps shorter.
    Valid,
    /// Left zero-padding of `(k − 1)·dilation`; output step `t` sees inputs `≤ t`.
    Causal,
}

/// Dilated causal convolution of one sequence.
///
/// `x` is time × channels, `kernel` is taps × channels × filters; tap `j`
/// reads `x[t − (k − 1 − j)·dilation]`, zero before the sequence start.
pub fn causal_conv(x: &Array2<f64>, kernel: &Array3<f64>, dilation: usize) -> Result<Array2<f64>> {
    if dilation == 0 {
        return Err(NnError::InvalidSpec("dilation must be >= 1".into()));
    }
    let (t_len, c) = x.dim();
    let (k, kc, f) = kernel.dim();
    if kc != c {
        return Err(NnError::Shape(format!("kernel expects {kc} channels, input has {c}")));
    }
    let mut y = Array2::zeros((t_len, f));
    for t in 0..t_len {
        for j in 0..k {
            let back = (k - 1 - j) * dilation;
            if back > t {
                continue;
            }
            for ci in 0..c {
                let v = x[[t - back, ci]];
                for fi in 0..f {
                    y[[t, fi]] += v * kernel[[j, ci, fi]];
                }
            }
        }
    }
    Ok(y)
}

/// 1-D convolution over time with bias, batched through an im2col matrix.
pub struct Conv1d {
    /// Logical shape `[k, c, f]`, stored as `(k·c, f)`.
    pub kernel: Param,
    pub bias: Param,
    pub taps: usize,
    pub channels: usize,
    pub dilation: usize,
    pub padding: Padding,
    cache: Option<(Array2<f64>, usize)>,
}

impl Conv1d {
    pub fn new(
        name: &str,
        channels: usize,
        filters: usize,
        taps: usize,
        dilation: usize,
        padding: Padding,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = taps * channels;
        Self {
            kernel: Param::fan_in_uniform(
                format!("{name}.kernel"),
                vec![taps, channels, filters],
                (fan_in, filters),
                fan_in,
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), vec![filters], (1, filters)),
            taps,
            channels,
            dilation,
            padding,
            cache: None,
        }
    }

    pub fn filters(&self) -> usize {
        self.kernel.value.ncols()
    }

    fn span(&self) -> usize {
        (self.taps - 1) * self.dilation
    }

    fn out_len(&self, t: usize) -> usize {
        match self.padding {
            Padding::Valid => t.saturating_sub(self.span()),
            Padding::Causal => t,
        }
    }

    /// Input step read by output step `to` through tap `j`, if inside the sequence.
    fn source(&self, to: usize, j: usize) -> Option<usize> {
        match self.padding {
            Padding::Valid => Some(to + j * self.dilation),
            Padding::Causal => (to + j * self.dilation).checked_sub(self.span()),
        }
    }

    fn im2col(&self, x: &Array3<f64>) -> Array2<f64> {
        let (b, t, c) = x.dim();
        let to = self.out_len(t);
        let mut cols = Array2::zeros((b * to, self.taps * c));
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let cs = cols.as_slice_mut().expect("fresh array");
        let width = self.taps * c;
        for bi in 0..b {
            for ti in 0..to {
                let row = (bi * to + ti) * width;
                for j in 0..self.taps {
                    if let Some(src) = self.source(ti, j) {
                        let from = (bi * t + src) * c;
                        cs[row + j * c..row + (j + 1) * c].copy_from_slice(&xs[from..from + c]);
                    }
                }
            }
        }
        cols
    }
}

impl Module for Conv1d {
    fn forward(&mut self, x: &Array3<f64>, _rng: &mut ChaCha8Rng) -> Array3<f64> {
        let (b, t, _) = x.dim();
        let cols = self.im2col(x);
        let out = from_rows(cols.dot(&self.kernel.value) + &self.bias.value, b, self.out_len(t));
        self.cache = Some((cols, t));
        out
    }

    fn infer(&self, x: &Array3<f64>) -> Array3<f64> {
        let (b, t, _) = x.dim();
        from_rows(self.im2col(x).dot(&self.kernel.value) + &self.bias.value, b, self.out_len(t))
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Array3<f64> {
        let (cols, t) = self.cache.as_ref().expect("forward before backward");
        let (b, to, f) = grad.dim();
        let g = grad.as_standard_layout().into_shape_with_order((b * to, f)).expect("standard layout");
        self.kernel.grad += &cols.t().dot(&g);
        self.bias.grad += &column_sums(g.view());
        let gcols = g.dot(&self.kernel.value.t());
        let c = self.channels;
        let mut gx = Array3::zeros((b, *t, c));
        let gxs = gx.as_slice_mut().expect("fresh array");
        let gcs = gcols.as_slice().expect("fresh array");
        let width = self.taps * c;
        for bi in 0..b {
            for ti in 0..to {
                let row = (bi * to + ti) * width;
                for j in 0..self.taps {
                    if let Some(src) = self.source(ti, j) {
                        let dst = (bi * t + src) * c;
                        for ci in 0..c {
                            gxs[dst + ci] += gcs[row + j * c + ci];
                        }
                    }
                }
            }
        }
        gx
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.kernel, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.kernel, &mut self.bias]
    }

    fn output_shape(&self, (t, _): (usize, usize)) -> (usize, usize) {
        (self.out_len(t), self.filters())
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn identity_kernel() {
        let x = array![[1.0, -2.0], [3.0, 0.5], [4.0, 4.0]];
        let mut k = Array3::zeros((1, 2, 2));
        k[[0, 0, 0]] = 1.0;
        k[[0, 1, 1]] = 1.0;
        assert_eq!(causal_conv(&x, &k, 1).unwrap(), x);
    }

    #[test]
    fn dilation_two_hand_case() {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let k = Array3::ones((2, 1, 1));
        assert_eq!(causal_conv(&x, &k, 2).unwrap(), array![[1.0], [2.0], [4.0], [6.0]]);
    }

    #[test]
    fn zero_dilation_rejected() {
        assert!(causal_conv(&array![[1.0]], &Array3::ones((1, 1, 1)), 0).is_err());
    }

    #[test]
    fn layer_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (taps, dilation) in [(2, 1), (2, 4), (3, 2)] {
            let conv = Conv1d::new("c", 3, 4, taps, dilation, Padding::Causal, &mut rng);
            let x = random3((2, 9, 3), 7);
            let y = conv.infer(&x);
            let kernel = conv.kernel.value.clone().into_shape_with_order((taps, 3, 4)).unwrap();
            for b in 0..2 {
                let direct = causal_conv(&x.index_axis(ndarray::Axis(0), b).to_owned(), &kernel, dilation).unwrap();
                let diff = (&y.index_axis(ndarray::Axis(0), b) - &direct).mapv(f64::abs).sum();
                assert!(diff < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_valid_and_causal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut valid = Conv1d::new("v", 2, 3, 3, 1, Padding::Valid, &mut rng);
        valid.bias.value.fill(0.1);
        assert!(check_module(&mut valid, &random3((2, 7, 2), 1), 2) < 1e-6);
        let mut causal = Conv1d::new("c", 2, 3, 2, 3, Padding::Causal, &mut rng);
        assert!(check_module(&mut causal, &random3((2, 7, 2), 3), 4) < 1e-6);
    }

    #[test]
    fn valid_output_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let conv = Conv1d::new("v", 2, 3, 3, 2, Padding::Valid, &mut rng);
        assert_eq!(conv.output_shape((10, 2)), (6, 3));
    }

    proptest::proptest! {
        #[test]
        fn output_ignores_later_steps(
            t in 2usize..24,
            k in 1usize..4,
            dilation in 1usize..9,
            seed in 0u64..1000,
            bump in -10.0f64..10.0,
        ) {
            let x = random3((1, t, 2), seed).index_axis(ndarray::Axis(0), 0).to_owned();
            let kernel = random3((k, 2, 3), seed + 1);
            let step = (seed as usize) % t;
            let mut later = x.clone();
            later.row_mut(step).mapv_inplace(|v| v + bump);
            let (a, b) = (causal_conv(&x, &kernel, dilation).unwrap(), causal_conv(&later, &kernel, dilation).unwrap());
            for s in 0..step {
                proptest::prop_assert_eq!(a.row(s), b.row(s));
            }
        }
    }
}
