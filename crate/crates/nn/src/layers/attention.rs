//! Additive self-attention over the positions of one sequence.
//!
//! For positions `t, t'` of `X` (time × d):
//!
//! ```text
//! h[t,t'] = tanh(x_t·W_t + x_t'·W_x + b_t)
//! e[t,t'] = σ(h[t,t']·W_a + b_a)
//! a[t,·]  = softmax(e[t,·])
//! l_t     = Σ_t' a[t,t'] x_t'
//! ```

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand_chacha::ChaCha8Rng;

use super::{sigmoid, Module};
use crate::error::{NnError, Result};
use crate::param::Param;

/// Parameters of one attention layer; `d` input width, `d_a` hidden width.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// d × d_a
    pub w_t: Array2<f64>,
    /// d × d_a
    pub w_x: Array2<f64>,
    pub b_t: Array1<f64>,
    /// d_a
    pub w_a: Array1<f64>,
    pub b_a: f64,
}

impl AttentionParams {
    pub fn zeros(d: usize, d_a: usize) -> Self {
        Self {
            w_t: Array2::zeros((d, d_a)),
            w_x: Array2::zeros((d, d_a)),
            b_t: Array1::zeros(d_a),
            w_a: Array1::zeros(d_a),
            b_a: 0.0,
        }
    }

    fn check(&self, d: usize) -> Result<()> {
        let d_a = self.b_t.len();
        if self.w_t.dim() != (d, d_a) || self.w_x.dim() != (d, d_a) || self.w_a.len() != d_a {
            return Err(NnError::Shape(format!(
                "attention params (W_t {:?}, W_x {:?}, b_t {}, W_a {}) do not fit input width {d}",
                self.w_t.dim(),
                self.w_x.dim(),
                d_a,
                self.w_a.len()
            )));
        }
        Ok(())
    }
}

struct View<'a> {
    w_t: ArrayView2<'a, f64>,
    w_x: ArrayView2<'a, f64>,
    b_t: ArrayView1<'a, f64>,
    w_a: ArrayView1<'a, f64>,
    b_a: f64,
}

pub(crate) struct Trace {
    /// T × T × d_a hidden representations.
    h: Array3<f64>,
    e: Array2<f64>,
    a: Array2<f64>,
}

fn forward_one(x: ArrayView2<'_, f64>, p: &View<'_>) -> (Array2<f64>, Trace) {
    let t_len = x.nrows();
    let d_a = p.b_t.len();
    let q = x.dot(&p.w_t);
    let k = x.dot(&p.w_x) + &p.b_t;
    let mut h = Array3::zeros((t_len, t_len, d_a));
    let mut e = Array2::zeros((t_len, t_len));
    for t in 0..t_len {
        for u in 0..t_len {
            let mut score = p.b_a;
            for m in 0..d_a {
                let hv = (q[[t, m]] + k[[u, m]]).tanh();
                h[[t, u, m]] = hv;
                score += hv * p.w_a[m];
            }
            e[[t, u]] = sigmoid(score);
        }
    }
    let mut a = e.clone();
    let mut sums = Array1::<f64>::zeros(t_len);
    for (mut row, s) in a.rows_mut().into_iter().zip(sums.iter_mut()) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        *s = row.sum();
    }
    // normalize after weighting so uniform scores give the column mean exactly
    let l = a.dot(&x) / &sums.view().insert_axis(Axis(1));
    a /= &sums.view().insert_axis(Axis(1));
    (l, Trace { h, e, a })
}

struct Grads {
    x: Array2<f64>,
    w_t: Array2<f64>,
    w_x: Array2<f64>,
    b_t: Array1<f64>,
    w_a: Array1<f64>,
    b_a: f64,
}

fn backward_one(x: ArrayView2<'_, f64>, p: &View<'_>, tr: &Trace, dl: ArrayView2<'_, f64>) -> Grads {
    let t_len = x.nrows();
    let d_a = p.b_t.len();
    let d_attn = dl.dot(&x.t());
    let mut dx = tr.a.t().dot(&dl);
    let mut dq = Array2::<f64>::zeros((t_len, d_a));
    let mut dk = Array2::<f64>::zeros((t_len, d_a));
    let mut dw_a = Array1::<f64>::zeros(d_a);
    let mut db_a = 0.0;
    for t in 0..t_len {
        let dot: f64 = (0..t_len).map(|u| tr.a[[t, u]] * d_attn[[t, u]]).sum();
        for u in 0..t_len {
            let de = tr.a[[t, u]] * (d_attn[[t, u]] - dot);
            let e = tr.e[[t, u]];
            let ds = de * e * (1.0 - e);
            db_a += ds;
            for m in 0..d_a {
                let hv = tr.h[[t, u, m]];
                dw_a[m] += ds * hv;
                let dpre = ds * p.w_a[m] * (1.0 - hv * hv);
                dq[[t, m]] += dpre;
                dk[[u, m]] += dpre;
            }
        }
    }
    dx += &dq.dot(&p.w_t.t());
    dx += &dk.dot(&p.w_x.t());
    Grads {
        w_t: x.t().dot(&dq),
        w_x: x.t().dot(&dk),
        b_t: dk.sum_axis(Axis(0)),
        w_a: dw_a,
        b_a: db_a,
        x: dx,
    }
}

/// Attention values `l_t` for every position of `x` (time × d).
pub fn additive_attention(x: &Array2<f64>, p: &AttentionParams) -> Result<Array2<f64>> {
    if x.nrows() == 0 {
        return Err(NnError::Shape("attention needs at least one time step".into()));
    }
    p.check(x.ncols())?;
    Ok(forward_one(x.view(), &view_of(p)).0)
}

/// Attention weights `a` (time × time) alongside the output.
pub fn additive_attention_weights(x: &Array2<f64>, p: &AttentionParams) -> Result<(Array2<f64>, Array2<f64>)> {
    p.check(x.ncols())?;
    let (l, tr) = forward_one(x.view(), &view_of(p));
    Ok((l, tr.a))
}

/// Gradients of `Σ upstream ⊙ l` with respect to the input and every parameter.
pub fn additive_attention_backward(
    x: &Array2<f64>,
    p: &AttentionParams,
    upstream: &Array2<f64>,
) -> Result<(Array2<f64>, AttentionParams)> {
    p.check(x.ncols())?;
    if upstream.dim() != x.dim() {
        return Err(NnError::Shape("upstream gradient must match the input shape".into()));
    }
    let v = view_of(p);
    let (_, tr) = forward_one(x.view(), &v);
    let g = backward_one(x.view(), &v, &tr, upstream.view());
    Ok((g.x, AttentionParams { w_t: g.w_t, w_x: g.w_x, b_t: g.b_t, w_a: g.w_a, b_a: g.b_a }))
}

fn view_of(p: &AttentionParams) -> View<'_> {
    View { w_t: p.w_t.view(), w_x: p.w_x.view(), b_t: p.b_t.view(), w_a: p.w_a.view(), b_a: p.b_a }
}

/// Batched attention layer; output has the input's shape.
pub struct AdditiveAttention {
    pub w_t: Param,
    pub w_x: Param,
    pub b_t: Param,
    pub w_a: Param,
    pub b_a: Param,
    cache: Option<(Array3<f64>, Vec<Trace>)>,
}

impl AdditiveAttention {
    pub fn new(name: &str, d: usize, d_a: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w_t: Param::fan_in_uniform(format!("{name}.w_t"), vec![d, d_a], (d, d_a), d, rng),
            w_x: Param::fan_in_uniform(format!("{name}.w_x"), vec![d, d_a], (d, d_a), d, rng),
            b_t: Param::zeros(format!("{name}.b_t"), vec![d_a], (1, d_a)),
            w_a: Param::fan_in_uniform(format!("{name}.w_a"), vec![d_a, 1], (d_a, 1), d_a, rng),
            b_a: Param::zeros(format!("{name}.b_a"), vec![1], (1, 1)),
            cache: None,
        }
    }

    fn view(&self) -> View<'_> {
        View {
            w_t: self.w_t.value.view(),
            w_x: self.w_x.value.view(),
            b_t: self.b_t.value.row(0),
            w_a: self.w_a.value.column(0),
            b_a: self.b_a.value[[0, 0]],
        }
    }

    pub fn to_params(&self) -> AttentionParams {
        AttentionParams {
            w_t: self.w_t.value.clone(),
            w_x: self.w_x.value.clone(),
            b_t: self.b_t.value.row(0).to_owned(),
            w_a: self.w_a.value.column(0).to_owned(),
            b_a: self.b_a.value[[0, 0]],
        }
    }

    fn run(&self, x: &Array3<f64>, keep: bool) -> (Array3<f64>, Vec<Trace>) {
        let v = self.view();
        let mut out = Array3::zeros(x.dim());
        let mut traces = Vec::new();
        for (b, xb) in x.axis_iter(Axis(0)).enumerate() {
            let (l, tr) = forward_one(xb, &v);
            out.index_axis_mut(Axis(0), b).assign(&l);
            if keep {
                traces.push(tr);
            }
        }
        (out, traces)
    }
}

impl Module for AdditiveAttention {
    fn forward(&mut self, x: &Array3<f64>, _rng: &mut ChaCha8Rng) -> Array3<f64> {
        let (out, traces) = self.run(x, true);
        self.cache = Some((x.clone(), traces));
        out
    }

    fn infer(&self, x: &Array3<f64>) -> Array3<f64> {
        self.run(x, false).0
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Array3<f64> {
        let (x, traces) = self.cache.take().expect("forward before backward");
        let mut gx = Array3::zeros(x.dim());
        {
            let v = self.view();
            let mut acc: Option<Grads> = None;
            for (b, tr) in traces.iter().enumerate() {
                let g = backward_one(x.index_axis(Axis(0), b), &v, tr, grad.index_axis(Axis(0), b));
                gx.index_axis_mut(Axis(0), b).assign(&g.x);
                acc = Some(match acc {
                    None => g,
                    Some(mut a) => {
                        a.w_t += &g.w_t;
                        a.w_x += &g.w_x;
                        a.b_t += &g.b_t;
                        a.w_a += &g.w_a;
                        a.b_a += g.b_a;
                        a
                    }
                });
            }
            let acc = acc.expect("non-empty batch");
            self.w_t.grad += &acc.w_t;
            self.w_x.grad += &acc.w_x;
            self.b_t.grad.row_mut(0).scaled_add(1.0, &acc.b_t);
            self.w_a.grad.column_mut(0).scaled_add(1.0, &acc.w_a);
            self.b_a.grad[[0, 0]] += acc.b_a;
        }
        self.cache = Some((x, traces));
        gx
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.w_t, &self.w_x, &self.b_t, &self.w_a, &self.b_a]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w_t, &mut self.w_x, &mut self.b_t, &mut self.w_a, &mut self.b_a]
    }

    fn output_shape(&self, input: (usize, usize)) -> (usize, usize) {
        input
    }
}
