use ndarray::{s, Array2, Array3, Axis};
use rand_chacha::ChaCha8Rng;

use super::{column_sums, from_rows, rows, sigmoid, Module};
use crate::param::Param;

fn time_slice(x: &Array3<f64>, t: usize) -> Array2<f64> {
    x.index_axis(Axis(1), t).to_owned()
}

fn emit(steps: &[Array2<f64>], sequence: bool) -> Array3<f64> {
    let last = steps.last().expect("at least one step");
    let (b, h) = last.dim();
    if sequence {
        let mut out = Array3::zeros((b, steps.len(), h));
        for (t, st) in steps.iter().enumerate() {
            out.index_axis_mut(Axis(1), t).assign(st);
        }
        out
    } else {
        last.clone().insert_axis(Axis(1))
    }
}

/// Incoming gradient for step `t` (zero when only the last step was emitted).
fn step_grad(grad: &Array3<f64>, t: usize, steps: usize, sequence: bool) -> Option<Array2<f64>> {
    if sequence {
        Some(time_slice(grad, t))
    } else if t == steps - 1 {
        Some(time_slice(grad, 0))
    } else {
        None
    }
}

struct LstmStep {
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    /// Activated gates i, f, g, o side by side.
    gates: Array2<f64>,
    tanh_c: Array2<f64>,
}

/// LSTM with gate order input, forget, cell, output.
pub struct Lstm {
    pub w: Param,
    pub u: Param,
    pub b: Param,
    pub hidden: usize,
    pub return_sequences: bool,
    cache: Option<(Array3<f64>, Vec<LstmStep>)>,
}

impl Lstm {
    pub fn new(name: &str, inputs: usize, hidden: usize, return_sequences: bool, rng: &mut ChaCha8Rng) -> Self {
        let g = 4 * hidden;
        Self {
            w: Param::fan_in_uniform(format!("{name}.kernel"), vec![inputs, g], (inputs, g), inputs, rng),
            u: Param::fan_in_uniform(format!("{name}.recurrent_kernel"), vec![hidden, g], (hidden, g), hidden, rng),
            b: Param::zeros(format!("{name}.bias"), vec![g], (1, g)),
            hidden,
            return_sequences,
            cache: None,
        }
    }

    fn run(&self, x: &Array3<f64>, keep: bool) -> (Array3<f64>, Vec<LstmStep>) {
        let (b, t_len, _) = x.dim();
        let h = self.hidden;
        let xw = from_rows(rows(x).dot(&self.w.value) + &self.b.value, b, t_len);
        let mut hs = Array2::zeros((b, h));
        let mut cs = Array2::zeros((b, h));
        let mut outs = Vec::with_capacity(t_len);
        let mut steps = Vec::new();
        for t in 0..t_len {
            let mut z = time_slice(&xw, t) + hs.dot(&self.u.value);
            for mut row in z.rows_mut() {
                for (k, v) in row.iter_mut().enumerate() {
                    *v = if (2 * h..3 * h).contains(&k) { v.tanh() } else { sigmoid(*v) };
                }
            }
            let i = z.slice(s![.., 0..h]);
            let f = z.slice(s![.., h..2 * h]);
            let g = z.slice(s![.., 2 * h..3 * h]);
            let o = z.slice(s![.., 3 * h..4 * h]);
            let c_new = &f * &cs + &i * &g;
            let tanh_c = c_new.mapv(f64::tanh);
            let h_new = &o * &tanh_c;
            if keep {
                steps.push(LstmStep { h_prev: hs.clone(), c_prev: cs.clone(), gates: z.clone(), tanh_c });
            }
            hs = h_new;
            cs = c_new;
            if self.return_sequences || t == t_len - 1 {
                outs.push(hs.clone());
            }
        }
        let out = if self.return_sequences { emit(&outs, true) } else { emit(&outs[outs.len() - 1..], false) };
        (out, steps)
    }
}

impl Module for Lstm {
    fn forward(&mut self, x: &Array3<f64>, _rng: &mut ChaCha8Rng) -> Array3<f64> {
        let (out, steps) = self.run(x, true);
        self.cache = Some((x.clone(), steps));
        out
    }

    fn infer(&self, x: &Array3<f64>) -> Array3<f64> {
        self.run(x, false).0
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Array3<f64> {
        let (x, steps) = self.cache.as_ref().expect("forward before backward");
        let (b, t_len, _) = x.dim();
        let h = self.hidden;
        let mut dz_all = Array3::zeros((b, t_len, 4 * h));
        let mut dh_next = Array2::<f64>::zeros((b, h));
        let mut dc_next = Array2::<f64>::zeros((b, h));
        for t in (0..t_len).rev() {
            let st = &steps[t];
            let mut dh = dh_next.clone();
            if let Some(g) = step_grad(grad, t, t_len, self.return_sequences) {
                dh += &g;
            }
            let i = st.gates.slice(s![.., 0..h]);
            let f = st.gates.slice(s![.., h..2 * h]);
            let g = st.gates.slice(s![.., 2 * h..3 * h]);
            let o = st.gates.slice(s![.., 3 * h..4 * h]);
            let dc = &dh * &o * st.tanh_c.mapv(|v| 1.0 - v * v) + &dc_next;
            let mut dz = dz_all.index_axis_mut(Axis(1), t);
            dz.slice_mut(s![.., 0..h]).assign(&(&dc * &g * i.mapv(|v| v * (1.0 - v))));
            dz.slice_mut(s![.., h..2 * h]).assign(&(&dc * &st.c_prev * f.mapv(|v| v * (1.0 - v))));
            dz.slice_mut(s![.., 2 * h..3 * h]).assign(&(&dc * &i * g.mapv(|v| 1.0 - v * v)));
            dz.slice_mut(s![.., 3 * h..4 * h]).assign(&(&dh * &st.tanh_c * o.mapv(|v| v * (1.0 - v))));
            let dz = dz.to_owned();
            self.u.grad += &st.h_prev.t().dot(&dz);
            dh_next = dz.dot(&self.u.value.t());
            dc_next = &dc * &f;
        }
        let dz_rows = rows(&dz_all);
        self.w.grad += &rows(x).t().dot(&dz_rows);
        self.b.grad += &column_sums(dz_rows.view());
        from_rows(dz_rows.dot(&self.w.value.t()), b, t_len)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.u, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.u, &mut self.b]
    }

    fn output_shape(&self, (t, _): (usize, usize)) -> (usize, usize) {
        (if self.return_sequences { t } else { 1 }, self.hidden)
    }
}

struct GruStep {
    h_prev: Array2<f64>,
    z: Array2<f64>,
    r: Array2<f64>,
    n: Array2<f64>,
}

/// GRU with update gate z, reset gate r and candidate
/// `n = tanh(x·W_n + (r ⊙ h)·U_n + b_n)`; `h' = z ⊙ h + (1 − z) ⊙ n`.
pub struct Gru {
    pub w: Param,
    pub u: Param,
    pub b: Param,
    pub hidden: usize,
    pub return_sequences: bool,
    cache: Option<(Array3<f64>, Vec<GruStep>)>,
}

impl Gru {
    pub fn new(name: &str, inputs: usize, hidden: usize, return_sequences: bool, rng: &mut ChaCha8Rng) -> Self {
        let g = 3 * hidden;
        Self {
            w: Param::fan_in_uniform(format!("{name}.kernel"), vec![inputs, g], (inputs, g), inputs, rng),
            u: Param::fan_in_uniform(format!("{name}.recurrent_kernel"), vec![hidden, g], (hidden, g), hidden, rng),
            b: Param::zeros(format!("{name}.bias"), vec![g], (1, g)),
            hidden,
            return_sequences,
            cache: None,
        }
    }

    fn run(&self, x: &Array3<f64>, keep: bool) -> (Array3<f64>, Vec<GruStep>) {
        let (b, t_len, _) = x.dim();
        let h = self.hidden;
        let xw = from_rows(rows(x).dot(&self.w.value) + &self.b.value, b, t_len);
        let u_zr = self.u.value.slice(s![.., 0..2 * h]);
        let u_n = self.u.value.slice(s![.., 2 * h..3 * h]);
        let mut hs = Array2::<f64>::zeros((b, h));
        let mut outs = Vec::with_capacity(t_len);
        let mut steps = Vec::new();
        for t in 0..t_len {
            let xt = xw.index_axis(Axis(1), t);
            let zr = (&xt.slice(s![.., 0..2 * h]) + &hs.dot(&u_zr)).mapv(sigmoid);
            let z = zr.slice(s![.., 0..h]).to_owned();
            let r = zr.slice(s![.., h..2 * h]).to_owned();
            let n = (&xt.slice(s![.., 2 * h..3 * h]) + &(&r * &hs).dot(&u_n)).mapv(f64::tanh);
            let h_new = &z * &hs + &z.mapv(|v| 1.0 - v) * &n;
            if keep {
                steps.push(GruStep { h_prev: hs.clone(), z, r, n });
            }
            hs = h_new;
            if self.return_sequences || t == t_len - 1 {
                outs.push(hs.clone());
            }
        }
        let out = if self.return_sequences { emit(&outs, true) } else { emit(&outs[outs.len() - 1..], false) };
        (out, steps)
    }
}

impl Module for Gru {
    fn forward(&mut self, x: &Array3<f64>, _rng: &mut ChaCha8Rng) -> Array3<f64> {
        let (out, steps) = self.run(x, true);
        self.cache = Some((x.clone(), steps));
        out
    }

    fn infer(&self, x: &Array3<f64>) -> Array3<f64> {
        self.run(x, false).0
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Array3<f64> {
        let (x, steps) = self.cache.as_ref().expect("forward before backward");
        let (b, t_len, _) = x.dim();
        let h = self.hidden;
        let u_zr = self.u.value.slice(s![.., 0..2 * h]).to_owned();
        let u_n = self.u.value.slice(s![.., 2 * h..3 * h]).to_owned();
        let mut dpre_all = Array3::zeros((b, t_len, 3 * h));
        let mut dh_next = Array2::<f64>::zeros((b, h));
        for t in (0..t_len).rev() {
            let st = &steps[t];
            let mut dh = dh_next.clone();
            if let Some(g) = step_grad(grad, t, t_len, self.return_sequences) {
                dh += &g;
            }
            let dz = &dh * &(&st.h_prev - &st.n);
            let dn = &dh * &st.z.mapv(|v| 1.0 - v);
            let mut dh_prev = &dh * &st.z;

            let dpre_n = &dn * &st.n.mapv(|v| 1.0 - v * v);
            let rh = &st.r * &st.h_prev;
            self.u.grad.slice_mut(s![.., 2 * h..3 * h]).scaled_add(1.0, &rh.t().dot(&dpre_n));
            let d_rh = dpre_n.dot(&u_n.t());
            let dr = &d_rh * &st.h_prev;
            dh_prev += &(&d_rh * &st.r);

            let dpre_z = &dz * &st.z.mapv(|v| v * (1.0 - v));
            let dpre_r = &dr * &st.r.mapv(|v| v * (1.0 - v));
            let mut dpre = dpre_all.index_axis_mut(Axis(1), t);
            dpre.slice_mut(s![.., 0..h]).assign(&dpre_z);
            dpre.slice_mut(s![.., h..2 * h]).assign(&dpre_r);
            dpre.slice_mut(s![.., 2 * h..3 * h]).assign(&dpre_n);
            let dzr = dpre.slice(s![.., 0..2 * h]).to_owned();
            self.u.grad.slice_mut(s![.., 0..2 * h]).scaled_add(1.0, &st.h_prev.t().dot(&dzr));
            dh_prev += &dzr.dot(&u_zr.t());
            dh_next = dh_prev;
        }
        let d_rows = rows(&dpre_all);
        self.w.grad += &rows(x).t().dot(&d_rows);
        self.b.grad += &column_sums(d_rows.view());
        from_rows(d_rows.dot(&self.w.value.t()), b, t_len)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.u, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.u, &mut self.b]
    }

    fn output_shape(&self, (t, _): (usize, usize)) -> (usize, usize) {
        (if self.return_sequences { t } else { 1 }, self.hidden)
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;
    use rand::{Rng, SeedableRng};

    fn randomize_bias(p: &mut Param, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        p.value.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }

    #[test]
    fn lstm_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for seq in [true, false] {
            let mut l = Lstm::new("l", 3, 4, seq, &mut rng);
            randomize_bias(&mut l.b, 2);
            assert!(check_module(&mut l, &random3((2, 5, 3), 3), 4) < 1e-6, "sequence={seq}");
        }
    }

    #[test]
    fn gru_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seq in [true, false] {
            let mut g = Gru::new("g", 3, 4, seq, &mut rng);
            randomize_bias(&mut g.b, 6);
            assert!(check_module(&mut g, &random3((2, 5, 3), 7), 8) < 1e-6, "sequence={seq}");
        }
    }

    #[test]
    fn output_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = Lstm::new("l", 3, 4, false, &mut rng);
        assert_eq!(l.infer(&random3((2, 5, 3), 1)).dim(), (2, 1, 4));
        let g = Gru::new("g", 3, 6, true, &mut rng);
        assert_eq!(g.infer(&random3((2, 5, 3), 1)).dim(), (2, 5, 6));
    }
}
