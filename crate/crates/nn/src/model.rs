//! Declarative model specs and the builders for each architecture.

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, s, Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::layers::{
    AdditiveAttention, Conv1d, Dense, Dropout, Flatten, Gru, LastStep, Lstm, MaxPool1d, Module, Padding, Relu,
    ResidualBlock, Sequential,
};
use crate::param::Param;

/// Name prefix of every model's final single-unit dense layer.
pub const HEAD: &str = "head";
/// Name of the persisted target scaling buffer `[min, max]`.
pub const TARGET_SCALE: &str = "target_scale";
/// Rows per forward pass during prediction.
const PREDICT_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    AttCnnLstm,
    SeriesnetGru,
    SimCnnLstmYield,
    SimCnnLstmPrice,
    LstmBaseline,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::AttCnnLstm,
        ModelKind::SeriesnetGru,
        ModelKind::SimCnnLstmYield,
        ModelKind::SimCnnLstmPrice,
        ModelKind::LstmBaseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::AttCnnLstm => "att_cnn_lstm",
            ModelKind::SeriesnetGru => "seriesnet_gru",
            ModelKind::SimCnnLstmYield => "sim_cnn_lstm_yield",
            ModelKind::SimCnnLstmPrice => "sim_cnn_lstm_price",
            ModelKind::LstmBaseline => "lstm_baseline",
        }
    }

    /// Whether the model reads histogram cubes rather than station features.
    pub fn is_satellite(self) -> bool {
        matches!(self, ModelKind::SimCnnLstmYield | ModelKind::SimCnnLstmPrice)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| NnError::InvalidSpec(format!("unknown model kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttCnnLstmLayers {
    pub conv_filters: Vec<usize>,
    pub kernel: usize,
    pub pool: usize,
    pub lstm_units: usize,
    pub attention_units: usize,
    pub head_lstm_units: usize,
}

impl Default for AttCnnLstmLayers {
    fn default() -> Self {
        Self { conv_filters: vec![64, 32], kernel: 3, pool: 2, lstm_units: 64, attention_units: 64, head_lstm_units: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeriesnetGruLayers {
    pub dilations: Vec<usize>,
    pub kernel: usize,
    pub filters: usize,
    pub gru_units: usize,
    pub attention_units: usize,
    /// Batch normalization after each residual conv.
    pub batch_norm: bool,
}

impl Default for SeriesnetGruLayers {
    fn default() -> Self {
        Self {
            dilations: vec![1, 2, 4, 8, 16, 32, 64, 128],
            kernel: 2,
            filters: 32,
            gru_units: 32,
            attention_units: 32,
            batch_norm: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimCnnLstmLayers {
    pub conv_filters: Vec<usize>,
    pub kernel: usize,
    pub lstm_units: usize,
    pub dense_units: usize,
    pub dropout: f64,
}

impl SimCnnLstmLayers {
    pub fn yield_default() -> Self {
        Self { conv_filters: vec![64, 32], kernel: 3, lstm_units: 64, dense_units: 16, dropout: 0.0 }
    }

    pub fn price_default() -> Self {
        Self { lstm_units: 32, dropout: 0.2, ..Self::yield_default() }
    }
}

impl Default for SimCnnLstmLayers {
    fn default() -> Self {
        Self::yield_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmBaselineLayers {
    pub units: usize,
}

impl Default for LstmBaselineLayers {
    fn default() -> Self {
        Self { units: 64 }
    }
}

/// Per-kind layer hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    AttCnnLstm(AttCnnLstmLayers),
    SeriesnetGru(SeriesnetGruLayers),
    SimCnnLstmYield(SimCnnLstmLayers),
    SimCnnLstmPrice(SimCnnLstmLayers),
    LstmBaseline(LstmBaselineLayers),
}

impl Architecture {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::AttCnnLstm => Architecture::AttCnnLstm(AttCnnLstmLayers::default()),
            ModelKind::SeriesnetGru => Architecture::SeriesnetGru(SeriesnetGruLayers::default()),
            ModelKind::SimCnnLstmYield => Architecture::SimCnnLstmYield(SimCnnLstmLayers::yield_default()),
            ModelKind::SimCnnLstmPrice => Architecture::SimCnnLstmPrice(SimCnnLstmLayers::price_default()),
            ModelKind::LstmBaseline => Architecture::LstmBaseline(LstmBaselineLayers::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Architecture::AttCnnLstm(_) => ModelKind::AttCnnLstm,
            Architecture::SeriesnetGru(_) => ModelKind::SeriesnetGru,
            Architecture::SimCnnLstmYield(_) => ModelKind::SimCnnLstmYield,
            Architecture::SimCnnLstmPrice(_) => ModelKind::SimCnnLstmPrice,
            Architecture::LstmBaseline(_) => ModelKind::LstmBaseline,
        }
    }
}

/// Everything needed to rebuild a model's parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// `[time, features]` of one sample.
    pub input_shape: [usize; 2],
    pub seed: u64,
    pub arch: Architecture,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, time: usize, features: usize, seed: u64) -> Self {
        Self { input_shape: [time, features], seed, arch: Architecture::default_for(kind) }
    }

    pub fn kind(&self) -> ModelKind {
        self.arch.kind()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| NnError::InvalidSpec(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let [t, f] = self.input_shape;
        if t == 0 || f == 0 {
            return Err(NnError::InvalidSpec(format!("input shape {:?} has a zero dimension", self.input_shape)));
        }
        let nonzero = |what: &str, v: usize| {
            if v == 0 {
                Err(NnError::InvalidSpec(format!("{what} must be positive")))
            } else {
                Ok(())
            }
        };
        let conv_len = |filters: &[usize], kernel: usize| -> Result<usize> {
            nonzero("kernel", kernel)?;
            if filters.is_empty() || filters.contains(&0) {
                return Err(NnError::InvalidSpec("conv filter counts must be positive and non-empty".into()));
            }
            let shrink = filters.len() * (kernel - 1);
            if t <= shrink {
                return Err(NnError::InvalidSpec(format!(
                    "input length {t} too short for {} valid convolutions of kernel {kernel}",
                    filters.len()
                )));
            }
            Ok(t - shrink)
        };
        match &self.arch {
            Architecture::AttCnnLstm(a) => {
                let len = conv_len(&a.conv_filters, a.kernel)?;
                nonzero("pool", a.pool)?;
                if len / a.pool == 0 {
                    return Err(NnError::InvalidSpec(format!("pool {} empties a length-{len} sequence", a.pool)));
                }
                nonzero("lstm_units", a.lstm_units)?;
                nonzero("attention_units", a.attention_units)?;
                nonzero("head_lstm_units", a.head_lstm_units)
            }
            Architecture::SeriesnetGru(s) => {
                if s.dilations.is_empty() || s.dilations.contains(&0) {
                    return Err(NnError::InvalidSpec("dilations must be positive and non-empty".into()));
                }
                nonzero("kernel", s.kernel)?;
                nonzero("filters", s.filters)?;
                nonzero("gru_units", s.gru_units)?;
                nonzero("attention_units", s.attention_units)
            }
            Architecture::SimCnnLstmYield(s) | Architecture::SimCnnLstmPrice(s) => {
                conv_len(&s.conv_filters, s.kernel)?;
                nonzero("lstm_units", s.lstm_units)?;
                nonzero("dense_units", s.dense_units)?;
                if !(0.0..1.0).contains(&s.dropout) {
                    return Err(NnError::InvalidSpec(format!("dropout {} outside [0, 1)", s.dropout)));
                }
                Ok(())
            }
            Architecture::LstmBaseline(l) => nonzero("units", l.units),
        }
    }
}

/// `1 + Σ dilation·(k − 1)` for a stack of causal convolutions.
pub fn receptive_field(kernel: usize, dilations: &[usize]) -> usize {
    1 + dilations.iter().map(|d| d * (kernel - 1)).sum::<usize>()
}

/// Dual-branch SeriesNet: residual causal-conv stack and a GRU-attention-GRU
/// stack, each reduced to one value, merged by a single dense unit.
pub struct SeriesNet {
    pub conv: Sequential,
    pub gru: Sequential,
    pub head: Dense,
    split: Option<usize>,
}

impl Module for SeriesNet {
    fn forward(&mut self, x: &Array3<f64>, rng: &mut ChaCha8Rng) -> Array3<f64> {
        let a = self.conv.forward(x, rng);
        let b = self.gru.forward(x, rng);
        self.split = Some(a.dim().2);
        let merged = concatenate(Axis(2), &[a.view(), b.view()]).expect("branch outputs align");
        self.head.forward(&merged, rng)
    }

    fn infer(&self, x: &Array3<f64>) -> Array3<f64> {
        let a = self.conv.infer(x);
        let b = self.gru.infer(x);
        let merged = concatenate(Axis(2), &[a.view(), b.view()]).expect("branch outputs align");
        self.head.infer(&merged)
    }

    fn backward(&mut self, grad: &Array3<f64>) -> Array3<f64> {
        let g = self.head.backward(grad);
        let k = self.split.expect("forward before backward");
        let ga = g.slice(s![.., .., ..k]).to_owned();
        let gb = g.slice(s![.., .., k..]).to_owned();
        self.conv.backward(&ga) + self.gru.backward(&gb)
    }

    fn params(&self) -> Vec<&Param> {
        let mut v = self.conv.params();
        v.extend(self.gru.params());
        v.extend(self.head.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.conv.params_mut();
        v.extend(self.gru.params_mut());
        v.extend(self.head.params_mut());
        v
    }

    fn output_shape(&self, _input: (usize, usize)) -> (usize, usize) {
        (1, 1)
    }
}

/// A built network plus the target scaling learned at training time.
pub struct Model {
    pub spec: ModelSpec,
    pub net: Box<dyn Module>,
    /// `[min, max]` of the training targets; identity `[0, 1]` until trained.
    pub target_scale: Param,
}

pub fn build_model(spec: &ModelSpec) -> Result<Model> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let [t, f] = spec.input_shape;
    let net: Box<dyn Module> = match &spec.arch {
        Architecture::AttCnnLstm(a) => {
            let mut seq = Sequential::new();
            let ch = push_convs(&mut seq, f, &a.conv_filters, a.kernel, &mut rng);
            seq.push(MaxPool1d::new(a.pool));
            seq.push(Lstm::new("lstm0", ch, a.lstm_units, true, &mut rng));
            seq.push(AdditiveAttention::new("attention", a.lstm_units, a.attention_units, &mut rng));
            seq.push(Lstm::new("lstm1", a.lstm_units, a.head_lstm_units, false, &mut rng));
            seq.push(Dense::new(HEAD, a.head_lstm_units, 1, &mut rng));
            Box::new(seq)
        }
        Architecture::SeriesnetGru(s) => {
            let mut conv = Sequential::new();
            let mut ch = f;
            for (i, &d) in s.dilations.iter().enumerate() {
                let block = ResidualBlock::new(&format!("block{i}"), ch, s.filters, s.kernel, d, &mut rng);
                conv.push(if s.batch_norm { block } else { block.without_norm() });
                ch = s.filters;
            }
            conv.push(LastStep::new());
            conv.push(Dense::new("conv_out", s.filters, 1, &mut rng));

            let mut gru = Sequential::new();
            gru.push(Gru::new("gru0", f, s.gru_units, true, &mut rng));
            gru.push(AdditiveAttention::new("attention", s.gru_units, s.attention_units, &mut rng));
            gru.push(Gru::new("gru1", s.gru_units, s.gru_units, true, &mut rng));
            gru.push(Flatten::new());
            gru.push(Dense::new("gru_out", t * s.gru_units, 1, &mut rng));

            let head = Dense::new(HEAD, 2, 1, &mut rng);
            Box::new(SeriesNet { conv, gru, head, split: None })
        }
        Architecture::SimCnnLstmYield(s) | Architecture::SimCnnLstmPrice(s) => {
            let mut seq = Sequential::new();
            let ch = push_convs(&mut seq, f, &s.conv_filters, s.kernel, &mut rng);
            seq.push(Lstm::new("lstm0", ch, s.lstm_units, false, &mut rng));
            if s.dropout > 0.0 {
                seq.push(Dropout::new(s.dropout));
            }
            seq.push(Dense::new("dense0", s.lstm_units, s.dense_units, &mut rng));
            seq.push(Relu::new());
            seq.push(Dense::new(HEAD, s.dense_units, 1, &mut rng));
            Box::new(seq)
        }
        Architecture::LstmBaseline(l) => {
            let mut seq = Sequential::new();
            seq.push(Lstm::new("lstm0", f, l.units, false, &mut rng));
            seq.push(Dense::new(HEAD, l.units, 1, &mut rng));
            Box::new(seq)
        }
    };
    let target_scale = Param::buffer(TARGET_SCALE, vec![2], Array2::from_shape_vec((1, 2), vec![0.0, 1.0]).unwrap());
    Ok(Model { spec: spec.clone(), net, target_scale })
}

fn push_convs(seq: &mut Sequential, inputs: usize, filters: &[usize], kernel: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut ch = inputs;
    for (i, &nf) in filters.iter().enumerate() {
        seq.push(Conv1d::new(&format!("conv{i}"), ch, nf, kernel, 1, Padding::Valid, rng));
        seq.push(Relu::new());
        ch = nf;
    }
    ch
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    /// All persisted tensors: network parameters, buffers, then the target scale.
    pub fn params(&self) -> Vec<&Param> {
        let mut v = self.net.params();
        v.push(&self.target_scale);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.net.params_mut();
        v.push(&mut self.target_scale);
        v
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params().into_iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params_mut().into_iter().find(|p| p.name == name)
    }

    pub fn n_trainable(&self) -> usize {
        self.params().iter().filter(|p| p.trainable).map(|p| p.len()).sum()
    }

    pub fn check_input(&self, x: &Array3<f64>) -> Result<()> {
        let (_, t, f) = x.dim();
        if [t, f] != self.spec.input_shape {
            return Err(NnError::Shape(format!(
                "model expects samples of shape {:?}, got [{t}, {f}]",
                self.spec.input_shape
            )));
        }
        Ok(())
    }

    pub fn set_target_range(&mut self, min: f64, max: f64) {
        self.target_scale.value[[0, 0]] = min;
        self.target_scale.value[[0, 1]] = max;
        self.target_scale.round_to_f32();
    }

    pub fn target_range(&self) -> (f64, f64) {
        (self.target_scale.value[[0, 0]], self.target_scale.value[[0, 1]])
    }

    pub fn scale_target(&self, y: f64) -> f64 {
        let (lo, hi) = self.target_range();
        if hi > lo {
            (y - lo) / (hi - lo)
        } else {
            y - lo
        }
    }

    pub fn unscale_target(&self, v: f64) -> f64 {
        let (lo, hi) = self.target_range();
        if hi > lo {
            v * (hi - lo) + lo
        } else {
            v + lo
        }
    }

    /// Network outputs on the scaled target axis.
    pub fn infer_scaled(&self, x: &Array3<f64>) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.dim().0);
        let b = x.dim().0;
        let mut start = 0;
        while start < b {
            let end = (start + PREDICT_CHUNK).min(b);
            let chunk = x.slice(s![start..end, .., ..]).to_owned();
            out.extend(self.net.infer(&chunk).iter().copied());
            start = end;
        }
        out
    }
}
