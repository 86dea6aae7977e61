//! The attentive marker network.
//!
//! Forward composition for one example with `T` slots of dimension `d`:
//!
//! 1. marker gating: slot `t` is multiplied element-wise by the marker row
//!    selected by its tag (argument, predicate, other; padding stays zero);
//! 2. a Bi-LSTM with `H` units per direction gives `S` (`T × 2H`);
//! 3. pairwise attention:
//!    `h[t,t'] = tanh(Q s_t + K s_t' + β)`,
//!    `e[t,t'] = σ(vᵀ h[t,t'] + α)`, `a_t = softmax(e_t)`,
//!    `z_t = Σ_t' a[t,t'] s_t'`;
//! 4. `z = [z_1; …; z_T]`, auxiliary Likert layer `a = ReLU(A z)`;
//! 5. per-property heads over `[a; z]`: a 2-way softmax (multi-label) or a
//!    ReLU scalar (regression).
//!
//! Matrices are stored so they right-multiply row vectors, e.g. `Q s_t` is
//! row `t` of `S · Q`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{lit, Axis, Graph, Scalar, Tensor, Var};
use crate::dataset::{PreparedExample, Tag, MAX_SEQ_LEN};
use crate::embeddings::{init_marker_table, Marker};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Multilabel,
    Regression,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Multilabel => "multilabel",
            Mode::Regression => "regression",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multilabel" => Ok(Mode::Multilabel),
            "regression" => Ok(Mode::Regression),
            other => Err(Error::config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Leave-one-out component switches. All off is the full model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Ablation {
    pub no_self_attention: bool,
    pub no_markers: bool,
    pub no_predicate_marker: bool,
    pub no_argument_marker: bool,
    pub no_hierarchy: bool,
}

impl Ablation {
    pub const SWITCHES: [&'static str; 5] = [
        "no_self_attention",
        "no_markers",
        "no_predicate_marker",
        "no_argument_marker",
        "no_hierarchy",
    ];

    pub fn full() -> Self {
        Self::default()
    }

    /// Sets one switch by name.
    pub fn with(mut self, switch: &str) -> Result<Self> {
        *self.flag_mut(switch)? = true;
        Ok(self)
    }

    pub fn flag_mut(&mut self, switch: &str) -> Result<&mut bool> {
        Ok(match switch {
            "no_self_attention" => &mut self.no_self_attention,
            "no_markers" => &mut self.no_markers,
            "no_predicate_marker" => &mut self.no_predicate_marker,
            "no_argument_marker" => &mut self.no_argument_marker,
            "no_hierarchy" => &mut self.no_hierarchy,
            other => return Err(Error::config(format!("unknown ablation switch {other:?}"))),
        })
    }

    pub fn flags(&self) -> [(&'static str, bool); 5] {
        [
            ("no_self_attention", self.no_self_attention),
            ("no_markers", self.no_markers),
            ("no_predicate_marker", self.no_predicate_marker),
            ("no_argument_marker", self.no_argument_marker),
            ("no_hierarchy", self.no_hierarchy),
        ]
    }
}

/// Which part of each input vector the markers multiply.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum MarkerScope {
    /// The whole (possibly concatenated) vector.
    #[default]
    Full,
    /// Only the leading word-vector columns; contextual columns pass through.
    WordOnly,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub mode: Mode,
    pub max_len: usize,
    /// Units per LSTM direction.
    pub hidden: usize,
    /// Width of `h[t,t']`.
    pub attention_dim: usize,
    /// Per-slot input width `d` (word + contextual).
    pub input_dim: usize,
    /// Leading word-vector columns of the input.
    pub word_dim: usize,
    pub marker_scope: MarkerScope,
    pub num_properties: usize,
    pub ablation: Ablation,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(mode: Mode, input_dim: usize, num_properties: usize) -> Self {
        Self {
            mode,
            max_len: MAX_SEQ_LEN,
            hidden: 64,
            attention_dim: 128,
            input_dim,
            word_dim: input_dim,
            marker_scope: MarkerScope::Full,
            num_properties,
            ablation: Ablation::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("max_len", self.max_len),
            ("hidden", self.hidden),
            ("attention_dim", self.attention_dim),
            ("input_dim", self.input_dim),
            ("word_dim", self.word_dim),
            ("num_properties", self.num_properties),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("model dimension {name} must be positive")));
        }
        if self.word_dim > self.input_dim {
            return Err(Error::config("word_dim exceeds input_dim"));
        }
        Ok(())
    }

    pub fn marker_dim(&self) -> usize {
        match self.marker_scope {
            MarkerScope::Full => self.input_dim,
            MarkerScope::WordOnly => self.word_dim,
        }
    }

    /// Width of `z`.
    pub fn flat_dim(&self) -> usize {
        self.max_len * 2 * self.hidden
    }

    pub fn head_input_dim(&self) -> usize {
        if self.ablation.no_hierarchy {
            self.flat_dim()
        } else {
            self.flat_dim() + self.num_properties
        }
    }

    pub fn head_output_dim(&self) -> usize {
        match self.mode {
            Mode::Multilabel => 2 * self.num_properties,
            Mode::Regression => self.num_properties,
        }
    }

    /// Names and shapes of all learnable arrays, in storage order.
    pub fn param_shapes(&self) -> Vec<(&'static str, [usize; 2])> {
        let (d, h, da) = (self.input_dim, self.hidden, self.attention_dim);
        vec![
            ("marker", [3, self.marker_dim()]),
            ("lstm_fwd.w_input", [d, 4 * h]),
            ("lstm_fwd.w_hidden", [h, 4 * h]),
            ("lstm_fwd.bias", [1, 4 * h]),
            ("lstm_bwd.w_input", [d, 4 * h]),
            ("lstm_bwd.w_hidden", [h, 4 * h]),
            ("lstm_bwd.bias", [1, 4 * h]),
            ("attention.query", [2 * h, da]),
            ("attention.key", [2 * h, da]),
            ("attention.beta", [1, da]),
            ("attention.v", [da, 1]),
            ("attention.alpha", [1, 1]),
            ("aux.a", [self.flat_dim(), self.num_properties]),
            ("heads.w", [self.head_input_dim(), self.head_output_dim()]),
        ]
    }
}

mod slot {
    pub const MARKER: usize = 0;
    pub const FWD: usize = 1;
    pub const BWD: usize = 4;
    pub const QUERY: usize = 7;
    pub const KEY: usize = 8;
    pub const BETA: usize = 9;
    pub const V: usize = 10;
    pub const ALPHA: usize = 11;
    pub const AUX: usize = 12;
    pub const HEADS: usize = 13;
}

/// All learnable arrays of one model, in [`ModelConfig::param_shapes`] order.
///
/// `heads.w` column pair `(2p, 2p+1)` is the weight matrix `W^p` of property
/// `p` in multi-label mode; in regression mode column `p` is its scalar head.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<F: Scalar = f32> {
    pub config: ModelConfig,
    pub tensors: Vec<Tensor<F>>,
}

/// Model-side view of one prepared example.
#[derive(Clone, Debug)]
pub struct ModelInput<F: Scalar = f32> {
    pub inputs: Tensor<F>,
    pub tags: Vec<Tag>,
}

impl From<&PreparedExample> for ModelInput<f32> {
    fn from(ex: &PreparedExample) -> Self {
        Self {
            inputs: ex.inputs.clone(),
            tags: ex.tags.clone(),
        }
    }
}

impl<F: Scalar> ModelInput<F> {
    pub fn from_prepared(ex: &PreparedExample) -> Self {
        Self {
            inputs: ex.inputs.cast(),
            tags: ex.tags.clone(),
        }
    }
}

/// Graph handles produced by [`ModelParams::forward`].
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub hidden: Var,
    pub attended: Var,
    /// `1 × |P|`; absent under `no_hierarchy`.
    pub aux: Option<Var>,
    /// Multi-label: `|P| × 2` rows of (does not apply, applies).
    /// Regression: `1 × |P|`.
    pub output: Var,
}

/// Per-property output of a single forward pass.
#[derive(Clone, Debug, PartialEq)]
pub enum Prediction {
    /// `[P(not applies), P(applies)]` per property.
    Multilabel(Vec<[f32; 2]>),
    Regression(Vec<f32>),
}

impl Prediction {
    /// Probability of "applies" (multi-label) or the Likert estimate.
    pub fn scores(&self) -> Vec<f32> {
        match self {
            Prediction::Multilabel(pairs) => pairs.iter().map(|p| p[1]).collect(),
            Prediction::Regression(v) => v.clone(),
        }
    }

    pub fn labels(&self) -> Vec<bool> {
        match self {
            Prediction::Multilabel(pairs) => pairs.iter().map(|p| p[1] > p[0]).collect(),
            Prediction::Regression(v) => v.iter().map(|&x| x >= 4.0).collect(),
        }
    }
}

fn uniform_fan_in(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor<f32> {
    let bound = 1.0 / (rows as f32).sqrt();
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-bound..bound))
}

impl ModelParams<f32> {
    /// Seeded initialization: markers from `U(-0.05, 0.05)`, biases zero,
    /// weight matrices from `U(-1/√fan_in, 1/√fan_in)`.
    pub fn initialize(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let tensors = config
            .param_shapes()
            .into_iter()
            .map(|(name, [r, c])| match name {
                "marker" => init_marker_table(c, &mut rng),
                n if n.ends_with("bias") || n.ends_with("beta") || n.ends_with("alpha") => {
                    Tensor::zeros(&[r, c])
                }
                _ => uniform_fan_in(r, c, &mut rng),
            })
            .collect();
        Ok(Self { config, tensors })
    }

    pub fn predict(&self, example: &PreparedExample) -> Result<Prediction> {
        self.predict_input(&ModelInput::from(example))
    }
}

impl<F: Scalar> ModelParams<F> {
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor<F>>) -> Result<Self> {
        config.validate()?;
        let shapes = config.param_shapes();
        if shapes.len() != tensors.len() {
            return Err(Error::data(format!(
                "expected {} parameter arrays, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in shapes.iter().zip(&tensors) {
            if t.shape() != shape {
                return Err(Error::data(format!(
                    "parameter {name}: shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(Self { config, tensors })
    }

    pub fn cast<G: Scalar>(&self) -> ModelParams<G> {
        ModelParams {
            config: self.config.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Flattens every parameter into one vector, in storage order.
    pub fn flatten(&self) -> Vec<F> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn unflatten(&mut self, flat: &[F]) {
        let mut offset = 0;
        for t in &mut self.tensors {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }

    fn check_input(&self, input: &ModelInput<F>) -> Result<()> {
        let c = &self.config;
        if input.inputs.dims2() != Some((c.max_len, c.input_dim)) {
            return Err(Error::data(format!(
                "input shape {:?}, model expects [{}, {}]",
                input.inputs.shape(),
                c.max_len,
                c.input_dim
            )));
        }
        if input.tags.len() != c.max_len {
            return Err(Error::data(format!(
                "{} tags for {} slots",
                input.tags.len(),
                c.max_len
            )));
        }
        Ok(())
    }

    /// Marker row per slot, honoring the marker ablations.
    pub fn marker_indices(&self, tags: &[Tag]) -> Vec<Option<usize>> {
        let a = self.config.ablation;
        tags.iter()
            .map(|tag| match tag {
                Tag::Pad => None,
                Tag::Argument if !a.no_argument_marker => Some(Marker::Argument as usize),
                Tag::Predicate if !a.no_predicate_marker => Some(Marker::Predicate as usize),
                _ => Some(Marker::Other as usize),
            })
            .collect()
    }

    /// `(e_1·m_1, …, e_T·m_T)`.
    pub fn marker_gate(&self, g: &mut Graph<'_, F>, inputs: Var, tags: &[Tag]) -> Result<Var> {
        let (rows, cols) = g.value(inputs).dims2().unwrap_or((0, 0));
        if rows != tags.len() {
            return Err(Error::data(format!("{} tags for {rows} input vectors", tags.len())));
        }
        if self.config.ablation.no_markers {
            return Ok(inputs);
        }
        let table = g.param(slot::MARKER);
        let markers = g.gather_rows(table, &self.marker_indices(tags))?;
        let wd = self.config.marker_dim();
        if wd == cols {
            return Ok(g.mul(inputs, markers)?);
        }
        let words = g.slice_cols(inputs, 0, wd)?;
        let rest = g.slice_cols(inputs, wd, cols)?;
        let gated = g.mul(words, markers)?;
        Ok(g.concat(&[gated, rest], Axis::Cols)?)
    }

    fn lstm_direction(
        &self,
        g: &mut Graph<'_, F>,
        x: Var,
        base: usize,
        reverse: bool,
    ) -> Result<Vec<Var>> {
        let h = self.config.hidden;
        let t_len = g.value(x).rows();
        let w_in = g.param(base);
        let w_hid = g.param(base + 1);
        let bias = g.param(base + 2);
        let projected = g.matmul(x, w_in)?;
        let pre = g.add_row(projected, bias)?;

        let mut states = vec![None; t_len];
        let mut prev: Option<(Var, Var)> = None;
        let order: Vec<usize> = if reverse {
            (0..t_len).rev().collect()
        } else {
            (0..t_len).collect()
        };
        for t in order {
            let mut gates = g.slice_rows(pre, t, t + 1)?;
            if let Some((h_prev, _)) = prev {
                let rec = g.matmul(h_prev, w_hid)?;
                gates = g.add(gates, rec)?;
            }
            let i_pre = g.slice_cols(gates, 0, h)?;
            let f_pre = g.slice_cols(gates, h, 2 * h)?;
            let c_pre = g.slice_cols(gates, 2 * h, 3 * h)?;
            let o_pre = g.slice_cols(gates, 3 * h, 4 * h)?;
            let input_gate = g.sigmoid(i_pre);
            let candidate = g.tanh(c_pre);
            let output_gate = g.sigmoid(o_pre);
            let mut cell = g.mul(input_gate, candidate)?;
            if let Some((_, c_prev)) = prev {
                let forget = g.sigmoid(f_pre);
                let kept = g.mul(forget, c_prev)?;
                cell = g.add(kept, cell)?;
            }
            let squashed = g.tanh(cell);
            let hidden = g.mul(output_gate, squashed)?;
            states[t] = Some(hidden);
            prev = Some((hidden, cell));
        }
        Ok(states.into_iter().map(|s| s.expect("every step visited")).collect())
    }

    /// Bi-LSTM over `x` (`T × d`) → `S` (`T × 2H`), forward read first.
    pub fn encode(&self, g: &mut Graph<'_, F>, x: Var) -> Result<Var> {
        let fwd = self.lstm_direction(g, x, slot::FWD, false)?;
        let bwd = self.lstm_direction(g, x, slot::BWD, true)?;
        let fwd = g.concat(&fwd, Axis::Rows)?;
        let bwd = g.concat(&bwd, Axis::Rows)?;
        Ok(g.concat(&[fwd, bwd], Axis::Cols)?)
    }

    /// Attention weights (`T × T`) and `Z` (`T × 2H`).
    pub fn self_attend(&self, g: &mut Graph<'_, F>, s: Var) -> Result<(Var, Var)> {
        let t_len = g.value(s).rows();
        let q = g.param(slot::QUERY);
        let k = g.param(slot::KEY);
        let beta = g.param(slot::BETA);
        let v = g.param(slot::V);
        let alpha = g.param(slot::ALPHA);
        let qs = g.matmul(s, q)?;
        let ks = g.matmul(s, k)?;
        let pairs = g.pairwise_add(qs, ks)?;
        let pairs = g.add_row(pairs, beta)?;
        let hidden = g.tanh(pairs);
        let scores = g.matmul(hidden, v)?;
        let scores = g.add_row(scores, alpha)?;
        let energy = g.sigmoid(scores);
        let energy = g.reshape(energy, vec![t_len, t_len])?;
        let weights = g.softmax(energy)?;
        let z = g.matmul(weights, s)?;
        Ok((weights, z))
    }

    /// Auxiliary layer and final heads over `Z`.
    pub fn heads(&self, g: &mut Graph<'_, F>, z_seq: Var) -> Result<(Option<Var>, Var)> {
        let c = &self.config;
        let n = g.value(z_seq).len();
        let z = g.reshape(z_seq, vec![1, n])?;
        let (aux, features) = if c.ablation.no_hierarchy {
            (None, z)
        } else {
            let a = g.param(slot::AUX);
            let pre = g.matmul(z, a)?;
            let aux = g.relu(pre);
            (Some(aux), g.concat(&[aux, z], Axis::Cols)?)
        };
        let w = g.param(slot::HEADS);
        let logits = g.matmul(features, w)?;
        let output = match c.mode {
            Mode::Multilabel => {
                let pairs = g.reshape(logits, vec![c.num_properties, 2])?;
                g.softmax(pairs)?
            }
            Mode::Regression => g.relu(logits),
        };
        Ok((aux, output))
    }

    pub fn forward(&self, g: &mut Graph<'_, F>, input: &ModelInput<F>) -> Result<ForwardVars> {
        self.check_input(input)?;
        let x = g.input(input.inputs.clone());
        let gated = self.marker_gate(g, x, &input.tags)?;
        let hidden = self.encode(g, gated)?;
        let attended = if self.config.ablation.no_self_attention {
            hidden
        } else {
            self.self_attend(g, hidden)?.1
        };
        let (aux, output) = self.heads(g, attended)?;
        Ok(ForwardVars {
            hidden,
            attended,
            aux,
            output,
        })
    }

    pub fn predict_input(&self, input: &ModelInput<F>) -> Result<Prediction> {
        let mut g = Graph::new(&self.tensors);
        let vars = self.forward(&mut g, input)?;
        let out = g.value(vars.output);
        let f = |x: F| x.to_f32().unwrap_or(f32::NAN);
        Ok(match self.config.mode {
            Mode::Multilabel => Prediction::Multilabel(
                (0..self.config.num_properties)
                    .map(|p| [f(out.at(p, 0)), f(out.at(p, 1))])
                    .collect(),
            ),
            Mode::Regression => Prediction::Regression(out.data().iter().map(|&x| f(x)).collect()),
        })
    }
}

/// Numeric threshold used when reading multi-label probabilities as labels.
pub fn applies<F: Scalar>(p_applies: F) -> bool {
    p_applies > lit(0.5)
}
