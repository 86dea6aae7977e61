//! Losses, the seeded optimization loop, and early stopping.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{lit, Adam, AdamConfig, Graph, Scalar, Tensor, Var};
use crate::dataset::PreparedExample;
use crate::evaluation;
use crate::model::{Ablation, MarkerScope, Mode, ModelConfig, ModelInput, ModelParams, Prediction};
use crate::{Error, Result};

/// Floor applied inside the cross-entropy logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

/// Average cross entropy over properties, scaled by `λ`:
/// `−(λ/|P|) Σ_p [o*_p,applies · log o_p,applies + o*_p,not · log o_p,not]`.
///
/// `outputs` is the `|P| × 2` softmax block (column 0 = does not apply).
pub fn loss_main<F: Scalar>(
    g: &mut Graph<'_, F>,
    outputs: Var,
    gold: &[bool],
    lambda: f64,
) -> Result<Var> {
    let n = gold.len();
    let indicator = Tensor::from_fn(n, 2, |p, c| {
        if (c == 1) == gold[p] {
            F::one()
        } else {
            F::zero()
        }
    });
    let indicator = g.input(indicator);
    let logs = g.log_clamped(outputs, lit(LOG_FLOOR));
    let picked = g.mul(logs, indicator)?;
    let total = g.sum(picked);
    Ok(g.scale(total, lit(-lambda / n as f64)))
}

/// `(λ'/|P|) Σ_p (a*_p − a_p)²` over the auxiliary layer.
pub fn loss_aux<F: Scalar>(
    g: &mut Graph<'_, F>,
    aux: Var,
    gold: &[f32],
    lambda_aux: f64,
) -> Result<Var> {
    let n = gold.len();
    let target = g.input(Tensor::row(gold.iter().map(|&x| lit(x as f64)).collect()));
    let diff = g.sub(target, aux)?;
    let sq = g.square(diff);
    let total = g.sum(sq);
    Ok(g.scale(total, lit(lambda_aux / n as f64)))
}

/// Mean squared error of the regression heads.
pub fn loss_regression<F: Scalar>(g: &mut Graph<'_, F>, outputs: Var, gold: &[f32]) -> Result<Var> {
    loss_aux(g, outputs, gold, 1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// `λ`, weight of the main loss.
    pub lambda_main: f64,
    /// `λ'`, weight of the auxiliary loss.
    pub lambda_aux: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub mode: Mode,
    /// Global gradient-norm clip. Off unless set.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_main: 1.0,
            lambda_aux: 0.2,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            mode: Mode::Multilabel,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_main < 0.0 || self.lambda_aux < 0.0 {
            return Err(Error::config("loss weights must be non-negative"));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::config("batch_size, patience and max_epochs must be at least 1"));
        }
        Ok(())
    }
}

/// Architecture choices that do not depend on the data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelOptions {
    pub max_len: usize,
    pub hidden: usize,
    pub attention_dim: usize,
    pub marker_scope: MarkerScope,
    pub ablation: Ablation,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            max_len: crate::dataset::MAX_SEQ_LEN,
            hidden: 64,
            attention_dim: 128,
            marker_scope: MarkerScope::Full,
            ablation: Ablation::default(),
        }
    }
}

impl ModelOptions {
    pub fn model_config(
        &self,
        mode: Mode,
        input_dim: usize,
        word_dim: usize,
        num_properties: usize,
        seed: u64,
    ) -> ModelConfig {
        ModelConfig {
            mode,
            max_len: self.max_len,
            hidden: self.hidden,
            attention_dim: self.attention_dim,
            input_dim,
            word_dim,
            marker_scope: self.marker_scope,
            num_properties,
            ablation: self.ablation,
            seed,
        }
    }
}

/// Everything a configuration file can set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub model: ModelOptions,
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::config(format!("invalid value {value:?} for {key}")))
        }
        let t = &mut self.train;
        let m = &mut self.model;
        match key {
            "lambda_main" | "lambda" => t.lambda_main = num(key, value)?,
            "lambda_aux" => t.lambda_aux = num(key, value)?,
            "learning_rate" => t.learning_rate = num(key, value)?,
            "batch_size" => t.batch_size = num(key, value)?,
            "max_epochs" => t.max_epochs = num(key, value)?,
            "patience" => t.patience = num(key, value)?,
            "seed" => t.seed = num(key, value)?,
            "mode" => t.mode = value.parse()?,
            "clip_norm" => {
                t.clip_norm = match value {
                    "none" | "off" => None,
                    v => Some(num(key, v)?),
                }
            }
            "max_seq_len" => m.max_len = num(key, value)?,
            "hidden_units" => m.hidden = num(key, value)?,
            "attention_dim" => m.attention_dim = num(key, value)?,
            "marker_scope" => {
                m.marker_scope = match value {
                    "full" => MarkerScope::Full,
                    "word" => MarkerScope::WordOnly,
                    other => return Err(Error::config(format!("unknown marker_scope {other:?}"))),
                }
            }
            switch if Ablation::SWITCHES.contains(&switch) => {
                *m.ablation.flag_mut(switch)? = num::<bool>(key, value)?;
            }
            other => return Err(Error::config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Flat `key = value` text; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value", n + 1)))?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| Error::config(format!("line {}: {e}", n + 1)))?;
        }
        config.train.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    /// Resolved settings, one `key = value` per line, in a fixed order.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let m = &self.model;
        let mut lines = vec![
            format!("mode = {}", t.mode.as_str()),
            format!("lambda_main = {}", t.lambda_main),
            format!("lambda_aux = {}", t.lambda_aux),
            format!("learning_rate = {}", t.learning_rate),
            format!("batch_size = {}", t.batch_size),
            format!("max_epochs = {}", t.max_epochs),
            format!("patience = {}", t.patience),
            format!("seed = {}", t.seed),
            format!(
                "clip_norm = {}",
                t.clip_norm.map_or("none".to_string(), |c| c.to_string())
            ),
            format!("max_seq_len = {}", m.max_len),
            format!("hidden_units = {}", m.hidden),
            format!("attention_dim = {}", m.attention_dim),
            format!(
                "marker_scope = {}",
                match m.marker_scope {
                    MarkerScope::Full => "full",
                    MarkerScope::WordOnly => "word",
                }
            ),
        ];
        for (name, on) in m.ablation.flags() {
            lines.push(format!("{name} = {on}"));
        }
        lines.join("\n") + "\n"
    }
}

/// Per-example objective: `ℓ + ℓ'` (multi-label) or MSE `+ ℓ'` (regression);
/// `ℓ'` is dropped when the hierarchy is ablated.
pub fn example_loss<F: Scalar>(
    params: &ModelParams<F>,
    g: &mut Graph<'_, F>,
    input: &ModelInput<F>,
    binary: &[bool],
    likert: &[f32],
    config: &TrainConfig,
) -> Result<Var> {
    let vars = params.forward(g, input)?;
    let main = match params.config.mode {
        Mode::Multilabel => loss_main(g, vars.output, binary, config.lambda_main)?,
        Mode::Regression => loss_regression(g, vars.output, likert)?,
    };
    match vars.aux {
        Some(aux) => {
            let aux_loss = loss_aux(g, aux, likert, config.lambda_aux)?;
            Ok(g.add(main, aux_loss)?)
        }
        None => Ok(main),
    }
}

/// Loss value and parameter gradients for one example.
pub fn loss_and_gradients<F: Scalar>(
    params: &ModelParams<F>,
    input: &ModelInput<F>,
    binary: &[bool],
    likert: &[f32],
    config: &TrainConfig,
) -> Result<(F, Vec<Tensor<F>>)> {
    let mut g = Graph::new(&params.tensors);
    let loss = example_loss(params, &mut g, input, binary, likert, config)?;
    let value = g.value(loss).data()[0];
    if !value.is_finite() {
        return Err(Error::Numeric("non-finite loss".into()));
    }
    Ok((value, g.backward(loss)?))
}

/// Model evaluation on a split: macro F1 (multi-label) or macro Pearson ρ
/// (regression).
pub fn dev_metric(params: &ModelParams<f32>, examples: &[PreparedExample]) -> Result<f64> {
    let preds = predict_all(params, examples)?;
    Ok(match params.config.mode {
        Mode::Multilabel => {
            let labels: Vec<Vec<bool>> = preds.iter().map(Prediction::labels).collect();
            let gold: Vec<Vec<bool>> = examples.iter().map(|e| e.binary_targets.clone()).collect();
            let conf = evaluation::confusions(&labels, &gold)?;
            evaluation::macro_f1(&evaluation::per_property_prf(&conf))
        }
        Mode::Regression => {
            let scores: Vec<Vec<f32>> = preds.iter().map(Prediction::scores).collect();
            let gold: Vec<Vec<f32>> = examples.iter().map(|e| e.likert_targets.clone()).collect();
            evaluation::pearson_per_property(&scores, &gold)?.macro_rho
        }
    })
}

pub fn predict_all(
    params: &ModelParams<f32>,
    examples: &[PreparedExample],
) -> Result<Vec<Prediction>> {
    examples.par_iter().map(|e| params.predict(e)).collect()
}

/// Stateful optimizer loop over epochs.
pub struct Trainer {
    config: TrainConfig,
    params: ModelParams<f32>,
    adam: Adam<f32>,
    shuffle_rng: ChaCha8Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig, params: ModelParams<f32>) -> Result<Self> {
        config.validate()?;
        if params.config.mode != config.mode {
            return Err(Error::config("training and model modes differ"));
        }
        let adam = Adam::new(
            AdamConfig {
                learning_rate: config.learning_rate,
                ..AdamConfig::default()
            },
            &params.tensors,
        );
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
        shuffle_rng.set_stream(1);
        Ok(Self {
            config,
            params,
            adam,
            shuffle_rng,
            epoch: 0,
        })
    }

    pub fn params(&self) -> &ModelParams<f32> {
        &self.params
    }

    pub fn into_params(self) -> ModelParams<f32> {
        self.params
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// One shuffled pass; returns the mean per-example loss.
    pub fn run_epoch(&mut self, examples: &[PreparedExample]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::data("empty training split"));
        }
        self.epoch += 1;
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut self.shuffle_rng);
        let mut total = 0.0;
        for (step, batch) in order.chunks(self.config.batch_size).enumerate() {
            let results: Vec<Result<(f32, Vec<Tensor<f32>>)>> = batch
                .par_iter()
                .map(|&i| {
                    let ex = &examples[i];
                    loss_and_gradients(
                        &self.params,
                        &ModelInput::from(ex),
                        &ex.binary_targets,
                        &ex.likert_targets,
                        &self.config,
                    )
                })
                .collect();
            // Summed in batch order so the result does not depend on scheduling.
            let mut grads: Vec<Tensor<f32>> =
                self.params.tensors.iter().map(|p| Tensor::zeros(p.shape())).collect();
            for r in results {
                let (loss, g) = r.map_err(|e| {
                    Error::Numeric(format!("epoch {} step {}: {e}", self.epoch, step + 1))
                })?;
                total += loss as f64;
                for (acc, gi) in grads.iter_mut().zip(&g) {
                    for (a, &b) in acc.data_mut().iter_mut().zip(gi.data()) {
                        *a += b;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f32;
            for t in &mut grads {
                t.data_mut().iter_mut().for_each(|x| *x *= scale);
            }
            if let Some(max_norm) = self.config.clip_norm {
                clip_global_norm(&mut grads, max_norm as f32);
            }
            self.adam.step(&mut self.params.tensors, &grads).map_err(|e| {
                Error::Numeric(format!("epoch {} step {}: {e}", self.epoch, step + 1))
            })?;
        }
        Ok(total / examples.len() as f64)
    }
}

fn clip_global_norm(grads: &mut [Tensor<f32>], max_norm: f32) {
    let norm = grads
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|x| x * x)
        .sum::<f32>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Dev metric after each epoch.
    pub dev_trace: Vec<f64>,
    /// Mean training loss of each epoch.
    pub loss_trace: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_metric: f64,
    pub wall_time: Duration,
}

pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    pub report: TrainReport,
}

/// Trains from `init`, evaluating on `dev` after each epoch and stopping once
/// `patience` epochs pass without a strictly better dev metric. Returns the
/// best epoch's parameters.
pub fn train(
    config: &TrainConfig,
    init: ModelParams<f32>,
    train_set: &[PreparedExample],
    dev_set: &[PreparedExample],
) -> Result<TrainOutcome> {
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::data("training needs non-empty train and dev splits"));
    }
    let started = Instant::now();
    let mut trainer = Trainer::new(config.clone(), init)?;
    let mut best = (0usize, f64::NEG_INFINITY, trainer.params().clone());
    let mut dev_trace = Vec::new();
    let mut loss_trace = Vec::new();
    let mut since_best = 0;
    for _ in 0..config.max_epochs {
        loss_trace.push(trainer.run_epoch(train_set)?);
        let metric = dev_metric(trainer.params(), dev_set)?;
        if !metric.is_finite() {
            return Err(Error::Numeric(format!(
                "epoch {}: non-finite dev metric",
                trainer.epoch()
            )));
        }
        dev_trace.push(metric);
        if metric > best.1 {
            best = (trainer.epoch(), metric, trainer.params().clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params: best.2,
        report: TrainReport {
            dev_trace,
            loss_trace,
            best_epoch: best.0,
            best_metric: best.1,
            wall_time: started.elapsed(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_main(pairs: &[[f64; 2]], gold: &[bool], lambda: f64) -> f64 {
        let mut g = Graph::<f64>::new(&[]);
        let flat: Vec<f64> = pairs.iter().flatten().copied().collect();
        let o = g.input(Tensor::matrix(pairs.len(), 2, flat).unwrap());
        let l = loss_main(&mut g, o, gold, lambda).unwrap();
        g.value(l).data()[0]
    }

    fn eval_aux(aux: &[f64], gold: &[f32], lambda: f64) -> f64 {
        let mut g = Graph::<f64>::new(&[]);
        let a = g.input(Tensor::row(aux.to_vec()));
        let l = loss_aux(&mut g, a, gold, lambda).unwrap();
        g.value(l).data()[0]
    }

    #[test]
    fn main_loss_values() {
        assert!(eval_main(&[[0.0, 1.0]], &[true], 1.0).abs() < 1e-12);
        assert!((eval_main(&[[0.5, 0.5]], &[true], 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
        let l1 = eval_main(&[[0.3, 0.7]], &[true], 1.0);
        let l2 = eval_main(&[[0.9, 0.1]], &[true], 1.0);
        let both = eval_main(&[[0.3, 0.7], [0.9, 0.1]], &[true, true], 1.0);
        assert!((both - (l1 + l2) / 2.0).abs() < 1e-12);
        // Clamp keeps the loss finite at a confident wrong answer.
        assert!(eval_main(&[[1.0, 0.0]], &[true], 1.0).is_finite());
    }

    #[test]
    fn aux_loss_values() {
        assert_eq!(eval_aux(&[2.0, 3.0], &[2.0, 3.0], 0.2), 0.0);
        assert!((eval_aux(&[3.0], &[5.0], 0.2) - 0.8).abs() < 1e-12);
        let once = eval_aux(&[1.0, 4.0], &[2.0, 2.5], 0.2);
        let twice = eval_aux(&[1.0, 4.0], &[2.0, 2.5], 0.4);
        assert!((twice - 2.0 * once).abs() < 1e-12);
    }

    #[test]
    fn regression_loss_values() {
        let mut g = Graph::<f64>::new(&[]);
        let o = g.input(Tensor::row(vec![3.0, 1.0]));
        let l = loss_regression(&mut g, o, &[2.0, 2.0]).unwrap();
        assert_eq!(g.value(l).data()[0], 1.0);
        assert_eq!(eval_aux(&[3.0, 1.0], &[2.0, 2.0], 1.0), 1.0);
    }

    #[test]
    fn config_file_parsing() {
        let text = "# comment\nlambda_aux = 0.5\nbatch_size=8\nmode = regression\nno_hierarchy = true\nhidden_units = 16\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.train.lambda_aux, 0.5);
        assert_eq!(c.train.batch_size, 8);
        assert_eq!(c.train.mode, Mode::Regression);
        assert!(c.model.ablation.no_hierarchy);
        assert_eq!(c.model.hidden, 16);
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);

        assert!(RunConfig::parse("bogus = 1").is_err());
        assert!(RunConfig::parse("patience = 0").is_err());
        assert!(RunConfig::parse("lambda_aux = -1").is_err());
    }

    #[test]
    fn defaults_match_hyperparameter_table() {
        let c = TrainConfig::default();
        assert_eq!((c.lambda_main, c.lambda_aux, c.learning_rate), (1.0, 0.2, 1e-3));
        assert_eq!((c.batch_size, c.max_epochs, c.patience), (32, 100, 10));
        let a = AdamConfig::default();
        assert_eq!((a.beta1, a.beta2, a.epsilon), (0.9, 0.999, 1e-7));
    }
}
