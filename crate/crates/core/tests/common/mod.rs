#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sprl_core::autodiff::grad_check;
use sprl_core::dataset::clip_and_pad;
use sprl_core::model::{ModelConfig, ModelInput};
use sprl_core::training::loss_and_gradients;
use sprl_core::{Ablation, Mode, ModelParams, Tensor, TrainConfig};

/// A small random model with every parameter drawn from U(−0.5, 0.5) and a
/// random 3–6 token example padded to length 6.
pub struct GradCase {
    pub params: ModelParams<f64>,
    pub input: ModelInput<f64>,
    pub binary: Vec<bool>,
    pub likert: Vec<f32>,
}

pub fn grad_case(seed: u64, mode: Mode, ablation: Ablation) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=6);
    let d = rng.gen_range(2..=4);
    let props = rng.gen_range(1..=3);
    let mut config = ModelConfig::new(mode, d, props);
    config.max_len = 6;
    config.hidden = rng.gen_range(2..=3);
    config.attention_dim = rng.gen_range(2..=3);
    config.ablation = ablation;
    config.seed = seed;
    let tensors = config
        .param_shapes()
        .iter()
        .map(|(_, [r, c])| Tensor::from_fn(*r, *c, |_, _| rng.gen_range(-0.5..0.5)))
        .collect();
    let params = ModelParams::from_tensors(config, tensors).unwrap();

    let pred = rng.gen_range(0..n);
    let arg = loop {
        let a = rng.gen_range(0..n);
        if a != pred {
            break a;
        }
    };
    let plan = clip_and_pad(n, &[pred], (arg, arg), 6).unwrap();
    let inputs = Tensor::from_fn(6, d, |r, _| {
        if plan.slots[r].is_some() {
            rng.gen_range(-1.0..1.0)
        } else {
            0.0
        }
    });
    GradCase {
        params,
        input: ModelInput {
            inputs,
            tags: plan.tags,
        },
        binary: (0..props).map(|_| rng.gen_bool(0.5)).collect(),
        likert: (0..props).map(|_| rng.gen_range(1.0..5.0)).collect(),
    }
}

/// Max relative error of the full forward + loss gradient against central
/// differences.
pub fn marker_grad_error(case: &GradCase, config: &TrainConfig, epsilon: f64) -> f64 {
    let base = case.params.clone();
    let f = |flat: &[f64]| {
        let mut p = base.clone();
        p.unflatten(flat);
        let (loss, grads) =
            loss_and_gradients(&p, &case.input, &case.binary, &case.likert, config).unwrap();
        (loss, grads.iter().flat_map(|g| g.data().to_vec()).collect())
    };
    grad_check(f, &base.flatten(), epsilon)
}

pub fn train_config(mode: Mode) -> TrainConfig {
    TrainConfig {
        mode,
        ..TrainConfig::default()
    }
}

/// Every parameter drawn from U(−0.5, 0.5).
pub fn random_params(config: ModelConfig, seed: u64) -> ModelParams<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors = config
        .param_shapes()
        .iter()
        .map(|(_, [r, c])| Tensor::from_fn(*r, *c, |_, _| rng.gen_range(-0.5f32..0.5)))
        .collect();
    ModelParams::from_tensors(config, tensors).unwrap()
}

/// Random word vectors for an `n`-token sentence with one-token predicate
/// and argument, padded to `config.max_len`.
pub fn random_input(config: &ModelConfig, n: usize, pred: usize, arg: usize, seed: u64) -> ModelInput<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = clip_and_pad(n, &[pred], (arg, arg), config.max_len).unwrap();
    let inputs = Tensor::from_fn(config.max_len, config.input_dim, |r, _| {
        if plan.slots[r].is_some() {
            rng.gen_range(-1.0f32..1.0)
        } else {
            0.0
        }
    });
    ModelInput {
        inputs,
        tags: plan.tags,
    }
}

pub fn small_config(mode: Mode) -> ModelConfig {
    ModelConfig {
        max_len: 8,
        hidden: 4,
        attention_dim: 5,
        ..ModelConfig::new(mode, 6, 3)
    }
}
