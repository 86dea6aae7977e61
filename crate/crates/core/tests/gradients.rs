mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sprl_core::autodiff::{grad_check, Graph, Tensor};
use sprl_core::{Ablation, Mode};

use common::{grad_case, marker_grad_error, train_config};

const EPS: f64 = 1e-3;

#[test]
fn two_layer_network_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut t = |r, c| Tensor::<f64>::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
    let x = t(4, 5);
    let params = [t(5, 6), t(1, 6), t(6, 3), t(1, 3)];
    let flat: Vec<f64> = params.iter().flat_map(|p| p.data().to_vec()).collect();
    let shapes: Vec<Vec<usize>> = params.iter().map(|p| p.shape().to_vec()).collect();
    let f = |v: &[f64]| {
        let mut off = 0;
        let ps: Vec<Tensor<f64>> = shapes
            .iter()
            .map(|s| {
                let n: usize = s.iter().product();
                let t = Tensor::new(s.clone(), v[off..off + n].to_vec()).unwrap();
                off += n;
                t
            })
            .collect();
        let mut g = Graph::new(&ps);
        let input = g.input(x.clone());
        let (w1, b1, w2, b2) = (g.param(0), g.param(1), g.param(2), g.param(3));
        let h = g.matmul(input, w1).unwrap();
        let h = g.add_row(h, b1).unwrap();
        let h = g.tanh(h);
        let o = g.matmul(h, w2).unwrap();
        let o = g.add_row(o, b2).unwrap();
        let o = g.softmax(o).unwrap();
        let o = g.square(o);
        let loss = g.sum(o);
        let value = g.value(loss).data()[0];
        let grads = g.backward(loss).unwrap();
        (value, grads.iter().flat_map(|t| t.data().to_vec()).collect())
    };
    assert!(grad_check(f, &flat, 1e-3) < 1e-4);
}

#[test]
fn multilabel_objective_gradients() {
    for seed in 0..20 {
        let case = grad_case(seed, Mode::Multilabel, Ablation::full());
        let err = marker_grad_error(&case, &train_config(Mode::Multilabel), EPS);
        assert!(err < 1e-3, "seed {seed}: {err}");
    }
}

#[test]
fn regression_objective_gradients() {
    for seed in 100..110 {
        let case = grad_case(seed, Mode::Regression, Ablation::full());
        let err = marker_grad_error(&case, &train_config(Mode::Regression), EPS);
        assert!(err < 1e-3, "seed {seed}: {err}");
    }
}

#[test]
fn ablated_objective_gradients() {
    for (i, switch) in Ablation::SWITCHES.iter().enumerate() {
        let ablation = Ablation::full().with(switch).unwrap();
        let case = grad_case(200 + i as u64, Mode::Multilabel, ablation);
        let err = marker_grad_error(&case, &train_config(Mode::Multilabel), EPS);
        assert!(err < 1e-3, "{switch}: {err}");
    }
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn random_instances_match_finite_differences(seed in 1000u64..1_000_000) {
            let case = grad_case(seed, Mode::Multilabel, Ablation::full());
            let err = marker_grad_error(&case, &train_config(Mode::Multilabel), EPS);
            prop_assert!(err < 1e-3, "seed {}: {}", seed, err);
        }
    }
}
