use sprl_core::checkpoint;
use sprl_core::ensemble::{
    convergence_curve, train_ensemble, write_convergence_csv, Ensemble, EnsembleManifest, Member,
};
use sprl_core::evaluation::ablation::{ablation_suite, variants, AblationData};
use sprl_core::predictions::PredictionSet;
use sprl_core::synthetic::{lexical_corpus, span_order_corpus, SyntheticCorpus};
use sprl_core::training::{predict_all, train};
use sprl_core::{Mode, ModelConfig, ModelParams, PreparedExample, Split, TrainConfig};

const T: usize = 10;

fn desk_model(mode: Mode, input_dim: usize, props: usize) -> ModelConfig {
    ModelConfig {
        max_len: T,
        hidden: 16,
        attention_dim: 16,
        ..ModelConfig::new(mode, input_dim, props)
    }
}

fn desk_train(mode: Mode, max_epochs: usize) -> TrainConfig {
    TrainConfig {
        mode,
        learning_rate: 0.01,
        batch_size: 8,
        max_epochs,
        patience: 30,
        ..TrainConfig::default()
    }
}

struct Splits {
    train: Vec<PreparedExample>,
    dev: Vec<PreparedExample>,
    test: Vec<PreparedExample>,
}

fn splits(c: &SyntheticCorpus) -> Splits {
    Splits {
        train: c.prepared(Split::Train, T).unwrap(),
        dev: c.prepared(Split::Dev, T).unwrap(),
        test: c.prepared(Split::Test, T).unwrap(),
    }
}

fn accuracy(pred: &PredictionSet, gold: &PredictionSet) -> f64 {
    let (p, g) = (pred.labels(), gold.labels());
    let total = p.len() * p[0].len();
    let hits = p
        .iter()
        .zip(&g)
        .flat_map(|(a, b)| a.iter().zip(b))
        .filter(|(a, b)| a == b)
        .count();
    hits as f64 / total as f64
}

#[test]
fn single_member_ensemble_matches_its_member() {
    let c = lexical_corpus(60, 12, 0.1, 1, 1);
    let s = splits(&c);
    let tc = desk_train(Mode::Multilabel, 4);
    let base = desk_model(Mode::Multilabel, 12, 3);
    let ens = train_ensemble(&tc, &base, &[7], &s.train, &s.dev).unwrap();
    let alone = train(
        &TrainConfig { seed: 7, ..tc },
        ModelParams::initialize(ModelConfig { seed: 7, ..base }).unwrap(),
        &s.train,
        &s.dev,
    )
    .unwrap();
    assert_eq!(ens.members()[0].params, alone.params);
    let voted = ens.predict(&c.inventory, &s.test).unwrap();
    let member = PredictionSet::from_predictions(
        Mode::Multilabel,
        &c.inventory,
        &s.test,
        &predict_all(&alone.params, &s.test).unwrap(),
    );
    assert_eq!(voted.labels(), member.labels());
}

#[test]
fn duplicate_seeds_are_rejected() {
    let c = lexical_corpus(20, 4, 0.0, 1, 1);
    let s = splits(&c);
    let err = train_ensemble(
        &desk_train(Mode::Multilabel, 1),
        &desk_model(Mode::Multilabel, 4, 3),
        &[3, 3, 3],
        &s.train,
        &s.dev,
    )
    .err()
    .unwrap();
    assert!(err.to_string().contains("distinct"), "{err}");
}

#[test]
fn member_failure_names_the_seed() {
    let c = lexical_corpus(20, 4, 0.0, 1, 1);
    let s = splits(&c);
    let mut tc = desk_train(Mode::Multilabel, 2);
    tc.learning_rate = f64::INFINITY;
    let err = train_ensemble(&tc, &desk_model(Mode::Multilabel, 4, 3), &[11], &s.train, &s.dev)
        .err()
        .unwrap();
    assert!(err.to_string().contains("seed 11"), "{err}");
}

#[test]
fn desk_ensemble_members_differ_and_vote_well() {
    let c = lexical_corpus(200, 12, 0.15, 1, 11);
    let s = splits(&c);
    let ens = train_ensemble(
        &desk_train(Mode::Multilabel, 60),
        &desk_model(Mode::Multilabel, 12, 3),
        &[1, 2, 3, 4, 5],
        &s.train,
        &s.dev,
    )
    .unwrap();
    let members = ens.member_predictions(&c.inventory, &s.dev).unwrap();
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            assert_ne!(members[i].scores(), members[j].scores(), "members {i} and {j}");
        }
    }
    let gold = PredictionSet::gold_prepared(Mode::Multilabel, &c.inventory, &s.dev);
    let mut accs: Vec<f64> = members.iter().map(|m| accuracy(m, &gold)).collect();
    accs.sort_by(f64::total_cmp);
    let median = accs[accs.len() / 2];
    let voted = accuracy(&ens.predict(&c.inventory, &s.dev).unwrap(), &gold);
    assert!(voted >= median - 0.01, "ensemble {voted} vs median member {median}");
}

#[test]
fn convergence_curve_is_deterministic_and_sized() {
    let c = lexical_corpus(60, 8, 0.2, 1, 3);
    let s = splits(&c);
    let ens = train_ensemble(
        &desk_train(Mode::Multilabel, 3),
        &desk_model(Mode::Multilabel, 8, 3),
        &[1, 2, 3, 4],
        &s.train,
        &s.dev,
    )
    .unwrap();
    let gold = PredictionSet::gold_prepared(Mode::Multilabel, &c.inventory, &s.test);
    let preds = ens.member_predictions(&c.inventory, &s.test).unwrap();
    let a = convergence_curve(&preds, &gold).unwrap();
    let b = convergence_curve(&ens.member_predictions(&c.inventory, &s.test).unwrap(), &gold).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 3);
    let mut csv = Vec::new();
    write_convergence_csv(&mut csv, &a).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("n,mean_delta,std_delta\n2,"));
    assert_eq!(text.lines().count(), 4);

    let twin = ens.members()[0].params.clone();
    let clones = Ensemble::new(
        (0..4)
            .map(|i| Member {
                seed: i,
                params: twin.clone(),
                report: None,
            })
            .collect(),
    )
    .unwrap();
    let flat = convergence_curve(&clones.member_predictions(&c.inventory, &s.test).unwrap(), &gold).unwrap();
    assert!(flat.iter().all(|p| p.mean_delta == 0.0 && p.std_delta == 0.0));
}

#[test]
fn regression_ensemble_averages_scores() {
    let c = lexical_corpus(40, 6, 0.1, 2, 4);
    let s = splits(&c);
    let ens = train_ensemble(
        &desk_train(Mode::Regression, 2),
        &desk_model(Mode::Regression, 6, 3),
        &[1, 2],
        &s.train,
        &s.dev,
    )
    .unwrap();
    let members = ens.member_predictions(&c.inventory, &s.test).unwrap();
    let mean = ens.predict(&c.inventory, &s.test).unwrap();
    for (i, row) in mean.rows.iter().enumerate() {
        for p in 0..3 {
            let expected = (members[0].rows[i].values[p] + members[1].rows[i].values[p]) / 2.0;
            assert!((row.values[p] - expected).abs() < 1e-6);
        }
    }
}

#[test]
fn manifest_reloads_members() {
    let c = lexical_corpus(30, 6, 0.1, 1, 5);
    let s = splits(&c);
    let ens = train_ensemble(
        &desk_train(Mode::Multilabel, 2),
        &desk_model(Mode::Multilabel, 6, 3),
        &[4, 9],
        &s.train,
        &s.dev,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut entries = Vec::new();
    for m in ens.members() {
        let name = format!("member-{}.ckpt", m.seed);
        checkpoint::save(&dir.path().join(&name), &m.params, &c.inventory).unwrap();
        entries.push((m.seed, name.into()));
    }
    let manifest_path = dir.path().join("ensemble.txt");
    EnsembleManifest { members: entries }.write(&manifest_path).unwrap();
    let manifest = EnsembleManifest::load(&manifest_path).unwrap();
    let reloaded = Ensemble::new(
        manifest
            .members
            .iter()
            .map(|(seed, path)| Member {
                seed: *seed,
                params: checkpoint::load_for(path, &c.inventory).unwrap().params,
                report: None,
            })
            .collect(),
    )
    .unwrap();
    assert_eq!(
        reloaded.predict(&c.inventory, &s.test).unwrap(),
        ens.predict(&c.inventory, &s.test).unwrap()
    );
}

#[test]
fn ablation_table_on_span_dependent_corpus() {
    let c = span_order_corpus(100, 16, 6);
    let s = splits(&c);
    let tc = desk_train(Mode::Multilabel, 60);
    let base = desk_model(Mode::Multilabel, 16, 2);
    let seeds = [1, 2, 3];
    let data = AblationData {
        inventory: &c.inventory,
        train: &s.train,
        dev: &s.dev,
        test: &s.test,
    };
    let rows = ablation_suite(&tc, &base, &seeds, &data).unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r.variant.as_str()).collect();
    let expected: Vec<&str> = variants().iter().map(|(n, _)| *n).collect();
    assert_eq!(names, expected);
    assert_eq!(rows[0].delta, 0.0);

    let gold = PredictionSet::gold_prepared(Mode::Multilabel, &c.inventory, &s.test);
    let plain = train_ensemble(&tc, &base, &seeds, &s.train, &s.dev)
        .unwrap()
        .predict(&c.inventory, &s.test)
        .unwrap()
        .headline_metric(&gold)
        .unwrap();
    assert_eq!(rows[0].metric, plain);

    let markerless = rows.iter().find(|r| r.variant == "mark.").unwrap();
    assert!(markerless.metric <= rows[0].metric, "{rows:?}");
}
