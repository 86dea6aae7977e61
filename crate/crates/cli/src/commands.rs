use std::fs::{self, File};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use sprl_core::checkpoint;
use sprl_core::dataset::{parse_dataset, prepare_all, split_of, write_dataset};
use sprl_core::embeddings::{load_word_vectors, ContextualVectors};
use sprl_core::ensemble::{convergence_curve, train_ensemble, write_convergence_csv, Ensemble, EnsembleManifest, Member};
use sprl_core::evaluation::ablation::{ablation_suite, write_ablation_report, AblationData};
use sprl_core::evaluation::{
    confusions, macro_f1, macro_pr, mcnemar, micro_f1, pearson_per_property, per_property_prf,
    write_multilabel_report, write_regression_report, write_significance_report,
};
use sprl_core::synthetic::{lexical_corpus, span_order_twins};
use sprl_core::training::{train, RunConfig, TrainReport};
use sprl_core::{
    Error, Featurizer, Mode, ModelConfig, ModelParams, PredictionSet, PreparedExample,
    PropertyInventory, Result, Split, SprExample,
};

use crate::args::{DataArgs, GoldArgs, InputArgs, ModeArg, SplitArg, SynthKind, TrainArgs};
use crate::manifest::RunManifest;

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}

/// Field count of the first non-empty line, minus the token.
fn vector_dim(path: &Path) -> Result<usize> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields = line.split_whitespace().count();
        if fields > 0 {
            return if fields > 1 {
                Ok(fields - 1)
            } else {
                Err(Error::data(format!("{}: vector line without values", path.display())))
            };
        }
    }
    Err(Error::data(format!("{}: no word vectors", path.display())))
}

fn featurizer(input: &InputArgs, manifest: &mut RunManifest) -> Result<Featurizer> {
    let dim = vector_dim(&input.vectors)?;
    let mut f = Featurizer::new(load_word_vectors(&input.vectors, dim)?);
    manifest.input(&input.vectors)?;
    if let Some(path) = &input.contextual {
        f = f.with_contextual(ContextualVectors::load(path)?);
        manifest.input(path)?;
    }
    Ok(f)
}

fn dataset(path: &Path, inventory: &PropertyInventory, manifest: &mut RunManifest) -> Result<Vec<SprExample>> {
    let examples = parse_dataset(path, inventory)?;
    manifest.input(path)?;
    Ok(examples)
}

fn prepared(examples: &[SprExample], split: Split, f: &Featurizer, max_len: usize) -> Result<Vec<PreparedExample>> {
    let part = split_of(examples, split);
    if part.is_empty() {
        return Err(Error::data(format!("no {} examples", split.as_str())));
    }
    prepare_all(&part, f, max_len)
}

fn run_config(args: &TrainArgs, manifest: &mut RunManifest) -> Result<RunConfig> {
    let mut rc = match &args.config {
        Some(path) => {
            manifest.input(path)?;
            RunConfig::load(path)?
        }
        None => RunConfig::default(),
    };
    if let Some(m) = args.mode {
        rc.train.mode = m.into();
    }
    if let Some(s) = args.seed {
        rc.train.seed = s;
    }
    if let Some(p) = args.patience {
        rc.train.patience = p;
    }
    if let Some(b) = args.batch_size {
        rc.train.batch_size = b;
    }
    for switch in &args.ablate {
        *rc.model.ablation.flag_mut(switch)? = true;
    }
    rc.train.validate()?;
    manifest.config = Some(rc.to_text());
    Ok(rc)
}

struct Prepared {
    inventory: PropertyInventory,
    featurizer: Featurizer,
    train: Vec<PreparedExample>,
    dev: Vec<PreparedExample>,
    test: Vec<PreparedExample>,
}

fn prepare_training(data: &DataArgs, rc: &RunConfig, manifest: &mut RunManifest) -> Result<Prepared> {
    let inventory = PropertyInventory::resolve(&data.inventory)?;
    let featurizer = featurizer(&data.input, manifest)?;
    let examples = dataset(&data.input.data, &inventory, manifest)?;
    let max_len = rc.model.max_len;
    // Training alone does not need a test split.
    let test = if split_of(&examples, Split::Test).is_empty() {
        Vec::new()
    } else {
        prepared(&examples, Split::Test, &featurizer, max_len)?
    };
    Ok(Prepared {
        train: prepared(&examples, Split::Train, &featurizer, max_len)?,
        dev: prepared(&examples, Split::Dev, &featurizer, max_len)?,
        test,
        inventory,
        featurizer,
    })
}

fn base_config(rc: &RunConfig, p: &Prepared) -> ModelConfig {
    rc.model.model_config(
        rc.train.mode,
        p.featurizer.dim(),
        p.featurizer.word_dim(),
        p.inventory.len(),
        rc.train.seed,
    )
}

fn write_report_csv(path: &Path, report: &TrainReport) -> Result<()> {
    let mut text = String::from("epoch,loss,dev_metric\n");
    for (i, (loss, dev)) in report.loss_trace.iter().zip(&report.dev_trace).enumerate() {
        text.push_str(&format!("{},{loss:.6},{dev:.6}\n", i + 1));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_train(data: &DataArgs, args: &TrainArgs, out: &Path) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("train");
    let rc = run_config(args, &mut manifest)?;
    let p = prepare_training(data, &rc, &mut manifest)?;
    let config = base_config(&rc, &p);
    manifest.seeds.push(rc.train.seed);
    info!("training on {} examples, {} dev", p.train.len(), p.dev.len());
    let outcome = train(&rc.train, ModelParams::initialize(config)?, &p.train, &p.dev)?;
    create_dir(out)?;
    let ckpt = out.join("model.ckpt");
    checkpoint::save(&ckpt, &outcome.params, &p.inventory)?;
    let report = out.join("train_report.csv");
    write_report_csv(&report, &outcome.report)?;
    manifest.output(&ckpt)?;
    manifest.output(&report)?;
    manifest.finish(&out.join("manifest.json"), started.elapsed())?;
    println!(
        "best epoch {} of {}, dev {} {:.6}",
        outcome.report.best_epoch,
        outcome.report.dev_trace.len(),
        headline_name(rc.train.mode),
        outcome.report.best_metric
    );
    println!("checkpoint {}", ckpt.display());
    Ok(())
}

fn headline_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Multilabel => "macro F1",
        Mode::Regression => "macro rho",
    }
}

fn seeds(first: u64, n: usize) -> Result<Vec<u64>> {
    if n == 0 {
        return Err(Error::config("--n-voters must be at least 1"));
    }
    Ok((0..n as u64).map(|i| first + i).collect())
}

pub fn cmd_ensemble(data: &DataArgs, args: &TrainArgs, n: usize, out: &Path) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("ensemble");
    let rc = run_config(args, &mut manifest)?;
    let seeds = seeds(rc.train.seed, n)?;
    let p = prepare_training(data, &rc, &mut manifest)?;
    let ens = train_ensemble(&rc.train, &base_config(&rc, &p), &seeds, &p.train, &p.dev)?;
    create_dir(out)?;
    let mut entries = Vec::new();
    let mut summary = String::from("seed,best_epoch,dev_metric\n");
    for m in ens.members() {
        let name = format!("member-{}.ckpt", m.seed);
        let path = out.join(&name);
        checkpoint::save(&path, &m.params, &p.inventory)?;
        manifest.output(&path)?;
        entries.push((m.seed, PathBuf::from(name)));
        if let Some(r) = &m.report {
            summary.push_str(&format!("{},{},{:.6}\n", m.seed, r.best_epoch, r.best_metric));
        }
    }
    let list = out.join("ensemble.txt");
    EnsembleManifest { members: entries }.write(&list)?;
    let members_csv = out.join("members.csv");
    fs::write(&members_csv, summary).map_err(|e| Error::io(&members_csv, e))?;
    manifest.output(&list)?;
    manifest.output(&members_csv)?;
    manifest.seeds = seeds;
    manifest.finish(&out.join("manifest.json"), started.elapsed())?;
    println!("{} members, manifest {}", ens.len(), list.display());
    Ok(())
}

/// A checkpoint or an ensemble manifest, told apart by the first line.
fn load_model(path: &Path, manifest: &mut RunManifest) -> Result<(Ensemble, PropertyInventory)> {
    let mut head = [0u8; 32];
    let n = File::open(path)
        .and_then(|mut f| f.read(&mut head))
        .map_err(|e| Error::io(path, e))?;
    manifest.input(path)?;
    if head[..n].starts_with(b"sprl-ensemble") {
        let list = EnsembleManifest::load(path)?;
        let (_, first) = list
            .members
            .first()
            .ok_or_else(|| Error::data(format!("{}: no members", path.display())))?;
        let inventory = checkpoint::load(first)?.inventory;
        let mut members = Vec::new();
        for (seed, p) in &list.members {
            members.push(Member {
                seed: *seed,
                params: checkpoint::load_for(p, &inventory)?.params,
                report: None,
            });
            manifest.input(p)?;
        }
        Ok((Ensemble::new(members)?, inventory))
    } else {
        let c = checkpoint::load(path)?;
        let seed = c.params.config.seed;
        let member = Member {
            seed,
            params: c.params,
            report: None,
        };
        Ok((Ensemble::new(vec![member])?, c.inventory))
    }
}

fn model_inputs(
    ens: &Ensemble,
    inventory: &PropertyInventory,
    data: &InputArgs,
    split: SplitArg,
    manifest: &mut RunManifest,
) -> Result<Vec<PreparedExample>> {
    let f = featurizer(data, manifest)?;
    let config = &ens.members()[0].params.config;
    if f.dim() != config.input_dim {
        return Err(Error::data(format!(
            "inputs have {} dimensions, model expects {}",
            f.dim(),
            config.input_dim
        )));
    }
    let examples = dataset(&data.data, inventory, manifest)?;
    prepared(&examples, split.into(), &f, config.max_len)
}

pub fn cmd_predict(model: &Path, data: &InputArgs, split: SplitArg, out: &Path) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("predict");
    let (ens, inventory) = load_model(model, &mut manifest)?;
    let examples = model_inputs(&ens, &inventory, data, split, &mut manifest)?;
    // A lone checkpoint keeps its probabilities; ensembles vote.
    let preds = if ens.len() == 1 {
        ens.member_predictions(&inventory, &examples)?.remove(0)
    } else {
        ens.predict(&inventory, &examples)?
    };
    preds.write(out)?;
    manifest.seeds = ens.members().iter().map(|m| m.seed).collect();
    manifest.output(out)?;
    manifest.finish(&sidecar(out), started.elapsed())?;
    println!("{} predictions written to {}", preds.len(), out.display());
    Ok(())
}

fn load_gold(gold: &GoldArgs, mode: Mode, manifest: &mut RunManifest) -> Result<PredictionSet> {
    if let Some(path) = &gold.gold {
        manifest.input(path)?;
        let set = PredictionSet::load(path)?;
        if set.mode != mode {
            return Err(Error::config(format!(
                "gold file is {}, predictions are {}",
                set.mode.as_str(),
                mode.as_str()
            )));
        }
        return Ok(set);
    }
    let path = gold.gold_data.as_ref().expect("clap requires --gold or --gold-data");
    let inventory = PropertyInventory::resolve(&gold.inventory)?;
    let examples = dataset(path, &inventory, manifest)?;
    Ok(PredictionSet::gold(mode, &inventory, &split_of(&examples, gold.split.into())))
}

fn emit_csv(out: Option<&Path>, bytes: &[u8], manifest: &mut RunManifest, started: Instant) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
            manifest.output(path)?;
            let m = std::mem::replace(manifest, RunManifest::new(""));
            m.finish(&sidecar(path), started.elapsed())
        }
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

pub fn cmd_evaluate(predictions: &Path, gold: &GoldArgs, mode: Option<ModeArg>, out: Option<&Path>) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("evaluate");
    manifest.input(predictions)?;
    let pred = PredictionSet::load(predictions)?;
    if let Some(m) = mode {
        let m: Mode = m.into();
        if m != pred.mode {
            return Err(Error::config(format!(
                "--mode {} given but {} holds {} predictions",
                m.as_str(),
                predictions.display(),
                pred.mode.as_str()
            )));
        }
    }
    let gold = load_gold(gold, pred.mode, &mut manifest)?;
    pred.check_aligned(&gold)?;
    let mut csv = Vec::new();
    let summary = match pred.mode {
        Mode::Multilabel => {
            let conf = confusions(&pred.labels(), &gold.labels())?;
            write_multilabel_report(&mut csv, &pred.properties, &conf)?;
            let prf = per_property_prf(&conf);
            let (p, r) = macro_pr(&prf);
            format!(
                "macro F1 {:.6} (P {p:.6}, R {r:.6}), micro F1 {:.6}",
                macro_f1(&prf),
                micro_f1(&conf).f1
            )
        }
        Mode::Regression => {
            let report = pearson_per_property(&pred.scores(), &gold.scores())?;
            write_regression_report(&mut csv, &pred.properties, &report)?;
            format!("macro rho {:.6}", report.macro_rho)
        }
    };
    emit_csv(out, &csv, &mut manifest, started)?;
    println!("{} examples: {summary}", pred.len());
    Ok(())
}

pub fn cmd_significance(a: &Path, b: &Path, gold: &GoldArgs, out: Option<&Path>) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("significance");
    manifest.input(a)?;
    manifest.input(b)?;
    let (sa, sb) = (PredictionSet::load(a)?, PredictionSet::load(b)?);
    if sa.mode != Mode::Multilabel || sb.mode != Mode::Multilabel {
        return Err(Error::config("significance tests need multilabel predictions"));
    }
    let gold = load_gold(gold, Mode::Multilabel, &mut manifest)?;
    sa.check_aligned(&gold)?;
    sb.check_aligned(&gold)?;
    let results = mcnemar(&sa.labels(), &sb.labels(), &gold.labels())?;
    let mut csv = Vec::new();
    write_significance_report(&mut csv, &sa.properties, &results)?;
    emit_csv(out, &csv, &mut manifest, started)?;
    for (name, r) in sa.properties.iter().zip(&results) {
        println!("{name}: {} (p {:.4})", r.significance.label(), r.p_value);
    }
    Ok(())
}

pub fn cmd_ablate(data: &DataArgs, args: &TrainArgs, n: usize, out: &Path) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("ablate");
    let rc = run_config(args, &mut manifest)?;
    let seeds = seeds(rc.train.seed, n)?;
    let p = prepare_training(data, &rc, &mut manifest)?;
    if p.test.is_empty() {
        return Err(Error::data("ablation needs test examples"));
    }
    let rows = ablation_suite(
        &rc.train,
        &base_config(&rc, &p),
        &seeds,
        &AblationData {
            inventory: &p.inventory,
            train: &p.train,
            dev: &p.dev,
            test: &p.test,
        },
    )?;
    let mut csv = Vec::new();
    write_ablation_report(&mut csv, &rows)?;
    fs::write(out, &csv).map_err(|e| Error::io(out, e))?;
    manifest.seeds = seeds;
    manifest.output(out)?;
    manifest.finish(&sidecar(out), started.elapsed())?;
    for r in &rows {
        println!("{:<12} {:.4} ({:+.4})", r.variant, r.metric, r.delta);
    }
    Ok(())
}

pub fn cmd_convergence(model: &Path, data: &InputArgs, split: SplitArg, out: &Path) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("convergence");
    let (ens, inventory) = load_model(model, &mut manifest)?;
    if ens.len() < 2 {
        return Err(Error::config("convergence needs an ensemble of at least two members"));
    }
    let examples = model_inputs(&ens, &inventory, data, split, &mut manifest)?;
    let gold = PredictionSet::gold_prepared(ens.mode(), &inventory, &examples);
    let curve = convergence_curve(&ens.member_predictions(&inventory, &examples)?, &gold)?;
    let mut csv = Vec::new();
    write_convergence_csv(&mut csv, &curve)?;
    fs::write(out, &csv).map_err(|e| Error::io(out, e))?;
    manifest.seeds = ens.members().iter().map(|m| m.seed).collect();
    manifest.output(out)?;
    manifest.finish(&sidecar(out), started.elapsed())?;
    println!("{} points written to {}", curve.len(), out.display());
    Ok(())
}

pub fn cmd_synth(kind: SynthKind, size: usize, dim: usize, noise: f64, seed: u64, out: &Path) -> Result<()> {
    let started = Instant::now();
    if size == 0 || dim == 0 {
        return Err(Error::config("--size and --dim must be positive"));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::config("--noise must lie in [0, 1]"));
    }
    let corpus = match kind {
        SynthKind::Lexical => lexical_corpus(size, dim, noise, 1, seed),
        SynthKind::Twins => {
            let mut c = span_order_twins(size, dim, seed);
            // Every sixth sentence pair goes to dev, the next to test.
            for (i, e) in c.examples.iter_mut().enumerate() {
                e.split = match (i / 2) % 6 {
                    4 => Split::Dev,
                    5 => Split::Test,
                    _ => Split::Train,
                };
            }
            c
        }
    };
    create_dir(out)?;
    let mut manifest = RunManifest::new("synth");
    manifest.seeds.push(seed);
    let data = out.join("dataset.jsonl");
    let vectors = out.join("vectors.txt");
    let inventory = out.join("inventory.txt");
    write_dataset(&data, &corpus.examples, &corpus.inventory)?;
    corpus.table.write(&vectors)?;
    let mut text = format!("responses {}\n", corpus.inventory.responses_per_property());
    for p in corpus.inventory.properties() {
        text.push_str(p);
        text.push('\n');
    }
    fs::write(&inventory, text).map_err(|e| Error::io(&inventory, e))?;
    for path in [&data, &vectors, &inventory] {
        manifest.output(path)?;
    }
    manifest.finish(&out.join("manifest.json"), started.elapsed())?;
    println!("{} examples in {}", corpus.examples.len(), out.display());
    Ok(())
}

pub fn cmd_verify(path: &Path) -> Result<()> {
    let manifest = RunManifest::load(path)?;
    let stale = manifest.stale();
    if !stale.is_empty() {
        let names: Vec<String> = stale.iter().map(|p| p.display().to_string()).collect();
        return Err(Error::data(format!("checksum mismatch: {}", names.join(", "))));
    }
    println!(
        "{} inputs and {} outputs match",
        manifest.inputs.len(),
        manifest.outputs.len()
    );
    Ok(())
}
