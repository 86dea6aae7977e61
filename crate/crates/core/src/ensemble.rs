//! Seed ensembles: member training, aggregation, and the voter convergence
//! curve.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::dataset::{PreparedExample, PropertyInventory};
use crate::evaluation::{confusions, pearson_per_property, per_property_prf};
use crate::model::{Mode, ModelConfig, ModelParams};
use crate::predictions::{PredictionRow, PredictionSet};
use crate::training::{predict_all, train, TrainConfig, TrainReport};
use crate::{Error, Result};

pub const DEFAULT_MEMBERS: usize = 50;

pub struct Member {
    pub seed: u64,
    pub params: ModelParams<f32>,
    pub report: Option<TrainReport>,
}

/// Members in seed order, all sharing one architecture.
pub struct Ensemble {
    members: Vec<Member>,
}

fn same_architecture(a: &ModelConfig, b: &ModelConfig) -> bool {
    ModelConfig { seed: 0, ..a.clone() } == ModelConfig { seed: 0, ..b.clone() }
}

impl Ensemble {
    pub fn new(members: Vec<Member>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::config("an ensemble needs at least one member"))?;
        if let Some(m) = members
            .iter()
            .find(|m| !same_architecture(&m.params.config, &first.params.config))
        {
            return Err(Error::data(format!(
                "member with seed {} does not share the ensemble architecture",
                m.seed
            )));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn mode(&self) -> Mode {
        self.members[0].params.config.mode
    }

    /// One prediction set per member, in member order.
    pub fn member_predictions(
        &self,
        inventory: &PropertyInventory,
        examples: &[PreparedExample],
    ) -> Result<Vec<PredictionSet>> {
        self.members
            .par_iter()
            .map(|m| {
                let preds = predict_all(&m.params, examples)?;
                Ok(PredictionSet::from_predictions(
                    m.params.config.mode,
                    inventory,
                    examples,
                    &preds,
                ))
            })
            .collect()
    }

    /// Majority vote (multi-label) or score mean (regression).
    pub fn predict(
        &self,
        inventory: &PropertyInventory,
        examples: &[PreparedExample],
    ) -> Result<PredictionSet> {
        aggregate(&self.member_predictions(inventory, examples)?)
    }
}

/// Trains one member per seed, in parallel. Member order follows `seeds`.
pub fn train_ensemble(
    train_config: &TrainConfig,
    base: &ModelConfig,
    seeds: &[u64],
    train_set: &[PreparedExample],
    dev_set: &[PreparedExample],
) -> Result<Ensemble> {
    if seeds.is_empty() {
        return Err(Error::config("ensemble size must be at least 1"));
    }
    let distinct: BTreeSet<u64> = seeds.iter().copied().collect();
    if distinct.len() != seeds.len() {
        return Err(Error::config("ensemble seeds must be distinct"));
    }
    let members = seeds
        .par_iter()
        .map(|&seed| {
            let model_config = ModelConfig {
                seed,
                ..base.clone()
            };
            let config = TrainConfig {
                seed,
                ..train_config.clone()
            };
            let run = || -> Result<Member> {
                let init = ModelParams::initialize(model_config)?;
                let outcome = train(&config, init, train_set, dev_set)?;
                Ok(Member {
                    seed,
                    params: outcome.params,
                    report: Some(outcome.report),
                })
            };
            run().map_err(|e| match e {
                Error::Numeric(msg) => Error::Numeric(format!("member seed {seed}: {msg}")),
                Error::Data(msg) => Error::Data(format!("member seed {seed}: {msg}")),
                Error::Config(msg) => Error::Config(format!("member seed {seed}: {msg}")),
                other => Error::Data(format!("member seed {seed}: {other}")),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(members)
}

fn check_members(sets: &[PredictionSet], mode: Mode) -> Result<&PredictionSet> {
    let first = sets
        .first()
        .ok_or_else(|| Error::config("aggregation needs at least one member"))?;
    for s in sets {
        if s.mode != mode {
            return Err(Error::config(format!(
                "member predictions are {}, expected {}",
                s.mode.as_str(),
                mode.as_str()
            )));
        }
        if s.properties != first.properties {
            return Err(Error::data("member property inventories differ"));
        }
        first.check_aligned(s)?;
    }
    Ok(first)
}

/// Strict majority of "applies" votes gives 1; ties give 0.
pub fn vote(sets: &[PredictionSet]) -> Result<PredictionSet> {
    let first = check_members(sets, Mode::Multilabel)?;
    let labels: Vec<Vec<Vec<bool>>> = sets.iter().map(PredictionSet::labels).collect();
    let n = sets.len();
    let rows = first
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| PredictionRow {
            id: row.id.clone(),
            values: (0..row.values.len())
                .map(|p| {
                    let yes = labels.iter().filter(|l| l[i][p]).count();
                    if 2 * yes > n {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
        })
        .collect();
    Ok(PredictionSet {
        mode: Mode::Multilabel,
        properties: first.properties.clone(),
        rows,
    })
}

/// Arithmetic mean of member scores per property.
pub fn mean_scores(sets: &[PredictionSet]) -> Result<PredictionSet> {
    let first = check_members(sets, Mode::Regression)?;
    let n = sets.len() as f64;
    let rows = first
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| PredictionRow {
            id: row.id.clone(),
            values: (0..row.values.len())
                .map(|p| (sets.iter().map(|s| s.rows[i].values[p] as f64).sum::<f64>() / n) as f32)
                .collect(),
        })
        .collect();
    Ok(PredictionSet {
        mode: Mode::Regression,
        properties: first.properties.clone(),
        rows,
    })
}

pub fn aggregate(sets: &[PredictionSet]) -> Result<PredictionSet> {
    match sets.first().map(|s| s.mode) {
        Some(Mode::Multilabel) => vote(sets),
        Some(Mode::Regression) => mean_scores(sets),
        None => Err(Error::config("aggregation needs at least one member")),
    }
}

/// Per-property score of aggregated predictions: F1 (multi-label) or ρ.
pub fn per_property_scores(pred: &PredictionSet, gold: &PredictionSet) -> Result<Vec<f64>> {
    pred.check_aligned(gold)?;
    match pred.mode {
        Mode::Multilabel => {
            let conf = confusions(&pred.labels(), &gold.labels())?;
            Ok(per_property_prf(&conf).iter().map(|x| x.f1).collect())
        }
        Mode::Regression => Ok(pearson_per_property(&pred.scores(), &gold.scores())?
            .per_property
            .iter()
            .map(|c| c.rho)
            .collect()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergencePoint {
    pub n: usize,
    /// Mean over properties of `score(n voters) − score(n−1 voters)`.
    pub mean_delta: f64,
    /// Population standard deviation of the same differences.
    pub std_delta: f64,
}

/// For `n = 2..=N`, compares the first `n` members against the first `n−1`.
pub fn convergence_curve(
    member_predictions: &[PredictionSet],
    gold: &PredictionSet,
) -> Result<Vec<ConvergencePoint>> {
    if member_predictions.len() < 2 {
        return Err(Error::config("convergence needs at least two members"));
    }
    let mut prev = per_property_scores(&aggregate(&member_predictions[..1])?, gold)?;
    let mut out = Vec::with_capacity(member_predictions.len() - 1);
    for n in 2..=member_predictions.len() {
        let cur = per_property_scores(&aggregate(&member_predictions[..n])?, gold)?;
        let deltas: Vec<f64> = cur.iter().zip(&prev).map(|(a, b)| a - b).collect();
        let k = deltas.len().max(1) as f64;
        let mean = deltas.iter().sum::<f64>() / k;
        let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / k;
        out.push(ConvergencePoint {
            n,
            mean_delta: mean,
            std_delta: var.sqrt(),
        });
        prev = cur;
    }
    Ok(out)
}

pub fn write_convergence_csv<W: std::io::Write>(out: W, points: &[ConvergencePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::data(format!("csv: {e}"));
    w.write_record(["n", "mean_delta", "std_delta"]).map_err(err)?;
    for p in points {
        w.write_record([
            p.n.to_string(),
            format!("{:.6}", p.mean_delta),
            format!("{:.6}", p.std_delta),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::data(e.to_string()))
}

/// Ensemble manifest: `sprl-ensemble v1`, then `member <seed> <path>` lines.
/// Relative paths resolve against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnsembleManifest {
    pub members: Vec<(u64, PathBuf)>,
}

const MANIFEST_MAGIC: &str = "sprl-ensemble v1";

impl EnsembleManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = format!("{MANIFEST_MAGIC}\n");
        for (seed, p) in &self.members {
            text.push_str(&format!("member {seed} {}\n", p.display()));
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_MAGIC) {
            return Err(Error::data(format!("{}: not an ensemble manifest", path.display())));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let mut members = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, ' ');
            let bad = || Error::data(format!("{}:{}: malformed member line", path.display(), n + 2));
            if parts.next() != Some("member") {
                return Err(bad());
            }
            let seed = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let rel = PathBuf::from(parts.next().ok_or_else(bad)?);
            members.push((seed, if rel.is_absolute() { rel } else { base.join(rel) }));
        }
        Ok(Self { members })
    }
}
