//! Leave-one-out component study.

use std::io::Write;

use crate::dataset::{PreparedExample, PropertyInventory};
use crate::ensemble::train_ensemble;
use crate::model::{Ablation, ModelConfig};
use crate::predictions::PredictionSet;
use crate::training::TrainConfig;
use crate::{Error, Result};

/// Row labels and switches, full model first.
pub fn variants() -> Vec<(&'static str, Ablation)> {
    let one = |s| Ablation::full().with(s).expect("known switch");
    vec![
        ("full", Ablation::full()),
        ("SelfAtt", one("no_self_attention")),
        ("mark.", one("no_markers")),
        ("pred-mark.", one("no_predicate_marker")),
        ("arg-mark.", one("no_argument_marker")),
        ("hier.", one("no_hierarchy")),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    /// Test macro F1 (multi-label) or macro ρ (regression) of the ensemble.
    pub metric: f64,
    /// `metric − full`.
    pub delta: f64,
}

pub struct AblationData<'a> {
    pub inventory: &'a PropertyInventory,
    pub train: &'a [PreparedExample],
    pub dev: &'a [PreparedExample],
    pub test: &'a [PreparedExample],
}

/// Trains one seed ensemble per variant, all with the same seeds and
/// hyperparameters, and scores each on the test split.
pub fn ablation_suite(
    train_config: &TrainConfig,
    base: &ModelConfig,
    seeds: &[u64],
    data: &AblationData<'_>,
) -> Result<Vec<AblationRow>> {
    let gold = PredictionSet::gold_prepared(base.mode, data.inventory, data.test);
    let mut metrics = Vec::new();
    for (name, ablation) in variants() {
        let config = ModelConfig {
            ablation,
            ..base.clone()
        };
        let run = || -> Result<f64> {
            let ensemble = train_ensemble(train_config, &config, seeds, data.train, data.dev)?;
            ensemble.predict(data.inventory, data.test)?.headline_metric(&gold)
        };
        metrics.push(run().map_err(|e| match e {
            Error::Numeric(m) => Error::Numeric(format!("variant {name}: {m}")),
            Error::Config(m) => Error::Config(format!("variant {name}: {m}")),
            other => Error::Data(format!("variant {name}: {other}")),
        })?);
    }
    let full = metrics[0];
    Ok(variants()
        .iter()
        .zip(metrics)
        .map(|((name, _), metric)| AblationRow {
            variant: name.to_string(),
            metric,
            delta: metric - full,
        })
        .collect())
}

pub fn write_ablation_report<W: Write>(out: W, rows: &[AblationRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::data(format!("csv: {e}"));
    w.write_record(["variant", "metric", "delta"]).map_err(err)?;
    for r in rows {
        w.write_record([r.variant.clone(), format!("{:.6}", r.metric), format!("{:.6}", r.delta)])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::data(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_variants_full_first() {
        let v = variants();
        assert_eq!(v.len(), 6);
        assert_eq!(v[0].1, Ablation::full());
        assert!(v[1..].iter().all(|(_, a)| a.flags().iter().filter(|f| f.1).count() == 1));
    }
}
