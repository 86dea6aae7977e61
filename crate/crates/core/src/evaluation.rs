//! Metrics and significance tests.
//!
//! Macro F1 here is the harmonic mean of the unweighted per-property means of
//! precision and recall, which is not the same as averaging per-property F1.
//! Micro F1 pools TP/FP/FN over all properties.

use std::io::Write;

use statrs::function::erf::erfc;

use crate::{Error, Result};

pub mod ablation;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PropertyConfusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl PropertyConfusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn check_aligned<T>(pred: &[Vec<T>], gold: &[Vec<T>]) -> Result<usize> {
    if pred.len() != gold.len() {
        return Err(Error::data(format!(
            "{} predictions for {} gold examples",
            pred.len(),
            gold.len()
        )));
    }
    let width = gold.first().map_or(0, Vec::len);
    for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.len() != width || g.len() != width {
            return Err(Error::data(format!("example {i}: property count mismatch")));
        }
    }
    Ok(width)
}

/// Per-property confusion counts. Rows are examples, columns properties.
pub fn confusions(pred: &[Vec<bool>], gold: &[Vec<bool>]) -> Result<Vec<PropertyConfusion>> {
    let width = check_aligned(pred, gold)?;
    let mut out = vec![PropertyConfusion::default(); width];
    for (p, g) in pred.iter().zip(gold) {
        for (c, (&pv, &gv)) in out.iter_mut().zip(p.iter().zip(g)) {
            match (pv, gv) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(out)
}

/// Precision, recall and F1 per property; zero denominators give 0.
pub fn per_property_prf(confusions: &[PropertyConfusion]) -> Vec<Prf> {
    confusions
        .iter()
        .map(|c| {
            let precision = ratio(c.tp, c.tp + c.fp);
            let recall = ratio(c.tp, c.tp + c.fn_);
            Prf {
                precision,
                recall,
                f1: harmonic(precision, recall),
            }
        })
        .collect()
}

/// Unweighted means of precision and recall.
pub fn macro_pr(prf: &[Prf]) -> (f64, f64) {
    if prf.is_empty() {
        return (0.0, 0.0);
    }
    let n = prf.len() as f64;
    (
        prf.iter().map(|x| x.precision).sum::<f64>() / n,
        prf.iter().map(|x| x.recall).sum::<f64>() / n,
    )
}

/// `2 · P_macro · R_macro / (P_macro + R_macro)`.
pub fn macro_f1(prf: &[Prf]) -> f64 {
    let (p, r) = macro_pr(prf);
    harmonic(p, r)
}

/// Mean of per-property F1, for comparison with [`macro_f1`].
pub fn mean_f1(prf: &[Prf]) -> f64 {
    if prf.is_empty() {
        0.0
    } else {
        prf.iter().map(|x| x.f1).sum::<f64>() / prf.len() as f64
    }
}

pub fn micro_f1(confusions: &[PropertyConfusion]) -> Prf {
    let pooled = confusions.iter().fold(PropertyConfusion::default(), |a, c| PropertyConfusion {
        tp: a.tp + c.tp,
        fp: a.fp + c.fp,
        fn_: a.fn_ + c.fn_,
        tn: a.tn + c.tn,
    });
    per_property_prf(&[pooled])[0]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correlation {
    pub rho: f64,
    /// Set when either side has zero variance; `rho` is then 0.
    pub degenerate: bool,
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::data(format!("pearson: lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::data("pearson needs at least two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Correlation {
            rho: 0.0,
            degenerate: true,
        });
    }
    Ok(Correlation {
        rho: (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PearsonReport {
    pub per_property: Vec<Correlation>,
    pub macro_rho: f64,
}

/// ρ per property column and their unweighted mean.
pub fn pearson_per_property(pred: &[Vec<f32>], gold: &[Vec<f32>]) -> Result<PearsonReport> {
    let width = check_aligned(pred, gold)?;
    let per_property = (0..width)
        .map(|p| {
            let x: Vec<f64> = pred.iter().map(|r| r[p] as f64).collect();
            let y: Vec<f64> = gold.iter().map(|r| r[p] as f64).collect();
            pearson(&x, &y)
        })
        .collect::<Result<Vec<_>>>()?;
    let macro_rho = if width == 0 {
        0.0
    } else {
        per_property.iter().map(|c| c.rho).sum::<f64>() / width as f64
    };
    Ok(PearsonReport {
        per_property,
        macro_rho,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Significance {
    NotSignificant,
    /// System A more often right; `strong` means `p < 0.005`, otherwise
    /// `p ∈ [0.005, 0.05)`.
    Better { strong: bool },
    Worse { strong: bool },
}

impl Significance {
    pub fn label(self) -> &'static str {
        match self {
            Significance::NotSignificant => "not_significant",
            Significance::Better { strong: false } => "better_p<0.05",
            Significance::Better { strong: true } => "better_p<0.005",
            Significance::Worse { strong: false } => "worse_p<0.05",
            Significance::Worse { strong: true } => "worse_p<0.005",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McNemarResult {
    /// A correct, B wrong.
    pub b: u64,
    /// A wrong, B correct.
    pub c: u64,
    /// `(b − c)² / (b + c)`; `None` when `b + c = 0`.
    pub statistic: Option<f64>,
    pub p_value: f64,
    pub significance: Significance,
}

/// Upper tail of χ² with one degree of freedom.
pub fn chi2_1_sf(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        erfc((x / 2.0).sqrt())
    }
}

pub fn mcnemar_counts(b: u64, c: u64) -> McNemarResult {
    if b + c == 0 {
        return McNemarResult {
            b,
            c,
            statistic: None,
            p_value: 1.0,
            significance: Significance::NotSignificant,
        };
    }
    let diff = b as f64 - c as f64;
    let stat = diff * diff / (b + c) as f64;
    let p = chi2_1_sf(stat);
    let significance = if p >= 0.05 {
        Significance::NotSignificant
    } else if b > c {
        Significance::Better { strong: p < 0.005 }
    } else {
        Significance::Worse { strong: p < 0.005 }
    };
    McNemarResult {
        b,
        c,
        statistic: Some(stat),
        p_value: p,
        significance,
    }
}

/// Uncorrected McNemar test per property between systems A and B.
pub fn mcnemar(a: &[Vec<bool>], b: &[Vec<bool>], gold: &[Vec<bool>]) -> Result<Vec<McNemarResult>> {
    let width = check_aligned(a, gold)?;
    check_aligned(b, gold)?;
    let mut counts = vec![(0u64, 0u64); width];
    for ((ra, rb), rg) in a.iter().zip(b).zip(gold) {
        for (p, cnt) in counts.iter_mut().enumerate() {
            let (ok_a, ok_b) = (ra[p] == rg[p], rb[p] == rg[p]);
            match (ok_a, ok_b) {
                (true, false) => cnt.0 += 1,
                (false, true) => cnt.1 += 1,
                _ => {}
            }
        }
    }
    Ok(counts.into_iter().map(|(b, c)| mcnemar_counts(b, c)).collect())
}

fn csv_err(e: csv::Error) -> Error {
    Error::data(format!("csv: {e}"))
}

fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

/// Multi-label metric CSV: per-property rows then `macro` and `micro`.
pub fn write_multilabel_report<W: Write>(
    out: W,
    properties: &[String],
    confusions: &[PropertyConfusion],
) -> Result<()> {
    let prf = per_property_prf(confusions);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["property", "precision", "recall", "f1", "rho", "flags"])
        .map_err(csv_err)?;
    for (name, x) in properties.iter().zip(&prf) {
        w.write_record([name, &fmt6(x.precision), &fmt6(x.recall), &fmt6(x.f1), "", ""])
            .map_err(csv_err)?;
    }
    let (mp, mr) = macro_pr(&prf);
    w.write_record(["macro", &fmt6(mp), &fmt6(mr), &fmt6(macro_f1(&prf)), "", ""])
        .map_err(csv_err)?;
    let micro = micro_f1(confusions);
    w.write_record([
        "micro",
        &fmt6(micro.precision),
        &fmt6(micro.recall),
        &fmt6(micro.f1),
        "",
        "",
    ])
    .map_err(csv_err)?;
    w.flush().map_err(|e| Error::data(e.to_string()))
}

/// Regression metric CSV: ρ per property then the `macro` row.
pub fn write_regression_report<W: Write>(
    out: W,
    properties: &[String],
    report: &PearsonReport,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["property", "precision", "recall", "f1", "rho", "flags"])
        .map_err(csv_err)?;
    for (name, c) in properties.iter().zip(&report.per_property) {
        let flag = if c.degenerate { "zero_variance" } else { "" };
        w.write_record([name.as_str(), "", "", "", &fmt6(c.rho), flag])
            .map_err(csv_err)?;
    }
    w.write_record(["macro", "", "", "", &fmt6(report.macro_rho), ""])
        .map_err(csv_err)?;
    w.flush().map_err(|e| Error::data(e.to_string()))
}

pub fn write_significance_report<W: Write>(
    out: W,
    properties: &[String],
    results: &[McNemarResult],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["property", "b", "c", "chi2", "p", "bucket"])
        .map_err(csv_err)?;
    for (name, r) in properties.iter().zip(results) {
        w.write_record([
            name.clone(),
            r.b.to_string(),
            r.c.to_string(),
            r.statistic.map(fmt6).unwrap_or_default(),
            fmt6(r.p_value),
            r.significance.label().to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::data(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn conf(tp: u64, fp: u64, fn_: u64) -> PropertyConfusion {
        PropertyConfusion { tp, fp, fn_, tn: 0 }
    }

    fn prf(precision: f64, recall: f64) -> Prf {
        Prf {
            precision,
            recall,
            f1: harmonic(precision, recall),
        }
    }

    #[test]
    fn per_property_cases() {
        let out = per_property_prf(&[conf(10, 0, 0), conf(0, 4, 0), conf(3, 1, 2)]);
        assert_eq!((out[0].precision, out[0].recall, out[0].f1), (1.0, 1.0, 1.0));
        assert_eq!((out[1].precision, out[1].recall, out[1].f1), (0.0, 0.0, 0.0));
        assert_eq!(out[2].precision, 0.75);
        assert_eq!(out[2].recall, 0.6);
        assert!((out[2].f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn macro_f1_is_harmonic_of_means() {
        assert_eq!(macro_f1(&[prf(1.0, 1.0), prf(1.0, 1.0)]), 1.0);
        assert_eq!(macro_f1(&[prf(1.0, 1.0), prf(0.0, 0.0)]), 0.5);
        let skewed = [prf(1.0, 0.5), prf(0.5, 1.0)];
        assert!((macro_f1(&skewed) - 0.75).abs() < 1e-12);
        assert!((mean_f1(&skewed) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn micro_f1_cases() {
        let single = [conf(3, 1, 2)];
        assert_eq!(micro_f1(&single).f1, per_property_prf(&single)[0].f1);
        assert_eq!(micro_f1(&[conf(2, 3, 1), conf(3, 2, 4)]).f1, 0.5);
        let a = [conf(1, 2, 3), conf(4, 0, 1)];
        let b = [a[1], a[0]];
        assert_eq!(micro_f1(&a), micro_f1(&b));
    }

    #[test]
    fn pearson_cases() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &x).unwrap().rho - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &neg).unwrap().rho + 1.0).abs() < 1e-12);
        let flat = pearson(&x, &[2.0; 4]).unwrap();
        assert!(flat.degenerate && flat.rho == 0.0);
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn pearson_matches_direct_formula() {
        let (x, y) = ([1.0, 2.0, 3.0], [1.0, 2.0, 3.1]);
        // x̄ = 2, ȳ = 2.0333…; deviations (-1,0,1) and (-1.0333…, -0.0333…, 1.0666…)
        let my = 6.1 / 3.0;
        let dy = [1.0 - my, 2.0 - my, 3.1 - my];
        let num = -dy[0] + dy[2];
        let den = 2f64.sqrt() * (dy.iter().map(|d| d * d).sum::<f64>()).sqrt();
        assert!((pearson(&x, &y).unwrap().rho - num / den).abs() < 1e-9);
    }

    #[test]
    fn mcnemar_cases() {
        let sym = mcnemar_counts(5, 5);
        assert_eq!(sym.statistic, Some(0.0));
        assert_eq!(sym.p_value, 1.0);
        assert_eq!(sym.significance, Significance::NotSignificant);

        let r = mcnemar_counts(10, 2);
        assert!((r.statistic.unwrap() - 64.0 / 12.0).abs() < 1e-12);
        assert!((r.p_value - 0.0209).abs() < 1e-3);
        assert_eq!(r.significance, Significance::Better { strong: false });
        assert_eq!(mcnemar_counts(2, 10).significance, Significance::Worse { strong: false });
        assert_eq!(mcnemar_counts(30, 2).significance, Significance::Better { strong: true });

        let none = mcnemar_counts(0, 0);
        assert_eq!(none.statistic, None);
        assert_eq!(none.significance, Significance::NotSignificant);
    }

    #[test]
    fn mcnemar_counts_from_predictions() {
        let gold = vec![vec![true], vec![true], vec![false], vec![false]];
        let a = vec![vec![true], vec![true], vec![false], vec![true]];
        let b = vec![vec![false], vec![true], vec![true], vec![true]];
        let r = mcnemar(&a, &b, &gold).unwrap();
        assert_eq!((r[0].b, r[0].c), (2, 0));
    }

    #[test]
    fn significance_csv_layout() {
        let mut buf = Vec::new();
        let names = vec!["p".to_string(), "q".to_string()];
        write_significance_report(&mut buf, &names, &[mcnemar_counts(10, 2), mcnemar_counts(0, 0)])
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "property,b,c,chi2,p,bucket");
        assert!(lines[1].starts_with("p,10,2,5.333333,0.020"));
        assert!(lines[1].ends_with("better_p<0.05"));
        assert_eq!(lines[2], "q,0,0,,1.000000,not_significant");
    }

    fn labels(n: usize, width: usize) -> impl Strategy<Value = Vec<Vec<bool>>> {
        prop::collection::vec(prop::collection::vec(any::<bool>(), width), n)
    }

    proptest! {
        #[test]
        fn metric_ranges_and_permutation_invariance(
            (pred, gold) in (1usize..30).prop_flat_map(|n| (labels(n, 3), labels(n, 3))),
            rot in 0usize..30,
        ) {
            let conf = confusions(&pred, &gold).unwrap();
            prop_assert!(conf.iter().all(|c| c.total() == pred.len() as u64));
            let m = macro_f1(&per_property_prf(&conf));
            prop_assert!((0.0..=1.0).contains(&m));

            let k = rot % pred.len();
            let mut p2 = pred.clone();
            let mut g2 = gold.clone();
            p2.rotate_left(k);
            g2.rotate_left(k);
            let conf2 = confusions(&p2, &g2).unwrap();
            prop_assert_eq!(&conf, &conf2);

            // Pooling over per-property confusions equals pooling the flattened labels.
            let flat_p: Vec<Vec<bool>> = pred.iter().flatten().map(|&v| vec![v]).collect();
            let flat_g: Vec<Vec<bool>> = gold.iter().flatten().map(|&v| vec![v]).collect();
            let pooled = confusions(&flat_p, &flat_g).unwrap();
            prop_assert_eq!(micro_f1(&conf), micro_f1(&pooled));

            for r in mcnemar(&pred, &pred, &gold).unwrap() {
                prop_assert_eq!((r.b, r.c), (0, 0));
                prop_assert_eq!(r.significance, Significance::NotSignificant);
            }
        }

        #[test]
        fn pearson_in_range(xs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..20)) {
            let (x, y): (Vec<f64>, Vec<f64>) = xs.into_iter().unzip();
            let r = pearson(&x, &y).unwrap().rho;
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }
}
