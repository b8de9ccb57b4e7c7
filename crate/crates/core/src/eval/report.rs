use std::fmt::Write as _;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, statistical_parity, tpr};
use crate::corpus::{INDUSTRY_NAMES, N_INDUSTRIES};
use crate::error::{Error, Result};

/// How per-class values are combined into the overall row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Weighted by the number of positive documents per class.
    #[default]
    Prevalence,
    /// Every class counts once (equivalently, every document/label decision).
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    /// |P(d=1|F) − P(d=1|M)|.
    pub parity: f64,
    pub parity_signed: f64,
    pub accuracy: f64,
    /// `None` when the class has no positive document.
    pub tpr: Option<f64>,
    /// Number of positive documents.
    pub prevalence: usize,
    /// `parity < parity_threshold`.
    pub within_threshold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overall {
    pub parity: f64,
    pub accuracy: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub auc: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: Vec<ClassMetrics>,
    pub overall: Overall,
    pub probe_auc: f64,
    pub probe_accuracy: f64,
    pub weighting: Weighting,
    /// Parity tolerance ε.
    pub parity_threshold: f64,
}

fn weighted(values: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (num, den) = values.fold((0.0, 0.0), |acc, (v, w)| (acc.0 + v * w, acc.1 + w));
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Aggregates per-class metrics into the overall row.
pub fn aggregate(per_class: &[ClassMetrics], weighting: Weighting) -> Overall {
    let w = |c: &ClassMetrics| match weighting {
        Weighting::Prevalence => c.prevalence as f64,
        Weighting::Uniform => 1.0,
    };
    Overall {
        parity: weighted(per_class.iter().map(|c| (c.parity, w(c)))),
        accuracy: weighted(per_class.iter().map(|c| (c.accuracy, w(c)))),
        tpr: weighted(per_class.iter().filter_map(|c| c.tpr.map(|t| (t, w(c))))),
    }
}

/// One-vs-rest metrics at threshold 0.5 for each of the industry classes.
/// `sensitive[i]` is true for female documents.
pub fn build_report(
    probs: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    sensitive: &[bool],
    probe: ProbeSummary,
    weighting: Weighting,
    parity_threshold: f64,
) -> Result<EvalReport> {
    if probs.dim() != targets.dim() || probs.nrows() != sensitive.len() {
        return Err(Error::data("predictions, targets and sensitive labels are misaligned"));
    }
    if probs.ncols() != N_INDUSTRIES {
        return Err(Error::data(format!("expected {N_INDUSTRIES} classes, got {}", probs.ncols())));
    }
    let mut per_class = Vec::with_capacity(N_INDUSTRIES);
    for c in 0..N_INDUSTRIES {
        let p: Vec<f64> = probs.column(c).to_vec();
        let t: Vec<bool> = targets.column(c).iter().map(|&v| v == 1.0).collect();
        let decisions: Vec<bool> = p.iter().map(|&v| v >= 0.5).collect();
        let parity = statistical_parity(&decisions, sensitive)?;
        let prevalence = t.iter().filter(|&&v| v).count();
        per_class.push(ClassMetrics {
            class: c,
            parity: parity.abs(),
            parity_signed: parity.signed,
            accuracy: accuracy(&p, &t, 0.5)?,
            tpr: if prevalence > 0 { Some(tpr(&p, &t, 0.5)?) } else { None },
            prevalence,
            within_threshold: parity.abs() < parity_threshold,
        });
    }
    let overall = aggregate(&per_class, weighting);
    Ok(EvalReport {
        per_class,
        overall,
        probe_auc: probe.auc,
        probe_accuracy: probe.accuracy,
        weighting,
        parity_threshold,
    })
}

impl EvalReport {
    /// Element-wise mean of several reports over the same population.
    pub fn mean_of(reports: &[EvalReport]) -> Result<EvalReport> {
        let first = reports.first().ok_or_else(|| Error::data("no reports to average"))?;
        let k = reports.len() as f64;
        let mean = |f: &dyn Fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
        let per_class = (0..first.per_class.len())
            .map(|c| {
                let base = &first.per_class[c];
                let parity = mean(&|r| r.per_class[c].parity);
                let tprs: Option<Vec<f64>> = reports.iter().map(|r| r.per_class[c].tpr).collect();
                ClassMetrics {
                    class: base.class,
                    parity,
                    parity_signed: mean(&|r| r.per_class[c].parity_signed),
                    accuracy: mean(&|r| r.per_class[c].accuracy),
                    tpr: tprs.map(|v| v.iter().sum::<f64>() / k),
                    prevalence: base.prevalence,
                    within_threshold: parity < first.parity_threshold,
                }
            })
            .collect();
        Ok(EvalReport {
            per_class,
            overall: Overall {
                parity: mean(&|r| r.overall.parity),
                accuracy: mean(&|r| r.overall.accuracy),
                tpr: mean(&|r| r.overall.tpr),
            },
            probe_auc: mean(&|r| r.probe_auc),
            probe_accuracy: mean(&|r| r.probe_accuracy),
            weighting: first.weighting,
            parity_threshold: first.parity_threshold,
        })
    }
}

/// Table with one row per class plus "Overall" and Parity/Accuracy/TPR
/// columns for each representation variant.
pub fn render_parity_table(variants: &[(&str, &EvalReport)]) -> String {
    let name_w = INDUSTRY_NAMES.iter().map(|n| n.len()).max().unwrap_or(7);
    let cell = |v: f64| format!("{v:>8.3}");
    let mut out = String::new();
    write!(out, "{:name_w$}", "").unwrap();
    for (name, _) in variants {
        write!(out, " | {:^26}", name).unwrap();
    }
    out.push('\n');
    write!(out, "{:name_w$}", "").unwrap();
    for _ in variants {
        write!(out, " | {:>8} {:>8} {:>8}", "Parity", "Accuracy", "TPR").unwrap();
    }
    out.push('\n');
    write!(out, "{:name_w$}", "Overall").unwrap();
    for (_, r) in variants {
        write!(out, " | {} {} {}", cell(r.overall.parity), cell(r.overall.accuracy), cell(r.overall.tpr)).unwrap();
    }
    out.push('\n');
    for c in 0..N_INDUSTRIES {
        write!(out, "{:name_w$}", INDUSTRY_NAMES[c]).unwrap();
        for (_, r) in variants {
            let m = &r.per_class[c];
            let t = m.tpr.map(cell).unwrap_or_else(|| format!("{:>8}", "n/a"));
            write!(out, " | {} {} {}", cell(m.parity), cell(m.accuracy), t).unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn metrics(class: usize, accuracy: f64, prevalence: usize) -> ClassMetrics {
        ClassMetrics {
            class,
            parity: 0.1,
            parity_signed: -0.1,
            accuracy,
            tpr: Some(0.5),
            prevalence,
            within_threshold: false,
        }
    }

    #[test]
    fn prevalence_weighted_mean() {
        let pc = vec![metrics(0, 0.8, 3), metrics(1, 0.4, 1)];
        let o = aggregate(&pc, Weighting::Prevalence);
        assert!((o.accuracy - 0.7).abs() < 1e-15);
        assert!((aggregate(&pc, Weighting::Uniform).accuracy - 0.6).abs() < 1e-15);
    }

    #[test]
    fn constant_metrics_aggregate_to_constant() {
        let pc: Vec<_> = (0..5).map(|c| metrics(c, 0.55, c + 1)).collect();
        for w in [Weighting::Prevalence, Weighting::Uniform] {
            let o = aggregate(&pc, w);
            assert!((o.accuracy - 0.55).abs() < 1e-15);
            assert!((o.parity - 0.1).abs() < 1e-15);
        }
    }

    fn toy_report() -> EvalReport {
        let n = 8;
        let probs = Array2::from_shape_fn((n, N_INDUSTRIES), |(i, c)| ((i * 7 + c * 3) % 10) as f64 / 10.0);
        let targets = Array2::from_shape_fn((n, N_INDUSTRIES), |(i, c)| ((i + c) % 3 == 0) as u8 as f64);
        let s: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        build_report(probs.view(), targets.view(), &s, ProbeSummary { auc: 0.9, accuracy: 0.8 }, Weighting::Prevalence, 0.05)
            .unwrap()
    }

    #[test]
    fn overall_within_class_range() {
        let r = toy_report();
        let acc: Vec<f64> = r.per_class.iter().map(|c| c.accuracy).collect();
        let lo = acc.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(r.overall.accuracy >= lo && r.overall.accuracy <= hi);
    }

    #[test]
    fn json_round_trip() {
        let r = toy_report();
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<EvalReport>(&text).unwrap(), r);
    }

    #[test]
    fn wrong_class_count() {
        let p = Array2::zeros((2, 3));
        let e = build_report(p.view(), p.view(), &[true, false], ProbeSummary { auc: 0.5, accuracy: 0.5 }, Weighting::Uniform, 0.1);
        assert!(e.is_err());
    }

    #[test]
    fn table_layout() {
        let r = toy_report();
        let t = render_parity_table(&[("Original", &r), ("Adversarial", &r)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3 + N_INDUSTRIES);
        assert!(lines[2].starts_with("Overall"));
        assert!(lines[1].matches("Parity").count() == 2);
    }

    #[test]
    fn mean_of_identical_reports() {
        let r = toy_report();
        let m = EvalReport::mean_of(&[r.clone(), r.clone(), r.clone()]).unwrap();
        for (a, b) in m.per_class.iter().zip(&r.per_class) {
            assert!((a.accuracy - b.accuracy).abs() < 1e-15);
        }
    }
}
