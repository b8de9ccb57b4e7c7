//! Corpus → embeddings → (debiasing) → evaluation → salary matching, held in
//! memory. Persistence lives in the command layer.

use std::collections::{BTreeMap, HashSet};
use std::time::{Duration, Instant};

use ndarray::{Array2, Axis};

use super::config::{RunConfig, Variant};
use crate::corpus::{
    apply_substitutions, generate_synthetic, load_corpus, split_indices, DocKind, Document, Gender, SubstitutionLexicon,
    N_INDUSTRIES,
};
use crate::debias::{train_runs, transform, Architecture, DebiasData, DebiasModel, EpochRecord, Summary};
use crate::embedding::{train_embeddings, DocMatrix, EmbeddingModel};
use crate::error::{Error, Result};
use crate::eval::{build_report, render_parity_table, train_classifier, train_probe, EvalReport, ProbeSummary};
use crate::matcher::{report_variants, salary_association_threaded, MatchAssignment, SalaryAnalysis, SalaryReport, VariantComparison};

/// Runs `f`, tagging any error with the stage name.
pub fn stage<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| e.in_stage(name))
}

pub fn load_documents(cfg: &RunConfig) -> Result<Vec<Document>> {
    match &cfg.paths.corpus {
        Some(p) => load_corpus(p),
        None => generate_synthetic(&cfg.synth),
    }
}

pub fn load_lexicon(cfg: &RunConfig) -> Result<SubstitutionLexicon> {
    match &cfg.paths.lexicon {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            SubstitutionLexicon::parse(&text)
        }
        None => Ok(SubstitutionLexicon::builtin()),
    }
}

pub fn split_kinds(docs: &[Document]) -> (Vec<Document>, Vec<Document>) {
    docs.iter().cloned().partition(|d| d.kind == DocKind::Resume)
}

/// Substituted copy of the corpus. Vacancies are only rewritten when
/// `vacancies_too` is set.
pub fn substitute_corpus(docs: &[Document], lex: &SubstitutionLexicon, vacancies_too: bool) -> Vec<Document> {
    docs.iter()
        .map(|d| {
            if d.kind == DocKind::Resume || vacancies_too {
                Document { tokens: apply_substitutions(&d.tokens, lex), ..d.clone() }
            } else {
                d.clone()
            }
        })
        .collect()
}

pub struct Embedded {
    pub model: EmbeddingModel,
    pub resumes: DocMatrix,
    pub vacancies: DocMatrix,
    pub dropped_resumes: Vec<String>,
    pub dropped_vacancies: Vec<String>,
}

/// Trains word vectors on the vacancies (and resumes when configured) and
/// mean-pools every document.
pub fn embed(resumes: &[Document], vacancies: &[Document], cfg: &RunConfig) -> Result<Embedded> {
    let mut training: Vec<Document> = vacancies.to_vec();
    if cfg.pipeline.embed_resumes {
        training.extend(resumes.iter().cloned());
    }
    let model = train_embeddings(&training, &cfg.embedding)?;
    let (r, dropped_resumes) = model.embed_corpus(resumes)?;
    let (v, dropped_vacancies) = model.embed_corpus(vacancies)?;
    Ok(Embedded { model, resumes: r, vacancies: v, dropped_resumes, dropped_vacancies })
}

/// Rows of `m` whose id is in `keep`, in `m`'s order.
pub fn restrict(m: &DocMatrix, keep: &HashSet<&str>) -> DocMatrix {
    let pos: Vec<usize> = m.ids.iter().enumerate().filter(|(_, id)| keep.contains(id.as_str())).map(|(i, _)| i).collect();
    m.select(&pos)
}

/// Resumes present in every matrix, in corpus order.
pub fn population_ids(mats: &[&DocMatrix], resumes: &[Document]) -> Vec<String> {
    let sets: Vec<HashSet<&str>> = mats.iter().map(|m| m.ids.iter().map(String::as_str).collect()).collect();
    resumes
        .iter()
        .filter(|d| sets.iter().all(|s| s.contains(d.id.as_str())))
        .map(|d| d.id.clone())
        .collect()
}

/// Rows of `m` reordered to follow the population.
pub fn align(m: &DocMatrix, pop: &Population) -> Result<DocMatrix> {
    let pos: std::collections::HashMap<&str, usize> = m.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let idx = pop
        .docs
        .iter()
        .map(|d| pos.get(d.id.as_str()).copied().ok_or_else(|| Error::data(format!("resume {} missing from matrix", d.id))))
        .collect::<Result<Vec<_>>>()?;
    Ok(m.select(&idx))
}

/// Resumes aligned with a document matrix, with the targets the evaluation
/// and debiasing stages need.
pub struct Population {
    pub docs: Vec<Document>,
    pub targets: Array2<f64>,
    pub female: Vec<bool>,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
}

impl Population {
    pub fn new(ids: &[String], resumes: &[Document], valid_fraction: f64, seed: u64) -> Result<Self> {
        let by_id: BTreeMap<&str, &Document> = resumes.iter().map(|d| (d.id.as_str(), d)).collect();
        let docs = ids
            .iter()
            .map(|id| by_id.get(id.as_str()).map(|d| (*d).clone()).ok_or_else(|| Error::data(format!("unknown resume {id}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut targets = Array2::zeros((docs.len(), N_INDUSTRIES));
        let mut female = Vec::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            for &c in &d.industries {
                if c >= N_INDUSTRIES {
                    return Err(Error::data(format!("resume {} has industry {c} outside 0..{N_INDUSTRIES}", d.id)));
                }
                targets[[i, c]] = 1.0;
            }
            match d.gender {
                Some(g) => female.push(g == Gender::Female),
                None => return Err(Error::data(format!("resume {} has no gender", d.id))),
            }
        }
        let (train, valid) = split_indices(docs.len(), valid_fraction, seed)?;
        if train.is_empty() || valid.is_empty() {
            return Err(Error::data("too few resumes for a train/validation split"));
        }
        Ok(Population { docs, targets, female, train, valid })
    }

    fn rows(&self, x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
        x.select(Axis(0), idx)
    }

    fn flags(&self, idx: &[usize]) -> Vec<bool> {
        idx.iter().map(|&i| self.female[i]).collect()
    }

    pub fn debias_data(&self, x: &Array2<f64>, idx: &[usize]) -> Result<DebiasData> {
        let s = Array2::from_shape_fn((idx.len(), 1), |(k, _)| self.female[idx[k]] as u8 as f64);
        DebiasData::new(self.rows(x, idx), self.targets.select(Axis(0), idx), s)
    }
}

/// Industry classifier and gender probe fitted on the training resumes and
/// scored on the held-out ones.
pub fn evaluate(x: &Array2<f64>, pop: &Population, cfg: &RunConfig) -> Result<EvalReport> {
    let mut xt = pop.rows(x, &pop.train);
    let mut xv = pop.rows(x, &pop.valid);
    if cfg.eval.standardize {
        let sc = Scaler::fit(&xt);
        xt = sc.transform(&xt);
        xv = sc.transform(&xv);
    }
    let yt = pop.targets.select(Axis(0), &pop.train);
    let yv = pop.targets.select(Axis(0), &pop.valid);
    let clf = train_classifier(xt.view(), &yt, &cfg.classifier)?;
    let probs = clf.forward(xv.view());
    let probe = train_probe(xt.view(), &pop.flags(&pop.train), xv.view(), &pop.flags(&pop.valid), &cfg.probe)?;
    build_report(
        probs.view(),
        yv.view(),
        &pop.flags(&pop.valid),
        ProbeSummary { auc: probe.auc, accuracy: probe.accuracy },
        cfg.eval.weighting,
        cfg.eval.parity_threshold,
    )
}

/// Per-feature affine map `(x − mean) / scale`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn identity(dim: usize) -> Self {
        Scaler { mean: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    /// Column means and population deviations of `x`; constant columns keep
    /// scale 1.
    pub fn fit(x: &Array2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean: Vec<f64> = x.columns().into_iter().map(|c| c.sum() / n).collect();
        let scale = x
            .columns()
            .into_iter()
            .zip(&mean)
            .map(|(c, m)| {
                let sd = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
                if sd > 0.0 { sd } else { 1.0 }
            })
            .collect();
        Scaler { mean, scale }
    }

    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut rows = x.clone();
        for mut row in rows.outer_iter_mut() {
            for ((v, mu), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - mu) / s;
            }
        }
        rows
    }

    pub fn apply(&self, m: &DocMatrix) -> DocMatrix {
        DocMatrix { ids: m.ids.clone(), rows: self.transform(&m.rows) }
    }
}

/// One debiasing run with its transformed document matrices.
pub struct AdversarialRun {
    pub seed: u64,
    pub model: DebiasModel,
    pub history: Vec<EpochRecord>,
    pub resumes: DocMatrix,
    pub vacancies: DocMatrix,
}

pub struct AdversarialTraining {
    /// Applied to pooled vectors before the generator.
    pub scaler: Scaler,
    pub runs: Vec<AdversarialRun>,
    /// Final-epoch training metrics across runs.
    pub summary: BTreeMap<String, Summary>,
}

pub struct VariantOutcome {
    pub variant: Variant,
    /// Run means for the adversarial variant.
    pub eval: EvalReport,
    pub salary: SalaryReport,
    /// Word vectors and pooled matrices (word-level variants only).
    pub embedded: Option<Embedded>,
    /// Nearest-vacancy assignments, one per run for the adversarial variant.
    pub assignments: Vec<MatchAssignment>,
    pub training: Option<AdversarialTraining>,
    pub run_evals: Vec<EvalReport>,
    pub run_salaries: Vec<SalaryReport>,
}

pub struct PipelineResult {
    pub documents: Vec<Document>,
    pub variants: Vec<VariantOutcome>,
    /// Resumes present in every variant (documents with no known token are
    /// dropped everywhere).
    pub population: Vec<String>,
    pub parity_table: String,
    pub salary_comparison: VariantComparison,
    /// Wall time per step (`embed <variant>`, then one entry per variant for
    /// its evaluation and matching, debiasing included). Never persisted.
    pub timings: Vec<(String, Duration)>,
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineResult> {
    let documents = stage("corpus", || load_documents(cfg))?;
    run_pipeline_on(cfg, documents)
}

pub fn run_pipeline_on(cfg: &RunConfig, documents: Vec<Document>) -> Result<PipelineResult> {
    let selected = cfg.variant.expand();
    let (resumes, vacancies) = split_kinds(&documents);
    if resumes.is_empty() || vacancies.is_empty() {
        return Err(Error::data("corpus needs both resumes and vacancies").in_stage("corpus"));
    }

    // The adversarial variant starts from the original pooled vectors.
    let needs_original = selected.iter().any(|v| matches!(v, Variant::Original | Variant::Adversarial));
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: String, timings: &mut Vec<(String, Duration)>| {
        let now = Instant::now();
        timings.push((name, now - clock));
        clock = now;
    };
    let original = if needs_original { Some(stage("embed", || embed(&resumes, &vacancies, cfg))?) } else { None };
    if needs_original {
        lap(format!("embed {}", Variant::Original.name()), &mut timings);
    }
    let mut substituted = if selected.contains(&Variant::WordSubstitution) {
        Some(stage("embed", || {
            let lex = load_lexicon(cfg)?;
            let docs = substitute_corpus(&documents, &lex, cfg.pipeline.substitute_vacancies);
            let (r, v) = split_kinds(&docs);
            embed(&r, &v, cfg)
        })?)
    } else {
        None
    };
    if substituted.is_some() {
        lap(format!("embed {}", Variant::WordSubstitution.name()), &mut timings);
    }

    let mats: Vec<&DocMatrix> = original.iter().chain(&substituted).map(|e| &e.resumes).collect();
    let population_ids = population_ids(&mats, &resumes);
    let pop = stage("eval", || Population::new(&population_ids, &resumes, cfg.eval.valid_fraction, cfg.seed))?;

    let word_variant = |variant: Variant, emb: Embedded| -> Result<VariantOutcome> {
        let r = align(&emb.resumes, &pop)?;
        let eval = stage("eval", || evaluate(&r.rows, &pop, cfg))?;
        let sa = stage("match", || match_variant(&r, &emb.vacancies, &resumes, &vacancies, cfg))?;
        Ok(VariantOutcome {
            variant,
            eval,
            salary: sa.report,
            embedded: Some(emb),
            assignments: vec![sa.assignment],
            training: None,
            run_evals: Vec::new(),
            run_salaries: Vec::new(),
        })
    };

    let mut outcomes = Vec::new();
    let mut original_slot = original;
    let mut adversarial_input = None;
    if let Some(emb) = &original_slot {
        adversarial_input = Some((align(&emb.resumes, &pop)?, emb.vacancies.clone()));
    }
    for &v in &selected {
        match v {
            Variant::Original => outcomes.push(word_variant(v, original_slot.take().expect("embedded"))?),
            Variant::WordSubstitution => outcomes.push(word_variant(v, substituted.take().expect("embedded"))?),
            Variant::Adversarial => {
                let (r, vac) = adversarial_input.as_ref().expect("embedded");
                let training = train_adversarial(r, vac, &pop, cfg)?;
                outcomes.push(score_adversarial(training, &pop, &resumes, &vacancies, cfg)?);
            }
            Variant::All => unreachable!("expanded"),
        }
        lap(v.name().to_string(), &mut timings);
    }

    let evals: Vec<(&str, &EvalReport)> = outcomes.iter().map(|o| (o.variant.title(), &o.eval)).collect();
    let parity_table = render_parity_table(&evals);
    let salaries: Vec<(&str, &SalaryReport)> = outcomes.iter().map(|o| (o.variant.title(), &o.salary)).collect();
    let salary_comparison = stage("match", || report_variants(&salaries))?;
    Ok(PipelineResult { documents, variants: outcomes, population: population_ids, parity_table, salary_comparison, timings })
}

/// Nearest-vacancy matching and the salary comparison for one variant.
pub fn match_variant(
    r: &DocMatrix,
    v: &DocMatrix,
    resumes: &[Document],
    vacancies: &[Document],
    cfg: &RunConfig,
) -> Result<SalaryAnalysis> {
    salary_association_threaded(r, v, resumes, vacancies, cfg.hours_per_year, cfg.threads)
}

/// Fits the scaler on the training resumes, trains `cfg.debias.runs`
/// debiasing runs and transforms resumes and vacancies with each.
pub fn train_adversarial(r: &DocMatrix, vacancies_x: &DocMatrix, pop: &Population, cfg: &RunConfig) -> Result<AdversarialTraining> {
    if r.len() != pop.docs.len() {
        return Err(Error::Dimension { expected: pop.docs.len(), got: r.len() }.in_stage("debias"));
    }
    let arch = Architecture { repr_dim: r.dim(), ..Architecture::default() };
    let scaler = if cfg.pipeline.standardize {
        Scaler::fit(&r.rows.select(Axis(0), &pop.train))
    } else {
        Scaler::identity(r.dim())
    };
    let r = scaler.apply(r);
    let vacancies_x = scaler.apply(vacancies_x);
    stage("debias", || {
        let train = pop.debias_data(&r.rows, &pop.train)?;
        let valid = pop.debias_data(&r.rows, &pop.valid)?;
        let trained = train_runs(arch, &train, Some(&valid), &cfg.debias)?;
        let runs = trained
            .runs
            .into_iter()
            .map(|run| {
                let z = transform(&run.model, &r)?;
                let zv = if cfg.pipeline.transform_vacancies { transform(&run.model, &vacancies_x)? } else { vacancies_x.clone() };
                Ok(AdversarialRun { seed: run.seed, model: run.model, history: run.history, resumes: z, vacancies: zv })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AdversarialTraining { scaler, runs, summary: trained.summary })
    })
}

/// Evaluates every run. The reported metrics are run means.
pub fn evaluate_runs(runs: &[&DocMatrix], pop: &Population, cfg: &RunConfig) -> Result<(EvalReport, Vec<EvalReport>)> {
    stage("eval", || {
        let per_run = runs.iter().map(|z| evaluate(&z.rows, pop, cfg)).collect::<Result<Vec<_>>>()?;
        Ok((EvalReport::mean_of(&per_run)?, per_run))
    })
}

/// Salary association for every run, plus the run means.
pub fn match_runs(
    runs: &[(&DocMatrix, &DocMatrix)],
    resumes: &[Document],
    vacancies: &[Document],
    cfg: &RunConfig,
) -> Result<(SalaryReport, Vec<SalaryAnalysis>)> {
    stage("match", || {
        let per_run = runs
            .iter()
            .map(|(z, zv)| match_variant(z, zv, resumes, vacancies, cfg))
            .collect::<Result<Vec<_>>>()?;
        let reports: Vec<SalaryReport> = per_run.iter().map(|a| a.report.clone()).collect();
        Ok((SalaryReport::mean_of(&reports)?, per_run))
    })
}

pub fn score_adversarial(
    training: AdversarialTraining,
    pop: &Population,
    resumes: &[Document],
    vacancies: &[Document],
    cfg: &RunConfig,
) -> Result<VariantOutcome> {
    let zs: Vec<&DocMatrix> = training.runs.iter().map(|r| &r.resumes).collect();
    let (eval, run_evals) = evaluate_runs(&zs, pop, cfg)?;
    let pairs: Vec<(&DocMatrix, &DocMatrix)> = training.runs.iter().map(|r| (&r.resumes, &r.vacancies)).collect();
    let (salary, analyses) = match_runs(&pairs, resumes, vacancies, cfg)?;
    let (run_salaries, assignments) = analyses.into_iter().map(|a| (a.report, a.assignment)).unzip();
    Ok(VariantOutcome {
        variant: Variant::Adversarial,
        eval,
        salary,
        embedded: None,
        assignments,
        training: Some(training),
        run_evals,
        run_salaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Gender;
    use ndarray::array;
    use proptest::prelude::*;

    fn resumes(n: usize) -> Vec<Document> {
        (0..n)
            .map(|i| Document::resume(format!("r{i}"), vec!["w".into()], if i % 2 == 0 { Gender::Female } else { Gender::Male }, [i % 3]))
            .collect()
    }

    fn matrix(ids: &[&str]) -> DocMatrix {
        let rows = Array2::from_shape_fn((ids.len(), 2), |(i, j)| ids[i][1..].parse::<f64>().unwrap() + j as f64 / 10.0);
        DocMatrix::new(ids.iter().map(|s| s.to_string()).collect(), rows).unwrap()
    }

    #[test]
    fn population_is_the_intersection_in_corpus_order() {
        let docs = resumes(5);
        let a = matrix(&["r4", "r0", "r2", "r3"]);
        let b = matrix(&["r3", "r1", "r0", "r4"]);
        assert_eq!(population_ids(&[&a, &b], &docs), ["r0", "r3", "r4"]);
    }

    #[test]
    fn align_follows_the_population_and_rejects_missing_rows() {
        let docs = resumes(6);
        let ids: Vec<String> = ["r5", "r1", "r3", "r0"].iter().map(|s| s.to_string()).collect();
        let pop = Population::new(&ids, &docs, 0.5, 1).unwrap();
        let m = matrix(&["r0", "r1", "r3", "r5", "r2"]);
        let aligned = align(&m, &pop).unwrap();
        assert_eq!(aligned.ids, ids);
        assert_eq!(aligned.rows.column(0).to_vec(), [5.0, 1.0, 3.0, 0.0]);
        assert_eq!(pop.female, [false, false, false, true]);
        assert!(align(&matrix(&["r0", "r1"]), &pop).is_err());
    }

    #[test]
    fn scaler_keeps_constant_columns() {
        let x = array![[1.0, 7.0], [3.0, 7.0]];
        let s = Scaler::fit(&x);
        assert_eq!(s.mean, [2.0, 7.0]);
        assert_eq!(s.scale, [1.0, 1.0]);
        assert_eq!(s.transform(&x), array![[-1.0, 0.0], [1.0, 0.0]]);
        assert_eq!(Scaler::identity(2).transform(&x), x);
    }

    proptest! {
        #[test]
        fn standardized_columns_have_zero_mean_unit_deviation(
            data in prop::collection::vec(-50.0f64..50.0, 12..60),
        ) {
            let n = data.len() / 3;
            let x = Array2::from_shape_vec((n, 3), data[..n * 3].to_vec()).unwrap();
            let z = Scaler::fit(&x).transform(&x);
            for (c, col) in z.columns().into_iter().enumerate() {
                let m = col.sum() / n as f64;
                let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
                prop_assert!(m.abs() < 1e-9);
                let constant = x.column(c).iter().all(|v| *v == x[[0, c]]);
                prop_assert!(constant || (sd - 1.0).abs() < 1e-9);
            }
        }
    }
}
