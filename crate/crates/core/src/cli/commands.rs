//! Subcommands. Each one reads its inputs from the configured corpus or from
//! earlier commands' artifacts in the output directory, and writes stamped
//! artifacts back under a manifest.
//!
//! Layout of the output directory:
//!
//! ```text
//! corpus.jsonl
//! <variant>/vectors.txt, vectors.txt.out, resumes.mat, vacancies.mat, dropped.txt
//! <variant>/eval.json, salary.json, matches.txt
//! adversarial/scaler.json, training.json, runs-eval.json, runs-salary.json
//! adversarial/run-<k>/checkpoint.txt, history.jsonl, resumes.mat, vacancies.mat, matches.txt
//! parity_table.txt, salary_table.txt, salary_comparison.json
//! manifest-<command>.json
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::artifacts::{run_command, verify_dir, Artifacts, Verification};
use super::config::{RunConfig, Variant};
use super::pipeline::{
    align, embed, evaluate, evaluate_runs, load_lexicon, match_runs, match_variant, population_ids, run_pipeline_on,
    split_kinds, stage, substitute_corpus, train_adversarial, AdversarialTraining, Embedded, Population, VariantOutcome,
};
use crate::corpus::{generate_synthetic, load_corpus, write_corpus, Document};
use crate::debias::{write_checkpoint, write_history, Summary, TrainConfig};
use crate::embedding::{read_doc_matrix, write_doc_matrix, write_input_vectors, write_output_vectors, DocMatrix};
use crate::error::{Error, Result};
use crate::eval::{render_parity_table, EvalReport};
use crate::matcher::{report_variants, MatchAssignment, SalaryReport};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const PARITY_TABLE: &str = "parity_table.txt";
pub const SALARY_TABLE: &str = "salary_table.txt";

fn run_dir(k: usize) -> String {
    format!("{}/run-{}", Variant::Adversarial.name(), k + 1)
}

fn other_io(e: Error) -> std::io::Error {
    std::io::Error::other(e.to_string())
}

/// The corpus from `paths.corpus`, else the one `synth` left in the output
/// directory.
pub fn corpus_source(cfg: &RunConfig) -> Result<Vec<Document>> {
    stage("corpus", || match &cfg.paths.corpus {
        Some(p) => load_corpus(p),
        None => {
            let p = cfg.paths.out.join(CORPUS_FILE);
            if p.exists() {
                load_corpus(&p)
            } else {
                Err(Error::config(format!(
                    "no corpus: set paths.corpus, pass --corpus, or run `fairmatch synth` to create {}",
                    p.display()
                )))
            }
        }
    })
}

/// Word-level variants the selection depends on; the adversarial variant
/// builds on the original vectors.
pub fn word_variants(selected: &[Variant]) -> Vec<Variant> {
    let mut out = Vec::new();
    if selected.iter().any(|v| matches!(v, Variant::Original | Variant::Adversarial)) {
        out.push(Variant::Original);
    }
    if selected.contains(&Variant::WordSubstitution) {
        out.push(Variant::WordSubstitution);
    }
    out
}

fn embed_variant(v: Variant, docs: &[Document], cfg: &RunConfig) -> Result<Embedded> {
    stage("embed", || match v {
        Variant::Original => {
            let (r, vac) = split_kinds(docs);
            embed(&r, &vac, cfg)
        }
        Variant::WordSubstitution => {
            let lex = load_lexicon(cfg)?;
            let (r, vac) = split_kinds(&substitute_corpus(docs, &lex, cfg.pipeline.substitute_vacancies));
            embed(&r, &vac, cfg)
        }
        _ => Err(Error::config(format!("{} has no word vectors of its own", v.name()))),
    })
}

fn write_matrix(art: &mut Artifacts, rel: &str, m: &DocMatrix) -> Result<()> {
    art.text(rel, |w| write_doc_matrix(m, w))
}

pub fn write_embedded(art: &mut Artifacts, v: Variant, emb: &Embedded, matrices: bool) -> Result<()> {
    let dir = v.name();
    art.text(&format!("{dir}/vectors.txt"), |w| write_input_vectors(&emb.model, w))?;
    art.text(&format!("{dir}/vectors.txt.out"), |w| write_output_vectors(&emb.model, w))?;
    if matrices {
        write_matrix(art, &format!("{dir}/resumes.mat"), &emb.resumes)?;
        write_matrix(art, &format!("{dir}/vacancies.mat"), &emb.vacancies)?;
    }
    art.text(&format!("{dir}/dropped.txt"), |w| {
        for id in &emb.dropped_resumes {
            writeln!(w, "resume {id}")?;
        }
        for id in &emb.dropped_vacancies {
            writeln!(w, "vacancy {id}")?;
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct TrainingSummary<'a> {
    runs: usize,
    seeds: Vec<u64>,
    /// Final-epoch metrics across runs.
    summary: &'a std::collections::BTreeMap<String, Summary>,
}

pub fn write_training(art: &mut Artifacts, t: &AdversarialTraining, cfg: &TrainConfig, matrices: bool) -> Result<()> {
    let dir = Variant::Adversarial.name();
    art.json(&format!("{dir}/scaler.json"), &t.scaler)?;
    let seeds = t.runs.iter().map(|r| r.seed).collect();
    art.json(&format!("{dir}/training.json"), &TrainingSummary { runs: t.runs.len(), seeds, summary: &t.summary })?;
    for (k, run) in t.runs.iter().enumerate() {
        let d = run_dir(k);
        let run_cfg = TrainConfig { seed: run.seed, ..cfg.clone() };
        art.text(&format!("{d}/checkpoint.txt"), |w| write_checkpoint(&run.model, Some(&run_cfg), w))?;
        art.text(&format!("{d}/history.jsonl"), |w| write_history(&run.history, w))?;
        if matrices {
            write_matrix(art, &format!("{d}/resumes.mat"), &run.resumes)?;
            write_matrix(art, &format!("{d}/vacancies.mat"), &run.vacancies)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct RunEntry<'a, T: Serialize> {
    run: usize,
    seed: u64,
    report: &'a T,
}

#[derive(Serialize)]
struct RunsSidecar<'a, T: Serialize> {
    runs: Vec<RunEntry<'a, T>>,
}

fn sidecar<'a, T: Serialize>(seeds: &[u64], reports: &'a [T]) -> RunsSidecar<'a, T> {
    RunsSidecar {
        runs: reports.iter().zip(seeds).enumerate().map(|(k, (r, &seed))| RunEntry { run: k + 1, seed, report: r }).collect(),
    }
}

fn run_seeds(cfg: &RunConfig) -> Vec<u64> {
    (0..cfg.debias.runs).map(|k| cfg.debias.seed.wrapping_add(k as u64)).collect()
}

fn write_assignment(art: &mut Artifacts, rel: &str, a: &MatchAssignment) -> Result<()> {
    art.text(rel, |w| a.write(w).map_err(other_io))
}

fn write_parity_table(art: &mut Artifacts, evals: &[(Variant, &EvalReport)]) -> Result<String> {
    let rows: Vec<(&str, &EvalReport)> = evals.iter().map(|(v, r)| (v.title(), *r)).collect();
    let table = render_parity_table(&rows);
    art.text(PARITY_TABLE, |w| w.write_all(table.as_bytes()))?;
    Ok(table)
}

fn write_salary_tables(art: &mut Artifacts, salaries: &[(Variant, &SalaryReport)]) -> Result<String> {
    let rows: Vec<(&str, &SalaryReport)> = salaries.iter().map(|(v, r)| (v.title(), *r)).collect();
    let comparison = stage("match", || report_variants(&rows))?;
    let table = comparison.render();
    art.text(SALARY_TABLE, |w| w.write_all(table.as_bytes()))?;
    art.json("salary_comparison.json", &comparison)?;
    Ok(table)
}

fn require(path: PathBuf, producer: &str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::config(format!("missing {}: run `fairmatch {producer}` first", path.display())))
    }
}

fn load_matrix(out: &Path, rel: &str, producer: &str) -> Result<DocMatrix> {
    read_doc_matrix(require(out.join(rel), producer)?)
}

/// Documents, the pooled word-level matrices and the evaluation population
/// shared by the debias, eval and match commands.
struct Loaded {
    resumes: Vec<Document>,
    vacancies: Vec<Document>,
    word: Vec<(Variant, DocMatrix, DocMatrix)>,
    pop: Population,
}

fn load_inputs(cfg: &RunConfig) -> Result<Loaded> {
    let docs = corpus_source(cfg)?;
    let (resumes, vacancies) = split_kinds(&docs);
    let out = &cfg.paths.out;
    let word = stage("embed", || {
        word_variants(&cfg.variant.expand())
            .into_iter()
            .map(|v| {
                let r = load_matrix(out, &format!("{}/resumes.mat", v.name()), "embed")?;
                let vac = load_matrix(out, &format!("{}/vacancies.mat", v.name()), "embed")?;
                Ok((v, r, vac))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mats: Vec<&DocMatrix> = word.iter().map(|(_, r, _)| r).collect();
    let ids = population_ids(&mats, &resumes);
    let pop = stage("eval", || Population::new(&ids, &resumes, cfg.eval.valid_fraction, cfg.seed))?;
    Ok(Loaded { resumes, vacancies, word, pop })
}

impl Loaded {
    fn word(&self, v: Variant) -> &(Variant, DocMatrix, DocMatrix) {
        self.word.iter().find(|(w, _, _)| *w == v).expect("loaded for the selection")
    }

    fn adversarial_runs(&self, cfg: &RunConfig) -> Result<Vec<(DocMatrix, DocMatrix)>> {
        stage("debias", || {
            (0..cfg.debias.runs)
                .map(|k| {
                    let d = run_dir(k);
                    let z = load_matrix(&cfg.paths.out, &format!("{d}/resumes.mat"), "debias")?;
                    let zv = load_matrix(&cfg.paths.out, &format!("{d}/vacancies.mat"), "debias")?;
                    Ok((align(&z, &self.pop)?, zv))
                })
                .collect()
        })
    }
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    run_command("synth", cfg, |art| {
        let docs = stage("corpus", || generate_synthetic(&cfg.synth))?;
        art.text(CORPUS_FILE, |w| write_corpus(&docs, w))
    })
}

pub fn cmd_embed(cfg: &RunConfig) -> Result<()> {
    run_command("embed", cfg, |art| {
        let docs = corpus_source(cfg)?;
        for v in word_variants(&cfg.variant.expand()) {
            let emb = embed_variant(v, &docs, cfg)?;
            write_embedded(art, v, &emb, true)?;
        }
        Ok(())
    })
}

pub fn cmd_debias(cfg: &RunConfig) -> Result<()> {
    if !cfg.variant.expand().contains(&Variant::Adversarial) {
        return Err(Error::config("debias needs --variant adversarial or all"));
    }
    run_command("debias", cfg, |art| {
        let input = load_inputs(cfg)?;
        let (_, r, vac) = input.word(Variant::Original);
        let r = stage("debias", || align(r, &input.pop))?;
        let training = train_adversarial(&r, vac, &input.pop, cfg)?;
        write_training(art, &training, &cfg.debias, true)
    })
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<String> {
    let mut table = String::new();
    run_command("eval", cfg, |art| {
        let input = load_inputs(cfg)?;
        let mut reports = Vec::new();
        for v in cfg.variant.expand() {
            if v == Variant::Adversarial {
                let runs = input.adversarial_runs(cfg)?;
                let zs: Vec<&DocMatrix> = runs.iter().map(|(z, _)| z).collect();
                let (mean, per_run) = evaluate_runs(&zs, &input.pop, cfg)?;
                art.json(&format!("{}/runs-eval.json", v.name()), &sidecar(&run_seeds(cfg), &per_run))?;
                reports.push((v, mean));
            } else {
                let (_, r, _) = input.word(v);
                let r = stage("eval", || align(r, &input.pop))?;
                reports.push((v, stage("eval", || evaluate(&r.rows, &input.pop, cfg))?));
            }
        }
        for (v, r) in &reports {
            art.json(&format!("{}/eval.json", v.name()), r)?;
        }
        let refs: Vec<(Variant, &EvalReport)> = reports.iter().map(|(v, r)| (*v, r)).collect();
        table = write_parity_table(art, &refs)?;
        Ok(())
    })?;
    Ok(table)
}

pub fn cmd_match(cfg: &RunConfig) -> Result<String> {
    let mut table = String::new();
    run_command("match", cfg, |art| {
        let input = load_inputs(cfg)?;
        let mut reports = Vec::new();
        for v in cfg.variant.expand() {
            if v == Variant::Adversarial {
                let runs = input.adversarial_runs(cfg)?;
                let pairs: Vec<(&DocMatrix, &DocMatrix)> = runs.iter().map(|(z, zv)| (z, zv)).collect();
                let (mean, per_run) = match_runs(&pairs, &input.resumes, &input.vacancies, cfg)?;
                for (k, a) in per_run.iter().enumerate() {
                    write_assignment(art, &format!("{}/matches.txt", run_dir(k)), &a.assignment)?;
                }
                let run_reports: Vec<SalaryReport> = per_run.into_iter().map(|a| a.report).collect();
                art.json(&format!("{}/runs-salary.json", v.name()), &sidecar(&run_seeds(cfg), &run_reports))?;
                reports.push((v, mean));
            } else {
                let (_, r, vac) = input.word(v);
                let r = stage("match", || align(r, &input.pop))?;
                let sa = stage("match", || match_variant(&r, vac, &input.resumes, &input.vacancies, cfg))?;
                write_assignment(art, &format!("{}/matches.txt", v.name()), &sa.assignment)?;
                reports.push((v, sa.report));
            }
        }
        for (v, r) in &reports {
            art.json(&format!("{}/salary.json", v.name()), r)?;
        }
        let refs: Vec<(Variant, &SalaryReport)> = reports.iter().map(|(v, r)| (*v, r)).collect();
        table = write_salary_tables(art, &refs)?;
        Ok(())
    })?;
    Ok(table)
}

fn write_outcome(art: &mut Artifacts, o: &VariantOutcome, cfg: &RunConfig) -> Result<()> {
    let dir = o.variant.name();
    let matrices = cfg.pipeline.save_matrices;
    if let Some(emb) = &o.embedded {
        write_embedded(art, o.variant, emb, matrices)?;
    }
    if let Some(t) = &o.training {
        write_training(art, t, &cfg.debias, matrices)?;
        let seeds: Vec<u64> = t.runs.iter().map(|r| r.seed).collect();
        art.json(&format!("{dir}/runs-eval.json"), &sidecar(&seeds, &o.run_evals))?;
        art.json(&format!("{dir}/runs-salary.json"), &sidecar(&seeds, &o.run_salaries))?;
        for (k, a) in o.assignments.iter().enumerate() {
            write_assignment(art, &format!("{}/matches.txt", run_dir(k)), a)?;
        }
    } else if let Some(a) = o.assignments.first() {
        write_assignment(art, &format!("{dir}/matches.txt"), a)?;
    }
    art.json(&format!("{dir}/eval.json"), &o.eval)?;
    art.json(&format!("{dir}/salary.json"), &o.salary)
}

/// Tables printed after a pipeline run.
pub struct PipelineSummary {
    pub parity_table: String,
    pub salary_table: String,
}

pub fn cmd_pipeline(cfg: &RunConfig) -> Result<PipelineSummary> {
    let mut summary = None;
    run_command("pipeline", cfg, |art| {
        let docs = match &cfg.paths.corpus {
            Some(p) => stage("corpus", || load_corpus(p))?,
            None => {
                let docs = stage("corpus", || generate_synthetic(&cfg.synth))?;
                art.text(CORPUS_FILE, |w| write_corpus(&docs, w))?;
                docs
            }
        };
        let result = run_pipeline_on(cfg, docs)?;
        for o in &result.variants {
            write_outcome(art, o, cfg)?;
        }
        let evals: Vec<(Variant, &EvalReport)> = result.variants.iter().map(|o| (o.variant, &o.eval)).collect();
        let parity_table = write_parity_table(art, &evals)?;
        let salaries: Vec<(Variant, &SalaryReport)> = result.variants.iter().map(|o| (o.variant, &o.salary)).collect();
        let salary_table = write_salary_tables(art, &salaries)?;
        summary = Some(PipelineSummary { parity_table, salary_table });
        Ok(())
    })?;
    Ok(summary.expect("set on success"))
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Verification> {
    let v = verify_dir(&cfg.paths.out)?;
    if v.manifests == 0 {
        return Err(Error::data(format!("no manifests in {}", cfg.paths.out.display())));
    }
    if !v.ok() {
        return Err(Error::data(format!("verification failed:\n  {}", v.problems.join("\n  "))));
    }
    Ok(v)
}
