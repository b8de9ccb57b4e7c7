use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::SynthConfig;
use crate::debias::TrainConfig;
use crate::embedding::SgnsConfig;
use crate::error::{Error, Result};
use crate::eval::{ClassifierConfig, Weighting};
use crate::matcher::HOURS_PER_YEAR;

/// Environment variable read for the worker thread count.
pub const THREADS_ENV: &str = "FAIRMATCH_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Original,
    WordSubstitution,
    Adversarial,
    #[default]
    All,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::WordSubstitution => "word-substitution",
            Variant::Adversarial => "adversarial",
            Variant::All => "all",
        }
    }

    /// Column heading in the comparison tables.
    pub fn title(self) -> &'static str {
        match self {
            Variant::Original => "Original",
            Variant::WordSubstitution => "Word substitution",
            Variant::Adversarial => "Adversarial",
            Variant::All => "All",
        }
    }

    /// The concrete variants selected, in table order.
    pub fn expand(self) -> Vec<Variant> {
        match self {
            Variant::All => vec![Variant::Original, Variant::WordSubstitution, Variant::Adversarial],
            v => vec![v],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// JSONL corpus. When absent the synthetic generator is used.
    pub corpus: Option<PathBuf>,
    /// Two-column substitution lexicon. When absent the built-in one is used.
    pub lexicon: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths { corpus: None, lexicon: None, out: PathBuf::from("fairmatch-out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Share of resumes held out for the parity report and the probe.
    pub valid_fraction: f64,
    pub weighting: Weighting,
    pub parity_threshold: f64,
    /// Standardize features on the training split before the classifier and
    /// probe see them.
    pub standardize: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { valid_fraction: 0.3, weighting: Weighting::Prevalence, parity_threshold: 0.05, standardize: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineOptions {
    /// Train word vectors on resumes as well as vacancies.
    pub embed_resumes: bool,
    /// Pass vacancies through the generator before matching.
    pub transform_vacancies: bool,
    /// Apply the lexicon to vacancies as well as resumes.
    pub substitute_vacancies: bool,
    /// Write document matrices for every variant and run.
    pub save_matrices: bool,
    /// Standardize features (training-resume mean and deviation) before the
    /// generator.
    pub standardize: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions { embed_resumes: true, transform_vacancies: true, substitute_vacancies: true, save_matrices: true, standardize: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Copied into every section's seed by [`RunConfig::resolve`].
    pub seed: u64,
    pub deterministic: bool,
    pub variant: Variant,
    pub hours_per_year: f64,
    pub threads: usize,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub embedding: SgnsConfig,
    pub debias: TrainConfig,
    /// Industry classifier behind the parity report.
    pub classifier: ClassifierConfig,
    /// Gender probe.
    pub probe: ClassifierConfig,
    pub eval: EvalConfig,
    pub pipeline: PipelineOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            deterministic: true,
            variant: Variant::All,
            hours_per_year: HOURS_PER_YEAR,
            threads: 1,
            paths: Paths::default(),
            synth: SynthConfig::default(),
            embedding: SgnsConfig::default(),
            debias: TrainConfig {
                learning_rate: 3e-5,
                adversary_learning_rate: Some(1e-3),
                batch_size: 64,
                adversary_steps: 8,
                epochs: 40,
                beta: 4.0,
                ..TrainConfig::default()
            },
            classifier: ClassifierConfig::default(),
            probe: ClassifierConfig::default(),
            eval: EvalConfig::default(),
            pipeline: PipelineOptions::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub deterministic: Option<bool>,
    pub variant: Option<Variant>,
    pub out: Option<PathBuf>,
    pub runs: Option<usize>,
    pub corpus: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl RunConfig {
    /// Keys missing from `text` keep the values of [`RunConfig::default`],
    /// also inside a section that is present.
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        let mut base = toml::Table::try_from(RunConfig::default()).expect("config serializes");
        merge(&mut base, user);
        base.try_into().map_err(|e: toml::de::Error| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies overrides and propagates the global seed, determinism flag and
    /// thread count into every section, then validates.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = o.deterministic {
            self.deterministic = d;
        }
        if let Some(v) = o.variant {
            self.variant = v;
        }
        if let Some(p) = &o.out {
            self.paths.out = p.clone();
        }
        if let Some(r) = o.runs {
            self.debias.runs = r;
        }
        if let Some(c) = &o.corpus {
            self.paths.corpus = Some(c.clone());
        }
        if let Some(t) = o.threads {
            self.threads = t;
        }
        self.synth.seed = self.seed;
        self.embedding.seed = self.seed;
        self.debias.seed = self.seed;
        self.classifier.seed = self.seed;
        self.probe.seed = self.seed;
        self.embedding.deterministic = self.deterministic;
        self.debias.deterministic = self.deterministic;
        self.embedding.threads = if self.deterministic { 1 } else { self.threads };
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::config("threads must be positive"));
        }
        if !(self.hours_per_year > 0.0 && self.hours_per_year.is_finite()) {
            return Err(Error::config("hours_per_year must be positive"));
        }
        if !(0.0..1.0).contains(&self.eval.valid_fraction) || self.eval.valid_fraction == 0.0 {
            return Err(Error::config("eval.valid_fraction must be in (0, 1)"));
        }
        if !(self.eval.parity_threshold >= 0.0) {
            return Err(Error::config("eval.parity_threshold must be >= 0"));
        }
        self.synth.validate()?;
        self.embedding.validate()?;
        self.debias.validate()
    }
}

fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Thread count from [`THREADS_ENV`], if set.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}
