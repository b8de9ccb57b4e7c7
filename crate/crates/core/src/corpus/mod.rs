//! Documents, tokenization, train/validation splitting, the gendered-word
//! substitution transform and the synthetic corpus generator.

mod io;
mod lexicon;
mod synth;

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use io::{load_corpus, read_corpus, save_corpus, write_corpus};
pub use lexicon::{apply_substitutions, Language, SubstitutionLexicon};
pub use synth::{generate_synthetic, is_seniority_token, SynthConfig, INDUSTRY_GENDER_COUNTS, INDUSTRY_NAMES};

/// Number of industry groups used as classification labels.
pub const N_INDUSTRIES: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DocKind {
    Resume,
    Vacancy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    /// Sensitive-attribute encoding: Female = 1, Male = 0.
    pub fn as_label(self) -> f64 {
        match self {
            Gender::Female => 1.0,
            Gender::Male => 0.0,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Gender::Female => "F",
            Gender::Male => "M",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Female => "Female",
            Gender::Male => "Male",
        })
    }
}

/// A resume or a vacancy.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub kind: DocKind,
    pub tokens: Vec<String>,
    /// Resumes only.
    pub gender: Option<Gender>,
    /// Industry labels in `0..N_INDUSTRIES`.
    pub industries: BTreeSet<usize>,
    /// Vacancies only, euros per hour.
    pub salary_hourly: Option<f64>,
}

impl Document {
    pub fn resume(
        id: impl Into<String>,
        tokens: Vec<String>,
        gender: Gender,
        industries: impl IntoIterator<Item = usize>,
    ) -> Self {
        Document {
            id: id.into(),
            kind: DocKind::Resume,
            tokens,
            gender: Some(gender),
            industries: industries.into_iter().collect(),
            salary_hourly: None,
        }
    }

    pub fn vacancy(
        id: impl Into<String>,
        tokens: Vec<String>,
        industries: impl IntoIterator<Item = usize>,
        salary_hourly: Option<f64>,
    ) -> Self {
        Document {
            id: id.into(),
            kind: DocKind::Vacancy,
            tokens,
            gender: None,
            industries: industries.into_iter().collect(),
            salary_hourly,
        }
    }

    pub fn is_resume(&self) -> bool {
        self.kind == DocKind::Resume
    }

    pub fn is_vacancy(&self) -> bool {
        self.kind == DocKind::Vacancy
    }

    /// Checks the per-kind field rules. Returns the offending field name and
    /// a message on failure.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.id.is_empty() {
            return Err(("id", "must be nonempty".into()));
        }
        match self.kind {
            DocKind::Resume => {
                if self.gender.is_none() {
                    return Err(("gender", "required for resumes".into()));
                }
                if self.salary_hourly.is_some() {
                    return Err(("salary_hourly", "not allowed on resumes".into()));
                }
            }
            DocKind::Vacancy => {
                if self.gender.is_some() {
                    return Err(("gender", "not allowed on vacancies".into()));
                }
                if let Some(s) = self.salary_hourly {
                    if !s.is_finite() || s < 0.0 {
                        return Err(("salary_hourly", format!("must be finite and >= 0, got {s}")));
                    }
                }
            }
        }
        if let Some(&bad) = self.industries.iter().find(|&&i| i >= N_INDUSTRIES) {
            return Err(("industries", format!("label {bad} outside 0..{N_INDUSTRIES}")));
        }
        if let Some(bad) = self
            .tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_uppercase))
        {
            return Err(("tokens", format!("token {bad:?} is empty or not lowercase")));
        }
        Ok(())
    }
}

/// Lowercases, splits on whitespace and strips leading/trailing punctuation.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Returns `(train, valid)` index sets, each in ascending order.
///
/// The validation part has exactly `round(valid_fraction * n)` elements.
pub fn split_indices(n: usize, valid_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&valid_fraction) {
        return Err(Error::config(format!(
            "valid_fraction must be in [0, 1), got {valid_fraction}"
        )));
    }
    let n_valid = (valid_fraction * n as f64).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut valid = idx[..n_valid].to_vec();
    let mut train = idx[n_valid..].to_vec();
    valid.sort_unstable();
    train.sort_unstable();
    Ok((train, valid))
}

pub fn split_train_valid<T: Clone>(
    items: &[T],
    valid_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    let (train, valid) = split_indices(items.len(), valid_fraction, seed)?;
    Ok((
        train.into_iter().map(|i| items[i].clone()).collect(),
        valid.into_iter().map(|i| items[i].clone()).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("He codes"), vec!["he", "codes"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Zij werkt!"), vec!["zij", "werkt"]);
        assert_eq!(tokenize("  (a)  -- b... "), vec!["a", "b"]);
    }

    #[test]
    fn split_sizes_and_boundary() {
        let docs: Vec<u32> = (0..10).collect();
        let (tr, va) = split_train_valid(&docs, 0.3, 7).unwrap();
        assert_eq!((tr.len(), va.len()), (7, 3));
        let (tr, va) = split_train_valid(&docs, 0.0, 7).unwrap();
        assert_eq!(tr, docs);
        assert!(va.is_empty());
        assert!(split_train_valid(&docs, 1.0, 7).is_err());
        assert!(split_train_valid(&docs, -0.1, 7).is_err());
    }

    #[test]
    fn split_is_deterministic_partition() {
        let a = split_indices(101, 0.3, 7).unwrap();
        let b = split_indices(101, 0.3, 7).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.0.iter().chain(&a.1).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
        assert_eq!(a.1.len(), 30);
        assert_ne!(a, split_indices(101, 0.3, 8).unwrap());
    }

    #[test]
    fn validation_rules() {
        let mut r = Document::resume("r1", vec!["a".into()], Gender::Female, [0]);
        assert!(r.validate().is_ok());
        r.gender = None;
        assert_eq!(r.validate().unwrap_err().0, "gender");
        let mut v = Document::vacancy("v1", vec!["a".into()], [3], Some(20.0));
        assert!(v.validate().is_ok());
        v.industries.insert(21);
        assert_eq!(v.validate().unwrap_err().0, "industries");
        let v = Document::vacancy("v2", vec!["A".into()], [3], None);
        assert_eq!(v.validate().unwrap_err().0, "tokens");
    }
}
