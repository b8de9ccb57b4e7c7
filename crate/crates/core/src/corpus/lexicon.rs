use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

const BUILTIN: &str = include_str!("../../data/gendered_words.txt");

/// (male word, female word, neutral word), English block.
const ENGLISH: &[(&str, &[&str], &str)] = &[
    ("he", &["she"], "they"),
    ("his", &["hers"], "theirs"),
    ("himself", &["herself"], "themselves"),
    ("male", &["female"], "person"),
    ("boy", &["girl"], "person"),
    ("man", &["woman"], "person"),
];

/// Dutch block. `zij/ze` are both female forms of `hij`.
const DUTCH: &[(&str, &[&str], &str)] = &[
    ("hij", &["zij", "ze"], "u"),
    ("zijn", &["haar"], "uw"),
    ("hijzelf", &["zijzelf"], "uzelf"),
    ("jongen", &["meisje"], "persoon"),
    ("man", &["vrouw"], "persoon"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Language {
    English,
    Dutch,
}

impl Language {
    fn table(self) -> &'static [(&'static str, &'static [&'static str], &'static str)] {
        match self {
            Language::English => ENGLISH,
            Language::Dutch => DUTCH,
        }
    }
}

/// Token-level map from gendered words to neutral replacements.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SubstitutionLexicon {
    entries: HashMap<String, String>,
    /// Entries dropped because their key was already mapped elsewhere.
    shadowed: Vec<(String, String)>,
}

impl SubstitutionLexicon {
    /// Both language blocks merged; on a key clash the first block wins
    /// (`man` maps to `person`, not `persoon`).
    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("bundled lexicon is valid")
    }

    pub fn builtin_text() -> &'static str {
        BUILTIN
    }

    /// A single language block, without clashes.
    pub fn for_language(lang: Language) -> Self {
        let mut lex = SubstitutionLexicon::default();
        for &(male, females, neutral) in lang.table() {
            for word in std::iter::once(&male).chain(females.iter()) {
                lex.insert(word, neutral);
            }
        }
        lex
    }

    /// Parses "gendered neutral" pairs, one per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = SubstitutionLexicon::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            let [from, to] = cols[..] else {
                return Err(Error::data(format!(
                    "lexicon line {}: expected two columns, got {}",
                    lineno + 1,
                    cols.len()
                )));
            };
            if from.chars().any(char::is_uppercase) || to.chars().any(char::is_uppercase) {
                return Err(Error::data(format!(
                    "lexicon line {}: tokens must be lowercase",
                    lineno + 1
                )));
            }
            lex.insert(from, to);
        }
        if let Some(key) = lex.entries.values().find(|v| lex.entries.contains_key(*v)) {
            return Err(Error::data(format!(
                "lexicon maps onto `{key}`, which is itself a key"
            )));
        }
        Ok(lex)
    }

    fn insert(&mut self, from: &str, to: &str) {
        match self.entries.get(from) {
            Some(existing) if existing != to => {
                self.shadowed.push((from.to_string(), to.to_string()));
            }
            Some(_) => {}
            None => {
                self.entries.insert(from.to_string(), to.to_string());
            }
        }
    }

    pub fn get(&self, token: &str) -> Option<&str> {
        self.entries.get(token).map(String::as_str)
    }

    /// Neutral replacement, or the token itself when it is not a key.
    pub fn lookup<'a>(&'a self, token: &'a str) -> &'a str {
        self.get(token).unwrap_or(token)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn shadowed(&self) -> &[(String, String)] {
        &self.shadowed
    }

    /// Entries sorted by key.
    pub fn entries(&self) -> Vec<(&str, &str)> {
        let mut v: Vec<_> = self
            .entries
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect();
        v.sort_unstable();
        v
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            writeln!(out, "{k}\t{v}").unwrap();
        }
        out
    }
}

pub fn apply_substitutions(tokens: &[String], lexicon: &SubstitutionLexicon) -> Vec<String> {
    tokens
        .iter()
        .map(|t| lexicon.lookup(t).to_string())
        .collect()
}
