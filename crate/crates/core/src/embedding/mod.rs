//! Skip-gram word vectors and mean-pooled document vectors.

mod io;
mod sgns;

use std::collections::HashMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};

pub use io::{
    load_embeddings, read_doc_matrix, save_doc_matrix, save_embeddings, write_doc_matrix, write_input_vectors, write_output_vectors,
};
pub use sgns::{sgns_pair_gradient, PairGradient};

use sgns::{AtomicRows, DenseRows, Sampling, Worker};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgnsConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial rate; decays linearly to 1e-4 of itself.
    pub learning_rate: f64,
    pub min_count: u64,
    pub subsample: f64,
    pub unigram_power: f64,
    pub seed: u64,
    /// Single update stream, bitwise reproducible. When false, `threads`
    /// workers update shared vectors without locks.
    pub deterministic: bool,
    pub threads: usize,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 300,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_count: 5,
            subsample: 1e-3,
            unigram_power: 0.75,
            seed: 1,
            deterministic: true,
            threads: 1,
        }
    }
}

impl SgnsConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dim", self.dim),
            ("window", self.window),
            ("negatives", self.negatives),
            ("epochs", self.epochs),
            ("threads", self.threads),
        ] {
            if v == 0 {
                return Err(Error::config(format!("embedding.{name} must be positive")));
            }
        }
        if self.min_count == 0 {
            return Err(Error::config("embedding.min_count must be positive"));
        }
        for (name, v) in [("learning_rate", self.learning_rate), ("subsample", self.subsample)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(format!("embedding.{name} must be in (0, 1], got {v}")));
            }
        }
        if !(self.unigram_power > 0.0 && self.unigram_power <= 1.0) {
            return Err(Error::config("embedding.unigram_power must be in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Tokens with at least `min_count` occurrences, most frequent first
    /// (ties by token).
    pub fn build<'a>(sentences: impl IntoIterator<Item = &'a [String]>, min_count: u64) -> Self {
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for s in sentences {
            for t in s {
                *freq.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut entries: Vec<(&str, u64)> = freq.into_iter().filter(|&(_, c)| c >= min_count).collect();
        entries.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Self::from_entries(entries.into_iter().map(|(w, c)| (w.to_string(), c)).collect())
    }

    pub(crate) fn from_entries(entries: Vec<(String, u64)>) -> Self {
        let index = entries.iter().enumerate().map(|(i, (w, _))| (w.clone(), i)).collect();
        let (words, counts) = entries.into_iter().unzip();
        Vocab { words, counts, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn count(&self, i: usize) -> u64 {
        self.counts[i]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub vocab: Vocab,
    pub dim: usize,
    /// Token vectors used for pooling, `|V| × dim`.
    pub input_vectors: Array2<f64>,
    /// Context-side vectors, `|V| × dim`.
    pub output_vectors: Array2<f64>,
    pub config: SgnsConfig,
    /// Mean pair loss per epoch.
    pub epoch_loss: Vec<f64>,
}

/// Pooled document vectors aligned to document ids.
#[derive(Debug, Clone, PartialEq)]
pub struct DocMatrix {
    pub ids: Vec<String>,
    pub rows: Array2<f64>,
}

impl DocMatrix {
    pub fn new(ids: Vec<String>, rows: Array2<f64>) -> Result<Self> {
        if ids.len() != rows.nrows() {
            return Err(Error::Dimension { expected: ids.len(), got: rows.nrows() });
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("document matrix has non-finite entries".into()));
        }
        Ok(DocMatrix { ids, rows })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// Rows at the given positions, in that order.
    pub fn select(&self, positions: &[usize]) -> DocMatrix {
        DocMatrix {
            ids: positions.iter().map(|&i| self.ids[i].clone()).collect(),
            rows: self.rows.select(ndarray::Axis(0), positions),
        }
    }
}

/// Trains skip-gram vectors on the token sequences of `corpus`.
pub fn train_embeddings(corpus: &[Document], cfg: &SgnsConfig) -> Result<EmbeddingModel> {
    cfg.validate()?;
    let vocab = Vocab::build(corpus.iter().map(|d| d.tokens.as_slice()), cfg.min_count);
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|d| d.tokens.iter().filter_map(|t| vocab.get(t)).collect::<Vec<_>>())
        .filter(|s| s.len() > 1)
        .collect();
    let total: u64 = vocab.counts.iter().sum();

    let weights: Vec<f64> = vocab.counts.iter().map(|&c| (c as f64).powf(cfg.unigram_power)).collect();
    let negatives = WeightedAliasIndex::new(weights).map_err(|e| Error::Numeric(e.to_string()))?;
    let threshold = cfg.subsample * total as f64;
    let keep: Vec<f64> = vocab
        .counts
        .iter()
        .map(|&c| {
            let c = c as f64;
            ((c / threshold).sqrt() + 1.0) * threshold / c
        })
        .collect();
    let sampling = Sampling { negatives: &negatives, keep: &keep, window: cfg.window, n_negatives: cfg.negatives };

    let (n, dim) = (vocab.len(), cfg.dim);
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut input: Vec<f64> = (0..n * dim).map(|_| (init_rng.random::<f64>() - 0.5) / dim as f64).collect();
    let mut output = vec![0.0; n * dim];

    let tokens_per_epoch: usize = sentences.iter().map(Vec::len).sum();
    let schedule_len = (cfg.epochs * tokens_per_epoch).max(1) as f64;
    let lr_at = |done: usize| cfg.learning_rate * (1.0 - done as f64 / schedule_len).max(1e-4);

    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    if cfg.deterministic || cfg.threads == 1 {
        let mut worker = Worker::new(dim, cfg.seed.wrapping_add(1));
        let mut kept = Vec::new();
        let mut done = 0usize;
        for _ in 0..cfg.epochs {
            worker.loss_sum = 0.0;
            worker.pairs = 0;
            for s in &sentences {
                let lr = lr_at(done);
                worker.sentence(
                    &mut DenseRows { data: &mut input, dim },
                    &mut DenseRows { data: &mut output, dim },
                    s,
                    &sampling,
                    lr,
                    &mut kept,
                );
                done += s.len();
            }
            epoch_loss.push(worker.loss_sum / worker.pairs.max(1) as f64);
        }
    } else {
        let shared_in = AtomicRows::from_slice(&input, dim);
        let shared_out = AtomicRows::from_slice(&output, dim);
        let n_sentences = sentences.len();
        let chunk = n_sentences.div_ceil(cfg.threads);
        for epoch in 0..cfg.epochs {
            let base = epoch * tokens_per_epoch;
            let results: Vec<(f64, u64)> = std::thread::scope(|scope| {
                let handles: Vec<_> = sentences
                    .chunks(chunk.max(1))
                    .enumerate()
                    .map(|(t, part)| {
                        let (si, so, sampling) = (&shared_in, &shared_out, &sampling);
                        let seed = cfg.seed.wrapping_add(1 + (epoch * cfg.threads + t) as u64);
                        scope.spawn(move || {
                            let mut worker = Worker::new(dim, seed);
                            let mut kept = Vec::new();
                            // Each worker assumes the others progress at the same pace.
                            let mut done = base + t * chunk * tokens_per_epoch / n_sentences.max(1);
                            for s in part {
                                let (mut a, mut b) = (si, so);
                                worker.sentence(&mut a, &mut b, s, sampling, lr_at(done), &mut kept);
                                done += s.len();
                            }
                            (worker.loss_sum, worker.pairs)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
            });
            let (loss, pairs) = results.iter().fold((0.0, 0u64), |acc, r| (acc.0 + r.0, acc.1 + r.1));
            epoch_loss.push(loss / pairs.max(1) as f64);
        }
        input = shared_in.into_vec();
        output = shared_out.into_vec();
    }

    let input_vectors = Array2::from_shape_vec((n, dim), input).expect("shape");
    let output_vectors = Array2::from_shape_vec((n, dim), output).expect("shape");
    if input_vectors.iter().chain(output_vectors.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("embedding training diverged".into()));
    }
    Ok(EmbeddingModel { vocab, dim, input_vectors, output_vectors, config: cfg.clone(), epoch_loss })
}

impl EmbeddingModel {
    /// Mean of the input vectors of in-vocabulary tokens; unknown tokens
    /// are skipped.
    pub fn embed_document(&self, tokens: &[String]) -> Result<Vec<f64>> {
        if tokens.is_empty() {
            return Err(Error::EmptyDocument);
        }
        let mut sum = vec![0.0; self.dim];
        let mut n = 0usize;
        for i in tokens.iter().filter_map(|t| self.vocab.get(t)) {
            for (s, v) in sum.iter_mut().zip(self.input_vectors.row(i)) {
                *s += v;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::NoKnownTokens);
        }
        let inv = 1.0 / n as f64;
        sum.iter_mut().for_each(|s| *s *= inv);
        Ok(sum)
    }

    /// Pools every document; documents without known tokens are dropped and
    /// their ids returned alongside the matrix.
    pub fn embed_corpus(&self, docs: &[Document]) -> Result<(DocMatrix, Vec<String>)> {
        let mut ids = Vec::with_capacity(docs.len());
        let mut data = Vec::with_capacity(docs.len() * self.dim);
        let mut dropped = Vec::new();
        for d in docs {
            match self.embed_document(&d.tokens) {
                Ok(v) => {
                    ids.push(d.id.clone());
                    data.extend(v);
                }
                Err(Error::NoKnownTokens | Error::EmptyDocument) => dropped.push(d.id.clone()),
                Err(e) => return Err(e),
            }
        }
        if ids.is_empty() {
            return Err(Error::data("every document was dropped: no in-vocabulary tokens"));
        }
        let rows = Array2::from_shape_vec((ids.len(), self.dim), data).expect("shape");
        Ok((DocMatrix::new(ids, rows)?, dropped))
    }

    pub fn vector(&self, token: &str) -> Option<ndarray::ArrayView1<'_, f64>> {
        self.vocab.get(token).map(|i| self.input_vectors.row(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use ndarray::array;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    fn tiny_model() -> EmbeddingModel {
        EmbeddingModel {
            vocab: Vocab::from_entries(vec![("a".into(), 3), ("b".into(), 2)]),
            dim: 2,
            input_vectors: array![[1.0, 0.0], [0.0, 1.0]],
            output_vectors: Array2::zeros((2, 2)),
            config: SgnsConfig { dim: 2, ..SgnsConfig::default() },
            epoch_loss: vec![],
        }
    }

    fn two_family_corpus(n_docs: usize, seed: u64) -> Vec<Document> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_docs)
            .map(|i| {
                let fam = if i % 2 == 0 { "a" } else { "b" };
                let tokens = (0..12).map(|_| format!("{fam}{}", rng.random_range(0..8))).collect();
                Document::vacancy(format!("d{i}"), tokens, [0], None)
            })
            .collect()
    }

    fn cosine(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
        a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
    }

    #[test]
    fn pooling_examples() {
        let m = tiny_model();
        assert_eq!(m.embed_document(&toks(&["a"])).unwrap(), vec![1.0, 0.0]);
        assert_eq!(m.embed_document(&toks(&["a", "b"])).unwrap(), vec![0.5, 0.5]);
        assert_eq!(m.embed_document(&toks(&["zz", "b", "zz"])).unwrap(), vec![0.0, 1.0]);
        assert!(matches!(m.embed_document(&toks(&["zz"])), Err(Error::NoKnownTokens)));
        assert!(matches!(m.embed_document(&[]), Err(Error::EmptyDocument)));
    }

    #[test]
    fn pooling_duplication_invariance() {
        let m = tiny_model();
        let t = toks(&["a", "b", "b", "q"]);
        let doubled: Vec<String> = t.iter().chain(&t).cloned().collect();
        assert_eq!(m.embed_document(&t).unwrap(), m.embed_document(&doubled).unwrap());
    }

    #[test]
    fn embed_corpus_drops_and_aligns() {
        let m = tiny_model();
        let docs = vec![
            Document::vacancy("x", toks(&["a"]), [0], None),
            Document::vacancy("y", toks(&["q"]), [0], None),
            Document::vacancy("z", toks(&["b", "a"]), [0], None),
        ];
        let (mat, dropped) = m.embed_corpus(&docs).unwrap();
        assert_eq!(mat.ids, vec!["x", "z"]);
        assert_eq!(dropped, vec!["y"]);
        assert_eq!(mat.rows, array![[1.0, 0.0], [0.5, 0.5]]);

        let rev: Vec<Document> = docs.iter().rev().cloned().collect();
        let (mat_rev, _) = m.embed_corpus(&rev).unwrap();
        assert_eq!(mat_rev.ids, vec!["z", "x"]);
        assert_eq!(mat_rev.rows.row(0), mat.rows.row(1));

        let all_oov = vec![Document::vacancy("y", toks(&["q"]), [0], None)];
        assert!(m.embed_corpus(&all_oov).is_err());
    }

    #[test]
    fn below_min_count_is_empty_vocabulary() {
        let docs = vec![Document::vacancy("d", toks(&["a", "b", "c"]), [0], None)];
        assert!(matches!(train_embeddings(&docs, &SgnsConfig::default()), Err(Error::EmptyVocabulary)));
    }

    #[test]
    fn deterministic_mode_is_bitwise_reproducible() {
        let docs = two_family_corpus(40, 3);
        let cfg = SgnsConfig { dim: 16, epochs: 3, ..SgnsConfig::default() };
        let a = train_embeddings(&docs, &cfg).unwrap();
        let b = train_embeddings(&docs, &cfg).unwrap();
        assert_eq!(a, b);
        let c = train_embeddings(&docs, &SgnsConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(a.input_vectors, c.input_vectors);
    }

    #[test]
    fn families_separate() {
        for seed in 0..3 {
            let docs = two_family_corpus(200, seed);
            let cfg = SgnsConfig { dim: 20, epochs: 5, seed, ..SgnsConfig::default() };
            let m = train_embeddings(&docs, &cfg).unwrap();
            let (mut intra, mut inter) = (Vec::new(), Vec::new());
            for i in 0..8 {
                for j in 0..8 {
                    let (ai, aj, bj) = (format!("a{i}"), format!("a{j}"), format!("b{j}"));
                    if i != j {
                        intra.push(cosine(m.vector(&ai).unwrap(), m.vector(&aj).unwrap()));
                    }
                    inter.push(cosine(m.vector(&ai).unwrap(), m.vector(&bj).unwrap()));
                }
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            assert!(mean(&intra) > mean(&inter), "seed {seed}: {} vs {}", mean(&intra), mean(&inter));
        }
    }

    #[test]
    fn loss_settles_in_final_half() {
        let docs = two_family_corpus(200, 9);
        let cfg = SgnsConfig { dim: 20, epochs: 8, ..SgnsConfig::default() };
        let m = train_embeddings(&docs, &cfg).unwrap();
        let tail = &m.epoch_loss[m.epoch_loss.len() / 2..];
        for w in tail.windows(2) {
            assert!(w[1] <= w[0] * 1.05, "{:?}", m.epoch_loss);
        }
        assert!(m.input_vectors.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn parallel_mode_trains() {
        let docs = two_family_corpus(200, 4);
        let cfg = SgnsConfig { dim: 20, epochs: 4, deterministic: false, threads: 3, ..SgnsConfig::default() };
        let m = train_embeddings(&docs, &cfg).unwrap();
        assert_eq!(m.input_vectors.dim(), (16, 20));
        assert!(m.input_vectors.iter().all(|v| v.is_finite()));
        assert!(m.epoch_loss.last().unwrap() < &m.epoch_loss[0]);
    }
}
