//! Text formats: word vectors ("<V> <dim>" header, one token per line, plus a
//! parallel `.out` file for context vectors) and pooled document matrices.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{DocMatrix, EmbeddingModel, SgnsConfig, Vocab};
use crate::error::{Error, Result};

fn out_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".out");
    PathBuf::from(s)
}

fn write_rows<W: Write>(mut w: W, labels: &[String], rows: &Array2<f64>) -> std::io::Result<()> {
    writeln!(w, "{} {}", rows.nrows(), rows.ncols())?;
    for (label, row) in labels.iter().zip(rows.rows()) {
        w.write_all(label.as_bytes())?;
        for v in row {
            write!(w, " {v}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()
}

fn read_rows<R: BufRead>(reader: R, path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let bad = |line: usize, msg: String| Error::data(format!("{}:{line}: {msg}", path.display()));
    let mut lines = reader.lines().enumerate().peekable();
    // Leading `#` lines are comments.
    while let Some((_, Ok(l))) = lines.peek() {
        if !l.starts_with('#') {
            break;
        }
        lines.next();
    }
    let (h, header) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
    let header = header.map_err(|e| Error::io(path, e))?;
    let bad_header = |msg: String| bad(h + 1, msg);
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| bad_header(format!("bad header: {e}")))?;
    let [n, dim] = dims[..] else {
        return Err(bad_header("header must be \"<rows> <dim>\"".into()));
    };
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * dim);
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        let label = parts.next().unwrap_or_default();
        let before = data.len();
        for p in parts {
            data.push(p.parse::<f64>().map_err(|e| bad(i + 1, format!("bad value {p:?}: {e}")))?);
        }
        if data.len() - before != dim {
            return Err(bad(i + 1, format!("expected {dim} values, got {}", data.len() - before)));
        }
        labels.push(label.to_string());
    }
    if labels.len() != n {
        return Err(bad_header(format!("header promises {n} rows, found {}", labels.len())));
    }
    let rows = Array2::from_shape_vec((n, dim), data).expect("shape checked");
    Ok((labels, rows))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

pub fn write_input_vectors<W: Write>(model: &EmbeddingModel, w: W) -> std::io::Result<()> {
    write_rows(w, model.vocab.words(), &model.input_vectors)
}

pub fn write_output_vectors<W: Write>(model: &EmbeddingModel, w: W) -> std::io::Result<()> {
    write_rows(w, model.vocab.words(), &model.output_vectors)
}

/// Writes input vectors to `path` and output vectors to `path.out`.
pub fn save_embeddings(model: &EmbeddingModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let words = model.vocab.words();
    write_rows(create(path)?, words, &model.input_vectors).map_err(|e| Error::io(path, e))?;
    let out = out_path(path);
    write_rows(create(&out)?, words, &model.output_vectors).map_err(|e| Error::io(&out, e))
}

/// Loads a model written by [`save_embeddings`]. Token counts are not part of
/// the format and come back as zero; the config is the default with `dim`
/// set from the file.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingModel> {
    let path = path.as_ref();
    let (words, input_vectors) = read_rows(open(path)?, path)?;
    let out = out_path(path);
    let (out_words, output_vectors) = read_rows(open(&out)?, &out)?;
    if out_words != words || output_vectors.dim() != input_vectors.dim() {
        return Err(Error::data(format!("{} does not match {}", out.display(), path.display())));
    }
    let dim = input_vectors.ncols();
    if dim == 0 {
        return Err(Error::data("embedding dimension must be positive"));
    }
    Ok(EmbeddingModel {
        vocab: Vocab::from_entries(words.into_iter().map(|w| (w, 0)).collect()),
        dim,
        input_vectors,
        output_vectors,
        config: SgnsConfig { dim, ..SgnsConfig::default() },
        epoch_loss: Vec::new(),
    })
}

pub fn write_doc_matrix<W: Write>(m: &DocMatrix, w: W) -> std::io::Result<()> {
    write_rows(w, &m.ids, &m.rows)
}

pub fn save_doc_matrix(m: &DocMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_doc_matrix(m, create(path)?).map_err(|e| Error::io(path, e))
}

pub fn read_doc_matrix(path: impl AsRef<Path>) -> Result<DocMatrix> {
    let path = path.as_ref();
    let (ids, rows) = read_rows(open(path)?, path)?;
    DocMatrix::new(ids, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn embeddings_round_trip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w2v.txt");
        let m = EmbeddingModel {
            vocab: Vocab::from_entries(vec![("a".into(), 0), ("b".into(), 0)]),
            dim: 3,
            input_vectors: array![[0.1, -1e-300, 1.0 / 3.0], [f64::MAX, 2.5e-8, 0.0]],
            output_vectors: array![[7.0, 8.0, 9.0], [-0.0, 1e300, 0.3]],
            config: SgnsConfig { dim: 3, ..SgnsConfig::default() },
            epoch_loss: vec![],
        };
        save_embeddings(&m, &p).unwrap();
        assert!(dir.path().join("w2v.txt.out").exists());
        assert_eq!(load_embeddings(&p).unwrap(), m);
    }

    #[test]
    fn doc_matrix_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("docs.txt");
        let m = DocMatrix::new(vec!["r1".into(), "r2".into()], array![[1.5, 2.0], [0.1, -0.2]]).unwrap();
        save_doc_matrix(&m, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("2 2\nr1 1.5 2\n"));
        assert_eq!(read_doc_matrix(&p).unwrap(), m);

        std::fs::write(&p, "2 2\nr1 1 2\n").unwrap();
        assert!(read_doc_matrix(&p).is_err());
        std::fs::write(&p, "1 2\nr1 1 x\n").unwrap();
        assert!(read_doc_matrix(&p).is_err());
    }
}
