use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{tokenize, DocKind, Document, Gender};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gender: Option<String>,
    #[serde(default)]
    industries: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    salary_hourly: Option<f64>,
}

impl From<&Document> for Record {
    fn from(d: &Document) -> Self {
        Record {
            id: d.id.clone(),
            kind: match d.kind {
                DocKind::Resume => "resume".into(),
                DocKind::Vacancy => "vacancy".into(),
            },
            text: None,
            tokens: Some(d.tokens.clone()),
            gender: d.gender.map(|g| g.code().to_string()),
            industries: d.industries.iter().copied().collect(),
            salary_hourly: d.salary_hourly,
        }
    }
}

fn parse_line(line: &str, lineno: usize, path: &Path) -> Result<Document> {
    let err = |field: &str, message: String| Error::Record {
        path: path.to_path_buf(),
        line: lineno,
        field: field.to_string(),
        message,
    };
    let rec: Record = serde_json::from_str(line).map_err(|e| err("<record>", e.to_string()))?;
    let kind = match rec.kind.as_str() {
        "resume" => DocKind::Resume,
        "vacancy" => DocKind::Vacancy,
        other => return Err(err("kind", format!("expected \"resume\" or \"vacancy\", got {other:?}"))),
    };
    let gender = match rec.gender.as_deref() {
        None => None,
        Some("F") => Some(Gender::Female),
        Some("M") => Some(Gender::Male),
        Some(other) => return Err(err("gender", format!("expected \"F\" or \"M\", got {other:?}"))),
    };
    let tokens = match (rec.tokens, rec.text) {
        (Some(t), None) => t,
        (None, Some(text)) => tokenize(&text),
        (Some(_), Some(_)) => return Err(err("text", "give either text or tokens, not both".into())),
        (None, None) => return Err(err("tokens", "missing text or tokens".into())),
    };
    let doc = Document {
        id: rec.id,
        kind,
        tokens,
        gender,
        industries: rec.industries.into_iter().collect(),
        salary_hourly: rec.salary_hourly,
    };
    doc.validate().map_err(|(field, msg)| err(field, msg))?;
    Ok(doc)
}

/// Reads line-delimited JSON documents. Blank lines and `#` comments are skipped.
pub fn read_corpus<R: BufRead>(reader: R, path: &Path) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        docs.push(parse_line(&line, i + 1, path)?);
    }
    Ok(docs)
}

pub fn write_corpus<W: Write>(docs: &[Document], mut w: W) -> std::io::Result<()> {
    for d in docs {
        serde_json::to_writer(&mut w, &Record::from(d))?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(f), path)
}

pub fn save_corpus(docs: &[Document], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_corpus(docs, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}
