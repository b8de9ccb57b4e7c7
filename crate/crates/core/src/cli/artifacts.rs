//! Output directory handling: manifest-stamped artifact writes, per-command
//! manifests, the directory lock and verification.
//!
//! Every text artifact starts with a `# manifest <hash>` line and every JSON
//! artifact carries a top-level `"manifest"` field. The hash is the SHA-256 of
//! the crate version and the resolved configuration (output path excluded),
//! so two runs of the same configuration stamp identical hashes.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::error::{Error, Result};

pub const LOCK_FILE: &str = ".fairmatch.lock";
const HASH_PREFIX: &str = "# manifest ";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// The configuration as echoed in manifests: `paths.out` is recorded as `.`,
/// the manifest's own directory.
pub fn echoed_config(cfg: &RunConfig) -> RunConfig {
    let mut c = cfg.clone();
    c.paths.out = PathBuf::from(".");
    c
}

pub fn manifest_hash(cfg: &RunConfig) -> String {
    let text = format!("fairmatch {}\n{}", env!("CARGO_PKG_VERSION"), echoed_config(cfg).to_toml());
    sha256_hex(text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub hash: String,
    /// False until the command finished; stays false after a failure.
    pub complete: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config: RunConfig,
    pub artifacts: Vec<ArtifactEntry>,
}

pub fn manifest_path(out: &Path, command: &str) -> PathBuf {
    out.join(format!("manifest-{command}.json"))
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    manifest: &'a str,
    #[serde(flatten)]
    value: &'a T,
}

/// Writes artifacts under one output directory, stamping each with the
/// manifest hash and recording its digest.
pub struct Artifacts {
    root: PathBuf,
    hash: String,
    entries: Vec<ArtifactEntry>,
}

impl Artifacts {
    pub fn new(root: impl Into<PathBuf>, hash: impl Into<String>) -> Self {
        Artifacts { root: root.into(), hash: hash.into(), entries: Vec::new() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn entries(&self) -> &[ArtifactEntry] {
        &self.entries
    }

    fn put(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        let entry = ArtifactEntry { path: rel.to_string(), sha256: sha256_hex(bytes) };
        match self.entries.iter_mut().find(|e| e.path == rel) {
            Some(e) => *e = entry,
            None => self.entries.push(entry),
        }
        Ok(())
    }

    /// Text artifact: the hash line, then whatever `body` writes.
    pub fn text(&mut self, rel: &str, body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
        let mut buf = format!("{HASH_PREFIX}{}\n", self.hash).into_bytes();
        body(&mut buf).map_err(|e| Error::io(self.root.join(rel), e))?;
        self.put(rel, &buf)
    }

    /// JSON artifact: `value`'s fields plus `"manifest"`.
    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut buf = serde_json::to_vec_pretty(&Stamped { manifest: &self.hash, value })
            .map_err(|e| Error::data(format!("{rel}: {e}")))?;
        buf.push(b'\n');
        self.put(rel, &buf)
    }
}

/// Exclusive claim on an output directory, released on drop.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(out: &Path) -> Result<Self> {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let path = out.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::data(format!(
                "{} is in use by another run (remove {} if that run is gone)",
                out.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn write_manifest(out: &Path, m: &Manifest) -> Result<()> {
    let path = manifest_path(out, &m.command);
    let mut text = serde_json::to_vec_pretty(m).map_err(|e| Error::data(e.to_string()))?;
    text.push(b'\n');
    let mut f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(&text).map_err(|e| Error::io(&path, e))
}

/// Runs `body` with the output directory locked. The manifest is written
/// before any artifact with `complete: false` and rewritten afterwards;
/// after a failure it keeps `complete: false` and records the error.
pub fn run_command(command: &str, cfg: &RunConfig, body: impl FnOnce(&mut Artifacts) -> Result<()>) -> Result<()> {
    let out = cfg.paths.out.clone();
    let _lock = DirLock::acquire(&out)?;
    let hash = manifest_hash(cfg);
    let mut manifest = Manifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        hash: hash.clone(),
        complete: false,
        error: None,
        config: echoed_config(cfg),
        artifacts: Vec::new(),
    };
    write_manifest(&out, &manifest)?;
    let mut artifacts = Artifacts::new(&out, hash);
    let result = body(&mut artifacts);
    manifest.artifacts = artifacts.entries;
    manifest.complete = result.is_ok();
    manifest.error = result.as_ref().err().map(|e| e.to_string());
    write_manifest(&out, &manifest)?;
    result
}

/// Problems found by [`verify_dir`], one line each.
#[derive(Debug, Default)]
pub struct Verification {
    pub manifests: usize,
    pub artifacts: usize,
    pub problems: Vec<String>,
}

impl Verification {
    pub fn ok(&self) -> bool {
        self.manifests > 0 && self.problems.is_empty()
    }
}

fn embedded_hash(bytes: &[u8]) -> Option<String> {
    if bytes.starts_with(HASH_PREFIX.as_bytes()) {
        let line = bytes.split(|&b| b == b'\n').next()?;
        let h = std::str::from_utf8(&line[HASH_PREFIX.len()..]).ok()?;
        return Some(h.trim().to_string());
    }
    let v: serde_json::Value = serde_json::from_slice(bytes).ok()?;
    v.get("manifest")?.as_str().map(str::to_string)
}

/// Re-hashes every artifact listed by the manifests in `out` and checks the
/// stamp inside each against its manifest.
pub fn verify_dir(out: &Path) -> Result<Verification> {
    let mut report = Verification::default();
    let mut names: Vec<PathBuf> = fs::read_dir(out)
        .map_err(|e| Error::io(out, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("manifest-") && n.ends_with(".json"))
        })
        .collect();
    names.sort();
    for path in names {
        report.manifests += 1;
        let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest = match serde_json::from_slice(&text) {
            Ok(m) => m,
            Err(e) => {
                report.problems.push(format!("{}: unreadable manifest: {e}", path.display()));
                continue;
            }
        };
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        if !m.complete {
            let why = m.error.as_deref().unwrap_or("interrupted");
            report.problems.push(format!("{name}: command `{}` did not complete ({why})", m.command));
        }
        if manifest_hash(&m.config) != m.hash {
            report.problems.push(format!("{name}: hash does not match the recorded configuration"));
        }
        for a in &m.artifacts {
            report.artifacts += 1;
            let p = out.join(&a.path);
            let bytes = match fs::read(&p) {
                Ok(b) => b,
                Err(e) => {
                    report.problems.push(format!("{}: {e}", a.path));
                    continue;
                }
            };
            if sha256_hex(&bytes) != a.sha256 {
                report.problems.push(format!("{}: content differs from {name}", a.path));
            }
            match embedded_hash(&bytes) {
                Some(h) if h == m.hash => {}
                Some(_) => report.problems.push(format!("{}: stamped with a different manifest hash", a.path)),
                None => report.problems.push(format!("{}: no manifest stamp", a.path)),
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_in(dir: &Path) -> RunConfig {
        let mut c = RunConfig::default();
        c.paths.out = dir.to_path_buf();
        c
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = cfg_in(Path::new("/tmp/a"));
        let b = cfg_in(Path::new("/tmp/b"));
        assert_eq!(manifest_hash(&a), manifest_hash(&b));
        let mut c = a.clone();
        c.seed = 2;
        assert_ne!(manifest_hash(&a), manifest_hash(&c));
    }

    #[test]
    fn stamped_json_keeps_fields() {
        let dir = tempfile::tempdir().unwrap();
        let mut art = Artifacts::new(dir.path(), "abc");
        art.json("x/v.json", &serde_json::json!({"a": 1.5})).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("x/v.json")).unwrap()).unwrap();
        assert_eq!(v["manifest"], "abc");
        assert_eq!(v["a"], 1.5);
        art.text("t.txt", |w| w.write_all(b"body\n")).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("t.txt")).unwrap(), "# manifest abc\nbody\n");
        assert_eq!(art.entries().len(), 2);
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let lock = DirLock::acquire(dir.path()).unwrap();
        assert!(DirLock::acquire(dir.path()).is_err());
        drop(lock);
        DirLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn verify_detects_tampering_and_failure() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = cfg_in(dir.path());
        run_command("demo", &cfg, |art| art.text("a.txt", |w| w.write_all(b"1 2 3\n"))).unwrap();
        let v = verify_dir(dir.path()).unwrap();
        assert!(v.ok(), "{:?}", v.problems);
        assert_eq!((v.manifests, v.artifacts), (1, 1));
        assert!(!dir.path().join(LOCK_FILE).exists());

        fs::write(dir.path().join("a.txt"), "# manifest 00\n1 2 3\n").unwrap();
        let v = verify_dir(dir.path()).unwrap();
        assert_eq!(v.problems.len(), 2, "{:?}", v.problems);

        let err = run_command("broken", &cfg, |art| {
            art.text("b.txt", |w| w.write_all(b"x\n"))?;
            Err(Error::Numeric("boom".into()))
        });
        assert!(err.is_err());
        let m: Manifest = serde_json::from_slice(&fs::read(manifest_path(dir.path(), "broken")).unwrap()).unwrap();
        assert!(!m.complete);
        assert!(m.error.unwrap().contains("boom"));
    }
}
