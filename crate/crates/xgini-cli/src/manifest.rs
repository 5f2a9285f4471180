//! Workspace manifest and the content-addressed stage runner.
//!
//! A stage is reused only when its key (tool version + named input digests +
//! config subset) matches the manifest and all of its recorded outputs still
//! verify. Outputs are written atomically; a failing stage leaves whatever it
//! had produced under a `.partial` suffix. The manifest itself carries no
//! timestamps, so identical runs produce identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub stages: BTreeMap<String, StageEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageEntry {
    pub key: String,
    /// Workspace-relative output path -> content digest.
    pub outputs: BTreeMap<String, String>,
}

/// A failed stage, carrying the stage name for machine-readable reports.
#[derive(Debug)]
pub struct StageFailure {
    pub stage: String,
    pub source: anyhow::Error,
}

impl std::fmt::Display for StageFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage {} failed: {:#}", self.stage, self.source)
    }
}

impl std::error::Error for StageFailure {}

#[derive(Debug)]
pub struct Workspace {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Workspace {
    pub fn open(root: &Path) -> Result<Workspace> {
        fs::create_dir_all(root)
            .with_context(|| format!("cannot create workspace {}", root.display()))?;
        let manifest_path = root.join(MANIFEST_FILE);
        let manifest = if manifest_path.exists() {
            let text = fs::read_to_string(&manifest_path)?;
            serde_json::from_str(&text)
                .with_context(|| format!("corrupt manifest {}", manifest_path.display()))?
        } else {
            Manifest { tool_version: TOOL_VERSION.to_string(), stages: BTreeMap::new() }
        };
        Ok(Workspace { root: root.to_path_buf(), manifest })
    }

    pub fn abs(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn save_manifest(&mut self) -> Result<()> {
        self.manifest.tool_version = TOOL_VERSION.to_string();
        let text = serde_json::to_string_pretty(&self.manifest)? + "\n";
        atomic_write(&self.abs(MANIFEST_FILE), text.as_bytes())
    }

    /// Digest of a produced file: from the manifest when recorded, otherwise
    /// from disk. Errors name the stage that should have produced it.
    pub fn require_output(&self, rel: &str, producing_stage: &str) -> Result<String> {
        for entry in self.manifest.stages.values() {
            if let Some(digest) = entry.outputs.get(rel) {
                if self.abs(rel).exists() {
                    return Ok(digest.clone());
                }
            }
        }
        let path = self.abs(rel);
        if path.exists() {
            return digest_file(&path);
        }
        Err(anyhow!(xgini_core::Error::InvalidInput(format!(
            "missing {rel}; run the `{producing_stage}` stage first"
        ))))
    }

    pub fn read_output(&self, rel: &str, producing_stage: &str) -> Result<String> {
        let path = self.abs(rel);
        if !path.exists() {
            return Err(anyhow!(xgini_core::Error::InvalidInput(format!(
                "missing {rel}; run the `{producing_stage}` stage first"
            ))));
        }
        fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))
    }
}

/// Buffered writer for one stage's outputs: files land as `.tmp` first and
/// are renamed on commit, or kept as `.partial` when the stage fails.
pub struct StageSink {
    root: PathBuf,
    written: Vec<(String, PathBuf, String)>,
}

impl StageSink {
    fn new(root: &Path) -> StageSink {
        StageSink { root: root.to_path_buf(), written: Vec::new() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Reads an already committed workspace file (an upstream stage output).
    pub fn read(&self, rel: &str) -> Result<String> {
        fs::read_to_string(self.root.join(rel))
            .with_context(|| format!("cannot read workspace file {rel}"))
    }

    pub fn write(&mut self, rel: &str, content: &str) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let tmp = tmp_path(&path);
        fs::write(&tmp, content.as_bytes())
            .with_context(|| format!("cannot write {}", tmp.display()))?;
        self.written.push((rel.to_string(), tmp, sha256_hex(content.as_bytes())));
        Ok(())
    }

    fn commit(self) -> Result<BTreeMap<String, String>> {
        let mut outputs = BTreeMap::new();
        for (rel, tmp, digest) in self.written {
            let path = self.root.join(&rel);
            fs::rename(&tmp, &path)
                .with_context(|| format!("cannot move {} into place", tmp.display()))?;
            outputs.insert(rel, digest);
        }
        Ok(outputs)
    }

    fn abandon(self) {
        for (rel, tmp, _) in self.written {
            let partial = self.root.join(format!("{rel}.partial"));
            let _ = fs::rename(&tmp, &partial);
        }
    }
}

pub struct StageSpec {
    pub name: String,
    /// Digest material: named input digests and the config subset the stage
    /// depends on, one `name=value` per entry.
    pub key_parts: Vec<String>,
}

impl StageSpec {
    pub fn new(name: impl Into<String>, key_parts: Vec<String>) -> StageSpec {
        StageSpec { name: name.into(), key_parts }
    }

    fn key(&self) -> String {
        let mut material = format!("tool={TOOL_VERSION}\nstage={}\n", self.name);
        for part in &self.key_parts {
            material.push_str(part);
            material.push('\n');
        }
        sha256_hex(material.as_bytes())
    }
}

/// Runs a batch of independent stages (fresh ones in parallel on `jobs`
/// workers), commits outputs and manifest entries in spec order, and halts
/// on the first failure after letting running stages finish.
pub fn run_stage_batch<F>(
    ws: &mut Workspace,
    specs: Vec<StageSpec>,
    jobs: usize,
    f: F,
) -> Result<()>
where
    F: Fn(&StageSpec, &mut StageSink) -> Result<()> + Sync,
{
    let mut pending = Vec::new();
    for spec in specs {
        let key = spec.key();
        if stage_is_current(ws, &spec.name, &key) {
            eprintln!("[xgini] {}: cached", spec.name);
            continue;
        }
        pending.push((spec, key));
    }
    if pending.is_empty() {
        return Ok(());
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("cannot build worker pool")?;
    let root = ws.root.clone();
    let results: Vec<(StageSpec, String, StageSink, Result<()>)> = pool.install(|| {
        pending
            .into_par_iter()
            .map(|(spec, key)| {
                let mut sink = StageSink::new(&root);
                let result = f(&spec, &mut sink);
                (spec, key, sink, result)
            })
            .collect()
    });

    let mut failure: Option<StageFailure> = None;
    for (spec, key, sink, result) in results {
        match result {
            Ok(()) => {
                let outputs = sink.commit()?;
                eprintln!("[xgini] {}: computed ({} output(s))", spec.name, outputs.len());
                ws.manifest.stages.insert(spec.name, StageEntry { key, outputs });
            }
            Err(source) => {
                sink.abandon();
                if failure.is_none() {
                    failure = Some(StageFailure { stage: spec.name, source });
                }
            }
        }
    }
    ws.save_manifest()?;
    match failure {
        None => Ok(()),
        Some(fail) => Err(anyhow!(fail)),
    }
}

fn stage_is_current(ws: &Workspace, name: &str, key: &str) -> bool {
    let Some(entry) = ws.manifest.stages.get(name) else {
        return false;
    };
    if entry.key != key {
        return false;
    }
    entry.outputs.iter().all(|(rel, digest)| {
        digest_file(&ws.abs(rel)).map(|d| &d == digest).unwrap_or(false)
    })
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = tmp_path(path);
    fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("cannot move {} into place", tmp.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_runs_once_then_caches() {
        let dir = tempfile::tempdir().unwrap();
        let mut ws = Workspace::open(dir.path()).unwrap();
        let spec = || vec![StageSpec::new("demo", vec!["input=abc".to_string()])];
        run_stage_batch(&mut ws, spec(), 1, |_, sink| sink.write("out.txt", "hello")).unwrap();
        assert_eq!(fs::read_to_string(ws.abs("out.txt")).unwrap(), "hello");
        assert!(ws.manifest.stages.contains_key("demo"));

        // Identical key: the closure must not run again.
        run_stage_batch(&mut ws, spec(), 1, |_, _| panic!("should be cached")).unwrap();

        // Changed key: runs again.
        let changed = vec![StageSpec::new("demo", vec!["input=xyz".to_string()])];
        run_stage_batch(&mut ws, changed, 1, |_, sink| sink.write("out.txt", "bye")).unwrap();
        assert_eq!(fs::read_to_string(ws.abs("out.txt")).unwrap(), "bye");
    }

    #[test]
    fn edited_output_invalidates_the_cache() {
        let dir = tempfile::tempdir().unwrap();
        let mut ws = Workspace::open(dir.path()).unwrap();
        let spec = || vec![StageSpec::new("demo", vec!["input=abc".to_string()])];
        run_stage_batch(&mut ws, spec(), 1, |_, sink| sink.write("out.txt", "hello")).unwrap();
        fs::write(ws.abs("out.txt"), "tampered").unwrap();
        let ran = std::sync::atomic::AtomicBool::new(false);
        run_stage_batch(&mut ws, spec(), 1, |_, sink| {
            ran.store(true, std::sync::atomic::Ordering::SeqCst);
            sink.write("out.txt", "hello")
        })
        .unwrap();
        assert!(ran.load(std::sync::atomic::Ordering::SeqCst));
    }

    #[test]
    fn failing_stage_leaves_partial_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut ws = Workspace::open(dir.path()).unwrap();
        let specs = vec![StageSpec::new("boom", vec![])];
        let err = run_stage_batch(&mut ws, specs, 1, |_, sink| {
            sink.write("partial.csv", "half-done")?;
            Err(anyhow!("deliberate"))
        })
        .unwrap_err();
        let failure = err.downcast_ref::<StageFailure>().unwrap();
        assert_eq!(failure.stage, "boom");
        assert!(ws.abs("partial.csv.partial").exists());
        assert!(!ws.abs("partial.csv").exists());
        assert!(!ws.manifest.stages.contains_key("boom"));
    }
}
