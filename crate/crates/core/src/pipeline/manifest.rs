use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Counts, PipelineConfig, PipelineError, Stage, FAILED_MARKER};
use crate::io_util::write_atomic;

pub const MANIFEST_FILE: &str = "manifest.json";
/// Wall-clock timings live apart from the manifest so the manifest only
/// changes when outputs do.
pub const TIMINGS_FILE: &str = "timings.json";

/// Config keys naming paths. Their values depend on where a run happens, so
/// the echo records content hashes instead.
const PATH_KEYS: [&str; 5] = ["users", "reviews", "businesses", "out_dir", "orientations"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, String>,
    pub seed: u64,
    pub stages: Vec<String>,
    pub counts: Counts,
    /// Relative path to sha256 of every artifact in the output directory.
    pub artifacts: BTreeMap<String, String>,
    pub outputs_hash: String,
}

impl Manifest {
    pub fn load(out_dir: &Path) -> Result<Self, PipelineError> {
        let p = out_dir.join(MANIFEST_FILE);
        let bytes = std::fs::read(&p).map_err(|e| PipelineError::Data(format!("{}: {e}", p.display())))?;
        serde_json::from_slice(&bytes).map_err(|e| PipelineError::Data(format!("{}: {e}", p.display())))
    }

    pub fn count(&self, key: &str) -> Option<&serde_json::Value> {
        self.counts.get(key)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_hash(path: &Path) -> String {
    std::fs::read(path).map_or_else(|e| format!("unreadable: {e}"), |b| sha256_hex(&b))
}

fn collect(dir: &Path, prefix: &str, out: &mut BTreeMap<String, String>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') {
            continue;
        }
        let rel = if prefix.is_empty() { name.clone() } else { format!("{prefix}/{name}") };
        if prefix.is_empty() && [MANIFEST_FILE, TIMINGS_FILE, FAILED_MARKER].contains(&name.as_str()) {
            continue;
        }
        let ty = entry.file_type()?;
        if ty.is_dir() {
            collect(&entry.path(), &rel, out)?;
        } else if ty.is_file() {
            out.insert(rel, file_hash(&entry.path()));
        }
    }
    Ok(())
}

pub fn hash_artifacts(out_dir: &Path) -> std::io::Result<(BTreeMap<String, String>, String)> {
    let mut artifacts = BTreeMap::new();
    collect(out_dir, "", &mut artifacts)?;
    let mut h = Sha256::new();
    for (name, digest) in &artifacts {
        h.update(name.as_bytes());
        h.update([0]);
        h.update(digest.as_bytes());
        h.update(b"\n");
    }
    Ok((artifacts, hex::encode(h.finalize())))
}

fn config_echo(config: &PipelineConfig) -> BTreeMap<String, String> {
    let mut echo: BTreeMap<String, String> = config
        .to_pairs()
        .into_iter()
        .filter(|(k, _)| !PATH_KEYS.contains(&k.as_str()))
        .collect();
    echo.insert(
        "orientations".into(),
        config.orientations.as_ref().map_or("default".into(), |p| file_hash(p)),
    );
    echo
}

/// Merges one finished stage into the manifest and timings files.
pub(super) fn record(
    out_dir: &Path,
    config: &PipelineConfig,
    stage: Stage,
    counts: &Counts,
    seconds: f64,
) -> Result<(), PipelineError> {
    let internal = |e: &dyn std::fmt::Display| PipelineError::Internal(format!("manifest: {e}"));
    let mut manifest = if out_dir.join(MANIFEST_FILE).is_file() {
        Manifest::load(out_dir)?
    } else {
        Manifest::default()
    };
    manifest.config = config_echo(config);
    manifest.seed = config.seed;
    if stage == Stage::Ingest {
        manifest.inputs.clear();
        for (key, path) in [("users", &config.users), ("reviews", &config.reviews), ("businesses", &config.businesses)] {
            if let Some(p) = path {
                manifest.inputs.insert(key.to_string(), file_hash(p));
            }
        }
    }
    let mut stages: Vec<Stage> = manifest.stages.iter().filter_map(|s| s.parse().ok()).collect();
    stages.push(stage);
    stages.sort();
    stages.dedup();
    manifest.stages = stages.iter().map(|s| s.to_string()).collect();
    manifest.counts.extend(counts.clone());
    let (artifacts, outputs_hash) = hash_artifacts(out_dir).map_err(|e| internal(&e))?;
    manifest.artifacts = artifacts;
    manifest.outputs_hash = outputs_hash;
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| internal(&e))?;
    bytes.push(b'\n');
    write_atomic(&out_dir.join(MANIFEST_FILE), &bytes).map_err(|e| internal(&e))?;

    let timings_path = out_dir.join(TIMINGS_FILE);
    let mut timings: BTreeMap<String, f64> = std::fs::read(&timings_path)
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok())
        .unwrap_or_default();
    timings.insert(stage.to_string(), seconds);
    let bytes = serde_json::to_vec_pretty(&timings).map_err(|e| internal(&e))?;
    write_atomic(&timings_path, &bytes).map_err(|e| internal(&e))?;
    Ok(())
}
