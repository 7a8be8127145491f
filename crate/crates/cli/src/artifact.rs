//! Provenance stamps and the skip-if-up-to-date check.
//!
//! Every output gets a `<name>.meta.json` sidecar with the producing tool,
//! version and run hash; JSON reports embed the same stamp under
//! `"provenance"`. A step is skipped when all its outputs carry the hash of
//! the current run.

use std::fs;
use std::path::{Path, PathBuf};

use corrner::provenance::{config_hash, digest_bytes, Provenance};
use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

pub fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

/// Hash identifying a run: subcommand, its configuration and the bytes of
/// every input file.
pub fn run_hash(command: &str, config: &impl Serialize, inputs: &[&Path]) -> Result<String, CliError> {
    let mut digests = Vec::new();
    for p in inputs {
        digests.push(input_digest(p)?);
    }
    Ok(config_hash(&(command, config, digests)))
}

fn input_digest(path: &Path) -> Result<String, CliError> {
    if path.is_dir() {
        let mut names: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| CliError::data(path.display(), e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && !p.to_string_lossy().ends_with(".meta.json"))
            .collect();
        names.sort();
        let mut parts = Vec::new();
        for n in names {
            parts.push((n.file_name().map(|s| s.to_string_lossy().into_owned()), input_digest(&n)?));
        }
        return Ok(config_hash(&parts));
    }
    let bytes = fs::read(path).map_err(|e| CliError::data(path.display(), e))?;
    Ok(digest_bytes(&bytes))
}

pub fn up_to_date(outputs: &[&Path], hash: &str) -> bool {
    outputs.iter().all(|p| {
        p.exists()
            && fs::read_to_string(sidecar(p))
                .ok()
                .and_then(|s| serde_json::from_str::<Provenance>(&s).ok())
                .is_some_and(|m| m.config_hash == hash)
    })
}

/// True when the step must run; logs the skip otherwise.
pub fn should_run(step: &str, outputs: &[&Path], hash: &str, force: bool) -> bool {
    if !force && up_to_date(outputs, hash) {
        log::warn!("{step}: outputs up to date, skipping (use --force to redo)");
        return false;
    }
    true
}

pub fn stamp(path: &Path, hash: &str) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(&Provenance::new(hash)).expect("provenance serializes");
    s.push('\n');
    fs::write(sidecar(path), s).map_err(|e| CliError::Internal(format!("{}: {e}", sidecar(path).display())))
}

pub fn create_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("{}: {e}", dir.display())))?;
    }
    Ok(())
}

/// Writes `value` as pretty JSON with an embedded provenance stamp, plus the sidecar.
pub fn write_json(path: &Path, value: &impl Serialize, hash: &str) -> Result<(), CliError> {
    let mut v = serde_json::to_value(value).expect("report serializes");
    if let Value::Object(m) = &mut v {
        m.insert(
            "provenance".into(),
            serde_json::to_value(Provenance::new(hash)).expect("provenance serializes"),
        );
    }
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    create_parent(path)?;
    fs::write(path, s).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
    stamp(path, hash)
}

/// Reads a JSON config; an absent path gives the default.
pub fn read_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::data(p.display(), e))?;
            serde_json::from_str(&text).map_err(|e| CliError::data(p.display(), e))
        }
    }
}
