//! Run manifests: enough to re-run a command and check its outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{internal, invalid, CliError};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub frame_bank_version: u32,
    pub command: String,
    /// Command-line arguments after the program name, minus `--out`.
    pub args: Vec<String>,
    /// Input path as given on the command line -> sha256.
    pub inputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    /// Output file name relative to the output directory -> sha256.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Drops `--out DIR` / `--out=DIR` so the manifest is independent of where
/// outputs were written.
pub fn strip_out(args: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--out" {
            it.next();
        } else if !a.starts_with("--out=") {
            out.push(a.clone());
        }
    }
    out
}

fn output_hashes(dir: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut files = BTreeMap::new();
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        let entries = std::fs::read_dir(dir.join(&rel)).map_err(|e| internal(format!("{}: {e}", dir.display())))?;
        for entry in entries {
            let entry = entry.map_err(internal)?;
            let name = rel.join(entry.file_name());
            if entry.file_type().map_err(internal)?.is_dir() {
                stack.push(name);
            } else if name != Path::new(MANIFEST_FILE) {
                let key = name.to_string_lossy().replace('\\', "/");
                files.insert(key, sha256_file(&entry.path())?);
            }
        }
    }
    Ok(files)
}

impl Manifest {
    pub fn collect(
        command: &str,
        args: &[String],
        inputs: &[PathBuf],
        seed: Option<u64>,
        out_dir: &Path,
    ) -> Result<Self, CliError> {
        let inputs = inputs
            .iter()
            .map(|p| Ok((p.to_string_lossy().into_owned(), sha256_file(p)?)))
            .collect::<Result<_, CliError>>()?;
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            frame_bank_version: phenotrace_core::synth::FRAME_BANK_VERSION,
            command: command.into(),
            args: strip_out(args),
            inputs,
            seed,
            outputs: output_hashes(out_dir)?,
        })
    }

    pub fn write(&self, out_dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).map_err(internal)?;
        text.push('\n');
        std::fs::write(out_dir.join(MANIFEST_FILE), text).map_err(internal)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = crate::io::read_text(path)?;
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn check_inputs(&self) -> Result<(), CliError> {
        for (path, hash) in &self.inputs {
            let now = sha256_file(Path::new(path))?;
            if &now != hash {
                return Err(invalid(format!("input `{path}` changed since the manifest was written")));
            }
        }
        Ok(())
    }

    /// Output files whose hash differs from `out_dir`, plus missing and extra files.
    pub fn diff_outputs(&self, out_dir: &Path) -> Result<Vec<String>, CliError> {
        let now = output_hashes(out_dir)?;
        let mut diff = Vec::new();
        for (name, hash) in &self.outputs {
            match now.get(name) {
                Some(h) if h == hash => {}
                Some(_) => diff.push(format!("{name}: content differs")),
                None => diff.push(format!("{name}: missing")),
            }
        }
        diff.extend(now.keys().filter(|k| !self.outputs.contains_key(*k)).map(|k| format!("{k}: unexpected")));
        Ok(diff)
    }
}
