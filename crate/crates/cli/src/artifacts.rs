// SPDX-License-Identifier: Apache-2.0

//! Buffered run outputs and their manifest.

use std::path::Path;

use ergo_core::config::{ExperimentConfig, ExperimentKind};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{CliResult, Failure};

#[derive(Debug, Serialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub experiment: &'static str,
    pub version: &'static str,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub artifacts: Vec<ArtifactEntry>,
}

/// Files produced by one experiment, held until the run succeeds.
#[derive(Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

impl Artifacts {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(runtime)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    /// CSV from a header and rows of numbers.
    pub fn add_table(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) {
        let mut s = header.join(",");
        s.push('\n');
        for r in rows {
            let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        self.add(name, s.into_bytes());
    }

    pub fn write(
        self,
        dir: &Path,
        kind: ExperimentKind,
        config: &[u8],
        cfg: &ExperimentConfig,
    ) -> CliResult<Manifest> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::Validation(format!("output directory {}: {e}", dir.display())))?;
        let mut entries = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            std::fs::write(dir.join(name), bytes).map_err(runtime)?;
            entries.push(ArtifactEntry {
                file: name.clone(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len(),
            });
        }
        let manifest = Manifest {
            experiment: kind.name(),
            version: ergo_core::VERSION,
            config_sha256: sha256_hex(config),
            seed: cfg
                .sim
                .as_ref()
                .map(|s| s.seed)
                .or(cfg.chain.as_ref().map(|c| c.seed)),
            artifacts: entries,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(runtime)?;
        bytes.push(b'\n');
        std::fs::write(dir.join("manifest.json"), bytes).map_err(runtime)?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn table_layout() {
        let mut a = Artifacts::default();
        a.add_table("t.csv", &["t", "v"], &[vec![0.0, 1.5], vec![1.0, 2.0]]);
        assert_eq!(a.files[0].1, b"t,v\n0,1.5\n1,2\n");
    }
}
