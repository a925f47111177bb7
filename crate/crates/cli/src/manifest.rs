use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Sidecar written next to every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario_digest: String,
    pub policy: String,
    pub seed: u64,
    pub horizon: usize,
    pub alpha: f64,
    pub version: String,
    pub outputs: Vec<String>,
    pub out_of_assumption: bool,
}

impl RunManifest {
    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    /// Fails when an existing manifest for `output` names another scenario.
    pub fn check_overwrite(&self, output: &Path, force: bool) -> Result<()> {
        let path = Self::path_for(output);
        if force || !path.exists() {
            return Ok(());
        }
        let text =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let old: RunManifest = match serde_json::from_str(&text) {
            Ok(m) => m,
            Err(_) => bail!(
                "{} is not a manifest; pass --force to overwrite",
                path.display()
            ),
        };
        if old.scenario_digest != self.scenario_digest {
            bail!(
                "{} belongs to scenario {}, not {}; pass --force to overwrite",
                path.display(),
                old.scenario_digest,
                self.scenario_digest
            );
        }
        Ok(())
    }

    pub fn write(&self, output: &Path) -> Result<()> {
        let path = Self::path_for(output);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(digest: &str) -> RunManifest {
        RunManifest {
            scenario_digest: digest.into(),
            policy: "onalgo".into(),
            seed: 1,
            horizon: 10,
            alpha: 0.1,
            version: "0.1.0".into(),
            outputs: vec!["out.csv".into()],
            out_of_assumption: false,
        }
    }

    #[test]
    fn sidecar_path_appends_suffix() {
        assert_eq!(
            RunManifest::path_for(Path::new("a/b.csv")),
            PathBuf::from("a/b.csv.manifest.json")
        );
    }

    #[test]
    fn mismatched_digest_needs_force() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out.csv");
        manifest("aaa").write(&out).unwrap();
        assert!(manifest("aaa").check_overwrite(&out, false).is_ok());
        assert!(manifest("bbb").check_overwrite(&out, false).is_err());
        assert!(manifest("bbb").check_overwrite(&out, true).is_ok());
    }
}
