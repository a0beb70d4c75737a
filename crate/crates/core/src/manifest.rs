//! JSON manifests that record what a command did and what it produced.
//!
//! Paths inside a manifest are relative to the directory holding it.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::GeneratorSpec;
use crate::error::{Error, Result};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Hex SHA-256 of a file's bytes.
pub fn fingerprint(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricFile {
    pub path: PathBuf,
    /// Header line, which doubles as the schema version.
    pub schema: String,
}

/// Written next to a generated dataset as `<file>.manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub tool: String,
    pub version: String,
    pub generator: GeneratorSpec,
    pub sha256: String,
    pub rows: usize,
}

impl DatasetManifest {
    pub fn sidecar_path(dataset: &Path) -> PathBuf {
        let mut name = dataset.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        dataset.with_file_name(name)
    }

    pub fn write_for(&self, dataset: &Path) -> Result<()> {
        write_json(&Self::sidecar_path(dataset), self)
    }

    /// `Ok(None)` when the dataset has no sidecar.
    pub fn read_for(dataset: &Path) -> Result<Option<Self>> {
        let path = Self::sidecar_path(dataset);
        if !path.exists() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// `ok` or `failed`.
    pub status: String,
    pub error: Option<String>,
    /// Every config key with its text value.
    pub config: BTreeMap<String, String>,
    pub class_conditional: Option<u8>,
    pub datasets: Vec<DatasetRecord>,
    pub generator: Option<GeneratorSpec>,
    pub checkpoints: Vec<PathBuf>,
    pub metrics: Vec<MetricFile>,
    /// Seconds per phase.
    pub timings: BTreeMap<String, f64>,
    pub notices: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            status: "ok".into(),
            ..Default::default()
        }
    }

    pub fn file_name() -> &'static str {
        "manifest.json"
    }

    /// Writes `dir/manifest.json` after checking that every referenced
    /// checkpoint and metrics file exists.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let referenced = self
            .checkpoints
            .iter()
            .chain(self.metrics.iter().map(|m| &m.path));
        for rel in referenced {
            if !dir.join(rel).is_file() {
                return Err(Error::Schema(format!(
                    "manifest references missing file {}",
                    dir.join(rel).display()
                )));
            }
        }
        write_json(&dir.join(Self::file_name()), self)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        read_json(&dir.join(Self::file_name()))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Schema(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line() as u64,
        detail: format!("{}: {e}", path.display()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::ToySpec;

    #[test]
    fn fingerprint_is_sha256() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        fs::write(&p, "abc").unwrap();
        assert_eq!(
            fingerprint(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert!(matches!(
            fingerprint(dir.path().join("missing")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn manifest_round_trip_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new("train");
        m.generator = Some(GeneratorSpec::Toy(ToySpec::new(10, 2)));
        m.config.insert("lambda".into(), "50".into());
        m.timings.insert("train".into(), 1.5);
        m.write(dir.path()).unwrap();
        assert_eq!(RunManifest::read(dir.path()).unwrap(), m);

        m.checkpoints.push("checkpoints/classifier.ckpt".into());
        assert!(matches!(m.write(dir.path()), Err(Error::Schema(_))));
    }

    #[test]
    fn sidecar_path_appends_suffix() {
        assert_eq!(
            DatasetManifest::sidecar_path(Path::new("out/toy.csv")),
            Path::new("out/toy.csv.manifest.json")
        );
    }
}
