//! Manifests recorded next to every produced artifact.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const TOOL_NAME: &str = "menorm";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// `SOURCE_DATE_EPOCH` wins over the wall clock, for reproducible manifests.
fn now_unix() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.trim().parse().ok()) {
        return t;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Provenance of one pipeline stage run. `created_at_unix` is the only
/// non-deterministic field in any artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub stage: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kb_hash: Option<String>,
    pub parameters: Value,
    pub created_at_unix: u64,
}

impl RunManifest {
    pub fn new(stage: &str, parameters: Value) -> Self {
        Self {
            tool: TOOL_NAME.into(),
            tool_version: TOOL_VERSION.into(),
            stage: stage.into(),
            config_digest: None,
            kb_hash: None,
            parameters,
            created_at_unix: now_unix(),
        }
    }

    pub fn with_kb_hash(mut self, kb_hash: impl Into<String>) -> Self {
        self.kb_hash = Some(kb_hash.into());
        self
    }

    pub fn with_config_digest(mut self, digest: impl Into<String>) -> Self {
        self.config_digest = Some(digest.into());
        self
    }

    /// Sidecar path for a single-file artifact: `out.jsonl` → `out.jsonl.manifest.json`.
    pub fn sidecar_path(artifact: &Path) -> std::path::PathBuf {
        let mut name = artifact.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        artifact.with_file_name(name)
    }

    pub fn write_sidecar(&self, artifact: &Path) -> Result<()> {
        write_json(&Self::sidecar_path(artifact), self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// `manifest.json` at the root of an index directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub format_version: u32,
    pub kind: String,
    pub kb_hash: String,
    pub n_rows: usize,
    pub params: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunManifest>,
}

impl IndexManifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn read(dir: &Path) -> Result<Self> {
        read_json(&dir.join(Self::FILE))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(Self::FILE), self)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("manifest serializes");
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Little-endian flat arrays used by index directories.
pub(crate) mod binio {
    use std::path::Path;

    use crate::error::{Error, Result};

    macro_rules! le_array {
        ($write:ident, $read:ident, $t:ty, $width:expr) => {
            pub fn $write(path: &Path, values: &[$t]) -> Result<()> {
                let mut buf = Vec::with_capacity(values.len() * $width);
                for v in values {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
                std::fs::write(path, buf).map_err(|e| Error::io(path, e))
            }

            pub fn $read(path: &Path) -> Result<Vec<$t>> {
                let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
                if buf.len() % $width != 0 {
                    return Err(Error::IndexFormat(format!(
                        "{}: length {} is not a multiple of {}",
                        path.display(),
                        buf.len(),
                        $width
                    )));
                }
                Ok(buf
                    .chunks_exact($width)
                    .map(|c| <$t>::from_le_bytes(c.try_into().expect("chunk width")))
                    .collect())
            }
        };
    }

    le_array!(write_f64, read_f64, f64, 8);
    le_array!(write_f32, read_f32, f32, 4);
    le_array!(write_u64, read_u64, u64, 8);
    le_array!(write_u32, read_u32, u32, 4);
}
