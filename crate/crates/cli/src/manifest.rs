use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use splitseg::digest::{digest_bytes, Digest};
use splitseg::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

/// A file or directory and its content digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub digest: String,
}

impl Artifact {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Artifact {
            path: path.to_path_buf(),
            digest: path_digest(path)?,
        })
    }
}

/// Everything needed to re-run a command and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub command: String,
    /// Arguments after the program name, exactly as parsed.
    pub argv: Vec<String>,
    pub working_dir: PathBuf,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, Artifact>,
    pub outputs: BTreeMap<String, Artifact>,
    pub wall_clock_secs: f64,
    pub tool_version: String,
}

impl RunManifest {
    pub fn path_for(primary_output: &Path) -> PathBuf {
        let mut name = primary_output
            .file_name()
            .map(|n| n.to_os_string())
            .unwrap_or_default();
        name.push(".manifest.json");
        primary_output.with_file_name(name)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| io_err(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            record: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

pub fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// SHA-256 of a file, or of every file under a directory in sorted order.
pub fn path_digest(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, &mut files)?;
        files.sort();
        let mut d = Digest::new();
        for f in files {
            let rel = f.strip_prefix(path).unwrap_or(&f).to_string_lossy().into_owned();
            d.update(rel.as_bytes());
            d.update(&fs::read(&f).map_err(|e| io_err(&f, e))?);
        }
        Ok(d.finish())
    } else {
        Ok(digest_bytes(&fs::read(path).map_err(|e| io_err(path, e))?))
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let p = entry.map_err(|e| io_err(dir, e))?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else if !p.to_string_lossy().ends_with(".manifest.json") {
            out.push(p);
        }
    }
    Ok(())
}
