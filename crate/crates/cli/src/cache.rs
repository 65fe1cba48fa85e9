//! Content-addressed result cache. Entries carry a digest of their payload and are
//! recomputed when it does not match.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the JSON encoding of `parts`.
pub fn key_of<T: Serialize>(parts: &T) -> String {
    digest(&serde_json::to_vec(parts).expect("cache key serializes"))
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    sha256: String,
    payload: String,
}

#[derive(Clone, Debug)]
pub struct Cache {
    dir: PathBuf,
    enabled: bool,
}

#[derive(Debug, PartialEq, Eq)]
pub enum Lookup<T> {
    Hit(T),
    Miss,
    /// The file existed but failed its checks.
    Corrupt,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>, enabled: bool) -> Self {
        Cache { dir: dir.into(), enabled }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn load<T: DeserializeOwned>(&self, key: &str) -> Lookup<T> {
        if !self.enabled {
            return Lookup::Miss;
        }
        let Ok(text) = fs::read_to_string(self.path(key)) else {
            return Lookup::Miss;
        };
        let Ok(entry) = serde_json::from_str::<Entry>(&text) else {
            return Lookup::Corrupt;
        };
        if entry.key != key || entry.sha256 != digest(entry.payload.as_bytes()) {
            return Lookup::Corrupt;
        }
        match serde_json::from_str(&entry.payload) {
            Ok(v) => Lookup::Hit(v),
            Err(_) => Lookup::Corrupt,
        }
    }

    pub fn store<T: Serialize>(&self, key: &str, value: &T) -> std::io::Result<()> {
        if !self.enabled {
            return Ok(());
        }
        let payload = serde_json::to_string(value)?;
        let entry = Entry { key: key.to_string(), sha256: digest(payload.as_bytes()), payload };
        write_atomic(&self.path(key), serde_json::to_string(&entry)?.as_bytes())
    }
}

/// Writes through a temporary file in the same directory and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
