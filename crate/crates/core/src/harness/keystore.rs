use std::path::{Path, PathBuf};

use crate::watermark::WatermarkKey;
use crate::{Error, Result};

/// Key files stored as `<root>/keys/<fingerprint>.json`.
#[derive(Debug, Clone)]
pub struct KeyStore {
    dir: PathBuf,
}

impl KeyStore {
    pub fn new(root: impl AsRef<Path>) -> Self {
        KeyStore {
            dir: root.as_ref().join("keys"),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, fingerprint: &str) -> PathBuf {
        self.dir.join(format!("{fingerprint}.json"))
    }

    pub fn save(&self, key: &WatermarkKey) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.path_for(&key.fingerprint());
        std::fs::write(&path, key.to_json()?)?;
        Ok(path)
    }

    /// Loads and checksum-validates a key; the file name must match its fingerprint.
    pub fn load(&self, fingerprint: &str) -> Result<WatermarkKey> {
        let key = load_key_file(&self.path_for(fingerprint))?;
        if key.fingerprint() != fingerprint {
            return Err(Error::Checksum(format!(
                "file for {fingerprint} holds key {}",
                key.fingerprint()
            )));
        }
        Ok(key)
    }

    pub fn list(&self) -> Result<Vec<String>> {
        if !self.dir.exists() {
            return Ok(Vec::new());
        }
        let mut out: Vec<String> = std::fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".json").map(str::to_owned)
            })
            .collect();
        out.sort();
        Ok(out)
    }
}

pub fn load_key_file(path: &Path) -> Result<WatermarkKey> {
    WatermarkKey::from_json(&std::fs::read_to_string(path)?)
}
