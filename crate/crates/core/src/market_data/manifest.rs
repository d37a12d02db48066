use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::Dataset;
use super::quotes::parse_quotes;
use super::reference::{parse_instruments, parse_taxonomy};
use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

impl ManifestEntry {
    fn from_file(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Ok(Self {
            path: path.to_string_lossy().into_owned(),
            sha256: sha256_hex(&bytes),
        })
    }

    /// Reads the file (relative paths resolve against `base`) and checks its
    /// content against the recorded digest.
    fn read_verified(&self, base: &Path) -> Result<Vec<u8>> {
        let path = resolve(base, &self.path);
        let bytes = fs::read(&path)?;
        let actual = sha256_hex(&bytes);
        if actual != self.sha256 {
            return Err(Error::Checksum {
                path: path.to_string_lossy().into_owned(),
                expected: self.sha256.clone(),
                actual,
            });
        }
        Ok(bytes)
    }
}

fn resolve(base: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Lists the three source files of a dataset with a content digest each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub quotes: ManifestEntry,
    pub instruments: ManifestEntry,
    pub taxonomy: ManifestEntry,
}

impl DatasetManifest {
    pub fn from_paths(quotes: &Path, instruments: &Path, taxonomy: &Path) -> Result<Self> {
        Ok(Self {
            quotes: ManifestEntry::from_file(quotes)?,
            instruments: ManifestEntry::from_file(instruments)?,
            taxonomy: ManifestEntry::from_file(taxonomy)?,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    /// Loads the dataset, verifying every checksum first. `base` is the
    /// directory relative paths are resolved against.
    pub fn load(&self, base: &Path) -> Result<Dataset> {
        let quotes = self.quotes.read_verified(base)?;
        let instruments = self.instruments.read_verified(base)?;
        let taxonomy = self.taxonomy.read_verified(base)?;
        Dataset::build(
            parse_quotes(quotes.as_slice())?,
            parse_instruments(instruments.as_slice())?,
            parse_taxonomy(taxonomy.as_slice())?,
        )
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
    fn tampered_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let q = dir.path().join("quotes.csv");
        let i = dir.path().join("instruments.csv");
        let t = dir.path().join("taxonomy.csv");
        fs::write(&q, "date,ticker,open,high,low,close,volume\n2000-01-03,A,1,1,1,1,10\n").unwrap();
        fs::write(&i, "ticker,name,market,sector_l3,shares_outstanding\nA,a,RM,X,100\n").unwrap();
        fs::write(&t, "sector_l3,sector_l2,sector_l1\nX,Y,Z\n").unwrap();
        let manifest = DatasetManifest::from_paths(&q, &i, &t).unwrap();
        let json = manifest.to_json().unwrap();
        let back: DatasetManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back, manifest);
        assert_eq!(back.load(dir.path()).unwrap().calendar().len(), 1);

        fs::write(&q, "date,ticker,open,high,low,close,volume\n2000-01-03,A,1,1,1,1,11\n").unwrap();
        assert!(matches!(back.load(dir.path()), Err(Error::Checksum { .. })));
    }
}
