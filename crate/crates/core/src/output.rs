//! Run directories: every file written through [`RunDir`] is recorded with its
//! SHA-256 so the closing manifest can list it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Fixed scientific notation used in every CSV.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.12e}")
}

/// `coef * exp(ln_abs)` written without underflowing: below `e^-700` the
/// decimal exponent is computed from the logarithm, so `exp(-3e7)` prints as
/// `1.2...e-13028681` instead of `0`.
pub fn fmt_scaled(ln_abs: f64, coef: f64) -> String {
    if coef == 0.0 || ln_abs == f64::NEG_INFINITY {
        return fmt_f64(0.0);
    }
    if ln_abs > -700.0 {
        return fmt_f64(coef * ln_abs.exp());
    }
    let log10 = ln_abs / std::f64::consts::LN_10 + coef.abs().log10();
    let mut exponent = log10.floor();
    let mut mantissa = 10f64.powf(log10 - exponent);
    if mantissa >= 9.999_999_999_999_5 {
        mantissa /= 10.0;
        exponent += 1.0;
    }
    let sign = if coef < 0.0 { "-" } else { "" };
    format!("{sign}{mantissa:.12}e{exponent:.0}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output directory of one run.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl RunDir {
    pub fn create(root: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(root.as_ref())?;
        Ok(Self { root: root.as_ref().to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry { path: name.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
        Ok(())
    }

    /// Renders into memory with `render` and writes the result.
    pub fn write_with<F>(&mut self, name: &str, render: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = Vec::new();
        render(&mut buf)?;
        self.write_bytes(name, &buf)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Adopts a file written by someone else (a sweep worker) into the inventory.
    pub fn adopt(&mut self, name: &str) -> Result<()> {
        let bytes = fs::read(self.root.join(name))?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry { path: name.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) });
        Ok(())
    }

    pub fn files(&self) -> Vec<FileEntry> {
        let mut files = self.files.clone();
        files.sort_by(|a, b| a.path.cmp(&b.path));
        files
    }

    /// Writes `manifest.json` holding `body` plus the sorted file inventory.
    pub fn finish<T: Serialize>(self, body: &T) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Manifest<'a, T> {
            #[serde(flatten)]
            body: &'a T,
            files: Vec<FileEntry>,
        }
        let manifest = Manifest { body, files: self.files() };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.root.join("manifest.json");
        fs::write(&path, text)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_formatting() {
        assert_eq!(fmt_scaled(0.0, -0.5), fmt_f64(-0.5));
        assert_eq!(fmt_scaled(f64::NEG_INFINITY, 1.0), fmt_f64(0.0));
        let s = fmt_scaled(-1000.0 * std::f64::consts::LN_10, 1.0);
        assert_eq!(s, "1.000000000000e-1000");
        let s = fmt_scaled(-2.5e7, -0.25);
        assert!(s.starts_with('-') && s.contains("e-1085736"), "{s}");
    }

    #[test]
    fn manifest_lists_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = RunDir::create(dir.path().join("run")).unwrap();
        run.write_bytes("b.txt", b"abc").unwrap();
        run.write_json("a.json", &serde_json::json!({"x": 1})).unwrap();
        let files = run.files();
        assert_eq!(files[0].path, "a.json");
        assert_eq!(files[1].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        let path = run.finish(&serde_json::json!({"command": "test"})).unwrap();
        let text = fs::read_to_string(path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["command"], "test");
        assert_eq!(v["files"].as_array().unwrap().len(), 2);
    }
}
