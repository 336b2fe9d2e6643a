//! Output directory handling and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::Failure;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// One command's output directory; files are buffered and written in order.
pub struct OutputDir {
    dir: PathBuf,
    inputs: Vec<(String, String)>,
    files: Vec<(String, String)>,
}

impl OutputDir {
    /// Create `<root>/<command>` and make sure it accepts writes.
    pub fn prepare(root: &Path, command: &str) -> Result<Self, Failure> {
        let dir = root.join(command);
        fs::create_dir_all(&dir)
            .map_err(|e| Failure::Invalid(format!("cannot create {}: {e}", dir.display())))?;
        let probe = dir.join(".write-test");
        fs::write(&probe, b"")
            .and_then(|_| fs::remove_file(&probe))
            .map_err(|e| Failure::Invalid(format!("{} is not writable: {e}", dir.display())))?;
        Ok(Self {
            dir,
            inputs: Vec::new(),
            files: Vec::new(),
        })
    }

    pub fn input(&mut self, key: &str, value: impl ToString) {
        self.inputs.push((key.to_string(), value.to_string()));
    }

    pub fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    /// Write every file and the manifest; returns the directory.
    pub fn finish(self) -> Result<PathBuf, Failure> {
        let mut manifest = String::new();
        for (k, v) in &self.inputs {
            let _ = writeln!(manifest, "{k} = {v}");
        }
        let mut all = Sha256::new();
        for (name, contents) in &self.files {
            let path = self.dir.join(name);
            fs::write(&path, contents)
                .map_err(|e| Failure::Invalid(format!("cannot write {}: {e}", path.display())))?;
            let _ = writeln!(
                manifest,
                "output.{name} = {}",
                sha256_hex(contents.as_bytes())
            );
            all.update(name.as_bytes());
            all.update(contents.as_bytes());
        }
        let digest = sha256_hex(&all.finalize());
        let _ = writeln!(manifest, "content_sha256 = {digest}");
        let path = self.dir.join("manifest.txt");
        fs::write(&path, manifest)
            .map_err(|e| Failure::Invalid(format!("cannot write {}: {e}", path.display())))?;
        Ok(self.dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
