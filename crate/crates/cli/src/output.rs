use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Collects output files and writes them together with `manifest.txt`.
/// Nothing time- or host-dependent goes in, so identical configurations
/// give byte-identical directories.
pub struct RunOutput {
    dir: PathBuf,
    command: &'static str,
    settings: Vec<(String, String)>,
    config: String,
    files: Vec<(String, Vec<u8>)>,
}

impl RunOutput {
    pub fn new(dir: &Path, command: &'static str) -> Self {
        RunOutput { dir: dir.to_owned(), command, settings: Vec::new(), config: String::new(), files: Vec::new() }
    }

    pub fn setting(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let value = value.to_string();
        let _ = writeln!(self.config, "{key}={value}");
        self.settings.push((key.to_owned(), value));
        self
    }

    /// Extra text that feeds the config hash without being listed.
    pub fn hash_input(&mut self, text: &str) -> &mut Self {
        self.config.push_str(text);
        self
    }

    pub fn file(&mut self, name: &str, contents: impl Into<Vec<u8>>) -> &mut Self {
        self.files.push((name.to_owned(), contents.into()));
        self
    }

    pub fn manifest(&self) -> String {
        let mut m = String::new();
        let _ = writeln!(m, "izhirv {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(m, "command = {}", self.command);
        for (k, v) in &self.settings {
            let _ = writeln!(m, "{k} = {v}");
        }
        let _ = writeln!(m, "config_sha256 = {}", sha256_hex(self.config.as_bytes()));
        for (name, bytes) in &self.files {
            let _ = writeln!(m, "file {name} sha256 = {}", sha256_hex(bytes));
        }
        m
    }

    pub fn write(&self) -> Result<()> {
        fs::create_dir_all(&self.dir).with_context(|| format!("cannot create {}", self.dir.display()))?;
        let write = |name: &str, bytes: &[u8]| {
            let path = self.dir.join(name);
            fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))
        };
        write("manifest.txt", self.manifest().as_bytes())?;
        for (name, bytes) in &self.files {
            write(name, bytes)?;
        }
        Ok(())
    }
}
