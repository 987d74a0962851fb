//! Stage file access. Every file a command writes is recorded so a failed
//! command can remove its partial outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{hex, RunConfig};
use crate::error::CliError;

pub struct Workspace {
    pub config: RunConfig,
    pub config_hash: String,
    out: PathBuf,
    input: PathBuf,
    written: Vec<PathBuf>,
}

impl Workspace {
    /// `input` defaults to `out`.
    pub fn new(config: RunConfig, out: PathBuf, input: Option<PathBuf>) -> Self {
        let config_hash = config.hash();
        Self {
            config,
            config_hash,
            input: input.unwrap_or_else(|| out.clone()),
            out,
            written: Vec::new(),
        }
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn input_path(&self, name: &str) -> PathBuf {
        self.input.join(name)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Reads from the stage input directory, or from the output directory
    /// when the file was produced earlier in this command.
    pub fn source(&self, name: &str) -> PathBuf {
        let own = self.out.join(name);
        if self.written.contains(&own) {
            own
        } else {
            self.input_path(name)
        }
    }

    pub fn read(&self, name: &str) -> Result<(PathBuf, Vec<u8>), CliError> {
        let path = self.source(name);
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        Ok((path, bytes))
    }

    pub fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<T, CliError> {
        let (path, bytes) = self.read(name)?;
        let de = &mut serde_json::Deserializer::from_slice(&bytes);
        serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::data(&path, format!("schema error at {}: {}", e.path(), e.inner())))
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))?;
        let path = self.out.join(name);
        if !self.written.contains(&path) {
            self.written.push(path.clone());
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("reports serialize");
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Removes every file written so far.
    pub fn cleanup(&mut self) {
        for path in self.written.drain(..) {
            let _ = fs::remove_file(path);
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}
