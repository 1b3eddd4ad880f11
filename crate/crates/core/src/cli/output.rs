//! Buffered command outputs. Nothing touches the output directory until
//! every file has been rendered, so a failed command leaves no partial files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Version of every JSON document the CLI writes.
pub const SCHEMA_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the command name and its resolved configuration.
pub fn fingerprint(command: &str, config: &Value) -> String {
    let doc = serde_json::json!({ "command": command, "config": config });
    sha256_hex(&serde_json::to_vec(&doc).expect("JSON values always serialize"))
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    config_fingerprint: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Clone, Debug, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Serialize)]
struct FileRecord {
    file: String,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_fingerprint: &'a str,
    config: &'a Value,
    inputs: &'a [InputRecord],
    outputs: Vec<FileRecord>,
}

pub struct Outputs {
    command: &'static str,
    config: Value,
    fingerprint: String,
    inputs: Vec<InputRecord>,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn new<C: Serialize>(command: &'static str, config: &C) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        let fingerprint = fingerprint(command, &config);
        Ok(Self {
            command,
            config,
            fingerprint,
            inputs: Vec::new(),
            files: Vec::new(),
        })
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn config(&self) -> &Value {
        &self.config
    }

    /// Reads an input file and records its digest for the manifest.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    pub fn read_input_text(&mut self, path: &Path) -> Result<String> {
        String::from_utf8(self.read_input(path)?)
            .map_err(|_| Error::input(format!("{} is not UTF-8 text", path.display())))
    }

    /// JSON document with `schema_version` and `config_fingerprint` prepended.
    pub fn json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<()> {
        let env = Envelope {
            schema_version: SCHEMA_VERSION,
            config_fingerprint: &self.fingerprint,
            body,
        };
        let mut bytes = serde_json::to_vec_pretty(&env)?;
        bytes.push(b'\n');
        self.add(name, bytes)
    }

    /// Text file rendered by `write`.
    pub fn text<F>(&mut self, name: &str, write: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    {
        let mut bytes = Vec::new();
        write(&mut bytes).map_err(|e| Error::io(name, e))?;
        self.add(name, bytes)
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) -> Result<()> {
        if name == "manifest.json" || self.files.iter().any(|(n, _)| n == name) {
            return Err(Error::parameter(format!("output file {name} would be written twice")));
        }
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    pub fn file_names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Writes all files and the manifest into `dir`. Each file goes through a
    /// temporary name and a rename.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let outputs: Vec<FileRecord> = self
            .files
            .iter()
            .map(|(name, bytes)| FileRecord {
                file: name.clone(),
                bytes: bytes.len(),
                sha256: sha256_hex(bytes),
            })
            .collect();
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config_fingerprint: &self.fingerprint,
            config: &self.config,
            inputs: &self.inputs,
            outputs,
        };
        let mut manifest_bytes = serde_json::to_vec_pretty(&manifest)?;
        manifest_bytes.push(b'\n');

        let mut written = Vec::with_capacity(self.files.len() + 1);
        let all = self.files.iter().map(|(n, b)| (n.as_str(), b.as_slice()));
        for (name, bytes) in all.chain(std::iter::once(("manifest.json", manifest_bytes.as_slice()))) {
            let target = dir.join(name);
            let tmp = dir.join(format!(".{name}.tmp"));
            fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
            fs::rename(&tmp, &target).map_err(|e| Error::io(&target, e))?;
            written.push(target);
        }
        Ok(written)
    }
}
