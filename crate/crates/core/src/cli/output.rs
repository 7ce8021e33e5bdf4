//! Files written by the subcommands. Every CSV starts with `#` lines naming
//! the tool version, the config hash and the seed; JSON files carry the
//! same block under `"meta"`.

use crate::error::Result;
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub scenario: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Metadata {
    fn write_header(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "# {} {}", self.tool, self.version)?;
        writeln!(out, "# command: {}", self.command)?;
        writeln!(out, "# scenario: {}", self.scenario)?;
        writeln!(out, "# config_sha256: {}", self.config_sha256)?;
        writeln!(out, "# seed: {}", self.seed)
    }
}

pub struct OutputDir {
    root: PathBuf,
    meta: Metadata,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path, meta: Metadata) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), meta, written: Vec::new() })
    }

    pub fn meta(&self) -> &Metadata {
        &self.meta
    }

    /// Writes the metadata block, then whatever `body` emits.
    pub fn csv(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<PathBuf> {
        let path = self.root.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        self.meta.write_header(&mut w)?;
        body(&mut w)?;
        w.flush()?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, data: &T) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Envelope<'a, T> {
            meta: &'a Metadata,
            data: &'a T,
        }
        let path = self.root.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, &Envelope { meta: &self.meta, data })?;
        writeln!(w)?;
        w.flush()?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}
