use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }
}

impl From<mvnclust::Error> for Failure {
    fn from(e: mvnclust::Error) -> Self {
        let code = if e.is_numeric() {
            EXIT_NUMERIC
        } else {
            EXIT_VALIDATION
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::validation(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::validation(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::validation(e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

/// Output directory plus the list of files written into it.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root)
            .map_err(|e| Failure::validation(format!("{}: {e}", root.display())))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.root.join(name)
    }

    pub fn create_file(&mut self, name: &str) -> CliResult<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult {
        let mut w = self.create_file(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    /// Writes `manifest.json`; call last so the output list is complete.
    pub fn finish<A: Serialize>(
        mut self,
        command: &str,
        arguments: &A,
        seeds: Vec<u64>,
        inputs: Vec<&Path>,
        started: Instant,
    ) -> CliResult {
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            arguments: serde_json::to_value(arguments)?,
            seeds,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: self.written.clone(),
            output_dir: self.root.display().to_string(),
            duration_seconds: started.elapsed().as_secs_f64(),
        };
        self.write_json("manifest.json", &manifest)
    }
}

#[derive(Debug, Serialize)]
struct Manifest {
    command: String,
    version: String,
    arguments: serde_json::Value,
    seeds: Vec<u64>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    output_dir: String,
    duration_seconds: f64,
}
