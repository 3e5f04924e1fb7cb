// SPDX-License-Identifier: MIT OR Apache-2.0

//! On-disk layout of a batch directory.
//!
//! ```text
//! <label>/manifest.json
//! <label>/<NN>_response.md      verbatim provider reply
//! <label>/<NN>_code.<ext>       first extracted block
//! <label>/<NN>_preservation.json
//! <label>/<NN>_outcome.json
//! <label>/metrics.json
//! ```

use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.json";

/// Paths for one run inside a batch directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    dir: PathBuf,
    run_index: u32,
}

impl RunPaths {
    pub fn new(dir: impl Into<PathBuf>, run_index: u32) -> Self {
        Self {
            dir: dir.into(),
            run_index,
        }
    }

    pub fn run_index(&self) -> u32 {
        self.run_index
    }

    fn file(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{:02}_{suffix}", self.run_index))
    }

    pub fn response(&self) -> PathBuf {
        self.file("response.md")
    }

    pub fn code(&self, extension: &str) -> PathBuf {
        self.file(&format!("code.{extension}"))
    }

    pub fn preservation(&self) -> PathBuf {
        self.file("preservation.json")
    }

    pub fn outcome(&self) -> PathBuf {
        self.file("outcome.json")
    }
}

/// Run indices with a persisted response, ascending.
pub fn existing_runs(dir: &Path) -> std::io::Result<Vec<u32>> {
    let mut runs = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let name = entry?.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(prefix) = name.strip_suffix("_response.md") {
            if let Ok(n) = prefix.parse::<u32>() {
                runs.push(n);
            }
        }
    }
    runs.sort_unstable();
    Ok(runs)
}
