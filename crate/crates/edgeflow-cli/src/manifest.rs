//! Run manifests: every invocation — pass, scientific failure, or
//! operational failure after the configuration parsed — leaves a
//! `manifest.json` describing what ran, what was written, and why it
//! stopped.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct Manifest {
    /// Bumped whenever the manifest layout changes incompatibly.
    pub manifest_schema: u32,
    pub version: &'static str,
    pub scenario: String,
    pub seed: u64,
    /// The normalized configuration document the run used.
    pub config: BTreeMap<String, String>,
    pub wall_time_ms: u128,
    /// Every file the run emitted, relative to the output directory.
    pub files: Vec<String>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Collects result files as a scenario produces them, then seals the run
/// into a manifest.
pub struct RunRecorder {
    out_dir: PathBuf,
    scenario: String,
    seed: u64,
    config: BTreeMap<String, String>,
    files: Vec<String>,
    started: Instant,
}

impl RunRecorder {
    pub fn new(
        out_dir: &Path,
        scenario: &str,
        seed: u64,
        config: BTreeMap<String, String>,
    ) -> Self {
        RunRecorder {
            out_dir: out_dir.to_path_buf(),
            scenario: scenario.to_string(),
            seed,
            config,
            files: Vec::new(),
            started: Instant::now(),
        }
    }

    /// Writes a result file atomically and records it in the manifest.
    pub fn write_file(&mut self, name: &str, contents: &str) -> std::io::Result<()> {
        write_atomic(&self.out_dir.join(name), contents.as_bytes())?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Serializes a result value to pretty JSON and records the file.
    pub fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        text.push('\n');
        self.write_file(name, &text)
    }

    /// Seals the run: writes `manifest.json` (atomically, last) and returns
    /// the process exit code — 0 for a pass, 2 for a scientific failure, 1
    /// for an operational one.
    pub fn finish(self, outcome: Outcome) -> u8 {
        let (pass, failure, code) = match outcome {
            Outcome::Pass => (true, None, 0),
            Outcome::ScientificFailure(reason) => (false, Some(reason), 2),
            Outcome::OperationalFailure(reason) => (false, Some(reason), 1),
        };
        let manifest = Manifest {
            manifest_schema: 1,
            version: env!("CARGO_PKG_VERSION"),
            scenario: self.scenario,
            seed: self.seed,
            config: self.config,
            wall_time_ms: self.started.elapsed().as_millis(),
            files: self.files,
            pass,
            failure,
        };
        let path = self.out_dir.join("manifest.json");
        match serde_json::to_string_pretty(&manifest) {
            Ok(mut text) => {
                text.push('\n');
                if let Err(e) = write_atomic(&path, text.as_bytes()) {
                    eprintln!("error: failed to write {}: {e}", path.display());
                    return 1;
                }
            }
            Err(e) => {
                eprintln!("error: failed to serialize manifest: {e}");
                return 1;
            }
        }
        code
    }
}

#[derive(Debug)]
pub enum Outcome {
    Pass,
    /// The run completed but the science said no (infeasible geometry, no
    /// contraction, a tolerance breached).
    ScientificFailure(String),
    /// The machinery itself failed (I/O, invalid state).
    OperationalFailure(String),
}

/// Write-to-temp-then-rename so readers never observe a half-written file.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("file"),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
