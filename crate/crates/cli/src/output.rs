//! Run directories: data files per replication plus a manifest.

use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use cullsim::analysis::{ks_population, KsResult};
use cullsim::io::{self, format_real, write_checkpoint_file, write_event_files};
use cullsim::process::{Checkpoint, Trajectory};
use cullsim::{ModelConfig, Regime};

use crate::args::Format;
use crate::error::CliError;
use crate::settings::RunSettings;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORD_FILE: &str = "trajectory.jsonl";
pub const KS_FILE: &str = "ks.csv";
pub const KS_HEADER: &str = "lo,hi,statistic,sample_size,p_value";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub created: u64,
    pub command: String,
    pub config: ModelConfig,
    pub regime: Regime,
    pub frontier: Option<f64>,
    pub replications: u64,
    pub format: String,
    /// Birth probabilities of a sweep, one subdirectory each.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    /// Paths relative to the manifest's directory.
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, settings: &RunSettings, replications: u64) -> Self {
        let report = settings.config.report();
        Self {
            tool: "cullsim".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            created: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            command: command.into(),
            config: settings.config.clone(),
            regime: report.regime,
            frontier: report.f,
            replications,
            format: settings.format.as_str().into(),
            grid: None,
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn write(&mut self, dir: &Path, written: &[PathBuf]) -> Result<PathBuf, CliError> {
        self.outputs = written
            .iter()
            .map(|p| {
                p.strip_prefix(dir)
                    .unwrap_or(p)
                    .to_string_lossy()
                    .replace('\\', "/")
            })
            .collect();
        let path = dir.join(MANIFEST_FILE);
        let mut w = BufWriter::new(create(&path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        w.flush()?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }
}

fn create(path: &Path) -> Result<fs::File, CliError> {
    fs::File::create(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

/// Subdirectory name of replication `i` among `reps`.
pub fn rep_dir_name(i: u64, reps: u64) -> String {
    let width = reps.saturating_sub(1).to_string().len().max(3);
    format!("rep_{i:0width$}")
}

fn write_records(dir: &Path, checkpoints: &[Checkpoint]) -> Result<PathBuf, CliError> {
    let path = dir.join(RECORD_FILE);
    let mut w = BufWriter::new(create(&path)?);
    for c in checkpoints {
        serde_json::to_writer(&mut w, c)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(path)
}

pub fn write_ks(dir: &Path, lo: f64, ks: &KsResult) -> Result<PathBuf, CliError> {
    let path = dir.join(KS_FILE);
    let mut w = BufWriter::new(create(&path)?);
    writeln!(w, "{KS_HEADER}")?;
    writeln!(
        w,
        "{},{},{},{},{}",
        format_real(lo),
        format_real(1.0),
        format_real(ks.statistic),
        ks.sample_size,
        format_real(ks.p_value)
    )?;
    w.flush()?;
    Ok(path)
}

pub fn read_ks(dir: &Path) -> Result<Option<KsResult>, CliError> {
    let path = dir.join(KS_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let r = io::open(&path)?;
    let mut lines = r.lines();
    let bad = || CliError::Runtime(format!("{}: malformed", path.display()));
    if lines.next().transpose()?.as_deref() != Some(KS_HEADER) {
        return Err(bad());
    }
    let row = lines.next().transpose()?.ok_or_else(bad)?;
    let f: Vec<&str> = row.split(',').collect();
    if f.len() != 5 {
        return Err(bad());
    }
    Ok(Some(KsResult {
        statistic: f[2].parse().map_err(|_| bad())?,
        sample_size: f[3].parse().map_err(|_| bad())?,
        p_value: f[4].parse().map_err(|_| bad())?,
    }))
}

/// Writes one replication's files into `dir`; returns them and any notes.
pub fn write_replication(
    dir: &Path,
    traj: &Trajectory,
    settings: &RunSettings,
    regime: Regime,
) -> Result<(Vec<PathBuf>, Vec<String>), CliError> {
    ensure_dir(dir)?;
    let mut notes = Vec::new();
    let mut written = vec![match settings.format {
        Format::Csv => write_checkpoint_file(dir, &traj.checkpoints)?,
        Format::Record => write_records(dir, &traj.checkpoints)?,
    }];
    let size = traj.final_population.size();
    let snapshot = settings.snapshot && size <= settings.snapshot_limit;
    if settings.snapshot && !snapshot {
        notes.push(format!(
            "{}: snapshot skipped, {size} species exceed the limit {}",
            dir.display(),
            settings.snapshot_limit
        ));
    }
    written.extend(write_event_files(dir, traj, snapshot)?);
    if let Some(lo) = regime.uniform_limit_lo(traj.frontier) {
        if let Ok(ks) = ks_population(&traj.final_population, lo, 1.0) {
            written.push(write_ks(dir, lo, &ks)?);
        }
    }
    Ok((written, notes))
}

/// Checkpoints from either the CSV or the record file in `dir`.
pub fn read_checkpoints(dir: &Path) -> Result<Vec<Checkpoint>, CliError> {
    let csv = dir.join(io::TRAJECTORY_FILE);
    if csv.exists() {
        return Ok(io::read_checkpoints(io::open(&csv)?)?);
    }
    let rec = dir.join(RECORD_FILE);
    let r = io::open(&rec)?;
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| {
                CliError::Runtime(format!("{}: line {}: {e}", rec.display(), i + 1))
            })?,
        );
    }
    Ok(out)
}

pub fn is_run_dir(dir: &Path) -> bool {
    dir.join(io::TRAJECTORY_FILE).exists() || dir.join(RECORD_FILE).exists()
}
