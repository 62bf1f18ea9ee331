//! Flag and config-file resolution. A config file holds `key = value`
//! lines (`#` starts a comment); keys are the long flag names, with `-` or
//! `_`. Flags win over the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cullsim::process::{geometric_checkpoints, DEFAULT_LAZY_BATCH_MIN};
use cullsim::{IntegerLaw, ModelConfig};

use crate::args::{Format, LawArgs, SimArgs};
use crate::error::CliError;

/// Population size above which the snapshot is skipped unless raised.
pub const DEFAULT_SNAPSHOT_LIMIT: u64 = 20_000_000;
pub const THREADS_ENV: &str = "CULLSIM_THREADS";

const KNOWN_KEYS: &[&str] = &[
    "p",
    "birth",
    "death",
    "steps",
    "seed",
    "eps",
    "checkpoints",
    "bound_m",
    "lazy_min",
    "out",
    "format",
    "no_snapshot",
    "snapshot_limit",
    "reps",
    "threads",
    "p_grid",
    "walk",
    "f",
    "n_max",
    "walks",
];

#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
            let key = key.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(format!("line {}: unknown key '{key}'", i + 1));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| CliError::Config(format!("config key {key}: cannot parse '{v}'")))
            })
            .transpose()
    }
}

/// `flag`, else the file's `key`.
pub fn pick<T: FromStr>(
    flag: Option<T>,
    file: &FileConfig,
    key: &str,
) -> Result<Option<T>, CliError> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => file.get(key),
    }
}

pub fn require<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Config(format!("missing --{flag}")))
}

pub fn parse_law(spec: &str) -> Result<IntegerLaw, CliError> {
    spec.parse()
        .map_err(|e| CliError::Config(format!("law '{spec}': {e}")))
}

pub struct Laws {
    pub p: Option<f64>,
    pub birth: IntegerLaw,
    pub death: IntegerLaw,
}

pub fn resolve_laws(args: &LawArgs, file: &FileConfig) -> Result<Laws, CliError> {
    let birth: String = require(pick(args.birth.clone(), file, "birth")?, "birth")?;
    let death: String = require(pick(args.death.clone(), file, "death")?, "death")?;
    Ok(Laws {
        p: pick(args.p, file, "p")?,
        birth: parse_law(&birth)?,
        death: parse_law(&death)?,
    })
}

pub fn parse_checkpoints(spec: &str, horizon: u64) -> Result<Vec<u64>, CliError> {
    if spec.trim() == "geometric" {
        return Ok(geometric_checkpoints(horizon));
    }
    spec.split(',')
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| CliError::Config(format!("checkpoint '{t}' is not an integer")))
        })
        .collect()
}

fn parse_lazy_min(spec: &str) -> Result<Option<u64>, CliError> {
    match spec.trim() {
        "off" | "none" => Ok(None),
        t => t.parse::<u64>().map(Some).map_err(|_| {
            CliError::Config(format!("lazy-min '{t}' is neither an integer nor 'off'"))
        }),
    }
}

/// Everything a simulate/ensemble run needs.
#[derive(Clone, Debug)]
pub struct RunSettings {
    pub config: ModelConfig,
    pub out: PathBuf,
    pub format: Format,
    pub snapshot: bool,
    pub snapshot_limit: u64,
}

/// Resolves the model flags. `p_override` replaces `--p` (sweeps).
pub fn resolve_run(
    args: &SimArgs,
    file: &FileConfig,
    p_override: Option<f64>,
) -> Result<RunSettings, CliError> {
    let laws = resolve_laws(&args.laws, file)?;
    let p = require(p_override.or(laws.p), "p")?;
    let steps: u64 = require(pick(args.steps, file, "steps")?, "steps")?;
    let seed: u64 = pick(args.seed, file, "seed")?.unwrap_or(0);
    let mut config = ModelConfig::new(p, laws.birth, laws.death, steps, seed)?;
    if let Some(eps) = pick(args.eps, file, "eps")? {
        config = config.with_eps(eps)?;
    }
    if let Some(spec) = pick::<String>(args.checkpoints.clone(), file, "checkpoints")? {
        config = config.with_checkpoints(parse_checkpoints(&spec, steps)?)?;
    }
    if let Some(m) = pick(args.bound_m, file, "bound_m")? {
        config = config.with_bound_m(Some(m))?;
    }
    let lazy = match pick::<String>(args.lazy_min.clone(), file, "lazy_min")? {
        Some(spec) => parse_lazy_min(&spec)?,
        None => Some(DEFAULT_LAZY_BATCH_MIN),
    };
    config = config.with_lazy_batch_min(lazy)?;

    let out: PathBuf = require(pick(args.out.clone(), file, "out")?, "out")?;
    let format = match args.format {
        Some(f) => f,
        None => match file.get::<String>("format")?.as_deref() {
            None | Some("csv") => Format::Csv,
            Some("record") => Format::Record,
            Some(other) => return Err(CliError::Config(format!("unknown format '{other}'"))),
        },
    };
    let no_snapshot = args.no_snapshot || file.get::<bool>("no_snapshot")?.unwrap_or(false);
    Ok(RunSettings {
        config,
        out,
        format,
        snapshot: !no_snapshot,
        snapshot_limit: pick(args.snapshot_limit, file, "snapshot_limit")?
            .unwrap_or(DEFAULT_SNAPSHOT_LIMIT),
    })
}

/// Flag, then config file, then the environment, then every core.
pub fn resolve_threads(flag: Option<usize>, file: &FileConfig) -> Result<usize, CliError> {
    if let Some(t) = pick(flag, file, "threads")? {
        return positive_threads(t);
    }
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let t = v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{THREADS_ENV}='{v}' is not a thread count")))?;
        return positive_threads(t);
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn positive_threads(t: usize) -> Result<usize, CliError> {
    if t == 0 {
        Err(CliError::Config("thread count must be positive".into()))
    } else {
        Ok(t)
    }
}

/// `lo:hi:step`, inclusive of `hi` up to rounding. Returns the values and
/// the number of decimals used to label them.
pub fn parse_grid(spec: &str) -> Result<(Vec<f64>, usize), CliError> {
    let bad = || {
        CliError::Config(format!(
            "p-grid '{spec}' must be lo:hi:step with 0 < lo <= hi < 1, step > 0"
        ))
    };
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|t| t.parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let (lo, hi, step) = (nums[0], nums[1], nums[2]);
    if !(lo > 0.0 && lo <= hi && hi < 1.0 && step > 0.0) {
        return Err(bad());
    }
    let decimals = parts
        .iter()
        .map(|t| t.split_once('.').map_or(0, |(_, d)| d.len()))
        .max()
        .unwrap_or(0)
        .max(2);
    let count = ((hi - lo) / step + 1e-9).floor() as u64 + 1;
    let values = (0..count)
        .map(|i| {
            let v = lo + i as f64 * step;
            format!("{v:.decimals$}")
                .parse::<f64>()
                .expect("formatted number")
        })
        .collect();
    Ok((values, decimals))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let (g, d) = parse_grid("0.2:0.8:0.1").unwrap();
        assert_eq!(g, vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
        assert_eq!(d, 2);
        let (g, d) = parse_grid("0.5:0.5:0.125").unwrap();
        assert_eq!(g, vec![0.5]);
        assert_eq!(d, 3);
        assert!(parse_grid("0.8:0.2:0.1").is_err());
        assert!(parse_grid("0.2:0.8").is_err());
        assert!(parse_grid("0:0.8:0.1").is_err());
    }

    #[test]
    fn config_file_syntax() {
        let f = FileConfig::parse("# comment\np = 0.6\nbirth=pois1:1.0 # trailing\nbound-m = 3\n")
            .unwrap();
        assert_eq!(f.get::<f64>("p").unwrap(), Some(0.6));
        assert_eq!(
            f.get::<String>("birth").unwrap().as_deref(),
            Some("pois1:1.0")
        );
        assert_eq!(f.get::<u64>("bound_m").unwrap(), Some(3));
        assert!(f.get::<u64>("p").is_err());
        assert!(FileConfig::parse("colour = red").is_err());
        assert!(FileConfig::parse("p 0.5").is_err());
    }

    #[test]
    fn flags_override_file() {
        let f = FileConfig::parse("seed = 4").unwrap();
        assert_eq!(pick(Some(9u64), &f, "seed").unwrap(), Some(9));
        assert_eq!(pick(None::<u64>, &f, "seed").unwrap(), Some(4));
        assert_eq!(pick(None::<u64>, &f, "steps").unwrap(), None);
    }

    #[test]
    fn checkpoint_specs() {
        assert_eq!(parse_checkpoints("geometric", 5).unwrap(), vec![1, 2, 4, 5]);
        assert_eq!(parse_checkpoints("3, 7,9", 10).unwrap(), vec![3, 7, 9]);
        assert!(parse_checkpoints("3,x", 10).is_err());
    }
}
