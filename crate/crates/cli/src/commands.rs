use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use cullsim::analysis::{
    aggregate, gap_exponent, ks_against_uniform, summarize_extinctions, sym_diff_ratio,
    ReplicationSummary,
};
use cullsim::io::{self, format_real};
use cullsim::ladder::{tau_tail_curve, WalkSpec};
use cullsim::oracle::{compare_with_engine, random_configs};
use cullsim::population::Population;
use cullsim::process::{run_ensemble, run_replication, Trajectory};
use cullsim::{classify_regime, RegimeReport};

use crate::args::{
    AnalyzeArgs, EnsembleArgs, LadderArgs, LawArgs, SimArgs, SweepArgs, ValidateArgs, WalkArg,
};
use crate::error::CliError;
use crate::output::{
    ensure_dir, is_run_dir, read_checkpoints, read_ks, rep_dir_name, write_replication,
    RunManifest, MANIFEST_FILE,
};
use crate::settings::{
    parse_grid, pick, require, resolve_laws, resolve_run, resolve_threads, FileConfig, RunSettings,
};

fn pool(threads: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn extended(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!("inf")
    }
}

fn show_extended(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        "inf".into()
    }
}

pub fn regime(args: &LawArgs, out: &mut impl Write) -> Result<(), CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let laws = resolve_laws(args, &file)?;
    let p = require(laws.p, "p")?;
    if !(p > 0.0 && p < 1.0) {
        return Err(CliError::Config(format!(
            "p = {p} must lie strictly between 0 and 1"
        )));
    }
    let r: RegimeReport = classify_regime(p, &laws.death, &laws.birth);
    let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| x.to_string());
    let tags: Vec<&str> = r.hypotheses_used.iter().map(|h| h.tag()).collect();
    writeln!(out, "p           {}", r.p)?;
    writeln!(out, "birth       {}", laws.birth)?;
    writeln!(out, "death       {}", laws.death)?;
    writeln!(out, "mean_z      {}", show_extended(r.mean_z))?;
    writeln!(out, "mean_x      {}", show_extended(r.mean_x))?;
    writeln!(out, "p_c         {}", opt(r.p_c))?;
    writeln!(out, "f           {}", opt(r.f))?;
    writeln!(out, "regime      {}", r.regime)?;
    writeln!(out, "hypotheses  {}", tags.join("; "))?;
    let record = json!({
        "p": r.p,
        "birth": laws.birth.to_string(),
        "death": laws.death.to_string(),
        "mean_z": extended(r.mean_z),
        "mean_x": extended(r.mean_x),
        "p_c": r.p_c,
        "f": r.f,
        "regime": r.regime,
        "hypotheses_used": tags,
    });
    writeln!(out, "{record}")?;
    Ok(())
}

pub fn simulate(args: &SimArgs, out: &mut impl Write) -> Result<(), CliError> {
    let file = FileConfig::load(args.laws.config.as_deref())?;
    let settings = resolve_run(args, &file, None)?;
    ensure_dir(&settings.out)?;
    let traj = run_replication(&settings.config, 0);
    let mut manifest = RunManifest::new("simulate", &settings, 1);
    let (mut written, notes) = write_replication(&settings.out, &traj, &settings, manifest.regime)?;
    report_notes(&notes);
    manifest.notes = notes;
    let path = manifest.write(&settings.out, &written)?;
    written.push(path);
    summary_line(out, &traj)?;
    writeln!(
        out,
        "wrote {} files to {}",
        written.len(),
        settings.out.display()
    )?;
    Ok(())
}

fn report_notes(notes: &[String]) {
    for n in notes {
        eprintln!("note: {n}");
    }
}

fn summary_line(out: &mut impl Write, traj: &Trajectory) -> Result<(), CliError> {
    writeln!(
        out,
        "steps {}  size {}  extinctions {}  emptying events {}",
        traj.horizon,
        traj.final_population.size(),
        traj.extinctions.len(),
        traj.a_eps
            .as_ref()
            .map_or_else(|| "untracked".to_string(), |a| a.len().to_string())
    )?;
    Ok(())
}

/// Runs an ensemble into `settings.out`; returns the files written there.
fn run_ensemble_into(
    settings: &RunSettings,
    reps: u64,
    threads: usize,
    command: &str,
) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(&settings.out)?;
    let trajs = run_ensemble(&settings.config, reps, threads)?;
    let mut manifest = RunManifest::new(command, settings, reps);
    let regime = manifest.regime;
    let results = pool(threads)?.install(|| {
        trajs
            .par_iter()
            .enumerate()
            .map(|(i, t)| {
                let dir = settings.out.join(rep_dir_name(i as u64, reps));
                write_replication(&dir, t, settings, regime)
            })
            .collect::<Vec<_>>()
    });
    let mut written = Vec::new();
    for r in results {
        let (files, notes) = r?;
        written.extend(files);
        manifest.notes.extend(notes);
    }
    report_notes(&manifest.notes);
    let path = manifest.write(&settings.out, &written)?;
    written.push(path);
    Ok(written)
}

fn resolve_reps(flag: Option<u64>, file: &FileConfig) -> Result<u64, CliError> {
    let reps = pick(flag, file, "reps")?.unwrap_or(1);
    if reps == 0 {
        return Err(CliError::Config("--reps must be positive".into()));
    }
    Ok(reps)
}

pub fn ensemble(args: &EnsembleArgs, out: &mut impl Write) -> Result<(), CliError> {
    let file = FileConfig::load(args.sim.laws.config.as_deref())?;
    let settings = resolve_run(&args.sim, &file, None)?;
    let reps = resolve_reps(args.reps, &file)?;
    let threads = resolve_threads(args.threads, &file)?;
    let written = run_ensemble_into(&settings, reps, threads, "ensemble")?;
    writeln!(
        out,
        "{reps} replications on {threads} threads; wrote {} files to {}",
        written.len(),
        settings.out.display()
    )?;
    Ok(())
}

pub fn sweep(args: &SweepArgs, out: &mut impl Write) -> Result<(), CliError> {
    let sim = &args.ensemble.sim;
    let file = FileConfig::load(sim.laws.config.as_deref())?;
    let grid_spec: String = require(pick(args.p_grid.clone(), &file, "p_grid")?, "p-grid")?;
    let (grid, decimals) = parse_grid(&grid_spec)?;
    let reps = resolve_reps(args.ensemble.reps, &file)?;
    let threads = resolve_threads(args.ensemble.threads, &file)?;
    // resolve every point before running any, so bad configs fail fast
    let points: Vec<(f64, RunSettings)> = grid
        .iter()
        .map(|&p| {
            let mut s = resolve_run(sim, &file, Some(p))?;
            s.out = s.out.join(format!("p_{p:.decimals$}"));
            Ok((p, s))
        })
        .collect::<Result<_, CliError>>()?;
    let root = points[0]
        .1
        .out
        .parent()
        .expect("joined above")
        .to_path_buf();
    ensure_dir(&root)?;
    let mut written = Vec::new();
    for (p, settings) in &points {
        let files = run_ensemble_into(settings, reps, threads, "sweep")?;
        writeln!(
            out,
            "p = {p}: {} files in {}",
            files.len(),
            settings.out.display()
        )?;
        written.extend(files);
    }
    let mut manifest = RunManifest::new("sweep", &points[0].1, reps);
    manifest.grid = Some(grid);
    manifest.write(&root, &written)?;
    Ok(())
}

pub fn ladder(args: &LadderArgs, out: &mut impl Write) -> Result<(), CliError> {
    let file = FileConfig::load(args.laws.config.as_deref())?;
    let laws = resolve_laws(&args.laws, &file)?;
    let p = require(laws.p, "p")?;
    let walk = match (args.walk, file.get::<String>("walk")?.as_deref()) {
        (Some(w), _) => w,
        (None, None | Some("frontier")) => WalkArg::Frontier,
        (None, Some("total")) => WalkArg::Total,
        (None, Some(other)) => return Err(CliError::Config(format!("unknown walk '{other}'"))),
    };
    let spec = match walk {
        WalkArg::Frontier => match pick(args.f, &file, "f")? {
            Some(f) => WalkSpec::frontier_thinned(p, f, laws.birth, laws.death)?,
            None => WalkSpec::at_frontier(p, laws.birth, laws.death)?,
        },
        WalkArg::Total => WalkSpec::total_population(p, laws.birth, laws.death)?,
    };
    let n_max: u64 = pick(args.n_max, &file, "n_max")?.unwrap_or(100);
    let walks: u64 = pick(args.walks, &file, "walks")?.unwrap_or(100_000);
    let seed: u64 = pick(args.seed, &file, "seed")?.unwrap_or(0);
    if n_max == 0 {
        return Err(CliError::Config("--n-max must be positive".into()));
    }
    let threads = resolve_threads(args.threads, &file)?;
    let ns: Vec<u64> = (1..=n_max).collect();
    let curve = pool(threads)?.install(|| tau_tail_curve(&spec, &ns, walks, seed))?;
    let mut table = String::from("n,p_tau_ge_n,stderr,asymptote,ratio\n");
    for e in &curve {
        table.push_str(&format!(
            "{},{},{},{},{}\n",
            e.n,
            format_real(e.estimate),
            format_real(e.stderr),
            format_real(e.asymptote()),
            format_real(e.ratio())
        ));
    }
    out.write_all(table.as_bytes())?;
    if let Some(path) = pick(args.out.clone(), &file, "out")? {
        fs::write(&path, &table)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

/// Directories holding replication data under `root`, sorted.
fn run_dirs(root: &Path) -> Result<Vec<PathBuf>, CliError> {
    if is_run_dir(root) {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut found = Vec::new();
    let mut stack = vec![(root.to_path_buf(), 0)];
    while let Some((dir, depth)) = stack.pop() {
        let entries =
            fs::read_dir(&dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        for entry in entries {
            let path = entry?.path();
            if !path.is_dir() {
                continue;
            }
            if is_run_dir(&path) {
                found.push(path);
            } else if depth < 2 {
                stack.push((path, depth + 1));
            }
        }
    }
    found.sort();
    Ok(found)
}

/// Nearest manifest at or above `dir`, stopping at `root`.
fn manifest_for(dir: &Path, root: &Path) -> Result<RunManifest, CliError> {
    let mut cur = Some(dir);
    while let Some(d) = cur {
        if d.join(MANIFEST_FILE).exists() {
            return RunManifest::read(d);
        }
        if d == root {
            break;
        }
        cur = d.parent();
    }
    Err(CliError::Runtime(format!(
        "no {MANIFEST_FILE} for {}",
        dir.display()
    )))
}

fn summarize_dir(dir: &Path, root: &Path, n_min: u64) -> Result<ReplicationSummary, CliError> {
    let manifest = manifest_for(dir, root)?;
    let checkpoints = read_checkpoints(dir)?;
    let extinctions = io::read_times(io::open(&dir.join(io::EXTINCTIONS_FILE))?)?;
    let a_eps_path = dir.join(io::A_EPS_FILE);
    let a_eps = if a_eps_path.exists() {
        Some(io::read_times(io::open(&a_eps_path)?)?)
    } else {
        None
    };
    let lo = manifest.regime.uniform_limit_lo(manifest.frontier);
    let snapshot_path = dir.join(io::SNAPSHOT_FILE);
    let ks = match lo {
        Some(lo) if snapshot_path.exists() => {
            let snap = io::read_snapshot(io::open(&snapshot_path)?)?;
            ks_against_uniform(&snap, lo, 1.0).ok()
        }
        Some(_) => read_ks(dir)?,
        None => None,
    };
    let traj = Trajectory {
        horizon: manifest.config.horizon,
        frontier: manifest.frontier,
        eps: manifest.config.eps_track,
        bound_m: manifest.frontier.and(manifest.config.bound_m),
        checkpoints,
        extinctions,
        a_eps,
        final_population: Population::new(),
    };
    let label = dir
        .strip_prefix(root)
        .ok()
        .map(|p| p.to_string_lossy().replace('\\', "/"))
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "0".into());
    let ext = summarize_extinctions(&traj.extinctions);
    Ok(ReplicationSummary {
        rep: label,
        ks_stat: ks.map(|k| k.statistic),
        ks_pvalue: ks.map(|k| k.p_value),
        gap_exponent: traj
            .frontier
            .and_then(|_| gap_exponent(&traj, n_min).ok())
            .map(|g| g.exponent),
        sym_diff_final: sym_diff_ratio(&traj).last().map(|&(_, r)| r),
        extinctions: Some(ext.count as f64),
        a_eps_count: traj.a_eps.as_ref().map(|a| a.len() as f64),
        a_eps_last: traj
            .a_eps
            .as_ref()
            .and_then(|a| a.last())
            .map(|&t| t as f64),
    })
}

pub const SUMMARY_HEADER: &str =
    "rep,ks_stat,ks_pvalue,gap_exponent,sym_diff_final,extinctions,a_eps_count,a_eps_last";
pub const SUMMARY_FILE: &str = "summary.csv";

fn summary_row(s: &ReplicationSummary) -> String {
    let real = |v: Option<f64>| v.map(format_real).unwrap_or_default();
    let count = |v: Option<f64>| {
        v.map(|x| {
            if x.fract() == 0.0 {
                format!("{x}")
            } else {
                format_real(x)
            }
        })
        .unwrap_or_default()
    };
    format!(
        "{},{},{},{},{},{},{},{}",
        s.rep,
        real(s.ks_stat),
        real(s.ks_pvalue),
        real(s.gap_exponent),
        real(s.sym_diff_final),
        count(s.extinctions),
        count(s.a_eps_count),
        count(s.a_eps_last)
    )
}

pub fn analyze(args: &AnalyzeArgs, out: &mut impl Write) -> Result<(), CliError> {
    let root = &args.input;
    if !root.is_dir() {
        return Err(CliError::Runtime(format!(
            "{}: not a directory",
            root.display()
        )));
    }
    let dirs = run_dirs(root)?;
    if dirs.is_empty() {
        return Err(CliError::Runtime(format!(
            "{}: no replication data found",
            root.display()
        )));
    }
    let rows: Vec<ReplicationSummary> = dirs
        .iter()
        .map(|d| summarize_dir(d, root, args.n_min))
        .collect::<Result<_, _>>()?;
    let mut table = format!("{SUMMARY_HEADER}\n");
    for r in &rows {
        table.push_str(&summary_row(r));
        table.push('\n');
    }
    table.push_str(&summary_row(&aggregate(&rows)));
    table.push('\n');
    out.write_all(table.as_bytes())?;
    let path = root.join(SUMMARY_FILE);
    fs::write(&path, &table).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(())
}

pub fn validate(args: &ValidateArgs, out: &mut impl Write) -> Result<(), CliError> {
    let threads = resolve_threads(args.threads, &FileConfig::default())?;
    let configs = random_configs(args.configs, args.horizon, args.seed);
    let results: Vec<Result<(), String>> =
        pool(threads)?.install(|| configs.par_iter().map(compare_with_engine).collect());
    let mut failed = 0;
    for (i, (c, r)) in configs.iter().zip(&results).enumerate() {
        let status = match r {
            Ok(()) => "PASS".to_string(),
            Err(why) => {
                failed += 1;
                format!("FAIL {why}")
            }
        };
        writeln!(
            out,
            "config {i:03} p={:.4} birth={} death={} seed={} {status}",
            c.p, c.law_z, c.law_x, c.seed
        )?;
    }
    let passed = configs.len() - failed;
    writeln!(out, "{passed}/{} configs equivalent", configs.len())?;
    if failed > 0 {
        return Err(CliError::Validation(format!("{failed} configs differ")));
    }
    Ok(())
}
