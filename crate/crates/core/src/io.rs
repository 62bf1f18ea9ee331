//! CSV formats: LF line endings, a header row, reals with 17 significant
//! digits.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::population::Population;
use crate::process::{Checkpoint, Trajectory};

pub const TRAJECTORY_HEADER: &str = "n,size,l,r,rprime,t_bad,sym_diff";
pub const TIMES_HEADER: &str = "n";
pub const SNAPSHOT_HEADER: &str = "fitness";

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const EXTINCTIONS_FILE: &str = "extinctions.csv";
pub const A_EPS_FILE: &str = "a_eps.csv";
pub const SNAPSHOT_FILE: &str = "snapshot.csv";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("expected header '{expected}', found '{found}'")]
    Header {
        expected: &'static str,
        found: String,
    },
    /// `line` counts from 1 at the header.
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// A real with 17 significant digits, enough to round-trip any `f64`.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_checkpoints<W: Write>(mut w: W, checkpoints: &[Checkpoint]) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for c in checkpoints {
        let t_bad = c.t_bad.map(|t| t.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            c.n, c.size, c.l, c.r, c.rprime, t_bad, c.sym_diff
        )?;
    }
    w.flush()
}

pub fn write_times<W: Write>(mut w: W, times: &[u64]) -> io::Result<()> {
    writeln!(w, "{TIMES_HEADER}")?;
    for t in times {
        writeln!(w, "{t}")?;
    }
    w.flush()
}

/// Streams the population in fitness order, one value per row.
pub fn write_snapshot<W: Write>(mut w: W, pop: &Population) -> io::Result<()> {
    writeln!(w, "{SNAPSHOT_HEADER}")?;
    let mut result = Ok(());
    pop.for_each_sorted(|x| {
        if result.is_ok() {
            result = writeln!(w, "{}", format_real(x));
        }
    });
    result?;
    w.flush()
}

fn data_lines<R: BufRead>(
    r: R,
    header: &'static str,
) -> Result<impl Iterator<Item = (usize, io::Result<String>)>, IoError> {
    let mut lines = r.lines().enumerate();
    let found = match lines.next() {
        Some((_, line)) => line?,
        None => String::new(),
    };
    if found.trim_end() != header {
        return Err(IoError::Header {
            expected: header,
            found,
        });
    }
    Ok(lines.map(|(i, l)| (i + 1, l)))
}

fn parse_field<T: std::str::FromStr>(line: usize, name: &str, tok: &str) -> Result<T, IoError> {
    tok.trim().parse().map_err(|_| IoError::Parse {
        line,
        reason: format!("bad {name} '{tok}'"),
    })
}

pub fn read_checkpoints<R: BufRead>(r: R) -> Result<Vec<Checkpoint>, IoError> {
    let mut out = Vec::new();
    for (line, text) in data_lines(r, TRAJECTORY_HEADER)? {
        let text = text?;
        if text.is_empty() {
            continue;
        }
        let f: Vec<&str> = text.split(',').collect();
        if f.len() != 7 {
            return Err(IoError::Parse {
                line,
                reason: format!("expected 7 fields, found {}", f.len()),
            });
        }
        out.push(Checkpoint {
            n: parse_field(line, "n", f[0])?,
            size: parse_field(line, "size", f[1])?,
            l: parse_field(line, "l", f[2])?,
            r: parse_field(line, "r", f[3])?,
            rprime: parse_field(line, "rprime", f[4])?,
            t_bad: if f[5].is_empty() {
                None
            } else {
                Some(parse_field(line, "t_bad", f[5])?)
            },
            sym_diff: parse_field(line, "sym_diff", f[6])?,
        });
    }
    Ok(out)
}

pub fn read_times<R: BufRead>(r: R) -> Result<Vec<u64>, IoError> {
    let mut out = Vec::new();
    for (line, text) in data_lines(r, TIMES_HEADER)? {
        let text = text?;
        if !text.is_empty() {
            out.push(parse_field(line, "time", &text)?);
        }
    }
    Ok(out)
}

pub fn read_snapshot<R: BufRead>(r: R) -> Result<Vec<f64>, IoError> {
    let mut out = Vec::new();
    for (line, text) in data_lines(r, SNAPSHOT_HEADER)? {
        let text = text?;
        if !text.is_empty() {
            out.push(parse_field(line, "fitness", &text)?);
        }
    }
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| IoError::File {
            path: path.to_path_buf(),
            source,
        })
}

pub fn open(path: &Path) -> Result<BufReader<File>, IoError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| IoError::File {
            path: path.to_path_buf(),
            source,
        })
}

fn with_path(path: &Path, r: io::Result<()>) -> Result<(), IoError> {
    r.map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the event-time and snapshot files of a trajectory into `dir`
/// (which must exist); returns the paths written. The checkpoint series is
/// left to the caller, which picks its format.
pub fn write_event_files(
    dir: &Path,
    traj: &Trajectory,
    snapshot: bool,
) -> Result<Vec<PathBuf>, IoError> {
    let mut written = Vec::new();
    let path = dir.join(EXTINCTIONS_FILE);
    with_path(&path, write_times(create(&path)?, &traj.extinctions))?;
    written.push(path);
    if let Some(times) = &traj.a_eps {
        let path = dir.join(A_EPS_FILE);
        with_path(&path, write_times(create(&path)?, times))?;
        written.push(path);
    }
    if snapshot {
        let path = dir.join(SNAPSHOT_FILE);
        with_path(
            &path,
            write_snapshot(create(&path)?, &traj.final_population),
        )?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_checkpoint_file(dir: &Path, checkpoints: &[Checkpoint]) -> Result<PathBuf, IoError> {
    let path = dir.join(TRAJECTORY_FILE);
    with_path(&path, write_checkpoints(create(&path)?, checkpoints))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cps() -> Vec<Checkpoint> {
        vec![
            Checkpoint {
                n: 1,
                size: 2,
                l: 1,
                r: 1,
                rprime: 1,
                t_bad: Some(1),
                sym_diff: 1,
            },
            Checkpoint {
                n: 2,
                size: 0,
                l: 0,
                r: 0,
                rprime: 1,
                t_bad: None,
                sym_diff: 1,
            },
        ]
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut buf = Vec::new();
        write_checkpoints(&mut buf, &cps()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "n,size,l,r,rprime,t_bad,sym_diff\n1,2,1,1,1,1,1\n2,0,0,0,1,,1\n"
        );
        assert_eq!(read_checkpoints(&buf[..]).unwrap(), cps());
    }

    #[test]
    fn times_round_trip() {
        let mut buf = Vec::new();
        write_times(&mut buf, &[3, 7, 7000]).unwrap();
        assert_eq!(read_times(&buf[..]).unwrap(), vec![3, 7, 7000]);
        let mut empty = Vec::new();
        write_times(&mut empty, &[]).unwrap();
        assert_eq!(empty, b"n\n");
        assert!(read_times(&empty[..]).unwrap().is_empty());
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let values = [0.1, 1.0 / 3.0, 0.7, std::f64::consts::FRAC_1_SQRT_2, 1.0];
        let pop = Population::from_values(&values).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &pop).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("fitness\n1.0000000000000001e-1\n"));
        let back = read_snapshot(&buf[..]).unwrap();
        assert_eq!(back, pop.snapshot_sorted());
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(
            read_times(&b"time\n1\n"[..]),
            Err(IoError::Header { .. })
        ));
        assert!(matches!(
            read_times(&b"n\n1\nx\n"[..]),
            Err(IoError::Parse { line: 3, .. })
        ));
        assert!(matches!(
            read_checkpoints(&b"n,size,l,r,rprime,t_bad,sym_diff\n1,2,3\n"[..]),
            Err(IoError::Parse { line: 2, .. })
        ));
    }
}
