//! Columnar text archive of an ensemble's trajectory records.
//!
//! Layout: a `# latticemc trajectory archive v1` banner, one `# key = value`
//! line per manifest entry, the column header
//! `t,x,z,p_x,p_z,s,atom_index`, then one row per sample with `s` as `+1`/`-1`.

use std::io::{self, BufRead, Write};

use crate::dynamics::{TrajectoryRecord, TrajectorySample};
use crate::field::Sublevel;
use crate::num::{Real, Vec2};

use super::EnsembleResult;

pub const BANNER: &str = "# latticemc trajectory archive v1";
pub const COLUMNS: &str = "t,x,z,p_x,p_z,s,atom_index";

pub fn write_archive<T: Real, W: Write>(result: &EnsembleResult<T>, mut out: W) -> io::Result<()> {
    writeln!(out, "{BANNER}")?;
    for line in result.manifest.to_lines() {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "{COLUMNS}")?;
    for record in &result.records {
        for s in &record.samples {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.t.to_f64_lossy(),
                s.r.x.to_f64_lossy(),
                s.r.z.to_f64_lossy(),
                s.p.x.to_f64_lossy(),
                s.p.z.to_f64_lossy(),
                s.s.as_i8(),
                record.atom_index
            )?;
        }
    }
    Ok(())
}

/// Parsed archive: manifest entries and records grouped by atom index.
#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub manifest: Vec<(String, String)>,
    pub records: Vec<TrajectoryRecord<f64>>,
}

fn invalid(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

pub fn read_archive<R: BufRead>(input: R) -> io::Result<Archive> {
    let mut manifest = Vec::new();
    let mut records: Vec<TrajectoryRecord<f64>> = Vec::new();
    let mut seen_header = false;
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once('=') {
                manifest.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        if !seen_header {
            if line.trim() != COLUMNS {
                return Err(invalid(format!("line {}: expected column header", lineno + 1)));
            }
            seen_header = true;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(invalid(format!("line {}: expected 7 columns", lineno + 1)));
        }
        let num = |i: usize| -> io::Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| invalid(format!("line {}: {e}", lineno + 1)))
        };
        let s = match fields[5] {
            "1" => Sublevel::Plus,
            "-1" => Sublevel::Minus,
            other => return Err(invalid(format!("line {}: bad sublevel {other}", lineno + 1))),
        };
        let atom_index: usize = fields[6]
            .parse()
            .map_err(|e| invalid(format!("line {}: {e}", lineno + 1)))?;
        let sample = TrajectorySample {
            t: num(0)?,
            r: Vec2::new(num(1)?, num(2)?),
            p: Vec2::new(num(3)?, num(4)?),
            s,
        };
        match records.last_mut() {
            Some(rec) if rec.atom_index == atom_index => rec.samples.push(sample),
            _ => records.push(TrajectoryRecord { atom_index, samples: vec![sample] }),
        }
    }
    if !seen_header {
        return Err(invalid("missing column header".into()));
    }
    Ok(Archive { manifest, records })
}
