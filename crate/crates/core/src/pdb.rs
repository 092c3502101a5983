//! Protein Data Bank coordinate ingestion.
//!
//! Only `ATOM` records of the first model are kept; `HETATM` (waters, ions,
//! ligands) are dropped, and of several alternate locations for one atom the
//! first one listed wins.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::PointSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordKind {
    Atom,
    Hetatm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdbRecord {
    pub kind: RecordKind,
    pub serial: String,
    pub name: String,
    pub res_name: String,
    pub chain: char,
    pub res_seq: String,
    pub altloc: char,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub element: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub file: String,
    pub n_kept: usize,
    pub n_dropped_hetatm: usize,
    pub n_dropped_altloc: usize,
    pub n_models_skipped: usize,
}

/// Columns are 1-based and inclusive, as in the format description.
fn field(line: &str, from: usize, to: usize) -> &str {
    let b = line.as_bytes();
    if b.len() < from {
        return "";
    }
    let end = to.min(b.len());
    std::str::from_utf8(&b[from - 1..end]).unwrap_or("").trim()
}

fn char_at(line: &str, col: usize) -> char {
    line.as_bytes().get(col - 1).map_or(' ', |&c| c as char)
}

impl PdbRecord {
    /// Parses an `ATOM` or `HETATM` line; other record types yield `Ok(None)`.
    pub fn parse(line: &str, line_no: usize) -> Result<Option<Self>> {
        let kind = match field(line, 1, 6) {
            "ATOM" => RecordKind::Atom,
            "HETATM" => RecordKind::Hetatm,
            _ => return Ok(None),
        };
        let coord = |from: usize, to: usize, axis: &str| -> Result<f64> {
            let raw = field(line, from, to);
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("bad {axis} coordinate {raw:?} in columns {from}-{to}"),
                })
        };
        Ok(Some(Self {
            kind,
            serial: field(line, 7, 11).to_string(),
            name: field(line, 13, 16).to_string(),
            res_name: field(line, 18, 20).to_string(),
            chain: char_at(line, 22),
            res_seq: field(line, 23, 27).to_string(),
            altloc: char_at(line, 17),
            x: coord(31, 38, "x")?,
            y: coord(39, 46, "y")?,
            z: coord(47, 54, "z")?,
            element: field(line, 77, 78).to_string(),
        }))
    }
}

/// Reads a PDB stream into a centered `n × 3` configuration.
pub fn parse_pdb<R: BufRead>(input: R, name: &str) -> Result<(PointSet, IngestStats)> {
    let mut stats = IngestStats {
        file: name.to_string(),
        ..Default::default()
    };
    let mut rows: Vec<[f64; 3]> = Vec::new();
    let mut seen = HashSet::new();
    let mut models = 0usize;
    let mut in_later_model = false;
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        match field(&line, 1, 6) {
            "MODEL" => {
                models += 1;
                in_later_model = models > 1;
                if in_later_model {
                    stats.n_models_skipped += 1;
                }
                continue;
            }
            "ENDMDL" => continue,
            _ => {}
        }
        if in_later_model {
            continue;
        }
        let Some(rec) = PdbRecord::parse(&line, line_no)? else {
            continue;
        };
        if rec.kind == RecordKind::Hetatm {
            stats.n_dropped_hetatm += 1;
            continue;
        }
        let key = (rec.chain, rec.res_seq.clone(), rec.res_name.clone(), rec.name.clone());
        if !seen.insert(key) {
            stats.n_dropped_altloc += 1;
            continue;
        }
        rows.push([rec.x, rec.y, rec.z]);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput(name.to_string()));
    }
    stats.n_kept = rows.len();
    let coords = DMatrix::from_fn(rows.len(), 3, |i, c| rows[i][c]);
    Ok((PointSet::centered(coords)?, stats))
}

pub fn read_pdb_file(path: &Path) -> Result<(PointSet, IngestStats)> {
    let file = File::open(path)?;
    let name = path.file_name().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
    parse_pdb(BufReader::new(file), &name)
}
