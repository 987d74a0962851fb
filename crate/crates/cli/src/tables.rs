//! CSV tables exchanged between stages.

use std::collections::BTreeMap;
use std::path::Path;

use rbt_core::clifford::OVERLAP_BASIS_SIZE;
use rbt_core::experiment::GateDraw;
use rbt_core::fit::JointParams;
use rbt_core::reconstruct::QptDataset;
use rbt_core::simulate::{read_datasets_csv, DecayDataset, SimError};

use crate::error::CliError;

fn row_error(path: &Path, line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::data(path, format!("schema error at row {} (line {line}): {msg}", line - 1))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.position() {
        Some(p) => row_error(path, p.line() as usize, &e),
        None => CliError::data(path, e.to_string()),
    }
}

/// Decay datasets keyed by overlap index, each with `bins` bins per row.
pub fn read_decays(
    path: &Path,
    bytes: &[u8],
    shots_per_bin: u16,
    bins: usize,
) -> Result<BTreeMap<usize, DecayDataset>, CliError> {
    let sets = read_datasets_csv(bytes, shots_per_bin).map_err(|e| match e {
        SimError::Parse { line, msg } => row_error(path, line, msg),
        SimError::Csv(e) => csv_error(path, e),
        other => CliError::data(path, other.to_string()),
    })?;
    for ds in sets.values() {
        if let Some(row) = ds.rows.iter().find(|r| r.counts.len() != bins) {
            return Err(CliError::data(
                path,
                format!(
                    "j={} tuple {} has {} bins, expected {bins}",
                    ds.overlap,
                    row.tuple_id,
                    row.counts.len()
                ),
            ));
        }
    }
    Ok(sets)
}

/// Splits datasets into the reference (j = 0, when `with_reference`) and
/// the ten overlaps in order.
pub fn overlap_layout(
    path: &Path,
    mut sets: BTreeMap<usize, DecayDataset>,
    with_reference: bool,
) -> Result<(Option<DecayDataset>, Vec<DecayDataset>), CliError> {
    let reference = if with_reference {
        Some(
            sets.remove(&0)
                .ok_or_else(|| CliError::data(path, "no reference rows (j=0)"))?,
        )
    } else {
        None
    };
    let mut overlaps = Vec::with_capacity(OVERLAP_BASIS_SIZE);
    for j in 1..=OVERLAP_BASIS_SIZE {
        overlaps.push(
            sets.remove(&j)
                .ok_or_else(|| CliError::data(path, format!("no rows for j={j}")))?,
        );
    }
    if let Some(j) = sets.keys().next() {
        return Err(CliError::data(path, format!("unexpected j={j}")));
    }
    Ok((reference, overlaps))
}

pub const QPT_HEADER: [&str; 4] = ["input", "observable", "bin_id", "mean"];

pub fn write_qpt_csv(ds: &QptDataset) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(QPT_HEADER).expect("in-memory write");
    for (k, per_input) in ds.counts.iter().enumerate() {
        for (o, bins) in per_input.iter().enumerate() {
            for (b, &c) in bins.iter().enumerate() {
                let mean = c as f64 / ds.shots_per_bin as f64;
                w.write_record([k.to_string(), o.to_string(), b.to_string(), mean.to_string()])
                    .expect("in-memory write");
            }
        }
    }
    w.into_inner().expect("in-memory flush")
}

pub fn read_qpt_csv(path: &Path, bytes: &[u8], shots_per_bin: u16, bins: usize) -> Result<QptDataset, CliError> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let mut counts = vec![vec![Vec::new(); 3]; 4];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = i + 2;
        if rec.len() != QPT_HEADER.len() {
            return Err(row_error(path, line, format!("expected 4 fields, found {}", rec.len())));
        }
        let field = |k: usize| -> Result<usize, CliError> {
            rec[k]
                .parse()
                .map_err(|_| row_error(path, line, format!("bad {} {:?}", QPT_HEADER[k], &rec[k])))
        };
        let (k, o, b) = (field(0)?, field(1)?, field(2)?);
        if k >= 4 || o >= 3 {
            return Err(row_error(path, line, format!("setting ({k}, {o}) out of range")));
        }
        let mean: f64 = rec[3]
            .parse()
            .map_err(|_| row_error(path, line, format!("bad mean {:?}", &rec[3])))?;
        let scaled = mean * shots_per_bin as f64;
        let count = scaled.round();
        if !(0.0..=shots_per_bin as f64).contains(&count) || (scaled - count).abs() > 1e-6 {
            return Err(row_error(path, line, format!("mean {mean} is not a count over {shots_per_bin} shots")));
        }
        if counts[k][o].len() != b {
            return Err(row_error(path, line, format!("bins for setting ({k}, {o}) out of order")));
        }
        counts[k][o].push(count as u16);
    }
    for (k, per_input) in counts.iter().enumerate() {
        for (o, c) in per_input.iter().enumerate() {
            if c.len() != bins {
                return Err(CliError::data(
                    path,
                    format!("setting ({k}, {o}) has {} bins, expected {bins}", c.len()),
                ));
            }
        }
    }
    Ok(QptDataset {
        shots_per_bin,
        counts,
    })
}

pub const DRAWS_HEADER: [&str; 7] = ["rep", "gate", "j", "p_j", "p_ref", "A", "B"];

/// Bootstrap draws, one row per replication, gate and overlap. Values use
/// shortest round-trip formatting so reading them back is exact.
pub fn write_draws_csv(draws: &[Vec<GateDraw>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DRAWS_HEADER).expect("in-memory write");
    for (rep, gates) in draws.iter().enumerate() {
        for (g, draw) in gates.iter().enumerate() {
            for (j, p) in draw.iter().enumerate() {
                w.write_record([
                    rep.to_string(),
                    g.to_string(),
                    (j + 1).to_string(),
                    p.p_j.to_string(),
                    p.p_ref.to_string(),
                    p.scale.to_string(),
                    p.offset.to_string(),
                ])
                .expect("in-memory write");
            }
        }
    }
    w.into_inner().expect("in-memory flush")
}

pub fn read_draws_csv(
    path: &Path,
    bytes: &[u8],
    replications: usize,
    gates: usize,
) -> Result<Vec<Vec<GateDraw>>, CliError> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let mut out = vec![vec![[JointParams::default(); OVERLAP_BASIS_SIZE]; gates]; replications];
    let expected = replications * gates * OVERLAP_BASIS_SIZE;
    let mut seen = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = i + 2;
        if rec.len() != DRAWS_HEADER.len() {
            return Err(row_error(path, line, format!("expected 7 fields, found {}", rec.len())));
        }
        let index = |k: usize| -> Result<usize, CliError> {
            rec[k]
                .parse()
                .map_err(|_| row_error(path, line, format!("bad {} {:?}", DRAWS_HEADER[k], &rec[k])))
        };
        let value = |k: usize| -> Result<f64, CliError> {
            rec[k]
                .parse()
                .map_err(|_| row_error(path, line, format!("bad {} {:?}", DRAWS_HEADER[k], &rec[k])))
        };
        let (rep, g, j) = (index(0)?, index(1)?, index(2)?);
        let pos = (rep * gates + g) * OVERLAP_BASIS_SIZE + j.wrapping_sub(1);
        if g >= gates || j == 0 || j > OVERLAP_BASIS_SIZE || pos != seen {
            return Err(row_error(path, line, format!("unexpected (rep, gate, j) = ({rep}, {g}, {j})")));
        }
        out[rep][g][j - 1] = JointParams {
            p_j: value(3)?,
            p_ref: value(4)?,
            scale: value(5)?,
            offset: value(6)?,
        };
        seen += 1;
    }
    if seen != expected {
        return Err(CliError::data(path, format!("{seen} draws, expected {expected}")));
    }
    Ok(out)
}
