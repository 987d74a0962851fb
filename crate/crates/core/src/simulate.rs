//! Survival probabilities and binned single-shot records.
//!
//! Shots for sequence `id` come from a ChaCha8 stream keyed by the run seed
//! with stream number `stream_tag << 32 | id`, one 32-bit word per shot, so
//! results never depend on scheduling.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clifford::{Group, GroupKind};
use crate::noise::{apply_spam, NoiseModel, SpamModel};
use crate::pauli::SuperOp;
use crate::sequence::{Length, RbtSequence, SequenceSet, Slot};

pub const DEFAULT_SHOTS: usize = 10_000;
pub const DEFAULT_BIN_SIZE: usize = 100;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("shots ({shots}) must be a positive multiple of the bin size ({bin})")]
    BadBinning { shots: usize, bin: usize },
    #[error("bin size {0} exceeds 65535")]
    BinTooLarge(usize),
    #[error("configuration {0} has {1} bins, which cannot be split in half")]
    OddBins(usize, usize),
    #[error("datasets have mismatched layouts")]
    LayoutMismatch,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Bernoulli shots.
    #[default]
    Shots,
    /// Counts at the expected value, rounded to whole shots and spread
    /// evenly over the bins. No shot noise.
    Expected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub shots: usize,
    pub bin_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub mode: SamplingMode,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            shots: DEFAULT_SHOTS,
            bin_size: DEFAULT_BIN_SIZE,
            seed: 0,
            mode: SamplingMode::Shots,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.bin_size == 0 || self.shots == 0 || self.shots % self.bin_size != 0 {
            return Err(SimError::BadBinning {
                shots: self.shots,
                bin: self.bin_size,
            });
        }
        if self.bin_size > u16::MAX as usize {
            return Err(SimError::BinTooLarge(self.bin_size));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.shots / self.bin_size
    }
}

/// The noisy superoperators actually applied for each slot kind.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSet {
    pub group: GroupKind,
    /// Indexed by group index minus one.
    pub gates: Vec<SuperOp>,
    pub target: SuperOp,
}

impl GateSet {
    /// Attaches the model's error channel to every group element and to the
    /// ideal target.
    pub fn new(kind: GroupKind, noise: &NoiseModel, ideal_target: &SuperOp) -> Self {
        let a4 = Group::a4();
        let gates = Group::get(kind)
            .elements()
            .iter()
            .map(|e| noise.noisy_gate(a4.find(&e.superop), &e.superop))
            .collect();
        Self {
            group: kind,
            gates,
            target: noise.noisy_gate(None, ideal_target),
        }
    }

    /// Noisy group elements with a target implemented exactly as given.
    pub fn with_exact_target(kind: GroupKind, noise: &NoiseModel, target: SuperOp) -> Self {
        let mut g = Self::new(kind, noise, &SuperOp::identity());
        g.target = target;
        g
    }

    pub fn slot(&self, s: Slot) -> &SuperOp {
        match s {
            Slot::Gate(k) => &self.gates[k as usize - 1],
            Slot::Target => &self.target,
        }
    }

    pub fn survival(&self, seq: &RbtSequence, spam: &SpamModel) -> f64 {
        let state = seq
            .compiled
            .iter()
            .fold(spam.prep, |st, &s| self.slot(s).apply(&st));
        apply_spam(&state, spam)
    }
}

/// Survival probability of one A4 sequence with the target given as its
/// ideal superoperator.
pub fn survival_probability(
    seq: &RbtSequence,
    ideal_target: &SuperOp,
    noise: &NoiseModel,
    spam: &SpamModel,
) -> f64 {
    GateSet::new(GroupKind::A4, noise, ideal_target).survival(seq, spam)
}

/// One configuration's bins: successes per bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRow {
    #[serde(rename = "n")]
    pub length: Length,
    pub tuple_id: usize,
    pub counts: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayDataset {
    /// Overlap index; 0 marks a reference decay.
    #[serde(rename = "j")]
    pub overlap: usize,
    pub shots_per_bin: u16,
    pub seed: u64,
    pub stream_tag: u64,
    pub rows: Vec<ConfigRow>,
}

impl DecayDataset {
    pub fn bin_mean(&self, count: u16) -> f64 {
        count as f64 / self.shots_per_bin as f64
    }

    pub fn lengths(&self) -> Vec<Length> {
        let mut out: Vec<Length> = self.rows.iter().map(|r| r.length).collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn bin_count(&self) -> usize {
        self.rows.iter().map(|r| r.counts.len()).sum()
    }

    /// First and second half of every configuration's bins, in bin order.
    pub fn split_halves(&self) -> Result<(Self, Self), SimError> {
        let mut a = self.clone();
        let mut b = self.clone();
        for (i, row) in self.rows.iter().enumerate() {
            let n = row.counts.len();
            if n < 2 || n % 2 != 0 {
                return Err(SimError::OddBins(row.tuple_id, n));
            }
            a.rows[i].counts = row.counts[..n / 2].to_vec();
            b.rows[i].counts = row.counts[n / 2..].to_vec();
        }
        Ok((a, b))
    }

    pub fn write_csv<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<(), SimError> {
        for row in &self.rows {
            for (b, &c) in row.counts.iter().enumerate() {
                w.write_record(&[
                    self.overlap.to_string(),
                    row.length.to_string(),
                    row.tuple_id.to_string(),
                    b.to_string(),
                    format!("{}", self.bin_mean(c)),
                ])?;
            }
        }
        Ok(())
    }
}

pub const CSV_HEADER: [&str; 5] = ["j", "n", "tuple_id", "bin_id", "mean"];

/// Writes several datasets to one CSV with a header row.
pub fn write_datasets_csv<W: Write>(out: W, sets: &[&DecayDataset]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for ds in sets {
        ds.write_csv(&mut w)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a CSV written by [`write_datasets_csv`], grouping rows by `j`.
/// Bin means must be multiples of `1 / shots_per_bin`.
pub fn read_datasets_csv<R: Read>(
    input: R,
    shots_per_bin: u16,
) -> Result<BTreeMap<usize, DecayDataset>, SimError> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out: BTreeMap<usize, DecayDataset> = BTreeMap::new();
    let mut index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |msg: String| SimError::Parse { line, msg };
        if rec.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", rec.len())));
        }
        let j: usize = rec[0].parse().map_err(|_| bad(format!("bad j {:?}", &rec[0])))?;
        let length: Length = rec[1].parse().map_err(bad)?;
        let tuple_id: usize = rec[2]
            .parse()
            .map_err(|_| bad(format!("bad tuple_id {:?}", &rec[2])))?;
        let bin_id: usize = rec[3]
            .parse()
            .map_err(|_| bad(format!("bad bin_id {:?}", &rec[3])))?;
        let mean: f64 = rec[4]
            .parse()
            .map_err(|_| bad(format!("bad mean {:?}", &rec[4])))?;
        let scaled = mean * shots_per_bin as f64;
        let count = scaled.round();
        if !(0.0..=shots_per_bin as f64).contains(&count) || (scaled - count).abs() > 1e-6 {
            return Err(bad(format!("mean {mean} is not a count over {shots_per_bin} shots")));
        }
        let ds = out.entry(j).or_insert_with(|| DecayDataset {
            overlap: j,
            shots_per_bin,
            seed: 0,
            stream_tag: 0,
            rows: Vec::new(),
        });
        let pos = *index.entry((j, tuple_id)).or_insert_with(|| {
            ds.rows.push(ConfigRow {
                length,
                tuple_id,
                counts: Vec::new(),
            });
            ds.rows.len() - 1
        });
        let row = &mut ds.rows[pos];
        if row.length != length || row.counts.len() != bin_id {
            return Err(bad(format!("bins for tuple {tuple_id} out of order")));
        }
        row.counts.push(count as u16);
    }
    Ok(out)
}

fn stream_rng(seed: u64, stream_tag: u64, id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream_tag << 32) | id as u64);
    rng.set_word_pos(0);
    rng
}

/// Bernoulli(`p`) shots grouped into bins.
pub fn sample_counts(p: f64, cfg: &SampleConfig, stream_tag: u64, id: usize) -> Vec<u16> {
    if cfg.mode == SamplingMode::Expected {
        return expected_counts(p, cfg);
    }
    let mut rng = stream_rng(cfg.seed, stream_tag, id);
    let threshold = (p.clamp(0.0, 1.0) * 4_294_967_296.0).round() as u64;
    (0..cfg.bins())
        .map(|_| {
            (0..cfg.bin_size)
                .filter(|_| (rng.next_u32() as u64) < threshold)
                .count() as u16
        })
        .collect()
}

fn expected_counts(p: f64, cfg: &SampleConfig) -> Vec<u16> {
    let bins = cfg.bins();
    let total = (p.clamp(0.0, 1.0) * cfg.shots as f64).round() as usize;
    (0..bins)
        .map(|i| (total / bins + usize::from(i < total % bins)) as u16)
        .collect()
}

/// Samples every sequence of `set` under `gates` and `spam`.
pub fn sample_dataset(
    set: &SequenceSet,
    gates: &GateSet,
    spam: &SpamModel,
    cfg: &SampleConfig,
    stream_tag: u64,
) -> Result<DecayDataset, SimError> {
    cfg.validate()?;
    let rows = set
        .sequences
        .par_iter()
        .map(|s| ConfigRow {
            length: s.length,
            tuple_id: s.id,
            counts: sample_counts(gates.survival(s, spam), cfg, stream_tag, s.id),
        })
        .collect();
    Ok(DecayDataset {
        overlap: set.overlap,
        shots_per_bin: cfg.bin_size as u16,
        seed: cfg.seed,
        stream_tag,
        rows,
    })
}

/// Samples configurations with given survival probabilities, for synthetic
/// studies: `per_length` configurations at each `(length, probability)`.
pub fn synthetic_dataset(
    overlap: usize,
    curve: &[(Length, f64)],
    per_length: usize,
    cfg: &SampleConfig,
    stream_tag: u64,
) -> Result<DecayDataset, SimError> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(curve.len() * per_length);
    for &(length, p) in curve {
        for _ in 0..per_length {
            let id = rows.len();
            rows.push(ConfigRow {
                length,
                tuple_id: id,
                counts: sample_counts(p, cfg, stream_tag, id),
            });
        }
    }
    Ok(DecayDataset {
        overlap,
        shots_per_bin: cfg.bin_size as u16,
        seed: cfg.seed,
        stream_tag,
        rows,
    })
}

/// Mean bin value per length over all configurations and bins.
pub fn average_fidelity_curve(ds: &DecayDataset) -> BTreeMap<Length, f64> {
    let mut acc: BTreeMap<Length, (f64, usize)> = BTreeMap::new();
    for row in &ds.rows {
        let e = acc.entry(row.length).or_insert((0.0, 0));
        e.0 += row.counts.iter().map(|&c| c as f64).sum::<f64>();
        e.1 += row.counts.len();
    }
    acc.into_iter()
        .map(|(k, (s, n))| (k, s / (n as f64 * ds.shots_per_bin as f64)))
        .collect()
}

/// Exact per-length mean survival over a set, without shot noise.
pub fn expected_curve(set: &SequenceSet, gates: &GateSet, spam: &SpamModel) -> BTreeMap<Length, f64> {
    let mut acc: BTreeMap<Length, (f64, usize)> = BTreeMap::new();
    for s in &set.sequences {
        let e = acc.entry(s.length).or_insert((0.0, 0));
        e.0 += gates.survival(s, spam);
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}
