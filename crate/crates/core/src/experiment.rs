//! End-to-end tomography experiments: simulate the ten overlap decays of a
//! gate plus a shared reference decay, fit them, and bootstrap the overlap
//! vectors of several gates together.
//!
//! The reference is randomized benchmarking of the null operation (a
//! zero-duration target) over A4, on longer lengths than the overlaps. One
//! reference dataset is shared by every gate of a run.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clifford::{GroupKind, OVERLAP_BASIS_SIZE};
use crate::fit::{
    decay_to_overlap, joint_cis, joint_fit, joint_fit_warm, percentile_interval, replication_rng,
    single_fit, single_fit_summary, BootstrapSettings, DecaySummary, FitError, FitResult, Interval,
    JointParams, Resampler, SingleFit,
};
use crate::noise::{NoiseModel, SpamModel};
use crate::pauli::{avg_fidelity, SuperOp, UnitaryOp};
use crate::reconstruct::{
    corrected, reconstruct_unital, FidelityEstimate, OverlapVector, Reconstruction,
    ReconstructionError, Side,
};
use crate::sequence::{default_repeats, exhaustive_set, random_rbt_set, Length, SequenceError, SequenceSet};
use crate::simulate::{sample_dataset, DecayDataset, GateSet, SampleConfig, SimError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Reconstruction(#[from] ReconstructionError),
    #[error("expected {OVERLAP_BASIS_SIZE} overlap datasets, found {0}")]
    OverlapCount(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolSettings {
    pub lengths: Vec<Length>,
    /// Copies of each sequence per length (absent lengths run once).
    pub repeats: BTreeMap<Length, u32>,
    pub reference_lengths: Vec<Length>,
    pub reference_per_length: usize,
    /// Seed for drawing the random reference sequences.
    pub sequence_seed: u64,
    pub sample: SampleConfig,
    pub bootstrap: BootstrapSettings,
}

impl Default for ProtocolSettings {
    fn default() -> Self {
        Self {
            lengths: vec![
                Length::Finite(1),
                Length::Finite(2),
                Length::Finite(3),
                Length::Infinite,
            ],
            repeats: default_repeats(),
            reference_lengths: default_reference_lengths(),
            reference_per_length: 12,
            sequence_seed: 0,
            sample: SampleConfig::default(),
            bootstrap: BootstrapSettings::default(),
        }
    }
}

pub fn default_reference_lengths() -> Vec<Length> {
    [1, 2, 4, 8, 16, 32, 48, 64]
        .into_iter()
        .map(Length::Finite)
        .chain([Length::Infinite])
        .collect()
}

/// Stream tags keep every dataset of a run on its own RNG streams.
pub const REFERENCE_STREAM: u64 = 1;

pub fn overlap_stream(gate_tag: u64, j: usize) -> u64 {
    0x100 * (gate_tag + 1) + j as u64
}

pub fn qpt_stream(gate_tag: u64) -> u64 {
    0x10_0000 + gate_tag
}

/// Reference sequences: RBT of the null operation with overlap index 1,
/// which is plain A4 randomized benchmarking.
pub fn reference_set(settings: &ProtocolSettings) -> Result<SequenceSet, SequenceError> {
    let mut set = random_rbt_set(
        1,
        &settings.reference_lengths,
        settings.reference_per_length,
        settings.sequence_seed,
    )?;
    set.overlap = 0;
    Ok(set)
}

/// Exhaustive overlap sequence sets for j = 1..=10.
pub fn overlap_sets(settings: &ProtocolSettings) -> Result<Vec<SequenceSet>, SequenceError> {
    (1..=OVERLAP_BASIS_SIZE)
        .map(|j| exhaustive_set(j, &settings.lengths, &settings.repeats))
        .collect()
}

pub fn simulate_reference(
    noise: &NoiseModel,
    spam: &SpamModel,
    settings: &ProtocolSettings,
) -> Result<DecayDataset, ExperimentError> {
    let set = reference_set(settings)?;
    let gates = GateSet::new(GroupKind::A4, noise, &SuperOp::identity());
    Ok(sample_dataset(&set, &gates, spam, &settings.sample, REFERENCE_STREAM)?)
}

/// The ten overlap datasets of one gate.
pub fn simulate_overlaps(
    gates: &GateSet,
    spam: &SpamModel,
    settings: &ProtocolSettings,
    gate_tag: u64,
) -> Result<Vec<DecayDataset>, ExperimentError> {
    overlap_sets(settings)?
        .iter()
        .enumerate()
        .map(|(i, set)| {
            Ok(sample_dataset(set, gates, spam, &settings.sample, overlap_stream(gate_tag, i + 1))?)
        })
        .collect()
}

/// Joint fits of every overlap against the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapFits {
    pub fits: Vec<FitResult>,
    pub overlaps: OverlapVector,
}

impl OverlapFits {
    pub fn rates(&self) -> Vec<f64> {
        self.fits.iter().map(|f| f.params.p_j).collect()
    }
}

pub fn fit_overlaps(reference: &DecayDataset, overlaps: &[DecayDataset]) -> Result<OverlapFits, ExperimentError> {
    if overlaps.len() != OVERLAP_BASIS_SIZE {
        return Err(ExperimentError::OverlapCount(overlaps.len()));
    }
    let fits = overlaps
        .par_iter()
        .map(|ds| joint_fit(ds, reference))
        .collect::<Result<Vec<_>, _>>()?;
    let a: Vec<f64> = fits.iter().map(|f| decay_to_overlap(f.params.p_j)).collect();
    Ok(OverlapFits {
        overlaps: OverlapVector::from_slice(&a)?,
        fits,
    })
}

/// Joint-fit parameters of the ten overlaps of one gate in one replication.
pub type GateDraw = [JointParams; OVERLAP_BASIS_SIZE];

pub fn draw_overlaps(d: &GateDraw) -> [f64; OVERLAP_BASIS_SIZE] {
    d.map(|p| decay_to_overlap(p.p_j))
}

/// Resampling state for a set of gates sharing one reference.
pub struct JointResampler {
    reference: Resampler,
    gates: Vec<Vec<Resampler>>,
    starts: Vec<Vec<JointParams>>,
}

impl JointResampler {
    pub fn new(reference: &DecayDataset, gates: &[(&[DecayDataset], &OverlapFits)]) -> Self {
        Self {
            reference: Resampler::new(reference),
            gates: gates
                .iter()
                .map(|(ds, _)| ds.iter().map(Resampler::new).collect())
                .collect(),
            starts: gates
                .iter()
                .map(|(_, f)| f.fits.iter().map(|r| r.params).collect())
                .collect(),
        }
    }

    /// Fits of every gate for one replication.
    pub fn replicate(&self, seed: u64, rep: usize) -> Vec<GateDraw> {
        self.replicate_with(&mut replication_rng(seed, rep))
    }

    pub fn replicate_with(&self, rng: &mut ChaCha8Rng) -> Vec<GateDraw> {
        let reference: DecaySummary = self.reference.resample(rng);
        self.gates
            .iter()
            .zip(&self.starts)
            .map(|(rs, starts)| {
                let mut draw = [JointParams::default(); OVERLAP_BASIS_SIZE];
                for (j, (r, s)) in rs.iter().zip(starts).enumerate() {
                    let o = r.resample(rng);
                    draw[j] = joint_fit_warm(&o, &reference, s);
                }
                draw
            })
            .collect()
    }

    /// `replications` draws, outer index replication, inner index gate.
    pub fn run(&self, settings: &BootstrapSettings) -> Vec<Vec<GateDraw>> {
        (0..settings.replications)
            .into_par_iter()
            .map(|rep| self.replicate(settings.seed, rep))
            .collect()
    }
}

/// Overlap samples of gate `g` from bootstrap draws.
pub fn gate_overlap_samples(draws: &[Vec<GateDraw>], g: usize) -> Vec<[f64; OVERLAP_BASIS_SIZE]> {
    draws.iter().map(|d| draw_overlaps(&d[g])).collect()
}

/// Attaches percentile intervals of the draws of gate `g` to its fits.
pub fn attach_fit_cis(fits: &mut OverlapFits, draws: &[Vec<GateDraw>], g: usize) {
    for (j, fit) in fits.fits.iter_mut().enumerate() {
        let samples: Vec<JointParams> = draws.iter().map(|d| d[g][j]).collect();
        fit.ci = Some(joint_cis(&samples));
    }
}

/// Single-decay fit of the reference with percentile intervals on its rate.
pub fn reference_rb(reference: &DecayDataset, settings: &BootstrapSettings) -> Result<(SingleFit, Interval), FitError> {
    let fit = single_fit(reference)?;
    let resampler = Resampler::new(reference);
    let rates = (0..settings.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(settings.seed ^ REFERENCE_BOOTSTRAP_KEY, rep);
            single_fit_summary(&resampler.resample(&mut rng)).map(|f| f.p)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((fit, percentile_interval(&rates)))
}

const REFERENCE_BOOTSTRAP_KEY: u64 = 0x5851_f42d_4c95_7f2d;

/// Splits every dataset into first and second halves by bin index.
pub fn split_all(sets: &[DecayDataset]) -> Result<(Vec<DecayDataset>, Vec<DecayDataset>), SimError> {
    let mut first = Vec::with_capacity(sets.len());
    let mut second = Vec::with_capacity(sets.len());
    for ds in sets {
        let (a, b) = ds.split_halves()?;
        first.push(a);
        second.push(b);
    }
    Ok((first, second))
}

/// Per-entry percentile intervals of overlap samples.
pub fn overlap_intervals(samples: &[[f64; OVERLAP_BASIS_SIZE]]) -> Vec<Interval> {
    (0..OVERLAP_BASIS_SIZE)
        .map(|j| percentile_interval(&samples.iter().map(|a| a[j]).collect::<Vec<_>>()))
        .collect()
}

/// Average fidelity of a superoperator estimate to a unitary target.
pub fn fidelity_to(e: &SuperOp, target: &UnitaryOp) -> f64 {
    avg_fidelity(e, target)
}

/// Reconstruction of one gate with bootstrap intervals, optionally
/// corrected by a null-operation reconstruction from the same draws.
pub fn reconstruct_with_intervals(
    point: &OverlapFits,
    samples: &[[f64; OVERLAP_BASIS_SIZE]],
    null: Option<(&OverlapFits, &[[f64; OVERLAP_BASIS_SIZE]])>,
    target: &UnitaryOp,
) -> Result<Reconstruction, ExperimentError> {
    let mut overlaps = point.overlaps.clone();
    overlaps.ci = Some(overlap_intervals(samples));
    let e_prime = reconstruct_unital(&point.overlaps);
    let sample_ops: Vec<SuperOp> = samples.iter().map(|a| crate::reconstruct::PredictorMatrix::standard().solve(a)).collect();
    let fid_samples: Vec<f64> = sample_ops.iter().map(|e| fidelity_to(e, target)).collect();
    let mut rec = Reconstruction {
        overlaps,
        e_prime,
        corrected_left: None,
        corrected_right: None,
        fidelity: FidelityEstimate {
            value: fidelity_to(&e_prime, target),
            ci: Some(percentile_interval(&fid_samples)),
        },
        fidelity_left: None,
        fidelity_right: None,
    };
    if let Some((null_point, null_samples)) = null {
        let e0 = reconstruct_unital(&null_point.overlaps);
        let null_ops: Vec<SuperOp> = null_samples
            .iter()
            .map(|a| crate::reconstruct::PredictorMatrix::standard().solve(a))
            .collect();
        for side in [Side::Left, Side::Right] {
            let c = corrected(&e_prime, &e0, side)?;
            let vals: Vec<f64> = sample_ops
                .iter()
                .zip(&null_ops)
                .filter_map(|(e, n)| corrected(e, n, side).ok())
                .map(|c| fidelity_to(&c, target))
                .collect();
            let est = FidelityEstimate {
                value: fidelity_to(&c, target),
                ci: Some(percentile_interval(&vals)),
            };
            match side {
                Side::Left => {
                    rec.corrected_left = Some(c);
                    rec.fidelity_left = Some(est);
                }
                Side::Right => {
                    rec.corrected_right = Some(c);
                    rec.fidelity_right = Some(est);
                }
            }
        }
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::joint_fit_summaries;
    use crate::fit::Moments;
    use crate::simulate::expected_curve;

    /// Fits noise-free curves (exact means, nominal bin counts).
    fn exact_fits(gates: &GateSet, reference: &GateSet, spam: &SpamModel) -> OverlapFits {
        let settings = ProtocolSettings::default();
        let summarize = |set: &SequenceSet, g: &GateSet| {
            let curve = expected_curve(set, g, spam);
            let stats: Vec<(Length, Moments)> = curve
                .into_iter()
                .map(|(l, v)| {
                    let n = set.sequences.iter().filter(|s| s.length == l).count() as f64 * 100.0;
                    (l, Moments { count: n, sum: n * v, sumsq: n * v * v })
                })
                .collect();
            DecaySummary::from_moments(&stats)
        };
        let r = summarize(&reference_set(&settings).unwrap(), reference);
        let fits: Vec<FitResult> = overlap_sets(&settings)
            .unwrap()
            .iter()
            .map(|s| joint_fit_summaries(&summarize(s, gates), &r))
            .collect();
        let a: Vec<f64> = fits.iter().map(|f| decay_to_overlap(f.params.p_j)).collect();
        OverlapFits { overlaps: OverlapVector::from_slice(&a).unwrap(), fits }
    }

    #[test]
    fn noiseless_gates_reconstruct_exactly() {
        let h = SuperOp::from_unitary(&UnitaryOp::hadamard());
        let noise = NoiseModel::noiseless();
        let spam = SpamModel::device_default();
        let gates = GateSet::new(GroupKind::A4, &noise, &h);
        let reference = GateSet::new(GroupKind::A4, &noise, &SuperOp::identity());
        let fits = exact_fits(&gates, &reference, &spam);
        let e = reconstruct_unital(&fits.overlaps);
        assert!(e.max_abs_diff(&h) < 1e-6, "{e}");
    }

    #[test]
    fn correction_recovers_noisy_gate_without_shot_noise() {
        let h = UnitaryOp::hadamard();
        let noise = NoiseModel::device_default();
        let spam = SpamModel::device_default();
        let gates = GateSet::new(GroupKind::A4, &noise, &SuperOp::from_unitary(&h));
        let null = GateSet::new(GroupKind::A4, &noise, &SuperOp::identity());
        let fh = exact_fits(&gates, &null, &spam);
        let f0 = exact_fits(&null, &null, &spam);
        let e = reconstruct_unital(&fh.overlaps);
        let e0 = reconstruct_unital(&f0.overlaps);
        let truth = avg_fidelity(&gates.target, &h);
        for side in [Side::Left, Side::Right] {
            let c = corrected(&e, &e0, side).unwrap();
            let f = avg_fidelity(&c, &h);
            // Noiseless frame updates make the noise gate dependent, so the
            // correction is only approximate.
            assert!((f - truth).abs() < 5e-4, "{side:?}: {f} vs {truth}");
            assert!((f - truth).abs() < (avg_fidelity(&e, &h) - truth).abs() / 4.0);
        }
    }

    #[test]
    fn slow_null_overlap_does_not_stall_on_box_edge() {
        let noise = NoiseModel::device_default();
        let spam = SpamModel::device_default();
        let null = GateSet::new(GroupKind::A4, &noise, &SuperOp::identity());
        let set = &overlap_sets(&ProtocolSettings::default()).unwrap()[0];
        for seed in 4..7 {
            let settings = ProtocolSettings {
                sample: SampleConfig { seed, ..SampleConfig::default() },
                ..ProtocolSettings::default()
            };
            let r = simulate_reference(&noise, &spam, &settings).unwrap();
            let o = sample_dataset(set, &null, &spam, &settings.sample, overlap_stream(0, 1)).unwrap();
            let p = joint_fit(&o, &r).unwrap().params.p_j;
            assert!((p - 0.9965).abs() < 0.002, "seed {seed}: {p}");
        }
    }
}
