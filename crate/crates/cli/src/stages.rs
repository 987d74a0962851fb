//! Pipeline stages. Each reads its inputs from files, so a staged run and
//! the fused pipeline see the same bytes.

use std::collections::BTreeMap;

use rbt_core::clifford::{GroupKind, OVERLAP_BASIS_SIZE};
use rbt_core::experiment::{
    attach_fit_cis, gate_overlap_samples, overlap_stream, qpt_stream, reconstruct_with_intervals,
    reference_rb, JointResampler, OverlapFits, ProtocolSettings, REFERENCE_STREAM,
};
use rbt_core::experiment::{fit_overlaps, overlap_sets, reference_set};
use rbt_core::fit::{percentile_interval, replication_rng, Interval, SingleFit};
use rbt_core::pauli::{avg_fidelity, SuperOp, UnitaryOp};
use rbt_core::physicality::{qpt_witness, rbt_witness, WitnessReport};
use rbt_core::pulse::{discretization_sweep, sweep_csv};
use rbt_core::reconstruct::{
    expectations_from_probabilities, hinton_records, qpt_estimate, qpt_linear_inversion,
    w_fidelity_direct, w_fidelity_direct_bounds, QptDataset, Reconstruction, Side,
};
use rbt_core::sequence::SequenceSet;
use rbt_core::reconstruct::simulate_qpt;
use rbt_core::simulate::{sample_dataset, write_datasets_csv, DecayDataset, GateSet};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::tables::{
    overlap_layout, read_decays, read_draws_csv, read_qpt_csv, write_draws_csv, write_qpt_csv,
};
use crate::workspace::{sha256_hex, Workspace};

pub const SEQUENCES: &str = "sequences.json";
pub const DATASET: &str = "dataset.csv";
pub const NULL_DATASET: &str = "null_dataset.csv";
pub const QPT_DATA: &str = "qpt.csv";
pub const FITS: &str = "fits.json";
pub const DRAWS: &str = "draws.csv";
pub const RECONSTRUCTION: &str = "reconstruction.json";
pub const HINTON: &str = "hinton.csv";
pub const SUMMARY: &str = "summary.json";
pub const WITNESS: &str = "witness.json";
pub const PULSE_SCAN: &str = "pulse_scan.csv";

/// Stream tag of the target; the null operation uses the next one.
const TARGET_TAG: u64 = 0;
const NULL_TAG: u64 = 1;
const QPT_BOOTSTRAP_KEY: u64 = 0x2545_f491_4f6c_dd1d;
const WITNESS_KEY: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequencesFile {
    pub config_hash: String,
    pub reference: SequenceSet,
    pub overlaps: Vec<SequenceSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFit {
    pub fit: SingleFit,
    pub p_ci: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateFits {
    pub gate: String,
    #[serde(flatten)]
    pub fits: OverlapFits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsRef {
    pub file: String,
    pub sha256: String,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitsFile {
    pub config_hash: String,
    pub target: String,
    pub reference: ReferenceFit,
    /// The target first, then the null operation when run.
    pub gates: Vec<GateFits>,
    pub draws: DrawsRef,
    /// SHA-256 of the datasets fitted.
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionFile {
    pub config_hash: String,
    pub target: String,
    pub true_fidelity: f64,
    #[serde(flatten)]
    pub reconstruction: Reconstruction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityRow {
    pub method: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub target: String,
    /// Average fidelity of the simulated noisy target.
    pub true_fidelity: f64,
    pub fidelities: Vec<FidelityRow>,
    /// SHA-256 of the stage files this summary was built from.
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessFile {
    pub config_hash: String,
    pub target: String,
    pub replications: usize,
    pub reports: Vec<WitnessReport>,
    pub inputs: BTreeMap<String, String>,
}

fn settings(ws: &Workspace) -> ProtocolSettings {
    ws.config.protocol_settings()
}

fn target_unitary(ws: &Workspace) -> Result<UnitaryOp, CliError> {
    Ok(ws.config.target.unitary()?)
}

fn noisy_target(ws: &Workspace) -> Result<GateSet, CliError> {
    let noise = ws.config.noise_model()?;
    Ok(GateSet::new(GroupKind::A4, &noise, &ws.config.target_superop()?))
}

fn shots_per_bin(ws: &Workspace) -> u16 {
    ws.config.protocol.bin_size as u16
}

fn bins(ws: &Workspace) -> usize {
    ws.config.protocol.shots / ws.config.protocol.bin_size
}

fn qpt_assumed(ws: &Workspace) -> Option<f64> {
    Some(
        ws.config
            .qpt
            .assumed_assignment_fidelity
            .unwrap_or(ws.config.spam.assignment_fidelity),
    )
}

pub fn gen_sequences(ws: &mut Workspace) -> Result<(), CliError> {
    let s = settings(ws);
    let file = SequencesFile {
        config_hash: ws.config_hash.clone(),
        reference: reference_set(&s).map_err(|e| CliError::Numerical(e.to_string()))?,
        overlaps: overlap_sets(&s).map_err(|e| CliError::Numerical(e.to_string()))?,
    };
    let mut bytes = serde_json::to_vec(&file).expect("sequences serialize");
    bytes.push(b'\n');
    ws.write(SEQUENCES, &bytes)
}

pub fn simulate(ws: &mut Workspace) -> Result<(), CliError> {
    let seqs: SequencesFile = ws.read_json(SEQUENCES)?;
    let path = ws.source(SEQUENCES);
    if seqs.overlaps.len() != OVERLAP_BASIS_SIZE
        || seqs.overlaps.iter().enumerate().any(|(i, s)| s.overlap != i + 1)
    {
        return Err(CliError::data(&path, "overlap sets must be j = 1..10 in order"));
    }
    let noise = ws.config.noise_model()?;
    let spam = ws.config.spam_model()?;
    let cfg = ws.config.sample_config();
    let null_gates = GateSet::new(GroupKind::A4, &noise, &SuperOp::identity());
    let target = noisy_target(ws)?;
    let sample = |sets: &[SequenceSet], gates: &GateSet, tag: u64| -> Result<Vec<DecayDataset>, CliError> {
        sets.iter()
            .enumerate()
            .map(|(i, set)| {
                sample_dataset(set, gates, &spam, &cfg, overlap_stream(tag, i + 1))
                    .map_err(|e| CliError::Numerical(e.to_string()))
            })
            .collect()
    };
    let reference = sample_dataset(&seqs.reference, &null_gates, &spam, &cfg, REFERENCE_STREAM)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let overlaps = sample(&seqs.overlaps, &target, TARGET_TAG)?;
    let mut all = vec![&reference];
    all.extend(overlaps.iter());
    ws.write(DATASET, &datasets_bytes(&all)?)?;
    if ws.config.protocol.null_correction {
        let null = sample(&seqs.overlaps, &null_gates, NULL_TAG)?;
        ws.write(NULL_DATASET, &datasets_bytes(&null.iter().collect::<Vec<_>>())?)?;
    }
    if ws.config.qpt.enabled {
        let q = simulate_qpt(&target.target, &spam, &cfg, qpt_stream(TARGET_TAG))
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        ws.write(QPT_DATA, &write_qpt_csv(&q))?;
    }
    Ok(())
}

fn datasets_bytes(sets: &[&DecayDataset]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_datasets_csv(&mut buf, sets).map_err(|e| CliError::Numerical(e.to_string()))?;
    Ok(buf)
}

struct Decays {
    reference: DecayDataset,
    target: Vec<DecayDataset>,
    null: Option<Vec<DecayDataset>>,
    digests: BTreeMap<String, String>,
}

fn read_decay_files(ws: &Workspace) -> Result<Decays, CliError> {
    let mut digests = BTreeMap::new();
    let (path, bytes) = ws.read(DATASET)?;
    digests.insert(DATASET.to_string(), sha256_hex(&bytes));
    let sets = read_decays(&path, &bytes, shots_per_bin(ws), bins(ws))?;
    let (reference, target) = overlap_layout(&path, sets, true)?;
    let null = if ws.config.protocol.null_correction {
        let (path, bytes) = ws.read(NULL_DATASET)?;
        digests.insert(NULL_DATASET.to_string(), sha256_hex(&bytes));
        let sets = read_decays(&path, &bytes, shots_per_bin(ws), bins(ws))?;
        Some(overlap_layout(&path, sets, false)?.1)
    } else {
        None
    };
    Ok(Decays {
        reference: reference.expect("layout includes reference"),
        target,
        null,
        digests,
    })
}

fn read_qpt(ws: &Workspace) -> Result<(QptDataset, String), CliError> {
    let (path, bytes) = ws.read(QPT_DATA)?;
    Ok((read_qpt_csv(&path, &bytes, shots_per_bin(ws), bins(ws))?, sha256_hex(&bytes)))
}

pub fn fit(ws: &mut Workspace) -> Result<(), CliError> {
    let d = read_decay_files(ws)?;
    let mut gates = vec![("target", fit_overlaps(&d.reference, &d.target)?)];
    if let Some(null) = &d.null {
        gates.push(("null", fit_overlaps(&d.reference, null)?));
    }
    let mut sets: Vec<(&[DecayDataset], &OverlapFits)> = vec![(&d.target, &gates[0].1)];
    if let Some(null) = &d.null {
        sets.push((null, &gates[1].1));
    }
    let bootstrap = ws.config.bootstrap();
    let draws = JointResampler::new(&d.reference, &sets).run(&bootstrap);
    for (g, (_, fits)) in gates.iter_mut().enumerate() {
        attach_fit_cis(fits, &draws, g);
    }
    let (fit, p_ci) = reference_rb(&d.reference, &bootstrap)?;
    let draws_bytes = write_draws_csv(&draws);
    let file = FitsFile {
        config_hash: ws.config_hash.clone(),
        target: ws.config.target.label(),
        reference: ReferenceFit { fit, p_ci },
        gates: gates
            .into_iter()
            .map(|(name, fits)| GateFits {
                gate: name.to_string(),
                fits,
            })
            .collect(),
        draws: DrawsRef {
            file: DRAWS.to_string(),
            sha256: sha256_hex(&draws_bytes),
            replications: bootstrap.replications,
            seed: bootstrap.seed,
        },
        inputs: d.digests.clone(),
    };
    ws.write(DRAWS, &draws_bytes)?;
    ws.write_json(FITS, &file)
}

/// Average fidelity of the RB reference's mean gate.
fn rb_fidelity(p: f64) -> f64 {
    (1.0 + p) / 2.0
}

pub fn reconstruct(ws: &mut Workspace) -> Result<(), CliError> {
    let fits: FitsFile = ws.read_json(FITS)?;
    let fits_path = ws.source(FITS);
    let (draws_path, draws_bytes) = ws.read(&fits.draws.file)?;
    if sha256_hex(&draws_bytes) != fits.draws.sha256 {
        return Err(CliError::data(&draws_path, format!("does not match the digest recorded in {FITS}")));
    }
    let gate_count = fits.gates.len();
    if !(1..=2).contains(&gate_count) || fits.gates[0].fits.fits.len() != OVERLAP_BASIS_SIZE {
        return Err(CliError::data(&fits_path, "expected target fits and optional null fits"));
    }
    let draws = read_draws_csv(&draws_path, &draws_bytes, fits.draws.replications, gate_count)?;
    let u = target_unitary(ws)?;
    let samples = gate_overlap_samples(&draws, 0);
    let null_samples = (gate_count == 2).then(|| gate_overlap_samples(&draws, 1));
    let null = fits.gates.get(1).zip(null_samples.as_deref()).map(|(g, s)| (&g.fits, s));
    let rec = reconstruct_with_intervals(&fits.gates[0].fits, &samples, null, &u)?;
    let true_fidelity = avg_fidelity(&noisy_target(ws)?.target, &u);

    let mut inputs = fits.inputs.clone();
    let (_, fits_bytes) = ws.read(FITS)?;
    inputs.insert(FITS.to_string(), sha256_hex(&fits_bytes));
    inputs.insert(DRAWS.to_string(), fits.draws.sha256.clone());

    let p = &fits.reference;
    let mut rows = vec![
        FidelityRow {
            method: "rb-reference".into(),
            value: rb_fidelity(p.fit.p),
            ci: Some(Interval {
                lo: rb_fidelity(p.p_ci.lo),
                hi: rb_fidelity(p.p_ci.hi),
            }),
        },
        FidelityRow {
            method: "rbt".into(),
            value: rec.fidelity.value,
            ci: rec.fidelity.ci,
        },
    ];
    for (method, est) in [("rbt-left", rec.fidelity_left), ("rbt-right", rec.fidelity_right)] {
        if let Some(est) = est {
            rows.push(FidelityRow {
                method: method.into(),
                value: est.value,
                ci: est.ci,
            });
        }
    }
    if ws.config.qpt.enabled {
        let (q, digest) = read_qpt(ws)?;
        inputs.insert(QPT_DATA.to_string(), digest);
        rows.push(qpt_row(ws, &q, &u)?);
    }
    if ws.config.target.is_w() {
        let a = &rec.overlaps.a;
        let ci = rec.overlaps.ci.as_ref().map(|c| w_fidelity_direct_bounds(c[0], c[4], c[5]));
        rows.push(FidelityRow {
            method: "w-direct".into(),
            value: w_fidelity_direct(a[0], a[4], a[5]),
            ci,
        });
    }

    let target = ws.config.target.label();
    let mut hinton = csv::Writer::from_writer(Vec::new());
    let mut views = vec![("raw", &rec.e_prime)];
    views.extend(rec.corrected_left.as_ref().map(|e| ("left", e)));
    views.extend(rec.corrected_right.as_ref().map(|e| ("right", e)));
    for (view, e) in views {
        for r in hinton_records(&format!("{target}:{view}"), e) {
            hinton.serialize(r).map_err(|e| CliError::Numerical(e.to_string()))?;
        }
    }
    let hinton = hinton.into_inner().expect("in-memory flush");

    ws.write_json(
        RECONSTRUCTION,
        &ReconstructionFile {
            config_hash: ws.config_hash.clone(),
            target: target.clone(),
            true_fidelity,
            reconstruction: rec,
        },
    )?;
    ws.write(HINTON, &hinton)?;
    ws.write_json(
        SUMMARY,
        &Summary {
            config_hash: ws.config_hash.clone(),
            target,
            true_fidelity,
            fidelities: rows,
            inputs,
        },
    )
}

fn qpt_row(ws: &Workspace, q: &QptDataset, u: &UnitaryOp) -> Result<FidelityRow, CliError> {
    let assumed = qpt_assumed(ws);
    let value = avg_fidelity(&qpt_estimate(q, assumed)?, u);
    let seed = ws.config.seed ^ QPT_BOOTSTRAP_KEY;
    let samples = (0..ws.config.protocol.replications)
        .map(|rep| {
            let p = q.resample(&mut replication_rng(seed, rep));
            let e = qpt_linear_inversion(&expectations_from_probabilities(&p, assumed)?)?;
            Ok(avg_fidelity(&e, u))
        })
        .collect::<Result<Vec<f64>, CliError>>()?;
    Ok(FidelityRow {
        method: "qpt".into(),
        value,
        ci: Some(percentile_interval(&samples)),
    })
}

pub fn witness(ws: &mut Workspace) -> Result<(), CliError> {
    let d = read_decay_files(ws)?;
    let reps = ws.config.witness.replications;
    let seed = ws.config.seed ^ WITNESS_KEY;
    let target = ws.config.target.label();
    let mut reports = vec![rbt_witness(&target, &d.reference, &d.target, None, reps, seed)?];
    if let Some(null) = &d.null {
        reports.push(rbt_witness(
            &target,
            &d.reference,
            &d.target,
            Some((null, Side::Left)),
            reps,
            seed,
        )?);
    }
    let mut inputs = d.digests;
    if ws.config.qpt.enabled {
        let (q, digest) = read_qpt(ws)?;
        inputs.insert(QPT_DATA.to_string(), digest);
        reports.push(qpt_witness(&target, &q, qpt_assumed(ws), reps, seed)?);
    }
    ws.write_json(
        WITNESS,
        &WitnessFile {
            config_hash: ws.config_hash.clone(),
            target,
            replications: reps,
            reports,
            inputs,
        },
    )
}

pub fn pulse_scan(ws: &mut Workspace) -> Result<(), CliError> {
    let spec = ws.config.target.rotation()?;
    let points = discretization_sweep(&spec, &ws.config.pulse.samples, &ws.config.duffing())?;
    let mut buf = Vec::new();
    sweep_csv(&mut buf, &points).map_err(|e| CliError::Numerical(e.to_string()))?;
    ws.write(PULSE_SCAN, &buf)
}

/// Every data stage in order.
pub fn pipeline(ws: &mut Workspace) -> Result<(), CliError> {
    gen_sequences(ws)?;
    simulate(ws)?;
    fit(ws)?;
    reconstruct(ws)?;
    witness(ws)
}
