//! Cross-validated negativity witnesses for reconstructed channels.
//!
//! The witness is the Choi eigenvector of the most negative eigenvalue of a
//! reconstruction from the first half of the data. Its expectation under a
//! reconstruction from the second half, with percentile intervals from
//! resampling that half only, decides whether the negativity is real.

use std::hash::{Hash, Hasher};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rand_chacha::ChaCha8Rng;

use crate::experiment::{draw_overlaps, fit_overlaps, split_all, ExperimentError, JointResampler, OverlapFits};
use crate::fit::{percentile_interval, replication_rng, Interval};
use crate::pauli::{min_eig_and_vector, ChoiMatrix, SuperOp, C64};
use crate::reconstruct::{
    corrected, expectations_from_probabilities, qpt_estimate, qpt_linear_inversion, PredictorMatrix,
    QptDataset, Side,
};
use crate::simulate::DecayDataset;

/// Fixed negativity witness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    /// Unit vector, as `[re, im]` pairs.
    pub vector: [[f64; 2]; 4],
    /// Eigenvalue it was built from.
    pub eigenvalue: f64,
    pub multiplicity: usize,
}

impl Witness {
    pub fn components(&self) -> [C64; 4] {
        self.vector.map(|[re, im]| C64::new(re, im))
    }

    /// Stable fingerprint of the vector's bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for [re, im] in self.vector {
            re.to_bits().hash(&mut h);
            im.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

/// Witness from the half-1 reconstruction.
pub fn build_witness(e1: &SuperOp) -> Witness {
    let min = min_eig_and_vector(&e1.choi());
    Witness {
        vector: min.vector.map(|z| [z.re, z.im]),
        eigenvalue: min.value,
        multiplicity: min.multiplicity,
    }
}

/// `w^dagger J(e2) w`.
pub fn evaluate_witness(w: &Witness, e2: &SuperOp) -> f64 {
    witness_on_choi(w, &e2.choi())
}

pub fn witness_on_choi(w: &Witness, j: &ChoiMatrix) -> f64 {
    j.expectation(&w.components())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub method: String,
    pub gate: String,
    pub witness: Witness,
    pub witness_fingerprint: u64,
    pub expectation: f64,
    pub ci: Interval,
    pub replications: usize,
    pub samples_per_config: usize,
}

impl WitnessReport {
    /// Interval lies entirely below zero.
    pub fn certifies_negativity(&self) -> bool {
        self.ci.hi < 0.0
    }
}

/// Evaluates `w` on the point estimate and on `replications` resampled
/// estimates of half 2. `estimate(None)` is the point estimate and
/// `estimate(Some(rng))` a resampled one; the witness is never rebuilt.
pub fn witness_bootstrap<F, E>(
    method: &str,
    gate: &str,
    w: &Witness,
    samples_per_config: usize,
    replications: usize,
    seed: u64,
    estimate: F,
) -> Result<WitnessReport, E>
where
    F: Fn(Option<&mut ChaCha8Rng>) -> Result<SuperOp, E> + Sync,
    E: Send,
{
    let fingerprint = w.fingerprint();
    let expectation = evaluate_witness(w, &estimate(None)?);
    let values = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(seed, rep);
            Ok(evaluate_witness(w, &estimate(Some(&mut rng))?))
        })
        .collect::<Result<Vec<f64>, E>>()?;
    assert_eq!(w.fingerprint(), fingerprint, "witness changed during resampling");
    Ok(WitnessReport {
        method: method.to_string(),
        gate: gate.to_string(),
        witness: *w,
        witness_fingerprint: fingerprint,
        expectation,
        ci: percentile_interval(&values),
        replications,
        samples_per_config,
    })
}

/// Cross-validated witness for an RBT reconstruction. With `null` given,
/// both halves are corrected by the null-operation reconstruction of the
/// same half on `side`.
pub fn rbt_witness(
    gate: &str,
    reference: &DecayDataset,
    overlaps: &[DecayDataset],
    null: Option<(&[DecayDataset], Side)>,
    replications: usize,
    seed: u64,
) -> Result<WitnessReport, ExperimentError> {
    let (ref1, ref2) = reference.split_halves()?;
    let (gate1, gate2) = split_all(overlaps)?;
    let null_halves = null.map(|(ds, side)| split_all(ds).map(|h| (h, side))).transpose()?;

    let estimate = |a: &[f64], a0: Option<&[f64]>| -> Result<SuperOp, ExperimentError> {
        let solver = PredictorMatrix::standard();
        let e = solver.solve(a);
        match (a0, null) {
            (Some(a0), Some((_, side))) => Ok(corrected(&e, &solver.solve(a0), side)?),
            _ => Ok(e),
        }
    };

    let fits1 = fit_overlaps(&ref1, &gate1)?;
    let null1 = null_halves.as_ref().map(|((n1, _), _)| fit_overlaps(&ref1, n1)).transpose()?;
    let e1 = estimate(&fits1.overlaps.a, null1.as_ref().map(|f| &f.overlaps.a[..]))?;
    let w = build_witness(&e1);

    let fits2 = fit_overlaps(&ref2, &gate2)?;
    let null2 = null_halves.as_ref().map(|((_, n2), _)| fit_overlaps(&ref2, n2)).transpose()?;
    let mut sets: Vec<(&[DecayDataset], &OverlapFits)> = vec![(&gate2, &fits2)];
    if let (Some(((_, n2), _)), Some(f)) = (&null_halves, &null2) {
        sets.push((n2, f));
    }
    let resampler = JointResampler::new(&ref2, &sets);
    let method = match null {
        None => "rbt".to_string(),
        Some((_, Side::Left)) => "rbt-left".to_string(),
        Some((_, Side::Right)) => "rbt-right".to_string(),
    };
    witness_bootstrap(
        &method,
        gate,
        &w,
        ref2.bin_count(),
        replications,
        seed,
        |rng: Option<&mut ChaCha8Rng>| match rng {
            None => estimate(&fits2.overlaps.a, null2.as_ref().map(|f| &f.overlaps.a[..])),
            Some(rng) => {
                let draws = resampler.replicate_with(rng);
                let null = draws.get(1).map(draw_overlaps);
                estimate(&draw_overlaps(&draws[0]), null.as_ref().map(|x| &x[..]))
            }
        },
    )
}

/// Cross-validated witness for a tomographic estimate that divides out
/// `assumed_assignment` as readout contrast.
pub fn qpt_witness(
    gate: &str,
    ds: &QptDataset,
    assumed_assignment: Option<f64>,
    replications: usize,
    seed: u64,
) -> Result<WitnessReport, ExperimentError> {
    let (half1, half2) = ds.split_halves()?;
    let w = build_witness(&qpt_estimate(&half1, assumed_assignment)?);
    let samples = half2.counts.first().and_then(|c| c.first()).map_or(0, Vec::len);
    witness_bootstrap("qpt", gate, &w, samples, replications, seed, |rng: Option<&mut ChaCha8Rng>| {
        let p = match rng {
            None => half2.probabilities(),
            Some(rng) => half2.resample(rng),
        };
        Ok(qpt_linear_inversion(&expectations_from_probabilities(&p, assumed_assignment)?)?)
    })
}

/// Rows for a method/gate/expectation/interval table.
pub fn witness_csv<W: std::io::Write>(out: W, reports: &[WitnessReport]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "gate", "expectation", "lo", "hi"])?;
    for r in reports {
        w.write_record([
            r.method.clone(),
            r.gate.clone(),
            format!("{:.6e}", r.expectation),
            format!("{:.6e}", r.ci.lo),
            format!("{:.6e}", r.ci.hi),
        ])?;
    }
    w.flush()?;
    Ok(())
}
