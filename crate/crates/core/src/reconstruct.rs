//! Linear reconstruction of the unital part of a channel from its overlaps
//! with the A4 basis, error-channel corrections, and baseline process
//! tomography by linear inversion.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix4};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clifford::{overlap_basis, GroupElement, OVERLAP_BASIS_SIZE};
use crate::fit::{percentile_interval, Interval};
use crate::noise::SpamModel;
use crate::pauli::{PauliVector, SuperOp, UnitaryOp};
use crate::simulate::{sample_counts, SampleConfig, SimError};

/// Largest condition number accepted when inverting an error channel.
pub const MAX_CONDITION: f64 = 1e6;

/// Conservative bound on any qubit channel's overlap with a unitary.
pub const OVERLAP_BOUND: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReconstructionError {
    #[error("predictor basis has rank {0}, expected {1}")]
    RankDeficient(usize, usize),
    #[error("overlap {index} = {value} exceeds the bound {OVERLAP_BOUND}")]
    OverlapOutOfRange { index: usize, value: f64 },
    #[error("overlap vector has {0} entries, expected 10")]
    WrongLength(usize),
    #[error("error channel is ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),
    #[error("tomography design matrix is singular")]
    SingularDesign,
    #[error("assumed assignment fidelity {0} gives no measurement contrast")]
    NoContrast(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `(E0')^-1 E'`
    Left,
    /// `E' (E0')^-1`
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapVector {
    pub a: [f64; OVERLAP_BASIS_SIZE],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<Vec<Interval>>,
}

impl OverlapVector {
    pub fn new(a: [f64; OVERLAP_BASIS_SIZE]) -> Result<Self, ReconstructionError> {
        for (i, &v) in a.iter().enumerate() {
            if !(v.abs() <= OVERLAP_BOUND) {
                return Err(ReconstructionError::OverlapOutOfRange { index: i + 1, value: v });
            }
        }
        Ok(Self { a, ci: None })
    }

    pub fn from_slice(a: &[f64]) -> Result<Self, ReconstructionError> {
        let arr: [f64; OVERLAP_BASIS_SIZE] = a
            .try_into()
            .map_err(|_| ReconstructionError::WrongLength(a.len()))?;
        Self::new(arr)
    }

    /// Exact overlaps of a known channel.
    pub fn of_channel(e: &SuperOp) -> Self {
        let mut a = [0.0; OVERLAP_BASIS_SIZE];
        for (slot, c) in a.iter_mut().zip(overlap_basis()) {
            *slot = crate::pauli::overlap(&c.superop, e);
        }
        Self { a, ci: None }
    }
}

/// Rows are the row-major vectorized basis superoperators, so that
/// `P vec(E) = a`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorMatrix {
    p: DMatrix<f64>,
    /// Thin QR of the transpose, for minimum-norm solves.
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl PredictorMatrix {
    pub fn new(basis: &[GroupElement]) -> Result<Self, ReconstructionError> {
        let k = basis.len();
        let p = DMatrix::from_fn(k, 16, |i, j| basis[i].superop.to_row_major()[j]);
        let rank = p.rank(1e-9);
        if rank != k {
            return Err(ReconstructionError::RankDeficient(rank, k));
        }
        let qr = p.transpose().qr();
        Ok(Self {
            q: qr.q(),
            r: qr.r(),
            p,
        })
    }

    /// The A4 overlap basis predictor, built once.
    pub fn standard() -> &'static Self {
        static P: std::sync::OnceLock<PredictorMatrix> = std::sync::OnceLock::new();
        P.get_or_init(|| PredictorMatrix::new(overlap_basis()).expect("basis has full rank"))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn rank(&self) -> usize {
        self.p.rank(1e-9)
    }

    pub fn predict(&self, e: &SuperOp) -> DVector<f64> {
        &self.p * DVector::from_row_slice(&e.to_row_major())
    }

    /// Minimum-norm `x` with `P x = a`: `x = Q R^-T a`.
    pub fn solve(&self, a: &[f64]) -> SuperOp {
        let rhs = DVector::from_row_slice(a);
        let y = self
            .r
            .transpose()
            .solve_lower_triangular(&rhs)
            .expect("R has a nonzero diagonal for a full-rank basis");
        let x = &self.q * y;
        let mut v = [0.0; 16];
        v.copy_from_slice(x.as_slice());
        // The basis spans only the unital block; clear rounding residue.
        for k in 1..4 {
            v[k] = 0.0;
            v[4 * k] = 0.0;
        }
        SuperOp::from_row_major(&v)
    }
}

pub fn predictor_matrix(basis: &[GroupElement]) -> Result<PredictorMatrix, ReconstructionError> {
    PredictorMatrix::new(basis)
}

/// Least-squares, minimum-norm estimate of the unital part. No trace or
/// positivity constraint is imposed.
pub fn reconstruct_unital(a: &OverlapVector) -> SuperOp {
    PredictorMatrix::standard().solve(&a.a)
}

/// Removes an estimated error channel from `e` on the chosen side.
pub fn corrected(e: &SuperOp, e0: &SuperOp, side: Side) -> Result<SuperOp, ReconstructionError> {
    let cond = e0.condition_number();
    if !(cond <= MAX_CONDITION) {
        return Err(ReconstructionError::IllConditioned(cond));
    }
    let inv = e0.inverse().ok_or(ReconstructionError::IllConditioned(f64::INFINITY))?;
    Ok(match side {
        Side::Left => inv * *e,
        Side::Right => *e * inv,
    })
}

/// Weights expressing the W gate in A4 elements 1, 5 and 6.
pub fn w_weights() -> [f64; 3] {
    let s = 3f64.sqrt();
    [(1.0 + s) / 3.0, 1.0 / 3.0, (1.0 - s) / 3.0]
}

/// The W gate: a pi/6 rotation about (1, 1, 1).
pub fn w_gate() -> UnitaryOp {
    let n = 1.0 / 3f64.sqrt();
    UnitaryOp::rotation([n, n, n], PI / 6.0).expect("unit axis")
}

/// Average fidelity to W from three overlaps alone.
pub fn w_fidelity_direct(a1: f64, a5: f64, a6: f64) -> f64 {
    let [c1, c5, c6] = w_weights();
    (c1 * a1 + c5 * a5 + c6 * a6 + 2.0) / 6.0
}

/// Worst-case interval for [`w_fidelity_direct`] given separate intervals
/// for the three overlaps.
pub fn w_fidelity_direct_bounds(a1: Interval, a5: Interval, a6: Interval) -> Interval {
    let w = w_weights();
    let mut lo = 2.0;
    let mut hi = 2.0;
    for (c, iv) in w.iter().zip([a1, a5, a6]) {
        if *c >= 0.0 {
            lo += c * iv.lo;
            hi += c * iv.hi;
        } else {
            lo += c * iv.hi;
            hi += c * iv.lo;
        }
    }
    Interval { lo: lo / 6.0, hi: hi / 6.0 }
}

/// Fidelity point estimates and intervals of one reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityEstimate {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub overlaps: OverlapVector,
    pub e_prime: SuperOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_left: Option<SuperOp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_right: Option<SuperOp>,
    pub fidelity: FidelityEstimate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity_left: Option<FidelityEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity_right: Option<FidelityEstimate>,
}

/// Record for a Hinton-style plot of a Pauli transfer matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HintonRecord {
    pub gate: String,
    pub row: &'static str,
    pub col: &'static str,
    pub magnitude: f64,
    pub sign: i8,
    /// False for entries the overlap data cannot determine.
    pub accessible: bool,
}

const LABELS: [&str; 4] = ["I", "X", "Y", "Z"];

/// Entries outside the unital, trace-preserving block are not determined
/// by overlaps.
pub fn is_accessible(row: usize, col: usize) -> bool {
    !((row == 0) ^ (col == 0))
}

pub fn hinton_records(gate: &str, e: &SuperOp) -> Vec<HintonRecord> {
    let mut out = Vec::with_capacity(16);
    for i in 0..4 {
        for j in 0..4 {
            let v = e.get(i, j);
            out.push(HintonRecord {
                gate: gate.to_string(),
                row: LABELS[i],
                col: LABELS[j],
                magnitude: v.abs(),
                sign: if v < 0.0 { -1 } else { 1 },
                accessible: is_accessible(i, j),
            });
        }
    }
    out
}

/// Nearest CPTP channel in Frobenius norm on the Choi matrix, by alternating
/// projections. Diagnostic only; never used by the estimators.
pub fn project_cptp(e: &SuperOp, iterations: usize) -> SuperOp {
    let mut cur = *e;
    for _ in 0..iterations {
        let choi = cur.choi();
        let eig = choi.matrix().symmetric_eigen();
        let mut pos = Matrix4::<crate::pauli::C64>::zeros();
        for k in 0..4 {
            let lam = eig.eigenvalues[k].max(0.0);
            let v = eig.eigenvectors.column(k);
            pos += v * v.adjoint() * crate::pauli::C64::new(lam, 0.0);
        }
        cur = superop_from_choi(&pos);
        // Trace preservation fixes the first row.
        let mut rows = cur.rows();
        rows[0] = [1.0, 0.0, 0.0, 0.0];
        cur = SuperOp::from_rows(rows);
    }
    cur
}

/// Inverse of [`crate::pauli::choi`].
pub fn superop_from_choi(j: &Matrix4<crate::pauli::C64>) -> SuperOp {
    let p = crate::pauli::paulis();
    let mut m = Matrix4::<f64>::zeros();
    for i in 0..4 {
        for k in 0..4 {
            let basis = p[k].map(|z| z.conj()).kronecker(&p[i]);
            // The B's are orthogonal with tr(B^dagger B) = 4, cancelling the
            // 1/4 in the forward map.
            let t = (basis.adjoint() * j).trace();
            m[(i, k)] = t.re;
        }
    }
    SuperOp::from_matrix(m)
}

/// Input states for tomography: |0>, |1>, |+>, |+i>.
pub fn qpt_inputs() -> [PauliVector; 4] {
    [
        PauliVector::from_bloch(0.0, 0.0, 1.0),
        PauliVector::from_bloch(0.0, 0.0, -1.0),
        PauliVector::from_bloch(1.0, 0.0, 0.0),
        PauliVector::from_bloch(0.0, 1.0, 0.0),
    ]
}

/// Ideal rotations preparing each tomography input from |0>.
fn qpt_preparations() -> [SuperOp; 4] {
    let r = |axis, angle| SuperOp::from_unitary(&UnitaryOp::rotation(axis, angle).unwrap());
    [
        SuperOp::identity(),
        r([1.0, 0.0, 0.0], PI),
        r([0.0, 1.0, 0.0], PI / 2.0),
        r([1.0, 0.0, 0.0], -PI / 2.0),
    ]
}

/// Ideal rotations mapping the X, Y, Z eigenbases onto Z before readout.
fn qpt_analyzers() -> [SuperOp; 3] {
    let r = |axis, angle| SuperOp::from_unitary(&UnitaryOp::rotation(axis, angle).unwrap());
    [
        r([0.0, 1.0, 0.0], -PI / 2.0),
        r([1.0, 0.0, 0.0], PI / 2.0),
        SuperOp::identity(),
    ]
}

/// Linear inversion from expectations `[input][observable]` of X, Y, Z.
pub fn qpt_linear_inversion(expectations: &[[f64; 3]; 4]) -> Result<SuperOp, ReconstructionError> {
    let inputs = qpt_inputs();
    let mut inp = Matrix4::<f64>::zeros();
    let mut out = Matrix4::<f64>::zeros();
    for k in 0..4 {
        for i in 0..4 {
            inp[(i, k)] = inputs[k].0[i];
        }
        out[(0, k)] = 1.0;
        for o in 0..3 {
            out[(o + 1, k)] = expectations[k][o];
        }
    }
    let inv = inp.try_inverse().ok_or(ReconstructionError::SingularDesign)?;
    Ok(SuperOp::from_matrix(out * inv))
}

/// Binned readouts for the 12 tomography settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QptDataset {
    pub shots_per_bin: u16,
    /// `counts[input][observable]`: bins of "0" outcomes.
    pub counts: Vec<Vec<Vec<u16>>>,
}

impl QptDataset {
    pub fn split_halves(&self) -> Result<(Self, Self), SimError> {
        let mut a = self.clone();
        let mut b = self.clone();
        for k in 0..self.counts.len() {
            for o in 0..self.counts[k].len() {
                let c = &self.counts[k][o];
                let n = c.len();
                if n < 2 || n % 2 != 0 {
                    return Err(SimError::OddBins(3 * k + o, n));
                }
                a.counts[k][o] = c[..n / 2].to_vec();
                b.counts[k][o] = c[n / 2..].to_vec();
            }
        }
        Ok((a, b))
    }

    /// Mean "0" probability per setting.
    pub fn probabilities(&self) -> [[f64; 3]; 4] {
        let mut p = [[0.0; 3]; 4];
        for k in 0..4 {
            for o in 0..3 {
                let c = &self.counts[k][o];
                let s: u64 = c.iter().map(|&x| x as u64).sum();
                p[k][o] = s as f64 / (c.len() as f64 * self.shots_per_bin as f64);
            }
        }
        p
    }

    /// Same settings with every bin list resampled with replacement.
    pub fn resample(&self, rng: &mut impl RngCore) -> [[f64; 3]; 4] {
        let mut p = [[0.0; 3]; 4];
        for k in 0..4 {
            for o in 0..3 {
                let c = &self.counts[k][o];
                let m = c.len() as u64;
                let mut s = 0u64;
                for _ in 0..c.len() {
                    s += c[((rng.next_u32() as u64 * m) >> 32) as usize] as u64;
                }
                p[k][o] = s as f64 / (c.len() as f64 * self.shots_per_bin as f64);
            }
        }
        p
    }
}

/// Samples tomography data for a channel. Preparation and analysis
/// rotations are ideal; the state starts from `spam.prep` and readout goes
/// through `spam`.
pub fn simulate_qpt(
    channel: &SuperOp,
    spam: &SpamModel,
    cfg: &SampleConfig,
    stream_tag: u64,
) -> Result<QptDataset, SimError> {
    cfg.validate()?;
    let preps = qpt_preparations();
    let analyzers = qpt_analyzers();
    let mut counts = vec![vec![Vec::new(); 3]; 4];
    for k in 0..4 {
        let state = channel.apply(&preps[k].apply(&spam.prep));
        for o in 0..3 {
            let p = crate::noise::apply_spam(&analyzers[o].apply(&state), spam);
            counts[k][o] = sample_counts(p, cfg, stream_tag, 3 * k + o);
        }
    }
    Ok(QptDataset {
        shots_per_bin: cfg.bin_size as u16,
        counts,
    })
}

/// Converts "0" probabilities to expectations, dividing out the contrast
/// `2f - 1` of an assumed assignment fidelity `f` (no rescale when `None`).
pub fn expectations_from_probabilities(
    p: &[[f64; 3]; 4],
    assumed_assignment: Option<f64>,
) -> Result<[[f64; 3]; 4], ReconstructionError> {
    let contrast = match assumed_assignment {
        Some(f) => {
            let c = 2.0 * f - 1.0;
            if c.abs() < 1e-9 {
                return Err(ReconstructionError::NoContrast(f));
            }
            c
        }
        None => 1.0,
    };
    let mut e = [[0.0; 3]; 4];
    for k in 0..4 {
        for o in 0..3 {
            e[k][o] = (2.0 * p[k][o] - 1.0) / contrast;
        }
    }
    Ok(e)
}

/// Tomographic estimate from a dataset.
pub fn qpt_estimate(ds: &QptDataset, assumed_assignment: Option<f64>) -> Result<SuperOp, ReconstructionError> {
    qpt_linear_inversion(&expectations_from_probabilities(&ds.probabilities(), assumed_assignment)?)
}

/// Percentile interval of a statistic over bootstrap samples.
pub fn fidelity_interval(samples: &[f64]) -> Interval {
    percentile_interval(samples)
}
