//! Single-qubit operators, states and channels in the Pauli-Liouville
//! representation.
//!
//! Pauli ordering is fixed as (I, X, Y, Z) throughout. A density operator is
//! written `rho = 1/2 * sum_k c_k P_k`, and a channel `E` is the real 4x4
//! matrix with entries `S[i][j] = 1/2 tr(P_i E(P_j))`. Composition follows the
//! operator convention: `compose(f, e)` is `f * e`, so `e` acts first.

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix2, Matrix4, SymmetricEigen, Vector3, Vector4};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;

/// Absolute tolerance on matrix residuals for unitarity and hermiticity checks.
pub const MATRIX_TOL: f64 = 1e-10;

/// Eigenvalues closer than this to the minimum are treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PauliError {
    #[error("matrix is not unitary (residual {0:.3e})")]
    NotUnitary(f64),
    #[error("matrix is not Hermitian (residual {0:.3e})")]
    NotHermitian(f64),
    #[error("rotation axis must have unit norm, got {0}")]
    BadAxis(f64),
}

const fn c(re: f64, im: f64) -> C64 {
    Complex { re, im }
}

/// The four Pauli matrices in (I, X, Y, Z) order.
pub fn paulis() -> [Matrix2<C64>; 4] {
    let o = c(0.0, 0.0);
    let l = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    [
        Matrix2::new(l, o, o, l),
        Matrix2::new(o, l, l, o),
        Matrix2::new(o, -i, i, o),
        Matrix2::new(l, o, o, -l),
    ]
}

/// Pauli-basis coefficients of a single-qubit operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PauliVector(pub [f64; 4]);

impl PauliVector {
    pub fn new(coeffs: [f64; 4]) -> Self {
        Self(coeffs)
    }

    /// A unit-trace state with the given Bloch vector.
    pub fn from_bloch(x: f64, y: f64, z: f64) -> Self {
        Self([1.0, x, y, z])
    }

    pub fn ground() -> Self {
        Self::from_bloch(0.0, 0.0, 1.0)
    }

    pub fn excited() -> Self {
        Self::from_bloch(0.0, 0.0, -1.0)
    }

    pub fn maximally_mixed() -> Self {
        Self::from_bloch(0.0, 0.0, 0.0)
    }

    pub fn coeffs(&self) -> [f64; 4] {
        self.0
    }

    pub fn bloch_norm(&self) -> f64 {
        (self.0[1] * self.0[1] + self.0[2] * self.0[2] + self.0[3] * self.0[3]).sqrt()
    }

    /// Unit trace and Bloch vector inside the unit ball.
    pub fn is_physical(&self, tol: f64) -> bool {
        (self.0[0] - 1.0).abs() <= tol && self.bloch_norm() <= 1.0 + tol
    }

    pub fn dot(&self, other: &[f64; 4]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    fn as_vector(&self) -> Vector4<f64> {
        Vector4::from(self.0)
    }
}

/// A 2x2 unitary, validated on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitaryOp(Matrix2<C64>);

impl UnitaryOp {
    pub fn new(m: Matrix2<C64>) -> Result<Self, PauliError> {
        let residual = max_entry_norm((m.adjoint() * m - Matrix2::identity()).iter());
        if residual > MATRIX_TOL {
            return Err(PauliError::NotUnitary(residual));
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix2::identity())
    }

    /// `exp(-i * coefficient * (n . sigma))`, the exponent form used for the
    /// A4 elements. Equivalent to a rotation by `2 * coefficient` about `n`.
    pub fn exp_pauli(axis: [f64; 3], coefficient: f64) -> Result<Self, PauliError> {
        let n = unit_axis(axis)?;
        let [_, x, y, z] = paulis();
        let gen = x * c(n[0], 0.0) + y * c(n[1], 0.0) + z * c(n[2], 0.0);
        let m = Matrix2::identity() * c(coefficient.cos(), 0.0) - gen * c(0.0, coefficient.sin());
        Ok(Self(m))
    }

    /// Rotation of the Bloch sphere by `angle` about `axis`.
    pub fn rotation(axis: [f64; 3], angle: f64) -> Result<Self, PauliError> {
        Self::exp_pauli(axis, angle / 2.0)
    }

    pub fn hadamard() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self(Matrix2::new(c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)))
    }

    pub fn matrix(&self) -> &Matrix2<C64> {
        &self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    /// Rotation axis and angle in `[0, pi]`, ignoring global phase. The axis is
    /// `[0, 0, 1]` for the identity.
    pub fn axis_angle(&self) -> ([f64; 3], f64) {
        // Remove the global phase so that det = 1, then U = cos(a/2) I - i sin(a/2) n.sigma.
        let det = self.0.determinant();
        let su = self.0 * C64::from_polar(1.0, -det.arg() / 2.0);
        let mut cos_half = 0.5 * (su[(0, 0)].re + su[(1, 1)].re);
        // The raw coefficients of -i n.sigma sin(a/2).
        let mut nx = -0.5 * (su[(0, 1)].im + su[(1, 0)].im);
        let mut ny = 0.5 * (su[(1, 0)].re - su[(0, 1)].re);
        let mut nz = -0.5 * (su[(0, 0)].im - su[(1, 1)].im);
        if cos_half < 0.0 {
            cos_half = -cos_half;
            nx = -nx;
            ny = -ny;
            nz = -nz;
        }
        let sin_half = (nx * nx + ny * ny + nz * nz).sqrt();
        if sin_half < 1e-14 {
            return ([0.0, 0.0, 1.0], 0.0);
        }
        let angle = 2.0 * sin_half.atan2(cos_half.min(1.0));
        ([nx / sin_half, ny / sin_half, nz / sin_half], angle)
    }
}

impl Mul for UnitaryOp {
    type Output = UnitaryOp;
    fn mul(self, rhs: UnitaryOp) -> UnitaryOp {
        UnitaryOp(self.0 * rhs.0)
    }
}

fn max_entry_norm<'a>(entries: impl Iterator<Item = &'a C64>) -> f64 {
    entries.map(|z| z.norm()).fold(0.0, f64::max)
}

pub(crate) fn unit_axis(axis: [f64; 3]) -> Result<[f64; 3], PauliError> {
    let norm = Vector3::from(axis).norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(PauliError::BadAxis(norm));
    }
    Ok(axis)
}

/// Pauli-Liouville matrix of a single-qubit linear map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperOp(Matrix4<f64>);

impl SuperOp {
    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    pub fn from_matrix(m: Matrix4<f64>) -> Self {
        Self(m)
    }

    pub fn from_rows(rows: [[f64; 4]; 4]) -> Self {
        Self(Matrix4::from_fn(|i, j| rows[i][j]))
    }

    pub fn diagonal(d: [f64; 4]) -> Self {
        Self(Matrix4::from_diagonal(&Vector4::from(d)))
    }

    /// Row-major 16-vector.
    pub fn from_row_major(v: &[f64; 16]) -> Self {
        Self(Matrix4::from_fn(|i, j| v[4 * i + j]))
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for i in 0..4 {
            for j in 0..4 {
                out[4 * i + j] = self.0[(i, j)];
            }
        }
        out
    }

    pub fn rows(&self) -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = self.0[(i, j)];
            }
        }
        out
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Map given by Kraus operators: `rho -> sum_k K rho K^dagger`.
    pub fn from_kraus(kraus: &[Matrix2<C64>]) -> Self {
        let p = paulis();
        Self(Matrix4::from_fn(|i, j| {
            kraus
                .iter()
                .map(|k| 0.5 * (p[i] * k * p[j] * k.adjoint()).trace().re)
                .sum()
        }))
    }

    pub fn from_unitary(u: &UnitaryOp) -> Self {
        Self::from_kraus(&[u.0])
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// The adjoint map. In the Hermitian Pauli basis this is the transpose.
    pub fn adjoint(&self) -> Self {
        self.transpose()
    }

    /// Replace the image of the identity by the identity, keeping every
    /// other column.
    pub fn unital_part(&self) -> Self {
        let mut m = self.0;
        m[(0, 0)] = 1.0;
        for i in 1..4 {
            m[(i, 0)] = 0.0;
        }
        Self(m)
    }

    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        (self.0[(0, 0)] - 1.0).abs() <= tol && (1..4).all(|j| self.0[(0, j)].abs() <= tol)
    }

    pub fn apply(&self, state: &PauliVector) -> PauliVector {
        let v = self.0 * state.as_vector();
        PauliVector([v[0], v[1], v[2], v[3]])
    }

    pub fn inverse(&self) -> Option<Self> {
        self.0.try_inverse().map(Self)
    }

    /// 2-norm condition number; infinite for singular matrices.
    pub fn condition_number(&self) -> f64 {
        let sv = self.0.singular_values();
        let max = sv.max();
        let min = sv.min();
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    pub fn max_abs_diff(&self, other: &SuperOp) -> f64 {
        (self.0 - other.0).abs().max()
    }

    pub fn choi(&self) -> ChoiMatrix {
        choi(self)
    }
}

impl Mul for SuperOp {
    type Output = SuperOp;
    fn mul(self, rhs: SuperOp) -> SuperOp {
        SuperOp(self.0 * rhs.0)
    }
}

impl Serialize for SuperOp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_row_major().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SuperOp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        let arr: [f64; 16] = v
            .try_into()
            .map_err(|v: Vec<f64>| D::Error::invalid_length(v.len(), &"16 row-major entries"))?;
        Ok(SuperOp::from_row_major(&arr))
    }
}

impl fmt::Display for SuperOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.rows() {
            writeln!(
                f,
                "[{:>9.6} {:>9.6} {:>9.6} {:>9.6}]",
                row[0], row[1], row[2], row[3]
            )?;
        }
        Ok(())
    }
}

/// `f * e`: apply `e`, then `f`.
pub fn compose(f: &SuperOp, e: &SuperOp) -> SuperOp {
    *f * *e
}

/// Hilbert-Schmidt overlap `tr(c^T e)`; equals 4 for `e = c` unitary.
pub fn overlap(c: &SuperOp, e: &SuperOp) -> f64 {
    c.0.component_mul(&e.0).sum()
}

/// Average gate fidelity of a trace-preserving `e` to the unitary `target`.
pub fn avg_fidelity(e: &SuperOp, target: &UnitaryOp) -> f64 {
    fidelity_from_overlap(overlap(&SuperOp::from_unitary(target), e))
}

/// `(a + d) / (d^2 + d)` with `d = 2`.
pub fn fidelity_from_overlap(a: f64) -> f64 {
    (a + 2.0) / 6.0
}

/// Choi state of a map, normalized to unit trace for trace-preserving maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChoiMatrix(Matrix4<C64>);

/// Minimum eigenpair with a deterministic choice inside degenerate eigenspaces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinEigen {
    pub value: f64,
    pub vector: [C64; 4],
    pub multiplicity: usize,
}

impl ChoiMatrix {
    pub fn new(m: Matrix4<C64>) -> Result<Self, PauliError> {
        let residual = max_entry_norm((m - m.adjoint()).iter());
        if residual > MATRIX_TOL {
            return Err(PauliError::NotHermitian(residual));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let eig = SymmetricEigen::new(self.0);
        let mut v = [
            eig.eigenvalues[0],
            eig.eigenvalues[1],
            eig.eigenvalues[2],
            eig.eigenvalues[3],
        ];
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn min_eig_and_vector(&self) -> MinEigen {
        min_eig_and_vector(self)
    }

    /// `w^dagger J w`.
    pub fn expectation(&self, w: &[C64; 4]) -> f64 {
        let v = nalgebra::Vector4::from(*w);
        (v.adjoint() * self.0 * v)[(0, 0)].re
    }
}

fn kron(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
    Matrix4::from_fn(|i, j| a[(i / 2, j / 2)] * b[(i % 2, j % 2)])
}

/// `J(E) = (I (x) E)(|phi+><phi+|) = 1/4 sum_{ik} S_ik conj(P_k) (x) P_i`.
pub fn choi(e: &SuperOp) -> ChoiMatrix {
    let p = paulis();
    let mut m = Matrix4::zeros();
    for i in 0..4 {
        for k in 0..4 {
            let s = e.0[(i, k)];
            if s != 0.0 {
                m += kron(&p[k].conjugate(), &p[i]) * c(0.25 * s, 0.0);
            }
        }
    }
    ChoiMatrix(m)
}

/// Smallest eigenvalue and a normalized eigenvector.
///
/// When the minimum is degenerate the vector is the normalized projection of
/// the standard basis vector with the largest weight in that eigenspace, which
/// does not depend on the solver's choice of basis. The phase is fixed so that
/// the first nonzero entry is real and positive.
pub fn min_eig_and_vector(j: &ChoiMatrix) -> MinEigen {
    let eig = SymmetricEigen::new(j.0);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let members: Vec<usize> = (0..4)
        .filter(|&k| eig.eigenvalues[k] - min <= DEGENERACY_TOL)
        .collect();

    let mut best: Option<(f64, Vector4<C64>)> = None;
    for b in 0..4 {
        let mut proj = Vector4::<C64>::zeros();
        for &k in &members {
            let col = eig.eigenvectors.column(k);
            proj += col * col[b].conj();
        }
        let norm = proj.norm();
        if best.as_ref().map_or(true, |(n, _)| norm > n + 1e-12) {
            best = Some((norm, proj));
        }
    }
    let (norm, mut v) = best.expect("4x4 matrix has eigenvectors");
    v /= c(norm, 0.0);
    if let Some(first) = v.iter().find(|z| z.norm() > 1e-12).copied() {
        let phase = first.conj() / c(first.norm(), 0.0);
        v *= phase;
    }
    MinEigen {
        value: min,
        vector: [v[0], v[1], v[2], v[3]],
        multiplicity: members.len(),
    }
}
