//! Gate-error channels and state-preparation/measurement imperfections.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pauli::{compose, PauliVector, SuperOp, UnitaryOp};

/// Choi eigenvalues above this count as positive.
pub const CP_TOL: f64 = 1e-10;

/// Device-like defaults: a 33.3 ns gate on a qubit with T1 = 5.7 us and
/// T2 echo = 8.4 us, read out with 95% assignment fidelity.
pub const DEFAULT_GATE_DURATION: f64 = 33.3e-9;
pub const DEFAULT_T1: f64 = 5.7e-6;
pub const DEFAULT_T2: f64 = 8.4e-6;
pub const DEFAULT_ASSIGNMENT_FIDELITY: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("depolarizing parameter {0} outside [-1/3, 1]")]
    DepolarizingRange(f64),
    #[error("T2 = {t2} exceeds 2 T1 = {}", 2.0 * t1)]
    CoherenceTimes { t1: f64, t2: f64 },
    #[error("{0} must be positive and finite")]
    NonPositive(&'static str),
    #[error("channel is not completely positive (Choi eigenvalue {0:.3e})")]
    NotCp(f64),
    #[error("channel is not trace preserving")]
    NotTp,
    #[error("assignment fidelity {0} outside [0, 1]")]
    AssignmentFidelity(f64),
    #[error("override key {0} outside 1..=12")]
    OverrideIndex(usize),
    #[error(transparent)]
    Pauli(#[from] crate::pauli::PauliError),
}

/// `diag(1, l, l, l)`.
pub fn depolarizing(lambda: f64) -> Result<SuperOp, NoiseError> {
    if !(-1.0 / 3.0 - 1e-12..=1.0 + 1e-12).contains(&lambda) || !lambda.is_finite() {
        return Err(NoiseError::DepolarizingRange(lambda));
    }
    Ok(SuperOp::diagonal([1.0, lambda, lambda, lambda]))
}

/// Amplitude damping toward |0> with `gamma = 1 - exp(-t/t1)` plus pure
/// dephasing, so that transverse components decay as `exp(-t/t2)`.
pub fn amplitude_phase_damping(t: f64, t1: f64, t2: f64) -> Result<SuperOp, NoiseError> {
    if !(t1 > 0.0 && t1.is_finite()) {
        return Err(NoiseError::NonPositive("T1"));
    }
    if !(t2 > 0.0 && t2.is_finite()) {
        return Err(NoiseError::NonPositive("T2"));
    }
    if !(t >= 0.0) {
        return Err(NoiseError::NonPositive("duration"));
    }
    if t2 > 2.0 * t1 * (1.0 + 1e-12) {
        return Err(NoiseError::CoherenceTimes { t1, t2 });
    }
    let gamma = if t.is_infinite() { 1.0 } else { 1.0 - (-t / t1).exp() };
    let transverse = if t.is_infinite() { 0.0 } else { (-t / t2).exp() };
    Ok(SuperOp::from_rows([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, transverse, 0.0, 0.0],
        [0.0, 0.0, transverse, 0.0],
        [gamma, 0.0, 0.0, 1.0 - gamma],
    ]))
}

/// Superoperator of a rotation by `angle` about `axis`.
pub fn unitary_error(axis: [f64; 3], angle: f64) -> Result<SuperOp, NoiseError> {
    Ok(SuperOp::from_unitary(&UnitaryOp::rotation(axis, angle)?))
}

/// Errors unless `e` is CPTP to [`CP_TOL`].
pub fn check_cptp(e: &SuperOp) -> Result<(), NoiseError> {
    if !e.is_trace_preserving(1e-9) {
        return Err(NoiseError::NotTp);
    }
    let min = e.choi().eigenvalues()[0];
    if min < -CP_TOL {
        return Err(NoiseError::NotCp(min));
    }
    Ok(())
}

/// Which side of the ideal gate the error channel sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// `noise * gate`: the error happens after the gate.
    #[default]
    Left,
    /// `gate * noise`.
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub per_gate_channel: SuperOp,
    pub gate_duration: f64,
    #[serde(default)]
    pub placement: Placement,
    /// Gates that are pure Z rotations are implemented as frame changes and
    /// take no time, so they see no error.
    #[serde(default = "default_true")]
    pub frame_updates_noiseless: bool,
    /// Replacement error channels keyed by A4 index.
    #[serde(default)]
    pub overrides: BTreeMap<usize, SuperOp>,
}

fn default_true() -> bool {
    true
}

impl NoiseModel {
    pub fn new(per_gate_channel: SuperOp, gate_duration: f64) -> Result<Self, NoiseError> {
        check_cptp(&per_gate_channel)?;
        Ok(Self {
            per_gate_channel,
            gate_duration,
            placement: Placement::Left,
            frame_updates_noiseless: true,
            overrides: BTreeMap::new(),
        })
    }

    pub fn noiseless() -> Self {
        Self::new(SuperOp::identity(), 0.0).expect("identity is CPTP")
    }

    pub fn depolarizing(lambda: f64) -> Result<Self, NoiseError> {
        Self::new(depolarizing(lambda)?, DEFAULT_GATE_DURATION)
    }

    /// Relaxation-limited gates with the given duration and coherence times.
    pub fn coherence_limited(duration: f64, t1: f64, t2: f64) -> Result<Self, NoiseError> {
        Self::new(amplitude_phase_damping(duration, t1, t2)?, duration)
    }

    pub fn device_default() -> Self {
        Self::coherence_limited(DEFAULT_GATE_DURATION, DEFAULT_T1, DEFAULT_T2)
            .expect("default coherence parameters are valid")
    }

    pub fn with_placement(mut self, placement: Placement) -> Self {
        self.placement = placement;
        self
    }

    pub fn with_frame_updates_noiseless(mut self, on: bool) -> Self {
        self.frame_updates_noiseless = on;
        self
    }

    pub fn with_override(mut self, index: usize, channel: SuperOp) -> Result<Self, NoiseError> {
        if index == 0 || index > 12 {
            return Err(NoiseError::OverrideIndex(index));
        }
        check_cptp(&channel)?;
        self.overrides.insert(index, channel);
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        check_cptp(&self.per_gate_channel)?;
        for (&k, ch) in &self.overrides {
            if k == 0 || k > 12 {
                return Err(NoiseError::OverrideIndex(k));
            }
            check_cptp(ch)?;
        }
        Ok(())
    }

    /// Error channel for an A4 element (`None` for gates outside A4).
    pub fn error_for(&self, a4_index: Option<usize>, ideal: &SuperOp) -> SuperOp {
        if let Some(ch) = a4_index.and_then(|k| self.overrides.get(&k)) {
            return *ch;
        }
        if self.frame_updates_noiseless && is_frame_update(ideal) {
            return SuperOp::identity();
        }
        self.per_gate_channel
    }

    /// The noisy implementation of `ideal`.
    pub fn noisy_gate(&self, a4_index: Option<usize>, ideal: &SuperOp) -> SuperOp {
        let err = self.error_for(a4_index, ideal);
        self.attach(&err, ideal)
    }

    /// Composes an error channel with a gate on the configured side.
    pub fn attach(&self, err: &SuperOp, ideal: &SuperOp) -> SuperOp {
        match self.placement {
            Placement::Left => compose(err, ideal),
            Placement::Right => compose(ideal, err),
        }
    }
}

/// True for gates that only rotate about Z (including the identity).
pub fn is_frame_update(s: &SuperOp) -> bool {
    (s.get(3, 3) - 1.0).abs() < 1e-9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpamModel {
    /// The imperfect |0> actually prepared.
    pub prep: PauliVector,
    /// Linear functional giving the ideal |0> outcome probability.
    pub meas: [f64; 4],
    /// Probability that a readout reports the true outcome.
    pub assignment_fidelity: f64,
}

impl SpamModel {
    pub fn perfect() -> Self {
        Self {
            prep: PauliVector::ground(),
            meas: [0.5, 0.0, 0.0, 0.5],
            assignment_fidelity: 1.0,
        }
    }

    pub fn with_assignment_fidelity(f: f64) -> Result<Self, NoiseError> {
        let s = Self {
            assignment_fidelity: f,
            ..Self::perfect()
        };
        s.validate()?;
        Ok(s)
    }

    pub fn device_default() -> Self {
        Self::with_assignment_fidelity(DEFAULT_ASSIGNMENT_FIDELITY).expect("valid default")
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        if !(0.0..=1.0).contains(&self.assignment_fidelity) {
            return Err(NoiseError::AssignmentFidelity(self.assignment_fidelity));
        }
        Ok(())
    }
}

/// Probability of reading `0` for the final state.
pub fn apply_spam(state_out: &PauliVector, spam: &SpamModel) -> f64 {
    let ideal = state_out.dot(&spam.meas).clamp(0.0, 1.0);
    let f = spam.assignment_fidelity;
    f * ideal + (1.0 - f) * (1.0 - ideal)
}
