//! Single-pulse gate synthesis. A tilted rotation axis is produced by
//! ramping the drive phase sample by sample, with the accumulated phase
//! applied at the end as a frame update. Pulses are checked on an ideal
//! qubit and on a Duffing-oscillator transmon.

use std::f64::consts::PI;

use nalgebra::{Matrix2, SMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clifford::GroupElement;
use crate::pauli::{SuperOp, UnitaryOp, C64};

pub const GATE_DURATION: f64 = 33.3e-9;
/// -200 MHz, in rad/s.
pub const DEFAULT_ANHARMONICITY: f64 = -2.0 * PI * 200e6;
/// First-order Stark-shift compensation for a transmon.
pub const DEFAULT_DRAG_COEFFICIENT: f64 = -0.5;
pub const DUFFING_LEVELS: usize = 5;
pub const SWEEP_SAMPLES: [usize; 5] = [20, 40, 80, 160, 320];

const AXIS_TOL: f64 = 1e-9;
const IN_PLANE_MIN: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum PulseError {
    #[error("rotation axis has norm {0}, expected 1")]
    NonUnitAxis(f64),
    #[error("time step {dt} exceeds sigma {sigma}")]
    StepTooLong { dt: f64, sigma: f64 },
    #[error("time step and sigma must be positive")]
    NonPositive,
    #[error("pulse needs at least one sample")]
    NoSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationSpec {
    pub axis: [f64; 3],
    pub angle: f64,
}

impl RotationSpec {
    pub fn new(axis: [f64; 3], angle: f64) -> Result<Self, PulseError> {
        let norm = axis.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > AXIS_TOL {
            return Err(PulseError::NonUnitAxis(norm));
        }
        Ok(Self { axis, angle })
    }

    pub fn hadamard() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self { axis: [s, 0.0, s], angle: PI }
    }

    pub fn unitary(&self) -> UnitaryOp {
        UnitaryOp::rotation(self.axis, self.angle).expect("axis checked on construction")
    }

    fn in_plane(&self) -> f64 {
        self.axis[0].hypot(self.axis[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum TrotterOrder {
    /// Phase taken at the start of each bin.
    First,
    /// Phase taken at the bin midpoint.
    Second,
}

impl From<TrotterOrder> for u8 {
    fn from(o: TrotterOrder) -> u8 {
        match o {
            TrotterOrder::First => 1,
            TrotterOrder::Second => 2,
        }
    }
}

impl TryFrom<u8> for TrotterOrder {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Self::First),
            2 => Ok(Self::Second),
            _ => Err(format!("trotter order must be 1 or 2, got {v}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSample {
    /// Rabi rate in rad/s.
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub dt: f64,
    pub samples: Vec<PulseSample>,
    /// Z rotation applied after the pulse, in radians.
    pub final_frame_update: f64,
    pub trotter_order: TrotterOrder,
}

impl PulseSpec {
    pub fn frame_update(angle: f64) -> Self {
        Self {
            dt: 0.0,
            samples: Vec::new(),
            final_frame_update: angle,
            trotter_order: TrotterOrder::Second,
        }
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.samples.len() as f64
    }

    /// Same pulse with the drive phases shifted by `offset`.
    pub fn shifted(&self, offset: f64) -> Self {
        let mut p = self.clone();
        for s in &mut p.samples {
            s.phase += offset;
        }
        p
    }
}

/// Gaussian on `[-2 sigma, 2 sigma]` with the endpoint value subtracted,
/// scaled so the samples integrate to `total_angle`.
pub fn gaussian_envelope(sigma: f64, dt: f64, total_angle: f64) -> Result<Vec<f64>, PulseError> {
    if !(sigma > 0.0 && dt > 0.0) {
        return Err(PulseError::NonPositive);
    }
    if dt > sigma {
        return Err(PulseError::StepTooLong { dt, sigma });
    }
    let n = (4.0 * sigma / dt).round() as usize;
    let half = 0.5 * n as f64 * dt;
    let edge = (-2.0f64).exp();
    let raw: Vec<f64> = (0..n)
        .map(|k| {
            let t = (k as f64 + 0.5) * dt - half;
            (-(t * t) / (2.0 * sigma * sigma)).exp() - edge
        })
        .collect();
    let area: f64 = raw.iter().sum::<f64>() * dt;
    Ok(raw.into_iter().map(|g| g * total_angle / area).collect())
}

/// Drive phases emulating the detuning samples `detuning` (rad/s): the
/// accumulated Z phase is subtracted from `base_phase` and handed back as
/// the final frame update.
fn ramp(amplitudes: &[f64], detuning: &[f64], dt: f64, base_phase: f64, order: TrotterOrder) -> (Vec<PulseSample>, f64) {
    let mut acc = 0.0;
    let samples = amplitudes
        .iter()
        .zip(detuning)
        .map(|(&a, &d)| {
            let at = match order {
                TrotterOrder::First => acc,
                TrotterOrder::Second => acc + 0.5 * d * dt,
            };
            acc += d * dt;
            PulseSample { amplitude: a, phase: base_phase - at }
        })
        .collect();
    (samples, acc)
}

/// Phase-ramped pulse for `spec` from the in-plane envelope `env`. The
/// detuning tracks the amplitude so the effective axis stays fixed.
pub fn phase_ramp(env: &[f64], dt: f64, spec: &RotationSpec, order: TrotterOrder) -> PulseSpec {
    let in_plane = spec.in_plane();
    let tilt = spec.axis[2] / in_plane;
    let detuning: Vec<f64> = env.iter().map(|a| a * tilt).collect();
    let (samples, frame) = ramp(env, &detuning, dt, spec.axis[1].atan2(spec.axis[0]), order);
    PulseSpec {
        dt,
        samples,
        final_frame_update: frame,
        trotter_order: order,
    }
}

/// Gaussian pulse of `duration` (+-2 sigma) in `samples` steps.
pub fn pulse_for_rotation(
    spec: &RotationSpec,
    duration: f64,
    samples: usize,
    order: TrotterOrder,
) -> Result<PulseSpec, PulseError> {
    if samples == 0 {
        return Err(PulseError::NoSamples);
    }
    if spec.in_plane() < IN_PLANE_MIN {
        return Ok(PulseSpec::frame_update(spec.angle * spec.axis[2]));
    }
    let dt = duration / samples as f64;
    let env = gaussian_envelope(duration / 4.0, dt, spec.angle * spec.in_plane())?;
    Ok(phase_ramp(&env, dt, spec, order))
}

/// One pulse per group element; pure Z elements become frame updates.
pub fn atomic_pulse_for(g: &GroupElement, samples: usize, order: TrotterOrder) -> Result<PulseSpec, PulseError> {
    let (axis, angle) = g.unitary.axis_angle();
    if angle.abs() < 1e-12 {
        return Ok(PulseSpec::frame_update(0.0));
    }
    pulse_for_rotation(&RotationSpec::new(axis, angle)?, GATE_DURATION, samples, order)
}

/// Ideal-qubit propagator: exact per-sample rotations, then the frame update.
pub fn simulate_qubit(p: &PulseSpec) -> UnitaryOp {
    let mut u = UnitaryOp::identity();
    for s in &p.samples {
        let step = UnitaryOp::rotation([s.phase.cos(), s.phase.sin(), 0.0], s.amplitude * p.dt).expect("unit axis");
        u = step * u;
    }
    UnitaryOp::rotation([0.0, 0.0, 1.0], p.final_frame_update).expect("unit axis") * u
}

/// Plays pulses back to back with frame updates done in software: each
/// update shifts the phases of later pulses and one Z rotation closes the
/// sequence.
pub fn simulate_qubit_sequence(pulses: &[PulseSpec]) -> UnitaryOp {
    let mut frame = 0.0;
    let mut u = UnitaryOp::identity();
    for p in pulses {
        let mut body = p.shifted(-frame);
        body.final_frame_update = 0.0;
        u = simulate_qubit(&body) * u;
        frame += p.final_frame_update;
    }
    UnitaryOp::rotation([0.0, 0.0, 1.0], frame).expect("unit axis") * u
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuffingModel {
    pub levels: usize,
    /// rad/s; negative for a transmon.
    pub anharmonicity: f64,
    /// Qubit minus drive frequency, rad/s.
    pub drive_detuning: f64,
    pub drag_coefficient: f64,
}

impl Default for DuffingModel {
    fn default() -> Self {
        Self {
            levels: DUFFING_LEVELS,
            anharmonicity: DEFAULT_ANHARMONICITY,
            drive_detuning: 0.0,
            drag_coefficient: DEFAULT_DRAG_COEFFICIENT,
        }
    }
}

type Op5 = SMatrix<C64, DUFFING_LEVELS, DUFFING_LEVELS>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DuffingResult {
    /// Qubit block of the propagator after the frame update.
    pub block: Matrix2<C64>,
    pub superop: SuperOp,
    pub leakage: f64,
}

/// Adds the Z-only DRAG detuning `c * a^2 / alpha` to the ramp of `p`.
pub fn with_drag(p: &PulseSpec, m: &DuffingModel) -> PulseSpec {
    let amps: Vec<f64> = p.samples.iter().map(|s| s.amplitude).collect();
    let extra: Vec<f64> = amps.iter().map(|a| m.drag_coefficient * a * a / m.anharmonicity).collect();
    let (shift, frame) = ramp(&amps, &extra, p.dt, 0.0, p.trotter_order);
    let mut out = p.clone();
    for (s, d) in out.samples.iter_mut().zip(shift) {
        s.phase += d.phase;
    }
    out.final_frame_update += frame;
    out
}

/// Piecewise-constant propagation of a five-level Duffing oscillator in the
/// frame of the qubit transition, under the rotating-wave approximation.
pub fn simulate_duffing(p: &PulseSpec, m: &DuffingModel, drag: bool) -> DuffingResult {
    assert_eq!(m.levels, DUFFING_LEVELS, "only the five-level model is supported");
    let pulse = if drag { with_drag(p, m) } else { p.clone() };
    let mut u = Op5::identity();
    for s in &pulse.samples {
        let mut h = Op5::zeros();
        for n in 0..DUFFING_LEVELS {
            let nf = n as f64;
            h[(n, n)] = C64::new(0.5 * m.anharmonicity * nf * (nf - 1.0) + m.drive_detuning * nf, 0.0);
        }
        for n in 1..DUFFING_LEVELS {
            // (a/2)(e^{i phi} b^dag + e^{-i phi} b)
            let g = C64::from_polar(0.5 * s.amplitude * (n as f64).sqrt(), s.phase);
            h[(n, n - 1)] = g;
            h[(n - 1, n)] = g.conj();
        }
        let eig = SymmetricEigen::new(h);
        let phases = Op5::from_diagonal(&eig.eigenvalues.map(|e| C64::from_polar(1.0, -e * pulse.dt)));
        u = eig.eigenvectors * phases * eig.eigenvectors.adjoint() * u;
    }
    let frame = C64::from_polar(1.0, pulse.final_frame_update);
    let block = Matrix2::new(u[(0, 0)], u[(0, 1)], frame * u[(1, 0)], frame * u[(1, 1)]);
    let kept = (block.adjoint() * block).trace().re / 2.0;
    DuffingResult {
        block,
        superop: SuperOp::from_kraus(&[block]),
        leakage: 1.0 - kept,
    }
}

/// Average fidelity of a (possibly leaky) qubit block to a target.
pub fn block_fidelity(block: &Matrix2<C64>, target: &UnitaryOp) -> f64 {
    let m = target.matrix().adjoint() * block;
    ((block.adjoint() * block).trace().re + m.trace().norm_sqr()) / 6.0
}

/// `1 - F` for unitaries, computed without cancellation in `F`.
pub fn unitary_infidelity(u: &UnitaryOp, target: &UnitaryOp) -> f64 {
    let t = (target.matrix().adjoint() * u.matrix()).trace().norm_sqr();
    ((4.0 - t) / 6.0).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseModel {
    Qubit,
    Duffing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub model: PulseModel,
    pub samples: usize,
    pub dt: f64,
    pub order: TrotterOrder,
    pub drag: bool,
    pub infidelity: f64,
    pub leakage: f64,
}

/// Infidelity of one discretization of `spec`.
pub fn sweep_point(
    spec: &RotationSpec,
    samples: usize,
    order: TrotterOrder,
    model: PulseModel,
    drag: bool,
    duffing: &DuffingModel,
) -> Result<SweepPoint, PulseError> {
    let p = pulse_for_rotation(spec, GATE_DURATION, samples, order)?;
    let target = spec.unitary();
    let (infidelity, leakage) = match model {
        PulseModel::Qubit => (unitary_infidelity(&simulate_qubit(&p), &target), 0.0),
        PulseModel::Duffing => {
            let r = simulate_duffing(&p, duffing, drag);
            (1.0 - block_fidelity(&r.block, &target), r.leakage)
        }
    };
    Ok(SweepPoint {
        model,
        samples,
        dt: p.dt,
        order,
        drag,
        infidelity,
        leakage,
    })
}

/// Qubit sweeps for both orders plus Duffing sweeps with and without DRAG
/// (second order).
pub fn discretization_sweep(
    spec: &RotationSpec,
    sample_counts: &[usize],
    duffing: &DuffingModel,
) -> Result<Vec<SweepPoint>, PulseError> {
    let mut grid = Vec::new();
    for &n in sample_counts {
        for order in [TrotterOrder::First, TrotterOrder::Second] {
            grid.push((n, order, PulseModel::Qubit, false));
        }
        for drag in [false, true] {
            grid.push((n, TrotterOrder::Second, PulseModel::Duffing, drag));
        }
    }
    grid.into_par_iter()
        .map(|(n, order, model, drag)| sweep_point(spec, n, order, model, drag, duffing))
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Convergence order of the gate error, taken as the slope of
/// `sqrt(infidelity)` against `dt`.
pub fn error_order(points: &[SweepPoint]) -> f64 {
    let dt: Vec<f64> = points.iter().map(|p| p.dt).collect();
    let err: Vec<f64> = points.iter().map(|p| p.infidelity.sqrt()).collect();
    loglog_slope(&dt, &err)
}

pub fn sweep_csv<W: std::io::Write>(out: W, points: &[SweepPoint]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "samples", "dt", "order", "drag", "infidelity", "leakage"])?;
    for p in points {
        w.write_record([
            match p.model {
                PulseModel::Qubit => "qubit".to_string(),
                PulseModel::Duffing => "duffing".to_string(),
            },
            p.samples.to_string(),
            format!("{:.6e}", p.dt),
            u8::from(p.order).to_string(),
            p.drag.to_string(),
            format!("{:.6e}", p.infidelity),
            format!("{:.6e}", p.leakage),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::Group;
    use crate::pauli::avg_fidelity;
    use approx::assert_abs_diff_eq;

    fn hadamard_pulse(samples: usize, order: TrotterOrder) -> PulseSpec {
        pulse_for_rotation(&RotationSpec::hadamard(), GATE_DURATION, samples, order).unwrap()
    }

    #[test]
    fn envelope_integral_and_sampling() {
        let sigma = GATE_DURATION / 4.0;
        assert!(gaussian_envelope(sigma, sigma / 10.0, 0.0).unwrap().iter().all(|&a| a == 0.0));
        let a = gaussian_envelope(sigma, sigma / 10.0, PI).unwrap();
        let b = gaussian_envelope(sigma, sigma / 20.0, PI).unwrap();
        assert_eq!(a.len(), 40);
        assert_eq!(b.len(), 80);
        assert_abs_diff_eq!(a.iter().sum::<f64>() * sigma / 10.0, PI, epsilon = 1e-12);
        assert_abs_diff_eq!(b.iter().sum::<f64>() * sigma / 20.0, PI, epsilon = 1e-12);
        let peak = a.iter().cloned().fold(0.0, f64::max);
        assert!(peak > 1e8 && peak < 1e9, "{peak}");
        assert!(matches!(gaussian_envelope(sigma, 2.0 * sigma, PI), Err(PulseError::StepTooLong { .. })));
    }

    #[test]
    fn untilted_pulse_has_no_ramp() {
        let p = pulse_for_rotation(&RotationSpec::new([1.0, 0.0, 0.0], PI).unwrap(), GATE_DURATION, 40, TrotterOrder::First)
            .unwrap();
        assert!(p.samples.iter().all(|s| s.phase == 0.0));
        assert_eq!(p.final_frame_update, 0.0);
        let x = UnitaryOp::rotation([1.0, 0.0, 0.0], PI).unwrap();
        assert!(unitary_infidelity(&simulate_qubit(&p), &x) < 1e-12);
    }

    #[test]
    fn zero_pulse_is_identity() {
        let p = PulseSpec::frame_update(0.0);
        assert!(unitary_infidelity(&simulate_qubit(&p), &UnitaryOp::identity()) < 1e-15);
        let r = simulate_duffing(
            &PulseSpec {
                dt: 1e-9,
                samples: vec![PulseSample { amplitude: 0.0, phase: 0.0 }; 10],
                final_frame_update: 0.0,
                trotter_order: TrotterOrder::Second,
            },
            &DuffingModel::default(),
            false,
        );
        assert!(r.leakage.abs() < 1e-14);
        assert_abs_diff_eq!(block_fidelity(&r.block, &UnitaryOp::identity()), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn midpoint_ramp_beats_bin_start() {
        let h = UnitaryOp::hadamard();
        let second = unitary_infidelity(&simulate_qubit(&hadamard_pulse(40, TrotterOrder::Second)), &h);
        let first = unitary_infidelity(&simulate_qubit(&hadamard_pulse(40, TrotterOrder::First)), &h);
        assert!(second < 1e-6, "{second}");
        assert!(first >= 10.0 * second, "{first} vs {second}");
        let mut last = f64::INFINITY;
        for n in SWEEP_SAMPLES {
            let inf = unitary_infidelity(&simulate_qubit(&hadamard_pulse(n, TrotterOrder::Second)), &h);
            assert!(inf < last);
            last = inf;
        }
    }

    #[test]
    fn frame_updates_thread_through_sequences() {
        let a4 = Group::a4();
        for (i, j) in [(5, 2), (7, 9), (4, 11), (1, 6)] {
            let gi = a4.element(i).unwrap();
            let gj = a4.element(j).unwrap();
            let pi = atomic_pulse_for(gi, 160, TrotterOrder::Second).unwrap();
            let pj = atomic_pulse_for(gj, 160, TrotterOrder::Second).unwrap();
            let seq = simulate_qubit_sequence(&[pi.clone(), pj.clone()]);
            let product = simulate_qubit(&pj) * simulate_qubit(&pi);
            assert!(unitary_infidelity(&seq, &product) < 1e-13);
            assert!(unitary_infidelity(&seq, &(gj.unitary * gi.unitary)) < 1e-7);
        }
    }

    #[test]
    fn atomic_pulses_reproduce_group() {
        let a4 = Group::a4();
        for g in a4.elements() {
            let p = atomic_pulse_for(g, 40, TrotterOrder::Second).unwrap();
            let e = SuperOp::from_unitary(&simulate_qubit(&p));
            assert!(1.0 - avg_fidelity(&e, &g.unitary) < 1e-5, "element {}", g.index);
        }
        assert!(atomic_pulse_for(a4.element(1).unwrap(), 40, TrotterOrder::Second).unwrap().samples.is_empty());
        let c5 = atomic_pulse_for(a4.element(5).unwrap(), 40, TrotterOrder::Second).unwrap();
        assert_eq!(c5.samples.len(), 40);
        let (axis, angle) = a4.element(5).unwrap().unitary.axis_angle();
        assert_abs_diff_eq!(angle, 2.0 * PI / 3.0, epsilon = 1e-12);
        for c in axis {
            assert_abs_diff_eq!(c.abs(), 1.0 / 3f64.sqrt(), epsilon = 1e-12);
        }
        let c24 = Group::clifford24();
        let s_gate = c24
            .elements()
            .iter()
            .find(|g| {
                let (axis, angle) = g.unitary.axis_angle();
                (angle - PI / 2.0).abs() < 1e-9 && (axis[2] - 1.0).abs() < 1e-9
            })
            .unwrap();
        let p = atomic_pulse_for(s_gate, 40, TrotterOrder::Second).unwrap();
        assert!(p.samples.is_empty());
        assert_abs_diff_eq!(p.final_frame_update, PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn drag_helps_on_transmon() {
        let m = DuffingModel::default();
        let h = UnitaryOp::hadamard();
        let p = hadamard_pulse(160, TrotterOrder::Second);
        let plain = simulate_duffing(&p, &m, false);
        let drag = simulate_duffing(&p, &m, true);
        assert!(block_fidelity(&drag.block, &h) > block_fidelity(&plain.block, &h));
        assert!(plain.leakage > 0.0 && plain.leakage < 1e-2);
    }

    #[test]
    fn larger_anharmonicity_approaches_qubit() {
        let h = UnitaryOp::hadamard();
        let p = hadamard_pulse(160, TrotterOrder::Second);
        let qubit = 1.0 - unitary_infidelity(&simulate_qubit(&p), &h);
        let mut last = 0.0;
        for scale in [1.0, 4.0, 16.0, 64.0] {
            let m = DuffingModel { anharmonicity: DEFAULT_ANHARMONICITY * scale, ..DuffingModel::default() };
            let f = block_fidelity(&simulate_duffing(&p, &m, false).block, &h);
            assert!(f > last);
            last = f;
        }
        assert!((qubit - last).abs() < 1e-4);
    }

    #[test]
    fn orders_and_slopes() {
        let pts = discretization_sweep(&RotationSpec::hadamard(), &SWEEP_SAMPLES, &DuffingModel::default()).unwrap();
        let pick = |order, model| -> Vec<SweepPoint> {
            pts.iter().filter(|p| p.order == order && p.model == model && !p.drag).cloned().collect()
        };
        assert!((error_order(&pick(TrotterOrder::First, PulseModel::Qubit)) - 1.0).abs() < 0.3);
        assert!((error_order(&pick(TrotterOrder::Second, PulseModel::Qubit)) - 2.0).abs() < 0.3);
        let mut buf = Vec::new();
        sweep_csv(&mut buf, &pts).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + pts.len());
    }
}
