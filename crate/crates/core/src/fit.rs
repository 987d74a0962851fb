//! Decay-rate estimation: joint four-parameter least squares against a
//! reference decay, Prony seeding, and bin-resampling bootstrap intervals.
//!
//! Datasets are reduced to per-length moments (bin count, sum, sum of
//! squares) before fitting. The mean squared error over bins is a function
//! of those moments only, which keeps each refit independent of the number
//! of bins.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sequence::Length;
use crate::simulate::DecayDataset;

/// Search boxes. Decay rates get `[-1, 1]` rather than the CP range so that
/// rates sitting on the CP boundary are not pinned by the transform.
pub const RATE_BOX: (f64, f64) = (-1.0, 1.0);
pub const SCALE_BOX: (f64, f64) = (0.0, 1.0);
pub const OFFSET_BOX: (f64, f64) = (0.0, 1.0);

pub const MAX_ITERATIONS: usize = 500;
/// Fraction of each box kept clear when placing a start point.
pub const START_MARGIN: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-12;
pub const MAX_RESTARTS: usize = 5;

/// Rate differences smaller than this make the Prony ratio meaningless.
pub const PRONY_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("dataset {0} has no finite-length rows")]
    NoFiniteLengths(usize),
    #[error("dataset {0} is empty")]
    Empty(usize),
    #[error("replications must be positive")]
    NoReplications,
    #[error("summary has no finite-length rows")]
    NoFiniteSummary,
}

/// Bins at one length: count, sum of bin means and sum of their squares.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Moments {
    pub count: f64,
    pub sum: f64,
    pub sumsq: f64,
}

/// A decay reduced to centred per-length statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DecaySummary {
    /// `(exponent, bins, mean)`; the exponent is `None` for the surrogate row.
    rows: Vec<(Option<i32>, f64, f64)>,
    total: f64,
    /// Within-length sum of squares divided by `total`.
    floor: f64,
}

impl DecaySummary {
    pub fn from_moments(stats: &[(Length, Moments)]) -> Self {
        let total: f64 = stats.iter().map(|(_, m)| m.count).sum();
        let mut floor = 0.0;
        let rows = stats
            .iter()
            .filter(|(_, m)| m.count > 0.0)
            .map(|(l, m)| {
                let mean = m.sum / m.count;
                floor += (m.sumsq - m.sum * mean).max(0.0);
                (l.finite().map(|n| n as i32), m.count, mean)
            })
            .collect();
        Self {
            rows,
            total,
            floor: if total > 0.0 { floor / total } else { 0.0 },
        }
    }

    pub fn from_dataset(ds: &DecayDataset) -> Self {
        let mut acc: BTreeMap<Length, Moments> = BTreeMap::new();
        let scale = ds.shots_per_bin as f64;
        for row in &ds.rows {
            let m = acc.entry(row.length).or_default();
            for &c in &row.counts {
                let y = c as f64 / scale;
                m.count += 1.0;
                m.sum += y;
                m.sumsq += y * y;
            }
        }
        Self::from_moments(&acc.into_iter().collect::<Vec<_>>())
    }

    /// Mean squared error over all bins under `scale * rate^n + offset`.
    pub fn mse(&self, scale: f64, offset: f64, rate: f64) -> f64 {
        let mut acc = 0.0;
        for &(n, count, mean) in &self.rows {
            let model = match n {
                Some(n) => scale * rate.powi(n) + offset,
                None => offset,
            };
            let r = mean - model;
            acc += count * r * r;
        }
        self.floor + acc / self.total
    }

    /// Per-length means, finite lengths keyed by `n`, surrogate under `None`.
    pub fn means(&self) -> BTreeMap<Option<i32>, f64> {
        self.rows.iter().map(|&(n, _, m)| (n, m)).collect()
    }

    pub fn has_finite(&self) -> bool {
        self.rows.iter().any(|r| r.0.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PronySeed {
    pub rate: f64,
    pub degenerate: bool,
}

/// `(F2 - F3) / (F1 - F2)` for three consecutive lengths, clamped to the CP
/// range `[-1/3, 1]`.
pub fn prony_seed(f1: f64, f2: f64, f3: f64) -> PronySeed {
    let den = f1 - f2;
    if den.abs() < PRONY_EPS {
        return PronySeed {
            rate: 0.0,
            degenerate: true,
        };
    }
    PronySeed {
        rate: ((f2 - f3) / den).clamp(-1.0 / 3.0, 1.0),
        degenerate: false,
    }
}

/// Prony estimate from an evenly spaced triple of lengths `n, n+d, n+2d`.
/// The widest spacing wins, since it resolves slow decays best.
pub fn prony_from_means(means: &BTreeMap<Option<i32>, f64>) -> PronySeed {
    let finite: Vec<(i32, f64)> = means
        .iter()
        .filter_map(|(k, v)| k.map(|n| (n, *v)))
        .collect();
    let lookup: BTreeMap<i32, f64> = finite.iter().copied().collect();
    let mut best: Option<(i32, f64, f64, f64)> = None;
    for &(n, f1) in &finite {
        for &(m, f2) in finite.iter().filter(|(m, _)| *m > n) {
            let d = m - n;
            if let Some(&f3) = lookup.get(&(m + d)) {
                if best.map_or(true, |b| d > b.0) {
                    best = Some((d, f1, f2, f3));
                }
            }
        }
    }
    let Some((d, f1, f2, f3)) = best else {
        return PronySeed {
            rate: 0.0,
            degenerate: true,
        };
    };
    if d == 1 {
        return prony_seed(f1, f2, f3);
    }
    let den = f1 - f2;
    if den.abs() < PRONY_EPS {
        return PronySeed {
            rate: 0.0,
            degenerate: true,
        };
    }
    let ratio = (f2 - f3) / den;
    let root = if ratio >= 0.0 {
        ratio.powf(1.0 / d as f64)
    } else if d % 2 == 1 {
        -(-ratio).powf(1.0 / d as f64)
    } else {
        return PronySeed {
            rate: 0.0,
            degenerate: true,
        };
    };
    PronySeed {
        rate: root.clamp(-1.0 / 3.0, 1.0),
        degenerate: false,
    }
}

/// `a = 1 + 3p` for a qubit.
pub fn decay_to_overlap(p: f64) -> f64 {
    1.0 + 3.0 * p
}

pub fn overlap_to_decay(a: f64) -> f64 {
    (a - 1.0) / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Joint-fit parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointParams {
    pub p_j: f64,
    pub p_ref: f64,
    #[serde(rename = "A")]
    pub scale: f64,
    #[serde(rename = "B")]
    pub offset: f64,
}

impl JointParams {
    fn to_array(self) -> [f64; 4] {
        [self.p_j, self.p_ref, self.scale, self.offset]
    }

    fn from_array(x: [f64; 4]) -> Self {
        Self {
            p_j: x[0],
            p_ref: x[1],
            scale: x[2],
            offset: x[3],
        }
    }
}

const JOINT_BOXES: [(f64, f64); 4] = [RATE_BOX, RATE_BOX, SCALE_BOX, OFFSET_BOX];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointCis {
    pub p_j: Interval,
    pub p_ref: Interval,
    #[serde(rename = "A")]
    pub scale: Interval,
    #[serde(rename = "B")]
    pub offset: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(flatten)]
    pub params: JointParams,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub prony_degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<JointCis>,
}

/// Sum of the two decays' mean squared errors.
pub fn joint_objective(overlap: &DecaySummary, reference: &DecaySummary, p: &JointParams) -> f64 {
    overlap.mse(p.scale, p.offset, p.p_j) + reference.mse(p.scale, p.offset, p.p_ref)
}

fn to_unbounded(x: f64, (lo, hi): (f64, f64)) -> f64 {
    // Starting on the edge would saturate the logistic map.
    let t = ((x - lo) / (hi - lo)).clamp(START_MARGIN, 1.0 - START_MARGIN);
    (t / (1.0 - t)).ln()
}

fn to_bounded(u: f64, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) / (1.0 + (-u).exp())
}

#[derive(Debug, Clone, Copy)]
pub struct MinimizeOutcome<const N: usize> {
    pub x: [f64; N],
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn dot<const N: usize>(a: &[f64; N], b: &[f64; N]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn central_gradient<const N: usize>(f: &impl Fn(&[f64; N]) -> f64, x: &[f64; N]) -> [f64; N] {
    let mut g = [0.0; N];
    for i in 0..N {
        let h = 1e-6 * x[i].abs().max(1.0);
        let mut a = *x;
        let mut b = *x;
        a[i] += h;
        b[i] -= h;
        g[i] = (f(&a) - f(&b)) / (2.0 * h);
    }
    g
}

/// BFGS with central-difference gradients and backtracking line search.
/// Stops when the objective's relative change drops below [`REL_TOL`] or
/// after [`MAX_ITERATIONS`].
pub fn bfgs<const N: usize>(f: impl Fn(&[f64; N]) -> f64, x0: [f64; N]) -> MinimizeOutcome<N> {
    let mut x = x0;
    let mut fx = f(&x);
    let mut g = central_gradient(&f, &x);
    let mut h = [[0.0; N]; N];
    for (i, row) in h.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let mut first = true;
    for it in 0..MAX_ITERATIONS {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = -dot(&h[i], &g);
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            for i in 0..N {
                d[i] = -g[i];
                h[i] = [0.0; N];
                h[i][i] = 1.0;
            }
            slope = -dot(&g, &g);
        }
        if slope == 0.0 {
            return MinimizeOutcome { x, value: fx, converged: true, iterations: it };
        }
        let mut t = 1.0;
        let (xn, fxn) = loop {
            let mut xn = x;
            for i in 0..N {
                xn[i] += t * d[i];
            }
            let v = f(&xn);
            if v <= fx + 1e-4 * t * slope {
                break (xn, v);
            }
            t *= 0.5;
            if t < 1e-16 {
                // No descent at machine precision: a numerical minimum.
                return MinimizeOutcome { x, value: fx, converged: true, iterations: it };
            }
        };
        let gn = central_gradient(&f, &xn);
        let mut s = [0.0; N];
        let mut y = [0.0; N];
        for i in 0..N {
            s[i] = xn[i] - x[i];
            y[i] = gn[i] - g[i];
        }
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if first {
                let scale = sy / dot(&y, &y);
                for (i, row) in h.iter_mut().enumerate() {
                    *row = [0.0; N];
                    row[i] = scale;
                }
                first = false;
            }
            let mut hy = [0.0; N];
            for i in 0..N {
                hy[i] = dot(&h[i], &y);
            }
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..N {
                for j in 0..N {
                    h[i][j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - (hy[i] * s[j] + s[i] * hy[j]));
                }
            }
        }
        let change = (fx - fxn).abs();
        x = xn;
        g = gn;
        fx = fxn;
        if change <= REL_TOL * fx.abs().max(f64::MIN_POSITIVE) {
            return MinimizeOutcome { x, value: fx, converged: true, iterations: it + 1 };
        }
    }
    MinimizeOutcome { x, value: fx, converged: false, iterations: MAX_ITERATIONS }
}

/// Box-constrained minimization through a logistic reparametrization.
pub fn minimize_boxed<const N: usize>(
    f: impl Fn(&[f64; N]) -> f64,
    start: [f64; N],
    boxes: [(f64, f64); N],
) -> MinimizeOutcome<N> {
    let map = |u: &[f64; N]| {
        let mut x = [0.0; N];
        for i in 0..N {
            x[i] = to_bounded(u[i], boxes[i]);
        }
        x
    };
    let pull_in = |x: &[f64; N]| {
        let mut u = [0.0; N];
        for i in 0..N {
            u[i] = to_unbounded(x[i], boxes[i]);
        }
        u
    };
    // The logistic map flattens near the box edges, where BFGS can stall
    // and report convergence; restarting from inside the margin escapes.
    let mut best = bfgs(|u| f(&map(u)), pull_in(&start));
    best.x = map(&best.x);
    let mut iterations = best.iterations;
    for _ in 0..MAX_RESTARTS {
        let out = bfgs(|u| f(&map(u)), pull_in(&best.x));
        iterations += out.iterations;
        let improved = out.value < best.value - REL_TOL * best.value.abs();
        if out.value <= best.value {
            best = MinimizeOutcome { x: map(&out.x), ..out };
        }
        if !improved {
            break;
        }
    }
    best.iterations = iterations;
    best
}

fn fit_from(overlap: &DecaySummary, reference: &DecaySummary, start: JointParams) -> (JointParams, MinimizeOutcome<4>) {
    let out = minimize_boxed(
        |x| joint_objective(overlap, reference, &JointParams::from_array(*x)),
        start.to_array(),
        JOINT_BOXES,
    );
    (JointParams::from_array(out.x), out)
}

/// Initial point from Prony estimates and the surrogate rows.
pub fn joint_seed(overlap: &DecaySummary, reference: &DecaySummary) -> (JointParams, bool) {
    let rm = reference.means();
    let om = overlap.means();
    let ref_seed = prony_from_means(&rm);
    let ov_seed = prony_from_means(&om);
    let p_ref = if ref_seed.degenerate { 0.9 } else { ref_seed.rate };
    let offset = match (rm.get(&None), om.get(&None)) {
        (Some(a), Some(b)) => 0.5 * (a + b),
        (Some(a), None) | (None, Some(a)) => *a,
        (None, None) => 0.5,
    }
    .clamp(0.01, 0.99);
    let first = rm.iter().find_map(|(k, v)| k.map(|n| (n, *v)));
    let scale = match first {
        Some((n, f)) if p_ref.abs() > 1e-3 => (f - offset) / p_ref.powi(n),
        _ => 0.4,
    }
    .clamp(0.01, 0.99);
    (
        JointParams {
            p_j: ov_seed.rate,
            p_ref,
            scale,
            offset,
        },
        ov_seed.degenerate,
    )
}

/// Full joint fit: Prony seed plus starts at `-1/3, 0, 1/3` for the overlap
/// rate, best objective kept.
pub fn joint_fit_summaries(overlap: &DecaySummary, reference: &DecaySummary) -> FitResult {
    let (seed, degenerate) = joint_seed(overlap, reference);
    let mut best: Option<(JointParams, MinimizeOutcome<4>)> = None;
    for p in [seed.p_j, -1.0 / 3.0, 0.0, 1.0 / 3.0] {
        let cand = fit_from(overlap, reference, JointParams { p_j: p, ..seed });
        if best.as_ref().map_or(true, |b| cand.1.value < b.1.value) {
            best = Some(cand);
        }
    }
    let (params, out) = best.unwrap();
    FitResult {
        params,
        objective: out.value,
        converged: out.converged,
        iterations: out.iterations,
        prony_degenerate: degenerate,
        ci: None,
    }
}

/// Refit from a known good starting point (bootstrap replications).
pub fn joint_fit_warm(overlap: &DecaySummary, reference: &DecaySummary, start: &JointParams) -> JointParams {
    fit_from(overlap, reference, *start).0
}

fn check_dataset(ds: &DecayDataset) -> Result<(), FitError> {
    if ds.rows.is_empty() {
        return Err(FitError::Empty(ds.overlap));
    }
    if !ds.rows.iter().any(|r| r.length.finite().is_some()) {
        return Err(FitError::NoFiniteLengths(ds.overlap));
    }
    Ok(())
}

pub fn joint_fit(overlap: &DecayDataset, reference: &DecayDataset) -> Result<FitResult, FitError> {
    check_dataset(overlap)?;
    check_dataset(reference)?;
    Ok(joint_fit_summaries(
        &DecaySummary::from_dataset(overlap),
        &DecaySummary::from_dataset(reference),
    ))
}

/// Single-decay parameters for plain RB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleFit {
    pub p: f64,
    #[serde(rename = "A")]
    pub scale: f64,
    #[serde(rename = "B")]
    pub offset: f64,
    pub objective: f64,
    pub converged: bool,
}

/// Three-parameter fit of one decay, seeded by Prony.
pub fn single_fit(ds: &DecayDataset) -> Result<SingleFit, FitError> {
    check_dataset(ds)?;
    single_fit_summary(&DecaySummary::from_dataset(ds))
}

pub fn single_fit_summary(s: &DecaySummary) -> Result<SingleFit, FitError> {
    let means = s.means();
    let seed = prony_from_means(&means);
    let p0 = if seed.degenerate { 0.9 } else { seed.rate };
    let b0 = means.get(&None).copied().unwrap_or(0.5).clamp(0.01, 0.99);
    let (n, f) = means
        .iter()
        .find_map(|(k, v)| k.map(|n| (n, *v)))
        .ok_or(FitError::NoFiniteSummary)?;
    let a0 = if p0.abs() > 1e-3 { (f - b0) / p0.powi(n) } else { 0.4 }.clamp(0.01, 0.99);
    let out = minimize_boxed(
        |x| s.mse(x[1], x[2], x[0]),
        [p0, a0, b0],
        [RATE_BOX, SCALE_BOX, OFFSET_BOX],
    );
    Ok(SingleFit {
        p: out.x[0],
        scale: out.x[1],
        offset: out.x[2],
        objective: out.value,
        converged: out.converged,
    })
}

/// Model values `A p^n + B` for plotting.
pub fn fitted_curve(scale: f64, offset: f64, rate: f64, lengths: &[Length]) -> Vec<(Length, f64)> {
    lengths
        .iter()
        .map(|&l| {
            let v = match l {
                Length::Finite(n) => scale * rate.powi(n as i32) + offset,
                Length::Infinite => offset,
            };
            (l, v)
        })
        .collect()
}

/// Fast per-configuration bin resampling for one dataset.
#[derive(Debug, Clone)]
pub struct Resampler {
    lengths: Vec<Length>,
    /// `(length index, counts)` per configuration.
    configs: Vec<(usize, Vec<u16>)>,
    scale: f64,
}

impl Resampler {
    pub fn new(ds: &DecayDataset) -> Self {
        let lengths = ds.lengths();
        let configs = ds
            .rows
            .iter()
            .filter(|r| !r.counts.is_empty())
            .map(|r| (lengths.binary_search(&r.length).unwrap(), r.counts.clone()))
            .collect();
        Self {
            lengths,
            configs,
            scale: ds.shots_per_bin as f64,
        }
    }

    fn finish(&self, raw: &[(u64, u64, u64)]) -> DecaySummary {
        let s = self.scale;
        let stats: Vec<(Length, Moments)> = self
            .lengths
            .iter()
            .zip(raw)
            .map(|(&l, &(n, sum, sumsq))| {
                (
                    l,
                    Moments {
                        count: n as f64,
                        sum: sum as f64 / s,
                        sumsq: sumsq as f64 / (s * s),
                    },
                )
            })
            .collect();
        DecaySummary::from_moments(&stats)
    }

    pub fn summary(&self) -> DecaySummary {
        let mut raw = vec![(0u64, 0u64, 0u64); self.lengths.len()];
        for (li, counts) in &self.configs {
            let r = &mut raw[*li];
            for &c in counts {
                r.0 += 1;
                r.1 += c as u64;
                r.2 += c as u64 * c as u64;
            }
        }
        self.finish(&raw)
    }

    /// Draws each configuration's bins with replacement.
    pub fn resample(&self, rng: &mut impl RngCore) -> DecaySummary {
        let mut raw = vec![(0u64, 0u64, 0u64); self.lengths.len()];
        for (li, counts) in &self.configs {
            let m = counts.len() as u64;
            let (mut sum, mut sumsq) = (0u64, 0u64);
            let mut k = 0;
            while k < counts.len() {
                let word = rng.next_u64();
                for half in [word & 0xffff_ffff, word >> 32] {
                    if k == counts.len() {
                        break;
                    }
                    let c = counts[((half * m) >> 32) as usize] as u64;
                    sum += c;
                    sumsq += c * c;
                    k += 1;
                }
            }
            let r = &mut raw[*li];
            r.0 += m;
            r.1 += sum;
            r.2 += sumsq;
        }
        self.finish(&raw)
    }
}

/// Generator for bootstrap replication `rep`.
pub fn replication_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a09_e667_f3bc_c908);
    rng.set_stream(rep as u64);
    rng
}

/// Linear-interpolation percentile (`q` in `[0, 1]`) of unsorted data.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Central 95% percentile interval.
pub fn percentile_interval(values: &[f64]) -> Interval {
    Interval {
        lo: percentile(values, 0.025),
        hi: percentile(values, 0.975),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSettings {
    pub replications: usize,
    pub seed: u64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        Self {
            replications: 2000,
            seed: 0,
        }
    }
}

/// Joint fit with percentile intervals from resampling both decays.
pub fn bootstrap(
    overlap: &DecayDataset,
    reference: &DecayDataset,
    settings: &BootstrapSettings,
) -> Result<(FitResult, Vec<JointParams>), FitError> {
    if settings.replications == 0 {
        return Err(FitError::NoReplications);
    }
    let mut fit = joint_fit(overlap, reference)?;
    let ov = Resampler::new(overlap);
    let rf = Resampler::new(reference);
    let start = fit.params;
    let samples: Vec<JointParams> = (0..settings.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(settings.seed, rep);
            let r = rf.resample(&mut rng);
            let o = ov.resample(&mut rng);
            joint_fit_warm(&o, &r, &start)
        })
        .collect();
    fit.ci = Some(joint_cis(&samples));
    Ok((fit, samples))
}

pub fn joint_cis(samples: &[JointParams]) -> JointCis {
    let col = |f: fn(&JointParams) -> f64| percentile_interval(&samples.iter().map(f).collect::<Vec<_>>());
    JointCis {
        p_j: col(|p| p.p_j),
        p_ref: col(|p| p.p_ref),
        scale: col(|p| p.scale),
        offset: col(|p| p.offset),
    }
}
