//! Generation and compilation of benchmarking sequences.
//!
//! Every gate list in this module is chronological: the first entry acts
//! first. Superoperator products therefore run right to left over the list.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::clifford::{Group, GroupError, GroupKind, OVERLAP_BASIS_SIZE};
use crate::pauli::{compose, SuperOp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SequenceError {
    #[error("overlap index {0} outside 1..=10")]
    BadOverlap(usize),
    #[error("cells disagree on the overlap index ({0} vs {1})")]
    MixedOverlap(usize, usize),
    #[error("a sequence needs at least one cell")]
    Empty,
    #[error("length {0} is too long for exhaustive enumeration")]
    TooLong(usize),
    #[error("length 0 is not a valid sequence length")]
    ZeroLength,
    #[error(transparent)]
    Group(#[from] GroupError),
}

/// Sequence length; `Infinite` marks the twirled-state surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Length {
    Finite(usize),
    Infinite,
}

impl Length {
    pub fn finite(&self) -> Option<usize> {
        match self {
            Length::Finite(n) => Some(*n),
            Length::Infinite => None,
        }
    }
}

impl fmt::Display for Length {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Length::Finite(n) => write!(f, "{n}"),
            Length::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Length {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "Inf" | "infinity" | "∞" => Ok(Length::Infinite),
            t => t
                .parse::<usize>()
                .map(Length::Finite)
                .map_err(|_| format!("bad length {s:?}")),
        }
    }
}

impl Serialize for Length {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Length::Finite(n) => s.serialize_u64(*n as u64),
            Length::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Length {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(Length::Finite(n as usize)),
            Raw::S(s) => s.parse().map_err(de::Error::custom),
        }
    }
}

/// One position in a compiled sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    /// A group element by 1-based index.
    Gate(u8),
    /// The operation under test.
    Target,
}

impl Serialize for Slot {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Slot::Gate(k) => s.serialize_u8(*k),
            Slot::Target => s.serialize_str("E"),
        }
    }
}

impl<'de> Deserialize<'de> for Slot {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u8),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(k) => Ok(Slot::Gate(k)),
            Raw::S(s) if s == "E" => Ok(Slot::Target),
            Raw::S(s) => Err(de::Error::custom(format!("bad slot {s:?}"))),
        }
    }
}

/// The four-slot cell `[C_r, E, C_j^dagger, C_r^dagger]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitCell {
    pub randomizer: usize,
    pub overlap: usize,
}

impl UnitCell {
    pub fn new(randomizer: usize, overlap: usize) -> Result<Self, SequenceError> {
        check_overlap(overlap)?;
        Group::a4().element(randomizer)?;
        Ok(Self {
            randomizer,
            overlap,
        })
    }

    /// Chronological slots of the uncompiled cell.
    pub fn slots(&self) -> [Slot; 4] {
        let g = Group::a4();
        let inv = |k| Slot::Gate(g.inverse(k).unwrap() as u8);
        [
            Slot::Gate(self.randomizer as u8),
            Slot::Target,
            inv(self.overlap),
            inv(self.randomizer),
        ]
    }
}

fn check_overlap(j: usize) -> Result<(), SequenceError> {
    if j == 0 || j > OVERLAP_BASIS_SIZE {
        return Err(SequenceError::BadOverlap(j));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RbtSequence {
    /// Position within its set; also the simulator's RNG stream id.
    pub id: usize,
    /// Overlap index, or 0 for sequences without one (plain RB, surrogate).
    #[serde(rename = "j")]
    pub overlap: usize,
    #[serde(rename = "n")]
    pub length: Length,
    pub randomizers: Vec<u8>,
    pub compiled: Vec<Slot>,
    #[serde(default)]
    pub repeat: u32,
}

impl RbtSequence {
    pub fn target_count(&self) -> usize {
        self.compiled.iter().filter(|s| **s == Slot::Target).count()
    }
}

/// Compiles a chronological list of cells sharing one overlap index into
/// alternating group elements and target slots.
pub fn compile(cells: &[UnitCell]) -> Result<Vec<Slot>, SequenceError> {
    let first = cells.first().ok_or(SequenceError::Empty)?;
    let j = first.overlap;
    if let Some(c) = cells.iter().find(|c| c.overlap != j) {
        return Err(SequenceError::MixedOverlap(j, c.overlap));
    }
    let g = Group::a4();
    let j_inv = g.inverse(j)?;
    let mut out = Vec::with_capacity(2 * cells.len() + 1);
    out.push(Slot::Gate(first.randomizer as u8));
    for w in cells.windows(2) {
        out.push(Slot::Target);
        let r_inv = g.inverse(w[0].randomizer)?;
        let k = g.fold_chronological(&[j_inv, r_inv, w[1].randomizer])?;
        out.push(Slot::Gate(k as u8));
    }
    out.push(Slot::Target);
    let last = cells.last().unwrap();
    let k = g.fold_chronological(&[j_inv, g.inverse(last.randomizer)?])?;
    out.push(Slot::Gate(k as u8));
    Ok(out)
}

/// Builds an RBT sequence from chronological randomizers.
pub fn rbt_sequence(
    id: usize,
    overlap: usize,
    randomizers: &[u8],
    repeat: u32,
) -> Result<RbtSequence, SequenceError> {
    let cells = randomizers
        .iter()
        .map(|&r| UnitCell::new(r as usize, overlap))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RbtSequence {
        id,
        overlap,
        length: Length::Finite(randomizers.len()),
        randomizers: randomizers.to_vec(),
        compiled: compile(&cells)?,
        repeat,
    })
}

/// Product of a chronological slot list, `target` substituted for `E`.
pub fn slots_superop(group: &Group, slots: &[Slot], target: &SuperOp) -> SuperOp {
    slots.iter().fold(SuperOp::identity(), |acc, s| {
        let op = match s {
            Slot::Gate(k) => group.superop(*k as usize),
            Slot::Target => target,
        };
        compose(op, &acc)
    })
}

/// Product of the uncompiled cells.
pub fn cells_superop(cells: &[UnitCell], target: &SuperOp) -> SuperOp {
    let slots: Vec<Slot> = cells.iter().flat_map(|c| c.slots()).collect();
    slots_superop(Group::a4(), &slots, target)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSet {
    pub group: GroupKind,
    /// Overlap index, or 0 when the set is not an overlap experiment.
    #[serde(rename = "j")]
    pub overlap: usize,
    pub lengths: Vec<Length>,
    pub repeats: BTreeMap<String, u32>,
    pub sequences: Vec<RbtSequence>,
}

impl SequenceSet {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Number of distinct randomizer tuples (repeats collapsed) per length.
    pub fn distinct_counts(&self) -> BTreeMap<Length, usize> {
        let mut out = BTreeMap::new();
        for s in self.sequences.iter().filter(|s| s.repeat == 0) {
            *out.entry(s.length).or_insert(0) += 1;
        }
        out
    }

    fn renumber(&mut self) {
        for (i, s) in self.sequences.iter_mut().enumerate() {
            s.id = i;
        }
    }
}

/// Repeat counts matching the reference protocol: length-1 and surrogate
/// sequences are run 12 times each.
pub fn default_repeats() -> BTreeMap<Length, u32> {
    BTreeMap::from([(Length::Finite(1), 12), (Length::Infinite, 12)])
}

fn repeats_to_strings(repeats: &BTreeMap<Length, u32>) -> BTreeMap<String, u32> {
    repeats.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Largest finite length accepted by [`exhaustive_set`] (12^6 sequences).
pub const MAX_EXHAUSTIVE_LENGTH: usize = 6;

/// Every randomizer tuple at each finite length plus the surrogate.
/// Identical copies of a sequence are emitted once per repeat.
pub fn exhaustive_set(
    overlap: usize,
    lengths: &[Length],
    repeats: &BTreeMap<Length, u32>,
) -> Result<SequenceSet, SequenceError> {
    check_overlap(overlap)?;
    let mut sequences = Vec::new();
    for &len in lengths {
        let copies = repeats.get(&len).copied().unwrap_or(1).max(1);
        let base: Vec<RbtSequence> = match len {
            Length::Infinite => surrogate_sequences(GroupKind::A4),
            Length::Finite(0) => return Err(SequenceError::ZeroLength),
            Length::Finite(n) if n > MAX_EXHAUSTIVE_LENGTH => {
                return Err(SequenceError::TooLong(n))
            }
            Length::Finite(n) => all_tuples(n, 12)
                .into_iter()
                .map(|t| rbt_sequence(0, overlap, &t, 0))
                .collect::<Result<_, _>>()?,
        };
        for rep in 0..copies {
            sequences.extend(base.iter().cloned().map(|mut s| {
                s.repeat = rep;
                s
            }));
        }
    }
    let mut set = SequenceSet {
        group: GroupKind::A4,
        overlap,
        lengths: lengths.to_vec(),
        repeats: repeats_to_strings(repeats),
        sequences,
    };
    set.renumber();
    Ok(set)
}

fn all_tuples(n: usize, size: u8) -> Vec<Vec<u8>> {
    let mut out: Vec<Vec<u8>> = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|t| {
                (1..=size).map(move |k| {
                    let mut u = t.clone();
                    u.push(k);
                    u
                })
            })
            .collect();
    }
    out
}

fn surrogate_sequences(kind: GroupKind) -> Vec<RbtSequence> {
    let n = Group::get(kind).size();
    (1..=n as u8)
        .map(|k| RbtSequence {
            id: 0,
            overlap: 0,
            length: Length::Infinite,
            randomizers: vec![k],
            compiled: vec![Slot::Gate(k)],
            repeat: 0,
        })
        .collect()
}

/// Each A4 element applied once; averaging their survival twirls the
/// prepared state, estimating the decay asymptote.
pub fn infinite_length_surrogate() -> SequenceSet {
    let mut set = SequenceSet {
        group: GroupKind::A4,
        overlap: 0,
        lengths: vec![Length::Infinite],
        repeats: BTreeMap::new(),
        sequences: surrogate_sequences(GroupKind::A4),
    };
    set.renumber();
    set
}

/// RBT sequences with uniformly random randomizers, for lengths beyond
/// exhaustive reach. The surrogate is included when `Infinite` is listed.
pub fn random_rbt_set(
    overlap: usize,
    lengths: &[Length],
    per_length: usize,
    seed: u64,
) -> Result<SequenceSet, SequenceError> {
    check_overlap(overlap)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sequences = Vec::new();
    for &len in lengths {
        match len {
            Length::Infinite => sequences.extend(surrogate_sequences(GroupKind::A4)),
            Length::Finite(0) => return Err(SequenceError::ZeroLength),
            Length::Finite(n) => {
                for _ in 0..per_length {
                    let r: Vec<u8> = (0..n).map(|_| rng.gen_range(1..=12)).collect();
                    sequences.push(rbt_sequence(0, overlap, &r, 0)?);
                }
            }
        }
    }
    let mut set = SequenceSet {
        group: GroupKind::A4,
        overlap,
        lengths: lengths.to_vec(),
        repeats: BTreeMap::new(),
        sequences,
    };
    set.renumber();
    Ok(set)
}

/// Plain RB: `n` uniformly random group elements followed by the element
/// that inverts their product. No target slots.
pub fn standard_rb_set(
    kind: GroupKind,
    lengths: &[Length],
    per_length: usize,
    seed: u64,
) -> Result<SequenceSet, SequenceError> {
    let group = Group::get(kind);
    let size = group.size() as u8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sequences = Vec::new();
    for &len in lengths {
        match len {
            Length::Infinite => sequences.extend(surrogate_sequences(kind)),
            Length::Finite(0) => return Err(SequenceError::ZeroLength),
            Length::Finite(n) => {
                for _ in 0..per_length {
                    let r: Vec<u8> = (0..n).map(|_| rng.gen_range(1..=size)).collect();
                    let run: Vec<usize> = r.iter().map(|&k| k as usize).collect();
                    let net = group.fold_chronological(&run)?;
                    let mut compiled: Vec<Slot> = r.iter().map(|&k| Slot::Gate(k)).collect();
                    compiled.push(Slot::Gate(group.inverse(net)? as u8));
                    sequences.push(RbtSequence {
                        id: 0,
                        overlap: 0,
                        length: len,
                        randomizers: r,
                        compiled,
                        repeat: 0,
                    });
                }
            }
        }
    }
    let mut set = SequenceSet {
        group: kind,
        overlap: 0,
        lengths: lengths.to_vec(),
        repeats: BTreeMap::new(),
        sequences,
    };
    set.renumber();
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{depolarizing, unitary_error};
    use crate::pauli::UnitaryOp;

    fn a4() -> &'static Group {
        Group::a4()
    }

    #[test]
    fn chronological_convention() {
        // [C2, E] means C2 first, so the product is compose(E, C2).
        let x = SuperOp::from_unitary(&UnitaryOp::rotation([0.0, 1.0, 0.0], 0.5).unwrap());
        let slots = [Slot::Gate(2), Slot::Target];
        let s = slots_superop(a4(), &slots, &x);
        assert!(s.max_abs_diff(&compose(&x, a4().superop(2))) < 1e-15);
        assert!(s.max_abs_diff(&compose(a4().superop(2), &x)) > 1e-3);
    }

    #[test]
    fn unit_cell_examples() {
        let c = UnitCell::new(1, 1).unwrap();
        assert_eq!(
            c.slots(),
            [Slot::Gate(1), Slot::Target, Slot::Gate(1), Slot::Gate(1)]
        );
        for r in 1..=12 {
            for j in 1..=10 {
                let cell = UnitCell::new(r, j).unwrap();
                let s = cells_superop(&[cell], a4().superop(j));
                assert!(s.max_abs_diff(&SuperOp::identity()) < 1e-12);
            }
        }
        let e = unitary_error([0.6, 0.8, 0.0], 0.3).unwrap();
        let cell = UnitCell::new(2, 3).unwrap();
        let c2 = a4().superop(2);
        let c3 = a4().superop(3);
        let oracle = c2.transpose() * c3.transpose() * e * *c2;
        assert!(cells_superop(&[cell], &e).max_abs_diff(&oracle) < 1e-12);
    }

    #[test]
    fn compile_examples() {
        let s = rbt_sequence(0, 1, &[1], 0).unwrap();
        assert_eq!(s.compiled, vec![Slot::Gate(1), Slot::Target, Slot::Gate(1)]);
        let s = rbt_sequence(0, 1, &[5, 5], 0).unwrap();
        assert_eq!(s.compiled[2], Slot::Gate(1));
        assert!(matches!(compile(&[]), Err(SequenceError::Empty)));
        let mixed = [UnitCell::new(1, 1).unwrap(), UnitCell::new(1, 2).unwrap()];
        assert!(matches!(compile(&mixed), Err(SequenceError::MixedOverlap(1, 2))));
        assert!(matches!(UnitCell::new(1, 11), Err(SequenceError::BadOverlap(11))));
    }

    #[test]
    fn compiled_matches_uncompiled_for_every_length_three_sequence() {
        let e = compose(
            &depolarizing(0.9).unwrap(),
            &unitary_error([0.0, 0.6, 0.8], 0.4).unwrap(),
        );
        for j in [1, 4, 7] {
            let set = exhaustive_set(j, &[Length::Finite(3)], &BTreeMap::new()).unwrap();
            assert_eq!(set.len(), 1728);
            for s in &set.sequences {
                assert_eq!(s.target_count(), 3);
                let cells: Vec<UnitCell> = s
                    .randomizers
                    .iter()
                    .map(|&r| UnitCell::new(r as usize, j).unwrap())
                    .collect();
                let a = slots_superop(a4(), &s.compiled, &e);
                let b = cells_superop(&cells, &e);
                assert!(a.max_abs_diff(&b) < 1e-12);
                let ideal = slots_superop(a4(), &s.compiled, a4().superop(j));
                assert!(ideal.max_abs_diff(&SuperOp::identity()) < 1e-12);
            }
        }
    }

    #[test]
    fn exhaustive_counts() {
        let lengths = [
            Length::Finite(1),
            Length::Finite(2),
            Length::Finite(3),
            Length::Infinite,
        ];
        let set = exhaustive_set(2, &lengths, &BTreeMap::new()).unwrap();
        assert_eq!(set.len(), 1896);
        let d = set.distinct_counts();
        assert_eq!(d[&Length::Finite(1)], 12);
        assert_eq!(d[&Length::Finite(2)], 144);
        assert_eq!(d[&Length::Finite(3)], 1728);
        assert_eq!(d[&Length::Infinite], 12);
        let with = exhaustive_set(2, &lengths, &default_repeats()).unwrap();
        assert_eq!(with.len(), 2160);
        assert_eq!(with.distinct_counts().values().sum::<usize>(), 1896);
        let ids: Vec<usize> = with.sequences.iter().map(|s| s.id).collect();
        assert_eq!(ids, (0..2160).collect::<Vec<_>>());
    }

    #[test]
    fn exhaustive_tuples_are_distinct() {
        let set = exhaustive_set(1, &[Length::Finite(2)], &BTreeMap::new()).unwrap();
        let mut tuples: Vec<&Vec<u8>> = set.sequences.iter().map(|s| &s.randomizers).collect();
        tuples.sort();
        tuples.dedup();
        assert_eq!(tuples.len(), 144);
    }

    #[test]
    fn surrogate_twirls_to_maximally_mixed() {
        let set = infinite_length_surrogate();
        assert_eq!(set.len(), 12);
        let mut mean = [0.0; 4];
        for s in &set.sequences {
            let op = slots_superop(a4(), &s.compiled, &SuperOp::identity());
            let out = op.apply(&crate::pauli::PauliVector::ground());
            for (m, v) in mean.iter_mut().zip(out.0) {
                *m += v / 12.0;
            }
        }
        let survival = 0.5 * (mean[0] + mean[3]);
        assert!((survival - 0.5).abs() < 1e-12);
    }

    #[test]
    fn standard_rb_inverts_and_is_reproducible() {
        let lengths = [Length::Finite(1), Length::Finite(2), Length::Finite(7)];
        for kind in [GroupKind::A4, GroupKind::Clifford24] {
            let g = Group::get(kind);
            let set = standard_rb_set(kind, &lengths, 20, 7).unwrap();
            for s in &set.sequences {
                let op = slots_superop(g, &s.compiled, &SuperOp::identity());
                assert!(op.max_abs_diff(&SuperOp::identity()) < 1e-12);
            }
        }
        let a = standard_rb_set(GroupKind::Clifford24, &[Length::Finite(2)], 5, 11).unwrap();
        let b = standard_rb_set(GroupKind::Clifford24, &[Length::Finite(2)], 5, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn null_target_reduces_rbt_to_standard_rb() {
        // With E the identity, a j = 1 RBT sequence is a run of group
        // elements whose product is the identity.
        let set = random_rbt_set(1, &[Length::Finite(5)], 10, 3).unwrap();
        for s in &set.sequences {
            let gates: Vec<usize> = s
                .compiled
                .iter()
                .filter_map(|x| match x {
                    Slot::Gate(k) => Some(*k as usize),
                    Slot::Target => None,
                })
                .collect();
            assert_eq!(gates.len(), 6);
            assert_eq!(a4().fold_chronological(&gates).unwrap(), 1);
        }
    }

    #[test]
    fn serde_forms() {
        let s = rbt_sequence(3, 2, &[4, 9], 1).unwrap();
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(json["n"], 2);
        assert_eq!(json["compiled"][1], "E");
        let inf: Length = serde_json::from_str("\"inf\"").unwrap();
        assert_eq!(inf, Length::Infinite);
        let back: RbtSequence = serde_json::from_value(json).unwrap();
        assert_eq!(back, s);
    }
}
