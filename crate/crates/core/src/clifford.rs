//! The 12-element A4 subgroup of the single-qubit Clifford group, the full
//! 24-element Clifford group, and their multiplication tables.
//!
//! Elements are numbered from 1, following the conventional listing of A4:
//! the identity, pi rotations about X, Y and Z, then pairs of 2pi/3 and 4pi/3
//! rotations about the four cube diagonals. Two unitaries are the same group
//! element when their superoperators agree, so global phases never matter.
//!
//! All composition after construction is integer table lookup.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pauli::{compose, SuperOp, UnitaryOp};

/// Superoperators closer than this (max-abs) are the same element.
pub const ELEMENT_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroupError {
    #[error("index {index} outside 1..={size}")]
    BadIndex { index: usize, size: usize },
    #[error("no element matches the product of {0} and {1}; the table is corrupted")]
    NoMatch(usize, usize),
    #[error("group table failed validation: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    A4,
    Clifford24,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    /// 1-based position in the group listing.
    pub index: usize,
    pub unitary: UnitaryOp,
    pub superop: SuperOp,
}

pub type A4Element = GroupElement;
pub type CliffordElement = GroupElement;

/// Multiplication and inverse tables, 0-based internally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupTable {
    mult: Vec<Vec<u8>>,
    inv: Vec<u8>,
}

impl GroupTable {
    pub fn size(&self) -> usize {
        self.inv.len()
    }

    /// Order-sensitive checksum of the multiplication table.
    pub fn checksum(&self) -> u64 {
        // FNV-1a over row-major entries.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for row in &self.mult {
            for &x in row {
                h ^= x as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

#[derive(Debug, Clone)]
pub struct Group {
    kind: GroupKind,
    elements: Vec<GroupElement>,
    table: GroupTable,
}

impl Group {
    /// Shared A4 instance.
    pub fn a4() -> &'static Group {
        static A4: OnceLock<Group> = OnceLock::new();
        A4.get_or_init(|| Group::build(GroupKind::A4, a4_unitaries()).expect("A4 table is valid"))
    }

    /// Shared Clifford-24 instance.
    pub fn clifford24() -> &'static Group {
        static C24: OnceLock<Group> = OnceLock::new();
        C24.get_or_init(|| {
            Group::build(GroupKind::Clifford24, clifford24_unitaries())
                .expect("Clifford table is valid")
        })
    }

    pub fn get(kind: GroupKind) -> &'static Group {
        match kind {
            GroupKind::A4 => Self::a4(),
            GroupKind::Clifford24 => Self::clifford24(),
        }
    }

    fn build(kind: GroupKind, unitaries: Vec<UnitaryOp>) -> Result<Self, GroupError> {
        let elements: Vec<GroupElement> = unitaries
            .into_iter()
            .enumerate()
            .map(|(i, u)| GroupElement {
                index: i + 1,
                superop: SuperOp::from_unitary(&u),
                unitary: u,
            })
            .collect();
        let n = elements.len();
        for a in 0..n {
            for b in 0..a {
                if elements[a].superop.max_abs_diff(&elements[b].superop) < ELEMENT_TOL {
                    return Err(GroupError::Invalid(format!(
                        "elements {} and {} coincide",
                        b + 1,
                        a + 1
                    )));
                }
            }
        }
        let mut mult = vec![vec![0u8; n]; n];
        for g in 0..n {
            for h in 0..n {
                let prod = compose(&elements[g].superop, &elements[h].superop);
                let k = find_superop(&elements, &prod).ok_or(GroupError::NoMatch(g + 1, h + 1))?;
                mult[g][h] = k as u8;
            }
        }
        let identity = find_superop(&elements, &SuperOp::identity())
            .ok_or_else(|| GroupError::Invalid("identity missing".into()))?;
        if identity != 0 {
            return Err(GroupError::Invalid("identity must be element 1".into()));
        }
        let mut inv = vec![0u8; n];
        for g in 0..n {
            let h = (0..n)
                .find(|&h| mult[g][h] == 0)
                .ok_or_else(|| GroupError::Invalid(format!("element {} has no inverse", g + 1)))?;
            inv[g] = h as u8;
        }
        let group = Self {
            kind,
            elements,
            table: GroupTable { mult, inv },
        };
        group.validate()?;
        Ok(group)
    }

    /// Exhaustive group-axiom check from the integer tables.
    pub fn validate(&self) -> Result<(), GroupError> {
        let n = self.size();
        let t = &self.table;
        for g in 0..n {
            if t.mult[0][g] as usize != g || t.mult[g][0] as usize != g {
                return Err(GroupError::Invalid(format!("identity fails on {}", g + 1)));
            }
            if t.mult[g][t.inv[g] as usize] != 0 || t.mult[t.inv[g] as usize][g] != 0 {
                return Err(GroupError::Invalid(format!("inverse fails on {}", g + 1)));
            }
            let mut seen = vec![false; n];
            for h in 0..n {
                seen[t.mult[g][h] as usize] = true;
            }
            if seen.iter().any(|s| !s) {
                return Err(GroupError::Invalid(format!("row {} is not a permutation", g + 1)));
            }
        }
        for a in 0..n {
            for b in 0..n {
                let ab = t.mult[a][b] as usize;
                for c in 0..n {
                    let lhs = t.mult[ab][c];
                    let rhs = t.mult[a][t.mult[b][c] as usize];
                    if lhs != rhs {
                        return Err(GroupError::Invalid(format!(
                            "associativity fails on ({}, {}, {})",
                            a + 1,
                            b + 1,
                            c + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn table(&self) -> &GroupTable {
        &self.table
    }

    fn check(&self, index: usize) -> Result<usize, GroupError> {
        if index == 0 || index > self.size() {
            return Err(GroupError::BadIndex {
                index,
                size: self.size(),
            });
        }
        Ok(index - 1)
    }

    pub fn element(&self, index: usize) -> Result<&GroupElement, GroupError> {
        Ok(&self.elements[self.check(index)?])
    }

    pub fn superop(&self, index: usize) -> &SuperOp {
        &self.elements[index - 1].superop
    }

    /// Index of `g * h` (`h` applied first).
    pub fn multiply(&self, g: usize, h: usize) -> Result<usize, GroupError> {
        let (a, b) = (self.check(g)?, self.check(h)?);
        Ok(self.table.mult[a][b] as usize + 1)
    }

    pub fn inverse(&self, g: usize) -> Result<usize, GroupError> {
        Ok(self.table.inv[self.check(g)?] as usize + 1)
    }

    /// Product of a chronological run of elements (first entry applied first).
    pub fn fold_chronological(&self, run: &[usize]) -> Result<usize, GroupError> {
        let mut acc = 1;
        for &g in run {
            acc = self.multiply(g, acc)?;
        }
        Ok(acc)
    }

    /// Index of the element with the given superoperator, if any.
    pub fn find(&self, s: &SuperOp) -> Option<usize> {
        find_superop(&self.elements, s).map(|k| k + 1)
    }
}

fn find_superop(elements: &[GroupElement], s: &SuperOp) -> Option<usize> {
    elements
        .iter()
        .position(|e| e.superop.max_abs_diff(s) < ELEMENT_TOL)
}

fn diag(sx: f64, sy: f64, sz: f64) -> [f64; 3] {
    let n = 3f64.sqrt();
    [sx / n, sy / n, sz / n]
}

/// The twelve A4 unitaries in their conventional order.
pub fn a4_unitaries() -> Vec<UnitaryOp> {
    let axes = [
        diag(1.0, 1.0, 1.0),
        diag(1.0, -1.0, 1.0),
        diag(1.0, 1.0, -1.0),
        diag(-1.0, 1.0, 1.0),
    ];
    let mut out = vec![
        UnitaryOp::identity(),
        UnitaryOp::exp_pauli([1.0, 0.0, 0.0], PI / 2.0).unwrap(),
        UnitaryOp::exp_pauli([0.0, 1.0, 0.0], PI / 2.0).unwrap(),
        UnitaryOp::exp_pauli([0.0, 0.0, 1.0], PI / 2.0).unwrap(),
    ];
    for axis in axes {
        out.push(UnitaryOp::exp_pauli(axis, PI / 3.0).unwrap());
        out.push(UnitaryOp::exp_pauli(axis, 2.0 * PI / 3.0).unwrap());
    }
    out
}

/// Breadth-first closure of {I, exp(-i pi X/4), exp(-i pi Z/4)}; each new
/// element is `generator * current`, generators tried in listed order.
pub fn clifford24_unitaries() -> Vec<UnitaryOp> {
    let gens = [
        UnitaryOp::identity(),
        UnitaryOp::exp_pauli([1.0, 0.0, 0.0], PI / 4.0).unwrap(),
        UnitaryOp::exp_pauli([0.0, 0.0, 1.0], PI / 4.0).unwrap(),
    ];
    let mut found: Vec<(UnitaryOp, SuperOp)> = vec![(UnitaryOp::identity(), SuperOp::identity())];
    let mut head = 0;
    while head < found.len() {
        let current = found[head].0;
        for g in &gens {
            let u = *g * current;
            let s = SuperOp::from_unitary(&u);
            if !found.iter().any(|(_, t)| t.max_abs_diff(&s) < ELEMENT_TOL) {
                found.push((u, s));
            }
        }
        head += 1;
    }
    found.into_iter().map(|(u, _)| u).collect()
}

/// The first ten A4 elements, a basis for the span of the group's
/// superoperators.
pub fn overlap_basis() -> &'static [GroupElement] {
    &Group::a4().elements()[..OVERLAP_BASIS_SIZE]
}

pub const OVERLAP_BASIS_SIZE: usize = 10;

pub fn a4_elements() -> &'static [GroupElement] {
    Group::a4().elements()
}

pub fn clifford24_elements() -> &'static [GroupElement] {
    Group::clifford24().elements()
}

/// `1/|G|^2 sum_{g,h} |tr(U_g^dagger U_h)|^4`.
pub fn frame_potential(elements: &[GroupElement]) -> f64 {
    let n = elements.len() as f64;
    let mut total = 0.0;
    for g in elements {
        for h in elements {
            let t = (g.unitary.matrix().adjoint() * h.unitary.matrix()).trace();
            total += t.norm_sqr().powi(2);
        }
    }
    total / (n * n)
}

/// Numerical rank of stacked, row-major vectorized superoperators.
pub fn superop_rank(elements: &[GroupElement]) -> usize {
    let rows = elements.len();
    let m = nalgebra::DMatrix::from_fn(rows, 16, |r, c| elements[r].superop.to_row_major()[c]);
    m.rank(1e-9)
}

/// Serializable snapshot of both groups' superoperators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFixture {
    pub a4: Vec<SuperOp>,
    pub clifford24: Vec<SuperOp>,
    pub a4_table_checksum: u64,
    pub clifford24_table_checksum: u64,
}

impl GroupFixture {
    pub fn current() -> Self {
        Self {
            a4: a4_elements().iter().map(|e| e.superop).collect(),
            clifford24: clifford24_elements().iter().map(|e| e.superop).collect(),
            a4_table_checksum: Group::a4().table().checksum(),
            clifford24_table_checksum: Group::clifford24().table().checksum(),
        }
    }
}
