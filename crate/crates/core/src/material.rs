//! Material quantities and the two material groups that the sorting modes act on.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Sub};

use serde::{Deserialize, Serialize};

pub const N_MATERIALS: usize = 5;

/// Material group a sorting mode can boost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

impl Group {
    pub fn index(self) -> usize {
        match self {
            Group::A => 0,
            Group::B => 1,
        }
    }
}

/// Group membership of each material type: A = {0, 1, 2}, B = {3, 4}.
pub const MATERIAL_GROUP: [Group; N_MATERIALS] = [Group::A, Group::A, Group::A, Group::B, Group::B];

/// Nonnegative volume per material type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MaterialVector(pub [f64; N_MATERIALS]);

impl MaterialVector {
    pub const ZERO: MaterialVector = MaterialVector([0.0; N_MATERIALS]);

    pub fn new(q: [f64; N_MATERIALS]) -> Self {
        MaterialVector(q)
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() <= 0.0
    }

    /// Volume per group, indexed by [`Group::index`].
    pub fn group_masses(&self) -> [f64; 2] {
        let mut m = [0.0; 2];
        for (q, g) in self.0.iter().zip(MATERIAL_GROUP) {
            m[g.index()] += q;
        }
        m
    }

    /// Shares of each type; the zero vector when empty.
    pub fn proportions(&self) -> [f64; N_MATERIALS] {
        let total = self.total();
        if total <= 0.0 {
            return [0.0; N_MATERIALS];
        }
        self.0.map(|q| q / total)
    }

    pub fn scaled(&self, k: f64) -> Self {
        MaterialVector(self.0.map(|q| q * k))
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.0.iter()
    }
}

impl Index<usize> for MaterialVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for MaterialVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for MaterialVector {
    type Output = MaterialVector;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for MaterialVector {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

impl Sub for MaterialVector {
    type Output = MaterialVector;
    fn sub(mut self, rhs: Self) -> Self {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a -= b;
        }
        self
    }
}

impl Mul<f64> for MaterialVector {
    type Output = MaterialVector;
    fn mul(self, k: f64) -> Self {
        self.scaled(k)
    }
}
