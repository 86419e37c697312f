//! Finite groups, tori and their closed subgroups.

use std::f64::consts::PI;

use serde::Serialize;

use super::lattice::{diagonalize, hermite_normal_form, sublattice, IntMatrix};
use super::SymmetryError;
use crate::linear_core::Matrix;

/// Largest finite group order supported (subgroups are `u64` bit masks).
pub const MAX_FINITE_ORDER: usize = 64;

/// Quadrature nodes per circle factor of a torus.
pub const TORUS_NODES: usize = 64;

/// A finite group given by its multiplication table.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteGroup {
    labels: Vec<String>,
    mult: Vec<Vec<usize>>,
    inv: Vec<usize>,
    identity: usize,
    generators: Vec<usize>,
}

impl FiniteGroup {
    /// Validates the table: closure, identity, inverses and associativity.
    pub fn from_table(
        labels: Vec<String>,
        mult: Vec<Vec<usize>>,
        generators: Vec<usize>,
    ) -> Result<Self, SymmetryError> {
        let n = labels.len();
        if n == 0 || n > MAX_FINITE_ORDER {
            return Err(SymmetryError::GroupTooLarge { limit: MAX_FINITE_ORDER });
        }
        if mult.len() != n || mult.iter().any(|r| r.len() != n || r.iter().any(|&x| x >= n)) {
            return Err(SymmetryError::InvalidGroup("table is not n × n over the elements".into()));
        }
        let identity = (0..n)
            .find(|&e| (0..n).all(|a| mult[e][a] == a && mult[a][e] == a))
            .ok_or_else(|| SymmetryError::InvalidGroup("no identity element".into()))?;
        let mut inv = vec![usize::MAX; n];
        for a in 0..n {
            inv[a] = (0..n)
                .find(|&b| mult[a][b] == identity && mult[b][a] == identity)
                .ok_or_else(|| SymmetryError::InvalidGroup(format!("{} has no inverse", labels[a])))?;
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if mult[mult[a][b]][c] != mult[a][mult[b][c]] {
                        return Err(SymmetryError::InvalidGroup("table is not associative".into()));
                    }
                }
            }
        }
        if generators.iter().any(|&g| g >= n) {
            return Err(SymmetryError::InvalidGroup("generator index out of range".into()));
        }
        Ok(Self {
            labels,
            mult,
            inv,
            identity,
            generators,
        })
    }

    pub fn order(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    pub fn generators(&self) -> &[usize] {
        &self.generators
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.mult[a][b]
    }

    pub fn inverse(&self, a: usize) -> usize {
        self.inv[a]
    }

    pub fn full_mask(&self) -> u64 {
        if self.order() == 64 {
            u64::MAX
        } else {
            (1u64 << self.order()) - 1
        }
    }

    /// The subgroup generated by the elements of `mask`.
    pub fn closure(&self, mask: u64) -> u64 {
        let mut out = 1u64 << self.identity;
        let gens: Vec<usize> = members(mask).collect();
        let mut frontier = vec![self.identity];
        while let Some(a) = frontier.pop() {
            for &g in &gens {
                let b = self.mul(a, g);
                if out & (1 << b) == 0 {
                    out |= 1 << b;
                    frontier.push(b);
                }
            }
        }
        out
    }

    /// `g H g⁻¹`.
    pub fn conjugate(&self, mask: u64, g: usize) -> u64 {
        let gi = self.inverse(g);
        members(mask).fold(0, |acc, h| acc | 1 << self.mul(self.mul(g, h), gi))
    }

    /// A small generating set of the subgroup `mask`.
    pub fn subgroup_generators(&self, mask: u64) -> Vec<usize> {
        let mut gens = Vec::new();
        let mut span = 1u64 << self.identity;
        for a in members(mask) {
            if span & (1 << a) == 0 {
                gens.push(a);
                span = self.closure(span | (1 << a));
            }
        }
        gens
    }
}

/// Element indices present in a bit mask.
pub fn members(mask: u64) -> impl Iterator<Item = usize> {
    (0..64).filter(move |i| mask & (1u64 << i) != 0)
}

fn max_diff(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).amax()
}

/// Closes a set of (domain, target) generator matrix pairs into a finite group.
///
/// Elements are deduplicated at `1e-9`. Returns the group together with the
/// domain and target matrices of every element.
pub fn generate_matrix_group(
    generators: &[(Matrix, Matrix)],
) -> Result<(FiniteGroup, Vec<Matrix>, Vec<Matrix>), SymmetryError> {
    let (n, m) = match generators.first() {
        Some((d, t)) => (d.nrows(), t.nrows()),
        None => {
            return Err(SymmetryError::InvalidGroup("at least one generator is required".into()))
        }
    };
    for (d, t) in generators {
        if d.shape() != (n, n) || t.shape() != (m, m) {
            return Err(SymmetryError::DimensionMismatch(
                "generator matrices must be square and of a common size".into(),
            ));
        }
    }
    let find = |dom: &[Matrix], tgt: &[Matrix], d: &Matrix, t: &Matrix| {
        (0..dom.len()).find(|&i| max_diff(&dom[i], d) <= 1e-9 && max_diff(&tgt[i], t) <= 1e-9)
    };
    let mut dom = vec![Matrix::identity(n, n)];
    let mut tgt = vec![Matrix::identity(m, m)];
    let mut labels = vec!["e".to_string()];
    let mut queue = vec![0usize];
    let mut head = 0;
    while head < queue.len() {
        let a = queue[head];
        head += 1;
        for (gi, (gd, gt)) in generators.iter().enumerate() {
            let d = &dom[a] * gd;
            let t = &tgt[a] * gt;
            if find(&dom, &tgt, &d, &t).is_none() {
                if dom.len() == MAX_FINITE_ORDER {
                    return Err(SymmetryError::GroupTooLarge { limit: MAX_FINITE_ORDER });
                }
                let label = if a == 0 {
                    format!("g{gi}")
                } else {
                    format!("{}*g{gi}", labels[a])
                };
                dom.push(d);
                tgt.push(t);
                labels.push(label);
                queue.push(dom.len() - 1);
            }
        }
    }
    let order = dom.len();
    let mut mult = vec![vec![0; order]; order];
    for a in 0..order {
        for b in 0..order {
            let d = &dom[a] * &dom[b];
            let t = &tgt[a] * &tgt[b];
            mult[a][b] = find(&dom, &tgt, &d, &t).ok_or_else(|| {
                SymmetryError::InvalidGroup("generated set is not closed under products".into())
            })?;
        }
    }
    let gen_ids = generators
        .iter()
        .map(|(d, t)| find(&dom, &tgt, d, t).expect("generators are elements"))
        .collect();
    let group = FiniteGroup::from_table(labels, mult, gen_ids)?;
    Ok((group, dom, tgt))
}

/// A compact group: finite, or a torus `T^rank` with angle coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum CompactGroup {
    Finite(FiniteGroup),
    Torus { rank: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum GroupElement {
    Finite(usize),
    /// Angles in `(−π, π]`.
    Torus(Vec<f64>),
}

/// A closed subgroup.
///
/// Finite subgroups are element bit masks. Torus subgroups are `ann(Λ)` for
/// the lattice `Λ` stored in Hermite normal form, which makes it a canonical key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub enum Subgroup {
    Finite { mask: u64 },
    Torus { lattice: IntMatrix },
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(t: f64) -> f64 {
    let w = t - 2.0 * PI * (t / (2.0 * PI)).round();
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

impl CompactGroup {
    pub fn torus(rank: usize) -> Result<Self, SymmetryError> {
        if rank == 0 {
            return Err(SymmetryError::InvalidGroup("torus rank must be positive".into()));
        }
        Ok(CompactGroup::Torus { rank })
    }

    pub fn trivial() -> Self {
        CompactGroup::Finite(
            FiniteGroup::from_table(vec!["e".into()], vec![vec![0]], vec![]).expect("trivial group"),
        )
    }

    pub fn as_finite(&self) -> Option<&FiniteGroup> {
        match self {
            CompactGroup::Finite(g) => Some(g),
            CompactGroup::Torus { .. } => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CompactGroup::Finite(_) => "finite",
            CompactGroup::Torus { .. } => "torus",
        }
    }

    pub fn identity(&self) -> GroupElement {
        match self {
            CompactGroup::Finite(g) => GroupElement::Finite(g.identity()),
            CompactGroup::Torus { rank } => GroupElement::Torus(vec![0.0; *rank]),
        }
    }

    pub fn multiply(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        match (self, a, b) {
            (CompactGroup::Finite(g), GroupElement::Finite(x), GroupElement::Finite(y)) => {
                GroupElement::Finite(g.mul(*x, *y))
            }
            (CompactGroup::Torus { .. }, GroupElement::Torus(x), GroupElement::Torus(y)) => {
                GroupElement::Torus(x.iter().zip(y).map(|(s, t)| wrap_angle(s + t)).collect())
            }
            _ => panic!("group element does not belong to this group"),
        }
    }

    pub fn inverse(&self, a: &GroupElement) -> GroupElement {
        match (self, a) {
            (CompactGroup::Finite(g), GroupElement::Finite(x)) => GroupElement::Finite(g.inverse(*x)),
            (CompactGroup::Torus { .. }, GroupElement::Torus(x)) => {
                GroupElement::Torus(x.iter().map(|t| wrap_angle(-t)).collect())
            }
            _ => panic!("group element does not belong to this group"),
        }
    }

    pub fn full_subgroup(&self) -> Subgroup {
        match self {
            CompactGroup::Finite(g) => Subgroup::Finite { mask: g.full_mask() },
            CompactGroup::Torus { .. } => Subgroup::Torus { lattice: Vec::new() },
        }
    }

    pub fn trivial_subgroup(&self) -> Subgroup {
        match self {
            CompactGroup::Finite(g) => Subgroup::Finite { mask: 1 << g.identity() },
            CompactGroup::Torus { rank } => Subgroup::Torus {
                lattice: (0..*rank)
                    .map(|i| (0..*rank).map(|j| i64::from(i == j)).collect())
                    .collect(),
            },
        }
    }

    /// The torus subgroup `ann(rows)`.
    pub fn torus_subgroup(&self, rows: &[Vec<i64>]) -> Subgroup {
        let k = self.rank();
        Subgroup::Torus {
            lattice: hermite_normal_form(rows, k),
        }
    }

    /// Torus rank, zero for finite groups.
    pub fn rank(&self) -> usize {
        match self {
            CompactGroup::Finite(_) => 0,
            CompactGroup::Torus { rank } => *rank,
        }
    }

    pub fn contains(&self, h: &Subgroup, g: &GroupElement) -> bool {
        match (h, g) {
            (Subgroup::Finite { mask }, GroupElement::Finite(x)) => mask & (1 << x) != 0,
            (Subgroup::Torus { lattice }, GroupElement::Torus(theta)) => lattice.iter().all(|row| {
                let s: f64 = row.iter().zip(theta).map(|(&w, t)| w as f64 * t).sum::<f64>()
                    / (2.0 * PI);
                (s - s.round()).abs() <= 1e-9
            }),
            _ => false,
        }
    }

    pub fn intersect(&self, a: &Subgroup, b: &Subgroup) -> Subgroup {
        match (a, b) {
            (Subgroup::Finite { mask: x }, Subgroup::Finite { mask: y }) => {
                Subgroup::Finite { mask: x & y }
            }
            (Subgroup::Torus { lattice: x }, Subgroup::Torus { lattice: y }) => {
                let rows: Vec<Vec<i64>> = x.iter().chain(y).cloned().collect();
                self.torus_subgroup(&rows)
            }
            _ => panic!("subgroups of different groups"),
        }
    }

    /// `a ⊆ b`.
    pub fn is_subgroup(&self, a: &Subgroup, b: &Subgroup) -> bool {
        match (a, b) {
            (Subgroup::Finite { mask: x }, Subgroup::Finite { mask: y }) => x & !y == 0,
            (Subgroup::Torus { lattice: x }, Subgroup::Torus { lattice: y }) => {
                sublattice(y, x, self.rank())
            }
            _ => false,
        }
    }

    /// Dimension of the subgroup as a Lie group.
    pub fn lie_dim(&self, h: &Subgroup) -> usize {
        match h {
            Subgroup::Finite { .. } => 0,
            Subgroup::Torus { lattice } => self.rank() - lattice.len(),
        }
    }

    /// Number of elements of a finite subgroup.
    pub fn order(&self, h: &Subgroup) -> Option<usize> {
        match h {
            Subgroup::Finite { mask } => Some(mask.count_ones() as usize),
            Subgroup::Torus { lattice } => {
                (lattice.len() == self.rank()).then(|| diagonalize(lattice, self.rank()).components() as usize)
            }
        }
    }

    /// Number of connected components.
    pub fn components(&self, h: &Subgroup) -> u64 {
        match h {
            Subgroup::Finite { mask } => u64::from(mask.count_ones()),
            Subgroup::Torus { lattice } => diagonalize(lattice, self.rank()).components(),
        }
    }

    /// Basis of the Lie algebra of `h` in angle coordinates (columns).
    pub fn lie_algebra(&self, h: &Subgroup) -> Matrix {
        match h {
            Subgroup::Finite { .. } => Matrix::zeros(0, 0),
            Subgroup::Torus { lattice } => {
                let k = self.rank();
                let d = diagonalize(lattice, k);
                let free = k - d.rank();
                Matrix::from_fn(k, free, |i, j| d.v[i][d.rank() + j] as f64)
            }
        }
    }

    fn torus_point(v: &IntMatrix, phi: &[f64]) -> GroupElement {
        let k = phi.len();
        GroupElement::Torus(
            (0..k)
                .map(|i| wrap_angle((0..k).map(|j| v[i][j] as f64 * phi[j]).sum()))
                .collect(),
        )
    }

    /// Quadrature nodes and weights for the normalized Haar measure on `h`.
    ///
    /// Exact for finite groups. On tori every component is sampled with
    /// [`TORUS_NODES`] trapezoid nodes per free circle.
    pub fn averaging_elements(&self, h: &Subgroup) -> Vec<(GroupElement, f64)> {
        match (self, h) {
            (CompactGroup::Finite(_), Subgroup::Finite { mask }) => {
                let w = 1.0 / mask.count_ones() as f64;
                members(*mask).map(|i| (GroupElement::Finite(i), w)).collect()
            }
            (CompactGroup::Torus { rank }, Subgroup::Torus { lattice }) => {
                let d = diagonalize(lattice, *rank);
                let counts: Vec<usize> = (0..*rank)
                    .map(|i| d.divisors.get(i).map_or(TORUS_NODES, |&di| di as usize))
                    .collect();
                let total: usize = counts.iter().product();
                let w = 1.0 / total as f64;
                let mut out = Vec::with_capacity(total);
                let mut idx = vec![0usize; *rank];
                for _ in 0..total {
                    let phi: Vec<f64> = idx
                        .iter()
                        .zip(&counts)
                        .map(|(&j, &c)| 2.0 * PI * j as f64 / c as f64)
                        .collect();
                    out.push((Self::torus_point(&d.v, &phi), w));
                    for (slot, &c) in idx.iter_mut().zip(&counts) {
                        *slot += 1;
                        if *slot < c {
                            break;
                        }
                        *slot = 0;
                    }
                }
                out
            }
            _ => panic!("subgroup does not belong to this group"),
        }
    }

    /// Elements whose joint invariants are those of `h`: a generating set for
    /// finite subgroups, generic elements of every circle factor and one
    /// element per cyclic factor for torus subgroups.
    pub fn test_elements(&self, h: &Subgroup) -> Vec<GroupElement> {
        match (self, h) {
            (CompactGroup::Finite(g), Subgroup::Finite { mask }) => g
                .subgroup_generators(*mask)
                .into_iter()
                .map(GroupElement::Finite)
                .collect(),
            (CompactGroup::Torus { rank }, Subgroup::Torus { lattice }) => {
                let d = diagonalize(lattice, *rank);
                let mut out = Vec::new();
                for i in 0..*rank {
                    let mut phi = vec![0.0; *rank];
                    match d.divisors.get(i) {
                        Some(&1) => continue,
                        Some(&di) => {
                            phi[i] = 2.0 * PI / di as f64;
                            out.push(Self::torus_point(&d.v, &phi));
                        }
                        None => {
                            for t in [1.0, 2f64.sqrt(), -2.5] {
                                phi[i] = t;
                                out.push(Self::torus_point(&d.v, &phi));
                            }
                        }
                    }
                }
                out
            }
            _ => panic!("subgroup does not belong to this group"),
        }
    }

    /// Elements of `outer` outside `inner`: all of them for finite groups, the
    /// quadrature nodes of `outer` for tori.
    pub fn elements_outside(&self, outer: &Subgroup, inner: &Subgroup) -> Vec<GroupElement> {
        self.averaging_elements(outer)
            .into_iter()
            .map(|(g, _)| g)
            .filter(|g| !self.contains(inner, g))
            .collect()
    }
}
