//! Stabilizers, subgroup lattices and orbit types.

use std::collections::BTreeSet;

use serde::Serialize;

use super::group::{members, CompactGroup, FiniteGroup, Subgroup};
use super::lattice::{hermite_normal_form, IntMatrix};
use super::rep::LinearRep;
use crate::linear_core::Vector;

/// A conjugacy class of subgroups.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgroupClass {
    pub order: usize,
    /// Member subgroups as element masks, sorted.
    pub members: Vec<u64>,
}

impl SubgroupClass {
    pub fn representative(&self) -> u64 {
        self.members[0]
    }
}

/// All subgroups of a finite group up to conjugacy, with the partial order
/// `(H) ≤ (K)` meaning some conjugate of `H` lies in `K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgroupLattice {
    pub classes: Vec<SubgroupClass>,
    /// `leq[i][j]` is `(class i) ≤ (class j)`.
    pub leq: Vec<Vec<bool>>,
}

impl SubgroupLattice {
    /// Enumerates subgroups of `ambient` as joins of cyclic subgroups.
    pub fn new(group: &FiniteGroup, ambient: u64) -> Self {
        let mut subs: BTreeSet<u64> = BTreeSet::new();
        subs.insert(1 << group.identity());
        for g in members(ambient) {
            subs.insert(group.closure(1 << g));
        }
        let cyclic: Vec<u64> = subs.iter().copied().collect();
        let mut frontier = cyclic.clone();
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for &a in &frontier {
                for &c in &cyclic {
                    let j = group.closure(a | c);
                    if subs.insert(j) {
                        next.push(j);
                    }
                }
            }
            frontier = next;
        }
        let ambient_elems: Vec<usize> = members(ambient).collect();
        let mut seen: BTreeSet<u64> = BTreeSet::new();
        let mut classes = Vec::new();
        for &h in &subs {
            if seen.contains(&h) {
                continue;
            }
            let conj: BTreeSet<u64> = ambient_elems.iter().map(|&g| group.conjugate(h, g)).collect();
            seen.extend(conj.iter().copied());
            classes.push(SubgroupClass {
                order: h.count_ones() as usize,
                members: conj.into_iter().collect(),
            });
        }
        classes.sort_by_key(|c| (c.order, c.members[0]));
        let leq = classes
            .iter()
            .map(|a| {
                classes
                    .iter()
                    .map(|b| {
                        let k = b.representative();
                        a.members.iter().any(|&h| h & !k == 0)
                    })
                    .collect()
            })
            .collect();
        Self { classes, leq }
    }

    pub fn class_of(&self, mask: u64) -> Option<usize> {
        self.classes.iter().position(|c| c.members.contains(&mask))
    }
}

/// The stabilizer of a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stabilizer {
    pub subgroup: Subgroup,
    /// Dimension as a Lie group.
    pub lie_dim: usize,
    /// Number of elements, when finite.
    pub order: Option<usize>,
    pub components: u64,
    /// Element labels (finite groups only).
    pub elements: Vec<String>,
    pub orbit_type: OrbitType,
}

/// Conjugacy class of a stabilizer.
///
/// Finite groups use the class index in the [`SubgroupLattice`] of the
/// acting subgroup. Tori are abelian, so the Hermite form of the lattice is
/// already a class key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind")]
pub enum OrbitType {
    Finite { class_id: usize, order: usize },
    Torus { lattice: IntMatrix },
}

impl std::fmt::Display for OrbitType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OrbitType::Finite { class_id, order } => write!(f, "C{class_id}(|H|={order})"),
            OrbitType::Torus { lattice } => write!(f, "ann{lattice:?}"),
        }
    }
}

fn scaled_tol(tol: f64, x: &Vector) -> f64 {
    tol * x.norm().max(1.0)
}

/// The subgroup of [`LinearRep::over`] fixing `x` up to `tol · max(1, ‖x‖)`.
pub fn stabilizer_of(rep: &LinearRep, x: &Vector, tol: f64) -> Stabilizer {
    let group = rep.group();
    let eps = scaled_tol(tol, x);
    let subgroup = match (group.as_ref(), rep.over()) {
        (CompactGroup::Finite(_), Subgroup::Finite { mask }) => {
            let mut fixed = 0u64;
            for i in members(*mask) {
                let g = super::group::GroupElement::Finite(i);
                if (rep.act(&g, x) - x).norm() <= eps {
                    fixed |= 1 << i;
                }
            }
            Subgroup::Finite { mask: fixed }
        }
        (CompactGroup::Torus { rank }, Subgroup::Torus { lattice }) => {
            let (weights, translations, embed) = rep.torus_data().expect("torus representation");
            let full = match embed {
                Some(e) => e * x,
                None => x.clone(),
            };
            let mut rows: Vec<Vec<i64>> = lattice.clone();
            for (b, w) in weights.iter().enumerate() {
                let block = (full[2 * b].powi(2) + full[2 * b + 1].powi(2)).sqrt();
                if block > eps {
                    rows.push(w.clone());
                }
            }
            if let Some(s) = translations {
                rows.extend(s.iter().cloned());
            }
            Subgroup::Torus {
                lattice: hermite_normal_form(&rows, *rank),
            }
        }
        _ => unreachable!("representation subgroup matches its group"),
    };
    describe(rep, subgroup)
}

fn describe(rep: &LinearRep, subgroup: Subgroup) -> Stabilizer {
    let group = rep.group();
    let elements = match (group.as_ref(), &subgroup) {
        (CompactGroup::Finite(g), Subgroup::Finite { mask }) => {
            members(*mask).map(|i| g.labels()[i].clone()).collect()
        }
        _ => Vec::new(),
    };
    let orbit_type = orbit_type_of_subgroup(rep, &subgroup);
    Stabilizer {
        lie_dim: group.lie_dim(&subgroup),
        order: group.order(&subgroup),
        components: group.components(&subgroup),
        elements,
        orbit_type,
        subgroup,
    }
}

fn orbit_type_of_subgroup(rep: &LinearRep, h: &Subgroup) -> OrbitType {
    match h {
        Subgroup::Finite { mask } => {
            let lattice = rep.subgroup_lattice().expect("finite representation");
            OrbitType::Finite {
                class_id: lattice.class_of(*mask).expect("stabilizers are subgroups"),
                order: mask.count_ones() as usize,
            }
        }
        Subgroup::Torus { lattice } => OrbitType::Torus {
            lattice: lattice.clone(),
        },
    }
}

/// The orbit type of `x`: the conjugacy class of its stabilizer.
pub fn orbit_type_of(rep: &LinearRep, x: &Vector, tol: f64) -> OrbitType {
    stabilizer_of(rep, x, tol).orbit_type
}

/// `(a) ≤ (b)`: some conjugate of `a` is contained in `b`.
pub fn orbit_type_leq(rep: &LinearRep, a: &OrbitType, b: &OrbitType) -> bool {
    match (a, b) {
        (OrbitType::Finite { class_id: i, .. }, OrbitType::Finite { class_id: j, .. }) => rep
            .subgroup_lattice()
            .is_some_and(|l| l.leq[*i][*j]),
        (OrbitType::Torus { lattice: x }, OrbitType::Torus { lattice: y }) => rep.group().is_subgroup(
            &Subgroup::Torus { lattice: x.clone() },
            &Subgroup::Torus { lattice: y.clone() },
        ),
        _ => false,
    }
}
