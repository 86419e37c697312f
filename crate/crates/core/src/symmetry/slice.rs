//! Linear slices through orbits.

use serde::Serialize;

use super::group::GroupElement;
use super::orbit::{stabilizer_of, Stabilizer};
use super::rep::{invariant_complement, LinearRep};
use super::SymmetryError;
use crate::linear_core::{Subspace, Vector};
use crate::sampling::ball_samples;

/// Separation below which a moved slice point counts as touching the slice.
pub const SEPARATION_TOL: f64 = 1e-6;
/// Group elements sampled for the separation test.
const MAX_OUTSIDE_ELEMENTS: usize = 256;
const SLICE_SAMPLES: usize = 16;
const MAX_SHRINKS: usize = 10;

/// `S = m + (N ∩ B_radius)` with `N` a stabilizer-invariant complement of the
/// orbit tangent space.
#[derive(Debug, Clone, Serialize)]
pub struct Slice {
    pub point: Vec<f64>,
    #[serde(skip)]
    pub normal: Subspace,
    #[serde(skip)]
    pub tangent: Subspace,
    pub stabilizer: Stabilizer,
    pub radius: f64,
    /// `max ‖ρ(h)N − N‖` over stabilizer test elements.
    pub invariance_residual: f64,
    /// Smallest distance from a moved sample to the slice, over sampled group
    /// elements outside the stabilizer. Infinite if none were sampled.
    pub min_separation: f64,
    pub separation_samples: usize,
}

impl Slice {
    pub fn dim(&self) -> usize {
        self.normal.dim()
    }

    /// `m + N t`.
    pub fn embed(&self, t: &Vector) -> Vector {
        Vector::from_column_slice(&self.point) + self.normal.basis() * t
    }

    /// Distance from `y` to the slice disk.
    pub fn distance(&self, y: &Vector) -> f64 {
        let d = y - Vector::from_column_slice(&self.point);
        let mut c = self.normal.basis().transpose() * &d;
        let norm = c.norm();
        if norm > self.radius {
            c *= self.radius / norm;
        }
        (d - self.normal.basis() * c).norm()
    }
}

fn subspace_shift(rep: &LinearRep, space: &Subspace, g: &GroupElement) -> f64 {
    let moved = rep.linear(g) * space.basis();
    let r = &moved - space.projector() * &moved;
    if r.is_empty() {
        0.0
    } else {
        r.amax()
    }
}

/// Builds a linear slice at `m` for the action `rep`, shrinking `radius`
/// by halves until sampled group elements outside the stabilizer move every
/// sampled slice point off the slice.
///
/// The separation test is only sampled; it is not a proof that distinct
/// slice points lie on distinct orbits.
pub fn linear_slice(rep: &LinearRep, m: &Vector, radius: f64) -> Result<Slice, SymmetryError> {
    let n = rep.dim();
    if m.len() != n {
        return Err(SymmetryError::DimensionMismatch(format!(
            "point has {} coordinates, representation acts on R^{n}",
            m.len()
        )));
    }
    let stabilizer = stabilizer_of(rep, m, 1e-9);
    let tangent_vectors = rep.orbit_tangent(m);
    let tangent = if tangent_vectors.ncols() == 0 || tangent_vectors.amax() == 0.0 {
        Subspace::zero(n)
    } else {
        Subspace::from_spanning(&tangent_vectors, 1e-10)
    };
    let stab_rep = rep.restrict(&stabilizer.subgroup)?.linearized();
    let normal = invariant_complement(&tangent, &stab_rep)?;
    let invariance_residual = stab_rep
        .test_elements()
        .iter()
        .map(|h| subspace_shift(&stab_rep, &normal, h))
        .fold(0.0, f64::max);

    let group = rep.group();
    let mut outside = group.elements_outside(rep.over(), &stabilizer.subgroup);
    if outside.len() > MAX_OUTSIDE_ELEMENTS {
        let stride = outside.len().div_ceil(MAX_OUTSIDE_ELEMENTS);
        outside = outside.into_iter().step_by(stride).collect();
    }

    let mut slice = Slice {
        point: m.iter().copied().collect(),
        normal,
        tangent,
        stabilizer,
        radius,
        invariance_residual,
        min_separation: f64::INFINITY,
        separation_samples: 0,
    };
    for _ in 0..=MAX_SHRINKS {
        let mut pts: Vec<Vector> = vec![Vector::zeros(slice.dim())];
        pts.extend(ball_samples(slice.dim(), slice.radius, SLICE_SAMPLES, 7));
        let mut min_sep = f64::INFINITY;
        for t in &pts {
            let s = slice.embed(t);
            for g in &outside {
                min_sep = min_sep.min(slice.distance(&rep.act(g, &s)));
            }
        }
        slice.min_separation = min_sep;
        slice.separation_samples = pts.len() * outside.len();
        if min_sep > SEPARATION_TOL {
            return Ok(slice);
        }
        slice.radius *= 0.5;
    }
    Err(SymmetryError::RadiusNotFound {
        min_radius: slice.radius * 2.0,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::super::group::{generate_matrix_group, CompactGroup};
    use super::*;
    use crate::linear_core::Matrix;

    #[test]
    fn trivial_group_gives_full_ball() {
        let g = Arc::new(CompactGroup::trivial());
        let r = LinearRep::trivial(g, 3);
        let s = linear_slice(&r, &Vector::from_vec(vec![1.0, 2.0, 3.0]), 0.5).unwrap();
        assert_eq!(s.dim(), 3);
        assert_eq!(s.radius, 0.5);
    }

    #[test]
    fn sign_action_separates_the_two_points() {
        let (g, dom, _) =
            generate_matrix_group(&[(Matrix::from_element(1, 1, -1.0), Matrix::identity(1, 1))])
                .unwrap();
        let r = LinearRep::finite(Arc::new(CompactGroup::Finite(g)), dom).unwrap();
        let s = linear_slice(&r, &Vector::from_element(1, 1.0), 2.0).unwrap();
        assert_eq!(s.dim(), 1);
        assert!(s.radius <= 1.0);
        assert_eq!(s.stabilizer.order, Some(1));
    }

    #[test]
    fn circle_slice_is_radial() {
        let g = Arc::new(CompactGroup::torus(1).unwrap());
        let r = LinearRep::torus(g, vec![vec![1]], 0, None).unwrap();
        let s = linear_slice(&r, &Vector::from_vec(vec![1.0, 0.0]), 0.5).unwrap();
        assert_eq!(s.dim(), 1);
        assert!(s.normal.basis()[(1, 0)].abs() <= 1e-12);
        assert!((s.tangent.basis()[(1, 0)].abs() - 1.0).abs() <= 1e-12);
        assert!(s.min_separation > SEPARATION_TOL);
        assert!(s.invariance_residual <= 1e-12);
    }

    #[test]
    fn gauge_translation_slice() {
        let g = Arc::new(CompactGroup::torus(2).unwrap());
        let r = LinearRep::torus(g, vec![], 2, Some(vec![vec![-1, 1], vec![-1, 1]])).unwrap();
        let s = linear_slice(&r, &Vector::zeros(2), 0.5).unwrap();
        assert_eq!(s.dim(), 1);
        assert!((s.normal.basis()[(0, 0)] + s.normal.basis()[(1, 0)]).abs() <= 1e-12);
        assert_eq!(s.stabilizer.lie_dim, 1);
    }
}
