//! Compact group actions: finite groups and tori acting linearly.
//!
//! Haar averaging, invariant complements, stabilizers, orbit types, linear
//! slices and equivariant normal forms.

mod equivariant;
mod group;
pub mod lattice;
mod orbit;
mod rep;
mod slice;

pub use equivariant::{
    equivariant_normal_form, equivariant_normal_form_fixed_point, EquivariantNormalForm,
    EquivariantNormalFormData, EquivariantSettings,
};
pub use group::{
    generate_matrix_group, members, wrap_angle, CompactGroup, FiniteGroup, GroupElement,
    Subgroup, MAX_FINITE_ORDER, TORUS_NODES,
};
pub use orbit::{
    orbit_type_leq, orbit_type_of, stabilizer_of, OrbitType, Stabilizer, SubgroupClass,
    SubgroupLattice,
};
pub use rep::{haar_average_matrix, invariant_complement, GroupAction, LinearRep, RepKind};
pub use slice::{linear_slice, Slice};

use thiserror::Error;

use crate::linear_core::LinearError;
use crate::normal_form::NormalFormError;

#[derive(Debug, Error)]
pub enum SymmetryError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid group: {0}")]
    InvalidGroup(String),
    #[error("finite groups are limited to {limit} elements")]
    GroupTooLarge { limit: usize },
    #[error("matrices do not form a representation (residual {residual:.3e})")]
    NotARepresentation { residual: f64 },
    #[error("input subspace is not invariant (residual {residual:.3e})")]
    NotInvariantInput { residual: f64 },
    #[error("base point is not fixed by the group (residual {residual:.3e})")]
    NotFixedPoint { residual: f64 },
    #[error("equivariance violated at {sample:?} (residual {residual:.3e})")]
    EquivarianceViolation { sample: Vec<f64>, residual: f64 },
    #[error("normal form pieces are not invariant (residual {residual:.3e})")]
    SubspaceNotInvariant { residual: f64 },
    #[error("no slice radius above {min_radius:.3e} separates the sampled orbit")]
    RadiusNotFound { min_radius: f64 },
    #[error(transparent)]
    NormalForm(#[from] NormalFormError),
    #[error(transparent)]
    Linear(#[from] LinearError),
}
