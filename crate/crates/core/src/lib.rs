//! Local normal forms of smooth maps between finite-dimensional spaces.
//!
//! The crate is organised bottom-up:
//!
//! * [`linear_core`] factorizes matrices into kernel/coimage/image/cokernel
//!   pieces, inverts block operators through Schur complements and certifies
//!   uniform regularity of operator families and chain complexes.
//! * [`calculus`] provides differentiable maps (with an expression language
//!   and forward-mode derivatives), finite-difference Jacobians and Newton
//!   solvers used to realize local inverses.
//! * [`normal_form`] deforms coordinate charts until a map splits into an
//!   invertible linear core plus a singular part, and runs Lyapunov-Schmidt
//!   reduction.
//! * [`symmetry`] handles finite groups and tori acting linearly: Haar
//!   averaging, invariant complements, stabilizers, orbit types, slices and
//!   equivariant normal forms.
//! * [`moduli`] assembles Kuranishi charts, deformation complexes, zero-set
//!   exploration and orbit-type stratification reports.

// NaN must fail tolerance checks, so `!(x <= tol)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod calculus;
pub mod linear_core;
pub mod moduli;
pub mod normal_form;
pub mod sampling;
pub mod symmetry;

pub use calculus::{
    jacobian_fd, newton_invert, parametrized_newton, parse_expression_map, CalculusError,
    DifferentiableMap, DomainBox, ExprMap, FnMap, LinearMap, LocalDiffeo, NewtonSettings,
    SharedMap,
};
pub use linear_core::{
    factorize_regular, fredholm_index, LinearError, LinearNormalForm, Matrix, Subspace, Vector,
};
pub use moduli::{
    deformation_complex, explore_zero_set, kuranishi_chart, stratify, virtual_dimension,
    DeformationComplex, KuranishiChart, KuranishiSettings, ModuliError, StratificationReport,
};
pub use normal_form::{
    classify_point, lyapunov_schmidt, normal_form_at, relative_normal_form, NormalFormData,
    NormalFormError, NormalFormSettings, PointClassification, ReducedProblem,
};
pub use symmetry::{
    equivariant_normal_form, equivariant_normal_form_fixed_point, haar_average_matrix,
    invariant_complement, linear_slice, orbit_type_of, stabilizer_of, CompactGroup,
    GroupAction, GroupElement, LinearRep, Stabilizer, Subgroup, SymmetryError,
};
