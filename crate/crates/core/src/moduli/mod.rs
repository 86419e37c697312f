//! Kuranishi charts, deformation complexes and zero-set stratification.

pub mod gauge;
mod explore;
mod kuranishi;
mod stratify;

use thiserror::Error;

use crate::calculus::CalculusError;
use crate::linear_core::LinearError;
use crate::normal_form::NormalFormError;
use crate::symmetry::SymmetryError;

pub use explore::{explore_zero_set, ExploreSettings, ZeroSet, MAX_EXPLORE_DIM};
pub use gauge::DiscreteComplex;
pub use kuranishi::{
    deformation_complex, kuranishi_chart, virtual_dimension, Correspondence, DeformationComplex,
    KuranishiChart, KuranishiSettings,
};
pub use stratify::{
    stratify, stratify_points, ApproximationCheck, ApproximationVerdict, FrontierVerdict,
    StratificationReport, StratifySettings, Stratum,
};

#[derive(Debug, Error)]
pub enum ModuliError {
    #[error("obstruction check `{check}` failed (residual {residual:.3e})")]
    ObstructionCheck { check: String, residual: f64 },
    #[error("slice solution {sample:?} does not correspond to a zero of the obstruction (residual {residual:.3e})")]
    CorrespondenceFailure { sample: Vec<f64>, residual: f64 },
    #[error("grid of {nodes} nodes in dimension {dim} is too large")]
    GridTooLarge { dim: usize, nodes: usize },
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error(transparent)]
    NormalForm(#[from] NormalFormError),
    #[error(transparent)]
    Calculus(#[from] CalculusError),
    #[error(transparent)]
    Linear(#[from] LinearError),
}
