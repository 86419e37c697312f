//! Uniform regularity of parameter families of matrices.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::blocks::invertibility;
use super::{
    factorize_regular, fredholm_index, CheckTolerances, LinearError, LinearNormalForm, Matrix,
    Subspace, Svd,
};

pub type SampleFn = Arc<dyn Fn(&[f64]) -> Matrix + Send + Sync>;

/// A family `p ↦ T_p` on the box `[-half_width, half_width]^parameter_dim`,
/// together with the normal form of `T_0`.
#[derive(Clone)]
pub struct OperatorFamily {
    pub parameter_dim: usize,
    pub half_width: f64,
    sample_fn: SampleFn,
    pub base: LinearNormalForm,
}

impl fmt::Debug for OperatorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorFamily")
            .field("parameter_dim", &self.parameter_dim)
            .field("half_width", &self.half_width)
            .field("base_rank", &self.base.rank())
            .finish()
    }
}

impl OperatorFamily {
    /// Factorizes `T_0` and stores it as the base decomposition.
    pub fn new(
        parameter_dim: usize,
        half_width: f64,
        sample_fn: SampleFn,
        rank_tol: f64,
    ) -> Result<Self, LinearError> {
        let t0 = sample_fn(&vec![0.0; parameter_dim]);
        let base = factorize_regular(&t0, rank_tol)
            .map_err(|e| LinearError::BaseNotRegular(e.to_string()))?;
        Ok(Self {
            parameter_dim,
            half_width,
            sample_fn,
            base,
        })
    }

    pub fn sample(&self, p: &[f64]) -> Matrix {
        (self.sample_fn)(p)
    }

    pub(crate) fn check_samples(&self, samples: &[Vec<f64>]) -> Result<(), LinearError> {
        for (k, p) in samples.iter().enumerate() {
            if p.len() != self.parameter_dim {
                return Err(LinearError::DimensionMismatch(format!(
                    "sample {k} has {} coordinates, expected {}",
                    p.len(),
                    self.parameter_dim
                )));
            }
            if p.iter().any(|x| !x.is_finite() || x.abs() > self.half_width * (1.0 + 1e-12)) {
                return Err(LinearError::ParameterOutOfBox { sample: k });
            }
        }
        Ok(())
    }

    /// `T̃_p = pr_{img T_0} ∘ T_p|_{coimg T_0}` in the base bases.
    pub fn compressed(&self, t: &Matrix) -> Matrix {
        self.base.image.basis().transpose() * t * self.base.coimage.basis()
    }

    pub(crate) fn compressed_invertible(&self, t: &Matrix, tol: f64) -> bool {
        invertibility(&self.compressed(t), tol).0
    }
}

/// Diagnostics for a single parameter sample.
#[derive(Debug, Clone, Serialize)]
pub struct SampleVerdict {
    /// `T̃_p` is invertible.
    pub regular: bool,
    /// `‖T̃_p⁻¹‖` when invertible.
    pub inverse_norm: Option<f64>,
    /// `ker T_p ⊆ ker T_0`.
    pub kernel_semicontinuous: bool,
    /// `img T_p ⊇ img T_0`.
    pub image_semicontinuous: bool,
    pub kernel_dim: usize,
    pub image_dim: usize,
    pub index: i64,
}

/// Sampled certificate of uniform regularity.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub samples: Vec<Vec<f64>>,
    pub verdicts: Vec<SampleVerdict>,
    /// Condition number of `T̃_p`, absent where it is singular.
    pub condition_numbers: Vec<Option<f64>>,
    pub tolerances: CheckTolerances,
    /// Every sample is regular. Semicontinuity does not enter.
    pub certified: bool,
}

impl Certificate {
    pub fn semicontinuity_violations(&self) -> Vec<usize> {
        self.verdicts
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.kernel_semicontinuous || !v.image_semicontinuous)
            .map(|(k, _)| k)
            .collect()
    }
}

fn contained(inner: &Subspace, outer: &Subspace, tol: f64) -> bool {
    (0..inner.dim()).all(|j| outer.residual_of(&inner.basis().column(j).into_owned()) <= tol)
}

/// Checks `T̃_p` invertibility at each sample and records semicontinuity diagnostics.
pub fn certify_uniform_regularity(
    family: &OperatorFamily,
    samples: &[Vec<f64>],
    tol: CheckTolerances,
) -> Result<Certificate, LinearError> {
    family.check_samples(samples)?;
    let subspace_tol = tol.residual.sqrt();
    let results: Vec<Result<(SampleVerdict, Option<f64>), LinearError>> = samples
        .par_iter()
        .map(|p| {
            let t = family.sample(p);
            let tilde = family.compressed(&t);
            let (regular, cond) = invertibility(&tilde, tol.rank);
            let inverse_norm = if regular {
                let s = Svd::new(&tilde);
                Some(if s.singular_values.is_empty() { 0.0 } else { 1.0 / s.min() })
            } else {
                None
            };
            let nf = factorize_regular(&t, tol.rank)?;
            let verdict = SampleVerdict {
                regular,
                inverse_norm,
                kernel_semicontinuous: contained(&nf.kernel, &family.base.kernel, subspace_tol),
                image_semicontinuous: contained(&family.base.image, &nf.image, subspace_tol),
                kernel_dim: nf.kernel.dim(),
                image_dim: nf.rank(),
                index: fredholm_index(&t, tol.rank)?,
            };
            Ok((verdict, cond))
        })
        .collect();
    let mut verdicts = Vec::with_capacity(samples.len());
    let mut condition_numbers = Vec::with_capacity(samples.len());
    for r in results {
        let (v, c) = r?;
        verdicts.push(v);
        condition_numbers.push(c);
    }
    let certified = verdicts.iter().all(|v| v.regular);
    Ok(Certificate {
        samples: samples.to_vec(),
        verdicts,
        condition_numbers,
        tolerances: tol,
        certified,
    })
}
