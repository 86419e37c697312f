//! Block operators: Schur-complement inversion, the projection case and the
//! extended-operator test for operator families.

use rayon::prelude::*;
use serde::Serialize;

use super::{
    ensure_finite, fredholm_index, sigma_min, spectral_norm, to_rows, CheckTolerances,
    LinearError, Matrix, OperatorFamily, Svd,
};

/// A matrix with a 2×2 block partition.
///
/// `A11` occupies rows `0..row_split` and columns `0..col_split`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    pub matrix: Matrix,
    pub row_split: usize,
    pub col_split: usize,
}

impl BlockMatrix {
    pub fn new(matrix: Matrix, row_split: usize, col_split: usize) -> Result<Self, LinearError> {
        if row_split > matrix.nrows() || col_split > matrix.ncols() {
            return Err(LinearError::DimensionMismatch(format!(
                "split ({row_split}, {col_split}) outside a {}x{} matrix",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        ensure_finite(&matrix)?;
        Ok(Self {
            matrix,
            row_split,
            col_split,
        })
    }

    /// Assembles `[[a11, a12], [a21, a22]]`.
    pub fn from_blocks(
        a11: &Matrix,
        a12: &Matrix,
        a21: &Matrix,
        a22: &Matrix,
    ) -> Result<Self, LinearError> {
        let (r1, c1) = a11.shape();
        let (r2, c2) = a22.shape();
        if a12.shape() != (r1, c2) || a21.shape() != (r2, c1) {
            return Err(LinearError::DimensionMismatch(
                "off-diagonal blocks do not fit the diagonal blocks".to_string(),
            ));
        }
        let mut m = Matrix::zeros(r1 + r2, c1 + c2);
        m.view_mut((0, 0), (r1, c1)).copy_from(a11);
        m.view_mut((0, c1), (r1, c2)).copy_from(a12);
        m.view_mut((r1, 0), (r2, c1)).copy_from(a21);
        m.view_mut((r1, c1), (r2, c2)).copy_from(a22);
        Self::new(m, r1, c1)
    }

    pub fn block(&self, i: usize, j: usize) -> Matrix {
        let (m, n) = self.matrix.shape();
        let (r0, nr) = if i == 0 {
            (0, self.row_split)
        } else {
            (self.row_split, m - self.row_split)
        };
        let (c0, nc) = if j == 0 {
            (0, self.col_split)
        } else {
            (self.col_split, n - self.col_split)
        };
        self.matrix.view((r0, c0), (nr, nc)).into_owned()
    }

    /// The inverse with the transposed partition, or `None` if singular.
    pub fn inverse(&self, tol: f64) -> Option<BlockMatrix> {
        let (m, n) = self.matrix.shape();
        if m != n {
            return None;
        }
        let svd = Svd::new(&self.matrix);
        if m > 0 && svd.min() <= tol * svd.max() {
            return None;
        }
        let inv = self.matrix.clone().try_inverse()?;
        Some(BlockMatrix {
            matrix: inv,
            row_split: self.col_split,
            col_split: self.row_split,
        })
    }
}

/// `B11 − B12 B22⁻¹ B21`, the inverse of `A11` when `B` is the inverse of `A`.
///
/// Fails with [`LinearError::SingularBlock`] when `σ_min(B22) ≤ tol · ‖B‖`.
pub fn block_inverse_schur(b: &BlockMatrix, tol: f64) -> Result<Matrix, LinearError> {
    let b22 = b.block(1, 1);
    let scale = spectral_norm(&b.matrix).max(f64::MIN_POSITIVE);
    let smin = sigma_min(&b22);
    if b22.nrows() != b22.ncols() || smin <= tol * scale {
        return Err(LinearError::SingularBlock {
            sigma_min: if smin.is_finite() { smin } else { 0.0 },
        });
    }
    let b22_inv = b22.try_inverse().ok_or(LinearError::SingularBlock { sigma_min: smin })?;
    Ok(b.block(0, 0) - b.block(0, 1) * b22_inv * b.block(1, 0))
}

/// Outcome of the projection-case identities for `A11 B11` and `B11 A11`.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectionCertificate {
    /// `‖B22‖ ≤ tol`.
    pub precondition_met: bool,
    pub b22_norm: f64,
    pub ab_idempotent_residual: f64,
    pub ba_idempotent_residual: f64,
    pub ab_idempotent: bool,
    pub ba_idempotent: bool,
    /// `img(A11 B11) = img A11`.
    pub image_matches: bool,
    /// `ker(B11 A11) = ker A11`.
    pub kernel_matches: bool,
    pub passed: bool,
}

fn same_column_space(x: &Matrix, y: &Matrix, tol: f64) -> bool {
    let rx = Svd::new(x).rank(tol);
    let ry = Svd::new(y).rank(tol);
    if rx != ry {
        return false;
    }
    let mut joint = Matrix::zeros(x.nrows(), x.ncols() + y.ncols());
    joint.view_mut((0, 0), x.shape()).copy_from(x);
    joint.view_mut((0, x.ncols()), y.shape()).copy_from(y);
    let scale = spectral_norm(x).max(spectral_norm(y));
    if scale == 0.0 {
        return true;
    }
    let s = Svd::new(&joint);
    s.singular_values.iter().filter(|&&v| v > tol * scale).count() == rx
}

/// Checks the projection-case identities for `A` whose inverse has `B22 = 0`.
///
/// Errors only if `A` itself is not invertible.
pub fn projection_case_check(
    a: &BlockMatrix,
    tol: CheckTolerances,
) -> Result<ProjectionCertificate, LinearError> {
    let b = a.inverse(tol.rank).ok_or_else(|| LinearError::SingularBlock {
        sigma_min: sigma_min(&a.matrix),
    })?;
    let scale = spectral_norm(&a.matrix).max(spectral_norm(&b.matrix)).max(1.0);
    let b22_norm = spectral_norm(&b.block(1, 1));
    let precondition_met = b22_norm <= tol.residual * scale;

    let a11 = a.block(0, 0);
    let b11 = b.block(0, 0);
    let ab = &a11 * &b11;
    let ba = &b11 * &a11;
    let res = |p: &Matrix| if p.is_empty() { 0.0 } else { (p * p - p).amax() };
    let ab_res = res(&ab);
    let ba_res = res(&ba);
    let thr = tol.residual * scale * scale;
    let image_matches = same_column_space(&ab, &a11, tol.rank);
    let kernel_matches =
        same_column_space(&ba.transpose(), &a11.transpose(), tol.rank);
    let ab_idempotent = ab_res <= thr;
    let ba_idempotent = ba_res <= thr;
    Ok(ProjectionCertificate {
        precondition_met,
        b22_norm,
        ab_idempotent_residual: ab_res,
        ba_idempotent_residual: ba_res,
        ab_idempotent,
        ba_idempotent,
        image_matches,
        kernel_matches,
        passed: precondition_met && ab_idempotent && ba_idempotent && image_matches && kernel_matches,
    })
}

/// Per-sample outcome of the extended-operator test.
#[derive(Debug, Clone, Serialize)]
pub struct ExtendedCertificate {
    pub samples: Vec<Vec<f64>>,
    /// Whether `Γ_p` is invertible at each sample.
    pub gamma_invertible: Vec<bool>,
    pub gamma_condition_numbers: Vec<Option<f64>>,
    /// Whether `Γ_p` invertibility agrees with invertibility of the compressed operator.
    pub consistent_with_regularity: Vec<bool>,
    /// `‖S⁻⁺_0‖`.
    pub s_minus_plus_base_norm: f64,
    /// `Γ_0` in row-major layout.
    pub gamma_base: Vec<Vec<f64>>,
    /// `ind T_p = dim Z⁻ − dim Z⁺` at every sample where `Γ_p` is invertible.
    pub index_consistent: bool,
    pub tolerances: CheckTolerances,
    pub certified: bool,
}

struct ExtendedBlocks {
    s: Matrix,
    s_minus: Matrix,
    s_plus: Matrix,
    s_minus_plus: Matrix,
}

fn extended_inverse(
    t: &Matrix,
    t_plus: &Matrix,
    t_minus: &Matrix,
    tol: f64,
) -> Option<ExtendedBlocks> {
    let zp = t_plus.ncols();
    let zm = t_minus.nrows();
    let ext = BlockMatrix::from_blocks(t, t_plus, t_minus, &Matrix::zeros(zm, zp)).ok()?;
    let inv = ext.inverse(tol)?;
    Some(ExtendedBlocks {
        s: inv.block(0, 0),
        s_minus: inv.block(0, 1),
        s_plus: inv.block(1, 0),
        s_minus_plus: inv.block(1, 1),
    })
}

fn gamma(blocks: &ExtendedBlocks, kernel: &Matrix, cokernel: &Matrix) -> Matrix {
    let g11 = kernel.transpose() * &blocks.s * cokernel;
    let g12 = kernel.transpose() * &blocks.s_minus;
    let g21 = &blocks.s_plus * cokernel;
    BlockMatrix::from_blocks(&g11, &g12, &g21, &blocks.s_minus_plus)
        .expect("Γ blocks are conformal by construction")
        .matrix
}

/// Inverts `[[T_p, T⁺], [T⁻, 0]]` at each sample and checks the `Γ_p` blocks.
///
/// `t_plus` maps `Z⁺` into the target (`m × dim Z⁺`), `t_minus` maps the domain
/// onto `Z⁻` (`dim Z⁻ × n`).
pub fn extended_operator_test(
    family: &OperatorFamily,
    t_plus: &Matrix,
    t_minus: &Matrix,
    samples: &[Vec<f64>],
    tol: CheckTolerances,
) -> Result<ExtendedCertificate, LinearError> {
    let base = &family.base;
    let (m, n) = (base.target_dim(), base.domain_dim());
    if t_plus.nrows() != m || t_minus.ncols() != n {
        return Err(LinearError::DimensionMismatch(
            "T⁺ must map into the target and T⁻ must start at the domain".to_string(),
        ));
    }
    if m + t_minus.nrows() != n + t_plus.ncols() {
        return Err(LinearError::DimensionMismatch(
            "extended operator is not square".to_string(),
        ));
    }
    family.check_samples(samples)?;
    let kernel = base.kernel.basis();
    let cokernel = base.cokernel.basis();

    let t0 = family.sample(&vec![0.0; family.parameter_dim]);
    let base_blocks =
        extended_inverse(&t0, t_plus, t_minus, tol.rank).ok_or(LinearError::ExtendedSingular {
            sample: usize::MAX,
        })?;
    let s_minus_plus_base_norm = spectral_norm(&base_blocks.s_minus_plus);
    let gamma_base = gamma(&base_blocks, kernel, cokernel);

    let per_sample: Vec<Result<(bool, Option<f64>, bool, bool), LinearError>> = samples
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            let t = family.sample(p);
            let blocks = extended_inverse(&t, t_plus, t_minus, tol.rank)
                .ok_or(LinearError::ExtendedSingular { sample: k })?;
            let g = gamma(&blocks, kernel, cokernel);
            let (inv, cond) = invertibility(&g, tol.rank);
            let regular = family.compressed_invertible(&t, tol.rank);
            let index_ok = !inv
                || fredholm_index(&t, tol.rank)?
                    == t_minus.nrows() as i64 - t_plus.ncols() as i64;
            Ok((inv, cond, inv == regular, index_ok))
        })
        .collect();

    let mut gamma_invertible = Vec::with_capacity(samples.len());
    let mut gamma_condition_numbers = Vec::with_capacity(samples.len());
    let mut consistent = Vec::with_capacity(samples.len());
    let mut index_consistent = true;
    for r in per_sample {
        let (inv, cond, cons, idx) = r?;
        gamma_invertible.push(inv);
        gamma_condition_numbers.push(cond);
        consistent.push(cons);
        index_consistent &= idx;
    }
    let scale = spectral_norm(&t0).max(1.0);
    let certified = s_minus_plus_base_norm <= tol.residual * scale
        && gamma_invertible.iter().all(|&b| b)
        && index_consistent;
    Ok(ExtendedCertificate {
        samples: samples.to_vec(),
        gamma_invertible,
        gamma_condition_numbers,
        consistent_with_regularity: consistent,
        s_minus_plus_base_norm,
        gamma_base: to_rows(&gamma_base),
        index_consistent,
        tolerances: tol,
        certified,
    })
}

/// Invertibility of a square matrix and its condition number.
///
/// Empty matrices count as invertible with condition number 1.
pub(crate) fn invertibility(t: &Matrix, tol: f64) -> (bool, Option<f64>) {
    if t.nrows() != t.ncols() {
        return (false, None);
    }
    if t.is_empty() {
        return (true, Some(1.0));
    }
    let svd = Svd::new(t);
    if svd.max() > 0.0 && svd.min() > tol * svd.max() {
        (true, Some(svd.max() / svd.min()))
    } else {
        (false, None)
    }
}
