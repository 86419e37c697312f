//! Regular-operator factorizations of matrices.
//!
//! Every matrix `T: R^n -> R^m` splits the domain as `ker T ⊕ coimg T` and the
//! target as `coker T ⊕ img T`. Complements are chosen orthogonal, so all four
//! pieces carry orthonormal bases and the factorization
//! `T = P · blockdiag(0, core) · Q` holds with orthogonal `P` and `Q`.

mod blocks;
mod chain;
mod family;

pub use blocks::{
    block_inverse_schur, extended_operator_test, projection_case_check, BlockMatrix,
    ExtendedCertificate, ProjectionCertificate,
};
pub use chain::{chain_uniform_regularity, ChainCertificate, ChainDecomposition, ChainFamily};
pub use family::{certify_uniform_regularity, Certificate, OperatorFamily, SampleVerdict};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Singular values below `DEFAULT_RANK_TOL · σ_max` count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinearError {
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("trailing block is singular (smallest singular value {sigma_min:.3e})")]
    SingularBlock { sigma_min: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("base operator is not regular: {0}")]
    BaseNotRegular(String),
    #[error("extended operator is singular at sample {sample}")]
    ExtendedSingular { sample: usize },
    #[error("maps {index} and {next} do not compose to zero (residual {residual:.3e})", next = index + 1)]
    NotAComplex { index: usize, residual: f64 },
    #[error("parameter sample {sample} lies outside the declared box")]
    ParameterOutOfBox { sample: usize },
}

/// Thresholds used by certificates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckTolerances {
    /// Relative singular-value cutoff.
    pub rank: f64,
    /// Relative residual threshold for identities that should hold exactly.
    pub residual: f64,
}

impl Default for CheckTolerances {
    fn default() -> Self {
        Self {
            rank: DEFAULT_RANK_TOL,
            residual: 1e-9,
        }
    }
}

impl CheckTolerances {
    pub fn with_rank(rank: f64) -> Self {
        Self {
            rank,
            ..Self::default()
        }
    }
}

/// Singular value decomposition sorted by decreasing singular value.
///
/// `u` is `m × p` and `v` is `n × p` with `p = min(m, n)`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn new(t: &Matrix) -> Self {
        let (m, n) = t.shape();
        let p = m.min(n);
        if p == 0 {
            return Self {
                u: Matrix::zeros(m, 0),
                singular_values: Vec::new(),
                v: Matrix::zeros(n, 0),
            };
        }
        // nalgebra's bidiagonal SVD returns wrong factors for some low-rank inputs.
        let a = faer::Mat::<f64>::from_fn(m, n, |i, j| t[(i, j)]);
        let svd = match a.thin_svd() {
            Ok(svd) => svd,
            Err(_) => {
                let nan = f64::NAN;
                return Self {
                    u: Matrix::from_element(m, p, nan),
                    singular_values: vec![nan; p],
                    v: Matrix::from_element(n, p, nan),
                };
            }
        };
        let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        let mut su = Matrix::zeros(m, p);
        let mut sv = Matrix::zeros(n, p);
        let mut values = Vec::with_capacity(p);
        for (j, &k) in order.iter().enumerate() {
            for i in 0..m {
                su[(i, j)] = u[(i, k)];
            }
            for i in 0..n {
                sv[(i, j)] = v[(i, k)];
            }
            values.push(s[k]);
        }
        Self {
            u: su,
            singular_values: values,
            v: sv,
        }
    }

    pub fn max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    pub fn min(&self) -> f64 {
        self.singular_values.last().copied().unwrap_or(0.0)
    }

    /// Number of singular values above `tol · σ_max`.
    pub fn rank(&self, tol: f64) -> usize {
        numerical_rank(&self.singular_values, tol)
    }
}

pub fn numerical_rank(singular_values: &[f64], tol: f64) -> usize {
    let smax = singular_values.iter().cloned().fold(0.0, f64::max);
    if smax <= 0.0 {
        return 0;
    }
    singular_values.iter().filter(|&&s| s > tol * smax).count()
}

/// Smallest singular value of a square matrix, `+∞` for the empty matrix.
pub fn sigma_min(t: &Matrix) -> f64 {
    if t.nrows() == 0 || t.ncols() == 0 {
        return f64::INFINITY;
    }
    Svd::new(t).min()
}

/// Spectral norm; zero for empty matrices.
pub fn spectral_norm(t: &Matrix) -> f64 {
    Svd::new(t).max()
}

pub fn ensure_finite(t: &Matrix) -> Result<(), LinearError> {
    if t.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(LinearError::NonFinite)
    }
}

/// Flips `v` so that its first entry of (numerically) maximal magnitude is positive.
pub fn canonical_sign(v: &mut Vector) {
    let max = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if max == 0.0 {
        return;
    }
    if let Some(x) = v.iter().find(|x| x.abs() >= max * (1.0 - 1e-9)) {
        if *x < 0.0 {
            v.neg_mut();
        }
    }
}

fn canonicalize_columns(mut b: Matrix) -> Matrix {
    for j in 0..b.ncols() {
        let mut c = b.column(j).into_owned();
        canonical_sign(&mut c);
        b.set_column(j, &c);
    }
    b
}

/// Orthonormal basis of the orthogonal complement of `span(basis)` in `R^n`.
///
/// `basis` must have orthonormal columns.
pub fn orthonormal_complement(basis: &Matrix, n: usize) -> Matrix {
    let k = basis.ncols();
    if k == 0 {
        return Matrix::identity(n, n);
    }
    if k >= n {
        return Matrix::zeros(n, 0);
    }
    let mut aug = Matrix::zeros(n, k + n);
    aug.view_mut((0, 0), (n, k)).copy_from(basis);
    aug.view_mut((0, k), (n, n)).fill_with_identity();
    let q = aug.qr().q();
    canonicalize_columns(q.columns(k, n - k).into_owned())
}

/// A linear subspace of `R^n` with an orthonormal basis (stored as columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    ambient_dim: usize,
    basis: Matrix,
}

impl Subspace {
    /// Wraps an orthonormal basis.
    pub fn new(ambient_dim: usize, basis: Matrix) -> Self {
        assert_eq!(basis.nrows(), ambient_dim, "basis rows must match ambient dimension");
        Self { ambient_dim, basis }
    }

    pub fn zero(ambient_dim: usize) -> Self {
        Self::new(ambient_dim, Matrix::zeros(ambient_dim, 0))
    }

    pub fn full(ambient_dim: usize) -> Self {
        Self::new(ambient_dim, Matrix::identity(ambient_dim, ambient_dim))
    }

    /// Orthonormalizes the column span of `vectors`, dropping directions below `tol · σ_max`.
    pub fn from_spanning(vectors: &Matrix, tol: f64) -> Self {
        let n = vectors.nrows();
        let svd = Svd::new(vectors);
        let r = svd.rank(tol);
        Self::new(n, canonicalize_columns(svd.u.columns(0, r).into_owned()))
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn projector(&self) -> Matrix {
        &self.basis * self.basis.transpose()
    }

    pub fn complement(&self) -> Subspace {
        Subspace::new(
            self.ambient_dim,
            orthonormal_complement(&self.basis, self.ambient_dim),
        )
    }

    /// Distance from `v` to the subspace.
    pub fn residual_of(&self, v: &Vector) -> f64 {
        (v - &self.basis * (self.basis.transpose() * v)).norm()
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        gram_defect(&self.basis)
    }

    pub fn vectors(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|j| self.basis.column(j).iter().copied().collect())
            .collect()
    }
}

fn gram_defect(b: &Matrix) -> f64 {
    let g = b.transpose() * b;
    let k = g.nrows();
    (&g - Matrix::identity(k, k)).amax()
}

/// Matrix as row-major nested vectors (the JSON layout used in reports).
pub fn to_rows(t: &Matrix) -> Vec<Vec<f64>> {
    (0..t.nrows())
        .map(|i| t.row(i).iter().copied().collect())
        .collect()
}

/// Inverse of [`to_rows`]. All rows must have equal length.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix, LinearError> {
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n) {
        return Err(LinearError::DimensionMismatch(
            "rows of unequal length".to_string(),
        ));
    }
    let t = Matrix::from_fn(m, n, |i, j| rows[i][j]);
    ensure_finite(&t)?;
    Ok(t)
}

/// The normal form `T = P · blockdiag(0, core) · Q` of a matrix.
#[derive(Debug, Clone)]
pub struct LinearNormalForm {
    pub kernel: Subspace,
    pub coimage: Subspace,
    pub image: Subspace,
    pub cokernel: Subspace,
    /// `pr_img ∘ T|_coimg` in the image/coimage bases (`rank × rank`).
    pub core: Matrix,
    /// `Q`: rows are the kernel basis followed by the coimage basis.
    pub basis_domain: Matrix,
    /// `P`: columns are the cokernel basis followed by the image basis.
    pub basis_target: Matrix,
    pub singular_values: Vec<f64>,
    pub tol: f64,
}

impl LinearNormalForm {
    pub fn rank(&self) -> usize {
        self.core.nrows()
    }

    pub fn domain_dim(&self) -> usize {
        self.kernel.ambient_dim()
    }

    pub fn target_dim(&self) -> usize {
        self.image.ambient_dim()
    }

    /// `dim ker − dim coker`.
    pub fn index(&self) -> i64 {
        self.kernel.dim() as i64 - self.cokernel.dim() as i64
    }

    /// `blockdiag(0, core)` as an `m × n` matrix.
    pub fn middle(&self) -> Matrix {
        let (m, n, r) = (self.target_dim(), self.domain_dim(), self.rank());
        let mut mid = Matrix::zeros(m, n);
        mid.view_mut((m - r, n - r), (r, r)).copy_from(&self.core);
        mid
    }

    pub fn reconstruct(&self) -> Matrix {
        &self.basis_target * self.middle() * &self.basis_domain
    }

    pub fn reconstruction_residual(&self, t: &Matrix) -> f64 {
        (self.reconstruct() - t).norm()
    }

    /// Largest Gram defect of `[ker | coimg]` and `[coker | img]`.
    pub fn orthogonality_residual(&self) -> f64 {
        gram_defect(&self.basis_domain.transpose()).max(gram_defect(&self.basis_target))
    }

    pub fn core_inverse(&self) -> Option<Matrix> {
        self.core.clone().try_inverse()
    }
}

/// Factorizes `t` through its kernel, coimage, image and cokernel.
///
/// Singular values at or below `tol · σ_max` are treated as zero.
pub fn factorize_regular(t: &Matrix, tol: f64) -> Result<LinearNormalForm, LinearError> {
    ensure_finite(t)?;
    let (m, n) = t.shape();
    let svd = Svd::new(t);
    let r = svd.rank(tol);
    let coimage = canonicalize_columns(svd.v.columns(0, r).into_owned());
    let image = canonicalize_columns(svd.u.columns(0, r).into_owned());
    let kernel = orthonormal_complement(&coimage, n);
    let cokernel = orthonormal_complement(&image, m);
    let core = image.transpose() * t * &coimage;

    let mut q = Matrix::zeros(n, n);
    q.view_mut((0, 0), (n - r, n)).copy_from(&kernel.transpose());
    q.view_mut((n - r, 0), (r, n)).copy_from(&coimage.transpose());
    let mut p = Matrix::zeros(m, m);
    p.view_mut((0, 0), (m, m - r)).copy_from(&cokernel);
    p.view_mut((0, m - r), (m, r)).copy_from(&image);

    Ok(LinearNormalForm {
        kernel: Subspace::new(n, kernel),
        coimage: Subspace::new(n, coimage),
        image: Subspace::new(m, image),
        cokernel: Subspace::new(m, cokernel),
        core,
        basis_domain: q,
        basis_target: p,
        singular_values: svd.singular_values,
        tol,
    })
}

/// `dim ker T − dim coker T` from the numerical rank.
pub fn fredholm_index(t: &Matrix, tol: f64) -> Result<i64, LinearError> {
    ensure_finite(t)?;
    let r = Svd::new(t).rank(tol) as i64;
    Ok((t.ncols() as i64 - r) - (t.nrows() as i64 - r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_factorization() {
        let t = Matrix::identity(2, 2);
        let nf = factorize_regular(&t, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(nf.rank(), 2);
        assert_eq!(nf.kernel.dim(), 0);
        assert_eq!(nf.cokernel.dim(), 0);
        assert_abs_diff_eq!(nf.core, Matrix::identity(2, 2), epsilon = 1e-14);
    }

    #[test]
    fn zero_operator() {
        let t = Matrix::zeros(2, 3);
        let nf = factorize_regular(&t, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(nf.rank(), 0);
        assert_eq!(nf.kernel.dim(), 3);
        assert_eq!(nf.cokernel.dim(), 2);
        assert_eq!(nf.core.shape(), (0, 0));
        assert!(nf.reconstruction_residual(&t) < 1e-15);
    }

    #[test]
    fn rank_one_symmetric() {
        // TᵀT = [[5,10],[10,20]] has eigenvalues 0 and 25, null vector (2,-1)/√5.
        let t = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let nf = factorize_regular(&t, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(nf.rank(), 1);
        assert_eq!(nf.index(), 0);
        let k = nf.kernel.basis().column(0).into_owned();
        let expected = Vector::from_vec(vec![2.0, -1.0]) / 5f64.sqrt();
        assert_abs_diff_eq!(k, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(nf.singular_values[0], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn index_examples() {
        assert_eq!(fredholm_index(&Matrix::identity(4, 4), 1e-10).unwrap(), 0);
        let wide = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(fredholm_index(&wide, 1e-10).unwrap(), 1);
        let t = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(fredholm_index(&t, 1e-10).unwrap(), 0);
    }

    #[test]
    fn non_finite_rejected() {
        let t = Matrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert_eq!(factorize_regular(&t, 1e-10).unwrap_err(), LinearError::NonFinite);
        assert_eq!(fredholm_index(&t, 1e-10).unwrap_err(), LinearError::NonFinite);
    }

    #[test]
    fn complement_is_orthonormal() {
        let b = Subspace::from_spanning(&Matrix::from_row_slice(3, 1, &[1.0, 1.0, 0.0]), 1e-12);
        let c = b.complement();
        assert_eq!(c.dim(), 2);
        assert!(c.orthonormality_defect() < 1e-14);
        assert!((b.basis().transpose() * c.basis()).amax() < 1e-14);
    }

    #[test]
    fn rows_roundtrip() {
        let t = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(from_rows(&to_rows(&t)).unwrap(), t);
        assert!(from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
