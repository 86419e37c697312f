//! Local normal forms of smooth maps.
//!
//! Around a point `m` with `μ = f(m)`, adapted coordinates split the domain as
//! `x = (x1, x2) ∈ ker ⊕ coimg` and the target as `y = (y1, y2) ∈ coker ⊕ img`.
//! In these coordinates `f̃(x) = B_t⁻¹ (f(m + B_d x) − μ)` and
//!
//! ```text
//! ψ(x)    = (x1, T̂⁻¹ f̃2(x))
//! φ⁻¹(w)  = (w1 − f̃1(ψ⁻¹(0, T̂⁻¹ w2)), w2)
//! f_s(u)  = f̃1(ψ⁻¹(u)) − f̃1(ψ⁻¹(0, u2))
//! ```
//!
//! so that `φ⁻¹ ∘ f̃ ∘ ψ⁻¹ (u) = (f_s(u), T̂ u2)`. The charts are
//! `κ = ψ ∘ B_d⁻¹(· − m)` and `ρ = φ⁻¹ ∘ B_t⁻¹(· − μ)`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::calculus::{
    gauss_newton, jacobian_fd, newton_invert, CalculusError, DifferentiableMap, FnMap,
    LocalDiffeo, NewtonSettings, SharedMap,
};
use crate::linear_core::{
    factorize_regular, numerical_rank, LinearError, LinearNormalForm, Matrix, Svd, Vector,
    DEFAULT_RANK_TOL,
};
use crate::sampling::ball_samples;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NormalFormError {
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error(transparent)]
    Calculus(#[from] CalculusError),
    #[error("Newton solve failed at radius {radius:.3e}: {source}")]
    NewtonFailure {
        radius: f64,
        source: CalculusError,
    },
    #[error("{check} check failed at sample {sample:?} (residual {residual:.3e})")]
    VerificationFailure {
        check: String,
        sample: Vec<f64>,
        residual: f64,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalFormSettings {
    /// Initial validity radius in chart coordinates.
    pub radius: f64,
    /// Give up once the radius falls below this.
    pub min_radius: f64,
    pub rank_tol: f64,
    #[serde(skip)]
    pub newton: NewtonSettings,
    pub conjugacy_samples: usize,
    pub conjugacy_tol: f64,
    pub fs_zero_samples: usize,
    pub fs_zero_tol: f64,
    pub dfs_tol: f64,
    pub dfs_step: f64,
    pub roundtrip_tol: f64,
    pub seed: u64,
}

impl Default for NormalFormSettings {
    fn default() -> Self {
        Self {
            radius: 0.5,
            min_radius: 1e-6,
            rank_tol: DEFAULT_RANK_TOL,
            newton: NewtonSettings::default(),
            conjugacy_samples: 200,
            conjugacy_tol: 1e-8,
            fs_zero_samples: 50,
            fs_zero_tol: 1e-9,
            dfs_tol: 1e-6,
            dfs_step: 1e-5,
            roundtrip_tol: 1e-8,
            seed: 0,
        }
    }
}

/// Bases adapted to `ker ⊕ C` in the domain and `D ⊕ img` in the target.
///
/// `b_domain = [K | C]` and `b_target = [D | I]`. The complements `C` and `D`
/// need not be orthogonal.
#[derive(Debug, Clone)]
pub struct Splitting {
    pub kernel_dim: usize,
    pub rank: usize,
    pub b_domain: Matrix,
    pub b_domain_inv: Matrix,
    pub b_target: Matrix,
    pub b_target_inv: Matrix,
}

impl Splitting {
    pub fn orthogonal(nf: &LinearNormalForm) -> Self {
        let q = nf.basis_domain.transpose();
        let p = nf.basis_target.clone();
        Self {
            kernel_dim: nf.kernel.dim(),
            rank: nf.rank(),
            b_domain_inv: q.transpose(),
            b_domain: q,
            b_target_inv: p.transpose(),
            b_target: p,
        }
    }

    /// Assembles a splitting from explicit bases.
    pub fn from_bases(
        kernel: &Matrix,
        coimage_complement: &Matrix,
        cokernel_complement: &Matrix,
        image: &Matrix,
    ) -> Result<Self, NormalFormError> {
        let n = kernel.nrows();
        let m = image.nrows();
        let (k, r) = (kernel.ncols(), image.ncols());
        if coimage_complement.shape() != (n, r)
            || k + r != n
            || cokernel_complement.shape() != (m, m - r.min(m))
        {
            return Err(NormalFormError::DimensionMismatch(
                "splitting bases do not fit together".to_string(),
            ));
        }
        let mut bd = Matrix::zeros(n, n);
        bd.view_mut((0, 0), (n, k)).copy_from(kernel);
        bd.view_mut((0, k), (n, r)).copy_from(coimage_complement);
        let mut bt = Matrix::zeros(m, m);
        bt.view_mut((0, 0), (m, m - r)).copy_from(cokernel_complement);
        bt.view_mut((0, m - r), (m, r)).copy_from(image);
        let singular = |b: &Matrix| {
            let s = Svd::new(b);
            b.nrows() > 0 && s.min() <= 1e-10 * s.max()
        };
        if singular(&bd) || singular(&bt) {
            return Err(NormalFormError::Linear(LinearError::DimensionMismatch(
                "splitting bases are not complementary".to_string(),
            )));
        }
        let bd_inv = if n == 0 { bd.clone() } else { bd.clone().try_inverse().expect("checked") };
        let bt_inv = if m == 0 { bt.clone() } else { bt.clone().try_inverse().expect("checked") };
        Ok(Self {
            kernel_dim: k,
            rank: r,
            b_domain: bd,
            b_domain_inv: bd_inv,
            b_target: bt,
            b_target_inv: bt_inv,
        })
    }

    pub fn domain_dim(&self) -> usize {
        self.b_domain.nrows()
    }

    pub fn target_dim(&self) -> usize {
        self.b_target.nrows()
    }

    pub fn cokernel_dim(&self) -> usize {
        self.target_dim() - self.rank
    }
}

/// The coordinate maps behind a normal form. All evaluations are pure.
pub struct Charts {
    f: SharedMap,
    base: Vector,
    value: Vector,
    pub split: Splitting,
    t_hat: Matrix,
    t_hat_inv: Matrix,
    newton: NewtonSettings,
}

impl fmt::Debug for Charts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Charts")
            .field("base", &self.base.as_slice())
            .field("kernel_dim", &self.split.kernel_dim)
            .field("rank", &self.split.rank)
            .finish()
    }
}

impl Charts {
    fn k(&self) -> usize {
        self.split.kernel_dim
    }

    fn r(&self) -> usize {
        self.split.rank
    }

    fn c(&self) -> usize {
        self.split.cokernel_dim()
    }

    pub fn f_tilde(&self, x: &Vector) -> Vector {
        let z = &self.base + &self.split.b_domain * x;
        &self.split.b_target_inv * (self.f.eval(&z) - &self.value)
    }

    fn f_tilde_jacobian(&self, x: &Vector) -> Matrix {
        let z = &self.base + &self.split.b_domain * x;
        &self.split.b_target_inv * self.f.jacobian(&z) * &self.split.b_domain
    }

    fn join(&self, x1: &Vector, x2: &Vector) -> Vector {
        let mut x = Vector::zeros(self.k() + self.r());
        x.rows_mut(0, self.k()).copy_from(x1);
        x.rows_mut(self.k(), self.r()).copy_from(x2);
        x
    }

    pub fn psi(&self, x: &Vector) -> Vector {
        let ft = self.f_tilde(x);
        let x2 = &self.t_hat_inv * ft.rows(self.c(), self.r());
        self.join(&x.rows(0, self.k()).into_owned(), &x2)
    }

    fn psi_jacobian(&self, x: &Vector) -> Matrix {
        let (k, r, c) = (self.k(), self.r(), self.c());
        let mut j = Matrix::zeros(k + r, k + r);
        j.view_mut((0, 0), (k, k)).fill_with_identity();
        let jt = self.f_tilde_jacobian(x);
        let lower = &self.t_hat_inv * jt.rows(c, r);
        j.view_mut((k, 0), (r, k + r)).copy_from(&lower);
        j
    }

    /// `ψ⁻¹(u)`: `x1 = u1` and `x2` solves `T̂⁻¹ f̃2(u1, x2) = u2`, starting at `x2 = u2`.
    pub fn psi_inv(&self, u: &Vector) -> Result<Vector, CalculusError> {
        let (k, r) = (self.k(), self.r());
        if r == 0 {
            return Ok(u.clone());
        }
        let u1 = u.rows(0, k).into_owned();
        let u2 = u.rows(k, r).into_owned();
        struct Partial<'a> {
            charts: &'a Charts,
            u1: Vector,
        }
        impl DifferentiableMap for Partial<'_> {
            fn dim_in(&self) -> usize {
                self.charts.r()
            }
            fn dim_out(&self) -> usize {
                self.charts.r()
            }
            fn eval(&self, x2: &Vector) -> Vector {
                let ch = self.charts;
                let ft = ch.f_tilde(&ch.join(&self.u1, x2));
                &ch.t_hat_inv * ft.rows(ch.c(), ch.r())
            }
            fn jacobian(&self, x2: &Vector) -> Matrix {
                let ch = self.charts;
                let jt = ch.f_tilde_jacobian(&ch.join(&self.u1, x2));
                &ch.t_hat_inv * jt.view((ch.c(), ch.k()), (ch.r(), ch.r()))
            }
        }
        let partial = Partial {
            charts: self,
            u1: u1.clone(),
        };
        let x2 = newton_invert(&partial, &u2, &u2, &self.newton)?;
        Ok(self.join(&u1, &x2))
    }

    fn f1_on_coimage(&self, u2: &Vector) -> Result<Vector, CalculusError> {
        let x = self.psi_inv(&self.join(&Vector::zeros(self.k()), u2))?;
        Ok(self.f_tilde(&x).rows(0, self.c()).into_owned())
    }

    /// `φ(y) = (y1 + f̃1(ψ⁻¹(0, T̂⁻¹ y2)), y2)`.
    pub fn phi(&self, y: &Vector) -> Result<Vector, CalculusError> {
        let (c, r) = (self.c(), self.r());
        let y2 = y.rows(c, r).into_owned();
        let shift = self.f1_on_coimage(&(&self.t_hat_inv * &y2))?;
        let mut out = y.clone();
        let top = y.rows(0, c) + shift;
        out.rows_mut(0, c).copy_from(&top);
        Ok(out)
    }

    /// `φ⁻¹(w) = (w1 − f̃1(ψ⁻¹(0, T̂⁻¹ w2)), w2)`.
    pub fn phi_inv(&self, w: &Vector) -> Result<Vector, CalculusError> {
        let (c, r) = (self.c(), self.r());
        let w2 = w.rows(c, r).into_owned();
        let shift = self.f1_on_coimage(&(&self.t_hat_inv * &w2))?;
        let mut out = w.clone();
        let top = w.rows(0, c) - shift;
        out.rows_mut(0, c).copy_from(&top);
        Ok(out)
    }

    /// The singular part `f_s(u)` in cokernel coordinates.
    pub fn fs(&self, u: &Vector) -> Result<Vector, CalculusError> {
        let (k, r, c) = (self.k(), self.r(), self.c());
        let full = self.f_tilde(&self.psi_inv(u)?).rows(0, c).into_owned();
        let u2 = u.rows(k, r).into_owned();
        Ok(full - self.f1_on_coimage(&u2)?)
    }

    /// `(f_s(u), T̂ u2)`, the normal form in chart coordinates.
    pub fn normal_map(&self, u: &Vector) -> Result<Vector, CalculusError> {
        let (k, r, c) = (self.k(), self.r(), self.c());
        let mut out = Vector::zeros(c + r);
        out.rows_mut(0, c).copy_from(&self.fs(u)?);
        let lin = &self.t_hat * u.rows(k, r);
        out.rows_mut(c, r).copy_from(&lin);
        Ok(out)
    }

    pub fn kappa(&self, z: &Vector) -> Vector {
        self.psi(&(&self.split.b_domain_inv * (z - &self.base)))
    }

    pub fn kappa_inv(&self, u: &Vector) -> Result<Vector, CalculusError> {
        Ok(&self.base + &self.split.b_domain * self.psi_inv(u)?)
    }

    pub fn rho(&self, y: &Vector) -> Result<Vector, CalculusError> {
        self.phi_inv(&(&self.split.b_target_inv * (y - &self.value)))
    }

    pub fn rho_inv(&self, w: &Vector) -> Result<Vector, CalculusError> {
        Ok(&self.value + &self.split.b_target * self.phi(w)?)
    }

    /// `ρ(f(κ⁻¹(u)))`, computed through the actual charts.
    pub fn conjugated(&self, u: &Vector) -> Result<Vector, CalculusError> {
        self.rho(&self.f.eval(&self.kappa_inv(u)?))
    }
}

fn nan_vec(n: usize) -> Vector {
    Vector::from_element(n, f64::NAN)
}

/// Measured residuals of the normal-form identities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verification {
    pub max_conjugacy_residual: f64,
    pub max_fs_zero_residual: f64,
    pub dfs_norm: f64,
    pub max_roundtrip_residual: f64,
    pub conjugacy_samples: usize,
    pub fs_zero_samples: usize,
}

/// A normal form of `f` at `base`.
#[derive(Debug, Clone)]
pub struct NormalFormData {
    pub base: Vector,
    pub base_value: Vector,
    pub linear: LinearNormalForm,
    pub charts: Arc<Charts>,
    pub kappa: Arc<LocalDiffeo>,
    pub rho: Arc<LocalDiffeo>,
    /// The invertible core `T̂` (rank × rank).
    pub core: Matrix,
    /// `f_s`: chart ball in `R^n` → cokernel coordinates.
    pub singular_part: SharedMap,
    pub radius: f64,
    pub verification: Verification,
}

impl NormalFormData {
    pub fn kernel_dim(&self) -> usize {
        self.charts.split.kernel_dim
    }

    pub fn rank(&self) -> usize {
        self.charts.split.rank
    }

    pub fn cokernel_dim(&self) -> usize {
        self.charts.split.cokernel_dim()
    }

    pub fn domain_dim(&self) -> usize {
        self.charts.split.domain_dim()
    }

    pub fn fs(&self, u: &Vector) -> Result<Vector, CalculusError> {
        self.charts.fs(u)
    }

    /// `f_s(x1, 0)` as a map on kernel coordinates.
    pub fn reduced_singular_part(&self) -> SharedMap {
        let charts = Arc::clone(&self.charts);
        let (k, c) = (self.kernel_dim(), self.cokernel_dim());
        FnMap::new(k, c, move |x1: &Vector| {
            let u = charts.join(x1, &Vector::zeros(charts.r()));
            charts.fs(&u).unwrap_or_else(|_| nan_vec(c))
        })
        .shared()
    }

    /// Splits chart coordinates `u` into `(u1, u2)`.
    pub fn split_chart_point(&self, u: &Vector) -> (Vector, Vector) {
        let k = self.kernel_dim();
        (
            u.rows(0, k).into_owned(),
            u.rows(k, self.rank()).into_owned(),
        )
    }
}

fn jacobian_at(f: &dyn DifferentiableMap, m: &Vector) -> Result<Matrix, NormalFormError> {
    if m.len() != f.dim_in() {
        return Err(NormalFormError::DimensionMismatch(format!(
            "base point has {} coordinates, map expects {}",
            m.len(),
            f.dim_in()
        )));
    }
    let j = f.jacobian(m);
    if j.iter().any(|v| !v.is_finite()) {
        return Err(LinearError::NonFinite.into());
    }
    Ok(j)
}

/// Builds the normal form of `f` at `m` with orthogonal complements.
pub fn normal_form_at(
    f: SharedMap,
    m: &Vector,
    settings: &NormalFormSettings,
) -> Result<NormalFormData, NormalFormError> {
    let j = jacobian_at(f.as_ref(), m)?;
    let nf = factorize_regular(&j, settings.rank_tol)?;
    let split = Splitting::orthogonal(&nf);
    normal_form_with_splitting(f, m, nf, split, settings)
}

/// Builds the normal form with a caller-chosen splitting of the linearization.
pub fn normal_form_with_splitting(
    f: SharedMap,
    m: &Vector,
    linear: LinearNormalForm,
    split: Splitting,
    settings: &NormalFormSettings,
) -> Result<NormalFormData, NormalFormError> {
    let j = jacobian_at(f.as_ref(), m)?;
    let (n, mm) = (f.dim_in(), f.dim_out());
    if split.domain_dim() != n || split.target_dim() != mm {
        return Err(NormalFormError::DimensionMismatch(
            "splitting does not match the map".to_string(),
        ));
    }
    let (k, r) = (split.kernel_dim, split.rank);
    let c = mm - r;
    let adapted = &split.b_target_inv * &j * &split.b_domain;
    let t_hat = adapted.view((c, k), (r, r)).into_owned();
    let t_hat_inv = if r == 0 {
        Matrix::zeros(0, 0)
    } else {
        let s = Svd::new(&t_hat);
        if s.min() <= settings.rank_tol * s.max() {
            return Err(LinearError::SingularBlock { sigma_min: s.min() }.into());
        }
        t_hat.clone().try_inverse().ok_or(LinearError::SingularBlock { sigma_min: s.min() })?
    };
    let value = f.eval(m);
    let charts = Arc::new(Charts {
        f: Arc::clone(&f),
        base: m.clone(),
        value: value.clone(),
        split,
        t_hat: t_hat.clone(),
        t_hat_inv,
        newton: settings.newton,
    });

    let mut radius = settings.radius;
    let mut last_err = None;
    while radius >= settings.min_radius {
        match verify(&charts, radius, settings) {
            Ok(verification) => {
                let (kappa, rho) = build_chart_diffeos(&charts, radius, settings)?;
                let fs_charts = Arc::clone(&charts);
                let singular_part = FnMap::new(n, c, move |u: &Vector| {
                    fs_charts.fs(u).unwrap_or_else(|_| nan_vec(c))
                })
                .shared();
                return Ok(NormalFormData {
                    base: m.clone(),
                    base_value: value,
                    linear,
                    charts,
                    kappa,
                    rho,
                    core: t_hat,
                    singular_part,
                    radius,
                    verification,
                });
            }
            Err(e) => {
                last_err = Some(e);
                radius *= 0.5;
            }
        }
    }
    Err(last_err.unwrap_or(NormalFormError::VerificationFailure {
        check: "radius".to_string(),
        sample: Vec::new(),
        residual: f64::NAN,
    }))
}

fn build_chart_diffeos(
    charts: &Arc<Charts>,
    radius: f64,
    settings: &NormalFormSettings,
) -> Result<(Arc<LocalDiffeo>, Arc<LocalDiffeo>), NormalFormError> {
    let n = charts.split.domain_dim();
    let m = charts.split.target_dim();
    let (a, b, c, d, e) = (
        Arc::clone(charts),
        Arc::clone(charts),
        Arc::clone(charts),
        Arc::clone(charts),
        Arc::clone(charts),
    );
    let kappa_fwd = FnMap::new(n, n, move |z: &Vector| a.kappa(z))
        .with_jacobian(move |z: &Vector| {
            let x = &e.split.b_domain_inv * (z - &e.base);
            e.psi_jacobian(&x) * &e.split.b_domain_inv
        })
        .shared();
    let kappa_inv =
        FnMap::new(n, n, move |u: &Vector| b.kappa_inv(u).unwrap_or_else(|_| nan_vec(n))).shared();
    let kappa = LocalDiffeo::new(kappa_fwd, charts.base.clone(), settings.newton)?
        .with_inverse(kappa_inv)
        .with_radius(radius);
    let rho_fwd =
        FnMap::new(m, m, move |y: &Vector| c.rho(y).unwrap_or_else(|_| nan_vec(m))).shared();
    let rho_inv =
        FnMap::new(m, m, move |w: &Vector| d.rho_inv(w).unwrap_or_else(|_| nan_vec(m))).shared();
    let rho = LocalDiffeo::new(rho_fwd, charts.value.clone(), settings.newton)?
        .with_inverse(rho_inv)
        .with_radius(radius);
    Ok((Arc::new(kappa), Arc::new(rho)))
}

fn failure(check: &str, sample: &Vector, residual: f64) -> NormalFormError {
    NormalFormError::VerificationFailure {
        check: check.to_string(),
        sample: sample.iter().copied().collect(),
        residual,
    }
}

fn verify(
    charts: &Arc<Charts>,
    radius: f64,
    settings: &NormalFormSettings,
) -> Result<Verification, NormalFormError> {
    let (k, r) = (charts.k(), charts.r());
    let n = k + r;
    let newton_fail = |e: CalculusError| NormalFormError::NewtonFailure { radius, source: e };

    let samples = ball_samples(n, radius, settings.conjugacy_samples, settings.seed);
    let residuals: Vec<Result<(f64, f64), NormalFormError>> = samples
        .par_iter()
        .map(|u| {
            let lhs = charts.conjugated(u).map_err(newton_fail)?;
            let rhs = charts.normal_map(u).map_err(newton_fail)?;
            let conj = (lhs - rhs).norm();
            if !(conj <= settings.conjugacy_tol) {
                return Err(failure("conjugacy", u, conj));
            }
            let back = charts.kappa(&charts.kappa_inv(u).map_err(newton_fail)?);
            let rt = (back - u).norm();
            if !(rt <= settings.roundtrip_tol) {
                return Err(failure("round trip", u, rt));
            }
            Ok((conj, rt))
        })
        .collect();
    let mut max_conj: f64 = 0.0;
    let mut max_rt: f64 = 0.0;
    for res in residuals {
        let (a, b) = res?;
        max_conj = max_conj.max(a);
        max_rt = max_rt.max(b);
    }

    let coimage = ball_samples(r, radius, settings.fs_zero_samples, settings.seed ^ 0x9e37);
    let mut max_zero: f64 = 0.0;
    for x2 in &coimage {
        let u = charts.join(&Vector::zeros(k), x2);
        let v = charts.fs(&u).map_err(newton_fail)?.norm();
        if !(v <= settings.fs_zero_tol) {
            return Err(failure("f_s(0, x2) = 0", &u, v));
        }
        max_zero = max_zero.max(v);
    }

    let ch = Arc::clone(charts);
    let fs_map = FnMap::new(n, charts.c(), move |u: &Vector| {
        ch.fs(u).unwrap_or_else(|_| nan_vec(ch.c()))
    });
    let h = settings.dfs_step.min(radius / 4.0);
    let dfs = jacobian_fd(&fs_map, &Vector::zeros(n), Some(h))
        .map_err(newton_fail)?;
    let dfs_norm = if dfs.is_empty() { 0.0 } else { dfs.norm() };
    if !(dfs_norm <= settings.dfs_tol) {
        return Err(failure("D f_s(0) = 0", &Vector::zeros(n), dfs_norm));
    }
    Ok(Verification {
        max_conjugacy_residual: max_conj,
        max_fs_zero_residual: max_zero,
        dfs_norm,
        max_roundtrip_residual: max_rt,
        conjugacy_samples: samples.len(),
        fs_zero_samples: coimage.len(),
    })
}

/// Local type of a smooth map at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "rank")]
pub enum PointClassification {
    Submersion,
    Immersion,
    Subimmersion(usize),
    General,
}

impl fmt::Display for PointClassification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointClassification::Submersion => write!(f, "submersion"),
            PointClassification::Immersion => write!(f, "immersion"),
            PointClassification::Subimmersion(r) => write!(f, "subimmersion({r})"),
            PointClassification::General => write!(f, "general"),
        }
    }
}

/// Quasi-random points in the ball of the given radius around `m`.
pub fn neighborhood_samples(m: &Vector, radius: f64, count: usize, seed: u64) -> Vec<Vector> {
    ball_samples(m.len(), radius, count, seed)
        .into_iter()
        .map(|d| m + d)
        .collect()
}

/// Submersion if `Df(m)` is onto (also when bijective), Immersion if injective,
/// Subimmersion when the rank is the same at `m` and every sample, else General.
pub fn classify_point(
    f: &dyn DifferentiableMap,
    m: &Vector,
    samples: &[Vector],
    tol: f64,
) -> PointClassification {
    let rank_at = |x: &Vector| numerical_rank(&Svd::new(&f.jacobian(x)).singular_values, tol);
    let r = rank_at(m);
    if r == f.dim_out() {
        PointClassification::Submersion
    } else if r == f.dim_in() {
        PointClassification::Immersion
    } else if samples.par_iter().all(|x| rank_at(x) == r) {
        PointClassification::Subimmersion(r)
    } else {
        PointClassification::General
    }
}

/// Outcome of the Lyapunov-Schmidt reduction at a point.
#[derive(Clone)]
pub struct ReducedProblem {
    pub kernel_dim: usize,
    pub cokernel_dim: usize,
    /// `x1 ↦ x2(x1)` solving `pr_img f̃(x1, x2) = 0`.
    pub implicit_solution: SharedMap,
    /// `x1 ↦ pr_coker f̃(x1, x2(x1))`.
    pub reduced_map: SharedMap,
    pub normal_form: NormalFormData,
    /// Largest `‖reduced(x1) − f_s(x1, 0)‖` over the samples.
    pub agreement_residual: f64,
    pub agreement_samples: usize,
    pub radius: f64,
}

impl fmt::Debug for ReducedProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReducedProblem")
            .field("kernel_dim", &self.kernel_dim)
            .field("cokernel_dim", &self.cokernel_dim)
            .field("agreement_residual", &self.agreement_residual)
            .field("radius", &self.radius)
            .finish()
    }
}

fn solve_implicit(charts: &Charts, x1: &Vector, settings: &NewtonSettings) -> Result<Vector, CalculusError> {
    let r = charts.r();
    if r == 0 {
        return Ok(Vector::zeros(0));
    }
    struct Img<'a> {
        charts: &'a Charts,
    }
    impl DifferentiableMap for Img<'_> {
        fn dim_in(&self) -> usize {
            self.charts.k() + self.charts.r()
        }
        fn dim_out(&self) -> usize {
            self.charts.r()
        }
        fn eval(&self, x: &Vector) -> Vector {
            let ch = self.charts;
            ch.f_tilde(x).rows(ch.c(), ch.r()).into_owned()
        }
        fn jacobian(&self, x: &Vector) -> Matrix {
            self.charts
                .f_tilde_jacobian(x)
                .rows(self.charts.c(), self.charts.r())
                .into_owned()
        }
    }
    crate::calculus::parametrized_newton(
        &Img { charts },
        x1,
        &Vector::zeros(r),
        &Vector::zeros(r),
        settings,
    )
}

/// Lyapunov-Schmidt reduction at `m` in orthogonal coordinates.
///
/// The implicit solution is found by Newton from `x2 = 0`; the reduced map is
/// checked against `f_s(·, 0)` from the normal form on kernel samples.
pub fn lyapunov_schmidt(
    f: SharedMap,
    m: &Vector,
    settings: &NormalFormSettings,
) -> Result<ReducedProblem, NormalFormError> {
    let nf = normal_form_at(f, m, settings)?;
    let charts = Arc::clone(&nf.charts);
    let (k, r, c) = (charts.k(), charts.r(), charts.c());
    let radius = nf.radius;
    let newton = settings.newton;

    let ch = Arc::clone(&charts);
    let implicit = FnMap::new(k, r, move |x1: &Vector| {
        solve_implicit(&ch, x1, &newton).unwrap_or_else(|_| nan_vec(r))
    })
    .shared();
    let ch = Arc::clone(&charts);
    let reduced = FnMap::new(k, c, move |x1: &Vector| match solve_implicit(&ch, x1, &newton) {
        Ok(x2) => ch.f_tilde(&ch.join(x1, &x2)).rows(0, c).into_owned(),
        Err(_) => nan_vec(c),
    })
    .shared();

    let samples = ball_samples(k, radius, 50, settings.seed ^ 0x15);
    let reduced_fs = nf.reduced_singular_part();
    let mut agreement: f64 = 0.0;
    for x1 in &samples {
        solve_implicit(&charts, x1, &newton)
            .map_err(|e| NormalFormError::NewtonFailure { radius, source: e })?;
        let d = (reduced.eval(x1) - reduced_fs.eval(x1)).norm();
        if !(d <= settings.conjugacy_tol) {
            return Err(failure("reduction agreement", x1, d));
        }
        agreement = agreement.max(d);
    }
    Ok(ReducedProblem {
        kernel_dim: k,
        cokernel_dim: c,
        implicit_solution: implicit,
        reduced_map: reduced,
        normal_form: nf,
        agreement_residual: agreement,
        agreement_samples: samples.len(),
        radius,
    })
}

/// A target chart that maps a submanifold `P` onto the coordinate plane
/// spanned by `z_coords`, with `P ∋ f(m)` going to a point of that plane.
#[derive(Debug, Clone)]
pub struct SubmanifoldChart {
    pub chart: Arc<LocalDiffeo>,
    pub z_coords: Vec<usize>,
}

impl SubmanifoldChart {
    fn normal_coords(&self) -> Vec<usize> {
        (0..self.chart.dim())
            .filter(|i| !self.z_coords.contains(i))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct RelativeNormalForm {
    /// Normal form of `pr_{Z⊥} ∘ chart ∘ f`.
    pub normal_form: NormalFormData,
    /// `f_P = pr_Z ∘ chart ∘ f ∘ κ⁻¹`.
    pub f_p: SharedMap,
    /// Largest residual of the two-sided preimage check.
    pub preimage_residual: f64,
    pub preimage_samples: usize,
}

fn select(v: &Vector, idx: &[usize]) -> Vector {
    Vector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Normal form of `f` relative to a submanifold `P` of the target.
pub fn relative_normal_form(
    f: SharedMap,
    m: &Vector,
    p_chart: &SubmanifoldChart,
    settings: &NormalFormSettings,
) -> Result<RelativeNormalForm, NormalFormError> {
    if p_chart.chart.dim() != f.dim_out() || p_chart.z_coords.iter().any(|&i| i >= f.dim_out()) {
        return Err(NormalFormError::DimensionMismatch(
            "submanifold chart does not match the target".to_string(),
        ));
    }
    let normal = p_chart.normal_coords();
    let z = p_chart.z_coords.clone();
    let (n, nn, nz) = (f.dim_in(), normal.len(), z.len());
    let target = select(&p_chart.chart.apply(&f.eval(m)), &normal);

    let (f1, ch1, idx1, t1) = (Arc::clone(&f), Arc::clone(&p_chart.chart), normal.clone(), target.clone());
    let (f2, ch2, idx2) = (Arc::clone(&f), Arc::clone(&p_chart.chart), normal.clone());
    let f_bar = FnMap::new(n, nn, move |x: &Vector| {
        select(&ch1.apply(&f1.eval(x)), &idx1) - &t1
    })
    .with_jacobian(move |x: &Vector| {
        let j = ch2.jacobian(&f2.eval(x)) * f2.jacobian(x);
        Matrix::from_fn(idx2.len(), j.ncols(), |i, c| j[(idx2[i], c)])
    })
    .shared();
    let nf = normal_form_at(Arc::clone(&f_bar), m, settings)?;

    let (f3, ch3, charts) = (Arc::clone(&f), Arc::clone(&p_chart.chart), Arc::clone(&nf.charts));
    let zc = z.clone();
    let f_p = FnMap::new(n, nz, move |u: &Vector| match charts.kappa_inv(u) {
        Ok(x) => select(&ch3.apply(&f3.eval(&x)), &zc),
        Err(_) => nan_vec(zc.len()),
    })
    .shared();

    let (residual, count) = preimage_check(&nf, f_bar.as_ref(), settings)?;
    Ok(RelativeNormalForm {
        normal_form: nf,
        f_p,
        preimage_residual: residual,
        preimage_samples: count,
    })
}

/// Two-sided check of `κ(f̄⁻¹(0)) = {(x1, 0) : f_s(x1, 0) = 0}` near the base.
fn preimage_check(
    nf: &NormalFormData,
    f_bar: &dyn DifferentiableMap,
    settings: &NormalFormSettings,
) -> Result<(f64, usize), NormalFormError> {
    let tol = settings.conjugacy_tol;
    let k = nf.kernel_dim();
    let radius = nf.radius;
    let gn = NewtonSettings {
        max_iter: 200,
        ..settings.newton
    };
    let mut worst: f64 = 0.0;
    let mut count = 0;

    // Points of f̄⁻¹(0) land on the kernel plane inside the zero set of f_s.
    let zero = Vector::zeros(f_bar.dim_out());
    for z0 in neighborhood_samples(&nf.base, radius / 4.0, 20, settings.seed ^ 0xa1) {
        let Ok(rep) = gauss_newton(f_bar, &zero, &z0, &gn) else {
            continue;
        };
        let u = nf.charts.kappa(&rep.x);
        if u.norm() > radius {
            continue;
        }
        let (u1, u2) = nf.split_chart_point(&u);
        let s = nf.charts.fs(&nf.charts.join(&u1, &Vector::zeros(nf.rank())))?;
        let res = u2.norm().max(s.norm());
        if !(res <= tol) {
            return Err(failure("preimage (f̄ = 0 ⇒ chart)", &rep.x, res));
        }
        worst = worst.max(res);
        count += 1;
    }

    // Zeros of f_s(·, 0) come back to f̄⁻¹(0).
    let reduced = nf.reduced_singular_part();
    let zero_c = Vector::zeros(nf.cokernel_dim());
    for x1 in ball_samples(k, radius / 4.0, 20, settings.seed ^ 0xb2) {
        let x1 = if reduced.dim_out() == 0 {
            x1
        } else {
            match gauss_newton(reduced.as_ref(), &zero_c, &x1, &gn) {
                Ok(rep) => rep.x,
                Err(_) => continue,
            }
        };
        let u = nf.charts.join(&x1, &Vector::zeros(nf.rank()));
        if u.norm() > radius {
            continue;
        }
        let x = nf.charts.kappa_inv(&u)?;
        let res = f_bar.eval(&x).norm();
        if !(res <= tol) {
            return Err(failure("preimage (chart ⇒ f̄ = 0)", &u, res));
        }
        worst = worst.max(res);
        count += 1;
    }
    Ok((worst, count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{parse_expression_map, LinearMap};

    fn map(outputs: &[&str], vars: &[&str]) -> SharedMap {
        let v: Vec<String> = vars.iter().map(|s| s.to_string()).collect();
        Arc::new(parse_expression_map(outputs, &v).unwrap())
    }

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn square_has_trivial_charts() {
        let nf = normal_form_at(map(&["x^2"], &["x"]), &v(&[0.0]), &Default::default()).unwrap();
        assert_eq!(nf.rank(), 0);
        assert_eq!(nf.core.shape(), (0, 0));
        let u = v(&[0.3]);
        assert!((nf.kappa.apply(&u) - &u).norm() < 1e-15);
        assert!((nf.fs(&u).unwrap()[0] - 0.09).abs() < 1e-15);
        assert!(nf.verification.max_conjugacy_residual < 1e-12);
    }

    #[test]
    fn submersion_has_vanishing_singular_part() {
        let f = map(&["y + x^3"], &["x", "y"]);
        let nf = normal_form_at(f, &v(&[0.0, 0.0]), &Default::default()).unwrap();
        assert_eq!((nf.kernel_dim(), nf.rank(), nf.cokernel_dim()), (1, 1, 0));
        // ψ(x, y) = (x, y + x³) and ψ⁻¹(x, y) = (x, y − x³).
        let p = v(&[0.3, -0.2]);
        let psi = nf.charts.psi(&p);
        assert!((psi - v(&[0.3, -0.2 + 0.027])).norm() < 1e-14);
        let back = nf.charts.psi_inv(&p).unwrap();
        assert!((back - v(&[0.3, -0.2 - 0.027])).norm() < 1e-13);
        assert_eq!(nf.fs(&p).unwrap().len(), 0);
    }

    #[test]
    fn pitchfork_is_its_own_singular_part() {
        let f = map(&["l*x - x^3"], &["x", "l"]);
        let nf = normal_form_at(Arc::clone(&f), &v(&[0.0, 0.0]), &Default::default()).unwrap();
        assert_eq!(nf.rank(), 0);
        for p in ball_samples(2, 0.4, 20, 5) {
            assert!((nf.fs(&p).unwrap() - f.eval(&p)).norm() < 1e-15);
        }
        // l = x² and x = 0 are zeros.
        assert!(nf.fs(&v(&[0.3, 0.09])).unwrap()[0].abs() < 1e-15);
        assert_eq!(nf.fs(&v(&[0.0, 0.2])).unwrap()[0], 0.0);
    }

    #[test]
    fn conjugacy_with_nonlinear_coupling() {
        let f = map(&["x + y^2 + sin(y)", "x*y + y^3"], &["x", "y"]);
        let nf = normal_form_at(f, &v(&[0.1, 0.0]), &Default::default()).unwrap();
        assert!(nf.verification.max_conjugacy_residual <= 1e-8);
        assert!(nf.verification.dfs_norm <= 1e-6);
    }

    #[test]
    fn classification_examples() {
        let f = map(&["x^2 + y^2"], &["x", "y"]);
        let m = v(&[1.0, 0.0]);
        let s = neighborhood_samples(&m, 0.25, 64, 0);
        assert_eq!(classify_point(f.as_ref(), &m, &s, 1e-10), PointClassification::Submersion);
        let g = map(&["cos(t)", "sin(t)"], &["t"]);
        let m = v(&[0.0]);
        let s = neighborhood_samples(&m, 0.25, 64, 0);
        assert_eq!(classify_point(g.as_ref(), &m, &s, 1e-10), PointClassification::Immersion);
        let h = LinearMap::new(Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        let m = v(&[0.4, -2.0]);
        let s = neighborhood_samples(&m, 0.25, 64, 0);
        assert_eq!(classify_point(&h, &m, &s, 1e-10), PointClassification::Subimmersion(1));
        let q = map(&["x^2", "y"], &["x", "y"]);
        let m = v(&[0.0, 0.0]);
        let s = neighborhood_samples(&m, 0.25, 64, 0);
        assert_eq!(classify_point(q.as_ref(), &m, &s, 1e-10), PointClassification::General);
    }

    #[test]
    fn reduction_of_linear_map_is_zero() {
        let f = map(&["y"], &["x", "y"]);
        let red = lyapunov_schmidt(f, &v(&[0.0, 0.0]), &Default::default()).unwrap();
        assert_eq!(red.kernel_dim, 1);
        assert_eq!(red.cokernel_dim, 0);
        assert!(red.implicit_solution.eval(&v(&[0.3]))[0].abs() < 1e-15);
    }

    #[test]
    fn reduction_hand_example() {
        let f = map(&["y - x^2", "y"], &["x", "y"]);
        let red = lyapunov_schmidt(f, &v(&[0.0, 0.0]), &Default::default()).unwrap();
        for x in [0.1, 0.2, 0.5] {
            let x1 = v(&[x]);
            // x2 is the coimage coordinate, which equals y here.
            assert!((red.implicit_solution.eval(&x1)[0] - x * x / 2.0).abs() < 1e-12);
            let g = red.reduced_map.eval(&x1)[0];
            assert!((g + x * x / 2f64.sqrt()).abs() < 1e-12, "{g}");
        }
        assert!(red.agreement_residual <= 1e-8);
    }

    #[test]
    fn reduction_with_zero_jacobian_is_identity() {
        let f = map(&["l*x - x^3"], &["x", "l"]);
        let red = lyapunov_schmidt(Arc::clone(&f), &v(&[0.0, 0.0]), &Default::default()).unwrap();
        let p = v(&[0.2, -0.1]);
        assert!((red.reduced_map.eval(&p) - f.eval(&p)).norm() < 1e-15);
    }

    fn identity_chart(n: usize) -> Arc<LocalDiffeo> {
        Arc::new(
            LocalDiffeo::new(
                Arc::new(LinearMap::new(Matrix::identity(n, n))),
                Vector::zeros(n),
                NewtonSettings::default(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn relative_to_point_is_plain_normal_form() {
        let f = map(&["x + y^2", "y - x^2"], &["x", "y"]);
        let chart = SubmanifoldChart { chart: identity_chart(2), z_coords: vec![] };
        let rel = relative_normal_form(Arc::clone(&f), &v(&[0.0, 0.0]), &chart, &Default::default())
            .unwrap();
        let plain = normal_form_at(f, &v(&[0.0, 0.0]), &Default::default()).unwrap();
        assert_eq!(rel.normal_form.rank(), plain.rank());
        assert_eq!(rel.f_p.dim_out(), 0);
    }

    #[test]
    fn relative_to_axis() {
        let f = map(&["x", "y"], &["x", "y"]);
        let chart = SubmanifoldChart { chart: identity_chart(2), z_coords: vec![0] };
        let rel = relative_normal_form(f, &v(&[0.0, 0.0]), &chart, &Default::default()).unwrap();
        assert_eq!((rel.normal_form.kernel_dim(), rel.normal_form.cokernel_dim()), (1, 0));
        assert!(rel.preimage_samples > 0);
        let u = v(&[0.2, 0.0]);
        assert!((rel.f_p.eval(&u)[0] - 0.2).abs() < 1e-14);
    }

    #[test]
    fn relative_cusp_curve() {
        let f = map(&["x^2", "x^3"], &["x"]);
        let chart = SubmanifoldChart { chart: identity_chart(2), z_coords: vec![0] };
        let rel = relative_normal_form(f, &v(&[0.0]), &chart, &Default::default()).unwrap();
        assert_eq!(rel.normal_form.rank(), 0);
        let x = v(&[0.3]);
        assert!((rel.normal_form.fs(&x).unwrap()[0] - 0.027).abs() < 1e-15);
        assert!(rel.preimage_residual <= 1e-8);
    }
}
