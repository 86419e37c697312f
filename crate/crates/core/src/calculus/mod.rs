//! Differentiable maps between coordinate spaces and constructive inverses.

mod diffeo;
mod dual;
mod expr;
mod newton;

pub use diffeo::{InverseMap, LocalDiffeo};
pub use dual::Dual;
pub use expr::{parse_expression, parse_expression_map, Expr, ExprMap};
pub use newton::{
    gauss_newton, identity_map, newton_invert, newton_solve, parametrized_newton, NewtonReport,
    NewtonSettings,
};

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::linear_core::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalculusError {
    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("undeclared variable `{0}`")]
    UndeclaredVariable(String),
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("division by zero")]
    DivisionByZero,
    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("Newton iteration did not converge (last residual {:.3e})", residuals.last().copied().unwrap_or(f64::NAN))]
    NoConvergence { residuals: Vec<f64> },
    #[error("point lies outside the domain box")]
    OutOfDomain,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no validity radius above {min_radius:.3e} passed the round-trip test")]
    RadiusNotFound { min_radius: f64 },
}

/// An axis-aligned box `|x_i − center_i| ≤ half_width_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    pub center: Vector,
    pub half_width: Vector,
}

impl DomainBox {
    pub fn cube(center: Vector, half_width: f64) -> Self {
        let n = center.len();
        Self {
            center,
            half_width: Vector::from_element(n, half_width),
        }
    }

    pub fn contains(&self, x: &Vector) -> bool {
        x.len() == self.center.len()
            && x
                .iter()
                .zip(self.center.iter().zip(self.half_width.iter()))
                .all(|(xi, (c, h))| (xi - c).abs() <= h * (1.0 + 1e-12))
    }
}

/// A smooth map `R^dim_in → R^dim_out`.
///
/// The default Jacobian is a central finite difference.
pub trait DifferentiableMap: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval(&self, x: &Vector) -> Vector;

    fn jacobian(&self, x: &Vector) -> Matrix {
        fd_jacobian_raw(self, x, default_step(x))
    }

    fn domain(&self) -> Option<&DomainBox> {
        None
    }
}

pub type SharedMap = Arc<dyn DifferentiableMap>;

impl fmt::Debug for dyn DifferentiableMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DifferentiableMap(R^{} -> R^{})", self.dim_in(), self.dim_out())
    }
}

impl<T: DifferentiableMap + ?Sized> DifferentiableMap for Arc<T> {
    fn dim_in(&self) -> usize {
        (**self).dim_in()
    }
    fn dim_out(&self) -> usize {
        (**self).dim_out()
    }
    fn eval(&self, x: &Vector) -> Vector {
        (**self).eval(x)
    }
    fn jacobian(&self, x: &Vector) -> Matrix {
        (**self).jacobian(x)
    }
    fn domain(&self) -> Option<&DomainBox> {
        (**self).domain()
    }
}

/// Default finite-difference step `ε^{1/3} · max(1, ‖x‖)`.
pub fn default_step(x: &Vector) -> f64 {
    f64::EPSILON.cbrt() * x.norm().max(1.0)
}

fn fd_jacobian_raw<F: DifferentiableMap + ?Sized>(f: &F, x: &Vector, h: f64) -> Matrix {
    let n = f.dim_in();
    let mut j = Matrix::zeros(f.dim_out(), n);
    let mut xp = x.clone();
    for i in 0..n {
        let xi = x[i];
        xp[i] = xi + h;
        let fp = f.eval(&xp);
        xp[i] = xi - h;
        let fm = f.eval(&xp);
        xp[i] = xi;
        j.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    j
}

/// Central-difference Jacobian with step `h` (default [`default_step`]).
pub fn jacobian_fd<F: DifferentiableMap + ?Sized>(
    f: &F,
    x: &Vector,
    h: Option<f64>,
) -> Result<Matrix, CalculusError> {
    if x.len() != f.dim_in() {
        return Err(CalculusError::DimensionMismatch(format!(
            "point has {} coordinates, map expects {}",
            x.len(),
            f.dim_in()
        )));
    }
    let j = fd_jacobian_raw(f, x, h.unwrap_or_else(|| default_step(x)));
    if j.iter().all(|v| v.is_finite()) {
        Ok(j)
    } else {
        Err(CalculusError::NonFinite)
    }
}

type EvalFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
type JacFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;

/// A map given by closures. Without a Jacobian closure it falls back to finite differences.
#[derive(Clone)]
pub struct FnMap {
    dim_in: usize,
    dim_out: usize,
    eval: EvalFn,
    jac: Option<JacFn>,
    domain: Option<DomainBox>,
}

impl fmt::Debug for FnMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnMap")
            .field("dim_in", &self.dim_in)
            .field("dim_out", &self.dim_out)
            .field("exact_jacobian", &self.jac.is_some())
            .finish()
    }
}

impl FnMap {
    pub fn new(
        dim_in: usize,
        dim_out: usize,
        eval: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim_in,
            dim_out,
            eval: Arc::new(eval),
            jac: None,
            domain: None,
        }
    }

    pub fn with_jacobian(
        mut self,
        jac: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        self.jac = Some(Arc::new(jac));
        self
    }

    pub fn with_domain(mut self, domain: DomainBox) -> Self {
        self.domain = Some(domain);
        self
    }

    pub fn shared(self) -> SharedMap {
        Arc::new(self)
    }
}

impl DifferentiableMap for FnMap {
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.dim_out
    }
    fn eval(&self, x: &Vector) -> Vector {
        (self.eval)(x)
    }
    fn jacobian(&self, x: &Vector) -> Matrix {
        match &self.jac {
            Some(j) => j(x),
            None => fd_jacobian_raw(self, x, default_step(x)),
        }
    }
    fn domain(&self) -> Option<&DomainBox> {
        self.domain.as_ref()
    }
}

/// The affine map `x ↦ A x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    pub matrix: Matrix,
    pub offset: Vector,
}

impl LinearMap {
    pub fn new(matrix: Matrix) -> Self {
        let m = matrix.nrows();
        Self {
            matrix,
            offset: Vector::zeros(m),
        }
    }

    pub fn affine(matrix: Matrix, offset: Vector) -> Self {
        assert_eq!(matrix.nrows(), offset.len());
        Self { matrix, offset }
    }
}

impl DifferentiableMap for LinearMap {
    fn dim_in(&self) -> usize {
        self.matrix.ncols()
    }
    fn dim_out(&self) -> usize {
        self.matrix.nrows()
    }
    fn eval(&self, x: &Vector) -> Vector {
        &self.matrix * x + &self.offset
    }
    fn jacobian(&self, _x: &Vector) -> Matrix {
        self.matrix.clone()
    }
}

/// Largest entrywise deviation `|a − b| / (1 + |b|)`.
pub fn mixed_error(a: &Matrix, b: &Matrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / (1.0 + y.abs()))
        .fold(0.0, f64::max)
}
