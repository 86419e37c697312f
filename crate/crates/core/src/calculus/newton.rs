//! Damped Newton and Gauss-Newton iterations.

use super::{CalculusError, DifferentiableMap, FnMap};
use crate::linear_core::{Matrix, Svd, Vector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    /// Stop once `‖f(x) − y‖ ≤ tol · max(1, ‖y‖)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Step halvings allowed when the residual does not decrease.
    pub max_halvings: usize,
    /// Jacobians with `σ_min / σ_max` at or below this count as singular.
    pub singular_ratio: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
            max_halvings: 20,
            singular_ratio: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub x: Vector,
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
}

enum StepKind {
    Newton,
    MinNorm,
}

fn step(j: &Matrix, r: &Vector, kind: &StepKind, settings: &NewtonSettings, iteration: usize)
    -> Result<Vector, CalculusError> {
    let svd = Svd::new(j);
    let smax = svd.max();
    match kind {
        StepKind::Newton => {
            if j.nrows() != j.ncols() {
                return Err(CalculusError::DimensionMismatch(
                    "Newton needs a square Jacobian".to_string(),
                ));
            }
            if j.nrows() == 0 {
                return Ok(Vector::zeros(0));
            }
            if !(smax > 0.0) || svd.min() <= settings.singular_ratio * smax {
                return Err(CalculusError::SingularJacobian { iteration });
            }
            j.clone()
                .lu()
                .solve(&(-r))
                .ok_or(CalculusError::SingularJacobian { iteration })
        }
        StepKind::MinNorm => {
            if !(smax > 0.0) {
                return Err(CalculusError::SingularJacobian { iteration });
            }
            let rank = svd.rank(1e-10);
            let ur = svd.u.columns(0, rank).transpose() * r;
            let scaled = Vector::from_iterator(
                rank,
                ur.iter().zip(&svd.singular_values).map(|(c, s)| -c / s),
            );
            Ok(svd.v.columns(0, rank) * scaled)
        }
    }
}

fn iterate<F: DifferentiableMap + ?Sized>(
    f: &F,
    y: &Vector,
    x0: &Vector,
    settings: &NewtonSettings,
    kind: StepKind,
) -> Result<NewtonReport, CalculusError> {
    if x0.len() != f.dim_in() || y.len() != f.dim_out() {
        return Err(CalculusError::DimensionMismatch(format!(
            "map is {}→{}, got point of length {} and target of length {}",
            f.dim_in(),
            f.dim_out(),
            x0.len(),
            y.len()
        )));
    }
    let threshold = settings.tol * y.norm().max(1.0);
    let mut x = x0.clone();
    let mut r = f.eval(&x) - y;
    let mut rn = r.norm();
    if !rn.is_finite() {
        return Err(CalculusError::NonFinite);
    }
    let mut history = vec![rn];
    for it in 0..settings.max_iter {
        if rn <= threshold {
            // One polishing step pushes the residual down to roundoff.
            if let Ok(dx) = step(&f.jacobian(&x), &r, &kind, settings, it) {
                let xp = &x + dx;
                let rp = f.eval(&xp) - y;
                if rp.norm() < rn {
                    x = xp;
                    r = rp;
                    rn = r.norm();
                }
            }
            history.push(rn);
            return Ok(NewtonReport {
                x,
                iterations: it,
                residual: rn,
                history,
            });
        }
        let dx = step(&f.jacobian(&x), &r, &kind, settings, it)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=settings.max_halvings {
            let xt = &x + &dx * t;
            let rt = f.eval(&xt) - y;
            let rtn = rt.norm();
            if rtn.is_finite() && rtn < rn {
                x = xt;
                r = rt;
                rn = rtn;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        history.push(rn);
        if !accepted {
            return Err(CalculusError::NoConvergence { residuals: history });
        }
    }
    if rn <= threshold {
        return Ok(NewtonReport {
            x,
            iterations: settings.max_iter,
            residual: rn,
            history,
        });
    }
    Err(CalculusError::NoConvergence { residuals: history })
}

/// Solves `f(x) = y` for square `f` from the initial guess `x0`.
pub fn newton_solve<F: DifferentiableMap + ?Sized>(
    f: &F,
    y: &Vector,
    x0: &Vector,
    settings: &NewtonSettings,
) -> Result<NewtonReport, CalculusError> {
    iterate(f, y, x0, settings, StepKind::Newton)
}

/// [`newton_solve`] returning only the solution.
pub fn newton_invert<F: DifferentiableMap + ?Sized>(
    f: &F,
    y: &Vector,
    x0: &Vector,
    settings: &NewtonSettings,
) -> Result<Vector, CalculusError> {
    newton_solve(f, y, x0, settings).map(|r| r.x)
}

/// Gauss-Newton with minimum-norm steps; suits under- and overdetermined systems.
pub fn gauss_newton<F: DifferentiableMap + ?Sized>(
    f: &F,
    y: &Vector,
    x0: &Vector,
    settings: &NewtonSettings,
) -> Result<NewtonReport, CalculusError> {
    iterate(f, y, x0, settings, StepKind::MinNorm)
}

/// Solves `f(p, x) = y` for `x` with the parameter `p` frozen.
///
/// The input of `f` is the concatenation `(p, x)`. If `f` declares a domain box,
/// `p` must lie in its parameter part.
pub fn parametrized_newton<F: DifferentiableMap + ?Sized>(
    f: &F,
    p: &Vector,
    y: &Vector,
    x0: &Vector,
    settings: &NewtonSettings,
) -> Result<Vector, CalculusError> {
    let k = p.len();
    if k + x0.len() != f.dim_in() {
        return Err(CalculusError::DimensionMismatch(format!(
            "parameter and unknown have {} coordinates, map expects {}",
            k + x0.len(),
            f.dim_in()
        )));
    }
    if let Some(b) = f.domain() {
        let inside = (0..k).all(|i| (p[i] - b.center[i]).abs() <= b.half_width[i] * (1.0 + 1e-12));
        if !inside {
            return Err(CalculusError::OutOfDomain);
        }
    }
    let n = x0.len();
    let join = |x: &Vector| {
        let mut z = Vector::zeros(k + n);
        z.rows_mut(0, k).copy_from(p);
        z.rows_mut(k, n).copy_from(x);
        z
    };
    // Borrowed closures cannot be stored in FnMap, so the partial map is built locally.
    struct Partial<'a, F: ?Sized, J> {
        f: &'a F,
        join: J,
        k: usize,
        n: usize,
    }
    impl<F: DifferentiableMap + ?Sized, J: Fn(&Vector) -> Vector + Send + Sync> DifferentiableMap
        for Partial<'_, F, J>
    {
        fn dim_in(&self) -> usize {
            self.n
        }
        fn dim_out(&self) -> usize {
            self.f.dim_out()
        }
        fn eval(&self, x: &Vector) -> Vector {
            self.f.eval(&(self.join)(x))
        }
        fn jacobian(&self, x: &Vector) -> Matrix {
            self.f.jacobian(&(self.join)(x)).columns(self.k, self.n).into_owned()
        }
    }
    let partial = Partial { f, join, k, n };
    newton_invert(&partial, y, x0, settings)
}

/// The identity map on `R^n`, mostly useful in tests.
pub fn identity_map(n: usize) -> FnMap {
    FnMap::new(n, n, |x: &Vector| x.clone()).with_jacobian(move |_| Matrix::identity(n, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{parse_expression_map, DomainBox};

    fn scalar(src: &str, vars: &[&str]) -> crate::calculus::ExprMap {
        let v: Vec<String> = vars.iter().map(|s| s.to_string()).collect();
        parse_expression_map(&[src], &v).unwrap()
    }

    fn bisect(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if g(a) * g(m) <= 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn identity_in_one_step() {
        let f = identity_map(3);
        let y = Vector::from_vec(vec![1.0, -2.0, 3.0]);
        let r = newton_solve(&f, &y, &Vector::zeros(3), &NewtonSettings::default()).unwrap();
        assert_eq!(r.x, y);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn cubic_matches_bisection() {
        let f = scalar("x + x^3", &["x"]);
        let x = newton_invert(
            &f,
            &Vector::from_element(1, 0.1),
            &Vector::zeros(1),
            &NewtonSettings::default(),
        )
        .unwrap();
        let oracle = bisect(|t| t + t * t * t - 0.1, 0.0, 1.0);
        assert!((x[0] - oracle).abs() < 1e-14);
    }

    #[test]
    fn negative_square_fails() {
        let f = scalar("x^2", &["x"]);
        let r = newton_invert(
            &f,
            &Vector::from_element(1, -1.0),
            &Vector::from_element(1, 1.0),
            &NewtonSettings::default(),
        );
        assert!(matches!(
            r,
            Err(CalculusError::SingularJacobian { .. }) | Err(CalculusError::NoConvergence { .. })
        ));
    }

    #[test]
    fn parametrized_shift() {
        let f = scalar("x - p", &["p", "x"]);
        let x = parametrized_newton(
            &f,
            &Vector::from_element(1, 0.3),
            &Vector::zeros(1),
            &Vector::zeros(1),
            &NewtonSettings::default(),
        )
        .unwrap();
        assert!((x[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn parametrized_quadratic_matches_formula() {
        let f = scalar("x + p*x^2", &["p", "x"]);
        let (p, y) = (0.1, 0.2);
        let x = parametrized_newton(
            &f,
            &Vector::from_element(1, p),
            &Vector::from_element(1, y),
            &Vector::zeros(1),
            &NewtonSettings::default(),
        )
        .unwrap();
        let oracle = (-1.0 + (1.0 + 4.0 * p * y).sqrt()) / (2.0 * p);
        assert!((x[0] - oracle).abs() < 1e-14);
        assert!((x[0] - 0.196).abs() < 1e-3);
    }

    #[test]
    fn parametrized_rejects_parameter_outside_box() {
        let f = scalar("x - p", &["p", "x"]).with_domain(DomainBox::cube(Vector::zeros(2), 1.0));
        let r = parametrized_newton(
            &f,
            &Vector::from_element(1, 2.0),
            &Vector::zeros(1),
            &Vector::zeros(1),
            &NewtonSettings::default(),
        );
        assert_eq!(r.unwrap_err(), CalculusError::OutOfDomain);
    }

    #[test]
    fn gauss_newton_projects_onto_circle() {
        let f = scalar("x^2 + y^2", &["x", "y"]);
        let r = gauss_newton(
            &f,
            &Vector::from_element(1, 1.0),
            &Vector::from_vec(vec![0.6, 0.6]),
            &NewtonSettings::default(),
        )
        .unwrap();
        assert!((r.x.norm() - 1.0).abs() < 1e-12);
        // Minimum-norm steps are radial from a point on the diagonal.
        assert!((r.x[0] - r.x[1]).abs() < 1e-12);
    }
}
