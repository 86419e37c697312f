//! Local diffeomorphisms with Newton-realized inverses.

use std::fmt;
use std::sync::Arc;

use super::newton::newton_invert;
use super::{CalculusError, DifferentiableMap, NewtonSettings, SharedMap};
use crate::linear_core::{Matrix, Svd, Vector};
use crate::sampling::sphere_samples;

/// A square map that is invertible near `base`.
///
/// The inverse is either supplied explicitly or computed by Newton's method
/// started from the linearization at `base`.
#[derive(Clone)]
pub struct LocalDiffeo {
    forward: SharedMap,
    inverse: Option<SharedMap>,
    base: Vector,
    image_base: Vector,
    jacobian_inverse: Matrix,
    radius: f64,
    pub settings: NewtonSettings,
}

impl fmt::Debug for LocalDiffeo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LocalDiffeo")
            .field("dim", &self.forward.dim_in())
            .field("base", &self.base.as_slice())
            .field("radius", &self.radius)
            .field("explicit_inverse", &self.inverse.is_some())
            .finish()
    }
}

impl LocalDiffeo {
    pub fn new(
        forward: SharedMap,
        base: Vector,
        settings: NewtonSettings,
    ) -> Result<Self, CalculusError> {
        let n = forward.dim_in();
        if forward.dim_out() != n || base.len() != n {
            return Err(CalculusError::DimensionMismatch(
                "a local diffeomorphism needs a square map and a matching base point".to_string(),
            ));
        }
        let j = forward.jacobian(&base);
        let svd = Svd::new(&j);
        if n > 0 && (!(svd.max() > 0.0) || svd.min() <= settings.singular_ratio * svd.max()) {
            return Err(CalculusError::SingularJacobian { iteration: 0 });
        }
        let jacobian_inverse = if n == 0 {
            Matrix::zeros(0, 0)
        } else {
            j.try_inverse()
                .ok_or(CalculusError::SingularJacobian { iteration: 0 })?
        };
        let image_base = forward.eval(&base);
        if image_base.iter().any(|v| !v.is_finite()) {
            return Err(CalculusError::NonFinite);
        }
        Ok(Self {
            forward,
            inverse: None,
            base,
            image_base,
            jacobian_inverse,
            radius: f64::INFINITY,
            settings,
        })
    }

    /// Uses `inverse` instead of Newton's method.
    pub fn with_inverse(mut self, inverse: SharedMap) -> Self {
        self.inverse = Some(inverse);
        self
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    pub fn base(&self) -> &Vector {
        &self.base
    }

    pub fn image_base(&self) -> &Vector {
        &self.image_base
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn forward(&self) -> &SharedMap {
        &self.forward
    }

    pub fn has_explicit_inverse(&self) -> bool {
        self.inverse.is_some()
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        self.forward.eval(x)
    }

    pub fn invert(&self, y: &Vector) -> Result<Vector, CalculusError> {
        if let Some(inv) = &self.inverse {
            let x = inv.eval(y);
            return if x.iter().all(|v| v.is_finite()) {
                Ok(x)
            } else {
                Err(CalculusError::NonFinite)
            };
        }
        let x0 = &self.base + &self.jacobian_inverse * (y - &self.image_base);
        newton_invert(self.forward.as_ref(), y, &x0, &self.settings)
    }

    /// `‖inverse(forward(x)) − x‖`, infinite if the inverse fails.
    pub fn roundtrip_error(&self, x: &Vector) -> f64 {
        match self.invert(&self.apply(x)) {
            Ok(back) => (back - x).norm(),
            Err(_) => f64::INFINITY,
        }
    }

    /// Halves `requested` until 32 boundary samples round-trip within `10 · tol`.
    pub fn fit_radius(
        &mut self,
        requested: f64,
        min_radius: f64,
        seed: u64,
    ) -> Result<f64, CalculusError> {
        let mut r = requested;
        while r >= min_radius {
            if self.ball_roundtrips(r, seed) {
                self.radius = r;
                return Ok(r);
            }
            r *= 0.5;
        }
        Err(CalculusError::RadiusNotFound { min_radius })
    }

    fn ball_roundtrips(&self, r: f64, seed: u64) -> bool {
        let n = self.dim();
        if n == 0 {
            return true;
        }
        sphere_samples(n, r, 32, seed).iter().all(|d| {
            let x = &self.base + d;
            self.roundtrip_error(&x) <= 10.0 * self.settings.tol * x.norm().max(1.0)
        })
    }

    /// The inverse as a map in its own right.
    pub fn inverse_map(self: &Arc<Self>) -> InverseMap {
        InverseMap {
            diffeo: Arc::clone(self),
        }
    }
}

impl DifferentiableMap for LocalDiffeo {
    fn dim_in(&self) -> usize {
        self.dim()
    }
    fn dim_out(&self) -> usize {
        self.dim()
    }
    fn eval(&self, x: &Vector) -> Vector {
        self.forward.eval(x)
    }
    fn jacobian(&self, x: &Vector) -> Matrix {
        self.forward.jacobian(x)
    }
}

/// `y ↦ diffeo⁻¹(y)`. Evaluation failures yield NaN entries.
#[derive(Debug, Clone)]
pub struct InverseMap {
    diffeo: Arc<LocalDiffeo>,
}

impl DifferentiableMap for InverseMap {
    fn dim_in(&self) -> usize {
        self.diffeo.dim()
    }
    fn dim_out(&self) -> usize {
        self.diffeo.dim()
    }
    fn eval(&self, y: &Vector) -> Vector {
        self.diffeo
            .invert(y)
            .unwrap_or_else(|_| Vector::from_element(self.diffeo.dim(), f64::NAN))
    }
    fn jacobian(&self, y: &Vector) -> Matrix {
        if let Some(inv) = &self.diffeo.inverse {
            return inv.jacobian(y);
        }
        let n = self.diffeo.dim();
        let x = self.eval(y);
        self.diffeo
            .forward
            .jacobian(&x)
            .try_inverse()
            .unwrap_or_else(|| Matrix::from_element(n, n, f64::NAN))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{parse_expression_map, FnMap};
    use crate::sampling::ball_samples;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn newton_inverse_roundtrips() {
        let f = parse_expression_map(&["x + y^2", "y + sin(x)/2"], &names(&["x", "y"])).unwrap();
        let mut d =
            LocalDiffeo::new(Arc::new(f), Vector::zeros(2), NewtonSettings::default()).unwrap();
        let r = d.fit_radius(0.5, 1e-6, 3).unwrap();
        assert!(r > 0.0);
        for x in ball_samples(2, r, 100, 11) {
            assert!(d.roundtrip_error(&x) <= 1e-11);
        }
    }

    #[test]
    fn explicit_inverse_is_used() {
        let f = FnMap::new(1, 1, |x: &Vector| x * 2.0).shared();
        let g = FnMap::new(1, 1, |y: &Vector| y * 0.5).shared();
        let d = LocalDiffeo::new(f, Vector::zeros(1), NewtonSettings::default())
            .unwrap()
            .with_inverse(g);
        assert!(d.has_explicit_inverse());
        assert_eq!(d.invert(&Vector::from_element(1, 3.0)).unwrap()[0], 1.5);
    }

    #[test]
    fn singular_base_rejected() {
        let f = parse_expression_map(&["x^2"], &names(&["x"])).unwrap();
        assert!(matches!(
            LocalDiffeo::new(Arc::new(f), Vector::zeros(1), NewtonSettings::default()),
            Err(CalculusError::SingularJacobian { .. })
        ));
    }

    #[test]
    fn radius_shrinks_away_from_fold() {
        // x + x^2 folds at x = -1/2, so radius 4 cannot round-trip.
        let f = parse_expression_map(&["x + x^2"], &names(&["x"])).unwrap();
        let mut d =
            LocalDiffeo::new(Arc::new(f), Vector::zeros(1), NewtonSettings::default()).unwrap();
        let r = d.fit_radius(4.0, 1e-6, 0).unwrap();
        assert!(r < 0.5);
    }

    #[test]
    fn inverse_map_jacobian() {
        let f = parse_expression_map(&["x + x^3"], &names(&["x"])).unwrap();
        let d = Arc::new(
            LocalDiffeo::new(Arc::new(f), Vector::zeros(1), NewtonSettings::default()).unwrap(),
        );
        let inv = d.inverse_map();
        let y = Vector::from_element(1, 2.0);
        // x = 1 solves x + x³ = 2, and the inverse has derivative 1/(1 + 3x²) = 1/4.
        assert!((inv.eval(&y)[0] - 1.0).abs() < 1e-13);
        assert!((inv.jacobian(&y)[(0, 0)] - 0.25).abs() < 1e-12);
    }
}
