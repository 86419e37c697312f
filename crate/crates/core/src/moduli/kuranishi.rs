//! Kuranishi charts and the deformation complex.

use serde::Serialize;

use super::ModuliError;
use crate::calculus::{gauss_newton, jacobian_fd, DifferentiableMap, NewtonSettings, SharedMap};
use crate::linear_core::{
    chain_uniform_regularity, spectral_norm, to_rows, ChainFamily, CheckTolerances, Matrix,
    Subspace, Vector,
};
use crate::sampling::ball_samples;
use crate::symmetry::{
    equivariant_normal_form, stabilizer_of, EquivariantNormalForm, EquivariantSettings,
    GroupAction, LinearRep, Stabilizer,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KuranishiSettings {
    pub equivariant: EquivariantSettings,
    /// Solutions of `f = f(m)` checked against the chart.
    pub correspondence_samples: usize,
    pub correspondence_tol: f64,
    /// Samples for the obstruction map checks.
    pub obstruction_samples: usize,
    pub obstruction_equivariance_tol: f64,
    /// Bound on `‖Ds(0)‖`.
    pub fd_tol: f64,
}

impl Default for KuranishiSettings {
    fn default() -> Self {
        Self {
            equivariant: EquivariantSettings::default(),
            correspondence_samples: 50,
            correspondence_tol: 1e-8,
            obstruction_samples: 100,
            obstruction_equivariance_tol: 1e-8,
            fd_tol: 1e-6,
        }
    }
}

/// Chart-coordinate images of sampled solutions of `f = f(m)` on the slice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correspondence {
    pub samples: usize,
    /// `max ‖u2‖` over the samples.
    pub max_image_component: f64,
    /// `max ‖s(u1)‖` over the samples.
    pub max_obstruction: f64,
}

/// A local model `s⁻¹(0) / H` of the solution set near `m`.
#[derive(Debug, Clone)]
pub struct KuranishiChart {
    /// Radius of the ball `V` in `E`.
    pub radius: f64,
    /// `E`, the kernel, in slice coordinates.
    pub kernel: Subspace,
    /// `F`, the cokernel complement, in the target.
    pub cokernel: Subspace,
    pub stabilizer: Stabilizer,
    pub kernel_rep: LinearRep,
    pub cokernel_rep: LinearRep,
    /// `s(x1) = f_s(x1, 0)`.
    pub obstruction: SharedMap,
    pub normal_form: EquivariantNormalForm,
    pub obstruction_at_zero: f64,
    pub obstruction_jacobian_norm: f64,
    pub obstruction_equivariance_residual: f64,
    /// `max ‖s‖` over the obstruction samples.
    pub obstruction_sup: f64,
    pub correspondence: Correspondence,
}

impl KuranishiChart {
    pub fn e_dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn f_dim(&self) -> usize {
        self.cokernel.dim()
    }

    /// Lie algebra dimension of `H`.
    pub fn h_dim(&self) -> usize {
        self.stabilizer.lie_dim
    }
}

/// `dim E − dim F − dim H`.
pub fn virtual_dimension(chart: &KuranishiChart) -> i64 {
    chart.e_dim() as i64 - chart.f_dim() as i64 - chart.h_dim() as i64
}

/// Builds a Kuranishi chart at `m` from the equivariant normal form on a slice.
pub fn kuranishi_chart(
    f: SharedMap,
    m: &Vector,
    action: &GroupAction,
    settings: &KuranishiSettings,
) -> Result<KuranishiChart, ModuliError> {
    let enf = equivariant_normal_form(f, m, action, &settings.equivariant)?;
    let fp = &enf.fixed_point;
    let nf = &fp.normal_form;
    let (k, c) = (nf.kernel_dim(), nf.cokernel_dim());
    let radius = nf.radius;
    let seed = settings.equivariant.normal_form.seed;
    let s = nf.reduced_singular_part();

    let s0 = s.eval(&Vector::zeros(k)).norm();
    let ds = if k == 0 || c == 0 {
        0.0
    } else {
        let h = settings.equivariant.normal_form.dfs_step.min(radius / 4.0);
        jacobian_fd(s.as_ref(), &Vector::zeros(k), Some(h))?.norm()
    };
    if !(s0 <= settings.equivariant.normal_form.fs_zero_tol) {
        return Err(ModuliError::ObstructionCheck {
            check: "s(0) = 0".into(),
            residual: s0,
        });
    }
    if !(ds <= settings.fd_tol) {
        return Err(ModuliError::ObstructionCheck {
            check: "Ds(0) = 0".into(),
            residual: ds,
        });
    }

    let gens = fp.kernel_rep.test_elements();
    let mut equivariance: f64 = 0.0;
    let mut sup: f64 = 0.0;
    for x in ball_samples(k, 0.5 * radius, settings.obstruction_samples, seed ^ 0x0b5) {
        let sx = s.eval(&x);
        sup = sup.max(sx.iter().fold(0.0, |a: f64, v| a.max(v.abs())));
        for g in &gens {
            let r = (fp.cokernel_rep.act(g, &sx) - s.eval(&fp.kernel_rep.act(g, &x))).norm();
            if !(r <= settings.obstruction_equivariance_tol) {
                return Err(ModuliError::ObstructionCheck {
                    check: "s equivariance".into(),
                    residual: r,
                });
            }
            equivariance = equivariance.max(r);
        }
    }

    let correspondence = correspondence_check(&enf, settings)?;
    Ok(KuranishiChart {
        radius,
        kernel: nf.linear.kernel.clone(),
        cokernel: Subspace::new(
            nf.charts.split.target_dim(),
            nf.charts.split.b_target.columns(0, c).into_owned(),
        ),
        stabilizer: enf.slice.stabilizer.clone(),
        kernel_rep: fp.kernel_rep.clone(),
        cokernel_rep: fp.cokernel_rep.clone(),
        obstruction: s,
        obstruction_at_zero: s0,
        obstruction_jacobian_norm: ds,
        obstruction_equivariance_residual: equivariance,
        obstruction_sup: sup,
        correspondence,
        normal_form: enf,
    })
}

/// Solves `f = f(m)` on the slice from quasi-random starts and checks that the
/// chart sends every solution to `{(x1, 0) : s(x1) = 0}`.
fn correspondence_check(
    enf: &EquivariantNormalForm,
    settings: &KuranishiSettings,
) -> Result<Correspondence, ModuliError> {
    let nf = &enf.fixed_point.normal_form;
    let d = enf.slice.dim();
    let radius = nf.radius;
    let target = nf.base_value.clone();
    let newton = NewtonSettings {
        max_iter: 100,
        ..settings.equivariant.normal_form.newton
    };
    let starts = ball_samples(
        d,
        0.5 * radius,
        8 * settings.correspondence_samples,
        settings.equivariant.normal_form.seed ^ 0xc0,
    );
    let s = nf.reduced_singular_part();
    let mut out = Correspondence {
        samples: 0,
        max_image_component: 0.0,
        max_obstruction: 0.0,
    };
    for t0 in starts {
        if out.samples >= settings.correspondence_samples {
            break;
        }
        let Ok(report) = gauss_newton(enf.slice_map.as_ref(), &target, &t0, &newton) else {
            continue;
        };
        if report.x.norm() > 0.5 * radius {
            continue;
        }
        let u = nf.charts.kappa(&report.x);
        let (u1, u2) = nf.split_chart_point(&u);
        let su = s.eval(&u1).norm();
        let u2n = u2.norm();
        if !(u2n <= settings.correspondence_tol && su <= settings.correspondence_tol) {
            return Err(ModuliError::CorrespondenceFailure {
                sample: report.x.iter().copied().collect(),
                residual: u2n.max(su),
            });
        }
        out.samples += 1;
        out.max_image_component = out.max_image_component.max(u2n);
        out.max_obstruction = out.max_obstruction.max(su);
    }
    Ok(out)
}

/// The chain `0 → 𝔤_μ → T_mM → T_μN → 0` of infinitesimal action and derivative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeformationComplex {
    /// Dimensions of `𝔤_μ`, `T_mM`, `T_μN`.
    pub dims: [usize; 3],
    /// Orbit map `ξ ↦ ξ · m`, as rows.
    pub orbit_map: Vec<Vec<f64>>,
    /// `Df(m)`, as rows.
    pub derivative: Vec<Vec<f64>>,
    /// `‖Df(m) ∘ orbit map‖`.
    pub composition_residual: f64,
    pub homology: [usize; 3],
    /// `h₀ − h₁ + h₂`.
    pub euler_characteristic: i64,
}

impl DeformationComplex {
    /// `dim 𝔤_μ − dim T_mM + dim T_μN`, which must equal the Euler characteristic.
    pub fn dimension_alternating_sum(&self) -> i64 {
        self.dims[0] as i64 - self.dims[1] as i64 + self.dims[2] as i64
    }
}

pub fn deformation_complex(
    f: &dyn DifferentiableMap,
    m: &Vector,
    action: &GroupAction,
) -> Result<DeformationComplex, ModuliError> {
    let mu = f.eval(m);
    let value_stabilizer = stabilizer_of(&action.target, &mu, 1e-9);
    let rep = action.domain.restrict(&value_stabilizer.subgroup)?;
    let orbit = rep.orbit_tangent(m);
    let j = f.jacobian(m);
    let dims = [orbit.ncols(), f.dim_in(), f.dim_out()];
    let prod: Matrix = &j * &orbit;
    let composition_residual = if prod.is_empty() { 0.0 } else { spectral_norm(&prod) };
    let chain = ChainFamily::constant(dims.to_vec(), vec![orbit.clone(), j.clone()]);
    let cert = chain_uniform_regularity(&chain, &[vec![]], CheckTolerances::default())?;
    let h = &cert.decomposition.homology_dims;
    let homology = [h[0], h[1], h[2]];
    Ok(DeformationComplex {
        dims,
        orbit_map: to_rows(&orbit),
        derivative: to_rows(&j),
        composition_residual,
        homology,
        euler_characteristic: homology[0] as i64 - homology[1] as i64 + homology[2] as i64,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::calculus::parse_expression_map;
    use crate::moduli::gauge::DiscreteComplex;
    use crate::symmetry::{generate_matrix_group, CompactGroup};

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn pitchfork() -> (SharedMap, GroupAction) {
        let f: SharedMap =
            Arc::new(parse_expression_map(&["l*x - x^3"], &names(&["x", "l"])).unwrap());
        let (g, dom, tgt) = generate_matrix_group(&[(
            Matrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]),
            Matrix::from_element(1, 1, -1.0),
        )])
        .unwrap();
        let g = Arc::new(CompactGroup::Finite(g));
        let a = GroupAction::new(
            LinearRep::finite(Arc::clone(&g), dom).unwrap(),
            LinearRep::finite(g, tgt).unwrap(),
        )
        .unwrap();
        (f, a)
    }

    #[test]
    fn square_map_chart() {
        let f: SharedMap = Arc::new(parse_expression_map(&["x^2"], &names(&["x"])).unwrap());
        let a = GroupAction::trivial(1, 1);
        let ch = kuranishi_chart(Arc::clone(&f), &Vector::zeros(1), &a, &Default::default()).unwrap();
        assert_eq!((ch.e_dim(), ch.f_dim(), ch.h_dim()), (1, 1, 0));
        assert_eq!(virtual_dimension(&ch), 0);
        let dc = deformation_complex(f.as_ref(), &Vector::zeros(1), &a).unwrap();
        assert_eq!(dc.homology, [0, 1, 1]);
        assert_eq!(dc.euler_characteristic, -virtual_dimension(&ch));
    }

    #[test]
    fn pitchfork_chart() {
        let (f, a) = pitchfork();
        let ch = kuranishi_chart(Arc::clone(&f), &Vector::zeros(2), &a, &Default::default()).unwrap();
        assert_eq!((ch.e_dim(), ch.f_dim(), ch.h_dim()), (2, 1, 0));
        assert_eq!(virtual_dimension(&ch), 1);
        assert!(ch.correspondence.samples > 10);
        assert!(ch.obstruction_equivariance_residual <= 1e-8);
        let dc = deformation_complex(f.as_ref(), &Vector::zeros(2), &a).unwrap();
        assert_eq!(dc.homology, [0, 2, 1]);
        assert_eq!(dc.euler_characteristic, -1);
    }

    #[test]
    fn flat_torus_chart() {
        let c = DiscreteComplex::rose_torus();
        let f: SharedMap = Arc::new(c.curvature_map());
        let a = c.gauge_action().unwrap();
        let ch = kuranishi_chart(Arc::clone(&f), &Vector::zeros(2), &a, &Default::default()).unwrap();
        assert_eq!((ch.e_dim(), ch.f_dim(), ch.h_dim()), (2, 1, 1));
        assert_eq!(virtual_dimension(&ch), 0);
        assert!(ch.obstruction_sup <= 1e-10);
        let dc = deformation_complex(f.as_ref(), &Vector::zeros(2), &a).unwrap();
        assert_eq!(dc.homology, [1, 2, 1]);
        assert_eq!(dc.euler_characteristic, 0);
    }

    #[test]
    fn flat_wedge_is_rigid() {
        let c = DiscreteComplex::wedge_sphere();
        let f: SharedMap = Arc::new(c.curvature_map());
        let a = c.gauge_action().unwrap();
        let ch = kuranishi_chart(Arc::clone(&f), &Vector::zeros(2), &a, &Default::default()).unwrap();
        assert_eq!((ch.e_dim(), ch.f_dim(), ch.h_dim()), (0, 1, 1));
        assert_eq!(virtual_dimension(&ch), -2);
        let dc = deformation_complex(f.as_ref(), &Vector::zeros(2), &a).unwrap();
        assert_eq!(dc.homology, [1, 0, 1]);
        assert_eq!(dc.euler_characteristic, 2);
        assert_eq!(dc.dimension_alternating_sum(), 2);
    }

    #[test]
    fn circle_cubic_complex() {
        let f = parse_expression_map(&["x*(x^2+y^2)", "y*(x^2+y^2)"], &names(&["x", "y"])).unwrap();
        let g = Arc::new(CompactGroup::torus(1).unwrap());
        let a = GroupAction::new(
            LinearRep::torus(Arc::clone(&g), vec![vec![1]], 0, None).unwrap(),
            LinearRep::torus(g, vec![vec![1]], 0, None).unwrap(),
        )
        .unwrap();
        let dc = deformation_complex(&f, &Vector::zeros(2), &a).unwrap();
        assert_eq!(dc.homology, [1, 2, 2]);
        let ch = kuranishi_chart(Arc::new(f), &Vector::zeros(2), &a, &Default::default()).unwrap();
        assert_eq!(virtual_dimension(&ch), -dc.euler_characteristic);
    }
}
