//! Equivariant normal forms at fixed points and along orbits.

use std::sync::Arc;

use serde::Serialize;

use super::group::GroupElement;
use super::orbit::{stabilizer_of, Stabilizer};
use super::rep::{invariant_complement, GroupAction, LinearRep};
use super::slice::{linear_slice, Slice};
use super::SymmetryError;
use crate::calculus::{DifferentiableMap, FnMap, SharedMap};
use crate::linear_core::{factorize_regular, Matrix, Vector};
use crate::normal_form::{
    classify_point, neighborhood_samples, normal_form_with_splitting, NormalFormData,
    NormalFormSettings, PointClassification, Splitting,
};
use crate::sampling::ball_samples;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquivariantSettings {
    pub normal_form: NormalFormSettings,
    /// Samples for every equivariance check.
    pub samples: usize,
    /// Equivariance of the input map, relative to `max(1, ‖f(x)‖)`.
    pub input_tol: f64,
    /// Equivariance of the singular part.
    pub fs_tol: f64,
    /// Invariance of kernel, coimage complement, image and cokernel complement.
    pub invariance_tol: f64,
    /// Displacement of the base point under the group.
    pub fixed_point_tol: f64,
}

impl Default for EquivariantSettings {
    fn default() -> Self {
        Self {
            normal_form: NormalFormSettings::default(),
            samples: 100,
            input_tol: 1e-8,
            fs_tol: 1e-8,
            invariance_tol: 1e-9,
            fixed_point_tol: 1e-9,
        }
    }
}

/// A normal form whose charts intertwine the group actions.
#[derive(Debug, Clone)]
pub struct EquivariantNormalFormData {
    pub normal_form: NormalFormData,
    pub action: GroupAction,
    /// The action on the kernel `E`, in kernel coordinates.
    pub kernel_rep: LinearRep,
    /// The action on the cokernel complement `F`, in its coordinates.
    pub cokernel_rep: LinearRep,
    /// The linear action in chart coordinates `u = (u1, u2)`.
    pub chart_rep: LinearRep,
    pub input_equivariance_residual: f64,
    /// `max ‖ρ_F(g) f_s(u) − f_s(ρ(g) u)‖`.
    pub fs_equivariance_residual: f64,
    /// Off-diagonal block size of the actions in adapted bases.
    pub subspace_invariance_residual: f64,
    /// Invariance residual of the two averaged complements.
    pub complement_invariance_residual: f64,
    pub samples: usize,
}

impl EquivariantNormalFormData {
    pub fn kernel_dim(&self) -> usize {
        self.normal_form.kernel_dim()
    }

    pub fn cokernel_dim(&self) -> usize {
        self.normal_form.cokernel_dim()
    }
}

fn off_diagonal(m: &Matrix, k: usize) -> f64 {
    let n = m.nrows();
    if k == 0 || k == n {
        return 0.0;
    }
    let a = m.view((0, k), (k, n - k)).amax();
    let b = m.view((k, 0), (n - k, k)).amax();
    a.max(b)
}

fn rows(m: &Matrix, count: usize) -> Matrix {
    m.rows(0, count).into_owned()
}

/// The equivariant normal form at a point fixed by the whole acting group.
///
/// Coimage and cokernel complements are averaged instead of orthogonal, which
/// makes the charts and `f_s` equivariant.
pub fn equivariant_normal_form_fixed_point(
    f: SharedMap,
    m: &Vector,
    action: &GroupAction,
    settings: &EquivariantSettings,
) -> Result<EquivariantNormalFormData, SymmetryError> {
    let (n, mm) = (f.dim_in(), f.dim_out());
    if action.domain.dim() != n || action.target.dim() != mm || m.len() != n {
        return Err(SymmetryError::DimensionMismatch(format!(
            "map R^{n} → R^{mm} with actions on R^{} and R^{}",
            action.domain.dim(),
            action.target.dim()
        )));
    }
    let gens = action.domain.test_elements();
    let fixed = gens
        .iter()
        .map(|g| (action.domain.act(g, m) - m).norm())
        .fold(0.0, f64::max);
    if fixed > settings.fixed_point_tol * m.norm().max(1.0) {
        return Err(SymmetryError::NotFixedPoint { residual: fixed });
    }

    let nf_settings = &settings.normal_form;
    let samples = neighborhood_samples(m, nf_settings.radius, settings.samples, nf_settings.seed);
    let mut input_residual: f64 = 0.0;
    for x in &samples {
        let fx = f.eval(x);
        for g in &gens {
            let r = (action.target.act(g, &fx) - f.eval(&action.domain.act(g, x))).norm();
            if !(r <= settings.input_tol * fx.norm().max(1.0)) {
                return Err(SymmetryError::EquivarianceViolation {
                    sample: x.iter().copied().collect(),
                    residual: r,
                });
            }
            input_residual = input_residual.max(r);
        }
    }

    let dom = action.domain.linearized();
    let tgt = action.target.linearized();
    let j = f.jacobian(m);
    let linear = factorize_regular(&j, nf_settings.rank_tol)?;
    let coimage = invariant_complement(&linear.kernel, &dom)?;
    let cokernel = invariant_complement(&linear.image, &tgt)?;
    let complement_invariance_residual =
        dom.invariance_residual(&coimage).max(tgt.invariance_residual(&cokernel));
    let split = Splitting::from_bases(
        linear.kernel.basis(),
        coimage.basis(),
        cokernel.basis(),
        linear.image.basis(),
    )?;
    let (k, c) = (split.kernel_dim, split.cokernel_dim());
    let chart_rep = dom.on_subspace(split.b_domain.clone(), split.b_domain_inv.clone())?;
    let target_adapted = tgt.on_subspace(split.b_target.clone(), split.b_target_inv.clone())?;
    let subspace_invariance_residual = gens
        .iter()
        .map(|g| {
            off_diagonal(&chart_rep.linear(g), k).max(off_diagonal(&target_adapted.linear(g), c))
        })
        .fold(0.0, f64::max);
    if subspace_invariance_residual > settings.invariance_tol {
        return Err(SymmetryError::SubspaceNotInvariant {
            residual: subspace_invariance_residual,
        });
    }
    let kernel_rep = dom.on_subspace(
        linear.kernel.basis().clone(),
        rows(&split.b_domain_inv, k),
    )?;
    let cokernel_rep = tgt.on_subspace(cokernel.basis().clone(), rows(&split.b_target_inv, c))?;

    let normal_form = normal_form_with_splitting(f, m, linear, split, nf_settings)?;

    let chart_samples = ball_samples(
        n,
        0.5 * normal_form.radius,
        settings.samples,
        nf_settings.seed ^ 0x51ab,
    );
    let mut fs_residual: f64 = 0.0;
    for u in &chart_samples {
        let fs_u = normal_form.fs(u).map_err(crate::normal_form::NormalFormError::from)?;
        for g in &gens {
            let moved = normal_form
                .fs(&chart_rep.act(g, u))
                .map_err(crate::normal_form::NormalFormError::from)?;
            let r = (cokernel_rep.act(g, &fs_u) - moved).norm();
            if !(r <= settings.fs_tol) {
                return Err(SymmetryError::EquivarianceViolation {
                    sample: u.iter().copied().collect(),
                    residual: r,
                });
            }
            fs_residual = fs_residual.max(r);
        }
    }

    Ok(EquivariantNormalFormData {
        normal_form,
        action: action.clone(),
        kernel_rep,
        cokernel_rep,
        chart_rep,
        input_equivariance_residual: input_residual,
        fs_equivariance_residual: fs_residual,
        subspace_invariance_residual,
        complement_invariance_residual,
        samples: chart_samples.len() * gens.len(),
    })
}

/// The normal form along the orbit through `m`.
///
/// `G_μ` is the stabilizer of `μ = f(m)`; `S` is a linear slice at `m` for
/// `G_μ`; the fixed-point construction runs on `f|_S` for `G_m ⊆ G_μ`.
#[derive(Debug, Clone)]
pub struct EquivariantNormalForm {
    pub value_stabilizer: Stabilizer,
    pub slice: Slice,
    /// `t ↦ f(m + N t)`.
    pub slice_map: SharedMap,
    pub slice_action: GroupAction,
    pub fixed_point: EquivariantNormalFormData,
    pub classification: PointClassification,
    /// Largest residual of the tube identities `[gh, h⁻¹s] ↦ ρ(g)s` and
    /// `f(ρ(g)s) = ρ(g) f(s)` over samples.
    pub tube_residual: f64,
    pub tube_samples: usize,
}

pub fn equivariant_normal_form(
    f: SharedMap,
    m: &Vector,
    action: &GroupAction,
    settings: &EquivariantSettings,
) -> Result<EquivariantNormalForm, SymmetryError> {
    if m.len() != f.dim_in() {
        return Err(SymmetryError::DimensionMismatch(format!(
            "point has {} coordinates, map expects {}",
            m.len(),
            f.dim_in()
        )));
    }
    let mu = f.eval(m);
    let value_stabilizer = stabilizer_of(&action.target, &mu, settings.fixed_point_tol);
    let on_orbit = action.restrict(&value_stabilizer.subgroup)?;
    let slice = linear_slice(&on_orbit.domain, m, settings.normal_form.radius)?;
    let stab = &slice.stabilizer.subgroup;
    let basis = slice.normal.basis().clone();
    let d = basis.ncols();

    let slice_action = GroupAction {
        domain: on_orbit
            .domain
            .restrict(stab)?
            .on_subspace(basis.clone(), basis.transpose())?,
        target: on_orbit.target.restrict(stab)?,
    };
    let (g0, b0, b1, base) = (Arc::clone(&f), basis.clone(), basis, m.clone());
    let base1 = base.clone();
    let g1 = Arc::clone(&f);
    let slice_map = FnMap::new(d, f.dim_out(), move |t: &Vector| g0.eval(&(&base + &b0 * t)))
        .with_jacobian(move |t: &Vector| g1.jacobian(&(&base1 + &b1 * t)) * &b1)
        .shared();

    let fixed_point =
        equivariant_normal_form_fixed_point(Arc::clone(&slice_map), &Vector::zeros(d), &slice_action, settings)?;
    let probe = neighborhood_samples(&Vector::zeros(d), 0.5 * slice.radius, 20, settings.normal_form.seed);
    let classification =
        classify_point(slice_map.as_ref(), &Vector::zeros(d), &probe, settings.normal_form.rank_tol);

    let (tube_residual, tube_samples) = tube_check(f.as_ref(), &on_orbit, &slice, settings);
    Ok(EquivariantNormalForm {
        value_stabilizer,
        slice,
        slice_map,
        slice_action,
        fixed_point,
        classification,
        tube_residual,
        tube_samples,
    })
}

fn tube_check(
    f: &dyn DifferentiableMap,
    action: &GroupAction,
    slice: &Slice,
    settings: &EquivariantSettings,
) -> (f64, usize) {
    let group = action.group();
    let mut elements: Vec<GroupElement> = action.domain.test_elements();
    let quadrature = action.domain.averaging_elements();
    let stride = quadrature.len().div_ceil(16).max(1);
    elements.extend(quadrature.into_iter().step_by(stride).map(|(g, _)| g));
    let stab_elements = group.test_elements(&slice.stabilizer.subgroup);
    let points = ball_samples(slice.dim(), 0.5 * slice.radius, 10, settings.normal_form.seed ^ 0x7b);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for t in &points {
        let s = slice.embed(t);
        let fs = f.eval(&s);
        for g in &elements {
            let gs = action.domain.act(g, &s);
            let r = (f.eval(&gs) - action.target.act(g, &fs)).norm() / fs.norm().max(1.0);
            worst = worst.max(r);
            for h in &stab_elements {
                let gh = group.multiply(g, h);
                let hs = action.domain.act(&group.inverse(h), &s);
                worst = worst.max((action.domain.act(&gh, &hs) - &gs).norm());
            }
            count += 1;
        }
    }
    (worst, count)
}
