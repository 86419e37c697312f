//! Linear (and torus-affine) representations and Haar averaging.

use std::fmt;
use std::sync::{Arc, OnceLock};

use super::group::{wrap_angle, CompactGroup, GroupElement, Subgroup};
use super::lattice::IntMatrix;
use super::orbit::SubgroupLattice;
use super::SymmetryError;
use crate::calculus::DifferentiableMap;
use crate::linear_core::{Matrix, Subspace, Vector};

/// Invariance tolerance for subspaces handed to [`invariant_complement`].
pub const INVARIANCE_TOL: f64 = 1e-8;

/// The underlying action on the full coordinate space.
#[derive(Debug, Clone, PartialEq)]
pub enum RepKind {
    /// One matrix per group element, indexed like the group table.
    Finite { matrices: Vec<Matrix> },
    /// Coordinates are `weights.len()` planes rotated by `⟨w_b, θ⟩`, followed
    /// by `fixed_dims` coordinates. Optional integer `translations`
    /// (`fixed_dims × rank`) shift the fixed coordinates by `wrap(Sθ)`.
    Torus {
        weights: Vec<Vec<i64>>,
        fixed_dims: usize,
        translations: Option<IntMatrix>,
    },
}

/// A representation of a closed subgroup `over` of a compact group.
///
/// Restricting to an invariant subspace through `(E, P)` yields the
/// representation `g ↦ P ρ(g) E`, which keeps only the linear part.
#[derive(Clone)]
pub struct LinearRep {
    group: Arc<CompactGroup>,
    over: Subgroup,
    kind: Arc<RepKind>,
    embed: Option<Arc<(Matrix, Matrix)>>,
    lattice: Arc<OnceLock<SubgroupLattice>>,
}

impl fmt::Debug for LinearRep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearRep")
            .field("group", &self.group.kind())
            .field("over", &self.over)
            .field("dim", &self.dim())
            .field("restricted", &self.embed.is_some())
            .finish()
    }
}

fn rotation_block(m: &mut Matrix, at: usize, angle: f64) {
    let (s, c) = angle.sin_cos();
    m[(at, at)] = c;
    m[(at, at + 1)] = -s;
    m[(at + 1, at)] = s;
    m[(at + 1, at + 1)] = c;
}

impl LinearRep {
    /// A finite-group representation. Matrices must be orthogonal and
    /// multiply like the group table.
    pub fn finite(group: Arc<CompactGroup>, matrices: Vec<Matrix>) -> Result<Self, SymmetryError> {
        let g = group
            .as_finite()
            .ok_or_else(|| SymmetryError::InvalidGroup("finite matrices over a torus".into()))?;
        if matrices.len() != g.order() {
            return Err(SymmetryError::DimensionMismatch(format!(
                "{} matrices for a group of order {}",
                matrices.len(),
                g.order()
            )));
        }
        let n = matrices[0].nrows();
        if matrices.iter().any(|m| m.shape() != (n, n)) {
            return Err(SymmetryError::DimensionMismatch("matrices must be square of one size".into()));
        }
        let mut residual: f64 = 0.0;
        for a in 0..g.order() {
            let orth = matrices[a].transpose() * &matrices[a] - Matrix::identity(n, n);
            residual = residual.max(if n == 0 { 0.0 } else { orth.amax() });
            for b in 0..g.order() {
                let d = &matrices[a] * &matrices[b] - &matrices[g.mul(a, b)];
                residual = residual.max(if n == 0 { 0.0 } else { d.amax() });
            }
        }
        if residual > 1e-10 {
            return Err(SymmetryError::NotARepresentation { residual });
        }
        let over = group.full_subgroup();
        Ok(Self::assemble(group, over, RepKind::Finite { matrices }))
    }

    pub fn torus(
        group: Arc<CompactGroup>,
        weights: Vec<Vec<i64>>,
        fixed_dims: usize,
        translations: Option<IntMatrix>,
    ) -> Result<Self, SymmetryError> {
        let rank = match group.as_ref() {
            CompactGroup::Torus { rank } => *rank,
            CompactGroup::Finite(_) => {
                return Err(SymmetryError::InvalidGroup("weights over a finite group".into()))
            }
        };
        if weights.iter().any(|w| w.len() != rank) {
            return Err(SymmetryError::DimensionMismatch(format!(
                "every weight vector needs {rank} entries"
            )));
        }
        if let Some(s) = &translations {
            if s.len() != fixed_dims || s.iter().any(|r| r.len() != rank) {
                return Err(SymmetryError::DimensionMismatch(format!(
                    "translations must be {fixed_dims} × {rank}"
                )));
            }
        }
        let over = group.full_subgroup();
        Ok(Self::assemble(
            group,
            over,
            RepKind::Torus {
                weights,
                fixed_dims,
                translations,
            },
        ))
    }

    /// The trivial representation on `R^dim`.
    pub fn trivial(group: Arc<CompactGroup>, dim: usize) -> Self {
        let kind = match group.as_ref() {
            CompactGroup::Finite(g) => RepKind::Finite {
                matrices: vec![Matrix::identity(dim, dim); g.order()],
            },
            CompactGroup::Torus { .. } => RepKind::Torus {
                weights: Vec::new(),
                fixed_dims: dim,
                translations: None,
            },
        };
        let over = group.full_subgroup();
        Self::assemble(group, over, kind)
    }

    fn assemble(group: Arc<CompactGroup>, over: Subgroup, kind: RepKind) -> Self {
        Self {
            group,
            over,
            kind: Arc::new(kind),
            embed: None,
            lattice: Arc::new(OnceLock::new()),
        }
    }

    pub fn group(&self) -> &Arc<CompactGroup> {
        &self.group
    }

    /// The subgroup this representation is restricted to.
    pub fn over(&self) -> &Subgroup {
        &self.over
    }

    pub fn kind(&self) -> &RepKind {
        &self.kind
    }

    pub fn is_restricted_to_subspace(&self) -> bool {
        self.embed.is_some()
    }

    fn base_dim(&self) -> usize {
        match self.kind.as_ref() {
            RepKind::Finite { matrices } => matrices[0].nrows(),
            RepKind::Torus {
                weights,
                fixed_dims,
                ..
            } => 2 * weights.len() + fixed_dims,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.embed {
            Some(ep) => ep.0.ncols(),
            None => self.base_dim(),
        }
    }

    /// Whether the action has a translation part.
    pub fn is_affine(&self) -> bool {
        self.embed.is_none()
            && matches!(self.kind.as_ref(), RepKind::Torus { translations: Some(_), .. })
    }

    fn base_linear(&self, g: &GroupElement) -> Matrix {
        match (self.kind.as_ref(), g) {
            (RepKind::Finite { matrices }, GroupElement::Finite(i)) => matrices[*i].clone(),
            (RepKind::Torus { weights, .. }, GroupElement::Torus(theta)) => {
                let n = self.base_dim();
                let mut m = Matrix::identity(n, n);
                for (b, w) in weights.iter().enumerate() {
                    let angle: f64 = w.iter().zip(theta).map(|(&wi, t)| wi as f64 * t).sum();
                    rotation_block(&mut m, 2 * b, angle);
                }
                m
            }
            _ => panic!("group element does not match the representation"),
        }
    }

    /// The linear part `ρ(g)`.
    pub fn linear(&self, g: &GroupElement) -> Matrix {
        let m = self.base_linear(g);
        match &self.embed {
            Some(ep) => &ep.1 * m * &ep.0,
            None => m,
        }
    }

    /// The translation part, zero unless [`is_affine`](Self::is_affine).
    pub fn shift(&self, g: &GroupElement) -> Vector {
        let mut out = Vector::zeros(self.dim());
        if !self.is_affine() {
            return out;
        }
        if let (
            RepKind::Torus {
                weights,
                translations: Some(s),
                ..
            },
            GroupElement::Torus(theta),
        ) = (self.kind.as_ref(), g)
        {
            let off = 2 * weights.len();
            for (i, row) in s.iter().enumerate() {
                let t: f64 = row.iter().zip(theta).map(|(&a, t)| a as f64 * t).sum();
                out[off + i] = wrap_angle(t);
            }
        }
        out
    }

    /// `ρ(g) x`.
    pub fn act(&self, g: &GroupElement, x: &Vector) -> Vector {
        self.linear(g) * x + self.shift(g)
    }

    /// The same action restricted to a subgroup of [`over`](Self::over).
    pub fn restrict(&self, sub: &Subgroup) -> Result<Self, SymmetryError> {
        if !self.group.is_subgroup(sub, &self.over) {
            return Err(SymmetryError::InvalidGroup(
                "restriction target is not a subgroup".into(),
            ));
        }
        let mut out = self.clone();
        out.over = sub.clone();
        out.lattice = Arc::new(OnceLock::new());
        Ok(out)
    }

    /// The linear action on an invariant subspace: `g ↦ P ρ(g) E` with
    /// `E` (dim × k) and `P` (k × dim) satisfying `P E = I`.
    pub fn on_subspace(&self, e: Matrix, p: Matrix) -> Result<Self, SymmetryError> {
        let n = self.dim();
        let k = e.ncols();
        if e.nrows() != n || p.shape() != (k, n) {
            return Err(SymmetryError::DimensionMismatch(
                "embedding and projection do not fit the representation".into(),
            ));
        }
        let (e, p) = match &self.embed {
            Some(ep) => (&ep.0 * e, p * &ep.1),
            None => (e, p),
        };
        let mut out = self.clone();
        out.embed = Some(Arc::new((e, p)));
        Ok(out)
    }

    /// The linear part alone, as a representation on the same space.
    pub fn linearized(&self) -> Self {
        if !self.is_affine() {
            return self.clone();
        }
        let n = self.dim();
        self.on_subspace(Matrix::identity(n, n), Matrix::identity(n, n))
            .expect("identity embedding fits")
    }

    /// Elements whose fixed vectors are the invariants of [`over`](Self::over).
    pub fn test_elements(&self) -> Vec<GroupElement> {
        self.group.test_elements(&self.over)
    }

    /// Haar quadrature over [`over`](Self::over).
    pub fn averaging_elements(&self) -> Vec<(GroupElement, f64)> {
        self.group.averaging_elements(&self.over)
    }

    /// Lie algebra basis of [`over`](Self::over) in angle coordinates.
    pub fn lie_algebra(&self) -> Matrix {
        self.group.lie_algebra(&self.over)
    }

    /// Infinitesimal linear action of the angle direction `xi`.
    pub fn lie_generator(&self, xi: &[f64]) -> Matrix {
        let n = self.base_dim();
        let mut a = Matrix::zeros(n, n);
        if let RepKind::Torus { weights, .. } = self.kind.as_ref() {
            for (b, w) in weights.iter().enumerate() {
                let s: f64 = w.iter().zip(xi).map(|(&wi, x)| wi as f64 * x).sum();
                a[(2 * b, 2 * b + 1)] = -s;
                a[(2 * b + 1, 2 * b)] = s;
            }
        }
        match &self.embed {
            Some(ep) => &ep.1 * a * &ep.0,
            None => a,
        }
    }

    /// Infinitesimal translation of the angle direction `xi`.
    pub fn lie_shift(&self, xi: &[f64]) -> Vector {
        let mut out = Vector::zeros(self.dim());
        if let (true, RepKind::Torus { weights, translations: Some(s), .. }) =
            (self.is_affine(), self.kind.as_ref())
        {
            let off = 2 * weights.len();
            for (i, row) in s.iter().enumerate() {
                out[off + i] = row.iter().zip(xi).map(|(&a, x)| a as f64 * x).sum();
            }
        }
        out
    }

    /// Columns `ξ · x` spanning the tangent space of the orbit through `x`,
    /// one per Lie algebra basis vector of [`over`](Self::over).
    pub fn orbit_tangent(&self, x: &Vector) -> Matrix {
        let lie = self.lie_algebra();
        let n = self.dim();
        let mut out = Matrix::zeros(n, lie.ncols());
        for j in 0..lie.ncols() {
            let xi: Vec<f64> = lie.column(j).iter().copied().collect();
            let col = self.lie_generator(&xi) * x + self.lie_shift(&xi);
            out.set_column(j, &col);
        }
        out
    }

    /// Weight data of the underlying torus action, with the embedding if any.
    pub(crate) fn torus_data(&self) -> Option<(&[Vec<i64>], Option<&IntMatrix>, Option<&Matrix>)> {
        match self.kind.as_ref() {
            RepKind::Torus {
                weights,
                translations,
                ..
            } => Some((
                weights,
                translations.as_ref().filter(|_| self.embed.is_none()),
                self.embed.as_ref().map(|ep| &ep.0),
            )),
            RepKind::Finite { .. } => None,
        }
    }

    /// Conjugacy classes of subgroups of [`over`](Self::over), built once.
    pub fn subgroup_lattice(&self) -> Option<&SubgroupLattice> {
        let g = self.group.as_finite()?;
        let Subgroup::Finite { mask } = &self.over else { return None };
        Some(self.lattice.get_or_init(|| SubgroupLattice::new(g, *mask)))
    }

    /// Largest `‖ρ(g)v − Pρ(g)v‖` over test elements and basis vectors of `space`.
    pub fn invariance_residual(&self, space: &Subspace) -> f64 {
        let p = space.projector();
        self.test_elements()
            .iter()
            .map(|g| {
                let moved = self.linear(g) * space.basis();
                let r = &moved - &p * &moved;
                if r.is_empty() {
                    0.0
                } else {
                    r.amax()
                }
            })
            .fold(0.0, f64::max)
    }
}

/// A pair of representations of one group on the domain and target of a map.
#[derive(Debug, Clone)]
pub struct GroupAction {
    pub domain: LinearRep,
    pub target: LinearRep,
}

impl GroupAction {
    pub fn new(domain: LinearRep, target: LinearRep) -> Result<Self, SymmetryError> {
        if domain.group() != target.group() || domain.over() != target.over() {
            return Err(SymmetryError::InvalidGroup(
                "domain and target representations use different groups".into(),
            ));
        }
        Ok(Self { domain, target })
    }

    /// The trivial group acting trivially.
    pub fn trivial(dim_in: usize, dim_out: usize) -> Self {
        let g = Arc::new(CompactGroup::trivial());
        Self {
            domain: LinearRep::trivial(Arc::clone(&g), dim_in),
            target: LinearRep::trivial(g, dim_out),
        }
    }

    pub fn group(&self) -> &Arc<CompactGroup> {
        self.domain.group()
    }

    pub fn over(&self) -> &Subgroup {
        self.domain.over()
    }

    pub fn restrict(&self, sub: &Subgroup) -> Result<Self, SymmetryError> {
        Ok(Self {
            domain: self.domain.restrict(sub)?,
            target: self.target.restrict(sub)?,
        })
    }

    /// Largest `‖ρ_target(g) f(x) − f(ρ_domain(g) x)‖` over test elements and
    /// samples, with the sample attaining it.
    pub fn equivariance_residual(
        &self,
        f: &dyn DifferentiableMap,
        samples: &[Vector],
    ) -> (f64, Option<Vector>) {
        let gens = self.domain.test_elements();
        let mut worst = (0.0, None);
        for x in samples {
            let fx = f.eval(x);
            for g in &gens {
                let lhs = self.target.act(g, &fx);
                let rhs = f.eval(&self.domain.act(g, x));
                let r = (lhs - rhs).norm();
                if !(r <= worst.0) {
                    worst = (r, Some(x.clone()));
                }
            }
        }
        worst
    }
}

/// `Σ_g w_g ρ_target(g⁻¹) A ρ_domain(g)` over the Haar quadrature of the
/// domain representation's subgroup.
pub fn haar_average_matrix(
    domain: &LinearRep,
    target: &LinearRep,
    a: &Matrix,
) -> Result<Matrix, SymmetryError> {
    if a.shape() != (target.dim(), domain.dim()) {
        return Err(SymmetryError::DimensionMismatch(format!(
            "matrix is {}×{}, representations need {}×{}",
            a.nrows(),
            a.ncols(),
            target.dim(),
            domain.dim()
        )));
    }
    if domain.group() != target.group() || domain.over() != target.over() {
        return Err(SymmetryError::InvalidGroup(
            "averaging needs representations of the same group".into(),
        ));
    }
    let group = domain.group();
    let mut sum = Matrix::zeros(a.nrows(), a.ncols());
    for (g, w) in domain.averaging_elements() {
        let gi = group.inverse(&g);
        sum += (target.linear(&gi) * a * domain.linear(&g)) * w;
    }
    Ok(sum)
}

/// An invariant complement of the invariant subspace `v`.
///
/// The orthogonal projector onto `v` is averaged; the kernel of the average is
/// invariant and complementary to `v`.
pub fn invariant_complement(v: &Subspace, rep: &LinearRep) -> Result<Subspace, SymmetryError> {
    let n = rep.dim();
    if v.ambient_dim() != n {
        return Err(SymmetryError::DimensionMismatch(format!(
            "subspace lives in R^{}, representation in R^{n}",
            v.ambient_dim()
        )));
    }
    let residual = rep.invariance_residual(v);
    if residual > INVARIANCE_TOL {
        return Err(SymmetryError::NotInvariantInput { residual });
    }
    if v.dim() == 0 {
        return Ok(Subspace::full(n));
    }
    if v.dim() == n {
        return Ok(Subspace::zero(n));
    }
    let avg = haar_average_matrix(rep, rep, &v.projector())?;
    let w = Subspace::from_spanning(&(Matrix::identity(n, n) - avg), 1e-8);
    if w.dim() + v.dim() != n {
        return Err(SymmetryError::NotInvariantInput { residual });
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::super::group::generate_matrix_group;
    use super::*;
    use proptest::prelude::*;

    fn u1(weights: Vec<Vec<i64>>, fixed: usize) -> LinearRep {
        let g = Arc::new(CompactGroup::torus(1).unwrap());
        LinearRep::torus(g, weights, fixed, None).unwrap()
    }

    fn z2_sign(n_sign: usize, n_fixed: usize) -> LinearRep {
        let n = n_sign + n_fixed;
        let d = Matrix::from_fn(n, n, |i, j| {
            if i != j {
                0.0
            } else if i < n_sign {
                -1.0
            } else {
                1.0
            }
        });
        let (g, dom, _) = generate_matrix_group(&[(d, Matrix::identity(1, 1))]).unwrap();
        LinearRep::finite(Arc::new(CompactGroup::Finite(g)), dom).unwrap()
    }

    #[test]
    fn u1_average_of_projector_is_half_identity() {
        let r = u1(vec![vec![1]], 0);
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let avg = haar_average_matrix(&r, &r, &a).unwrap();
        assert!((avg - Matrix::identity(2, 2) * 0.5).amax() <= 1e-12);
    }

    #[test]
    fn odd_map_averages_to_zero() {
        let sign = z2_sign(1, 0);
        let (_, _, tgt) =
            generate_matrix_group(&[(Matrix::from_element(1, 1, -1.0), Matrix::identity(1, 1))])
                .unwrap();
        let trivial = LinearRep::finite(Arc::clone(sign.group()), tgt).unwrap();
        let avg = haar_average_matrix(&sign, &trivial, &Matrix::from_element(1, 1, 1.0)).unwrap();
        assert!(avg.amax() <= 1e-15);
    }

    #[test]
    fn equivariant_matrix_is_fixed() {
        let r = u1(vec![vec![1]], 1);
        let a = Matrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 5.0]);
        let avg = haar_average_matrix(&r, &r, &a).unwrap();
        assert!((avg - a).amax() <= 1e-12);
    }

    #[test]
    fn complements() {
        let r = z2_sign(1, 1);
        // diag(−1, 1): V = first axis is invariant, complement is the second.
        let v = Subspace::new(2, Matrix::from_column_slice(2, 1, &[1.0, 0.0]));
        let w = invariant_complement(&v, &r).unwrap();
        assert_eq!(w.dim(), 1);
        assert!(w.basis()[(0, 0)].abs() <= 1e-12);
        assert!(invariant_complement(&Subspace::full(2), &r).unwrap().dim() == 0);

        let r = u1(vec![vec![1], vec![2]], 0);
        let v = Subspace::new(4, Matrix::identity(4, 4).columns(0, 2).into_owned());
        let w = invariant_complement(&v, &r).unwrap();
        assert_eq!(w.dim(), 2);
        let second = Subspace::new(4, Matrix::identity(4, 4).columns(2, 2).into_owned());
        assert!((w.projector() - second.projector()).amax() <= 1e-10);
        assert!(r.invariance_residual(&w) <= 1e-10);
    }

    #[test]
    fn non_invariant_input_rejected() {
        let r = u1(vec![vec![1]], 0);
        let v = Subspace::new(2, Matrix::from_column_slice(2, 1, &[1.0, 0.0]));
        assert!(matches!(
            invariant_complement(&v, &r),
            Err(SymmetryError::NotInvariantInput { .. })
        ));
    }

    #[test]
    fn restriction_to_subspace() {
        let r = u1(vec![vec![1], vec![3]], 1);
        let e = Matrix::identity(5, 5).columns(2, 2).into_owned();
        let p = e.transpose();
        let sub = r.on_subspace(e, p).unwrap();
        let g = GroupElement::Torus(vec![0.3]);
        let m = sub.linear(&g);
        assert!((m[(1, 0)] - 0.9f64.sin()).abs() <= 1e-14);
    }

    #[test]
    fn translations_act_on_fixed_coordinates() {
        let g = Arc::new(CompactGroup::torus(2).unwrap());
        let r = LinearRep::torus(g, vec![], 2, Some(vec![vec![-1, 1], vec![-1, 1]])).unwrap();
        assert!(r.is_affine());
        let x = r.act(&GroupElement::Torus(vec![0.1, 0.4]), &Vector::zeros(2));
        assert!((x[0] - 0.3).abs() <= 1e-15 && (x[1] - 0.3).abs() <= 1e-15);
        assert!(!r.linearized().is_affine());
        let t = r.orbit_tangent(&Vector::zeros(2));
        assert_eq!(t.ncols(), 2);
        assert!((Subspace::from_spanning(&t, 1e-10).dim()) == 1);
    }

    fn random_matrix(n: usize, vals: &[f64]) -> Matrix {
        Matrix::from_fn(n, n, |i, j| vals[(i * n + j) % vals.len()])
    }

    proptest! {
        #[test]
        fn averaging_is_idempotent_and_equivariant(vals in prop::collection::vec(-3.0f64..3.0, 16)) {
            let reps = [
                z2_sign(2, 2),
                u1(vec![vec![1], vec![2]], 0),
            ];
            for r in &reps {
                let a = random_matrix(4, &vals);
                let once = haar_average_matrix(r, r, &a).unwrap();
                let twice = haar_average_matrix(r, r, &once).unwrap();
                prop_assert!((&twice - &once).amax() <= 1e-10);
                let tol = if matches!(r.group().as_ref(), CompactGroup::Torus { .. }) { 1e-6 } else { 1e-10 };
                for g in r.test_elements() {
                    let l = r.linear(&g);
                    prop_assert!((&l * &once - &once * &l).amax() <= tol);
                }
            }
        }
    }
}
