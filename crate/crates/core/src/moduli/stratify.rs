//! Orbit-type strata of sampled zero sets.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use super::explore::ZeroSet;
use super::kuranishi::KuranishiChart;
use crate::linear_core::{Matrix, Vector};
use crate::symmetry::{orbit_type_leq, stabilizer_of, LinearRep, OrbitType};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StratifySettings {
    /// Neighbours per local PCA.
    pub neighbors: usize,
    /// Eigenvalues above this fraction of the largest count as directions.
    pub pca_threshold: f64,
    /// Points per stratum used for the dimension vote.
    pub max_dimension_points: usize,
    /// Contact distance in grid spacings.
    pub frontier_factor: f64,
    /// Approximation distance in grid spacings.
    pub approximation_factor: f64,
    /// Tolerance for stabilizer membership of sampled points.
    pub type_tol: f64,
}

impl Default for StratifySettings {
    fn default() -> Self {
        Self {
            neighbors: 12,
            pca_threshold: 0.1,
            max_dimension_points: 400,
            frontier_factor: 3.0,
            approximation_factor: 2.0,
            type_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stratum {
    pub type_id: usize,
    pub orbit_type: OrbitType,
    pub label: String,
    /// Lie dimension and order of the stabilizer.
    pub stabilizer_dim: usize,
    pub stabilizer_order: Option<usize>,
    pub size: usize,
    /// Mode of the local PCA dimension over sampled points.
    pub dim_estimate: usize,
    /// Indices into the zero set.
    pub points: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrontierVerdict {
    Pass,
    Fail,
    NoContact,
    SelfPair,
}

impl FrontierVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            FrontierVerdict::Pass => "pass",
            FrontierVerdict::Fail => "fail",
            FrontierVerdict::NoContact => "no_contact",
            FrontierVerdict::SelfPair => "self",
        }
    }
}

impl Serialize for FrontierVerdict {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproximationVerdict {
    Witnessed,
    /// The type occurs, but not within the approximation distance of the origin.
    Fail,
    /// The type does not occur among the samples; absence and undersampling
    /// are indistinguishable.
    Unwitnessed,
}

impl Serialize for ApproximationVerdict {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(match self {
            ApproximationVerdict::Witnessed => "witnessed",
            ApproximationVerdict::Fail => "fail",
            ApproximationVerdict::Unwitnessed => "unwitnessed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproximationCheck {
    pub label: String,
    pub orbit_type: OrbitType,
    /// Distance from the origin to the closest point of this type.
    pub distance: Option<f64>,
    pub verdict: ApproximationVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratificationReport {
    pub strata: Vec<Stratum>,
    /// Stratum index of every zero point.
    pub assignments: Vec<usize>,
    /// Pairwise verdicts, indexed like `strata`.
    pub frontier: Vec<Vec<FrontierVerdict>>,
    pub approximation: Vec<ApproximationCheck>,
    pub spacing: f64,
    pub contact_distance: f64,
}

impl StratificationReport {
    pub fn frontier_passes(&self) -> bool {
        self.frontier
            .iter()
            .flatten()
            .all(|v| !matches!(v, FrontierVerdict::Fail))
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Local dimension of `points[i]` from the spectrum of its neighbourhood.
fn local_dimension(points: &[&[f64]], i: usize, settings: &StratifySettings) -> usize {
    let d = points[i].len();
    let mut by_distance: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(j, p)| (dist(points[i], p), j))
        .collect();
    by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let nb: Vec<&[f64]> = by_distance
        .iter()
        .take(settings.neighbors + 1)
        .map(|&(_, j)| points[j])
        .collect();
    if nb.len() < 2 {
        return 0;
    }
    let mut mean = Vector::zeros(d);
    for p in &nb {
        mean += Vector::from_column_slice(p);
    }
    mean /= nb.len() as f64;
    let mut cov = Matrix::zeros(d, d);
    for p in &nb {
        let c = Vector::from_column_slice(p) - &mean;
        cov += &c * c.transpose();
    }
    let mut eig: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let top = eig[0];
    if !(top > 0.0) {
        return 0;
    }
    eig.iter().filter(|&&l| l / top > settings.pca_threshold).count()
}

fn dimension_estimate(points: &[&[f64]], settings: &StratifySettings) -> usize {
    if points.len() <= 1 {
        return 0;
    }
    let stride = points.len().div_ceil(settings.max_dimension_points).max(1);
    let votes: Vec<usize> = (0..points.len())
        .step_by(stride)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&i| local_dimension(points, i, settings))
        .collect();
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for v in votes {
        *counts.entry(v).or_default() += 1;
    }
    // Ties go to the lower dimension.
    counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(&d, _)| d)
        .unwrap_or(0)
}

/// Groups zero points by orbit type under `H`, estimates stratum dimensions and
/// checks the frontier and approximation properties on the samples.
///
/// The frontier verdict is local: two strata in contact pass when their types
/// are strictly ordered and no point of the less symmetric stratum sits on the
/// more symmetric one. The approximation check is done at the origin.
pub fn stratify(
    chart: &KuranishiChart,
    zero_set: &ZeroSet,
    settings: &StratifySettings,
) -> StratificationReport {
    stratify_points(&chart.kernel_rep, zero_set, settings)
}

/// [`stratify`] for an explicit representation on the zero-set coordinates.
pub fn stratify_points(
    rep: &LinearRep,
    zero_set: &ZeroSet,
    settings: &StratifySettings,
) -> StratificationReport {
    let h = zero_set.spacing;
    let eps = settings.frontier_factor * h;
    let stabs: Vec<_> = zero_set
        .points
        .par_iter()
        .map(|p| stabilizer_of(rep, &Vector::from_column_slice(p), settings.type_tol))
        .collect();

    let mut types: BTreeMap<OrbitType, Vec<usize>> = BTreeMap::new();
    for (i, s) in stabs.iter().enumerate() {
        types.entry(s.orbit_type.clone()).or_default().push(i);
    }
    let mut assignments = vec![0; zero_set.len()];
    let mut strata = Vec::new();
    for (idx, (t, members)) in types.into_iter().enumerate() {
        let first = &stabs[members[0]];
        for &i in &members {
            assignments[i] = idx;
        }
        let pts: Vec<&[f64]> = members.iter().map(|&i| zero_set.points[i].as_slice()).collect();
        strata.push(Stratum {
            type_id: idx,
            label: t.to_string(),
            orbit_type: t,
            stabilizer_dim: first.lie_dim,
            stabilizer_order: first.order,
            size: members.len(),
            dim_estimate: dimension_estimate(&pts, settings),
            points: members,
        });
    }

    let n = strata.len();
    let min_dist = |a: &Stratum, b: &Stratum| -> Vec<f64> {
        a.points
            .par_iter()
            .map(|&i| {
                b.points
                    .iter()
                    .map(|&j| dist(&zero_set.points[i], &zero_set.points[j]))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    };
    let mut frontier = vec![vec![FrontierVerdict::NoContact; n]; n];
    for i in 0..n {
        frontier[i][i] = FrontierVerdict::SelfPair;
        for j in i + 1..n {
            let d_ij = min_dist(&strata[i], &strata[j]);
            if !d_ij.iter().any(|&d| d <= eps) {
                continue;
            }
            let (ti, tj) = (&strata[i].orbit_type, &strata[j].orbit_type);
            // Distances from the less symmetric stratum to the more symmetric one.
            let d_upper = if orbit_type_leq(rep, tj, ti) && ti != tj {
                min_dist(&strata[j], &strata[i])
            } else if orbit_type_leq(rep, ti, tj) && ti != tj {
                d_ij
            } else {
                frontier[i][j] = FrontierVerdict::Fail;
                frontier[j][i] = FrontierVerdict::Fail;
                continue;
            };
            let touching = d_upper.iter().any(|&d| d <= settings.type_tol.max(1e-9));
            let v = if touching {
                FrontierVerdict::Fail
            } else {
                FrontierVerdict::Pass
            };
            frontier[i][j] = v;
            frontier[j][i] = v;
        }
    }

    let approximation = approximation_checks(rep, &strata, zero_set, settings);
    StratificationReport {
        strata,
        assignments,
        frontier,
        approximation,
        spacing: h,
        contact_distance: eps,
    }
}

fn approximation_checks(
    rep: &LinearRep,
    strata: &[Stratum],
    zero_set: &ZeroSet,
    settings: &StratifySettings,
) -> Vec<ApproximationCheck> {
    let limit = settings.approximation_factor * zero_set.spacing;
    let d = zero_set.dim().max(rep.dim());
    let origin = vec![0.0; d];
    let mut out: Vec<ApproximationCheck> = strata
        .iter()
        .map(|s| {
            let dmin = s
                .points
                .iter()
                .map(|&i| dist(&zero_set.points[i], &origin))
                .fold(f64::INFINITY, f64::min);
            ApproximationCheck {
                label: s.label.clone(),
                orbit_type: s.orbit_type.clone(),
                distance: Some(dmin),
                verdict: if dmin <= limit {
                    ApproximationVerdict::Witnessed
                } else {
                    ApproximationVerdict::Fail
                },
            }
        })
        .collect();
    // Subgroup classes of a finite H that never occur are reported unwitnessed.
    if let Some(lattice) = rep.subgroup_lattice() {
        for (id, class) in lattice.classes.iter().enumerate() {
            let t = OrbitType::Finite {
                class_id: id,
                order: class.order,
            };
            if !out.iter().any(|c| c.orbit_type == t) {
                out.push(ApproximationCheck {
                    label: t.to_string(),
                    orbit_type: t,
                    distance: None,
                    verdict: ApproximationVerdict::Unwitnessed,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::calculus::parse_expression_map;
    use crate::moduli::explore::{explore_zero_set, ExploreSettings};
    use crate::symmetry::{generate_matrix_group, CompactGroup};

    fn z2_on_plane() -> LinearRep {
        let (g, dom, _) = generate_matrix_group(&[(
            Matrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]),
            Matrix::from_element(1, 1, -1.0),
        )])
        .unwrap();
        LinearRep::finite(Arc::new(CompactGroup::Finite(g)), dom).unwrap()
    }

    #[test]
    fn pitchfork_strata() {
        let s = parse_expression_map(&["l*x - x^3"], &["x".to_string(), "l".to_string()]).unwrap();
        let z = explore_zero_set(&s, 1.0, 81, &ExploreSettings::default()).unwrap();
        let r = stratify_points(&z2_on_plane(), &z, &StratifySettings::default());
        assert_eq!(r.strata.len(), 2);
        let dims: Vec<usize> = r.strata.iter().map(|s| s.dim_estimate).collect();
        assert_eq!(dims, vec![1, 1]);
        assert_eq!(r.frontier[0][1], FrontierVerdict::Pass);
        assert!(r.frontier_passes());
        assert!(r
            .approximation
            .iter()
            .all(|a| a.verdict == ApproximationVerdict::Witnessed));
    }

    #[test]
    fn empty_zero_set() {
        let z = ZeroSet {
            points: vec![],
            residuals: vec![],
            spacing: 0.1,
            radius: 1.0,
            grid: 21,
            candidates: 0,
        };
        let r = stratify_points(&z2_on_plane(), &z, &StratifySettings::default());
        assert!(r.strata.is_empty());
        assert!(r.frontier.is_empty());
    }

    #[test]
    fn single_free_type() {
        // A line avoiding the fixed axis: one stratum of dimension one.
        let points: Vec<Vec<f64>> = (0..50).map(|i| vec![0.5, -1.0 + 0.04 * i as f64]).collect();
        let z = ZeroSet {
            residuals: vec![0.0; points.len()],
            points,
            spacing: 0.04,
            radius: 1.0,
            grid: 51,
            candidates: 50,
        };
        let r = stratify_points(&z2_on_plane(), &z, &StratifySettings::default());
        assert_eq!(r.strata.len(), 1);
        assert_eq!(r.strata[0].dim_estimate, 1);
        assert!(r.frontier_passes());
    }
}
