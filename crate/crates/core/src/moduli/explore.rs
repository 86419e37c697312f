//! Grid search for the zero set of an obstruction map.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use super::ModuliError;
use crate::calculus::{gauss_newton, DifferentiableMap, NewtonSettings};
use crate::linear_core::Vector;

/// Largest supported domain dimension.
pub const MAX_EXPLORE_DIM: usize = 4;
const MAX_NODES: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExploreSettings {
    /// Accept polished points with `‖s‖` at most this.
    pub tol: f64,
    #[serde(skip)]
    pub newton: NewtonSettings,
}

impl Default for ExploreSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            newton: NewtonSettings {
                max_iter: 50,
                ..NewtonSettings::default()
            },
        }
    }
}

/// Polished zero points on `[−radius, radius]^d`, sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroSet {
    pub points: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    /// Grid spacing `h = 2 radius / (grid − 1)`.
    pub spacing: f64,
    pub radius: f64,
    pub grid: usize,
    /// Grid nodes that passed the coarse bound.
    pub candidates: usize,
}

impl ZeroSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }
}

fn node(index: usize, dim: usize, grid: usize, radius: f64, h: f64) -> Vector {
    let mut rest = index;
    Vector::from_iterator(
        dim,
        (0..dim).map(|_| {
            let i = rest % grid;
            rest /= grid;
            -radius + h * i as f64
        }),
    )
}

/// Seeds a uniform grid, keeps nodes where `‖s‖ ≤ (‖Ds‖_F + 1) h √d`, polishes
/// them by Gauss-Newton and merges points closer than `h / 2`.
pub fn explore_zero_set(
    s: &dyn DifferentiableMap,
    radius: f64,
    grid: usize,
    settings: &ExploreSettings,
) -> Result<ZeroSet, ModuliError> {
    let d = s.dim_in();
    if d > MAX_EXPLORE_DIM {
        return Err(ModuliError::GridTooLarge { dim: d, nodes: usize::MAX });
    }
    let grid = grid.max(2);
    let nodes = grid.checked_pow(d as u32).unwrap_or(usize::MAX);
    if nodes > MAX_NODES {
        return Err(ModuliError::GridTooLarge { dim: d, nodes });
    }
    let h = 2.0 * radius / (grid - 1) as f64;
    let zero = Vector::zeros(s.dim_out());
    let sqrt_d = (d as f64).sqrt();
    let box_limit = radius + h;

    let polished: Vec<Option<(Vector, f64)>> = (0..nodes)
        .into_par_iter()
        .map(|i| {
            let x = node(i, d, grid, radius, h);
            let sx = s.eval(&x);
            if sx.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let bound = (s.jacobian(&x).norm() + 1.0) * h * sqrt_d + settings.tol;
            if sx.norm() > bound {
                return None;
            }
            let report = gauss_newton(s, &zero, &x, &settings.newton).ok()?;
            let inside = report.x.iter().all(|v| v.abs() <= box_limit);
            (report.residual <= settings.tol && inside).then_some((report.x, report.residual))
        })
        .collect();
    let candidates = polished.iter().filter(|p| p.is_some()).count();

    // Merge in node order through a hash of cells of width h / 2.
    let cell = 0.5 * h;
    let key = |x: &Vector| -> Vec<i64> { x.iter().map(|v| (v / cell).floor() as i64).collect() };
    let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let mut kept: Vec<(Vector, f64)> = Vec::new();
    for (x, r) in polished.into_iter().flatten() {
        let k = key(&x);
        let mut close = false;
        let mut offsets = vec![vec![0i64; d]];
        for axis in 0..d {
            let mut next = Vec::with_capacity(offsets.len() * 3);
            for o in &offsets {
                for delta in [-1, 0, 1] {
                    let mut o2 = o.clone();
                    o2[axis] = delta;
                    next.push(o2);
                }
            }
            offsets = next;
        }
        for o in &offsets {
            let nk: Vec<i64> = k.iter().zip(o).map(|(a, b)| a + b).collect();
            if let Some(ids) = buckets.get(&nk) {
                if ids.iter().any(|&j| (&kept[j].0 - &x).norm() < cell) {
                    close = true;
                    break;
                }
            }
        }
        if !close {
            buckets.entry(k).or_default().push(kept.len());
            kept.push((x, r));
        }
    }
    kept.sort_by(|a, b| {
        a.0.iter()
            .zip(b.0.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(ZeroSet {
        points: kept.iter().map(|(x, _)| x.iter().copied().collect()).collect(),
        residuals: kept.iter().map(|(_, r)| *r).collect(),
        spacing: h,
        radius,
        grid,
        candidates,
    })
}
