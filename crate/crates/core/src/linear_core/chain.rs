//! Uniform regularity of families of chain complexes.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::blocks::invertibility;
use super::{
    factorize_regular, spectral_norm, CheckTolerances, LinearError, Matrix, Subspace,
};

pub type ChainMapFn = Arc<dyn Fn(usize, &[f64]) -> Matrix + Send + Sync>;

/// `X_0 → X_1 → … → X_N`, where `map(i, p)` is `T_{i,p}: X_i → X_{i+1}`.
#[derive(Clone)]
pub struct ChainFamily {
    pub spaces: Vec<usize>,
    pub parameter_dim: usize,
    map_fn: ChainMapFn,
}

impl fmt::Debug for ChainFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChainFamily")
            .field("spaces", &self.spaces)
            .field("parameter_dim", &self.parameter_dim)
            .finish()
    }
}

impl ChainFamily {
    pub fn new(spaces: Vec<usize>, parameter_dim: usize, map_fn: ChainMapFn) -> Self {
        Self {
            spaces,
            parameter_dim,
            map_fn,
        }
    }

    /// A constant complex given by its matrices.
    pub fn constant(spaces: Vec<usize>, maps: Vec<Matrix>) -> Self {
        let maps = Arc::new(maps);
        Self::new(spaces, 0, Arc::new(move |i, _| maps[i].clone()))
    }

    /// `T_{i,p}` for `i` in `-1..=N`, with zero maps at both ends.
    pub fn map(&self, i: isize, p: &[f64]) -> Matrix {
        let n = self.spaces.len() as isize;
        if i < 0 {
            return Matrix::zeros(self.spaces.first().copied().unwrap_or(0), 0);
        }
        if i >= n - 1 {
            return Matrix::zeros(0, self.spaces[(n - 1) as usize]);
        }
        (self.map_fn)(i as usize, p)
    }

    fn check_shapes(&self) -> Result<(), LinearError> {
        let zero = vec![0.0; self.parameter_dim];
        for i in 0..self.spaces.len().saturating_sub(1) {
            let t = self.map(i as isize, &zero);
            if t.shape() != (self.spaces[i + 1], self.spaces[i]) {
                return Err(LinearError::DimensionMismatch(format!(
                    "map {i} has shape {:?}, expected ({}, {})",
                    t.shape(),
                    self.spaces[i + 1],
                    self.spaces[i]
                )));
            }
        }
        Ok(())
    }
}

/// `X_i = img T_{i−1,0} ⊕ coimg T_{i,0} ⊕ H_i` at the base point.
#[derive(Debug, Clone, Serialize)]
pub struct ChainDecomposition {
    pub image_dims: Vec<usize>,
    pub coimage_dims: Vec<usize>,
    pub homology_dims: Vec<usize>,
    #[serde(skip)]
    pub homology: Vec<Subspace>,
    pub euler_characteristic: i64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainCertificate {
    pub samples: Vec<Vec<f64>>,
    pub decomposition: ChainDecomposition,
    /// `[sample][i]`: `Δ_{i,p}` restricted to `img Δ_{i,0}` is invertible.
    pub delta_invertible: Vec<Vec<bool>>,
    /// `[sample][i]`: `T̃_{i,p}` is invertible.
    pub tilde_invertible: Vec<Vec<bool>>,
    pub condition_numbers: Vec<Vec<Option<f64>>>,
    pub tolerances: CheckTolerances,
    pub certified: bool,
}

/// Homology decomposition at `p = 0` and sampled invertibility of the
/// Laplace-type operators `Δ_{i,p} = T*_{i,0} T_{i,p} + T_{i−1,p} T*_{i−1,0}`.
pub fn chain_uniform_regularity(
    chain: &ChainFamily,
    samples: &[Vec<f64>],
    tol: CheckTolerances,
) -> Result<ChainCertificate, LinearError> {
    chain.check_shapes()?;
    for (k, p) in samples.iter().enumerate() {
        if p.len() != chain.parameter_dim {
            return Err(LinearError::DimensionMismatch(format!(
                "sample {k} has {} coordinates, expected {}",
                p.len(),
                chain.parameter_dim
            )));
        }
    }
    let zero = vec![0.0; chain.parameter_dim];
    let n = chain.spaces.len();
    let base: Vec<Matrix> = (-1..n as isize).map(|i| chain.map(i, &zero)).collect();
    let at = |i: isize| &base[(i + 1) as usize];

    for i in 0..n.saturating_sub(2) {
        let (a, b) = (at(i as isize), at(i as isize + 1));
        let prod = b * a;
        let scale = (spectral_norm(a) * spectral_norm(b)).max(1.0);
        let residual = if prod.is_empty() { 0.0 } else { prod.amax() };
        if residual > tol.residual * scale {
            return Err(LinearError::NotAComplex { index: i, residual });
        }
    }

    let forms = (-1..n as isize)
        .map(|i| factorize_regular(at(i), tol.rank))
        .collect::<Result<Vec<_>, _>>()?;
    let form = |i: isize| &forms[(i + 1) as usize];

    let mut image_dims = Vec::with_capacity(n);
    let mut coimage_dims = Vec::with_capacity(n);
    let mut homology = Vec::with_capacity(n);
    let mut delta_images = Vec::with_capacity(n);
    for i in 0..n as isize {
        let img_prev = form(i - 1).image.basis();
        let coimg = form(i).coimage.basis();
        let dim = chain.spaces[i as usize];
        let mut joint = Matrix::zeros(dim, img_prev.ncols() + coimg.ncols());
        joint.view_mut((0, 0), img_prev.shape()).copy_from(img_prev);
        joint.view_mut((0, img_prev.ncols()), coimg.shape()).copy_from(coimg);
        let nonharmonic = Subspace::from_spanning(&joint, tol.rank);
        image_dims.push(img_prev.ncols());
        coimage_dims.push(coimg.ncols());
        homology.push(nonharmonic.complement());
        delta_images.push(nonharmonic);
    }
    let homology_dims: Vec<usize> = homology.iter().map(Subspace::dim).collect();
    let euler_characteristic = homology_dims
        .iter()
        .enumerate()
        .map(|(i, &d)| if i % 2 == 0 { d as i64 } else { -(d as i64) })
        .sum();

    let per_sample: Vec<(Vec<bool>, Vec<bool>, Vec<Option<f64>>)> = samples
        .par_iter()
        .map(|p| {
            let maps: Vec<Matrix> = (-1..n as isize).map(|i| chain.map(i, p)).collect();
            let mut d_ok = Vec::with_capacity(n);
            let mut t_ok = Vec::with_capacity(n);
            let mut conds = Vec::with_capacity(n);
            for i in 0..n as isize {
                let idx = (i + 1) as usize;
                let delta = at(i).transpose() * &maps[idx]
                    + &maps[idx - 1] * at(i - 1).transpose();
                let d = delta_images[i as usize].basis();
                let (inv, cond) = invertibility(&(d.transpose() * delta * d), tol.rank);
                d_ok.push(inv);
                conds.push(cond);
                let f = form(i);
                let tilde = f.image.basis().transpose() * &maps[idx] * f.coimage.basis();
                t_ok.push(invertibility(&tilde, tol.rank).0);
            }
            (d_ok, t_ok, conds)
        })
        .collect();

    let mut delta_invertible = Vec::with_capacity(samples.len());
    let mut tilde_invertible = Vec::with_capacity(samples.len());
    let mut condition_numbers = Vec::with_capacity(samples.len());
    for (d, t, c) in per_sample {
        delta_invertible.push(d);
        tilde_invertible.push(t);
        condition_numbers.push(c);
    }
    let certified = delta_invertible.iter().flatten().all(|&b| b)
        && tilde_invertible.iter().flatten().all(|&b| b);
    Ok(ChainCertificate {
        samples: samples.to_vec(),
        decomposition: ChainDecomposition {
            image_dims,
            coimage_dims,
            homology_dims,
            homology,
            euler_characteristic,
        },
        delta_invertible,
        tilde_invertible,
        condition_numbers,
        tolerances: tol,
        certified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_differentials_on_torus_cells() {
        let c = ChainFamily::constant(
            vec![1, 2, 1],
            vec![Matrix::zeros(2, 1), Matrix::zeros(1, 2)],
        );
        let cert = chain_uniform_regularity(&c, &[vec![]], CheckTolerances::default()).unwrap();
        assert_eq!(cert.decomposition.homology_dims, vec![1, 2, 1]);
        assert_eq!(cert.decomposition.euler_characteristic, 0);
        assert!(cert.certified);
    }

    #[test]
    fn zero_maps_keep_full_spaces() {
        let c = ChainFamily::constant(vec![1, 1, 1], vec![Matrix::zeros(1, 1), Matrix::zeros(1, 1)]);
        let cert = chain_uniform_regularity(&c, &[], CheckTolerances::default()).unwrap();
        assert_eq!(cert.decomposition.homology_dims, vec![1, 1, 1]);
    }

    #[test]
    fn isomorphism_is_acyclic() {
        let c = ChainFamily::constant(vec![1, 1], vec![Matrix::identity(1, 1)]);
        let cert = chain_uniform_regularity(&c, &[vec![]], CheckTolerances::default()).unwrap();
        assert_eq!(cert.decomposition.homology_dims, vec![0, 0]);
        assert_eq!(cert.decomposition.euler_characteristic, 0);
        assert!(cert.certified);
    }

    #[test]
    fn non_complex_rejected() {
        let c = ChainFamily::constant(
            vec![1, 1, 1],
            vec![Matrix::identity(1, 1), Matrix::identity(1, 1)],
        );
        assert!(matches!(
            chain_uniform_regularity(&c, &[], CheckTolerances::default()),
            Err(LinearError::NotAComplex { index: 0, .. })
        ));
    }

    #[test]
    fn perturbed_family_regular_near_base() {
        // d(p) = (1 + p) on R → R stays an isomorphism for |p| < 1.
        let c = ChainFamily::new(
            vec![1, 1],
            1,
            Arc::new(|_, p: &[f64]| Matrix::from_element(1, 1, 1.0 + p[0])),
        );
        let samples = vec![vec![-0.5], vec![0.0], vec![0.5]];
        let cert = chain_uniform_regularity(&c, &samples, CheckTolerances::default()).unwrap();
        assert!(cert.certified);
        let bad = chain_uniform_regularity(&c, &[vec![-1.0]], CheckTolerances::default()).unwrap();
        assert!(!bad.certified);
    }
}
