//! Reproducible low-discrepancy sampling.
//!
//! Verification sets are drawn from a Halton sequence with a seeded
//! Cranley-Patterson rotation, so the same seed always yields the same points.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [u64; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Rotated Halton sequence in the unit cube `[0, 1)^dim`.
#[derive(Debug, Clone)]
pub struct Halton {
    dim: usize,
    index: u64,
    shift: Vec<f64>,
}

impl Halton {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim <= PRIMES.len(), "Halton sequence supports at most 24 dimensions");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = (0..dim).map(|_| rng.random::<f64>()).collect();
        Self {
            dim,
            index: 1,
            shift,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let i = self.index;
        self.index += 1;
        (0..self.dim)
            .map(|d| (radical_inverse(i, PRIMES[d]) + self.shift[d]).fract())
            .collect()
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// `count` points in the closed Euclidean ball of the given radius.
pub fn ball_samples(dim: usize, radius: f64, count: usize, seed: u64) -> Vec<DVector<f64>> {
    if dim == 0 {
        return vec![DVector::zeros(0); count];
    }
    let mut seq = Halton::new(dim, seed);
    let mut out = Vec::with_capacity(count);
    // Rejection from the enclosing cube; acceptance ratio is fine up to a few dimensions.
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        let u = seq.next_point();
        let v = DVector::from_iterator(dim, u.iter().map(|t| 2.0 * t - 1.0));
        if v.norm() <= 1.0 {
            out.push(v * radius);
        } else if attempts > 1000 * count.max(1) {
            break;
        }
    }
    out
}

/// `count` points on the sphere of the given radius.
pub fn sphere_samples(dim: usize, radius: f64, count: usize, seed: u64) -> Vec<DVector<f64>> {
    if dim == 0 {
        return Vec::new();
    }
    let mut seq = Halton::new(dim, seed ^ 0x5bd1_e995);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = seq.next_point();
        let v = DVector::from_iterator(dim, u.iter().map(|t| 2.0 * t - 1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            out.push(v * (radius / n));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base_two() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
    }

    #[test]
    fn same_seed_same_points() {
        let a = ball_samples(3, 0.5, 20, 7);
        let b = ball_samples(3, 0.5, 20, 7);
        assert_eq!(a, b);
        let c = ball_samples(3, 0.5, 20, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn samples_respect_radius() {
        for p in ball_samples(4, 0.3, 100, 1) {
            assert!(p.norm() <= 0.3 + 1e-15);
        }
        for p in sphere_samples(2, 2.0, 10, 1) {
            assert!((p.norm() - 2.0).abs() < 1e-12);
        }
    }
}
