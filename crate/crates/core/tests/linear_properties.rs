use normform_core::linear_core::{
    block_inverse_schur, fredholm_index, spectral_norm, BlockMatrix, Matrix,
};
use normform_core::factorize_regular;
use proptest::prelude::*;

/// `(m, n, r, a, b)` with `a` of size `m × r` and `b` of size `r × n`.
fn low_rank() -> impl Strategy<Value = (usize, usize, usize, Vec<f64>, Vec<f64>)> {
    (1usize..24, 1usize..24)
        .prop_flat_map(|(m, n)| (Just(m), Just(n), 0..=m.min(n)))
        .prop_flat_map(|(m, n, r)| {
            (
                Just(m),
                Just(n),
                Just(r),
                prop::collection::vec(-1.0f64..1.0, m * r),
                prop::collection::vec(-1.0f64..1.0, r * n),
            )
        })
}

fn product(m: usize, n: usize, r: usize, a: &[f64], b: &[f64]) -> Matrix {
    Matrix::from_row_slice(m, r, a) * Matrix::from_row_slice(r, n, b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn factorization_of_low_rank_products((m, n, r, a, b) in low_rank()) {
        let t = product(m, n, r, &a, &b);
        let nf = factorize_regular(&t, 1e-10).unwrap();
        let scale = spectral_norm(&t);
        prop_assert!(nf.reconstruction_residual(&t) <= 1e-9 * scale.max(f64::MIN_POSITIVE));
        prop_assert!(nf.orthogonality_residual() <= 1e-10);
        // Random factors have full rank almost surely, but a tiny product can
        // legitimately lose rank against the relative cutoff.
        prop_assert!(nf.rank() <= r);
        prop_assert_eq!(nf.kernel.dim() + nf.rank(), n);
        prop_assert_eq!(nf.cokernel.dim() + nf.rank(), m);
        prop_assert_eq!(fredholm_index(&t, 1e-10).unwrap(), n as i64 - m as i64);
    }

    #[test]
    fn schur_block_inverse_matches_direct(
        entries in prop::collection::vec(-1.0f64..1.0, 36),
        k in 1usize..6,
    ) {
        let a = Matrix::from_row_slice(6, 6, &entries) + Matrix::identity(6, 6) * 3.0;
        let a11_inv = a.view((0, 0), (k, k)).into_owned().try_inverse().unwrap();
        let b = BlockMatrix::new(a.try_inverse().unwrap(), k, k).unwrap();
        let s = block_inverse_schur(&b, 1e-12).unwrap();
        prop_assert!((s - a11_inv).amax() <= 1e-9);
    }
}

#[test]
fn rank_one_outer_product_regression() {
    // Low-rank inputs of this shape broke the previous SVD backend.
    let u: Vec<f64> = (0..31).map(|i| ((i * 7) % 11) as f64 / 11.0 - 0.5).collect();
    let v: Vec<f64> = (0..29).map(|i| ((i * 5) % 13) as f64 / 13.0 - 0.4).collect();
    let t = Matrix::from_fn(31, 29, |i, j| u[i] * v[j]);
    let nf = factorize_regular(&t, 1e-10).unwrap();
    assert_eq!(nf.rank(), 1);
    assert!(nf.reconstruction_residual(&t) <= 1e-12 * spectral_norm(&t));
}
