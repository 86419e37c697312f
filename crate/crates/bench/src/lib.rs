//! Fixed inputs shared by the benchmarks.

use std::sync::Arc;

use normform_core::symmetry::{generate_matrix_group, CompactGroup, GroupAction, LinearRep};
use normform_core::{parse_expression_map, Matrix, SharedMap};

/// Deterministic `m × n` matrix of rank `r`.
pub fn low_rank(m: usize, n: usize, r: usize) -> Matrix {
    let a = Matrix::from_fn(m, r, |i, j| ((i * 31 + j * 17) as f64 * 0.37).sin());
    let b = Matrix::from_fn(r, n, |i, j| ((i * 13 + j * 29) as f64 * 0.61).cos());
    a * b
}

pub fn expr(outputs: &[&str], vars: &[&str]) -> SharedMap {
    let vars: Vec<String> = vars.iter().map(|s| s.to_string()).collect();
    Arc::new(parse_expression_map(outputs, &vars).expect("valid expressions"))
}

/// `l*x - x^3` with `x ↦ −x` acting on both sides.
pub fn pitchfork() -> (SharedMap, GroupAction) {
    let (g, dom, tgt) = generate_matrix_group(&[(
        Matrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]),
        Matrix::from_element(1, 1, -1.0),
    )])
    .expect("reflection generates Z2");
    let g = Arc::new(CompactGroup::Finite(g));
    let action = GroupAction::new(
        LinearRep::finite(Arc::clone(&g), dom).expect("orthogonal"),
        LinearRep::finite(g, tgt).expect("orthogonal"),
    )
    .expect("matching groups");
    (expr(&["l*x - x^3"], &["x", "l"]), action)
}
