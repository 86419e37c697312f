//! Integer lattices describing closed subgroups of tori.
//!
//! A lattice `Λ ⊆ Z^k`, given by its rows, determines the closed subgroup
//! `ann(Λ) = {θ ∈ T^k : Λθ ∈ 2πZ}`. Every closed subgroup arises this way and
//! inclusions reverse: `ann(Λ) ⊆ ann(Λ')` exactly when `Λ' ⊆ Λ`.

pub type IntMatrix = Vec<Vec<i64>>;

fn ext_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    if b == 0 {
        if a < 0 {
            (-a, -1, 0)
        } else {
            (a, 1, 0)
        }
    } else {
        let (g, x, y) = ext_gcd(b, a.rem_euclid(b));
        (g, y, x - a.div_euclid(b) * y)
    }
}

/// Row-style Hermite normal form with zero rows removed.
///
/// Pivots are positive and entries above each pivot lie in `[0, pivot)`, so
/// two row sets span the same lattice exactly when their forms are equal.
pub fn hermite_normal_form(rows: &[Vec<i64>], cols: usize) -> IntMatrix {
    let mut a: IntMatrix = rows.iter().filter(|r| r.iter().any(|&v| v != 0)).cloned().collect();
    let mut pivot_row = 0;
    for c in 0..cols {
        if pivot_row >= a.len() {
            break;
        }
        // Combine every row below into the pivot row with gcd steps.
        for i in pivot_row + 1..a.len() {
            if a[i][c] == 0 {
                continue;
            }
            let (p, q) = (a[pivot_row][c], a[i][c]);
            let (g, x, y) = ext_gcd(p, q);
            let (u, v) = (p / g, q / g);
            let rp = a[pivot_row].clone();
            let ri = a[i].clone();
            for j in 0..cols {
                a[pivot_row][j] = x * rp[j] + y * ri[j];
                a[i][j] = -v * rp[j] + u * ri[j];
            }
        }
        if a[pivot_row][c] == 0 {
            continue;
        }
        if a[pivot_row][c] < 0 {
            for v in a[pivot_row].iter_mut() {
                *v = -*v;
            }
        }
        let p = a[pivot_row][c];
        for i in 0..pivot_row {
            let q = a[i][c].div_euclid(p);
            if q != 0 {
                for j in 0..cols {
                    a[i][j] -= q * a[pivot_row][j];
                }
            }
        }
        pivot_row += 1;
    }
    a.truncate(pivot_row);
    a.retain(|r| r.iter().any(|&v| v != 0));
    a
}

/// Diagonalization `U Λ V = diag(d)` with unimodular `U`, `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagonalization {
    /// Nonzero diagonal entries, all positive.
    pub divisors: Vec<i64>,
    /// `V` (k × k, unimodular). Columns beyond `divisors.len()` span the
    /// Lie algebra of `ann(Λ)`.
    pub v: IntMatrix,
}

impl Diagonalization {
    pub fn rank(&self) -> usize {
        self.divisors.len()
    }

    /// Number of connected components of `ann(Λ)`.
    pub fn components(&self) -> u64 {
        self.divisors.iter().map(|&d| d as u64).product()
    }
}

/// Smith-type diagonalization of the lattice spanned by `rows` in `Z^cols`.
pub fn diagonalize(rows: &[Vec<i64>], cols: usize) -> Diagonalization {
    let mut a: IntMatrix = rows.to_vec();
    let r = a.len();
    let mut v: IntMatrix = (0..cols)
        .map(|i| (0..cols).map(|j| i64::from(i == j)).collect())
        .collect();
    let col_op = |a: &mut IntMatrix, v: &mut IntMatrix, src: usize, dst: usize, factor: i64| {
        // column dst -= factor * column src
        for row in a.iter_mut() {
            row[dst] -= factor * row[src];
        }
        for row in v.iter_mut() {
            row[dst] -= factor * row[src];
        }
    };
    let swap_cols = |a: &mut IntMatrix, v: &mut IntMatrix, i: usize, j: usize| {
        for row in a.iter_mut() {
            row.swap(i, j);
        }
        for row in v.iter_mut() {
            row.swap(i, j);
        }
    };
    let mut divisors = Vec::new();
    let mut t = 0;
    while t < r.min(cols) {
        // Smallest nonzero entry in the trailing block becomes the pivot.
        let mut best: Option<(usize, usize)> = None;
        for i in t..r {
            for j in t..cols {
                if a[i][j] != 0 && best.map_or(true, |(bi, bj)| a[i][j].abs() < a[bi][bj].abs()) {
                    best = Some((i, j));
                }
            }
        }
        let Some((pi, pj)) = best else { break };
        a.swap(t, pi);
        swap_cols(&mut a, &mut v, t, pj);
        let mut clean = true;
        for i in t + 1..r {
            let q = a[i][t].div_euclid(a[t][t]);
            if q != 0 {
                let pivot = a[t].clone();
                for j in 0..cols {
                    a[i][j] -= q * pivot[j];
                }
            }
            clean &= a[i][t] == 0;
        }
        for j in t + 1..cols {
            let q = a[t][j].div_euclid(a[t][t]);
            if q != 0 {
                col_op(&mut a, &mut v, t, j, q);
            }
            clean &= a[t][j] == 0;
        }
        if clean {
            divisors.push(a[t][t].abs());
            t += 1;
        }
    }
    Diagonalization { divisors, v }
}

/// Whether `row` lies in the lattice spanned by `basis` (in Hermite form).
pub fn lattice_contains(basis: &[Vec<i64>], row: &[i64], cols: usize) -> bool {
    let mut rest = row.to_vec();
    for b in basis {
        let Some(c) = b.iter().position(|&x| x != 0) else { continue };
        if rest[c] % b[c] != 0 {
            return false;
        }
        let q = rest[c] / b[c];
        for j in 0..cols {
            rest[j] -= q * b[j];
        }
    }
    rest.iter().all(|&x| x == 0)
}

/// `Λ' ⊆ Λ` for lattices given in Hermite form.
pub fn sublattice(inner: &[Vec<i64>], outer: &[Vec<i64>], cols: usize) -> bool {
    inner.iter().all(|r| lattice_contains(outer, r, cols))
}
