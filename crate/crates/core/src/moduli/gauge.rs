//! Discrete U(1) gauge theory on small cell complexes.
//!
//! Connections are edge angles, gauge transformations are vertex angles acting
//! by `a ↦ a + d₀θ`, and curvature is `d₁a`. Abelian curvature is linear, so
//! all the interesting structure sits in the cochain complex.

use std::sync::Arc;

use crate::calculus::{parse_expression_map, ExprMap};
use crate::linear_core::{ChainFamily, Matrix};
use crate::symmetry::{CompactGroup, GroupAction, LinearRep, SymmetryError};

/// A 2-dimensional cell complex given by incidence data.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteComplex {
    pub name: String,
    pub vertices: usize,
    /// `(tail, head)` per edge.
    pub edges: Vec<(usize, usize)>,
    /// Boundary words: `(edge, ±1)` per letter.
    pub faces: Vec<Vec<(usize, i64)>>,
}

impl DiscreteComplex {
    /// One vertex, edges `a`, `b` and one face with boundary `a b a⁻¹ b⁻¹`.
    pub fn rose_torus() -> Self {
        Self {
            name: "flat_u1_torus".into(),
            vertices: 1,
            edges: vec![(0, 0), (0, 0)],
            faces: vec![vec![(0, 1), (1, 1), (0, -1), (1, -1)]],
        }
    }

    /// Two vertices joined by two edges, with two faces bounded by `a b⁻¹`
    /// and `b a⁻¹`; a cell structure on the 2-sphere.
    pub fn wedge_sphere() -> Self {
        Self {
            name: "flat_u1_wedge".into(),
            vertices: 2,
            edges: vec![(0, 1), (0, 1)],
            faces: vec![vec![(0, 1), (1, -1)], vec![(1, 1), (0, -1)]],
        }
    }

    pub fn edge_names(&self) -> Vec<String> {
        (0..self.edges.len())
            .map(|i| {
                if i < 26 {
                    ((b'a' + i as u8) as char).to_string()
                } else {
                    format!("e{i}")
                }
            })
            .collect()
    }

    /// `d₀`: edges × vertices, `(d₀θ)_e = θ_head − θ_tail`.
    pub fn d0(&self) -> Vec<Vec<i64>> {
        self.edges
            .iter()
            .map(|&(t, h)| {
                let mut row = vec![0; self.vertices];
                row[t] -= 1;
                row[h] += 1;
                row
            })
            .collect()
    }

    /// `d₁`: faces × edges, signed letter counts of each boundary word.
    pub fn d1(&self) -> Vec<Vec<i64>> {
        self.faces
            .iter()
            .map(|word| {
                let mut row = vec![0; self.edges.len()];
                for &(e, s) in word {
                    row[e] += s;
                }
                row
            })
            .collect()
    }

    /// The holonomy of each face written letter by letter, e.g. `a + b - a - b`.
    pub fn curvature_expressions(&self) -> Vec<String> {
        let names = self.edge_names();
        self.faces
            .iter()
            .map(|word| {
                let mut out = String::new();
                for (i, &(e, s)) in word.iter().enumerate() {
                    match (i, s > 0) {
                        (0, true) => out.push_str(&names[e]),
                        (0, false) => out.push_str(&format!("-{}", names[e])),
                        (_, true) => out.push_str(&format!(" + {}", names[e])),
                        (_, false) => out.push_str(&format!(" - {}", names[e])),
                    }
                }
                out
            })
            .collect()
    }

    pub fn curvature_map(&self) -> ExprMap {
        parse_expression_map(&self.curvature_expressions(), &self.edge_names())
            .expect("generated curvature expressions parse")
    }

    /// Vertex gauge group `U(1)^V` translating edge angles; trivial on faces.
    pub fn gauge_action(&self) -> Result<GroupAction, SymmetryError> {
        let g = Arc::new(CompactGroup::torus(self.vertices)?);
        let domain = LinearRep::torus(Arc::clone(&g), Vec::new(), self.edges.len(), Some(self.d0()))?;
        let target = LinearRep::torus(g, Vec::new(), self.faces.len(), None)?;
        GroupAction::new(domain, target)
    }

    /// The cellular cochain complex `R^V → R^E → R^F`.
    pub fn cochain_complex(&self) -> ChainFamily {
        let to_matrix = |rows: Vec<Vec<i64>>, cols: usize| {
            Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j] as f64)
        };
        ChainFamily::constant(
            vec![self.vertices, self.edges.len(), self.faces.len()],
            vec![
                to_matrix(self.d0(), self.vertices),
                to_matrix(self.d1(), self.edges.len()),
            ],
        )
    }

    /// `V − E + F`.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }
}
