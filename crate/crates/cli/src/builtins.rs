//! Registry of built-in example problems.

use normform_core::moduli::DiscreteComplex;

use crate::problem::{GroupSpec, MapSpec, ProblemError, ProblemSettings, ProblemSpec, TorusRepSpec};

/// Builtin ids, in listing order.
pub const BUILTIN_IDS: &[&str] = &[
    "pitchfork_z2",
    "cusp",
    "constant_rank_demo",
    "flat_u1_torus",
    "flat_u1_wedge",
    "circle_cubic",
    "square",
    "cubic_graph",
];

fn expr(name: &str, outputs: &[&str], vars: &[&str], group: Option<GroupSpec>) -> ProblemSpec {
    ProblemSpec {
        name: name.to_string(),
        builtin: Some(name.to_string()),
        dims: (vars.len(), outputs.len()),
        map: MapSpec {
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            vars: vars.iter().map(|s| s.to_string()).collect(),
        },
        base_point: vec![0.0; vars.len()],
        group,
        settings: ProblemSettings::default(),
    }
}

fn gauge(c: DiscreteComplex) -> ProblemSpec {
    let outputs = c.curvature_expressions();
    let vars = c.edge_names();
    let group = GroupSpec::Torus {
        rank: c.vertices,
        domain: TorusRepSpec {
            weights: Vec::new(),
            fixed_dims: c.edges.len(),
            translations: Some(c.d0()),
        },
        target: TorusRepSpec {
            weights: Vec::new(),
            fixed_dims: c.faces.len(),
            translations: None,
        },
    };
    ProblemSpec {
        name: c.name.clone(),
        builtin: Some(c.name.clone()),
        dims: (vars.len(), outputs.len()),
        map: MapSpec { outputs, vars },
        base_point: vec![0.0; c.edges.len()],
        group: Some(group),
        settings: ProblemSettings::default(),
    }
}

/// Expands a builtin id. `pitchfork` is accepted for `pitchfork_z2`.
pub fn builtin(id: &str) -> Result<ProblemSpec, ProblemError> {
    Ok(match id {
        "pitchfork_z2" | "pitchfork" => expr(
            "pitchfork_z2",
            &["l*x - x^3"],
            &["x", "l"],
            Some(GroupSpec::Finite {
                generators: vec![(vec![vec![-1.0, 0.0], vec![0.0, 1.0]], vec![vec![-1.0]])],
            }),
        ),
        "cusp" => expr("cusp", &["x", "y^3 + x*y"], &["x", "y"], None),
        "constant_rank_demo" => expr(
            "constant_rank_demo",
            &["x + y^2", "sin(x + y^2)"],
            &["x", "y"],
            None,
        ),
        "flat_u1_torus" => gauge(DiscreteComplex::rose_torus()),
        "flat_u1_wedge" => gauge(DiscreteComplex::wedge_sphere()),
        "circle_cubic" => {
            let rep = TorusRepSpec {
                weights: vec![vec![1]],
                fixed_dims: 0,
                translations: None,
            };
            expr(
                "circle_cubic",
                &["x*(x^2 + y^2)", "y*(x^2 + y^2)"],
                &["x", "y"],
                Some(GroupSpec::Torus {
                    rank: 1,
                    domain: rep.clone(),
                    target: rep,
                }),
            )
        }
        "square" => expr("square", &["x^2"], &["x"], None),
        "cubic_graph" => expr("cubic_graph", &["y + x^3"], &["x", "y"], None),
        _ => {
            return Err(ProblemError::UnknownBuiltin {
                id: id.to_string(),
                valid: BUILTIN_IDS.iter().map(|s| s.to_string()).collect(),
            })
        }
    })
}
