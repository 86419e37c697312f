//! Problem files: JSON descriptions of a map, a base point and an optional group.

use std::path::Path;
use std::sync::Arc;

use normform_core::calculus::parse_expression;
use normform_core::linear_core::from_rows;
use normform_core::symmetry::{generate_matrix_group, CompactGroup, GroupAction, LinearRep};
use normform_core::{parse_expression_map, SharedMap, SymmetryError, Vector};
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::builtins;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema error at `{pointer}`: {message}")]
    Schema { pointer: String, message: String },
    #[error("unknown builtin `{id}`; valid ids: {}", valid.join(", "))]
    UnknownBuiltin { id: String, valid: Vec<String> },
    #[error("invalid group: {0}")]
    Group(#[from] SymmetryError),
}

fn schema(pointer: impl Into<String>, message: impl Into<String>) -> ProblemError {
    ProblemError::Schema {
        pointer: pointer.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapSpec {
    pub outputs: Vec<String>,
    pub vars: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TorusRepSpec {
    pub weights: Vec<Vec<i64>>,
    pub fixed_dims: usize,
    pub translations: Option<Vec<Vec<i64>>>,
}

impl TorusRepSpec {
    pub fn dim(&self) -> usize {
        2 * self.weights.len() + self.fixed_dims
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupSpec {
    /// Generated by `(domain, target)` matrix pairs.
    Finite { generators: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> },
    Torus {
        rank: usize,
        domain: TorusRepSpec,
        target: TorusRepSpec,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProblemSettings {
    /// Rank tolerance.
    pub tol: f64,
    pub radius: f64,
    pub grid: usize,
    pub samples: usize,
}

impl Default for ProblemSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            radius: 0.5,
            grid: 101,
            samples: 100,
        }
    }
}

/// A validated problem. Builtins are expanded into expression maps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemSpec {
    pub name: String,
    pub builtin: Option<String>,
    pub dims: (usize, usize),
    pub map: MapSpec,
    pub base_point: Vec<f64>,
    pub group: Option<GroupSpec>,
    pub settings: ProblemSettings,
}

/// The executable form of a problem.
#[derive(Clone)]
pub struct Problem {
    pub map: SharedMap,
    pub action: GroupAction,
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Problem, ProblemError> {
        let map = parse_expression_map(&self.map.outputs, &self.map.vars)
            .map_err(|e| schema("/map/outputs", e.to_string()))?;
        let action = match &self.group {
            None => GroupAction::trivial(self.dims.0, self.dims.1),
            Some(g) => build_action(g)?,
        };
        Ok(Problem {
            map: Arc::new(map),
            action,
        })
    }

    pub fn base_vector(&self) -> Vector {
        Vector::from_column_slice(&self.base_point)
    }
}

fn build_action(g: &GroupSpec) -> Result<GroupAction, ProblemError> {
    match g {
        GroupSpec::Finite { generators } => {
            let mut pairs = Vec::with_capacity(generators.len());
            for (d, t) in generators {
                pairs.push((
                    from_rows(d).map_err(|e| schema("/group/generators", e.to_string()))?,
                    from_rows(t).map_err(|e| schema("/group/generators", e.to_string()))?,
                ));
            }
            let (group, dom, tgt) = generate_matrix_group(&pairs)?;
            let group = Arc::new(CompactGroup::Finite(group));
            Ok(GroupAction::new(
                LinearRep::finite(Arc::clone(&group), dom)?,
                LinearRep::finite(group, tgt)?,
            )?)
        }
        GroupSpec::Torus {
            rank,
            domain,
            target,
        } => {
            let group = Arc::new(CompactGroup::torus(*rank)?);
            let rep = |r: &TorusRepSpec, g: Arc<CompactGroup>| {
                LinearRep::torus(g, r.weights.clone(), r.fixed_dims, r.translations.clone())
            };
            Ok(GroupAction::new(
                rep(domain, Arc::clone(&group))?,
                rep(target, group)?,
            )?)
        }
    }
}

/// Reads and validates a problem file.
pub fn load_problem(path: &Path) -> Result<ProblemSpec, ProblemError> {
    let text = std::fs::read_to_string(path).map_err(|source| ProblemError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_problem(&text)
}

pub fn parse_problem(text: &str) -> Result<ProblemSpec, ProblemError> {
    let value: Value = serde_json::from_str(text)?;
    problem_from_value(&value)
}

fn object<'a>(v: &'a Value, ptr: &str) -> Result<&'a Map<String, Value>, ProblemError> {
    v.as_object().ok_or_else(|| schema(ptr, "expected an object"))
}

fn check_keys(obj: &Map<String, Value>, ptr: &str, allowed: &[&str]) -> Result<(), ProblemError> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(schema(format!("{ptr}/{k}"), "unknown field")),
        None => Ok(()),
    }
}

fn string_array(v: &Value, ptr: &str) -> Result<Vec<String>, ProblemError> {
    let arr = v.as_array().ok_or_else(|| schema(ptr, "expected an array of strings"))?;
    arr.iter()
        .enumerate()
        .map(|(i, s)| {
            s.as_str()
                .map(str::to_string)
                .ok_or_else(|| schema(format!("{ptr}/{i}"), "expected a string"))
        })
        .collect()
}

fn number(v: &Value, ptr: &str) -> Result<f64, ProblemError> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| schema(ptr, "expected a finite number"))
}

fn count(v: &Value, ptr: &str) -> Result<usize, ProblemError> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| schema(ptr, "expected a non-negative integer"))
}

fn number_array(v: &Value, ptr: &str) -> Result<Vec<f64>, ProblemError> {
    let arr = v.as_array().ok_or_else(|| schema(ptr, "expected an array of numbers"))?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| number(x, &format!("{ptr}/{i}")))
        .collect()
}

fn matrix_rows(v: &Value, ptr: &str, rows: usize, cols: usize) -> Result<Vec<Vec<f64>>, ProblemError> {
    let arr = v.as_array().ok_or_else(|| schema(ptr, "expected an array of rows"))?;
    if arr.len() != rows {
        return Err(schema(ptr, format!("expected {rows} rows, found {}", arr.len())));
    }
    arr.iter()
        .enumerate()
        .map(|(i, r)| {
            let p = format!("{ptr}/{i}");
            let row = number_array(r, &p)?;
            if row.len() != cols {
                return Err(schema(p, format!("expected {cols} entries, found {}", row.len())));
            }
            Ok(row)
        })
        .collect()
}

fn int_rows(v: &Value, ptr: &str, cols: usize) -> Result<Vec<Vec<i64>>, ProblemError> {
    let arr = v.as_array().ok_or_else(|| schema(ptr, "expected an array of integer rows"))?;
    arr.iter()
        .enumerate()
        .map(|(i, r)| {
            let p = format!("{ptr}/{i}");
            let row = r.as_array().ok_or_else(|| schema(&p, "expected an array of integers"))?;
            if row.len() != cols {
                return Err(schema(&p, format!("expected {cols} entries, found {}", row.len())));
            }
            row.iter()
                .enumerate()
                .map(|(j, x)| x.as_i64().ok_or_else(|| schema(format!("{p}/{j}"), "expected an integer")))
                .collect()
        })
        .collect()
}

fn torus_rep(v: &Value, ptr: &str, rank: usize, dim: usize) -> Result<TorusRepSpec, ProblemError> {
    let obj = object(v, ptr)?;
    check_keys(obj, ptr, &["weights", "fixed_dims", "translations"])?;
    let weights = match obj.get("weights") {
        Some(w) => int_rows(w, &format!("{ptr}/weights"), rank)?,
        None => Vec::new(),
    };
    let fixed_dims = match obj.get("fixed_dims") {
        Some(f) => count(f, &format!("{ptr}/fixed_dims"))?,
        None => dim.saturating_sub(2 * weights.len()),
    };
    let spec_dim = 2 * weights.len() + fixed_dims;
    if spec_dim != dim {
        return Err(schema(
            ptr,
            format!("{} weight planes and {fixed_dims} fixed coordinates make dimension {spec_dim}, expected {dim}", weights.len()),
        ));
    }
    let translations = match obj.get("translations") {
        None | Some(Value::Null) => None,
        Some(t) => {
            let p = format!("{ptr}/translations");
            let rows = int_rows(t, &p, rank)?;
            if rows.len() != fixed_dims {
                return Err(schema(p, format!("expected {fixed_dims} rows, one per fixed coordinate")));
            }
            Some(rows)
        }
    };
    Ok(TorusRepSpec {
        weights,
        fixed_dims,
        translations,
    })
}

fn group_spec(v: &Value, n: usize, m: usize) -> Result<GroupSpec, ProblemError> {
    let obj = object(v, "/group")?;
    match obj.get("kind").and_then(Value::as_str) {
        Some("finite") => {
            check_keys(obj, "/group", &["kind", "generators"])?;
            let gens = obj
                .get("generators")
                .and_then(Value::as_array)
                .ok_or_else(|| schema("/group/generators", "expected an array of generators"))?;
            let mut out = Vec::with_capacity(gens.len());
            for (i, g) in gens.iter().enumerate() {
                let p = format!("/group/generators/{i}");
                let go = object(g, &p)?;
                check_keys(go, &p, &["domain", "target"])?;
                let d = go.get("domain").ok_or_else(|| schema(format!("{p}/domain"), "missing"))?;
                let t = go.get("target").ok_or_else(|| schema(format!("{p}/target"), "missing"))?;
                out.push((
                    matrix_rows(d, &format!("{p}/domain"), n, n)?,
                    matrix_rows(t, &format!("{p}/target"), m, m)?,
                ));
            }
            Ok(GroupSpec::Finite { generators: out })
        }
        Some("torus") => {
            check_keys(obj, "/group", &["kind", "rank", "domain", "target"])?;
            let rank = count(
                obj.get("rank").ok_or_else(|| schema("/group/rank", "missing"))?,
                "/group/rank",
            )?;
            let empty = Value::Object(Map::new());
            Ok(GroupSpec::Torus {
                rank,
                domain: torus_rep(obj.get("domain").unwrap_or(&empty), "/group/domain", rank, n)?,
                target: torus_rep(obj.get("target").unwrap_or(&empty), "/group/target", rank, m)?,
            })
        }
        _ => Err(schema("/group/kind", "expected \"finite\" or \"torus\"")),
    }
}

fn settings(v: Option<&Value>, mut base: ProblemSettings) -> Result<ProblemSettings, ProblemError> {
    let Some(v) = v else { return Ok(base) };
    let obj = object(v, "/settings")?;
    check_keys(obj, "/settings", &["tol", "radius", "grid", "samples"])?;
    if let Some(t) = obj.get("tol") {
        base.tol = number(t, "/settings/tol")?;
        if base.tol <= 0.0 {
            return Err(schema("/settings/tol", "must be positive"));
        }
    }
    if let Some(r) = obj.get("radius") {
        base.radius = number(r, "/settings/radius")?;
        if base.radius <= 0.0 {
            return Err(schema("/settings/radius", "must be positive"));
        }
    }
    if let Some(g) = obj.get("grid") {
        base.grid = count(g, "/settings/grid")?;
        if base.grid < 2 {
            return Err(schema("/settings/grid", "needs at least 2 nodes per axis"));
        }
    }
    if let Some(s) = obj.get("samples") {
        base.samples = count(s, "/settings/samples")?;
    }
    Ok(base)
}

pub fn problem_from_value(value: &Value) -> Result<ProblemSpec, ProblemError> {
    let obj = object(value, "")?;
    check_keys(obj, "", &["name", "dims", "map", "base_point", "group", "settings"])?;
    let map = obj.get("map").ok_or_else(|| schema("/map", "missing"))?;
    let mobj = object(map, "/map")?;

    let mut spec = match mobj.get("kind").and_then(Value::as_str) {
        Some("builtin") => {
            check_keys(mobj, "/map", &["kind", "id", "params"])?;
            let id = mobj
                .get("id")
                .and_then(Value::as_str)
                .ok_or_else(|| schema("/map/id", "expected a string"))?;
            if let Some(p) = mobj.get("params") {
                if !object(p, "/map/params")?.is_empty() {
                    return Err(schema("/map/params", format!("builtin `{id}` takes no parameters")));
                }
            }
            builtins::builtin(id)?
        }
        Some("expr") => {
            check_keys(mobj, "/map", &["kind", "outputs", "vars"])?;
            let outputs = string_array(
                mobj.get("outputs").ok_or_else(|| schema("/map/outputs", "missing"))?,
                "/map/outputs",
            )?;
            let vars = string_array(
                mobj.get("vars").ok_or_else(|| schema("/map/vars", "missing"))?,
                "/map/vars",
            )?;
            if outputs.is_empty() {
                return Err(schema("/map/outputs", "needs at least one output"));
            }
            if vars.is_empty() {
                return Err(schema("/map/vars", "needs at least one variable"));
            }
            for (i, v) in vars.iter().enumerate() {
                if vars[..i].contains(v) {
                    return Err(schema(format!("/map/vars/{i}"), format!("duplicate variable `{v}`")));
                }
            }
            for (i, o) in outputs.iter().enumerate() {
                parse_expression(o, &vars).map_err(|e| schema(format!("/map/outputs/{i}"), e.to_string()))?;
            }
            let dims = (vars.len(), outputs.len());
            ProblemSpec {
                name: "unnamed".into(),
                builtin: None,
                dims,
                map: MapSpec { outputs, vars },
                base_point: vec![0.0; dims.0],
                group: None,
                settings: ProblemSettings::default(),
            }
        }
        _ => return Err(schema("/map/kind", "expected \"expr\" or \"builtin\"")),
    };
    let (n, m) = spec.dims;

    if let Some(name) = obj.get("name") {
        spec.name = name
            .as_str()
            .ok_or_else(|| schema("/name", "expected a string"))?
            .to_string();
    }
    if let Some(d) = obj.get("dims") {
        let pair = d.as_array().filter(|a| a.len() == 2).ok_or_else(|| schema("/dims", "expected [dim_in, dim_out]"))?;
        let given = (count(&pair[0], "/dims/0")?, count(&pair[1], "/dims/1")?);
        if given != spec.dims {
            return Err(schema(
                "/dims",
                format!("map has dims ({n}, {m}), problem declares ({}, {})", given.0, given.1),
            ));
        }
    }
    if let Some(b) = obj.get("base_point") {
        let p = number_array(b, "/base_point")?;
        if p.len() != n {
            return Err(schema("/base_point", format!("expected {n} coordinates, found {}", p.len())));
        }
        spec.base_point = p;
    }
    match obj.get("group") {
        None | Some(Value::Null) => {}
        Some(g) => spec.group = Some(group_spec(g, n, m)?),
    }
    spec.settings = settings(obj.get("settings"), spec.settings)?;
    Ok(spec)
}

/// Loads `arg` as a file when it exists, else as a builtin id.
pub fn resolve_problem(arg: &str) -> Result<ProblemSpec, ProblemError> {
    let path = Path::new(arg);
    if path.is_file() {
        load_problem(path)
    } else {
        builtins::builtin(arg)
    }
}

/// `x` as a point of the domain when the lengths agree.
pub fn check_point(spec: &ProblemSpec, x: &[f64]) -> Result<Vector, ProblemError> {
    if x.len() != spec.dims.0 {
        return Err(schema(
            "/base_point",
            format!("point has {} coordinates, map expects {}", x.len(), spec.dims.0),
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(schema("/base_point", "point has non-finite coordinates"));
    }
    Ok(Vector::from_column_slice(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_pitchfork() {
        let p = parse_problem(r#"{"map":{"kind":"builtin","id":"pitchfork_z2"}}"#).unwrap();
        assert_eq!(p.dims, (2, 1));
        assert!(matches!(p.group, Some(GroupSpec::Finite { .. })));
        p.build().unwrap();
    }

    #[test]
    fn expr_problem() {
        let p = parse_problem(r#"{"map":{"kind":"expr","outputs":["y + x^2"],"vars":["x","y"]}}"#).unwrap();
        assert_eq!(p.dims, (2, 1));
        assert!(p.group.is_none());
        assert_eq!(p.base_point, vec![0.0, 0.0]);
    }

    #[test]
    fn misspelled_builtin() {
        let err = parse_problem(r#"{"map":{"kind":"builtin","id":"pitchfrok"}}"#).unwrap_err();
        match err {
            ProblemError::UnknownBuiltin { id, valid } => {
                assert_eq!(id, "pitchfrok");
                assert!(valid.contains(&"pitchfork_z2".to_string()));
            }
            e => panic!("unexpected {e}"),
        }
    }

    fn pointer_of(text: &str) -> String {
        match parse_problem(text).unwrap_err() {
            ProblemError::Schema { pointer, .. } => pointer,
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn schema_pointers() {
        assert_eq!(pointer_of(r#"{"map":{"kind":"expr","outputs":["x +"],"vars":["x"]}}"#), "/map/outputs/0");
        assert_eq!(
            pointer_of(r#"{"map":{"kind":"expr","outputs":["x"],"vars":["x"]},"base_point":[0,1]}"#),
            "/base_point"
        );
        assert_eq!(
            pointer_of(r#"{"map":{"kind":"expr","outputs":["x"],"vars":["x"]},"dims":[1,2]}"#),
            "/dims"
        );
        assert_eq!(
            pointer_of(r#"{"map":{"kind":"expr","outputs":["x"],"vars":["x"]},"settings":{"grid":1}}"#),
            "/settings/grid"
        );
        assert_eq!(pointer_of(r#"{"map":{"kind":"expr","outputs":["x"],"vars":["x"]},"colour":1}"#), "/colour");
        assert_eq!(
            pointer_of(
                r#"{"map":{"kind":"expr","outputs":["x"],"vars":["x","y"]},
                   "group":{"kind":"finite","generators":[{"domain":[[1,0]],"target":[[1]]}]}}"#
            ),
            "/group/generators/0/domain"
        );
        assert_eq!(
            pointer_of(
                r#"{"map":{"kind":"expr","outputs":["x"],"vars":["x","y"]},
                   "group":{"kind":"torus","rank":1,"domain":{"weights":[[1,2]]}}}"#
            ),
            "/group/domain/weights/0"
        );
    }

    #[test]
    fn explicit_torus_group() {
        let p = parse_problem(
            r#"{"name":"c","map":{"kind":"expr","outputs":["x*(x^2+y^2)","y*(x^2+y^2)"],"vars":["x","y"]},
               "group":{"kind":"torus","rank":1,"domain":{"weights":[[1]]},"target":{"weights":[[1]]}}}"#,
        )
        .unwrap();
        let built = p.build().unwrap();
        assert_eq!(built.action.domain.dim(), 2);
    }

    #[test]
    fn non_orthogonal_generator_is_rejected_on_build() {
        let p = parse_problem(
            r#"{"map":{"kind":"expr","outputs":["x"],"vars":["x"]},
               "group":{"kind":"finite","generators":[{"domain":[[2]],"target":[[2]]}]}}"#,
        )
        .unwrap();
        assert!(p.build().is_err());
    }
}
