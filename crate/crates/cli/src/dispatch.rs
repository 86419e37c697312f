//! Command dispatch: runs a module pipeline on a problem and builds the report.

use std::sync::Arc;

use normform_core::calculus::CalculusError;
use normform_core::linear_core::{factorize_regular, fredholm_index, to_rows, LinearError};
use normform_core::moduli::{
    deformation_complex, explore_zero_set, kuranishi_chart, stratify, virtual_dimension,
    ApproximationVerdict, ExploreSettings, KuranishiSettings, ModuliError, StratifySettings,
    ZeroSet,
};
use normform_core::normal_form::neighborhood_samples;
use normform_core::sampling::ball_samples;
use normform_core::symmetry::{equivariant_normal_form, EquivariantSettings};
use normform_core::{
    classify_point, lyapunov_schmidt, normal_form_at, NormalFormError, NormalFormSettings,
    SymmetryError, Vector,
};
use serde_json::{json, Value};
use thiserror::Error;

use crate::problem::{check_point, Problem, ProblemError, ProblemSpec};
use crate::report::{linear_normal_form_json, non_finite_paths, stratification_csv, timestamp, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Factorize,
    Index,
    Classify,
    NormalForm,
    Reduce,
    Equivariant,
    Kuranishi,
    Stratify,
    Complex,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Factorize => "factorize",
            Command::Index => "index",
            Command::Classify => "classify",
            Command::NormalForm => "normal-form",
            Command::Reduce => "reduce",
            Command::Equivariant => "equivariant",
            Command::Kuranishi => "kuranishi",
            Command::Stratify => "stratify",
            Command::Complex => "complex",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Command-line overrides of the problem settings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Flags {
    pub point: Option<Vec<f64>>,
    pub tol: Option<f64>,
    pub radius: Option<f64>,
    pub grid: Option<usize>,
    pub format: Format,
    pub seed: Option<u64>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("{0}")]
    Input(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    /// 1 for verification failures, 2 for bad input.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 1,
            _ => 2,
        }
    }
}

impl From<LinearError> for CliError {
    fn from(e: LinearError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<CalculusError> for CliError {
    fn from(e: CalculusError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<NormalFormError> for CliError {
    fn from(e: NormalFormError) -> Self {
        match e {
            NormalFormError::VerificationFailure { .. } | NormalFormError::NewtonFailure { .. } => {
                CliError::Verification(e.to_string())
            }
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<SymmetryError> for CliError {
    fn from(e: SymmetryError) -> Self {
        match e {
            SymmetryError::NormalForm(inner) => inner.into(),
            SymmetryError::NotFixedPoint { .. }
            | SymmetryError::EquivarianceViolation { .. }
            | SymmetryError::NotInvariantInput { .. }
            | SymmetryError::SubspaceNotInvariant { .. }
            | SymmetryError::RadiusNotFound { .. } => CliError::Verification(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<ModuliError> for CliError {
    fn from(e: ModuliError) -> Self {
        match e {
            ModuliError::Symmetry(inner) => inner.into(),
            ModuliError::NormalForm(inner) => inner.into(),
            ModuliError::ObstructionCheck { .. } | ModuliError::CorrespondenceFailure { .. } => {
                CliError::Verification(e.to_string())
            }
            _ => CliError::Input(e.to_string()),
        }
    }
}

/// Rendered output of a command.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    /// CSV rendering, for commands that support it.
    pub csv: Option<String>,
}

impl Outcome {
    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Json => Ok(self.report.to_json()),
            Format::Csv => self.csv.clone().ok_or_else(|| {
                CliError::Input(format!("CSV output is not available for `{}`", self.report.command))
            }),
        }
    }
}

struct Context<'a> {
    spec: &'a ProblemSpec,
    problem: Problem,
    point: Vector,
    tol: f64,
    radius: f64,
    grid: usize,
    samples: usize,
    seed: u64,
    warnings: Vec<String>,
}

impl Context<'_> {
    fn normal_form_settings(&self) -> NormalFormSettings {
        NormalFormSettings {
            radius: self.radius,
            rank_tol: self.tol,
            seed: self.seed,
            ..NormalFormSettings::default()
        }
    }

    fn equivariant_settings(&self) -> EquivariantSettings {
        EquivariantSettings {
            normal_form: self.normal_form_settings(),
            samples: self.samples,
            ..EquivariantSettings::default()
        }
    }

    fn kuranishi_settings(&self) -> KuranishiSettings {
        KuranishiSettings {
            equivariant: self.equivariant_settings(),
            ..KuranishiSettings::default()
        }
    }
}

fn point_json(x: &Vector) -> Vec<f64> {
    x.iter().copied().collect()
}

/// Runs `command` on the problem and assembles the report.
pub fn dispatch(command: Command, spec: &ProblemSpec, flags: &Flags) -> Result<Outcome, CliError> {
    let problem = spec.build()?;
    let point = match &flags.point {
        Some(p) => check_point(spec, p)?,
        None => spec.base_vector(),
    };
    let positive = |v: Option<f64>, name: &str, default: f64| match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => {
            Err(CliError::Input(format!("--{name} must be a positive number")))
        }
        Some(x) => Ok(x),
        None => Ok(default),
    };
    let grid = flags.grid.unwrap_or(spec.settings.grid);
    if grid < 2 {
        return Err(CliError::Input("--grid needs at least 2 nodes per axis".into()));
    }
    let mut ctx = Context {
        spec,
        problem,
        point,
        tol: positive(flags.tol, "tol", spec.settings.tol)?,
        radius: positive(flags.radius, "radius", spec.settings.radius)?,
        grid,
        samples: spec.settings.samples,
        seed: flags.seed.unwrap_or(0),
        warnings: Vec::new(),
    };
    let (payload, verified, csv) = match command {
        Command::Factorize => factorize(&ctx)?,
        Command::Index => index(&ctx)?,
        Command::Classify => classify(&ctx),
        Command::NormalForm => normal_form(&ctx)?,
        Command::Reduce => reduce(&ctx)?,
        Command::Equivariant => equivariant(&mut ctx)?,
        Command::Kuranishi => kuranishi(&mut ctx)?,
        Command::Stratify => stratify_command(&mut ctx)?,
        Command::Complex => complex(&ctx)?,
    };
    let mut warnings = ctx.warnings;
    for p in non_finite_paths(&payload) {
        warnings.push(format!("non-finite value at {p}"));
    }
    let report = Report {
        command: command.name().to_string(),
        problem: spec.name.clone(),
        timestamp: timestamp(flags.seed),
        status: if verified { "ok" } else { "verification_failed" }.to_string(),
        payload,
        warnings,
    };
    Ok(Outcome { report, csv })
}

type Payload = (Value, bool, Option<String>);

fn factorize(ctx: &Context) -> Result<Payload, CliError> {
    let t = ctx.problem.map.jacobian(&ctx.point);
    let nf = factorize_regular(&t, ctx.tol)?;
    let norm = t.norm();
    let recon = nf.reconstruction_residual(&t);
    let ok = recon <= 1e-9 * norm || recon == 0.0;
    let ok = ok && nf.orthogonality_residual() <= 1e-10;
    let mut v = linear_normal_form_json(&nf, &t);
    v["point"] = json!(point_json(&ctx.point));
    v["jacobian"] = json!(to_rows(&t));
    Ok((v, ok, None))
}

fn index(ctx: &Context) -> Result<Payload, CliError> {
    let t = ctx.problem.map.jacobian(&ctx.point);
    let index = fredholm_index(&t, ctx.tol)?;
    let nf = factorize_regular(&t, ctx.tol)?;
    let v = json!({
        "point": point_json(&ctx.point),
        "dims": [t.ncols(), t.nrows()],
        "rank": nf.rank(),
        "kernel_dim": nf.kernel.dim(),
        "cokernel_dim": nf.cokernel.dim(),
        "index": index,
    });
    Ok((v, index == t.ncols() as i64 - t.nrows() as i64, None))
}

fn classify(ctx: &Context) -> Payload {
    let samples = neighborhood_samples(&ctx.point, ctx.radius, ctx.samples, ctx.seed);
    let f = ctx.problem.map.as_ref();
    let c = classify_point(f, &ctx.point, &samples, ctx.tol);
    let rank = factorize_regular(&f.jacobian(&ctx.point), ctx.tol).map(|nf| nf.rank()).ok();
    let v = json!({
        "point": point_json(&ctx.point),
        "classification": c.to_string(),
        "detail": c,
        "rank_at_point": rank,
        "samples": samples.len(),
        "sample_radius": ctx.radius,
    });
    (v, true, None)
}

fn normal_form(ctx: &Context) -> Result<Payload, CliError> {
    let nf = normal_form_at(Arc::clone(&ctx.problem.map), &ctx.point, &ctx.normal_form_settings())?;
    let v = json!({
        "point": point_json(&ctx.point),
        "base_value": point_json(&nf.base_value),
        "kernel_dim": nf.kernel_dim(),
        "rank": nf.rank(),
        "cokernel_dim": nf.cokernel_dim(),
        "core": to_rows(&nf.core),
        "radius": nf.radius,
        "linear": linear_normal_form_json(&nf.linear, &ctx.problem.map.jacobian(&ctx.point)),
        "verification": nf.verification,
    });
    Ok((v, true, None))
}

fn reduce(ctx: &Context) -> Result<Payload, CliError> {
    let rp = lyapunov_schmidt(Arc::clone(&ctx.problem.map), &ctx.point, &ctx.normal_form_settings())?;
    let shown: Vec<Value> = ball_samples(rp.kernel_dim, 0.5 * rp.radius, 5, ctx.seed)
        .iter()
        .map(|x1| {
            json!({
                "x1": point_json(x1),
                "x2": point_json(&rp.implicit_solution.eval(x1)),
                "reduced": point_json(&rp.reduced_map.eval(x1)),
            })
        })
        .collect();
    let v = json!({
        "point": point_json(&ctx.point),
        "kernel_dim": rp.kernel_dim,
        "cokernel_dim": rp.cokernel_dim,
        "radius": rp.radius,
        "agreement_residual": rp.agreement_residual,
        "agreement_samples": rp.agreement_samples,
        "samples": shown,
    });
    Ok((v, true, None))
}

fn equivariant(ctx: &mut Context) -> Result<Payload, CliError> {
    if ctx.spec.group.is_none() {
        ctx.warnings.push("problem has no group; using the trivial group".into());
    }
    let enf = equivariant_normal_form(
        Arc::clone(&ctx.problem.map),
        &ctx.point,
        &ctx.problem.action,
        &ctx.equivariant_settings(),
    )?;
    let fp = &enf.fixed_point;
    let v = json!({
        "point": point_json(&ctx.point),
        "group": ctx.problem.action.group().kind(),
        "value_stabilizer": enf.value_stabilizer,
        "slice": enf.slice,
        "classification": enf.classification.to_string(),
        "kernel_dim": fp.kernel_dim(),
        "cokernel_dim": fp.cokernel_dim(),
        "radius": fp.normal_form.radius,
        "verification": fp.normal_form.verification,
        "input_equivariance_residual": fp.input_equivariance_residual,
        "fs_equivariance_residual": fp.fs_equivariance_residual,
        "subspace_invariance_residual": fp.subspace_invariance_residual,
        "complement_invariance_residual": fp.complement_invariance_residual,
        "equivariance_samples": fp.samples,
        "tube_residual": enf.tube_residual,
        "tube_samples": enf.tube_samples,
    });
    Ok((v, true, None))
}

fn kuranishi(ctx: &mut Context) -> Result<Payload, CliError> {
    let f = Arc::clone(&ctx.problem.map);
    let chart = kuranishi_chart(Arc::clone(&f), &ctx.point, &ctx.problem.action, &ctx.kuranishi_settings())?;
    let dc = deformation_complex(f.as_ref(), &ctx.point, &ctx.problem.action)?;
    let vdim = virtual_dimension(&chart);
    let dims_identity = vdim == chart.e_dim() as i64 - chart.f_dim() as i64 - chart.h_dim() as i64;
    let euler_identity = vdim == -dc.euler_characteristic;
    let v = json!({
        "point": point_json(&ctx.point),
        "e_dim": chart.e_dim(),
        "f_dim": chart.f_dim(),
        "h_dim": chart.h_dim(),
        "virtual_dimension": vdim,
        "radius": chart.radius,
        "stabilizer": chart.stabilizer,
        "obstruction_at_zero": chart.obstruction_at_zero,
        "obstruction_jacobian_norm": chart.obstruction_jacobian_norm,
        "obstruction_equivariance_residual": chart.obstruction_equivariance_residual,
        "obstruction_sup": chart.obstruction_sup,
        "correspondence": chart.correspondence,
        "homology": dc.homology,
        "euler_characteristic": dc.euler_characteristic,
        "identities": {
            "vdim_equals_dims": dims_identity,
            "vdim_equals_minus_euler": euler_identity,
        },
    });
    Ok((v, dims_identity && euler_identity, None))
}

fn zero_set_json(z: &ZeroSet) -> Value {
    json!({
        "points": z.points,
        "residuals": z.residuals,
        "spacing": z.spacing,
        "radius": z.radius,
        "grid": z.grid,
        "candidates": z.candidates,
    })
}

fn stratify_command(ctx: &mut Context) -> Result<Payload, CliError> {
    let f = Arc::clone(&ctx.problem.map);
    let chart = kuranishi_chart(f, &ctx.point, &ctx.problem.action, &ctx.kuranishi_settings())?;
    let radius = chart.radius;
    let zs = explore_zero_set(chart.obstruction.as_ref(), radius, ctx.grid, &ExploreSettings::default())?;
    let report = stratify(&chart, &zs, &StratifySettings::default());
    let approximation_ok = report
        .approximation
        .iter()
        .all(|a| a.verdict != ApproximationVerdict::Fail);
    if report
        .approximation
        .iter()
        .any(|a| a.verdict == ApproximationVerdict::Unwitnessed)
    {
        ctx.warnings.push("some orbit types have no sampled points".into());
    }
    if zs.is_empty() {
        ctx.warnings.push("no zeros found on the grid".into());
    }
    let verified = report.frontier_passes() && approximation_ok;
    let csv = stratification_csv(&zs, &report);
    let v = json!({
        "point": point_json(&ctx.point),
        "e_dim": chart.e_dim(),
        "zero_set": zero_set_json(&zs),
        "strata": report.strata,
        "assignments": report.assignments,
        "frontier": report.frontier,
        "approximation": report.approximation,
        "contact_distance": report.contact_distance,
    });
    Ok((v, verified, Some(csv)))
}

fn complex(ctx: &Context) -> Result<Payload, CliError> {
    let dc = deformation_complex(ctx.problem.map.as_ref(), &ctx.point, &ctx.problem.action)?;
    let identity = dc.dimension_alternating_sum() == dc.euler_characteristic;
    let mut v = serde_json::to_value(&dc).expect("complex serializes");
    v["point"] = json!(point_json(&ctx.point));
    v["dimension_alternating_sum"] = json!(dc.dimension_alternating_sum());
    Ok((v, identity && dc.composition_residual <= 1e-8, None))
}
