//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each; exits non-zero when any criterion fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use normform_cli::builtin;
use normform_core::calculus::{jacobian_fd, mixed_error, DifferentiableMap};
use normform_core::linear_core::{
    block_inverse_schur, certify_uniform_regularity, projection_case_check, spectral_norm,
    BlockMatrix, CheckTolerances, OperatorFamily,
};
use normform_core::moduli::{
    deformation_complex, explore_zero_set, kuranishi_chart, stratify, virtual_dimension,
    ApproximationVerdict, ExploreSettings, FrontierVerdict, StratifySettings,
};
use normform_core::sampling::ball_samples;
use normform_core::symmetry::{
    equivariant_normal_form_fixed_point, invariant_complement, EquivariantSettings, OrbitType,
};
use normform_core::{
    factorize_regular, lyapunov_schmidt, normal_form_at, parse_expression_map, Matrix,
    NormalFormSettings, SharedMap, Subspace, Vector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("runtime {:.2}s exceeds {limit_s}s", elapsed.as_secs_f64())
    })
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn problem(id: &str) -> (SharedMap, normform_core::GroupAction, Vector) {
    let spec = builtin(id).expect("builtin exists");
    let p = spec.build().expect("builtin builds");
    (p.map, p.action, spec.base_vector())
}

fn ac1_linear_factorization() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_rec, mut worst_orth, mut deficient) = (0.0f64, 0.0f64, 0);
    for i in 0..500 {
        let m = rng.random_range(1..=50);
        let n = rng.random_range(1..=50);
        let full = m.min(n);
        let r = if i % 2 == 0 { full } else { rng.random_range(0..full) };
        deficient += usize::from(r < full);
        let t = uniform(&mut rng, m, r) * uniform(&mut rng, r, n);
        let nf = factorize_regular(&t, 1e-10).map_err(|e| e.to_string())?;
        let norm = spectral_norm(&t);
        let rec = nf.reconstruction_residual(&t);
        ensure(rec <= 1e-9 * norm || rec == 0.0, || format!("matrix {i}: reconstruction {rec:.3e}"))?;
        let orth = nf.orthogonality_residual();
        ensure(orth <= 1e-10, || format!("matrix {i}: orthogonality {orth:.3e}"))?;
        ensure(nf.rank() == r, || format!("matrix {i}: rank {} != {r}", nf.rank()))?;
        ensure(
            nf.kernel.dim() + nf.rank() == n && nf.cokernel.dim() + nf.rank() == m,
            || format!("matrix {i}: rank-nullity"),
        )?;
        worst_rec = worst_rec.max(if norm > 0.0 { rec / norm } else { 0.0 });
        worst_orth = worst_orth.max(orth);
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!(
        "500 matrices ({deficient} rank-deficient), max relative reconstruction {worst_rec:.2e}, max orthogonality {worst_orth:.2e}, {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

fn ac2_schur_blocks() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 200 {
        let a = uniform(&mut rng, 6, 6) + Matrix::identity(6, 6) * 3.0;
        let k = rng.random_range(1..6);
        let a11 = a.view((0, 0), (k, k)).into_owned();
        let (Some(b), Some(a11_inv)) = (a.clone().try_inverse(), a11.try_inverse()) else {
            continue;
        };
        let bm = BlockMatrix::new(b, k, k).map_err(|e| e.to_string())?;
        let s = block_inverse_schur(&bm, 1e-12).map_err(|e| e.to_string())?;
        let err = (&s - &a11_inv).amax();
        ensure(err <= 1e-9, || format!("matrix {done}: Schur error {err:.3e}"))?;
        worst = worst.max(err);
        done += 1;
    }
    // Extended operators [[T, D], [Kᵀ, 0]] from kernel and cokernel bases.
    let mut checked = 0;
    for i in 0..200 {
        let m = rng.random_range(1..=5);
        let n = rng.random_range(1..=5);
        let r = rng.random_range(0..=m.min(n));
        let t = uniform(&mut rng, m, r) * uniform(&mut rng, r, n);
        let nf = factorize_regular(&t, 1e-10).map_err(|e| e.to_string())?;
        let (kb, db) = (nf.kernel.basis(), nf.cokernel.basis());
        let (kd, cd) = (kb.ncols(), db.ncols());
        let mut ext = Matrix::zeros(m + kd, n + cd);
        ext.view_mut((0, 0), (m, n)).copy_from(&t);
        ext.view_mut((0, n), (m, cd)).copy_from(db);
        ext.view_mut((m, 0), (kd, n)).copy_from(&kb.transpose());
        let bm = BlockMatrix::new(ext, m, n).map_err(|e| e.to_string())?;
        let cert = projection_case_check(&bm, CheckTolerances::default()).map_err(|e| e.to_string())?;
        ensure(cert.passed, || format!("extended operator {i}: {cert:?}"))?;
        checked += 1;
    }
    within(start.elapsed(), 5.0)?;
    Ok(format!(
        "200 block inverses, max error {worst:.2e}; {checked} extended operators pass the projection check, {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

fn ac3_index_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples: Vec<Vec<f64>> = (0..21).map(|i| vec![-0.1 + 0.01 * i as f64]).collect();
    let (mut certified, mut attempts) = (0, 0);
    while certified < 50 {
        attempts += 1;
        if attempts > 500 {
            return Err(format!("only {certified} of 50 families certified"));
        }
        let m = rng.random_range(1..=8);
        let n = rng.random_range(1..=8);
        let r = rng.random_range(0..=m.min(n));
        let t0 = uniform(&mut rng, m, r) * uniform(&mut rng, r, n);
        let t1 = uniform(&mut rng, m, n);
        let t2 = uniform(&mut rng, m, n);
        let fam = OperatorFamily::new(
            1,
            0.1,
            Arc::new(move |p: &[f64]| &t0 + &t1 * p[0] + &t2 * (p[0] * p[0])),
            1e-10,
        )
        .map_err(|e| e.to_string())?;
        let cert =
            certify_uniform_regularity(&fam, &samples, CheckTolerances::default()).map_err(|e| e.to_string())?;
        if !cert.certified {
            continue;
        }
        let base = fam.base.index();
        for (k, v) in cert.verdicts.iter().enumerate() {
            ensure(v.index == base, || format!("family {certified}, sample {k}: index {} != {base}", v.index))?;
        }
        certified += 1;
    }
    Ok(format!("50 certified families ({attempts} drawn), index constant on all 21 samples"))
}

const NORMAL_FORM_BUILTINS: &[&str] = &["square", "cubic_graph", "pitchfork_z2", "cusp", "constant_rank_demo"];

fn ac4_conjugacy() -> Outcome {
    let start = Instant::now();
    let settings = NormalFormSettings::default();
    let mut lines = Vec::new();
    for id in NORMAL_FORM_BUILTINS {
        let (f, _, m) = problem(id);
        let nf = normal_form_at(f, &m, &settings).map_err(|e| format!("{id}: {e}"))?;
        let samples = ball_samples(nf.domain_dim(), nf.radius, 200, 4);
        let mut conj = 0.0f64;
        for u in &samples {
            let lhs = nf.charts.conjugated(u).map_err(|e| format!("{id}: {e}"))?;
            let rhs = nf.charts.normal_map(u).map_err(|e| format!("{id}: {e}"))?;
            conj = conj.max((lhs - rhs).norm());
        }
        let v = &nf.verification;
        ensure(conj <= 1e-8, || format!("{id}: conjugacy {conj:.3e}"))?;
        ensure(v.max_fs_zero_residual <= 1e-9, || format!("{id}: f_s(0,.) {:.3e}", v.max_fs_zero_residual))?;
        ensure(v.dfs_norm <= 1e-6, || format!("{id}: |Df_s(0)| {:.3e}", v.dfs_norm))?;
        lines.push(format!("{id} {conj:.1e}"));
    }
    within(start.elapsed(), 30.0)?;
    Ok(format!("conjugacy on 200 samples: {}, {:.2}s", lines.join(", "), start.elapsed().as_secs_f64()))
}

fn ac5_lyapunov_schmidt() -> Outcome {
    let settings = NormalFormSettings::default();
    let mut checked = Vec::new();
    for id in normform_cli::BUILTIN_IDS {
        let (f, _, m) = problem(id);
        let nf = normal_form_at(Arc::clone(&f), &m, &settings).map_err(|e| format!("{id}: {e}"))?;
        if nf.kernel_dim() == 0 {
            continue;
        }
        let rp = lyapunov_schmidt(f, &m, &settings).map_err(|e| format!("{id}: {e}"))?;
        let fs0 = rp.normal_form.reduced_singular_part();
        let mut worst = 0.0f64;
        for x1 in ball_samples(rp.kernel_dim, rp.radius, 50, 5) {
            worst = worst.max((rp.reduced_map.eval(&x1) - fs0.eval(&x1)).norm());
        }
        ensure(worst <= 1e-8, || format!("{id}: reduced vs f_s(.,0) {worst:.3e}"))?;
        checked.push(*id);
    }
    let vars = vec!["x".to_string(), "y".to_string()];
    let f: SharedMap = Arc::new(parse_expression_map(&["y - x^2", "y"], &vars).map_err(|e| e.to_string())?);
    let rp = lyapunov_schmidt(f, &Vector::zeros(2), &settings).map_err(|e| e.to_string())?;
    for x in [0.1, 0.2, 0.5] {
        let got = rp.reduced_map.eval(&Vector::from_element(1, x))[0];
        let want = -x * x / 2f64.sqrt();
        ensure((got - want).abs() <= 1e-8, || format!("(y - x^2, y) at x = {x}: {got} vs {want}"))?;
    }
    Ok(format!(
        "agreement within 1e-8 on {}; -x^2/sqrt(2) matched at 0.1, 0.2, 0.5",
        checked.join(", ")
    ))
}

fn ac6_equivariance() -> Outcome {
    let settings = EquivariantSettings::default();
    let mut lines = Vec::new();
    for id in ["pitchfork_z2", "circle_cubic"] {
        let (f, action, m) = problem(id);
        let fp = equivariant_normal_form_fixed_point(f, &m, &action, &settings).map_err(|e| format!("{id}: {e}"))?;
        let nf = &fp.normal_form;
        let samples = ball_samples(nf.domain_dim(), nf.radius, 100, 6);
        let mut worst = 0.0f64;
        let gens = fp.chart_rep.test_elements();
        for g in &gens {
            for u in &samples {
                let lhs = fp.cokernel_rep.act(g, &nf.fs(u).map_err(|e| e.to_string())?);
                let rhs = nf.fs(&fp.chart_rep.act(g, u)).map_err(|e| e.to_string())?;
                worst = worst.max((lhs - rhs).norm());
            }
        }
        ensure(worst <= 1e-8, || format!("{id}: f_s equivariance {worst:.3e}"))?;
        ensure(fp.fs_equivariance_residual <= 1e-8 && fp.samples >= 100, || {
            format!("{id}: reported f_s residual {:.3e}", fp.fs_equivariance_residual)
        })?;

        // Averaged complements of the kernel and image.
        let lin = &nf.linear;
        let mut complement_res = fp.complement_invariance_residual;
        for (space, rep) in [(&lin.kernel, &action.domain), (&lin.image, &action.target)] {
            let c: Subspace = invariant_complement(space, &rep.linearized()).map_err(|e| e.to_string())?;
            complement_res = complement_res.max(rep.invariance_residual(&c));
        }
        ensure(complement_res <= 1e-10, || format!("{id}: complement residual {complement_res:.3e}"))?;
        lines.push(format!(
            "{id} f_s {worst:.1e} over {} samples x {} elements, complements {complement_res:.1e}",
            samples.len(),
            gens.len()
        ));
    }
    Ok(lines.join("; "))
}

fn ac7_kuranishi() -> Outcome {
    let mut lines = Vec::new();
    for id in normform_cli::BUILTIN_IDS {
        let (f, action, m) = problem(id);
        let chart = kuranishi_chart(Arc::clone(&f), &m, &action, &Default::default()).map_err(|e| format!("{id}: {e}"))?;
        let dc = deformation_complex(f.as_ref(), &m, &action).map_err(|e| format!("{id}: {e}"))?;
        let vdim = virtual_dimension(&chart);
        let by_dims = chart.e_dim() as i64 - chart.f_dim() as i64 - chart.h_dim() as i64;
        ensure(vdim == by_dims, || format!("{id}: vdim {vdim} != E - F - H = {by_dims}"))?;
        ensure(vdim == -dc.euler_characteristic, || {
            format!("{id}: vdim {vdim} != -chi = {}", -dc.euler_characteristic)
        })?;
        match *id {
            "flat_u1_torus" => {
                ensure(dc.homology == [1, 2, 1] && vdim == 0, || format!("{id}: homology {:?}", dc.homology))?;
                let s = &chart.obstruction;
                let sup = ball_samples(s.dim_in(), chart.radius, 100, 7)
                    .iter()
                    .map(|x| s.eval(x).amax())
                    .fold(0.0f64, f64::max);
                ensure(sup <= 1e-10, || format!("{id}: max |s| {sup:.3e}"))?;
            }
            "flat_u1_wedge" => ensure(dc.homology[1] == 0, || format!("{id}: h1 = {}", dc.homology[1]))?,
            "pitchfork_z2" => ensure(vdim == 1, || format!("{id}: vdim {vdim}"))?,
            _ => {}
        }
        lines.push(format!("{id} {vdim}"));
    }
    Ok(format!("identities exact; vdim: {}", lines.join(", ")))
}

fn ac8_stratification() -> Outcome {
    let start = Instant::now();
    let (f, action, m) = problem("pitchfork_z2");
    let chart = kuranishi_chart(f, &m, &action, &Default::default()).map_err(|e| e.to_string())?;
    let zs = explore_zero_set(chart.obstruction.as_ref(), chart.radius, 201, &ExploreSettings::default())
        .map_err(|e| e.to_string())?;
    let report = stratify(&chart, &zs, &StratifySettings::default());
    let dims: Vec<usize> = report.strata.iter().map(|s| s.dim_estimate).collect();
    ensure(dims == [1, 1], || format!("stratum dimensions {dims:?}"))?;
    ensure(
        report.frontier[0][1] == FrontierVerdict::Pass && report.frontier_passes(),
        || format!("frontier {:?}", report.frontier),
    )?;
    let free = report
        .approximation
        .iter()
        .find(|a| matches!(a.orbit_type, OrbitType::Finite { order: 1, .. }))
        .ok_or("no free stratum")?;
    let d = free.distance.unwrap_or(f64::INFINITY);
    ensure(
        free.verdict == ApproximationVerdict::Witnessed && d <= 2.0 * zs.spacing,
        || format!("free type at distance {d:.3e}, spacing {:.3e}", zs.spacing),
    )?;
    within(start.elapsed(), 60.0)?;
    Ok(format!(
        "{} zeros, strata dims {dims:?}, frontier pass, free type at {d:.2e} <= 2h = {:.2e}, {:.2}s",
        zs.len(),
        2.0 * zs.spacing,
        start.elapsed().as_secs_f64()
    ))
}

fn ac9_derivatives() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for id in normform_cli::BUILTIN_IDS {
        let (f, _, _) = problem(id);
        for _ in 0..100 {
            let x = Vector::from_fn(f.dim_in(), |_, _| rng.random_range(-1.0..1.0));
            let ad = f.jacobian(&x);
            let fd = jacobian_fd(f.as_ref(), &x, None).map_err(|e| e.to_string())?;
            let err = mixed_error(&fd, &ad);
            ensure(err <= 1e-5, || format!("{id} at {:?}: {err:.3e}", x.as_slice()))?;
            worst = worst.max(err);
        }
    }
    Ok(format!(
        "{} builtins x 100 points, max mixed error {worst:.2e}",
        normform_cli::BUILTIN_IDS.len()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("AC1 linear factorization", ac1_linear_factorization),
        ("AC2 Schur and block inverses", ac2_schur_blocks),
        ("AC3 Fredholm index invariance", ac3_index_invariance),
        ("AC4 normal-form conjugacy", ac4_conjugacy),
        ("AC5 Lyapunov-Schmidt agreement", ac5_lyapunov_schmidt),
        ("AC6 equivariance", ac6_equivariance),
        ("AC7 Kuranishi identities", ac7_kuranishi),
        ("AC8 stratification", ac8_stratification),
        ("AC9 derivative oracle", ac9_derivatives),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name}: {reason}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
