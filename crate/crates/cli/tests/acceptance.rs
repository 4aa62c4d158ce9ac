//! Acceptance gate: one test per shipped guarantee. Each check pins a
//! closed-form oracle or a cross-route consistency property at full
//! resolution, so this suite is the contract the rest of the workspace
//! is allowed to refactor against.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use steadypop::config::parse_config;
use steadypop::error::Error;
use steadypop::fixedpoint::{fixed_ray, solve_steady_state, SolveMethod, SolveParams, SolvedProfile};
use steadypop::levelset::trace_zero_set;
use steadypop::matrix::{perron_rightmost, rank_multiplicity};
use steadypop::reproduction::{net_reproduction, solve_scalar_system};
use steadypop::selmut::{kernel_assemble, kernel_spectral_radius};
use steadypop::spectral::{
    assemble_generator_matrix, characteristic_value, resolvent_apply, resolvent_distance,
    spectral_bound,
};
use steadypop::{Environment, GridFn, StructuredModel};

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../configs/{name}"))
}

fn load_model(name: &str) -> StructuredModel {
    let text = std::fs::read_to_string(config_path(name)).expect("config exists");
    parse_config(&text).expect("config parses").model
}

fn full_params() -> SolveParams {
    SolveParams::default()
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_steadypop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap_or_else(|e| {
        panic!("not JSON ({e}): {}", String::from_utf8_lossy(bytes))
    })
}

/// Full two-stage pipeline against the closed-form steady state:
/// environment (1,1), total mass 2, flat profile, within 1e-6 and in
/// under five seconds of wall time.
#[test]
fn a01_two_stage_solve_is_exact_and_fast() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("result.json");
    let started = Instant::now();
    let run = cli(&[
        "solve",
        "--config",
        config_path("ja_const.cfg").to_str().unwrap(),
        "--method",
        "irreducible",
        "--cells",
        "2000",
        "--out",
        out.to_str().unwrap(),
    ]);
    let elapsed = started.elapsed();
    assert!(run.status.success(), "{run:?}");
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");

    let doc = json(&std::fs::read(&out).unwrap());
    assert!((doc["environment"]["e1"].as_f64().unwrap() - 1.0).abs() <= 1e-6);
    assert!((doc["environment"]["e2"].as_f64().unwrap() - 1.0).abs() <= 1e-6);
    assert!((doc["scale"].as_f64().unwrap() - 2.0).abs() <= 1e-6);

    let profile = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    let worst = profile
        .lines()
        .skip(1)
        .map(|row| {
            let v: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
            (v - 1.0).abs()
        })
        .fold(0.0, f64::max);
    assert!(worst <= 1e-6, "profile deviates from 1 by {worst}");
}

/// Net reproduction closed form: 3 at the origin, 1 at the steady
/// environment, to ten digits.
#[test]
fn a02_net_reproduction_matches_closed_form() {
    let model = load_model("ja_const.cfg");
    let grid = model.grid(2000).unwrap();
    let r0 = net_reproduction(&model, grid, Environment::origin()).unwrap();
    assert!((r0 - 3.0).abs() <= 1e-10, "R(0,0) = {r0}");
    let r1 = net_reproduction(&model, grid, Environment::new(1.0, 1.0)).unwrap();
    assert!((r1 - 1.0).abs() <= 1e-10, "R(1,1) = {r1}");
}

/// The zero level set of the two-stage spectral bound is the line
/// e1 + e2 = 2; every one of the 257 traced samples lies on it.
#[test]
fn a03_level_set_is_the_line_of_critical_mass() {
    let model = load_model("ja_const.cfg");
    let grid = model.grid(2000).unwrap();
    let sigma = |env: Environment| {
        Ok(characteristic_value(&model, grid, env, 0.0)? - 1.0)
    };
    let curve = trace_zero_set(&sigma, 257, 10.0, 1e-8).unwrap();
    assert_eq!(curve.samples().len(), 257);
    for sample in curve.samples() {
        let miss = (sample.point.e1 + sample.point.e2 - 2.0).abs();
        assert!(miss <= 1e-6, "theta {}: off line by {miss}", sample.theta);
    }
}

/// For random environments the sign of the spectral bound always agrees
/// with the sign of R - 1, and the characteristic value at the computed
/// bound is 1 to ten digits.
#[test]
fn a04_spectral_sign_agrees_with_reproduction() {
    let model = load_model("ja_const.cfg");
    let grid = model.grid(2000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let side = Uniform::new(0.0, 5.0);
    for trial in 0..100 {
        let env = Environment::new(side.sample(&mut rng), side.sample(&mut rng));
        let r = characteristic_value(&model, grid, env, 0.0).unwrap();
        let sr = spectral_bound(&model, grid, env, 1e-12).unwrap();
        assert!(
            (r - 1.0) * sr.bound > 0.0,
            "trial {trial} at {env:?}: R = {r}, bound = {}",
            sr.bound
        );
        let k_at_bound = characteristic_value(&model, grid, env, sr.bound).unwrap();
        assert!(
            (k_at_bound - 1.0).abs() <= 1e-10,
            "trial {trial} at {env:?}: K(bound) = {k_at_bound}"
        );
    }
}

/// The leading eigenvalue of the upwind generator matrix converges to the
/// characteristic root at first order: each grid doubling shrinks the
/// error by at least 1.8.
#[test]
fn a05_matrix_eigenvalue_converges_to_the_characteristic_root() {
    let model = load_model("ja_const.cfg");
    let reference = spectral_bound(
        &model,
        model.grid(2000).unwrap(),
        Environment::origin(),
        1e-12,
    )
    .unwrap()
    .bound;
    let mut errors = Vec::new();
    for n in [200, 400, 800] {
        let grid = model.grid(n).unwrap();
        let m = assemble_generator_matrix(&model, grid, Environment::origin()).unwrap();
        let leading = perron_rightmost(&m, 1e-9, 200_000).unwrap();
        errors.push((leading.eigenvalue - reference).abs());
    }
    for pair in errors.windows(2) {
        let ratio = pair[0] / pair[1];
        assert!(ratio >= 1.8, "errors {errors:?}, ratio {ratio}");
    }
}

/// Resolvent checks: the closed-form image of the constant function,
/// the discrete identity against the generator matrix for random smooth
/// inputs, and resolvent-distance decay along a sequence of environments
/// approaching the reference one.
#[test]
fn a06_resolvent_closed_form_identity_and_distance() {
    let model = load_model("ja_const.cfg");
    let origin = Environment::origin();

    // closed form at unit shift: r(s) = (c + e^s - 1) e^{-s}
    let fine = model.grid(40_000).unwrap();
    let ones = GridFn::sample(fine, |_| 1.0);
    let r = resolvent_apply(&model, fine, origin, 1.0, &ones).unwrap();
    let em1 = (-1.0f64).exp();
    let em2 = (-2.0f64).exp();
    let c = 3.0 * (1.0 - (em1 - em2)) / (1.0 - 3.0 * (em1 - em2));
    let mut worst = 0.0f64;
    for (i, s) in fine.nodes().enumerate() {
        let exact = (c + s.exp() - 1.0) * (-s).exp();
        worst = worst.max((r.values()[i] - exact).abs());
    }
    assert!(worst <= 1e-8, "closed-form mismatch {worst}");

    // discrete identity (lam I - M) r = f for random nonnegative smooth f
    let grid = model.grid(1000).unwrap();
    let m = assemble_generator_matrix(&model, grid, origin).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xf00d);
    let coeff = Uniform::new(-1.0, 1.0);
    for trial in 0..10 {
        let a: Vec<f64> = (0..5).map(|_| coeff.sample(&mut rng)).collect();
        let f = GridFn::sample(grid, |s| {
            (a[0] + a[1] * s + a[2] * s * s + a[3] * s.sin() + a[4] * (2.0 * s).cos()).abs() + 0.1
        });
        let r = resolvent_apply(&model, grid, origin, 1.0, &f).unwrap();
        let mut image = vec![0.0; m.order()];
        m.matvec(r.values(), &mut image);
        let residual: Vec<f64> = r
            .values()
            .iter()
            .zip(&image)
            .zip(f.values())
            .map(|((ri, mi), fi)| ri - mi - fi)
            .collect();
        let norm = GridFn::new(grid, residual).unwrap().l1_norm();
        assert!(
            norm <= 50.0 * grid.h(),
            "trial {trial}: identity residual {norm} at h = {}",
            grid.h()
        );
    }

    // generalized-convergence diagnostic: distances decrease strictly
    let grid = model.grid(2000).unwrap();
    let target = Environment::new(1.0, 1.0);
    let mut distances = Vec::new();
    for k in 0..=6 {
        let env = Environment::new(1.0 + 0.5f64.powi(k), 1.0);
        distances.push(resolvent_distance(&model, grid, env, target, 4.0, 8).unwrap());
    }
    for pair in distances.windows(2) {
        assert!(pair[1] < pair[0], "not strictly decreasing: {distances:?}");
    }
    assert!(
        *distances.last().unwrap() <= 1e-3,
        "final distance {distances:?}"
    );
}

/// The scalar-balance route returns exactly the two closed-form roots
/// (2,1) and (2,2).
#[test]
fn a07_scalar_route_finds_exactly_two_roots() {
    let model = load_model("cr_const.cfg");
    let grid = model.grid(2000).unwrap();
    let system = solve_scalar_system(&model, grid, 257, 12.0, 1e-8).unwrap();
    assert_eq!(
        system.solutions.len(),
        2,
        "environments: {:?}",
        system
            .solutions
            .iter()
            .map(|s| s.environment)
            .collect::<Vec<_>>()
    );
    let mut envs: Vec<Environment> = system.solutions.iter().map(|s| s.environment).collect();
    envs.sort_by(|a, b| a.e2.total_cmp(&b.e2));
    for (found, expected) in envs.iter().zip([(2.0, 1.0), (2.0, 2.0)]) {
        assert!(
            (found.e1 - expected.0).abs() <= 1e-6 && (found.e2 - expected.1).abs() <= 1e-6,
            "found {found:?}, expected {expected:?}"
        );
    }
}

/// Age-structured model: the level curve meets the first axis at ln 3,
/// the discretized leading eigenvalue is simple at the solution, and the
/// monotone and state-space routes land on the same steady state.
#[test]
fn a08_age_structured_routes_agree() {
    let model = load_model("eh_const.cfg");
    let grid = model.grid(2000).unwrap();
    let sigma = |env: Environment| {
        Ok(characteristic_value(&model, grid, env, 0.0)? - 1.0)
    };
    let curve = trace_zero_set(&sigma, 2, 10.0, 1e-10).unwrap();
    let axis = curve.samples()[0];
    assert_eq!(axis.theta, 0.0);
    let target = 3.0f64.ln();
    assert!(
        (axis.rho - target).abs() <= 1e-8,
        "axis endpoint {} vs {target}",
        axis.rho
    );

    let monotone = solve_steady_state(&model, SolveMethod::Monotone, &full_params()).unwrap();
    assert!(
        monotone.warnings.iter().all(|w| !w.contains("multiplicity")),
        "{:?}",
        monotone.warnings
    );
    let coarse = model.grid(200).unwrap();
    let m = assemble_generator_matrix(&model, coarse, monotone.environment).unwrap();
    let leading = perron_rightmost(&m, 1e-9, 200_000).unwrap();
    let (geometric, algebraic) = rank_multiplicity(&m, leading.eigenvalue, 1e-7);
    assert_eq!((geometric, algebraic), (1, 1));

    let state = solve_steady_state(&model, SolveMethod::StateSpace, &full_params()).unwrap();
    assert!(
        (monotone.environment.e1 - state.environment.e1).abs() <= 1e-5
            && (monotone.environment.e2 - state.environment.e2).abs() <= 1e-5,
        "monotone {:?} vs state-space {:?}",
        monotone.environment,
        state.environment
    );
    for result in [&monotone, &state] {
        let d = &result.diagnostics;
        assert!(d.env_consistency <= 1e-6, "{d:?}");
        assert!(d.boundary_residual <= 1e-6, "{d:?}");
        assert!((d.r_value - 1.0).abs() <= 1e-6, "{d:?}");
        assert!(d.sigma_at_env.unwrap().abs() <= 1e-6, "{d:?}");
        assert!(d.positive, "{d:?}");
    }
    let ode_gap =
        (monotone.diagnostics.ode_residual - state.diagnostics.ode_residual).abs();
    assert!(ode_gap <= 1e-6, "ode residuals differ by {ode_gap}");
}

/// Trait-age kernel: spectral radius 3 at the origin, steady density
/// identically 1/2 at environment (1,1), and the weighted operator norm
/// bound sup(beta)/lam at large shifts.
#[test]
fn a09_trait_age_kernel_oracles() {
    let model = load_model("sm_unif.cfg");
    let grid = model.grid(64).unwrap();

    let kernel = kernel_assemble(&model, grid, Environment::origin(), 0.0).unwrap();
    let radius = kernel_spectral_radius(&kernel, 1e-9).unwrap().radius;
    assert!((radius - 3.0).abs() <= 1e-6, "radius {radius}");

    let params = SolveParams {
        n_cells: 64,
        n_rays: 65,
        ..SolveParams::default()
    };
    let result = solve_steady_state(&model, SolveMethod::Irreducible, &params).unwrap();
    assert!((result.environment.e1 - 1.0).abs() <= 1e-4);
    assert!((result.environment.e2 - 1.0).abs() <= 1e-4);
    match &result.profile {
        SolvedProfile::Square(density) => {
            let worst = density
                .values()
                .iter()
                .map(|v| (v - 0.5).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 1e-4, "density deviates from 1/2 by {worst}");
        }
        SolvedProfile::Line(_) => panic!("trait-age solve must return a density"),
    }

    for lam in [10.0, 100.0] {
        let shifted = kernel_assemble(&model, grid, Environment::origin(), lam).unwrap();
        let norm = shifted.operator_norm();
        assert!(
            norm <= 3.0 / lam,
            "norm {norm} exceeds {} at lam {lam}",
            3.0 / lam
        );
    }
}

/// Fixed-ray oracles: a nilpotent matrix is rejected, a positive matrix
/// returns its Perron value, and the averaged iteration settles the
/// period-two permutation case.
#[test]
fn a10_fixed_ray_oracles() {
    let nilpotent =
        steadypop::matrix::DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
    let err = fixed_ray(&nilpotent, 1e-12, 1_000_000).unwrap_err();
    assert!(
        matches!(err, Error::StrictPositivityFailure),
        "unexpected error: {err:?}"
    );

    let positive =
        steadypop::matrix::DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
    let found = fixed_ray(&positive, 1e-12, 1_000_000).unwrap();
    let expected = (5.0 + 33.0f64.sqrt()) / 2.0;
    assert!(
        (found.eigenvalue - expected).abs() <= 1e-10,
        "eigenvalue {} vs {expected}",
        found.eigenvalue
    );

    let swap =
        steadypop::matrix::DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let found = fixed_ray(&swap, 1e-12, 1_000_000).unwrap();
    assert!((found.eigenvalue - 1.0).abs() <= 1e-10);
    assert!((found.ray[0] - 0.5).abs() <= 1e-10);
    assert!((found.ray[1] - 0.5).abs() <= 1e-10);
}

/// Halving the fertility constant makes the origin subcritical; every
/// solve method must then exit with code 1 and a machine-readable
/// hypothesis report.
#[test]
fn a11_subcritical_fertility_exits_one_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let base = std::fs::read_to_string(config_path("ja_const.cfg")).unwrap();
    let subcritical = base.replace("beta = 3 ", "beta = 0.5 ");
    assert_ne!(base, subcritical);
    let cfg = dir.path().join("subcritical.cfg");
    std::fs::write(&cfg, subcritical).unwrap();
    for method in ["irreducible", "monotone", "scalar", "state-space"] {
        let run = cli(&[
            "solve",
            "--config",
            cfg.to_str().unwrap(),
            "--method",
            method,
            "--cells",
            "400",
            "--rays",
            "33",
            "--out",
            dir.path().join("r.json").to_str().unwrap(),
        ]);
        assert_eq!(run.status.code(), Some(1), "method {method}: {run:?}");
        let report = json(&run.stdout);
        assert_eq!(report["error"], "hypothesis-violated", "method {method}");
    }
}

/// Every result document emitted by any model and method combination
/// re-passes verification, which enforces residuals at 1e-6 and the
/// profile equation residual at ten cell widths.
#[test]
fn a12_every_emitted_result_reverifies() {
    let cases = [
        ("ja_const.cfg", "irreducible"),
        ("ja_const.cfg", "monotone"),
        ("ja_const.cfg", "scalar"),
        ("ja_const.cfg", "state-space"),
        ("cr_const.cfg", "scalar"),
        ("eh_const.cfg", "irreducible"),
        ("eh_const.cfg", "monotone"),
        ("eh_const.cfg", "state-space"),
        ("sm_unif.cfg", "irreducible"),
    ];
    for (name, method) in cases {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("result.json");
        let cfg = config_path(name);
        let solve = cli(&[
            "solve",
            "--config",
            cfg.to_str().unwrap(),
            "--method",
            method,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(
            solve.status.success(),
            "{name} {method}: {}",
            String::from_utf8_lossy(&solve.stderr)
        );
        let verify = cli(&["verify", "--result", out.to_str().unwrap()]);
        assert_eq!(
            verify.status.code(),
            Some(0),
            "{name} {method}: {}",
            String::from_utf8_lossy(&verify.stdout)
        );
        let report = json(&verify.stdout);
        assert_eq!(report["passed"], true, "{name} {method}");
        for check in report["checks"].as_array().unwrap() {
            assert_eq!(check["passed"], true, "{name} {method}: {check}");
        }
    }
}
