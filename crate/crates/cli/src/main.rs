//! Command-line driver: parse a model configuration, run one operation,
//! emit deterministic CSV and JSON files.
//!
//! Exit codes: 0 on success, 1 when a mathematical hypothesis fails (with
//! a machine-readable report on stdout) or a verification does not pass,
//! 2 on usage and configuration errors.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use steadypop::config::{parse_config, RunConfig};
use steadypop::error::{Error, Result};
use steadypop::fixedpoint::{
    fixed_ray, reconstruct_from_environment, solve_steady_state, verify_steady_state,
    Diagnostics, SolveMethod, SolvedProfile, SteadyStateResult,
};
use steadypop::levelset::trace_zero_set_partial;
use steadypop::matrix::DenseMatrix;
use steadypop::model::validate_model;
use steadypop::reproduction::{net_reproduction, solve_scalar_system};
use steadypop::selmut::{kernel_assemble, kernel_spectral_radius, sm_spectral_bound};
use steadypop::spectral::{
    assemble_generator_matrix, characteristic_value, probe_profiles, resolvent_apply,
    spectral_bound,
};
use steadypop::{Environment, Grid, GridFn, StructuredModel};

#[derive(Parser)]
#[command(
    name = "steadypop",
    version,
    about = "Positive steady states of structured population models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spectral bound of the linearized generator at a frozen environment.
    SpectralBound {
        #[arg(long)]
        config: PathBuf,
        /// First environment component.
        #[arg(long, default_value_t = 0.0)]
        e1: f64,
        /// Second environment component.
        #[arg(long, default_value_t = 0.0)]
        e2: f64,
        /// Override the configured cell count.
        #[arg(long)]
        cells: Option<usize>,
        /// Override the configured tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Write the JSON document here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Net reproduction number at a frozen environment.
    NetReproduction {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        e1: f64,
        #[arg(long, default_value_t = 0.0)]
        e2: f64,
        #[arg(long)]
        cells: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trace the zero set of the spectral bound across the quadrant.
    TraceLevelset {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured ray count.
        #[arg(long)]
        rays: Option<usize>,
        #[arg(long)]
        cells: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        /// Output CSV path (columns theta, rho, e1, e2, sigma_residual).
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve for a positive steady state; writes the result JSON and a
    /// sibling profile.csv.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// irreducible, monotone, scalar or state-space.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        cells: Option<usize>,
        #[arg(long)]
        rays: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the closed-form resolvent against the discrete generator.
    ResolventCheck {
        #[arg(long)]
        config: PathBuf,
        /// Resolvent parameter.
        #[arg(long, default_value_t = 4.0)]
        lam: f64,
        #[arg(long, default_value_t = 0.0)]
        e1: f64,
        #[arg(long, default_value_t = 0.0)]
        e2: f64,
        #[arg(long)]
        cells: Option<usize>,
        /// Number of probe profiles.
        #[arg(long, default_value_t = 8)]
        probes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leading ray of an entrywise nonnegative matrix. Rows are separated
    /// by `;`, entries by `,`: "1,2;3,4".
    FixedRay {
        #[arg(long)]
        matrix: String,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-verify a result document emitted by `solve`.
    Verify {
        /// Path to the result JSON; profile CSVs are read from its directory.
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

// ---------------------------------------------------------------------------
// JSON documents

#[derive(Serialize)]
struct BoundDoc<'a> {
    model: &'a str,
    environment: Environment,
    bound: f64,
    residual: f64,
    iterations: usize,
}

#[derive(Serialize)]
struct ReproductionDoc<'a> {
    model: &'a str,
    environment: Environment,
    r: f64,
}

#[derive(Serialize)]
struct SolutionDoc {
    environment: Environment,
    scale: f64,
    diagnostics: Diagnostics,
    warnings: Vec<String>,
    profile_csv: String,
}

#[derive(Serialize)]
struct ResultDoc<'a> {
    model: &'a str,
    method: &'a str,
    environment: Environment,
    scale: f64,
    diagnostics: Diagnostics,
    warnings: Vec<String>,
    profile_csv: &'a str,
    additional_solutions: Vec<SolutionDoc>,
    config_echo: &'a str,
}

#[derive(Serialize)]
struct ProbeDoc {
    probe: usize,
    identity_residual: f64,
}

#[derive(Serialize)]
struct ResolventDoc<'a> {
    model: &'a str,
    environment: Environment,
    lam: f64,
    cell_width: f64,
    probes: Vec<ProbeDoc>,
}

#[derive(Serialize)]
struct FixedRayDoc {
    eigenvalue: f64,
    ray: Vec<f64>,
    iterations: usize,
}

#[derive(Serialize)]
struct CheckDoc {
    solution: usize,
    passed: bool,
    diagnostics: Diagnostics,
    ode_residual_allowance: f64,
}

#[derive(Serialize)]
struct VerifyDoc {
    passed: bool,
    checks: Vec<CheckDoc>,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    detail: String,
}

#[derive(Deserialize)]
struct StoredSolution {
    environment: Environment,
    profile_csv: String,
}

#[derive(Deserialize)]
struct StoredResult {
    environment: Environment,
    profile_csv: String,
    #[serde(default)]
    additional_solutions: Vec<StoredSolution>,
    config_echo: String,
}

// ---------------------------------------------------------------------------
// plumbing

fn load(config_path: &Path) -> Result<RunConfig> {
    let text = output::read_file(config_path)?;
    let cfg = parse_config(&text)?;
    let report = validate_model(&cfg.model)?;
    for issue in &report.issues {
        eprintln!("warning: {issue}");
    }
    Ok(cfg)
}

fn to_json<T: Serialize>(doc: &T) -> Result<String> {
    let mut body = serde_json::to_string_pretty(doc)
        .map_err(|e| Error::Config(format!("cannot serialize result: {e}")))?;
    body.push('\n');
    Ok(body)
}

fn emit<T: Serialize>(out: Option<&Path>, doc: &T) -> Result<()> {
    let body = to_json(doc)?;
    match out {
        Some(path) => output::write_file(path, &body),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn out_dir(out: &Path) -> &Path {
    match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

fn sigma_fn<'a>(
    model: &'a StructuredModel,
    grid: Grid,
) -> impl Fn(Environment) -> Result<f64> + 'a {
    move |env| match model {
        StructuredModel::SelectionMutation(_) => {
            let k = kernel_assemble(model, grid, env, 0.0)?;
            Ok(kernel_spectral_radius(&k, 1e-12)?.radius - 1.0)
        }
        _ => Ok(characteristic_value(model, grid, env, 0.0)? - 1.0),
    }
}

fn parse_matrix(text: &str) -> Result<DenseMatrix> {
    let mut rows = Vec::new();
    for row_text in text.split(';') {
        let mut row = Vec::new();
        for entry in row_text.split(',') {
            row.push(entry.trim().parse::<f64>().map_err(|_| {
                Error::Config(format!("matrix entry {entry:?} is not a number"))
            })?);
        }
        rows.push(row);
    }
    DenseMatrix::from_rows(&rows)
}

fn write_results(
    cfg: &RunConfig,
    method: SolveMethod,
    results: &[SteadyStateResult],
    out: &Path,
) -> Result<()> {
    let dir = out_dir(out);
    let mut extras = Vec::new();
    for (i, r) in results.iter().enumerate() {
        let csv_name = if i == 0 {
            "profile.csv".to_string()
        } else {
            format!("profile_{}.csv", i + 1)
        };
        output::write_file(&dir.join(&csv_name), &output::profile_csv(&r.profile))?;
        if i > 0 {
            extras.push(SolutionDoc {
                environment: r.environment,
                scale: r.scale,
                diagnostics: r.diagnostics.clone(),
                warnings: r.warnings.clone(),
                profile_csv: csv_name,
            });
        }
    }
    let primary = &results[0];
    for w in &primary.warnings {
        eprintln!("warning: {w}");
    }
    let doc = ResultDoc {
        model: cfg.model.kind_name(),
        method: method.as_str(),
        environment: primary.environment,
        scale: primary.scale,
        diagnostics: primary.diagnostics.clone(),
        warnings: primary.warnings.clone(),
        profile_csv: "profile.csv",
        additional_solutions: extras,
        config_echo: &cfg.echo,
    };
    output::write_file(out, &to_json(&doc)?)
}

// ---------------------------------------------------------------------------
// handlers

fn run(command: Command) -> Result<u8> {
    match command {
        Command::SpectralBound {
            config,
            e1,
            e2,
            cells,
            tol,
            out,
        } => {
            let cfg = load(&config)?;
            let grid = cfg.model.grid(cells.unwrap_or(cfg.solver.n_cells))?;
            let tol = tol.unwrap_or(cfg.solver.tol);
            let env = Environment::new(e1, e2);
            let sr = match &cfg.model {
                StructuredModel::SelectionMutation(_) => {
                    sm_spectral_bound(&cfg.model, grid, env, tol)?
                }
                _ => spectral_bound(&cfg.model, grid, env, tol)?,
            };
            emit(
                out.as_deref(),
                &BoundDoc {
                    model: cfg.model.kind_name(),
                    environment: env,
                    bound: sr.bound,
                    residual: sr.residual,
                    iterations: sr.iterations,
                },
            )?;
            Ok(0)
        }
        Command::NetReproduction {
            config,
            e1,
            e2,
            cells,
            out,
        } => {
            let cfg = load(&config)?;
            let grid = cfg.model.grid(cells.unwrap_or(cfg.solver.n_cells))?;
            let env = Environment::new(e1, e2);
            let r = net_reproduction(&cfg.model, grid, env)?;
            emit(
                out.as_deref(),
                &ReproductionDoc {
                    model: cfg.model.kind_name(),
                    environment: env,
                    r,
                },
            )?;
            Ok(0)
        }
        Command::TraceLevelset {
            config,
            rays,
            cells,
            tol,
            out,
        } => {
            let cfg = load(&config)?;
            let grid = cfg.model.grid(cells.unwrap_or(cfg.solver.n_cells))?;
            let n_rays = rays.unwrap_or(cfg.solver.n_rays);
            let tol = tol.unwrap_or(cfg.solver.tol);
            let sigma = sigma_fn(&cfg.model, grid);
            let (curve, failures) =
                trace_zero_set_partial(&sigma, n_rays, cfg.solver.r_max, tol)?;
            for (theta, err) in &failures {
                eprintln!("warning: ray at angle {theta} failed: {err}");
            }
            output::write_file(&out, &output::curve_csv(&curve))?;
            Ok(0)
        }
        Command::Solve {
            config,
            method,
            cells,
            rays,
            tol,
            out,
        } => {
            let cfg = load(&config)?;
            let mut solver = cfg.solver;
            if let Some(m) = method {
                solver.method = m.parse()?;
            }
            if let Some(c) = cells {
                solver.n_cells = c;
            }
            if let Some(r) = rays {
                solver.n_rays = r;
            }
            if let Some(t) = tol {
                solver.tol = t;
            }
            let params = solver.params();
            match solver.method {
                SolveMethod::Scalar => {
                    let grid = cfg.model.grid(params.n_cells)?;
                    let sys = solve_scalar_system(
                        &cfg.model,
                        grid,
                        params.n_rays,
                        params.r_max,
                        params.tol,
                    )?;
                    if sys.solutions.is_empty() {
                        return Err(Error::HypothesisViolated {
                            detail: "the scalar system has no interior solution".into(),
                        });
                    }
                    let mut results = Vec::new();
                    for sol in &sys.solutions {
                        results.push(reconstruct_from_environment(
                            &cfg.model,
                            grid,
                            sol.environment,
                        )?);
                    }
                    results[0].warnings.extend(sys.warnings.iter().cloned());
                    for b in &sys.boundary_solutions {
                        results[0]
                            .warnings
                            .push(format!("boundary (non-positive) root at {b}"));
                    }
                    write_results(&cfg, solver.method, &results, &out)?;
                }
                m => {
                    let result = solve_steady_state(&cfg.model, m, &params)?;
                    write_results(&cfg, m, std::slice::from_ref(&result), &out)?;
                }
            }
            Ok(0)
        }
        Command::ResolventCheck {
            config,
            lam,
            e1,
            e2,
            cells,
            probes,
            out,
        } => {
            let cfg = load(&config)?;
            let grid = cfg.model.grid(cells.unwrap_or(cfg.solver.n_cells))?;
            let env = Environment::new(e1, e2);
            let m = assemble_generator_matrix(&cfg.model, grid, env)?;
            let mut rows = Vec::new();
            for (idx, probe) in probe_profiles(grid, probes).iter().enumerate() {
                let r = resolvent_apply(&cfg.model, grid, env, lam, probe)?;
                let mut image = vec![0.0; m.order()];
                m.matvec(r.values(), &mut image);
                let residual: Vec<f64> = r
                    .values()
                    .iter()
                    .zip(&image)
                    .zip(probe.values())
                    .map(|((ri, mi), fi)| lam * ri - mi - fi)
                    .collect();
                rows.push(ProbeDoc {
                    probe: idx,
                    identity_residual: GridFn::new(grid, residual)?.l1_norm(),
                });
            }
            emit(
                out.as_deref(),
                &ResolventDoc {
                    model: cfg.model.kind_name(),
                    environment: env,
                    lam,
                    cell_width: grid.h(),
                    probes: rows,
                },
            )?;
            Ok(0)
        }
        Command::FixedRay {
            matrix,
            tol,
            max_iter,
            out,
        } => {
            let m = parse_matrix(&matrix)?;
            let r = fixed_ray(&m, tol, max_iter)?;
            emit(
                out.as_deref(),
                &FixedRayDoc {
                    eigenvalue: r.eigenvalue,
                    ray: r.ray,
                    iterations: r.iterations,
                },
            )?;
            Ok(0)
        }
        Command::Verify { result, out } => {
            let text = output::read_file(&result)?;
            let stored: StoredResult = serde_json::from_str(&text).map_err(|e| {
                Error::Config(format!("cannot parse {}: {e}", result.display()))
            })?;
            let cfg = parse_config(&stored.config_echo)?;
            let dir = out_dir(&result);
            let mut entries =
                vec![(stored.environment, stored.profile_csv.clone())];
            for extra in &stored.additional_solutions {
                entries.push((extra.environment, extra.profile_csv.clone()));
            }
            let mut checks = Vec::new();
            let mut all_pass = true;
            for (index, (env, csv_name)) in entries.into_iter().enumerate() {
                let csv = output::read_file(&dir.join(&csv_name))?;
                let profile = output::profile_from_csv(&csv, &cfg.model)?;
                let h = match &profile {
                    SolvedProfile::Line(p) => p.grid().h(),
                    SolvedProfile::Square(d) => d.lgrid().h(),
                };
                let shell = SteadyStateResult {
                    environment: env,
                    scale: 1.0,
                    profile,
                    diagnostics: Diagnostics::default(),
                    warnings: Vec::new(),
                };
                let fresh = verify_steady_state(&cfg.model, &shell)?;
                let allowance = 10.0 * h;
                let passed = fresh.env_consistency <= 1e-6
                    && fresh.boundary_residual <= 1e-6
                    && (fresh.r_value - 1.0).abs() <= 1e-6
                    && fresh.sigma_at_env.is_none_or(|s| s.abs() <= 1e-6)
                    && fresh.ode_residual <= allowance
                    && fresh.positive;
                all_pass &= passed;
                checks.push(CheckDoc {
                    solution: index,
                    passed,
                    diagnostics: fresh,
                    ode_residual_allowance: allowance,
                });
            }
            emit(
                out.as_deref(),
                &VerifyDoc {
                    passed: all_pass,
                    checks,
                },
            )?;
            Ok(if all_pass { 0 } else { 1 })
        }
    }
}

fn exits_as_hypothesis_failure(e: &Error) -> bool {
    e.is_hypothesis_violation()
        || matches!(e, Error::StrictPositivityFailure | Error::NoCrossing { .. })
}

fn error_slug(e: &Error) -> &'static str {
    match e {
        Error::HypothesisViolated { .. }
        | Error::BadOrigin { .. }
        | Error::NoOuterSignChange { .. } => "hypothesis-violated",
        Error::StrictPositivityFailure => "strict-positivity-failure",
        Error::NoCrossing { .. } => "no-crossing",
        _ => "error",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            if exits_as_hypothesis_failure(&e) {
                let report = ErrorReport {
                    error: error_slug(&e),
                    detail: e.to_string(),
                };
                match to_json(&report) {
                    Ok(body) => print!("{body}"),
                    Err(_) => println!("{{\"error\":\"{}\"}}", error_slug(&e)),
                }
                ExitCode::from(1)
            } else {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        }
    }
}
