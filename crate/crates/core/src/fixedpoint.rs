//! Steady-state solvers: the diagonal-crossing search on the zero level
//! set, profile reconstruction, verification diagnostics, the damped
//! state-space iteration and the cone fixed-ray iteration.
//!
//! A positive steady state is an environment on the zero set of the frozen
//! spectral bound whose eigenprofile reproduces the same environment
//! direction. The search runs in the one-dimensional simplex coordinate
//! `t = e2 / (e1 + e2)`: walk the level curve, compare each point's
//! direction with the direction its eigenprofile generates, and refine the
//! diagonal crossings of that map.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levelset::{bracket_on_ray, trace_zero_set, LevelCurve, Ray, SimplexPoint};
use crate::matrix::{perron_rightmost, rank_multiplicity, DenseMatrix};
use crate::model::{
    environment_cr, environment_of_profile, trapezoid_weights, Density2D, Environment,
    StructuredModel,
};
use crate::numerics::{bisect_root, integrate, integrate_range, Grid, GridFn};
use crate::reproduction::net_reproduction;
use crate::selmut;
use crate::spectral::{
    assemble_generator_matrix, characteristic_value, eigen_profile, spectral_bound,
};

/// Simplex coordinates this close to an endpoint count as boundary states.
const BOUNDARY_T_EPS: f64 = 1e-9;
/// Radius tolerance for the final bracket refinements.
const RADIUS_TOL: f64 = 1e-12;

/// Tunable knobs shared by the solvers.
#[derive(Debug, Clone, Copy)]
pub struct SolveParams {
    pub n_cells: usize,
    pub n_rays: usize,
    pub r_max: f64,
    pub tol: f64,
    pub damping: f64,
    pub max_iter: usize,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            n_cells: 2000,
            n_rays: 257,
            r_max: 10.0,
            tol: 1e-8,
            damping: 0.5,
            max_iter: 100_000,
        }
    }
}

/// Solution route selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    /// Level-set search justified by irreducibility of the linearization.
    Irreducible,
    /// Level-set search justified by monotonicity; adds a multiplicity
    /// diagnostic for the leading eigenvalue.
    Monotone,
    /// Closed scalar system (ratio or balance equations).
    Scalar,
    /// Damped iteration directly in the profile state space.
    StateSpace,
}

impl SolveMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveMethod::Irreducible => "irreducible",
            SolveMethod::Monotone => "monotone",
            SolveMethod::Scalar => "scalar",
            SolveMethod::StateSpace => "state-space",
        }
    }
}

impl fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolveMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "irreducible" => Ok(SolveMethod::Irreducible),
            "monotone" => Ok(SolveMethod::Monotone),
            "scalar" => Ok(SolveMethod::Scalar),
            "state-space" => Ok(SolveMethod::StateSpace),
            other => Err(Error::Config(format!(
                "unknown method {other:?}; expected irreducible, monotone, scalar or state-space"
            ))),
        }
    }
}

/// Residual report attached to every solution.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Spectral bound recomputed at the solution environment (absent for
    /// the scalar-balance model, whose linearization is not order
    /// preserving).
    pub sigma_at_env: Option<f64>,
    /// L1 distance between the stored environment and the one the stored
    /// profile generates.
    pub env_consistency: f64,
    /// Renewal boundary mismatch of the stored profile.
    pub boundary_residual: f64,
    /// Weighted L1 norm of the transport equation residual (away from the
    /// renewal node).
    pub ode_residual: f64,
    /// Net reproduction number at the solution environment.
    pub r_value: f64,
    /// True when the profile is nonnegative with positive mass.
    pub positive: bool,
}

/// Steady profile: a line density for the physiologically structured
/// models, a trait-age density for the selection-mutation model.
#[derive(Debug, Clone)]
pub enum SolvedProfile {
    Line(GridFn),
    Square(Density2D),
}

/// One steady state with its verification report.
#[derive(Debug, Clone)]
pub struct SteadyStateResult {
    pub environment: Environment,
    /// Ratio between the solution environment and the one generated by the
    /// normalized eigenprofile; the stored profile is already scaled.
    pub scale: f64,
    pub profile: SolvedProfile,
    pub diagnostics: Diagnostics,
    pub warnings: Vec<String>,
}

// ---------------------------------------------------------------------------
// the simplex map and its diagonal crossings

/// Direction generated by the eigenprofile of the environment the level
/// curve assigns to angle `theta`.
pub fn map_g(
    model: &StructuredModel,
    grid: Grid,
    curve: &LevelCurve,
    theta: f64,
) -> Result<SimplexPoint> {
    let env = curve.point_at(theta)?;
    let phi = eigen_profile(model, grid, env, 0.0)?;
    let e = environment_of_profile(model, &phi)?;
    SimplexPoint::from_environment(e)
}

/// One sample of the simplex self-map: input coordinate and its image.
#[derive(Debug, Clone, Copy)]
pub struct CrossingSample {
    pub t: f64,
    pub g: f64,
}

/// A refined diagonal crossing of the simplex self-map.
#[derive(Debug, Clone, Copy)]
pub struct Crossing {
    pub t: f64,
    /// The crossing sits at (or numerically at) an endpoint of the
    /// simplex, so one environment component vanishes.
    pub boundary: bool,
}

/// All diagonal crossings of the sampled map, refined through `refine`
/// (which must re-evaluate the map from scratch at a given coordinate).
/// Sample coordinates must be finite and strictly increasing.
pub fn find_all_diagonal_crossings(
    samples: &[CrossingSample],
    mut refine: impl FnMut(f64) -> Result<f64>,
    tol: f64,
) -> Result<Vec<Crossing>> {
    if samples.is_empty() {
        return Err(Error::Config(
            "the crossing search needs at least one sample".into(),
        ));
    }
    for pair in samples.windows(2) {
        if !(pair[1].t > pair[0].t) {
            return Err(Error::Config(format!(
                "sample coordinates must increase strictly, got {} then {}",
                pair[0].t, pair[1].t
            )));
        }
    }
    if samples.iter().any(|s| !(s.t.is_finite() && s.g.is_finite())) {
        return Err(Error::NonFinite {
            context: "crossing-search samples".into(),
        });
    }

    let gaps: Vec<f64> = samples.iter().map(|s| s.g - s.t).collect();
    let mut crossings: Vec<Crossing> = Vec::new();
    let push = |t: f64, crossings: &mut Vec<Crossing>| {
        let boundary = t <= BOUNDARY_T_EPS || t >= 1.0 - BOUNDARY_T_EPS;
        if crossings.iter().all(|c: &Crossing| (c.t - t).abs() > 1e-9) {
            crossings.push(Crossing { t, boundary });
        }
    };

    let mut prev_zero = false;
    for (i, &gap) in gaps.iter().enumerate() {
        if gap.abs() <= 1e-12 {
            if !prev_zero {
                push(samples[i].t, &mut crossings);
            }
            prev_zero = true;
            continue;
        }
        prev_zero = false;
        if i + 1 < gaps.len() && gap * gaps[i + 1] < 0.0 {
            let t_star = bisect_root(
                |t| refine(t).map(|g| g - t),
                samples[i].t,
                samples[i + 1].t,
                tol,
            )?;
            push(t_star, &mut crossings);
        }
    }

    if crossings.is_empty() {
        return Err(Error::NoCrossing {
            samples: samples.iter().map(|s| (s.t, s.g)).collect(),
        });
    }
    crossings.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(crossings)
}

/// First diagonal crossing of the sampled map.
pub fn find_diagonal_crossing(
    samples: &[CrossingSample],
    refine: impl FnMut(f64) -> Result<f64>,
    tol: f64,
) -> Result<Crossing> {
    Ok(find_all_diagonal_crossings(samples, refine, tol)?[0])
}

// ---------------------------------------------------------------------------
// reconstruction and verification

fn cross_sine(a: Environment, b: Environment) -> f64 {
    let na = (a.e1 * a.e1 + a.e2 * a.e2).sqrt();
    let nb = (b.e1 * b.e1 + b.e2 * b.e2).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (a.e1 * b.e2 - a.e2 * b.e1).abs() / (na * nb)
}

/// Scales a profile so that it generates `env`, after checking that the
/// environment it generates is parallel to `env`. Applying this to an
/// already scaled profile is the identity (scale 1).
pub fn reconstruct_steady_state(
    model: &StructuredModel,
    env: Environment,
    profile: &GridFn,
) -> Result<SteadyStateResult> {
    let e = environment_of_profile(model, profile)?;
    let sine = cross_sine(env, e);
    if sine > 1e-6 {
        return Err(Error::NotParallel { sine });
    }
    let total = e.l1_norm();
    if !(total > 0.0) {
        return Err(Error::DegenerateEnvironment);
    }
    let scale = env.l1_norm() / total;
    let mut result = SteadyStateResult {
        environment: env,
        scale,
        profile: SolvedProfile::Line(profile.map(|v| scale * v)),
        diagnostics: Diagnostics::default(),
        warnings: Vec::new(),
    };
    result.diagnostics = verify_steady_state(model, &result)?;
    Ok(result)
}

/// Rebuilds the full steady state implied by a solution environment alone:
/// the frozen eigenprofile scaled to regenerate the environment. This is
/// how scalar-system roots become verifiable solutions.
pub fn reconstruct_from_environment(
    model: &StructuredModel,
    grid: Grid,
    env: Environment,
) -> Result<SteadyStateResult> {
    match model {
        StructuredModel::ConsumerResource(_) => {
            let phi = eigen_profile(model, grid, env, 0.0)?;
            let mass = integrate(&phi);
            if !(mass > 0.0) {
                return Err(Error::DegenerateEnvironment);
            }
            let scale = env.e1 / mass;
            let mut result = SteadyStateResult {
                environment: env,
                scale,
                profile: SolvedProfile::Line(phi.map(|v| scale * v)),
                diagnostics: Diagnostics::default(),
                warnings: Vec::new(),
            };
            result.diagnostics = verify_steady_state(model, &result)?;
            Ok(result)
        }
        StructuredModel::SelectionMutation(_) => {
            let density = selmut::sm_eigen_density(model, grid, env, 0.0)?;
            let e = selmut::environment_sm(model, &density)?;
            let sine = cross_sine(env, e);
            if sine > 1e-6 {
                return Err(Error::NotParallel { sine });
            }
            let scale = env.l1_norm() / e.l1_norm();
            let mut result = SteadyStateResult {
                environment: env,
                scale,
                profile: SolvedProfile::Square(density.scale(scale)),
                diagnostics: Diagnostics::default(),
                warnings: Vec::new(),
            };
            result.diagnostics = verify_steady_state(model, &result)?;
            Ok(result)
        }
        _ => {
            let phi = eigen_profile(model, grid, env, 0.0)?;
            reconstruct_steady_state(model, env, &phi)
        }
    }
}

/// Recomputes every diagnostic of a solution from scratch; the solver
/// itself fills `Diagnostics` through this function, so an external
/// re-verification reproduces the stored values.
pub fn verify_steady_state(
    model: &StructuredModel,
    result: &SteadyStateResult,
) -> Result<Diagnostics> {
    let env = result.environment;
    match &result.profile {
        SolvedProfile::Line(p) => verify_line(model, env, p),
        SolvedProfile::Square(d) => verify_square(model, env, d),
    }
}

fn verify_line(model: &StructuredModel, env: Environment, p: &GridFn) -> Result<Diagnostics> {
    let grid = p.grid();
    let view = model.renewal()?;

    let generated = match model {
        StructuredModel::ConsumerResource(_) => environment_cr(p, env.e2),
        _ => environment_of_profile(model, p)?,
    };
    let env_consistency =
        (generated.e1 - env.e1).abs() + (generated.e2 - env.e2).abs();

    let (i_lo, i_hi) = view.fertile_indices(&grid)?;
    let birth = {
        let mut vals = Vec::with_capacity(grid.n_nodes());
        for i in 0..grid.n_nodes() {
            vals.push(view.beta(grid.node(i), env)? * p.values()[i]);
        }
        integrate_range(&GridFn::new(grid, vals)?, i_lo, i_hi)
    };
    let boundary_residual = (view.gamma(0.0, env)? * p.values()[0] - birth).abs();

    let n = grid.n_cells();
    let h = grid.h();
    let w = trapezoid_weights(&grid);
    let mut flux = Vec::with_capacity(grid.n_nodes());
    for i in 0..grid.n_nodes() {
        flux.push(view.gamma(grid.node(i), env)? * p.values()[i]);
    }
    let mut ode_residual = 0.0;
    for i in 1..=n {
        let d = if i < n {
            (flux[i + 1] - flux[i - 1]) / (2.0 * h)
        } else {
            (flux[n] - flux[n - 1]) / h
        };
        let r = d + view.mortality(grid.node(i), env)? * p.values()[i];
        ode_residual += w[i] * r.abs();
    }

    let r_value = net_reproduction(model, grid, env)?;
    let sigma_at_env = match model {
        StructuredModel::ConsumerResource(_) => None,
        _ => Some(spectral_bound(model, grid, env, 1e-10)?.bound),
    };
    let mass = integrate(p);
    let positive = mass > 0.0 && p.min_value() >= -1e-9 * (1.0 + p.linf_norm());

    Ok(Diagnostics {
        sigma_at_env,
        env_consistency,
        boundary_residual,
        ode_residual,
        r_value,
        positive,
    })
}

fn verify_square(model: &StructuredModel, env: Environment, d: &Density2D) -> Result<Diagnostics> {
    let sm = match model {
        StructuredModel::SelectionMutation(m) => m,
        other => {
            return Err(Error::Config(format!(
                "a trait-age density cannot verify against the {} model",
                other.kind_name()
            )))
        }
    };
    let grid = d.lgrid();
    let n_nodes = grid.n_nodes();
    let h = grid.h();

    let generated = selmut::environment_sm(model, d)?;
    let env_consistency =
        (generated.e1 - env.e1).abs() + (generated.e2 - env.e2).abs();

    // renewal residual of the newborn trait distribution
    let kernel = selmut::kernel_assemble(model, grid, env, 0.0)?;
    let newborn: Vec<f64> = (0..n_nodes).map(|i| d.value(i, 0)).collect();
    let image = kernel.apply(&newborn);
    let diff: Vec<f64> = newborn.iter().zip(&image).map(|(a, b)| a - b).collect();
    let boundary_residual = kernel.weighted_norm(&diff);

    let w = trapezoid_weights(&grid);
    let mut ode_residual = 0.0;
    for i in 0..n_nodes {
        let l = grid.node(i);
        for k in 1..n_nodes {
            let deriv = if k < n_nodes - 1 {
                (d.value(i, k + 1) - d.value(i, k - 1)) / (2.0 * h)
            } else {
                (d.value(i, k) - d.value(i, k - 1)) / h
            };
            let r = deriv + sm.mu.eval(l, grid.node(k), env)? * d.value(i, k);
            ode_residual += w[i] * w[k] * r.abs();
        }
    }

    let r_value = net_reproduction(model, grid, env)?;
    let sigma_at_env = Some(selmut::sm_spectral_bound(model, grid, env, 1e-8)?.bound);
    let mass = d.total_mass();
    let max = d.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let positive = mass > 0.0 && d.min_value() >= -1e-9 * (1.0 + max);

    Ok(Diagnostics {
        sigma_at_env,
        env_consistency,
        boundary_residual,
        ode_residual,
        r_value,
        positive,
    })
}

// ---------------------------------------------------------------------------
// the level-set solvers

fn hypothesis_check(model: &StructuredModel, grid: Grid, params: &SolveParams) -> Result<()> {
    let b0 = spectral_bound(model, grid, Environment::origin(), params.tol)?;
    if !(b0.bound > 0.0) {
        return Err(Error::HypothesisViolated {
            detail: format!(
                "spectral bound at the origin is {}; a positive steady state needs it positive",
                b0.bound
            ),
        });
    }
    for axis_env in [
        Environment::new(params.r_max, 0.0),
        Environment::new(0.0, params.r_max),
    ] {
        let ba = spectral_bound(model, grid, axis_env, params.tol)?;
        if !(ba.bound < 0.0) {
            return Err(Error::HypothesisViolated {
                detail: format!(
                    "spectral bound at {axis_env} is {}; it must be negative at radius {}",
                    ba.bound, params.r_max
                ),
            });
        }
    }
    Ok(())
}

/// Level-set steady-state solver. `Irreducible` and `Monotone` run the same
/// search; the monotone route additionally reports when the discretized
/// leading eigenvalue fails to be simple. The trait-age model dispatches to
/// its kernel pipeline, the scalar-balance model is rejected (its frozen
/// semigroup is not order preserving; use the scalar system), and
/// `StateSpace` delegates to the damped iteration from a flat start.
pub fn solve_steady_state(
    model: &StructuredModel,
    method: SolveMethod,
    params: &SolveParams,
) -> Result<SteadyStateResult> {
    match model {
        StructuredModel::SelectionMutation(_) => {
            let mut result = selmut::solve_selmut(model, params)?;
            if method == SolveMethod::Monotone {
                result.warnings.push(
                    "the multiplicity diagnostic is unavailable for the trait-age kernel route"
                        .into(),
                );
            }
            return Ok(result);
        }
        StructuredModel::ConsumerResource(_) => {
            return Err(Error::ModelUnsupported {
                op: "level-set spectral solve",
                model: model.kind_name(),
            })
        }
        _ => {}
    }
    match method {
        SolveMethod::Scalar => {
            return Err(Error::Config(
                "the scalar route produces a solution set; call the scalar-system solver".into(),
            ))
        }
        SolveMethod::StateSpace => {
            let grid = model.grid(params.n_cells)?;
            let upper = model.domain_upper();
            let init = GridFn::new(grid, vec![1.0 / upper; grid.n_nodes()])?;
            return solve_state_space(model, &init, params);
        }
        SolveMethod::Irreducible | SolveMethod::Monotone => {}
    }

    let grid = model.grid(params.n_cells)?;
    hypothesis_check(model, grid, params)?;

    let sigma =
        |env: Environment| -> Result<f64> { Ok(characteristic_value(model, grid, env, 0.0)? - 1.0) };
    let curve = trace_zero_set(&sigma, params.n_rays, params.r_max, params.tol)?;

    let mut warnings: Vec<String> = Vec::new();
    let degenerate = curve.samples().iter().filter(|s| s.degenerate).count();
    if degenerate > 0 {
        warnings.push(format!(
            "{degenerate} level-curve sample(s) had a flat crossing within tolerance"
        ));
    }

    let map_at = |env: Environment| -> Result<f64> {
        let phi = eigen_profile(model, grid, env, 0.0)?;
        let e = environment_of_profile(model, &phi)?;
        Ok(SimplexPoint::from_environment(e)?.t())
    };
    let mut samples = Vec::with_capacity(curve.samples().len());
    for s in curve.samples() {
        samples.push(CrossingSample {
            t: SimplexPoint::from_environment(s.point)?.t(),
            g: map_at(s.point)?,
        });
    }
    let refine = |t: f64| -> Result<f64> {
        let theta = SimplexPoint::new(t)?.theta();
        let rho = bracket_on_ray(&sigma, theta, params.r_max, RADIUS_TOL)?.radius;
        map_at(Ray::new(theta)?.point(rho))
    };
    let crossings =
        find_all_diagonal_crossings(&samples, refine, (params.tol * 1e-2).max(1e-12))?;
    let primary = crossings
        .iter()
        .find(|c| !c.boundary)
        .or_else(|| crossings.first())
        .expect("crossing search returned an empty list without erroring");
    if primary.boundary {
        warnings.push(format!(
            "fixed point at simplex coordinate {} lies on the quadrant boundary",
            primary.t
        ));
    }
    for extra in crossings.iter().filter(|c| c.t != primary.t) {
        warnings.push(format!(
            "additional diagonal crossing at simplex coordinate {}",
            extra.t
        ));
    }

    let theta = SimplexPoint::new(primary.t)?.theta();
    let rho = bracket_on_ray(&sigma, theta, params.r_max, RADIUS_TOL)?.radius;
    let env = Ray::new(theta)?.point(rho);
    let phi = eigen_profile(model, grid, env, 0.0)?;
    let mut result = reconstruct_steady_state(model, env, &phi)?;

    if method == SolveMethod::Monotone {
        let coarse = model.grid(200)?;
        let m = assemble_generator_matrix(model, coarse, env)?;
        let leading = perron_rightmost(&m, 1e-9, 200_000)?;
        let (geo, alg) = rank_multiplicity(&m, leading.eigenvalue, 1e-7);
        if (geo, alg) != (1, 1) {
            warnings.push(format!(
                "discretized leading eigenvalue has geometric multiplicity {geo} and algebraic \
                 multiplicity {alg}; the comparison argument assumes a simple eigenvalue"
            ));
        }
        if !leading.strictly_positive {
            warnings.push("discretized leading eigenvector is not strictly positive".into());
        }
    }

    result.warnings.splice(0..0, warnings);
    Ok(result)
}

/// Damped fixed-point iteration directly on normalized profiles: each step
/// rescales the current environment direction onto the critical surface
/// (net reproduction one), takes the eigenprofile there, and averages.
pub fn solve_state_space(
    model: &StructuredModel,
    init: &GridFn,
    params: &SolveParams,
) -> Result<SteadyStateResult> {
    let grid = init.grid();
    let b0 = spectral_bound(model, grid, Environment::origin(), params.tol)?;
    if !(b0.bound > 0.0) {
        return Err(Error::HypothesisViolated {
            detail: format!(
                "spectral bound at the origin is {}; a positive steady state needs it positive",
                b0.bound
            ),
        });
    }
    let mass = integrate(init);
    if !(mass > 0.0) {
        return Err(Error::HypothesisViolated {
            detail: "the initial profile has no mass".into(),
        });
    }
    let mut p = init.map(|v| v / mass);
    if !(params.damping > 0.0 && params.damping <= 1.0) {
        return Err(Error::Config(format!(
            "damping must lie in (0, 1], got {}",
            params.damping
        )));
    }

    let critical_scale = |e: Environment| -> Result<f64> {
        let r = |c: f64| -> Result<f64> {
            Ok(characteristic_value(model, grid, e.scale(c), 0.0)? - 1.0)
        };
        let mut hi = 1.0;
        while r(hi)? > 0.0 {
            hi *= 2.0;
            if hi > 1e9 {
                return Err(Error::HypothesisViolated {
                    detail: format!(
                        "net reproduction stays above one along the ray through {e}"
                    ),
                });
            }
        }
        bisect_root(r, 0.0, hi, 1e-12 * (1.0 + hi))
    };

    let mut iterations = 0;
    let mut last_delta = f64::INFINITY;
    while iterations < params.max_iter {
        iterations += 1;
        let e = environment_of_profile(model, &p)?;
        if !(e.l1_norm() > 0.0) {
            return Err(Error::DegenerateEnvironment);
        }
        let c = critical_scale(e)?;
        let phi = eigen_profile(model, grid, e.scale(c), 0.0)?;
        let next = p.zip_map(&phi, |a, b| {
            (1.0 - params.damping) * a + params.damping * b
        });
        last_delta = p.zip_map(&next, |a, b| a - b).l1_norm();
        p = next;
        if last_delta <= params.tol {
            let e = environment_of_profile(model, &p)?;
            let c = critical_scale(e)?;
            let mut result = reconstruct_steady_state(model, e.scale(c), &p)?;
            result
                .warnings
                .push(format!("state-space iteration converged in {iterations} step(s)"));
            return Ok(result);
        }
    }
    Err(Error::NoConvergence {
        max_iter: params.max_iter,
        estimate: f64::NAN,
        residual: last_delta,
    })
}

// ---------------------------------------------------------------------------
// cone fixed-ray iteration

/// A fixed ray of a cone-preserving matrix: a nonnegative unit-sum vector
/// with `L x = eigenvalue x`.
#[derive(Debug, Clone)]
pub struct FixedRay {
    pub eigenvalue: f64,
    pub ray: Vec<f64>,
    pub iterations: usize,
}

/// Averaged normalized iteration for the leading ray of an entrywise
/// nonnegative matrix. Collapse toward zero (the quasi-nilpotent case)
/// reports `StrictPositivityFailure` instead of pretending convergence.
pub fn fixed_ray(l: &DenseMatrix, tol: f64, max_iter: usize) -> Result<FixedRay> {
    if !l.is_nonnegative() {
        return Err(Error::HypothesisViolated {
            detail: "the fixed-ray iteration needs an entrywise nonnegative matrix".into(),
        });
    }
    let n = l.order();
    if n == 0 {
        return Err(Error::BadGrid("empty matrix".into()));
    }
    let floor = f64::EPSILON.sqrt() * l.infinity_norm();
    let mut x = vec![1.0 / n as f64; n];
    let mut y = vec![0.0; n];
    let mut prev_lam = f64::NAN;
    for iter in 1..=max_iter {
        l.matvec(&x, &mut y);
        let ny: f64 = y.iter().map(|v| v.abs()).sum();
        if !ny.is_finite() {
            return Err(Error::NonFinite {
                context: "fixed-ray iteration produced a non-finite vector".into(),
            });
        }
        if ny <= floor {
            return Err(Error::StrictPositivityFailure);
        }
        let residual: f64 = y.iter().zip(&x).map(|(yi, xi)| (yi - ny * xi).abs()).sum();
        if residual <= tol && (ny - prev_lam).abs() <= tol * (1.0 + ny) {
            return Ok(FixedRay {
                eigenvalue: ny,
                ray: x,
                iterations: iter,
            });
        }
        prev_lam = ny;
        let mut sum = 0.0;
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = 0.5 * (*xi + yi / ny);
            sum += *xi;
        }
        for xi in &mut x {
            *xi /= sum;
        }
    }
    Err(Error::NoConvergence {
        max_iter,
        estimate: prev_lam,
        residual: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JuvenileAdultModel, RateField};

    pub(crate) fn ja_const() -> StructuredModel {
        let beta = RateField::new("beta", |s, env: Environment| {
            let ind = if (1.0..=2.0).contains(&s) { 1.0 } else { 0.0 };
            Ok(3.0 * ind / (1.0 + env.e1 + env.e2))
        });
        StructuredModel::JuvenileAdult(
            JuvenileAdultModel::new(
                1.0,
                2.0,
                beta,
                RateField::constant("mu", 0.0),
                RateField::constant("gamma", 1.0),
            )
            .unwrap(),
        )
    }

    fn eh_const() -> StructuredModel {
        use crate::model::EarlyHumanModel;
        let beta = RateField::new("beta", |a, _| {
            Ok(if (1.0..=2.0).contains(&a) { 3.0 } else { 0.0 })
        });
        let mu = RateField::new("mu", |a, _| {
            Ok(if (0.0..=1.0).contains(&a) { 1.0 } else { 0.0 })
        });
        StructuredModel::EarlyHuman(
            EarlyHumanModel::new(
                1.0,
                2.0,
                3.0,
                beta,
                RateField::constant("f", 0.0),
                RateField::constant("eta", 1.0),
                mu,
            )
            .unwrap(),
        )
    }

    fn quick_params() -> SolveParams {
        SolveParams {
            n_cells: 400,
            n_rays: 33,
            r_max: 10.0,
            tol: 1e-9,
            ..SolveParams::default()
        }
    }

    #[test]
    fn map_is_constant_half_for_symmetric_model() {
        let model = ja_const();
        let grid = model.grid(200).unwrap();
        let sigma = |env: Environment| -> Result<f64> {
            Ok(characteristic_value(&model, grid, env, 0.0)? - 1.0)
        };
        let curve = trace_zero_set(&sigma, 17, 10.0, 1e-10).unwrap();
        for theta in [0.0, 0.3, std::f64::consts::FRAC_PI_4, 1.2] {
            let g = map_g(&model, grid, &curve, theta).unwrap();
            assert!((g.t() - 0.5).abs() <= 1e-9, "map at {theta} gave {}", g.t());
        }
    }

    #[test]
    fn crossing_finder_handles_tangent_endpoints() {
        let samples: Vec<CrossingSample> = (0..=10)
            .map(|i| {
                let t = i as f64 / 10.0;
                CrossingSample { t, g: t * t }
            })
            .collect();
        let crossings =
            find_all_diagonal_crossings(&samples, |t| Ok(t * t), 1e-12).unwrap();
        assert_eq!(crossings.len(), 2);
        assert!(crossings[0].boundary && crossings[0].t == 0.0);
        assert!(crossings[1].boundary && crossings[1].t == 1.0);
    }

    #[test]
    fn crossing_finder_refines_interior_roots() {
        let samples: Vec<CrossingSample> = (0..=8)
            .map(|i| {
                let t = i as f64 / 8.0;
                CrossingSample { t, g: 0.3 }
            })
            .collect();
        let c = find_diagonal_crossing(&samples, |_| Ok(0.3), 1e-12).unwrap();
        assert!((c.t - 0.3).abs() <= 1e-11);
        assert!(!c.boundary);

        let samples: Vec<CrossingSample> = (0..=8)
            .map(|i| {
                let t = i as f64 / 8.0;
                CrossingSample { t, g: 1.0 - t }
            })
            .collect();
        let c = find_diagonal_crossing(&samples, |t| Ok(1.0 - t), 1e-12).unwrap();
        assert!((c.t - 0.5).abs() <= 1e-11);
    }

    #[test]
    fn crossing_finder_reports_absence() {
        let samples: Vec<CrossingSample> = (0..=4)
            .map(|i| {
                let t = i as f64 / 4.0;
                CrossingSample { t, g: t / 2.0 + 0.4 }
            })
            .collect();
        // g - t = 0.4 - t/2 vanishes at t = 0.8 -- adjust to avoid a crossing
        let samples: Vec<CrossingSample> = samples
            .into_iter()
            .map(|s| CrossingSample { t: s.t, g: s.t * 0.5 - 0.2 })
            .collect();
        let err = find_all_diagonal_crossings(&samples, |t| Ok(t * 0.5 - 0.2), 1e-12)
            .unwrap_err();
        assert!(matches!(err, Error::NoCrossing { .. }));
    }

    #[test]
    fn symmetric_model_solves_to_unit_environment() {
        let model = ja_const();
        let result =
            solve_steady_state(&model, SolveMethod::Irreducible, &quick_params()).unwrap();
        assert!((result.environment.e1 - 1.0).abs() <= 1e-8);
        assert!((result.environment.e2 - 1.0).abs() <= 1e-8);
        assert!((result.scale - 2.0).abs() <= 1e-8);
        if let SolvedProfile::Line(p) = &result.profile {
            for v in p.values() {
                assert!((v - 1.0).abs() <= 1e-8, "profile value {v}");
            }
        } else {
            panic!("expected a line profile");
        }
        let d = &result.diagnostics;
        assert!(d.positive);
        assert!(d.env_consistency <= 1e-9);
        assert!(d.boundary_residual <= 1e-9);
        assert!((d.r_value - 1.0).abs() <= 1e-9);
        assert!(d.sigma_at_env.unwrap().abs() <= 1e-8);
        assert!(d.ode_residual <= 1e-6);
    }

    #[test]
    fn monotone_route_adds_no_warning_for_simple_spectrum() {
        let model = ja_const();
        let result = solve_steady_state(&model, SolveMethod::Monotone, &quick_params()).unwrap();
        assert!(
            result
                .warnings
                .iter()
                .all(|w| !w.contains("multiplicity")),
            "unexpected warnings: {:?}",
            result.warnings
        );
    }

    #[test]
    fn state_space_converges_in_one_step_from_the_fixed_profile() {
        let model = ja_const();
        let grid = model.grid(400).unwrap();
        let init = GridFn::new(grid, vec![0.5; grid.n_nodes()]).unwrap();
        let result = solve_state_space(&model, &init, &quick_params()).unwrap();
        assert!((result.environment.e1 - 1.0).abs() <= 1e-9);
        assert!((result.environment.e2 - 1.0).abs() <= 1e-9);
        assert!(result
            .warnings
            .iter()
            .any(|w| w.contains("converged in 1 step")));
    }

    #[test]
    fn state_space_agrees_with_level_set_route() {
        let model = eh_const();
        let level = solve_steady_state(&model, SolveMethod::Monotone, &quick_params()).unwrap();
        let grid = model.grid(400).unwrap();
        let init = GridFn::new(grid, vec![1.0 / 3.0; grid.n_nodes()]).unwrap();
        let state = solve_state_space(&model, &init, &quick_params()).unwrap();
        assert!(
            (level.environment.e1 - state.environment.e1).abs() <= 1e-6
                && (level.environment.e2 - state.environment.e2).abs() <= 1e-6,
            "level {:?} vs state {:?}",
            level.environment,
            state.environment
        );
        assert!(level.diagnostics.positive && state.diagnostics.positive);
    }

    #[test]
    fn subcritical_fertility_violates_the_hypothesis() {
        let beta = RateField::new("beta", |s, env: Environment| {
            let ind = if (1.0..=2.0).contains(&s) { 1.0 } else { 0.0 };
            Ok(0.5 * ind / (1.0 + env.e1 + env.e2))
        });
        let model = StructuredModel::JuvenileAdult(
            JuvenileAdultModel::new(
                1.0,
                2.0,
                beta,
                RateField::constant("mu", 0.0),
                RateField::constant("gamma", 1.0),
            )
            .unwrap(),
        );
        let err =
            solve_steady_state(&model, SolveMethod::Irreducible, &quick_params()).unwrap_err();
        assert!(err.is_hypothesis_violation(), "got {err:?}");
        let grid = model.grid(100).unwrap();
        let init = GridFn::new(grid, vec![0.5; grid.n_nodes()]).unwrap();
        let err = solve_state_space(&model, &init, &quick_params()).unwrap_err();
        assert!(err.is_hypothesis_violation(), "got {err:?}");
    }

    #[test]
    fn reconstruction_is_idempotent() {
        let model = ja_const();
        let result =
            solve_steady_state(&model, SolveMethod::Irreducible, &quick_params()).unwrap();
        if let SolvedProfile::Line(p) = &result.profile {
            let again = reconstruct_steady_state(&model, result.environment, p).unwrap();
            assert!((again.scale - 1.0).abs() <= 1e-12, "scale {}", again.scale);
        } else {
            panic!("expected a line profile");
        }
    }

    #[test]
    fn fixed_ray_finds_dominant_directions() {
        let swap = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let r = fixed_ray(&swap, 1e-12, 10_000).unwrap();
        assert!((r.eigenvalue - 1.0).abs() <= 1e-12);
        assert!((r.ray[0] - 0.5).abs() <= 1e-12 && (r.ray[1] - 0.5).abs() <= 1e-12);

        let dense = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let r = fixed_ray(&dense, 1e-12, 100_000).unwrap();
        let expected = 0.5 * (5.0 + 33.0f64.sqrt());
        assert!((r.eigenvalue - expected).abs() <= 1e-10, "{}", r.eigenvalue);
    }

    #[test]
    fn fixed_ray_rejects_nilpotent_collapse() {
        let nil = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let err = fixed_ray(&nil, 1e-12, 100_000).unwrap_err();
        assert!(matches!(err, Error::StrictPositivityFailure), "got {err:?}");
        let neg = DenseMatrix::from_rows(&[vec![1.0, -0.5], vec![0.0, 1.0]]).unwrap();
        let err = fixed_ray(&neg, 1e-10, 1000).unwrap_err();
        assert!(err.is_hypothesis_violation());
    }

    #[test]
    fn reconstruct_from_environment_round_trips_scalar_roots() {
        let model = ja_const();
        let grid = model.grid(200).unwrap();
        let result =
            reconstruct_from_environment(&model, grid, Environment::new(1.0, 1.0)).unwrap();
        assert!((result.scale - 2.0).abs() <= 1e-9);
        assert!(result.diagnostics.env_consistency <= 1e-9);
        assert!((result.diagnostics.r_value - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn verification_flags_a_zero_profile() {
        let model = ja_const();
        let grid = model.grid(64).unwrap();
        let zero = GridFn::new(grid, vec![0.0; grid.n_nodes()]).unwrap();
        let result = SteadyStateResult {
            environment: Environment::new(1.0, 1.0),
            scale: 0.0,
            profile: SolvedProfile::Line(zero),
            diagnostics: Diagnostics::default(),
            warnings: Vec::new(),
        };
        let d = verify_steady_state(&model, &result).unwrap();
        assert!(!d.positive);
        assert!(d.env_consistency > 1.0);
    }
}
