//! Net reproduction numbers and the scalar steady-state routes.
//!
//! For the juvenile-adult and consumer-resource models a positive steady
//! state is equivalent to a pair of scalar equations on the environment:
//! the net reproduction number equals one, and a ratio (or resource
//! balance) residual vanishes. The solver traces the `R = 1` level set and
//! hunts sign changes of the second residual along it.

use crate::error::{Error, Result};
use crate::levelset::{bracket_on_ray, Ray};
use crate::model::{Environment, StructuredModel};
use crate::numerics::{bisect_root, integrate_range, Grid, GridFn};
use crate::selmut;
use crate::spectral::{renewal_integral, survival_view};
use serde::{Deserialize, Serialize};

/// One root of the scalar system with its residual record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalarSolution {
    pub environment: Environment,
    pub r_residual: f64,
    pub balance_residual: f64,
    /// The consumer-resource balance admits formal roots where the resource
    /// growth `f(Q)` is negative; such roots are kept but flagged.
    pub negative_growth: bool,
}

/// All roots found along the traced `R = 1` curve.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScalarSystemResult {
    pub solutions: Vec<ScalarSolution>,
    /// Roots with a vanishing environment component (non-positive states).
    pub boundary_solutions: Vec<Environment>,
    pub warnings: Vec<String>,
}

/// Net reproduction number of the juvenile-adult model: expected lifetime
/// offspring of a newborn under frozen environment `env`.
pub fn net_reproduction_ja(model: &StructuredModel, grid: Grid, env: Environment) -> Result<f64> {
    match model {
        StructuredModel::JuvenileAdult(_) => {
            renewal_integral(&model.renewal()?, grid, env, 0.0)
        }
        other => Err(Error::ModelUnsupported {
            op: "net_reproduction_ja",
            model: other.kind_name(),
        }),
    }
}

/// Net reproduction number of the consumer-resource model (fertility
/// supported on the whole size range).
pub fn net_reproduction_cr(model: &StructuredModel, grid: Grid, env: Environment) -> Result<f64> {
    match model {
        StructuredModel::ConsumerResource(_) => {
            renewal_integral(&model.renewal()?, grid, env, 0.0)
        }
        other => Err(Error::ModelUnsupported {
            op: "net_reproduction_cr",
            model: other.kind_name(),
        }),
    }
}

/// Net reproduction number of any model variant: the discounted offspring
/// integral at zero discount for the transport models, and the spectral
/// radius of the renewal kernel for the selection-mutation model.
pub fn net_reproduction(model: &StructuredModel, grid: Grid, env: Environment) -> Result<f64> {
    match model {
        StructuredModel::SelectionMutation(_) => {
            let k = selmut::kernel_assemble(model, grid, env, 0.0)?;
            Ok(selmut::kernel_spectral_radius(&k, 1e-12)?.radius)
        }
        _ => renewal_integral(&model.renewal()?, grid, env, 0.0),
    }
}

/// Unnormalized steady-profile shape `omega(s) = (gamma(0)/gamma(s)) * F(s)`
/// with `F` the zero-discount survival factor. Equal to the steady transport
/// profile up to the birth-rate scale.
fn omega(model: &StructuredModel, grid: Grid, env: Environment) -> Result<GridFn> {
    let view = model.renewal()?;
    let f = survival_view(&view, grid, env, 0.0)?;
    let g0 = view.gamma(grid.node(0), env)?;
    let mut values = Vec::with_capacity(grid.n_nodes());
    for (i, s) in grid.nodes().enumerate() {
        let g = view.gamma(s, env)?;
        if !(g > 0.0) {
            return Err(Error::Domain {
                context: format!("growth rate is {g} at s = {s}; must be positive"),
                at: s,
            });
        }
        values.push(g0 / g * f.values()[i]);
    }
    GridFn::new(grid, values)
}

/// Cross-multiplied juvenile-adult ratio residual `J * D - A * N`, where
/// `N` and `D` are the juvenile and adult masses of the steady shape
/// `omega`. Vanishes exactly when `(J, A)` has the proportions of a steady
/// profile; continuous on the closed quadrant, unlike the raw ratio `J/A`.
pub fn ja_ratio_residual(model: &StructuredModel, grid: Grid, env: Environment) -> Result<f64> {
    let ja = match model {
        StructuredModel::JuvenileAdult(m) => m,
        other => {
            return Err(Error::ModelUnsupported {
                op: "ja_ratio_residual",
                model: other.kind_name(),
            })
        }
    };
    let w = omega(model, grid, env)?;
    let i_l = grid
        .node_index_of(ja.l)
        .ok_or(Error::GridMisaligned { point: ja.l })?;
    let n = integrate_range(&w, 0, i_l);
    let d = integrate_range(&w, i_l, grid.n_cells());
    Ok(env.e1 * d - env.e2 * n)
}

/// Cross-multiplied consumer-resource balance residual
/// `P * D_F - Q * f(Q) * N`, with `N` the mass of the steady shape, `D_F`
/// its feeding-weighted mass and `f` the resource growth law.
pub fn cr_balance_residual(model: &StructuredModel, grid: Grid, env: Environment) -> Result<f64> {
    let cr = match model {
        StructuredModel::ConsumerResource(m) => m,
        other => {
            return Err(Error::ModelUnsupported {
                op: "cr_balance_residual",
                model: other.kind_name(),
            })
        }
    };
    let w = omega(model, grid, env)?;
    let n_cells = grid.n_cells();
    let n = integrate_range(&w, 0, n_cells);
    let mut weighted = Vec::with_capacity(grid.n_nodes());
    for (i, s) in grid.nodes().enumerate() {
        weighted.push(cr.feeding.eval(s, env)? * w.values()[i]);
    }
    let weighted = GridFn::new(grid, weighted)?;
    let d_f = integrate_range(&weighted, 0, n_cells);
    let growth = cr.resource_growth.eval(env.e2)?;
    Ok(env.e1 * d_f - env.e2 * growth * n)
}

/// The second scalar equation of the system for the given model.
fn pair_residual(model: &StructuredModel, grid: Grid, env: Environment) -> Result<f64> {
    match model {
        StructuredModel::JuvenileAdult(_) => ja_ratio_residual(model, grid, env),
        StructuredModel::ConsumerResource(_) => cr_balance_residual(model, grid, env),
        other => Err(Error::ModelUnsupported {
            op: "scalar system",
            model: other.kind_name(),
        }),
    }
}

/// Radius tolerance used for the per-ray root of `R = 1` inside the scalar
/// solver: much tighter than the reported tolerance so that the radius
/// error never dominates the angular bisection.
const RADIUS_TOL: f64 = 1e-12;

/// Environment components below this fraction of the radius count as lying
/// on the quadrant boundary.
const BOUNDARY_FRACTION: f64 = 1e-7;

/// Solves the two-equation scalar system for the juvenile-adult or
/// consumer-resource model: traces the `R = 1` level set along a fan of
/// rays (rays that never cross it are skipped with a warning), then
/// bisects every sign change of the ratio/balance residual along the
/// curve. Returns all interior roots; boundary roots are listed apart.
pub fn solve_scalar_system(
    model: &StructuredModel,
    grid: Grid,
    n_rays: usize,
    r_max: f64,
    tol: f64,
) -> Result<ScalarSystemResult> {
    let sigma = |env: Environment| -> Result<f64> {
        Ok(renewal_integral(&model.renewal()?, grid, env, 0.0)? - 1.0)
    };
    let r0 = sigma(Environment::origin())? + 1.0;
    if !(r0 > 1.0) {
        return Err(Error::HypothesisViolated {
            detail: format!("net reproduction at the origin is {r0}; the scalar route needs it above 1"),
        });
    }

    let n_rays = n_rays.max(2);
    let mut result = ScalarSystemResult::default();

    // radius of the R = 1 crossing on one ray, at scan resolution 64
    let radius_at = |theta: f64| -> Result<f64> {
        Ok(bracket_on_ray(&sigma, theta, r_max, RADIUS_TOL)?.radius)
    };

    // sample the fan, degrading per-ray failures to warnings
    let mut samples: Vec<(f64, Environment, f64)> = Vec::new();
    for i in 0..n_rays {
        let theta = std::f64::consts::FRAC_PI_2 * i as f64 / (n_rays - 1) as f64;
        match radius_at(theta) {
            Ok(rho) => {
                let env = Ray::new(theta)?.point(rho);
                let g = pair_residual(model, grid, env)?;
                samples.push((theta, env, g));
            }
            Err(e) => result
                .warnings
                .push(format!("ray theta = {theta:.6} skipped: {e}")),
        }
    }
    if samples.is_empty() {
        return Err(Error::HypothesisViolated {
            detail: "no ray of the fan crosses the R = 1 level set".to_string(),
        });
    }

    // residual along the curve as a function of theta, with a fresh radius
    // solve per probe angle
    let mut curve_residual = |theta: f64| -> Result<f64> {
        let rho = radius_at(theta)?;
        pair_residual(model, grid, Ray::new(theta)?.point(rho))
    };

    let record = |env: Environment,
                  g: f64,
                  result: &mut ScalarSystemResult|
     -> Result<()> {
        let r_residual = (sigma(env)? ).abs();
        let rho = env.l1_norm();
        if env.e1 <= BOUNDARY_FRACTION * rho || env.e2 <= BOUNDARY_FRACTION * rho {
            result.boundary_solutions.push(env);
            return Ok(());
        }
        let negative_growth = match model {
            StructuredModel::ConsumerResource(m) => m.resource_growth.eval(env.e2)? < 0.0,
            _ => false,
        };
        if negative_growth {
            result.warnings.push(format!(
                "solution at {env} has negative resource growth"
            ));
        }
        result.solutions.push(ScalarSolution {
            environment: env,
            r_residual,
            balance_residual: g.abs(),
            negative_growth,
        });
        Ok(())
    };

    for pair in 0..samples.len().saturating_sub(1) {
        let (t0, _, g0) = samples[pair];
        let (t1, _, g1) = samples[pair + 1];
        if g0 == 0.0 {
            let (_, env, g) = samples[pair];
            record(env, g, &mut result)?;
            continue;
        }
        if g0.signum() * g1.signum() < 0.0 {
            let theta_star = bisect_root(
                &mut curve_residual,
                t0,
                t1,
                (tol * 1e-4).max(1e-13),
            )?;
            let rho = radius_at(theta_star)?;
            let env = Ray::new(theta_star)?.point(rho);
            let g = pair_residual(model, grid, env)?;
            record(env, g, &mut result)?;
        }
    }
    // endpoint exact zero not covered by the pair loop
    if let Some(&(_, env, g)) = samples.last() {
        if g == 0.0 {
            record(env, g, &mut result)?;
        }
    }

    Ok(result)
}
