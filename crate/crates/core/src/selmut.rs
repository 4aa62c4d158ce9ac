//! The selection-mutation model: renewal kernel, spectral radius and the
//! steady-state pipeline.
//!
//! The trait-age model's birth law couples all traits through a mutation
//! kernel, so the renewal step is a compact integral operator on newborn
//! trait distributions rather than a scalar. Its spectral radius plays the
//! role the characteristic function plays for the transport models: the
//! spectral bound at a frozen environment is the root in `lam` of
//! `r(M_lam) = 1`.

use crate::error::{Error, Result};
use crate::fixedpoint::{
    find_all_diagonal_crossings, CrossingSample, Diagnostics, SolveParams, SolvedProfile,
    SteadyStateResult,
};
use crate::levelset::{bracket_on_ray, trace_zero_set, Ray, SimplexPoint};
use crate::matrix::DenseMatrix;
use crate::model::{
    trapezoid_weights, Density2D, Environment, SelectionMutationModel, StructuredModel,
};
use crate::numerics::{Grid, GridFn};
use crate::spectral::{spectral_bound_of, SpectralResult};

/// Hard iteration cap for the kernel power iteration.
const POWER_MAX_ITER: usize = 100_000;

/// Discretized renewal operator `(M_lam v)(l) = int b(l, lhat) * inner(lhat) *
/// v(lhat) dlhat`, where `inner` is the discounted fertility integral over
/// the fertile ages `[lhat, a_m]`. Columns carry trapezoid quadrature
/// weights; the vector norm throughout is the weighted L1 norm.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    matrix: DenseMatrix,
    grid: Grid,
    weights: Vec<f64>,
    pub warnings: Vec<String>,
}

impl KernelMatrix {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Weighted L1 norm of a nodal vector.
    pub fn weighted_norm(&self, v: &[f64]) -> f64 {
        v.iter()
            .zip(&self.weights)
            .map(|(x, w)| w * x.abs())
            .sum()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.matrix.order()];
        self.matrix.matvec(v, &mut out);
        out
    }

    /// Operator norm on the weighted L1 space: the largest weighted column
    /// sum relative to the column's own weight.
    pub fn operator_norm(&self) -> f64 {
        let n = self.matrix.order();
        let mut worst = 0.0f64;
        for j in 0..n {
            if self.weights[j] == 0.0 {
                continue;
            }
            let mut col = 0.0;
            for i in 0..n {
                col += self.weights[i] * self.matrix.get(i, j).abs();
            }
            worst = worst.max(col / self.weights[j]);
        }
        worst
    }
}

fn as_selmut<'a>(
    model: &'a StructuredModel,
    op: &'static str,
) -> Result<&'a SelectionMutationModel> {
    match model {
        StructuredModel::SelectionMutation(m) => Ok(m),
        other => Err(Error::ModelUnsupported {
            op,
            model: other.kind_name(),
        }),
    }
}

/// Age-survival exponents for one trait: cumulative midpoint integral of
/// `mu(lhat, a) + lam` over age cells, plus the per-cell rates (for
/// midpoint evaluations inside cells).
fn age_decay(
    m: &SelectionMutationModel,
    grid: Grid,
    env: Environment,
    lhat: f64,
    lam: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = grid.n_cells();
    let h = grid.h();
    let mut cum = Vec::with_capacity(n + 1);
    let mut rates = Vec::with_capacity(n);
    cum.push(0.0);
    let mut acc = 0.0;
    for k in 0..n {
        let mid = 0.5 * (grid.node(k) + grid.node(k + 1));
        let rate = m.mu.eval(lhat, mid, env)? + lam;
        acc += h * rate;
        rates.push(rate);
        cum.push(acc);
    }
    Ok((cum, rates))
}

/// Assembles the renewal kernel matrix at a frozen environment and
/// discount `lam`. The inner age integral runs over `[lhat, a_m]` with the
/// midpoint rule (which keeps the discrete operator norm below the
/// continuum bound `sup beta / lam`); the outer trait integral uses
/// trapezoid weights folded into the columns.
pub fn kernel_assemble(
    model: &StructuredModel,
    grid: Grid,
    env: Environment,
    lam: f64,
) -> Result<KernelMatrix> {
    let m = as_selmut(model, "kernel_assemble")?;
    let n = grid.n_cells();
    let h = grid.h();
    let n_nodes = grid.n_nodes();
    let weights = trapezoid_weights(&grid);

    // inner(lhat_j) = int_{lhat_j}^{a_m} beta(lhat_j, a) e^{-int_0^a (mu+lam)} da
    let mut inner = Vec::with_capacity(n_nodes);
    for j in 0..n_nodes {
        let lhat = grid.node(j);
        let (cum, rates) = age_decay(m, grid, env, lhat, lam)?;
        let mut acc = 0.0;
        for k in j..n {
            let mid = 0.5 * (grid.node(k) + grid.node(k + 1));
            let exponent = -(cum[k] + 0.5 * h * rates[k]);
            acc += h * m.beta.eval(lhat, mid, env)? * exponent.clamp(-700.0, 700.0).exp();
        }
        inner.push(acc);
    }

    let mut matrix = DenseMatrix::zeros(n_nodes);
    for i in 0..n_nodes {
        let l = grid.node(i);
        for j in 0..n_nodes {
            let b = m.kernel.eval(l, grid.node(j))?;
            if b < 0.0 {
                return Err(Error::Domain {
                    context: format!("mutation kernel is negative at ({l}, {})", grid.node(j)),
                    at: l,
                });
            }
            matrix.set(i, j, b * inner[j] * weights[j]);
        }
    }

    // strict-positivity report: zero rows or interior zero columns make the
    // renewal operator reducible; the last column is structurally zero
    // (empty fertile age window) and is not reported
    let mut warnings = Vec::new();
    let scale = matrix.infinity_norm();
    if scale > 0.0 {
        let tol = 1e-14 * scale;
        for i in 0..n_nodes {
            if (0..n_nodes).all(|j| matrix.get(i, j) <= tol) {
                warnings.push(format!(
                    "kernel row {i} (trait {}) is zero: operator is not strictly positive",
                    grid.node(i)
                ));
                break;
            }
        }
        for j in 0..n_nodes.saturating_sub(1) {
            if (0..n_nodes).all(|i| matrix.get(i, j) <= tol) {
                warnings.push(format!(
                    "kernel column {j} (parent trait {}) is zero: operator is not strictly positive",
                    grid.node(j)
                ));
                break;
            }
        }
    }

    Ok(KernelMatrix {
        matrix,
        grid,
        weights,
        warnings,
    })
}

/// Spectral radius of a kernel matrix with its normalized eigenfunction.
#[derive(Debug, Clone)]
pub struct KernelRadius {
    pub radius: f64,
    pub eigen: GridFn,
    /// False when the iteration collapsed toward zero (quasi-nilpotent
    /// behavior); the radius is then reported as zero rather than an error.
    pub strictly_positive: bool,
    pub iterations: usize,
}

/// Weighted-L1-normalized averaged power iteration seeded with the
/// constant function.
pub fn kernel_spectral_radius(k: &KernelMatrix, tol: f64) -> Result<KernelRadius> {
    let n = k.matrix.order();
    let flat = vec![1.0; n];
    let mass = k.weighted_norm(&flat);
    let mut x: Vec<f64> = flat.iter().map(|v| v / mass).collect();
    let floor = f64::EPSILON.sqrt() * k.matrix.infinity_norm();
    let mut prev_radius = f64::NAN;
    for iter in 1..=POWER_MAX_ITER {
        let y = k.apply(&x);
        let ny = k.weighted_norm(&y);
        if !ny.is_finite() {
            return Err(Error::NonFinite {
                context: "kernel power iteration produced a non-finite vector".into(),
            });
        }
        if ny <= floor {
            return Ok(KernelRadius {
                radius: 0.0,
                eigen: GridFn::new(k.grid, x)?,
                strictly_positive: false,
                iterations: iter,
            });
        }
        let residual: f64 = y
            .iter()
            .zip(&x)
            .zip(&k.weights)
            .map(|((yi, xi), w)| w * (yi - ny * xi).abs())
            .sum();
        if residual <= tol * (1.0 + ny) && (ny - prev_radius).abs() <= tol * (1.0 + ny) {
            let strictly_positive = x.iter().all(|&v| v > 1e-12 / n as f64);
            return Ok(KernelRadius {
                radius: ny,
                eigen: GridFn::new(k.grid, x)?,
                strictly_positive,
                iterations: iter,
            });
        }
        prev_radius = ny;
        let mut next: Vec<f64> = x
            .iter()
            .zip(&y)
            .map(|(xi, yi)| 0.5 * (xi + yi / ny))
            .collect();
        let nn = k.weighted_norm(&next);
        for v in &mut next {
            *v /= nn;
        }
        x = next;
    }
    Err(Error::NoConvergence {
        max_iter: POWER_MAX_ITER,
        estimate: prev_radius,
        residual: f64::NAN,
    })
}

/// Spectral bound of the frozen-environment trait-age generator: the root
/// in `lam` of `r(M_lam) = 1`.
pub fn sm_spectral_bound(
    model: &StructuredModel,
    grid: Grid,
    env: Environment,
    tol: f64,
) -> Result<SpectralResult> {
    as_selmut(model, "sm_spectral_bound")?;
    spectral_bound_of(
        |lam| {
            let k = kernel_assemble(model, grid, env, lam)?;
            Ok(kernel_spectral_radius(&k, (tol * 1e-2).max(1e-13))?.radius - 1.0)
        },
        tol,
    )
}

/// Steady trait-age density at discount `lam`: the kernel eigenfunction
/// extended over ages by the survival factor, normalized to unit mass.
pub fn sm_eigen_density(
    model: &StructuredModel,
    grid: Grid,
    env: Environment,
    lam: f64,
) -> Result<Density2D> {
    let m = as_selmut(model, "sm_eigen_density")?;
    let k = kernel_assemble(model, grid, env, lam)?;
    let radius = kernel_spectral_radius(&k, 1e-12)?;
    let v = radius.eigen;
    let n_nodes = grid.n_nodes();
    let mut values = vec![0.0; n_nodes * n_nodes];
    for i in 0..n_nodes {
        let lhat = grid.node(i);
        let (cum, _) = age_decay(m, grid, env, lhat, lam)?;
        for a_idx in 0..n_nodes {
            values[i * n_nodes + a_idx] =
                v.values()[i] * (-cum[a_idx]).clamp(-700.0, 700.0).exp();
        }
    }
    let density = Density2D::new(grid, grid, values)?;
    let mass = density.total_mass();
    if !(mass > 0.0) {
        return Err(Error::NonFinite {
            context: format!("eigen density mass {mass} is not positive"),
        });
    }
    Ok(density.scale(1.0 / mass))
}

/// Environment of a trait-age density: `e1` is the mass of individuals
/// younger than their maturation age (`a < l`), `e2` the mass at or beyond
/// it. The diagonal crosses the tensor grid exactly at shared nodes, so
/// each row splits by trapezoid sums on the two node ranges.
pub fn environment_sm(model: &StructuredModel, density: &Density2D) -> Result<Environment> {
    as_selmut(model, "environment_sm")?;
    let lgrid = density.lgrid();
    let agrid = density.agrid();
    if lgrid != agrid {
        return Err(Error::BadGrid(
            "trait and age grids must coincide for the diagonal split".into(),
        ));
    }
    let wl = trapezoid_weights(&lgrid);
    let n_nodes = agrid.n_nodes();
    let h = agrid.h();
    let mut young = 0.0;
    let mut adult = 0.0;
    for (i, &wli) in wl.iter().enumerate() {
        // trapezoid over [0, l_i] (nodes 0..=i) and [l_i, a_m] (nodes i..=n)
        let mut below = 0.0;
        for k in 0..=i {
            let w = if k == 0 || k == i { 0.5 * h } else { h };
            below += w * density.value(i, k);
        }
        if i == 0 {
            below = 0.0;
        }
        let mut above = 0.0;
        for k in i..n_nodes {
            let w = if k == i || k == n_nodes - 1 { 0.5 * h } else { h };
            above += w * density.value(i, k);
        }
        if i == n_nodes - 1 {
            above = 0.0;
        }
        young += wli * below;
        adult += wli * above;
    }
    Ok(Environment::new(young, adult))
}

/// Full steady-state pipeline for the selection-mutation model: traces the
/// zero set of `r(M_0) - 1`, runs the diagonal-crossing search with the
/// density environment map, and reconstructs the steady density.
pub fn solve_selmut(model: &StructuredModel, params: &SolveParams) -> Result<SteadyStateResult> {
    as_selmut(model, "solve_selmut")?;
    let grid = model.grid(params.n_cells)?;
    let radius_tol = 1e-12;

    let sigma = |env: Environment| -> Result<f64> {
        let k = kernel_assemble(model, grid, env, 0.0)?;
        Ok(kernel_spectral_radius(&k, radius_tol)?.radius - 1.0)
    };

    // hypothesis checks through the actual spectral bound
    let b0 = sm_spectral_bound(model, grid, Environment::origin(), params.tol)?;
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
        let ba = sm_spectral_bound(model, grid, axis_env, params.tol)?;
        if !(ba.bound < 0.0) {
            return Err(Error::HypothesisViolated {
                detail: format!(
                    "spectral bound at {axis_env} is {}; it must be negative at radius {}",
                    ba.bound, params.r_max
                ),
            });
        }
    }

    let curve = trace_zero_set(&sigma, params.n_rays, params.r_max, params.tol)?;
    let mut warnings: Vec<String> = Vec::new();
    let map_at_env = |env: Environment| -> Result<f64> {
        let density = sm_eigen_density(model, grid, env, 0.0)?;
        let e = environment_sm(model, &density)?;
        Ok(SimplexPoint::from_environment(e)?.t())
    };
    let mut samples = Vec::with_capacity(curve.samples().len());
    for s in curve.samples() {
        samples.push(CrossingSample {
            t: SimplexPoint::from_environment(s.point)?.t(),
            g: map_at_env(s.point)?,
        });
    }
    let refine = |t: f64| -> Result<f64> {
        let theta = SimplexPoint::new(t)?.theta();
        let rho = bracket_on_ray(&sigma, theta, params.r_max, radius_tol)?.radius;
        map_at_env(Ray::new(theta)?.point(rho))
    };
    let crossings = find_all_diagonal_crossings(&samples, refine, (params.tol * 1e-2).max(1e-12))?;
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
    let rho = bracket_on_ray(&sigma, theta, params.r_max, radius_tol)?.radius;
    let env = Ray::new(theta)?.point(rho);

    let density = sm_eigen_density(model, grid, env, 0.0)?;
    let e = environment_sm(model, &density)?;
    let sine = cross_sine(env, e);
    if sine > 1e-6 {
        return Err(Error::NotParallel { sine });
    }
    let scale = env.l1_norm() / e.l1_norm();
    let kernel = kernel_assemble(model, grid, env, 0.0)?;
    warnings.extend(kernel.warnings.iter().cloned());

    let scaled = density.scale(scale);
    let mut result = SteadyStateResult {
        environment: env,
        scale,
        profile: SolvedProfile::Square(scaled),
        diagnostics: Diagnostics::default(),
        warnings,
    };
    result.diagnostics = crate::fixedpoint::verify_steady_state(model, &result)?;
    Ok(result)
}

fn cross_sine(a: Environment, b: Environment) -> f64 {
    let na = (a.e1 * a.e1 + a.e2 * a.e2).sqrt();
    let nb = (b.e1 * b.e1 + b.e2 * b.e2).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (a.e1 * b.e2 - a.e2 * b.e1).abs() / (na * nb)
}
