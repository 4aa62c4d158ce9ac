//! Spectral bounds of the frozen-environment generators.
//!
//! The workhorse is the characteristic function `K(lam)`: the expected
//! lifetime offspring count discounted at rate `lam`. It is strictly
//! decreasing, equals the net reproduction number at `lam = 0`, and its
//! unique root is the spectral bound of the transport generator. A
//! first-order upwind matrix discretization serves as an independent
//! oracle, and the generator's resolvent is available in closed form for
//! consistency and continuity diagnostics.

use crate::error::{Error, Result};
use crate::matrix::{rank_multiplicity, DenseMatrix};
use crate::model::{Environment, RenewalView, StructuredModel, GAMMA_FLOOR};
use crate::numerics::{bisect_root, cumulative_integral, integrate_range, Grid, GridFn};
use serde::{Deserialize, Serialize};

/// Largest magnitude the bracket expansion for the spectral bound will try.
const LAMBDA_CAP: f64 = 1e3;

/// Exponent clamp keeping survival factors finite during bracket expansion.
const EXP_CLAMP: f64 = 700.0;

/// How the spectral bound was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectralMethod {
    Characteristic,
    Matrix,
}

/// A computed spectral bound with its convergence record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralResult {
    pub bound: f64,
    pub residual: f64,
    pub iterations: usize,
    pub method: SpectralMethod,
}

/// The map `lam -> K(lam)` at a frozen environment.
pub struct CharacteristicFn<'a> {
    view: RenewalView<'a>,
    grid: Grid,
    env: Environment,
}

impl<'a> CharacteristicFn<'a> {
    /// Builds the characteristic function for a transport model with
    /// boundary renewal (juvenile-adult or early-human).
    pub fn new(model: &'a StructuredModel, grid: Grid, env: Environment) -> Result<Self> {
        match model {
            StructuredModel::JuvenileAdult(_) | StructuredModel::EarlyHuman(_) => {
                Ok(CharacteristicFn {
                    view: model.renewal()?,
                    grid,
                    env,
                })
            }
            other => Err(Error::ModelUnsupported {
                op: "characteristic function",
                model: other.kind_name(),
            }),
        }
    }

    pub fn value(&self, lam: f64) -> Result<f64> {
        renewal_integral(&self.view, self.grid, self.env, lam)
    }
}

/// Survival factor `F(s) = exp(-int_0^s (lam + mu(z)) / gamma(z) dz)` on the
/// nodes of `grid`. The rate integral is accumulated cell by cell with the
/// midpoint rule, which is exact for rates that are constant between nodes
/// (the aligned grids place every rate jump on a node).
pub fn survival(model: &StructuredModel, grid: Grid, env: Environment, lam: f64) -> Result<GridFn> {
    let view = model.renewal()?;
    survival_view(&view, grid, env, lam)
}

pub(crate) fn survival_view(
    view: &RenewalView<'_>,
    grid: Grid,
    env: Environment,
    lam: f64,
) -> Result<GridFn> {
    let n = grid.n_cells();
    let h = grid.h();
    let mut values = Vec::with_capacity(n + 1);
    values.push(1.0);
    let mut acc = 0.0;
    for i in 0..n {
        let mid = 0.5 * (grid.node(i) + grid.node(i + 1));
        let g = view.gamma(mid, env)?;
        if !(g > 0.0) {
            return Err(Error::Domain {
                context: format!("growth rate is {g} at s = {mid}; must be positive"),
                at: mid,
            });
        }
        let mu = view.mortality(mid, env)?;
        acc += h * (lam + mu) / g;
        values.push((-acc).clamp(-EXP_CLAMP, EXP_CLAMP).exp());
    }
    GridFn::new(grid, values)
}

/// Discounted offspring integral `int_fertile (beta/gamma) * F` over the
/// fertile subgrid. Integration never straddles the fertility jump: the
/// fertile window ends are grid nodes, and composite Simpson runs on the
/// subrange only.
pub(crate) fn renewal_integral(
    view: &RenewalView<'_>,
    grid: Grid,
    env: Environment,
    lam: f64,
) -> Result<f64> {
    let f = survival_view(view, grid, env, lam)?;
    let (i_lo, i_hi) = view.fertile_indices(&grid)?;
    let mut integrand = Vec::with_capacity(grid.n_nodes());
    for (i, s) in grid.nodes().enumerate() {
        if i < i_lo || i > i_hi {
            integrand.push(0.0);
            continue;
        }
        let g = view.gamma(s, env)?;
        if !(g > 0.0) {
            return Err(Error::Domain {
                context: format!("growth rate is {g} at s = {s}; must be positive"),
                at: s,
            });
        }
        integrand.push(view.beta(s, env)? / g * f.values()[i]);
    }
    let gf = GridFn::new(grid, integrand)?;
    Ok(integrate_range(&gf, i_lo, i_hi))
}

/// `K(lam)` for the juvenile-adult and early-human models.
pub fn characteristic_value(
    model: &StructuredModel,
    grid: Grid,
    env: Environment,
    lam: f64,
) -> Result<f64> {
    CharacteristicFn::new(model, grid, env)?.value(lam)
}

/// Unique root of `K(lam) = 1`, located by doubling the bracket `[-1, 1]`
/// until the sign changes and then bisecting.
pub fn spectral_bound(
    model: &StructuredModel,
    grid: Grid,
    env: Environment,
    tol: f64,
) -> Result<SpectralResult> {
    let k = CharacteristicFn::new(model, grid, env)?;
    spectral_bound_of(|lam| k.value(lam).map(|v| v - 1.0), tol)
}

/// Root of a strictly decreasing `f` (here `K - 1` or `r(M_lam) - 1`) with
/// the shared bracket-expansion policy.
pub(crate) fn spectral_bound_of(
    mut f: impl FnMut(f64) -> Result<f64>,
    tol: f64,
) -> Result<SpectralResult> {
    let mut evals = 0usize;
    let mut eval = |lam: f64, evals: &mut usize| -> Result<f64> {
        *evals += 1;
        f(lam)
    };
    let mut lo = -1.0;
    let mut hi = 1.0;
    let mut f_lo = eval(lo, &mut evals)?;
    let mut f_hi = eval(hi, &mut evals)?;
    // f is decreasing: expand downward while f(lo) < 0, upward while f(hi) > 0
    while f_lo < 0.0 && lo > -LAMBDA_CAP {
        lo *= 2.0;
        f_lo = eval(lo, &mut evals)?;
    }
    while f_hi > 0.0 && hi < LAMBDA_CAP {
        hi *= 2.0;
        f_hi = eval(hi, &mut evals)?;
    }
    if f_lo < 0.0 || f_hi > 0.0 {
        return Err(Error::NoBracket {
            lo,
            hi,
            f_lo,
            f_hi,
        });
    }
    let bound = bisect_root(|lam| eval(lam, &mut evals), lo, hi, tol)?;
    let residual = eval(bound, &mut evals)?.abs();
    Ok(SpectralResult {
        bound,
        residual,
        iterations: evals,
        method: SpectralMethod::Characteristic,
    })
}

/// Normalized positive eigenvector of the frozen-environment generator at
/// eigenvalue `lam`: `phi(s) = (gamma(0)/gamma(s)) * F(s)`, scaled to unit
/// integral.
pub fn eigen_profile(
    model: &StructuredModel,
    grid: Grid,
    env: Environment,
    lam: f64,
) -> Result<GridFn> {
    let view = model.renewal()?;
    let f = survival_view(&view, grid, env, lam)?;
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
    let phi = GridFn::new(grid, values)?;
    let mass = crate::numerics::integrate(&phi);
    if !(mass > 0.0) {
        return Err(Error::NonFinite {
            context: format!("eigen profile mass {mass} is not positive"),
        });
    }
    Ok(phi.map(|v| v / mass))
}

/// First-order upwind discretization of the frozen-environment generator,
/// with the birth boundary condition folded into the first row as a renewal
/// quadrature. The result is Metzler with nonnegative renewal couplings.
pub fn assemble_generator_matrix(
    model: &StructuredModel,
    grid: Grid,
    env: Environment,
) -> Result<DenseMatrix> {
    let view = model.renewal()?;
    let n = grid.n_cells();
    let h = grid.h();
    let mut m = DenseMatrix::zeros(n + 1);

    // transport rows: (gamma_{i-1} p_{i-1} - gamma_i p_i)/h - mu_i p_i
    let mut gammas = Vec::with_capacity(n + 1);
    for s in grid.nodes() {
        let g = view.gamma(s, env)?;
        if !(g > GAMMA_FLOOR) {
            return Err(Error::Domain {
                context: format!("growth rate is {g} at s = {s}; must exceed {GAMMA_FLOOR}"),
                at: s,
            });
        }
        gammas.push(g);
    }
    for i in 1..=n {
        let mu = view.mortality(grid.node(i), env)?;
        m.set(i, i - 1, gammas[i - 1] / h);
        m.set(i, i, -gammas[i] / h - mu);
    }

    // boundary row: (renewal quadrature - gamma_0 p_0)/h - mu_0 p_0
    let (i_lo, i_hi) = view.fertile_indices(&grid)?;
    for j in i_lo..=i_hi {
        let w = if j == i_lo || j == i_hi { 0.5 * h } else { h };
        let beta = view.beta(grid.node(j), env)?;
        m.add_to(0, j, w * beta / h);
    }
    let mu0 = view.mortality(grid.node(0), env)?;
    m.add_to(0, 0, -gammas[0] / h - mu0);
    Ok(m)
}

/// Applies the closed-form resolvent `(lam - A)^{-1}` of the juvenile-adult
/// generator to `f`: with `F` the survival factor, `H = F/gamma`,
/// `G(s) = int_0^s f/F` and `h = beta/gamma`, the result is
/// `(c + G(s)) * H(s)` where `c = int hFG / (1 - int hF)`.
pub fn resolvent_apply(
    model: &StructuredModel,
    grid: Grid,
    env: Environment,
    lam: f64,
    f: &GridFn,
) -> Result<GridFn> {
    if !matches!(model, StructuredModel::JuvenileAdult(_)) {
        return Err(Error::ModelUnsupported {
            op: "resolvent",
            model: model.kind_name(),
        });
    }
    let view = model.renewal()?;
    let surv = survival_view(&view, grid, env, lam)?;
    let n_nodes = grid.n_nodes();

    let mut gammas = Vec::with_capacity(n_nodes);
    for s in grid.nodes() {
        let g = view.gamma(s, env)?;
        if !(g > 0.0) {
            return Err(Error::Domain {
                context: format!("growth rate is {g} at s = {s}; must be positive"),
                at: s,
            });
        }
        gammas.push(g);
    }

    // G = cumulative trapezoid of f / F
    let ratio = f.zip_map(&surv, |fv, sv| fv / sv);
    let g_cum = cumulative_integral(&ratio);

    // hF and hFG on the fertile subgrid
    let (i_lo, i_hi) = view.fertile_indices(&grid)?;
    let mut hf = vec![0.0; n_nodes];
    let mut hfg = vec![0.0; n_nodes];
    for i in i_lo..=i_hi {
        let s = grid.node(i);
        let b = view.beta(s, env)?;
        hf[i] = b / gammas[i] * surv.values()[i];
        hfg[i] = hf[i] * g_cum.values()[i];
    }
    let hf = GridFn::new(grid, hf)?;
    let hfg = GridFn::new(grid, hfg)?;
    let khat = integrate_range(&hf, i_lo, i_hi);
    if khat >= 1.0 {
        return Err(Error::ResolventConditionViolated { integral: khat });
    }
    let c = integrate_range(&hfg, i_lo, i_hi) / (1.0 - khat);

    let values = (0..n_nodes)
        .map(|i| (c + g_cum.values()[i]) * surv.values()[i] / gammas[i])
        .collect();
    GridFn::new(grid, values)
}

/// Probe profiles for the resolvent diagnostics: one constant and
/// `count - 1` hat functions, each of unit discrete L1 norm.
pub fn probe_profiles(grid: Grid, count: usize) -> Vec<GridFn> {
    let upper = grid.node(grid.n_cells());
    let mut probes = Vec::with_capacity(count.max(1));
    let flat = GridFn::sample(grid, |_| 1.0);
    let mass = flat.l1_norm();
    probes.push(flat.map(|v| v / mass));
    for j in 1..count {
        let center = upper * j as f64 / count as f64;
        let width = upper / count as f64;
        let hat = GridFn::sample(grid, |s| (1.0 - (s - center).abs() / width).max(0.0));
        let mass = hat.l1_norm();
        if mass > 0.0 {
            probes.push(hat.map(|v| v / mass));
        }
    }
    probes
}

/// Probe-based lower bound on the L1 operator distance between the
/// resolvents at two environments (same `lam`). A continuity diagnostic,
/// not a certified operator norm.
pub fn resolvent_distance(
    model: &StructuredModel,
    grid: Grid,
    env1: Environment,
    env2: Environment,
    lam: f64,
    probe_count: usize,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for probe in probe_profiles(grid, probe_count.max(1)) {
        let r1 = resolvent_apply(model, grid, env1, lam, &probe)?;
        let r2 = resolvent_apply(model, grid, env2, lam, &probe)?;
        worst = worst.max(r1.zip_map(&r2, |a, b| a - b).l1_norm());
    }
    Ok(worst)
}

/// Geometric and algebraic multiplicity of `lam` as an eigenvalue of the
/// discretized generator, by numerical rank of shifted powers. `lam` must
/// approximate an eigenvalue of the matrix itself (grid-dependent), not the
/// continuum bound.
pub fn multiplicity_diagnostic(
    model: &StructuredModel,
    grid: Grid,
    env: Environment,
    lam: f64,
    rank_tol: f64,
) -> Result<(usize, usize)> {
    let m = assemble_generator_matrix(model, grid, env)?;
    Ok(rank_multiplicity(&m, lam, rank_tol))
}
