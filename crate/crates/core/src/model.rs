//! Model data: environments, rate fields and the four structured-population
//! model variants.
//!
//! An [`Environment`] is the pair of interaction variables the nonlinear
//! problem closes over (juveniles/adults, consumers/resource, senescent/total
//! population, or the two mass components of the selection-mutation model).
//! Rate fields are evaluable coefficients `(structure variable, environment)
//! -> value`, usually built from parsed [`RateExpression`]s.

use crate::error::{Error, Result};
use crate::expr::{CompiledRate, RateExpression};
use crate::numerics::{integrate, integrate_range, Grid, GridFn};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Lower bound enforced on growth rates: transport speeds must stay away
/// from zero for the characteristic integrals to make sense.
pub const GAMMA_FLOOR: f64 = 1e-8;

/// Interaction variables `(e1, e2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub e1: f64,
    pub e2: f64,
}

impl Environment {
    pub fn new(e1: f64, e2: f64) -> Self {
        Environment { e1, e2 }
    }

    pub fn origin() -> Self {
        Environment { e1: 0.0, e2: 0.0 }
    }

    /// Component-sum norm (the natural norm on the nonnegative quadrant).
    pub fn l1_norm(&self) -> f64 {
        self.e1.abs() + self.e2.abs()
    }

    pub fn scale(&self, c: f64) -> Self {
        Environment {
            e1: c * self.e1,
            e2: c * self.e2,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.e1.is_finite() && self.e2.is_finite()
    }

    /// Polar angle within the closed quadrant, in `[0, pi/2]` for
    /// nonnegative components.
    pub fn theta(&self) -> f64 {
        self.e2.atan2(self.e1)
    }
}

impl fmt::Display for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.e1, self.e2)
    }
}

// ---------------------------------------------------------------------------
// rate fields

type RateClosure = dyn Fn(f64, Environment) -> Result<f64> + Send + Sync;
type Rate2Closure = dyn Fn(f64, f64, Environment) -> Result<f64> + Send + Sync;
type ScalarClosure = dyn Fn(f64) -> Result<f64> + Send + Sync;

/// Coefficient of one structure variable and the environment, e.g. a
/// fertility or mortality rate.
#[derive(Clone)]
pub struct RateField {
    name: Arc<str>,
    eval: Arc<RateClosure>,
}

impl RateField {
    pub fn new(
        name: &str,
        f: impl Fn(f64, Environment) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        RateField {
            name: name.into(),
            eval: Arc::new(f),
        }
    }

    pub fn constant(name: &str, value: f64) -> Self {
        RateField::new(name, move |_, _| Ok(value))
    }

    /// Compiles an expression against a model-variant slot layout. The first
    /// two slots are the structure variable under both of its accepted names;
    /// the rest are `E1`, `E2` and their model-specific aliases.
    pub fn from_expr(name: &str, expr: &RateExpression, vars: &VariableLayout) -> Result<Self> {
        let compiled: CompiledRate = expr.compile(&vars.names)?;
        let n = vars.names.len();
        let owned_name: Arc<str> = name.into();
        let err_name = owned_name.clone();
        let eval = move |s: f64, env: Environment| -> Result<f64> {
            let mut slots = [0.0; 6];
            slots[..2].fill(s);
            slots[2] = env.e1;
            slots[3] = env.e2;
            slots[4] = env.e1;
            slots[5] = env.e2;
            compiled.eval(&slots[..n]).map_err(|e| annotate(e, &err_name, s))
        };
        Ok(RateField {
            name: owned_name,
            eval: Arc::new(eval),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, s: f64, env: Environment) -> Result<f64> {
        (self.eval)(s, env)
    }
}

impl fmt::Debug for RateField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RateField({})", self.name)
    }
}

/// Coefficient of two structure variables and the environment (used by the
/// selection-mutation model, where rates depend on the inherited trait and
/// on age).
#[derive(Clone)]
pub struct RateField2 {
    name: Arc<str>,
    eval: Arc<Rate2Closure>,
}

impl RateField2 {
    pub fn new(
        name: &str,
        f: impl Fn(f64, f64, Environment) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        RateField2 {
            name: name.into(),
            eval: Arc::new(f),
        }
    }

    pub fn constant(name: &str, value: f64) -> Self {
        RateField2::new(name, move |_, _, _| Ok(value))
    }

    /// Slot layout: `lhat`, `a`, then `E1`, `E2`, `P`, `Q`.
    pub fn from_expr(name: &str, expr: &RateExpression) -> Result<Self> {
        let compiled = expr.compile(&["lhat", "a", "E1", "E2", "P", "Q"])?;
        let owned_name: Arc<str> = name.into();
        let err_name = owned_name.clone();
        let eval = move |lhat: f64, a: f64, env: Environment| -> Result<f64> {
            let slots = [lhat, a, env.e1, env.e2, env.e1, env.e2];
            compiled.eval(&slots).map_err(|e| annotate(e, &err_name, a))
        };
        Ok(RateField2 {
            name: owned_name,
            eval: Arc::new(eval),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, lhat: f64, a: f64, env: Environment) -> Result<f64> {
        (self.eval)(lhat, a, env)
    }
}

impl fmt::Debug for RateField2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RateField2({})", self.name)
    }
}

/// Mutation kernel `b(l, lhat)`: density (in `l`) of offspring trait given
/// the parent trait.
#[derive(Clone)]
pub struct Kernel2 {
    name: Arc<str>,
    eval: Arc<Rate2Closure>,
}

impl Kernel2 {
    pub fn new(
        name: &str,
        f: impl Fn(f64, f64) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        Kernel2 {
            name: name.into(),
            eval: Arc::new(move |l, lhat, _| f(l, lhat)),
        }
    }

    pub fn constant(name: &str, value: f64) -> Self {
        Kernel2::new(name, move |_, _| Ok(value))
    }

    pub fn from_expr(name: &str, expr: &RateExpression) -> Result<Self> {
        let compiled = expr.compile(&["l", "lhat"])?;
        let owned_name: Arc<str> = name.into();
        let err_name = owned_name.clone();
        let eval = move |l: f64, lhat: f64, _env: Environment| -> Result<f64> {
            compiled.eval(&[l, lhat]).map_err(|e| annotate(e, &err_name, l))
        };
        Ok(Kernel2 {
            name: owned_name,
            eval: Arc::new(eval),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, l: f64, lhat: f64) -> Result<f64> {
        (self.eval)(l, lhat, Environment::origin())
    }
}

impl fmt::Debug for Kernel2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Kernel2({})", self.name)
    }
}

/// Map of a single scalar (the resource growth law `f(Q)`).
#[derive(Clone)]
pub struct ScalarMap {
    name: Arc<str>,
    eval: Arc<ScalarClosure>,
}

impl ScalarMap {
    pub fn new(name: &str, f: impl Fn(f64) -> Result<f64> + Send + Sync + 'static) -> Self {
        ScalarMap {
            name: name.into(),
            eval: Arc::new(f),
        }
    }

    pub fn from_expr(name: &str, expr: &RateExpression) -> Result<Self> {
        let compiled = expr.compile(&["Q"])?;
        let owned_name: Arc<str> = name.into();
        let err_name = owned_name.clone();
        let eval = move |q: f64| -> Result<f64> {
            compiled.eval(&[q]).map_err(|e| annotate(e, &err_name, q))
        };
        Ok(ScalarMap {
            name: owned_name,
            eval: Arc::new(eval),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, q: f64) -> Result<f64> {
        (self.eval)(q)
    }
}

impl fmt::Debug for ScalarMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarMap({})", self.name)
    }
}

fn annotate(err: Error, field: &str, at: f64) -> Error {
    match err {
        Error::Domain { context, .. } => Error::Domain {
            context: format!("{field}: {context}"),
            at,
        },
        other => other,
    }
}

/// Variable names a rate expression may use for a given model variant.
pub struct VariableLayout {
    names: [&'static str; 6],
}

impl VariableLayout {
    /// Juvenile-adult: structure variable `s` (alias `a`), environment
    /// `E1`/`E2` with aliases `J`/`A`.
    pub fn juvenile_adult() -> Self {
        VariableLayout {
            names: ["s", "a", "E1", "E2", "J", "A"],
        }
    }

    /// Consumer-resource: structure variable `s` (alias `a`), aliases `P`/`Q`.
    pub fn consumer_resource() -> Self {
        VariableLayout {
            names: ["s", "a", "E1", "E2", "P", "Q"],
        }
    }

    /// Early-human: structure variable `a` (alias `s`), aliases `S`/`T`.
    pub fn early_human() -> Self {
        VariableLayout {
            names: ["a", "s", "E1", "E2", "S", "T"],
        }
    }
}

// ---------------------------------------------------------------------------
// model variants

/// Size-structured model with juvenile sizes `[0, l)` and adult sizes
/// `[l, m]`; the environment is `(J, A)` = (juvenile mass, adult mass).
#[derive(Debug, Clone)]
pub struct JuvenileAdultModel {
    pub l: f64,
    pub m: f64,
    pub beta: RateField,
    pub mu: RateField,
    pub gamma: RateField,
}

impl JuvenileAdultModel {
    pub fn new(l: f64, m: f64, beta: RateField, mu: RateField, gamma: RateField) -> Result<Self> {
        if !(l > 0.0 && l < m && m.is_finite()) {
            return Err(Error::Config(format!(
                "juvenile-adult structure requires 0 < l < m, got l = {l}, m = {m}"
            )));
        }
        Ok(JuvenileAdultModel {
            l,
            m,
            beta,
            mu,
            gamma,
        })
    }
}

/// Size-structured consumer coupled to an unstructured resource `Q`; the
/// environment is `(P, Q)` with `P` the total consumer mass. Solved by the
/// scalar route only: the full operator family does not generate a positive
/// semigroup, so the spectral machinery does not apply.
#[derive(Debug, Clone)]
pub struct ConsumerResourceModel {
    pub m: f64,
    pub beta: RateField,
    pub mu: RateField,
    pub gamma: RateField,
    pub feeding: RateField,
    pub resource_growth: ScalarMap,
}

impl ConsumerResourceModel {
    pub fn new(
        m: f64,
        beta: RateField,
        mu: RateField,
        gamma: RateField,
        feeding: RateField,
        resource_growth: ScalarMap,
    ) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Config(format!(
                "consumer-resource structure requires m > 0, got {m}"
            )));
        }
        Ok(ConsumerResourceModel {
            m,
            beta,
            mu,
            gamma,
            feeding,
            resource_growth,
        })
    }
}

/// Age-structured model with fertile window `[a_j, a_r]` and senescent ages
/// beyond `a_r`; the environment is `(S, T)` = (senescent mass, total mass)
/// and the mortality at age `a` is `f(a) + eta(a) T + mu(a) S`. Ageing speed
/// is identically one.
#[derive(Debug, Clone)]
pub struct EarlyHumanModel {
    pub a_j: f64,
    pub a_r: f64,
    pub a_max: f64,
    pub beta: RateField,
    pub f_nat: RateField,
    pub eta: RateField,
    pub mu_sen: RateField,
}

impl EarlyHumanModel {
    pub fn new(
        a_j: f64,
        a_r: f64,
        a_max: f64,
        beta: RateField,
        f_nat: RateField,
        eta: RateField,
        mu_sen: RateField,
    ) -> Result<Self> {
        if !(a_j > 0.0 && a_j < a_r && a_r < a_max && a_max.is_finite()) {
            return Err(Error::Config(format!(
                "early-human structure requires 0 < a_j < a_r < a_max, got {a_j}, {a_r}, {a_max}"
            )));
        }
        Ok(EarlyHumanModel {
            a_j,
            a_r,
            a_max,
            beta,
            f_nat,
            eta,
            mu_sen,
        })
    }

    /// Total mortality at age `a` under environment `(S, T)`.
    pub fn mortality(&self, a: f64, env: Environment) -> Result<f64> {
        Ok(self.f_nat.eval(a, env)?
            + self.eta.eval(a, env)? * env.e2
            + self.mu_sen.eval(a, env)? * env.e1)
    }
}

/// Trait-and-age structured model: density `u(l, a)` over inherited trait
/// `l` and age `a`, both in `[0, a_m]`. The environment `(P, Q)` splits the
/// total mass across the diagonal `a = l`.
#[derive(Debug, Clone)]
pub struct SelectionMutationModel {
    pub a_m: f64,
    pub beta: RateField2,
    pub mu: RateField2,
    pub kernel: Kernel2,
}

impl SelectionMutationModel {
    pub fn new(a_m: f64, beta: RateField2, mu: RateField2, kernel: Kernel2) -> Result<Self> {
        if !(a_m > 0.0 && a_m.is_finite()) {
            return Err(Error::Config(format!(
                "selection-mutation structure requires a_m > 0, got {a_m}"
            )));
        }
        Ok(SelectionMutationModel {
            a_m,
            beta,
            mu,
            kernel,
        })
    }
}

/// Any of the supported model variants.
#[derive(Debug, Clone)]
pub enum StructuredModel {
    JuvenileAdult(JuvenileAdultModel),
    ConsumerResource(ConsumerResourceModel),
    EarlyHuman(EarlyHumanModel),
    SelectionMutation(SelectionMutationModel),
}

impl StructuredModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            StructuredModel::JuvenileAdult(_) => "juvenile-adult",
            StructuredModel::ConsumerResource(_) => "consumer-resource",
            StructuredModel::EarlyHuman(_) => "early-human",
            StructuredModel::SelectionMutation(_) => "selection-mutation",
        }
    }

    /// Upper end of the structure domain (the lower end is always zero).
    pub fn domain_upper(&self) -> f64 {
        match self {
            StructuredModel::JuvenileAdult(m) => m.m,
            StructuredModel::ConsumerResource(m) => m.m,
            StructuredModel::EarlyHuman(m) => m.a_max,
            StructuredModel::SelectionMutation(m) => m.a_m,
        }
    }

    /// Interior structural break points that must land on grid nodes.
    pub fn break_points(&self) -> Vec<f64> {
        match self {
            StructuredModel::JuvenileAdult(m) => vec![m.l],
            StructuredModel::ConsumerResource(_) => vec![],
            StructuredModel::EarlyHuman(m) => vec![m.a_j, m.a_r],
            StructuredModel::SelectionMutation(_) => vec![],
        }
    }

    /// Builds the computation grid, rounding the cell count up until every
    /// break point lands on an even node index (so composite Simpson splits
    /// exactly at the breaks) and the total count is even.
    pub fn grid(&self, n_request: usize) -> Result<Grid> {
        aligned_grid(self.domain_upper(), &self.break_points(), n_request)
    }

    /// Renewal-transport view shared by the juvenile-adult, consumer-resource
    /// and early-human variants.
    pub fn renewal(&self) -> Result<RenewalView<'_>> {
        match self {
            StructuredModel::SelectionMutation(_) => Err(Error::ModelUnsupported {
                op: "renewal view",
                model: self.kind_name(),
            }),
            other => Ok(RenewalView { model: other }),
        }
    }
}

/// Grid on `[0, upper]` with at least `n_request` cells, every break on an
/// even node index and an even total cell count.
pub fn aligned_grid(upper: f64, breaks: &[f64], n_request: usize) -> Result<Grid> {
    let n_request = n_request.max(2);
    'candidates: for n in n_request..=(n_request + 4096) {
        if n % 2 != 0 {
            continue;
        }
        for &b in breaks {
            let t = b / upper * n as f64;
            let k = t.round();
            if (t - k).abs() > 1e-6 * n as f64 || k <= 0.0 || k >= n as f64 {
                continue 'candidates;
            }
            if !(k as usize).is_multiple_of(2) {
                continue 'candidates;
            }
        }
        return Grid::new(0.0, upper, n);
    }
    Err(Error::BadGrid(format!(
        "no cell count near {n_request} aligns break points {breaks:?} on even nodes of [0, {upper}]"
    )))
}

// ---------------------------------------------------------------------------
// renewal-transport view

/// Uniform access to the transport-with-renewal structure of the 1D models:
/// domain, fertile window, growth speed, total mortality and fertility.
pub struct RenewalView<'a> {
    model: &'a StructuredModel,
}

impl RenewalView<'_> {
    pub fn domain_upper(&self) -> f64 {
        self.model.domain_upper()
    }

    /// Support of the fertility rate.
    pub fn fertile_window(&self) -> (f64, f64) {
        match self.model {
            StructuredModel::JuvenileAdult(m) => (m.l, m.m),
            StructuredModel::ConsumerResource(m) => (0.0, m.m),
            StructuredModel::EarlyHuman(m) => (m.a_j, m.a_r),
            StructuredModel::SelectionMutation(_) => unreachable!(),
        }
    }

    pub fn gamma(&self, s: f64, env: Environment) -> Result<f64> {
        match self.model {
            StructuredModel::JuvenileAdult(m) => m.gamma.eval(s, env),
            StructuredModel::ConsumerResource(m) => m.gamma.eval(s, env),
            StructuredModel::EarlyHuman(_) => Ok(1.0),
            StructuredModel::SelectionMutation(_) => unreachable!(),
        }
    }

    pub fn mortality(&self, s: f64, env: Environment) -> Result<f64> {
        match self.model {
            StructuredModel::JuvenileAdult(m) => m.mu.eval(s, env),
            StructuredModel::ConsumerResource(m) => m.mu.eval(s, env),
            StructuredModel::EarlyHuman(m) => m.mortality(s, env),
            StructuredModel::SelectionMutation(_) => unreachable!(),
        }
    }

    pub fn beta(&self, s: f64, env: Environment) -> Result<f64> {
        match self.model {
            StructuredModel::JuvenileAdult(m) => m.beta.eval(s, env),
            StructuredModel::ConsumerResource(m) => m.beta.eval(s, env),
            StructuredModel::EarlyHuman(m) => m.beta.eval(s, env),
            StructuredModel::SelectionMutation(_) => unreachable!(),
        }
    }

    pub fn grid(&self, n_request: usize) -> Result<Grid> {
        self.model.grid(n_request)
    }

    /// Node index range of the fertile window on an aligned grid.
    pub fn fertile_indices(&self, grid: &Grid) -> Result<(usize, usize)> {
        let (lo, hi) = self.fertile_window();
        let i_lo = grid
            .node_index_of(lo)
            .ok_or(Error::GridMisaligned { point: lo })?;
        let i_hi = grid
            .node_index_of(hi)
            .ok_or(Error::GridMisaligned { point: hi })?;
        Ok((i_lo, i_hi))
    }
}

// ---------------------------------------------------------------------------
// environment operators

/// Juvenile-adult environment `(J, A)`: mass below and above the maturation
/// size `l`, which must be a node of the profile's grid.
pub fn environment_ja(model: &JuvenileAdultModel, p: &GridFn) -> Result<Environment> {
    let grid = p.grid();
    let i_l = grid
        .node_index_of(model.l)
        .ok_or(Error::GridMisaligned { point: model.l })?;
    let n = grid.n_cells();
    Ok(Environment {
        e1: integrate_range(p, 0, i_l),
        e2: integrate_range(p, i_l, n),
    })
}

/// Consumer-resource environment `(P, Q)`: total consumer mass paired with
/// the externally supplied resource level.
pub fn environment_cr(p: &GridFn, q: f64) -> Environment {
    Environment {
        e1: integrate(p),
        e2: q,
    }
}

/// Early-human environment `(S, T)`: senescent mass (ages at or beyond
/// `a_r`) and total mass. Always satisfies `S <= T` for nonnegative
/// profiles.
pub fn environment_eh(model: &EarlyHumanModel, p: &GridFn) -> Result<Environment> {
    let grid = p.grid();
    let i_r = grid
        .node_index_of(model.a_r)
        .ok_or(Error::GridMisaligned { point: model.a_r })?;
    let n = grid.n_cells();
    Ok(Environment {
        e1: integrate_range(p, i_r, n),
        e2: integrate(p),
    })
}

/// Environment of a 1D profile under the model it belongs to.
pub fn environment_of_profile(model: &StructuredModel, p: &GridFn) -> Result<Environment> {
    match model {
        StructuredModel::JuvenileAdult(m) => environment_ja(m, p),
        StructuredModel::EarlyHuman(m) => environment_eh(m, p),
        StructuredModel::ConsumerResource(_) | StructuredModel::SelectionMutation(_) => {
            Err(Error::ModelUnsupported {
                op: "environment_of_profile",
                model: model.kind_name(),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// two-dimensional densities

/// Density over `(l, a)` on a tensor grid, row-major by trait index.
#[derive(Debug, Clone, PartialEq)]
pub struct Density2D {
    lgrid: Grid,
    agrid: Grid,
    values: Vec<f64>,
}

impl Density2D {
    pub fn new(lgrid: Grid, agrid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != lgrid.n_nodes() * agrid.n_nodes() {
            return Err(Error::BadGrid(format!(
                "value count {} does not match {} x {} nodes",
                values.len(),
                lgrid.n_nodes(),
                agrid.n_nodes()
            )));
        }
        Ok(Density2D {
            lgrid,
            agrid,
            values,
        })
    }

    pub fn lgrid(&self) -> Grid {
        self.lgrid
    }

    pub fn agrid(&self) -> Grid {
        self.agrid
    }

    pub fn value(&self, i_l: usize, k_a: usize) -> f64 {
        self.values[i_l * self.agrid.n_nodes() + k_a]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row of fixed trait index as a grid function of age.
    pub fn age_row(&self, i_l: usize) -> GridFn {
        let start = i_l * self.agrid.n_nodes();
        GridFn::new(
            self.agrid,
            self.values[start..start + self.agrid.n_nodes()].to_vec(),
        )
        .expect("row length matches age grid")
    }

    /// Tensor-trapezoid total mass.
    pub fn total_mass(&self) -> f64 {
        let wl = trapezoid_weights(&self.lgrid);
        let wa = trapezoid_weights(&self.agrid);
        let na = self.agrid.n_nodes();
        let mut acc = 0.0;
        for (i, wi) in wl.iter().enumerate() {
            let row = &self.values[i * na..(i + 1) * na];
            let mut row_acc = 0.0;
            for (v, wk) in row.iter().zip(&wa) {
                row_acc += v * wk;
            }
            acc += wi * row_acc;
        }
        acc
    }

    pub fn scale(&self, c: f64) -> Density2D {
        Density2D {
            lgrid: self.lgrid,
            agrid: self.agrid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }
}

/// Trapezoid quadrature weights of a grid (`h/2` at the ends, `h` inside).
pub fn trapezoid_weights(grid: &Grid) -> Vec<f64> {
    let h = grid.h();
    let n = grid.n_nodes();
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

// ---------------------------------------------------------------------------
// validation

/// One defect found by [`validate_model`].
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    NegativeRate {
        field: String,
        s: f64,
        env: Environment,
        value: f64,
    },
    NonFiniteRate {
        field: String,
        s: f64,
        env: Environment,
    },
    GammaNotBoundedAway {
        s: f64,
        env: Environment,
        value: f64,
    },
    /// Fertility vanishes near the upper end of the domain, so the
    /// irreducibility argument for the juvenile-adult model fails.
    BetaTailZero,
    KernelNotDensity {
        lhat: f64,
        integral: f64,
    },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::NegativeRate { field, s, env, value } => {
                write!(f, "rate `{field}` is negative ({value}) at s = {s}, E = {env}")
            }
            ValidationIssue::NonFiniteRate { field, s, env } => {
                write!(f, "rate `{field}` is not finite at s = {s}, E = {env}")
            }
            ValidationIssue::GammaNotBoundedAway { s, env, value } => {
                write!(
                    f,
                    "growth rate {value} at s = {s}, E = {env} is not bounded away from zero"
                )
            }
            ValidationIssue::BetaTailZero => {
                write!(f, "fertility vanishes near the upper end of the domain")
            }
            ValidationIssue::KernelNotDensity { lhat, integral } => {
                write!(
                    f,
                    "mutation kernel integrates to {integral} over offspring traits at parent trait {lhat}"
                )
            }
        }
    }
}

/// Outcome of model validation; an empty issue list means the model passed.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Environment sample points used by validation.
fn sample_envs() -> Vec<Environment> {
    let levels = [0.0, 0.5, 1.0, 2.0, 5.0];
    let mut envs = Vec::new();
    for &a in &levels {
        for &b in &levels {
            envs.push(Environment::new(a, b));
        }
    }
    envs
}

/// Samples every rate field of the model on a lattice of structure points
/// and environments, reporting negative or non-finite rates, growth rates
/// below [`GAMMA_FLOOR`], a vanishing fertility tail (juvenile-adult only)
/// and mutation kernels that are not densities in their first argument.
pub fn validate_model(model: &StructuredModel) -> Result<ValidationReport> {
    let mut report = ValidationReport::default();
    let envs = sample_envs();
    let grid = model.grid(64)?;

    let check_field =
        |report: &mut ValidationReport, field: &RateField, is_gamma: bool| {
            for env in &envs {
                for s in grid.nodes() {
                    match field.eval(s, *env) {
                        Ok(v) if !v.is_finite() => {
                            report.issues.push(ValidationIssue::NonFiniteRate {
                                field: field.name().to_string(),
                                s,
                                env: *env,
                            });
                            return;
                        }
                        Ok(v) if v < 0.0 => {
                            report.issues.push(ValidationIssue::NegativeRate {
                                field: field.name().to_string(),
                                s,
                                env: *env,
                                value: v,
                            });
                            return;
                        }
                        Ok(v) if is_gamma && v < GAMMA_FLOOR => {
                            report.issues.push(ValidationIssue::GammaNotBoundedAway {
                                s,
                                env: *env,
                                value: v,
                            });
                            return;
                        }
                        Ok(_) => {}
                        Err(_) => {
                            report.issues.push(ValidationIssue::NonFiniteRate {
                                field: field.name().to_string(),
                                s,
                                env: *env,
                            });
                            return;
                        }
                    }
                }
            }
        };

    match model {
        StructuredModel::JuvenileAdult(m) => {
            check_field(&mut report, &m.beta, false);
            check_field(&mut report, &m.mu, false);
            check_field(&mut report, &m.gamma, true);
            // irreducibility needs fertility mass near the upper end
            let tail_lo = m.m - (m.m - m.l) / 8.0;
            let mut tail_mass = 0.0;
            for env in &envs {
                for k in 0..=16 {
                    let s = tail_lo + (m.m - tail_lo) * k as f64 / 16.0;
                    if let Ok(v) = m.beta.eval(s, *env) {
                        tail_mass += v.max(0.0);
                    }
                }
            }
            if tail_mass <= 0.0 {
                report.issues.push(ValidationIssue::BetaTailZero);
            }
        }
        StructuredModel::ConsumerResource(m) => {
            check_field(&mut report, &m.beta, false);
            check_field(&mut report, &m.mu, false);
            check_field(&mut report, &m.gamma, true);
            check_field(&mut report, &m.feeding, false);
            // resource growth may change sign; only require finiteness
            for q in [0.0, 0.5, 1.0, 2.0, 5.0] {
                match m.resource_growth.eval(q) {
                    Ok(v) if v.is_finite() => {}
                    _ => {
                        report.issues.push(ValidationIssue::NonFiniteRate {
                            field: m.resource_growth.name().to_string(),
                            s: q,
                            env: Environment::origin(),
                        });
                        break;
                    }
                }
            }
        }
        StructuredModel::EarlyHuman(m) => {
            check_field(&mut report, &m.beta, false);
            check_field(&mut report, &m.f_nat, false);
            check_field(&mut report, &m.eta, false);
            check_field(&mut report, &m.mu_sen, false);
        }
        StructuredModel::SelectionMutation(m) => {
            for env in &envs {
                'outer: for lhat in grid.nodes() {
                    for a in grid.nodes() {
                        for (field, v) in [
                            ("beta", m.beta.eval(lhat, a, *env)),
                            ("mu", m.mu.eval(lhat, a, *env)),
                        ] {
                            match v {
                                Ok(v) if !v.is_finite() => {
                                    report.issues.push(ValidationIssue::NonFiniteRate {
                                        field: field.into(),
                                        s: a,
                                        env: *env,
                                    });
                                    break 'outer;
                                }
                                Ok(v) if v < 0.0 => {
                                    report.issues.push(ValidationIssue::NegativeRate {
                                        field: field.into(),
                                        s: a,
                                        env: *env,
                                        value: v,
                                    });
                                    break 'outer;
                                }
                                _ => {}
                            }
                        }
                    }
                }
            }
            // kernel must be a probability density in l for each lhat
            for k in 0..=8 {
                let lhat = m.a_m * k as f64 / 8.0;
                let row = GridFn::try_sample(grid, |l| m.kernel.eval(l, lhat))?;
                let integral = integrate(&row);
                if (integral - 1.0).abs() > 1e-8 {
                    report
                        .issues
                        .push(ValidationIssue::KernelNotDensity { lhat, integral });
                    break;
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ja_const() -> JuvenileAdultModel {
        let beta = RateField::from_expr(
            "beta",
            &RateExpression::parse("3 * indicator(1, 2, s) / (1 + E1 + E2)").unwrap(),
            &VariableLayout::juvenile_adult(),
        )
        .unwrap();
        JuvenileAdultModel::new(
            1.0,
            2.0,
            beta,
            RateField::constant("mu", 0.0),
            RateField::constant("gamma", 1.0),
        )
        .unwrap()
    }

    #[test]
    fn environment_splits_at_maturation_size() {
        let model = ja_const();
        let grid = aligned_grid(2.0, &[1.0], 100).unwrap();
        let p = GridFn::sample(grid, |_| 1.0);
        let env = environment_ja(&model, &p).unwrap();
        assert!((env.e1 - 1.0).abs() <= 1e-12);
        assert!((env.e2 - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn environment_components_sum_to_total() {
        let model = ja_const();
        let grid = aligned_grid(2.0, &[1.0], 200).unwrap();
        let p = GridFn::sample(grid, |s| (s * 1.7).sin().abs() + 0.3);
        let env = environment_ja(&model, &p).unwrap();
        assert!((env.e1 + env.e2 - integrate(&p)).abs() <= 1e-12);
    }

    #[test]
    fn environment_is_linear() {
        let model = ja_const();
        let grid = aligned_grid(2.0, &[1.0], 120).unwrap();
        let p = GridFn::sample(grid, |s| s + 0.5);
        let q = GridFn::sample(grid, |s| (2.0 - s).max(0.1));
        let combo = p.zip_map(&q, |a, b| 2.0 * a + 5.0 * b);
        let ep = environment_ja(&model, &p).unwrap();
        let eq = environment_ja(&model, &q).unwrap();
        let ec = environment_ja(&model, &combo).unwrap();
        assert!((ec.e1 - (2.0 * ep.e1 + 5.0 * eq.e1)).abs() <= 1e-12);
        assert!((ec.e2 - (2.0 * ep.e2 + 5.0 * eq.e2)).abs() <= 1e-12);
    }

    #[test]
    fn misaligned_grid_is_reported() {
        let model = ja_const();
        let grid = Grid::new(0.0, 2.0, 99).unwrap(); // node at 1.0? 99 cells: no
        let p = GridFn::sample(grid, |_| 1.0);
        assert!(matches!(
            environment_ja(&model, &p),
            Err(Error::GridMisaligned { .. })
        ));
    }

    #[test]
    fn eh_senescent_mass_below_total() {
        let model = EarlyHumanModel::new(
            1.0,
            2.0,
            3.0,
            RateField::constant("beta", 1.0),
            RateField::constant("f", 0.0),
            RateField::constant("eta", 1.0),
            RateField::constant("mu", 1.0),
        )
        .unwrap();
        let grid = aligned_grid(3.0, &[1.0, 2.0], 200).unwrap();
        let p = GridFn::sample(grid, |a| (3.0 - a) * 0.5 + 0.1);
        let env = environment_eh(&model, &p).unwrap();
        assert!(env.e1 <= env.e2);
        assert!((env.e2 - integrate(&p)).abs() <= 1e-12);
    }

    #[test]
    fn grid_alignment_rounds_up() {
        // breaks at thirds of the domain need a multiple of six
        let g = aligned_grid(3.0, &[1.0, 2.0], 200).unwrap();
        assert_eq!(g.n_cells(), 204);
        assert_eq!(g.node_index_of(1.0), Some(68));
        // already aligned counts are kept
        let g = aligned_grid(2.0, &[1.0], 2000).unwrap();
        assert_eq!(g.n_cells(), 2000);
    }

    #[test]
    fn validation_flags_negative_rate() {
        let model = StructuredModel::JuvenileAdult(
            JuvenileAdultModel::new(
                1.0,
                2.0,
                RateField::constant("beta", 1.0),
                RateField::new("mu", |s, _| Ok(1.0 - s)), // negative for s > 1
                RateField::constant("gamma", 1.0),
            )
            .unwrap(),
        );
        let report = validate_model(&model).unwrap();
        assert!(report
            .issues
            .iter()
            .any(|i| matches!(i, ValidationIssue::NegativeRate { field, .. } if field == "mu")));
    }

    #[test]
    fn validation_flags_vanishing_gamma() {
        let model = StructuredModel::JuvenileAdult(
            JuvenileAdultModel::new(
                1.0,
                2.0,
                RateField::constant("beta", 1.0),
                RateField::constant("mu", 0.0),
                RateField::new("gamma", |s, _| Ok(s - 1.0)), // vanishes and goes negative
            )
            .unwrap(),
        );
        let report = validate_model(&model).unwrap();
        assert!(report.issues.iter().any(|i| matches!(
            i,
            ValidationIssue::GammaNotBoundedAway { .. } | ValidationIssue::NegativeRate { .. }
        )));
    }

    #[test]
    fn validation_flags_empty_fertility_tail() {
        let beta = RateField::from_expr(
            "beta",
            &RateExpression::parse("indicator(1, 1.5, s)").unwrap(),
            &VariableLayout::juvenile_adult(),
        )
        .unwrap();
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
        let report = validate_model(&model).unwrap();
        assert!(report
            .issues
            .iter()
            .any(|i| matches!(i, ValidationIssue::BetaTailZero)));
    }

    #[test]
    fn validation_flags_non_density_kernel() {
        let model = StructuredModel::SelectionMutation(
            SelectionMutationModel::new(
                2.0,
                RateField2::constant("beta", 1.0),
                RateField2::constant("mu", 0.0),
                Kernel2::constant("kernel", 0.7), // integrates to 1.4
            )
            .unwrap(),
        );
        let report = validate_model(&model).unwrap();
        assert!(report
            .issues
            .iter()
            .any(|i| matches!(i, ValidationIssue::KernelNotDensity { .. })));
    }

    #[test]
    fn density_mass_of_uniform() {
        let g = Grid::new(0.0, 2.0, 10).unwrap();
        let d = Density2D::new(g, g, vec![0.25; 11 * 11]).unwrap();
        assert!((d.total_mass() - 1.0).abs() <= 1e-12);
    }
}
