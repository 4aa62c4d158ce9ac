//! Uniform grids, grid functions, quadrature and scalar root finding.
//!
//! Everything downstream (spectral computations, level-set traces, the
//! solvers) works with [`Grid`] / [`GridFn`] values built here. Quadrature is
//! composite Simpson when the cell count is even and trapezoid otherwise;
//! cumulative integrals are trapezoid prefix sums so that the cumulative
//! value at the upper end agrees with the trapezoid integral.

use crate::error::{Error, Result};

/// Relative tolerance used when matching a coordinate to a grid node.
const NODE_MATCH_TOL: f64 = 1e-9;

/// Uniform grid on `[lower, upper]` with `n_cells` cells (`n_cells + 1` nodes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    lower: f64,
    upper: f64,
    n_cells: usize,
}

impl Grid {
    /// Builds a grid. Requires `lower < upper`, both finite, and at least one cell.
    pub fn new(lower: f64, upper: f64, n_cells: usize) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() {
            return Err(Error::BadGrid(format!(
                "bounds must be finite, got [{lower}, {upper}]"
            )));
        }
        if lower >= upper {
            return Err(Error::BadGrid(format!(
                "lower bound {lower} must be below upper bound {upper}"
            )));
        }
        if n_cells == 0 {
            return Err(Error::BadGrid("at least one cell required".into()));
        }
        Ok(Grid {
            lower,
            upper,
            n_cells,
        })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    /// Cell width.
    pub fn h(&self) -> f64 {
        (self.upper - self.lower) / self.n_cells as f64
    }

    /// Node coordinate; the endpoints are reproduced exactly.
    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i <= self.n_cells);
        if i == self.n_cells {
            self.upper
        } else {
            self.lower + (self.upper - self.lower) * (i as f64 / self.n_cells as f64)
        }
    }

    /// Iterator over node coordinates.
    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_cells).map(move |i| self.node(i))
    }

    /// Index of the node matching `x` within a relative tolerance, if any.
    pub fn node_index_of(&self, x: f64) -> Option<usize> {
        let span = self.upper - self.lower;
        let t = (x - self.lower) / span * self.n_cells as f64;
        let i = t.round();
        if i < 0.0 || i > self.n_cells as f64 {
            return None;
        }
        let i = i as usize;
        if (x - self.node(i)).abs() <= NODE_MATCH_TOL * span {
            Some(i)
        } else {
            None
        }
    }
}

/// Function values sampled on the nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFn {
    /// Wraps node values; the length must be `grid.n_nodes()`.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::BadGrid(format!(
                "value count {} does not match node count {}",
                values.len(),
                grid.n_nodes()
            )));
        }
        Ok(GridFn { grid, values })
    }

    /// Samples a closure on every node.
    pub fn sample(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().map(f).collect();
        GridFn { grid, values }
    }

    /// Samples a fallible closure on every node.
    pub fn try_sample(grid: Grid, mut f: impl FnMut(f64) -> Result<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.n_nodes());
        for x in grid.nodes() {
            values.push(f(x)?);
        }
        Ok(GridFn { grid, values })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Copy of the restriction to the node range `[i_lo, i_hi]`.
    pub fn restrict(&self, i_lo: usize, i_hi: usize) -> Result<GridFn> {
        if i_lo >= i_hi || i_hi > self.grid.n_cells() {
            return Err(Error::BadGrid(format!(
                "invalid restriction [{i_lo}, {i_hi}] on {} cells",
                self.grid.n_cells()
            )));
        }
        let grid = Grid::new(self.grid.node(i_lo), self.grid.node(i_hi), i_hi - i_lo)?;
        Ok(GridFn {
            grid,
            values: self.values[i_lo..=i_hi].to_vec(),
        })
    }

    /// Applies a function to every value, keeping the grid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFn {
        GridFn {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Combines two functions on the same grid pointwise.
    pub fn zip_map(&self, other: &GridFn, f: impl Fn(f64, f64) -> f64) -> GridFn {
        assert_eq!(self.grid, other.grid, "grid mismatch in zip_map");
        GridFn {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Piecewise-linear interpolation; clamps to the domain.
    pub fn interpolate(&self, x: f64) -> f64 {
        let g = self.grid;
        if x <= g.lower() {
            return self.values[0];
        }
        if x >= g.upper() {
            return self.values[g.n_cells()];
        }
        let t = (x - g.lower()) / g.h();
        let i = (t.floor() as usize).min(g.n_cells() - 1);
        let frac = t - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// Trapezoid-weighted discrete L1 norm (the natural norm for sampled
    /// integrable functions).
    pub fn l1_norm(&self) -> f64 {
        let h = self.grid.h();
        let n = self.grid.n_cells();
        let mut acc = 0.5 * (self.values[0].abs() + self.values[n].abs());
        for v in &self.values[1..n] {
            acc += v.abs();
        }
        acc * h
    }

    /// Supremum norm over the nodes.
    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Smallest node value.
    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }
}

/// Integral of `f` over its whole grid: composite Simpson when the cell count
/// is even, trapezoid otherwise. Simpson is exact for polynomials of degree
/// up to three.
pub fn integrate(f: &GridFn) -> f64 {
    integrate_range(f, 0, f.grid().n_cells())
}

/// Integral over the node range `[i_lo, i_hi]` using the same rule selection
/// on the sub-range cell count.
pub fn integrate_range(f: &GridFn, i_lo: usize, i_hi: usize) -> f64 {
    assert!(i_lo < i_hi && i_hi <= f.grid().n_cells());
    let h = f.grid().h();
    let v = f.values();
    let cells = i_hi - i_lo;
    if cells.is_multiple_of(2) {
        let mut acc = v[i_lo] + v[i_hi];
        let mut k = i_lo + 1;
        while k < i_hi {
            acc += 4.0 * v[k];
            if k + 1 < i_hi {
                acc += 2.0 * v[k + 1];
            }
            k += 2;
        }
        acc * h / 3.0
    } else {
        let mut acc = 0.5 * (v[i_lo] + v[i_hi]);
        for value in &v[i_lo + 1..i_hi] {
            acc += value;
        }
        acc * h
    }
}

/// Cumulative trapezoid integral: node `k` holds the trapezoid integral from
/// the lower end to node `k`. The value at the upper end equals the trapezoid
/// integral of the whole function.
pub fn cumulative_integral(f: &GridFn) -> GridFn {
    let h = f.grid().h();
    let v = f.values();
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..v.len() {
        acc += 0.5 * h * (v[k - 1] + v[k]);
        out.push(acc);
    }
    GridFn {
        grid: f.grid(),
        values: out,
    }
}

/// Bisection for a root of `f` on `[lo, hi]`.
///
/// Requires a sign change (or a zero endpoint); shrinks the interval until its
/// width is at most `tol` and returns the midpoint. Deterministic for
/// identical inputs.
pub fn bisect_root(
    mut f: impl FnMut(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64> {
    assert!(tol > 0.0, "bisection tolerance must be positive");
    assert!(lo < hi, "empty bracket [{lo}, {hi}]");
    let f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if !f_lo.is_finite() || !f_hi.is_finite() {
        return Err(Error::NonFinite {
            context: format!("bisection endpoints: f({lo}) = {f_lo}, f({hi}) = {f_hi}"),
        });
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if (f_lo > 0.0) == (f_hi > 0.0) {
        return Err(Error::NoBracket { lo, hi, f_lo, f_hi });
    }
    let (mut lo, mut hi) = (lo, hi);
    let mut sign_lo = f_lo > 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // interval narrower than floating point resolution
        }
        let f_mid = f(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if (f_mid > 0.0) == sign_lo {
            lo = mid;
            sign_lo = f_mid > 0.0;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::new(0.0, 2.0, n).unwrap()
    }

    #[test]
    fn simpson_exact_for_cubics() {
        let f = GridFn::sample(grid(8), |s| s * s);
        assert!((integrate(&f) - 8.0 / 3.0).abs() <= 1e-12);
        let c = GridFn::sample(grid(8), |s| s * s * s);
        assert!((integrate(&c) - 4.0).abs() <= 1e-12);
    }

    #[test]
    fn odd_cells_fall_back_to_trapezoid() {
        let f = GridFn::sample(Grid::new(0.0, 2.0, 9).unwrap(), |s| s * s);
        let err = (integrate(&f) - 8.0 / 3.0).abs();
        assert!(err > 1e-8, "trapezoid should not be exact here");
        assert!(err <= 1e-1);
    }

    #[test]
    fn integrate_linear_in_integrand() {
        let f = GridFn::sample(grid(16), |s| (-s).exp());
        let g = GridFn::sample(grid(16), |s| s.cos());
        let combo = f.zip_map(&g, |a, b| 2.0 * a + 3.0 * b);
        let direct = integrate(&combo);
        let split = 2.0 * integrate(&f) + 3.0 * integrate(&g);
        assert!((direct - split).abs() <= 1e-12);
    }

    #[test]
    fn cumulative_of_constant_is_linear() {
        let f = GridFn::sample(grid(10), |_| 1.0);
        let g = cumulative_integral(&f);
        for (i, s) in g.grid().nodes().enumerate() {
            assert!((g.value(i) - s).abs() <= 1e-15);
        }
    }

    #[test]
    fn cumulative_of_identity() {
        let f = GridFn::sample(Grid::new(0.0, 1.0, 1000).unwrap(), |s| s);
        let g = cumulative_integral(&f);
        assert!((g.value(1000) - 0.5).abs() <= 1e-6);
    }

    #[test]
    fn cumulative_upper_matches_trapezoid_integrate() {
        // Odd cell count forces the trapezoid fallback in integrate.
        let f = GridFn::sample(Grid::new(0.0, 2.0, 99).unwrap(), |s| (1.3 * s).sin() + 2.0);
        let g = cumulative_integral(&f);
        assert!((g.value(99) - integrate(&f)).abs() <= 1e-12);
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let root = bisect_root(|x| Ok(x * x - 2.0), 0.0, 2.0, 1e-12).unwrap();
        assert!((root - 2.0_f64.sqrt()).abs() <= 1e-11);
    }

    #[test]
    fn bisect_reports_missing_bracket() {
        let err = bisect_root(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-9).unwrap_err();
        match err {
            Error::NoBracket { f_lo, f_hi, .. } => {
                assert_eq!(f_lo, 2.0);
                assert_eq!(f_hi, 2.0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn bisect_accepts_zero_endpoint() {
        let root = bisect_root(Ok, 0.0, 1.0, 1e-9).unwrap();
        assert_eq!(root, 0.0);
    }

    #[test]
    fn node_lookup() {
        let g = Grid::new(0.0, 3.0, 204).unwrap();
        assert_eq!(g.node_index_of(1.0), Some(68));
        assert_eq!(g.node_index_of(2.0), Some(136));
        assert_eq!(g.node_index_of(1.001), None);
        assert_eq!(g.node_index_of(-0.5), None);
    }

    #[test]
    fn restriction_preserves_values() {
        let f = GridFn::sample(grid(10), |s| s + 1.0);
        let r = f.restrict(2, 7).unwrap();
        assert_eq!(r.grid().n_cells(), 5);
        assert!((r.grid().lower() - 0.4).abs() <= 1e-15);
        assert_eq!(r.value(0), f.value(2));
        assert_eq!(r.value(5), f.value(7));
    }

    #[test]
    fn interpolation_is_linear_between_nodes() {
        let f = GridFn::sample(grid(4), |s| 3.0 * s);
        assert!((f.interpolate(0.25) - 0.75).abs() <= 1e-15);
        assert_eq!(f.interpolate(-1.0), 0.0);
        assert_eq!(f.interpolate(5.0), 6.0);
    }
}
