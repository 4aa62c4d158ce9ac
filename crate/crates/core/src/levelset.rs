//! Tracing the zero level set of a sign-changing function on the positive
//! quadrant.
//!
//! The functions traced here (spectral bound, net reproduction minus one)
//! are positive at the origin and negative far out, so each ray from the
//! origin crosses zero. Scanning and bisecting along a fan of rays yields
//! an angle-parametrized sampling of the level set, the computational stand
//! in for the compact connected separating set the solvers search on.

use crate::error::{Error, Result};
use crate::model::Environment;
use crate::numerics::bisect_root;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

/// Number of outward scan steps used to isolate the innermost sign change.
const SCAN_STEPS: usize = 64;

/// A ray from the origin into the closed positive quadrant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    theta: f64,
}

impl Ray {
    pub fn new(theta: f64) -> Result<Self> {
        if !(0.0..=FRAC_PI_2 + 1e-12).contains(&theta) {
            return Err(Error::Domain {
                context: "ray angle must lie in [0, pi/2]".to_string(),
                at: theta,
            });
        }
        Ok(Ray {
            theta: theta.min(FRAC_PI_2),
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn direction(&self) -> (f64, f64) {
        (self.theta.cos(), self.theta.sin())
    }

    pub fn point(&self, rho: f64) -> Environment {
        let (dx, dy) = self.direction();
        Environment::new(rho * dx, rho * dy)
    }
}

/// Root radius found on a ray, with a degeneracy flag for flat crossings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketOutcome {
    pub radius: f64,
    /// Both ends of the bracketing scan cell had |sigma| below the
    /// tolerance: the crossing may be an interval rather than a point, and
    /// the bisected radius is then one arbitrary point inside it.
    pub degenerate: bool,
}

/// Innermost zero of `sigma` along the ray at `theta`: requires a strictly
/// positive origin value and a negative value at `r_max`, scans outward in
/// `r_max / 64` steps and bisects the first sign-change cell.
pub fn bracket_on_ray<F>(sigma: &F, theta: f64, r_max: f64, tol: f64) -> Result<BracketOutcome>
where
    F: Fn(Environment) -> Result<f64> + ?Sized,
{
    bracket_with_steps(sigma, theta, r_max, tol, SCAN_STEPS)
}

pub(crate) fn bracket_with_steps<F>(
    sigma: &F,
    theta: f64,
    r_max: f64,
    tol: f64,
    steps: usize,
) -> Result<BracketOutcome>
where
    F: Fn(Environment) -> Result<f64> + ?Sized,
{
    let ray = Ray::new(theta)?;
    let origin_value = sigma(Environment::origin())?;
    if !(origin_value > 0.0) {
        return Err(Error::BadOrigin {
            value: origin_value,
        });
    }
    let outer_value = sigma(ray.point(r_max))?;
    if outer_value >= 0.0 {
        return Err(Error::NoOuterSignChange {
            theta,
            r_max,
            value: outer_value,
        });
    }
    let mut prev_r = 0.0;
    let mut prev_v = origin_value;
    for k in 1..=steps {
        let r = r_max * k as f64 / steps as f64;
        let v = sigma(ray.point(r))?;
        if v <= 0.0 {
            let degenerate = prev_v.abs() < tol && v.abs() < tol;
            let radius = bisect_root(|rho| sigma(ray.point(rho)), prev_r, r, tol)?;
            return Ok(BracketOutcome { radius, degenerate });
        }
        prev_r = r;
        prev_v = v;
    }
    // the outer check already saw a negative value at r_max, so the scan
    // must have found one
    unreachable!("outward scan missed the negative endpoint");
}

/// One traced point of the level curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub theta: f64,
    pub rho: f64,
    pub point: Environment,
    pub sigma_residual: f64,
    pub degenerate: bool,
}

/// Angle-parametrized sampling of the zero level set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelCurve {
    samples: Vec<CurveSample>,
}

impl LevelCurve {
    pub fn new(samples: Vec<CurveSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("a level curve needs at least one sample".into()));
        }
        for pair in samples.windows(2) {
            if pair[1].theta <= pair[0].theta {
                return Err(Error::Config(format!(
                    "curve angles must increase strictly, got {} then {}",
                    pair[0].theta, pair[1].theta
                )));
            }
        }
        for s in &samples {
            if !(s.rho > 0.0 && s.rho.is_finite()) {
                return Err(Error::Config(format!(
                    "curve radius {} at theta {} is not a positive finite number",
                    s.rho, s.theta
                )));
            }
        }
        Ok(LevelCurve { samples })
    }

    pub fn samples(&self) -> &[CurveSample] {
        &self.samples
    }

    /// True when the trace reaches both axes (first ray at 0, last at pi/2).
    pub fn spans_full_quadrant(&self) -> bool {
        let first = self.samples.first().map(|s| s.theta).unwrap_or(1.0);
        let last = self.samples.last().map(|s| s.theta).unwrap_or(0.0);
        first <= 1e-12 && (FRAC_PI_2 - last) <= 1e-12
    }

    /// Radius at an arbitrary angle, linear in theta between samples and
    /// clamped to the end samples outside the traced range.
    pub fn interpolate_rho(&self, theta: f64) -> f64 {
        let samples = &self.samples;
        if theta <= samples[0].theta {
            return samples[0].rho;
        }
        if theta >= samples[samples.len() - 1].theta {
            return samples[samples.len() - 1].rho;
        }
        let idx = samples.partition_point(|s| s.theta < theta);
        let (a, b) = (&samples[idx - 1], &samples[idx]);
        let w = (theta - a.theta) / (b.theta - a.theta);
        a.rho + w * (b.rho - a.rho)
    }

    /// Curve point at an arbitrary angle.
    pub fn point_at(&self, theta: f64) -> Result<Environment> {
        Ok(Ray::new(theta)?.point(self.interpolate_rho(theta)))
    }
}

/// Strict fan trace: every ray must cross the level set.
pub fn trace_zero_set<F>(sigma: &F, n_rays: usize, r_max: f64, tol: f64) -> Result<LevelCurve>
where
    F: Fn(Environment) -> Result<f64> + ?Sized,
{
    let (curve, failures) = trace_zero_set_partial(sigma, n_rays, r_max, tol)?;
    if let Some((theta, source)) = failures.into_iter().next() {
        return Err(Error::RayFailed {
            theta,
            source: Box::new(source),
        });
    }
    Ok(curve)
}

/// Fan trace that tolerates rays without a crossing, returning them with
/// their errors alongside the curve through the successful rays. Fails only
/// when no ray at all crosses, or on a bad origin.
pub fn trace_zero_set_partial<F>(
    sigma: &F,
    n_rays: usize,
    r_max: f64,
    tol: f64,
) -> Result<(LevelCurve, Vec<(f64, Error)>)>
where
    F: Fn(Environment) -> Result<f64> + ?Sized,
{
    let n_rays = n_rays.max(2);
    let mut samples = Vec::with_capacity(n_rays);
    let mut failures = Vec::new();
    for i in 0..n_rays {
        let theta = FRAC_PI_2 * i as f64 / (n_rays - 1) as f64;
        match bracket_on_ray(sigma, theta, r_max, tol) {
            Ok(outcome) => {
                let point = Ray::new(theta)?.point(outcome.radius);
                let sigma_residual = sigma(point)?;
                samples.push(CurveSample {
                    theta,
                    rho: outcome.radius,
                    point,
                    sigma_residual,
                    degenerate: outcome.degenerate,
                });
            }
            Err(e @ Error::BadOrigin { .. }) => return Err(e),
            Err(e) => failures.push((theta, e)),
        }
    }
    if samples.is_empty() {
        let (theta, source) = failures.remove(0);
        return Err(Error::RayFailed {
            theta,
            source: Box::new(source),
        });
    }
    Ok((LevelCurve::new(samples)?, failures))
}

/// Radial projection of a nonzero point onto the curve.
pub fn project_to_curve(point: Environment, curve: &LevelCurve) -> Result<Environment> {
    if point.l1_norm() == 0.0 {
        return Err(Error::Domain {
            context: "cannot project the origin onto the level curve".to_string(),
            at: 0.0,
        });
    }
    curve.point_at(point.theta())
}

/// Barycentric coordinate on the unit-sum segment of the quadrant: `t`
/// stands for the point `(1 - t, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexPoint {
    t: f64,
}

impl SimplexPoint {
    pub fn new(t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain {
                context: "simplex coordinate must lie in [0, 1]".to_string(),
                at: t,
            });
        }
        Ok(SimplexPoint { t })
    }

    /// Ray projection of a nonzero quadrant point onto the simplex.
    pub fn from_environment(env: Environment) -> Result<Self> {
        let total = env.e1 + env.e2;
        if !(total > 0.0) {
            return Err(Error::DegenerateEnvironment);
        }
        SimplexPoint::new((env.e2 / total).clamp(0.0, 1.0))
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn environment(&self) -> Environment {
        Environment::new(1.0 - self.t, self.t)
    }

    /// Angle of the ray through this simplex point.
    pub fn theta(&self) -> f64 {
        self.t.atan2(1.0 - self.t)
    }
}
