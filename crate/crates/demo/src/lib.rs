//! Browser front end: thin wasm-bindgen wrappers around the solver crate.
//!
//! Each export takes the same configuration text as the command-line tool
//! and returns a JSON string for the page script to plot. Resolutions are
//! capped so a keystroke-triggered call stays interactive in the browser;
//! the command-line tool is the place for full-resolution runs.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use steadypop::config::parse_config;
use steadypop::error::Result;
use steadypop::fixedpoint::{solve_steady_state, Diagnostics, SolvedProfile};
use steadypop::levelset::trace_zero_set_partial;
use steadypop::reproduction::net_reproduction;
use steadypop::selmut::{kernel_assemble, kernel_spectral_radius};
use steadypop::spectral::characteristic_value;
use steadypop::{Environment, Grid, StructuredModel};

/// Interactive ceiling on the number of grid cells.
const MAX_CELLS: usize = 600;
/// Interactive ceiling on the number of traced rays.
const MAX_RAYS: usize = 65;
/// Number of profile points returned to the plot.
const PLOT_POINTS: usize = 257;

#[derive(Serialize)]
struct CurvePoint {
    theta: f64,
    rho: f64,
    e1: f64,
    e2: f64,
}

#[derive(Serialize)]
struct CurveDoc {
    model: &'static str,
    samples: Vec<CurvePoint>,
    skipped_rays: usize,
}

#[derive(Serialize)]
struct ProfileDoc {
    s: Vec<f64>,
    value: Vec<f64>,
}

#[derive(Serialize)]
struct SolveDoc {
    model: &'static str,
    method: String,
    environment: Environment,
    scale: f64,
    diagnostics: Diagnostics,
    warnings: Vec<String>,
    profile: ProfileDoc,
}

#[derive(Serialize)]
struct HeatmapDoc {
    model: &'static str,
    resolution: usize,
    max_env: f64,
    values: Vec<f64>,
}

fn sigma_at(model: &StructuredModel, grid: Grid, env: Environment) -> Result<f64> {
    match model {
        StructuredModel::SelectionMutation(_) => {
            let k = kernel_assemble(model, grid, env, 0.0)?;
            Ok(kernel_spectral_radius(&k, 1e-10)?.radius - 1.0)
        }
        _ => Ok(characteristic_value(model, grid, env, 0.0)? - 1.0),
    }
}

fn downsample(s: &[f64], v: &[f64]) -> ProfileDoc {
    let stride = (v.len() / PLOT_POINTS).max(1);
    let mut out = ProfileDoc {
        s: Vec::new(),
        value: Vec::new(),
    };
    let mut i = 0;
    while i < v.len() {
        out.s.push(s[i]);
        out.value.push(v[i]);
        i += stride;
    }
    if *out.s.last().unwrap() != s[v.len() - 1] {
        out.s.push(s[v.len() - 1]);
        out.value.push(v[v.len() - 1]);
    }
    out
}

fn trace_impl(config_text: &str) -> Result<String> {
    let cfg = parse_config(config_text)?;
    let grid = cfg.model.grid(cfg.solver.n_cells.min(MAX_CELLS))?;
    let rays = cfg.solver.n_rays.min(MAX_RAYS);
    let sigma = |env: Environment| sigma_at(&cfg.model, grid, env);
    let (curve, failures) =
        trace_zero_set_partial(&sigma, rays, cfg.solver.r_max, cfg.solver.tol)?;
    let doc = CurveDoc {
        model: cfg.model.kind_name(),
        samples: curve
            .samples()
            .iter()
            .map(|s| CurvePoint {
                theta: s.theta,
                rho: s.rho,
                e1: s.point.e1,
                e2: s.point.e2,
            })
            .collect(),
        skipped_rays: failures.len(),
    };
    Ok(serde_json::to_string(&doc).expect("serializable"))
}

fn solve_impl(config_text: &str, method: &str) -> Result<String> {
    let cfg = parse_config(config_text)?;
    let mut solver = cfg.solver;
    if !method.is_empty() {
        solver.method = method.parse()?;
    }
    solver.n_cells = solver.n_cells.min(MAX_CELLS);
    solver.n_rays = solver.n_rays.min(MAX_RAYS);
    let result = solve_steady_state(&cfg.model, solver.method, &solver.params())?;
    let profile = match &result.profile {
        SolvedProfile::Line(p) => {
            let s: Vec<f64> = p.grid().nodes().collect();
            downsample(&s, p.values())
        }
        SolvedProfile::Square(d) => {
            // trait marginal: integrate out age with the trapezoid rule
            let lgrid = d.lgrid();
            let agrid = d.agrid();
            let h = agrid.h();
            let n = agrid.n_nodes();
            let marginal: Vec<f64> = (0..lgrid.n_nodes())
                .map(|i| {
                    let mut total = 0.0;
                    for k in 0..n {
                        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
                        total += w * h * d.value(i, k);
                    }
                    total
                })
                .collect();
            let s: Vec<f64> = lgrid.nodes().collect();
            downsample(&s, &marginal)
        }
    };
    let doc = SolveDoc {
        model: cfg.model.kind_name(),
        method: solver.method.as_str().to_string(),
        environment: result.environment,
        scale: result.scale,
        diagnostics: result.diagnostics,
        warnings: result.warnings,
        profile,
    };
    Ok(serde_json::to_string(&doc).expect("serializable"))
}

fn heatmap_impl(config_text: &str, max_env: f64, resolution: usize) -> Result<String> {
    let cfg = parse_config(config_text)?;
    let resolution = resolution.clamp(2, 64);
    let cells = match cfg.model {
        StructuredModel::SelectionMutation(_) => cfg.solver.n_cells.min(64),
        _ => cfg.solver.n_cells.min(MAX_CELLS),
    };
    let grid = cfg.model.grid(cells)?;
    let mut values = Vec::with_capacity(resolution * resolution);
    for row in 0..resolution {
        let e2 = max_env * row as f64 / (resolution - 1) as f64;
        for col in 0..resolution {
            let e1 = max_env * col as f64 / (resolution - 1) as f64;
            values.push(net_reproduction(&cfg.model, grid, Environment::new(e1, e2))?);
        }
    }
    let doc = HeatmapDoc {
        model: cfg.model.kind_name(),
        resolution,
        max_env,
        values,
    };
    Ok(serde_json::to_string(&doc).expect("serializable"))
}

fn to_js(r: Result<String>) -> core::result::Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
}

/// Trace the zero level set of the spectral bound for the configured
/// model. Returns `{model, samples: [{theta, rho, e1, e2}], skipped_rays}`.
#[wasm_bindgen]
pub fn trace_level_curve(config_text: &str) -> core::result::Result<String, JsValue> {
    to_js(trace_impl(config_text))
}

/// Solve for the positive steady state. An empty `method` keeps the one
/// from the configuration. Returns environment, scale, diagnostics and a
/// plottable profile (the trait marginal for the two-dimensional model).
#[wasm_bindgen]
pub fn solve_steady(config_text: &str, method: &str) -> core::result::Result<String, JsValue> {
    to_js(solve_impl(config_text, method))
}

/// Net reproduction number sampled on a square environment grid, for the
/// criticality heatmap. Returns row-major values, e2 increasing by row.
#[wasm_bindgen]
pub fn reproduction_heatmap(
    config_text: &str,
    max_env: f64,
    resolution: usize,
) -> core::result::Result<String, JsValue> {
    to_js(heatmap_impl(config_text, max_env, resolution))
}

#[cfg(test)]
mod tests {
    use super::*;

    const JA: &str = "\
model = juvenile-adult

[structure]
l = 1
m = 2

[rates]
beta = 3 * indicator(1, 2, s) / (1 + E1 + E2)
mu = 0
gamma = 1

[solver]
method = irreducible
n_cells = 400
n_rays = 33
";

    #[test]
    fn trace_returns_the_expected_ray_count() {
        let doc: serde_json::Value =
            serde_json::from_str(&trace_impl(JA).unwrap()).unwrap();
        assert_eq!(doc["samples"].as_array().unwrap().len(), 33);
        assert_eq!(doc["skipped_rays"], 0);
        let first = &doc["samples"][0];
        assert!((first["rho"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn solve_reports_the_closed_form_state() {
        let doc: serde_json::Value =
            serde_json::from_str(&solve_impl(JA, "").unwrap()).unwrap();
        assert!((doc["environment"]["e1"].as_f64().unwrap() - 1.0).abs() < 1e-6);
        assert!((doc["scale"].as_f64().unwrap() - 2.0).abs() < 1e-6);
        let values = doc["profile"]["value"].as_array().unwrap();
        assert!(values.len() <= 2 * PLOT_POINTS);
        for v in values {
            assert!((v.as_f64().unwrap() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn heatmap_brackets_the_critical_line() {
        let doc: serde_json::Value =
            serde_json::from_str(&heatmap_impl(JA, 4.0, 9).unwrap()).unwrap();
        let values = doc["values"].as_array().unwrap();
        assert_eq!(values.len(), 81);
        // corner (0,0) is supercritical, corner (4,4) subcritical
        assert!(values[0].as_f64().unwrap() > 1.0);
        assert!(values[80].as_f64().unwrap() < 1.0);
    }

    #[test]
    fn bad_method_is_reported_as_text() {
        let err = solve_impl(JA, "bogus").unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn page_presets_parse_and_stay_supercritical() {
        let page = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/www/index.html"
        ))
        .expect("demo page exists");
        let presets: Vec<&str> = page
            .split('`')
            .filter(|chunk| chunk.contains("model =") && chunk.contains("[rates]"))
            .collect();
        assert_eq!(presets.len(), 4, "expected one preset per model kind");
        for preset in presets {
            let cfg = parse_config(preset).unwrap_or_else(|e| {
                panic!("preset does not parse: {e}\n{preset}")
            });
            let grid = cfg.model.grid(cfg.solver.n_cells.min(64)).unwrap();
            let r0 = net_reproduction(&cfg.model, grid, Environment::origin()).unwrap();
            assert!(r0 > 1.0, "{} preset is subcritical", cfg.model.kind_name());
        }
    }
}
