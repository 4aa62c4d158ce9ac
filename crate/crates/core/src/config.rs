//! Plain-text run configuration.
//!
//! The format is a flat key-value document with three optional sections:
//!
//! ```text
//! # comment to end of line
//! model = juvenile-adult
//!
//! [structure]
//! l = 1
//! m = 2
//!
//! [rates]
//! beta = 3 * indicator(1, 2, s) / (1 + E1 + E2)
//! mu = 0
//! gamma = 1
//!
//! [solver]
//! method = irreducible
//! n_cells = 2000
//! ```
//!
//! The top-level `model` line selects the kind: `juvenile-adult`,
//! `consumer-resource`, `early-human` or `selection-mutation`. Each kind
//! has its own required structural constants and rate roles; rates are
//! arithmetic expressions over the structure variable and the environment
//! components. Unknown sections or keys are rejected so typos surface
//! immediately. The raw text is carried along verbatim for result echoing.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::expr::RateExpression;
use crate::fixedpoint::{SolveMethod, SolveParams};
use crate::model::{
    ConsumerResourceModel, EarlyHumanModel, JuvenileAdultModel, Kernel2, RateField, RateField2,
    ScalarMap, SelectionMutationModel, StructuredModel, VariableLayout,
};

/// Solver knobs with their defaults.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub method: SolveMethod,
    pub n_cells: usize,
    pub n_rays: usize,
    pub r_max: f64,
    pub tol: f64,
    pub damping: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: SolveMethod::Irreducible,
            n_cells: 2000,
            n_rays: 257,
            r_max: 10.0,
            tol: 1e-8,
            damping: 0.5,
            max_iter: 100_000,
        }
    }
}

impl SolverConfig {
    pub fn params(&self) -> SolveParams {
        SolveParams {
            n_cells: self.n_cells,
            n_rays: self.n_rays,
            r_max: self.r_max,
            tol: self.tol,
            damping: self.damping,
            max_iter: self.max_iter,
        }
    }
}

/// A parsed run: the model, the solver knobs, and the verbatim source
/// text for echoing into results.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: StructuredModel,
    pub solver: SolverConfig,
    pub echo: String,
}

type Section = BTreeMap<String, String>;

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn split_lines(text: &str) -> Result<(Section, BTreeMap<String, Section>)> {
    let mut top = Section::new();
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| {
                Error::Config(format!("line {line_no}: unterminated section header"))
            })?;
            let name = name.trim();
            if !matches!(name, "structure" | "rates" | "solver") {
                return Err(Error::Config(format!(
                    "line {line_no}: unknown section [{name}]; expected [structure], [rates] or [solver]"
                )));
            }
            if sections.contains_key(name) {
                return Err(Error::Config(format!(
                    "line {line_no}: duplicate section [{name}]"
                )));
            }
            sections.insert(name.to_string(), Section::new());
            current = Some(name.to_string());
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "line {line_no}: expected `key = value` or `[section]`, got {line:?}"
            ))
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(Error::Config(format!(
                "line {line_no}: empty key or value in {line:?}"
            )));
        }
        let target = match &current {
            Some(name) => sections.get_mut(name).expect("section just inserted"),
            None => &mut top,
        };
        if target.insert(key.to_string(), value.to_string()).is_some() {
            return Err(Error::Config(format!(
                "line {line_no}: duplicate key `{key}`"
            )));
        }
    }
    Ok((top, sections))
}

fn take_value(section: &mut Section, key: &str, context: &str) -> Result<String> {
    section
        .remove(key)
        .ok_or_else(|| Error::Config(format!("missing `{key}` in {context}")))
}

fn take_f64(section: &mut Section, key: &str, context: &str) -> Result<f64> {
    let text = take_value(section, key, context)?;
    text.parse::<f64>()
        .map_err(|_| Error::Config(format!("`{key}` in {context} is not a number: {text:?}")))
}

fn take_usize(section: &mut Section, key: &str, context: &str) -> Result<usize> {
    let text = take_value(section, key, context)?;
    text.parse::<usize>()
        .map_err(|_| Error::Config(format!("`{key}` in {context} is not a count: {text:?}")))
}

fn parse_expr(text: &str, key: &str) -> Result<RateExpression> {
    RateExpression::parse(text).map_err(|e| {
        Error::Config(format!(
            "rate `{key}`: parse error at position {}: expected {}",
            e.position, e.expected
        ))
    })
}

fn take_rate(section: &mut Section, key: &str, layout: &VariableLayout) -> Result<RateField> {
    let text = take_value(section, key, "[rates]")?;
    RateField::from_expr(key, &parse_expr(&text, key)?, layout)
}

fn take_rate2(section: &mut Section, key: &str) -> Result<RateField2> {
    let text = take_value(section, key, "[rates]")?;
    RateField2::from_expr(key, &parse_expr(&text, key)?)
}

fn reject_leftovers(section: &Section, context: &str) -> Result<()> {
    if section.is_empty() {
        return Ok(());
    }
    let keys: Vec<&str> = section.keys().map(|k| k.as_str()).collect();
    Err(Error::Config(format!(
        "unknown key(s) in {context}: {}",
        keys.join(", ")
    )))
}

fn build_model(kind: &str, structure: &mut Section, rates: &mut Section) -> Result<StructuredModel> {
    match kind {
        "juvenile-adult" => {
            let l = take_f64(structure, "l", "[structure]")?;
            let m = take_f64(structure, "m", "[structure]")?;
            let layout = VariableLayout::juvenile_adult();
            let beta = take_rate(rates, "beta", &layout)?;
            let mu = take_rate(rates, "mu", &layout)?;
            let gamma = take_rate(rates, "gamma", &layout)?;
            Ok(StructuredModel::JuvenileAdult(JuvenileAdultModel::new(
                l, m, beta, mu, gamma,
            )?))
        }
        "consumer-resource" => {
            let m = take_f64(structure, "m", "[structure]")?;
            let layout = VariableLayout::consumer_resource();
            let beta = take_rate(rates, "beta", &layout)?;
            let mu = take_rate(rates, "mu", &layout)?;
            let gamma = take_rate(rates, "gamma", &layout)?;
            let feeding = take_rate(rates, "feeding", &layout)?;
            let growth_text = take_value(rates, "resource_growth", "[rates]")?;
            let resource_growth =
                ScalarMap::from_expr("resource_growth", &parse_expr(&growth_text, "resource_growth")?)?;
            Ok(StructuredModel::ConsumerResource(ConsumerResourceModel::new(
                m,
                beta,
                mu,
                gamma,
                feeding,
                resource_growth,
            )?))
        }
        "early-human" => {
            let a_j = take_f64(structure, "a_j", "[structure]")?;
            let a_r = take_f64(structure, "a_r", "[structure]")?;
            let a_max = take_f64(structure, "a_max", "[structure]")?;
            let layout = VariableLayout::early_human();
            let beta = take_rate(rates, "beta", &layout)?;
            let f = take_rate(rates, "f", &layout)?;
            let eta = take_rate(rates, "eta", &layout)?;
            let mu = take_rate(rates, "mu", &layout)?;
            Ok(StructuredModel::EarlyHuman(EarlyHumanModel::new(
                a_j, a_r, a_max, beta, f, eta, mu,
            )?))
        }
        "selection-mutation" => {
            let a_m = take_f64(structure, "a_m", "[structure]")?;
            let beta = take_rate2(rates, "beta")?;
            let mu = take_rate2(rates, "mu")?;
            let kernel_text = take_value(rates, "kernel", "[rates]")?;
            let kernel = Kernel2::from_expr("kernel", &parse_expr(&kernel_text, "kernel")?)?;
            Ok(StructuredModel::SelectionMutation(SelectionMutationModel::new(
                a_m, beta, mu, kernel,
            )?))
        }
        other => Err(Error::Config(format!(
            "unknown model kind {other:?}; expected juvenile-adult, consumer-resource, early-human or selection-mutation"
        ))),
    }
}

fn build_solver(section: &mut Section) -> Result<SolverConfig> {
    let mut solver = SolverConfig::default();
    if let Some(text) = section.remove("method") {
        solver.method = text.parse()?;
    }
    if section.contains_key("n_cells") {
        solver.n_cells = take_usize(section, "n_cells", "[solver]")?;
    }
    if section.contains_key("n_rays") {
        solver.n_rays = take_usize(section, "n_rays", "[solver]")?;
    }
    if section.contains_key("r_max") {
        solver.r_max = take_f64(section, "r_max", "[solver]")?;
    }
    if section.contains_key("tol") {
        solver.tol = take_f64(section, "tol", "[solver]")?;
    }
    if section.contains_key("damping") {
        solver.damping = take_f64(section, "damping", "[solver]")?;
    }
    if section.contains_key("max_iter") {
        solver.max_iter = take_usize(section, "max_iter", "[solver]")?;
    }
    if !(solver.n_rays >= 2) {
        return Err(Error::Config("n_rays must be at least 2".into()));
    }
    if !(solver.r_max > 0.0 && solver.tol > 0.0) {
        return Err(Error::Config(
            "r_max and tol must be positive".into(),
        ));
    }
    Ok(solver)
}

/// Parses a configuration document into a model plus solver settings.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let (mut top, mut sections) = split_lines(text)?;
    let kind = take_value(&mut top, "model", "the top level")?;
    reject_leftovers(&top, "the top level")?;

    let mut structure = sections.remove("structure").unwrap_or_default();
    let mut rates = sections.remove("rates").unwrap_or_default();
    let mut solver_section = sections.remove("solver").unwrap_or_default();

    let model = build_model(&kind, &mut structure, &mut rates)?;
    reject_leftovers(&structure, "[structure]")?;
    reject_leftovers(&rates, "[rates]")?;

    let solver = build_solver(&mut solver_section)?;
    reject_leftovers(&solver_section, "[solver]")?;

    Ok(RunConfig {
        model,
        solver,
        echo: text.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Environment;

    const JA_TEXT: &str = "\
# symmetric two-stage test model
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
";

    #[test]
    fn parses_a_complete_document() {
        let cfg = parse_config(JA_TEXT).unwrap();
        assert_eq!(cfg.model.kind_name(), "juvenile-adult");
        assert_eq!(cfg.solver.n_cells, 400);
        assert_eq!(cfg.solver.n_rays, 257);
        assert_eq!(cfg.solver.method, SolveMethod::Irreducible);
        assert_eq!(cfg.echo, JA_TEXT);
        // the parsed beta reacts to the environment
        if let StructuredModel::JuvenileAdult(m) = &cfg.model {
            let v = m.beta.eval(1.5, Environment::new(1.0, 1.0)).unwrap();
            assert!((v - 1.0).abs() <= 1e-12);
            let v = m.beta.eval(0.5, Environment::new(1.0, 1.0)).unwrap();
            assert_eq!(v, 0.0);
        } else {
            panic!("wrong model kind");
        }
    }

    #[test]
    fn rejects_unknown_keys_and_sections() {
        let err = parse_config("model = juvenile-adult\n[weird]\nx = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let text = JA_TEXT.replace("[solver]", "[solver]\nbogus = 3");
        let err = parse_config(&text).unwrap_err();
        assert!(format!("{err}").contains("bogus"), "got {err}");
    }

    #[test]
    fn rejects_missing_roles() {
        let text = "model = juvenile-adult\n[structure]\nl = 1\nm = 2\n[rates]\nbeta = 1\nmu = 0\n";
        let err = parse_config(text).unwrap_err();
        assert!(format!("{err}").contains("gamma"), "got {err}");
    }

    #[test]
    fn reports_expression_errors_with_position() {
        let text = JA_TEXT.replace("mu = 0", "mu = 3/(1+");
        let err = parse_config(&text).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("mu") && msg.contains("position"), "got {msg}");
    }

    #[test]
    fn parses_the_other_model_kinds() {
        let cr = "\
model = consumer-resource
[structure]
m = 1
[rates]
beta = 3 / (1 + E1)
mu = 0
gamma = 1
feeding = 1
resource_growth = 3 - Q
";
        let cfg = parse_config(cr).unwrap();
        assert_eq!(cfg.model.kind_name(), "consumer-resource");

        let eh = "\
model = early-human
[structure]
a_j = 1
a_r = 2
a_max = 3
[rates]
beta = 3 * indicator(1, 2, a)
f = 0
eta = 1
mu = indicator(0, 1, a)
";
        let cfg = parse_config(eh).unwrap();
        assert_eq!(cfg.model.kind_name(), "early-human");

        let sm = "\
model = selection-mutation
[structure]
a_m = 2
[rates]
beta = 3 / (1 + E1 + E2)
mu = 0
kernel = 1 / 2
";
        let cfg = parse_config(sm).unwrap();
        assert_eq!(cfg.model.kind_name(), "selection-mutation");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored(){
        let text = "  # leading comment\nmodel = juvenile-adult # trailing\n\n[structure]\nl = 1\nm = 2\n[rates]\nbeta = 1\nmu = 0\ngamma = 1\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.model.kind_name(), "juvenile-adult");
    }
}
