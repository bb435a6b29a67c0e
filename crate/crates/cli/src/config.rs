//! Line-oriented `key = value` configuration with `[section]` headers.
//!
//! Every key has a type and either a default or is required. Parsing
//! resolves all defaults, so two texts that resolve to the same settings
//! hash identically.

use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    GapSolve,
    GffSample,
    McmcRun,
    ThermoIntegrate,
    Analyze,
    VerifyIdentities,
    Scan,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::GapSolve,
        Experiment::GffSample,
        Experiment::McmcRun,
        Experiment::ThermoIntegrate,
        Experiment::Analyze,
        Experiment::VerifyIdentities,
        Experiment::Scan,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::GapSolve => "gap-solve",
            Experiment::GffSample => "gff-sample",
            Experiment::McmcRun => "mcmc-run",
            Experiment::ThermoIntegrate => "thermo-integrate",
            Experiment::Analyze => "analyze",
            Experiment::VerifyIdentities => "verify-identities",
            Experiment::Scan => "scan",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Float(f64),
    UInt(u64),
    Text(String),
    Floats(Vec<f64>),
    UInts(Vec<u64>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // {:?} on f64 is the shortest round-trip form
        match self {
            Value::Float(x) => write!(f, "{x:?}"),
            Value::UInt(x) => write!(f, "{x}"),
            Value::Text(s) => write!(f, "{s}"),
            Value::Floats(v) => write!(
                f,
                "{}",
                v.iter()
                    .map(|x| format!("{x:?}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
            Value::UInts(v) => write!(
                f,
                "{}",
                v.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Float,
    UInt,
    Choice(&'static [&'static str]),
    Text,
    Floats,
    UInts,
}

impl Kind {
    fn describe(&self) -> String {
        match self {
            Kind::Float => "a real number".into(),
            Kind::UInt => "a non-negative integer".into(),
            Kind::Choice(c) => format!("one of {}", c.join(", ")),
            Kind::Text => "text".into(),
            Kind::Floats => "a comma-separated list of real numbers".into(),
            Kind::UInts => "a comma-separated list of non-negative integers".into(),
        }
    }

    fn parse(&self, raw: &str) -> Option<Value> {
        fn list(raw: &str) -> Vec<&str> {
            raw.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .collect()
        }
        match self {
            Kind::Float => raw
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(Value::Float),
            Kind::UInt => raw.parse().ok().map(Value::UInt),
            Kind::Choice(c) => c.contains(&raw).then(|| Value::Text(raw.to_string())),
            Kind::Text => (!raw.is_empty()).then(|| Value::Text(raw.to_string())),
            Kind::Floats => {
                let items = list(raw);
                let v: Option<Vec<f64>> = items
                    .iter()
                    .map(|s| s.parse::<f64>().ok().filter(|x| x.is_finite()))
                    .collect();
                v.filter(|v| !v.is_empty()).map(Value::Floats)
            }
            Kind::UInts => {
                let items = list(raw);
                let v: Option<Vec<u64>> = items.iter().map(|s| s.parse().ok()).collect();
                v.filter(|v| !v.is_empty()).map(Value::UInts)
            }
        }
    }
}

enum Default {
    Required,
    /// Resolved from other keys after parsing.
    Derived,
    Optional,
    Is(&'static str),
}

struct KeySpec {
    section: &'static str,
    key: &'static str,
    kind: Kind,
    default: Default,
}

const EXPERIMENTS: &[&str] = &[
    "gap-solve",
    "gff-sample",
    "mcmc-run",
    "thermo-integrate",
    "analyze",
    "verify-identities",
    "scan",
];

const SCHEMA: &[KeySpec] = &[
    KeySpec {
        section: "run",
        key: "experiment",
        kind: Kind::Choice(EXPERIMENTS),
        default: Default::Derived,
    },
    KeySpec {
        section: "run",
        key: "seed",
        kind: Kind::UInt,
        default: Default::Is("1"),
    },
    KeySpec {
        section: "run",
        key: "output",
        kind: Kind::Text,
        default: Default::Derived,
    },
    KeySpec {
        section: "run",
        key: "format_version",
        kind: Kind::UInt,
        default: Default::Is("1"),
    },
    KeySpec {
        section: "model",
        key: "lambda",
        kind: Kind::Float,
        default: Default::Required,
    },
    KeySpec {
        section: "model",
        key: "beta",
        kind: Kind::Float,
        default: Default::Is("0"),
    },
    KeySpec {
        section: "model",
        key: "components",
        kind: Kind::UInt,
        default: Default::Is("4"),
    },
    KeySpec {
        section: "model",
        key: "side_length",
        kind: Kind::Float,
        default: Default::Is("8"),
    },
    KeySpec {
        section: "model",
        key: "grid_points",
        kind: Kind::UInt,
        default: Default::Is("32"),
    },
    KeySpec {
        section: "model",
        key: "counterterm",
        kind: Kind::Choice(&["lattice-tadpole", "cutoff-eta"]),
        default: Default::Is("lattice-tadpole"),
    },
    KeySpec {
        section: "model",
        key: "mass",
        kind: Kind::Float,
        default: Default::Optional,
    },
    KeySpec {
        section: "schedule",
        key: "thermalization",
        kind: Kind::UInt,
        default: Default::Is("300"),
    },
    KeySpec {
        section: "schedule",
        key: "measurements",
        kind: Kind::UInt,
        default: Default::Is("1000"),
    },
    KeySpec {
        section: "schedule",
        key: "stride",
        kind: Kind::UInt,
        default: Default::Is("1"),
    },
    KeySpec {
        section: "schedule",
        key: "checkpoint_every",
        kind: Kind::UInt,
        default: Default::Is("500"),
    },
    KeySpec {
        section: "schedule",
        key: "observables",
        kind: Kind::Text,
        default: Default::Is("wick_norm2, norm2, quartic_action, magnetization2"),
    },
    KeySpec {
        section: "gap",
        key: "lambdas",
        kind: Kind::Floats,
        default: Default::Derived,
    },
    KeySpec {
        section: "gap",
        key: "betas",
        kind: Kind::Floats,
        default: Default::Derived,
    },
    KeySpec {
        section: "gap",
        key: "side_lengths",
        kind: Kind::Floats,
        default: Default::Derived,
    },
    KeySpec {
        section: "gap",
        key: "tolerance",
        kind: Kind::Float,
        default: Default::Is("1e-12"),
    },
    KeySpec {
        section: "sample",
        key: "count",
        kind: Kind::UInt,
        default: Default::Is("200"),
    },
    KeySpec {
        section: "thermo",
        key: "levels",
        kind: Kind::UInt,
        default: Default::Is("4"),
    },
    KeySpec {
        section: "analysis",
        key: "correlator",
        kind: Kind::Choice(&["slice", "point"]),
        default: Default::Is("slice"),
    },
    KeySpec {
        section: "analysis",
        key: "axis",
        kind: Kind::Choice(&["0", "1", "both"]),
        default: Default::Is("both"),
    },
    KeySpec {
        section: "analysis",
        key: "fit_window",
        kind: Kind::UInts,
        default: Default::Optional,
    },
    KeySpec {
        section: "analysis",
        key: "smear_radius",
        kind: Kind::Float,
        default: Default::Is("2"),
    },
    KeySpec {
        section: "scan",
        key: "kind",
        kind: Kind::Choice(&["beta", "components"]),
        default: Default::Is("beta"),
    },
    KeySpec {
        section: "scan",
        key: "betas",
        kind: Kind::Floats,
        default: Default::Is("0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1"),
    },
    KeySpec {
        section: "scan",
        key: "components",
        kind: Kind::UInts,
        default: Default::Is("2, 4, 8, 16"),
    },
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: cannot parse {text:?}; expected `[section]` or `key = value`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown section [{section}]{}", hint(.suggestion))]
    UnknownSection {
        line: usize,
        section: String,
        suggestion: Option<String>,
    },
    #[error("line {line}: unknown key {key:?} in [{section}]{}", hint(.suggestion))]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
        suggestion: Option<String>,
    },
    #[error("line {line}: key {key:?} appears before any [section]")]
    NoSection { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?} (first set on line {first})")]
    Duplicate {
        line: usize,
        key: String,
        first: usize,
    },
    #[error("line {line}: {section}.{key} = {value:?} is not {expected}")]
    TypeMismatch {
        line: usize,
        section: String,
        key: String,
        value: String,
        expected: String,
    },
    #[error("line {line}: missing required key {section}.{key}")]
    Missing {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

fn hint(s: &Option<String>) -> String {
    s.as_ref()
        .map(|s| format!("; did you mean {s:?}?"))
        .unwrap_or_default()
}

impl ConfigError {
    pub fn line(&self) -> usize {
        match self {
            ConfigError::Syntax { line, .. }
            | ConfigError::UnknownSection { line, .. }
            | ConfigError::UnknownKey { line, .. }
            | ConfigError::NoSection { line, .. }
            | ConfigError::Duplicate { line, .. }
            | ConfigError::TypeMismatch { line, .. }
            | ConfigError::Missing { line, .. }
            | ConfigError::Invalid { line, .. } => *line,
        }
    }
}

fn nearest<'a>(word: &str, candidates: impl Iterator<Item = &'a str>) -> Option<String> {
    candidates
        .map(|c| (strsim::jaro_winkler(word, c), c))
        .filter(|(s, _)| *s > 0.7)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c.to_string())
}

/// A fully resolved configuration. `values` holds every schema key that has
/// a value after defaults; `lines` records where explicit keys were set.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<(String, String), Value>,
    lines: BTreeMap<(String, String), usize>,
    /// Keys filled from defaults rather than the text.
    pub defaulted: Vec<String>,
}

impl RunConfig {
    fn get(&self, section: &str, key: &str) -> Option<&Value> {
        self.values.get(&(section.to_string(), key.to_string()))
    }

    pub fn f64(&self, section: &str, key: &str) -> f64 {
        match self.get(section, key) {
            Some(Value::Float(x)) => *x,
            other => panic!("{section}.{key} is not a resolved real: {other:?}"),
        }
    }

    pub fn opt_f64(&self, section: &str, key: &str) -> Option<f64> {
        match self.get(section, key) {
            Some(Value::Float(x)) => Some(*x),
            _ => None,
        }
    }

    pub fn u64(&self, section: &str, key: &str) -> u64 {
        match self.get(section, key) {
            Some(Value::UInt(x)) => *x,
            other => panic!("{section}.{key} is not a resolved integer: {other:?}"),
        }
    }

    pub fn text(&self, section: &str, key: &str) -> &str {
        match self.get(section, key) {
            Some(Value::Text(s)) => s,
            other => panic!("{section}.{key} is not resolved text: {other:?}"),
        }
    }

    pub fn floats(&self, section: &str, key: &str) -> &[f64] {
        match self.get(section, key) {
            Some(Value::Floats(v)) => v,
            other => panic!("{section}.{key} is not a resolved list: {other:?}"),
        }
    }

    pub fn opt_uints(&self, section: &str, key: &str) -> Option<&[u64]> {
        match self.get(section, key) {
            Some(Value::UInts(v)) => Some(v),
            _ => None,
        }
    }

    pub fn uints(&self, section: &str, key: &str) -> &[u64] {
        self.opt_uints(section, key)
            .unwrap_or_else(|| panic!("{section}.{key} is not a resolved list"))
    }

    pub fn experiment(&self) -> Experiment {
        Experiment::parse(self.text("run", "experiment")).expect("validated")
    }

    pub fn seed(&self) -> u64 {
        self.u64("run", "seed")
    }

    pub fn output(&self) -> &str {
        self.text("run", "output")
    }

    /// Line where a key was set explicitly, if it was.
    pub fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        self.lines
            .get(&(section.to_string(), key.to_string()))
            .copied()
    }

    pub fn set(&mut self, section: &str, key: &str, value: Value) {
        self.values
            .insert((section.to_string(), key.to_string()), value);
    }

    /// Canonical text: sections and keys in sorted order, one `key = value`
    /// per line. The output directory is a location, not a setting, and is
    /// left out.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for ((section, key), value) in &self.values {
            if section == "run" && key == "output" {
                continue;
            }
            if section != current {
                out.push_str(&format!("[{section}]\n"));
                current = section;
            }
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }

    /// The full canonical text including the output directory, as written
    /// next to the run's outputs.
    pub fn resolved_text(&self) -> String {
        format!(
            "# config_hash = {}\n# run.output = {}\n{}",
            self.hash(),
            self.output(),
            self.canonical()
        )
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parse and resolve a configuration. `experiment` fills `run.experiment`
/// when the text leaves it out and must agree with it otherwise.
pub fn parse_config(text: &str, experiment: Option<Experiment>) -> Result<RunConfig, ConfigError> {
    let sections: Vec<&str> = {
        let mut s: Vec<&str> = SCHEMA.iter().map(|k| k.section).collect();
        s.dedup();
        s
    };
    let mut values = BTreeMap::new();
    let mut lines = BTreeMap::new();
    let mut section: Option<(String, usize)> = None;
    let mut section_lines: BTreeMap<String, usize> = BTreeMap::new();
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name =
                rest.strip_suffix(']')
                    .map(str::trim)
                    .ok_or_else(|| ConfigError::Syntax {
                        line,
                        text: raw.to_string(),
                    })?;
            if !sections.contains(&name) {
                return Err(ConfigError::UnknownSection {
                    line,
                    section: name.to_string(),
                    suggestion: nearest(name, sections.iter().copied()),
                });
            }
            section_lines.entry(name.to_string()).or_insert(line);
            section = Some((name.to_string(), line));
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            text: raw.to_string(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                text: raw.to_string(),
            });
        }
        let Some((sec, _)) = &section else {
            return Err(ConfigError::NoSection {
                line,
                key: key.to_string(),
            });
        };
        let Some(spec) = SCHEMA.iter().find(|k| k.section == sec && k.key == key) else {
            return Err(ConfigError::UnknownKey {
                line,
                section: sec.clone(),
                key: key.to_string(),
                suggestion: nearest(
                    key,
                    SCHEMA.iter().filter(|k| k.section == sec).map(|k| k.key),
                ),
            });
        };
        let id = (sec.clone(), key.to_string());
        if let Some(first) = lines.get(&id) {
            return Err(ConfigError::Duplicate {
                line,
                key: key.to_string(),
                first: *first,
            });
        }
        let parsed = spec
            .kind
            .parse(value)
            .ok_or_else(|| ConfigError::TypeMismatch {
                line,
                section: sec.clone(),
                key: key.to_string(),
                value: value.to_string(),
                expected: spec.kind.describe(),
            })?;
        values.insert(id.clone(), parsed);
        lines.insert(id, line);
    }

    let mut defaulted = Vec::new();
    let at = |sec: &str| section_lines.get(sec).copied().unwrap_or(last_line.max(1));
    // experiment first: other derived defaults depend on it
    let exp_id = ("run".to_string(), "experiment".to_string());
    match (values.get(&exp_id), experiment) {
        (None, Some(e)) => {
            values.insert(exp_id.clone(), Value::Text(e.name().to_string()));
            defaulted.push("run.experiment".to_string());
        }
        (None, None) => {
            return Err(ConfigError::Missing {
                line: at("run"),
                section: "run".into(),
                key: "experiment".into(),
            })
        }
        (Some(Value::Text(given)), Some(e)) if given != e.name() => {
            return Err(ConfigError::Invalid {
                line: lines[&exp_id],
                message: format!("run.experiment = {given} but the command is {}", e.name()),
            })
        }
        _ => {}
    }
    let exp = match &values[&exp_id] {
        Value::Text(s) => Experiment::parse(s).expect("validated choice"),
        _ => unreachable!(),
    };
    for spec in SCHEMA {
        let id = (spec.section.to_string(), spec.key.to_string());
        if values.contains_key(&id) {
            continue;
        }
        match spec.default {
            Default::Is(raw) => {
                values.insert(id, spec.kind.parse(raw).expect("schema defaults parse"));
                defaulted.push(format!("{}.{}", spec.section, spec.key));
            }
            Default::Required => {
                if exp != Experiment::VerifyIdentities {
                    return Err(ConfigError::Missing {
                        line: at(spec.section),
                        section: spec.section.into(),
                        key: spec.key.into(),
                    });
                }
            }
            Default::Optional | Default::Derived => {}
        }
    }
    let model = |k: &str| match values.get(&("model".to_string(), k.to_string())) {
        Some(Value::Float(x)) => Some(*x),
        _ => None,
    };
    let mut derived = vec![("run", "output", Value::Text(format!("runs/{}", exp.name())))];
    if let (Some(lambda), Some(beta), Some(side)) =
        (model("lambda"), model("beta"), model("side_length"))
    {
        derived.push(("gap", "lambdas", Value::Floats(vec![lambda])));
        derived.push(("gap", "betas", Value::Floats(vec![beta])));
        derived.push(("gap", "side_lengths", Value::Floats(vec![side])));
    }
    for (sec, key, v) in derived {
        let id = (sec.to_string(), key.to_string());
        if !values.contains_key(&id) {
            values.insert(id, v);
            defaulted.push(format!("{sec}.{key}"));
        }
    }
    let cfg = RunConfig {
        values,
        lines,
        defaulted,
    };
    validate(&cfg, exp)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig, exp: Experiment) -> Result<(), ConfigError> {
    let line = |s: &str, k: &str| cfg.line_of(s, k).unwrap_or(0);
    let fail = |s: &str, k: &str, message: String| {
        Err(ConfigError::Invalid {
            line: line(s, k),
            message,
        })
    };
    if cfg.u64("run", "format_version") != FORMAT_VERSION {
        return fail(
            "run",
            "format_version",
            format!("format_version must be {FORMAT_VERSION}"),
        );
    }
    if exp == Experiment::VerifyIdentities {
        return Ok(());
    }
    let lambda = cfg.f64("model", "lambda");
    if lambda < 0.0 {
        return fail(
            "model",
            "lambda",
            format!("lambda must be >= 0, got {lambda}"),
        );
    }
    if cfg.u64("model", "components") == 0 {
        return fail(
            "model",
            "components",
            "components must be at least 1".into(),
        );
    }
    let n = cfg.u64("model", "grid_points");
    if n < 4 || n % 2 == 1 {
        return fail(
            "model",
            "grid_points",
            format!("grid_points must be even and at least 4, got {n}"),
        );
    }
    if cfg.f64("model", "side_length") <= 0.0 {
        return fail(
            "model",
            "side_length",
            "side_length must be positive".into(),
        );
    }
    if let Some(m) = cfg.opt_f64("model", "mass") {
        if m <= 0.0 {
            return fail("model", "mass", format!("mass must be positive, got {m}"));
        }
    }
    if lambda == 0.0
        && cfg.opt_f64("model", "mass").is_none()
        && matches!(
            exp,
            Experiment::McmcRun | Experiment::Analyze | Experiment::GffSample
        )
    {
        return fail(
            "model",
            "lambda",
            "lambda = 0 needs an explicit model.mass".into(),
        );
    }
    if cfg.u64("schedule", "measurements") == 0
        || cfg.u64("schedule", "stride") == 0
        || cfg.u64("schedule", "checkpoint_every") == 0
    {
        return fail(
            "schedule",
            "measurements",
            "measurements, stride and checkpoint_every must be positive".into(),
        );
    }
    for name in cfg
        .text("schedule", "observables")
        .split(',')
        .map(str::trim)
    {
        if sigma_core::mcmc::Observable::parse(name).is_none() {
            let names = sigma_core::mcmc::Observable::ALL.map(|o| o.name());
            return fail(
                "schedule",
                "observables",
                format!(
                    "unknown observable {name:?}{}",
                    hint(&nearest(name, names.iter().copied()))
                ),
            );
        }
    }
    if let Some(w) = cfg.opt_uints("analysis", "fit_window") {
        if w.len() != 2 || w[0] >= w[1] || w[1] >= n {
            return fail(
                "analysis",
                "fit_window",
                format!("fit_window must be two increasing grid offsets below {n}"),
            );
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[model]\nlambda = 1\nbeta = 0.5\n";

    #[test]
    fn minimal_gap_config_resolves_defaults() {
        let c = parse_config(MINIMAL, Some(Experiment::GapSolve)).unwrap();
        assert_eq!(c.u64("model", "components"), 4);
        assert_eq!(c.floats("gap", "lambdas"), &[1.0]);
        assert_eq!(c.output(), "runs/gap-solve");
        assert!(c.defaulted.contains(&"model.grid_points".to_string()));
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn hash_is_stable_and_ignores_layout() {
        let a = parse_config(MINIMAL, Some(Experiment::GapSolve)).unwrap();
        let b = parse_config(MINIMAL, Some(Experiment::GapSolve)).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = parse_config(
            "# comment\n[model]\n  beta=0.5 \nlambda = 1.0\n[model]\ncomponents = 4\n",
            Some(Experiment::GapSolve),
        )
        .unwrap();
        assert_eq!(a.hash(), c.hash());
        let d = parse_config(
            "[model]\nlambda = 1\nbeta = 0.25\n",
            Some(Experiment::GapSolve),
        )
        .unwrap();
        assert_ne!(a.hash(), d.hash());
    }

    #[test]
    fn unknown_key_names_the_nearest() {
        let e = parse_config("[model]\nlamda = 1\n", Some(Experiment::GapSolve)).unwrap_err();
        assert_eq!(
            e,
            ConfigError::UnknownKey {
                line: 2,
                section: "model".into(),
                key: "lamda".into(),
                suggestion: Some("lambda".into())
            }
        );
        assert!(e.to_string().contains("did you mean \"lambda\""));
        let e = parse_config("[modle]\n", None).unwrap_err();
        assert!(
            matches!(e, ConfigError::UnknownSection { line: 1, suggestion: Some(ref s), .. } if s == "model")
        );
    }

    #[test]
    fn type_and_missing_errors_carry_lines() {
        let e = parse_config(
            "[model]\nlambda = 1\ncomponents = four\n",
            Some(Experiment::McmcRun),
        )
        .unwrap_err();
        assert!(matches!(e, ConfigError::TypeMismatch { line: 3, .. }));
        let e = parse_config(
            "[run]\nseed = 3\n[model]\nbeta = 0\n",
            Some(Experiment::GapSolve),
        )
        .unwrap_err();
        assert_eq!(
            e,
            ConfigError::Missing {
                line: 3,
                section: "model".into(),
                key: "lambda".into()
            }
        );
        let e = parse_config(
            "[model]\nlambda = 1\nlambda = 2\n",
            Some(Experiment::GapSolve),
        )
        .unwrap_err();
        assert_eq!(e.line(), 3);
        assert!(matches!(
            parse_config("lambda = 1\n", None),
            Err(ConfigError::NoSection { line: 1, .. })
        ));
        assert!(matches!(
            parse_config("[model]\njunk\n", None),
            Err(ConfigError::Syntax { line: 2, .. })
        ));
    }

    #[test]
    fn experiment_must_agree_with_command() {
        let e = parse_config(
            "[run]\nexperiment = scan\n[model]\nlambda = 1\n",
            Some(Experiment::GapSolve),
        )
        .unwrap_err();
        assert!(matches!(e, ConfigError::Invalid { line: 2, .. }));
        assert!(parse_config("[run]\nexperiment = scan\n[model]\nlambda = 1\n", None).is_ok());
        assert!(parse_config("", Some(Experiment::VerifyIdentities)).is_ok());
    }

    #[test]
    fn semantic_validation() {
        assert!(parse_config("[model]\nlambda = 0\n", Some(Experiment::McmcRun)).is_err());
        assert!(parse_config(
            "[model]\nlambda = 0\nmass = 0.5\n",
            Some(Experiment::McmcRun)
        )
        .is_ok());
        let e = parse_config(
            "[model]\nlambda = 1\n[schedule]\nobservables = norm2, wick_nrom2\n",
            Some(Experiment::McmcRun),
        )
        .unwrap_err();
        assert!(e.to_string().contains("wick_norm2"), "{e}");
        assert!(parse_config(
            "[model]\nlambda = 1\ngrid_points = 31\n",
            Some(Experiment::McmcRun)
        )
        .is_err());
    }
}
