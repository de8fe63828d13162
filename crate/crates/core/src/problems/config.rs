//! Flat `key = value` problem documents.
//!
//! ```text
//! # comment
//! label = scalar-affine
//! omega = 1
//! steps_M = 16
//! tau = 0.25
//! nonlinearity.kind = affine
//! nonlinearity.C1 = 0.3
//! nonlinearity.C2 = 0.2
//! forcing.a = 1
//! forcing.b = 0
//! forcing.phase = 0
//! generator.matrix = 1
//! ```
//!
//! The generator is given either inline (`generator.matrix`, rows separated
//! by `;`, entries by `,`) or by the `elliptic.*` group.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nonlinearity::{Forcing, NonlinearityKind, NonlinearitySpec};
use crate::operators::Generator;
use crate::periodic::DelayRead;

use super::elliptic::{discretize_laplacian_1d, first_eigenfunction, Boundary, EllipticSpec1D};

const REQUIRED: &[&str] = &[
    "label",
    "omega",
    "steps_M",
    "tau",
    "nonlinearity.kind",
    "nonlinearity.C1",
    "nonlinearity.C2",
    "forcing.a",
    "forcing.b",
    "forcing.phase",
];
const MATRIX_KEYS: &[&str] = &["generator.matrix"];
const ELLIPTIC_KEYS: &[&str] = &[
    "elliptic.n",
    "elliptic.L",
    "elliptic.diffusion",
    "elliptic.a0",
    "elliptic.boundary",
];
const OPTIONAL: &[&str] = &["interpolate_delay", "seed"];

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorSource {
    Matrix(Vec<Vec<f64>>),
    Elliptic(EllipticSpec1D),
}

impl GeneratorSource {
    pub fn build(&self) -> Result<Generator> {
        match self {
            GeneratorSource::Matrix(rows) => Generator::from_rows(rows),
            GeneratorSource::Elliptic(spec) => discretize_laplacian_1d(spec),
        }
    }
}

/// Raw problem parameters, before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub label: String,
    pub omega: f64,
    pub steps_m: usize,
    pub tau: f64,
    pub kind: NonlinearityKind,
    pub c1: f64,
    pub c2: f64,
    pub forcing_a: f64,
    pub forcing_b: f64,
    pub forcing_phase: f64,
    pub generator: GeneratorSource,
    pub interpolate_delay: bool,
    pub seed: u64,
}

/// A validated problem instance.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub label: String,
    pub generator_source: GeneratorSource,
    pub nonlinearity: NonlinearitySpec,
    pub omega: f64,
    pub steps_m: usize,
    pub interpolate_delay: bool,
    pub seed: u64,
    generator: Generator,
}

impl ProblemSpec {
    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn dt(&self) -> f64 {
        self.omega / self.steps_m as f64
    }
}

impl ProblemConfig {
    pub fn validate(self) -> Result<ProblemSpec> {
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return Err(Error::validation("omega", format!("must be > 0, got {}", self.omega)));
        }
        if self.steps_m < 8 {
            return Err(Error::validation(
                "steps_M",
                format!("must be >= 8, got {}", self.steps_m),
            ));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::validation("tau", format!("must be > 0, got {}", self.tau)));
        }
        for (name, v) in [("nonlinearity.C1", self.c1), ("nonlinearity.C2", self.c2)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::validation(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(self.forcing_b.abs() <= self.forcing_a) {
            return Err(Error::validation(
                "forcing.a",
                format!("need a >= |b| >= 0, got a = {}, b = {}", self.forcing_a, self.forcing_b),
            ));
        }
        if !self.forcing_phase.is_finite() {
            return Err(Error::validation("forcing.phase", "must be finite"));
        }
        let dt = self.omega / self.steps_m as f64;
        DelayRead::new(self.tau, dt, self.interpolate_delay).map_err(|_| {
            Error::Configuration(format!(
                "tau = {} is not commensurate with omega / steps_M = {} / {} (ratio {}) and interpolate_delay is off",
                self.tau,
                self.omega,
                self.steps_m,
                self.tau / dt
            ))
        })?;
        let generator = self.generator.build()?;
        let profile = first_eigenfunction(&generator);
        let forcing = Forcing::new(self.forcing_a, self.forcing_b, self.forcing_phase, self.omega, profile)?;
        let nonlinearity = NonlinearitySpec::new(self.kind, self.c1, self.c2, forcing, self.tau)?;
        Ok(ProblemSpec {
            label: self.label,
            generator_source: self.generator,
            nonlinearity,
            omega: self.omega,
            steps_m: self.steps_m,
            interpolate_delay: self.interpolate_delay,
            seed: self.seed,
            generator,
        })
    }
}

struct Entry {
    value: String,
    line: usize,
    column: usize,
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Parses and validates a problem document.
pub fn load_problem(text: &str) -> Result<ProblemSpec> {
    parse_config(text)?.validate()
}

fn parse_config(text: &str) -> Result<ProblemConfig> {
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let Some(eq) = content.find('=') else {
            let col = content.len() - content.trim_start().len() + 1;
            return Err(parse_error(line, col, "expected `key = value`"));
        };
        let key = content[..eq].trim();
        let key_col = content.len() - content.trim_start().len() + 1;
        if key.is_empty() {
            return Err(parse_error(line, key_col, "missing key"));
        }
        let known = REQUIRED.contains(&key)
            || MATRIX_KEYS.contains(&key)
            || ELLIPTIC_KEYS.contains(&key)
            || OPTIONAL.contains(&key);
        if !known {
            return Err(parse_error(line, key_col, format!("unknown key `{key}`")));
        }
        let after = &content[eq + 1..];
        let value_col = eq + 2 + (after.len() - after.trim_start().len());
        if entries.contains_key(key) {
            return Err(parse_error(line, key_col, format!("duplicate key `{key}`")));
        }
        entries.insert(
            key.to_string(),
            Entry {
                value: after.trim().to_string(),
                line,
                column: value_col,
            },
        );
    }

    for key in REQUIRED {
        if !entries.contains_key(*key) {
            return Err(Error::validation(*key, "required key is missing"));
        }
    }
    let has_matrix = MATRIX_KEYS.iter().any(|k| entries.contains_key(*k));
    let has_elliptic = ELLIPTIC_KEYS.iter().any(|k| entries.contains_key(*k));
    let generator = match (has_matrix, has_elliptic) {
        (true, true) => {
            return Err(Error::validation(
                "generator",
                "give exactly one of `generator.matrix` or the `elliptic.*` group",
            ))
        }
        (false, false) => {
            return Err(Error::validation(
                "generator",
                "missing generator: give `generator.matrix` or the `elliptic.*` group",
            ))
        }
        (true, false) => GeneratorSource::Matrix(parse_matrix(&entries["generator.matrix"])?),
        (false, true) => {
            for key in ELLIPTIC_KEYS {
                if !entries.contains_key(*key) {
                    return Err(Error::validation(*key, "required for an elliptic generator"));
                }
            }
            let n: usize = parse_value(&entries["elliptic.n"])?;
            let boundary = parse_boundary(&entries["elliptic.boundary"])?;
            let a0: f64 = parse_value(&entries["elliptic.a0"])?;
            GeneratorSource::Elliptic(EllipticSpec1D::uniform(
                n,
                parse_value(&entries["elliptic.L"])?,
                parse_value(&entries["elliptic.diffusion"])?,
                a0,
                boundary,
            )?)
        }
    };

    let kind = match entries["nonlinearity.kind"].value.as_str() {
        "affine" => NonlinearityKind::Affine,
        "saturating" => NonlinearityKind::Saturating,
        other => {
            let e = &entries["nonlinearity.kind"];
            return Err(parse_error(
                e.line,
                e.column,
                format!("nonlinearity.kind must be `affine` or `saturating`, got `{other}`"),
            ));
        }
    };
    let interpolate_delay = match entries.get("interpolate_delay") {
        None => false,
        Some(e) => match e.value.as_str() {
            "true" => true,
            "false" => false,
            other => {
                return Err(parse_error(
                    e.line,
                    e.column,
                    format!("interpolate_delay must be `true` or `false`, got `{other}`"),
                ))
            }
        },
    };
    let seed = match entries.get("seed") {
        None => DEFAULT_SEED,
        Some(e) => parse_value(e)?,
    };

    Ok(ProblemConfig {
        label: entries["label"].value.clone(),
        omega: parse_value(&entries["omega"])?,
        steps_m: parse_value(&entries["steps_M"])?,
        tau: parse_value(&entries["tau"])?,
        kind,
        c1: parse_value(&entries["nonlinearity.C1"])?,
        c2: parse_value(&entries["nonlinearity.C2"])?,
        forcing_a: parse_value(&entries["forcing.a"])?,
        forcing_b: parse_value(&entries["forcing.b"])?,
        forcing_phase: parse_value(&entries["forcing.phase"])?,
        generator,
        interpolate_delay,
        seed,
    })
}

fn parse_value<T: std::str::FromStr>(e: &Entry) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    e.value
        .parse::<T>()
        .map_err(|err| parse_error(e.line, e.column, format!("cannot parse `{}`: {err}", e.value)))
}

fn parse_matrix(e: &Entry) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    let mut offset = 0;
    for row in e.value.split(';') {
        let mut out = Vec::new();
        let mut col_offset = offset;
        for item in row.split(',') {
            let lead = item.len() - item.trim_start().len();
            let token = item.trim();
            let v: f64 = token.parse().map_err(|err| {
                parse_error(
                    e.line,
                    e.column + col_offset + lead,
                    format!("bad matrix entry `{token}`: {err}"),
                )
            })?;
            out.push(v);
            col_offset += item.len() + 1;
        }
        rows.push(out);
        offset += row.len() + 1;
    }
    Ok(rows)
}

fn parse_boundary(e: &Entry) -> Result<Boundary> {
    let v = e.value.as_str();
    if v == "dirichlet" {
        return Ok(Boundary::Dirichlet);
    }
    if let Some(b0) = v.strip_prefix("robin:") {
        let b0: f64 = b0
            .trim()
            .parse()
            .map_err(|err| parse_error(e.line, e.column + 6, format!("bad Robin coefficient `{b0}`: {err}")))?;
        return Ok(Boundary::Robin { b0 });
    }
    Err(parse_error(
        e.line,
        e.column,
        format!("elliptic.boundary must be `dirichlet` or `robin:<b0>`, got `{v}`"),
    ))
}
