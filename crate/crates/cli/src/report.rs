//! The JSON report every subcommand writes, with its tolerances and conventions.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Result};
use joycekit::Precision;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::input::TolSpec;

/// Settings shared by all subcommands.
#[derive(Debug, Clone)]
pub struct Context {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub precision: Precision,
    pub tol: Vec<TolSpec>,
}

impl Context {
    /// Defaults overridden by `--tol`; a bare value sets the first entry.
    pub fn tolerances(&self, defaults: &[(&str, f64)]) -> Result<BTreeMap<String, f64>> {
        let mut out: BTreeMap<String, f64> = defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        for t in &self.tol {
            let name = match &t.name {
                Some(n) => n.as_str(),
                None => defaults.first().map(|d| d.0).unwrap_or(""),
            };
            match out.get_mut(name) {
                Some(v) => *v = t.value,
                None => {
                    let known: Vec<&str> = defaults.iter().map(|d| d.0).collect();
                    bail!("unknown tolerance {name:?}; this command knows {known:?}");
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Conventions {
    pub eta_orientation: &'static str,
    pub basis_ordering: &'static str,
    pub stokes_product_order: &'static str,
    pub pentagon_bracketing: &'static str,
    pub wall_characters: &'static str,
    pub polynomial_coefficients: &'static str,
    pub sheets: &'static str,
}

pub const CONVENTIONS: Conventions = Conventions {
    eta_orientation: "eta = omega^-1; default frame omega[p][p+d] = 1, so eta[p][p+d] = -1",
    basis_ordering: "(d/dz_1..d/dz_n, d/dtheta_1..d/dtheta_n); forms and matrices use this index order",
    stokes_product_order: "S(l_1) S(l_2) ... S(l_m), rays counterclockwise from the base angle, later factors on the right, compared with Phi_cont^-1 Phi_base",
    pentagon_bracketing: "a o b acts by pullback b* a*; S(g2) o S(g1) = S(g1) o S(g1+g2) o S(g2) for <g1, g2> = 1",
    wall_characters: "twisted torus X_a X_b = (-1)^<a,b> X_(a+b); X_g = sigma(g) xi_g and each wall factor is 1 + xi_g",
    polynomial_coefficients: "ascending powers of x",
    sheets: "'+' is the principal square root of Q at the first vertex of a cycle",
};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: Value,
    pub tolerance: Value,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Defect,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: &'static str,
    pub status: Status,
    pub seed: u64,
    pub precision: Precision,
    pub conventions: Conventions,
    pub tolerances: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    #[serde(flatten)]
    pub result: Map<String, Value>,
    pub files: Vec<String>,
}

impl Report {
    pub fn new(command: &'static str, ctx: &Context, defaults: &[(&str, f64)]) -> Result<Self> {
        Ok(Self {
            command,
            status: Status::Ok,
            seed: ctx.seed,
            precision: ctx.precision,
            conventions: CONVENTIONS,
            tolerances: ctx.tolerances(defaults)?,
            checks: Vec::new(),
            result: Map::new(),
            files: Vec::new(),
        })
    }

    pub fn tol(&self, name: &str) -> f64 {
        self.tolerances[name]
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("report values serialize");
        self.result.insert(key.to_string(), v);
    }

    fn push(&mut self, name: String, value: Value, tolerance: Value, passed: bool) {
        if !passed {
            self.status = Status::Defect;
        }
        self.checks.push(Check {
            name,
            value,
            tolerance,
            passed,
        });
    }

    /// `value <= tolerances[tol]`.
    pub fn le(&mut self, name: impl Into<String>, value: f64, tol: &str) {
        let t = self.tol(tol);
        self.push(name.into(), Value::from(value), Value::from(t), value <= t);
    }

    pub fn holds(&mut self, name: impl Into<String>, ok: bool) {
        self.push(name.into(), Value::from(ok), Value::from(true), ok);
    }

    /// An exact quantity given as a string, with its own verdict.
    pub fn exact(&mut self, name: impl Into<String>, value: &str, tol: &str, ok: bool) {
        self.push(name.into(), Value::from(value), Value::from(tol), ok);
    }

    pub fn violations(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
