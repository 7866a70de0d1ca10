//! JSON run report. Layout is described by `schema/report.schema.json`.
//!
//! Wall-clock times are kept out of the report so identical configurations give identical
//! bytes; they go to `timing.json` next to it.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::background::BackgroundProfile;
use crate::error::Result;
use crate::io::fmt_num;

pub const SCHEMA_VERSION: u32 = 1;

/// One quantitative test inside a probe.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human readable acceptance rule, e.g. `<= 1e-9`.
    pub bound: String,
    pub passed: bool,
}

impl Check {
    pub fn le(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound: format!("<= {}", fmt_num(bound)), passed: value <= bound }
    }

    pub fn lt(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound: format!("< {}", fmt_num(bound)), passed: value < bound }
    }

    pub fn ge(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound: format!(">= {bound}"), passed: value >= bound }
    }

    pub fn gt(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound: format!("> {bound}"), passed: value > bound }
    }

    /// `|value - target| <= tol`.
    pub fn near(name: &str, value: f64, target: f64, tol: f64) -> Self {
        Self { name: name.into(), value, bound: format!("{target} +- {tol}"), passed: (value - target).abs() <= tol }
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        Self { name: name.into(), value: if ok { 1.0 } else { 0.0 }, bound: "== 1".into(), passed: ok }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ProbeOutcome {
    pub name: String,
    pub description: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl ProbeOutcome {
    pub fn new(name: &str, description: &str, checks: Vec<Check>) -> Self {
        let passed = !checks.is_empty() && checks.iter().all(|c| c.passed);
        Self { name: name.into(), description: description.into(), passed, checks }
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BackgroundSummary {
    pub nodes: usize,
    pub r0: f64,
    pub r1: f64,
    pub b0: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub r_c: f64,
    pub rho_c: f64,
    pub r_sharp: f64,
    pub r_sharp_is_closed_form: bool,
    pub mach_sq_r0: f64,
    pub mach_sq_r1: f64,
}

impl BackgroundSummary {
    pub fn of(bg: &BackgroundProfile) -> Self {
        Self {
            nodes: bg.len(),
            r0: bg.r0,
            r1: bg.r1,
            b0: bg.gas.b0,
            kappa1: bg.kappa1,
            kappa2: bg.kappa2,
            r_c: bg.r_c,
            rho_c: bg.rho_c,
            r_sharp: bg.r_sharp,
            r_sharp_is_closed_form: bg.r_sharp_is_closed_form,
            mach_sq_r0: bg.m_tot_sq[0],
            mach_sq_r1: *bg.m_tot_sq.last().unwrap(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub program: &'static str,
    pub version: &'static str,
    pub mode: String,
    pub config: Value,
    pub background: Option<BackgroundSummary>,
    /// Mode specific solver diagnostics: histories, norms, margins.
    pub results: Value,
    /// Sonic geometry summary, when the mode produces a field.
    pub sonic: Option<Value>,
    pub probes: Vec<ProbeOutcome>,
    pub passed: bool,
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn new(mode: &str, config: Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            program: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            mode: mode.into(),
            config,
            background: None,
            results: Value::Null,
            sonic: None,
            probes: vec![],
            passed: false,
            artifacts: vec![],
        }
    }

    pub fn finalize(&mut self) {
        self.passed = self.probes.iter().all(|p| p.passed);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// The published report schema.
pub const SCHEMA: &str = include_str!("../schema/report.schema.json");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_passes_only_when_every_check_does() {
        let p = ProbeOutcome::new("x", "", vec![Check::le("a", 1e-10, 1e-9), Check::near("b", 2.1, 2.0, 0.2)]);
        assert!(p.passed);
        let q = ProbeOutcome::new("x", "", vec![Check::le("a", 1e-10, 1e-9), Check::gt("b", 0.0, 0.0)]);
        assert!(!q.passed);
        assert_eq!(q.failed_checks().len(), 1);
        assert!(!ProbeOutcome::new("x", "", vec![]).passed);
        assert!(!Check::le("nan", f64::NAN, 1.0).passed);
    }

    #[test]
    fn schema_is_valid_json() {
        let v: Value = serde_json::from_str(SCHEMA).unwrap();
        assert_eq!(v["properties"]["schema_version"]["const"], SCHEMA_VERSION);
    }
}
