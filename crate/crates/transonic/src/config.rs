//! Run configuration: INI-like `key = value` text with `[section]` headers, or JSON.
//!
//! Every key has the form `section.key`. Inside a section the prefix is implied; outside any
//! section a bare key is accepted when it names exactly one known key (`gamma`, `epsilon`).
//! Values are layered: defaults, preset, configuration file, `TA_*` environment variables,
//! command line overrides. Each key `section.key` is overridden by `TA_SECTION_KEY`.

use std::collections::BTreeMap;
use std::fmt;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::gas::GasParams;
use crate::profile::Profile;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Background,
    Irrotational,
    Rotational,
    Axisym,
    Sweep,
    Verify,
}

impl Mode {
    pub const ALL: [Mode; 6] = [Mode::Background, Mode::Irrotational, Mode::Rotational, Mode::Axisym, Mode::Sweep, Mode::Verify];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Background => "background",
            Mode::Irrotational => "irrotational",
            Mode::Rotational => "rotational",
            Mode::Axisym => "axisym",
            Mode::Sweep => "sweep",
            Mode::Verify => "verify",
        }
    }

    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode '{s}' (expected one of background, irrotational, rotational, axisym, sweep, verify)"))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fully validated run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub threads: usize,
    pub probes: Vec<String>,

    pub gamma: f64,
    pub a0: f64,
    pub rho0: f64,
    pub u10: f64,
    pub u20: f64,

    pub r0: f64,
    pub r1: f64,
    pub nr: usize,

    pub n_modes: usize,
    /// `None` picks the upper end of the forbidden interval plus two.
    pub l0: Option<f64>,

    pub epsilon: Vec<f64>,
    pub g0: Profile,
    pub g1: Profile,
    pub b1: Profile,
    pub a1: Profile,

    pub half_length: f64,
    pub n_axial: usize,
    pub q1: Profile,
    pub q2: Profile,
    pub q3: Profile,
    pub axial_b1: Profile,
    pub axial_a1: Profile,

    pub tol: f64,
    pub max_iter: usize,
    pub trust_scale: f64,
    pub max_continuation: usize,
    pub outer_tol: f64,
    pub max_outer: usize,
    pub axisym_tol: f64,
    pub streamlines: usize,
    pub characteristics: usize,

    pub sweep_base: Mode,
    pub out_dir: String,
}

/// Key, default value and help line.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("run.mode", "background", "background | irrotational | rotational | axisym | sweep | verify"),
    ("run.threads", "0", "worker threads, 0 = one per core"),
    ("run.probes", "", "comma separated checks; empty selects the defaults of the mode"),
    ("gas.gamma", "1.4", "adiabatic exponent, in (1, 3)"),
    ("gas.a0", "0.7142857142857143", "entropy constant A0 of p = A rho^gamma"),
    ("gas.rho0", "1", "density on the outer circle"),
    ("gas.u10", "-0.2", "radial velocity on the outer circle, <= 0"),
    ("gas.u20", "0.7", "angular velocity on the outer circle, nonzero"),
    ("domain.r0", "1.35", "inner radius"),
    ("domain.r1", "2", "outer radius"),
    ("domain.nr", "129", "radial grid nodes"),
    ("spectral.n_modes", "8", "Fourier harmonics N (2N+1 unknowns per radius)"),
    ("spectral.l0", "auto", "boundary multiplier at r0, outside the forbidden interval"),
    ("perturbation.epsilon", "1e-3", "perturbation size; a list [a, b, ...] in sweep mode"),
    ("perturbation.g0", "cos(theta)", "radial velocity datum on r0"),
    ("perturbation.g1", "sin(theta)", "angular velocity datum on r1"),
    ("perturbation.b1", "0", "Bernoulli datum on r1"),
    ("perturbation.a1", "0", "entropy datum on r1"),
    ("axisym.half_length", "16", "half length L of the truncated strip"),
    ("axisym.n_axial", "513", "axial grid nodes (odd)"),
    ("axisym.q1", "bump(0, 1)", "radial velocity datum on r0"),
    ("axisym.q2", "bump(0.2, 1)", "swirl datum on r1"),
    ("axisym.q3", "bump(-0.2, 1)", "axial velocity datum on r1"),
    ("axisym.b1", "bump(0, 1)", "Bernoulli datum on r1"),
    ("axisym.a1", "0.5*bump(0, 1)", "entropy datum on r1"),
    ("solver.tol", "1e-10", "fixed point tolerance of the potential iteration"),
    ("solver.max_iter", "100", "iteration cap"),
    ("solver.trust_scale", "10", "trust radius is trust_scale * sqrt(epsilon)"),
    ("solver.max_continuation", "8", "epsilon halvings allowed on leaving the trust region"),
    ("solver.outer_tol", "1e-9", "tolerance of the (B, A) transport iteration"),
    ("solver.max_outer", "50", "transport iteration cap"),
    ("solver.axisym_tol", "1e-9", "tolerance of the axisymmetric iteration"),
    ("solver.streamlines", "20", "streamlines sampled for invariance checks"),
    ("solver.characteristics", "20", "characteristics sampled for invariance checks"),
    ("sweep.base", "irrotational", "mode run for every epsilon of a sweep"),
    ("output.dir", "out", "artifact directory"),
];

/// Bundled configurations, by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("asset-background", include_str!("../presets/asset-background.cfg")),
    ("circulatory-background", include_str!("../presets/circulatory-background.cfg")),
    ("background-identities", include_str!("../presets/background-identities.cfg")),
    ("irrotational", include_str!("../presets/irrotational.cfg")),
    ("irrotational-eps-scaling", include_str!("../presets/irrotational-eps-scaling.cfg")),
    ("rotational", include_str!("../presets/rotational.cfg")),
    ("rotational-eps-scaling", include_str!("../presets/rotational-eps-scaling.cfg")),
    ("axisym", include_str!("../presets/axisym.cfg")),
];

pub fn preset(name: &str) -> Result<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).ok_or_else(|| Error::Parse {
        location: "--preset".into(),
        message: format!("unknown preset '{name}' (available: {})", PRESETS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")),
    })
}

pub fn env_var_name(key: &str) -> String {
    format!("TA_{}", key.replace('.', "_").to_uppercase())
}

fn num(v: &str) -> std::result::Result<f64, String> {
    let x: f64 = v.trim().parse().map_err(|_| format!("'{v}' is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("'{v}' is not finite"))
    }
}

fn count(v: &str, min: usize) -> std::result::Result<usize, String> {
    let n: usize = v.trim().parse().map_err(|_| format!("'{v}' is not a nonnegative integer"))?;
    if n < min {
        return Err(format!("{n} is below the minimum {min}"));
    }
    Ok(n)
}

fn positive(v: &str) -> std::result::Result<f64, String> {
    let x = num(v)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(format!("{x} must be positive"))
    }
}

fn profile(v: &str) -> std::result::Result<Profile, String> {
    Profile::parse(v.trim()).map_err(|e| e.to_string())
}

fn list(v: &str) -> std::result::Result<Vec<f64>, String> {
    let t = v.trim();
    let inner = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')).unwrap_or(t);
    let xs: Vec<f64> = inner.split(',').filter(|s| !s.trim().is_empty()).map(num).collect::<std::result::Result<_, _>>()?;
    if xs.is_empty() {
        return Err("empty list".into());
    }
    if let Some(x) = xs.iter().find(|x| **x < 0.0) {
        return Err(format!("epsilon = {x} must be nonnegative"));
    }
    Ok(xs)
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = RunConfig {
            mode: Mode::Background,
            threads: 0,
            probes: vec![],
            gamma: 0.0,
            a0: 0.0,
            rho0: 0.0,
            u10: 0.0,
            u20: 0.0,
            r0: 0.0,
            r1: 0.0,
            nr: 0,
            n_modes: 0,
            l0: None,
            epsilon: vec![],
            g0: Profile::zero(),
            g1: Profile::zero(),
            b1: Profile::zero(),
            a1: Profile::zero(),
            half_length: 0.0,
            n_axial: 0,
            q1: Profile::zero(),
            q2: Profile::zero(),
            q3: Profile::zero(),
            axial_b1: Profile::zero(),
            axial_a1: Profile::zero(),
            tol: 0.0,
            max_iter: 0,
            trust_scale: 0.0,
            max_continuation: 0,
            outer_tol: 0.0,
            max_outer: 0,
            axisym_tol: 0.0,
            streamlines: 0,
            characteristics: 0,
            sweep_base: Mode::Irrotational,
            out_dir: String::new(),
        };
        for (k, v, _) in KEYS {
            c.set(k, v).expect("defaults are valid");
        }
        c
    }
}

impl RunConfig {
    /// Assigns one key from its text value; the error names the problem but not the location.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "run.mode" => self.mode = Mode::parse(v.trim())?,
            "run.threads" => self.threads = count(v, 0)?,
            "run.probes" => self.probes = v.trim().trim_start_matches('[').trim_end_matches(']').split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
            "gas.gamma" => {
                let g = num(v)?;
                if !(g > 1.0 && g < 3.0) {
                    return Err(format!("gamma = {g} is out of range (1, 3)"));
                }
                self.gamma = g;
            }
            "gas.a0" => self.a0 = positive(v)?,
            "gas.rho0" => self.rho0 = positive(v)?,
            "gas.u10" => {
                let u = num(v)?;
                if u > 0.0 {
                    return Err(format!("u10 = {u} must be <= 0 (inflow through r1)"));
                }
                self.u10 = u;
            }
            "gas.u20" => {
                let u = num(v)?;
                if u == 0.0 {
                    return Err("u20 must be nonzero".into());
                }
                self.u20 = u;
            }
            "domain.r0" => self.r0 = positive(v)?,
            "domain.r1" => self.r1 = positive(v)?,
            "domain.nr" => self.nr = count(v, 9)?,
            "spectral.n_modes" => self.n_modes = count(v, 1)?,
            "spectral.l0" => self.l0 = if v.trim() == "auto" { None } else { Some(num(v)?) },
            "perturbation.epsilon" => self.epsilon = list(v)?,
            "perturbation.g0" => self.g0 = profile(v)?,
            "perturbation.g1" => self.g1 = profile(v)?,
            "perturbation.b1" => self.b1 = profile(v)?,
            "perturbation.a1" => self.a1 = profile(v)?,
            "axisym.half_length" => self.half_length = positive(v)?,
            "axisym.n_axial" => {
                let n = count(v, 9)?;
                if n.is_multiple_of(2) {
                    return Err(format!("n_axial = {n} must be odd"));
                }
                self.n_axial = n;
            }
            "axisym.q1" => self.q1 = profile(v)?,
            "axisym.q2" => self.q2 = profile(v)?,
            "axisym.q3" => self.q3 = profile(v)?,
            "axisym.b1" => self.axial_b1 = profile(v)?,
            "axisym.a1" => self.axial_a1 = profile(v)?,
            "solver.tol" => self.tol = positive(v)?,
            "solver.max_iter" => self.max_iter = count(v, 1)?,
            "solver.trust_scale" => self.trust_scale = positive(v)?,
            "solver.max_continuation" => self.max_continuation = count(v, 0)?,
            "solver.outer_tol" => self.outer_tol = positive(v)?,
            "solver.max_outer" => self.max_outer = count(v, 1)?,
            "solver.axisym_tol" => self.axisym_tol = positive(v)?,
            "solver.streamlines" => self.streamlines = count(v, 1)?,
            "solver.characteristics" => self.characteristics = count(v, 1)?,
            "sweep.base" => {
                let m = Mode::parse(v.trim())?;
                if !matches!(m, Mode::Irrotational | Mode::Rotational | Mode::Axisym) {
                    return Err(format!("sweep.base = {m} must be irrotational, rotational or axisym"));
                }
                self.sweep_base = m;
            }
            "output.dir" => self.out_dir = v.trim().to_string(),
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Current value of a key, as echoed into reports.
    pub fn get(&self, key: &str) -> Value {
        let p = |p: &Profile| Value::String(p.to_string());
        match key {
            "run.mode" => json!(self.mode.name()),
            "run.threads" => json!(self.threads),
            "run.probes" => json!(self.probes),
            "gas.gamma" => json!(self.gamma),
            "gas.a0" => json!(self.a0),
            "gas.rho0" => json!(self.rho0),
            "gas.u10" => json!(self.u10),
            "gas.u20" => json!(self.u20),
            "domain.r0" => json!(self.r0),
            "domain.r1" => json!(self.r1),
            "domain.nr" => json!(self.nr),
            "spectral.n_modes" => json!(self.n_modes),
            "spectral.l0" => self.l0.map(|l| json!(l)).unwrap_or(json!("auto")),
            "perturbation.epsilon" => json!(self.epsilon),
            "perturbation.g0" => p(&self.g0),
            "perturbation.g1" => p(&self.g1),
            "perturbation.b1" => p(&self.b1),
            "perturbation.a1" => p(&self.a1),
            "axisym.half_length" => json!(self.half_length),
            "axisym.n_axial" => json!(self.n_axial),
            "axisym.q1" => p(&self.q1),
            "axisym.q2" => p(&self.q2),
            "axisym.q3" => p(&self.q3),
            "axisym.b1" => p(&self.axial_b1),
            "axisym.a1" => p(&self.axial_a1),
            "solver.tol" => json!(self.tol),
            "solver.max_iter" => json!(self.max_iter),
            "solver.trust_scale" => json!(self.trust_scale),
            "solver.max_continuation" => json!(self.max_continuation),
            "solver.outer_tol" => json!(self.outer_tol),
            "solver.max_outer" => json!(self.max_outer),
            "solver.axisym_tol" => json!(self.axisym_tol),
            "solver.streamlines" => json!(self.streamlines),
            "solver.characteristics" => json!(self.characteristics),
            "sweep.base" => json!(self.sweep_base.name()),
            "output.dir" => json!(self.out_dir),
            _ => Value::Null,
        }
    }

    /// Nested `{section: {key: value}}` echo of every key.
    pub fn echo(&self) -> Value {
        let mut root = Map::new();
        for (k, _, _) in KEYS {
            let (sec, name) = k.split_once('.').unwrap();
            let entry = root.entry(sec.to_string()).or_insert_with(|| Value::Object(Map::new()));
            entry.as_object_mut().unwrap().insert(name.to_string(), self.get(k));
        }
        Value::Object(root)
    }

    /// Gas parameters with the derived Bernoulli constant.
    pub fn gas(&self) -> Result<GasParams> {
        GasParams::new(self.gamma, self.a0, self.rho0, self.u10, self.u20)
    }

    /// The single epsilon of a non-sweep run.
    pub fn epsilon(&self) -> f64 {
        self.epsilon[0]
    }

    /// Cross-key checks that cannot be made one key at a time.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parse { location: "configuration".into(), message: m });
        if self.r0 >= self.r1 {
            return bad(format!("need r0 < r1, got r0 = {}, r1 = {}", self.r0, self.r1));
        }
        if self.mode == Mode::Sweep {
            if self.epsilon.len() < 2 {
                return bad("a sweep needs at least two epsilon values".into());
            }
        } else if self.epsilon.len() != 1 {
            return bad(format!("mode {} takes a single epsilon, got {}", self.mode, self.epsilon.len()));
        }
        for (name, p) in [("g0", &self.g0), ("g1", &self.g1), ("b1", &self.b1), ("a1", &self.a1)] {
            if !p.is_periodic() {
                return bad(format!("perturbation.{name} = {p} is not 2pi-periodic"));
            }
        }
        for (name, p) in [("q1", &self.q1), ("q2", &self.q2), ("q3", &self.q3), ("b1", &self.axial_b1), ("a1", &self.axial_a1)] {
            if !p.is_zero() && p.support_radius().is_none() {
                return bad(format!("axisym.{name} = {p} is not compactly supported"));
            }
        }
        for name in &self.probes {
            if !crate::probes::is_known(self.mode, name) {
                return bad(format!("unknown probe '{name}' for mode {}", self.mode));
            }
        }
        Ok(())
    }
}

fn resolve_key(raw: &str, section: Option<&str>) -> std::result::Result<&'static str, String> {
    let full = match section {
        Some(s) => format!("{s}.{raw}"),
        None => raw.to_string(),
    };
    if let Some((k, _, _)) = KEYS.iter().find(|(k, _, _)| *k == full) {
        return Ok(k);
    }
    if section.is_none() && !raw.contains('.') {
        let hits: Vec<&'static str> = KEYS.iter().map(|(k, _, _)| *k).filter(|k| k.split_once('.').unwrap().1 == raw).collect();
        return match hits.as_slice() {
            [k] => Ok(k),
            [] => Err(format!("unknown key '{raw}'")),
            many => Err(format!("ambiguous key '{raw}' (could be {})", many.join(", "))),
        };
    }
    Err(format!("unknown key '{full}'"))
}

/// `(key, value, location)` triples in file order.
pub type Assignments = Vec<(&'static str, String, String)>;

fn parse_ini(text: &str) -> Result<Assignments> {
    let mut out = Vec::new();
    let mut section: Option<String> = None;
    for (no, line) in text.lines().enumerate() {
        let loc = format!("line {}", no + 1);
        let err = |m: String| Error::Parse { location: loc.clone(), message: m };
        let t = line.split(['#', ';']).next().unwrap().trim();
        if t.is_empty() {
            continue;
        }
        if let Some(s) = t.strip_prefix('[') {
            let name = s.strip_suffix(']').ok_or_else(|| err(format!("unterminated section header '{t}'")))?.trim();
            if !KEYS.iter().any(|(k, _, _)| k.split_once('.').unwrap().0 == name) {
                return Err(err(format!("unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = t.split_once('=').ok_or_else(|| err(format!("expected 'key = value', got '{t}'")))?;
        let key = resolve_key(k.trim(), section.as_deref()).map_err(err)?;
        let v = v.trim().trim_matches('"').to_string();
        out.push((key, v, loc));
    }
    Ok(out)
}

fn json_line(text: &str, needle: &str) -> String {
    let quoted = format!("\"{needle}\"");
    match text.find(&quoted) {
        Some(pos) => format!("line {}", text[..pos].matches('\n').count() + 1),
        None => "json".into(),
    }
}

fn json_text(v: &Value) -> std::result::Result<String, String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        Value::Array(a) => {
            let parts: Vec<String> = a.iter().map(json_text).collect::<std::result::Result<_, _>>()?;
            Ok(format!("[{}]", parts.join(", ")))
        }
        Value::Null => Err("null is not a value".into()),
        Value::Object(_) => Err("nested object is not a value".into()),
    }
}

fn parse_json(text: &str) -> Result<Assignments> {
    let root: Value = serde_json::from_str(text)
        .map_err(|e| Error::Parse { location: format!("line {}", e.line()), message: e.to_string() })?;
    let obj = root.as_object().ok_or_else(|| Error::Parse { location: "line 1".into(), message: "expected a JSON object".into() })?;
    let mut out = Vec::new();
    for (k, v) in obj {
        let entries: Vec<(Option<&str>, &String, &Value)> = match v {
            Value::Object(inner) => inner.iter().map(|(ik, iv)| (Some(k.as_str()), ik, iv)).collect(),
            _ => vec![(None, k, v)],
        };
        for (sec, ik, iv) in entries {
            let loc = json_line(text, ik);
            let err = |m: String| Error::Parse { location: loc.clone(), message: m };
            let key = resolve_key(ik, sec).map_err(err)?;
            // lists are joined back into the text syntax so both formats share one setter
            let val = json_text(iv).map_err(err)?;
            out.push((key, val, loc));
        }
    }
    Ok(out)
}

/// Parses configuration text, JSON when it starts with `{`, INI-like otherwise.
pub fn parse_assignments(text: &str) -> Result<Assignments> {
    if text.trim_start().starts_with('{') {
        parse_json(text)
    } else {
        parse_ini(text)
    }
}

pub fn apply(cfg: &mut RunConfig, assignments: &Assignments) -> Result<()> {
    for (k, v, loc) in assignments {
        cfg.set(k, v).map_err(|m| Error::Parse { location: loc.clone(), message: format!("{k}: {m}") })?;
    }
    Ok(())
}

/// Defaults overlaid with the given text, then validated.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    apply(&mut cfg, &parse_assignments(text)?)?;
    cfg.validate()?;
    Ok(cfg)
}

/// `TA_*` overrides taken from `vars` (normally `std::env::vars()`).
pub fn env_assignments(vars: impl IntoIterator<Item = (String, String)>) -> Result<Assignments> {
    let vars: BTreeMap<String, String> = vars.into_iter().filter(|(k, _)| k.starts_with("TA_")).collect();
    let known: BTreeMap<String, &'static str> = KEYS.iter().map(|(k, _, _)| (env_var_name(k), *k)).collect();
    let mut out = Vec::new();
    for (name, v) in vars {
        match known.get(&name) {
            Some(k) => out.push((*k, v, format!("environment {name}"))),
            None => {
                return Err(Error::Parse { location: format!("environment {name}"), message: "no configuration key has this name".into() })
            }
        }
    }
    Ok(out)
}

/// Command line `key=value` overrides.
pub fn override_assignments(items: &[String]) -> Result<Assignments> {
    items
        .iter()
        .map(|s| {
            let loc = format!("--set {s}");
            let (k, v) = s.split_once('=').ok_or_else(|| Error::Parse { location: loc.clone(), message: "expected key=value".into() })?;
            let key = resolve_key(k.trim(), None).map_err(|m| Error::Parse { location: loc.clone(), message: m })?;
            Ok((key, v.trim().to_string(), loc))
        })
        .collect()
}

/// Help text listing every key with its default.
pub fn keys_help() -> String {
    let mut s = String::from("configuration keys (default):\n");
    for (k, d, h) in KEYS {
        s.push_str(&format!("  {k:<26} {:<18} {h}\n", if d.is_empty() { "-" } else { d }));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::{asset_gas, ASSET_R0, ASSET_R1};
    use proptest::prelude::*;

    #[test]
    fn empty_text_gives_asset_background_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.mode, Mode::Background);
        assert_eq!(c.gas().unwrap(), asset_gas());
        assert_eq!((c.r0, c.r1), (ASSET_R0, ASSET_R1));
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn gamma_out_of_range_names_the_line() {
        let e = parse_config("[gas]\n\ngamma = 3.5\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let s = e.to_string();
        assert!(s.contains("line 3") && s.contains("(1, 3)"), "{s}");
    }

    #[test]
    fn unknown_and_ambiguous_keys_are_rejected() {
        let e = parse_config("[gas]\ngama = 1.4").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("unknown key 'gas.gama'"), "{e}");
        let e = parse_config("b1 = cos(theta)").unwrap_err().to_string();
        assert!(e.contains("ambiguous"), "{e}");
        assert!(parse_config("[nozzle]\n").is_err());
    }

    #[test]
    fn sweep_list_schedules_one_run_per_value() {
        let c = parse_config("mode = sweep\nepsilon = [1e-3, 2e-3, 4e-3]").unwrap();
        assert_eq!(c.epsilon, vec![1e-3, 2e-3, 4e-3]);
        assert!(parse_config("mode = irrotational\nepsilon = [1e-3, 2e-3]").is_err());
        assert!(parse_config("mode = sweep\nepsilon = 1e-3").is_err());
    }

    #[test]
    fn json_and_ini_agree() {
        let ini = "mode = rotational\n[perturbation]\nepsilon = 2e-3\nb1 = cos(theta)\n[domain]\nnr = 65\n";
        let js = r#"{"run": {"mode": "rotational"}, "perturbation": {"epsilon": 2e-3, "b1": "cos(theta)"}, "domain.nr": 65}"#;
        assert_eq!(parse_config(ini).unwrap(), parse_config(js).unwrap());
        let e = parse_config("{\n  \"gas\": {\n    \"gamma\": 7\n  }\n}").unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
    }

    #[test]
    fn environment_overrides_use_prefixed_names() {
        assert_eq!(env_var_name("spectral.n_modes"), "TA_SPECTRAL_N_MODES");
        let a = env_assignments(vec![("TA_GAS_GAMMA".into(), "1.3".into()), ("HOME".into(), "/".into())]).unwrap();
        let mut c = RunConfig::default();
        apply(&mut c, &a).unwrap();
        assert_eq!(c.gamma, 1.3);
        let e = env_assignments(vec![("TA_GAS_GAMA".into(), "1".into())]).unwrap_err().to_string();
        assert!(e.contains("TA_GAS_GAMA"));
    }

    #[test]
    fn noncompact_axial_data_is_rejected() {
        assert!(parse_config("[axisym]\nq1 = cos(theta)").is_err());
        assert!(parse_config("[perturbation]\ng0 = bump(0, 1)").is_err());
    }

    #[test]
    fn every_preset_parses() {
        for (name, text) in PRESETS {
            let c = parse_config(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(c.echo().is_object());
        }
        assert_eq!(parse_config(preset("irrotational-eps-scaling").unwrap()).unwrap().epsilon.len(), 3);
        assert_eq!(preset("nope").unwrap_err().exit_code(), 2);
    }

    proptest! {
        #[test]
        fn echo_round_trips(gamma in 1.01f64..2.99, nr in 9usize..400, eps in 0.0f64..0.1) {
            let text = format!("gamma = {gamma}\nnr = {nr}\nepsilon = {eps}\n");
            let c = parse_config(&text).unwrap();
            let mut back = String::new();
            for (k, _, _) in KEYS {
                let v = c.get(k);
                let s = match &v { Value::String(s) => s.clone(), other => json_text(other).unwrap() };
                back.push_str(&format!("{k} = {s}\n"));
            }
            prop_assert_eq!(parse_config(&back).unwrap(), c);
        }
    }
}
