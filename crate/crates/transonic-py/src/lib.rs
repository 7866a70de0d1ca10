//! Python bindings. Results cross the boundary as JSON text, which the Python side loads
//! with `json.loads`; the layout is the one written to `report.json`.

use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use transonic::config::{self, RunConfig};
use transonic::{probes, run, Error};

fn to_py(e: Error) -> PyErr {
    let msg = format!("{e} (exit code {})", e.exit_code());
    match e {
        Error::Parse { .. } | Error::Parameter(_) | Error::Domain(_) | Error::Admissibility { .. } => PyValueError::new_err(msg),
        _ => PyRuntimeError::new_err(msg),
    }
}

/// Parses configuration text (INI-like or JSON) and returns the validated configuration as JSON.
#[pyfunction]
fn parse_config(text: &str) -> PyResult<String> {
    let cfg = config::parse_config(text).map_err(to_py)?;
    Ok(cfg.echo().to_string())
}

fn build(text: &str, preset: Option<&str>) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::default();
    if let Some(name) = preset {
        config::apply(&mut cfg, &config::parse_assignments(config::preset(name)?)?)?;
    }
    config::apply(&mut cfg, &config::parse_assignments(text)?)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs a configuration into `out_dir` and returns the report JSON.
#[pyfunction]
#[pyo3(signature = (config_text, out_dir, preset=None))]
fn run_config(py: Python<'_>, config_text: &str, out_dir: &str, preset: Option<&str>) -> PyResult<String> {
    let cfg = build(config_text, preset).map_err(to_py)?;
    let dir = out_dir.to_string();
    let report = py.detach(move || run::execute_in(&cfg, Path::new(&dir))).map_err(to_py)?;
    Ok(report.to_json())
}

/// Runs one acceptance probe by name and returns its outcome as JSON.
#[pyfunction]
fn acceptance_probe(py: Python<'_>, name: &str) -> PyResult<String> {
    let name = name.to_string();
    let outcome = py.detach(move || probes::acceptance(&name)).map_err(to_py)?;
    Ok(serde_json::to_string(&outcome).expect("probe outcome serializes"))
}

#[pyfunction]
fn acceptance_names() -> Vec<&'static str> {
    probes::ACCEPTANCE.iter().map(|(n, _)| *n).collect()
}

#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    config::PRESETS.iter().map(|(n, _)| *n).collect()
}

/// The JSON schema every report validates against.
#[pyfunction]
fn report_schema() -> &'static str {
    transonic::report::SCHEMA
}

#[pymodule]
fn transonic_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(parse_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(acceptance_probe, m)?)?;
    m.add_function(wrap_pyfunction!(acceptance_names, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(report_schema, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_build_with_empty_overrides() {
        for name in preset_names() {
            assert!(build("", Some(name)).is_ok(), "{name}");
        }
        assert_eq!(build("gamma = 4", None).unwrap_err().exit_code(), 2);
    }
}
