"""Smoke test of the Python bindings: runs small configurations and validates the reports.

Build and install the extension first, e.g. `maturin develop -m crates/transonic-py/Cargo.toml`.
Run with `pytest python/` or `python python/smoke_test.py`.
"""

import json
import tempfile

import jsonschema
import pytest

import transonic_py as tp

SCHEMA = json.loads(tp.report_schema())


def run(text, preset=None):
    with tempfile.TemporaryDirectory() as out:
        return json.loads(tp.run_config(text, out, preset))


def test_config_echo_has_every_section():
    cfg = json.loads(tp.parse_config("gamma = 1.3\n[domain]\nnr = 65\n"))
    assert cfg["gas"]["gamma"] == 1.3
    assert cfg["domain"]["nr"] == 65
    assert cfg["run"]["mode"] == "background"


def test_bad_gamma_raises_value_error():
    with pytest.raises(ValueError, match="exit code 2"):
        tp.parse_config("[gas]\ngamma = 3.5\n")


def test_background_report_validates():
    report = run("", preset="asset-background")
    jsonschema.validate(report, SCHEMA)
    assert report["passed"]
    assert abs(report["background"]["r_c"] - 1.545) < 1e-2


def test_irrotational_report_validates():
    report = run("mode = irrotational\nnr = 65\n")
    jsonschema.validate(report, SCHEMA)
    assert report["passed"]
    assert "sonic.csv" in report["artifacts"]


def test_acceptance_probe_runs():
    assert len(tp.acceptance_names()) == 10
    outcome = json.loads(tp.acceptance_probe("circulatory-closed-form"))
    assert outcome["passed"], outcome


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
