#!/usr/bin/env python3
"""
Tests for configuration loading, validation rules and the chirp-sim CLI.

Usage:
    ./test_config_cli.py              # Run all tests
    ./test_config_cli.py -v           # Verbose output
    python -m pytest test_config_cli.py  # Using pytest
"""

import os
import sys
import tempfile
from pathlib import Path

import yaml

from harness import REPO_ROOT, run_tests

from chirp_toolkit.cli import EXIT_CHECK_FAILED, EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, build_parser, main
from chirp_toolkit.config import load_config, validate_config_file
from chirp_toolkit.presets import (
    PRESETS_ENV,
    get_phase_noise_shape,
    get_scenario,
    list_phase_noise_presets,
    list_scenario_presets,
    reload_presets,
)
from chirp_toolkit.schemas import ValidationError, counter_capacity_issue, n_dac_issue, validate_run_config

CONFIGS = REPO_ROOT / "configs"


def _raises(exc, fn, *args, **kwargs) -> str:
    try:
        fn(*args, **kwargs)
    except exc as e:
        return str(e)
    raise AssertionError(f"{fn.__name__} did not raise {exc.__name__}")


def _small_raw(**overrides):
    raw = {
        "seed": 3,
        "dt_ps": 10,
        "vco": {"preset": "reference"},
        "counter": {"ideal": True},
        "learn": {"order": 5, "n_chart": 100},
        "qdac": {"i_lsb_na": 2.5, "c_dac_pf": 25.0},
        "plans": [{"name": "p1", "t_chirp_us": 1, "f_dac_mhz": 80}],
        "phase_noise": "none",
        "scenarios": [{"name": "near", "targets": [{"range_m": 4.0}]}],
    }
    raw.update(overrides)
    return raw


def _write(tmp, raw, name="cfg.yaml") -> Path:
    path = Path(tmp) / name
    path.write_text(yaml.safe_dump(raw, sort_keys=False))
    return path


# ==============================================================================
# Test: configuration loading
# ==============================================================================


def test_load_reference_config():
    cfg = load_config(CONFIGS / "reference_reproduction.yaml")
    assert cfg.seed == 7
    assert abs(cfg.dt - 10e-12) < 1e-24
    assert cfg.counter is None and cfg.learn.ideal
    assert abs(cfg.qdac.i_lsb - 2.5e-9) < 1e-20
    assert abs(cfg.qdac.c_dac - 25e-12) < 1e-22
    assert [p.name for p in cfg.plans] == ["5us_80mhz", "20us_80mhz"]
    assert cfg.plan("5us_80mhz").plan.n_dac == 400
    assert cfg.phase_noise_shape is not None and cfg.phase_noise_shape.kind == "open_loop"
    assert [s.name for s in cfg.scenarios] == ["r23m", "r92m"]
    assert len(cfg.checks) == 6
    _raises(ValidationError, cfg.plan, "missing")


def test_bundled_configs_validate():
    for path in sorted(CONFIGS.glob("*.yaml")):
        assert validate_config_file(path) == [], path


def test_counter_config_built_when_not_ideal():
    with tempfile.TemporaryDirectory() as tmp:
        counter = {"ideal": False, "f_meas_khz": 100, "n_bits": 24, "repeats": 8}
        cfg = load_config(_write(tmp, _small_raw(counter=counter)), seed=12, output_dir=Path(tmp) / "out")
    assert cfg.counter is not None
    assert cfg.counter.f_meas == 100e3 and cfg.counter.repeats == 8
    assert cfg.counter.seed == 12 and cfg.seed == 12
    assert cfg.output_dir == Path(tmp) / "out"
    assert cfg.raw["output_dir"] == str(Path(tmp) / "out")


def test_custom_scenario_and_vco_path():
    with tempfile.TemporaryDirectory() as tmp:
        from chirp_toolkit.files import save_model
        from chirp_toolkit.vco_model import reference_vco_model

        save_model(reference_vco_model(), Path(tmp) / "vco.yaml")
        scenarios = [{"name": "pair", "targets": [{"range_m": 40.0}, {"range_m": 60.0, "amplitude": 0.5}]}]
        cfg = load_config(_write(tmp, _small_raw(vco={"path": "vco.yaml"}, scenarios=scenarios)))
    assert cfg.vco.coeffs == reference_vco_model().coeffs
    assert [t.amplitude for t in cfg.scenarios[0].targets] == [1.0, 0.5]


def test_builtin_presets():
    assert {"none", "open_loop", "pedestal_5mhz"} <= set(list_phase_noise_presets())
    assert get_phase_noise_shape("none") is None
    pedestal = get_phase_noise_shape("pedestal_5mhz")
    assert pedestal.kind == "pedestal" and pedestal.bw == 5e6
    sc = get_scenario("multi_target_si", 10e-12)
    assert [t.range_m for t in sc.targets] == [23.0, 25.0]
    assert sc.self_interference is not None and sc.name == "multi_target_si"
    assert "unknown phase-noise preset" in _raises(ValidationError, get_phase_noise_shape, "loud")


def test_presets_env_override():
    with tempfile.TemporaryDirectory() as tmp:
        registry = Path(tmp) / "presets.yaml"
        registry.write_text(
            yaml.safe_dump(
                {
                    "phase_noise": {"flat": {"kind": "tabulated", "table": [[0.1, -100.0], [10.0, -100.0]]}},
                    "scenarios": {"wall": {"targets": [{"range_m": 7.5}]}},
                }
            )
        )
        previous = os.environ.get(PRESETS_ENV)
        os.environ[PRESETS_ENV] = str(registry)
        reload_presets()
        try:
            assert list_phase_noise_presets() == ["flat"]
            assert list_scenario_presets() == ["wall"]
            assert get_phase_noise_shape("flat").level_at(1e6) == -100.0
        finally:
            if previous is None:
                del os.environ[PRESETS_ENV]
            else:
                os.environ[PRESETS_ENV] = previous
            reload_presets()
    assert "open_loop" in list_phase_noise_presets()


def test_unreadable_config():
    with tempfile.TemporaryDirectory() as tmp:
        assert "cannot read" in _raises(ValidationError, load_config, Path(tmp) / "absent.yaml")
        broken = Path(tmp) / "broken.yaml"
        broken.write_text("plans: [\n")
        assert "invalid YAML" in _raises(ValidationError, load_config, broken)


# ==============================================================================
# Test: validation rules
# ==============================================================================


def test_n_dac_rule():
    assert n_dac_issue(10e6, 5e-6) is None
    msg = n_dac_issue(10e6, 5.05e-6)
    assert "N_DAC rule" in msg and "50.5" in msg
    issues = validate_run_config(_small_raw(plans=[{"name": "odd", "t_chirp_us": 5.05, "f_dac_mhz": 10}]))
    assert any(i.startswith("plans[0]: N_DAC rule") for i in issues), issues


def test_counter_overflow_rule():
    assert counter_capacity_issue(9e9, 1e6, 24) is None
    assert "counter overflow rule" in counter_capacity_issue(9e9, 1e6, 13)
    counter = {"ideal": False, "f_meas_khz": 1000, "n_bits": 13}
    issues = validate_run_config(_small_raw(counter=counter))
    assert any(i.startswith("counter: counter overflow rule") for i in issues), issues


def test_all_issues_reported_together():
    raw = _small_raw(
        phase_noise="open_loop",
        seed=None,
        learn={"order": 5, "n_chart": 4},
        plans=[{"name": "x", "t_chirp_us": 1, "f_dac_mhz": 80, "interpolation": "cubic"}],
        analysis={"window": "kaiser"},
    )
    issues = validate_run_config(raw)
    joined = "\n".join(issues)
    for fragment in ("seed: mandatory", "learn.n_chart", "plans[0].interpolation", "analysis.window"):
        assert fragment in joined, fragment
    _raises(ValidationError, validate_run_config, raw, strict=True)


def test_missing_sections_and_bad_checks():
    issues = validate_run_config({"vco": {"preset": "reference"}})
    assert any("missing required sections" in i for i in issues)
    raw = _small_raw(checks=[{"metric": "speed", "expected": 1.0}])
    joined = "\n".join(validate_run_config(raw))
    assert "checks[0].metric" in joined and "give abs_tol or rel_tol" in joined


def test_unknown_preset_caught_by_validate():
    with tempfile.TemporaryDirectory() as tmp:
        issues = validate_config_file(_write(tmp, _small_raw(scenarios=[{"name": "s", "preset": "nowhere"}])))
    assert len(issues) == 1 and "unknown scenario preset" in issues[0]


# ==============================================================================
# Test: CLI
# ==============================================================================


def test_parser_shape():
    parser = build_parser()
    args = parser.parse_args(["run", "--config", "c.yaml", "--stage", "learn", "--check", "-j", "3"])
    assert args.stage == "learn" and args.check and args.jobs == 3
    args = parser.parse_args(["synth", "-c", "c.yaml", "--from", "runs/a"])
    assert args.command == "synth" and args.from_dir == Path("runs/a")
    args = parser.parse_args(["validate", "c.yaml"])
    assert args.path == Path("c.yaml")


def test_cli_validate_exit_codes():
    with tempfile.TemporaryDirectory() as tmp:
        good = _write(tmp, _small_raw(), "good.yaml")
        bad = _write(tmp, _small_raw(plans=[{"name": "odd", "t_chirp_us": 5.05, "f_dac_mhz": 10}]), "bad.yaml")
        assert main(["validate", str(good)]) == EXIT_OK
        assert main(["validate", "--config", str(good)]) == EXIT_OK
        assert main(["validate", str(bad)]) == EXIT_VALIDATION
        assert main(["validate", str(Path(tmp) / "absent.yaml")]) == EXIT_VALIDATION


def test_cli_run_report_and_checks():
    with tempfile.TemporaryDirectory() as tmp:
        checks = [{"metric": "rms_fm_error_hz", "expected": 1e12, "abs_tol": 1.0}]
        cfg = _write(tmp, _small_raw(checks=checks))
        out = Path(tmp) / "out"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        assert (out / "report.json").exists()
        assert main(["report", str(out)]) == EXIT_OK
        assert main(["report", str(out / "report.json")]) == EXIT_OK
        assert main(["run", "-c", str(cfg), "-o", str(out), "--check"]) == EXIT_CHECK_FAILED
        assert main(["report", str(Path(tmp) / "nowhere")]) == EXIT_VALIDATION


def test_cli_stage_commands():
    with tempfile.TemporaryDirectory() as tmp:
        cfg = _write(tmp, _small_raw())
        first = Path(tmp) / "first"
        assert main(["learn", "-c", str(cfg), "-o", str(first)]) == EXIT_OK
        assert (first / "backward_model.yaml").exists()
        assert not (first / "plans").exists()
        second = Path(tmp) / "second"
        assert main(["predistort", "-c", str(cfg), "-o", str(second), "--from", str(first)]) == EXIT_OK
        assert (second / "plans" / "p1" / "program.csv").exists()


def test_cli_runtime_failure():
    with tempfile.TemporaryDirectory() as tmp:
        qdac = {"i_lsb_na": 2.5, "c_dac_pf": 25.0, "code_min": -10, "code_max": 10}
        cfg = _write(tmp, _small_raw(qdac=qdac))
        assert main(["run", "-c", str(cfg), "-o", str(Path(tmp) / "out")]) == EXIT_RUNTIME
        manifest = yaml.safe_load((Path(tmp) / "out" / "manifest.yaml").read_text())
        assert manifest["status"] == "FAILED"


def main_tests():
    tests = [
        test_load_reference_config,
        test_bundled_configs_validate,
        test_counter_config_built_when_not_ideal,
        test_custom_scenario_and_vco_path,
        test_builtin_presets,
        test_presets_env_override,
        test_unreadable_config,
        test_n_dac_rule,
        test_counter_overflow_rule,
        test_all_issues_reported_together,
        test_missing_sections_and_bad_checks,
        test_unknown_preset_caught_by_validate,
        test_parser_shape,
        test_cli_validate_exit_codes,
        test_cli_run_report_and_checks,
        test_cli_stage_commands,
        test_cli_runtime_failure,
    ]
    return run_tests("config and CLI Tests", tests)


if __name__ == "__main__":
    sys.exit(main_tests())
