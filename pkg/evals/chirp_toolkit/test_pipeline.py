#!/usr/bin/env python3
"""
Integration tests for the chart-and-chirp pipeline.

Runs a short (1 us) chirp through every stage and checks artifacts,
manifests, determinism, partial runs and failure handling.

Usage:
    ./test_pipeline.py              # Run all tests
    ./test_pipeline.py -v           # Verbose output
    python -m pytest test_pipeline.py  # Using pytest
"""

import dataclasses
import sys
import tempfile
from pathlib import Path

import numpy as np
import yaml

from harness import run_tests

from chirp_toolkit.config import CheckSpec, build_config
from chirp_toolkit.files import file_digest, load_json
from chirp_toolkit.pipeline import STAGES, _phase_error_readout, evaluate_checks, run_pipeline
from chirp_toolkit.schemas import SaturationError, StageError, ValidationError
from chirp_toolkit.series import SpectrumEstimate


def _raises(exc, fn, *args, **kwargs):
    try:
        fn(*args, **kwargs)
    except exc as e:
        return e
    raise AssertionError(f"{fn.__name__} did not raise {exc.__name__}")


def _small_raw(out_dir, **overrides):
    raw = {
        "seed": 3,
        "dt_ps": 10,
        "output_dir": str(out_dir),
        "vco": {"preset": "reference"},
        "counter": {"ideal": True},
        "learn": {"order": 5, "n_chart": 100},
        "qdac": {"i_lsb_na": 2.5, "c_dac_pf": 25.0},
        "plans": [{"name": "p1", "t_chirp_us": 1, "f_dac_mhz": 80}],
        "phase_noise": "open_loop",
        "scenarios": [
            {"name": "near", "targets": [{"range_m": 4.0}]},
            {"name": "far", "targets": [{"range_m": 6.0}]},
        ],
        "analysis": {"csv_decimate": 10},
    }
    raw.update(overrides)
    return raw


def _small_config(out_dir, **overrides):
    return build_config(_small_raw(out_dir, **overrides))


# ==============================================================================
# Test: full runs
# ==============================================================================


def test_full_run_artifacts():
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "run"
        result = run_pipeline(_small_config(out))
        for rel in (
            "vco_model.yaml",
            "chart.csv",
            "backward_model.yaml",
            "report.json",
            "plans/p1/program.csv",
            "plans/p1/chirp.npy",
            "plans/p1/chirp.yaml",
            "plans/p1/tuning_voltage.csv",
            "plans/p1/fm_error.csv",
            "plans/p1/fm_error_spectrum.csv",
            "plans/p1/phase_error_spectrum.csv",
            "cases/p1__near/phase_noise.npy",
            "cases/p1__near/if.npy",
            "cases/p1__near/if_spectrum.csv",
            "cases/p1__far/spurs_measured.csv",
        ):
            assert (out / rel).exists(), rel

        report = load_json(out / "report.json")
        assert report == result.report
        assert report["seed"] == 3
        assert report["learn"]["order"] == 5
        assert report["plans"]["p1"]["n_dac"] == 80
        assert report["plans"]["p1"]["rms_fm_error_hz"] > 0
        assert set(report["cases"]) == {"p1__near", "p1__far"}
        assert report["cases"]["p1__near"]["scenario"] == "near"
        near = report["cases"]["p1__near"]
        assert "peak_to_floor_db" in near
        assert len(near["skirt_nulls_hz"]) == len(near["skirt_nulls_predicted_hz"]) == 3
        assert near["skirt_null_error_hz"] == max(
            abs(m - p) for m, p in zip(near["skirt_nulls_hz"], near["skirt_nulls_predicted_hz"])
        )
        assert result.checks == [] and result.checks_passed


def test_manifest_lists_every_file():
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "run"
        result = run_pipeline(_small_config(out))
        manifest = yaml.safe_load(result.manifest_path.read_text())
        assert manifest["status"] == "ok"
        assert manifest["failed_stage"] is None
        assert manifest["stages"] == list(STAGES)
        assert manifest["parameters"]["seed"] == 3
        listed = {entry["path"]: entry for entry in manifest["files"]}
        on_disk = {p.relative_to(out).as_posix() for p in out.rglob("*") if p.is_file()}
        assert set(listed) == on_disk - {"manifest.yaml"}
        for rel, entry in listed.items():
            assert entry["sha256"] == file_digest(out / rel)
            assert entry["bytes"] == (out / rel).stat().st_size


def test_same_seed_same_report():
    with tempfile.TemporaryDirectory() as tmp:
        first = run_pipeline(_small_config(Path(tmp) / "a"))
        second = run_pipeline(_small_config(Path(tmp) / "b"), jobs=2)
        a, b = first.out_dir, second.out_dir
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
        for rel in ("cases/p1__near/phase_noise.npy", "cases/p1__far/if.npy", "plans/p1/chirp.npy"):
            assert file_digest(a / rel) == file_digest(b / rel), rel

        other = run_pipeline(_small_config(Path(tmp) / "c", seed=4))
        assert file_digest(a / "plans/p1/chirp.npy") == file_digest(other.out_dir / "plans/p1/chirp.npy")
        near = "cases/p1__near/phase_noise.npy"
        assert file_digest(a / near) != file_digest(other.out_dir / near)


def test_cases_draw_independent_noise():
    with tempfile.TemporaryDirectory() as tmp:
        out = run_pipeline(_small_config(Path(tmp) / "run")).out_dir
        near = file_digest(out / "cases/p1__near/phase_noise.npy")
        far = file_digest(out / "cases/p1__far/phase_noise.npy")
        assert near != far


# ==============================================================================
# Test: partial runs
# ==============================================================================


def test_stop_after_learn():
    with tempfile.TemporaryDirectory() as tmp:
        result = run_pipeline(_small_config(Path(tmp) / "run"), stop_after="learn")
        assert "learn" in result.report and "plans" not in result.report
        manifest = yaml.safe_load(result.manifest_path.read_text())
        assert manifest["stages"] == ["chart", "learn"]
        assert not (result.out_dir / "plans").exists()


def test_resume_analyze_from_earlier_run():
    with tempfile.TemporaryDirectory() as tmp:
        full = run_pipeline(_small_config(Path(tmp) / "full"))
        resumed = run_pipeline(
            _small_config(Path(tmp) / "resumed"), start_at="analyze", source_dir=full.out_dir
        )
        before, after = full.report, resumed.report
        assert "learn" not in after
        assert after["plans"]["p1"]["rms_fm_error_hz"] == before["plans"]["p1"]["rms_fm_error_hz"]
        for key in ("p1__near", "p1__far"):
            assert after["cases"][key]["spurs_measured"] == before["cases"][key]["spurs_measured"]
        manifest = yaml.safe_load(resumed.manifest_path.read_text())
        assert manifest["stages"] == ["analyze"]


def test_stage_order_rejected():
    with tempfile.TemporaryDirectory() as tmp:
        cfg = _small_config(Path(tmp) / "run")
        _raises(ValidationError, run_pipeline, cfg, "chart", "learn")
        _raises(ValidationError, run_pipeline, cfg, "plot")
        _raises(ValidationError, run_pipeline, dataclasses.replace(cfg, seed=None))


# ==============================================================================
# Test: failures
# ==============================================================================


def test_failed_stage_writes_manifest():
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "run"
        cfg = _small_config(out, qdac={"i_lsb_na": 2.5, "c_dac_pf": 25.0, "code_min": -100, "code_max": 100})
        err = _raises(StageError, run_pipeline, cfg)
        assert err.stage == "predistort"
        assert isinstance(err.cause, SaturationError)
        assert "stage 'predistort' failed" in str(err)

        manifest = yaml.safe_load((out / "manifest.yaml").read_text())
        assert manifest["status"] == "FAILED"
        assert manifest["failed_stage"] == "predistort"
        assert "outside [-100, 100]" in manifest["error"]
        assert {e["path"] for e in manifest["files"]} >= {"chart.csv", "backward_model.yaml"}
        assert not (out / "report.json").exists()


# ==============================================================================
# Test: evaluate_checks()
# ==============================================================================


def test_evaluate_checks():
    report = {
        "plans": {"a": {"rms_fm_error_hz": 50e3}, "b": {"rms_fm_error_hz": 80e3}},
        "cases": {
            "a__x": {
                "plan": "a",
                "scenario": "x",
                "sndr_db": 40.2,
                "peak_to_floor_db": 41.0,
                "skirt_null_error_hz": 0.4e6,
            },
            "b__x": {"plan": "b", "scenario": "x", "sndr_db": None},
        },
    }
    checks = [
        CheckSpec("rms_fm_error_hz", 50e3, rel_tol=0.3, plan="a"),
        CheckSpec("rms_fm_error_hz", 50e3, rel_tol=0.3),
        CheckSpec("sndr_db", 40.0, abs_tol=3.0, plan="a", scenario="x"),
        CheckSpec("sndr_db", 24.0, abs_tol=3.0, plan="b"),
        CheckSpec("sndr_db", 24.0, abs_tol=3.0, scenario="missing"),
        CheckSpec("peak_to_floor_db", 40.0, abs_tol=3.0, plan="a"),
        CheckSpec("skirt_null_error_hz", 0.0, abs_tol=2e6, scenario="x"),
    ]
    results = evaluate_checks(checks, report)
    assert [(r["where"], r["passed"]) for r in results] == [
        ("a", True),
        ("a", True),
        ("b", False),
        ("a__x", True),
        ("b__x", False),
        ("(no match)", False),
        ("a__x", True),
        ("a__x", True),
        ("b__x", False),
    ]
    assert results[0]["tolerance"] == 15e3


# ==============================================================================
# Test: phase-error read-out
# ==============================================================================


def test_phase_error_readout_on_falling_density():
    df = 10e3
    freqs = df * np.arange(1, 1001)
    density = 2.0 * 10.0 ** ((-70.0 - 20.0 * np.log10(freqs / 1e6)) / 10.0)
    spectrum = SpectrumEstimate(df=df, values=density, kind="density", f_start=df)
    level, slope = _phase_error_readout(spectrum)
    assert abs(level + 70.0) < 1e-9
    assert abs(slope + 20.0) < 0.5

    coarse = SpectrumEstimate(df=1e6, values=density[::100], kind="density", f_start=1e6)
    assert _phase_error_readout(coarse) == (None, None)


def main():
    tests = [
        test_full_run_artifacts,
        test_manifest_lists_every_file,
        test_same_seed_same_report,
        test_cases_draw_independent_noise,
        test_stop_after_learn,
        test_resume_analyze_from_earlier_run,
        test_stage_order_rejected,
        test_failed_stage_writes_manifest,
        test_evaluate_checks,
        test_phase_error_readout_on_falling_density,
    ]
    return run_tests("pipeline Integration Tests", tests)


if __name__ == "__main__":
    sys.exit(main())
