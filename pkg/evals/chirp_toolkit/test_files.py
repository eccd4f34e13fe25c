#!/usr/bin/env python3
"""
Unit tests for model, chart, program and waveform files.

Usage:
    ./test_files.py              # Run all tests
    ./test_files.py -v           # Verbose output
    python -m pytest test_files.py  # Using pytest
"""

import hashlib
import sys
import tempfile
from pathlib import Path

import numpy as np
import yaml

from harness import run_tests

from chirp_toolkit.backward_learner import learn_backward
from chirp_toolkit.files import (
    file_digest,
    load_backward,
    load_chart,
    load_json,
    load_model,
    load_program,
    load_series,
    save_backward,
    save_chart,
    save_json,
    save_model,
    save_program,
    save_rows,
    save_series,
    save_series_binary,
    save_spectrum,
)
from chirp_toolkit.freq_counter import chart_tuning_curve
from chirp_toolkit.predistortion import ChirpPlan, QdacConfig, solve_dac_codes
from chirp_toolkit.schemas import ValidationError
from chirp_toolkit.series import TimeSeries
from chirp_toolkit.spectral_analysis import windowed_dft
from chirp_toolkit.vco_model import reference_vco_model


def _raises(exc, fn, *args, **kwargs) -> str:
    try:
        fn(*args, **kwargs)
    except exc as e:
        return str(e)
    raise AssertionError(f"{fn.__name__} did not raise {exc.__name__}")


# ==============================================================================
# Test: model files
# ==============================================================================


def test_model_file_keys_and_reload():
    model = reference_vco_model()
    with tempfile.TemporaryDirectory() as tmp:
        path = save_model(model, Path(tmp) / "vco_model.yaml")
        data = yaml.safe_load(path.read_text())
        assert data["kind"] == "tuning_curve_model"
        assert data["schema_version"] == 1
        assert data["f_base_ghz"] == model.f_base
        assert "coeff_ghz_per_v5" in data
        loaded = load_model(path)
    assert loaded.coeffs == model.coeffs
    assert (loaded.v_min, loaded.v_max) == (model.v_min, model.v_max)


def test_model_file_rejections():
    with tempfile.TemporaryDirectory() as tmp:
        newer = Path(tmp) / "newer.yaml"
        newer.write_text("kind: tuning_curve_model\nschema_version: 99\norder: 1\n")
        assert "newer than supported" in _raises(ValidationError, load_model, newer)

        wrong = Path(tmp) / "wrong.yaml"
        wrong.write_text("kind: backward_model\norder: 1\n")
        assert "not a tuning_curve_model" in _raises(ValidationError, load_model, wrong)

        partial = Path(tmp) / "partial.yaml"
        partial.write_text("kind: tuning_curve_model\norder: 2\ncoeff_ghz_per_v0: 0.0\ncoeff_ghz_per_v1: 1.0\n")
        assert "missing coefficient" in _raises(ValidationError, load_model, partial)


def test_backward_file_reload():
    chart = chart_tuning_curve(reference_vco_model(), 100, ideal=True)
    bm = learn_backward(chart, 5).model
    with tempfile.TemporaryDirectory() as tmp:
        path = save_backward(bm, Path(tmp) / "backward_model.yaml")
        data = yaml.safe_load(path.read_text())
        assert data["frequency_unit"] == "GHz"
        assert "b_v_per_ghz_root5" in data and "b_v_per_ghz_root1" not in data
        loaded = load_backward(path)
    assert loaded.b_poly == bm.b_poly
    assert loaded.b_frac == bm.b_frac
    assert (loaded.v_offset, loaded.f_offset, loaded.f_span) == (bm.v_offset, bm.f_offset, bm.f_span)


# ==============================================================================
# Test: chart and program tables
# ==============================================================================


def test_chart_csv():
    chart = chart_tuning_curve(reference_vco_model(), 20, ideal=True)
    with tempfile.TemporaryDirectory() as tmp:
        path = save_chart(chart, Path(tmp) / "chart.csv")
        assert path.read_text().splitlines()[0] == "v_volts,f_hat_ghz"
        loaded = load_chart(path)
        assert np.array_equal(loaded.voltages, chart.voltages)
        assert np.array_equal(loaded.f_hat, chart.f_hat)

        bad = Path(tmp) / "bad.csv"
        bad.write_text("volts,ghz\n0,1\n")
        assert "expected header" in _raises(ValidationError, load_chart, bad)


def test_program_csv():
    plan = ChirpPlan(t_chirp=1e-6, f_dac=10e6)
    prog = solve_dac_codes(np.linspace(0.1, 0.15, 11) ** 1.1, QdacConfig(), plan)
    with tempfile.TemporaryDirectory() as tmp:
        path = save_program(prog, Path(tmp) / "program.csv")
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# k_dac_v:")
        assert lines[1] == "step,code,v_target,v_reconstructed"
        assert lines[2].split(",")[:2] == ["0", "0"]
        loaded = load_program(path)

        headless = Path(tmp) / "headless.csv"
        headless.write_text("\n".join(lines[1:]) + "\n")
        _raises(ValidationError, load_program, headless)
    assert loaded.v_start == prog.v_start
    assert loaded.k_dac == prog.k_dac
    assert np.array_equal(loaded.codes, prog.codes)
    assert np.array_equal(loaded.v_target, prog.v_target)


# ==============================================================================
# Test: waveforms, spectra and reports
# ==============================================================================


def test_series_csv_decimation():
    ts = TimeSeries(1e-9, np.arange(100, dtype=float), 5e-9, "voltage")
    with tempfile.TemporaryDirectory() as tmp:
        path = save_series(ts, Path(tmp) / "v.csv", decimate=10)
        loaded = load_series(path)
        _raises(ValidationError, save_series, ts, Path(tmp) / "x.csv", 0)
    assert len(loaded) == 10
    assert loaded.label == "voltage"
    assert abs(loaded.dt - 1e-8) < 1e-20
    assert abs(loaded.t0 - 5e-9) < 1e-20
    assert loaded.values.tolist() == list(range(0, 100, 10))


def test_series_binary_sidecar():
    rng = np.random.default_rng(0)
    ts = TimeSeries(10e-12, rng.normal(size=257), 0.0, "phase_rad")
    with tempfile.TemporaryDirectory() as tmp:
        paths = save_series_binary(ts, Path(tmp) / "phase_noise.npy")
        assert [p.name for p in paths] == ["phase_noise.npy", "phase_noise.yaml"]
        meta = yaml.safe_load(paths[1].read_text())
        assert meta["kind"] == "time_series" and meta["n_samples"] == 257
        loaded = load_series(paths[0])
        again = save_series_binary(ts, Path(tmp) / "copy")
        assert paths[0].read_bytes() == again[0].read_bytes()
    assert np.array_equal(loaded.values, ts.values)
    assert loaded.dt == ts.dt and loaded.label == "phase_rad"


def test_spectrum_csv():
    spectrum = windowed_dft(TimeSeries(1e-9, np.sin(2 * np.pi * 0.1 * np.arange(100))))
    with tempfile.TemporaryDirectory() as tmp:
        text = save_spectrum(spectrum, Path(tmp) / "s.csv").read_text().splitlines()
    assert text[0] == "# reference: dBFS"
    assert text[1] == "# window: hann"
    assert text[3] == "df_hz,level_db"
    assert len(text) == 4 + len(spectrum)


def test_rows_and_json():
    with tempfile.TemporaryDirectory() as tmp:
        rows = save_rows([{"order": 1, "level_db": -40.5}, {"order": 2}], Path(tmp) / "r.csv", ["order", "level_db"])
        assert rows.read_text().splitlines() == ["order,level_db", "1,-40.5", "2,"]

        first = save_json({"b": 1, "a": [1.5, None]}, Path(tmp) / "one.json")
        second = save_json({"a": [1.5, None], "b": 1}, Path(tmp) / "two.json")
        assert first.read_bytes() == second.read_bytes()
        assert load_json(first) == {"a": [1.5, None], "b": 1}
        assert file_digest(first) == hashlib.sha256(first.read_bytes()).hexdigest()


def main():
    tests = [
        test_model_file_keys_and_reload,
        test_model_file_rejections,
        test_backward_file_reload,
        test_chart_csv,
        test_program_csv,
        test_series_csv_decimation,
        test_series_binary_sidecar,
        test_spectrum_csv,
        test_rows_and_json,
    ]
    return run_tests("files Unit Tests", tests)


if __name__ == "__main__":
    sys.exit(main())
