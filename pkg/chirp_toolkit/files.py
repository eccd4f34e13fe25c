#!/usr/bin/env python3
"""
File formats for models, charts, programs, waveforms and spectra.

Models are YAML with unit-suffixed keys; tabular data is CSV; long
waveforms are stored as .npy with a YAML sidecar (dt, t0, label).

Usage:
    from chirp_toolkit.files import save_model, load_model, save_chart, load_chart

    save_model(model, out_dir / "vco_model.yaml")
    chart = load_chart(out_dir / "chart.csv")
"""

import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Union

import numpy as np
import yaml

from chirp_toolkit.backward_learner import BackwardModel
from chirp_toolkit.freq_counter import ChartRecord
from chirp_toolkit.predistortion import DacProgram, reconstruct_voltages
from chirp_toolkit.schemas import ValidationError
from chirp_toolkit.series import SpectrumEstimate, TimeSeries
from chirp_toolkit.vco_model import TuningCurveModel

# Current file-format version written into every YAML artifact
MODEL_SCHEMA_VERSION = 1

PathLike = Union[str, Path]


def _check_version(data: Dict[str, Any], kind: str, path: PathLike) -> None:
    if not isinstance(data, dict) or data.get("kind") != kind:
        raise ValidationError(f"{path}: not a {kind} file")
    version = data.get("schema_version", 0)
    if version > MODEL_SCHEMA_VERSION:
        raise ValidationError(
            f"{path}: schema_version {version} is newer than supported ({MODEL_SCHEMA_VERSION})"
        )


def _read_yaml(path: PathLike) -> Dict[str, Any]:
    try:
        with open(path) as f:
            return yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ValidationError(f"{path}: invalid YAML: {e}") from e


def _write_yaml(path: PathLike, data: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        yaml.safe_dump(data, f, sort_keys=False, default_flow_style=False)
    return path


# =============================================================================
# Models
# =============================================================================


def model_to_dict(model: TuningCurveModel) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        "kind": "tuning_curve_model",
        "schema_version": MODEL_SCHEMA_VERSION,
        "order": model.order,
        "f_base_ghz": model.f_base,
        "v_min_v": model.v_min,
        "v_max_v": model.v_max,
    }
    for p, a in enumerate(model.coeffs):
        data[f"coeff_ghz_per_v{p}"] = a
    return data


def model_from_dict(data: Dict[str, Any], path: PathLike = "<dict>") -> TuningCurveModel:
    _check_version(data, "tuning_curve_model", path)
    order = int(data["order"])
    try:
        coeffs = tuple(float(data[f"coeff_ghz_per_v{p}"]) for p in range(order + 1))
    except KeyError as e:
        raise ValidationError(f"{path}: missing coefficient {e}") from e
    return TuningCurveModel(
        coeffs,
        f_base=float(data.get("f_base_ghz", 8.644)),
        v_min=float(data.get("v_min_v", 0.0)),
        v_max=float(data.get("v_max_v", 1.0)),
    )


def save_model(model: TuningCurveModel, path: PathLike) -> Path:
    return _write_yaml(path, model_to_dict(model))


def load_model(path: PathLike) -> TuningCurveModel:
    return model_from_dict(_read_yaml(path), path)


def backward_to_dict(bm: BackwardModel) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        "kind": "backward_model",
        "schema_version": MODEL_SCHEMA_VERSION,
        "order": bm.order,
        "frequency_unit": "GHz",
        "v_offset_v": bm.v_offset,
        "f_offset_ghz": bm.f_offset,
        "f_span_ghz": bm.f_span,
    }
    for p, b in enumerate(bm.b_poly):
        data[f"b_v_per_ghz{p}"] = b
    for q, b in enumerate(bm.b_frac, start=2):
        data[f"b_v_per_ghz_root{q}"] = b
    return data


def backward_from_dict(data: Dict[str, Any], path: PathLike = "<dict>") -> BackwardModel:
    _check_version(data, "backward_model", path)
    order = int(data["order"])
    try:
        b_poly = tuple(float(data[f"b_v_per_ghz{p}"]) for p in range(order + 1))
        b_frac = tuple(float(data[f"b_v_per_ghz_root{q}"]) for q in range(2, order + 1))
    except KeyError as e:
        raise ValidationError(f"{path}: missing coefficient {e}") from e
    return BackwardModel(
        b_poly,
        b_frac,
        v_offset=float(data.get("v_offset_v", 0.0)),
        f_offset=float(data.get("f_offset_ghz", 0.0)),
        f_span=float(data.get("f_span_ghz", 0.0)),
    )


def save_backward(bm: BackwardModel, path: PathLike) -> Path:
    return _write_yaml(path, backward_to_dict(bm))


def load_backward(path: PathLike) -> BackwardModel:
    return backward_from_dict(_read_yaml(path), path)


# =============================================================================
# Tables
# =============================================================================


def _write_csv(path: PathLike, header: List[str], rows: Iterable[Iterable[Any]], comments: Iterable[str] = ()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        for line in comments:
            f.write(f"# {line}\n")
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def _read_csv(path: PathLike, header: List[str]) -> List[List[str]]:
    with open(path, newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
    reader = csv.reader(lines)
    found = next(reader, None)
    if found != header:
        raise ValidationError(f"{path}: expected header {','.join(header)}, got {found}")
    return [row for row in reader if row]


def save_chart(chart: ChartRecord, path: PathLike) -> Path:
    return _write_csv(path, ["v_volts", "f_hat_ghz"], zip(chart.voltages, chart.f_hat))


def load_chart(path: PathLike) -> ChartRecord:
    rows = _read_csv(path, ["v_volts", "f_hat_ghz"])
    data = np.array(rows, dtype=float)
    return ChartRecord(data[:, 0], data[:, 1])


def save_program(prog: DacProgram, path: PathLike) -> Path:
    """Step 0 holds the reset voltage; steps 1..N hold the codes."""
    target = prog.v_target if prog.v_target is not None else reconstruct_voltages(prog)
    realized = reconstruct_voltages(prog)
    codes = np.concatenate(([0], prog.codes))
    rows = [(k, int(codes[k]), target[k], realized[k]) for k in range(codes.size)]
    return _write_csv(
        path,
        ["step", "code", "v_target", "v_reconstructed"],
        rows,
        comments=[f"k_dac_v: {prog.k_dac!r}"],
    )


def load_program(path: PathLike) -> DacProgram:
    k_dac = None
    with open(path) as f:
        for line in f:
            if line.startswith("# k_dac_v:"):
                k_dac = float(line.split(":", 1)[1])
    if k_dac is None:
        raise ValidationError(f"{path}: missing '# k_dac_v:' header")
    rows = _read_csv(path, ["step", "code", "v_target", "v_reconstructed"])
    codes = [int(r[1]) for r in rows[1:]]
    target = [float(r[2]) for r in rows]
    return DacProgram(float(rows[0][3]), codes, k_dac, target)


# =============================================================================
# Waveforms and spectra
# =============================================================================


def save_series(ts: TimeSeries, path: PathLike, decimate: int = 1) -> Path:
    """CSV `t_s,value`, label and dt in header comments; keeps every decimate-th sample."""
    if decimate < 1:
        raise ValidationError(f"decimate must be >= 1, got {decimate}")
    times = ts.times[::decimate]
    values = ts.values[::decimate]
    return _write_csv(
        path,
        ["t_s", "value"],
        zip(times, values),
        comments=[f"label: {ts.label}", f"dt_s: {ts.dt * decimate!r}"],
    )


def load_series(path: PathLike) -> TimeSeries:
    path = Path(path)
    if path.suffix == ".npy":
        meta = _read_yaml(path.with_suffix(".yaml"))
        _check_version(meta, "time_series", path)
        values = np.load(path, allow_pickle=False)
        return TimeSeries(float(meta["dt_s"]), values, float(meta.get("t0_s", 0.0)), str(meta["label"]))
    label, dt = "dimensionless", None
    with open(path) as f:
        for line in f:
            if line.startswith("# label:"):
                label = line.split(":", 1)[1].strip()
            elif line.startswith("# dt_s:"):
                dt = float(line.split(":", 1)[1])
    rows = np.array(_read_csv(path, ["t_s", "value"]), dtype=float)
    if dt is None:
        dt = float(rows[1, 0] - rows[0, 0])
    return TimeSeries(dt, rows[:, 1], float(rows[0, 0]), label)


def save_series_binary(ts: TimeSeries, path: PathLike) -> List[Path]:
    """Values as .npy plus a YAML sidecar (same stem) holding dt, t0 and label."""
    path = Path(path).with_suffix(".npy")
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path, np.asarray(ts.values), allow_pickle=False)
    sidecar = _write_yaml(
        path.with_suffix(".yaml"),
        {
            "kind": "time_series",
            "schema_version": MODEL_SCHEMA_VERSION,
            "label": ts.label,
            "dt_s": ts.dt,
            "t0_s": ts.t0,
            "n_samples": len(ts),
        },
    )
    return [path, sidecar]


def save_spectrum(spectrum: SpectrumEstimate, path: PathLike) -> Path:
    """CSV `df_hz,level_db` (offset frequency and dB bin)."""
    return _write_csv(
        path,
        ["df_hz", "level_db"],
        zip(spectrum.frequencies, spectrum.bins),
        comments=[f"reference: {spectrum.reference}", f"window: {spectrum.window}", f"rbw_hz: {spectrum.df!r}"],
    )


def save_rows(rows: List[Dict[str, Any]], path: PathLike, header: List[str]) -> Path:
    return _write_csv(path, header, ([row.get(key) for key in header] for row in rows))


def save_json(data: Dict[str, Any], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def load_json(path: PathLike) -> Dict[str, Any]:
    with open(path) as f:
        return json.load(f)


def file_digest(path: PathLike) -> str:
    """SHA-256 of a file, read in chunks."""
    sha256 = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            sha256.update(chunk)
    return sha256.hexdigest()
