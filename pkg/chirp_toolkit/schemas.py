#!/usr/bin/env python3
"""
Error types and run-configuration validation for the chirp toolkit.

Provides:
- The exception hierarchy raised by every module
- Validation of the raw (parsed YAML) run configuration

Validators follow the warnings-list convention: they return a list of
human-readable issues prefixed with the dotted config path, and raise
ValidationError on the first issue when strict=True.

Usage:
    from chirp_toolkit.schemas import validate_run_config, ValidationError

    issues = validate_run_config(raw_dict)
    for issue in issues:
        print(issue)
"""

import math
from typing import Any, Dict, List, Optional


class ChirpToolkitError(Exception):
    """Base class for all toolkit errors."""
    pass


class ValidationError(ChirpToolkitError):
    """Raised when parameters or invariants are violated."""
    pass


class DomainError(ValidationError):
    """Raised when an argument falls outside a model's domain."""
    pass


class CounterOverflowError(ChirpToolkitError):
    """Raised when the cycle counter cannot hold the count for an input frequency."""
    pass


class OutlierRejectionError(ChirpToolkitError):
    """Raised when every repeated counter measurement is rejected as an outlier."""
    pass


class RankDeficiencyError(ChirpToolkitError):
    """Raised when a least-squares design matrix does not have full column rank."""
    pass


class SaturationError(ChirpToolkitError):
    """Raised when a required QDAC code falls outside the IDAC code range."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class RegimeError(ChirpToolkitError):
    """Raised when spur prediction leaves the small-modulation-index regime."""
    pass


class StageError(ChirpToolkitError):
    """Raised when a pipeline stage fails; names the stage and keeps the cause."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


# Required sections of a run configuration
RUN_CONFIG_REQUIRED_SECTIONS = {"vco", "learn", "qdac", "plans"}

VALID_INTERPOLATION_MODES = {"linear", "zoh"}
VALID_WINDOWS = {"hann", "rectangular"}
VALID_CHECK_METRICS = {
    "rms_fm_error_hz",
    "sndr_db",
    "peak_to_floor_db",
    "skirt_null_error_hz",
    "phase_error_at_1mhz_dbc",
    "phase_error_slope_db_per_decade",
    "ghost_level_db",
}

# Tolerance for the integer N_DAC rule
N_DAC_TOLERANCE = 1e-9


def _issue(issues: List[str], msg: str, strict: bool) -> None:
    if strict:
        raise ValidationError(msg)
    issues.append(msg)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _check_positive(
    section: Dict[str, Any],
    key: str,
    path: str,
    issues: List[str],
    strict: bool,
    required: bool = True,
    allow_zero: bool = False,
) -> Optional[float]:
    if key not in section or section[key] is None:
        if required:
            _issue(issues, f"{path}.{key}: missing required value", strict)
        return None
    value = section[key]
    if not _is_number(value):
        _issue(issues, f"{path}.{key}: must be a number, got {type(value).__name__}", strict)
        return None
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        _issue(issues, f"{path}.{key}: must be {bound}, got {value}", strict)
        return None
    return float(value)


def n_dac_issue(f_dac: float, t_chirp: float) -> Optional[str]:
    """
    Check the integer N_DAC rule.

    Args:
        f_dac: QDAC update rate in Hz
        t_chirp: Chirp duration in seconds

    Returns:
        Issue text, or None when f_dac * t_chirp is a positive integer
    """
    product = f_dac * t_chirp
    nearest = round(product)
    if nearest < 1 or abs(product - nearest) > N_DAC_TOLERANCE * max(1.0, product):
        return (
            f"N_DAC rule: f_dac * t_chirp must be a positive integer, got {product:.6g}"
        )
    return None


def counter_capacity_issue(f_in: float, f_meas: float, n_bits: int) -> Optional[str]:
    """
    Check the counter capacity rule for the largest input frequency.

    Args:
        f_in: Largest input frequency in Hz
        f_meas: Measurement-window reciprocal in Hz
        n_bits: Counter width in bits

    Returns:
        Issue text, or None when the counter cannot overflow
    """
    count_max = 2 ** int(n_bits) - 1
    needed = math.ceil(f_in / f_meas)
    if count_max < needed:
        return (
            f"counter overflow rule: 2^{n_bits}-1 = {count_max} < ceil(f_in/f_meas) = {needed}; "
            f"f_meas must be >= {f_in / count_max:.6g} Hz"
        )
    return None


def validate_plan(plan: Dict[str, Any], path: str = "plans[0]", strict: bool = False) -> List[str]:
    """
    Validate one chirp plan entry.

    Args:
        plan: Plan dict with unit-suffixed keys
        path: Config path used as issue prefix
        strict: If True, raise ValidationError on the first issue

    Returns:
        List of issue messages (empty if valid)
    """
    issues: List[str] = []

    if not isinstance(plan, dict):
        _issue(issues, f"{path}: must be a mapping, got {type(plan).__name__}", strict)
        return issues

    if not isinstance(plan.get("name"), str) or not plan.get("name"):
        _issue(issues, f"{path}.name: must be a non-empty string", strict)

    t_chirp_us = _check_positive(plan, "t_chirp_us", path, issues, strict)
    f_dac_mhz = _check_positive(plan, "f_dac_mhz", path, issues, strict)
    _check_positive(plan, "t_quiet_us", path, issues, strict, required=False)
    _check_positive(plan, "b_des_ghz", path, issues, strict, required=False)

    if t_chirp_us is not None and f_dac_mhz is not None:
        msg = n_dac_issue(f_dac_mhz * 1e6, t_chirp_us * 1e-6)
        if msg:
            _issue(issues, f"{path}: {msg}", strict)

    fraction = plan.get("start_fraction", 0.0)
    if not _is_number(fraction) or not 0.0 <= fraction < 1.0:
        _issue(issues, f"{path}.start_fraction: must be in [0, 1), got {fraction}", strict)

    mode = plan.get("interpolation", "linear")
    if mode not in VALID_INTERPOLATION_MODES:
        _issue(
            issues,
            f"{path}.interpolation: '{mode}' not one of {', '.join(sorted(VALID_INTERPOLATION_MODES))}",
            strict,
        )

    return issues


def validate_scenario(scenario: Dict[str, Any], path: str = "scenarios[0]", strict: bool = False) -> List[str]:
    """
    Validate one radar scenario entry.

    A scenario either names a preset or lists targets directly.

    Args:
        scenario: Scenario dict
        path: Config path used as issue prefix
        strict: If True, raise ValidationError on the first issue

    Returns:
        List of issue messages (empty if valid)
    """
    issues: List[str] = []

    if not isinstance(scenario, dict):
        _issue(issues, f"{path}: must be a mapping, got {type(scenario).__name__}", strict)
        return issues

    if not isinstance(scenario.get("name"), str) or not scenario.get("name"):
        _issue(issues, f"{path}.name: must be a non-empty string", strict)

    if "preset" in scenario:
        if not isinstance(scenario["preset"], str):
            _issue(issues, f"{path}.preset: must be a string", strict)
        return issues

    targets = scenario.get("targets")
    if not isinstance(targets, list) or not targets:
        _issue(issues, f"{path}.targets: must be a non-empty list (or give a preset)", strict)
        return issues

    for i, target in enumerate(targets):
        tpath = f"{path}.targets[{i}]"
        if not isinstance(target, dict):
            _issue(issues, f"{tpath}: must be a mapping", strict)
            continue
        _check_positive(target, "range_m", tpath, issues, strict)
        _check_positive(target, "amplitude", tpath, issues, strict, required=False)

    si = scenario.get("self_interference")
    if si is not None:
        if not isinstance(si, dict):
            _issue(issues, f"{path}.self_interference: must be a mapping", strict)
        else:
            _check_positive(si, "range_m", f"{path}.self_interference", issues, strict)
            _check_positive(si, "amplitude", f"{path}.self_interference", issues, strict, required=False)

    return issues


def validate_run_config(raw: Dict[str, Any], strict: bool = False) -> List[str]:
    """
    Validate a parsed run configuration.

    Structural checks only need the raw mapping; the cross-section rules
    (N_DAC integer, counter capacity against the VCO's top frequency) are
    evaluated here as well so the validate subcommand reports everything
    in one pass.

    Args:
        raw: Parsed YAML mapping
        strict: If True, raise ValidationError on the first issue

    Returns:
        List of issue messages (empty if valid)
    """
    issues: List[str] = []

    if not isinstance(raw, dict):
        _issue(issues, f"config must be a mapping, got {type(raw).__name__}", strict)
        return issues

    missing = RUN_CONFIG_REQUIRED_SECTIONS - set(raw.keys())
    if missing:
        _issue(issues, f"missing required sections: {', '.join(sorted(missing))}", strict)

    _check_positive(raw, "dt_ps", "config", issues, strict, required=False)

    # vco
    vco = raw.get("vco", {})
    vco_top_ghz: Optional[float] = None
    if isinstance(vco, dict):
        coeffs = vco.get("coeffs_ghz")
        if coeffs is None and "preset" not in vco and "path" not in vco:
            _issue(issues, "vco: give one of preset, path or coeffs_ghz", strict)
        if coeffs is not None:
            if not isinstance(coeffs, list) or len(coeffs) < 2 or not all(_is_number(c) for c in coeffs):
                _issue(issues, "vco.coeffs_ghz: must be a list of at least two numbers", strict)
                coeffs = None
        v_min = vco.get("v_min_v", 0.0)
        v_max = vco.get("v_max_v", 1.0)
        if not (_is_number(v_min) and _is_number(v_max)) or v_min >= v_max:
            _issue(issues, f"vco: v_min_v must be < v_max_v, got {v_min} and {v_max}", strict)
        f_base = vco.get("f_base_ghz", 8.644)
        if not _is_number(f_base) or f_base < 0:
            _issue(issues, f"vco.f_base_ghz: must be a non-negative number, got {f_base}", strict)
        elif coeffs is not None and _is_number(v_max):
            vco_top_ghz = f_base + sum(c * v_max ** p for p, c in enumerate(coeffs))
        elif _is_number(v_max):
            # preset models top out near the reference maximum
            vco_top_ghz = f_base + 1.0967 * max(v_max, 1.0)
    else:
        _issue(issues, "vco: must be a mapping", strict)

    # counter
    counter = raw.get("counter", {"ideal": True})
    if not isinstance(counter, dict):
        _issue(issues, "counter: must be a mapping", strict)
    elif not counter.get("ideal", False):
        f_meas_khz = _check_positive(counter, "f_meas_khz", "counter", issues, strict)
        n_bits = counter.get("n_bits", 24)
        if not isinstance(n_bits, int) or n_bits < 1:
            _issue(issues, f"counter.n_bits: must be an integer >= 1, got {n_bits}", strict)
            n_bits = None
        repeats = counter.get("repeats", 16)
        if not isinstance(repeats, int) or repeats < 1:
            _issue(issues, f"counter.repeats: must be an integer >= 1, got {repeats}", strict)
        _check_positive(counter, "outlier_k", "counter", issues, strict, required=False)
        if f_meas_khz is not None and n_bits is not None and vco_top_ghz is not None:
            msg = counter_capacity_issue(vco_top_ghz * 1e9, f_meas_khz * 1e3, n_bits)
            if msg:
                _issue(issues, f"counter: {msg}", strict)

    # learn
    learn = raw.get("learn", {})
    if isinstance(learn, dict):
        order = learn.get("order", 5)
        n_chart = learn.get("n_chart", 100)
        if not isinstance(order, int) or order < 2:
            _issue(issues, f"learn.order: must be an integer >= 2, got {order}", strict)
        if not isinstance(n_chart, int) or n_chart < 1:
            _issue(issues, f"learn.n_chart: must be an integer >= 1, got {n_chart}", strict)
        elif isinstance(order, int) and n_chart + 1 < 2 * order:
            _issue(
                issues,
                f"learn.n_chart: {n_chart + 1} chart points cannot determine {2 * order} backward coefficients",
                strict,
            )
    else:
        _issue(issues, "learn: must be a mapping", strict)

    # qdac
    qdac = raw.get("qdac", {})
    if isinstance(qdac, dict):
        _check_positive(qdac, "i_lsb_na", "qdac", issues, strict)
        _check_positive(qdac, "c_dac_pf", "qdac", issues, strict)
        code_min = qdac.get("code_min", -32768)
        code_max = qdac.get("code_max", 32767)
        if not (isinstance(code_min, int) and isinstance(code_max, int)) or not code_min <= 0 <= code_max:
            _issue(issues, f"qdac: need integers code_min <= 0 <= code_max, got {code_min}, {code_max}", strict)
    else:
        _issue(issues, "qdac: must be a mapping", strict)

    # plans
    plans = raw.get("plans", [])
    if not isinstance(plans, list) or not plans:
        _issue(issues, "plans: must be a non-empty list", strict)
    else:
        for i, plan in enumerate(plans):
            issues.extend(validate_plan(plan, f"plans[{i}]", strict))
        names = [p.get("name") for p in plans if isinstance(p, dict)]
        if len(set(names)) != len(names):
            _issue(issues, "plans: names must be unique", strict)

    # phase noise / seed
    pn = raw.get("phase_noise", "none")
    if not isinstance(pn, str):
        _issue(issues, "phase_noise: must be a preset name (none, open_loop, pedestal_5mhz, ...)", strict)
    elif pn != "none" and raw.get("seed") is None:
        _issue(issues, "seed: mandatory when phase noise is enabled", strict)
    seed = raw.get("seed")
    if seed is not None and (not isinstance(seed, int) or seed < 0):
        _issue(issues, f"seed: must be a non-negative integer, got {seed}", strict)

    # scenarios
    scenarios = raw.get("scenarios", [])
    if not isinstance(scenarios, list):
        _issue(issues, "scenarios: must be a list", strict)
    else:
        for i, scenario in enumerate(scenarios):
            issues.extend(validate_scenario(scenario, f"scenarios[{i}]", strict))

    # analysis
    analysis = raw.get("analysis", {})
    if isinstance(analysis, dict):
        window = analysis.get("window", "hann")
        if window not in VALID_WINDOWS:
            _issue(issues, f"analysis.window: '{window}' not one of {', '.join(sorted(VALID_WINDOWS))}", strict)
        frac = analysis.get("dft_start_fraction", 0.0)
        if not _is_number(frac) or not 0.0 <= frac < 1.0:
            _issue(issues, f"analysis.dft_start_fraction: must be in [0, 1), got {frac}", strict)
        excl = analysis.get("exclusion_bins", 5)
        if not isinstance(excl, int) or excl < 1:
            _issue(issues, f"analysis.exclusion_bins: must be an integer >= 1, got {excl}", strict)
        refs = analysis.get("reference_bins", 10)
        if not isinstance(refs, int) or refs < 1:
            _issue(issues, f"analysis.reference_bins: must be an integer >= 1, got {refs}", strict)
        nulls = analysis.get("skirt_nulls", 3)
        if not isinstance(nulls, int) or nulls < 0:
            _issue(issues, f"analysis.skirt_nulls: must be an integer >= 0, got {nulls}", strict)
    else:
        _issue(issues, "analysis: must be a mapping", strict)

    # checks
    checks = raw.get("checks", [])
    if not isinstance(checks, list):
        _issue(issues, "checks: must be a list", strict)
    else:
        for i, check in enumerate(checks):
            cpath = f"checks[{i}]"
            if not isinstance(check, dict):
                _issue(issues, f"{cpath}: must be a mapping", strict)
                continue
            if check.get("metric") not in VALID_CHECK_METRICS:
                _issue(
                    issues,
                    f"{cpath}.metric: must be one of {', '.join(sorted(VALID_CHECK_METRICS))}",
                    strict,
                )
            if not _is_number(check.get("expected")):
                _issue(issues, f"{cpath}.expected: must be a number", strict)
            if "abs_tol" not in check and "rel_tol" not in check:
                _issue(issues, f"{cpath}: give abs_tol or rel_tol", strict)

    return issues
