#!/usr/bin/env python3
"""
Forward VCO tuning model (voltage to frequency) and radar system metrics.

Frequencies inside the model are GHz offsets from f_base; absolute Hz
only appears at the API boundary (radar metrics, synthesized chirps).

Usage:
    from chirp_toolkit.vco_model import reference_vco_model, eval_forward

    model = reference_vco_model()
    f_ghz = eval_forward(model, 0.5)
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from chirp_toolkit.schemas import DomainError, RankDeficiencyError, ValidationError

logger = logging.getLogger(__name__)

# Forward coefficients a0..a5 (GHz per volt^p) of the reference 28 nm VCO
REFERENCE_FORWARD_COEFFS = (0.0001, 0.3316, 0.4631, 1.7203, -1.9810, 0.5626)

# Base frequency such that v_max = 1 V reaches 9.741 GHz
DEFAULT_F_BASE_GHZ = 8.644

MONOTONIC_GRID_POINTS = 10_001

ArrayLike = Union[float, Sequence[float], np.ndarray]


@dataclass(frozen=True)
class TuningCurveModel:
    """
    Polynomial VCO tuning curve f(V) = sum(a_p * V^p), in GHz.

    Attributes:
        coeffs: a0..aP in GHz per volt^p
        f_base: Absolute base frequency in GHz
        v_min: Lower end of the valid tuning range in volts
        v_max: Upper end of the valid tuning range in volts
    """

    coeffs: Tuple[float, ...]
    f_base: float = DEFAULT_F_BASE_GHZ
    v_min: float = 0.0
    v_max: float = 1.0

    def __post_init__(self):
        coeffs = tuple(float(a) for a in self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        if len(coeffs) < 2:
            raise ValidationError(f"model order must be >= 1, got {len(coeffs) - 1}")
        if not all(np.isfinite(coeffs)):
            raise ValidationError("coefficients must be finite")
        if not self.v_min < self.v_max:
            raise ValidationError(f"v_min must be < v_max, got {self.v_min} and {self.v_max}")
        if self.f_base < 0:
            raise ValidationError(f"f_base must be >= 0, got {self.f_base}")

        grid = np.linspace(self.v_min, self.v_max, MONOTONIC_GRID_POINTS)
        steps = np.diff(np.polynomial.polynomial.polyval(grid, coeffs))
        if not np.all(steps > 0):
            bad = grid[1:][steps <= 0][0]
            raise ValidationError(f"tuning curve is not strictly increasing on [{self.v_min}, {self.v_max}] (near {bad:.4f} V)")

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def span_ghz(self) -> float:
        """Frequency span covered by [v_min, v_max]."""
        return float(eval_forward(self, self.v_max) - eval_forward(self, self.v_min))

    @property
    def f_max_hz(self) -> float:
        """Maximum absolute output frequency."""
        return (self.f_base + float(eval_forward(self, self.v_max))) * 1e9


def reference_vco_model(f_base_ghz: float = DEFAULT_F_BASE_GHZ) -> TuningCurveModel:
    """Fifth-order forward model of the reference VCO over 0..1 V."""
    return TuningCurveModel(REFERENCE_FORWARD_COEFFS, f_base=f_base_ghz)


def reference_sweep_samples(n_pss: int = 10) -> List[Tuple[float, float]]:
    """
    Regenerate the coarse (V, f) sweep the reference model was fitted to.

    Args:
        n_pss: Number of voltage increments over 0..1 V

    Returns:
        n_pss+1 (volts, GHz offset) pairs
    """
    model = reference_vco_model()
    volts = np.linspace(model.v_min, model.v_max, n_pss + 1)
    return [(float(v), float(f)) for v, f in zip(volts, eval_forward(model, volts))]


def eval_forward(
    model: TuningCurveModel,
    v: ArrayLike,
    extrapolate: bool = False,
    tolerance: float = 0.0,
) -> Union[float, np.ndarray]:
    """
    Evaluate the tuning curve.

    Args:
        model: Forward model
        v: Voltage(s) in volts
        extrapolate: Allow voltages outside [v_min, v_max]
        tolerance: Range slack in volts accepted without extrapolate

    Returns:
        Frequency offset(s) in GHz (add f_base for absolute frequency)

    Raises:
        DomainError: If a voltage is out of range and extrapolate is False
    """
    arr = np.asarray(v, dtype=float)
    if not extrapolate:
        lo = model.v_min - tolerance
        hi = model.v_max + tolerance
        if np.any(arr < lo) or np.any(arr > hi):
            raise DomainError(
                f"voltage outside [{model.v_min}, {model.v_max}] V "
                f"(min {arr.min():.6g}, max {arr.max():.6g}); set extrapolate to allow"
            )
    out = np.polynomial.polynomial.polyval(arr, model.coeffs)
    if np.ndim(out) == 0:
        return float(out)
    return out


class ForwardFit(NamedTuple):
    """Result of fitting a forward model: the model and per-sample residuals (GHz)."""

    model: TuningCurveModel
    residuals: np.ndarray


class ScaledSolve(NamedTuple):
    coeffs: np.ndarray
    condition: float
    scaled: np.ndarray
    norms: np.ndarray


def solve_scaled_least_squares(design: np.ndarray, target: np.ndarray) -> ScaledSolve:
    """
    Ordinary least squares min ||A x - y|| on a column-scaled design matrix.

    Columns are scaled to unit norm, solved with an SVD-based solver (the
    normal-equations solution for full-rank A) and rescaled afterwards.

    Raises:
        RankDeficiencyError: If A has a zero column or is rank deficient
    """
    norms = np.linalg.norm(design, axis=0)
    if np.any(norms == 0):
        raise RankDeficiencyError("design matrix has an all-zero column")
    scaled = design / norms
    rank = np.linalg.matrix_rank(scaled)
    if rank < design.shape[1]:
        raise RankDeficiencyError(f"design matrix rank {rank} < {design.shape[1]} columns")
    solution, _, _, singular = np.linalg.lstsq(scaled, target, rcond=None)
    return ScaledSolve(solution / norms, float(singular[0] / singular[-1]), scaled, norms)


def fit_forward_from_samples(
    samples: Sequence[Tuple[float, float]],
    order: int,
    f_base: float = DEFAULT_F_BASE_GHZ,
    v_range: Optional[Tuple[float, float]] = None,
) -> ForwardFit:
    """
    Ordinary least-squares polynomial fit of (volts, GHz) samples.

    Args:
        samples: (voltage, frequency offset) pairs
        order: Polynomial order P
        f_base: Base frequency stored on the model
        v_range: Valid range; defaults to the sample extent

    Returns:
        ForwardFit with the model and residual vector

    Raises:
        RankDeficiencyError: Fewer than P+1 distinct voltages
    """
    if order < 1:
        raise ValidationError(f"order must be >= 1, got {order}")
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValidationError("samples must be (voltage, frequency) pairs")
    volts, freqs = data[:, 0], data[:, 1]
    distinct = np.unique(volts).size
    if distinct < order + 1:
        raise RankDeficiencyError(f"{distinct} distinct voltages cannot determine an order-{order} polynomial")

    design = np.vander(volts, order + 1, increasing=True)
    coeffs = solve_scaled_least_squares(design, freqs).coeffs
    residuals = freqs - design @ coeffs

    lo, hi = v_range if v_range is not None else (float(volts.min()), float(volts.max()))
    model = TuningCurveModel(tuple(coeffs), f_base=f_base, v_min=lo, v_max=hi)
    logger.debug("forward fit P=%d on %d samples, residual rms %.3g GHz", order, volts.size, np.sqrt(np.mean(residuals ** 2)))
    return ForwardFit(model, residuals)


@dataclass(frozen=True)
class RadarMetrics:
    """
    FMCW metrics for one chirp configuration.

    Attributes:
        slope: Chirp slope in Hz/s
        delta_r_min: Minimum range resolution in meters
        v_max_unambiguous: Maximum unambiguous velocity in m/s
    """

    slope: float
    delta_r_min: float
    v_max_unambiguous: float

    def f_target_at(self, range_m: float) -> float:
        """IF beat frequency (Hz) of a target at range_m."""
        return self.slope * (2.0 * range_m / SPEED_OF_LIGHT)

    @property
    def f_target(self) -> Callable[[float], float]:
        return self.f_target_at


def radar_metrics(b: float, t_chirp: float, t_quiet: float, wavelength: float) -> RadarMetrics:
    """
    Derive slope, range resolution and unambiguous velocity.

    Args:
        b: Chirp bandwidth in Hz
        t_chirp: Chirp duration in seconds
        t_quiet: Quiet time between chirps in seconds
        wavelength: Carrier wavelength in meters

    Raises:
        ValidationError: If any input is not positive
    """
    for name, value in (("B", b), ("T_chirp", t_chirp), ("T_quiet", t_quiet), ("wavelength", wavelength)):
        if not value > 0:
            raise ValidationError(f"{name} must be > 0, got {value}")
    return RadarMetrics(
        slope=b / t_chirp,
        delta_r_min=SPEED_OF_LIGHT / (2.0 * b),
        v_max_unambiguous=wavelength / (4.0 * (t_chirp + t_quiet)),
    )


def model_wavelength(model: TuningCurveModel) -> float:
    """Wavelength at the model's maximum frequency."""
    return SPEED_OF_LIGHT / model.f_max_hz


def dft_range_resolution(t_obs: float, t_chirp: float, b: float) -> float:
    """
    Range spanned by one DFT bin when observing t_obs of the IF.

    Equals c/(2B) when the whole chirp is observed.
    """
    for name, value in (("T_obs", t_obs), ("T_chirp", t_chirp), ("B", b)):
        if not value > 0:
            raise ValidationError(f"{name} must be > 0, got {value}")
    return (1.0 / t_obs) * (SPEED_OF_LIGHT / 2.0) * (t_chirp / b)
