#!/usr/bin/env python3
"""
Backward (frequency to voltage) model learned from a chart by OLS.

The basis mixes integer and fractional powers of the shifted frequency:
[1, f, f^2, ..., f^P, f^(1/2), f^(1/3), ..., f^(1/P)], with f in GHz
relative to the first chart point.

Usage:
    from chirp_toolkit.backward_learner import learn_backward, eval_backward

    fit = learn_backward(chart, order=5)
    volts = eval_backward(fit.model, fit.model.f_offset + 0.5)
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Tuple, Union

import numpy as np

from chirp_toolkit.freq_counter import ChartRecord
from chirp_toolkit.schemas import DomainError, RankDeficiencyError, ValidationError
from chirp_toolkit.vco_model import TuningCurveModel, eval_forward, solve_scaled_least_squares

logger = logging.getLogger(__name__)

# Published backward coefficients for the reference VCO (informational only;
# the basis is near-collinear so refits land elsewhere with equal accuracy)
REFERENCE_BACKWARD_COEFFS = {
    "b_poly": (0.0000, -3.4181, 1.8010, -1.2828, 0.6372, -0.1211),
    "b_frac": (14.0534, -29.5988, 30.2043, -11.3465),
}

CONDITION_WARNING = 1e12

ArrayLike = Union[float, Sequence[float], np.ndarray]


@dataclass(frozen=True)
class BackwardModel:
    """
    Learned frequency to voltage map.

    Attributes:
        b_poly: b0..bP
        b_frac: b_(1/2)..b_(1/P)
        v_offset: V[0] in volts
        f_offset: First chart frequency in GHz (absolute)
        f_span: Charted span above f_offset in GHz
    """

    b_poly: Tuple[float, ...]
    b_frac: Tuple[float, ...]
    v_offset: float = 0.0
    f_offset: float = 0.0
    f_span: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "b_poly", tuple(float(b) for b in self.b_poly))
        object.__setattr__(self, "b_frac", tuple(float(b) for b in self.b_frac))
        if len(self.b_poly) < 3:
            raise ValidationError(f"backward order must be >= 2, got {len(self.b_poly) - 1}")
        if len(self.b_frac) != len(self.b_poly) - 2:
            raise ValidationError(
                f"order {len(self.b_poly) - 1} needs {len(self.b_poly) - 2} fractional coefficients, got {len(self.b_frac)}"
            )
        if self.f_span < 0:
            raise ValidationError(f"f_span must be >= 0, got {self.f_span}")

    @property
    def order(self) -> int:
        return len(self.b_poly) - 1

    @property
    def coefficients(self) -> np.ndarray:
        """Coefficient vector in design-matrix column order."""
        return np.array(self.b_poly + self.b_frac)


def build_design_matrix(f: ArrayLike, order: int) -> np.ndarray:
    """
    Design matrix with columns [1, f, ..., f^P, f^(1/2), ..., f^(1/P)].

    Args:
        f: Shifted frequencies in GHz (all >= 0)
        order: Model order P >= 2

    Returns:
        len(f) x 2P matrix

    Raises:
        DomainError: Negative frequency
    """
    if int(order) != order or order < 2:
        raise ValidationError(f"order must be an integer >= 2, got {order}")
    freqs = np.atleast_1d(np.asarray(f, dtype=float))
    if np.any(freqs < 0):
        raise DomainError(f"fractional powers need f >= 0, got min {freqs.min():.6g}")
    powers = [freqs ** p for p in range(order + 1)]
    roots = [freqs ** (1.0 / q) for q in range(2, order + 1)]
    return np.column_stack(powers + roots)


class BackwardFit(NamedTuple):
    """
    Learning outcome.

    Attributes:
        model: The learned BackwardModel
        residuals: Per-point voltage residuals
        condition: Condition number of the column-scaled design matrix
        orthogonality: max |F^T r| on the scaled design matrix
    """

    model: BackwardModel
    residuals: np.ndarray
    condition: float
    orthogonality: float


def learn_backward(chart: ChartRecord, order: int = 5) -> BackwardFit:
    """
    Fit the backward model with the chart's first point moved to the origin.

    Args:
        chart: Chart-phase record (absolute GHz)
        order: Model order P

    Returns:
        BackwardFit

    Raises:
        RankDeficiencyError: Design matrix rank < 2P
    """
    if chart.voltages.size < 2 * order:
        raise RankDeficiencyError(
            f"{chart.voltages.size} chart points cannot determine {2 * order} coefficients"
        )
    v_offset = float(chart.voltages[0])
    f_offset = float(chart.f_hat[0])
    v_shift = chart.voltages - v_offset
    f_shift = chart.f_hat - f_offset

    design = build_design_matrix(f_shift, order)
    solve = solve_scaled_least_squares(design, v_shift)
    residuals = v_shift - design @ solve.coeffs
    orthogonality = float(np.max(np.abs(solve.scaled.T @ residuals)))

    if solve.condition > CONDITION_WARNING:
        logger.warning("backward design matrix is ill-conditioned (cond %.3g)", solve.condition)
    logger.debug(
        "backward fit P=%d: residual rms %.3g V, cond %.3g",
        order,
        np.sqrt(np.mean(residuals ** 2)),
        solve.condition,
    )

    model = BackwardModel(
        b_poly=tuple(solve.coeffs[: order + 1]),
        b_frac=tuple(solve.coeffs[order + 1:]),
        v_offset=v_offset,
        f_offset=f_offset,
        f_span=float(np.max(f_shift)),
    )
    return BackwardFit(model, residuals, solve.condition, orthogonality)


def eval_backward(bm: BackwardModel, f: ArrayLike) -> Union[float, np.ndarray]:
    """
    Voltage for absolute frequency f (GHz).

    Raises:
        DomainError: f below f_offset
    """
    arr = np.asarray(f, dtype=float)
    shifted = arr - bm.f_offset
    if np.any(shifted < 0):
        raise DomainError(f"frequency below the model origin {bm.f_offset} GHz")
    volts = bm.v_offset + build_design_matrix(shifted.ravel(), bm.order) @ bm.coefficients
    if arr.ndim == 0:
        return float(volts[0])
    return volts.reshape(arr.shape)


def round_trip_error(
    bm: BackwardModel,
    model: TuningCurveModel,
    f_grid: ArrayLike,
) -> float:
    """
    Worst-case |f(V(f)) - f| in Hz over absolute frequencies f_grid (GHz).

    The forward model is evaluated with extrapolation allowed so grids that
    step outside the charted span still measure fidelity.
    """
    grid = np.asarray(f_grid, dtype=float)
    volts = eval_backward(bm, grid)
    recovered = model.f_base + eval_forward(model, volts, extrapolate=True)
    return float(np.max(np.abs(recovered - grid)) * 1e9)
