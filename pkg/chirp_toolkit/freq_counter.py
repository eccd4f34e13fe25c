#!/usr/bin/env python3
"""
Cycle-counting FDC model and the chart-phase sweep.

The counter is modelled analytically: a window of length 1/f_meas that
starts at a fractional phase offset phase0 sees floor(f_in/f_meas + phase0)
rising edges.

Usage:
    from chirp_toolkit.freq_counter import CounterConfig, chart_tuning_curve

    chart = chart_tuning_curve(model, n_chart=100, cfg=CounterConfig(f_meas=100e3))
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from chirp_toolkit.schemas import (
    CounterOverflowError,
    OutlierRejectionError,
    ValidationError,
    counter_capacity_issue,
)
from chirp_toolkit.vco_model import TuningCurveModel, eval_forward

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CounterConfig:
    """
    FDC settings.

    Attributes:
        f_meas: Measurement-window reciprocal in Hz
        n_bits: Counter width in bits
        repeats: Measurements averaged per chart point
        outlier_k: Rejection threshold in median absolute deviations
        seed: Seed for the phase-offset draws
    """

    f_meas: float = 100e3
    n_bits: int = 24
    repeats: int = 16
    outlier_k: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if not self.f_meas > 0:
            raise ValidationError(f"f_meas must be > 0, got {self.f_meas}")
        if int(self.n_bits) != self.n_bits or self.n_bits < 1:
            raise ValidationError(f"n_bits must be an integer >= 1, got {self.n_bits}")
        if int(self.repeats) != self.repeats or self.repeats < 1:
            raise ValidationError(f"repeats must be an integer >= 1, got {self.repeats}")
        if not self.outlier_k > 0:
            raise ValidationError(f"outlier_k must be > 0, got {self.outlier_k}")

    @property
    def count_max(self) -> int:
        return 2 ** self.n_bits - 1


def min_meas_frequency(f_in: float, n_bits: int) -> float:
    """Smallest f_meas an n_bits counter supports for input f_in."""
    return f_in / (2 ** n_bits - 1)


def check_capacity(f_in: float, cfg: CounterConfig) -> None:
    """
    Raises:
        CounterOverflowError: If a window could hold more edges than the counter
    """
    msg = counter_capacity_issue(f_in, cfg.f_meas, cfg.n_bits)
    if msg:
        raise CounterOverflowError(msg)


def count_cycles(f_in: float, cfg: CounterConfig, phase0: float = 0.0) -> int:
    """
    Rising edges counted in one measurement window.

    Args:
        f_in: Input frequency in Hz
        cfg: Counter settings
        phase0: Starting phase offset as a fraction of a cycle, in [0, 1)

    Returns:
        floor(f_in/f_meas + phase0)
    """
    if not 0.0 <= phase0 < 1.0:
        raise ValidationError(f"phase0 must be in [0, 1), got {phase0}")
    if f_in < 0:
        raise ValidationError(f"f_in must be >= 0, got {f_in}")
    check_capacity(f_in, cfg)
    return int(math.floor(f_in / cfg.f_meas + phase0))


def estimate_frequency(
    f_in: float,
    cfg: CounterConfig,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """
    Averaged frequency estimate over cfg.repeats windows.

    Counts farther than outlier_k * MAD from the median are discarded. The
    MAD is floored at one count since a clean counter already spreads
    over two adjacent values.

    Args:
        f_in: Input frequency in Hz
        cfg: Counter settings
        rng: Generator for phase offsets (default: seeded from cfg.seed)

    Returns:
        Mean surviving count times f_meas, in Hz

    Raises:
        CounterOverflowError: Capacity rule violated
        OutlierRejectionError: Every count rejected
    """
    if f_in < 0:
        raise ValidationError(f"f_in must be >= 0, got {f_in}")
    check_capacity(f_in, cfg)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)

    ratio = f_in / cfg.f_meas
    phases = rng.random(cfg.repeats)
    counts = np.floor(ratio + phases)

    median = np.median(counts)
    mad = np.median(np.abs(counts - median))
    keep = np.abs(counts - median) <= cfg.outlier_k * max(mad, 1.0)
    if not np.any(keep):
        raise OutlierRejectionError(
            f"all {cfg.repeats} measurements rejected (outlier_k={cfg.outlier_k})"
        )
    rejected = int(cfg.repeats - np.count_nonzero(keep))
    if rejected:
        logger.warning("discarded %d of %d counter measurements at %.6g Hz", rejected, cfg.repeats, f_in)
    return float(np.mean(counts[keep]) * cfg.f_meas)


@dataclass(frozen=True, eq=False)
class ChartRecord:
    """
    Chart-phase sweep: uniformly spaced voltages and estimated frequencies.

    Attributes:
        voltages: n_chart+1 voltages in volts
        f_hat: Estimated absolute frequencies in GHz
    """

    voltages: np.ndarray
    f_hat: np.ndarray

    def __post_init__(self):
        volts = np.array(self.voltages, dtype=float)
        freqs = np.array(self.f_hat, dtype=float)
        if volts.ndim != 1 or volts.shape != freqs.shape or volts.size < 2:
            raise ValidationError("chart needs at least two (voltage, frequency) points of equal length")
        steps = np.diff(volts)
        if not np.all(steps > 0):
            raise ValidationError("chart voltages must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
            raise ValidationError("chart voltages must be uniformly spaced")
        if np.any(freqs < 0):
            raise ValidationError("chart frequencies must be non-negative")
        if np.any(np.diff(freqs) < 0):
            logger.warning("chart frequencies decrease somewhere; the VCO may not be monotone")
        volts.setflags(write=False)
        freqs.setflags(write=False)
        object.__setattr__(self, "voltages", volts)
        object.__setattr__(self, "f_hat", freqs)

    @property
    def n_chart(self) -> int:
        return self.voltages.size - 1

    @property
    def points(self) -> List[Tuple[float, float]]:
        return [(float(v), float(f)) for v, f in zip(self.voltages, self.f_hat)]

    @property
    def span_ghz(self) -> float:
        return float(self.f_hat[-1] - self.f_hat[0])


def chart_tuning_curve(
    model: TuningCurveModel,
    n_chart: int,
    cfg: Optional[CounterConfig] = None,
    ideal: bool = False,
) -> ChartRecord:
    """
    Sweep the VCO over [v_min, v_max] and estimate each frequency.

    Args:
        model: Forward model standing in for the physical VCO
        n_chart: Number of voltage increments (n_chart+1 points)
        cfg: Counter settings; ignored when ideal
        ideal: Record the exact model frequency (perfect estimation)

    Returns:
        ChartRecord with absolute frequencies in GHz
    """
    if int(n_chart) != n_chart or n_chart < 1:
        raise ValidationError(f"n_chart must be an integer >= 1, got {n_chart}")
    volts = np.linspace(model.v_min, model.v_max, n_chart + 1)
    exact = model.f_base + eval_forward(model, volts)

    if ideal or cfg is None:
        logger.debug("ideal chart: %d points", volts.size)
        return ChartRecord(volts, exact)

    # one independent substream per chart point
    streams = np.random.SeedSequence(cfg.seed).spawn(volts.size)
    f_hat = np.array(
        [
            estimate_frequency(f_ghz * 1e9, cfg, np.random.default_rng(stream)) / 1e9
            for f_ghz, stream in zip(exact, streams)
        ]
    )
    logger.debug(
        "counter chart: %d points, max |error| %.3g Hz",
        volts.size,
        np.max(np.abs(f_hat - exact)) * 1e9,
    )
    return ChartRecord(volts, f_hat)
