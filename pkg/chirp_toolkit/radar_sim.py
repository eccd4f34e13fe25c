#!/usr/bin/env python3
"""
Coherent monostatic FMCW model in discrete time.

The transmitted signal is cos(2*pi*f[k]*t[k] + phi[k]); each echo reuses
the frequency and phase-noise samples q_tau = floor(tau/dt) steps earlier.
The IF is the literal mixer product 2*s_TX*s_RX summed over targets.

With phase="integrated" the carrier phase is instead the running sum of
2*pi*f*dt, so FM error reaches the IF as 2*pi*integral(e) over the delay
rather than 2*pi*(e(t) - e(t - tau))*t.

Usage:
    from chirp_toolkit.radar_sim import RadarScenario, Target, simulate_if

    scenario = RadarScenario(targets=(Target(23.0),), dt=10e-12)
    result = simulate_if(chirp, phase_noise, scenario)
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional, Tuple

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from chirp_toolkit.predistortion import ChirpPlan
from chirp_toolkit.schemas import ValidationError
from chirp_toolkit.series import TimeSeries

logger = logging.getLogger(__name__)

# close-in phase noise is cancelled by range correlation below this tau*df
CANCELLATION_LIMIT = 1.0 / 6.0

PHASE_MODELS = ("literal", "integrated")


@dataclass(frozen=True)
class Target:
    """Point reflector at range_m with relative IF amplitude."""

    range_m: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.range_m > 0:
            raise ValidationError(f"target range must be > 0, got {self.range_m}")
        if not self.amplitude > 0:
            raise ValidationError(f"target amplitude must be > 0, got {self.amplitude}")

    @property
    def tau(self) -> float:
        return 2.0 * self.range_m / SPEED_OF_LIGHT


def delay_samples(range_m: float, dt: float) -> int:
    """q_tau = floor(2R/(c*dt))."""
    return int(np.floor(2.0 * range_m / SPEED_OF_LIGHT / dt))


@dataclass(frozen=True)
class RadarScenario:
    """
    Targets seen by one chirp.

    Attributes:
        targets: Reflectors
        self_interference: Optional TX-to-RX leakage modelled as a very close target
        dt: Sample step in seconds
        plan: Chirp plan the scenario is analysed with (optional)
        name: Label used for output directories
    """

    targets: Tuple[Target, ...]
    self_interference: Optional[Target] = None
    dt: float = 10e-12
    plan: Optional[ChirpPlan] = None
    name: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if not self.targets:
            raise ValidationError("scenario needs at least one target")
        if not self.dt > 0:
            raise ValidationError(f"dt must be > 0, got {self.dt}")
        for target in self.all_targets:
            q = delay_samples(target.range_m, self.dt)
            if q < 1:
                raise ValidationError(
                    f"target at {target.range_m} m is closer than one sample of delay at dt={self.dt} s"
                )

    @property
    def all_targets(self) -> List[Target]:
        extra = [self.self_interference] if self.self_interference is not None else []
        return extra + list(self.targets)

    @property
    def max_delay_samples(self) -> int:
        return max(delay_samples(t.range_m, self.dt) for t in self.all_targets)


class IfResult(NamedTuple):
    """IF waveform and the first valid sample (earlier samples are zeroed)."""

    series: TimeSeries
    valid_from: int


def simulate_if(
    chirp: TimeSeries,
    pn: Optional[TimeSeries],
    sc: RadarScenario,
    phase: str = "literal",
) -> IfResult:
    """
    Mix the transmitted chirp with every delayed echo.

    Args:
        chirp: Absolute instantaneous frequency (frequency_hz)
        pn: TX phase noise (phase_rad) sharing dt and length, or None
        sc: Scenario
        phase: literal (2*pi*f[k]*t[k]) or integrated (running sum of 2*pi*f*dt)

    Returns:
        IfResult with a dimensionless IF series
    """
    if chirp.label != "frequency_hz":
        raise ValidationError(f"expected a frequency_hz chirp, got {chirp.label}")
    if phase not in PHASE_MODELS:
        raise ValidationError(f"phase model '{phase}' not one of {', '.join(PHASE_MODELS)}")
    if not np.isclose(chirp.dt, sc.dt, rtol=1e-12, atol=0.0):
        raise ValidationError(f"chirp dt {chirp.dt} differs from scenario dt {sc.dt}")
    n = len(chirp)
    if pn is not None:
        if pn.label != "phase_rad":
            raise ValidationError(f"expected a phase_rad series, got {pn.label}")
        if len(pn) != n or not np.isclose(pn.dt, chirp.dt, rtol=1e-12, atol=0.0):
            raise ValidationError(f"phase noise ({len(pn)} @ {pn.dt}) does not match chirp ({n} @ {chirp.dt})")
        phi = pn.values
    else:
        phi = np.zeros(n)

    valid_from = sc.max_delay_samples
    if valid_from >= n:
        raise ValidationError(f"delay of {valid_from} samples exceeds chirp length {n}")

    t = chirp.times
    f = chirp.values
    if phase == "literal":
        tx = np.cos(2.0 * np.pi * f * t + phi)
    else:
        theta = 2.0 * np.pi * chirp.dt * np.concatenate(([0.0], np.cumsum(f[:-1])))
        tx = np.cos(theta + phi)
    total = np.zeros(n)
    for target in sc.all_targets:
        q = delay_samples(target.range_m, sc.dt)
        rx = np.zeros(n)
        if phase == "literal":
            rx[q:] = target.amplitude * np.cos(2.0 * np.pi * f[:-q] * t[q:] + phi[:-q])
        else:
            rx[q:] = target.amplitude * np.cos(theta[:-q] + phi[:-q])
        total += 2.0 * tx * rx
    total[:valid_from] = 0.0

    logger.debug("IF: %d targets, valid from sample %d of %d", len(sc.all_targets), valid_from, n)
    return IfResult(chirp.with_values(total, "dimensionless"), valid_from)


def range_correlation_factor(tau, df):
    """4*sin^2(pi*tau*df), the IF shaping of TX phase noise."""
    tau_arr = np.asarray(tau, dtype=float)
    df_arr = np.asarray(df, dtype=float)
    if np.any(tau_arr < 0) or np.any(df_arr < 0):
        raise ValidationError("tau and df must be >= 0")
    out = 4.0 * np.sin(np.pi * tau_arr * df_arr) ** 2
    return float(out) if np.ndim(out) == 0 else out


def range_correlation_nulls(tau: float, count: int = 3) -> np.ndarray:
    """Offsets k/tau (k = 1..count) where the shaping factor vanishes."""
    if not tau > 0:
        raise ValidationError(f"tau must be > 0, got {tau}")
    return np.arange(1, count + 1) / tau


def range_correlation_peaks(tau: float, count: int = 3) -> np.ndarray:
    """Offsets (2k-1)/(2 tau) where the shaping factor reaches 4."""
    if not tau > 0:
        raise ValidationError(f"tau must be > 0, got {tau}")
    return (2.0 * np.arange(1, count + 1) - 1.0) / (2.0 * tau)


def if_skirt(freqs, f_target: float, tau: float, level: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """
    Relative IF noise density of a real beat tone at f_target.

    The skirt around +f_target and its mirror around -f_target both land on
    positive frequencies; each carries the range-correlation factor.

    Args:
        freqs: IF frequencies in Hz, none equal to f_target
        level: Linear SSB TX density per Hz as a function of offset
    """
    f = np.asarray(freqs, dtype=float)
    direct = np.abs(f - f_target)
    image = f + f_target
    if np.any(direct <= 0) or np.any(image <= 0):
        raise ValidationError("skirt frequencies must differ from +-f_target")
    return level(direct) * range_correlation_factor(tau, direct) + level(image) * range_correlation_factor(tau, image)


def skirt_null_frequencies(f_target: float, tau: float, count: int = 3, points: int = 4001) -> np.ndarray:
    """
    Upper-side skirt minima of a beat tone at f_target.

    Searches (k +- 1/2)/tau above f_target on a -20 dB/decade skirt. With
    f_target far above 1/tau the minima sit at f_target + k/tau; for close
    targets the mirrored skirt pulls them toward k/tau.
    """
    if not tau > 0 or f_target < 0:
        raise ValidationError("need tau > 0 and f_target >= 0")
    minima = []
    for k in range(1, count + 1):
        grid = f_target + np.linspace(k - 0.5, k + 0.5, points) / tau
        model = if_skirt(grid, f_target, tau, lambda df: 1.0 / df ** 2)
        minima.append(grid[int(np.argmin(model))])
    return np.array(minima)


def cancels(tau: float, df: float) -> bool:
    """True where range correlation attenuates the TX phase noise."""
    return tau * df < CANCELLATION_LIMIT


def overlap_window(
    plan: ChirpPlan,
    sc: RadarScenario,
    start_fraction: float = 0.0,
    n_samples: Optional[int] = None,
) -> Tuple[int, int]:
    """
    DFT window inside the TX/RX overlap.

    Args:
        plan: Chirp plan (sets the chirp length with the scenario dt)
        sc: Scenario (sets the largest delay)
        start_fraction: Fraction of the overlap skipped before the window
        n_samples: Chirp length override

    Returns:
        (start_index, length)
    """
    if not 0.0 <= start_fraction < 1.0:
        raise ValidationError(f"start_fraction must be in [0, 1), got {start_fraction}")
    n = n_samples if n_samples is not None else int(round(plan.t_chirp / sc.dt)) + 1
    q = sc.max_delay_samples
    if q >= n:
        raise ValidationError(f"delay of {q} samples leaves no overlap in a {n}-sample chirp")
    start = q + int(np.floor(start_fraction * (n - q)))
    length = n - start
    if length < 2:
        raise ValidationError("overlap window is empty")
    return start, length
