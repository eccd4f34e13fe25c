#!/usr/bin/env python3
"""
FM-error extraction, windowed DFTs, spur prediction and SNDR.

Provides:
- fm_error / rms_fm_error: deviation from the best-fit line
- windowed_dft: one-sided amplitude spectrum normalised to a full-scale sine
- decompose_fm_error: LF component plus harmonics of f_DAC
- bessel_j / predict_spurs: small-index Jacobi-Anger spur estimates
- sndr / peak_to_floor: integrated and close-in SNDR readings
- phase_error_series, measure_peak, spur_levels, skirt_minima

Usage:
    from chirp_toolkit.spectral_analysis import fm_error, windowed_dft, decompose_fm_error

    err = fm_error(chirp)
    spectrum = windowed_dft(err.error, window="hann")
    dec = decompose_fm_error(spectrum, f_dac=80e6)
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import signal

from chirp_toolkit.schemas import RegimeError, ValidationError
from chirp_toolkit.series import SpectrumEstimate, TimeSeries

logger = logging.getLogger(__name__)

BESSEL_MAX_ARG = 30.0
BESSEL_SERIES_LIMIT = 12.0

# sum of squared window response over the centre bin and its neighbours,
# for a tone on a bin centre
PICKUP_GAIN = {"hann": 1.5, "rectangular": 1.0}

# main-lobe bins stay within this many dB of the target peak
LOBE_DROP_DB = 20.0

_TINY_POWER = 1e-300


# =============================================================================
# FM error
# =============================================================================


class FmError(NamedTuple):
    """FM error over the fit window, with the best-fit line slope (Hz/s) and intercept (Hz at t=0)."""

    error: TimeSeries
    slope: float
    intercept: float


def fm_error(chirp: TimeSeries, window: Optional[Tuple[int, int]] = None) -> FmError:
    """
    Deviation of instantaneous frequency from its OLS line.

    Args:
        chirp: frequency_hz series
        window: (start, stop) sample range; default is the whole chirp

    Returns:
        FmError whose series covers the window only
    """
    start, stop = window if window is not None else (0, len(chirp))
    if not 0 <= start < stop <= len(chirp) or stop - start < 2:
        raise ValidationError(f"fit window [{start}, {stop}) needs >= 2 samples inside a {len(chirp)}-sample chirp")

    segment = chirp.slice(start, stop)
    t = segment.times
    f = segment.values
    # centre both axes before fitting; absolute frequencies are ~1e10 Hz
    t_mean = float(np.mean(t))
    f_ref = float(f[0])
    tc = t - t_mean
    fc = f - f_ref
    fc_mean = float(np.mean(fc))
    slope = float(np.dot(tc, fc - fc_mean) / np.dot(tc, tc))
    error = (fc - fc_mean) - slope * tc
    intercept = f_ref + fc_mean - slope * t_mean
    return FmError(segment.with_values(error), slope, intercept)


def rms_fm_error(error: TimeSeries) -> float:
    """Root-mean-square of the error samples, in Hz."""
    return float(np.sqrt(np.mean(np.square(error.values))))


def phase_error_series(err: TimeSeries) -> TimeSeries:
    """phi_e[k] = 2*pi*e[k]*t[k]."""
    return err.with_values(2.0 * np.pi * err.values * err.times, "phase_rad")


# =============================================================================
# Windowed DFT
# =============================================================================


def windowed_dft(
    ts: TimeSeries,
    n_points: Optional[int] = None,
    start_index: int = 0,
    window: str = "hann",
) -> SpectrumEstimate:
    """
    One-sided amplitude spectrum of ts[start_index : start_index + n_points].

    Amplitudes are corrected for the window's coherent gain so a sinusoid
    of amplitude 1 on a bin centre reads 0 dB.

    Raises:
        ValidationError: Window outside the series
    """
    n_points = len(ts) - start_index if n_points is None else n_points
    if start_index < 0 or n_points < 2 or start_index + n_points > len(ts):
        raise ValidationError(
            f"DFT of {n_points} points from {start_index} exceeds series of length {len(ts)}"
        )
    if window not in PICKUP_GAIN:
        raise ValidationError(f"window '{window}' not one of {', '.join(PICKUP_GAIN)}")

    weights = signal.get_window("hann" if window == "hann" else "boxcar", n_points, fftbins=True)
    segment = ts.values[start_index:start_index + n_points]
    transform = np.fft.rfft(segment * weights)
    window_sum = float(np.sum(weights))

    scale = np.full(transform.size, 2.0)
    scale[0] = 1.0
    if n_points % 2 == 0:
        scale[-1] = 1.0
    amplitude = np.abs(transform) * scale / window_sum

    return SpectrumEstimate(
        df=1.0 / (n_points * ts.dt),
        values=amplitude,
        kind="amplitude",
        sided="one",
        window=window,
        n_points=n_points,
        start_index=start_index,
        window_sum=window_sum,
        phases=np.angle(transform),
    )


def _pickup(spectrum: SpectrumEstimate, idx: int) -> Tuple[float, int]:
    """Amplitude from the 3 bins around idx, and the strongest of them."""
    lo, hi = max(idx - 1, 0), min(idx + 1, len(spectrum) - 1)
    local = spectrum.values[lo:hi + 1]
    amplitude = math.sqrt(float(np.sum(local ** 2)) / PICKUP_GAIN[spectrum.window])
    return amplitude, lo + int(np.argmax(local))


# =============================================================================
# FM-error decomposition
# =============================================================================


class ErrorComponent(NamedTuple):
    """One sinusoidal FM-error term: amplitude (Hz), frequency (Hz), phase (rad)."""

    amplitude: float
    frequency: float
    phase: float


@dataclass(frozen=True)
class FmErrorDecomposition:
    """
    FM error as a low-frequency term plus harmonics of f_DAC.

    Attributes:
        lf: The largest component below f_DAC/2
        harmonics: Component k at exactly k*f_DAC, k = 1..
        f_dac: The update rate the harmonics refer to
    """

    lf: ErrorComponent
    harmonics: Tuple[ErrorComponent, ...]
    f_dac: float

    def __post_init__(self):
        if not self.lf.frequency > 0:
            raise ValidationError("LF component frequency must be > 0")
        for k, component in enumerate(self.harmonics, start=1):
            if component.frequency != k * self.f_dac:
                raise ValidationError(f"harmonic {k} must sit at {k}*f_dac")

    def amplitude(self, k: int) -> float:
        return self.harmonics[k - 1].amplitude if 1 <= k <= len(self.harmonics) else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "f_dac_hz": self.f_dac,
            "lf": {"amplitude_hz": self.lf.amplitude, "frequency_hz": self.lf.frequency, "phase_rad": self.lf.phase},
            "harmonics": [
                {"k": k, "amplitude_hz": c.amplitude, "frequency_hz": c.frequency, "phase_rad": c.phase}
                for k, c in enumerate(self.harmonics, start=1)
            ],
        }


def decompose_fm_error(
    err_spectrum: SpectrumEstimate,
    f_dac: float,
    n_harmonics: int = 10,
) -> FmErrorDecomposition:
    """
    Read the LF component and f_DAC harmonics off an FM-error spectrum.

    Args:
        err_spectrum: Amplitude spectrum of the FM error
        f_dac: QDAC update rate in Hz
        n_harmonics: Most harmonics to read (fewer if the spectrum ends first)

    Raises:
        ValidationError: Bin width coarser than f_dac/10
    """
    if err_spectrum.kind != "amplitude":
        raise ValidationError("decomposition needs an amplitude spectrum")
    if err_spectrum.df > f_dac / 10.0:
        raise ValidationError(
            f"bin width {err_spectrum.df:.6g} Hz too coarse to resolve f_dac={f_dac:.6g} Hz (need <= f_dac/10)"
        )
    phases = err_spectrum.phases if err_spectrum.phases is not None else np.zeros(len(err_spectrum))
    def sine_phase(i: int) -> float:
        # DFT phase of a sine is its cosine phase minus pi/2
        return float(np.angle(np.exp(1j * (phases[i] + np.pi / 2.0))))

    harmonics = []
    for k in range(1, n_harmonics + 1):
        f_k = k * f_dac
        if f_k > err_spectrum.f_nyquist - err_spectrum.df:
            break
        amplitude, peak = _pickup(err_spectrum, err_spectrum.index_of(f_k))
        harmonics.append(ErrorComponent(amplitude, f_k, sine_phase(peak)))

    below = err_spectrum.index_of(f_dac / 2.0)
    if below > 1:
        candidates = err_spectrum.values[1:below]
        idx = 1 + int(np.argmax(candidates))
        amplitude, _ = _pickup(err_spectrum, idx) if candidates[idx - 1] > 0 else (0.0, idx)
        lf = ErrorComponent(amplitude, float(err_spectrum.frequencies[idx]), sine_phase(idx))
    else:
        lf = ErrorComponent(0.0, err_spectrum.df, 0.0)

    logger.debug(
        "FM error: LF %.3g Hz @ %.3g Hz, A1 %.3g Hz",
        lf.amplitude,
        lf.frequency,
        harmonics[0].amplitude if harmonics else 0.0,
    )
    return FmErrorDecomposition(lf, tuple(harmonics), f_dac)


# =============================================================================
# Bessel functions
# =============================================================================


def _bessel_series(n: int, z: float) -> float:
    half = z / 2.0
    term = half ** n / math.factorial(n)
    total = term
    k = 0
    while True:
        k += 1
        term *= -(half * half) / (k * (k + n))
        total += term
        if abs(term) < 1e-17 * max(1.0, abs(total)) and k > 2:
            return total
        if k > 500:
            return total


def _bessel_downward(n: int, z: float) -> float:
    top = max(n, int(z)) + 20 + int(math.sqrt(40.0 * max(n, int(z))))
    top += top % 2
    j_next, j_curr = 0.0, 1e-30
    wanted = 0.0
    norm = 0.0
    for m in range(top, 0, -1):
        j_prev = (2.0 * m / z) * j_curr - j_next
        j_next, j_curr = j_curr, j_prev
        if abs(j_curr) > 1e250:
            j_next *= 1e-250
            j_curr *= 1e-250
            wanted *= 1e-250
            norm *= 1e-250
        if m - 1 == n:
            wanted = j_curr
        if (m - 1) % 2 == 0 and m - 1 > 0:
            norm += 2.0 * j_curr
    norm += j_curr
    if n == 0:
        wanted = j_curr
    return wanted / norm


def bessel_j(n: int, z: float) -> float:
    """
    Bessel function of the first kind J_n(z), absolute accuracy 1e-10.

    Ascending series for |z| < 12, normalised downward recurrence above.

    Raises:
        ValidationError: n negative or non-integer, |z| > 30
    """
    if int(n) != n or n < 0:
        raise ValidationError(f"order must be a non-negative integer, got {n}")
    if not math.isfinite(z) or abs(z) > BESSEL_MAX_ARG:
        raise ValidationError(f"|z| must be <= {BESSEL_MAX_ARG}, got {z}")
    n = int(n)
    sign = -1.0 if (z < 0 and n % 2 == 1) else 1.0
    x = abs(z)
    if x == 0.0:
        return 1.0 if n == 0 else 0.0
    if x < BESSEL_SERIES_LIMIT:
        return sign * _bessel_series(n, x)
    return sign * _bessel_downward(n, x)


# =============================================================================
# Spur prediction
# =============================================================================


class SpurEntry(NamedTuple):
    """Predicted spur: frequency (Hz), level (dB re. target), order, source (ghost | smear)."""

    frequency: float
    level_db: float
    order: int
    source: str


@dataclass(frozen=True)
class SpurTable:
    """
    Predicted spurs around one target.

    Attributes:
        entries: Ghost and smear spurs
        f_max: Largest IF frequency of interest
        ghost_free: Whether 2*f_max < f_dac holds
    """

    entries: Tuple[SpurEntry, ...]
    f_max: float
    ghost_free: bool

    def ghosts(self) -> List[SpurEntry]:
        return [e for e in self.entries if e.source == "ghost"]

    def to_rows(self) -> List[Dict[str, Any]]:
        return [
            {"frequency_hz": e.frequency, "level_db": e.level_db, "order": e.order, "source": e.source}
            for e in self.entries
        ]


def _ratio_db(numerator: float, denominator: float) -> float:
    return 20.0 * math.log10(abs(numerator) / abs(denominator))


def predict_spurs(
    dec: FmErrorDecomposition,
    tau: float,
    f_target: float,
    f_dac: float,
    n_max: int = 3,
    f_max: Optional[float] = None,
) -> SpurTable:
    """
    Dominant-term spur estimate from an FM-error decomposition.

    Ghost n sits at |f_target +- n*f_dac| with level
    max(J1(z_n)/J0(z_n), Jn(z_1)/J0(z_1)), z_k = 2*pi*tau*A_k. Smear m sits
    at f_target +- m*f_LF with level Jm(z_LF)/J0(z_LF).

    Raises:
        RegimeError: Some z >= 1; use the time-domain simulation instead
    """
    if n_max < 1:
        raise ValidationError(f"n_max must be >= 1, got {n_max}")
    if tau < 0 or f_target < 0:
        raise ValidationError("tau and f_target must be >= 0")
    f_max = f_target if f_max is None else f_max

    z = {k: 2.0 * math.pi * tau * dec.amplitude(k) for k in range(1, n_max + 1)}
    z_lf = 2.0 * math.pi * tau * dec.lf.amplitude
    for k, value in z.items():
        if value >= 1.0:
            raise RegimeError(
                f"2*pi*tau*A_{k} = {value:.3g} >= 1; small-index prediction invalid, run the time-domain simulation"
            )
    if z_lf >= 1.0:
        raise RegimeError(
            f"2*pi*tau*A_LF = {z_lf:.3g} >= 1; small-index prediction invalid, run the time-domain simulation"
        )

    entries: List[SpurEntry] = []
    for n in range(1, n_max + 1):
        candidates = []
        if z[n] > 0:
            candidates.append(_ratio_db(bessel_j(1, z[n]), bessel_j(0, z[n])))
        if z[1] > 0:
            candidates.append(_ratio_db(bessel_j(n, z[1]), bessel_j(0, z[1])))
        if not candidates:
            continue
        level = max(candidates)
        for f in (f_target + n * f_dac, abs(f_target - n * f_dac)):
            entries.append(SpurEntry(f, level, n, "ghost"))

    if z_lf > 0:
        for m in range(1, n_max + 1):
            level = _ratio_db(bessel_j(m, z_lf), bessel_j(0, z_lf))
            for f in (f_target + m * dec.lf.frequency, abs(f_target - m * dec.lf.frequency)):
                entries.append(SpurEntry(f, level, m, "smear"))

    ghost_free = 2.0 * f_max < f_dac
    if not ghost_free:
        logger.debug("ghost condition violated: 2*f_max=%.6g Hz >= f_dac=%.6g Hz", 2.0 * f_max, f_dac)
    return SpurTable(tuple(entries), f_max, ghost_free)


# =============================================================================
# Measurements
# =============================================================================


def measure_peak(spectrum: SpectrumEstimate, f: float, search_bins: int = 2) -> Tuple[float, float]:
    """
    Strongest bin within search_bins of f.

    Returns:
        (frequency in Hz, level in dB)
    """
    centre = spectrum.index_of(f)
    lo, hi = max(centre - search_bins, 0), min(centre + search_bins, len(spectrum) - 1)
    idx = lo + int(np.argmax(spectrum.values[lo:hi + 1]))
    return float(spectrum.frequencies[idx]), float(spectrum.bins[idx])


def spur_levels(
    spectrum: SpectrumEstimate,
    f_target: float,
    f_dac: float,
    n_max: int = 3,
    search_bins: int = 2,
) -> List[Dict[str, Any]]:
    """
    Measured ghost levels at f_target +- n*f_dac relative to the target peak.

    Ghost frequencies beyond the spectrum are skipped.
    """
    f_peak, peak_db = measure_peak(spectrum, f_target, search_bins)
    rows = []
    for n in range(1, n_max + 1):
        for f in (f_target + n * f_dac, abs(f_target - n * f_dac)):
            if f > spectrum.f_nyquist or abs(f - f_peak) <= search_bins * spectrum.df:
                continue
            f_meas, level = measure_peak(spectrum, f, search_bins)
            rows.append({"order": n, "frequency_hz": f_meas, "predicted_frequency_hz": f, "level_db": level - peak_db})
    return rows


def _target_band(
    spec: SpectrumEstimate,
    f_target: float,
    exclusion_bins: int,
    band: Optional[Tuple[float, float]],
    f_dac: Optional[float],
) -> Tuple[int, int, int]:
    """In-band bin range [lo, hi] and the bin nearest f_target."""
    if exclusion_bins < 1:
        raise ValidationError(f"exclusion_bins must be >= 1, got {exclusion_bins}")
    if band is None:
        band = (spec.df, f_dac / 2.0 if f_dac is not None else spec.f_nyquist)
    lo, hi = spec.index_of(band[0]), spec.index_of(band[1])
    centre = int(round((f_target - spec.f_start) / spec.df))
    if centre - exclusion_bins < lo or centre + exclusion_bins > hi:
        raise ValidationError(
            f"target at {f_target:.6g} Hz is too close to the band edge [{band[0]:.6g}, {band[1]:.6g}] Hz"
        )
    return lo, hi, centre


def main_lobe(power: np.ndarray, centre: int, exclusion_bins: int, lo: int, hi: int) -> Tuple[int, int, int]:
    """
    Peak bin of the target and the span of its main lobe.

    The peak is the strongest bin within exclusion_bins of centre. The lobe
    covers every contiguous bin within LOBE_DROP_DB of the peak, widened by
    exclusion_bins on each side and clipped to [lo, hi].

    Returns:
        (peak, first, last) bin indices
    """
    peak = centre - exclusion_bins + int(np.argmax(power[centre - exclusion_bins:centre + exclusion_bins + 1]))
    threshold = power[peak] * 10.0 ** (-LOBE_DROP_DB / 10.0)
    first, last = peak, peak
    while first > lo and power[first - 1] > threshold:
        first -= 1
    while last < hi and power[last + 1] > threshold:
        last += 1
    return peak, max(first - exclusion_bins, lo), min(last + exclusion_bins, hi)


def sndr(
    spec: SpectrumEstimate,
    f_target: float,
    exclusion_bins: int = 5,
    band: Optional[Tuple[float, float]] = None,
    f_dac: Optional[float] = None,
) -> float:
    """
    Signal to noise-and-distortion ratio of an IF spectrum, in dB.

    Signal is the power of the whole main lobe (see main_lobe) divided by
    the window's pickup gain, so an unsmeared tone counts as its peak bin.
    Noise and distortion is the summed power of every other in-band bin.
    The band defaults to [df, f_dac/2] (or [df, Nyquist] without f_dac).

    Raises:
        ValidationError: Target lobe not inside the band
    """
    lo, hi, centre = _target_band(spec, f_target, exclusion_bins, band, f_dac)
    power = spec.power()
    _, first, last = main_lobe(power, centre, exclusion_bins, lo, hi)
    signal_power = float(np.sum(power[first:last + 1])) / PICKUP_GAIN.get(spec.window, 1.0)
    in_band = np.zeros(power.size, dtype=bool)
    in_band[lo:hi + 1] = True
    in_band[first:last + 1] = False
    noise_power = float(np.sum(power[in_band]))
    return 10.0 * math.log10(max(signal_power, _TINY_POWER) / max(noise_power, _TINY_POWER))


def peak_to_floor(
    spec: SpectrumEstimate,
    f_target: float,
    exclusion_bins: int = 5,
    reference_bins: int = 10,
    band: Optional[Tuple[float, float]] = None,
    f_dac: Optional[float] = None,
) -> float:
    """
    Target peak over the close-in noise-and-distortion floor, in dB.

    The floor is the strongest of the reference_bins cells on either side
    of the main lobe, the level a reader takes off a DFT plot next to the
    target. Cells outside the band are dropped.

    Raises:
        ValidationError: Target lobe not inside the band, or no reference cell left
    """
    if reference_bins < 1:
        raise ValidationError(f"reference_bins must be >= 1, got {reference_bins}")
    lo, hi, centre = _target_band(spec, f_target, exclusion_bins, band, f_dac)
    power = spec.power()
    peak, first, last = main_lobe(power, centre, exclusion_bins, lo, hi)
    cells = np.concatenate(
        (power[max(first - reference_bins, lo):first], power[last + 1:min(last + reference_bins, hi) + 1])
    )
    if cells.size == 0:
        raise ValidationError(f"no reference cells left beside the target lobe at {f_target:.6g} Hz")
    floor = float(np.max(cells))
    return 10.0 * math.log10(max(float(power[peak]), _TINY_POWER) / max(floor, _TINY_POWER))


def skirt_minima(
    spec: SpectrumEstimate,
    expected: Sequence[float],
    search_hz: float,
    smooth_hz: float,
) -> List[float]:
    """
    Deepest point of the smoothed spectrum near each expected skirt null.

    Power is averaged over a running window of about smooth_hz before the
    search. Nulls whose search span leaves the spectrum are skipped.

    Returns:
        Frequencies in Hz, in the order of expected
    """
    if not search_hz > 0 or not smooth_hz > 0:
        raise ValidationError("search_hz and smooth_hz must be > 0")
    power = spec.power()
    width = max(1, int(round(smooth_hz / spec.df)))
    width += 1 - width % 2
    half = width // 2
    found = []
    for f in expected:
        if f - search_hz - half * spec.df < spec.f_start or f + search_hz + half * spec.df > spec.f_nyquist:
            logger.debug("skirt null near %.6g Hz outside the spectrum", f)
            continue
        lo, hi = spec.index_of(f - search_hz), spec.index_of(f + search_hz)
        smoothed = np.convolve(power[lo - half:hi + half + 1], np.ones(width) / width, mode="valid")
        found.append(float(spec.frequencies[lo + int(np.argmin(smoothed))]))
    return found
