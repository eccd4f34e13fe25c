#!/usr/bin/env python3
"""
TX phase-noise spectra, time-series synthesis and periodogram recovery.

Synthesis follows the inverse-FFT recipe: an SSB level L(df) in dBc/Hz is
converted to S_phi/2 = 10^(L/10), turned into per-bin magnitudes
sqrt(RBW * S_phi/2), given uniform random phases, assembled into a
conjugate-symmetric DSB spectrum, scaled by N and inverse transformed.

Usage:
    from chirp_toolkit.phase_noise import PhaseNoiseShape, spec_for_series, synth_phase_noise

    spec = spec_for_series(PhaseNoiseShape(), n_samples=500001, dt=10e-12)
    phi = synth_phase_noise(spec, seed=1234)
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal

from chirp_toolkit.schemas import ValidationError
from chirp_toolkit.series import SpectrumEstimate, TimeSeries

logger = logging.getLogger(__name__)

SHAPE_KINDS = ("open_loop", "pedestal", "tabulated")

# relative mismatch allowed between df_low and the grid spacing 2*df_high/N
_GRID_RTOL = 1e-6


@dataclass(frozen=True)
class PhaseNoiseShape:
    """
    SSB phase-noise profile, independent of the simulation grid.

    Attributes:
        kind: open_loop (-20 dB/decade through the anchor), pedestal
              (flat floor below bw, open loop above) or tabulated
        anchor_df: Anchor offset in Hz
        anchor_level: Level at the anchor in dBc/Hz
        bw: Pedestal bandwidth in Hz
        floor: Pedestal level in dBc/Hz
        table: (offset Hz, level dBc/Hz) breakpoints for tabulated shapes
    """

    kind: str = "open_loop"
    anchor_df: float = 1e6
    anchor_level: float = -110.0
    bw: Optional[float] = None
    floor: Optional[float] = None
    table: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ValidationError(f"phase-noise kind '{self.kind}' not one of {', '.join(SHAPE_KINDS)}")
        if not self.anchor_df > 0:
            raise ValidationError(f"anchor_df must be > 0, got {self.anchor_df}")
        if self.kind == "pedestal" and (self.bw is None or self.floor is None or not self.bw > 0):
            raise ValidationError("pedestal shape needs bw > 0 and floor")
        if self.kind == "tabulated":
            table = tuple((float(f), float(level)) for f, level in self.table)
            if len(table) < 2:
                raise ValidationError("tabulated shape needs at least two breakpoints")
            offsets = np.array([f for f, _ in table])
            if np.any(offsets <= 0) or np.any(np.diff(offsets) <= 0):
                raise ValidationError("tabulated offsets must be positive and increasing")
            object.__setattr__(self, "table", table)

    def level_at(self, df) -> np.ndarray:
        """SSB level in dBc/Hz at offset(s) df > 0."""
        offsets = np.asarray(df, dtype=float)
        if np.any(offsets <= 0):
            raise ValidationError("offsets must be > 0")
        open_loop = self.anchor_level - 20.0 * np.log10(offsets / self.anchor_df)
        if self.kind == "open_loop":
            return open_loop
        if self.kind == "pedestal":
            return np.where(offsets < self.bw, self.floor, open_loop)
        table = np.array(self.table)
        return np.interp(np.log10(offsets), np.log10(table[:, 0]), table[:, 1])


@dataclass(frozen=True)
class PhaseNoiseSpec:
    """
    Phase-noise profile on a synthesis grid of N (odd) points.

    Attributes:
        shape: The SSB profile
        df_low: Lowest offset, 1/T_obs
        df_high: Highest offset, 1/(2*dt)
        n_points: Odd grid size N; L = (N-1)/2 offsets k*RBW are synthesized
    """

    shape: PhaseNoiseShape
    df_low: float
    df_high: float
    n_points: int

    def __post_init__(self):
        if not 0 < self.df_low < self.df_high:
            raise ValidationError(f"need 0 < df_low < df_high, got {self.df_low} and {self.df_high}")
        if int(self.n_points) != self.n_points or self.n_points < 3 or self.n_points % 2 == 0:
            raise ValidationError(f"n_points must be an odd integer >= 3, got {self.n_points}")
        if abs(self.df_low - self.rbw) > _GRID_RTOL * self.rbw:
            raise ValidationError(
                f"df_low={self.df_low:.6g} Hz disagrees with the grid spacing 2*df_high/N={self.rbw:.6g} Hz"
            )

    @property
    def rbw(self) -> float:
        return 2.0 * self.df_high / self.n_points

    @property
    def n_offsets(self) -> int:
        return (self.n_points - 1) // 2

    @property
    def dt(self) -> float:
        return 1.0 / (2.0 * self.df_high)


def spec_for_series(shape: PhaseNoiseShape, n_samples: int, dt: float) -> PhaseNoiseSpec:
    """
    Grid matching a series of n_samples at step dt (N rounded up to odd).
    """
    if n_samples < 2:
        raise ValidationError(f"need at least 2 samples, got {n_samples}")
    n_points = n_samples if n_samples % 2 == 1 else n_samples + 1
    return PhaseNoiseSpec(shape, df_low=1.0 / (n_points * dt), df_high=1.0 / (2.0 * dt), n_points=n_points)


def build_pn_spectrum(spec: PhaseNoiseSpec) -> SpectrumEstimate:
    """
    SSB profile sampled at offsets k*RBW, k = 1..L.

    Returns:
        Density SpectrumEstimate holding S_phi = 2*10^(L/10); its bins read L
    """
    offsets = spec.rbw * np.arange(1, spec.n_offsets + 1)
    levels = spec.shape.level_at(offsets)
    return SpectrumEstimate(
        df=spec.rbw,
        values=2.0 * 10.0 ** (levels / 10.0),
        kind="density",
        sided="one",
        window="rectangular",
        n_points=spec.n_points,
        f_start=spec.rbw,
    )


def synth_phase_noise(
    spec: PhaseNoiseSpec,
    seed: Optional[int] = None,
    spectrum: Optional[SpectrumEstimate] = None,
) -> TimeSeries:
    """
    Random phase series whose periodogram recovers the constructed spectrum.

    Args:
        spec: Grid and profile
        seed: Seed for the random SSB phases
        spectrum: Override the S_phi values (must match the PhaseNoiseSpec grid)

    Returns:
        TimeSeries labelled phase_rad, N samples at dt = 1/(2*df_high)
    """
    spectrum = spectrum if spectrum is not None else build_pn_spectrum(spec)
    n, half = spec.n_points, spec.n_offsets
    if spectrum.values.size != half:
        raise ValidationError(f"spectrum has {spectrum.values.size} offsets, grid needs {half}")

    ssb = spectrum.values / 2.0
    magnitude = np.sqrt(spec.rbw * ssb)
    dsb_magnitude = np.concatenate(([0.0], magnitude, magnitude[::-1]))

    rng = np.random.default_rng(seed)
    ssb_phase = np.exp(1j * 2.0 * np.pi * rng.random(half))
    dsb_phase = np.concatenate(([1.0 + 0.0j], ssb_phase, np.conj(ssb_phase[::-1])))

    waveform = np.fft.ifft(dsb_magnitude * dsb_phase * n)
    rms = np.sqrt(np.mean(waveform.real ** 2))
    residual = np.max(np.abs(waveform.imag))
    if rms > 0 and residual > 1e-10 * rms:
        logger.warning("inverse transform left imaginary residue %.3g (rms %.3g)", residual, rms)
    logger.debug("phase noise: N=%d, rms %.4g rad", n, rms)
    return TimeSeries(spec.dt, waveform.real, 0.0, "phase_rad")


def periodogram(ts: TimeSeries) -> SpectrumEstimate:
    """
    One-sided rectangular-window periodogram.

    Returns:
        Density SpectrumEstimate; bins read S/2 so a synthesized phase series
        recovers its constructed SSB level
    """
    if len(ts) < 2:
        raise ValidationError("periodogram needs at least 2 samples")
    freqs, density = signal.periodogram(
        ts.values,
        fs=ts.sample_rate,
        window="boxcar",
        detrend=False,
        return_onesided=True,
        scaling="density",
    )
    return SpectrumEstimate(
        df=float(freqs[1] - freqs[0]),
        values=density,
        kind="density",
        sided="one",
        window="rectangular",
        n_points=len(ts),
    )


def _mean_level(spectrum: SpectrumEstimate, mean: float) -> float:
    if spectrum.kind == "amplitude":
        return 20.0 * np.log10(max(mean, 1e-300))
    return 10.0 * np.log10(max(mean / 2.0, 1e-300))


def band_levels(spectrum: SpectrumEstimate, edges: Sequence[float]) -> List[Tuple[float, float]]:
    """
    Mean level in each band [edges[i], edges[i+1]), the last band closed.

    Bands without a bin are skipped. A band's centre is the geometric mean
    of its edges, where a -20 dB/decade density averages to its own level.

    Returns:
        (band centre in Hz, level in dB) pairs
    """
    edges = np.asarray(edges, dtype=float)
    if edges.size < 2 or np.any(edges <= 0) or np.any(np.diff(edges) <= 0):
        raise ValidationError("band edges must be positive and increasing")
    freqs = spectrum.frequencies
    levels = []
    for i, (start, stop) in enumerate(zip(edges[:-1], edges[1:])):
        upper = freqs <= stop if i == edges.size - 2 else freqs < stop
        mask = (freqs >= start) & upper
        if np.any(mask):
            levels.append((float(np.sqrt(start * stop)), _mean_level(spectrum, float(np.mean(spectrum.values[mask])))))
    return levels


def decade_average(spectrum: SpectrumEstimate, lo: float, hi: float) -> List[Tuple[float, float]]:
    """
    Mean level per decade between lo and hi.

    Averages the linear values within each decade [10^k, 10^(k+1)) that
    overlaps [lo, hi], then converts to the spectrum's dB reference.

    Returns:
        (decade start in Hz, level in dB) pairs
    """
    if not 0 < lo < hi:
        raise ValidationError(f"need 0 < lo < hi, got {lo} and {hi}")
    freqs = spectrum.frequencies
    bins = []
    for k in range(int(np.floor(np.log10(lo))), int(np.ceil(np.log10(hi)))):
        start, stop = max(10.0 ** k, lo), min(10.0 ** (k + 1), hi)
        mask = (freqs >= start) & (freqs < stop)
        if not np.any(mask):
            continue
        bins.append((start, _mean_level(spectrum, float(np.mean(spectrum.values[mask])))))
    return bins


def integrated_phase_variance(spectrum: SpectrumEstimate) -> float:
    """Variance in rad^2 implied by a one-sided density: sum(S_phi) * RBW."""
    if spectrum.kind != "density":
        raise ValidationError("integrated variance needs a density spectrum")
    return spectrum.integrated_power()
