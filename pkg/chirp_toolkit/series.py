"""
Uniformly sampled signals and spectral estimates.

TimeSeries carries chirp frequency, tuning voltage, phase noise and IF
waveforms. SpectrumEstimate carries DFT magnitudes and periodogram
densities; it stores linear values and derives dB bins on demand.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from chirp_toolkit.schemas import ValidationError

SERIES_LABELS = ("voltage", "frequency_hz", "phase_rad", "dimensionless")
SPECTRUM_KINDS = ("amplitude", "density")
WINDOWS = ("hann", "rectangular")

# dB floor applied to exact zeros
_TINY = 1e-300


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """
    Uniformly sampled real signal.

    Attributes:
        dt: Sample step in seconds
        values: Samples (read-only array)
        t0: Time of the first sample in seconds
        label: One of voltage, frequency_hz, phase_rad, dimensionless
    """

    dt: float
    values: np.ndarray
    t0: float = 0.0
    label: str = "dimensionless"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"dt must be > 0, got {self.dt}")
        if self.label not in SERIES_LABELS:
            raise ValidationError(f"label '{self.label}' not one of {', '.join(SERIES_LABELS)}")
        values = _frozen_array(self.values)
        if values.ndim != 1 or values.size == 0:
            raise ValidationError("values must be a non-empty 1-D sequence")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    @property
    def duration(self) -> float:
        """Span from the first to the last sample."""
        return (self.values.size - 1) * self.dt

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.dt

    def slice(self, start: int, stop: Optional[int] = None) -> "TimeSeries":
        """Return samples [start, stop) with t0 moved to the first kept sample."""
        stop = self.values.size if stop is None else stop
        if not 0 <= start < stop <= self.values.size:
            raise ValidationError(f"slice [{start}, {stop}) outside series of length {self.values.size}")
        return TimeSeries(self.dt, self.values[start:stop], self.t0 + start * self.dt, self.label)

    def with_values(self, values: np.ndarray, label: Optional[str] = None) -> "TimeSeries":
        return TimeSeries(self.dt, values, self.t0, label or self.label)


@dataclass(frozen=True, eq=False)
class SpectrumEstimate:
    """
    One-sided (or two-sided) spectral estimate on a uniform grid.

    kind="amplitude": values are per-bin sinusoid amplitudes (DFT output,
    window gain compensated); bins are dBFS (full-scale sine reads 0 dB).

    kind="density": values are the one-sided density S (units²/Hz);
    bins report the SSB level 10*log10(S/2), i.e. dBc/Hz for phase series.

    Attributes:
        df: Bin width in Hz
        values: Linear values (read-only array)
        kind: amplitude or density
        sided: one or two
        window: hann or rectangular
        n_points: Transform length the estimate came from (0 if constructed)
        start_index: First input sample used
        f_start: Frequency of values[0] in Hz
        window_sum: Sum of window weights (amplitude spectra only)
        phases: Per-bin phase in radians (amplitude spectra only)
    """

    df: float
    values: np.ndarray
    kind: str = "amplitude"
    sided: str = "one"
    window: str = "rectangular"
    n_points: int = 0
    start_index: int = 0
    f_start: float = 0.0
    window_sum: Optional[float] = None
    phases: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if not self.df > 0:
            raise ValidationError(f"df must be > 0, got {self.df}")
        if self.kind not in SPECTRUM_KINDS:
            raise ValidationError(f"kind '{self.kind}' not one of {', '.join(SPECTRUM_KINDS)}")
        if self.sided not in ("one", "two"):
            raise ValidationError(f"sided must be 'one' or 'two', got '{self.sided}'")
        if self.window not in WINDOWS:
            raise ValidationError(f"window '{self.window}' not one of {', '.join(WINDOWS)}")
        values = _frozen_array(self.values)
        if values.ndim != 1 or values.size == 0:
            raise ValidationError("values must be a non-empty 1-D sequence")
        if np.any(values < 0):
            raise ValidationError("spectral values must be non-negative")
        object.__setattr__(self, "values", values)

        if self.n_points:
            n = self.n_points
            if self.sided == "two":
                allowed = {n}
            else:
                # full rfft grid, or the DC-less grid used for constructed spectra
                allowed = {n // 2 + 1, (n - 1) // 2}
            if values.size not in allowed:
                raise ValidationError(
                    f"{values.size} bins inconsistent with {self.sided}-sided transform of {n} points"
                )

        if self.phases is not None:
            phases = _frozen_array(self.phases)
            if phases.shape != values.shape:
                raise ValidationError("phases must match values in length")
            object.__setattr__(self, "phases", phases)

    def __len__(self) -> int:
        return self.values.size

    @property
    def reference(self) -> str:
        return "dBFS" if self.kind == "amplitude" else "dBc/Hz"

    @property
    def frequencies(self) -> np.ndarray:
        return self.f_start + self.df * np.arange(self.values.size)

    @property
    def bins(self) -> np.ndarray:
        """Magnitudes in dB relative to the declared reference."""
        if self.kind == "amplitude":
            return 20.0 * np.log10(np.maximum(self.values, _TINY))
        return 10.0 * np.log10(np.maximum(self.values / 2.0, _TINY))

    @property
    def f_nyquist(self) -> float:
        return self.f_start + self.df * (self.values.size - 1)

    def index_of(self, f: float) -> int:
        """Nearest bin index to frequency f (clipped to the grid)."""
        idx = int(round((f - self.f_start) / self.df))
        return min(max(idx, 0), self.values.size - 1)

    def power(self) -> np.ndarray:
        """
        Per-bin power.

        Amplitude spectra: mean-square power of the bin's sinusoid (A²/2).
        Density spectra: density times bin width.
        """
        if self.kind == "amplitude":
            return self.values ** 2 / 2.0
        return self.values * self.df

    def integrated_power(self) -> float:
        return float(np.sum(self.power()))

    def energy(self) -> float:
        """
        Signal energy recovered from a one-sided amplitude spectrum.

        Undoes the window normalization and returns sum(|X|²)/n over the
        implied two-sided DFT, which equals the windowed time-domain
        energy (Parseval).
        """
        if self.kind != "amplitude" or self.window_sum is None or not self.n_points:
            raise ValidationError("energy() needs a DFT amplitude spectrum with window metadata")
        n = self.n_points
        scale = np.full(self.values.size, 2.0)
        scale[0] = 1.0
        if n % 2 == 0:
            scale[-1] = 1.0
        magnitude = self.values * self.window_sum / scale
        weight = np.full(self.values.size, 2.0)
        weight[0] = 1.0
        if n % 2 == 0:
            weight[-1] = 1.0
        return float(np.sum(weight * magnitude ** 2) / n)
