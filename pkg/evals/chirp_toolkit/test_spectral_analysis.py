#!/usr/bin/env python3
"""
Unit tests for FM-error analysis, windowed DFTs, spur prediction and SNDR.

Tests:
1. fm_error() / rms_fm_error() on linear and modulated chirps
2. windowed_dft() calibration and Parseval
3. decompose_fm_error() harmonic read-out
4. bessel_j() against scipy and the three-term recurrence
5. predict_spurs() placement, levels and regime check
6. sndr() / peak_to_floor() / spur_levels() on synthetic IF spectra
7. skirt_minima() on constructed dips
8. Predicted ghosts against a simulated IF

Usage:
    ./test_spectral_analysis.py              # Run all tests
    ./test_spectral_analysis.py -v           # Verbose output
    python -m pytest test_spectral_analysis.py  # Using pytest
"""

import math
import sys

import numpy as np
from scipy.special import jv

from harness import run_tests

from chirp_toolkit.radar_sim import RadarScenario, Target, delay_samples, simulate_if
from chirp_toolkit.schemas import RegimeError, ValidationError
from chirp_toolkit.series import SpectrumEstimate, TimeSeries
from chirp_toolkit.spectral_analysis import (
    ErrorComponent,
    FmErrorDecomposition,
    bessel_j,
    decompose_fm_error,
    fm_error,
    measure_peak,
    peak_to_floor,
    phase_error_series,
    predict_spurs,
    rms_fm_error,
    skirt_minima,
    sndr,
    spur_levels,
    windowed_dft,
)


def _raises(exc, fn, *args, **kwargs) -> str:
    try:
        fn(*args, **kwargs)
    except exc as e:
        return str(e)
    raise AssertionError(f"{fn.__name__} did not raise {exc.__name__}")


def _tone(n, dt, bins_and_amplitudes, phase=0.0):
    """Sum of sines sitting exactly on DFT bin centres of an n-point transform."""
    t = np.arange(n) * dt
    values = np.zeros(n)
    for k, amplitude in bins_and_amplitudes:
        values += amplitude * np.sin(2 * np.pi * k / (n * dt) * t + phase)
    return TimeSeries(dt, values)


def _decomposition(a1, a_lf=0.0, f_dac=10e6, f_lf=100e3):
    harmonics = (ErrorComponent(a1, f_dac, 0.0), ErrorComponent(0.0, 2 * f_dac, 0.0), ErrorComponent(0.0, 3 * f_dac, 0.0))
    return FmErrorDecomposition(ErrorComponent(a_lf, f_lf, 0.0), harmonics, f_dac)


# ==============================================================================
# Test: fm_error()
# ==============================================================================


def test_linear_chirp_has_no_fm_error():
    dt = 1e-9
    t = np.arange(5001) * dt
    chirp = TimeSeries(dt, 8.6441e9 + 2.1932e14 * t, 0.0, "frequency_hz")
    err = fm_error(chirp)
    assert rms_fm_error(err.error) < 1e-3
    assert abs(err.slope / 2.1932e14 - 1.0) < 1e-9
    assert abs(err.intercept - 8.6441e9) < 1.0


def test_sinusoidal_fm_error_rms():
    dt = 1e-9
    t = np.arange(5000) * dt
    amplitude = 30e3
    chirp = TimeSeries(dt, 9e9 + 2e14 * t + amplitude * np.sin(2 * np.pi * 10e6 * t), 0.0, "frequency_hz")
    err = fm_error(chirp)
    assert abs(rms_fm_error(err.error) / (amplitude / math.sqrt(2.0)) - 1.0) < 0.01


def test_fit_window():
    dt = 1e-9
    t = np.arange(1000) * dt
    chirp = TimeSeries(dt, 9e9 + 1e14 * t, 0.0, "frequency_hz")
    err = fm_error(chirp, window=(400, 1000))
    assert len(err.error) == 600
    assert abs(err.error.t0 - 400 * dt) < 1e-18
    _raises(ValidationError, fm_error, chirp, (999, 1000))
    _raises(ValidationError, fm_error, chirp, (0, 1001))


def test_phase_error_series():
    err = TimeSeries(1e-9, np.full(11, 1e3), 2e-9)
    phase = phase_error_series(err)
    assert phase.label == "phase_rad"
    assert np.allclose(phase.values, 2 * np.pi * 1e3 * err.times)


# ==============================================================================
# Test: windowed_dft()
# ==============================================================================


def test_hann_tone_reads_zero_db():
    spectrum = windowed_dft(_tone(4096, 1e-9, [(100, 1.0)]), window="hann")
    assert spectrum.reference == "dBFS"
    assert abs(spectrum.bins[100]) < 1e-9
    assert int(np.argmax(spectrum.values)) == 100


def test_two_tones_level_difference():
    spectrum = windowed_dft(_tone(4096, 1e-9, [(100, 1.0), (300, 0.1)]))
    assert abs((spectrum.bins[100] - spectrum.bins[300]) - 20.0) < 1e-6


def test_rectangular_parseval():
    rng = np.random.default_rng(4)
    for n in (1000, 1001):
        ts = TimeSeries(1e-9, rng.normal(size=n))
        spectrum = windowed_dft(ts, window="rectangular")
        energy = float(np.sum(ts.values ** 2))
        assert abs(spectrum.energy() - energy) <= 1e-9 * energy


def test_dft_bounds():
    ts = TimeSeries(1e-9, np.ones(100))
    _raises(ValidationError, windowed_dft, ts, 90, 20)
    _raises(ValidationError, windowed_dft, ts, None, 0, "blackman")
    part = windowed_dft(ts, 50, 10)
    assert part.start_index == 10 and part.n_points == 50


# ==============================================================================
# Test: decompose_fm_error()
# ==============================================================================


def test_decompose_single_harmonic():
    dt, n = 1e-9, 5000
    err = _tone(n, dt, [(50, 30e3)])
    dec = decompose_fm_error(windowed_dft(err), f_dac=10e6)
    assert len(dec.harmonics) == 10
    assert abs(dec.amplitude(1) - 30e3) < 1e-6 * 30e3
    assert abs(dec.harmonics[0].phase) < 1e-6
    assert max(dec.amplitude(k) for k in range(2, 11)) < 1e-6
    assert dec.lf.amplitude < 1e-6
    assert dec.amplitude(11) == 0.0
    assert dec.to_dict()["harmonics"][0]["amplitude_hz"] == dec.amplitude(1)


def test_decompose_zero_error():
    dec = decompose_fm_error(windowed_dft(TimeSeries(1e-9, np.zeros(5000))), f_dac=10e6)
    assert dec.lf.amplitude == 0.0
    assert dec.lf.frequency > 0
    assert all(c.amplitude == 0.0 for c in dec.harmonics)


def test_decompose_needs_resolution():
    spectrum = windowed_dft(TimeSeries(1e-9, np.zeros(100)))
    msg = _raises(ValidationError, decompose_fm_error, spectrum, 10e6)
    assert "too coarse" in msg


# ==============================================================================
# Test: bessel_j()
# ==============================================================================


def test_bessel_special_values():
    assert bessel_j(0, 0.0) == 1.0
    assert bessel_j(1, 0.0) == 0.0
    assert abs(bessel_j(0, 2.404825557695773)) < 1e-10
    assert abs(bessel_j(1, -1.0) + bessel_j(1, 1.0)) < 1e-15


def test_bessel_matches_scipy():
    for n in range(0, 11):
        for z in np.linspace(-30.0, 30.0, 241):
            assert abs(bessel_j(n, float(z)) - float(jv(n, z))) < 1e-10, (n, z)


def test_bessel_recurrence():
    for z in (0.5, 5.0, 15.0, 25.0):
        for n in range(1, 6):
            lhs = bessel_j(n - 1, z) + bessel_j(n + 1, z)
            assert abs(lhs - 2.0 * n / z * bessel_j(n, z)) < 1e-9, (n, z)


def test_bessel_domain():
    _raises(ValidationError, bessel_j, -1, 1.0)
    _raises(ValidationError, bessel_j, 1.5, 1.0)
    _raises(ValidationError, bessel_j, 0, 31.0)


# ==============================================================================
# Test: predict_spurs()
# ==============================================================================


def test_zero_error_predicts_no_spurs():
    table = predict_spurs(_decomposition(0.0), tau=153.4e-9, f_target=33.65e6, f_dac=10e6)
    assert table.entries == ()
    assert table.to_rows() == []


def test_ghost_placement_and_level():
    tau = 153.4e-9
    table = predict_spurs(_decomposition(1e3), tau=tau, f_target=33.65e6, f_dac=10e6)
    ghosts = table.ghosts()
    assert len(ghosts) == 6
    first = sorted(round(g.frequency / 1e4) * 1e4 for g in ghosts if g.order == 1)
    second = sorted(round(g.frequency / 1e4) * 1e4 for g in ghosts if g.order == 2)
    assert first == [23.65e6, 43.65e6]
    assert second == [13.65e6, 53.65e6]

    z1 = 2 * math.pi * tau * 1e3
    level = next(g.level_db for g in ghosts if g.order == 1)
    assert abs(level - 20 * math.log10(z1 / 2)) < 0.01
    assert not table.ghost_free
    assert predict_spurs(_decomposition(1e3, f_dac=80e6), tau, 33.65e6, 80e6).ghost_free


def test_smear_spurs():
    table = predict_spurs(_decomposition(0.0, a_lf=1e3), tau=153.4e-9, f_target=33.65e6, f_dac=10e6)
    smears = [e for e in table.entries if e.source == "smear"]
    assert len(smears) == 6
    assert sorted(e.frequency for e in smears if e.order == 1) == [33.55e6, 33.75e6]


def test_large_index_rejected():
    msg = _raises(RegimeError, predict_spurs, _decomposition(2e6), 153.4e-9, 33.65e6, 10e6)
    assert "time-domain simulation" in msg
    _raises(RegimeError, predict_spurs, _decomposition(0.0, a_lf=2e6), 153.4e-9, 33.65e6, 10e6)


def test_predicted_spurs_fall_off_with_order():
    f_dac, a1 = 10e6, 40e3
    harmonics = tuple(ErrorComponent(a1 / k ** 2, k * f_dac, 0.0) for k in range(1, 4))
    falling = FmErrorDecomposition(ErrorComponent(0.0, 100e3, 0.0), harmonics, f_dac)
    for dec in (falling, _decomposition(a1)):
        table = predict_spurs(dec, tau=153.4e-9, f_target=33.65e6, f_dac=f_dac, n_max=3)
        levels = [next(g.level_db for g in table.ghosts() if g.order == n) for n in (1, 2, 3)]
        assert levels[0] > levels[1] > levels[2]


# ==============================================================================
# Test: sndr(), peak_to_floor() and spur_levels()
# ==============================================================================


def test_sndr_with_white_noise():
    n, dt = 2 ** 14, 1e-9
    rng = np.random.default_rng(12)
    tone = _tone(n, dt, [(1000, 1.0)])
    # Hann bins carry 3*sigma^2/n each, about n/2 of them in band
    sigma = math.sqrt(0.5 / 1.5e4)
    noisy = tone.with_values(tone.values + rng.normal(0.0, sigma, n))
    spectrum = windowed_dft(noisy)
    assert abs(sndr(spectrum, 1000 * spectrum.df) - 40.0) < 0.5


def test_sndr_noiseless():
    spectrum = windowed_dft(_tone(2 ** 14, 1e-9, [(1000, 1.0)]))
    assert sndr(spectrum, 1000 * spectrum.df) >= 100.0


def test_sndr_band_edges():
    spectrum = windowed_dft(_tone(2 ** 14, 1e-9, [(1000, 1.0)]))
    _raises(ValidationError, sndr, spectrum, 3 * spectrum.df)
    _raises(ValidationError, sndr, spectrum, 1000 * spectrum.df, 5, None, 100e6)
    _raises(ValidationError, sndr, spectrum, 1000 * spectrum.df, 0)


def test_measured_ghost_level():
    n, dt = 2 ** 14, 1e-9
    spectrum = windowed_dft(_tone(n, dt, [(1000, 1.0), (1200, 0.01)]))
    f_target, f_dac = 1000 * spectrum.df, 200 * spectrum.df
    f_peak, level = measure_peak(spectrum, f_target)
    assert f_peak == spectrum.frequencies[1000]
    assert abs(level) < 1e-9
    rows = spur_levels(spectrum, f_target, f_dac, n_max=1)
    upper = next(r for r in rows if r["predicted_frequency_hz"] > f_target)
    assert abs(upper["level_db"] + 40.0) < 1e-6
    assert len(rows) == 2


def test_sndr_counts_smeared_lobe():
    values = np.full(4097, 1e-4)
    values[990:1011] = 0.5
    spectrum = SpectrumEstimate(df=1.0, values=values, window="hann")
    # lobe 990..1010 plus five guard bins a side; floor bins carry 5e-9 each
    signal_power = (21 * 0.125 + 10 * 5e-9) / 1.5
    noise_power = (4096 - 31) * 5e-9
    assert abs(sndr(spectrum, 1000.0) - 10 * math.log10(signal_power / noise_power)) < 1e-9
    assert abs(peak_to_floor(spectrum, 1000.0) - 10 * math.log10(0.125 / 5e-9)) < 1e-9


def test_peak_to_floor_reads_close_in_floor():
    values = np.full(4097, 1e-4)
    values[999:1002] = [0.5, 1.0, 0.5]
    values[1010] = 1e-2
    spectrum = SpectrumEstimate(df=1.0, values=values, window="hann")
    assert abs(peak_to_floor(spectrum, 1000.0) - 40.0) < 1e-9
    assert abs(peak_to_floor(spectrum, 1000.0, reference_bins=2) - 80.0) < 1e-9

    values[3000] = 0.1
    spurred = SpectrumEstimate(df=1.0, values=values, window="hann")
    assert sndr(spurred, 1000.0) < sndr(spectrum, 1000.0) - 10.0
    assert abs(peak_to_floor(spurred, 1000.0) - 40.0) < 1e-9

    _raises(ValidationError, peak_to_floor, spectrum, 1000.0, 5, 0)
    msg = _raises(ValidationError, peak_to_floor, spectrum, 1000.0, 5, 10, (994.0, 1006.0))
    assert "reference cell" in msg


# ==============================================================================
# Test: skirt_minima()
# ==============================================================================


def test_skirt_minima_finds_dips():
    values = 0.1 + 0.001 * np.abs(np.arange(2001) - 702)
    spectrum = SpectrumEstimate(df=1.0, values=values)
    # the second null's search span runs past the last bin
    assert skirt_minima(spectrum, [690.0, 1995.0], search_hz=30.0, smooth_hz=3.0) == [702.0]
    _raises(ValidationError, skirt_minima, spectrum, [690.0], 0.0, 3.0)


# ==============================================================================
# Test: predicted against simulated ghosts
# ==============================================================================


def test_predicted_ghost_matches_simulation():
    dt, n, f_dac = 0.1e-9, 10200, 10e6
    t = np.arange(n) * dt
    slope = 1.25e15
    chirp = TimeSeries(dt, 100e6 + slope * t + 796e3 * np.sin(2 * np.pi * f_dac * t), 0.0, "frequency_hz")
    q = delay_samples(3.0, dt)
    assert q == 200
    tau, f_target = q * dt, slope * q * dt

    err = fm_error(chirp, window=(q, n))
    dec = decompose_fm_error(windowed_dft(err.error), f_dac, n_harmonics=3)
    assert abs(dec.amplitude(1) / 796e3 - 1.0) < 0.02
    table = predict_spurs(dec, tau=tau, f_target=f_target, f_dac=f_dac, n_max=1)
    predicted = table.ghosts()[0].level_db

    result = simulate_if(chirp, None, RadarScenario(targets=(Target(3.0),), dt=dt), phase="integrated")
    spectrum = windowed_dft(result.series, start_index=result.valid_from)
    rows = spur_levels(spectrum, f_target, f_dac, n_max=1)
    assert len(rows) == 2
    for row in rows:
        assert abs(row["level_db"] - predicted) < 3.0


def main():
    tests = [
        test_linear_chirp_has_no_fm_error,
        test_sinusoidal_fm_error_rms,
        test_fit_window,
        test_phase_error_series,
        test_hann_tone_reads_zero_db,
        test_two_tones_level_difference,
        test_rectangular_parseval,
        test_dft_bounds,
        test_decompose_single_harmonic,
        test_decompose_zero_error,
        test_decompose_needs_resolution,
        test_bessel_special_values,
        test_bessel_matches_scipy,
        test_bessel_recurrence,
        test_bessel_domain,
        test_zero_error_predicts_no_spurs,
        test_ghost_placement_and_level,
        test_smear_spurs,
        test_large_index_rejected,
        test_predicted_spurs_fall_off_with_order,
        test_sndr_with_white_noise,
        test_sndr_noiseless,
        test_sndr_band_edges,
        test_measured_ghost_level,
        test_sndr_counts_smeared_lobe,
        test_peak_to_floor_reads_close_in_floor,
        test_skirt_minima_finds_dips,
        test_predicted_ghost_matches_simulation,
    ]
    return run_tests("spectral_analysis Unit Tests", tests)


if __name__ == "__main__":
    sys.exit(main())
