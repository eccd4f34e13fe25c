#!/usr/bin/env python3
"""
Tuning-voltage and chirp-frequency waveforms from a DAC program.

Linear mode integrates a constant current per update (the QDAC ramp);
ZOH mode jumps to each update target and holds it. Both modes pass
through the same voltages at update instants.

Also provides the analytic output-noise calculators used to compare a
QDAC against a resistive VDAC.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from scipy.constants import Boltzmann

from chirp_toolkit.predistortion import ChirpPlan, DacProgram, reconstruct_voltages
from chirp_toolkit.schemas import ValidationError
from chirp_toolkit.series import TimeSeries
from chirp_toolkit.vco_model import TuningCurveModel, eval_forward

logger = logging.getLogger(__name__)

DEFAULT_DT = 10e-12
INTERPOLATION_MODES = ("linear", "zoh")

# guards floor() against t*f_dac landing a hair below an update instant
_BOUNDARY_EPS = 1e-9


def _update_position(n_samples: int, dt: float, f_dac: float, n_dac: int):
    u = np.arange(n_samples) * (dt * f_dac)
    index = np.minimum(np.floor(u + _BOUNDARY_EPS), n_dac).astype(np.int64)
    return u, index


def synth_tuning_voltage(
    prog: DacProgram,
    plan: ChirpPlan,
    dt: float = DEFAULT_DT,
    mode: str = "linear",
) -> TimeSeries:
    """
    Sample the QDAC output over one chirp.

    Samples are taken at t = k*dt for k = 0..round(t_chirp/dt) inclusive,
    so the last sample sits on the final update instant.

    Args:
        prog: DAC program
        plan: Chirp plan (f_dac, t_chirp)
        dt: Sample step in seconds
        mode: linear or zoh

    Returns:
        TimeSeries labelled voltage

    Raises:
        ValidationError: dt coarser than half an update period, bad mode
    """
    if mode not in INTERPOLATION_MODES:
        raise ValidationError(f"mode '{mode}' not one of {', '.join(INTERPOLATION_MODES)}")
    if not dt > 0 or dt > 1.0 / (2.0 * plan.f_dac):
        raise ValidationError(f"dt={dt} must be in (0, {1.0 / (2.0 * plan.f_dac):.3g}] s for f_dac={plan.f_dac:.6g} Hz")
    if prog.n_dac != plan.n_dac:
        raise ValidationError(f"program has {prog.n_dac} codes, plan expects {plan.n_dac}")

    n_samples = int(round(plan.t_chirp / dt)) + 1
    knots = reconstruct_voltages(prog)
    u, index = _update_position(n_samples, dt, plan.f_dac, plan.n_dac)

    if mode == "zoh":
        values = knots[index]
    else:
        segment = np.minimum(index, plan.n_dac - 1)
        frac = np.clip(u - segment, 0.0, 1.0)
        values = knots[segment] + prog.k_dac * prog.codes[segment] * frac
        values[-1] = knots[-1]

    logger.debug("%s tuning voltage: %d samples, %d updates", mode, n_samples, plan.n_dac)
    return TimeSeries(dt, values, 0.0, "voltage")


def synth_chirp(
    v: TimeSeries,
    model: TuningCurveModel,
    extrapolate: bool = False,
    tolerance: float = 0.0,
) -> TimeSeries:
    """
    Absolute instantaneous frequency f = (f_base + f(V)) * 1e9 per sample.

    Raises:
        DomainError: Voltage outside the model range without extrapolate
    """
    if v.label != "voltage":
        raise ValidationError(f"expected a voltage series, got {v.label}")
    if extrapolate:
        lo, hi = float(np.min(v.values)), float(np.max(v.values))
        if lo < model.v_min - tolerance or hi > model.v_max + tolerance:
            logger.warning(
                "tuning voltage spans [%.6g, %.6g] V, beyond the model range [%g, %g] V",
                lo, hi, model.v_min, model.v_max,
            )
    freqs = (model.f_base + eval_forward(model, v.values, extrapolate=extrapolate, tolerance=tolerance)) * 1e9
    return v.with_values(freqs, "frequency_hz")


@dataclass(frozen=True)
class NoiseParams:
    """
    Small-signal parameters for the DAC output-noise comparison.

    Attributes:
        gm: Transconductance in siemens
        ro: Output resistance in ohms
        c: Output capacitance in farads
        gamma: Channel-noise coefficient
        temp: Temperature in kelvin
        r_v: VDAC load resistance in ohms (optional)
        measured: False for placeholder presets
    """

    gm: float
    ro: float
    c: float
    gamma: float = 2.0 / 3.0
    temp: float = 300.0
    r_v: Optional[float] = None
    measured: bool = False

    def __post_init__(self):
        for name in ("gm", "ro", "c", "gamma", "temp"):
            value = getattr(self, name)
            if not value > 0:
                raise ValidationError(f"{name} must be > 0, got {value}")
        if self.r_v is not None and not self.r_v > 0:
            raise ValidationError(f"r_v must be > 0, got {self.r_v}")


# Placeholder device values; the source circuit's values are not published
NOISE_PRESETS: Dict[str, NoiseParams] = {
    "qdac_placeholder": NoiseParams(gm=1e-4, ro=1e6, c=25e-12),
    "vdac_placeholder": NoiseParams(gm=1e-4, ro=1e6, c=1e-12, r_v=1e4),
}


def qdac_output_noise(p: NoiseParams) -> float:
    """Output noise variance kT/C * (gamma * gm * ro), in V^2."""
    return Boltzmann * p.temp / p.c * (p.gamma * p.gm * p.ro)


def vdac_output_noise(p: NoiseParams) -> float:
    """Output noise variance kT/C * (gamma * gm * R_V + 1), in V^2."""
    if p.r_v is None:
        raise ValidationError("VDAC noise needs r_v")
    if p.r_v > p.ro / 10.0:
        logger.warning("r_v=%.3g ohm is not much smaller than ro=%.3g ohm; the VDAC estimate is optimistic", p.r_v, p.ro)
    return Boltzmann * p.temp / p.c * (p.gamma * p.gm * p.r_v + 1.0)
