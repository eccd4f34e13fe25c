#!/usr/bin/env python3
"""
Predistorted voltage trajectory and QDAC code solving.

The QDAC integrates a code-controlled current onto C_DAC, so each update
adds k_dac * code volts with k_dac = I_LSB / C_DAC / f_DAC. The lower
triangular all-ones system linking codes to voltages is inverted as a
first difference.

Usage:
    from chirp_toolkit.predistortion import ChirpPlan, QdacConfig, generate_vpd, solve_dac_codes

    plan = ChirpPlan(t_chirp=5e-6, f_dac=80e6).resolved(backward_model)
    v_pd = generate_vpd(backward_model, plan)
    program = solve_dac_codes(v_pd, QdacConfig(), plan)
"""

import dataclasses
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from chirp_toolkit.backward_learner import BackwardModel, eval_backward
from chirp_toolkit.schemas import SaturationError, ValidationError, n_dac_issue

logger = logging.getLogger(__name__)

# Slack (volts) on the reconstructed endpoint; the learned backward map is
# only accurate to its fit residual at the top of the charted span
RANGE_TOLERANCE_V = 1e-3


@dataclass(frozen=True)
class ChirpPlan:
    """
    Desired linear chirp.

    Attributes:
        t_chirp: Chirp duration in seconds
        f_dac: QDAC update rate in Hz
        b_des: Bandwidth in Hz (None: the full charted span)
        t_quiet: Quiet time between chirps in seconds
        f0_abs: Absolute start frequency in Hz (filled by resolved())
        start_fraction: Fraction of the charted span skipped before the chirp starts
        allow_extrapolation: Permit b_des beyond the charted span
        name: Label used for output directories
    """

    t_chirp: float
    f_dac: float
    b_des: Optional[float] = None
    t_quiet: float = 1e-6
    f0_abs: Optional[float] = None
    start_fraction: float = 0.0
    allow_extrapolation: bool = False
    name: str = "chirp"

    def __post_init__(self):
        if not self.t_chirp > 0:
            raise ValidationError(f"t_chirp must be > 0, got {self.t_chirp}")
        if not self.f_dac > 0:
            raise ValidationError(f"f_dac must be > 0, got {self.f_dac}")
        if self.t_quiet < 0:
            raise ValidationError(f"t_quiet must be >= 0, got {self.t_quiet}")
        if self.b_des is not None and not self.b_des > 0:
            raise ValidationError(f"b_des must be > 0, got {self.b_des}")
        if not 0.0 <= self.start_fraction < 1.0:
            raise ValidationError(f"start_fraction must be in [0, 1), got {self.start_fraction}")
        msg = n_dac_issue(self.f_dac, self.t_chirp)
        if msg:
            raise ValidationError(msg)

    @property
    def n_dac(self) -> int:
        return int(round(self.f_dac * self.t_chirp))

    @property
    def t_dac(self) -> float:
        return 1.0 / self.f_dac

    @property
    def slope(self) -> float:
        if self.b_des is None:
            raise ValidationError("b_des unresolved; call resolved() first")
        return self.b_des / self.t_chirp

    def resolved(self, bm: BackwardModel) -> "ChirpPlan":
        """
        Fill b_des and f0_abs from the backward model.

        Raises:
            ValidationError: b_des exceeds the charted span without extrapolation
        """
        span_hz = bm.f_span * 1e9
        start_hz = self.start_fraction * span_hz
        b_des = self.b_des if self.b_des is not None else span_hz - start_hz
        if start_hz + b_des > span_hz * (1.0 + 1e-9):
            if not self.allow_extrapolation:
                raise ValidationError(
                    f"chirp needs {(start_hz + b_des) / 1e9:.6g} GHz above the chart origin but only "
                    f"{bm.f_span:.6g} GHz was charted; enable extrapolation to allow it"
                )
            logger.warning(
                "extrapolative predistortion: %.6g GHz beyond the charted span",
                (start_hz + b_des - span_hz) / 1e9,
            )
        return dataclasses.replace(self, b_des=b_des, f0_abs=(bm.f_offset * 1e9) + start_hz)


@dataclass(frozen=True)
class QdacConfig:
    """
    QDAC actuator constants.

    Attributes:
        i_lsb: IDAC LSB current in amperes
        c_dac: Integration capacitor in farads
        code_min: Most negative IDAC code
        code_max: Most positive IDAC code
    """

    i_lsb: float = 2.5e-9
    c_dac: float = 25e-12
    code_min: int = -32768
    code_max: int = 32767

    def __post_init__(self):
        if not self.i_lsb > 0:
            raise ValidationError(f"i_lsb must be > 0, got {self.i_lsb}")
        if not self.c_dac > 0:
            raise ValidationError(f"c_dac must be > 0, got {self.c_dac}")
        if not self.code_min <= 0 <= self.code_max:
            raise ValidationError(f"need code_min <= 0 <= code_max, got {self.code_min}, {self.code_max}")

    def k_dac(self, f_dac: float) -> float:
        """Volts per code per update at update rate f_dac."""
        return (self.i_lsb / self.c_dac) / f_dac

    def slew_per_code(self) -> float:
        """Volts per second per code while integrating."""
        return self.i_lsb / self.c_dac


@dataclass(frozen=True, eq=False)
class DacProgram:
    """
    Integer QDAC codes for one chirp.

    Attributes:
        v_start: Switched reset voltage V[0]
        codes: n_dac integer codes D[1..N]
        k_dac: Volts per code per update
        v_target: The n_dac+1 voltages the codes were solved for
    """

    v_start: float
    codes: np.ndarray
    k_dac: float
    v_target: Optional[np.ndarray] = None

    def __post_init__(self):
        codes = np.array(self.codes, dtype=np.int64)
        if codes.ndim != 1 or codes.size == 0:
            raise ValidationError("codes must be a non-empty 1-D sequence")
        if not self.k_dac > 0:
            raise ValidationError(f"k_dac must be > 0, got {self.k_dac}")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        if self.v_target is not None:
            target = np.array(self.v_target, dtype=float)
            if target.shape != (codes.size + 1,):
                raise ValidationError(f"v_target needs {codes.size + 1} entries, got {target.size}")
            target.setflags(write=False)
            object.__setattr__(self, "v_target", target)

    @property
    def n_dac(self) -> int:
        return self.codes.size

    @property
    def v_end(self) -> float:
        return self.v_start + self.k_dac * float(np.sum(self.codes))

    @property
    def residuals(self) -> np.ndarray:
        """Per-step voltage quantization error (target step minus realized step)."""
        if self.v_target is None:
            raise ValidationError("program has no target voltages")
        return np.diff(self.v_target) - self.k_dac * self.codes

    @property
    def accumulated_error(self) -> float:
        """Largest |reconstruction - target| over the program."""
        if self.v_target is None:
            raise ValidationError("program has no target voltages")
        return float(np.max(np.abs(reconstruct_voltages(self) - self.v_target)))


def generate_vpd(bm: BackwardModel, plan: ChirpPlan) -> np.ndarray:
    """
    Predistorted voltages V_PD[k] = V(f0 + k*B/N) for k = 0..N.

    Args:
        bm: Backward model
        plan: Chirp plan (b_des may be None: resolved against bm)

    Returns:
        n_dac+1 voltages; V_PD[0] is the reset voltage
    """
    plan = plan.resolved(bm) if plan.b_des is None or plan.f0_abs is None else plan
    n = plan.n_dac
    start_ghz = plan.start_fraction * bm.f_span
    offsets = start_ghz + np.arange(n + 1) * (plan.b_des / 1e9) / n
    v_pd = eval_backward(bm, bm.f_offset + offsets)
    if plan.start_fraction == 0.0:
        v_pd[0] = bm.v_offset
    logger.debug("V_PD: %d points from %.6g to %.6g V", n + 1, v_pd[0], v_pd[-1])
    return v_pd


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def solve_dac_codes(
    v_pd: Sequence[float],
    q: QdacConfig,
    plan: ChirpPlan,
    v_range: Optional[Tuple[float, float]] = None,
) -> DacProgram:
    """
    Integer codes reproducing v_pd: D[k] = round((V_PD[k] - V_PD[k-1]) / k_dac).

    Args:
        v_pd: n_dac+1 target voltages
        q: QDAC constants
        plan: Chirp plan (supplies f_dac and n_dac)
        v_range: VCO tuning range; the reconstructed endpoint must stay inside it

    Returns:
        DacProgram

    Raises:
        SaturationError: A code falls outside [code_min, code_max]
        ValidationError: Length mismatch or endpoint out of range
    """
    target = np.asarray(v_pd, dtype=float)
    if target.shape != (plan.n_dac + 1,):
        raise ValidationError(f"expected {plan.n_dac + 1} voltages for N_DAC={plan.n_dac}, got {target.size}")
    k_dac = q.k_dac(plan.f_dac)
    codes = _round_half_away(np.diff(target) / k_dac)

    outside = np.flatnonzero((codes < q.code_min) | (codes > q.code_max))
    if outside.size:
        step = int(outside[0]) + 1
        raise SaturationError(
            f"step {step} needs code {int(codes[outside[0]])}, outside [{q.code_min}, {q.code_max}]",
            step=step,
        )

    program = DacProgram(float(target[0]), codes.astype(np.int64), k_dac, target)
    if v_range is not None:
        lo, hi = v_range
        if not lo - RANGE_TOLERANCE_V <= program.v_end <= hi + RANGE_TOLERANCE_V:
            raise ValidationError(f"program ends at {program.v_end:.6g} V, outside [{lo}, {hi}] V")
    logger.debug(
        "solved %d codes, k_dac %.4g V, max |code| %d",
        codes.size,
        k_dac,
        int(np.max(np.abs(codes))),
    )
    return program


def reconstruct_voltages(prog: DacProgram) -> np.ndarray:
    """Voltages at each update instant, V[0] + k_dac * L1 @ D."""
    return prog.v_start + prog.k_dac * np.concatenate(([0.0], np.cumsum(prog.codes)))
