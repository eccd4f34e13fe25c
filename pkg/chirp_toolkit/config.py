"""
Run configuration.

The YAML file uses unit-suffixed keys (t_chirp_us, f_dac_mhz, dt_ps, ...).
load_config() validates the raw mapping, converts every value to SI once
and returns a RunConfig; nothing downstream sees the suffixed units.

Precedence: CLI overrides (seed, output_dir) > config file > defaults.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from chirp_toolkit.freq_counter import CounterConfig
from chirp_toolkit.phase_noise import PhaseNoiseShape
from chirp_toolkit.predistortion import ChirpPlan, QdacConfig
from chirp_toolkit.presets import get_phase_noise_shape, get_scenario, scenario_from_dict
from chirp_toolkit.radar_sim import RadarScenario
from chirp_toolkit.schemas import ValidationError, validate_run_config
from chirp_toolkit.vco_model import DEFAULT_F_BASE_GHZ, TuningCurveModel, reference_vco_model

logger = logging.getLogger(__name__)

DEFAULT_DT_PS = 10.0
DEFAULT_OUTPUT_DIR = "chirp_runs"


@dataclass(frozen=True)
class LearnConfig:
    order: int = 5
    n_chart: int = 100
    ideal: bool = True


@dataclass(frozen=True)
class PlanConfig:
    """A chirp plan plus how its QDAC output is played back."""

    plan: ChirpPlan
    interpolation: str = "linear"

    @property
    def name(self) -> str:
        return self.plan.name


@dataclass(frozen=True)
class AnalysisConfig:
    """
    Spectral analysis settings.

    Attributes:
        window: DFT window for IF spectra (hann | rectangular)
        dft_start_fraction: Fraction of the TX/RX overlap skipped before the IF DFT
        fm_fit_start_fraction: Fraction of the chirp skipped before the FM-error fit
        exclusion_bins: Guard in bins around the SNDR main lobe
        reference_bins: Cells each side of the lobe read as the close-in floor
        skirt_nulls: Range-correlation skirt minima located above each target
        n_harmonics: f_DAC harmonics read from the FM-error spectrum
        spur_orders: Ghost orders predicted and measured
        csv_decimate: Keep every n-th sample in waveform CSVs (full series go to .npy)
    """

    window: str = "hann"
    dft_start_fraction: float = 0.0
    fm_fit_start_fraction: float = 0.0
    exclusion_bins: int = 5
    reference_bins: int = 10
    skirt_nulls: int = 3
    n_harmonics: int = 10
    spur_orders: int = 3
    csv_decimate: int = 100


@dataclass(frozen=True)
class CheckSpec:
    """Expected value of one metric, optionally restricted to a plan and/or scenario."""

    metric: str
    expected: float
    abs_tol: Optional[float] = None
    rel_tol: Optional[float] = None
    plan: Optional[str] = None
    scenario: Optional[str] = None

    def tolerance(self) -> float:
        if self.abs_tol is not None:
            return self.abs_tol
        return abs(self.expected) * (self.rel_tol or 0.0)

    def passes(self, value: Optional[float]) -> bool:
        return value is not None and abs(value - self.expected) <= self.tolerance()


@dataclass(frozen=True)
class RunConfig:
    """
    Fully resolved, SI-unit run configuration.

    Attributes:
        vco: Forward model standing in for the physical VCO
        counter: Counter settings (None with an ideal chart)
        learn: Chart and backward-fit settings
        qdac: QDAC actuator constants
        plans: Chirp plans
        phase_noise: Preset name (none disables phase noise)
        phase_noise_shape: Resolved profile, None when disabled
        scenarios: Radar scenarios (may be empty: chirp-only runs)
        analysis: Spectral analysis settings
        dt: Simulation step in seconds
        seed: Master seed (mandatory with phase noise or a non-ideal counter)
        output_dir: Where artifacts are written
        checks: Expected metric values for run --check
        raw: The parsed YAML mapping, recorded in the manifest
    """

    vco: TuningCurveModel
    counter: Optional[CounterConfig]
    learn: LearnConfig
    qdac: QdacConfig
    plans: Tuple[PlanConfig, ...]
    phase_noise: str = "none"
    phase_noise_shape: Optional[PhaseNoiseShape] = None
    scenarios: Tuple[RadarScenario, ...] = ()
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    dt: float = DEFAULT_DT_PS * 1e-12
    seed: Optional[int] = None
    output_dir: Path = Path(DEFAULT_OUTPUT_DIR)
    checks: Tuple[CheckSpec, ...] = ()
    raw: Dict[str, Any] = field(default_factory=dict)

    def plan(self, name: str) -> PlanConfig:
        for entry in self.plans:
            if entry.name == name:
                return entry
        raise ValidationError(f"no plan named {name}")

    def with_overrides(self, seed: Optional[int] = None, output_dir: Optional[Path] = None) -> "RunConfig":
        """Apply CLI overrides on top of the file values."""
        updates: Dict[str, Any] = {}
        raw = dict(self.raw)
        if seed is not None:
            updates["seed"] = seed
            raw["seed"] = seed
            if self.counter is not None:
                updates["counter"] = replace(self.counter, seed=seed)
        if output_dir is not None:
            updates["output_dir"] = Path(output_dir)
            raw["output_dir"] = str(output_dir)
        updates["raw"] = raw
        return replace(self, **updates)


def read_config_file(path: Path) -> Dict[str, Any]:
    """
    Parse a YAML configuration file.

    Raises:
        ValidationError: Unreadable file or invalid YAML
    """
    try:
        with open(path) as f:
            raw = yaml.safe_load(f)
    except OSError as e:
        raise ValidationError(f"cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ValidationError(f"{path}: invalid YAML: {e}") from e
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: top level must be a mapping")
    return raw


def _vco_from_raw(section: Dict[str, Any], base_dir: Path) -> TuningCurveModel:
    v_min = float(section.get("v_min_v", 0.0))
    v_max = float(section.get("v_max_v", 1.0))
    f_base = float(section.get("f_base_ghz", DEFAULT_F_BASE_GHZ))
    if "coeffs_ghz" in section:
        return TuningCurveModel(tuple(float(c) for c in section["coeffs_ghz"]), f_base, v_min, v_max)
    if "path" in section:
        from chirp_toolkit.files import load_model

        path = Path(section["path"])
        return load_model(path if path.is_absolute() else base_dir / path)
    preset = section.get("preset", "reference")
    if preset != "reference":
        raise ValidationError(f"vco.preset: unknown model '{preset}' (available: reference)")
    model = reference_vco_model(f_base)
    if (v_min, v_max) != (model.v_min, model.v_max):
        model = TuningCurveModel(model.coeffs, f_base, v_min, v_max)
    return model


def _plan_from_raw(entry: Dict[str, Any]) -> PlanConfig:
    b_des = entry.get("b_des_ghz")
    plan = ChirpPlan(
        t_chirp=float(entry["t_chirp_us"]) * 1e-6,
        f_dac=float(entry["f_dac_mhz"]) * 1e6,
        b_des=float(b_des) * 1e9 if b_des is not None else None,
        t_quiet=float(entry.get("t_quiet_us", 1.0)) * 1e-6,
        start_fraction=float(entry.get("start_fraction", 0.0)),
        allow_extrapolation=bool(entry.get("allow_extrapolation", False)),
        name=str(entry["name"]),
    )
    return PlanConfig(plan, str(entry.get("interpolation", "linear")))


def _scenario_from_raw(entry: Dict[str, Any], dt: float) -> RadarScenario:
    name = str(entry["name"])
    if "preset" in entry:
        return replace(get_scenario(entry["preset"], dt), name=name)
    return scenario_from_dict(entry, name, dt)


def _check_from_raw(entry: Dict[str, Any]) -> CheckSpec:
    return CheckSpec(
        metric=entry["metric"],
        expected=float(entry["expected"]),
        abs_tol=float(entry["abs_tol"]) if "abs_tol" in entry else None,
        rel_tol=float(entry["rel_tol"]) if "rel_tol" in entry else None,
        plan=entry.get("plan"),
        scenario=entry.get("scenario"),
    )


def build_config(raw: Dict[str, Any], base_dir: Path = Path(".")) -> RunConfig:
    """
    Convert a validated raw mapping to a RunConfig.

    Raises:
        ValidationError: Any validation issue (all issues listed in the message)
    """
    issues = validate_run_config(raw)
    if issues:
        raise ValidationError("invalid configuration:\n  " + "\n  ".join(issues))

    dt = float(raw.get("dt_ps", DEFAULT_DT_PS)) * 1e-12
    seed = raw.get("seed")

    counter_raw = raw.get("counter") or {"ideal": True}
    learn_raw = raw.get("learn") or {}
    ideal = bool(counter_raw.get("ideal", False)) or bool(learn_raw.get("ideal", False))
    counter = None
    if not ideal:
        counter = CounterConfig(
            f_meas=float(counter_raw["f_meas_khz"]) * 1e3,
            n_bits=int(counter_raw.get("n_bits", 24)),
            repeats=int(counter_raw.get("repeats", 16)),
            outlier_k=float(counter_raw.get("outlier_k", 3.0)),
            seed=int(seed) if seed is not None else 0,
        )

    qdac_raw = raw["qdac"]
    qdac = QdacConfig(
        i_lsb=float(qdac_raw["i_lsb_na"]) * 1e-9,
        c_dac=float(qdac_raw["c_dac_pf"]) * 1e-12,
        code_min=int(qdac_raw.get("code_min", -32768)),
        code_max=int(qdac_raw.get("code_max", 32767)),
    )

    pn_name = raw.get("phase_noise", "none")
    analysis_raw = raw.get("analysis") or {}

    return RunConfig(
        vco=_vco_from_raw(raw["vco"], base_dir),
        counter=counter,
        learn=LearnConfig(
            order=int(learn_raw.get("order", 5)),
            n_chart=int(learn_raw.get("n_chart", 100)),
            ideal=ideal,
        ),
        qdac=qdac,
        plans=tuple(_plan_from_raw(p) for p in raw["plans"]),
        phase_noise=pn_name,
        phase_noise_shape=get_phase_noise_shape(pn_name),
        scenarios=tuple(_scenario_from_raw(s, dt) for s in raw.get("scenarios") or []),
        analysis=AnalysisConfig(
            window=analysis_raw.get("window", "hann"),
            dft_start_fraction=float(analysis_raw.get("dft_start_fraction", 0.0)),
            fm_fit_start_fraction=float(analysis_raw.get("fm_fit_start_fraction", 0.0)),
            exclusion_bins=int(analysis_raw.get("exclusion_bins", 5)),
            reference_bins=int(analysis_raw.get("reference_bins", 10)),
            skirt_nulls=int(analysis_raw.get("skirt_nulls", 3)),
            n_harmonics=int(analysis_raw.get("n_harmonics", 10)),
            spur_orders=int(analysis_raw.get("spur_orders", 3)),
            csv_decimate=int(analysis_raw.get("csv_decimate", 100)),
        ),
        dt=dt,
        seed=int(seed) if seed is not None else None,
        output_dir=Path(raw.get("output_dir", DEFAULT_OUTPUT_DIR)),
        checks=tuple(_check_from_raw(c) for c in raw.get("checks") or []),
        raw=dict(raw),
    )


def load_config(
    path: Path,
    seed: Optional[int] = None,
    output_dir: Optional[Path] = None,
) -> RunConfig:
    """
    Load, validate and convert a run configuration.

    Args:
        path: YAML file
        seed: CLI seed override
        output_dir: CLI output-directory override

    Raises:
        ValidationError: Unreadable file or any violated rule
    """
    path = Path(path)
    raw = read_config_file(path)
    if seed is not None:
        raw = {**raw, "seed": seed}
    cfg = build_config(raw, base_dir=path.parent)
    logger.debug("loaded %s: %d plans, %d scenarios", path, len(cfg.plans), len(cfg.scenarios))
    return cfg.with_overrides(output_dir=output_dir)


def validate_config_file(path: Path) -> List[str]:
    """
    Every violated rule in a configuration file, with config-path prefixes.

    Also tries to build the config so preset names and model files are checked.
    """
    path = Path(path)
    raw = read_config_file(path)
    issues = validate_run_config(raw)
    if issues:
        return issues
    try:
        build_config(raw, base_dir=path.parent)
    except ValidationError as e:
        issues.append(str(e))
    return issues
