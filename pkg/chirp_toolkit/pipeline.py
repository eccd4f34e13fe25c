#!/usr/bin/env python3
"""
Chart-and-chirp pipeline.

Stages run in order: chart -> learn -> predistort -> synth -> simulate ->
analyze. Chart and learn run once; predistort and synth run per plan;
simulate and analyze run per (plan, scenario) case. Plans and cases are
spread over a thread pool, each writing only under its own directory.

Any stage failure is re-raised as StageError after the manifest has been
written with status FAILED; files already written are kept.

Usage:
    from chirp_toolkit.config import load_config
    from chirp_toolkit.pipeline import run_pipeline

    result = run_pipeline(load_config("configs/reference_reproduction.yaml"), jobs=4)
    print(result.report["plans"]["5us_80mhz"]["rms_fm_error_hz"])
"""

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
import yaml

from chirp_toolkit.backward_learner import (
    REFERENCE_BACKWARD_COEFFS,
    BackwardModel,
    learn_backward,
    round_trip_error,
)
from chirp_toolkit.config import CheckSpec, PlanConfig, RunConfig
from chirp_toolkit.files import (
    file_digest,
    load_backward,
    load_chart,
    load_program,
    load_series,
    save_backward,
    save_chart,
    save_json,
    save_model,
    save_program,
    save_rows,
    save_series,
    save_series_binary,
    save_spectrum,
)
from chirp_toolkit.freq_counter import ChartRecord, chart_tuning_curve
from chirp_toolkit.phase_noise import band_levels, periodogram, spec_for_series, synth_phase_noise
from chirp_toolkit.predistortion import ChirpPlan, DacProgram, generate_vpd, solve_dac_codes
from chirp_toolkit.radar_sim import (
    IfResult,
    RadarScenario,
    delay_samples,
    overlap_window,
    simulate_if,
    skirt_null_frequencies,
)
from chirp_toolkit.schemas import RegimeError, StageError, ValidationError
from chirp_toolkit.series import SpectrumEstimate, TimeSeries
from chirp_toolkit.spectral_analysis import (
    FmErrorDecomposition,
    decompose_fm_error,
    fm_error,
    peak_to_floor,
    phase_error_series,
    predict_spurs,
    rms_fm_error,
    skirt_minima,
    sndr,
    spur_levels,
    windowed_dft,
)
from chirp_toolkit.vco_model import dft_range_resolution, model_wavelength, radar_metrics
from chirp_toolkit.waveform_synth import synth_chirp, synth_tuning_voltage

logger = logging.getLogger(__name__)

STAGES = ("chart", "learn", "predistort", "synth", "simulate", "analyze")

REPORT_SCHEMA_VERSION = 1

# Offsets for the deterministic phase-error readout
PHASE_ERROR_OFFSET_HZ = 1e6
PHASE_ERROR_SLOPE_BAND_HZ = (0.5e6, 5e6)
PHASE_ERROR_BANDS_PER_DECADE = 3

# Skirt-null search span and smoothing, as fractions of 1/tau
SKIRT_SEARCH_FRACTION = 0.25
SKIRT_SMOOTH_FRACTION = 1.0 / 15.0

PLAN_METRICS = {"rms_fm_error_hz", "phase_error_at_1mhz_dbc", "phase_error_slope_db_per_decade"}
CASE_METRICS = {"sndr_db", "peak_to_floor_db", "skirt_null_error_hz", "ghost_level_db"}

T = TypeVar("T")


# =============================================================================
# Run state
# =============================================================================


class ArtifactStore:
    """Tracks every file a run writes, relative to the output directory."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._files: set = set()
        self._lock = threading.Lock()

    def path(self, *parts: str) -> Path:
        return self.root.joinpath(*parts)

    def record(self, written) -> None:
        paths = written if isinstance(written, (list, tuple)) else [written]
        with self._lock:
            for p in paths:
                self._files.add(Path(p).resolve().relative_to(self.root.resolve()).as_posix())

    def files(self) -> List[str]:
        with self._lock:
            return sorted(self._files)

    def write_manifest(
        self,
        parameters: Dict[str, Any],
        stages: Sequence[str],
        failed_stage: Optional[str] = None,
        error: Optional[str] = None,
    ) -> Path:
        entries = []
        for rel in self.files():
            path = self.root / rel
            if path.exists():
                entries.append({"path": rel, "sha256": file_digest(path), "bytes": path.stat().st_size})
        manifest = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "status": "FAILED" if failed_stage else "ok",
            "failed_stage": failed_stage,
            "error": error,
            "stages": list(stages),
            "parameters": parameters,
            "files": entries,
        }
        path = self.root / "manifest.yaml"
        with open(path, "w") as f:
            yaml.safe_dump(manifest, f, sort_keys=False, default_flow_style=False)
        return path


@dataclass
class PlanState:
    """Per-plan artifacts; plan is resolved against the backward model."""

    config: PlanConfig
    plan: Optional[ChirpPlan] = None
    program: Optional[DacProgram] = None
    chirp: Optional[TimeSeries] = None
    decomposition: Optional[FmErrorDecomposition] = None
    metrics: Dict[str, Any] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.config.name

    @property
    def directory(self) -> Tuple[str, ...]:
        return ("plans", self.name)


@dataclass
class CaseState:
    plan: PlanState
    scenario: RadarScenario
    index: Tuple[int, int]
    if_result: Optional[IfResult] = None
    metrics: Dict[str, Any] = field(default_factory=dict)

    @property
    def key(self) -> str:
        return f"{self.plan.name}__{self.scenario.name}"

    @property
    def directory(self) -> Tuple[str, ...]:
        return ("cases", self.key)


@dataclass
class PipelineResult:
    """Outcome of a completed run."""

    out_dir: Path
    report: Dict[str, Any]
    manifest_path: Path
    checks: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def checks_passed(self) -> bool:
        return all(c["passed"] for c in self.checks)


@contextmanager
def _stage(name: str) -> Iterator[None]:
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        raise StageError(name, e) from e


def _map(fn: Callable[[T], Any], items: Sequence[T], jobs: int) -> List[Any]:
    """
    Run fn over items on a thread pool, results in input order.

    Every item runs to completion before the first failure (in input order)
    is re-raised, so sibling outputs are still written.
    """
    if jobs <= 1 or len(items) <= 1:
        results, first_error = [], None
        for item in items:
            try:
                results.append(fn(item))
            except Exception as e:
                results.append(None)
                first_error = first_error or e
        if first_error is not None:
            raise first_error
        return results
    with ThreadPoolExecutor(max_workers=jobs) as executor:
        futures = [executor.submit(fn, item) for item in items]
        errors = [f.exception() for f in futures]
    for error in errors:
        if error is not None:
            raise error
    return [f.result() for f in futures]


def _seed_for(seed: Optional[int], *path: int) -> Optional[int]:
    """Independent child seed for a case, stable regardless of execution order."""
    if seed is None:
        return None
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


def _finite(value: Optional[float]) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


# =============================================================================
# Stages
# =============================================================================


def stage_chart(cfg: RunConfig, store: ArtifactStore) -> ChartRecord:
    with _stage("chart"):
        chart = chart_tuning_curve(cfg.vco, cfg.learn.n_chart, cfg.counter, ideal=cfg.learn.ideal)
        store.record(save_model(cfg.vco, store.path("vco_model.yaml")))
        store.record(save_chart(chart, store.path("chart.csv")))
        logger.info("chart: %d points over %.4f GHz", len(chart.voltages), chart.span_ghz)
        return chart


def stage_learn(cfg: RunConfig, chart: ChartRecord, store: ArtifactStore) -> Tuple[BackwardModel, Dict[str, Any]]:
    with _stage("learn"):
        fit = learn_backward(chart, cfg.learn.order)
        store.record(save_backward(fit.model, store.path("backward_model.yaml")))
        grid = np.linspace(chart.f_hat[1], chart.f_hat[-1], 201)
        metrics = {
            "order": fit.model.order,
            "n_chart": chart.n_chart,
            "charted_span_hz": chart.span_ghz * 1e9,
            "condition_number": _finite(fit.condition),
            "max_scaled_orthogonality": _finite(fit.orthogonality),
            "residual_rms_v": float(np.sqrt(np.mean(np.square(fit.residuals)))),
            "round_trip_error_hz": _finite(round_trip_error(fit.model, cfg.vco, grid)),
            "coefficients": [float(c) for c in fit.model.coefficients],
        }
        if cfg.learn.order == 5:
            metrics["reference_coefficients"] = {k: list(v) for k, v in REFERENCE_BACKWARD_COEFFS.items()}
        logger.info("learn: P=%d, round trip %.3g Hz", fit.model.order, metrics["round_trip_error_hz"] or float("nan"))
        return fit.model, metrics


def stage_predistort(cfg: RunConfig, bm: BackwardModel, state: PlanState, store: ArtifactStore) -> None:
    with _stage("predistort"):
        state.plan = state.config.plan.resolved(bm)
        v_pd = generate_vpd(bm, state.plan)
        state.program = solve_dac_codes(v_pd, cfg.qdac, state.plan, v_range=(cfg.vco.v_min, cfg.vco.v_max))
        store.record(save_program(state.program, store.path(*state.directory, "program.csv")))
        state.metrics.update(
            {
                "n_dac": state.plan.n_dac,
                "b_des_hz": state.plan.b_des,
                "f0_hz": state.plan.f0_abs,
                "k_dac_v": state.program.k_dac,
                "max_abs_code": int(np.max(np.abs(state.program.codes))),
                "accumulated_error_v": state.program.accumulated_error,
            }
        )
        logger.info("predistort %s: N_DAC=%d", state.name, state.plan.n_dac)


def stage_synth(cfg: RunConfig, state: PlanState, store: ArtifactStore) -> None:
    with _stage("synth"):
        voltage = synth_tuning_voltage(state.program, state.plan, cfg.dt, state.config.interpolation)
        # learned maps may undershoot v_min by a fraction of a chart step
        state.chirp = synth_chirp(voltage, cfg.vco, extrapolate=True)
        decimate = cfg.analysis.csv_decimate
        base = state.directory
        store.record(save_series_binary(voltage, store.path(*base, "tuning_voltage.npy")))
        store.record(save_series(voltage, store.path(*base, "tuning_voltage.csv"), decimate))
        store.record(save_series_binary(state.chirp, store.path(*base, "chirp.npy")))
        store.record(save_series(state.chirp, store.path(*base, "chirp.csv"), decimate))
        logger.info("synth %s: %d samples (%s)", state.name, len(state.chirp), state.config.interpolation)


def stage_simulate(cfg: RunConfig, case: CaseState, store: ArtifactStore) -> None:
    with _stage("simulate"):
        chirp = case.plan.chirp
        pn = None
        if cfg.phase_noise_shape is not None:
            spec = spec_for_series(cfg.phase_noise_shape, len(chirp), chirp.dt)
            pn = synth_phase_noise(spec, seed=_seed_for(cfg.seed, *case.index)).slice(0, len(chirp))
            store.record(save_series_binary(pn, store.path(*case.directory, "phase_noise.npy")))
        case.if_result = simulate_if(chirp, pn, case.scenario)
        store.record(save_series_binary(case.if_result.series, store.path(*case.directory, "if.npy")))
        logger.info("simulate %s: %d targets", case.key, len(case.scenario.all_targets))


def analyze_plan(cfg: RunConfig, state: PlanState, store: ArtifactStore) -> None:
    """FM error, its decomposition and the deterministic phase error of one chirp."""
    with _stage("analyze"):
        chirp = state.chirp
        start = int(math.floor(cfg.analysis.fm_fit_start_fraction * len(chirp)))
        err = fm_error(chirp, (start, len(chirp)))
        base = state.directory
        store.record(save_series(err.error, store.path(*base, "fm_error.csv"), cfg.analysis.csv_decimate))

        err_spectrum = windowed_dft(err.error, window=cfg.analysis.window)
        store.record(save_spectrum(err_spectrum, store.path(*base, "fm_error_spectrum.csv")))
        try:
            state.decomposition = decompose_fm_error(err_spectrum, state.plan.f_dac, cfg.analysis.n_harmonics)
        except ValidationError as e:
            logger.warning("%s: FM error not decomposed: %s", state.name, e)

        phase = periodogram(phase_error_series(err.error))
        store.record(save_spectrum(phase, store.path(*base, "phase_error_spectrum.csv")))
        level, slope = _phase_error_readout(phase)

        state.metrics.update(
            {
                "rms_fm_error_hz": rms_fm_error(err.error),
                "fit_slope_hz_per_s": err.slope,
                "phase_error_at_1mhz_dbc": level,
                "phase_error_slope_db_per_decade": slope,
                "decomposition": state.decomposition.to_dict() if state.decomposition else None,
            }
        )
        if state.plan.t_quiet > 0:
            metrics = radar_metrics(state.plan.b_des, state.plan.t_chirp, state.plan.t_quiet, model_wavelength(cfg.vco))
            state.metrics.update(
                {
                    "slope_hz_per_s": metrics.slope,
                    "delta_r_min_m": metrics.delta_r_min,
                    "v_max_unambiguous_m_s": metrics.v_max_unambiguous,
                }
            )
        logger.info("analyze %s: RMS FM error %.4g kHz", state.name, state.metrics["rms_fm_error_hz"] / 1e3)


def _phase_error_readout(spectrum: SpectrumEstimate) -> Tuple[Optional[float], Optional[float]]:
    """
    Level at 1 MHz (dBc/Hz) and slope over 0.5-5 MHz (dB/decade).

    The slope is fitted to band averages on a log grid, not to raw bins.
    """
    if spectrum.f_nyquist < PHASE_ERROR_SLOPE_BAND_HZ[1] or spectrum.df > PHASE_ERROR_SLOPE_BAND_HZ[0]:
        return None, None
    level = float(spectrum.bins[spectrum.index_of(PHASE_ERROR_OFFSET_HZ)])
    lo, hi = PHASE_ERROR_SLOPE_BAND_HZ
    n_bands = max(1, int(round(PHASE_ERROR_BANDS_PER_DECADE * np.log10(hi / lo))))
    levels = band_levels(spectrum, np.geomspace(lo, hi, n_bands + 1))
    if len(levels) < 2:
        return level, None
    centres, values = zip(*levels)
    slope = float(np.polyfit(np.log10(centres), values, 1)[0])
    return level, slope


def analyze_case(cfg: RunConfig, case: CaseState, store: ArtifactStore) -> None:
    """IF spectrum, SNDR, predicted and measured ghost spurs of one case."""
    with _stage("analyze"):
        plan = case.plan.plan
        series = case.if_result.series
        start, length = overlap_window(plan, case.scenario, cfg.analysis.dft_start_fraction, n_samples=len(series))
        spectrum = windowed_dft(series, n_points=length, start_index=start, window=cfg.analysis.window)
        store.record(save_spectrum(spectrum, store.path(*case.directory, "if_spectrum.csv")))

        target = case.scenario.targets[0]
        f_target = plan.slope * target.tau
        f_max = max(plan.slope * t.tau for t in case.scenario.targets)
        metrics: Dict[str, Any] = {
            "target_range_m": target.range_m,
            "f_target_hz": f_target,
            "dft_start": start,
            "dft_points": length,
            "rbw_hz": spectrum.df,
            "range_bin_m": dft_range_resolution(length * series.dt, plan.t_chirp, plan.b_des),
            "ghost_free": 2.0 * f_max < plan.f_dac,
        }

        analysis = cfg.analysis
        try:
            metrics["sndr_db"] = sndr(spectrum, f_target, analysis.exclusion_bins, f_dac=plan.f_dac)
            metrics["peak_to_floor_db"] = peak_to_floor(
                spectrum, f_target, analysis.exclusion_bins, analysis.reference_bins, f_dac=plan.f_dac
            )
        except ValidationError as e:
            logger.warning("%s: SNDR skipped: %s", case.key, e)
            metrics["sndr_db"] = None
            metrics["peak_to_floor_db"] = None

        metrics.update(_skirt_nulls(spectrum, f_target, delay_samples(target.range_m, series.dt) * series.dt,
                                    analysis.skirt_nulls))

        measured = spur_levels(spectrum, f_target, plan.f_dac, cfg.analysis.spur_orders)
        store.record(
            save_rows(measured, store.path(*case.directory, "spurs_measured.csv"),
                      ["order", "predicted_frequency_hz", "frequency_hz", "level_db"])
        )
        first = [row["level_db"] for row in measured if row["order"] == 1]
        metrics["ghost_level_db"] = max(first) if first else None
        metrics["spurs_measured"] = measured

        metrics["spurs_predicted"] = None
        if case.plan.decomposition is not None:
            try:
                table = predict_spurs(
                    case.plan.decomposition, target.tau, f_target, plan.f_dac, cfg.analysis.spur_orders, f_max=f_max
                )
                rows = table.to_rows()
                store.record(
                    save_rows(rows, store.path(*case.directory, "spurs_predicted.csv"),
                              ["order", "source", "frequency_hz", "level_db"])
                )
                metrics["spurs_predicted"] = rows
            except RegimeError as e:
                logger.warning("%s: %s", case.key, e)

        case.metrics = metrics
        logger.info(
            "analyze %s: SNDR %s dB, peak to floor %s dB",
            case.key,
            _fmt(metrics["sndr_db"]),
            _fmt(metrics["peak_to_floor_db"]),
        )


def _skirt_nulls(spectrum: SpectrumEstimate, f_target: float, tau: float, count: int) -> Dict[str, Any]:
    """Measured and predicted range-correlation minima above the target."""
    if count < 1:
        return {"skirt_nulls_hz": [], "skirt_nulls_predicted_hz": [], "skirt_null_error_hz": None}
    predicted = skirt_null_frequencies(f_target, tau, count)
    measured = skirt_minima(spectrum, predicted, SKIRT_SEARCH_FRACTION / tau, SKIRT_SMOOTH_FRACTION / tau)
    predicted = [float(f) for f in predicted[:len(measured)]]
    error = max((abs(m - p) for m, p in zip(measured, predicted)), default=None)
    return {"skirt_nulls_hz": measured, "skirt_nulls_predicted_hz": predicted, "skirt_null_error_hz": error}


def _fmt(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.2f}"


# =============================================================================
# Resume helpers (partial reruns from an earlier run's files)
# =============================================================================


def _load_plan_artifacts(source: Path, state: PlanState, bm: BackwardModel, upto: str) -> None:
    state.plan = state.config.plan.resolved(bm)
    base = source.joinpath(*state.directory)
    if STAGES.index(upto) >= STAGES.index("predistort"):
        state.program = load_program(base / "program.csv")
    if STAGES.index(upto) >= STAGES.index("synth"):
        state.chirp = load_series(base / "chirp.npy")


def _load_case_artifacts(source: Path, case: CaseState) -> None:
    series = load_series(source.joinpath(*case.directory, "if.npy"))
    case.if_result = IfResult(series, case.scenario.max_delay_samples)


# =============================================================================
# Checks
# =============================================================================


def evaluate_checks(checks: Sequence[CheckSpec], report: Dict[str, Any]) -> List[Dict[str, Any]]:
    """
    Compare report metrics against expected values.

    A check applies to every plan (and case) matching its optional filters;
    a check with no matching value fails.
    """
    results = []
    for check in checks:
        values: List[Tuple[str, Optional[float]]] = []
        if check.metric in PLAN_METRICS:
            for name, metrics in report.get("plans", {}).items():
                if check.plan in (None, name):
                    values.append((name, metrics.get(check.metric)))
        else:
            for key, metrics in report.get("cases", {}).items():
                if check.plan not in (None, metrics["plan"]) or check.scenario not in (None, metrics["scenario"]):
                    continue
                values.append((key, metrics.get(check.metric)))
        if not values:
            values = [("(no match)", None)]
        for where, value in values:
            results.append(
                {
                    "metric": check.metric,
                    "where": where,
                    "value": value,
                    "expected": check.expected,
                    "tolerance": check.tolerance(),
                    "passed": check.passes(value),
                }
            )
    return results


# =============================================================================
# Driver
# =============================================================================


def run_pipeline(
    cfg: RunConfig,
    stop_after: str = "analyze",
    start_at: str = "chart",
    source_dir: Optional[Path] = None,
    jobs: int = 1,
) -> PipelineResult:
    """
    Run stages start_at..stop_after, writing artifacts under cfg.output_dir.

    Args:
        cfg: Run configuration
        stop_after: Last stage to run
        start_at: First stage to run; earlier stages are loaded from source_dir
        source_dir: Earlier run directory (defaults to cfg.output_dir)
        jobs: Worker threads for plans and cases

    Returns:
        PipelineResult with the metrics report

    Raises:
        StageError: A stage failed (manifest written with status FAILED)
    """
    if stop_after not in STAGES or start_at not in STAGES:
        raise ValidationError(f"stage must be one of {', '.join(STAGES)}")
    first, last = STAGES.index(start_at), STAGES.index(stop_after)
    if first > last:
        raise ValidationError(f"start stage {start_at} comes after {stop_after}")
    if cfg.phase_noise_shape is not None and cfg.seed is None:
        raise ValidationError("seed: mandatory when phase noise is enabled")

    store = ArtifactStore(cfg.output_dir)
    source = Path(source_dir) if source_dir is not None else store.root
    ran = list(STAGES[first:last + 1])
    parameters = dict(cfg.raw)
    parameters["stages"] = ran
    report: Dict[str, Any] = {"schema_version": REPORT_SCHEMA_VERSION, "seed": cfg.seed, "phase_noise": cfg.phase_noise}

    def runs(stage: str) -> bool:
        return first <= STAGES.index(stage) <= last

    plans = [PlanState(p) for p in cfg.plans]
    cases = [
        CaseState(plan, scenario, (i, j))
        for i, plan in enumerate(plans)
        for j, scenario in enumerate(cfg.scenarios)
    ]

    try:
        chart: Optional[ChartRecord] = None
        bm: Optional[BackwardModel] = None
        if runs("chart"):
            chart = stage_chart(cfg, store)
        elif runs("learn"):
            with _stage("learn"):
                chart = load_chart(source / "chart.csv")

        if runs("learn"):
            bm, report["learn"] = stage_learn(cfg, chart, store)
        elif last >= STAGES.index("predistort"):
            with _stage(start_at):
                bm = load_backward(source / "backward_model.yaml")
                for state in plans:
                    _load_plan_artifacts(source, state, bm, STAGES[max(first - 1, 0)])

        if runs("predistort"):
            _map(lambda s: stage_predistort(cfg, bm, s, store), plans, jobs)
        if runs("synth"):
            _map(lambda s: stage_synth(cfg, s, store), plans, jobs)
        if runs("simulate"):
            _map(lambda c: stage_simulate(cfg, c, store), cases, jobs)
        elif runs("analyze"):
            with _stage("analyze"):
                for case in cases:
                    _load_case_artifacts(source, case)
        if runs("analyze"):
            _map(lambda s: analyze_plan(cfg, s, store), plans, jobs)
            _map(lambda c: analyze_case(cfg, c, store), cases, jobs)

        if last >= STAGES.index("predistort"):
            report["plans"] = {s.name: s.metrics for s in plans if s.metrics}
        if runs("analyze"):
            report["cases"] = {
                c.key: {"plan": c.plan.name, "scenario": c.scenario.name, **c.metrics} for c in cases
            }
        checks = evaluate_checks(cfg.checks, report) if runs("analyze") and cfg.checks else []
        if checks:
            report["checks"] = checks
        store.record(save_json(report, store.path("report.json")))
    except StageError as e:
        logger.error("stage %s failed: %s", e.stage, e.cause)
        store.write_manifest(parameters, ran, failed_stage=e.stage, error=str(e.cause))
        raise

    manifest = store.write_manifest(parameters, ran)
    return PipelineResult(store.root, report, manifest, checks)
