"""
Named phase-noise profiles and radar scenarios.

Presets are read from a YAML registry so new profiles can be added
without code changes.
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from chirp_toolkit.phase_noise import PhaseNoiseShape
from chirp_toolkit.radar_sim import RadarScenario, Target
from chirp_toolkit.schemas import ValidationError

logger = logging.getLogger(__name__)

PRESETS_ENV = "CHIRP_TOOLKIT_PRESETS"

# Used if no registry file can be read
_DEFAULT_PRESETS: Dict[str, Any] = {
    "phase_noise": {
        "none": {},
        "open_loop": {"kind": "open_loop", "anchor_df_mhz": 1.0, "anchor_level_dbc": -110.0},
    },
    "scenarios": {
        "single_23m": {"targets": [{"range_m": 23.0, "amplitude": 1.0}]},
    },
}

# Cached registry
_LOADED_PRESETS: Optional[Dict[str, Any]] = None


def _load_presets() -> Dict[str, Any]:
    """
    Load the preset registry.

    Registry locations (in order of precedence):
    1. $CHIRP_TOOLKIT_PRESETS (if set)
    2. chirp_toolkit/presets.yaml (next to this file)

    Returns:
        Dict with 'phase_noise' and 'scenarios' sections
    """
    global _LOADED_PRESETS

    if _LOADED_PRESETS is not None:
        return _LOADED_PRESETS

    config_path = None

    env_path = os.environ.get(PRESETS_ENV)
    if env_path:
        config_path = Path(env_path)
        if not config_path.exists():
            logger.warning("%s not found: %s", PRESETS_ENV, config_path)
            config_path = None

    if config_path is None:
        default_path = Path(__file__).parent / "presets.yaml"
        if default_path.exists():
            config_path = default_path

    if config_path:
        try:
            with open(config_path) as f:
                data = yaml.safe_load(f) or {}
            _LOADED_PRESETS = {
                "phase_noise": dict(data.get("phase_noise") or {}),
                "scenarios": dict(data.get("scenarios") or {}),
            }
            return _LOADED_PRESETS
        except (OSError, yaml.YAMLError) as e:
            logger.warning("failed to load presets from %s: %s", config_path, e)

    _LOADED_PRESETS = {k: dict(v) for k, v in _DEFAULT_PRESETS.items()}
    return _LOADED_PRESETS


def reload_presets() -> None:
    """Force a reload of the registry (useful for testing)."""
    global _LOADED_PRESETS
    _LOADED_PRESETS = None


def list_phase_noise_presets() -> List[str]:
    return list(_load_presets()["phase_noise"].keys())


def list_scenario_presets() -> List[str]:
    return list(_load_presets()["scenarios"].keys())


def shape_from_dict(entry: Dict[str, Any]) -> PhaseNoiseShape:
    """Build a PhaseNoiseShape from registry/config keys (MHz, dBc/Hz)."""
    kind = entry.get("kind", "open_loop")
    bw = entry.get("bw_mhz")
    return PhaseNoiseShape(
        kind=kind,
        anchor_df=float(entry.get("anchor_df_mhz", 1.0)) * 1e6,
        anchor_level=float(entry.get("anchor_level_dbc", -110.0)),
        bw=float(bw) * 1e6 if bw is not None else None,
        floor=entry.get("floor_dbc"),
        table=tuple((float(df) * 1e6, float(level)) for df, level in entry.get("table", [])),
    )


def get_phase_noise_shape(name: str) -> Optional[PhaseNoiseShape]:
    """
    Look up a phase-noise preset.

    Returns:
        The shape, or None for a preset without a kind (phase noise disabled)

    Raises:
        ValidationError: Unknown preset
    """
    presets = _load_presets()["phase_noise"]
    if name not in presets:
        raise ValidationError(f"unknown phase-noise preset: {name}. Available: {', '.join(presets)}")
    entry = presets[name] or {}
    if "kind" not in entry:
        return None
    return shape_from_dict(entry)


def scenario_from_dict(entry: Dict[str, Any], name: str, dt: float) -> RadarScenario:
    """Build a RadarScenario from registry/config keys."""
    targets = tuple(Target(float(t["range_m"]), float(t.get("amplitude", 1.0))) for t in entry.get("targets", []))
    si = entry.get("self_interference")
    self_interference = Target(float(si["range_m"]), float(si.get("amplitude", 1.0))) if si else None
    return RadarScenario(targets=targets, self_interference=self_interference, dt=dt, name=name)


def get_scenario(name: str, dt: float) -> RadarScenario:
    """
    Look up a scenario preset.

    Raises:
        ValidationError: Unknown preset
    """
    presets = _load_presets()["scenarios"]
    if name not in presets:
        raise ValidationError(f"unknown scenario preset: {name}. Available: {', '.join(presets)}")
    return scenario_from_dict(presets[name], name, dt)
