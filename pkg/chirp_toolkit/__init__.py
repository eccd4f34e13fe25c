"""
VCO chart-and-chirp toolkit.

Charts a VCO tuning curve with a cycle counter, learns the inverse
(frequency to voltage) map, predistorts a QDAC program for a linear
chirp and simulates the resulting FMCW radar IF spectrum.

Usage:
    from chirp_toolkit.config import load_config
    from chirp_toolkit.pipeline import run_pipeline

    result = run_pipeline(load_config("configs/reference_reproduction.yaml"))
"""

from chirp_toolkit.schemas import (
    ChirpToolkitError,
    CounterOverflowError,
    DomainError,
    OutlierRejectionError,
    RankDeficiencyError,
    RegimeError,
    SaturationError,
    StageError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "ChirpToolkitError",
    "CounterOverflowError",
    "DomainError",
    "OutlierRejectionError",
    "RankDeficiencyError",
    "RegimeError",
    "SaturationError",
    "StageError",
    "ValidationError",
    "__version__",
]
