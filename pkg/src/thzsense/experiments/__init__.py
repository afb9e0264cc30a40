"""Experiment harness: configuration, schemes, simulators and sweeps."""
from .config import ConfigError, ExperimentConfig, config_from_dict, config_to_dict, load_config, with_seed
from .schemes import Scheme, SchemeKind, default_schemes, e2e_delay, reliability, spectral_efficiency
from .session import SessionLog, run_tracking_session
from .simulate import simulate_family, simulate_run
from .sweep import MetricsReport, bandwidth_sweep, reliability_sweep, reports_to_csv

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "MetricsReport",
    "Scheme",
    "SchemeKind",
    "SessionLog",
    "bandwidth_sweep",
    "config_from_dict",
    "config_to_dict",
    "default_schemes",
    "e2e_delay",
    "load_config",
    "reliability",
    "reliability_sweep",
    "reports_to_csv",
    "run_tracking_session",
    "simulate_family",
    "simulate_run",
    "spectral_efficiency",
    "with_seed",
]
