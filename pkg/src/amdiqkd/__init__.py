"""Simulation and finite-key analysis of asynchronous MDI-QKD with post-measurement pairing."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .config import ConfigError, ExperimentConfig, LinkConfig, NoiseConfig, PairingMode, SecurityConfig, SourceConfig, load_config, save_config
from .keyrate import DecoyEstimate, KeyRateReport, compute_key_rate, decoy_estimate, key_length, lambda_ec, pair_prob
from .pairing import KeyMapping, TallySheet
from .predict import expected_tallies, pairing_stats, pk_scaling, predicted_key_rate, q_tot

__all__ = [
    "ConfigError", "ExperimentConfig", "LinkConfig", "NoiseConfig", "PairingMode", "SecurityConfig",
    "SourceConfig", "load_config", "save_config", "DecoyEstimate", "KeyRateReport", "compute_key_rate",
    "decoy_estimate", "key_length", "lambda_ec", "pair_prob", "KeyMapping", "TallySheet",
    "expected_tallies", "pairing_stats", "pk_scaling", "predicted_key_rate", "q_tot", "__version__",
]
