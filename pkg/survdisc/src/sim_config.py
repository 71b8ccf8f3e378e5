"""
Global run configuration settings.
This file contains the centralized defaults (seed, threads, logging) and the
named simulation scenarios used across the codebase.
"""

import os

# Default settings
DEFAULT_SEED = int(os.getenv("SURVDISC_SEED") or 20240607)
DEFAULT_THREADS = os.cpu_count() or 1
DEFAULT_LOGGING = False

# Global configuration override
GLOBAL_CONFIG = {
    "seed": DEFAULT_SEED,
    "threads": DEFAULT_THREADS,
    "logging": DEFAULT_LOGGING,
}

# Data-generating law shared by every scenario: three N(0,1) covariates,
# Weibull baseline with theta=2, p=2, uniform censoring on (0,1), tau=1.
BASE_SCENARIO = {
    "schema_version": 1,
    "name": "base",
    "n_train": 250,
    "n_test": 250,
    "beta": [1.0, -1.0, 0.25],
    "theta": 2.0,
    "p_shape": 2.0,
    "censor_upper": 1.0,
    "tau": 1.0,
    "noise_dims": 0,
    "misalignment": "none",
    "misaligned_outcome": "base_law",
    "alpha": 0.0,
    "replicates": 200,
    "seed": DEFAULT_SEED,
}

SCENARIO_PRESETS = {
    "base": dict(BASE_SCENARIO),
    "overfit-20": {**BASE_SCENARIO, "name": "overfit-20", "noise_dims": 20},
    "overfit-100": {**BASE_SCENARIO, "name": "overfit-100", "noise_dims": 100},
    "misalign-mean": {
        **BASE_SCENARIO,
        "name": "misalign-mean",
        "misalignment": "mean_shift",
        "alpha": 0.1,
    },
    "misalign-var": {
        **BASE_SCENARIO,
        "name": "misalign-var",
        "misalignment": "var_inflate",
        "alpha": 0.1,
    },
}


def get_sim_config(seed=None, threads=None, logging=None):
    """
    Get run configuration.

    Args:
        seed (int): If provided, overrides the global seed
        threads (int): If provided, overrides the global worker count
        logging (bool): If provided, overrides the global per-run logging switch

    Returns:
        dict: Run configuration dictionary with all settings
    """
    config = GLOBAL_CONFIG.copy()

    if seed is not None:
        config["seed"] = seed
    if threads is not None:
        config["threads"] = threads
    if logging is not None:
        config["logging"] = logging

    return config


def get_scenario_preset(name):
    """Returns a fresh copy of a named scenario dictionary."""
    if name not in SCENARIO_PRESETS:
        raise ValueError(f"Unknown scenario preset: {name}. Valid presets are: {list(SCENARIO_PRESETS.keys())}")
    preset = dict(SCENARIO_PRESETS[name])
    preset["beta"] = list(preset["beta"])
    return preset
