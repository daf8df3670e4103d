"""Localization of exceptional points with Gaussian-process surrogates."""

from .epsearch import EpSearchConfig, brute_force_ep, iterate
from .gpr import Hyperparameters, fit
from .grouping import extract_training_set, group_paths
from .models import Orbit, ParameterMap, kato2, random5, trace_orbit

__version__ = "0.1.0"

__all__ = [
    "EpSearchConfig",
    "Hyperparameters",
    "Orbit",
    "ParameterMap",
    "brute_force_ep",
    "extract_training_set",
    "fit",
    "group_paths",
    "iterate",
    "kato2",
    "random5",
    "trace_orbit",
]
