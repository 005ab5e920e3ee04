"""Stable-like jump processes, occupation measures and jump-configuration statistics."""
from .errors import ParameterError
from .fractal import NEG_INF, IndexSet, box_dimension, local_dim, spectrum_envelope
from .occupation import OccupationMeasure, occupation_measure
from .ppp import PointProcess, sample_ppp, trial_seed
from .process import BetaFunction, JumpPath, build_stable_like, build_subordinator, build_time_changed

__all__ = [
    "NEG_INF",
    "BetaFunction",
    "IndexSet",
    "JumpPath",
    "OccupationMeasure",
    "ParameterError",
    "PointProcess",
    "box_dimension",
    "build_stable_like",
    "build_subordinator",
    "build_time_changed",
    "local_dim",
    "occupation_measure",
    "sample_ppp",
    "spectrum_envelope",
    "trial_seed",
]
