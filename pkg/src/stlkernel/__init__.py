"""Similarity kernel on Signal Temporal Logic formulae and kernel regression
of robustness, expected robustness and satisfaction probability."""

from .stl_ast import parse, to_text, stats
from .semantics import robustness, satisfies, robustness_signal
from .trajectory import Mu0Params, Trajectory, TrajectoryBank, sample_mu0, standardize
from .formula_sampler import SamplerParams, sample_formula, sample_formulae

__version__ = "0.1.0"
