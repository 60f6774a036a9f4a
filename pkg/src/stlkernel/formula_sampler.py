"""Random STL formulae from a recursive syntax-tree growing scheme.

The root is always an operator. Every other node becomes an atom with
probability ``p_leaf``; otherwise its operator is drawn uniformly from
``operators``. Nodes at ``max_depth`` are forced to be atoms, which keeps
the tree finite even when the branching process is supercritical
(``p_leaf`` < 1/3 with the default six-operator menu).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import stl_ast as A
from .rng import make_rng

OPERATORS = ("not", "and", "or", "until", "eventually", "globally")
ARITY = {"not": 1, "and": 2, "or": 2, "until": 2, "eventually": 1, "globally": 1}


@dataclass(frozen=True)
class SamplerParams:
    p_leaf: float = 0.5
    t_max: int = 10
    dim: int = 1
    seed: int = 0
    max_depth: int = 15
    operators: tuple = field(default=OPERATORS)

    def __post_init__(self):
        if not 0.0 < self.p_leaf < 1.0:
            raise ValueError("p_leaf must lie strictly between 0 and 1")
        if self.t_max < 1:
            raise ValueError("t_max must be at least 1")
        if self.dim < 1:
            raise ValueError("dim must be at least 1")
        if self.max_depth < 2:
            raise ValueError("max_depth must allow an operator root and its children")
        object.__setattr__(self, "operators", tuple(self.operators))
        unknown = set(self.operators) - set(OPERATORS)
        if unknown or not self.operators:
            raise ValueError(f"unknown operators {sorted(unknown)}")

    def mean_arity(self) -> float:
        return float(np.mean([ARITY[op] for op in self.operators]))


class FormulaSampler:
    """Stateful generator; the same seed always yields the same sequence."""

    def __init__(self, params: SamplerParams, rng=None):
        self.params = params
        self.rng = make_rng(params.seed if rng is None else rng)

    def atom(self) -> A.Atom:
        rng = self.rng
        var = int(rng.integers(self.params.dim))
        op = A.GEQ if rng.random() < 0.5 else A.LEQ
        return A.Atom(var, op, float(rng.standard_normal()))

    def node(self, depth: int):
        if depth >= self.params.max_depth or self.rng.random() < self.params.p_leaf:
            return self.atom()
        return self.operator(depth)

    def operator(self, depth: int):
        rng = self.rng
        ops = self.params.operators
        kind = ops[int(rng.integers(len(ops)))]
        if kind == "not":
            return A.Not(self.node(depth + 1))
        if kind in ("and", "or"):
            left = self.node(depth + 1)
            right = self.node(depth + 1)
            return A.And(left, right) if kind == "and" else A.Or(left, right)
        b = int(rng.integers(1, self.params.t_max + 1))
        if kind == "until":
            left = self.node(depth + 1)
            right = self.node(depth + 1)
            return A.Until(0, b, left, right)
        child = self.node(depth + 1)
        return A.Eventually(0, b, child) if kind == "eventually" else A.Globally(0, b, child)

    def sample(self):
        return self.operator(1)


def sample_formula(params: SamplerParams):
    return FormulaSampler(params).sample()


def sample_formulae(params: SamplerParams, count: int) -> list:
    """``count`` independent formulae, deterministic in ``params.seed``."""
    if count < 1:
        raise ValueError("count must be at least 1")
    sampler = FormulaSampler(params)
    return [sampler.sample() for _ in range(count)]


def metadata(params: SamplerParams) -> dict:
    return {
        "p_leaf": params.p_leaf,
        "t_max": params.t_max,
        "dim": params.dim,
        "max_depth": params.max_depth,
        "operators": list(params.operators),
        "left_bound": 0,
    }
