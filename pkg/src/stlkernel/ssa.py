"""Exact stochastic simulation (Gillespie direct method) of mass-action
reaction networks, sampled onto a uniform grid by last value."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ModelError
from .rng import make_rng
from .trajectory import TrajectoryBank

log = logging.getLogger(__name__)

BUILTIN_MODELS = ("immigration", "polymerase", "isomerization", "transcription")


@dataclass(frozen=True)
class Reaction:
    delta: tuple
    rate: float
    reactants: tuple = ()

    def propensity(self, state) -> float:
        r = self.reactants
        if not r:
            return self.rate
        if len(r) == 1:
            return self.rate * state[r[0]]
        i, j = r
        if i == j:
            x = state[i]
            return self.rate * x * (x - 1) / 2.0
        return self.rate * state[i] * state[j]


@dataclass(frozen=True)
class ReactionModel:
    species: tuple
    reactions: tuple
    init: tuple
    t_end: float = 100.0
    delta: float = 1.0
    name: str = "model"

    def __post_init__(self):
        n = len(self.species)
        if n < 1:
            raise ModelError("model needs at least one species")
        if len(self.init) != n or any(int(x) != x or x < 0 for x in self.init):
            raise ModelError("init must list one nonnegative integer count per species")
        if not self.t_end > 0 or not self.delta > 0:
            raise ModelError("t_end and delta must be positive")
        steps = self.t_end / self.delta
        if abs(steps - round(steps)) > 1e-9 * steps or round(steps) < 1:
            raise ModelError("t_end must be a positive multiple of delta")
        if not self.reactions:
            raise ModelError("model needs at least one reaction")
        for k, rx in enumerate(self.reactions):
            if len(rx.delta) != n:
                raise ModelError(f"reaction {k}: delta has {len(rx.delta)} entries, expected {n}")
            if not rx.rate > 0 or not math.isfinite(rx.rate):
                raise ModelError(f"reaction {k}: rate must be positive")
            if len(rx.reactants) > 2:
                raise ModelError(f"reaction {k}: mass-action order above 2 is not supported")
            for idx in rx.reactants:
                if not 0 <= idx < n:
                    raise ModelError(f"reaction {k}: reactant index {idx} out of range")
            # a species may only be consumed as far as it appears as a reactant,
            # otherwise a firing reaction could drive its count negative
            for s, d in enumerate(rx.delta):
                if d < 0 and -d > rx.reactants.count(s):
                    raise ModelError(
                        f"reaction {k}: consumes {-d} of species {s} but lists it "
                        f"{rx.reactants.count(s)} time(s) as reactant")

    @property
    def dim(self) -> int:
        return len(self.species)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.delta))

    @classmethod
    def from_dict(cls, data: dict, name=None) -> "ReactionModel":
        try:
            reactions = tuple(
                Reaction(tuple(int(d) for d in rx["delta"]), float(rx["rate"]),
                         tuple(int(i) for i in rx.get("reactants", ())))
                for rx in data["reactions"])
            return cls(
                species=tuple(data["species"]),
                reactions=reactions,
                init=tuple(int(x) for x in data["init"]),
                t_end=float(data.get("t_end", 100.0)),
                delta=float(data.get("delta", 1.0)),
                name=name or data.get("name", "model"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ModelError):
                raise
            raise ModelError(f"invalid model description: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "species": list(self.species),
            "reactions": [{"delta": list(r.delta), "rate": r.rate, "reactants": list(r.reactants)}
                          for r in self.reactions],
            "init": list(self.init),
            "t_end": self.t_end,
            "delta": self.delta,
        }


def load_model(source) -> ReactionModel:
    """Load a model from a JSON path, a dict, or one of :data:`BUILTIN_MODELS`."""
    if isinstance(source, ReactionModel):
        return source
    if isinstance(source, dict):
        return ReactionModel.from_dict(source)
    if str(source) in BUILTIN_MODELS:
        text = resources.files("stlkernel").joinpath("models").joinpath(f"{source}.json").read_text()
        return ReactionModel.from_dict(json.loads(text), name=str(source))
    path = Path(source)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read model {source}: {exc}") from None
    return ReactionModel.from_dict(data, name=data.get("name", path.stem))


def simulate_path(model: ReactionModel, rng) -> tuple:
    """One SSA run; returns ``(values (dim, N+1), absorbed)``."""
    state = list(model.init)
    grid = [i * model.delta for i in range(model.n_steps + 1)]
    out = np.empty((model.dim, len(grid)))
    reactions = model.reactions
    t = 0.0
    gi = 0
    absorbed = False
    while True:
        props = [rx.propensity(state) for rx in reactions]
        total = sum(props)
        if total <= 0.0:
            absorbed = True
            t_next = math.inf
        else:
            t_next = t + rng.exponential() / total
        while gi < len(grid) and grid[gi] < t_next:
            out[:, gi] = state
            gi += 1
        if gi == len(grid):
            break
        threshold = rng.random() * total
        acc = 0.0
        chosen = None
        for k, p in enumerate(props):
            if p <= 0.0:
                continue
            chosen = k
            acc += p
            if threshold < acc:
                break
        for s, d in enumerate(reactions[chosen].delta):
            state[s] += d
        t = t_next
    return out, absorbed


def simulate(model, count: int, seed: int) -> TrajectoryBank:
    """``count`` independent runs as a trajectory bank (counts cast to floats)."""
    model = load_model(model)
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = make_rng(seed)
    values = np.empty((count, model.dim, model.n_steps + 1))
    frozen = 0
    for k in range(count):
        values[k], absorbed = simulate_path(model, rng)
        frozen += absorbed
    if frozen:
        log.info("%s: %d of %d runs reached an absorbing state before t_end",
                 model.name, frozen, count)
    return TrajectoryBank(values, 0.0, model.delta, seed=seed, source=f"ssa({model.name})")
