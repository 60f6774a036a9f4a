"""Boolean satisfaction and quantitative robustness of STL formulae.

All monitors are vectorized over a batch of trajectories: signals are arrays
of shape ``(M, L)`` where ``L`` shrinks below the grid length only when a
nonzero left bound pushes a window past the trajectory end. Windows that
reach past the last grid point are clamped to the available samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import stl_ast as A
from .errors import DimensionError, HorizonError

STANDARD = "standard"
NORMALIZED = "normalized"
KINDS = (STANDARD, NORMALIZED)

# Robustness assigned to ``true``; the generator never emits it.
TT_ROBUSTNESS = 1e6


def check_kind(kind):
    if kind not in KINDS:
        raise ValueError(f"robustness kind must be one of {KINDS}, got {kind!r}")
    return kind


class _RealOps:
    neg = staticmethod(np.negative)
    meet = staticmethod(np.minimum)
    join = staticmethod(np.maximum)

    def __init__(self, kind, top):
        self.normalized = check_kind(kind) == NORMALIZED
        self.top = 1.0 if self.normalized else top

    def atom(self, f, X):
        margin = X[:, f.var, :] - f.threshold if f.op == A.GEQ else f.threshold - X[:, f.var, :]
        return np.tanh(margin) if self.normalized else margin

    def true(self, X):
        return np.full((X.shape[0], X.shape[2]), self.top)


class _BoolOps:
    neg = staticmethod(np.logical_not)
    meet = staticmethod(np.logical_and)
    join = staticmethod(np.logical_or)

    def atom(self, f, X):
        column = X[:, f.var, :]
        return column >= f.threshold if f.op == A.GEQ else column <= f.threshold

    def true(self, X):
        return np.ones((X.shape[0], X.shape[2]), dtype=bool)


def _window(r, a, b, join):
    """``out[t] = join over r[t+a .. min(t+b, L-1)]``."""
    length = r.shape[-1]
    if length - a <= 0:
        raise HorizonError(f"window [t+{a}, t+{b}] starts past the trajectory end")
    out = r[:, a:].copy()
    for k in range(a + 1, min(b, length - 1) + 1):
        n = length - k
        out[:, :n] = join(out[:, :n], r[:, k:])
    return out


def _until(r1, r2, a, b, ops):
    """Until by running prefix-meet of the left signal, O(window) per index."""
    length = min(r1.shape[-1], r2.shape[-1])
    if length - a <= 0:
        raise HorizonError(f"until window [t+{a}, t+{b}] starts past the trajectory end")
    r1 = r1[:, :length]
    r2 = r2[:, :length]
    prefix = r1.copy()
    out = None
    for k in range(0, min(b, length - 1) + 1):
        n = length - k
        if k > 0:
            prefix[:, :n] = ops.meet(prefix[:, :n], r1[:, k:])
        if k >= a:
            cand = ops.meet(r2[:, k:], prefix[:, :n])
            if out is None:
                out = cand
            else:
                out[:, :n] = ops.join(out[:, :n], cand)
    return out


def _eval(f, X, ops):
    if isinstance(f, A.Atom):
        return ops.atom(f, X)
    if isinstance(f, A.Not):
        return ops.neg(_eval(f.child, X, ops))
    if isinstance(f, (A.And, A.Or)):
        left = _eval(f.left, X, ops)
        right = _eval(f.right, X, ops)
        n = min(left.shape[-1], right.shape[-1])
        combine = ops.meet if isinstance(f, A.And) else ops.join
        return combine(left[:, :n], right[:, :n])
    if isinstance(f, A.Eventually):
        return _window(_eval(f.child, X, ops), f.a, f.b, ops.join)
    if isinstance(f, A.Globally):
        return _window(_eval(f.child, X, ops), f.a, f.b, ops.meet)
    if isinstance(f, A.Until):
        return _until(_eval(f.left, X, ops), _eval(f.right, X, ops), f.a, f.b, ops)
    if isinstance(f, A.TrueF):
        return ops.true(X)
    raise TypeError(f"not a formula: {f!r}")


def _as_batch(xi):
    """Accept a Trajectory, a TrajectoryBank or a raw array; return (M, n, T)."""
    values = getattr(xi, "values", xi)
    values = np.asarray(values, dtype=float)
    if values.ndim == 2:
        values = values[None]
    if values.ndim != 3:
        raise ValueError("expected values of shape (n, T) or (M, n, T)")
    return values


def _check_dims(f, X):
    top = A.max_var(f)
    if top >= X.shape[1]:
        raise DimensionError(f"formula uses x{top} but the signal has dimension {X.shape[1]}")


def signals(f, xi, kind=STANDARD, top=TT_ROBUSTNESS) -> np.ndarray:
    """Robustness signals of ``f`` for every trajectory, shape ``(M, L)``."""
    X = _as_batch(xi)
    _check_dims(f, X)
    return _eval(f, X, _RealOps(kind, top))


def boolean_signals(f, xi) -> np.ndarray:
    X = _as_batch(xi)
    _check_dims(f, X)
    return _eval(f, X, _BoolOps())


def _from_index(X, f, t_index):
    T = X.shape[2]
    if not 0 <= t_index < T:
        raise HorizonError(f"time index {t_index} outside grid 0..{T - 1}")
    # only samples in [t, t + horizon] influence the value at t
    return X[:, :, t_index:min(T, t_index + A.max_horizon(f) + 1)]


def robustness(f, xi, t_index=0, kind=STANDARD, top=TT_ROBUSTNESS) -> float:
    """Robustness of ``f`` on trajectory ``xi`` at grid index ``t_index``."""
    X = _as_batch(xi)
    _check_dims(f, X)
    return float(_eval(f, _from_index(X, f, t_index), _RealOps(kind, top))[0, 0])


def satisfies(f, xi, t_index=0) -> bool:
    """Boolean satisfaction, computed by the Boolean monitor (not via sign)."""
    X = _as_batch(xi)
    _check_dims(f, X)
    return bool(_eval(f, _from_index(X, f, t_index), _BoolOps())[0, 0])


def robustness_at_zero(formulae, bank, kind=STANDARD, top=TT_ROBUSTNESS) -> np.ndarray:
    """``(M, F)`` matrix of robustness at t=0, one column per formula."""
    X = _as_batch(bank)
    out = np.empty((X.shape[0], len(formulae)))
    ops = _RealOps(kind, top)
    for j, f in enumerate(formulae):
        _check_dims(f, X)
        out[:, j] = _eval(f, _from_index(X, f, 0), ops)[:, 0]
    return out


def satisfaction_at_zero(formulae, bank) -> np.ndarray:
    X = _as_batch(bank)
    out = np.empty((X.shape[0], len(formulae)), dtype=bool)
    ops = _BoolOps()
    for j, f in enumerate(formulae):
        _check_dims(f, X)
        out[:, j] = _eval(f, _from_index(X, f, 0), ops)[:, 0]
    return out


def is_clamped(f, n_steps, t_index=0) -> bool:
    """True when evaluating at ``t_index`` needs samples past the grid end."""
    return t_index + A.max_horizon(f) > n_steps


@dataclass(frozen=True)
class RobustnessSignal:
    """Robustness over the grid.

    ``values[i]`` is defined for ``i < len(values)``; indices below
    ``unclamped`` were evaluated without truncating any window.
    """

    values: np.ndarray
    kind: str
    unclamped: int

    def __len__(self):
        return len(self.values)


def unclamped_length(f, n_steps) -> int:
    """Indices 0..k-1 need no clamping; at least index 0 is always reported."""
    return max(1, n_steps + 1 - A.max_horizon(f))


def robustness_signal(f, xi, kind=STANDARD, top=TT_ROBUSTNESS) -> RobustnessSignal:
    X = _as_batch(xi)
    if X.shape[0] != 1:
        raise ValueError("robustness_signal takes a single trajectory")
    values = signals(f, X, kind, top)[0]
    return RobustnessSignal(values, kind, min(len(values), unclamped_length(f, X.shape[2] - 1)))
