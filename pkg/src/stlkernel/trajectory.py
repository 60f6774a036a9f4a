"""Piecewise-linear trajectories on a uniform grid, the base-measure sampler,
pooled standardization and CSV I/O."""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import CsvFormatError, DegenerateDimensionError, ModelError
from .rng import make_rng


@dataclass(frozen=True)
class Trajectory:
    """A signal of dimension ``dim`` sampled at ``t0 + i * delta``, i = 0..N."""

    values: np.ndarray  # shape (dim, N + 1)
    t0: float = 0.0
    delta: float = 1.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float, ndmin=2)
        if values.ndim != 2 or values.shape[1] < 2:
            raise ValueError("trajectory needs shape (dim, N+1) with N >= 1")
        if not np.all(np.isfinite(values)):
            raise ValueError("trajectory values must be finite")
        if not self.delta > 0:
            raise ValueError("grid step must be positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1] - 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.delta * np.arange(self.n_steps + 1)

    def __call__(self, t):
        """Linear interpolation between grid points."""
        return np.array([np.interp(t, self.times, row) for row in self.values])

    def total_variation(self) -> np.ndarray:
        return np.abs(np.diff(self.values, axis=1)).sum(axis=1)


@dataclass(frozen=True)
class TrajectoryBank:
    """Homogeneous collection of trajectories stored as one ``(M, dim, N+1)`` array."""

    values: np.ndarray
    t0: float = 0.0
    delta: float = 1.0
    seed: Optional[int] = None
    source: str = "mu0"
    _fingerprint: str = field(default="", repr=False, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 3 or values.shape[0] < 1 or values.shape[2] < 2:
            raise ValueError("bank needs shape (M, dim, N+1) with M >= 1, N >= 1")
        if not np.all(np.isfinite(values)):
            raise ValueError("trajectory values must be finite")
        if not self.delta > 0:
            raise ValueError("grid step must be positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(values).tobytes())
        digest.update(repr((values.shape, float(self.t0), float(self.delta))).encode())
        object.__setattr__(self, "_fingerprint", digest.hexdigest()[:16])

    @classmethod
    def from_trajectories(cls, trajectories, **kwargs):
        trajectories = list(trajectories)
        if not trajectories:
            raise ValueError("bank must be non-empty")
        first = trajectories[0]
        for tr in trajectories[1:]:
            if tr.values.shape != first.values.shape or tr.t0 != first.t0 or tr.delta != first.delta:
                raise ValueError("all trajectories in a bank must share dimension and grid")
        kwargs.setdefault("t0", first.t0)
        kwargs.setdefault("delta", first.delta)
        return cls(np.stack([tr.values for tr in trajectories]), **kwargs)

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, k) -> Trajectory:
        return Trajectory(self.values[k], self.t0, self.delta)

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    @property
    def trajectories(self) -> list:
        return list(self)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def n_steps(self) -> int:
        return self.values.shape[2] - 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.delta * np.arange(self.n_steps + 1)

    @property
    def fingerprint(self) -> str:
        """Content hash of values and grid; seed and source do not enter it."""
        return self._fingerprint

    def subset(self, index) -> "TrajectoryBank":
        return TrajectoryBank(self.values[index], self.t0, self.delta, self.seed, self.source)


# -- base measure ---------------------------------------------------------------

@dataclass(frozen=True)
class Mu0Params:
    a: float = 0.0
    b: float = 100.0
    delta: float = 1.0
    m_start: float = 0.0
    s_start: float = 1.0
    m_tv: float = 0.0
    s_tv: float = 1.0
    q: float = 0.1
    dim: int = 1

    def __post_init__(self):
        if not self.delta > 0:
            raise ModelError("delta must be positive")
        if not self.b > self.a:
            raise ModelError("need b > a")
        if not 0.0 <= self.q <= 1.0:
            raise ModelError("flip probability q must lie in [0, 1]")
        if not (self.s_start > 0 and self.s_tv > 0):
            raise ModelError("standard deviations must be positive")
        if self.dim < 1:
            raise ModelError("dim must be positive")
        if self.n_steps < 1:
            raise ModelError("grid must have at least one step")

    @property
    def n_steps(self) -> int:
        steps = (self.b - self.a) / self.delta
        n = int(round(steps))
        if abs(steps - n) > 1e-9 * max(1.0, steps):
            raise ModelError("(b - a) must be a multiple of delta")
        return n


class Mu0Draw(NamedTuple):
    values: np.ndarray  # (count, dim, N + 1)
    tv: np.ndarray  # (count, dim) sampled total-variation budgets
    flips: np.ndarray  # (count, dim) number of direction changes


def mu0_path(start, tv, s0, flips, splits):
    """Build one grid path from its random ingredients.

    ``splits`` are the N - 1 interior cut points of ``[0, tv]`` (any order),
    ``flips`` a length-N boolean array marking direction changes, and ``s0``
    the initial direction in {-1, +1}. Increments are the gaps between the
    sorted cut points, so their absolute sum is ``tv`` (after the grid
    rounding of :func:`_on_dyadic_grid`).
    """
    start, tv = np.float64(start), np.float64(tv)
    cuts = np.concatenate(([0.0], np.sort(splits), [tv]))
    start, cuts = _on_dyadic_grid(start, tv, cuts)
    steps = np.diff(cuts)
    signs = s0 * np.cumprod(np.where(flips, -1.0, 1.0))
    return start + np.concatenate(([0.0], np.cumsum(signs * steps)))


def _on_dyadic_grid(start, tv, cuts):
    """Round ``start`` and ``cuts`` to multiples of one power of two per path.

    The spacing is the ulp of ``|start| + tv``, so every grid value, partial
    sum and increment of the path is exactly representable. The emitted
    total variation then equals the rounded budget ``cuts[..., -1]`` with no
    cancellation error, even when ``tv`` is tiny next to ``|start|``. The
    rounding moves each number by at most half of that ulp.
    """
    _, exponent = np.frexp(np.abs(start) + tv)
    spacing = np.ldexp(1.0, exponent - 52)
    # division and multiplication by a power of two are exact
    return (np.round(start / spacing) * spacing,
            np.round(cuts / spacing[..., None]) * spacing[..., None])


def draw_mu0(params: Mu0Params, count: int, rng: np.random.Generator) -> Mu0Draw:
    """Vectorized draw of ``count`` trajectories, coordinates independent."""
    if count < 1:
        raise ValueError("count must be at least 1")
    n = params.n_steps
    shape = (count, params.dim)
    start = rng.normal(params.m_start, params.s_start, size=shape)
    tv = (params.m_tv + params.s_tv * rng.standard_normal(size=shape)) ** 2
    cuts = np.sort(rng.uniform(0.0, 1.0, size=shape + (n - 1,)), axis=-1) * tv[..., None]
    cuts = np.concatenate((np.zeros(shape + (1,)), cuts, tv[..., None]), axis=-1)
    start, cuts = _on_dyadic_grid(start, tv, cuts)
    tv = cuts[..., -1]
    steps = np.diff(cuts, axis=-1)
    s0 = rng.choice(np.array([-1.0, 1.0]), size=shape)
    flip = rng.uniform(size=shape + (n,)) < params.q
    signs = s0[..., None] * np.cumprod(np.where(flip, -1.0, 1.0), axis=-1)
    increments = np.cumsum(signs * steps, axis=-1)
    values = np.concatenate((start[..., None], start[..., None] + increments), axis=-1)
    return Mu0Draw(values, tv, flip.sum(axis=-1))


def sample_mu0(params: Mu0Params, count: int, seed: int) -> TrajectoryBank:
    draw = draw_mu0(params, count, make_rng(seed))
    return TrajectoryBank(draw.values, params.a, params.delta, seed=seed, source="mu0")


# -- standardization ------------------------------------------------------------

def standardize(bank: TrajectoryBank) -> TrajectoryBank:
    """Z-score every dimension with mean and population std pooled over the bank."""
    mean = bank.values.mean(axis=(0, 2), keepdims=True)
    std = bank.values.std(axis=(0, 2), keepdims=True)
    for d, s in enumerate(std.ravel()):
        if not s > 0 or s <= 1e-12 * max(1.0, abs(mean.ravel()[d])):
            raise DegenerateDimensionError(f"dimension {d} has zero variance across the bank")
    return TrajectoryBank((bank.values - mean) / std, bank.t0, bank.delta,
                          seed=bank.seed, source=f"standardized({bank.source})")


# -- CSV ------------------------------------------------------------------------

def _format_cell(x: float) -> str:
    return repr(float(x))


def dumps_csv(bank: TrajectoryBank) -> str:
    out = io.StringIO()
    out.write("t," + ",".join(f"x{d}" for d in range(bank.dim)) + "\n")
    times = bank.times
    for k in range(len(bank)):
        out.write(f"# trajectory {k}\n")
        block = bank.values[k]
        for i, t in enumerate(times):
            out.write(",".join([_format_cell(t)] + [_format_cell(v) for v in block[:, i]]) + "\n")
    return out.getvalue()


def write_csv(bank: TrajectoryBank, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(dumps_csv(bank))


def loads_csv(text: str, source: str = "file") -> TrajectoryBank:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("t,"):
        raise CsvFormatError("missing header 't,x0,...'", 1)
    header = [h.strip() for h in lines[0].split(",")]
    expected = ["t"] + [f"x{d}" for d in range(len(header) - 1)]
    if header != expected:
        raise CsvFormatError(f"bad header {lines[0]!r}", 1)
    width = len(header)
    blocks = []
    current = None
    for lineno, line in enumerate(lines[1:], start=2):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            if stripped.startswith("# trajectory"):
                current = []
                blocks.append((lineno, current))
            continue
        if current is None:
            current = []
            blocks.append((lineno, current))
        cells = stripped.split(",")
        if len(cells) != width:
            raise CsvFormatError(f"ragged row: {len(cells)} cells, expected {width}", lineno)
        try:
            row = [float(c) for c in cells]
        except ValueError:
            raise CsvFormatError(f"non-numeric cell in {stripped!r}", lineno) from None
        current.append((lineno, row))
    blocks = [(ln, b) for ln, b in blocks if b]
    if not blocks:
        raise CsvFormatError("no data rows", len(lines))
    arrays = []
    times = None
    for start_line, block in blocks:
        data = np.array([row for _, row in block])
        if times is None:
            times = data[:, 0]
            if len(times) < 2:
                raise CsvFormatError("trajectory needs at least two time points", start_line)
            steps = np.diff(times)
            if np.any(steps <= 0):
                raise CsvFormatError("times must be strictly increasing", start_line)
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
                raise CsvFormatError("time grid is not uniform", start_line)
        elif data.shape[0] != len(times) or not np.array_equal(data[:, 0], times):
            raise CsvFormatError("trajectory grid differs from the first block", start_line)
        arrays.append(data[:, 1:].T)
    delta = (times[-1] - times[0]) / (len(times) - 1)
    return TrajectoryBank(np.stack(arrays), float(times[0]), float(delta), source=source)


def read_csv(path) -> TrajectoryBank:
    with open(path) as fh:
        return loads_csv(fh.read(), source=f"file({path})")
