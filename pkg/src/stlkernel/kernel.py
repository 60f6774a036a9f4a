"""Monte Carlo STL kernel.

The raw kernel is the empirical inner product of robustness functionals over
a trajectory bank::

    untimed  k'(f, g) = 1/M sum_xi rho(f, xi, 0) rho(g, xi, 0)
    timed    k'(f, g) = 1/M sum_xi (delta/|I|) sum_i rho(f, xi, t_i) rho(g, xi, t_i)

The normalized kernel divides by the geometric mean of the self-kernels and
the exponential kernel maps it through ``exp(-(1 - 2 k0) / sigma**2)``
("printed" mode, diagonal ``exp(1/sigma**2)``) or ``exp(-(2 - 2 k0) / sigma**2)``
("gaussian" mode, a Gaussian of the induced distance with unit diagonal).
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from . import semantics
from . import stl_ast as A
from .errors import DegenerateFormulaError, DimensionError, FingerprintMismatchError

RAW = "raw"
NORMALIZED = "normalized"
EXPONENTIAL = "exponential"
UNTIMED = "untimed"
TIMED = "timed"
PRINTED = "printed"
GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class KernelConfig:
    variant: str = EXPONENTIAL
    sigma: float = 1.0
    timing: str = UNTIMED
    robustness_kind: str = semantics.NORMALIZED
    exp_mode: str = PRINTED
    # "clamped" integrates every grid index; "unclamped" drops indices whose
    # windows were truncated at the trajectory end
    time_range: str = "clamped"

    def __post_init__(self):
        if self.variant not in (RAW, NORMALIZED, EXPONENTIAL):
            raise ValueError(f"unknown kernel variant {self.variant!r}")
        if self.timing not in (UNTIMED, TIMED):
            raise ValueError(f"unknown timing {self.timing!r}")
        if self.exp_mode not in (PRINTED, GAUSSIAN):
            raise ValueError(f"unknown exponential mode {self.exp_mode!r}")
        if self.time_range not in ("clamped", "unclamped"):
            raise ValueError(f"unknown time range {self.time_range!r}")
        semantics.check_kind(self.robustness_kind)
        if self.variant == EXPONENTIAL and not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def with_sigma(self, sigma) -> "KernelConfig":
        return replace(self, sigma=float(sigma))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data) -> "KernelConfig":
        return cls(**data)

    def diagonal(self) -> Optional[float]:
        """Closed-form k(f, f), or None for the raw kernel."""
        if self.variant == NORMALIZED:
            return 1.0
        if self.variant == EXPONENTIAL:
            return float(np.exp(1.0 / self.sigma ** 2)) if self.exp_mode == PRINTED else 1.0
        return None


class Features:
    """Robustness of a formula list on a bank, arranged so that the raw kernel
    between two feature sets is ``scale * A.T @ B``."""

    def __init__(self, formulae, bank, config: KernelConfig):
        self.formulae = list(formulae)
        if not self.formulae:
            raise ValueError("formula list must be non-empty")
        self.bank_id = bank.fingerprint
        self.timing = config.timing
        self.kind = config.robustness_kind
        self.time_range = config.time_range
        M = len(bank)
        for j, f in enumerate(self.formulae):
            if A.max_var(f) >= bank.dim:
                raise DimensionError(f"formula {j} uses x{A.max_var(f)} but the bank has dimension {bank.dim}")
        if config.timing == UNTIMED:
            self.matrix = semantics.robustness_at_zero(self.formulae, bank, self.kind)
            self.scale = 1.0 / M
        else:
            T = bank.n_steps + 1
            self.matrix = np.zeros((M, T, len(self.formulae)))
            for j, f in enumerate(self.formulae):
                sig = semantics.signals(f, bank, self.kind)
                n = sig.shape[1]
                if config.time_range == "unclamped":
                    n = min(n, semantics.unclamped_length(f, bank.n_steps))
                self.matrix[:, :n, j] = sig[:, :n]
            self.matrix = self.matrix.reshape(M * T, len(self.formulae))
            interval = bank.n_steps * bank.delta
            self.scale = bank.delta / interval / M
        self.self_raw = self.scale * np.einsum("mf,mf->f", self.matrix, self.matrix)
        self.clamped = sum(semantics.is_clamped(f, bank.n_steps) for f in self.formulae)

    def __len__(self):
        return len(self.formulae)

    def check_nondegenerate(self):
        bad = np.flatnonzero(~(self.self_raw > 0))
        if bad.size:
            j = int(bad[0])
            raise DegenerateFormulaError(
                f"formula {j} {A.to_text(self.formulae[j])} has zero self-kernel on this bank",
                index=j, formula=self.formulae[j])

    def raw_with(self, other: "Features") -> np.ndarray:
        if other.bank_id != self.bank_id or other.timing != self.timing or other.kind != self.kind:
            raise FingerprintMismatchError("feature sets were computed on different banks or settings")
        return self.scale * (self.matrix.T @ other.matrix)

    def raw_square(self) -> np.ndarray:
        K = self.scale * (self.matrix.T @ self.matrix)
        upper = np.triu(K)
        return upper + np.triu(K, 1).T


def normalize(raw: np.ndarray, self_a: np.ndarray, self_b: np.ndarray) -> np.ndarray:
    return raw / np.sqrt(np.outer(self_a, self_b))


def exponentiate(k0: np.ndarray, sigma: float, mode: str = PRINTED) -> np.ndarray:
    offset = 1.0 if mode == PRINTED else 2.0
    return np.exp(-(offset - 2.0 * k0) / sigma ** 2)


def transform(k0: np.ndarray, config: KernelConfig) -> np.ndarray:
    """Normalized kernel values to the configured variant."""
    if config.variant == EXPONENTIAL:
        return exponentiate(k0, config.sigma, config.exp_mode)
    return k0


@dataclass
class GramMatrix:
    entries: np.ndarray
    config: KernelConfig
    bank_id: str
    formulae_a: list
    formulae_b: Optional[list] = None  # None for the square symmetric case
    normalized: Optional[np.ndarray] = None  # k0 values, kept for sigma sweeps

    @property
    def square(self) -> bool:
        return self.formulae_b is None

    @property
    def shape(self):
        return self.entries.shape

    def fingerprint(self) -> str:
        digest = hashlib.sha256(np.ascontiguousarray(self.entries).tobytes())
        digest.update(json.dumps(self.config.to_dict(), sort_keys=True).encode())
        digest.update(self.bank_id.encode())
        return digest.hexdigest()[:16]

    def with_config(self, config: KernelConfig) -> "GramMatrix":
        """Re-derive entries for another sigma/variant from the cached k0."""
        if self.normalized is None or config.variant == RAW:
            raise ValueError("raw kernel entries cannot be re-derived from k0")
        entries = transform(self.normalized, config)
        if self.square:
            diag = config.diagonal()
            np.fill_diagonal(entries, diag)
        return replace(self, entries=entries, config=config)


def gram_from_features(fa: Features, fb: Optional[Features], config: KernelConfig) -> GramMatrix:
    square = fb is None
    if square:
        raw = fa.raw_square()
        self_b = fa.self_raw
    else:
        raw = fa.raw_with(fb)
        self_b = fb.self_raw
    if config.variant == RAW:
        return GramMatrix(raw, config, fa.bank_id, fa.formulae, None if square else fb.formulae)
    fa.check_nondegenerate()
    if not square:
        fb.check_nondegenerate()
    k0 = normalize(raw, fa.self_raw, self_b)
    if square:
        np.fill_diagonal(k0, 1.0)
    entries = transform(k0, config)
    if square:
        np.fill_diagonal(entries, config.diagonal())
    return GramMatrix(entries, config, fa.bank_id, fa.formulae,
                      None if square else fb.formulae, normalized=k0)


def gram(formulae_a, formulae_b, bank, config: KernelConfig) -> GramMatrix:
    """Kernel between all pairs; pass ``formulae_b=None`` for the square case."""
    fa = Features(formulae_a, bank, config)
    fb = None if formulae_b is None else Features(formulae_b, bank, config)
    return gram_from_features(fa, fb, config)


# -- scalar evaluations ----------------------------------------------------------

def _pair(f, g, bank, timing, kind):
    feats = Features([f, g], bank, KernelConfig(variant=RAW, timing=timing, robustness_kind=kind))
    a, b = feats.matrix[:, 0], feats.matrix[:, 1]
    return feats, a, b


def k_raw(f, g, bank, timing=UNTIMED, kind=semantics.NORMALIZED) -> float:
    feats, a, b = _pair(f, g, bank, timing, kind)
    return float(feats.scale * np.dot(a, b))


def k_normalized(f, g, bank, timing=UNTIMED, kind=semantics.NORMALIZED) -> float:
    feats, a, b = _pair(f, g, bank, timing, kind)
    ff, gg, fg = np.dot(a, a), np.dot(b, b), np.dot(a, b)
    for j, val in enumerate((ff, gg)):
        if not val > 0:
            formula = (f, g)[j]
            raise DegenerateFormulaError(
                f"formula {A.to_text(formula)} has zero self-kernel on this bank", index=j, formula=formula)
    return float(fg / np.sqrt(ff * gg))


def k_exponential(f, g, bank, sigma, timing=UNTIMED, kind=semantics.NORMALIZED, mode=PRINTED) -> float:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return float(exponentiate(k_normalized(f, g, bank, timing, kind), sigma, mode))


# -- diagnostics ------------------------------------------------------------------

def eigen_floor_ratio(K: np.ndarray) -> float:
    """Smallest eigenvalue over the largest one (dense symmetric solver)."""
    eig = np.linalg.eigvalsh(K)
    return float(eig[0] / eig[-1])


# -- serialization ------------------------------------------------------------------

def formula_hash(f) -> str:
    return hashlib.sha256(A.to_text(f).encode()).hexdigest()[:16]


def dumps_gram(g: GramMatrix) -> str:
    header = {
        "format": "stlkernel-gram/1",
        "config": g.config.to_dict(),
        "bank_id": g.bank_id,
        "square": g.square,
        "formulae_a": [A.to_text(f) for f in g.formulae_a],
        "formulae_b": None if g.square else [A.to_text(f) for f in g.formulae_b],
        "hashes_a": [formula_hash(f) for f in g.formulae_a],
        "hashes_b": None if g.square else [formula_hash(f) for f in g.formulae_b],
        "shape": list(g.entries.shape),
    }
    out = io.StringIO()
    out.write(json.dumps(header) + "\n")
    for row in g.entries:
        out.write(",".join(repr(float(v)) for v in row) + "\n")
    if g.normalized is not None:
        out.write("# normalized\n")
        for row in g.normalized:
            out.write(",".join(repr(float(v)) for v in row) + "\n")
    return out.getvalue()


def loads_gram(text: str) -> GramMatrix:
    lines = text.splitlines()
    header = json.loads(lines[0])
    rows, k0_rows = [], None
    target = rows
    for line in lines[1:]:
        if line.startswith("# normalized"):
            k0_rows = []
            target = k0_rows
            continue
        if line.strip():
            target.append([float(c) for c in line.split(",")])
    entries = np.array(rows, dtype=float).reshape(header["shape"])
    normalized = None if k0_rows is None else np.array(k0_rows, dtype=float).reshape(header["shape"])
    fa = [A.parse(t) for t in header["formulae_a"]]
    fb = None if header["square"] else [A.parse(t) for t in header["formulae_b"]]
    return GramMatrix(entries, KernelConfig.from_dict(header["config"]), header["bank_id"], fa, fb, normalized)


def save_gram(g: GramMatrix, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_gram(g))


def load_gram(path) -> GramMatrix:
    with open(path) as fh:
        return loads_gram(fh.read())
