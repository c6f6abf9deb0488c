"""Payload-constrained change probabilities and embedding simulation.

Given costs ``rho`` and a message length ``m`` bits, find the rate
``lambda`` at which the per-pixel ternary change distribution carries
exactly ``m`` bits of entropy, then sample a change pattern from it.
Two laws are supported:

* ``gibbs``:  p(+-1) = exp(-lambda rho) / (1 + 2 exp(-lambda rho))
* ``capped``: p(+-1) = max(1/3 - lambda rho, 0)

Exponentials use base e, entropies base 2.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import formats
from .costs import CostMap
from .image_io import check_image
from .rng import derive_seed, uniform_grid

RULES = ("gibbs", "capped")
LOG2_3 = math.log2(3.0)
LAMBDA_CAP = 2.0 ** 64
MAX_BISECTIONS = 200


class InfeasiblePayloadError(ValueError):
    def __init__(self, message_bits: float, max_bits: float, n_pixels: int):
        self.message_bits = message_bits
        self.max_bits = max_bits
        self.max_payload = max_bits / n_pixels
        super().__init__(
            f"payload of {message_bits:g} bits exceeds capacity {max_bits:.6g} bits "
            f"(max relative payload {self.max_payload:.6g} bpp)"
        )


class BracketError(RuntimeError):
    def __init__(self, message: str, entropy: float):
        self.entropy = entropy
        super().__init__(f"{message} (achieved entropy {entropy:.6g} bits)")


def _check_rule(rule: str) -> str:
    if rule not in RULES:
        raise ValueError(f"unknown rule {rule!r}; expected one of {RULES}")
    return rule


@dataclass(frozen=True, eq=False)
class ChangeProbabilities:
    """Symmetric ternary law per pixel: p(+1) = p(-1) = ``p_change``."""

    p_change: np.ndarray
    rule: str

    def __post_init__(self):
        p = np.array(self.p_change, dtype=np.float64)
        _check_rule(self.rule)
        if p.ndim != 2:
            raise ValueError("p_change must be 2-D")
        if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1.0 / 3.0 + 1e-15):
            raise ValueError("p_change must lie in [0, 1/3]")
        p.flags.writeable = False
        object.__setattr__(self, "p_change", p)

    @property
    def shape(self):
        return self.p_change.shape

    @property
    def p_keep(self) -> np.ndarray:
        return 1.0 - 2.0 * self.p_change

    def __eq__(self, other):
        if not isinstance(other, ChangeProbabilities):
            return NotImplemented
        return self.rule == other.rule and np.array_equal(self.p_change, other.p_change)

    def to_bytes(self) -> bytes:
        return formats.pack(b"PROB", self.shape, self.p_change.astype("<f8"), trailer=bytes([RULES.index(self.rule)]))

    @classmethod
    def from_bytes(cls, data: bytes) -> "ChangeProbabilities":
        p, tail = formats.unpack(data, b"PROB", ["<f8"], trailer=1)
        if tail[0] >= len(RULES):
            raise formats.FormatError(f"unknown rule code {tail[0]}")
        return cls(p, RULES[tail[0]])

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ChangeProbabilities":
        return cls.from_bytes(Path(path).read_bytes())


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not lam >= 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    return lam


def gibbs_probs(rho: CostMap, lam: float) -> ChangeProbabilities:
    lam = _check_lambda(lam)
    e = np.exp(-lam * rho.costs)
    p = e / (1.0 + 2.0 * e)
    p[rho.wet] = 0.0
    return ChangeProbabilities(p, "gibbs")


def capped_probs(rho: CostMap, lam: float) -> ChangeProbabilities:
    lam = _check_lambda(lam)
    p = np.maximum(1.0 / 3.0 - lam * rho.costs, 0.0)
    p[rho.wet] = 0.0
    return ChangeProbabilities(p, "capped")


def change_probs(rho: CostMap, lam: float, rule: str) -> ChangeProbabilities:
    return gibbs_probs(rho, lam) if _check_rule(rule) == "gibbs" else capped_probs(rho, lam)


def ternary_entropy(q) -> np.ndarray:
    """Entropy in bits of (q, 1 - 2q, q), elementwise, with 0 log 0 = 0."""
    q = np.asarray(q, dtype=np.float64)
    keep = 1.0 - 2.0 * q
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(q > 0, -2.0 * q * np.log2(q), 0.0)
        b = np.where(keep > 0, -keep * np.log2(keep), 0.0)
    return a + b


def pattern_entropy(p: ChangeProbabilities) -> float:
    """Entropy of the whole pattern in bits, summed row-major (pairwise)."""
    return float(np.sum(ternary_entropy(p.p_change).ravel()))


@dataclass(frozen=True)
class PayloadSpec:
    alpha: float
    n_pixels: int

    def __post_init__(self):
        if not 0 <= self.alpha <= LOG2_3:
            raise ValueError(f"relative payload {self.alpha} outside [0, log2 3]")

    @property
    def message_bits(self) -> int:
        return int(round(self.alpha * self.n_pixels))


@dataclass(frozen=True)
class LambdaSolution:
    lam: float
    entropy: float
    iterations: int
    message_bits: float = field(default=0.0)
    rule: str = field(default="gibbs")


def entropy_tolerance(m: float) -> float:
    return max(1e-3 * m, 1e-6)


def solve_lambda(rho: CostMap, payload, rule: str) -> LambdaSolution:
    """Find lambda whose pattern entropy matches the payload.

    ``payload`` is a :class:`PayloadSpec` or a message length in bits.
    Entropy is continuous and nonincreasing in lambda for both rules, so
    the solver brackets by doubling from 1 and then bisects.
    """
    _check_rule(rule)
    m = float(payload.message_bits if isinstance(payload, PayloadSpec) else payload)
    if m < 0:
        raise ValueError("message length must be nonnegative")
    tol = entropy_tolerance(m)

    def H(lam):
        return pattern_entropy(change_probs(rho, lam, rule))

    h_max = H(0.0)
    if m > h_max + tol:
        raise InfeasiblePayloadError(m, h_max, rho.costs.size)
    if m >= h_max - tol:
        return LambdaSolution(0.0, h_max, 0, m, rule)

    if m == 0:
        # capped: smallest power of two zeroing every change; gibbs: the cap
        lam, it = (1.0, 0) if rule == "capped" else (LAMBDA_CAP, 0)
        while H(lam) > 0 and lam < LAMBDA_CAP:
            lam *= 2.0
            it += 1
        h = H(lam)
        if h > tol:
            raise BracketError("no lambda <= 2^64 gives zero entropy", h)
        return LambdaSolution(lam, h, it, m, rule)

    hi, it = 1.0, 0
    h_hi = H(hi)
    while h_hi >= m:
        if abs(h_hi - m) <= tol:
            return LambdaSolution(hi, h_hi, it, m, rule)
        if hi >= LAMBDA_CAP:
            raise BracketError(f"no lambda <= 2^64 brings entropy down to {m:g} bits", h_hi)
        hi *= 2.0
        h_hi = H(hi)
        it += 1
    if abs(h_hi - m) <= tol:
        return LambdaSolution(hi, h_hi, it, m, rule)
    lo = hi / 2.0 if hi > 1.0 else 0.0
    best = (abs(h_hi - m), hi, h_hi)
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        h_mid = H(mid)
        it += 1
        if abs(h_mid - m) < best[0]:
            best = (abs(h_mid - m), mid, h_mid)
        if abs(h_mid - m) <= tol:
            return LambdaSolution(mid, h_mid, it, m, rule)
        if h_mid > m:
            lo = mid
        else:
            hi = mid
    raise BracketError(f"bisection did not reach {m:g} bits within tolerance {tol:g}", best[2])


def sample_pattern(p: ChangeProbabilities, seed: int, threads: int = 1) -> np.ndarray:
    """Draw s in {-1, 0, +1} per pixel from a per-pixel counter-based uniform."""
    pc = p.p_change
    h = pc.shape[0]

    def run(rows):
        r0, r1 = rows
        u = uniform_grid(seed, pc.shape)[r0:r1]
        q = pc[r0:r1]
        return np.where(u < q, 1, np.where(u < 2.0 * q, -1, 0)).astype(np.int8)

    if threads <= 1:
        return run((0, h))
    edges = np.linspace(0, h, min(threads, h) + 1).round().astype(int)
    chunks = [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        return np.vstack(list(pool.map(run, chunks)))


def apply_pattern(x, s) -> np.ndarray:
    """``clip(x + s, 0, 255)``."""
    x = check_image(x)
    s = np.asarray(s)
    if s.shape != x.shape:
        raise ValueError(f"pattern shape {s.shape} does not match image {x.shape}")
    return np.clip(x.astype(np.int16) + s, 0, 255).astype(np.uint8)


def expected_distortion(p: ChangeProbabilities, rho: CostMap) -> float:
    if p.shape != rho.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {rho.shape}")
    return float(np.sum((2.0 * p.p_change * rho.costs).ravel()))


def pattern_to_bytes(s) -> bytes:
    s = np.asarray(s, dtype=np.int8)
    return formats.pack(b"PATT", s.shape, s)


def pattern_from_bytes(data: bytes) -> np.ndarray:
    (s,) = formats.unpack(data, b"PATT", ["i1"])
    if np.any(np.abs(s.astype(np.int16)) > 1):
        raise formats.FormatError("pattern values must be -1, 0 or +1")
    return s


@dataclass(frozen=True)
class EmbeddingResult:
    stego: np.ndarray
    pattern: np.ndarray
    probabilities: ChangeProbabilities
    solution: LambdaSolution
    expected_distortion: float

    @property
    def change_count(self) -> int:
        return int(np.count_nonzero(self.pattern))


def simulate_embedding(cover, rho: CostMap, alpha: float, rule: str = "capped", seed: int = 0) -> EmbeddingResult:
    """Solve for lambda at relative payload ``alpha``, sample and apply a pattern."""
    cover = check_image(cover)
    if rho.shape != cover.shape:
        raise ValueError(f"cost map {rho.shape} does not match cover {cover.shape}")
    sol = solve_lambda(rho, PayloadSpec(alpha, cover.size), rule)
    p = change_probs(rho, sol.lam, rule)
    s = sample_pattern(p, seed)
    return EmbeddingResult(apply_pattern(cover, s), s, p, sol, expected_distortion(p, rho))


class EmbeddingSimulator(TransformerMixin, BaseEstimator):
    """Covers -> simulated stegos, using ``cost`` (any estimator with ``cost_map``).

    Cover ``k`` of a batch is embedded with seed ``derive_seed(seed, k)``.
    """

    def __init__(self, cost=None, payload: float = 0.4, rule: str = "capped", seed: int = 0):
        self.cost = cost
        self.payload = payload
        self.rule = rule
        self.seed = seed

    def fit(self, X=None, y=None):
        _check_rule(self.rule)
        if self.cost is None:
            raise ValueError("EmbeddingSimulator needs a cost estimator")
        return self

    def transform(self, X):
        out = []
        for k, cover in enumerate(X):
            rho = self.cost.cost_map(cover)
            out.append(simulate_embedding(cover, rho, self.payload, self.rule, derive_seed(self.seed, k)).stego)
        return out
