"""Per-pixel embedding costs.

The oracle-driven cost is the clamped second derivative of the oracle's
score with respect to each pixel, estimated by a 5-point stencil, then
min-max scaled, box-smoothed and made wet at saturated pixels. HILL is
provided as the classical baseline.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import formats
from .image_io import check_image
from .oracles import ModelOracle

EPS = 1e-6
WET = 1e10
DEFAULT_FILTER_SIZE = 13

KB_KERNEL = np.array([[-1, 2, -1], [2, -4, 2], [-1, 2, -1]], dtype=np.float64)
KB_SCALE = 4.0


@dataclass(frozen=True, eq=False)
class CostMap:
    costs: np.ndarray
    wet: np.ndarray

    def __post_init__(self):
        costs = np.array(self.costs, dtype=np.float64)
        wet = np.array(self.wet, dtype=bool)
        if costs.ndim != 2 or costs.shape != wet.shape:
            raise ValueError("costs and wet mask must be 2-D arrays of equal shape")
        if not np.all(np.isfinite(costs)) or np.any(costs < 0):
            raise ValueError("costs must be finite and nonnegative")
        costs.flags.writeable = False
        wet.flags.writeable = False
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "wet", wet)

    @property
    def shape(self) -> tuple[int, int]:
        return self.costs.shape

    def __eq__(self, other):
        if not isinstance(other, CostMap):
            return NotImplemented
        return np.array_equal(self.costs, other.costs) and np.array_equal(self.wet, other.wet)

    def to_bytes(self) -> bytes:
        return formats.pack(b"COST", self.shape, self.costs.astype("<f8"), self.wet.astype(np.uint8))

    @classmethod
    def from_bytes(cls, data: bytes) -> "CostMap":
        costs, wet = formats.unpack(data, b"COST", ["<f8", "u1"])
        if np.any(wet > 1):
            raise formats.FormatError("wet mask bytes must be 0 or 1")
        return cls(costs, wet.astype(bool))

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "CostMap":
        return cls.from_bytes(Path(path).read_bytes())


def saturated(img: np.ndarray) -> np.ndarray:
    return (img == 0) | (img == 255)


def _row_chunks(h: int, threads: int) -> list[tuple[int, int]]:
    n = max(1, min(threads, h))
    edges = np.linspace(0, h, n + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def second_derivative_map(oracle: ModelOracle, img, threads: int = 1) -> np.ndarray:
    """Per-pixel 4th-order estimate of the oracle's second derivative.

    Stencil values ``x +- 1``, ``x +- 2`` are clamped to [0, 255]. The
    unaltered score is computed once and shared; the stencil is applied to
    score differences from it, which is algebraically the same formula
    because its weights sum to zero, and keeps pixels the oracle ignores at
    exactly zero.
    """
    img = check_image(img)
    bound = oracle.bind(img)
    s0 = bound.score()
    x = img.astype(np.int64)
    shifted = {d: np.clip(x + d, 0, 255) for d in (-2, -1, 1, 2)}

    def run(rows):
        diff = {d: bound.score_batch(v, rows) - s0 for d, v in shifted.items()}
        return (-diff[-2] + 16.0 * diff[-1] + 16.0 * diff[1] - diff[2]) / 12.0

    chunks = _row_chunks(img.shape[0], threads)
    if len(chunks) == 1:
        return run(chunks[0])
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        return np.vstack(list(pool.map(run, chunks)))


def clamp_negative(raw: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(raw, dtype=np.float64), 0.0)


def scale_linear(raw: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Min-max map to [0, 1]; a constant map becomes 0.5 everywhere.

    With ``mask``, the range is taken over masked pixels only and the rest
    are clipped into [0, 1].
    """
    raw = np.asarray(raw, dtype=np.float64)
    vals = raw if mask is None else raw[mask]
    if vals.size == 0:
        return np.full(raw.shape, 0.5)
    lo, hi = vals.min(), vals.max()
    if hi == lo:
        return np.full(raw.shape, 0.5)
    return np.clip((raw - lo) / (hi - lo), 0.0, 1.0)


def _window_sum(a: np.ndarray, k: int, axis: int) -> np.ndarray:
    win = np.lib.stride_tricks.sliding_window_view(a, k, axis=axis)
    return win.sum(axis=-1)


def average_filter(values: np.ndarray, k: int) -> np.ndarray:
    """Mean over each k x k neighbourhood with mirror padding.

    Windows are summed directly (rows, then columns) rather than through
    running sums, so the filter is exactly monotone.
    """
    if int(k) != k or k < 1 or k % 2 == 0:
        raise ValueError(f"filter size must be a positive odd integer, got {k}")
    values = np.asarray(values, dtype=np.float64)
    if k == 1:
        return values.copy()
    r = k // 2
    padded = np.pad(values, r, mode="symmetric")
    return _window_sum(_window_sum(padded, k, 0), k, 1) / (k * k)


def cost_from_sensitivity(raw: np.ndarray, img, k: int = DEFAULT_FILTER_SIZE) -> CostMap:
    """Everything in :func:`build_cost_map` after the derivative estimate."""
    img = check_image(img)
    wet = saturated(img)
    smoothed = average_filter(scale_linear(clamp_negative(raw), ~wet), k)
    costs = np.maximum(smoothed, EPS)
    costs[wet] = WET
    return CostMap(costs, wet)


def build_cost_map(oracle: ModelOracle, img, k: int = DEFAULT_FILTER_SIZE, threads: int = 1) -> CostMap:
    """Oracle-curvature cost map; saturated pixels are wet."""
    img = check_image(img)
    return cost_from_sensitivity(second_derivative_map(oracle, img, threads), img, k)


def _correlate_symmetric(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    r = kernel.shape[0] // 2
    win = np.lib.stride_tricks.sliding_window_view(np.pad(x, r, mode="symmetric"), kernel.shape)
    return np.einsum("ijab,ab->ij", win, kernel)


def hill_residual(img) -> np.ndarray:
    """Absolute KerBohme high-pass residual."""
    img = check_image(img)
    return np.abs(_correlate_symmetric(img.astype(np.float64), KB_KERNEL)) / KB_SCALE


def hill_cost(img, residual: np.ndarray | None = None) -> CostMap:
    """HILL baseline: ``1 / max(EPS, avg15(avg3(|KB residual|)))``.

    ``residual`` overrides the computed absolute residual (useful to probe
    how costs respond to residual magnitude).
    """
    img = check_image(img)
    if residual is None:
        residual = hill_residual(img)
    smooth = average_filter(average_filter(residual, 3), 15)
    costs = 1.0 / np.maximum(smooth, EPS)
    wet = saturated(img)
    costs[wet] = WET
    return CostMap(costs, wet)


def additive_distortion(x, y, rho: CostMap) -> float:
    """Sum of rho over changed pixels, for ternary (|x - y| <= 1) changes."""
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape != y.shape or x.shape != rho.shape:
        raise ValueError(f"shape mismatch: {x.shape}, {y.shape}, {rho.shape}")
    diff = np.abs(x - y)
    if np.any(diff > 1):
        raise ValueError("stego differs from cover by more than 1 at some pixel")
    return float(np.sum(rho.costs * diff))


# -- estimator wrappers -----------------------------------------------------


class SensitivityCost(TransformerMixin, BaseEstimator):
    """Oracle-curvature cost as a transformer: images -> cost arrays."""

    def __init__(self, oracle: ModelOracle = None, filter_size: int = DEFAULT_FILTER_SIZE, threads: int = 1):
        self.oracle = oracle
        self.filter_size = filter_size
        self.threads = threads

    def fit(self, X=None, y=None):
        if self.oracle is None:
            raise ValueError("SensitivityCost needs an oracle")
        average_filter(np.zeros((1, 1)), self.filter_size)
        return self

    def cost_map(self, img) -> CostMap:
        return build_cost_map(self.oracle, img, self.filter_size, self.threads)

    def transform(self, X):
        return np.stack([self.cost_map(img).costs for img in X])


class HillCost(TransformerMixin, BaseEstimator):
    """HILL cost as a transformer: images -> cost arrays."""

    def fit(self, X=None, y=None):
        return self

    def cost_map(self, img) -> CostMap:
        return hill_cost(img)

    def transform(self, X):
        return np.stack([hill_cost(img).costs for img in X])
