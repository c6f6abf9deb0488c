"""Steganalyzer oracles: pure image scorers whose curvature defines cost.

An oracle maps an image to a finite real score. Detector-style oracles
return the probability that the image carries a message. For cost
computation the oracle is *bound* to one image; the bound object answers
"what would the score be if pixel (i, j) were v" without rebuilding the
whole image, which is what makes per-pixel finite differences affordable.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np
from scipy.special import expit

from .features import DEFAULT_T, residual_counts, residuals
from .image_io import check_image
from .linear_model import fold_standardization, make_logistic_pipeline

FORMAT_TAG = "stegosense-oracle"
FORMAT_VERSION = 1

# KV predictor residual, integer form; the real kernel is this divided by 12.
KV_KERNEL = np.array(
    [
        [-1, 2, -2, 2, -1],
        [2, -6, 8, -6, 2],
        [-2, 8, -12, 8, -2],
        [2, -6, 8, -6, 2],
        [-1, 2, -2, 2, -1],
    ],
    dtype=np.float64,
)
KV_SCALE = 12.0


def _check_edit(img: np.ndarray, i: int, j: int, v) -> None:
    h, w = img.shape
    if not (0 <= i < h and 0 <= j < w):
        raise IndexError(f"pixel ({i}, {j}) outside {h}x{w} image")
    if not 0 <= v <= 255:
        raise ValueError(f"intensity {v} outside [0, 255]")


class BoundOracle:
    """An oracle fixed to one image. The fallback rescans the edited image."""

    def __init__(self, oracle: "ModelOracle", img: np.ndarray):
        self.oracle = oracle
        self.img = img
        self._base = oracle.score(img)

    def score(self) -> float:
        return self._base

    def score_with_pixel(self, i: int, j: int, v: int) -> float:
        _check_edit(self.img, i, j, v)
        x = np.array(self.img)
        x[i, j] = v
        return self.oracle.score(x)

    def score_batch(self, values: np.ndarray, rows: tuple[int, int] | None = None) -> np.ndarray:
        """Scores for editing each pixel alone to ``values[i, j]``, over a row range."""
        r0, r1 = rows or (0, self.img.shape[0])
        out = np.empty((r1 - r0, self.img.shape[1]))
        for i in range(r0, r1):
            for j in range(self.img.shape[1]):
                out[i - r0, j] = self.score_with_pixel(i, j, int(values[i, j]))
        return out


class ModelOracle(ABC):
    """Contract for an image model: a pure, deterministic scorer."""

    kind = "abstract"

    @abstractmethod
    def score(self, img) -> float:
        """Score of the whole image."""

    def bind(self, img) -> BoundOracle:
        return BoundOracle(self, check_image(img))

    def score_with_pixel(self, img, i: int, j: int, v: int) -> float:
        """Score of ``img`` with pixel (i, j) replaced by ``v``. ``img`` is not modified.

        Each call binds afresh; callers editing many pixels of one image
        should use :meth:`bind` once and query the bound object.
        """
        img = check_image(img)
        _check_edit(img, i, j, v)
        return self.bind(img).score_with_pixel(i, j, v)


# -- filter + logistic ------------------------------------------------------


def _mirror_incidence(n: int, half: int = 2) -> np.ndarray:
    """P[i, o, a] = 1 when kernel tap ``a`` of the residual at ``i + o - half``
    reads pixel ``i`` under symmetric padding."""
    size = 2 * half + 1
    P = np.zeros((n, size, size))
    for i in range(n):
        for o in range(size):
            r = i + o - half
            if not 0 <= r < n:
                continue
            for a in range(size):
                p = r + a - half
                src = -p - 1 if p < 0 else (2 * n - 1 - p if p >= n else p)
                if src == i:
                    P[i, o, a] += 1
    return P


def kv_residual(img: np.ndarray) -> np.ndarray:
    """Integer-valued KV residual (still multiplied by 12) with mirror padding."""
    x = np.asarray(img, dtype=np.float64)
    padded = np.pad(x, 2, mode="symmetric")
    win = np.lib.stride_tricks.sliding_window_view(padded, (5, 5))
    return np.einsum("ijab,ab->ij", win, KV_KERNEL)


class FilterLogitOracle(ModelOracle):
    """``logistic(gain * mean|KV residual| + bias)``."""

    kind = "filter"

    def __init__(self, gain: float = 1.0, bias: float = 0.0):
        self.gain = float(gain)
        self.bias = float(bias)

    def _from_total(self, total, n: int):
        return expit(self.gain * (total / (KV_SCALE * n)) + self.bias)

    def score(self, img) -> float:
        img = check_image(img)
        return float(self._from_total(np.abs(kv_residual(img)).sum(), img.size))

    def bind(self, img) -> "_FilterBound":
        return _FilterBound(self, check_image(img))

    def __repr__(self):
        return f"FilterLogitOracle(gain={self.gain!r}, bias={self.bias!r})"


class _FilterBound(BoundOracle):
    # Residuals stay in integer units, so every update below is exact.

    def __init__(self, oracle: FilterLogitOracle, img: np.ndarray):
        self.oracle = oracle
        self.img = img
        self.x = img.astype(np.float64)
        self.R = kv_residual(img)
        self.total = np.abs(self.R).sum()
        self._base = float(oracle._from_total(self.total, img.size))
        h, w = img.shape
        self.Pr = _mirror_incidence(h)
        self.Pc = _mirror_incidence(w)
        self.Rpad = np.pad(self.R, 2)

    def _local_weights(self, i: int, j: int) -> np.ndarray:
        return self.Pr[i] @ KV_KERNEL @ self.Pc[j].T

    def score_with_pixel(self, i: int, j: int, v: int) -> float:
        _check_edit(self.img, i, j, v)
        delta = float(v) - self.x[i, j]
        old = self.Rpad[i:i + 5, j:j + 5]
        new = old + delta * self._local_weights(i, j)
        total = self.total + (np.abs(new).sum() - np.abs(old).sum())
        return float(self.oracle._from_total(total, self.img.size))

    def score_batch(self, values, rows=None):
        r0, r1 = rows or (0, self.img.shape[0])
        w = self.img.shape[1]
        delta = np.asarray(values, dtype=np.float64)[r0:r1] - self.x[r0:r1]
        W = np.einsum("ioa,ab,jpb->ijop", self.Pr[r0:r1], KV_KERNEL, self.Pc)
        old = np.lib.stride_tricks.sliding_window_view(self.Rpad[r0:r1 + 4], (5, 5))
        assert old.shape[:2] == (r1 - r0, w)
        new = old + delta[:, :, None, None] * W
        change = np.abs(new).sum(axis=(2, 3)) - np.abs(old).sum(axis=(2, 3))
        return self.oracle._from_total(self.total + change, self.img.size)


# -- residual histogram + logistic -----------------------------------------


class LinearResidualOracle(ModelOracle):
    """``logistic(w . f(X) + bias)`` on first-order residual histograms."""

    kind = "linear"

    def __init__(self, weights, bias: float = 0.0, T: int = DEFAULT_T):
        if T < 1:
            raise ValueError("T must be a positive integer")
        w = np.array(weights, dtype=np.float64).ravel()
        if w.size != 2 * (2 * T + 1):
            raise ValueError(f"expected {2 * (2 * T + 1)} weights for T={T}, got {w.size}")
        w.flags.writeable = False
        self.weights = w
        self.bias = float(bias)
        self.T = int(T)
        self.training_accuracy = None

    @classmethod
    def zeros(cls, T: int = DEFAULT_T) -> "LinearResidualOracle":
        return cls(np.zeros(2 * (2 * T + 1)), 0.0, T)

    def _from_counts(self, counts, n: int):
        return expit((counts / float(n) * self.weights).sum(axis=-1) + self.bias)

    def score(self, img) -> float:
        img = check_image(img)
        return float(self._from_counts(residual_counts(img, self.T), img.size))

    def bind(self, img) -> "_LinearBound":
        return _LinearBound(self, check_image(img))

    def __repr__(self):
        return f"LinearResidualOracle(T={self.T}, bias={self.bias!r})"


class _LinearBound(BoundOracle):
    def __init__(self, oracle: LinearResidualOracle, img: np.ndarray):
        self.oracle = oracle
        self.img = img
        self.x = img.astype(np.int64)
        self.T = oracle.T
        self.counts = residual_counts(img, self.T)
        self.dh, self.dv = residuals(img)
        self._base = float(oracle._from_counts(self.counts, img.size))

    def _bin(self, d):
        return np.clip(d, -self.T, self.T) + self.T

    def _edits(self, i, j, v):
        """(old bin, new bin) pairs for every residual touching pixel (i, j)."""
        h, w = self.x.shape
        off = 2 * self.T + 1
        x = self.x
        out = []
        if j >= 1:
            out.append((self._bin(self.dh[i, j - 1]), self._bin(v - x[i, j - 1])))
        if j <= w - 2:
            out.append((self._bin(self.dh[i, j]), self._bin(x[i, j + 1] - v)))
        if i >= 1:
            out.append((off + self._bin(self.dv[i - 1, j]), off + self._bin(v - x[i - 1, j])))
        if i <= h - 2:
            out.append((off + self._bin(self.dv[i, j]), off + self._bin(x[i + 1, j] - v)))
        return out

    def score_with_pixel(self, i, j, v):
        _check_edit(self.img, i, j, v)
        counts = self.counts.copy()
        for old, new in self._edits(i, j, int(v)):
            counts[old] -= 1
            counts[new] += 1
        return float(self.oracle._from_counts(counts, self.img.size))

    def score_batch(self, values, rows=None):
        h, w = self.x.shape
        r0, r1 = rows or (0, h)
        off = 2 * self.T + 1
        v = np.asarray(values, dtype=np.int64)[r0:r1]
        x = self.x
        ii, jj = np.meshgrid(np.arange(r0, r1), np.arange(w), indexing="ij")
        flat = np.arange(ii.size).reshape(ii.shape)
        C = np.broadcast_to(self.counts, (ii.size, self.counts.size)).copy()

        def apply(mask, old_bin, new_bin):
            idx = flat[mask]
            np.add.at(C, (idx, old_bin[mask]), -1)
            np.add.at(C, (idx, new_bin[mask]), 1)

        xs = x[r0:r1]
        left = np.zeros_like(xs)
        left[:, 1:] = xs[:, :-1]
        right = np.zeros_like(xs)
        right[:, :-1] = xs[:, 1:]
        dh_prev = np.zeros_like(xs)
        dh_prev[:, 1:] = self.dh[r0:r1, :-1]
        apply(jj >= 1, self._bin(dh_prev), self._bin(v - left))
        apply(jj <= w - 2, self._bin(self.dh[r0:r1]), self._bin(right - v))
        up = x[np.maximum(ii - 1, 0), jj]
        down = x[np.minimum(ii + 1, h - 1), jj]
        dv_prev = self.dv[np.maximum(ii - 1, 0), jj]
        apply(ii >= 1, off + self._bin(dv_prev), off + self._bin(v - up))
        apply(ii <= h - 2, off + self._bin(self.dv[r0:r1]), off + self._bin(down - v))
        return self.oracle._from_counts(C, self.img.size).reshape(ii.shape)


# -- single-pixel polynomial fixtures ---------------------------------------


class PolynomialPixelOracle(ModelOracle):
    """``sum_k coefficients[k] * x[target] ** k``; depends on one pixel only."""

    kind = "polynomial"

    def __init__(self, target: tuple[int, int], coefficients):
        self.target = (int(target[0]), int(target[1]))
        self.coefficients = tuple(float(c) for c in coefficients)

    def _poly(self, x):
        x = np.asarray(x, dtype=np.float64)
        return sum(c * x ** k for k, c in enumerate(self.coefficients))

    def score(self, img) -> float:
        img = check_image(img)
        return float(self._poly(img[self.target]))

    def bind(self, img):
        return _PolynomialBound(self, check_image(img))


class _PolynomialBound(BoundOracle):
    def score_with_pixel(self, i, j, v):
        _check_edit(self.img, i, j, v)
        if (i, j) != self.oracle.target:
            return self._base
        return float(self.oracle._poly(v))

    def score_batch(self, values, rows=None):
        r0, r1 = rows or (0, self.img.shape[0])
        out = np.full((r1 - r0, self.img.shape[1]), self._base)
        ti, tj = self.oracle.target
        if r0 <= ti < r1:
            out[ti - r0, tj] = self.oracle._poly(values[ti, tj])
        return out


class QuadraticTestOracle(PolynomialPixelOracle):
    """``a * x**2 + b * x + c`` at ``target``."""

    def __init__(self, target, a: float = 1.0, b: float = 0.0, c: float = 0.0):
        super().__init__(target, (c, b, a))
        self.a, self.b, self.c = float(a), float(b), float(c)


# -- training ---------------------------------------------------------------


def train_linear_oracle(
    covers, stegos, epochs: int = 100, rate: float = 0.1, seed: int = 0, T: int = DEFAULT_T, l2: float = 0.0
) -> LinearResidualOracle:
    """Fit a :class:`LinearResidualOracle` to cover (label 0) / stego (label 1) pairs.

    Features are standardized for the SGD fit and the standardization is
    folded back into the weights, so the oracle scores raw histograms.
    The final training accuracy is stored on ``training_accuracy``.
    """
    covers, stegos = list(covers), list(stegos)
    if not covers or len(covers) != len(stegos):
        raise ValueError(f"need equal, nonempty cover/stego lists (got {len(covers)} and {len(stegos)})")
    from .features import residual_histogram

    X = np.stack([residual_histogram(im, T) for im in covers + stegos])
    y = np.r_[np.zeros(len(covers)), np.ones(len(stegos))].astype(int)
    pipe = make_logistic_pipeline(epochs=epochs, rate=rate, l2=l2, seed=seed).fit(X, y)
    w, b = fold_standardization(pipe)
    oracle = LinearResidualOracle(w, b, T)
    pred = np.array([oracle.score(im) > 0.5 for im in covers + stegos])
    oracle.training_accuracy = float(np.mean(pred == y))
    return oracle


# -- text serialization -----------------------------------------------------


def dump_oracle(oracle: ModelOracle) -> str:
    """Versioned plain-text form: a header line, then whitespace-separated numbers."""
    if isinstance(oracle, LinearResidualOracle):
        nums = list(oracle.weights) + [oracle.bias]
        header = f"{FORMAT_TAG} {FORMAT_VERSION} linear {oracle.weights.size} {oracle.T}"
    elif isinstance(oracle, FilterLogitOracle):
        nums = [oracle.gain, oracle.bias]
        header = f"{FORMAT_TAG} {FORMAT_VERSION} filter 2 0"
    else:
        raise TypeError(f"cannot serialize {type(oracle).__name__}")
    return header + "\n" + " ".join(repr(float(v)) for v in nums) + "\n"


def parse_oracle(text: str) -> ModelOracle:
    lines = text.split("\n", 1)
    head = lines[0].split()
    if len(head) != 5 or head[0] != FORMAT_TAG:
        raise ValueError(f"not an oracle file: {lines[0]!r}")
    if int(head[1]) != FORMAT_VERSION:
        raise ValueError(f"unsupported oracle format version {head[1]}")
    kind, dims, T = head[2], int(head[3]), int(head[4])
    nums = [float(t) for t in (lines[1] if len(lines) > 1 else "").split()]
    if kind == "linear":
        if len(nums) != dims + 1:
            raise ValueError(f"expected {dims + 1} numbers, found {len(nums)}")
        return LinearResidualOracle(nums[:-1], nums[-1], T)
    if kind == "filter":
        if len(nums) != 2:
            raise ValueError(f"expected 2 numbers, found {len(nums)}")
        return FilterLogitOracle(*nums)
    raise ValueError(f"unknown oracle kind {kind!r}")


def save_oracle(path, oracle: ModelOracle) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dump_oracle(oracle))


def load_oracle(path) -> ModelOracle:
    with open(path, encoding="ascii") as fh:
        return parse_oracle(fh.read())
