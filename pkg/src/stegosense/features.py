"""First-order residual histograms: the desk-scale steganalysis feature map."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .image_io import check_image

DEFAULT_T = 3


def residuals(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal and vertical first-order differences with mirror padding.

    Both maps have the image's shape; the last column (row) is zero because
    the mirrored neighbour equals the pixel itself.
    """
    x = np.asarray(img, dtype=np.int64)
    dh = np.zeros_like(x)
    dv = np.zeros_like(x)
    dh[:, :-1] = x[:, 1:] - x[:, :-1]
    dv[:-1, :] = x[1:, :] - x[:-1, :]
    return dh, dv


def residual_counts(img: np.ndarray, T: int = DEFAULT_T) -> np.ndarray:
    """Integer histogram counts, horizontal bins then vertical, each of length 2T+1."""
    dh, dv = residuals(img)
    nb = 2 * T + 1
    ch = np.bincount((np.clip(dh, -T, T) + T).ravel(), minlength=nb)
    cv = np.bincount((np.clip(dv, -T, T) + T).ravel(), minlength=nb)
    return np.concatenate([ch, cv]).astype(np.int64)


def residual_histogram(img: np.ndarray, T: int = DEFAULT_T) -> np.ndarray:
    """Normalized feature vector; each half sums to one."""
    img = check_image(img)
    return residual_counts(img, T) / float(img.size)


class ResidualHistogram(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping a sequence of images to a feature matrix."""

    def __init__(self, T: int = DEFAULT_T):
        self.T = T

    def fit(self, X, y=None):
        if self.T < 1:
            raise ValueError("T must be a positive integer")
        self.n_features_out_ = 2 * (2 * self.T + 1)
        return self

    def transform(self, X):
        return np.stack([residual_histogram(img, self.T) for img in X])
