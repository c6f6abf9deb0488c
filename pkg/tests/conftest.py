import numpy as np
import pytest
from scipy import ndimage
from scipy.special import expit

from stegosense.image_io import synth_cover

_ACCEPTANCE = []


@pytest.fixture
def verdict():
    """Record one acceptance line; the assertion stays with the caller."""

    def record(name, ok, detail=""):
        _ACCEPTANCE.append((name, bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


@pytest.fixture
def noise32():
    return synth_cover("smoothed-noise(3)", 32, 32, 11)


KV = np.array(
    [[-1, 2, -2, 2, -1], [2, -6, 8, -6, 2], [-2, 8, -12, 8, -2], [2, -6, 8, -6, 2], [-1, 2, -2, 2, -1]]
) / 12.0


def reference_filter_score(img, gain, bias):
    """Full rescoring through scipy's mirror-mode correlation."""
    r = ndimage.correlate(np.asarray(img, dtype=np.float64), KV, mode="reflect")
    return float(expit(gain * np.mean(np.abs(r)) + bias))


def reference_linear_score(img, weights, bias, T=3):
    """Histogram built pixel by pixel with Python loops."""
    x = np.asarray(img, dtype=np.int64)
    h, w = x.shape
    hist = np.zeros(2 * (2 * T + 1))
    for i in range(h):
        for j in range(w):
            dh = x[i, j + 1] - x[i, j] if j + 1 < w else 0
            dv = x[i + 1, j] - x[i, j] if i + 1 < h else 0
            hist[max(-T, min(T, dh)) + T] += 1
            hist[2 * T + 1 + max(-T, min(T, dv)) + T] += 1
    return float(expit(np.dot(hist / (h * w), weights) + bias))
