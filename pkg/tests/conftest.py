import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def smooth_image(n=128, seed=0):
    """Sum of random separable sinusoids, rescaled to [0, 1]."""
    r = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:n, 0:n] / n
    u = np.zeros((n, n))
    for _ in range(8):
        a, b = r.uniform(1, 5, 2)
        c, d = r.uniform(0, 2 * np.pi, 2)
        u += np.sin(2 * np.pi * a * xx + c) * np.cos(2 * np.pi * b * yy + d)
    return (u - u.min()) / (u.max() - u.min())


@pytest.fixture
def smooth():
    return smooth_image()
