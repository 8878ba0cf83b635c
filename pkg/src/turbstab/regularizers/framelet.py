"""Undecimated piecewise-linear B-spline framelet and the tight-frame l1 prox.

The 1-D masks are

    h0 = [1, 2, 1] / 4,   h1 = [1, 0, -1] * sqrt(2) / 4,   h2 = [-1, 2, -1] / 4

and satisfy ``sum_k |h_k(w)|^2 = 1``. The 2-D transform is the tensor
product (9 subbands per level); level ``l`` uses masks dilated by
``2**(l-1)`` (a trous) on the lowpass output of the previous level. Borders
use half-sample symmetric extension, which coincides with edge replication
for the first level and keeps every dilated level exactly tight.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASKS = (
    np.array([1.0, 2.0, 1.0]) / 4.0,
    np.array([1.0, 0.0, -1.0]) * np.sqrt(2.0) / 4.0,
    np.array([-1.0, 2.0, -1.0]) / 4.0,
)

# subband k = 3 * (mask along y) + (mask along x); k = 0 is the lowpass
SUBBANDS = [(i, j) for i in range(3) for j in range(3)]


@dataclass
class FrameCoefficients:
    """Framelet coefficients: ``details[l, k - 1]`` is subband k of level l+1."""

    details: np.ndarray  # (levels, 8, height, width)
    lowpass: np.ndarray  # (height, width), lowpass of the coarsest level

    def __post_init__(self):
        if self.details.ndim != 4 or self.details.shape[1] != 8:
            raise ValueError(f"details must have shape (levels, 8, h, w), got {self.details.shape}")
        if self.details.shape[2:] != self.lowpass.shape:
            raise ValueError("lowpass shape does not match detail subbands")

    @property
    def levels(self) -> int:
        return self.details.shape[0]

    def energy(self) -> float:
        return float(np.sum(self.details**2) + np.sum(self.lowpass**2))

    def to_array(self) -> np.ndarray:
        """Stack as ``(levels * 8 + 1, h, w)``; the last slice is the lowpass."""
        h, w = self.lowpass.shape
        return np.concatenate([self.details.reshape(-1, h, w), self.lowpass[None]])

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "FrameCoefficients":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 3 or (arr.shape[0] - 1) % 8 or arr.shape[0] < 9:
            raise ValueError(f"malformed coefficient stack of shape {arr.shape}")
        levels = (arr.shape[0] - 1) // 8
        return cls(arr[:-1].reshape(levels, 8, *arr.shape[1:]).copy(), arr[-1].copy())


def _filter(a: np.ndarray, mask: np.ndarray, dil: int, axis: int) -> np.ndarray:
    """out[i] = sum_k mask[k] * a_ext[i + (k - 1) * dil] along ``axis``."""
    a = np.moveaxis(a, axis, -1)
    n = a.shape[-1]
    pad = [(0, 0)] * (a.ndim - 1) + [(dil, dil)]
    p = np.pad(a, pad, mode="symmetric")
    out = mask[0] * p[..., 0:n] + mask[1] * p[..., dil:dil + n] + mask[2] * p[..., 2 * dil:2 * dil + n]
    return np.moveaxis(out, -1, axis)


def _filter_adjoint(y: np.ndarray, mask: np.ndarray, dil: int, axis: int) -> np.ndarray:
    y = np.moveaxis(y, axis, -1)
    n = y.shape[-1]
    p = np.zeros(y.shape[:-1] + (n + 2 * dil,))
    p[..., 0:n] += mask[0] * y
    p[..., dil:dil + n] += mask[1] * y
    p[..., 2 * dil:2 * dil + n] += mask[2] * y
    out = p[..., dil:dil + n].copy()
    # fold the symmetric extension back onto the samples it copied
    out[..., 0:dil] += p[..., 0:dil][..., ::-1]
    out[..., n - dil:n] += p[..., n + dil:n + 2 * dil][..., ::-1]
    return np.moveaxis(out, -1, axis)


def _check_levels(shape, levels: int) -> None:
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if min(shape) < 2**levels:
        raise ValueError(f"image {shape} too small for {levels} framelet levels")


def frame_analysis(u, levels: int = 2) -> FrameCoefficients:
    """Multi-level undecimated framelet decomposition of ``u``."""
    low = np.asarray(u, dtype=np.float64)
    _check_levels(low.shape, levels)
    details = np.empty((levels, 8) + low.shape)
    for lev in range(levels):
        dil = 2**lev
        along_y = [_filter(low, m, dil, 0) for m in MASKS]
        bands = [_filter(along_y[i], MASKS[j], dil, 1) for i, j in SUBBANDS]
        details[lev] = bands[1:]
        low = bands[0]
    return FrameCoefficients(details, low)


def frame_synthesis(c: FrameCoefficients) -> np.ndarray:
    """Adjoint of :func:`frame_analysis`; also its inverse since W^T W = I."""
    if not isinstance(c, FrameCoefficients):
        c = FrameCoefficients.from_array(c)
    _check_levels(c.lowpass.shape, c.levels)
    low = c.lowpass
    for lev in reversed(range(c.levels)):
        dil = 2**lev
        bands = [low] + list(c.details[lev])
        acc = [np.zeros_like(low) for _ in range(3)]
        for (i, j), band in zip(SUBBANDS, bands):
            acc[i] += _filter_adjoint(band, MASKS[j], dil, 1)
        low = sum(_filter_adjoint(acc[i], MASKS[i], dil, 0) for i in range(3))
    return low


def scalar_soft_threshold(x, t: float):
    """``sign(x) * max(|x| - t, 0)``, elementwise."""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    r = np.sign(x) * np.maximum(np.abs(x) - t, 0.0)
    return float(r) if np.ndim(r) == 0 else r


class TightFrame:
    """Analysis/synthesis pair with ``W^T W = I`` acting on coefficient stacks.

    ``penalized`` marks which stacked slices enter the l1 norm. Any other
    tight frame can plug into :func:`frame_prox` by subclassing.
    """

    def analysis(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def synthesis(self, c: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def penalized(self, c: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Framelet(TightFrame):
    def __init__(self, levels: int = 2):
        self.levels = levels

    def analysis(self, u):
        return frame_analysis(u, self.levels).to_array()

    def synthesis(self, c):
        return frame_synthesis(FrameCoefficients.from_array(c))

    def penalized(self, c):
        mask = np.ones(c.shape[0], dtype=bool)
        mask[-1] = False
        return mask


def frame_value(u, levels: int = 2, frame: TightFrame | None = None) -> float:
    """l1 norm of the detail coefficients (the lowpass is not penalized)."""
    frame = frame or Framelet(levels)
    c = frame.analysis(np.asarray(u, dtype=np.float64))
    return float(np.sum(np.abs(c[frame.penalized(c)])))


def frame_prox(v, mu: float, levels: int = 2, inner_iterations: int = 10,
               rho: float | None = None, frame: TightFrame | None = None,
               trace: list | None = None) -> np.ndarray:
    """Split Bregman solve of ``argmin_u ||W u||_1 + mu/2 ||u - v||^2``.

    Tightness gives the closed form u-update
    ``u = (mu v + rho W^T (d - b)) / (mu + rho)``.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    rho = mu if rho is None else rho
    if rho <= 0:
        raise ValueError("rho must be positive")
    v = np.asarray(v, dtype=np.float64)
    frame = frame or Framelet(levels)

    def l1(c):
        return float(np.sum(np.abs(c[mask])))

    def shrink(z):
        out = z.copy()
        out[mask] = scalar_soft_threshold(z[mask], 1.0 / rho)
        return out

    wu = frame.analysis(v)
    mask = frame.penalized(wu)
    d = shrink(wu)
    b = wu - d
    u = v.copy()
    best, best_obj = u, l1(wu)
    for _ in range(inner_iterations):
        u = (mu * v + rho * frame.synthesis(d - b)) / (mu + rho)
        wu = frame.analysis(u)
        d = shrink(wu + b)
        b = b + wu - d
        obj = l1(wu) + 0.5 * mu * float(np.sum((u - v) ** 2))
        if obj <= best_obj:
            best, best_obj = u, obj
        if trace is not None:
            trace.append(best_obj)
    return best
