"""Reconstruction quality and data-fidelity measures (peak intensity 1.0)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .image_core import FlowField, warp_apply


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def rmse(a, b) -> float:
    a, b = _pair(a, b)
    return math.sqrt(float(np.mean((a - b) ** 2)))


def psnr(a, b) -> float:
    """PSNR in dB against peak 1.0; ``inf`` for identical images."""
    e = rmse(a, b)
    if e == 0:
        return math.inf
    return 20.0 * math.log10(1.0 / e)


def fidelity(u, frames, flows) -> float:
    """``sum_i ||Phi_i u - f_i||^2 / (N * pixels)``."""
    if len(frames) != len(flows) or not frames:
        raise ValueError("need one flow per frame and at least one frame")
    u = np.asarray(u, dtype=np.float64)
    total = 0.0
    for f, phi in zip(frames, flows):
        wu, f = _pair(warp_apply(u, phi), f)
        total += float(np.sum((wu - f) ** 2))
    return total / (len(frames) * u.size)


def flow_epe(estimated: list[FlowField], truth: list[FlowField]) -> float:
    """Mean endpoint error over all frames and pixels."""
    if len(estimated) != len(truth) or not estimated:
        raise ValueError("flow lists must be non-empty and of equal length")
    errs = []
    for e, t in zip(estimated, truth):
        if e.shape != t.shape:
            raise ValueError(f"flow shape mismatch: {e.shape} vs {t.shape}")
        errs.append(np.hypot(e.dx - t.dx, e.dy - t.dy))
    return float(np.mean(errs))


def format_value(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return f"{x:.6f}" if x == 0 else f"{x:.6g}"


@dataclass
class MetricReport:
    rmse: float
    psnr: float
    flow_epe: float | None = None

    @classmethod
    def compute(cls, a, b, estimated=None, truth=None) -> "MetricReport":
        epe = flow_epe(estimated, truth) if estimated is not None else None
        return cls(rmse(a, b), psnr(a, b), epe)

    def lines(self) -> list[str]:
        out = [f"rmse={format_value(self.rmse)}", f"psnr={format_value(self.psnr)}"]
        if self.flow_epe is not None:
            out.append(f"flow_epe={format_value(self.flow_epe)}")
        return out
