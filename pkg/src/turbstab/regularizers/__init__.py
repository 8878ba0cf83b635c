"""Proximal maps ``argmin_u J(u) + mu/2 ||u - v||^2`` for interchangeable regularizers.

``J`` is one of isotropic total variation (``"tv"``), nonlocal total
variation (``"nltv"``) or the l1 norm of framelet detail coefficients
(``"frame"``). All three are solved by split Bregman.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .framelet import (
    FrameCoefficients,
    Framelet,
    TightFrame,
    frame_analysis,
    frame_prox,
    frame_synthesis,
    frame_value,
    scalar_soft_threshold,
)
from .nltv import NlWeights, compute_nl_weights, nltv_prox, nltv_value
from .tv import tv_prox, tv_value, vector_soft_threshold

KINDS = ("tv", "nltv", "frame")

__all__ = [
    "KINDS",
    "TVParams",
    "NLTVParams",
    "FrameParams",
    "RegularizerSpec",
    "prox",
    "regularizer_value",
    "objective",
    "FrameCoefficients",
    "Framelet",
    "TightFrame",
    "NlWeights",
    "compute_nl_weights",
    "frame_analysis",
    "frame_prox",
    "frame_synthesis",
    "frame_value",
    "nltv_prox",
    "nltv_value",
    "scalar_soft_threshold",
    "tv_prox",
    "tv_value",
    "vector_soft_threshold",
]


@dataclass
class TVParams:
    inner_iterations: int = 10
    rho: float | None = None  # None: use mu
    gs_sweeps: int = 4


@dataclass
class NLTVParams:
    patch_radius: int = 2
    search_radius: int = 7
    h: float = 0.1
    neighbors: int = 10
    inner_iterations: int = 5
    rho: float | None = None


@dataclass
class FrameParams:
    levels: int = 2
    inner_iterations: int = 10
    rho: float | None = None


@dataclass
class RegularizerSpec:
    kind: str = "tv"
    tv: TVParams = field(default_factory=TVParams)
    nltv: NLTVParams = field(default_factory=NLTVParams)
    frame: FrameParams = field(default_factory=FrameParams)

    def validate(self) -> None:
        if self.kind == "curvelet":
            raise NotImplementedError(
                "curvelet regularizer is not implemented; plug a curvelet "
                "TightFrame into regularizers.frame_prox to add it")
        if self.kind not in KINDS:
            raise ValueError(f"unknown regularizer kind {self.kind!r}, expected one of {KINDS}")
        params = {"tv": self.tv, "nltv": self.nltv, "frame": self.frame}[self.kind]
        if params.inner_iterations < 1:
            raise ValueError("inner_iterations must be >= 1")
        if params.rho is not None and not params.rho > 0:
            raise ValueError("rho must be positive")
        if self.kind == "tv" and self.tv.gs_sweeps < 1:
            raise ValueError("gs_sweeps must be >= 1")
        if self.kind == "nltv":
            p = self.nltv
            if p.patch_radius < 0 or p.neighbors < 1 or not p.h > 0:
                raise ValueError("invalid nltv parameters")
            if p.search_radius < max(p.patch_radius, 1):
                raise ValueError("search_radius must be >= patch_radius and >= 1")
        if self.kind == "frame" and self.frame.levels < 1:
            raise ValueError("frame levels must be >= 1")


def _weights(spec: RegularizerSpec, v) -> NlWeights:
    p = spec.nltv
    return compute_nl_weights(v, p.patch_radius, p.search_radius, p.h, p.neighbors)


def prox(spec: RegularizerSpec, v, mu: float, trace: list | None = None,
         weights: NlWeights | None = None) -> np.ndarray:
    """Approximate ``argmin_u J(u) + mu/2 ||u - v||^2`` for the chosen ``J``.

    For NLTV the weights are computed from ``v`` unless given.
    """
    spec.validate()
    if not mu > 0:
        raise ValueError("mu must be positive")
    v = np.asarray(v, dtype=np.float64)
    if spec.kind == "tv":
        p = spec.tv
        return tv_prox(v, mu, p.inner_iterations, p.rho, p.gs_sweeps, trace=trace)
    if spec.kind == "nltv":
        w = weights if weights is not None else _weights(spec, v)
        return nltv_prox(v, w, mu, spec.nltv.inner_iterations, spec.nltv.rho, trace=trace)
    p = spec.frame
    return frame_prox(v, mu, p.levels, p.inner_iterations, p.rho, trace=trace)


def regularizer_value(spec: RegularizerSpec, u, weights: NlWeights | None = None) -> float:
    """``J(u)``; NLTV needs the weight graph the prox used."""
    if spec.kind == "tv":
        return tv_value(u)
    if spec.kind == "nltv":
        if weights is None:
            raise ValueError("NLTV value requires a weight graph")
        return nltv_value(u, weights)
    return frame_value(u, spec.frame.levels)


def objective(spec: RegularizerSpec, u, v, mu: float, weights: NlWeights | None = None) -> float:
    """``J(u) + mu/2 ||u - v||^2``."""
    if spec.kind == "nltv" and weights is None:
        weights = _weights(spec, v)
    diff = np.asarray(u, dtype=np.float64) - np.asarray(v, dtype=np.float64)
    return regularizer_value(spec, u, weights) + 0.5 * mu * float(np.sum(diff**2))
