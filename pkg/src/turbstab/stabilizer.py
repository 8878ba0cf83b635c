"""Alternating reconstruction of a static scene from turbulence-warped frames.

Starting from the temporal average, each outer iteration

1. estimates the flow ``phi_i`` mapping the current ``u`` onto every frame,
2. runs inner iterations of a gradient step on
   ``1/2 sum_i ||Phi_i u - g_i||^2`` followed by the regularizer prox with
   weight ``mu = lambda / delta`` (by default the prox output is relaxed
   toward the gradient step so the data term never increases),
3. adds the residual back, ``g_i <- g_i + f_i - Phi_i u`` (Bregman update).

``g_i`` starts as ``f_i`` and persists across outer iterations.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .image_core import FlowField, WarpOperator, as_image
from .optical_flow import FlowParams, estimate_flow
from .regularizers import RegularizerSpec, prox, regularizer_value, compute_nl_weights

log = logging.getLogger(__name__)


class NonFiniteError(FloatingPointError):
    """A solver phase produced NaN or Inf."""


@dataclass
class StabilizerConfig:
    delta: float | None = None  # None: 0.5 / N
    lam: float = 10.0
    outer_iterations: int = 3
    inner_iterations: int = 20
    fidelity_tolerance: float = 1e-5
    inner_tolerance: float = 1e-4
    monotone: bool = True
    flow: FlowParams = field(default_factory=FlowParams)
    regularizer: RegularizerSpec = field(default_factory=RegularizerSpec)
    threads: int = 1

    def resolved_delta(self, n_frames: int) -> float:
        return 0.5 / n_frames if self.delta is None else self.delta

    def validate(self) -> None:
        for name in ("lam", "fidelity_tolerance", "inner_tolerance"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and positive")
        if self.delta is not None and not (math.isfinite(self.delta) and self.delta > 0):
            raise ValueError("delta must be finite and positive")
        if self.outer_iterations < 1 or self.inner_iterations < 1:
            raise ValueError("iteration counts must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        self.flow.validate()
        self.regularizer.validate()


@dataclass
class StabilizerReport:
    image: np.ndarray
    fidelity_trace: list[float]
    inner_trace: list[tuple[int, int, float, float]]  # (outer, inner, fidelity, objective)
    flows: list[FlowField]
    timings: dict[str, float]
    delta: float

    def trace_csv(self) -> str:
        rows = ["outer,inner,fidelity,objective"]
        rows += [f"{o},{i},{f!r},{obj!r}" for o, i, f, obj in self.inner_trace]
        return "\n".join(rows) + "\n"


def _check_finite(a: np.ndarray, phase: str) -> None:
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"non-finite values produced during {phase}")


def _operators(flows) -> list[WarpOperator]:
    return [phi if isinstance(phi, WarpOperator) else WarpOperator(phi) for phi in flows]


def _map(fn, items, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _check_frames(frames) -> list[np.ndarray]:
    if len(frames) == 0:
        raise ValueError("empty frame sequence")
    frames = [as_image(f, f"frame {i}") for i, f in enumerate(frames)]
    shape = frames[0].shape
    for i, f in enumerate(frames):
        if f.shape != shape:
            raise ValueError(f"frame {i} has shape {f.shape}, expected {shape}")
    return frames


def temporal_average(frames) -> np.ndarray:
    """Pixelwise mean of the sequence.

    Accumulated as offsets from the first frame, so identical frames give
    that frame back exactly.
    """
    frames = _check_frames(frames)
    acc = np.zeros_like(frames[0])
    for f in frames[1:]:
        acc += f - frames[0]
    return frames[0] + acc / len(frames)


def data_term(u, frames_tilde, flows, threads: int = 1) -> float:
    """``sum_i ||Phi_i u - g_i||^2`` (unnormalized)."""
    ops = _operators(flows)
    parts = _map(lambda k: float(np.sum((ops[k].apply(u) - frames_tilde[k]) ** 2)),
                 range(len(ops)), threads)
    return float(sum(parts))


def gradient_step(u, frames_tilde, flows, delta: float, threads: int = 1) -> np.ndarray:
    """``u - delta * sum_i Phi_i^T (Phi_i u - g_i)``."""
    u = np.asarray(u, dtype=np.float64)
    ops = _operators(flows)
    if len(ops) != len(frames_tilde):
        raise ValueError("need one flow per frame")
    for op, g in zip(ops, frames_tilde):
        if op.shape != u.shape or g.shape != u.shape:
            raise ValueError("shape mismatch between u, frames and flows")
    parts = _map(lambda k: ops[k].adjoint(ops[k].apply(u) - frames_tilde[k]),
                 range(len(ops)), threads)
    total = np.zeros_like(u)
    for p in parts:
        total += p
    return u - delta * total


def residual_add_back(frames_tilde, frames, u, flows) -> list[np.ndarray]:
    """``g_i + f_i - Phi_i u`` for every frame."""
    ops = _operators(flows)
    if not (len(frames_tilde) == len(frames) == len(ops)):
        raise ValueError("frame and flow counts differ")
    out = []
    for g, f, op in zip(frames_tilde, frames, ops):
        if g.shape != f.shape or f.shape != op.shape:
            raise ValueError("shape mismatch between frames and flows")
        out.append(g + f - op.apply(u))
    return out


def _relaxation(u_prev_fid: float, v, p, frames_tilde, ops, threads: int) -> float:
    """Largest ``t`` in [0, 1] with ``F(v + t (p - v)) <= F(u_prev)``.

    ``F`` is quadratic along the segment, so the root is closed form; a few
    halvings absorb rounding at the boundary.
    """
    d = p - v

    def terms(k):
        wd = ops[k].apply(d)
        return float(np.sum((ops[k].apply(v) - frames_tilde[k]) * wd)), float(np.sum(wd * wd))

    parts = _map(terms, range(len(ops)), threads)
    lin = 2.0 * sum(a for a, _ in parts)
    quad = sum(b for _, b in parts)
    f_v = data_term(v, frames_tilde, ops, threads)
    slack = u_prev_fid - f_v
    if lin + quad <= slack:
        return 1.0
    if quad <= 0:
        return 0.0
    # quad t^2 + lin t - slack = 0, positive root
    t = (-lin + math.sqrt(max(lin * lin + 4.0 * quad * max(slack, 0.0), 0.0))) / (2.0 * quad)
    t = min(max(t, 0.0), 1.0)
    for _ in range(30):
        if data_term(v + t * d, frames_tilde, ops, threads) <= u_prev_fid:
            return t
        t *= 0.5
    return 0.0


def inner_bregman_loop(u0, frames_tilde, flows, cfg: StabilizerConfig, delta: float | None = None,
                       outer: int = 0, trace: list | None = None):
    """Alternate gradient steps and prox steps until the data term settles.

    Returns ``(u, delta)``; ``delta`` is halved whenever a gradient step
    fails to decrease the data term. With ``cfg.monotone`` the prox output is
    pulled back toward ``v`` just enough that the data term never increases.
    """
    ops = _operators(flows)
    n = len(ops)
    delta = cfg.resolved_delta(n) if delta is None else delta
    u = np.asarray(u0, dtype=np.float64).copy()
    spec = cfg.regularizer
    npix = u.size
    prev = data_term(u, frames_tilde, ops, cfg.threads)
    for j in range(cfg.inner_iterations):
        for _ in range(60):
            v = gradient_step(u, frames_tilde, ops, delta, cfg.threads)
            _check_finite(v, "gradient step")
            if data_term(v, frames_tilde, ops, cfg.threads) <= prev * (1 + 1e-12) + 1e-12:
                break
            delta *= 0.5
            log.info("gradient step did not descend; delta halved to %g", delta)
        mu = cfg.lam / delta
        weights = compute_nl_weights(v, spec.nltv.patch_radius, spec.nltv.search_radius,
                                     spec.nltv.h, spec.nltv.neighbors) if spec.kind == "nltv" else None
        p = prox(spec, v, mu, weights=weights)
        _check_finite(p, "regularization")
        if cfg.monotone:
            t = _relaxation(prev, v, p, frames_tilde, ops, cfg.threads)
            u = p if t == 1.0 else v + t * (p - v)
        else:
            u = p
        cur = data_term(u, frames_tilde, ops, cfg.threads)
        if trace is not None:
            obj = 0.5 * cur + regularizer_value(spec, u, weights) / cfg.lam
            trace.append((outer, j, cur / (n * npix), obj))
        change = abs(prev - cur) / max(prev, 1e-300)
        prev = cur
        if change < cfg.inner_tolerance:
            break
    return u, delta


def stabilize(frames, cfg: StabilizerConfig | None = None) -> StabilizerReport:
    """Recover a geometrically stable image from ``frames``."""
    cfg = cfg or StabilizerConfig()
    cfg.validate()
    frames = _check_frames(frames)
    if len(frames) < 2:
        raise ValueError("need at least two frames")
    if min(frames[0].shape) < 32:
        raise ValueError(f"frames must be at least 32x32, got {frames[0].shape}")
    n = len(frames)
    npix = frames[0].size
    delta = cfg.resolved_delta(n)
    timings = {"flow": 0.0, "inner": 0.0, "add_back": 0.0}

    u = temporal_average(frames)
    frames_tilde = [f.copy() for f in frames]
    fid_trace: list[float] = []
    inner_trace: list = []
    flows: list[FlowField] = []
    for k in range(cfg.outer_iterations):
        t0 = time.perf_counter()
        flows = _map(lambda f: estimate_flow(u, f, cfg.flow), frames, cfg.threads)
        for phi in flows:
            _check_finite(phi.dx, "flow estimation")
            _check_finite(phi.dy, "flow estimation")
        ops = _operators(flows)
        t1 = time.perf_counter()
        if k == 0:
            fid_trace.append(data_term(u, frames, ops, cfg.threads) / (n * npix))
        u, delta = inner_bregman_loop(u, frames_tilde, ops, cfg, delta, outer=k, trace=inner_trace)
        t2 = time.perf_counter()
        frames_tilde = residual_add_back(frames_tilde, frames, u, ops)
        for g in frames_tilde:
            _check_finite(g, "residual add-back")
        fid = data_term(u, frames, ops, cfg.threads) / (n * npix)
        fid_trace.append(fid)
        t3 = time.perf_counter()
        timings["flow"] += t1 - t0
        timings["inner"] += t2 - t1
        timings["add_back"] += t3 - t2
        log.info("outer %d: fidelity %.6g", k, fid)
        if fid <= cfg.fidelity_tolerance:
            break
    return StabilizerReport(u, fid_trace, inner_trace, flows, timings, delta)
