"""Dense pyramidal Lucas-Kanade flow and the FLO-TXT text format.

The estimated field follows the warp convention of :mod:`turbstab.image_core`:
``warp_apply(reference, flow)`` approximates ``target``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from .image_core import (
    FlowField,
    as_image,
    atomic_write_bytes,
    bilinear_sample_grid,
)


@dataclass
class FlowParams:
    window_radius: int = 5
    pyramid_levels: int = 3
    iterations_per_level: int = 3
    min_eigen_threshold: float = 1e-6

    def validate(self) -> None:
        if self.window_radius < 1 or self.pyramid_levels < 1 or self.iterations_per_level < 1:
            raise ValueError("window_radius, pyramid_levels and iterations_per_level must be >= 1")
        if not self.min_eigen_threshold >= 0:
            raise ValueError("min_eigen_threshold must be >= 0")


def max_pyramid_levels(shape) -> int:
    """Deepest pyramid keeping the coarsest level at least 8 pixels wide."""
    return max(1, int(math.floor(math.log2(min(shape) / 8))) + 1)


def downsample2(image) -> np.ndarray:
    """2x2 box average; odd trailing rows/columns are dropped."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    if h < 2 or w < 2:
        raise ValueError(f"image {h}x{w} too small to downsample")
    h2, w2 = h // 2, w // 2
    c = img[:2 * h2, :2 * w2]
    return 0.25 * (c[0::2, 0::2] + c[0::2, 1::2] + c[1::2, 0::2] + c[1::2, 1::2])


def upsample_flow(flow: FlowField, shape) -> FlowField:
    """Resample a coarse flow onto a grid of ``shape`` and double it.

    Fine pixel X sits at coarse coordinate (X - 0.5) / 2 under box averaging.
    """
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cx = (xx - 0.5) / 2.0
    cy = (yy - 0.5) / 2.0
    return FlowField(2.0 * bilinear_sample_grid(flow.dx, cx, cy),
                     2.0 * bilinear_sample_grid(flow.dy, cx, cy))


def _central_gradient(img: np.ndarray):
    gy, gx = np.gradient(img)
    return gx, gy


def _lk_level(ref: np.ndarray, tgt: np.ndarray, dx: np.ndarray, dy: np.ndarray,
              params: FlowParams):
    """Iterative LK at one pyramid level with one displacement per window.

    For pixel x with displacement d, the window residual is
    ``tgt(x + o) - ref(x + o + d)`` over offsets o, linearized with the
    reference gradient sampled at ``x + o + d``. Sampling replicates the
    border (same as clamping), and the gradient normal to a border is zero
    outside the grid because clamped samples do not move.
    """
    h, w = ref.shape
    r = params.window_radius
    # beyond x +- (size + 2) every sample is clamped, so the value is unchanged
    lim = float(max(h, w) + 2)
    m = r + int(lim) + 2
    gx, gy = _central_gradient(ref)
    ref_p = np.pad(ref, m, mode="edge")
    gx_p = np.pad(gx, m, mode="edge")
    gy_p = np.pad(gy, m, mode="edge")
    gx_p[:, :m] = 0.0
    gx_p[:, m + w:] = 0.0
    gy_p[:m, :] = 0.0
    gy_p[m + h:, :] = 0.0
    hp, wp = ref_p.shape
    base = np.stack([ref_p.ravel(), gx_p.ravel(), gy_p.ravel()])
    # rows 3k..3k+2: (value, gx, gy) at p + (0, 1, wp, wp + 1)[k]
    corners = np.zeros((12, hp * wp))
    for k, shift in enumerate((0, 1, wp, wp + 1)):
        corners[3 * k:3 * k + 3, :hp * wp - shift] = base[:, shift:]

    tpad = np.pad(tgt, r, mode="edge")
    yy, xx = np.mgrid[0:h, 0:w]
    row_offsets = np.arange(-r, r + 1)
    n = float((2 * r + 1) ** 2)

    for _ in range(params.iterations_per_level):
        cdx = np.clip(dx, -lim, lim)
        cdy = np.clip(dy, -lim, lim)
        fdx = np.floor(cdx)
        fdy = np.floor(cdy)
        fx = cdx - fdx
        fy = cdy - fdy
        w00 = (1 - fx) * (1 - fy)
        w10 = fx * (1 - fy)
        w01 = (1 - fx) * fy
        w11 = fx * fy
        origin = ((yy + fdy.astype(np.intp) + m) * wp + (xx + fdx.astype(np.intp) + m)).ravel()
        acc = np.zeros((5, h, w))
        for oy in row_offsets:
            idx = origin[None, :] + (oy * wp + row_offsets)[:, None]
            g = np.take(corners, idx, axis=1).reshape(12, len(row_offsets), h, w)
            val = w00 * g[0] + w10 * g[3] + w01 * g[6] + w11 * g[9]
            ix = w00 * g[1] + w10 * g[4] + w01 * g[7] + w11 * g[10]
            iy = w00 * g[2] + w10 * g[5] + w01 * g[8] + w11 * g[11]
            trow = np.stack([tpad[r + oy:r + oy + h, r + ox:r + ox + w] for ox in row_offsets])
            it = trow - val
            acc[0] += np.sum(ix * ix, axis=0)
            acc[1] += np.sum(ix * iy, axis=0)
            acc[2] += np.sum(iy * iy, axis=0)
            acc[3] += np.sum(ix * it, axis=0)
            acc[4] += np.sum(iy * it, axis=0)
        sxx, sxy, syy, sxt, syt = acc / n
        half_trace = 0.5 * (sxx + syy)
        min_eig = half_trace - np.sqrt((0.5 * (sxx - syy)) ** 2 + sxy**2)
        ok = min_eig > params.min_eigen_threshold
        det = np.where(ok, sxx * syy - sxy**2, 1.0)
        du = np.where(ok, (syy * sxt - sxy * syt) / det, 0.0)
        dv = np.where(ok, (sxx * syt - sxy * sxt) / det, 0.0)
        dx = dx + du
        dy = dy + dv
    return dx, dy


def estimate_flow(reference, target, params: FlowParams | None = None) -> FlowField:
    """Flow ``phi`` with ``warp_apply(reference, phi) ~ target``, coarse to fine.

    Windows whose structure tensor is ill-conditioned keep their incoming flow.
    """
    params = params or FlowParams()
    params.validate()
    ref = as_image(reference, "reference")
    tgt = as_image(target, "target")
    if ref.shape != tgt.shape:
        raise ValueError(f"dimension mismatch: {ref.shape} vs {tgt.shape}")
    if min(ref.shape) < 16:
        raise ValueError(f"images must be at least 16x16, got {ref.shape}")

    levels = min(params.pyramid_levels, max_pyramid_levels(ref.shape))
    refs, tgts = [ref], [tgt]
    for _ in range(levels - 1):
        refs.append(downsample2(refs[-1]))
        tgts.append(downsample2(tgts[-1]))

    flow = FlowField.zeros(refs[-1].shape)
    for lev in reversed(range(levels)):
        if flow.shape != refs[lev].shape:
            flow = upsample_flow(flow, refs[lev].shape)
        dx, dy = _lk_level(refs[lev], tgts[lev], flow.dx, flow.dy, params)
        flow = FlowField(dx, dy)
    return flow


# ---------------------------------------------------------------------------
# FLO-TXT: "FLO-TXT <w> <h>" then w*h lines "dx dy", row-major
# ---------------------------------------------------------------------------

def flow_to_text(flow: FlowField) -> str:
    h, w = flow.shape
    lines = [f"FLO-TXT {w} {h}"]
    lines += [f"{a!r} {b!r}" for a, b in zip(flow.dx.ravel().tolist(), flow.dy.ravel().tolist())]
    return "\n".join(lines) + "\n"


def flow_from_text(text: str) -> FlowField:
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty FLO-TXT input")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "FLO-TXT":
        raise ValueError(f"bad FLO-TXT header {lines[0]!r}")
    w, h = int(head[1]), int(head[2])
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != w * h:
        raise ValueError(f"FLO-TXT body has {len(body)} lines, expected {w * h}")
    vals = np.array([[float(t) for t in ln.split()] for ln in body])
    if vals.shape != (w * h, 2):
        raise ValueError("each FLO-TXT line must hold exactly two numbers")
    return FlowField(vals[:, 0].reshape(h, w), vals[:, 1].reshape(h, w))


def save_flow(flow: FlowField, path) -> None:
    atomic_write_bytes(path, flow_to_text(flow).encode("ascii"))


def load_flow(path) -> FlowField:
    with open(path, "r", encoding="ascii") as fh:
        return flow_from_text(fh.read())
