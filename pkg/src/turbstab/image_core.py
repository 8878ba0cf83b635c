"""Image grids, PGM I/O, discrete differential operators and the warp operator.

Images are plain 2-D ``float64`` numpy arrays indexed ``[y, x]`` with nominal
intensities in [0, 1]. Displacement fields are carried by :class:`FlowField`.
The warp ``(Phi u)(x) = u(x + phi(x))`` uses bilinear interpolation with
clamp-to-edge coordinates, and :class:`WarpOperator` exposes it as a sparse
matrix so the adjoint is the exact transpose.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

__all__ = [
    "FlowField",
    "VectorField",
    "WarpOperator",
    "PGMError",
    "PGMFormatError",
    "PGMHeaderError",
    "PGMTruncatedError",
    "as_image",
    "load_pgm",
    "save_pgm",
    "bilinear_sample",
    "bilinear_sample_grid",
    "warp_apply",
    "warp_adjoint",
    "gradient",
    "divergence",
]


class PGMError(ValueError):
    """Base class for PGM decoding failures."""


class PGMFormatError(PGMError):
    """The file is not a binary greyscale (P5) PGM."""


class PGMHeaderError(PGMError):
    """The header is malformed or declares unsupported values."""


class PGMTruncatedError(PGMError):
    """The payload is shorter than the header promises."""


def as_image(a, name: str = "image") -> np.ndarray:
    """Validate and convert ``a`` to a finite 2-D float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _check_same_shape(*arrays: np.ndarray) -> None:
    shape = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != shape:
            raise ValueError(f"dimension mismatch: {shape} vs {a.shape}")


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement ``(dx, dy)`` in pixels, arrays of shape (height, width)."""

    dx: np.ndarray
    dy: np.ndarray

    def __post_init__(self):
        dx = as_image(self.dx, "dx")
        dy = as_image(self.dy, "dy")
        _check_same_shape(dx, dy)
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "dy", dy)

    @property
    def shape(self) -> tuple[int, int]:
        return self.dx.shape

    @classmethod
    def zeros(cls, shape: tuple[int, int]) -> "FlowField":
        return cls(np.zeros(shape), np.zeros(shape))

    @classmethod
    def constant(cls, shape: tuple[int, int], dx: float, dy: float) -> "FlowField":
        return cls(np.full(shape, float(dx)), np.full(shape, float(dy)))


class VectorField(NamedTuple):
    """Per-pixel 2-vector, e.g. a discrete gradient."""

    px: np.ndarray
    py: np.ndarray


# ---------------------------------------------------------------------------
# PGM I/O
# ---------------------------------------------------------------------------

def _read_header(data: bytes) -> tuple[int, int, int, int]:
    """Return (width, height, maxval, payload offset)."""
    if len(data) < 2:
        raise PGMHeaderError("file too short for a PGM header")
    if data[:2] != b"P5":
        raise PGMFormatError(f"unsupported magic {data[:2]!r}, expected b'P5'")
    fields: list[int] = []
    pos = 2
    n = len(data)
    while len(fields) < 3:
        # whitespace and comments between tokens
        while pos < n and (data[pos] in b" \t\r\n" or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < n and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < n and data[pos] not in b" \t\r\n#":
            pos += 1
        token = data[start:pos]
        if not token:
            raise PGMHeaderError("header ended before width, height and maxval were read")
        if not token.isdigit():
            raise PGMHeaderError(f"non-numeric header token {token!r}")
        fields.append(int(token))
    if pos >= n or data[pos] not in b" \t\r\n":
        raise PGMHeaderError("missing whitespace after maxval")
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PGMHeaderError(f"invalid dimensions {width}x{height}")
    if maxval not in (255, 65535):
        raise PGMHeaderError(f"unsupported maxval {maxval}, expected 255 or 65535")
    return width, height, maxval, pos + 1


def load_pgm(path) -> np.ndarray:
    """Read a binary P5 PGM and return intensities scaled to [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    width, height, maxval, offset = _read_header(data)
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    expected = width * height * dtype.itemsize
    payload = data[offset:offset + expected]
    if len(payload) < expected:
        raise PGMTruncatedError(f"payload has {len(payload)} bytes, expected {expected}")
    samples = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return samples.astype(np.float64) / maxval


def pgm_bytes(image, maxval: int = 255) -> bytes:
    """Encode ``image`` as P5 PGM bytes (clamped to [0, 1], rounded half up)."""
    if maxval not in (255, 65535):
        raise ValueError(f"maxval must be 255 or 65535, got {maxval}")
    img = as_image(image)
    q = np.floor(np.clip(img, 0.0, 1.0) * maxval + 0.5)
    dtype = ">u2" if maxval == 65535 else "u1"
    h, w = img.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    return header + q.astype(dtype).tobytes()


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write ``payload`` to ``path`` through a temporary file and rename."""
    path = os.fspath(path)
    tmp = f"{path}.tmp-{os.getpid()}"
    try:
        with open(tmp, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def save_pgm(image, path, maxval: int = 255) -> None:
    """Write ``image`` as a binary PGM; 16-bit samples are big-endian."""
    atomic_write_bytes(path, pgm_bytes(image, maxval))


# ---------------------------------------------------------------------------
# Bilinear sampling and the warp operator
# ---------------------------------------------------------------------------

def _bilinear_stencil(xs: np.ndarray, ys: np.ndarray, width: int, height: int):
    """Corner indices and weights for bilinear sampling at clamped coordinates."""
    xs = np.clip(xs, 0.0, width - 1.0)
    ys = np.clip(ys, 0.0, height - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    fx = xs - x0
    fy = ys - y0
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    idx = (y0 * width + x0, y0 * width + x1, y1 * width + x0, y1 * width + x1)
    wts = ((1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy)
    return idx, wts


def bilinear_sample(image, x: float, y: float) -> float:
    """Bilinearly interpolate ``image`` at (x, y) after clamping to the grid."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    idx, wts = _bilinear_stencil(np.asarray(float(x)), np.asarray(float(y)), w, h)
    flat = img.ravel()
    return float(sum(wt * flat[i] for i, wt in zip(idx, wts)))


def bilinear_sample_grid(image, xs, ys) -> np.ndarray:
    """Vectorized :func:`bilinear_sample` over coordinate arrays."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    idx, wts = _bilinear_stencil(xs, ys, w, h)
    flat = img.ravel()
    out = wts[0] * flat[idx[0]]
    for i, wt in zip(idx[1:], wts[1:]):
        out = out + wt * flat[i]
    return out


class WarpOperator:
    """Sparse matrix form of ``u -> u(x + phi(x))`` for one flow field.

    Each row holds the four bilinear weights of one output pixel, so
    :meth:`adjoint` is the exact transpose (a deterministic scatter).
    """

    def __init__(self, flow: FlowField):
        h, w = flow.shape
        self.shape = (h, w)
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        idx, wts = _bilinear_stencil(xx + flow.dx, yy + flow.dy, w, h)
        n = h * w
        rows = np.tile(np.arange(n), 4)
        cols = np.concatenate([i.ravel() for i in idx])
        data = np.concatenate([wt.ravel() for wt in wts])
        self.matrix = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
        self.matrix_t = self.matrix.T.tocsr()

    def apply(self, u: np.ndarray) -> np.ndarray:
        if u.shape != self.shape:
            raise ValueError(f"dimension mismatch: image {u.shape} vs flow {self.shape}")
        return (self.matrix @ u.ravel()).reshape(self.shape)

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        if r.shape != self.shape:
            raise ValueError(f"dimension mismatch: image {r.shape} vs flow {self.shape}")
        return (self.matrix_t @ r.ravel()).reshape(self.shape)


def warp_apply(u, flow: FlowField) -> np.ndarray:
    """Return ``u`` sampled at ``x + flow(x)`` for every pixel x."""
    u = as_image(u, "u")
    _check_same_shape(u, flow.dx)
    h, w = u.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return bilinear_sample_grid(u, xx + flow.dx, yy + flow.dy)


def warp_adjoint(r, flow: FlowField) -> np.ndarray:
    """Transpose of :func:`warp_apply`: scatter ``r`` with the same bilinear weights."""
    r = as_image(r, "r")
    _check_same_shape(r, flow.dx)
    h, w = r.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    idx, wts = _bilinear_stencil(xx + flow.dx, yy + flow.dy, w, h)
    out = np.zeros(h * w)
    for i, wt in zip(idx, wts):
        # bincount sums in index order, so the result is reproducible
        out += np.bincount(i.ravel(), weights=(wt * r).ravel(), minlength=h * w)
    return out.reshape(h, w)


# ---------------------------------------------------------------------------
# Discrete gradient / divergence (forward differences, Neumann boundary)
# ---------------------------------------------------------------------------

def gradient(u) -> VectorField:
    """Forward differences with zero difference on the last column / row."""
    u = np.asarray(u, dtype=np.float64)
    px = np.zeros_like(u)
    py = np.zeros_like(u)
    px[:, :-1] = u[:, 1:] - u[:, :-1]
    py[:-1, :] = u[1:, :] - u[:-1, :]
    return VectorField(px, py)


def divergence(p: VectorField) -> np.ndarray:
    """Backward-difference divergence, the negative adjoint of :func:`gradient`."""
    px = np.asarray(p.px, dtype=np.float64)
    py = np.asarray(p.py, dtype=np.float64)
    _check_same_shape(px, py)
    div = np.zeros_like(px)
    if px.shape[1] > 1:
        div[:, 0] = px[:, 0]
        div[:, 1:-1] = px[:, 1:-1] - px[:, :-2]
        div[:, -1] = -px[:, -2]
    if py.shape[0] > 1:
        div[0, :] += py[0, :]
        div[1:-1, :] += py[1:-1, :] - py[:-2, :]
        div[-1, :] += -py[-2, :]
    return div
