"""Nonlocal total variation on a sparse patch-similarity graph."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


@dataclass(frozen=True)
class NlWeights:
    """Symmetric nonnegative weight graph over the pixels of a ``shape`` image.

    ``matrix[x, y]`` holds ``w(x, y)`` for flat (row-major) pixel indices;
    absent entries mean no edge.
    """

    shape: tuple[int, int]
    matrix: sp.csr_matrix

    def __post_init__(self):
        n = self.shape[0] * self.shape[1]
        if self.matrix.shape != (n, n):
            raise ValueError(f"weight matrix {self.matrix.shape} does not match image {self.shape}")

    def neighbours(self, index: int) -> list[tuple[int, float]]:
        row = self.matrix.getrow(index)
        return list(zip(row.indices.tolist(), row.data.tolist()))


def _patch_sum(a: np.ndarray, radius: int) -> np.ndarray:
    """Sum over (2r+1)^2 windows of ``a``, valid part only.

    Explicit slice sums keep all-zero windows exactly zero.
    """
    k = 2 * radius + 1
    h = a.shape[-2] - 2 * radius
    w = a.shape[-1] - 2 * radius
    rows = a[..., 0:h, :].copy()
    for i in range(1, k):
        rows += a[..., i:i + h, :]
    out = rows[..., :, 0:w].copy()
    for j in range(1, k):
        out += rows[..., :, j:j + w]
    return out


def compute_nl_weights(v, patch_radius: int = 2, search_radius: int = 7,
                       h: float = 0.1, neighbors: int = 10) -> NlWeights:
    """Patch-similarity weights ``exp(-d^2 / h^2)`` over the ``neighbors`` best matches.

    ``d^2`` is the mean squared difference of replicate-padded patches. Each
    pixel keeps its ``neighbors`` closest candidates from the search window;
    the graph is then symmetrized by taking ``max(w(x, y), w(y, x))``.
    """
    v = np.asarray(v, dtype=np.float64)
    if patch_radius < 0 or search_radius < 1 or neighbors < 1 or h <= 0:
        raise ValueError("invalid nonlocal weight parameters")
    if search_radius < patch_radius:
        raise ValueError("search_radius must be >= patch_radius")
    H, W = v.shape
    if min(H, W) <= 2 * (patch_radius + search_radius):
        raise ValueError(
            f"image {H}x{W} too small for patch_radius={patch_radius}, "
            f"search_radius={search_radius}")

    pr, sr = patch_radius, search_radius
    ext = np.pad(v, pr + sr, mode="edge")
    ph, pw = H + 2 * pr, W + 2 * pr
    centre = ext[sr:sr + ph, sr:sr + pw]
    offsets = [(oy, ox) for oy in range(-sr, sr + 1) for ox in range(-sr, sr + 1)
               if (oy, ox) != (0, 0)]
    yy, xx = np.mgrid[0:H, 0:W]
    area = float((2 * pr + 1) ** 2)

    dist = np.empty((len(offsets), H, W))
    for k, (oy, ox) in enumerate(offsets):
        shifted = ext[sr + oy:sr + oy + ph, sr + ox:sr + ox + pw]
        d2 = _patch_sum((centre - shifted) ** 2, pr) / area
        inside = (yy + oy >= 0) & (yy + oy < H) & (xx + ox >= 0) & (xx + ox < W)
        d2[~inside] = np.inf
        dist[k] = d2

    m = min(neighbors, len(offsets))
    best = np.argpartition(dist, m - 1, axis=0)[:m]
    d_best = np.take_along_axis(dist, best, axis=0)
    off = np.asarray(offsets)
    ty = yy[None] + off[best, 0]
    tx = xx[None] + off[best, 1]
    keep = np.isfinite(d_best)
    rows = (yy * W + xx)[None].repeat(m, axis=0)[keep]
    cols = (ty * W + tx)[keep]
    data = np.exp(-d_best[keep] / h**2)

    n = H * W
    mat = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    mat = mat.maximum(mat.T).tocsr()
    mat.sort_indices()
    return NlWeights((H, W), mat)


class _Graph:
    """Edge-wise nonlocal gradient ``sqrt(w) * (u[y] - u[x])`` for stored pairs."""

    def __init__(self, weights: NlWeights):
        coo = weights.matrix.tocoo()
        self.rows = coo.row
        self.cols = coo.col
        self.sqrt_w = np.sqrt(coo.data)
        self.n = weights.shape[0] * weights.shape[1]
        e = len(self.rows)
        ar = np.arange(e)
        self.G = sp.csr_matrix(
            (np.concatenate([self.sqrt_w, -self.sqrt_w]),
             (np.concatenate([ar, ar]), np.concatenate([self.cols, self.rows]))),
            shape=(e, self.n))

    def grad(self, u: np.ndarray) -> np.ndarray:
        return self.G @ u

    def row_norm(self, d: np.ndarray) -> np.ndarray:
        return np.sqrt(np.bincount(self.rows, weights=d * d, minlength=self.n))


def nltv_value(u, weights: NlWeights) -> float:
    """``sum_x sqrt(sum_y w(x, y) (u(y) - u(x))^2)``."""
    u = np.asarray(u, dtype=np.float64)
    g = _Graph(weights)
    return float(np.sum(g.row_norm(g.grad(u.ravel()))))


def nltv_prox(v, weights: NlWeights, mu: float, inner_iterations: int = 5,
              rho: float | None = None, trace: list | None = None) -> np.ndarray:
    """Split Bregman solve of ``argmin_u NLTV_w(u) + mu/2 ||u - v||^2``.

    The weights stay fixed. The u-subproblem ``(mu I + rho G^T G) u = rhs``
    is solved by conjugate gradients; the shrinkage groups all edges leaving
    a pixel. The lowest-objective iterate is returned.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    rho = mu if rho is None else rho
    if rho <= 0:
        raise ValueError("rho must be positive")
    v = np.asarray(v, dtype=np.float64)
    if v.shape != weights.shape:
        raise ValueError(f"image {v.shape} does not match weights {weights.shape}")
    g = _Graph(weights)
    if len(g.rows) == 0:
        return v.copy()

    vf = v.ravel()
    A = (mu * sp.identity(g.n, format="csr") + rho * (g.G.T @ g.G)).tocsr()
    Gt = g.G.T.tocsr()

    def objective(uf):
        return float(np.sum(g.row_norm(g.grad(uf)))) + 0.5 * mu * float(np.sum((uf - vf) ** 2))

    def shrink(z):
        s = g.row_norm(z)[g.rows]
        return z * np.where(s > 1.0 / rho, (s - 1.0 / rho) / np.where(s > 0, s, 1.0), 0.0)

    u = vf.copy()
    gu = g.grad(u)
    d = shrink(gu)
    b = gu - d
    best, best_obj = u, objective(u)
    for _ in range(inner_iterations):
        rhs = mu * vf + rho * (Gt @ (d - b))
        u, _info = spla.cg(A, rhs, x0=u, rtol=1e-10, maxiter=200)
        gu = g.grad(u)
        d = shrink(gu + b)
        b = b + gu - d
        obj = objective(u)
        if obj <= best_obj:
            best, best_obj = u, obj
        if trace is not None:
            trace.append(best_obj)
    return best.reshape(v.shape)
