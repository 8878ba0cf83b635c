"""Freeze reference ROF solutions for small random images.

Independent of the split Bregman solver: projected gradient ascent on the
dual of ``min_u TV(u) + mu/2 ||u - v||^2`` with its own finite differences,
run for 10**6 steps. Writes ``tests/data/tv_oracle.npz``.

    python tests/oracles/make_tv_oracle.py
"""
from pathlib import Path

import numpy as np

STEPS = 10**6
SIZE = 8
INSTANCES = 20
MUS = (0.5, 1.0, 5.0)


def grad(u):
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[..., :, :-1] = u[..., :, 1:] - u[..., :, :-1]
    gy[..., :-1, :] = u[..., 1:, :] - u[..., :-1, :]
    return gx, gy


def div(px, py):
    # columns: p[0], p[x]-p[x-1], -p[n-2]
    out = np.zeros_like(px)
    out[..., :, 0] = px[..., :, 0]
    out[..., :, 1:-1] = px[..., :, 1:-1] - px[..., :, :-2]
    out[..., :, -1] = -px[..., :, -2]
    out[..., 0, :] += py[..., 0, :]
    out[..., 1:-1, :] += py[..., 1:-1, :] - py[..., :-2, :]
    out[..., -1, :] += -py[..., -2, :]
    return out


def solve(v, mu, steps=STEPS, tau=0.125):
    """Batch dual projected gradient; ``v`` (B, n, n), ``mu`` (B, 1, 1)."""
    px = np.zeros_like(v)
    py = np.zeros_like(v)
    mv = mu * v
    for _ in range(steps):
        gx, gy = grad(div(px, py) + mv)
        px += tau * gx
        py += tau * gy
        norm = np.maximum(1.0, np.hypot(px, py))
        px /= norm
        py /= norm
    return v + div(px, py) / mu


def main():
    rng = np.random.default_rng(20240601)
    v = rng.random((INSTANCES, SIZE, SIZE))
    vs = np.concatenate([v] * len(MUS))
    mus = np.repeat(np.array(MUS), INSTANCES)[:, None, None]
    half = solve(vs, mus, STEPS // 2)
    u = solve(vs, mus, STEPS)
    print("max change between 5e5 and 1e6 steps:", np.abs(u - half).max())
    out = Path(__file__).resolve().parents[1] / "data" / "tv_oracle.npz"
    np.savez_compressed(out, v=vs, mu=mus[:, 0, 0], u=u, steps=STEPS)
    print("wrote", out)


if __name__ == "__main__":
    main()
