"""Synthetic turbulence: blur, smooth random warps and additive noise.

Frame ``i`` is ``clip(warp(blur(truth), D_i) + noise_i, 0, 1)`` where each
``D_i`` is Gaussian-smoothed white noise rescaled to a target RMS
displacement. Every frame draws from its own RNG stream spawned from the
seed, so sequences are reproducible and frames can be built in any order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .image_core import FlowField, as_image, warp_apply


@dataclass
class SimConfig:
    frames: int = 20
    deform_amplitude: float = 1.5
    correlation_length: float = 8.0
    blur_sigma: float = 0.5
    noise_sigma: float = 0.01
    seed: int = 0

    def validate(self) -> None:
        values = (self.deform_amplitude, self.correlation_length, self.blur_sigma, self.noise_sigma)
        if not all(math.isfinite(x) for x in values):
            raise ValueError("simulation parameters must be finite")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if self.deform_amplitude < 0 or self.blur_sigma < 0 or self.noise_sigma < 0:
            raise ValueError("amplitude, blur_sigma and noise_sigma must be >= 0")
        if self.correlation_length <= 0:
            raise ValueError("correlation_length must be > 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian truncated at +-ceil(3 sigma)."""
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(image, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with replicated borders; ``sigma == 0`` is the identity."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    img = as_image(image)
    if sigma == 0:
        return img.copy()
    k = gaussian_kernel(sigma)
    out = correlate1d(img, k, axis=0, mode="nearest")
    return correlate1d(out, k, axis=1, mode="nearest")


def gen_deformation(width: int, height: int, amplitude: float, correlation_length: float,
                    rng: np.random.Generator) -> FlowField:
    """Zero-mean smooth random displacement with RMS magnitude ``amplitude``."""
    if width < 8 or height < 8:
        raise ValueError(f"deformation grid {width}x{height} too small (need >= 8)")
    if amplitude < 0 or correlation_length <= 0:
        raise ValueError("amplitude must be >= 0 and correlation_length > 0")
    noise = rng.standard_normal((2, height, width))
    dx = gaussian_blur(noise[0], correlation_length)
    dy = gaussian_blur(noise[1], correlation_length)
    dx -= dx.mean()
    dy -= dy.mean()
    if amplitude == 0:
        return FlowField.zeros((height, width))
    rms = math.sqrt(float(np.mean(dx**2 + dy**2)))
    scale = amplitude / rms
    return FlowField(dx * scale, dy * scale)


def frame_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for frame ``index``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def degrade_frame(blurred: np.ndarray, cfg: SimConfig, index: int):
    rng = frame_rng(cfg.seed, index)
    h, w = blurred.shape
    flow = gen_deformation(w, h, cfg.deform_amplitude, cfg.correlation_length, rng)
    frame = warp_apply(blurred, flow)
    if cfg.noise_sigma > 0:
        frame = frame + cfg.noise_sigma * rng.standard_normal(frame.shape)
    return np.clip(frame, 0.0, 1.0), flow


def degrade(truth, cfg: SimConfig):
    """Return ``(frames, flows)``: the simulated sequence and the warps used."""
    cfg.validate()
    truth = as_image(truth, "truth")
    blurred = gaussian_blur(truth, cfg.blur_sigma)
    frames, flows = [], []
    for i in range(cfg.frames):
        f, phi = degrade_frame(blurred, cfg, i)
        frames.append(f)
        flows.append(phi)
    return frames, flows


def synthetic_scene(size: int = 128, seed: int = 7) -> np.ndarray:
    """Textured ground truth: smooth random texture, a plane wave, discs and boxes."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    tex = gaussian_blur(rng.standard_normal((size, size)), 1.5)
    tex /= tex.std()
    u = 0.5 + 0.08 * tex + 0.15 * np.sin(2 * np.pi * (3 * xx + 2 * yy))
    for _ in range(8):
        cx, cy = rng.uniform(0.1, 0.9, 2)
        r = rng.uniform(0.04, 0.12)
        disc = (xx - cx) ** 2 + (yy - cy) ** 2 < r**2
        u[disc] += rng.uniform(-0.35, 0.35)
    for _ in range(4):
        x0, y0 = rng.uniform(0.0, 0.8, 2)
        bw, bh = rng.uniform(0.05, 0.2, 2)
        box = (xx > x0) & (xx < x0 + bw) & (yy > y0) & (yy < y0 + bh)
        u[box] += rng.uniform(-0.3, 0.3)
    return np.clip(u, 0.0, 1.0)
