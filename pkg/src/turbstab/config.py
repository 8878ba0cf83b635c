"""Flat ``key=value`` run configuration shared by all CLI subcommands.

One setting per line; ``#`` starts a comment. Keys map onto
:class:`~turbstab.turbulence_sim.SimConfig`,
:class:`~turbstab.stabilizer.StabilizerConfig`,
:class:`~turbstab.optical_flow.FlowParams` and
:class:`~turbstab.regularizers.RegularizerSpec`. Later sources override
earlier ones, so callers apply defaults, then a file, then flags.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

from .optical_flow import FlowParams
from .regularizers import FrameParams, NLTVParams, RegularizerSpec, TVParams
from .stabilizer import StabilizerConfig
from .turbulence_sim import SimConfig


class ConfigError(ValueError):
    """Malformed configuration text or an invalid value."""


def _int(text: str) -> int:
    return int(text, 10)


def _float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("value must be finite")
    return value


def _opt_float(text: str) -> float | None:
    return None if text.lower() in ("auto", "none") else _float(text)


def _bool(text: str) -> bool:
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _seed(text: str) -> int:
    value = int(text, 10)
    if not 0 <= value < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return value


def _kind(text: str) -> str:
    # curvelet parses so that the error surfaces at use with a clear message
    if text not in ("tv", "nltv", "frame", "curvelet"):
        raise ValueError(f"unknown regularizer {text!r}")
    return text


def _maxval(text: str) -> int:
    value = int(text, 10)
    if value not in (255, 65535):
        raise ValueError("pgm_maxval must be 255 or 65535")
    return value


_SIM = SimConfig()
_STAB = StabilizerConfig()
_FLOW = FlowParams()
_TV, _NLTV, _FRAME = TVParams(), NLTVParams(), FrameParams()

# key -> (parser, default)
SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    "frames": (_int, _SIM.frames),
    "deform_amplitude": (_float, _SIM.deform_amplitude),
    "correlation_length": (_float, _SIM.correlation_length),
    "blur_sigma": (_float, _SIM.blur_sigma),
    "noise_sigma": (_float, _SIM.noise_sigma),
    "seed": (_seed, _SIM.seed),
    "delta": (_opt_float, _STAB.delta),
    "lambda": (_float, _STAB.lam),
    "outer_iterations": (_int, _STAB.outer_iterations),
    "inner_iterations": (_int, _STAB.inner_iterations),
    "fidelity_tolerance": (_float, _STAB.fidelity_tolerance),
    "inner_tolerance": (_float, _STAB.inner_tolerance),
    "monotone": (_bool, _STAB.monotone),
    "threads": (_int, _STAB.threads),
    "pgm_maxval": (_maxval, 255),
    "regularizer": (_kind, "tv"),
    "flow.window_radius": (_int, _FLOW.window_radius),
    "flow.pyramid_levels": (_int, _FLOW.pyramid_levels),
    "flow.iterations_per_level": (_int, _FLOW.iterations_per_level),
    "flow.min_eigen_threshold": (_float, _FLOW.min_eigen_threshold),
    "tv.inner_iterations": (_int, _TV.inner_iterations),
    "tv.rho": (_opt_float, _TV.rho),
    "tv.gs_sweeps": (_int, _TV.gs_sweeps),
    "nltv.patch_radius": (_int, _NLTV.patch_radius),
    "nltv.search_radius": (_int, _NLTV.search_radius),
    "nltv.h": (_float, _NLTV.h),
    "nltv.neighbors": (_int, _NLTV.neighbors),
    "nltv.inner_iterations": (_int, _NLTV.inner_iterations),
    "nltv.rho": (_opt_float, _NLTV.rho),
    "frame.levels": (_int, _FRAME.levels),
    "frame.inner_iterations": (_int, _FRAME.inner_iterations),
    "frame.rho": (_opt_float, _FRAME.rho),
}

# settings that cannot change any output byte and so stay out of manifests
NON_SEMANTIC = frozenset({"threads"})


def format_setting(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunConfig:
    values: dict[str, Any] = field(default_factory=lambda: {k: d for k, (_, d) in SCHEMA.items()})

    def set(self, key: str, text: str, where: str = "") -> None:
        prefix = f"{where}: " if where else ""
        if key not in SCHEMA:
            raise ConfigError(f"{prefix}unknown key {key!r}")
        parser = SCHEMA[key][0]
        try:
            self.values[key] = parser(text.strip())
        except ValueError as exc:
            raise ConfigError(f"{prefix}bad value for {key!r}: {exc}") from None

    def update_from_text(self, text: str, source: str = "<config>") -> None:
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = line.split("=", 1)
            self.set(key.strip(), value, f"{source}:{lineno}")

    def update_from_file(self, path) -> None:
        with open(path, "r", encoding="utf-8") as fh:
            self.update_from_text(fh.read(), str(path))

    def update_from_pairs(self, pairs) -> None:
        for pair in pairs:
            if "=" not in pair:
                raise ConfigError(f"--set expects key=value, got {pair!r}")
            key, value = pair.split("=", 1)
            self.set(key.strip(), value, "--set")

    def __getitem__(self, key: str):
        return self.values[key]

    def sim_config(self) -> SimConfig:
        v = self.values
        return SimConfig(v["frames"], v["deform_amplitude"], v["correlation_length"],
                         v["blur_sigma"], v["noise_sigma"], v["seed"])

    def flow_params(self) -> FlowParams:
        v = self.values
        return FlowParams(v["flow.window_radius"], v["flow.pyramid_levels"],
                          v["flow.iterations_per_level"], v["flow.min_eigen_threshold"])

    def regularizer_spec(self) -> RegularizerSpec:
        v = self.values
        return RegularizerSpec(
            v["regularizer"],
            TVParams(v["tv.inner_iterations"], v["tv.rho"], v["tv.gs_sweeps"]),
            NLTVParams(v["nltv.patch_radius"], v["nltv.search_radius"], v["nltv.h"],
                       v["nltv.neighbors"], v["nltv.inner_iterations"], v["nltv.rho"]),
            FrameParams(v["frame.levels"], v["frame.inner_iterations"], v["frame.rho"]),
        )

    def stabilizer_config(self) -> StabilizerConfig:
        v = self.values
        return StabilizerConfig(
            delta=v["delta"], lam=v["lambda"], outer_iterations=v["outer_iterations"],
            inner_iterations=v["inner_iterations"], fidelity_tolerance=v["fidelity_tolerance"],
            inner_tolerance=v["inner_tolerance"], monotone=v["monotone"],
            flow=self.flow_params(), regularizer=self.regularizer_spec(), threads=v["threads"])

    def to_text(self, include_non_semantic: bool = True) -> str:
        keys = [k for k in SCHEMA if include_non_semantic or k not in NON_SEMANTIC]
        return "".join(f"{k}={format_setting(self.values[k])}\n" for k in keys)


def manifest_text(command: str, cfg: RunConfig, inputs=(), version: str = "") -> str:
    """Everything needed to rerun ``command`` and get the same bytes back."""
    lines = [f"# turbstab {version}".rstrip(), f"command={command}"]
    lines += [f"input={name}" for name in inputs]
    return "\n".join(lines) + "\n" + cfg.to_text(include_non_semantic=False)
