"""Command-line driver: ``turbstab {simulate,stabilize,denoise,flow,metrics}``.

Settings come from defaults, then ``--config FILE``, then ``--seed``,
``--threads`` and ``--set key=value`` flags. Every output file is written
through a temporary file and renamed into place, and a command exits with
status 0 only after all of its outputs exist.
"""
from __future__ import annotations

import argparse
import glob
import logging
import os
import sys

from . import __version__
from .config import ConfigError, RunConfig, manifest_text
from .image_core import PGMError, atomic_write_bytes, load_pgm, pgm_bytes
from .metrics import MetricReport
from .optical_flow import estimate_flow, flow_to_text, load_flow
from .regularizers import prox
from .stabilizer import stabilize
from .turbulence_sim import degrade

log = logging.getLogger("turbstab")


class CommandError(RuntimeError):
    """A user-facing failure reported on stderr with a nonzero exit."""


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg.update_from_file(args.config)
    if args.seed is not None:
        cfg.set("seed", str(args.seed), "--seed")
    if args.threads is not None:
        cfg.set("threads", str(args.threads), "--threads")
    cfg.update_from_pairs(args.set or [])
    return cfg


def _expand_frames(patterns) -> list[str]:
    paths: list[str] = []
    for pat in patterns:
        if glob.has_magic(pat):
            hits = sorted(glob.glob(pat))
            if not hits:
                raise CommandError(f"no files match {pat!r}")
            paths += hits
        elif os.path.isfile(pat):
            paths.append(pat)
        else:
            raise CommandError(f"missing input file {pat!r}")
    return paths


def _write_outputs(out_dir: str, files: dict[str, bytes]) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name, payload in files.items():
        atomic_write_bytes(os.path.join(out_dir, name), payload)


def cmd_simulate(args, cfg: RunConfig) -> None:
    truth_bytes = open(args.truth, "rb").read()
    truth = load_pgm(args.truth)
    frames, flows = degrade(truth, cfg.sim_config())
    maxval = cfg["pgm_maxval"]
    files = {}
    for i, (f, phi) in enumerate(zip(frames, flows)):
        files[f"frame_{i:03d}.pgm"] = pgm_bytes(f, maxval)
        files[f"flow_{i:03d}.txt"] = flow_to_text(phi).encode("ascii")
    files["truth.pgm"] = truth_bytes
    files["manifest.txt"] = manifest_text("simulate", cfg, [args.truth], __version__).encode()
    _write_outputs(args.out, files)


def cmd_stabilize(args, cfg: RunConfig) -> None:
    paths = _expand_frames(args.frames)
    frames = [load_pgm(p) for p in paths]
    shapes = {f.shape for f in frames}
    if len(shapes) > 1:
        raise CommandError(f"frames have mixed sizes: {sorted(shapes)}")
    report = stabilize(frames, cfg.stabilizer_config())
    log.info("timings %s", {k: round(v, 3) for k, v in report.timings.items()})
    files = {
        "trace.csv": report.trace_csv().encode("ascii"),
        "manifest.txt": manifest_text("stabilize", cfg, paths, __version__).encode(),
        "restored.pgm": pgm_bytes(report.image, cfg["pgm_maxval"]),
    }
    _write_outputs(args.out, files)


def cmd_denoise(args, cfg: RunConfig) -> None:
    v = load_pgm(args.input)
    delta = cfg["delta"] if cfg["delta"] is not None else 0.5
    u = prox(cfg.regularizer_spec(), v, cfg["lambda"] / delta)
    atomic_write_bytes(args.out, pgm_bytes(u, cfg["pgm_maxval"]))


def cmd_flow(args, cfg: RunConfig) -> None:
    flow = estimate_flow(load_pgm(args.reference), load_pgm(args.target), cfg.flow_params())
    atomic_write_bytes(args.out, flow_to_text(flow).encode("ascii"))


def cmd_metrics(args, cfg: RunConfig) -> None:
    a, b = load_pgm(args.a), load_pgm(args.b)
    estimated = truth = None
    if args.estimated or args.truth:
        est_paths, true_paths = _expand_frames(args.estimated or []), _expand_frames(args.truth or [])
        if len(est_paths) != len(true_paths):
            raise CommandError("--estimated and --truth need the same number of flow files")
        estimated = [load_flow(p) for p in est_paths]
        truth = [load_flow(p) for p in true_paths]
    text = "\n".join(MetricReport.compute(a, b, estimated, truth).lines()) + "\n"
    if args.out:
        atomic_write_bytes(args.out, text.encode("ascii"))
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--seed", type=int, help="simulation seed (unsigned 64-bit)")
    common.add_argument("--threads", type=int, help="worker threads for per-frame work")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one setting; repeatable")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="turbstab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"turbstab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="degrade a truth image into frames")
    p.add_argument("truth")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stabilize", parents=[common], help="restore one image from frames")
    p.add_argument("frames", nargs="+", help="frame files or glob patterns")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_stabilize)

    p = sub.add_parser("denoise", parents=[common], help="apply the regularizer prox once")
    p.add_argument("input")
    p.add_argument("--out", required=True, help="output PGM")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("flow", parents=[common], help="estimate flow from reference to target")
    p.add_argument("reference")
    p.add_argument("target")
    p.add_argument("--out", required=True, help="output FLO-TXT file")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("metrics", parents=[common], help="compare two images")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--estimated", nargs="+", help="estimated flow files")
    p.add_argument("--truth", nargs="+", help="ground-truth flow files")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _resolve_config(args)
        args.func(args, cfg)
    except NotImplementedError as exc:
        print(f"turbstab: error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, CommandError, PGMError, ValueError, OSError, FloatingPointError) as exc:
        print(f"turbstab: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
