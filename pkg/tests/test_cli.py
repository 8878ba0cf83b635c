import numpy as np
import pytest

from turbstab.cli import main
from turbstab.image_core import load_pgm, save_pgm
from turbstab.metrics import psnr
from turbstab.optical_flow import load_flow
from turbstab.turbulence_sim import synthetic_scene

FAST = ["--set", "outer_iterations=1", "--set", "inner_iterations=3"]


@pytest.fixture
def truth_file(tmp_path):
    path = tmp_path / "truth.pgm"
    save_pgm(synthetic_scene(40, seed=3), path)
    return path


def simulate(truth_file, out, *extra):
    assert main(["simulate", str(truth_file), "--out", str(out), "--set", "frames=3", *extra]) == 0


def read_all(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_simulate_file_set(truth_file, tmp_path):
    simulate(truth_file, tmp_path / "sim")
    names = sorted(p.name for p in (tmp_path / "sim").iterdir())
    assert names == ["flow_000.txt", "flow_001.txt", "flow_002.txt", "frame_000.pgm",
                     "frame_001.pgm", "frame_002.pgm", "manifest.txt", "truth.pgm"]
    manifest = (tmp_path / "sim" / "manifest.txt").read_text()
    assert "seed=0" in manifest and "frames=3" in manifest and manifest.startswith("# turbstab ")


def test_simulate_deterministic_and_seeded(truth_file, tmp_path):
    simulate(truth_file, tmp_path / "a")
    simulate(truth_file, tmp_path / "b")
    assert read_all(tmp_path / "a") == read_all(tmp_path / "b")
    simulate(truth_file, tmp_path / "c", "--seed", "5")
    assert (tmp_path / "c" / "frame_000.pgm").read_bytes() != (tmp_path / "a" / "frame_000.pgm").read_bytes()


def test_simulate_identity_pipeline(truth_file, tmp_path):
    simulate(truth_file, tmp_path / "s", "--set", "deform_amplitude=0", "--set", "blur_sigma=0",
             "--set", "noise_sigma=0")
    for i in range(3):
        assert (tmp_path / "s" / f"frame_{i:03d}.pgm").read_bytes() == truth_file.read_bytes()


@pytest.mark.parametrize("kind", ["tv", "nltv", "frame"])
def test_stabilize_smoke(truth_file, tmp_path, kind):
    simulate(truth_file, tmp_path / "sim")
    out = tmp_path / kind
    assert main(["stabilize", str(tmp_path / "sim" / "frame_*.pgm"), "--out", str(out),
                 "--set", f"regularizer={kind}", *FAST]) == 0
    trace = (out / "trace.csv").read_text().splitlines()
    assert trace[0] == "outer,inner,fidelity,objective" and len(trace) > 1
    assert load_pgm(out / "restored.pgm").shape == (40, 40)
    assert f"regularizer={kind}" in (out / "manifest.txt").read_text()


def test_stabilize_identical_frames_fixed_point(truth_file, tmp_path):
    frames = [tmp_path / f"f{i}.pgm" for i in range(3)]
    for f in frames:
        f.write_bytes(truth_file.read_bytes())
    out = tmp_path / "out"
    assert main(["stabilize", *map(str, frames), "--out", str(out), "--set", "lambda=1e8"]) == 0
    diff = np.abs(load_pgm(out / "restored.pgm") - load_pgm(truth_file))
    assert diff.max() <= 1 / 255 + 1e-12


def test_stabilize_missing_file_leaves_nothing(truth_file, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["stabilize", str(truth_file), str(tmp_path / "absent.pgm"), "--out", str(out)])
    assert code != 0
    assert "absent.pgm" in capsys.readouterr().err
    assert not (out / "restored.pgm").exists()


def test_stabilize_mixed_sizes(truth_file, tmp_path):
    other = tmp_path / "small.pgm"
    save_pgm(synthetic_scene(36), other)
    assert main(["stabilize", str(truth_file), str(other), "--out", str(tmp_path / "o")]) != 0


def test_curvelet_reports_extension_point(truth_file, tmp_path, capsys):
    code = main(["denoise", str(truth_file), "--out", str(tmp_path / "d.pgm"), "--set", "regularizer=curvelet"])
    assert code != 0
    assert "TightFrame" in capsys.readouterr().err
    assert not (tmp_path / "d.pgm").exists()


def test_bad_config_exit(truth_file, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("frames=2\nwobble=3\n")
    assert main(["simulate", str(truth_file), "--out", str(tmp_path / "x"), "--config", str(cfg)]) != 0
    assert "bad.cfg:2" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


def test_denoise_examples(tmp_path, rng):
    const = tmp_path / "const.pgm"
    save_pgm(np.full((32, 32), 0.4), const)
    assert main(["denoise", str(const), "--out", str(tmp_path / "c.pgm")]) == 0
    assert (tmp_path / "c.pgm").read_bytes() == const.read_bytes()

    noisy_img = rng.random((32, 32))
    noisy = tmp_path / "noisy.pgm"
    save_pgm(noisy_img, noisy)
    assert main(["denoise", str(noisy), "--out", str(tmp_path / "n.pgm"), "--set", "lambda=5e5"]) == 0
    assert np.abs(load_pgm(tmp_path / "n.pgm") - load_pgm(noisy)).max() <= 1 / 255 + 1e-12

    clean = np.zeros((32, 32))
    clean[:, 16:] = 1.0
    clean = 0.2 + 0.6 * clean
    step = tmp_path / "step.pgm"
    save_pgm(clean + 0.08 * rng.standard_normal((32, 32)), step)
    assert main(["denoise", str(step), "--out", str(tmp_path / "s.pgm"), "--set", "lambda=2"]) == 0
    assert psnr(load_pgm(tmp_path / "s.pgm"), clean) > psnr(load_pgm(step), clean)


def test_flow_of_identical_images(truth_file, tmp_path):
    out = tmp_path / "f.txt"
    assert main(["flow", str(truth_file), str(truth_file), "--out", str(out)]) == 0
    flow = load_flow(out)
    assert not flow.dx.any() and not flow.dy.any()


def test_metrics_output(truth_file, tmp_path, capsys):
    simulate(truth_file, tmp_path / "sim")
    flows = sorted(str(p) for p in (tmp_path / "sim").glob("flow_*.txt"))
    assert main(["metrics", str(truth_file), str(truth_file), "--estimated", *flows, "--truth", *flows]) == 0
    assert capsys.readouterr().out.splitlines() == ["rmse=0.000000", "psnr=inf", "flow_epe=0.000000"]
    assert main(["metrics", str(truth_file), str(truth_file), "--estimated", flows[0]]) != 0
