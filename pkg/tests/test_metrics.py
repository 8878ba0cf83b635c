import math

import numpy as np
import pytest

from turbstab.image_core import FlowField, warp_apply
from turbstab.metrics import MetricReport, fidelity, flow_epe, format_value, psnr, rmse


def test_rmse_examples(rng):
    assert rmse(np.zeros((4, 4)), np.zeros((4, 4))) == 0.0
    assert rmse(np.zeros((4, 4)), np.full((4, 4), 0.5)) == pytest.approx(0.5, abs=1e-15)
    a, b = rng.random((9, 7)), rng.random((9, 7))
    assert abs(rmse(a, b) - math.sqrt(((a - b) ** 2).mean())) <= 1e-15


def test_rmse_symmetry_and_triangle(rng):
    for _ in range(20):
        a, b, c = rng.random((3, 8, 8))
        assert rmse(a, b) == rmse(b, a)
        assert rmse(a, c) <= rmse(a, b) + rmse(b, c) + 1e-15


def test_psnr_values():
    z = np.zeros((10, 10))
    assert psnr(z, z + 0.1) == pytest.approx(20.0, abs=1e-9)
    assert psnr(z, z + 0.01) == pytest.approx(40.0, abs=1e-9)
    assert psnr(z, z) == math.inf


def test_psnr_decreases_with_noise(rng):
    clean = rng.random((32, 32))
    noise = rng.standard_normal((32, 32))
    values = [psnr(clean + s * noise, clean) for s in (0.01, 0.02, 0.05, 0.1, 0.3)]
    assert all(x > y for x, y in zip(values, values[1:]))


def test_shape_mismatch():
    with pytest.raises(ValueError):
        rmse(np.zeros((3, 3)), np.zeros((3, 4)))
    with pytest.raises(ValueError):
        flow_epe([FlowField.zeros((3, 3))], [FlowField.zeros((4, 3))])
    with pytest.raises(ValueError):
        flow_epe([], [])


def test_fidelity(rng):
    u = rng.random((12, 12))
    phi = FlowField(rng.normal(0, 1, (12, 12)), rng.normal(0, 1, (12, 12)))
    assert fidelity(u, [warp_apply(u, phi)], [phi]) == 0.0
    zero = FlowField.zeros((12, 12))
    assert fidelity(u, [u + 0.3], [zero]) == pytest.approx(0.09, abs=1e-15)
    frames = [rng.random((12, 12)) for _ in range(3)]
    flows = [phi, zero, phi]
    direct = sum(((warp_apply(u, p) - f) ** 2).sum() for f, p in zip(frames, flows)) / (3 * 144)
    assert abs(fidelity(u, frames, flows) - direct) <= 1e-15


def test_flow_epe(rng):
    t = [FlowField(rng.random((5, 6)), rng.random((5, 6))) for _ in range(2)]
    assert flow_epe(t, t) == 0.0
    assert flow_epe([FlowField.constant((4, 4), 3, 4)], [FlowField.zeros((4, 4))]) == pytest.approx(5.0)
    e = [FlowField(rng.random((5, 6)), rng.random((5, 6))) for _ in range(2)]
    direct = np.mean([np.hypot(a.dx - b.dx, a.dy - b.dy) for a, b in zip(e, t)])
    assert abs(flow_epe(e, t) - direct) <= 1e-15


def test_report_lines():
    a = np.full((4, 4), 0.25)
    assert MetricReport.compute(a, a).lines() == ["rmse=0.000000", "psnr=inf"]
    flows = [FlowField.zeros((4, 4))]
    lines = MetricReport.compute(a, a + 0.1, flows, flows).lines()
    assert lines == ["rmse=0.1", "psnr=20", "flow_epe=0.000000"]
    assert format_value(1 / 3) == "0.333333"
