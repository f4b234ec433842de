import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magcd.geometry import BaseChart, DomainError
from magcd.transforms import (RayGeometry, build_operator, callable_transform, default_centers, fan_angles,
                              invert_transform, ray_intervals, ray_nodes)

CH = BaseChart()


def _length_in_sector(center, angle, n=200001):
    s = np.linspace(0, 10, n)
    x, y = center[0] + s * np.cos(angle), center[1] + s * np.sin(angle)
    r, th = np.hypot(x, y), np.arctan2(y, x)
    inside = (r >= CH.r_range[0]) & (r <= CH.r_range[1]) & (th >= CH.th_range[0]) & (th <= CH.th_range[1])
    return inside.sum() * (s[1] - s[0])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 15), st.floats(0.05, 0.95))
def test_clipped_length_matches_sampling(k, frac):
    c = default_centers(CH, 16)[k]
    angs = fan_angles(CH, c, 41)
    a = angs[0] + frac * (angs[-1] - angs[0])
    total = sum(b - a0 for a0, b in ray_intervals(CH, c, a))
    assert total == pytest.approx(_length_in_sector(c, a), abs=2e-4)


def test_ray_nodes_weights_sum_to_length():
    c = default_centers(CH, 16)[0]
    a = fan_angles(CH, c, 5)[2]
    s, w = ray_nodes(CH, c, a, 0.01)
    assert w.sum() == pytest.approx(sum(b - a0 for a0, b in ray_intervals(CH, c, a)))


def test_centers_outside_and_inside_rejected():
    for c in default_centers(CH, 16):
        assert not CH.point_inside(*c)
    with pytest.raises(DomainError):
        ray_intervals(CH, (2.0, 0.0), 0.0)
    with pytest.raises(ValueError):
        RayGeometry(CH, tuple(default_centers(CH, 2)), ds=0.0)


def test_operator_matches_callable_on_linear_field():
    """Bilinear interpolation is exact for f linear in (r, theta)."""
    geom = RayGeometry(CH, tuple(default_centers(CH, 4)), n_angles=6, mus=(0.5, 2.0), ds=0.01)
    r_nodes, th_nodes = np.linspace(*CH.r_range, 9), np.linspace(*CH.th_range, 9)
    R, TH = np.meshgrid(r_nodes, th_nodes, indexing="ij")
    op = build_operator(r_nodes, th_nodes, geom)
    grid_s = op.apply(2 * R - TH)
    ref = callable_transform(lambda x, y: 2 * np.hypot(x, y) - np.arctan2(y, x), geom)
    assert np.abs(grid_s - ref).max() < 1e-10 * np.abs(ref).max()


def test_inversion_recovers_smooth_field():
    geom = RayGeometry(CH, tuple(default_centers(CH, 12)), n_angles=24, mus=(0.25, 1.0, 4.0))
    r_nodes, th_nodes = np.linspace(*CH.r_range, 12), np.linspace(*CH.th_range, 12)
    R, TH = np.meshgrid(r_nodes, th_nodes, indexing="ij")
    f = np.exp(-((R - 2) ** 2) / 0.3 - TH**2 / 0.05)
    op = build_operator(r_nodes, th_nodes, geom)
    rec, rep = invert_transform(op.apply(f), op, 1e-4, r_nodes=r_nodes, th_nodes=th_nodes, real=True)
    assert np.linalg.norm(rec - f) < 0.1 * np.linalg.norm(f)
    assert rep.relative_residual < 0.05 and rep.n_unknowns == f.size


def test_inversion_argument_checks():
    geom = RayGeometry(CH, tuple(default_centers(CH, 1)), n_angles=3, mus=(1.0,))
    r_nodes, th_nodes = np.linspace(*CH.r_range, 8), np.linspace(*CH.th_range, 8)
    op = build_operator(r_nodes, th_nodes, geom)
    s = np.zeros(op.shape[0])
    with pytest.raises(ValueError, match="alpha"):
        invert_transform(s, op, 0.0)
    with pytest.raises(ValueError, match="too few"):
        invert_transform(s, op, 1e-3)
    with pytest.raises(ValueError, match="entries"):
        invert_transform(np.zeros(op.shape[0] + 1), op, 1e-3)
