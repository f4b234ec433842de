import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magcd.fd import bump, d1, d2, dt_nodes, trapz_weights
from magcd.geometry import (FACES, BaseChart, DomainError, ProductMetric, classify_boundary, make_grid, metric_at,
                            ray_frame)


def test_fd_exact_on_quadratics():
    x = np.linspace(-1, 2, 9)
    h = x[1] - x[0]
    f = 3 * x**2 - x + 2
    assert np.allclose(d1(f, h, 0), 6 * x - 1)
    assert np.allclose(d2(f, h, 0), 6.0)
    t = np.linspace(0, 1, 5)
    assert np.allclose(dt_nodes(2 * t + 1, t[1] - t[0]), 2.0)


def test_trapz_and_bump():
    w = trapz_weights(11, 0.1)
    assert w.sum() == pytest.approx(1.0)
    x = np.linspace(0, 1, 101)
    b = bump(x, 0.2, 0.8, 3)
    assert b.max() == pytest.approx(1.0)
    assert np.all(b[x <= 0.2] == 0) and np.all(b[x >= 0.8] == 0)


def test_chart_validation():
    with pytest.raises(DomainError):
        BaseChart(r_range=(0.0, 1.0))
    with pytest.raises(DomainError):
        BaseChart(r_range=(2.0, 1.0))
    with pytest.raises(DomainError):
        BaseChart(metric_kind="custom")
    with pytest.raises(DomainError):
        ProductMetric(ell=0.0)


def test_metric_at_and_outside():
    ch = BaseChart()
    g, sb = metric_at(ch, 2.0, 0.1)
    assert np.allclose(np.diag(g), [1, 1, 4]) and sb == pytest.approx(2.0)
    with pytest.raises(DomainError):
        metric_at(ch, 5.0, 0.0)


def test_boundary_classification():
    dec = classify_boundary(ProductMetric(), 0.5)
    assert dec.plus_eps() == ["x1+"]
    assert dec.minus_eps() == ["x1-"]
    assert set(dec.complement_minus_eps()) == set(FACES) - {"x1-"}
    for bad in (0.0, -1.0, 2.0):
        with pytest.raises(DomainError):
            classify_boundary(ProductMetric(), bad)


def test_volume_matches_annular_sector():
    stg = make_grid(n=(9, 17, 9), nt=2)
    ch = stg.grid.metric.chart
    exact = 2.0 * 0.5 * (ch.r_range[1] ** 2 - ch.r_range[0] ** 2) * (ch.th_range[1] - ch.th_range[0])
    assert stg.grid.volume() == pytest.approx(exact, rel=1e-3)


def test_face_weights_area():
    g = make_grid(n=(9, 9, 9), nt=2).grid
    # x1 faces are annular sectors, r faces are rectangles of width r*dth
    ch = g.metric.chart
    sector = 0.5 * (ch.r_range[1] ** 2 - ch.r_range[0] ** 2) * (ch.th_range[1] - ch.th_range[0])
    assert g.face_weights("x1-").sum() == pytest.approx(sector, rel=1e-2)
    assert g.face_weights("r+").sum() == pytest.approx(2.0 * 3.0 * (ch.th_range[1] - ch.th_range[0]))


@settings(max_examples=25, deadline=None)
@given(st.floats(1.5, 4.0), st.floats(-2.0, 2.0))
def test_offchart_frame_is_unit_speed(cx, cy):
    ch = BaseChart()
    if ch.point_inside(cx, cy):
        return
    g = make_grid(n=(5, 12, 12), nt=2).grid
    fr = ray_frame(g, (cx, cy))
    er, eth = fr.unit_components(g)
    # |grad d|_g = 1 : (d_r)^2 + (d_th)^2 / r^2
    n2 = fr.d_r * er + fr.d_th * eth
    assert np.allclose(n2, 1.0, atol=1e-10)


def test_inside_center_rejected():
    g = make_grid(n=(5, 8, 8), nt=2).grid
    with pytest.raises(DomainError):
        ray_frame(g, (2.0, 0.0))
