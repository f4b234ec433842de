import numpy as np
import pytest

from magcd.coefficients import (CoefficientField, apply_gauge, background, curl_x1r, divergence, gauge_blob,
                                gradient_pair, nongradient_pair, norm2, q_pair, q_tilde)


def test_shape_and_finiteness_checks(small_stg):
    with pytest.raises(ValueError):
        CoefficientField(np.zeros((2,) + small_stg.shape), np.zeros(small_stg.shape))
    A = np.zeros((3,) + small_stg.shape)
    A[0, 0, 0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        CoefficientField(A, np.zeros(small_stg.shape))


def test_background_is_seeded(small_stg):
    a, b = background(small_stg, seed=3), background(small_stg, seed=3)
    assert a.same_as(b)
    assert not a.same_as(background(small_stg, seed=4))


def test_gauge_vanishes_and_pair_equal_on_boundary(small_stg, small_coeffs):
    c1, c2, gauge = gradient_pair(small_stg, small_coeffs)
    g = small_stg.grid
    assert gauge.vanishes_on_boundary(g)
    assert c1.equal_on_boundary(c2, g)
    n1, n2 = nongradient_pair(small_stg, small_coeffs)
    assert n1.equal_on_boundary(n2, g)
    q1, q2 = q_pair(small_stg, small_coeffs)
    assert np.array_equal(q1.A, q2.A)
    assert np.abs(q2.q - q1.q)[:, g.boundary_mask()].max() == 0


def test_gradient_has_no_curl():
    from magcd.geometry import make_grid
    stg = make_grid(n=(33, 33, 9), nt=2)
    g = stg.grid
    gauge, grad = gauge_blob(g)
    c = curl_x1r(g, grad)
    assert np.abs(c).max() < 0.05 * np.abs(grad).max()


def test_divergence_of_constant_radial_field(small_stg):
    g = small_stg.grid
    A = np.zeros((3,) + g.shape)
    A[1] = 1.0  # div = (1/r) d_r (r * 1) = 1/r
    assert np.allclose(divergence(g, A), 1.0 / g.Rm * np.ones(g.shape))


def test_q_tilde_and_norm(small_stg, small_coeffs):
    g = small_stg.grid
    qt = q_tilde(g, small_coeffs.A, small_coeffs.q, it=2)
    assert qt.shape == g.shape
    assert np.all(norm2(g, small_coeffs.A[:, 2]) >= 0)


def test_apply_gauge_round_trip(small_stg, small_coeffs):
    gauge, grad = gauge_blob(small_stg.grid)
    fwd = apply_gauge(small_stg.grid, small_coeffs, gauge, exact_grad=grad)
    from magcd.coefficients import GaugeFunction
    back = apply_gauge(small_stg.grid, fwd, GaugeFunction(-gauge.Psi), exact_grad=-grad)
    assert np.abs(back.A - small_coeffs.A).max() < 1e-14
