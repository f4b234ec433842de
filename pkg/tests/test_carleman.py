import numpy as np
import pytest

from magcd.carleman import (BETA_MIN, CarlemanWeight, admissibility, boundary_estimate_terms, carleman_samples,
                            conjugated_operator, interior_samples, verify_boundary_estimate, verify_interior_scaling)
from magcd.forward_solver import apply_L


def test_weight_parameter_checks():
    with pytest.raises(ValueError):
        CarlemanWeight(8.0, beta=0.5)
    with pytest.raises(ValueError):
        CarlemanWeight(8.0, beta=1.0)
    with pytest.raises(ValueError):
        CarlemanWeight(-1.0)
    assert BETA_MIN == pytest.approx(1 / np.sqrt(3))


def test_tied_weight_is_monotone_in_x1():
    w = CarlemanWeight.tied(12.0, 0.8, ell=1.0)
    x1 = np.linspace(-1, 1, 41)
    assert np.all(w.dphi_s(x1) >= -1e-12)
    # K = -lam^2 kappa^2 + 2 lam s y - s^2 y^2 matches the completed square
    y = w.y(x1)
    assert np.allclose(w.K(x1), -w.lam**2 * (1 - w.beta**2) + w.lam**2 - (w.lam - w.s * y) ** 2)


def test_samples_are_admissible(small_stg):
    for v in carleman_samples(small_stg, n=4, seed=5):
        assert admissibility(small_stg, v) is None
    bad = np.ones(small_stg.shape)
    assert admissibility(small_stg, bad) == "v(0) != 0"
    bad[0] = 0
    assert "lateral" in admissibility(small_stg, bad)


def test_conjugated_operator_matches_explicit_weight(small_stg, small_coeffs):
    """e^{-phi} L e^{phi} v computed with the explicit exponential at a small lambda."""
    stg = small_stg
    g = stg.grid
    v = interior_samples(stg, n=1, seed=3)[0].astype(complex)
    w = CarlemanWeight(1.5, 0.8, 0.0, g.metric.ell)
    T = stg.t[:, None, None, None]
    phi = w.phi(T, g.X1[None])
    direct = np.exp(-phi) * apply_L(stg, small_coeffs, np.exp(phi) * v)
    conj = conjugated_operator(stg, small_coeffs, w, v)
    I = (slice(1, -1),) * 4
    assert np.abs(conj[I] - direct[I]).max() < 0.05 * np.abs(direct[I]).max()


def test_boundary_terms_vanish_for_zero(small_stg, small_coeffs):
    row = boundary_estimate_terms(small_stg, small_coeffs, CarlemanWeight.tied(8.0), np.zeros(small_stg.shape))
    assert row["lhs"] == 0 and row["rhs"] == 0 and row["ratio"] == 0.0


def test_boundary_estimate_harness(small_stg, small_coeffs):
    rep = verify_boundary_estimate(small_stg, small_coeffs, 0.8, (4.0, 8.0, 16.0),
                                   carleman_samples(small_stg, n=3) + [np.ones(small_stg.shape)])
    assert rep.rejected and rep.rejected[0][0] == 3
    assert len(rep.rows) == 9
    assert np.isfinite(rep.C) and rep.zeroth_slope == pytest.approx(2.0, abs=1e-6)


def test_interior_scaling_reports_both_kinds(small_stg, small_coeffs):
    rep = verify_interior_scaling(small_stg, small_coeffs, 0.8, (4.0, 8.0), interior_samples(small_stg, n=2))
    assert {r["kind"] for r in rep.rows} == {"direct", "adjoint"}
    assert np.isfinite(rep.C)
