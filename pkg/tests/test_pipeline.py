import numpy as np
import pytest

from magcd.carleman import CarlemanWeight
from magcd.coefficients import background, gradient_pair, nongradient_pair, q_pair
from magcd.geometry import make_grid
from magcd.pipeline import (ExperimentPair, IdentityLedger, SweepSpec, boundary_scaling, curl_witness,
                            direct_samples, dn_gap, evaluate_identity, extract_ray_data, fan_profiles,
                            identity_sweep, potential_fit, smooth_dirichlet_data, z_term_vanishing)


@pytest.fixture(scope="module")
def stg():
    return make_grid(n=(12, 12, 12), nt=16)


@pytest.fixture(scope="module")
def base(stg):
    return background(stg)


def test_identical_pair_gives_zero_ledgers(stg, base):
    pair = ExperimentPair(stg, base, base)
    led = evaluate_identity(pair, CarlemanWeight(8.0))
    assert led.defect == 0 and led.scale == 0 and led.rhs_total == 0


def test_boundary_mismatch_rejected(stg, base):
    from magcd.coefficients import CoefficientField
    A = base.A.copy()
    A[0] += 1.0
    with pytest.raises(ValueError):
        ExperimentPair(stg, base, CoefficientField(A, base.q))


def test_gauge_equalized_pair_is_identical(stg, base):
    c1, c2, gauge = gradient_pair(stg, base)
    pair = ExperimentPair(stg, c1, c2, gradient_pair=True, gauge=gauge)
    assert not pair.identical()
    assert pair.gauge_equalized().identical()


def test_dn_gap_gauge_part_is_discretization_error():
    """The gradient-pair gap shrinks under refinement, the non-gradient gap does not."""
    gaps = []
    for n in (12, 20):
        stg = make_grid(n=(n, n, n), nt=16)
        base = background(stg)
        f = smooth_dirichlet_data(stg)
        c1, c2, gauge = gradient_pair(stg, base)
        n1, n2 = nongradient_pair(stg, base)
        gaps.append((dn_gap(ExperimentPair(stg, c1, c2, gradient_pair=True, gauge=gauge), f).sup(),
                     dn_gap(ExperimentPair(stg, n1, n2), f).sup()))
    (g0, n0), (g1, n1_) = gaps
    assert g1 < 0.2 * g0
    assert n1_ > 0.8 * n0
    assert g1 < n1_


def test_identity_balances_on_small_grid(stg, base):
    q1, q2 = q_pair(stg, base)
    pair = ExperimentPair(stg, q1, q2)
    prof = fan_profiles(stg, None, 8)[3]
    led = identity_sweep(pair, CarlemanWeight(8.0), SweepSpec(None, [prof], (1.0,)), lu_reuse=64)[0]
    assert led.scale > 0
    assert led.defect < 0.25 * led.scale
    row = led.row()
    assert row["defect"] == led.defect and "Z_term_re" in row


def test_sweep_columns_match_single_runs(stg, base):
    n1, n2 = nongradient_pair(stg, base)
    pair = ExperimentPair(stg, n1, n2)
    profs = fan_profiles(stg, (4.5, 0.0), 3)
    w = CarlemanWeight(8.0)
    many = identity_sweep(pair, w, SweepSpec((4.5, 0.0), profs, (0.5, 1.0)))
    assert [(L.profile, L.mu) for L in many] == [(0, 0.5), (1, 0.5), (2, 0.5), (0, 1.0), (1, 1.0), (2, 1.0)]
    one = identity_sweep(pair, w, SweepSpec((4.5, 0.0), [profs[1]], (1.0,)))[0]
    assert abs(one.rhs_total - many[4].rhs_total) <= 1e-9 * abs(one.rhs_total)


def test_direct_samples_vanish_for_q_on_gradient_pair(stg, base):
    c1, c2, gauge = gradient_pair(stg, base)
    pair = ExperimentPair(stg, c1, c2, gradient_pair=True, gauge=gauge)
    spec = SweepSpec((4.5, 0.0), fan_profiles(stg, (4.5, 0.0), 4), (1.0,))
    assert np.abs(direct_samples(pair, CarlemanWeight(8.0), spec, "q")).max() == 0
    assert np.abs(direct_samples(pair, CarlemanWeight(8.0), spec, "A")).max() > 0


def _ledger(lam, boundary, z):
    return IdentityLedger(lam, 1.0, (0.0, 0.0), 0, 0.0, z, 0j, 0j, boundary, boundary)


def test_ladder_reports():
    lams = (8.0, 16.0, 32.0)
    good = [_ledger(l, 3 * np.sqrt(l), 1.0 / l) for l in lams]
    assert boundary_scaling(good)["passed"]
    assert z_term_vanishing(good)["slope"] == pytest.approx(-2.0)
    bad = [_ledger(l, l**1.5, 1.0) for l in lams]
    assert not boundary_scaling(bad)["passed"]
    with pytest.raises(ValueError):
        z_term_vanishing(good[:2])
    assert z_term_vanishing([_ledger(l, 0j, 0j) for l in lams])["trivial"]


def test_extract_ray_data_scaling():
    led = [_ledger(8.0, 1j, 2.0 + 0j)]
    assert extract_ray_data(led, "A")[0] == pytest.approx(1j / (-16j))
    assert extract_ray_data(led, "q")[0] == pytest.approx(1j)


def test_potential_fit_recovers_gradient_moments():
    r, th = np.linspace(1, 3, 15), np.linspace(-np.pi / 6, np.pi / 6, 15)
    R, TH = np.meshgrid(r, th, indexing="ij")
    Psi = np.sin(np.pi * (R - 1) / 2) ** 2 * np.cos(3 * TH) ** 2
    mu, k = 1.0, 0.6
    hr, ht = r[1] - r[0], th[1] - th[0]
    fields = np.stack([-1j * mu * k * Psi, np.gradient(Psi, hr, axis=0), np.gradient(Psi, ht, axis=1)])
    fit = potential_fit(fields, r, th, mu, k)
    assert np.abs(fit - Psi)[1:-1, 1:-1].max() < 1e-2
    total, t1, t2 = curl_witness(fields, mu, k, r)
    assert np.abs(total)[2:-2].max() < 0.05 * np.abs(t1).max()
