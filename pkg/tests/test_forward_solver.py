import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magcd.coefficients import CoefficientField
from magcd.forward_solver import (Evolution, IBVPProblem, SolverError, apply_L, coeff_stencil, dn_map,
                                  magnetic_stencil, normal_derivative, solve_ibvp, stencil_apply)
from magcd.geometry import classify_boundary, make_grid
from magcd.pipeline import smooth_dirichlet_data


def _pairing_defect(n):
    from magcd.coefficients import background
    from magcd.fd import bump
    stg = make_grid(n=(n, n, n), nt=2)
    g = stg.grid
    co = background(stg)
    box = bump(g.X1, -1, 1, 2) * bump(g.Rm, 1, 3, 2) * bump(g.THm, g.th[0], g.th[-1], 2)
    u = box * np.exp(1j * (g.X1 + g.Rm)) * np.cos(3 * g.THm)
    v = box * (1 + g.X1 * g.Rm) * np.exp(-1j * g.THm)
    st = magnetic_stencil(g, co.A[:, 1], co.q[1])
    stt = magnetic_stencil(g, co.A[:, 1], co.q[1], transpose=True)
    a = g.integrate(stencil_apply(g, st, u) * v)
    b = g.integrate(u * stencil_apply(g, stt, v))
    return abs(a - b) / abs(a)


def test_transpose_is_bilinear_adjoint():
    """int (S u) v = int u (S^t v) for u, v vanishing to second order on the boundary."""
    coarse, fine = _pairing_defect(12), _pairing_defect(24)
    assert fine < 1e-2
    assert fine < coarse


def test_solver_reproduces_exact_discrete_solution(small_stg, small_coeffs, rng):
    """Manufacture F = L_h u for a discrete u; the solve must return u to round-off."""
    stg = small_stg
    g = stg.grid
    u = np.zeros(stg.shape, complex)
    u[1:] = rng.standard_normal((stg.nt,) + g.shape) + 1j * rng.standard_normal((stg.nt,) + g.shape)
    # backward Euler residual of u, interior nodes
    prov = coeff_stencil(stg, small_coeffs)
    F = np.zeros_like(u)
    for it in range(1, stg.nt + 1):
        F[it] = (u[it] - u[it - 1]) / stg.dt + stencil_apply(g, prov(it), u[it])
    sol = solve_ibvp(IBVPProblem(stg, small_coeffs, f=u, F=F))
    assert np.abs(sol - u).max() < 1e-8 * np.abs(u).max()


def test_incompatible_initial_data_rejected(small_stg, small_coeffs):
    f = np.ones(small_stg.shape, complex)
    with pytest.raises(ValueError):
        IBVPProblem(small_stg, small_coeffs, f=f)


def test_scheme_name_checked(small_stg, small_coeffs):
    with pytest.raises(ValueError):
        Evolution(small_stg, coeff_stencil(small_stg, small_coeffs), scheme="rk4")


@pytest.mark.parametrize("order", [2, 3])
def test_normal_derivative_polynomial(order):
    stg = make_grid(n=(9, 9, 9), nt=2)
    g = stg.grid
    u = (g.X1**2 + g.Rm**2 + g.THm**2) * np.ones(g.shape)
    u = np.stack([u, u])
    for face, expect in (("x1-", 2.0), ("x1+", 2.0), ("r-", -2.0), ("r+", 6.0)):
        d = normal_derivative(g, u, face, lead=1, order=order)
        assert np.allclose(d, expect)
    with pytest.raises(ValueError):
        normal_derivative(g, u, "x1-", order=4)


def test_dn_map_region_and_faces(small_stg, small_coeffs):
    f = smooth_dirichlet_data(small_stg)
    u = solve_ibvp(IBVPProblem(small_stg, small_coeffs, f=f))
    reg = classify_boundary(small_stg.grid.metric, 0.5)
    rec = dn_map(small_stg, small_coeffs, u, region=reg)
    assert rec.faces() == ["x1+"]
    with pytest.raises(ValueError):
        dn_map(small_stg, small_coeffs, u)
    with pytest.raises(ValueError):
        dn_map(small_stg, small_coeffs, u, faces=["x2+"])


def test_lu_reuse_matches_fresh_factorizations(small_stg, small_coeffs):
    f = smooth_dirichlet_data(small_stg, seed=2)
    prov = coeff_stencil(small_stg, small_coeffs)
    runs = []
    for reuse in (0, 100):
        ev = Evolution(small_stg, prov, boundary=lambda it: f[it], lu_reuse=reuse)
        runs.append((ev.run(), ev.stats["factorizations"]))
    assert np.abs(runs[0][0] - runs[1][0]).max() < 1e-9 * np.abs(runs[0][0]).max()
    assert runs[1][1] < runs[0][1]


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 2.0), st.floats(-1.0, 1.0))
def test_linearity_in_data(a, b):
    stg = make_grid(n=(7, 7, 7), nt=4)
    co = CoefficientField.zeros(stg)
    f1, f2 = smooth_dirichlet_data(stg, 0), smooth_dirichlet_data(stg, 1)
    s = lambda f: solve_ibvp(IBVPProblem(stg, co, f=f))
    lhs = s(a * f1 + b * f2)
    rhs = a * s(f1) + b * s(f2)
    assert np.abs(lhs - rhs).max() <= 1e-9 * max(1.0, np.abs(lhs).max())


def test_apply_L_zero_on_constant_in_free_case():
    stg = make_grid(n=(7, 7, 7), nt=4)
    co = CoefficientField.zeros(stg)
    u = np.ones(stg.shape, complex)
    assert np.abs(apply_L(stg, co, u)).max() < 1e-12
