"""Covector fields A, potentials q, gauge functions and phantom pairs.

Covector components are stored in the chart basis (dx1, dr, dtheta) on the
space-time grid, array shape (3, nt+1, n1, nr, nth).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fd import bump, d1, d2
from .geometry import Grid, SpaceTimeGrid


@dataclass
class CoefficientField:
    A: np.ndarray  # (3, nt+1, n1, nr, nth) real
    q: np.ndarray  # (nt+1, n1, nr, nth) complex

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.q = np.asarray(self.q, dtype=complex)
        if self.A.ndim != 5 or self.A.shape[0] != 3 or self.A.shape[1:] != self.q.shape:
            raise ValueError("A must have shape (3,) + q.shape")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.q))):
            raise ValueError("coefficients must be finite")

    @classmethod
    def zeros(cls, stg: SpaceTimeGrid):
        return cls(np.zeros((3,) + stg.shape), np.zeros(stg.shape, complex))

    def at(self, it):
        return self.A[:, it], self.q[it]

    def smoothness(self, grid: Grid):
        """Largest scaled second difference of A (the smoothness proxy)."""
        return max(float(np.abs(d2(self.A[c], h, ax + 1)).max())
                   for c in range(3) for ax, h in enumerate(grid.h))

    def equal_on_boundary(self, other: "CoefficientField", grid: Grid, tol=1e-12):
        m = grid.boundary_mask()
        return bool(np.abs(self.A[:, :, m] - other.A[:, :, m]).max() <= tol)

    def same_as(self, other: "CoefficientField"):
        return bool(np.array_equal(self.A, other.A) and np.array_equal(self.q, other.q))


@dataclass
class GaugeFunction:
    Psi: np.ndarray  # (n1, nr, nth) or (nt+1, n1, nr, nth)
    grad: Optional[np.ndarray] = None  # exact spatial gradient, if known

    def __neg__(self):
        return GaugeFunction(-self.Psi, None if self.grad is None else -self.grad)

    def vanishes_on_boundary(self, grid: Grid, tol=1e-12):
        m = grid.boundary_mask()
        return bool(np.abs(self.Psi[..., m]).max() <= tol)


def _space_axes(arr):
    return arr.ndim - 3


def divergence(grid: Grid, A, it=None):
    """delta_g A = (1/sqrt b) sum_j d_j(sqrt b g^{jj} A_j) for one time slice or all."""
    A = A.A if isinstance(A, CoefficientField) else np.asarray(A)
    if it is not None:
        A = A[:, it]
    o = _space_axes(A[0])
    sb = grid.sqrtb
    out = d1(A[0], grid.h[0], o)
    out = out + d1(sb * A[1], grid.h[1], o + 1) / sb
    out = out + d1(sb * grid.ginv[2] * A[2], grid.h[2], o + 2) / sb
    return out


def norm2(grid: Grid, A):
    """|A|_g^2 = A1^2 + Ar^2 + Ath^2 / P."""
    return A[0] ** 2 + A[1] ** 2 + A[2] ** 2 * grid.ginv[2]


def q_tilde(grid: Grid, A, q, it=None):
    """q + i delta_g A - |A|_g^2."""
    A = A.A if isinstance(A, CoefficientField) else np.asarray(A)
    if it is not None:
        A, q = A[:, it], q[it]
    return q + 1j * divergence(grid, A) - norm2(grid, A)


def gradient(grid: Grid, Psi):
    o = _space_axes(Psi)
    return np.stack([d1(Psi, grid.h[j], o + j) for j in range(3)])


def apply_gauge(grid: Grid, coeffs: CoefficientField, gauge: GaugeFunction, exact_grad=None):
    """A + grad_x Psi (spatial gradient only).

    exact_grad, or else gauge.grad, overrides the difference quotient; the
    one-sided boundary quotients of a compactly supported Psi need not vanish.
    """
    if exact_grad is None:
        exact_grad = gauge.grad
    g = gradient(grid, gauge.Psi) if exact_grad is None else np.asarray(exact_grad)
    if g.ndim == 4:
        g = g[:, None]
    return CoefficientField(coeffs.A + g, coeffs.q.copy())


def curl_x1r(grid: Grid, A):
    """d1 A_r - d_r A_1, the (x1, r) component of dA."""
    A = A.A if isinstance(A, CoefficientField) else np.asarray(A)
    o = _space_axes(A[0])
    return d1(A[1], grid.h[0], o) - d1(A[0], grid.h[1], o + 1)


# ---------------------------------------------------------------- phantoms


def boundary_cutoff(grid: Grid, margin=0.0, power=2):
    """Product bump vanishing on every face of the coordinate box."""
    (a1, b1), (ar, br), (at, bt) = (grid.x1[[0, -1]], grid.r[[0, -1]], grid.th[[0, -1]])
    m1, mr, mt = (margin * (b - a) for a, b in ((a1, b1), (ar, br), (at, bt)))
    return (bump(grid.X1, a1 + m1, b1 - m1, power) * bump(grid.Rm, ar + mr, br - mr, power)
            * bump(grid.THm, at + mt, bt - mt, power))


def _blob(grid: Grid, c1, cr, cth, w1, wr, wth, power=3):
    return (bump(grid.X1, c1 - w1, c1 + w1, power) * bump(grid.Rm, cr - wr, cr + wr, power)
            * bump(grid.THm, cth - wth, cth + wth, power))


def background(stg: SpaceTimeGrid, amp=0.3, q0=0.5, seed=0):
    """Smooth, time-dependent reference coefficients (A1, q1)."""
    rng = np.random.default_rng(seed)
    g = stg.grid
    t = stg.t[:, None, None, None]
    k = rng.uniform(0.5, 1.5, size=(3, 3))
    ph = rng.uniform(0, 2 * np.pi, size=(3, 3))
    X, R, TH = g.X1[None], g.Rm[None], g.THm[None]
    A = np.stack([
        amp * (k[c, 0] * np.cos(k[c, 1] * X + ph[c, 0]) * np.sin(k[c, 2] * R + ph[c, 1])
               * (1 + 0.5 * np.cos(2 * np.pi * t + ph[c, 2])) + 0.0 * TH)
        for c in range(3)])
    q = q0 * (1.0 + 0.3 * np.sin(np.pi * t) * np.cos(X) * np.cos(R - 2.0) + 0.0 * TH)
    return CoefficientField(A, q.astype(complex))


def gauge_blob(grid: Grid, amp=0.5, center=(0.1, 2.0, 0.05), width=(0.7, 0.8, 0.4)):
    """Time-independent gauge Psi compactly supported inside M, with exact gradient."""
    c1, cr, ct = center
    w1, wr, wt = width
    p = 4

    def f_and_df(x, c, w):
        s = (x - c) / w
        inside = np.abs(s) < 1
        f = np.where(inside, (1 - s**2) ** p, 0.0)
        df = np.where(inside, -2 * p * s * (1 - s**2) ** (p - 1) / w, 0.0)
        return f, df

    f1, g1 = f_and_df(grid.X1, c1, w1)
    fr, gr = f_and_df(grid.Rm, cr, wr)
    ft, gt = f_and_df(grid.THm, ct, wt)
    Psi = amp * f1 * fr * ft
    grad = amp * np.stack(np.broadcast_arrays(g1 * fr * ft, f1 * gr * ft, f1 * fr * gt))
    return GaugeFunction(Psi, grad), grad


def gradient_pair(stg: SpaceTimeGrid, base: CoefficientField, amp=0.5, **kw):
    gauge, grad = gauge_blob(stg.grid, amp, **kw)
    return base, apply_gauge(stg.grid, base, gauge, exact_grad=grad), gauge


def nongradient_pair(stg: SpaceTimeGrid, base: CoefficientField, amp=0.5):
    """Pair differing by (0, c(t) x1 chi(x), 0), chi a boundary cutoff."""
    g = stg.grid
    c = 1.0 + 0.5 * np.sin(np.pi * stg.t)
    chi = boundary_cutoff(g)
    dA = np.zeros_like(base.A)
    dA[1] = amp * c[:, None, None, None] * (g.X1 * chi)[None]
    return base, CoefficientField(base.A + dA, base.q.copy())


def q_bump(stg: SpaceTimeGrid, amp=1.0, center=(0.5, -0.1, 2.1, 0.0), width=(0.4, 0.7, 0.7, 0.35)):
    """Smooth bump in (t, x1, r, theta) compactly supported in the interior."""
    g = stg.grid
    ct, c1, cr, cth = center
    wt, w1, wr, wth = width
    tb = bump(stg.t, ct - wt, ct + wt, 3)[:, None, None, None]
    return amp * tb * _blob(g, c1, cr, cth, w1, wr, wth)[None]


def q_pair(stg: SpaceTimeGrid, base: CoefficientField, amp=1.0, **kw):
    dq = q_bump(stg, amp, **kw)
    return base, CoefficientField(base.A.copy(), base.q + dq)
