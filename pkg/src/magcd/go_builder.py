"""Geometric-optics solutions e^{+-rho}(T + R), rho = phi + i psi.

Growing:  u = e^{rho} (T_g + R_g),   L_{A,q} u = 0
Decaying: v = e^{-rho} (T_d + R_d),  L^t_{A,q} v = 0   (transpose, bilinear pairing)

with phi = lambda^2 beta^2 t + lambda x1 and psi = lambda kappa d, where
kappa = sqrt(1 - beta^2) and d is the distance to the ray center (d = r for
the chart's own center).  Remainders are solved in weighted variables:
Z = T + R solves the conjugated IBVP e^{-rho} L e^{rho} Z = 0 with Z = T on
the lateral boundary, so R vanishes there and at t = 0 (growing) or t = T
(decaying).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .carleman import CarlemanWeight
from .coefficients import CoefficientField
from .fd import d1, dt_nodes
from .forward_solver import Evolution, apply_L, conjugate, magnetic_stencil, stencil_apply
from .geometry import Grid, RayFrame, SpaceTimeGrid, ray_frame


def kappa(w: CarlemanWeight):
    return np.sqrt(1 - w.beta**2)


def poly_cutoff(T=1.0, power=4, omega=0.0):
    """phi_t(t) = (t (T - t))^p normalized to peak 1, optionally modulated by e^{i omega t}."""
    peak = (T / 2) ** (2 * power)

    def f(t):
        t = np.asarray(t, float)
        val = np.where((t > 0) & (t < T), (t * (T - t)) ** power, 0.0) / peak
        return val * np.exp(1j * omega * t) if omega else val.astype(complex)
    f.omega = omega
    f.power = power
    return f


def const_profile(value=1.0):
    return lambda a: np.full(np.shape(a), value, dtype=float)


def bump_profile(center, halfwidth, power=4):
    """Smooth angular window h(a) = (1 - ((a - c)/w)^2)^p on |a - c| < w (offset taken mod 2 pi)."""
    def h(a):
        s = np.angle(np.exp(1j * (np.asarray(a, float) - center))) / halfwidth
        return np.where(np.abs(s) < 1, (1 - s**2) ** power, 0.0)
    h.center, h.halfwidth, h.power = center, halfwidth, power
    return h


def eikonal_phase(grid: Grid, w: CarlemanWeight, frame: Optional[RayFrame] = None):
    frame = frame or ray_frame(grid)
    return np.broadcast_to(w.lam * kappa(w) * frame.d[None], grid.shape).copy()


def eikonal_defect(grid: Grid, w: CarlemanWeight, psi):
    """Relative defect of |grad_g psi|^2 = lambda^2 (1 - beta^2) at interior nodes."""
    g = [d1(psi, grid.h[j], j) for j in range(3)]
    n2 = g[0] ** 2 + g[1] ** 2 + g[2] ** 2 * grid.ginv[2]
    target = w.lam**2 * (1 - w.beta**2)
    I = (slice(1, -1),) * 3
    if target == 0:
        return float(np.abs(n2[I]).max())
    return float(np.abs(n2[I] / target - 1).max())


def _b_quarter(grid: Grid, frame: RayFrame):
    """b^{-1/4} in the polar chart of the ray center."""
    if frame.primary:
        return grid.P[0] ** -0.25
    return frame.d**-0.5


def _potential_solver(n1, nr, h1, hr, k):
    """LU of (d1^2 + k^2 d_r^2) on an (x1, r) node grid.

    Neumann at x1 = -l and on both r edges (ghost-node reflection), Dirichlet
    U = 0 at x1 = +l.
    """
    def lap1d(n, h, neumann_lo, neumann_hi):
        main = -2.0 * np.ones(n)
        lo = np.ones(n - 1)
        up = np.ones(n - 1)
        if neumann_lo:
            up[0] = 2.0
        if neumann_hi:
            lo[-1] = 2.0
        return sp.diags([lo, main, up], [-1, 0, 1]) / h**2

    L1 = lap1d(n1, h1, True, False).tolil()
    L1[-1, :] = 0.0  # Dirichlet row at x1 = +l, replaced below
    Lr = lap1d(nr, hr, True, True)
    M = (sp.kron(L1.tocsr(), sp.identity(nr)) + k**2 * sp.kron(sp.identity(n1), Lr)).tolil()
    for j in range(nr):
        row = (n1 - 1) * nr + j
        M.rows[row], M.data[row] = [row], [1.0]
    return spla.splu(M.tocsc())


def _potential_phase(N, h1, hr, k, lu=None):
    """Phi = d1 U - i k d_r U with (d1^2 + k^2 d_r^2) U = -N; N has shape (n1, nr, batch)."""
    n1, nr = N.shape[:2]
    lu = lu or _potential_solver(n1, nr, h1, hr, k)
    rhs = -N.reshape(n1 * nr, -1).astype(complex)
    rhs[(n1 - 1) * nr:] = 0.0
    U = (lu.solve(np.ascontiguousarray(rhs.real)) + 1j * lu.solve(np.ascontiguousarray(rhs.imag))).reshape(N.shape)
    return d1(U, h1, 0) - 1j * k * d1(U, hr, 1)


def phase_correction(stg: SpaceTimeGrid, coeffs: CoefficientField, w: CarlemanWeight, sign="growing",
                     frame: Optional[RayFrame] = None, aux_n=None):
    """A particular solution of d1 Phi + i kappa e.grad Phi + s (A_1 + i kappa A(e)) = 0.

    s = +1 gives Phi_1 (growing), s = -1 gives Phi_2 (decaying); e = grad d is
    the unit radial field of the ray center and A(e) = A_r e^r + A_th e^th.
    Along each ray plane (x1, d) the operator is d1 + i kappa d_d, a
    Cauchy-Riemann operator in (x1, d / kappa).  Phi is taken as
    (d1 - i kappa d_d) U for the potential U solving
    (d1^2 + kappa^2 d_d^2) U = -s (A_1 + i kappa A(e)) with Neumann data on the
    inflow face x1 = -l and on the ray ends, Dirichlet data on x1 = +l.  For
    sources independent of d this gives Phi = 0 on the inflow face (e.g.
    A_1 = a gives Phi_1 = -a (x1 + l)).  Off-chart centers are handled on an
    auxiliary polar grid around the center and interpolated back.
    """
    g = stg.grid
    frame = frame or ray_frame(g)
    k = kappa(w)
    s = 1.0 if sign == "growing" else -1.0
    A = coeffs.A
    nt1 = stg.nt + 1
    if frame.primary:
        N = s * (A[0] + 1j * k * A[1])  # (nt+1, n1, nr, nth)
        Nb = np.moveaxis(N, 0, 2).reshape(g.shape[0], g.shape[1], -1)
        Phi = _potential_phase(Nb, g.h[0], g.h[1], k)
        return np.moveaxis(Phi.reshape(g.shape[0], g.shape[1], nt1, g.shape[2]), 2, 0)
    aux = AuxPolarGrid(g, frame.center, aux_n)
    er, eth = frame.unit_components(g)
    N = s * (A[0] + 1j * k * (A[1] * er + A[2] * eth))
    Na = aux.from_primary(N)  # (nt+1, n1, nd, na)
    Nb = np.moveaxis(Na, 0, 2).reshape(g.shape[0], aux.nd, -1)
    Phi_a = _potential_phase(Nb, g.h[0], aux.hd, k)
    Phi_a = np.moveaxis(Phi_a.reshape(g.shape[0], aux.nd, nt1, aux.na), 2, 0)
    return aux.to_primary(Phi_a)


class AuxPolarGrid:
    """Polar node grid (d, a) around an off-chart center covering M0.

    Values on the primary grid are carried over by bilinear interpolation in
    (r, theta) with coordinates clamped to the chart box (a continuous
    extension outside M0); the way back is bilinear in (d, a).
    """

    def __init__(self, grid: Grid, center, n=None):
        ch = grid.metric.chart
        self.grid = grid
        nd, na = n or (2 * grid.shape[1], 2 * grid.shape[2])
        fr = ray_frame(grid, center)
        pad_d = 0.02 * (fr.d.max() - fr.d.min())
        ang = np.unwrap(fr.angle.ravel()).reshape(fr.angle.shape)
        a0 = float(np.median(ang))
        ang = (fr.angle - a0 + np.pi) % (2 * np.pi) - np.pi + a0
        pad_a = 0.02 * (ang.max() - ang.min())
        self.d = np.linspace(fr.d.min() - pad_d, fr.d.max() + pad_d, nd)
        self.a = np.linspace(ang.min() - pad_a, ang.max() + pad_a, na)
        self.nd, self.na = nd, na
        self.hd = self.d[1] - self.d[0]
        self.ha = self.a[1] - self.a[0]
        D, Aa = np.meshgrid(self.d, self.a, indexing="ij")
        X = center[0] + D * np.cos(Aa)
        Y = center[1] + D * np.sin(Aa)
        r, th = ch.to_polar(X, Y)
        r = np.clip(r, *ch.r_range)
        th = np.clip(th, *ch.th_range)
        self._fwd = _bilinear_weights(grid.r, grid.th, r, th)
        self._back = _bilinear_weights(self.d, self.a, fr.d, ang)

    def from_primary(self, f):
        return _bilinear_apply(f, self._fwd)

    def to_primary(self, f):
        return _bilinear_apply(f, self._back)


def _bilinear_weights(xs, ys, X, Y):
    hx, hy = xs[1] - xs[0], ys[1] - ys[0]
    fx = np.clip((X - xs[0]) / hx, 0, len(xs) - 1 - 1e-12)
    fy = np.clip((Y - ys[0]) / hy, 0, len(ys) - 1 - 1e-12)
    i, j = np.floor(fx).astype(int), np.floor(fy).astype(int)
    i = np.minimum(i, len(xs) - 2)
    j = np.minimum(j, len(ys) - 2)
    ax, ay = fx - i, fy - j
    return i, j, ax, ay


def _bilinear_apply(f, wts):
    i, j, ax, ay = wts
    return ((1 - ax) * (1 - ay) * f[..., i, j] + ax * (1 - ay) * f[..., i + 1, j]
            + (1 - ax) * ay * f[..., i, j + 1] + ax * ay * f[..., i + 1, j + 1])


def transport_residual(stg: SpaceTimeGrid, coeffs: CoefficientField, w: CarlemanWeight, T, sign="growing",
                       frame: Optional[RayFrame] = None):
    """(2 lam d1 + 2i<grad psi, grad> + i Delta psi + 2i lam A_1 - 2<A, grad psi>) T for the growing
    amplitude; the decaying amplitude uses the same operator with A -> -A."""
    g = stg.grid
    frame = frame or ray_frame(g)
    lam, k = w.lam, kappa(w)
    s = 1.0 if sign == "growing" else -1.0
    er, eth = frame.unit_components(g)
    dT = [d1(T, g.h[j], j + 1) for j in range(3)]
    if frame.primary:
        lap_d = g.lap[1][0]
    else:
        lap_d = 1.0 / frame.d
    gpsi_dot = lam * k * (er * dT[1] + eth * dT[2])
    A = coeffs.A
    A_psi = lam * k * (A[1] * er + A[2] * eth)
    return (2 * lam * dT[0] + 2j * gpsi_dot + 1j * lam * k * lap_d * T
            + s * (2j * lam * A[0] * T - 2 * A_psi * T))


def amplitude(stg: SpaceTimeGrid, w: CarlemanWeight, sign, mu, cutoff: Callable, h_theta: Callable, Phi,
              frame: Optional[RayFrame] = None):
    """T_g = phi_t e^{i mu kappa x1} e^{-mu d} e^{i Phi_1} b^{-1/4} h  or  T_d = phi_t e^{i Phi_2} b^{-1/4} h."""
    g = stg.grid
    frame = frame or ray_frame(g)
    spatial = _b_quarter(g, frame) * h_theta(frame.angle)
    if sign == "growing":
        spatial = np.exp(1j * mu * kappa(w) * g.X1) * (np.exp(-mu * frame.d) * spatial)[None]
    else:
        spatial = np.broadcast_to(spatial[None], g.shape)
    ct = cutoff(stg.t)[:, None, None, None]
    return ct * spatial[None] * np.exp(1j * Phi)


def weight_derivatives(w: CarlemanWeight, frame: RayFrame, sign="growing"):
    """(grad, hess, time_term) of sigma = +rho (growing, tau = +1) or -rho (decaying, tau = -1)."""
    lam, k = w.lam, kappa(w)
    s = 1.0 if sign == "growing" else -1.0
    grad = (s * lam * np.ones((1, 1, 1)), s * 1j * lam * k * frame.d_r[None], s * 1j * lam * k * frame.d_th[None])
    hess = (np.zeros((1, 1, 1)), s * 1j * lam * k * frame.d_rr[None], s * 1j * lam * k * frame.d_thth[None])
    time_term = lam**2 * w.beta**2  # tau * d_t sigma is +lambda^2 beta^2 in both cases
    return grad, hess, time_term


def weighted_stencil_provider(stg: SpaceTimeGrid, coeffs: CoefficientField, w: CarlemanWeight,
                              frame: RayFrame, sign="growing"):
    """it -> stencil of e^{-rho} L e^{rho} (growing) or e^{rho} L^t e^{-rho} (decaying), minus tau d_t."""
    g = stg.grid
    grad, hess, tt = weight_derivatives(w, frame, sign)
    transpose = sign != "growing"
    static = np.array_equal(coeffs.A, np.broadcast_to(coeffs.A[:, :1], coeffs.A.shape)) and \
        np.array_equal(coeffs.q, np.broadcast_to(coeffs.q[:1], coeffs.q.shape))
    memo = {}

    def at(it):
        k = 0 if static else it
        if k not in memo:
            memo.clear()
            st = magnetic_stencil(g, coeffs.A[:, k], coeffs.q[k], transpose)
            memo[k] = conjugate(st, grad, hess, tt)
        return memo[k]
    return at


def weighted_apply(stg: SpaceTimeGrid, provider, Z, sign="growing"):
    """Full-grid action of the weighted operator (with its time derivative) on Z."""
    tau = 1.0 if sign == "growing" else -1.0
    out = tau * dt_nodes(Z, stg.dt)
    for it in range(stg.nt + 1):
        out[it] += stencil_apply(stg.grid, provider(it), Z[it])
    return out


@dataclass
class GOAnsatz:
    sign: str
    w: CarlemanWeight
    mu: float
    cutoff: Callable
    h_theta: Callable
    psi: np.ndarray
    T_amp: np.ndarray
    Phi: np.ndarray
    frame: RayFrame
    R: Optional[np.ndarray] = None
    residual_norm: float = float("nan")  # ||L_{A,q} T|| (= ||e^{i psi} L T||)
    weighted_source_norm: float = float("nan")  # ||discrete weighted operator applied to T||
    remainder_norm: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def Z(self):
        return self.T_amp if self.R is None else self.T_amp + self.R


def build_ansatz(stg: SpaceTimeGrid, coeffs: CoefficientField, w: CarlemanWeight, sign="growing", mu=0.0,
                 cutoff=None, h_theta=None, center=None):
    if sign not in ("growing", "decaying"):
        raise ValueError("sign must be 'growing' or 'decaying'")
    g = stg.grid
    cutoff = cutoff or poly_cutoff(stg.T)
    h_theta = h_theta or const_profile()
    frame = ray_frame(g, center)
    w0 = CarlemanWeight(w.lam, w.beta, 0.0, w.ell)
    psi = eikonal_phase(g, w0, frame)
    Phi = phase_correction(stg, coeffs, w0, sign, frame)
    T = amplitude(stg, w0, sign, mu, cutoff, h_theta, Phi, frame)
    return GOAnsatz(sign, w0, mu, cutoff, h_theta, psi, T, Phi, frame)


def remainder(stg: SpaceTimeGrid, coeffs: CoefficientField, ans: GOAnsatz, scheme="euler", stats=None,
              lu_reuse=0):
    """Solve for R (zero lateral data, zero initial/final data) and record norms."""
    provider = weighted_stencil_provider(stg, coeffs, ans.w, ans.frame, ans.sign)
    T = ans.T_amp
    ev = Evolution(stg, provider, boundary=lambda it: T[it], backward=(ans.sign != "growing"), scheme=scheme,
                   lu_reuse=lu_reuse)
    Z = ev.run()
    ans.R = Z - T
    transpose = ans.sign != "growing"
    ans.residual_norm = float(np.sqrt(stg.integrate(np.abs(apply_L(stg, coeffs, T, transpose)) ** 2).real))
    src = weighted_apply(stg, provider, T, ans.sign)
    I = (slice(None),) + (slice(1, -1),) * 3
    mask = np.zeros(stg.shape, bool)
    mask[I] = True
    ans.weighted_source_norm = float(np.sqrt(stg.integrate(np.where(mask, np.abs(src) ** 2, 0.0)).real))
    ans.remainder_norm = float(np.sqrt(stg.integrate(np.abs(ans.R) ** 2).real))
    if stats is not None:
        stats.update(ev.stats)
    return ans.R, ans.residual_norm
