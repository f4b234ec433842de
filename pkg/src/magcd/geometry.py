"""Desk geometry: product manifold [-l, l] x M0 in polar normal coordinates.

M0 is the geodesic rectangle {r in [r_min, r_max], theta in [th_min, th_max]}
around an external center y0.  The metric on M = [-l, l] x M0 is
g = dx1^2 + dr^2 + P(r, theta) dtheta^2 with b = det P = P.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fd import trapz_weights

FACES = ("x1-", "x1+", "r-", "r+", "th-", "th+")


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class BaseChart:
    center: tuple = (0.0, 0.0)
    r_range: tuple = (1.0, 3.0)
    th_range: tuple = (-np.pi / 6, np.pi / 6)
    metric_kind: str = "euclidean-polar"
    P_func: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if not self.r_range[0] > 0:
            raise DomainError("r_min must be positive (center outside M0)")
        if not self.r_range[1] > self.r_range[0]:
            raise DomainError("empty r range")
        if not self.th_range[1] > self.th_range[0]:
            raise DomainError("empty theta range")
        if self.metric_kind not in ("euclidean-polar", "custom"):
            raise DomainError("unknown metric kind %r" % self.metric_kind)
        if self.metric_kind == "custom" and self.P_func is None:
            raise DomainError("custom metric needs P_func")

    @property
    def euclidean(self):
        return self.metric_kind == "euclidean-polar"

    def P(self, r, th):
        r = np.asarray(r, dtype=float)
        th = np.asarray(th, dtype=float)
        if self.euclidean:
            return r**2 + 0.0 * th
        return np.asarray(self.P_func(r, th), dtype=float) + 0.0 * r * th

    def contains(self, r, th, tol=1e-12):
        return bool(self.r_range[0] - tol <= r <= self.r_range[1] + tol
                    and self.th_range[0] - tol <= th <= self.th_range[1] + tol)

    def to_cartesian(self, r, th):
        self._need_euclidean()
        return (self.center[0] + r * np.cos(th), self.center[1] + r * np.sin(th))

    def to_polar(self, x, y):
        self._need_euclidean()
        dx, dy = np.asarray(x) - self.center[0], np.asarray(y) - self.center[1]
        return np.hypot(dx, dy), np.arctan2(dy, dx)

    def point_inside(self, x, y):
        r, th = self.to_polar(x, y)
        return self.contains(float(r), float(th), tol=0.0)

    def _need_euclidean(self):
        if not self.euclidean:
            raise DomainError("Cartesian embedding only exists for the euclidean-polar chart")


@dataclass(frozen=True)
class ProductMetric:
    chart: BaseChart = field(default_factory=BaseChart)
    ell: float = 1.0

    def __post_init__(self):
        if not self.ell > 0:
            raise DomainError("ell must be positive")

    @property
    def x1_range(self):
        return (-self.ell, self.ell)


def metric_at(chart: BaseChart, r, th):
    """Return (g, sqrt|g|) at one chart point; g = diag(1, 1, P)."""
    if not chart.contains(r, th):
        raise DomainError("point (r=%g, theta=%g) outside chart" % (r, th))
    P = float(chart.P(r, th))
    if not P > 0:
        raise DomainError("metric not positive definite at (r=%g, theta=%g)" % (r, th))
    return np.diag([1.0, 1.0, P]), np.sqrt(P)


@dataclass(frozen=True)
class BoundaryDecomposition:
    eps: float
    dphi: dict  # face -> d_nu phi, phi = x1

    def plus(self):
        return [f for f, d in self.dphi.items() if d >= 0]

    def minus(self):
        return [f for f, d in self.dphi.items() if d <= 0]

    def plus_eps(self):
        return [f for f, d in self.dphi.items() if d > self.eps / 2]

    def minus_eps(self):
        return [f for f, d in self.dphi.items() if -d > self.eps / 2]

    def complement_minus_eps(self):
        """Sigma minus Sigma_{-,eps/2}: the faces where the boundary lemma is applied."""
        m = set(self.minus_eps())
        return [f for f in FACES if f not in m]


def classify_boundary(metric: ProductMetric, eps: float) -> BoundaryDecomposition:
    if not eps > 0:
        raise DomainError("eps must be positive")
    if eps >= 2:
        raise DomainError("eps >= 2 leaves the measured set empty (max d_nu phi is 1)")
    dphi = {"x1-": -1.0, "x1+": 1.0, "r-": 0.0, "r+": 0.0, "th-": 0.0, "th+": 0.0}
    return BoundaryDecomposition(eps=eps, dphi=dphi)


def ray_exit_length(chart: BaseChart, th) -> float:
    """Length of the radial geodesic inside M0, measured from its entry at r_min."""
    if not chart.th_range[0] <= th <= chart.th_range[1]:
        raise DomainError("direction %g outside chart angles" % th)
    return chart.r_range[1] - chart.r_range[0]


def _num_deriv(f, x, h, *args):
    return (-f(x + 2 * h, *args) + 8 * f(x + h, *args) - 8 * f(x - h, *args) + f(x - 2 * h, *args)) / (12 * h)


class Grid:
    """Uniform spatial grid over M with nodes on the boundary faces."""

    def __init__(self, metric: ProductMetric, n1=24, nr=24, nth=24):
        self.metric = metric
        ch = metric.chart
        self.shape = (n1, nr, nth)
        self.x1 = np.linspace(-metric.ell, metric.ell, n1)
        self.r = np.linspace(*ch.r_range, nr)
        self.th = np.linspace(*ch.th_range, nth)
        self.h = (self.x1[1] - self.x1[0], self.r[1] - self.r[0], self.th[1] - self.th[0])
        R, TH = np.meshgrid(self.r, self.th, indexing="ij")
        self.R2, self.TH2 = R, TH
        P = ch.P(R, TH)
        if np.any(P <= 0):
            raise DomainError("metric not positive definite on the grid")
        self.P = P[None]
        self.sqrtb = np.sqrt(P)[None]
        if ch.euclidean:
            dr_sqrtb = np.ones_like(R)
            dth_w = np.zeros_like(R)
        else:
            sq = lambda r, th: np.sqrt(ch.P(r, th))
            w = lambda th, r: np.sqrt(ch.P(r, th)) / ch.P(r, th)
            dr_sqrtb = _num_deriv(sq, R, 1e-4, TH)
            dth_w = _num_deriv(w, TH, 1e-4, R)
        # -Delta_g = -sum_j ginv_j d_j^2 - sum_j lap_j d_j
        self.ginv = (np.ones((1, 1, 1)), np.ones((1, 1, 1)), 1.0 / self.P)
        self.lap = (np.zeros((1, 1, 1)), (dr_sqrtb / np.sqrt(P))[None], (dth_w / np.sqrt(P))[None])
        self.X1 = self.x1[:, None, None]
        self.Rm = self.r[None, :, None]
        self.THm = self.th[None, None, :]
        w1, wr, wth = (trapz_weights(n, h) for n, h in zip(self.shape, self.h))
        self.wvol = w1[:, None, None] * wr[None, :, None] * wth[None, None, :] * self.sqrtb
        self._w1, self._wr, self._wth = w1, wr, wth

    @property
    def size(self):
        return int(np.prod(self.shape))

    def interior_shape(self):
        return tuple(n - 2 for n in self.shape)

    def boundary_mask(self):
        m = np.zeros(self.shape, dtype=bool)
        m[[0, -1]] = True
        m[:, [0, -1]] = True
        m[:, :, [0, -1]] = True
        return m

    def face_slice(self, face):
        ax = {"x1": 0, "r": 1, "th": 2}[face[:-1]]
        idx = [slice(None)] * 3
        idx[ax] = 0 if face[-1] == "-" else -1
        return ax, tuple(idx)

    def face_weights(self, face):
        """Surface quadrature weights (with the sqrt|g| surface factor) on a face."""
        ax, idx = self.face_slice(face)
        if ax == 0:
            return self._wr[:, None] * self._wth[None, :] * self.sqrtb[0]
        if ax == 1:
            j = 0 if face[-1] == "-" else -1
            return self._w1[:, None] * self._wth[None, :] * self.sqrtb[0, j][None, :]
        return self._w1[:, None] * self._wr[None, :] * np.ones((1, 1))

    def integrate(self, f):
        """Spatial volume integral with dV_g = sqrt(b) dx1 dr dtheta."""
        return np.tensordot(self.wvol, f, axes=([0, 1, 2], [0, 1, 2]))

    def volume(self):
        return float(self.wvol.sum())


class SpaceTimeGrid:
    def __init__(self, grid: Grid, nt=64, T=1.0):
        self.grid = grid
        self.nt = nt
        self.T = T
        self.t = np.linspace(0.0, T, nt + 1)
        self.dt = T / nt
        self.wt = trapz_weights(nt + 1, self.dt)

    @property
    def shape(self):
        return (self.nt + 1,) + self.grid.shape

    def integrate(self, f):
        """Space-time integral over M_T of f with shape (nt+1, n1, nr, nth, ...)."""
        s = np.tensordot(self.wt, f, axes=([0], [0]))
        return self.grid.integrate(s)


def make_grid(ell=1.0, r_range=(1.0, 3.0), th_range=(-np.pi / 6, np.pi / 6), n=(24, 24, 24),
              nt=64, T=1.0, chart: BaseChart | None = None) -> SpaceTimeGrid:
    chart = chart or BaseChart(r_range=tuple(r_range), th_range=tuple(th_range))
    return SpaceTimeGrid(Grid(ProductMetric(chart, ell), *n), nt=nt, T=T)


@dataclass
class RayFrame:
    """Distance to a ray center and its chart derivatives on the (r, theta) grid."""
    center: tuple
    d: np.ndarray
    d_r: np.ndarray
    d_th: np.ndarray
    d_rr: np.ndarray
    d_thth: np.ndarray
    angle: np.ndarray  # polar angle seen from the center
    primary: bool

    def unit_components(self, grid: Grid):
        """Contravariant components (e^r, e^theta) of the unit radial field grad d."""
        return self.d_r, self.d_th / grid.P[0]


def ray_frame(grid: Grid, center=None) -> RayFrame:
    ch = grid.metric.chart
    R, TH = grid.R2, grid.TH2
    if center is None or np.allclose(center, ch.center):
        z = np.zeros_like(R)
        return RayFrame(tuple(ch.center), R.copy(), np.ones_like(R), z, z.copy(), z.copy(), TH.copy(), True)
    if not ch.euclidean:
        raise DomainError("secondary ray centers need the euclidean-polar chart")
    if ch.point_inside(*center):
        raise DomainError("ray center %s lies inside M0" % (tuple(center),))
    X, Y = ch.to_cartesian(R, TH)
    Dx, Dy = X - center[0], Y - center[1]
    d = np.hypot(Dx, Dy)
    er = (np.cos(TH), np.sin(TH))
    De_r = Dx * er[0] + Dy * er[1]
    De_t = R * (-Dx * er[1] + Dy * er[0])
    d_r = De_r / d
    d_th = De_t / d
    d_rr = (1 - d_r**2) / d
    d_thth = (R**2 - R * De_r - d_th**2) / d
    return RayFrame(tuple(center), d, d_r, d_th, d_rr, d_thth, np.arctan2(Dy, Dx), False)
