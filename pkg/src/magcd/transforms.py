"""Exponential ray transform on M0 along straight rays from external centers.

A sample is  int_{ray in M0} f(c + s e(theta)) e^{-mu s} ds,  s = distance to
the center c.  Rays are clipped analytically against the polar sector M0
(annulus part and the two bounding half-lines), integrated with the composite
trapezoid rule on each clipped interval, and f is read off the (r, theta)
grid by bilinear interpolation, so every sample is a fixed linear functional
of the grid values.  The operator is stored as a sparse matrix.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .geometry import BaseChart, DomainError


class InversionWarning(UserWarning):
    pass


# ------------------------------------------------------------ ray geometry


def _check_center(chart: BaseChart, center):
    if chart.point_inside(*center):
        raise DomainError("ray center %s lies inside M0" % (tuple(center),))


def _polar(chart: BaseChart, x, y):
    return chart.to_polar(x, y)


def ray_intervals(chart: BaseChart, center, angle, tol=1e-12):
    """Parameter intervals [s0, s1] (s >= 0) where the ray lies in M0."""
    _check_center(chart, center)
    c = np.asarray(center, float) - np.asarray(chart.center, float)
    e = np.array([np.cos(angle), np.sin(angle)])
    cuts = [0.0]
    ce, cc = float(c @ e), float(c @ c)
    for rad in chart.r_range:
        disc = ce**2 - (cc - rad**2)
        if disc >= 0:
            cuts += [-ce - np.sqrt(disc), -ce + np.sqrt(disc)]
    for th in chart.th_range:
        # crossing with the line through the chart center at angle th
        n = np.array([-np.sin(th), np.cos(th)])
        den = float(e @ n)
        if abs(den) > tol:
            cuts.append(-float(c @ n) / den)
    cuts = np.unique(np.clip([s for s in cuts if s >= 0], 0, None))
    far = np.hypot(*c) + chart.r_range[1] + 1.0
    cuts = np.append(cuts, far)
    out = []
    for s0, s1 in zip(cuts[:-1], cuts[1:]):
        if s1 - s0 <= tol:
            continue
        sm = 0.5 * (s0 + s1)
        x, y = c + sm * e
        r, th = np.hypot(x, y), np.arctan2(y, x)
        if chart.r_range[0] <= r <= chart.r_range[1] and chart.th_range[0] <= th <= chart.th_range[1]:
            if out and abs(out[-1][1] - s0) <= 1e-12:
                out[-1] = (out[-1][0], s1)
            else:
                out.append((s0, s1))
    return out


def ray_nodes(chart: BaseChart, center, angle, ds):
    """Trapezoid nodes and weights along the clipped ray (concatenated intervals)."""
    ss, ws = [], []
    for s0, s1 in ray_intervals(chart, center, angle):
        n = max(2, int(np.ceil((s1 - s0) / ds)) + 1)
        s = np.linspace(s0, s1, n)
        w = np.full(n, (s1 - s0) / (n - 1))
        w[[0, -1]] *= 0.5
        ss.append(s)
        ws.append(w)
    if not ss:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(ss), np.concatenate(ws)


def fan_angles(chart: BaseChart, center, n, margin=0.02):
    """n directions from center spread evenly over the angular extent of M0."""
    _check_center(chart, center)
    r = np.linspace(*chart.r_range, 64)
    th = np.linspace(*chart.th_range, 64)
    rb = np.concatenate([r, r, np.full(64, chart.r_range[0]), np.full(64, chart.r_range[1])])
    tb = np.concatenate([np.full(64, th[0]), np.full(64, th[-1]), th, th])
    x, y = chart.to_cartesian(rb, tb)
    ang = np.unwrap(np.arctan2(y - center[1], x - center[0]))
    # unwrap relative to the mean direction to keep the fan contiguous
    mid = np.angle(np.mean(np.exp(1j * ang)))
    rel = np.angle(np.exp(1j * (ang - mid)))
    lo, hi = rel.min(), rel.max()
    pad = margin * (hi - lo)
    return mid + np.linspace(lo + pad, hi - pad, n)


def default_centers(chart: BaseChart, n=16, radius=None):
    """n centers on a circle around the middle of M0, all outside M0."""
    rm = 0.5 * sum(chart.r_range)
    cx, cy = chart.to_cartesian(rm, 0.5 * sum(chart.th_range))
    radius = radius or 1.25 * (chart.r_range[1] - chart.r_range[0])
    a = 2 * np.pi * np.arange(n) / n
    out = [(float(cx + radius * np.cos(t)), float(cy + radius * np.sin(t))) for t in a]
    for c in out:
        _check_center(chart, c)
    return out


# ---------------------------------------------------------------- operator


def _bilinear_rows(r_nodes, th_nodes, r, th):
    """Column indices and weights (4 per point) of bilinear interpolation."""
    nr, nth = len(r_nodes), len(th_nodes)
    fr = np.clip((r - r_nodes[0]) / (r_nodes[1] - r_nodes[0]), 0, nr - 1)
    ft = np.clip((th - th_nodes[0]) / (th_nodes[1] - th_nodes[0]), 0, nth - 1)
    i = np.minimum(np.floor(fr).astype(int), nr - 2)
    j = np.minimum(np.floor(ft).astype(int), nth - 2)
    ar, at = fr - i, ft - j
    cols = np.stack([i * nth + j, (i + 1) * nth + j, i * nth + j + 1, (i + 1) * nth + j + 1])
    wts = np.stack([(1 - ar) * (1 - at), ar * (1 - at), (1 - ar) * at, ar * at])
    return cols, wts


@dataclass(frozen=True)
class RayGeometry:
    """Which rays are sampled: centers, directions per center, attenuations."""
    chart: BaseChart
    centers: tuple
    n_angles: int = 32
    mus: tuple = tuple(np.geomspace(0.25, 4.0, 8))
    ds: float = 0.02
    margin: float = 0.02

    def __post_init__(self):
        for c in self.centers:
            _check_center(self.chart, c)
        if self.ds <= 0:
            raise ValueError("ds must be positive")

    def angles(self, k):
        return fan_angles(self.chart, self.centers[k], self.n_angles, self.margin)


@dataclass
class RaySample:
    center: int
    theta: float
    mu: float
    value: complex


@dataclass
class TransformOperator:
    matrix: sp.csr_matrix
    rows: np.ndarray  # structured: center, theta, mu (and profile for thick rays)
    grid_shape: tuple  # (nr, nth) of one unknown field
    n_fields: int = 1

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, f):
        f = np.asarray(f)
        return self.matrix @ f.reshape(-1)

    def samples(self, values) -> list:
        return [RaySample(int(r["center"]), float(r["theta"]), float(r["mu"]), complex(v))
                for r, v in zip(self.rows, values)]


_ROW_DTYPE = [("center", int), ("theta", float), ("mu", float), ("profile", int)]


def _thin_ray(chart, r_nodes, th_nodes, center, angle, mu, ds, kappa=None):
    """(cols, vals) of one thin ray; kappa switches to the covector integrand."""
    s, w = ray_nodes(chart, center, angle, ds)
    if s.size == 0:
        return np.zeros(0, int), np.zeros(0)
    x = center[0] + s * np.cos(angle)
    y = center[1] + s * np.sin(angle)
    r, th = _polar(chart, x, y)
    cols, wts = _bilinear_rows(r_nodes, th_nodes, r, th)
    q = w * np.exp(-mu * s)
    if kappa is None:
        return cols.ravel(), (wts * q).ravel()
    # e = (cos a, sin a) in the chart frame: e^r = e.e_r, e^th = e.e_th / r
    rel = angle - th
    er, eth = np.cos(rel), np.sin(rel) / r
    n = len(r_nodes) * len(th_nodes)
    parts_c, parts_v = [cols.ravel()], [(wts * q).ravel()]
    for k, comp in ((1, er), (2, eth)):
        parts_c.append((cols + k * n).ravel())
        parts_v.append((wts * q * 1j * kappa * comp).ravel())
    return np.concatenate(parts_c), np.concatenate(parts_v)


def build_operator(r_nodes, th_nodes, geom: RayGeometry, kappa: Optional[float] = None,
                   profiles: Optional[Sequence[tuple]] = None, n_sub=9) -> TransformOperator:
    """Assemble the sparse transform.

    Thin rays (profiles=None): one row per (center, angle, mu).
    Thick rays: profiles is a list of (center index, h) with h an angular
    window; the row integrates h(a)^2 times the thin-ray row over a in the
    window (trapezoid on n_sub sub-rays).  kappa (not None) selects the
    covector integrand a_1 + i kappa (e^r a_r + e^th a_th) with three stacked
    unknown fields.
    """
    r_nodes, th_nodes = np.asarray(r_nodes, float), np.asarray(th_nodes, float)
    n = len(r_nodes) * len(th_nodes)
    nf = 1 if kappa is None else 3
    rows, cols, vals, meta = [], [], [], []
    ch = geom.chart
    if profiles is None:
        for k, c in enumerate(geom.centers):
            for a in geom.angles(k):
                for mu in geom.mus:
                    cc, vv = _thin_ray(ch, r_nodes, th_nodes, c, a, mu, geom.ds, kappa)
                    rows.append(np.full(cc.size, len(meta)))
                    cols.append(cc)
                    vals.append(vv)
                    meta.append((k, a, mu, -1))
    else:
        for p, (k, h) in enumerate(profiles):
            c = geom.centers[k]
            sub = np.linspace(h.center - h.halfwidth, h.center + h.halfwidth, n_sub)
            wsub = np.full(n_sub, sub[1] - sub[0])
            wsub[[0, -1]] *= 0.5
            wsub = wsub * h(sub) ** 2
            for mu in geom.mus:
                cs, vs = [], []
                for a, wa in zip(sub, wsub):
                    if wa == 0:
                        continue
                    cc, vv = _thin_ray(ch, r_nodes, th_nodes, c, a, mu, geom.ds, kappa)
                    cs.append(cc)
                    vs.append(wa * vv)
                cc = np.concatenate(cs) if cs else np.zeros(0, int)
                vv = np.concatenate(vs) if vs else np.zeros(0)
                rows.append(np.full(cc.size, len(meta)))
                cols.append(cc)
                vals.append(vv)
                meta.append((k, h.center, mu, p))
    M = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(len(meta), nf * n))
    M.sum_duplicates()
    return TransformOperator(M, np.array(meta, dtype=_ROW_DTYPE), (len(r_nodes), len(th_nodes)), nf)


def forward_transform(f, r_nodes, th_nodes, geom: RayGeometry):
    """Samples of a grid function (bilinear) or of a callable f(x, y) (exact point values)."""
    if callable(f):
        return callable_transform(f, geom)
    op = build_operator(r_nodes, th_nodes, geom)
    return op.apply(f), op


def callable_transform(f: Callable, geom: RayGeometry, refine=1):
    """Reference samples with f evaluated exactly at the ray nodes (step ds/refine)."""
    out = []
    for k, c in enumerate(geom.centers):
        for a in geom.angles(k):
            s, w = ray_nodes(geom.chart, c, a, geom.ds / refine)
            x, y = c[0] + s * np.cos(a), c[1] + s * np.sin(a)
            fv = f(x, y)
            for mu in geom.mus:
                out.append(np.sum(w * np.exp(-mu * s) * fv))
    return np.array(out)


# --------------------------------------------------------------- inversion


def gradient_operator(r_nodes, th_nodes, n_fields=1):
    """Forward-difference metric gradient (d_r, r^{-1} d_th) with sqrt-area weights."""
    r_nodes, th_nodes = np.asarray(r_nodes, float), np.asarray(th_nodes, float)
    nr, nth = len(r_nodes), len(th_nodes)
    hr, ht = r_nodes[1] - r_nodes[0], th_nodes[1] - th_nodes[0]
    Dr = sp.diags([-np.ones(nr - 1), np.ones(nr - 1)], [0, 1], shape=(nr - 1, nr)) / hr
    Dt = sp.diags([-np.ones(nth - 1), np.ones(nth - 1)], [0, 1], shape=(nth - 1, nth)) / ht
    rmid = 0.5 * (r_nodes[1:] + r_nodes[:-1])
    Gr = sp.diags(np.repeat(np.sqrt(rmid * hr * ht), nth)) @ sp.kron(Dr, sp.identity(nth))
    Gt = sp.diags(np.repeat(np.sqrt(hr * ht / r_nodes), nth - 1)) @ sp.kron(sp.identity(nr), Dt)
    G = sp.vstack([Gr, Gt])
    return sp.block_diag([G] * n_fields).tocsr()


@dataclass
class InversionReport:
    alpha: float
    alpha_effective: float
    residual: float
    relative_residual: float
    condition: float
    n_samples: int
    n_unknowns: int
    iterations: int = 0
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        d = dict(self.__dict__)
        d.update(d.pop("extra"))
        return d


def invert_transform(samples, op: TransformOperator, alpha: float, min_ratio=0.5,
                     cond_threshold=1e12, r_nodes=None, th_nodes=None, real=False):
    """Tikhonov solution of min ||A f - s||^2 + alpha_eff ||grad f||^2.

    alpha is relative: alpha_eff = alpha * mean diag(A^H A).  The normal
    equations are small (one field on M0) and solved densely, which also
    gives an exact condition number.  real=True restricts f to real values.
    """
    if not alpha > 0:
        raise ValueError("regularization alpha must be positive")
    s = np.asarray(samples).reshape(-1)
    A = op.matrix
    m, n = A.shape
    if s.size != m:
        raise ValueError("sample vector has %d entries, operator has %d rows" % (s.size, m))
    if m < min_ratio * n:
        raise ValueError("too few samples: %d rows for %d unknowns (need >= %d)"
                         % (m, n, int(np.ceil(min_ratio * n))))
    nr, nth = op.grid_shape
    if r_nodes is None:
        r_nodes, th_nodes = np.arange(nr, dtype=float) + 1.0, np.arange(nth, dtype=float)
    G = gradient_operator(r_nodes, th_nodes, op.n_fields)
    if real:
        Ar = sp.vstack([A.real, A.imag]).tocsr()
        rhs_s = np.concatenate([s.real, s.imag])
        N = (Ar.T @ Ar).toarray()
        b = Ar.T @ rhs_s
    else:
        N = (A.conj().T @ A).toarray()
        b = A.conj().T @ s
    scale = float(np.mean(np.abs(np.diag(N)))) or 1.0
    a_eff = alpha * scale
    K = N + a_eff * (G.T @ G).toarray()
    cond = float(np.linalg.cond(K))
    if not np.isfinite(cond) or cond > cond_threshold:
        warnings.warn("regularized normal matrix is ill-conditioned (cond ~ %.2e)" % cond, InversionWarning)
    f = np.linalg.solve(K, b)
    res = float(np.linalg.norm(A @ f - s))
    sn = float(np.linalg.norm(s))
    rep = InversionReport(alpha, a_eff, res, res / sn if sn else 0.0, cond, m, n)
    return f.reshape((op.n_fields, nr, nth) if op.n_fields > 1 else (nr, nth)), rep
