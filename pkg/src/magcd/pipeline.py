"""Integral identity, boundary-term bookkeeping and ray-data extraction.

For two coefficient sets (A1, q1), (A2, q2) equal on the boundary, let
u2 = e^{rho} Zg be a growing GO solution for set 2, v = e^{-rho} Zd a decaying
solution of the transpose problem for set 1, and u = u1 - u2 the solution of
L1 u = (S2 - S1) u2 with zero data (S = spatial part).  Green's formula gives

    int_{M_T} (S2 - S1) u2 v  =  - int_Sigma d_nu u v .

In weighted variables W = e^{-rho} u solves the conjugated problem
L1_rho W = (S2_rho - S1_rho) Zg with zero data, and both sides only involve
Zg, Zd and W, never e^{+-rho}.  The left side splits into

    gradient term   int [dc . grad Zg + (dc . grad rho) Zg] Zd
    potential term  int dz Zg Zd
    leading term    int (dc . grad rho) Tg Td = -2i lam int N~ Tg Td

with dc_j = -2i g^{jj} (A2 - A1)_j, dz the zeroth-order difference and
N~ = A~_1 + i kappa A~(e).  Dividing by -2i lam isolates the transform of N~;
for a pair with equal A the left side is int (q2 - q1) Zg Zd directly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator

from .carleman import CarlemanWeight
from .coefficients import CoefficientField, apply_gauge, GaugeFunction
from .fd import d1, trapz_weights
from .forward_solver import (Evolution, IBVPProblem, Stencil, dn_map, face_values, magnetic_stencil,
                             normal_derivative, solve_ibvp, stencil_apply)
from .geometry import FACES, SpaceTimeGrid, classify_boundary, ray_frame
from .go_builder import (_b_quarter, bump_profile, kappa, phase_correction, poly_cutoff, weight_derivatives,
                         weighted_stencil_provider)
from . import transforms as tr


# ------------------------------------------------------------------- pairs


@dataclass
class ExperimentPair:
    stg: SpaceTimeGrid
    c1: CoefficientField
    c2: CoefficientField
    eps: float = 0.5
    gradient_pair: bool = False
    equal_on_boundary: bool = True
    gauge: Optional[GaugeFunction] = None
    gauge_grad: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        if self.equal_on_boundary and not self.c1.equal_on_boundary(self.c2, self.stg.grid):
            raise ValueError("pair is flagged equal-on-boundary but A differs on the boundary")
        self.region = classify_boundary(self.stg.grid.metric, self.eps)

    @property
    def dA(self):
        return self.c2.A - self.c1.A

    @property
    def dq(self):
        return self.c2.q - self.c1.q

    def identical(self, tol=1e-13):
        """Equal coefficients up to rounding (e.g. after an exact gauge round trip)."""
        if self.c1.same_as(self.c2):
            return True
        sa = max(1.0, float(np.abs(self.c1.A).max()))
        sq = max(1.0, float(np.abs(self.c1.q).max()))
        return bool(np.abs(self.dA).max() <= tol * sa and np.abs(self.dq).max() <= tol * sq)

    def gauge_equalized(self) -> "ExperimentPair":
        """Pair with A2 replaced by A2 - grad Psi (second set in the gauge of the first)."""
        if self.gauge is None:
            return self
        grad = None if self.gauge_grad is None else -self.gauge_grad
        c2 = apply_gauge(self.stg.grid, self.c2, -self.gauge, exact_grad=grad)
        return ExperimentPair(self.stg, self.c1, c2, self.eps, False, True, None, None, self.name + "-equalized")


def dn_gap(pair: ExperimentPair, f, scheme="euler", faces=None):
    """Difference of the two partial DN records for the same Dirichlet data f."""
    recs = []
    for c in (pair.c1, pair.c2):
        u = solve_ibvp(IBVPProblem(pair.stg, c, f=f), scheme=scheme)
        recs.append(dn_map(pair.stg, c, u, region=pair.region, faces=faces))
    return recs[0] - recs[1]


def smooth_dirichlet_data(stg: SpaceTimeGrid, seed=0):
    """A smooth boundary input vanishing at t = 0 (values on all nodes; the boundary ones are used)."""
    rng = np.random.default_rng(seed)
    g = stg.grid
    k = rng.uniform(0.5, 1.5, 4)
    t = stg.t[:, None, None, None]
    sp = (np.cos(k[0] * g.X1 + k[1] * g.Rm) * np.cos(k[2] * g.THm * 3) + 0.5 * np.sin(k[3] * g.Rm))
    return (np.sin(np.pi * t / stg.T) ** 2 * sp[None]).astype(complex)


# ----------------------------------------------------------------- ledgers


@dataclass
class IdentityLedger:
    lam: float
    mu: float
    center: tuple
    profile: int
    profile_center: float
    lhs_gradient_term: complex
    lhs_potential_term: complex
    leading_term: complex
    rhs_boundary_term: complex  # over Sigma minus Sigma_{-,eps/2}
    rhs_total: complex
    rhs_faces: dict = field(default_factory=dict)

    @property
    def lhs_total(self):
        return self.lhs_gradient_term + self.lhs_potential_term

    @property
    def Z_term(self):
        return self.lhs_gradient_term - self.leading_term

    @property
    def defect(self):
        return abs(self.lhs_total - self.rhs_total)

    @property
    def scale(self):
        """Largest term of the identity itself (the leading-term split is not one of them)."""
        return max(abs(self.lhs_gradient_term), abs(self.lhs_potential_term), abs(self.rhs_total))

    def row(self):
        d = dict(lam=self.lam, mu=self.mu, center_x=self.center[0], center_y=self.center[1],
                 profile=self.profile, profile_center=self.profile_center)
        for k in ("lhs_gradient_term", "lhs_potential_term", "leading_term", "rhs_boundary_term",
                  "rhs_total", "lhs_total", "Z_term"):
            z = complex(getattr(self, k))
            d[k + "_re"], d[k + "_im"] = z.real, z.imag
        d["defect"] = self.defect
        d["scale"] = self.scale
        return d


@dataclass
class SweepSpec:
    """One GO family: a ray center, angular windows and the tied frequencies."""
    center: Optional[tuple]
    profiles: list  # bump_profile windows (angle as seen from the center)
    mus: tuple = (1.0,)
    cutoff_power: int = 4


def fan_profiles(stg: SpaceTimeGrid, center, n, overlap=1.5, power=4):
    """n angular windows tiling the view of M0 from a center."""
    ch = stg.grid.metric.chart
    if center is None or np.allclose(center, ch.center):
        lo, hi = ch.th_range
        a = np.linspace(lo, hi, n + 2)[1:-1]
    else:
        a = tr.fan_angles(ch, center, n, margin=0.5 / n)
    step = a[1] - a[0] if n > 1 else (ch.th_range[1] - ch.th_range[0]) / 2
    return [bump_profile(float(c), overlap * step, power) for c in a]


def _weight_grad(w, frame):
    grad, _, _ = weight_derivatives(w, frame, "growing")
    return grad


def identity_sweep(pair: ExperimentPair, w: CarlemanWeight, spec: SweepSpec, scheme="euler",
                   stats=None, lu_reuse=0) -> list:
    """Ledgers for every (window, mu) of one GO family, streaming in time."""
    stg, g = pair.stg, pair.stg.grid
    frame = ray_frame(g, spec.center)
    w0 = CarlemanWeight(w.lam, w.beta, 0.0, w.ell)
    k = kappa(w0)
    prof, mus = spec.profiles, tuple(spec.mus)
    na, nm = len(prof), len(mus)
    K = na * nm
    col_a = np.tile(np.arange(na), nm)
    col_m = np.repeat(np.arange(nm), na)
    center = tuple(frame.center)
    if pair.identical():
        return [IdentityLedger(w.lam, mus[col_m[j]], center, int(col_a[j]), prof[col_a[j]].center,
                               0j, 0j, 0j, 0j, 0j, {f: 0j for f in FACES}) for j in range(K)]

    Phi1 = phase_correction(stg, pair.c2, w0, "growing", frame)
    Phi2 = phase_correction(stg, pair.c1, w0, "decaying", frame)
    bq = _b_quarter(g, frame)
    hs = np.stack([h(frame.angle) for h in prof], -1)  # (nr, nth, na)
    sp_d = np.broadcast_to((bq[..., None] * hs)[None], g.shape + (na,))
    sp_g = np.empty(g.shape + (K,), complex)
    for m, mu in enumerate(mus):
        radial = (np.exp(-mu * frame.d) * bq)[..., None] * hs
        sp_g[..., m * na:(m + 1) * na] = np.exp(1j * mu * k * g.X1)[..., None] * radial[None]
    cut_d = poly_cutoff(stg.T, spec.cutoff_power)(stg.t)
    cut_g = np.stack([poly_cutoff(stg.T, spec.cutoff_power, omega=mu)(stg.t) for mu in mus], -1)
    cut_g = cut_g[:, col_m]  # (nt+1, K)

    def Td(it):
        return cut_d[it] * sp_d * np.exp(1j * Phi2[it])[..., None]

    def Tg(it):
        return cut_g[it] * sp_g * np.exp(1j * Phi1[it])[..., None]

    prov_d = weighted_stencil_provider(stg, pair.c1, w0, frame, "decaying")
    prov_1 = weighted_stencil_provider(stg, pair.c1, w0, frame, "growing")
    prov_2 = weighted_stencil_provider(stg, pair.c2, w0, frame, "growing")
    ev_d = Evolution(stg, prov_d, boundary=Td, backward=True, ncols=na, scheme=scheme,
                     lu_reuse=lu_reuse)
    Zd = ev_d.run()

    sigma = _weight_grad(w0, frame)
    cur = {}

    def dstencil(it):
        s1 = magnetic_stencil(g, pair.c1.A[:, it], pair.c1.q[it])
        s2 = magnetic_stencil(g, pair.c2.A[:, it], pair.c2.q[it])
        d = s2 - s1
        lead = sum(d.c[j] * sigma[j] for j in range(3))
        return d, lead

    def src(it):
        if cur.get("it") != it:
            raise RuntimeError("growing and difference solves out of step")
        return cur["G"]

    ev_g = Evolution(stg, prov_2, boundary=Tg, ncols=K, scheme=scheme, lu_reuse=lu_reuse)
    ev_w = Evolution(stg, prov_1, boundary=None, source=src, ncols=K, scheme=scheme, lu_reuse=lu_reuse)
    faces_lemma = set(pair.region.complement_minus_eps())
    acc = dict(grad=np.zeros(K, complex), pot=np.zeros(K, complex), lead=np.zeros(K, complex),
               faces={f: np.zeros(K, complex) for f in FACES})
    wvol = g.wvol
    gen_w = None
    for it, Zg in ev_g.steps():
        d, lead = dstencil(it)
        dZ = [d1(Zg, g.h[j], j) for j in range(3)]
        grad_int = sum(d.c[j][..., None] * dZ[j] for j in range(3)) + lead[..., None] * Zg
        pot_int = d.z[..., None] * Zg
        cur["it"], cur["G"] = it, grad_int + pot_int
        if gen_w is None:
            gen_w = ev_w.steps()
        itw, W = next(gen_w)
        assert itw == it
        zd = Zd[it][..., col_a]
        wt = stg.wt[it]
        acc["grad"] += wt * np.einsum("xyz,xyzk->k", wvol, grad_int * zd)
        acc["pot"] += wt * np.einsum("xyz,xyzk->k", wvol, pot_int * zd)
        td = Td(it)[..., col_a]
        acc["lead"] += wt * np.einsum("xyz,xyzk->k", wvol, lead[..., None] * Tg(it) * td)
        for f in FACES:
            dn = normal_derivative(g, W, f, lead=0, order=3)
            zf = face_values(g, zd, f, lead=0)
            acc["faces"][f] += -wt * np.einsum("ab,abk->k", g.face_weights(f), dn * zf)
    if stats is not None:
        for ev in (ev_d, ev_g, ev_w):
            for key, v in ev.stats.items():
                stats[key] = stats.get(key, 0) + v
    out = []
    for j in range(K):
        faces = {f: complex(acc["faces"][f][j]) for f in FACES}
        out.append(IdentityLedger(w.lam, mus[col_m[j]], center, int(col_a[j]), float(prof[col_a[j]].center),
                                  complex(acc["grad"][j]), complex(acc["pot"][j]), complex(acc["lead"][j]),
                                  sum(faces[f] for f in faces_lemma), sum(faces.values()), faces))
    return out


def evaluate_identity(pair: ExperimentPair, w: CarlemanWeight, center=None, mu=1.0, profile=None,
                      scheme="euler") -> IdentityLedger:
    """Single-family identity ledger (full angular window unless a profile is given)."""
    ch = pair.stg.grid.metric.chart
    if profile is None:
        prof = fan_profiles(pair.stg, center, 1, overlap=1.0)[0]
        if center is None:
            prof = bump_profile(0.5 * sum(ch.th_range), 0.5 * (ch.th_range[1] - ch.th_range[0]), 2)
    else:
        prof = profile
    return identity_sweep(pair, w, SweepSpec(center, [prof], (mu,)), scheme)[0]


def _slope(x, y):
    x, y = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(x, y, 1)[0])


def z_term_vanishing(ledgers: Sequence[IdentityLedger], threshold=-0.5, floor=1e-14):
    """Log-log slope in lambda of |Z_term + potential_term| / lambda."""
    lams = [L.lam for L in ledgers]
    if len(set(lams)) < 3:
        raise ValueError("need at least three lambda values")
    vals = [abs(L.Z_term + L.lhs_potential_term) / L.lam for L in ledgers]
    if max(vals) <= floor:
        return dict(lams=lams, values=vals, slope=float("-inf"), passed=True, trivial=True)
    s = _slope(lams, np.maximum(vals, floor))
    return dict(lams=lams, values=vals, slope=s, passed=bool(s <= threshold), trivial=False)


def boundary_scaling(ledgers: Sequence[IdentityLedger], factor=2.0):
    """|rhs_boundary_term| / lambda^{1/2} over the ladder; bounded within `factor`."""
    vals = np.array([abs(L.rhs_boundary_term) / np.sqrt(L.lam) for L in ledgers])
    pos = vals[vals > 0]
    spread = float(pos.max() / pos.min()) if pos.size else 1.0
    return dict(lams=[L.lam for L in ledgers], values=vals.tolist(), spread=spread, passed=bool(spread <= factor))


# ------------------------------------------------------------ ray data


def moments(stg: SpaceTimeGrid, f, mu, w: CarlemanWeight, cutoff_power=4):
    """Tied-frequency moments int int f phi_t^2 e^{i mu (t + kappa x1)} dx1 dt on the (r, theta) grid."""
    g = stg.grid
    k = kappa(w)
    ct = poly_cutoff(stg.T, cutoff_power)(stg.t).real ** 2 * np.exp(1j * mu * stg.t)
    w1 = trapz_weights(g.shape[0], g.h[0]) * np.exp(1j * mu * k * g.x1)
    return np.einsum("t,x,tx...->...", stg.wt * ct, w1, f)


def transverse_moments(stg, dA, mu, w, cutoff_power=4):
    return np.stack([moments(stg, dA[j], mu, w, cutoff_power) for j in range(3)])


def direct_samples(pair: ExperimentPair, w: CarlemanWeight, spec: SweepSpec, stage="A"):
    """Leading-term samples by volume quadrature with the phase corrections dropped (no PDE solves).

    A stage: int N~ phi_t^2 e^{i mu (t + kappa x1)} e^{-mu d} b^{-1/2} h^2 dV ;  q stage: same with q2 - q1.
    """
    stg, g = pair.stg, pair.stg.grid
    frame = ray_frame(g, spec.center)
    k = kappa(w)
    er, eth = frame.unit_components(g)
    bq = _b_quarter(g, frame)
    out = []
    for mu in spec.mus:
        if stage == "A":
            dA = pair.dA
            N = dA[0] + 1j * k * (dA[1] * er + dA[2] * eth)
        else:
            N = pair.dq
        mom = moments(stg, N, mu, w, spec.cutoff_power)  # (nr, nth)
        for h in spec.profiles:
            wgt = np.exp(-mu * frame.d) * bq**2 * h(frame.angle) ** 2
            area = np.outer(trapz_weights(g.shape[1], g.h[1]), trapz_weights(g.shape[2], g.h[2])) * g.sqrtb[0]
            out.append(np.sum(area * wgt * mom))
    return np.array(out)


def extract_ray_data(ledgers: Sequence[IdentityLedger], stage="A", path="pde"):
    """Transform samples from ledgers: RHS / (-2i lam) for A, RHS for q (path 'leading' uses the leading term)."""
    out = []
    for L in ledgers:
        v = L.rhs_total if path == "pde" else (L.leading_term if stage == "A" else L.lhs_potential_term)
        out.append(v / (-2j * L.lam) if stage == "A" else v)
    return np.array(out)


def required_rows(n_unknowns, min_ratio=0.5):
    return int(np.ceil(min_ratio * n_unknowns))


# ------------------------------------------------------------ reconstruction


@dataclass
class Reconstruction:
    mu: float
    stage: str
    recovered: np.ndarray  # (3, nr, nth) for A, (nr, nth) for q, on the inversion grid
    truth: np.ndarray
    r: np.ndarray
    th: np.ndarray
    report: dict

    def rel_error(self):
        a = _area(self.r, self.th)
        num = np.sum(a * np.abs(self.recovered - self.truth) ** 2)
        den = np.sum(a * np.abs(self.truth) ** 2)
        return float(np.sqrt(num / den)) if den > 0 else float(np.sqrt(num))


def _area(r, th):
    return np.outer(trapz_weights(len(r), r[1] - r[0]) * r, trapz_weights(len(th), th[1] - th[0]))


def _resample(f, r, th, r2, th2):
    R2, T2 = np.meshgrid(r2, th2, indexing="ij")
    pts = np.stack([R2.ravel(), T2.ravel()], -1)
    ip = lambda a: RegularGridInterpolator((r, th), a, method="linear")(pts).reshape(R2.shape)
    if np.iscomplexobj(f):
        return ip(f.real) + 1j * ip(f.imag)
    return ip(f)


def curl_witness(fields, mu, k, r):
    """(x1, r) curl after Fourier in x1: -i mu kappa a_r - d_r a_1 ; and its reference scale terms."""
    hr = r[1] - r[0]
    t1 = -1j * mu * k * fields[1]
    t2 = -d1(fields[0], hr, 0)
    return t1 + t2, t1, t2


def sweep_operator(specs: Sequence[SweepSpec], stg: SpaceTimeGrid, w: CarlemanWeight, mu, stage, r, th,
                   ds=0.02, n_sub=9):
    """Thick-ray operator whose rows follow the sweep order (each spec, then its profiles)."""
    ch = stg.grid.metric.chart
    centers = [tuple(ch.center) if s.center is None else tuple(s.center) for s in specs]
    uniq = list(dict.fromkeys(centers))
    geom = tr.RayGeometry(ch, tuple(uniq), 1, (mu,), ds)
    profiles = [(uniq.index(c), h) for c, s in zip(centers, specs) for h in s.profiles]
    return tr.build_operator(r, th, geom, kappa=kappa(w) if stage == "A" else None, profiles=profiles,
                             n_sub=n_sub)


def reconstruct(samples, specs: Sequence[SweepSpec], stg: SpaceTimeGrid, w: CarlemanWeight, mu, stage,
                truth_fine, n_inv=(12, 12), alpha=1e-3, ds=0.02, n_sub=9):
    """Invert one frequency's thick-ray samples on a coarse (r, theta) grid.

    samples are ordered like the sweep: for each spec, its profiles.
    truth_fine is the true moment field(s) on the simulation grid, resampled for scoring.
    """
    g = stg.grid
    ch = g.metric.chart
    r = np.linspace(*ch.r_range, n_inv[0])
    th = np.linspace(*ch.th_range, n_inv[1])
    op = sweep_operator(specs, stg, w, mu, stage, r, th, ds, n_sub)
    f, rep = tr.invert_transform(samples, op, alpha, r_nodes=r, th_nodes=th)
    if stage == "A":
        truth = np.stack([_resample(truth_fine[j], g.r, g.th, r, th) for j in range(3)])
    else:
        truth = _resample(truth_fine, g.r, g.th, r, th)
    return Reconstruction(mu, stage, f, truth, r, th, rep.as_dict()), op


def _diff_matrix(n, h):
    """Centered differences, one-sided first order at both ends (as numpy.gradient)."""
    D = sp.diags([-0.5, 0.5], [-1, 1], shape=(n, n)).tolil()
    D[0, :2] = [-1.0, 1.0]
    D[-1, -2:] = [-1.0, 1.0]
    return D.tocsr() / h


def potential_fit(fields, r, th, mu, k):
    """Least-squares Psi^ with (-i mu kappa Psi^, d_r Psi^, d_th Psi^) ~ recovered moments, Psi^ = 0 on the rim."""
    nr, nth = len(r), len(th)
    hr, ht = r[1] - r[0], th[1] - th[0]
    Dr, Dt = _diff_matrix(nr, hr), _diff_matrix(nth, ht)
    I_r, I_t = sp.identity(nr), sp.identity(nth)
    ops = [(-1j * mu * k) * sp.identity(nr * nth), sp.kron(Dr, I_t), sp.kron(I_r, Dt)]
    M = sp.vstack(ops).tocsr()
    inner = np.zeros((nr, nth), bool)
    inner[1:-1, 1:-1] = True
    M = M[:, inner.ravel()]
    b = np.concatenate([fields[j].ravel() for j in range(3)])
    MH = M.conj().T
    x = np.linalg.solve((MH @ M).toarray(), MH @ b)
    Psi = np.zeros((nr, nth), complex)
    Psi[inner] = x
    return Psi
