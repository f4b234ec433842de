"""IBVP solver for the magnetic convection-diffusion operator and its DN maps.

    L_{A,q} u = d_t u - (1/sqrt|g|)(d_j + i A_j)(sqrt|g| g^{jk}(d_k + i A_k) u) + q u
              = d_t u - Delta_g u - 2i<A, grad u> - i delta_g A u + |A|^2 u + q u.

Every spatial operator used in the package (L, its transpose, and all their
exponential conjugations) has the form

    S w = sum_j (-a_j d_j^2 w + c_j d_j w) + z w,

stored as a Stencil and discretized by centered differences (one-sided
second-order closures where a full-grid evaluation is needed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coefficients import CoefficientField, divergence, norm2
from .fd import d1, d2, dt_nodes
from .geometry import FACES, BoundaryDecomposition, Grid, SpaceTimeGrid

RESID_TOL = 1e-10


class SolverError(RuntimeError):
    pass


@dataclass
class Stencil:
    a: tuple  # real diffusion coefficients per axis
    c: tuple  # complex first-order coefficients per axis
    z: np.ndarray  # complex zeroth-order coefficient

    def __add__(self, other):
        return Stencil(tuple(x + y for x, y in zip(self.a, other.a)),
                       tuple(x + y for x, y in zip(self.c, other.c)), self.z + other.z)

    def __sub__(self, other):
        return Stencil(tuple(x - y for x, y in zip(self.a, other.a)),
                       tuple(x - y for x, y in zip(self.c, other.c)), self.z - other.z)


def laplace_stencil(grid: Grid):
    """-Delta_g."""
    return Stencil(tuple(grid.ginv), tuple(-l for l in grid.lap), np.zeros(grid.shape, complex))


def magnetic_stencil(grid: Grid, A, q, transpose=False):
    """Spatial part of L_{A,q} (transpose=False) or of its transpose L^t.

    The transpose is the formal adjoint under the bilinear pairing
    int u v dV dt:  L^t = -d_t - (d - iA) g (d - iA) + q.
    """
    s = 1.0 if transpose else -1.0
    st = laplace_stencil(grid)
    div = divergence(grid, A)
    c = tuple(st.c[j] + s * 2j * grid.ginv[j] * A[j] for j in range(3))
    z = s * 1j * div + norm2(grid, A) + q
    return Stencil(st.a, c, np.broadcast_to(z, grid.shape).astype(complex))


def conjugate(st: Stencil, grad, hess, time_term=0.0):
    """Coefficients of e^{-sigma} (tau d_t + S) e^{sigma} minus tau d_t.

    grad[j] = d_j sigma, hess[j] = d_j^2 sigma (chart coordinates);
    time_term = tau * d_t sigma.
    """
    c = tuple(st.c[j] - 2 * st.a[j] * grad[j] for j in range(3))
    z = st.z + time_term
    for j in range(3):
        z = z - st.a[j] * (hess[j] + grad[j] ** 2) + st.c[j] * grad[j]
    return Stencil(st.a, c, z)


def _bshape(arr, u):
    arr = np.asarray(arr)
    return arr.reshape(arr.shape + (1,) * (u.ndim - arr.ndim)) if u.ndim > arr.ndim else arr


def stencil_apply(grid: Grid, st: Stencil, u):
    """Full-grid action of the stencil on u (spatial axes first, optional batch axes)."""
    out = _bshape(st.z, u) * u
    for j in range(3):
        out = out - _bshape(st.a[j], u) * d2(u, grid.h[j], j) + _bshape(st.c[j], u) * d1(u, grid.h[j], j)
    return out


def stencil_apply_interior(grid: Grid, st: Stencil, u):
    """Interior-node action using only the 7-point centered stencil."""
    I = (slice(1, -1),) * 3
    ui = u[I]
    out = _bshape(st_z_int(st, grid), ui) * ui
    for j, h in enumerate(grid.h):
        lo = [slice(1, -1)] * 3
        hi = [slice(1, -1)] * 3
        lo[j] = slice(0, -2)
        hi[j] = slice(2, None)
        up, dn = u[tuple(hi)], u[tuple(lo)]
        a = _bshape(_int(st.a[j], grid), ui)
        c = _bshape(_int(st.c[j], grid), ui)
        out = out - a * (up - 2 * ui + dn) / h**2 + c * (up - dn) / (2 * h)
    return out


def _int(arr, grid):
    arr = np.broadcast_to(arr, grid.shape)
    return arr[1:-1, 1:-1, 1:-1]


def st_z_int(st, grid):
    return _int(st.z, grid)


class InteriorPattern:
    """Sparsity pattern of the 7-point interior operator on a grid."""

    def __init__(self, grid: Grid):
        self.grid = grid
        m = grid.interior_shape()
        self.m = m
        N = int(np.prod(m))
        self.N = N
        idx = np.arange(N).reshape(m)
        rows, cols, self.kinds = [idx.ravel()], [idx.ravel()], [("d", -1, 0)]
        for j in range(3):
            for sgn in (-1, 1):
                src = [slice(None)] * 3
                dst = [slice(None)] * 3
                if sgn < 0:
                    src[j], dst[j] = slice(1, None), slice(None, -1)
                else:
                    src[j], dst[j] = slice(None, -1), slice(1, None)
                rows.append(idx[tuple(src)].ravel())
                cols.append(idx[tuple(dst)].ravel())
                self.kinds.append(("o", j, sgn, tuple(src)))
        self.rows = np.concatenate(rows)
        self.cols = np.concatenate(cols)

    def matrix(self, st: Stencil, diag_shift=0.0, scale=1.0):
        """Sparse CSC matrix of diag_shift * I + scale * S on interior nodes."""
        g = self.grid
        diag = np.broadcast_to(_int(st.z, g), self.m).astype(complex)
        diag = diag + sum(2 * np.broadcast_to(_int(st.a[j], g), self.m) / g.h[j] ** 2 for j in range(3))
        data = [(diag_shift + scale * diag).ravel()]
        for kind in self.kinds[1:]:
            _, j, sgn, src = kind
            a = np.broadcast_to(_int(st.a[j], g), self.m)[src]
            c = np.broadcast_to(_int(st.c[j], g), self.m)[src]
            h = g.h[j]
            data.append((scale * (-a / h**2 + sgn * c / (2 * h))).ravel())
        data = np.concatenate(data)
        return sp.csc_matrix((data, (self.rows, self.cols)), shape=(self.N, self.N))


def factorize(M):
    try:
        return spla.splu(M, permc_spec="MMD_AT_PLUS_A", options=dict(SymmetricMode=True))
    except RuntimeError as exc:
        raise SolverError("sparse factorization failed: %s" % exc) from exc


def lu_solve(lu, M, b, tol=RESID_TOL, max_refine=4):
    """Solve with iterative refinement; raise with the residual if it stalls."""
    x = lu.solve(b)
    bn = np.linalg.norm(b, axis=0)
    bn = np.where(bn == 0, 1.0, bn)
    for k in range(max_refine + 1):
        r = b - M @ x
        rel = float(np.max(np.linalg.norm(r, axis=0) / bn))
        if rel <= tol:
            return x
        if k < max_refine:
            x = x + lu.solve(r)
    raise SolverError("linear solve did not converge: relative residual %.3e" % rel)


# ------------------------------------------------------------------ stepping


@dataclass
class Evolution:
    """Implicit time stepping for w_t + S(t) w = F with Dirichlet data.

    stencil(it): Stencil at time index it (return the same object for
    time-independent operators to reuse the factorization).
    boundary(it): full-grid array whose boundary-node values are the data
    (interior ignored), or None for zero data.
    source(it): full-grid source or None.
    For backward problems (-w_t + S w = F, final data) pass backward=True;
    time is reversed internally.
    """
    stg: SpaceTimeGrid
    stencil: Callable
    boundary: Optional[Callable] = None
    source: Optional[Callable] = None
    ncols: Optional[int] = None
    backward: bool = False
    scheme: str = "euler"
    stats: dict = field(default_factory=lambda: dict(factorizations=0, solves=0))
    lu_reuse: int = 0  # steps a stale factorization may serve as a refinement preconditioner

    def __post_init__(self):
        if self.scheme not in ("euler", "trapezoidal"):
            raise ValueError("scheme must be 'euler' or 'trapezoidal'")
        self.pattern = _pattern(self.stg.grid)

    def _shape(self):
        g = self.stg.grid.shape
        return g if self.ncols is None else g + (self.ncols,)

    def _bd(self, it):
        if self.boundary is None:
            return None
        b = self.boundary(it)
        if b is None:
            return None
        b = np.array(b, dtype=complex)
        b[1:-1, 1:-1, 1:-1] = 0
        return b

    def steps(self, initial=None):
        """Yield (time index, full-grid solution) in stepping order."""
        stg, grid = self.stg, self.stg.grid
        nt, dt = stg.nt, stg.dt
        order = range(nt, -1, -1) if self.backward else range(nt + 1)
        order = list(order)
        shape = self._shape()
        N = self.pattern.N
        w = np.zeros(shape, complex) if initial is None else np.array(initial, complex)
        bd = self._bd(order[0])
        if bd is not None:
            mask = grid.boundary_mask()
            w[mask] = bd[mask]
        cache_key, lu, M, age = None, None, None, 0
        trap = self.scheme == "trapezoidal"
        theta = 0.5 if trap else 1.0
        prev_st = self.stencil(order[0]) if trap else None
        prev_F = self._src(order[0], shape) if trap else None
        yield order[0], w
        for it in order[1:]:
            st = self.stencil(it)
            fresh = False
            if st is not cache_key:
                M = self.pattern.matrix(st, diag_shift=1.0 / dt, scale=theta)
                cache_key = st
                age += 1
                if lu is None or age > self.lu_reuse:
                    lu, age, fresh = factorize(M), 0, True
                    self.stats["factorizations"] += 1
            F = self._src(it, shape)
            rhs = w[1:-1, 1:-1, 1:-1] / dt
            if trap:
                rhs = rhs - 0.5 * stencil_apply_interior(grid, prev_st, w) + 0.5 * (prev_F + F)
            else:
                rhs = rhs + F
            bd = self._bd(it)
            wn = np.zeros(shape, complex)
            if bd is not None:
                mask = grid.boundary_mask()
                wn[mask] = bd[mask]
                rhs = rhs - theta * stencil_apply_interior(grid, st, wn)
            b = rhs.reshape(N, -1)
            if fresh or age == 0:
                x = lu_solve(lu, M, b)
            else:
                try:
                    x = lu_solve(lu, M, b, max_refine=6)
                except SolverError:
                    lu, age = factorize(M), 0
                    self.stats["factorizations"] += 1
                    x = lu_solve(lu, M, b)
            self.stats["solves"] += b.shape[1]
            wn[1:-1, 1:-1, 1:-1] = x.reshape(rhs.shape)
            w = wn
            if trap:
                prev_st, prev_F = st, F
            yield it, w

    def _src(self, it, shape):
        if self.source is None:
            return 0.0
        F = self.source(it)
        if F is None:
            return 0.0
        return np.asarray(F)[1:-1, 1:-1, 1:-1]

    def run(self, initial=None):
        """Collect the whole space-time solution, shape (nt+1,) + grid (+ batch)."""
        out = np.zeros((self.stg.nt + 1,) + self._shape(), complex)
        for it, w in self.steps(initial):
            out[it] = w
        return out


_PATTERNS = {}


def _pattern(grid: Grid):
    key = id(grid)
    p = _PATTERNS.get(key)
    if p is None or p.grid is not grid:
        p = InteriorPattern(grid)
        _PATTERNS[key] = p
    return p


# ------------------------------------------------------------- public ops


def coeff_stencil(stg: SpaceTimeGrid, coeffs: CoefficientField, transpose=False, cache=True):
    """Per-time-step stencil provider; time-independent coefficients share one object."""
    g = stg.grid
    static = np.array_equal(coeffs.A, np.broadcast_to(coeffs.A[:, :1], coeffs.A.shape)) and \
        np.array_equal(coeffs.q, np.broadcast_to(coeffs.q[:1], coeffs.q.shape))
    memo = {}

    def at(it):
        k = 0 if static else it
        if k not in memo:
            if not cache:
                memo.clear()
            memo[k] = magnetic_stencil(g, coeffs.A[:, k], coeffs.q[k], transpose)
        return memo[k]
    return at


def apply_L(stg: SpaceTimeGrid, coeffs: CoefficientField, u, transpose=False):
    """Discrete L_{A,q} u on the full space-time grid (L^t with transpose=True)."""
    u = np.asarray(u, complex)
    sgn = -1.0 if transpose else 1.0
    out = sgn * dt_nodes(u, stg.dt, 0)
    for it in range(stg.nt + 1):
        st = magnetic_stencil(stg.grid, coeffs.A[:, it], coeffs.q[it], transpose)
        out[it] += stencil_apply(stg.grid, st, u[it])
    return out


@dataclass
class IBVPProblem:
    stg: SpaceTimeGrid
    coeffs: CoefficientField
    f: Optional[np.ndarray] = None  # full space-time array; boundary nodes used
    F: Optional[np.ndarray] = None
    direction: str = "forward"

    def __post_init__(self):
        if self.direction not in ("forward", "adjoint"):
            raise ValueError("direction must be 'forward' or 'adjoint'")
        if self.f is not None:
            m = self.stg.grid.boundary_mask()
            k = 0 if self.direction == "forward" else -1
            if np.abs(self.f[k][m]).max() > 1e-12:
                raise ValueError("Dirichlet data incompatible with the zero %s condition"
                                 % ("initial" if k == 0 else "final"))


def solve_ibvp(problem: IBVPProblem, scheme="euler", stats=None):
    """Solve L u = F (forward, u(0)=0) or L^t v = F (adjoint, v(T)=0) with u = f on the lateral boundary."""
    adj = problem.direction == "adjoint"
    ev = Evolution(problem.stg, coeff_stencil(problem.stg, problem.coeffs, transpose=adj),
                   boundary=None if problem.f is None else (lambda it: problem.f[it]),
                   source=None if problem.F is None else (lambda it: problem.F[it]),
                   backward=adj, scheme=scheme)
    u = ev.run()
    if stats is not None:
        stats.update(ev.stats)
    return u


# -------------------------------------------------------------------- DN map


def _expand(arr, ndim):
    return arr.reshape(arr.shape + (1,) * (ndim - arr.ndim))


_ONE_SIDED = {2: ((3, -4, 1), 2.0), 3: ((11, -18, 9, -2), 6.0)}


def normal_derivative(grid: Grid, u, face, lead=1, order=2):
    """One-sided outward normal derivative (unit normal) on a face.

    u has `lead` leading axes (e.g. time) before the three spatial axes and
    optional trailing batch axes.  order 2 (default, used for DN records) or 3.
    """
    if order not in _ONE_SIDED:
        raise ValueError("order must be 2 or 3")
    coef, den = _ONE_SIDED[order]
    ax, _ = grid.face_slice(face)
    h = grid.h[ax]
    pos = lead + ax

    def take(k):
        idx = [slice(None)] * u.ndim
        idx[pos] = k
        return u[tuple(idx)]
    sgn = 1 if face[-1] == "-" else -1
    d = sum(c * take(sgn * k if sgn > 0 else -1 - k) for k, c in enumerate(coef)) / (den * h)
    if ax == 2:
        j = 0 if face[-1] == "-" else -1
        fac = 1.0 / np.sqrt(grid.P[0][:, j])
        fac = _expand(fac.reshape((1,) * (lead + 1) + fac.shape), d.ndim)
        d = d * fac
    return d


def face_values(grid: Grid, u, face, lead=1):
    ax, idx = grid.face_slice(face)
    return u[(slice(None),) * lead + idx]


def normal_A(grid: Grid, A, face):
    """nu . A on a face; A has shape (3, nt+1, n1, nr, nth) or (3, n1, nr, nth)."""
    ax, idx = grid.face_slice(face)
    sgn = -1.0 if face[-1] == "-" else 1.0
    comp = A[ax][(slice(None),) * (A.ndim - 4) + idx]
    if ax == 2:
        j = 0 if face[-1] == "-" else -1
        comp = comp / np.sqrt(grid.P[0][:, j])
    return sgn * comp


@dataclass
class DNRecord:
    values: dict  # face -> (nt+1, face dims) complex
    weights: dict  # face -> surface weights (face dims)
    wt: np.ndarray  # time weights
    region: BoundaryDecomposition | None = None

    def faces(self):
        return list(self.values)

    def __sub__(self, other):
        return DNRecord({f: self.values[f] - other.values[f] for f in self.values},
                        self.weights, self.wt, self.region)

    def sup(self):
        return max((float(np.abs(v).max()) for v in self.values.values()), default=0.0)

    def pair(self, other_values: dict):
        """int_Sigma values * other dS dt over the record's faces."""
        tot = 0j
        for f, v in self.values.items():
            o = other_values[f]
            tot = tot + np.einsum("t,ab,tab...->...", self.wt, self.weights[f], v * o)
        return tot


def dn_map(stg: SpaceTimeGrid, coeffs: CoefficientField, u, region=None, faces=None):
    """d_nu u + i nu.A u on the requested faces (default: measured set Sigma_{+,eps/2})."""
    g = stg.grid
    if faces is None:
        if region is None:
            raise ValueError("give a boundary decomposition or explicit faces")
        faces = region.plus_eps()
    for f in faces:
        if f not in FACES:
            raise ValueError("region must be a union of faces; got %r" % (f,))
    vals, wts = {}, {}
    for f in faces:
        fv = face_values(g, u, f)
        vals[f] = normal_derivative(g, u, f) + 1j * _expand(normal_A(g, coeffs.A, f), fv.ndim) * fv
        wts[f] = g.face_weights(f)
    return DNRecord(vals, wts, stg.wt, region)


def dn_csv_rows(stg: SpaceTimeGrid, rec: DNRecord):
    """Rows (t, face, coord_a, coord_b, Re, Im) for CSV export."""
    g = stg.grid
    coords = {0: (g.r, g.th), 1: (g.x1, g.th), 2: (g.x1, g.r)}
    rows = []
    for f, v in rec.values.items():
        ax, _ = g.face_slice(f)
        ca, cb = coords[ax]
        for it in range(v.shape[0]):
            for ia, a in enumerate(ca):
                for ib, b in enumerate(cb):
                    z = v[it, ia, ib]
                    rows.append((stg.t[it], f, a, b, z.real, z.imag))
    return rows
