"""Run manifest: nested dataclass blocks with JSON (de)serialization and schema checks."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .carleman import BETA_MIN

STAGES = ("geometry", "coefficients", "solver", "carleman", "go", "transforms", "pipeline")


class ManifestError(ValueError):
    """Schema violation in a run manifest."""


@dataclass
class GeometryConfig:
    center: tuple = (0.0, 0.0)
    r_range: tuple = (1.0, 3.0)
    th_range: tuple = (-math.pi / 6, math.pi / 6)
    ell: float = 1.0
    eps: float = 0.5


@dataclass
class DiscretizationConfig:
    n: tuple = (24, 24, 24)
    nt: int = 64
    T: float = 1.0
    scheme: str = "euler"
    coarse_n: tuple = (16, 16, 16)  # refinement partner for convergence checks
    coarse_nt: int = 32


@dataclass
class CoefficientConfig:
    background_amp: float = 0.3
    background_q0: float = 0.5
    gauge_amp: float = 0.5
    nongradient_amp: float = 0.5
    q_amp: float = 1.0


@dataclass
class CarlemanConfig:
    lams: tuple = (8.0, 16.0, 32.0)
    beta: float = 0.8
    s_rule: str = "tied"  # s = lambda / (3 ell)
    n_samples: int = 20
    eps: float = 0.1
    n: tuple = (24, 24, 24)
    nt: int = 64


@dataclass
class GOConfig:
    betas: tuple = (0.65, 0.8, 0.95)
    mu: float = 1.0
    transport_n: tuple = (12, 24)
    lu_reuse: int = 64


@dataclass
class TransformConfig:
    n_centers: int = 16
    n_angles: int = 32
    mus: tuple = tuple(float(m) for m in np.geomspace(0.25, 4.0, 8))
    n_inv: tuple = (24, 24)
    alpha: float = 1e-3
    ds: float = 0.02
    refine: int = 4


@dataclass
class PipelineConfig:
    lam: float = 8.0
    mu: float = 1.0
    n_centers: int = 12
    n_profiles: int = 8
    n_inv_A: tuple = (8, 8)
    n_inv_q: tuple = (10, 10)
    alpha: float = 1e-3
    curl_threshold: float = 0.15
    identity_profile: int = 3  # window used for the identity ledger (of 8 around the chart center)


@dataclass
class OutputConfig:
    directory: str = "magcd-out"
    formats: tuple = ("csv", "json", "grid")


@dataclass
class RunManifest:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    coefficients: CoefficientConfig = field(default_factory=CoefficientConfig)
    carleman: CarlemanConfig = field(default_factory=CarlemanConfig)
    go: GOConfig = field(default_factory=GOConfig)
    transforms: TransformConfig = field(default_factory=TransformConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    stages: tuple = STAGES
    seed: int = 0
    parallel: int = 1

    # ---------------------------------------------------------------- io
    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        if not isinstance(d, dict):
            raise ManifestError("manifest must be a JSON object")
        return _build(cls, d, "manifest")

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ManifestError("manifest is not valid JSON: %s" % exc) from exc
        return cls.from_dict(d)

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls.from_json(Path(path).read_text())

    def digest(self) -> str:
        """sha256 of the canonical JSON form (embedded in every output)."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def _build(cls, d, where):
    known = {f.name: f for f in fields(cls)}
    extra = set(d) - set(known)
    if extra:
        raise ManifestError("%s: unknown keys %s" % (where, sorted(extra)))
    kw = {}
    defaults = cls()
    for name, f in known.items():
        if name not in d:
            continue
        v, ref = d[name], getattr(defaults, name)
        if is_dataclass(ref):
            if not isinstance(v, dict):
                raise ManifestError("%s.%s must be an object" % (where, name))
            kw[name] = _build(type(ref), v, "%s.%s" % (where, name))
        elif isinstance(ref, tuple):
            if not isinstance(v, list):
                raise ManifestError("%s.%s must be a list" % (where, name))
            kw[name] = tuple(v)
        elif isinstance(ref, bool):
            if not isinstance(v, bool):
                raise ManifestError("%s.%s must be a boolean" % (where, name))
            kw[name] = v
        elif isinstance(ref, int):
            if not isinstance(v, int) or isinstance(v, bool):
                raise ManifestError("%s.%s must be an integer" % (where, name))
            kw[name] = v
        elif isinstance(ref, float):
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ManifestError("%s.%s must be a number" % (where, name))
            kw[name] = float(v)
        elif isinstance(ref, str):
            if not isinstance(v, str):
                raise ManifestError("%s.%s must be a string" % (where, name))
            kw[name] = v
        else:
            kw[name] = v
    return cls(**kw)


def validate(m: RunManifest) -> list:
    """All schema and admissibility problems (empty list means valid). No computation."""
    errs = []
    gm, dz = m.geometry, m.discretization
    if not m.stages:
        errs.append("stages: empty list")
    bad = [s for s in m.stages if s not in STAGES]
    if bad:
        errs.append("stages: unknown %s (known: %s)" % (bad, ", ".join(STAGES)))
    for b in (m.carleman.beta,) + tuple(m.go.betas):
        if not (BETA_MIN < b < 1):
            errs.append("beta = %g outside (1/sqrt(3), 1) = (%.4f, 1)" % (b, BETA_MIN))
    if not (0 < gm.eps < 2):
        errs.append("geometry.eps = %g must lie in (0, 2)" % gm.eps)
    if not (0 < m.carleman.eps < 2):
        errs.append("carleman.eps = %g must lie in (0, 2)" % m.carleman.eps)
    if not gm.ell > 0:
        errs.append("geometry.ell must be positive")
    r0, r1 = gm.r_range
    t0, t1 = gm.th_range
    if not (0 < r0 < r1):
        errs.append("geometry.r_range must satisfy 0 < r_min < r_max (center outside M0)")
    if not (t0 < t1) or t1 - t0 >= math.pi:
        errs.append("geometry.th_range must be increasing and narrower than pi")
    for name, n, lo in (("discretization.n", dz.n, 5), ("discretization.coarse_n", dz.coarse_n, 5),
                        ("carleman.n", m.carleman.n, 5)):
        if len(n) != 3 or any((not isinstance(k, int)) or k < lo for k in n):
            errs.append("%s must be three integers >= %d" % (name, lo))
    for name, nt in (("discretization.nt", dz.nt), ("discretization.coarse_nt", dz.coarse_nt),
                     ("carleman.nt", m.carleman.nt)):
        if not (isinstance(nt, int) and nt >= 2):
            errs.append("%s must be an integer >= 2" % name)
    if not dz.T > 0:
        errs.append("discretization.T must be positive")
    if dz.scheme not in ("euler", "trapezoidal"):
        errs.append("discretization.scheme must be 'euler' or 'trapezoidal'")
    if m.carleman.s_rule not in ("tied", "zero"):
        errs.append("carleman.s_rule must be 'tied' or 'zero'")
    if len(m.carleman.lams) < 3 or any(l <= 0 for l in m.carleman.lams):
        errs.append("carleman.lams needs at least three positive values")
    if m.transforms.alpha <= 0 or m.pipeline.alpha <= 0:
        errs.append("regularization alpha must be positive")
    if m.parallel < 1:
        errs.append("parallel must be >= 1")
    # ray centers outside M0
    if not errs:
        from .geometry import BaseChart
        from .transforms import default_centers
        try:
            ch = BaseChart(tuple(gm.center), tuple(gm.r_range), tuple(gm.th_range))
            default_centers(ch, m.transforms.n_centers)
            default_centers(ch, m.pipeline.n_centers)
        except ValueError as exc:
            errs.append("ray centers: %s" % exc)
    return errs


def check(m: RunManifest) -> RunManifest:
    errs = validate(m)
    if errs:
        raise ManifestError("; ".join(errs))
    return m
