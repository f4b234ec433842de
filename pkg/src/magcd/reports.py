"""CSV ledgers, JSON summary and grid outputs of a run."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .gridio import write_grid

# Column definitions written into every CSV header (and mirrored in the README).
COLUMNS = {
    "lam": "Carleman parameter lambda",
    "beta": "weight parameter beta in (1/sqrt(3), 1)",
    "rel_defect": "relative defect (criterion specific, see file name)",
    "sign": "GO family: growing (forward problem) or decaying (transpose problem)",
    "n": "nodes per space axis",
    "nt": "time steps",
    "h": "largest spatial step",
    "dt": "time step",
    "sup_residual": "sup norm of the discrete transport residual over interior nodes",
    "weighted_source_norm": "L2(M_T) norm of the weighted operator applied to the amplitude (interior nodes)",
    "residual_norm": "L2(M_T) norm of L_{A,q} applied to the amplitude",
    "remainder_norm": "L2(M_T) norm of the remainder R",
    "amplitude_norm": "L2(M_T) norm of the amplitude T",
    "lam_times_remainder": "lambda * remainder_norm",
    "sample": "index of the seeded admissible sample",
    "s": "convexification parameter s",
    "lhs_operator": "||P v||^2 (conjugated operator)",
    "lhs_final": "lambda^2 ||v(T)||^2",
    "lhs_sigma_minus_abs": "lambda * int over Sigma_- of |d_nu v|^2 |<nu, e1>|",
    "lhs_sigma_minus_signed": "same with the sign of <nu, e1> kept",
    "rhs_zeroth": "lambda^2 ||v||^2",
    "rhs_grad_final": "||e^{-phi} grad u(T)||^2",
    "rhs_grad": "||e^{-phi} grad u||^2",
    "rhs_sigma_plus": "lambda * int over Sigma_+ of |d_nu v|^2 <nu, e1>",
    "lhs": "sum of left-side terms",
    "rhs": "sum of right-side terms",
    "ratio": "rhs / lhs",
    "ratio_signed": "rhs / signed lhs",
    "study": "space or time refinement study",
    "sup_error": "sup norm error against the manufactured solution",
    "pair": "coefficient pair",
    "sup_gap": "sup norm of the partial DN map difference",
    "bound": "5 (h^2 + dt) * sup |f|",
    "mu": "tied frequency mu",
    "center_x": "ray center x coordinate",
    "center_y": "ray center y coordinate",
    "profile": "angular window index within its center",
    "profile_center": "center angle of the window (radians, seen from the ray center)",
    "lhs_gradient_term_re": "Re of the first-order part of the volume side",
    "lhs_gradient_term_im": "Im of the first-order part of the volume side",
    "lhs_potential_term_re": "Re of the zeroth-order part of the volume side",
    "lhs_potential_term_im": "Im of the zeroth-order part of the volume side",
    "leading_term_re": "Re of the leading part (amplitudes only, no remainders)",
    "leading_term_im": "Im of the leading part",
    "rhs_boundary_term_re": "Re of the boundary side restricted to Sigma minus Sigma_{-,eps/2}",
    "rhs_boundary_term_im": "Im of the same",
    "rhs_total_re": "Re of the full boundary side",
    "rhs_total_im": "Im of the full boundary side",
    "lhs_total_re": "Re of the full volume side",
    "lhs_total_im": "Im of the full volume side",
    "Z_term_re": "Re of gradient term minus leading term",
    "Z_term_im": "Im of gradient term minus leading term",
    "defect": "|volume side - boundary side|",
    "scale": "largest magnitude among the terms of the identity",
    "rel_defect_coarse": "relative defect on the coarse grid",
    "boundary_over_sqrt_lam": "|boundary side on Sigma minus Sigma_{-,eps/2}| / sqrt(lambda)",
    "face": "boundary face of the coordinate box (x1, r, th; - or +)",
    "d_nu_phi": "<nu, e1>, normal derivative of x1 on the face",
    "in_plus": "face belongs to Sigma_+ (<nu, e1> >= 0)",
    "in_minus": "face belongs to Sigma_- (<nu, e1> <= 0)",
    "in_plus_eps": "face belongs to Sigma_{+,eps/2} (measured set of the partial DN map)",
    "in_minus_eps": "face belongs to Sigma_{-,eps/2}",
    "in_lemma_set": "face belongs to Sigma minus Sigma_{-,eps/2}",
    "equal_on_boundary": "A of both sets agree on the lateral boundary",
    "sup_dA": "sup |A2 - A1|",
    "sup_dq": "sup |q2 - q1|",
    "smoothness": "largest second difference of A2",
    "alpha": "relative Tikhonov parameter",
    "alpha_effective": "alpha times the mean diagonal of A^H A",
    "residual": "||A f - s||",
    "relative_residual": "||A f - s|| / ||s||",
    "condition": "condition number of the regularized normal matrix",
    "n_samples": "number of ray samples",
    "n_unknowns": "number of unknowns",
    "iterations": "solver iterations (0: direct)",
}


def _cell(v):
    if isinstance(v, (complex, np.complexfloating)):
        return repr(complex(v))
    if isinstance(v, (np.floating, float)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    if isinstance(v, (dict, list, tuple)):
        return json.dumps(v, default=str, sort_keys=True)
    return str(v)


def write_csv(path, rows, digest, title=""):
    """Rows of dicts -> CSV with '#' header lines (title, manifest hash, column definitions)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    with open(path, "w", newline="") as fh:
        fh.write("# %s\n" % title)
        fh.write("# manifest_sha256: %s\n" % digest)
        for c in cols:
            fh.write("# %s: %s\n" % (c, COLUMNS.get(c, "see README")))
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(cols)
        for r in rows:
            wr.writerow([_cell(r.get(c, "")) for c in cols])
    return path


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [float(np.real(x)), float(np.imag(x))]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def write_reconstruction(path, rec, digest):
    """Recovered and true fields of one Reconstruction on its (r, theta) grid."""
    data = np.stack([np.asarray(rec.recovered), np.asarray(rec.truth)])
    comps = ["recovered", "truth"]
    meta = dict(manifest_sha256=digest, stage=rec.stage, mu=rec.mu, rel_error=rec.rel_error())
    if rec.stage == "A":
        meta["field_components"] = ["a_1", "a_r", "a_theta"]
    return write_grid(path, data, ranges={"r": (rec.r[0], rec.r[-1]), "theta": (rec.th[0], rec.th[-1])},
                      components=comps, meta=meta)
