"""Command-line front end: ``magcd run | validate | report``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import criteria as C
from .config import STAGES, ManifestError, RunManifest, validate
from .reports import write_csv, write_json, write_reconstruction

log = logging.getLogger("magcd")
ENV_OUT = "MAGCD_OUT"


# ------------------------------------------------------------------ jobs


def _geometry_rows(m: RunManifest):
    from .geometry import classify_boundary
    stg = C.space_time_grid(m)
    g = stg.grid
    dec = classify_boundary(g.metric, m.geometry.eps)
    rows = []
    for f in dec.dphi:
        rows.append(dict(face=f, d_nu_phi=dec.dphi[f], in_plus=f in dec.plus(), in_minus=f in dec.minus(),
                         in_plus_eps=f in dec.plus_eps(), in_minus_eps=f in dec.minus_eps(),
                         in_lemma_set=f in dec.complement_minus_eps()))
    summary = dict(shape=list(g.shape), nt=stg.nt, h=[float(x) for x in g.h], dt=stg.dt, volume=g.volume())
    return rows, summary


def _coefficient_rows(m: RunManifest):
    from .coefficients import gradient_pair, nongradient_pair, q_pair
    stg = C.space_time_grid(m)
    g = stg.grid
    base = C.reference_coefficients(m, stg)
    c1, c2, gauge = gradient_pair(stg, base, m.coefficients.gauge_amp)
    n1, n2 = nongradient_pair(stg, base, m.coefficients.nongradient_amp)
    q1, q2 = q_pair(stg, base, m.coefficients.q_amp)
    rows = []
    for name, a, b in (("gradient", c1, c2), ("non-gradient", n1, n2), ("q-phantom", q1, q2)):
        rows.append(dict(pair=name, equal_on_boundary=a.equal_on_boundary(b, g),
                         sup_dA=float(np.abs(b.A - a.A).max()), sup_dq=float(np.abs(b.q - a.q).max()),
                         smoothness=b.smoothness(g)))
    return rows, dict(gauge_vanishes_on_boundary=gauge.vanishes_on_boundary(g))


def _job(name: str, m: RunManifest):
    """Run one job; returns (name, results list, extra dict).  Pure function of the manifest."""
    logging.getLogger("magcd").setLevel(logging.INFO)
    if name == "geometry":
        rows, summary = _geometry_rows(m)
        return name, [], dict(rows=rows, summary=summary)
    if name == "coefficients":
        rows, summary = _coefficient_rows(m)
        return name, [], dict(rows=rows, summary=summary)
    if name == "identity":
        dz = m.discretization
        fine = C.identity_ledgers(m)
        coarse = C.identity_ledgers(m, dz.coarse_n, dz.coarse_nt)
        return name, [C.identity_defect(m, fine, coarse), C.boundary_term_scaling(m, fine)], {}
    cid = int(name)
    if cid == 10:
        outputs = {}
        res = C.end_to_end(m, outputs)
        return name, [res], dict(reconstructions=outputs)
    return name, [C.CHECKS[cid](m)], {}


def _stage_jobs(stage):
    if stage in ("geometry", "coefficients"):
        return [stage]
    if stage == "pipeline":
        return ["identity", "10"]
    return [str(i) for i in C.STAGE_CHECKS[stage]]


# ------------------------------------------------------------------- run


def _load(args) -> RunManifest:
    m = RunManifest.load(args.manifest) if args.manifest else RunManifest()
    if args.stages is not None:
        m.stages = tuple(s.strip() for s in args.stages.split(",") if s.strip())
    if args.seed is not None:
        m.seed = args.seed
    if args.parallel is not None:
        m.parallel = args.parallel
    return m


def _outdir(args, m: RunManifest) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get(ENV_OUT):
        return Path(os.environ[ENV_OUT])
    return Path(m.output.directory)


def _slug(res):
    return "criterion_%02d_%s" % (res.id, res.name.replace(" ", "_").replace("-", "_"))


def cmd_run(args) -> int:
    try:
        m = _load(args)
    except (ManifestError, OSError) as exc:
        print("magcd: manifest error: %s" % exc, file=sys.stderr)
        return 2
    errs = validate(m)
    if errs:
        for e in errs:
            print("magcd: schema violation: %s" % e, file=sys.stderr)
        return 2
    out = _outdir(args, m)
    out.mkdir(parents=True, exist_ok=True)
    digest = m.digest()
    (out / "manifest.json").write_text(m.to_json() + "\n")
    stages = [s for s in STAGES if s in m.stages]  # dependency order
    jobs = [(s, j) for s in stages for j in _stage_jobs(s)]
    log.info("run %s: stages %s, %d jobs, parallel %d", digest[:12], ",".join(stages), len(jobs), m.parallel)

    results, failed, timings = {}, None, {}
    if m.parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=m.parallel) as ex:
            futs = [(s, j, ex.submit(_job, j, m)) for s, j in jobs]
            for s, j, fu in futs:
                try:
                    results[j] = fu.result()
                except Exception:
                    traceback.print_exc()
                    failed = failed or s
    else:
        for s, j in jobs:
            t0 = time.perf_counter()
            try:
                results[j] = _job(j, m)
            except Exception:
                traceback.print_exc()
                failed = s
                break
            timings[j] = round(time.perf_counter() - t0, 1)

    # reports, serialized and in a fixed order
    verdicts, stage_info = {}, {}
    for s, j in jobs:
        if j not in results:
            continue
        _, res_list, extra = results[j]
        if "rows" in extra:
            write_csv(out / ("%s.csv" % j), extra["rows"], digest, title="%s stage" % j)
            stage_info[j] = extra["summary"]
        for res in res_list:
            write_csv(out / ("%s.csv" % _slug(res)), res.rows, digest, title="criterion %d: %s" % (res.id, res.name))
            verdicts[res.id] = res
        for key, rec in (extra.get("reconstructions") or {}).items():
            if rec is None:
                continue
            if key == "Psi_hat":
                from .gridio import write_grid
                write_grid(out / "potential_fit.grid", rec, meta=dict(manifest_sha256=digest))
            else:
                write_reconstruction(out / ("reconstruction_%s.grid" % key), rec, digest)
    summary = dict(manifest_sha256=digest, stages=stages, failed_stage=failed,
                   criteria={str(k): verdicts[k].summary() for k in sorted(verdicts)},
                   stage_summaries=stage_info,
                   all_passed=bool(failed is None and verdicts and all(v.passed for v in verdicts.values())))
    for v in summary["criteria"].values():
        v.pop("seconds", None)
    write_json(out / "summary.json", summary)
    write_json(out / "timings.json", dict(jobs=timings, criteria={str(k): round(v.seconds, 1)
                                                                   for k, v in verdicts.items()}))
    for k in sorted(verdicts):
        print(verdicts[k].line())
    if failed:
        print("magcd: stage '%s' failed" % failed, file=sys.stderr)
        return 1
    if not verdicts:
        return 0
    return 0 if summary["all_passed"] else 1


def cmd_validate(args) -> int:
    try:
        m = _load(args)
    except (ManifestError, OSError) as exc:
        print("invalid: %s" % exc)
        return 2
    errs = validate(m)
    if errs:
        for e in errs:
            print("invalid: %s" % e)
        return 2
    print("valid (manifest sha256 %s)" % m.digest())
    return 0


def cmd_report(args) -> int:
    out = Path(args.out) if args.out else Path(os.environ.get(ENV_OUT, RunManifest().output.directory))
    path = out / "summary.json"
    if not path.exists():
        print("magcd: no summary.json in %s" % out, file=sys.stderr)
        return 2
    s = json.loads(path.read_text())
    print("manifest sha256 %s" % s["manifest_sha256"])
    for k, v in s["criteria"].items():
        shown = ", ".join("%s=%s" % (a, b) for a, b in v["metrics"].items())
        print("%s criterion %s (%s): %s" % ("PASS" if v["passed"] else "FAIL", k, v["name"], shown))
    if s.get("failed_stage"):
        print("stage failed: %s" % s["failed_stage"])
    return 0 if s.get("all_passed") else 1


def build_parser():
    p = argparse.ArgumentParser(prog="magcd", description="Partial-data inverse problem experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb in ("run", "validate", "report"):
        q = sub.add_parser(verb)
        q.add_argument("--manifest", help="JSON run manifest (defaults if omitted)")
        q.add_argument("--out", help="output directory (overrides %s and the manifest)" % ENV_OUT)
        q.add_argument("--stages", help="comma-separated stages: %s" % ",".join(STAGES))
        q.add_argument("--seed", type=int)
        q.add_argument("--parallel", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(asctime)s %(message)s")
    np.seterr(all="ignore")
    return {"run": cmd_run, "validate": cmd_validate, "report": cmd_report}[args.verb](args)


if __name__ == "__main__":
    sys.exit(main())
