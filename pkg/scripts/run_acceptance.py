#!/usr/bin/env python3
"""Run acceptance criteria on a manifest and print one PASS/FAIL line each.

    python3 scripts/run_acceptance.py                 # all ten, default manifest
    python3 scripts/run_acceptance.py 1 5 9           # a subset
    python3 scripts/run_acceptance.py --manifest scripts/example_manifest.json 9
"""

import argparse
import sys

from magcd import criteria as C
from magcd.config import RunManifest, check


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("ids", nargs="*", type=int, default=sorted(C.CHECKS))
    p.add_argument("--manifest")
    a = p.parse_args(argv)
    m = check(RunManifest.load(a.manifest) if a.manifest else RunManifest())
    ids = sorted(set(a.ids))
    unknown = [i for i in ids if i not in C.CHECKS]
    if unknown:
        p.error("unknown criteria %s" % unknown)
    results = {}
    if 7 in ids or 8 in ids:
        dz = m.discretization
        fine = C.identity_ledgers(m)
        if 7 in ids:
            results[7] = C.identity_defect(m, fine, C.identity_ledgers(m, dz.coarse_n, dz.coarse_nt))
        if 8 in ids:
            results[8] = C.boundary_term_scaling(m, fine)
    for i in ids:
        if i not in results:
            results[i] = C.CHECKS[i](m)
        print(results[i].line(), flush=True)
    return 0 if all(r.passed for r in results.values()) else 1


if __name__ == "__main__":
    sys.exit(main())
