"""Acceptance criteria 1-10 on the default manifest (desk grid).

Each test prints one PASS/FAIL line and asserts the criterion with the
thresholds in magcd.criteria.THRESHOLDS.  Criteria 7 and 8 share one set of
identity ledgers.  The whole module takes about 18 minutes on one core.
"""

import pytest

from magcd import criteria as C
from magcd.config import RunManifest

MANIFEST = RunManifest()


@pytest.fixture(scope="module")
def ledgers():
    dz = MANIFEST.discretization
    return C.identity_ledgers(MANIFEST), C.identity_ledgers(MANIFEST, dz.coarse_n, dz.coarse_nt)


def _report(res, capsys):
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.line()


@pytest.mark.parametrize("cid", [1, 2, 3, 4, 5, 6, 9])
def test_criterion(cid, capsys):
    _report(C.CHECKS[cid](MANIFEST), capsys)


def test_criterion_7(ledgers, capsys):
    fine, coarse = ledgers
    _report(C.identity_defect(MANIFEST, fine, coarse), capsys)


def test_criterion_8(ledgers, capsys):
    _report(C.boundary_term_scaling(MANIFEST, ledgers[0]), capsys)


def test_criterion_10(capsys):
    _report(C.end_to_end(MANIFEST), capsys)
