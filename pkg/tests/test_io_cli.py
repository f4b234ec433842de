import json

import numpy as np
import pytest

from magcd.cli import main
from magcd.config import ManifestError, RunManifest, check, validate
from magcd.gridio import MAGIC, GridFormatError, read_grid, write_grid
from magcd.reports import COLUMNS, write_csv, write_json


# ------------------------------------------------------------------ grids


@pytest.mark.parametrize("dtype", [complex, float])
def test_grid_round_trip(tmp_path, dtype):
    a = (np.arange(24).reshape(2, 3, 4) * (1 + 0.5j if dtype is complex else 1.0)).astype(dtype)
    p = write_grid(tmp_path / "a.grid", a, ranges={"r": (1, 3)}, components=["x", "y"], meta={"k": 1})
    b, hdr = read_grid(p)
    assert np.array_equal(a, b) and b.dtype == np.dtype(dtype)
    assert hdr["dims"] == [2, 3, 4] and hdr["ranges"]["r"] == [1.0, 3.0] and hdr["meta"] == {"k": 1}


def test_grid_rejects_bad_files(tmp_path):
    p = tmp_path / "bad.grid"
    p.write_bytes(b"hello\n")
    with pytest.raises(GridFormatError):
        read_grid(p)
    p.write_bytes(MAGIC + b"{not json\n")
    with pytest.raises(GridFormatError):
        read_grid(p)
    write_grid(p, np.zeros(4))
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(GridFormatError, match="payload"):
        read_grid(p)
    with pytest.raises(GridFormatError):
        write_grid(p, np.array(["a"]))


# --------------------------------------------------------------- manifest


def test_manifest_round_trip_and_digest():
    m = RunManifest()
    m2 = RunManifest.from_json(m.to_json())
    assert m2 == m and m2.digest() == m.digest()
    m2.seed = 7
    assert m2.digest() != m.digest()


def test_manifest_schema_errors():
    with pytest.raises(ManifestError):
        RunManifest.from_dict({"carleman": {"beta": "high"}})
    with pytest.raises(ManifestError):
        RunManifest.from_dict({"nonsense": 1})
    with pytest.raises(ManifestError):
        RunManifest.from_json("[1, 2]")


@pytest.mark.parametrize("patch, ok", [
    ({"carleman": {"beta": 0.8}}, True),
    ({"carleman": {"beta": 0.5}}, False),
    ({"go": {"betas": [0.7, 1.0]}}, False),
    ({"geometry": {"eps": 2.5}}, False),
    ({"geometry": {"r_range": [0.0, 1.0]}}, False),
    ({"stages": []}, False),
    ({"stages": ["geometry", "magic"]}, False),
    ({"carleman": {"lams": [8, 16]}}, False),
    ({"discretization": {"scheme": "rk4"}}, False),
    ({"pipeline": {"alpha": 0.0}}, False),
    ({"parallel": 0}, False),
])
def test_validate_cases(patch, ok):
    m = RunManifest.from_dict(patch)
    assert (validate(m) == []) is ok
    if not ok:
        with pytest.raises(ManifestError):
            check(m)


# ---------------------------------------------------------------- reports


def test_csv_header_documents_columns(tmp_path):
    p = write_csv(tmp_path / "x.csv", [dict(lam=8.0, defect=1e-3), dict(lam=16.0, extra=1)], "abc", title="t")
    lines = p.read_text().splitlines()
    assert lines[0] == "# t" and lines[1] == "# manifest_sha256: abc"
    assert "# lam: %s" % COLUMNS["lam"] in lines
    assert lines[5] == "lam,defect,extra"
    assert lines[6] == "8.0,0.001,"


def test_json_handles_numpy(tmp_path):
    p = write_json(tmp_path / "x.json", {"a": np.float64(1.5), "b": np.bool_(True), "c": 1 + 2j,
                                         "d": np.arange(2), "e": float("nan")})
    d = json.loads(p.read_text())
    assert d == {"a": 1.5, "b": True, "c": [1.0, 2.0], "d": [0, 1], "e": "nan"}


# -------------------------------------------------------------------- CLI


def test_cli_run_is_deterministic(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / ("o%d" % k)
        assert main(["run", "--stages", "geometry,coefficients,transforms", "--out", str(out)]) == 0
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    assert "summary.json" in names and "geometry.csv" in names
    for n in names:
        if n == "timings.json":
            continue
        assert (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes(), n
    assert main(["report", "--out", str(outs[0])]) == 0


def test_cli_exit_codes(tmp_path, capsys, monkeypatch):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"carleman": {"beta": 0.5}}))
    assert main(["run", "--manifest", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "beta" in capsys.readouterr().err
    assert main(["validate", "--manifest", str(bad)]) == 2
    assert main(["validate"]) == 0
    assert main(["run", "--stages", "", "--out", str(tmp_path / "y")]) == 2
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    assert main(["run", "--manifest", str(broken)]) == 2
    assert main(["report", "--out", str(tmp_path / "nothing")]) == 2
    monkeypatch.setenv("MAGCD_OUT", str(tmp_path / "env"))
    assert main(["run", "--stages", "geometry"]) == 0
    assert (tmp_path / "env" / "geometry.csv").exists()


def test_cli_failing_stage_exits_one(tmp_path, capsys):
    """Too few rays for the inversion grid: the stage raises, is named, and the run exits 1."""
    m = RunManifest.from_dict({"transforms": {"n_centers": 3, "n_angles": 4, "mus": [1.0], "n_inv": [24, 24]}})
    p = tmp_path / "m.json"
    p.write_text(m.to_json())
    code = main(["run", "--manifest", str(p), "--stages", "transforms", "--out", str(tmp_path / "o")])
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert code == 1 and not summary["all_passed"]
    assert summary["failed_stage"] == "transforms"
    assert "stage 'transforms' failed" in capsys.readouterr().err
