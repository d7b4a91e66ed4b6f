import json

import pytest

from halfgeo import cli
from halfgeo.certify import REFUTED


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_certify_meridian(capsys):
    code, out, _ = run(capsys, "certify", "--surface", "oblate:0.8", "--loop", "section:x0",
                       "--samples", "8")
    assert code == 0
    assert json.loads(out)["verdict"] == "HalfGeodesic"


def test_certify_csv(capsys):
    code, out, _ = run(capsys, "certify", "--surface", "sphere:1", "--loop", "section:y0",
                       "--samples", "4", "--format", "csv")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "t,d,deficit" and len(lines) == 5


def test_certify_file_loop(capsys, tmp_path):
    f = tmp_path / "m.csv"
    code, _, _ = run(capsys, "closed", "--surface", "oblate:0.8", "--loop", "section:x0",
                     "--format", "csv", "--out", str(f))
    assert code == 0
    side = json.loads(f.with_suffix(".json").read_text())
    assert side["prime_length"] == pytest.approx(5.672333577794897)
    code, out, _ = run(capsys, "certify", "--surface", "oblate:0.8", "--loop", f"file:{f}",
                       "--samples", "4")
    assert code == 0
    rep = json.loads(out)
    assert rep["verdict"] == "HalfGeodesic"
    assert rep["prime_length"] == pytest.approx(5.672333577794897, abs=1e-9)


def test_recipe_mismatch_exit_code(capsys, monkeypatch):
    real = cli.certify_half_geodesic

    def refuting(*a, **k):
        cert = real(*a, **k)
        cert.verdict = REFUTED
        return cert

    monkeypatch.setattr(cli, "certify_half_geodesic", refuting)
    code, _, _ = run(capsys, "certify", "--surface", "sphere:1", "--loop", "section:z0",
                     "--samples", "2")
    assert code == 1


def test_recipe_mismatch_with_loose_tol(capsys):
    # a tolerance above every deficit certifies X0, contradicting the recipe
    code, out, _ = run(capsys, "paper", "ex2_2", "--params", "1,1.05,1.1", "--samples", "4",
                       "--tol", "1.0", "--format", "csv")
    assert code == 1
    assert out.splitlines()[0] == "section,verdict,max_deficit,prime_length"


def test_recipe_triaxial_sections(capsys):
    code, out, _ = run(capsys, "paper", "ex2_2", "--params", "1,1.05,1.1", "--samples", "8")
    rep = json.loads(out)
    assert code == 0 and rep["matches"]
    assert rep["sections"]["Z0"]["verdict"] == "HalfGeodesic"


def test_numerical_error_exit_code(capsys):
    code, _, err = run(capsys, "geodesic", "--surface", "sphere:1", "--direction", "0,1,0",
                       "--length", "3", "--step", "0.5")
    assert code == 2
    assert "DriftExceeded" in err and "geodesic" in err


@pytest.mark.parametrize("argv", [
    ["certify", "--surface", "torus:1"],
    ["certify", "--loop", "section:w0"],
    ["certify", "--loop", "ring:3"],
    ["paper", "ex2_2", "--params", "1,2"],
    ["distance", "--p", "1,0", "--q", "0,1,0"],
])
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == cli.EXIT_USAGE
    assert "error" in err


def test_argparse_errors_use_usage_code():
    with pytest.raises(SystemExit) as exc:
        cli.main(["scan", "--format", "xml"])
    assert exc.value.code == cli.EXIT_USAGE


def test_geodesic_outputs(capsys):
    code, out, _ = run(capsys, "geodesic", "--surface", "sphere:1", "--direction", "0,1,0",
                       "--length", "3.5")
    rep = json.loads(out)
    assert code == 0 and rep["index"] == 1
    assert rep["end"][0] == pytest.approx(-0.936456687290796, abs=1e-6)
    code, out, _ = run(capsys, "geodesic", "--surface", "sphere:1", "--length", "0.01",
                       "--format", "csv", "--seed", "3")
    assert out.splitlines()[0] == "t,x,y,z,vx,vy,vz"


def test_distance_json_and_csv(capsys):
    code, out, _ = run(capsys, "distance", "--surface", "sphere:1", "--p", "1,0,0",
                       "--q=0,1,0")
    assert code == 0 and json.loads(out)["value"] == pytest.approx(1.5707963267948966)
    code, out, _ = run(capsys, "distance", "--surface", "sphere:1", "--p", "1,0,0",
                       "--q=0,1,0", "--format", "csv")
    assert out.splitlines()[0] == "key,value" and "method,ShootingRefined" in out


def test_catalog(capsys, tmp_path):
    cat = tmp_path / "cat.json"
    cat.write_text(json.dumps([{"name": "ball", "kind": "sphere", "params": [2.0]}]))
    code, out, _ = run(capsys, "closed", "--catalog", str(cat), "--surface", "ball",
                       "--loop", "section:z0")
    assert code == 0
    assert json.loads(out)["prime_length"] == pytest.approx(4 * 3.141592653589793)


def test_deterministic_output(tmp_path, capsys):
    outs = []
    for k in range(2):
        f = tmp_path / f"s{k}.json"
        assert cli.main(["certify", "--surface", "triaxial:1,1.05,1.1", "--loop", "section:x0",
                         "--samples", "6", "--seed", "5", "--out", str(f)]) == 0
        outs.append(f.read_bytes())
    assert outs[0] == outs[1]


def test_jobs_env_default(monkeypatch, tmp_path):
    monkeypatch.setenv("HALFGEO_JOBS", "2")
    f1, f2 = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.main(["certify", "--loop", "section:x0", "--surface", "oblate:0.8",
                     "--samples", "6", "--out", str(f1)]) == 0
    assert cli.main(["certify", "--loop", "section:x0", "--surface", "oblate:0.8",
                     "--samples", "6", "--jobs", "1", "--out", str(f2)]) == 0
    assert f1.read_bytes() == f2.read_bytes()
