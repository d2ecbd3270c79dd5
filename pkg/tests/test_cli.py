import json
import math

import numpy as np
import pytest

from jacobipga import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_exp(capsys):
    code, out, _ = run(capsys, "exp", "--manifold", "surface_sc:1", "--point", "0,0,1",
                       "--vector", f"{math.pi / 2},0,0")
    assert code == 0
    assert np.allclose(json.loads(out)["point"], [1, 0, 0], atol=1e-8)


def test_log_and_out_file(capsys, tmp_path):
    out_file = tmp_path / "log.json"
    code, _, _ = run(capsys, "log", "--manifold", "surface_sc:1", "--point", "0,0,1",
                     "--target", "1,0,0", "--out", str(out_file))
    assert code == 0
    res = json.loads(out_file.read_text())
    assert abs(res["distance"] - math.pi / 2) < 1e-7


def test_curvature_and_conjugate(capsys):
    code, out, _ = run(capsys, "curvature", "--manifold", "surface_sc:-3", "--point", "0,0,1",
                       "--vector", "0,1,0", "--w", "1,0,0", "--t", "0.1")
    assert code == 0 and round(json.loads(out)["curvature"], 3) == -3.005
    code, out, _ = run(capsys, "conjugate", "--manifold", "surface_sc:2", "--point", "0,0,1",
                       "--vector", "0,1,0", "--w", "1,0,0")
    assert abs(json.loads(out)["conjugate_time"] - math.pi / math.sqrt(2)) < 1e-3
    code, out, _ = run(capsys, "conjugate", "--manifold", "surface_sc:0", "--point", "0,0,1",
                       "--vector", "0,1,0", "--w", "1,0,0")
    assert json.loads(out)["conjugate_time"] is None


def test_jacobi(capsys):
    code, out, _ = run(capsys, "jacobi", "--manifold", "surface_sc:1", "--point", "0,0,1",
                       "--vector", "1,0,0", "--w", "0,1,0", "--t", "2", "--samples", "5")
    res = json.loads(out)
    assert code == 0
    assert np.allclose(res["norm"], np.sin(np.linspace(0, 2, 5)), atol=1e-7)


def test_project_and_pga(capsys, tmp_path, rng):
    data = tmp_path / "pts.csv"
    np.savetxt(data, rng.standard_normal((10, 3)) @ np.diag([2.0, 1.0, 0.3]), delimiter=",")
    code, out, _ = run(capsys, "project", "--manifold", "flat:3", "--point", "0,0,0",
                       "--basis", "1,0,0;1,1,0", "--data", str(data))
    res = json.loads(out)
    assert code == 0 and len(res["projections"]) == 10
    assert np.allclose(res["basis"], [[1, 0, 0], [0, 1, 0]])
    code, out, _ = run(capsys, "pga", "--manifold", "flat:3", "--data", str(data),
                       "--mode", "linearized", "--k", "2")
    model = json.loads(out)
    assert code == 0 and model["mode"] == "linearized" and len(model["directions"]) == 2


def test_reproduce(capsys, tmp_path):
    out_file = tmp_path / "curv.csv"
    code, out, _ = run(capsys, "reproduce", "table_curvature", "--c", "1,-1",
                       "--out", str(out_file))
    assert code == 0
    assert out_file.read_text() == out
    meta = json.loads(out_file.with_suffix(".json").read_text())
    assert meta["config"]["c_values"] == [1.0, -1.0]


def test_reproduce_with_config(capsys, tmp_path):
    cfg = tmp_path / "e.ini"
    cfg.write_text("[experiment]\nexperiment = fig_jacobi\nc_values = 0\n")
    code, out, _ = run(capsys, "reproduce", "fig_jacobi", "--config", str(cfg),
                       "--out", str(tmp_path / "j.csv"))
    assert code == 0 and out.startswith("c,t,norm,status")


def test_exit_codes(capsys, tmp_path):
    code, _, err = run(capsys, "exp", "--manifold", "torus", "--point", "0", "--vector", "0")
    assert code == 1 and "unknown manifold" in err
    code, _, _ = run(capsys, "exp", "--point", "0,0,1", "--vector", "1,0,0")
    assert code == 1
    code, _, _ = run(capsys, "reproduce", "table_methods", "--config",
                     str(tmp_path / "nope.ini"))
    assert code == 1
    code, _, err = run(capsys, "log", "--manifold", "surface_sc:1", "--point", "0,0,1",
                       "--target", "0,0,-1")
    assert code == 2 and "did not converge" in err


def test_bad_vector_argument(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["exp", "--manifold", "m4", "--point", "a,b", "--vector", "0"])
    assert exc.value.code == 2
