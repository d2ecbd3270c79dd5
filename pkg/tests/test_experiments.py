import csv
import io
import json
import math

import numpy as np
import pytest

from jacobipga import experiments as ex
from jacobipga import geodesic
from jacobipga import manifold as mf
from jacobipga import stats_pga as sp
from jacobipga.errors import ConfigurationError, InvalidInputError, NoConvergenceError

from conftest import P3, P5


def test_line_parameters():
    s = ex.line_parameters(10, 1.0)
    assert len(s) == 10 and 0.0 not in s
    assert np.allclose(s, [-1, -0.8, -0.6, -0.4, -0.2, 0.2, 0.4, 0.6, 0.8, 1.0])


def test_two_lines_on_sphere():
    M = mf.surface_sc(1.0)
    X = ex.gen_two_lines(M, 20)
    assert len(X) == 20
    assert max(abs(M.F(x)[0]) for x in X) < 1e-9
    with pytest.raises(InvalidInputError):
        ex.gen_two_lines(M, 7)


def test_two_lines_cylinder_round_trip():
    M = mf.surface_sc(0.0)
    angle, bis, ext = 0.3, 1.1, 1.2
    X = ex.gen_two_lines(M, 8, angle, ext, bis)
    s = ex.line_parameters(4, ext)
    k = 0
    for th in (bis + angle, bis - angle):
        d = np.array([math.cos(th), math.sin(th), 0.0])
        for t in s:
            assert np.abs(geodesic.log(M, P3, X[k]) - t * d).max() < 1e-7
            k += 1


def test_two_lines_small_extent_mean():
    M = mf.surface_sc(-2.0)
    X = ex.gen_two_lines(M, 20, extent=1e-4)
    assert np.abs(sp.karcher_mean(M, X) - P3).max() < 1e-7


def test_sample_m4_deterministic():
    X1, C1 = ex.sample_m4(seed=3, n=8)
    X2, C2 = ex.sample_m4(seed=3, n=8)
    assert all(np.array_equal(a, b) for a, b in zip(X1, X2))
    assert np.array_equal(C1, C2)
    M = mf.m4()
    assert max(np.linalg.norm(M.F(x)) for x in X1) < 1e-8
    X3, _ = ex.sample_m4(seed=4, n=8)
    assert not np.array_equal(X1[0], X3[0])


def test_sample_m4_covariance():
    n = 4000
    _, C = ex.sample_m4(seed=11, n=n)
    S = np.cov(C.T, bias=True)
    sd = np.sqrt(np.outer(ex.M4_VARIANCES, ex.M4_VARIANCES) * 2 / n)
    assert np.all(np.abs(S - np.diag(ex.M4_VARIANCES)) < 5 * sd)


def test_sample_m4_tangent_mapping():
    X, C = ex.sample_m4(seed=0, n=2)
    M = mf.m4()
    W = mf.orthonormal_tangent_basis(M, P5)
    assert np.abs(geodesic.exp(M, P5, W @ C[0]) - X[0]).max() < 1e-12


def test_config_validation(tmp_path):
    assert ex.ExperimentConfig().c_values == list(ex.C_METHODS)
    assert ex.ExperimentConfig("m4_comparison").n_points == 32
    with pytest.raises(ConfigurationError):
        ex.ExperimentConfig("table_nope")
    with pytest.raises(ConfigurationError):
        ex.ExperimentConfig("table_methods", n_points=9)
    with pytest.raises(ConfigurationError):
        ex.ExperimentConfig("custom")
    f = tmp_path / "c.ini"
    f.write_text("[experiment]\nexperiment = table_methods\nc_values = 1, -1\n"
                 "line_angle = 30\nseed = 5\n")
    cfg = ex.ExperimentConfig.from_file(f, seed=7)
    assert cfg.c_values == [1.0, -1.0] and cfg.seed == 7
    assert abs(cfg.line_angle - math.radians(30)) < 1e-15
    f.write_text("[experiment]\nbogus = 1\n")
    with pytest.raises(ConfigurationError):
        ex.ExperimentConfig.from_file(f)
    f.write_text("[experiment]\nseed = x\n")
    with pytest.raises(ConfigurationError):
        ex.ExperimentConfig.from_file(f)
    with pytest.raises(ConfigurationError):
        ex.ExperimentConfig.from_file(tmp_path / "missing.ini")


def test_report_csv_and_sidecar(tmp_path):
    rep = ex.Report(["c", "value", "status"], metadata={"a": 1})
    rep.add(c=1.0, value=1 / 3)
    rep.add(c=-2.0, status="failed: boom, again")
    assert not rep.ok()
    path, side = rep.write(tmp_path / "out" / "r.csv")
    rows = list(csv.reader(io.StringIO(path.read_text())))
    assert rows[0] == ["c", "value", "status"]
    assert rows[1] == ["1", "0.333333333333", "ok"]
    assert rows[2] == ["-2", "nan", "failed: boom, again"]
    assert len({len(r) for r in rows}) == 1
    assert json.loads(side.read_text()) == {"a": 1}


def test_table_curvature_rows():
    rep = ex.run_experiment(ex.ExperimentConfig("table_curvature", c_values=[-2.0]))
    est = {r["t"]: r["estimate"] for r in rep.rows}
    assert round(est[0.1], 3) == -2.002
    assert abs(est[0.01] + 2.0) < 1e-3
    assert rep.metadata["version"] and "tolerances" in rep.metadata


def test_fig_jacobi_sphere_closes():
    rep = ex.run_experiment(ex.ExperimentConfig("fig_jacobi", c_values=[1.0]))
    t = rep.column("t")
    assert t[0] == 0.0 and t[-1] == math.pi
    assert rep.column("norm")[-1] < 1e-3


def test_table_methods_failure_is_recorded(monkeypatch):
    real = ex.compare_methods

    def flaky(M, X, k=1, mu=None):
        if M.QA[0, 0, 0] == 1.0:
            raise NoConvergenceError("datum 3: log did not converge")
        return real(M, X, k, mu)

    monkeypatch.setattr(ex, "compare_methods", flaky)
    cfg = ex.ExperimentConfig("table_methods", c_values=[1.0, 0.0], n_points=4)
    rep = ex.run_experiment(cfg)
    assert rep.rows[0]["status"] == "failed: datum 3: log did not converge"
    assert math.isnan(rep.rows[0]["angle_deg"])
    assert rep.rows[1]["status"] == "ok"


def test_parallel_matches_serial():
    a = ex.run_experiment(ex.ExperimentConfig("table_curvature", c_values=[1.0, -1.0]))
    b = ex.run_experiment(ex.ExperimentConfig("table_curvature", c_values=[1.0, -1.0],
                                              workers=2))
    assert a.to_csv() == b.to_csv()


def test_custom_experiment(tmp_path, rng):
    X = rng.standard_normal((12, 2)) @ np.diag([2.0, 0.5])
    data = tmp_path / "d.csv"
    np.savetxt(data, X, delimiter=",", header="x,y")
    cfg = ex.ExperimentConfig("custom", manifold="flat:2", data_path=str(data),
                              output_path=str(tmp_path / "r.csv"))
    rep = ex.run_experiment(cfg)
    assert rep.ok()
    assert np.abs(rep.column("angle_deg")).max() < 1e-6
    assert np.abs(rep.column("difference")).max() < 1e-10
    assert (tmp_path / "r.json").exists()
