import json
import os
import subprocess
import sys

import numpy as np

from jacobipga import _accel, geodesic, jacobi
from jacobipga import manifold as mf

SCRIPT = """
import json, numpy as np
from jacobipga import _accel, geodesic, jacobi
from jacobipga import manifold as mf
M, S = mf.m4(), mf.builtin("sphere_param")
p = np.array([0.0, 0.0, 0.0, 0.0, 1.0])
v = M.tangent_project(p, np.array([0.4, -0.3, 0.2, 0.1, 0.0]))
w = M.tangent_project(p, np.array([0.1, 0.2, -0.3, 0.3, 0.0]))
out = {"backend": _accel.backend(),
       "exp": geodesic.exp(M, p, v).tolist(),
       "d2": jacobi.dexp_second(M, p, v, w, v).tolist(),
       "chart": jacobi.dexp(S, np.array([1.0, 0.3]), np.array([0.5, 0.7]),
                            np.array([0.2, -0.1])).tolist()}
print(json.dumps(out))
"""


def run_backend(disable):
    env = dict(os.environ)
    if disable:
        env["JACOBIPGA_DISABLE_NUMBA"] = "1"
    else:
        env.pop("JACOBIPGA_DISABLE_NUMBA", None)
    r = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True,
                       text=True, check=True)
    return json.loads(r.stdout)


def test_flag_parsing(monkeypatch):
    assert _accel.backend() in ("numba", "numpy")


def test_numpy_fallback_matches():
    slow = run_backend(True)
    assert slow["backend"] == "numpy"
    fast = run_backend(False)
    for key in ("exp", "d2", "chart"):
        assert np.abs(np.array(slow[key]) - np.array(fast[key])).max() < 1e-12
