"""Numba vs pure-numpy timings of the integration kernels.

Each backend runs in its own interpreter because the backend is fixed at
import time by JACOBIPGA_DISABLE_NUMBA. The numba run is warmed up first so
compile time (cached on disk after the first run) is reported separately.

    python3 benchmarks/bench_numba.py [--repeat 3] [--json out.json]
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def workloads():
    from jacobipga import geodesic, jacobi, stats_pga
    from jacobipga import manifold as mf

    S = mf.surface_sc(-1.0)
    M4 = mf.m4()
    sph = mf.builtin("sphere_param")
    p = np.array([0.0, 0.0, 1.0])
    p4 = np.array([0.0, 0.0, 0.0, 0.0, 1.0])
    v, w = np.array([0.6, 0.3, 0.0]), np.array([-0.2, 0.5, 0.0])
    v4 = M4.tangent_project(p4, np.array([0.4, -0.3, 0.2, 0.1, 0.0]))
    w4 = M4.tangent_project(p4, np.array([0.1, 0.2, -0.3, 0.3, 0.0]))
    x = geodesic.exp(S, p, np.array([0.3, 0.9, 0.0]))
    Sub = stats_pga.GeodesicSubspace(p, np.array([[1.0], [0.0], [0.0]]))

    return {
        "exp_sc": lambda: geodesic.exp(S, p, v),
        "exp_sphere_chart": lambda: geodesic.exp(sph, np.array([0.3, 0.2]), np.array([0.5, 0.7])),
        "log_sc": lambda: geodesic.log(S, p, x),
        "dexp_m4": lambda: jacobi.dexp(M4, p4, v4, w4),
        "dexp_second_m4": lambda: jacobi.dexp_second(M4, p4, v4, w4, v4),
        "project_sc": lambda: stats_pga.project(S, x, Sub)[1],
    }


def run_worker(repeat):
    from jacobipga import _accel

    jobs = workloads()
    out = {"backend": _accel.backend(), "results": {}}
    for name, f in jobs.items():
        t0 = time.perf_counter()
        val = f()
        first = time.perf_counter() - t0
        times = []
        for _ in range(repeat):
            t0 = time.perf_counter()
            f()
            times.append(time.perf_counter() - t0)
        out["results"][name] = {"first": first, "best": min(times),
                                "value": np.ravel(np.asarray(val, float)).tolist()}
    json.dump(out, sys.stdout)


def spawn(disable, repeat):
    env = dict(os.environ)
    if disable:
        env["JACOBIPGA_DISABLE_NUMBA"] = "1"
    else:
        env.pop("JACOBIPGA_DISABLE_NUMBA", None)
    r = subprocess.run([sys.executable, __file__, "--worker", "--repeat", str(repeat)],
                       env=env, capture_output=True, text=True, check=True)
    return json.loads(r.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", default=None)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        run_worker(args.repeat)
        return

    fast = spawn(False, args.repeat)
    slow = spawn(True, args.repeat)
    print(f"{'workload':<18} {'numba [s]':>10} {'numpy [s]':>10} {'speedup':>8} "
          f"{'first call':>10} {'max diff':>9}")
    for name, a in fast["results"].items():
        b = slow["results"][name]
        diff = np.max(np.abs(np.array(a["value"]) - np.array(b["value"])))
        print(f"{name:<18} {a['best']:10.4f} {b['best']:10.4f} {b['best'] / a['best']:8.1f} "
              f"{a['first']:10.2f} {diff:9.1e}")
    if fast["backend"] != "numba":
        print("note: numba is not importable, both columns use numpy")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"numba": fast, "numpy": slow}, fh, indent=2)


if __name__ == "__main__":
    main()
