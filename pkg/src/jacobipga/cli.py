"""Command-line interface.

Vectors and points are comma separated (``--point 0,0,1``); several vectors
are separated by semicolons. Results are printed as JSON (or written to
``--out``). Exit status is 0 on success, 2 when an iteration or integration
does not converge and 1 for invalid input or configuration.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, _accel, experiments, geodesic, jacobi, stats_pga
from . import manifold as mf
from .errors import (ConfigurationError, GeometryError, IntegrationError,
                     InvalidInputError, NoConvergenceError)

log = logging.getLogger("jacobipga")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2


def vector(text):
    try:
        return np.array([float(s) for s in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated vector: {text!r}")


def vectors(text):
    return [vector(part) for part in text.split(";") if part.strip()]


def get_manifold(spec):
    if spec is None:
        raise ConfigurationError("--manifold is required")
    if Path(spec).is_file():
        return mf.load_manifold(spec)
    return mf.from_spec(spec)


def orthonormalize(M, q, V):
    """Metric Gram-Schmidt of the tangent projections of ``V`` at ``q``."""
    g = M.metric(q)
    out = []
    for v in V:
        u = M.tangent_project(q, np.asarray(v, float))
        for b in out:
            u = u - (b @ g @ u) * b
        n = np.sqrt(max(u @ g @ u, 0.0))
        if n < 1e-12:
            raise InvalidInputError("basis vectors are linearly dependent")
        out.append(u / n)
    return np.stack(out, axis=1)


def _tol(args, default):
    return default if args.tol is None else args.tol


# --- commands ----------------------------------------------------------------------

def cmd_exp(args):
    M = get_manifold(args.manifold)
    x = geodesic.exp(M, args.point, args.vector, t=args.t)
    return {"point": x}


def cmd_log(args):
    M = get_manifold(args.manifold)
    v = geodesic.log(M, args.point, args.target, tol=_tol(args, geodesic.LOG_TOL))
    return {"vector": v, "distance": M.norm(args.point, v)}


def cmd_jacobi(args):
    M = get_manifold(args.manifold)
    u = np.zeros_like(args.point) if args.u is None else args.u
    fl = jacobi.jacobi_trajectory(M, args.point, args.vector, u, args.w, args.t)
    ts = np.linspace(0.0, args.t, args.samples)
    X, J = fl.x(ts), fl.z(0, ts)
    return {"t": ts, "point": X[-1], "field": J[-1],
            "norm": [M.norm(x, j) for x, j in zip(X, J)]}


def cmd_curvature(args):
    M = get_manifold(args.manifold)
    est = jacobi.sectional_curvature(M, args.point, args.vector, args.w, t=args.t)
    return {"curvature": est.value, "t": est.t_used}


def cmd_conjugate(args):
    M = get_manifold(args.manifold)
    kw = {} if args.tol is None else {"width": args.tol}
    tc = jacobi.conjugate_scan(M, args.point, args.vector, args.w, args.t_max, **kw)
    return {"conjugate_time": tc}


def cmd_project(args):
    M = get_manifold(args.manifold)
    mu = M.check_point(args.point)
    S = stats_pga.GeodesicSubspace(mu, orthonormalize(M, mu, args.basis))
    X = experiments.read_points(args.data)
    rows = []
    for x in X:
        pr = stats_pga.project(M, x, S, tol=_tol(args, stats_pga.PROJ_GRAD_TOL), full=True)
        rows.append({"point": pr.point, "coords": pr.w, "residual": pr.value,
                     "gradient_norm": float(np.linalg.norm(pr.gradient))})
    return {"basis": S.basis.T, "projections": rows}


def cmd_pga(args):
    M = get_manifold(args.manifold)
    X = experiments.read_points(args.data)
    model = stats_pga.pga(M, X, args.mode, k=args.k)
    return json.loads(model.to_json())


def cmd_reproduce(args):
    over = {"experiment": args.experiment, "seed": args.seed, "k": args.k,
            "workers": args.workers, "manifold": args.manifold, "data_path": args.data}
    if args.c is not None:
        over["c_values"] = args.c
    if args.config:
        cfg = experiments.ExperimentConfig.from_file(args.config, **over)
    else:
        cfg = experiments.ExperimentConfig(**{k: v for k, v in over.items() if v is not None})
    cfg.output_path = args.out or cfg.output_path or f"results/{cfg.experiment}.csv"
    rep = experiments.run_experiment(cfg)
    sys.stdout.write(rep.to_csv())
    log.info("wrote %s", cfg.output_path)
    return None if rep.ok() else EXIT_NUMERIC


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


# --- parser ------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifold", help="builtin spec such as surface_sc:-1 or m4, "
                        "a registered name, or a manifold definition file")
    common.add_argument("--config", help="experiment config file ([experiment] section)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", help="output file (JSON, or CSV for reproduce)")
    common.add_argument("--tol", type=float, default=None,
                        help="convergence tolerance of the iterative step")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="jacobipga",
                                description="Geodesics, Jacobi fields and exact PGA.")
    p.add_argument("--version", action="version",
                   version=f"%(prog)s {__version__} ({_accel.backend()})")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("exp", parents=[common], help="exponential map")
    s.add_argument("--point", type=vector, required=True)
    s.add_argument("--vector", type=vector, required=True)
    s.add_argument("--t", type=float, default=1.0)
    s.set_defaults(func=cmd_exp)

    s = sub.add_parser("log", parents=[common], help="logarithm map by shooting")
    s.add_argument("--point", type=vector, required=True)
    s.add_argument("--target", type=vector, required=True)
    s.set_defaults(func=cmd_log)

    s = sub.add_parser("jacobi", parents=[common], help="Jacobi field along a geodesic")
    s.add_argument("--point", type=vector, required=True)
    s.add_argument("--vector", type=vector, required=True, help="geodesic velocity")
    s.add_argument("--u", type=vector, default=None, help="J_0 (default 0)")
    s.add_argument("--w", type=vector, required=True, help="J'_0")
    s.add_argument("--t", type=float, default=1.0)
    s.add_argument("--samples", type=int, default=101)
    s.set_defaults(func=cmd_jacobi)

    s = sub.add_parser("curvature", parents=[common], help="sectional curvature estimate")
    s.add_argument("--point", type=vector, required=True)
    s.add_argument("--vector", type=vector, required=True)
    s.add_argument("--w", type=vector, required=True)
    s.add_argument("--t", type=float, default=0.01)
    s.set_defaults(func=cmd_curvature)

    s = sub.add_parser("conjugate", parents=[common], help="first conjugate point")
    s.add_argument("--point", type=vector, required=True)
    s.add_argument("--vector", type=vector, required=True)
    s.add_argument("--w", type=vector, required=True)
    s.add_argument("--t-max", type=float, default=2 * np.pi)
    s.set_defaults(func=cmd_conjugate)

    s = sub.add_parser("project", parents=[common],
                       help="project CSV points onto a geodesic subspace")
    s.add_argument("--point", type=vector, required=True, help="subspace center")
    s.add_argument("--basis", type=vectors, required=True, help="spanning vectors, ';' separated")
    s.add_argument("--data", required=True)
    s.set_defaults(func=cmd_project)

    s = sub.add_parser("pga", parents=[common], help="PGA of CSV points")
    s.add_argument("--data", required=True)
    s.add_argument("--mode", choices=stats_pga.MODES, default="variance")
    s.add_argument("--k", type=int, default=None)
    s.set_defaults(func=cmd_pga)

    s = sub.add_parser("reproduce", parents=[common], help="run a synthetic experiment")
    s.add_argument("experiment", choices=experiments.EXPERIMENTS)
    s.add_argument("--c", type=lambda t: [float(x) for x in t.split(",")], default=None,
                   help="comma separated c values")
    s.add_argument("--k", type=int, default=None)
    s.add_argument("--data", default=None, help="dataset CSV for the custom experiment")
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    log.setLevel([logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)])
    try:
        out = args.func(args)
    except (NoConvergenceError, IntegrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GeometryError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if isinstance(out, dict):
        text = json.dumps(_jsonable(out), indent=2) + "\n"
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    return EXIT_OK if out is None else out


if __name__ == "__main__":
    sys.exit(main())
