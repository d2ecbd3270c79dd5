"""Synthetic experiments: two-line datasets on the surfaces S_c, random
samples on M4, curvature tables and Jacobi-field curves.

Every experiment returns a :class:`Report` (rows of named scalars plus a
metadata dict) that is written as CSV with a JSON sidecar. Reports contain no
timestamps or host information so that reruns are byte-identical.
"""
import configparser
import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, _accel, geodesic, jacobi, stats_pga
from . import manifold as mf
from .errors import ConfigurationError, GeometryError, InvalidInputError

log = logging.getLogger(__name__)

EXPERIMENTS = ("table_methods", "table_curvature", "fig_jacobi", "m4_comparison", "custom")

C_METHODS = (1.0, 0.5, 0.0, -0.5, -1.0, -1.5, -2.0, -3.0, -4.0, -5.0)
C_CURVATURE = (1.0, 0.0, -1.0, -2.0, -3.0)
C_JACOBI = (2.0, 1.0, 0.0, -1.0)
CURVATURE_TIMES = (0.01, 0.1)
JACOBI_SAMPLES = 201

BASE_POINT = np.array([0.0, 0.0, 1.0])
M4_BASE = np.array([0.0, 0.0, 0.0, 0.0, 1.0])
M4_VARIANCES = np.array([2.0, 1.0, 2.0 / 3.0, 1.0 / 3.0])
M4_POINTS = 32
SAMPLE_RETRIES = 10

# two-line dataset: lines at bisector +- half-opening from the e1 axis
LINE_ANGLE = math.radians(40.0)
LINE_BISECTOR = math.radians(60.0)
LINE_EXTENT = 1.5


@dataclass
class ExperimentConfig:
    """Settings of one experiment run.

    ``line_angle`` is the half-opening between the two lines and
    ``line_bisector`` the direction of their bisector, both in radians from
    the first tangent axis at ``(0, 0, 1)``. ``c_values`` defaults to the
    list belonging to the experiment. ``manifold``, ``data_path``, ``mode``
    and ``k`` are used by the ``custom`` experiment only.
    """

    experiment: str = "table_methods"
    c_values: list = None
    seed: int = 0
    n_points: int = None
    line_angle: float = LINE_ANGLE
    line_bisector: float = LINE_BISECTOR
    line_extent: float = LINE_EXTENT
    output_path: str = None
    manifold: str = None
    data_path: str = None
    k: int = None
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"unknown experiment {self.experiment!r}; "
                                     f"choose from {', '.join(EXPERIMENTS)}")
        if self.c_values is None:
            self.c_values = list({"table_methods": C_METHODS, "table_curvature": C_CURVATURE,
                                  "fig_jacobi": C_JACOBI}.get(self.experiment, ()))
        self.c_values = [float(c) for c in self.c_values]
        if self.n_points is None:
            self.n_points = M4_POINTS if self.experiment == "m4_comparison" else 20
        self.n_points = int(self.n_points)
        self.seed = int(self.seed)
        if self.experiment == "table_methods" and (self.n_points < 2 or self.n_points % 2):
            raise ConfigurationError("n_points must be even and positive for two-line datasets")
        if self.line_extent <= 0:
            raise ConfigurationError("line_extent must be positive")
        if self.experiment == "custom" and (not self.manifold or not self.data_path):
            raise ConfigurationError("the custom experiment needs manifold and data_path")

    @classmethod
    def from_file(cls, path, **overrides):
        """Read an ``[experiment]`` section of key = value pairs.

        Angles in the file are given in degrees; ``c_values`` is a comma
        separated list.
        """
        cp = configparser.ConfigParser()
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigurationError(f"malformed config {path}: {exc}") from exc
        if not cp.has_section("experiment"):
            raise ConfigurationError(f"{path}: missing [experiment] section")
        sec = cp["experiment"]
        known = {f for f in cls.__dataclass_fields__}
        kw = {}
        for key, raw in sec.items():
            if key not in known:
                raise ConfigurationError(f"{path}: unknown key {key!r}")
            try:
                if key == "c_values":
                    kw[key] = [float(s) for s in raw.split(",") if s.strip()]
                elif key in ("line_angle", "line_bisector"):
                    kw[key] = math.radians(float(raw))
                elif key in ("seed", "n_points", "k", "workers"):
                    kw[key] = int(raw)
                elif key == "line_extent":
                    kw[key] = float(raw)
                else:
                    kw[key] = raw
            except ValueError as exc:
                raise ConfigurationError(f"{path}: bad value for {key}: {raw!r}") from exc
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)


@dataclass
class Report:
    """Rows of named scalar columns plus metadata.

    Failed rows keep their key columns, hold ``nan`` elsewhere and carry the
    error message in the ``status`` column.
    """

    columns: list
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, **values):
        row = {c: values.get(c, math.nan) for c in self.columns}
        row.setdefault("status", "ok")
        if row["status"] is math.nan:
            row["status"] = "ok"
        self.rows.append(row)

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    def ok(self):
        return all(r["status"] == "ok" for r in self.rows)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in self.columns])
        return buf.getvalue()

    def write(self, path):
        """Write ``path`` (CSV) and the metadata next to it as ``.json``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        side = path.with_suffix(".json")
        side.write_text(json.dumps(self.metadata, indent=2, sort_keys=True) + "\n")
        return path, side


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "nan" if math.isnan(v) else f"{v:.12g}"


# --- datasets ----------------------------------------------------------------------

def line_parameters(n, extent):
    """``n`` evenly spaced values on ``[-extent, extent]`` with 0 left out.

    The values are ``linspace(-extent, extent, n + 1)`` without the middle
    element. For even ``n`` that element is 0 and the set is symmetric; for
    odd ``n`` it is not (one side keeps an extra point).
    """
    s = np.linspace(-extent, extent, n + 1)
    return np.delete(s, n // 2)


def gen_two_lines(M, n=20, angle=LINE_ANGLE, extent=LINE_EXTENT, bisector=LINE_BISECTOR,
                  p=BASE_POINT):
    """``n`` points on two geodesic lines through ``p``.

    The lines have directions ``bisector +- angle`` in the tangent plane
    spanned by the first two coordinate axes. Each carries ``n / 2`` points
    at evenly spaced parameters on ``[-extent, extent]`` (0 excluded),
    mapped to ``M`` by ``Exp_p``.
    """
    n = int(n)
    if n < 2 or n % 2:
        raise InvalidInputError("n must be even and positive")
    p = M.check_point(p)
    E = mf.orthonormal_tangent_basis(M, p)
    s = line_parameters(n // 2, extent)
    pts = []
    for th in (bisector + angle, bisector - angle):
        d = math.cos(th) * E[:, 0] + math.sin(th) * E[:, 1]
        pts += [geodesic.exp(M, p, t * d) for t in s]
    return pts


def sample_m4(seed=0, n=M4_POINTS, M=None):
    """``n`` random points on M4.

    Tangent coordinates are drawn with ``numpy.random.default_rng(seed)`` as
    ``sqrt(diag(2, 1, 2/3, 1/3)) * standard_normal(4)``, mapped into
    ``T_p M4`` at ``p = (0, 0, 0, 0, 1)`` with the orthonormal tangent basis
    there and sent to the manifold by ``Exp_p``. A draw whose exponential
    fails is replaced (up to 10 times per point).

    Returns
    -------
    points : list of numpy.ndarray
    coords : numpy.ndarray
        ``(n, 4)`` tangent coordinates actually used.
    """
    M = mf.m4() if M is None else M
    rng = np.random.default_rng(seed)
    W = mf.orthonormal_tangent_basis(M, M4_BASE)
    scale = np.sqrt(M4_VARIANCES)
    pts, coords = [], []
    for i in range(int(n)):
        for attempt in range(SAMPLE_RETRIES + 1):
            s = scale * rng.standard_normal(4)
            try:
                pts.append(geodesic.exp(M, M4_BASE, W @ s))
                coords.append(s)
                break
            except GeometryError as exc:
                log.warning("sample %d rejected (%s), drawing again", i, exc)
        else:
            raise GeometryError(f"sample {i}: exponential failed {SAMPLE_RETRIES} times")
    return pts, np.array(coords)


def read_points(path):
    """Points from a CSV file, one per row; ``#`` starts a comment."""
    try:
        X = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read dataset {path}: {exc}") from exc
    return [row for row in X]


# --- experiments -------------------------------------------------------------------

def _parallel(fn, items, workers):
    if workers and workers > 1 and len(items) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def _curvature_rows(c):
    M = mf.surface_sc(c)
    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    rows = []
    for t in CURVATURE_TIMES:
        try:
            k = jacobi.sectional_curvature(M, BASE_POINT, e2, e1, t=t).value
            rows.append(dict(c=c, t=t, estimate=k, error=k - c))
        except GeometryError as exc:
            rows.append(dict(c=c, t=t, status=f"failed: {exc}"))
    return rows


def table_curvature(cfg):
    """Sectional curvature at ``(0, 0, 1)`` on S_c from Jacobi fields.

    The geodesic runs along e2 (a unit circle on which the Gaussian curvature
    is ``c`` throughout) and ``J'_0 = e1``.
    """
    rep = Report(["c", "t", "estimate", "error", "status"])
    for rows in _parallel(_curvature_rows, cfg.c_values, cfg.workers):
        for r in rows:
            rep.add(**r)
    return rep


def _jacobi_rows(c):
    M = mf.surface_sc(c)
    ts = np.linspace(0.0, math.pi, JACOBI_SAMPLES)
    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    try:
        fl = jacobi.jacobi_trajectory(M, BASE_POINT, e2, np.zeros(3), e1, math.pi)
        X, J = fl.x(ts), fl.z(0, ts)
        norms = [M.norm(x, j) for x, j in zip(X, J)]
        return [dict(c=c, t=t, norm=nj) for t, nj in zip(ts, norms)]
    except GeometryError as exc:
        return [dict(c=c, t=t, status=f"failed: {exc}") for t in ts]


def fig_jacobi(cfg):
    """``|J_t|`` on ``[0, pi]`` for ``J_0 = 0``, ``J'_0 = e1`` along the e2 geodesic."""
    rep = Report(["c", "t", "norm", "status"])
    for rows in _parallel(_jacobi_rows, cfg.c_values, cfg.workers):
        for r in rows:
            rep.add(**r)
    return rep


def compare_methods(M, X, k=1, mu=None):
    """Exact (variance) and linearized PGA on the same data and mean.

    Returns one dict per component with the angle between the directions
    and the accumulated projected variances of both.
    """
    mu = stats_pga.karcher_mean(M, X) if mu is None else mu
    lin = stats_pga.pga(M, X, "linearized", k=k, mu=mu)
    ex = stats_pga.pga(M, X, "variance", k=k, mu=mu)
    rows = []
    for i in range(k):
        a = stats_pga.principal_angle(M, mu, ex.directions[:, i], lin.directions[:, i])
        lv, ev = lin.variances[i], ex.variances[i]
        rows.append(dict(component=i + 1, angle_deg=a, linearized_var=lv, exact_var=ev,
                         difference=ev - lv,
                         difference_pct=100.0 * (ev - lv) / lv if lv > 0 else math.nan))
    return rows, mu, ex, lin


def _methods_row(args):
    c, cfg = args
    try:
        M = mf.surface_sc(c)
        X = gen_two_lines(M, cfg.n_points, cfg.line_angle, cfg.line_extent, cfg.line_bisector)
        rows, *_ = compare_methods(M, X, k=1)
        r = rows[0]
        r.pop("component")
        return dict(c=c, **r)
    except GeometryError as exc:
        return dict(c=c, status=f"failed: {exc}")


def table_methods(cfg):
    """Angle between exact and linearized first directions and their variances."""
    rep = Report(["c", "angle_deg", "linearized_var", "exact_var", "difference",
                  "difference_pct", "status"])
    for r in _parallel(_methods_row, [(c, cfg) for c in cfg.c_values], cfg.workers):
        rep.add(**r)
    return rep


def _component_report(M, X, k):
    rep = Report(["component", "angle_deg", "linearized_var", "exact_var", "difference",
                  "difference_pct", "status"])
    try:
        rows, mu, ex, lin = compare_methods(M, X, k=k)
    except GeometryError as exc:
        for i in range(k):
            rep.add(component=i + 1, status=f"failed: {exc}")
        return rep, {}
    for r in rows:
        rep.add(**r)
    extra = {"mean": mu.tolist(),
             "exact_directions": ex.directions.T.tolist(),
             "linearized_directions": lin.directions.T.tolist()}
    return rep, extra


def m4_comparison(cfg):
    """Exact versus linearized PGA on ``n_points`` seeded samples of M4."""
    M = mf.m4()
    X, coords = sample_m4(cfg.seed, cfg.n_points, M)
    rep, extra = _component_report(M, X, M.dim if cfg.k is None else cfg.k)
    rep.metadata["sample_covariance"] = np.cov(coords.T, bias=True).tolist()
    rep.metadata.update(extra)
    return rep


def custom(cfg):
    """Exact versus linearized PGA on a user dataset and manifold."""
    M = mf.load_manifold(cfg.manifold) if Path(cfg.manifold).is_file() else mf.from_spec(
        cfg.manifold)
    X = read_points(cfg.data_path)
    rep, extra = _component_report(M, X, M.dim if cfg.k is None else cfg.k)
    rep.metadata.update(extra)
    return rep


_RUNNERS = {"table_methods": table_methods, "table_curvature": table_curvature,
            "fig_jacobi": fig_jacobi, "m4_comparison": m4_comparison, "custom": custom}


def metadata(cfg):
    conf = asdict(cfg)
    for key in ("line_angle", "line_bisector"):
        conf[key + "_deg"] = round(math.degrees(conf.pop(key)), 10)
    conf.pop("output_path", None)
    conf.pop("workers", None)
    return {
        "config": conf,
        "version": __version__,
        "backend": _accel.backend(),
        "tolerances": {
            "log": geodesic.LOG_TOL,
            "projection_gradient": stats_pga.PROJ_GRAD_TOL,
            "pga_step": stats_pga.PGA_TOL,
            "pga_gradient": stats_pga.PGA_GRAD_TOL,
            "karcher": stats_pga.KARCHER_TOL,
        },
    }


def run_experiment(cfg):
    """Run ``cfg.experiment`` and return its :class:`Report`.

    Failures of single rows are recorded in the report; the run continues.
    The report is written to ``cfg.output_path`` when that is set.
    """
    rep = _RUNNERS[cfg.experiment](cfg)
    meta = metadata(cfg)
    meta.update(rep.metadata)
    rep.metadata = meta
    if cfg.output_path:
        rep.write(cfg.output_path)
    return rep
