"""Convergence-rate studies over an eps ladder, with CSV/JSON reporting."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
from scipy import stats

from . import formats
from .cell import CorrectorSet, solve_cell_problem
from .coefficients import BUILTINS, CoefficientField, from_samples
from .dual import DualCorrectorSet, solve_dual
from .errors import BudgetExceeded, ConfigError, DegenerateData, ParahomError
from .gridfn import DomainSpec, GridFunction, _trapezoid
from .smooth import check_delta
from .solver import (GridPolicy, IBVPProblem, _level_chunks, _spatial_weights, boundary_layer_sup,
                     norm_l2_h2, norm_l2_spacetime, solve_ibvp)
from .spectral import CellGrid
from .twoscale import build_w_eps, grad_w_norm, random_test_fields, verify_error_identity

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MAX_POINTS = 100_000_000
EXACT_TOL = 1e-14
CSV_COLUMNS = ("eps", "err_l2", "grad_w_l2", "u0_h2", "f_l2", "blayer_sup", "t_osc_sec", "t_hom_sec")
DEFAULT_EPSILONS = (1 / 8, 1 / 16, 1 / 32, 1 / 64)


# ---------------------------------------------------------------- data sources

def make_source(spec: dict, lengths: tuple[float, ...]):
    """Source term ``F(x_1, ..., x_d, t)`` from a config table.

    Built-ins: ``constant`` (``value``), ``cosine`` and ``sine`` (``value *
    prod_k cos|sin(mode pi x_k / L_k)``, keys ``value`` and ``mode``).
    """
    name = spec.get("name", "constant")
    value = float(spec.get("value", 1.0))
    mode = float(spec.get("mode", 1))
    if name == "constant":
        return lambda *args: value
    if name in ("cosine", "sine"):
        fn = np.cos if name == "cosine" else np.sin

        def source(*args):
            out = value
            for x, L in zip(args[:-1], lengths):
                out = out * fn(mode * np.pi * x / L)
            return out + 0.0 * args[-1]

        return source
    if name == "zero":
        return None
    raise ConfigError(f"[problem.source] unknown source name {name!r}")


def make_initial(spec: dict, lengths: tuple[float, ...]):
    name = spec.get("name", "zero")
    if name == "zero":
        return None
    if name == "sine":
        value = float(spec.get("value", 1.0))
        mode = float(spec.get("mode", 1))

        def initial(*x):
            out = value
            for xa, L in zip(x, lengths):
                out = out * np.sin(mode * np.pi * xa / L)
            return out

        return initial
    raise ConfigError(f"[problem.initial] unknown initial data {name!r}")


# ---------------------------------------------------------------- config

@dataclass(frozen=True)
class StudyConfig:
    """Validated study configuration (see :func:`load_config` for the TOML layout)."""

    domain: DomainSpec
    coefficient: dict
    bc: str = "dirichlet"
    source: dict = field(default_factory=lambda: {"name": "constant", "value": 1.0})
    initial: dict = field(default_factory=lambda: {"name": "zero"})
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    cell_n_space: int = 64
    cell_n_time: int = 32
    cell_tol: float = 1e-10
    policy: GridPolicy = GridPolicy()
    delta_factor: float = 2.0 * (1.0 + 1e-6)
    output_dir: str = "out"
    record_timings: bool = False
    seed: int = 0
    identity_eps: float = 1 / 8
    identity_fields: int = 5
    base_dir: str = "."

    def __post_init__(self):
        eps = self.epsilons
        if not eps:
            raise ConfigError("[study] epsilons must not be empty")
        if any(not 0 < e <= 0.25 for e in eps):
            raise ConfigError("[study] every epsilon must lie in (0, 1/4]")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("[study] epsilons must be strictly decreasing")
        if self.bc not in ("dirichlet", "neumann"):
            raise ConfigError(f"[problem] bc must be 'dirichlet' or 'neumann', got {self.bc!r}")
        if not 2.0 < self.delta_factor < 20.0:
            raise ConfigError("[smoothing] delta_factor must lie in (2, 20)")

    def with_epsilons(self, epsilons) -> StudyConfig:
        return replace(self, epsilons=tuple(float(e) for e in epsilons))

    def with_output(self, out_dir: str) -> StudyConfig:
        return replace(self, output_dir=str(out_dir))

    @property
    def d(self) -> int:
        return self.domain.d

    def build_coefficient(self) -> CoefficientField:
        spec = dict(self.coefficient)
        if "file" in spec:
            path = Path(spec["file"])
            if not path.is_absolute():
                path = Path(self.base_dir) / path
            return from_samples(formats.read_coefficient(path), mu=spec.get("mu"),
                                name=str(path.name))
        name = spec.get("name")
        if name not in BUILTINS:
            raise ConfigError(f"[coefficient] unknown name {name!r}; "
                              f"choose one of {sorted(BUILTINS)} or give 'file'")
        params = dict(spec.get("params", {}))
        params.setdefault("d", self.d)
        try:
            if name == "spacetime_sin" and "base" in params:
                params["base_value"] = params.pop("base")
            return BUILTINS[name](**params)
        except TypeError as exc:
            raise ConfigError(f"[coefficient.params] {exc}") from None

    def cell_grid(self, A: CoefficientField) -> CellGrid:
        n_time = 1 if A.time_independent else self.cell_n_time
        return CellGrid(self.d, self.cell_n_space, n_time)

    def problem(self, A: CoefficientField | None, eps: float | None,
                a_hat: np.ndarray | None = None) -> IBVPProblem:
        lengths = self.domain.lengths
        return IBVPProblem(self.domain, source=make_source(self.source, lengths),
                           initial=make_initial(self.initial, lengths), bc=self.bc,
                           coefficient=A, eps=eps, a_hat=a_hat)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["domain"] = {"lengths": list(self.domain.lengths), "T": self.domain.T}
        out["policy"] = asdict(self.policy)
        out["epsilons"] = list(self.epsilons)
        out.pop("base_dir")
        return out


def _get(table: dict, key: str, section: str, kind, default=None):
    if key not in table:
        if default is None:
            raise ConfigError(f"[{section}] missing required key {key!r}")
        return default
    value = table[key]
    try:
        if kind is tuple:
            return tuple(float(v) for v in value)
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"[{section}] key {key!r}: cannot interpret {value!r} as "
                          f"{getattr(kind, '__name__', kind)}") from None


def parse_config(data: dict, base_dir: str = ".") -> StudyConfig:
    """Build a :class:`StudyConfig` from a parsed TOML document."""
    known = {"domain", "coefficient", "problem", "study", "cell", "policy", "smoothing",
             "output", "identity"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    dom = data.get("domain", {})
    domain = DomainSpec(_get(dom, "lengths", "domain", tuple, (1.0,)),
                        _get(dom, "T", "domain", float, 0.25))
    coef = data.get("coefficient")
    if not coef:
        raise ConfigError("[coefficient] section is required")
    prob = data.get("problem", {})
    study = data.get("study", {})
    cell = data.get("cell", {})
    pol = data.get("policy", {})
    smo = data.get("smoothing", {})
    out = data.get("output", {})
    ident = data.get("identity", {})
    try:
        policy = GridPolicy(_get(pol, "space", "policy", int, 16), _get(pol, "time", "policy", int, 8),
                            _get(pol, "theta", "policy", float, 0.5))
    except ValueError as exc:
        raise ConfigError(f"[policy] {exc}") from None
    return StudyConfig(
        domain=domain,
        coefficient=dict(coef),
        bc=str(prob.get("bc", "dirichlet")),
        source=dict(prob.get("source", {"name": "constant", "value": 1.0})),
        initial=dict(prob.get("initial", {"name": "zero"})),
        epsilons=_get(study, "epsilons", "study", tuple, DEFAULT_EPSILONS),
        seed=_get(study, "seed", "study", int, 0),
        cell_n_space=_get(cell, "n_space", "cell", int, 64),
        cell_n_time=_get(cell, "n_time", "cell", int, 32),
        cell_tol=_get(cell, "tol", "cell", float, 1e-10),
        policy=policy,
        delta_factor=_get(smo, "delta_factor", "smoothing", float, 2.0 * (1.0 + 1e-6)),
        output_dir=str(out.get("dir", "out")),
        record_timings=bool(out.get("record_timings", False)),
        identity_eps=_get(ident, "eps", "identity", float, 1 / 8),
        identity_fields=_get(ident, "n_fields", "identity", int, 5),
        base_dir=base_dir,
    )


def load_config(path: str | os.PathLike) -> StudyConfig:
    """Read and validate a TOML study file.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    ConfigError
        On syntax errors (with line/column) or invalid keys.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data, base_dir=str(path.parent))


# ---------------------------------------------------------------- fitting

@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r2: float
    residual: float


def fit_slope(points) -> SlopeFit:
    """Least-squares fit of ``log value = slope * log eps + intercept``.

    Raises
    ------
    DegenerateData
        If some value is ``<= 1e-14`` (the column is exact, not fitted).
    ValueError
        With fewer than three points.
    """
    pts = [(float(e), float(v)) for e, v in points]
    if len(pts) < 3:
        raise ValueError("a slope fit needs at least 3 points")
    eps, vals = np.array(pts).T
    if np.any(vals <= EXACT_TOL) or not np.all(np.isfinite(vals)):
        raise DegenerateData("values at or below 1e-14; column is exact")
    x, y = np.log(eps), np.log(vals)
    fit = stats.linregress(x, y)
    resid = float(np.sqrt(np.sum((y - (fit.slope * x + fit.intercept)) ** 2)))
    return SlopeFit(float(fit.slope), float(fit.intercept), float(fit.rvalue**2), resid)


# ---------------------------------------------------------------- study

@dataclass
class StudyContext:
    """Data shared by every eps instance of a study."""

    config: StudyConfig
    coefficient: CoefficientField
    corr: CorrectorSet
    dual: DualCorrectorSet

    @classmethod
    def build(cls, config: StudyConfig) -> StudyContext:
        A = config.build_coefficient()
        corr = solve_cell_problem(A, config.cell_grid(A), tol=config.cell_tol)
        return cls(config, A, corr, solve_dual(corr))

    def steps(self, eps: float) -> tuple[float, float]:
        h, tau = self.config.policy.steps(eps)
        points = (self.config.domain.steps(tau) + 1) * math.prod(self.config.domain.node_counts(h))
        if points > MAX_POINTS:
            raise BudgetExceeded(f"eps={eps}: {points:.3e} space-time points exceed {MAX_POINTS:.0e}")
        return h, tau

    def solve_pair(self, eps: float) -> tuple[GridFunction, GridFunction, float, float]:
        cfg = self.config
        h, tau = self.steps(eps)
        t0 = time.perf_counter()
        u_eps = solve_ibvp(cfg.problem(self.coefficient, eps), h, tau, cfg.policy.theta, cfg.policy)
        t1 = time.perf_counter()
        u0 = solve_ibvp(cfg.problem(None, None, self.corr.a_hat), h, tau, cfg.policy.theta)
        t2 = time.perf_counter()
        return u_eps, u0, t1 - t0, t2 - t1


def _source_norm(cfg: StudyConfig, u0: GridFunction) -> float:
    """``||F||_{L2(Omega_T)}`` on the grid of ``u0``, sampled level block by level block."""
    fn = make_source(cfg.source, cfg.domain.lengths)
    if fn is None:
        return 0.0
    times = u0.times()
    coords = [u0.axis_coordinates(a) for a in range(u0.d)]
    w_space = _spatial_weights(u0)
    w_time = _trapezoid(u0.n_levels, u0.tau)
    total = 0.0
    for sl in _level_chunks(u0):
        mesh = np.meshgrid(times[sl], *coords, indexing="ij", sparse=True)
        vals = np.broadcast_to(np.asarray(fn(*mesh[1:], mesh[0]), dtype=float),
                               (len(times[sl]),) + u0.spatial_shape)
        total += float(np.sum(w_time[sl].reshape((-1,) + (1,) * u0.d) * w_space * vals**2))
    return float(np.sqrt(total))


def run_instance(ctx: StudyContext, eps: float) -> dict:
    """Solve, assemble and measure one eps; returns one report row."""
    cfg = ctx.config
    try:
        u_eps, u0, t_osc, t_hom = ctx.solve_pair(eps)
        delta = cfg.delta_factor * eps
        check_delta(eps, delta)
        bundle = build_w_eps(u_eps, u0, ctx.corr, ctx.dual, ctx.coefficient, cfg.domain, eps,
                             delta, assemble=False)
        row = {
            "eps": eps,
            "err_l2": norm_l2_spacetime(u_eps - u0),
            "grad_w_l2": grad_w_norm(bundle),
            "u0_h2": norm_l2_h2(u0),
            "f_l2": _source_norm(cfg, u0),
            "blayer_sup": boundary_layer_sup(u0, eps),
            "t_osc_sec": t_osc if cfg.record_timings else math.nan,
            "t_hom_sec": t_hom if cfg.record_timings else math.nan,
        }
    except ParahomError as exc:
        raise type(exc)(f"eps={eps}: {exc}") from exc
    log.info("eps=%g err_l2=%.4e grad_w_l2=%.4e", eps, row["err_l2"], row["grad_w_l2"])
    return row


def _worker(args) -> dict:
    config, eps = args
    return run_instance(StudyContext.build(config), eps)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("PARAHOM_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class RateReport:
    rows: list[dict]
    slopes: dict
    diagnostics: dict
    config: dict

    @property
    def status(self) -> str:
        fitted = [v for v in self.slopes.values() if v.get("status") == "fitted"]
        return "fitted" if fitted else "exact"

    def to_json(self) -> dict:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return None
            return v

        return {
            "schema_version": SCHEMA_VERSION,
            "status": self.status,
            "config": self.config,
            "rows": [{k: clean(v) for k, v in row.items()} for row in self.rows],
            "slopes": self.slopes,
            "diagnostics": self.diagnostics,
        }

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
        return buf.getvalue()

    def write(self, out_dir: str | os.PathLike) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = out / "rates.csv", out / "report.json"
        csv_path.write_text(self.csv_text())
        json_path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")
        return csv_path, json_path


def _fmt(v: float) -> str:
    return "nan" if isinstance(v, float) and math.isnan(v) else repr(float(v))


def _fit_column(rows: list[dict], column: str) -> dict:
    try:
        fit = fit_slope([(r["eps"], r[column]) for r in rows])
    except DegenerateData:
        return {"status": "exact"}
    except ValueError as exc:
        return {"status": "skipped", "reason": str(exc)}
    return {"status": "fitted", **asdict(fit)}


def run_rate_study(config: StudyConfig) -> RateReport:
    """Run every eps of the ladder, fit the L2 and H1 slopes, return the report.

    Instances run in worker processes when ``PARAHOM_THREADS > 1``;
    results are identical either way.
    """
    for eps in config.epsilons:  # budget guard before any work
        h, tau = config.policy.steps(eps)
        points = (config.domain.steps(tau) + 1) * math.prod(config.domain.node_counts(h))
        if points > MAX_POINTS:
            raise BudgetExceeded(f"eps={eps}: {points:.3e} space-time points exceed {MAX_POINTS:.0e}")
    ctx = StudyContext.build(config)
    workers = min(worker_count(), len(config.epsilons))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_worker, [(config, e) for e in config.epsilons]))
    else:
        rows = [run_instance(ctx, e) for e in config.epsilons]
    slopes = {col: _fit_column(rows, col) for col in ("err_l2", "grad_w_l2")}
    errs = [r["err_l2"] for r in rows]
    diagnostics = {
        "a_hat": np.asarray(ctx.corr.a_hat).tolist(),
        "cell_residual": ctx.corr.residual,
        "cell_iterations": ctx.corr.iterations,
        "cell_grid": [ctx.corr.grid.n_space, ctx.corr.grid.n_time],
        "err_l2_monotone": bool(all(b < a for a, b in zip(errs, errs[1:]))),
    }
    return RateReport(rows, slopes, diagnostics, config.to_dict())


def run_identity_check(config: StudyConfig, eps: float | None = None, refine: int = 1) -> dict:
    """Weak-identity residuals for seeded test fields at one eps."""
    eps = config.identity_eps if eps is None else eps
    ctx = StudyContext.build(config)
    h, tau = ctx.steps(eps)
    h, tau = h / refine, tau / refine**2
    prob = config.problem(ctx.coefficient, eps)
    u_eps = solve_ibvp(prob, h, tau, config.policy.theta)
    u0 = solve_ibvp(config.problem(None, None, ctx.corr.a_hat), h, tau, config.policy.theta)
    bundle = build_w_eps(u_eps, u0, ctx.corr, ctx.dual, ctx.coefficient, config.domain, eps,
                         config.delta_factor * eps, assemble=False)
    fields = random_test_fields(config.domain, config.identity_fields, config.seed, ctx.coefficient.m)
    results = verify_error_identity(bundle, prob, fields, config.policy.theta)
    return {
        "schema_version": SCHEMA_VERSION,
        "eps": eps,
        "delta": bundle.delta,
        "h": h,
        "tau": tau,
        "seed": config.seed,
        "fields": [{"centers": list(f.centers), "radii": list(f.radii), **r.as_dict()}
                   for f, r in zip(fields, results)],
        "max_rel_residual": max(r.rel_residual for r in results),
    }


def read_report(path: str | os.PathLike) -> dict[str, Any]:
    data = json.loads(Path(path).read_text())
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"{path}: unsupported report schema {data.get('schema_version')!r}")
    return data
