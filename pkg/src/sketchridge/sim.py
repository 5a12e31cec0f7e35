"""Simulation harness for comparing compressed ridge against uncompressed fits.

Penalties in a :class:`SimConfig` are per observation: a grid value ``theta``
is fitted as ``lam = n * theta``.  Each replication draws every random
ingredient from its own stream, keyed by (seed, replication, stream), so
methods are compared on identical data and any replication can be rerun on
its own.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tuning
from .errors import InvalidInput
from .estimators import Dataset, build_compressed, fit_ols, fit_path, fit_ridge
from .linalg import thin_svd
from .sketch import SketchSpec, generate_sketch
from .theory import bayes_theta

SCENARIOS = ("gaussian", "all_ones", "alternating")
COMPRESSED = ("fc", "pc", "linear", "convex")
# canonical order; also the tie-break order for wins
WIN_ORDER = ("ols", "ridge", "fc", "pc", "linear", "convex")

# stream tags for per-replication seeding
_DESIGN, _BETA, _NOISE, _SKETCH, _TEST = range(5)


def _default_grid() -> list[float]:
    return [float(x) for x in np.logspace(-4, 3, 36)]


@dataclass
class SimConfig:
    n: int = 1000
    p: int = 20
    rho: float = 0.2
    beta_scenario: str = "gaussian"
    tau2: float = math.pi / 2
    sigma: float = 50.0
    q_list: list[int] = field(default_factory=lambda: [100, 200, 300])
    s: float = 3.0
    lambda_grid: list[float] = field(default_factory=_default_grid)
    replications: int = 50
    seed: int = 0
    test_n: int = 0
    redraw_design: bool = True

    def __post_init__(self):
        if self.n <= self.p or self.p < 1:
            raise InvalidInput(f"need n > p >= 1, got n={self.n}, p={self.p}")
        if not 0 <= self.rho < 1:
            raise InvalidInput(f"rho must be in [0, 1), got {self.rho}")
        if self.beta_scenario not in SCENARIOS:
            raise InvalidInput(f"unknown beta scenario {self.beta_scenario!r}")
        if not self.sigma > 0 or not self.tau2 > 0:
            raise InvalidInput("sigma and tau2 must be > 0")
        if self.replications < 1:
            raise InvalidInput("replications must be >= 1")
        if not self.q_list or any(not (1 <= q <= self.n) for q in self.q_list):
            raise InvalidInput("q_list must be non-empty with 1 <= q <= n")
        grid = np.asarray(self.lambda_grid, dtype=float)
        if grid.size == 0 or np.any(~np.isfinite(grid)) or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
            raise InvalidInput("lambda_grid must be positive and strictly increasing")
        if self.test_n < 0:
            raise InvalidInput("test_n must be >= 0")
        SketchSpec(n=self.n, q=max(self.q_list), s=self.s)  # validates s

    @classmethod
    def from_dict(cls, d: dict) -> SimConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InvalidInput(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidInput(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> SimConfig:
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidInput(f"{path}: line {exc.lineno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise InvalidInput("config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)


def _rng(seed: int, rep: int, stream: int, sub: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(rep, stream, sub))
    return np.random.default_rng(ss)


def _sketch_seed(seed: int, rep: int, q_index: int) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=(rep, _SKETCH, q_index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def gen_design(n: int, p: int, rho: float, seed) -> np.ndarray:
    """Rows N(0, (1 - rho) I + rho 11')."""
    if not 0 <= rho < 1:
        raise InvalidInput(f"rho must be in [0, 1), got {rho}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = rng.standard_normal((n, p))
    w = rng.standard_normal((n, 1))
    return math.sqrt(1 - rho) * z + math.sqrt(rho) * w


def gen_beta(scenario: str, p: int, seed=None, tau2: float = math.pi / 2) -> np.ndarray:
    if scenario == "all_ones":
        return np.ones(p)
    if scenario == "alternating":
        return np.where(np.arange(p) % 2 == 0, 1.0, -1.0)
    if scenario == "gaussian":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        return math.sqrt(tau2) * rng.standard_normal(p)
    raise InvalidInput(f"unknown beta scenario {scenario!r}")


def gen_response(X, beta_star, sigma: float, seed) -> np.ndarray:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    X = np.asarray(X, dtype=float)
    eps = rng.standard_normal(X.shape[0])
    return X @ np.asarray(beta_star, dtype=float) + sigma * eps


@dataclass
class MethodResult:
    """One method in one replication; grid arrays follow ``SimConfig.lambda_grid``."""

    est_err: np.ndarray  # length 1 for OLS
    gcv_index: int
    test_err: np.ndarray | None = None

    @property
    def est_err_gcv(self) -> float:
        return float(self.est_err[self.gcv_index])

    @property
    def gcv_ratio(self) -> float | None:
        if self.test_err is None:
            return None
        lo = float(np.min(self.test_err))
        return float(self.test_err[self.gcv_index] / lo) if lo > 0 else 1.0


@dataclass
class RepResult:
    rep: int
    methods: dict[str, MethodResult]
    seconds: float


def method_label(method: str, q: int | None = None) -> str:
    return method if q is None else f"{method}_q{q}"


def _sq_err(betas: np.ndarray, beta_star: np.ndarray) -> np.ndarray:
    d = np.atleast_2d(betas) - beta_star
    return np.einsum("ij,ij->i", d, d)


def _test_err(betas, x_test, y_test) -> np.ndarray:
    resid = np.atleast_2d(betas) @ x_test.T - y_test
    return np.mean(resid * resid, axis=1)


def _gcv_index(records) -> int:
    lam, _ = tuning.select_lambda(records, "gcv")
    return [r.lam for r in records].index(lam)


def run_replication(cfg: SimConfig, rep: int) -> RepResult:
    """Generate one data set and fit every method on the shared draws."""
    t0 = time.perf_counter()
    design_rep = rep if cfg.redraw_design else 0
    X = gen_design(cfg.n, cfg.p, cfg.rho, _rng(cfg.seed, design_rep, _DESIGN))
    beta = gen_beta(cfg.beta_scenario, cfg.p, _rng(cfg.seed, rep, _BETA), cfg.tau2)
    Y = gen_response(X, beta, cfg.sigma, _rng(cfg.seed, rep, _NOISE))
    data = Dataset(X, Y)
    x_test = y_test = None
    if cfg.test_n > 0:
        trng = _rng(cfg.seed, rep, _TEST)
        x_test = gen_design(cfg.test_n, cfg.p, cfg.rho, trng)
        y_test = gen_response(x_test, beta, cfg.sigma, trng)

    def result(betas, records=None):
        err = _sq_err(betas, beta)
        idx = _gcv_index(records) if records is not None else 0
        test = _test_err(betas, x_test, y_test) if x_test is not None else None
        return MethodResult(est_err=err, gcv_index=idx, test_err=test)

    lams = cfg.n * np.asarray(cfg.lambda_grid, dtype=float)
    x_svd = thin_svd(X)
    out: dict[str, MethodResult] = {"ols": result(fit_ols(data, x_svd))}

    ridge_betas = np.array([fit_ridge(data, lam, x_svd) for lam in lams])
    ridge_records = [
        tuning.make_record(lam, float(np.sum((Y - X @ b) ** 2)), tuning.df_ridge(x_svd, lam), cfg.n)
        for lam, b in zip(lams, ridge_betas)
    ]
    out["ridge"] = result(ridge_betas, ridge_records)
    if cfg.beta_scenario == "gaussian":
        lam_bayes = cfg.n * bayes_theta(cfg.sigma**2, cfg.tau2, cfg.n)
        out["ridge_bayes"] = result(fit_ridge(data, lam_bayes, x_svd))

    for k, q in enumerate(cfg.q_list):
        spec = SketchSpec(n=cfg.n, q=q, s=cfg.s, seed=_sketch_seed(cfg.seed, rep, k))
        cd = build_compressed(data, generate_sketch(spec))
        path = fit_path(cd, data, lams)
        for m in COMPRESSED:
            out[method_label(m, q)] = result(path.coefficients(m), path.records(m))
    return RepResult(rep=rep, methods=out, seconds=time.perf_counter() - t0)


def _quantiles(x) -> dict:
    q1, med, q3 = np.quantile(np.asarray(x, dtype=float), [0.25, 0.5, 0.75], axis=0)
    return {"q1": q1.tolist(), "median": med.tolist(), "q3": q3.tolist()}


@dataclass
class SimReport:
    config: dict
    methods: list[str]
    log_mse: dict  # method -> {q1, median, q3} per grid value
    est_err_gcv: dict  # method -> {q1, median, q3}
    gcv_ratio: dict  # method -> {q1, median, q3, min}
    wins: dict  # str(q) -> {method: count}
    runtime: dict
    reps: list[RepResult] = field(default_factory=list, repr=False)

    def median_est_err(self, method: str) -> float:
        return float(np.median([r.methods[method].est_err_gcv for r in self.reps]))

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "config": self.config,
            "methods": self.methods,
            "log_mse": self.log_mse,
            "est_err_gcv": self.est_err_gcv,
            "gcv_ratio": self.gcv_ratio,
            "wins": self.wins,
        }
        if include_timing:
            out["runtime"] = self.runtime
        return out

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True)

    def csv_rows(self):
        grid = self.config["lambda_grid"]
        for r in self.reps:
            for m in self.methods:
                res = r.methods[m]
                lam_axis = [0.0] if res.est_err.size == 1 else grid
                for lam, v in zip(lam_axis, res.est_err):
                    yield (r.rep, m, lam, "est_err", float(v))
                if res.test_err is not None:
                    for lam, v in zip(lam_axis, res.test_err):
                        yield (r.rep, m, lam, "test_err", float(v))
                yield (r.rep, m, lam_axis[res.gcv_index], "est_err_gcv", res.est_err_gcv)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rep", "method", "lambda", "metric", "value"])
        for row in self.csv_rows():
            w.writerow([row[0], row[1], repr(float(row[2])), row[3], repr(row[4])])
        return buf.getvalue()


def _winner(rep: RepResult, candidates) -> str:
    best, best_val = None, math.inf
    for m in candidates:
        v = rep.methods[m].est_err_gcv
        if v < best_val:  # strict: earlier method keeps ties
            best, best_val = m, v
    return best


def aggregate(cfg: SimConfig, reps: list[RepResult]) -> SimReport:
    if not reps:
        raise InvalidInput("no replications to aggregate")
    reps = sorted(reps, key=lambda r: r.rep)
    methods = list(reps[0].methods)
    log_mse, est_gcv, ratio = {}, {}, {}
    for m in methods:
        errs = np.array([r.methods[m].est_err for r in reps])
        with np.errstate(divide="ignore"):
            log_mse[m] = _quantiles(np.log(errs))
        est_gcv[m] = _quantiles([r.methods[m].est_err_gcv for r in reps])
        ratios = [r.methods[m].gcv_ratio for r in reps]
        if ratios[0] is not None:
            assert all(x >= 1.0 for x in ratios), "GCV test error below the grid minimum"
            ratio[m] = {**_quantiles(ratios), "min": float(min(ratios))}
    wins = {}
    for q in cfg.q_list:
        cands = [m if m in ("ols", "ridge") else method_label(m, q) for m in WIN_ORDER]
        counts = {m: 0 for m in cands}
        for r in reps:
            counts[_winner(r, cands)] += 1
        wins[str(q)] = counts
    secs = [r.seconds for r in reps]
    runtime = {"total_s": float(sum(secs)), "mean_rep_s": float(np.mean(secs)), "max_rep_s": float(max(secs))}
    return SimReport(
        config=cfg.to_dict(),
        methods=methods,
        log_mse=log_mse,
        est_err_gcv=est_gcv,
        gcv_ratio=ratio,
        wins=wins,
        runtime=runtime,
        reps=reps,
    )


def run_simulation(cfg: SimConfig, threads: int = 1) -> SimReport:
    """Run every replication (in parallel when ``threads > 1``) and aggregate in order."""
    idx = range(cfg.replications)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reps = list(pool.map(lambda r: run_replication(cfg, r), idx))
    else:
        reps = [run_replication(cfg, r) for r in idx]
    return aggregate(cfg, reps)
