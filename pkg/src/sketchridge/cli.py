"""Command-line interface: ``sketchridge {fit,tune,sketch,simulate,theory}``.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
No intercept is added; include a column of ones in X if you want one.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import sim, theory, tuning
from .errors import InvalidInput, SketchRidgeError
from .estimators import Dataset, build_compressed, fit_ols, fit_path
from .linalg import thin_svd
from .sketch import SketchSpec, apply_sketch, generate_sketch, identity_sketch

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
SEED_ENV = "SKETCHRIDGE_SEED"
FIT_METHODS = ("ols", "ridge", "fc", "pc", "linear", "convex")
SCHEMA_DIR = Path(__file__).with_name("schemas")


class UsageError(InvalidInput):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- io helpers


def read_csv_matrix(path) -> tuple[np.ndarray, list[str] | None]:
    """Numeric CSV with an optional header row (detected when any first-row cell is not a number)."""
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from None
    rows, header, width = [], None, None
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            cells = [c.strip() for c in row]
            try:
                vals = [float(c) for c in cells]
            except ValueError:
                if header is None and not rows:
                    header, width = cells, len(cells)
                    continue
                bad = next(c for c in cells if not _is_float(c))
                raise UsageError(f"{path}: line {lineno}: cannot parse {bad!r} as a number") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise UsageError(f"{path}: line {lineno}: expected {width} columns, found {len(vals)}")
            if not all(math.isfinite(v) for v in vals):
                raise UsageError(f"{path}: line {lineno}: non-finite value")
            rows.append(vals)
    if not rows:
        raise UsageError(f"{path}: no data rows")
    return np.array(rows, dtype=float), header


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def write_atomic(path, text: str) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def load_schema(name: str) -> dict:
    return json.loads((SCHEMA_DIR / f"{name}.schema.json").read_text(encoding="utf-8"))


def resolve_seed(arg) -> int:
    if arg is not None:
        return arg
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return 0
    try:
        seed = int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    if not 0 <= seed < 2**64:
        raise UsageError(f"{SEED_ENV} out of range")
    return seed


def _column_index(spec: str, header, width: int) -> int:
    try:
        idx = int(spec)
    except ValueError:
        if header is None or spec not in header:
            raise UsageError(f"response column {spec!r} not found") from None
        return header.index(spec)
    if not -width <= idx < width:
        raise UsageError(f"response column {idx} out of range for {width} columns")
    return idx % width


def load_dataset(args) -> tuple[Dataset, list[str] | None]:
    mat, header = read_csv_matrix(args.input)
    if args.response is not None:
        if args.response_col is not None:
            raise UsageError("give either --response or --response-col, not both")
        y, _ = read_csv_matrix(args.response)
        if y.shape[1] != 1:
            raise UsageError(f"{args.response}: response must have exactly 1 column, found {y.shape[1]}")
        if y.shape[0] != mat.shape[0]:
            raise UsageError(f"X has {mat.shape[0]} rows but Y has {y.shape[0]}")
        return Dataset(mat, y[:, 0]), header
    if args.response_col is None:
        raise UsageError("need --response FILE or --response-col COL")
    j = _column_index(args.response_col, header, mat.shape[1])
    if mat.shape[1] < 2:
        raise UsageError("input needs at least one predictor column besides the response")
    keep = [k for k in range(mat.shape[1]) if k != j]
    names = [header[k] for k in keep] if header else None
    return Dataset(mat[:, keep], mat[:, j]), names


def _lambda_grid(args, singvals) -> np.ndarray:
    lo, hi, count = args.lambda_min, args.lambda_max, args.lambda_count
    if count < 1:
        raise UsageError("--lambda-count must be >= 1")
    if (lo is None) != (hi is None):
        raise UsageError("give both --lambda-min and --lambda-max")
    if lo is None:
        return tuning.default_lambda_grid(singvals, count)
    if not (0 < lo <= hi) or not math.isfinite(hi):
        raise UsageError("need 0 < lambda-min <= lambda-max")
    if count == 1:
        if lo != hi:
            raise UsageError("--lambda-count 1 needs lambda-min == lambda-max")
        return np.array([lo])
    return np.logspace(math.log10(lo), math.log10(hi), count)


def _methods(arg: str) -> list[str]:
    out = [m.strip() for m in arg.split(",") if m.strip()]
    bad = [m for m in out if m not in FIT_METHODS]
    if bad or not out:
        raise UsageError(f"unknown method(s) {bad}; choose from {','.join(FIT_METHODS)}")
    return [m for m in FIT_METHODS if m in out]


# ------------------------------------------------------------------ commands


def _fit_common(args, emit_coefficients: bool) -> dict:
    t0 = time.perf_counter()
    data, names = load_dataset(args)
    methods = _methods(args.methods)
    if args.criterion == "cp" and args.sigma2 is None:
        raise UsageError("--criterion cp requires --sigma2")
    seed = resolve_seed(args.seed)
    if args.identity_sketch:
        sk = identity_sketch(data.n)
        sketch_info = {"identity": True, "n": data.n, "q": data.n}
    else:
        if args.q is None:
            raise UsageError("--q is required unless --identity-sketch is set")
        spec = SketchSpec(n=data.n, q=args.q, s=args.s, seed=seed)
        sk = generate_sketch(spec, threads=args.threads)
        sketch_info = {"identity": False, **spec.to_dict()}
    t_sketch = time.perf_counter()
    cd = build_compressed(data, sk, threads=args.threads)
    lams = _lambda_grid(args, cd.qx_svd.singvals)
    x_svd = thin_svd(data.X) if ("ridge" in methods or "ols" in methods) else None
    path = fit_path(cd, data, lams, with_ridge="ridge" in methods, x_svd=x_svd)
    out_methods = {}
    for m in methods:
        if m == "ols":
            beta = fit_ols(data, x_svd)
            out_methods[m] = {"coefficients": beta, "rss": float(np.sum((data.Y - data.X @ beta) ** 2))}
            continue
        records = path.records(m, args.sigma2)
        lam_sel, rec = tuning.select_lambda(records, args.criterion)
        k = int(np.searchsorted(path.lambdas, lam_sel))
        fit = path.fits[k]
        entry = {"selected_lambda": lam_sel, "selected": rec.to_dict(), "coefficients": fit.beta(m)}
        if m == "linear":
            entry["alpha"] = fit.alpha_linear
        elif m == "convex":
            entry["alpha"] = [fit.alpha_convex, 1.0 - fit.alpha_convex]
        rows = []
        for f, r in zip(path.fits, records):
            row = r.to_dict()
            if emit_coefficients:
                row["coefficients"] = f.beta(m)
            if m == "linear":
                row["alpha"] = f.alpha_linear
            elif m == "convex":
                row["alpha"] = [f.alpha_convex, 1.0 - f.alpha_convex]
            rows.append(row)
        entry["path"] = rows
        out_methods[m] = entry
    t_end = time.perf_counter()
    result = {
        "n": data.n,
        "p": data.p,
        "predictors": names,
        "sketch": sketch_info,
        "criterion": args.criterion,
        "lambdas": lams,
        "methods": out_methods,
    }
    if not args.no_timing:
        result["timing"] = {
            "sketch_s": t_sketch - t0,
            "fit_s": t_end - t_sketch,
            "total_s": t_end - t0,
        }
    return result


def cmd_fit(args) -> int:
    write_atomic(args.output, dump_json(_fit_common(args, args.emit_coefficients)))
    return EXIT_OK


def cmd_tune(args) -> int:
    res = _fit_common(args, emit_coefficients=False)
    slim = {
        m: {k: v for k, v in e.items() if k in ("selected_lambda", "selected", "path")}
        for m, e in res["methods"].items()
        if m != "ols"
    }
    res["methods"] = slim
    write_atomic(args.output, dump_json(res))
    return EXIT_OK


def cmd_sketch(args) -> int:
    mat, header = read_csv_matrix(args.input)
    seed = resolve_seed(args.seed)
    spec = SketchSpec(n=mat.shape[0], q=args.q, s=args.s, seed=seed)
    qm = apply_sketch(generate_sketch(spec, threads=args.threads), mat, threads=args.threads)
    lines = []
    if header:
        lines.append(",".join(header))
    lines.extend(",".join(repr(float(v)) for v in row) for row in qm)
    write_atomic(args.output, "\n".join(lines) + "\n")
    if args.spec_output:
        write_atomic(args.spec_output, dump_json(spec.to_dict()))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = sim.SimConfig.from_json(args.config)
    if args.replications is not None:
        cfg = sim.SimConfig.from_dict({**cfg.to_dict(), "replications": args.replications})
    if args.seed is not None or os.environ.get(SEED_ENV):
        cfg = sim.SimConfig.from_dict({**cfg.to_dict(), "seed": resolve_seed(args.seed)})
    report = sim.run_simulation(cfg, threads=args.threads)
    write_atomic(args.output, dump_json(report.to_dict(include_timing=not args.no_timing)))
    csv_path = args.csv_output
    if csv_path is None and args.output not in (None, "-"):
        csv_path = str(Path(args.output).with_suffix(".csv"))
    if csv_path:
        write_atomic(csv_path, report.to_csv())
    return EXIT_OK


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"cannot parse number list {text!r}") from None


def cmd_theory(args) -> int:
    n, p, q, s, sigma2 = args.n, args.p, args.q, args.s, args.sigma2
    if n < 1 or p < 1 or q < 1 or s < 1 or not sigma2 > 0:
        raise UsageError("need n, p, q >= 1, s >= 1 and sigma2 > 0")
    given = [args.b2 is not None, args.tau2 is not None, args.beta is not None]
    if sum(given) != 1:
        raise UsageError("give exactly one of --b2, --tau2, --beta")
    if args.b2 is not None:
        b2 = args.b2
    elif args.tau2 is not None:
        b2 = p * args.tau2
    else:
        beta, _ = read_csv_matrix(args.beta)
        beta = beta.ravel()
        if beta.size != p:
            raise UsageError(f"--beta has {beta.size} entries, expected p={p}")
        b2 = float(beta @ beta)
    if b2 < 0:
        raise UsageError("b2 must be >= 0")
    if args.theta_grid is not None and args.lambda_grid is not None:
        raise UsageError("give --theta-grid or --lambda-grid, not both")
    if args.lambda_grid is not None:
        thetas = [lam / n for lam in _float_list(args.lambda_grid)]
    elif args.theta_grid is not None:
        thetas = _float_list(args.theta_grid)
    else:
        thetas = [0.0] + [float(t) for t in np.logspace(-3, 3, 25)]
    if any(t < 0 or not math.isfinite(t) for t in thetas):
        raise UsageError("penalties must be finite and >= 0")
    rows = []
    for t in thetas:
        ridge_mse = theory.mse_orthogonal(t, b2, sigma2, n, p, q, s, "ridge")
        bias = b2 * (t / (1 + t)) ** 2
        for which in ("ridge", "fc", "pc"):
            mse = theory.mse_orthogonal(t, b2, sigma2, n, p, q, s, which, args.form)
            rows.append(
                {
                    "estimator": which,
                    "theta": t,
                    "lambda": n * t,
                    "bias_sq": bias,
                    "var_trace": mse - bias,
                    "mse": mse,
                    "correction": mse - ridge_mse,
                }
            )
    optimal = {}
    for which in ("ridge", "fc", "pc"):
        th = theory.optimal_theta(which, b2, sigma2, n, p, q, s, args.form)
        optimal[which] = {
            "theta": th,
            "lambda": n * th,
            "mse": theory.mse_orthogonal(th, b2, sigma2, n, p, q, s, which, args.form),
        }
    out = {
        "design": "orthogonal",
        "form": args.form,
        "params": {"n": n, "p": p, "q": q, "s": s, "sigma2": sigma2, "b2": b2},
        "rows": rows,
        "optimal": optimal,
    }
    write_atomic(args.output, dump_json(out))
    return EXIT_OK


# -------------------------------------------------------------------- parser


def _add_data_args(sp):
    sp.add_argument("--input", required=True, help="CSV of predictors (optionally with the response)")
    sp.add_argument("--response", help="CSV with a single response column")
    sp.add_argument("--response-col", help="response column in --input (index or header name; -1 = last)")
    sp.add_argument("--q", type=int, help="sketch rows")
    sp.add_argument("--s", type=float, default=3.0, help="sketch sparsity (default 3)")
    sp.add_argument("--seed", type=int, help=f"sketch seed (fallback: ${SEED_ENV}, then 0)")
    sp.add_argument("--lambda-min", type=float)
    sp.add_argument("--lambda-max", type=float)
    sp.add_argument("--lambda-count", type=int, default=50)
    sp.add_argument("--methods", default="fc,pc,linear,convex", help="comma list from " + ",".join(FIT_METHODS))
    sp.add_argument("--criterion", choices=("gcv", "cp"), default="gcv")
    sp.add_argument("--sigma2", type=float, help="noise variance for --criterion cp")
    sp.add_argument("--output", default="-", help="output path ('-' for stdout)")
    sp.add_argument("--identity-sketch", action="store_true", help="use Q = I (testing)")
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--no-timing", action="store_true", help="omit wall-clock fields")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sketchridge", description="Ridge regression on compressed data.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", help="fit compressed ridge estimators on CSV data")
    _add_data_args(fit)
    fit.add_argument("--emit-coefficients", action="store_true", help="include coefficients for every lambda")
    fit.set_defaults(func=cmd_fit)

    tune = sub.add_parser("tune", help="penalty selection records only")
    _add_data_args(tune)
    tune.set_defaults(func=cmd_tune)

    sk = sub.add_parser("sketch", help="compress the rows of a CSV matrix")
    sk.add_argument("--input", required=True)
    sk.add_argument("--q", type=int, required=True)
    sk.add_argument("--s", type=float, default=3.0)
    sk.add_argument("--seed", type=int)
    sk.add_argument("--output", default="-")
    sk.add_argument("--spec-output", help="also write the sketch spec as JSON")
    sk.add_argument("--threads", type=int, default=1)
    sk.set_defaults(func=cmd_sketch)

    sm = sub.add_parser("simulate", help="run the simulation study from a JSON config")
    sm.add_argument("--config", required=True)
    sm.add_argument("--output", default="-")
    sm.add_argument("--csv-output", help="long-format CSV (default: --output with .csv)")
    sm.add_argument("--replications", type=int)
    sm.add_argument("--seed", type=int)
    sm.add_argument("--threads", type=int, default=1)
    sm.add_argument("--no-timing", action="store_true")
    sm.set_defaults(func=cmd_simulate)

    th = sub.add_parser("theory", help="orthogonal-design MSE and optimal penalties")
    th.add_argument("--n", type=int, required=True)
    th.add_argument("--p", type=int, required=True)
    th.add_argument("--q", type=int, required=True)
    th.add_argument("--s", type=float, default=3.0)
    th.add_argument("--sigma2", type=float, required=True)
    th.add_argument("--b2", type=float, help="squared norm of the true coefficients")
    th.add_argument("--tau2", type=float, help="prior variance per coefficient (b2 = p * tau2)")
    th.add_argument("--beta", help="CSV with the true coefficients")
    th.add_argument("--theta-grid", help="comma list of per-observation penalties")
    th.add_argument("--lambda-grid", help="comma list of penalties (theta = lambda / n)")
    th.add_argument("--form", choices=("reduced", "complete"), default="reduced")
    th.add_argument("--output", default="-")
    th.set_defaults(func=cmd_theory)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except (InvalidInput, OSError) as exc:
        print(f"sketchridge: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SketchRidgeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"sketchridge: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
