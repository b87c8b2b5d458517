"""Command-line front end.

Subcommands
-----------
calibrate         weights CSV plus diagnostics JSON
estimate          point estimate, variance and confidence interval as JSON
simulate          Monte Carlo reports for the two simulation studies
conjugate-check   generator invariant table

Every failure prints one JSON line ``{"error": ..., "message": ...}`` on
stderr and exits with a nonzero status.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .entropy import get_generator, conjugacy_report
from .errors import CalibrationError, DomainError, UnsupportedWithoutFrame
from .estimate import bc_weights, ds_weights, generator_coef, ipw
from .inference import (JointInclusion, var_design, var_missing_eta,
                        var_sample_only)
from .propensity import Learner, baseline_weights, fit_crossfitted
from .simkit import (STUDY1_CELLS, THREADS_ENV, Study1Config, Study2Config,
                     run_study1, run_study2)
from .softcal import (SoftOptions, SoftProblem, Standardizer, adaptive_tau,
                      cv_select_tau, default_tau_grid, parse_q, pilot_coef,
                      solve_soft)
from .solver import CalibrationProblem, Scale, SolverOptions

EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_SOLVER = 4
EXIT_UNSUPPORTED = 5
EXIT_CHECK = 6

RESERVED = ("id", "y", "pi", "w0", "delta")


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class SchemaError(ValueError):
    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


# -- input ---------------------------------------------------------------------

def read_table(path) -> dict:
    """Read a headed CSV into ``{column: list of str}`` with schema checks."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if len(set(header)) != len(header):
            dup = next(h for h in header if header.count(h) > 1)
            raise SchemaError(f"{path}: duplicate column '{dup}'", dup)
        cols = {h: [] for h in header}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}: line {lineno} has {len(row)} fields, "
                                  f"expected {len(header)}")
            for h, v in zip(header, row):
                cols[h].append(v.strip())
    return cols


def numeric(table: dict, column: str, path="input") -> np.ndarray:
    if column not in table:
        raise SchemaError(f"{path}: missing required column '{column}'", column)
    values = table[column]
    out = np.empty(len(values))
    for i, v in enumerate(values):
        if v == "" or v.lower() in ("na", "nan"):
            raise SchemaError(f"{path}: missing value in column '{column}' (row {i + 1})",
                              column)
        try:
            out[i] = float(v)
        except ValueError:
            raise SchemaError(f"{path}: non-numeric value {v!r} in column '{column}' "
                              f"(row {i + 1})", column) from None
    if not np.all(np.isfinite(out)):
        raise SchemaError(f"{path}: non-finite value in column '{column}'", column)
    return out


@dataclass
class Frame:
    ids: list
    X: np.ndarray                  # respondent auxiliaries (with intercept if requested)
    names: list
    y: np.ndarray | None
    pi: np.ndarray | None
    w0_col: np.ndarray | None
    targets: np.ndarray            # on the requested scale
    scale: Scale
    N: int
    pop_X: np.ndarray | None       # population auxiliaries, same columns as X
    delta: np.ndarray | None       # population response indicators
    resp_rows: np.ndarray | None   # population rows of the respondents, in order


def load_frame(args, need_y: bool = False) -> Frame:
    resp = read_table(args.respondents)
    src = str(args.respondents)
    if "id" not in resp:
        raise SchemaError(f"{src}: missing required column 'id'", "id")
    ids = resp["id"]
    if len(set(ids)) != len(ids):
        raise SchemaError(f"{src}: duplicate ids", "id")
    names = (args.covariates.split(",") if args.covariates
             else [c for c in resp if c not in RESERVED])
    if not names:
        raise SchemaError(f"{src}: no auxiliary columns")
    Xr = np.column_stack([numeric(resp, c, src) for c in names])
    y = numeric(resp, "y", src) if (need_y or "y" in resp) else None
    pi = numeric(resp, "pi", src) if "pi" in resp else None
    w0_col = numeric(resp, "w0", src) if "w0" in resp else None
    pop_X = delta = rows = None
    scale = Scale(args.scale)
    if args.population:
        pop = read_table(args.population)
        psrc = str(args.population)
        if "id" not in pop:
            raise SchemaError(f"{psrc}: missing required column 'id'", "id")
        pop_X = np.column_stack([numeric(pop, c, psrc) for c in names])
        index = {v: i for i, v in enumerate(pop["id"])}
        missing = [i for i in ids if i not in index]
        if missing:
            raise SchemaError(f"respondent id {missing[0]!r} not in population file", "id")
        rows = np.array([index[i] for i in ids], dtype=int)
        if "delta" in pop:
            delta = numeric(pop, "delta", psrc)
            if set(np.flatnonzero(delta == 1)) != set(rows.tolist()):
                raise SchemaError(f"{psrc}: delta does not match the respondent ids",
                                  "delta")
        N = pop_X.shape[0]
        if args.N is not None and args.N != N:
            raise SchemaError(f"--N {args.N} disagrees with {N} population rows")
        t = pop_X.mean(axis=0)
    elif args.targets:
        tt = read_table(args.targets)
        tsrc = str(args.targets)
        t = np.array([numeric(tt, c, tsrc)[0] for c in names])
        if args.N is None:
            raise SchemaError("--N is required with a targets file")
        N = int(args.N)
        if scale == Scale.TOTAL:
            t = t / N
    else:
        raise SchemaError("either --population or --targets is required")
    if not args.no_intercept:
        Xr = np.column_stack([np.ones(Xr.shape[0]), Xr])
        t = np.concatenate([[1.0], t])
        names = ["(intercept)"] + names
        if pop_X is not None:
            pop_X = np.column_stack([np.ones(pop_X.shape[0]), pop_X])
    targets = t if scale == Scale.MEAN else t * N
    return Frame(ids, Xr, names, y, pi, w0_col, targets, scale, N, pop_X, delta, rows)


def baseline(frame: Frame, args) -> tuple:
    """Baseline weights on the frame's scale and the inclusion probabilities used."""
    n, N = frame.X.shape[0], frame.N
    mode = getattr(args, "pi", "known")
    if mode == "crossfit":
        if frame.pop_X is None or frame.delta is None:
            raise UnsupportedWithoutFrame(
                "--pi crossfit needs a population file with a delta column")
        raw = frame.pop_X[:, 1:] if not args.no_intercept else frame.pop_X
        fit = fit_crossfitted(raw, frame.delta, K=args.folds, learner=args.learner,
                              seed=args.seed)
        pi = fit.pi_hat[frame.resp_rows]
    elif frame.w0_col is not None:
        w0 = frame.w0_col
        pi = (n / N) / w0 if frame.scale == Scale.MEAN else 1.0 / w0
        return w0, pi
    elif frame.pi is not None:
        pi = frame.pi
    else:
        raise SchemaError("respondent file needs a 'pi' or 'w0' column "
                          "(or use --pi crossfit)", "pi")
    if np.any(pi <= 0) or np.any(pi > 1):
        raise SchemaError("inclusion probabilities must lie in (0, 1]", "pi")
    w0 = (n / N) / pi if frame.scale == Scale.MEAN else 1.0 / pi
    return w0, pi


# -- shared pieces -------------------------------------------------------------

def solver_options(args) -> SolverOptions:
    return SolverOptions(tol=args.tol, max_iter=args.max_iter)


def run_soft(frame: Frame, w0, gen, args) -> tuple:
    """Soft calibration; returns (weights, diagnostics dict, criterion rows)."""
    if frame.y is None:
        raise SchemaError("soft calibration needs the outcome column 'y' for the pilot",
                          "y")
    if frame.pop_X is None:
        raise UnsupportedWithoutFrame("soft calibration standardizes with population "
                                      "moments and needs --population")
    if frame.scale != Scale.MEAN:
        raise SchemaError("soft calibration works on the mean scale (--scale mean)")
    raw_pop = frame.pop_X if args.no_intercept else frame.pop_X[:, 1:]
    raw_X = frame.X if args.no_intercept else frame.X[:, 1:]
    std = Standardizer.from_population(raw_pop)
    Xt = std.transform(raw_X)
    q = parse_q(args.q)
    beta = pilot_coef(Xt, frame.y, args.pilot, seed=args.seed)
    curve = []
    if str(args.tau).lower() == "auto":
        def builder(tau, rows):
            sel = slice(None) if rows is None else rows
            return SoftProblem(Xt[sel], w0[sel], q, adaptive_tau(beta, tau), frame.N)
        choice = cv_select_tau(gen, builder, frame.y, default_tau_grid(), args.cv_folds,
                               args.seed)
        tau = choice.tau
        curve = choice.curve_rows()
    else:
        tau = float(args.tau)
    prob = SoftProblem(Xt, w0, q, adaptive_tau(beta, tau), frame.N)
    res = solve_soft(gen, prob, SoftOptions(tol=min(args.tol, 1e-8)))
    names = frame.names if args.no_intercept else frame.names[1:]
    diag = {"soft": True, "q": args.q, "tau": tau, "pilot": args.pilot,
            "lambda0": res.lambda0, "lambda": res.lam.tolist(),
            "active_set": [names[k] for k in res.active_set],
            "kkt_gap": res.kkt_gap, "iterations": res.iterations,
            "balance": res.balance(prob).tolist()}
    return res.weights, diag, curve


def calibrate_frame(frame: Frame, args) -> tuple:
    gen = get_generator(args.generator)
    w0, pi = baseline(frame, args)
    if getattr(args, "soft", False):
        w, diag, curve = run_soft(frame, w0, gen, args)
        return gen, w0, pi, w, diag, curve
    prob = CalibrationProblem(frame.X, w0, frame.targets, frame.scale, frame.N)
    solver = ds_weights if args.method == "ds" else bc_weights
    res = solver(gen, prob, solver_options(args))
    imb = prob.X.T @ res.weights - prob.targets_total
    diag = {"soft": False, "method": args.method, "lambda": res.lam.tolist(),
            "iterations": res.iterations, "grad_norm": res.grad_norm,
            "converged": res.converged, "dual_value": res.dual_value,
            "max_abs_imbalance": float(np.max(np.abs(imb))),
            "imbalance": dict(zip(frame.names, imb.tolist()))}
    return gen, w0, pi, res.weights, diag, []


def manifest(args, outputs, started) -> dict:
    argv = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
            if k != "func"}
    return {"command": args.command, "arguments": argv, "outputs": [str(o) for o in outputs],
            "seed": getattr(args, "seed", None),
            "versions": {"bregcal": __version__, "numpy": np.__version__,
                         "python": platform.python_version()},
            "kernel_backend": kernels.BACKEND,
            "elapsed_seconds": time.perf_counter() - started}


def write_json(path, obj):
    text = json.dumps(obj, indent=2, default=_json_default) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def write_rows(path, fields, rows):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])


def _manifest_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".manifest.json")


# -- subcommands ---------------------------------------------------------------

def cmd_calibrate(args) -> int:
    started = time.perf_counter()
    frame = load_frame(args, need_y=bool(args.soft))
    gen, w0, _, w, diag, curve = calibrate_frame(frame, args)
    diag.update(generator=gen.name, scale=frame.scale.value, n=len(frame.ids), N=frame.N,
                columns=frame.names)
    write_rows(args.out, ["id", "w0", "weight"], zip(frame.ids, w0, w))
    outputs = [args.out]
    diag_path = args.diagnostics or Path(str(args.out) + ".json")
    write_json(diag_path, diag)
    outputs.append(diag_path)
    if curve and args.curve:
        write_rows(args.curve, ["tau", "criterion"],
                   [(r["tau"], r["criterion"]) for r in curve])
        outputs.append(args.curve)
    write_json(_manifest_path(args.out), manifest(args, outputs, started))
    return 0


def cmd_estimate(args) -> int:
    started = time.perf_counter()
    frame = load_frame(args, need_y=True)
    if args.variance == "eta" and frame.pop_X is None:
        raise UnsupportedWithoutFrame(
            "--variance eta needs unit-level auxiliaries for the whole population "
            "(--population)")
    if args.soft and args.variance:
        raise UnsupportedWithoutFrame("no variance estimator is available for soft "
                                      "calibration; drop --variance")
    gen, w0, pi, w, diag, _ = calibrate_frame(frame, args)
    y = frame.y
    n, N = y.size, frame.N
    if frame.scale == Scale.MEAN:
        value = float(w @ y) / n
    else:
        value = float(w @ y)
    record = {"estimator": ("SBC" if args.soft else args.method.upper()),
              "generator": gen.name, "value": value, "scale": frame.scale.value,
              "ipw": ipw(y, w0, "mean" if frame.scale == Scale.MEAN else "total"),
              "n": n, "N": N, "variance": None, "se": None, "ci": None,
              "diagnostics": diag}
    if args.variance:
        if frame.scale != Scale.MEAN:
            raise SchemaError("variance estimates are reported for the mean (--scale mean)")
        beta = generator_coef(gen, frame.X, y, w)
        if args.variance == "design":
            joint = JointInclusion.poisson()
            if args.joint:
                jt = read_table(args.joint)
                index = {v: i for i, v in enumerate(frame.ids)}
                triples = [(index[a], index[b], float(v))
                           for a, b, v in zip(jt["i"], jt["j"], jt["value"])]
                joint = JointInclusion.from_triples(triples, pi)
            v = var_design(frame.X, y, pi, joint, beta, N, value, args.level)
        elif args.variance == "eta":
            delta = np.zeros(N)
            delta[frame.resp_rows] = 1.0
            order = np.argsort(frame.resp_rows)
            v = var_missing_eta(frame.pop_X, frame.X[order], y[order], w[order], beta,
                                N, n, delta=delta, estimate=value, level=args.level)
        else:
            v = var_sample_only(frame.X, y, pi, beta, value, N, args.level)
        record.update(variance=v.value, se=v.se, ci=[v.ci_low, v.ci_high],
                      variance_method=v.method.value, level=args.level,
                      variance_clipped=v.clipped)
    write_json(args.out, record)
    if args.out and str(args.out) != "-":
        write_json(_manifest_path(args.out), manifest(args, [args.out], started))
    return 0


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_jobs = args.jobs
    outputs = []
    if args.study == 1:
        kw = dict(seed=args.seed, n_jobs=n_jobs)
        if args.cells:
            cells = tuple(c.strip().lower() for c in _as_list(args.cells))
            bad = [c for c in cells if c not in STUDY1_CELLS]
            if bad:
                raise SchemaError(f"unknown cell {bad[0]!r}; choose from "
                                  f"{', '.join(STUDY1_CELLS)}")
            kw["cells"] = cells
        if args.learners:
            kw["learners"] = tuple(Learner(x.strip()).value for x in _as_list(args.learners))
        cfg = Study1Config.full_scale(**kw) if args.full_scale else Study1Config(**kw)
        cfg = _override(cfg, args)
        reports = run_study1(cfg)
        csv_text = "".join(r.to_csv() if i == 0 else r.to_csv().split("\n", 1)[1]
                           for i, r in enumerate(reports))
        table = "\n\n".join(r.table() for r in reports)
    else:
        kw = dict(seed=args.seed, n_jobs=n_jobs)
        if args.tau_grid:
            kw["tau_grid"] = tuple(float(t) for t in _as_list(args.tau_grid))
        if args.generators:
            kw["generators"] = tuple(g.strip() for g in _as_list(args.generators))
        cfg = Study2Config.full_scale(**kw) if args.full_scale else Study2Config(**kw)
        cfg = _override(cfg, args)
        result = run_study2(cfg)
        reports = [result.report]
        csv_text = result.report.to_csv()
        table = result.report.table()
        if cfg.tau_grid:
            (out / "tau_curves.csv").write_text(result.curves_csv(), encoding="utf-8")
            outputs.append(out / "tau_curves.csv")
    (out / "report.csv").write_text(csv_text, encoding="utf-8")
    (out / "report.txt").write_text(table + "\n", encoding="utf-8")
    outputs += [out / "report.csv", out / "report.txt"]
    m = manifest(args, outputs, started)
    m["config"] = {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in vars(cfg).items()}
    m["replicate_runtimes"] = {r.label: r.runtime for r in reports}
    write_json(out / "manifest.json", m)
    if not args.quiet:
        print(table)
    return 0


def _as_list(value):
    # comma-separated on the command line, a list in TOML/JSON configs
    return value.split(",") if isinstance(value, str) else list(value)


def _override(cfg, args):
    from dataclasses import replace
    changes = {k: getattr(args, k) for k in ("N", "B", "K")
               if getattr(args, k, None) is not None}
    if args.study == 2 and args.p is not None:
        changes["p"] = args.p
    return replace(cfg, **changes) if changes else cfg


def conjugate_rows(tol: float = 1e-10):
    keys = ["sq", "kl", "skl", "el", "hd", "ce", "renyi:0.5", "renyi:1", "renyi:2"]
    rows = []
    for key in keys:
        rep = conjugacy_report(get_generator(key))
        ok = max(rep["inverse_link"], rep["fenchel_young"], rep["curvature"]) <= tol
        rows.append((key, rep["inverse_link"], rep["fenchel_young"], rep["curvature"], ok))
    return rows


def cmd_conjugate_check(args) -> int:
    rows = conjugate_rows(args.tol_check)
    print(f"{'generator':<12}{'inverse link':>14}{'Fenchel-Young':>15}{'curvature':>12}  result")
    for key, a, b, c, ok in rows:
        print(f"{key:<12}{a:>14.2e}{b:>15.2e}{c:>12.2e}  {'PASS' if ok else 'FAIL'}")
    return 0 if all(r[-1] for r in rows) else EXIT_CHECK


# -- argument parsing ----------------------------------------------------------

def _add_frame_args(p):
    p.add_argument("--respondents", type=Path, required=True,
                   help="CSV with id, y, auxiliaries and optional pi or w0")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--population", type=Path,
                     help="CSV with id, auxiliaries and optional delta for every unit")
    src.add_argument("--targets", type=Path,
                     help="one-row CSV with a population mean (or total) per auxiliary")
    p.add_argument("--covariates", help="comma-separated auxiliary columns "
                   "(default: every column except id, y, pi, w0, delta)")
    p.add_argument("--scale", choices=["mean", "total"], default="mean")
    p.add_argument("--N", type=int, help="population size (required with --targets)")
    p.add_argument("--no-intercept", action="store_true",
                   help="do not add a constant auxiliary")
    p.add_argument("--generator", default="kl",
                   help="sq, kl, skl, el, hd, ce or renyi:<alpha>")
    p.add_argument("--method", choices=["bc", "ds"], default="bc")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--pi", choices=["known", "crossfit"], default="known")
    p.add_argument("--learner", choices=[x.value for x in Learner], default="glm")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--soft", action="store_true", help="soft calibration")
    p.add_argument("--q", default="inf", choices=["1", "2", "inf"])
    p.add_argument("--tau", default="5e-4", help="global tolerance or 'auto'")
    p.add_argument("--pilot", choices=["ols", "lasso"], default="ols")
    p.add_argument("--cv-folds", type=int, default=5)
    p.add_argument("--config", type=Path, help="TOML or JSON file with flag defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bregcal", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"bregcal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("calibrate", help="compute calibration weights")
    _add_frame_args(p)
    p.add_argument("--out", type=Path, required=True, help="weights CSV")
    p.add_argument("--diagnostics", type=Path, help="JSON path (default: <out>.json)")
    p.add_argument("--curve", type=Path, help="CSV for the tau criterion curve")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("estimate", help="estimate the mean or total of y")
    _add_frame_args(p)
    p.add_argument("--variance", choices=["design", "eta", "sample-only"])
    p.add_argument("--joint", type=Path,
                   help="CSV of joint inclusion probabilities with columns i, j, value")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--out", default="-", help="JSON path (default: stdout)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="run a Monte Carlo study")
    p.add_argument("--study", type=int, choices=[1, 2], required=True)
    p.add_argument("--cells", help=f"study 1 cells, from {', '.join(STUDY1_CELLS)}")
    p.add_argument("--learners", help="study 1 learners (glm, spline)")
    p.add_argument("--generators", help="study 2 generators (el, kl, hd)")
    p.add_argument("--tau-grid", help="study 2 comma-separated tau values for curves")
    p.add_argument("--full-scale", action="store_true", help="N=10000, B=500")
    p.add_argument("--N", type=int)
    p.add_argument("--B", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--jobs", type=int, help=f"worker processes (default ${THREADS_ENV} or 1)")
    p.add_argument("--out-dir", type=Path, default=Path("runs"))
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--config", type=Path, help="TOML or JSON file with flag defaults")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("conjugate-check", help="check generator identities")
    p.add_argument("--tol-check", type=float, default=1e-10)
    p.set_defaults(func=cmd_conjugate_check)
    return parser


def load_config(path) -> dict:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        data = json.loads(text)
    else:
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        data = tomllib.loads(text)
    return {k.replace("-", "_"): v for k, v in data.items()}


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse_args(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    command = next((t for t in argv if not t.startswith("-")), None)
    path = _config_path(argv)
    subs = parser._subparsers._group_actions[0].choices
    if path and command in subs:
        sub = subs[command]
        cfg = load_config(path)
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise SchemaError(f"{path}: unknown setting '{unknown[0]}'", unknown[0])
        for action in sub._actions:
            if action.dest in cfg:
                action.required = False
                if action.type is not None and cfg[action.dest] is not None:
                    cfg[action.dest] = action.type(cfg[action.dest])
                if action.choices is not None and cfg[action.dest] not in action.choices:
                    raise SchemaError(f"{path}: invalid value {cfg[action.dest]!r} "
                                      f"for '{action.dest}'", action.dest)
        sub.set_defaults(**cfg)
    return parser.parse_args(argv)


def _error_line(exc) -> str:
    rec = {"error": type(exc).__name__, "message": str(exc).replace("\n", " ")}
    if isinstance(exc, DomainError) and exc.index is not None:
        rec["index"] = int(exc.index)
    if isinstance(exc, SchemaError) and exc.column is not None:
        rec["column"] = exc.column
    return json.dumps(rec)


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        return args.func(args)
    except UnsupportedWithoutFrame as exc:
        failure, code = exc, EXIT_UNSUPPORTED
    except CalibrationError as exc:
        failure, code = exc, EXIT_SOLVER
    except UsageError as exc:
        failure, code = exc, EXIT_USAGE
    except (ValueError, KeyError, OSError) as exc:
        failure, code = exc, EXIT_INPUT
    sys.stderr.write(_error_line(failure) + "\n")
    return code

if __name__ == "__main__":
    sys.exit(main())
