"""Command-line front end.

``gsakit run`` applies one method to one model and writes CSV/JSON tables
plus ``manifest.json``; ``gsakit replay MANIFEST`` re-executes a manifest;
``gsakit converge`` runs the replicated error-versus-budget study.

Settings come from flags, an optional flat ``key = value`` config file
(``--config``; flags win) and method defaults, in that order.  The output
directory defaults to ``$GSAKIT_OUTPUT_DIR`` and the number of worker
threads of a convergence study to ``$GSAKIT_WORKERS``.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .ale import ale_first_order
from .core import (BuiltinModel, ExternalModel, InputSpace, TableModel, builtin, make_rng,
                   read_table_csv, sample)
from .delta import conditional_density_curves, delta_given_data
from .dgsm import dgsm
from .doe import dsd, dsd_fit, dsd_variance_explained
from .errors import (ConfigError, EvaluationError, GivenDataError, GsaError,
                     MethodPreconditionError)
from .morris import morris
from .output import read_table, write_json, write_table
from .results import SobolResult, curves_rows
from .shapley import shapley_effects
from .variance import fast_indices, main_effect_curves, pick_freeze_design, sobol_estimate

METHODS = ("sobol", "fast", "morris", "shapley", "delta", "ale", "dgsm", "dsd")
STUDY_METHODS = ("sobol", "fast")
METRICS = ("sum-abs-rounded", "rmse")
ZERO_ERROR_DISPLAY = 0.009

# name -> (type, default); defaults of None are filled per method
SETTINGS = {
    "method": (str, None), "model": (str, None), "model_param": (list, []),
    "model_cmd": (str, None), "data": (str, None), "p": (int, None), "space": (str, None),
    "seed": (int, 0), "out": (str, None), "timeout": (float, None),
    "n": (int, None), "scheme": (str, None), "n_boot": (int, 500),
    "M": (int, 4), "r": (int, 10), "k": (int, 4), "delta_mult": (int, None),
    "n_perm": (int, 300), "n_outer": (int, 100), "n_inner": (int, 3), "n_var": (int, 10_000),
    "normalized": (bool, True), "partitions": (int, None), "input": (int, None),
    "slices": (int, 8), "bins": (int, None), "fd_step": (float, 1e-4), "n_fake": (int, 2),
    # convergence study
    "methods": (str, "sobol"), "n_grid": (str, None), "replicates": (int, 20),
    "metric": (str, "sum-abs-rounded"), "reference": (str, None), "workers": (int, None),
}
N_DEFAULT = {"sobol": 4096, "fast": 1025, "shapley": None, "delta": 10_000, "ale": 2000,
             "dgsm": 200}
BINS_DEFAULT = {"sobol": 20, "ale": 32}


def _convert(key, value):
    typ = SETTINGS[key][0]
    if value is None:
        return None
    try:
        if typ is bool:
            if isinstance(value, bool):
                return value
            if str(value).lower() in ("1", "true", "yes", "on"):
                return True
            if str(value).lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if typ is int:
            f = float(value)
            if f != int(f):
                raise ValueError(value)
            return int(f)
        if typ is list:
            return list(value) if isinstance(value, (list, tuple)) else [value]
        return typ(value)
    except (TypeError, ValueError):
        raise ConfigError(f"setting {key!r}: cannot interpret {value!r} as {typ.__name__}") from None


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment, repeated
    ``model_param`` lines accumulate."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for num, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{num}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in SETTINGS:
            raise ConfigError(f"{path}:{num}: unknown setting {key!r}")
        if SETTINGS[key][0] is list:
            out.setdefault(key, []).append(value)
        else:
            out[key] = value
    return out


def resolve(flags, config=None):
    """Merge flags over config over defaults and type-check every value."""
    merged = {}
    for key, (_, default) in SETTINGS.items():
        value = flags.get(key)
        if value is None or value == []:
            value = (config or {}).get(key)
        if value is None:
            value = default
        merged[key] = _convert(key, value)
    return merged


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _model_params(items):
    params = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"model parameter {item!r} must look like key=value")
        k, v = item.split("=", 1)
        params[k.strip()] = v.strip()
    return params


def build_model(s):
    """Model handle, input space and (for given data) the table's names."""
    sources = [k for k in ("model", "model_cmd", "data") if s[k]]
    if len(sources) > 1:
        raise ConfigError(f"choose one model source, got {sources}")
    if not sources:
        return None, None
    if s["data"]:
        X, y, names = read_table_csv(s["data"])
        model = TableModel(X, y)
        model.names = names
        return model, None
    if s["model_cmd"]:
        if s["p"] is None:
            raise ConfigError("an external model needs --p")
        model = ExternalModel(s["model_cmd"], p=s["p"], timeout=s["timeout"])
        space = InputSpace.parse(s["space"] or "uniform:0:1", s["p"])
    else:
        model = builtin(s["model"], s["p"], **_model_params(s["model_param"]))
        space = InputSpace.parse(s["space"], model.p) if s["space"] else model.default_space()
    if space.p != model.p:
        raise ConfigError(f"input space has {space.p} dimensions, model takes {model.p}")
    return model, space


def _require(s, key, method):
    if s[key] is None:
        raise ConfigError(f"method {method} needs --{key.replace('_', '-')}")
    return s[key]


def _run_method(s, model, space, out):
    """Dispatch one method; returns (output files, expected evaluations)."""
    m = s["method"]
    seed = s["seed"]
    n = s["n"] if s["n"] is not None else N_DEFAULT.get(m)
    bins = s["bins"] if s["bins"] is not None else BINS_DEFAULT.get(m)
    files = []
    path = lambda name: os.path.join(out, name)

    if isinstance(model, TableModel) and m != "delta":
        raise GivenDataError(f"method {m} needs new model evaluations; "
                             "given data (--data) supports only delta")
    if model is None and m != "dsd":
        raise ConfigError("no model: use --model, --model-cmd or --data")

    if m == "sobol":
        scheme = s["scheme"] or "sobol"
        design = pick_freeze_design(space, n, seed, scheme)
        y = model.evaluate(design.X)
        res = sobol_estimate(design, y, n_boot=s["n_boot"])
        files += write_table(path("sobol.csv"), res.columns, res.rows())
        AB = design.X[: 2 * n]
        if AB.shape[0] >= 10 * bins:
            curves = main_effect_curves(AB, y[: 2 * n], space, bins)
            files += write_table(path("sobol_curves.csv"), curves[0].columns,
                                 curves_rows(curves, space.labels))
        return files, n * (space.p + 2)
    if m == "fast":
        res = fast_indices(model, space, n, s["M"], seed)
        files += write_table(path("fast.csv"), res.columns, res.rows())
        return files, n * space.p
    if m == "morris":
        design, res = morris(model, space, s["r"], s["k"], s["delta_mult"], seed)
        files += write_table(path("morris.csv"), res.columns, res.rows())
        rows = [{"row": i, "trajectory": int(design.trajectory_id[i]),
                 "perturbed": int(design.perturbed_input[i]),
                 **{nm: float(v) for nm, v in zip(space.labels, space.from_unit(design.X)[i])}}
                for i in range(design.X.shape[0])]
        files += write_table(path("morris_design.csv"),
                             ["row", "trajectory", "perturbed", *space.labels], rows)
        return files, design.r * (space.p + 1)
    if m == "shapley":
        res = shapley_effects(model, space, s["n_perm"], s["n_outer"], s["n_inner"], seed,
                              n_var=s["n_var"], normalized=s["normalized"])
        files += write_table(path("shapley.csv"), res.columns, res.rows())
        return files, None
    if m == "delta":
        if isinstance(model, TableModel):
            X, y, names, expected = model.X, model.y, model.names, 0
        else:
            X = sample(space, n, seed, s["scheme"] or "iid")
            y = model.evaluate(X)
            names, expected = space.labels, n
        res = delta_given_data(X, y, s["partitions"], seed)
        rows = res.rows()
        for r, nm in zip(rows, names):
            r["input"] = nm
        files += write_table(path("delta.csv"), res.columns, rows)
        if s["input"] is not None:
            curves = conditional_density_curves(X, y, s["input"], s["slices"])
            files += write_table(path("delta_curves.csv"), curves[0].columns,
                                 curves_rows(curves, names))
        return files, expected
    if m == "ale":
        X = sample(space, n, seed, s["scheme"] or "iid")
        targets = range(space.p) if s["input"] is None else [s["input"]]
        curves = [ale_first_order(model, X, i, bins) for i in targets]
        files += write_table(path("ale.csv"), curves[0].columns, curves_rows(curves, space.labels))
        return files, 2 * n * len(curves)
    if m == "dgsm":
        res = dgsm(model, space, n, s["fd_step"], seed)
        files += write_table(path("dgsm.csv"), res.columns, res.rows())
        return files, n * (2 * space.p + 1)
    if m == "dsd":
        p = space.p if space is not None else _require(s, "p", m)
        design = dsd(p, s["n_fake"], seed, names=space.labels if space else None)
        labels = design.labels
        rows = []
        phys = design.physical(space) if space is not None else None
        for i in range(design.n_runs):
            row = {"run": i}
            row.update({f"{nm}_coded": int(v) for nm, v in zip(labels, design.runs[i])})
            if phys is not None:
                row.update({nm: float(v) for nm, v in zip(labels, phys[i])})
            rows.append(row)
        cols = ["run", *[f"{nm}_coded" for nm in labels], *(labels if phys is not None else [])]
        if model is None:
            files += write_table(path("dsd_design.csv"), cols, rows)
            return files, 0
        y = model.evaluate(phys)
        for row, v in zip(rows, y):
            row["y"] = float(v)
        files += write_table(path("dsd_design.csv"), cols + ["y"], rows)
        fit = dsd_fit(design, y)
        files += write_table(path("dsd_fit.csv"), fit.columns, fit.rows())
        r2 = [{"term": t, "r2": v} for t, v in dsd_variance_explained(fit, y)]
        files += write_table(path("dsd_r2.csv"), ["term", "r2"], r2)
        return files, design.n_runs
    raise ConfigError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")


def _out_dir(s):
    return s["out"] or os.environ.get("GSAKIT_OUTPUT_DIR") or "gsakit-out"


def run(settings):
    """Execute a resolved ``run`` configuration and write its manifest."""
    s = dict(settings)
    if s["method"] not in METHODS:
        raise ConfigError(f"unknown method {s['method']!r}; choose from {', '.join(METHODS)}")
    out = _out_dir(s)
    s["out"] = out
    model, space = build_model(s)
    t0 = time.perf_counter()
    try:
        files, expected = _run_method(s, model, space, out)
    except EvaluationError as exc:
        if exc.completed is not None and "completed" not in str(exc):
            raise type(exc)(f"{exc} (completed rows: {exc.completed})", exc.row,
                            exc.completed) from exc
        raise
    wall = time.perf_counter() - t0
    evals = model.eval_count if model is not None else 0
    manifest = {
        "tool": "gsakit", "version": __version__, "command": "run",
        "seed": s["seed"], "eval_count": evals, "expected_evals": expected,
        "wall_time_s": wall, "outputs": [os.path.basename(f) for f in files],
        "model": model.describe() if model is not None else None,
        "space": space.spec() if space is not None else None,
        "settings": s,
    }
    write_json(os.path.join(out, "manifest.json"), manifest)
    return manifest


# ---------------------------------------------------------------------------
# convergence study
# ---------------------------------------------------------------------------

def study_error(est: SobolResult, truth: SobolResult, metric):
    """Error of estimated first-order and total indices against the truth.

    ``sum-abs-rounded`` rounds both to two decimals and sums the absolute
    differences (computed in whole hundredths, so it is exact);
    ``rmse`` is the root mean squared difference of the unrounded values.
    """
    e = np.concatenate([est.first_order, est.total])
    t = np.concatenate([truth.first_order, truth.total])
    if metric == "sum-abs-rounded":
        return float(np.abs(np.rint(100 * e) - np.rint(100 * t)).sum()) / 100
    if metric == "rmse":
        return float(np.sqrt(np.mean((e - t) ** 2)))
    raise ConfigError(f"unknown metric {metric!r}; choose from {', '.join(METRICS)}")


def read_reference(path, p):
    rows = read_table(path)
    try:
        S = np.array([float(r["S"]) for r in rows])
        ST = np.array([float(r["ST"]) for r in rows])
    except (KeyError, ValueError):
        raise ConfigError(f"{path}: reference needs numeric S and ST columns") from None
    if S.size != p:
        raise ConfigError(f"{path}: reference has {S.size} rows for p={p}")
    return SobolResult(S, ST, float("nan"), 0, 0, "reference")


def _parse_grid(text):
    if not text:
        raise ConfigError("converge needs --n-grid, e.g. 256,1024,4096")
    try:
        grid = [int(float(v)) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse n-grid {text!r}") from None
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError(f"n-grid must be strictly increasing, got {grid}")
    return grid


def converge(settings):
    s = dict(settings)
    methods = [m.strip() for m in s["methods"].split(",") if m.strip()]
    for m in methods:
        if m not in STUDY_METHODS:
            raise MethodPreconditionError(f"method {m} has no index truth to compare against; "
                                          f"convergence studies support {', '.join(STUDY_METHODS)}")
    if s["metric"] not in METRICS:
        raise ConfigError(f"unknown metric {s['metric']!r}; choose from {', '.join(METRICS)}")
    grid = _parse_grid(s["n_grid"])
    R = s["replicates"]
    if R < 1:
        raise ConfigError("replicates must be >= 1")
    if s["data"]:
        raise GivenDataError("a convergence study needs a model it can evaluate")
    proto, space = build_model(s)
    if proto is None:
        raise ConfigError("converge needs --model or --model-cmd")
    if s["reference"]:
        truth = read_reference(s["reference"], space.p)
    elif isinstance(proto, BuiltinModel):
        truth = proto.truth(space)
    else:
        raise ConfigError("external models need --reference with the true indices")
    for m in methods:
        if m == "fast" and grid[0] < 4 * s["M"] ** 2 + 2:
            raise ConfigError(f"fast needs n >= 4*M^2 + 2 = {4 * s['M'] ** 2 + 2}")
        if m == "sobol" and grid[0] < 2:
            raise ConfigError("sobol needs n >= 2")

    def cell(job):
        m, n, r = job
        seed = int(make_rng(s["seed"], n, r).integers(0, 2 ** 63 - 1))
        model, _ = build_model(s)
        if m == "sobol":
            design = pick_freeze_design(space, n, seed, s["scheme"] or "sobol")
            est = sobol_estimate(design, model.evaluate(design.X), n_boot=0)
        else:
            est = fast_indices(model, space, n, s["M"], seed)
        err = study_error(est, truth, s["metric"])
        return {"method": m, "n": n, "replicate": r, "seed": seed, "error": err,
                "error_display": err if err > 0 else ZERO_ERROR_DISPLAY,
                "eval_count": model.eval_count}

    jobs = [(m, n, r) for m in methods for n in grid for r in range(R)]
    workers = s["workers"] or int(os.environ.get("GSAKIT_WORKERS", "1") or 1)
    t0 = time.perf_counter()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(cell, jobs))
    else:
        rows = [cell(j) for j in jobs]
    wall = time.perf_counter() - t0

    out = _out_dir(s)
    s["out"] = out
    cols = ["method", "n", "replicate", "seed", "error", "error_display", "eval_count"]
    files = write_table(os.path.join(out, "converge.csv"), cols, rows)
    if R > 1:
        summary = []
        for m in methods:
            for n in grid:
                e = np.array([r["error"] for r in rows if r["method"] == m and r["n"] == n])
                ev = next(r["eval_count"] for r in rows if r["method"] == m and r["n"] == n)
                q1, med, q3 = np.percentile(e, [25, 50, 75])
                summary.append({"method": m, "n": n, "eval_count": ev, "median": med,
                                "q1": q1, "q3": q3, "min": e.min(), "max": e.max()})
        files += write_table(os.path.join(out, "converge_summary.csv"),
                             ["method", "n", "eval_count", "median", "q1", "q3", "min", "max"],
                             summary)
    manifest = {
        "tool": "gsakit", "version": __version__, "command": "converge",
        "seed": s["seed"], "eval_count": int(sum(r["eval_count"] for r in rows)),
        "wall_time_s": wall, "outputs": [os.path.basename(f) for f in files],
        "space": space.spec(), "settings": s,
    }
    write_json(os.path.join(out, "manifest.json"), manifest)
    return manifest


def replay(manifest_path, out=None):
    import json

    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read manifest {manifest_path}: {exc}") from None
    s = resolve({}, manifest.get("settings", {}))
    if out is not None:
        s["out"] = out
    command = manifest.get("command")
    if command == "run":
        return run(s)
    if command == "converge":
        return converge(s)
    raise ConfigError(f"manifest has unknown command {command!r}")


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(sp):
    g = sp.add_argument_group("model")
    g.add_argument("--model", help="builtin model: ishigami, gfunction, linear, product, constant")
    g.add_argument("--model-param", action="append", metavar="KEY=VALUE",
                   help="builtin parameter, repeatable (vectors comma separated)")
    g.add_argument("--model-cmd", help="external model command (line protocol on stdin/stdout)")
    g.add_argument("--p", type=int, help="number of inputs")
    g.add_argument("--space", help="marginals, e.g. uniform:0:1,normal:0:2 (one entry repeats)")
    g.add_argument("--timeout", type=float, help="external model timeout in seconds")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help="output directory (default $GSAKIT_OUTPUT_DIR or ./gsakit-out)")
    sp.add_argument("--config", help="flat key = value settings file; flags win")
    sp.add_argument("--scheme", choices=("iid", "lhs", "sobol"))
    sp.add_argument("--M", type=int, help="FAST interference order")


def build_parser():
    ap = argparse.ArgumentParser(prog="gsakit", description="Global sensitivity analysis toolkit")
    ap.add_argument("--version", action="version", version=f"gsakit {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="apply one method to one model")
    r.add_argument("--method", choices=METHODS)
    r.add_argument("--data", help="given-data CSV, last column is the response")
    _add_common(r)
    b = r.add_argument_group("budget")
    for flag, typ, text in [("--n", int, "sample size"), ("--r", int, "Morris trajectories"),
                            ("--k", int, "Morris grid levels"),
                            ("--delta-mult", int, "Morris step in grid units"),
                            ("--bins", int, "curve bins"), ("--n-boot", int, "bootstrap resamples"),
                            ("--n-perm", int, "Shapley permutations"),
                            ("--n-outer", int, "Shapley outer samples"),
                            ("--n-inner", int, "Shapley inner samples"),
                            ("--n-var", int, "Shapley variance sample"),
                            ("--partitions", int, "delta classes per input"),
                            ("--input", int, "single input index for curves"),
                            ("--slices", int, "delta density slices"),
                            ("--fd-step", float, "DGSM step relative to input scale"),
                            ("--n-fake", int, "DSD fake factors (0 or 2)")]:
        b.add_argument(flag, type=typ, help=text)
    b.add_argument("--normalized", choices=("true", "false"), help="Shapley values as shares")

    c = sub.add_parser("converge", help="replicated error-versus-budget study")
    _add_common(c)
    c.add_argument("--methods", help="comma separated: sobol, fast")
    c.add_argument("--n-grid", help="strictly increasing sample sizes, comma separated")
    c.add_argument("--replicates", type=int)
    c.add_argument("--metric", choices=METRICS)
    c.add_argument("--reference", help="CSV with S and ST columns per input")
    c.add_argument("--workers", type=int)

    p = sub.add_parser("replay", help="re-execute a manifest")
    p.add_argument("manifest")
    p.add_argument("--out")
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "replay":
            manifest = replay(args.manifest, args.out)
        else:
            flags = {k: v for k, v in vars(args).items() if k in SETTINGS}
            config = read_config(args.config) if args.config else {}
            s = resolve(flags, config)
            if args.command == "run":
                if s["method"] is None:
                    raise ConfigError("run needs --method")
                manifest = run(s)
            else:
                manifest = converge(s)
    except GsaError as exc:
        print(f"gsakit: error: {exc}", file=sys.stderr)
        return exc.exit_code
    print(f"wrote {', '.join(manifest['outputs'])} and manifest.json to "
          f"{manifest['settings']['out']} ({manifest['eval_count']} model evaluations)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
