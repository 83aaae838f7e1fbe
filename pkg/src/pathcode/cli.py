"""Command-line interface: ``pathcode <subcommand> ...``.

Every subcommand writes one result document (JSON with all floats printed
to 17 significant digits) to ``--output`` or stdout. Diagnostics go to
stderr; the exit status is 0 on success, 1 on a runtime error and 2 on a
usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from typing import Any

import numpy as np

from . import __version__
from .errors import PathCodeError
from .graph import load_network, read_edge_list
from .optim import (
    Dataset,
    Loss,
    ProblemSpec,
    SolverConfig,
    continuation,
    lambda_grid,
    lambda_max,
    loss_value_grad,
)
from .penalty import (
    PenaltyKind,
    PenaltySpec,
    dual_norm,
    dual_norm_psi,
    prox,
    support_paths,
    value,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2


# ---------------------------------------------------------------- documents


def _format_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    s = "%.17g" % x
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def _plain(obj: Any) -> Any:
    """Convert numpy scalars/arrays and tuples into JSON-ready values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _emit(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_emit(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_emit(v, indent, level) for v in obj) + "]"
        items = [pad + _emit(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return _format_float(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(doc: Any) -> str:
    """Serialize a result document (17 significant digits for every float)."""
    return _emit(_plain(doc), 2, 0) + "\n"


def loads(text: str) -> Any:
    """Parse a result document written by :func:`dumps`."""
    return json.loads(text)


def _sparse(w) -> list:
    """Non-zero entries as ``[index (1-based), value]`` pairs."""
    w = np.asarray(w, dtype=float)
    return [[int(j) + 1, float(w[j])] for j in np.flatnonzero(w)]


def _paths(spec: PenaltySpec, w) -> list:
    return [{"path": list(g), "amount": float(a)} for g, a in support_paths(spec, w)]


# ---------------------------------------------------------------- inputs


def _read_matrix(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)


def _read_vector(path) -> np.ndarray:
    v = np.loadtxt(path, delimiter=",", ndmin=1, dtype=float)
    return v.ravel()


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return max(1, int(args.threads))
    env = os.environ.get("PATHCODE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise SystemExit(_usage_error(f"PATHCODE_THREADS must be an integer, got {env!r}"))
    return 1


def _usage_error(msg: str) -> int:
    print(f"pathcode: error: {msg}", file=sys.stderr)
    return EXIT_USAGE


def _penalty(args, p: int | None = None) -> PenaltySpec:
    kind = PenaltyKind(args.penalty)
    net = None
    if kind.needs_graph:
        if not args.graph:
            raise _Usage(f"--penalty {kind.value} needs --graph")
        net = load_network(args.graph, gamma=args.gamma, seed=args.seed)
        if p is not None and net.p != p:
            raise ValueError(f"graph has {net.p} vertices but the data have {p} variables")
    return PenaltySpec(kind, getattr(args, "lam", None) or 1.0, net)


class _Usage(Exception):
    """Inconsistent command-line options."""


def _config_echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


# ---------------------------------------------------------------- fit


def _grid(args, problem: ProblemSpec) -> np.ndarray:
    if args.lam is not None:
        return np.array([args.lam], dtype=float)
    spec = args.lambda_grid
    if spec == "auto":
        lmax = lambda_max(problem)
        if lmax <= 0:
            return np.array([0.0])
        return lambda_grid(lmax, args.n_lambda)
    vals = np.array([float(v) for v in spec.split(",") if v.strip()], dtype=float)
    return np.sort(vals)[::-1]


def _fold_job(job):
    problem, grid, method, train, test = job
    Xtr = problem.data.X[train]
    sub = ProblemSpec(Dataset(Xtr, problem.data.y[train]), problem.penalty, problem.loss,
                      problem.solver)
    fits = continuation(sub, grid, method)
    test_data = Dataset(problem.data.X[test], problem.data.y[test])
    errs = []
    for res in fits:
        val, _ = loss_value_grad(problem.loss, test_data, res.w)
        errs.append(val / max(len(test), 1))
    return errs


def cross_validate(problem: ProblemSpec, grid, k: int, method: str, seed: int,
                   threads: int = 1) -> np.ndarray:
    """Mean held-out loss per grid point over ``k`` shuffled folds."""
    n = problem.data.n
    if not 2 <= k <= n:
        raise ValueError("--cv needs 2 <= k <= number of samples")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(perm, k)
    jobs = []
    for i in range(k):
        test = np.sort(folds[i])
        train = np.sort(np.concatenate([folds[j] for j in range(k) if j != i]))
        jobs.append((problem, grid, method, train, test))
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=threads) as ex:
            errs = list(ex.map(_fold_job, jobs))
    else:
        errs = [_fold_job(j) for j in jobs]
    return np.mean(np.asarray(errs), axis=0)


def cmd_fit(args) -> dict:
    X = _read_matrix(args.x)
    y = _read_vector(args.y)
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
    data = Dataset(X, y)
    penalty = _penalty(args, data.p).with_lambda(1.0)
    solver = SolverConfig(tol=args.tol, max_iter=args.max_iter)
    problem = ProblemSpec(data, penalty, Loss(args.loss), solver)
    if args.solver == "active-set" and penalty.kind is not PenaltyKind.PSI:
        raise _Usage("--solver active-set needs --penalty psi")
    if args.solver == "fista" and not penalty.kind.convex:
        raise _Usage("--solver fista needs a convex penalty (l1 or psi)")
    grid = _grid(args, problem)
    doc: dict = {"command": "fit", "version": __version__, "config": _config_echo(args)}
    t0 = time.perf_counter()
    if args.cv:
        cv = cross_validate(problem, grid, args.cv, args.solver, args.seed, _threads(args))
        best = int(np.argmin(cv))
        doc["cv"] = {"lambda": grid, "loss": cv, "selected": float(grid[best])}
        grid = grid[: best + 1]  # warm-started path down to the selected value
    fits = continuation(problem, grid, args.solver)
    if args.cv:
        fits = fits[-1:]
    results = []
    for res in fits:
        spec = penalty.with_lambda(res.lam)
        results.append({
            "lambda": res.lam,
            "objective": res.final_objective,
            "gap": res.gap,
            "converged": res.converged,
            "reason": res.reason,
            "iterations": res.iterations,
            "support_size": res.support_size,
            "solution": _sparse(res.w),
            "paths": _paths(spec, res.w),
        })
    doc["results"] = results
    doc["timings"] = {"seconds": time.perf_counter() - t0}
    if any(not r["converged"] for r in results):
        print("pathcode: warning: some grid points did not reach the tolerance", file=sys.stderr)
    return doc


# ---------------------------------------------------------------- eval / prox / dualnorm


def _vector_for(args, attr: str, p: int | None) -> np.ndarray:
    v = _read_vector(getattr(args, attr))
    if p is not None and v.shape[0] != p:
        raise ValueError(f"vector has {v.shape[0]} entries but the graph has {p} vertices")
    return v


def cmd_eval(args) -> dict:
    spec = _penalty(args)
    w = _vector_for(args, "w", spec.net.p if spec.net is not None else None)
    return {
        "command": "eval", "version": __version__, "config": _config_echo(args),
        "value": value(spec, w), "paths": _paths(spec, w),
    }


def cmd_prox(args) -> dict:
    args_lam = args.lam
    spec = _penalty(args).with_lambda(args_lam)
    u = _vector_for(args, "u", spec.net.p if spec.net is not None else None)
    w = prox(spec, u)
    return {
        "command": "prox", "version": __version__, "config": _config_echo(args),
        "solution": _sparse(w), "vector": w, "paths": _paths(spec, w),
    }


def cmd_dualnorm(args) -> dict:
    spec = _penalty(args)
    kappa = _vector_for(args, "kappa", spec.net.p if spec.net is not None else None)
    doc = {"command": "dualnorm", "version": __version__, "config": _config_echo(args)}
    if spec.kind is PenaltyKind.PSI:
        res = dual_norm_psi(spec, kappa)
        doc.update(value=res.tau, witness=list(res.witness_path or ()), iterations=res.iterations)
    elif spec.kind is PenaltyKind.L1:
        doc.update(value=dual_norm(spec, kappa), witness=[], iterations=0)
    else:
        raise _Usage("dual norms exist for the convex penalties (l1, psi) only")
    return doc


# ---------------------------------------------------------------- experiments


def cmd_synth(args) -> dict:
    from .experiments.synthetic import GridConfig, jazz_like_dag, run_synthetic
    from .graph import build_dag, dagify

    if args.graph:
        el = read_edge_list(args.graph)
        if el.directed:
            dag, und = build_dag(el.edges, el.p), el.edges
        else:
            dag, und = dagify(el.edges, el.p, args.seed), el.edges
    else:
        dag, und = jazz_like_dag(args.seed)
    gammas = tuple(float(g) for g in args.gammas.split(","))
    grid = GridConfig(gammas=gammas, n_lambda=args.n_lambda)
    seeds = range(args.seed, args.seed + args.n_seeds)
    table = run_synthetic(dag, args.scenario, args.sigma, seeds, args.penalties.split(","),
                          grid, undirected=und, threads=_threads(args))
    csv = table.to_csv()
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(csv)
    summary = {k: {"mean": table.mean(k), "std": table.std(k)} for k in table.ratios}
    return {
        "command": "synth", "version": __version__, "config": _config_echo(args),
        "graph": {"p": dag.p, "arcs": dag.n_arcs},
        "ratios": summary, "rows": csv.splitlines(),
        "timings": {"seconds": table.seconds},
    }


def cmd_denoise(args) -> dict:
    from .experiments import denoise as dn

    if getattr(args, "graph", None):
        raise _Usage("denoise builds its own frequency graph; --graph is not accepted")
    if args.image:
        clean = dn.read_pgm(args.image)
    else:
        clean = dn.synthetic_image(args.size, args.seed)
    noisy = dn.add_noise(clean, args.sigma, args.seed) if args.sigma > 0 else clean.copy()
    cfg = dn.DenoiseConfig(args.patch, 0.0, args.penalty, args.gamma, args.source_ratio,
                           args.sigma)
    t0 = time.perf_counter()
    tuned = None
    if args.lam is not None:
        lam = args.lam
    else:
        grid = dn.lambda_grid(max(args.sigma, 1e-12), cfg.penalty, args.n_lambda)
        lam, _, all_m = dn.tune_lambda(clean, noisy, cfg, grid)
        tuned = {"lambda": [l for l, _ in all_m], "psnr": [m.psnr for _, m in all_m]}
    out, metrics = dn.denoise_image(noisy, cfg.with_lambda(lam), clean)
    if args.output_image:
        dn.write_pgm(args.output_image, out)
    doc = {
        "command": "denoise", "version": __version__, "config": _config_echo(args),
        "lambda": lam,
        "psnr": metrics.psnr,
        "psnr_input": metrics.extra["psnr_input"],
        "identity": bool(np.array_equal(out, noisy)),
        "psnr_vs_input": dn.psnr(noisy, out),
        "patch_mse": metrics.patch_mse,
        "mean_support": metrics.support_size,
        "timings": {"seconds": time.perf_counter() - t0},
    }
    if tuned is not None:
        doc["tuning"] = tuned
    return doc


# ---------------------------------------------------------------- parser


def _add_graph(sp, required: bool = False):
    sp.add_argument("--graph", required=required, help="edge-list file")
    sp.add_argument("--gamma", type=float, default=None,
                    help="uniform costs: gamma on source arcs, 1 elsewhere "
                         "(default: costs from the graph file)")


def _add_common(sp):
    sp.add_argument("--seed", type=int, default=0, help="seed for orientation and sampling")
    sp.add_argument("--threads", type=int, default=None,
                    help="worker processes (default: PATHCODE_THREADS or 1)")
    sp.add_argument("--output", "-o", default=None, help="result document path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pathcode", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    penalties = [k.value for k in PenaltyKind]

    sp = sub.add_parser("fit", help="regularized regression along a lambda grid")
    _add_graph(sp)
    sp.add_argument("--x", required=True, help="design matrix CSV (one row per sample)")
    sp.add_argument("--y", required=True, help="response vector (one value per line)")
    sp.add_argument("--penalty", choices=penalties, default="psi")
    sp.add_argument("--loss", choices=[l.value for l in Loss], default="square")
    sp.add_argument("--solver", choices=["auto", "fista", "ista", "active-set"], default="auto")
    grp = sp.add_mutually_exclusive_group()
    grp.add_argument("--lambda", dest="lam", type=float, default=None)
    grp.add_argument("--lambda-grid", default="auto",
                     help="'auto' or comma-separated values")
    sp.add_argument("--n-lambda", type=int, default=25)
    sp.add_argument("--tol", type=float, default=1e-4, help="relative duality gap")
    sp.add_argument("--max-iter", type=int, default=20_000)
    sp.add_argument("--cv", type=int, default=None, help="k-fold cross-validation of lambda")
    _add_common(sp)
    sp.set_defaults(func=cmd_fit)

    for name, attr, helptext, func in [
        ("eval", "w", "penalty value and covering paths", cmd_eval),
        ("prox", "u", "proximal operator", cmd_prox),
        ("dualnorm", "kappa", "dual norm and its witness path", cmd_dualnorm),
    ]:
        sp = sub.add_parser(name, help=helptext)
        _add_graph(sp)
        sp.add_argument(f"--{attr}", required=True, help="vector file (one value per line)")
        default = "psi"
        sp.add_argument("--penalty", choices=penalties, default=default)
        if name == "prox":
            sp.add_argument("--lambda", dest="lam", type=float, required=True)
        _add_common(sp)
        sp.set_defaults(func=func)

    sp = sub.add_parser("synth", help="synthetic recovery benchmark")
    sp.add_argument("--graph", default=None,
                    help="edge-list file (default: 198-vertex community graph)")
    sp.add_argument("--scenario", choices=["flat", "graph", "path"], default="path")
    sp.add_argument("--sigma", type=float, default=0.2)
    sp.add_argument("--n-seeds", type=int, default=20)
    sp.add_argument("--penalties", default="l0,l1,phi,psi")
    sp.add_argument("--gammas", default="0.25,0.5,1,2,4")
    sp.add_argument("--n-lambda", type=int, default=25)
    sp.add_argument("--csv", default=None, help="per-seed table")
    _add_common(sp)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("denoise", help="DCT patch denoising")
    sp.add_argument("--image", default=None, help="clean PGM image (default: synthetic)")
    sp.add_argument("--size", type=int, default=64, help="synthetic image size")
    sp.add_argument("--sigma", type=float, default=25.0)
    sp.add_argument("--patch", type=int, default=8, choices=[6, 8, 10, 12, 14, 16])
    sp.add_argument("--penalty", choices=penalties, default="phi")
    sp.add_argument("--gamma", type=float, default=1.0)
    sp.add_argument("--source-ratio", type=float, default=5.0)
    sp.add_argument("--lambda", dest="lam", type=float, default=None,
                    help="fixed lambda (default: tuned for PSNR)")
    sp.add_argument("--n-lambda", type=int, default=24)
    sp.add_argument("--output-image", default=None, help="write the result as PGM")
    sp.add_argument("--graph", default=None, help=argparse.SUPPRESS)
    _add_common(sp)
    sp.set_defaults(func=cmd_denoise)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        doc = args.func(args)
    except _Usage as exc:
        return _usage_error(str(exc))
    except (PathCodeError, ValueError, OSError) as exc:
        print(f"pathcode: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    text = dumps(doc)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
