"""Command line entry point: ``klsnmf {solve,experiment,traces,fetch-data}``.

A ``--config`` file holds ``key = value`` lines named after the long flags
(dashes or underscores); its values take precedence over the command
line. Output goes to ``--out``, else ``$KLSNMF_OUTPUT_DIR``, else
``./klsnmf-out``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import DataMatrix, fetch_dataset, load_dense_matrix, read_matrix, write_matrix
from .errors import KLSNMFError
from .evaluation import assign_clusters, evaluate
from .experiment import (DEFAULT_GRID, ExperimentSpec, baseline_compare, emit_traces,
                         load_spec_data, run_experiment)
from .factorization import SolverConfig, solve_klsnmf
from .kernel import KernelMatrix, kernel_distance, linear_kernel, rbf_kernel

log = logging.getLogger("klsnmf")

OUTPUT_ENV = "KLSNMF_OUTPUT_DIR"
_LIST_KEYS = {"n_values": int, "lambdas": float, "radii": float}
_BOOL_KEYS = {"labels", "rescale", "baseline", "traces", "no_guard", "verbose"}


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise KLSNMFError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _coerce(key, raw, current):
    if key in _LIST_KEYS:
        return [_LIST_KEYS[key](v) for v in raw.replace(",", " ").split()]
    if key in _BOOL_KEYS or isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    return raw


def apply_config(args):
    if getattr(args, "config", None):
        for key, raw in read_config(args.config).items():
            if not hasattr(args, key):
                raise KLSNMFError(f"unknown config key {key!r}")
            setattr(args, key, _coerce(key, raw, getattr(args, key)))
    return args


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(OUTPUT_ENV) or "klsnmf-out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _data_source(p):
    g = p.add_argument_group("data")
    g.add_argument("--data", help="dense text matrix, one sample per row")
    g.add_argument("--labels", action="store_true", help="last column holds class labels")
    g.add_argument("--blobs", type=int, help="use this many synthetic Gaussian blobs instead")
    g.add_argument("--per-cluster", type=int, default=50)
    g.add_argument("--noise-sd", type=float, default=1.0)
    g.add_argument("--separation", type=float, default=10.0)
    g.add_argument("--rescale", action="store_true", help="min-max rescale features")


def _common(p):
    p.add_argument("--config", help="key = value file overriding flags")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./klsnmf-out)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iterations", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--no-guard", action="store_true",
                   help="apply the coefficient update even when it raises the objective")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="klsnmf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="factorize one dataset or kernel")
    _data_source(p)
    _common(p)
    p.add_argument("--kernel", choices=("rbf", "linear", "precomputed"), default="rbf")
    p.add_argument("--kernel-file", help="precomputed kernel matrix (with --kernel precomputed)")
    p.add_argument("-k", "--k", type=int, help="number of clusters (default: number of classes)")
    p.add_argument("--lam", type=float, default=0.001)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--init", choices=("uniform", "scaled"), default="uniform")
    p.add_argument("--save-kernel", action="store_true", help="also write K.txt")

    for name, helptext in (("experiment", "grid sweep over class subsets"),
                           ("traces", "convergence traces at a single (lambda, radius)")):
        p = sub.add_parser(name, help=helptext)
        _data_source(p)
        _common(p)
        p.add_argument("--n-values", type=int, nargs="+")
        p.add_argument("--subsets", type=int, default=10)
        p.add_argument("--restarts", type=int, default=1)
        p.add_argument("--workers", type=int, default=1)
        if name == "experiment":
            p.add_argument("--lambdas", type=float, nargs="+", default=list(DEFAULT_GRID))
            p.add_argument("--radii", type=float, nargs="+", default=list(DEFAULT_GRID))
            p.add_argument("--baseline", action="store_true", help="also run plain NMF")
            p.add_argument("--traces", action="store_true", help="write per-run trace files")
        else:
            p.add_argument("--lam", type=float, default=0.001)
            p.add_argument("--radius", type=float, default=1.0)

    p = sub.add_parser("fetch-data", help="download a dataset listed in the manifest")
    p.add_argument("name")
    p.add_argument("--dest", default=os.path.join("~", ".cache", "klsnmf"))
    p.add_argument("--url", help="override the manifest URL")
    p.add_argument("--manifest", help="alternative manifest JSON")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _load_data(args) -> DataMatrix:
    if args.blobs:
        spec = _spec(args, lambdas=[0.0], radii=[1.0])
        return load_spec_data(spec)
    if not args.data:
        raise KLSNMFError("give --data or --blobs")
    return load_dense_matrix(args.data, has_labels=args.labels)


def _blob_spec(args):
    return {"clusters": args.blobs, "per_cluster": args.per_cluster,
            "noise_sd": args.noise_sd, "separation": args.separation, "seed": args.seed}


def _spec(args, lambdas, radii) -> ExperimentSpec:
    return ExperimentSpec(
        data_path=None if args.blobs else args.data,
        has_labels=True if args.blobs else args.labels,
        blobs=_blob_spec(args) if args.blobs else None,
        n_values=getattr(args, "n_values", None),
        subsets=getattr(args, "subsets", 10),
        lambdas=lambdas,
        radii=radii,
        seed=args.seed,
        restarts=getattr(args, "restarts", 1),
        max_iterations=args.max_iterations,
        tol=args.tol,
        rescale=args.rescale,
        descent_guard=not args.no_guard,
        workers=getattr(args, "workers", 1),
    )


def cmd_solve(args):
    out = _out_dir(args)
    if args.kernel == "precomputed":
        if not args.kernel_file:
            raise KLSNMFError("--kernel precomputed needs --kernel-file")
        K = KernelMatrix(read_matrix(args.kernel_file))
        data = _load_data(args) if (args.data or args.blobs) else None
    else:
        data = _load_data(args)
        K = rbf_kernel(data, args.radius, rescale=args.rescale) if args.kernel == "rbf" \
            else linear_kernel(data, rescale=args.rescale)
    k = args.k or (data.n_classes if data is not None else 0)
    if not k:
        raise KLSNMFError("give -k when the data has no labels")
    cfg = SolverConfig(k=k, lam=args.lam, max_iterations=args.max_iterations, tol=args.tol,
                       seed=args.seed, init_strategy=args.init, descent_guard=not args.no_guard)
    D = kernel_distance(K)
    F, trace = solve_klsnmf(K, cfg, D=D)
    part = assign_clusters(F.G)

    write_matrix(out / "W.txt", F.W)
    write_matrix(out / "G.txt", F.G)
    if args.save_kernel:
        write_matrix(out / "K.txt", np.asarray(K))
    with open(out / "trace.tsv", "w") as fh:
        fh.write("iteration\tobjective\tdelta_w\tdelta_g\n")
        for row in trace.rows():
            fh.write("\t".join(repr(x) for x in row) + "\n")
    record = {
        "config": {"k": cfg.k, "lam": cfg.lam, "radius": K.radius if args.kernel == "rbf" else None,
                   "kernel": args.kernel, "max_iterations": cfg.max_iterations, "tol": cfg.tol,
                   "epsilon": cfg.epsilon, "seed": cfg.seed, "init_strategy": cfg.init_strategy,
                   "descent_guard": cfg.descent_guard},
        "objective": trace.final_objective,
        "iterations": trace.n_iter,
        "termination": trace.reason,
        "kkt_w": trace.kkt_w,
        "kkt_g": trace.kkt_g,
        "orthogonality": trace.orthogonality,
        "guarded_steps": trace.guarded_steps,
        "zero_rows": list(part.flagged),
        "labels": [int(x) for x in part.labels],
    }
    if data is not None and data.labels is not None:
        record["metrics"] = evaluate(data.labels, part).as_dict()
    with open(out / "result.json", "w") as fh:
        json.dump(record, fh, indent=2)
    print(f"{trace.reason} after {trace.n_iter} iterations, objective {trace.final_objective:.6g}")
    if "metrics" in record:
        m = record["metrics"]
        print(f"accuracy {m['accuracy']:.4f}  nmi {m['nmi']:.4f}  purity {m['purity']:.4f}")
    print(f"wrote {out}")
    return 0


def _write_table(table, out, traces):
    table.write_jsonl(out / "results.jsonl")
    summary = table.summary()
    (out / "summary.txt").write_text(summary)
    if traces:
        emit_traces(table, out / "traces")
    print(summary, end="")
    print(f"wrote {out}")


def cmd_experiment(args):
    out = _out_dir(args)
    spec = _spec(args, args.lambdas, args.radii)
    table = baseline_compare(spec) if args.baseline else run_experiment(spec)
    _write_table(table, out, args.traces)
    return 0


def cmd_traces(args):
    out = _out_dir(args)
    spec = _spec(args, [args.lam], [args.radius])
    table = run_experiment(spec)
    paths = emit_traces(table, out / "traces")
    table.write_jsonl(out / "results.jsonl")
    for path in paths:
        print(path)
    return 0


def cmd_fetch(args):
    from .data import load_manifest
    manifest = load_manifest(args.manifest) if args.manifest else None
    path = fetch_dataset(args.name, os.path.expanduser(args.dest), manifest=manifest, url=args.url)
    print(path)
    return 0


COMMANDS = {"solve": cmd_solve, "experiment": cmd_experiment, "traces": cmd_traces,
            "fetch-data": cmd_fetch}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        apply_config(args)
        return COMMANDS[args.command](args)
    except (KLSNMFError, OSError) as exc:
        print(f"klsnmf: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
