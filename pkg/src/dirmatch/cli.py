"""Command-line front end: ``dirmatch {match,eval,eigs,lmd,thm1}``.

Exit codes: 0 success, 1 usage/parse/config/input errors, 2 runtime errors.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    BudgetExceeded, ConfigError, DimensionMismatch, DirMatchError, LengthMismatch, ParseError,
)
from .evaluation import geodesic_error
from .experiments import involution_probability, perturbation_experiment, write_stats_csv
from .io import atomic_write_text, load_shape, read_correspondence
from .lmd import lmd_field
from .pipeline import RunManifest, make_config, read_config_file, run_pipeline
from .spectral import cached_embedding, save_embedding, shape_hash

INPUT_ERRORS = (ParseError, ConfigError, LengthMismatch, DimensionMismatch, BudgetExceeded)
INIT_NAMES = {"shot": "descriptor", "landmarks": "landmarks", "file": "file"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _threads(n):
    """Cap BLAS/OpenMP pools; 0 leaves the library defaults."""
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def cmd_match(args):
    if args.init == "landmarks" and not args.landmarks:
        raise UsageError("--init landmarks requires --landmarks FILE")
    if args.init == "file" and not args.init_map:
        raise UsageError("--init file requires --init-map FILE")
    file_values = read_config_file(args.config) if args.config else None
    cfg = make_config(
        file_values,
        mode=args.mode, K=args.k_max, max_iters=args.max_iters,
        init=INIT_NAMES[args.init] if args.init else None,
        prune=True if args.prune else None,
    )
    result = run_pipeline(args.src, args.dst, cfg, args.out, landmarks=args.landmarks,
                          init_map=args.init_map, cache_dir=args.cache)
    print(f"matched {len(result.correspondence)} points in {len(result.trace)} iterations")
    return 0


def cmd_eval(args):
    manifest = RunManifest("eval")
    start = time.perf_counter()
    mesh2 = load_shape(args.dst)
    T = read_correspondence(args.map, n_target=mesh2.n)
    T_gt = read_correspondence(args.gt, n_target=mesh2.n)
    if len(T) != len(T_gt):
        raise LengthMismatch(f"map has {len(T)} entries, ground truth has {len(T_gt)}")
    curve = geodesic_error(T, T_gt, mesh2, diameter=args.diameter,
                           max_threshold=args.max_threshold, points=args.points)
    manifest.stages["eval"] = time.perf_counter() - start
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    curve.to_csv(out / "curve.csv")
    curve.per_point_csv(out / "errors.csv")
    for p in (args.dst, args.map, args.gt):
        manifest.add_input(p)
    manifest.config = (f"diameter = {curve.diameter!r}\nmax_threshold = {args.max_threshold}\n"
                       f"points = {args.points}")
    manifest.outputs = ["curve.csv", "errors.csv"]
    manifest.write(out)
    print(f"auc {curve.auc!r}")
    print(f"mean_error {curve.mean_error!r}")
    return 0


def cmd_eigs(args):
    shape = load_shape(args.shape, k_local=args.k_local)
    K = min(args.k, shape.n - 1)
    start = time.perf_counter()
    emb = cached_embedding(shape, K, args.cache)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = f"emb_{shape_hash(shape, K)}.npz"
    save_embedding(emb, out / name)
    atomic_write_text(out / "evals.csv", "index,eigenvalue\n" + "".join(
        f"{i},{v!r}\n" for i, v in enumerate(emb.evals.tolist())))
    manifest = RunManifest("eigs", f"K = {K}\nk_local = {args.k_local}")
    manifest.add_input(args.shape)
    manifest.stages["eigs"] = time.perf_counter() - start
    manifest.outputs = [name, "evals.csv"]
    manifest.write(out)
    print(f"K {K} lambda_max {float(emb.evals[-1])!r}")
    return 0


def cmd_lmd(args):
    mesh1 = load_shape(args.src)
    mesh2 = load_shape(args.dst)
    T = read_correspondence(args.map, n=mesh1.n, n_target=mesh2.n)
    start = time.perf_counter()
    field = lmd_field(mesh1, mesh2, T, args.ring_depth, args.cap)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    field.to_csv(out / "lmd.csv")
    manifest = RunManifest("lmd", f"ring_depth = {args.ring_depth}\nlmd_cap = {args.cap}")
    for p in (args.src, args.dst, args.map):
        manifest.add_input(p)
    manifest.stages["lmd"] = time.perf_counter() - start
    manifest.outputs = ["lmd.csv"]
    manifest.write(out)
    finite = field.values[np.isfinite(field.values)]
    median = float(np.median(finite)) if len(finite) else float("inf")
    print(f"lmd_median {median!r}")
    return 0


def cmd_thm1(args):
    if args.n2 < 1 or args.k < 1 or args.trials < 0 or args.n < max(args.k, args.n2):
        raise UsageError(f"invalid sizes n2={args.n2}, k={args.k}, n={args.n}, trials={args.trials}")
    eta = involution_probability(args.n2)
    print(f"eta {eta!r}")
    start = time.perf_counter()
    stats = perturbation_experiment(args.k, args.n, args.n2, args.trials, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_stats_csv(out / "perturbation.csv", [stats])
    manifest = RunManifest("thm1", f"n2 = {args.n2}\nk = {args.k}\nn = {args.n}\n"
                                   f"trials = {args.trials}\nseed = {args.seed}\neta = {eta!r}")
    manifest.stages["perturbation"] = time.perf_counter() - start
    manifest.outputs = ["perturbation.csv"]
    manifest.write(out)
    if stats.trials:
        print(f"median_error {stats.median!r}")
    return 0


def build_parser():
    p = _Parser(prog="dirmatch", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--threads", type=int, default=0, help="cap on worker threads (0 = auto)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    m = sub.add_parser("match", help="dense correspondence between two shapes")
    m.add_argument("--src", required=True)
    m.add_argument("--dst", required=True)
    m.add_argument("--mode", choices=("spectral", "gds"))
    m.add_argument("--k-max", type=int, dest="k_max")
    m.add_argument("--max-iters", type=int, dest="max_iters")
    m.add_argument("--init", choices=tuple(INIT_NAMES))
    m.add_argument("--landmarks", help="file of 'source target' index pairs")
    m.add_argument("--init-map", dest="init_map", help="initial correspondence for --init file")
    m.add_argument("--config", help="flat key = value file of DirConfig fields")
    m.add_argument("--prune", action="store_true", help="drop points failing the final LMD threshold")
    m.add_argument("--cache", help="embedding cache directory (default OUT/cache)")
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_match)

    e = sub.add_parser("eval", help="geodesic error curve against ground truth")
    e.add_argument("--map", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--dst", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--diameter", type=float)
    e.add_argument("--max-threshold", type=float, default=0.25, dest="max_threshold")
    e.add_argument("--points", type=int, default=100)
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("eigs", help="precompute a spectral embedding")
    g.add_argument("--shape", required=True)
    g.add_argument("--k", type=int, default=500)
    g.add_argument("--k-local", type=int, default=10, dest="k_local")
    g.add_argument("--cache")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_eigs)

    d = sub.add_parser("lmd", help="export the LMD field of a correspondence")
    d.add_argument("--src", required=True)
    d.add_argument("--dst", required=True)
    d.add_argument("--map", required=True)
    d.add_argument("--ring-depth", type=int, default=2, dest="ring_depth")
    d.add_argument("--cap", type=float, default=0.3)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_lmd)

    t = sub.add_parser("thm1", help="involution probability and perturbation experiment")
    t.add_argument("--n2", type=int, required=True)
    t.add_argument("--k", type=int, default=50)
    t.add_argument("--n", type=int, default=5000)
    t.add_argument("--trials", type=int, default=50)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", default="thm1_out")
    t.set_defaults(func=cmd_thm1)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _threads(args.threads):
            return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dirmatch: error: {exc}", file=sys.stderr)
        return 1
    except INPUT_ERRORS as exc:
        print(f"dirmatch: error: {exc}", file=sys.stderr)
        return 1
    except (DirMatchError, ValueError, OSError) as exc:
        print(f"dirmatch: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
