"""Command-line interface.

Exit codes: 0 success, 2 invalid configuration, 3 data error, 4 numerical
failure.  Outputs are written atomically and only after all inputs have
been validated; cluster labels in every output file are 1-based.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .archive import load_archive, new_archive, save_archive
from .bmssr import BmssrHyper, MixtureParams, best_permutation, bmssr_fit, cluster_assign, responsibilities
from .bssr import BssrHyper, bssr_fit, fitted_surface
from .datasets import (
    SimulationConfig,
    atomic_write,
    lattice_points,
    load_dataset,
    pixel_points,
    simulate_surfaces,
    true_mean,
    write_surface_csv,
)
from .errors import DataFormatError, NumericalError
from .metrics import ari, sse
from .nbf import NodeGrid, design_matrix, node_grid

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

# "paper51" is kept as an alias of "radial"
TRUTH_FUNCTIONS = {"radial": true_mean, "paper51": true_mean}


class ConfigError(ValueError):
    pass


# --- parsing helpers -----------------------------------------------------

def parse_nodes(text: str) -> tuple[int, int]:
    parts = str(text).lower().split("x")
    try:
        if len(parts) == 1:
            d1 = d2 = int(parts[0])
        elif len(parts) == 2:
            d1, d2 = int(parts[0]), int(parts[1])
        else:
            raise ValueError
    except ValueError:
        raise ConfigError(f"node spec must look like 15x15, got {text!r}") from None
    if d1 < 1 or d2 < 1:
        raise ConfigError(f"node counts must be positive, got {text!r}")
    return d1, d2


def parse_domain(values) -> tuple[float, float, float, float]:
    if values is None:
        return None
    v = [float(x) for x in values]
    if len(v) == 2:
        v = v * 2
    if len(v) != 4:
        raise ConfigError("domain takes 2 (square) or 4 numbers")
    if not (v[1] > v[0] and v[3] > v[2]):
        raise ConfigError(f"degenerate domain {v}")
    return tuple(v)


def _check_output(path):
    if path is None:
        return
    parent = Path(path).parent
    if not parent.is_dir():
        raise ConfigError(f"output directory {parent} does not exist")
    if Path(path).is_dir():
        raise ConfigError(f"output path {path} is a directory")


def _check_input(path):
    if not Path(path).is_file():
        raise DataFormatError(f"input file {path} not found")


def _config(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _default_trace(out: str) -> str:
    p = Path(out)
    return str(p.with_name(p.stem + ".trace.csv"))


def _fmt(x) -> str:
    return repr(float(x))


# --- simulate ------------------------------------------------------------

def cmd_simulate(args) -> int:
    domain = parse_domain(args.domain)
    cfg = SimulationConfig(n=args.n, grid_side=args.grid, domain=domain, re_sd=args.re_sd,
                           noise_sd=args.noise_sd, re_mode=args.re_mode, seed=args.seed,
                           basis_nodes=parse_nodes(args.basis_nodes))
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _check_output(args.out)
    ds = simulate_surfaces(cfg)
    write_surface_csv(args.out, ds)
    print(f"wrote {args.out}: n={ds.n} surfaces, m={len(ds.values[0])} points each, "
          f"domain={list(domain)}, rows={ds.n * len(ds.values[0])}")
    return 0


# --- shared fit plumbing -------------------------------------------------

def _validate_fit_args(args):
    if args.iters <= args.burnin or args.burnin < 0:
        raise ConfigError(f"need --iters > --burnin >= 0 (got {args.iters}, {args.burnin})")
    if args.chains < 1:
        raise ConfigError("--chains must be positive")
    for name in ("a0", "b0", "g0", "h0", "prior_var"):
        if not getattr(args, name) > 0:
            raise ConfigError(f"--{name.replace('_', '-')} must be positive")
    parse_nodes(args.nodes)
    parse_domain(args.node_domain)
    _check_input(args.data)
    for p in (args.out, args.trace):
        _check_output(p)


def _prepare_data(args):
    ds = load_dataset(args.data, args.format, limit=args.limit, seed=args.subsample_seed)
    d1, d2 = parse_nodes(args.nodes)
    domain = parse_domain(args.node_domain)
    if domain is None:
        domain = tuple(ds.meta.get("pixel_domain") or ds.bounding_box())
    grid = node_grid(domain, d1, d2)
    return ds.with_grid(grid), grid


def _hyper_kw(args) -> dict:
    return dict(a0=args.a0, b0=args.b0, g0=args.g0, h0=args.h0)


def _run_chains(fn, jobs, chains: int):
    if chains == 1:
        return [fn(*jobs[0])]
    workers = max(1, min(chains, os.cpu_count() or 1))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def _data_meta(ds) -> dict:
    meta = {k: v for k, v in ds.meta.items() if k != "config"}
    meta["n"] = ds.n
    meta["m"] = [int(len(v)) for v in ds.values[:1]]
    if "config" in ds.meta:
        meta["simulation"] = ds.meta["config"]
    return meta


# --- fit-bssr ------------------------------------------------------------

def _bssr_job(ds, hyper, iters, burnin, seed, literal):
    return bssr_fit(ds, hyper, iterations=iters, burnin=burnin, seed=seed, literal=literal)


def cmd_fit_bssr(args) -> int:
    _validate_fit_args(args)
    if args.truth_fn is not None and args.truth_fn not in TRUTH_FUNCTIONS:
        raise ConfigError(f"unknown truth function {args.truth_fn!r}")
    trace_path = args.trace or _default_trace(args.out)
    _check_output(trace_path)

    ds, grid = _prepare_data(args)
    hyper = BssrHyper(mu0=np.full(grid.d, args.mu0), Sigma0=args.prior_var * np.eye(grid.d), **_hyper_kw(args))
    jobs = [(ds, hyper, args.iters, args.burnin, args.seed + c, args.paper_literal) for c in range(args.chains)]
    fits = _run_chains(_bssr_job, jobs, args.chains)

    beta = np.mean([f.beta for f in fits], axis=0)
    sigma2 = float(np.mean([f.sigma2 for f in fits]))
    xi2 = float(np.mean([f.xi2 for f in fits]))
    summary = {}
    if args.truth_fn is not None:
        pts = ds.points[0]
        summary["sse"] = sse(TRUTH_FUNCTIONS[args.truth_fn](pts), fitted_surface(beta, grid, pts))
        summary["sse_points"] = int(len(pts))
        if len(fits) > 1:
            summary["sse_per_chain"] = [sse(TRUTH_FUNCTIONS[args.truth_fn](pts), fitted_surface(f.beta, grid, pts))
                                        for f in fits]
    doc = new_archive(
        "bssr", fits[0].mode,
        config=_config(args),
        grid=grid.to_dict(),
        data=_data_meta(ds),
        settings={**fits[0].settings, "iterations": args.iters, "burnin": args.burnin, "seed": args.seed,
                  "chains": args.chains, "chain_seeds": [f.seed for f in fits]},
        posterior={"pi": [1.0], "beta": [beta], "sigma2": [sigma2], "xi2": [xi2]},
        summary=summary,
    )
    if len(fits) > 1:
        doc["chains"] = [{"seed": f.seed, "beta": f.beta.tolist(), "sigma2": f.sigma2, "xi2": f.xi2} for f in fits]
    if args.save_traces:
        doc["traces"] = {"sigma2": [f.sigma2_trace for f in fits], "xi2": [f.xi2_trace for f in fits],
                         "logpost": [f.logpost_trace for f in fits]}

    with atomic_write(trace_path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        multi = len(fits) > 1
        w.writerow((["chain"] if multi else []) + ["iter", "sigma2", "xi2", "logpost"])
        for c, f in enumerate(fits):
            for t in range(f.iterations):
                row = [t + 1, _fmt(f.sigma2_trace[t]), _fmt(f.xi2_trace[t]), _fmt(f.logpost_trace[t])]
                w.writerow(([c + 1] if multi else []) + row)
    save_archive(args.out, doc)

    print(f"fit-bssr: n={ds.n} d={grid.d1}x{grid.d2} iters={args.iters} burnin={args.burnin} "
          f"mode={fits[0].mode} sigma2={sigma2:.6g} xi2={xi2:.6g}")
    if "sse" in summary:
        print(f"SSE {summary['sse']!r}")
    return 0


# --- fit-bmssr -----------------------------------------------------------

def _bmssr_job(ds, K, hyper, iters, burnin, seed, literal, relabel, restarts):
    fit = bmssr_fit(ds, K, hyper, iterations=iters, burnin=burnin, seed=seed, literal=literal,
                    relabel=relabel, restarts=restarts)
    # drop the per-iteration random effects before crossing process boundaries
    fit.chain.b = None
    return fit


def _pool_mixtures(fits) -> MixtureParams:
    ref = fits[0].psi_hat
    aligned = [ref] + [f.psi_hat.permuted(best_permutation(ref.beta, f.psi_hat.beta)) for f in fits[1:]]
    pi = np.mean([p.pi for p in aligned], axis=0)
    return MixtureParams(pi=pi / pi.sum(), beta=np.mean([p.beta for p in aligned], axis=0),
                         b=np.mean([p.b for p in aligned], axis=0),
                         sigma2=np.mean([p.sigma2 for p in aligned], axis=0),
                         xi2=np.mean([p.xi2 for p in aligned], axis=0))


def cmd_fit_bmssr(args) -> int:
    _validate_fit_args(args)
    if args.k < 1:
        raise ConfigError("--k must be positive")
    if not args.alpha > 0:
        raise ConfigError("--alpha must be positive")
    trace_path = args.trace or _default_trace(args.out)
    for p in (trace_path, args.labels, args.responsibilities):
        _check_output(p)

    ds, grid = _prepare_data(args)
    K = args.k
    hyper = BmssrHyper(np.full(K, args.alpha),
                       BssrHyper(mu0=np.full(grid.d, args.mu0), Sigma0=args.prior_var * np.eye(grid.d),
                                 **_hyper_kw(args)))
    jobs = [(ds, K, hyper, args.iters, args.burnin, args.seed + c, args.paper_literal, not args.no_relabel,
             args.kmeans_restarts) for c in range(args.chains)]
    fits = _run_chains(_bmssr_job, jobs, args.chains)

    psi = fits[0].psi_hat if len(fits) == 1 else _pool_mixtures(fits)
    tau = fits[0].tau if len(fits) == 1 else responsibilities(ds, psi)
    z_hat = fits[0].z_hat if len(fits) == 1 else cluster_assign(ds, psi)
    summary = {"cluster_sizes": np.bincount(z_hat, minlength=K).tolist()}
    if ds.labels is not None:
        summary["ari"] = ari(z_hat, ds.labels)
        if len(fits) > 1:
            summary["ari_per_chain"] = [ari(f.z_hat, ds.labels) for f in fits]
    doc = new_archive(
        "bmssr", fits[0].mode,
        config=_config(args),
        grid=grid.to_dict(),
        data=_data_meta(ds),
        settings={**fits[0].settings, "iterations": args.iters, "burnin": args.burnin, "seed": args.seed,
                  "relabel": not args.no_relabel, "chains": args.chains, "chain_seeds": [f.seed for f in fits]},
        posterior={"pi": psi.pi, "beta": psi.beta, "sigma2": psi.sigma2, "xi2": psi.xi2},
        partition={"surface_id": ds.ids, "cluster": (z_hat + 1).tolist()},
        summary=summary,
    )
    if len(fits) > 1:
        doc["chains"] = [{"seed": f.seed, "pi": f.psi_hat.pi.tolist(), "beta": f.psi_hat.beta.tolist(),
                          "sigma2": f.psi_hat.sigma2.tolist(), "xi2": f.psi_hat.xi2.tolist()} for f in fits]
    if args.save_traces:
        doc["traces"] = {"loglik": [f.chain.loglik.tolist() for f in fits],
                         "pi": [f.chain.pi.tolist() for f in fits],
                         "sigma2": [f.chain.sigma2.tolist() for f in fits],
                         "xi2": [f.chain.xi2.tolist() for f in fits]}

    with atomic_write(trace_path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        multi = len(fits) > 1
        head = ["iter", "loglik"] + [f"{p}_{k + 1}" for p in ("pi", "sigma2", "xi2") for k in range(K)]
        w.writerow((["chain"] if multi else []) + head)
        for c, f in enumerate(fits):
            ch = f.chain
            for t in range(len(ch)):
                row = [t + 1, _fmt(ch.loglik[t])] + [_fmt(v) for v in (*ch.pi[t], *ch.sigma2[t], *ch.xi2[t])]
                w.writerow(([c + 1] if multi else []) + row)
    if args.labels:
        with atomic_write(args.labels) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["surface_id", "cluster"])
            for sid, z in zip(ds.ids, z_hat):
                w.writerow([sid, int(z) + 1])
    if args.responsibilities:
        with atomic_write(args.responsibilities) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["surface_id"] + [f"tau_{k + 1}" for k in range(K)])
            for sid, row in zip(ds.ids, tau):
                w.writerow([sid] + [_fmt(v) for v in row])
    save_archive(args.out, doc)

    print(f"fit-bmssr: n={ds.n} K={K} d={grid.d1}x{grid.d2} iters={args.iters} burnin={args.burnin} "
          f"mode={fits[0].mode} sizes={summary['cluster_sizes']}")
    if "ari" in summary:
        print(f"ARI {summary['ari']!r}")
    return 0


# --- export-means --------------------------------------------------------

def cmd_export_means(args) -> int:
    _check_input(args.fit)
    _check_output(args.out)
    side = parse_nodes(args.grid)
    doc = load_archive(args.fit)
    try:
        grid = NodeGrid.from_dict(doc["grid"])
        beta = np.asarray(doc["posterior"]["beta"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{args.fit}: malformed archive ({exc})") from None
    if beta.ndim != 2 or beta.shape[1] != grid.d:
        raise DataFormatError(f"{args.fit}: posterior beta has shape {beta.shape}, grid has d={grid.d}")
    domain = parse_domain(args.domain) or grid.domain
    if args.layout == "pixel":
        pts = pixel_points(side[1], side[0], domain)
    else:
        if side[0] != side[1]:
            lo1, hi1, lo2, hi2 = domain
            g1, g2 = np.meshgrid(np.linspace(lo1, hi1, side[0]), np.linspace(lo2, hi2, side[1]))
            pts = np.column_stack([g1.ravel(), g2.ravel()])
        else:
            pts = lattice_points(side[0], domain)
    S = design_matrix(pts, grid)
    with atomic_write(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "x1", "x2", "mu"])
        for k, bk in enumerate(beta):
            mu = S @ bk
            for (x1, x2), v in zip(pts, mu):
                w.writerow([k + 1, _fmt(x1), _fmt(x2), _fmt(v)])
    print(f"wrote {args.out}: {beta.shape[0]} component(s) x {len(pts)} points")
    return 0


# --- ari -----------------------------------------------------------------

def read_labels(path) -> dict:
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or len(header) < 2 or header[0].strip() != "surface_id":
            raise DataFormatError(f"{path}: header must start with surface_id", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 2:
                raise DataFormatError(f"{path}: expected surface_id and a label", lineno)
            if row[0] in out:
                raise DataFormatError(f"{path}: duplicate surface_id {row[0]!r}", lineno)
            out[row[0]] = row[1]
    return out


def cmd_ari(args) -> int:
    _check_input(args.pred)
    _check_input(args.truth)
    pred = read_labels(args.pred)
    truth = read_labels(args.truth)
    missing_t = [s for s in pred if s not in truth]
    missing_p = [s for s in truth if s not in pred]
    if missing_t or missing_p:
        msg = []
        if missing_t:
            msg.append(f"missing from {args.truth}: {', '.join(missing_t[:20])}")
        if missing_p:
            msg.append(f"missing from {args.pred}: {', '.join(missing_p[:20])}")
        raise DataFormatError("surface ids do not match; " + "; ".join(msg))
    ids = list(pred)
    print(repr(ari([pred[s] for s in ids], [truth[s] for s in ids])))
    return 0


# --- rerun ---------------------------------------------------------------

RERUN_OUTPUTS = ("out", "trace", "labels", "responsibilities")


def cmd_rerun(args) -> int:
    _check_input(args.archive)
    doc = load_archive(args.archive)
    cfg = dict(doc["config"])
    command = cfg.get("command")
    if command not in ("fit-bssr", "fit-bmssr"):
        raise DataFormatError(f"{args.archive}: cannot rerun command {command!r}")
    for key in RERUN_OUTPUTS:
        override = getattr(args, key, None)
        if key == "out":
            cfg["out"] = override
        elif override is not None:
            cfg[key] = override
        else:
            # never overwrite the original run's side outputs
            cfg[key] = None
    return COMMANDS[command](argparse.Namespace(**cfg))


COMMANDS = {
    "simulate": cmd_simulate,
    "fit-bssr": cmd_fit_bssr,
    "fit-bmssr": cmd_fit_bmssr,
    "export-means": cmd_export_means,
    "ari": cmd_ari,
    "rerun": cmd_rerun,
}


# --- argument parser -----------------------------------------------------

def _fit_options(p, iters, burnin):
    p.add_argument("--data", required=True, help="surface CSV or ZIPcode text file")
    p.add_argument("--format", choices=("auto", "csv", "zipcode"), default="auto")
    p.add_argument("--limit", type=int, default=None, help="random subsample size")
    p.add_argument("--subsample-seed", type=int, default=None,
                   help="seed for --limit subsampling (defaults to --seed)")
    p.add_argument("--nodes", default="15x15", help="NBF lattice, e.g. 15x15")
    p.add_argument("--node-domain", nargs="+", type=float, default=None, metavar="X",
                   help="lo1 hi1 [lo2 hi2]; defaults to the data bounding box")
    p.add_argument("--iters", type=int, default=iters)
    p.add_argument("--burnin", type=int, default=burnin)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--paper-literal", action="store_true",
                   help="use the conditionals exactly as originally printed")
    p.add_argument("--mu0", type=float, default=0.0)
    p.add_argument("--prior-var", type=float, default=100.0, help="Sigma0 = prior_var * I")
    p.add_argument("--a0", type=float, default=2.0)
    p.add_argument("--b0", type=float, default=1.0)
    p.add_argument("--g0", type=float, default=2.0)
    p.add_argument("--h0", type=float, default=1.0)
    p.add_argument("--out", required=True, help="archive path (JSON)")
    p.add_argument("--trace", default=None, help="trace CSV (default: <out>.trace.csv)")
    p.add_argument("--save-traces", action="store_true", help="also embed traces in the archive")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="surfmix", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"surfmix {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate noisy replicates of the radial test surface")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--grid", type=int, default=21, help="points per axis")
    p.add_argument("--domain", nargs="+", type=float, default=[-10.0, 10.0], metavar="X")
    p.add_argument("--re-sd", type=float, default=0.1)
    p.add_argument("--noise-sd", type=float, default=0.1)
    p.add_argument("--re-mode", choices=("pointwise", "basis"), default="pointwise")
    p.add_argument("--basis-nodes", default="15x15", help="coefficient lattice for --re-mode basis")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit-bssr", help="fit the single-population model")
    _fit_options(p, 1000, 500)
    p.add_argument("--truth-fn", default=None, help="built-in truth for SSE (radial)")

    p = sub.add_parser("fit-bmssr", help="fit the K-component mixture")
    _fit_options(p, 1500, 750)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--alpha", type=float, default=1.0, help="symmetric Dirichlet parameter")
    p.add_argument("--no-relabel", action="store_true", help="average draws without relabelling")
    p.add_argument("--kmeans-restarts", type=int, default=25)
    p.add_argument("--labels", default=None, help="hard partition CSV")
    p.add_argument("--responsibilities", default=None, help="responsibilities CSV")

    p = sub.add_parser("export-means", help="evaluate fitted mean surfaces on a lattice")
    p.add_argument("--fit", required=True)
    p.add_argument("--grid", default="21", help="lattice size, e.g. 16 or 16x16")
    p.add_argument("--domain", nargs="+", type=float, default=None, metavar="X")
    p.add_argument("--layout", choices=("lattice", "pixel"), default="lattice",
                   help="lattice: x1 fastest from the bottom row; pixel: row-major from top-left")
    p.add_argument("--out", required=True)

    p = sub.add_parser("ari", help="adjusted Rand index between two label files")
    p.add_argument("pred")
    p.add_argument("truth")

    p = sub.add_parser("rerun", help="re-execute a recorded fit")
    p.add_argument("archive")
    p.add_argument("--out", required=True)
    p.add_argument("--trace", default=None)
    p.add_argument("--labels", default=None)
    p.add_argument("--responsibilities", default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "subsample_seed", "absent") is None:
        args.subsample_seed = args.seed
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"surfmix: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, FileNotFoundError, OSError) as exc:
        print(f"surfmix: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"surfmix: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"surfmix: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
