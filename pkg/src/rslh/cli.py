"""Batch front end: ``rslh {train,boost,encode,eval,bench}``.

Results go to stdout as JSON, diagnostics to stderr. Every flag can also be
set in a flat ``key=value`` file passed with ``--config``; command-line flags
win over the file.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from contextlib import nullcontext
from pathlib import Path

from . import dataio
from .boosting import balance_degree, boost
from .core import Hyperparams, encode, train
from .evaluation import baseline_random_rotation, evaluate


class CliError(Exception):
    pass


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _add_hyper(p):
    g = p.add_argument_group("hyperparameters")
    g.add_argument("--bits", "-L", type=_positive_int, default=4, help="code length L")
    g.add_argument("--alpha", type=float, default=3.0)
    g.add_argument("--beta", type=float, default=1e-2)
    g.add_argument("--gamma", type=float, default=1e-5)
    g.add_argument("--mu", type=float, default=1e-5)
    g.add_argument("--lam", type=float, default=1e-6)
    g.add_argument("--max-iters", type=int, default=30)
    g.add_argument("--rel-tol", type=float, default=1e-4)
    g.add_argument("--anchors", type=_positive_int, default=None, help="anchor count d (default min(n, 1000))")
    g.add_argument("--sigma", type=float, default=None, help="RBF bandwidth (default: mean-distance heuristic)")


def _add_common(p):
    p.add_argument("--config", type=Path, help="flat key=value file with defaults for any flag")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive_int, default=None, help="BLAS threads (default: all cores)")


def _add_inputs(p):
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--features-format", choices=("binary", "csv"), default="binary")
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--classes", type=_positive_int, default=None, help="class count c (default: max label + 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rslh", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a plain model")
    _add_common(p)
    _add_inputs(p)
    _add_hyper(p)
    p.add_argument("--out", type=Path, required=True, help="model file (SLHM)")
    p.add_argument("--trace", type=Path, default=None, help="objective trace CSV (default: <out>.trace.csv)")

    p = sub.add_parser("boost", help="train T models and select bits")
    _add_common(p)
    _add_inputs(p)
    _add_hyper(p)
    p.add_argument("--runs", "-T", type=int, default=3)
    p.add_argument("--cluster-seed", type=int, default=None)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("encode", help="encode features with a model")
    _add_common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--features-format", choices=("binary", "csv"), default="binary")
    p.add_argument("--out", type=Path, required=True, help="code file (SLHC)")

    p = sub.add_parser("eval", help="Hamming-ranking metrics for query/database codes")
    _add_common(p)
    p.add_argument("--query-codes", type=Path, required=True)
    p.add_argument("--db-codes", type=Path, required=True)
    p.add_argument("--query-labels", type=Path, required=True)
    p.add_argument("--db-labels", type=Path, required=True)
    p.add_argument("--k", type=_positive_int, default=100)
    p.add_argument("--out", type=Path, default=None, help="also write the JSON report here")
    p.add_argument("--per-query", type=Path, default=None, help="per-query CSV")

    p = sub.add_parser("bench", help="compare RSLH, boosted RSLH and a random-rotation baseline on Gaussian blobs")
    _add_common(p)
    _add_hyper(p)
    p.set_defaults(anchors=300)
    p.add_argument("--n-db", type=_positive_int, default=2000)
    p.add_argument("--n-query", type=_positive_int, default=200)
    p.add_argument("--dim", type=_positive_int, default=32)
    p.add_argument("--classes", type=_positive_int, default=10)
    p.add_argument("--runs", "-T", type=int, default=3)
    p.add_argument("--k", type=_positive_int, default=100)
    p.add_argument("--out", type=Path, default=None)
    return parser


def _read_config(path: Path) -> dict:
    values = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    config = _read_config(args.config)
    # re-parse with file values as defaults so explicit flags still win
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    for key, value in config.items():
        if key not in known or key in ("help", "config"):
            raise CliError(f"{args.config}: unknown key {key!r}")
        action = known[key]
        sub.set_defaults(**{key: action.type(value) if action.type else value})
        action.required = False
    return parser.parse_args(argv)


def _hyper(args) -> Hyperparams:
    return Hyperparams(
        L=args.bits, alpha=args.alpha, beta=args.beta, gamma=args.gamma, mu=args.mu, lam=args.lam,
        max_iters=args.max_iters, rel_tol=args.rel_tol, n_anchors=args.anchors, sigma=args.sigma,
    )


def _dataset(args) -> dataio.Dataset:
    features = dataio.load_features(args.features, args.features_format)
    labels = dataio.load_labels(args.labels)
    if labels.size != features.shape[1]:
        raise CliError(f"{labels.size} labels for {features.shape[1]} samples")
    c = args.classes or int(labels.max()) + 1
    return dataio.Dataset(features, labels, max(c, 2))


def _emit(payload: dict, out: Path | None = None) -> None:
    text = json.dumps(payload)
    if out is not None:
        dataio.atomic_write(out, (text + "\n").encode("utf-8"))
    print(text)


def cmd_train(args) -> None:
    ds = _dataset(args)
    model = train(ds, _hyper(args), args.seed)
    trace_path = args.trace or args.out.with_name(args.out.name + ".trace.csv")
    rows = "".join(f"{i},{v!r}\n" for i, v in enumerate(model.objective_trace))
    dataio.save_model(model, args.out)
    dataio.atomic_write(trace_path, ("iteration,objective\n" + rows).encode("utf-8"))
    _emit({"objective": model.objective_trace[-1], "sweeps": model.n_sweeps, "model": str(args.out), "trace": str(trace_path)})


def cmd_boost(args) -> None:
    if args.runs < 1:
        raise CliError(f"--runs must be >= 1, got {args.runs}")
    ds = _dataset(args)
    model = boost(ds, _hyper(args), args.runs, seed=args.seed, cluster_seed=args.cluster_seed)
    dataio.save_model(model, args.out)
    _emit({
        "model": str(args.out),
        "runs": args.runs,
        "selected": model.selected.tolist(),
        "balance_degrees": [balance_degree(h) for h in model.H],
        "fallback": model.used_fallback,
    })


def cmd_encode(args) -> None:
    model = dataio.load_model(args.model)
    features = dataio.load_features(args.features, args.features_format)
    codes = encode(model, features)
    dataio.save_codes(codes, args.out)
    _emit({"codes": str(args.out), "code_length": int(codes.shape[0]), "n": int(codes.shape[1])})


def cmd_eval(args) -> None:
    report = evaluate(
        dataio.load_codes(args.query_codes), dataio.load_codes(args.db_codes),
        dataio.load_labels(args.query_labels), dataio.load_labels(args.db_labels), k=args.k,
    )
    if args.per_query is not None:
        report.write_per_query_csv(args.per_query)
    _emit(report.to_dict(), args.out)


def run_bench(n_db=2000, n_query=200, dim=32, classes=10, hyper=None, runs=3, seed=0, k=100) -> dict:
    """Desk-scale comparison on Gaussian blobs; returns the JSON payload."""
    hyper = hyper or Hyperparams(L=4, n_anchors=300)
    start = time.perf_counter()
    ds = dataio.make_blobs(n_db + n_query, dim, classes, seed)
    query, db = dataio.split(ds, dataio.SplitSpec(n_query / (n_db + n_query), seed))
    out = {}

    model = train(db, hyper, seed)
    out["rslh"] = evaluate(encode(model, query.features), encode(model, db.features), query.labels, db.labels, k).to_dict()
    out["rslh"]["sweeps"] = model.n_sweeps

    boosted = boost(db, hyper, runs, seed=seed)
    out["rslh_boosted"] = evaluate(boosted.encode(query.features), boosted.encode(db.features), query.labels, db.labels, k).to_dict()

    mean = db.features.mean(axis=1, keepdims=True)
    qb = baseline_random_rotation(query.features, hyper.L, seed, mean)
    dbb = baseline_random_rotation(db.features, hyper.L, seed, mean)
    out["baseline"] = evaluate(qb, dbb, query.labels, db.labels, k).to_dict()
    out["seconds"] = time.perf_counter() - start
    return out


def cmd_bench(args) -> None:
    if args.runs < 1:
        raise CliError(f"--runs must be >= 1, got {args.runs}")
    payload = run_bench(args.n_db, args.n_query, args.dim, args.classes, _hyper(args), args.runs, args.seed, args.k)
    _emit(payload, args.out)


COMMANDS = {"train": cmd_train, "boost": cmd_boost, "encode": cmd_encode, "eval": cmd_eval, "bench": cmd_bench}


def _thread_limit(threads):
    if threads is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=threads)


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        with _thread_limit(args.threads):
            COMMANDS[args.command](args)
    except (CliError, OSError, ValueError) as exc:
        print(f"rslh: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
