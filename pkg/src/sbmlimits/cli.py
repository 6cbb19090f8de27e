"""Command-line surface tying the modules together.

Subcommands: gen, thresholds, lambda-star, q-functional, phi-scan, detect,
posterior, cycles, second-moment, sweep.  Exit codes: 0 success,
2 validation error, 3 budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import contiguity, detection, graphs, model, moments, sweep, thresholds
from .errors import BudgetExceededError, ValidationError


def _global_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--format", choices=("csv", "json"), default="json")
    parser.add_argument("--out", default=None, help="output path (default stdout)")


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(out, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def _dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2)


def _csv(rows: list[dict]) -> str:
    fields: list[str] = []
    for row in rows:
        for key in row:
            if key not in fields:
                fields.append(key)
    lines = [",".join(fields)]
    for row in rows:
        lines.append(",".join("" if row.get(k) is None else str(_jsonable(row.get(k)))
                              for k in fields))
    return "\n".join(lines) + "\n"


def _table(rows: list[dict], fmt: str, out: str | None) -> None:
    _emit(_csv(rows) if fmt == "csv" else _dump_json(rows), out)


def _symmetric_params(args) -> model.ModelParams:
    return model.build_symmetric(args.q, args.d, getattr(args, "lam"))


def _cmd_gen(args) -> int:
    if args.model == "er":
        g = graphs.sample_er(args.n, args.d, args.seed)
        sigma = None
    else:
        params = _symmetric_params(args)
        sample = graphs.sample_sbm(params, args.n, args.seed)
        g, sigma = sample.graph, sample.sigma
    _emit(graphs.edge_list_text(g), args.out)
    if sigma is not None and args.labels_out:
        graphs.write_labels(sigma, args.labels_out)
    return 0


def _cmd_thresholds(args) -> int:
    report = thresholds.threshold_report(args.q, args.lam, args.d)
    _emit(_dump_json(report.to_dict()), args.out)
    return 0


def _cmd_lambda_star(args) -> int:
    qs = [int(tok) for tok in args.q_list.split(",") if tok.strip()]
    rows = []
    for q in qs:
        row = {"q": q, "lambda_star": None, "error": None}
        try:
            row["lambda_star"] = thresholds.lambda_star(q)
        except ValidationError as exc:
            row["error"] = str(exc)
        rows.append(row)
    _table(rows, args.format, args.out)
    return 0


def _parse_matrix(text: str) -> np.ndarray:
    return np.array([[float(x) for x in row.split(",")]
                     for row in text.split(";")])


def _cmd_q_functional(args) -> int:
    if args.pi is not None or args.M is not None:
        if args.pi is None or args.M is None:
            raise ValidationError("--pi and --M must be given together")
        params = model.ModelParams(
            pi=np.array([float(x) for x in args.pi.split(",")]),
            M=_parse_matrix(args.M))
    else:
        params = _symmetric_params(args)
    res = contiguity.q_value(params.pi, contiguity.scaled_contrast(params),
                             restarts=args.restarts, seed=args.seed)
    payload = {
        "q_value": res.value,
        "hessian_ratio": res.hessian_ratio,
        "restarts_used": res.restarts_used,
        "converged": res.converged,
        "verdict": contiguity.regime_of_value(res.value).value,
        "argmax": res.argmax.alpha,
        "second_moment_product": contiguity.second_moment_product(params),
    }
    _emit(_dump_json(payload), args.out)
    return 0


def _cmd_phi_scan(args) -> int:
    q = args.q
    jq = np.full((q, q), 1.0 / q)
    if args.family == "identity":
        target = np.eye(q)
    else:
        perm = np.roll(np.arange(q), 1)
        target = np.zeros((q, q))
        target[np.arange(q), perm] = 1.0
    rows = []
    for t in np.linspace(0.0, 1.0, args.points):
        alpha = (1 - t) * jq + t * target
        rows.append({
            "t": float(t),
            "frobenius_sq": float(np.sum(alpha * alpha)),
            "entropy": contiguity.row_entropy(alpha),
            "phi": contiguity.phi(alpha, q, args.d, args.lam),
        })
    _table(rows, args.format, args.out)
    return 0


def _cmd_detect(args) -> int:
    g = graphs.read_edge_list(args.input)
    params = model.SymmetricParams(q=args.q, d=args.d, lam=args.lam)
    slack = None if args.slack == "auto" else float(args.slack)
    found = detection.exhaustive_good_search(g, params, slack=slack)
    payload: dict = {"n": g.n, "edges": g.m, "good_count": len(found),
                     "labelings": [lab.tolist() for lab in found]}
    if args.truth:
        truth = graphs.read_labels(args.truth)
        payload["overlaps"] = [detection.overlap(truth, lab, args.q)
                               for lab in found]
    _emit(_dump_json(payload), args.out)
    return 0


def _cmd_posterior(args) -> int:
    params = _symmetric_params(args)
    rep = detection.bayes_overlap_experiment(params, args.n, args.reps, args.seed)
    payload = {"n": rep.n, "reps": rep.reps, "mean_overlap": rep.mean,
               "stderr": rep.stderr}
    _emit(_dump_json(payload), args.out)
    return 0


def _cmd_cycles(args) -> int:
    params = _symmetric_params(args)
    rows = graphs.cycle_poisson_check(params, args.n, args.m_max, args.reps,
                                      args.seed, threads=args.threads)
    _table([r.__dict__ for r in rows], args.format, args.out)
    return 0


def _cmd_second_moment(args) -> int:
    params = _symmetric_params(args)
    rec = moments.exact_second_moment(params, args.n, args.a_n, budget=args.budget)
    _emit(_dump_json(rec.__dict__), args.out)
    return 0


def _cmd_sweep(args) -> int:
    with open(args.config) as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed config: {exc}") from exc
    result = sweep.run_sweep(config)
    if args.format == "csv":
        _emit(sweep.rows_to_csv(result), args.out)
    else:
        _emit(_dump_json(result), args.out)
    return 0


def _add_symmetric_args(parser, with_d: bool = True) -> None:
    parser.add_argument("--q", type=int, required=True)
    parser.add_argument("--lambda", dest="lam", type=float, required=True)
    if with_d:
        parser.add_argument("--d", type=float, required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sbmlimits")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="sample a block-model or Erdos-Renyi graph")
    p.add_argument("--model", choices=("sbm", "er"), default="sbm")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--d", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--labels-out", default=None)
    _global_flags(p)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("thresholds", help="threshold report for one point")
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--d", type=float, default=None)
    _global_flags(p)
    p.set_defaults(func=_cmd_thresholds)

    p = sub.add_parser("lambda-star", help="spectral-threshold crossings per q")
    p.add_argument("--q-list", required=True)
    _global_flags(p)
    p.set_defaults(func=_cmd_lambda_star)

    p = sub.add_parser("q-functional", help="coupling-ratio functional")
    p.add_argument("--q", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--d", type=float)
    p.add_argument("--pi", default=None, help="comma-separated probabilities")
    p.add_argument("--M", default=None, help="semicolon-separated rows")
    p.add_argument("--restarts", type=int, default=32)
    _global_flags(p)
    p.set_defaults(func=_cmd_q_functional)

    p = sub.add_parser("phi-scan", help="1-parameter scan of the symmetric objective")
    _add_symmetric_args(p)
    p.add_argument("--family", choices=("identity", "permutation"), default="identity")
    p.add_argument("--points", type=int, default=101)
    _global_flags(p)
    p.set_defaults(func=_cmd_phi_scan)

    p = sub.add_parser("detect", help="exhaustive good-partition search")
    p.add_argument("--input", required=True)
    _add_symmetric_args(p)
    p.add_argument("--slack", default="auto")
    p.add_argument("--truth", default=None)
    _global_flags(p)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("posterior", help="exact-posterior overlap experiment")
    _add_symmetric_args(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--reps", type=int, default=50)
    _global_flags(p)
    p.set_defaults(func=_cmd_posterior)

    p = sub.add_parser("cycles", help="short-cycle Poisson check")
    _add_symmetric_args(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m-max", type=int, default=5)
    p.add_argument("--reps", type=int, default=50)
    _global_flags(p)
    p.set_defaults(func=_cmd_cycles)

    p = sub.add_parser("second-moment", help="exact finite-n second moment")
    _add_symmetric_args(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--a-n", type=float, default=None)
    p.add_argument("--budget", type=int, default=moments.DEFAULT_BUDGET)
    _global_flags(p)
    p.set_defaults(func=_cmd_second_moment)

    p = sub.add_parser("sweep", help="run a config-driven experiment sweep")
    p.add_argument("--config", required=True)
    _global_flags(p)
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BudgetExceededError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
