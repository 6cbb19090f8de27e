"""Experiment orchestration with full provenance.

A sweep config is a JSON object:

    {
      "seed": 1234,
      "experiments": ["thresholds", "lambda_star", "q_functional",
                      "cycles", "second_moment", "bayes_overlap"],
      "points": [
        {"q": 3, "lambda": 0.3, "d": 2.5},
        {"q": 4, "lambda": -0.2, "d_factor": 0.95, "d_ref": "d_lower",
         "n": 2000, "reps": 50, "m_max": 5, "restarts": 16}
      ],
      "lambda_star_q": [5, 6, 7]
    }

Each selected experiment is run over the relevant config entries; failures
produce error rows instead of aborting the sweep.  Output rows carry the
config hash, the master seed, and a per-row seed, and reruns of the same
config are byte-identical.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from . import contiguity, detection, graphs, model, moments, thresholds
from .errors import ValidationError

EXPERIMENTS = ("thresholds", "lambda_star", "q_functional", "cycles",
               "second_moment", "bayes_overlap")


def _resolve_degree(point: dict) -> float | None:
    if point.get("d") is not None:
        return float(point["d"])
    if point.get("d_factor") is not None:
        ref = point.get("d_ref", "d_lower")
        q = int(point["q"])
        lam = float(point["lambda"])
        base = {
            "d_lower": thresholds.d_lower,
            "d_upper": thresholds.d_upper,
            "kesten_stigum": lambda q, lam: thresholds.kesten_stigum(lam),
        }.get(ref)
        if base is None:
            raise ValidationError(f"unknown d_ref {ref!r}")
        return float(point["d_factor"]) * base(q, lam)
    return None


def _row_base(experiment: str, point: dict, seed: int) -> dict:
    return {
        "experiment": experiment,
        "q": point.get("q"),
        "lambda": point.get("lambda"),
        "n": point.get("n"),
        "seed": seed,
        "error": None,
    }


def _run_point(experiment: str, point: dict, seed: int) -> dict:
    row = _row_base(experiment, point, seed)
    q = int(point["q"])
    lam = float(point["lambda"])
    d = _resolve_degree(point)
    row["d"] = d
    if experiment == "thresholds":
        rep = thresholds.threshold_report(q, lam, d)
        row.update({k: v for k, v in rep.to_dict().items()
                    if k not in ("q", "lambda", "d")})
    elif experiment == "q_functional":
        if d is None:
            raise ValidationError("q_functional needs d or d_factor")
        params = model.build_symmetric(q, d, lam)
        res = contiguity.q_value(params.pi, contiguity.scaled_contrast(params),
                                 restarts=int(point.get("restarts", 32)), seed=seed)
        row.update({
            "q_value": res.value,
            "hessian_ratio": res.hessian_ratio,
            "converged": res.converged,
            "verdict": contiguity.regime_of_value(res.value).value,
        })
        pm = contiguity.phi_max(q, d, lam,
                                restarts=int(point.get("restarts", 32)), seed=seed)
        row["phi_max"] = pm.value
    elif experiment == "cycles":
        if d is None:
            raise ValidationError("cycles needs d or d_factor")
        params = model.build_symmetric(q, d, lam)
        rows = graphs.cycle_poisson_check(
            params, int(point["n"]), int(point.get("m_max", 5)),
            int(point.get("reps", 50)), seed)
        row["cycles"] = [r.__dict__ for r in rows]
    elif experiment == "second_moment":
        if d is None:
            raise ValidationError("second_moment needs d or d_factor")
        params = model.build_symmetric(q, d, lam)
        rec = moments.exact_second_moment(params, int(point["n"]),
                                          point.get("a_n"))
        row.update({"value": rec.value, "asymptote": rec.asymptote,
                    "a_n": rec.a_n, "matrices": rec.matrices})
    elif experiment == "bayes_overlap":
        if d is None:
            raise ValidationError("bayes_overlap needs d or d_factor")
        params = model.build_symmetric(q, d, lam)
        rep = detection.bayes_overlap_experiment(
            params, int(point["n"]), int(point.get("reps", 50)), seed)
        row.update({"mean_overlap": rep.mean, "stderr": rep.stderr,
                    "reps": rep.reps})
    else:  # pragma: no cover - guarded by caller
        raise ValidationError(f"unknown experiment {experiment!r}")
    return row


def run_sweep(config: dict) -> dict:
    """Execute the configured experiments; returns {provenance, rows}."""
    if not isinstance(config, dict):
        raise ValidationError("config must be a JSON object")
    experiments = config.get("experiments", [])
    unknown = [e for e in experiments if e not in EXPERIMENTS]
    if unknown:
        raise ValidationError(f"unknown experiments: {unknown}")
    points = config.get("points", [])
    master_seed = int(config.get("seed", 0))

    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    config_hash = hashlib.sha256(canonical.encode()).hexdigest()

    jobs: list[tuple[str, dict]] = []
    for experiment in experiments:
        if experiment == "lambda_star":
            for q in config.get("lambda_star_q", []):
                jobs.append((experiment, {"q": int(q)}))
        else:
            for point in points:
                jobs.append((experiment, point))

    seeds = (np.random.SeedSequence(master_seed).generate_state(len(jobs), dtype=np.uint64)
             if jobs else np.empty(0, dtype=np.uint64))

    rows = []
    for (experiment, point), seed in zip(jobs, seeds):
        seed = int(seed)
        if experiment == "lambda_star":
            row = {"experiment": experiment, "q": point["q"], "seed": seed,
                   "error": None}
            try:
                row["lambda_star"] = thresholds.lambda_star(point["q"])
            except Exception as exc:
                row["error"] = str(exc)
            rows.append(row)
            continue
        try:
            rows.append(_run_point(experiment, point, seed))
        except Exception as exc:
            row = _row_base(experiment, point, seed)
            row["error"] = str(exc)
            rows.append(row)

    return {
        "provenance": {"config_sha256": config_hash, "master_seed": master_seed},
        "rows": rows,
    }


def rows_to_csv(result: dict) -> str:
    """Flat CSV rendering with provenance comment lines."""
    rows = result["rows"]
    fields: list[str] = []
    for row in rows:
        for key in row:
            if key not in fields:
                fields.append(key)
    lines = [f"# config_sha256={result['provenance']['config_sha256']}",
             f"# master_seed={result['provenance']['master_seed']}",
             ",".join(fields)]
    for row in rows:
        cells = []
        for key in fields:
            value = row.get(key)
            if isinstance(value, (list, dict)):
                value = json.dumps(value, separators=(",", ":")).replace(",", ";")
            cells.append("" if value is None else str(value))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
