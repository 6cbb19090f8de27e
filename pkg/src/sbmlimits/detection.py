"""Overlap metric, good-partition machinery, exhaustive search, and the
exact Bayes posterior at desk scale.

Overlap between two labelings is the permutation-maximized, chance-corrected
agreement; the q x q assignment is solved exactly.  The exact posterior sums
the joint density over all q^n labelings and is guarded accordingly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import BudgetExceededError, ValidationError
from .graphs import Graph, replica_seeds, sample_sbm
from .model import ModelParams, SymmetricParams

# Enumeration guards.
EXHAUSTIVE_GUARD = 2 ** 32   # balanced-labeling search
POSTERIOR_GUARD = 2 ** 26    # exact posterior enumeration

_CHUNK = 1 << 14


def _check_labeling(labels, q: int | None = None) -> tuple[np.ndarray, int]:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or labels.size == 0:
        raise ValidationError("labeling must be a nonempty 1-D integer vector")
    if labels.min() < 0:
        raise ValidationError("labels must be nonnegative")
    if q is None:
        q = int(labels.max()) + 1
    elif labels.max() >= q:
        raise ValidationError(f"labels must lie in [0, {q})")
    return labels, max(q, 2)


def is_balanced(labels, q: int) -> bool:
    labels, q = _check_labeling(labels, q)
    n = labels.size
    if n % q != 0:
        return False
    counts = np.bincount(labels, minlength=q)
    return bool(np.all(counts == n // q))


def random_balanced_labeling(n: int, q: int, rng: np.random.Generator) -> np.ndarray:
    if n % q != 0:
        raise ValidationError("balanced labelings require q | n")
    base = np.repeat(np.arange(q, dtype=np.int64), n // q)
    return rng.permutation(base)


def confusion_matrix(sigma, tau, q: int | None = None) -> np.ndarray:
    sigma, q1 = _check_labeling(sigma, q)
    tau, q2 = _check_labeling(tau, q)
    q = max(q1, q2) if q is None else q1
    if sigma.size != tau.size:
        raise ValidationError("labelings must have equal length")
    flat = sigma * q + tau
    return np.bincount(flat, minlength=q * q).reshape(q, q)


def overlap(sigma, tau, q: int | None = None) -> float:
    """Permutation-maximized, chance-corrected agreement of two labelings.

    (1/n) max over label permutations rho of
    sum_i (|sigma^-1(i) & tau^-1(rho(i))| - |sigma^-1(i)||tau^-1(rho(i))|/n),
    solved exactly as an optimal assignment on the q x q score matrix.
    """
    sigma, _ = _check_labeling(sigma, q)
    tau, _ = _check_labeling(tau, q)
    if sigma.size != tau.size:
        raise ValidationError("labelings must have equal length")
    if q is None:
        q = int(max(sigma.max(), tau.max())) + 1
    n = sigma.size
    counts = confusion_matrix(sigma, tau, q)
    score = counts - np.outer(counts.sum(axis=1), counts.sum(axis=0)) / n
    rows, cols = linear_sum_assignment(score, maximize=True)
    return float(score[rows, cols].sum()) / n


@dataclass(frozen=True)
class OverlapMatrix:
    """alpha[s, t] = (q/n) |sigma^-1(s) & tau^-1(t)| for balanced labelings."""

    alpha: np.ndarray
    frobenius_sq: float


def overlap_matrix(sigma, tau, q: int) -> OverlapMatrix:
    sigma, _ = _check_labeling(sigma, q)
    tau, _ = _check_labeling(tau, q)
    if not (is_balanced(sigma, q) and is_balanced(tau, q)):
        raise ValidationError("overlap matrix requires balanced labelings")
    n = sigma.size
    alpha = confusion_matrix(sigma, tau, q) * (q / n)
    if (np.max(np.abs(alpha.sum(axis=1) - 1)) > 1e-9
            or np.max(np.abs(alpha.sum(axis=0) - 1)) > 1e-9):
        raise ValidationError("overlap matrix is not doubly stochastic")
    return OverlapMatrix(alpha=alpha, frobenius_sq=float(np.sum(alpha * alpha)))


@dataclass(frozen=True)
class BirkhoffCheck:
    frobenius_sq: float
    bound: float
    ok: bool


def birkhoff_bound_check(sigma, tau, q: int) -> BirkhoffCheck:
    """Check |alpha|_F^2 <= 1 + q * overlap(sigma, tau) for balanced labelings."""
    frob = overlap_matrix(sigma, tau, q).frobenius_sq
    bound = 1.0 + q * overlap(sigma, tau, q)
    return BirkhoffCheck(frobenius_sq=frob, bound=bound, ok=frob <= bound + 1e-9)


@dataclass(frozen=True)
class GoodnessCheck:
    m_in: int
    m_out: int
    target_in: float
    target_out: float
    slack: float
    is_good: bool


def goodness(g: Graph, tau, params: SymmetricParams,
             slack: float | None = None) -> GoodnessCheck:
    """Compare within/between edge counts of tau to the planted expectations.

    Targets are cin n / (2q) within and (q-1) cout n / (2q) between; the
    partition is good when both counts are within `slack` (default n^(2/3))
    of their targets.
    """
    tau, _ = _check_labeling(tau, params.q)
    if tau.size != g.n:
        raise ValidationError("labeling length must equal the vertex count")
    if slack is None:
        slack = g.n ** (2.0 / 3.0)
    if g.m:
        within = tau[g.edges[:, 0]] == tau[g.edges[:, 1]]
        m_in = int(np.sum(within))
    else:
        m_in = 0
    m_out = g.m - m_in
    q = params.q
    target_in = params.cin * g.n / (2.0 * q)
    target_out = (q - 1) * params.cout * g.n / (2.0 * q)
    is_good = abs(m_in - target_in) < slack and abs(m_out - target_out) < slack
    return GoodnessCheck(m_in=m_in, m_out=m_out, target_in=target_in,
                         target_out=target_out, slack=slack, is_good=is_good)


def balanced_labelings(n: int, q: int):
    """Yield every balanced labeling once per global label permutation.

    Canonical form: labels appear in first-seen order (vertex 0 gets label 0,
    the next new label is always the smallest unused index).
    """
    if n % q != 0:
        raise ValidationError("balanced labelings require q | n")
    cap = n // q
    labels = np.zeros(n, dtype=np.int64)
    counts = [0] * q

    def rec(v: int, used: int):
        if v == n:
            yield labels.copy()
            return
        top = min(used + 1, q)
        for a in range(top):
            if counts[a] < cap:
                counts[a] += 1
                labels[v] = a
                yield from rec(v + 1, used + (1 if a == used else 0))
                counts[a] -= 1

    yield from rec(0, 0)


def exhaustive_good_search(g: Graph, params: SymmetricParams,
                           slack: float | None = None) -> list[np.ndarray]:
    """All good balanced labelings, up to global label permutation."""
    q = params.q
    if q ** g.n > EXHAUSTIVE_GUARD:
        raise BudgetExceededError(
            f"q^n = {q}^{g.n} exceeds the exhaustive-search guard 2^32"
        )
    out = []
    for labels in balanced_labelings(g.n, q):
        if goodness(g, labels, params, slack=slack).is_good:
            out.append(labels)
    return out


def balance_labeling(g: Graph, labels, q: int) -> np.ndarray:
    """Rebalance a labeling by moving minimum-degree surplus vertices to
    deficit groups (deterministic: lowest degree, then lowest vertex id)."""
    labels, _ = _check_labeling(labels, q)
    if labels.size != g.n:
        raise ValidationError("labeling length must equal the vertex count")
    if g.n % q != 0:
        raise ValidationError("balancing requires q | n")
    cap = g.n // q
    out = labels.copy()
    deg = g.degrees()
    counts = np.bincount(out, minlength=q)
    while True:
        surplus = np.flatnonzero(counts > cap)
        if not surplus.size:
            break
        deficit = int(np.flatnonzero(counts < cap)[0])
        candidates = np.flatnonzero(np.isin(out, surplus))
        order = np.lexsort((candidates, deg[candidates]))
        v = int(candidates[order[0]])
        counts[out[v]] -= 1
        out[v] = deficit
        counts[deficit] += 1
    return out


# ---------------------------------------------------------------------------
# Exact posterior
# ---------------------------------------------------------------------------

def posterior_marginals(g: Graph, params: ModelParams) -> np.ndarray:
    """Exact P(sigma_u = a | G) for every vertex, by summing the joint
    density over all q^n labelings (guarded: q^n <= 2^26)."""
    q = params.q
    n = g.n
    total = q ** n
    if total > POSTERIOR_GUARD:
        raise BudgetExceededError(f"q^n = {q}^{n} exceeds the posterior guard 2^26")
    if float(params.M.max(initial=0.0)) > n:
        raise ValidationError("M entries must be <= n (edge probabilities <= 1)")

    with np.errstate(divide="ignore"):
        log_absent = np.log(1.0 - params.M / n)        # -inf allowed (p = 1)
        log_edge_adjust = np.log(params.M / n) - log_absent
    log_pi = np.log(params.pi)
    powers = q ** np.arange(n - 1, -1, -1, dtype=np.int64)
    diag_absent = np.diag(log_absent)

    acc = np.zeros((n, q))
    best = -math.inf
    edges = g.edges
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        digits = (codes[:, None] // powers[None, :]) % q
        counts = np.stack([(digits == a).sum(axis=1) for a in range(q)], axis=1)
        # all-pairs absent-edge mass from label counts, then per-edge adjustment
        base = 0.5 * (np.einsum("ca,ab,cb->c", counts, log_absent, counts)
                      - counts @ diag_absent)
        logw = base + counts @ log_pi
        for u, v in edges:
            logw += log_edge_adjust[digits[:, u], digits[:, v]]
        m = float(logw.max())
        if m == -math.inf:
            continue
        if m > best:
            if best > -math.inf:
                acc *= math.exp(best - m)
            best = m
        w = np.exp(logw - best)
        for u in range(n):
            acc[u] += np.bincount(digits[:, u], weights=w, minlength=q)
    norms = acc.sum(axis=1, keepdims=True)
    if np.any(norms <= 0):
        raise ValidationError("graph has zero probability under the model")
    return acc / norms


def exact_posterior(g: Graph, params: ModelParams, u: int) -> np.ndarray:
    """Exact posterior distribution of vertex u's label given the graph."""
    if not 0 <= u < g.n:
        raise ValidationError("vertex index out of range")
    return posterior_marginals(g, params)[u]


@dataclass(frozen=True)
class BayesOverlapReport:
    n: int
    reps: int
    mean: float
    stderr: float
    overlaps: np.ndarray


def bayes_overlap_experiment(params: ModelParams, n: int, reps: int,
                             seed: int) -> BayesOverlapReport:
    """Mean overlap of the posterior-argmax labeling against the truth.

    Per replicate: sample (G, sigma), compute exact posteriors, label each
    vertex by posterior argmax (ties break to the lowest label), report the
    overlap with sigma.
    """
    if reps < 1:
        raise ValidationError("reps must be >= 1")
    if params.q ** n > POSTERIOR_GUARD:
        raise BudgetExceededError(f"q^n = {params.q}^{n} exceeds the posterior guard")
    seeds = replica_seeds(seed, reps)
    overlaps = np.empty(reps)
    for i in range(reps):
        sample = sample_sbm(params, n, int(seeds[i]))
        marginals = posterior_marginals(sample.graph, params)
        tau = np.argmax(marginals, axis=1)
        overlaps[i] = overlap(sample.sigma, tau, params.q)
    stderr = float(overlaps.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
    return BayesOverlapReport(n=n, reps=reps, mean=float(overlaps.mean()),
                              stderr=stderr, overlaps=overlaps)
