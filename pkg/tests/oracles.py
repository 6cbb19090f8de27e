"""Independent slow oracles used by the test suite.

Everything here is deliberately written against the definitions, not against
the library's internals: different enumeration strategies, different
accumulation, no shared helper code with the package.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def slow_cycle_counts(n: int, edges, m_max: int) -> dict[int, int]:
    """Count simple m-cycles by enumerating vertex subsets and cyclic orders.

    Each m-subset contributes one count per Hamiltonian cycle on it: orders
    are anchored at the subset's first element and one of the two traversal
    directions is kept.
    """
    edge_set = {(min(u, v), max(u, v)) for u, v in edges}
    counts = {m: 0 for m in range(3, m_max + 1)}
    for m in range(3, m_max + 1):
        for subset in itertools.combinations(range(n), m):
            first = subset[0]
            for perm in itertools.permutations(subset[1:]):
                if perm[0] > perm[-1]:
                    continue
                ring = (first,) + perm + (first,)
                if all((min(a, b), max(a, b)) in edge_set
                       for a, b in zip(ring, ring[1:])):
                    counts[m] += 1
    return counts


def slow_posterior(n: int, edges, pi, M) -> np.ndarray:
    """Exact posterior label marginals by direct product-form enumeration."""
    q = len(pi)
    edge_set = {(min(u, v), max(u, v)) for u, v in edges}
    weights = np.zeros((n, q))
    for labels in itertools.product(range(q), repeat=n):
        w = 1.0
        for v in range(n):
            w *= pi[labels[v]]
        for u in range(n):
            for v in range(u + 1, n):
                p = M[labels[u]][labels[v]] / n
                w *= p if (u, v) in edge_set else 1.0 - p
        for v in range(n):
            weights[v, labels[v]] += w
    return weights / weights.sum(axis=1, keepdims=True)


def direct_second_moment(pi, M, d: float, n: int, a_n: float) -> float:
    """E[Y_n^2] by direct enumeration of labeling pairs with fsum accumulation."""
    q = len(pi)
    labs = [s for s in itertools.product(range(q), repeat=n)
            if all(abs(s.count(i) - n * pi[i]) <= a_n for i in range(q))]
    F = {}
    for i, j, k, l in itertools.product(range(q), repeat=4):
        s_, t_ = M[i][k], M[j][l]
        F[(i, j, k, l)] = s_ * t_ / (n * d) + (1 - s_ / n) * (1 - t_ / n) / (1 - d / n)
    log_prior = {s: math.fsum(math.log(pi[x]) for x in s) for s in labs}
    terms = []
    for s in labs:
        for t in labs:
            logw = math.fsum(math.log(F[(s[u], t[u], s[v], t[v])])
                             for u in range(n) for v in range(u + 1, n))
            terms.append(math.exp(log_prior[s] + log_prior[t] + logw))
    return math.fsum(terms)


def coupling_ratio_grid_q2(d: float, lam: float, points: int = 100001) -> float:
    """Dense-grid supremum of the coupling ratio for q = 2 symmetric models.

    The transportation polytope is the one-parameter family
    alpha(a) = [[a, 1/2 - a], [1/2 - a, a]], a in [0, 1/2].
    """
    q = 2
    cin = d * (1 + lam)
    cout = d * (1 - lam)
    A = np.array([[cin - d, cout - d], [cout - d, cin - d]]) / math.sqrt(2 * d)
    p = np.full((2, 2), 0.25)
    a = np.linspace(0.0, 0.5, points)
    alpha = np.empty((points, 2, 2))
    alpha[:, 0, 0] = alpha[:, 1, 1] = a
    alpha[:, 0, 1] = alpha[:, 1, 0] = 0.5 - a
    y = alpha - p
    num = np.zeros(points)
    for i, j, k, l in itertools.product(range(q), repeat=4):
        num += y[:, i, j] * A[i, k] * A[j, l] * y[:, k, l]
    with np.errstate(divide="ignore", invalid="ignore"):
        div = np.where(alpha > 0, alpha * np.log(alpha / p), 0.0).sum(axis=(1, 2))
    ratio = np.where(div > 1e-14, num / np.maximum(div, 1e-300), -np.inf)
    return float(np.max(ratio))


def phi_grid_q2(d: float, lam: float, points: int = 200001) -> float:
    """Dense-grid maximum of the symmetric objective for q = 2."""
    a = np.linspace(0.0, 1.0, points)
    alpha = np.empty((points, 2, 2))
    alpha[:, 0, 0] = alpha[:, 1, 1] = a
    alpha[:, 0, 1] = alpha[:, 1, 0] = 1.0 - a
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(alpha > 0, -alpha * np.log(alpha), 0.0).sum(axis=(1, 2)) / 2
    frob = (alpha ** 2).sum(axis=(1, 2))
    return float(np.max(ent - math.log(2) + 0.5 * d * lam * lam * (frob - 1.0)))


def goodness_probability_er(n: int, d: float, q: int, target_in: float,
                            target_out: float, slack: float) -> float:
    """Exact probability that a fixed balanced labeling is good for G(n, d/n).

    Within-pair and cross-pair edge counts are independent binomials, so the
    goodness event is a product of two binomial window probabilities.
    """
    from scipy.stats import binom

    size = n // q
    within_pairs = q * size * (size - 1) // 2
    cross_pairs = n * (n - 1) // 2 - within_pairs
    p = d / n

    def window(total, target):
        lo = max(math.floor(target - slack) + 1, 0)   # strict |x - t| < slack
        hi = min(math.ceil(target + slack) - 1, total)
        if lo > hi:
            return 0.0
        return float(binom.cdf(hi, total, p) - binom.cdf(lo - 1, total, p))

    return window(within_pairs, target_in) * window(cross_pairs, target_out)
