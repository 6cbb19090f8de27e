"""Exact finite-n second moment of the restricted block-model density.

E[Y_n^2] is computed by enumerating joint type-count matrices N (N_ij = the
number of vertices with labels (i, j) under a labeling pair) restricted to
the label-frequency window, weighting each by its multinomial count, its
prior mass, and the exact per-pair expectation

    E[W W] = s t / (n d) + (1 - s/n)(1 - t/n) / (1 - d/n)

raised to pair multiplicities (N_ij N_kl / 2 off the diagonal and
binomial(N_ij, 2) on it).  This uses the exact per-pair value, not its
exponential approximation, so the only asymptotics live in the comparison
with the spectral product, never in the oracle itself.

Summation is performed in the log domain with a fixed enumeration order and
compensated accumulation, so results are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .contiguity import second_moment_product
from .errors import BudgetExceededError, ValidationError
from .model import ModelParams

DEFAULT_BUDGET = 20_000_000


@dataclass(frozen=True)
class CountMatrix:
    """Joint type counts of a labeling pair: q x q nonnegative ints, sum n."""

    N: np.ndarray

    def __post_init__(self) -> None:
        N = np.asarray(self.N)
        if N.ndim != 2 or N.shape[0] != N.shape[1]:
            raise ValidationError("count matrix must be square")
        if not np.issubdtype(N.dtype, np.integer):
            if not np.all(N == np.round(N)):
                raise ValidationError("count matrix must be integer")
            N = N.astype(np.int64)
        if np.any(N < 0):
            raise ValidationError("count matrix must be nonnegative")
        N = N.astype(np.int64)
        N.setflags(write=False)
        object.__setattr__(self, "N", N)

    @property
    def n(self) -> int:
        return int(self.N.sum())

    def x(self, pi: np.ndarray) -> np.ndarray:
        """Centered, normalized counts (N_ij - n pi_i pi_j) / sqrt(n)."""
        pi = np.asarray(pi, dtype=float)
        n = self.n
        return (self.N - n * np.outer(pi, pi)) / math.sqrt(n)


def log_multinomial(n: int, counts: np.ndarray) -> float:
    """log of n! / prod(counts!) via log-gamma."""
    counts = np.asarray(counts)
    return float(gammaln(n + 1) - gammaln(counts + 1).sum())


def log_multinomial_exact(n: int, counts) -> float:
    """Exact-integer multinomial coefficient, logged; cross-check path."""
    coeff = math.factorial(n)
    for c in np.asarray(counts).ravel():
        coeff //= math.factorial(int(c))
    return math.log(coeff)


def _log_pair_table(params: ModelParams, n: int) -> np.ndarray:
    """log E[W W] for every ordered pair of vertex types, as a q^2 x q^2 table.

    Type t = i*q + j encodes (sigma_u, tau_u) = (i, j); the entry at (t1, t2)
    is the factor contributed by a vertex pair with types t1 and t2.
    """
    q = params.q
    d = params.d
    if d <= 0:
        raise ValidationError("pair weights require d > 0")
    if d >= n:
        raise ValidationError("d/n must be < 1")
    M = params.M
    i, j = np.divmod(np.arange(q * q), q)
    s = M[np.ix_(i, i)]    # s[t1, t2] = M[i1, i2]
    t = M[np.ix_(j, j)]
    F = s * t / (n * d) + (1.0 - s / n) * (1.0 - t / n) / (1.0 - d / n)
    with np.errstate(divide="ignore"):
        return np.log(F)


def log_pair_weight(params: ModelParams, n: int, N: CountMatrix | np.ndarray) -> float:
    """log prod over unordered vertex pairs of E[W W] for type counts N."""
    if not isinstance(N, CountMatrix):
        N = CountMatrix(N)
    if N.n != n:
        raise ValidationError(f"counts sum to {N.n}, expected n={n}")
    table = _log_pair_table(params, n)
    x = N.N.ravel().astype(float)
    return float(0.5 * (x @ table @ x - x @ np.diag(table)))


def pair_weight(params: ModelParams, n: int, N: CountMatrix | np.ndarray) -> float:
    return math.exp(log_pair_weight(params, n, N))


def _window_bounds(pi: np.ndarray, n: int, a_n: float) -> tuple[np.ndarray, np.ndarray]:
    lo = np.maximum(np.ceil(n * pi - a_n), 0).astype(np.int64)
    hi = np.minimum(np.floor(n * pi + a_n), n).astype(np.int64)
    if np.any(lo > hi):
        raise ValidationError("label-frequency window is empty")
    return lo, hi


def _count_vectors(n: int, lo: np.ndarray, hi: np.ndarray):
    """Compositions of n with lo <= c <= hi, in lexicographic order."""
    q = lo.size
    suffix_lo = np.concatenate([np.cumsum(lo[::-1])[::-1], [0]])
    suffix_hi = np.concatenate([np.cumsum(hi[::-1])[::-1], [0]])
    vec = [0] * q

    def rec(i: int, rem: int):
        if i == q - 1:
            if lo[i] <= rem <= hi[i]:
                vec[i] = rem
                yield tuple(vec)
            return
        c_lo = max(int(lo[i]), rem - int(suffix_hi[i + 1]))
        c_hi = min(int(hi[i]), rem - int(suffix_lo[i + 1]))
        for c in range(c_lo, c_hi + 1):
            vec[i] = c
            yield from rec(i + 1, rem - c)

    yield from rec(0, n)


def p_omega(params: ModelParams, n: int, a_n: float | None = None) -> float:
    """Probability that every label frequency is within a_n of n pi_i."""
    if a_n is None:
        a_n = n ** (2.0 / 3.0)
    pi = params.pi
    lo, hi = _window_bounds(pi, n, a_n)
    logpi = np.log(pi)
    parts = []
    for c in _count_vectors(n, lo, hi):
        arr = np.array(c)
        parts.append(log_multinomial(n, arr) + float(arr @ logpi))
    mx = max(parts)
    return math.exp(mx) * math.fsum(math.exp(v - mx) for v in parts)


@dataclass(frozen=True)
class SecondMomentRecord:
    n: int
    value: float
    log_value: float
    asymptote: float
    a_n: float
    matrices: int


def _accumulate(parts: list[np.ndarray]) -> tuple[float, float]:
    """Deterministic log-sum-exp over per-batch log-term arrays."""
    gmax = max(float(p.max()) for p in parts)
    total = math.fsum(float(np.exp(p - gmax).sum()) for p in parts)
    logv = gmax + math.log(total)
    return math.exp(logv), logv


def _second_moment_q2(params: ModelParams, n: int, a_n: float,
                      budget: int) -> tuple[list[np.ndarray], int]:
    pi = params.pi
    lo, hi = _window_bounds(pi, n, a_n)
    r_lo = max(int(lo[0]), n - int(hi[1]))
    r_hi = min(int(hi[0]), n - int(lo[1]))
    if r_lo > r_hi:
        raise ValidationError("label-frequency window is empty")

    total_terms = 0
    for r1 in range(r_lo, r_hi + 1):
        for c1 in range(r_lo, r_hi + 1):
            k0 = max(0, r1 + c1 - n)
            k1 = min(r1, c1)
            if k1 >= k0:
                total_terms += k1 - k0 + 1
    if total_terms > budget:
        raise BudgetExceededError(
            f"{total_terms} count matrices exceed the budget {budget}"
        )

    table = _log_pair_table(params, n)
    diag = np.diag(table)
    logp = np.log(np.outer(pi, pi)).ravel()
    gln = gammaln(np.arange(n + 2))
    parts = []
    for r1 in range(r_lo, r_hi + 1):
        for c1 in range(r_lo, r_hi + 1):
            k0 = max(0, r1 + c1 - n)
            k1 = min(r1, c1)
            if k1 < k0:
                continue
            k = np.arange(k0, k1 + 1)
            N = np.stack([k, r1 - k, c1 - k, n - r1 - c1 + k], axis=1).astype(float)
            logmult = gln[n + 1] - gln[(N + 1).astype(np.int64)].sum(axis=1)
            quad = 0.5 * (np.einsum("mi,ij,mj->m", N, table, N) - N @ diag)
            parts.append(logmult + N @ logp + quad)
    return parts, total_terms


def _second_moment_general(params: ModelParams, n: int, a_n: float,
                           budget: int, batch: int = 4096) -> tuple[list[np.ndarray], int]:
    pi = params.pi
    q = params.q
    lo, hi = _window_bounds(pi, n, a_n)
    table = _log_pair_table(params, n)
    diag = np.diag(table)
    logp = np.log(np.outer(pi, pi)).ravel()
    gln = gammaln(np.arange(n + 2))

    parts: list[np.ndarray] = []
    buffer: list[list[int]] = []
    matrices = 0

    def flush():
        if not buffer:
            return
        N = np.array(buffer, dtype=float)
        logmult = gln[n + 1] - gln[(N + 1).astype(np.int64)].sum(axis=1)
        quad = 0.5 * (np.einsum("mi,ij,mj->m", N, table, N) - N @ diag)
        parts.append(logmult + N @ logp + quad)
        buffer.clear()

    row = [0] * (q * q)
    colsum = [0] * q

    def rec_rows(i: int, remaining_rows: list[int]):
        nonlocal matrices
        if i == len(remaining_rows):
            for j in range(q):
                if not lo[j] <= colsum[j] <= hi[j]:
                    return
            matrices += 1
            if matrices > budget:
                raise BudgetExceededError(
                    f"count-matrix enumeration exceeds the budget {budget}"
                )
            buffer.append(list(row))
            if len(buffer) >= batch:
                flush()
            return
        r = remaining_rows[i]
        rest = sum(remaining_rows[i + 1:])

        def rec_cells(j: int, rem: int):
            if j == q - 1:
                c = rem
                if colsum[j] + c > hi[j]:
                    return
                colsum[j] += c
                row[i * q + j] = c
                if all(colsum[t] + rest >= lo[t] for t in range(q)):
                    rec_rows(i + 1, remaining_rows)
                colsum[j] -= c
                return
            for c in range(0, rem + 1):
                if colsum[j] + c > hi[j]:
                    break
                colsum[j] += c
                row[i * q + j] = c
                rec_cells(j + 1, rem - c)
                colsum[j] -= c

        rec_cells(0, r)

    for row_sums in _count_vectors(n, lo, hi):
        rec_rows(0, list(row_sums))
    flush()
    return parts, matrices


def exact_second_moment(params: ModelParams, n: int, a_n: float | None = None,
                        budget: int = DEFAULT_BUDGET) -> SecondMomentRecord:
    """Exact E[Y_n^2] over the label-frequency window (default a_n = n^(2/3)).

    Sums, over count matrices N with both marginals inside the window,
    multinomial(n; N) * prod (pi_i pi_j)^N_ij * pair_weight(N).  The q = 2
    case enumerates (row-sum, col-sum, N_00) directly; larger q uses a
    pruned recursive enumeration with a hard budget.
    """
    if n < 2:
        raise ValidationError("n must be >= 2")
    if a_n is None:
        a_n = n ** (2.0 / 3.0)
    if a_n <= 0:
        raise ValidationError("a_n must be positive")
    a_eff = min(float(a_n), float(n))
    if params.q == 2:
        parts, matrices = _second_moment_q2(params, n, a_eff, budget)
    else:
        parts, matrices = _second_moment_general(params, n, a_eff, budget)
    value, logv = _accumulate(parts)
    return SecondMomentRecord(n=n, value=value, log_value=logv,
                              asymptote=second_moment_product(params),
                              a_n=a_eff, matrices=matrices)
