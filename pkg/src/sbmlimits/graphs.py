"""Samplers for the block model and its edge-conditioned variants, plus
exact short-cycle statistics.

Edge sampling runs in O(n d) expected time: within each constant-probability
block of vertex pairs, edges are selected by geometric gap-skipping over the
linearized pair sequence instead of per-pair Bernoulli trials.  All samplers
are deterministic functions of (params, seed).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ValidationError
from .model import ModelParams, trace_power

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@dataclass(frozen=True)
class Graph:
    """Sparse undirected simple graph: edge array with u < v, lexsorted."""

    n: int
    edges: np.ndarray

    def __post_init__(self) -> None:
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if edges.min() < 0 or edges.max() >= self.n:
                raise ValidationError("edge endpoints must lie in [0, n)")
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise ValidationError("edges must satisfy u < v (no self-loops)")
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            edges = edges[order]
            if np.any((np.diff(edges[:, 0]) == 0) & (np.diff(edges[:, 1]) == 0)):
                raise ValidationError("duplicate edges")
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @property
    def m(self) -> int:
        return self.edges.shape[0]

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        if self.m:
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def adjacency_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """(indptr, indices) with sorted neighbor lists."""
        both = np.concatenate([self.edges, self.edges[:, ::-1]]) if self.m else \
            np.empty((0, 2), dtype=np.int64)
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.add.at(indptr, both[:, 0] + 1, 1)
        np.cumsum(indptr, out=indptr)
        return indptr, both[:, 1].copy()


@dataclass(frozen=True)
class LabeledSample:
    graph: Graph
    sigma: np.ndarray


@dataclass(frozen=True)
class FixedEdgeSample:
    """Graph from the fixed-edge-count sampler plus a simplicity flag.

    The underlying multigraph keeps collisions; the returned graph drops
    self-loops and duplicates, and `simple` records whether any occurred.
    """

    graph: Graph
    simple: bool


@dataclass(frozen=True)
class CycleStats:
    m: int
    count: int
    mu_er: float | None = None
    mu_sbm: float | None = None


def _bernoulli_pair_indices(rng: np.random.Generator, count: int, p: float) -> np.ndarray:
    """Indices of successes among `count` Bernoulli(p) trials via geometric gaps."""
    if count <= 0 or p <= 0.0:
        return np.empty(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(count, dtype=np.int64)
    batch = max(64, int(count * p * 1.2) + 16)
    chunks = []
    pos = np.int64(-1)
    while True:
        jumps = rng.geometric(p, size=batch).astype(np.int64)
        idx = pos + np.cumsum(jumps)
        inside = idx[idx < count]
        chunks.append(inside)
        if inside.size < idx.size:
            break
        pos = idx[-1]
    return np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)


def _decode_triangular(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map linear index t to the pair (i, j), i < j, in the order
    (0,1), (0,2), (1,2), (0,3), ... (pairs grouped by increasing j)."""
    j = ((1.0 + np.sqrt(1.0 + 8.0 * t.astype(np.float64))) / 2.0).astype(np.int64)
    # correct floating rounding at block boundaries
    j = np.where(j * (j - 1) // 2 > t, j - 1, j)
    j = np.where((j + 1) * j // 2 <= t, j + 1, j)
    i = t - j * (j - 1) // 2
    return i, j


def _within_group_edges(rng, members: np.ndarray, p: float) -> np.ndarray:
    k = members.size
    total = k * (k - 1) // 2
    t = _bernoulli_pair_indices(rng, total, p)
    if not t.size:
        return np.empty((0, 2), dtype=np.int64)
    i, j = _decode_triangular(t)
    return np.column_stack([members[i], members[j]])


def _cross_group_edges(rng, a: np.ndarray, b: np.ndarray, p: float) -> np.ndarray:
    total = a.size * b.size
    t = _bernoulli_pair_indices(rng, total, p)
    if not t.size:
        return np.empty((0, 2), dtype=np.int64)
    u = a[t // b.size]
    v = b[t % b.size]
    return np.column_stack([np.minimum(u, v), np.maximum(u, v)])


def _check_edge_probabilities(params: ModelParams, n: int) -> None:
    if float(params.M.max(initial=0.0)) > n:
        raise ValidationError("M entries must be <= n (edge probabilities <= 1)")


def sample_sbm(params: ModelParams, n: int, seed: int) -> LabeledSample:
    """Sample (G, sigma): labels i.i.d. from pi, then independent edges with
    probability M[sigma_u, sigma_v] / n per pair."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    _check_edge_probabilities(params, n)
    rng = np.random.default_rng(seed)
    q = params.q
    sigma = rng.choice(q, size=n, p=params.pi).astype(np.int64)
    groups = [np.flatnonzero(sigma == a) for a in range(q)]
    blocks = []
    for a in range(q):
        for b in range(a, q):
            p = params.M[a, b] / n
            if a == b:
                blocks.append(_within_group_edges(rng, groups[a], p))
            else:
                blocks.append(_cross_group_edges(rng, groups[a], groups[b], p))
    edges = np.concatenate(blocks) if blocks else np.empty((0, 2), dtype=np.int64)
    return LabeledSample(graph=Graph(n=n, edges=edges), sigma=sigma)


def sample_er(n: int, d: float, seed: int) -> Graph:
    """Erdos-Renyi G(n, d/n)."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    if d < 0:
        raise ValidationError("d must be nonnegative")
    if d > n:
        raise ValidationError("d/n must be a valid probability (d <= n)")
    rng = np.random.default_rng(seed)
    edges = _within_group_edges(rng, np.arange(n, dtype=np.int64), d / n)
    return Graph(n=n, edges=edges)


def sample_sbm_fixed_m(params: ModelParams, n: int, m: int, sigma: np.ndarray,
                       seed: int) -> FixedEdgeSample:
    """Fixed-edge-count variant: each of m edges picks an ordered group pair
    (r, s) with probability pi_r M[r, s] pi_s / d, then endpoints uniformly
    from the two groups (independently, so collisions can occur)."""
    if m < 0:
        raise ValidationError("m must be >= 0")
    sigma = np.asarray(sigma, dtype=np.int64)
    if sigma.shape != (n,):
        raise ValidationError("sigma must have length n")
    q = params.q
    if sigma.size and (sigma.min() < 0 or sigma.max() >= q):
        raise ValidationError("sigma entries must lie in [0, q)")
    if m == 0:
        return FixedEdgeSample(graph=Graph(n=n, edges=np.empty((0, 2), dtype=np.int64)),
                               simple=True)
    if params.d <= 0:
        raise ValidationError("positive m requires d > 0")

    weights = params.pi[:, None] * params.M * params.pi[None, :]
    probs = (weights / weights.sum()).ravel()
    counts = np.bincount(sigma, minlength=q)
    positive_mass = (weights.sum(axis=1) + weights.sum(axis=0)) > 0
    if np.any(positive_mass & (counts == 0)):
        empty = np.flatnonzero(positive_mass & (counts == 0)).tolist()
        raise ValidationError(f"groups {empty} are empty but selected with positive probability")

    members = np.concatenate([np.flatnonzero(sigma == a) for a in range(q)])
    offsets = np.zeros(q + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])

    rng = np.random.default_rng(seed)
    codes = rng.choice(q * q, size=m, p=probs)
    r, s = codes // q, codes % q

    def _uniform_members(group_idx: np.ndarray) -> np.ndarray:
        u = rng.random(m)
        size = counts[group_idx]
        pos = np.minimum((u * size).astype(np.int64), size - 1)
        return members[offsets[group_idx] + pos]

    u = _uniform_members(r)
    v = _uniform_members(s)
    loops = int(np.sum(u == v))
    pairs = np.column_stack([np.minimum(u, v), np.maximum(u, v)])
    pairs = pairs[u != v]
    uniq = np.unique(pairs, axis=0) if pairs.size else pairs.reshape(0, 2)
    simple = loops == 0 and uniq.shape[0] == m
    return FixedEdgeSample(graph=Graph(n=n, edges=uniq), simple=simple)


# ---------------------------------------------------------------------------
# Cycle counting
# ---------------------------------------------------------------------------

@njit(cache=True)
def _cycle_count_kernel(indptr, indices, n, m_max):  # pragma: no cover - jit
    counts = np.zeros(m_max + 1, dtype=np.int64)
    path = np.empty(m_max, dtype=np.int64)
    ptrs = np.empty(m_max, dtype=np.int64)
    onpath = np.zeros(n, dtype=np.uint8)
    for s in range(n):
        depth = 0
        path[0] = s
        onpath[s] = 1
        ptrs[0] = indptr[s]
        while depth >= 0:
            p = ptrs[depth]
            end = indptr[path[depth] + 1]
            advanced = False
            while p < end:
                w = indices[p]
                p += 1
                if w <= s or onpath[w] == 1:
                    continue
                ptrs[depth] = p
                depth += 1
                path[depth] = w
                onpath[w] = 1
                if depth >= 2 and path[1] < w:
                    # binary search for s in the sorted neighbor list of w
                    lo = indptr[w]
                    hi = indptr[w + 1]
                    while lo < hi:
                        mid = (lo + hi) // 2
                        if indices[mid] < s:
                            lo = mid + 1
                        else:
                            hi = mid
                    if lo < indptr[w + 1] and indices[lo] == s:
                        counts[depth + 1] += 1
                if depth + 1 < m_max:
                    ptrs[depth] = indptr[w]
                else:
                    onpath[w] = 0
                    depth -= 1
                advanced = True
                break
            if not advanced:
                onpath[path[depth]] = 0
                depth -= 1
    return counts


def count_cycles(g: Graph, m_max: int,
                 params: ModelParams | None = None) -> list[CycleStats]:
    """Exact counts of simple m-cycles (as subgraphs) for m = 3..m_max.

    DFS enumeration with canonical representatives: each cycle is rooted at
    its smallest vertex and traversed in the orientation whose second vertex
    is smaller than its last, so every cycle is visited exactly once.
    """
    if not 3 <= m_max <= 12:
        raise ValidationError("m_max must lie in [3, 12]")
    indptr, indices = g.adjacency_csr()
    counts = _cycle_count_kernel(indptr, indices, g.n, m_max)
    out = []
    for m in range(3, m_max + 1):
        mu_er = mu_sbm = None
        if params is not None:
            mu_er = params.d ** m / (2.0 * m)
            mu_sbm = params.d ** m * trace_power(params, m) / (2.0 * m)
        out.append(CycleStats(m=m, count=int(counts[m]), mu_er=mu_er, mu_sbm=mu_sbm))
    return out


@dataclass(frozen=True)
class CycleCheckRow:
    m: int
    mean_sbm: float
    se_sbm: float
    target_sbm: float
    mean_er: float
    se_er: float
    target_er: float


def replica_seeds(seed: int, count: int) -> np.ndarray:
    """Independent 64-bit replica seeds derived from one master seed."""
    return np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)


def cycle_poisson_check(params: ModelParams, n: int, m_max: int, reps: int,
                        seed: int, threads: int = 1) -> list[CycleCheckRow]:
    """Empirical short-cycle means under the block model and the matched
    Erdos-Renyi ensemble, with their Poisson targets d^m tr(T^m)/(2m) and
    d^m/(2m)."""
    if reps < 30:
        raise ValidationError("reps must be >= 30")
    seeds = replica_seeds(seed, 2 * reps)

    def one_rep(i: int) -> tuple[np.ndarray, np.ndarray]:
        g_sbm = sample_sbm(params, n, int(seeds[2 * i])).graph
        g_er = sample_er(n, params.d, int(seeds[2 * i + 1]))
        c_sbm = np.array([cs.count for cs in count_cycles(g_sbm, m_max)])
        c_er = np.array([cs.count for cs in count_cycles(g_er, m_max)])
        return c_sbm, c_er

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one_rep, range(reps)))
    else:
        results = [one_rep(i) for i in range(reps)]

    sbm_counts = np.stack([r[0] for r in results])
    er_counts = np.stack([r[1] for r in results])
    rows = []
    for idx, m in enumerate(range(3, m_max + 1)):
        target_er = params.d ** m / (2.0 * m)
        target_sbm = params.d ** m * trace_power(params, m) / (2.0 * m)
        rows.append(CycleCheckRow(
            m=m,
            mean_sbm=float(sbm_counts[:, idx].mean()),
            se_sbm=float(sbm_counts[:, idx].std(ddof=1) / math.sqrt(reps)),
            target_sbm=target_sbm,
            mean_er=float(er_counts[:, idx].mean()),
            se_er=float(er_counts[:, idx].std(ddof=1) / math.sqrt(reps)),
            target_er=target_er,
        ))
    return rows


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def write_edge_list(g: Graph, path) -> None:
    with open(path, "w") as fh:
        fh.write(edge_list_text(g))


def edge_list_text(g: Graph) -> str:
    buf = io.StringIO()
    buf.write(f"# n={g.n}\n")
    for u, v in g.edges:
        buf.write(f"{u} {v}\n")
    return buf.getvalue()


def read_edge_list(path) -> Graph:
    with open(path) as fh:
        text = fh.read()
    return parse_edge_list(text)


def parse_edge_list(text: str) -> Graph:
    n = None
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "n=" in line and n is None:
                try:
                    n = int(line.split("n=")[1].split()[0])
                except (ValueError, IndexError) as exc:
                    raise ValidationError(f"bad header line: {line!r}") from exc
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValidationError(f"bad edge line: {line!r}")
        rows.append((int(parts[0]), int(parts[1])))
    if n is None:
        raise ValidationError("edge list is missing the '# n=<n>' header")
    edges = np.array(rows, dtype=np.int64).reshape(-1, 2)
    return Graph(n=n, edges=edges)


def write_labels(labels: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        for v in np.asarray(labels, dtype=np.int64):
            fh.write(f"{v}\n")


def read_labels(path) -> np.ndarray:
    with open(path) as fh:
        values = [int(line.strip()) for line in fh if line.strip()]
    return np.array(values, dtype=np.int64)
