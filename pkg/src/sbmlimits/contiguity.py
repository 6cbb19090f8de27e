"""Contiguity certificate: the coupling-ratio functional and its relatives.

The central object is

    Q(pi, A) = sup over couplings alpha of
               (alpha - p)^T (A kron A) (alpha - p) / D(alpha, p)

where the supremum runs over joint distributions on [q]^2 with both marginals
pi, p = pi kron pi is the independent coupling, and D is the KL divergence.
Q(pi, (M - d J)/sqrt(2d)) < 1 certifies that the block model is contiguous
with (and therefore indistinguishable from) the degree-matched Erdos-Renyi
ensemble, and the same quantity controls whether the pair second moment
converges to the spectral product prod psi(d lam_i lam_j).

For uniform pi everything reduces to maximizing

    Phi(alpha) = H(alpha) - log q + (d lam^2 / 2) (|alpha|_F^2 - 1)

over doubly stochastic alpha, which is handled by the same projected-ascent
machinery plus the closed-form entropy bound of achievable H at fixed
Frobenius norm.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .model import ModelParams, _check_probability_vector

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

# Interior floor for polytope entries: D(alpha, p) stays finite at the
# boundary but its gradient does not, so ascent steps clamp here.
ENTRY_FLOOR = 1e-14

# Marginal tolerance for coupling matrices.
MARGINAL_TOL = 1e-12

# |Q - 1| band reported as BOUNDARY rather than a definite verdict.
BOUNDARY_BAND = 1e-3

# Treat alpha with D(alpha, p) below this as having collapsed to p.
_COLLAPSE_TOL = 1e-13


def kl_divergence(p, pt) -> float:
    """KL divergence sum p_i log(p_i / pt_i), with 0 log 0 = 0.

    Returns +inf when p puts mass where pt has none (support violation).
    """
    p = np.asarray(p, dtype=float).ravel()
    pt = np.asarray(pt, dtype=float).ravel()
    if p.shape != pt.shape:
        raise ValidationError("distributions must have the same length")
    if np.any(p < 0) or np.any(pt < 0):
        raise ValidationError("distributions must be nonnegative")
    mask = p > 0
    if np.any(pt[mask] <= 0):
        return math.inf
    return float(np.sum(p[mask] * np.log(p[mask] / pt[mask])))


@njit(cache=True)
def _sinkhorn_kernel(a, row, col, tol, max_iter):  # pragma: no cover - jit
    q = a.shape[0]
    for _ in range(max_iter):
        for i in range(q):
            s = 0.0
            for j in range(q):
                s += a[i, j]
            f = row[i] / s
            for j in range(q):
                a[i, j] *= f
        for j in range(q):
            s = 0.0
            for i in range(q):
                s += a[i, j]
            f = col[j] / s
            for i in range(q):
                a[i, j] *= f
        err = 0.0
        for i in range(q):
            s = 0.0
            for j in range(q):
                s += a[i, j]
            e = abs(s - row[i])
            if e > err:
                err = e
        if err <= tol:
            return True
    return False


def project_to_marginals(mat: np.ndarray, row: np.ndarray, col: np.ndarray,
                         tol: float = 5e-13, max_iter: int = 20000,
                         floor: float = 1e-15) -> np.ndarray:
    """Scale a positive matrix to the prescribed row/column sums (Sinkhorn)."""
    a = np.maximum(np.asarray(mat, dtype=float), floor)
    row = np.ascontiguousarray(row, dtype=float)
    col = np.ascontiguousarray(col, dtype=float)
    if not _sinkhorn_kernel(a, row, col, tol, max_iter):
        raise NumericalError("marginal scaling did not converge")
    return a


def project_doubly_stochastic(mat: np.ndarray, **kw) -> np.ndarray:
    q = mat.shape[0]
    ones = np.ones(q)
    return project_to_marginals(mat, ones, ones, **kw)


@dataclass(frozen=True)
class CouplingMatrix:
    """A point of the transportation polytope: q x q, both marginals pi."""

    pi: np.ndarray
    alpha: np.ndarray

    def __post_init__(self) -> None:
        pi = _check_probability_vector(self.pi)
        alpha = np.asarray(self.alpha, dtype=float)
        q = pi.size
        if alpha.shape != (q, q):
            raise ValidationError(f"alpha must be {q}x{q}")
        if np.any(alpha < 0):
            raise ValidationError("alpha entries must be nonnegative")
        if (np.max(np.abs(alpha.sum(axis=1) - pi)) > MARGINAL_TOL
                or np.max(np.abs(alpha.sum(axis=0) - pi)) > MARGINAL_TOL):
            raise ValidationError("alpha marginals must equal pi to 1e-12")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def uncorrelated(cls, pi) -> "CouplingMatrix":
        pi = _check_probability_vector(pi)
        return cls(pi=pi, alpha=np.outer(pi, pi))


@dataclass(frozen=True)
class QResult:
    """Best found value of the coupling-ratio functional."""

    value: float
    argmax: CouplingMatrix
    hessian_ratio: float
    restarts_used: int
    converged: bool


def hessian_ratio(pi, a_scaled) -> float:
    """Limit of the coupling ratio at the independent coupling.

    Equal to twice the squared top absolute eigenvalue of the weighted,
    centered form of a_scaled; for a_scaled = (M - dJ)/sqrt(2d) this is
    d * lam_2^2.
    """
    pi = _check_probability_vector(pi)
    a = np.asarray(a_scaled, dtype=float)
    root = np.sqrt(pi)
    g = root[:, None] * a * root[None, :]
    proj = np.eye(pi.size) - np.outer(root, root)
    core = proj @ g @ proj
    eigs = np.linalg.eigvalsh(core)
    return float(2.0 * np.max(np.abs(eigs)) ** 2)


def _quadratic_form(y: np.ndarray, a: np.ndarray) -> float:
    # sum_{ijkl} y_ij a_ik a_jl y_kl for symmetric a
    return float(np.sum(a * (y @ a @ y.T)))


def _coupling_ratio(alpha: np.ndarray, p: np.ndarray, a: np.ndarray) -> float | None:
    """Ratio value, or None when alpha has collapsed to p."""
    div = kl_divergence(alpha, p)
    if div < _COLLAPSE_TOL:
        return None
    return _quadratic_form(alpha - p, a) / div


def _ascend(alpha: np.ndarray, value_fn, grad_fn, project,
            max_iter: int = 250, ftol: float = 1e-12):
    """Projected gradient ascent with backtracking; maximizes value_fn."""
    alpha = project(alpha)
    val = value_fn(alpha)
    if val is None:
        return alpha, None, True
    step = 0.25
    converged = False
    for _ in range(max_iter):
        grad = grad_fn(alpha)
        s = step
        cand = None
        vc = None
        for _ in range(20):
            trial = project(np.maximum(alpha + s * grad, ENTRY_FLOOR))
            vt = value_fn(trial)
            if vt is not None and vt > val:
                cand, vc = trial, vt
                break
            s *= 0.5
        if cand is None:
            converged = True
            break
        gain = vc - val
        alpha, val = cand, vc
        if gain < ftol * (1.0 + abs(val)):
            converged = True
            break
        step = min(s * 2.0, 4.0)
    return alpha, val, converged


def _coupling_starts(pi: np.ndarray, restarts: int, rng: np.random.Generator):
    q = pi.size
    p = np.outer(pi, pi)
    uniform = np.allclose(pi, 1.0 / q)
    starts = []
    for scale in (0.02, 0.1):
        starts.append(p * np.exp(scale * rng.standard_normal((q, q))))
    for t in (0.3, 0.6, 0.9, 0.99):
        starts.append((1 - t) * p + t * np.diag(pi))
    if uniform:
        perms = [np.arange(q), np.roll(np.arange(q), 1)]
        while len(perms) < 4:
            perms.append(rng.permutation(q))
        for perm in perms:
            mat = np.zeros((q, q))
            mat[np.arange(q), perm] = 1.0 / q
            for t in (0.5, 0.95):
                starts.append((1 - t) * p + t * mat)
    starts = starts[:restarts]
    while len(starts) < restarts:
        starts.append(np.exp(rng.standard_normal((q, q))))
    return starts


def q_value(pi, a_scaled, restarts: int = 32, seed: int = 0,
            max_iter: int = 250) -> QResult:
    """Numerical supremum of the coupling-ratio functional.

    The removable singularity at the independent coupling is valued at its
    second-derivative limit (hessian_ratio), so the reported value is
    max(hessian_ratio, best over multi-start projected ascent).  The result
    is a certified lower bound on the supremum; it is not a global optimality
    certificate.
    """
    pi = _check_probability_vector(pi)
    a = np.asarray(a_scaled, dtype=float)
    q = pi.size
    if a.shape != (q, q):
        raise ValidationError(f"matrix must be {q}x{q}")
    if not np.allclose(a, a.T, atol=1e-10 * max(1.0, float(np.max(np.abs(a))))):
        raise ValidationError("matrix must be symmetric")
    if restarts < 1:
        raise ValidationError("restarts must be >= 1")

    p = np.outer(pi, pi)
    hess = hessian_ratio(pi, a)
    rng = np.random.default_rng(seed)

    def value_fn(alpha):
        return _coupling_ratio(alpha, p, a)

    def grad_fn(alpha):
        y = alpha - p
        div = kl_divergence(alpha, p)
        num = _quadratic_form(y, a)
        return (2.0 * (a @ y @ a) - (num / div) * (np.log(alpha / p) + 1.0)) / div

    def project(mat):
        return project_to_marginals(mat, pi, pi)

    best_val = -math.inf
    best_alpha = None
    any_converged = False
    for start in _coupling_starts(pi, restarts, rng):
        try:
            alpha, val, conv = _ascend(start, value_fn, grad_fn, project,
                                       max_iter=max_iter)
        except NumericalError:
            continue
        any_converged = any_converged or conv
        if val is not None and val > best_val:
            best_val, best_alpha = val, alpha

    if best_alpha is None or best_val < hess:
        value = hess
        argmax = CouplingMatrix.uncorrelated(pi)
    else:
        value = best_val
        argmax = CouplingMatrix(pi=pi, alpha=best_alpha)
    return QResult(value=value, argmax=argmax, hessian_ratio=hess,
                   restarts_used=restarts, converged=any_converged)


# ---------------------------------------------------------------------------
# Symmetric reduction over doubly stochastic matrices
# ---------------------------------------------------------------------------

def _neg_xlogx(x):
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, -safe * np.log(safe), 0.0)


def row_entropy(alpha: np.ndarray) -> float:
    """Average row entropy H(alpha) = -(1/q) sum alpha_rs log alpha_rs."""
    alpha = np.asarray(alpha, dtype=float)
    q = alpha.shape[0]
    return float(np.sum(_neg_xlogx(alpha))) / q


def _check_doubly_stochastic(alpha: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    q = alpha.shape[0]
    if alpha.shape != (q, q):
        raise ValidationError("alpha must be square")
    if np.any(alpha < -tol):
        raise ValidationError("alpha entries must be nonnegative")
    if (np.max(np.abs(alpha.sum(axis=1) - 1.0)) > tol
            or np.max(np.abs(alpha.sum(axis=0) - 1.0)) > tol):
        raise ValidationError("alpha must be doubly stochastic to 1e-10")
    return np.maximum(alpha, 0.0)


def phi(alpha, q: int, d: float, lam: float) -> float:
    """H(alpha) - log q + (d lam^2 / 2)(|alpha|_F^2 - 1) for doubly stochastic alpha.

    Negative for every doubly stochastic alpha exactly when the coupling
    functional of the corresponding symmetric model is below 1.
    """
    alpha = _check_doubly_stochastic(alpha)
    if alpha.shape[0] != q:
        raise ValidationError(f"alpha must be {q}x{q}")
    frob2 = float(np.sum(alpha * alpha))
    return row_entropy(alpha) - math.log(q) + 0.5 * d * lam * lam * (frob2 - 1.0)


@dataclass(frozen=True)
class PhiMaxResult:
    value: float
    argmax: np.ndarray
    restarts_used: int
    converged: bool


def _doubly_stochastic_starts(q: int, restarts: int, rng: np.random.Generator):
    jq = np.full((q, q), 1.0 / q)
    starts = []
    for scale in (0.02, 0.1):
        starts.append(jq * np.exp(scale * rng.standard_normal((q, q))))
    for t in (0.3, 0.6, 0.9, 0.99):
        starts.append((1 - t) * jq + t * np.eye(q))
    perms = [np.roll(np.arange(q), 1)]
    while len(perms) < 3:
        perms.append(rng.permutation(q))
    for perm in perms:
        mat = np.zeros((q, q))
        mat[np.arange(q), perm] = 1.0
        for t in (0.5, 0.95):
            starts.append((1 - t) * jq + t * mat)
    starts = starts[:restarts]
    while len(starts) < restarts:
        starts.append(np.exp(rng.standard_normal((q, q))))
    return starts


def phi_max(q: int, d: float, lam: float, restarts: int = 32, seed: int = 0,
            max_iter: int = 250) -> PhiMaxResult:
    """Best found maximum of phi over the doubly stochastic polytope.

    Multi-start projected ascent (Sinkhorn re-projection after each step);
    restarts combine perturbations of the uniform matrix, identity and
    permutation mixtures, and random Sinkhorn-normalized positive matrices.
    """
    if q < 2:
        raise ValidationError("q must be >= 2")
    coeff = 0.5 * d * lam * lam
    logq = math.log(q)
    rng = np.random.default_rng(seed)

    def value_fn(alpha):
        frob2 = float(np.sum(alpha * alpha))
        return float(np.sum(_neg_xlogx(alpha))) / q - logq + coeff * (frob2 - 1.0)

    def grad_fn(alpha):
        return -(np.log(alpha) + 1.0) / q + 2.0 * coeff * alpha

    best_val = -math.inf
    best_alpha = None
    any_converged = False
    for start in _doubly_stochastic_starts(q, restarts, rng):
        try:
            alpha, val, conv = _ascend(start, value_fn, grad_fn,
                                       project_doubly_stochastic,
                                       max_iter=max_iter)
        except NumericalError:
            continue
        any_converged = any_converged or conv
        if val is not None and val > best_val:
            best_val, best_alpha = val, alpha
    return PhiMaxResult(value=best_val, argmax=best_alpha,
                        restarts_used=restarts, converged=any_converged)


# ---------------------------------------------------------------------------
# Row-mixture entropy bound (doubly stochastic matrices at fixed Frobenius norm)
# ---------------------------------------------------------------------------

def _mixture_row_entropy(q: int, r):
    """Max row entropy of a stochastic row with squared norm r (r in [1/q, 1])."""
    r = np.asarray(r, dtype=float)
    disc = np.maximum((q - 1) * (q * r - 1.0), 0.0)
    x1 = np.minimum((1.0 + np.sqrt(disc)) / q, 1.0)
    x2 = np.maximum((1.0 - x1) / (q - 1), 0.0)
    return _neg_xlogx(x1) + (q - 1) * _neg_xlogx(x2)


def _entropy_bound_objective(q: int, rho: float, m):
    """Objective of the inner maximization at mixture weight m in [0, m_hi]."""
    m = np.asarray(m, dtype=float)
    rest = 1.0 - m / q
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(m < q, (q * rho - m) / (q * np.maximum(q - m, 1e-300)), 1.0)
    vals = (m / q) * math.log(q) + rest * _mixture_row_entropy(q, r)
    return np.where(m >= q, math.log(q), vals)


def an_entropy_bound(q: int, rho: float, grid: int = 10001) -> float:
    """Upper bound on H(alpha) over doubly stochastic alpha with |alpha|_F^2 = rho.

    Maximizes, over the mixture weight m of uniform rows, the entropy of a
    matrix built from m/q uniform rows and the rest two-valued rows; the
    inner 1-D maximization uses a dense grid plus golden-section refinement.
    """
    if q < 2:
        raise ValidationError("q must be >= 2")
    if rho < 1.0 - 1e-12 or rho > q + 1e-12:
        raise ValidationError(f"rho must lie in [1, q], got {rho}")
    rho = min(max(rho, 1.0), float(q))
    m_hi = q * (q - rho) / (q - 1)
    if m_hi <= 0:
        return float(_entropy_bound_objective(q, rho, 0.0))
    ms = np.linspace(0.0, m_hi, grid)
    vals = _entropy_bound_objective(q, rho, ms)
    ibest = int(np.argmax(vals))
    lo = ms[max(ibest - 1, 0)]
    hi = ms[min(ibest + 1, grid - 1)]
    # golden-section refinement on the bracketing interval
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    e = a + invphi * (b - a)
    fc = _entropy_bound_objective(q, rho, c)
    fe = _entropy_bound_objective(q, rho, e)
    for _ in range(80):
        if b - a < 1e-13 * max(1.0, m_hi):
            break
        if fc >= fe:
            b, e, fe = e, c, fc
            c = b - invphi * (b - a)
            fc = _entropy_bound_objective(q, rho, c)
        else:
            a, c, fc = c, e, fe
            e = a + invphi * (b - a)
            fe = _entropy_bound_objective(q, rho, e)
    candidates = [float(vals[ibest]), float(fc), float(fe)]
    return max(candidates)


def an_inequality_check(q: int, delta: float, rho_grid: int = 200,
                        m_grid: int = 200) -> tuple[bool, float]:
    """Grid check of the mixture inequality behind the contiguity bound.

    Verifies delta (rho - 1)/(q-1)^2 <= (1 - m/q)(f(1/q) - f(r)) on a grid
    over rho in [1, q] and m in [0, q(q-rho)/(q-1)]; holds whenever
    delta < (q-1) log(q-1).  Returns (ok, worst violation); the worst
    violation should be <= 1e-9 when the premise is satisfied.
    """
    if q < 2:
        raise ValidationError("q must be >= 2")
    f_at_uniform = float(_mixture_row_entropy(q, 1.0 / q))
    worst = -math.inf
    for rho in np.linspace(1.0, q, rho_grid):
        m_hi = q * (q - rho) / (q - 1)
        ms = np.linspace(0.0, m_hi, m_grid) if m_hi > 0 else np.array([0.0])
        rest = 1.0 - ms / q
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(ms < q, (q * rho - ms) / (q * (q - ms)), 1.0)
        rhs = rest * (f_at_uniform - _mixture_row_entropy(q, r))
        lhs = delta * (rho - 1.0) / (q - 1) ** 2
        worst = max(worst, float(np.max(lhs - rhs)))
    return worst <= 1e-9, worst


# ---------------------------------------------------------------------------
# Second-moment asymptotics
# ---------------------------------------------------------------------------

def log_psi(x: float) -> float:
    """log of the per-eigenpair second-moment factor; +inf for x >= 1."""
    if x >= 1.0:
        return math.inf
    return -0.5 * math.log1p(-x) - 0.5 * x - 0.25 * x * x


def psi(x: float) -> float:
    """(1-x)^(-1/2) exp(-x/2 - x^2/4); +inf for x >= 1."""
    lp = log_psi(x)
    return math.inf if math.isinf(lp) else math.exp(lp)


def second_moment_product(params: ModelParams) -> float:
    """prod over i,j >= 2 of psi(d lam_i lam_j); +inf when any d lam_i lam_j >= 1."""
    lams = params.eigenvalues[1:]
    prods = params.d * np.outer(lams, lams)
    if prods.size and float(prods.max()) >= 1.0:
        return math.inf
    total = sum(log_psi(float(x)) for x in prods.ravel())
    return math.exp(total)


def nu_terms(params: ModelParams) -> tuple[float, float]:
    """Gaussian-limit centering constants (nu1, nu2).

    nu1 = -(d/2) tr(B)^2 and nu2 = -(d^2/4) tr(B^2)^2; computed both from the
    matrix B and from the eigenvalue sums, which must agree to 1e-10.
    """
    d = params.d
    b = params.B
    nu1_trace = -0.5 * d * float(np.trace(b)) ** 2
    nu2_trace = -0.25 * d * d * float(np.trace(b @ b)) ** 2
    lams = params.eigenvalues[1:]
    nu1_eig = -0.5 * d * float(np.sum(lams)) ** 2
    nu2_eig = -0.25 * d * d * float(np.sum(lams ** 2)) ** 2
    for t, e in ((nu1_trace, nu1_eig), (nu2_trace, nu2_eig)):
        if abs(t - e) > 1e-10 * max(1.0, abs(t)):
            raise NumericalError(
                f"trace-form and eigenvalue-form disagree: {t!r} vs {e!r}"
            )
    return nu1_trace, nu2_trace


def small_subgraph_identity(params: ModelParams, m_trunc: int) -> tuple[float, float, float]:
    """Truncated cycle-statistics series against its closed form.

    lhs = (1/2) sum_{m=3}^{m_trunc} (1/m) sum_{i,j>=2} (d lam_i lam_j)^m,
    rhs = sum_{i,j>=2} log psi(d lam_i lam_j); returns (lhs, rhs, |lhs-rhs|).
    The gap shrinks geometrically in m_trunc inside the convergent regime.
    """
    if m_trunc < 3:
        raise ValidationError("m_trunc must be >= 3")
    lams = params.eigenvalues[1:]
    x = params.d * np.outer(lams, lams)
    if x.size and float(np.max(np.abs(x))) >= 1.0:
        raise ValidationError("series diverges: some |d lam_i lam_j| >= 1")
    power = x * x * x
    lhs = 0.0
    for m in range(3, m_trunc + 1):
        lhs += float(power.sum()) / (2.0 * m)
        power = power * x
    with np.errstate(divide="ignore"):
        rhs = float(np.sum(-0.5 * np.log1p(-x) - 0.5 * x - 0.25 * x * x))
    return lhs, rhs, abs(lhs - rhs)


class Regime(enum.Enum):
    CONTIGUOUS_NONDETECTABLE = "contiguous-nondetectable"
    SECOND_MOMENT_DIVERGES = "second-moment-diverges"
    BOUNDARY = "boundary"


def scaled_contrast(params: ModelParams) -> np.ndarray:
    """(M - d J) / sqrt(2 d): the matrix whose coupling ratio decides contiguity."""
    if params.d <= 0:
        raise ValidationError("scaled contrast requires d > 0")
    return params.A / math.sqrt(2.0 * params.d)


def regime_of_value(value: float, band: float = BOUNDARY_BAND) -> Regime:
    if value < 1.0 - band:
        return Regime.CONTIGUOUS_NONDETECTABLE
    if value > 1.0 + band:
        return Regime.SECOND_MOMENT_DIVERGES
    return Regime.BOUNDARY


def sufficiency_verdict(params: ModelParams, restarts: int = 32,
                        seed: int = 0) -> Regime:
    """Contiguity verdict from the coupling functional at (M - dJ)/sqrt(2d)."""
    res = q_value(params.pi, scaled_contrast(params), restarts=restarts, seed=seed)
    return regime_of_value(res.value)
