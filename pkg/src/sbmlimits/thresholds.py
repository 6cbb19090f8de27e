"""Closed-form and root-found detectability thresholds for symmetric models.

All functions use the convention 0 * log 0 = 0 at the degenerate corners
(cin = 0 or cout = 0) and return +inf where a bound is vacuous at lam = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

from .errors import ValidationError

BISECT_TOL = 1e-10
BISECT_MAX_ITER = 200
_LAMBDA_SCAN_POINTS = 4096


def _check_q(q: int, minimum: int = 2) -> int:
    if not isinstance(q, int) or q < minimum:
        raise ValidationError(f"q must be an integer >= {minimum}, got {q!r}")
    return q


def _check_lambda(q: int, lam: float) -> float:
    lo = -1.0 / (q - 1)
    if lam < lo - 1e-12 or lam > 1 + 1e-12:
        raise ValidationError(f"lambda must lie in [{lo}, 1], got {lam}")
    return min(max(lam, lo), 1.0)


def _xlogx(x: float) -> float:
    return 0.0 if x <= 0 else x * math.log(x)


def d_upper(q: int, lam: float) -> float:
    """First-moment upper bound on the detection threshold; +inf at lam = 0.

    2 q log q / [(1+(q-1)L) log(1+(q-1)L) + (q-1)(1-L) log(1-L)] with L = lam.
    """
    q = _check_q(q)
    lam = _check_lambda(q, lam)
    if lam == 0:
        return math.inf
    a = 1.0 + (q - 1) * lam       # cin / d
    b = 1.0 - lam                 # cout / d
    den = _xlogx(a) + (q - 1) * _xlogx(b)
    if den <= 0:
        return math.inf
    return 2.0 * q * math.log(q) / den


def d_lower(q: int, lam: float) -> float:
    """Contiguity lower bound (2 log(q-1) / (q-1)) / lam^2; +inf at lam = 0.

    Vacuously 0 at q = 2 (log(q-1) = 0); see ThresholdReport.lower_vacuous.
    """
    q = _check_q(q)
    lam = _check_lambda(q, lam)
    if lam == 0:
        return math.inf
    return (2.0 * math.log(q - 1) / (q - 1)) / (lam * lam)


def kesten_stigum(lam: float) -> float:
    """The spectral threshold 1 / lam^2; +inf at lam = 0."""
    if lam == 0:
        return math.inf
    return 1.0 / (lam * lam)


def _ks_gap(q: int, lam: float) -> float:
    """d_upper(q, lam) * lam^2 - 1, extended continuously through lam = 0."""
    if lam == 0.0:
        return 4.0 * math.log(q) / (q - 1) - 1.0
    du = d_upper(q, lam)
    if math.isinf(du):
        return 4.0 * math.log(q) / (q - 1) - 1.0
    return du * lam * lam - 1.0


def lambda_star(q: int, tol: float = BISECT_TOL) -> float:
    """The root of d_upper(q, lam) = 1/lam^2; d_upper < 1/lam^2 for lam below it.

    Found by a sign-change scan over (-1/(q-1), 1) followed by bisection.
    Raises if no sign change exists in the bracket (q <= 4: the upper bound
    stays above the spectral threshold everywhere).
    """
    q = _check_q(q, minimum=5)
    lo = -1.0 / (q - 1) + 1e-12
    hi = 1.0 - 1e-12
    n = _LAMBDA_SCAN_POINTS
    xs = [lo + (hi - lo) * i / n for i in range(n + 1)]
    vals = [_ks_gap(q, x) for x in xs]
    bracket = None
    for i in range(n):
        if vals[i] < 0 <= vals[i + 1]:
            bracket = (xs[i], xs[i + 1])
            break
    if bracket is None:
        raise ValidationError(
            f"no crossing of d_upper and the spectral threshold for q={q}"
        )
    a, b = bracket
    for _ in range(BISECT_MAX_ITER):
        if b - a < tol:
            break
        mid = 0.5 * (a + b)
        if _ks_gap(q, mid) < 0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def _two_point_entropy(x: float) -> float:
    return -_xlogx(x) - _xlogx(1.0 - x)


def overlap_rate_degree(q: int, lam: float, beta: float) -> float:
    """Degree at which partitions of overlap beta stop being good, as a
    function of beta; increasing in beta and equal to d_upper at beta = 0.
    """
    q = _check_q(q)
    lam = _check_lambda(q, lam)
    if not 0.0 <= beta <= 1.0 - 1.0 / q:
        raise ValidationError(f"beta must lie in [0, 1 - 1/q], got {beta}")
    num = 2.0 * q * (
        _two_point_entropy(beta + 1.0 / q)
        + (1.0 - 1.0 / q - beta) * math.log(q - 1)
    )
    a = 1.0 + (q - 1) * lam
    b = (q - 1) * (1.0 - lam)
    a2 = 1.0 + q * beta * lam
    b2 = q - 1.0 - q * beta * lam
    den = 0.0
    if a > 0:
        den += a * math.log(a / a2)
    if b > 0:
        den += b * math.log(b / b2)
    if den <= 0:
        return math.inf
    return num / den


def beta_guarantee(q: int, lam: float, d: float, tol: float = BISECT_TOL) -> float:
    """Minimum overlap guaranteed for good partitions when d > d_upper.

    Smallest root beta in (0, 1 - 1/q] of the overlap rate equation, found
    by bisection; the right-hand side is increasing in beta, so the crossing
    is unique.
    """
    q = _check_q(q)
    lam = _check_lambda(q, lam)
    du = d_upper(q, lam)
    if not d > du:
        raise ValidationError(
            f"no overlap guarantee below the upper threshold (d={d} <= {du})"
        )
    lo = 1e-12
    hi = 1.0 - 1.0 / q - 1e-12
    flo = overlap_rate_degree(q, lam, lo) - d
    if flo >= 0:
        return lo
    a, b = lo, hi
    for _ in range(BISECT_MAX_ITER):
        if b - a < tol:
            break
        mid = 0.5 * (a + b)
        if overlap_rate_degree(q, lam, mid) - d < 0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def asymptotic_ratio(mu: float) -> float:
    """Large-q limit of d_upper/d_lower at fixed mu = (cin - cout)/d.

    mu^2 / ((1+mu) log(1+mu) - mu); the mu = -1 limit is 1.
    """
    if mu < -1:
        raise ValidationError(f"mu must be >= -1, got {mu}")
    if mu == 0:
        raise ValidationError("mu must be nonzero")
    if mu == -1:
        return 1.0
    den = (1.0 + mu) * math.log1p(mu) - mu
    return mu * mu / den


@dataclass(frozen=True)
class ThresholdReport:
    """Threshold bundle for one (q, lambda) point, optionally with a degree d."""

    q: int
    lam: float
    d: float | None
    d_upper: float
    d_lower: float
    ks: float
    lambda_star: float | None
    beta: float | None
    regime: str | None
    lower_vacuous: bool

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        return out


def threshold_report(q: int, lam: float, d: float | None = None) -> ThresholdReport:
    """Assemble the threshold quantities for one parameter point."""
    q = _check_q(q)
    lam = _check_lambda(q, lam)
    du = d_upper(q, lam)
    dl = d_lower(q, lam)
    ks = kesten_stigum(lam)
    try:
        lstar = lambda_star(q) if q >= 5 else None
    except ValidationError:
        lstar = None
    beta = None
    regime = None
    if d is not None:
        if d < 0:
            raise ValidationError("d must be nonnegative")
        if d > du:
            regime = "detectable-above-upper"
            beta = beta_guarantee(q, lam, d)
        elif d < dl:
            regime = "contiguous"
        else:
            regime = "gap"
    return ThresholdReport(
        q=q, lam=lam, d=d, d_upper=du, d_lower=dl, ks=ks,
        lambda_star=lstar, beta=beta, regime=regime,
        lower_vacuous=(q == 2),
    )
