"""Block model parameters, reparametrizations, and spectral quantities.

A model is a pair (pi, M): pi is the label distribution over q groups and M
is the symmetric connectivity matrix on the n*probability scale, i.e. the
edge probability between a group-i and a group-j vertex is M[i, j]/n.  All
derived quantities (expected degree d, label transition matrix T, centered
matrices A and B, eigenvalues of T) are computed at construction time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError

# Relative tolerance for the equal-expected-degree requirement.  Inputs are
# user-specified rationals; anything looser hides construction bugs.
DEGREE_RTOL = 1e-9

# Absolute tolerance for snapping the numerically computed top eigenvalue
# of T to its exact value 1.
TOP_EIGENVALUE_TOL = 1e-8


def _check_probability_vector(pi: np.ndarray) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 1 or pi.size < 2:
        raise ValidationError("pi must be a 1-D vector of length >= 2")
    if np.any(pi <= 0):
        raise ValidationError("pi entries must be strictly positive")
    if abs(pi.sum() - 1.0) > 1e-9:
        raise ValidationError(f"pi must sum to 1, got {pi.sum()!r}")
    return pi


@dataclass(frozen=True)
class ModelParams:
    """Block model (pi, M) with derived degree, transition matrix and spectrum.

    Derived fields:
      d            expected degree, sum_j M[i, j] pi[j] (equal for all i)
      T            label transition matrix diag(pi) M / d (row-stochastic)
      A            M - d J (J the all-ones matrix)
      B            diag(pi) A / d, equal to T - outer(pi, 1)
      eigenvalues  eigenvalues of T sorted by decreasing |.|, top snapped to 1
    """

    pi: np.ndarray
    M: np.ndarray
    d: float = field(init=False)
    T: np.ndarray = field(init=False)
    A: np.ndarray = field(init=False)
    B: np.ndarray = field(init=False)
    eigenvalues: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        pi = _check_probability_vector(self.pi)
        M = np.asarray(self.M, dtype=float)
        q = pi.size
        if M.shape != (q, q):
            raise ValidationError(f"M must be {q}x{q}, got {M.shape}")
        if np.any(M < 0):
            raise ValidationError("M entries must be nonnegative")
        if not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, float(M.max(initial=0.0)))):
            raise ValidationError("M must be symmetric")

        degrees = M @ pi
        d = float(degrees.mean())
        if d > 0 and np.any(np.abs(degrees - d) > DEGREE_RTOL * d):
            raise ValidationError(
                f"expected degrees differ across groups: {degrees.tolist()}"
            )

        if d > 0:
            T = (pi[:, None] * M) / d
        else:
            # M == 0 (empty-graph model); any transition matrix is vacuous,
            # take the uniform one so downstream spectral formulas degrade
            # to the lambda = 0 case.
            if np.any(M != 0):
                raise ValidationError("zero expected degree requires M == 0")
            T = np.full((q, q), 1.0 / q)

        A = M - d
        B = (pi[:, None] * A) / d if d > 0 else np.zeros((q, q))

        eigs = _spectrum_of_transition(pi, M, d, q)

        for name, value in (
            ("pi", pi), ("M", M), ("T", T), ("A", A), ("B", B),
            ("eigenvalues", eigs),
        ):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "d", d)

    @property
    def q(self) -> int:
        return self.pi.size

    def to_json(self) -> str:
        return json.dumps({"pi": self.pi.tolist(), "M": self.M.tolist()})


def _spectrum_of_transition(pi: np.ndarray, M: np.ndarray, d: float, q: int) -> np.ndarray:
    """Eigenvalues of T, sorted by decreasing absolute value, top snapped to 1.

    T = diag(pi) M / d is similar to the symmetric matrix
    diag(sqrt(pi)) M diag(sqrt(pi)) / d, so the spectrum is real and can be
    computed with a symmetric eigensolver.
    """
    if d == 0:
        eigs = np.zeros(q)
        eigs[0] = 1.0
        return eigs
    root = np.sqrt(pi)
    sym = (root[:, None] * M * root[None, :]) / d
    try:
        raw = np.linalg.eigvalsh(sym)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - rare
        raise NumericalError(f"eigensolver failed on transition matrix: {exc}") from exc
    order = np.lexsort((-raw, -np.abs(raw)))
    eigs = raw[order]
    if abs(eigs[0] - 1.0) > TOP_EIGENVALUE_TOL:
        raise NumericalError(
            f"top eigenvalue of T is {eigs[0]!r}, expected 1 within {TOP_EIGENVALUE_TOL}"
        )
    eigs[0] = 1.0
    return eigs


@dataclass(frozen=True)
class SymmetricParams:
    """Symmetric block model: q equal groups, within/between rates cin, cout.

    Parametrized by (q, d, lam) where d is the expected degree and lam is the
    second eigenvalue of T: cin = d (1 + (q-1) lam), cout = d (1 - lam).
    """

    q: int
    d: float
    lam: float

    def __post_init__(self) -> None:
        if not isinstance(self.q, (int, np.integer)) or self.q < 2:
            raise ValidationError("q must be an integer >= 2")
        if self.d < 0:
            raise ValidationError("d must be nonnegative")
        lo = -1.0 / (self.q - 1)
        if self.lam < lo - 1e-12 or self.lam > 1 + 1e-12:
            raise ValidationError(
                f"lambda must lie in [{lo}, 1], got {self.lam} (negative cin or cout)"
            )

    @property
    def cin(self) -> float:
        return max(self.d * (1.0 + (self.q - 1) * self.lam), 0.0)

    @property
    def cout(self) -> float:
        return max(self.d * (1.0 - self.lam), 0.0)

    def to_model(self) -> ModelParams:
        q = self.q
        M = np.full((q, q), self.cout)
        np.fill_diagonal(M, self.cin)
        return ModelParams(pi=np.full(q, 1.0 / q), M=M)

    def to_json(self) -> str:
        return json.dumps({"q": self.q, "d": self.d, "lambda": self.lam})


def build_symmetric(q: int, d: float, lam: float) -> ModelParams:
    """Symmetric model with pi = 1/q and M built from (d, lam)."""
    return SymmetricParams(q=q, d=d, lam=lam).to_model()


def spectrum(params: ModelParams) -> np.ndarray:
    """Eigenvalues of T in decreasing order of absolute value (first is 1)."""
    return params.eigenvalues


def trace_power(params: ModelParams, m: int) -> float:
    """tr(T^m) = sum_i eigenvalue_i^m."""
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise ValidationError("m must be an integer >= 1")
    return float(np.sum(params.eigenvalues ** m))


def params_from_json(text: str) -> ModelParams | SymmetricParams:
    """Parse a model from a JSON document {q, d, lambda} or {pi, M}."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError("model JSON must be an object")
    if {"q", "d", "lambda"} <= doc.keys():
        return SymmetricParams(q=int(doc["q"]), d=float(doc["d"]), lam=float(doc["lambda"]))
    if {"pi", "M"} <= doc.keys():
        return ModelParams(pi=np.asarray(doc["pi"], dtype=float),
                           M=np.asarray(doc["M"], dtype=float))
    raise ValidationError("model JSON needs keys {q, d, lambda} or {pi, M}")


def as_model(params: ModelParams | SymmetricParams) -> ModelParams:
    return params.to_model() if isinstance(params, SymmetricParams) else params


def second_eigenvalue(params: ModelParams) -> float:
    return float(params.eigenvalues[1])
