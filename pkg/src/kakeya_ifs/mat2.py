"""Closed-form 2x2 linear algebra with exponent-rescaled products.

Matrices are plain ``numpy`` arrays of shape ``(2, 2)``.  Long products are
carried as a mantissa plus a power-of-two exponent so that singular values of
words of length 10^4 stay representable.  Batched variants operate on arrays
of shape ``(N, 2, 2)`` and are the workhorse of the level enumerations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import SingularInput

LN2 = math.log(2.0)
_DEGENERATE_GAP = 1e-12


def as_mat2(m) -> np.ndarray:
    """Coerce to a float (2, 2) array, rejecting non-finite entries."""
    a = np.asarray(m, dtype=float)
    if a.shape != (2, 2):
        raise SingularInput(f"expected a 2x2 matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise SingularInput("matrix has non-finite entries")
    return a


def det2(m) -> float:
    a = np.asarray(m, dtype=float)
    return float(a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0])


def inv2(m) -> np.ndarray:
    a = as_mat2(m)
    d = det2(a)
    if d == 0.0:
        raise SingularInput("matrix is singular")
    return np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]]) / d


@dataclass(frozen=True)
class SingularData:
    alpha1: float
    alpha2: float
    theta1: np.ndarray
    theta2: np.ndarray
    log_alpha1: float
    log_alpha2: float


def _gram_angle(a: np.ndarray) -> float:
    # Orientation of the leading eigenvector of A^T A = [[p, q], [q, s]].
    p = a[0, 0] * a[0, 0] + a[1, 0] * a[1, 0]
    s = a[0, 1] * a[0, 1] + a[1, 1] * a[1, 1]
    q = a[0, 0] * a[0, 1] + a[1, 0] * a[1, 1]
    return 0.5 * math.atan2(2.0 * q, p - s)


def _alpha1(a: np.ndarray) -> float:
    # alpha1 = (P + Q) / 2 with P = |(a+d, b-c)|, Q = |(a-d, b+c)|; no cancellation
    (p, q), (r, s) = a
    return 0.5 * (math.hypot(p + s, q - r) + math.hypot(p - s, q + r))


def _svd_mantissa(a: np.ndarray, exponent: int, logdet: float | None = None) -> SingularData:
    """Singular data of ``a * 2**exponent``.

    ``logdet`` (natural log of the represented |det|) may be supplied when it
    is known more accurately than the cancellation-prone ad - bc of the
    mantissa, as for long products of nearly rank-one matrices.
    """
    if not np.all(np.isfinite(a)):
        raise SingularInput("matrix has non-finite entries")
    d = abs(det2(a))
    shift = exponent * LN2
    direct = logdet is None
    if direct:
        if d == 0.0:
            raise SingularInput("matrix is singular (det = 0)")
        logdet = math.log(d) + 2.0 * shift
    elif not math.isfinite(logdet):
        raise SingularInput("matrix is singular (det = 0)")
    a1 = _alpha1(a)
    log_a1 = math.log(a1) + shift
    log_a2 = min(logdet - log_a1, log_a1)
    if log_a1 - log_a2 <= _DEGENERATE_GAP:
        phi = 0.0
    else:
        phi = _gram_angle(a)
    c, sn = math.cos(phi), math.sin(phi)
    theta1 = np.array([c, sn])
    if theta1[0] < 0 or (theta1[0] == 0 and theta1[1] < 0):
        theta1 = -theta1
    theta2 = np.array([-theta1[1], theta1[0]])
    alpha1 = math.ldexp(a1, exponent)
    alpha2 = math.ldexp(d / a1, exponent) if direct else math.exp(log_a2)
    return SingularData(
        alpha1=alpha1,
        alpha2=min(alpha2, alpha1),
        theta1=theta1,
        theta2=theta2,
        log_alpha1=log_a1,
        log_alpha2=log_a2,
    )


def svd2(m) -> SingularData:
    """Singular values and right singular vectors of a 2x2 matrix."""
    if isinstance(m, ScaledMat2):
        return m.svd()
    return _svd_mantissa(as_mat2(m), 0)


def spectral_radius(m) -> float:
    a = as_mat2(m)
    half_tr = 0.5 * (a[0, 0] + a[1, 1])
    d = det2(a)
    disc = half_tr * half_tr - d
    if disc >= 0.0:
        r = math.sqrt(disc)
        return max(abs(half_tr + r), abs(half_tr - r))
    return math.sqrt(d)


@dataclass(frozen=True)
class ScaledMat2:
    """The matrix ``mantissa * 2**exponent`` with max-abs mantissa entry in [1/2, 1).

    ``logdet`` tracks log|det| of the represented matrix additively, which
    stays accurate when the mantissa is numerically close to rank one.
    """

    mantissa: np.ndarray
    exponent: int = 0
    logdet: float | None = None

    def __post_init__(self):
        if self.logdet is None:
            d = abs(det2(self.mantissa))
            ld = math.log(d) + 2.0 * self.exponent * LN2 if d > 0 else -math.inf
            object.__setattr__(self, "logdet", ld)

    @staticmethod
    def identity() -> "ScaledMat2":
        return ScaledMat2(np.eye(2), 0, 0.0)

    @staticmethod
    def from_matrix(m) -> "ScaledMat2":
        a = as_mat2(m)
        mant, e = normalize(a)
        d = abs(det2(a))
        return ScaledMat2(mant, int(e), math.log(d) if d > 0 else -math.inf)

    def __matmul__(self, other) -> "ScaledMat2":
        if not isinstance(other, ScaledMat2):
            other = ScaledMat2.from_matrix(other)
        prod = self.mantissa @ other.mantissa
        mant, e = normalize(prod)
        return ScaledMat2(mant, int(e) + self.exponent + other.exponent,
                          self.logdet + other.logdet)

    def matrix(self) -> np.ndarray:
        """The represented matrix (may underflow for very long words)."""
        return np.ldexp(self.mantissa, self.exponent)

    def svd(self) -> SingularData:
        return _svd_mantissa(self.mantissa, self.exponent, self.logdet)

    def log_singular_values(self) -> tuple[float, float]:
        s = self.svd()
        return s.log_alpha1, s.log_alpha2

    def apply(self, x) -> np.ndarray:
        return np.ldexp(self.mantissa @ np.asarray(x, dtype=float), self.exponent)


def normalize(a: np.ndarray) -> tuple[np.ndarray, int]:
    """Split ``a`` into mantissa (max-abs entry in [1/2, 1)) and exponent."""
    mx = float(np.max(np.abs(a)))
    if mx == 0.0 or not math.isfinite(mx):
        raise SingularInput("cannot normalise a zero or non-finite matrix")
    _, e = math.frexp(mx)
    return np.ldexp(a, -e), e


def scaled_product(ms: Iterable) -> ScaledMat2:
    """Left-to-right product of 2x2 factors, renormalised after every factor."""
    acc = ScaledMat2.identity()
    for m in ms:
        a = as_mat2(m) if not isinstance(m, ScaledMat2) else m
        if not isinstance(a, ScaledMat2) and det2(a) == 0.0:
            raise SingularInput("singular factor in product")
        acc = acc @ a
    return acc


# ---------------------------------------------------------------------------
# batched kernels


def batch_normalize(mant: np.ndarray, exps: np.ndarray | None = None):
    """Renormalise a stack of matrices; returns (mantissas, int64 exponents)."""
    mx = np.max(np.abs(mant.reshape(mant.shape[0], 4)), axis=1)
    _, e = np.frexp(mx)
    e = e.astype(np.int64)
    out = np.ldexp(mant, -e[:, None, None])
    if exps is not None:
        e = e + exps
    return out, e


def batch_log_singular_values(mant: np.ndarray, exps: np.ndarray | None = None,
                              logdet: np.ndarray | None = None):
    """Natural logs of (alpha1, alpha2) for a stack of scaled matrices.

    Pass ``logdet`` (log|det| of the represented matrices) whenever it is
    available; alpha2 is then |det| / alpha1 without cancellation.
    """
    a, b = mant[:, 0, 0], mant[:, 0, 1]
    c, d = mant[:, 1, 0], mant[:, 1, 1]
    det = np.abs(a * d - b * c)
    a1 = 0.5 * (np.hypot(a + d, b - c) + np.hypot(a - d, b + c))
    l1 = np.log(a1)
    if exps is not None:
        l1 = l1 + exps.astype(float) * LN2
    if logdet is not None:
        return l1, np.minimum(logdet - l1, l1)
    with np.errstate(divide="ignore"):
        l2 = np.log(det) - np.log(a1)
    if exps is not None:
        l2 = l2 + exps.astype(float) * LN2
    return l1, l2


def log_abs_dets(linears: np.ndarray) -> np.ndarray:
    lin = np.asarray(linears, dtype=float)
    return np.log(np.abs(lin[:, 0, 0] * lin[:, 1, 1] - lin[:, 0, 1] * lin[:, 1, 0]))


def batch_products(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Pairwise products ``left[i] @ right[i]`` for stacks of 2x2 matrices."""
    return np.einsum("nij,njk->nik", left, right)


def sign_normalized(m: np.ndarray) -> np.ndarray:
    """Flip an all-negative matrix to all-positive; leave others unchanged."""
    a = np.asarray(m, dtype=float)
    if np.all(a < 0):
        return -a
    return a


def matd(m, max_dim: int = 8) -> np.ndarray:
    """Validate a small square matrix for the d-dimensional routines."""
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise SingularInput(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] > max_dim:
        raise SingularInput(f"dimension {a.shape[0]} exceeds the cap {max_dim}")
    if not np.all(np.isfinite(a)):
        raise SingularInput("matrix has non-finite entries")
    return a


def products_of(ms: Sequence) -> np.ndarray:
    """Plain (unscaled) left-to-right product; convenient for short words."""
    out = np.eye(2)
    for m in ms:
        out = out @ np.asarray(m, dtype=float)
    return out
