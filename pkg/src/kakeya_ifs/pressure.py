"""Singular value function, pressure bounds, dimension brackets and Gibbs diagnostics.

Everything is computed in log-space.  Level sums are streamed block by block
(see :func:`ifs.map_level_blocks`); each block is summed pairwise by numpy and
the per-block partial sums are combined with :func:`math.fsum` in a fixed
order, so results do not depend on the number of worker threads.

Two lower bounds are available.  The first is the classical one,
``upper - log(D)/n`` with ``D = cos(beta)**-2`` from a verified invariant cone.
The second ("block") bound refines it: words are grouped by their first and
last ``k`` symbols, the angle loss between consecutive words is bounded per
pair of groups from the cone images of the group words, and the growth rate
of the resulting nonnegative transfer matrix bounds the pressure from below.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import mat2
from .errors import BudgetExceeded, HypothesisViolated
from .ifs import DEFAULT_BUDGET, BLOCK_WORDS, IfsSystem, level_products, map_level_blocks
from ._threads import map_ordered

# Relative guard subtracted from certified lower bounds to absorb rounding in
# the level sums (|relative error| of a pairwise sum of 2^26 terms is far below).
ROUNDING_GUARD = 1e-10
STORE_LIMIT = 2 ** 22
BLOCK_CLASSES = 64


def log_phi(l1, l2, t: float):
    """log of the singular value function from log singular values (d = 2)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t <= 1.0:
        return t * l1 if t > 0 else l1 * 0.0
    if t <= 2.0:
        return l1 + (t - 1.0) * l2
    return 0.5 * t * (l1 + l2)


def phi(s: mat2.SingularData, t: float) -> float:
    """log phi^t(A) for the matrix whose singular data is ``s``."""
    return float(log_phi(s.log_alpha1, s.log_alpha2, t))


def _coupling_exponent(t: float) -> float:
    # phi^t(AB) >= phi^t(A) phi^t(B) c^e(t) when |cos| of the relevant angle >= c.
    if t <= 1.0:
        return t
    if t <= 2.0:
        return 2.0 - t
    return 0.0


# ---------------------------------------------------------------------------
# multiplicativity certificates


def exactly_multiplicative(sys: IfsSystem, rtol: float = 1e-14) -> bool:
    """True when phi^t is multiplicative on all products (so D = 1 is valid).

    Two sufficient cases: every map is a similitude, or every map is diagonal
    with the same coordinate dominating throughout.
    """
    lin = sys.linears
    simil = True
    for a in lin:
        g = a.T @ a
        s = 0.5 * (g[0, 0] + g[1, 1])
        if abs(g[0, 1]) > rtol * s or abs(g[0, 0] - g[1, 1]) > rtol * s:
            simil = False
            break
    if simil:
        return True
    if np.all(lin[:, 0, 1] == 0) and np.all(lin[:, 1, 0] == 0):
        d0, d1 = np.abs(lin[:, 0, 0]), np.abs(lin[:, 1, 1])
        return bool(np.all(d0 >= d1) or np.all(d1 >= d0))
    return False


def supermult_constant(sys: IfsSystem) -> float:
    """A constant D >= 1 with phi^t(A_ij) >= phi^t(A_i) phi^t(A_j) / D, or inf."""
    if exactly_multiplicative(sys):
        return 1.0
    from .conditions import Cone, find_invariant_cone

    cone = find_invariant_cone(sys)
    if isinstance(cone, Cone):
        return cone.d_constant
    return math.inf


def _positive_linears(sys: IfsSystem):
    """Sign-normalised linear parts if all are strictly positive, else None."""
    lin = np.stack([mat2.sign_normalized(a) for a in sys.linears])
    if np.all(lin > 0):
        return lin
    return None


# ---------------------------------------------------------------------------
# level tables


def _angle_intervals(vecs: np.ndarray) -> np.ndarray:
    """(N, 2, 2) column vectors -> (N, 2) min/max polar angles of the two columns."""
    ang = np.arctan2(vecs[:, 1, :], vecs[:, 0, :])
    return np.stack([ang.min(axis=1), ang.max(axis=1)], axis=1)


@dataclass(frozen=True)
class _Classes:
    k: int
    coupling_angle: np.ndarray  # [suffix class, prefix class] -> max angle


def _block_classes(lin: np.ndarray, n: int) -> _Classes | None:
    kappa = lin.shape[0]
    k = 0
    while k < n and kappa ** (k + 1) <= BLOCK_CLASSES:
        k += 1
    if k == 0:
        return None
    mant, _, _ = level_products(lin, k)
    # range cones A_w(Q) for prefixes, input cones A_u^T(Q) for suffixes
    s_int = _angle_intervals(mant)
    t_int = _angle_intervals(np.transpose(mant, (0, 2, 1)))
    lo_t, hi_t = t_int[:, 0][:, None], t_int[:, 1][:, None]
    lo_s, hi_s = s_int[:, 0][None, :], s_int[:, 1][None, :]
    worst = np.maximum(np.abs(hi_s - lo_t), np.abs(hi_t - lo_s))
    if np.any(worst >= 0.5 * math.pi):
        return None
    return _Classes(k, worst)


class LevelTable:
    """Log singular values of all words of one level, cached or streamed."""

    def __init__(self, sys: IfsSystem, n: int, budget: int = DEFAULT_BUDGET,
                 threads: int | None = None, block_bound: bool = True,
                 store_limit: int = STORE_LIMIT):
        if n < 1:
            raise ValueError("level must be >= 1")
        self.sys = sys
        self.n = n
        self.threads = threads
        self.budget = budget
        self.kappa = sys.kappa
        self.size = sys.kappa ** n
        if self.size > budget:
            raise BudgetExceeded(
                f"level {n} has {self.size} cylinders, above the budget {budget}",
                budget=budget, requested=self.size)
        pos = _positive_linears(sys)
        self.linears = pos if pos is not None else sys.linears
        self.classes = _block_classes(pos, n) if (block_bound and pos is not None) else None
        self._cache = None
        if self.size <= store_limit:
            self._cache = map_level_blocks(self.linears, n, self._logsv, budget=budget,
                                           threads=threads)

    @staticmethod
    def _logsv(start, mant, exps, logdet):
        l1, l2 = mat2.batch_log_singular_values(mant, exps, logdet)
        return start, l1, l2

    def _blocks_apply(self, fn):
        if self._cache is not None:
            return map_ordered(lambda blk: fn(*blk), self._cache, self.threads)
        return map_level_blocks(self.linears, self.n,
                                lambda s, m, e, d: fn(*self._logsv(s, m, e, d)),
                                budget=self.budget, threads=self.threads)

    def all_log_singular_values(self) -> tuple[np.ndarray, np.ndarray]:
        parts = self._blocks_apply(lambda s, l1, l2: (l1, l2))
        return (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))

    def evaluate(self, ts: Sequence[float]) -> list[tuple[float, float]]:
        """(upper, block_lower) pressure bounds at each t; block_lower may be -inf."""
        ts = [float(t) for t in ts]
        cls = self.classes
        n, kappa = self.n, self.kappa

        def per_block(start, l1, l2):
            out = []
            idx = None
            if cls is not None:
                w = start + np.arange(l1.shape[0], dtype=np.int64)
                kk = kappa ** cls.k
                idx = (w // (kappa ** (n - cls.k))) * kk + (w % kk)
            for t in ts:
                lp = log_phi(l1, l2, t)
                m = float(np.max(lp))
                e = np.exp(lp - m)
                f = None
                if idx is not None:
                    f = np.bincount(idx, weights=e, minlength=(kappa ** cls.k) ** 2)
                out.append((m, float(np.sum(e)), f))
            return out

        parts = self._blocks_apply(per_block)
        results = []
        for j, t in enumerate(ts):
            ms = [p[j][0] for p in parts]
            big = max(ms)
            total = math.fsum(p[j][1] * math.exp(p[j][0] - big) for p in parts)
            upper = (big + math.log(total)) / n
            lower = -math.inf
            if cls is not None:
                kk = kappa ** cls.k
                fmat = np.zeros(kk * kk)
                for p in parts:
                    fmat += p[j][2] * math.exp(p[j][0] - big)
                fmat = fmat.reshape(kk, kk)
                coup = np.cos(cls.coupling_angle) ** _coupling_exponent(t)
                rho = float(np.max(np.abs(np.linalg.eigvals(fmat @ coup))))
                if rho > 0:
                    lower = (big + math.log(rho)) / n
                    lower -= ROUNDING_GUARD * (1.0 + abs(lower))
            results.append((upper, lower))
        return results


@dataclass(frozen=True)
class PressureBound:
    t: float
    n: int
    upper: float
    lower: float
    d_constant: float
    block_lower: float = -math.inf
    block_k: int = 0

    @property
    def best_lower(self) -> float:
        return max(self.lower, self.block_lower)


def pressure_bounds(sys: IfsSystem, t: float, n: int, d_constant: float | None = None,
                    budget: int = DEFAULT_BUDGET, threads: int | None = None,
                    block_bound: bool = True) -> PressureBound:
    """Certified bounds on P(t) from level n.

    ``d_constant`` defaults to :func:`supermult_constant`; pass ``math.inf`` to
    disable the classical lower bound.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if n < 1:
        raise ValueError("level must be >= 1")
    if d_constant is None:
        d_constant = supermult_constant(sys)
    if not d_constant >= 1.0:
        raise ValueError("d_constant must be >= 1")
    table = LevelTable(sys, n, budget=budget, threads=threads, block_bound=block_bound)
    upper, block = table.evaluate([t])[0]
    lower = upper - math.log(d_constant) / n if math.isfinite(d_constant) else -math.inf
    k = table.classes.k if table.classes is not None else 0
    return PressureBound(t, n, upper, lower, float(d_constant), block, k)


# ---------------------------------------------------------------------------
# dimension bracket


@dataclass(frozen=True)
class DimensionBracket:
    t_lo: float
    t_hi: float
    n: int
    d_constant: float
    converged: bool = True
    upper_only: bool = False
    n_lo: int = 0
    n_hi: int = 0
    history: tuple = field(default_factory=tuple)

    @property
    def width(self) -> float:
        return self.t_hi - self.t_lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.t_lo + self.t_hi)

    def contains(self, t: float) -> bool:
        return self.t_lo <= t <= self.t_hi


def _level_cap(kappa: int, budget: int) -> int:
    n = 0
    while kappa ** (n + 1) <= budget:
        n += 1
    return n


def dimension_bracket(sys: IfsSystem, tol: float = 1e-3, budget: int = DEFAULT_BUDGET,
                      threads: int | None = None, n_start: int = 8, grid: int = 8,
                      max_passes: int = 64) -> DimensionBracket:
    """Bracket the zero of the pressure using certified bounds at escalating levels.

    At each level the zero of the upper bound and the zero of the lower bound
    are located by multisection (``grid`` test points per interval per pass;
    grid=1 is plain bisection).  ``t_hi`` is the smallest tested t whose upper
    bound is <= 0 and ``t_lo`` the largest tested t whose lower bound is >= 0.
    Levels double from ``n_start`` until the bracket is narrower than ``tol``;
    if the budget caps the level first, :class:`BudgetExceeded` is raised with
    the best bracket attached.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    n_max = _level_cap(sys.kappa, budget)
    if n_max < 1:
        raise BudgetExceeded("budget too small for a single level", budget=budget,
                             requested=sys.kappa)
    d_const = supermult_constant(sys)
    resolution = tol / 8.0

    t_lo, n_lo = 0.0, 0
    t_hi, n_hi = math.inf, 0
    history = []
    n = min(n_start, n_max)
    while True:
        table = LevelTable(sys, n, budget=budget, threads=threads)
        d_term = math.log(d_const) / n if math.isfinite(d_const) else math.inf
        have_lower = math.isfinite(d_term) or table.classes is not None

        def bounds(ts):
            vals = table.evaluate(ts)
            return [(u, max(u - d_term, b)) for (u, b) in vals]

        # upper zero in (a_u, b_u], lower zero in [a_l, b_l)
        a_u, b_u = t_lo, t_hi
        a_l, b_l = t_lo, t_hi
        if not math.isfinite(b_u):
            b = 4.0
            while True:
                if bounds([b])[0][0] <= 0:
                    break
                b *= 2.0
                if b > 64:
                    raise HypothesisViolated("pressure does not vanish below t = 64")
            b_u = b_l = b
            if n_hi == 0:
                t_hi, n_hi = b, n
        passes = 0
        while passes < max_passes:
            need_u = b_u - a_u > resolution
            need_l = have_lower and (b_l - a_l > resolution)
            if not (need_u or need_l):
                break
            ts_u = list(np.linspace(a_u, b_u, grid + 2)[1:-1]) if need_u else []
            ts_l = list(np.linspace(a_l, b_l, grid + 2)[1:-1]) if need_l else []
            vals = bounds(ts_u + ts_l)
            for t, (u, _) in zip(ts_u, vals[: len(ts_u)]):
                if u <= 0:
                    b_u = min(b_u, t)
                else:
                    a_u = max(a_u, t) if t < b_u else a_u
            for t, (_, lo) in zip(ts_l, vals[len(ts_u):]):
                if lo >= 0:
                    a_l = max(a_l, t)
                else:
                    b_l = min(b_l, t) if t > a_l else b_l
            passes += 1
        if b_u < t_hi:
            t_hi, n_hi = b_u, n
        if a_l > t_lo:
            t_lo, n_lo = a_l, n
        history.append({"n": n, "t_lo": float(a_l), "t_hi": float(b_u)})
        width = t_hi - t_lo
        bracket = DimensionBracket(
            t_lo=float(min(t_lo, t_hi)), t_hi=float(t_hi), n=n, d_constant=d_const,
            converged=bool(width <= tol), upper_only=bool(not have_lower),
            n_lo=n_lo, n_hi=n_hi, history=tuple(history))
        if bracket.converged:
            return bracket
        if n >= n_max:
            raise BudgetExceeded(
                f"bracket width {width:.3g} above tol {tol:g} at the largest level "
                f"{n} allowed by the budget {budget}",
                budget=budget, requested=sys.kappa ** (n + 1),
                best=DimensionBracket(**{**bracket.__dict__, "converged": False}))
        n = min(2 * n, n_max)


# ---------------------------------------------------------------------------
# perturbation bounds


@dataclass(frozen=True)
class PerturbationBounds:
    eps: float
    eps1: float
    eps2: float
    T: float
    lambda1: float
    lambda2: float
    pressure_shift: tuple
    delta: float
    d_max: float
    d_prime: float


def perturbation_bounds(sys: IfsSystem, eps: float, d_prime: float | None = None) -> PerturbationBounds:
    """Pressure shift interval for any system whose matrices are within eps entrywise."""
    lin = np.stack([mat2.sign_normalized(a) for a in sys.linears])
    if not np.all(lin > 0):
        raise HypothesisViolated("matrix coefficients are not all strictly positive "
                                 "after sign normalisation", which="positivity")
    delta = float(np.min(np.abs(lin)))
    dets = np.abs(lin[:, 0, 0] * lin[:, 1, 1] - lin[:, 0, 1] * lin[:, 1, 0])
    d_max = float(np.max(dets))
    if d_prime is None:
        d_prime = 0.5 * (d_max + 1.0)
    if not 0 < eps < delta:
        raise HypothesisViolated(f"need 0 < eps < delta = {delta:.6g}, got eps = {eps:g}",
                                 which="eps")
    if not d_max < d_prime < 1:
        raise HypothesisViolated(f"need max|det| = {d_max:.6g} < d_prime < 1, got {d_prime:g}",
                                 which="d_prime")
    if not d_max + 8 * eps < d_prime:
        raise HypothesisViolated("need max|det| + 8 eps < d_prime", which="d_prime")
    eps1 = eps / delta
    eps2 = float(np.max(8.0 * eps / dets))
    if not eps2 < 1:
        raise HypothesisViolated(f"eps2 = {eps2:.6g} must be < 1", which="eps2")
    T = max(2.0 * math.log(sys.kappa) / abs(math.log(d_prime)), 2.0)
    lam1 = (1 - eps1) / (1 + eps1) * (1 - eps2) ** (T / 2)
    lam2 = (1 + eps1) / (1 - eps1) * (1 + eps2) ** (T / 2)
    return PerturbationBounds(eps, eps1, eps2, T, lam1, lam2,
                              (-math.log(lam2), -math.log(lam1)), delta, d_max, float(d_prime))


# ---------------------------------------------------------------------------
# Gibbs diagnostics


@dataclass(frozen=True)
class GibbsReport:
    t: float
    n: int
    seed: int
    mode: str
    samples: int
    weights: np.ndarray | None
    lyapunov1: float
    lyapunov2: float
    lyapunov1_stderr: float
    lyapunov2_stderr: float
    gamma1: float
    gamma2: float
    quasi_mult_worst: float
    gibbs_ratio_range: tuple | None


def _word_digits(idx: np.ndarray, kappa: int, n: int) -> np.ndarray:
    digits = np.empty((idx.shape[0], n), dtype=np.int64)
    rest = idx.copy()
    for pos in range(n - 1, -1, -1):
        digits[:, pos] = rest % kappa
        rest //= kappa
    return digits


def _products_of_digits(lin: np.ndarray, digits: np.ndarray):
    """Scaled products (mantissa, exponent, log|det|) of words given as 0-based digits."""
    mant = np.broadcast_to(np.eye(2), (digits.shape[0], 2, 2)).copy()
    exps = np.zeros(digits.shape[0], dtype=np.int64)
    for pos in range(digits.shape[1]):
        mant, exps = mat2.batch_normalize(mat2.batch_products(mant, lin[digits[:, pos]]), exps)
    ld = mat2.log_abs_dets(lin)[digits].sum(axis=1)
    return mant, exps, ld


def gibbs_report(sys: IfsSystem, t: float, n: int, samples: int = 2000, seed: int = 0,
                 budget: int = 2 ** 22, threads: int | None = None) -> GibbsReport:
    """Finite-level Gibbs weights and Lyapunov exponent estimates at parameter t."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if n < 2:
        raise ValueError("level must be >= 2")
    rng = np.random.Generator(np.random.Philox(seed))
    kappa = sys.kappa
    lin = sys.linears
    weights = None
    ratio_range = None
    if kappa ** n <= budget:
        mode = "exact"
        table = LevelTable(sys, n, budget=budget, threads=threads, block_bound=False)
        l1, l2 = table.all_log_singular_values()
        lp = log_phi(l1, l2, t)
        big = float(np.max(lp))
        e = np.exp(lp - big)
        weights = e / math.fsum(e)
        idx = rng.choice(weights.shape[0], size=samples, p=weights)
        digits = _word_digits(idx, kappa, n)
        s1, s2 = l1[idx], l2[idx]
        # Gibbs-property diagnostic on cylinders of length n // 2
        m = n // 2
        mass = weights.reshape(kappa ** m, -1).sum(axis=1)
        pm, pe, pd = level_products(lin, m)
        q1, q2 = mat2.batch_log_singular_values(pm, pe, pd)
        p_hat = (big + math.log(math.fsum(e))) / n
        logratio = np.log(mass) + m * p_hat - log_phi(q1, q2, t)
        ratio_range = (float(np.exp(np.min(logratio))), float(np.exp(np.max(logratio))))
    else:
        mode = "sequential"
        digits = np.zeros((samples, n), dtype=np.int64)
        mant = np.broadcast_to(np.eye(2), (samples, 2, 2)).copy()
        exps = np.zeros(samples, dtype=np.int64)
        ld = np.zeros(samples)
        sym_ld = mat2.log_abs_dets(lin)
        for pos in range(n):
            cand = np.einsum("sij,kjl->skil", mant, lin).reshape(-1, 2, 2)
            ce = np.repeat(exps, kappa)
            cd = (ld[:, None] + sym_ld[None, :]).reshape(-1)
            cand, ce = mat2.batch_normalize(cand, ce)
            c1, c2 = mat2.batch_log_singular_values(cand, ce, cd)
            lp = log_phi(c1, c2, t).reshape(samples, kappa)
            p = np.exp(lp - lp.max(axis=1, keepdims=True))
            p /= p.sum(axis=1, keepdims=True)
            u = rng.random(samples)
            choice = np.minimum((np.cumsum(p, axis=1) < u[:, None]).sum(axis=1), kappa - 1)
            digits[:, pos] = choice
            sel = np.arange(samples) * kappa + choice
            mant, exps, ld = cand[sel], ce[sel], cd[sel]
        s1, s2 = mat2.batch_log_singular_values(mant, exps, ld)

    x1, x2 = s1 / n, s2 / n
    mean1, mean2 = float(np.mean(x1)), float(np.mean(x2))
    se1 = float(np.std(x1, ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    se2 = float(np.std(x2, ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    denom = mean1 + (t - 1.0) * mean2
    gamma1, gamma2 = mean1 / denom, mean2 / denom

    # quasi-multiplicativity over random prefix splits
    cut = rng.integers(1, n, size=samples)
    whole = log_phi(s1, s2, t)
    worst = math.inf
    for c in np.unique(cut):
        sel = cut == c
        a1, a2 = mat2.batch_log_singular_values(*_products_of_digits(lin, digits[sel, :c]))
        b1, b2 = mat2.batch_log_singular_values(*_products_of_digits(lin, digits[sel, c:]))
        gap = whole[sel] - log_phi(a1, a2, t) - log_phi(b1, b2, t)
        worst = min(worst, float(np.min(gap)))
    return GibbsReport(
        t=float(t), n=n, seed=int(seed), mode=mode, samples=int(samples), weights=weights,
        lyapunov1=math.exp(mean1), lyapunov2=math.exp(mean2),
        lyapunov1_stderr=math.exp(mean1) * se1, lyapunov2_stderr=math.exp(mean2) * se2,
        gamma1=gamma1, gamma2=gamma2, quasi_mult_worst=math.exp(worst),
        gibbs_ratio_range=ratio_range,
    )
