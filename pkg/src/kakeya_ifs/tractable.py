"""Appendix machinery in dimension d <= 8: cone entry, diameter comparability, ball condition.

The ball-condition checker picks *some* centres greedily; a failure therefore
only says that these centres do not work at that (x, r), not that no centres
exist.  Nothing here makes claims about Hausdorff measure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.spatial import ConvexHull, QhullError

from . import mat2
from .errors import BudgetExceeded, HypothesisViolated, NearHyperplane, NoEntry
from .ifs import IfsSystem, parse_config

ENTRY_MARGIN = 1e-12
MAX_ITER = 10_000
HYPERPLANE_TOL = 1e-9


@dataclass(frozen=True)
class AffineSystemND:
    linears: np.ndarray  # (kappa, d, d)
    translations: np.ndarray  # (kappa, d)

    def __post_init__(self):
        lin = np.asarray(self.linears, dtype=float)
        tr = np.asarray(self.translations, dtype=float)
        if lin.ndim != 3 or lin.shape[1] != lin.shape[2] or tr.shape != lin.shape[:2]:
            raise ValueError("linears must be (k, d, d) and translations (k, d)")
        if lin.shape[0] < 2:
            raise ValueError("need at least two maps")
        for a in lin:
            mat2.matd(a)
        object.__setattr__(self, "linears", lin)
        object.__setattr__(self, "translations", tr)

    @property
    def kappa(self) -> int:
        return self.linears.shape[0]

    @property
    def dim(self) -> int:
        return self.linears.shape[1]

    def fixed_point(self, i: int) -> np.ndarray:
        return np.linalg.solve(np.eye(self.dim) - self.linears[i - 1], self.translations[i - 1])

    def apply(self, i: int, pts) -> np.ndarray:
        return np.asarray(pts) @ self.linears[i - 1].T + self.translations[i - 1]


def load_system_nd(document) -> AffineSystemND:
    lin, tr = parse_config(document)
    return AffineSystemND(np.stack(lin), np.stack(tr))


def as_nd(sys) -> AffineSystemND:
    if isinstance(sys, AffineSystemND):
        return sys
    if isinstance(sys, IfsSystem):
        return AffineSystemND(sys.linears, sys.translations)
    raise TypeError(f"unsupported system type {type(sys).__name__}")


# ---------------------------------------------------------------------------
# cone entry


@dataclass(frozen=True)
class ConeEntryResult:
    hyperplane_basis: np.ndarray  # rows span H
    n0: int
    trajectory_margins: tuple  # margins for n = 0 .. n0 + extra
    hilbert_distances: tuple  # distance to the Perron direction for n >= n0
    perron_value: float
    second_modulus: float


def _cone_margin(x: np.ndarray) -> float:
    """Positive iff x lies strictly in the open orthant or its negative."""
    return float(max(np.min(x), np.min(-x)))


def _hilbert(x: np.ndarray, v: np.ndarray) -> float:
    x = x if np.sum(x) > 0 else -x
    q = x / v
    return float(math.log(np.max(q)) - math.log(np.min(q)))


def cone_entry(A, w, max_iter: int = MAX_ITER, extra: int = 50) -> ConeEntryResult:
    """Iterate A^n w until it enters the union of the positive and negative orthants."""
    a = mat2.matd(A)
    if np.all(a < 0):
        a = -a
    if not np.all(a > 0):
        raise HypothesisViolated("A must have strictly one-signed entries so that it maps the "
                                 "closed orthant pair into the open one", which="positivity")
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.shape != (a.shape[0],):
        raise ValueError("w has the wrong dimension")
    ev = np.linalg.eigvals(a)
    lam1 = float(np.max(ev.real))
    others = sorted(np.abs(ev), reverse=True)[1:]
    mu = float(others[0]) if others else 0.0
    # real Schur form of A^T with the Perron root first: its first Schur vector
    # is the left Perron vector and the rest span the complementary invariant H.
    tol = 1e-10 * lam1

    def pick(re, im):
        return abs(im) <= tol and abs(re - lam1) <= tol

    t, z, sdim = scipy.linalg.schur(a.T, output="real", sort=pick)
    schur_vals = np.diag(t)
    if sdim != 1 or not lam1 > max(abs(schur_vals[1:]).max(initial=0.0), mu) * (1 + 1e-12):
        raise HypothesisViolated("Perron root is not simple and dominant", which="perron")
    ell = z[:, 0] if np.sum(z[:, 0]) > 0 else -z[:, 0]
    basis = z[:, 1:].T.copy()
    nw = float(np.linalg.norm(w))
    if nw == 0 or abs(float(ell @ w)) < HYPERPLANE_TOL * nw:
        raise NearHyperplane("w is (numerically) in the invariant hyperplane H")
    vals, vecs = np.linalg.eig(a)
    v = np.real(vecs[:, int(np.argmax(vals.real))])
    v = v if np.sum(v) > 0 else -v

    x = w / nw
    margins, dists = [], []
    n0 = None
    for n in range(max_iter + 1):
        m = _cone_margin(x)
        margins.append(m)
        if n0 is None and m > ENTRY_MARGIN:
            n0 = n
        if n0 is not None:
            dists.append(_hilbert(x, v))
            if n >= n0 + extra:
                break
        x = a @ x
        x /= np.linalg.norm(x)
    if n0 is None:
        raise NoEntry(f"no cone entry within {max_iter} iterations")
    return ConeEntryResult(basis, n0, tuple(margins), tuple(dists), lam1, mu)


# ---------------------------------------------------------------------------
# rendering in R^d


def chaos_cloud(sys, count: int, seed: int = 0, chains: int = 256, burn: int = 100) -> np.ndarray:
    s = as_nd(sys)
    rng = np.random.Generator(np.random.Philox(seed))
    chains = max(1, min(chains, count))
    steps = -(-count // chains)
    p = np.broadcast_to(s.fixed_point(1), (chains, s.dim)).copy()
    out = np.empty((steps, chains, s.dim))
    for k in range(burn + steps):
        idx = rng.integers(0, s.kappa, size=chains)
        p = np.einsum("nij,nj->ni", s.linears[idx], p) + s.translations[idx]
        if k >= burn:
            out[k - burn] = p
    return out.reshape(-1, s.dim)[:count]


def affine_rank_ok(points: np.ndarray, rel: float = 1e-6) -> bool:
    c = points - points.mean(axis=0)
    sv = np.linalg.svd(c, compute_uv=False)
    return bool(sv.size and sv[0] > 0 and sv[-1] >= rel * sv[0] and len(sv) >= points.shape[1])


def hull_vertices(points: np.ndarray, cap: int = 400) -> np.ndarray:
    try:
        v = points[ConvexHull(points).vertices]
    except (QhullError, ValueError):
        # flat or tiny sets: keep the extreme points along each axis
        idx = np.unique(np.concatenate([points.argmin(axis=0), points.argmax(axis=0)]))
        v = points[idx]
    if v.shape[0] > cap:
        v = v[np.linspace(0, v.shape[0] - 1, cap).astype(int)]
    return v


def _differences(v: np.ndarray) -> np.ndarray:
    i, j = np.triu_indices(v.shape[0], k=1)
    return v[j] - v[i]


def _level_matrices(lin: np.ndarray, n: int) -> np.ndarray:
    out = np.eye(lin.shape[1])[None]
    for _ in range(n):
        out = np.einsum("pij,qjk->pqik", out, lin).reshape(-1, lin.shape[1], lin.shape[1])
    return out


def _rendered_diameters(mats: np.ndarray, diffs: np.ndarray, chunk: int = 4096) -> np.ndarray:
    out = np.empty(mats.shape[0])
    for s in range(0, mats.shape[0], chunk):
        img = np.einsum("nij,mj->nmi", mats[s:s + chunk], diffs)
        out[s:s + chunk] = np.sqrt(np.max(np.sum(img * img, axis=-1), axis=1))
    return out


@dataclass(frozen=True)
class ComparabilityReport:
    c_low: float
    c_high: float
    constant: float
    diam_e: float
    per_level: tuple  # (level, min ratio, max ratio)


def diameter_comparability(sys, max_level: int = 8, points: int = 4000, seed: int = 0,
                           require_cone: bool = True, budget: int = 2 ** 20) -> ComparabilityReport:
    """min and max of diam(E_w) / alpha1(A_w) over all words up to ``max_level``.

    Diameters are measured on the image of a rendered cloud of E (an inner
    bound).  ``require_cone=False`` skips the orthant-positivity hypothesis,
    e.g. for similitude systems.
    """
    s = as_nd(sys)
    if require_cone:
        for i, a in enumerate(s.linears, start=1):
            if not (np.all(a > 0) or np.all(a < 0)):
                raise HypothesisViolated(f"map #{i} does not preserve the orthant pair",
                                         which=i)
    total = sum(s.kappa ** n for n in range(1, max_level + 1))
    if total > budget:
        raise BudgetExceeded(f"{total} words exceed the budget {budget}", budget=budget,
                             requested=total)
    cloud = chaos_cloud(s, points, seed)
    if not affine_rank_ok(cloud):
        raise HypothesisViolated("the rendered attractor lies in a hyperplane", which="rank")
    diffs = _differences(hull_vertices(cloud))
    diam_e = float(np.sqrt(np.max(np.sum(diffs * diffs, axis=1))))
    per_level = []
    lo, hi = math.inf, 0.0
    for n in range(1, max_level + 1):
        mats = _level_matrices(s.linears, n)
        a1 = np.linalg.svd(mats, compute_uv=False)[:, 0]
        ratio = _rendered_diameters(mats, diffs) / a1
        per_level.append((n, float(ratio.min()), float(ratio.max())))
        lo, hi = min(lo, float(ratio.min())), max(hi, float(ratio.max()))
    return ComparabilityReport(lo, hi, max(hi, 1.0 / lo), diam_e, tuple(per_level))


# ---------------------------------------------------------------------------
# ball condition


@dataclass(frozen=True)
class BallWitness:
    x: tuple
    r: float
    words: tuple
    centers: tuple
    delta_prime: float


@dataclass(frozen=True)
class BallConditionReport:
    delta: float
    t: float
    scales: tuple
    witnesses: tuple
    min_delta_prime: float
    passed: bool


class _Tree:
    """Cylinder geometry derived from a rendered cloud of E."""

    def __init__(self, s: AffineSystemND, cloud: np.ndarray):
        self.s = s
        self.verts = hull_vertices(cloud)
        self.diffs = _differences(self.verts)
        self.centroid = cloud.mean(axis=0)
        self.radius = float(np.max(np.linalg.norm(self.verts - self.centroid, axis=1)))
        self.cands = np.vstack([self.centroid[None], self.verts])

    def diam(self, a: np.ndarray) -> float:
        img = self.diffs @ a.T
        return float(np.sqrt(np.max(np.sum(img * img, axis=1)))) if img.size else 0.0


def _z_of_ball(tree: _Tree, x: np.ndarray, r: float, budget: int):
    """Words of Z(r) (diameter rule) whose cylinder cloud meets B(x, r)."""
    s = tree.s
    d = s.dim
    found = []
    root_diam = tree.diam(np.eye(d))
    stack = [((), np.eye(d), np.zeros(d), root_diam)]
    visited = 0
    while stack:
        word, a, off, dm = stack.pop()
        for i in range(s.kappa, 0, -1):
            visited += 1
            if visited > budget:
                raise BudgetExceeded(f"Z(x, r) search exceeds the budget {budget}",
                                     budget=budget, requested=visited)
            ca = a @ s.linears[i - 1]
            co = off + a @ s.translations[i - 1]
            cd = tree.diam(ca)
            a1 = float(np.linalg.norm(ca, 2))
            if np.linalg.norm(ca @ tree.centroid + co - x) > r + 1.01 * a1 * tree.radius:
                continue
            member = cd <= r and (dm > r or not word)
            if member or (not word and root_diam <= r):
                found.append(((*word, i), ca, co))
            elif cd > r:
                stack.append(((*word, i), ca, co, cd))
    # keep those whose rendered cylinder actually meets the ball
    out = []
    for w, ca, co in found:
        pts = tree.cands @ ca.T + co
        if np.min(np.linalg.norm(pts - x, axis=1)) <= r:
            out.append((w, ca, co))
    return out


def _choose_centers(cands: list[np.ndarray], rounds: int = 3) -> np.ndarray:
    """Start from the centroid images; move each centre to the candidate that
    increases its distance to the others the most (never decreases the minimum)."""
    cur = np.array([c[0] for c in cands])
    n = len(cands)
    if n < 2:
        return cur
    for _ in range(rounds):
        changed = False
        for k in range(n):
            others = np.delete(cur, k, axis=0)
            best = np.min(np.linalg.norm(others - cur[k], axis=1))
            dist = np.min(np.linalg.norm(cands[k][:, None, :] - others[None], axis=2), axis=1)
            j = int(np.argmax(dist))
            if dist[j] > best:
                cur[k] = cands[k][j]
                changed = True
        if not changed:
            break
    return cur


def ball_condition_check(sys, t: float, delta: float, scales: Sequence[float],
                         sample_points: int = 8, seed: int = 0, cloud_points: int = 3000,
                         budget: int = 2 ** 20) -> BallConditionReport:
    """Finite-scale check of disjoint balls B(x_w, delta r) for w in Z(x, r).

    The first sample point is the fixed point of map 1; the others are drawn
    from a rendered cloud.  ``t`` is recorded for context only.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    scales = [float(r) for r in scales]
    if any(r <= 0 for r in scales) or any(a <= b for a, b in zip(scales, scales[1:])):
        raise ValueError("scales must be positive and strictly decreasing")
    s = as_nd(sys)
    cloud = chaos_cloud(s, cloud_points, seed)
    tree = _Tree(s, cloud)
    rng = np.random.Generator(np.random.Philox(seed + 1))
    xs = [s.fixed_point(1)]
    if sample_points > 1:
        xs += list(cloud[rng.choice(cloud.shape[0], size=sample_points - 1, replace=False)])
    witnesses = []
    worst = 1.0
    for x in xs:
        for r in scales:
            members = _z_of_ball(tree, x, r, budget)
            cands = [tree.cands @ ca.T + co for _, ca, co in members]
            centers = _choose_centers(cands) if cands else np.zeros((0, s.dim))
            if centers.shape[0] >= 2:
                i, j = np.triu_indices(centers.shape[0], k=1)
                dmin = float(np.min(np.linalg.norm(centers[i] - centers[j], axis=1)))
                dp = min(1.0, dmin / (2 * r))
            else:
                dp = 1.0
            worst = min(worst, dp)
            witnesses.append(BallWitness(tuple(float(v) for v in x), r,
                                         tuple(w for w, _, _ in members),
                                         tuple(tuple(float(v) for v in c) for c in centers), dp))
    return BallConditionReport(float(delta), float(t), tuple(scales), tuple(witnesses),
                               worst, worst >= delta)
