"""Checks for the Kakeya-type hypotheses: cones, separation and projection criteria.

The verdict logic is deliberately asymmetric.  "yes" needs a verified cone
(K1a/K1b), separated cone images (K1c) and one passing projection criterion.
"no" is only returned when it can be certified from the linear parts alone;
otherwise the answer is "unknown".
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from . import mat2
from .errors import HypothesisViolated
from .ifs import IfsSystem, fixed_point
from . import geom

DIAGONAL = np.array([1.0, 1.0]) / math.sqrt(2.0)
CONE_MARGIN = 1e-9
SEG_EPS = 1e-12


@dataclass(frozen=True)
class Cone:
    theta: np.ndarray
    beta: float
    margin: float

    @property
    def d_constant(self) -> float:
        return 1.0 / math.cos(self.beta) ** 2

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        nx = np.linalg.norm(x, axis=1)
        return np.abs(x @ self.theta) > math.cos(self.beta / 2) * nx

    def boundary(self) -> np.ndarray:
        """Unit vectors along the two boundary rays (in the positive quadrant)."""
        base = math.atan2(self.theta[1], self.theta[0])
        h = self.beta / 2
        return np.array([[math.cos(base - h), math.sin(base - h)],
                         [math.cos(base + h), math.sin(base + h)]])


@dataclass(frozen=True)
class ConeFailure:
    index: int  # 1-based map label
    entry: tuple  # (row, col), 0-based
    reason: str


def _sign_failure(a: np.ndarray, idx: int) -> ConeFailure | None:
    if np.all(a > 0) or np.all(a < 0):
        return None
    zero = np.argwhere(a == 0)
    if zero.size:
        return ConeFailure(idx, tuple(int(v) for v in zero[0]), "zero entry")
    pos = a > 0
    # the first entry whose sign differs from the (0, 0) entry
    bad = np.argwhere(pos != pos[0, 0])
    return ConeFailure(idx, tuple(int(v) for v in bad[0]), "mixed-sign entries")


def _ray_deviation(a: np.ndarray) -> float:
    """Largest angle from the diagonal among the images of the quadrant's boundary rays."""
    cols = np.concatenate([a, a.T], axis=1)  # A e1, A e2, A^T e1, A^T e2
    ang = np.arctan2(cols[1], cols[0])
    return float(np.max(np.abs(ang - math.pi / 4)))


def find_invariant_cone(sys: IfsSystem):
    """Cone around the diagonal mapped strictly inside itself by every A_i and A_i^T.

    Returns a :class:`Cone` or a :class:`ConeFailure` naming the offending map.
    """
    devs = []
    for i, a in enumerate(sys.linears, start=1):
        fail = _sign_failure(a, i)
        if fail is not None:
            return fail
        devs.append(_ray_deviation(mat2.sign_normalized(a)))
    psi = max(devs)
    beta = 2 * psi + CONE_MARGIN
    if not beta < math.pi / 2:
        return ConeFailure(int(np.argmax(devs)) + 1, (0, 0), "image not strictly inside quadrant")
    return Cone(DIAGONAL.copy(), beta, math.pi / 2 - beta)


# ---------------------------------------------------------------------------
# separation


@dataclass(frozen=True)
class X1Result:
    intervals: tuple
    disjoint: bool
    witness: tuple | None  # overlapping pair (1-based)


def _positive(sys: IfsSystem) -> np.ndarray:
    lin = np.stack([mat2.sign_normalized(a) for a in sys.linears])
    if not np.all(lin > 0):
        bad = int(np.argmax(~np.all(lin > 0, axis=(1, 2)))) + 1
        raise HypothesisViolated(f"map #{bad} does not have strictly positive entries",
                                 which=bad)
    return lin


def _x1_intervals(lin: np.ndarray) -> list[tuple[float, float]]:
    out = []
    for a in lin:
        (u, v), (w, z) = a
        lo, hi = sorted((w / u, z / v))
        out.append((lo, hi))
    return out


def _disjoint_intervals(iv: Sequence[tuple[float, float]]):
    order = sorted(range(len(iv)), key=lambda k: iv[k])
    for p, q in zip(order, order[1:]):
        if not iv[p][1] < iv[q][0]:
            return False, (p + 1, q + 1)
    return True, None


def check_x1(sys: IfsSystem) -> X1Result:
    """Intervals [w/u, z/v] per map (normalised) and whether they are pairwise disjoint."""
    lin = _positive(sys)
    iv = _x1_intervals(lin)
    ok, wit = _disjoint_intervals(iv)
    return X1Result(tuple(iv), ok, wit)


def _image_interval(a: np.ndarray, cone: Cone) -> tuple[float, float]:
    img = (a @ cone.boundary().T).T
    ang = np.arctan2(img[:, 1], img[:, 0])
    return float(ang.min()), float(ang.max())


def check_k1c(sys: IfsSystem, cone: Cone) -> tuple[bool, tuple | None, list]:
    """Images A_i(closure X) must be pairwise disjoint (compared as angle intervals)."""
    lin = np.stack([mat2.sign_normalized(a) for a in sys.linears])
    iv = [_image_interval(a, cone) for a in lin]
    ok, wit = _disjoint_intervals(iv)
    return ok, wit, iv


# ---------------------------------------------------------------------------
# projection criteria


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def segments_cross(p1, p2, q1, q2, eps: float = SEG_EPS) -> bool:
    """True when the open segments meet in exactly one point (proper crossing)."""
    scale = max(np.max(np.abs([p1, p2, q1, q2])), 1.0) ** 2
    tol = eps * scale
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    return ((d1 > tol and d2 < -tol) or (d1 < -tol and d2 > tol)) and \
           ((d3 > tol and d4 < -tol) or (d3 < -tol and d4 > tol))


def subsystem_endpoints(linears, translations, order: Sequence[int]):
    """Endpoints x_i, y_i of the subsystem listed in ``order`` (0-based indices)."""
    lin = [np.asarray(linears[k]) for k in order]
    tr = [np.asarray(translations[k]) for k in order]
    first = np.linalg.solve(np.eye(2) - lin[0], tr[0])
    last = np.linalg.solve(np.eye(2) - lin[-1], tr[-1])
    xs = [a @ first + t for a, t in zip(lin, tr)]
    ys = [a @ last + t for a, t in zip(lin, tr)]
    return np.array(xs), np.array(ys)


def irreducible(m: np.ndarray) -> bool:
    """(Id + M)^(k-1) has all entries positive."""
    k = m.shape[0]
    step = np.eye(k, dtype=bool) | (np.asarray(m) > 0)
    reach = np.eye(k, dtype=bool)
    for _ in range(max(k - 1, 0)):
        reach = (reach.astype(np.int64) @ step.astype(np.int64)) > 0
    return bool(np.all(reach))


def chebyshev_radius(points) -> float:
    """Radius of the largest disc inside the convex hull of the points (0 if flat)."""
    hull = geom.convex_hull(points)
    if hull.shape[0] < 3:
        return 0.0
    m = hull.shape[0]
    a_rows, b_rows = [], []
    for k in range(m):
        p, q = hull[k], hull[(k + 1) % m]
        e = q - p
        n = np.array([e[1], -e[0]]) / np.hypot(*e)  # outward normal for CCW order
        a_rows.append([n[0], n[1], 1.0])
        b_rows.append(float(n @ p))
    res = linprog(c=[0, 0, -1], A_ub=np.array(a_rows), b_ub=np.array(b_rows),
                  bounds=[(None, None), (None, None), (0, None)], method="highs")
    if not res.success:
        return 0.0
    return max(0.0, float(res.x[2]) * (1 - 1e-9))


@dataclass(frozen=True)
class CrossingResult:
    order: tuple  # 1-based labels
    endpoints: tuple
    adjacency: np.ndarray
    irreducible: bool
    rho: float
    passed: bool


def check_segment_crossing(sys: IfsSystem, order: Sequence[int] | None = None,
                      rho_points: int = 20000, seed: int = 0) -> CrossingResult:
    """Crossing graph of the segments (x_i, y_i); passes when it is irreducible."""
    order0 = list(range(sys.kappa)) if order is None else [k - 1 for k in order]
    xs, ys = subsystem_endpoints(sys.linears, sys.translations, order0)
    k = len(order0)
    m = np.zeros((k, k), dtype=int)
    for i in range(k):
        for j in range(i + 1, k):
            if segments_cross(xs[i], ys[i], xs[j], ys[j]):
                m[i, j] = m[j, i] = 1
    irr = irreducible(m)
    rho = 0.0
    if irr:
        cloud = geom.chaos_points(sys, rho_points, seed=seed)
        rho = chebyshev_radius(cloud)
    return CrossingResult(tuple(o + 1 for o in order0), (xs, ys), m, irr, rho, irr)


def _precedes(p, q) -> bool:
    return bool(p[0] < q[0] and p[1] < q[1])


@dataclass(frozen=True)
class ChainResult:
    order: tuple
    chain_holds: bool
    violated: str | None
    rho: float


def check_endpoint_chain(sys: IfsSystem, order: Sequence[int] | None = None) -> ChainResult:
    """Strict coordinatewise chain x_i < x_{i+1} < y_i < y_{i+1}."""
    _positive(sys)
    order0 = list(range(sys.kappa)) if order is None else [k - 1 for k in order]
    xs, ys = subsystem_endpoints(sys.linears, sys.translations, order0)
    lab = [o + 1 for o in order0]
    for i in range(len(order0) - 1):
        for name, p, q in ((f"x{lab[i]} < x{lab[i + 1]}", xs[i], xs[i + 1]),
                           (f"x{lab[i + 1]} < y{lab[i]}", xs[i + 1], ys[i]),
                           (f"y{lab[i]} < y{lab[i + 1]}", ys[i], ys[i + 1])):
            if not _precedes(p, q):
                return ChainResult(tuple(lab), False, name, 0.0)
    rho = float((ys[-1] - xs[0]) @ DIAGONAL)
    return ChainResult(tuple(lab), True, None, rho)


@dataclass(frozen=True)
class PositivityResult:
    verdict: bool
    m1: np.ndarray | None  # A1 B2 - Id
    m2: np.ndarray | None  # (Id - A1) B2
    margin: float
    reason: str | None = None


def check_pair_positivity(a1, a2) -> PositivityResult:
    """Positivity of A1 B2 - Id and (Id - A1) B2 with B2 = (Id - A2)^-1.

    Pairs failing the positivity or X1 hypotheses yield verdict False with a
    reason; non-contractive input raises :class:`HypothesisViolated`.
    """
    a1, a2 = mat2.as_mat2(a1), mat2.as_mat2(a2)
    for k, a in enumerate((a1, a2), start=1):
        if not mat2.svd2(a).alpha1 < 1:
            raise HypothesisViolated(f"matrix {k} is not contractive", which=k)
    if not (np.all(a1 > 0) and np.all(a2 > 0)):
        return PositivityResult(False, None, None, -math.inf, "entries not strictly positive")
    ok, _ = _disjoint_intervals(_x1_intervals(np.stack([a1, a2])))
    b2 = mat2.inv2(np.eye(2) - a2)
    m1 = a1 @ b2 - np.eye(2)
    m2 = (np.eye(2) - a1) @ b2
    margin = float(min(m1.min(), m2.min()))
    if not ok:
        return PositivityResult(False, m1, m2, margin, "X1 intervals not disjoint")
    return PositivityResult(margin > 0, m1, m2, margin, None if margin > 0 else "not strictly positive")


def pair_positivity_conjugated(sys: IfsSystem, i: int, j: int):
    """Apply the positivity test to maps (i, j), moving the fixed point of f_i to 0.

    Translating coordinates (and possibly reflecting through the origin)
    preserves the Kakeya-type property, so it suffices that the conjugated
    translation of f_j lies in the open positive or negative quadrant.
    """
    a_i, a_j = sys.linears[i - 1], sys.linears[j - 1]
    c = fixed_point(sys, i)
    shifted = sys.maps[j - 1](c) - c
    res = check_pair_positivity(a_i, a_j)
    quadrant = bool(np.all(shifted > 0) or np.all(shifted < 0))
    return res, shifted, quadrant


@dataclass(frozen=True)
class HullOverlapResult:
    adjacency: np.ndarray
    irreducible: bool
    passed: bool
    approximate: bool = True


def check_hull_overlap(sys: IfsSystem, budget: int = 20000, seed: int = 0,
                           margin: float | None = None) -> HullOverlapResult:
    """Adjacency of the hulls of rendered cylinder clouds f_i(cloud).

    Rendered points lie on E, so their hulls are inner approximations of
    conv(E_i); an intersection found with a positive margin is therefore real.
    """
    cloud = geom.chaos_points(sys, budget, seed=seed)
    hulls = [geom.convex_hull(m(cloud)) for m in sys.maps]
    if margin is None:
        margin = 1e-9 * max(geom.polygon_diameter(geom.convex_hull(cloud)), 1e-300)
    k = sys.kappa
    adj = np.zeros((k, k), dtype=int)
    for i in range(k):
        for j in range(i + 1, k):
            if geom.convex_polygons_intersect(hulls[i], hulls[j], margin=margin):
                adj[i, j] = adj[j, i] = 1
    irr = irreducible(adj)
    return HullOverlapResult(adj, irr, irr)


# ---------------------------------------------------------------------------
# projective contraction


@dataclass(frozen=True)
class ContractionReport:
    factors: tuple
    eta: float
    decay_constant: float

    def ratio_bound(self, n: int) -> float:
        """Upper bound on alpha2/alpha1 for any product of n >= 1 maps."""
        return self.decay_constant * self.eta ** (n - 1)


def contraction_factor(a) -> float:
    (p, q), (r, s) = mat2.sign_normalized(np.asarray(a, dtype=float))
    return abs(p * s - q * r) / (p * s + q * r + 2 * math.sqrt(p * q * r * s))


def projective_contraction(sys: IfsSystem) -> ContractionReport:
    """Per-map contraction of log-slopes of lines in the positive quadrant.

    The image of the quadrant under A has log-slope width |log(ad/bc)|, and
    every further factor contracts log-slope distances by at most eta; angles
    are at most half the log-slope distance, and alpha2/alpha1 is at most the
    angle between A e1 and A e2.  Hence alpha2/alpha1 <= C eta^(n-1) with
    C = max |log(ad/bc)| / 2.
    """
    lin = _positive(sys)
    factors = tuple(contraction_factor(a) for a in lin)
    widths = [abs(math.log(a[0, 0] * a[1, 1] / (a[0, 1] * a[1, 0]))) for a in lin]
    return ContractionReport(factors, max(factors), 0.5 * max(widths))


# ---------------------------------------------------------------------------
# full report


@dataclass(frozen=True)
class ProjectionOutcome:
    criterion: str  # "segment_crossing" | "endpoint_chain" | "pair_positivity" | "hull_overlap"
    subset: tuple
    passed: bool
    witness: dict


@dataclass(frozen=True)
class KakeyaReport:
    cone: Cone | None
    cone_failure: ConeFailure | None
    k1a: bool
    k1b: bool
    k1c: bool
    k1c_witness: tuple | None
    x1_intervals: tuple | None
    x1_disjoint: bool | None
    projection: tuple  # ProjectionOutcome entries that were tried
    verdict: str
    reason: str


def _certified_no(sys: IfsSystem) -> str | None:
    lin = sys.linears
    for i, a in enumerate(lin, start=1):
        tr = a[0, 0] + a[1, 1]
        det = mat2.det2(a)
        disc = tr * tr - 4 * det
        if disc <= 1e-14 * max(tr * tr, 1e-300) or abs(tr) <= 1e-14:
            return (f"map #{i} has no strictly dominant real eigenvalue, so it maps no "
                    "proper cone strictly into itself")
    for i, j in itertools.combinations(range(len(lin)), 2):
        if np.array_equal(lin[i], lin[j]):
            return f"maps #{i + 1} and #{j + 1} share their linear part, so cone images coincide"
    return None


def _projection_candidates(sys: IfsSystem):
    k = sys.kappa
    out = []
    for i, j in itertools.permutations(range(1, k + 1), 2):
        out.append((i, j))
    if k > 2:
        out.append(tuple(range(1, k + 1)))
    return out


def _sub(sys: IfsSystem, subset: Sequence[int]) -> IfsSystem:
    return IfsSystem(tuple(sys.maps[s - 1] for s in subset))


def full_report(sys: IfsSystem, empirical: bool = True, seed: int = 0) -> KakeyaReport:
    cone_res = find_invariant_cone(sys)
    cone = cone_res if isinstance(cone_res, Cone) else None
    failure = cone_res if isinstance(cone_res, ConeFailure) else None
    k1a = k1b = cone is not None
    k1c, k1c_wit = False, None
    iv, x1_ok = None, None
    if cone is not None:
        k1c, k1c_wit, _ = check_k1c(sys, cone)
        x1 = check_x1(sys)
        iv, x1_ok = x1.intervals, x1.disjoint

    tried: list[ProjectionOutcome] = []
    k2 = False
    if k1a and k1c:
        for subset in _projection_candidates(sys):
            sub = _sub(sys, subset)
            if len(subset) == 2:
                res, shifted, ok = pair_positivity_conjugated(sys, *subset)
                passed = bool(res.verdict and ok)
                tried.append(ProjectionOutcome("pair_positivity", tuple(subset), passed, {
                    "A1B2_minus_Id": None if res.m1 is None else res.m1.tolist(),
                    "Id_minus_A1_B2": None if res.m2 is None else res.m2.tolist(),
                    "margin": res.margin, "shifted_translation": shifted.tolist(),
                    "reason": res.reason}))
                if passed:
                    k2 = True
                    break
            chain = check_endpoint_chain(sub)
            tried.append(ProjectionOutcome("endpoint_chain", tuple(subset), chain.chain_holds, {
                "violated": chain.violated, "rho": chain.rho}))
            if chain.chain_holds:
                k2 = True
                break
            crossing = check_segment_crossing(sub, seed=seed)
            tried.append(ProjectionOutcome("segment_crossing", tuple(subset), crossing.passed, {
                "adjacency": crossing.adjacency.tolist(), "irreducible": crossing.irreducible,
                "rho": crossing.rho}))
            if crossing.passed:
                k2 = True
                break
        if not k2 and empirical:
            overlap = check_hull_overlap(sys, seed=seed)
            tried.append(ProjectionOutcome("hull_overlap", tuple(range(1, sys.kappa + 1)),
                                           overlap.passed, {"adjacency": overlap.adjacency.tolist(),
                                                        "irreducible": overlap.irreducible,
                                                        "approximate": True}))
            k2 = overlap.passed

    if k1a and k1b and k1c and k2:
        verdict, reason = "yes", f"cone, separation and {tried[-1].criterion} on {tried[-1].subset}"
    else:
        no = _certified_no(sys)
        if no is not None:
            verdict, reason = "no", no
        elif not (k1a and k1c):
            verdict, reason = "unknown", "cone or separation conditions not verified"
        else:
            verdict, reason = "unknown", "no projection criterion certified"
    return KakeyaReport(cone, failure, k1a, k1b, k1c, k1c_wit, iv, x1_ok, tuple(tried),
                        verdict, reason)
