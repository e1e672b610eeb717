"""Attractor rendering, neighbourhood areas, box dimension and Kakeya rectangles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy import ndimage, optimize, stats
from scipy.spatial import cKDTree

from . import mat2
from .errors import BudgetExceeded, HypothesisViolated, ResolutionError
from .ifs import IfsSystem, fixed_point, level_products

BURN_IN = 100
DEFAULT_RENDER_BUDGET = 2 ** 27


# ---------------------------------------------------------------------------
# convex polygons


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> np.ndarray:
    """Counter-clockwise hull vertices (monotone chain); collinear points dropped."""
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if pts.shape[0] <= 2:
        return pts
    pts = [tuple(p) for p in pts]
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def polygon_area(poly) -> float:
    p = np.asarray(poly, dtype=float)
    if p.shape[0] < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def polygon_diameter(poly) -> float:
    p = np.asarray(poly, dtype=float)
    if p.shape[0] < 2:
        return 0.0
    d = p[:, None, :] - p[None, :, :]
    return float(np.sqrt(np.max(np.sum(d * d, axis=-1))))


def clip_convex(subject, clip) -> np.ndarray:
    """Sutherland-Hodgman: intersection of a polygon with a convex CCW polygon."""
    out = [tuple(p) for p in np.asarray(subject, dtype=float)]
    c = [tuple(p) for p in np.asarray(clip, dtype=float)]
    for k in range(len(c)):
        a, b = c[k], c[(k + 1) % len(c)]
        inp, out = out, []
        if not inp:
            break
        prev = inp[-1]
        prev_in = _cross(a, b, prev) >= 0
        for cur in inp:
            cur_in = _cross(a, b, cur) >= 0
            if cur_in != prev_in:
                # intersection of segment prev-cur with the clip line a-b
                d1 = _cross(a, b, prev)
                d2 = _cross(a, b, cur)
                s = d1 / (d1 - d2)
                out.append((prev[0] + s * (cur[0] - prev[0]), prev[1] + s * (cur[1] - prev[1])))
            if cur_in:
                out.append(cur)
            prev, prev_in = cur, cur_in
    return np.array(out).reshape(-1, 2)


def convex_polygons_intersect(p, q, margin: float = 0.0) -> bool:
    """Separating-axis test; with margin > 0 the overlap must exceed it on every axis."""
    p = np.asarray(p, dtype=float).reshape(-1, 2)
    q = np.asarray(q, dtype=float).reshape(-1, 2)
    axes = []
    for poly in (p, q):
        m = poly.shape[0]
        if m == 1:
            continue
        for k in range(m if m > 2 else 1):
            e = poly[(k + 1) % m] - poly[k]
            if np.hypot(*e) > 0:
                axes.append(np.array([-e[1], e[0]]) / np.hypot(*e))
                if m == 2:
                    axes.append(e / np.hypot(*e))
    if not axes:
        d = p[0] - q[0]
        return bool(np.hypot(*d) <= -margin)
    for n in axes:
        pp, qq = p @ n, q @ n
        overlap = min(pp.max(), qq.max()) - max(pp.min(), qq.min())
        if overlap < margin or (margin == 0.0 and overlap < 0):
            return False
    return True


def points_in_convex(points, poly) -> np.ndarray:
    """Boolean mask of points inside (or on) a CCW convex polygon."""
    pts = np.asarray(points, dtype=float)
    poly = np.asarray(poly, dtype=float)
    inside = np.ones(pts.shape[0], dtype=bool)
    for k in range(poly.shape[0]):
        a, b = poly[k], poly[(k + 1) % poly.shape[0]]
        cr = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
        inside &= cr >= 0
    return inside


# ---------------------------------------------------------------------------
# rendering


def _apply_all(linears, translations, pts):
    # (k, N, 2): every map applied to every point
    return np.einsum("kij,nj->kni", linears, pts) + translations[:, None, :]


def enclosing_polygon(sys: IfsSystem, tol: float = 1e-7, max_iter: int = 200) -> np.ndarray:
    """A convex polygon K with f_i(K) inside K for all i; hence E is inside K.

    Starts from a square containing E and iterates K <- hull(union f_i(K)).
    """
    lin, tr = sys.linears, sys.translations
    r = sys.radius_bound()
    k = np.array([[-r, -r], [r, -r], [r, r], [-r, r]], dtype=float)
    scale = 2 * r * math.sqrt(2)
    for it in range(max_iter):
        k = convex_hull(_apply_all(lin, tr, k).reshape(-1, 2))
        scale *= sys.alpha_bar
        if scale < tol * max(polygon_diameter(k), 1e-300):
            break
    return k


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    gen: dict
    diameter_bound: float


def chaos_points(sys: IfsSystem, count: int, seed: int = 0, chains: int = 1024) -> np.ndarray:
    """Chaos-game points; all chains start at the fixed point of map 1 (so lie on E)."""
    rng = np.random.Generator(np.random.Philox(seed))
    lin, tr = sys.linears, sys.translations
    chains = max(1, min(chains, count))
    steps = -(-count // chains)
    p = np.broadcast_to(fixed_point(sys, 1), (chains, 2)).copy()
    out = np.empty((steps, chains, 2))
    for s in range(BURN_IN + steps):
        idx = rng.integers(0, sys.kappa, size=chains)
        p = np.einsum("nij,nj->ni", lin[idx], p) + tr[idx]
        if s >= BURN_IN:
            out[s - BURN_IN] = p
    return out.reshape(-1, 2)[:count]


def stopping_exponent(sys: IfsSystem, probe_words: int = 1 << 16) -> float:
    """Zero s of sum over a short level of alpha1(A_w)**s.

    The number of cylinders with alpha1 <= r grows roughly like r**(-s); this
    is used to refuse hopeless stopping-set renders before enumerating them.
    """
    m = max(1, int(math.log(probe_words) / math.log(sys.kappa)))
    mant, exps, ld = level_products(sys.linears, m)
    l1, _ = mat2.batch_log_singular_values(mant, exps, ld)
    return float(optimize.brentq(lambda s: np.logaddexp.reduce(s * l1), 0.0, 1e3))


def estimated_stopping_count(sys: IfsSystem, r: float) -> float:
    if r >= 1:
        return 1.0
    return math.exp(-stopping_exponent(sys) * math.log(r))


def stopping_point_batches(sys: IfsSystem, r: float, budget: int = DEFAULT_RENDER_BUDGET,
                           batch: int = 1 << 19) -> Iterator[tuple[np.ndarray, float]]:
    """Yield (points, max alpha1) for the cylinders with alpha1(A_w) <= r.

    Each point is f_w(p) with p the fixed point of map 1, i.e. a point of E_w.
    Work proceeds depth-first in fixed-size batches so memory stays bounded.
    """
    if not 0 < r:
        raise ValueError("r must be positive")
    lin, tr = sys.linears, sys.translations
    base, base_e = mat2.batch_normalize(lin.astype(float))
    p0 = fixed_point(sys, 1)
    logr = math.log(r)
    stack = [(np.eye(2)[None].copy(), np.zeros(1, dtype=np.int64), np.zeros((1, 2)))]
    produced = 0
    if logr >= 0:
        yield p0[None].copy(), 1.0
        return
    guess = estimated_stopping_count(sys, r)
    if guess > budget:
        raise BudgetExceeded(f"rendering needs about {guess:.3g} cylinders, more than the "
                             f"budget {budget}", budget=budget, requested=int(min(guess, 2**62)))
    while stack:
        mant, exps, off = stack.pop()
        if mant.shape[0] > batch:
            stack.append((mant[batch:], exps[batch:], off[batch:]))
            mant, exps, off = mant[:batch], exps[:batch], off[:batch]
        kids_m = np.einsum("nij,kjl->knil", mant, base).reshape(-1, 2, 2)
        kids_e = (exps[None, :] + base_e[:, None]).reshape(-1)
        kids_m, kids_e = mat2.batch_normalize(kids_m, kids_e)
        shift = np.ldexp(np.einsum("nij,kj->kni", mant, tr), exps[None, :, None])
        kids_o = (off[None] + shift).reshape(-1, 2)
        l1, _ = mat2.batch_log_singular_values(kids_m, kids_e)
        done = l1 <= logr
        if np.any(done):
            pts = kids_o[done] + np.ldexp(kids_m[done] @ p0, kids_e[done][:, None])
            produced += pts.shape[0]
            if produced > budget:
                raise BudgetExceeded(f"rendering needs more than {budget} cylinders",
                                     budget=budget, requested=produced)
            yield pts, float(np.exp(np.max(l1[done])))
        keep = ~done
        if np.any(keep):
            stack.append((kids_m[keep], kids_e[keep], kids_o[keep]))


def render(sys: IfsSystem, mode: str = "chaos", budget: int = DEFAULT_RENDER_BUDGET,
           seed: int = 0, count: int | None = None, r: float | None = None) -> PointCloud:
    """Points of E by the chaos game or one point per stopping-set cylinder.

    In stopping mode ``r`` is the target cylinder diameter; the returned
    ``diameter_bound`` is max alpha1(A_w) * diam(K) over the cylinders, with K
    the enclosing polygon.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    k = enclosing_polygon(sys)
    diam_k = polygon_diameter(k)
    if mode == "chaos":
        count = int(min(budget, count if count is not None else 100_000))
        pts = chaos_points(sys, count, seed)
        bound = sys.alpha_bar ** BURN_IN * diam_k
        return PointCloud(pts, {"mode": "chaos", "seed": int(seed), "count": count}, bound)
    if mode == "stopping":
        if r is None:
            r = diam_k / 64
        rr = r / diam_k if diam_k > 0 else 1.0
        chunks, amax = [], 0.0
        for pts, a in stopping_point_batches(sys, rr, budget=budget):
            chunks.append(pts)
            amax = max(amax, a)
        pts = np.concatenate(chunks)
        gen = {"mode": "stopping", "t": 1.0, "r": float(rr),
               "seed_point": fixed_point(sys, 1).tolist()}
        return PointCloud(pts, gen, amax * diam_k)
    raise ValueError(f"unknown render mode {mode!r}")


# ---------------------------------------------------------------------------
# rasters and neighbourhood areas


@dataclass(frozen=True)
class Raster:
    origin: np.ndarray
    h: float
    occupancy: np.ndarray  # indexed [ix, iy]

    @property
    def width(self) -> int:
        return self.occupancy.shape[0]

    @property
    def height(self) -> int:
        return self.occupancy.shape[1]

    def area(self) -> float:
        return float(np.count_nonzero(self.occupancy)) * self.h * self.h

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        xs = self.origin[0] + (np.arange(self.width) + 0.5) * self.h
        ys = self.origin[1] + (np.arange(self.height) + 0.5) * self.h
        return xs, ys


def grid_for(lo, hi, h: float, pad: float = 0.0, margin_cells: int = 2):
    lo = np.asarray(lo, dtype=float) - pad - margin_cells * h
    hi = np.asarray(hi, dtype=float) + pad + margin_cells * h
    shape = np.maximum(np.ceil((hi - lo) / h).astype(int), 1)
    return lo, tuple(int(s) for s in shape)


def rasterize_points(points, h: float, pad: float = 0.0, lo=None, hi=None) -> Raster:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    lo = pts.min(axis=0) if lo is None else lo
    hi = pts.max(axis=0) if hi is None else hi
    origin, shape = grid_for(lo, hi, h, pad)
    occ = np.zeros(shape, dtype=bool)
    _stamp(occ, origin, h, pts)
    return Raster(origin, h, occ)


def _stamp(occ, origin, h, pts):
    ij = np.floor((pts - origin) / h).astype(np.int64)
    ok = (ij[:, 0] >= 0) & (ij[:, 1] >= 0) & (ij[:, 0] < occ.shape[0]) & (ij[:, 1] < occ.shape[1])
    if not np.all(ok):
        raise ValueError("points fall outside the raster")
    occ[ij[:, 0], ij[:, 1]] = True


@dataclass(frozen=True)
class AreaEstimate:
    area: float
    error: float
    h: float
    delta: float
    method: str


def _area_from_distances(dist: np.ndarray, delta: float, h: float, slack: float):
    inside = dist <= delta
    unsure = (dist > delta - slack) & (dist <= delta + slack)
    return float(np.count_nonzero(inside)) * h * h, float(np.count_nonzero(unsure)) * h * h


KDTREE_CELL_LIMIT = 4_000_000


def neighborhood_area(cloud, delta: float, h: float | None = None) -> AreaEstimate:
    """Area of the delta-neighbourhood of a point cloud, with a two-sided error bound.

    A grid cell counts when its centre is within delta of the cloud.  Cells
    whose centre lies within ``slack`` of the neighbourhood boundary may be
    misclassified, so the error is (number of such cells) * h^2, where slack is
    half a cell diagonal (plus another half diagonal when points are snapped
    to cells for the distance transform).
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    pts = pts.reshape(-1, 2)
    if h is None:
        h = delta / 8
    if h > delta / 4:
        raise ResolutionError(f"cell size {h:g} exceeds delta/4 = {delta / 4:g}")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    origin, shape = grid_for(lo, hi, h, pad=delta)
    half_diag = h / math.sqrt(2)
    if shape[0] * shape[1] <= KDTREE_CELL_LIMIT:
        xs = origin[0] + (np.arange(shape[0]) + 0.5) * h
        ys = origin[1] + (np.arange(shape[1]) + 0.5) * h
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        tree = cKDTree(pts)
        dist, _ = tree.query(np.column_stack([gx.ravel(), gy.ravel()]),
                             distance_upper_bound=delta + 2 * h)
        area, err = _area_from_distances(dist, delta, h, half_diag)
        return AreaEstimate(area, err, h, delta, "kdtree")
    occ = np.zeros(shape, dtype=bool)
    _stamp(occ, origin, h, pts)
    dist = ndimage.distance_transform_edt(~occ) * h
    area, err = _area_from_distances(dist, delta, h, 2 * half_diag)
    return AreaEstimate(area, err, h, delta, "edt")


@dataclass(frozen=True)
class BoxDimEstimate:
    deltas: tuple
    areas: tuple
    errors: tuple
    slope: float
    intercept: float
    stderr: float
    dim_estimate: float
    fit_count: int
    h: float
    diameter_bound: float
    n_points: int
    mode: str
    seed: int | None = None


def default_deltas(diam: float, count: int = 12) -> list[float]:
    top = diam / 16
    return [top * 2 ** (-0.5 * k) for k in range(count)]


def box_dimension(sys: IfsSystem, deltas: Sequence[float] | None = None,
                  budget: int = DEFAULT_RENDER_BUDGET, mode: str = "stopping", seed: int = 0,
                  count: int | None = None, include_largest: bool = False,
                  cell_fraction: float = 8.0) -> BoxDimEstimate:
    """Minkowski-dimension estimate from the log-log slope of neighbourhood areas.

    One fine raster (cell size delta_min / cell_fraction) is filled with the
    rendered points and a single Euclidean distance transform serves every delta.
    Stopping mode renders cylinders of diameter <= delta_min / 8.  Mode "auto"
    uses stopping mode when the estimated number of cylinders fits the budget
    and the chaos game otherwise (strongly anisotropic systems).
    """
    kpoly = enclosing_polygon(sys)
    diam = polygon_diameter(kpoly)
    if deltas is None:
        deltas = default_deltas(diam)
    deltas = sorted((float(d) for d in deltas), reverse=True)
    if len(deltas) < 3 or any(d <= 0 for d in deltas) or len(set(deltas)) != len(deltas):
        raise ValueError("need at least 3 distinct positive deltas")
    dmin, dmax = deltas[-1], deltas[0]
    h = dmin / cell_fraction
    if h > dmin / 4:
        raise ResolutionError("cell_fraction must be >= 4")
    lo, hi = kpoly.min(axis=0), kpoly.max(axis=0)
    origin, shape = grid_for(lo, hi, h, pad=dmax + 2 * h)
    occ = np.zeros(shape, dtype=bool)
    n_points = 0
    if mode == "auto":
        fits = estimated_stopping_count(sys, dmin / 8 / diam) <= budget
        mode = "stopping" if fits else "chaos"
    if mode == "stopping":
        r = dmin / 8 / diam
        amax = 0.0
        for pts, a in stopping_point_batches(sys, r, budget=budget):
            _stamp(occ, origin, h, pts)
            n_points += pts.shape[0]
            amax = max(amax, a)
        dbound = amax * diam
    elif mode == "chaos":
        count = int(count if count is not None else 4_000_000)
        if count > budget:
            raise BudgetExceeded(f"{count} points exceed the budget {budget}",
                                 budget=budget, requested=count)
        done = 0
        step = 1 << 20
        rng_seed = seed
        for k in range(0, count, step):
            m = min(step, count - k)
            pts = chaos_points(sys, m, seed=rng_seed + k)
            _stamp(occ, origin, h, pts)
            done += m
        n_points = done
        dbound = sys.alpha_bar ** BURN_IN * diam
    else:
        raise ValueError(f"unknown mode {mode!r}")
    dist = ndimage.distance_transform_edt(~occ) * h
    slack = math.sqrt(2) * h
    areas, errors = [], []
    for d in deltas:
        a, e = _area_from_distances(dist, d, h, slack)
        areas.append(a)
        errors.append(e)
    del dist
    skip = 0 if include_largest else 2
    xs = np.log(np.array(deltas[skip:]))
    ys = np.log(np.array(areas[skip:]))
    fit = stats.linregress(xs, ys)
    return BoxDimEstimate(
        deltas=tuple(deltas), areas=tuple(areas), errors=tuple(errors),
        slope=float(fit.slope), intercept=float(fit.intercept), stderr=float(fit.stderr),
        dim_estimate=2.0 - float(fit.slope), fit_count=len(xs), h=h,
        diameter_bound=float(dbound), n_points=int(n_points), mode=mode,
        seed=int(seed) if mode == "chaos" else None,
    )


# ---------------------------------------------------------------------------
# Kakeya rectangles


def kakeya_bound(M: int, alpha1: float, alpha2: float, tau: float) -> float:
    """Lower bound on the area of a set meeting M well-spread rectangles in mass tau*a1*a2."""
    if not alpha1 > alpha2 > 0:
        raise HypothesisViolated("need alpha1 > alpha2 > 0", which="alpha")
    if not 0 <= tau <= 1:
        raise HypothesisViolated("need 0 <= tau <= 1", which="tau")
    if M < 1:
        raise HypothesisViolated("need M >= 1", which="M")
    ratio = 2 * math.pi * alpha1 / alpha2
    if not ratio > 1:
        raise HypothesisViolated("need 2 pi alpha1 / alpha2 > 1", which="ratio")
    return M * tau * tau * alpha1 * alpha2 / (2 * math.sqrt(2) * math.pi * math.log(ratio))


@dataclass(frozen=True)
class Rect:
    center: np.ndarray
    long_axis: np.ndarray
    len1: float
    len2: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(2)
        u = np.asarray(self.long_axis, dtype=float).reshape(2)
        nu = float(np.hypot(*u))
        if nu == 0:
            raise ValueError("long_axis must be nonzero")
        if not self.len1 > self.len2 > 0:
            raise ValueError("need len1 > len2 > 0")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "long_axis", u / nu)

    @classmethod
    def at_angle(cls, center, angle: float, len1: float, len2: float) -> "Rect":
        return cls(np.asarray(center, dtype=float), np.array([math.cos(angle), math.sin(angle)]),
                   len1, len2)

    def corners(self) -> np.ndarray:
        u = self.long_axis
        v = np.array([-u[1], u[0]])
        a, b = 0.5 * self.len1 * u, 0.5 * self.len2 * v
        c = self.center
        return np.array([c - a - b, c + a - b, c + a + b, c - a + b])

    @property
    def area(self) -> float:
        return self.len1 * self.len2

    @property
    def perimeter(self) -> float:
        return 2 * (self.len1 + self.len2)


def axis_angle(r1: Rect, r2: Rect) -> float:
    """Angle in [0, pi/2] between the long sides."""
    c = abs(float(np.dot(r1.long_axis, r2.long_axis)))
    return math.acos(min(1.0, c))


def rect_intersection_area(r1: Rect, r2: Rect) -> float:
    return polygon_area(clip_convex(r1.corners(), r2.corners()))


def overlap_bound(r1: Rect, r2: Rect) -> float:
    """sqrt(2) pi a2^2 / (a2/a1 + angle): bound on the overlap of two equal rectangles."""
    a1, a2 = r1.len1, r1.len2
    return math.sqrt(2) * math.pi * a2 * a2 / (a2 / a1 + axis_angle(r1, r2))


def fan(M: int, alpha1: float, alpha2: float, center=(0.0, 0.0), start: float = 0.0,
        spacing: float | None = None) -> list[Rect]:
    """M rectangles about a common centre, consecutive long axes ``spacing`` apart."""
    if spacing is None:
        spacing = alpha2 / alpha1
    return [Rect.at_angle(center, start + k * spacing, alpha1, alpha2) for k in range(M)]


def rasterize_rects(rects: Sequence[Rect], h: float) -> Raster:
    allc = np.concatenate([r.corners() for r in rects])
    origin, shape = grid_for(allc.min(axis=0), allc.max(axis=0), h)
    occ = np.zeros(shape, dtype=bool)
    for r in rects:
        _fill_convex(occ, origin, h, r.corners())
    return Raster(origin, h, occ)


def _convex_columns(shape, origin, h, poly):
    """Scanline cover of a convex polygon: for each column whose centre line
    crosses it, the half-open range of rows whose cell centres lie inside."""
    poly = np.asarray(poly, dtype=float)
    i0 = max(int(math.ceil((poly[:, 0].min() - origin[0]) / h - 0.5)), 0)
    i1 = min(int(math.floor((poly[:, 0].max() - origin[0]) / h - 0.5)), shape[0] - 1)
    if i1 < i0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    cols = np.arange(i0, i1 + 1)
    xs = origin[0] + (cols + 0.5) * h
    p, q = poly, np.roll(poly, -1, axis=0)
    ylo = np.full(xs.shape, np.inf)
    yhi = np.full(xs.shape, -np.inf)
    for (px, py), (qx, qy) in zip(p, q):
        if px == qx:
            continue
        inside = (xs >= min(px, qx)) & (xs <= max(px, qx))
        y = py + (xs[inside] - px) * (qy - py) / (qx - px)
        ylo[inside] = np.minimum(ylo[inside], y)
        yhi[inside] = np.maximum(yhi[inside], y)
    ok = ylo <= yhi
    j0 = np.maximum(np.ceil((ylo[ok] - origin[1]) / h - 0.5), 0).astype(int)
    j1 = np.minimum(np.floor((yhi[ok] - origin[1]) / h - 0.5) + 1, shape[1]).astype(int)
    return cols[ok], j0, j1


def _fill_convex(occ, origin, h, poly):
    for i, j0, j1 in zip(*_convex_columns(occ.shape, origin, h, poly)):
        if j1 > j0:
            occ[i, j0:j1] = True


def raster_area_in(raster: Raster, poly) -> float:
    """Area of the occupied cells whose centres lie in a convex polygon."""
    occ = raster.occupancy
    n = sum(int(np.count_nonzero(occ[i, j0:j1]))
            for i, j0, j1 in zip(*_convex_columns(occ.shape, raster.origin, raster.h, poly))
            if j1 > j0)
    return float(n) * raster.h ** 2


@dataclass(frozen=True)
class KakeyaCheck:
    bound: float
    measured: float
    error: float
    passed: bool
    per_rect: tuple = field(default_factory=tuple)


def verify_kakeya_estimate(rects: Sequence[Rect], F: Raster | None = None, tau: float = 1.0,
                           h: float | None = None) -> KakeyaCheck:
    """Check the rectangle hypotheses and compare the area of F with the bound."""
    rects = list(rects)
    if not rects:
        raise HypothesisViolated("need at least one rectangle", which="M")
    a1, a2 = rects[0].len1, rects[0].len2
    for k, r in enumerate(rects):
        if abs(r.len1 - a1) > 1e-12 * a1 or abs(r.len2 - a2) > 1e-12 * a2:
            raise HypothesisViolated(f"rectangle {k} has a different size", which=(k,))
    min_angle = a2 / a1
    for i in range(len(rects)):
        for j in range(i + 1, len(rects)):
            if axis_angle(rects[i], rects[j]) < min_angle * (1 - 1e-12):
                raise HypothesisViolated(
                    f"rectangles {i} and {j} are closer than {min_angle:g} in angle",
                    which=(i, j))
    if h is None:
        h = a2 / 32
    if F is None:
        F = rasterize_rects(rects, h)
        f_error = sum(2 * r.perimeter * F.h for r in rects)
    else:
        f_error = 0.0
    per = []
    for k, r in enumerate(rects):
        got = raster_area_in(F, r.corners())
        slack = 2 * r.perimeter * F.h
        per.append(got)
        if got + slack < tau * a1 * a2:
            raise HypothesisViolated(
                f"F covers only {got:.4g} of rectangle {k}, below tau*a1*a2 = {tau * a1 * a2:.4g}",
                which=(k,))
    bound = kakeya_bound(len(rects), a1, a2, tau)
    measured = F.area()
    return KakeyaCheck(bound, measured, f_error, measured + f_error >= bound, tuple(per))
