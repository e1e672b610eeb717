"""End-to-end acceptance checks; each test covers one criterion and reports PASS/FAIL."""
import json
import math
import time

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from kakeya_ifs import _threads, cli, conditions, fixtures, geom, ifs, mat2, pressure, tractable
from kakeya_ifs.errors import BudgetExceeded
from kakeya_ifs.geom import Rect
from kakeya_ifs.pressure import log_phi


@pytest.fixture
def criterion(record_property):
    def start(n, title):
        record_property("criterion", (n, title))

        def detail(text):
            record_property("detail", text)
        return detail
    return start


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def test_01_similarity_dimension(criterion):
    note = criterion(1, "two maps 0.5*Id: bracket contains 1, width <= 1e-12, < 1 s")
    br, dt = timed(pressure.dimension_bracket, fixtures.scalar_pair(0.5), tol=1e-12)
    note(f"[{br.t_lo!r}, {br.t_hi!r}] in {dt:.3f} s")
    assert br.contains(1.0) and br.width <= 1e-12 and dt < 1.0


def test_02_piecewise_analytic_oracle(criterion):
    note = criterion(2, "three maps diag(1/2, 1/4): bracket contains 1 + log(3/2)/log 4, "
                        "width <= 1e-6, < 5 s")
    exact = 1 + (math.log(3) - math.log(2)) / math.log(4)
    br, dt = timed(pressure.dimension_bracket, fixtures.diagonal_triple(), tol=1e-6)
    note(f"[{br.t_lo:.9f}, {br.t_hi:.9f}] vs {exact:.9f} in {dt:.3f} s")
    assert br.contains(exact) and br.width <= 1e-6 and dt < 5.0


def test_03_edgar_benchmark(criterion):
    note = criterion(3, "edgar(1/3, 0.01): midpoint within 0.05 of 1, < 60 s, level <= 20")
    br, dt = timed(pressure.dimension_bracket, fixtures.edgar(1 / 3, 0.01), tol=0.05)
    note(f"[{br.t_lo:.5f}, {br.t_hi:.5f}] level {br.n} in {dt:.2f} s")
    assert abs(br.midpoint - 1.0) <= 0.05 and dt < 60 and br.n <= 20


def test_04_spectral_radius(criterion):
    note = criterion(4, "edgar(0.4, 0.1): spectral radius 0.6236 +- 5e-4")
    rho = [mat2.spectral_radius(a) for a in fixtures.edgar(0.4, 0.1).linears]
    note(f"{rho[0]:.6f}, {rho[1]:.6f}")
    assert all(abs(r - 0.6236) <= 5e-4 for r in rho)


def test_05_condition_verdicts(criterion):
    note = criterion(5, "verdicts: edgar yes, edgar eps=0 no, pair64 yes via positivity test, "
                        "family65 yes via J={1,2}; each < 1 s")
    times = []

    rep, dt = timed(conditions.full_report, fixtures.edgar(0.4, 0.1))
    times.append(dt)
    assert rep.verdict == "yes"

    rep, dt = timed(conditions.full_report, fixtures.edgar(0.4, 0.0))
    times.append(dt)
    assert rep.verdict == "no" and not rep.k1a
    assert rep.cone_failure is not None and rep.cone_failure.reason == "zero entry"

    rep, dt = timed(conditions.full_report, fixtures.pair64(a2=(1.0, 1.0)))
    times.append(dt)
    win = [p for p in rep.projection if p.passed]
    assert rep.verdict == "yes" and win[0].criterion == "pair_positivity"
    assert np.min(win[0].witness["Id_minus_A1_B2"]) > 0

    rep, dt = timed(conditions.full_report, fixtures.family65(5))
    times.append(dt)
    win = [p for p in rep.projection if p.passed]
    assert rep.verdict == "yes" and win[0].subset == (1, 2)

    note("times " + ", ".join(f"{t:.3f}" for t in times) + " s")
    assert max(times) < 1.0


@pytest.mark.slow
def test_06_box_dimension_cross_validation(criterion):
    note = criterion(6, "edgar(0.4, 0.1): |box dim - bracket midpoint| <= 0.15, stderr <= 0.05, "
                        "< 10 min")
    sys = fixtures.edgar(0.4, 0.1)
    t0 = time.perf_counter()
    est = geom.box_dimension(sys)
    try:
        br = pressure.dimension_bracket(sys, tol=1e-2)
    except BudgetExceeded as exc:
        br = exc.best
    dt = time.perf_counter() - t0
    diff = abs(est.dim_estimate - br.midpoint)
    note(f"estimate {est.dim_estimate:.4f} +- {est.stderr:.4f} ({est.mode}), "
         f"bracket [{br.t_lo:.4f}, {br.t_hi:.4f}], {dt:.0f} s")
    assert diff <= 0.15 and est.stderr <= 0.05 and dt < 600


def test_07_kakeya_rectangles(criterion):
    note = criterion(7, "100 random fans pass verify_kakeya_estimate; 1000 random pairs satisfy "
                        "the overlap inequality")
    rng = np.random.default_rng(2024)
    fails = verified = 0
    for _ in range(100):
        a1 = float(rng.uniform(0.5, 2.0))
        a2 = a1 * float(rng.uniform(1 / 64, 0.25))
        spacing = (a2 / a1) * float(rng.uniform(1.0, 3.0))
        # keep all long axes within half a turn so the angle hypothesis holds pairwise
        m_max = min(24, int((math.pi - a2 / a1) / spacing))
        m = int(rng.integers(1, m_max + 1))
        centers = rng.uniform(-0.2, 0.2, size=(m, 2)) * a1
        start = float(rng.uniform(0, math.pi))
        rects = [Rect.at_angle(centers[k], start + k * spacing, a1, a2) for k in range(m)]
        chk = geom.verify_kakeya_estimate(rects, tau=1.0)
        fails += not chk.passed
        verified += 1
    violations = 0
    for _ in range(1000):
        a1 = float(rng.uniform(0.5, 2.0))
        a2 = a1 * float(rng.uniform(0.005, 0.5))
        r1 = Rect.at_angle(rng.uniform(-0.3, 0.3, 2) * a1, rng.uniform(0, math.pi), a1, a2)
        ang = float(rng.uniform(a2 / a1, math.pi / 2))
        base = math.atan2(r1.long_axis[1], r1.long_axis[0])
        r2 = Rect.at_angle(rng.uniform(-0.3, 0.3, 2) * a1, base + ang, a1, a2)
        violations += geom.rect_intersection_area(r1, r2) > geom.overlap_bound(r1, r2)
    note(f"{verified} fans, failures {fails}; overlap violations {violations}")
    assert verified == 100 and fails == 0 and violations == 0


def _cone_points(rng, cone, n):
    base = math.atan2(cone.theta[1], cone.theta[0])
    ang = base + rng.uniform(-cone.beta / 2, cone.beta / 2, size=n) * (1 - 1e-12)
    r = rng.uniform(0.1, 10, size=n) * rng.choice([-1.0, 1.0], size=n)
    return np.stack([np.cos(ang), np.sin(ang)], axis=1) * r[:, None]


def _word(rng, kappa, lo=1, hi=20):
    return tuple(int(s) for s in rng.integers(1, kappa + 1, size=rng.integers(lo, hi + 1)))


def _numeric_contraction(a):
    (p, q), (r, s) = a

    def neg(u):
        e = math.exp(u)
        return -abs(s * e / (r + s * e) - q * e / (p + q * e))

    grid = np.linspace(-20, 20, 4001)
    k = int(np.argmin([neg(u) for u in grid]))
    res = minimize_scalar(neg, bounds=(grid[max(k - 1, 0)], grid[min(k + 1, 4000)]),
                          method="bounded", options={"xatol": 1e-13})
    return -res.fun


def test_08_property_suites(criterion):
    note = criterion(8, "norm lower bound, cylinder sandwich, supermultiplicativity, angle bound, "
                        "contraction factor, ratio decay: 1000 cases each")
    rng = np.random.default_rng(8)
    bad = dict.fromkeys(["norm", "sandwich", "supermult", "angle", "factor", "decay"], 0)

    edgar = fixtures.edgar(0.4, 0.1)
    cone = conditions.find_invariant_cone(edgar)
    for x in _cone_points(rng, cone, 1000):
        c = ifs.cylinder(edgar, _word(rng, 2, 1, 15))
        lhs = np.linalg.norm(c.product.matrix() @ x)
        bad["norm"] += lhs < math.cos(cone.beta) * c.singular.alpha1 * np.linalg.norm(x) \
            * (1 - 1e-12)

    pair = fixtures.pair64()
    for _ in range(1000):
        w = _word(rng, 2, 1, 25)
        s = ifs.cylinder(pair, w).singular
        t, d = float(rng.uniform(0, 2.5)), float(rng.uniform(0, 1))
        base = log_phi(s.log_alpha1, s.log_alpha2, t)
        more = log_phi(s.log_alpha1, s.log_alpha2, t + d)
        n = len(w)
        bad["sandwich"] += not (base + d * n * math.log(pair.alpha_lower) - 1e-10 <= more
                                <= base + d * n * math.log(pair.alpha_bar) + 1e-10)

    two_log_cos = 2 * math.log(math.cos(cone.beta))  # log of 1/D
    for _ in range(1000):
        u, v = _word(rng, 2), _word(rng, 2)
        t = float(rng.uniform(0, 3))
        a, b, ab = (ifs.cylinder(edgar, w).singular for w in (u, v, u + v))
        la = log_phi(a.log_alpha1, a.log_alpha2, t)
        lb = log_phi(b.log_alpha1, b.log_alpha2, t)
        lab = log_phi(ab.log_alpha1, ab.log_alpha2, t)
        bad["supermult"] += not (la + lb + two_log_cos - 1e-10 <= lab <= la + lb + 1e-10)

    pcone = conditions.find_invariant_cone(pair)
    for x in _cone_points(rng, pcone, 1000):
        c = ifs.cylinder(pair, _word(rng, 2, 1, 10))
        m, s = c.product.matrix(), c.singular
        u, y = m @ s.theta1, m @ x
        ang = math.atan2(abs(u[0] * y[1] - u[1] * y[0]), abs(u @ y))
        bad["angle"] += ang > math.pi / (2 * math.cos(pcone.beta)) * s.alpha2 / s.alpha1 + 1e-12

    for _ in range(1000):
        a = rng.uniform(0.05, 1.0, size=(2, 2))
        bad["factor"] += abs(conditions.contraction_factor(a) - _numeric_contraction(a)) > 1e-9

    fam = fixtures.family65(5)
    rep = conditions.projective_contraction(fam)
    for _ in range(1000):
        w = _word(rng, 5, 1, 20)
        s = ifs.cylinder(fam, w).singular
        bad["decay"] += s.alpha2 / s.alpha1 > rep.ratio_bound(len(w)) * (1 + 1e-9)

    note("violations " + ", ".join(f"{k} {v}" for k, v in bad.items()))
    assert not any(bad.values())


def test_09_gibbs_diagnostics(criterion):
    note = criterion(9, "edgar(0.4, 0.1) at the bracket midpoint: gamma1 + (t-1) gamma2 = 1 "
                        "within 1e-9, gamma1 < gamma2")
    sys = fixtures.edgar(0.4, 0.1)
    br = pressure.dimension_bracket(sys, tol=2e-2)
    t = br.midpoint
    g = pressure.gibbs_report(sys, t, 20, seed=0)
    ident = g.gamma1 + (t - 1) * g.gamma2
    note(f"t {t:.5f}, gamma1 {g.gamma1:.4f}, gamma2 {g.gamma2:.4f}, identity {ident!r}")
    assert abs(ident - 1) <= 1e-9 and g.gamma1 < g.gamma2


def test_10_appendix_suite(criterion):
    note = criterion(10, "cone_entry on random positive 3x3/4x4; ball condition passes on "
                         "corners4 with delta' >= 1/8 and fails on the duplicated-map fixture")
    rng = np.random.default_rng(10)
    n0s = []
    for d in (3, 4):
        for _ in range(100):
            a = rng.uniform(0.01, 1.0, size=(d, d))
            res = tractable.cone_entry(a, rng.normal(size=d))
            n0s.append(res.n0)
            assert np.all(np.array(res.trajectory_margins[res.n0:]) > 0)
            dist = np.array(res.hilbert_distances)
            assert np.all(np.diff(dist) <= 1e-12 * (1 + dist[:-1]))
    good = tractable.ball_condition_check(fixtures.corners4(), t=1.0, delta=0.125,
                                          scales=[0.5, 0.2, 0.05, 0.01])
    bad = tractable.ball_condition_check(fixtures.sierpinski_duplicated(), t=1.0, delta=0.01,
                                         scales=[0.3, 0.1, 0.03])
    note(f"max n0 {max(n0s)}, corners4 delta' {good.min_delta_prime:.3f}, "
         f"duplicated delta' {bad.min_delta_prime:.3f}")
    assert good.passed and good.min_delta_prime >= 1 / 8 and not bad.passed


COMMANDS = [
    ["check", "--example", "edgar"],
    ["dim", "--example", "edgar", "--tol", "1e-2"],
    ["render", "--example", "pair64", "--points", "50000", "--seed", "7"],
    ["boxdim", "--example", "sierpinski", "--deltas", "6", "--seed", "3"],
    ["boxdim", "--example", "square4", "--mode", "chaos", "--points", "200000", "--deltas", "5",
     "--seed", "11"],
    ["kakeya-bound", "--m", "16", "--alpha1", "1", "--alpha2", "0.0625", "--verify"],
    ["perturb", "--example", "pair64"],
]


def test_11_reproducible_across_threads(criterion, capsys, monkeypatch):
    note = criterion(11, "identical JSON reports (minus wall time) for --threads 1 and 2")
    monkeypatch.delenv(_threads.ENV_VAR, raising=False)
    mismatched = []
    for argv in COMMANDS:
        outs = []
        for threads in ("1", "2"):
            code = cli.main(argv + ["--json", "--threads", threads])
            rep = json.loads(capsys.readouterr().out)
            rep.pop("wall_time")
            outs.append((code, json.dumps(rep, sort_keys=True)))
        if outs[0] != outs[1]:
            mismatched.append(argv[0])
    note(f"{len(COMMANDS)} commands, mismatches {mismatched}")
    assert not mismatched
