"""Command-line front end: ``kakeya <command> [options]``.

Exit codes: 0 success (verdict "yes" for ``check``), 1 error, 2 verdict "no",
3 verdict "unknown".
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, conditions, fixtures, geom, pressure
from .errors import BudgetExceeded, KakeyaError
from .ifs import DEFAULT_BUDGET, IfsSystem, config_digest, load_system, word_endpoints

EXIT_OK, EXIT_ERROR, EXIT_NO, EXIT_UNKNOWN = 0, 1, 2, 3
VERDICT_CODES = {"yes": EXIT_OK, "no": EXIT_NO, "unknown": EXIT_UNKNOWN}


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which would read as a "no" verdict
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                if f.name != "weights"}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _vec(text: str) -> tuple[float, float]:
    try:
        parts = [float(p) for p in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}") from exc
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}")
    return parts[0], parts[1]


def build_system(args) -> IfsSystem:
    if args.config and args.example:
        raise KakeyaError("use either --config or --example, not both")
    if args.config:
        return load_system(Path(args.config).read_bytes())
    name = args.example or "edgar"
    if name == "edgar":
        kw = {"r": args.r if args.r is not None else 0.4,
              "eps": args.eps if args.eps is not None else 0.1}
        if args.a1 is not None:
            kw["a1"] = args.a1
        if args.a2 is not None:
            kw["a2"] = args.a2
        return fixtures.edgar(**kw)
    if name == "pair64":
        return fixtures.pair64(a1=args.a1 or (0.0, 0.0), a2=args.a2 or (1.0, 1.0))
    if name == "family65":
        return fixtures.family65(kappa=args.kappa or 5, a2=args.a2 or (1.0, 1.0))
    if name in fixtures.FIXTURES:
        return fixtures.FIXTURES[name][1]()
    raise KakeyaError(f"unknown example {name!r}; see 'kakeya examples'")


def _system_args(p):
    g = p.add_argument_group("system")
    g.add_argument("--config", help="JSON config file")
    g.add_argument("--example", help="built-in fixture name")
    g.add_argument("--r", type=float, help="edgar: diagonal entry r")
    g.add_argument("--eps", type=float, help="edgar: off-diagonal parameter eps")
    g.add_argument("--a1", type=_vec, help="translation of map 1, 'x,y'")
    g.add_argument("--a2", type=_vec, help="translation of map 2, 'x,y'")
    g.add_argument("--kappa", type=int, help="family65: number of maps")


def _common_args(p):
    p.add_argument("--json", action="store_true", help="machine-readable report on stdout")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default all cores; KAKEYA_THREADS overrides)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="image output path (.pgm or .svg)")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kakeya", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check", help="verify the Kakeya-type conditions")
    _system_args(p)
    _common_args(p)

    p = sub.add_parser("dim", help="bracket the singularity dimension")
    _system_args(p)
    _common_args(p)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)

    p = sub.add_parser("render", help="render the attractor")
    _system_args(p)
    _common_args(p)
    p.add_argument("--points", type=int, default=200_000)
    p.add_argument("--size", type=int, default=512, help="image width/height in pixels")

    p = sub.add_parser("boxdim", help="box-dimension estimate with a bracket cross-check")
    _system_args(p)
    _common_args(p)
    p.add_argument("--budget", type=int, default=geom.DEFAULT_RENDER_BUDGET)
    p.add_argument("--tol", type=float, default=1e-2)
    p.add_argument("--deltas", type=int, default=12)
    p.add_argument("--mode", choices=["auto", "stopping", "chaos"], default="auto",
                   help="point generation; auto falls back to the chaos game when the "
                        "stopping set would exceed the budget")
    p.add_argument("--points", type=int, default=4_000_000, help="chaos-game point count")

    p = sub.add_parser("kakeya-bound", help="the rectangle area bound, optionally verified")
    _common_args(p)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--alpha1", type=float, required=True)
    p.add_argument("--alpha2", type=float, required=True)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--verify", action="store_true", help="rasterise a fan of rectangles")

    p = sub.add_parser("perturb", help="pressure shift under entrywise perturbations")
    _system_args(p)
    _common_args(p)
    p.add_argument("--perturbation", type=float, default=1e-4,
                   help="entrywise perturbation size")
    p.add_argument("--d-prime", type=float, default=None)

    p = sub.add_parser("examples", help="list built-in fixtures")
    _common_args(p)
    return parser


# ---------------------------------------------------------------------------
# commands; each returns (exit code, results dict, text lines)


def cmd_check(args):
    sys_ = build_system(args)
    rep = conditions.full_report(sys_, seed=args.seed)
    lines = [f"verdict: {rep.verdict} ({rep.reason})"]
    if rep.cone is not None:
        lines.append(f"cone: beta = {rep.cone.beta:.6f}, D = {rep.cone.d_constant:.6f}")
    else:
        f = rep.cone_failure
        lines.append(f"cone: none (map #{f.index}, entry {f.entry}: {f.reason})")
    lines.append(f"K1a {rep.k1a}  K1b {rep.k1b}  K1c {rep.k1c}")
    for p in rep.projection:
        lines.append(f"  {p.criterion:12s} J={p.subset}: {'pass' if p.passed else 'fail'}")
    if args.out:
        _write_segments_svg(sys_, rep, args.out)
    return VERDICT_CODES[rep.verdict], {"kakeya": rep}, lines


def cmd_dim(args):
    sys_ = build_system(args)
    try:
        br = pressure.dimension_bracket(sys_, tol=args.tol, budget=args.budget,
                                        threads=args.threads)
        code = EXIT_OK
        err = None
    except BudgetExceeded as exc:
        br = exc.best
        code = EXIT_ERROR
        err = str(exc)
    res = {"bracket": br}
    lines = []
    if br is not None:
        lines.append(f"dimension in [{br.t_lo:.12g}, {br.t_hi:.12g}] (width {br.width:.3g}, "
                     f"level {br.n}, D = {br.d_constant:.6g})")
        if br.upper_only:
            lines.append("no lower-bound certificate: bracket is upper-bound only")
    if err:
        res["error"] = err
        print(f"kakeya: BudgetExceeded: {err}", file=sys.stderr)
    return code, res, lines


def cmd_render(args):
    sys_ = build_system(args)
    cloud = geom.render(sys_, mode="chaos", count=args.points, seed=args.seed)
    lo, hi = cloud.points.min(axis=0), cloud.points.max(axis=0)
    if args.out:
        _write_pgm(cloud.points, args.out, args.size)
    res = {"render": {"points": int(cloud.points.shape[0]), "gen": cloud.gen,
                      "bbox": [lo.tolist(), hi.tolist()],
                      "diameter_bound": cloud.diameter_bound, "out": args.out}}
    return EXIT_OK, res, [f"{cloud.points.shape[0]} points, bbox {lo.round(4).tolist()} .. "
                          f"{hi.round(4).tolist()}"]


def cmd_boxdim(args):
    sys_ = build_system(args)
    kpoly = geom.enclosing_polygon(sys_)
    deltas = geom.default_deltas(geom.polygon_diameter(kpoly), args.deltas)
    est = geom.box_dimension(sys_, deltas=deltas, budget=args.budget, seed=args.seed,
                             mode=args.mode, count=args.points)
    res = {"boxdim": est}
    lines = [f"box dimension estimate {est.dim_estimate:.4f} +- {est.stderr:.4f} "
             f"({est.n_points} points, {est.mode} mode)"]
    try:
        br = pressure.dimension_bracket(sys_, tol=args.tol, threads=args.threads,
                                        budget=2 ** 22)
    except BudgetExceeded as exc:
        br = exc.best
    if br is not None:
        res["bracket"] = br
        res["difference"] = est.dim_estimate - br.midpoint
        lines.append(f"singularity dimension in [{br.t_lo:.6f}, {br.t_hi:.6f}]; "
                     f"difference {est.dim_estimate - br.midpoint:+.4f}")
    return EXIT_OK, res, lines


def cmd_kakeya_bound(args):
    bound = geom.kakeya_bound(args.m, args.alpha1, args.alpha2, args.tau)
    res = {"bound": bound, "M": args.m, "alpha1": args.alpha1, "alpha2": args.alpha2,
           "tau": args.tau}
    lines = [f"bound = {bound:.6g}"]
    code = EXIT_OK
    if args.verify:
        rects = geom.fan(args.m, args.alpha1, args.alpha2)
        chk = geom.verify_kakeya_estimate(rects, tau=args.tau)
        res["verify"] = chk
        lines.append(f"fan of {args.m}: measured {chk.measured:.6g} (+- {chk.error:.3g}) -> "
                     f"{'pass' if chk.passed else 'FAIL'}")
        if args.out:
            _write_rects_svg(rects, args.out)
        code = EXIT_OK if chk.passed else EXIT_ERROR
    return code, res, lines


def cmd_perturb(args):
    sys_ = build_system(args) if (args.config or args.example) else fixtures.pair64()
    pb = pressure.perturbation_bounds(sys_, args.perturbation, args.d_prime)
    lines = [f"eps1 = {pb.eps1:.6g}, eps2 = {pb.eps2:.6g}, T = {pb.T:.6g}",
             f"pressure shift within [{pb.pressure_shift[0]:.6g}, {pb.pressure_shift[1]:.6g}]"]
    return EXIT_OK, {"perturbation": pb}, lines


def cmd_examples(args):
    names = {k: v[0] for k, v in fixtures.FIXTURES.items()}
    return EXIT_OK, {"examples": names}, [f"{k:10s} {v}" for k, v in names.items()]


COMMANDS = {
    "check": cmd_check,
    "dim": cmd_dim,
    "render": cmd_render,
    "boxdim": cmd_boxdim,
    "kakeya-bound": cmd_kakeya_bound,
    "perturb": cmd_perturb,
    "examples": cmd_examples,
}


# ---------------------------------------------------------------------------
# image writers


def _write_pgm(points: np.ndarray, path: str, size: int):
    lo, hi = points.min(axis=0), points.max(axis=0)
    span = float(max(hi - lo)) or 1.0
    ij = np.floor((points - lo) / span * (size - 1)).astype(int)
    img = np.full((size, size), 255, dtype=np.uint8)
    img[size - 1 - ij[:, 1], ij[:, 0]] = 0
    with open(path, "wb") as fh:
        fh.write(f"P5\n{size} {size}\n255\n".encode())
        fh.write(img.tobytes())


def _svg(shapes: list[str], lo, hi, path: str):
    w, h = hi - lo
    pad = 0.05 * max(w, h)
    vb = f"{lo[0] - pad} {-(hi[1] + pad)} {w + 2 * pad} {h + 2 * pad}"
    body = "\n".join(shapes)
    Path(path).write_text(
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{vb}" width="600" height="600">\n'
        f'<g transform="scale(1,-1)" stroke-width="{0.003 * max(w, h)}">\n{body}\n</g>\n</svg>\n')


def _write_rects_svg(rects, path):
    shapes, pts = [], []
    for r in rects:
        c = r.corners()
        pts.append(c)
        shapes.append('<polygon fill="none" stroke="black" points="' +
                      " ".join(f"{x},{y}" for x, y in c) + '"/>')
    allp = np.concatenate(pts)
    _svg(shapes, allp.min(axis=0), allp.max(axis=0), path)


def _write_segments_svg(sys_, rep, path):
    shapes, pts = [], []
    for i in range(1, sys_.kappa + 1):
        x, y = word_endpoints(sys_, i)
        pts += [x, y]
        shapes.append(f'<line x1="{x[0]}" y1="{x[1]}" x2="{y[0]}" y2="{y[1]}" stroke="blue"/>')
    cloud = geom.chaos_points(sys_, 20000, seed=0)
    for p in cloud[::10]:
        shapes.append(f'<circle cx="{p[0]}" cy="{p[1]}" r="0.003" fill="gray"/>')
    allp = np.vstack([np.array(pts), cloud])
    _svg(shapes, allp.min(axis=0), allp.max(axis=0), path)


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        code, results, lines = COMMANDS[args.command](args)
    except (KakeyaError, ValueError, OSError) as exc:
        print(f"kakeya: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    digest = None
    if getattr(args, "config", None) or getattr(args, "example", None):
        try:
            digest = config_digest(build_system(args))
        except (KakeyaError, ValueError, OSError):
            digest = None
    report = {
        "command": args.command,
        "config_digest": digest,
        "seeds": {"seed": args.seed},
        "results": jsonable(results),
        "exit_code": code,
        "version": __version__,
        "wall_time": round(time.perf_counter() - t0, 6),
    }
    if args.json:
        print(json.dumps(report, sort_keys=True, indent=2))
    else:
        for line in lines:
            print(line)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
