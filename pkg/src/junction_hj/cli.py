"""Command-line entry point ``junction-hj``.

Every run writes ``manifest.json`` into the output directory, also when it
fails; the exit status is 0 on success, 2 for configuration errors, 3 when a
numerical search does not converge and 4 for I/O problems.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, config_hash, parse_config
from .errors import BracketError, LevelBelowMinimum, NonConvergenceError
from .hamiltonian import CONVEX_SMOOTH
from .hj_solver import Problem, hopf_lax, solve
from .ishii import TwoDomainProblem, _a_star, extremal_solutions, ishii_limiters, whole_space_axis
from .junction_condition import a0, reduce_to_limiter
from .junction_core import JunctionPoint, field_to_csv
from .vertex_test_function import (
    VertexTestFunction,
    compatibility_residual,
    eval_g0,
    eval_g0_values,
    lower_bound_normalized,
)

logger = logging.getLogger("junction_hj")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")


class Run:
    """Per-invocation state: output directory, thread budget and the files written."""

    def __init__(self, cfg: RunConfig, out: Path, threads: int, seed: int):
        self.cfg = cfg
        self.out = out
        self.threads = threads
        self.seed = seed
        self.outputs: list[str] = []
        self.extra: dict = {}

    def csv(self, name: str, header, rows) -> None:
        write_csv(self.out / name, header, rows)
        self.outputs.append(name)

    def text(self, name: str, content: str) -> None:
        (self.out / name).write_text(content, encoding="utf-8", newline="")
        self.outputs.append(name)


# -- subcommands -----------------------------------------------------------------

def cmd_limiter_reduce(run: Run) -> None:
    cfg = run.cfg
    hs = cfg.build_hamiltonians()
    F = cfg.build_junction_function()
    pp_list = cfg.section("reduce").p_prime
    pts = np.array(pp_list, dtype=float).reshape(len(pp_list), cfg.dim)
    base = np.atleast_1d(a0(hs, pts))
    af = np.atleast_1d(reduce_to_limiter(F, hs, pts))
    d = cfg.dim
    header = [f"p_prime_{k + 1}" for k in range(d)] + ["A_0", "A_F"]
    run.csv("limiter.csv", header, ([*p, b, a] for p, b, a in zip(pts, base, af)))


def _random_points(rng, count: int, N: int, d: int, box: float) -> list[JunctionPoint]:
    branch = rng.integers(1, N + 1, count)
    tang = rng.uniform(-box, box, (count, d))
    normal = rng.uniform(0.0, box, count)
    normal[rng.uniform(size=count) < 0.2] = 0.0
    return [JunctionPoint(int(b), t, float(x)) for b, t, x in zip(branch, tang, normal)]


def _vtf_setup(run: Run):
    cfg = run.cfg
    hs = cfg.build_hamiltonians()
    if any(H.convexity != CONVEX_SMOOTH for H in hs):
        raise ConfigError("the vertex test function needs convex-smooth Hamiltonians", "hamiltonians")
    sec = cfg.section("vtf")
    limiter = cfg.build_limiter(sec.limiter) if sec.limiter is not None else cfg.build_limiter()
    vtf = VertexTestFunction(hs, limiter, seed=run.seed)
    rng = np.random.default_rng(run.seed)
    N, d = len(hs), cfg.dim
    Xs = _random_points(rng, sec.pairs, N, d, sec.box)
    Ys = _random_points(rng, sec.pairs, N, d, sec.box)
    return vtf, Xs, Ys


def _point_cols(prefix: str, d: int) -> list[str]:
    return [f"{prefix}_branch", *(f"{prefix}_tangential_{k + 1}" for k in range(d)), f"{prefix}_normal"]


def _point_vals(P: JunctionPoint) -> list:
    return [0 if P.on_interface else P.branch, *P.tangential, P.normal]


def _evaluate_pairs(run: Run, vtf, Xs, Ys) -> list[list]:
    def one(k):
        X, Y = Xs[k], Ys[k]
        ev = eval_g0(vtf, X, Y, strict=False)
        singular = (not X.on_interface and not Y.on_interface and X.branch == Y.branch and X.normal == Y.normal)
        res = float("nan") if singular else compatibility_residual(vtf, X, Y, ev)
        return [*_point_vals(X), *_point_vals(Y), ev.value, ev.lam, *ev.p_prime, res, ev.converged]

    # each pair is independent, so the split does not affect the output
    with ThreadPoolExecutor(max_workers=run.threads) as pool:
        return list(pool.map(one, range(len(Xs))))


def _vtf_header(d: int) -> list[str]:
    return [*_point_cols("x", d), *_point_cols("y", d), "value", "lambda", *(f"pprime_{k + 1}" for k in range(d)), "residual", "converged"]


def cmd_vtf_eval(run: Run) -> None:
    vtf, Xs, Ys = _vtf_setup(run)
    run.csv("vtf.csv", _vtf_header(vtf.dim), _evaluate_pairs(run, vtf, Xs, Ys))


def cmd_vtf_check(run: Run) -> None:
    vtf, Xs, Ys = _vtf_setup(run)
    rows = _evaluate_pairs(run, vtf, Xs, Ys)
    run.csv("vtf_check.csv", _vtf_header(vtf.dim), rows)
    d = vtf.dim
    origin = JunctionPoint(1, np.zeros(d), 0.0)
    g00 = float(eval_g0_values(vtf, [origin], [origin])[0])
    values = np.array([r[-(d + 4)] for r in rows])
    residuals = np.array([r[-2] for r in rows], dtype=float)
    finite = residuals[np.isfinite(residuals)]
    summary = {
        "pairs": len(rows),
        "g0_origin": g00,
        "min_value_minus_g0_origin": float(values.min() - g00),
        "max_residual": float(finite.max()) if finite.size else None,
        "all_converged": bool(all(r[-1] for r in rows)),
        "residual_ok": bool(finite.size == 0 or finite.max() <= 1e-6),
        "lower_bound_ok": bool(values.min() >= g00 - 1e-8),
        "lower_bound_normalized": lower_bound_normalized(vtf, seed=run.seed),
    }
    run.text("vtf_summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")


def _snapshot_name(prefix: str, k: int) -> str:
    return f"{prefix}_{k:04d}.csv"


def cmd_solve(run: Run) -> None:
    cfg = run.cfg
    grid = cfg.build_grid()
    hs = cfg.build_hamiltonians()
    ts = cfg.section("time")
    kwargs = {}
    if cfg.junction is None:
        raise ConfigError("a junction section is required", "junction")
    if cfg.junction.kind == "linear":
        kwargs["junction_function"] = cfg.build_junction_function()
    else:
        kwargs["limiter"] = cfg.build_limiter()
    problem = Problem(grid, hs, cfg.build_initial(grid), ts.final, cfl=ts.cfl, dt_max=ts.dt_max, snapshot_times=tuple(ts.snapshots), **kwargs)
    traj = solve(problem)
    for k, f in enumerate(traj.fields):
        run.text(_snapshot_name("snapshot", k), field_to_csv(f))
    run.extra.update({"times": traj.times, "steps": traj.steps, "grid": grid.to_dict()})


def cmd_ishii_compare(run: Run) -> None:
    cfg = run.cfg
    sec = cfg.section("ishii")
    HL, HR = sec.h_left.build(), sec.h_right.build()
    d = HL.dim
    if HR.dim != d:
        raise ConfigError("h_left and h_right must share the tangential dimension", "ishii")
    pts = np.array(sec.p_prime, dtype=float).reshape(len(sec.p_prime), d)
    base = np.atleast_1d(a0([HL, HR], pts))
    star = np.atleast_1d(_a_star(HL, HR, pts))
    lo, hi = (np.atleast_1d(v) for v in ishii_limiters(HL, HR, pts))
    header = [f"p_prime_{k + 1}" for k in range(d)] + ["A_0", "A_star", "A_I_minus", "A_I_plus"]
    run.csv("ishii_limiters.csv", header, ([*p, a, s, m, q] for p, a, s, m, q in zip(pts, base, star, lo, hi)))

    if cfg.grid is None:
        return
    grid = cfg.build_grid()
    if grid.branches != 2 or grid.dim != d:
        raise ConfigError("ishii runs need a two-branch grid with the Hamiltonians' tangential dimension", "grid")
    ts = cfg.section("time")
    problem = TwoDomainProblem(HL, HR, cfg.whole_space_initial(), ts.final, grid, ts.cfl, ts.dt_max, tuple(ts.snapshots))
    runs = extremal_solutions(problem)
    axes = [*grid.tangential_axes(), whole_space_axis(grid)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d + 1)
    header = [f"x_{k + 1}" for k in range(d + 1)] + ["value"]
    for k, (umin, umax) in enumerate(zip(runs.minimal, runs.maximal)):
        for prefix, U in (("minimal", umin), ("maximal", umax)):
            vals = np.moveaxis(U, 0, -1).reshape(-1)
            run.csv(_snapshot_name(prefix, k), header, ([*x, v] for x, v in zip(mesh, vals)))
    gap = max(float(np.max(a - b)) for a, b in zip(runs.minimal, runs.maximal))
    run.extra.update({"times": runs.times, "max_minimal_minus_maximal": gap, "steps": runs.junction_minimal.steps})


def cmd_oracle(run: Run) -> None:
    cfg = run.cfg
    sec = cfg.section("oracle")
    H = sec.hamiltonian.build()
    X = np.array(sec.points, dtype=float)
    if X.ndim != 2 or X.shape[1] != H.dim + 1:
        raise ConfigError(f"points need {H.dim + 1} coordinates", "oracle.points")
    vals = np.atleast_1d(hopf_lax(H, cfg.whole_space_initial(), sec.t, X))
    header = [f"x_{k + 1}" for k in range(H.dim + 1)] + ["t", "value"]
    run.csv("hopf_lax.csv", header, ([*x, sec.t, v] for x, v in zip(X, vals)))


COMMANDS = {
    ("limiter", "reduce"): cmd_limiter_reduce,
    ("vtf", "eval"): cmd_vtf_eval,
    ("vtf", "check"): cmd_vtf_check,
    ("solve", None): cmd_solve,
    ("ishii", "compare"): cmd_ishii_compare,
    ("oracle", "hopf-lax"): cmd_oracle,
}


# -- argument handling ---------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, type=Path, help="TOML or JSON run configuration")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    p.add_argument("--threads", type=int, default=None, help="worker threads (fallback: $JHJ_THREADS, then 1)")
    p.add_argument("--seed", type=int, default=None, help="seed for sampled checks (overrides the config)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="junction-hj", description="Hamilton-Jacobi equations on multi-dimensional junctions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    lim = sub.add_parser("limiter", help="flux limiter algebra").add_subparsers(dest="action", required=True)
    _common(lim.add_parser("reduce", help="effective limiter A_F of a junction function"))

    vtf = sub.add_parser("vtf", help="vertex test function").add_subparsers(dest="action", required=True)
    _common(vtf.add_parser("eval", help="evaluate G^0 on sampled pairs"))
    _common(vtf.add_parser("check", help="residual and lower-bound report"))

    solve_p = sub.add_parser("solve", help="run the monotone scheme")
    _common(solve_p)
    solve_p.set_defaults(action=None)

    ish = sub.add_parser("ishii", help="two-domain problems").add_subparsers(dest="action", required=True)
    _common(ish.add_parser("compare", help="A_I^-/A_I^+ and the extremal solutions"))

    orc = sub.add_parser("oracle", help="reference solutions").add_subparsers(dest="action", required=True)
    _common(orc.add_parser("hopf-lax", help="Hopf-Lax formula at given points"))
    return parser


def _threads(arg: int | None, cfg: RunConfig | None) -> int:
    if arg is not None:
        n = arg
    elif os.environ.get("JHJ_THREADS"):
        try:
            n = int(os.environ["JHJ_THREADS"])
        except ValueError as exc:
            raise ConfigError("JHJ_THREADS must be an integer", "JHJ_THREADS") from exc
    elif cfg is not None and cfg.threads:
        n = cfg.threads
    else:
        n = 1
    if n < 1:
        raise ConfigError("thread count must be >= 1", "threads")
    return n


def _versions() -> dict:
    import pydantic

    return {"junction_hj": __version__, "numpy": np.__version__, "pydantic": pydantic.__version__, "python": platform.python_version()}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    command = " ".join(x for x in (args.command, args.action) if x)
    t0 = time.perf_counter()
    manifest: dict = {"command": command, "versions": _versions(), "status": "error"}
    out: Path = args.out
    code = EXIT_OK
    run = None
    try:
        try:
            out.mkdir(parents=True, exist_ok=True)
            text = args.config.read_text(encoding="utf-8")
        except OSError as exc:
            code = EXIT_IO
            manifest["error"] = {"error": "io", "message": str(exc)}
            return code
        fmt = "json" if args.config.suffix.lower() == ".json" else ("toml" if args.config.suffix.lower() == ".toml" else None)
        try:
            cfg = parse_config(text, fmt)
            manifest["config_hash"] = config_hash(cfg)
            threads = _threads(args.threads, cfg)
            seed = args.seed if args.seed is not None else cfg.seed
            if not 0 <= seed < 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer", "seed")
            manifest.update({"seed": seed, "threads": threads})
            t1 = time.perf_counter()
            manifest["timings"] = {"parse": t1 - t0}
            run = Run(cfg, out, threads, seed)
            COMMANDS[(args.command, args.action)](run)
            manifest["timings"]["run"] = time.perf_counter() - t1
            manifest["status"] = "ok"
        except ConfigError as exc:
            code = EXIT_CONFIG
            manifest["error"] = exc.to_dict()
        except (NonConvergenceError, BracketError, LevelBelowMinimum) as exc:
            code = EXIT_NUMERIC
            manifest["error"] = {"error": "numerical", "type": type(exc).__name__, "message": str(exc)}
        except OSError as exc:
            code = EXIT_IO
            manifest["error"] = {"error": "io", "message": str(exc)}
        except ValueError as exc:
            code = EXIT_CONFIG
            manifest["error"] = {"error": "config", "path": "", "message": str(exc)}
        return code
    finally:
        manifest.setdefault("timings", {})["total"] = time.perf_counter() - t0
        if run is not None:
            manifest["outputs"] = run.outputs
            manifest.update(run.extra)
        if "error" in manifest:
            print(json.dumps(manifest["error"]), file=sys.stderr)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n", encoding="utf-8")
        except OSError as exc:
            print(json.dumps({"error": "io", "message": f"could not write manifest: {exc}"}), file=sys.stderr)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
