"""Explicit monotone scheme for ``u_t + H(x, Du) = 0`` on a junction.

Inside branch ``i`` the normal direction uses the Godunov flux built from the
monotone envelopes of ``H_i``; tangential directions use local Lax-Friedrichs
with a sampled Lipschitz bound as dissipation. Interface nodes are advanced
with ``F_A`` evaluated on the one-sided normal slopes (plus the same
tangential dissipation, which keeps the update monotone when ``d >= 1``).
Outer boundaries copy the last value outward.

Under the CFL restriction computed by :func:`cfl_dt` the update is
non-decreasing in every node value, so ordered data stay ordered.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import _optimize
from .hamiltonian import Hamiltonian, as_pprime, conjugate_with_argmax
from .junction_condition import (
    FluxLimiter,
    GeneralJunctionFunction,
    _a0,
    _flux_limited,
    reduced_limiter,
)
from .junction_core import Field, JunctionGrid

logger = logging.getLogger(__name__)

SAFETY = 1.2
TIME_EPS = 1e-12


@dataclass
class Problem:
    """Cauchy problem on a junction.

    Give either a flux ``limiter`` or a general ``junction_function`` (reduced
    once to its effective limiter); with neither, ``A_0`` is used.
    """

    grid: JunctionGrid
    hamiltonians: Sequence[Hamiltonian]
    initial: Field
    final_time: float
    limiter: FluxLimiter | None = None
    junction_function: GeneralJunctionFunction | None = None
    cfl: float = 0.9
    dt_max: float = 0.1
    snapshot_times: Sequence[float] = ()

    def __post_init__(self):
        self.hamiltonians = list(self.hamiltonians)
        g = self.grid
        if len(self.hamiltonians) != g.branches:
            raise ValueError(f"{g.branches} branches but {len(self.hamiltonians)} Hamiltonians")
        if any(H.dim != g.dim for H in self.hamiltonians):
            raise ValueError("Hamiltonian dimension does not match the grid")
        if self.initial.grid != g:
            raise ValueError("initial field lives on a different grid")
        if not np.all(np.isfinite(self.initial.values)):
            raise ValueError("initial values must be finite")
        if not 0 < self.cfl <= 1:
            raise ValueError("CFL factor must lie in (0, 1]")
        if self.final_time < 0:
            raise ValueError("final time must be >= 0")
        if self.dt_max <= 0:
            raise ValueError("dt_max must be positive")
        bad = [t for t in self.snapshot_times if not 0 <= t <= self.final_time]
        if bad:
            raise ValueError(f"snapshot times {bad} outside [0, T]")
        if self.limiter is None:
            if self.junction_function is not None:
                self.limiter = reduced_limiter(self.junction_function, self.hamiltonians)
            else:
                hs = self.hamiltonians
                self.limiter = FluxLimiter(lambda pp: _a0(hs, pp), g.dim, True, "A_0")

    def with_initial(self, initial: Field) -> "Problem":
        return replace(self, initial=initial)

    def output_times(self) -> list[float]:
        times = sorted({0.0, float(self.final_time), *map(float, self.snapshot_times)})
        return times


@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    fields: list[Field] = field(default_factory=list)
    steps: int = 0

    def append(self, f: Field) -> None:
        if self.times and f.time <= self.times[-1]:
            raise ValueError("snapshot times must increase")
        self.times.append(f.time)
        self.fields.append(f)

    @property
    def final(self) -> Field:
        return self.fields[-1]


# -- numerical Hamiltonians ---------------------------------------------------

def godunov_flux(H: Hamiltonian, p_prime, p_minus, p_plus):
    """Godunov flux ``max(H^+(p_minus), H^-(p_plus))`` at fixed ``p'``.

    Equals ``min_[p_minus, p_plus] H`` when ``p_minus <= p_plus`` and
    ``max(H(p_minus), H(p_plus))`` otherwise, for quasi-convex slices.
    """
    pp = as_pprime(p_prime, H.dim)
    out = _godunov(H, pp, np.asarray(p_minus, dtype=float), np.asarray(p_plus, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def _godunov(H, pp, a, b):
    p0 = H._pi0(pp)
    return np.maximum(H._eval(pp, np.maximum(a, p0)), H._eval(pp, np.minimum(b, p0)))


def _pad_copy(V: np.ndarray, axis: int) -> np.ndarray:
    first = np.take(V, [0], axis=axis)
    last = np.take(V, [-1], axis=axis)
    return np.concatenate([first, V, last], axis=axis)


def _tangential(V: np.ndarray, spacing: Sequence[float], first_axis: int):
    """Central tangential gradient ``(..., d)`` and the LLF second differences per axis."""
    grads, jumps = [], []
    for ax, h in enumerate(spacing):
        a = first_axis + ax
        P = _pad_copy(V, a)
        n = V.shape[a]
        back = (V - np.take(P, range(0, n), axis=a)) / h
        fwd = (np.take(P, range(2, n + 2), axis=a) - V) / h
        grads.append(0.5 * (back + fwd))
        jumps.append(0.5 * (fwd - back))
    if grads:
        return np.stack(grads, axis=-1), jumps
    return np.zeros(V.shape + (0,)), jumps


def _dissipation(jumps, alphas) -> np.ndarray | float:
    total = 0.0
    for j, a in zip(jumps, alphas):
        total = total + a * j
    return total


def _branch_hamiltonian(H, V, dx, spacing, alphas, left_ghost: bool):
    """Numerical Hamiltonian at nodes ``V[1:]`` (or all nodes with a left ghost) along axis 0."""
    P = np.concatenate([V[:1], V, V[-1:]], axis=0) if left_ghost else np.concatenate([V, V[-1:]], axis=0)
    C = P[1:-1]
    back = (C - P[:-2]) / dx
    fwd = (P[2:] - C) / dx
    grad, jumps = _tangential(C, spacing, 1)
    return _godunov(H, grad, back, fwd) - _dissipation(jumps, alphas)


# -- Lipschitz bounds and the time step ----------------------------------------

def _samples_per_axis(n: int) -> int:
    return {1: 65, 2: 33, 3: 17}.get(n, 9)


def _box(radii: Sequence[float]) -> np.ndarray:
    m = _samples_per_axis(len(radii))
    axes = [np.linspace(-r, r, m) for r in radii]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(radii))


def _partials(f: Callable[[np.ndarray], np.ndarray], pts: np.ndarray, radii: Sequence[float]) -> np.ndarray:
    """Max over ``pts`` of ``|df/dx_k|`` per axis, by central differences."""
    out = np.zeros(pts.shape[1])
    for k in range(pts.shape[1]):
        h = 1e-6 * max(1.0, radii[k])
        e = np.zeros(pts.shape[1])
        e[k] = h
        out[k] = np.max(np.abs(f(pts + e) - f(pts - e))) / (2 * h)
    return out


def gradient_ranges(problem: Problem, U: np.ndarray) -> tuple[float, np.ndarray]:
    """Largest absolute normal slope and largest absolute tangential slope per axis."""
    g = problem.grid
    normal = np.abs(np.diff(U, axis=1)).max() / g.normal_spacing if g.normal_count else 0.0
    tang = np.array([np.abs(np.diff(U, axis=2 + a)).max() / h if U.shape[2 + a] > 1 else 0.0 for a, h in enumerate(g.tangential_spacing)])
    return float(normal), tang


def lipschitz_bounds(problem: Problem, U: np.ndarray) -> tuple[float, np.ndarray]:
    """Safety-scaled Lipschitz bounds ``(L_normal, L_tangential)`` over the current slope box.

    The box is symmetric, ``[-R, R]`` per axis, with ``R`` the largest
    absolute discrete slope; derivatives are sampled on a tensor grid.
    """
    R, Rt = gradient_ranges(problem, U)
    return _lipschitz(problem.hamiltonians, problem.limiter, R, Rt)


def _lipschitz(hamiltonians, limiter, R: float, Rt: np.ndarray):
    d = len(Rt)
    radii = list(Rt) + [R]
    pts = _box(radii)
    L = np.zeros(d + 1)
    for H in hamiltonians:
        L = np.maximum(L, _partials(lambda P: H._eval(P[:, :d], P[:, d]), pts, radii))
    if limiter is not None and d:
        tpts = _box(list(Rt))
        L[:d] = np.maximum(L[:d], _partials(lambda P: limiter._eval(P), tpts, list(Rt)))
    return SAFETY * L[d], SAFETY * L[:d]


def _dt_from(L: float, Lt: np.ndarray, grid: JunctionGrid, cfl: float, dt_max: float) -> float:
    rate = L / grid.normal_spacing + sum(a / h for a, h in zip(Lt, grid.tangential_spacing))
    return min(dt_max, cfl / rate) if rate > 0 else dt_max


def cfl_dt(problem: Problem, f: Field) -> float:
    """``theta / sum_axes(L_axis / dx_axis)``, capped by ``problem.dt_max``."""
    L, Lt = lipschitz_bounds(problem, f.full())
    return _dt_from(L, Lt, problem.grid, problem.cfl, problem.dt_max)


# -- time stepping --------------------------------------------------------------

def _advance(problem: Problem, U: np.ndarray, dt: float, alphas: np.ndarray) -> np.ndarray:
    g = problem.grid
    out = np.empty_like(U)
    for k, H in enumerate(problem.hamiltonians):
        out[k, 1:] = U[k, 1:] - dt * _branch_hamiltonian(H, U[k], g.normal_spacing, g.tangential_spacing, alphas, left_ghost=False)
    layer = U[0, 0]
    slopes = np.stack([(U[k, 1] - layer) / g.normal_spacing for k in range(g.branches)], axis=-1)
    grad, jumps = _tangential(layer, g.tangential_spacing, 0)
    flux = _flux_limited(problem.limiter, problem.hamiltonians, grad, slopes) - _dissipation(jumps, alphas)
    out[:, 0] = layer - dt * flux
    return out


def step(problem: Problem, f: Field, dt: float) -> Field:
    """One explicit step of length ``dt``; ``dt`` must respect :func:`cfl_dt`."""
    U = f.full()
    L, Lt = lipschitz_bounds(problem, U)
    limit = _dt_from(L, Lt, problem.grid, problem.cfl, problem.dt_max)
    if dt > limit * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds the CFL bound {limit}")
    return Field.from_full(problem.grid, _advance(problem, U, dt, Lt), f.time + dt)


def solve_lockstep(problems: Sequence[Problem]) -> list[Trajectory]:
    """Run several problems on one grid with a shared time step sequence.

    The step is the minimum of the individual CFL steps, so that every run
    sees exactly the same discrete operator; this is what makes orderings
    between runs exact.
    """
    first = problems[0]
    for p in problems[1:]:
        if p.grid != first.grid or p.output_times() != first.output_times():
            raise ValueError("lockstep runs need the same grid, horizon and snapshots")
    grid = first.grid
    states = [p.initial.full() for p in problems]
    trajs = [Trajectory() for _ in problems]
    for tr, p in zip(trajs, problems):
        tr.append(Field(grid, p.initial.values.copy(), 0.0))
    t = 0.0
    nsteps = 0
    for target in first.output_times()[1:]:
        while target - t > TIME_EPS * max(1.0, target):
            bounds = [lipschitz_bounds(p, U) for p, U in zip(problems, states)]
            dt = min(_dt_from(L, Lt, grid, p.cfl, p.dt_max) for (L, Lt), p in zip(bounds, problems))
            alphas = np.max(np.stack([Lt for _, Lt in bounds]), axis=0) if grid.dim else np.zeros(0)
            dt = min(dt, target - t)
            states = [_advance(p, U, dt, alphas) for p, U in zip(problems, states)]
            t = t + dt
            nsteps += 1
        t = target
        for tr, U in zip(trajs, states):
            tr.append(Field.from_full(grid, U, t))
    for tr in trajs:
        tr.steps = nsteps
    logger.debug("lockstep run of %d problems took %d steps", len(problems), nsteps)
    return trajs


def solve(problem: Problem) -> Trajectory:
    """Integrate to ``final_time``, storing the initial field and every snapshot time."""
    return solve_lockstep([problem])[0]


# -- whole-space reference ------------------------------------------------------

def whole_space_step(H: Hamiltonian, U: np.ndarray, dt: float, dx: float, spacing: Sequence[float], alphas) -> np.ndarray:
    """Same stencil as a junction branch, on ``R^(d+1)`` sampled as ``U[normal, *tangential]``."""
    return U - dt * _branch_hamiltonian(H, U, dx, spacing, alphas, left_ghost=True)


def solve_whole_space(
    H: Hamiltonian,
    grid: JunctionGrid,
    U0: np.ndarray,
    final_time: float,
    *,
    cfl: float = 0.9,
    dt_max: float = 0.1,
    snapshot_times: Sequence[float] = (),
) -> list[tuple[float, np.ndarray]]:
    """Monotone run on ``[-L, L] x tangential box`` with the junction grid's spacings.

    ``U0`` has shape ``(2M + 1, *tangential_shape)``, normal coordinate
    increasing from ``-L`` to ``L``.
    """
    U = np.array(U0, dtype=float)
    times = sorted({0.0, float(final_time), *map(float, snapshot_times)})
    out = [(0.0, U.copy())]
    t = 0.0
    dx = grid.normal_spacing
    for target in times[1:]:
        while target - t > TIME_EPS * max(1.0, target):
            R = np.abs(np.diff(U, axis=0)).max() / dx
            Rt = np.array([np.abs(np.diff(U, axis=1 + a)).max() / h if U.shape[1 + a] > 1 else 0.0 for a, h in enumerate(grid.tangential_spacing)])
            L, Lt = _lipschitz([H], None, R, Rt)
            dt = min(_dt_from(L, Lt, grid, cfl, dt_max), target - t)
            U = whole_space_step(H, U, dt, dx, grid.tangential_spacing, Lt)
            t += dt
        t = target
        out.append((t, U.copy()))
    return out


# -- Hopf-Lax oracle ------------------------------------------------------------

def _lagrangian(H: Hamiltonian, Q: np.ndarray) -> np.ndarray:
    L = H.conjugate(Q)
    if L is not None:
        return np.asarray(L, dtype=float)
    flat = Q.reshape(-1, Q.shape[-1])
    vals, _ = conjugate_with_argmax(H.full, flat)
    return np.asarray(vals).reshape(Q.shape[:-1])


def hopf_lax(H: Hamiltonian, u0: Callable[[np.ndarray], np.ndarray], t: float, X, *, dense: int | None = None):
    """``min_Y u0(Y) + t H*((X - Y)/t)`` for convex superlinear ``H`` on ``R^(d+1)``.

    A dense grid over a box around ``X`` (grown until its boundary is strictly
    worse than its best point) is followed by shrinking-grid refinement. Uses
    the Hamiltonian's closed-form conjugate when it has one.
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    Xb = np.atleast_2d(X)
    if t <= 0:
        vals = np.asarray(u0(Xb), dtype=float)
        return float(vals[0]) if single else vals
    B, n = Xb.shape
    m = dense or {1: 2001, 2: 121, 3: 31}.get(n, 11)

    def cost(Y, rows):
        return -(np.asarray(u0(Y), dtype=float) + t * _lagrangian(H, (Xb[rows, None, :] - Y) / t))

    unit = np.stack(np.meshgrid(*([np.linspace(-1, 1, m)] * n), indexing="ij"), axis=-1).reshape(-1, n)
    edge = np.any(np.abs(unit) == 1.0, axis=1)
    R = np.full(B, 2.0 * t + 1.0)
    rows = np.arange(B)
    for _ in range(60):
        pts = Xb[:, None, :] + R[:, None, None] * unit[None]
        vals = cost(pts, rows)
        best = vals.max(axis=1)
        grow = vals[:, edge].max(axis=1) >= best
        if not grow.any():
            break
        R = np.where(grow, 2.0 * R, R)
    else:
        from .errors import DivergenceError

        raise DivergenceError("Hopf-Lax search box kept growing")
    k = vals.argmax(axis=1)
    y0 = pts[rows, k]
    cell = 2.0 * R / (m - 1)
    y, v, _ = _optimize.maximize(cost, y0, np.repeat(3.0 * cell[:, None], n, axis=1), strict=False)
    result = -v
    return float(result[0]) if single else result


# -- discrete comparison ----------------------------------------------------------

@dataclass
class ComparisonReport:
    max_violation: float
    steps: int
    initial_gap_min: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= 1e-12


def discrete_comparison(problem: Problem, u0: Field, v0: Field, final_time: float | None = None) -> ComparisonReport:
    """Run ``u0 <= v0`` side by side and report ``max (u - v)_+`` over all steps."""
    if np.any(u0.values > v0.values):
        raise ValueError("initial data must satisfy u0 <= v0 nodewise")
    T = problem.final_time if final_time is None else final_time
    pu = replace(problem, initial=u0, final_time=T, snapshot_times=())
    pv = replace(problem, initial=v0, final_time=T, snapshot_times=())
    grid = problem.grid
    U, V = u0.full(), v0.full()
    worst = 0.0
    t = 0.0
    steps = 0
    while T - t > TIME_EPS * max(1.0, T):
        bu, bv = lipschitz_bounds(pu, U), lipschitz_bounds(pv, V)
        dt = min(_dt_from(*bu, grid, pu.cfl, pu.dt_max), _dt_from(*bv, grid, pv.cfl, pv.dt_max), T - t)
        alphas = np.maximum(bu[1], bv[1])
        U, V = _advance(pu, U, dt, alphas), _advance(pv, V, dt, alphas)
        worst = max(worst, float(np.max(U - V)))
        t += dt
        steps += 1
    return ComparisonReport(max(worst, 0.0), steps, float(np.min(v0.values - u0.values)))
