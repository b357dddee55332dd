"""Two half-spaces with different Hamiltonians, seen as a two-branch junction.

``R^(d+1)`` is split at ``x_(d+1) = 0`` into a left part (``H_L``) and a
right part (``H_R``). Folding the left part onto a second branch turns the
problem into a junction with ``H_1(p', p) = H_L(p', -p)`` and ``H_2 = H_R``.
The extremal Ishii solutions are then flux-limited solutions: the maximal
one uses ``A_I^-`` and the minimal one ``A_I^+``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .hamiltonian import Hamiltonian, MirroredHamiltonian, _out, as_pprime
from .hj_solver import Problem, Trajectory, solve_lockstep
from .junction_condition import CachedLimiter, FluxLimiter, _a0
from .junction_core import Field, JunctionGrid

SCAN_POINTS = 4096
_GOLD = (np.sqrt(5.0) - 1.0) / 2.0


def fold(grid: JunctionGrid, U: np.ndarray, time: float = 0.0) -> Field:
    """Whole-space samples ``U[normal, *tangential]`` on ``[-L, L]`` to a two-branch field.

    Branch 1 carries ``U(x', -x)`` and branch 2 carries ``U(x', x)``.
    """
    if grid.branches != 2:
        raise ValueError("folding needs a two-branch grid")
    U = np.asarray(U, dtype=float)
    M = grid.normal_count
    if U.shape != (2 * M + 1, *grid.tangential_shape):
        raise ValueError(f"expected shape {(2 * M + 1, *grid.tangential_shape)}, got {U.shape}")
    full = np.stack([U[M::-1], U[M:]])
    return Field.from_full(grid, full, time)


def unfold(f: Field) -> np.ndarray:
    """Inverse of :func:`fold`: ``(2M + 1, *tangential)`` samples ordered by increasing normal coordinate."""
    full = f.full()
    return np.concatenate([full[0, :0:-1], full[1]], axis=0)


def whole_space_axis(grid: JunctionGrid) -> np.ndarray:
    M = grid.normal_count
    return np.arange(-M, M + 1) * grid.normal_spacing


def sample_whole_space(grid: JunctionGrid, func: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Evaluate ``func(X)`` (``X`` of shape ``(..., d + 1)``, tangential first) on the unfolded grid."""
    axes = [*grid.tangential_axes(), whole_space_axis(grid)]
    mesh = np.meshgrid(*axes, indexing="ij")
    X = np.stack(mesh, axis=-1)
    vals = np.asarray(func(X), dtype=float)
    # tangential-major -> normal-major
    return np.moveaxis(vals, -1, 0) if grid.dim else vals


def mirrored_hamiltonians(H_L: Hamiltonian, H_R: Hamiltonian) -> tuple[Hamiltonian, Hamiltonian]:
    """``(H_1, H_2)`` with ``H_1(p', p) = H_L(p', -p)`` and ``H_2 = H_R``."""
    if H_L.dim != H_R.dim:
        raise ValueError("H_L and H_R must share the tangential dimension")
    return MirroredHamiltonian(H_L), H_R


def _a_star(H_L, H_R, pp):
    shape = pp.shape[:-1]
    pl = np.broadcast_to(H_L._pi0(pp), shape)
    pr = np.broadcast_to(H_R._pi0(pp), shape)
    lo, hi = np.minimum(pl, pr), np.maximum(pl, pr)
    lo, hi = lo.reshape(-1), hi.reshape(-1)
    flat_pp = np.broadcast_to(pp, (*shape, pp.shape[-1])).reshape(lo.size, pp.shape[-1])

    def obj(p):
        q = flat_pp[:, None, :] if p.ndim == 2 else flat_pp
        return np.minimum(H_L._eval(q, p), H_R._eval(q, p))

    t = np.linspace(0.0, 1.0, SCAN_POINTS)
    grid = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    vals = obj(grid)
    k = np.argmax(vals, axis=1)
    best = vals[np.arange(lo.size), k]
    cell = (hi - lo) / (SCAN_POINTS - 1)
    a = np.maximum(lo, grid[np.arange(lo.size), k] - cell)
    b = np.minimum(hi, grid[np.arange(lo.size), k] + cell)
    c, d = b - _GOLD * (b - a), a + _GOLD * (b - a)
    fc, fd = obj(c), obj(d)
    for _ in range(80):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        fresh = np.where(left, b - _GOLD * (b - a), a + _GOLD * (b - a))
        ff = obj(fresh)
        c, d = np.where(left, fresh, d), np.where(left, c, fresh)
        fc, fd = np.where(left, ff, fd), np.where(left, fc, ff)
    refined = obj(0.5 * (a + b))
    return np.maximum(best, refined).reshape(shape)


def a_star(H_L: Hamiltonian, H_R: Hamiltonian, p_prime=None):
    """``A*(p') = max of min(H_L, H_R)(p', .)`` over the segment between the two minimizers.

    A dense scan guards against several local maxima; a golden-section pass
    refines the best scan cell.
    """
    pp = as_pprime(p_prime, H_L.dim)
    return _out(_a_star(H_L, H_R, pp))


def _ishii_pair(H_L, H_R, pp):
    base = _a0([H_L, H_R], pp)
    plus = np.maximum(base, _a_star(H_L, H_R, pp))
    crossed = np.broadcast_to(H_R._pi0(pp) < H_L._pi0(pp), plus.shape)
    minus = np.where(crossed, plus, base)
    return minus, plus


def ishii_limiters(H_L: Hamiltonian, H_R: Hamiltonian, p_prime=None):
    """``(A_I^-(p'), A_I^+(p'))``.

    ``A_I^+ = max(A_0, A*)``; ``A_I^-`` equals ``A_I^+`` when
    ``pi_R^0 < pi_L^0`` and ``A_0`` otherwise.
    """
    pp = as_pprime(p_prime, H_L.dim)
    minus, plus = _ishii_pair(H_L, H_R, pp)
    return _out(minus), _out(plus)


def ishii_flux_limiters(H_L: Hamiltonian, H_R: Hamiltonian) -> tuple[FluxLimiter, FluxLimiter]:
    d = H_L.dim
    minus = FluxLimiter(lambda pp: _ishii_pair(H_L, H_R, pp)[0], d, False, "A_I^-")
    plus = FluxLimiter(lambda pp: _ishii_pair(H_L, H_R, pp)[1], d, False, "A_I^+")
    if d:
        return CachedLimiter(minus), CachedLimiter(plus)
    return minus, plus


@dataclass
class TwoDomainProblem:
    H_L: Hamiltonian
    H_R: Hamiltonian
    initial: Callable[[np.ndarray], np.ndarray] | np.ndarray
    final_time: float
    grid: JunctionGrid
    cfl: float = 0.9
    dt_max: float = 0.1
    snapshot_times: Sequence[float] = ()

    def __post_init__(self):
        if self.grid.branches != 2:
            raise ValueError("the two-domain problem lives on a two-branch grid")
        if self.H_L.dim != self.grid.dim or self.H_R.dim != self.grid.dim:
            raise ValueError("Hamiltonian dimension does not match the grid")

    def initial_samples(self) -> np.ndarray:
        if callable(self.initial):
            return sample_whole_space(self.grid, self.initial)
        return np.asarray(self.initial, dtype=float)

    def junction_problem(self, limiter: FluxLimiter) -> Problem:
        U0 = self.initial_samples()
        return Problem(
            self.grid,
            mirrored_hamiltonians(self.H_L, self.H_R),
            fold(self.grid, U0),
            self.final_time,
            limiter=limiter,
            cfl=self.cfl,
            dt_max=self.dt_max,
            snapshot_times=tuple(self.snapshot_times),
        )


@dataclass
class ExtremalRuns:
    """Unfolded minimal and maximal Ishii solutions, one array per snapshot."""

    times: list[float]
    minimal: list[np.ndarray] = field(default_factory=list)
    maximal: list[np.ndarray] = field(default_factory=list)
    junction_minimal: Trajectory | None = None
    junction_maximal: Trajectory | None = None


def extremal_solutions(problem: TwoDomainProblem) -> ExtremalRuns:
    """Minimal (limiter ``A_I^+``) and maximal (limiter ``A_I^-``) Ishii solutions.

    Both runs share one time-step sequence, so their ordering is exact.
    """
    a_minus, a_plus = ishii_flux_limiters(problem.H_L, problem.H_R)
    lo, hi = solve_lockstep([problem.junction_problem(a_plus), problem.junction_problem(a_minus)])
    return ExtremalRuns(
        times=list(lo.times),
        minimal=[unfold(f) for f in lo.fields],
        maximal=[unfold(f) for f in hi.fields],
        junction_minimal=lo,
        junction_maximal=hi,
    )
