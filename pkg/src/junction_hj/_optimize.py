"""Batched derivative-free maximization.

All routines work on a batch of ``B`` independent problems at once. An
objective is called as ``objective(points, rows)`` with points of shape
``(b, K, n)`` belonging to batch rows ``rows`` (length ``b``) and returns
values of shape ``(b, K)``; ``-inf`` marks infeasible points.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DivergenceError, NonConvergenceError

Objective = Callable[[np.ndarray, np.ndarray], np.ndarray]

INV_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _points_per_axis(n: int) -> int:
    if n <= 2:
        return 21
    if n == 3:
        return 13
    return 7


def _unit_grid(m: int, n: int) -> np.ndarray:
    axis = np.linspace(-1.0, 1.0, m)
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)


def zoom_maximize(
    objective: Objective,
    center: np.ndarray,
    radius: np.ndarray,
    *,
    tol: float = 1e-8,
    points: int | None = None,
    max_moves: int = 200,
    max_radius: float = 2.0**60,
    max_rounds: int = 400,
    shrink_cells: float = 3.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shrinking-grid search for the maximum of a (concave) objective.

    Each round evaluates an ``m**n`` tensor grid on the current box. When the
    best point sits on the box boundary and the next grid step outward is
    better, the box is re-centred and doubled; otherwise it is re-centred and
    shrunk to ``shrink_cells`` cells around the best point. Stops once every half-width is
    below ``tol * (1 + |center|)``.

    Returns ``(argmax, value, converged)`` with shapes ``(B, n)``, ``(B,)``
    and ``(B,)``. Rows still shrinking after ``max_rounds`` are reported as
    not converged; an objective that keeps improving outward raises
    :class:`DivergenceError`.
    """
    center = np.array(center, dtype=float)
    B, n = center.shape
    radius = np.broadcast_to(np.asarray(radius, dtype=float), (B, n)).copy()
    m = points or _points_per_axis(n)
    unit = _unit_grid(m, n)
    idx_axes = np.stack(np.unravel_index(np.arange(m**n), (m,) * n), axis=-1)
    active = np.ones(B, dtype=bool)
    moves = np.zeros(B, dtype=int)
    best = center.copy()
    best_val = np.full(B, -np.inf)

    for _ in range(max_rounds):
        act = np.flatnonzero(active)
        if act.size == 0:
            return best, best_val, ~active
        c, r = center[act], radius[act]
        pts = c[:, None, :] + r[:, None, :] * unit[None, :, :]
        vals = objective(pts, act)
        k = np.argmax(vals, axis=1)
        sub = np.arange(act.size)
        bp = pts[sub, k]
        bv = vals[sub, k]

        empty = ~np.isfinite(bv)
        cell = 2.0 * r / (m - 1)
        pos = idx_axes[k]
        step = np.where(pos == 0, -1.0, np.where(pos == m - 1, 1.0, 0.0))
        probe_pts = bp[:, None, :] + np.eye(n)[None, :, :] * (step * cell)[:, :, None]
        probe = objective(probe_pts, act)
        probe = np.where(step != 0.0, probe, -np.inf)
        moved = (probe.max(axis=1) > bv) & ~empty

        grow = moved | empty
        new_r = np.where(grow[:, None], 2.0 * r, shrink_cells * cell)
        new_c = np.where(empty[:, None], c, bp)
        moves[act] += grow
        if np.any(moves[act] > max_moves) or np.any(new_r > max_radius):
            raise DivergenceError("objective still increasing at the expansion bound")

        center[act] = new_c
        radius[act] = new_r
        upd = ~empty
        best[act[upd]] = bp[upd]
        best_val[act[upd]] = bv[upd]
        done = ~grow & np.all(new_r <= tol * (1.0 + np.abs(new_c)), axis=1)
        active[act[done]] = False
    return best, best_val, ~active


def golden_polish(
    objective: Objective,
    x: np.ndarray,
    value: np.ndarray,
    halfwidth: np.ndarray,
    *,
    tol: float = 1e-10,
    sweeps: int = 2,
) -> tuple[np.ndarray, np.ndarray]:
    """Coordinate-wise golden-section refinement around ``x``.

    A coordinate update is kept only when it does not lower the objective, so
    the polish can never undo the grid search.
    """
    x = np.array(x, dtype=float)
    value = np.array(value, dtype=float)
    B, n = x.shape
    halfwidth = np.broadcast_to(np.asarray(halfwidth, dtype=float), (B, n))
    rows = np.arange(B)

    def along(axis: int, t: np.ndarray) -> np.ndarray:
        p = x.copy()
        p[:, axis] = t
        return objective(p[:, None, :], rows)[:, 0]

    for _ in range(sweeps):
        for a in range(n):
            lo = x[:, a] - halfwidth[:, a]
            hi = x[:, a] + halfwidth[:, a]
            width = hi - lo
            target = tol * (1.0 + np.abs(x[:, a]))
            if np.all(width <= target):
                continue
            iters = int(np.ceil(np.log(np.max(target / np.maximum(width, 1e-300))) / np.log(INV_GOLDEN)))
            iters = min(max(iters, 1), 200)
            c = hi - INV_GOLDEN * (hi - lo)
            d = lo + INV_GOLDEN * (hi - lo)
            fc, fd = along(a, c), along(a, d)
            for _ in range(iters):
                left = fc >= fd
                hi = np.where(left, d, hi)
                lo = np.where(left, lo, c)
                new_c = hi - INV_GOLDEN * (hi - lo)
                new_d = lo + INV_GOLDEN * (hi - lo)
                c_next = np.where(left, new_c, d)
                d_next = np.where(left, c, new_d)
                # only one fresh evaluation per branch is needed, but the
                # batch mixes both cases, so evaluate the fresh points jointly
                fresh = np.where(left, c_next, d_next)
                f_fresh = along(a, fresh)
                fc, fd = np.where(left, f_fresh, fd), np.where(left, fc, f_fresh)
                c, d = c_next, d_next
            t = 0.5 * (lo + hi)
            ft = along(a, t)
            keep = ft >= value
            x[keep, a] = t[keep]
            value = np.where(keep, ft, value)
    return x, value


def maximize(
    objective: Objective,
    center: np.ndarray,
    radius: np.ndarray,
    *,
    tol: float = 1e-10,
    grid_tol: float = 1e-8,
    strict: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Grid zoom to ``grid_tol`` followed by a coordinate golden-section polish.

    With ``strict`` a row that fails to converge raises
    :class:`NonConvergenceError`; otherwise it is flagged in the third output.
    """
    x, v, ok = zoom_maximize(objective, center, radius, tol=grid_tol)
    if strict and not ok.all():
        raise NonConvergenceError("grid search did not converge")
    hw = 6.0 * grid_tol * (1.0 + np.abs(x))
    x, v = golden_polish(objective, x, v, hw, tol=tol)
    return x, v, ok
