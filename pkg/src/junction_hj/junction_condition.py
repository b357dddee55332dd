"""Junction conditions: flux limiters, ``F_A``, and the reduction ``F -> A_F``."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BracketError
from .hamiltonian import BRACKET_CAP, Hamiltonian, _out, as_pprime

REDUCE_LEVEL_TOL = 1e-10
REDUCE_ARG_TOL = 1e-12
CACHE_QUANTUM = 1e-6


class FluxLimiter:
    """A continuous function ``A: R^d -> R`` of the tangential momentum."""

    def __init__(self, func: Callable[[np.ndarray], np.ndarray], dim: int, quasi_convex: bool = False, name: str = "custom"):
        self._func = func
        self.dim = dim
        self.quasi_convex = quasi_convex
        self.name = name

    def __call__(self, p_prime=None):
        pp = as_pprime(p_prime, self.dim)
        return _out(self._eval(pp))

    def _eval(self, pp: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(self._func(pp), dtype=float), pp.shape[:-1])

    @classmethod
    def constant(cls, value: float, dim: int = 0) -> "FluxLimiter":
        value = float(value)
        return cls(lambda pp: np.full(pp.shape[:-1], value), dim, True, f"constant({value})")

    @classmethod
    def quadratic(cls, dim: int, scale: float = 1.0, offset: float = 0.0, center: Sequence[float] | None = None) -> "FluxLimiter":
        """``A(p') = scale |p' - center|^2 + offset``."""
        c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        return cls(lambda pp: scale * np.sum((pp - c) ** 2, axis=-1) + offset, dim, scale >= 0, "quadratic")

    def __repr__(self) -> str:
        return f"FluxLimiter({self.name}, dim={self.dim})"


class CachedLimiter(FluxLimiter):
    """Memoizes an expensive limiter on ``p'`` rounded to a fixed quantum.

    Lookups are lock-free reads of a dict; inserts happen under a lock, so a
    single instance can be shared between threads.
    """

    def __init__(self, inner: FluxLimiter, quantum: float = CACHE_QUANTUM):
        super().__init__(inner._func, inner.dim, inner.quasi_convex, f"cached({inner.name})")
        self.inner = inner
        self.quantum = quantum
        self._cache: dict[tuple, float] = {}
        self._lock = threading.Lock()

    def _eval(self, pp):
        shape = pp.shape[:-1]
        q = np.round(pp.reshape(int(np.prod(shape, dtype=int)), self.dim) / self.quantum).astype(np.int64)
        keys = [tuple(row) for row in q]
        out = np.empty(len(keys))
        missing: dict[tuple, list[int]] = {}
        for n, key in enumerate(keys):
            hit = self._cache.get(key)
            if hit is None:
                missing.setdefault(key, []).append(n)
            else:
                out[n] = hit
        if missing:
            mk = list(missing)
            vals = np.asarray(self.inner._eval(np.array(mk, dtype=float).reshape(len(mk), self.dim) * self.quantum)).reshape(-1)
            with self._lock:
                for key, v in zip(mk, vals):
                    self._cache[key] = float(v)
            for key, v in zip(mk, vals):
                out[missing[key]] = v
        return out.reshape(shape)


class GeneralJunctionFunction:
    """A junction function ``F(p', p_1, ..., p_N)``, non-increasing in each ``p_i``."""

    def __init__(self, func: Callable[[np.ndarray, np.ndarray], np.ndarray], branches: int, dim: int, quasi_convex: bool = False, name: str = "custom"):
        self._func = func
        self.branches = branches
        self.dim = dim
        self.quasi_convex = quasi_convex
        self.name = name

    def __call__(self, p_prime, p):
        pp = as_pprime(p_prime, self.dim)
        return _out(self._eval(pp, np.asarray(p, dtype=float)))

    def _eval(self, pp, p):
        return np.asarray(self._func(pp, p), dtype=float)

    @classmethod
    def linear(cls, c: float, w: Sequence[float], dim: int = 0) -> "GeneralJunctionFunction":
        """``F = c - w . p``; monotone when every weight is non-negative."""
        w = np.asarray(w, dtype=float)
        return cls(lambda pp, p: c - p @ w, w.size, dim, True, f"linear(c={c})")

    @classmethod
    def flux_limited(cls, A: FluxLimiter, hamiltonians: Sequence[Hamiltonian]) -> "GeneralJunctionFunction":
        hs = list(hamiltonians)
        return cls(lambda pp, p: _flux_limited(A, hs, pp, p), len(hs), A.dim, A.quasi_convex, f"F_A[{A.name}]")


def a0(hamiltonians: Sequence[Hamiltonian], p_prime=None):
    """``A_0(p') = max_i min_p H_i(p', p)``, the smallest meaningful limiter."""
    pp = as_pprime(p_prime, hamiltonians[0].dim)
    return _out(_a0(hamiltonians, pp))


def _a0(hamiltonians, pp):
    return np.max(np.stack([np.broadcast_to(H._branch_min(pp), pp.shape[:-1]) for H in hamiltonians]), axis=0)


def _flux_limited(A: FluxLimiter, hamiltonians, pp, p):
    p = np.asarray(p, dtype=float)
    vals = [A._eval(pp)]
    for i, H in enumerate(hamiltonians):
        pi = p[..., i]
        vals.append(H._eval(pp, np.minimum(pi, H._pi0(pp))))
    shape = np.broadcast_shapes(*(np.shape(v) for v in vals))
    return np.max(np.stack([np.broadcast_to(v, shape) for v in vals]), axis=0)


def flux_limited_value(A: FluxLimiter, hamiltonians: Sequence[Hamiltonian], p_prime, p):
    """``F_A(p', p) = max(A(p'), max_i H_i^-(p', p_i))`` for ``p`` of shape ``(..., N)``."""
    pp = as_pprime(p_prime, A.dim)
    return _out(_flux_limited(A, hamiltonians, pp, p))


@dataclass
class ValidationReport:
    samples: int
    monotonicity_violations: list = field(default_factory=list)
    quasiconvexity_violations: list = field(default_factory=list)
    checked_quasiconvexity: bool = False

    @property
    def passed(self) -> bool:
        return not self.monotonicity_violations and not self.quasiconvexity_violations


def validate(
    F: GeneralJunctionFunction,
    sample_budget: int = 10_000,
    *,
    step: float = 1e-3,
    box: float = 5.0,
    seed: int = 0,
    tol: float = 1e-9,
) -> ValidationReport:
    """Sampled check of monotonicity in each ``p_i`` (and quasi-convexity when tagged).

    Report-only: an empty violation list means no counterexample was found.
    """
    rng = np.random.default_rng(seed)
    n, d = F.branches, F.dim
    report = ValidationReport(samples=sample_budget)
    pp = rng.uniform(-box, box, (sample_budget, d))
    p = rng.uniform(-box, box, (sample_budget, n))
    coord = rng.integers(0, n, sample_budget)
    shifted = p.copy()
    shifted[np.arange(sample_budget), coord] += step
    inc = F._eval(pp, shifted) - F._eval(pp, p)
    bad = np.flatnonzero(inc > tol * np.maximum(1.0, np.abs(F._eval(pp, p))))
    report.monotonicity_violations = [
        {"p_prime": pp[k].tolist(), "p": p[k].tolist(), "coordinate": int(coord[k]) + 1, "increase": float(inc[k])}
        for k in bad
    ]
    if F.quasi_convex:
        report.checked_quasiconvexity = True
        P = np.concatenate([pp, p], axis=1)
        Q = np.concatenate([rng.uniform(-box, box, (sample_budget, d)), rng.uniform(-box, box, (sample_budget, n))], axis=1)
        M = 0.5 * (P + Q)

        def ev(X):
            return F._eval(X[:, :d], X[:, d:])

        fp, fq, fm = ev(P), ev(Q), ev(M)
        excess = fm - np.maximum(fp, fq)
        bad = np.flatnonzero(excess > tol * np.maximum(1.0, np.abs(fm)))
        report.quasiconvexity_violations = [
            {"P": P[k].tolist(), "Q": Q[k].tolist(), "excess": float(excess[k])} for k in bad
        ]
    return report


def reduce_to_limiter(F: GeneralJunctionFunction, hamiltonians: Sequence[Hamiltonian], p_prime=None):
    """Effective flux limiter ``A_F(p')`` of a monotone junction function ``F``.

    With ``p_i^0 = pi_i^+(p', A_0(p'))``: if ``F(p', p^0) <= A_0(p')`` the
    answer is ``A_0(p')``; otherwise it is the unique ``lambda >= A_0(p')`` with
    ``F(p', pi^+(p', lambda)) = lambda``, found by bisection on the strictly
    decreasing ``g(lambda) = F(p', pi^+(p', lambda)) - lambda``.
    """
    pp = as_pprime(p_prime, F.dim)
    return _out(_reduce(F, list(hamiltonians), pp))


def _reduce(F, hamiltonians, pp):
    shape = pp.shape[:-1]
    base = np.broadcast_to(_a0(hamiltonians, pp), shape).astype(float)

    def g(lam):
        p = np.stack([np.broadcast_to(H._pi_pm(pp, lam, 1), shape) for H in hamiltonians], axis=-1)
        return np.broadcast_to(F._eval(pp, p), shape) - lam

    g0 = g(base)
    result = base.copy()
    todo = g0 > 0
    if not todo.any():
        return result
    lo = base.copy()
    width = np.ones(shape)
    hi = base + width
    while True:
        gh = g(hi)
        grow = todo & (gh >= 0)
        if not grow.any():
            break
        lo = np.where(grow, hi, lo)
        width = np.where(grow, 2.0 * width, width)
        if np.any(width > BRACKET_CAP):
            raise BracketError("no crossing for A_F within the bracket cap; F may not be monotone or is unbounded")
        hi = np.where(grow, base + width, hi)
    mid = 0.5 * (lo + hi)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        small = np.abs(gm) <= REDUCE_LEVEL_TOL
        narrow = hi - lo <= REDUCE_ARG_TOL * np.maximum(1.0, np.abs(mid))
        if np.all(small | narrow | ~todo):
            break
        pos = gm > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    return np.where(todo, mid, result)


def reduced_limiter(F: GeneralJunctionFunction, hamiltonians: Sequence[Hamiltonian], quantum: float = CACHE_QUANTUM) -> CachedLimiter:
    """``A_F`` as a cached :class:`FluxLimiter`, for use by the solver."""
    hs = list(hamiltonians)
    inner = FluxLimiter(lambda pp: _reduce(F, hs, pp), F.dim, F.quasi_convex, f"A_F[{F.name}]")
    return CachedLimiter(inner, quantum)


@dataclass
class QuasiConvexityReport:
    segments: int
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def check_quasiconvex(
    f: Callable[[np.ndarray], np.ndarray],
    dim: int,
    segment_budget: int = 1000,
    *,
    box: float = 3.0,
    seed: int = 0,
    tol: float = 1e-9,
) -> QuasiConvexityReport:
    """Midpoint test ``f((p+q)/2) <= max(f(p), f(q)) + tol`` on random segments in ``[-box, box]^d``."""
    rng = np.random.default_rng(seed)
    P = rng.uniform(-box, box, (segment_budget, dim))
    Q = rng.uniform(-box, box, (segment_budget, dim))
    M = 0.5 * (P + Q)
    fp, fq, fm = (np.asarray(f(X), dtype=float).reshape(-1) for X in (P, Q, M))
    excess = fm - np.maximum(fp, fq)
    bad = np.flatnonzero(excess > tol * np.maximum(1.0, np.abs(fm)))
    return QuasiConvexityReport(
        segment_budget,
        [{"p": P[k].tolist(), "q": Q[k].tolist(), "excess": float(excess[k])} for k in bad],
    )
