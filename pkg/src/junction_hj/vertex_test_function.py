"""The vertex test function ``G^0`` for smooth convex Hamiltonians.

For ``X`` on branch ``i`` and ``Y`` on branch ``j``::

    G^0(X, Y) = sup  p'.(x' - y') + p_i x - p_j y - lambda
    over (p', p_i, p_j, lambda) with lambda = H_i(p', p_i) = H_j(p', p_j) >= A(p')

Parametrizing the constraint set by ``(p', lambda)`` turns this into the
maximization of a jointly concave function on the convex set
``{lambda >= A(p')}`` (searched as ``lambda = A(p') + s`` with ``s >= 0``):
the normal momenta are ``pi_i^+(p', lambda)`` and
``pi_j^-(p', lambda)``, or ``pi_i^(sign(x - y))`` when both points lie on the
same branch. Gradients follow from the envelope theorem.

Only the smooth convex case is handled: Hamiltonians with positive definite
Hessian and superlinear growth, and a convex limiter ``A >= A_0``.
Quasi-convex inputs have to be composed with a convex increasing function by
the caller first (see :class:`~junction_hj.hamiltonian.ComposedHamiltonian`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _optimize
from .errors import NonConvergenceError, SingularPointError
from .hamiltonian import Hamiltonian
from .junction_condition import FluxLimiter, _a0, _flux_limited
from .junction_core import JunctionPoint, junction_distance

FD_STEP = 1e-6
ALPHA_TOL = 1e-4


@dataclass(frozen=True)
class Germ:
    """The pair of branches a test-function evaluation works in."""

    i: int
    j: int
    H_i: Hamiltonian
    H_j: Hamiltonian
    limiter: FluxLimiter


@dataclass
class VTFEvaluation:
    value: float
    p_prime: np.ndarray
    lam: float
    P_hat: np.ndarray
    alpha: np.ndarray
    alpha_in_simplex: bool
    converged: bool
    germ: tuple[int, int]


@dataclass
class VTFGradient:
    """``D_X G^0`` and ``D_Y G^0``.

    The normal part is a float for a point inside a branch and an array of
    ``N`` one-sided slopes for a point on the interface.
    """

    x_tangential: np.ndarray
    x_normal: float | np.ndarray
    y_tangential: np.ndarray
    y_normal: float | np.ndarray


class VertexTestFunction:
    """``G^0`` for a junction with Hamiltonians ``H_1..H_N`` and limiter ``A``."""

    def __init__(
        self,
        hamiltonians: Sequence[Hamiltonian],
        limiter: FluxLimiter,
        *,
        check_samples: int = 256,
        seed: int = 0,
    ):
        self.hamiltonians = list(hamiltonians)
        self.limiter = limiter
        self.dim = limiter.dim
        if any(H.dim != self.dim for H in self.hamiltonians):
            raise ValueError("Hamiltonians and limiter disagree on the tangential dimension")
        if check_samples:
            rng = np.random.default_rng(seed)
            pp = rng.uniform(-3.0, 3.0, (check_samples, self.dim))
            gap = limiter._eval(pp) - _a0(self.hamiltonians, pp)
            if np.any(gap < -1e-9 * np.maximum(1.0, np.abs(_a0(self.hamiltonians, pp)))):
                raise ValueError("the limiter must satisfy A >= A_0")

    @property
    def branches(self) -> int:
        return len(self.hamiltonians)

    def germ(self, X: JunctionPoint, Y: JunctionPoint) -> Germ:
        i, j = _germ_indices(X, Y)
        return Germ(i, j, self.hamiltonians[i - 1], self.hamiltonians[j - 1], self.limiter)

    def level_floor(self, pp: np.ndarray) -> np.ndarray:
        """``max(A, A_0)(p')``; equals ``A`` whenever the standing assumption holds."""
        return np.maximum(self.limiter._eval(pp), _a0(self.hamiltonians, pp))

    def pi(self, k: int, pp, lam, sign: int) -> np.ndarray:
        return self.hamiltonians[k - 1]._pi_pm(pp, lam, sign)


def _germ_indices(X: JunctionPoint, Y: JunctionPoint) -> tuple[int, int]:
    if X.on_interface and Y.on_interface:
        return 1, 1
    if X.on_interface:
        return Y.branch, Y.branch
    if Y.on_interface:
        return X.branch, X.branch
    return X.branch, Y.branch


def _coefficients(vtf: VertexTestFunction, X: JunctionPoint, Y: JunctionPoint) -> tuple[np.ndarray, np.ndarray]:
    """Weights of ``pi_k^+`` and ``pi_k^-`` in the objective, per branch ``k``."""
    n = vtf.branches
    cp, cm = np.zeros(n), np.zeros(n)
    if X.on_interface and Y.on_interface:
        return cp, cm
    i, j = _germ_indices(X, Y)
    if i != j:
        cp[i - 1] = X.normal
        cm[j - 1] = -Y.normal
    else:
        z = X.normal - Y.normal
        if z > 0:
            cp[i - 1] = z
        elif z < 0:
            cm[i - 1] = z
    return cp, cm


def _check_dims(vtf, X, Y):
    if X.dim != vtf.dim or Y.dim != vtf.dim:
        raise ValueError(f"points must have {vtf.dim} tangential coordinates")
    for P in (X, Y):
        if not P.on_interface and not 1 <= P.branch <= vtf.branches:
            raise ValueError(f"branch {P.branch} out of range 1..{vtf.branches}")


def _maximize(vtf: VertexTestFunction, Xs: Sequence[JunctionPoint], Ys: Sequence[JunctionPoint]):
    """Batched maximization; returns ``(value, p', lambda, converged)`` arrays."""
    d = vtf.dim
    B = len(Xs)
    zt = np.array([np.subtract(X.tangential, Y.tangential) for X, Y in zip(Xs, Ys)]).reshape(B, d)
    coef = [_coefficients(vtf, X, Y) for X, Y in zip(Xs, Ys)]
    cp = np.array([c[0] for c in coef])
    cm = np.array([c[1] for c in coef])
    used_p = np.flatnonzero(np.any(cp != 0, axis=0))
    used_m = np.flatnonzero(np.any(cm != 0, axis=0))

    def objective(pts, rows):
        # lambda = floor(p') + s: the curved constraint becomes the flat s >= 0,
        # and s < 0 is folded back onto the boundary
        pp = pts[..., :d]
        floor = vtf.level_floor(pp)
        lam = floor + np.maximum(pts[..., d], 0.0)
        val = np.einsum("bkd,bd->bk", pp, zt[rows]) - lam
        for k in used_p:
            val = val + cp[rows, k, None] * vtf.pi(k + 1, pp, lam, 1)
        for k in used_m:
            val = val + cm[rows, k, None] * vtf.pi(k + 1, pp, lam, -1)
        return val

    znorm = np.linalg.norm(zt, axis=1) + np.abs(cp).sum(1) + np.abs(cm).sum(1)
    r_p = 8.0 * (1.0 + np.linalg.norm(zt, axis=1))
    r_s = (1.0 + znorm) ** 2
    center = np.concatenate([np.zeros((B, d)), r_s[:, None]], axis=1)
    radius = np.concatenate([np.repeat(r_p[:, None], d, axis=1), r_s[:, None]], axis=1)
    x, v, ok = _optimize.maximize(objective, center, radius, strict=False)
    pp = x[:, :d]
    lam = vtf.level_floor(pp) + np.maximum(x[:, d], 0.0)
    return v, pp, lam, ok


def _fd_grad(f, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.empty(x.size)
    for k in range(x.size):
        e = np.zeros(x.size)
        h = FD_STEP * max(1.0, abs(x[k]))
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _multipliers(vtf, X, Y, pp, lam):
    """Least-squares ``alpha`` with ``Z = D(alpha . H)(P_hat)`` and ``sum(alpha) = 1``."""
    d = vtf.dim
    i, j = _germ_indices(X, Y)
    zt = np.subtract(X.tangential, Y.tangential)
    Hi, Hj = vtf.hamiltonians[i - 1], vtf.hamiltonians[j - 1]
    A = vtf.limiter
    gA = _fd_grad(lambda q: float(A._eval(q)), pp)
    if i != j:
        pi_i = float(vtf.pi(i, pp, lam, 1))
        pi_j = float(vtf.pi(j, pp, lam, -1))
        P_hat = np.concatenate([pp, [pi_i, pi_j]])
        gi = _fd_grad(lambda q: float(Hi._eval(q[:d], q[d])), np.append(pp, pi_i))
        gj = _fd_grad(lambda q: float(Hj._eval(q[:d], q[d])), np.append(pp, pi_j))
        M = np.zeros((d + 3, 3))
        M[:d, 0], M[d, 0] = gi[:d], gi[d]
        M[:d, 1], M[d + 1, 1] = gj[:d], gj[d]
        M[:d, 2] = gA
        M[d + 2] = 1.0
        rhs = np.concatenate([zt, [X.normal, -Y.normal, 1.0]])
    else:
        z = X.normal - Y.normal
        sign = 1 if z >= 0 else -1
        pi_i = float(vtf.pi(i, pp, lam, sign))
        P_hat = np.append(pp, pi_i)
        gi = _fd_grad(lambda q: float(Hi._eval(q[:d], q[d])), P_hat)
        M = np.zeros((d + 2, 2))
        M[: d + 1, 0] = gi
        M[:d, 1] = gA
        M[d + 1] = 1.0
        rhs = np.concatenate([zt, [z, 1.0]])
    alpha = np.linalg.lstsq(M, rhs, rcond=None)[0]
    ok = bool(np.all(alpha >= -ALPHA_TOL) and np.all(alpha <= 1 + ALPHA_TOL))
    return P_hat, alpha, ok


def eval_g0(vtf: VertexTestFunction, X: JunctionPoint, Y: JunctionPoint, *, strict: bool = True) -> VTFEvaluation:
    """Value of ``G^0(X, Y)`` together with its maximizer.

    Raises :class:`NonConvergenceError` when the search does not settle, unless
    ``strict`` is off, in which case the evaluation is flagged instead.
    """
    _check_dims(vtf, X, Y)
    v, pp, lam, ok = _maximize(vtf, [X], [Y])
    if strict and not ok[0]:
        raise NonConvergenceError("G^0 maximization did not converge")
    P_hat, alpha, in_simplex = _multipliers(vtf, X, Y, pp[0], lam[0])
    return VTFEvaluation(float(v[0]), pp[0], float(lam[0]), P_hat, alpha, in_simplex, bool(ok[0]), _germ_indices(X, Y))


def eval_g0_values(vtf: VertexTestFunction, Xs: Sequence[JunctionPoint], Ys: Sequence[JunctionPoint]) -> np.ndarray:
    """Values only, for many pairs at once."""
    for X, Y in zip(Xs, Ys):
        _check_dims(vtf, X, Y)
    v, _, _, ok = _maximize(vtf, list(Xs), list(Ys))
    if not ok.all():
        raise NonConvergenceError("G^0 maximization did not converge")
    return v


def _gradient_from(vtf, X, Y, pp, lam) -> VTFGradient:
    N = vtf.branches
    if X.on_interface and Y.on_interface:
        xs = np.array([float(vtf.pi(k, pp, lam, 1)) for k in range(1, N + 1)])
        ys = np.array([float(vtf.pi(k, pp, lam, -1)) for k in range(1, N + 1)])
        return VTFGradient(pp.copy(), xs, -pp, -ys)
    if X.on_interface:
        j = Y.branch
        xs = np.array([float(vtf.pi(k, pp, lam, -1 if k == j else 1)) for k in range(1, N + 1)])
        return VTFGradient(pp.copy(), xs, -pp, -float(vtf.pi(j, pp, lam, -1)))
    if Y.on_interface:
        i = X.branch
        ys = np.array([float(vtf.pi(k, pp, lam, 1 if k == i else -1)) for k in range(1, N + 1)])
        return VTFGradient(pp.copy(), float(vtf.pi(i, pp, lam, 1)), -pp, -ys)
    i, j = X.branch, Y.branch
    if i != j:
        return VTFGradient(pp.copy(), float(vtf.pi(i, pp, lam, 1)), -pp, -float(vtf.pi(j, pp, lam, -1)))
    if X.normal == Y.normal:
        raise SingularPointError("G^0 is not differentiable on {x = y > 0} within one branch")
    s = 1 if X.normal > Y.normal else -1
    p = float(vtf.pi(i, pp, lam, s))
    return VTFGradient(pp.copy(), p, -pp, -p)


def grad_g0(vtf: VertexTestFunction, X: JunctionPoint, Y: JunctionPoint, evaluation: VTFEvaluation | None = None) -> VTFGradient:
    """Envelope-theorem gradients ``(D_X G^0, D_Y G^0)`` on the C^1 region.

    The region is ``x != y`` or ``x = y = 0``; same-branch pairs with
    ``x = y > 0`` raise :class:`SingularPointError`.
    """
    if not X.on_interface and not Y.on_interface and X.branch == Y.branch and X.normal == Y.normal:
        raise SingularPointError("G^0 is not differentiable on {x = y > 0} within one branch")
    ev = evaluation or eval_g0(vtf, X, Y)
    return _gradient_from(vtf, X, Y, ev.p_prime, ev.lam)


def point_hamiltonian(vtf: VertexTestFunction, P: JunctionPoint, tangential: np.ndarray, normal) -> float:
    """``H(X, p)``: the branch Hamiltonian inside a branch, ``F_A`` on the interface."""
    if P.on_interface:
        return float(_flux_limited(vtf.limiter, vtf.hamiltonians, tangential, np.asarray(normal)))
    return float(vtf.hamiltonians[P.branch - 1]._eval(tangential, np.asarray(normal, dtype=float)))


def compatibility_residual(vtf: VertexTestFunction, X: JunctionPoint, Y: JunctionPoint, evaluation: VTFEvaluation | None = None) -> float:
    """``H(Y, -D_Y G^0) - H(X, D_X G^0)``; non-positive on the C^1 region."""
    g = grad_g0(vtf, X, Y, evaluation)
    hx = point_hamiltonian(vtf, X, g.x_tangential, g.x_normal)
    hy = point_hamiltonian(vtf, Y, -g.y_tangential, -np.asarray(g.y_normal))
    return hy - hx


def superlinearity_probe(
    vtf: VertexTestFunction,
    radii: Sequence[float],
    *,
    samples: int = 64,
    seed: int = 0,
) -> list[tuple[float, float]]:
    """Empirical lower envelope ``g(r) = min {G^0(X, Y) : d(X, Y) = r}`` over random pairs."""
    rng = np.random.default_rng(seed)
    N, d = vtf.branches, vtf.dim
    table = []
    for r in radii:
        Xs, Ys = [], []
        for _ in range(samples):
            Xs_, Ys_ = _random_pair_at_distance(rng, r, N, d)
            Xs.append(Xs_)
            Ys.append(Ys_)
        vals = eval_g0_values(vtf, Xs, Ys)
        table.append((float(r), float(np.min(vals))))
    return table


def _random_pair_at_distance(rng, r: float, N: int, d: int) -> tuple[JunctionPoint, JunctionPoint]:
    i, j = rng.integers(1, N + 1, 2)
    share = rng.uniform(0.0, 1.0) if d else 0.0
    t_len, n_len = r * share, r * (1.0 - share)
    direction = rng.normal(size=d)
    direction = direction / np.linalg.norm(direction) if d else direction
    xt = rng.uniform(-1.0, 1.0, d)
    yt = xt - t_len * direction
    if i != j:
        a = rng.uniform(0.0, 1.0)
        X = JunctionPoint(int(i), xt, a * n_len)
        Y = JunctionPoint(int(j), yt, (1.0 - a) * n_len)
    else:
        y = rng.uniform(0.0, 1.0)
        X = JunctionPoint(int(i), xt, y + n_len)
        Y = JunctionPoint(int(j), yt, y)
    assert abs(junction_distance(X, Y) - r) <= 1e-9 * max(1.0, r)
    return X, Y


def lower_bound_normalized(vtf: VertexTestFunction, *, samples: int = 2000, box: float = 5.0, seed: int = 0, tol: float = 1e-12) -> bool:
    """Sampled check of a sufficient condition for ``G^0 >= G^0(0, 0)``.

    The condition is that ``A`` is smallest at ``p' = 0`` and that every
    ``H_i(0, 0) <= A(0)``: then ``p' = 0``, ``lambda = A(0)`` with
    ``pi_i^- <= 0 <= pi_i^+`` is admissible for every pair and gives at least
    ``-A(0) = G^0(0, 0)``. Without it the bound can fail, e.g. ``N = 1``,
    ``H = (p + 1/2)^2 + 3/10`` and ``A = 1/2`` give ``G^0(x, 0) < G^0(0, 0)``
    for small ``x > 0``. A linear change of unknown usually restores it.
    """
    d = vtf.dim
    zero = np.zeros((1, d))
    floor0 = float(vtf.level_floor(zero)[0])
    pp = np.random.default_rng(seed).uniform(-box, box, (samples, d))
    if d and np.any(vtf.level_floor(pp) < floor0 - tol * max(1.0, abs(floor0))):
        return False
    return all(float(H._eval(zero, np.zeros(1))[0]) <= floor0 + tol * max(1.0, abs(floor0)) for H in vtf.hamiltonians)
