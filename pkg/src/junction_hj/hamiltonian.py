"""Branch Hamiltonians and the scalar quantities derived from them.

A Hamiltonian is evaluated as ``H(p_prime, p)`` where ``p_prime`` has shape
``(..., d)`` (tangential momentum) and ``p`` has shape ``(...)`` (normal
momentum). Everything broadcasts, so the solver can evaluate whole grids in a
single call.

Derived quantities, all functions of the tangential momentum ``p'``:

* ``pi0(p')``      smallest minimizer of ``p -> H(p', p)``
* ``A_i(p')``      the branch minimum ``H(p', pi0(p'))``
* ``H^-`` / ``H^+`` the non-increasing / non-decreasing envelopes
* ``pi^-`` / ``pi^+`` inverses of ``H(p', .)`` on each monotone side

Built-in families override the numerical defaults with closed forms.
"""

from __future__ import annotations

from typing import Callable, Literal, Sequence

import numpy as np

from . import _optimize
from .errors import BracketError, LevelBelowMinimum

Side = Literal["minus", "plus"]

CONVEX_SMOOTH = "convex-smooth"
QUASI_CONVEX = "quasi-convex"

ARG_TOL = 1e-12
LEVEL_TOL = 1e-10
BRACKET_CAP = 2.0**60
FLAT_STEP = 1e-6


def as_pprime(p_prime, dim: int) -> np.ndarray:
    """Coerce ``p_prime`` to an array whose last axis has length ``dim``."""
    if p_prime is None:
        if dim != 0:
            raise ValueError(f"tangential momentum of dimension {dim} required")
        return np.zeros((0,))
    arr = np.asarray(p_prime, dtype=float)
    if dim == 0:
        if arr.ndim >= 1 and arr.shape[-1] == 0:
            return arr
        return np.zeros(arr.shape + (0,))
    if arr.ndim == 0:
        arr = arr[None]
    if arr.shape[-1] != dim:
        raise ValueError(f"expected tangential momentum with last axis {dim}, got shape {arr.shape}")
    return arr


def _out(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def _check_side(side: str) -> int:
    if side == "plus":
        return 1
    if side == "minus":
        return -1
    raise ValueError(f"side must be 'minus' or 'plus', got {side!r}")


class Hamiltonian:
    """A continuous, coercive, quasi-convex Hamiltonian on ``R^(d+1)``.

    Wraps a vectorized evaluator ``func(p_prime, p)``. Subclasses provide
    closed forms for the derived quantities; the base class computes them
    with bracketing and bisection, which only requires evaluations.
    """

    def __init__(
        self,
        func: Callable[[np.ndarray, np.ndarray], np.ndarray],
        dim: int,
        convexity: str = QUASI_CONVEX,
        name: str = "custom",
    ):
        if dim < 0:
            raise ValueError("dimension must be >= 0")
        if convexity not in (CONVEX_SMOOTH, QUASI_CONVEX):
            raise ValueError(f"unknown convexity class {convexity!r}")
        self._func = func
        self.dim = dim
        self.convexity = convexity
        self.name = name

    def __call__(self, p_prime, p):
        pp = as_pprime(p_prime, self.dim)
        return _out(self._eval(pp, np.asarray(p, dtype=float)))

    def _eval(self, pp: np.ndarray, p: np.ndarray) -> np.ndarray:
        return np.asarray(self._func(pp, p), dtype=float)

    def full(self, P) -> np.ndarray:
        """Evaluate on stacked momenta ``P = (p', p)`` of shape ``(..., d+1)``."""
        P = np.asarray(P, dtype=float)
        return _out(self._eval(P[..., : self.dim], P[..., self.dim]))

    # -- derived quantities; overridden by closed-form families --------------
    def _pi0(self, pp: np.ndarray) -> np.ndarray:
        return numeric_pi0(self, pp)

    def _pi_pm(self, pp: np.ndarray, lam: np.ndarray, sign: int) -> np.ndarray:
        return numeric_pi_pm(self, pp, lam, sign)

    def _branch_min(self, pp: np.ndarray) -> np.ndarray:
        return self._eval(pp, self._pi0(pp))

    def conjugate(self, Z) -> np.ndarray | None:
        """Closed-form Legendre-Fenchel transform, or ``None`` if unavailable."""
        return None

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r}, dim={self.dim})"


class QuadraticHamiltonian(Hamiltonian):
    """``H(p', p) = |p' - b'|^2 + (p - b)^2 + c``."""

    def __init__(self, b_prime: Sequence[float] = (), b: float = 0.0, c: float = 0.0):
        self.b_prime = np.asarray(b_prime, dtype=float).reshape(-1)
        self.b = float(b)
        self.c = float(c)
        super().__init__(self._quad, self.b_prime.size, CONVEX_SMOOTH, "quadratic")

    def _quad(self, pp, p):
        return np.sum((pp - self.b_prime) ** 2, axis=-1) + (p - self.b) ** 2 + self.c

    def _pi0(self, pp):
        return np.full(pp.shape[:-1], self.b)

    def _branch_min(self, pp):
        return np.sum((pp - self.b_prime) ** 2, axis=-1) + self.c

    def _pi_pm(self, pp, lam, sign):
        gap = _level_gap(lam, self._branch_min(pp))
        return self.b + sign * np.sqrt(gap)

    def conjugate(self, Z):
        Z = np.asarray(Z, dtype=float)
        shift = np.append(self.b_prime, self.b)
        return _out(Z @ shift + np.sum(Z**2, axis=-1) / 4.0 - self.c)


class AnisotropicHamiltonian(Hamiltonian):
    """``H(p', p) = alpha |p'|^2 + beta p^2 + gamma . (p', p)`` with ``alpha, beta > 0``."""

    def __init__(self, alpha: float, beta: float, gamma: Sequence[float]):
        if alpha <= 0 or beta <= 0:
            raise ValueError("alpha and beta must be positive")
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.gamma = np.asarray(gamma, dtype=float).reshape(-1)
        if self.gamma.size < 1:
            raise ValueError("gamma needs d+1 components")
        super().__init__(self._aniso, self.gamma.size - 1, CONVEX_SMOOTH, "anisotropic")

    def _aniso(self, pp, p):
        g = self.gamma
        return (
            self.alpha * np.sum(pp**2, axis=-1)
            + pp @ g[:-1]
            + self.beta * p**2
            + g[-1] * p
        )

    def _pi0(self, pp):
        return np.full(pp.shape[:-1], -self.gamma[-1] / (2.0 * self.beta))

    def _branch_min(self, pp):
        g = self.gamma
        return self.alpha * np.sum(pp**2, axis=-1) + pp @ g[:-1] - g[-1] ** 2 / (4.0 * self.beta)

    def _pi_pm(self, pp, lam, sign):
        gap = _level_gap(lam, self._branch_min(pp))
        return self._pi0(pp) + sign * np.sqrt(gap / self.beta)

    def conjugate(self, Z):
        Z = np.asarray(Z, dtype=float)
        g = self.gamma
        zt = Z[..., :-1] - g[:-1]
        zn = Z[..., -1] - g[-1]
        return _out(np.sum(zt**2, axis=-1) / (4.0 * self.alpha) + zn**2 / (4.0 * self.beta))


PHI_FUNCTIONS: dict[str, tuple[Callable, Callable]] = {
    "exp": (np.exp, np.log),
    "cube": (lambda s: s**3, np.cbrt),
    "sinh": (np.sinh, np.arcsinh),
    "identity": (lambda s: s, lambda s: s),
}


class ComposedHamiltonian(Hamiltonian):
    """``H = phi(core)`` with ``phi`` strictly increasing.

    Sublevel sets are those of the core, so quasi-convexity is preserved. With
    ``phi`` convex and increasing this is also the mechanism for turning a
    quasi-convex Hamiltonian into a convex one by hand.
    """

    def __init__(
        self,
        core: Hamiltonian,
        phi: Callable[[np.ndarray], np.ndarray] | str,
        phi_inverse: Callable[[np.ndarray], np.ndarray] | None = None,
        convexity: str = QUASI_CONVEX,
    ):
        if isinstance(phi, str):
            if phi not in PHI_FUNCTIONS:
                raise ValueError(f"unknown phi {phi!r}; choose from {sorted(PHI_FUNCTIONS)}")
            self.phi_name = phi
            phi, phi_inverse = PHI_FUNCTIONS[phi]
        else:
            self.phi_name = getattr(phi, "__name__", "custom")
        self.core = core
        self.phi = phi
        self.phi_inverse = phi_inverse
        super().__init__(lambda pp, p: phi(core._eval(pp, p)), core.dim, convexity, f"phi∘{core.name}")

    def _pi0(self, pp):
        return self.core._pi0(pp)

    def _branch_min(self, pp):
        return self.phi(self.core._branch_min(pp))

    def _pi_pm(self, pp, lam, sign):
        if self.phi_inverse is None:
            return numeric_pi_pm(self, pp, lam, sign)
        amin = self._branch_min(pp)
        _level_gap(lam, amin)
        core_level = np.maximum(self.phi_inverse(np.maximum(lam, amin)), self.core._branch_min(pp))
        return self.core._pi_pm(pp, core_level, sign)


class MirroredHamiltonian(Hamiltonian):
    """``H(p', p) = inner(p', -p)``; swaps the roles of ``pi^-`` and ``pi^+``."""

    def __init__(self, inner: Hamiltonian):
        self.inner = inner
        super().__init__(lambda pp, p: inner._eval(pp, -p), inner.dim, inner.convexity, f"mirror({inner.name})")

    def _pi0(self, pp):
        # the mirror's smallest minimizer is minus the inner's largest one;
        # the two coincide only for strictly convex slices
        if self.inner.convexity == CONVEX_SMOOTH:
            return -self.inner._pi0(pp)
        return numeric_pi0(self, pp)

    def _branch_min(self, pp):
        return self.inner._branch_min(pp)

    def _pi_pm(self, pp, lam, sign):
        return -self.inner._pi_pm(pp, lam, -sign)

    def conjugate(self, Z):
        inner = self.inner.conjugate(np.asarray(Z, dtype=float) * np.append(np.ones(self.dim), -1.0))
        return inner


def _level_gap(lam, amin) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    gap = lam - amin
    tol = LEVEL_TOL * np.maximum(1.0, np.abs(amin))
    if np.any(gap < -tol):
        raise LevelBelowMinimum("level lambda lies below the branch minimum A_i(p')")
    return np.maximum(gap, 0.0)


# -- numerical routines (used by custom Hamiltonians, and as test oracles) ----

def numeric_pi0(H: Hamiltonian, p_prime, *, step: float = FLAT_STEP) -> np.ndarray:
    """Smallest minimizer of ``p -> H(p', p)`` by bisection on a difference sign.

    The search locates the leftmost point where the centred difference
    ``H(p + step/2) - H(p - step/2)`` stops being negative. On a flat bottom
    this lands within ``step/2`` of the left end of the argmin set.
    """
    pp = as_pprime(p_prime, H.dim)
    shape = pp.shape[:-1]

    def rising(p):
        # scale the step with |p| so that the difference never rounds to zero
        h = 0.5 * step * np.maximum(1.0, np.abs(p))
        return H._eval(pp, p + h) - H._eval(pp, p - h) >= 0.0

    lo = np.full(shape, -1.0)
    hi = np.full(shape, 1.0)
    width = 1.0
    while True:
        bad_lo = rising(lo)
        bad_hi = ~rising(hi)
        if not (bad_lo.any() or bad_hi.any()):
            break
        width *= 2.0
        if width > BRACKET_CAP:
            raise BracketError("no minimizer found within the bracket cap; H may not be coercive")
        lo = np.where(bad_lo, -width, lo)
        hi = np.where(bad_hi, width, hi)
    for _ in range(400):
        if np.all(hi - lo <= ARG_TOL * np.maximum(1.0, np.abs(hi))):
            break
        mid = 0.5 * (lo + hi)
        up = rising(mid)
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    return hi


def numeric_pi_pm(H: Hamiltonian, p_prime, lam, sign: int) -> np.ndarray:
    """Solve ``H(p', p) = lam`` on the monotone side ``sign`` of ``pi0``.

    Returns the point closest to ``pi0`` where the level is reached, found by
    geometric bracket expansion and bisection.
    """
    pp = as_pprime(p_prime, H.dim)
    p0 = H._pi0(pp)
    amin = H._eval(pp, p0)
    lam = np.asarray(lam, dtype=float)
    _level_gap(lam, amin)
    shape = np.broadcast_shapes(np.shape(p0), lam.shape)
    p0 = np.broadcast_to(p0, shape)
    lam = np.broadcast_to(lam, shape)
    inner = p0.copy()
    width = np.ones(shape)
    outer = p0 + sign * width
    while True:
        low = H._eval(pp, outer) < lam
        if not low.any():
            break
        inner = np.where(low, outer, inner)
        width = np.where(low, 2.0 * width, width)
        if np.any(width > BRACKET_CAP):
            raise BracketError("level not reached within the bracket cap; H may not be coercive")
        outer = np.where(low, p0 + sign * width, outer)
    for _ in range(400):
        if np.all(np.abs(outer - inner) <= ARG_TOL * np.maximum(1.0, np.abs(outer))):
            break
        mid = 0.5 * (inner + outer)
        low = H._eval(pp, mid) < lam
        inner = np.where(low, mid, inner)
        outer = np.where(low, outer, mid)
    return outer


# -- public operations ----------------------------------------------------------

def pi0(H: Hamiltonian, p_prime=None):
    """Smallest minimizer of ``p -> H(p', p)``."""
    return _out(H._pi0(as_pprime(p_prime, H.dim)))


def branch_min(H: Hamiltonian, p_prime=None):
    """``A_i(p') = min_p H(p', p)``."""
    return _out(H._branch_min(as_pprime(p_prime, H.dim)))


def envelope(H: Hamiltonian, p_prime, p, side: Side):
    """Monotone envelope ``H^-`` (``side="minus"``) or ``H^+`` (``side="plus"``).

    ``H^-`` keeps the decreasing branch left of ``pi0`` and is flat at the
    minimum to the right of it; ``H^+`` is the mirror image.
    """
    sign = _check_side(side)
    pp = as_pprime(p_prime, H.dim)
    p = np.asarray(p, dtype=float)
    p0 = H._pi0(pp)
    clipped = np.minimum(p, p0) if sign < 0 else np.maximum(p, p0)
    return _out(H._eval(pp, clipped))


def pi_pm(H: Hamiltonian, p_prime, lam, side: Side):
    """Partial inverse ``pi^-`` / ``pi^+``: ``H(p', pi) = lam`` on the chosen side of ``pi0``."""
    sign = _check_side(side)
    return _out(H._pi_pm(as_pprime(p_prime, H.dim), np.asarray(lam, dtype=float), sign))


def convex_conjugate(f: Callable[[np.ndarray], np.ndarray], Z, *, tol: float = 1e-10):
    """Legendre-Fenchel transform ``sup_P (P.Z - f(P))`` of a convex superlinear ``f``.

    ``f`` takes stacked momenta of shape ``(..., n)``. ``Z`` may be a single
    point ``(n,)`` or a batch ``(B, n)``. The concave objective is maximized
    by a shrinking grid seeded on a box of radius ``8 (1 + |Z|)``, followed by
    coordinate-wise golden-section refinement.

    For ``n >= 2`` and a non-smooth ``f`` whose maximizer sits on a curved
    kink (``max(|P|^2, a)`` with ``|Z| < 2 sqrt(a)``) the search can stall
    short of the maximum by ~1e-3; smooth ``f`` are resolved to ~1e-10.
    """
    value, _ = conjugate_with_argmax(f, Z, tol=tol)
    return value


def conjugate_with_argmax(f, Z, *, tol: float = 1e-10):
    """Like :func:`convex_conjugate` but also returns the maximizing ``P``."""
    Z = np.asarray(Z, dtype=float)
    single = Z.ndim == 1
    Zb = np.atleast_2d(Z)

    def objective(P, rows):
        return np.einsum("bkn,bn->bk", P, Zb[rows]) - np.asarray(f(P), dtype=float)

    radius = 8.0 * (1.0 + np.linalg.norm(Zb, axis=1, keepdims=True))
    x, v, _ = _optimize.maximize(objective, np.zeros_like(Zb), radius * np.ones_like(Zb), tol=tol)
    if single:
        return float(v[0]), x[0]
    return v, x
