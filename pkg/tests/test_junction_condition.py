import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from junction_hj.errors import BracketError
from junction_hj.hamiltonian import AnisotropicHamiltonian, QuadraticHamiltonian, envelope
from junction_hj.junction_condition import (
    CachedLimiter,
    FluxLimiter,
    GeneralJunctionFunction,
    a0,
    check_quasiconvex,
    flux_limited_value,
    reduce_to_limiter,
    reduced_limiter,
    validate,
)


def scalar_bisect(g, lo, hi, iters=200):
    """Root of a decreasing scalar function on [lo, hi]."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_a0_examples():
    assert a0([QuadraticHamiltonian(), QuadraticHamiltonian(c=1.0)]) == 1.0
    H = QuadraticHamiltonian([0.5], 0.2)
    assert a0([H, H, H], [1.5]) == 1.0
    hs = [QuadraticHamiltonian([0.0], float(i)) for i in (1, 2, 3)]
    assert a0(hs, [2.0]) == 4.0


def test_flux_limited_examples():
    hs = [QuadraticHamiltonian([0.0])] * 2
    assert flux_limited_value(FluxLimiter.constant(0.5, 1), hs, [0.0], [-1.0, 2.0]) == 1.0
    assert flux_limited_value(FluxLimiter.constant(0.0), [QuadraticHamiltonian()], None, [-3.0]) == 9.0


def test_flux_limited_equals_limiter_above_minimizers(rng):
    hs = [QuadraticHamiltonian([0.2], 0.5), AnisotropicHamiltonian(1.0, 2.0, [0.1, -0.3])]
    A = FluxLimiter.quadratic(1, 1.5, 0.4)
    pp = rng.uniform(-2, 2, (200, 1))
    assert np.all(A(pp) >= a0(hs, pp))
    p = np.stack([0.5 + rng.exponential(1.0, 200), 0.075 + rng.exponential(1.0, 200)], -1)
    np.testing.assert_array_equal(flux_limited_value(A, hs, pp, p), A(pp))


def test_flux_limited_matches_envelopes(rng):
    hs = [QuadraticHamiltonian([0.0], -0.5), QuadraticHamiltonian([0.0], 0.7, 0.2)]
    A = FluxLimiter.constant(0.3, 1)
    pp = rng.uniform(-2, 2, (100, 1))
    p = rng.uniform(-3, 3, (100, 2))
    expected = np.maximum(0.3, np.maximum(envelope(hs[0], pp, p[:, 0], "minus"), envelope(hs[1], pp, p[:, 1], "minus")))
    np.testing.assert_array_equal(flux_limited_value(A, hs, pp, p), expected)


def test_validate_linear_decreasing_passes():
    F = GeneralJunctionFunction(lambda pp, p: -p.sum(-1), 3, 0, quasi_convex=True)
    assert validate(F, 2000).passed


def test_validate_flags_increasing_coordinate():
    F = GeneralJunctionFunction(lambda pp, p: p[..., 0], 2, 0)
    rep = validate(F, 2000)
    assert not rep.passed
    assert {v["coordinate"] for v in rep.monotonicity_violations} == {1}


def test_validate_flux_limited_passes_both():
    hs = [QuadraticHamiltonian([0.0]), AnisotropicHamiltonian(1.0, 1.0, [0.0, 0.5])]
    F = GeneralJunctionFunction.flux_limited(FluxLimiter.quadratic(1, 2.0, 0.5), hs)
    rep = validate(F, 5000)
    assert rep.checked_quasiconvexity and rep.passed


def test_validate_flags_non_quasiconvex():
    F = GeneralJunctionFunction(lambda pp, p: -np.sum(p**3, -1) - np.cos(3 * pp[..., 0]), 1, 1, quasi_convex=True)
    assert validate(F, 5000).quasiconvexity_violations


def test_reduce_linear_example_vs_scalar_oracle():
    hs = [QuadraticHamiltonian(), QuadraticHamiltonian()]
    F = GeneralJunctionFunction.linear(2.0, [1.0, 1.0])
    # pi^+(l) = sqrt(l) on both branches
    oracle = scalar_bisect(lambda lam: 2.0 - 2.0 * math.sqrt(lam) - lam, 0.0, 4.0)
    assert abs(oracle - (math.sqrt(3) - 1) ** 2) < 1e-12
    assert abs(reduce_to_limiter(F, hs) - oracle) < 1e-9


def test_reduce_returns_a0_when_f_is_low():
    hs = [QuadraticHamiltonian(c=1.0), QuadraticHamiltonian()]
    F = GeneralJunctionFunction.linear(-5.0, [1.0, 1.0])
    assert reduce_to_limiter(F, hs) == 1.0


def test_reduce_idempotent_on_flux_limited(rng):
    hs = [QuadraticHamiltonian([0.3], -0.2), AnisotropicHamiltonian(0.5, 2.0, [0.4, 1.0]), QuadraticHamiltonian([-0.5], 0.4, 0.3)]
    for _ in range(50):
        A = FluxLimiter.quadratic(1, rng.uniform(0.0, 2.0), rng.uniform(-1.0, 2.0), [rng.uniform(-1, 1)])
        pp = rng.uniform(-2, 2, (20, 1))
        F = GeneralJunctionFunction.flux_limited(A, hs)
        np.testing.assert_allclose(reduce_to_limiter(F, hs, pp), np.maximum(A(pp), a0(hs, pp)), atol=1e-8)


def test_reduce_not_below_a0(rng):
    hs = [QuadraticHamiltonian([0.0], 0.5), QuadraticHamiltonian([1.0], -0.5, 0.2)]
    F = GeneralJunctionFunction(lambda pp, p: 1.0 + pp[..., 0] - p.sum(-1) * 0.5, 2, 1)
    pp = rng.uniform(-3, 3, (500, 1))
    assert np.all(reduce_to_limiter(F, hs, pp) >= a0(hs, pp) - 1e-12)


def test_reduce_non_monotone_raises():
    hs = [QuadraticHamiltonian()]
    F = GeneralJunctionFunction(lambda pp, p: 10.0 + 2.0 * p[..., 0] ** 2, 1, 0)
    with pytest.raises(BracketError):
        reduce_to_limiter(F, hs)


def test_reduced_limiter_quasiconvex_for_quasiconvex_f():
    hs = [QuadraticHamiltonian([0.0], 0.5), AnisotropicHamiltonian(1.0, 0.5, [0.3, -0.2])]
    F = GeneralJunctionFunction(lambda pp, p: 1.0 + np.sum(pp**2, -1) - p @ np.array([1.0, 2.0]), 2, 1, quasi_convex=True)
    AF = reduced_limiter(F, hs)
    assert check_quasiconvex(lambda P: AF(P), 1, 1000).passed


def test_cached_limiter_matches_and_is_thread_safe(rng):
    calls = []
    inner = FluxLimiter(lambda pp: (calls.append(len(pp)), np.sum(pp**2, -1))[1], 2)
    cached = CachedLimiter(inner, quantum=1e-6)
    pts = np.round(rng.uniform(-1, 1, (200, 2)), 6)
    with ThreadPoolExecutor(8) as pool:
        results = list(pool.map(lambda k: cached(pts), range(16)))
    for r in results:
        np.testing.assert_allclose(r, np.sum(pts**2, -1), atol=1e-12)
    before = sum(calls)
    cached(pts)
    assert sum(calls) == before


def test_check_quasiconvex_detects_violation():
    assert not check_quasiconvex(lambda P: np.sin(3 * P[:, 0]), 1, 500).passed
    assert check_quasiconvex(lambda P: np.abs(P).max(-1), 3, 500).passed
