import numpy as np
import pytest

from junction_hj.errors import SingularPointError
from junction_hj.hamiltonian import QuadraticHamiltonian, convex_conjugate, pi_pm
from junction_hj.junction_condition import FluxLimiter
from junction_hj.junction_core import JunctionPoint
from junction_hj.vertex_test_function import (
    VertexTestFunction,
    compatibility_residual,
    eval_g0,
    eval_g0_values,
    grad_g0,
    lower_bound_normalized,
    superlinearity_probe,
)

from _vtf_support import flatten, fd_gradients, normalized_germ, random_admissible_pairs


def scalar_germ(N=2, a=1.0):
    return VertexTestFunction([QuadraticHamiltonian() for _ in range(N)], FluxLimiter.constant(a))


def _flat_grad(g):
    return np.concatenate([flatten(g.x_tangential, g.x_normal), flatten(g.y_tangential, g.y_normal)])


# --- values -----------------------------------------------------------------


def test_two_branches_unit_distance_from_interface_is_zero():
    # sup over s = sqrt(lambda) >= 1 of s - s^2, checked against a 1-D scan
    vtf = scalar_germ()
    ev = eval_g0(vtf, JunctionPoint(1, (), 1.0), JunctionPoint(2, (), 0.0))
    s = np.linspace(1.0, 5.0, 400001)
    assert ev.value == pytest.approx(np.max(s - s**2), abs=1e-9)
    assert ev.value == pytest.approx(0.0, abs=1e-9)
    assert ev.lam == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("a", [0.25, 1.0, 2.0])
@pytest.mark.parametrize("x, y", [(5.0, 1.0), (0.5, 4.0), (6.0, 0.0)])
def test_same_branch_far_apart_is_quadratic_conjugate(a, x, y):
    # (max(p^2, a))^*(z) = z^2 / 4 once |z| >= 2 sqrt(a)
    vtf = scalar_germ(2, a)
    z = x - y
    assert abs(z) >= 2 * np.sqrt(a)
    assert eval_g0(vtf, JunctionPoint(2, (), x), JunctionPoint(2, (), y)).value == pytest.approx(z * z / 4, abs=1e-8)


def test_same_branch_matches_numerical_conjugate_of_capped_hamiltonian():
    H = QuadraticHamiltonian([0.3], 0.2, 0.1)
    A = FluxLimiter.quadratic(1, 2.0, 1.5)
    vtf = VertexTestFunction([H, QuadraticHamiltonian([0.0])], A)

    def capped(P):
        return np.maximum(H(P[..., :-1], P[..., -1]), A(P[..., :-1]))

    for X, Y in [
        (JunctionPoint(1, (0.4,), 1.2), JunctionPoint(1, (-0.3,), 0.5)),
        (JunctionPoint(1, (0.0,), 0.3), JunctionPoint(1, (0.1,), 0.9)),
        (JunctionPoint(1, (1.0,), 2.0), JunctionPoint(1, (1.0,), 0.1)),
    ]:
        Z = np.array([X.tangential[0] - Y.tangential[0], X.normal - Y.normal])
        g = eval_g0(vtf, X, Y).value
        # the numerical conjugate under-resolves the kink of the cap in two variables
        conj = float(convex_conjugate(capped, Z))
        assert conj - 1e-9 <= g <= conj + 1e-4


@pytest.mark.parametrize("x, y", [(1.2, 0.5), (0.3, 0.9), (2.0, 0.1), (0.05, 0.0)])
def test_same_branch_matches_conjugate_in_one_variable(x, y):
    H = QuadraticHamiltonian((), 0.2, 0.1)
    vtf = VertexTestFunction([H, QuadraticHamiltonian()], FluxLimiter.constant(0.6))

    def capped(P):
        return np.maximum(H(None, P[..., 0]), 0.6)

    g = eval_g0(vtf, JunctionPoint(1, (), x), JunctionPoint(1, (), y)).value
    assert g == pytest.approx(float(convex_conjugate(capped, np.array([x - y]))), abs=1e-8)


def test_diagonal_is_constant(rng):
    vtf = normalized_germ()
    origin = JunctionPoint(1, (0.0,), 0.0)
    g00 = eval_g0(vtf, origin, origin).value
    assert g00 == pytest.approx(-1.0, abs=1e-10)  # -A(0)
    pts = [JunctionPoint(int(rng.integers(1, 4)), (rng.uniform(-3, 3),), rng.uniform(0, 3)) for _ in range(40)]
    vals = eval_g0_values(vtf, pts, pts)
    assert np.max(np.abs(vals - g00)) <= 1e-8


def test_lower_bound_with_normalized_germ(rng):
    vtf = normalized_germ()
    assert lower_bound_normalized(vtf)
    g00 = eval_g0(vtf, JunctionPoint(1, (0.0,)), JunctionPoint(1, (0.0,))).value
    pairs = random_admissible_pairs(rng, 200)
    vals = eval_g0_values(vtf, [p[0] for p in pairs], [p[1] for p in pairs])
    assert np.min(vals) >= g00 - 1e-8


def test_lower_bound_can_fail_without_normalization():
    vtf = VertexTestFunction([QuadraticHamiltonian((), -0.5, 0.3)], FluxLimiter.constant(0.5))
    assert not lower_bound_normalized(vtf)
    g00 = eval_g0(vtf, JunctionPoint(1), JunctionPoint(1)).value
    x = 0.4
    g = eval_g0(vtf, JunctionPoint(1, (), x), JunctionPoint(1)).value
    assert g00 == pytest.approx(-0.5, abs=1e-10)
    assert g == pytest.approx(x * (np.sqrt(0.2) - 0.5) - 0.5, abs=1e-9)
    assert g < g00


def test_limiter_below_a0_rejected():
    with pytest.raises(ValueError, match="A >= A_0"):
        VertexTestFunction([QuadraticHamiltonian((), 0.0, 1.0)], FluxLimiter.constant(0.5))


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        VertexTestFunction([QuadraticHamiltonian([0.0])], FluxLimiter.constant(1.0, 0))
    vtf = normalized_germ()
    with pytest.raises(ValueError):
        eval_g0(vtf, JunctionPoint(1, (0.0, 1.0), 1.0), JunctionPoint(2, (0.0,), 1.0))
    with pytest.raises(ValueError):
        eval_g0(vtf, JunctionPoint(4, (0.0,), 1.0), JunctionPoint(2, (0.0,), 1.0))


# --- maximizer ----------------------------------------------------------------


def test_maximizer_lies_in_germ(rng):
    vtf = normalized_germ()
    for X, Y in random_admissible_pairs(rng, 40):
        ev = eval_g0(vtf, X, Y)
        i, j = ev.germ
        pp = ev.p_prime[None, :]
        Hi = float(vtf.hamiltonians[i - 1]._eval(pp, np.array([ev.P_hat[vtf.dim]]))[0])
        Hj = float(vtf.hamiltonians[j - 1]._eval(pp, np.array([ev.P_hat[-1]]))[0])
        assert Hi == pytest.approx(ev.lam, abs=1e-8)
        assert Hj == pytest.approx(ev.lam, abs=1e-8)
        assert ev.lam >= float(vtf.limiter(ev.p_prime)) - 1e-10
        assert ev.converged


def test_maximizer_is_continuous():
    vtf = normalized_germ()
    X, Y = JunctionPoint(1, (0.7,), 1.3), JunctionPoint(2, (-0.2,), 0.6)
    base = eval_g0(vtf, X, Y)
    for eps in (1e-3, 1e-4):
        moved = eval_g0(vtf, JunctionPoint(1, (0.7 + eps,), 1.3 + eps), Y)
        assert abs(moved.lam - base.lam) < 50 * eps
        assert np.max(np.abs(moved.p_prime - base.p_prime)) < 50 * eps


# --- gradients ------------------------------------------------------------------


def test_gradient_far_apart_is_half_difference():
    vtf = scalar_germ(1, 0.0)
    X, Y = JunctionPoint(1, (), 7.0), JunctionPoint(1, (), 1.0)
    g = grad_g0(vtf, X, Y)
    Z = np.array([6.0])
    assert np.allclose(flatten(g.x_tangential, g.x_normal), Z / 2, atol=1e-7)
    assert np.allclose(flatten(g.y_tangential, g.y_normal), -Z / 2, atol=1e-7)


def test_gradient_at_origin_uses_limiter_level():
    a = 1.5
    hs = [QuadraticHamiltonian((), b) for b in (0.0, 0.5, -0.5)]
    vtf = VertexTestFunction(hs, FluxLimiter.constant(a))
    O = JunctionPoint(1)
    ev = eval_g0(vtf, O, O)
    assert ev.lam == pytest.approx(a, abs=1e-8)
    g = grad_g0(vtf, O, O, ev)
    plus = np.array([float(pi_pm(H, None, a, "plus")) for H in hs])
    minus = np.array([float(pi_pm(H, None, a, "minus")) for H in hs])
    assert np.allclose(g.x_normal, plus, atol=1e-7)
    assert np.allclose(g.y_normal, -minus, atol=1e-7)
    fd = fd_gradients(vtf, [(O, O)])[0]
    assert np.allclose(fd[0][1], plus, atol=1e-4)
    assert np.allclose(fd[1][1], -minus, atol=1e-4)


def test_gradient_matches_finite_differences(rng):
    vtf = normalized_germ()
    pairs = random_admissible_pairs(rng, 30)
    for (X, Y), fd in zip(pairs, fd_gradients(vtf, pairs)):
        g = _flat_grad(grad_g0(vtf, X, Y))
        num = np.concatenate([flatten(*fd[0]), flatten(*fd[1])])
        assert np.max(np.abs(g - num)) <= 1e-4 * max(1.0, np.max(np.abs(g)))


def test_singular_set_refused():
    vtf = normalized_germ()
    with pytest.raises(SingularPointError):
        grad_g0(vtf, JunctionPoint(2, (0.0,), 1.0), JunctionPoint(2, (0.5,), 1.0))


# --- compatibility -------------------------------------------------------------


def test_residual_nonpositive_and_tight_across_branches(rng):
    vtf = normalized_germ()
    for X, Y in random_admissible_pairs(rng, 60):
        r = compatibility_residual(vtf, X, Y)
        assert r <= 1e-6
        if X.branch != Y.branch and not X.on_interface and not Y.on_interface:
            assert abs(r) <= 1e-6


def test_residual_at_origin_nonpositive():
    vtf = normalized_germ()
    O = JunctionPoint(1, (0.0,))
    assert compatibility_residual(vtf, O, O) <= 1e-6


def test_single_branch_residual_can_be_strict():
    vtf = VertexTestFunction([QuadraticHamiltonian()], FluxLimiter.constant(1.0))
    r = compatibility_residual(vtf, JunctionPoint(1, (), 5.0), JunctionPoint(1))
    assert r < -1e-3


# --- growth ---------------------------------------------------------------------


def test_growth_in_one_normal_dimension():
    table = superlinearity_probe(scalar_germ(3, 1.0), [10.0, 20.0, 40.0], samples=32)
    for r, g in table:
        assert g >= r**2 / 5
    assert table[0][1] < table[1][1] < table[2][1]


def test_growth_ratio_with_tangential_direction():
    table = superlinearity_probe(normalized_germ(), [8.0, 16.0, 32.0, 64.0], samples=48)
    for (r, g), (_, g2) in zip(table, table[1:]):
        assert g2 / g >= 1.8


def test_growth_at_zero_radius_is_diagonal_value():
    vtf = normalized_germ()
    (r, g), = superlinearity_probe(vtf, [0.0], samples=8)
    assert g == pytest.approx(-1.0, abs=1e-8)
