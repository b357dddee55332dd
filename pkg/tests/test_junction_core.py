import itertools
import math

import numpy as np
import pytest

from junction_hj.junction_core import (
    Field,
    JunctionPoint,
    build_grid,
    field_from_csv,
    field_to_csv,
    field_to_json,
    interface_gradient,
    junction_distance,
)


def test_distance_same_branch():
    assert junction_distance(JunctionPoint(1, (0.0,), 2.0), JunctionPoint(1, (0.0,), 5.0)) == 3.0


def test_distance_across_branches():
    assert junction_distance(JunctionPoint(1, (1.0,), 2.0), JunctionPoint(2, (4.0,), 5.0)) == 10.0


def test_distance_to_self_is_zero():
    X = JunctionPoint(3, (0.5, -1.0), 0.7)
    assert junction_distance(X, X) == 0.0


def test_interface_points_ignore_branch():
    a, b = JunctionPoint(1, (0.3,), 0.0), JunctionPoint(2, (0.3,), 0.0)
    assert a == b and hash(a) == hash(b)
    assert JunctionPoint(1, (0.3,), 0.1) != JunctionPoint(2, (0.3,), 0.1)


def test_negative_normal_rejected():
    with pytest.raises(ValueError):
        JunctionPoint(1, (), -0.1)


def _random_point(rng, N, d):
    x = 0.0 if rng.uniform() < 0.2 else rng.uniform(0, 3)
    return JunctionPoint(int(rng.integers(1, N + 1)), rng.uniform(-2, 2, d), x)


def test_metric_axioms_on_random_triples(rng):
    for _ in range(10_000):
        X, Y, Z = (_random_point(rng, 3, 2) for _ in range(3))
        dxy = junction_distance(X, Y)
        assert dxy >= 0
        assert dxy == junction_distance(Y, X)
        assert (dxy == 0) == (X == Y)
        assert dxy <= junction_distance(X, Z) + junction_distance(Z, Y) + 1e-12


@pytest.mark.parametrize(
    "N,d,kw,expected",
    [
        (2, 0, {}, 5),
        (1, 1, dict(tangential_lo=[0], tangential_hi=[1], tangential_spacing=[0.5]), 3 + 3 * 2),
        (3, 1, dict(tangential_lo=[0], tangential_hi=[1], tangential_spacing=[0.5]), 3 + 3 * 3 * 2),
    ],
)
def test_node_counts(N, d, kw, expected):
    g = build_grid(N, 1.0, 0.5, **kw)
    assert g.dim == d and g.node_count == expected


def test_grid_rejects_bad_spacing():
    with pytest.raises(ValueError):
        build_grid(2, 1.0, 0.0)
    with pytest.raises(ValueError):
        build_grid(2, -1.0, 0.5)
    with pytest.raises(ValueError):
        build_grid(2, 1.0, 0.5, [0.0], [1.0], [-0.1])


def test_node_order_branch_major():
    g = build_grid(2, 1.0, 0.5, [0.0], [1.0], [0.5])
    nodes = list(g.iter_nodes())
    assert nodes[:3] == [(0, 0, (0,)), (0, 0, (1,)), (0, 0, (2,))]
    assert nodes[3:6] == [(1, 1, (0,)), (1, 1, (1,)), (1, 1, (2,))]
    assert [g.node_index(b, k, t) if k else g.interface_index(t) for b, k, t in nodes] == list(range(g.node_count))


def test_interface_shared_once():
    g = build_grid(3, 1.0, 0.5)
    f = Field.from_function(g, lambda b, t, x: b * 10.0 + x)
    full = f.full()
    # the interface value is the one stored, whatever the branch label
    assert np.all(full[:, 0] == full[0, 0])
    assert f.values.size == 1 + 3 * 2


def test_interface_gradient_linear_field():
    g = build_grid(3, 1.0, 0.25)
    f = Field.from_function(g, lambda b, t, x: x)
    dp, p = interface_gradient(f, 0)
    assert dp.shape == (0,)
    np.testing.assert_allclose(p, [1.0, 1.0, 1.0], rtol=0, atol=1e-14)


def test_interface_gradient_constant_field():
    g = build_grid(2, 1.0, 0.25, [-1.0], [1.0], [0.5])
    f = Field.from_function(g, lambda b, t, x: np.full(x.shape, 3.0))
    dp, p = interface_gradient(f, 2)
    assert np.all(dp == 0) and np.all(p == 0)


def test_interface_gradient_per_branch_slopes():
    g = build_grid(2, 1.0, 0.25)
    f = Field.from_function(g, lambda b, t, x: b * x)
    _, p = interface_gradient(f, 0)
    np.testing.assert_allclose(p, [1.0, 2.0], atol=1e-14)


def test_interface_gradient_affine_per_branch():
    g = build_grid(3, 2.0, 0.5, [-1.0, 0.0], [1.0, 1.0], [0.5, 0.25])
    slopes = np.array([0.7, -1.3, 2.0])
    f = Field.from_function(g, lambda b, t, x: 1.0 + t @ np.array([0.4, -2.0]) + slopes[b - 1] * x)
    for node in range(g.layer_size):
        dp, p = interface_gradient(f, node)
        np.testing.assert_allclose(dp, [0.4, -2.0], atol=1e-12)
        np.testing.assert_allclose(p, slopes, atol=1e-12)


def test_interface_gradient_rejects_branch_node():
    g = build_grid(2, 1.0, 0.5)
    with pytest.raises(ValueError):
        interface_gradient(Field(g, np.zeros(g.node_count)), g.node_count - 1)


def test_csv_round_trip_and_header():
    g = build_grid(2, 1.0, 0.5, [0.0], [0.5], [0.5])
    f = Field(g, np.arange(g.node_count) / 3.0)
    text = field_to_csv(f)
    assert text.splitlines()[0] == "branch,normal_index,tangential_index_1,x_tangential_1,x_normal,value"
    assert "\r" not in text
    back = field_from_csv(g, text)
    assert np.array_equal(back.values, f.values)
    assert '"nodes"' in field_to_json(f)


def test_field_length_checked():
    with pytest.raises(ValueError):
        Field(build_grid(2, 1.0, 0.5), [0.0, 1.0])
