"""Shared fixtures for the vertex test function tests: a normalized germ and
batched finite-difference gradients of G^0."""

import numpy as np

from junction_hj.hamiltonian import QuadraticHamiltonian
from junction_hj.junction_condition import FluxLimiter
from junction_hj.junction_core import JunctionPoint
from junction_hj.vertex_test_function import VertexTestFunction, eval_g0_values

FD_H = 1e-5


def normalized_germ(d=1):
    """Three quadratic branches with A(p') = |p'|^2 + 1 >= A_0 and H_i(0, 0) <= A(0)."""
    zero = [0.0] * d
    hs = [
        QuadraticHamiltonian(zero),
        QuadraticHamiltonian(zero, 0.5),
        QuadraticHamiltonian(zero, -0.5, 0.3),
    ]
    return VertexTestFunction(hs, FluxLimiter.quadratic(d, 1.0, 1.0))


def random_admissible_pairs(rng, n, N=3, d=1, box=2.0, interface_share=0.2, gap=5e-3):
    """Pairs with x != y (by at least ``gap``) or x = y = 0."""
    out = []
    while len(out) < n:
        i, j = (int(v) for v in rng.integers(1, N + 1, 2))
        x = 0.0 if rng.uniform() < interface_share else rng.uniform(0.0, box)
        y = 0.0 if rng.uniform() < interface_share else rng.uniform(0.0, box)
        if i == j and x > 0 and y > 0 and abs(x - y) < gap:
            continue
        if x == 0 or y == 0:
            if (x == 0) != (y == 0) and abs(x - y) < 3 * FD_H:
                continue
        out.append((JunctionPoint(i, rng.uniform(-box, box, d), x), JunctionPoint(j, rng.uniform(-box, box, d), y)))
    return out


def fd_gradients(vtf, pairs, h=FD_H):
    """Finite-difference (D_X G, D_Y G) laid out like VTFGradient, for many pairs at once."""
    d, N = vtf.dim, vtf.branches
    Xs, Ys, spec = [], [], []

    def add(X, Y):
        Xs.append(X)
        Ys.append(Y)
        return len(Xs) - 1

    def shifted(P, axis, t):
        if axis < d:
            tang = np.array(P.tangential)
            tang[axis] += t
            return JunctionPoint(P.branch, tang, P.normal)
        raise AssertionError

    def into(P, branch, t):
        return JunctionPoint(branch, P.tangential, t)

    for X, Y in pairs:
        entry = {}
        for who, P in (("x", X), ("y", Y)):
            def put(Q):
                return add(Q, Y) if who == "x" else add(X, Q)

            tang = []
            for a in range(d):
                tang.append((put(shifted(P, a, h)), put(shifted(P, a, -h))))
            if P.on_interface:
                normal = [(put(P), put(into(P, k, h)), put(into(P, k, 2 * h))) for k in range(1, N + 1)]
            else:
                normal = (put(JunctionPoint(P.branch, P.tangential, P.normal + h)), put(JunctionPoint(P.branch, P.tangential, P.normal - h)))
            entry[who] = (tang, normal, P.on_interface)
        spec.append(entry)

    vals = eval_g0_values(vtf, Xs, Ys)
    out = []
    for entry in spec:
        res = []
        for who in ("x", "y"):
            tang, normal, iface = entry[who]
            t = np.array([(vals[a] - vals[b]) / (2 * h) for a, b in tang])
            if iface:
                n = np.array([(-3 * vals[a] + 4 * vals[b] - vals[c]) / (2 * h) for a, b, c in normal])
            else:
                n = (vals[normal[0]] - vals[normal[1]]) / (2 * h)
            res.append((t, n))
        out.append(res)
    return out


def flatten(t, n):
    return np.concatenate([np.ravel(t), np.ravel(n)])
