"""Junction geometry: points, the junction metric, grids and discrete fields.

A junction is ``N`` copies of the half-space ``{(x', x): x' in R^d, x >= 0}``
glued along the interface ``x = 0``. On the grid the interface layer is stored
once and shared by every branch.

Node ordering (used by every serializer): the interface layer comes first,
then branch 1 with normal index 1..M, branch 2, ... Within a layer the
tangential indices run in C (lexicographic) order.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class JunctionPoint:
    """A point ``(x', x)`` of branch ``branch`` (1-based); branch-agnostic on the interface."""

    branch: int
    tangential: tuple[float, ...] = ()
    normal: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "tangential", tuple(float(v) for v in np.ravel(self.tangential)))
        object.__setattr__(self, "normal", float(self.normal))
        if self.normal < 0:
            raise ValueError("normal coordinate must be >= 0")
        if self.branch < 1:
            raise ValueError("branch indices start at 1")

    @property
    def on_interface(self) -> bool:
        return self.normal == 0.0

    @property
    def dim(self) -> int:
        return len(self.tangential)

    def __eq__(self, other) -> bool:
        if not isinstance(other, JunctionPoint):
            return NotImplemented
        if self.tangential != other.tangential or self.normal != other.normal:
            return False
        return self.on_interface or self.branch == other.branch

    def __hash__(self) -> int:
        return hash((0 if self.on_interface else self.branch, self.tangential, self.normal))


def junction_distance(X: JunctionPoint, Y: JunctionPoint) -> float:
    """``|x' - y'| + d(x, y)``, where ``d`` goes through the interface across branches."""
    tang = math.dist(X.tangential, Y.tangential) if X.tangential else 0.0
    if X.branch == Y.branch or X.on_interface or Y.on_interface:
        return tang + abs(X.normal - Y.normal)
    return tang + (X.normal + Y.normal)


@dataclass(frozen=True)
class JunctionGrid:
    """Tensor grid on a truncated junction.

    Tangential axis ``l`` covers ``[tangential_lo[l], tangential_hi[l]]`` with
    spacing ``tangential_spacing[l]``; each branch covers ``[0, normal_length]``
    with spacing ``normal_spacing``.
    """

    branches: int
    normal_length: float
    normal_spacing: float
    tangential_lo: tuple[float, ...] = ()
    tangential_hi: tuple[float, ...] = ()
    tangential_spacing: tuple[float, ...] = ()
    normal_count: int = field(init=False)
    tangential_shape: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        if self.branches < 1:
            raise ValueError("a junction needs at least one branch")
        if not (len(self.tangential_lo) == len(self.tangential_hi) == len(self.tangential_spacing)):
            raise ValueError("tangential bounds and spacings must have the same length")
        if self.normal_length <= 0 or self.normal_spacing <= 0:
            raise ValueError("normal extent and spacing must be positive")
        object.__setattr__(self, "normal_count", _cell_count(self.normal_length, self.normal_spacing, "normal"))
        shape = []
        for lo, hi, h in zip(self.tangential_lo, self.tangential_hi, self.tangential_spacing):
            if h <= 0 or hi <= lo:
                raise ValueError("tangential extents and spacings must be positive")
            shape.append(_cell_count(hi - lo, h, "tangential") + 1)
        object.__setattr__(self, "tangential_shape", tuple(shape))

    @property
    def dim(self) -> int:
        return len(self.tangential_spacing)

    @property
    def layer_size(self) -> int:
        return int(np.prod(self.tangential_shape, dtype=int))

    @property
    def node_count(self) -> int:
        return self.layer_size * (1 + self.branches * self.normal_count)

    @property
    def full_shape(self) -> tuple[int, ...]:
        """Shape of the per-branch array with the interface layer replicated at index 0."""
        return (self.branches, self.normal_count + 1) + self.tangential_shape

    def tangential_axes(self) -> list[np.ndarray]:
        return [lo + h * np.arange(n) for lo, h, n in zip(self.tangential_lo, self.tangential_spacing, self.tangential_shape)]

    def normal_axis(self) -> np.ndarray:
        return self.normal_spacing * np.arange(self.normal_count + 1)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Tangential coordinates ``(*full_shape, d)`` and normal coordinates ``full_shape``."""
        axes = self.tangential_axes()
        if axes:
            mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        else:
            mesh = np.zeros((0,))
        tang = np.broadcast_to(mesh, self.full_shape + (self.dim,))
        normal = self.normal_axis().reshape((1, -1) + (1,) * self.dim)
        return tang, np.broadcast_to(normal, self.full_shape)

    def interface_index(self, tangential_index: Sequence[int] = ()) -> int:
        return int(np.ravel_multi_index(tuple(tangential_index), self.tangential_shape)) if self.dim else 0

    def node_index(self, branch: int, normal_index: int, tangential_index: Sequence[int] = ()) -> int:
        """Flat index of a node; ``normal_index = 0`` is the shared interface layer."""
        t = self.interface_index(tangential_index)
        if normal_index == 0:
            return t
        if not (1 <= branch <= self.branches and 1 <= normal_index <= self.normal_count):
            raise IndexError("node outside the grid")
        return self.layer_size * (1 + (branch - 1) * self.normal_count + (normal_index - 1)) + t

    def iter_nodes(self) -> Iterator[tuple[int, int, tuple[int, ...]]]:
        """Yield ``(branch, normal_index, tangential_index)`` in storage order (branch 0 = interface)."""
        tang = list(np.ndindex(*self.tangential_shape)) if self.dim else [()]
        for t in tang:
            yield 0, 0, tuple(int(v) for v in t)
        for i in range(1, self.branches + 1):
            for k in range(1, self.normal_count + 1):
                for t in tang:
                    yield i, k, tuple(int(v) for v in t)

    def to_dict(self) -> dict:
        return {
            "branches": self.branches,
            "normal_length": self.normal_length,
            "normal_spacing": self.normal_spacing,
            "tangential_lo": list(self.tangential_lo),
            "tangential_hi": list(self.tangential_hi),
            "tangential_spacing": list(self.tangential_spacing),
        }


def _cell_count(length: float, h: float, what: str) -> int:
    n = int(round(length / h))
    if n < 1 or abs(n * h - length) > 1e-9 * max(1.0, length):
        raise ValueError(f"{what} extent {length} is not a whole number of spacings {h}")
    return n


def build_grid(
    branches: int,
    normal_length: float,
    normal_spacing: float,
    tangential_lo: Sequence[float] = (),
    tangential_hi: Sequence[float] = (),
    tangential_spacing: Sequence[float] = (),
) -> JunctionGrid:
    return JunctionGrid(
        branches=int(branches),
        normal_length=float(normal_length),
        normal_spacing=float(normal_spacing),
        tangential_lo=tuple(float(v) for v in tangential_lo),
        tangential_hi=tuple(float(v) for v in tangential_hi),
        tangential_spacing=tuple(float(v) for v in tangential_spacing),
    )


class Field:
    """One value per grid node at time ``time``; ``values`` follows the grid's node order."""

    def __init__(self, grid: JunctionGrid, values, time: float = 0.0):
        values = np.array(values, dtype=float).reshape(-1)
        if values.size != grid.node_count:
            raise ValueError(f"expected {grid.node_count} values, got {values.size}")
        if time < 0:
            raise ValueError("time must be >= 0")
        self.grid = grid
        self.values = values
        self.time = float(time)

    @classmethod
    def from_full(cls, grid: JunctionGrid, full: np.ndarray, time: float = 0.0) -> "Field":
        """Build from a ``grid.full_shape`` array; the interface layer is taken from branch 1."""
        full = np.asarray(full, dtype=float)
        return cls(grid, np.concatenate([full[0, 0].ravel(), full[:, 1:].ravel()]), time)

    @classmethod
    def from_function(cls, grid: JunctionGrid, func: Callable, time: float = 0.0) -> "Field":
        """Sample ``func(branch, x_tangential, x_normal)`` (vectorized, 1-based branch array)."""
        tang, normal = grid.coordinates()
        branch = np.broadcast_to(np.arange(1, grid.branches + 1).reshape((-1,) + (1,) * (1 + grid.dim)), grid.full_shape)
        vals = np.broadcast_to(np.asarray(func(branch, tang, normal), dtype=float), grid.full_shape)
        return cls.from_full(grid, vals, time)

    def full(self) -> np.ndarray:
        g = self.grid
        iface = self.values[: g.layer_size].reshape(g.tangential_shape)
        rest = self.values[g.layer_size :].reshape((g.branches, g.normal_count) + g.tangential_shape)
        out = np.empty(g.full_shape)
        out[:, 0] = iface
        out[:, 1:] = rest
        return out

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy(), self.time)

    def __repr__(self) -> str:
        return f"Field(nodes={self.values.size}, time={self.time})"


def interface_gradient(f: Field, node: int) -> tuple[np.ndarray, np.ndarray]:
    """Discrete junction gradient ``(D'f, p_1, ..., p_N)`` at interface node ``node``.

    Tangential derivatives use central differences (one-sided at the edges of
    the tangential box); ``p_i`` is the forward difference into branch ``i``.
    """
    g = f.grid
    if not 0 <= node < g.layer_size:
        raise ValueError(f"node {node} is not an interface node")
    full = f.full()
    tidx = np.unravel_index(node, g.tangential_shape) if g.dim else ()
    u0 = full[(0, 0) + tuple(tidx)]
    slopes = np.array([(full[(i, 1) + tuple(tidx)] - u0) / g.normal_spacing for i in range(g.branches)])
    layer = full[0, 0]
    dprime = np.empty(g.dim)
    for ax in range(g.dim):
        n = g.tangential_shape[ax]
        h = g.tangential_spacing[ax]
        j = tidx[ax]
        lo, hi = max(j - 1, 0), min(j + 1, n - 1)
        ilo = list(tidx)
        ihi = list(tidx)
        ilo[ax], ihi[ax] = lo, hi
        dprime[ax] = (layer[tuple(ihi)] - layer[tuple(ilo)]) / (h * (hi - lo))
    return dprime, slopes


# -- serialization -------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(int(v))


def field_columns(grid: JunctionGrid) -> list[str]:
    d = grid.dim
    return (
        ["branch", "normal_index"]
        + [f"tangential_index_{k + 1}" for k in range(d)]
        + [f"x_tangential_{k + 1}" for k in range(d)]
        + ["x_normal", "value"]
    )


def field_records(f: Field) -> Iterator[list]:
    g = f.grid
    axes = g.tangential_axes()
    for n, (branch, k, t) in enumerate(g.iter_nodes()):
        coords = [float(axes[a][t[a]]) for a in range(g.dim)]
        yield [branch, k, *t, *coords, float(k * g.normal_spacing), float(f.values[n])]


def field_to_csv(f: Field) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(field_columns(f.grid))
    for rec in field_records(f):
        writer.writerow([_fmt(v) for v in rec])
    return buf.getvalue()


def field_to_json(f: Field) -> str:
    cols = field_columns(f.grid)
    nodes = [dict(zip(cols, rec)) for rec in field_records(f)]
    return json.dumps({"time": f.time, "grid": f.grid.to_dict(), "nodes": nodes}, indent=1) + "\n"


def field_from_csv(grid: JunctionGrid, text: str, time: float = 0.0) -> Field:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    if header != field_columns(grid):
        raise ValueError("CSV header does not match the grid")
    values = np.empty(grid.node_count)
    seen = np.zeros(grid.node_count, dtype=bool)
    d = grid.dim
    for row in body:
        branch, k = int(row[0]), int(row[1])
        t = [int(v) for v in row[2 : 2 + d]]
        n = grid.node_index(branch, k, t)
        values[n] = float(row[-1])
        seen[n] = True
    if not seen.all():
        raise ValueError("CSV does not cover every grid node")
    return Field(grid, values, time)
