"""Uniform space and space-time grids with the 1-based index conventions.

Spatial nodes are addressed by ``(m, n)`` with ``1 <= m, n <= N`` and
time levels by ``j`` with ``1 <= j <= n_t``.  A space-time node is mapped to
the single index ``(m-1)*N*n_t + (n-1)*n_t + j``.  Arrays are stored 0-based
internally with shape ``(N, N, n_t)`` so that ``field.ravel()[i - 1]`` is the
value at linear index ``i``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "SpatialGrid2D",
    "TimeGrid",
    "SpaceTimeGrid",
    "linearize",
    "delinearize",
    "boundary_nodes",
    "BoundaryLayout",
]


@dataclass(frozen=True)
class SpatialGrid2D:
    """Square ``n x n`` grid over ``[x_min, x_max] x [y_min, y_max]``."""

    n: int
    x_min: float = -0.5
    x_max: float = 0.5
    y_min: float = -0.5
    y_max: float = 0.5

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"node count must be an integer >= 2, got {self.n}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        if not np.isclose(self.x_max - self.x_min, self.y_max - self.y_min, rtol=1e-12, atol=0.0):
            raise ValueError("grid must be square (equal x and y extent)")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @cached_property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)

    @cached_property
    def y(self) -> np.ndarray:
        return self.y_min + self.dx * np.arange(self.n)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays ``X[m, n]``, ``Y[m, n]`` (0-based, ``ij`` indexing)."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    def node(self, m: int, n: int) -> tuple[float, float]:
        if not (1 <= m <= self.n and 1 <= n <= self.n):
            raise IndexError(f"node ({m}, {n}) outside 1..{self.n}")
        return (self.x_min + (m - 1) * self.dx, self.y_min + (n - 1) * self.dx)

    def contains(self, other: "SpatialGrid2D") -> bool:
        tol = 1e-12 * max(1.0, abs(self.x_max - self.x_min))
        return (
            other.x_min >= self.x_min - tol
            and other.x_max <= self.x_max + tol
            and other.y_min >= self.y_min - tol
            and other.y_max <= self.y_max + tol
        )

    @cached_property
    def boundary(self) -> "BoundaryLayout":
        return BoundaryLayout.build(self)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time levels ``t_j = (j - 1) * dt``, ``j = 1..n_t``.

    ``convention="interval"`` uses ``dt = T / n_t`` (so the last level is
    ``T - dt``); ``convention="endpoint"`` uses ``dt = T / (n_t - 1)`` so the
    last level is exactly ``T``.
    """

    t_final: float
    n_t: int
    convention: str = "interval"

    def __post_init__(self):
        if int(self.n_t) != self.n_t or self.n_t < 2:
            raise ValueError(f"n_t must be an integer >= 2, got {self.n_t}")
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")
        if self.convention not in ("interval", "endpoint"):
            raise ValueError(f"unknown time convention {self.convention!r}")

    @property
    def dt(self) -> float:
        if self.convention == "endpoint":
            return self.t_final / (self.n_t - 1)
        return self.t_final / self.n_t

    @cached_property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(self.n_t)


@dataclass(frozen=True)
class SpaceTimeGrid:
    space: SpatialGrid2D
    time: TimeGrid

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def n_t(self) -> int:
        return self.time.n_t

    @property
    def size(self) -> int:
        return self.space.n ** 2 * self.time.n_t

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.space.n, self.space.n, self.time.n_t)

    def flat(self, m0, n0, j0):
        """0-based vectorised version of :func:`linearize` (returns ``i - 1``)."""
        return (np.asarray(m0) * self.space.n + np.asarray(n0)) * self.time.n_t + np.asarray(j0)


def linearize(m: int, n: int, j: int, grid: SpaceTimeGrid) -> int:
    """Map the 1-based node triple ``(m, n, j)`` to its 1-based linear index."""
    N, nt = grid.space.n, grid.time.n_t
    if not (1 <= m <= N and 1 <= n <= N and 1 <= j <= nt):
        raise IndexError(f"({m}, {n}, {j}) outside grid {N}x{N}x{nt}")
    return (m - 1) * N * nt + (n - 1) * nt + j


def delinearize(i: int, grid: SpaceTimeGrid) -> tuple[int, int, int]:
    N, nt = grid.space.n, grid.time.n_t
    if not (1 <= i <= N * N * nt):
        raise IndexError(f"linear index {i} outside 1..{N * N * nt}")
    q, j0 = divmod(i - 1, nt)
    m0, n0 = divmod(q, N)
    return (m0 + 1, n0 + 1, j0 + 1)


@dataclass(frozen=True)
class BoundaryLayout:
    """Boundary nodes in a fixed order, with the outward normal of each node.

    Order: left edge ``m = 1`` (``n = 1..N``), right edge ``m = N``
    (``n = 1..N``), bottom edge ``n = 1`` (``m = 2..N-1``), top edge ``n = N``
    (``m = 2..N-1``).  Corners belong to the left/right edges, so their normal
    is ``-x`` or ``+x``.
    """

    m0: np.ndarray
    n0: np.ndarray
    normal: np.ndarray  # (count, 2) outward unit normals
    inner_m0: np.ndarray  # neighbour one step inward along the normal
    inner_n0: np.ndarray

    @classmethod
    def build(cls, grid: SpatialGrid2D) -> "BoundaryLayout":
        N = grid.n
        full = np.arange(N)
        mid = np.arange(1, N - 1)
        m0 = np.concatenate([np.zeros(N, int), np.full(N, N - 1), mid, mid])
        n0 = np.concatenate([full, full, np.zeros(N - 2, int), np.full(N - 2, N - 1)])
        normal = np.concatenate(
            [
                np.tile([-1.0, 0.0], (N, 1)),
                np.tile([1.0, 0.0], (N, 1)),
                np.tile([0.0, -1.0], (N - 2, 1)),
                np.tile([0.0, 1.0], (N - 2, 1)),
            ]
        )
        step = -normal.astype(int)
        return cls(m0, n0, normal, m0 + step[:, 0], n0 + step[:, 1])

    def __len__(self) -> int:
        return len(self.m0)

    def nodes(self) -> list[tuple[int, int]]:
        return [(int(a) + 1, int(b) + 1) for a, b in zip(self.m0, self.n0)]

    def mask(self, n: int) -> np.ndarray:
        out = np.zeros((n, n), dtype=bool)
        out[self.m0, self.n0] = True
        return out


def boundary_nodes(grid: SpatialGrid2D) -> list[tuple[int, int]]:
    """1-based ``(m, n)`` boundary nodes in :class:`BoundaryLayout` order."""
    return grid.boundary.nodes()
