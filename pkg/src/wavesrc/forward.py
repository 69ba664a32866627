"""Synthetic measurements: leapfrog solve of ``u_tt = lap u + p h`` and boundary traces.

The wave is computed on a large square ``(-R, R)^2`` whose edge is held at
zero; with unit speed and the source supported near the origin the wave does
not reach that edge before ``T``.  Dirichlet (``F = u``) and Neumann
(``G = d_nu u``) traces are then sampled on the boundary of the smaller
inversion grid.
"""
from __future__ import annotations

import io
import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .excitation import Excitation
from .grid import SpaceTimeGrid, SpatialGrid2D, TimeGrid

log = logging.getLogger(__name__)

CFL_WARN = 0.95
RNG_ALGORITHM = "PCG64 via numpy SeedSequence(seed).spawn(2): child 0 -> F, child 1 -> G"


@dataclass
class WaveField:
    """Samples of a field on ``grid``; ``values`` has shape ``(N, N, n_t)`` (or ``(N, N)``)."""

    values: np.ndarray
    grid: SpaceTimeGrid | SpatialGrid2D


def cfl_ratio(grid: SpaceTimeGrid, speed: float = 1.0, substeps: int = 1) -> float:
    return grid.time.dt / substeps * speed * np.sqrt(2.0) / grid.space.dx


def check_cfl(grid: SpaceTimeGrid, speed: float = 1.0, substeps: int = 1) -> float:
    ratio = cfl_ratio(grid, speed, substeps)
    dt = grid.time.dt / substeps
    if ratio > 1.0:
        raise ConfigError(
            f"CFL violated: dt={dt:.6g} > dx/sqrt(2)={grid.space.dx / np.sqrt(2):.6g} "
            f"(dx={grid.space.dx:.6g}, ratio {ratio:.4f})"
        )
    if ratio > CFL_WARN:
        warnings.warn(f"CFL ratio {ratio:.3f} is close to the stability limit", RuntimeWarning, stacklevel=3)
    return ratio


def _laplacian(u, dx, out):
    out[1:-1, 1:-1] = (u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2] - 4.0 * u[1:-1, 1:-1]) / dx**2
    return out


def leapfrog_step(prev, cur, dx: float, dt: float, forcing=0.0, lap=None):
    """``2 cur - prev + dt^2 (lap cur + forcing)`` with the edge pinned to zero."""
    lap = _laplacian(cur, dx, np.zeros_like(cur) if lap is None else lap)
    nxt = 2.0 * cur - prev + dt**2 * (lap + forcing)
    nxt[[0, -1], :] = 0.0
    nxt[:, [0, -1]] = 0.0
    return nxt


def forward_solve(p, h: Excitation, grid: SpaceTimeGrid, start: str = "taylor", substeps: int = 1) -> WaveField:
    """Explicit leapfrog solve on ``grid`` with zero initial data and zero edge values.

    ``p`` is any callable ``p(x, y)`` (e.g. a :class:`~wavesrc.sources.SourceSpec`)
    or an ``(N, N)`` array of nodal values.  ``start`` selects the second time
    level: ``"taylor"`` sets ``u(dt) = dt^2/2 * p h(., 0)`` (second-order
    accurate), ``"zero"`` sets ``u(dt) = 0``.  With ``substeps = k`` the scheme
    runs with step ``dt/k`` and only every ``k``-th level is kept.
    """
    if int(substeps) != substeps or substeps < 1:
        raise ConfigError(f"substeps must be a positive integer, got {substeps}")
    check_cfl(grid, substeps=substeps)
    if start not in ("taylor", "zero"):
        raise ConfigError(f"unknown start rule {start!r}")
    X, Y = grid.space.mesh()
    P = np.asarray(p(X, Y) if callable(p) else p, float)
    if P.shape != X.shape:
        raise ConfigError(f"source array shape {P.shape} does not match grid {X.shape}")
    P = P.copy()
    P[[0, -1], :] = 0.0
    P[:, [0, -1]] = 0.0
    k = int(substeps)
    dt, dx, nt = grid.time.dt / k, grid.space.dx, grid.time.n_t
    steps = (nt - 1) * k + 1

    out = np.zeros((nt,) + X.shape)
    prev = np.zeros_like(X)
    cur = np.zeros_like(X)
    if start == "taylor" and steps > 1:
        cur = 0.5 * dt**2 * P * h.h(X, Y, 0.0)
    if k == 1 and nt > 1:
        out[1] = cur
    lap = np.zeros_like(X)
    for s in range(1, steps - 1):
        prev, cur = cur, leapfrog_step(prev, cur, dx, dt, P * h.h(X, Y, s * dt), lap)
        if (s + 1) % k == 0:
            out[(s + 1) // k] = cur
    return WaveField(np.moveaxis(out, 0, -1), grid)


def discrete_utt(u: WaveField, p, h: Excitation) -> np.ndarray:
    """``u_tt`` implied by the leapfrog scheme, ``lap u + p h``, shape ``(N, N, n_t)``."""
    grid = u.grid
    X, Y = grid.space.mesh()
    P = np.asarray(p(X, Y) if callable(p) else p, float)
    out = np.empty(u.values.shape)
    lap = np.zeros_like(X)
    for j, tj in enumerate(grid.time.t):
        _laplacian(u.values[..., j], grid.space.dx, lap)
        out[..., j] = lap + P * h.h(X, Y, tj)
    out[[0, -1], :, :] = 0.0
    out[:, [0, -1], :] = 0.0
    return out


@dataclass
class CauchyRecord:
    """Boundary traces on the inversion grid, arrays of shape ``(n_boundary, n_t)``.

    Rows follow :class:`~wavesrc.grid.BoundaryLayout` order; ``G`` is the
    derivative along each row's outward normal.
    """

    F: np.ndarray
    G: np.ndarray
    grid: SpaceTimeGrid
    delta: float = 0.0
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = (len(self.grid.space.boundary), self.grid.time.n_t)
        for name in ("F", "G"):
            arr = getattr(self, name)
            if arr.shape != expected:
                raise ConfigError(f"{name} has shape {arr.shape}, expected {expected}")

    def header(self) -> dict:
        g = self.grid
        return {
            "format": "wavesrc-cauchy/1",
            "n": g.space.n,
            "extent": [g.space.x_min, g.space.x_max, g.space.y_min, g.space.y_max],
            "n_t": g.time.n_t,
            "t_final": g.time.t_final,
            "time_convention": g.time.convention,
            "delta": self.delta,
            "seed": self.seed,
            "rng": RNG_ALGORITHM if self.seed is not None else None,
            **self.meta,
        }

    def to_csv(self, path) -> None:
        """Write ``# {json header}`` then rows ``node,j,F,G`` (1-based, node-major)."""
        nb, nt = self.F.shape
        node = np.repeat(np.arange(1, nb + 1), nt)
        j = np.tile(np.arange(1, nt + 1), nb)
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.header(), sort_keys=True) + "\n")
        buf.write("node,j,F,G\n")
        np.savetxt(
            buf,
            np.column_stack([node, j, self.F.ravel(), self.G.ravel()]),
            fmt=["%d", "%d", "%.17g", "%.17g"],
            delimiter=",",
        )
        with open(path, "w", newline="\n") as fh:
            fh.write(buf.getvalue())

    @classmethod
    def from_csv(cls, path) -> "CauchyRecord":
        with open(path) as fh:
            first = fh.readline()
            if not first.startswith("# "):
                raise ConfigError(f"{path}: missing JSON header line")
            head = json.loads(first[2:])
            data = np.loadtxt(fh, delimiter=",", skiprows=1, ndmin=2)
        x0, x1, y0, y1 = head["extent"]
        grid = SpaceTimeGrid(
            SpatialGrid2D(int(head["n"]), x0, x1, y0, y1),
            TimeGrid(float(head["t_final"]), int(head["n_t"]), head.get("time_convention", "interval")),
        )
        nb, nt = len(grid.space.boundary), grid.time.n_t
        if data.shape[0] != nb * nt:
            raise ConfigError(f"{path}: {data.shape[0]} rows, expected {nb * nt}")
        order = np.lexsort((data[:, 1], data[:, 0]))
        data = data[order]
        meta = {k: v for k, v in head.items()
                if k not in {"format", "n", "extent", "n_t", "t_final", "time_convention", "delta", "seed", "rng"}}
        # contiguous copies: BLAS kernels round differently on strided views
        F = np.ascontiguousarray(data[:, 2].reshape(nb, nt))
        G = np.ascontiguousarray(data[:, 3].reshape(nb, nt))
        return cls(F, G, grid,
                   float(head["delta"]), head["seed"], meta)


def _bilinear(grid: SpatialGrid2D, x, y):
    """Cell indices and weights for bilinear interpolation at points ``(x, y)``."""
    fx = (np.asarray(x) - grid.x_min) / grid.dx
    fy = (np.asarray(y) - grid.y_min) / grid.dx
    i = np.clip(np.floor(fx).astype(int), 0, grid.n - 2)
    k = np.clip(np.floor(fy).astype(int), 0, grid.n - 2)
    a = fx - i
    b = fy - k
    return i, k, a, b


def _interp(values, grid, x, y):
    """Bilinear interpolation of ``values[N, N, ...]`` at points; returns ``(len(x), ...)``."""
    i, k, a, b = _bilinear(grid, x, y)
    a = a.reshape(a.shape + (1,) * (values.ndim - 2))
    b = b.reshape(b.shape + (1,) * (values.ndim - 2))
    return ((1 - a) * (1 - b) * values[i, k] + a * (1 - b) * values[i + 1, k]
            + (1 - a) * b * values[i, k + 1] + a * b * values[i + 1, k + 1])


def normal_derivative(values, fine: SpatialGrid2D, x, y, normal, scheme: str = "one_sided"):
    """Outward normal derivative of a fine-grid field at arbitrary points.

    ``one_sided`` uses ``(3u(x) - 4u(x - nu h) + u(x - 2 nu h)) / 2h`` with
    ``h`` the fine spacing; ``centered`` uses ``(u(x + nu h) - u(x - nu h)) / 2h``.
    """
    h = fine.dx
    nx, ny = normal[:, 0], normal[:, 1]

    def at(s):
        return _interp(values, fine, x + s * h * nx, y + s * h * ny)

    if scheme == "one_sided":
        return (3.0 * at(0) - 4.0 * at(-1) + at(-2)) / (2.0 * h)
    if scheme == "centered":
        return (at(1) - at(-1)) / (2.0 * h)
    raise ConfigError(f"unknown derivative scheme {scheme!r}")


def extract_cauchy(u: WaveField, fine_grid: SpaceTimeGrid, inverse_grid: SpaceTimeGrid,
                   scheme: str = "one_sided") -> CauchyRecord:
    """Noiseless traces ``F* = u`` and ``G* = d_nu u`` at the inverse-grid boundary nodes."""
    fs, inv = fine_grid.space, inverse_grid.space
    margin = 2 * fs.dx
    shrunk = SpatialGrid2D(3, fs.x_min + margin, fs.x_max - margin, fs.y_min + margin, fs.y_max - margin)
    if not shrunk.contains(inv):
        raise ConfigError("inverse grid is not contained in the forward grid (with a two-cell margin)")
    if fine_grid.time.n_t != inverse_grid.time.n_t or not np.isclose(fine_grid.time.dt, inverse_grid.time.dt):
        raise ConfigError("forward and inverse grids must share the time axis")
    b = inv.boundary
    xb, yb = inv.x[b.m0], inv.y[b.n0]
    F = _interp(u.values, fs, xb, yb)
    G = normal_derivative(u.values, fs, xb, yb, b.normal, scheme)
    return CauchyRecord(np.ascontiguousarray(F), np.ascontiguousarray(G), inverse_grid)


def add_noise(rec: CauchyRecord, delta: float, seed: int) -> CauchyRecord:
    """Multiply every entry by ``1 + delta * xi`` with ``xi ~ U[-1, 1]``, independently for F and G."""
    if not delta >= 0:
        raise ConfigError(f"noise level must be >= 0, got {delta}")
    if delta == 0:
        return CauchyRecord(rec.F.copy(), rec.G.copy(), rec.grid, 0.0, seed, dict(rec.meta))
    f_ss, g_ss = np.random.SeedSequence(seed).spawn(2)
    xi_f = 2.0 * np.random.Generator(np.random.PCG64(f_ss)).random(rec.F.shape) - 1.0
    xi_g = 2.0 * np.random.Generator(np.random.PCG64(g_ss)).random(rec.G.shape) - 1.0
    return CauchyRecord(rec.F * (1.0 + delta * xi_f), rec.G * (1.0 + delta * xi_g),
                        rec.grid, float(delta), seed, dict(rec.meta))
