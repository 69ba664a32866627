"""Sparse space-time operators for the quasi-reversibility least-squares problem.

The unknown ``w`` lives on every node of the ``N x N x n_t`` grid, flattened
with :meth:`~wavesrc.grid.SpaceTimeGrid.flat`.  The stacked system is

    C = [Dt0; D; Nu; L],   b = [psi; zeta; xi; F]

where ``Dt0`` enforces ``w_t(., 0) = psi``, ``D`` and ``Nu`` impose the
Dirichlet and Neumann data of ``w`` on the boundary, and ``L`` is the
integro-differential operator on interior nodes.  The memory term
``int_0^t w_t`` is replaced by ``w(x, t) - w(x, 0)``, so it costs one extra
column per row.  Only rows that can be nonzero are stored.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError
from .excitation import AuxiliaryHTilde, Excitation
from .grid import SpaceTimeGrid, SpatialGrid2D

MODES = ("paper_simplified", "full")


@dataclass(frozen=True)
class Coefficients:
    """Known PDE data ``c, a, B`` and initial state ``f, g`` as nodal arrays or scalars."""

    c: float | np.ndarray = 1.0
    a: float | np.ndarray = 0.0
    bx: float | np.ndarray = 0.0
    by: float | np.ndarray = 0.0
    f: float | np.ndarray = 0.0
    g: float | np.ndarray = 0.0

    def on(self, grid: SpatialGrid2D) -> dict[str, np.ndarray]:
        shape = (grid.n, grid.n)
        out = {}
        for name in ("c", "a", "bx", "by", "f", "g"):
            arr = np.broadcast_to(np.asarray(getattr(self, name), float), shape)
            out[name] = arr
        return out

    @property
    def is_trivial(self) -> bool:
        return all(np.all(np.asarray(getattr(self, k)) == v)
                   for k, v in (("c", 1.0), ("a", 0.0), ("bx", 0.0), ("by", 0.0), ("f", 0.0), ("g", 0.0)))


def grid_laplacian(v: np.ndarray, dx: float) -> np.ndarray:
    gx, gy = np.gradient(v, dx)
    return np.gradient(gx, dx, axis=0) + np.gradient(gy, dx, axis=1)


def initial_velocity(grid: SpatialGrid2D, h: Excitation, coeffs: Coefficients) -> np.ndarray:
    """``psi = ((lap g + B.grad g) h0 - (lap f + B.grad f)) / (c h0^2)`` on the nodes."""
    k = coeffs.on(grid)
    X, Y = grid.mesh()
    h0 = np.asarray(h.h(X, Y, 0.0), float) + 0 * X
    fx, fy = np.gradient(k["f"], grid.dx)
    gx, gy = np.gradient(k["g"], grid.dx)
    num = ((grid_laplacian(k["g"], grid.dx) + k["bx"] * gx + k["by"] * gy) * h0
           - (grid_laplacian(k["f"], grid.dx) + k["bx"] * fx + k["by"] * fy))
    return num / (k["c"] * h0**2)


@dataclass
class BoundaryData:
    """Dirichlet (``zeta``) and Neumann (``xi``) data of ``w``, shape ``(n_boundary, n_t)``."""

    zeta: np.ndarray
    xi: np.ndarray


def compute_boundary_data(F_tt, G_tt, aux: AuxiliaryHTilde) -> BoundaryData:
    F_tt = np.asarray(F_tt, float)
    G_tt = np.asarray(G_tt, float)
    ht, dnu = aux.value_bnd, aux.dnu_bnd
    if F_tt.shape != ht.shape or G_tt.shape != ht.shape:
        raise ConfigError(f"trace shapes {F_tt.shape}, {G_tt.shape} do not match boundary {ht.shape}")
    return BoundaryData(F_tt / ht, (G_tt * ht - dnu * F_tt) / ht**2)


def _interior(grid: SpaceTimeGrid):
    N, nt = grid.n, grid.n_t
    m, n, j = np.meshgrid(np.arange(1, N - 1), np.arange(1, N - 1), np.arange(1, nt - 1), indexing="ij")
    return m.ravel(), n.ravel(), j.ravel()


def assemble_wave_operator(grid: SpaceTimeGrid, aux: AuxiliaryHTilde, mode: str = "paper_simplified",
                           coeffs: Coefficients | None = None, row_scale: bool = False):
    """Interior rows of the space-time operator and its right-hand side.

    Returns ``(L, rhs, rows)`` where ``L`` is CSR with one row per interior node
    ``2 <= m, n <= N-1, 2 <= j <= n_t-1`` and ``rows`` holds the flat index of
    each row's centre node.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown operator mode {mode!r}; expected one of {MODES}")
    coeffs = coeffs or Coefficients()
    k = coeffs.on(grid.space)
    dt, dx = grid.time.dt, grid.space.dx
    m, n, j = _interior(grid)
    centre = grid.flat(m, n, j)
    r = np.arange(len(centre))
    c = k["c"][m, n]
    ht = aux.value[m, n, j]
    htt_ratio = aux.h_tt[m, n, j] / ht

    entries = [
        (0, 0, 0, -2.0 * c / dt**2 + 4.0 / dx**2),
        (0, 0, 1, c / dt**2),
        (0, 0, -1, c / dt**2),
        (1, 0, 0, -1.0 / dx**2),
        (-1, 0, 0, -1.0 / dx**2),
        (0, 1, 0, -1.0 / dx**2),
        (0, -1, 0, -1.0 / dx**2),
    ]
    rhs = np.zeros(len(centre))
    if mode == "full":
        a, bx, by = k["a"][m, n], k["bx"][m, n], k["by"][m, n]
        hx, hy, h_t = aux.grad_x[m, n, j], aux.grad_y[m, n, j], aux.value_t[m, n, j]
        gix, giy = aux.grad_inv_x[m, n, j], aux.grad_inv_y[m, n, j]
        zeroth = (-a - (bx * hx + by * hy) / ht
                  - c * aux.inv_tt[m, n, j] * ht
                  - 2.0 * c * aux.inv_t[m, n, j] * h_t
                  + aux.lap_inv[m, n, j] * ht
                  + 2.0 * (gix * hx + giy * hy))
        first_t = -2.0 * c * aux.inv_t[m, n, j] * ht
        first_x = -bx + 2.0 * ht * gix
        first_y = -by + 2.0 * ht * giy
        entries += [
            (0, 0, 0, zeroth),
            (0, 0, 1, first_t / (2 * dt)), (0, 0, -1, -first_t / (2 * dt)),
            (1, 0, 0, first_x / (2 * dx)), (-1, 0, 0, -first_x / (2 * dx)),
            (0, 1, 0, first_y / (2 * dx)), (0, -1, 0, -first_y / (2 * dx)),
        ]
        f = k["f"]
        if np.any(f != 0):
            fx, fy = np.gradient(f, dx)
            src = grid_laplacian(f, dx) + k["a"] * f + k["bx"] * fx + k["by"] * fy
            rhs = -aux.h_tt[m, n, j] * src[m, n] / (aux.h0[m, n] * ht)

    rows, cols, vals = [], [], []
    for dm, dn, dj, v in entries:
        rows.append(r)
        cols.append(grid.flat(m + dm, n + dn, j + dj))
        vals.append(np.broadcast_to(v, r.shape))
    rows.append(r)
    cols.append(grid.flat(m, n, 0))
    vals.append(-c * htt_ratio)

    L = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(centre), grid.size),
    )
    L.sum_duplicates()
    if row_scale:
        L = sp.diags(np.full(len(centre), dt**2)) @ L
        rhs = rhs * dt**2
    return L.tocsr(), rhs, centre


def assemble_constraints(grid: SpaceTimeGrid, data: BoundaryData, psi=None):
    """``(Dt0, D, Nu)`` CSR blocks with right-hand sides ``(psi, zeta, xi)``.

    ``Dt0`` has one row per spatial node; ``D`` and ``Nu`` one row per
    (boundary node, time level), boundary-node major.
    """
    N, nt = grid.n, grid.n_t
    dt, dx = grid.time.dt, grid.space.dx
    b = grid.space.boundary
    nb = len(b)

    m, n = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    m, n = m.ravel(), n.ravel()
    r = np.arange(N * N)
    Dt0 = sp.csr_matrix(
        (np.r_[np.full(N * N, -1.0 / dt), np.full(N * N, 1.0 / dt)],
         (np.r_[r, r], np.r_[grid.flat(m, n, 0), grid.flat(m, n, 1)])),
        shape=(N * N, grid.size),
    )
    psi_vec = np.zeros(N * N) if psi is None else np.broadcast_to(np.asarray(psi, float), (N, N)).ravel()

    bm = np.repeat(b.m0, nt)
    bn = np.repeat(b.n0, nt)
    bj = np.tile(np.arange(nt), nb)
    rb = np.arange(nb * nt)
    D = sp.csr_matrix((np.ones(nb * nt), (rb, grid.flat(bm, bn, bj))), shape=(nb * nt, grid.size))
    im = np.repeat(b.inner_m0, nt)
    inn = np.repeat(b.inner_n0, nt)
    Nu = sp.csr_matrix(
        (np.r_[np.full(nb * nt, 1.0 / dx), np.full(nb * nt, -1.0 / dx)],
         (np.r_[rb, rb], np.r_[grid.flat(bm, bn, bj), grid.flat(im, inn, bj)])),
        shape=(nb * nt, grid.size),
    )
    return (Dt0, D, Nu), (psi_vec.copy(), data.zeta.ravel().copy(), data.xi.ravel().copy())


def _forward_difference(grid: SpaceTimeGrid, axis: int):
    N, nt = grid.n, grid.n_t
    step_len = grid.time.dt if axis == 2 else grid.space.dx
    ranges = [np.arange(N), np.arange(N), np.arange(nt)]
    ranges[axis] = ranges[axis][:-1]
    m, n, j = (a.ravel() for a in np.meshgrid(*ranges, indexing="ij"))
    shift = [0, 0, 0]
    shift[axis] = 1
    base = grid.flat(m, n, j)
    ahead = grid.flat(m + shift[0], n + shift[1], j + shift[2])
    r = np.arange(len(base))
    return sp.csr_matrix(
        (np.r_[np.full(len(r), -1.0 / step_len), np.full(len(r), 1.0 / step_len)],
         (np.r_[r, r], np.r_[base, ahead])),
        shape=(len(r), grid.size),
    )


def assemble_penalties(grid: SpaceTimeGrid):
    """Forward-difference operators ``(D_x, D_y, D_t)``; rows only where the forward neighbour exists."""
    return tuple(_forward_difference(grid, ax) for ax in range(3))


BLOCK_NAMES = ("initial_velocity", "dirichlet", "neumann", "pde")


@dataclass
class StackedSystem:
    C: sp.csr_matrix
    b: np.ndarray
    blocks: dict[str, tuple[int, int]]
    centres: dict[str, np.ndarray] = field(default_factory=dict)

    def block(self, name: str):
        lo, hi = self.blocks[name]
        return self.C[lo:hi], self.b[lo:hi]


def assemble_system(grid: SpaceTimeGrid, aux: AuxiliaryHTilde, data: BoundaryData, *,
                    psi=None, mode: str = "paper_simplified", coeffs: Coefficients | None = None,
                    row_scale: bool = False) -> StackedSystem:
    (Dt0, D, Nu), (r0, r1, r2) = assemble_constraints(grid, data, psi)
    L, rL, centres = assemble_wave_operator(grid, aux, mode, coeffs, row_scale)
    parts = [(Dt0, r0), (D, r1), (Nu, r2), (L, rL)]
    blocks, lo = {}, 0
    for name, (mat, _) in zip(BLOCK_NAMES, parts):
        blocks[name] = (lo, lo + mat.shape[0])
        lo += mat.shape[0]
    C = sp.vstack([p[0] for p in parts], format="csr")
    b = np.concatenate([p[1] for p in parts])
    N, nt = grid.n, grid.n_t
    bl = grid.space.boundary
    bnode = grid.flat(np.repeat(bl.m0, nt), np.repeat(bl.n0, nt), np.tile(np.arange(nt), len(bl)))
    m, n = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    centre_idx = {
        "initial_velocity": grid.flat(m.ravel(), n.ravel(), 0),
        "dirichlet": bnode,
        "neumann": bnode,
        "pde": centres,
    }
    return StackedSystem(C, b, blocks, centre_idx)


@dataclass
class NormalSystem:
    M: sp.csr_matrix
    rhs: np.ndarray
    eps1: float
    eps2: float


def normal_matrix(C, penalties, eps1: float, eps2: float) -> sp.csr_matrix:
    """``C^T C + eps1 I + eps2 sum(D^T D)``, symmetrised so ``M == M.T`` bit for bit."""
    if not eps1 > 0:
        raise ConfigError(f"eps1 must be positive, got {eps1}")
    if not eps2 >= 0:
        raise ConfigError(f"eps2 must be non-negative, got {eps2}")
    n = C.shape[1]
    for P in penalties:
        if P.shape[1] != n:
            raise ConfigError(f"penalty has {P.shape[1]} columns, system has {n}")
    M = (C.T @ C).tocsr() + eps1 * sp.identity(n, format="csr")
    if eps2 > 0:
        for P in penalties:
            M = M + eps2 * (P.T @ P)
    M = M.tocsr()
    M = ((M + M.T) * 0.5).tocsr()
    M.sum_duplicates()
    M.eliminate_zeros()
    M.sort_indices()
    return M


def verbatim_rhs(system: StackedSystem, size: int) -> np.ndarray:
    """Node-indexed right-hand side: each row's value scattered to its centre node."""
    out = np.zeros(size)
    for name, (lo, hi) in system.blocks.items():
        np.add.at(out, system.centres[name], system.b[lo:hi])
    return out


def assemble_normal_system(C, b, penalties, eps1: float, eps2: float, *, rhs_form: str = "normal",
                           system: StackedSystem | None = None) -> NormalSystem:
    """``M w = C^T b``; ``rhs_form="verbatim"`` uses the node-indexed ``b`` instead (needs ``system``)."""
    if C.shape[0] != len(b):
        raise ConfigError(f"C has {C.shape[0]} rows but b has {len(b)} entries")
    M = normal_matrix(C, penalties, eps1, eps2)
    if rhs_form == "normal":
        rhs = C.T @ b
    elif rhs_form == "verbatim":
        if system is None:
            raise ConfigError("verbatim right-hand side needs the stacked system")
        rhs = verbatim_rhs(system, C.shape[1])
    else:
        raise ConfigError(f"unknown rhs form {rhs_form!r}")
    return NormalSystem(M, np.asarray(rhs, float), eps1, eps2)


def export_coo(matrix, path) -> None:
    """Write ``row col value`` triplets (1-based) with a ``% rows cols nnz`` header."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write(f"% {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        np.savetxt(fh, np.column_stack([coo.row[order] + 1, coo.col[order] + 1, coo.data[order]]),
                   fmt=["%d", "%d", "%.17g"])
