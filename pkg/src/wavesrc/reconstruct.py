"""Source recovery from ``w`` at ``t = 0``, error metrics and exports."""
from __future__ import annotations

import csv

import numpy as np

from .assembly import Coefficients, grid_laplacian
from .errors import ConfigError, ModelError
from .excitation import Excitation
from .grid import SpatialGrid2D


def extract_source(w, grid: SpatialGrid2D, h: Excitation, coeffs: Coefficients | None = None) -> np.ndarray:
    """``p = c w(., 0) - (lap f + a f + B.grad f) / h(., 0)``.

    ``w`` is the space-time array ``(N, N, n_t)``, or just its first time level ``(N, N)``.
    """
    w = np.asarray(w, float)
    w0 = w[..., 0] if w.ndim == 3 else w
    if w0.shape != (grid.n, grid.n):
        raise ConfigError(f"w has spatial shape {w0.shape}, grid is {grid.n}x{grid.n}")
    k = (coeffs or Coefficients()).on(grid)
    X, Y = grid.mesh()
    h0 = np.asarray(h.h(X, Y, 0.0), float) + 0 * X
    if np.any(h0 == 0):
        m, n = np.argwhere(h0 == 0)[0] + 1
        raise ModelError(f"h(x, 0) vanishes at node (m={m}, n={n})")
    p = k["c"] * w0
    f = k["f"]
    if np.any(f != 0):
        fx, fy = np.gradient(f, grid.dx)
        p = p - (grid_laplacian(f, grid.dx) + k["a"] * f + k["bx"] * fx + k["by"] * fy) / h0
    return p


def compute_metrics(p_true, p_comp) -> dict:
    """Extrema, their relative errors (each divided by the true extremum's magnitude) and the L2 error.

    If ``p_true`` is identically zero the L2 entry is the absolute error and
    ``l2_is_absolute`` is set.
    """
    p_true = np.asarray(p_true, float)
    p_comp = np.asarray(p_comp, float)
    if p_true.shape != p_comp.shape:
        raise ConfigError(f"shape mismatch {p_true.shape} vs {p_comp.shape}")
    lo_t, hi_t = float(p_true.min()), float(p_true.max())
    lo_c, hi_c = float(p_comp.min()), float(p_comp.max())

    def rel(a, b):
        return abs(a - b) / abs(b) if b != 0 else abs(a - b)

    norm_t = float(np.linalg.norm(p_true))
    diff = float(np.linalg.norm(p_comp - p_true))
    return {
        "min_true": lo_t,
        "min_comp": lo_c,
        "max_true": hi_t,
        "max_comp": hi_c,
        "err_min_rel": rel(lo_c, lo_t),
        "err_max_rel": rel(hi_c, hi_t),
        "l2_rel": diff / norm_t if norm_t > 0 else diff,
        "l2_is_absolute": norm_t == 0,
    }


def line_profile(p, grid: SpatialGrid2D, y_value: float = 0.0) -> list[tuple[float, float]]:
    """``(x, p(x, y))`` along the grid row nearest to ``y = y_value``."""
    if not grid.y_min <= y_value <= grid.y_max:
        raise IndexError(f"y={y_value} outside [{grid.y_min}, {grid.y_max}]")
    k = int(np.argmin(np.abs(grid.y - y_value)))
    p = np.asarray(p, float)
    return [(float(x), float(v)) for x, v in zip(grid.x, p[:, k])]


def write_profile_csv(path, rows_by_name: dict[str, list[tuple[float, float]]]) -> None:
    names = list(rows_by_name)
    xs = [x for x, _ in rows_by_name[names[0]]]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["x"] + names)
        for i, x in enumerate(xs):
            wr.writerow([repr(x)] + [repr(rows_by_name[n][i][1]) for n in names])


def write_grid_csv(path, p, grid: SpatialGrid2D) -> None:
    """Rows ``x,y,value`` for every node, ``x`` major."""
    X, Y = grid.mesh()
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["x", "y", "value"])
        for x, y, v in zip(X.ravel(), Y.ravel(), np.asarray(p, float).ravel()):
            wr.writerow([repr(float(x)), repr(float(y)), repr(float(v))])


def write_pgm(path, p, lo: float | None = None, hi: float | None = None) -> dict:
    """8-bit binary PGM of ``p`` (``y`` up, ``x`` right); returns the value mapping used."""
    p = np.asarray(p, float)
    lo = float(p.min()) if lo is None else float(lo)
    hi = float(p.max()) if hi is None else float(hi)
    span = hi - lo if hi > lo else 1.0
    img = np.clip(np.round((p - lo) / span * 255.0), 0, 255).astype(np.uint8)
    img = img.T[::-1]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())
    return {"file": str(path), "black": lo, "white": hi}
