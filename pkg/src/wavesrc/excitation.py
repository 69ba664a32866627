"""Time profile ``h(x, t)`` of the source and the auxiliary function ``h~``.

``h~(x, t) = h(x, 0) * exp(t * h_t(x, 0) / h(x, 0))`` matches ``h`` and
``h_t`` at ``t = 0`` and never vanishes when ``h(x, 0)`` does not.  All of its
derivatives needed by the space-time operator are evaluated in closed form
from the spatial derivatives of ``h(., 0)`` and ``h_t(., 0)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelError
from .grid import SpaceTimeGrid, SpatialGrid2D


class Excitation:
    """Interface for ``h``.  Subclasses give ``h`` and its derivatives in closed form.

    Spatial derivative hooks return ``(value, grad_x, grad_y, laplacian)`` of
    ``h(., 0)`` and ``h_t(., 0)``.
    """

    def h(self, x, y, t):
        raise NotImplementedError

    def h_t(self, x, y, t):
        raise NotImplementedError

    def h_tt(self, x, y, t):
        raise NotImplementedError

    def initial_jet(self, x, y):
        """``(h0, h0_x, h0_y, lap h0)`` at ``t = 0``."""
        raise NotImplementedError

    def initial_rate_jet(self, x, y):
        """``(h1, h1_x, h1_y, lap h1)`` where ``h1 = h_t(., 0)``."""
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": type(self).__name__}


@dataclass(frozen=True)
class DecayingExcitation(Excitation):
    """``h(x, t) = offset + exp(-(kappa + |x|^2) t)``; defaults give ``1 + exp(-(4 + |x|^2) t)``."""

    offset: float = 1.0
    kappa: float = 4.0

    def _rate(self, x, y):
        return self.kappa + np.asarray(x) ** 2 + np.asarray(y) ** 2

    def h(self, x, y, t):
        return self.offset + np.exp(-self._rate(x, y) * t)

    def h_t(self, x, y, t):
        k = self._rate(x, y)
        return -k * np.exp(-k * t)

    def h_tt(self, x, y, t):
        k = self._rate(x, y)
        return k * k * np.exp(-k * t)

    def initial_jet(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        zero = np.zeros_like(x)
        return (self.offset + 1.0 + zero, zero, zero, zero)

    def initial_rate_jet(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return (-self._rate(x, y), -2.0 * x, -2.0 * y, np.full_like(x, -4.0))

    def describe(self) -> dict:
        return {"kind": "decaying", "offset": self.offset, "kappa": self.kappa}


def check_nonvanishing(h: Excitation, grid: SpatialGrid2D) -> None:
    X, Y = grid.mesh()
    h0 = np.asarray(h.h(X, Y, 0.0), float)
    bad = np.argwhere(~(np.abs(h0) > 0))
    if bad.size:
        m, n = bad[0] + 1
        raise ModelError(f"h(x, 0) vanishes at node (m={m}, n={n}), x={grid.node(m, n)}")


class HTilde:
    """Closed-form ``h~`` together with the derivatives of ``1/h~``.

    With ``q = h1/h0`` and ``l = -log|h0| - t q`` one has ``1/h~ = sign(h0) e^l``,
    hence ``(1/h~)_t = -q/h~``, ``(1/h~)_tt = q^2/h~``, ``grad(1/h~) = grad l / h~``,
    ``lap(1/h~) = (lap l + |grad l|^2) / h~`` and ``grad h~ = -h~ grad l``.
    """

    def __init__(self, excitation: Excitation):
        self.excitation = excitation

    def _jets(self, x, y):
        h0, h0x, h0y, h0l = self.excitation.initial_jet(x, y)
        h1, h1x, h1y, h1l = self.excitation.initial_rate_jet(x, y)
        q = h1 / h0
        qx = h1x / h0 - h1 * h0x / h0**2
        qy = h1y / h0 - h1 * h0y / h0**2
        g0 = h0x**2 + h0y**2
        ql = h1l / h0 - 2 * (h1x * h0x + h1y * h0y) / h0**2 - h1 * h0l / h0**2 + 2 * h1 * g0 / h0**3
        return h0, q, (h0x, h0y, h0l, g0), (qx, qy, ql)

    def value(self, x, y, t):
        h0, q, _, _ = self._jets(x, y)
        return h0 * np.exp(t * q)

    def _log_grad(self, x, y, t):
        h0, q, (h0x, h0y, h0l, g0), (qx, qy, ql) = self._jets(x, y)
        lx = -h0x / h0 - t * qx
        ly = -h0y / h0 - t * qy
        ll = -(h0l / h0 - g0 / h0**2) - t * ql
        return h0 * np.exp(t * q), q, lx, ly, ll

    def inv_t(self, x, y, t):
        ht, q, *_ = self._log_grad(x, y, t)
        return -q / ht

    def inv_tt(self, x, y, t):
        ht, q, *_ = self._log_grad(x, y, t)
        return q * q / ht

    def grad_inv(self, x, y, t):
        ht, _, lx, ly, _ = self._log_grad(x, y, t)
        return lx / ht, ly / ht

    def lap_inv(self, x, y, t):
        ht, _, lx, ly, ll = self._log_grad(x, y, t)
        return (ll + lx**2 + ly**2) / ht

    def grad(self, x, y, t):
        ht, _, lx, ly, _ = self._log_grad(x, y, t)
        return -ht * lx, -ht * ly

    def t_derivative(self, x, y, t):
        ht, q, *_ = self._log_grad(x, y, t)
        return q * ht

    def normal_derivative(self, x, y, t, normal):
        gx, gy = self.grad(x, y, t)
        normal = np.asarray(normal, float)
        return gx * normal[..., 0] + gy * normal[..., 1]


@dataclass
class AuxiliaryHTilde:
    """``h~`` and friends sampled on a space-time grid, arrays of shape ``(N, N, n_t)``.

    Boundary arrays (``*_bnd``) have shape ``(n_boundary, n_t)`` in
    :class:`~wavesrc.grid.BoundaryLayout` order.
    """

    grid: SpaceTimeGrid
    func: HTilde
    h0: np.ndarray
    h_tt: np.ndarray
    value: np.ndarray
    inv_t: np.ndarray
    inv_tt: np.ndarray
    grad_inv_x: np.ndarray
    grad_inv_y: np.ndarray
    lap_inv: np.ndarray
    grad_x: np.ndarray
    grad_y: np.ndarray
    value_t: np.ndarray
    value_bnd: np.ndarray
    dnu_bnd: np.ndarray


def build_h_tilde(h: Excitation, grid: SpaceTimeGrid) -> AuxiliaryHTilde:
    """Sample ``h~`` and its derivatives on ``grid`` after checking ``h(x, 0) != 0``."""
    check_nonvanishing(h, grid.space)
    X, Y = grid.space.mesh()
    Xs, Ys, Ts = X[..., None], Y[..., None], grid.time.t[None, None, :]
    f = HTilde(h)
    value = f.value(Xs, Ys, Ts)
    if not np.all(np.isfinite(value)) or np.min(np.abs(value)) <= 0:
        raise ModelError("h~ vanishes or overflows on the space-time grid")
    gix, giy = f.grad_inv(Xs, Ys, Ts)
    gx, gy = f.grad(Xs, Ys, Ts)
    b = grid.space.boundary
    xb, yb = grid.space.x[b.m0][:, None], grid.space.y[b.n0][:, None]
    tb = grid.time.t[None, :]
    return AuxiliaryHTilde(
        grid=grid,
        func=f,
        h0=np.asarray(h.h(X, Y, 0.0), float) + 0 * X,
        h_tt=np.broadcast_to(h.h_tt(Xs, Ys, Ts), grid.shape).copy(),
        value=value,
        inv_t=f.inv_t(Xs, Ys, Ts),
        inv_tt=f.inv_tt(Xs, Ys, Ts),
        grad_inv_x=gix,
        grad_inv_y=giy,
        lap_inv=f.lap_inv(Xs, Ys, Ts),
        grad_x=gx,
        grad_y=gy,
        value_t=f.t_derivative(Xs, Ys, Ts),
        value_bnd=f.value(xb, yb, tb),
        dnu_bnd=f.normal_derivative(xb, yb, tb, b.normal[:, None, :]),
    )
