"""Second time derivatives of noisy traces by Tikhonov-regularised double integration.

A trace with ``F(0) = F_t(0) = 0`` satisfies ``F(t_n) ~ dt^2 (A y)_n`` where
``y`` holds ``F_tt`` samples and ``A[n, j] = n - j + 1`` (``j <= n``).  The
default estimate minimises ``|A y - F / dt^2|^2 + eps |y|^2``, so ``eps`` is
measured against the unscaled matrix.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import ConfigError, NumericalError
from .forward import CauchyRecord


def build_integration_matrix(n_t: int) -> np.ndarray:
    if int(n_t) != n_t or n_t < 1:
        raise ConfigError(f"n_t must be a positive integer, got {n_t}")
    k = np.arange(n_t)
    return np.tril(k[:, None] - k[None, :] + 1).astype(float)


def _factor(mat):
    try:
        return scipy.linalg.cho_factor(mat, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Tikhonov system not positive definite (cond ~ {np.linalg.cond(mat):.3e}): {exc}")


def second_time_derivative(trace, dt: float, eps: float, *, form: str = "unscaled", lag: int = 0) -> np.ndarray:
    """Regularised ``d^2/dt^2`` of ``trace`` along its last axis.

    ``form`` picks the normal equations:

    * ``"unscaled"``: ``(A^T A + eps I) y = A^T F / dt^2``
    * ``"scaled"``: ``(dt^4 A^T A + eps I) y = dt^2 A^T F``, the same minimiser
      with ``eps`` replaced by ``eps / dt^4``
    * ``"verbatim"``: ``(A^T A + eps I) y = F``, no transpose and no ``dt``;
      kept only for comparison

    ``lag`` re-indexes the result as ``y[j] <- y[j + lag]`` (linear
    extrapolation at the end).
    """
    if not eps > 0:
        raise ConfigError(f"eps must be positive, got {eps}")
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    F = np.asarray(trace, float)
    nt = F.shape[-1]
    A = build_integration_matrix(nt)
    flat = F.reshape(-1, nt).T
    if form == "unscaled":
        cf = _factor(A.T @ A + eps * np.eye(nt))
        y = scipy.linalg.cho_solve(cf, (A.T @ flat) / dt**2)
    elif form == "scaled":
        cf = _factor(dt**4 * (A.T @ A) + eps * np.eye(nt))
        y = scipy.linalg.cho_solve(cf, dt**2 * (A.T @ flat))
    elif form == "verbatim":
        cf = _factor(A.T @ A + eps * np.eye(nt))
        y = scipy.linalg.cho_solve(cf, flat)
    else:
        raise ConfigError(f"unknown differentiation form {form!r}")
    if not np.all(np.isfinite(y)):
        raise NumericalError("non-finite second derivative")
    if lag:
        if not 0 < lag < nt - 1:
            raise ConfigError(f"lag must be in [0, {nt - 2}], got {lag}")
        ext = np.vstack([y] + [y[-1:] + (k + 1) * (y[-1:] - y[-2:-1]) for k in range(lag)])
        y = ext[lag:]
    return y.T.reshape(F.shape)


def differentiate_record(rec: CauchyRecord, eps: float, *, form: str = "unscaled", lag: int = 0):
    """``(F_tt, G_tt)`` for every boundary node of ``rec``."""
    dt = rec.grid.time.dt
    return (
        second_time_derivative(rec.F, dt, eps, form=form, lag=lag),
        second_time_derivative(rec.G, dt, eps, form=form, lag=lag),
    )
