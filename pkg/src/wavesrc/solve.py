"""Solvers for the symmetric positive definite normal equations."""
from __future__ import annotations

import ctypes.util
import glob
import logging
import os
import site
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg.lapack as lapack
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, NumericalError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CgConfig:
    tol_rel: float = 1e-8
    max_iters: int | None = None  # None -> 20 * sqrt(n)
    preconditioner: str = "jacobi"

    def __post_init__(self):
        if not 0 < self.tol_rel < 1:
            raise ConfigError(f"tol_rel must lie in (0, 1), got {self.tol_rel}")
        if self.max_iters is not None and self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.preconditioner not in ("none", "jacobi"):
            raise ConfigError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class SolveStats:
    method: str
    iterations: int
    residual_rel: float
    wall_time: float
    nnz: int
    converged: bool
    factor_time: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


def relative_residual(M, x, rhs) -> float:
    nb = np.linalg.norm(rhs)
    r = np.linalg.norm(rhs - M @ x)
    return float(r / nb) if nb > 0 else float(r)


def _check_symmetric(M) -> None:
    diff = M - M.T
    if sp.issparse(diff):
        bad = diff.count_nonzero() and np.max(np.abs(diff.data)) > 0
    else:
        bad = np.any(diff != 0)
    if bad:
        raise ConfigError("conjugate gradients needs a symmetric matrix; M != M^T")


def cg_solve(M, rhs, cfg: CgConfig = CgConfig(), x0=None, callback=None):
    """Preconditioned conjugate gradients.  Returns ``(x, SolveStats)``.

    ``callback(k, x)`` is called after every iteration.  Non-convergence is
    reported through ``stats.converged``; NaN/Inf raises :class:`NumericalError`.
    """
    t0 = time.perf_counter()
    M = M.tocsr() if sp.issparse(M) else np.asarray(M, float)
    rhs = np.asarray(rhs, float)
    n = rhs.shape[0]
    vals = M.data if sp.issparse(M) else M
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(rhs))):
        raise NumericalError("matrix or right-hand side contains NaN/Inf")
    _check_symmetric(M)
    max_iters = cfg.max_iters or max(1, int(20 * np.sqrt(n)))
    if cfg.preconditioner == "jacobi":
        d = M.diagonal() if sp.issparse(M) else np.diag(M).copy()
        if np.any(d <= 0):
            raise NumericalError("Jacobi preconditioner needs a positive diagonal")
        inv_d = 1.0 / d
    else:
        inv_d = None

    x = np.zeros(n) if x0 is None else np.array(x0, float)
    r = rhs - M @ x
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0:
        x[:] = 0.0
        return x, SolveStats("cg", 0, 0.0, time.perf_counter() - t0, _nnz(M), True)
    z = r * inv_d if inv_d is not None else r.copy()
    p = z.copy()
    rz = r @ z
    k = 0
    res = np.linalg.norm(r) / bnorm
    while res > cfg.tol_rel and k < max_iters:
        q = M @ p
        pq = p @ q
        if not np.isfinite(pq) or pq <= 0:
            raise NumericalError(f"CG breakdown at iteration {k}: p^T M p = {pq}")
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        k += 1
        res = np.linalg.norm(r) / bnorm
        if not np.isfinite(res):
            raise NumericalError(f"non-finite residual at iteration {k}")
        if callback is not None:
            callback(k, x)
        if res <= cfg.tol_rel:
            # the recursive residual drifts; confirm against the true one and restart if needed
            r = rhs - M @ x
            res = np.linalg.norm(r) / bnorm
            if res <= cfg.tol_rel:
                break
            z = r * inv_d if inv_d is not None else r.copy()
            p = z.copy()
            rz = r @ z
            continue
        z = r * inv_d if inv_d is not None else r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    true_res = relative_residual(M, x, rhs)
    stats = SolveStats("cg", k, true_res, time.perf_counter() - t0, _nnz(M), true_res <= cfg.tol_rel)
    if not stats.converged:
        log.warning("CG stopped after %d iterations at relative residual %.3e", k, true_res)
    return x, stats


def _nnz(M) -> int:
    return int(M.nnz) if sp.issparse(M) else int(np.count_nonzero(M))


def dense_solve(M, rhs) -> np.ndarray:
    """Cholesky solve of a dense SPD system (LAPACK ``potrf``/``potrs``)."""
    M = np.asarray(M.toarray() if sp.issparse(M) else M, float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigError(f"dense_solve needs a square matrix, got {M.shape}")
    c, info = lapack.dpotrf(M, lower=1, clean=1)
    if info > 0:
        raise NumericalError(f"matrix not positive definite: pivot {info} (1-based) is not positive")
    if info < 0:
        raise ConfigError(f"invalid argument {-info} to potrf")
    x, info = lapack.dpotrs(c, np.asarray(rhs, float), lower=1)
    if info != 0:
        raise NumericalError(f"potrs failed with info={info}")
    return x


def _locate_mkl() -> None:
    if os.environ.get("PYPARDISO_MKL_RT") or ctypes.util.find_library("mkl_rt"):
        return
    roots = {sys.prefix, "/usr/local", "/usr", getattr(site, "USER_BASE", "") or ""}
    for root in sorted(r for r in roots if r):
        hits = sorted(glob.glob(os.path.join(root, "lib*", "libmkl_rt.so*")), key=len)
        if hits:
            os.environ["PYPARDISO_MKL_RT"] = hits[0]
            return


def pardiso_available() -> bool:
    try:
        _locate_mkl()
        import pypardiso  # noqa: F401
    except (ImportError, OSError):
        return False
    return True


class SparseFactorization:
    """Reusable direct factorisation of an SPD sparse matrix.

    ``backend="pardiso"`` uses MKL PARDISO (SPD mode, upper triangle),
    ``"superlu"`` uses SciPy's SuperLU, ``"auto"`` prefers PARDISO.
    """

    def __init__(self, M, backend: str = "auto"):
        t0 = time.perf_counter()
        self.M = M.tocsr()
        self.n = self.M.shape[0]
        if backend == "auto":
            backend = "pardiso" if pardiso_available() else "superlu"
        self.backend = backend
        if backend == "pardiso":
            _locate_mkl()
            import pypardiso

            self._upper = sp.triu(self.M, format="csr")
            self._upper.sort_indices()
            self._solver = pypardiso.PyPardisoSolver(mtype=2)
            try:
                self._solver.factorize(self._upper)
            except pypardiso.pardiso_wrapper.PyPardisoError as exc:
                raise NumericalError(f"PARDISO factorisation failed: {exc}") from exc
        elif backend == "superlu":
            self._lu = spla.splu(self.M.tocsc())
        else:
            raise ConfigError(f"unknown direct backend {backend!r}")
        self.factor_time = time.perf_counter() - t0
        log.info("factorised %d unknowns with %s in %.1fs", self.n, backend, self.factor_time)

    def solve(self, rhs) -> tuple[np.ndarray, SolveStats]:
        t0 = time.perf_counter()
        rhs = np.asarray(rhs, float)
        if self.backend == "pardiso":
            x = self._solver.solve(self._upper, rhs)
        else:
            x = self._lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise NumericalError("direct solve produced non-finite values")
        res = relative_residual(self.M, x, rhs)
        return x, SolveStats(f"direct-{self.backend}", 1, res, time.perf_counter() - t0,
                             int(self.M.nnz), bool(res < 1e-6), self.factor_time)
