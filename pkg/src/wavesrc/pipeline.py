"""End-to-end runs: synthesise, differentiate, assemble, solve, reconstruct, write artifacts."""
from __future__ import annotations

import csv
import json
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import (Coefficients, assemble_penalties, assemble_system, compute_boundary_data,
                       export_coo, initial_velocity, normal_matrix, verbatim_rhs)
from .config import RunConfig
from .errors import ConfigError, StageError, WavesrcError
from .excitation import DecayingExcitation, build_h_tilde
from .forward import CauchyRecord, add_noise, extract_cauchy, forward_solve
from .grid import SpaceTimeGrid, SpatialGrid2D, TimeGrid
from .reconstruct import (compute_metrics, extract_source, line_profile, write_grid_csv, write_pgm,
                          write_profile_csv)
from .regdiff import differentiate_record
from .solve import (CgConfig, SolveStats, SparseFactorization, cg_solve, dense_solve, pardiso_available,
                    relative_residual)
from .sources import SourceSpec

log = logging.getLogger(__name__)

REPORT_FORMAT = "wavesrc-report/1"
ARTIFACTS = ("config.yaml", "cauchy.csv", "w.npy", "p_true.csv", "p_comp.csv", "profile_y0.csv",
             "p_comp.pgm", "report.json", "timing.json")
INCOMPLETE = "INCOMPLETE"


def inverse_grid(cfg: RunConfig) -> SpaceTimeGrid:
    x0, x1, y0, y1 = cfg.extent
    return SpaceTimeGrid(SpatialGrid2D(cfg.inverse_n, x0, x1, y0, y1),
                         TimeGrid(cfg.t_final, cfg.n_t, cfg.time_convention))


def fine_grid(cfg: RunConfig) -> SpaceTimeGrid:
    r = cfg.fine_half_width
    return SpaceTimeGrid(SpatialGrid2D(cfg.fine_n, -r, r, -r, r), TimeGrid(cfg.t_final, cfg.n_t, cfg.time_convention))


def make_source(cfg: RunConfig) -> SourceSpec:
    if cfg.source is None:
        return SourceSpec.for_test(cfg.test, cfg.amplitude)
    spec = dict(cfg.source)
    if spec.get("values") is not None:
        spec["values"] = np.asarray(spec["values"], float)
    if "extent" in spec:
        spec["extent"] = tuple(spec["extent"])
    try:
        return SourceSpec(**spec)
    except TypeError as exc:
        raise ConfigError(f"bad source mapping: {exc}") from None


def synthesize(cfg: RunConfig) -> CauchyRecord:
    """Noisy lateral Cauchy data for ``cfg``'s source."""
    src = make_source(cfg)
    fine, inv = fine_grid(cfg), inverse_grid(cfg)
    u = forward_solve(src, DecayingExcitation(), fine, start=cfg.forward_start)
    rec = extract_cauchy(u, fine, inv, cfg.neumann_scheme)
    rec.meta["source"] = src.describe()
    return add_noise(rec, cfg.delta, cfg.seed)


@dataclass
class Operator:
    """Everything that depends on the grid and weights but not on the data."""

    grid: SpaceTimeGrid
    aux: object
    penalties: tuple
    M: object
    factor: SparseFactorization | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)


_CACHE: dict[str, Operator] = {}
_CACHE_LOCK = threading.Lock()


def clear_operator_cache() -> None:
    with _CACHE_LOCK:
        _CACHE.clear()


def get_operator(cfg: RunConfig) -> Operator:
    """Normal matrix (and, for the direct solver, its factorisation), cached per operator key."""
    key = cfg.operator_key()
    with _CACHE_LOCK:
        op = _CACHE.get(key)
        if op is None:
            grid = inverse_grid(cfg)
            aux = build_h_tilde(DecayingExcitation(), grid)
            nb = len(grid.space.boundary)
            zero = compute_boundary_data(np.zeros((nb, grid.n_t)), np.zeros((nb, grid.n_t)), aux)
            system = assemble_system(grid, aux, zero, mode=cfg.mode, row_scale=cfg.row_scale)
            pen = assemble_penalties(grid)
            op = Operator(grid, aux, pen, normal_matrix(system.C, pen, cfg.eps1, cfg.eps2))
            _CACHE[key] = op
    if cfg.resolved_solver == "direct":
        with op.lock:
            if op.factor is None or op.factor.backend != _backend(cfg):
                op.factor = SparseFactorization(op.M, cfg.direct_backend)
    return op


def _backend(cfg):
    if cfg.direct_backend == "auto":
        return "pardiso" if pardiso_available() else "superlu"
    return cfg.direct_backend


@dataclass
class RunResult:
    report: dict
    p_comp: np.ndarray
    p_true: np.ndarray
    w: np.ndarray
    record: CauchyRecord
    timing: dict
    status: int


class _Stages:
    def __init__(self):
        self.timing = {}

    def run(self, name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except StageError:
            raise
        except (WavesrcError, ValueError, ArithmeticError, OSError) as exc:
            raise StageError(name, exc) from exc
        finally:
            self.timing[name] = time.perf_counter() - t0


def _solve(cfg: RunConfig, op: Operator, rhs):
    solver = cfg.resolved_solver
    if solver == "direct":
        with op.lock:
            return op.factor.solve(rhs)
    if solver == "cg":
        return cg_solve(op.M, rhs, CgConfig(cfg.cg_tol, cfg.cg_max_iters, cfg.cg_preconditioner))
    t0 = time.perf_counter()
    x = dense_solve(op.M, rhs)
    res = relative_residual(op.M, x, rhs)
    return x, SolveStats("dense-cholesky", 1, res, time.perf_counter() - t0, int(op.M.nnz), bool(res < 1e-6))


def normal_rhs(cfg: RunConfig, F_tt, G_tt):
    """Operator for ``cfg`` and the right-hand side of its normal equations for the given data."""
    grid = inverse_grid(cfg)
    op = get_operator(cfg)
    data = compute_boundary_data(F_tt, G_tt, op.aux)
    psi = initial_velocity(grid.space, DecayingExcitation(), Coefficients())
    system = assemble_system(grid, op.aux, data, psi=psi, mode=cfg.mode, row_scale=cfg.row_scale)
    rhs = system.C.T @ system.b if cfg.rhs_form == "normal" else verbatim_rhs(system, grid.size)
    return op, rhs


def reconstruct_from_record(cfg: RunConfig, rec: CauchyRecord, stages: _Stages | None = None):
    """Differentiate, assemble, solve and extract ``p``; returns ``(w, p_comp, stats, operator)``."""
    stages = stages or _Stages()
    grid = inverse_grid(cfg)
    if rec.grid != grid:
        raise StageError("differentiate", ConfigError("Cauchy data grid does not match the configured inverse grid"))
    F_tt, G_tt = stages.run("differentiate", differentiate_record, rec, cfg.diff_eps,
                            form=cfg.diff_form, lag=cfg.diff_lag)
    op, rhs = stages.run("assemble", normal_rhs, cfg, F_tt, G_tt)
    x, stats = stages.run("solve", _solve, cfg, op, rhs)
    w = x.reshape(grid.shape)
    p = stages.run("reconstruct", extract_source, w, grid.space, DecayingExcitation())
    return w, p, stats, op


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def run_pipeline(cfg: RunConfig, *, record: CauchyRecord | None = None, write: bool = True) -> RunResult:
    """One complete run.  ``record`` skips synthesis and uses the given Cauchy data.

    Writes :data:`ARTIFACTS` into ``cfg.output_dir``.  While the run is in
    progress an ``INCOMPLETE`` marker exists there; on failure it stays and
    names the failing stage.
    """
    out = Path(cfg.output_dir)
    marker = out / INCOMPLETE
    if write:
        out.mkdir(parents=True, exist_ok=True)
        marker.write_text("running\n")
    stages = _Stages()
    try:
        src = stages.run("synthesize", make_source, cfg)
        rec = record if record is not None else stages.run("synthesize", synthesize, cfg)
        if write:
            cfg.dump(out / "config.yaml")
            rec.to_csv(out / "cauchy.csv")
        w, p_comp, stats, op = reconstruct_from_record(cfg, rec, stages)
        space = op.grid.space
        X, Y = space.mesh()
        p_true = src(X, Y)
        metrics = stages.run("reconstruct", compute_metrics, p_true, p_comp)
    except StageError as exc:
        if write:
            marker.write_text(f"failed in stage {exc.stage}: {exc.cause}\n")
        raise

    status = 0 if stats.converged else 4
    solver = {k: v for k, v in stats.as_dict().items() if k not in ("wall_time", "factor_time")}
    report = {
        "format": REPORT_FORMAT,
        "status": "ok" if status == 0 else "not_converged",
        "test": cfg.test if cfg.source is None else None,
        "source": src.describe(),
        "delta": cfg.delta,
        "seed": cfg.seed,
        "metrics": {k: _jsonable(v) for k, v in metrics.items()},
        "solver": solver,
        "config": cfg.to_dict(),
    }
    if write:
        try:
            np.save(out / "w.npy", w)
            write_grid_csv(out / "p_true.csv", p_true, space)
            write_grid_csv(out / "p_comp.csv", p_comp, space)
            write_profile_csv(out / "profile_y0.csv", {"p_true": line_profile(p_true, space, 0.0),
                                                       "p_comp": line_profile(p_comp, space, 0.0)})
            report["image"] = write_pgm(out / "p_comp.pgm", p_comp)
            report["image"]["file"] = "p_comp.pgm"
            report["artifacts"] = list(ARTIFACTS)
            if cfg.write_matrix:
                export_coo(op.M, out / "normal_matrix.coo")
                report["artifacts"].append("normal_matrix.coo")
            (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
            (out / "timing.json").write_text(json.dumps({"stages": stages.timing, "solver_wall_time":
                                                         stats.wall_time, "factor_time": stats.factor_time},
                                                        indent=2, sort_keys=True) + "\n")
        except OSError as exc:
            marker.write_text(f"failed in stage artifacts: {exc}\n")
            raise StageError("artifacts", exc) from exc
        marker.unlink()
    return RunResult(report, p_comp, p_true, w, rec, dict(stages.timing), status)


SWEEP_FIELDS = ("run", "status", "test", "delta", "seed", "eps1", "eps2", "diff_eps", "mode",
                "err_min_rel", "err_max_rel", "l2_rel", "iterations", "residual_rel", "wall_time")
SUMMARY_METRICS = ("err_min_rel", "err_max_rel", "l2_rel", "iterations", "wall_time")


def _sweep_group(cfg: RunConfig):
    d = cfg.to_dict()
    for k in ("seed", "output_dir"):
        d.pop(k)
    return json.dumps(d, sort_keys=True, default=str)


def run_sweep(cfgs: list[RunConfig], out_dir, workers: int = 1) -> tuple[list[dict], list[dict]]:
    """Run every config (in ``out_dir/run_XXX``), write ``runs.csv`` and ``summary.csv``.

    Runs that differ only in ``seed`` are aggregated with mean and sample
    standard deviation.  Failed runs are recorded and the sweep continues.
    """
    if not cfgs:
        raise ConfigError("sweep needs at least one configuration")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfgs = [c.replace(output_dir=str(out / f"run_{i:03d}")) for i, c in enumerate(cfgs)]

    def one(i, cfg):
        row = {"run": i, "test": cfg.test, "delta": cfg.delta, "seed": cfg.seed, "eps1": cfg.eps1,
               "eps2": cfg.eps2, "diff_eps": cfg.diff_eps, "mode": cfg.mode}
        t0 = time.perf_counter()
        try:
            res = run_pipeline(cfg)
        except WavesrcError as exc:
            log.error("run %d failed: %s", i, exc)
            row["status"] = f"failed: {exc}"
            return row
        m = res.report["metrics"]
        row.update(status=res.report["status"], err_min_rel=m["err_min_rel"], err_max_rel=m["err_max_rel"],
                   l2_rel=m["l2_rel"], iterations=res.report["solver"]["iterations"],
                   residual_rel=res.report["solver"]["residual_rel"], wall_time=time.perf_counter() - t0)
        return row

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda a: one(*a), enumerate(cfgs)))
    else:
        rows = [one(i, c) for i, c in enumerate(cfgs)]

    with open(out / "runs.csv", "w", newline="") as fh:
        wr = csv.DictWriter(fh, SWEEP_FIELDS, lineterminator="\n")
        wr.writeheader()
        wr.writerows(rows)

    groups: dict[str, list[int]] = {}
    for i, c in enumerate(cfgs):
        groups.setdefault(_sweep_group(c), []).append(i)
    summary = []
    for idx in groups.values():
        ok = [rows[i] for i in idx if rows[i]["status"] in ("ok", "not_converged")]
        first = cfgs[idx[0]]
        s = {"test": first.test, "delta": first.delta, "eps1": first.eps1, "eps2": first.eps2,
             "diff_eps": first.diff_eps, "mode": first.mode, "runs": len(idx), "failed": len(idx) - len(ok)}
        for k in SUMMARY_METRICS:
            vals = np.array([r[k] for r in ok], float)
            s[f"{k}_mean"] = float(vals.mean()) if len(vals) else float("nan")
            s[f"{k}_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else float("nan")
        summary.append(s)
    with open(out / "summary.csv", "w", newline="") as fh:
        wr = csv.DictWriter(fh, list(summary[0]), lineterminator="\n")
        wr.writeheader()
        wr.writerows(summary)
    return rows, summary
