"""Acceptance criteria, each at its stated tolerance; one PASS/FAIL line per criterion."""
import itertools
import time

import numpy as np
import pytest

from wavesrc.assembly import BoundaryData, assemble_penalties, assemble_system, assemble_wave_operator, normal_matrix
from wavesrc.config import RunConfig
from wavesrc.errors import ConfigError
from wavesrc.excitation import DecayingExcitation, build_h_tilde
from wavesrc.forward import _interp, discrete_utt, forward_solve
from wavesrc.grid import SpaceTimeGrid, SpatialGrid2D, TimeGrid, delinearize, linearize
from wavesrc.pipeline import clear_operator_cache, normal_rhs, run_pipeline, run_sweep, synthesize
from wavesrc.regdiff import build_integration_matrix, differentiate_record, second_time_derivative
from wavesrc.solve import CgConfig, cg_solve, dense_solve
from wavesrc.sources import SourceSpec

SEEDS = (100, 101, 102, 103, 104)
DELTAS = (0.0, 0.02, 0.05, 0.10)


class DeskRuns:
    """Desk-profile runs keyed by ``(test, delta, seed)``, computed on demand and shared."""

    def __init__(self):
        self.metrics = {}
        self.elapsed = 0.0

    def get(self, test, delta, seed):
        key = (test, delta, seed)
        if key not in self.metrics:
            t0 = time.perf_counter()
            res = run_pipeline(RunConfig(test=test, delta=delta, seed=seed), write=False)
            self.elapsed += time.perf_counter() - t0
            assert res.status == 0
            self.metrics[key] = res.report["metrics"]
        return self.metrics[key]


@pytest.fixture(scope="module")
def desk():
    clear_operator_cache()
    return DeskRuns()


@pytest.mark.slow
def test_c1_banded_table_reproduction(desk, acceptance):
    bands = [(1, 0.02, 0.10), (1, 0.10, 0.30), (2, 0.02, 0.12)]
    ok, parts = True, []
    for test, delta, bound in bands:
        ms = [desk.get(test, delta, s) for s in SEEDS]
        e_min = float(np.median([m["err_min_rel"] for m in ms]))
        e_max = float(np.median([m["err_max_rel"] for m in ms]))
        ok &= e_min <= bound and e_max <= bound
        parts.append(f"test {test} delta {delta:.0%}: min {e_min:.1%} max {e_max:.1%} (<= {bound:.0%})")
    ok &= desk.elapsed <= 15 * 60
    parts.append(f"runtime {desk.elapsed:.0f}s (<= 900s)")
    assert acceptance("C1 banded reproduction, median of 5 seeds, N=45 n_t=60", ok, "; ".join(parts))


@pytest.mark.slow
def test_c2_noise_monotonicity(desk, acceptance):
    ok, parts = True, []
    for test in (1, 2):
        l2 = np.array([[desk.get(test, d, s)["l2_rel"] for s in SEEDS] for d in DELTAS])
        mean, sd = l2.mean(axis=1), l2.std(axis=1, ddof=1)
        drops = [k for k in range(len(DELTAS) - 1) if mean[k + 1] < mean[k]]
        within = all(mean[k] - mean[k + 1] <= max(sd[k], sd[k + 1]) for k in drops)
        ok &= len(drops) <= 1 and within
        parts.append(f"test {test}: " + " ".join(f"{m:.4f}" for m in mean) + f" ({len(drops)} drop(s))")
    assert acceptance("C2 mean L2 error nondecreasing in delta", ok, "; ".join(parts))


def test_c3_cg_matches_dense_cholesky(acceptance):
    t0 = time.perf_counter()
    cfg = RunConfig(inverse_n=6, n_t=8, fine_n=31, delta=0.02, seed=3, solver="cg")
    rec = synthesize(cfg)
    op, rhs = normal_rhs(cfg, *differentiate_record(rec, cfg.diff_eps, form=cfg.diff_form, lag=cfg.diff_lag))
    x_dense = dense_solve(op.M, rhs)
    x_cg, st = cg_solve(op.M, rhs, CgConfig(1e-12, 100_000))
    rel = np.linalg.norm(x_cg - x_dense) / np.linalg.norm(x_dense)
    elapsed = time.perf_counter() - t0
    ok = st.converged and rel <= 1e-8 and elapsed <= 5.0
    assert acceptance("C3 CG vs dense Cholesky, N=6 n_t=8", ok,
                      f"relative difference {rel:.2e} (<= 1e-8) after {st.iterations} iterations; "
                      f"{elapsed:.2f}s (<= 5s)")


def operator_residuals(inverse_sizes, fine_dx=0.005, half_width=1.6):
    """Relative residual of the discrete operator on ``w* = u_tt / h~`` for each inverse grid.

    ``u_tt`` comes from a fine forward solve (sub-stepped to stay stable) and is
    interpolated to the inverse nodes.  The residual is measured against the
    principal part ``c D_tt w*`` because the right-hand side vanishes here.
    """
    h = DecayingExcitation()
    src = SourceSpec.for_test(3)
    nf = int(round(2 * half_width / fine_dx)) + 1
    out = []
    for n, nt in inverse_sizes:
        inv = SpaceTimeGrid(SpatialGrid2D(n), TimeGrid(1.0, nt))
        fine = SpaceTimeGrid(SpatialGrid2D(nf, -half_width, half_width, -half_width, half_width), TimeGrid(1.0, nt))
        k = int(np.ceil(inv.time.dt * np.sqrt(2) / fine.space.dx / 0.9))
        u = forward_solve(src, h, fine, substeps=k)
        utt = discrete_utt(u, src, h)
        X, Y = inv.space.mesh()
        aux = build_h_tilde(h, inv)
        w = _interp(utt, fine.space, X.ravel(), Y.ravel()).reshape(inv.shape) / aux.value
        L, rhs, _ = assemble_wave_operator(inv, aux, "full")
        resid = L @ w.ravel() - rhs
        dtt = (w[1:-1, 1:-1, 2:] - 2 * w[1:-1, 1:-1, 1:-1] + w[1:-1, 1:-1, :-2]) / inv.time.dt**2
        out.append((np.linalg.norm(resid) / np.linalg.norm(dtt),
                    np.linalg.norm(resid) / np.linalg.norm(L @ w.ravel())))
    return out


@pytest.mark.slow
def test_c4_operator_consistency(acceptance):
    (coarse, coarse_lit), (fine, fine_lit) = operator_residuals([(21, 20), (41, 40)])
    factor = coarse / fine
    ok = factor >= 1.5
    assert acceptance("C4 operator consistency under halving of (dx, dt)", ok,
                      f"relative residual {coarse:.4f} -> {fine:.4f}, factor {factor:.2f} (>= 1.5); "
                      f"ratio to |L w*| {coarse_lit:.3f} -> {fine_lit:.3f} (the data term is zero)")


def test_c5_forward_order_and_cfl(acceptance):
    h = DecayingExcitation()
    src = lambda x, y: np.exp(-40 * (x**2 + y**2))  # noqa: E731
    fields = [forward_solve(src, h, SpaceTimeGrid(SpatialGrid2D(40 * r + 1, -1, 1, -1, 1), TimeGrid(1.0, 30 * r)))
              .values for r in (1, 2, 4)]
    e1 = np.abs(fields[0] - fields[1][::2, ::2, ::2]).max()
    e2 = np.abs(fields[1] - fields[2][::2, ::2, ::2]).max()
    order = np.log2(e1 / e2)
    try:
        forward_solve(src, h, SpaceTimeGrid(SpatialGrid2D(81, -1, 1, -1, 1), TimeGrid(1.0, 30)))
        rejected = False
    except ConfigError:
        rejected = True
    ok = order >= 1.8 and rejected
    assert acceptance("C5 forward solver order and CFL rejection", ok,
                      f"observed order {order:.2f} (>= 1.8); CFL violation rejected: {rejected}")


def test_c6_tikhonov_differentiation(acceptance):
    tg = TimeGrid(1.0, 120)
    y = second_time_derivative(tg.t**2, tg.dt, 1e-5)
    lo, hi = int(0.1 * tg.n_t), int(0.9 * tg.n_t)
    worst = float(np.abs(y[lo:hi] - 2).max() / 2)
    cfg = RunConfig(inverse_n=11)
    rec = synthesize(cfg)
    A = build_integration_matrix(cfg.n_t)
    dt = rec.grid.time.dt
    traces = np.vstack([rec.F, rec.G])
    residuals = []
    for eps in (1e-8, 1e-10, 1e-12):
        fit = second_time_derivative(traces, dt, eps)
        residuals.append(float(np.linalg.norm(dt**2 * fit @ A.T - traces) / np.linalg.norm(traces)))
    ok = worst <= 0.05 and residuals[-1] <= 1e-6
    assert acceptance("C6 Tikhonov second derivative", ok,
                      f"t^2 on n_t=120, eps=1e-5: max relative error {worst:.2e} on interior 80% (<= 5%); "
                      "consistency residual " + " ".join(f"{r:.1e}" for r in residuals) + " (<= 1e-6)")


def test_c7_structural_invariants(acceptance, rng):
    g = SpaceTimeGrid(SpatialGrid2D(6), TimeGrid(1.0, 6))
    aux = build_h_tilde(DecayingExcitation(), g)
    nb = len(g.space.boundary)
    system = assemble_system(g, aux, BoundaryData(np.zeros((nb, 6)), np.zeros((nb, 6))), mode="full")
    penalties = assemble_penalties(g)
    eps1 = 3e-3
    M = normal_matrix(system.C, penalties, eps1, 1.5e-4)
    symmetric = (M != M.T).nnz == 0
    xs = rng.normal(size=(100, g.size))
    coercive = all(x @ (M @ x) >= eps1 * (x @ x) for x in xs)
    small = SpaceTimeGrid(SpatialGrid2D(5), TimeGrid(1.0, 4))
    triples = list(itertools.product(range(1, 6), range(1, 6), range(1, 5)))
    idx = [linearize(m, n, j, small) for m, n, j in triples]
    bijective = sorted(idx) == list(range(1, 101)) and all(delinearize(i, small) == t for i, t in zip(idx, triples))
    ones = np.ones(g.size)
    blocks = [system.block(name)[0] for name in ("initial_velocity", "neumann")] + list(penalties)
    annihilated = all(not np.any(B @ ones) for B in blocks)
    ok = symmetric and coercive and bijective and annihilated
    assert acceptance("C7 structural invariants", ok,
                      f"M symmetric exactly: {symmetric}; x^T M x >= eps1 |x|^2 on 100 vectors: {coercive}; "
                      f"index bijection on 5x5x4: {bijective}; derivative blocks annihilate constants: {annihilated}")


@pytest.mark.slow
def test_c8_determinism(acceptance, tmp_path):
    cfg = RunConfig(test=2, delta=0.05, seed=104, output_dir=str(tmp_path / "desk"))
    report = tmp_path / "desk" / "report.json"
    run_pipeline(cfg)
    first = report.read_bytes()
    clear_operator_cache()  # fresh assembly and factorisation
    run_pipeline(cfg)
    desk_same = report.read_bytes() == first

    tiny = RunConfig(inverse_n=6, n_t=8, fine_n=31, delta=0.05)
    cfgs = [tiny.replace(seed=s, solver=solver) for s in range(4) for solver in ("direct", "cg")]
    run_sweep(cfgs, tmp_path / "sweep", workers=1)
    serial = [(tmp_path / "sweep" / f"run_{i:03d}" / "report.json").read_bytes() for i in range(len(cfgs))]
    run_sweep(cfgs, tmp_path / "sweep", workers=4)
    parallel = [(tmp_path / "sweep" / f"run_{i:03d}" / "report.json").read_bytes() for i in range(len(cfgs))]
    sweep_same = serial == parallel
    ok = desk_same and sweep_same
    assert acceptance("C8 determinism", ok,
                      f"desk report byte-identical after re-factorisation: {desk_same}; "
                      f"{len(cfgs)} sweep reports identical serial vs 4 workers: {sweep_same}")
