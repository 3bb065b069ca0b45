"""Acceptance suite: one test per criterion, each printing a PASS line
with its measured values (run with `pytest tests/test_acceptance.py -s`
to see them). Criteria 5-7 run the real experiment harness on the
synthetic two-phase benchmark from conftest; criterion 9 needs a real
NGSIM extract and is skipped unless WAVEFILL_NGSIM_CSV is set.
"""
import os
import time

import numpy as np
import pytest

from wavefill import (
    GridSpec,
    SolverConfig,
    TrajectoryPoint,
    admm_step,
    cell_index,
    initial_state,
    replay_repetition,
    run_rtse_sweep,
    run_tse_sweep,
    run_wave_sensitivity,
    soft_threshold,
    solve,
    truncated_svt,
)
from wavefill.corruption import CorruptionKind, CorruptionRecord, score_detection
from conftest import RTSE_SOLVER, TSE_SOLVER, observation_mask, random_low_rank
from test_solver import as_state_matrix, scripted_step, truncated_objective

# Criterion 2/3 oracle configuration: the criteria pin truncation 3/60,
# mu=1.05, rho_max=1e2; lambda and rho0 are calibrated (see README).
ORACLE_CFG = SolverConfig(
    truncation_fraction=3 / 60, lambda_=0.4, rho0=1e-4, rho_growth=1.05, rho_max=1e2
)


def report(criterion, detail):
    print(f"\n[PASS] criterion {criterion}: {detail}")


def oracle_instance(seed=42, corrupted=False):
    truth = random_low_rank((60, 80), 3, seed=seed)
    observed = observation_mask((60, 80), 0.3, seed=seed + 1)
    values = truth.copy()
    records = []
    if corrupted:
        rng = np.random.default_rng(seed + 2)
        cells = np.argwhere(observed)
        picks = cells[rng.choice(len(cells), size=20, replace=False)]
        signs = rng.choice([-1.0, 1.0], size=20)
        for (i, j), sgn in zip(picks, signs):
            values[i, j] += sgn * 50.0
            kind = CorruptionKind.TYPE1 if sgn < 0 else CorruptionKind.TYPE2
            records.append(
                CorruptionRecord(
                    cell=(int(i), int(j)),
                    kind=kind,
                    original_kmh=float(truth[i, j]),
                    tampered_kmh=float(values[i, j]),
                )
            )
    return truth, values, observed, records


def test_criterion_1_operator_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    # truncated SVT minimizes the truncated-nuclear-norm proximal objective
    for _ in range(50):
        Z = rng.standard_normal((10, 8)) * rng.uniform(0.5, 5.0)
        r = int(rng.integers(0, 8))
        rho = float(rng.uniform(0.2, 5.0))
        X = truncated_svt(Z, r, 1.0 / rho)
        f0 = truncated_objective(X, Z, r, rho)
        for _ in range(200):
            P = rng.standard_normal(Z.shape)
            P *= 1e-3 / np.linalg.norm(P)
            assert f0 <= truncated_objective(X + P, Z, r, rho) + 1e-9
    # soft threshold equals elementwise brute force exactly
    H = rng.standard_normal((12, 9)) * 10
    tau = 2.5
    out = soft_threshold(H, tau)
    for i in range(H.shape[0]):
        for j in range(H.shape[1]):
            assert out[i, j] == np.sign(H[i, j]) * max(abs(H[i, j]) - tau, 0.0)
    # one admm_step on a 3x3 instance matches the scripted update formulas
    vals = rng.uniform(10, 90, size=(3, 3))
    observed = np.array([[True, False, True], [True, True, False], [False, True, True]])
    M = as_state_matrix(vals, observed)
    cfg = SolverConfig(truncation_fraction=1 / 3, lambda_=0.4, rho0=0.05)
    state = initial_state(M, cfg)
    stepped = admm_step(state, M, cfg)
    L1, S1, W1, Y1 = scripted_step(
        np.where(observed, vals, 0.0), observed,
        state.L_mat, state.S_mat, state.W_mat, state.Y_mat,
        state.rho, cfg.lambda_, cfg.kept_rank((3, 3)),
    )
    for got, want in zip((stepped.L_mat, stepped.S_mat, stepped.W_mat, stepped.Y_mat),
                         (L1, S1, W1, Y1)):
        assert np.allclose(got, want, atol=1e-12, rtol=0)
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    report(1, f"SVT/shrinkage/step oracles agree ({elapsed:.2f}s)")


def test_criterion_2_exact_low_rank_recovery():
    truth, values, observed, _ = oracle_instance(seed=42)
    M = as_state_matrix(values, observed)
    t0 = time.perf_counter()
    res = solve(M, ORACLE_CFG)
    elapsed = time.perf_counter() - t0
    rel = np.linalg.norm(res.L_hat - truth) / np.linalg.norm(truth)
    assert rel < 1e-2
    assert res.iterations <= 500
    assert elapsed < 1.0
    report(2, f"relative error {rel:.2e} in {res.iterations} iterations ({elapsed:.2f}s)")


def test_criterion_3_robust_recovery_and_detection():
    truth, values, observed, records = oracle_instance(seed=42, corrupted=True)
    M = as_state_matrix(values, observed)
    res = solve(M, ORACLE_CFG)
    rel = np.linalg.norm(res.L_hat - truth) / np.linalg.norm(truth)
    score = score_detection(res.S_hat, records, detect_threshold_kmh=10.0)
    assert rel < 5e-2
    assert score.recall >= 0.9
    assert score.sign_agreement == 1.0
    report(3, f"relative error {rel:.2e}, recall {score.recall:.2f}, "
              f"sign agreement {score.sign_agreement:.2f}")


def test_criterion_4_grid_geometry_golden_values():
    rect = GridSpec(621.0, 2400.0, ds_m=3.0, dt_s=5.0)
    assert rect.shape == (207, 480)
    obl = GridSpec(621.0, 2400.0, ds_m=3.0, dt_s=5.0, wave_speed_kmh=-18.0)
    assert obl.shape == (207, 505)
    idx = cell_index(TrajectoryPoint("v", time_s=100.0, position_m=300.0, speed_kmh=1.0), obl)
    assert idx == (100, 32)
    report(4, f"rect {rect.shape}, oblique {obl.shape}, index {idx}")


def test_criterion_5_oblique_advantage(tse_data, tse_oblique_grid):
    ts, _ = tse_data
    t0 = time.perf_counter()
    rep = run_tse_sweep(
        ts,
        [tse_oblique_grid, tse_oblique_grid.rectangular()],
        TSE_SOLVER,
        rates=[0.05],
        reps=10,
        master_seed=2023,
    )
    elapsed = time.perf_counter() - t0
    by_grid = {s.scenario["grid"]: s.rmse_mean for s in rep.scenarios}
    gap = (by_grid["rectangular"] - by_grid["oblique"]) / by_grid["rectangular"]
    assert by_grid["oblique"] < by_grid["rectangular"]
    assert gap >= 0.25
    assert elapsed < 60.0
    report(5, f"oblique {by_grid['oblique']:.2f} vs rectangular "
              f"{by_grid['rectangular']:.2f} km/h RMSE, gap {gap:.1%} ({elapsed:.0f}s)")


def test_criterion_6_wave_speed_sensitivity(tse_data, tse_oblique_grid):
    ts, _ = tse_data
    speeds = [-10.0, -12.0, -14.0, -16.0, -18.0, -20.0, -22.0, -24.0]
    rep = run_wave_sensitivity(
        ts, tse_oblique_grid, TSE_SOLVER, speeds, reps=10, master_seed=2023, rate=0.05
    )
    rmse = {s.scenario["wave_speed_kmh"]: s.rmse_mean for s in rep.scenarios}
    argmin = min(rmse, key=rmse.get)
    assert argmin in (-16.0, -18.0, -20.0)
    platform = [rmse[w] for w in speeds if abs(w) >= 16]
    variation = (max(platform) - min(platform)) / min(platform)
    assert variation < 0.15
    report(6, f"argmin {argmin:+.0f} km/h, platform variation {variation:.1%}")


def test_criterion_7_corruption_level_robustness(rtse_data, rtse_oblique_grid):
    ts, _ = rtse_data
    levels = [0, 10, 20, 30, 40, 50]
    rep = run_rtse_sweep(
        ts, rtse_oblique_grid, RTSE_SOLVER,
        rate=0.10, corruption_levels=levels, reps=3, master_seed=2023,
    )
    rmse = {s.scenario["corruption_per_type"]: s.rmse_mean for s in rep.scenarios}
    ratio = rmse[50] / rmse[0]
    assert ratio <= 1.20
    report(7, f"RMSE {rmse[0]:.2f} -> {rmse[50]:.2f} km/h across levels (ratio {ratio:.3f})")


def test_criterion_8_complexity_contract():
    # per-iteration cost linear in T at fixed L (within 2x), and an
    # NGSIM-sized solve finishing within the sanity budget
    cfg = SolverConfig(truncation_fraction=0.05, lambda_=0.4, epsilon=1e-300, max_iters=15)
    per_iter = {}
    for T in (250, 500, 1000):
        vals = random_low_rank((100, T), 5, seed=T)
        observed = observation_mask((100, T), 0.3, seed=T + 1)
        M = as_state_matrix(vals, observed)
        solve(M, cfg)  # warm up caches/threads
        t0 = time.perf_counter()
        res = solve(M, cfg)
        per_iter[T] = (time.perf_counter() - t0) / res.iterations
    normalized = {T: v / T for T, v in per_iter.items()}
    spread = max(normalized.values()) / min(normalized.values())
    assert spread <= 2.0

    vals = random_low_rank((207, 505), 8, seed=9)
    observed = observation_mask((207, 505), 0.12, seed=10)
    M = as_state_matrix(vals, observed)
    t0 = time.perf_counter()
    solve(M, SolverConfig(truncation_fraction=0.3, lambda_=0.04))
    elapsed = time.perf_counter() - t0
    assert elapsed <= 5.0
    report(8, f"per-iteration spread vs linear {spread:.2f}x; "
              f"207x505 solve {elapsed:.2f}s")


NGSIM_ENV = "WAVEFILL_NGSIM_CSV"


@pytest.mark.skipif(NGSIM_ENV not in os.environ, reason=f"set {NGSIM_ENV} to run")
def test_criterion_9_ngsim_reproduction():
    # expects a canonical-unit CSV extract (vehicle_id,time_s,position_m,
    # speed_kmh) of US-101 lane 2 covering 621 m x 2400 s
    from wavefill import load_trajectories

    ts = load_trajectories(
        os.environ[NGSIM_ENV],
        {"vehicle_id": "vehicle_id", "time": "time_s",
         "position": "position_m", "speed": "speed_kmh"},
        segment_length_m=621.0,
        window_length_s=2400.0,
    )
    grid = GridSpec(621.0, 2400.0, ds_m=3.0, dt_s=5.0, wave_speed_kmh=-18.0)
    cfg = SolverConfig(truncation_fraction=0.3, lambda_=0.04)
    rep = run_tse_sweep(ts, [grid], cfg, rates=[0.05], reps=20, master_seed=2023)
    rmse = rep.scenarios[0].rmse_mean
    assert abs(rmse - 7.56) <= 1.5
    report(9, f"NGSIM CV-5% mean RMSE {rmse:.2f} km/h")


def test_criterion_10_determinism_replay(rtse_data, rtse_oblique_grid):
    ts, _ = rtse_data
    rep = run_rtse_sweep(
        ts, rtse_oblique_grid, RTSE_SOLVER,
        rate=0.10, corruption_levels=[30], reps=2, master_seed=31,
    )
    for r in rep.repetitions:
        assert replay_repetition(ts, r) == r.metrics
    report(10, f"replayed {len(rep.repetitions)} repetitions bit-identically")
