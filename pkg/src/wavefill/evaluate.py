"""Metrics and the experiment harness: penetration, corruption, wave
sensitivity, and ablation sweeps with reproducible per-repetition seeds.

Every repetition derives its seeds from the master seed via the
documented splitmix chain, records them, and can be replayed alone;
aggregation is a deterministic reduction ordered by (scenario,
repetition index). Estimates from oblique grids are evaluated on the
rectangular companion grid by default so grid variants stay comparable;
"native" evaluation against same-grid truth is available and the choice
is recorded in the report.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .corruption import CorruptionPlan, DetectionScore, inject, score_detection
from .errors import EmptyDatasetError, ParameterError
from .grid import GridSpec, StateMatrix, build_matrix, ground_truth_matrix, rasterize
from .seeds import derive_seed, encode_fraction
from .solver import RankSurrogate, SolverConfig, solve
from .trajectory import TrajectorySet, sample_penetration

SAMPLE_STREAM = 1
CORRUPTION_STREAM = 2

EVAL_RECTANGULAR = "rectangular"
EVAL_NATIVE = "native"


@dataclass(frozen=True)
class MetricPair:
    rmse_kmh: float
    mae_kmh: float
    n_cells: int

    def __post_init__(self):
        if self.n_cells <= 0:
            raise ParameterError("n_cells must be positive")
        if self.rmse_kmh < 0 or self.mae_kmh < 0:
            raise ParameterError("metrics must be nonnegative")
        if self.mae_kmh > self.rmse_kmh * (1 + 1e-12) + 1e-12:
            raise ParameterError("mae cannot exceed rmse")


def compute_metrics(est: StateMatrix, truth: StateMatrix) -> MetricPair:
    """RMSE/MAE over cells where the ground truth is observed."""
    if est.grid != truth.grid:
        raise ParameterError("estimate and truth must share a GridSpec")
    eval_mask = truth.observed
    n = int(eval_mask.sum())
    if n == 0:
        raise EmptyDatasetError("empty evaluation set: truth has no observed cells")
    est_vals = est.values[eval_mask]
    if not np.all(np.isfinite(est_vals)):
        raise ParameterError("estimate has non-finite values on the evaluation set")
    diff = est_vals - truth.values[eval_mask]
    return MetricPair(
        rmse_kmh=float(np.sqrt(np.mean(diff**2))),
        mae_kmh=float(np.mean(np.abs(diff))),
        n_cells=n,
    )


@dataclass(frozen=True)
class RepetitionResult:
    scenario: dict
    rep: int
    seeds: dict
    metrics: MetricPair
    detection: DetectionScore | None
    iterations: int
    converged: bool
    wall_time_s: float


@dataclass(frozen=True)
class ScenarioSummary:
    scenario: dict
    n_reps: int
    rmse_mean: float
    rmse_std: float
    mae_mean: float
    mae_std: float
    wall_time_mean: float
    wall_time_std: float
    precision_mean: float | None = None
    recall_mean: float | None = None
    sign_agreement_mean: float | None = None


@dataclass(frozen=True)
class ExperimentReport:
    mode: str
    master_seed: int
    eval_mode: str
    scenarios: list[ScenarioSummary]
    repetitions: list[RepetitionResult]
    config_echo: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "master_seed": self.master_seed,
            "eval_mode": self.eval_mode,
            "config": self.config_echo,
            "scenarios": [asdict(s) for s in self.scenarios],
            "repetitions": [asdict(r) for r in self.repetitions],
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path) -> None:
        """One row per scenario, Table-style columns."""
        scen_keys: list[str] = []
        for s in self.scenarios:
            for k in s.scenario:
                if k not in scen_keys:
                    scen_keys.append(k)
        has_detection = any(s.recall_mean is not None for s in self.scenarios)
        cols = scen_keys + ["n_reps", "rmse_mean", "rmse_std", "mae_mean", "mae_std"]
        if has_detection:
            cols += ["precision_mean", "recall_mean", "sign_agreement_mean"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for s in self.scenarios:
                row = [s.scenario.get(k, "") for k in scen_keys]
                row += [s.n_reps, repr(s.rmse_mean), repr(s.rmse_std), repr(s.mae_mean), repr(s.mae_std)]
                if has_detection:
                    row += [
                        "" if s.precision_mean is None else repr(s.precision_mean),
                        "" if s.recall_mean is None else repr(s.recall_mean),
                        "" if s.sign_agreement_mean is None else repr(s.sign_agreement_mean),
                    ]
                writer.writerow(row)


def _mean_std(xs: list[float]) -> tuple[float, float]:
    if len(xs) == 1:
        return float(xs[0]), 0.0
    arr = np.asarray(xs, dtype=float)
    return float(arr.mean()), float(arr.std(ddof=1))


def summarize(scenario: dict, reps: list[RepetitionResult]) -> ScenarioSummary:
    rmse_m, rmse_s = _mean_std([r.metrics.rmse_kmh for r in reps])
    mae_m, mae_s = _mean_std([r.metrics.mae_kmh for r in reps])
    wall_m, wall_s = _mean_std([r.wall_time_s for r in reps])
    detections = [r.detection for r in reps if r.detection is not None]
    kwargs = {}
    if detections:
        kwargs["precision_mean"] = float(np.mean([d.precision for d in detections]))
        kwargs["recall_mean"] = float(np.mean([d.recall for d in detections]))
        kwargs["sign_agreement_mean"] = float(np.mean([d.sign_agreement for d in detections]))
    return ScenarioSummary(
        scenario=scenario,
        n_reps=len(reps),
        rmse_mean=rmse_m,
        rmse_std=rmse_s,
        mae_mean=mae_m,
        mae_std=mae_s,
        wall_time_mean=wall_m,
        wall_time_std=wall_s,
        **kwargs,
    )


def _grid_label(g: GridSpec) -> str:
    return "oblique" if g.is_oblique else "rectangular"


def _grid_dict(g: GridSpec) -> dict:
    return {
        "segment_length_m": g.segment_length_m,
        "window_length_s": g.window_length_s,
        "ds_m": g.ds_m,
        "dt_s": g.dt_s,
        "wave_speed_kmh": g.wave_speed_kmh,
    }


def _solver_dict(cfg: SolverConfig) -> dict:
    return asdict(cfg)


def run_repetition(
    ts: TrajectorySet,
    est_grid: GridSpec,
    solver_cfg: SolverConfig,
    rate: float,
    sample_seed: int,
    truth: StateMatrix,
    eval_grid: GridSpec,
    corruption_counts: tuple[int, int] = (0, 0),
    corruption_seed: int = 0,
    detect_threshold_kmh: float = 10.0,
) -> tuple[MetricPair, DetectionScore | None, int, bool, float]:
    """Sample -> bin -> (inject) -> solve -> (rasterize) -> score one repetition."""
    sample = sample_penetration(ts, rate, sample_seed) if rate < 1.0 else ts
    M = build_matrix(sample, est_grid)
    records = []
    if any(c > 0 for c in corruption_counts):
        plan = CorruptionPlan(
            count_type1=corruption_counts[0],
            count_type2=corruption_counts[1],
            seed=corruption_seed,
        )
        M, records = inject(M, plan)
    result = solve(M, solver_cfg)
    est = M.filled_with(result.L_hat)
    if est.grid != eval_grid:
        est = rasterize(est, eval_grid)
    metrics = compute_metrics(est, truth)
    detection = score_detection(result.S_hat, records, detect_threshold_kmh) if records else None
    return metrics, detection, result.iterations, result.converged, result.wall_time_s


def replay_repetition(ts: TrajectorySet, rep: RepetitionResult) -> MetricPair:
    """Recompute one logged repetition from its recorded seeds and scenario."""
    spec = rep.seeds["replay"]
    est_grid = GridSpec(**spec["est_grid"])
    eval_grid = GridSpec(**spec["eval_grid"])
    solver_cfg = SolverConfig(**spec["solver"])
    truth = ground_truth_matrix(ts, eval_grid)
    metrics, _, _, _, _ = run_repetition(
        ts,
        est_grid,
        solver_cfg,
        spec["rate"],
        spec["sample_seed"],
        truth,
        eval_grid,
        corruption_counts=tuple(spec["corruption_counts"]),
        corruption_seed=spec["corruption_seed"],
        detect_threshold_kmh=spec["detect_threshold_kmh"],
    )
    return metrics


def _make_rep_result(
    scenario: dict,
    rep: int,
    est_grid: GridSpec,
    eval_grid: GridSpec,
    solver_cfg: SolverConfig,
    rate: float,
    sample_seed: int,
    corruption_counts: tuple[int, int],
    corruption_seed: int,
    detect_threshold_kmh: float,
    outcome: tuple,
) -> RepetitionResult:
    metrics, detection, iterations, converged, wall = outcome
    seeds = {
        "sample_seed": sample_seed,
        "corruption_seed": corruption_seed,
        "replay": {
            "est_grid": _grid_dict(est_grid),
            "eval_grid": _grid_dict(eval_grid),
            "solver": _solver_dict(solver_cfg),
            "rate": rate,
            "sample_seed": sample_seed,
            "corruption_counts": list(corruption_counts),
            "corruption_seed": corruption_seed,
            "detect_threshold_kmh": detect_threshold_kmh,
        },
    }
    return RepetitionResult(
        scenario=scenario,
        rep=rep,
        seeds=seeds,
        metrics=metrics,
        detection=detection,
        iterations=iterations,
        converged=converged,
        wall_time_s=wall,
    )


def _eval_grid_for(est_grid: GridSpec, eval_mode: str) -> GridSpec:
    if eval_mode == EVAL_NATIVE:
        return est_grid
    if eval_mode == EVAL_RECTANGULAR:
        return est_grid.rectangular()
    raise ParameterError(f"unknown eval_mode {eval_mode!r}")


def _map_reps(fn, n_reps: int, threads: int) -> list:
    """Run fn(rep) for each repetition, optionally on a thread pool.

    Results come back ordered by repetition index either way, so the
    aggregate is independent of execution order (the SVD work releases
    the GIL, which is where threads buy time).
    """
    if threads <= 1 or n_reps == 1:
        return [fn(rep) for rep in range(n_reps)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_reps)))


class _TruthCache:
    def __init__(self, ts: TrajectorySet):
        self.ts = ts
        self._cache: dict[GridSpec, StateMatrix] = {}

    def get(self, g: GridSpec) -> StateMatrix:
        if g not in self._cache:
            self._cache[g] = ground_truth_matrix(self.ts, g)
        return self._cache[g]


def run_tse_sweep(
    ts: TrajectorySet,
    grids: list[GridSpec],
    cfg: SolverConfig,
    rates: list[float],
    reps: int,
    master_seed: int,
    eval_mode: str = EVAL_RECTANGULAR,
    threads: int = 1,
) -> ExperimentReport:
    """Penetration sweep over one or more grid variants.

    The penetration sample for (rate, rep) is shared across grids so
    grid comparisons are paired.
    """
    if reps < 1:
        raise ParameterError("reps must be >= 1")
    truths = _TruthCache(ts)
    repetitions: list[RepetitionResult] = []
    scenarios: list[ScenarioSummary] = []
    for g in grids:
        eval_grid = _eval_grid_for(g, eval_mode)
        truth = truths.get(eval_grid)
        for rate in rates:
            scenario = {
                "grid": _grid_label(g),
                "wave_speed_kmh": g.wave_speed_kmh,
                "rate": rate,
            }
            def one(rep, g=g, rate=rate, eval_grid=eval_grid, truth=truth, scenario=scenario):
                sample_seed = derive_seed(master_seed, SAMPLE_STREAM, encode_fraction(rate), rep)
                outcome = run_repetition(ts, g, cfg, rate, sample_seed, truth, eval_grid)
                return _make_rep_result(
                    scenario, rep, g, eval_grid, cfg, rate, sample_seed,
                    (0, 0), 0, 10.0, outcome,
                )

            group = _map_reps(one, reps, threads)
            repetitions.extend(group)
            scenarios.append(summarize(scenario, group))
    return ExperimentReport(
        mode="tse",
        master_seed=master_seed,
        eval_mode=eval_mode,
        scenarios=scenarios,
        repetitions=repetitions,
        config_echo={"solver": _solver_dict(cfg), "rates": rates, "reps": reps},
    )


def run_rtse_sweep(
    ts: TrajectorySet,
    g: GridSpec,
    cfg: SolverConfig,
    rate: float,
    corruption_levels: list[int],
    reps: int,
    master_seed: int,
    eval_mode: str = EVAL_RECTANGULAR,
    detect_threshold_kmh: float = 10.0,
    threads: int = 1,
) -> ExperimentReport:
    """Corruption-level sweep (equal type 1 / type 2 counts per level).

    Level 0 injects nothing and matches run_tse_sweep at the same rate
    and master seed; the penetration sample for a repetition is shared
    across levels.
    """
    if reps < 1:
        raise ParameterError("reps must be >= 1")
    eval_grid = _eval_grid_for(g, eval_mode)
    truth = ground_truth_matrix(ts, eval_grid)
    repetitions: list[RepetitionResult] = []
    scenarios: list[ScenarioSummary] = []
    for level in corruption_levels:
        if level < 0:
            raise ParameterError("corruption levels must be nonnegative")
        scenario = {
            "grid": _grid_label(g),
            "rate": rate,
            "corruption_per_type": level,
        }
        def one(rep, level=level, scenario=scenario):
            sample_seed = derive_seed(master_seed, SAMPLE_STREAM, encode_fraction(rate), rep)
            corr_seed = derive_seed(master_seed, CORRUPTION_STREAM, level, rep)
            outcome = run_repetition(
                ts, g, cfg, rate, sample_seed, truth, eval_grid,
                corruption_counts=(level, level),
                corruption_seed=corr_seed,
                detect_threshold_kmh=detect_threshold_kmh,
            )
            return _make_rep_result(
                scenario, rep, g, eval_grid, cfg, rate, sample_seed,
                (level, level), corr_seed, detect_threshold_kmh, outcome,
            )

        group = _map_reps(one, reps, threads)
        repetitions.extend(group)
        scenarios.append(summarize(scenario, group))
    return ExperimentReport(
        mode="rtse",
        master_seed=master_seed,
        eval_mode=eval_mode,
        scenarios=scenarios,
        repetitions=repetitions,
        config_echo={
            "solver": _solver_dict(cfg),
            "rate": rate,
            "corruption_levels": corruption_levels,
            "reps": reps,
            "detect_threshold_kmh": detect_threshold_kmh,
        },
    )


def run_wave_sensitivity(
    ts: TrajectorySet,
    base_grid: GridSpec,
    cfg: SolverConfig,
    wave_speeds: list[float],
    reps: int,
    master_seed: int,
    rate: float = 0.05,
    eval_mode: str = EVAL_RECTANGULAR,
    threads: int = 1,
) -> ExperimentReport:
    """RMSE as a function of the assumed backward-wave speed."""
    if reps < 1:
        raise ParameterError("reps must be >= 1")
    repetitions: list[RepetitionResult] = []
    scenarios: list[ScenarioSummary] = []
    truths = _TruthCache(ts)
    for w in wave_speeds:
        g = replace(base_grid, wave_speed_kmh=w)
        eval_grid = _eval_grid_for(g, eval_mode)
        truth = truths.get(eval_grid)
        scenario = {"wave_speed_kmh": w, "rate": rate}

        def one(rep, g=g, eval_grid=eval_grid, truth=truth, scenario=scenario):
            sample_seed = derive_seed(master_seed, SAMPLE_STREAM, encode_fraction(rate), rep)
            outcome = run_repetition(ts, g, cfg, rate, sample_seed, truth, eval_grid)
            return _make_rep_result(
                scenario, rep, g, eval_grid, cfg, rate, sample_seed,
                (0, 0), 0, 10.0, outcome,
            )

        group = _map_reps(one, reps, threads)
        repetitions.extend(group)
        scenarios.append(summarize(scenario, group))
    return ExperimentReport(
        mode="sensitivity",
        master_seed=master_seed,
        eval_mode=eval_mode,
        scenarios=scenarios,
        repetitions=repetitions,
        config_echo={"solver": _solver_dict(cfg), "wave_speeds": wave_speeds, "rate": rate, "reps": reps},
    )


ABLATION_VARIANTS = ("full", "no_wave_prior", "convex_surrogate", "no_sparse_term")


def run_ablations(
    ts: TrajectorySet,
    g: GridSpec,
    cfg: SolverConfig,
    reps: int,
    master_seed: int,
    rate: float = 0.10,
    corruption_per_type: int = 30,
    eval_mode: str = EVAL_RECTANGULAR,
    detect_threshold_kmh: float = 10.0,
    threads: int = 1,
) -> ExperimentReport:
    """Component knockout study on the corrupted-input scenario.

    Variants: the full model on the oblique grid; the rectangular grid
    (wave prior removed); the convex nuclear-norm surrogate; and the
    sparse term disabled.
    """
    if reps < 1:
        raise ParameterError("reps must be >= 1")
    if not g.is_oblique:
        raise ParameterError("ablations need an oblique base grid")
    variants: list[tuple[str, GridSpec, SolverConfig]] = [
        ("full", g, cfg),
        ("no_wave_prior", g.rectangular(), cfg),
        ("convex_surrogate", g, replace(cfg, rank_surrogate=RankSurrogate.CONVEX_NN)),
        ("no_sparse_term", g, replace(cfg, sparse_term_enabled=False)),
    ]
    truths = _TruthCache(ts)
    repetitions: list[RepetitionResult] = []
    scenarios: list[ScenarioSummary] = []
    for name, grid_v, cfg_v in variants:
        eval_grid = _eval_grid_for(grid_v, eval_mode)
        truth = truths.get(eval_grid)
        scenario = {
            "variant": name,
            "grid": _grid_label(grid_v),
            "rate": rate,
            "corruption_per_type": corruption_per_type,
        }
        def one(rep, grid_v=grid_v, cfg_v=cfg_v, eval_grid=eval_grid, truth=truth, scenario=scenario):
            sample_seed = derive_seed(master_seed, SAMPLE_STREAM, encode_fraction(rate), rep)
            corr_seed = derive_seed(master_seed, CORRUPTION_STREAM, rep)
            outcome = run_repetition(
                ts, grid_v, cfg_v, rate, sample_seed, truth, eval_grid,
                corruption_counts=(corruption_per_type, corruption_per_type),
                corruption_seed=corr_seed,
                detect_threshold_kmh=detect_threshold_kmh,
            )
            return _make_rep_result(
                scenario, rep, grid_v, eval_grid, cfg_v, rate, sample_seed,
                (corruption_per_type, corruption_per_type), corr_seed,
                detect_threshold_kmh, outcome,
            )

        group = _map_reps(one, reps, threads)
        repetitions.extend(group)
        scenarios.append(summarize(scenario, group))
    return ExperimentReport(
        mode="ablation",
        master_seed=master_seed,
        eval_mode=eval_mode,
        scenarios=scenarios,
        repetitions=repetitions,
        config_echo={
            "solver": _solver_dict(cfg),
            "rate": rate,
            "corruption_per_type": corruption_per_type,
            "reps": reps,
        },
    )
