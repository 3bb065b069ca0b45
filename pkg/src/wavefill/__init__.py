"""Freeway traffic-speed field reconstruction from sparse vehicle
trajectories, using a backward-wave-aligned spatiotemporal matrix and
truncated-nuclear-norm low-rank + sparse completion solved by ADMM.
"""

__version__ = "0.1.0"

from .corruption import (
    CorruptionKind,
    CorruptionPlan,
    CorruptionRecord,
    DetectionScore,
    inject,
    score_detection,
)
from .errors import (
    CapacityError,
    ConfigError,
    EmptyDatasetError,
    NumericalError,
    ParameterError,
    ParseError,
    WavefillError,
)
from .evaluate import (
    ExperimentReport,
    MetricPair,
    RepetitionResult,
    ScenarioSummary,
    compute_metrics,
    replay_repetition,
    run_ablations,
    run_repetition,
    run_rtse_sweep,
    run_tse_sweep,
    run_wave_sensitivity,
)
from .grid import (
    CellMask,
    GridSpec,
    StateMatrix,
    build_matrix,
    cell_index,
    ground_truth_matrix,
    rasterize,
)
from .matrix_io import read_matrix, write_heatmap_pgm, write_matrix
from .seeds import derive_seed, splitmix64
from .solver import (
    RankSurrogate,
    SolverConfig,
    SolverResult,
    SolverState,
    admm_step,
    initial_state,
    soft_threshold,
    solve,
    truncated_svt,
)
from .synthetic import BandedSpeedField, SyntheticFieldSpec, generate_synthetic
from .trajectory import (
    TrajectoryPoint,
    TrajectorySet,
    load_trajectories,
    sample_penetration,
    write_trajectories,
)

__all__ = [name for name in dir() if not name.startswith("_")]
