import numpy as np
import pytest

from wavefill import GridSpec, SolverConfig, SyntheticFieldSpec, generate_synthetic

# Shared synthetic benchmark: a two-phase field with backward waves at
# -18 km/h (bands 50 s wide every 120 s), sampled by simulated vehicles.
# The short window feeds the penetration/wave-speed studies; the long
# window keeps spec-level corruption counts a small fraction of the
# observations, matching the regime the corruption sweep assumes.

SEG_M = 450.0
TSE_WINDOW_S = 900.0
RTSE_WINDOW_S = 1800.0
HEADWAY_S = 3.75

TSE_FIELD = SyntheticFieldSpec(seed=11)
RTSE_FIELD = SyntheticFieldSpec(wave_band_count=14, seed=12)

# Calibrated solver settings for these desk-scale matrices (45 rows):
# lambda a few times 1/sqrt(T), truncation keeping rank 2 (TSE) or 1
# (RTSE; higher kept rank lets corrupted jam cells hide in the basis).
TSE_SOLVER = SolverConfig(truncation_fraction=0.05, lambda_=0.4)
RTSE_SOLVER = SolverConfig(truncation_fraction=0.03, lambda_=0.4)


@pytest.fixture(scope="session")
def tse_data():
    ts, field = generate_synthetic(
        TSE_FIELD, SEG_M, TSE_WINDOW_S, vehicle_count=240, entry_headway_s=HEADWAY_S
    )
    return ts, field


@pytest.fixture(scope="session")
def rtse_data():
    ts, field = generate_synthetic(
        RTSE_FIELD, SEG_M, RTSE_WINDOW_S, vehicle_count=480, entry_headway_s=HEADWAY_S
    )
    return ts, field


@pytest.fixture(scope="session")
def tse_oblique_grid():
    return GridSpec(SEG_M, TSE_WINDOW_S, ds_m=10.0, dt_s=10.0, wave_speed_kmh=-18.0)


@pytest.fixture(scope="session")
def rtse_oblique_grid():
    return GridSpec(SEG_M, RTSE_WINDOW_S, ds_m=10.0, dt_s=10.0, wave_speed_kmh=-18.0)


def random_low_rank(shape, rank, seed, lo=0.0, hi=100.0):
    """Random rank-`rank` matrix with entries rescaled to [lo, hi]."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((shape[0], rank))
    B = rng.standard_normal((shape[1], rank))
    M = A @ B.T
    return lo + (M - M.min()) / (M.max() - M.min()) * (hi - lo)


def observation_mask(shape, fraction, seed):
    rng = np.random.default_rng(seed)
    return rng.random(shape) < fraction
