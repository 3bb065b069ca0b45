"""Spatiotemporal binning: rectangular and wave-aligned (oblique) grids.

A grid cell collects all observations with the same spatial bin
floor(s / ds) and the same skewed-time bin floor(t' / dt), where

    t' = t - s * tan_theta,    tan_theta = 3.6 / wave_speed_kmh < 0

so that t' is constant along a backward wave front and observations
generated by the same wave land in the same matrix column. Rectangular
grids are the tan_theta = 0 special case. The skewed time span is
[0, W + |S * tan_theta|], giving the oblique matrix its extra columns;
cells whose physical-time footprint lies entirely outside [0, W] can
never receive an observation and are marked OUT_OF_DOMAIN.

Points exactly on the upper domain edges (s = S or t' = span) belong to
the last bin, so no legitimate boundary sample is dropped.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ParameterError
from .trajectory import TrajectoryPoint, TrajectorySet


class CellMask(enum.IntEnum):
    OBSERVED = 0
    MISSING = 1
    OUT_OF_DOMAIN = 2


@dataclass(frozen=True)
class GridSpec:
    """Domain, resolution, and optional wave-speed skew of a grid."""

    segment_length_m: float
    window_length_s: float
    ds_m: float
    dt_s: float
    wave_speed_kmh: float | None = None

    def __post_init__(self):
        if min(self.segment_length_m, self.window_length_s, self.ds_m, self.dt_s) <= 0:
            raise ParameterError("grid dimensions and resolutions must be positive")
        if self.wave_speed_kmh is not None and self.wave_speed_kmh >= 0:
            raise ParameterError("wave_speed_kmh must be strictly negative when present")

    @property
    def is_oblique(self) -> bool:
        return self.wave_speed_kmh is not None

    @property
    def tan_theta(self) -> float:
        """Wave-line slope dt/ds in seconds per meter (0 for rectangular)."""
        if self.wave_speed_kmh is None:
            return 0.0
        return 3.6 / self.wave_speed_kmh

    @property
    def skew_span_s(self) -> float:
        """Extra skewed-time span |S * tan_theta| added by the skew."""
        return abs(self.segment_length_m * self.tan_theta)

    @property
    def n_rows(self) -> int:
        return math.ceil(self.segment_length_m / self.ds_m)

    @property
    def n_cols(self) -> int:
        return math.ceil((self.window_length_s + self.skew_span_s) / self.dt_s)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def rectangular(self) -> "GridSpec":
        """The rectangular grid with the same domain and resolutions."""
        return replace(self, wave_speed_kmh=None)

    def same_domain(self, other: "GridSpec") -> bool:
        return (
            self.segment_length_m == other.segment_length_m
            and self.window_length_s == other.window_length_s
        )


@dataclass(frozen=True, eq=False)
class StateMatrix:
    """Per-cell mean speeds with a three-valued mask and sample counts.

    ``values`` is L x T in km/h with NaN at non-observed cells; ``mask``
    holds CellMask codes; ``counts`` the number of samples per cell. For
    matrices built from observations, OBSERVED is equivalent to a
    positive count; solver-filled matrices keep the source counts.
    """

    values: np.ndarray
    mask: np.ndarray
    counts: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        shape = self.grid.shape
        for name, arr in (("values", self.values), ("mask", self.mask), ("counts", self.counts)):
            if arr.shape != shape:
                raise ParameterError(f"{name} shape {arr.shape} != grid shape {shape}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    @property
    def observed(self) -> np.ndarray:
        return self.mask == CellMask.OBSERVED

    @property
    def in_domain(self) -> np.ndarray:
        return self.mask != CellMask.OUT_OF_DOMAIN

    def filled_with(self, values: np.ndarray) -> "StateMatrix":
        """Same geometry with estimated values on every in-domain cell."""
        if values.shape != self.shape:
            raise ParameterError(f"values shape {values.shape} != {self.shape}")
        mask = np.where(
            self.mask == CellMask.OUT_OF_DOMAIN, CellMask.OUT_OF_DOMAIN, CellMask.OBSERVED
        ).astype(np.int8)
        vals = np.where(mask == CellMask.OBSERVED, values, np.nan)
        return StateMatrix(values=vals, mask=mask, counts=self.counts, grid=self.grid)

    def equals(self, other: "StateMatrix") -> bool:
        return (
            self.grid == other.grid
            and np.array_equal(self.values, other.values, equal_nan=True)
            and np.array_equal(self.mask, other.mask)
            and np.array_equal(self.counts, other.counts)
        )


def cell_index(p: TrajectoryPoint, g: GridSpec) -> tuple[int, int]:
    """Row/column bin of one in-domain point (see module docstring)."""
    rows, cols = g.shape
    c_s = min(int(p.position_m // g.ds_m), rows - 1)
    t_skew = p.time_s - p.position_m * g.tan_theta
    c_t = min(int(t_skew // g.dt_s), cols - 1)
    return c_s, c_t


def _bin_indices(ts: TrajectorySet, g: GridSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    t, s, v = ts.point_arrays()
    rows, cols = g.shape
    c_s = np.minimum((s // g.ds_m).astype(np.intp), rows - 1)
    c_t = np.minimum(((t - s * g.tan_theta) // g.dt_s).astype(np.intp), cols - 1)
    return c_s, c_t, v


def _out_of_domain_mask(g: GridSpec) -> np.ndarray:
    """Cells whose closed physical-time footprint misses [0, W] entirely."""
    rows, cols = g.shape
    if not g.is_oblique:
        return np.zeros((rows, cols), dtype=bool)
    tan = g.tan_theta  # negative
    l = np.arange(rows)[:, None]
    c = np.arange(cols)[None, :]
    t_min = c * g.dt_s + (l + 1) * g.ds_m * tan
    t_max = (c + 1) * g.dt_s + l * g.ds_m * tan
    return (t_max < 0) | (t_min > g.window_length_s)


def build_matrix(ts: TrajectorySet, g: GridSpec) -> StateMatrix:
    """Average observations into cells, producing the traffic state matrix."""
    if (ts.segment_length_m, ts.window_length_s) != (g.segment_length_m, g.window_length_s):
        raise ParameterError(
            "trajectory domain "
            f"({ts.segment_length_m} m, {ts.window_length_s} s) does not match grid "
            f"({g.segment_length_m} m, {g.window_length_s} s)"
        )
    rows, cols = g.shape
    sums = np.zeros((rows, cols))
    counts = np.zeros((rows, cols), dtype=np.int64)
    c_s, c_t, v = _bin_indices(ts, g)
    np.add.at(sums, (c_s, c_t), v)
    np.add.at(counts, (c_s, c_t), 1)

    observed = counts > 0
    values = np.full((rows, cols), np.nan)
    values[observed] = sums[observed] / counts[observed]

    mask = np.full((rows, cols), CellMask.MISSING, dtype=np.int8)
    mask[_out_of_domain_mask(g)] = CellMask.OUT_OF_DOMAIN
    mask[observed] = CellMask.OBSERVED
    return StateMatrix(values=values, mask=mask, counts=counts, grid=g)


def ground_truth_matrix(full_ts: TrajectorySet, g: GridSpec) -> StateMatrix:
    """Evaluation reference: the matrix built from all trajectory points.

    Identical to build_matrix; cells with zero points stay MISSING and
    are excluded from metrics.
    """
    return build_matrix(full_ts, g)


def rasterize(m: StateMatrix, target: GridSpec) -> StateMatrix:
    """Resample onto a rectangular grid by nearest-cell lookup.

    Each target cell takes the value/mask/count of the source cell
    containing the target cell's center. No interpolation, so evaluation
    cannot smuggle in smoothing.
    """
    if target.is_oblique:
        raise ParameterError("rasterize target must be rectangular")
    if not m.grid.same_domain(target):
        raise ParameterError("rasterize requires matching physical domains")
    src = m.grid
    rows_t, cols_t = target.shape
    s_centers = np.minimum((np.arange(rows_t) + 0.5) * target.ds_m, src.segment_length_m)
    t_centers = np.minimum((np.arange(cols_t) + 0.5) * target.dt_s, src.window_length_s)

    src_rows = np.minimum((s_centers // src.ds_m).astype(np.intp), src.n_rows - 1)
    t_skew = t_centers[None, :] - s_centers[:, None] * src.tan_theta
    src_cols = np.minimum((t_skew // src.dt_s).astype(np.intp), src.n_cols - 1)
    rr = np.broadcast_to(src_rows[:, None], (rows_t, cols_t))

    return StateMatrix(
        values=m.values[rr, src_cols],
        mask=m.mask[rr, src_cols],
        counts=m.counts[rr, src_cols],
        grid=target,
    )
