"""Vehicle trajectory ingestion, export, and penetration sampling.

Canonical units everywhere: position in meters from segment start, time
in seconds from window start, speed in km/h. All conversion happens at
ingestion; nothing downstream converts units again.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDatasetError, ParameterError, ParseError

POSITION_UNITS = {"m": 1.0, "km": 1000.0, "ft": 0.3048}
TIME_UNITS = {"s": 1.0, "ms": 0.001, "min": 60.0}
SPEED_UNITS = {"kmh": 1.0, "mps": 3.6, "mph": 1.609344, "fps": 1.09728}

REQUIRED_COLUMNS = ("vehicle_id", "time", "position", "speed")


@dataclass(frozen=True)
class TrajectoryPoint:
    """One timestamped observation of a vehicle: (s_i, t_i, x_i)."""

    vehicle_id: str
    time_s: float
    position_m: float
    speed_kmh: float


@dataclass(frozen=True, eq=False)
class TrajectorySet:
    """Trajectory points grouped by vehicle over a segment x window domain.

    ``tracks`` maps vehicle id to an (N, 3) float64 array with columns
    (time_s, position_m, speed_kmh), time strictly increasing per vehicle.
    ``dropped_rows`` counts out-of-domain rows discarded at ingestion and
    is metadata, not part of value equality.
    """

    tracks: dict[str, np.ndarray]
    segment_length_m: float
    window_length_s: float
    dropped_rows: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.segment_length_m <= 0 or self.window_length_s <= 0:
            raise ParameterError("segment_length_m and window_length_s must be positive")
        for vid, arr in self.tracks.items():
            if arr.ndim != 2 or arr.shape[1] != 3:
                raise ParameterError(f"vehicle {vid}: track must be an (N, 3) array")
            if not np.all(np.isfinite(arr)):
                raise ParameterError(f"vehicle {vid}: non-finite track values")
            t, s, v = arr[:, 0], arr[:, 1], arr[:, 2]
            if np.any(np.diff(t) <= 0):
                raise ParameterError(f"vehicle {vid}: time_s not strictly increasing")
            if np.any((t < 0) | (t > self.window_length_s)):
                raise ParameterError(f"vehicle {vid}: time_s outside [0, W]")
            if np.any((s < 0) | (s > self.segment_length_m)):
                raise ParameterError(f"vehicle {vid}: position_m outside [0, S]")
            if np.any(v < 0):
                raise ParameterError(f"vehicle {vid}: negative speed")

    @property
    def vehicle_ids(self) -> tuple[str, ...]:
        return tuple(self.tracks)

    @property
    def n_vehicles(self) -> int:
        return len(self.tracks)

    @property
    def n_points(self) -> int:
        return sum(arr.shape[0] for arr in self.tracks.values())

    def point_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All points flattened as (times, positions, speeds) arrays."""
        if not self.tracks:
            z = np.empty(0)
            return z, z.copy(), z.copy()
        stacked = np.concatenate(list(self.tracks.values()), axis=0)
        return stacked[:, 0], stacked[:, 1], stacked[:, 2]

    def iter_points(self):
        for vid, arr in self.tracks.items():
            for t, s, v in arr:
                yield TrajectoryPoint(vid, float(t), float(s), float(v))

    def equals(self, other: "TrajectorySet") -> bool:
        """Exact value equality (bit-identical arrays, same vehicle order)."""
        if (self.segment_length_m, self.window_length_s) != (
            other.segment_length_m,
            other.window_length_s,
        ):
            return False
        if self.vehicle_ids != other.vehicle_ids:
            return False
        return all(
            np.array_equal(self.tracks[vid], other.tracks[vid]) for vid in self.tracks
        )


def _unit_factor(kind: str, name: str, table: dict[str, float]) -> float:
    try:
        return table[name]
    except KeyError:
        raise ParameterError(
            f"unknown {kind} unit {name!r}; supported: {sorted(table)}"
        ) from None


def load_trajectories(
    path,
    columns: dict[str, str],
    units: dict[str, str] | None = None,
    *,
    segment_length_m: float,
    window_length_s: float,
) -> TrajectorySet:
    """Load a trajectory CSV, converting to canonical units.

    ``columns`` maps the logical names vehicle_id/time/position/speed to
    CSV header names. ``units`` declares the file's units per logical
    name (defaults: m, s, kmh). Rows outside [0, S] x [0, W] after
    conversion are dropped and counted in ``dropped_rows``.
    """
    units = units or {}
    missing = [k for k in REQUIRED_COLUMNS if k not in columns]
    if missing:
        raise ParameterError(f"column mapping missing entries for {missing}")
    pos_f = _unit_factor("position", units.get("position", "m"), POSITION_UNITS)
    time_f = _unit_factor("time", units.get("time", "s"), TIME_UNITS)
    speed_f = _unit_factor("speed", units.get("speed", "kmh"), SPEED_UNITS)

    rows: dict[str, list[tuple[float, float, float]]] = {}
    dropped = 0
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError("missing header row")
        absent = [columns[k] for k in REQUIRED_COLUMNS if columns[k] not in reader.fieldnames]
        if absent:
            raise ParseError(f"declared columns not in header: {absent}")
        for line_no, row in enumerate(reader, start=2):
            vid = (row[columns["vehicle_id"]] or "").strip()
            try:
                t = float(row[columns["time"]]) * time_f
                s = float(row[columns["position"]]) * pos_f
                v = float(row[columns["speed"]]) * speed_f
            except (TypeError, ValueError) as exc:
                raise ParseError(f"non-numeric field ({exc})", line_number=line_no) from None
            if not vid:
                raise ParseError("empty vehicle_id", line_number=line_no)
            if not (0 <= t <= window_length_s and 0 <= s <= segment_length_m):
                dropped += 1
                continue
            rows.setdefault(vid, []).append((t, s, v))

    if not rows:
        raise EmptyDatasetError(f"{path}: no in-domain trajectory rows")
    tracks = {}
    for vid, pts in rows.items():
        arr = np.array(sorted(pts), dtype=float)
        # collapse duplicate timestamps (keep the first) so tracks stay strictly increasing
        keep = np.concatenate(([True], np.diff(arr[:, 0]) > 0))
        tracks[vid] = arr[keep]
    return TrajectorySet(
        tracks=tracks,
        segment_length_m=segment_length_m,
        window_length_s=window_length_s,
        dropped_rows=dropped,
    )


def write_trajectories(ts: TrajectorySet, path) -> None:
    """Write the canonical-unit trajectory CSV (6-decimal fixed precision)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["vehicle_id", "time_s", "position_m", "speed_kmh"])
        for vid, arr in ts.tracks.items():
            for t, s, v in arr:
                writer.writerow([vid, f"{t:.6f}", f"{s:.6f}", f"{v:.6f}"])


def sample_penetration(ts: TrajectorySet, rate: float, seed: int) -> TrajectorySet:
    """Keep a random fraction of whole vehicles (connected-vehicle sampling).

    Selects round(rate * n_vehicles) vehicles uniformly without
    replacement, keeping every retained trajectory intact and vehicles in
    their original order. Deterministic for a fixed seed.
    """
    if not 0 < rate <= 1:
        raise ParameterError(f"penetration rate must be in (0, 1], got {rate}")
    if ts.n_vehicles == 0:
        raise EmptyDatasetError("cannot sample an empty TrajectorySet")
    if rate == 1.0:
        return ts
    k = int(np.floor(rate * ts.n_vehicles + 0.5))
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(ts.n_vehicles, size=k, replace=False))
    ids = ts.vehicle_ids
    tracks = {ids[i]: ts.tracks[ids[i]] for i in chosen}
    return TrajectorySet(
        tracks=tracks,
        segment_length_m=ts.segment_length_m,
        window_length_s=ts.window_length_s,
    )
