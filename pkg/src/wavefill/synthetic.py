"""Synthetic two-phase speed fields and trajectory generation.

The field is free-flow everywhere except inside stop-and-go bands that
propagate upstream at the (negative) wave speed. Band membership is
decided by the wave-following coordinate

    tau(s, t) = t - s * tan_theta,    tan_theta = 3.6 / wave_speed_kmh

which is constant along a backward wave front, so band boundaries in the
(s, t) plane are straight lines of slope tan_theta seconds per meter.
Vehicles are integrated through the field and sampled at 1 s cadence,
giving both a trajectory set and the closed-form field as an oracle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .trajectory import TrajectorySet

SAMPLE_PERIOD_S = 1.0
_SUBSTEPS = 4


@dataclass(frozen=True)
class SyntheticFieldSpec:
    """Parameters of the two-phase banded field."""

    free_flow_speed_kmh: float = 80.0
    jam_speed_kmh: float = 4.0
    wave_speed_kmh: float = -18.0
    wave_band_count: int = 5
    wave_band_width_s: float = 50.0
    wave_spacing_s: float = 70.0
    noise_std_kmh: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.wave_speed_kmh >= 0:
            raise ParameterError("wave_speed_kmh must be negative (backward wave)")
        if self.jam_speed_kmh >= self.free_flow_speed_kmh:
            raise ParameterError("jam_speed_kmh must be below free_flow_speed_kmh")
        if self.noise_std_kmh < 0:
            raise ParameterError("noise_std_kmh must be nonnegative")
        if self.wave_band_count < 0:
            raise ParameterError("wave_band_count must be nonnegative")
        if self.wave_band_count > 0 and (self.wave_band_width_s <= 0 or self.wave_spacing_s < 0):
            raise ParameterError("band width must be positive and spacing nonnegative")

    @property
    def tan_theta(self) -> float:
        return 3.6 / self.wave_speed_kmh


@dataclass(frozen=True)
class BandedSpeedField:
    """Closed-form ground-truth field u(s, t) for oracle evaluation."""

    spec: SyntheticFieldSpec
    segment_length_m: float
    window_length_s: float

    @property
    def band_intervals(self) -> tuple[tuple[float, float], ...]:
        """Band k occupies tau in [(k+1)*P, (k+1)*P + width), P = width + spacing."""
        w = self.spec.wave_band_width_s
        period = w + self.spec.wave_spacing_s
        return tuple(
            ((k + 1) * period, (k + 1) * period + w)
            for k in range(self.spec.wave_band_count)
        )

    def tau(self, position_m, time_s):
        return np.asarray(time_s, dtype=float) - np.asarray(position_m, dtype=float) * self.spec.tan_theta

    def speed_at(self, position_m, time_s):
        """True speed in km/h at (s, t); vectorized."""
        tau = self.tau(position_m, time_s)
        u = np.full_like(tau, self.spec.free_flow_speed_kmh)
        for a, b in self.band_intervals:
            u = np.where((tau >= a) & (tau < b), self.spec.jam_speed_kmh, u)
        return u


def generate_synthetic(
    spec: SyntheticFieldSpec,
    segment_length_m: float,
    window_length_s: float,
    vehicle_count: int,
    entry_headway_s: float,
) -> tuple[TrajectorySet, BandedSpeedField]:
    """Simulate vehicles through the banded field.

    Vehicles enter at s=0 with exponential inter-arrival times of the
    given mean, move with ds/dt = u(s, t)/3.6, and are sampled every
    second with additive Gaussian speed noise truncated at four standard
    deviations and clamped at zero. Deterministic for a fixed spec.seed.
    """
    if vehicle_count <= 0 or entry_headway_s <= 0:
        raise ParameterError("vehicle_count and entry_headway_s must be positive")
    field = BandedSpeedField(spec, segment_length_m, window_length_s)
    tau_max = window_length_s + abs(segment_length_m * spec.tan_theta)
    intervals = field.band_intervals
    if intervals and intervals[-1][1] > tau_max:
        raise ParameterError(
            f"bands extend to tau={intervals[-1][1]:.1f}, beyond the domain's {tau_max:.1f}"
        )

    rng = np.random.default_rng(spec.seed)
    entry_times = np.cumsum(rng.exponential(entry_headway_s, size=vehicle_count))
    entry_times -= entry_times[0]

    sub_dt = SAMPLE_PERIOD_S / _SUBSTEPS
    noise = spec.noise_std_kmh
    tracks: dict[str, np.ndarray] = {}
    for vid, t0 in enumerate(entry_times):
        if t0 >= window_length_s:
            continue
        t, s = float(t0), 0.0
        samples = []
        while t <= window_length_s and s <= segment_length_m:
            u = float(field.speed_at(s, t))
            if noise > 0:
                jitter = float(np.clip(rng.normal(0.0, noise), -4 * noise, 4 * noise))
                v = max(0.0, u + jitter)
            else:
                v = u
            samples.append((t, s, v))
            for _ in range(_SUBSTEPS):
                s += float(field.speed_at(s, t)) / 3.6 * sub_dt
                t += sub_dt
        if samples:
            tracks[str(vid)] = np.array(samples, dtype=float)
    ts = TrajectorySet(
        tracks=tracks,
        segment_length_m=segment_length_m,
        window_length_s=window_length_s,
    )
    return ts, field
