"""StateMatrix persistence: CSV values, JSON sidecar, PGM heatmaps.

The CSV holds one matrix row per line with the literal token "nan" for
non-observed cells; floats use repr precision so a load reproduces the
matrix bit-identically. The sidecar carries the grid spec, the mask as
a row-major run-length encoding, and the per-cell sample counts.
"""
from __future__ import annotations

import csv
import json

import numpy as np

from .errors import ParameterError, ParseError
from .grid import CellMask, GridSpec, StateMatrix


def sidecar_path(csv_path) -> str:
    return str(csv_path) + ".json"


def _rle_encode(flat: np.ndarray) -> list[list[int]]:
    runs = []
    if flat.size == 0:
        return runs
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [flat.size]))
    for a, b in zip(starts, ends):
        runs.append([int(flat[a]), int(b - a)])
    return runs


def _rle_decode(runs: list[list[int]], size: int) -> np.ndarray:
    out = np.empty(size, dtype=np.int8)
    pos = 0
    for value, length in runs:
        out[pos : pos + length] = value
        pos += length
    if pos != size:
        raise ParseError(f"mask run-length data covers {pos} cells, expected {size}")
    return out


def write_matrix(m: StateMatrix, csv_path) -> None:
    """Write values CSV plus the JSON sidecar next to it."""
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in m.values:
            writer.writerow(["nan" if not np.isfinite(x) else repr(float(x)) for x in row])
    g = m.grid
    sidecar = {
        "grid": {
            "segment_length_m": g.segment_length_m,
            "window_length_s": g.window_length_s,
            "ds_m": g.ds_m,
            "dt_s": g.dt_s,
            "wave_speed_kmh": g.wave_speed_kmh,
        },
        "shape": list(m.shape),
        "mask_rle": _rle_encode(m.mask.ravel()),
        "counts": m.counts.astype(int).tolist(),
    }
    with open(sidecar_path(csv_path), "w") as fh:
        json.dump(sidecar, fh, separators=(",", ":"))
        fh.write("\n")


def read_matrix(csv_path) -> StateMatrix:
    """Load a matrix written by write_matrix (CSV + sidecar)."""
    with open(sidecar_path(csv_path)) as fh:
        sidecar = json.load(fh)
    g = GridSpec(**sidecar["grid"])
    shape = tuple(sidecar["shape"])
    if shape != g.shape:
        raise ParseError(f"sidecar shape {shape} does not match grid shape {g.shape}")
    rows = []
    with open(csv_path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            try:
                rows.append([float(x) for x in row])
            except ValueError as exc:
                raise ParseError(f"bad matrix value ({exc})", line_number=line_no) from None
    values = np.array(rows, dtype=float)
    if values.shape != shape:
        raise ParseError(f"CSV shape {values.shape} does not match sidecar shape {shape}")
    mask = _rle_decode(sidecar["mask_rle"], values.size).reshape(shape)
    counts = np.array(sidecar["counts"], dtype=np.int64)
    return StateMatrix(values=values, mask=mask, counts=counts, grid=g)


def write_heatmap_pgm(m: StateMatrix, path, v_max_kmh: float = 120.0) -> None:
    """8-bit binary PGM: 0 <-> 0 km/h, 255 <-> v_max; non-observed cells render 0."""
    if v_max_kmh <= 0:
        raise ParameterError("v_max_kmh must be positive")
    vals = np.where(m.mask == CellMask.OBSERVED, m.values, 0.0)
    scaled = np.clip(vals / v_max_kmh, 0.0, 1.0)
    pixels = np.round(scaled * 255).astype(np.uint8)
    header = f"P5\n{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pixels.tobytes())
