"""Non-Gaussian corruption injection and anomaly-detection scoring.

Two tamper types: free-flow observations (>= free_flow_threshold) pulled
down by 50 km/h into apparent jam, and jam observations
(<= jam_threshold) pushed up by 80 km/h into apparent free flow. The
recovered sparse matrix should carry a negative entry at the former and
a positive entry at the latter.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ParameterError
from .grid import StateMatrix

TYPE1_OFFSET_KMH = -50.0
TYPE2_OFFSET_KMH = 80.0


class CorruptionKind(str, enum.Enum):
    TYPE1 = "type1"
    TYPE2 = "type2"


@dataclass(frozen=True)
class CorruptionPlan:
    count_type1: int
    count_type2: int
    seed: int = 0
    free_flow_threshold_kmh: float = 50.0
    jam_threshold_kmh: float = 5.0

    def __post_init__(self):
        if self.count_type1 < 0 or self.count_type2 < 0:
            raise ParameterError("corruption counts must be nonnegative")
        if self.free_flow_threshold_kmh <= 0 or self.jam_threshold_kmh <= 0:
            raise ParameterError("eligibility thresholds must be positive")


@dataclass(frozen=True)
class CorruptionRecord:
    cell: tuple[int, int]
    kind: CorruptionKind
    original_kmh: float
    tampered_kmh: float


@dataclass(frozen=True)
class DetectionScore:
    """Precision/recall of |S| exceedances plus sign agreement.

    Sign agreement is computed over detected injected cells (type 1
    expects a negative sparse entry, type 2 positive). Vacuous cases
    (nothing flagged, nothing injected, no true positives) score 1.0.
    """

    precision: float
    recall: float
    sign_agreement: float
    n_flagged: int
    n_injected: int


def eligible_cells(M: StateMatrix, plan: CorruptionPlan) -> tuple[np.ndarray, np.ndarray]:
    """(type1, type2) eligible cell index arrays, row-major order."""
    observed = M.observed
    type1 = np.argwhere(observed & (M.values >= plan.free_flow_threshold_kmh))
    type2 = np.argwhere(observed & (M.values <= plan.jam_threshold_kmh))
    return type1, type2


def inject(M: StateMatrix, plan: CorruptionPlan) -> tuple[StateMatrix, list[CorruptionRecord]]:
    """Tamper randomly chosen eligible cells; deterministic per plan seed.

    Cells are sampled uniformly without replacement from each eligible
    set. Only values change: mask and counts stay intact, and MISSING or
    OUT_OF_DOMAIN cells are never touched.
    """
    type1_pool, type2_pool = eligible_cells(M, plan)
    if plan.count_type1 > len(type1_pool):
        raise CapacityError(
            f"type 1 needs {plan.count_type1} cells, only {len(type1_pool)} eligible "
            f"(shortfall {plan.count_type1 - len(type1_pool)})"
        )
    if plan.count_type2 > len(type2_pool):
        raise CapacityError(
            f"type 2 needs {plan.count_type2} cells, only {len(type2_pool)} eligible "
            f"(shortfall {plan.count_type2 - len(type2_pool)})"
        )
    rng = np.random.default_rng(plan.seed)
    values = M.values.copy()
    records: list[CorruptionRecord] = []
    for pool, count, kind, offset in (
        (type1_pool, plan.count_type1, CorruptionKind.TYPE1, TYPE1_OFFSET_KMH),
        (type2_pool, plan.count_type2, CorruptionKind.TYPE2, TYPE2_OFFSET_KMH),
    ):
        if count == 0:
            continue
        picks = rng.choice(len(pool), size=count, replace=False)
        for i, j in pool[picks]:
            original = float(values[i, j])
            values[i, j] = original + offset
            records.append(
                CorruptionRecord(
                    cell=(int(i), int(j)),
                    kind=kind,
                    original_kmh=original,
                    tampered_kmh=float(values[i, j]),
                )
            )
    tampered = StateMatrix(values=values, mask=M.mask, counts=M.counts, grid=M.grid)
    return tampered, records


def score_detection(
    S_hat: np.ndarray,
    records: list[CorruptionRecord],
    detect_threshold_kmh: float = 10.0,
) -> DetectionScore:
    """Score flagged cells (|S_hat| > threshold) against injected ground truth."""
    flagged = np.abs(S_hat) > detect_threshold_kmh
    n_flagged = int(flagged.sum())
    n_injected = len(records)
    if n_injected == 0:
        recall = 1.0
    else:
        hits = [r for r in records if flagged[r.cell]]
        recall = len(hits) / n_injected
    if n_flagged == 0:
        precision = 1.0
    else:
        injected_cells = {r.cell for r in records}
        true_pos = sum(1 for cell in np.argwhere(flagged) if (int(cell[0]), int(cell[1])) in injected_cells)
        precision = true_pos / n_flagged
    sign_hits = 0
    sign_total = 0
    for r in records:
        if not flagged[r.cell]:
            continue
        sign_total += 1
        expected = -1.0 if r.kind == CorruptionKind.TYPE1 else 1.0
        if np.sign(S_hat[r.cell]) == expected:
            sign_hits += 1
    sign_agreement = sign_hits / sign_total if sign_total else 1.0
    return DetectionScore(
        precision=precision,
        recall=recall,
        sign_agreement=sign_agreement,
        n_flagged=n_flagged,
        n_injected=n_injected,
    )


def write_records(records: list[CorruptionRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "col", "kind", "original_kmh", "tampered_kmh"])
        for r in records:
            writer.writerow(
                [r.cell[0], r.cell[1], r.kind.value, f"{r.original_kmh:.6f}", f"{r.tampered_kmh:.6f}"]
            )


def read_records(path) -> list[CorruptionRecord]:
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(
                CorruptionRecord(
                    cell=(int(row["row"]), int(row["col"])),
                    kind=CorruptionKind(row["kind"]),
                    original_kmh=float(row["original_kmh"]),
                    tampered_kmh=float(row["tampered_kmh"]),
                )
            )
    return records
