"""
Dice scores and the stratified report (type and diameter strata).
"""
import json
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from .models import DIAMETER_BINS, BinaryMask, CaseRecord, NoduleType, diameter_bin

TYPE_COLUMNS = {NoduleType.SOLID: "Solid", NoduleType.MGGN: "mGGN", NoduleType.PGGN: "pGGN"}
COLUMNS = ["Avg"] + list(TYPE_COLUMNS.values()) + [label for label, _, _ in DIAMETER_BINS]


def dsc(pred: BinaryMask, gt: BinaryMask) -> float:
    """
    Dice similarity coefficient 2|P∩G| / (|P| + |G|).

    Two empty masks agree perfectly and score 1.0.
    """
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"Mask shapes differ: {pred.shape} vs {gt.shape}.")
    total = int(pred.sum()) + int(gt.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(pred, gt).sum()) / total


def nodule_dsc(case: CaseRecord, predictions: Sequence[Optional[BinaryMask]]) -> float:
    """
    Volumetric Dice over the labelled slices of `case`.

    Intersections and sizes are summed over slices before the ratio. A missing
    prediction counts as an empty mask.
    """
    labeled = case.manifest.labeled_indices
    if not labeled:
        raise ValueError(f"Case '{case.case_id}' has no labelled slices.")
    if len(predictions) != len(case.images):
        raise ValueError(
            f"Case '{case.case_id}' has {len(case.images)} slices, got {len(predictions)} predictions."
        )

    overlap = 0
    total = 0
    for i in labeled:
        gt = case.ground_truth[i]
        pred = predictions[i]
        if pred is None:
            pred = np.zeros_like(gt)
        if pred.shape != gt.shape:
            raise ValueError(f"Case '{case.case_id}' slice {i}: prediction shape differs from mask.")
        overlap += int(np.logical_and(pred, gt).sum())
        total += int(pred.sum()) + int(gt.sum())
    return 1.0 if total == 0 else 2.0 * overlap / total


@dataclass
class CaseScore:
    """Per-nodule score with the labels needed for stratification."""

    case_id: str
    nodule_type: NoduleType
    diameter_mm: float
    dsc: float
    method: str = "coarse-to-fine"
    slice_dsc: Dict[int, float] = field(default_factory=dict)

    @classmethod
    def from_case(
        cls, case: CaseRecord, predictions: Sequence[Optional[BinaryMask]], method: str = "coarse-to-fine"
    ) -> "CaseScore":
        slice_dsc = {}
        for i in case.manifest.labeled_indices:
            pred = predictions[i]
            gt = case.ground_truth[i]
            slice_dsc[i] = dsc(pred if pred is not None else np.zeros_like(gt), gt)
        return cls(
            case_id=case.case_id,
            nodule_type=case.manifest.nodule_type,
            diameter_mm=case.manifest.diameter_mm,
            dsc=nodule_dsc(case, predictions),
            method=method,
            slice_dsc=slice_dsc,
        )


@dataclass
class StratifiedReport:
    """Mean DSC per method over each type and diameter stratum."""

    rows: Dict[str, Dict[str, Optional[float]]]
    counts: Dict[str, Dict[str, int]]
    records: List[Dict[str, Any]]

    @property
    def methods(self) -> List[str]:
        return list(self.rows)

    def to_frame(self) -> pd.DataFrame:
        """One row per method; empty strata are NaN. Adds an `n` column."""
        frame = pd.DataFrame.from_dict(self.rows, orient="index", columns=COLUMNS).astype(float)
        frame["n"] = [self.counts[m]["Avg"] for m in self.rows]
        frame.index.name = "method"
        return frame

    def to_text(self) -> str:
        """Aligned text table; empty strata read n/a."""
        label_width = max([len("method")] + [len(m) for m in self.rows])
        widths = [max(len(c), 5) for c in COLUMNS]
        header = "method".ljust(label_width) + "  " + "  ".join(c.rjust(w) for c, w in zip(COLUMNS, widths))
        lines = [header, "-" * len(header)]
        for method, row in self.rows.items():
            cells = [("n/a" if row[c] is None else f"{row[c]:.3f}").rjust(w) for c, w in zip(COLUMNS, widths)]
            lines.append(method.ljust(label_width) + "  " + "  ".join(cells))
        return "\n".join(lines)

    def to_dict(self) -> Dict[str, Any]:
        return {"columns": COLUMNS, "rows": self.rows, "counts": self.counts, "records": self.records}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def build_report(scores: Iterable[CaseScore]) -> StratifiedReport:
    """
    Aggregates per-nodule scores into the stratified table.

    Avg is the mean over all nodules of a method, not the mean of the strata.
    """
    scores = list(scores)
    frame = pd.DataFrame(
        [
            {
                "method": s.method,
                "case_id": s.case_id,
                "type": TYPE_COLUMNS[NoduleType(s.nodule_type)],
                "bin": diameter_bin(s.diameter_mm),
                "dsc": float(s.dsc),
            }
            for s in scores
        ],
        columns=["method", "case_id", "type", "bin", "dsc"],
    )

    rows: Dict[str, Dict[str, Optional[float]]] = {}
    counts: Dict[str, Dict[str, int]] = {}
    for method, group in frame.groupby("method", sort=False):
        by_type = group.groupby("type")["dsc"].agg(["mean", "count"])
        by_bin = group.groupby("bin")["dsc"].agg(["mean", "count"])

        row = {"Avg": float(group["dsc"].mean())}
        count = {"Avg": int(len(group))}
        for column in COLUMNS[1:]:
            table = by_type if column in TYPE_COLUMNS.values() else by_bin
            if column in table.index:
                row[column] = float(table.loc[column, "mean"])
                count[column] = int(table.loc[column, "count"])
            else:
                row[column] = None
                count[column] = 0
        rows[method] = row
        counts[method] = count

    records = []
    for s in scores:
        records.append(
            {
                "method": s.method,
                "case_id": s.case_id,
                "nodule_type": NoduleType(s.nodule_type).value,
                "diameter_mm": s.diameter_mm,
                "dsc": s.dsc,
                "slices": [{"slice_index": i, "dsc": d} for i, d in sorted(s.slice_dsc.items())],
            }
        )
    return StratifiedReport(rows, counts, records)
