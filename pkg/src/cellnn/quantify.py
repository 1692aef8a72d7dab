"""Bounding-box ROI queries in embedding space: occupancy, odds ratios, composition.

The odds ratio here is the ratio of the two groups' within-box cell
fractions (n1/N1) / (n2/N2), with raw counts exposed so other effect
measures can be derived. Box membership is closed on all edges.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .ingest import CELL_TYPES
from .tsne import Embedding2D

FLAG_FINITE = "finite"
FLAG_INFINITE = "infinite"
FLAG_UNDEFINED = "undefined"

SCHEMA_VERSION = 1


class QuantifyError(ValueError):
    pass


@dataclass(frozen=True)
class BBox:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise QuantifyError("bbox requires xmin < xmax and ymin < ymax")

    @classmethod
    def parse(cls, text: str) -> "BBox":
        parts = text.split(",")
        if len(parts) != 4:
            raise QuantifyError(f"bbox must be xmin,ymin,xmax,ymax, got {text!r}")
        vals = [float(p) for p in parts]
        return cls(*vals)

    def contains(self, coords: np.ndarray) -> np.ndarray:
        """Closed-box membership mask for (m, 2) coordinates."""
        return ((coords[:, 0] >= self.xmin) & (coords[:, 0] <= self.xmax)
                & (coords[:, 1] >= self.ymin) & (coords[:, 1] <= self.ymax))

    def as_dict(self) -> dict:
        return {"xmin": self.xmin, "ymin": self.ymin,
                "xmax": self.xmax, "ymax": self.ymax}


@dataclass
class OddsRatioReport:
    bbox: BBox
    group1: str
    group2: str
    n1: int
    n2: int
    N1: int
    N2: int
    f1: float
    f2: float
    ratio: float | None
    flag: str
    entry_ids: list[int]          # atlas entries inside the bbox


@dataclass
class RoiComposition:
    pooled_mean: np.ndarray                 # (6,) sums to k
    per_group: dict[str, np.ndarray | None]
    ranking: list[str]                      # type names by pooled mean desc
    total_weight: int


def _group_index(embedding: Embedding2D, group: str) -> int:
    try:
        return embedding.groups.index(group)
    except ValueError:
        raise QuantifyError(f"unknown group {group!r}") from None


def cells_in_bbox(embedding: Embedding2D, bbox: BBox, group: str) -> int:
    """Weighted cell count of one group inside the closed box."""
    g = _group_index(embedding, group)
    mask = bbox.contains(embedding.coords)
    return int(embedding.weights[mask, g].sum())


def odds_ratio(embedding: Embedding2D, bbox: BBox,
               group1: str, group2: str) -> OddsRatioReport:
    """Within-box fraction of group1 divided by the within-box fraction of group2."""
    g1 = _group_index(embedding, group1)
    g2 = _group_index(embedding, group2)
    totals = embedding.weights.sum(axis=0)
    n_tot1, n_tot2 = int(totals[g1]), int(totals[g2])
    if n_tot1 == 0 or n_tot2 == 0:
        raise QuantifyError("both groups must have positive total weight")
    mask = bbox.contains(embedding.coords)
    n1 = int(embedding.weights[mask, g1].sum())
    n2 = int(embedding.weights[mask, g2].sum())
    f1 = n1 / n_tot1
    f2 = n2 / n_tot2
    if f2 > 0:
        ratio, flag = f1 / f2, FLAG_FINITE
    elif f1 > 0:
        ratio, flag = None, FLAG_INFINITE
    else:
        ratio, flag = None, FLAG_UNDEFINED
    return OddsRatioReport(
        bbox=bbox, group1=group1, group2=group2,
        n1=n1, n2=n2, N1=n_tot1, N2=n_tot2, f1=f1, f2=f2,
        ratio=ratio, flag=flag,
        entry_ids=[int(i) for i in np.nonzero(mask)[0]],
    )


def roi_composition(embedding: Embedding2D, bbox: BBox) -> RoiComposition:
    """Weighted mean signature over all cells inside the box, per group and pooled."""
    mask = bbox.contains(embedding.coords)
    sigs = embedding.signatures[mask].astype(np.float64)
    weights = embedding.weights[mask]
    pooled_w = weights.sum(axis=1).astype(np.float64)
    total = pooled_w.sum()
    if sigs.shape[0] == 0 or total == 0:
        raise QuantifyError("empty ROI")
    pooled_mean = (pooled_w @ sigs) / total
    per_group: dict[str, np.ndarray | None] = {}
    for gi, g in enumerate(embedding.groups):
        gw = weights[:, gi].astype(np.float64)
        gtot = gw.sum()
        per_group[g] = (gw @ sigs) / gtot if gtot > 0 else None
    order = np.lexsort((np.arange(len(CELL_TYPES)), -pooled_mean))
    ranking = [CELL_TYPES[i] for i in order]
    return RoiComposition(pooled_mean=pooled_mean, per_group=per_group,
                          ranking=ranking, total_weight=int(total))


def roi_payload(embedding: Embedding2D, bbox: BBox,
                group1: str, group2: str) -> dict:
    """The full ROI report as a JSON-ready dict.

    This is the single source of truth for both the CLI `roi` output and the
    service's /api/roi response.
    """
    report = odds_ratio(embedding, bbox, group1, group2)
    entries = []
    for i in report.entry_ids:
        entries.append({
            "sig_id": i,
            "signature": [int(v) for v in embedding.signatures[i]],
            "weights": {g: int(embedding.weights[i, gi])
                        for gi, g in enumerate(embedding.groups)},
        })
    try:
        comp = roi_composition(embedding, bbox)
        composition = {
            "pooled_mean": [float(v) for v in comp.pooled_mean],
            "per_group": {g: ([float(v) for v in m] if m is not None else None)
                          for g, m in comp.per_group.items()},
            "ranking": comp.ranking,
            "total_weight": comp.total_weight,
        }
    except QuantifyError:
        composition = None
    return {
        "schema_version": SCHEMA_VERSION,
        "bbox": report.bbox.as_dict(),
        "group1": report.group1,
        "group2": report.group2,
        "n1": report.n1,
        "n2": report.n2,
        "N1": report.N1,
        "N2": report.N2,
        "f1": report.f1,
        "f2": report.f2,
        "ratio": report.ratio,
        "flag": report.flag,
        "entries": entries,
        "composition": composition,
    }


def write_roi_json(payload: dict, stream: TextIO | str) -> None:
    if isinstance(stream, str):
        with open(stream, "w", encoding="utf-8", newline="") as fh:
            write_roi_json(payload, fh)
        return
    json.dump(payload, stream, indent=2)
    stream.write("\n")
