"""Cell table ingestion: parsing, patch-coordinate merging, summaries, validation.

The canonical input is a flat cell table (CSV or newline-delimited JSON)
with columns slide_id, group, cell_type, x, y. Coordinates are whole-slide
pixels at 20x magnification; no unit conversion is applied.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, TextIO

import numpy as np

# Fixed cell-type vocabulary. Ordinals are stable and index every
# 6-vector in the package: neu=0, epi=1, lym=2, pla=3, eos=4, con=5.
CELL_TYPES = ("neu", "epi", "lym", "pla", "eos", "con")
CELL_TYPE_LABELS = (
    "Neutrophils (neu)",
    "Epithelial cell (epi)",
    "Lymphocytes (lym)",
    "Plasma cell (pla)",
    "Eosinophils (eos)",
    "Connective tissue (con)",
)
N_TYPES = len(CELL_TYPES)

_TYPE_ALIASES = {
    "neu": 0, "neutrophil": 0, "neutrophils": 0,
    "epi": 1, "epithelial": 1, "epithelial cell": 1, "epithelial cells": 1,
    "lym": 2, "lymphocyte": 2, "lymphocytes": 2,
    "pla": 3, "plasma": 3, "plasma cell": 3, "plasma cells": 3,
    "eos": 4, "eosinophil": 4, "eosinophils": 4,
    "con": 5, "connective": 5, "connective tissue": 5,
}

ROLES = ("slide_id", "group", "cell_type", "x", "y")


class IngestError(ValueError):
    """Malformed input data."""


class SchemaError(IngestError):
    """Input is missing required columns."""


def parse_cell_type(token: str) -> int:
    """Map a cell-type token to its ordinal. Case-insensitive on long and short names."""
    key = token.strip().lower()
    if key not in _TYPE_ALIASES:
        raise IngestError(f"unknown cell type {token!r}")
    return _TYPE_ALIASES[key]


@dataclass(frozen=True)
class Cell:
    """One detected nucleus in whole-slide coordinates."""

    cell_id: int
    slide_id: str
    group: str
    cell_type: int  # ordinal into CELL_TYPES
    x: float
    y: float


@dataclass(frozen=True)
class PatchDetection:
    """A nucleus centroid local to one patch, before merging into WSI space."""

    slide_id: str
    group: str
    patch_origin_x: float
    patch_origin_y: float
    local_x: float
    local_y: float
    cell_type: int
    patch_size: float = 256.0


class CohortTable:
    """Immutable columnar table of cells across slides and cohort groups.

    Cells keep their input order; ``cell_ids`` are unique within the table.
    Construction is cheap for millions of rows; per-cell ``Cell`` objects are
    materialized only on demand.
    """

    def __init__(self, cell_ids, slide_idx, group_idx, cell_types, xy,
                 slides: tuple[str, ...], groups: tuple[str, ...]):
        self.cell_ids = np.asarray(cell_ids, dtype=np.int64)
        self.slide_idx = np.asarray(slide_idx, dtype=np.int32)
        self.group_idx = np.asarray(group_idx, dtype=np.int32)
        self.cell_types = np.asarray(cell_types, dtype=np.int8)
        self.xy = np.ascontiguousarray(xy, dtype=np.float64)
        self.slides = tuple(slides)
        self.groups = tuple(groups)
        for arr in (self.slide_idx, self.group_idx, self.cell_types):
            if arr.shape[0] != self.cell_ids.shape[0]:
                raise ValueError("column length mismatch")
        if self.xy.shape != (self.cell_ids.shape[0], 2):
            raise ValueError("xy must have shape (n, 2)")
        self._freeze()

    def _freeze(self):
        for arr in (self.cell_ids, self.slide_idx, self.group_idx,
                    self.cell_types, self.xy):
            arr.setflags(write=False)

    @classmethod
    def from_cells(cls, cells: Iterable[Cell]) -> "CohortTable":
        cells = list(cells)
        slides: dict[str, int] = {}
        groups: dict[str, int] = {}
        n = len(cells)
        cell_ids = np.empty(n, dtype=np.int64)
        slide_idx = np.empty(n, dtype=np.int32)
        group_idx = np.empty(n, dtype=np.int32)
        types = np.empty(n, dtype=np.int8)
        xy = np.empty((n, 2), dtype=np.float64)
        for i, c in enumerate(cells):
            cell_ids[i] = c.cell_id
            slide_idx[i] = slides.setdefault(c.slide_id, len(slides))
            group_idx[i] = groups.setdefault(c.group, len(groups))
            types[i] = c.cell_type
            xy[i] = (c.x, c.y)
        return cls(cell_ids, slide_idx, group_idx, types, xy,
                   tuple(slides), tuple(groups))

    def __len__(self) -> int:
        return self.cell_ids.shape[0]

    def cell(self, row: int) -> Cell:
        return Cell(
            cell_id=int(self.cell_ids[row]),
            slide_id=self.slides[self.slide_idx[row]],
            group=self.groups[self.group_idx[row]],
            cell_type=int(self.cell_types[row]),
            x=float(self.xy[row, 0]),
            y=float(self.xy[row, 1]),
        )

    def iter_cells(self) -> Iterator[Cell]:
        for row in range(len(self)):
            yield self.cell(row)

    def slide_rows(self, slide_id: str) -> np.ndarray:
        """Row indices for one slide, in input order."""
        s = self.slides.index(slide_id)
        return np.nonzero(self.slide_idx == s)[0]

    def slide_ranges(self, slide_id: str) -> list[tuple[int, int]]:
        """The slide's rows as contiguous [start, stop) ranges."""
        rows = self.slide_rows(slide_id)
        if rows.size == 0:
            return []
        breaks = np.nonzero(np.diff(rows) > 1)[0]
        starts = np.concatenate(([0], breaks + 1))
        stops = np.concatenate((breaks + 1, [rows.size]))
        return [(int(rows[a]), int(rows[b - 1]) + 1) for a, b in zip(starts, stops)]

    def group_totals(self) -> dict[str, int]:
        counts = np.bincount(self.group_idx, minlength=len(self.groups))
        return {g: int(counts[i]) for i, g in enumerate(self.groups)}


def _finite(v: float) -> bool:
    return math.isfinite(v)


def _resolve_columns(header: list[str], column_map: Mapping[str, str] | None) -> dict[str, int]:
    """Resolve role -> column position. ``column_map`` maps source column name -> role."""
    if column_map is None:
        column_map = {r: r for r in ROLES}
    role_to_name = {role: name for name, role in column_map.items()}
    missing = [r for r in ROLES if r not in role_to_name]
    if missing:
        raise SchemaError(f"column_map missing roles: {', '.join(missing)}")
    pos: dict[str, int] = {}
    for role in ROLES:
        name = role_to_name[role]
        if name not in header:
            raise SchemaError(f"missing column {name!r} (role {role})")
        pos[role] = header.index(name)
    return pos


def _coerce_coord(token: str, axis: str, line_no: int) -> float:
    try:
        v = float(token)
    except ValueError:
        raise IngestError(f"malformed {axis} value {token!r} at line {line_no}") from None
    if not _finite(v):
        raise IngestError(f"non-finite coordinate at line {line_no}")
    return v


def parse_cell_table(source: TextIO | str, format: str = "csv",
                     column_map: Mapping[str, str] | None = None) -> CohortTable:
    """Parse a cell table from a character stream or path.

    ``format`` is "csv" (header required) or "ndjson". ``column_map`` maps
    source column names to the roles slide_id, group, cell_type, x, y; by
    default columns are expected under the role names themselves.

    Cells keep input order and get sequential cell_ids from 0. Malformed
    rows raise IngestError with the offending line number.
    """
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return parse_cell_table(fh, format=format, column_map=column_map)
    if format == "csv":
        rows = _parse_csv_rows(source, column_map)
    elif format == "ndjson":
        rows = _parse_ndjson_rows(source, column_map)
    else:
        raise ValueError(f"unknown format {format!r}")
    return _assemble(rows)


def _parse_csv_rows(stream: TextIO, column_map):
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty input: header row required") from None
    pos = _resolve_columns([h.strip() for h in header], column_map)
    n_cols = len(header)
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != n_cols:
            raise IngestError(
                f"malformed row at line {line_no}: expected {n_cols} fields, got {len(row)}")
        try:
            ctype = parse_cell_type(row[pos["cell_type"]])
        except IngestError as e:
            raise IngestError(f"{e} at line {line_no}") from None
        yield (
            row[pos["slide_id"]],
            row[pos["group"]],
            ctype,
            _coerce_coord(row[pos["x"]], "x", line_no),
            _coerce_coord(row[pos["y"]], "y", line_no),
        )


def _parse_ndjson_rows(stream: TextIO, column_map):
    if column_map is None:
        column_map = {r: r for r in ROLES}
    role_to_name = {role: name for name, role in column_map.items()}
    missing = [r for r in ROLES if r not in role_to_name]
    if missing:
        raise SchemaError(f"column_map missing roles: {', '.join(missing)}")
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise IngestError(f"malformed JSON at line {line_no}: {e.msg}") from None
        for role in ROLES:
            if role_to_name[role] not in obj:
                raise SchemaError(f"missing field {role_to_name[role]!r} at line {line_no}")
        try:
            ctype = parse_cell_type(str(obj[role_to_name["cell_type"]]))
        except IngestError as e:
            raise IngestError(f"{e} at line {line_no}") from None
        yield (
            str(obj[role_to_name["slide_id"]]),
            str(obj[role_to_name["group"]]),
            ctype,
            _coerce_coord(str(obj[role_to_name["x"]]), "x", line_no),
            _coerce_coord(str(obj[role_to_name["y"]]), "y", line_no),
        )


def _assemble(rows) -> CohortTable:
    slides: dict[str, int] = {}
    groups: dict[str, int] = {}
    slide_idx, group_idx, types, xs, ys = [], [], [], [], []
    for slide_id, group, ctype, x, y in rows:
        slide_idx.append(slides.setdefault(slide_id, len(slides)))
        group_idx.append(groups.setdefault(group, len(groups)))
        types.append(ctype)
        xs.append(x)
        ys.append(y)
    n = len(types)
    xy = np.column_stack((np.array(xs, dtype=np.float64),
                          np.array(ys, dtype=np.float64))) if n else np.empty((0, 2))
    return CohortTable(np.arange(n, dtype=np.int64), slide_idx or [], group_idx or [],
                       types or [], xy, tuple(slides), tuple(groups))


def merge_patch_coordinates(detections: Iterable[PatchDetection]) -> list[Cell]:
    """Merge patch-local detections into whole-slide coordinates.

    Global position is patch origin plus local offset; detection order is
    preserved and cell_ids are assigned sequentially from 0.
    """
    out: list[Cell] = []
    for i, d in enumerate(detections):
        if not (0 <= d.local_x < d.patch_size) or not (0 <= d.local_y < d.patch_size):
            raise IngestError(
                f"detection {i}: local coordinate ({d.local_x}, {d.local_y}) "
                f"outside [0, {d.patch_size})")
        out.append(Cell(
            cell_id=i,
            slide_id=d.slide_id,
            group=d.group,
            cell_type=d.cell_type,
            x=d.patch_origin_x + d.local_x,
            y=d.patch_origin_y + d.local_y,
        ))
    return out


DETECTION_COLUMNS = ("slide_id", "group", "patch_origin_x", "patch_origin_y",
                     "local_x", "local_y", "cell_type", "patch_size")


def parse_detection_table(source: TextIO | str) -> list[PatchDetection]:
    """Parse a CSV of patch-local detections (columns DETECTION_COLUMNS; patch_size optional)."""
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return parse_detection_table(fh)
    reader = csv.DictReader(source)
    if reader.fieldnames is None:
        raise SchemaError("empty input: header row required")
    required = [c for c in DETECTION_COLUMNS[:-1] if c not in reader.fieldnames]
    if required:
        raise SchemaError(f"missing columns: {', '.join(required)}")
    out = []
    for line_no, row in enumerate(reader, start=2):
        try:
            ctype = parse_cell_type(row["cell_type"])
        except IngestError as e:
            raise IngestError(f"{e} at line {line_no}") from None
        out.append(PatchDetection(
            slide_id=row["slide_id"],
            group=row["group"],
            patch_origin_x=_coerce_coord(row["patch_origin_x"], "patch_origin_x", line_no),
            patch_origin_y=_coerce_coord(row["patch_origin_y"], "patch_origin_y", line_no),
            local_x=_coerce_coord(row["local_x"], "local_x", line_no),
            local_y=_coerce_coord(row["local_y"], "local_y", line_no),
            cell_type=ctype,
            patch_size=_coerce_coord(row.get("patch_size") or "256", "patch_size", line_no),
        ))
    return out


@dataclass
class SummaryTable:
    """Per-group biopsy and cell-type counts, rows ordered like a data-summary table."""

    groups: tuple[str, ...]
    biopsies: tuple[int, ...]                 # distinct slides per group
    type_counts: np.ndarray                   # (6, n_groups)

    ROW_LABELS = ("Sample biopsies",) + CELL_TYPE_LABELS

    def rows(self) -> list[tuple[str, tuple[int, ...]]]:
        out = [("Sample biopsies", self.biopsies)]
        for t in range(N_TYPES):
            out.append((CELL_TYPE_LABELS[t], tuple(int(v) for v in self.type_counts[t])))
        return out

    def to_csv(self, stream: TextIO) -> None:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["Count"] + list(self.groups))
        for label, vals in self.rows():
            w.writerow([label] + [str(v) for v in vals])

    def to_text(self) -> str:
        header = ["Count"] + list(self.groups)
        body = [[label] + [f"{v:,}" for v in vals] for label, vals in self.rows()]
        widths = [max(len(r[c]) for r in [header] + body) for c in range(len(header))]
        lines = []
        for r in [header] + body:
            lines.append("  ".join(f"{cell:<{w}}" if i == 0 else f"{cell:>{w}}"
                                   for i, (cell, w) in enumerate(zip(r, widths))))
        return "\n".join(lines)


def summarize(cohort: CohortTable) -> SummaryTable:
    """Count biopsies and cells per type for each cohort group."""
    n_groups = len(cohort.groups)
    type_counts = np.zeros((N_TYPES, n_groups), dtype=np.int64)
    np.add.at(type_counts, (cohort.cell_types.astype(np.int64), cohort.group_idx), 1)
    biopsies = []
    for g in range(n_groups):
        slides_in_group = np.unique(cohort.slide_idx[cohort.group_idx == g])
        biopsies.append(int(slides_in_group.size))
    return SummaryTable(cohort.groups, tuple(biopsies), type_counts)


def validate(cohort: CohortTable) -> list[str]:
    """Check table invariants. Returns one message per violation, empty if clean."""
    violations: list[str] = []
    ids, counts = np.unique(cohort.cell_ids, return_counts=True)
    for cid in ids[counts > 1]:
        violations.append(f"cell {int(cid)}: duplicate cell_id")
    bad = ~np.isfinite(cohort.xy).all(axis=1)
    for row in np.nonzero(bad)[0]:
        violations.append(f"cell {int(cohort.cell_ids[row])}: non-finite coordinate")
    neg = (cohort.xy < 0).any(axis=1) & ~bad
    for row in np.nonzero(neg)[0]:
        violations.append(f"cell {int(cohort.cell_ids[row])}: non-negative coordinate violated")
    out_of_range = (cohort.cell_types < 0) | (cohort.cell_types >= N_TYPES)
    for row in np.nonzero(out_of_range)[0]:
        violations.append(f"cell {int(cohort.cell_ids[row])}: cell_type ordinal out of range")
    return violations


def write_cells_csv(cohort: CohortTable, stream: TextIO | str) -> None:
    """Write the canonical cell CSV (round-trips exactly through parse_cell_table)."""
    if isinstance(stream, str):
        with open(stream, "w", encoding="utf-8", newline="") as fh:
            write_cells_csv(cohort, fh)
        return
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(ROLES)
    for row in range(len(cohort)):
        w.writerow([
            cohort.slides[cohort.slide_idx[row]],
            cohort.groups[cohort.group_idx[row]],
            CELL_TYPES[cohort.cell_types[row]],
            repr(float(cohort.xy[row, 0])),
            repr(float(cohort.xy[row, 1])),
        ])


def write_cells_ndjson(cohort: CohortTable, stream: TextIO | str) -> None:
    if isinstance(stream, str):
        with open(stream, "w", encoding="utf-8", newline="") as fh:
            write_cells_ndjson(cohort, fh)
        return
    for row in range(len(cohort)):
        stream.write(json.dumps({
            "slide_id": cohort.slides[cohort.slide_idx[row]],
            "group": cohort.groups[cohort.group_idx[row]],
            "cell_type": CELL_TYPES[cohort.cell_types[row]],
            "x": float(cohort.xy[row, 0]),
            "y": float(cohort.xy[row, 1]),
        }) + "\n")


def cells_to_csv_string(cohort: CohortTable) -> str:
    buf = io.StringIO()
    write_cells_csv(cohort, buf)
    return buf.getvalue()
