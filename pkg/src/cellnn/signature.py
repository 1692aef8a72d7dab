"""Per-cell k-nearest-neighbor composition signatures and the deduplicated atlas.

Each cell's signature counts the cell types among its k nearest same-slide
neighbors (Euclidean distance, center excluded). Neighborhoods never cross
slide boundaries. Ties at the k-th distance are broken by ascending cell_id,
which makes every query reproducible and brute-force checkable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import TextIO

import numpy as np
from scipy.spatial import cKDTree

from .ingest import CELL_TYPES, N_TYPES, CohortTable

DROP_INSUFFICIENT = "insufficient neighbors"


class SignatureError(ValueError):
    pass


@dataclass(frozen=True)
class NeighborhoodSignature:
    """6-vector of neighbor type counts summing to k."""

    counts: tuple[int, ...]
    k: int

    def __post_init__(self):
        if len(self.counts) != N_TYPES:
            raise SignatureError("signature must have six counts")
        if any(c < 0 for c in self.counts) or sum(self.counts) != self.k:
            raise SignatureError(f"counts must be non-negative and sum to k={self.k}")


@dataclass(frozen=True)
class Dropped:
    """Marker for a cell excluded from signature analysis."""

    reason: str


class SpatialIndex:
    """KD-tree over one slide's cells with a deterministic k-NN tie-break.

    Backed by scipy's cKDTree (balanced, default leaf size 16). Queries
    return exactly the brute-force result: the k nearest by Euclidean
    distance excluding the center, ties at the k-th distance resolved by
    ascending cell_id.
    """

    def __init__(self, xy: np.ndarray, cell_ids: np.ndarray,
                 cell_types: np.ndarray, leaf_size: int = 16):
        xy = np.ascontiguousarray(xy, dtype=np.float64)
        if xy.ndim != 2 or xy.shape[1] != 2 or xy.shape[0] == 0:
            raise SignatureError("index requires at least one cell with 2-D coordinates")
        if leaf_size < 1:
            raise SignatureError("leaf_size must be positive")
        self.xy = xy
        self.cell_ids = np.asarray(cell_ids, dtype=np.int64)
        self.cell_types = np.asarray(cell_types, dtype=np.int8)
        self.leaf_size = leaf_size
        self.n = xy.shape[0]
        self._id_to_row = {int(c): r for r, c in enumerate(self.cell_ids)}
        self.tree = cKDTree(xy, leafsize=leaf_size, balanced_tree=True)

    def row_of(self, cell_id: int) -> int:
        try:
            return self._id_to_row[int(cell_id)]
        except KeyError:
            raise SignatureError(f"cell {cell_id} is not in the index") from None

    def _brute_rows(self, row: int, k: int) -> np.ndarray:
        """Full-scan fallback used when cKDTree boundary ties need resolving."""
        diff = self.xy - self.xy[row]
        d = np.sqrt(diff[:, 0] ** 2 + diff[:, 1] ** 2)
        order = np.lexsort((self.cell_ids, d))
        order = order[order != row]
        return order[:k]

    def query_knn(self, row: int, k: int) -> np.ndarray:
        """Rows of the k nearest neighbors of ``row``, self excluded.

        The fast path asks the tree for k+2 candidates; if the (k+1)-th
        non-self distance strictly exceeds the k-th, no point outside the
        window can tie at the boundary and the first k candidates are exact.
        Otherwise a full scan applies the tie-break.
        """
        if self.n - 1 < k:
            raise SignatureError(f"slide has only {self.n - 1} other cells, need {k}")
        kq = min(self.n, k + 2)
        d, idx = self.tree.query(self.xy[row], k=kq)
        d, idx = np.atleast_1d(d), np.atleast_1d(idx)
        self_mask = idx == row
        if self_mask.sum() != 1:
            # coincident duplicates pushed the self entry out of the window
            return self._brute_rows(row, k)
        cand_d, cand_i = d[~self_mask], idx[~self_mask]
        if cand_i.size > k and cand_d[k] == cand_d[k - 1]:
            return self._brute_rows(row, k)
        return cand_i[:k]

    def query_knn_all(self, k: int, max_radius: float | None = None,
                      workers: int = 1):
        """Batch k-NN for every cell on the slide.

        Returns (neighbors, retained): ``neighbors`` is (n, k) row indices
        (rows of dropped cells are zero-filled), ``retained`` marks cells
        whose k-th neighbor lies within ``max_radius``.
        """
        n = self.n
        if n - 1 < k:
            return np.zeros((n, k), dtype=np.int64), np.zeros(n, dtype=bool)
        kq = min(n, k + 2)
        d, idx = self.tree.query(self.xy, k=kq, workers=workers)
        rows = np.arange(n)
        self_pos = idx == rows[:, None]
        clean = self_pos.sum(axis=1) == 1

        neighbors = np.zeros((n, k), dtype=np.int64)
        kth_dist = np.empty(n, dtype=np.float64)
        slow = ~clean
        cr = np.nonzero(clean)[0]
        if cr.size:
            # drop the self column by shifting later candidates one slot left
            pos = np.argmax(self_pos[cr], axis=1)
            cols = np.arange(kq - 1)[None, :]
            take = cols + (cols >= pos[:, None])
            cand_i = idx[cr[:, None], take]
            cand_d = d[cr[:, None], take]
            neighbors[cr] = cand_i[:, :k]
            kth_dist[cr] = cand_d[:, k - 1]
            if kq - 1 > k:
                slow[cr[cand_d[:, k] == cand_d[:, k - 1]]] = True

        for row in np.nonzero(slow)[0]:
            nb = self._brute_rows(row, k)
            neighbors[row] = nb
            diff = self.xy[nb[-1]] - self.xy[row]
            kth_dist[row] = np.sqrt(diff[0] ** 2 + diff[1] ** 2)

        retained = np.ones(n, dtype=bool)
        if max_radius is not None:
            retained &= kth_dist <= max_radius
        return neighbors, retained


def build_spatial_index(cohort: CohortTable, slide_id: str,
                        leaf_size: int = 16) -> SpatialIndex:
    """Index one slide's cells."""
    rows = cohort.slide_rows(slide_id)
    if rows.size == 0:
        raise SignatureError(f"slide {slide_id!r} has no cells")
    return SpatialIndex(cohort.xy[rows], cohort.cell_ids[rows],
                        cohort.cell_types[rows], leaf_size=leaf_size)


def knn_signature(index: SpatialIndex, cell_id: int, k: int = 10,
                  max_radius: float | None = None) -> NeighborhoodSignature | Dropped:
    """Composition signature of one cell's k nearest same-slide neighbors."""
    row = index.row_of(cell_id)
    if index.n - 1 < k:
        return Dropped(DROP_INSUFFICIENT)
    nb = index.query_knn(row, k)
    if max_radius is not None:
        diff = index.xy[nb[-1]] - index.xy[row]
        if np.sqrt(diff[0] ** 2 + diff[1] ** 2) > max_radius:
            return Dropped(DROP_INSUFFICIENT)
    counts = np.bincount(index.cell_types[nb].astype(np.int64), minlength=N_TYPES)
    return NeighborhoodSignature(tuple(int(c) for c in counts), k)


@dataclass
class SignatureAssignment:
    """Signature (or drop reason) for every cell of a cohort, aligned to rows."""

    cell_ids: np.ndarray       # (n,)
    counts: np.ndarray         # (n, 6), valid only where retained
    retained: np.ndarray       # (n,) bool
    k: int

    def n_retained(self) -> int:
        return int(self.retained.sum())

    def signature_of(self, cell_id: int) -> NeighborhoodSignature | Dropped:
        rows = np.nonzero(self.cell_ids == cell_id)[0]
        if rows.size == 0:
            raise SignatureError(f"cell {cell_id} not in assignment")
        row = int(rows[0])
        if not self.retained[row]:
            return Dropped(DROP_INSUFFICIENT)
        return NeighborhoodSignature(tuple(int(c) for c in self.counts[row]), self.k)


def compute_signatures(cohort: CohortTable, k: int = 10,
                       max_radius: float | None = None,
                       leaf_size: int = 16, threads: int = 1) -> SignatureAssignment:
    """Compute every cell's signature, slide by slide.

    Cells on slides with fewer than k other cells (or whose k-th neighbor
    lies beyond ``max_radius``) are dropped. Results are keyed by cell_id
    and deterministic regardless of ``threads``.
    """
    n = len(cohort)
    counts = np.zeros((n, N_TYPES), dtype=np.int16)
    retained = np.zeros(n, dtype=bool)
    for s, slide_id in enumerate(cohort.slides):
        rows = np.nonzero(cohort.slide_idx == s)[0]
        index = SpatialIndex(cohort.xy[rows], cohort.cell_ids[rows],
                             cohort.cell_types[rows], leaf_size=leaf_size)
        neighbors, keep = index.query_knn_all(k, max_radius=max_radius,
                                              workers=threads)
        if not keep.any():
            continue
        types_n = index.cell_types[neighbors]          # (n_slide, k)
        slide_counts = np.zeros((rows.size, N_TYPES), dtype=np.int16)
        for t in range(N_TYPES):
            slide_counts[:, t] = (types_n == t).sum(axis=1)
        counts[rows[keep]] = slide_counts[keep]
        retained[rows[keep]] = True
    return SignatureAssignment(cohort.cell_ids.copy(), counts, retained, k)


@dataclass
class SignatureAtlas:
    """Deduplicated signatures with per-group multiplicity weights.

    Entries are lexicographically sorted by counts, so sig_ids are stable
    for a given cohort regardless of input order.
    """

    signatures: np.ndarray     # (m, 6) int
    weights: np.ndarray        # (m, n_groups) int
    groups: tuple[str, ...]
    anchor_type: str           # one of CELL_TYPES or "all"
    k: int

    def __len__(self) -> int:
        return self.signatures.shape[0]

    def total_weights(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def group_totals(self) -> dict[str, int]:
        tot = self.weights.sum(axis=0)
        return {g: int(tot[i]) for i, g in enumerate(self.groups)}


def build_atlas(assignment: SignatureAssignment, cohort: CohortTable,
                anchor_type: str = "all") -> SignatureAtlas:
    """Group identical signatures of retained anchor-type cells, weighted per cohort group."""
    if anchor_type != "all" and anchor_type not in CELL_TYPES:
        raise SignatureError(f"unknown anchor type {anchor_type!r}")
    mask = assignment.retained.copy()
    if anchor_type != "all":
        mask &= cohort.cell_types == CELL_TYPES.index(anchor_type)
    if not mask.any():
        raise SignatureError(f"empty atlas: no retained cells with anchor type {anchor_type!r}")
    sigs = assignment.counts[mask]
    uniq, inverse = np.unique(sigs, axis=0, return_inverse=True)
    weights = np.zeros((uniq.shape[0], len(cohort.groups)), dtype=np.int64)
    np.add.at(weights, (inverse.ravel(), cohort.group_idx[mask]), 1)
    return SignatureAtlas(uniq.astype(np.int64), weights, cohort.groups,
                          anchor_type, assignment.k)


# --- serialization ---------------------------------------------------------

def write_atlas_csv(atlas: SignatureAtlas, stream: TextIO | str) -> None:
    if isinstance(stream, str):
        with open(stream, "w", encoding="utf-8", newline="") as fh:
            write_atlas_csv(atlas, fh)
        return
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["sig_id", *CELL_TYPES, *[f"weight_{g}" for g in atlas.groups]])
    for i in range(len(atlas)):
        w.writerow([i, *map(int, atlas.signatures[i]), *map(int, atlas.weights[i])])


def read_atlas_csv(stream: TextIO | str, anchor_type: str = "all") -> SignatureAtlas:
    if isinstance(stream, str):
        with open(stream, "r", encoding="utf-8", newline="") as fh:
            return read_atlas_csv(fh, anchor_type=anchor_type)
    reader = csv.reader(stream)
    header = next(reader)
    expected = ["sig_id", *CELL_TYPES]
    if header[:7] != expected:
        raise SignatureError(f"bad atlas header: {header[:7]}")
    groups = tuple(h[len("weight_"):] for h in header[7:] if h.startswith("weight_"))
    sigs, weights = [], []
    for row in reader:
        if not row:
            continue
        sigs.append([int(v) for v in row[1:7]])
        weights.append([int(v) for v in row[7:7 + len(groups)]])
    sig_arr = np.array(sigs, dtype=np.int64)
    k = int(sig_arr[0].sum()) if len(sigs) else 0
    return SignatureAtlas(sig_arr, np.array(weights, dtype=np.int64),
                          groups, anchor_type, k)


def write_assignment_csv(assignment: SignatureAssignment, atlas: SignatureAtlas,
                         stream: TextIO | str) -> None:
    """Write cell_id -> sig_id (or drop reason), with sig_ids from ``atlas``."""
    if isinstance(stream, str):
        with open(stream, "w", encoding="utf-8", newline="") as fh:
            write_assignment_csv(assignment, atlas, fh)
        return
    sig_id = {tuple(map(int, atlas.signatures[i])): i for i in range(len(atlas))}
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["cell_id", "sig_id", "dropped_reason"])
    for row in range(assignment.cell_ids.shape[0]):
        if assignment.retained[row]:
            key = tuple(map(int, assignment.counts[row]))
            w.writerow([int(assignment.cell_ids[row]), sig_id.get(key, ""), ""])
        else:
            w.writerow([int(assignment.cell_ids[row]), "", DROP_INSUFFICIENT])
