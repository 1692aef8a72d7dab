"""Synthetic cohorts with planted neighborhood motifs.

The generator exists to make tests sharp, not to model tissue: background
cells are i.i.d. uniform in a square with types drawn from a mixture, and
each motif plants an anchor cell surrounded by a tight ring of a chosen
type. When ring_radius * 10 is below the mean nearest-background spacing
(0.5 / sqrt(density)), the ring dominates the anchor's k-NN and the
anchor's signature equals the planted ring composition for >= 95% of
anchors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .ingest import CELL_TYPES, N_TYPES, CohortTable

ANCHOR_MIN_SEPARATION = 4.0  # in ring radii


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class Motif:
    """One planted pattern: an anchor cell ringed by cells of one type.

    ``groups`` restricts the motif to specific cohort groups; None plants
    it in every group.
    """

    anchor_type: str
    ring_type: str
    ring_count: int
    per_slide: int
    groups: tuple[str, ...] | None = None

    def __post_init__(self):
        for t in (self.anchor_type, self.ring_type):
            if t not in CELL_TYPES:
                raise SynthError(f"unknown cell type {t!r}")
        if self.ring_count < 0 or self.per_slide < 0:
            raise SynthError("motif counts must be non-negative")


@dataclass(frozen=True)
class TissueSpec:
    groups: tuple[str, ...]
    slides_per_group: int
    cells_per_slide: int                   # background cells
    mixture: tuple[float, ...]             # type probabilities, sums to 1
    motifs: tuple[Motif, ...] = ()
    box_size: float = 10000.0
    ring_radius: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not self.groups:
            raise SynthError("at least one group required")
        if self.slides_per_group < 1:
            raise SynthError("slides_per_group must be >= 1")
        if self.cells_per_slide < 0:
            raise SynthError("cells_per_slide must be >= 0")
        if len(self.mixture) != N_TYPES:
            raise SynthError("mixture must have six probabilities")
        if any(p < 0 for p in self.mixture) or abs(sum(self.mixture) - 1.0) > 1e-9:
            raise SynthError("mixture probabilities must be non-negative and sum to 1")
        if self.box_size <= 0:
            raise SynthError("box_size must be positive")
        if self.motifs and not 0 < self.ring_radius < self.box_size / 4:
            raise SynthError("ring_radius must be in (0, box_size/4) when motifs are planted")
        for m in self.motifs:
            if m.groups is not None:
                unknown = set(m.groups) - set(self.groups)
                if unknown:
                    raise SynthError(f"motif references unknown groups: {sorted(unknown)}")

    def to_json(self, stream: TextIO | str) -> None:
        if isinstance(stream, str):
            with open(stream, "w", encoding="utf-8", newline="") as fh:
                self.to_json(fh)
            return
        doc = {
            "groups": list(self.groups),
            "slides_per_group": self.slides_per_group,
            "cells_per_slide": self.cells_per_slide,
            "mixture": list(self.mixture),
            "motifs": [
                {"anchor_type": m.anchor_type, "ring_type": m.ring_type,
                 "ring_count": m.ring_count, "per_slide": m.per_slide,
                 "groups": list(m.groups) if m.groups is not None else None}
                for m in self.motifs
            ],
            "box_size": self.box_size,
            "ring_radius": self.ring_radius,
            "seed": self.seed,
        }
        json.dump(doc, stream, indent=2)
        stream.write("\n")

    @classmethod
    def from_json(cls, stream: TextIO | str) -> "TissueSpec":
        if isinstance(stream, str):
            with open(stream, "r", encoding="utf-8") as fh:
                return cls.from_json(fh)
        doc = json.load(stream)
        motifs = tuple(
            Motif(anchor_type=m["anchor_type"], ring_type=m["ring_type"],
                  ring_count=int(m["ring_count"]), per_slide=int(m["per_slide"]),
                  groups=tuple(m["groups"]) if m.get("groups") is not None else None)
            for m in doc.get("motifs", ())
        )
        return cls(
            groups=tuple(doc["groups"]),
            slides_per_group=int(doc["slides_per_group"]),
            cells_per_slide=int(doc["cells_per_slide"]),
            mixture=tuple(float(p) for p in doc["mixture"]),
            motifs=motifs,
            box_size=float(doc.get("box_size", 10000.0)),
            ring_radius=float(doc.get("ring_radius", 10.0)),
            seed=int(doc.get("seed", 0)),
        )


def _place_anchors(rng: np.random.Generator, count: int, existing: list,
                   box: float, radius: float) -> list[tuple[float, float]]:
    """Rejection-sample anchor centers, separated so rings never interleave."""
    margin = radius
    lo, hi = margin, box - margin
    if hi <= lo:
        raise SynthError("infeasible spec: box too small for ring radius")
    min_sep2 = (ANCHOR_MIN_SEPARATION * radius) ** 2
    placed = []
    tries = 0
    budget = 1000 * max(count, 1)
    while len(placed) < count:
        if tries >= budget:
            raise SynthError(
                "infeasible spec: could not place motif anchors with the "
                "required separation")
        tries += 1
        cand = rng.uniform(lo, hi, size=2)
        ok = True
        for ax, ay in existing + placed:
            if (cand[0] - ax) ** 2 + (cand[1] - ay) ** 2 < min_sep2:
                ok = False
                break
        if ok:
            placed.append((float(cand[0]), float(cand[1])))
    return placed


def generate_tissue(spec: TissueSpec) -> CohortTable:
    """Generate a cohort per the spec. Deterministic given the seed;
    each slide draws from its own spawned RNG stream."""
    n_slides = len(spec.groups) * spec.slides_per_group
    seeds = np.random.SeedSequence(spec.seed).spawn(n_slides)

    slide_names: list[str] = []
    slide_idx_parts, group_idx_parts, type_parts, xy_parts = [], [], [], []
    slide_no = 0
    for gi, group in enumerate(spec.groups):
        motifs = [m for m in spec.motifs if m.groups is None or group in m.groups]
        for s in range(spec.slides_per_group):
            rng = np.random.default_rng(seeds[slide_no])
            slide_names.append(f"{group}_s{s:03d}")

            xy_bg = rng.uniform(0.0, spec.box_size, size=(spec.cells_per_slide, 2))
            types_bg = rng.choice(N_TYPES, size=spec.cells_per_slide,
                                  p=np.asarray(spec.mixture))
            xs, ts = [xy_bg], [types_bg.astype(np.int8)]

            anchors_on_slide: list[tuple[float, float]] = []
            for m in motifs:
                centers = _place_anchors(rng, m.per_slide, anchors_on_slide,
                                         spec.box_size, spec.ring_radius)
                anchors_on_slide.extend(centers)
                for ax, ay in centers:
                    offset = rng.uniform(0.0, 2.0 * np.pi)
                    angles = offset + 2.0 * np.pi * np.arange(m.ring_count) / max(m.ring_count, 1)
                    ring = np.column_stack((
                        ax + spec.ring_radius * np.cos(angles),
                        ay + spec.ring_radius * np.sin(angles),
                    ))
                    xs.append(np.array([[ax, ay]]))
                    ts.append(np.array([CELL_TYPES.index(m.anchor_type)], dtype=np.int8))
                    xs.append(ring)
                    ts.append(np.full(m.ring_count, CELL_TYPES.index(m.ring_type),
                                      dtype=np.int8))

            xy_slide = np.vstack(xs)
            t_slide = np.concatenate(ts)
            n = xy_slide.shape[0]
            slide_idx_parts.append(np.full(n, slide_no, dtype=np.int32))
            group_idx_parts.append(np.full(n, gi, dtype=np.int32))
            type_parts.append(t_slide)
            xy_parts.append(xy_slide)
            slide_no += 1

    xy = np.vstack(xy_parts) if xy_parts else np.empty((0, 2))
    types = np.concatenate(type_parts) if type_parts else np.empty(0, dtype=np.int8)
    slide_idx = np.concatenate(slide_idx_parts) if slide_idx_parts else np.empty(0, np.int32)
    group_idx = np.concatenate(group_idx_parts) if group_idx_parts else np.empty(0, np.int32)
    n_cells = xy.shape[0]
    return CohortTable(np.arange(n_cells, dtype=np.int64), slide_idx, group_idx,
                       types, xy, tuple(slide_names), tuple(spec.groups))
