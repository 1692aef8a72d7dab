"""Weighted 2-D t-SNE over atlas entries, exact and Barnes-Hut.

Unique signatures are embedded once each, carrying their multiplicity
weights into the affinity matrix: a row's conditional affinity mass is
scaled by the entry's total weight before symmetrization. Duplicate points
contribute no internal geometry, so this reproduces a per-cell embedding at
the cost of the unique-entry count (at most C(k+5, 5) entries).
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import TextIO

import numpy as np

from . import bhtree
from .ingest import CELL_TYPES, N_TYPES
from .signature import SignatureAtlas

KL_RECORD_EVERY = 50
CALIBRATION_STEPS = 50
_INIT_SIGMA = 1e-4


class TsneError(ValueError):
    pass


class PerplexityError(TsneError):
    pass


@dataclass
class TsneParams:
    perplexity: float = 30.0
    iterations: int = 1000
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    learning_rate: float = 200.0
    momentum_early: float = 0.5
    momentum_late: float = 0.8
    theta: float = 0.5          # Barnes-Hut accuracy; 0 = exact
    seed: int = 0

    def validate(self) -> None:
        if self.iterations < 1:
            raise TsneError("iterations must be >= 1")
        if not 0.0 <= self.theta <= 1.0:
            raise TsneError("theta must be in [0, 1]")
        if self.perplexity <= 0:
            raise PerplexityError("perplexity must be positive")
        if self.early_exaggeration < 1 or self.exaggeration_iters < 0:
            raise TsneError("invalid early exaggeration settings")


def _sq_distances(x: np.ndarray) -> np.ndarray:
    sq = np.einsum("ij,ij->i", x, x)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def conditional_affinities(x: np.ndarray, perplexity: float,
                           max_steps: int = CALIBRATION_STEPS):
    """Per-row Gaussian affinities calibrated so each row's Shannon entropy
    is log2(perplexity), via binary search on the row bandwidth.

    Returns (P_cond, betas, warnings); P_cond rows sum to 1 with zero
    diagonal. Rows that fail to converge in ``max_steps`` keep the last
    bandwidth and are flagged.
    """
    x = np.asarray(x, dtype=np.float64)
    m = x.shape[0]
    if m < 2 or perplexity >= m:
        raise PerplexityError("perplexity too large")
    d2 = _sq_distances(x)
    target = np.log(perplexity)  # nats; equals log2(perplexity) in bits

    beta = np.ones(m)
    beta_lo = np.full(m, -np.inf)
    beta_hi = np.full(m, np.inf)
    done = np.zeros(m, dtype=bool)
    eye = np.eye(m, dtype=bool)
    tiny = np.finfo(np.float64).tiny

    w = np.empty_like(d2)
    for _ in range(max_steps):
        np.exp(-d2 * beta[:, None], out=w)
        w[eye] = 0.0
        sum_w = np.maximum(w.sum(axis=1), tiny)
        sum_dw = np.einsum("ij,ij->i", d2, w)
        entropy = np.log(sum_w) + beta * sum_dw / sum_w
        diff = entropy - target
        done = np.abs(diff) < 1e-9
        if done.all():
            break
        too_high = (diff > 0) & ~done
        too_low = (diff < 0) & ~done
        beta_lo[too_high] = beta[too_high]
        beta_hi[too_low] = beta[too_low]
        beta = np.where(too_high,
                        np.where(np.isinf(beta_hi), beta * 2.0, 0.5 * (beta + beta_hi)),
                        beta)
        beta = np.where(too_low,
                        np.where(np.isneginf(beta_lo), beta * 0.5, 0.5 * (beta + beta_lo)),
                        beta)

    np.exp(-d2 * beta[:, None], out=w)
    w[eye] = 0.0
    p_cond = w / np.maximum(w.sum(axis=1, keepdims=True), tiny)
    warnings = []
    n_bad = int((~done).sum())
    if n_bad:
        warnings.append(
            f"perplexity calibration did not converge for {n_bad} entries; "
            "using last bandwidth")
    return p_cond, beta, warnings


def affinities_from_points(x: np.ndarray, weights: np.ndarray | None,
                           perplexity: float):
    """Symmetric joint affinities with optional row-mass weighting.

    Each row of the calibrated conditional matrix is scaled by its entry's
    weight, then the matrix is symmetrized and renormalized to total mass 1.
    """
    p_cond, _, warnings = conditional_affinities(x, perplexity)
    m = x.shape[0]
    if weights is None:
        scaled = p_cond
    else:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (m,) or (weights < 0).any() or weights.sum() <= 0:
            raise TsneError("weights must be non-negative with positive total")
        scaled = p_cond * weights[:, None]
    p = 0.5 * (scaled + scaled.T)
    p /= p.sum()
    return p, warnings


def pairwise_affinities(atlas: SignatureAtlas, perplexity: float,
                        weights_mode: str = "multiplicity") -> np.ndarray:
    """Joint affinity matrix over atlas entries (symmetric, sums to 1)."""
    if weights_mode not in ("multiplicity", "uniform"):
        raise TsneError(f"unknown weights_mode {weights_mode!r}")
    w = atlas.total_weights().astype(np.float64) if weights_mode == "multiplicity" else None
    p, _ = affinities_from_points(atlas.signatures.astype(np.float64), w, perplexity)
    return p


def _student_kernel(layout: np.ndarray) -> np.ndarray:
    num = 1.0 / (1.0 + _sq_distances(layout))
    np.fill_diagonal(num, 0.0)
    return num


def kl_divergence(p: np.ndarray, layout: np.ndarray) -> float:
    """KL(P || Q) with Q the normalized Student-t kernel of the layout."""
    num = _student_kernel(layout)
    q = num / num.sum()
    mask = p > 0
    kl = float(np.sum(p[mask] * np.log(p[mask] / q[mask])))
    return max(kl, 0.0)  # clamp float noise on perfectly matched layouts


def tsne_gradient(p: np.ndarray, layout: np.ndarray) -> np.ndarray:
    """Exact gradient of kl_divergence with respect to the layout."""
    num = _student_kernel(layout)
    q = num / num.sum()
    m = (p - q) * num
    return 4.0 * (layout * m.sum(axis=1)[:, None] - m @ layout)


def _bh_gradient(p: np.ndarray, layout: np.ndarray, theta: float) -> np.ndarray:
    num = _student_kernel(layout)
    w = p * num
    attr = layout * w.sum(axis=1)[:, None] - w @ layout
    rep, z = bhtree.repulsion_forces(layout, theta)
    return 4.0 * (attr - rep / z)


@dataclass
class Embedding2D:
    """2-D coordinates per atlas entry plus optimizer diagnostics."""

    coords: np.ndarray            # (m, 2)
    signatures: np.ndarray        # (m, 6)
    weights: np.ndarray           # (m, n_groups)
    groups: tuple[str, ...]
    anchor_type: str
    k: int
    kl_history: list[float] = field(default_factory=list)
    kl_iters: list[int] = field(default_factory=list)
    params: TsneParams | None = None
    effective_perplexity: float = 0.0
    warnings: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return self.coords.shape[0]

    def group_totals(self) -> dict[str, int]:
        tot = self.weights.sum(axis=0)
        return {g: int(tot[i]) for i, g in enumerate(self.groups)}


def tsne_embed(atlas: SignatureAtlas, params: TsneParams | None = None,
               weights_mode: str = "multiplicity") -> Embedding2D:
    """Run momentum gradient descent on the KL cost from a seeded Gaussian init.

    Early exaggeration multiplies P for the first ``exaggeration_iters``
    iterations; momentum switches from 0.5 to 0.8 when it ends. With
    theta > 0 the repulsion uses the Barnes-Hut quadtree; theta = 0 is the
    exact quadratic form. KL (against the unexaggerated P) is recorded
    every 50 iterations. Deterministic given (params, weights_mode).
    """
    params = params or TsneParams()
    params.validate()
    m = len(atlas)
    warnings: list[str] = []

    perp = params.perplexity
    limit = (m - 1) / 3.0
    if perp > limit:
        perp = limit
        warnings.append(
            f"perplexity {params.perplexity:g} clamped to {perp:g} "
            f"for an atlas of {m} entries")
    if perp <= 0:
        raise PerplexityError("perplexity too large")

    if weights_mode not in ("multiplicity", "uniform"):
        raise TsneError(f"unknown weights_mode {weights_mode!r}")
    w = atlas.total_weights().astype(np.float64) if weights_mode == "multiplicity" else None
    x = atlas.signatures.astype(np.float64)
    p, cal_warnings = affinities_from_points(x, w, perp)
    warnings.extend(cal_warnings)

    rng = np.random.default_rng(params.seed)
    layout = rng.normal(0.0, _INIT_SIGMA, size=(m, 2))
    update = np.zeros_like(layout)
    gains = np.ones_like(layout)

    p_run = p * params.early_exaggeration
    kl_history: list[float] = []
    kl_iters: list[int] = []
    for it in range(params.iterations):
        if it == params.exaggeration_iters:
            p_run = p
        momentum = (params.momentum_early if it < params.exaggeration_iters
                    else params.momentum_late)
        if params.theta == 0.0:
            grad = tsne_gradient(p_run, layout)
        else:
            grad = _bh_gradient(p_run, layout, params.theta)
        # standard adaptive per-coordinate gains
        inc = (update * grad) < 0
        gains[inc] += 0.2
        gains[~inc] *= 0.8
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - params.learning_rate * (gains * grad)
        layout = layout + update
        layout -= layout.mean(axis=0)
        if (it + 1) % KL_RECORD_EVERY == 0 or it == params.iterations - 1:
            if not kl_iters or kl_iters[-1] != it + 1:
                kl_history.append(kl_divergence(p, layout))
                kl_iters.append(it + 1)

    if not np.isfinite(layout).all():
        raise TsneError("layout diverged to non-finite coordinates")
    return Embedding2D(
        coords=layout,
        signatures=atlas.signatures.copy(),
        weights=atlas.weights.copy(),
        groups=atlas.groups,
        anchor_type=atlas.anchor_type,
        k=atlas.k,
        kl_history=kl_history,
        kl_iters=kl_iters,
        params=params,
        effective_perplexity=perp,
        warnings=warnings,
    )


# --- serialization ---------------------------------------------------------

def write_embedding_csv(emb: Embedding2D, stream: TextIO | str) -> None:
    """Embedding CSV: sig_id, x, y, the six signature counts, per-group weights.

    Coordinates are written with repr so the file round-trips bitwise.
    """
    if isinstance(stream, str):
        with open(stream, "w", encoding="utf-8", newline="") as fh:
            write_embedding_csv(emb, fh)
        return
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["sig_id", "x", "y", *CELL_TYPES,
                *[f"weight_{g}" for g in emb.groups]])
    for i in range(len(emb)):
        w.writerow([
            i,
            repr(float(emb.coords[i, 0])),
            repr(float(emb.coords[i, 1])),
            *map(int, emb.signatures[i]),
            *map(int, emb.weights[i]),
        ])


def read_embedding_csv(stream: TextIO | str) -> Embedding2D:
    if isinstance(stream, str):
        with open(stream, "r", encoding="utf-8", newline="") as fh:
            return read_embedding_csv(fh)
    reader = csv.reader(stream)
    header = next(reader)
    expected = ["sig_id", "x", "y", *CELL_TYPES]
    if header[:3 + N_TYPES] != expected:
        raise TsneError(f"bad embedding header: {header[:3 + N_TYPES]}")
    groups = tuple(h[len("weight_"):] for h in header[3 + N_TYPES:]
                   if h.startswith("weight_"))
    coords, sigs, weights = [], [], []
    for row in reader:
        if not row:
            continue
        coords.append((float(row[1]), float(row[2])))
        sigs.append([int(v) for v in row[3:3 + N_TYPES]])
        weights.append([int(v) for v in row[3 + N_TYPES:3 + N_TYPES + len(groups)]])
    if not coords:
        raise TsneError("embedding file has no entries")
    sig_arr = np.array(sigs, dtype=np.int64)
    return Embedding2D(
        coords=np.array(coords, dtype=np.float64),
        signatures=sig_arr,
        weights=np.array(weights, dtype=np.int64),
        groups=groups,
        anchor_type="all",
        k=int(sig_arr[0].sum()),
    )


def write_diagnostics_json(emb: Embedding2D, stream: TextIO | str) -> None:
    if isinstance(stream, str):
        with open(stream, "w", encoding="utf-8", newline="") as fh:
            write_diagnostics_json(emb, fh)
        return
    doc = {
        "schema_version": 1,
        "n_entries": len(emb),
        "groups": list(emb.groups),
        "anchor_type": emb.anchor_type,
        "k": emb.k,
        "params": asdict(emb.params) if emb.params else None,
        "effective_perplexity": emb.effective_perplexity,
        "kl_iters": emb.kl_iters,
        "kl_history": emb.kl_history,
        "warnings": emb.warnings,
    }
    json.dump(doc, stream, indent=2)
    stream.write("\n")


def read_diagnostics_json(stream: TextIO | str) -> dict:
    if isinstance(stream, str):
        with open(stream, "r", encoding="utf-8") as fh:
            return json.load(fh)
    return json.load(stream)
