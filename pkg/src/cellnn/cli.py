"""Pipeline driver: run analysis stages end-to-end or one at a time.

Every stage reads and writes plain CSV/JSON artifacts, so `pipeline` is
literally the staged subcommands composed through the filesystem and
produces byte-identical files to running the stages by hand.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import density as density_mod
from . import ingest, quantify, render, signature, synth, tsne

STAGE_FILES = {
    "cells": "cells.csv",
    "summary": "summary.csv",
    "assignment": "assignment.csv",
    "atlas_all": "atlas_all.csv",
    "atlas": "atlas.csv",
    "embedding": "embedding.csv",
    "diagnostics": "diagnostics.json",
    "figure": "figure.svg",
}


def group_slug(group: str) -> str:
    slug = re.sub(r"[^A-Za-z0-9_.-]+", "_", group)
    return slug or "group"


def resolve_threads(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("CELLNN_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"CELLNN_THREADS must be an integer, got {env!r}") from None
    return 1


def _parse_grid(text: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) == 1:
        n = int(parts[0])
        return n, n
    if len(parts) == 2:
        return int(parts[0]), int(parts[1])
    raise ValueError(f"grid must be N or NX,NY, got {text!r}")


def _parse_bandwidth(text: str):
    if text == "scott":
        return "scott"
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"bandwidth must be 'scott' or hx,hy, got {text!r}")
    return float(parts[0]), float(parts[1])


def _load_cohort(args) -> ingest.CohortTable:
    fmt = getattr(args, "format", "csv")
    cohort = ingest.parse_cell_table(args.cells, format=fmt)
    violations = ingest.validate(cohort)
    if violations:
        head = "; ".join(violations[:3])
        raise ValueError(f"{len(violations)} validation violation(s): {head}")
    return cohort


def _ensure_outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- stage implementations (shared by single commands and pipeline) --------

def _stage_signatures(cohort, k, max_radius, threads, outdir: Path):
    assignment = signature.compute_signatures(cohort, k=k, max_radius=max_radius,
                                              threads=threads)
    atlas_all = signature.build_atlas(assignment, cohort, "all")
    signature.write_atlas_csv(atlas_all, str(outdir / STAGE_FILES["atlas_all"]))
    signature.write_assignment_csv(assignment, atlas_all,
                                   str(outdir / STAGE_FILES["assignment"]))
    return assignment, atlas_all


def _stage_atlas(cohort, assignment, anchor: str, out_path: Path):
    atlas = signature.build_atlas(assignment, cohort, anchor)
    signature.write_atlas_csv(atlas, str(out_path))
    return atlas


def _stage_embed(atlas_path: Path, anchor: str, params: tsne.TsneParams,
                 outdir: Path):
    atlas = signature.read_atlas_csv(str(atlas_path), anchor_type=anchor)
    emb = tsne.tsne_embed(atlas, params)
    tsne.write_embedding_csv(emb, str(outdir / STAGE_FILES["embedding"]))
    tsne.write_diagnostics_json(emb, str(outdir / STAGE_FILES["diagnostics"]))
    return emb


def _stage_density(embedding_path: Path, bandwidth, grid_size, outdir: Path):
    emb = tsne.read_embedding_csv(str(embedding_path))
    written = []
    for gi, group in enumerate(emb.groups):
        w = emb.weights[:, gi].astype(np.float64)
        if w.sum() <= 0:
            print(f"note: group {group!r} has no cells in this atlas; skipped",
                  file=sys.stderr)
            continue
        grid = density_mod.kde_fit(emb.coords, w, bandwidth=bandwidth,
                                   grid_size=grid_size, group=group)
        slug = group_slug(group)
        density_mod.write_density_csv(grid, str(outdir / f"density_{slug}.csv"))
        density_mod.write_density_json(grid, str(outdir / f"density_{slug}.json"))
        thresholds = density_mod.contour_levels(grid)
        density_mod.write_contours_json(group, density_mod.DEFAULT_QUANTILES,
                                        thresholds,
                                        str(outdir / f"contours_{slug}.json"))
        written.append(group)
    if not written:
        raise ValueError("no group had positive weight; nothing to fit")
    return written


def _load_grids(outdir: Path) -> list:
    grids = []
    for jpath in sorted(outdir.glob("density_*.json")):
        cpath = jpath.with_suffix(".csv")
        if cpath.exists():
            grids.append(density_mod.read_density(str(cpath), str(jpath)))
    return grids


def _stage_render(embedding_path: Path, grids, options, bboxes, out_path: Path):
    emb = tsne.read_embedding_csv(str(embedding_path))
    svg = render.render_svg(emb, grids, options, bboxes)
    out_path.write_text(svg, encoding="utf-8")


# --- subcommand handlers ----------------------------------------------------

def cmd_ingest(args) -> int:
    if args.detections:
        detections = ingest.parse_detection_table(args.detections)
        cells = ingest.merge_patch_coordinates(detections)
        cohort = ingest.CohortTable.from_cells(cells)
    else:
        cohort = ingest.parse_cell_table(args.cells, format=args.format)
    violations = ingest.validate(cohort)
    if violations:
        for v in violations[:10]:
            print(f"violation: {v}", file=sys.stderr)
        raise ValueError(f"{len(violations)} validation violation(s)")
    ingest.write_cells_csv(cohort, args.out)
    print(f"wrote {len(cohort)} cells ({len(cohort.slides)} slides, "
          f"{len(cohort.groups)} groups) to {args.out}")
    return 0


def cmd_summarize(args) -> int:
    cohort = ingest.parse_cell_table(args.cells, format=args.format)
    table = ingest.summarize(cohort)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            table.to_csv(fh)
    if args.table_format == "csv":
        table.to_csv(sys.stdout)
    else:
        print(table.to_text())
    return 0


def cmd_signatures(args) -> int:
    cohort = _load_cohort(args)
    outdir = _ensure_outdir(args.out)
    threads = resolve_threads(args.threads)
    assignment, atlas_all = _stage_signatures(cohort, args.k, args.max_radius,
                                              threads, outdir)
    n_ret = assignment.n_retained()
    print(f"retained {n_ret}/{len(cohort)} cells; "
          f"{len(atlas_all)} unique signatures -> {outdir}")
    return 0


def cmd_atlas(args) -> int:
    cohort = _load_cohort(args)
    threads = resolve_threads(args.threads)
    assignment = signature.compute_signatures(cohort, k=args.k,
                                              max_radius=args.max_radius,
                                              threads=threads)
    atlas = _stage_atlas(cohort, assignment, args.anchor, Path(args.out))
    print(f"atlas: {len(atlas)} entries, anchor={args.anchor}, "
          f"weights={atlas.group_totals()} -> {args.out}")
    return 0


def cmd_embed(args) -> int:
    outdir = _ensure_outdir(args.out)
    params = tsne.TsneParams(perplexity=args.perplexity, iterations=args.iters,
                             theta=args.theta, seed=args.seed)
    emb = _stage_embed(Path(args.atlas), args.anchor, params, outdir)
    print(f"embedded {len(emb)} entries; final KL "
          f"{emb.kl_history[-1]:.4f} -> {outdir}")
    return 0


def cmd_density(args) -> int:
    outdir = _ensure_outdir(args.out)
    groups = _stage_density(Path(args.embedding), _parse_bandwidth(args.bandwidth),
                            _parse_grid(args.grid), outdir)
    print(f"fitted density for {len(groups)} group(s) -> {outdir}")
    return 0


def cmd_roi(args) -> int:
    emb = tsne.read_embedding_csv(args.embedding)
    bbox = quantify.BBox.parse(args.bbox)
    payload = quantify.roi_payload(emb, bbox, args.g1, args.g2)
    json.dump(payload, sys.stdout, indent=2)
    print()
    return 0


def cmd_render(args) -> int:
    grids = _load_grids(Path(args.density)) if args.density else []
    options = render.RenderOptions(mode=args.mode, per_cell=args.per_cell,
                                   jitter_radius=args.jitter, seed=args.seed)
    bboxes = [quantify.BBox.parse(b) for b in (args.bbox or [])]
    _stage_render(Path(args.embedding), grids, options, bboxes, Path(args.out))
    print(f"wrote {args.out}")
    return 0


def cmd_synth(args) -> int:
    spec = synth.TissueSpec.from_json(args.spec)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    cohort = synth.generate_tissue(spec)
    ingest.write_cells_csv(cohort, args.out)
    print(f"generated {len(cohort)} cells ({len(cohort.slides)} slides) -> {args.out}")
    return 0


def cmd_pipeline(args) -> int:
    outdir = _ensure_outdir(args.out)
    threads = resolve_threads(args.threads)
    cohort = _load_cohort(args)

    table = ingest.summarize(cohort)
    with open(outdir / STAGE_FILES["summary"], "w", encoding="utf-8", newline="") as fh:
        table.to_csv(fh)
    print(table.to_text())

    assignment, _ = _stage_signatures(cohort, args.k, args.max_radius, threads, outdir)
    _stage_atlas(cohort, assignment, args.anchor, outdir / STAGE_FILES["atlas"])

    params = tsne.TsneParams(perplexity=args.perplexity, iterations=args.iters,
                             theta=args.theta, seed=args.seed)
    emb = _stage_embed(outdir / STAGE_FILES["atlas"], args.anchor, params, outdir)

    _stage_density(outdir / STAGE_FILES["embedding"],
                   _parse_bandwidth(args.bandwidth), _parse_grid(args.grid), outdir)

    options = render.RenderOptions(mode="both", seed=args.seed)
    _stage_render(outdir / STAGE_FILES["embedding"], _load_grids(outdir),
                  options, [], outdir / STAGE_FILES["figure"])
    print(f"pipeline complete: {len(emb)} atlas entries, "
          f"final KL {emb.kl_history[-1]:.4f} -> {outdir}")
    return 0


def cmd_serve(args) -> int:
    from . import service  # deferred: keeps fastapi import off the hot path
    session = service.load_session(args.session)
    app = service.create_app(session, ui_dir=args.ui)
    import uvicorn
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# --- parser -----------------------------------------------------------------

def _add_cells_arg(p, required=True):
    p.add_argument("--cells", required=required, help="cell table (CSV/NDJSON)")
    p.add_argument("--format", default="csv", choices=("csv", "ndjson"),
                   help="cell table format")


def _add_signature_args(p):
    p.add_argument("--k", type=int, default=10, help="neighborhood size")
    p.add_argument("--max-radius", dest="max_radius", type=float, default=None,
                   help="neighbor search radius (default unbounded)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default $CELLNN_THREADS or 1)")


def _add_tsne_args(p):
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--theta", type=float, default=0.5,
                   help="Barnes-Hut accuracy in [0,1]; 0 = exact")
    p.add_argument("--seed", type=int, default=0)


def _add_density_args(p):
    p.add_argument("--grid", default="512", help="grid size N or NX,NY")
    p.add_argument("--bandwidth", default="scott", help="'scott' or hx,hy")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellnn",
        description="Cell-neighborhood signature analysis: signatures, "
                    "embedding, density, and ROI odds ratios.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse/merge a cell table and write the canonical CSV")
    _add_cells_arg(p, required=False)
    p.add_argument("--detections", help="patch-local detections CSV to merge")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("summarize", help="biopsy and cell-type counts per group")
    _add_cells_arg(p)
    p.add_argument("--table-format", default="text", choices=("text", "csv"))
    p.add_argument("--out", help="also write the CSV summary here")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("signatures", help="compute k-NN signatures and the full atlas")
    _add_cells_arg(p)
    _add_signature_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_signatures)

    p = sub.add_parser("atlas", help="build the anchor-filtered signature atlas")
    _add_cells_arg(p)
    _add_signature_args(p)
    p.add_argument("--anchor", default="all", choices=(*ingest.CELL_TYPES, "all"))
    p.add_argument("--out", required=True, help="atlas CSV path")
    p.set_defaults(func=cmd_atlas)

    p = sub.add_parser("embed", help="t-SNE embed an atlas")
    p.add_argument("--atlas", required=True)
    p.add_argument("--anchor", default="all", choices=(*ingest.CELL_TYPES, "all"),
                   help="anchor label recorded in diagnostics")
    _add_tsne_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("density", help="per-group KDE grids and contour levels")
    p.add_argument("--embedding", required=True)
    _add_density_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("roi", help="odds ratio and composition for one bbox")
    p.add_argument("--embedding", required=True)
    p.add_argument("--bbox", required=True, help="xmin,ymin,xmax,ymax")
    p.add_argument("--g1", required=True)
    p.add_argument("--g2", required=True)
    p.set_defaults(func=cmd_roi)

    p = sub.add_parser("render", help="render scatter/contour SVG")
    p.add_argument("--embedding", required=True)
    p.add_argument("--density", help="directory with density_* artifacts")
    p.add_argument("--mode", default="both", choices=("scatter", "contour", "both"))
    p.add_argument("--per-cell", dest="per_cell", action="store_true",
                   help="one mark per cell (weight-expanded) instead of per signature")
    p.add_argument("--jitter", type=float, default=0.0,
                   help="per-cell jitter radius in embedding units")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bbox", action="append", help="overlay bbox (repeatable)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("synth", help="generate a synthetic cohort from a spec JSON")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", help="run every stage into one session directory")
    _add_cells_arg(p)
    _add_signature_args(p)
    p.add_argument("--anchor", default="all", choices=(*ingest.CELL_TYPES, "all"))
    _add_tsne_args(p)
    _add_density_args(p)
    p.add_argument("--out", required=True, help="session directory")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("serve", help="serve a completed session for the explorer UI")
    p.add_argument("--session", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8777)
    p.add_argument("--ui", help="directory with the built explorer UI")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
