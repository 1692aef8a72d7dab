#!/usr/bin/env python3
"""Record `cellnn roi` CLI output for the UI equivalence fixtures.

Builds the planted-pattern session (or reuses --session), runs the CLI for
five scripted bounding boxes, and writes tests/fixtures/roi_cases.json with
the exact JSON the CLI printed. The vitest suite replays these as service
responses and asserts the panel model matches field for field.

Usage: python3 scripts/generate_fixtures.py [--session DIR]
"""

import argparse
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

FRONTEND = Path(__file__).resolve().parent.parent


def build_session(root: Path) -> Path:
    sys.path.insert(0, str(FRONTEND.parent / "tests"))
    from conftest import planted_tissue_spec  # noqa: E402

    from cellnn.cli import main as cli_main

    spec = planted_tissue_spec(slides_per_group=3, cells_per_slide=2000, seed=2024)
    spec_path = root / "spec.json"
    spec.to_json(str(spec_path))
    cells = root / "cells.csv"
    out = root / "session"
    assert cli_main(["synth", "--spec", str(spec_path), "--out", str(cells)]) == 0
    assert cli_main(["pipeline", "--cells", str(cells), "--anchor", "neu",
                     "--seed", "0", "--threads", "1", "--out", str(out)]) == 0
    return out


def scripted_bboxes(session: Path) -> list[dict]:
    from cellnn import tsne

    emb = tsne.read_embedding_csv(str(session / "embedding.csv"))
    span = float((emb.coords.max(axis=0) - emb.coords.min(axis=0)).max())
    eps = 0.01 * span

    def around(signature):
        hit = np.nonzero((emb.signatures == np.array(signature)).all(axis=1))[0]
        x, y = emb.coords[int(hit[0])]
        return {"xmin": float(x - eps), "ymin": float(y - eps),
                "xmax": float(x + eps), "ymax": float(y + eps)}

    lo = emb.coords.min(axis=0)
    hi = emb.coords.max(axis=0)
    whole = {"xmin": float(lo[0] - 1), "ymin": float(lo[1] - 1),
             "xmax": float(hi[0] + 1), "ymax": float(hi[1] + 1)}
    empty = {"xmin": float(hi[0] + 10), "ymin": float(hi[1] + 10),
             "xmax": float(hi[0] + 20), "ymax": float(hi[1] + 20)}
    mid = {"xmin": float(lo[0]), "ymin": float(lo[1]),
           "xmax": float((lo[0] + hi[0]) / 2), "ymax": float((lo[1] + hi[1]) / 2)}
    return [
        {"name": "lym-ring box", "bbox": around([0, 0, 10, 0, 0, 0]), "g1": "A", "g2": "B"},
        {"name": "epi-ring box", "bbox": around([0, 10, 0, 0, 0, 0]), "g1": "A", "g2": "B"},
        {"name": "whole embedding", "bbox": whole, "g1": "A", "g2": "B"},
        {"name": "empty region", "bbox": empty, "g1": "A", "g2": "B"},
        {"name": "lower-left quadrant", "bbox": mid, "g1": "B", "g2": "A"},
    ]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--session", help="reuse an existing pipeline session")
    args = ap.parse_args(argv)

    tmp = None
    if args.session:
        session = Path(args.session)
    else:
        tmp = tempfile.TemporaryDirectory()
        session = build_session(Path(tmp.name))

    cases = []
    for case in scripted_bboxes(session):
        bb = case["bbox"]
        bbox_arg = f"--bbox={bb['xmin']!r},{bb['ymin']!r},{bb['xmax']!r},{bb['ymax']!r}"
        proc = subprocess.run(
            [sys.executable, "-m", "cellnn.cli", "roi",
             "--embedding", str(session / "embedding.csv"),
             bbox_arg, "--g1", case["g1"], "--g2", case["g2"]],
            capture_output=True, text=True, check=True)
        cases.append({**case, "cli": json.loads(proc.stdout)})

    meta = json.loads((session / "diagnostics.json").read_text())
    out_path = FRONTEND / "tests" / "fixtures" / "roi_cases.json"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps({
        "k": meta["k"],
        "groups": meta["groups"],
        "cases": cases,
    }, indent=2) + "\n")
    print(f"wrote {out_path} ({len(cases)} cases)")
    if tmp:
        tmp.cleanup()
    return 0


if __name__ == "__main__":
    sys.exit(main())
