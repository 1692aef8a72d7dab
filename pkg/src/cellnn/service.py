"""Read-only HTTP facade over a completed analysis session.

A session is a directory of pipeline artifacts. Everything is loaded once
at startup and never mutated, so responses are pure functions of
(artifacts, request); /api/roi shares the exact code path with `cellnn roi`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import density as density_mod
from . import quantify, tsne

SCHEMA_VERSION = 1
REQUIRED_ARTIFACTS = ("embedding.csv", "atlas.csv", "diagnostics.json")


class SessionError(ValueError):
    pass


@dataclass
class Session:
    directory: Path
    embedding: tsne.Embedding2D
    diagnostics: dict
    grids: dict[str, density_mod.DensityGrid]
    contours: dict[str, dict]


def load_session(session_dir: str | Path) -> Session:
    d = Path(session_dir)
    missing = [name for name in REQUIRED_ARTIFACTS if not (d / name).exists()]
    density_json = sorted(d.glob("density_*.json"))
    if not any(d.glob("density_*.csv")):
        missing.append("density_*.csv")
    if missing:
        raise SessionError(f"session {d} is missing artifacts: {', '.join(missing)}")

    emb = tsne.read_embedding_csv(str(d / "embedding.csv"))
    diag = tsne.read_diagnostics_json(str(d / "diagnostics.json"))
    emb.anchor_type = diag.get("anchor_type", emb.anchor_type)
    if diag.get("k"):
        emb.k = int(diag["k"])

    grids: dict[str, density_mod.DensityGrid] = {}
    contours: dict[str, dict] = {}
    for jpath in density_json:
        cpath = jpath.with_suffix(".csv")
        if not cpath.exists():
            continue
        grid = density_mod.read_density(str(cpath), str(jpath))
        grids[grid.group] = grid
        con_path = jpath.with_name("contours_" + jpath.name[len("density_"):])
        if con_path.exists():
            with open(con_path, "r", encoding="utf-8") as fh:
                contours[grid.group] = json.load(fh)
        else:
            contours[grid.group] = {
                "schema_version": SCHEMA_VERSION,
                "group": grid.group,
                "quantiles": list(density_mod.DEFAULT_QUANTILES),
                "thresholds": density_mod.contour_levels(grid),
            }
    return Session(directory=d, embedding=emb, diagnostics=diag,
                   grids=grids, contours=contours)


class BBoxModel(BaseModel):
    xmin: float
    ymin: float
    xmax: float
    ymax: float


class RoiRequest(BaseModel):
    bbox: BBoxModel
    g1: str
    g2: str


def _embedding_payload(emb: tsne.Embedding2D) -> dict:
    entries = []
    for i in range(len(emb)):
        entries.append({
            "sig_id": i,
            "x": float(emb.coords[i, 0]),
            "y": float(emb.coords[i, 1]),
            "signature": [int(v) for v in emb.signatures[i]],
            "weights": {g: int(emb.weights[i, gi])
                        for gi, g in enumerate(emb.groups)},
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "groups": list(emb.groups),
        "entries": entries,
    }


def _density_payload(grid: density_mod.DensityGrid) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "group": grid.group,
        "origin": list(grid.origin),
        "cell_size": list(grid.cell_size),
        "nx": grid.nx,
        "ny": grid.ny,
        "bandwidth": list(grid.bandwidth),
        "values": [[float(v) for v in row] for row in grid.values],
    }


def create_app(session: Session, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="cellnn session", docs_url=None, redoc_url=None)
    emb = session.embedding
    embedding_payload = _embedding_payload(emb)
    density_payloads = {g: _density_payload(grid)
                        for g, grid in session.grids.items()}
    meta = {
        "schema_version": SCHEMA_VERSION,
        "groups": list(emb.groups),
        "anchor_type": emb.anchor_type,
        "k": emb.k,
        "n_entries": len(emb),
        "params": session.diagnostics.get("params"),
        "effective_perplexity": session.diagnostics.get("effective_perplexity"),
        "density_groups": sorted(session.grids),
    }

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/api/meta")
    def api_meta():
        return meta

    @app.get("/api/embedding")
    def api_embedding():
        return embedding_payload

    @app.get("/api/density")
    def api_density(group: str = ""):
        payload = density_payloads.get(group)
        if payload is None:
            return JSONResponse(status_code=404, content={"error": "unknown group"})
        return payload

    @app.get("/api/contours")
    def api_contours(group: str = ""):
        payload = session.contours.get(group)
        if payload is None:
            return JSONResponse(status_code=404, content={"error": "unknown group"})
        return payload

    @app.post("/api/roi")
    def api_roi(req: RoiRequest):
        try:
            bbox = quantify.BBox(req.bbox.xmin, req.bbox.ymin,
                                 req.bbox.xmax, req.bbox.ymax)
        except quantify.QuantifyError as e:
            return JSONResponse(status_code=400, content={"error": str(e)})
        for g in (req.g1, req.g2):
            if g not in emb.groups:
                return JSONResponse(status_code=404, content={"error": "unknown group"})
        try:
            return quantify.roi_payload(emb, bbox, req.g1, req.g2)
        except quantify.QuantifyError as e:
            return JSONResponse(status_code=400, content={"error": str(e)})

    ui = Path(ui_dir) if ui_dir else session.directory / "ui"
    if ui.is_dir():
        app.mount("/", StaticFiles(directory=str(ui), html=True), name="ui")
    else:
        @app.get("/")
        def index():
            return {"service": "cellnn", "endpoints": [
                "/api/meta", "/api/embedding", "/api/density?group=",
                "/api/contours?group=", "POST /api/roi", "/healthz"]}
    return app


def serve(session_dir: str | Path, port: int = 8777, host: str = "127.0.0.1",
          ui_dir: str | Path | None = None) -> None:
    import uvicorn
    session = load_session(session_dir)
    app = create_app(session, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
