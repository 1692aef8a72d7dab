import filecmp
import json

import pytest

from cellnn import tsne
from cellnn.cli import group_slug, main, resolve_threads

from conftest import planted_tissue_spec


def run(*argv):
    return main(list(argv))


def test_unknown_flag_exits_nonzero(capsys):
    assert run("summarize", "--nope") != 0


def test_missing_file_reports_error(capsys, tmp_path):
    code = run("summarize", "--cells", str(tmp_path / "missing.csv"))
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_synth_and_summarize_table(tmp_path, capsys):
    spec = planted_tissue_spec(slides_per_group=1, cells_per_slide=200, seed=3)
    spec_path = tmp_path / "spec.json"
    spec.to_json(str(spec_path))
    cells = tmp_path / "cells.csv"
    assert run("synth", "--spec", str(spec_path), "--out", str(cells)) == 0
    capsys.readouterr()
    assert run("summarize", "--cells", str(cells)) == 0
    out = capsys.readouterr().out
    lines = out.strip().splitlines()
    assert lines[0].split()[:3] == ["Count", "A", "B"]
    assert lines[1].startswith("Sample biopsies")
    assert lines[2].startswith("Neutrophils (neu)")
    assert lines[7].startswith("Connective tissue (con)")


def test_ingest_rejects_invalid(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("slide_id,group,cell_type,x,y\ns,G,neu,1,-4\n")
    code = run("ingest", "--cells", str(bad), "--out", str(tmp_path / "out.csv"))
    assert code == 1
    assert "non-negative" in capsys.readouterr().err


def test_ingest_merges_detections(tmp_path, capsys):
    det = tmp_path / "det.csv"
    det.write_text(
        "slide_id,group,patch_origin_x,patch_origin_y,local_x,local_y,cell_type,patch_size\n"
        "s,G,512,768,10.5,20.0,neu,256\n")
    out = tmp_path / "cells.csv"
    assert run("ingest", "--detections", str(det), "--out", str(out)) == 0
    content = out.read_text()
    assert "522.5,788.0" in content


def test_pipeline_manifest(planted_session):
    for name in ("summary.csv", "assignment.csv", "atlas_all.csv", "atlas.csv",
                 "embedding.csv", "diagnostics.json", "figure.svg",
                 "density_A.csv", "density_A.json", "density_B.csv",
                 "density_B.json", "contours_A.json", "contours_B.json"):
        assert (planted_session / name).exists(), name
    diag = json.loads((planted_session / "diagnostics.json").read_text())
    assert diag["anchor_type"] == "neu"
    assert diag["params"]["seed"] == 0


def test_roi_cli_matches_linear_scan_oracle(planted_session, capsys):
    emb_path = planted_session / "embedding.csv"
    assert run("roi", "--embedding", str(emb_path), "--bbox=-3,-3,3,3",
               "--g1", "A", "--g2", "B") == 0
    payload = json.loads(capsys.readouterr().out)

    emb = tsne.read_embedding_csv(str(emb_path))
    gi = {g: i for i, g in enumerate(emb.groups)}
    inside = [i for i in range(len(emb))
              if -3 <= emb.coords[i, 0] <= 3 and -3 <= emb.coords[i, 1] <= 3]
    n1 = sum(int(emb.weights[i, gi["A"]]) for i in inside)
    n2 = sum(int(emb.weights[i, gi["B"]]) for i in inside)
    assert payload["n1"] == n1
    assert payload["n2"] == n2
    assert payload["N1"] == int(emb.weights[:, gi["A"]].sum())
    assert sorted(e["sig_id"] for e in payload["entries"]) == inside


def test_pipeline_equals_staged_invocations(tmp_path, planted_session):
    """One-shot pipeline output is byte-identical to running the stages by hand."""
    cells = planted_session.parent / "cells.csv"
    staged = tmp_path / "staged"
    staged.mkdir()
    assert run("signatures", "--cells", str(cells), "--threads", "1",
               "--out", str(staged)) == 0
    assert run("atlas", "--cells", str(cells), "--anchor", "neu", "--threads", "1",
               "--out", str(staged / "atlas.csv")) == 0
    assert run("embed", "--atlas", str(staged / "atlas.csv"), "--anchor", "neu",
               "--seed", "0", "--out", str(staged)) == 0
    assert run("density", "--embedding", str(staged / "embedding.csv"),
               "--grid", "128", "--out", str(staged)) == 0
    assert run("render", "--embedding", str(staged / "embedding.csv"),
               "--density", str(staged), "--seed", "0",
               "--out", str(staged / "figure.svg")) == 0
    for name in ("assignment.csv", "atlas_all.csv", "atlas.csv", "embedding.csv",
                 "diagnostics.json", "density_A.csv", "density_A.json",
                 "density_B.csv", "density_B.json", "contours_A.json",
                 "contours_B.json", "figure.svg"):
        assert filecmp.cmp(planted_session / name, staged / name, shallow=False), name


def test_render_cli_modes(tmp_path, planted_session):
    emb = planted_session / "embedding.csv"
    out = tmp_path / "scatter.svg"
    assert run("render", "--embedding", str(emb), "--mode", "scatter",
               "--bbox", "0,0,1,1", "--out", str(out)) == 0
    assert out.read_text().startswith("<svg")


def test_threads_env_fallback(monkeypatch):
    monkeypatch.delenv("CELLNN_THREADS", raising=False)
    assert resolve_threads(None) == 1
    assert resolve_threads(4) == 4
    monkeypatch.setenv("CELLNN_THREADS", "3")
    assert resolve_threads(None) == 3
    monkeypatch.setenv("CELLNN_THREADS", "zzz")
    with pytest.raises(ValueError):
        resolve_threads(None)


def test_group_slug():
    assert group_slug("CD active") == "CD_active"
    assert group_slug("a/b:c") == "a_b_c"
    assert group_slug("") == "group"


def test_embed_reports_perplexity_error(tmp_path, capsys):
    atlas = tmp_path / "atlas.csv"
    atlas.write_text("sig_id,neu,epi,lym,pla,eos,con,weight_A\n0,10,0,0,0,0,0,5\n")
    code = run("embed", "--atlas", str(atlas), "--out", str(tmp_path))
    assert code == 1
    assert "perplexity too large" in capsys.readouterr().err
