import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cellnn import synth
from cellnn.cli import main as cli_main
from cellnn.ingest import CohortTable, Cell

settings.register_profile(
    "suite", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")


def make_cohort(rows):
    """rows: (slide_id, group, cell_type_ordinal, x, y); cell_ids sequential."""
    return CohortTable.from_cells(
        Cell(cell_id=i, slide_id=s, group=g, cell_type=t, x=x, y=y)
        for i, (s, g, t, x, y) in enumerate(rows))


def random_cohort(rng, n_slides=3, cells_per_slide=(30, 80), groups=("A", "B"),
                  box=1000.0):
    rows = []
    for s in range(n_slides):
        group = groups[s % len(groups)]
        n = int(rng.integers(*cells_per_slide))
        for _ in range(n):
            rows.append((f"s{s}", group, int(rng.integers(0, 6)),
                         float(rng.uniform(0, box)), float(rng.uniform(0, box))))
    return make_cohort(rows)


def planted_tissue_spec(slides_per_group=3, cells_per_slide=2000, seed=2024):
    """Two-group cohort: neutrophil anchors ringed by lymphocytes in A,
    by epithelial cells in B, over a matched uniform background."""
    return synth.TissueSpec(
        groups=("A", "B"),
        slides_per_group=slides_per_group,
        cells_per_slide=cells_per_slide,
        mixture=(0.05, 0.35, 0.25, 0.10, 0.05, 0.20),
        motifs=(
            synth.Motif("neu", "lym", 10, 30, groups=("A",)),
            synth.Motif("neu", "epi", 10, 30, groups=("B",)),
        ),
        box_size=10000.0,
        ring_radius=10.0,
        seed=seed,
    )


@pytest.fixture(scope="session")
def planted_session(tmp_path_factory):
    """A completed pipeline session on a small planted cohort, shared by the
    CLI, service, and secondary-equivalence tests."""
    root = tmp_path_factory.mktemp("session")
    spec = planted_tissue_spec(slides_per_group=2, cells_per_slide=1200, seed=11)
    cells_csv = root / "cells.csv"
    spec_json = root / "spec.json"
    spec.to_json(str(spec_json))
    assert cli_main(["synth", "--spec", str(spec_json), "--out", str(cells_csv)]) == 0
    out = root / "out"
    assert cli_main([
        "pipeline", "--cells", str(cells_csv), "--anchor", "neu",
        "--seed", "0", "--threads", "1", "--grid", "128",
        "--out", str(out)]) == 0
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
