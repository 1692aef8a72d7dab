import numpy as np
import pytest
from hypothesis import given, strategies as st

from cellnn.quantify import (
    BBox,
    QuantifyError,
    cells_in_bbox,
    odds_ratio,
    roi_composition,
    roi_payload,
)
from cellnn.tsne import Embedding2D


def make_embedding(coords, signatures, weights, groups=("A", "B")):
    sig = np.asarray(signatures, dtype=np.int64)
    return Embedding2D(
        coords=np.asarray(coords, dtype=np.float64),
        signatures=sig,
        weights=np.asarray(weights, dtype=np.int64),
        groups=tuple(groups),
        anchor_type="all",
        k=int(sig[0].sum()),
    )


def random_embedding(rng, m=60):
    sigs = rng.multinomial(10, [1 / 6] * 6, size=m)
    return make_embedding(rng.uniform(-10, 10, size=(m, 2)), sigs,
                          rng.integers(0, 30, size=(m, 2)))


def test_bbox_validation_and_parse():
    with pytest.raises(QuantifyError):
        BBox(1, 0, 1, 2)
    with pytest.raises(QuantifyError):
        BBox(0, 3, 1, 2)
    bb = BBox.parse("0.5,1,2,3")
    assert (bb.xmin, bb.ymin, bb.xmax, bb.ymax) == (0.5, 1.0, 2.0, 3.0)
    with pytest.raises(QuantifyError):
        BBox.parse("1,2,3")


def test_whole_box_counts_totals(rng):
    emb = random_embedding(rng)
    bb = BBox(-10.1, -10.1, 10.1, 10.1)
    totals = emb.group_totals()
    assert cells_in_bbox(emb, bb, "A") == totals["A"]
    assert cells_in_bbox(emb, bb, "B") == totals["B"]


def test_empty_region_counts_zero(rng):
    emb = random_embedding(rng)
    assert cells_in_bbox(emb, BBox(100, 100, 101, 101), "A") == 0


def test_bbox_boundary_is_closed():
    emb = make_embedding([[1.0, 2.0]], [[10, 0, 0, 0, 0, 0]], [[3, 4]])
    assert cells_in_bbox(emb, BBox(1.0, 2.0, 5.0, 5.0), "A") == 3
    assert cells_in_bbox(emb, BBox(-5.0, -5.0, 1.0, 2.0), "B") == 4


def test_counts_match_linear_scan(rng):
    emb = random_embedding(rng, m=120)
    for _ in range(50):
        lo = rng.uniform(-12, 8, size=2)
        hi = lo + rng.uniform(0.5, 10, size=2)
        bb = BBox(lo[0], lo[1], hi[0], hi[1])
        for gi, g in enumerate(emb.groups):
            want = sum(
                int(emb.weights[i, gi])
                for i in range(len(emb))
                if bb.xmin <= emb.coords[i, 0] <= bb.xmax
                and bb.ymin <= emb.coords[i, 1] <= bb.ymax)
            assert cells_in_bbox(emb, bb, g) == want


def test_odds_ratio_formula():
    # n1=30 of N1=100 vs n2=10 of N2=200 -> (0.3) / (0.05) = 6
    emb = make_embedding(
        [[0.0, 0.0], [5.0, 5.0]],
        [[10, 0, 0, 0, 0, 0], [0, 10, 0, 0, 0, 0]],
        [[30, 10], [70, 190]])
    report = odds_ratio(emb, BBox(-1, -1, 1, 1), "A", "B")
    assert (report.n1, report.N1, report.n2, report.N2) == (30, 100, 10, 200)
    assert report.ratio == pytest.approx(6.0)
    assert report.flag == "finite"


def test_odds_ratio_infinite_and_undefined():
    emb = make_embedding(
        [[0.0, 0.0], [5.0, 5.0]],
        [[10, 0, 0, 0, 0, 0], [0, 10, 0, 0, 0, 0]],
        [[3, 0], [7, 9]])
    inf_report = odds_ratio(emb, BBox(-1, -1, 1, 1), "A", "B")
    assert inf_report.flag == "infinite"
    assert inf_report.ratio is None
    undef = odds_ratio(emb, BBox(50, 50, 60, 60), "A", "B")
    assert undef.flag == "undefined"
    assert undef.ratio is None


def test_odds_ratio_unknown_group(rng):
    emb = random_embedding(rng)
    with pytest.raises(QuantifyError, match="unknown group"):
        odds_ratio(emb, BBox(0, 0, 1, 1), "A", "nope")


def test_whole_box_ratio_exactly_one(rng):
    emb = random_embedding(rng)
    report = odds_ratio(emb, BBox(-11, -11, 11, 11), "A", "B")
    assert report.ratio == 1.0


def test_ratio_antisymmetry(rng):
    emb = random_embedding(rng, m=100)
    checked = 0
    for _ in range(60):
        lo = rng.uniform(-12, 6, size=2)
        hi = lo + rng.uniform(2, 12, size=2)
        bb = BBox(lo[0], lo[1], hi[0], hi[1])
        r12 = odds_ratio(emb, bb, "A", "B")
        r21 = odds_ratio(emb, bb, "B", "A")
        if r12.flag == "finite" and r12.ratio and r21.ratio:
            assert abs(r12.ratio * r21.ratio - 1.0) < 1e-12
            checked += 1
    assert checked > 5


def test_count_monotone_under_bbox_growth(rng):
    emb = random_embedding(rng)
    inner = BBox(-2, -2, 2, 2)
    outer = BBox(-4, -3, 5, 2.5)
    for g in emb.groups:
        assert cells_in_bbox(emb, outer, g) >= cells_in_bbox(emb, inner, g)


def test_roi_composition_single_entry():
    emb = make_embedding([[0.0, 0.0]], [[0, 10, 0, 0, 0, 0]], [[4, 1]])
    comp = roi_composition(emb, BBox(-1, -1, 1, 1))
    assert np.array_equal(comp.pooled_mean, [0, 10, 0, 0, 0, 0])
    assert comp.ranking[0] == "epi"


def test_roi_composition_weighted_average():
    emb = make_embedding(
        [[0.0, 0.0], [0.5, 0.5]],
        [[10, 0, 0, 0, 0, 0], [0, 10, 0, 0, 0, 0]],
        [[1, 0], [3, 0]])
    comp = roi_composition(emb, BBox(-1, -1, 1, 1))
    assert np.allclose(comp.pooled_mean, [2.5, 7.5, 0, 0, 0, 0])
    assert comp.per_group["A"] == pytest.approx([2.5, 7.5, 0, 0, 0, 0])
    assert comp.per_group["B"] is None
    assert comp.ranking[:2] == ["epi", "neu"]


def test_roi_composition_matches_linear_scan(rng):
    emb = random_embedding(rng, m=150)
    hits = 0
    for _ in range(40):
        lo = rng.uniform(-12, 6, size=2)
        hi = lo + rng.uniform(2, 10, size=2)
        bb = BBox(lo[0], lo[1], hi[0], hi[1])
        inside = [i for i in range(len(emb))
                  if bb.xmin <= emb.coords[i, 0] <= bb.xmax
                  and bb.ymin <= emb.coords[i, 1] <= bb.ymax]
        w = np.array([emb.weights[i].sum() for i in inside], dtype=float)
        if not inside or w.sum() == 0:
            with pytest.raises(QuantifyError, match="empty ROI"):
                roi_composition(emb, bb)
            continue
        want = (w @ emb.signatures[inside]) / w.sum()
        comp = roi_composition(emb, bb)
        assert np.abs(comp.pooled_mean - want).max() < 1e-12
        assert comp.pooled_mean.sum() == pytest.approx(emb.k, abs=1e-9)
        hits += 1
    assert hits > 5


def test_roi_composition_ranking_tie_breaks_by_ordinal():
    emb = make_embedding([[0.0, 0.0]], [[5, 0, 5, 0, 0, 0]], [[1, 1]])
    comp = roi_composition(emb, BBox(-1, -1, 1, 1))
    assert comp.ranking == ["neu", "lym", "epi", "pla", "eos", "con"]


def test_roi_payload_shape(rng):
    emb = random_embedding(rng)
    payload = roi_payload(emb, BBox(-11, -11, 11, 11), "A", "B")
    for key in ("n1", "n2", "N1", "N2", "f1", "f2", "ratio", "flag",
                "bbox", "entries", "composition", "schema_version"):
        assert key in payload
    assert payload["ratio"] == 1.0
    assert payload["flag"] == "finite"
    assert len(payload["entries"]) == len(emb)
    assert payload["entries"][0]["weights"].keys() == {"A", "B"}


@given(st.integers(0, 10 ** 6))
def test_whole_box_ratio_one_property(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 30))
    sigs = rng.multinomial(10, [1 / 6] * 6, size=m)
    weights = rng.integers(0, 9, size=(m, 2))
    weights[0] = [1, 1]  # both groups non-empty
    emb = make_embedding(rng.uniform(-5, 5, size=(m, 2)), sigs, weights)
    report = odds_ratio(emb, BBox(-6, -6, 6, 6), "A", "B")
    assert report.ratio == 1.0
