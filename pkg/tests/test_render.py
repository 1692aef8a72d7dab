import xml.etree.ElementTree as ET

import numpy as np
import pytest

from cellnn.density import kde_fit
from cellnn.quantify import BBox
from cellnn.render import RenderError, RenderOptions, render_svg
from cellnn.tsne import Embedding2D

SVG_NS = "{http://www.w3.org/2000/svg}"


def make_embedding(coords, signatures, weights, groups=("A", "B")):
    sig = np.asarray(signatures, dtype=np.int64)
    return Embedding2D(coords=np.asarray(coords, dtype=np.float64),
                       signatures=sig,
                       weights=np.asarray(weights, dtype=np.int64),
                       groups=tuple(groups), anchor_type="all",
                       k=int(sig[0].sum()))


def two_group_embedding(rng, m=25):
    return make_embedding(rng.uniform(-5, 5, size=(m, 2)),
                          rng.multinomial(10, [1 / 6] * 6, size=m),
                          rng.integers(1, 9, size=(m, 2)))


def _groups_of(svg, cls):
    root = ET.fromstring(svg)
    return [el for el in root.iter(f"{SVG_NS}g") if el.get("class") == cls]


def test_single_entry_scatter_has_one_mark():
    emb = make_embedding([[0.0, 0.0]], [[10, 0, 0, 0, 0, 0]], [[3, 0]])
    svg = render_svg(emb, options=RenderOptions(mode="scatter"))
    layers = _groups_of(svg, "scatter")
    marks = [c for layer in layers for c in layer if c.get("class") == "mark"]
    assert len(marks) == 1


def test_per_cell_mode_expands_weights():
    emb = make_embedding([[0.0, 0.0], [2.0, 2.0]],
                         [[10, 0, 0, 0, 0, 0], [0, 10, 0, 0, 0, 0]],
                         [[3, 1], [2, 0]])
    svg = render_svg(emb, options=RenderOptions(
        mode="scatter", per_cell=True, jitter_radius=0.1, seed=1))
    marks = [c for layer in _groups_of(svg, "scatter")
             for c in layer if c.get("class") == "mark"]
    assert len(marks) == 6  # 3+2 in A, 1 in B


def test_byte_identical_given_seed(rng):
    emb = two_group_embedding(rng)
    opts = RenderOptions(mode="both", per_cell=True, jitter_radius=0.3, seed=5)
    grid = kde_fit(emb.coords, emb.weights[:, 0].astype(float),
                   grid_size=(32, 32), group="A")
    s1 = render_svg(emb, [grid], opts)
    s2 = render_svg(emb, [grid], opts)
    assert s1 == s2


def test_contour_layers_and_legend(rng):
    emb = two_group_embedding(rng)
    grids = [kde_fit(emb.coords, emb.weights[:, gi].astype(float),
                     grid_size=(48, 48), group=g)
             for gi, g in enumerate(emb.groups)]
    svg = render_svg(emb, grids, RenderOptions(mode="contour"))
    layers = _groups_of(svg, "contour")
    assert [la.get("data-group") for la in layers] == ["A", "B"]
    assert all(len(la) > 0 for la in layers)
    root = ET.fromstring(svg)
    legend_texts = [t.text for g in root.iter(f"{SVG_NS}g")
                    if g.get("class") == "legend"
                    for t in g.iter(f"{SVG_NS}text")]
    assert legend_texts == ["A", "B"]


def test_empty_embedding_errors():
    emb = Embedding2D(coords=np.empty((0, 2)), signatures=np.empty((0, 6), dtype=int),
                      weights=np.empty((0, 2), dtype=int), groups=("A", "B"),
                      anchor_type="all", k=10)
    with pytest.raises(RenderError, match="empty embedding"):
        render_svg(emb)


def test_bbox_overlays(rng):
    emb = two_group_embedding(rng)
    svg = render_svg(emb, options=RenderOptions(mode="scatter"),
                     bboxes=[BBox(-1, -1, 1, 1), BBox(0, 0, 2, 2)])
    rois = _groups_of(svg, "roi")
    assert len(rois) == 2
    texts = [t.text for r in rois for t in r.iter(f"{SVG_NS}text")]
    assert texts == ["ROI 1", "ROI 2"]


def test_group_label_escaping():
    emb = make_embedding([[0.0, 0.0]], [[10, 0, 0, 0, 0, 0]], [[1, 1]],
                         groups=("CD <active>", 'quo"ted'))
    svg = render_svg(emb, options=RenderOptions(mode="scatter"))
    ET.fromstring(svg)  # parses despite hostile group names
