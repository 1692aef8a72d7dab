import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cellnn import ingest
from cellnn.ingest import (
    Cell,
    CohortTable,
    IngestError,
    PatchDetection,
    SchemaError,
    merge_patch_coordinates,
    parse_cell_table,
    summarize,
    validate,
    write_cells_csv,
    write_cells_ndjson,
)

from conftest import make_cohort


CSV3 = """slide_id,group,cell_type,x,y
s1,G,neu,1.0,2.0
s1,G,epi,3.5,4.25
s2,G,lym,10,20
"""


def test_parse_three_row_csv():
    cohort = parse_cell_table(io.StringIO(CSV3))
    assert len(cohort) == 3
    assert cohort.groups == ("G",)
    assert list(cohort.cell_ids) == [0, 1, 2]
    assert [c.cell_type for c in cohort.iter_cells()] == [0, 1, 2]
    assert cohort.cell(1) == Cell(1, "s1", "G", 1, 3.5, 4.25)


def test_parse_case_insensitive_long_names():
    src = "slide_id,group,cell_type,x,y\ns,G,EPITHELIAL,1,1\ns,G,Plasma Cell,2,2\n"
    cohort = parse_cell_table(io.StringIO(src))
    assert list(cohort.cell_types) == [1, 3]


def test_parse_nan_coordinate_names_line():
    src = "slide_id,group,cell_type,x,y\ns,G,neu,1,1\ns,G,neu,NaN,2\n"
    with pytest.raises(IngestError, match="non-finite coordinate at line 3"):
        parse_cell_table(io.StringIO(src))


def test_parse_malformed_row_names_line():
    src = "slide_id,group,cell_type,x,y\ns,G,neu,1\n"
    with pytest.raises(IngestError, match="line 2"):
        parse_cell_table(io.StringIO(src))


def test_parse_unknown_type_names_token():
    src = "slide_id,group,cell_type,x,y\ns,G,fibroblast,1,1\n"
    with pytest.raises(IngestError, match="'fibroblast'"):
        parse_cell_table(io.StringIO(src))


def test_parse_missing_column_is_schema_error():
    src = "slide_id,cell_type,x,y\ns,neu,1,1\n"
    with pytest.raises(SchemaError, match="group"):
        parse_cell_table(io.StringIO(src))


def test_parse_column_map():
    src = "sid,arm,label,px,py\ns,G,neu,1,2\n"
    cohort = parse_cell_table(io.StringIO(src), column_map={
        "sid": "slide_id", "arm": "group", "label": "cell_type",
        "px": "x", "py": "y"})
    assert cohort.cell(0).x == 1.0


def test_parse_ndjson():
    src = ('{"slide_id": "s", "group": "G", "cell_type": "lym", "x": 1.5, "y": 2}\n'
           '{"slide_id": "s", "group": "G", "cell_type": "con", "x": 0, "y": 0}\n')
    cohort = parse_cell_table(io.StringIO(src), format="ndjson")
    assert list(cohort.cell_types) == [2, 5]


def test_parse_ndjson_bad_line():
    with pytest.raises(IngestError, match="line 1"):
        parse_cell_table(io.StringIO("{not json}\n"), format="ndjson")


def test_merge_additive_offset():
    cells = merge_patch_coordinates([PatchDetection(
        "s", "G", 512.0, 768.0, 10.5, 20.0, cell_type=0)])
    assert (cells[0].x, cells[0].y) == (522.5, 788.0)


def test_merge_identity_origin():
    cells = merge_patch_coordinates([PatchDetection("s", "G", 0, 0, 0, 0, cell_type=2)])
    assert (cells[0].x, cells[0].y) == (0.0, 0.0)


def test_merge_two_adjacent_patches_hand_computed():
    dets = [
        PatchDetection("s", "G", 0.0, 0.0, 10.5, 20.0, cell_type=0),
        PatchDetection("s", "G", 0.0, 0.0, 255.0, 0.0, cell_type=1),
        PatchDetection("s", "G", 256.0, 0.0, 0.5, 3.25, cell_type=2),
        PatchDetection("s", "G", 256.0, 0.0, 100.0, 200.0, cell_type=3),
    ]
    cells = merge_patch_coordinates(dets)
    # computed by hand: origin + local
    assert [(c.x, c.y) for c in cells] == [
        (10.5, 20.0), (255.0, 0.0), (256.5, 3.25), (356.0, 200.0)]
    assert [c.cell_id for c in cells] == [0, 1, 2, 3]


def test_merge_rejects_out_of_patch_local():
    with pytest.raises(IngestError, match="outside"):
        merge_patch_coordinates([PatchDetection("s", "G", 0, 0, 256.0, 0, cell_type=0)])
    with pytest.raises(IngestError, match="outside"):
        merge_patch_coordinates([PatchDetection("s", "G", 0, 0, 0, -0.5, cell_type=0)])


@given(st.lists(st.tuples(st.floats(0, 1e6), st.floats(0, 1e6),
                          st.integers(0, 5)), max_size=30))
def test_merge_preserves_cardinality_and_types(rows):
    dets = [PatchDetection("s", "G", 256.0 * i, 0.0, x % 256, y % 256, cell_type=t)
            for i, (x, y, t) in enumerate(rows)]
    cells = merge_patch_coordinates(dets)
    assert len(cells) == len(dets)
    assert [c.cell_type for c in cells] == [d.cell_type for d in dets]


def test_summarize_fixture_counts():
    cohort = make_cohort([
        ("sA", "A", 0, 1, 1), ("sA", "A", 0, 2, 2), ("sA", "A", 0, 3, 3),
        ("sA", "A", 1, 4, 4),
        ("sB", "B", 2, 1, 1), ("sB", "B", 2, 2, 2),
    ])
    table = summarize(cohort)
    assert table.groups == ("A", "B")
    assert table.biopsies == (1, 1)
    expected = np.zeros((6, 2), dtype=np.int64)
    expected[0, 0] = 3  # neu in A
    expected[1, 0] = 1  # epi in A
    expected[2, 1] = 2  # lym in B
    assert np.array_equal(table.type_counts, expected)


def test_summarize_empty():
    table = summarize(make_cohort([]))
    assert table.groups == ()
    assert table.type_counts.shape == (6, 0)


def test_summarize_row_order_matches_reference_layout():
    labels = [label for label, _ in summarize(make_cohort([])).rows()]
    assert labels == [
        "Sample biopsies",
        "Neutrophils (neu)",
        "Epithelial cell (epi)",
        "Lymphocytes (lym)",
        "Plasma cell (pla)",
        "Eosinophils (eos)",
        "Connective tissue (con)",
    ]


@given(st.data())
def test_summarize_column_sums_equal_group_counts(data):
    rows = data.draw(st.lists(
        st.tuples(st.sampled_from(["s1", "s2", "s3"]),
                  st.sampled_from(["A", "B"]),
                  st.integers(0, 5),
                  st.floats(0, 100), st.floats(0, 100)),
        max_size=60))
    cohort = make_cohort(rows)
    table = summarize(cohort)
    totals = cohort.group_totals()
    for gi, g in enumerate(table.groups):
        assert table.type_counts[:, gi].sum() == totals[g]
    assert table.type_counts.sum() == len(cohort)


def test_validate_clean():
    cohort = make_cohort([("s", "G", 0, 1, 1), ("s", "G", 1, 2, 2)])
    assert validate(cohort) == []


def test_validate_duplicate_cell_id():
    cells = [Cell(7, "s", "G", 0, 1, 1), Cell(7, "s", "G", 1, 2, 2)]
    violations = validate(CohortTable.from_cells(cells))
    assert len(violations) == 1
    assert "7" in violations[0] and "duplicate" in violations[0]


def test_validate_negative_coordinate():
    violations = validate(make_cohort([("s", "G", 0, 1, -2)]))
    assert len(violations) == 1
    assert "non-negative" in violations[0]


def test_slide_index_partition():
    cohort = make_cohort([
        ("s1", "A", 0, 1, 1), ("s2", "A", 0, 2, 2),
        ("s1", "A", 0, 3, 3), ("s1", "A", 0, 4, 4),
    ])
    assert cohort.slide_ranges("s1") == [(0, 1), (2, 4)]
    assert cohort.slide_ranges("s2") == [(1, 2)]
    covered = sorted(int(r) for s in cohort.slides for r in cohort.slide_rows(s))
    assert covered == list(range(len(cohort)))


_ids = st.text(alphabet="abcXYZ019 _-.", min_size=1, max_size=8)
_coord = st.floats(min_value=0, max_value=1e12, allow_nan=False)


@given(st.lists(st.tuples(_ids, _ids, st.integers(0, 5), _coord, _coord),
                min_size=1, max_size=40))
def test_csv_round_trip_identical_cells(rows):
    cohort = make_cohort(rows)
    buf = io.StringIO()
    write_cells_csv(cohort, buf)
    back = parse_cell_table(io.StringIO(buf.getvalue()))
    assert list(back.iter_cells()) == list(cohort.iter_cells())


@given(st.lists(st.tuples(_ids, _ids, st.integers(0, 5), _coord, _coord),
                min_size=1, max_size=25))
def test_ndjson_round_trip_identical_cells(rows):
    cohort = make_cohort(rows)
    buf = io.StringIO()
    write_cells_ndjson(cohort, buf)
    back = parse_cell_table(io.StringIO(buf.getvalue()), format="ndjson")
    assert list(back.iter_cells()) == list(cohort.iter_cells())


def test_detection_table_round_trip(tmp_path):
    path = tmp_path / "dets.csv"
    path.write_text(
        "slide_id,group,patch_origin_x,patch_origin_y,local_x,local_y,cell_type,patch_size\n"
        "s,G,512,768,10.5,20.0,neu,256\n"
        "s,G,0,0,1,2,epi,256\n")
    dets = ingest.parse_detection_table(str(path))
    cells = merge_patch_coordinates(dets)
    assert (cells[0].x, cells[0].y) == (522.5, 788.0)
    assert cells[1].cell_type == 1
