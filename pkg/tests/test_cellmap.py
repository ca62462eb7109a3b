import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tissuepheno.cellmap import (
    COUNTED_CATEGORIES,
    CellMap,
    CellRecord,
    TissueLabelGrid,
    load_cell_map,
    load_tissue_labels,
    parse_cell_rows,
    tile_cells,
    write_cell_map,
    write_tissue_labels,
)
from tissuepheno.errors import ParseError, ValidationError


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_three_row_file(tmp_path):
    p = write(tmp_path, "s1.csv", "x_um,y_um,class\n1,2,M\n3,4,I\n5,6,S\n")
    cmap = load_cell_map(p)
    assert cmap.slide_id == "s1"
    assert [c.cls for c in cmap.cells] == ["M", "I", "S"]
    assert cmap.extent == (5.0, 6.0)


def test_unknown_class_names_line(tmp_path):
    p = write(tmp_path, "s.csv", "x_um,y_um,class\n1,2,M\n3,4,X\n")
    with pytest.raises(ParseError) as err:
        load_cell_map(p)
    assert err.value.line == 3
    assert ":3:" in str(err.value)


def test_empty_with_declared_extent(tmp_path):
    p = write(tmp_path, "e.csv", "# extent_um=1000x1000\nx_um,y_um,class\n")
    cmap = load_cell_map(p)
    assert cmap.cells == ()
    assert cmap.extent == (1000.0, 1000.0)


@pytest.mark.parametrize("row,err", [
    ("1,2", ParseError),
    ("a,2,M", ParseError),
    ("1,nan,M", ParseError),
    ("-1,2,M", ValidationError),
])
def test_malformed_rows(tmp_path, row, err):
    p = write(tmp_path, "s.csv", f"x_um,y_um,class\n{row}\n")
    with pytest.raises(err):
        load_cell_map(p)


def test_missing_header(tmp_path):
    p = write(tmp_path, "s.csv", "1,2,M\n")
    with pytest.raises(ParseError):
        load_cell_map(p)


def test_declared_extent_wins_and_must_contain_cells():
    cmap = parse_cell_rows(["# extent_um=500x400", "x_um,y_um,class", "10,10,M"], "s")
    assert cmap.extent == (500.0, 400.0)
    with pytest.raises(ValidationError):
        parse_cell_rows(["# extent_um=5x5", "x_um,y_um,class", "10,10,M"], "s")


def test_cell_map_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    cells = tuple(CellRecord(float(x), float(y), "MISN"[i % 4])
                  for i, (x, y) in enumerate(rng.uniform(0, 900, (50, 2))))
    cmap = CellMap("rt", cells, (900.0, 900.0))
    write_cell_map(cmap, tmp_path / "rt.csv")
    assert load_cell_map(tmp_path / "rt.csv") == cmap


def test_tissue_grid_2x2(tmp_path):
    p = write(tmp_path, "g.csv", "row,col,label\n0,0,tumor\n0,1,fat\n1,0,stroma\n1,1,normal\n")
    assert len(load_tissue_labels(p)) == 4


def test_tissue_grid_duplicate(tmp_path):
    p = write(tmp_path, "g.csv", "row,col,label\n0,0,tumor\n0,0,stroma\n")
    with pytest.raises(ParseError, match="duplicate"):
        load_tissue_labels(p)


def test_tissue_grid_unknown_token(tmp_path):
    p = write(tmp_path, "g.csv", "row,col,label\n0,0,muscle\n")
    with pytest.raises(ParseError, match="unknown tissue category"):
        load_tissue_labels(p)


def test_tissue_grid_round_trip(tmp_path):
    labels = {(r, c): COUNTED_CATEGORIES[(r + c) % 6] for r in range(3) for c in range(4)}
    grid = TissueLabelGrid("g", labels, 100.0)
    write_tissue_labels(grid, tmp_path / "g.csv")
    assert load_tissue_labels(tmp_path / "g.csv") == grid


def test_boundary_cell_goes_to_higher_tile():
    cmap = CellMap("b", (CellRecord(200.0, 0.0, "M"),), (400.0, 200.0))
    (tile,) = tile_cells(cmap, 200.0).tiles
    assert tile.address == (0, 1)


def test_no_cells_no_tiles():
    ts = tile_cells(CellMap("z", (), (1000.0, 1000.0)), 200.0)
    assert len(ts) == 0
    assert len(ts.addresses()) == 25


def test_ten_cells_in_four_tiles():
    rng = np.random.default_rng(3)
    cells = tuple(CellRecord(float(x), float(y), "M") for x, y in rng.uniform(0, 400, (10, 2)))
    ts = tile_cells(CellMap("t", cells, (400.0, 400.0)), 200.0)
    assert len(ts) <= 4
    for c in cells:
        holders = [t for t in ts if c in t.cells]
        assert len(holders) == 1
        assert holders[0].contains(c.x, c.y)
    assert sum(len(t.cells) for t in ts) == 10


def test_nonpositive_tile_size():
    with pytest.raises(ValidationError):
        tile_cells(CellMap("t", (), (1.0, 1.0)), 0.0)


coords = st.floats(min_value=0, max_value=2000, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(coords, coords, st.sampled_from("MISN")), max_size=60),
       st.sampled_from([50.0, 100.0, 200.0, 333.3]))
def test_partition_property(rows, T):
    cells = tuple(CellRecord(x, y, k) for x, y, k in rows)
    ts = tile_cells(CellMap("h", cells, (2000.0, 2000.0)), T)
    seen = sorted(i for t in ts for i in t.indices)
    assert seen == list(range(len(cells)))
    for t in ts:
        assert all(t.contains(c.x, c.y) for c in t.cells)
    assert tile_cells(CellMap("h", cells, (2000.0, 2000.0)), T) == ts
