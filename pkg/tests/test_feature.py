import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import deck_dict, hash_join, voxel_counts
from cpsim.feature import (
    CELL_PAYLOAD_BYTES,
    FeatureDeck,
    VoxelGridSpec,
    deck_from_bytes,
    deck_to_bytes,
    deck_union,
    voxelize,
)
from cpsim.scene import Frame, PointCloud

GRID = VoxelGridSpec.for_bounds((0.0, 0.0, 20.0, 10.0))


def cloud(pts):
    return PointCloud(np.asarray(pts, dtype=float).reshape(-1, 3), Frame.GLOBAL)


@st.composite
def decks(draw, owner=0, max_cells=60):
    nx, ny = GRID.grid_extent
    cells = draw(st.dictionaries(st.tuples(st.integers(0, nx - 1), st.integers(0, ny - 1)), st.integers(1, 50), max_size=max_cells))
    idx = np.array(list(cells), dtype=np.int64).reshape(-1, 2)
    return FeatureDeck(GRID, idx, np.array(list(cells.values()), dtype=np.int64), owner)


def test_default_cell_size_and_grid_cover_bounds():
    assert GRID.cell_size == (0.23, 0.23, 8.0)
    g = VoxelGridSpec.for_bounds((0, 0, 280, 80))
    assert g.grid_extent == (1218, 348)
    with pytest.raises(ValueError):
        VoxelGridSpec(cell_size=(0.0, 0.2, 8.0))


def test_empty_cloud_gives_empty_deck():
    d = voxelize(PointCloud.empty(Frame.GLOBAL), GRID, 3)
    assert len(d) == 0 and d.owner == 3 and d.payload_bytes == 0


def test_close_points_share_a_cell():
    c = GRID.cell_centers([[10, 7]])[0]
    d = voxelize(cloud([[c[0], c[1], 0.5], [c[0] + 0.01, c[1], 2.0]]), GRID, 0)
    assert d.index_set() == {(10, 7)} and d.counts.tolist() == [2]


def test_off_grid_points_are_dropped():
    d = voxelize(cloud([[-0.1, 1.0, 0.0], [25.0, 1.0, 0.0], [1.0, 1.0, 0.0]]), GRID, 0)
    assert len(d) == 1


def test_voxelize_rejects_ego_cloud():
    with pytest.raises(ValueError):
        voxelize(PointCloud([[0, 0, 0]]), GRID, 0)


@given(st.integers(0, 2**32 - 1), st.integers(0, 400))
def test_voxelize_matches_scan_oracle(seed, n):
    pts = np.random.default_rng(seed).uniform([-2, -2, -1], [22, 12, 3], size=(n, 3))
    d = voxelize(cloud(pts), GRID, 0)
    assert deck_dict(d) == voxel_counts(pts, GRID.origin, GRID.cell_size, *GRID.grid_extent)
    assert np.all(np.diff(d.keys) > 0)


def test_cap_keeps_densest_cells():
    pts = []
    for i, reps in enumerate([5, 1, 3, 2]):
        c = GRID.cell_centers([[i, 0]])[0]
        pts += [[c[0], c[1], 0.0]] * reps
    d = voxelize(cloud(pts), GRID, 0, cap=2)
    assert d.index_set() == {(0, 0), (2, 0)}


@given(decks())
def test_voxelizing_cell_centers_reproduces_index_set(d):
    centers = d.centers()
    again = voxelize(cloud(np.column_stack([centers, np.zeros(len(d))])), GRID, 0)
    assert again.index_set() == d.index_set()


@given(decks())
def test_payload_is_256_bytes_per_cell(d):
    assert d.payload_bytes == CELL_PAYLOAD_BYTES * len(d)
    assert all(c.payload_bytes == 256 and c.point_count >= 1 for c in d.cells)


def test_deck_rejects_duplicates_and_empty_cells():
    with pytest.raises(ValueError):
        FeatureDeck(GRID, [[1, 1], [1, 1]], [1, 2], 0)
    with pytest.raises(ValueError):
        FeatureDeck(GRID, [[1, 1]], [0], 0)


def test_union_with_empty_is_identity():
    d = FeatureDeck(GRID, [[1, 2], [3, 4]], [2, 5], 0)
    assert deck_union([d, FeatureDeck.empty(GRID, 9)], owner=0) == d


def test_disjoint_union_adds_cells():
    a = FeatureDeck(GRID, [[0, 0], [0, 1], [0, 2]], [1, 1, 1], 1)
    b = FeatureDeck(GRID, [[5, 0], [5, 1], [5, 2], [5, 3]], [2, 2, 2, 2], 2)
    assert len(deck_union([a, b], owner=0)) == 7


@given(decks(owner=1), decks(owner=2), decks(owner=3))
def test_union_matches_hash_join(a, b, c):
    u = deck_union([a, b, c], owner=7)
    assert deck_dict(u) == hash_join(deck_dict(a), deck_dict(b), deck_dict(c))
    assert u.owner == 7


@given(decks(owner=1), decks(owner=2), decks(owner=3))
def test_union_commutes_and_associates(a, b, c):
    assert deck_union([a, b], owner=0) == deck_union([b, a], owner=0)
    left = deck_union([deck_union([a, b], owner=0), c], owner=0)
    right = deck_union([a, deck_union([b, c], owner=0)], owner=0)
    assert left == right


def test_union_rejects_grid_mismatch():
    other = VoxelGridSpec.for_bounds((0, 0, 20, 10), (0.5, 0.5, 8.0))
    with pytest.raises(ValueError):
        deck_union([FeatureDeck.empty(GRID, 0), FeatureDeck.empty(other, 1)])


@given(decks(owner=4))
def test_binary_round_trip(d):
    blob = deck_to_bytes(d)
    assert deck_from_bytes(blob) == d
    assert len(blob) == len(deck_to_bytes(FeatureDeck.empty(GRID, 4))) + 24 * len(d)
