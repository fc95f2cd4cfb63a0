"""Voxelized feature decks.

A deck is the set of occupied cells of a planar grid (z is collapsed into a
single slab). Only the per-cell point count is kept; each cell is accounted
as a fixed 256-byte payload when transmitted.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .scene import Frame

CELL_PAYLOAD_BYTES = 256
DEFAULT_CELL_SIZE = (0.23, 0.23, 8.00)
DEFAULT_VOXEL_CAP = 45_000

_MAGIC = b"CPDK"
_HEADER = struct.Struct("<4sH5dqqq Q")


@dataclass(frozen=True)
class VoxelGridSpec:
    origin: tuple = (0.0, 0.0)
    cell_size: tuple = DEFAULT_CELL_SIZE
    grid_extent: tuple = (1218, 348)

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "cell_size", tuple(float(v) for v in self.cell_size))
        object.__setattr__(self, "grid_extent", tuple(int(v) for v in self.grid_extent))
        if min(self.cell_size) <= 0:
            raise ValueError("cell sizes must be strictly positive")
        if min(self.grid_extent) < 1:
            raise ValueError("grid extent must be at least one cell per axis")

    @classmethod
    def for_bounds(cls, bounds, cell_size=DEFAULT_CELL_SIZE):
        """Grid anchored at the bounds' min corner, covering the whole rectangle."""
        xmin, ymin, xmax, ymax = bounds
        nx = max(1, math.ceil((xmax - xmin) / cell_size[0]))
        ny = max(1, math.ceil((ymax - ymin) / cell_size[1]))
        return cls((xmin, ymin), cell_size, (nx, ny))

    @property
    def n_cells(self):
        return self.grid_extent[0] * self.grid_extent[1]

    def cell_centers(self, indices):
        indices = np.asarray(indices, dtype=np.float64).reshape(-1, 2)
        return np.asarray(self.origin) + (indices + 0.5) * np.asarray(self.cell_size[:2])

    @property
    def cell_diagonal(self):
        return math.hypot(self.cell_size[0], self.cell_size[1])


@dataclass(frozen=True)
class FeatureCell:
    index: tuple
    point_count: int
    source_node: int
    payload_bytes: int = CELL_PAYLOAD_BYTES


@dataclass(frozen=True, eq=False)
class FeatureDeck:
    """Occupied cells of one node, stored as sorted ``(ix, iy)`` rows plus counts."""

    grid: VoxelGridSpec
    indices: np.ndarray
    counts: np.ndarray
    owner: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1, 2)
        cnt = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        if len(idx) != len(cnt):
            raise ValueError("indices and counts differ in length")
        if len(cnt) and cnt.min() < 1:
            raise ValueError("stored cells need point_count >= 1")
        keys = self._keys(idx)
        if len(keys) > 1 and np.any(np.diff(keys) <= 0):
            order = np.argsort(keys, kind="stable")
            idx, cnt, keys = idx[order], cnt[order], keys[order]
            if np.any(np.diff(keys) == 0):
                raise ValueError("duplicate cell index in deck")
        idx.setflags(write=False)
        cnt.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "counts", cnt)

    def _keys(self, idx):
        return idx[:, 0] * self.grid.grid_extent[1] + idx[:, 1]

    @property
    def keys(self):
        return self._keys(self.indices)

    @classmethod
    def empty(cls, grid, owner):
        return cls(grid, np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64), owner)

    def __len__(self):
        return len(self.counts)

    def __eq__(self, other):
        if not isinstance(other, FeatureDeck):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.owner == other.owner
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.counts, other.counts)
        )

    __hash__ = None

    @property
    def cells(self):
        return [
            FeatureCell((int(i), int(j)), int(c), self.owner)
            for (i, j), c in zip(self.indices, self.counts)
        ]

    @property
    def payload_bytes(self):
        return CELL_PAYLOAD_BYTES * len(self)

    @property
    def total_points(self):
        return int(self.counts.sum())

    def centers(self):
        return self.grid.cell_centers(self.indices)

    def subset(self, positions):
        positions = np.sort(np.asarray(positions, dtype=np.int64))
        return FeatureDeck(self.grid, self.indices[positions], self.counts[positions], self.owner)

    def with_owner(self, owner):
        return FeatureDeck(self.grid, self.indices, self.counts, owner)

    def index_set(self):
        return {(int(i), int(j)) for i, j in self.indices}


def voxelize(cloud, grid, owner, cap=None):
    """Bin a global-frame cloud into planar cells; points off the grid are dropped.

    With ``cap`` set and more occupied cells than the cap, the densest cells
    are kept (ties broken by index).
    """
    if cloud.frame is not Frame.GLOBAL:
        raise ValueError("voxelize expects a global-frame cloud")
    if len(cloud) == 0:
        return FeatureDeck.empty(grid, owner)
    xy = cloud.points[:, :2]
    ij = np.floor((xy - np.asarray(grid.origin)) / np.asarray(grid.cell_size[:2])).astype(np.int64)
    nx, ny = grid.grid_extent
    ok = (ij[:, 0] >= 0) & (ij[:, 0] < nx) & (ij[:, 1] >= 0) & (ij[:, 1] < ny)
    keys = ij[ok, 0] * ny + ij[ok, 1]
    uniq, counts = np.unique(keys, return_counts=True)
    if cap is not None and len(uniq) > cap:
        order = np.lexsort((uniq, -counts))[:cap]
        order.sort()
        uniq, counts = uniq[order], counts[order]
    indices = np.stack([uniq // ny, uniq % ny], axis=1)
    return FeatureDeck(grid, indices, counts, owner)


def deck_union(decks, owner=None):
    """Index-wise union of decks on one grid; point counts are summed.

    The result is owned by ``owner`` (the merging node), defaulting to the
    first deck's owner.
    """
    decks = list(decks)
    if not decks:
        raise ValueError("deck_union needs at least one deck")
    grid = decks[0].grid
    for d in decks[1:]:
        if d.grid != grid:
            raise ValueError("cannot merge decks built on different grids")
    owner = decks[0].owner if owner is None else owner
    keys = np.concatenate([d.keys for d in decks])
    counts = np.concatenate([d.counts for d in decks])
    if len(keys) == 0:
        return FeatureDeck.empty(grid, owner)
    uniq, inv = np.unique(keys, return_inverse=True)
    summed = np.zeros(len(uniq), dtype=np.int64)
    np.add.at(summed, inv, counts)
    ny = grid.grid_extent[1]
    return FeatureDeck(grid, np.stack([uniq // ny, uniq % ny], axis=1), summed, owner)


def deck_to_bytes(deck):
    g = deck.grid
    header = _HEADER.pack(
        _MAGIC, 1, g.origin[0], g.origin[1], *g.cell_size,
        g.grid_extent[0], g.grid_extent[1], deck.owner, len(deck),
    )
    body = np.column_stack([deck.indices, deck.counts]).astype("<i8").tobytes()
    return header + body


def deck_from_bytes(data):
    magic, version, ox, oy, dx, dy, dz, nx, ny, owner, n = _HEADER.unpack_from(data)
    if magic != _MAGIC or version != 1:
        raise ValueError("not a feature deck blob")
    body = np.frombuffer(data, dtype="<i8", count=3 * n, offset=_HEADER.size).reshape(n, 3)
    grid = VoxelGridSpec((ox, oy), (dx, dy, dz), (nx, ny))
    return FeatureDeck(grid, body[:, :2].copy(), body[:, 2].copy(), int(owner))
