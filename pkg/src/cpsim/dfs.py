"""Dynamic feature sharing: sift a feature deck down to a cell budget."""

from __future__ import annotations

import enum

import numpy as np

from .feature import CELL_PAYLOAD_BYTES


class FilterStrategy(enum.Enum):
    TOP_K_NEAREST = "top_k_nearest"
    TOP_K_FARTHEST = "top_k_farthest"
    RANDOM_VOXEL = "random_voxel"
    RANDOM_PRIORITY = "random_priority"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(s.value for s in cls)
            raise ValueError(f"unknown strategy {value!r}; expected one of {names}") from None


def manhattan_priority(cell_center, sensor_loc):
    return abs(float(cell_center[0]) - float(sensor_loc[0])) + abs(float(cell_center[1]) - float(sensor_loc[1]))


def deck_priorities(deck, sensor_loc):
    """Manhattan distance from every cell center of ``deck`` to the sensor."""
    c = deck.centers()
    return np.abs(c[:, 0] - sensor_loc[0]) + np.abs(c[:, 1] - sensor_loc[1])


def budget_to_cells(budget_bytes):
    budget_bytes = int(budget_bytes)
    if budget_bytes < 0:
        raise ValueError("byte budget must be non-negative")
    return budget_bytes // CELL_PAYLOAD_BYTES


def priority_order(deck, sensor_loc):
    """Cell positions sorted by priority ascending, ties by (ix, iy)."""
    pr = deck_priorities(deck, sensor_loc)
    return np.lexsort((deck.indices[:, 1], deck.indices[:, 0], pr))


def strata_bounds(n, k):
    """Start offsets and sizes of ``k`` contiguous strata over ``n`` ranks.

    The first ``n % k`` strata hold one extra rank.
    """
    base, extra = divmod(n, k)
    sizes = np.full(k, base, dtype=np.int64)
    sizes[:extra] += 1
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    return starts, sizes


def sift(deck, strategy, k, sensor_loc, seed, stratified=True):
    """Keep ``min(k, len(deck))`` cells of ``deck`` chosen by ``strategy``.

    ``RANDOM_PRIORITY`` sorts cells by priority, cuts the ranking into ``k``
    contiguous strata and draws one cell from each. Pass ``stratified=False``
    to draw ``k`` ranks uniformly instead.
    """
    strategy = FilterStrategy.parse(strategy)
    k = int(k)
    if k < 0:
        raise ValueError("K must be non-negative")
    n = len(deck)
    if n <= k:
        return deck
    if k == 0:
        return deck.subset([])
    if strategy is FilterStrategy.RANDOM_VOXEL:
        rng = np.random.default_rng(seed)
        return deck.subset(rng.choice(n, size=k, replace=False))
    order = priority_order(deck, sensor_loc)
    if strategy is FilterStrategy.TOP_K_NEAREST:
        return deck.subset(order[:k])
    if strategy is FilterStrategy.TOP_K_FARTHEST:
        return deck.subset(order[n - k:])
    rng = np.random.default_rng(seed)
    if not stratified:
        return deck.subset(order[rng.choice(n, size=k, replace=False)])
    starts, sizes = strata_bounds(n, k)
    ranks = starts + np.floor(rng.random(k) * sizes).astype(np.int64)
    return deck.subset(order[ranks])
