"""Spatial locations, random ordering and nearest-neighbor structure.

The model conditions each site on its nearest predecessors in a fixed
(randomized) ordering of the reference locations, so every site's neighbor
list only contains indices that come earlier in that ordering.  New
(non-reference) locations instead take their neighbors from the whole
reference set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

__all__ = [
    "Location",
    "OrderedReferenceSet",
    "as_coords",
    "random_ordering",
    "build_reference",
    "neighbors_of_new",
]


@dataclass(frozen=True)
class Location:
    """A point in the (planar) spatial domain."""

    coord1: float
    coord2: float

    def __post_init__(self):
        if not (np.isfinite(self.coord1) and np.isfinite(self.coord2)):
            raise ValueError("location coordinates must be finite")


def as_coords(locations) -> np.ndarray:
    """Coerce a list of Location / pairs / an (n, 2) array to float64 (n, 2)."""
    if isinstance(locations, np.ndarray):
        arr = np.asarray(locations, dtype=float)
    else:
        rows = []
        for loc in locations:
            if isinstance(loc, Location):
                rows.append((loc.coord1, loc.coord2))
            else:
                rows.append((float(loc[0]), float(loc[1])))
        arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("expected an (n, 2) array of coordinates")
    if not np.all(np.isfinite(arr)):
        raise DataError("non-finite coordinates")
    return arr


def _check_distinct(coords: np.ndarray):
    uniq = np.unique(coords, axis=0)
    if len(uniq) != len(coords):
        raise DataError(
            "duplicate locations are not allowed: neighbor ordering is "
            "ill-defined for coincident points"
        )


@dataclass(frozen=True)
class OrderedReferenceSet:
    """Reference locations in model order plus per-site neighbor structure.

    Attributes
    ----------
    sites : (n, 2) array
        Coordinates, already in model order.
    L : int
        Neighbor budget; site i (0-based) has ``min(i, L)`` neighbors.
    nneigh : (n,) int32
        Number of neighbors per site.
    neigh_idx : (n, L) int32
        Neighbor indices sorted ascending by distance (ties: lower index),
        padded with -1.
    neigh_dist : (n, L) float64
        Distances to the neighbors, padded with +inf.
    perm : (n,) int64
        Permutation mapping input order to model order (``sites =
        input[perm]``); identity when the order was supplied directly.
    """

    sites: np.ndarray
    L: int
    nneigh: np.ndarray
    neigh_idx: np.ndarray
    neigh_dist: np.ndarray
    perm: np.ndarray

    @property
    def n(self) -> int:
        return len(self.sites)

    def neighbor_list(self, i: int) -> np.ndarray:
        """Indices of the neighbors of site i (earlier sites, nearest first)."""
        return self.neigh_idx[i, : self.nneigh[i]]

    def neighbor_distances(self, i: int) -> np.ndarray:
        return self.neigh_dist[i, : self.nneigh[i]]


def _neighbor_tables(coords: np.ndarray, L: int):
    n = len(coords)
    nneigh = np.zeros(n, dtype=np.int32)
    neigh_idx = np.full((n, L), -1, dtype=np.int32)
    neigh_dist = np.full((n, L), np.inf)
    for i in range(1, n):
        d = np.hypot(
            coords[:i, 0] - coords[i, 0], coords[:i, 1] - coords[i, 1]
        )
        k = min(i, L)
        # ascending distance, ties broken by lower index
        order = np.lexsort((np.arange(i), d))[:k]
        nneigh[i] = k
        neigh_idx[i, :k] = order
        neigh_dist[i, :k] = d[order]
    return nneigh, neigh_idx, neigh_dist


def random_ordering(locations, seed: int, L: int) -> OrderedReferenceSet:
    """Randomly permute the locations and build neighbor lists.

    The permutation is a uniformly random ordering determined by ``seed``.
    Requires at least two distinct locations.
    """
    coords = as_coords(locations)
    if len(coords) < 2:
        raise ValueError("need at least 2 locations")
    if L < 1:
        raise ValueError("neighbor budget L must be >= 1")
    _check_distinct(coords)
    perm = np.random.default_rng(seed).permutation(len(coords))
    ordered = coords[perm]
    nneigh, neigh_idx, neigh_dist = _neighbor_tables(ordered, L)
    return OrderedReferenceSet(ordered, int(L), nneigh, neigh_idx, neigh_dist, perm)


def build_reference(locations, L: int) -> OrderedReferenceSet:
    """Build neighbor lists for locations taken in the order given."""
    coords = as_coords(locations)
    if L < 1:
        raise ValueError("neighbor budget L must be >= 1")
    _check_distinct(coords)
    nneigh, neigh_idx, neigh_dist = _neighbor_tables(coords, L)
    perm = np.arange(len(coords))
    return OrderedReferenceSet(coords, int(L), nneigh, neigh_idx, neigh_dist, perm)


def neighbors_of_new(v0, ref: OrderedReferenceSet, L: int):
    """The L reference sites closest to a new location, nearest first.

    Returns ``(indices, distances)``.  ``v0`` must not coincide exactly with
    a reference site; prediction at reference sites uses their stored
    neighbor lists instead.
    """
    if L > ref.n:
        raise ValueError(f"L={L} exceeds the reference set size n={ref.n}")
    v = np.asarray(
        (v0.coord1, v0.coord2) if isinstance(v0, Location) else v0, dtype=float
    )
    d = np.hypot(ref.sites[:, 0] - v[0], ref.sites[:, 1] - v[1])
    if np.any(d == 0.0):
        raise ValueError("new location coincides with a reference site")
    order = np.lexsort((np.arange(ref.n), d))[:L]
    return order.astype(np.int32), d[order]
