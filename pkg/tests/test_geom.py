import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnmix import geom
from nnmix.errors import DataError


def brute_force_neighbors(coords, i, k):
    """Independent oracle: full scan with (distance, index) sorting."""
    d = np.hypot(coords[:i, 0] - coords[i, 0], coords[:i, 1] - coords[i, 1])
    order = sorted(range(i), key=lambda j: (d[j], j))
    return order[:k]


def test_two_locations_single_neighbor():
    ref = geom.random_ordering([(0.0, 0.0), (1.0, 1.0)], seed=0, L=4)
    assert ref.nneigh[1] == 1
    assert list(ref.neighbor_list(1)) == [0]


def test_collinear_equispaced_forced_order():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
    ref = geom.build_reference(pts, L=2)
    assert list(ref.neighbor_list(3)) == [2, 1]
    assert list(ref.neighbor_list(2)) == [1, 0]


def test_neighbor_lists_match_exhaustive_scan():
    rng = np.random.default_rng(3)
    coords = rng.random((100, 2))
    ref = geom.random_ordering(coords, seed=9, L=10)
    for i in range(1, ref.n):
        k = min(i, 10)
        expected = brute_force_neighbors(ref.sites, i, k)
        assert list(ref.neighbor_list(i)) == expected
        if i >= 11:
            assert ref.nneigh[i] == 10
            d = np.hypot(ref.sites[:i, 0] - ref.sites[i, 0],
                         ref.sites[:i, 1] - ref.sites[i, 1])
            included = ref.neighbor_list(i)
            excluded = np.setdiff1d(np.arange(i), included)
            assert d[included].max() <= d[excluded].min()


def test_indices_precede_site_in_ordering():
    coords = np.random.default_rng(5).random((40, 2))
    ref = geom.random_ordering(coords, seed=1, L=6)
    for i in range(1, ref.n):
        assert np.all(ref.neighbor_list(i) < i)
        d = ref.neighbor_distances(i)
        assert np.all(np.diff(d) >= 0)


def test_ordering_is_seeded_permutation():
    coords = np.random.default_rng(0).random((25, 2))
    a = geom.random_ordering(coords, seed=7, L=3)
    b = geom.random_ordering(coords, seed=7, L=3)
    c = geom.random_ordering(coords, seed=8, L=3)
    assert np.array_equal(a.perm, b.perm)
    assert not np.array_equal(a.perm, c.perm)
    assert np.array_equal(np.sort(a.perm), np.arange(25))


def test_duplicates_rejected():
    with pytest.raises(DataError):
        geom.random_ordering([(0.0, 0.0), (0.0, 0.0), (1.0, 0.0)], seed=0, L=2)


def test_neighbors_of_new_matches_scan():
    rng = np.random.default_rng(11)
    ref = geom.build_reference(rng.random((500, 2)), L=5)
    v0 = np.array([0.41, 0.63])
    idx, dist = geom.neighbors_of_new(v0, ref, 20)
    d = np.hypot(ref.sites[:, 0] - v0[0], ref.sites[:, 1] - v0[1])
    expected = sorted(range(500), key=lambda j: (d[j], j))[:20]
    assert list(idx) == expected
    assert np.allclose(dist, d[expected])


def test_neighbors_of_new_near_coincident():
    ref = geom.build_reference([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], L=2)
    idx, _ = geom.neighbors_of_new((1.0 + 1e-9, 0.0), ref, 1)
    assert idx[0] == 1


def test_neighbors_of_new_grid_center():
    g = np.array([[x, y] for x in range(3) for y in range(3)], dtype=float)
    ref = geom.build_reference(g, L=4)
    idx, _ = geom.neighbors_of_new((1.0 + 0.01, 1.0), ref, 1)
    center = np.flatnonzero((ref.sites == [1.0, 1.0]).all(axis=1))[0]
    assert idx[0] == center


def test_neighbors_of_new_errors():
    ref = geom.build_reference([(0.0, 0.0), (1.0, 0.0)], L=1)
    with pytest.raises(ValueError):
        geom.neighbors_of_new((0.5, 0.5), ref, 3)
    with pytest.raises(ValueError):
        geom.neighbors_of_new((0.0, 0.0), ref, 1)


@settings(max_examples=25, deadline=None, derandomize=True)
@given(n=st.integers(5, 60), L=st.integers(1, 8), seed=st.integers(0, 10_000))
def test_property_lists_match_scan(n, L, seed):
    coords = np.random.default_rng(seed).random((n, 2))
    ref = geom.random_ordering(coords, seed=seed + 1, L=L)
    for i in range(1, n):
        expected = brute_force_neighbors(ref.sites, i, min(i, L))
        assert list(ref.neighbor_list(i)) == expected
