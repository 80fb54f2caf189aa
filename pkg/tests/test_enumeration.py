import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import polyad_set, random_instance
from polyads import oracle
from polyads.covariates import DenseCovariates, TableCovariates
from polyads.enumeration import (
    ActivePolyads,
    build_incidence,
    enumerate_active,
    inner_loop_count,
    polyad_edges,
)
from polyads.exceptions import MissingCovariateError, ResourceGuardError
from polyads.graph import Polyad, SparseCountGraph, orbit_bounds, sign


def _cov(dims, p=1, seed=0):
    return DenseCovariates(np.random.default_rng(seed).normal(size=tuple(dims) + (p,)))


def test_empty_graph_has_no_polyads():
    g = SparseCountGraph((3, 3))
    assert len(enumerate_active(g, _cov((3, 3)))) == 0
    assert oracle.brute_active_polyads({}, (3, 3)) == set()


def test_two_disjoint_edges_give_one_canonical_polyad():
    g = SparseCountGraph.from_dict((3, 3), {(0, 2): 1, (1, 0): 1})
    recs = enumerate_active(g, _cov(g.dims))
    assert polyad_set(recs) == {((1, 0), (0, 2))}
    assert recs.m.tolist() == [1] and recs.M.tolist() == [0]


def test_opposite_corners_are_inactive_in_odd_dimension():
    # (1, 1, 1) has sign -1 when D is odd, so neither bound is positive
    g = SparseCountGraph.from_dict((3, 3, 3), {(0, 0, 0): 1, (1, 1, 1): 1})
    assert len(enumerate_active(g, _cov(g.dims))) == 0
    assert oracle.brute_active_polyads(g.to_dict(), g.dims) == set()


def test_tetrad_with_both_diagonals_positive_is_kept_once():
    g = SparseCountGraph.from_dict((2, 2), {(0, 0): 1, (1, 1): 1, (0, 1): 2, (1, 0): 1})
    recs = enumerate_active(g, _cov(g.dims))
    assert polyad_set(recs) == {((0, 0), (1, 1))}
    assert recs.orbit_size.tolist() == [3]


@pytest.mark.parametrize("method", ["sorted", "hash"])
def test_matches_brute_force(method, rng):
    for _ in range(60):
        g, cov = random_instance(rng)
        recs = enumerate_active(g, cov, method=method)
        assert polyad_set(recs) == oracle.brute_active_polyads(g.to_dict(), g.dims)


def test_records_are_canonical_and_active(rng):
    for _ in range(30):
        g, cov = random_instance(rng)
        recs = enumerate_active(g, cov)
        for r in recs:
            xi = r.polyad
            m, M = orbit_bounds(g, xi)
            assert (m, M) == (r.m, r.M)
            assert m > 0
            assert all(t < b for t, b in zip(xi.top[1:], xi.bottom[1:]))
            assert M == 0 or xi.top[0] < xi.bottom[0]
            expected = sum(sign(xi, e) * cov(e) for e in xi.edges())
            np.testing.assert_allclose(r.did, expected, rtol=1e-12, atol=1e-12)


def test_inner_loop_counter_matches_reference_loops(rng):
    for _ in range(20):
        g, cov = random_instance(rng)
        hashed = enumerate_active(g, cov, method="hash")
        assert hashed.stats["inner_loop"] == inner_loop_count(g)
        assert enumerate_active(g, cov).stats["inner_loop"] == inner_loop_count(g)


def test_inner_loop_counter_bounded_by_edges_squared(rng):
    for D in (2, 3):
        g, _ = random_instance(rng, D=D, max_dim=6, density=0.3)
        n1 = g.dims[0]
        bound = g.n_edges**2 if D % 2 == 0 else (n1 - 1) * g.n_edges**2
        assert inner_loop_count(g) <= bound


def test_parallel_rows_give_identical_records(rng):
    g, cov = random_instance(rng, D=3, max_dim=5)
    a = enumerate_active(g, cov, n_jobs=1)
    b = enumerate_active(g, cov, n_jobs=2)
    assert np.array_equal(a.top, b.top) and np.array_equal(a.bottom, b.bottom)
    assert np.array_equal(a.did, b.did)


def test_missing_covariates_are_listed_in_full():
    g = SparseCountGraph.from_dict((2, 2), {(0, 0): 1, (1, 1): 1})
    cov = TableCovariates((2, 2), [[0, 0], [1, 1]], [1.0, 2.0])
    with pytest.raises(MissingCovariateError) as err:
        enumerate_active(g, cov)
    assert sorted(err.value.missing) == [(0, 1), (1, 0)]


def test_record_guard():
    g = SparseCountGraph.from_dense(np.ones((3, 3), dtype=int))
    with pytest.raises(ResourceGuardError):
        enumerate_active(g, _cov(g.dims), max_records=2)


def test_from_polyads_and_indexing():
    g = SparseCountGraph.from_dict((3, 3), {(0, 0): 2, (1, 1): 1})
    recs = ActivePolyads.from_polyads(g, _cov(g.dims), [Polyad((0, 0), (1, 1)), Polyad((0, 1), (2, 2))])
    assert recs.m.tolist() == [1, 0] and recs.M.tolist() == [0, 0]
    assert recs[0].polyad == Polyad((0, 0), (1, 1))
    assert len(recs[[1]]) == 1
    assert len(recs.concat(recs)) == 4


def test_polyad_edges_selector_order():
    e = polyad_edges(np.array([[0, 0, 0]]), np.array([[1, 2, 3]]))[0]
    assert e[0].tolist() == [0, 0, 0]
    assert e[1].tolist() == [1, 0, 0]
    assert e[7].tolist() == [1, 2, 3]


def test_incidence_lists_every_partner(rng):
    g, cov = random_instance(rng, D=3)
    recs = enumerate_active(g, cov)
    inc = build_incidence(recs, g.dims)
    assert inc.n_entries == recs.n_active
    expected = {}
    for k, xi in enumerate(recs.polyads()):
        for perm, _ in xi.permutations():
            expected.setdefault(perm.top, set()).add((perm.bottom, k))
    assert inc.n_keys == len(expected)
    for key, partners in expected.items():
        assert set(inc.partners_of(key)) == partners
    assert inc.partners_of((99,) * g.D) == []
    assert (99,) * g.D not in inc


@given(st.integers(0, 2**32 - 1))
def test_sorted_and_hash_agree(seed):
    rng = np.random.default_rng(seed)
    g, cov = random_instance(rng, max_dim=3)
    a = enumerate_active(g, cov, method="sorted")
    b = enumerate_active(g, cov, method="hash")
    assert np.array_equal(a.top, b.top) and np.array_equal(a.bottom, b.bottom)
    assert np.array_equal(a.edge_counts, b.edge_counts)
