import itertools
import math

import numpy as np
import pytest

from compute import (
    PhiTables,
    build_phi,
    edge_rate,
    edge_rates,
    log_likelihood,
    order_community_rates,
    per_order_log_likelihood,
    refresh_phi_for_node,
)
from errors import NumericError, ValidationError
from hypergraph import Hypergraph
from params import ModelParams, Variant, lambda_tensor


def brute_phi(m, d):
    """Sum over every d-subset of the product of its rows"""
    total = np.zeros(m.shape[1])
    for subset in itertools.combinations(range(m.shape[0]), d):
        total += np.prod(m[list(subset)], axis=0)
    return total


def all_edges(n_nodes, d):
    return np.asarray(list(itertools.combinations(range(n_nodes), d)), dtype=np.int64)


def unit_params(n_nodes, max_order, gamma=1.0):
    return ModelParams(
        Variant.SEMI,
        np.ones((n_nodes, 1)),
        np.ones((1, 1)),
        np.full((max_order - 1, 1), gamma),
    )


def test_phi_example():
    """Test the tables for three nodes with unit memberships"""
    tables = PhiTables(np.ones((3, 1)), 3)
    np.testing.assert_allclose(tables.phi[1:, 0], [3.0, 3.0, 1.0])
    np.testing.assert_allclose(tables.barphi_row(0)[1:, 0], [2.0, 1.0, 0.0])


def test_barphi_ignores_empty_node():
    m = np.array([[1.0, 2.0], [0.5, 0.0], [0.0, 0.0], [3.0, 1.0]])
    tables = PhiTables(m, 4)
    np.testing.assert_allclose(tables.barphi_row(2), tables.phi)


def test_phi_matches_brute_force():
    """Test both recurrences against subset enumeration on random instances"""
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 13))
        k = int(rng.integers(1, 4))
        top = int(rng.integers(2, 6))
        m = rng.random((n, k))
        tables = PhiTables(m, top)
        barphi = tables.barphi
        for d in range(1, top + 1):
            np.testing.assert_allclose(tables.phi[d], brute_phi(m, d), rtol=1e-9, atol=1e-12)
        i = int(rng.integers(n))
        others = np.delete(m, i, axis=0)
        for d in range(1, top + 1):
            np.testing.assert_allclose(
                barphi[d, i], brute_phi(others, d), rtol=1e-9, atol=1e-12
            )


def test_update_node_without_change():
    m = np.random.default_rng(1).random((5, 2))
    tables = PhiTables(m, 4)
    before = tables.phi.copy()
    tables.update_node(2, m[2].copy())
    np.testing.assert_array_equal(tables.phi, before)


def test_update_node_to_zero():
    """Test that removing a node of three leaves a single pair"""
    tables = PhiTables(np.ones((3, 1)), 3)
    refresh_phi_for_node(tables, 2, np.zeros(1))
    np.testing.assert_allclose(tables.phi[2, 0], 1.0, atol=1e-12)
    np.testing.assert_allclose(tables.phi[3, 0], 0.0, atol=1e-12)


def test_sequential_updates_match_rebuild():
    """Test a full sweep of node updates against fresh tables"""
    rng = np.random.default_rng(2)
    for _ in range(20):
        n, k, top = 10, 3, 5
        tables = PhiTables(rng.random((n, k)), top)
        new_m = rng.random((n, k))
        for i in range(n):
            tables.update_node(i, new_m[i])
        fresh = PhiTables(new_m, top)
        np.testing.assert_allclose(tables.phi, fresh.phi, rtol=1e-9)
        np.testing.assert_allclose(tables.barphi, fresh.barphi, rtol=1e-9, atol=1e-12)
        tables.check_consistency()


def test_check_consistency_detects_drift():
    tables = PhiTables(np.ones((4, 2)), 3)
    tables.phi[2, 1] *= 1.5
    with pytest.raises(NumericError):
        tables.check_consistency()


def test_copy_is_independent():
    tables = PhiTables(np.ones((4, 2)), 3)
    other = tables.copy()
    other.update_node(0, np.zeros(2))
    assert tables.phi[2, 0] == 6.0
    assert other.phi[2, 0] == pytest.approx(3.0)


def test_edge_rate_example():
    params = unit_params(2, 2, gamma=6.0)
    assert edge_rate(params, (1, 0)) == pytest.approx(6.0)


def test_semi_with_identity_equals_strict(random_params):
    """Test that semi with K == C and W = I is the strict model"""
    rng = np.random.default_rng(3)
    semi = random_params(rng, 6, 3, 3, 3, "semi")
    strict = ModelParams(Variant.STRICT, semi.theta, semi.w, semi.gamma)
    for d in (2, 3):
        edges = all_edges(6, d)
        np.testing.assert_array_equal(edge_rates(semi, edges), edge_rates(strict, edges))


@pytest.mark.parametrize("variant", ["semi", "omni"])
def test_edge_rates_match_tucker_form(random_params, variant):
    """Test edge rates against the dense affinity tensor contraction"""
    params = random_params(np.random.default_rng(4), 5, 2, 3, 3, variant)
    for d in (2, 3):
        affinity = lambda_tensor(params, d)
        for edge in all_edges(5, d):
            expected = 0.0
            for index in itertools.product(range(2), repeat=d):
                expected += affinity[index] * np.prod(
                    [params.theta[node, c] for node, c in zip(edge, index)]
                )
            assert edge_rate(params, edge) == pytest.approx(expected, rel=1e-10)


def test_pairwise_rates_are_low_rank(random_params):
    params = random_params(np.random.default_rng(5), 6, 2, 4, 2, "semi")
    m = params.memberships()
    expected = m @ np.diag(params.gamma[0]) @ m.T
    edges = all_edges(6, 2)
    np.testing.assert_allclose(
        edge_rates(params, edges), expected[edges[:, 0], edges[:, 1]], rtol=1e-12
    )


@pytest.mark.parametrize("variant", ["semi", "omni"])
def test_log_space_products(random_params, variant):
    """Test that large orders give the same rates through log space"""
    rng = np.random.default_rng(6)
    params = random_params(rng, 12, 2, 3, 10, variant)
    edges = all_edges(12, 10)
    np.testing.assert_allclose(
        edge_rates(params, edges, log_space_threshold=8),
        edge_rates(params, edges, log_space_threshold=100),
        rtol=1e-10,
    )


def test_edge_rates_reject_bad_order(random_params):
    params = random_params(np.random.default_rng(6), 5, 2, 2, 3, "semi")
    with pytest.raises(ValidationError):
        edge_rates(params, np.array([[0, 1, 2, 3]]))


@pytest.mark.parametrize("variant", ["strict", "semi", "omni"])
def test_order_rates_match_enumeration(random_params, variant):
    """Test the total rate per order against a sum over every hyperedge"""
    rng = np.random.default_rng(7)
    c, k = (2, 2) if variant == "strict" else (2, 4)
    params = random_params(rng, 8, c, k, 4, variant)
    rates = order_community_rates(params, build_phi(params)).sum(axis=1)
    for d in range(2, 5):
        assert rates[d - 2] == pytest.approx(edge_rates(params, all_edges(8, d)).sum(), rel=1e-9)


def test_log_likelihood_single_edge():
    """Test that A = 1 with mu = 1 contributes -1 in full mode"""
    hypergraph = Hypergraph(2)
    hypergraph.add((0, 1))
    params = unit_params(2, 2)
    assert log_likelihood(hypergraph, params, mode="full") == pytest.approx(-1.0)


def test_log_likelihood_empty_hypergraph(random_params):
    params = random_params(np.random.default_rng(8), 5, 2, 3, 3, "omni")
    expected = -sum(edge_rates(params, all_edges(5, d)).sum() for d in (2, 3))
    assert log_likelihood(Hypergraph(5, 3), params) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("variant", ["strict", "semi", "omni"])
def test_log_likelihood_matches_enumeration(random_params, random_hypergraph, variant):
    rng = np.random.default_rng(9)
    c, k = (2, 2) if variant == "strict" else (2, 3)
    params = random_params(rng, 6, c, k, 4, variant)
    hypergraph = random_hypergraph(rng, 6, 4, n_edges=5)
    proportional = 0.0
    full = 0.0
    for d in range(2, 5):
        for edge, mu in zip(all_edges(6, d), edge_rates(params, all_edges(6, d))):
            count = hypergraph.count(edge)
            proportional += count * math.log(mu) - mu
            full += count * math.log(mu) - mu - math.lgamma(count + 1)
    assert log_likelihood(hypergraph, params) == pytest.approx(proportional, rel=1e-10)
    assert log_likelihood(hypergraph, params, mode="full") == pytest.approx(full, rel=1e-10)
    per_order = per_order_log_likelihood(hypergraph, params)
    assert sum(per_order.values()) == pytest.approx(proportional, rel=1e-10)


def test_log_likelihood_zero_rate_on_observed_edge():
    params = unit_params(3, 2)
    params.theta[0] = 0.0
    hypergraph = Hypergraph(3)
    hypergraph.add((0, 1))
    assert log_likelihood(hypergraph, params) == float("-inf")


def test_log_likelihood_rejects_mismatch():
    params = unit_params(3, 2)
    hypergraph = Hypergraph(4)
    hypergraph.add((0, 1))
    with pytest.raises(ValidationError):
        log_likelihood(hypergraph, params)
    with pytest.raises(ValidationError):
        log_likelihood(Hypergraph(3), params, mode="partial")
