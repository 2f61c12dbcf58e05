import itertools
import logging

import numpy as np
import pytest
from scipy.stats import chisquare

import generate
from compute import edge_rates
from errors import ValidationError
from generate import (
    GenSpec,
    _sample_events,
    sample_hypergraph,
    total_rate,
    weighted_sample_without_replacement,
)
from params import ModelParams, Variant


def unit_params(n_nodes, max_order, gamma=1.0):
    return ModelParams(
        Variant.SEMI,
        np.ones((n_nodes, 1)),
        np.ones((1, 1)),
        np.full((max_order - 1, 1), gamma),
    )


def test_total_rate_example():
    """Test three unit nodes up to order 3: three pairs and one triangle"""
    mu, rates = total_rate(unit_params(3, 3))
    assert mu == pytest.approx(4.0)
    np.testing.assert_allclose(rates, [[3.0], [1.0]])


@pytest.mark.parametrize("variant", ["semi", "omni"])
def test_total_rate_matches_enumeration(random_params, variant):
    params = random_params(np.random.default_rng(0), 8, 2, 4, 4, variant)
    expected = sum(
        edge_rates(params, np.asarray(list(itertools.combinations(range(8), d)))).sum()
        for d in range(2, 5)
    )
    assert total_rate(params)[0] == pytest.approx(expected, rel=1e-9)


def test_zero_rates_give_empty_hypergraph():
    params = unit_params(4, 3, gamma=0.0)
    assert total_rate(params)[0] == 0.0
    hypergraph = sample_hypergraph(GenSpec(params, seed=1))
    assert hypergraph.total_count() == 0
    assert hypergraph.n_nodes == 4


def test_sample_is_reproducible(random_params):
    params = random_params(np.random.default_rng(1), 10, 2, 3, 4, "omni")
    first = sample_hypergraph(GenSpec(params, seed=4))
    second = sample_hypergraph(GenSpec(params, seed=4))
    assert first.as_dict() == second.as_dict()
    other = sample_hypergraph(GenSpec(params, seed=5))
    assert other.as_dict() != first.as_dict()


def test_sample_orders_and_nodes(random_params):
    params = random_params(np.random.default_rng(2), 10, 2, 3, 4, "semi")
    hypergraph = sample_hypergraph(GenSpec(params, seed=0))
    assert hypergraph.total_count() > 0
    assert set(hypergraph.orders()) <= {2, 3, 4}
    for edge in hypergraph.as_dict():
        assert len(set(edge)) == len(edge)
        assert all(0 <= node < 10 for node in edge)


def test_pairs_are_uniform_for_equal_weights():
    """Test that equal memberships give every pair the same expected count"""
    hypergraph = sample_hypergraph(GenSpec(unit_params(3, 2, gamma=100.0), seed=3))
    counts = [hypergraph.count(pair) for pair in itertools.combinations(range(3), 2)]
    assert chisquare(counts).pvalue > 0.001


def test_total_count_matches_rate():
    params = unit_params(5, 3, gamma=0.5)
    mu, _ = total_rate(params)
    totals = [sample_hypergraph(GenSpec(params, seed=seed)).total_count() for seed in range(2000)]
    assert abs(np.mean(totals) - mu) < 5 * np.sqrt(mu / len(totals))


def test_max_events_cap(caplog):
    caplog.set_level(logging.WARNING)
    hypergraph = sample_hypergraph(GenSpec(unit_params(6, 3, gamma=50.0), seed=0, max_events=7))
    assert hypergraph.total_count() == 7
    assert "Capping" in caplog.text
    with pytest.raises(ValidationError):
        GenSpec(unit_params(6, 3), max_events=-1)


def test_weighted_sample_without_replacement():
    rng = np.random.default_rng(0)
    weights = np.array([0.0, 1.0, 2.0, 0.0, 3.0])
    for _ in range(50):
        picked = weighted_sample_without_replacement(weights, 2, rng)
        assert len(set(picked.tolist())) == 2
        assert set(picked.tolist()) <= {1, 2, 4}
        assert list(picked) == sorted(picked)
    assert len(weighted_sample_without_replacement(weights, 0, rng)) == 0
    np.testing.assert_array_equal(weighted_sample_without_replacement(weights, 3, rng), [1, 2, 4])
    with pytest.raises(ValidationError):
        weighted_sample_without_replacement(weights, 4, rng)


def test_weighted_sample_single_draw_frequencies():
    rng = np.random.default_rng(1)
    weights = np.array([1.0, 2.0, 3.0, 4.0])
    draws = [int(weighted_sample_without_replacement(weights, 1, rng)[0]) for _ in range(4000)]
    observed = np.bincount(draws, minlength=4)
    assert chisquare(observed, 4000 * weights / weights.sum()).pvalue > 0.001


def sequential_pair_probabilities(weights):
    p = weights / weights.sum()
    return {
        (a, b): p[a] * p[b] / (1 - p[a]) + p[b] * p[a] / (1 - p[b])
        for a, b in itertools.combinations(range(len(weights)), 2)
    }


def test_rejection_sampler_matches_sequential_draws():
    """Test pair frequencies of the event sampler against renormalized draws"""
    weights = np.array([5.0, 1.0, 1.0, 0.5])
    events = _sample_events(weights, 2, 20_000, np.random.default_rng(2))
    assert np.all(events[:, 0] < events[:, 1])
    expected = sequential_pair_probabilities(weights)
    pairs = list(expected)
    observed = [int(np.sum((events[:, 0] == a) & (events[:, 1] == b))) for a, b in pairs]
    assert chisquare(observed, [20_000 * expected[pair] for pair in pairs]).pvalue > 0.001


def test_exponential_keys_match_sequential_draws():
    weights = np.array([5.0, 1.0, 1.0, 0.5])
    rng = np.random.default_rng(3)
    expected = sequential_pair_probabilities(weights)
    pairs = list(expected)
    tally = dict.fromkeys(pairs, 0)
    for _ in range(20_000):
        tally[tuple(weighted_sample_without_replacement(weights, 2, rng).tolist())] += 1
    observed = [tally[pair] for pair in pairs]
    assert chisquare(observed, [20_000 * expected[pair] for pair in pairs]).pvalue > 0.001


def test_skips_cells_without_enough_nodes(monkeypatch, caplog):
    """Test that an order larger than the positive weights is skipped"""
    caplog.set_level(logging.WARNING)
    params = ModelParams(
        Variant.SEMI,
        np.array([[1.0], [1.0], [0.0], [0.0]]),
        np.ones((1, 1)),
        np.ones((2, 1)),
    )
    monkeypatch.setattr(
        generate, "order_community_rates", lambda params, tables: np.array([[0.0], [20.0]])
    )
    hypergraph = sample_hypergraph(GenSpec(params, seed=0))
    assert hypergraph.total_count() == 0
    assert "not enough nodes" in caplog.text


def free_community_params(theta, gamma):
    """Omni parameters with two classes whose pure communities are silent"""
    return ModelParams(
        Variant.OMNI,
        np.asarray(theta, dtype=np.float64),
        np.array([[1.0, 0.0, 0.5], [0.0, 1.0, 0.5]]),
        np.array([[0.0, 0.0, gamma]]),
    )


def test_free_community_never_pairs_within_a_class(caplog):
    caplog.set_level(logging.WARNING)
    labels = [0, 0, 0, 1, 1, 1]
    params = free_community_params(np.eye(2)[labels], 40.0)
    hypergraph = sample_hypergraph(GenSpec(params, seed=0))
    assert hypergraph.total_count() > 0
    for a, b in hypergraph.as_dict():
        assert labels[a] != labels[b]
    assert "Skipping" not in caplog.text


def test_free_community_pairs_follow_rates():
    """Test that generated pair frequencies match the model rates"""
    share = np.array([0.9, 0.7, 0.5, 0.2, 0.0])
    params = free_community_params(np.column_stack([share, 1 - share]), 10_000.0)
    pairs = np.asarray(list(itertools.combinations(range(5), 2)))
    rates = edge_rates(params, pairs)
    hypergraph = sample_hypergraph(GenSpec(params, seed=1))
    observed = np.array([hypergraph.count(tuple(pair)) for pair in pairs.tolist()])
    expected = observed.sum() * rates / rates.sum()
    assert chisquare(observed, expected).pvalue > 0.001


def test_free_community_within_class_share():
    rng = np.random.default_rng(4)
    labels = np.repeat([0, 1], 15)
    theta = np.where(np.eye(2)[labels] > 0, 0.8, 0.2) * rng.uniform(0.5, 1.5, size=(30, 1))
    params = ModelParams(
        Variant.OMNI,
        theta,
        np.array([[1.0, 0.0, 0.5], [0.0, 1.0, 0.5]]),
        np.array([[2.0, 2.0, 60.0]]),
    )
    pairs = np.asarray(list(itertools.combinations(range(30), 2)))
    within = labels[pairs[:, 0]] == labels[pairs[:, 1]]
    rates = edge_rates(params, pairs)
    model_share = rates[within].sum() / rates.sum()

    counts = np.zeros(len(pairs))
    for seed in range(20):
        hypergraph = sample_hypergraph(GenSpec(params, seed=seed))
        counts += [hypergraph.count(tuple(pair)) for pair in pairs.tolist()]
    generated_share = counts[within].sum() / counts.sum()
    error = np.sqrt(model_share * (1 - model_share) / counts.sum())
    assert abs(generated_share - model_share) < 5 * error + 0.01
