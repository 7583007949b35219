from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import grid_legendre
from prisched.traffic import (
    ArrivalSource,
    Batch,
    Bernoulli,
    CorrelatedGroup,
    MarkovOnOff,
    legendre,
    link_rng,
    log_mgf,
    sample_arrivals,
)

MODELS = [
    Bernoulli(0.3),
    Bernoulli(0.0),
    Bernoulli(1.0),
    Batch((0, 3), (0.9, 0.1)),
    Batch((0, 1, 2, 5), (0.4, 0.3, 0.2, 0.1), bound=6),
    MarkovOnOff(0.2, 0.1, 2),
    MarkovOnOff(0.5, 0.5, 1),
    MarkovOnOff(1.0, 0.05, 3),
]


def _tilted_perron(m: MarkovOnOff, theta: float) -> float:
    # log spectral radius of P diag(1, e^{theta * batch})
    p = np.array([[1 - m.p_off_to_on, m.p_off_to_on], [m.p_on_to_off, 1 - m.p_on_to_off]])
    d = np.diag([1.0, math.exp(theta * m.batch_on)])
    return math.log(max(abs(np.linalg.eigvals(p @ d))))


def test_zero_rate_bernoulli_never_arrives():
    assert Bernoulli(0.0).stream(link_rng(1, 0, 0)).draw(10_000).sum() == 0


def test_bernoulli_long_run_mean():
    draws = Bernoulli(0.3).stream(link_rng(42, 0, 0)).draw(10**6)
    assert abs(draws.mean() - 0.3) <= 0.0015


def test_markov_stationary_mean():
    m = MarkovOnOff(0.2, 0.1, 2)
    assert m.rate == pytest.approx(2 * 0.1 / 0.3)
    draws = m.stream(link_rng(3, 0, 0)).draw(10**6)
    assert abs(draws.mean() - m.rate) < 0.02


def test_log_mgf_examples():
    # log(0.7 + 0.3e), evaluated independently of the library
    assert log_mgf(Bernoulli(0.3), 1.0) == pytest.approx(math.log(0.7 + 0.3 * math.e), abs=1e-14)
    assert log_mgf(Bernoulli(0.3), 1.0) == pytest.approx(0.4157352218, abs=1e-10)
    b = Batch((0, 3), (0.9, 0.1))
    for t in (-2.0, 0.5, 3.0):
        assert b.log_mgf(t) == pytest.approx(math.log(0.9 + 0.1 * math.exp(3 * t)), rel=1e-13)


@pytest.mark.parametrize("model", MODELS, ids=repr)
def test_log_mgf_vanishes_at_zero(model):
    assert model.log_mgf(0.0) == 0.0


@pytest.mark.parametrize("model", MODELS, ids=repr)
def test_log_mgf_convex_and_slope_matches_rate(model):
    t = np.linspace(-5, 5, 201)
    vals = np.array([model.log_mgf(x) for x in t])
    assert np.all(vals[:-2] - 2 * vals[1:-1] + vals[2:] >= -1e-8)
    h = 1e-5
    fd = (model.log_mgf(h) - model.log_mgf(-h)) / (2 * h)
    assert fd == pytest.approx(model.rate, abs=1e-6)
    for x in (-3.0, 0.7, 4.0):
        fd = (model.log_mgf(x + h) - model.log_mgf(x - h)) / (2 * h)
        assert model.log_mgf_deriv(x) == pytest.approx(fd, abs=1e-6)


@pytest.mark.parametrize("theta", [-4.0, -0.3, 0.8, 2.5, 30.0])
def test_markov_log_mgf_matches_perron_root(theta):
    for m in MODELS[5:]:
        assert m.log_mgf(theta) == pytest.approx(_tilted_perron(m, theta), rel=1e-10, abs=1e-12)


def test_large_theta_does_not_overflow():
    for m in MODELS:
        assert math.isfinite(m.log_mgf(500.0))


@pytest.mark.parametrize("model", MODELS, ids=repr)
def test_legendre_vanishes_at_rate(model):
    assert legendre(model, model.rate) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("q", [0.1, 0.3, 0.75])
def test_legendre_bernoulli_endpoint(q):
    assert legendre(Bernoulli(q), 1.0) == pytest.approx(-math.log(q), rel=1e-9)
    assert legendre(Bernoulli(q), 0.0) == pytest.approx(-math.log(1 - q), rel=1e-9)


def test_legendre_against_grid_search():
    expected = grid_legendre(lambda t: np.log(0.7 + 0.3 * np.exp(t)), 0.5)
    assert legendre(Bernoulli(0.3), 0.5) == pytest.approx(expected, abs=1e-7)
    assert legendre(Bernoulli(0.3), 0.5) == pytest.approx(0.0871766936, abs=1e-9)


def test_legendre_outside_support():
    assert legendre(Bernoulli(0.3), 1.5) == math.inf
    assert legendre(Bernoulli(0.3), -0.1) == math.inf
    assert legendre(Batch((1, 2), (0.5, 0.5)), 0.5) == math.inf
    assert legendre(Batch((0, 3), (0.9, 0.1)), 3.0) == pytest.approx(-math.log(0.1), rel=1e-9)
    assert legendre(MarkovOnOff(0.2, 0.1, 2), 2.0) == pytest.approx(-math.log(0.8), rel=1e-6)


@given(st.floats(0.01, 0.99), st.floats(0.0, 1.0))
def test_legendre_nonnegative_and_zero_only_at_mean(q, mu):
    val = legendre(Bernoulli(q), mu)
    assert val >= 0
    if abs(mu - q) > 1e-3:
        assert val > 0


def test_chunked_draws_equal_single_draws():
    for m in (Bernoulli(0.3), Batch((0, 3), (0.9, 0.1)), MarkovOnOff(0.2, 0.1, 2)):
        block = m.stream(link_rng(5, 1, 2)).draw(500)
        s = m.stream(link_rng(5, 1, 2))
        singles = [sample_arrivals(s) for _ in range(500)]
        assert block.tolist() == singles


def test_model_validation():
    with pytest.raises(ValueError):
        Bernoulli(1.5)
    with pytest.raises(ValueError):
        Batch((0, 3), (0.5, 0.6))
    with pytest.raises(ValueError):
        Batch((0, 3), (0.5, 0.5), bound=2)
    with pytest.raises(ValueError):
        MarkovOnOff(0.0, 0.5)


def test_correlated_group_marginals_and_coupling():
    sync = CorrelatedGroup((0.2, 0.5), "synchronized", tag=1)
    stag = CorrelatedGroup((0.34, 0.34, 0.34), "staggered", tag=2)
    src = ArrivalSource([*sync.members(), *stag.members(), Bernoulli(0.5)], seed=8)
    draws = src.draw(200_000)
    assert np.allclose(draws.mean(axis=0), [0.2, 0.5, 0.34, 0.34, 0.34, 0.5], atol=0.005)
    # synchronized: the rarer link only fires together with the other
    assert np.all(draws[:, 0] <= draws[:, 1])
    # staggered arcs cover 1.02 of the circle, so some leaf fires every slot
    assert np.all(draws[:, 2:5].sum(axis=1) >= 1)
    assert not sync.members()[0].independent


def test_sources_share_streams_by_key():
    models = [Bernoulli(0.3), Bernoulli(0.6), Bernoulli(0.1)]
    full = ArrivalSource(models, seed=4, rep=2).draw(1000)
    part = ArrivalSource([models[2], models[0]], seed=4, rep=2, keys=[2, 0]).draw(1000)
    assert np.array_equal(part, full[:, [2, 0]])
    other = ArrivalSource(models, seed=4, rep=3).draw(1000)
    assert not np.array_equal(full, other)


def test_group_tags_must_differ():
    a = CorrelatedGroup((0.1, 0.1), tag=1)
    b = CorrelatedGroup((0.1, 0.1), tag=1)
    with pytest.raises(ValueError):
        ArrivalSource([*a.members(), *b.members()], seed=0)
