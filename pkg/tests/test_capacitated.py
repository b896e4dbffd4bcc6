import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import single_edge
from mcflow.capacitated import (FAIL, OK, CapacitatedParams, OracleAnswer, WidthError,
                                mwu_saturation, quadratically_capacitated_flow, reweigh, update_weights)
from mcflow.generate import planted_capacitated, random_pd_blocks
from mcflow.graphcore import incidence_transpose_apply
from mcflow.kvec import EnergyMatrices, energy
from mcflow.trace import Trace


def test_theoretical_constants():
    assert CapacitatedParams.paper_rho(1000, 1.0) == pytest.approx(100.0)
    p = CapacitatedParams.paper(1000, 1.0)
    assert p.rho == pytest.approx(100.0)
    assert p.n_iter == math.ceil(20 * 100 * math.log(1000))


def test_practical_overrides_keep_eps():
    p = CapacitatedParams.practical(10, 0.1, n_iter=7, rho=3.0)
    assert (p.n_iter, p.rho, p.stop_at) == (7, 3.0, 1.1)
    assert p.threshold == pytest.approx(2.0)


def test_zero_demand_gives_zero_flow():
    out = quadratically_capacitated_flow(single_edge(), EnergyMatrices.identity(1, 2), np.zeros((2, 2)), 0.1)
    assert out.ok and np.all(out.flow == 0) and out.max_saturation == 0.0


def test_single_edge_overload_fails():
    out = quadratically_capacitated_flow(single_edge(), EnergyMatrices.identity(1, 1),
                                         np.array([-2.0, 2.0]), 0.1)
    assert out.status == FAIL


def test_single_edge_within_capacity():
    out = quadratically_capacitated_flow(single_edge(), EnergyMatrices.identity(1, 1),
                                         np.array([-0.5, 0.5]), 0.1)
    assert out.status == OK
    assert out.flow[0, 0] == pytest.approx(0.5)


def test_reweigh_examples(rng):
    P = EnergyMatrices(random_pd_blocks(rng, 4, 3, 10.0))
    out = reweigh(P, np.ones(4), 4.0, 0.1)
    assert np.allclose(out.blocks, 1.1 * P.blocks)
    w = rng.uniform(0.5, 5, size=4)
    assert np.allclose(reweigh(P, w, w.sum(), 1e-15).blocks, w[:, None, None] * P.blocks)
    out = reweigh(P, w, w.sum(), 0.3)
    assert np.allclose(out.lam_max / out.lam_min, P.lam_max / P.lam_min, rtol=1e-12)


def test_update_examples():
    w = np.array([1.0, 2.0])
    assert np.array_equal(update_weights(w, np.zeros(2), 0.1, 5.0), w)
    assert np.allclose(update_weights(w, np.array([5.0, 5.0]), 0.1, 5.0), 1.1 * w)


@given(st.integers(0, 10_000), st.floats(0.01, 0.5), st.floats(1.0, 50.0))
def test_potential_growth_bound(seed, eps, rho):
    r = np.random.default_rng(seed)
    w = r.uniform(0.1, 10, size=8)
    sats = r.uniform(0, rho, size=8)
    # rescale so the weighted saturation total is at most mu
    sats *= min(1.0, w.sum() / float(w @ sats))
    new = update_weights(w, sats, eps, rho)
    assert np.all(new >= w)
    assert new.sum() <= math.exp(eps / rho) * w.sum() * (1 + 1e-12)


def test_stub_oracle_energy_above_mu_fails():
    P = EnergyMatrices.identity(3, 1)

    def oracle(Pt):
        f = np.full((3, 1), 10.0)
        return OracleAnswer(f, energy(Pt, f))

    out = mwu_saturation(P, oracle, CapacitatedParams(0.1, 2.0, 5), (3, 1))
    assert out.status == FAIL and out.iterations == 1


def test_width_error_when_nothing_accepted():
    P = EnergyMatrices.identity(4, 1)
    big = np.array([[1.9], [0.0], [0.0], [0.0]])

    def oracle(Pt):
        return OracleAnswer(big, 0.0)

    with pytest.raises(WidthError):
        mwu_saturation(P, oracle, CapacitatedParams(0.1, 1.0, 3), (4, 1))


def test_only_accepted_flows_are_averaged():
    P = EnergyMatrices.identity(2, 1)
    answers = iter([np.array([[5.0], [0.0]]), np.array([[0.5], [0.5]]), np.array([[0.3], [0.1]])])

    def oracle(Pt):
        f = next(answers)
        return OracleAnswer(f, 0.0)

    out = mwu_saturation(P, oracle, CapacitatedParams(0.1, 2.0, 3), (2, 1))
    assert out.accepted == 2
    assert np.allclose(out.flow, [[0.4], [0.3]])


def test_planted_instances_succeed_with_monotone_potential():
    for seed in range(5):
        pc = planted_capacitated(seed, 7, 11, 2, 0.1)
        assert pc.planted_saturation == pytest.approx(0.8)
        trace = Trace()
        params = CapacitatedParams.practical(pc.graph.m, 0.1, n_iter=200, rho=3.0)
        out = quadratically_capacitated_flow(pc.graph, pc.P, pc.demands, 0.1, params, trace=trace)
        assert out.status == OK
        assert out.max_saturation <= 2.0
        res = incidence_transpose_apply(pc.graph, out.flow) - pc.demands
        assert np.abs(res).max() <= 1e-7 * np.abs(pc.demands).max()
        mus = [r["mu"] for r in trace.of("capacitated")]
        assert all(b >= a for a, b in zip(mus, mus[1:]))


def test_rejects_bad_eps():
    with pytest.raises(ValueError):
        quadratically_capacitated_flow(single_edge(), EnergyMatrices.identity(1, 1), np.array([-1.0, 1.0]), 0.7)
