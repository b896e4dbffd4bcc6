import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import instance, single_edge, triangle
from mcflow.concurrent_mmw import (ConcurrentConfig, MmwEdgeState, MmwParams, binary_search_lambda,
                                   bisect_scale, build_energy_from_W, exp_neg_scaled,
                                   max_concurrent_flow, mmw_step_matrix, mmw_update)
from mcflow.capacitated import FAIL, OK
from mcflow.graphcore import Graph, incidence_transpose_apply
from mcflow.kvec import EnergyMatrices, block_condition_bound, congestions, matrix_exp_sym
from mcflow.refsolve import lp_concurrent_oracle
from mcflow.trace import Trace

FAST = ConcurrentConfig(n_outer=30, n_inner=50, rho_inner=3.0)


class Stub:
    def __init__(self, status):
        self.status = status
        self.max_congestion = 1.0
        self.flow = np.zeros(1)

    @property
    def ok(self):
        return self.status == OK


def test_theoretical_constants():
    p = MmwParams.paper(4, 1.0)
    assert p.rho == pytest.approx(2.0)
    assert p.eps1 == pytest.approx(1 / 8)
    assert p.eps1p == pytest.approx(-math.log(1 - 1 / 8))
    assert p.n_iter == math.ceil(2.0 * p.eps1p ** -2 * math.log(4))


def test_rho_override_rederives_step():
    p = MmwParams.practical(3, 0.1, n_iter=5, rho=2.0)
    assert p.eps1 == pytest.approx(0.1 / 6)
    assert p.n_iter == 5 and p.stop_at == pytest.approx(1.3)


def test_build_energy_examples(rng):
    assert np.allclose(build_energy_from_W(np.eye(2), 1.0, 0.1), 1.1 * np.eye(2))
    for _ in range(20):
        A = rng.normal(size=(3, 3))
        W = A @ A.T + 1e-3 * np.eye(3)
        P = build_energy_from_W(W, 1.0, 0.1)
        assert block_condition_bound(EnergyMatrices(P[None])) <= 60.0
        assert np.trace(P) <= 6.0


def test_step_matrix_zero_flow_ties_to_first():
    M = mmw_step_matrix(np.eye(2), np.zeros(2), 1.0, 0.1, 2.0)
    assert np.allclose(M, (np.diag([1.2, 0.0]) + 2.0 * np.eye(2)) / 4.0)


@given(st.integers(0, 10_000), st.floats(0.01, 0.5), st.floats(0.0, 20.0))
def test_step_eigenvalues_in_unit_interval(seed, eps, slack):
    # the top eigenvalue (1 + 2 eps + rho) / (2 rho) needs rho >= 1 + 2 eps
    rho = 1 + 2 * eps + slack
    r = np.random.default_rng(seed)
    f = r.normal(size=3)
    f *= math.sqrt(rho) * r.uniform(0, 1) / np.abs(f).sum()
    A = r.normal(size=(3, 3))
    M = mmw_step_matrix(A @ A.T + np.eye(3), f, 1.0, eps, rho)
    lam = np.linalg.eigvalsh(M)
    assert lam.min() >= -1e-12 and lam.max() <= 1 + 1e-12


def test_scalar_recurrence():
    eps, rho, u = 0.1, 2.0, 1.5
    eps1p = -math.log1p(-eps / rho)
    S, W = np.zeros((1, 1)), np.eye(1)
    s = 0.0
    for f in (0.7, 1.1):
        S, W, _ = mmw_update(S, W, np.array([f]), u, eps, rho, eps1p)
        s += ((1 + 2 * eps) - f * f / u ** 2 + rho) / (2 * rho)
        assert S[0, 0] == pytest.approx(s)
        assert W[0, 0] == pytest.approx(math.exp(-eps1p * s))


def test_scaled_exponential_matches_direct(rng):
    A = rng.normal(size=(4, 3, 3))
    S = A @ np.swapaxes(A, 1, 2)
    W, top = exp_neg_scaled(S, 0.3)
    direct = matrix_exp_sym(-0.3 * S)
    assert np.allclose(W * np.exp(top)[:, None, None], direct, rtol=1e-10)
    assert np.allclose(np.linalg.eigvalsh(W).max(axis=1), 1.0)
    st_ = MmwEdgeState(S, W, top)
    assert np.allclose(st_.true_W(), direct, rtol=1e-10)


def test_single_edge_success_and_fail():
    inst = instance(single_edge(), [(0, 1, 1.0)])
    out = max_concurrent_flow(inst, 0.1, FAST, scale=0.8)
    assert out.ok and out.max_congestion <= 1.3
    assert out.flow[0, 0] == pytest.approx(0.8)
    assert max_concurrent_flow(inst, 0.1, FAST, scale=2.0).status == FAIL


def test_single_edge_at_capacity_is_certified_infeasible():
    # the first energy block is (1 + eps) / u^2, so the only flow has energy (1 + eps)^2 > mu
    out = max_concurrent_flow(instance(single_edge(), [(0, 1, 1.0)]), 0.1, FAST)
    assert out.status == FAIL


def test_success_output_contract():
    g = Graph.from_edges(4, [(0, 1, 2.0), (1, 2, 1.0), (2, 3, 2.0), (3, 0, 1.0), (0, 2, 1.5)])
    inst = instance(g, [(0, 2, 1.0), (1, 3, 0.5)])
    trace = Trace()
    out = max_concurrent_flow(inst, 0.1, FAST, trace=trace)
    assert out.ok
    assert np.all(congestions(out.flow, g.caps) <= 1.3 + 1e-12)
    assert np.abs(incidence_transpose_apply(g, out.flow) - inst.demands).max() <= 1e-7
    assert out.max_condition <= 2 * 2 / 0.1 + 1e-9
    assert all(r["condition"] <= 40 + 1e-9 for r in trace.of("mmw"))


def test_bisect_brackets_threshold():
    res = bisect_scale(lambda lam: Stub(OK if lam <= 3.0 else FAIL), 1.0, 100.0, 0.05)
    assert res.lam <= 3.0 and res.lam >= 3.0 / 1.05 ** 2


def test_bisect_walks_below_floor():
    res = bisect_scale(lambda lam: Stub(OK if lam <= 0.85 else FAIL), 1.0, 4.0, 0.1)
    assert res.found and res.lam == pytest.approx(0.8)


def test_bisect_reports_total_failure():
    res = bisect_scale(lambda lam: Stub(FAIL), 1.0, 4.0, 0.1)
    assert not res.found and res.lam == 0.0 and "failed" in res.diagnostic


def test_search_single_edge():
    res = binary_search_lambda(instance(single_edge(), [(0, 1, 1.0)]), 0.1, config=FAST)
    assert 0.8 <= res.lam <= 1.3


def test_search_triangle_opposing():
    inst = instance(triangle(), [(0, 1, 1.0), (1, 0, 1.0)])
    lam = lp_concurrent_oracle(inst)
    res = binary_search_lambda(inst, 0.1, config=FAST)
    assert (1 - 0.5) * lam <= res.lam <= (1 + 0.5) * lam


def test_search_k4_three_commodities():
    g = Graph.from_edges(4, [(a, b, 1.0) for a in range(4) for b in range(a + 1, 4)])
    inst = instance(g, [(0, 1, 1.0), (2, 3, 1.0), (0, 3, 1.0)])
    lam = lp_concurrent_oracle(inst)
    res = binary_search_lambda(inst, 0.1, config=FAST)
    assert (1 - 0.5) * lam <= res.lam <= (1 + 0.5) * lam


def test_unknown_outer():
    with pytest.raises(ValueError):
        binary_search_lambda(instance(single_edge(), [(0, 1, 1.0)]), 0.1, outer="other")
