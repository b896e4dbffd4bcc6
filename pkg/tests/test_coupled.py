import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import path_graph, random_case, single_edge
from mcflow.coupled import SolveOptions, make_kirchhoff, quadratically_coupled_flow, solve_tolerance
from mcflow.graphcore import incidence_apply, incidence_transpose_apply
from mcflow.kvec import EnergyMatrices, energy_per_edge
from mcflow.lapsolve import CoupledOperator
from mcflow.refsolve import dense_coupled_oracle


def potential_energy(g, P, phi):
    grad = incidence_apply(g, phi)
    return float(np.einsum("ei,eij,ej->", grad, P.inverse_blocks(), grad))


def test_single_edge_unit_route():
    res = quadratically_coupled_flow(single_edge(), EnergyMatrices.identity(1, 1), np.array([-1.0, 1.0]), 1e-3)
    assert res.flow[0, 0] == pytest.approx(1.0)
    assert res.energy == pytest.approx(1.0)


def test_series_path_energy():
    res = quadratically_coupled_flow(path_graph(3), EnergyMatrices.identity(2, 1), np.array([-1.0, 0.0, 1.0]), 1e-3)
    assert res.energy == pytest.approx(2.0)


def test_kirchhoff_leaves_conserving_flow_alone():
    g = path_graph(3)
    f = np.array([1.0, 1.0])
    assert np.array_equal(make_kirchhoff(g, np.array([-1.0, 0.0, 1.0]), f), f)


def test_kirchhoff_leaf_to_root_on_tree():
    # route one unit from leaf 2 back to root 0 along edges 0->1, 1->2
    g = path_graph(3)
    out = make_kirchhoff(g, np.array([1.0, 0.0, -1.0]), np.zeros(2))
    assert out.tolist() == [-1.0, -1.0]


def test_kirchhoff_random_repair(rng):
    inst, _ = random_case(11, 9, 15, 2)
    g = inst.graph
    d = inst.demands
    f = rng.normal(size=(15, 2))
    gamma = np.max(np.abs(incidence_transpose_apply(g, f) - d))
    out = make_kirchhoff(g, d, f)
    assert np.max(np.abs(incidence_transpose_apply(g, out) - d)) <= 1e-10 * max(1.0, gamma)
    assert np.max(np.abs(out - f)) <= g.m * gamma


def test_rejects_understated_kappa():
    inst, P = random_case(3, 6, 8, 2, kappa=50)
    with pytest.raises(ValueError):
        quadratically_coupled_flow(inst.graph, P, inst.demands, 1e-3, kappa=1.0)


def test_solve_tolerance_formula():
    assert solve_tolerance(0.5, 2, 3, 2.0) == pytest.approx(0.5 / (5 * 64 * 9 * 16))


def test_paper_faithful_switches_to_dense():
    inst, P = random_case(4, 6, 9, 2)
    res = quadratically_coupled_flow(inst.graph, P, inst.demands, 1e-3,
                                     options=SolveOptions(paper_faithful=True))
    assert res.report.method == "dense"
    E, _ = dense_coupled_oracle(inst.graph, P.blocks, inst.demands)
    assert res.energy == pytest.approx(E, rel=1e-9)


cases = st.tuples(st.integers(0, 10_000), st.sampled_from([1e-1, 1e-3]), st.sampled_from(["cheby", "cg"]))


@given(cases)
def test_near_optimal_against_dense_oracle(case):
    seed, delta, solver = case
    r = np.random.default_rng(seed)
    n = int(r.integers(2, 9))
    m = int(r.integers(n - 1, 2 * n + 1))
    inst, P = random_case(seed, n, m, int(r.integers(1, 4)), kappa=100)
    g, d = inst.graph, inst.demands
    res = quadratically_coupled_flow(g, P, d, delta, options=SolveOptions(solver=solver))
    E, fstar = dense_coupled_oracle(g, P.blocks, d)
    assert E * (1 - 1e-9) <= res.energy <= (1 + delta) * E
    assert np.max(np.abs(incidence_transpose_apply(g, res.flow) - d)) <= 1e-8 * np.abs(d).max()
    assert potential_energy(g, P, res.potentials) <= 1 + 1e-9
    lam_hat = res.scale
    assert abs(res.energy - lam_hat ** 2) <= 3 * delta * lam_hat ** 2
    assert float(np.sum(d * res.potentials)) >= (1 - delta) * math.sqrt(E)
    dev = np.abs(energy_per_edge(P, res.flow) - energy_per_edge(P, fstar))
    assert dev.max() <= delta * E
    for _ in range(50):
        h = make_kirchhoff(g, d, fstar + r.normal(size=fstar.shape) * r.uniform(0.01, 2))
        assert float(np.einsum("ei,eij,ej->", h, P.blocks, h)) >= res.energy / (1 + delta)


def test_ohmic_potentials_match_pinv(rng):
    inst, P = random_case(21, 7, 11, 2)
    g, d = inst.graph, inst.demands
    res = quadratically_coupled_flow(g, P, d, 1e-6)
    L = CoupledOperator(g, P).dense()
    star = (np.linalg.pinv(L) @ d.ravel()).reshape(d.shape)
    assert np.allclose(res.unscaled - res.unscaled.mean(axis=0), star - star.mean(axis=0), atol=1e-5)
