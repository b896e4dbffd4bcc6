"""Shared builders for the test suite."""

import numpy as np

from mcflow.generate import random_instance, random_pd_blocks
from mcflow.graphcore import Commodity, CommoditySpec, Graph, Instance
from mcflow.kvec import EnergyMatrices

ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def path_graph(n: int, cap: float = 1.0) -> Graph:
    return Graph.from_edges(n, [(i, i + 1, cap) for i in range(n - 1)])


def triangle() -> Graph:
    return Graph.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)])


def single_edge(cap: float = 1.0) -> Graph:
    return Graph.from_edges(2, [(0, 1, cap)])


def instance(g: Graph, pairs: list[tuple[int, int, float]]) -> Instance:
    return Instance(g, CommoditySpec(tuple(Commodity(s, t, v) for s, t, v in pairs)))


def random_case(seed: int, n: int, m: int, k: int, kappa: float = 10.0):
    """Random instance plus random PD blocks of condition at most ``kappa``."""
    inst = random_instance(seed, n, m, k)
    rng = np.random.default_rng(seed + 1)
    P = EnergyMatrices(random_pd_blocks(rng, m, k, kappa) * rng.uniform(0.5, 2.0, size=m)[:, None, None])
    return inst, P


def random_sizes(rng: np.random.Generator, n_max: int, m_max: int, k_max: int) -> tuple[int, int, int]:
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(n - 1, min(m_max, n * (n - 1) // 2 + 2) + 1))
    k = int(rng.integers(1, k_max + 1))
    return n, m, k
