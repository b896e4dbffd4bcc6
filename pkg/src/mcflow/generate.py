"""Seeded random instances, including ones with a planted low-congestion flow."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .graphcore import Commodity, CommoditySpec, Graph, Instance, format_instance
from .kvec import EnergyMatrices, saturations

PROFILES = ("random", "planted")


def _random_edges(rng: np.random.Generator, n: int, m: int) -> list[tuple[int, int]]:
    perm = rng.permutation(n)
    pairs = []
    for i in range(1, n):
        a, b = int(perm[i]), int(perm[rng.integers(i)])
        pairs.append((a, b) if rng.random() < 0.5 else (b, a))
    seen = {frozenset(p) for p in pairs}
    free = [(a, b) for a in range(n) for b in range(a + 1, n) if frozenset((a, b)) not in seen]
    rng.shuffle(free)
    extra = m - (n - 1)
    for j in range(extra):
        if j < len(free):
            a, b = free[j]
        else:  # complete graph exhausted: parallel edges
            a, b = (int(x) for x in rng.choice(n, size=2, replace=False))
        pairs.append((a, b) if rng.random() < 0.5 else (b, a))
    return pairs


def _random_path(rng: np.random.Generator, n: int, pairs: list[tuple[int, int]], s: int, t: int):
    """Edges ``(index, direction)`` of a BFS path from ``s`` to ``t`` over shuffled adjacency."""
    adj: list[list[tuple[int, int, int]]] = [[] for _ in range(n)]
    for e, (a, b) in enumerate(pairs):
        adj[a].append((b, e, 1))
        adj[b].append((a, e, -1))
    for nbrs in adj:
        rng.shuffle(nbrs)
    prev: dict[int, tuple[int, int, int]] = {s: (-1, -1, 0)}
    queue = deque([s])
    while queue:
        v = queue.popleft()
        for w, e, sgn in adj[v]:
            if w not in prev:
                prev[w] = (v, e, sgn)
                queue.append(w)
    path = []
    v = t
    while v != s:
        p, e, sgn = prev[v]
        path.append((e, sgn))
        v = p
    return path[::-1]


def _endpoints(rng: np.random.Generator, n: int, k: int) -> list[tuple[int, int]]:
    out = []
    for _ in range(k):
        s, t = (int(x) for x in rng.choice(n, size=2, replace=False))
        out.append((s, t))
    return out


def _round_up(x: float, digits: int = 6) -> float:
    q = 10.0 ** digits
    return math.ceil(x * q) / q


def random_instance(seed: int, n: int, m: int, k: int, profile: str = "random",
                    eps: float = 0.1) -> Instance:
    """Connected instance from a random spanning tree plus extra edges.

    ``planted`` routes each commodity along a random path first and sets every
    loaded capacity to ``load / (1 - 2 eps)``, so a flow of congestion at most
    ``1 - 2 eps`` exists by construction.
    """
    if n < 2 or m < n - 1 or k < 1:
        raise ValueError("need n >= 2, m >= n - 1 and k >= 1")
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}")
    rng = np.random.default_rng(seed)
    pairs = _random_edges(rng, n, m)
    ends = _endpoints(rng, n, k)
    values = np.round(rng.uniform(1.0, 5.0, size=k), 3)
    caps = np.round(rng.uniform(1.0, 10.0, size=m), 3)
    if profile == "planted":
        load = np.zeros(m)
        for (s, t), v in zip(ends, values):
            for e, _ in _random_path(rng, n, pairs, s, t):
                load[e] += v
        used = load > 0
        caps[used] = [_round_up(x / (1.0 - 2.0 * eps)) for x in load[used]]
    g = Graph.from_edges(n, [(a, b, float(c)) for (a, b), c in zip(pairs, caps)])
    spec = CommoditySpec(tuple(Commodity(s, t, float(v)) for (s, t), v in zip(ends, values)))
    return Instance(g, spec)


def gen_instance(seed: int, n: int, m: int, k: int, profile: str = "random", eps: float = 0.1) -> str:
    inst = random_instance(seed, n, m, k, profile, eps)
    return format_instance(inst, f"seed={seed} n={n} m={m} k={k} profile={profile}")


def random_pd_blocks(rng: np.random.Generator, m: int, k: int, kappa: float) -> np.ndarray:
    """Blocks ``Q diag(lam) Q^T`` with eigenvalues log-uniform in ``[1, kappa]``, both ends hit."""
    out = np.empty((m, k, k))
    for e in range(m):
        Q, _ = np.linalg.qr(rng.normal(size=(k, k)))
        lam = np.exp(rng.uniform(0.0, math.log(kappa), size=k))
        lam[0] = 1.0
        if k > 1:
            lam[-1] = kappa
        out[e] = (Q * lam) @ Q.T
    return 0.5 * (out + np.swapaxes(out, 1, 2))


@dataclass
class PlantedCapacitated:
    graph: Graph
    P: EnergyMatrices
    demands: np.ndarray
    planted: np.ndarray
    planted_saturation: float


def planted_capacitated(seed: int, n: int, m: int, k: int, eps: float = 0.1,
                        kappa: float = 10.0) -> PlantedCapacitated:
    """Energy blocks under which a known flow meeting the demands has saturation exactly
    ``1 - 2 eps`` on every edge it uses.

    Blocks on unused edges get the median scale of the used ones.  Because the
    planted flow is tight everywhere, the minimum-energy flow usually overloads
    some edge and the weights have real work to do.
    """
    inst = random_instance(seed, n, m, k)
    rng = np.random.default_rng(seed + 7919)
    g = inst.graph
    pairs = [(t, h) for t, h, _ in g.edges()]
    f = np.zeros((g.m, k))
    for i, c in enumerate(inst.commodities.pairs):
        for e, sgn in _random_path(rng, g.n, pairs, c.source, c.sink):
            f[e, i] += sgn * c.value
    base = EnergyMatrices(random_pd_blocks(rng, g.m, k, kappa))
    raw = saturations(base, f) ** 2
    used = raw > 0
    target = 1.0 - 2.0 * eps
    scale = np.empty(g.m)
    scale[used] = target ** 2 / raw[used]
    scale[~used] = np.median(scale[used])
    P = base.scaled(scale)
    return PlantedCapacitated(g, P, np.array(inst.demands), f, float(np.max(saturations(P, f))))
