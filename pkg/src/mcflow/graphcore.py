"""Graphs, commodity instances, the (edge, vertex) incidence operator and the
instance file format.

Layout conventions used throughout the package:

* a k-commodity flow is an ``(m, k)`` array; row ``e`` is the block ``f(e)``
  and column ``i`` is the single-commodity flow ``f_i``.  Its C-order
  ``ravel()`` is the edge-major length ``k*m`` vector.
* vertex quantities (demands, potentials) are ``(n, k)`` arrays, vertex-major
  in the same way.

Edges are undirected for capacity purposes; the stored ``tail -> head``
orientation only fixes the sign of flow values.
"""

from __future__ import annotations

import io
import math
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence, TextIO

import numpy as np
import scipy.sparse as sp


class ParseError(ValueError):
    """Malformed instance text; ``line`` is 1-based (0 when not line-specific)."""

    def __init__(self, line: int, message: str):
        self.line = line
        self.message = message
        where = f"line {line}: " if line else ""
        super().__init__(f"{where}{message}")


class MalformedLineError(ParseError):
    pass


class DuplicateHeaderError(ParseError):
    pass


class DisconnectedGraphError(ParseError):
    pass


class NonPositiveCapacityError(ParseError):
    pass


class CountMismatchError(ParseError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected capacitated multigraph with a fixed edge orientation."""

    n: int
    tails: np.ndarray
    heads: np.ndarray
    caps: np.ndarray

    def __post_init__(self):
        tails = np.asarray(self.tails, dtype=np.int64)
        heads = np.asarray(self.heads, dtype=np.int64)
        caps = np.asarray(self.caps, dtype=float)
        if not (tails.shape == heads.shape == caps.shape) or tails.ndim != 1:
            raise ValueError("tails, heads and caps must be equal-length 1-D sequences")
        if self.n < 1:
            raise ValueError("graph needs at least one vertex")
        if tails.size and (min(tails.min(), heads.min()) < 0 or max(tails.max(), heads.max()) >= self.n):
            raise ValueError("vertex id out of range")
        if np.any(tails == heads):
            raise ValueError("self-loops are not allowed")
        if np.any(~np.isfinite(caps)) or np.any(caps <= 0):
            raise ValueError("capacities must be positive and finite")
        for arr in (tails, heads, caps):
            arr.setflags(write=False)
        object.__setattr__(self, "tails", tails)
        object.__setattr__(self, "heads", heads)
        object.__setattr__(self, "caps", caps)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int, float]]) -> "Graph":
        edges = list(edges)
        if not edges:
            return cls(n, np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
        t, h, c = zip(*edges)
        return cls(n, np.array(t), np.array(h), np.array(c, dtype=float))

    @property
    def m(self) -> int:
        return int(self.tails.size)

    def edges(self) -> list[tuple[int, int, float]]:
        return [(int(t), int(h), float(c)) for t, h, c in zip(self.tails, self.heads, self.caps)]

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """Sparse ``m x n`` matrix with ``+1`` at the head and ``-1`` at the tail."""
        m = self.m
        rows = np.repeat(np.arange(m), 2)
        cols = np.column_stack([self.heads, self.tails]).ravel()
        vals = np.tile([1.0, -1.0], m)
        return sp.csr_matrix((vals, (rows, cols)), shape=(m, self.n))

    @cached_property
    def incidence_t(self) -> sp.csr_matrix:
        return self.incidence.T.tocsr()

    @cached_property
    def adjacency(self) -> list[list[tuple[int, int]]]:
        """``adjacency[u]`` lists ``(neighbour, edge id)`` sorted by neighbour then edge."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n)]
        for e, (t, h) in enumerate(zip(self.tails.tolist(), self.heads.tolist())):
            adj[t].append((h, e))
            adj[h].append((t, e))
        for lst in adj:
            lst.sort()
        return adj

    @cached_property
    def spanning_tree(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Breadth-first tree from vertex 0, lowest vertex id first.

        Returns ``(order, parent, parent_edge)``; ``order[0]`` is the root and
        ``parent[root] = parent_edge[root] = -1``.
        """
        parent = np.full(self.n, -1, dtype=np.int64)
        pedge = np.full(self.n, -1, dtype=np.int64)
        seen = np.zeros(self.n, dtype=bool)
        seen[0] = True
        order = [0]
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for w, e in self.adjacency[u]:
                if not seen[w]:
                    seen[w] = True
                    parent[w], pedge[w] = u, e
                    order.append(w)
                    queue.append(w)
        if len(order) != self.n:
            raise ValueError("graph is disconnected")
        return np.array(order, dtype=np.int64), parent, pedge

    def is_connected(self) -> bool:
        return len(_reachable(self, 0, None)) == self.n

    def laplacian(self, weights: np.ndarray) -> sp.csr_matrix:
        """Scalar weighted Laplacian ``B^T diag(w) B``."""
        B = self.incidence
        return (B.T @ sp.diags(np.asarray(weights, dtype=float)) @ B).tocsr()


@dataclass(frozen=True)
class Commodity:
    source: int
    sink: int
    value: float


@dataclass(frozen=True)
class CommoditySpec:
    pairs: tuple[Commodity, ...]

    def __post_init__(self):
        if len(self.pairs) < 1:
            raise ValueError("need at least one commodity")
        for c in self.pairs:
            if c.source == c.sink:
                raise ValueError(f"commodity source equals sink ({c.source})")
            if not (c.value > 0 and math.isfinite(c.value)):
                raise ValueError("commodity values must be positive")

    @property
    def k(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True, eq=False)
class Instance:
    graph: Graph
    commodities: CommoditySpec

    def __post_init__(self):
        for c in self.commodities.pairs:
            if not (0 <= c.source < self.graph.n and 0 <= c.sink < self.graph.n):
                raise ValueError("commodity endpoint out of range")

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def m(self) -> int:
        return self.graph.m

    @property
    def k(self) -> int:
        return self.commodities.k

    @property
    def values(self) -> np.ndarray:
        return np.array([c.value for c in self.commodities.pairs])

    @cached_property
    def demands(self) -> np.ndarray:
        """``(n, k)`` demand array, sink-positive: ``d_i(t_i) = +v_i``, ``d_i(s_i) = -v_i``."""
        d = demand_array(self.n, self.commodities.pairs)
        d.setflags(write=False)
        return d

    def unit_demands(self) -> np.ndarray:
        return demand_array(self.n, [Commodity(c.source, c.sink, 1.0) for c in self.commodities.pairs])


def demand_array(n: int, pairs: Sequence[Commodity]) -> np.ndarray:
    d = np.zeros((n, len(pairs)))
    for i, c in enumerate(pairs):
        d[c.sink, i] += c.value
        d[c.source, i] -= c.value
    return d


def incidence_apply(g: Graph, phi: np.ndarray) -> np.ndarray:
    """``(Gamma ⊗ I_k) phi``: per edge and commodity, ``phi_i(head) - phi_i(tail)``.

    Accepts an ``(n, k)`` array or a flat vertex-major vector whose length is a
    multiple of ``n``; the output has the matching ``(m, k)`` / flat shape.
    """
    x, flat = _as_blocks(phi, g.n, "potential")
    out = x[g.heads] - x[g.tails]
    return out.ravel() if flat else out


def incidence_transpose_apply(g: Graph, f: np.ndarray) -> np.ndarray:
    """``(Gamma ⊗ I_k)^T f``: net inflow per vertex and commodity."""
    x, flat = _as_blocks(f, g.m, "flow")
    out = g.incidence_t @ x
    return out.ravel() if flat else out


def _as_blocks(v: np.ndarray, rows: int, what: str) -> tuple[np.ndarray, bool]:
    v = np.asarray(v, dtype=float)
    if v.ndim == 2:
        if v.shape[0] != rows:
            raise ValueError(f"{what} has {v.shape[0]} rows, expected {rows}")
        return v, False
    if v.ndim != 1 or rows == 0 or v.size % rows or v.size == 0:
        raise ValueError(f"{what} length {v.size} is not a positive multiple of {rows}")
    return v.reshape(rows, -1), True


def _reachable(g: Graph, start: int, min_cap: float | None) -> set[int]:
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for w, e in g.adjacency[u]:
            if w not in seen and (min_cap is None or g.caps[e] >= min_cap):
                seen.add(w)
                queue.append(w)
    return seen


def max_bottleneck(g: Graph, s: int, t: int) -> float:
    """Largest ``c`` such that ``s`` and ``t`` are joined using edges of capacity >= c."""
    levels = np.unique(g.caps)
    if t not in _reachable(g, s, None):
        raise ValueError(f"no path between {s} and {t}")
    lo, hi = 0, len(levels) - 1  # levels[lo] always connects
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if t in _reachable(g, s, levels[mid]):
            lo = mid
        else:
            hi = mid - 1
    return float(levels[lo])


def bottleneck_bounds(inst: Instance) -> tuple[float, float]:
    """Bracket ``(lo, hi)`` around the max concurrent flow value.

    ``lo``: every commodity sends ``1/k`` of its bottleneck path capacity.
    ``hi``: no commodity can move more than the total capacity.
    """
    g, k = inst.graph, inst.k
    total = float(g.caps.sum())
    lo = min(max_bottleneck(g, c.source, c.sink) / (k * c.value) for c in inst.commodities.pairs)
    hi = min(total / c.value for c in inst.commodities.pairs)
    return lo, hi


# --------------------------------------------------------------------------
# instance files


def parse_instance(text: str | TextIO) -> Instance:
    """Parse the line format ``p mcf n m k`` / ``a tail head cap`` / ``d i s t v``.

    Vertex ids and commodity indices are 1-based in the file.
    """
    if not isinstance(text, str):
        text = text.read()
    header: tuple[int, int, int] | None = None
    header_line = 0
    arcs: list[tuple[int, int, float]] = []
    dems: dict[int, Commodity] = {}

    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kind = tok[0]
        if kind == "p":
            if header is not None:
                raise DuplicateHeaderError(lineno, f"duplicate header (first at line {header_line})")
            if len(tok) != 5 or tok[1] != "mcf":
                raise MalformedLineError(lineno, "header must read 'p mcf <n> <m> <k>'")
            n, m, k = (_int(t, lineno) for t in tok[2:])
            if n < 2 or m < 1 or k < 1:
                raise MalformedLineError(lineno, "header needs n >= 2, m >= 1, k >= 1")
            header, header_line = (n, m, k), lineno
            continue
        if header is None:
            raise MalformedLineError(lineno, "expected 'p mcf' header before data lines")
        n, m, k = header
        if kind == "a":
            if len(tok) != 4:
                raise MalformedLineError(lineno, "arc line must read 'a <tail> <head> <capacity>'")
            t, h = _vertex(tok[1], n, lineno), _vertex(tok[2], n, lineno)
            cap = _float(tok[3], lineno)
            if not cap > 0 or not math.isfinite(cap):
                raise NonPositiveCapacityError(lineno, f"capacity must be positive, got {tok[3]}")
            if t == h:
                raise MalformedLineError(lineno, "self-loop")
            arcs.append((t, h, cap))
        elif kind == "d":
            if len(tok) != 5:
                raise MalformedLineError(lineno, "demand line must read 'd <i> <source> <sink> <value>'")
            i = _int(tok[1], lineno)
            if not 1 <= i <= k:
                raise MalformedLineError(lineno, f"commodity index {i} outside [1, {k}]")
            if i in dems:
                raise MalformedLineError(lineno, f"commodity {i} defined twice")
            s, t = _vertex(tok[2], n, lineno), _vertex(tok[3], n, lineno)
            v = _float(tok[4], lineno)
            if s == t:
                raise MalformedLineError(lineno, "commodity source equals sink")
            if not v > 0 or not math.isfinite(v):
                raise MalformedLineError(lineno, "commodity value must be positive")
            dems[i] = Commodity(s, t, v)
        else:
            raise MalformedLineError(lineno, f"unknown line type {kind!r}")

    if header is None:
        raise MalformedLineError(0, "missing 'p mcf' header")
    n, m, k = header
    if len(arcs) != m:
        raise CountMismatchError(0, f"edge count mismatch: header says {m}, found {len(arcs)}")
    if len(dems) != k:
        raise CountMismatchError(0, f"commodity count mismatch: header says {k}, found {len(dems)}")
    g = Graph.from_edges(n, arcs)
    if not g.is_connected():
        raise DisconnectedGraphError(header_line, "graph is disconnected")
    return Instance(g, CommoditySpec(tuple(dems[i] for i in range(1, k + 1))))


def format_instance(inst: Instance, comment: str | None = None) -> str:
    lines = []
    if comment:
        lines.extend(f"# {c}" for c in comment.splitlines())
    lines.append(f"p mcf {inst.n} {inst.m} {inst.k}")
    for t, h, c in inst.graph.edges():
        lines.append(f"a {t + 1} {h + 1} {c:.12g}")
    for i, c in enumerate(inst.commodities.pairs, start=1):
        lines.append(f"d {i} {c.source + 1} {c.sink + 1} {c.value:.12g}")
    return "\n".join(lines) + "\n"


def read_instance(path) -> Instance:
    with open(path) as fh:
        return parse_instance(fh)


def _int(tok: str, lineno: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise MalformedLineError(lineno, f"expected integer, got {tok!r}") from None


def _float(tok: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise MalformedLineError(lineno, f"expected number, got {tok!r}") from None


def _vertex(tok: str, n: int, lineno: int) -> int:
    v = _int(tok, lineno)
    if not 1 <= v <= n:
        raise MalformedLineError(lineno, f"vertex {v} outside [1, {n}]")
    return v - 1
