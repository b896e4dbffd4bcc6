"""Maximum weighted multicommodity flow: the coupled subproblem with free flow
values summing to one, driven by the same two iterative layers as the
concurrent solver and a binary search on the objective."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .capacitated import CapacitatedOutcome, OracleAnswer, mwu_saturation
from .concurrent_mmw import ConcurrentConfig, ConcurrentOutcome, bisect_scale, mmw_loop
from .coupled import SolveOptions, make_kirchhoff
from .graphcore import Graph, Instance, incidence_apply, max_bottleneck
from .kvec import EnergyMatrices, energy
from .lapsolve import solve_coupled_system
from .trace import Trace

PINV_CUTOFF = 1e-12


@dataclass(frozen=True, eq=False)
class WeightedSpec:
    instance: Instance
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, float)
        if w.shape != (self.instance.k,):
            raise ValueError(f"expected {self.instance.k} weights, got shape {w.shape}")
        if np.any(w < 0) or not np.any(w > 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be nonnegative, finite, and not all zero")
        object.__setattr__(self, "weights", w)


@dataclass
class WeightedCoupled:
    potentials: np.ndarray
    flow: np.ndarray
    values: np.ndarray  # F, one per demand column, summing to 1
    opt_energy: float  # 1 / (1^T M^+ 1)
    gram: np.ndarray  # M = D^T L^+ D


def _pinv_small(M: np.ndarray) -> np.ndarray:
    lam, Q = np.linalg.eigh(0.5 * (M + M.T))
    top = float(lam.max(initial=0.0))
    inv = np.where(lam > PINV_CUTOFF * top, 1.0 / np.where(lam > 0, lam, 1.0), 0.0) if top > 0 else 0 * lam
    return (Q * inv) @ Q.T


def weighted_coupled_flow(g: Graph, P: EnergyMatrices, D: np.ndarray, delta: float = 1e-6,
                          options: SolveOptions = SolveOptions()) -> WeightedCoupled:
    """Minimum-energy flow meeting ``D F`` over all ``F`` with ``1^T F = 1``.

    ``D`` holds one ``(n, k)`` demand array per column: shape ``(c, n, k)``.
    """
    D = np.asarray(D, float)
    if D.ndim != 3 or D.shape[1:] != (g.n, P.k):
        raise ValueError(f"demand columns must have shape (c, {g.n}, {P.k})")
    theta = max(min(delta, 0.099), options.floor)
    X = np.stack([solve_coupled_system(g, P, Dj, theta, solver=options.solver, inner=options.inner)[0]
                  for Dj in D])
    M = np.einsum("anj,bnj->ab", D, X)
    Mp = _pinv_small(M)
    s = float(Mp.sum())
    if not s > 0:
        raise ValueError("demand Gram matrix has no usable range")
    lam = 1.0 / s
    F = lam * Mp.sum(axis=1)
    phi = np.einsum("a,anj->nj", F, X)
    grad = incidence_apply(g, phi)
    f = np.linalg.solve(P.blocks, grad[..., None])[..., 0]
    target = np.einsum("a,anj->nj", F, D)
    f = make_kirchhoff(g, target, f)
    return WeightedCoupled(phi, f, F, lam, M)


def weighted_oracle(g: Graph, D: np.ndarray, delta: float, options: SolveOptions):
    def answer(Pt: EnergyMatrices) -> OracleAnswer:
        res = weighted_coupled_flow(g, Pt, D, delta, options)
        return OracleAnswer(res.flow, energy(Pt, res.flow), {"F": res.values})
    return answer


def _demand_columns(spec: WeightedSpec, total: float) -> tuple[np.ndarray, np.ndarray]:
    """Columns ``total * d_i / w_i`` for the commodities with positive weight."""
    inst = spec.instance
    active = np.flatnonzero(spec.weights > 0)
    D = np.zeros((active.size, inst.n, inst.k))
    for a, i in enumerate(active):
        D[a, :, i] = total * inst.demands[:, i] / spec.weights[i]
    return D, active


def objective_bounds(spec: WeightedSpec) -> tuple[float, float]:
    """``lo``: one commodity alone on its bottleneck path.  ``hi``: every unit uses an edge."""
    inst = spec.instance
    g = inst.graph
    lo, ratio = 0.0, 0.0
    for c, w in zip(inst.commodities.pairs, spec.weights):
        if w > 0:
            lo = max(lo, w * max_bottleneck(g, c.source, c.sink) / c.value)
            ratio = max(ratio, w / c.value)
    return lo, ratio * float(g.caps.sum())


@dataclass
class WeightedResult:
    objective: float
    flow: np.ndarray | None
    values: np.ndarray | None  # shipped multiples F_i of each commodity's demand
    total: float  # objective normalisation of the accepted probe
    outcome: ConcurrentOutcome | None
    probes: list = field(default_factory=list)
    diagnostic: str = ""

    @property
    def found(self) -> bool:
        return self.flow is not None


def _solve_at(spec: WeightedSpec, eps: float, config: ConcurrentConfig, total: float,
              trace: Trace | None) -> ConcurrentOutcome:
    inst = spec.instance
    g = inst.graph
    D, active = _demand_columns(spec, total)
    oracle = weighted_oracle(g, D, min(eps / g.m, 0.099), config.solve)
    inner_params = config.inner_params(g.m, eps)

    def inner(P: EnergyMatrices) -> CapacitatedOutcome:
        return mwu_saturation(P, oracle, inner_params, (g.m, inst.k))

    out = mmw_loop(g.caps, inst.k, inner, config.outer_params(inst.k, eps), trace)
    if out.flow is not None:
        per_outer = [np.mean([x["F"] for x in ex], axis=0) for ex in out.extras]
        G = np.mean(per_outer, axis=0)
        F = np.zeros(inst.k)
        F[active] = total * G / spec.weights[active]
        out.extras = [F]
    return out


def _normalise_signs(flow: np.ndarray, F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Negate commodities shipped backwards; the objective can only go up."""
    sgn = np.where(F < 0, -1.0, 1.0)
    return flow * sgn, F * sgn


def max_weighted_flow(spec: WeightedSpec, eps: float, config: ConcurrentConfig = ConcurrentConfig(),
                      trace: Trace | None = None) -> WeightedResult:
    """Flow with L1 congestion at most ``1 + 3 eps`` and near-maximal ``sum_i w_i F_i``."""
    if not 0 < eps <= 0.5:
        raise ValueError("eps must lie in (0, 0.5]")
    lo, hi = objective_bounds(spec)
    search = bisect_scale(lambda T: _solve_at(spec, eps, config, T, trace), lo, hi, eps, trace)
    if not search.found:
        return WeightedResult(0.0, None, None, 0.0, None, search.probes, search.diagnostic)
    flow, F = _normalise_signs(search.flow, search.outcome.extras[0])
    obj = float(spec.weights @ F)
    return WeightedResult(obj, flow, F, search.lam, search.outcome, search.probes)
