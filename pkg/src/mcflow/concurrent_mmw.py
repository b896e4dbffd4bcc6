"""Maximum concurrent flow by matrix multiplicative weights over per-edge energy
matrices, with the capacitated MWU routine as the inner oracle, plus the
binary search over the concurrent flow value."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .capacitated import (FAIL, OK, UNCONVERGED, CapacitatedOutcome, CapacitatedParams,
                          quadratically_capacitated_flow)
from .coupled import SolveOptions
from .graphcore import Instance, bottleneck_bounds
from .kvec import EnergyMatrices, _symmetrized, block_condition_bound, congestions
from .trace import Trace, emit


@dataclass(frozen=True)
class MmwParams:
    eps: float
    rho: float
    eps1: float
    eps1p: float
    n_iter: int
    stop_at: float | None = None

    @staticmethod
    def paper_iterations(k: int, eps: float) -> float:
        """``rho eps1'^-2 log k`` without rounding (zero at k = 1)."""
        p = MmwParams.paper(k, eps)
        return p.rho * p.eps1p ** -2 * math.log(k)

    @classmethod
    def paper(cls, k: int, eps: float) -> "MmwParams":
        rho = math.sqrt(k / eps)
        eps1 = eps / (k * rho)
        eps1p = -math.log1p(-eps1)
        n = max(1, math.ceil(rho * eps1p ** -2 * math.log(max(k, 2))))
        return cls(eps, rho, eps1, eps1p, n)

    @classmethod
    def practical(cls, k: int, eps: float, n_iter: int | None = None,
                  rho: float | None = None) -> "MmwParams":
        """Theoretical constants with overrides and early stopping at congestion ``1 + 3 eps``.

        Overriding ``rho`` rederives ``eps1`` and ``eps1'`` from it.
        """
        p = cls.paper(k, eps)
        if rho is not None:
            eps1 = eps / (k * rho)
            p = replace(p, rho=rho, eps1=eps1, eps1p=-math.log1p(-eps1))
        return replace(p, n_iter=n_iter or p.n_iter, stop_at=1.0 + 3.0 * eps)

    @property
    def threshold(self) -> float:
        return 1.0 + 3.0 * self.eps


@dataclass
class MmwEdgeState:
    """Per-edge accumulators ``S(e)`` and ``W(e) = exp(-eps1' S(e))``.

    ``W`` is kept rescaled so its largest eigenvalue is 1; the true matrix is
    ``W * exp(log_scale)``.  Everything downstream only uses ``W`` up to scale.
    """

    S: np.ndarray
    W: np.ndarray
    log_scale: np.ndarray

    @classmethod
    def start(cls, m: int, k: int) -> "MmwEdgeState":
        return cls(np.zeros((m, k, k)), np.broadcast_to(np.eye(k), (m, k, k)).copy(), np.zeros(m))

    def true_W(self) -> np.ndarray:
        return self.W * np.exp(self.log_scale)[:, None, None]


def exp_neg_scaled(S: np.ndarray, eps1p: float) -> tuple[np.ndarray, np.ndarray]:
    """``exp(-eps1' S)`` split into a unit-top-eigenvalue matrix and its log scale."""
    lam, Q = np.linalg.eigh(_symmetrized(S))
    expo = -eps1p * lam
    top = expo.max(axis=-1)
    W = (Q * np.exp(expo - top[..., None])[..., None, :]) @ np.swapaxes(Q, -1, -2)
    return 0.5 * (W + np.swapaxes(W, -1, -2)), top


def build_energy_from_W(W: np.ndarray, u, eps: float) -> np.ndarray:
    """``(1/u^2) (W / max_i W_ii + eps I)`` for one block or a stack of them."""
    W = np.asarray(W, float)
    u = np.asarray(u, float)
    k = W.shape[-1]
    top = np.max(np.diagonal(W, axis1=-2, axis2=-1), axis=-1)
    P = W / top[..., None, None] + eps * np.eye(k)
    return P / (u ** 2)[..., None, None]


def mmw_step_matrix(W: np.ndarray, f: np.ndarray, u, eps: float, rho: float) -> np.ndarray:
    """``(1/2rho)((1+2eps) E_ii - f f^T / u^2 + rho I)`` with ``i`` the heaviest diagonal of ``W``.

    ``np.argmax`` returns the first maximiser, so ties go to the lowest index.
    """
    W = np.asarray(W, float)
    f = np.asarray(f, float)
    u = np.asarray(u, float)
    k = W.shape[-1]
    i = np.argmax(np.diagonal(W, axis1=-2, axis2=-1), axis=-1)
    M = rho * np.eye(k) - np.einsum("...i,...j->...ij", f, f) / (u ** 2)[..., None, None]
    E = np.zeros_like(M)
    if E.ndim == 2:
        E[i, i] = 1.0 + 2.0 * eps
    else:
        E[np.arange(E.shape[0]), i, i] = 1.0 + 2.0 * eps
    return (M + E) / (2.0 * rho)


def mmw_update(S: np.ndarray, W: np.ndarray, f: np.ndarray, u, eps: float, rho: float,
               eps1p: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One Update call: returns ``(S', W', eigenvalues of M)`` with ``W' = exp(-eps1' S')`` exactly."""
    M = mmw_step_matrix(W, f, u, eps, rho)
    S_new = np.asarray(S, float) + M
    W_unit, top = exp_neg_scaled(S_new, eps1p)
    W_new = W_unit * np.exp(top)[..., None, None]
    return S_new, W_new, np.linalg.eigvalsh(M)


@dataclass
class ConcurrentOutcome:
    status: str
    flow: np.ndarray | None
    max_congestion: float
    iterations: int
    max_condition: float = 1.0
    width_breaches: int = 0
    inner_iterations: int = 0
    extras: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == OK

    @property
    def failed(self) -> bool:
        return self.status == FAIL


InnerSolver = Callable[[EnergyMatrices], CapacitatedOutcome]


def mmw_loop(caps: np.ndarray, k: int, inner: InnerSolver, params: MmwParams,
             trace: Trace | None = None, flow_of: Callable[[CapacitatedOutcome], np.ndarray] | None = None
             ) -> ConcurrentOutcome:
    """Outer MMW iterations over energy matrices built from ``W``; averages the inner flows."""
    caps = np.asarray(caps, float)
    m = caps.size
    eps, rho = params.eps, params.rho
    state = MmwEdgeState.start(m, k)
    total = None
    worst_cond, breaches, inner_its = 1.0, 0, 0
    extras = []
    cong = math.inf
    t = 0
    for t in range(1, params.n_iter + 1):
        P = EnergyMatrices(build_energy_from_W(state.W, caps, eps))
        cond = block_condition_bound(P)
        worst_cond = max(worst_cond, cond)
        out = inner(P)
        inner_its += out.iterations
        if out.failed:
            emit(trace, "mmw", t=t, congestion=None, condition=cond, width_ok=None, inner=out.status)
            return ConcurrentOutcome(FAIL, None, math.inf, t, worst_cond, breaches, inner_its, extras)
        f = out.flow if flow_of is None else flow_of(out)
        extras.append(out.extras)
        total = f.copy() if total is None else total + f
        width = np.sum(out.flow ** 2, axis=1) / caps ** 2
        width_ok = bool(np.all(width <= rho * (1 + 1e-12)))
        breaches += not width_ok
        state.S = state.S + mmw_step_matrix(state.W, out.flow, caps, eps, rho)
        state.W, state.log_scale = exp_neg_scaled(state.S, params.eps1p)
        cong = float(np.max(congestions(total / t, caps), initial=0.0))
        emit(trace, "mmw", t=t, congestion=cong, condition=cond, width_ok=width_ok, inner=out.status)
        if params.stop_at is not None and cong <= params.stop_at:
            break
    status = OK if cong <= params.threshold else UNCONVERGED
    return ConcurrentOutcome(status, total / t, cong, t, worst_cond, breaches, inner_its, extras)


@dataclass(frozen=True)
class ConcurrentConfig:
    """Iteration overrides for both layers; ``None`` keeps the theoretical value."""

    n_outer: int | None = None
    rho_outer: float | None = None
    n_inner: int | None = None
    rho_inner: float | None = None
    paper_faithful: bool = False
    solve: SolveOptions = SolveOptions()

    def outer_params(self, k: int, eps: float) -> MmwParams:
        if self.paper_faithful:
            return MmwParams.paper(k, eps)
        return MmwParams.practical(k, eps, self.n_outer, self.rho_outer)

    def inner_params(self, m: int, eps: float) -> CapacitatedParams:
        if self.paper_faithful:
            return CapacitatedParams.paper(m, eps)
        return CapacitatedParams.practical(m, eps, self.n_inner, self.rho_inner)


def max_concurrent_flow(inst: Instance, eps: float, config: ConcurrentConfig = ConcurrentConfig(),
                        scale: float = 1.0, trace: Trace | None = None) -> ConcurrentOutcome:
    """Route ``scale`` times every demand with L1 congestion at most ``1 + 3 eps``, or FAIL."""
    if not 0 < eps <= 0.5:
        raise ValueError("eps must lie in (0, 0.5]")
    g = inst.graph
    d = scale * inst.demands
    inner_params = config.inner_params(g.m, eps)

    def inner(P: EnergyMatrices) -> CapacitatedOutcome:
        return quadratically_capacitated_flow(g, P, d, eps, inner_params, config.solve)

    return mmw_loop(g.caps, inst.k, inner, config.outer_params(inst.k, eps), trace)


@dataclass
class SearchResult:
    lam: float
    flow: np.ndarray | None
    outcome: ConcurrentOutcome | None
    probes: list[tuple[float, str]]
    bracket: tuple[float, float]
    diagnostic: str = ""

    @property
    def found(self) -> bool:
        return self.flow is not None


def probe_cap(lo: float, hi: float, eps: float) -> int:
    return max(1, math.ceil(math.log2(hi / lo / eps)))


def bisect_scale(probe: Callable[[float], ConcurrentOutcome], lo: float, hi: float,
                 eps: float, trace: Trace | None = None) -> SearchResult:
    """Log-space bisection for the largest scale whose probe succeeds."""
    probes: list[tuple[float, str]] = []
    best: tuple[float, ConcurrentOutcome] | None = None

    def run(lam: float) -> bool:
        out = probe(lam)
        probes.append((lam, out.status))
        emit(trace, "search", lam=lam, status=out.status, congestion=out.max_congestion)
        nonlocal best
        if out.ok and (best is None or lam > best[0]):
            best = (lam, out)
        return out.ok

    a, b = lo, hi
    if run(hi):
        a = hi
    else:
        for _ in range(probe_cap(lo, hi, eps)):
            if b / a <= 1.0 + eps:
                break
            mid = math.sqrt(a * b)
            if run(mid):
                a = mid
            else:
                b = mid
        if best is None:
            # the bracket floor itself was never tested; walk below it
            lam = lo
            for _ in range(3):
                if run(lam):
                    break
                lam *= 1.0 - 2.0 * eps
    if best is None:
        return SearchResult(0.0, None, None, probes, (lo, hi), "all probes failed")
    lam, out = best
    return SearchResult(lam, out.flow, out, probes, (lo, hi))


def binary_search_lambda(inst: Instance, eps: float, outer: str = "mmw",
                         config: ConcurrentConfig = ConcurrentConfig(),
                         trace: Trace | None = None) -> SearchResult:
    """Largest tested ``lambda`` for which the chosen outer solver routes ``lambda d``."""
    if outer == "mmw":
        solve = max_concurrent_flow
    elif outer == "signs":
        from .signs import max_concurrent_flow_signs as solve
    else:
        raise ValueError(f"unknown outer variant {outer!r}")
    lo, hi = bottleneck_bounds(inst)
    return bisect_scale(lambda lam: solve(inst, eps, config, scale=lam, trace=trace), lo, hi, eps, trace)
