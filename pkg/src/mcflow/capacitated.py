"""Multiplicative-weights routine that turns a minimum-energy flow oracle into a
flow of bounded per-edge saturation (or a certificate that none exists)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .coupled import SolveOptions, quadratically_coupled_flow
from .graphcore import Graph
from .kvec import EnergyMatrices, saturations
from .trace import Trace, emit

FAIL_SLACK = 1e-12

OK, FAIL, UNCONVERGED = "ok", "fail", "unconverged"


class WidthError(RuntimeError):
    """No oracle answer ever met the width bound, so there is nothing to average."""


@dataclass(frozen=True)
class CapacitatedParams:
    """Width ``rho``, iteration budget ``n_iter`` and stopping targets.

    ``stop_at`` ends the loop early once the running average has max saturation
    at most that value (``None`` runs all ``n_iter`` iterations).  ``accept_at``
    is the success threshold checked on the final average.
    """

    eps: float
    rho: float
    n_iter: int
    stop_at: float | None = None
    accept_at: float | None = None
    delta: float | None = None

    @staticmethod
    def paper_rho(m: int, eps: float) -> float:
        return 10.0 * m ** (1.0 / 3.0) * eps ** (-2.0 / 3.0)

    @staticmethod
    def paper_iterations(m: int, eps: float) -> float:
        return 20.0 * CapacitatedParams.paper_rho(m, eps) * math.log(m) / eps ** 2

    @classmethod
    def paper(cls, m: int, eps: float) -> "CapacitatedParams":
        """The exact constants, run to completion."""
        n = max(1, math.ceil(cls.paper_iterations(m, eps)))
        return cls(eps, cls.paper_rho(m, eps), n)

    @classmethod
    def practical(cls, m: int, eps: float, n_iter: int | None = None,
                  rho: float | None = None) -> "CapacitatedParams":
        """Theoretical constants with overrides and early stopping at ``1 + eps``."""
        base = cls.paper(m, eps)
        return replace(base, rho=rho or base.rho, n_iter=n_iter or base.n_iter, stop_at=1.0 + eps)

    @property
    def threshold(self) -> float:
        return self.accept_at if self.accept_at is not None else 1.0 + 10.0 * self.eps


@dataclass
class OracleAnswer:
    flow: np.ndarray
    energy: float
    extra: dict = field(default_factory=dict)


Oracle = Callable[[EnergyMatrices], OracleAnswer]


@dataclass
class MwuState:
    weights: np.ndarray
    total: np.ndarray  # running sum of accepted flows
    accepted: int = 0
    t: int = 0

    @property
    def mu(self) -> float:
        return float(self.weights.sum())

    @classmethod
    def start(cls, m: int, flow_shape: tuple[int, ...]) -> "MwuState":
        return cls(np.ones(m), np.zeros(flow_shape))


@dataclass
class CapacitatedOutcome:
    status: str
    flow: np.ndarray | None
    max_saturation: float
    iterations: int
    accepted: int
    extras: list[dict] = field(default_factory=list)  # extras of accepted oracle answers

    @property
    def failed(self) -> bool:
        return self.status == FAIL

    @property
    def ok(self) -> bool:
        return self.status == OK


def reweigh(P: EnergyMatrices, w: np.ndarray, mu: float, eps: float) -> EnergyMatrices:
    """Blocks ``(w(e) + eps mu / m) P(e)``."""
    return P.scaled(np.asarray(w, float) + eps * mu / P.m)


def update_weights(w: np.ndarray, sats: np.ndarray, eps: float, rho: float) -> np.ndarray:
    return np.asarray(w, float) * (1.0 + (eps / rho) * np.asarray(sats, float))


def mwu_saturation(P: EnergyMatrices, oracle: Oracle, params: CapacitatedParams,
                   flow_shape: tuple[int, ...], trace: Trace | None = None) -> CapacitatedOutcome:
    """The weights loop, parameterised by the oracle answering reweighed problems."""
    eps, rho = params.eps, params.rho
    st = MwuState.start(P.m, flow_shape)
    extras: list[dict] = []
    for t in range(1, params.n_iter + 1):
        st.t = t
        mu = st.mu
        Pt = reweigh(P, st.weights, mu, eps)
        ans = oracle(Pt)
        if ans.energy > mu * (1.0 + FAIL_SLACK):
            emit(trace, "capacitated", t=t, mu=mu, max_sat=None, accepted=False, energy=ans.energy)
            return CapacitatedOutcome(FAIL, None, math.inf, t, st.accepted, extras)
        sats = saturations(Pt, ans.flow)
        accepted = bool(np.max(sats, initial=0.0) <= rho)
        avg_sat = None
        if accepted:
            st.total += ans.flow
            st.accepted += 1
            extras.append(ans.extra)
            avg_sat = float(np.max(saturations(P, st.total / st.accepted), initial=0.0))
        new_w = update_weights(st.weights, sats, eps, rho)
        assert np.all(new_w >= st.weights), "weights must not decrease"
        st.weights = new_w
        emit(trace, "capacitated", t=t, mu=mu, max_sat=float(np.max(sats, initial=0.0)),
             accepted=accepted, avg_sat=avg_sat, energy=ans.energy)
        if params.stop_at is not None and avg_sat is not None and avg_sat <= params.stop_at:
            break
    if st.accepted == 0:
        raise WidthError("width never satisfied: no oracle flow had saturation <= rho")
    flow = st.total / st.accepted
    worst = float(np.max(saturations(P, flow), initial=0.0))
    status = OK if worst <= params.threshold else UNCONVERGED
    return CapacitatedOutcome(status, flow, worst, st.t, st.accepted, extras)


def coupled_oracle(g: Graph, d: np.ndarray, delta: float,
                   options: SolveOptions = SolveOptions()) -> Oracle:
    def answer(Pt: EnergyMatrices) -> OracleAnswer:
        res = quadratically_coupled_flow(g, Pt, d, delta, options=options)
        return OracleAnswer(res.flow, res.energy, {"iterations": res.report.iterations})
    return answer


def quadratically_capacitated_flow(g: Graph, P: EnergyMatrices, d: np.ndarray, eps: float,
                                   params: CapacitatedParams | None = None,
                                   options: SolveOptions = SolveOptions(),
                                   trace: Trace | None = None) -> CapacitatedOutcome:
    """Flow meeting ``d`` with every saturation near 1, or FAIL.

    FAIL certifies that no flow has all saturations at most ``1 - eps``.
    """
    if not 0 < eps <= 0.5:
        raise ValueError("eps must lie in (0, 0.5]")
    d = np.asarray(d, dtype=float).reshape(g.n, -1)
    params = params or CapacitatedParams.practical(g.m, eps)
    if not np.any(d):
        return CapacitatedOutcome(OK, np.zeros((g.m, d.shape[1])), 0.0, 0, 0)
    delta = params.delta if params.delta is not None else min(eps / g.m, 0.099)
    return mwu_saturation(P, coupled_oracle(g, d, delta, options), params, (g.m, d.shape[1]), trace)
