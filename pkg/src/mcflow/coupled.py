"""Near-optimal quadratically coupled flows: potentials from one block-Laplacian
solve, the ohmic flow they induce, and a spanning-tree repair that restores
exact conservation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graphcore import Graph, incidence_apply, incidence_transpose_apply
from .kvec import EnergyMatrices, energy
from .lapsolve import SOLVE_FLOOR, SolveReport, solve_coupled_system

DENSE_FALLBACK_MAX_N = 50


@dataclass
class CoupledResult:
    potentials: np.ndarray  # scaled so that the potential energy is 1
    flow: np.ndarray
    energy: float
    report: SolveReport
    scale: float  # sqrt(phi_hat^T L phi_hat) of the unscaled potentials
    ohmic: np.ndarray
    unscaled: np.ndarray


@dataclass(frozen=True)
class SolveOptions:
    """How the block-Laplacian systems are solved.

    ``solver``: ``"cheby"``, ``"cg"`` or ``"dense"`` (exact direct solve).
    ``inner``: Laplacian solver behind the preconditioner.
    ``paper_faithful``: use the unfloored solve tolerance
    ``delta / (5 m^6 k^2 U^4)``, switching to a dense solve when it underflows
    the floor on small graphs.
    """

    solver: str = "cheby"
    inner: str = "direct"
    paper_faithful: bool = False
    floor: float = SOLVE_FLOOR


def solve_tolerance(delta: float, m: int, k: int, U: float) -> float:
    return delta / (5.0 * m ** 6 * k ** 2 * U ** 4)


def quadratically_coupled_flow(g: Graph, P: EnergyMatrices, d: np.ndarray, delta: float,
                               U: float | None = None, kappa: float | None = None,
                               options: SolveOptions = SolveOptions()) -> CoupledResult:
    """Flow meeting demands ``d`` exactly with energy within ``1 + delta`` of optimal.

    ``U`` and ``kappa`` default to the values implied by ``P`` after rescaling so
    that the smallest block eigenvalue is 1.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    d = np.asarray(d, dtype=float).reshape(g.n, -1)
    if d.shape[1] != P.k:
        raise ValueError("demand and energy blocks disagree on k")
    ratio = float(np.max(P.lam_max) / np.min(P.lam_min))
    U = ratio if U is None else U
    cond = P.condition
    if kappa is None:
        kappa = cond
    elif cond > kappa * (1 + 1e-9):
        raise ValueError(f"energy blocks have condition {cond:.6g} > kappa={kappa:.6g}")
    if ratio > U * (1 + 1e-9):
        raise ValueError(f"normalised energy blocks exceed U={U:.6g}")

    solver = options.solver
    theta = solve_tolerance(delta, g.m, P.k, U)
    if not options.paper_faithful:
        theta = max(theta, options.floor)
    elif theta < options.floor:
        if g.n <= DENSE_FALLBACK_MAX_N:
            solver = "dense"
        else:
            theta = options.floor
    theta = min(theta, delta)

    phi_hat, report = solve_coupled_system(g, P, d, theta, solver=solver, inner=options.inner)
    grad = incidence_apply(g, phi_hat)
    ohmic = np.linalg.solve(P.blocks, grad[..., None])[..., 0]
    scale = math.sqrt(max(float(np.sum(grad * ohmic)), 0.0))
    phi = phi_hat / scale if scale > 0 else np.zeros_like(phi_hat)
    flow = make_kirchhoff(g, d, ohmic)
    return CoupledResult(phi, flow, energy(P, flow), report, scale, ohmic, phi_hat)


def make_kirchhoff(g: Graph, d: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Reroute the conservation error of ``f`` along a BFS spanning tree.

    Works on one commodity (``d`` length n, ``f`` length m) or on all of them at
    once (``(n, k)`` and ``(m, k)``).  The result satisfies ``Gamma^T f = d``.
    """
    d = np.asarray(d, dtype=float)
    f = np.array(f, dtype=float, copy=True)
    single = d.ndim == 1
    if single:
        d, f = d[:, None], f[:, None]
    if d.shape[0] != g.n or f.shape[0] != g.m or d.shape[1] != f.shape[1]:
        raise ValueError("demand/flow shapes do not match the graph")
    order, parent, pedge = g.spanning_tree
    sub = d - incidence_transpose_apply(g, f)
    for v in order[:0:-1]:
        sub[parent[v]] += sub[v]
    kids = order[1:]
    # sub[v] must enter v's subtree through its parent edge
    sign = np.where(g.heads[pedge[kids]] == kids, 1.0, -1.0)
    f[pedge[kids]] += sign[:, None] * sub[kids]
    return f[:, 0] if single else f
