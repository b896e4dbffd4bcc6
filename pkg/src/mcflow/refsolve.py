"""Independent reference oracles for small instances.

Nothing here calls into the iterative solver stack: matrices are assembled
densely from the raw edge list and the linear programs go through a small
two-phase simplex written for this module.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .graphcore import Graph, Instance

DENSE_BUDGET = 200  # n * k for the dense coupled oracle
LP_BUDGET = 200  # m * k for the LP oracles
SIMPLEX_TOL = 1e-9
PINV_CUTOFF = 1e-10


class BudgetError(ValueError):
    pass


class InfeasibleError(ValueError):
    pass


class UnboundedError(ValueError):
    pass


# --------------------------------------------------------------------------
# dense electrical oracle


def dense_incidence(g: Graph, k: int) -> np.ndarray:
    """Assembled ``(Gamma ⊗ I_k)`` of shape ``(m k, n k)``."""
    G = np.zeros((g.m * k, g.n * k))
    for e, (t, h, _) in enumerate(g.edges()):
        for i in range(k):
            G[e * k + i, h * k + i] = 1.0
            G[e * k + i, t * k + i] = -1.0
    return G


def pinv_sym(A: np.ndarray, cutoff: float = PINV_CUTOFF) -> np.ndarray:
    """Pseudo-inverse of a symmetric PSD matrix, dropping eigenvalues below ``cutoff * lambda_max``."""
    lam, Q = np.linalg.eigh(0.5 * (A + A.T))
    top = lam.max() if lam.size else 0.0
    keep = lam > cutoff * top if top > 0 else np.zeros_like(lam, dtype=bool)
    inv = np.zeros_like(lam)
    inv[keep] = 1.0 / lam[keep]
    return (Q * inv) @ Q.T


@dataclass
class DenseSystem:
    G: np.ndarray
    Pinv: np.ndarray
    L: np.ndarray

    @classmethod
    def build(cls, g: Graph, blocks: np.ndarray) -> "DenseSystem":
        blocks = np.asarray(blocks, float)
        k = blocks.shape[1]
        if g.n * k > DENSE_BUDGET:
            raise BudgetError(f"n*k = {g.n * k} exceeds dense budget {DENSE_BUDGET}")
        G = dense_incidence(g, k)
        Pinv = np.zeros((g.m * k, g.m * k))
        for e in range(g.m):
            Pinv[e * k:(e + 1) * k, e * k:(e + 1) * k] = np.linalg.inv(blocks[e])
        return cls(G, Pinv, G.T @ Pinv @ G)


def dense_coupled_oracle(g: Graph, blocks: np.ndarray, d: np.ndarray) -> tuple[float, np.ndarray]:
    """Minimum energy ``d^T L^+ d`` and the flow attaining it, as ``(m, k)``."""
    blocks = np.asarray(getattr(blocks, "blocks", blocks), float)
    k = blocks.shape[1]
    sysm = DenseSystem.build(g, blocks)
    dv = np.asarray(d, float).reshape(-1)
    phi = pinv_sym(sysm.L) @ dv
    f = sysm.Pinv @ sysm.G @ phi
    return float(dv @ phi), f.reshape(g.m, k)


# --------------------------------------------------------------------------
# simplex


def _pivot(T: np.ndarray, r: int, c: int) -> None:
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _iterate(T: np.ndarray, basis: list[int], ncols: int, tol: float, max_pivots: int) -> None:
    """Bland's rule pivots on columns ``< ncols`` until the objective row is optimal."""
    rows = T.shape[0] - 1
    for _ in range(max_pivots):
        obj = T[-1, :ncols]
        entering = np.flatnonzero(obj < -tol)
        if entering.size == 0:
            return
        c = int(entering[0])
        col = T[:rows, c]
        cand = np.flatnonzero(col > tol)
        if cand.size == 0:
            raise UnboundedError("linear program is unbounded")
        ratios = T[cand, -1] / col[cand]
        best = ratios.min()
        ties = cand[ratios <= best + tol * max(1.0, abs(best))]
        r = int(min(ties, key=lambda i: basis[i]))
        _pivot(T, r, c)
        basis[r] = c
    raise RuntimeError("simplex exceeded its pivot budget")


def simplex(c: np.ndarray, A_eq: np.ndarray | None = None, b_eq: np.ndarray | None = None,
            A_ub: np.ndarray | None = None, b_ub: np.ndarray | None = None,
            tol: float = SIMPLEX_TOL, max_pivots: int = 100000) -> tuple[float, np.ndarray]:
    """Maximise ``c^T x`` subject to ``A_eq x = b_eq``, ``A_ub x <= b_ub``, ``x >= 0``.

    Dense two-phase tableau with Bland's anti-cycling rule.
    """
    c = np.asarray(c, float)
    nv = c.size
    A_eq = np.zeros((0, nv)) if A_eq is None else np.asarray(A_eq, float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, float)
    A_ub = np.zeros((0, nv)) if A_ub is None else np.asarray(A_ub, float)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, float)
    n_ub, n_eq = A_ub.shape[0], A_eq.shape[0]
    A = np.zeros((n_ub + n_eq, nv + n_ub))
    A[:n_ub, :nv] = A_ub
    A[:n_ub, nv:] = np.eye(n_ub)
    A[n_ub:, :nv] = A_eq
    b = np.concatenate([b_ub, b_eq])
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    rows, cols = A.shape

    # slack columns can start in the basis for rows that were not negated
    basis: list[int] = []
    art_rows = []
    for i in range(rows):
        if i < n_ub and not neg[i]:
            basis.append(nv + i)
        else:
            basis.append(-1)
            art_rows.append(i)
    n_art = len(art_rows)
    T = np.zeros((rows + 1, cols + n_art + 1))
    T[:rows, :cols] = A
    T[:rows, -1] = b
    for j, i in enumerate(art_rows):
        T[i, cols + j] = 1.0
        basis[i] = cols + j

    if n_art:
        T[-1, cols:cols + n_art] = 1.0
        for i in art_rows:
            T[-1] -= T[i]
        _iterate(T, basis, cols + n_art, tol, max_pivots)
        if T[-1, -1] < -tol * max(1.0, np.abs(b).max(initial=0.0)):
            raise InfeasibleError("linear program is infeasible")
        keep = []
        for i in range(rows):
            if basis[i] >= cols:
                nz = np.flatnonzero(np.abs(T[i, :cols]) > tol)
                if nz.size == 0:
                    continue  # redundant row
                _pivot(T, i, int(nz[0]))
                basis[i] = int(nz[0])
            keep.append(i)
        T = np.vstack([T[keep][:, list(range(cols)) + [T.shape[1] - 1]], np.zeros((1, cols + 1))])
        basis = [basis[i] for i in keep]
        rows = len(keep)

    T[-1, :] = 0.0
    T[-1, :nv] = -c
    for i, bi in enumerate(basis):
        if T[-1, bi] != 0.0:
            T[-1] -= T[-1, bi] * T[i]
    _iterate(T, basis, cols, tol, max_pivots)
    x = np.zeros(cols)
    for i, bi in enumerate(basis):
        x[bi] = T[i, -1]
    return float(T[-1, -1]), x[:nv]


# --------------------------------------------------------------------------
# flow linear programs


def _flow_constraints(inst: Instance, d_cols: np.ndarray):
    """Equality rows ``Gamma^T (f+ - f-) - d_col * y = 0`` for each commodity, one vertex dropped.

    Variable layout: ``f+`` (m*k, edge-major), ``f-`` (m*k), then one ``y`` per column of ``d_cols``
    (either a single shared ``lambda`` or a per-commodity value); ``d_cols`` is ``(k, n, ny)``.
    """
    g, k = inst.graph, inst.k
    m, n = g.m, g.n
    if m * k > LP_BUDGET:
        raise BudgetError(f"m*k = {m * k} exceeds LP budget {LP_BUDGET}")
    ny = d_cols.shape[2]
    nv = 2 * m * k + ny
    A_eq = np.zeros((k * (n - 1), nv))
    row = 0
    for i in range(k):
        for v in range(1, n):
            for e, (t, h, _) in enumerate(g.edges()):
                coef = (1.0 if h == v else 0.0) - (1.0 if t == v else 0.0)
                if coef:
                    A_eq[row, e * k + i] = coef
                    A_eq[row, m * k + e * k + i] = -coef
            A_eq[row, 2 * m * k:] = -d_cols[i, v]
            row += 1
    A_ub = np.zeros((m, nv))
    for e in range(m):
        A_ub[e, e * k:(e + 1) * k] = 1.0
        A_ub[e, m * k + e * k:m * k + (e + 1) * k] = 1.0
    return A_eq, np.zeros(A_eq.shape[0]), A_ub, np.asarray(g.caps, float)


def _unit_demand_rows(inst: Instance) -> np.ndarray:
    """``D[i, v]``: demand of commodity ``i`` at ``v`` with sink-positive signs."""
    D = np.zeros((inst.k, inst.n))
    for i, c in enumerate(inst.commodities.pairs):
        D[i, c.sink] += c.value
        D[i, c.source] -= c.value
    return D


def lp_concurrent_oracle(inst: Instance, return_flow: bool = False):
    """Exact concurrent flow value ``max lambda`` with all demands scaled by ``lambda``."""
    D = _unit_demand_rows(inst)
    m, k = inst.m, inst.k
    A_eq, b_eq, A_ub, b_ub = _flow_constraints(inst, D[:, :, None])
    c = np.zeros(2 * m * k + 1)
    c[-1] = 1.0
    val, x = simplex(c, A_eq, b_eq, A_ub, b_ub)
    if not return_flow:
        return val
    return val, (x[:m * k] - x[m * k:2 * m * k]).reshape(m, k)


def lp_weighted_oracle(inst: Instance, weights, return_flow: bool = False):
    """Exact ``max sum_i w_i F_i`` where commodity ``i`` ships ``F_i`` times its demand."""
    w = np.asarray(weights, float)
    if w.shape != (inst.k,):
        raise ValueError("one weight per commodity required")
    D = _unit_demand_rows(inst)
    m, k = inst.m, inst.k
    per = np.zeros((k, inst.n, k))
    for i in range(k):
        per[i, :, i] = D[i]
    A_eq, b_eq, A_ub, b_ub = _flow_constraints(inst, per)
    c = np.zeros(2 * m * k + k)
    c[2 * m * k:] = w
    val, x = simplex(c, A_eq, b_eq, A_ub, b_ub)
    if not return_flow:
        return val
    return val, (x[:m * k] - x[m * k:2 * m * k]).reshape(m, k), x[2 * m * k:]


# --------------------------------------------------------------------------
# sign-vector brute force


def subset_sum_brute(a) -> np.ndarray:
    """``counts[j]`` = number of subsets of ``a`` summing to ``j``, by enumeration."""
    a = [int(x) for x in a]
    if len(a) > 20:
        raise BudgetError("subset enumeration limited to 20 items")
    counts = np.zeros(sum(a) + 1, dtype=np.int64)
    for mask in itertools.product((0, 1), repeat=len(a)):
        counts[sum(x for x, b in zip(a, mask) if b)] += 1
    return counts


def all_signs(k: int) -> np.ndarray:
    return np.array(list(itertools.product((1.0, -1.0), repeat=k))).reshape(-1, k)


def exact_sign_weights(f, u: float, rho: float, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """All sign vectors and their weights ``exp((eps/rho) s^T f / u)``."""
    f = np.asarray(f, float)
    S = all_signs(f.size)
    return S, np.exp((eps / rho) * (S @ f) / u)


def exact_sign_energy(f, u: float, rho: float, eps: float) -> np.ndarray:
    """``(1/sum w) sum_s (w(s)/u^2) s s^T + (eps/u^2) I`` over all ``2^k`` signs."""
    f = np.asarray(f, float)
    k = f.size
    if k > 12:
        raise BudgetError("exact sign energy limited to k <= 12")
    S = all_signs(k)
    logits = (eps / rho) * (S @ f) / u
    w = np.exp(logits - logits.max())
    return (S.T * w) @ S / (w.sum() * u * u) + (eps / (u * u)) * np.eye(k)
