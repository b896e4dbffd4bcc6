"""Linear solves with the block Laplacian ``L = Gamma^T P^{-1} Gamma``.

``L`` is never assembled: :class:`CoupledOperator` applies it edge-blockwise.
It is preconditioned by replacing every block ``P(e)`` with
``lambda_min(P(e)) I``, which turns the preconditioner into ``k`` copies of one
scalar graph Laplacian.  Those are solved by :func:`laplacian_solve`.
"""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .graphcore import Graph
from .kvec import EnergyMatrices

INNER_TOL = 1e-10
SOLVE_FLOOR = 1e-12
SOLVERS = ("cheby", "cg", "dense")
INNER_METHODS = ("direct", "jacobi", "tree")


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, report: "SolveReport | None" = None):
        super().__init__(message)
        self.report = report


@dataclass
class SolveReport:
    method: str
    iterations: int = 0
    residual: float = 0.0
    precond_solves: int = 0
    theta: float = 0.0
    converged: bool = True
    seconds: float = 0.0

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "iterations": self.iterations,
            "residual": self.residual,
            "precond_solves": self.precond_solves,
            "theta": self.theta,
            "converged": self.converged,
        }


def _center(x: np.ndarray) -> np.ndarray:
    return x - x.mean(axis=0)


# --------------------------------------------------------------------------
# scalar graph Laplacians


class WeightedLaplacian:
    """``B^T diag(w) B`` for a connected graph, with cached solver state."""

    def __init__(self, g: Graph, weights: np.ndarray):
        w = np.asarray(weights, dtype=float)
        if w.shape != (g.m,) or np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("Laplacian weights must be positive, one per edge")
        self.graph = g
        self.weights = w
        self.matrix = g.laplacian(w)
        self.n = g.n

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    @cached_property
    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    @cached_property
    def _lu(self):
        grounded = self.matrix[1:, 1:].tocsc()
        return spla.splu(grounded)

    @cached_property
    def _tree(self) -> "_TreeSolver":
        g = self.graph
        # max-weight spanning tree == min spanning tree on resistances
        R = sp.coo_matrix((1.0 / self.weights, (g.tails, g.heads)), shape=(g.n, g.n))
        T = csgraph.minimum_spanning_tree(R.tocsr()).tocoo()
        res = {}
        for u, v, r in zip(T.row, T.col, T.data):
            res[(int(u), int(v))] = 1.0 / r
        return _TreeSolver(g.n, res)

    def direct_solve(self, b: np.ndarray) -> np.ndarray:
        x = np.zeros_like(b)
        if self.n > 1:
            x[1:] = self._lu.solve(np.ascontiguousarray(b[1:]))
        return _center(x)


class _TreeSolver:
    """Exact pseudo-inverse application for a weighted spanning tree."""

    def __init__(self, n: int, edges: dict[tuple[int, int], float]):
        adj: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        for (u, v), w in edges.items():
            adj[u].append((v, w))
            adj[v].append((u, w))
        parent = [-1] * n
        pw = [0.0] * n
        order = [0]
        seen = [False] * n
        seen[0] = True
        q = deque([0])
        while q:
            u = q.popleft()
            for v, w in sorted(adj[u]):
                if not seen[v]:
                    seen[v] = True
                    parent[v], pw[v] = u, w
                    order.append(v)
                    q.append(v)
        if len(order) != n:
            raise ValueError("spanning tree does not reach every vertex")
        self.parent, self.pw, self.order = parent, pw, order

    def solve(self, r: np.ndarray) -> np.ndarray:
        sub = np.array(r, dtype=float, copy=True)
        for v in reversed(self.order[1:]):
            sub[self.parent[v]] += sub[v]
        x = np.zeros_like(sub)
        for v in self.order[1:]:
            x[v] = x[self.parent[v]] + sub[v] / self.pw[v]
        return _center(x)


def laplacian_solve(lap: WeightedLaplacian, b: np.ndarray, tol: float = INNER_TOL,
                    method: str = "jacobi", maxiter: int | None = None) -> np.ndarray:
    """Solve ``lap x = b`` for ``b`` orthogonal to constants; returns mean-zero ``x``.

    ``b`` may hold several right-hand sides as columns.  ``method`` picks the
    PCG preconditioner (``"jacobi"`` or ``"tree"``) or ``"direct"`` for a sparse
    LU factorisation of the grounded matrix.
    """
    b = np.asarray(b, dtype=float)
    if b.shape[0] != lap.n:
        raise ValueError(f"right-hand side has {b.shape[0]} rows, expected {lap.n}")
    bmax = float(np.max(np.abs(b))) if b.size else 0.0
    if bmax == 0.0:
        return np.zeros_like(b)
    if np.max(np.abs(b.sum(axis=0))) > 1e-9 * bmax * max(1.0, math.sqrt(lap.n)):
        raise ValueError("right-hand side is not orthogonal to the constant vector")
    b = _center(b)
    if method == "direct":
        return lap.direct_solve(b)
    if method == "jacobi":
        dinv = 1.0 / lap.diagonal
        precond = (lambda r: (dinv * r.T).T)
    elif method == "tree":
        precond = lap._tree.solve
    else:
        raise ValueError(f"unknown inner method {method!r}")
    maxiter = maxiter or 20 * lap.n + 100
    return _pcg_columns(lap.matrix, b, precond, tol, maxiter)


def _pcg_columns(A, b: np.ndarray, precond, tol: float, maxiter: int) -> np.ndarray:
    vec = b.ndim == 1
    B = b[:, None] if vec else b
    x = np.zeros_like(B)
    r = B.copy()
    bnorm = np.linalg.norm(B, axis=0)
    active = bnorm > 0
    z = _center(precond(r))
    p = z.copy()
    rz = np.sum(r * z, axis=0)
    for _ in range(maxiter):
        if np.all(np.linalg.norm(r, axis=0) <= tol * bnorm):
            break
        Ap = A @ p
        pAp = np.sum(p * Ap, axis=0)
        alpha = np.where(active & (pAp > 0), rz / np.where(pAp > 0, pAp, 1.0), 0.0)
        x += alpha * p
        r -= alpha * Ap
        z = _center(precond(r))
        rz_new = np.sum(r * z, axis=0)
        beta = np.where(rz != 0, rz_new / np.where(rz != 0, rz, 1.0), 0.0)
        p = z + beta * p
        rz = rz_new
    else:
        res = np.linalg.norm(B - A @ x, axis=0)
        if np.any(res > tol * bnorm):
            raise ConvergenceError(f"Laplacian PCG did not reach tol {tol:g} in {maxiter} iterations")
    x = _center(x)
    return x[:, 0] if vec else x


# --------------------------------------------------------------------------
# block operators


class CoupledOperator:
    """Implicit ``L = (Gamma ⊗ I)^T P^{-1} (Gamma ⊗ I)`` acting on ``(n, k)`` arrays."""

    def __init__(self, g: Graph, P: EnergyMatrices):
        if P.m != g.m:
            raise ValueError("one energy block per edge required")
        self.graph = g
        self.P = P
        self.Pinv = P.inverse_blocks()
        self.k = P.k
        self.applications = 0

    def apply(self, x: np.ndarray) -> np.ndarray:
        g = self.graph
        x = np.asarray(x, dtype=float)
        flat = x.ndim == 1
        if flat:
            x = x.reshape(g.n, -1)
        if x.shape != (g.n, self.k):
            raise ValueError(f"expected shape {(g.n, self.k)}, got {x.shape}")
        self.applications += 1
        grad = x[g.heads] - x[g.tails]
        y = np.einsum("eij,ej->ei", self.Pinv, grad)
        out = g.incidence_t @ y
        return out.ravel() if flat else out

    __call__ = apply

    def dense(self) -> np.ndarray:
        G = np.kron(self.graph.incidence.toarray(), np.eye(self.k))
        Pinv = np.zeros((G.shape[0], G.shape[0]))
        k = self.k
        for e in range(self.graph.m):
            Pinv[e * k:(e + 1) * k, e * k:(e + 1) * k] = self.Pinv[e]
        return G.T @ Pinv @ G


@dataclass
class BlockPreconditioner:
    """``L~ = L_scalar ⊗ I_k`` with edge weights ``1 / lambda_max(P(e))``, so ``L~ <= L <= kappa L~``."""

    laplacian: WeightedLaplacian
    k: int
    method: str = "direct"
    tol: float = INNER_TOL
    solves: int = field(default=0)

    @property
    def blocks(self) -> list[WeightedLaplacian]:
        return [self.laplacian] * self.k

    def apply_inverse(self, r: np.ndarray) -> np.ndarray:
        """Approximate ``L~^+ r`` by solving each commodity's Laplacian system."""
        self.solves += self.k
        # iterated residuals drift off the range by rounding; project back first
        return laplacian_solve(self.laplacian, _center(r), self.tol, self.method)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.laplacian @ x

    def dense(self) -> np.ndarray:
        return np.kron(self.laplacian.dense(), np.eye(self.k))


def build_preconditioner(g: Graph, P: EnergyMatrices, method: str = "direct",
                         tol: float = INNER_TOL) -> BlockPreconditioner:
    if method not in INNER_METHODS:
        raise ValueError(f"unknown inner method {method!r}")
    return BlockPreconditioner(WeightedLaplacian(g, 1.0 / P.lam_max), P.k, method, tol)


def chebyshev_steps(kappa: float, theta: float) -> int:
    """Steps after which Chebyshev on spectrum ``[1, 2 kappa]`` reduces the L-norm error by ``theta``."""
    lo, hi = 1.0, 2.0 * kappa
    sigma = (hi + lo) / (hi - lo)
    return max(1, math.ceil(math.acosh(1.0 / theta) / math.acosh(sigma)))


def iteration_cap(kappa: float, theta: float) -> int:
    return 50 * math.ceil(math.sqrt(2.0 * kappa) * math.log(2.0 / theta))


def _check_rhs(b: np.ndarray, n: int, k: int) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.ndim == 1:
        b = b.reshape(n, -1)
    if b.shape != (n, k):
        raise ValueError(f"right-hand side must have shape {(n, k)}")
    scale = float(np.max(np.abs(b))) if b.size else 0.0
    if scale and np.max(np.abs(b.sum(axis=0))) > 1e-9 * scale * max(1.0, math.sqrt(n)):
        raise ValueError("right-hand side has a component along per-commodity constants")
    return _center(b)


def _inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.vdot(a, b))


def precon_cheby(opL: CoupledOperator, pre: BlockPreconditioner, b: np.ndarray,
                 kappa: float, theta: float) -> tuple[np.ndarray, SolveReport]:
    """Preconditioned Chebyshev iteration for ``L x = b``.

    The preconditioned spectrum is taken to lie in ``[1, 2 kappa]``.  Stops at
    the a-priori step count for relative L-norm error ``theta`` or earlier when
    ``r^T B r <= theta^2 b^T B b / kappa`` certifies it.
    """
    t0 = time.perf_counter()
    if kappa < 1 or not 0 < theta < 1:
        raise ValueError("need kappa >= 1 and 0 < theta < 1")
    g = opL.graph
    b = _check_rhs(b, g.n, opL.k)
    report = SolveReport("cheby", theta=theta)
    x = np.zeros_like(b)
    if not np.any(b):
        report.seconds = time.perf_counter() - t0
        return x, report
    solves0 = pre.solves
    steps = chebyshev_steps(kappa, theta)
    lo, hi = 1.0, 2.0 * kappa
    centre, half = (hi + lo) / 2.0, (hi - lo) / 2.0
    sigma1 = centre / half

    r = b.copy()
    z = _center(pre.apply_inverse(r))
    bBb = _inner(b, z)
    target = theta * theta * bBb / kappa
    d = z / centre
    rho = 1.0 / sigma1
    it = 0
    while it < steps:
        x += d
        r -= opL.apply(d)
        it += 1
        z = _center(pre.apply_inverse(r))
        rBr = _inner(r, z)
        if rBr <= target:
            break
        rho_new = 1.0 / (2.0 * sigma1 - rho)
        d = rho_new * rho * d + (2.0 * rho_new / half) * z
        rho = rho_new
    x = _center(x)
    report.iterations = it
    report.precond_solves = pre.solves - solves0
    report.residual = float(np.linalg.norm(b - opL.apply(x)) / np.linalg.norm(b))
    report.seconds = time.perf_counter() - t0
    if rBr > bBb:
        report.converged = False
        raise ConvergenceError("Chebyshev iteration diverged; is kappa a valid bound?", report)
    return x, report


def precon_cg(opL: CoupledOperator, pre: BlockPreconditioner, b: np.ndarray,
              kappa: float, theta: float) -> tuple[np.ndarray, SolveReport]:
    """Preconditioned conjugate gradient with the same stopping certificate."""
    t0 = time.perf_counter()
    if kappa < 1 or not 0 < theta < 1:
        raise ValueError("need kappa >= 1 and 0 < theta < 1")
    g = opL.graph
    b = _check_rhs(b, g.n, opL.k)
    report = SolveReport("cg", theta=theta)
    x = np.zeros_like(b)
    if not np.any(b):
        report.seconds = time.perf_counter() - t0
        return x, report
    solves0 = pre.solves
    cap = iteration_cap(kappa, theta)
    r = b.copy()
    z = _center(pre.apply_inverse(r))
    rz = bBb = _inner(r, z)
    target = theta * theta * bBb / kappa
    p = z.copy()
    it = 0
    while rz > target:
        if it >= cap:
            report.iterations = it
            report.converged = False
            raise ConvergenceError(f"PCG exceeded iteration cap {cap}", report)
        Ap = opL.apply(p)
        alpha = rz / _inner(p, Ap)
        x += alpha * p
        r -= alpha * Ap
        z = _center(pre.apply_inverse(r))
        rz_new = _inner(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
    x = _center(x)
    report.iterations = it
    report.precond_solves = pre.solves - solves0
    report.residual = float(np.linalg.norm(b - opL.apply(x)) / np.linalg.norm(b))
    report.seconds = time.perf_counter() - t0
    return x, report


def dense_solve(opL: CoupledOperator, b: np.ndarray) -> tuple[np.ndarray, SolveReport]:
    """Direct solve on the assembled operator, grounding vertex 0 of every commodity."""
    t0 = time.perf_counter()
    g, k = opL.graph, opL.k
    b = _check_rhs(b, g.n, k)
    L = opL.dense()
    x = np.zeros(g.n * k)
    if np.any(b):
        x[k:] = np.linalg.solve(L[k:, k:], b.ravel()[k:])
    x = _center(x.reshape(g.n, k))
    res = float(np.linalg.norm(b - opL.apply(x)) / max(np.linalg.norm(b), 1e-300)) if np.any(b) else 0.0
    return x, SolveReport("dense", iterations=1, residual=res, seconds=time.perf_counter() - t0)


def solve_coupled_system(g: Graph, P: EnergyMatrices, d: np.ndarray, delta: float,
                         solver: str = "cheby", inner: str = "direct",
                         inner_tol: float = INNER_TOL) -> tuple[np.ndarray, SolveReport]:
    """Potentials ``phi`` with ``||phi - L^+ d||_L <= delta ||L^+ d||_L``."""
    opL = CoupledOperator(g, P)
    if solver == "dense":
        return dense_solve(opL, d)
    pre = build_preconditioner(g, P, inner, inner_tol)
    kappa = max(1.0, P.condition)
    if solver == "cheby":
        return precon_cheby(opL, pre, d, kappa, delta)
    if solver == "cg":
        return precon_cg(opL, pre, d, kappa, delta)
    raise ValueError(f"unknown solver {solver!r}")
