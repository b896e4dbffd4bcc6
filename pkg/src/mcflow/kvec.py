"""Per-edge k x k energy matrices and block-vector arithmetic over
(edge, commodity) space."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SYM_TOL = 1e-10


class NotPositiveDefiniteError(ValueError):
    pass


def _symmetrized(A: np.ndarray, tol: float = SYM_TOL) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {A.shape}")
    At = np.swapaxes(A, -1, -2)
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if A.size and np.max(np.abs(A - At)) > tol * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (A + At)


@dataclass(frozen=True, eq=False)
class EnergyMatrices:
    """``m`` symmetric positive-definite ``k x k`` blocks with cached extreme eigenvalues."""

    blocks: np.ndarray
    lam_min: np.ndarray = field(default=None)
    lam_max: np.ndarray = field(default=None)

    def __post_init__(self):
        B = _symmetrized(self.blocks)
        if B.ndim != 3:
            raise ValueError("blocks must have shape (m, k, k)")
        if self.lam_min is None or self.lam_max is None:
            ev = np.linalg.eigvalsh(B)
            lo, hi = ev[:, 0], ev[:, -1]
        else:
            lo, hi = np.asarray(self.lam_min, float), np.asarray(self.lam_max, float)
        if lo.size and not np.all(lo > 0):
            bad = int(np.argmin(lo))
            raise NotPositiveDefiniteError(f"block {bad} is not positive definite (lambda_min={lo[bad]:.3g})")
        for a in (B, lo, hi):
            a.setflags(write=False)
        object.__setattr__(self, "blocks", B)
        object.__setattr__(self, "lam_min", lo)
        object.__setattr__(self, "lam_max", hi)

    @classmethod
    def identity(cls, m: int, k: int, scale=1.0) -> "EnergyMatrices":
        s = np.broadcast_to(np.asarray(scale, float), (m,)).copy()
        return cls(s[:, None, None] * np.eye(k), s, s.copy())

    @property
    def m(self) -> int:
        return self.blocks.shape[0]

    @property
    def k(self) -> int:
        return self.blocks.shape[1]

    @property
    def condition(self) -> float:
        return block_condition_bound(self)

    def scaled(self, c) -> "EnergyMatrices":
        """Blocks multiplied by positive scalars ``c`` (one per edge, or a single scalar)."""
        c = np.broadcast_to(np.asarray(c, float), (self.m,))
        if np.any(c <= 0):
            raise ValueError("scale factors must be positive")
        return EnergyMatrices(self.blocks * c[:, None, None], self.lam_min * c, self.lam_max * c)

    def inverse_blocks(self) -> np.ndarray:
        return np.linalg.inv(self.blocks)

    def dense(self) -> np.ndarray:
        """Block-diagonal ``km x km`` matrix (edge-major)."""
        m, k = self.m, self.k
        out = np.zeros((m * k, m * k))
        for e in range(m):
            out[e * k:(e + 1) * k, e * k:(e + 1) * k] = self.blocks[e]
        return out


def _flow_blocks(f: np.ndarray, m: int) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.ndim == 1:
        if m == 0 or f.size % m:
            raise ValueError(f"flow length {f.size} is not a multiple of m={m}")
        f = f.reshape(m, -1)
    if f.shape[0] != m:
        raise ValueError(f"flow has {f.shape[0]} edge blocks, expected {m}")
    return f


def energy_per_edge(P: EnergyMatrices, f: np.ndarray) -> np.ndarray:
    f = _flow_blocks(f, P.m)
    if f.shape[1] != P.k:
        raise ValueError(f"flow has {f.shape[1]} commodities, energy blocks have {P.k}")
    return np.maximum(np.einsum("ei,eij,ej->e", f, P.blocks, f), 0.0)


def energy(P: EnergyMatrices, f: np.ndarray) -> float:
    """Total dissipation ``sum_e f(e)^T P(e) f(e)``."""
    return float(energy_per_edge(P, f).sum())


def energy_edge(P: EnergyMatrices, e: int, f: np.ndarray) -> float:
    fe = _flow_blocks(f, P.m)[e]
    return max(float(fe @ P.blocks[e] @ fe), 0.0)


def saturation(P: EnergyMatrices, e: int, f: np.ndarray) -> float:
    return math.sqrt(energy_edge(P, e, f))


def saturations(P: EnergyMatrices, f: np.ndarray) -> np.ndarray:
    return np.sqrt(energy_per_edge(P, f))


def congestion_l1(f: np.ndarray, e: int, u: float) -> float:
    fe = np.asarray(f, float)
    fe = fe[e] if fe.ndim == 2 else fe
    return float(np.abs(fe).sum() / u)


def congestions(f: np.ndarray, caps: np.ndarray) -> np.ndarray:
    """Per-edge ``||f(e)||_1 / u(e)``."""
    f = _flow_blocks(f, len(caps))
    return np.abs(f).sum(axis=1) / np.asarray(caps, float)


def sym_eig_k(A: np.ndarray, tol: float = 1e-15, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues ascending, orthonormal eigenvectors as columns)``.
    """
    a = _symmetrized(A).copy()
    if a.ndim != 2:
        raise ValueError("sym_eig_k takes a single matrix")
    k = a.shape[0]
    V = np.eye(k)
    norm = max(np.linalg.norm(a), 1e-300)
    for _ in range(max_sweeps):
        off = math.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))
        if off <= tol * norm:
            break
        for p in range(k - 1):
            for q in range(p + 1, k):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                J = np.array([[c, s], [-s, c]])
                idx = [p, q]
                a[:, idx] = a[:, idx] @ J
                a[idx, :] = J.T @ a[idx, :]
                a[p, q] = a[q, p] = 0.0
                V[:, idx] = V[:, idx] @ J
    lam = np.diag(a).copy()
    order = np.argsort(lam, kind="stable")
    return lam[order], V[:, order]


def matrix_exp_sym(A: np.ndarray) -> np.ndarray:
    """``exp(A)`` for symmetric ``A`` (or a stack of them) via eigendecomposition."""
    A = _symmetrized(A)
    lam, Q = np.linalg.eigh(A)
    out = (Q * np.exp(lam)[..., None, :]) @ np.swapaxes(Q, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def block_condition_bound(P: EnergyMatrices) -> float:
    """``max_e lambda_max(P(e)) / lambda_min(P(e))``."""
    if P.m == 0:
        return 1.0
    return float(np.max(P.lam_max / P.lam_min))
