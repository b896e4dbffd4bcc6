"""Sign-vector outer layer: energy matrices as weighted averages of ``s s^T``
over all sign vectors, built from subset-sum counts instead of ``2^k``
enumeration."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .capacitated import FAIL, OK, UNCONVERGED, quadratically_capacitated_flow
from .concurrent_mmw import ConcurrentConfig, ConcurrentOutcome
from .graphcore import Instance
from .kvec import EnergyMatrices, block_condition_bound, congestions
from .trace import Trace, emit

TABLE_BUDGET = 1 << 22  # largest subset sum we tabulate
MAX_ITEMS = 60  # int64 counts stay exact up to 2^60 subsets
FFT_EXACT = float(1 << 45)


class TableBudgetError(ValueError):
    pass


def opt_sign(f) -> np.ndarray:
    """Sign vector maximising ``s^T f``; zero entries get ``+1``."""
    f = np.asarray(f, float)
    return np.where(f < 0, -1.0, 1.0)


def grid_size(u: float, eps: float, k: int) -> float:
    return eps * u / (3.0 * k)


def grid_counts(f, u: float, eps: float, k: int) -> np.ndarray:
    """Number of whole grid steps in each ``|f_l|`` (rounded toward zero)."""
    mag = np.abs(np.asarray(f, float))
    g = grid_size(u, eps, k)
    m = np.floor(mag / g)
    # guard the floor against division rounding either way
    m = np.where((m + 1) * g <= mag, m + 1, m)
    m = np.where((m > 0) & (m * g > mag), m - 1, m)
    return m.astype(np.int64)


def round_flow(f, u: float, eps: float, k: int) -> np.ndarray:
    """Round each entry toward zero to a multiple of ``eps u / (3k)``."""
    f = np.asarray(f, float)
    return np.sign(f) * grid_counts(f, u, eps, k) * grid_size(u, eps, k)


def _combine(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if float(x.max()) * float(y.max()) * min(x.size, y.size) < FFT_EXACT:
        size = x.size + y.size - 1
        nfft = 1 << (size - 1).bit_length()
        z = np.fft.irfft(np.fft.rfft(x, nfft) * np.fft.rfft(y, nfft), nfft)[:size]
        return np.rint(z).astype(np.int64)
    return np.convolve(x, y)


def convolve_all(a, budget: int = TABLE_BUDGET) -> np.ndarray:
    """``counts[j]`` = number of subsets of ``a`` with sum ``j``, for positive integers ``a``.

    Divide and conquer: count each half, then convolve the two tables.
    """
    a = [int(x) for x in a]
    if any(x < 1 for x in a):
        raise ValueError("convolve_all expects positive integers")
    if len(a) > MAX_ITEMS:
        raise TableBudgetError(f"{len(a)} items would overflow 64-bit subset counts")
    if sum(a) > budget:
        raise TableBudgetError(f"subset-sum table of size {sum(a) + 1} exceeds budget {budget}")

    def rec(lo: int, hi: int) -> np.ndarray:
        if hi - lo == 1:
            t = np.zeros(a[lo] + 1, dtype=np.int64)
            t[0] = t[-1] = 1
            return t
        mid = (lo + hi) // 2
        return _combine(rec(lo, mid), rec(mid, hi))

    if not a:
        return np.ones(1, dtype=np.int64)
    return rec(0, len(a))


def _discounted_total(counts: np.ndarray, c: float) -> float:
    """``sum_j counts[j] exp(-c j)``."""
    return float(np.dot(counts.astype(float), np.exp(-c * np.arange(counts.size))))


def sign_weight(f, s, u: float, eps: float, rho: float) -> float:
    """The grouped weight of sign vector ``s``: exact in ``s*`` and rounded in the deviations."""
    f = np.asarray(f, float)
    k = f.size
    star = opt_sign(f)
    a = 2 * grid_counts(f, u, eps, k)
    gap = int(a[np.asarray(s) != star].sum())
    return math.exp((eps / rho) * float(star @ f) / u - (eps / rho) * (eps / (3.0 * k)) * gap)


def energy_matrix_signs(f, u: float, eps: float, rho: float, budget: int = TABLE_BUDGET) -> np.ndarray:
    """``(1/sum w) sum_s (w(s)/u^2) s s^T + (eps/u^2) I`` with grouped weights.

    A sign vector's weight depends only on the total ``j`` of the rounded
    magnitudes ``a_l`` where it disagrees with the optimal sign; subset counts
    per ``j`` come from :func:`convolve_all`.  Entries with ``a_l = 0`` double
    every count.
    """
    f = np.asarray(f, float)
    k = f.size
    star = opt_sign(f)
    a = 2 * grid_counts(f, u, eps, k)
    c = (eps / rho) * (eps / (3.0 * k))
    nz = a > 0

    def weight_sum(skip: tuple[int, ...]) -> float:
        rest = [l for l in range(k) if l not in skip]
        items = [int(a[l]) for l in rest if nz[l]]
        zeros = sum(1 for l in rest if not nz[l])
        return _discounted_total(convolve_all(items, budget), c) * 2.0 ** zeros

    total = weight_sum(())
    M = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            rest = weight_sum((i, j))
            acc = 0.0
            # the four settings of (s_i, s_j) relative to the optimal signs
            for flip_i in (0, 1):
                for flip_j in (0, 1):
                    sign = (1 - 2 * flip_i) * (1 - 2 * flip_j)
                    acc += sign * math.exp(-c * (flip_i * a[i] + flip_j * a[j]))
            M[i, j] = M[j, i] = star[i] * star[j] * acc * rest / total
    return M / (u * u) + (eps / (u * u)) * np.eye(k)


@dataclass(frozen=True)
class SignsParams:
    eps: float
    rho: float
    n_iter: int
    stop_at: float | None = None

    @staticmethod
    def paper_iterations(k: int, eps: float) -> float:
        return float(k) * k / eps ** 2

    @classmethod
    def paper(cls, k: int, eps: float) -> "SignsParams":
        return cls(eps, float(k), max(1, math.ceil(cls.paper_iterations(k, eps))))

    @classmethod
    def practical(cls, k: int, eps: float, n_iter: int | None = None,
                  rho: float | None = None) -> "SignsParams":
        p = cls.paper(k, eps)
        return replace(p, rho=rho or p.rho, n_iter=n_iter or p.n_iter, stop_at=1.0 + 3.0 * eps)

    @property
    def threshold(self) -> float:
        return 1.0 + 3.0 * self.eps


def signs_params(config: ConcurrentConfig, k: int, eps: float) -> SignsParams:
    if config.paper_faithful:
        return SignsParams.paper(k, eps)
    return SignsParams.practical(k, eps, config.n_outer, config.rho_outer)


def max_concurrent_flow_signs(inst: Instance, eps: float, config: ConcurrentConfig = ConcurrentConfig(),
                              scale: float = 1.0, trace: Trace | None = None) -> ConcurrentOutcome:
    """Concurrent flow with energy matrices rebuilt from the running flow sum each iteration."""
    if not 0 < eps <= 0.5:
        raise ValueError("eps must lie in (0, 0.5]")
    g, k = inst.graph, inst.k
    caps = np.asarray(g.caps, float)
    d = scale * inst.demands
    params = signs_params(config, k, eps)
    inner_params = config.inner_params(g.m, eps)
    running = np.zeros((g.m, k))
    worst_cond, inner_its = 1.0, 0
    cong = math.inf
    t = 0
    for t in range(1, params.n_iter + 1):
        P = EnergyMatrices(np.stack([energy_matrix_signs(running[e], caps[e], eps, params.rho)
                                     for e in range(g.m)]))
        cond = block_condition_bound(P)
        worst_cond = max(worst_cond, cond)
        out = quadratically_capacitated_flow(g, P, d, eps, inner_params, config.solve)
        inner_its += out.iterations
        if out.failed:
            emit(trace, "signs", t=t, congestion=None, condition=cond, inner=out.status)
            return ConcurrentOutcome(FAIL, None, math.inf, t, worst_cond, 0, inner_its)
        running += out.flow
        cong = float(np.max(congestions(running / t, caps), initial=0.0))
        emit(trace, "signs", t=t, congestion=cong, condition=cond, inner=out.status)
        if params.stop_at is not None and cong <= params.stop_at:
            break
    status = OK if cong <= params.threshold else UNCONVERGED
    return ConcurrentOutcome(status, running / t, cong, t, worst_cond, 0, inner_its)
