"""Deliberately naive reference implementations.

Everything here recomputes quantities with plain loops and none of the
vectorized code paths of the main modules, so agreement between the two is
evidence of correctness rather than shared bugs.  These routines are meant
for tiny instances only and refuse work beyond their combinatorial budget.
"""

from dataclasses import dataclass
from itertools import combinations, product
from math import comb

import numpy as np

from .model import as_measurement_vector

__all__ = [
    "OracleConfig",
    "BudgetExceededError",
    "exhaustive_grid_recover",
    "direct_adjoint_pair",
    "finite_difference_kernel_check",
    "naive_least_squares",
]


class BudgetExceededError(RuntimeError):
    """Raised when an exhaustive search would exceed the configured budget."""

    def __init__(self, budget, limit):
        super().__init__(f"exhaustive search budget {budget} exceeds limit {limit}")
        self.budget = budget
        self.limit = limit


@dataclass(frozen=True)
class OracleConfig:
    grid_points: int = 16
    max_total_paths: int = 4
    budget_limit: int = 10 ** 7

    def __post_init__(self):
        if self.grid_points > 128:
            raise ValueError("oracle grid is capped at 128 points")
        if self.max_total_paths > 4:
            raise ValueError("oracle path budget is capped at 4 paths")


def naive_least_squares(y, codebooks, delay_sets, grid):
    """Normal-equations least squares with an explicitly looped system matrix.

    Returns (x, residual) where residual = ||y - A x|| / ||y||.
    """
    y = as_measurement_vector(y)
    N = grid.N
    ns = grid.n_indices
    cols = sum(cb.k * len(taus) for cb, taus in zip(codebooks, delay_sets))
    A = np.zeros((N, cols), dtype=complex)
    col = 0
    for cb, taus in zip(codebooks, delay_sets):
        for tau in taus:
            for row in range(N):
                n = ns[row]
                phase = np.exp(-2j * np.pi * n * tau)
                for l in range(cb.k):
                    A[row, col + l] = phase * cb.entries[row, l]
            col += cb.k
    gram = A.conj().T @ A
    x = np.linalg.pinv(gram) @ (A.conj().T @ y)
    resid = float(np.linalg.norm(y - A @ x) / max(np.linalg.norm(y), 1e-300))
    return x, resid


def exhaustive_grid_recover(y, codebooks, grid, sparsities, cfg=None):
    """Minimum-residual support search over all on-grid delay combinations.

    Parameters
    ----------
    y : Measurement or (N,) array
    codebooks : sequence of Codebook
    grid : GridSpec
    sparsities : per-user path counts to search for
    cfg : OracleConfig

    Returns
    -------
    (delay_sets, blocks, residual) for the best combination; delay_sets is a
    tuple per user of on-grid delays, blocks the per-user list of c*f
    vectors from the least-squares fit.
    """
    cfg = cfg or OracleConfig()
    if sum(sparsities) > cfg.max_total_paths:
        raise BudgetExceededError(sum(sparsities), cfg.max_total_paths)
    budget = 1
    for s in sparsities:
        budget *= comb(cfg.grid_points, s)
    if budget > cfg.budget_limit:
        raise BudgetExceededError(budget, cfg.budget_limit)

    y = as_measurement_vector(y)
    taus_grid = [g / cfg.grid_points for g in range(cfg.grid_points)]
    per_user = [list(combinations(taus_grid, s)) for s in sparsities]
    best = None
    for combo in product(*per_user):
        x, resid = naive_least_squares(y, codebooks, combo, grid)
        if best is None or resid < best[2]:
            blocks = []
            pos = 0
            for cb, taus in zip(codebooks, combo):
                user_blocks = []
                for _ in taus:
                    user_blocks.append(x[pos : pos + cb.k].copy())
                    pos += cb.k
                blocks.append(user_blocks)
            best = (combo, blocks, resid)
    return best


def direct_adjoint_pair(lifted, lam, codebooks):
    """Both sides of the adjoint identity, by plain double loops.

    Returns (Re<B(H), lam>, Re sum_i <H_i, (B^Adj lam)_i>) under the
    conjugation-free pairing.
    """
    lam = np.asarray(lam, dtype=complex)
    mats = lifted.matrices if hasattr(lifted, "matrices") else tuple(lifted)
    N = lam.size
    # forward side: y_n = sum_i sum_l H_i(l, n) b_n^i(l), then sum_n y_n lam_n
    lhs = 0.0 + 0.0j
    for pos in range(N):
        y_n = 0.0 + 0.0j
        for H, cb in zip(mats, codebooks):
            for l in range(cb.k):
                y_n += H[l, pos] * cb.entries[pos, l]
        lhs += y_n * lam[pos]
    # adjoint side: sum_i sum_{l,n} H_i(l, n) * (lam_n b_n^i(l))
    rhs = 0.0 + 0.0j
    for H, cb in zip(mats, codebooks):
        for pos in range(N):
            for l in range(cb.k):
                rhs += H[l, pos] * (lam[pos] * cb.entries[pos, l])
    return float(np.real(lhs)), float(np.real(rhs))


def finite_difference_kernel_check(order, M, tau_grid=None, step=1e-5):
    """Central finite differences of the kernel derivative chain.

    Compares (K^(order-1)(t+h) - K^(order-1)(t-h)) / 2h against K^(order)(t)
    over tau_grid; returns the maximum discrepancy normalized by M**order.
    """
    from .certificate import g_weights, kernel_scalar

    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    if tau_grid is None:
        tau_grid = np.linspace(0.0, 1.0, 257, endpoint=False)
    w = g_weights(M)
    taus = np.asarray(tau_grid, dtype=float)
    lo = kernel_scalar(taus - step, order - 1, M, w)
    hi = kernel_scalar(taus + step, order - 1, M, w)
    fd = (hi - lo) / (2.0 * step)
    exact = kernel_scalar(taus, order, M, w)
    return float(np.max(np.abs(fd - exact)) / M ** order)
