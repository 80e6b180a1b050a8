"""Operator-splitting solver for the delay-localization dual SDP.

The problem: over lambda in C^N and Hermitian Q (one per user, or one shared),

    maximize   Re<lambda, y> - eta * ||lambda||_2
    subject to [[Q_i, X_i^H], [X_i, I_{k_i}]] >= 0   for every user i,
               <T(e_q), Q_i> = 1_{q=0}               for q = -N+1 .. N-1,

where X_i = (B^Adj lambda)_i has a single nonzero column per frequency
(column n + 2M equals lambda_n b_n^i).  <lambda, y> is the standard
(conjugated) pairing Re(lambda^H y).

Splitting scheme
----------------
Consensus variables Z_i mirror the block matrices S_i(lambda, Q_i); the
iteration alternates

  (a) joint (lambda, Q) update: the lambda_n subproblem decouples per
      frequency and has a closed form combining y_n with the off-diagonal
      blocks of Z - U, plus a scalar proximal shrink for the eta-penalty;
      Q_i is the Toeplitz-affine projection of the top-left block of
      Z_i - U_i; the identity block is enforced exactly,
  (b) Z_i <- project_psd(S_i + U_i) with over-relaxation,
  (c) dual ascent U_i <- U_i + S_i - Z_i,

with optional residual balancing of the penalty parameter (factor 2 when
the primal/dual residual ratio exceeds 10, at most 10 adaptations).
"""

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import as_measurement_vector

__all__ = [
    "SolverOptions",
    "DualSolution",
    "FeasibilityReport",
    "solve_noiseless",
    "solve_noisy",
    "project_psd",
    "project_toeplitz_affine",
    "check_dual_feasibility",
]

logger = logging.getLogger(__name__)

STATUS_CONVERGED = "converged"
STATUS_MAX_ITERS = "max_iters"
STATUS_NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class SolverOptions:
    """Tuning knobs for the splitting iteration.

    ``penalty`` is a dimensionless multiplier: the working penalty is
    penalty * 0.4 * ||y||_2, which keeps the iteration scale-free in the
    measurement magnitude (scaling y scales the optimal objective but not
    the optimizer, so the penalty must track the data norm).
    """

    penalty: float = 1.0
    max_iters: int = 50000
    eps_abs: float = 1e-8
    eps_rel: float = 1e-7
    over_relaxation: float = 1.6
    shared_q: bool = False
    residual_balancing: bool = True
    log_every: int = 0  # 0 disables iteration logs

    def __post_init__(self):
        if self.penalty <= 0 or self.eps_abs <= 0 or self.eps_rel <= 0:
            raise ValueError("penalty and tolerances must be positive")
        if not (1.0 <= self.over_relaxation <= 1.8):
            raise ValueError("over_relaxation must lie in [1, 1.8]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")


@dataclass
class DualSolution:
    """Converged (or best-effort) dual iterate and solve diagnostics."""

    lam: np.ndarray            # (N,) complex
    Q_blocks: list             # Hermitian N x N blocks; length r, or 1 if shared
    objective: float           # Re<lam, y> - eta ||lam||_2
    primal_residual: float
    dual_residual: float
    iterations: int
    status: str                # converged | max_iters | numerical_failure
    eta: float = 0.0
    shared_q: bool = False


@dataclass
class FeasibilityReport:
    """Measured feasibility of a dual iterate; thresholds live in tests."""

    max_dual_poly_norm: float
    min_block_eigenvalue: float
    toeplitz_residual: float


def project_psd(H):
    """Nearest (Frobenius) positive semidefinite matrix.

    Symmetrizes the input, clamps negative eigenvalues of the Hermitian
    part to zero and reassembles.  Raises ``numpy.linalg.LinAlgError`` if
    the eigensolver fails.
    """
    H = np.asarray(H, dtype=complex)
    A = 0.5 * (H + H.conj().T)
    w, V = np.linalg.eigh(A)
    np.clip(w, 0.0, None, out=w)
    P = (V * w) @ V.conj().T
    return 0.5 * (P + P.conj().T)


@lru_cache(maxsize=32)
def _diag_index(n):
    """Flattened diagonal labels (offset + n - 1) and per-diagonal lengths."""
    rows, cols = np.indices((n, n))
    off = (cols - rows).ravel() + n - 1
    counts = np.bincount(off, minlength=2 * n - 1).astype(float)
    return off, counts


def project_toeplitz_affine(Q):
    """Orthogonal projection onto {Hermitian Q : q-th diagonal sums to 1_{q=0}}.

    Every diagonal is shifted by (target - current sum) / length; the
    Hermitian and diagonal-shift projections commute, so symmetrizing first
    yields the projection onto the intersection.
    """
    Q = np.asarray(Q, dtype=complex)
    n = Q.shape[0]
    if Q.shape != (n, n):
        raise ValueError("Q must be square")
    A = 0.5 * (Q + Q.conj().T)
    off, counts = _diag_index(n)
    flat = A.ravel()
    sums = np.bincount(off, weights=flat.real, minlength=2 * n - 1).astype(complex)
    sums += 1j * np.bincount(off, weights=flat.imag, minlength=2 * n - 1)
    target = np.zeros(2 * n - 1, dtype=complex)
    target[n - 1] = 1.0
    shift = (target - sums) / counts
    return A + shift[off].reshape(n, n)


def _project_psd_inplace(Mtx):
    """PSD projection used inside the solver loop.

    Full Hermitian eigendecomposition, then reconstruction from whichever
    side of the spectrum has fewer eigenvalues (subtracting the negative
    part is a thin matmul once the iterate is nearly feasible).
    """
    A = 0.5 * (Mtx + Mtx.conj().T)
    w, V = np.linalg.eigh(A)
    neg = int(np.searchsorted(w, 0.0))
    if neg == 0:
        return A
    if neg <= w.size // 2:
        Vn = V[:, :neg]
        P = A - (Vn * w[:neg]) @ Vn.conj().T
    else:
        Vp = V[:, neg:]
        P = (Vp * w[neg:]) @ Vp.conj().T
    return 0.5 * (P + P.conj().T)


def _shrink_lambda(t, a, eta):
    """Minimize sum a_n |z_n|^2 - 2 Re(conj(z_n) t_n) + eta ||z||_2.

    Closed form z_n = t_n / (a_n + theta) where theta >= 0 solves the scalar
    equation 2 theta ||z(theta)|| = eta; z = 0 when 2||t|| <= eta.
    """
    tn = np.linalg.norm(t)
    if 2.0 * tn <= eta:
        return np.zeros_like(t)

    def phi(theta):
        return 2.0 * theta * np.linalg.norm(t / (a + theta)) - eta

    hi = max(1.0, eta)
    for _ in range(200):
        if phi(hi) >= 0.0:
            break
        hi *= 2.0
    lo = 0.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if phi(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    theta = 0.5 * (lo + hi)
    return t / (a + theta)


def _assemble_block(S, Q, X):
    """Fill S = [[Q, X^H], [X, I]] in place (identity block preset)."""
    n = Q.shape[0]
    S[:n, :n] = Q
    S[n:, :n] = X
    S[:n, n:] = X.conj().T


def solve_noiseless(y, codebooks, grid, opts=None):
    """Solve the noiseless dual SDP; see module docstring for the problem."""
    return solve_noisy(y, codebooks, grid, 0.0, opts)


def solve_noisy(y, codebooks, grid, eta, opts=None):
    """Solve the dual SDP with objective Re<lambda, y> - eta ||lambda||_2.

    Parameters
    ----------
    y : Measurement or (N,) complex array
    codebooks : sequence of Codebook
    grid : GridSpec
    eta : float
        Nonnegative noise-norm bound; 0 reproduces the noiseless solve
        bit-for-bit.
    opts : SolverOptions, optional

    Returns
    -------
    DualSolution
        ``status`` is "converged" when both residuals fall below
        eps_abs + eps_rel * (scale of the iterates); "max_iters" returns the
        best iterate seen; NaNs yield "numerical_failure".
    """
    opts = opts or SolverOptions()
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    y = as_measurement_vector(y)
    N = grid.N
    if y.shape != (N,):
        raise ValueError(f"measurement length {y.shape} != N = {N}")
    if not np.all(np.isfinite(y.view(float))):
        raise ValueError("measurement must be finite")
    r = len(codebooks)
    if r < 1:
        raise ValueError("at least one codebook required")
    for cb in codebooks:
        if cb.N != N:
            raise ValueError(f"user {cb.user_id}: codebook rows {cb.N} != N = {N}")

    Bs = [cb.entries for cb in codebooks]
    Bconj = [B.conj() for B in Bs]
    ks = [cb.k for cb in codebooks]
    dims = [N + k for k in ks]
    weight = sum(np.sum(np.abs(B) ** 2, axis=1) for B in Bs)  # (N,) real
    if np.any(weight <= 0):
        raise ValueError("every frequency must be hit by at least one codebook row")

    n_q = 1 if opts.shared_q else r
    Q = [np.eye(N, dtype=complex) / N for _ in range(n_q)]
    Z = []
    for k, d in zip(ks, dims):
        z0 = np.zeros((d, d), dtype=complex)
        z0[:N, :N] = np.eye(N) / N
        z0[N:, N:] = np.eye(k)
        Z.append(z0)
    U = [np.zeros((d, d), dtype=complex) for d in dims]
    S = []
    for k, d in zip(ks, dims):
        s0 = np.zeros((d, d), dtype=complex)
        s0[N:, N:] = np.eye(k)
        S.append(s0)
    lam = np.zeros(N, dtype=complex)

    ny = float(np.linalg.norm(y))
    rho = float(opts.penalty) * (0.4 * ny if ny > 0 else 1.0)
    alpha = float(opts.over_relaxation)
    sqrt_dims = float(np.sqrt(sum(d * d for d in dims)))
    adaptations = 0
    status = STATUS_MAX_ITERS
    r_prim = np.inf
    r_dual = np.inf
    best_metric = np.inf
    best_state = None
    it = 0

    def objective_of(v):
        return float(np.real(np.vdot(v, y)) - eta * np.linalg.norm(v))

    for it in range(1, opts.max_iters + 1):
        # (a) joint (lambda, Q) update from Z - U
        d_lin = np.zeros(N, dtype=complex)
        for i in range(r):
            C = Z[i][N:, :N] - U[i][N:, :N]          # (k, N) mirror of X_i
            d_lin += np.sum(Bconj[i] * C.T, axis=1)
        t_lin = rho * d_lin + 0.5 * y
        if eta == 0.0:
            lam = t_lin / (rho * weight)
        else:
            lam = _shrink_lambda(t_lin, rho * weight, eta)

        if opts.shared_q:
            G = sum(Z[i][:N, :N] - U[i][:N, :N] for i in range(r)) / r
            Q[0] = project_toeplitz_affine(G)
        else:
            for i in range(r):
                Q[i] = project_toeplitz_affine(Z[i][:N, :N] - U[i][:N, :N])

        # assemble S_i and run the over-relaxed Z / U updates
        rp2 = 0.0
        rd2 = 0.0
        s_norm2 = 0.0
        z_norm2 = 0.0
        u_norm2 = 0.0
        failed = False
        for i in range(r):
            X = (Bs[i] * lam[:, None]).T
            _assemble_block(S[i], Q[0] if opts.shared_q else Q[i], X)
            S_hat = alpha * S[i] + (1.0 - alpha) * Z[i]
            Mtx = S_hat + U[i]
            try:
                Z_new = _project_psd_inplace(Mtx)
            except np.linalg.LinAlgError:
                failed = True
                break
            U[i] += S_hat - Z_new
            rd2 += float(np.linalg.norm(Z_new - Z[i]) ** 2)
            Z[i] = Z_new
            rp2 += float(np.linalg.norm(S[i] - Z_new) ** 2)
            s_norm2 += float(np.linalg.norm(S[i]) ** 2)
            z_norm2 += float(np.linalg.norm(Z_new) ** 2)
            u_norm2 += float(np.linalg.norm(U[i]) ** 2)
        if failed:
            status = STATUS_NUMERICAL_FAILURE
            break

        r_prim = np.sqrt(rp2)
        r_dual = rho * np.sqrt(rd2)
        eps_pri = sqrt_dims * opts.eps_abs + opts.eps_rel * max(
            np.sqrt(s_norm2), np.sqrt(z_norm2)
        )
        eps_dual = sqrt_dims * opts.eps_abs + opts.eps_rel * rho * np.sqrt(u_norm2)

        if opts.log_every and it % opts.log_every == 0:
            logger.info(
                "iter=%d r_prim=%.6e r_dual=%.6e obj=%.9e",
                it, r_prim, r_dual, objective_of(lam),
            )

        if r_prim <= eps_pri and r_dual <= eps_dual:
            status = STATUS_CONVERGED
            break

        if it % 50 == 0:
            if not np.all(np.isfinite(lam.view(float))):
                status = STATUS_NUMERICAL_FAILURE
                break
            metric = max(r_prim / max(eps_pri, 1e-300), r_dual / max(eps_dual, 1e-300))
            if metric < 0.98 * best_metric:
                best_metric = metric
                best_state = ([q.copy() for q in Q], lam.copy(), r_prim, r_dual, it)
            if opts.residual_balancing and adaptations < 10:
                if r_prim > 10.0 * r_dual:
                    rho *= 2.0
                    for u in U:
                        u *= 0.5
                    adaptations += 1
                elif r_dual > 10.0 * r_prim:
                    rho *= 0.5
                    for u in U:
                        u *= 2.0
                    adaptations += 1

    if status == STATUS_MAX_ITERS and best_state is not None:
        # keep the tracked best iterate if the final one did not improve on it
        Qb, lamb, rpb, rdb, _itb = best_state
        if max(rpb, rdb) < max(r_prim, r_dual):
            Q, lam, r_prim, r_dual = Qb, lamb, rpb, rdb

    if status == STATUS_NUMERICAL_FAILURE:
        lam = np.where(np.isfinite(lam.view(float)).reshape(-1, 2).all(axis=1), lam, 0)

    return DualSolution(
        lam=lam,
        Q_blocks=[0.5 * (q + q.conj().T) for q in Q],
        objective=objective_of(lam),
        primal_residual=float(r_prim) if np.isfinite(r_prim) else np.inf,
        dual_residual=float(r_dual) if np.isfinite(r_dual) else np.inf,
        iterations=it,
        status=status,
        eta=float(eta),
        shared_q=opts.shared_q,
    )


def check_dual_feasibility(sol, codebooks, grid, tau_grid_size=4096):
    """Report how feasible a dual iterate is; makes no pass/fail judgment.

    Evaluates max_tau ||q_i(tau)||_2 on a uniform grid, the smallest
    eigenvalue over the users' block matrices built from (lambda, Q), and
    the worst Toeplitz diagonal-sum violation of the Q blocks.
    """
    lam = np.asarray(sol.lam, dtype=complex)
    N = grid.N
    taus = np.arange(tau_grid_size) / tau_grid_size
    E = np.exp(2j * np.pi * np.outer(taus, grid.n_indices))  # (G, N)
    El = E * lam
    max_norm = 0.0
    for cb in codebooks:
        qv = El @ cb.entries  # (G, k)
        max_norm = max(max_norm, float(np.max(np.linalg.norm(qv, axis=1))))

    min_eig = np.inf
    for i, cb in enumerate(codebooks):
        Qi = sol.Q_blocks[0] if sol.shared_q else sol.Q_blocks[i]
        X = (cb.entries * lam[:, None]).T
        S = np.zeros((N + cb.k, N + cb.k), dtype=complex)
        S[N:, N:] = np.eye(cb.k)
        _assemble_block(S, Qi, X)
        w = np.linalg.eigvalsh(0.5 * (S + S.conj().T))
        min_eig = min(min_eig, float(w[0]))

    toe = 0.0
    off, _counts = _diag_index(N)
    target = np.zeros(2 * N - 1, dtype=complex)
    target[N - 1] = 1.0
    for Qi in sol.Q_blocks:
        flat = np.asarray(Qi).ravel()
        sums = np.bincount(off, weights=flat.real, minlength=2 * N - 1).astype(complex)
        sums += 1j * np.bincount(off, weights=flat.imag, minlength=2 * N - 1)
        toe = max(toe, float(np.max(np.abs(sums - target))))

    return FeasibilityReport(
        max_dual_poly_norm=max_norm,
        min_block_eigenvalue=min_eig,
        toeplitz_residual=toe,
    )
