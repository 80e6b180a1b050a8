"""Delay and message recovery from a solved dual vector.

Given the dual vector lambda, user i's vector-valued dual polynomial

    q_i(tau) = sum_n lambda_n exp(2j*pi*n*tau) b_n^i

attains unit norm exactly at that user's delays on exactly recovered
instances.  Delays are extracted either by unit-circle root finding on the
scalar polynomial p_i(z) = 1 - sum_k u_k^i z^k (whose coefficients u_k^i
are autocorrelations of lambda weighted by codebook row inner products, so
that p_i(e^{2j*pi*tau}) = 1 - ||q_i(tau)||^2), or by scanning ||q_i|| on a
fine grid; both finish with a Newton polish on d||q_i||^2/dtau = 0.

Amplitudes and messages then come from one least-squares solve of the
linear system whose column blocks are exp(-2j*pi*n*tau_hat) b_n^i, followed
by a rank-1 consolidation of each user's stacked c*f blocks.
"""

from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.linalg as sla

from .model import as_measurement_vector, wrap_distance

__all__ = [
    "RecoverOptions",
    "GramPoly",
    "DelayEstimate",
    "RecoveryResult",
    "UserDecode",
    "OverParameterizedError",
    "dual_polynomial",
    "gram_coefficients",
    "delays_by_roots",
    "delays_by_grid",
    "least_squares_amplitudes",
    "decode_messages",
]


class OverParameterizedError(ValueError):
    """Raised when the least-squares unknown count exceeds the sample count."""


@dataclass
class RecoverOptions:
    """Knobs for delay extraction.

    root_radius_tol: accept roots with | |z| - 1 | below this (1e-3 suits
    noiseless solves, 5e-2 noisy ones).  threshold: when set, drop delay
    candidates whose polished score ||q(tau)|| falls below 1 - threshold.
    max_paths: optional cap on delays kept per user (highest score first).
    amplitude_prune: when set, drop per-user delay candidates whose fitted
    block energy falls below this fraction of the user's strongest block,
    then refit; separates true paths from the zero-amplitude touch points a
    noisy dual solution can produce (their scores tie at one, their fitted
    amplitudes do not).
    """

    root_radius_tol: float = 1e-3
    threshold: float = None
    grid_size: int = 4096
    max_paths: int = None
    newton_steps: int = 12
    amplitude_prune: float = None


@dataclass
class GramPoly:
    """Coefficients u_k of ||q_i(tau)||^2 = sum_k u_k e^{2j pi k tau}."""

    user_id: int
    coefficients: np.ndarray  # (8M + 1,) complex, index k + 4M
    M: int

    @property
    def orders(self):
        return np.arange(-4 * self.M, 4 * self.M + 1)


@dataclass
class DelayEstimate:
    """Per-user delay estimates with their dual-polynomial scores."""

    user_id: int
    delays: np.ndarray  # sorted, in [0, 1)
    scores: np.ndarray  # ||q_i(tau_hat)||_2 per delay


@dataclass
class UserDecode:
    """Decoded quantities for one user."""

    user_id: int
    amplitude_magnitudes: np.ndarray  # (s_hat,)
    message_estimate: np.ndarray      # unit k-vector, canonical phase
    message_magnitudes: np.ndarray    # (k,)
    symbols: np.ndarray = None        # integer k-vector when decoded
    degenerate: bool = False


@dataclass
class RecoveryResult:
    """Per-user decodes plus the shared least-squares residual."""

    users: list
    ls_residual: float
    rank_deficient: bool = False


def dual_polynomial(lam, codebook, tau, derivative=False):
    """Evaluate q_i(tau) = sum_n lambda_n e^{2j pi n tau} b_n^i directly.

    Parameters
    ----------
    lam : (N,) complex dual vector
    codebook : Codebook
    tau : float or 1-d array of floats in [0, 1)
    derivative : bool
        Also return dq/dtau = sum_n (2j pi n) lambda_n e^{2j pi n tau} b_n^i.

    Returns
    -------
    (k,) vector for scalar tau, (T, k) for vector tau; with ``derivative``
    a (value, derivative) pair of the same shapes.
    """
    lam = np.asarray(lam, dtype=complex)
    N = codebook.N
    if lam.shape != (N,):
        raise ValueError(f"lambda length {lam.shape} != N = {N}")
    M = (N - 1) // 4
    n = np.arange(-2 * M, 2 * M + 1)
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    E = np.exp(2j * np.pi * np.outer(taus, n))  # (T, N)
    q = (E * lam) @ codebook.entries
    if not derivative:
        return q[0] if np.isscalar(tau) or np.ndim(tau) == 0 else q
    dq = (E * (lam * 2j * np.pi * n)) @ codebook.entries
    if np.isscalar(tau) or np.ndim(tau) == 0:
        return q[0], dq[0]
    return q, dq


def gram_coefficients(lam, codebook):
    """Autocorrelation coefficients u_k = sum_l lam_l lam*_{l-k} (b_{l-k})^H b_l.

    Out-of-range indices contribute zero; Hermitian symmetry u_{-k} =
    conj(u_k) is enforced by averaging.
    """
    lam = np.asarray(lam, dtype=complex)
    N = codebook.N
    if lam.shape != (N,):
        raise ValueError(f"lambda length {lam.shape} != N = {N}")
    M = (N - 1) // 4
    W = lam[:, None] * codebook.entries  # row l is lam_l b_l^T
    u = np.zeros(8 * M + 1, dtype=complex)
    for k in range(N):
        # u_k = sum_l <W[l-k], W[l]> over valid l
        val = np.sum(W[: N - k].conj() * W[k:])
        u[4 * M + k] = val
        u[4 * M - k] = np.conj(val)
    u0 = u[4 * M].real  # u_0 is real and nonnegative by construction
    u[4 * M] = u0
    return GramPoly(user_id=codebook.user_id, coefficients=u, M=M)


def _gram_norm2(gram, taus):
    """||q(tau)||^2 and its first two tau-derivatives from the u_k series."""
    k = gram.orders
    u = gram.coefficients
    E = np.exp(2j * np.pi * np.outer(np.atleast_1d(taus), k))
    base = 2j * np.pi * k
    v = (E * u).sum(axis=1).real
    d1 = (E * (u * base)).sum(axis=1).real
    d2 = (E * (u * base ** 2)).sum(axis=1).real
    return v, d1, d2


def _newton_polish(gram, tau0, steps):
    """Newton iterations for d||q||^2/dtau = 0 starting at tau0."""
    tau = float(tau0) % 1.0
    for _ in range(steps):
        _v, d1, d2 = _gram_norm2(gram, tau)
        if d2[0] >= 0.0:  # not locally concave; keep the current point
            break
        step = d1[0] / d2[0]
        tau = (tau - step) % 1.0
        if abs(step) < 1e-15:
            break
    return tau


def _finalize_estimate(gram, user_id, taus, opts, dedupe_radius):
    """Polish, score, filter and deduplicate candidate delays."""
    polished = [_newton_polish(gram, t, opts.newton_steps) for t in taus]
    out_t, out_s = [], []
    for t in polished:
        v = _gram_norm2(gram, t)[0][0]
        score = np.sqrt(max(v, 0.0))
        if opts.threshold is not None and score < 1.0 - opts.threshold:
            continue
        dup = any(wrap_distance(t, t2) < dedupe_radius for t2 in out_t)
        if dup:
            continue
        out_t.append(t)
        out_s.append(score)
    if opts.max_paths is not None and len(out_t) > opts.max_paths:
        keep = np.argsort(out_s)[::-1][: opts.max_paths]
        out_t = [out_t[i] for i in sorted(keep)]
        out_s = [out_s[i] for i in sorted(keep)]
    order = np.argsort(out_t)
    return DelayEstimate(
        user_id=user_id,
        delays=np.asarray(out_t, dtype=float)[order],
        scores=np.asarray(out_s, dtype=float)[order],
    )


def delays_by_roots(gram, opts=None):
    """Delay estimates from unit-circle roots of p_i(z) = 1 - sum u_k z^k.

    Forms z^{4M} p_i(z), takes companion-matrix roots, keeps those within
    ``root_radius_tol`` of the unit circle, clusters angles within 1/(32M)
    (tangential zeros split into conjugate-reciprocal near-pairs), maps each
    cluster to its mean angle and Newton-polishes on d||q||^2/dtau = 0.

    An empty estimate is a valid outcome, not an error.
    """
    opts = opts or RecoverOptions()
    u = gram.coefficients
    M = gram.M
    if not np.all(np.isfinite(u.view(float))):
        raise ValueError("gram coefficients must be finite")
    # z^{4M} p(z): coefficient of z^j is -u_{j-4M}, plus 1 at j = 4M
    coeff = -u.copy()
    coeff[4 * M] += 1.0
    if np.max(np.abs(coeff)) == 0:
        return DelayEstimate(gram.user_id, np.zeros(0), np.zeros(0))
    roots = np.roots(coeff[::-1])
    if roots.size == 0:
        return DelayEstimate(gram.user_id, np.zeros(0), np.zeros(0))
    keep = np.abs(np.abs(roots) - 1.0) <= opts.root_radius_tol
    roots = roots[keep]
    if roots.size == 0:
        return DelayEstimate(gram.user_id, np.zeros(0), np.zeros(0))

    angles = np.sort((np.angle(roots) / (2 * np.pi)) % 1.0)
    tol = 1.0 / (32.0 * M)
    # circular clustering: cut at gaps larger than tol
    gaps = np.diff(angles, append=angles[0] + 1.0)
    cut = np.nonzero(gaps > tol)[0]
    clusters = []
    if cut.size == 0:
        clusters.append(angles)
    else:
        start = (cut[-1] + 1) % angles.size
        rolled = np.roll(angles, -start)
        rolled[rolled < rolled[0]] += 1.0
        bounds = np.nonzero(np.diff(rolled, append=rolled[0] + 1.0) > tol)[0]
        prev = 0
        for b in bounds:
            clusters.append(rolled[prev : b + 1] % 1.0)
            prev = b + 1
    centers = []
    for cl in clusters:
        ref = cl[0]
        centers.append((ref + np.mean((cl - ref + 0.5) % 1.0 - 0.5)) % 1.0)
    return _finalize_estimate(gram, gram.user_id, centers, opts,
                              dedupe_radius=1.0 / (32.0 * M))


def delays_by_grid(lam, codebook, grid_size=None, threshold=1e-3, opts=None):
    """Delay estimates from strict local maxima of ||q_i|| on a uniform grid.

    Local maxima with value >= 1 - threshold are Newton-polished and
    deduplicated within half a grid cell.
    """
    opts = opts or RecoverOptions()
    gram = gram_coefficients(lam, codebook)
    N = codebook.N
    G = int(grid_size or max(opts.grid_size, 8 * N))
    if G < 8 * N:
        raise ValueError(f"grid_size must be at least 8N = {8 * N}")
    if not (0.0 <= threshold < 1.0):
        raise ValueError("threshold must lie in [0, 1)")
    taus = np.arange(G) / G
    v = _gram_norm2(gram, taus)[0]
    norms = np.sqrt(np.maximum(v, 0.0))
    left = np.roll(norms, 1)
    right = np.roll(norms, -1)
    is_max = (norms > left) & (norms > right) & (norms >= 1.0 - threshold)
    cand = taus[is_max]
    if cand.size == 0:
        return DelayEstimate(codebook.user_id, np.zeros(0), np.zeros(0))
    sub_opts = RecoverOptions(
        root_radius_tol=opts.root_radius_tol,
        threshold=threshold,
        grid_size=G,
        max_paths=opts.max_paths,
        newton_steps=opts.newton_steps,
    )
    return _finalize_estimate(gram, codebook.user_id, cand, sub_opts,
                              dedupe_radius=0.5 / G)


def _system_matrix(codebooks, delay_estimates, grid):
    cols = []
    n = grid.n_indices
    for cb, est in zip(codebooks, delay_estimates):
        for tau in est.delays:
            cols.append(np.exp(-2j * np.pi * n * tau)[:, None] * cb.entries)
    if not cols:
        return np.zeros((grid.N, 0), dtype=complex)
    return np.hstack(cols)


def least_squares_amplitudes(y, codebooks, delay_estimates, grid):
    """Solve the stacked linear system for the c_l^i f_i blocks.

    Row n of the system concatenates exp(-2j pi n tau_hat_l^i) (b_n^i)^T
    blocks; solved by an SVD-based least squares with singular values below
    1e-10 * sigma_max treated as zero.

    Returns
    -------
    blocks : list (per user) of lists of (k_i,) complex vectors c_l f_i
    residual : float, ||y - A x|| / ||y||
    rank_deficient : bool
    """
    y = as_measurement_vector(y)
    N = grid.N
    unknowns = sum(cb.k * est.delays.size for cb, est in zip(codebooks, delay_estimates))
    if unknowns > N:
        raise OverParameterizedError(
            f"{unknowns} unknowns exceed the {N} available samples"
        )
    A = _system_matrix(codebooks, delay_estimates, grid)
    if unknowns == 0:
        blocks = [[] for _ in codebooks]
        return blocks, 1.0 if np.linalg.norm(y) > 0 else 0.0, False
    x, _res, rank, _sv = sla.lstsq(A, y, cond=1e-10, check_finite=False)
    resid = float(np.linalg.norm(y - A @ x) / max(np.linalg.norm(y), 1e-300))
    blocks = []
    pos = 0
    for cb, est in zip(codebooks, delay_estimates):
        user_blocks = []
        for _ in range(est.delays.size):
            user_blocks.append(x[pos : pos + cb.k])
            pos += cb.k
        blocks.append(user_blocks)
    return blocks, resid, bool(rank < unknowns)


def _ask_codewords(k, order):
    """All nonzero integer vectors in {0..order-1}^k, largest-norm last."""
    words = np.array(list(product(range(order), repeat=k)), dtype=float)[1:]
    return words


def _decode_symbols(f_hat, order, k):
    """Nearest normalized ASK codeword; exhaustive when the alphabet is small.

    Ties between collinear codewords break toward the smallest norm
    (the gcd-primitive representative).
    """
    if k * np.log2(order) <= 16:
        words = _ask_codewords(k, order)
        norms = np.linalg.norm(words, axis=1)
        scores = np.abs(words @ f_hat.conj()) / norms
        best = np.max(scores)
        tied = np.nonzero(scores >= best - 1e-12)[0]
        pick = tied[np.argmin(norms[tied])]
        return words[pick].astype(int)
    # scale fit: candidate scales are the feasible codeword norms sqrt(q)
    mags = np.abs(f_hat)
    best_err = np.inf
    best_sym = np.zeros(k, dtype=int)
    for q in range(1, k * (order - 1) ** 2 + 1):
        scale = np.sqrt(q)
        sym = np.clip(np.rint(scale * mags), 0, order - 1)
        if not sym.any():
            continue
        err = np.linalg.norm(scale * mags - sym)
        if err < best_err:
            best_err = err
            best_sym = sym.astype(int)
    return best_sym


def decode_messages(blocks, codebooks, constellation=None):
    """Consolidate per-user c*f blocks into magnitudes, message and symbols.

    User i's blocks are stacked as a k_i x s_hat_i matrix whose best rank-1
    factorization gives the unit message estimate (canonical phase: its
    largest-magnitude entry is made real nonnegative) and the amplitude
    magnitudes |c_l| as singular value times right-vector magnitudes.  With
    an ASK ``constellation`` order given, symbols are decoded per user.

    Returns a list of UserDecode (one per user).
    """
    users = []
    for cb, user_blocks in zip(codebooks, blocks):
        k = cb.k
        if len(user_blocks) == 0:
            users.append(UserDecode(
                user_id=cb.user_id,
                amplitude_magnitudes=np.zeros(0),
                message_estimate=np.zeros(k, dtype=complex),
                message_magnitudes=np.zeros(k),
                symbols=None if constellation is None else np.zeros(k, dtype=int),
                degenerate=True,
            ))
            continue
        V = np.column_stack([np.asarray(b, dtype=complex) for b in user_blocks])
        if not np.any(V):
            users.append(UserDecode(
                user_id=cb.user_id,
                amplitude_magnitudes=np.zeros(V.shape[1]),
                message_estimate=np.zeros(k, dtype=complex),
                message_magnitudes=np.zeros(k),
                symbols=None if constellation is None else np.zeros(k, dtype=int),
                degenerate=True,
            ))
            continue
        Uv, sv, Vh = np.linalg.svd(V, full_matrices=False)
        f_hat = Uv[:, 0]
        amp = sv[0] * np.abs(Vh[0, :])
        lead = int(np.argmax(np.abs(f_hat)))
        phase = f_hat[lead] / abs(f_hat[lead])
        f_hat = f_hat * np.conj(phase)
        symbols = None
        if constellation is not None:
            symbols = _decode_symbols(f_hat, int(constellation), k)
        users.append(UserDecode(
            user_id=cb.user_id,
            amplitude_magnitudes=amp,
            message_estimate=f_hat,
            message_magnitudes=np.abs(f_hat),
            symbols=symbols,
            degenerate=False,
        ))
    return users
