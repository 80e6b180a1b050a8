"""Frequency-domain signal model for multi-user sparse-multipath mixtures.

The receiver observes N = 4M + 1 uniform frequency samples indexed by
n = -2M, ..., 2M (array position n + 2M everywhere).  Each user i transmits
an encoded message x_i = B_i f_i through an s_i-path channel with complex
gains c and normalized delays tau in [0, 1), so that

    y_n = sum_i sum_k  c_k^i * exp(-2j*pi*n*tau_k^i) * b_n^i . f_i

where b_n^i is row n + 2M of the codebook B_i.  The same measurement is
reached linearly through the lifted per-user matrices
H_i = sum_k c_k^i f_i a(tau_k^i)^T, which is what the solver operates on.

Matrix pairings in this module are the conjugation-free Frobenius sum
<A, B> = sum A(i,l) B(i,l); under that pairing ``lift_adjoint`` is the exact
adjoint of ``lift_forward``.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridSpec",
    "Codebook",
    "Channel",
    "Message",
    "LiftedTuple",
    "Measurement",
    "steering_vector",
    "build_lifted",
    "lift_forward",
    "lift_adjoint",
    "synthesize_direct",
    "min_separation",
    "atomic_norm_of_decomposition",
    "wrap_distance",
]


def wrap_distance(a, b):
    """Wrap-around distance min(|a-b|, 1-|a-b|) on the delay circle [0, 1)."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 1.0
    return np.minimum(d, 1.0 - d)


@dataclass(frozen=True)
class GridSpec:
    """Symmetric frequency grid: N = 4M + 1 samples at indices -2M..2M."""

    M: int

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M!r}")
        object.__setattr__(self, "M", int(self.M))

    @property
    def N(self):
        return 4 * self.M + 1

    @property
    def n_indices(self):
        """Frequency indices -2M..2M, aligned with array positions 0..N-1."""
        return np.arange(-2 * self.M, 2 * self.M + 1)

    def pos(self, n):
        """Array position of frequency index n (the single conversion point)."""
        return n + 2 * self.M


@dataclass(frozen=True)
class Codebook:
    """Known per-user encoding matrix; row n + 2M is b_n^i transposed."""

    user_id: int
    entries: np.ndarray  # (N, k) complex

    def __post_init__(self):
        e = np.ascontiguousarray(np.asarray(self.entries, dtype=complex))
        if e.ndim != 2 or e.shape[1] < 1:
            raise ValueError(f"codebook entries must be (N, k) with k >= 1, got {e.shape}")
        if not np.all(np.isfinite(e.view(float))):
            raise ValueError("codebook entries must be finite")
        object.__setattr__(self, "entries", e)

    @property
    def k(self):
        return self.entries.shape[1]

    @property
    def N(self):
        return self.entries.shape[0]


@dataclass(frozen=True)
class Channel:
    """Sparse multipath channel: complex gains and normalized delays."""

    amplitudes: np.ndarray  # (s,) complex, all nonzero
    delays: np.ndarray      # (s,) float in [0, 1), pairwise distinct mod 1

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.amplitudes, dtype=complex))
        t = np.atleast_1d(np.asarray(self.delays, dtype=float))
        if c.shape != t.shape or c.ndim != 1 or c.size < 1:
            raise ValueError("amplitudes and delays must be matching 1-d arrays")
        if np.any(c == 0):
            raise ValueError("path amplitudes must be nonzero")
        if np.any((t < 0) | (t >= 1)):
            raise ValueError("delays must lie in [0, 1)")
        if t.size > 1:
            d = wrap_distance(t[:, None], t[None, :])
            if np.min(d[~np.eye(t.size, dtype=bool)]) <= 0:
                raise ValueError("delays must be pairwise distinct under wrap-around")
        object.__setattr__(self, "amplitudes", c)
        object.__setattr__(self, "delays", t)

    @classmethod
    def from_paths(cls, paths):
        """Build from an iterable of (amplitude, delay) pairs."""
        amps, taus = zip(*paths)
        return cls(np.asarray(amps, dtype=complex), np.asarray(taus, dtype=float))

    @property
    def s(self):
        return self.delays.size

    @property
    def paths(self):
        return list(zip(self.amplitudes, self.delays))


@dataclass(frozen=True)
class Message:
    """Unit-norm message vector; normalized on construction."""

    coeffs: np.ndarray  # (k,) complex, ||coeffs||_2 = 1

    def __post_init__(self):
        f = np.atleast_1d(np.asarray(self.coeffs, dtype=complex))
        if f.ndim != 1 or f.size < 1:
            raise ValueError("message must be a nonempty vector")
        nrm = np.linalg.norm(f)
        if not np.isfinite(nrm) or nrm == 0:
            raise ValueError("message must be finite and nonzero")
        object.__setattr__(self, "coeffs", f / nrm)

    @property
    def k(self):
        return self.coeffs.size


@dataclass(frozen=True)
class LiftedTuple:
    """Per-user lifted matrices H_i (k_i x N)."""

    matrices: tuple

    def __post_init__(self):
        mats = tuple(np.asarray(h, dtype=complex) for h in self.matrices)
        if not mats:
            raise ValueError("lifted tuple must contain at least one matrix")
        object.__setattr__(self, "matrices", mats)

    @property
    def r(self):
        return len(self.matrices)


@dataclass(frozen=True)
class Measurement:
    """Frequency-domain measurement vector on the grid's index convention."""

    y: np.ndarray  # (N,) complex

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.y, dtype=complex))
        if v.ndim != 1:
            raise ValueError("measurement must be a vector")
        object.__setattr__(self, "y", v)


def as_measurement_vector(y):
    """Accept a Measurement or a plain array and return the (N,) vector."""
    return np.asarray(getattr(y, "y", y), dtype=complex)


def steering_vector(tau, grid):
    """Steering vector a(tau) with entries exp(-2j*pi*n*tau), n = -2M..2M.

    Parameters
    ----------
    tau : float
        Normalized delay in [0, 1).
    grid : GridSpec

    Returns
    -------
    (N,) complex ndarray with unit-modulus entries.
    """
    tau = float(tau)
    if not (0.0 <= tau < 1.0):
        raise ValueError(f"tau must lie in [0, 1), got {tau}")
    return np.exp(-2j * np.pi * grid.n_indices * tau)


def build_lifted(channel, message, grid):
    """Lifted matrix H = sum_k c_k * f a(tau_k)^T of one user.

    Returns a (k, N) complex ndarray.
    """
    f = message.coeffs if isinstance(message, Message) else np.asarray(message, dtype=complex)
    # columns of the phase matrix are a(tau_k); (N, s) @ (s,) contracts the paths
    phases = np.exp(-2j * np.pi * np.outer(grid.n_indices, channel.delays))
    h_freq = phases @ channel.amplitudes  # (N,)
    return np.outer(f, h_freq)


def lift_forward(lifted, codebooks):
    """Apply the lifting operator: y_n = sum_i <H_i, b_n^i e_n^T>.

    With the conjugation-free pairing this is y_n = sum_i b_n^i . H_i[:, n].

    Parameters
    ----------
    lifted : LiftedTuple or sequence of (k_i, N) arrays
    codebooks : sequence of Codebook

    Returns
    -------
    (N,) complex ndarray.
    """
    mats = lifted.matrices if isinstance(lifted, LiftedTuple) else tuple(lifted)
    if len(mats) != len(codebooks):
        raise ValueError("user count mismatch between lifted tuple and codebooks")
    y = None
    for H, cb in zip(mats, codebooks):
        H = np.asarray(H, dtype=complex)
        if H.shape != (cb.k, cb.N):
            raise ValueError(
                f"user {cb.user_id}: lifted matrix shape {H.shape} != (k, N) = {(cb.k, cb.N)}"
            )
        contrib = np.sum(cb.entries * H.T, axis=1)
        y = contrib if y is None else y + contrib
    return y


def lift_adjoint(lam, codebooks):
    """Adjoint of the lifting operator: (B^Adj lam)_i = sum_n lam_n b_n^i e_n^T.

    Column n + 2M of user i's output is lam_n * b_n^i; exact adjoint of
    ``lift_forward`` under the conjugation-free pairing.

    Returns a LiftedTuple of (k_i, N) matrices.
    """
    lam = np.asarray(lam, dtype=complex)
    mats = []
    for cb in codebooks:
        if lam.shape != (cb.N,):
            raise ValueError(f"lambda length {lam.shape} != N = {cb.N}")
        mats.append((cb.entries * lam[:, None]).T.copy())
    return LiftedTuple(tuple(mats))


def synthesize_direct(channels, messages, codebooks, grid):
    """Exact clean measurement, summed directly per user and per path.

    Independent of the lifting code path: computes h_i = sum_k c_k a(tau_k)
    and x_i = B_i f_i, then y = sum_i h_i * x_i elementwise.

    Returns
    -------
    (N,) complex ndarray.
    """
    if not (len(channels) == len(messages) == len(codebooks)):
        raise ValueError("channels, messages and codebooks must have equal length")
    n = grid.n_indices
    y = np.zeros(grid.N, dtype=complex)
    for ch, msg, cb in zip(channels, messages, codebooks):
        f = msg.coeffs if isinstance(msg, Message) else np.asarray(msg, dtype=complex)
        if cb.N != grid.N or cb.k != f.size:
            raise ValueError(f"user {cb.user_id}: codebook shape inconsistent with grid/message")
        h = np.exp(-2j * np.pi * np.outer(n, ch.delays)) @ ch.amplitudes
        x = cb.entries @ f
        y += h * x
    return y


def min_separation(delays):
    """Smallest pairwise wrap-around distance; 0.5 for fewer than two delays."""
    t = np.atleast_1d(np.asarray(delays, dtype=float))
    if t.size < 2:
        return 0.5
    d = wrap_distance(t[:, None], t[None, :])
    return float(np.min(d[~np.eye(t.size, dtype=bool)]))


def atomic_norm_of_decomposition(channel, message=None):
    """Atomic-norm value sum_k |c_k| of a given unit-message decomposition.

    Serves as the strong-duality reference on exactly recoverable instances.
    """
    if message is not None and not isinstance(message, Message):
        Message(np.asarray(message))  # normalizes or raises; value unused
    return float(np.sum(np.abs(channel.amplitudes)))
