"""Instance generation, noise, metrics and the Monte Carlo experiment loop.

Reproducibility contract: all randomness comes from numpy's counter-based
Philox4x64 generator, keyed as ``key = seed + (stream_id << 64)`` with
stream ids instance=1, noise=2, trial=3, so a (seed, stream) pair pins the
entire draw sequence.  Instances are fully determined by their spec; trials
use per-trial seed = base_seed + trial_index and are therefore independent
of execution order.
"""

import time
from dataclasses import dataclass, field, replace
from math import gcd

import numpy as np

from .model import (
    Channel,
    Codebook,
    GridSpec,
    Message,
    min_separation,
    synthesize_direct,
    wrap_distance,
)
from .recovery import (
    OverParameterizedError,
    RecoverOptions,
    decode_messages,
    delays_by_grid,
    delays_by_roots,
    gram_coefficients,
    least_squares_amplitudes,
    RecoveryResult,
    DelayEstimate,
)
from .solver import SolverOptions, solve_noisy, STATUS_NUMERICAL_FAILURE

__all__ = [
    "InstanceSpec",
    "NoiseModel",
    "Instance",
    "ExperimentConfig",
    "TrialResult",
    "ExperimentSummary",
    "rng_stream",
    "gen_instance",
    "add_noise",
    "nmse",
    "ser",
    "match_delays",
    "recover_from_solution",
    "run_trial",
    "run_experiment",
    "emit_tables",
    "dualpoly_table_data",
    "polar_table_data",
]

_STREAMS = {"instance": 1, "noise": 2, "trial": 3}
_MAX_REJECTION_DRAWS = 10 ** 6


def rng_stream(seed, stream):
    """Philox generator for one named stream of a 64-bit seed."""
    key = (int(seed) & 0xFFFFFFFFFFFFFFFF) | (_STREAMS[stream] << 64)
    return np.random.Generator(np.random.Philox(key=key))


def parse_constellation(text):
    """'unit-sphere' -> ('unit-sphere', None); 'ask(4)' -> ('ask', 4)."""
    t = str(text).strip().lower()
    if t == "unit-sphere":
        return "unit-sphere", None
    if t.startswith("ask(") and t.endswith(")"):
        order = int(t[4:-1])
        if order < 2:
            raise ValueError("ASK order must be at least 2")
        return "ask", order
    raise ValueError(f"unknown constellation {text!r}")


@dataclass(frozen=True)
class InstanceSpec:
    """Shape and law of a random instance; fully determines it given seed."""

    r: int
    k: tuple
    s: tuple
    M: int
    min_sep: float = None  # default 1/N
    constellation: str = "unit-sphere"
    amplitude_model: str = "lognormal-band"
    seed: int = 0

    def __post_init__(self):
        ks = tuple(int(v) for v in (self.k if np.iterable(self.k) else [self.k] * self.r))
        ss = tuple(int(v) for v in (self.s if np.iterable(self.s) else [self.s] * self.r))
        if len(ks) != self.r or len(ss) != self.r:
            raise ValueError("k and s must have one entry per user")
        if self.r < 1 or min(ks) < 1 or min(ss) < 1:
            raise ValueError("r, k_i and s_i must be positive")
        object.__setattr__(self, "k", ks)
        object.__setattr__(self, "s", ss)
        parse_constellation(self.constellation)
        if self.amplitude_model not in ("unit-modulus", "lognormal-band"):
            raise ValueError(f"unknown amplitude model {self.amplitude_model!r}")
        sep = self.resolved_min_sep
        if sep * max(ss) >= 0.5:
            raise ValueError("min_sep times the largest path count must stay below 0.5")

    @property
    def grid(self):
        return GridSpec(self.M)

    @property
    def resolved_min_sep(self):
        return self.min_sep if self.min_sep is not None else 1.0 / (4 * self.M + 1)


@dataclass(frozen=True)
class NoiseModel:
    """Noise level derived from an SNR target on a given clean measurement."""

    snr_db: float       # may be inf
    sigma_w: float      # per-entry complex noise std deviation
    eta: float          # high-probability bound on ||w||_2


@dataclass(frozen=True)
class Instance:
    """A drawn instance: ground truth plus the clean measurement."""

    spec: InstanceSpec
    codebooks: tuple
    channels: tuple
    messages: tuple
    symbols: tuple      # per user: int array or None
    y_clean: np.ndarray

    @property
    def grid(self):
        return self.spec.grid


def _draw_delays(rng, s, min_sep):
    for _ in range(_MAX_REJECTION_DRAWS):
        taus = rng.uniform(0.0, 1.0, size=s)
        if min_separation(taus) >= min_sep:
            return np.sort(taus)
    raise RuntimeError(
        f"could not draw {s} delays with separation {min_sep} in "
        f"{_MAX_REJECTION_DRAWS} attempts"
    )


def _draw_symbols(rng, k, order):
    # gcd-primitive vectors only: collinear ASK vectors encode the same
    # unit-norm message and cannot be told apart at the receiver
    for _ in range(_MAX_REJECTION_DRAWS):
        sym = rng.integers(0, order, size=k)
        g = 0
        for v in sym:
            g = gcd(g, int(v))
        if g == 1:
            return sym.astype(int)
    raise RuntimeError("could not draw a primitive symbol vector")


def gen_instance(spec):
    """Draw codebooks, channels and messages; synthesize the clean signal.

    Per user, in order: codebook (i.i.d. real standard normal entries),
    delays (uniform, rejected until the wrap-around separation meets
    spec.min_sep), amplitudes (per amplitude_model, uniform phases), then
    the message (uniform on the complex unit sphere, or a normalized ASK
    symbol vector).  Bit-identical for equal specs.
    """
    rng = rng_stream(spec.seed, "instance")
    grid = spec.grid
    kind, order = parse_constellation(spec.constellation)
    codebooks, channels, messages, symbols = [], [], [], []
    for i in range(spec.r):
        entries = rng.standard_normal((grid.N, spec.k[i]))
        codebooks.append(Codebook(user_id=i, entries=entries.astype(complex)))
        taus = _draw_delays(rng, spec.s[i], spec.resolved_min_sep)
        if spec.amplitude_model == "unit-modulus":
            mags = np.ones(spec.s[i])
        else:  # "lognormal-band": uniform band |c| in [0.5, 1.5]
            mags = rng.uniform(0.5, 1.5, size=spec.s[i])
        phases = np.exp(2j * np.pi * rng.uniform(0.0, 1.0, size=spec.s[i]))
        channels.append(Channel(amplitudes=mags * phases, delays=taus))
        if kind == "unit-sphere":
            f = rng.standard_normal(spec.k[i]) + 1j * rng.standard_normal(spec.k[i])
            messages.append(Message(f))
            symbols.append(None)
        else:
            sym = _draw_symbols(rng, spec.k[i], order)
            messages.append(Message(sym.astype(complex)))
            symbols.append(sym)
    y = synthesize_direct(channels, messages, codebooks, grid)
    return Instance(
        spec=spec,
        codebooks=tuple(codebooks),
        channels=tuple(channels),
        messages=tuple(messages),
        symbols=tuple(symbols),
        y_clean=y,
    )


def add_noise(y_clean, snr_db, grid, seed):
    """Add circular complex Gaussian noise at a target SNR.

    SNR is defined as 10 log10(||y_clean||^2 / (N sigma_w^2)); the returned
    NoiseModel carries the noise-norm bound
    eta = sigma_w sqrt(N + sqrt(2 N log N)) (natural log).
    """
    y_clean = np.asarray(y_clean, dtype=complex)
    N = grid.N
    if y_clean.shape != (N,):
        raise ValueError("y_clean length must equal N")
    if snr_db is None or np.isinf(snr_db):
        return y_clean.copy(), NoiseModel(snr_db=np.inf, sigma_w=0.0, eta=0.0)
    sigma2 = float(np.linalg.norm(y_clean) ** 2) / (N * 10.0 ** (float(snr_db) / 10.0))
    sigma = np.sqrt(sigma2)
    rng = rng_stream(seed, "noise")
    w = (rng.standard_normal(N) + 1j * rng.standard_normal(N)) * (sigma / np.sqrt(2.0))
    eta = sigma * np.sqrt(N + np.sqrt(2.0 * N * np.log(N)))
    return y_clean + w, NoiseModel(snr_db=float(snr_db), sigma_w=sigma, eta=float(eta))


def nmse(f_hat, f):
    """(aligned, magnitude-only) normalized errors ||f_hat - f|| / ||f||.

    The aligned variant first multiplies f_hat by the unit phase that
    minimizes the error; the magnitude variant compares |f_hat| to |f|.
    """
    f_hat = np.asarray(f_hat, dtype=complex)
    f = np.asarray(f, dtype=complex)
    if f_hat.shape != f.shape:
        raise ValueError("length mismatch")
    nf = np.linalg.norm(f)
    if nf == 0:
        raise ValueError("reference message must be nonzero")
    inner = np.vdot(f_hat, f)
    aligned = f_hat * (inner / abs(inner)) if abs(inner) > 0 else f_hat
    a = float(np.linalg.norm(aligned - f) / nf)
    m = float(np.linalg.norm(np.abs(f_hat) - np.abs(f)) / nf)
    return a, m


def ser(symbols_hat, symbols):
    """Fraction of differing symbol entries."""
    a = np.asarray(symbols_hat)
    b = np.asarray(symbols)
    if a.shape != b.shape:
        raise ValueError("length mismatch")
    return float(np.mean(a != b))


def match_delays(estimated, truth, tol):
    """Greedy nearest-neighbor delay matching under wrap-around distance.

    Returns (errors, misses, false_alarms): one wrap error per matched pair
    (threshold tol), unmatched truths count as misses, unmatched estimates
    as false alarms.
    """
    est = list(np.atleast_1d(np.asarray(estimated, dtype=float)))
    tru = list(np.atleast_1d(np.asarray(truth, dtype=float)))
    errors = []
    while est and tru:
        d = wrap_distance(np.asarray(est)[:, None], np.asarray(tru)[None, :])
        idx = np.unravel_index(np.argmin(d), d.shape)
        if d[idx] > tol:
            break
        errors.append(float(d[idx]))
        est.pop(idx[0])
        tru.pop(idx[1])
    return errors, len(tru), len(est)


def recover_from_solution(y, codebooks, grid, sol, method="roots",
                          recover_opts=None, constellation=None):
    """Delay extraction plus least-squares decoding for a solved dual.

    If the estimated supports would over-parameterize the least-squares
    system, lowest-score delays are dropped globally until it is solvable.

    Returns (delay_estimates, RecoveryResult).
    """
    opts = recover_opts or RecoverOptions()
    estimates = []
    for cb in codebooks:
        if method == "roots":
            est = delays_by_roots(gram_coefficients(sol.lam, cb), opts)
        elif method == "grid":
            est = delays_by_grid(sol.lam, cb, grid_size=opts.grid_size,
                                 threshold=opts.threshold if opts.threshold is not None else 1e-3,
                                 opts=opts)
        else:
            raise ValueError(f"unknown method {method!r}")
        estimates.append(est)

    def total_unknowns(ests):
        return sum(cb.k * e.delays.size for cb, e in zip(codebooks, ests))

    while total_unknowns(estimates) > grid.N:
        # drop the globally weakest delay estimate
        worst = None
        for ui, e in enumerate(estimates):
            if e.delays.size == 0:
                continue
            j = int(np.argmin(e.scores))
            if worst is None or e.scores[j] < worst[2]:
                worst = (ui, j, e.scores[j])
        ui, j, _ = worst
        keep = np.ones(estimates[ui].delays.size, dtype=bool)
        keep[j] = False
        estimates[ui] = DelayEstimate(
            user_id=estimates[ui].user_id,
            delays=estimates[ui].delays[keep],
            scores=estimates[ui].scores[keep],
        )

    blocks, resid, deficient = least_squares_amplitudes(y, codebooks, estimates, grid)
    if opts.amplitude_prune:
        pruned = []
        changed = False
        for est, user_blocks in zip(estimates, blocks):
            if not user_blocks:
                pruned.append(est)
                continue
            energy = np.array([np.linalg.norm(b) for b in user_blocks])
            top = energy.max()
            keep = energy >= opts.amplitude_prune * top if top > 0 else energy >= 0
            if not np.all(keep):
                changed = True
            pruned.append(DelayEstimate(user_id=est.user_id,
                                        delays=est.delays[keep],
                                        scores=est.scores[keep]))
        if changed:
            estimates = pruned
            blocks, resid, deficient = least_squares_amplitudes(
                y, codebooks, estimates, grid)
    users = decode_messages(blocks, codebooks, constellation)
    return estimates, RecoveryResult(users=users, ls_residual=resid,
                                     rank_deficient=deficient)


@dataclass
class ExperimentConfig:
    """One Monte Carlo sweep: instance law, solver knobs, sweep values."""

    instance: InstanceSpec
    solver: SolverOptions = field(default_factory=SolverOptions)
    trials: int = 50
    sweep_axis: str = "snr"          # "snr" or "samples"
    snr_db: tuple = (np.inf,)        # sweep values when sweep_axis == "snr"
    m_values: tuple = ()             # sweep values (M) when sweep_axis == "samples"
    fixed_snr_db: float = np.inf     # SNR used for the samples sweep
    method: str = "roots"
    threshold: float = None
    grid_size: int = 4096
    root_radius_tol: float = None    # default: 1e-3 noiseless, 5e-2 noisy
    max_paths: int = None
    amplitude_prune: float = None
    delay_match_tol: float = 1e-3

    def sweep_values(self):
        if self.sweep_axis == "snr":
            return tuple(self.snr_db)
        if self.sweep_axis == "samples":
            return tuple(self.m_values)
        raise ValueError(f"unknown sweep axis {self.sweep_axis!r}")


@dataclass
class TrialResult:
    sweep_value: float
    trial_index: int
    seed: int
    status: str
    nmse_aligned: np.ndarray     # (r,)
    nmse_magnitude: np.ndarray   # (r,)
    ser: np.ndarray              # (r,) or None
    delay_errors: list           # per user list of matched wrap errors
    hits: int
    misses: int
    false_alarms: int
    iterations: int
    wall_time: float


@dataclass
class ExperimentSummary:
    """Per-trial records plus per-sweep-value aggregate means."""

    config: ExperimentConfig
    trials: list
    aggregates: list  # one dict per sweep value


def run_trial(config, sweep_value, trial_index):
    """One generate -> add noise -> solve -> recover -> metrics trial."""
    seed = int(config.instance.seed) + int(trial_index)
    if config.sweep_axis == "snr":
        spec = replace(config.instance, seed=seed)
        snr = sweep_value
    else:
        spec = replace(config.instance, seed=seed, M=int(sweep_value))
        snr = config.fixed_snr_db
    inst = gen_instance(spec)
    grid = inst.grid
    y, noise = add_noise(inst.y_clean, snr, grid, seed)

    t0 = time.perf_counter()
    sol = solve_noisy(y, inst.codebooks, grid, noise.eta, config.solver)
    r = spec.r
    kind, order = parse_constellation(spec.constellation)
    if sol.status == STATUS_NUMERICAL_FAILURE:
        # failed trials: all truths missed, NMSE pinned to one
        return TrialResult(
            sweep_value=float(sweep_value), trial_index=trial_index, seed=seed,
            status=sol.status,
            nmse_aligned=np.ones(r), nmse_magnitude=np.ones(r),
            ser=np.ones(r) if kind == "ask" else None,
            delay_errors=[[] for _ in range(r)],
            hits=0, misses=sum(spec.s), false_alarms=0,
            iterations=sol.iterations, wall_time=time.perf_counter() - t0,
        )

    rtol = config.root_radius_tol
    if rtol is None:
        rtol = 1e-3 if np.isinf(noise.snr_db) else 5e-2
    opts = RecoverOptions(
        root_radius_tol=rtol,
        threshold=config.threshold,
        grid_size=config.grid_size,
        max_paths=config.max_paths,
        amplitude_prune=config.amplitude_prune,
    )
    try:
        estimates, rec = recover_from_solution(
            y, inst.codebooks, grid, sol, method=config.method,
            recover_opts=opts, constellation=order,
        )
    except OverParameterizedError:
        estimates = [DelayEstimate(i, np.zeros(0), np.zeros(0)) for i in range(r)]
        rec = RecoveryResult(users=decode_messages([[] for _ in range(r)],
                                                   inst.codebooks, order),
                             ls_residual=1.0)
    wall = time.perf_counter() - t0

    nm_a = np.empty(r)
    nm_m = np.empty(r)
    sers = np.empty(r) if kind == "ask" else None
    errors = []
    hits = misses = fas = 0
    for i in range(r):
        ud = rec.users[i]
        if ud.degenerate:
            nm_a[i] = nm_m[i] = 1.0
        else:
            nm_a[i], nm_m[i] = nmse(ud.message_estimate, inst.messages[i].coeffs)
        if sers is not None:
            sers[i] = (1.0 if ud.symbols is None
                       else ser(ud.symbols, inst.symbols[i]))
        errs, mi, fa = match_delays(estimates[i].delays, inst.channels[i].delays,
                                    config.delay_match_tol)
        errors.append(errs)
        hits += len(errs)
        misses += mi
        fas += fa
    return TrialResult(
        sweep_value=float(sweep_value), trial_index=trial_index, seed=seed,
        status=sol.status, nmse_aligned=nm_a, nmse_magnitude=nm_m, ser=sers,
        delay_errors=errors, hits=hits, misses=misses, false_alarms=fas,
        iterations=sol.iterations, wall_time=wall,
    )


def run_experiment(config):
    """Run the configured sweep; deterministic given the config.

    Trials are seeded independently (base seed + trial index) and reduced in
    trial order, so the summary does not depend on execution interleaving.
    """
    trials = []
    aggregates = []
    r = config.instance.r
    for x in config.sweep_values():
        batch = [run_trial(config, x, t) for t in range(config.trials)]
        trials.extend(batch)
        completed = [t for t in batch if t.status != STATUS_NUMERICAL_FAILURE]
        failures = len(batch) - len(completed)
        all_errors = [e for t in batch for errs in t.delay_errors for e in errs]
        agg = {
            "sweep_value": float(x),
            "trials": len(batch),
            "failures": failures,
            "mean_nmse_aligned": np.mean([t.nmse_aligned for t in batch], axis=0),
            "mean_nmse_magnitude": np.mean([t.nmse_magnitude for t in batch], axis=0),
            "mean_ser": (np.mean([t.ser for t in batch], axis=0)
                         if batch[0].ser is not None else None),
            "mean_delay_error": float(np.mean(all_errors)) if all_errors else np.nan,
            "max_delay_error": float(np.max(all_errors)) if all_errors else np.nan,
            "hits": sum(t.hits for t in batch),
            "misses": sum(t.misses for t in batch),
            "false_alarms": sum(t.false_alarms for t in batch),
            "mean_iterations": float(np.mean([t.iterations for t in batch])),
            "wall_time": float(np.sum([t.wall_time for t in batch])),
        }
        aggregates.append(agg)
    return ExperimentSummary(config=config, trials=trials, aggregates=aggregates)


def dualpoly_table_data(sol, codebooks, grid, truths, grid_size=4096):
    """Rows for a dualpoly table: t, per-user ||q_i(t)||, truth markers."""
    taus = np.arange(grid_size) / grid_size
    E = np.exp(2j * np.pi * np.outer(taus, grid.n_indices))
    El = E * np.asarray(sol.lam, dtype=complex)
    curves = [np.linalg.norm(El @ cb.entries, axis=1) for cb in codebooks]
    markers = []
    for tr in truths:
        mark = np.zeros(grid_size)
        for tau in np.atleast_1d(tr):
            mark[int(np.argmin(wrap_distance(taus, tau)))] = 1.0
        markers.append(mark)
    return {"t": taus, "curves": curves, "truth_markers": markers}


def polar_table_data(truths, estimates):
    """Cos/sin pairs for truth and estimated delays, one user per column set."""
    return {
        "truth": [np.atleast_1d(np.asarray(t, dtype=float)) for t in truths],
        "estimates": [np.atleast_1d(np.asarray(e, dtype=float)) for e in estimates],
    }


def _format_row(values):
    return " ".join("%.12g" % v if np.isfinite(v) else "nan" for v in values)


def emit_tables(kind, data, path):
    """Write a whitespace-delimited text table with a '#' header line.

    kinds: "dualpoly" (t, per-user curve, per-user truth marker), "polar"
    (per-user truth cos/sin then estimate cos/sin, rows padded with nan),
    "sweep" (x then one metric column per user).
    """
    lines = []
    if kind == "dualpoly":
        curves = data["curves"]
        markers = data["truth_markers"]
        header = ["t"] + [f"q{i + 1}" for i in range(len(curves))] + [
            f"truth{i + 1}" for i in range(len(markers))]
        lines.append("# " + " ".join(header))
        cols = [data["t"]] + list(curves) + list(markers)
        for row in zip(*cols):
            lines.append(_format_row(row))
    elif kind == "polar":
        truth = data["truth"]
        est = data["estimates"]
        header = []
        for i in range(len(truth)):
            header += [f"truth_cos{i + 1}", f"truth_sin{i + 1}",
                       f"est_cos{i + 1}", f"est_sin{i + 1}"]
        lines.append("# " + " ".join(header))
        depth = max([len(t) for t in truth] + [len(e) for e in est] + [0])
        for j in range(depth):
            row = []
            for t, e in zip(truth, est):
                row += ([np.cos(2 * np.pi * t[j]), np.sin(2 * np.pi * t[j])]
                        if j < len(t) else [np.nan, np.nan])
                row += ([np.cos(2 * np.pi * e[j]), np.sin(2 * np.pi * e[j])]
                        if j < len(e) else [np.nan, np.nan])
            lines.append(_format_row(row))
    elif kind == "sweep":
        x = np.asarray(data["x"], dtype=float)
        metric = np.atleast_2d(np.asarray(data["metric"], dtype=float))
        label = data.get("label", "metric")
        header = ["x"] + [f"{label}{i + 1}" for i in range(metric.shape[1])]
        lines.append("# " + " ".join(header))
        for xi, row in zip(x, metric):
            lines.append(_format_row([xi] + list(row)))
    else:
        raise ValueError(f"unknown table kind {kind!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
