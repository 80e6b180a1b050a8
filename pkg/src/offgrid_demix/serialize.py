"""JSON persistence for instances, dual solutions and configs.

File conventions (format_version 1): complex scalars are [re, im] pairs,
complex vectors are lists of pairs, complex matrices are row-major lists of
rows of pairs.  Unknown keys anywhere in a config document are rejected.
"""

import json

import numpy as np

from .harness import ExperimentConfig, Instance, InstanceSpec, NoiseModel
from .model import Channel, Codebook, Message
from .solver import DualSolution, SolverOptions

__all__ = [
    "FORMAT_VERSION",
    "save_instance",
    "load_instance",
    "save_solution",
    "load_solution",
    "save_recovery",
    "parse_config",
    "load_config",
]

FORMAT_VERSION = 1


def _cvec(v):
    v = np.asarray(v, dtype=complex)
    return [[float(z.real), float(z.imag)] for z in v]


def _cmat(m):
    return [_cvec(row) for row in np.asarray(m, dtype=complex)]


def _from_cvec(pairs):
    return np.array([complex(p[0], p[1]) for p in pairs], dtype=complex)


def _from_cmat(rows):
    return np.array([[complex(p[0], p[1]) for p in row] for row in rows], dtype=complex)


def _snr_out(v):
    return "inf" if v is None or np.isinf(v) else float(v)


def _snr_in(v):
    if v is None or (isinstance(v, str) and v.lower() in ("inf", "infinity")):
        return np.inf
    return float(v)


def _check_version(doc, path):
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format_version {doc.get('format_version')!r}")


def save_instance(inst, path, y=None, noise=None):
    """Write an instance (and optionally its noisy measurement) to JSON."""
    spec = inst.spec
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "instance",
        "M": spec.M,
        "r": spec.r,
        "seed": spec.seed,
        "min_sep": spec.resolved_min_sep,
        "constellation": spec.constellation,
        "amplitude_model": spec.amplitude_model,
        "users": [
            {
                "user_id": cb.user_id,
                "k": cb.k,
                "s": ch.s,
                "codebook": _cmat(cb.entries),
                "delays": [float(t) for t in ch.delays],
                "amplitudes": _cvec(ch.amplitudes),
                "message": _cvec(msg.coeffs),
                "symbols": None if sym is None else [int(v) for v in sym],
            }
            for cb, ch, msg, sym in zip(inst.codebooks, inst.channels,
                                        inst.messages, inst.symbols)
        ],
        "y_clean": _cvec(inst.y_clean),
    }
    if y is not None:
        doc["y"] = _cvec(y)
    if noise is not None:
        doc["noise"] = {
            "snr_db": _snr_out(noise.snr_db),
            "sigma_w": noise.sigma_w,
            "eta": noise.eta,
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    return path


def load_instance(path):
    """Read an instance file; returns (Instance, y, NoiseModel or None).

    ``y`` is the stored noisy measurement when present, else the clean one.
    """
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    _check_version(doc, path)
    users = doc["users"]
    spec = InstanceSpec(
        r=doc["r"],
        k=tuple(u["k"] for u in users),
        s=tuple(u["s"] for u in users),
        M=doc["M"],
        min_sep=doc["min_sep"],
        constellation=doc["constellation"],
        amplitude_model=doc["amplitude_model"],
        seed=doc["seed"],
    )
    inst = Instance(
        spec=spec,
        codebooks=tuple(Codebook(u["user_id"], _from_cmat(u["codebook"])) for u in users),
        channels=tuple(
            Channel(_from_cvec(u["amplitudes"]), np.asarray(u["delays"], dtype=float))
            for u in users
        ),
        messages=tuple(Message(_from_cvec(u["message"])) for u in users),
        symbols=tuple(
            None if u["symbols"] is None else np.asarray(u["symbols"], dtype=int)
            for u in users
        ),
        y_clean=_from_cvec(doc["y_clean"]),
    )
    noise = None
    if "noise" in doc:
        noise = NoiseModel(
            snr_db=_snr_in(doc["noise"]["snr_db"]),
            sigma_w=doc["noise"]["sigma_w"],
            eta=doc["noise"]["eta"],
        )
    y = _from_cvec(doc["y"]) if "y" in doc else inst.y_clean.copy()
    return inst, y, noise


def save_solution(sol, path):
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "dual_solution",
        "lam": _cvec(sol.lam),
        "q_blocks": [_cmat(q) for q in sol.Q_blocks],
        "objective": sol.objective,
        "primal_residual": sol.primal_residual,
        "dual_residual": sol.dual_residual,
        "iterations": sol.iterations,
        "status": sol.status,
        "eta": sol.eta,
        "shared_q": sol.shared_q,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    return path


def load_solution(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    _check_version(doc, path)
    return DualSolution(
        lam=_from_cvec(doc["lam"]),
        Q_blocks=[_from_cmat(q) for q in doc["q_blocks"]],
        objective=doc["objective"],
        primal_residual=doc["primal_residual"],
        dual_residual=doc["dual_residual"],
        iterations=doc["iterations"],
        status=doc["status"],
        eta=doc["eta"],
        shared_q=doc["shared_q"],
    )


def save_recovery(estimates, result, path, nmse_per_user=None, ser_per_user=None):
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "recovery",
        "ls_residual": result.ls_residual,
        "rank_deficient": result.rank_deficient,
        "users": [],
    }
    for est, ud in zip(estimates, result.users):
        doc["users"].append({
            "user_id": ud.user_id,
            "delays": [float(t) for t in est.delays],
            "scores": [float(v) for v in est.scores],
            "amplitude_magnitudes": [float(v) for v in ud.amplitude_magnitudes],
            "message_estimate": _cvec(ud.message_estimate),
            "message_magnitudes": [float(v) for v in ud.message_magnitudes],
            "symbols": None if ud.symbols is None else [int(v) for v in ud.symbols],
            "degenerate": ud.degenerate,
        })
    if nmse_per_user is not None:
        doc["nmse_aligned"] = [float(v) for v in nmse_per_user]
    if ser_per_user is not None:
        doc["ser"] = [float(v) for v in ser_per_user]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    return path


def _reject_unknown(section, allowed, where):
    unknown = set(section) - set(allowed)
    if unknown:
        raise ValueError(f"unknown config keys in {where}: {sorted(unknown)}")


def parse_config(doc):
    """Build (InstanceSpec, SolverOptions, ExperimentConfig) from a dict.

    The document mirrors the dataclasses: an "instance" section (required),
    plus optional "solver" and "experiment" sections.  Unknown keys are
    rejected everywhere.
    """
    _reject_unknown(doc, {"format_version", "instance", "solver", "experiment"}, "config")
    if "format_version" in doc and doc["format_version"] != FORMAT_VERSION:
        raise ValueError(f"unsupported format_version {doc['format_version']!r}")
    if "instance" not in doc:
        raise ValueError("config must have an 'instance' section")

    inst_keys = {"r", "k", "s", "M", "min_sep", "constellation",
                 "amplitude_model", "seed"}
    _reject_unknown(doc["instance"], inst_keys, "instance")
    sec = dict(doc["instance"])
    if "k" in sec and isinstance(sec["k"], list):
        sec["k"] = tuple(sec["k"])
    if "s" in sec and isinstance(sec["s"], list):
        sec["s"] = tuple(sec["s"])
    spec = InstanceSpec(**sec)

    sol_keys = {"penalty", "max_iters", "eps_abs", "eps_rel", "over_relaxation",
                "shared_q", "residual_balancing", "log_every"}
    sol_sec = doc.get("solver", {})
    _reject_unknown(sol_sec, sol_keys, "solver")
    solver = SolverOptions(**sol_sec)

    exp_keys = {"trials", "sweep_axis", "snr_db", "m_values", "fixed_snr_db",
                "method", "threshold", "grid_size", "root_radius_tol",
                "max_paths", "amplitude_prune", "delay_match_tol"}
    exp_sec = dict(doc.get("experiment", {}))
    _reject_unknown(exp_sec, exp_keys, "experiment")
    if "snr_db" in exp_sec:
        vals = exp_sec["snr_db"]
        if not isinstance(vals, (list, tuple)):
            vals = [vals]
        exp_sec["snr_db"] = tuple(_snr_in(v) for v in vals)
    if "m_values" in exp_sec:
        exp_sec["m_values"] = tuple(int(v) for v in exp_sec["m_values"])
    if "fixed_snr_db" in exp_sec:
        exp_sec["fixed_snr_db"] = _snr_in(exp_sec["fixed_snr_db"])
    config = ExperimentConfig(instance=spec, solver=solver, **exp_sec)
    return spec, solver, config


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return parse_config(doc)
