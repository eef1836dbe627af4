"""Asynchronous (random-sequential) Glauber dynamics.

One attempt picks a spin uniformly at random and flips it with probability
``1 / (1 + exp(2 beta s_i H_i))``; N attempts make one unit of model time.
Each attempt consumes two uniforms from a single ``numpy`` PCG64 stream, so
a run of length L1 is an exact prefix of a longer run with the same seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _backend
from .moments import MomentAccumulator
from .sk_model import ModelParams

__all__ = [
    "SimulationSchedule",
    "effective_field",
    "flip_probability",
    "run",
    "enumerate_states",
    "exact_stationary_distribution",
    "boltzmann_distribution",
    "TrajectoryWriter",
    "read_trajectory",
    "RECOMPUTE_EVERY",
]

# full field recomputation interval, in absolute attempts (burn-in included)
RECOMPUTE_EVERY = 1_000_000
_MAX_EXACT_SPINS = 12
_TRAJ_MAGIC = b"KISNTRAJ"
TRAJ_RECORD = np.dtype([("t", "<u8"), ("spin", "<i4"), ("value", "i1")])


@dataclass(frozen=True)
class SimulationSchedule:
    """How long to run.

    ``burn_in_updates`` attempts are discarded, then ``total_updates``
    attempts (the data length L) are observed.
    """

    total_updates: int
    burn_in_updates: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if self.total_updates < 1:
            raise ValueError(f"total_updates must be positive, got {self.total_updates}")
        if self.burn_in_updates < 0:
            raise ValueError(f"burn_in_updates must be >= 0, got {self.burn_in_updates}")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ValueError(f"rng_seed must be an unsigned 64-bit integer, got {self.rng_seed}")

    @classmethod
    def sweeps(cls, n_spins, data_length, burn_in_sweeps=1000, rng_seed=0):
        return cls(int(data_length), int(burn_in_sweeps) * int(n_spins), rng_seed)


def effective_field(J, theta, s, i: int) -> float:
    """``theta_i + sum_j J_ij s_j``."""
    n = len(s)
    if not 0 <= i < n:
        raise IndexError(f"spin index {i} out of range for N={n}")
    return float(theta[i] + np.dot(J[i], s))


def flip_probability(beta: float, s_i: int, h_i: float) -> float:
    """Glauber flip probability ``1 / (1 + exp(2 beta s_i h_i))``.

    Written in the logistic form with a clamped exponent, so it never
    overflows; extreme arguments saturate at 0 or 1.
    """
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    arg = 2.0 * beta * s_i * h_i
    arg = min(max(arg, -700.0), 700.0)
    return 1.0 / (1.0 + math.exp(arg))


def _full_fields(J, theta, s):
    # pairwise numpy summation: deterministic and backend independent
    return theta + (J * s[None, :].astype(np.float64)).sum(axis=1)


def _chunk_edges(start, stop, extra=()):
    """Split [start, stop) at multiples of RECOMPUTE_EVERY and at ``extra``."""
    edges = {start, stop}
    first = (start // RECOMPUTE_EVERY + 1) * RECOMPUTE_EVERY
    edges.update(range(first, stop, RECOMPUTE_EVERY))
    edges.update(e for e in extra if start < e < stop)
    edges = sorted(edges)
    return list(zip(edges[:-1], edges[1:]))


class TrajectoryWriter:
    """Binary dump of measured attempts.

    16-byte header (``KISNTRAJ``, N as uint32, reserved uint32), then one
    packed little-endian record per attempt: attempt index (u64), flipped
    spin or -1 if rejected (i32), resulting spin value or 0 if rejected (i8).
    """

    def __init__(self, path, n_spins: int):
        self._fh = open(path, "wb")
        self._fh.write(_TRAJ_MAGIC + np.array([n_spins, 0], dtype="<u4").tobytes())

    def write(self, t0: int, flips: np.ndarray, s_before: np.ndarray) -> None:
        rec = np.zeros(len(flips), dtype=TRAJ_RECORD)
        rec["t"] = np.arange(t0, t0 + len(flips), dtype=np.uint64)
        rec["spin"] = flips
        for i in np.unique(flips[flips >= 0]):
            hit = flips == i
            # value after the c-th flip of spin i is s_before[i] * (-1)**c
            c = np.cumsum(hit)[hit]
            rec["value"][hit] = s_before[i] * np.where(c % 2 == 1, -1, 1)
        self._fh.write(rec.tobytes())

    def close(self):
        self._fh.close()


def read_trajectory(path) -> tuple[int, np.ndarray]:
    """Return ``(N, records)`` from a trajectory dump."""
    data = Path(path).read_bytes()
    if data[:8] != _TRAJ_MAGIC:
        raise ValueError(f"{path}: not a trajectory dump")
    n = int(np.frombuffer(data[8:12], dtype="<u4")[0])
    return n, np.frombuffer(data[16:], dtype=TRAJ_RECORD)


def run(
    params: ModelParams,
    J,
    schedule: SimulationSchedule,
    observer=None,
    *,
    dump_path=None,
    backend: str | None = None,
) -> np.ndarray:
    """Simulate the chain.

    Parameters
    ----------
    params : ModelParams
    J : (N, N) array
        Couplings; ``J[i, j]`` is the influence of spin j on spin i.
    schedule : SimulationSchedule
    observer : MomentAccumulator or callable, optional
        A :class:`MomentAccumulator` is fed through the fused kernel. Any
        other callable is invoked as ``observer(state, t, fields)`` after
        every measured attempt (slow; views are only valid during the call).
    dump_path : path, optional
        Write a binary trajectory dump of the measured phase.
    backend : {"compiled", "python"}, optional
        Kernel implementation; defaults to the one selected at import.

    Returns
    -------
    numpy.ndarray
        Final configuration (int8, entries +-1).
    """
    kern = _backend.get(backend)
    n = params.n_spins
    J = np.ascontiguousarray(J, dtype=np.float64)
    if J.shape != (n, n):
        raise ValueError(f"coupling matrix shape {J.shape} does not match N={n}")
    if schedule.total_updates < n:
        raise ValueError(f"total_updates={schedule.total_updates} is less than one sweep (N={n})")
    JT = np.ascontiguousarray(J.T)
    TB = np.tanh(2.0 * params.beta * JT)
    theta = np.asarray(params.external_field, dtype=np.float64)
    beta = params.beta

    rng = np.random.default_rng(schedule.rng_seed)
    s = np.where(rng.random(n) < 0.5, 1, -1).astype(np.int8)
    H = _full_fields(J, theta, s)

    burn = schedule.burn_in_updates
    total = burn + schedule.total_updates

    fused = isinstance(observer, MomentAccumulator)
    acc = observer if fused else None
    if fused:
        if acc.n_spins != n:
            raise ValueError("accumulator size does not match N")
        if acc._mode is not None or acc.count:
            raise ValueError("accumulator already used")
        acc._mode = "fused"
    extra = [burn + c for c in acc.checkpoints] if fused else []
    writer = TrajectoryWriter(dump_path, n) if dump_path is not None else None
    th = None
    try:
        for a, b in _chunk_edges(0, total, [burn] + extra):
            if a and a % RECOMPUTE_EVERY == 0:
                fresh = _full_fields(J, theta, s)
                assert np.max(np.abs(fresh - H)) < 1e-10, "incremental field drift"
                if th is not None:
                    # close the tanh interval held since the last flip
                    t = a - burn
                    acc.Theta += float(t - acc.clock[0]) * th
                    acc.clock[0] = t
                H = fresh
                if th is not None:
                    th = np.tanh(beta * H)
            u = rng.random(2 * (b - a))
            if b <= burn:
                kern.burn(s, H, JT, beta, u)
                continue
            t0 = a - burn
            flips = np.empty(b - a, dtype=np.int32) if writer is not None else None
            s_before = s.copy() if writer is not None else None
            if fused:
                if th is None:
                    th = np.tanh(beta * H)
                kern.measure(
                    s, H, th, JT, TB, beta, u, t0, acc.lag,
                    acc.m_sum, acc.m_last, acc.S0, acc.last0, acc.S1, acc.last1,
                    acc.s_lag, acc.ring, acc.T_sum, acc.T_mark, acc.Theta, acc.clock,
                    flips,
                )
                if b - burn in acc.checkpoints:
                    acc.snapshots[b - burn] = acc._snapshot(b - burn, s, th)
            elif observer is not None:
                one = np.empty(1, dtype=np.int32)
                for k in range(b - a):
                    kern.burn(s, H, JT, beta, u[2 * k : 2 * k + 2], one)
                    if flips is not None:
                        flips[k] = one[0]
                    observer(s, t0 + k, H)
            else:
                kern.burn(s, H, JT, beta, u, flips)
            if writer is not None:
                writer.write(t0, flips, s_before)
    finally:
        if writer is not None:
            writer.close()
    if fused:
        acc.count = schedule.total_updates
        acc._final = acc._snapshot(acc.count, s, th)
    return s


def enumerate_states(n: int) -> np.ndarray:
    """All 2**n configurations; row b has spin i = +1 iff bit i of b is set."""
    b = np.arange(2**n)[:, None]
    return np.where((b >> np.arange(n)) & 1, 1, -1).astype(np.int8)


def exact_stationary_distribution(params: ModelParams, J) -> np.ndarray:
    """Stationary vector of the master equation by full enumeration.

    Builds the 2**N x 2**N generator with Glauber rates and solves
    ``Q p = 0`` with ``sum(p) = 1``. Works for asymmetric couplings.
    """
    n = params.n_spins
    if n > _MAX_EXACT_SPINS:
        raise ValueError(f"N={n} too large for enumeration (max {_MAX_EXACT_SPINS})")
    J = np.asarray(J, dtype=np.float64)
    S = enumerate_states(n).astype(np.float64)
    H = S @ J.T + params.external_field
    rates = 1.0 / (1.0 + np.exp(np.clip(2.0 * params.beta * S * H, -700, 700)))
    size = 2**n
    Q = np.zeros((size, size))
    idx = np.arange(size)
    for i in range(n):
        Q[idx ^ (1 << i), idx] += rates[:, i]
    Q[idx, idx] -= rates.sum(axis=1)
    Q[-1, :] = 1.0
    rhs = np.zeros(size)
    rhs[-1] = 1.0
    p = np.linalg.solve(Q, rhs)
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def boltzmann_distribution(params: ModelParams, J) -> np.ndarray:
    """``p(s) ~ exp(beta (sum_i theta_i s_i + sum_{i<j} (J_ij + J_ji)/2 s_i s_j))``.

    The stationary law of Glauber dynamics when J is symmetric, with states
    ordered as in :func:`enumerate_states`.
    """
    J = np.asarray(J, dtype=np.float64)
    S = enumerate_states(params.n_spins).astype(np.float64)
    Jsym = np.triu((J + J.T) / 2.0, 1)
    energy = S @ params.external_field + np.einsum("bi,ij,bj->b", S, Jsym, S)
    w = np.exp(params.beta * (energy - energy.max()))
    return w / w.sum()
