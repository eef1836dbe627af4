"""Streaming estimation of magnetizations and (lagged) correlations.

Accumulation is lazy: every pairwise sum ``sum_t a_i(t) b_j(t)`` only
records the held product when ``a_i`` or ``b_j`` changes, so the fused
kernel spends O(N) per accepted flip instead of O(N^2) per attempt. The
result is identical to summing every observation, one per attempt.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sk_model import format_float

__all__ = [
    "RawSums",
    "MomentAccumulator",
    "MomentEstimates",
    "finalize",
    "estimate_D_tanh",
    "estimate_D_fd",
    "batch_estimates",
    "batch_standard_error",
    "exact_moments",
    "write_moments",
    "read_moments",
]


@dataclass(frozen=True)
class RawSums:
    """Uncentered running sums after ``count`` observations."""

    count: int
    lag: int
    n_spins: int
    m_sum: np.ndarray
    ss_sum: np.ndarray
    lag_sum: np.ndarray
    tanh_sum: np.ndarray

    @property
    def lag_count(self) -> int:
        return max(self.count - self.lag, 0)

    def __sub__(self, other: "RawSums") -> "RawSums":
        if other.lag != self.lag or other.count > self.count:
            raise ValueError("can only subtract an earlier snapshot of the same accumulator")
        return _Segment(
            count=self.count - other.count,
            lag=self.lag,
            n_spins=self.n_spins,
            m_sum=self.m_sum - other.m_sum,
            ss_sum=self.ss_sum - other.ss_sum,
            lag_sum=self.lag_sum - other.lag_sum,
            tanh_sum=self.tanh_sum - other.tanh_sum,
            n_lag_pairs=self.lag_count - other.lag_count,
        )


@dataclass(frozen=True)
class _Segment(RawSums):
    n_lag_pairs: int = 0

    @property
    def lag_count(self) -> int:
        return self.n_lag_pairs


class MomentAccumulator:
    """Constant-memory accumulator of the moments needed for inference.

    Observation ``t`` (``t = 0, 1, ...``) is the configuration after the
    ``t``-th measured attempt. The accumulator tracks

    * ``sum_t s_i(t)``
    * ``sum_t s_i(t) s_j(t)``
    * ``sum_{t >= lag} s_i(t) s_j(t - lag)``
    * ``sum_t tanh(beta H_i(t)) s_j(t)``

    Pass it as the observer of :func:`kising.glauber.run` to use the fused
    compiled kernel, or feed it step by step with :meth:`accumulate`.

    Parameters
    ----------
    n_spins : int
    beta : float
        Inverse temperature used inside ``tanh``.
    lag : int
        Lag in attempts for the lagged correlation (default 1, i.e. one
        sweep divided by N).
    checkpoints : iterable of int
        Observation counts at which :func:`kising.glauber.run` stores a
        snapshot of the raw sums (used for nested data lengths and batch
        error bars).
    """

    def __init__(self, n_spins: int, beta: float, lag: int = 1, checkpoints=()):
        if lag < 1:
            raise ValueError(f"lag must be >= 1 attempt, got {lag}")
        n = int(n_spins)
        self.n_spins = n
        self.beta = float(beta)
        self.lag = int(lag)
        self.checkpoints = sorted({int(c) for c in checkpoints if int(c) > 0})
        self.snapshots: dict[int, RawSums] = {}
        self.m_sum = np.zeros(n, dtype=np.int64)
        self.m_last = np.zeros(n, dtype=np.int64)
        self.S0 = np.zeros((n, n), dtype=np.int64)
        self.last0 = np.zeros((n, n), dtype=np.int64)
        self.S1 = np.zeros((n, n), dtype=np.int64)
        self.last1 = np.full((n, n), self.lag, dtype=np.int64)
        self.s_lag = np.ones(n, dtype=np.int8)
        self.ring = np.full(self.lag, -1, dtype=np.int32)
        self.T_sum = np.zeros((n, n))
        self.T_mark = np.zeros((n, n))
        self.Theta = np.zeros(n)
        self.clock = np.zeros(1, dtype=np.int64)
        self.count = 0
        self._mode = None
        self._past: deque = deque(maxlen=self.lag)
        self._final: RawSums | None = None

    def _claim(self, mode):
        if self._mode is None:
            self._mode = mode
        elif self._mode != mode:
            raise RuntimeError("cannot mix fused-kernel and step-by-step accumulation")

    def accumulate(self, state, t: int, fields) -> None:
        """Add one observation.

        Parameters
        ----------
        state : array of +-1
            Configuration after attempt ``t``.
        t : int
            Measured attempt index; must equal the number of observations
            already accumulated.
        fields : array
            Effective fields H for ``state``.
        """
        self._claim("step")
        if t != self.count:
            raise ValueError(f"out-of-order observation: expected t={self.count}, got {t}")
        s = np.asarray(state, dtype=np.int64)
        th = np.tanh(self.beta * np.asarray(fields, dtype=np.float64))
        self.m_sum += s
        self.S0 += np.outer(s, s)
        if t >= self.lag:
            self.S1 += np.outer(s, self._past[0])
        self.T_sum += np.outer(th, s)
        self._past.append(s.copy())
        self.count = t + 1
        if self.count in self.checkpoints:
            self.snapshots[self.count] = self.raw()

    __call__ = accumulate

    def _snapshot(self, t_end: int, s: np.ndarray, th: np.ndarray) -> RawSums:
        # resolve pending held products without touching the lazy state
        s64 = s.astype(np.int64)
        m_sum = self.m_sum + s64 * (t_end - self.m_last)
        ss = self.S0 + np.outer(s64, s64) * (t_end - self.last0)
        lagged = self.S1 + np.outer(s64, self.s_lag.astype(np.int64)) * np.maximum(
            t_end - self.last1, 0
        )
        theta_end = self.Theta + float(t_end - self.clock[0]) * th
        tanh_sum = self.T_sum + (theta_end[:, None] - self.T_mark) * s64[None, :]
        return RawSums(t_end, self.lag, self.n_spins, m_sum, ss, lagged, tanh_sum)

    def raw(self) -> RawSums:
        """Current raw sums."""
        if self._final is not None:
            return self._final
        if self._mode == "fused":
            raise RuntimeError("fused accumulation still running")
        return RawSums(
            self.count,
            self.lag,
            self.n_spins,
            self.m_sum.copy(),
            self.S0.copy(),
            self.S1.copy(),
            self.T_sum.copy(),
        )


def _as_raw(source) -> RawSums:
    if isinstance(source, MomentAccumulator):
        return source.raw()
    if isinstance(source, RawSums):
        return source
    raise TypeError(f"expected MomentAccumulator or RawSums, got {type(source).__name__}")


@dataclass(frozen=True)
class MomentEstimates:
    """Finalized connected moments of one run.

    ``C_lag[i, j]`` is the connected ``<s_i(t + lag) s_j(t)>``; ``lag_delta``
    is the lag in sweeps (attempts / N). ``D`` is the estimate of
    ``dC/dt(0) + C(0)`` chosen by ``d_estimator``.
    """

    m: np.ndarray
    C0: np.ndarray
    C_lag: np.ndarray
    D: np.ndarray
    lag_delta: float
    sample_count: int
    tanh_corr: np.ndarray | None = field(default=None, repr=False)
    d_estimator: str = "tanh"

    @property
    def n_spins(self) -> int:
        return len(self.m)


def finalize(source, estimator: str = "tanh") -> MomentEstimates:
    """Turn raw sums into connected moments.

    Parameters
    ----------
    source : MomentAccumulator or RawSums
    estimator : {"tanh", "finite_difference"}
        Which estimator fills ``D``.
    """
    raw = _as_raw(source)
    if raw.count < 2 or raw.lag_count < 1:
        raise ValueError(f"too few samples to finalize: {raw.count} observations, lag {raw.lag}")
    L = raw.count
    m = raw.m_sum / L
    mm = np.outer(m, m)
    C0 = raw.ss_sum / L - mm
    C_lag = raw.lag_sum / raw.lag_count - mm
    tanh_corr = raw.tanh_sum / L
    est = MomentEstimates(
        m=m,
        C0=C0,
        C_lag=C_lag,
        D=tanh_corr - mm,
        lag_delta=raw.lag / raw.n_spins,
        sample_count=L,
        tanh_corr=tanh_corr,
        d_estimator="tanh",
    )
    if estimator == "tanh":
        return est
    if estimator == "finite_difference":
        return _replace_D(est, estimate_D_fd(est), "finite_difference")
    raise ValueError(f"unknown D estimator {estimator!r}")


def _replace_D(est: MomentEstimates, D: np.ndarray, name: str) -> MomentEstimates:
    return MomentEstimates(
        est.m, est.C0, est.C_lag, D, est.lag_delta, est.sample_count, est.tanh_corr, name
    )


def estimate_D_tanh(source) -> np.ndarray:
    """``<tanh(beta H_i) s_j> - m_i m_j``, the stationary ``dC/dt + C`` at lag 0."""
    if isinstance(source, MomentEstimates):
        if source.tanh_corr is None:
            raise ValueError("these estimates carry no tanh moments")
        return source.tanh_corr - np.outer(source.m, source.m)
    return finalize(source).D


def estimate_D_fd(moments: MomentEstimates) -> np.ndarray:
    """Forward difference ``C0 + (C_lag - C0) / lag_delta``."""
    if not moments.lag_delta > 0:
        raise ValueError(f"lag_delta must be > 0, got {moments.lag_delta}")
    return moments.C0 + (moments.C_lag - moments.C0) / moments.lag_delta


def batch_estimates(acc: MomentAccumulator) -> list[MomentEstimates]:
    """Moments of each segment between consecutive checkpoints (and the end)."""
    final = acc.raw()
    marks = [acc.snapshots[c] for c in sorted(acc.snapshots) if c < final.count]
    edges = marks + [final]
    out = [finalize(edges[0])]
    out += [finalize(b - a) for a, b in zip(edges, edges[1:])]
    return out


def batch_standard_error(batches: list[MomentEstimates], fn) -> np.ndarray:
    """Standard error of ``fn(estimate)`` from batch means."""
    if len(batches) < 2:
        raise ValueError("need at least two batches")
    vals = np.array([fn(b) for b in batches])
    return vals.std(axis=0, ddof=1) / np.sqrt(len(batches))


def exact_moments(params, J, lag: int = 1) -> MomentEstimates:
    """Exact stationary moments by state enumeration (small N only).

    ``C_lag`` is exact for the random-sequential dynamics at a lag of one
    attempt: one attempt moves ``<s_i s_j>`` by ``(<tanh(beta H_i) s_j> -
    <s_i s_j>) / N``. Larger lags are not supported.
    """
    from .glauber import enumerate_states, exact_stationary_distribution

    if lag != 1:
        raise ValueError("exact lagged moments are only available for lag = 1")
    p = exact_stationary_distribution(params, J)
    S = enumerate_states(params.n_spins).astype(np.float64)
    H = S @ np.asarray(J).T + params.external_field
    th = np.tanh(params.beta * H)
    m = p @ S
    ss = (S * p[:, None]).T @ S
    tanh_corr = (th * p[:, None]).T @ S
    mm = np.outer(m, m)
    C0 = ss - mm
    D = tanh_corr - mm
    n = params.n_spins
    C_lag = C0 + (D - C0) / n
    return MomentEstimates(m, C0, C_lag, D, 1.0 / n, 0, tanh_corr, "tanh")


def write_moments(path, est: MomentEstimates) -> None:
    """Text format: header ``N lag_delta sample_count``, m, then C0, C_lag, D rows."""
    n = est.n_spins
    lines = [f"{n} {format_float(est.lag_delta)} {est.sample_count}"]
    lines.append(" ".join(format_float(v) for v in est.m))
    for mat in (est.C0, est.C_lag, est.D):
        lines += [" ".join(format_float(v) for v in row) for row in mat]
    Path(path).write_text("\n".join(lines) + "\n")


def read_moments(path) -> MomentEstimates:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split()
    n, lag_delta, count = int(head[0]), float(head[1]), int(head[2])
    m = np.array([float(v) for v in lines[1].split()])
    rows = np.array([[float(v) for v in line.split()] for line in lines[2 : 2 + 3 * n]])
    if m.shape != (n,) or rows.shape != (3 * n, n):
        raise ValueError(f"{path}: malformed moments file for N={n}")
    C0, C_lag, D = rows[:n], rows[n : 2 * n], rows[2 * n :]
    return MomentEstimates(m, C0, C_lag, D, lag_delta, count, None, "file")
