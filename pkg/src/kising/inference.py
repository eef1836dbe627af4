"""Coupling reconstruction by naive mean field and TAP.

All three methods share ``V = D C0^{-1}``:

* nMF:       ``J = T V_ij / (1 - m_i^2)``
* TAP cubic: per spin, solve ``F (1 - F)^2 + x = 0`` with
  ``x_i = -sum_{j != i} V_ij^2 (1 - m_j^2) / (1 - m_i^2)`` and divide the
  nMF row by ``1 - F_i``.
* TAP iterative: fixed point ``J <- T A(J)^{-1} V`` with
  ``A_ii = (1 - m_i^2) (1 - beta^2 (1 - m_i^2) sum_{j != i} J_ij^2 (1 - m_j^2))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .moments import MomentEstimates
from .sk_model import format_float, write_matrix

__all__ = [
    "InferenceError",
    "SingularCorrelation",
    "SaturatedSpin",
    "DegenerateRoot",
    "ZeroTruth",
    "RootDiagnostics",
    "InferenceResult",
    "solve_cubic_F",
    "infer_nmf",
    "infer_tap_cubic",
    "infer_tap_iterative",
    "root_diagnostics",
    "cubic_constant",
    "infer",
    "fraction_three_real",
    "reconstruction_error",
    "write_result",
    "METHODS",
]

METHODS = ("nMF", "TAP-iterative", "TAP-cubic")
COND_LIMIT = 1e12
SATURATION = 1e-12
DEGENERATE = 1e-9
DIVERGENCE = 1e6
CUBIC_BOUNDARY = -4.0 / 27.0


class InferenceError(ValueError):
    """Base class for failures of the reconstruction formulas."""


class SingularCorrelation(InferenceError):
    pass


class SaturatedSpin(InferenceError):
    pass


class DegenerateRoot(InferenceError):
    pass


class ZeroTruth(ValueError):
    pass


@dataclass
class RootDiagnostics:
    """Per-spin cubic data; ``root_counts`` entries are 1 or 3."""

    x: np.ndarray
    root_counts: np.ndarray
    selected_roots: np.ndarray

    @classmethod
    def empty(cls, n=0):
        return cls(np.zeros(n), np.zeros(n, dtype=int), np.zeros(n))


@dataclass
class InferenceResult:
    couplings: np.ndarray
    method: str
    F: np.ndarray
    diagnostics: RootDiagnostics
    converged: bool = True
    iterations: int = 0
    self_couplings: np.ndarray = field(default=None, repr=False)
    message: str = ""


def solve_cubic_F(x: float) -> tuple[list[float], int, float]:
    """Real roots of ``F^3 - 2F^2 + F + x = 0`` for ``x <= 0``.

    Returns ``(roots, count, selected)`` with roots ascending. Three real
    roots exist iff ``x >= -4/27`` (the boundary is a double root and counts
    as three); the smallest is selected. Otherwise the single real root is
    returned.
    """
    x = float(x)
    if not x <= 0.0:
        raise ValueError(f"cubic constant term must be <= 0, got {x}")
    # F = y + 2/3 gives y^3 + p y + q with p = -1/3, q = 2/27 + x
    q = 2.0 / 27.0 + x
    if x >= CUBIC_BOUNDARY:
        c = min(1.0, max(-1.0, -13.5 * q))
        phi = math.acos(c)
        roots = [2.0 / 3.0 + (2.0 / 3.0) * math.cos((phi - 2.0 * math.pi * k) / 3.0) for k in range(3)]
        roots = sorted(_polish(r, x) for r in roots)
        return roots, 3, roots[0]
    disc = math.sqrt(q * q / 4.0 - 1.0 / 729.0)
    y = _cbrt(-q / 2.0 + disc) + _cbrt(-q / 2.0 - disc)
    r = _polish(2.0 / 3.0 + y, x)
    return [r], 1, r


def _cbrt(v):
    return math.copysign(abs(v) ** (1.0 / 3.0), v)


def _polish(r, x):
    # one Newton step, kept only if it lowers the residual (f' vanishes at double roots)
    f = ((r - 2.0) * r + 1.0) * r + x
    df = (3.0 * r - 4.0) * r + 1.0
    if df == 0.0:
        return r
    r2 = r - f / df
    f2 = ((r2 - 2.0) * r2 + 1.0) * r2 + x
    return r2 if abs(f2) < abs(f) else r


def _prepare(moments: MomentEstimates):
    m = np.asarray(moments.m, dtype=np.float64)
    a = 1.0 - m * m
    bad = np.flatnonzero(a < SATURATION)
    if bad.size:
        raise SaturatedSpin(f"frozen spins (m_i^2 ~ 1): {bad.tolist()}")
    C0 = np.asarray(moments.C0, dtype=np.float64)
    cond = np.linalg.cond(C0)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularCorrelation(f"equal-time correlation matrix is singular (cond {cond:.3g})")
    # V = D C0^{-1}  <=>  C0^T V^T = D^T
    V = np.linalg.solve(C0.T, np.asarray(moments.D, dtype=np.float64).T).T
    return a, V


def _split_diagonal(J):
    J = np.array(J, dtype=np.float64)
    diag = np.diag(J).copy()
    np.fill_diagonal(J, 0.0)
    return J, diag


def infer_nmf(moments: MomentEstimates, temperature: float) -> InferenceResult:
    """Naive mean-field reconstruction ``J = T A^{-1} D C^{-1}``."""
    a, V = _prepare(moments)
    J, diag = _split_diagonal(temperature * V / a[:, None])
    n = len(a)
    return InferenceResult(J, "nMF", np.zeros(n), RootDiagnostics.empty(n), True, 0, diag)


def cubic_constant(V: np.ndarray, a: np.ndarray) -> np.ndarray:
    """``x_i = -sum_{j != i} V_ij^2 (1 - m_j^2) / (1 - m_i^2)``."""
    W = V * V * a[None, :]
    np.fill_diagonal(W, 0.0)
    return -W.sum(axis=1) / a


def _solve_all(x):
    n = len(x)
    counts = np.zeros(n, dtype=int)
    F = np.zeros(n)
    for i in range(n):
        # x is a negated sum of squares; min() only guards -0.0 style round-off
        _, counts[i], F[i] = solve_cubic_F(min(x[i], 0.0))
    return counts, F


def root_diagnostics(moments: MomentEstimates) -> RootDiagnostics:
    """Per-spin cubic diagnostics, without building J."""
    a, V = _prepare(moments)
    x = cubic_constant(V, a)
    counts, F = _solve_all(x)
    return RootDiagnostics(x, counts, F)


def infer_tap_cubic(moments: MomentEstimates, temperature: float) -> InferenceResult:
    """TAP reconstruction by solving one cubic per spin."""
    a, V = _prepare(moments)
    x = cubic_constant(V, a)
    counts, F = _solve_all(x)
    near = np.flatnonzero(np.abs(1.0 - F) < DEGENERATE)
    if near.size:
        raise DegenerateRoot(f"selected root within {DEGENERATE} of 1 for spins {near.tolist()}")
    J, diag = _split_diagonal(temperature * V / (a * (1.0 - F))[:, None])
    return InferenceResult(J, "TAP-cubic", F, RootDiagnostics(x, counts, F.copy()), True, 0, diag)


def _onsager_factor(J, a, beta):
    W = J * J * a[None, :]
    np.fill_diagonal(W, 0.0)
    return beta * beta * a * W.sum(axis=1)


def infer_tap_iterative(
    moments: MomentEstimates,
    temperature: float,
    J0: np.ndarray | None = None,
    tolerance: float = 1e-5,
    max_iterations: int = 10_000,
) -> InferenceResult:
    """TAP reconstruction by plain fixed-point iteration from ``J0`` (nMF by default).

    Stops when the mean absolute change of J drops below ``tolerance``.
    Divergence (``|J| > 1e6``), a vanishing ``A_ii`` or the iteration cap
    give ``converged=False`` with the last iterate.
    """
    a, V = _prepare(moments)
    beta = 1.0 / temperature
    J = (temperature * V / a[:, None]) if J0 is None else np.array(J0, dtype=np.float64)
    x = cubic_constant(V, a)
    counts = np.where(x >= CUBIC_BOUNDARY, 3, 1)
    converged = False
    message = "iteration cap reached"
    it = 0
    for it in range(1, max_iterations + 1):
        F = _onsager_factor(J, a, beta)
        if np.any(np.abs(1.0 - F) < DEGENERATE):
            message = "Onsager factor hit 1"
            break
        J_new = temperature * V / (a * (1.0 - F))[:, None]
        if not np.all(np.isfinite(J_new)) or np.max(np.abs(J_new)) > DIVERGENCE:
            message = "divergence detected"
            J = J_new
            break
        delta = np.mean(np.abs(J_new - J))
        J = J_new
        if delta < tolerance:
            converged = True
            message = ""
            break
    F = _onsager_factor(J, a, beta)
    Jz, diag = _split_diagonal(J)
    diagnostics = RootDiagnostics(x, counts, F.copy())
    return InferenceResult(Jz, "TAP-iterative", F, diagnostics, converged, it, diag, message)


def infer(method: str, moments: MomentEstimates, temperature: float, **kw) -> InferenceResult:
    """Dispatch on a method name (``nMF``, ``TAP-cubic``, ``TAP-iterative``; any case)."""
    key = method.replace("_", "-").lower()
    if key == "nmf":
        return infer_nmf(moments, temperature)
    if key == "tap-cubic":
        return infer_tap_cubic(moments, temperature)
    if key == "tap-iterative":
        return infer_tap_iterative(moments, temperature, **kw)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def fraction_three_real(diagnostics: RootDiagnostics) -> float:
    counts = np.asarray(diagnostics.root_counts)
    if counts.size == 0:
        raise ValueError("empty root diagnostics")
    return float(np.mean(counts == 3))


def reconstruction_error(J_inferred, J_true) -> float:
    """Relative off-diagonal error ``sqrt(sum_{i!=j} (Jr - Jt)^2 / sum Jt^2)``."""
    Jr = np.asarray(J_inferred, dtype=np.float64)
    Jt = np.asarray(J_true, dtype=np.float64)
    if Jr.shape != Jt.shape:
        raise ValueError(f"shape mismatch {Jr.shape} vs {Jt.shape}")
    denom = np.sum(Jt * Jt)
    if denom == 0:
        raise ZeroTruth("true couplings are identically zero")
    diff = Jr - Jt
    np.fill_diagonal(diff, 0.0)
    return float(np.sqrt(np.sum(diff * diff) / denom))


def write_result(path, result: InferenceResult) -> None:
    """Coupling matrix file followed by a per-spin diagnostics block."""
    d = result.diagnostics
    n = len(result.couplings)
    lines = [f"# method={result.method} converged={int(result.converged)} iterations={result.iterations}"]
    lines.append("# i x_i root_count selected_F")
    if len(d.x) == n:
        lines += [
            f"{i} {format_float(d.x[i])} {int(d.root_counts[i])} {format_float(d.selected_roots[i])}"
            for i in range(n)
        ]
    write_matrix(path, result.couplings, lines)
