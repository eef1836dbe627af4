"""Asymmetric Sherrington-Kirkpatrick couplings.

The coupling matrix is ``J = Js + k * Jas`` with ``Js`` symmetric, ``Jas``
antisymmetric, both with i.i.d. Gaussian upper triangles of variance
``J**2 / (N * (1 + k**2))`` and zero diagonal.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "ModelParams",
    "sample_couplings",
    "decompose",
    "write_matrix",
    "read_matrix",
    "format_float",
]


@dataclass(frozen=True)
class ModelParams:
    """Parameters of one kinetic Ising model instance.

    Parameters
    ----------
    n_spins : int
        System size N (>= 2).
    temperature : float
        T > 0; ``beta = 1 / T``.
    coupling_scale : float
        Overall coupling strength J > 0.
    asymmetry : float
        Asymmetry degree k >= 0; k = 0 is the symmetric SK model.
    external_field : float or array_like
        Per-spin field theta. A scalar is broadcast to all spins.
    rng_seed : int
        Seed for the coupling draw (unsigned 64-bit).
    """

    n_spins: int
    temperature: float
    coupling_scale: float = 1.0
    asymmetry: float = 1.0
    external_field: np.ndarray = field(default=0.0)
    rng_seed: int = 0

    def __post_init__(self):
        if int(self.n_spins) != self.n_spins or self.n_spins < 2:
            raise ValueError(f"n_spins must be an integer >= 2, got {self.n_spins!r}")
        if not np.isfinite(self.temperature) or self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature!r}")
        if not np.isfinite(self.coupling_scale) or self.coupling_scale <= 0:
            raise ValueError(f"coupling_scale must be > 0, got {self.coupling_scale!r}")
        if not np.isfinite(self.asymmetry) or self.asymmetry < 0:
            raise ValueError(f"asymmetry must be >= 0, got {self.asymmetry!r}")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ValueError(f"rng_seed must be an unsigned 64-bit integer, got {self.rng_seed!r}")
        theta = np.asarray(self.external_field, dtype=np.float64)
        if theta.ndim == 0:
            theta = np.full(self.n_spins, float(theta))
        if theta.shape != (self.n_spins,):
            raise ValueError(
                f"external_field must have {self.n_spins} entries, got shape {theta.shape}"
            )
        if not np.all(np.isfinite(theta)):
            raise ValueError("external_field must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "n_spins", int(self.n_spins))
        object.__setattr__(self, "rng_seed", int(self.rng_seed))
        object.__setattr__(self, "external_field", theta)

    @property
    def beta(self) -> float:
        return 1.0 / self.temperature

    def with_(self, **changes) -> "ModelParams":
        """Copy with some fields replaced."""
        kw = dict(
            n_spins=self.n_spins,
            temperature=self.temperature,
            coupling_scale=self.coupling_scale,
            asymmetry=self.asymmetry,
            external_field=self.external_field,
            rng_seed=self.rng_seed,
        )
        kw.update(changes)
        return ModelParams(**kw)


def sample_couplings(params: ModelParams, rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw an asymmetric SK coupling matrix.

    One Gaussian is drawn per upper-triangle entry of the symmetric and of
    the antisymmetric part, then mirrored, so (anti)symmetry is exact.

    Parameters
    ----------
    params : ModelParams
    rng : numpy.random.Generator, optional
        Random source. Defaults to ``default_rng(params.rng_seed)``.

    Returns
    -------
    numpy.ndarray
        (N, N) float64 matrix with zero diagonal.
    """
    if rng is None:
        rng = np.random.default_rng(params.rng_seed)
    n = params.n_spins
    k = params.asymmetry
    sd = params.coupling_scale / np.sqrt(n * (1.0 + k * k))
    iu = np.triu_indices(n, 1)
    m = len(iu[0])
    upper = rng.normal(0.0, sd, size=(2, m))
    js = np.zeros((n, n))
    js[iu] = upper[0]
    js += js.T
    jas = np.zeros((n, n))
    jas[iu] = upper[1]
    jas -= jas.T
    return js + k * jas


def decompose(J: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split ``J`` into its symmetric and antisymmetric parts."""
    J = np.asarray(J, dtype=np.float64)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {J.shape}")
    return (J + J.T) / 2.0, (J - J.T) / 2.0


def format_float(x: float) -> str:
    # 17 significant digits round-trip every float64
    return "%.17g" % x


def write_matrix(path, J: np.ndarray, extra_lines=()) -> None:
    """Write ``J`` as text: ``N`` on the first line, then N rows of N floats."""
    J = np.asarray(J, dtype=np.float64)
    lines = [str(J.shape[0])]
    lines += [" ".join(format_float(v) for v in row) for row in J]
    lines += list(extra_lines)
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path) -> np.ndarray:
    """Read a matrix written by :func:`write_matrix` (trailing blocks ignored)."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty matrix file")
    n = int(lines[0].split()[0])
    rows = [[float(v) for v in line.split()] for line in lines[1 : n + 1]]
    J = np.array(rows, dtype=np.float64)
    if J.shape != (n, n):
        raise ValueError(f"{path}: expected {n}x{n} matrix, got shape {J.shape}")
    return J
