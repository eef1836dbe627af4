"""Parameter sweeps over temperature and data length.

Every (sweep point, realization) pair is an independent task whose seeds
come from ``SeedSequence(base_seed, spawn_key=(point, realization))``, so
results do not depend on execution order or on the number of workers.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .glauber import SimulationSchedule, run
from .inference import (
    InferenceError,
    fraction_three_real,
    infer,
    reconstruction_error,
    root_diagnostics,
)
from .moments import MomentAccumulator, finalize
from .sk_model import ModelParams, sample_couplings

__all__ = [
    "ExperimentConfig",
    "SweepRecord",
    "sweep_temperature",
    "sweep_data_length",
    "root_fraction_sweep",
    "scatter_experiment",
    "write_sweep_csv",
    "write_scatter_csv",
    "realization_seeds",
    "realization_results",
    "summarize",
    "PRESETS",
]


METHOD_ORDER = ("nMF", "TAP-iterative", "TAP-cubic")
SWEEP_HEADER = [
    "sweep_value", "method", "delta_mean", "delta_stderr",
    "fraction_three_real", "convergence_rate", "realizations",
]
SCATTER_HEADER = ["i", "j", "J_true", "J_nmf", "J_tap_iter", "J_tap_cubic", "L"]


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep.

    ``sweep_values`` are temperatures or data lengths depending on
    ``sweep_variable``; the other quantity comes from ``base_params``
    (temperature) or ``data_length``.
    """

    base_params: ModelParams
    sweep_variable: str = "temperature"
    sweep_values: tuple = ()
    realizations: int = 5
    methods: tuple = METHOD_ORDER
    d_estimator: str = "finite_difference"
    data_length: int = 2 * 10**8
    burn_in_sweeps: int = 1000
    lag_attempts: int = 1
    tolerance: float = 1e-5
    max_iterations: int = 10_000
    workers: int = 1
    output_path: str | None = None

    def __post_init__(self):
        if self.sweep_variable not in ("temperature", "data_length"):
            raise ValueError(f"sweep_variable must be temperature or data_length, got {self.sweep_variable!r}")
        vals = tuple(self.sweep_values)
        if not vals:
            raise ValueError("sweep_values must be nonempty")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("sweep_values must be strictly increasing")
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        bad = set(self.methods) - set(METHOD_ORDER)
        if bad or not self.methods:
            raise ValueError(f"unknown methods {sorted(bad)}; choose from {METHOD_ORDER}")
        if self.d_estimator not in ("tanh", "finite_difference"):
            raise ValueError(f"unknown d_estimator {self.d_estimator!r}")
        object.__setattr__(self, "sweep_values", vals)
        object.__setattr__(self, "methods", tuple(m for m in METHOD_ORDER if m in self.methods))


@dataclass(frozen=True)
class SweepRecord:
    sweep_value: float
    method: str
    delta_mean: float
    delta_stderr: float
    fraction_three_real: float
    convergence_rate: float
    realizations: int


# 15 temperatures, step 0.25, containing 1.5 and 3.0
ROOT_GRID = tuple(1.0 + 0.25 * i for i in range(15))

# desk-scale defaults, and the long-run values behind --full-scale
PRESETS = {
    "sweep-temperature": {
        "desk": dict(external_field=0.0, sweep_values=(2.5, 3.0, 3.7, 5.0, 8.0), data_length=2 * 10**8, realizations=5),
        "full": dict(external_field=0.0, sweep_values=(2.5, 3.0, 3.7, 5.0, 8.0), data_length=2 * 10**11, realizations=10),
    },
    "sweep-length": {
        "desk": dict(external_field=0.0, temperature=8.0, sweep_values=(2 * 10**6, 2 * 10**7, 2 * 10**8), realizations=5),
        "full": dict(external_field=0.0, temperature=8.0, sweep_values=tuple(2 * 10**e for e in range(6, 12)), realizations=10),
    },
    "root-fraction": {
        # data_length None means N * 10**6
        "desk": dict(external_field=0.5, sweep_values=ROOT_GRID, data_length=None, realizations=5),
        "full": dict(external_field=0.5, sweep_values=ROOT_GRID, data_length=None, realizations=10),
    },
    "scatter": {
        "desk": dict(external_field=0.0, temperature=3.7, sweep_values=(2 * 10**6, 2 * 10**7), realizations=1),
        "full": dict(external_field=0.0, temperature=3.7, sweep_values=(2 * 10**6, 2 * 10**8), realizations=1),
    },
}


def realization_seeds(base_seed: int, point: int, realization: int) -> tuple[int, int]:
    """(coupling seed, dynamics seed) for one task; a pure function of its arguments."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(point), int(realization)))
    a, b = ss.generate_state(2, dtype=np.uint64)
    return int(a), int(b)


def _task(args):
    """Simulate one realization and infer at each requested data length."""
    params, lengths, point, r, cfg, want_scatter = args
    c_seed, d_seed = realization_seeds(params.rng_seed, point, r)
    params = params.with_(rng_seed=c_seed)
    J = sample_couplings(params)
    acc = MomentAccumulator(params.n_spins, params.beta, lag=cfg.lag_attempts, checkpoints=lengths)
    schedule = SimulationSchedule(max(lengths), cfg.burn_in_sweeps * params.n_spins, d_seed)
    run(params, J, schedule, acc)
    out = {}
    for L in lengths:
        raw = acc.snapshots.get(L) or acc.raw()
        est = finalize(raw, cfg.d_estimator)
        row = {"methods": {}, "fraction": math.nan, "couplings": {}}
        try:
            row["fraction"] = fraction_three_real(root_diagnostics(est))
        except InferenceError as exc:
            row["error"] = str(exc)
        for method in cfg.methods:
            kw = {}
            if method == "TAP-iterative":
                kw = dict(tolerance=cfg.tolerance, max_iterations=cfg.max_iterations)
            try:
                res = infer(method, est, params.temperature, **kw)
            except InferenceError as exc:
                row["methods"][method] = (math.nan, False, 0, f"{type(exc).__name__}: {exc}")
                continue
            delta = reconstruction_error(res.couplings, J)
            row["methods"][method] = (delta, res.converged, res.iterations, res.message)
            if want_scatter:
                row["couplings"][method] = res.couplings
        if want_scatter:
            row["truth"] = J
        out[L] = row
    return point, r, out


def _map(tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_task, tasks))


def _aggregate(value, method, rows):
    deltas = [row["methods"][method][0] for row in rows if row["methods"][method][1]]
    ok = len(deltas)
    fractions = [row["fraction"] for row in rows if not math.isnan(row["fraction"])]
    frac = float(np.mean(fractions)) if fractions else math.nan
    if ok:
        mean = float(np.mean(deltas))
        stderr = float(np.std(deltas, ddof=1) / math.sqrt(ok)) if ok > 1 else 0.0
    else:
        mean = stderr = math.nan
    return SweepRecord(float(value), method, mean, stderr, frac, ok / len(rows), ok)


def _write_log(path, results, values):
    lines = ["sweep_value,realization,L,method,delta,converged,iterations,fraction_three_real,error"]
    for (point, r), out in sorted(results.items()):
        for L, row in sorted(out.items()):
            for method in METHOD_ORDER:
                if method not in row["methods"]:
                    continue
                d, conv, its, msg = row["methods"][method]
                lines.append(
                    f"{_fmt(values[point])},{r},{L},{method},{_fmt(d)},{int(conv)},{its},"
                    f"{_fmt(row['fraction'])},{msg.replace(',', ';')}"
                )
    Path(path).write_text("\n".join(lines) + "\n")


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.9g" % v


def _run_points(config: ExperimentConfig, points, want_scatter=False):
    tasks = []
    for point, (params, lengths) in enumerate(points):
        for r in range(config.realizations):
            tasks.append((params, lengths, point, r, config, want_scatter))
    results = {}
    for point, r, out in _map(tasks, config.workers):
        results[(point, r)] = out
    return results


def _points(config: ExperimentConfig):
    if config.sweep_variable == "temperature":
        L = [int(config.data_length)]
        return [(config.base_params.with_(temperature=float(T)), L) for T in config.sweep_values]
    # one run per realization at the largest L; smaller L are nested prefixes
    return [(config.base_params, [int(L) for L in config.sweep_values])]


def realization_results(config: ExperimentConfig, keep_couplings: bool = False) -> dict:
    """Run every (point, realization) task.

    Returns ``{(point, realization): {L: row}}`` where ``row["methods"]``
    maps a method to ``(delta, converged, iterations, message)``. With
    ``keep_couplings`` the rows also hold ``"truth"`` and the inferred
    matrices under ``"couplings"``.
    """
    return _run_points(config, _points(config), keep_couplings)


def summarize(config: ExperimentConfig, results: dict) -> list[SweepRecord]:
    """Aggregate :func:`realization_results` into one record per (value, method)."""
    records = []
    for k, value in enumerate(config.sweep_values):
        if config.sweep_variable == "temperature":
            point, L = k, int(config.data_length)
        else:
            point, L = 0, int(value)
        rows = [results[(point, r)][L] for r in range(config.realizations)]
        records += [_aggregate(value, m, rows) for m in config.methods]
    return records


def sweep_temperature(config: ExperimentConfig) -> list[SweepRecord]:
    """Mean reconstruction error per (temperature, method)."""
    if config.sweep_variable != "temperature":
        raise ValueError("sweep_temperature needs sweep_variable='temperature'")
    results = realization_results(config)
    records = summarize(config, results)
    _emit(config, records, results)
    return records


def sweep_data_length(config: ExperimentConfig) -> list[SweepRecord]:
    """Mean reconstruction error per (data length, method)."""
    if config.sweep_variable != "data_length":
        raise ValueError("sweep_data_length needs sweep_variable='data_length'")
    results = realization_results(config)
    records = summarize(config, results)
    _emit(config, records, results)
    return records


def root_fraction_sweep(config: ExperimentConfig) -> list[SweepRecord]:
    """Fraction of spins whose cubic has three real roots, per temperature."""
    if "TAP-cubic" not in config.methods:
        raise ValueError("root_fraction_sweep needs TAP-cubic among the methods")
    records = sweep_temperature(replace(config, output_path=None))
    records = [r for r in records if r.method == "TAP-cubic"]
    if config.output_path:
        write_sweep_csv(config.output_path, records)
    return records


def scatter_experiment(config: ExperimentConfig) -> list[tuple]:
    """Per-pair (i, j, J_true, J_nmf, J_tap_iter, J_tap_cubic, L) rows.

    Uses realization 0 only; missing or failed methods give NaN.
    """
    if config.sweep_variable != "data_length":
        raise ValueError("scatter_experiment sweeps data lengths at one temperature")
    one = replace(config, realizations=1, methods=METHOD_ORDER)
    lengths = [int(L) for L in config.sweep_values]
    results = _run_points(one, [(config.base_params, lengths)], want_scatter=True)
    out = results[(0, 0)]
    rows = []
    n = config.base_params.n_spins
    nan = np.full((n, n), np.nan)
    for L in lengths:
        row = out[L]
        Jt = row["truth"]
        mats = [row["couplings"].get(m, nan) for m in METHOD_ORDER]
        for i in range(n):
            for j in range(n):
                if i != j:
                    rows.append((i, j, Jt[i, j], mats[0][i, j], mats[1][i, j], mats[2][i, j], L))
    if config.output_path:
        write_scatter_csv(config.output_path, rows)
    return rows


def _emit(config, records, results):
    if not config.output_path:
        return
    write_sweep_csv(config.output_path, records)
    vals = list(config.sweep_values) if config.sweep_variable == "temperature" else [config.base_params.temperature]
    _write_log(str(config.output_path) + ".realizations.csv", results, vals)


def write_sweep_csv(path, records) -> None:
    records = sorted(records, key=lambda r: (r.sweep_value, METHOD_ORDER.index(r.method)))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in records:
            w.writerow([
                _fmt(r.sweep_value), r.method, _fmt(r.delta_mean), _fmt(r.delta_stderr),
                _fmt(r.fraction_three_real), _fmt(r.convergence_rate), r.realizations,
            ])


def write_scatter_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCATTER_HEADER)
        for i, j, *vals, L in rows:
            w.writerow([i, j, *(_fmt(float(v)) for v in vals), int(L)])


def default_workers() -> int:
    env = os.environ.get("KISING_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1
