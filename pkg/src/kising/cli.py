"""Command-line entry point.

Configuration is an INI file with one section per module (keys may also
sit above the first section). Every key has a kebab-case flag; flags win
over the file. See README.md for the schema.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__

# key -> (section, type, default); default None means "no default"
SCHEMA = {
    "n_spins": ("model", int, 20),
    "temperature": ("model", float, None),
    "coupling_scale": ("model", float, 1.0),
    "asymmetry": ("model", float, 1.0),
    "external_field": ("model", str, "0"),
    "seed": ("model", int, 0),
    "data_length": ("simulation", int, None),
    "burn_in_sweeps": ("simulation", int, 1000),
    "lag_attempts": ("moments", int, None),  # None resolves to one sweep (N attempts)
    "estimator": ("moments", str, "tanh"),
    "method": ("inference", str, "tap-cubic"),
    "tolerance": ("inference", float, 1e-5),
    "max_iterations": ("inference", int, 10_000),
    "sweep_values": ("experiment", str, ""),
    "realizations": ("experiment", int, None),
    "methods": ("experiment", str, "nmf,tap-iterative,tap-cubic"),
    "sweep_estimator": ("experiment", str, "finite_difference"),
    "sweep_lag_attempts": ("experiment", int, 1),
    "workers": ("experiment", int, 0),
    "full_scale": ("experiment", bool, False),
    "couplings": ("io", str, ""),
    "moments": ("io", str, ""),
    "truth": ("io", str, ""),
    "trajectory": ("io", str, ""),
    "output": ("io", str, ""),
}
ALIASES = {
    "n": "n_spins", "t": "temperature", "l": "data_length", "j": "coupling_scale",
    "k": "asymmetry", "theta": "external_field", "burn_in": "burn_in_sweeps",
    "d_estimator": "estimator",
}
SUBCOMMANDS = (
    "generate", "simulate", "infer", "sweep-temperature", "sweep-length",
    "root-fraction", "scatter", "oracle-check",
)
METHOD_NAMES = {"nmf": "nMF", "tap-iterative": "TAP-iterative", "tap-cubic": "TAP-cubic"}


class ConfigError(ValueError):
    pass


def _canonical_key(key):
    k = key.strip().replace("-", "_")
    k = ALIASES.get(k.lower(), k)
    if k not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    return k


def _convert(key, raw):
    _, typ, _ = SCHEMA[key]
    if isinstance(raw, typ) and not isinstance(raw, bool) or typ is bool and isinstance(raw, bool):
        value = raw
    else:
        text = str(raw).strip()
        try:
            if typ is bool:
                if text.lower() in ("1", "true", "yes", "on"):
                    value = True
                elif text.lower() in ("0", "false", "no", "off"):
                    value = False
                else:
                    raise ValueError(text)
            elif typ is int:
                f = float(text)
                if not f.is_integer():
                    raise ValueError(text)
                value = int(f)
            elif typ is float:
                value = float(text)
            else:
                value = text
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from None
    _check_range(key, value)
    return value


def _check_range(key, v):
    positive = {"temperature", "coupling_scale", "data_length", "tolerance", "max_iterations",
                "realizations", "lag_attempts", "sweep_lag_attempts"}
    if key in positive and not v > 0:
        raise ConfigError(f"{key} must be > 0, got {v}")
    if key in {"asymmetry", "burn_in_sweeps", "workers", "seed"} and v < 0:
        raise ConfigError(f"{key} must be >= 0, got {v}")
    if key == "n_spins" and v < 2:
        raise ConfigError(f"n_spins must be >= 2, got {v}")
    if key == "seed" and v >= 2**64:
        raise ConfigError("seed must fit in 64 bits")
    if key in ("estimator", "sweep_estimator") and v not in ("tanh", "finite_difference"):
        raise ConfigError(f"estimator must be tanh or finite_difference, got {v!r}")
    if key == "method" and v not in METHOD_NAMES:
        raise ConfigError(f"method must be one of {sorted(METHOD_NAMES)}, got {v!r}")


def read_config_file(path) -> dict:
    """Parse an INI config into ``{key: raw string}``; unknown keys are errors."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    parser.read_string("[__top__]\n" + text)
    out = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            k = _canonical_key(key)
            home = SCHEMA[k][0]
            if section not in ("__top__", home):
                raise ConfigError(f"key {key!r} belongs in section [{home}], found in [{section}]")
            out[k] = raw
    return out


def parse_config(path=None, overrides=None) -> dict:
    """Resolve a configuration: defaults < file < overrides.

    Returns a dict holding every key in :data:`SCHEMA`; keys without a
    default and without a value are ``None``.
    """
    merged = {}
    if path:
        merged.update(read_config_file(path))
    for key, raw in (overrides or {}).items():
        if raw is not None:
            merged[_canonical_key(key)] = raw
    resolved = {}
    for key, (_, _, default) in SCHEMA.items():
        resolved[key] = _convert(key, merged[key]) if key in merged else default
    if resolved["lag_attempts"] is None:
        resolved["lag_attempts"] = resolved["n_spins"]
    return resolved


def config_digest(cfg: dict) -> str:
    text = "\n".join(f"{k}={cfg[k]!r}" for k in sorted(cfg))
    return hashlib.sha256(text.encode()).hexdigest()


def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) in (None, "")]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")


def _field(cfg):
    raw = cfg["external_field"]
    try:
        return float(raw)
    except ValueError:
        vec = np.array([float(v) for v in Path(raw).read_text().split()])
        if vec.shape != (cfg["n_spins"],):
            raise ConfigError(f"external_field file {raw} has {vec.size} entries, expected {cfg['n_spins']}")
        return vec


def model_params(cfg, temperature=None):
    from .sk_model import ModelParams

    T = temperature if temperature is not None else cfg["temperature"]
    return ModelParams(
        n_spins=cfg["n_spins"],
        temperature=T if T is not None else 1.0,
        coupling_scale=cfg["coupling_scale"],
        asymmetry=cfg["asymmetry"],
        external_field=_field(cfg),
        rng_seed=cfg["seed"],
    )


def write_manifest(cfg, outputs, subcommand):
    """Flat ``key=value`` manifest next to the first output."""
    if not outputs:
        return None
    path = Path(str(outputs[0]) + ".manifest")
    lines = [
        f"subcommand={subcommand}",
        f"config_digest={config_digest(cfg)}",
        f"base_seed={cfg['seed']}",
        f"tool_version={__version__}",
        f"timestamp={datetime.now(timezone.utc).isoformat(timespec='seconds')}",
        f"output_files={','.join(str(o) for o in outputs)}",
    ]
    lines += [f"config.{k}={cfg[k]}" for k in sorted(cfg)]
    path.write_text("\n".join(lines) + "\n")
    return path


# subcommands -------------------------------------------------------------


def cmd_generate(cfg):
    from .sk_model import sample_couplings, write_matrix

    _require(cfg, "output")
    J = sample_couplings(model_params(cfg))
    write_matrix(cfg["output"], J)
    return [cfg["output"]]


def _load_or_sample(cfg, params):
    from .sk_model import read_matrix, sample_couplings

    if cfg["couplings"]:
        J = read_matrix(cfg["couplings"])
        if J.shape[0] != params.n_spins:
            raise ConfigError(f"couplings file is {J.shape[0]}x{J.shape[0]} but n_spins={params.n_spins}")
        return J
    return sample_couplings(params)


def cmd_simulate(cfg):
    from .glauber import SimulationSchedule, run
    from .moments import MomentAccumulator, finalize, write_moments

    _require(cfg, "temperature", "data_length", "output")
    params = model_params(cfg)
    J = _load_or_sample(cfg, params)
    schedule = SimulationSchedule.sweeps(params.n_spins, cfg["data_length"], cfg["burn_in_sweeps"], cfg["seed"])
    acc = MomentAccumulator(params.n_spins, params.beta, lag=cfg["lag_attempts"])
    dump = cfg["trajectory"] or None
    run(params, J, schedule, acc, dump_path=dump)
    write_moments(cfg["output"], finalize(acc, cfg["estimator"]))
    return [cfg["output"]] + ([dump] if dump else [])


def cmd_infer(cfg):
    from .inference import fraction_three_real, infer, reconstruction_error, write_result
    from .moments import read_moments
    from .sk_model import read_matrix

    _require(cfg, "temperature", "moments", "output")
    est = read_moments(cfg["moments"])
    method = METHOD_NAMES[cfg["method"]]
    kw = {}
    if method == "TAP-iterative":
        kw = dict(tolerance=cfg["tolerance"], max_iterations=cfg["max_iterations"])
    res = infer(method, est, cfg["temperature"], **kw)
    write_result(cfg["output"], res)
    print(f"method {method} converged={res.converged} iterations={res.iterations}")
    if cfg["truth"]:
        print(f"delta {reconstruction_error(res.couplings, read_matrix(cfg['truth'])):.9g}")
    if method != "nMF":
        d = res.diagnostics
        print(f"fraction_three_real {fraction_three_real(d):.9g}")
        print("i x_i root_count selected_F")
        for i in range(len(d.x)):
            print(f"{i} {d.x[i]:.9g} {int(d.root_counts[i])} {d.selected_roots[i]:.9g}")
    return [cfg["output"]]


def _experiment(cfg, which):
    from .harness import PRESETS, ExperimentConfig, default_workers

    preset = dict(PRESETS[which]["full" if cfg["full_scale"] else "desk"])
    cfg = dict(cfg)
    explicit = cfg.pop("_explicit")
    for key in ("external_field", "temperature", "data_length", "realizations"):
        if key in preset and key not in explicit:
            cfg[key] = str(preset[key]) if key == "external_field" else preset[key]
    if cfg["data_length"] is None and which == "root-fraction":
        cfg["data_length"] = cfg["n_spins"] * 10**6
    if cfg["sweep_values"]:
        values = tuple(float(v) for v in cfg["sweep_values"].split(","))
    else:
        values = preset["sweep_values"]
    sweep_variable = "temperature" if which in ("sweep-temperature", "root-fraction") else "data_length"
    if sweep_variable == "data_length":
        values = tuple(int(v) for v in values)
        _require(cfg, "temperature")
    else:
        _require(cfg, "data_length")
    methods = tuple(METHOD_NAMES[m.strip()] for m in cfg["methods"].split(",") if m.strip())
    if which == "root-fraction" and "TAP-cubic" not in methods:
        methods += ("TAP-cubic",)
    workers = cfg["workers"] or default_workers()
    return cfg, ExperimentConfig(
        base_params=model_params(cfg, cfg["temperature"] or 1.0),
        sweep_variable=sweep_variable,
        sweep_values=values,
        realizations=cfg["realizations"] or 1,
        methods=methods,
        d_estimator=cfg["sweep_estimator"],
        data_length=cfg["data_length"] or 1,
        burn_in_sweeps=cfg["burn_in_sweeps"],
        lag_attempts=cfg["sweep_lag_attempts"],
        tolerance=cfg["tolerance"],
        max_iterations=cfg["max_iterations"],
        workers=workers,
        output_path=cfg["output"],
    )


def _print_records(records):
    for r in records:
        print(
            f"{r.sweep_value:>12.6g} {r.method:<14} delta={r.delta_mean:.6g}+-{r.delta_stderr:.2g} "
            f"frac3={r.fraction_three_real:.3f} ok={r.convergence_rate:.2f}"
        )


def cmd_sweep(cfg, which):
    from . import harness

    _require(cfg, "output")
    cfg, exp = _experiment(cfg, which)
    fn = {
        "sweep-temperature": harness.sweep_temperature,
        "sweep-length": harness.sweep_data_length,
        "root-fraction": harness.root_fraction_sweep,
    }[which]
    records = fn(exp)
    _print_records(records)
    outputs = [cfg["output"]]
    if which != "root-fraction":
        outputs.append(cfg["output"] + ".realizations.csv")
    return outputs


def cmd_scatter(cfg):
    from . import harness

    _require(cfg, "output")
    cfg, exp = _experiment(cfg, "scatter")
    rows = harness.scatter_experiment(exp)
    print(f"wrote {len(rows)} rows")
    return [cfg["output"]]


def cmd_oracle_check(cfg, explicit):
    """Small-N checks of the dynamics against master-equation enumeration."""
    from .glauber import SimulationSchedule, boltzmann_distribution, exact_stationary_distribution, run
    from .moments import MomentAccumulator, batch_estimates, batch_standard_error, exact_moments, finalize

    cfg = dict(cfg)
    for key, value in (("n_spins", 3), ("asymmetry", 0.0), ("temperature", 1.0), ("data_length", 10**6)):
        if key not in explicit:
            cfg[key] = value
    params = model_params(cfg)
    J = _load_or_sample(cfg, params)
    p = exact_stationary_distribution(params, J)
    ok = True
    report = [f"oracle-check N={params.n_spins} T={params.temperature} k={params.asymmetry}"]
    norm = abs(p.sum() - 1.0)
    good = norm < 1e-12 and p.min() >= 0
    ok &= good
    report.append(f"normalization |sum-1|={norm:.3g} min={p.min():.3g} {'PASS' if good else 'FAIL'}")
    if np.allclose(J, J.T, atol=0, rtol=0):
        err = float(np.max(np.abs(p - boltzmann_distribution(params, J))))
        good = err < 1e-10
        ok &= good
        report.append(f"boltzmann max|p_master - p_boltzmann|={err:.3g} (tol 1e-10) {'PASS' if good else 'FAIL'}")
    else:
        report.append("boltzmann skipped (asymmetric couplings)")
    exact = exact_moments(params, J)
    L = cfg["data_length"]
    batches = 20
    acc = MomentAccumulator(params.n_spins, params.beta, checkpoints=[L * b // batches for b in range(1, batches)])
    run(params, J, SimulationSchedule.sweeps(params.n_spins, L, cfg["burn_in_sweeps"], cfg["seed"]), acc)
    est = finalize(acc, "tanh")
    parts = batch_estimates(acc)
    for name, got, want, fn in (
        ("m", est.m, exact.m, lambda e: e.m),
        ("C0", est.C0, exact.C0, lambda e: e.C0),
    ):
        se = batch_standard_error(parts, fn)
        z = np.max(np.abs(got - want) / np.maximum(se, 1e-300))
        good = z < 3.0
        ok &= good
        report.append(f"simulated {name} vs exact: max |z|={z:.2f} (tol 3) {'PASS' if good else 'FAIL'}")
    print("\n".join(report))
    outputs = []
    if cfg["output"]:
        Path(cfg["output"]).write_text("\n".join(report) + "\n")
        outputs.append(cfg["output"])
    return outputs, ok


def build_parser():
    parser = argparse.ArgumentParser(prog="kising", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI configuration file")
        for key, (_, typ, _) in SCHEMA.items():
            flag = "--" + key.replace("_", "-")
            if typ is bool:
                p.add_argument(flag, dest=key, action="store_const", const="true", default=None)
            else:
                p.add_argument(flag, dest=key, default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {k: getattr(args, k) for k in SCHEMA}
    try:
        explicit = set(read_config_file(args.config)) if args.config else set()
        explicit |= {k for k, v in overrides.items() if v is not None}
        cfg = parse_config(args.config, overrides)
        if cfg["workers"] == 0 and os.environ.get("KISING_WORKERS"):
            cfg["workers"] = _convert("workers", os.environ["KISING_WORKERS"])
        name = args.subcommand
        ok = True
        if name == "generate":
            outputs = cmd_generate(cfg)
        elif name == "simulate":
            outputs = cmd_simulate(cfg)
        elif name == "infer":
            outputs = cmd_infer(cfg)
        elif name == "scatter":
            outputs = cmd_scatter(dict(cfg, _explicit=explicit))
        elif name == "oracle-check":
            outputs, ok = cmd_oracle_check(cfg, explicit)
        else:
            outputs = cmd_sweep(dict(cfg, _explicit=explicit), name)
        write_manifest(cfg, outputs, name)
    except (ValueError, OSError) as exc:
        print(f"kising {args.subcommand}: error: {exc}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
