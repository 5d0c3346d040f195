"""Command line front end.

Five subcommands: simulate (generate records from a given system), identify
(run estimators on CSV records), pendulum (the variable-length pendulum
study), montecarlo (the random-bank comparison study), and atoms-info
(dictionary diagnostics). Every run is deterministic given --seed and the
config; outputs are plain CSV and JSON files in --out.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings

import numpy as np

from .atoms import GridSpec, build_pole_grid, hankel_nuclear_norm_of_atom
from .estimators import (EstimatorSpec, Method, case_study_gamma_grid,
                         identify, order_sweep, orders_to_csv)
from .experiments import (MonteCarloSpec, PendulumSpec, pendulum_dataset,
                          run_monte_carlo)
from .ltp import (PeriodicStateSpace, fit_metric, impulse_from_csv,
                  impulse_to_csv, is_stable, simulate,
                  true_impulse_response)
from .regression import dataset_from_csv, record_to_csv


class CliError(RuntimeError):
    pass


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc


def _resolve(config_path, target):
    """File paths inside a config are relative to the config's directory."""
    if config_path is None or os.path.isabs(target):
        return target
    return os.path.join(os.path.dirname(os.path.abspath(config_path)),
                        target)


def _seed_of(args, config, fallback=0):
    if args.seed is not None:
        return args.seed
    return int(config.get("seed", fallback))


def _write_json(path, obj):
    with open(path, "w", newline="\n") as fh:
        fh.write(json.dumps(obj, indent=2) + "\n")


def _say(args, message):
    if args.verbose:
        print(message, file=sys.stderr, flush=True)


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    if "system" not in config:
        raise CliError("simulate config needs a 'system' entry "
                       "(path to a system JSON file, or an inline object)")
    source = config["system"]
    if isinstance(source, str):
        system = PeriodicStateSpace.from_json(_resolve(args.config, source))
    else:
        system = PeriodicStateSpace.from_dict(source)
    n_samples = int(config.get("nP", 500))
    if n_samples < 1 or n_samples % system.period != 0:
        raise CliError(f"nP = {n_samples} is not a positive multiple of the "
                       f"period {system.period}")
    sigma2 = float(config.get("noise_sigma2", 0.0))
    if sigma2 < 0:
        raise CliError("noise_sigma2 must be >= 0")
    n_taps = int(config.get("N", 100))
    with_validation = bool(config.get("validation", True))

    report = is_stable(system)
    if not report.stable:
        warnings.warn(
            f"system is unstable (spectral radius "
            f"{report.spectral_radius:.6f})", RuntimeWarning, stacklevel=2)
        if not args.allow_unstable:
            raise CliError(
                "refusing to simulate an unstable system without "
                "--allow-unstable")

    rng = np.random.default_rng(_seed_of(args, config))
    sigma = math.sqrt(sigma2)

    def record():
        u = rng.standard_normal(n_samples)
        z = simulate(system, u) + sigma * rng.standard_normal(n_samples)
        return u, z

    u, z = record()
    record_to_csv(os.path.join(args.out, "train.csv"), u, z)
    written = ["train.csv"]
    if with_validation:
        u_val, z_val = record()
        record_to_csv(os.path.join(args.out, "validation.csv"), u_val, z_val)
        written.append("validation.csv")
    impulse_to_csv(os.path.join(args.out, "truth_impulse.csv"),
                   true_impulse_response(system, n_taps))
    written.append("truth_impulse.csv")
    print(f"simulate: wrote {', '.join(written)} to {args.out}")
    return 0


def _method_specs(config) -> list:
    if "methods" in config:
        return [EstimatorSpec.from_dict(m) for m in config["methods"]]
    if "method" in config:
        return [EstimatorSpec.from_dict({"method": config["method"]})]
    return [EstimatorSpec(method=m) for m in
            (Method.LS, Method.HANK, Method.ATOM, Method.GATOM)]


def _run_methods(args, data, specs, truth_impulses) -> None:
    """identify() per spec, writing the report file family for each."""
    for spec in specs:
        name = spec.method.value
        _say(args, f"identify: running {name}")
        report = identify(data, spec)
        report.to_json(os.path.join(args.out, f"report_{name}.json"))
        impulse_to_csv(os.path.join(args.out, f"impulse_{name}.csv"),
                       report.impulse)
        if report.gamma_grid.size:
            report.eps_curve_to_csv(
                os.path.join(args.out, f"eps_{name}.csv"))
        truth = truth_impulses(spec) if truth_impulses else None
        if truth is not None and min(truth.n_taps,
                                     report.impulse.n_taps) >= 100:
            fit = fit_metric(truth, report.impulse, estimator_name=name,
                             gamma_selected=report.gamma_star)
            _write_json(os.path.join(args.out, f"fit_{name}.json"),
                        fit.to_dict())
            print(f"identify: {name}: W = {fit.score:.3f}, "
                  f"gamma* = {report.gamma_star}")
        elif truth is not None:
            print(f"identify: {name}: gamma* = {report.gamma_star} "
                  "(fit skipped: the score needs 100 lags)")
        else:
            print(f"identify: {name}: gamma* = {report.gamma_star}")


def cmd_identify(args) -> int:
    config = _load_config(args.config)
    if "P" not in config or "train" not in config:
        raise CliError("identify config needs 'P' and 'train' entries")
    period = int(config["P"])
    train = _resolve(args.config, config["train"])
    validation = config.get("validation")
    if validation is not None:
        validation = _resolve(args.config, validation)
    try:
        data = dataset_from_csv(period, train, validation)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot load dataset: {exc}") from exc

    truth = None
    if config.get("truth") is not None:
        truth = impulse_from_csv(_resolve(args.config, config["truth"]))
        if truth.period != period:
            raise CliError(
                f"truth impulse period {truth.period} does not match P = "
                f"{period}")
    specs = _method_specs(config)
    _run_methods(args, data, specs,
                 (lambda spec: truth) if truth is not None else None)
    return 0


def cmd_pendulum(args) -> int:
    config = _load_config(args.config)
    spec = PendulumSpec.from_dict(config.get("pendulum"))
    seed = _seed_of(args, config)
    data, system = pendulum_dataset(spec, seed)
    rho = is_stable(system).spectral_radius
    _write_json(os.path.join(args.out, "pendulum_truth.json"),
                {"pendulum": spec.to_dict(),
                 "seed": seed,
                 "spectral_radius": rho,
                 "system": system.to_dict()})
    record_to_csv(os.path.join(args.out, "pendulum_data.csv"),
                  data.u, data.z)
    record_to_csv(os.path.join(args.out, "pendulum_validation.csv"),
                  data.u_val, data.z_val)
    print(f"pendulum: P = {spec.period}, nP = {spec.n_samples}, "
          f"spectral radius {rho:.12f}")

    if "methods" in config:
        specs = [EstimatorSpec.from_dict(m) for m in config["methods"]]
    else:
        grid = tuple(case_study_gamma_grid())
        specs = [EstimatorSpec(method=m, gamma_grid=grid) for m in
                 (Method.LS, Method.HANK, Method.ATOM, Method.GATOM)]
    truths = {}

    def truth_for(mspec):
        if mspec.n_taps not in truths:
            truths[mspec.n_taps] = true_impulse_response(system,
                                                         mspec.n_taps)
        return truths[mspec.n_taps]

    _run_methods(args, data, specs, truth_for)

    if config.get("sweep", True):
        values = np.asarray(config.get("sweep_values",
                                       case_study_gamma_grid()),
                            dtype=np.float64)
        for mspec in specs:
            if mspec.method is Method.LS:
                continue
            _say(args, f"pendulum: order sweep for {mspec.method.value}")
            orders = order_sweep(data, mspec, values)
            orders_to_csv(
                os.path.join(args.out,
                             f"orders_{mspec.method.value}.csv"),
                values, orders)
    return 0


def cmd_montecarlo(args) -> int:
    config = _load_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.full_scale:
        config["n_systems"] = 100
    spec = MonteCarloSpec.from_dict(config)
    progress = (lambda msg: print(msg, file=sys.stderr, flush=True)) \
        if args.verbose else None
    stats = run_monte_carlo(spec, progress=progress)
    stats.to_json(os.path.join(args.out, "mc_stats.json"))
    stats.raw_to_csv(os.path.join(args.out, "mc_raw.csv"))
    stats.eps_curves_to_csv(os.path.join(args.out, "mc_eps_curves.csv"))

    for method in stats.methods:
        for sigma2 in stats.noise_levels:
            entry = stats.summarize(stats.scores(method, sigma2))
            median = entry["median"]
            median_text = "n/a" if median is None else f"{median:8.3f}"
            print(f"montecarlo: {method:6s} sigma2={sigma2:<6g} "
                  f"median W = {median_text}  (n={entry['count']})")
    total = spec.n_systems * len(spec.noise_levels) * len(spec.methods)
    failed = len(stats.failures)
    if failed:
        print(f"montecarlo: {failed}/{total} cells failed",
              file=sys.stderr)
    return 3 if failed > 0.1 * total else 0


def cmd_atoms_info(args) -> int:
    config = _load_config(args.config)
    n_taps = int(config.get("N", 100))
    hankel_rows = int(config.get("m", 20))
    grid_cfg = config.get("grid")
    spec = GridSpec.from_config(grid_cfg, n_taps)
    grid = build_pole_grid(spec)
    norms = np.array([hankel_nuclear_norm_of_atom(w, n_taps, hankel_rows)
                      for w in grid.poles])
    deviations = np.abs(norms - 1.0)
    radii = np.abs(grid.poles)
    info = {
        "preset": grid_cfg if isinstance(grid_cfg, str) else None,
        "N": n_taps,
        "m": hankel_rows,
        "n_radii": len(spec.radii),
        "n_angles": len(spec.angles),
        "n_poles": int(grid.n_poles),
        "n_poles_nominal": int(grid.n_poles_nominal),
        "n_real": int(np.sum(~grid.is_complex)),
        "n_complex": int(np.sum(grid.is_complex)),
        "max_radius": float(radii.max()),
        "hankel_nuclear_norm": {
            "min": float(norms.min()),
            "max": float(norms.max()),
            "worst_deviation": float(deviations.max()),
            "n_within_1e-3": int(np.sum(deviations <= 1e-3)),
            "worst_pole": {
                "w_re": float(grid.poles[deviations.argmax()].real),
                "w_im": float(grid.poles[deviations.argmax()].imag),
                "radius": float(radii[deviations.argmax()]),
            },
        },
    }
    _write_json(os.path.join(args.out, "atoms_info.json"), info)
    print(f"atoms-info: {grid.n_poles} poles, nuclear norm in "
          f"[{norms.min():.6f}, {norms.max():.6f}]")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ltpid",
        description="Identify uniform low-order linear time-periodic "
                    "systems from input/output data.")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "simulate": (cmd_simulate,
                     "Generate input/output records from a system JSON."),
        "identify": (cmd_identify,
                     "Run estimators on CSV records."),
        "pendulum": (cmd_pendulum,
                     "Variable-length pendulum study."),
        "montecarlo": (cmd_montecarlo,
                       "Random-bank comparison study."),
        "atoms-info": (cmd_atoms_info,
                       "Dictionary diagnostics."),
    }
    for name, (func, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", default="ltpid_out",
                       help="output directory (created if absent)")
        p.add_argument("--seed", type=int, default=None,
                       help="RNG seed; overrides the config's seed")
        p.add_argument("--verbose", action="store_true",
                       help="progress chatter on stderr")
        if name == "simulate":
            p.add_argument("--allow-unstable", action="store_true",
                           help="simulate even if the system is unstable")
        if name == "montecarlo":
            p.add_argument("--full-scale", action="store_true",
                           help="run the 100-system bank")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        os.makedirs(args.out, exist_ok=True)
        return args.func(args)
    except CliError as exc:
        print(f"ltpid {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError) as exc:
        print(f"ltpid {args.command}: error: {exc}", file=sys.stderr)
        return 1


def entry_point() -> None:
    sys.exit(main())
