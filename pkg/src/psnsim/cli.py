"""Command-line front end: run, sweep, replay, gen-trace, validate.

Configuration is INI-style (configparser) with sections mirroring the module
split: [experiment], [rate_model], [protocol], [trace], [sweep], [validate].
`--set section.key=value` overrides file values and is echoed into every
output's metadata. Exit codes: 0 success, 1 failed validation, 2 config
errors, 3 data errors.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import itertools
import json
import sys
from pathlib import Path

import numpy as np

from . import routing
from .errors import ConfigurationError, DataError, SimError
from .interest_space import SCENARIOS, WORST_CASE
from .meeting_model import RateModel, SOCIAL_OBLIVIOUS, build_rate_matrix
from .routing import ProtocolSpec
from .sim_engine import (
    ExperimentConfig,
    derive_seed,
    replay_trace,
    run_experiment,
    sample_population_coords,
    summarize,
)
from .trace_io import (
    ProfileTable,
    filter_short_contacts,
    generate_synthetic_trace,
    load_profiles,
    parse_trace,
    write_profiles,
    write_trace,
)
from .interest_space import InterestProfile
from .meeting_model import RateMatrix
from .validation import CHECKS, run_all

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_DATA = 3

_SWEEP_AXES = ("n", "delta", "gamma", "protocol", "ttl")


def _parse_args(argv):
    parser = argparse.ArgumentParser(
        prog="psnsim",
        description="Contact-process simulator for interest-driven "
                    "store-carry-forward networks.",
    )
    parser.add_argument("verb",
                        choices=("run", "sweep", "replay", "gen-trace",
                                 "validate"))
    parser.add_argument("--config", help="INI configuration file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--set", action="append", default=[], dest="overrides",
                        metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable)")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed (overrides config)")
    return parser.parse_args(argv)


def _load_config(path, overrides):
    cp = configparser.ConfigParser()
    if path is not None:
        target = Path(path)
        if not target.is_file():
            raise ConfigurationError(f"config file not found: {path}")
        try:
            with open(target) as handle:
                cp.read_file(handle)
        except configparser.Error as exc:
            raise ConfigurationError(f"config parse error: {exc}") from None
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigurationError(
                f"override must look like section.key=value, got {item!r}"
            )
        key_part, value = item.split("=", 1)
        section, key = key_part.split(".", 1)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section.strip(), key.strip(), value.strip())
    return cp


def _get(cp, section, key, cast, default):
    try:
        if not cp.has_option(section, key):
            return default
        raw = cp.get(section, key)
        if raw.strip().lower() in ("", "none"):
            return None
        if cast is bool:
            return cp.getboolean(section, key)
        return cast(raw)
    except (ValueError, configparser.Error) as exc:
        raise ConfigurationError(
            f"bad value for [{section}] {key}: {exc}"
        ) from None


def _rate_model(cp):
    kind = _get(cp, "rate_model", "kind", str, SOCIAL_OBLIVIOUS)
    lam = _get(cp, "rate_model", "lambda", float, 1.0)
    delta = _get(cp, "rate_model", "delta", float, 0.0)
    return RateModel(kind=kind, lam=lam, delta=delta)


def _protocol(cp):
    kind = _get(cp, "protocol", "kind", str, routing.FM)
    if kind not in routing.KINDS:
        raise ConfigurationError(f"unknown protocol kind {kind!r}")
    copies_default = 1 if kind == routing.FM0 else 2
    return ProtocolSpec(
        kind=kind,
        gamma=_get(cp, "protocol", "gamma", float, 0.0),
        fallback_time=_get(cp, "protocol", "fallback_time", float, None),
        copies=_get(cp, "protocol", "copies", int, copies_default),
        max_hops=_get(cp, "protocol", "max_hops", int, 2),
        eligibility=_get(cp, "protocol", "eligibility", str,
                         routing.FIRST_MEETING),
    )


def _experiment_config(cp, seed_override):
    seed = seed_override if seed_override is not None \
        else _get(cp, "experiment", "master_seed", int, 0)
    scenario = _get(cp, "experiment", "scenario", str, WORST_CASE)
    if scenario not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario {scenario!r}")
    return ExperimentConfig(
        n=_get(cp, "experiment", "n", int, 100),
        m=_get(cp, "experiment", "m", int, 4),
        scenario=scenario,
        model=_rate_model(cp),
        protocol=_protocol(cp),
        trials=_get(cp, "experiment", "trials", int, 1000),
        ttl=_get(cp, "experiment", "ttl", float, None),
        master_seed=seed,
        resample_population=_get(cp, "experiment", "resample_population",
                                 bool, True),
        engine=_get(cp, "experiment", "engine", str, "resample"),
    )


def _metadata(config_dict, overrides):
    return {"config_echo": config_dict, "overrides": list(overrides)}


def _write_results_csv(path, results):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["trial", "seed", "delivered", "delivery_time",
                         "hops", "t1"])
        for i, res in enumerate(results):
            writer.writerow([
                i, res.seed, int(res.delivered),
                "" if res.delivery_time is None else repr(res.delivery_time),
                res.hops,
                "" if res.t1 is None else repr(res.t1),
            ])


def _summary_dict(stats, trials, metadata):
    return {
        "mean_delay": stats.mean,
        "ci_low": stats.ci_low,
        "ci_high": stats.ci_high,
        "delivery_rate": stats.delivery_rate,
        "trials": trials,
        **metadata,
    }


def _write_json(path, payload):
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, default=float)
        handle.write("\n")


def _cmd_run(cp, args, out_dir):
    config = _experiment_config(cp, args.seed)
    results, stats = run_experiment(config, workers=args.workers)
    meta = _metadata(config.to_dict(), args.overrides)
    _write_results_csv(out_dir / "results.csv", results)
    _write_json(out_dir / "summary.json",
                _summary_dict(stats, config.trials, meta))
    return EXIT_OK


def _axis_values(cp, axis):
    raw = cp.get("sweep", axis)
    values = [token.strip() for token in raw.split(",") if token.strip()]
    if not values:
        raise ConfigurationError(f"sweep axis {axis!r} has no values")
    return values


def _cmd_sweep(cp, args, out_dir):
    if not cp.has_section("sweep"):
        raise ConfigurationError("sweep requires a [sweep] section")
    axes = [axis for axis in _SWEEP_AXES if cp.has_option("sweep", axis)]
    if not axes:
        raise ConfigurationError(
            f"[sweep] must list at least one of {_SWEEP_AXES}"
        )
    grids = [_axis_values(cp, axis) for axis in axes]

    rows = []
    for cell in itertools.product(*grids):
        cell_cp = configparser.ConfigParser()
        cell_cp.read_dict({s: dict(cp.items(s)) for s in cp.sections()})
        for axis, value in zip(axes, cell):
            if axis == "n":
                cell_cp.set("experiment", "n", value)
            elif axis == "ttl":
                cell_cp.set("experiment", "ttl", value)
            elif axis == "delta":
                if not cell_cp.has_section("rate_model"):
                    cell_cp.add_section("rate_model")
                cell_cp.set("rate_model", "delta", value)
            elif axis == "gamma":
                if not cell_cp.has_section("protocol"):
                    cell_cp.add_section("protocol")
                cell_cp.set("protocol", "gamma", value)
            elif axis == "protocol":
                if not cell_cp.has_section("protocol"):
                    cell_cp.add_section("protocol")
                cell_cp.set("protocol", "kind", value)
        config = _experiment_config(cell_cp, args.seed)
        _, stats = run_experiment(config, workers=args.workers)
        rows.append((dict(zip(axes, cell)), stats, config))

    with open(out_dir / "sweep.csv", "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([*axes, "mean_delay", "ci_low", "ci_high",
                         "delivery_rate", "trials"])
        for cell, stats, config in rows:
            writer.writerow([
                *(cell[axis] for axis in axes),
                stats.mean, stats.ci_low, stats.ci_high,
                stats.delivery_rate, config.trials,
            ])
    base = _experiment_config(cp, args.seed)
    _write_json(out_dir / "sweep_summary.json", {
        "axes": {axis: _axis_values(cp, axis) for axis in axes},
        "cells": len(rows),
        **_metadata(base.to_dict(), args.overrides),
    })
    return EXIT_OK


def _cmd_replay(cp, args, out_dir):
    trace_path = _get(cp, "trace", "path", str, None)
    profiles_path = _get(cp, "trace", "profiles", str, None)
    source = _get(cp, "trace", "source", str, None)
    dest = _get(cp, "trace", "dest", str, None)
    if not all((trace_path, profiles_path, source, dest)):
        raise ConfigurationError(
            "[trace] needs path, profiles, source and dest for replay"
        )
    min_contact = _get(cp, "trace", "min_contact", float, None)
    ttl = _get(cp, "experiment", "ttl", float, None)
    starts_raw = _get(cp, "trace", "start_times", str, "0")
    try:
        starts = [float(tok) for tok in starts_raw.split(",") if tok.strip()]
    except ValueError:
        raise ConfigurationError(
            f"bad [trace] start_times: {starts_raw!r}"
        ) from None

    with open(trace_path) as handle:
        trace = parse_trace(handle)
    if min_contact is not None:
        trace = filter_short_contacts(trace, min_contact)
    with open(profiles_path) as handle:
        profiles = load_profiles(handle)

    protocol = _protocol(cp)
    results = [
        replay_trace(trace, profiles, protocol, source, dest,
                     start_time=start, ttl=ttl)
        for start in starts
    ]
    stats = summarize(results)
    meta = _metadata({
        "trace": trace_path, "profiles": profiles_path,
        "source": source, "dest": dest, "start_times": starts,
        "min_contact": min_contact, "ttl": ttl,
        "protocol": protocol.kind, "gamma": protocol.gamma,
        "fallback_time": protocol.fallback_time,
    }, args.overrides)
    _write_results_csv(out_dir / "results.csv", results)
    _write_json(out_dir / "summary.json",
                _summary_dict(stats, len(results), meta))
    return EXIT_OK


def _cmd_gen_trace(cp, args, out_dir):
    config = _experiment_config(cp, args.seed)
    horizon = _get(cp, "trace", "horizon", float, None)
    if horizon is None:
        raise ConfigurationError("[trace] horizon is required for gen-trace")
    duration = _get(cp, "trace", "contact_duration", float, 1.0)
    rng = np.random.default_rng(derive_seed(config.master_seed, -1))
    coords = sample_population_coords(config, rng)
    profiles = ProfileTable({
        f"n{i:04d}": InterestProfile(coords[i]) for i in range(len(coords))
    })
    node_ids = sorted(profiles.profiles)
    from .routing import PopulationView  # local import to avoid cycle noise

    view = PopulationView(coords)
    if config.model.kind == SOCIAL_OBLIVIOUS:
        rates = np.full((view.size, view.size), config.model.lam)
    else:
        gram = np.clip(coords @ coords.T, 0.0, 1.0)
        rates = config.model.k * gram + config.model.delta
    np.fill_diagonal(rates, 0.0)
    trace = generate_synthetic_trace(rng, RateMatrix(rates), horizon,
                                     duration, node_ids)
    with open(out_dir / "trace.csv", "w", newline="") as handle:
        write_trace(trace, handle)
    with open(out_dir / "profiles.csv", "w", newline="") as handle:
        write_profiles(profiles, handle)
    _write_json(out_dir / "trace_meta.json", {
        "horizon": horizon, "contact_duration": duration,
        "events": len(trace), "nodes": len(node_ids),
        **_metadata(config.to_dict(), args.overrides),
    })
    return EXIT_OK


def _cmd_validate(cp, args, out_dir):
    seed = args.seed if args.seed is not None \
        else _get(cp, "experiment", "master_seed", int, 0)
    checks_raw = _get(cp, "validate", "checks", str, None)
    checks = None
    if checks_raw:
        checks = [tok.strip() for tok in checks_raw.split(",") if tok.strip()]
        unknown = [name for name in checks if name not in CHECKS]
        if unknown:
            raise ConfigurationError(f"unknown checks: {unknown}")
    report = run_all(master_seed=seed, checks=checks, workers=args.workers)
    payload = {
        "checks": report,
        "all_passed": all(entry["passed"] for entry in report),
        "master_seed": seed,
        "overrides": list(args.overrides),
    }
    _write_json(out_dir / "report.json", payload)
    for entry in report:
        status = "PASS" if entry["passed"] else "FAIL"
        print(f"{status} {entry['check_name']} "
              f"statistic={entry['statistic']} threshold={entry['threshold']}")
    return EXIT_OK if payload["all_passed"] else EXIT_VALIDATION


_VERBS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "replay": _cmd_replay,
    "gen-trace": _cmd_gen_trace,
    "validate": _cmd_validate,
}


def main(argv=None) -> int:
    args = _parse_args(sys.argv[1:] if argv is None else argv)
    try:
        cp = _load_config(args.config, args.overrides)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        return _VERBS[args.verb](cp, args, out_dir)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
