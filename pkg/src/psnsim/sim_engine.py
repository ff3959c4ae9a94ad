"""Trial engines: competing exponential clocks, persistent clocks, and
contact-trace replay.

The default engine resamples every active clock after each event, which is
distributionally equivalent to persistent per-pair clocks by memorylessness;
a persistent-clock engine is kept for cross-checking that equivalence.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import routing
from .analysis import SummaryStats, mean_ci
from .errors import ConfigurationError, DataError, ProtocolViolationError
from .interest_space import (
    SCENARIOS,
    WORST_CASE,
    UNIFORM_ANGLE,
    sample_profile_coords,
)
from .meeting_model import (
    INTEREST_BASED,
    RateModel,
    build_rate_matrix,
    pair_rates_rows,
    sample_min_meeting,
)
from .routing import DEST, SOURCE, PopulationView, ProtocolSpec

_MASK64 = (1 << 64) - 1

ENGINE_RESAMPLE = "resample"
ENGINE_PERSISTENT = "persistent"


def derive_seed(master_seed: int, index: int) -> int:
    """Per-trial 64-bit sub-seed: SplitMix64 finalizer over master + index.

    sub_seed(i) = splitmix64(master_seed + (i + 1) * 0x9E3779B97F4A7C15).
    Fixed so results are reproducible independent of worker scheduling.
    """
    x = (master_seed + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    m: int
    scenario: str
    model: RateModel
    protocol: ProtocolSpec
    trials: int
    ttl: float | None = None
    master_seed: int = 0
    resample_population: bool = True
    engine: str = ENGINE_RESAMPLE

    def __post_init__(self):
        if self.n < 0:
            raise ConfigurationError(f"n must be >= 0, got {self.n}")
        if self.m < 2:
            raise ConfigurationError(f"m must be >= 2, got {self.m}")
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.ttl is not None and self.ttl <= 0.0:
            raise ConfigurationError("ttl must be > 0")
        if self.engine not in (ENGINE_RESAMPLE, ENGINE_PERSISTENT):
            raise ConfigurationError(f"unknown engine {self.engine!r}")

    def resolved_protocol(self) -> ProtocolSpec:
        """IB fallback defaults to n (the paper's 'after time n', read in rate
        units); everything else passes through."""
        spec = self.protocol
        if spec.receiver_rule == routing.THRESHOLD and spec.fallback_time is None:
            return replace(spec, fallback_time=float(max(self.n, 1)))
        return spec

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "scenario": self.scenario,
            "rate_model": {
                "kind": self.model.kind,
                "lambda": self.model.lam,
                "delta": self.model.delta,
            },
            "protocol": {
                "kind": self.protocol.kind,
                "gamma": self.protocol.gamma,
                "fallback_time": self.protocol.fallback_time,
                "copies": self.protocol.copies,
                "max_hops": self.protocol.max_hops,
                "eligibility": self.protocol.eligibility,
            },
            "trials": self.trials,
            "ttl": self.ttl,
            "master_seed": self.master_seed,
            "resample_population": self.resample_population,
            "engine": self.engine,
            "seed_mixer": "splitmix64",
        }


@dataclass(frozen=True)
class TrialResult:
    delivered: bool
    delivery_time: float | None
    hops: int
    relay_transfers: int
    t1: float | None
    seed: int | None = None

    def __post_init__(self):
        if self.delivered != (self.delivery_time is not None):
            raise ConfigurationError("delivered iff delivery_time present")


def sample_population_coords(config: ExperimentConfig,
                             rng: np.random.Generator) -> np.ndarray:
    """Fresh (n+2, m) population: canonical source, scenario destination,
    relays drawn with uniform angle to the source."""
    m = config.m
    coords = np.zeros((config.n + 2, m))
    coords[SOURCE, 0] = 1.0
    if config.scenario == WORST_CASE:
        coords[DEST, 1] = 1.0
    else:
        coords[DEST] = sample_profile_coords(rng, m, 1)[0]
    if config.n:
        coords[2:] = sample_profile_coords(rng, m, config.n)
    return coords


def _active_pairs_arrays(spec, state, view, model):
    """(givers, receivers, rates) arrays for the current active pairs,
    in the same order as routing.active_pairs."""
    holders = sorted(state.holders)
    g_list = [np.array(holders, dtype=int)]
    r_list = [np.full(len(holders), DEST, dtype=int)]
    giver_nodes = routing.givers(spec, state)
    if giver_nodes:
        mask = routing.receiver_mask(spec, state, view).copy()
        mask[:2] = False
        for node in state.holders:
            mask[node] = False
        receivers = np.flatnonzero(mask)
        if receivers.size:
            for giver in giver_nodes:
                g_list.append(np.full(receivers.size, giver, dtype=int))
                r_list.append(receivers)
    g = np.concatenate(g_list)
    r = np.concatenate(r_list)
    rates = pair_rates_rows(model, view.coords[g], view.coords[r])
    return g, r, rates


def _finish(state, delivered: bool, seed: int | None) -> TrialResult:
    return TrialResult(
        delivered=delivered,
        delivery_time=state.delivered_at if delivered else None,
        hops=state.delivery_hops if delivered else 0,
        relay_transfers=state.transfers,
        t1=state.t1,
        seed=seed,
    )


def _check_invariants(spec, state):
    if state.total_copies() != spec.copies:
        raise ProtocolViolationError(
            f"copy count drifted to {state.total_copies()} (allotted {spec.copies})"
        )
    worst = max(state.depths[node] for node in state.holders)
    if worst > spec.max_hops - 1:
        raise ProtocolViolationError(f"holder depth {worst} breaks the hop bound")
    if state.delivered and state.delivery_hops > spec.max_hops:
        raise ProtocolViolationError("delivery path exceeds the hop bound")


def run_trial(config: ExperimentConfig, rng: np.random.Generator,
              coords: np.ndarray | None = None,
              seed: int | None = None,
              check_invariants: bool = False) -> TrialResult:
    """One message delivery under competing exponential clocks.

    Every iteration recomputes the active pairs and samples the first firing
    among their clocks (valid by memorylessness). Threshold protocols with a
    pending fallback cap the clock at the fallback instant and resample, so
    the active set is always consistent with the current time.
    """
    if coords is None:
        coords = sample_population_coords(config, rng)
    view = PopulationView(coords)
    spec = config.resolved_protocol()
    state = routing.initial_state(spec, view)

    while True:
        g, r, rates = _active_pairs_arrays(spec, state, view, config.model)
        positive = rates > 0.0
        if not positive.any():
            raise ConfigurationError(
                "all active pair rates are zero; set ttl or delta > 0"
            )
        dt, idx = sample_min_meeting(rng, rates[positive])
        event_time = state.elapsed + dt
        boundary = routing.fallback_boundary(spec, state, view)
        if boundary is not None and event_time > boundary:
            state.elapsed = boundary
            continue
        if config.ttl is not None and event_time > config.ttl:
            return _finish(state, delivered=False, seed=seed)
        keep = np.flatnonzero(positive)[idx]
        _, decision = routing.on_contact(
            spec, state, int(g[keep]), int(r[keep]), event_time, view
        )
        if check_invariants:
            _check_invariants(spec, state)
        if decision.delivered:
            return _finish(state, delivered=True, seed=seed)


def run_trial_persistent(config: ExperimentConfig, rng: np.random.Generator,
                         coords: np.ndarray | None = None,
                         seed: int | None = None) -> TrialResult:
    """Persistent-clock engine: every pair keeps its own Poisson process.

    Meetings fire for all pairs; only meetings between currently active
    pairs change protocol state. Kept small (O(pairs) per event) for
    cross-validating the resampling engine.
    """
    if coords is None:
        coords = sample_population_coords(config, rng)
    view = PopulationView(coords)
    spec = config.resolved_protocol()
    state = routing.initial_state(spec, view)
    size = view.size

    if config.model.kind == INTEREST_BASED:
        gram = np.clip(coords @ coords.T, 0.0, 1.0)
        rates = config.model.k * gram + config.model.delta
    else:
        rates = np.full((size, size), config.model.lam)
    np.fill_diagonal(rates, 0.0)

    next_time = np.full((size, size), np.inf)
    iu = np.triu_indices(size, k=1)
    pos = rates[iu] > 0.0
    draws = np.full(iu[0].size, np.inf)
    draws[pos] = rng.exponential(1.0 / rates[iu][pos])
    next_time[iu] = draws

    while True:
        flat = int(np.argmin(next_time))
        i, j = divmod(flat, size)
        t = next_time[i, j]
        if not math.isfinite(t):
            raise ConfigurationError("no pair can ever meet; check rates")
        if config.ttl is not None and t > config.ttl:
            return _finish(state, delivered=False, seed=seed)
        next_time[i, j] = t + rng.exponential(1.0 / rates[i, j])
        state.elapsed = t
        for giver, receiver in ((i, j), (j, i)):
            if routing.is_active(spec, state, giver, receiver, view):
                _, decision = routing.on_contact(
                    spec, state, giver, receiver, t, view
                )
                if decision.delivered:
                    return _finish(state, delivered=True, seed=seed)
                break


def _run_indexed_trial(config: ExperimentConfig, index: int,
                       fixed_coords: np.ndarray | None) -> TrialResult:
    sub_seed = derive_seed(config.master_seed, index)
    rng = np.random.default_rng(sub_seed)
    runner = (run_trial_persistent if config.engine == ENGINE_PERSISTENT
              else run_trial)
    return runner(config, rng, coords=fixed_coords, seed=sub_seed)


def _run_chunk(config: ExperimentConfig, indices: list,
               fixed_coords: np.ndarray | None) -> list:
    return [_run_indexed_trial(config, i, fixed_coords) for i in indices]


def summarize(results: list, confidence: float = 0.95) -> SummaryStats:
    """Mean delivery time over delivered trials plus delivery rate.

    Undelivered trials are excluded from the mean but counted in the rate.
    """
    delivered = [r.delivery_time for r in results if r.delivered]
    rate = len(delivered) / len(results) if results else 0.0
    if len(delivered) >= 2:
        stats = mean_ci(delivered, confidence)
        return replace(stats, delivery_rate=rate)
    mean = delivered[0] if delivered else math.nan
    return SummaryStats(mean=mean, ci_low=mean, ci_high=mean,
                        count=len(delivered), delivery_rate=rate)


def run_experiment(config: ExperimentConfig,
                   workers: int = 1) -> tuple[list, SummaryStats]:
    """Run all trials with independent sub-seeds and aggregate.

    With `resample_population` each trial draws fresh relay profiles;
    otherwise one population (sub-seed index -1) is shared by every trial.
    Results are combined in trial-index order, so summaries do not depend on
    the worker count.
    """
    fixed_coords = None
    if not config.resample_population:
        pop_rng = np.random.default_rng(derive_seed(config.master_seed, -1))
        fixed_coords = sample_population_coords(config, pop_rng)

    indices = list(range(config.trials))
    if workers > 1 and config.trials > 1:
        chunks = [indices[i::workers] for i in range(workers)]
        results: list = [None] * config.trials
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_run_chunk, config, chunk, fixed_coords)
                for chunk in chunks if chunk
            ]
            for chunk, future in zip([c for c in chunks if c], futures):
                for i, res in zip(chunk, future.result()):
                    results[i] = res
    else:
        results = [_run_indexed_trial(config, i, fixed_coords) for i in indices]
    return results, summarize(results)


def replay_trace(trace, profiles, spec: ProtocolSpec, source, dest,
                 start_time: float = 0.0, ttl: float | None = None) -> TrialResult:
    """Drive the protocol state machine with a recorded contact trace.

    Contacts are point events evaluated at their start instant; a contact
    fires iff its ordered pair is currently active. Delivery time is
    measured from `start_time`.
    """
    table = profiles.profiles if hasattr(profiles, "profiles") else profiles
    if source not in table or dest not in table:
        raise DataError(f"source {source!r} or destination {dest!r} has no profile")
    unknown = trace.node_ids - set(table)
    if unknown:
        raise DataError(f"trace nodes without profiles: {sorted(unknown)[:5]}")

    others = sorted(node for node in table if node not in (source, dest))
    order = [source, dest, *others]
    index = {node: i for i, node in enumerate(order)}
    coords = np.array([table[node].coords for node in order])
    view = PopulationView(coords)
    state = routing.initial_state(spec, view)

    for event in trace.events:
        if event.start < start_time:
            continue
        t = event.start - start_time
        if ttl is not None and t > ttl:
            break
        state.elapsed = t
        a, b = index[event.a], index[event.b]
        for giver, receiver in ((a, b), (b, a)):
            if routing.is_active(spec, state, giver, receiver, view):
                _, decision = routing.on_contact(
                    spec, state, giver, receiver, t, view
                )
                if decision.delivered:
                    return _finish(state, delivered=True, seed=None)
                break
    return _finish(state, delivered=False, seed=None)
