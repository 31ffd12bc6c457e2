"""Deterministic Monte-Carlo execution of the closed signalling loop.

Every path is a pure function of (scenario, path_id): path randomness comes
from a counter-based Philox stream keyed by (master_seed, path_id), so
ensembles are reproducible at any worker count and paths may run in any
order.  The ensemble runner executes fixed-size chunks of paths in lockstep
numpy arrays; the arithmetic is arranged to be bit-identical to the scalar
reference path in ``run_path``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from multiprocessing import get_context

import numpy as np

from .core import (
    PolicySet,
    Signal,
    SmoothingParams,
    aggregate_demand,
    initial_signal,
    social_cost,
    update_signal,
)
from .costs import CostFunction
from .dynamics import PopulationIndex, TransitionMatrix
from .errors import EvaluationError, ValidationError

CHUNK_PATHS = 1024  # fixed chunking keeps aggregation independent of worker count


@dataclass
class Scenario:
    """A fully wired experiment: resources, policies, dynamics, horizon, seed."""

    costs: list[CostFunction]
    omegas: PolicySet
    agents: int
    q: SmoothingParams
    matrix: TransitionMatrix
    index: PopulationIndex
    horizon: int = 100
    paths: int = 10_000
    master_seed: int = 0
    probes: tuple[int, ...] = (25, 50, 100)
    start_signal: Signal | None = None
    start_state: int | None = None
    start_distribution: np.ndarray | None = None
    lipschitz: list[float] | None = None
    kappa: list[float] | None = None
    label: str = "scenario"

    def __post_init__(self):
        if not self.costs:
            raise ValidationError("scenario needs at least one resource")
        if self.horizon < 1:
            raise ValidationError(f"horizon must be >= 1, got {self.horizon}")
        if self.paths < 1:
            raise ValidationError(f"paths must be >= 1, got {self.paths}")
        if not 0 <= self.master_seed < 2**64:
            raise ValidationError("master_seed must fit in 64 bits")
        if self.matrix.size != self.index.size:
            raise ValidationError(
                f"dynamics matrix has {self.matrix.size} states but the population "
                f"space has {self.index.size}"
            )
        bad = [t for t in self.probes if not 1 <= t <= self.horizon]
        if bad:
            raise ValidationError(f"probe times {bad} outside 1..{self.horizon}")
        if self.start_state is not None and not 0 <= self.start_state < self.index.size:
            raise ValidationError(f"initial population index {self.start_state} outside range")
        if self.start_distribution is not None:
            d = np.asarray(self.start_distribution, dtype=float)
            if d.shape != (self.index.size,) or (d < 0).any() or abs(d.sum() - 1.0) > 1e-9:
                raise ValidationError("initial distribution must be a length-K probability vector")
            self.start_distribution = d
        if self.start_state is None and self.start_distribution is None:
            raise ValidationError("scenario needs an initial population index or distribution")

    @property
    def resources(self) -> int:
        return len(self.costs)

    def initial_signal_value(self) -> Signal:
        if self.start_signal is not None:
            return self.start_signal
        return initial_signal(self.costs, self.agents)

    def cumulative_rows(self) -> np.ndarray:
        return np.cumsum(self.matrix.p, axis=1)

    def cumulative_initial(self) -> np.ndarray | None:
        if self.start_distribution is None:
            return None
        return np.cumsum(self.start_distribution)


def path_uniforms(master_seed: int, path_id: int, n: int) -> np.ndarray:
    """The path's private uniform stream (counter-based, order-independent)."""
    bitgen = np.random.Philox(key=np.array([master_seed, path_id], dtype=np.uint64))
    return np.random.Generator(bitgen).random(n)


@dataclass
class Trajectory:
    """One sample path: per time step the signal, profile, state and social cost."""

    path_id: int
    states: np.ndarray
    signal_u: np.ndarray
    signal_v: np.ndarray
    profiles: np.ndarray
    costs: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.states)


def run_path(scenario: Scenario, path_id: int) -> Trajectory:
    """Scalar reference execution of one path."""
    t_max = scenario.horizon
    m = scenario.resources
    uniforms = path_uniforms(scenario.master_seed, path_id, t_max)
    cum_rows = scenario.cumulative_rows()
    k = scenario.matrix.size

    if scenario.start_state is not None:
        state = scenario.start_state
    else:
        state = min(int(np.searchsorted(scenario.cumulative_initial(), uniforms[0], side="right")), k - 1)

    sig = scenario.initial_signal_value()
    states = np.empty(t_max, dtype=np.int64)
    signal_u = np.empty((t_max, m))
    signal_v = np.empty((t_max, m))
    profiles = np.empty((t_max, m), dtype=np.int64)
    costs_out = np.empty(t_max)
    try:
        for t in range(t_max):
            if t > 0:
                state = min(
                    int(np.searchsorted(cum_rows[state], uniforms[t], side="right")), k - 1
                )
                sig = update_signal(sig, tuple(profiles[t - 1]), scenario.costs, scenario.q, scenario.agents)
            pop = scenario.index.populations[state]
            profile = aggregate_demand(pop, scenario.omegas, sig)
            states[t] = state
            signal_u[t] = sig.u
            signal_v[t] = sig.v
            profiles[t] = profile
            costs_out[t] = social_cost(profile, scenario.costs, scenario.agents)
    except EvaluationError as exc:
        raise EvaluationError(f"path {path_id} aborted at step {t + 1}: {exc}") from exc
    return Trajectory(
        path_id=path_id,
        states=states,
        signal_u=signal_u,
        signal_v=signal_v,
        profiles=profiles,
        costs=costs_out,
    )


@dataclass
class Ensemble:
    """Cross-path aggregates per time step, plus retained samples at probe times."""

    paths: int
    t: np.ndarray
    mean_counts: np.ndarray
    std_counts: np.ndarray
    mean_cost: np.ndarray
    std_cost: np.ndarray
    probe_counts: dict[int, np.ndarray] = field(default_factory=dict)
    probe_costs: dict[int, np.ndarray] = field(default_factory=dict)
    full_counts: np.ndarray | None = None
    full_costs: np.ndarray | None = None


@dataclass
class _ChunkStats:
    n: int
    mean_counts: np.ndarray
    m2_counts: np.ndarray
    mean_cost: np.ndarray
    m2_cost: np.ndarray
    probe_counts: dict[int, np.ndarray]
    probe_costs: dict[int, np.ndarray]
    full_counts: np.ndarray | None
    full_costs: np.ndarray | None


def _advance_chunk(
    scenario, uniforms, cum_rows, pops, omegas, states, sig_u, sig_v,
    counts_all, costs_all, path_ids, cost_vals,
):
    """Lockstep time loop; every operation mirrors the scalar path bit-for-bit."""
    n, t_max = costs_all.shape
    m = scenario.resources
    k = scenario.matrix.size
    agents = scenario.agents
    q1, q2 = scenario.q.q1, scenario.q.q2
    for t in range(t_max):
        if t > 0:
            states[:] = np.minimum(
                (cum_rows[states] <= uniforms[:, t][:, None]).sum(axis=1), k - 1
            )
            prev = counts_all[:, t - 1, :]
            for res in range(m):
                cost_vals[:, res] = scenario.costs[res](prev[:, res] / agents)
            new_u = q1 * sig_u + (1.0 - q1) * cost_vals
            new_v = q2 * sig_v + (1.0 - q2) * np.abs(cost_vals - sig_u)
            sig_u[:] = new_u
            sig_v[:] = new_v
        profile = np.zeros((n, m), dtype=np.int64)
        state_counts = pops[states]
        for p, omega in enumerate(omegas):
            scores = omega * sig_u + (1.0 - omega) * sig_v
            choice = scores.argmin(axis=1)
            np.add.at(profile, (path_ids, choice), state_counts[:, p])
        counts_all[:, t, :] = profile
        total_cost = np.zeros(n)
        for res in range(m):
            cost_vals[:, res] = scenario.costs[res](profile[:, res] / agents)
            total_cost = total_cost + (profile[:, res] / agents) * cost_vals[:, res]
        costs_all[:, t] = total_cost


def _run_chunk(scenario: Scenario, start: int, stop: int, retain_full: bool) -> _ChunkStats:
    """Lockstep execution of paths [start, stop); see run_path for the semantics."""
    n = stop - start
    t_max = scenario.horizon
    m = scenario.resources
    k = scenario.matrix.size

    uniforms = np.empty((n, t_max))
    for i, pid in enumerate(range(start, stop)):
        uniforms[i] = path_uniforms(scenario.master_seed, pid, t_max)

    cum_rows = scenario.cumulative_rows()
    pops = scenario.index.as_array()
    omegas = scenario.omegas.as_floats()

    if scenario.start_state is not None:
        states = np.full(n, scenario.start_state, dtype=np.int64)
    else:
        states = np.minimum(
            np.searchsorted(scenario.cumulative_initial(), uniforms[:, 0], side="right"),
            k - 1,
        ).astype(np.int64)

    sig0 = scenario.initial_signal_value()
    sig_u = np.tile(np.array(sig0.u), (n, 1))
    sig_v = np.tile(np.array(sig0.v), (n, 1))

    counts_all = np.empty((n, t_max, m), dtype=np.int64)
    costs_all = np.empty((n, t_max))
    path_ids = np.arange(n)
    cost_vals = np.empty((n, m))

    try:
        _advance_chunk(
            scenario, uniforms, cum_rows, pops, omegas, states, sig_u, sig_v,
            counts_all, costs_all, path_ids, cost_vals,
        )
    except EvaluationError:
        # localise the failure: the scalar path attaches path id and step
        for pid in range(start, stop):
            run_path(scenario, pid)
        raise

    counts_f = counts_all.astype(np.float64)
    mean_counts = counts_f.mean(axis=0)
    m2_counts = ((counts_f - mean_counts) ** 2).sum(axis=0)
    mean_cost = costs_all.mean(axis=0)
    m2_cost = ((costs_all - mean_cost) ** 2).sum(axis=0)
    probe_counts = {t: counts_all[:, t - 1, :].copy() for t in scenario.probes}
    probe_costs = {t: costs_all[:, t - 1].copy() for t in scenario.probes}
    return _ChunkStats(
        n=n,
        mean_counts=mean_counts,
        m2_counts=m2_counts,
        mean_cost=mean_cost,
        m2_cost=m2_cost,
        probe_counts=probe_counts,
        probe_costs=probe_costs,
        full_counts=counts_all if retain_full else None,
        full_costs=costs_all if retain_full else None,
    )


def _merge(a: _ChunkStats, b: _ChunkStats) -> _ChunkStats:
    """Chan's parallel update; applied in fixed chunk order for determinism."""
    n = a.n + b.n
    delta_counts = b.mean_counts - a.mean_counts
    delta_cost = b.mean_cost - a.mean_cost
    merged = _ChunkStats(
        n=n,
        mean_counts=a.mean_counts + delta_counts * (b.n / n),
        m2_counts=a.m2_counts + b.m2_counts + delta_counts**2 * (a.n * b.n / n),
        mean_cost=a.mean_cost + delta_cost * (b.n / n),
        m2_cost=a.m2_cost + b.m2_cost + delta_cost**2 * (a.n * b.n / n),
        probe_counts={
            t: np.concatenate([a.probe_counts[t], b.probe_counts[t]]) for t in a.probe_counts
        },
        probe_costs={
            t: np.concatenate([a.probe_costs[t], b.probe_costs[t]]) for t in a.probe_costs
        },
        full_counts=(
            np.concatenate([a.full_counts, b.full_counts]) if a.full_counts is not None else None
        ),
        full_costs=(
            np.concatenate([a.full_costs, b.full_costs]) if a.full_costs is not None else None
        ),
    )
    return merged


def run_ensemble(
    scenario: Scenario,
    paths: int | None = None,
    threads: int = 1,
    retain_full: bool = False,
) -> Ensemble:
    """Aggregate ``paths`` sample paths; pure function of (scenario, paths)."""
    paths = scenario.paths if paths is None else paths
    if paths < 1:
        raise ValidationError(f"paths must be >= 1, got {paths}")
    spans = [(start, min(start + CHUNK_PATHS, paths)) for start in range(0, paths, CHUNK_PATHS)]
    if threads > 1 and len(spans) > 1:
        ctx = get_context("fork")
        with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as pool:
            futures = [pool.submit(_run_chunk, scenario, a, b, retain_full) for a, b in spans]
            chunks = [f.result() for f in futures]
    else:
        chunks = [_run_chunk(scenario, a, b, retain_full) for a, b in spans]
    acc = chunks[0]
    for chunk in chunks[1:]:
        acc = _merge(acc, chunk)
    t_axis = np.arange(1, scenario.horizon + 1)
    return Ensemble(
        paths=paths,
        t=t_axis,
        mean_counts=acc.mean_counts,
        std_counts=np.sqrt(acc.m2_counts / paths),
        mean_cost=acc.mean_cost,
        std_cost=np.sqrt(acc.m2_cost / paths),
        probe_counts=acc.probe_counts,
        probe_costs=acc.probe_costs,
        full_counts=acc.full_counts,
        full_costs=acc.full_costs,
    )


def grid_optimum(costs: list[CostFunction], resolution: float) -> tuple[float, float]:
    """Two-resource social-cost scan over the load split x of resource 1.

    Returns the lowest grid point attaining the global grid minimum of
    x*c1(x) + (1-x)*c2(1-x).
    """
    if len(costs) != 2:
        raise ValidationError(f"optimum scan needs exactly 2 resources, got {len(costs)}")
    if not 0.0 < resolution <= 0.5:
        raise ValidationError(f"resolution must be in (0, 0.5], got {resolution}")
    steps = math.floor(1.0 / resolution + 1e-9)
    xs = [i * resolution for i in range(steps + 1)]
    if xs[-1] < 1.0 - resolution * 1e-9:
        xs.append(1.0)
    best_x, best_val = None, math.inf
    for x in xs:
        val = x * costs[0](x) + (1.0 - x) * costs[1](1.0 - x)
        if val < best_val:
            best_x, best_val = x, val
    return best_x, best_val
