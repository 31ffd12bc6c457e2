"""Stability certificates and convergence measurement.

The closed-loop map for a fixed population is Lipschitz whenever the cost
functions are; the certificate combines the per-map bound with the
stationary weights of the population chain and asks for a negative average
log-Lipschitz constant.  Certificate arithmetic runs on exact rationals
(floats are read through their decimal repr), so hand-derived values are
reproduced exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import SmoothingParams, Signal, apply_population_map, _as_fraction
from .dynamics import PopulationIndex, StationaryDistribution, TransitionMatrix, stationary
from .errors import CertificateError, ValidationError


def _q_fractions(q: SmoothingParams) -> tuple[Fraction, Fraction]:
    return _as_fraction(q.q1), _as_fraction(q.q2)


def _signal_gain(q1: Fraction, q2: Fraction) -> Fraction:
    return max(q2, 1 + q1 - q2)


def lipschitz_bound(q: SmoothingParams, agents: int, lipschitz, kappa) -> float:
    """Uniform Lipschitz bound for every population's closed-loop map.

    max{q2, 1+q1-q2} covers the pure smoothing part; the demand-coupling
    part scales with the agent count and sum of L_m * kappa_m.
    """
    if len(lipschitz) != len(kappa):
        raise ValidationError("lipschitz and kappa lists must have equal length")
    if any(x < 0 for x in lipschitz) or any(x < 0 for x in kappa):
        raise ValidationError("lipschitz and kappa values must be nonnegative")
    q1, q2 = _q_fractions(q)
    coupling = sum(
        (_as_fraction(l) * _as_fraction(k) for l, k in zip(lipschitz, kappa)),
        Fraction(0),
    )
    return float(_signal_gain(q1, q2) + (2 - q1 - q2) * agents * coupling)


def q_condition(q: SmoothingParams) -> bool:
    """True iff 1 - max{q2, 1+q1-q2} > 0, i.e. q2 > q1 and q2 < 1."""
    q1, q2 = _q_fractions(q)
    return 1 - _signal_gain(q1, q2) > 0


def kappa_budget(q: SmoothingParams, agents: int, resources: int, kappa) -> list[float]:
    """Per-resource Lipschitz budgets: costs that are (1/budget)-Lipschitz certify."""
    if not q_condition(q):
        raise CertificateError(
            f"certificate unavailable for q1={q.q1}, q2={q.q2}: "
            "q2 > q1 (and q2 < 1) has to hold"
        )
    q1, q2 = _q_fractions(q)
    factor = resources * agents * (2 - q1 - q2) / (1 - _signal_gain(q1, q2))
    return [float(_as_fraction(k) * factor) for k in kappa]


@dataclass(frozen=True)
class ContractivityReport:
    """Everything the average-contractivity test looked at, plus the verdict."""

    certified: bool
    uniform_bound: float
    bounds: tuple[float, ...]
    average_log_bound: float
    stationary: tuple[float, ...]
    stationary_residual: float
    q_condition_ok: bool
    coupling_total: float
    coupling_budget: float
    kappa_budget: tuple[float, ...]
    refined: bool

    def to_dict(self) -> dict:
        return {
            "certified": self.certified,
            "uniform_bound": self.uniform_bound,
            "bounds_min": min(self.bounds),
            "bounds_max": max(self.bounds),
            "average_log_bound": self.average_log_bound,
            "stationary": list(self.stationary),
            "stationary_residual": self.stationary_residual,
            "q_condition_ok": self.q_condition_ok,
            "coupling_total": self.coupling_total,
            "coupling_budget": self.coupling_budget,
            "kappa_budget": list(self.kappa_budget),
            "refined": self.refined,
        }


def certify(
    matrix: TransitionMatrix,
    q: SmoothingParams,
    agents: int,
    lipschitz,
    kappa,
    index: PopulationIndex | None = None,
    refined: bool = False,
) -> ContractivityReport:
    """Average-contractivity certificate over the population chain.

    With the uniform bound the verdict reduces to bound < 1; the optional
    refinement replaces the agent count by each population's largest policy
    group, which can only tighten the bounds.
    """
    if not q_condition(q):
        raise CertificateError(
            f"certificate unavailable for q1={q.q1}, q2={q.q2}: "
            "q2 > q1 (and q2 < 1) has to hold"
        )
    if refined and index is None:
        raise ValidationError("refined certification needs the population index")
    dist: StationaryDistribution = stationary(matrix)
    q1, q2 = _q_fractions(q)
    coupling = sum(
        (_as_fraction(l) * _as_fraction(k) for l, k in zip(lipschitz, kappa)),
        Fraction(0),
    )
    gain = _signal_gain(q1, q2)
    uniform = float(gain + (2 - q1 - q2) * agents * coupling)
    if refined:
        heaviest = np.array([max(pop) for pop in index.populations], dtype=float)
        bounds = tuple(
            float(gain + (2 - q1 - q2) * _as_fraction(h) * coupling) for h in heaviest
        )
    else:
        bounds = (uniform,) * matrix.size
    average = float(np.dot(dist.m, np.log(np.array(bounds))))
    budget_rhs = (1 - gain) / (agents * (2 - q1 - q2))
    return ContractivityReport(
        certified=bool(average < 0),
        uniform_bound=uniform,
        bounds=bounds,
        average_log_bound=average,
        stationary=tuple(float(x) for x in dist.m),
        stationary_residual=dist.residual,
        q_condition_ok=True,
        coupling_total=float(coupling),
        coupling_budget=float(budget_rhs),
        kappa_budget=tuple(kappa_budget(q, agents, len(kappa), kappa)),
        refined=refined,
    )


def empirical_lipschitz(scenario, pop, trials: int, rng: np.random.Generator) -> float:
    """Largest observed expansion ratio of one population's closed-loop map.

    A lower bound on the true Lipschitz constant; sampled signal pairs with
    zero distance are skipped.  The maximum over a seeded stream is
    reproducible and grows monotonically with ``trials``.
    """
    if trials < 1:
        raise ValidationError(f"trials must be >= 1, got {trials}")
    costs = scenario.costs
    m = len(costs)
    grid = np.linspace(0.0, 1.0, 101)
    hi = 2.0 * max(float(np.max(c(grid))) for c in costs)
    best = 0.0
    for _ in range(trials):
        x = rng.random(2 * m) * hi
        y = rng.random(2 * m) * hi
        gap = float(np.abs(x - y).sum())
        if gap == 0.0:
            continue
        sx = Signal(u=tuple(x[:m]), v=tuple(x[m:]))
        sy = Signal(u=tuple(y[:m]), v=tuple(y[m:]))
        fx, _ = apply_population_map(sx, pop, scenario.omegas, costs, scenario.q, scenario.agents)
        fy, _ = apply_population_map(sy, pop, scenario.omegas, costs, scenario.q, scenario.agents)
        moved = sum(abs(a - b) for a, b in zip(fx.vector(), fy.vector()))
        best = max(best, moved / gap)
    return best


def wasserstein_1d_samples(a, b) -> float:
    """Order-statistics transport distance between equal-size 1-D samples."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or b.ndim != 1 or a.size == 0:
        raise ValidationError("samples must be nonempty 1-D arrays")
    if a.size != b.size:
        raise ValidationError(f"sample sizes disagree: {a.size} vs {b.size}")
    return float(np.abs(np.sort(a) - np.sort(b)).mean())


def convergence_diagnostic(ensemble, resource: int, times) -> list[float]:
    """Distances between one resource's cross-path count samples at consecutive times.

    A stabilising ensemble drives this sequence toward the sampling noise
    floor; the caller decides what threshold counts as converged.
    """
    times = [int(t) for t in times]
    if len(times) < 2:
        raise ValidationError("need at least two probe times to compare")
    if ensemble.paths < 2:
        raise ValidationError(f"need at least 2 paths for a distribution, got {ensemble.paths}")
    samples = {}
    for t in times:
        if t not in ensemble.probe_counts:
            raise ValidationError(f"time {t} was not retained; probes are {sorted(ensemble.probe_counts)}")
        counts = ensemble.probe_counts[t]
        if not 0 <= resource < counts.shape[1]:
            raise ValidationError(f"resource index {resource} outside [0, {counts.shape[1]})")
        samples[t] = counts[:, resource]
    return [
        wasserstein_1d_samples(samples[t0], samples[t1])
        for t0, t1 in zip(times, times[1:])
    ]
