"""One deterministic time step of the signal/choice/congestion loop.

The broadcast signal holds, per resource, an exponentially smoothed cost u
and a smoothed absolute deviation v.  Agents weight the two with their
policy value and pick the cheapest resource; the resulting head counts feed
the next smoothing update.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .costs import CostFunction, eval_cost
from .errors import ValidationError


def _as_fraction(value) -> Fraction:
    # str() round-trips floats through their shortest decimal form, so
    # scenario constants like 0.45 become the exact rational 9/20.
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    return Fraction(str(value))


@dataclass(frozen=True)
class PolicySet:
    """Strictly increasing policy weights in [0, 1], kept as exact rationals."""

    omegas: tuple[Fraction, ...]

    def __post_init__(self):
        if not self.omegas:
            raise ValidationError("policy set must not be empty")
        for w in self.omegas:
            if not 0 <= w <= 1:
                raise ValidationError(f"policy weight {w} outside [0, 1]")
        if any(a >= b for a, b in zip(self.omegas, self.omegas[1:])):
            raise ValidationError("policy weights must be strictly increasing")

    @classmethod
    def from_values(cls, values) -> "PolicySet":
        return cls(tuple(_as_fraction(v) for v in values))

    def as_floats(self) -> tuple[float, ...]:
        return tuple(float(w) for w in self.omegas)

    def __len__(self) -> int:
        return len(self.omegas)


@dataclass(frozen=True)
class SmoothingParams:
    """Smoothing coefficients for the cost signal (q1) and deviation signal (q2).

    Both live in [0, 1]; 1 freezes the corresponding component.  The
    contractivity certificate additionally needs q2 > q1 and q2 < 1, which
    is checked where the certificate is computed, not here.
    """

    q1: float
    q2: float

    def __post_init__(self):
        if not 0.0 <= self.q1 <= 1.0:
            raise ValidationError(f"q1 must be in [0, 1], got {self.q1}")
        if not 0.0 <= self.q2 <= 1.0:
            raise ValidationError(f"q2 must be in [0, 1], got {self.q2}")


@dataclass(frozen=True)
class Signal:
    """Broadcast state: per resource, smoothed cost u and smoothed deviation v."""

    u: tuple[float, ...]
    v: tuple[float, ...]

    def __post_init__(self):
        if len(self.u) != len(self.v):
            raise ValidationError("signal components u and v must have equal length")
        if any(x < 0 for x in self.u) or any(x < 0 for x in self.v):
            raise ValidationError("signal entries must be nonnegative")

    @property
    def resources(self) -> int:
        return len(self.u)

    def vector(self) -> tuple[float, ...]:
        """Interleaved (u1, v1, u2, v2, ...) layout."""
        out = []
        for a, b in zip(self.u, self.v):
            out.extend((a, b))
        return tuple(out)


def validate_population(counts, n_policies: int, total: int) -> tuple[int, ...]:
    counts = tuple(int(c) for c in counts)
    if len(counts) != n_policies:
        raise ValidationError(f"population has {len(counts)} entries, expected {n_policies}")
    if any(c < 0 for c in counts):
        raise ValidationError("population counts must be nonnegative")
    if sum(counts) != total:
        raise ValidationError(f"population sums to {sum(counts)}, expected {total}")
    return counts


def uniform_split(total: int, resources: int) -> tuple[int, ...]:
    """Even head count per resource, remainder going to the lowest indices."""
    base, rem = divmod(total, resources)
    return tuple(base + (1 if m < rem else 0) for m in range(resources))


def initial_signal(costs: list[CostFunction], total: int) -> Signal:
    """Neutral truthful start: u at the uniform split's costs, v at zero."""
    split = uniform_split(total, len(costs))
    u = tuple(eval_cost(c, n, total) for c, n in zip(costs, split))
    return Signal(u=u, v=(0.0,) * len(costs))


def update_signal(
    s_prev: Signal,
    profile_prev: tuple[int, ...],
    costs: list[CostFunction],
    q: SmoothingParams,
    total: int,
) -> Signal:
    """Exponential smoothing step: u tracks costs, v tracks |cost - u|."""
    if len(profile_prev) != len(costs) or len(costs) != s_prev.resources:
        raise ValidationError("signal, profile and cost list sizes disagree")
    u_new = []
    v_new = []
    for m, cost in enumerate(costs):
        c = eval_cost(cost, profile_prev[m], total)
        u_new.append(q.q1 * s_prev.u[m] + (1.0 - q.q1) * c)
        v_new.append(q.q2 * s_prev.v[m] + (1.0 - q.q2) * abs(c - s_prev.u[m]))
    return Signal(u=tuple(u_new), v=tuple(v_new))


def choose_resource(omega: float, s: Signal) -> int:
    """Index of the resource minimising omega*u + (1-omega)*v, lowest index on ties."""
    omega = float(omega)
    if not 0.0 <= omega <= 1.0:
        raise ValidationError(f"policy weight must be in [0, 1], got {omega}")
    best = 0
    best_score = omega * s.u[0] + (1.0 - omega) * s.v[0]
    for m in range(1, s.resources):
        score = omega * s.u[m] + (1.0 - omega) * s.v[m]
        if score < best_score:
            best = m
            best_score = score
    return best


def aggregate_demand(pop: tuple[int, ...], omegas: PolicySet, s: Signal) -> tuple[int, ...]:
    """Head count per resource after every policy group picks its resource."""
    pop = validate_population(pop, len(omegas), sum(int(c) for c in pop))
    profile = [0] * s.resources
    for count, omega in zip(pop, omegas.as_floats()):
        if count:
            profile[choose_resource(omega, s)] += count
    return tuple(profile)


def apply_population_map(
    s: Signal,
    pop: tuple[int, ...],
    omegas: PolicySet,
    costs: list[CostFunction],
    q: SmoothingParams,
    total: int,
) -> tuple[Signal, tuple[int, ...]]:
    """One closed-loop map for a fixed population: choices first, then smoothing.

    Returns the next signal together with the congestion profile the
    population produced in response to ``s``.
    """
    profile = aggregate_demand(pop, omegas, s)
    return update_signal(s, profile, costs, q, total), profile


def step(
    s: Signal,
    profile: tuple[int, ...],
    pop_next: tuple[int, ...],
    omegas: PolicySet,
    costs: list[CostFunction],
    q: SmoothingParams,
    total: int,
) -> tuple[Signal, tuple[int, ...]]:
    """Advance one step: smooth yesterday's profile, then let pop_next choose."""
    s_next = update_signal(s, profile, costs, q, total)
    return s_next, aggregate_demand(pop_next, omegas, s_next)


def social_cost(profile: tuple[int, ...], costs: list[CostFunction], total: int) -> float:
    """Load-weighted average experienced cost, sum_m (n_m/total) * c_m(n_m/total)."""
    if sum(profile) != total:
        raise ValidationError(f"profile sums to {sum(profile)}, expected {total}")
    out = 0.0
    for m, cost in enumerate(costs):
        n = profile[m]
        out += (n / total) * eval_cost(cost, n, total)
    return out
