"""Earth Mover's Distance between integer populations.

The general route is a successive-shortest-path min-cost-flow solve of the
transportation problem, run on exact arithmetic (ints, or Fractions for
rational ground costs) so the returned optimum and the integer plan are
exact.  The substitution and 1-D Wasserstein metrics also have closed
forms, used both as oracles and as the fast path when building large
pairwise distance matrices.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import PolicySet
from .errors import ValidationError

GROUND_METRICS = ("substitution", "wasserstein")


@dataclass(frozen=True)
class GroundMetric:
    """Per-agent cost of switching policies: flat (substitution) or |w - w'|."""

    kind: str

    def __post_init__(self):
        if self.kind not in GROUND_METRICS:
            raise ValidationError(f"unknown ground metric {self.kind!r}, expected one of {GROUND_METRICS}")


def ground_matrix(metric: GroundMetric, omegas: PolicySet) -> list[list]:
    """Exact ground-cost matrix H over policy pairs (ints or Fractions)."""
    n = len(omegas)
    if metric.kind == "substitution":
        return [[0 if i == j else 1 for j in range(n)] for i in range(n)]
    ws = omegas.omegas
    return [[abs(ws[i] - ws[j]) for j in range(n)] for i in range(n)]


@dataclass(frozen=True)
class TransportPlan:
    """Integer flow matrix between policy bins and the work it costs."""

    flows: tuple[tuple[int, ...], ...]
    objective: float
    objective_exact: Fraction

    def as_array(self) -> np.ndarray:
        return np.array(self.flows, dtype=np.int64)


def _check_pair(eta, gamma) -> tuple[tuple[int, ...], tuple[int, ...]]:
    eta = tuple(int(c) for c in eta)
    gamma = tuple(int(c) for c in gamma)
    if len(eta) != len(gamma):
        raise ValidationError(f"population sizes disagree: {len(eta)} vs {len(gamma)}")
    if any(c < 0 for c in eta + gamma):
        raise ValidationError("population counts must be nonnegative")
    if sum(eta) != sum(gamma):
        raise ValidationError(f"population totals disagree: {sum(eta)} vs {sum(gamma)}")
    return eta, gamma


def _exact_cost(value) -> Fraction | int:
    if isinstance(value, (int, Fraction)):
        return value
    if isinstance(value, float):
        return Fraction(value)  # exact binary value of the double
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return Fraction(float(value))
    raise ValidationError(f"unsupported ground cost type {type(value).__name__}")


def _min_cost_transport(supply, demand, cost):
    """Successive shortest paths with potentials on the bipartite graph.

    Costs must be nonnegative (true for any ground metric); supplies and
    demands are integers, so every augmentation and the final plan are
    integral.
    """
    n, m = len(supply), len(demand)
    total = sum(supply)
    # nodes: 0 = source, 1..n = origins, n+1..n+m = targets, n+m+1 = sink
    n_nodes = n + m + 2
    src, snk = 0, n + m + 1
    to, cap, cst = [], [], []
    adj: list[list[int]] = [[] for _ in range(n_nodes)]

    def add_arc(a, b, capacity, cost_ab):
        adj[a].append(len(to))
        to.append(b)
        cap.append(capacity)
        cst.append(cost_ab)
        adj[b].append(len(to))
        to.append(a)
        cap.append(0)
        cst.append(-cost_ab)

    for i in range(n):
        if supply[i]:
            add_arc(src, 1 + i, supply[i], 0)
    for j in range(m):
        if demand[j]:
            add_arc(1 + n + j, snk, demand[j], 0)
    for i in range(n):
        if not supply[i]:
            continue
        for j in range(m):
            if demand[j]:
                add_arc(1 + i, 1 + n + j, total, cost[i][j])

    potential = [0] * n_nodes
    shipped = 0
    while shipped < total:
        dist = [math.inf] * n_nodes
        parent_arc = [-1] * n_nodes
        dist[src] = 0
        heap = [(0, src)]
        while heap:
            d, a = heapq.heappop(heap)
            if d > dist[a]:
                continue
            for arc in adj[a]:
                if cap[arc] <= 0:
                    continue
                b = to[arc]
                nd = d + cst[arc] + potential[a] - potential[b]
                if nd < dist[b]:
                    dist[b] = nd
                    parent_arc[b] = arc
                    heapq.heappush(heap, (nd, b))
        if dist[snk] == math.inf:
            raise ValidationError("transportation problem is infeasible")
        for a in range(n_nodes):
            if dist[a] != math.inf:
                potential[a] = potential[a] + dist[a]
        delta = total - shipped
        b = snk
        while b != src:
            arc = parent_arc[b]
            delta = min(delta, cap[arc])
            b = to[arc ^ 1]
        b = snk
        while b != src:
            arc = parent_arc[b]
            cap[arc] -= delta
            cap[arc ^ 1] += delta
            b = to[arc ^ 1]
        shipped += delta

    flows = [[0] * m for _ in range(n)]
    objective = 0
    for i in range(n):
        if not supply[i]:
            continue
        for arc in adj[1 + i]:
            j = to[arc] - 1 - n
            if 0 <= j < m and cst[arc] >= 0:
                f = cap[arc ^ 1]  # flow sits on the reverse arc's capacity
                if f:
                    flows[i][j] = f
                    objective = objective + f * cst[arc]
    return flows, objective


def emd(eta, gamma, H) -> tuple[float, TransportPlan]:
    """Exact EMD between two integer populations under ground costs H."""
    eta, gamma = _check_pair(eta, gamma)
    n = len(eta)
    cost = [[_exact_cost(H[i][j]) for j in range(n)] for i in range(n)]
    for i in range(n):
        for j in range(n):
            if cost[i][j] < 0:
                raise ValidationError(f"ground cost H[{i}][{j}] is negative")
    flows, objective = _min_cost_transport(eta, gamma, cost)
    exact = Fraction(objective)
    plan = TransportPlan(
        flows=tuple(tuple(row) for row in flows),
        objective=float(exact),
        objective_exact=exact,
    )
    return plan.objective, plan


def substitution_distance_exact(eta, gamma) -> int:
    eta, gamma = _check_pair(eta, gamma)
    return sum(max(a - b, 0) for a, b in zip(eta, gamma))


def emd_substitution_closed(eta, gamma) -> float:
    """Minimal number of agents that must be replaced to turn eta into gamma."""
    return float(substitution_distance_exact(eta, gamma))


def wasserstein_distance_exact(eta, gamma, omegas: PolicySet) -> Fraction:
    eta, gamma = _check_pair(eta, gamma)
    if len(eta) != len(omegas):
        raise ValidationError(f"population length {len(eta)} does not match {len(omegas)} policies")
    ws = omegas.omegas
    out = Fraction(0)
    cum = 0
    for k in range(len(eta) - 1):
        cum += eta[k] - gamma[k]
        out += abs(cum) * (ws[k + 1] - ws[k])
    return out


def emd_wasserstein_1d(eta, gamma, omegas: PolicySet) -> float:
    """1-D transport distance: cumulative count gaps weighted by policy spacing."""
    return float(wasserstein_distance_exact(eta, gamma, omegas))


def _integer_gap_units(omegas: PolicySet) -> tuple[np.ndarray, int]:
    """Policy gaps scaled to integers by the common denominator of the omegas."""
    denom = 1
    for w in omegas.omegas:
        denom = denom * w.denominator // math.gcd(denom, w.denominator)
    gaps = np.array(
        [int((b - a) * denom) for a, b in zip(omegas.omegas, omegas.omegas[1:])],
        dtype=np.int64,
    )
    return gaps, denom


def pairwise_distances(populations: np.ndarray, metric: GroundMetric, omegas: PolicySet) -> tuple[np.ndarray, int]:
    """Symmetric K x K distance matrix over a population index.

    Evaluates each unordered pair exactly once (K*(K-1)/2 evaluations,
    returned as the second element).  Distances are computed in integer
    arithmetic and divided by a common denominator at the end, so equal
    distances are equal floats, not merely close ones.
    """
    pops = np.asarray(populations, dtype=np.int64)
    k = pops.shape[0]
    pairs = 0
    if metric.kind == "substitution":
        units = np.zeros((k, k), dtype=np.int64)
        for i in range(k - 1):
            diff = np.abs(pops[i + 1 :] - pops[i]).sum(axis=1) // 2
            units[i, i + 1 :] = diff
            units[i + 1 :, i] = diff
            pairs += k - 1 - i
        return units.astype(np.float64), pairs
    gaps, denom = _integer_gap_units(omegas)
    if k and int(pops[0].sum()) * max(int(gaps.sum()), 1) * pops.shape[1] > 2**62:
        raise ValidationError("policy denominators too large for exact integer distances")
    cums = np.cumsum(pops, axis=1)[:, :-1]
    units = np.zeros((k, k), dtype=np.int64)
    for i in range(k - 1):
        diff = np.abs(cums[i + 1 :] - cums[i]) @ gaps
        units[i, i + 1 :] = diff
        units[i + 1 :, i] = diff
        pairs += k - 1 - i
    return units.astype(np.float64) / float(denom), pairs
