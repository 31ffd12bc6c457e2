"""Population-space machinery: enumeration, transition matrices, stationary laws.

States of the population chain are integer histograms of the agents over
the policy set, listed in ascending lexicographic order on count tuples.
Transition matrices either decay with transport distance (gradual drift)
or cycle through time-of-day blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .core import PolicySet
from .errors import CapacityError, ReducibleChainError, SigallocError, ValidationError
from .transport import GroundMetric, pairwise_distances

DEFAULT_POPULATION_CAP = 10_000
DIRECT_SOLVE_LIMIT = 2_000


def population_count(n_policies: int, total: int) -> int:
    """Number of integer histograms of ``total`` agents over ``n_policies`` bins."""
    return math.comb(n_policies + total - 1, total)


@dataclass(frozen=True)
class PopulationIndex:
    """All populations for (policy set, agent count), lexicographically ordered."""

    omegas: PolicySet
    total: int
    populations: tuple[tuple[int, ...], ...]

    @property
    def size(self) -> int:
        return len(self.populations)

    def as_array(self) -> np.ndarray:
        return np.array(self.populations, dtype=np.int64)

    def index_of(self, counts) -> int:
        counts = tuple(int(c) for c in counts)
        try:
            return self.populations.index(counts)
        except ValueError:
            raise ValidationError(f"population {counts} not in the index") from None


def enumerate_populations(
    omegas: PolicySet, total: int, cap: int = DEFAULT_POPULATION_CAP
) -> PopulationIndex:
    """Materialise the population index, refusing sizes beyond ``cap``."""
    if total < 1:
        raise ValidationError(f"agent count must be >= 1, got {total}")
    n = len(omegas)
    k = population_count(n, total)
    if k > cap:
        raise CapacityError(
            f"population space has K={k} states, above the cap of {cap}; "
            "reduce the agent count or policy count, or raise the cap"
        )
    out: list[tuple[int, ...]] = []
    counts = [0] * n

    def fill(pos: int, remaining: int):
        if pos == n - 1:
            counts[pos] = remaining
            out.append(tuple(counts))
            return
        for c in range(remaining + 1):
            counts[pos] = c
            fill(pos + 1, remaining - c)

    fill(0, total)
    assert len(out) == k
    return PopulationIndex(omegas=omegas, total=total, populations=tuple(out))


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic K x K matrix over population indices plus builder metadata."""

    p: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValidationError(f"transition matrix must be square, got shape {p.shape}")
        if (p < 0).any() or (p > 1).any():
            raise ValidationError("transition probabilities must lie in [0, 1]")
        row_err = np.abs(p.sum(axis=1) - 1.0).max()
        if row_err > 1e-12:
            raise ValidationError(f"rows must sum to 1 (max deviation {row_err:.3e})")
        object.__setattr__(self, "p", p)

    @property
    def size(self) -> int:
        return self.p.shape[0]


def build_matrix_emd(
    index: PopulationIndex, metric: GroundMetric, psi: float
) -> TransitionMatrix:
    """Transition kernel decaying as psi**distance, row-normalised.

    The diagonal dominates every row (distance zero only to itself), and
    psi -> 1 recovers the uniform i.i.d. kernel.
    """
    if not 0.0 < psi < 1.0:
        raise ValidationError(f"psi must lie strictly inside (0, 1), got {psi}")
    distances, pair_count = pairwise_distances(index.as_array(), metric, index.omegas)
    weights = np.power(psi, distances)
    p = weights / weights.sum(axis=1, keepdims=True)
    return TransitionMatrix(
        p=p,
        meta={
            "builder": "emd",
            "metric": metric.kind,
            "psi": psi,
            "omegas": [str(w) for w in index.omegas.omegas],
            "agents": index.total,
            "distance_evaluations": pair_count,
        },
    )


def build_matrix_timeofday(block_sizes) -> TransitionMatrix:
    """Block-cyclic kernel: each block feeds the next one uniformly, wrapping."""
    sizes = [int(b) for b in block_sizes]
    if not sizes or any(b < 1 for b in sizes):
        raise ValidationError(f"block sizes must be positive integers, got {block_sizes}")
    k = sum(sizes)
    p = np.zeros((k, k))
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    t = len(sizes)
    for block in range(t):
        nxt = (block + 1) % t
        rows = slice(offsets[block], offsets[block + 1])
        cols = slice(offsets[nxt], offsets[nxt + 1])
        p[rows, cols] = 1.0 / sizes[nxt]
    return TransitionMatrix(p=p, meta={"builder": "timeofday", "blocks": sizes})


@dataclass(frozen=True)
class StationaryDistribution:
    """Probability vector fixed by the chain, with its defining-equation residual."""

    m: np.ndarray
    residual: float


def closed_classes(p: np.ndarray) -> list[list[int]]:
    """Closed communicating classes of the support graph (no escaping edges)."""
    support = csr_matrix(p > 0)
    n_comp, labels = connected_components(support, directed=True, connection="strong")
    has_exit = np.zeros(n_comp, dtype=bool)
    rows, cols = (p > 0).nonzero()
    for a, b in zip(labels[rows], labels[cols]):
        if a != b:
            has_exit[a] = True
    out = []
    for comp in range(n_comp):
        if not has_exit[comp]:
            out.append(np.flatnonzero(labels == comp).tolist())
    return out


def stationary(matrix: TransitionMatrix, tol: float = 1e-10) -> StationaryDistribution:
    """Left fixed vector of the chain, solved directly for moderate sizes.

    Periodic chains (the time-of-day kernels) defeat plain power iteration,
    so large instances fall back to Cesaro-averaged iteration instead.
    """
    p = matrix.p
    k = matrix.size
    classes = closed_classes(p)
    if len(classes) != 1:
        preview = [c[:8] for c in classes]
        raise ReducibleChainError(
            f"chain has {len(classes)} closed communicating classes {preview}; "
            "the stationary distribution is not unique",
            closed_classes=classes,
        )
    if k <= DIRECT_SOLVE_LIMIT:
        a = p.T - np.eye(k)
        a[-1, :] = 1.0
        b = np.zeros(k)
        b[-1] = 1.0
        try:
            m = np.linalg.solve(a, b)
        except np.linalg.LinAlgError:
            a_full = np.vstack([p.T - np.eye(k), np.ones((1, k))])
            b_full = np.append(np.zeros(k), 1.0)
            m, *_ = np.linalg.lstsq(a_full, b_full, rcond=None)
    else:
        # iterate the half-lazy kernel (P + I)/2: same stationary vector,
        # aperiodic even when the chain itself cycles, geometric convergence
        m = np.full(k, 1.0 / k)
        for _ in range(500_000):
            nxt = 0.5 * (m + m @ p)
            if np.abs(nxt - m).sum() < tol / 100:
                m = nxt
                break
            m = nxt
    m = np.where(np.abs(m) < 1e-15, 0.0, m)
    if (m < 0).any():
        raise SigallocError("stationary solve produced negative entries")
    m = m / m.sum()
    residual = float(np.abs(m @ p - m).sum())
    if residual > tol:
        raise SigallocError(f"stationary residual {residual:.3e} exceeds {tol:.1e}")
    return StationaryDistribution(m=m, residual=residual)


def sample_next(matrix: TransitionMatrix, current: int, rng: np.random.Generator) -> int:
    """Inverse-CDF draw of the next state from row ``current``."""
    if not 0 <= current < matrix.size:
        raise ValidationError(f"state index {current} outside [0, {matrix.size})")
    cum = np.cumsum(matrix.p[current])
    j = int(np.searchsorted(cum, rng.random(), side="right"))
    return min(j, matrix.size - 1)
