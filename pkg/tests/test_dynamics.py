import numpy as np
import pytest

from sigalloc import (
    CapacityError,
    GroundMetric,
    PolicySet,
    ReducibleChainError,
    TransitionMatrix,
    ValidationError,
    build_matrix_emd,
    build_matrix_timeofday,
    enumerate_populations,
    population_count,
    sample_next,
    stationary,
)

OMEGAS3 = PolicySet.from_values([0, 0.5, 1])
OMEGAS4 = PolicySet.from_values([0, "1/3", "2/3", 1])


# --- enumeration -------------------------------------------------------------


def test_small_space_is_six_states_in_lex_order():
    index = enumerate_populations(OMEGAS3, 2)
    assert index.size == 6
    assert index.populations == (
        (0, 0, 2),
        (0, 1, 1),
        (0, 2, 0),
        (1, 0, 1),
        (1, 1, 0),
        (2, 0, 0),
    )


def test_large_space_count():
    assert population_count(4, 20) == 1771
    index = enumerate_populations(OMEGAS4, 20)
    assert index.size == 1771
    pops = index.populations
    assert all(pops[i] < pops[i + 1] for i in range(len(pops) - 1))
    assert all(sum(p) == 20 for p in pops)
    assert len(set(pops)) == 1771


def test_single_policy_space():
    one = PolicySet.from_values([1])
    index = enumerate_populations(one, 9)
    assert index.size == 1
    assert index.populations == ((9,),)


def test_capacity_error_names_k():
    expected_k = population_count(4, 30)
    with pytest.raises(CapacityError, match=f"K={expected_k}"):
        enumerate_populations(OMEGAS4, 30, cap=2000)


# --- EMD matrices ------------------------------------------------------------


def test_emd_matrix_structure_small():
    index = enumerate_populations(OMEGAS3, 2)
    for kind in ("substitution", "wasserstein"):
        matrix = build_matrix_emd(index, GroundMetric(kind), 0.4)
        p = matrix.p
        assert np.abs(p.sum(axis=1) - 1.0).max() <= 1e-12
        assert (p > 0).all()
        # diagonal is the row maximum
        assert (np.diag(p) == p.max(axis=1)).all()
        assert matrix.meta["distance_evaluations"] == 15


def test_emd_matrix_equal_distances_give_equal_probabilities_exactly():
    index = enumerate_populations(OMEGAS4, 5)
    matrix = build_matrix_emd(index, GroundMetric("wasserstein"), 0.37)
    from sigalloc.transport import pairwise_distances

    dists, _ = pairwise_distances(index.as_array(), GroundMetric("wasserstein"), OMEGAS4)
    for i in range(0, index.size, 9):
        row = {}
        for j in range(index.size):
            row.setdefault(dists[i, j], set()).add(matrix.p[i, j])
        for d, probs in row.items():
            assert len(probs) == 1, f"row {i}: distance {d} has probabilities {probs}"


def test_emd_matrix_psi_monotonicity():
    index = enumerate_populations(OMEGAS3, 2)
    ratios = []
    for psi in (0.2, 0.4, 0.6, 0.8):
        p = build_matrix_emd(index, GroundMetric("substitution"), psi).p
        ratios.append(p[0, 1] / p[0, 0])
    assert all(a < b for a, b in zip(ratios, ratios[1:]))


def test_emd_matrix_uniform_limit():
    # psi -> 1 recovers the i.i.d. uniform kernel
    index = enumerate_populations(OMEGAS3, 2)
    p = build_matrix_emd(index, GroundMetric("wasserstein"), 1 - 1e-9).p
    assert np.abs(p - 1.0 / 6.0).max() < 1e-6


def test_emd_matrix_k1():
    one = PolicySet.from_values([0.5])
    index = enumerate_populations(one, 3)
    assert build_matrix_emd(index, GroundMetric("substitution"), 0.3).p.tolist() == [[1.0]]


def test_emd_matrix_psi_validation():
    index = enumerate_populations(OMEGAS3, 2)
    for psi in (0.0, 1.0, -0.2, 1.7):
        with pytest.raises(ValidationError):
            build_matrix_emd(index, GroundMetric("substitution"), psi)


# --- time-of-day matrices ----------------------------------------------------


def test_timeofday_unit_blocks_is_cyclic_shift():
    p = build_matrix_timeofday([1, 1, 1, 1]).p
    expected = np.array(
        [[0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 0]], dtype=float
    )
    assert np.array_equal(p, expected)


def test_timeofday_split_noon_block():
    p = build_matrix_timeofday([1, 2, 1, 1]).p
    expected = np.array(
        [
            [0.0, 0.5, 0.5, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0, 0.0, 0.0],
        ]
    )
    assert np.array_equal(p, expected)


def test_timeofday_single_block():
    assert build_matrix_timeofday([1]).p.tolist() == [[1.0]]
    with pytest.raises(ValidationError):
        build_matrix_timeofday([])
    with pytest.raises(ValidationError):
        build_matrix_timeofday([2, 0])


# --- stationary distributions -------------------------------------------------


def test_stationary_cyclic_shift_is_uniform():
    dist = stationary(build_matrix_timeofday([1, 1, 1, 1]))
    assert np.array_equal(dist.m, np.full(4, 0.25))
    assert dist.residual < 1e-12


def test_stationary_emd_matrices_have_tiny_residual():
    index = enumerate_populations(OMEGAS3, 2)
    for kind in ("substitution", "wasserstein"):
        matrix = build_matrix_emd(index, GroundMetric(kind), 0.4)
        dist = stationary(matrix)
        assert dist.residual < 1e-10
        assert abs(dist.m.sum() - 1.0) <= 1e-12
        assert (dist.m >= 0).all()


def test_stationary_k1():
    one = PolicySet.from_values([0.5])
    matrix = build_matrix_emd(enumerate_populations(one, 2), GroundMetric("substitution"), 0.3)
    assert stationary(matrix).m.tolist() == [1.0]


def test_stationary_rejects_two_closed_classes():
    p = np.eye(2)
    with pytest.raises(ReducibleChainError) as err:
        stationary(TransitionMatrix(p=p))
    assert err.value.closed_classes == [[0], [1]]


def test_stationary_allows_transient_states():
    # state 0 leaks into the closed class {1, 2}
    p = np.array([[0.5, 0.5, 0.0], [0.0, 0.2, 0.8], [0.0, 0.7, 0.3]])
    dist = stationary(TransitionMatrix(p=p))
    assert dist.m[0] == 0.0
    assert dist.residual < 1e-12


def test_stationary_iterative_branch_handles_periodic_chains(monkeypatch):
    import sigalloc.dynamics as dyn

    monkeypatch.setattr(dyn, "DIRECT_SOLVE_LIMIT", 1)
    dist = stationary(build_matrix_timeofday([1, 2, 1, 1]))
    assert np.abs(dist.m - np.array([0.25, 0.125, 0.125, 0.25, 0.25])).max() < 1e-10
    index = enumerate_populations(OMEGAS3, 2)
    emd_dist = stationary(build_matrix_emd(index, GroundMetric("wasserstein"), 0.4))
    direct = stationary(
        build_matrix_emd(index, GroundMetric("wasserstein"), 0.4), tol=1e-10
    )
    monkeypatch.undo()
    exact = stationary(build_matrix_emd(index, GroundMetric("wasserstein"), 0.4))
    assert np.abs(emd_dist.m - exact.m).max() < 1e-9
    assert direct.residual < 1e-10


def test_transition_matrix_validation():
    with pytest.raises(ValidationError):
        TransitionMatrix(p=np.array([[0.5, 0.4], [0.5, 0.5]]))
    with pytest.raises(ValidationError):
        TransitionMatrix(p=np.array([[1.2, -0.2], [0.0, 1.0]]))


# --- sampling ----------------------------------------------------------------


def test_sample_next_deterministic_row():
    matrix = build_matrix_timeofday([1, 1, 1, 1])
    rng = np.random.default_rng(0)
    for state, successor in ((0, 1), (1, 2), (2, 3), (3, 0)):
        assert all(sample_next(matrix, state, rng) == successor for _ in range(20))


def test_sample_next_frequencies_within_three_standard_errors():
    index = enumerate_populations(OMEGAS3, 2)
    matrix = build_matrix_emd(index, GroundMetric("wasserstein"), 0.4)
    rng = np.random.default_rng(42)
    draws = 200_000
    counts = np.zeros(matrix.size)
    for _ in range(draws):
        counts[sample_next(matrix, 2, rng)] += 1
    freq = counts / draws
    p_row = matrix.p[2]
    stderr = np.sqrt(p_row * (1 - p_row) / draws)
    assert (np.abs(freq - p_row) <= 3 * stderr + 1e-12).all()


def test_sample_next_k1_always_zero():
    one = PolicySet.from_values([0.5])
    matrix = build_matrix_emd(enumerate_populations(one, 2), GroundMetric("substitution"), 0.3)
    rng = np.random.default_rng(1)
    assert {sample_next(matrix, 0, rng) for _ in range(10)} == {0}
