import numpy as np
import pytest

from sigalloc import (
    CostFunction,
    GroundMetric,
    PolicySet,
    SmoothingParams,
    ValidationError,
    build_matrix_emd,
    build_matrix_timeofday,
    enumerate_populations,
    grid_optimum,
    stationary,
)
from sigalloc.engine import CHUNK_PATHS, Scenario, run_ensemble, run_path

OMEGAS3 = PolicySet.from_values([0, 0.5, 1])
PAIR1 = ("x**2 + 0.4", "(x**3 + 0.7)/1.7")
PAIR3 = ("x + 2", "1 + 1/(1.1 - x)/22")


def build_scenario(exprs=PAIR1, agents=2, metric="wasserstein", seed=99, horizon=40,
                   q=(0.45, 0.5), probes=(10, 20, 40), start=None):
    index = enumerate_populations(OMEGAS3, agents)
    matrix = build_matrix_emd(index, GroundMetric(metric), 0.4)
    kwargs = {}
    if start is None:
        kwargs["start_distribution"] = stationary(matrix).m
    elif isinstance(start, int):
        kwargs["start_state"] = start
    else:
        kwargs["start_distribution"] = start
    return Scenario(
        costs=[CostFunction(e, i + 1) for i, e in enumerate(exprs)],
        omegas=OMEGAS3,
        agents=agents,
        q=SmoothingParams(*q),
        matrix=matrix,
        index=index,
        horizon=horizon,
        paths=64,
        master_seed=seed,
        probes=probes,
        **kwargs,
    )


# --- single paths -------------------------------------------------------------


def test_run_path_is_reproducible_bitwise():
    sc = build_scenario()
    a = run_path(sc, 3)
    b = run_path(sc, 3)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.signal_u, b.signal_u)
    assert np.array_equal(a.signal_v, b.signal_v)
    assert np.array_equal(a.profiles, b.profiles)
    assert np.array_equal(a.costs, b.costs)


def test_run_path_hand_traced_first_steps():
    """Recompute the first three steps with standalone arithmetic."""
    from sigalloc.engine import path_uniforms

    sc = build_scenario(exprs=PAIR3, seed=12345)
    traj = run_path(sc, 0)

    pops = [(0, 0, 2), (0, 1, 1), (0, 2, 0), (1, 0, 1), (1, 1, 0), (2, 0, 0)]
    omegas = [0.0, 0.5, 1.0]
    c1 = lambda x: x + 2
    c2 = lambda x: 1 + 1 / (1.1 - x) / 22
    q1, q2 = 0.45, 0.5

    u = [c1(0.5), c2(0.5)]
    v = [0.0, 0.0]
    uniforms = path_uniforms(sc.master_seed, 0, sc.horizon)
    cum_init = np.cumsum(sc.start_distribution)
    state = int(np.searchsorted(cum_init, uniforms[0], side="right"))
    cum_rows = np.cumsum(sc.matrix.p, axis=1)

    prev_profile = None
    for t in range(3):
        if t > 0:
            state = int(np.searchsorted(cum_rows[state], uniforms[t], side="right"))
            cost_prev = [c1(prev_profile[0] / 2), c2(prev_profile[1] / 2)]
            u, v = (
                [q1 * u[m] + (1 - q1) * cost_prev[m] for m in range(2)],
                [q2 * v[m] + (1 - q2) * abs(cost_prev[m] - u[m]) for m in range(2)],
            )
        profile = [0, 0]
        for count, omega in zip(pops[state], omegas):
            scores = [omega * u[m] + (1 - omega) * v[m] for m in range(2)]
            pick = 0 if scores[0] <= scores[1] else 1
            profile[pick] += count
        expected_cost = sum((profile[m] / 2) * [c1, c2][m](profile[m] / 2) for m in range(2))

        assert traj.states[t] == state
        assert traj.signal_u[t].tolist() == u
        assert traj.signal_v[t].tolist() == v
        assert traj.profiles[t].tolist() == profile
        assert traj.costs[t] == expected_cost
        prev_profile = profile


def test_run_path_constant_costs_monotone_convergence():
    sc = build_scenario(exprs=("1.5", "1.5"), q=(0.6, 0.6))
    traj = run_path(sc, 0)
    gaps = np.abs(traj.signal_u - 1.5).sum(axis=1)
    assert (np.diff(gaps) <= 1e-12).all()
    assert gaps[-1] < 1e-6
    assert np.abs(traj.signal_v[-1]).max() < 1e-4


def test_conservation_every_step():
    sc = build_scenario()
    for pid in range(5):
        traj = run_path(sc, pid)
        assert (traj.profiles.sum(axis=1) == sc.agents).all()


def test_seed_separation():
    sc_a = build_scenario(seed=1)
    sc_b = build_scenario(seed=2)
    assert not np.array_equal(run_path(sc_a, 0).states, run_path(sc_b, 0).states)
    assert not np.array_equal(run_path(sc_a, 0).states, run_path(sc_a, 1).states)


# --- ensembles -----------------------------------------------------------------


def test_single_path_ensemble_matches_trajectory():
    sc = build_scenario()
    ens = run_ensemble(sc, paths=1)
    traj = run_path(sc, 0)
    assert np.array_equal(ens.mean_counts, traj.profiles.astype(float))
    assert np.array_equal(ens.mean_cost, traj.costs)
    assert (ens.std_counts == 0).all()
    assert (ens.std_cost == 0).all()


def test_frozen_scenario_zero_variance():
    one = PolicySet.from_values([0.5])
    index = enumerate_populations(one, 4)
    matrix = build_matrix_timeofday([1])
    sc = Scenario(
        costs=[CostFunction("x + 1"), CostFunction("2*x + 1")],
        omegas=one,
        agents=4,
        q=SmoothingParams(1, 1),
        matrix=matrix,
        index=index,
        horizon=12,
        paths=16,
        master_seed=0,
        probes=(6, 12),
        start_state=0,
    )
    ens = run_ensemble(sc, paths=16)
    assert (ens.std_counts == 0).all()
    assert (ens.std_cost == 0).all()


def test_vectorised_ensemble_equals_scalar_paths_exactly():
    sc = build_scenario()
    n = 7
    ens = run_ensemble(sc, paths=n)
    trajs = [run_path(sc, pid) for pid in range(n)]
    counts = np.stack([t.profiles for t in trajs]).astype(np.float64)
    costs = np.stack([t.costs for t in trajs])
    assert np.array_equal(ens.mean_counts, counts.mean(axis=0))
    assert np.array_equal(ens.mean_cost, costs.mean(axis=0))
    for t in sc.probes:
        probe = np.stack([traj.profiles[t - 1] for traj in trajs])
        assert np.array_equal(ens.probe_counts[t], probe)


def test_multichunk_aggregation_stability():
    sc = build_scenario(horizon=12, probes=(6, 12))
    paths = CHUNK_PATHS + 77  # force a chunk boundary
    ens = run_ensemble(sc, paths=paths, retain_full=True)
    assert ens.full_counts.shape == (paths, 12, 2)
    recomputed_mean = ens.full_costs.mean(axis=0)
    assert np.abs(ens.mean_cost - recomputed_mean).max() < 1e-12
    recomputed_std = ens.full_costs.std(axis=0)
    assert np.abs(ens.std_cost - recomputed_std).max() < 1e-12


def test_ensemble_thread_count_does_not_change_results():
    sc = build_scenario(horizon=15, probes=(5, 15))
    paths = CHUNK_PATHS * 2 + 10
    serial = run_ensemble(sc, paths=paths, threads=1)
    parallel = run_ensemble(sc, paths=paths, threads=4)
    assert np.array_equal(serial.mean_counts, parallel.mean_counts)
    assert np.array_equal(serial.std_counts, parallel.std_counts)
    assert np.array_equal(serial.mean_cost, parallel.mean_cost)
    assert np.array_equal(serial.std_cost, parallel.std_cost)
    for t in serial.probe_counts:
        assert np.array_equal(serial.probe_counts[t], parallel.probe_counts[t])


def test_ensemble_rejects_zero_paths():
    sc = build_scenario()
    with pytest.raises(ValidationError):
        run_ensemble(sc, paths=0)


# --- optimum scan --------------------------------------------------------------


def test_grid_optimum_reference_third_pair():
    costs = [CostFunction(PAIR3[0]), CostFunction(PAIR3[1])]
    x, val = grid_optimum(costs, 0.001)
    assert x == pytest.approx(0.100, abs=0.005)
    assert val == pytest.approx(1.315, abs=0.005)


def test_grid_optimum_constant_costs_tie_breaks_to_zero():
    costs = [CostFunction("2"), CostFunction("2")]
    x, val = grid_optimum(costs, 0.05)
    assert x == 0.0
    assert val == 2.0


def test_grid_optimum_dominates_every_grid_point():
    costs = [CostFunction(PAIR1[0]), CostFunction(PAIR1[1])]
    resolution = 0.01
    _, val = grid_optimum(costs, resolution)
    for i in range(101):
        x = i * resolution
        assert val <= x * costs[0](x) + (1 - x) * costs[1](1 - x) + 1e-15


def test_grid_optimum_refinement_never_increases_minimum():
    costs = [CostFunction(PAIR2_EXPR) for PAIR2_EXPR in ("x/10 + 2", "1 + 1/(1.1 - x)/22")]
    values = [grid_optimum(costs, r)[1] for r in (0.04, 0.02, 0.01, 0.005)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_grid_optimum_validation():
    costs = [CostFunction("x")]
    with pytest.raises(ValidationError):
        grid_optimum(costs, 0.1)
    costs = [CostFunction("x"), CostFunction("x"), CostFunction("x")]
    with pytest.raises(ValidationError):
        grid_optimum(costs, 0.1)
    with pytest.raises(ValidationError):
        grid_optimum([CostFunction("x"), CostFunction("x")], 0.7)
