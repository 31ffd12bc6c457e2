"""Scenario files: parse-then-validate JSON into a wired Scenario.

Every validation failure names the offending key and the constraint it
broke, so a bad file never yields a partially built experiment.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import PolicySet, Signal, SmoothingParams
from .costs import CostFunction
from .dynamics import (
    DEFAULT_POPULATION_CAP,
    TransitionMatrix,
    build_matrix_emd,
    build_matrix_timeofday,
    enumerate_populations,
    stationary,
)
from .engine import Scenario
from .errors import SigallocError, ValidationError
from .fileio import read_matrix_auto
from .transport import GROUND_METRICS, GroundMetric

DEFAULT_PROBES = (25, 50, 100)


def _fail(key: str, message: str):
    raise ValidationError(f"{key}: {message}")


def _require(data: dict, key: str, path: str):
    if key not in data:
        _fail(f"{path}.{key}" if path else key, "missing required key")
    return data[key]


def _as_number(value, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(key, f"must be a number, got {value!r}")
    return float(value)


def _as_int(value, key: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(key, f"must be an integer, got {value!r}")
    return value


def _parse_resources(raw) -> tuple[list[CostFunction], list, list]:
    if not isinstance(raw, list) or not raw:
        _fail("resources", "must be a nonempty list")
    costs, lipschitz, kappa = [], [], []
    for i, entry in enumerate(raw):
        key = f"resources[{i}]"
        if not isinstance(entry, dict):
            _fail(key, "must be an object")
        expr = _require(entry, "cost", key)
        if not isinstance(expr, str):
            _fail(f"{key}.cost", f"must be an expression string, got {expr!r}")
        try:
            cost = CostFunction(expr=expr, resource=i + 1, lipschitz_hint=entry.get("lipschitz"))
        except ValidationError as exc:
            _fail(f"{key}.cost", str(exc))
        for field in ("lipschitz", "kappa"):
            if field in entry:
                value = _as_number(entry[field], f"{key}.{field}")
                if value < 0:
                    _fail(f"{key}.{field}", f"must be nonnegative, got {value}")
        costs.append(cost)
        lipschitz.append(entry.get("lipschitz"))
        kappa.append(entry.get("kappa"))
    return costs, lipschitz, kappa


def _parse_policies(raw) -> PolicySet:
    if isinstance(raw, dict):
        raw = _require(raw, "omegas", "policies")
    if not isinstance(raw, list) or not raw:
        _fail("policies", "must be a nonempty list of weights in [0, 1]")
    for i, w in enumerate(raw):
        if isinstance(w, bool) or not isinstance(w, (int, float, str)):
            _fail(f"policies[{i}]", f"must be a number or rational string, got {w!r}")
    try:
        return PolicySet.from_values(raw)
    except (ValidationError, ValueError) as exc:
        _fail("policies", str(exc))


def _parse_smoothing(raw) -> SmoothingParams:
    if not isinstance(raw, dict):
        _fail("smoothing", "must be an object with q1 and q2")
    q1 = _as_number(_require(raw, "q1", "smoothing"), "smoothing.q1")
    q2 = _as_number(_require(raw, "q2", "smoothing"), "smoothing.q2")
    try:
        return SmoothingParams(q1=q1, q2=q2)
    except ValidationError as exc:
        _fail("smoothing", str(exc))


def _build_dynamics(raw, index, base_dir: Path) -> TransitionMatrix:
    if not isinstance(raw, dict):
        _fail("dynamics", "must be an object with a 'builder' key")
    builder = _require(raw, "builder", "dynamics")
    if builder == "emd":
        metric_name = _require(raw, "metric", "dynamics")
        if metric_name not in GROUND_METRICS:
            _fail("dynamics.metric", f"must be one of {GROUND_METRICS}, got {metric_name!r}")
        psi = _as_number(_require(raw, "psi", "dynamics"), "dynamics.psi")
        if not 0.0 < psi < 1.0:
            _fail("dynamics.psi", f"must lie strictly inside (0, 1), got {psi}")
        return build_matrix_emd(index, GroundMetric(metric_name), psi)
    if builder == "timeofday":
        blocks = _require(raw, "blocks", "dynamics")
        if not isinstance(blocks, list) or not blocks or not all(
            isinstance(b, int) and not isinstance(b, bool) and b >= 1 for b in blocks
        ):
            _fail("dynamics.blocks", f"must be a nonempty list of positive integers, got {blocks!r}")
        return build_matrix_timeofday(blocks)
    if builder == "file":
        rel = _require(raw, "path", "dynamics")
        if not isinstance(rel, str):
            _fail("dynamics.path", f"must be a path string, got {rel!r}")
        path = Path(rel)
        if not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            _fail("dynamics.path", f"file not found: {path}")
        return read_matrix_auto(path)
    _fail("dynamics.builder", f"must be 'emd', 'timeofday' or 'file', got {builder!r}")


def _parse_initial(raw, costs, index, matrix):
    """Returns (signal override, fixed state, initial distribution)."""
    signal = None
    state = None
    distribution = None
    explicit_stationary = False
    if raw is not None:
        if not isinstance(raw, dict):
            _fail("initial", "must be an object")
        if "signal" in raw:
            sig = raw["signal"]
            if not isinstance(sig, dict) or "u" not in sig or "v" not in sig:
                _fail("initial.signal", "must be an object with 'u' and 'v' lists")
            u, v = sig["u"], sig["v"]
            if not isinstance(u, list) or not isinstance(v, list) or len(u) != len(costs) or len(v) != len(costs):
                _fail("initial.signal", f"u and v must be lists of length {len(costs)}")
            try:
                signal = Signal(u=tuple(float(x) for x in u), v=tuple(float(x) for x in v))
            except (ValidationError, TypeError, ValueError) as exc:
                _fail("initial.signal", str(exc))
        if "population" in raw:
            pop = raw["population"]
            if pop == "uniform":
                distribution = np.full(index.size, 1.0 / index.size)
            elif pop == "stationary":
                explicit_stationary = True
            elif isinstance(pop, dict) and "index" in pop:
                state = _as_int(pop["index"], "initial.population.index")
                if not 0 <= state < index.size:
                    _fail("initial.population.index", f"must be in [0, {index.size}), got {state}")
            elif isinstance(pop, dict) and "distribution" in pop:
                dist = pop["distribution"]
                if not isinstance(dist, list) or len(dist) != index.size:
                    _fail("initial.population.distribution", f"must be a list of length {index.size}")
                distribution = np.array([_as_number(x, "initial.population.distribution") for x in dist])
                if (distribution < 0).any() or abs(distribution.sum() - 1.0) > 1e-9:
                    _fail("initial.population.distribution", "must be nonnegative and sum to 1")
            else:
                _fail(
                    "initial.population",
                    "must be 'stationary', 'uniform', {'index': i} or {'distribution': [...]}",
                )
    if state is None and distribution is None:
        # default start: the chain's long-run law when it exists, else uniform
        try:
            distribution = stationary(matrix).m
        except SigallocError:
            if explicit_stationary:
                raise
            distribution = np.full(index.size, 1.0 / index.size)
    return signal, state, distribution


def parse_scenario(raw: dict, base_dir: Path, cap: int = DEFAULT_POPULATION_CAP) -> Scenario:
    if not isinstance(raw, dict):
        _fail("scenario", "top level must be a JSON object")
    costs, lipschitz, kappa = _parse_resources(_require(raw, "resources", ""))
    omegas = _parse_policies(_require(raw, "policies", ""))
    agents = _as_int(_require(raw, "agents", ""), "agents")
    if agents < 1:
        _fail("agents", f"must be >= 1, got {agents}")
    q = _parse_smoothing(_require(raw, "smoothing", ""))
    index = enumerate_populations(omegas, agents, cap=cap)
    matrix = _build_dynamics(_require(raw, "dynamics", ""), index, base_dir)
    if matrix.size != index.size:
        _fail(
            "dynamics",
            f"matrix has {matrix.size} states but (policies, agents) implies {index.size}",
        )

    sim = raw.get("simulation", {})
    if not isinstance(sim, dict):
        _fail("simulation", "must be an object")
    horizon = _as_int(sim.get("horizon", 100), "simulation.horizon")
    if horizon < 1:
        _fail("simulation.horizon", f"must be >= 1, got {horizon}")
    paths = _as_int(sim.get("paths", 10_000), "simulation.paths")
    if paths < 1:
        _fail("simulation.paths", f"must be >= 1, got {paths}")
    master_seed = _as_int(sim.get("master_seed", 0), "simulation.master_seed")
    if not 0 <= master_seed < 2**64:
        _fail("simulation.master_seed", "must fit in an unsigned 64-bit integer")
    if "probes" in sim:
        probes_raw = sim["probes"]
        if not isinstance(probes_raw, list) or not probes_raw:
            _fail("simulation.probes", "must be a nonempty list of times")
        probes = tuple(sorted({_as_int(t, "simulation.probes") for t in probes_raw}))
        bad = [t for t in probes if not 1 <= t <= horizon]
        if bad:
            _fail("simulation.probes", f"times {bad} outside 1..{horizon}")
    else:
        probes = tuple(t for t in DEFAULT_PROBES if t <= horizon) or (horizon,)

    signal, state, distribution = _parse_initial(raw.get("initial"), costs, index, matrix)
    return Scenario(
        costs=costs,
        omegas=omegas,
        agents=agents,
        q=q,
        matrix=matrix,
        index=index,
        horizon=horizon,
        paths=paths,
        master_seed=master_seed,
        probes=probes,
        start_signal=signal,
        start_state=state,
        start_distribution=distribution,
        lipschitz=lipschitz,
        kappa=kappa,
        label=str(raw.get("label", "scenario")),
    )


def load_scenario(path: str | Path, cap: int = DEFAULT_POPULATION_CAP) -> Scenario:
    """Read, parse and fully validate a scenario file."""
    path = Path(path)
    if not path.exists():
        _fail("scenario", f"file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        _fail("scenario", f"not valid JSON: {exc}")
    return parse_scenario(raw, base_dir=path.parent, cap=cap)
