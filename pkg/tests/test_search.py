import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from amephase.errors import InvalidConfigError, StaleCacheError, WrongFieldKindError
from amephase.field import FieldSpec
from amephase.phasecore import PhaseMatrix, bipartition_table, certify_ame, cost
from amephase.search import (
    COST_ZERO,
    STEP_BUDGET,
    ParallelTempering,
    ReplicaState,
    SearchConfig,
    apply_move,
    auto_ladder,
    delta_cost,
    exchange_decisions,
    exchange_probability,
    metropolis_accept,
    propose_move,
    replica_exchange,
    run_composite_search,
    run_search,
)

F2, F3, F7 = (FieldSpec.prime(p) for p in (2, 3, 7))
F4 = FieldSpec.prime_power(2, 2)


def state(P, T=1.0, seed=0):
    return ReplicaState.start(P, T, np.random.default_rng(seed))


# -- configuration

def test_ladder_is_geometric():
    cfg = SearchConfig(5, F2)
    T = cfg.temperatures()
    assert T[0] == pytest.approx(0.2) and T[-1] == pytest.approx(5.0)
    assert np.all(np.diff(T) > 0)
    assert np.allclose(T[1:] / T[:-1], (5.0 / 0.2) ** (1 / 7))


@pytest.mark.parametrize("kwargs", [
    {"t_min": 0.0}, {"t_min": 5.0, "t_max": 1.0}, {"replicas": 0}, {"stall_limit": 0},
    {"exchange_interval": 0}, {"guide_probability": 1.5}, {"max_steps": -1},
    {"restarts": -1}, {"n_parties": 1},
])
def test_invalid_config(kwargs):
    base = {"n_parties": 5, "field": F2} | kwargs
    with pytest.raises(InvalidConfigError):
        SearchConfig(**base).validate()


def test_composite_field_needs_split():
    with pytest.raises(WrongFieldKindError):
        run_search(SearchConfig(4, FieldSpec.composite([2, 3]), max_steps=10))


def test_config_round_trip():
    cfg = SearchConfig(6, FieldSpec.prime_power(3, 2), rng_seed=9, restarts=2)
    assert SearchConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


# -- moves

def test_propose_two_parties():
    s = state(PhaseMatrix.from_upper(2, F7, [3]))
    for _ in range(200):
        i, j, v = propose_move(s)
        assert (i, j) == (0, 1) and v != 3 and 0 <= v < 7


def test_propose_binary_flips_bit():
    P = PhaseMatrix.random(5, F2, np.random.default_rng(1))
    s = state(P)
    for _ in range(200):
        i, j, v = propose_move(s)
        assert i < j and v == 1 - P[i, j]


def test_propose_pair_frequencies():
    s = state(PhaseMatrix.zeros(4, F3), seed=11)
    n = 100_000
    counts = {}
    for _ in range(n):
        i, j, _ = propose_move(s)
        counts[i, j] = counts.get((i, j), 0) + 1
    assert len(counts) == 6
    sigma = math.sqrt(n * (1 / 6) * (5 / 6))
    for c in counts.values():
        assert abs(c - n / 6) < 3 * sigma


def test_propose_value_uniform_excluding_current():
    s = state(PhaseMatrix.from_upper(2, F7, [4]), seed=5)
    n = 60_000
    counts = np.bincount([propose_move(s)[2] for _ in range(n)], minlength=7)
    assert counts[4] == 0
    sigma = math.sqrt(n * (1 / 6) * (5 / 6))
    assert np.all(np.abs(counts[[0, 1, 2, 3, 5, 6]] - n / 6) < 3 * sigma)


def test_delta_cost_noop_move():
    P = PhaseMatrix.random(5, F3, np.random.default_rng(2))
    assert delta_cost(state(P), (1, 3, int(P[1, 3]))) == (0, [])


def test_delta_cost_zero_matrix_example():
    P = PhaseMatrix.zeros(4, F2)
    dc, updates = delta_cost(state(P), (0, 1, 1))
    assert dc == cost(P.with_entry(0, 1, 1)) - cost(P)
    t = bipartition_table(4)
    touched = {k for k, _ in updates}
    separating = {int(k) for k in t.keys
                  if bool(t.masks[k] & 1) != bool(t.masks[k] & 2)}
    assert touched == separating


@settings(max_examples=200)
@given(st.sampled_from([F2, F3, F7, F4]), st.integers(2, 10), st.integers(0, 2 ** 32 - 1))
def test_delta_cost_matches_full_recompute(spec, n, seed):
    rng = np.random.default_rng(seed)
    P = PhaseMatrix.random(n, spec, rng)
    s = state(P, seed=seed)
    move = propose_move(s)
    dc, updates = delta_cost(s, move)
    assert dc == cost(P.with_entry(*move)) - cost(P)
    apply_move(s, move, dc, updates)
    assert s.current_cost == cost(s.matrix)


def test_delta_cost_detects_stale_cache():
    s = state(PhaseMatrix.zeros(4, F3))
    s.matrix = s.matrix.with_entry(0, 1, 2)
    with pytest.raises(StaleCacheError):
        delta_cost(s, (0, 2, 1))


# -- acceptance and exchange

def test_metropolis_examples():
    rng = np.random.default_rng(0)
    assert metropolis_accept(-3, 0.01, rng)
    assert metropolis_accept(0, 0.01, rng)


def test_metropolis_frequency():
    rng = np.random.default_rng(42)
    n = 100_000
    hits = sum(metropolis_accept(2, 1.0, rng) for _ in range(n))
    p = math.exp(-2)
    assert abs(hits / n - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_exchange_probability_examples():
    assert exchange_probability(7, 7, 0.5, 2.0) == 1.0
    assert exchange_probability(3, 9, 0.5, 2.0) < 1.0
    assert exchange_probability(9, 3, 0.5, 2.0) == 1.0


def test_exchange_alternates_pairs():
    costs, temps, u = [5, 5, 5, 5, 5], [1, 2, 3, 4, 5], [0.0] * 4
    assert exchange_decisions(costs, temps, u, 0) == [(0, 1), (2, 3)]
    assert exchange_decisions(costs, temps, u, 1) == [(1, 2), (3, 4)]


def test_replica_exchange_swaps_configurations():
    rng = np.random.default_rng(0)
    a = state(PhaseMatrix.zeros(4, F3), T=0.5)
    b = state(PhaseMatrix.random(4, F3, rng), T=2.0)
    pa, pb = a.matrix, b.matrix
    ca, cb = a.current_cost, b.current_cost
    swaps = []
    while not swaps:
        swaps = replica_exchange([a, b], rng)
    assert (a.temperature, b.temperature) == (0.5, 2.0)
    assert a.matrix is pb and b.matrix is pa
    assert (a.current_cost, b.current_cost) == (cb, ca)
    delta_cost(a, (0, 1, 1))  # caches travelled with their matrices


def test_two_level_gibbs_occupancy():
    """Two replicas on a two-state landscape with energies 0 and 1."""
    rng = np.random.default_rng(2024)
    temps = [0.6, 1.5]
    x = [0, 0]
    sweeps = 1_000_000
    occupied = np.zeros(2)
    for _ in range(sweeps):
        for r in (0, 1):
            dc = 1 - 2 * x[r]
            if metropolis_accept(dc, temps[r], rng):
                x[r] ^= 1
        if exchange_decisions(x, temps, [rng.random()], 0):
            x.reverse()
        occupied[0] += x[0]
        occupied[1] += x[1]
    for r, T in enumerate(temps):
        exact = math.exp(-1 / T) / (1 + math.exp(-1 / T))
        assert abs(occupied[r] / sweeps - exact) < 0.02 * exact


# -- full runs

def test_three_qubits_found():
    res = run_search(SearchConfig(3, F2, rng_seed=1))
    assert res.terminated_by == COST_ZERO and res.best_cost == 0
    assert certify_ame(res.best).is_ame


def test_four_qubits_never_found():
    res = run_search(SearchConfig(4, F2, rng_seed=3, max_steps=2000, stall_limit=200))
    assert res.terminated_by == STEP_BUDGET and res.best_cost > 0
    assert res.steps_taken == 2000 and res.restarts_used > 0


def test_four_qutrits_found():
    res = run_search(SearchConfig(4, F3, rng_seed=0, guide_probability=0.0))
    assert res.terminated_by == COST_ZERO
    assert certify_ame(res.best).is_ame


def zero_start(cfg):
    eng = ParallelTempering(cfg)
    eng.P[:] = 0
    for r in range(cfg.replicas):
        eng._recompute(r)
    eng.slot_best = eng.cost.copy()
    eng.best_P, eng.best_cost, eng.best_cache = eng.P[0].copy(), int(eng.cost[0]), eng.cache[0].copy()
    eng.cost_trace = [(0, eng.best_cost)]
    return eng


@pytest.mark.parametrize("n, spec, seed", [(5, F2, 1), (6, FieldSpec.prime(7), 1), (6, F3, 2)])
def test_search_walks_from_zero_matrix_to_ame(n, spec, seed):
    eng = zero_start(SearchConfig(n, spec, rng_seed=seed, guide_probability=0.0))
    assert eng.best_cost > 0
    res = eng.run()
    assert res.terminated_by == COST_ZERO and res.steps_taken > 0
    assert certify_ame(res.best).is_ame


def test_single_replica_runs():
    res = run_search(SearchConfig(5, F2, replicas=1, rng_seed=4, max_steps=20_000))
    assert res.best_cost == 0 and certify_ame(res.best).is_ame
    res = run_search(SearchConfig(6, F2, replicas=1, rng_seed=4, max_steps=500))
    assert res.steps_taken <= 500


def test_best_cost_is_monotone():
    res = run_search(SearchConfig(8, F2, rng_seed=7, max_steps=4000, stall_limit=300,
                                  trace_interval=100))
    best = [c for _, c in res.cost_trace]
    assert all(a >= b for a, b in zip(best, best[1:]))
    assert best[-1] == res.best_cost == cost(res.best)


def test_runs_are_deterministic(monkeypatch):
    cfg = SearchConfig(8, F3, rng_seed=12, max_steps=1500, stall_limit=400)
    monkeypatch.setenv("AMEPHASE_THREADS", "1")
    a = run_search(cfg)
    monkeypatch.setenv("AMEPHASE_THREADS", "4")
    b = run_search(cfg)
    assert a.digest() == b.digest()
    assert a.cost_trace == b.cost_trace
    c = run_search(SearchConfig(8, F3, rng_seed=13, max_steps=1500, stall_limit=400))
    assert c.digest() != a.digest()


def test_guide_copies_best_into_cold_slots():
    cfg = SearchConfig(8, F2, replicas=4, rng_seed=5, guide_probability=1.0,
                       exchange_interval=10_000)
    eng = ParallelTempering(cfg)
    cold = np.flatnonzero(eng.temps < np.median(eng.temps))
    assert list(cold) == [0, 1]
    for _ in range(30):
        best_P, best_cost = eng.best_P.copy(), eng.best_cost
        behind = [r for r in cold if eng.cost[r] > best_cost]
        eng.step()
        for r in behind:
            assert np.array_equal(eng.P[r], best_P)


def test_restart_budget_is_respected():
    cfg = SearchConfig(8, F2, rng_seed=5, stall_limit=5, restarts=3, max_steps=500)
    res = run_search(cfg)
    assert res.restarts_used == 3


def test_cache_coherence_check_catches_corruption():
    eng = ParallelTempering(SearchConfig(6, F3, rng_seed=1))
    eng.check_caches()
    eng.cache[2, 5] ^= 1
    with pytest.raises(StaleCacheError):
        eng.check_caches()


def test_periodic_checks_pass_during_run():
    res = run_search(SearchConfig(9, F2, rng_seed=2, max_steps=600, check_interval=50))
    assert res.steps_taken == 600


def test_checkpoint_resume_is_exact(tmp_path):
    cfg = SearchConfig(8, F2, rng_seed=21, max_steps=3000, stall_limit=250)
    straight = run_search(cfg)
    eng = ParallelTempering(cfg)
    eng.run(1111)
    path = tmp_path / "ckpt.json"
    eng.save_checkpoint(path)
    resumed = ParallelTempering.load_checkpoint(path).run()
    assert resumed.digest() == straight.digest()
    assert resumed.cost_trace == straight.cost_trace
    assert resumed.restarts_used == straight.restarts_used


def test_trace_records():
    buf = io.StringIO()
    run_search(SearchConfig(8, F2, replicas=3, rng_seed=1, max_steps=200, trace_interval=100),
               trace=buf)
    rows = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert len(rows) == 6
    assert set(rows[0]) == {"step", "replica", "temperature", "cost", "best_cost"}
    assert [r["step"] for r in rows] == [100] * 3 + [200] * 3


def test_auto_ladder_orders_temperatures():
    cfg = auto_ladder(SearchConfig(7, F3, rng_seed=3))
    assert 0 < cfg.t_min < cfg.t_max
    res = run_search(SearchConfig(5, F2, rng_seed=3, auto_ladder=True))
    assert res.config.t_min < res.config.t_max and res.best_cost == 0


def test_composite_search_gate_and_force():
    cfg = SearchConfig(4, FieldSpec.composite([2, 3]), rng_seed=1, max_steps=800,
                       stall_limit=200)
    blocked = run_composite_search(cfg)
    assert blocked.gate.blocked and blocked.components == [] and blocked.best is None
    forced = run_composite_search(cfg, force=True)
    p2, p3 = forced.components
    assert p2.best_cost > 0 and p3.best_cost == 0
    assert not forced.found and not forced.report.is_ame
    assert forced.best.field == FieldSpec.composite([2, 3])


def test_composite_search_success():
    res = run_composite_search(SearchConfig(3, FieldSpec.composite([2, 3]), rng_seed=2))
    assert not res.gate.blocked and res.found and res.report.is_ame
