"""Parallel-tempering search for phase matrices with zero cost.

Replicas sit at geometrically spaced temperatures and each performs one
Metropolis move per step: change one off-diagonal entry, re-rank only the
complement classes that separate the two touched parties, accept with
probability min(1, exp(-dC/T)).  Adjacent replicas exchange configurations
every ``exchange_interval`` steps; replicas that stall for ``stall_limit``
steps are restarted from a random matrix.

All randomness comes from Philox (counter-based) generators derived from the
seed: one stream per replica for moves, one for exchanges, one for
(re)initialisation.  Replicas advance in lockstep inside one compiled sweep,
so results are identical for identical configurations.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import _kernels
from .crt import GateResult, compose_matrices, crt_gate, NONEXISTENCE_TABLE
from .errors import InvalidConfigError, StaleCacheError, WrongFieldKindError
from .field import COMPOSITE, FieldSpec
from .phasecore import (
    CertificationReport,
    PhaseMatrix,
    bipartition_table,
    certify_ame,
    class_ranks,
    cost_from_ranks,
    random_entries,
)

COST_ZERO = "CostZero"
STEP_BUDGET = "StepBudget"

_BLOCK = 256


@dataclass(frozen=True)
class SearchConfig:
    n_parties: int
    field: FieldSpec
    replicas: int = 8
    t_min: float = 0.2
    t_max: float = 5.0
    max_steps: int = 100_000
    stall_limit: int = 5000
    exchange_interval: int = 50
    guide_probability: float = 0.05
    rng_seed: int = 0
    restarts: int | None = None
    auto_ladder: bool = False
    check_interval: int = 10_000
    trace_interval: int = 1000

    def validate(self) -> SearchConfig:
        if not 2 <= self.n_parties <= 22:
            raise InvalidConfigError(f"n_parties must lie in [2, 22], got {self.n_parties}")
        if self.replicas < 1:
            raise InvalidConfigError("at least one replica is required")
        if not (0 < self.t_min < self.t_max) or not math.isfinite(self.t_max):
            raise InvalidConfigError(f"need 0 < t_min < t_max, got {self.t_min}, {self.t_max}")
        if self.max_steps < 0 or self.stall_limit < 1 or self.exchange_interval < 1:
            raise InvalidConfigError("step budget, stall limit and exchange interval must be positive")
        if not 0.0 <= self.guide_probability <= 1.0:
            raise InvalidConfigError("guide_probability must lie in [0, 1]")
        if self.restarts is not None and self.restarts < 0:
            raise InvalidConfigError("restarts must be non-negative")
        if self.check_interval < 1 or self.trace_interval < 1:
            raise InvalidConfigError("check and trace intervals must be positive")
        return self

    def temperatures(self) -> np.ndarray:
        """T_r = t_min * (t_max / t_min) ** (r / (R - 1)), r = 0..R-1."""
        R = self.replicas
        if R == 1:
            return np.array([self.t_min])
        return self.t_min * (self.t_max / self.t_min) ** (np.arange(R) / (R - 1))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["field"] = self.field.flag()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SearchConfig:
        d = dict(d)
        d["field"] = FieldSpec.parse(d["field"])
        return cls(**d)


@dataclass
class ReplicaState:
    """One replica: its matrix, per-class rank cache and bookkeeping."""

    matrix: PhaseMatrix
    rank_cache: np.ndarray
    current_cost: int
    temperature: float
    rng: np.random.Generator
    steps_since_improvement: int = 0
    _cache_for: PhaseMatrix | None = dc_field(default=None, repr=False)

    @classmethod
    def start(cls, matrix: PhaseMatrix, temperature: float, rng: np.random.Generator):
        ranks = class_ranks(matrix).astype(np.uint8)
        table = bipartition_table(matrix.n)
        return cls(matrix, ranks, cost_from_ranks(ranks.astype(np.int64), table.sizes),
                   temperature, rng, 0, matrix)


def propose_move(state: ReplicaState) -> tuple[int, int, int]:
    """Uniform off-diagonal pair i < j and a uniform new value different from the current one."""
    n = state.matrix.n
    field = state.matrix.field
    table = bipartition_table(n)
    i, j = (int(v) for v in table.pairs[state.rng.integers(len(table.pairs))])
    offset = int(state.rng.integers(1, field.cardinality))
    return i, j, _shift(int(state.matrix[i, j]), offset, field)


def _shift(value: int, offset: int, field: FieldSpec) -> int:
    from .field import add
    return add(value, offset, field)


def delta_cost(state: ReplicaState, move) -> tuple[int, list[tuple[int, int]]]:
    """Cost change of ``move`` and the new ranks of the affected classes (by class key)."""
    if state._cache_for is not state.matrix:
        raise StaleCacheError("rank cache does not belong to the current matrix")
    i, j, new = move
    P = state.matrix
    if i == j:
        raise ValueError("diagonal entries are fixed at zero")
    if int(P[i, j]) == new:
        return 0, []
    table = bipartition_table(P.n)
    aff = table.affected[table.pair_index(i, j)]
    new_ranks = np.zeros(len(aff), dtype=np.int64)
    entries = np.array(P.entries)
    arith = _arith(P.field)
    dc = _kernels.move_delta(entries, state.rank_cache, i, j, new, aff, table.rows, table.cols,
                             table.sizes, new_ranks, *arith)
    return int(dc), [(int(k), int(r)) for k, r in zip(aff, new_ranks)]


def apply_move(state: ReplicaState, move, dc: int, updates) -> None:
    i, j, new = move
    state.matrix = state.matrix.with_entry(i, j, new)
    for key, r in updates:
        state.rank_cache[key] = r
    state.current_cost += dc
    state._cache_for = state.matrix


def metropolis_accept(dc: int, temperature: float, rng: np.random.Generator) -> bool:
    if dc <= 0:
        return True
    return bool(rng.random() < math.exp(-dc / temperature))


def exchange_probability(cost_a: float, cost_b: float, t_a: float, t_b: float) -> float:
    """Swap probability of configurations held at temperatures t_a and t_b."""
    x = (1.0 / t_a - 1.0 / t_b) * (cost_a - cost_b)
    return 1.0 if x >= 0 else math.exp(x)


def exchange_decisions(costs, temps, uniforms, parity: int) -> list[tuple[int, int]]:
    """Adjacent pairs (r, r+1), r = parity, parity+2, ..., that swap.

    ``uniforms[r]`` is the uniform variate used for the pair starting at r.
    """
    swaps = []
    for r in range(parity, len(costs) - 1, 2):
        if uniforms[r] < exchange_probability(costs[r], costs[r + 1], temps[r], temps[r + 1]):
            swaps.append((r, r + 1))
    return swaps


def replica_exchange(states: list[ReplicaState], rng: np.random.Generator,
                     parity: int = 0) -> list[tuple[int, int]]:
    """Swap configurations (not temperatures) between adjacent replicas."""
    costs = [s.current_cost for s in states]
    temps = [s.temperature for s in states]
    swaps = exchange_decisions(costs, temps, rng.random(max(len(states) - 1, 1)), parity)
    for a, b in swaps:
        sa, sb = states[a], states[b]
        for attr in ("matrix", "rank_cache", "current_cost", "_cache_for"):
            va, vb = getattr(sa, attr), getattr(sb, attr)
            setattr(sa, attr, vb)
            setattr(sb, attr, va)
    return swaps


def _arith(field: FieldSpec):
    if field.kind == COMPOSITE:
        raise WrongFieldKindError("search runs over prime or prime-power fields; "
                                  "split composite dimensions with run_composite_search")
    arith = _kernels.arith_for(field)
    if arith is None:
        raise WrongFieldKindError(f"{field.label()} is too large for the search kernels")
    return arith


def auto_ladder(config: SearchConfig, samples: int = 1000) -> SearchConfig:
    """Set the ladder from |dC| of random moves: t_max at the 90th percentile,
    t_min at a tenth of the 10th percentile (smallest nonzero if that is 0)."""
    field, n = config.field, config.n_parties
    table = bipartition_table(n)
    arith = _arith(field)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([config.rng_seed, 7])))
    q = field.cardinality
    deltas = []
    entries = random_entries(n, q, rng)
    ranks = class_ranks(PhaseMatrix(entries, field)).astype(np.uint8)
    for _ in range(samples):
        pid = int(rng.integers(len(table.pairs)))
        i, j = (int(v) for v in table.pairs[pid])
        new = _shift(int(entries[i, j]), int(rng.integers(1, q)), field)
        aff = table.affected[pid]
        buf = np.zeros(len(aff), dtype=np.int64)
        deltas.append(abs(int(_kernels.move_delta(entries, ranks, i, j, new, aff, table.rows,
                                                  table.cols, table.sizes, buf, *arith))))
    d = np.array(deltas, dtype=float)
    if not np.any(d > 0):
        return config
    t_max = float(np.percentile(d, 90))
    low = float(np.percentile(d, 10))
    if low == 0:
        low = float(d[d > 0].min())
    t_min = low / 10
    if t_max <= t_min:
        t_max = 10 * t_min
    return dataclasses.replace(config, t_min=t_min, t_max=t_max)


@dataclass
class SearchResult:
    best: PhaseMatrix
    best_cost: int
    steps_taken: int
    restarts_used: int
    cost_trace: list[tuple[int, int]]
    terminated_by: str
    config: SearchConfig
    report: CertificationReport | None = None

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.best.field.flag().encode())
        h.update(np.ascontiguousarray(self.best.entries, dtype="<i8").tobytes())
        h.update(json.dumps([self.best_cost, self.steps_taken, self.restarts_used,
                             self.terminated_by]).encode())
        return h.hexdigest()


def _philox(seq: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seq))


def _rng_state(g: np.random.Generator) -> dict:
    s = g.bit_generator.state
    return {"counter": [int(v) for v in s["state"]["counter"]],
            "key": [int(v) for v in s["state"]["key"]],
            "buffer": [int(v) for v in s["buffer"]],
            "buffer_pos": int(s["buffer_pos"]),
            "has_uint32": int(s["has_uint32"]), "uinteger": int(s["uinteger"])}


def _set_rng_state(g: np.random.Generator, d: dict):
    g.bit_generator.state = {
        "bit_generator": "Philox",
        "state": {"counter": np.array(d["counter"], dtype=np.uint64),
                  "key": np.array(d["key"], dtype=np.uint64)},
        "buffer": np.array(d["buffer"], dtype=np.uint64),
        "buffer_pos": d["buffer_pos"], "has_uint32": d["has_uint32"],
        "uinteger": d["uinteger"]}


class ParallelTempering:
    """Lockstep replica-exchange engine; see :func:`run_search`."""

    def __init__(self, config: SearchConfig, trace=None):
        config.validate()
        if config.auto_ladder:
            config = auto_ladder(config)
        self.config = config
        self.trace = trace
        n, field = config.n_parties, config.field
        self.table = bipartition_table(n)
        self.table.affected  # build once, outside the timed loop
        self.arith = _arith(field)
        self.q = field.cardinality
        R = config.replicas
        self.temps = config.temperatures()
        self._guided_slots = self.temps < np.median(self.temps)

        root = np.random.SeedSequence(config.rng_seed)
        move_seq, exch_seq, init_seq = root.spawn(3)
        self.move_rngs = [_philox(s) for s in move_seq.spawn(R)]
        self.exch_rng = _philox(exch_seq)
        self.init_rng = _philox(init_seq)

        self.P = np.stack([random_entries(n, self.q, self.init_rng) for _ in range(R)])
        self.cache = np.zeros((R, self.table.n_keys), dtype=np.uint8)
        self.cost = np.zeros(R, dtype=np.int64)
        for r in range(R):
            self._recompute(r)
        self.slot_best = self.cost.copy()
        self.stall = np.zeros(R, dtype=np.int64)
        self.step_count = 0
        self.restarts_used = 0
        self.parity = 0
        r0 = int(np.argmin(self.cost))
        self.best_P = self.P[r0].copy()
        self.best_cost = int(self.cost[r0])
        self.best_cache = self.cache[r0].copy()
        self.cost_trace = [(0, self.best_cost)]
        self._pos = _BLOCK
        self._buf = None

    # -- internals

    def _recompute(self, r: int):
        ranks = class_ranks(PhaseMatrix(self.P[r], self.config.field))
        self.cache[r] = ranks
        self.cost[r] = cost_from_ranks(ranks, self.table.sizes)

    def _refill(self):
        B, npairs = _BLOCK, len(self.table.pairs)
        pid, off, u, g = [], [], [], []
        for rng in self.move_rngs:
            pid.append(rng.integers(npairs, size=B))
            off.append(rng.integers(1, self.q, size=B))
            u.append(rng.random(B))
            g.append(rng.random(B))
        self._buf = tuple(np.ascontiguousarray(np.stack(a).T) for a in (pid, off, u, g))
        self._pos = 0

    def check_caches(self):
        """Hard failure if any cached rank or cost differs from a fresh computation."""
        for r in range(self.config.replicas):
            ranks = class_ranks(PhaseMatrix(self.P[r], self.config.field))
            if not np.array_equal(ranks, self.cache[r]):
                raise StaleCacheError(f"replica {r}: rank cache out of sync at step {self.step_count}")
            if cost_from_ranks(ranks, self.table.sizes) != self.cost[r]:
                raise StaleCacheError(f"replica {r}: cost out of sync at step {self.step_count}")

    def _emit_trace(self):
        if self.trace is None:
            return
        for r in range(self.config.replicas):
            self.trace.write(json.dumps({
                "step": self.step_count, "replica": r, "temperature": float(self.temps[r]),
                "cost": int(self.cost[r]), "best_cost": self.best_cost}) + "\n")

    def _exchange(self):
        R = self.config.replicas
        u = self.exch_rng.random(max(R - 1, 1))
        swaps = exchange_decisions(self.cost, self.temps, u, self.parity)
        self.parity ^= 1
        for a, b in swaps:
            for arr in (self.P, self.cache, self.cost):
                arr[[a, b]] = arr[[b, a]]
        return swaps

    def step(self):
        cfg = self.config
        if self._pos >= _BLOCK:
            self._refill()
        pid, off, u, g = (a[self._pos] for a in self._buf)
        self._pos += 1

        active = np.ones(cfg.replicas, dtype=np.bool_)
        if cfg.guide_probability > 0:
            guided = self._guided_slots & (g < cfg.guide_probability) & (self.cost > self.best_cost)
            for r in np.flatnonzero(guided):
                self.P[r] = self.best_P
                self.cache[r] = self.best_cache
                self.cost[r] = self.best_cost
            active &= ~guided

        _kernels.metropolis_sweep(self.P, self.cache, self.cost, active, pid, off, u, self.temps,
                                  self.table.pairs, self.table.affected, self.table.rows,
                                  self.table.cols, self.table.sizes, *self.arith)
        self.step_count += 1

        r0 = int(np.argmin(self.cost))
        if self.cost[r0] < self.best_cost:
            self.best_cost = int(self.cost[r0])
            self.best_P = self.P[r0].copy()
            self.best_cache = self.cache[r0].copy()

        improved = self.cost < self.slot_best
        self.slot_best = np.where(improved, self.cost, self.slot_best)
        self.stall = np.where(improved, 0, self.stall + 1)
        for r in np.flatnonzero(self.stall >= cfg.stall_limit):
            if cfg.restarts is not None and self.restarts_used >= cfg.restarts:
                break
            self.P[r] = random_entries(cfg.n_parties, self.q, self.init_rng)
            self._recompute(r)
            self.slot_best[r] = self.cost[r]
            self.stall[r] = 0
            self.restarts_used += 1

        if self.step_count % cfg.exchange_interval == 0:
            self._exchange()
        if self.step_count % cfg.check_interval == 0:
            self.check_caches()
        if self.step_count % cfg.trace_interval == 0:
            self.cost_trace.append((self.step_count, self.best_cost))
            self._emit_trace()

    def run(self, max_steps: int | None = None) -> SearchResult:
        budget = self.config.max_steps if max_steps is None else max_steps
        while self.best_cost > 0 and self.step_count < budget:
            self.step()
        return self.result()

    def result(self) -> SearchResult:
        best = PhaseMatrix(self.best_P, self.config.field)
        report = certify_ame(best)
        terminated = COST_ZERO if self.best_cost == 0 else STEP_BUDGET
        if terminated == COST_ZERO and not report.is_ame:
            raise StaleCacheError("zero-cost matrix failed re-certification")
        trace = list(self.cost_trace)
        if trace[-1][0] != self.step_count:
            trace.append((self.step_count, self.best_cost))
        return SearchResult(best, self.best_cost, self.step_count, self.restarts_used, trace,
                            terminated, self.config, report)

    # -- checkpoints

    def state_dict(self) -> dict:
        return {
            "version": 1,
            "config": self.config.to_dict(),
            "step": self.step_count,
            "matrices": self.P.tolist(),
            "slot_best": self.slot_best.tolist(),
            "stall": self.stall.tolist(),
            "best": self.best_P.tolist(),
            "best_cost": self.best_cost,
            "restarts_used": self.restarts_used,
            "parity": self.parity,
            "cost_trace": self.cost_trace,
            "rng": {"moves": [_rng_state(g) for g in self.move_rngs],
                    "exchange": _rng_state(self.exch_rng), "init": _rng_state(self.init_rng)},
            "buffer": None if self._buf is None else [a.tolist() for a in self._buf],
            "buffer_pos": self._pos,
        }

    @classmethod
    def from_state_dict(cls, d: dict, trace=None) -> ParallelTempering:
        config = SearchConfig.from_dict(d["config"])
        # ladder already resolved in the saved config
        self = cls(dataclasses.replace(config, auto_ladder=False), trace)
        self.P = np.array(d["matrices"], dtype=np.int64)
        for r in range(config.replicas):
            self._recompute(r)
        self.slot_best = np.array(d["slot_best"], dtype=np.int64)
        self.stall = np.array(d["stall"], dtype=np.int64)
        self.best_P = np.array(d["best"], dtype=np.int64)
        self.best_cost = int(d["best_cost"])
        best_ranks = class_ranks(PhaseMatrix(self.best_P, config.field))
        if cost_from_ranks(best_ranks, self.table.sizes) != self.best_cost:
            raise StaleCacheError("checkpoint best cost does not match its matrix")
        self.best_cache = best_ranks.astype(np.uint8)
        self.step_count = int(d["step"])
        self.restarts_used = int(d["restarts_used"])
        self.parity = int(d["parity"])
        self.cost_trace = [tuple(t) for t in d["cost_trace"]]
        for g, s in zip(self.move_rngs, d["rng"]["moves"]):
            _set_rng_state(g, s)
        _set_rng_state(self.exch_rng, d["rng"]["exchange"])
        _set_rng_state(self.init_rng, d["rng"]["init"])
        if d["buffer"] is not None:
            dtypes = (np.int64, np.int64, np.float64, np.float64)
            self._buf = tuple(np.ascontiguousarray(np.array(a, dtype=t))
                              for a, t in zip(d["buffer"], dtypes))
        self._pos = int(d["buffer_pos"])
        return self

    def save_checkpoint(self, path):
        with open(path, "w") as fh:
            json.dump(self.state_dict(), fh)

    @classmethod
    def load_checkpoint(cls, path, trace=None) -> ParallelTempering:
        with open(path) as fh:
            return cls.from_state_dict(json.load(fh), trace)


def run_search(config: SearchConfig, trace=None) -> SearchResult:
    """Minimise the cost over symmetric zero-diagonal matrices of ``config.field``.

    Stops at the first zero-cost configuration or after ``max_steps`` steps
    (one step = one Metropolis move per replica).
    """
    return ParallelTempering(config, trace).run()


@dataclass
class CompositeSearchResult:
    gate: GateResult
    components: list[SearchResult]
    best: PhaseMatrix | None
    report: CertificationReport | None

    @property
    def found(self) -> bool:
        return bool(self.components) and all(r.best_cost == 0 for r in self.components)

    @property
    def best_cost(self) -> int | None:
        if not self.components:
            return None
        return sum(r.best_cost for r in self.components)

    def digest(self) -> str:
        h = hashlib.sha256()
        for r in self.components:
            h.update(r.digest().encode())
        return h.hexdigest()


def component_seed(seed: int, prime: int) -> int:
    return int(np.random.SeedSequence([seed, prime]).generate_state(1, np.uint32)[0])


def run_composite_search(config: SearchConfig, force: bool = False,
                         table=NONEXISTENCE_TABLE, trace=None) -> CompositeSearchResult:
    """Independent per-prime searches for square-free Z_d, combined through the CRT.

    Without ``force`` the search is skipped when a prime factor is known to
    admit no AME(N, p).
    """
    field = config.field
    if field.kind != COMPOSITE:
        raise WrongFieldKindError("run_composite_search needs a composite field")
    gate = crt_gate(config.n_parties, field.primes, table)
    if gate.blocked and not force:
        return CompositeSearchResult(gate, [], None, None)
    results = []
    for p in field.primes:
        sub = dataclasses.replace(config, field=FieldSpec.prime(p),
                                  rng_seed=component_seed(config.rng_seed, p))
        results.append(run_search(sub, trace))
    best = compose_matrices([r.best for r in results])
    return CompositeSearchResult(gate, results, best, certify_ame(best))
