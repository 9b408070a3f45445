"""Phase matrices, bipartitions and the entanglement quantities read off cut ranks.

For a symmetric zero-diagonal matrix P over a finite field of order q, the
reduced state of any party subset S has purity q**(-rk P[S, S^c]).  Everything
here (purity, Renyi-2 entropy, the search cost, AME certification) is computed
from those cut ranks alone; :mod:`amephase.oracle` checks the identity
against explicit state vectors.

Complement classes {S, S^c} are keyed by the side that does not contain the
last party, so a dense array of length 2**(N-1) holds one rank per class.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import (
    CompositeFieldRankError,
    InvalidBipartitionError,
    InvalidMaxSizeError,
    InvalidPhaseMatrixError,
)
from .field import COMPOSITE, FieldMatrix, FieldSpec, rank

MAX_PARTIES = 63
MAX_TABLE_PARTIES = 22
THREADS_ENV = "AMEPHASE_THREADS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "")))
    except ValueError:
        return os.cpu_count() or 1


# -- bipartitions

@dataclass(frozen=True, order=True)
class Bipartition:
    """A nonempty proper subset S of the parties, as a bitmask (bit i = party i)."""

    mask: int
    n: int

    def __post_init__(self):
        if not 2 <= self.n <= MAX_PARTIES:
            raise InvalidBipartitionError(f"party count {self.n} outside [2, {MAX_PARTIES}]")
        full = (1 << self.n) - 1
        if self.mask <= 0 or self.mask >= full or self.mask & ~full:
            raise InvalidBipartitionError(
                f"mask {self.mask:#x} is not a nonempty proper subset of {self.n} parties")

    @classmethod
    def of(cls, members, n: int) -> Bipartition:
        mask = 0
        for i in members:
            if not 0 <= i < n:
                raise InvalidBipartitionError(f"party {i} out of range for n={n}")
            mask |= 1 << i
        return cls(mask, n)

    @property
    def size(self) -> int:
        return bin(self.mask).count("1")

    @property
    def members(self) -> list[int]:
        return [i for i in range(self.n) if self.mask >> i & 1]

    @property
    def outside(self) -> list[int]:
        return [i for i in range(self.n) if not self.mask >> i & 1]

    def complement(self) -> Bipartition:
        return Bipartition(((1 << self.n) - 1) ^ self.mask, self.n)

    def canonical(self) -> Bipartition:
        """Representative of {S, S^c}: the smaller side, the smaller mask on ties."""
        comp = self.complement()
        if (self.size, self.mask) <= (comp.size, comp.mask):
            return self
        return comp

    @property
    def key(self) -> int:
        """Index of the complement class: the side without party n-1."""
        if self.mask >> (self.n - 1) & 1:
            return ((1 << self.n) - 1) ^ self.mask
        return self.mask

    def __repr__(self):
        return f"Bipartition({self.members}, n={self.n})"


def enumerate_bipartitions(n: int, max_size: int | None = None, dedup: bool = True):
    """Yield bipartitions of ``n`` parties with ``|S| <= max_size`` in ascending mask order.

    With ``dedup`` only the canonical representative of each complement
    class is produced.
    """
    if max_size is None:
        max_size = n // 2 if dedup else n - 1
    if not 1 <= max_size <= n - 1:
        raise InvalidMaxSizeError(f"max_size must lie in [1, {n - 1}], got {max_size}")
    full = (1 << n) - 1
    for mask in range(1, full):
        k = bin(mask).count("1")
        if k > max_size:
            continue
        if dedup:
            ck = n - k
            if ck < k or (ck == k and full ^ mask < mask):
                continue
        yield Bipartition(mask, n)


class BipartitionTable:
    """Dense per-class lookup arrays for ``n`` parties, indexed by class key.

    ``rows[key, :size[key]]`` lists the smaller side, ``cols[key, :n-size[key]]``
    the other side, both ascending.  Key 0 is unused.
    """

    def __init__(self, n: int):
        if not 2 <= n <= MAX_TABLE_PARTIES:
            raise InvalidBipartitionError(
                f"class tables support 2..{MAX_TABLE_PARTIES} parties, got {n}")
        self.n = n
        self.n_keys = 1 << (n - 1)
        keys = np.arange(self.n_keys, dtype=np.int64)
        bits = ((keys[:, None] >> np.arange(n)) & 1).astype(np.int8)
        key_size = bits.sum(axis=1)
        flip = key_size > n - key_size
        side = np.where(flip[:, None], 1 - bits, bits)
        side[0] = 0
        self.sizes = np.where(flip, n - key_size, key_size).astype(np.int64)
        self.sizes[0] = 0
        weights = np.int64(1) << np.arange(n, dtype=np.int64)
        self.masks = (side.astype(np.int64) * weights).sum(axis=1)
        order = np.argsort(-side, axis=1, kind="stable")
        self.rows = np.ascontiguousarray(order[:, : max(n // 2, 1)], dtype=np.int8)
        self.cols = np.ascontiguousarray(np.argsort(side, axis=1, kind="stable")[:, : n - 1],
                                         dtype=np.int8)
        self._bits = bits
        self.keys = keys[1:]
        for a in (self.sizes, self.masks, self.rows, self.cols, self.keys):
            a.setflags(write=False)
        self._pairs = None
        self._aff = None

    @property
    def max_size(self) -> int:
        return self.n // 2

    def keys_of_size(self, k: int) -> np.ndarray:
        return self.keys[self.sizes[1:] == k]

    @property
    def pairs(self) -> np.ndarray:
        if self._pairs is None:
            self._pairs = np.array([(i, j) for i in range(self.n) for j in range(i + 1, self.n)],
                                   dtype=np.int64)
        return self._pairs

    @property
    def affected(self) -> np.ndarray:
        """affected[t] = keys of the classes separating the parties of pairs[t]."""
        if self._aff is None:
            bits = self._bits[1:]
            self._aff = np.ascontiguousarray(
                [self.keys[bits[:, i] != bits[:, j]] for i, j in self.pairs], dtype=np.int64)
            self._aff.setflags(write=False)
        return self._aff

    def pair_index(self, i: int, j: int) -> int:
        if i > j:
            i, j = j, i
        return i * self.n - i * (i + 1) // 2 + (j - i - 1)


@lru_cache(maxsize=8)
def bipartition_table(n: int) -> BipartitionTable:
    return BipartitionTable(n)


# -- phase matrices

class PhaseMatrix:
    """Symmetric zero-diagonal N x N matrix of canonical field elements (immutable)."""

    __slots__ = ("_entries", "_field")

    def __init__(self, entries, field: FieldSpec):
        a = np.array(entries, dtype=np.int64, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidPhaseMatrixError(f"phase matrix must be square, got shape {a.shape}")
        n = a.shape[0]
        if not 2 <= n <= MAX_PARTIES:
            raise InvalidPhaseMatrixError(f"party count {n} outside [2, {MAX_PARTIES}]")
        if a.min() < 0 or a.max() >= field.cardinality:
            raise InvalidPhaseMatrixError(f"entries are not canonical in {field.label()}")
        if not np.array_equal(a, a.T):
            i, j = np.argwhere(a != a.T)[0]
            raise InvalidPhaseMatrixError(f"not symmetric: P[{i},{j}]={a[i, j]} != P[{j},{i}]={a[j, i]}")
        if np.any(np.diag(a)):
            i = int(np.flatnonzero(np.diag(a))[0])
            raise InvalidPhaseMatrixError(f"nonzero diagonal entry P[{i},{i}]")
        a.setflags(write=False)
        self._entries = a
        self._field = field

    @classmethod
    def zeros(cls, n: int, field: FieldSpec) -> PhaseMatrix:
        return cls(np.zeros((n, n), dtype=np.int64), field)

    @classmethod
    def from_upper(cls, n: int, field: FieldSpec, values) -> PhaseMatrix:
        """Build from the strictly upper triangle listed row by row."""
        a = np.zeros((n, n), dtype=np.int64)
        iu = np.triu_indices(n, 1)
        a[iu] = list(values)
        return cls(a + a.T, field)

    @classmethod
    def random(cls, n: int, field: FieldSpec, rng: np.random.Generator) -> PhaseMatrix:
        """Uniformly random symmetric zero-diagonal matrix."""
        return cls(random_entries(n, field.cardinality, rng), field)

    @property
    def n(self) -> int:
        return self._entries.shape[0]

    @property
    def field(self) -> FieldSpec:
        return self._field

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    def __getitem__(self, idx):
        return self._entries[idx]

    def with_entry(self, i: int, j: int, value: int) -> PhaseMatrix:
        a = self._entries.copy()
        a[i, j] = a[j, i] = value
        return PhaseMatrix(a, self._field)

    def upper(self) -> list[int]:
        return [int(v) for v in self._entries[np.triu_indices(self.n, 1)]]

    def __eq__(self, other):
        return (isinstance(other, PhaseMatrix) and self._field == other._field
                and np.array_equal(self._entries, other._entries))

    def __hash__(self):
        return hash((self._field, self._entries.tobytes()))

    def __repr__(self):
        return f"PhaseMatrix(n={self.n}, field={self._field.label()})"


def random_entries(n: int, q: int, rng: np.random.Generator) -> np.ndarray:
    a = np.zeros((n, n), dtype=np.int64)
    iu = np.triu_indices(n, 1)
    a[iu] = rng.integers(0, q, size=len(iu[0]))
    return a + a.T


def _check_bipartition(P: PhaseMatrix, S: Bipartition):
    if S.n != P.n:
        raise InvalidBipartitionError(f"bipartition of {S.n} parties used with N={P.n}")


def _components(P: PhaseMatrix) -> list[PhaseMatrix]:
    if P.field.kind == COMPOSITE:
        from .crt import split_matrix
        return split_matrix(P)
    return [P]


def cut_submatrix(P: PhaseMatrix, S: Bipartition) -> FieldMatrix:
    """Rows in S, columns in its complement, both in ascending party order."""
    _check_bipartition(P, S)
    return FieldMatrix(P.entries[np.ix_(S.members, S.outside)], P.field)


def cut_rank(P: PhaseMatrix, S: Bipartition) -> int:
    if P.field.kind == COMPOSITE:
        raise CompositeFieldRankError(
            "cut rank over Z_d is undefined; use crt.split_matrix and rank each component")
    return rank(cut_submatrix(P, S))


def class_ranks(P: PhaseMatrix, workers: int | None = None) -> np.ndarray:
    """Cut rank of every complement class, indexed by class key (entry 0 unused).

    The sweep is split into contiguous chunks over worker threads; each chunk
    writes its own slice, so the result does not depend on the thread count.
    """
    if P.field.kind == COMPOSITE:
        raise CompositeFieldRankError("split composite matrices before computing ranks")
    table = bipartition_table(P.n)
    out = np.zeros(table.n_keys, dtype=np.int64)
    arith = _kernels.arith_for(P.field)
    if arith is None:
        for key in table.keys:
            out[key] = cut_rank(P, Bipartition(int(table.masks[key]), P.n))
        return out
    entries = np.ascontiguousarray(P.entries)
    keys = table.keys
    workers = workers or default_workers()
    chunks = np.array_split(np.arange(len(keys)), max(1, min(workers, len(keys) // 256 or 1)))

    def run(idx):
        if len(idx):
            res = np.zeros(len(idx), dtype=np.int64)
            _kernels.cut_ranks(entries, keys[idx], table.rows, table.cols, table.sizes, res,
                               *arith)
            out[keys[idx]] = res

    if len(chunks) == 1:
        run(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            list(pool.map(run, chunks))
    return out


def cost_from_ranks(ranks: np.ndarray, sizes: np.ndarray) -> int:
    d = sizes[1:] - ranks[1:]
    return int(np.dot(d, d))


def cost(P: PhaseMatrix) -> int:
    """Sum of squared rank deficits over complement classes with |S| <= N/2.

    For Z_d the component costs are added, so the cost vanishes exactly when
    every prime component is AME.
    """
    table = bipartition_table(P.n)
    return sum(cost_from_ranks(class_ranks(C), table.sizes) for C in _components(P))


# -- purity and entropy

_LOG = {"nats": math.log, "bits": math.log2}


@dataclass(frozen=True)
class Purity:
    """Exact purity prod(base ** exponent), exponents are minus cut ranks."""

    factors: tuple[tuple[int, int], ...]

    @property
    def value(self) -> float:
        return math.prod(float(b) ** e for b, e in self.factors)

    def exact(self) -> Fraction:
        return math.prod((Fraction(b) ** e for b, e in self.factors), start=Fraction(1))

    def entropy(self, unit: str = "bits") -> float:
        """-log of the purity, evaluated from the integer exponents."""
        log = _LOG[unit]
        return sum(-e * log(b) for b, e in self.factors if e)

    def __float__(self):
        return self.value


def purity(P: PhaseMatrix, S: Bipartition) -> Purity:
    _check_bipartition(P, S)
    if P.field.kind == COMPOSITE:
        return Purity(tuple((C.field.p, -cut_rank(C, S)) for C in _components(P)))
    return Purity(((P.field.cardinality, -cut_rank(P, S)),))


def renyi2_entropy(P: PhaseMatrix, S: Bipartition, unit: str = "bits") -> float:
    if unit not in _LOG:
        raise ValueError(f"unit must be 'bits' or 'nats', got {unit!r}")
    return purity(P, S).entropy(unit)


# -- certification

@dataclass
class SizeRecord:
    size: int
    n_bips: int
    n_subsets: int
    saturated: int
    min_rank: int
    rank_deficit: int
    # factors of the smallest entropy seen at this size: ((base, rank), ...)
    min_entropy_ranks: tuple[tuple[int, int], ...]

    @property
    def failed(self) -> int:
        return self.n_bips - self.saturated

    @property
    def s2_bits(self) -> float:
        return sum(r * math.log2(b) for b, r in self.min_entropy_ranks)

    @property
    def s2_nats(self) -> float:
        return sum(r * math.log(b) for b, r in self.min_entropy_ranks)

    @property
    def target_bits(self) -> float:
        return sum(self.size * math.log2(b) for b, _ in self.min_entropy_ranks)

    @property
    def target_nats(self) -> float:
        return sum(self.size * math.log(b) for b, _ in self.min_entropy_ranks)

    @property
    def deficit_bits(self) -> float:
        return sum((self.size - r) * math.log2(b) for b, r in self.min_entropy_ranks)

    @property
    def ratio(self) -> float:
        return self.min_rank / self.size


@dataclass(frozen=True)
class FailedCut:
    mask: int
    size: int
    rank: int

    @property
    def deficit(self) -> int:
        return self.size - self.rank


@dataclass
class CertificationReport:
    n_parties: int
    field: FieldSpec
    sizes: list[SizeRecord]
    failed: list[FailedCut]
    is_ame: bool
    k_uniformity: int
    components: list[CertificationReport] = dc_field(default_factory=list)

    @property
    def code_distance(self) -> int:
        return self.k_uniformity + 1

    @property
    def total_bips(self) -> int:
        return sum(r.n_bips for r in self.sizes)

    @property
    def total_saturated(self) -> int:
        return sum(r.saturated for r in self.sizes)

    def failed_counts(self) -> dict[str, tuple[int, int]]:
        """Failed cuts as (failed, total) under the three counting conventions.

        ``classes``: complement classes with |S| <= N/2;
        ``subsets``: raw subsets with |S| <= N/2 (balanced classes count twice);
        ``balanced``: raw subsets with |S| = N/2 only (even N).
        """
        n = self.n_parties
        half_even = n % 2 == 0
        classes = (len(self.failed), self.total_bips)
        raw_fail = sum(2 if half_even and f.size == n // 2 else 1 for f in self.failed)
        raw_total = sum(r.n_subsets for r in self.sizes)
        if half_even:
            bal_fail = sum(2 for f in self.failed if f.size == n // 2)
            balanced = (bal_fail, math.comb(n, n // 2))
        else:
            balanced = (0, 0)
        return {"classes": classes, "subsets": (raw_fail, raw_total), "balanced": balanced}


def _size_records(n, sizes, per_component_ranks, bases):
    """Aggregate per-class ranks (one array per component) into size records."""
    records = []
    keys = np.arange(1, len(sizes))
    ks = sizes[1:]
    stacked = np.stack([r[1:] for r in per_component_ranks])  # (components, classes)
    logs = np.array([math.log(b) for b in bases])
    entropy = logs @ stacked
    full = np.all(stacked == ks, axis=0)
    worst = stacked.min(axis=0)
    for k in range(1, n // 2 + 1):
        sel = ks == k
        idx = np.flatnonzero(sel)
        n_bips = len(idx)
        at = idx[np.argmin(entropy[idx])]
        records.append(SizeRecord(
            size=k,
            n_bips=n_bips,
            n_subsets=math.comb(n, k),
            saturated=int(full[idx].sum()),
            min_rank=int(worst[idx].min()),
            rank_deficit=int((k - stacked[:, idx]).sum()),
            min_entropy_ranks=tuple((int(b), int(stacked[c, at])) for c, b in enumerate(bases)),
        ))
    failed_idx = np.flatnonzero(~full)
    return records, failed_idx, worst, keys


def _k_uniformity(records) -> int:
    k = 0
    for r in records:
        if r.saturated != r.n_bips:
            break
        k = r.size
    return k


def report_from_ranks(n: int, field: FieldSpec, per_component_ranks,
                      components=()) -> CertificationReport:
    table = bipartition_table(n)
    bases = [c.cardinality for c in field.components()]
    records, failed_idx, worst, keys = _size_records(n, table.sizes, per_component_ranks, bases)
    failed = [FailedCut(int(table.masks[keys[i]]), int(table.sizes[keys[i]]), int(worst[i]))
              for i in failed_idx]
    k_unif = _k_uniformity(records)
    return CertificationReport(n, field, records, failed, not failed, k_unif, list(components))


def certify_ame(P: PhaseMatrix, workers: int | None = None) -> CertificationReport:
    """Check every complement class with |S| <= N/2 for a full-rank cut."""
    if P.field.kind == COMPOSITE:
        from .crt import CompositePhase, certify_composite
        return certify_composite(CompositePhase.from_matrix(P), workers=workers)
    ranks = class_ranks(P, workers)
    return report_from_ranks(P.n, P.field, [ranks])
