"""Square-free composite dimensions d = p_1 * ... * p_r.

A phase matrix over Z_d is handled only through its reductions modulo each
prime: the state is the tensor product of the prime-field phase states, so
purities multiply and Renyi-2 entropies add.  Ranks over Z_d itself are never
computed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import (
    DuplicatePrimesError,
    InvalidPhaseMatrixError,
    MixedDimensionsError,
    NotCompositeError,
)
from .field import COMPOSITE, PRIME, FieldSpec, crt_combine_array
from .phasecore import (
    Bipartition,
    CertificationReport,
    PhaseMatrix,
    Purity,
    _LOG,
    certify_ame,
    class_ranks,
    cut_rank,
    report_from_ranks,
)


@dataclass(frozen=True)
class CompositePhase:
    """Per-prime phase matrices of one state over Z_d, primes ascending."""

    components: tuple[PhaseMatrix, ...]

    def __post_init__(self):
        comps = tuple(sorted(self.components, key=lambda c: c.field.p))
        if not comps:
            raise MixedDimensionsError("at least one component is required")
        for c in comps:
            if c.field.kind != PRIME:
                raise InvalidPhaseMatrixError(
                    f"components must be over prime fields, got {c.field.label()}")
        if len({c.n for c in comps}) != 1:
            raise MixedDimensionsError(f"party counts differ: {[c.n for c in comps]}")
        primes = [c.field.p for c in comps]
        if len(set(primes)) != len(primes):
            raise DuplicatePrimesError(f"duplicate primes {primes}")
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_matrix(cls, P: PhaseMatrix) -> CompositePhase:
        if P.field.kind == COMPOSITE:
            return cls(tuple(split_matrix(P)))
        return cls((P,))

    @property
    def n_parties(self) -> int:
        return self.components[0].n

    @property
    def primes(self) -> list[int]:
        return [c.field.p for c in self.components]

    @property
    def d(self) -> int:
        return math.prod(self.primes)

    def to_matrix(self) -> PhaseMatrix:
        return compose_matrices(self.components)


def compose_matrices(components) -> PhaseMatrix:
    """Entrywise CRT recombination of prime-field phase matrices.

    A single component is returned unchanged.
    """
    comps = list(components)
    if not comps:
        raise MixedDimensionsError("nothing to compose")
    primes = []
    for c in comps:
        if c.field.kind != PRIME:
            raise InvalidPhaseMatrixError(
                f"components must be over prime fields, got {c.field.label()}")
        primes.append(c.field.p)
    if len(set(primes)) != len(primes):
        raise DuplicatePrimesError(f"duplicate primes {primes}")
    if len({c.n for c in comps}) != 1:
        raise MixedDimensionsError(f"party counts differ: {[c.n for c in comps]}")
    if len(comps) == 1:
        return comps[0]
    comps.sort(key=lambda c: c.field.p)
    primes.sort()
    entries = crt_combine_array([c.entries for c in comps], primes)
    return PhaseMatrix(entries, FieldSpec.composite(primes))


def split_matrix(P: PhaseMatrix) -> list[PhaseMatrix]:
    if P.field.kind != COMPOSITE:
        raise NotCompositeError(f"{P.field.label()} is not a composite ring")
    return [PhaseMatrix(P.entries % q, FieldSpec.prime(q)) for q in P.field.primes]


def _as_composite(C) -> CompositePhase:
    if isinstance(C, CompositePhase):
        return C
    return CompositePhase.from_matrix(C)


def composite_purity(C, S: Bipartition) -> Purity:
    """Product over primes of p ** -rank, kept as (prime, exponent) pairs."""
    C = _as_composite(C)
    return Purity(tuple((c.field.p, -cut_rank(c, S)) for c in C.components))


def composite_entropy(C, S: Bipartition, unit: str = "bits") -> float:
    """Sum over primes of rank * log(p)."""
    C = _as_composite(C)
    log = _LOG[unit]
    return sum(cut_rank(c, S) * log(c.field.p) for c in C.components)


def certify_composite(C, workers: int | None = None) -> CertificationReport:
    """AME over Z_d iff every prime component is AME on the same classes."""
    C = _as_composite(C)
    if len(C.components) == 1:
        return certify_ame(C.components[0], workers=workers)
    ranks = [class_ranks(c, workers) for c in C.components]
    comp_reports = [report_from_ranks(C.n_parties, c.field, [r])
                    for c, r in zip(C.components, ranks)]
    field = FieldSpec.composite(C.primes)
    return report_from_ranks(C.n_parties, field, ranks, comp_reports)


# -- necessary condition from the prime factors

@dataclass(frozen=True)
class NonexistenceFact:
    """AME(N, p) is known not to exist for p == prime and min_n <= N <= max_n."""

    prime: int
    min_n: int
    max_n: int | None
    reason: str
    citation: str

    def applies(self, n: int, prime: int) -> bool:
        return prime == self.prime and n >= self.min_n and (self.max_n is None or n <= self.max_n)


NONEXISTENCE_TABLE: tuple[NonexistenceFact, ...] = (
    NonexistenceFact(2, 4, 4, "AME(4,2) nonexistent",
                     "Higuchi & Sudbery, Phys. Lett. A 273, 213 (2000); "
                     "Huber et al., J. Phys. A 51, 175301 (2018)"),
    NonexistenceFact(2, 7, None, "AME(N>=7,2) nonexistent",
                     "Huber, Guehne & Siewert, Phys. Rev. Lett. 118, 200502 (2017)"),
)


def load_nonexistence_table(path) -> tuple[NonexistenceFact, ...]:
    """Read extra facts from a JSON list of objects with the NonexistenceFact fields."""
    with open(path) as fh:
        rows = json.load(fh)
    return tuple(NonexistenceFact(int(r["prime"]), int(r["min_n"]),
                                  None if r.get("max_n") is None else int(r["max_n"]),
                                  str(r["reason"]), str(r.get("citation", "")))
                 for r in rows)


@dataclass(frozen=True)
class GateResult:
    blocked: bool
    prime: int | None = None
    reason: str = ""
    citation: str = ""

    def __bool__(self):
        return not self.blocked

    def __str__(self):
        if not self.blocked:
            return "Pass"
        return f"Blocked({self.prime}, {self.reason!r})"


PASS = GateResult(False)


def crt_gate(n_parties: int, primes, table=NONEXISTENCE_TABLE) -> GateResult:
    """Block a product-form search if some prime factor is known to have no AME(N, p)."""
    primes = [int(q) for q in primes]
    if len(set(primes)) != len(primes):
        raise DuplicatePrimesError(f"duplicate primes {primes}")
    for q in sorted(primes):
        for fact in table:
            if fact.applies(n_parties, q):
                return GateResult(True, q, fact.reason, fact.citation)
    return PASS

