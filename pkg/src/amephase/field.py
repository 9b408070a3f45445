"""Exact arithmetic over F_p, F_{p^m} and square-free Z_d, plus rank over fields.

Elements are plain Python integers in canonical form:

* ``F_p``: the residue in ``[0, p)``.
* ``F_{p^m}``: the coefficient vector ``(c_0, ..., c_{m-1})`` of the reduced
  polynomial read as a base-``p`` integer, ``c_0`` least significant.  Use
  :func:`to_coeffs` / :func:`from_coeffs` to move between the two views.
* ``Z_d`` (square-free): the residue in ``[0, d)``.

:class:`FieldElement` wraps an integer together with its :class:`FieldSpec`
for operator-style use; matrices are stored as integer numpy arrays.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property, lru_cache

import numpy as np

from .errors import (
    CompositeFieldRankError,
    DimensionMismatchError,
    DivisionByZero,
    InvalidFieldError,
    MixedFieldError,
    NonDistinctPrimesError,
    OutOfRangeError,
    WrongFieldKindError,
)

PRIME_BOUND = 1 << 32

PRIME = "prime"
PRIME_POWER = "primepower"
COMPOSITE = "composite"


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin; exact for every n < 3.3e24."""
    if n < 2:
        return False
    small = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
    for q in small:
        if n % q == 0:
            return n == q
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in small:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def prime_factors(n: int) -> list[int]:
    out = []
    q = 2
    while q * q <= n:
        if n % q == 0:
            out.append(q)
            while n % q == 0:
                n //= q
        q += 1
    if n > 1:
        out.append(n)
    return out


# -- polynomials over F_p: coefficient lists, low degree first, no trailing zeros

def _trim(a):
    a = list(a)
    while a and a[-1] == 0:
        a.pop()
    return a


def _poly_sub(a, b, p):
    n = max(len(a), len(b))
    return _trim([((a[i] if i < len(a) else 0) - (b[i] if i < len(b) else 0)) % p
                  for i in range(n)])


def _poly_mul(a, b, p):
    if not a or not b:
        return []
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] = (out[i + j] + x * y) % p
    return _trim(out)


def _poly_divmod(a, b, p):
    a = _trim(a)
    b = _trim(b)
    if not b:
        raise DivisionByZero("polynomial division by zero")
    inv_lead = pow(b[-1], -1, p)
    q = [0] * max(len(a) - len(b) + 1, 0)
    a = list(a)
    while len(a) >= len(b) and a:
        shift = len(a) - len(b)
        c = a[-1] * inv_lead % p
        q[shift] = c
        for i, y in enumerate(b):
            a[i + shift] = (a[i + shift] - c * y) % p
        a = _trim(a)
    return _trim(q), a


def _poly_mod(a, b, p):
    return _poly_divmod(a, b, p)[1]


def _poly_powmod(a, e, mod, p):
    result = [1]
    base = _poly_mod(a, mod, p)
    while e:
        if e & 1:
            result = _poly_mod(_poly_mul(result, base, p), mod, p)
        base = _poly_mod(_poly_mul(base, base, p), mod, p)
        e >>= 1
    return result


def _poly_gcd(a, b, p):
    a, b = _trim(a), _trim(b)
    while b:
        a, b = b, _poly_mod(a, b, p)
    if a:
        inv = pow(a[-1], -1, p)
        a = [c * inv % p for c in a]
    return a


def _poly_egcd(a, b, p):
    """Return (g, s) with s*a = g mod b, g monic."""
    r0, r1 = _trim(b), _trim(a)
    s0, s1 = [], [1]
    while r1:
        q, r = _poly_divmod(r0, r1, p)
        r0, r1 = r1, r
        s0, s1 = s1, _poly_sub(s0, _poly_mul(q, s1, p), p)
    if not r0:
        return [], []
    inv = pow(r0[-1], -1, p)
    return [c * inv % p for c in r0], [c * inv % p for c in s0]


def is_irreducible(poly, p: int) -> bool:
    """Irreducibility of a monic polynomial over F_p (coefficients low-to-high).

    A degree-m polynomial is irreducible iff it has no roots and shares no
    factor with x^{p^k} - x for every k <= m/2.
    """
    f = _trim(poly)
    m = len(f) - 1
    if m < 1 or f[-1] != 1:
        return False
    if m == 1:
        return True
    for x in range(p):
        if sum(c * pow(x, i, p) for i, c in enumerate(f)) % p == 0:
            return False
    xp = [0, 1]
    for _ in range(1, m // 2 + 1):
        xp = _poly_powmod(xp, p, f, p)
        g = _poly_gcd(f, _poly_sub(xp, [0, 1], p), p)
        if len(g) > 1:
            return False
    return True


@lru_cache(maxsize=None)
def default_irreducible(p: int, m: int) -> tuple[int, ...]:
    """Lexicographically smallest monic irreducible of degree m (low degree compared first)."""
    for low in itertools.product(range(p), repeat=m):
        cand = list(low) + [1]
        if is_irreducible(cand, p):
            return tuple(cand)
    raise InvalidFieldError(f"no irreducible polynomial of degree {m} over F_{p}")


def to_coeffs(value: int, p: int, m: int) -> list[int]:
    out = []
    for _ in range(m):
        value, c = divmod(value, p)
        out.append(c)
    return out


def from_coeffs(coeffs, p: int) -> int:
    value = 0
    for c in reversed(list(coeffs)):
        value = value * p + (c % p)
    return value


@dataclass(frozen=True)
class FieldSpec:
    """Arithmetic domain: F_p, F_{p^m} or square-free Z_d."""

    kind: str
    p: int = 0
    m: int = 1
    poly: tuple[int, ...] = ()
    primes: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind == PRIME:
            _check_prime(self.p)
        elif self.kind == PRIME_POWER:
            _check_prime(self.p)
            if self.m < 2:
                raise InvalidFieldError("prime-power fields need degree m >= 2")
            if len(self.poly) != self.m + 1 or self.poly[-1] != 1:
                raise InvalidFieldError("modulus must be monic of degree m")
            if any(not 0 <= c < self.p for c in self.poly):
                raise InvalidFieldError("modulus coefficients must lie in [0, p)")
            if not is_irreducible(self.poly, self.p):
                raise InvalidFieldError(f"{list(self.poly)} is reducible over F_{self.p}")
        elif self.kind == COMPOSITE:
            if len(self.primes) < 2:
                raise InvalidFieldError("composite rings need at least two primes")
            if len(set(self.primes)) != len(self.primes):
                raise NonDistinctPrimesError(f"primes {self.primes} are not distinct")
            if list(self.primes) != sorted(self.primes):
                raise InvalidFieldError("composite primes must be sorted")
            for q in self.primes:
                _check_prime(q)
            if math.prod(self.primes) >= 1 << 62:
                raise InvalidFieldError("composite modulus too large")
        else:
            raise InvalidFieldError(f"unknown field kind {self.kind!r}")

    @classmethod
    def prime(cls, p: int) -> FieldSpec:
        return cls(PRIME, p=int(p))

    @classmethod
    def prime_power(cls, p: int, m: int, poly=None) -> FieldSpec:
        p, m = int(p), int(m)
        if poly is None:
            _check_prime(p)
            if m < 2:
                raise InvalidFieldError("prime-power fields need degree m >= 2")
            poly = default_irreducible(p, m)
        return cls(PRIME_POWER, p=p, m=m, poly=tuple(int(c) for c in poly))

    @classmethod
    def composite(cls, primes) -> FieldSpec:
        primes = [int(q) for q in primes]
        if len(set(primes)) != len(primes):
            raise NonDistinctPrimesError(f"primes {primes} are not distinct")
        return cls(COMPOSITE, primes=tuple(sorted(primes)))

    @classmethod
    def parse(cls, text: str) -> FieldSpec:
        """Parse ``prime:p``, ``primepower:p:m[:c0,c1,...]`` or ``composite:p1,p2,...``."""
        parts = text.strip().split(":")
        try:
            if parts[0] == PRIME and len(parts) == 2:
                return cls.prime(int(parts[1]))
            if parts[0] == PRIME_POWER and len(parts) in (3, 4):
                poly = None
                if len(parts) == 4:
                    poly = [int(c) for c in parts[3].split(",")]
                return cls.prime_power(int(parts[1]), int(parts[2]), poly)
            if parts[0] == COMPOSITE and len(parts) == 2:
                return cls.composite(int(q) for q in parts[1].split(","))
        except ValueError as exc:
            if isinstance(exc, InvalidFieldError):
                raise
            raise InvalidFieldError(f"cannot parse field {text!r}: {exc}") from None
        raise InvalidFieldError(f"cannot parse field {text!r}")

    @property
    def is_field(self) -> bool:
        return self.kind != COMPOSITE

    @cached_property
    def cardinality(self) -> int:
        if self.kind == PRIME:
            return self.p
        if self.kind == PRIME_POWER:
            return self.p ** self.m
        return math.prod(self.primes)

    @property
    def q(self) -> int:
        return self.cardinality

    @property
    def characteristic(self) -> int:
        if self.kind == COMPOSITE:
            raise WrongFieldKindError("Z_d with composite d has no prime characteristic")
        return self.p

    def components(self) -> list[FieldSpec]:
        """Prime fields of the CRT decomposition (the field itself if it is one)."""
        if self.kind == COMPOSITE:
            return [FieldSpec.prime(q) for q in self.primes]
        return [self]

    def label(self) -> str:
        if self.kind == PRIME:
            return f"F_{self.p}"
        if self.kind == PRIME_POWER:
            return f"F_{self.p}^{self.m}"
        return f"Z_{self.cardinality}"

    def header(self) -> str:
        """Field line of the matrix file format."""
        if self.kind == PRIME:
            return f"field prime {self.p}"
        if self.kind == PRIME_POWER:
            return f"field primepower {self.p} {self.m} " + " ".join(map(str, self.poly))
        return "field composite " + " ".join(map(str, self.primes))

    def flag(self) -> str:
        """Inverse of :meth:`parse`."""
        if self.kind == PRIME:
            return f"prime:{self.p}"
        if self.kind == PRIME_POWER:
            return f"primepower:{self.p}:{self.m}:" + ",".join(map(str, self.poly))
        return "composite:" + ",".join(map(str, self.primes))

    def __call__(self, value) -> FieldElement:
        return FieldElement(value, self)

    def element(self, value) -> FieldElement:
        return FieldElement(value, self)

    def check(self, value: int) -> int:
        value = int(value)
        if not 0 <= value < self.cardinality:
            raise OutOfRangeError(f"{value} is not a canonical element of {self.label()}")
        return value

    def __repr__(self):
        if self.kind == PRIME_POWER:
            return f"FieldSpec.prime_power({self.p}, {self.m}, {list(self.poly)})"
        if self.kind == PRIME:
            return f"FieldSpec.prime({self.p})"
        return f"FieldSpec.composite({list(self.primes)})"


def _check_prime(p):
    if not isinstance(p, (int, np.integer)) or not 2 <= p < PRIME_BOUND:
        raise InvalidFieldError(f"prime must lie in [2, 2^32), got {p!r}")
    if not is_prime(int(p)):
        raise InvalidFieldError(f"{p} is not prime")


# -- scalar arithmetic on canonical integers

def add(a: int, b: int, spec: FieldSpec) -> int:
    if spec.kind == PRIME_POWER:
        p = spec.p
        return from_coeffs([x + y for x, y in zip(to_coeffs(a, p, spec.m),
                                                   to_coeffs(b, p, spec.m))], p)
    return (a + b) % spec.cardinality


def neg(a: int, spec: FieldSpec) -> int:
    if spec.kind == PRIME_POWER:
        return from_coeffs([-x for x in to_coeffs(a, spec.p, spec.m)], spec.p)
    return -a % spec.cardinality


def sub(a: int, b: int, spec: FieldSpec) -> int:
    return add(a, neg(b, spec), spec)


def mul(a: int, b: int, spec: FieldSpec) -> int:
    if spec.kind == PRIME_POWER:
        p, m = spec.p, spec.m
        prod = _poly_mul(_trim(to_coeffs(a, p, m)), _trim(to_coeffs(b, p, m)), p)
        return from_coeffs(_poly_mod(prod, spec.poly, p), p)
    return a * b % spec.cardinality


def inv(a: int, spec: FieldSpec) -> int:
    if a == 0:
        raise DivisionByZero(f"0 has no inverse in {spec.label()}")
    if spec.kind == PRIME_POWER:
        p = spec.p
        g, s = _poly_egcd(_trim(to_coeffs(a, p, spec.m)), list(spec.poly), p)
        return from_coeffs(s, p)
    try:
        return pow(a, -1, spec.cardinality)
    except ValueError:
        raise DivisionByZero(f"{a} is not a unit in {spec.label()}") from None


def power(a: int, e: int, spec: FieldSpec) -> int:
    if e < 0:
        a, e = inv(a, spec), -e
    if spec.kind != PRIME_POWER:
        return pow(a, e, spec.cardinality)
    result, base = 1, a
    while e:
        if e & 1:
            result = mul(result, base, spec)
        base = mul(base, base, spec)
        e >>= 1
    return result


def trace_map(x, spec: FieldSpec) -> int:
    """Absolute trace F_{p^m} -> F_p: x + x^p + ... + x^{p^(m-1)}."""
    if spec.kind != PRIME_POWER:
        raise WrongFieldKindError("trace map needs a prime-power field")
    if isinstance(x, FieldElement):
        _same_field(x.field, spec)
        x = x.value
    total, y = 0, spec.check(x)
    for _ in range(spec.m):
        total = add(total, y, spec)
        y = power(y, spec.p, spec)
    coeffs = to_coeffs(total, spec.p, spec.m)
    # Frobenius-fixed elements are exactly the constants
    assert not any(coeffs[1:]), coeffs
    return coeffs[0]


def _same_field(a: FieldSpec, b: FieldSpec):
    if a != b:
        raise MixedFieldError(f"operands live in {a.label()} and {b.label()}")


class FieldElement:
    """An element of a :class:`FieldSpec` with arithmetic operators."""

    __slots__ = ("value", "field")

    def __init__(self, value, field: FieldSpec):
        if isinstance(value, FieldElement):
            _same_field(value.field, field)
            value = value.value
        elif field.kind == PRIME_POWER and isinstance(value, (list, tuple)):
            if len(value) > field.m:
                raise OutOfRangeError("too many coefficients")
            value = from_coeffs(value, field.p)
        else:
            value = int(value)
            if field.kind != PRIME_POWER:
                value %= field.cardinality
        self.value = field.check(value)
        self.field = field

    def _coerce(self, other):
        if isinstance(other, FieldElement):
            _same_field(self.field, other.field)
            return other.value
        if isinstance(other, (int, np.integer)):
            return FieldElement(int(other), self.field).value
        return NotImplemented

    def __add__(self, other):
        b = self._coerce(other)
        if b is NotImplemented:
            return b
        return FieldElement(add(self.value, b, self.field), self.field)

    __radd__ = __add__

    def __sub__(self, other):
        b = self._coerce(other)
        if b is NotImplemented:
            return b
        return FieldElement(sub(self.value, b, self.field), self.field)

    def __rsub__(self, other):
        b = self._coerce(other)
        if b is NotImplemented:
            return b
        return FieldElement(sub(b, self.value, self.field), self.field)

    def __mul__(self, other):
        b = self._coerce(other)
        if b is NotImplemented:
            return b
        return FieldElement(mul(self.value, b, self.field), self.field)

    __rmul__ = __mul__

    def __neg__(self):
        return FieldElement(neg(self.value, self.field), self.field)

    def inv(self):
        return FieldElement(inv(self.value, self.field), self.field)

    def __truediv__(self, other):
        b = self._coerce(other)
        if b is NotImplemented:
            return b
        return FieldElement(mul(self.value, inv(b, self.field), self.field), self.field)

    def __pow__(self, e: int):
        return FieldElement(power(self.value, int(e), self.field), self.field)

    def trace(self) -> int:
        return trace_map(self.value, self.field)

    def coeffs(self) -> list[int]:
        if self.field.kind != PRIME_POWER:
            return [self.value]
        return to_coeffs(self.value, self.field.p, self.field.m)

    def __eq__(self, other):
        if isinstance(other, FieldElement):
            return self.field == other.field and self.value == other.value
        if isinstance(other, (int, np.integer)):
            return self.value == other
        return NotImplemented

    def __hash__(self):
        return hash((self.value, self.field))

    def __int__(self):
        return self.value

    def __repr__(self):
        return f"{self.field.label()}({self.value})"


# -- Chinese remainder maps for square-free Z_d

def _check_primes(primes):
    primes = [int(q) for q in primes]
    if len(set(primes)) != len(primes):
        raise NonDistinctPrimesError(f"primes {primes} are not distinct")
    return primes


def crt_combine(residues, primes) -> int:
    """Unique x in [0, prod(primes)) with x = residues[a] mod primes[a]."""
    residues = [int(r) for r in residues]
    primes = _check_primes(primes)
    if len(residues) != len(primes):
        raise DimensionMismatchError(f"{len(residues)} residues for {len(primes)} primes")
    d = math.prod(primes)
    x = 0
    for r, q in zip(residues, primes):
        if not 0 <= r < q:
            raise OutOfRangeError(f"residue {r} not in [0, {q})")
        n = d // q
        x += r * n * pow(n, -1, q)
    return x % d


def crt_split(x: int, primes) -> list[int]:
    primes = _check_primes(primes)
    x = int(x)
    if not 0 <= x < math.prod(primes):
        raise OutOfRangeError(f"{x} not in [0, {math.prod(primes)})")
    return [x % q for q in primes]


def crt_combine_array(residues, primes) -> np.ndarray:
    """Entrywise :func:`crt_combine` over a stack of residue arrays."""
    primes = _check_primes(primes)
    if len(residues) != len(primes):
        raise DimensionMismatchError(f"{len(residues)} residue arrays for {len(primes)} primes")
    d = math.prod(primes)
    out = np.zeros(np.shape(residues[0]), dtype=object)
    for r, q in zip(residues, primes):
        r = np.asarray(r, dtype=np.int64)
        if r.size and (r.min() < 0 or r.max() >= q):
            raise OutOfRangeError(f"residues not in [0, {q})")
        n = d // q
        out = out + r.astype(object) * (n * pow(n, -1, q))
    return (out % d).astype(np.int64)


# -- matrices and rank

@dataclass(frozen=True)
class FieldMatrix:
    """Dense matrix of field integers; F_p and Z_d entries are reduced on construction."""

    entries: np.ndarray
    field: FieldSpec = dc_field(compare=False)

    def __post_init__(self):
        a = np.array(self.entries, dtype=np.int64, copy=True)
        if a.ndim != 2:
            raise DimensionMismatchError("field matrices are two-dimensional")
        if self.field.kind != PRIME_POWER:
            a %= self.field.cardinality
        if a.size and (a.min() < 0 or a.max() >= self.field.cardinality):
            raise OutOfRangeError(f"entries are not canonical in {self.field.label()}")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    @property
    def T(self) -> FieldMatrix:
        return FieldMatrix(self.entries.T, self.field)

    def __eq__(self, other):
        return (isinstance(other, FieldMatrix) and self.field == other.field
                and np.array_equal(self.entries, other.entries))

    def __hash__(self):
        return hash((self.field, self.entries.tobytes(), self.entries.shape))


def rank(M: FieldMatrix) -> int:
    """Dimension of the row space of ``M`` over its field."""
    if not M.field.is_field:
        raise CompositeFieldRankError(
            "rank over Z_d is undefined here; split into prime components first")
    from . import _kernels

    if M.rows == 0 or M.cols == 0:
        return 0
    arith = _kernels.arith_for(M.field)
    if arith is None:
        return rank_python(M)
    return _kernels.matrix_rank(M.entries, *arith)


def rank_python(M: FieldMatrix) -> int:
    """Reference Gaussian elimination with scalar field operations."""
    spec = M.field
    if not spec.is_field:
        raise CompositeFieldRankError("rank over Z_d is undefined here")
    A = [[int(v) for v in row] for row in M.entries]
    nr, nc = M.rows, M.cols
    r = 0
    for c in range(nc):
        piv = next((i for i in range(r, nr) if A[i][c]), None)
        if piv is None:
            continue
        A[r], A[piv] = A[piv], A[r]
        pinv = inv(A[r][c], spec)
        for i in range(r + 1, nr):
            if A[i][c]:
                f = mul(A[i][c], pinv, spec)
                A[i] = [sub(x, mul(f, y, spec), spec) for x, y in zip(A[i], A[r])]
        r += 1
        if r == nr:
            break
    return r


@lru_cache(maxsize=64)
def log_tables(spec: FieldSpec) -> tuple[np.ndarray, np.ndarray]:
    """Discrete log / antilog tables of F_{p^m} with respect to a primitive element."""
    q = spec.cardinality
    order = q - 1
    factors = prime_factors(order)
    for g in range(2, q):
        if all(power(g, order // f, spec) != 1 for f in factors):
            break
    else:
        raise InvalidFieldError("no primitive element found")
    exp = np.zeros(order, dtype=np.int64)
    log = np.zeros(q, dtype=np.int64)
    x = 1
    for k in range(order):
        exp[k] = x
        log[x] = k
        x = mul(x, g, spec)
    exp.setflags(write=False)
    log.setflags(write=False)
    return log, exp


@lru_cache(maxsize=64)
def trace_table(spec: FieldSpec) -> np.ndarray:
    """trace_map evaluated at every element of a prime-power field."""
    table = np.array([trace_map(x, spec) for x in range(spec.cardinality)], dtype=np.int64)
    table.setflags(write=False)
    return table
