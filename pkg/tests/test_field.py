import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from amephase.errors import (
    CompositeFieldRankError,
    DimensionMismatchError,
    DivisionByZero,
    InvalidFieldError,
    MixedFieldError,
    NonDistinctPrimesError,
    OutOfRangeError,
    WrongFieldKindError,
)
from amephase.field import (
    FieldMatrix,
    FieldSpec,
    add,
    crt_combine,
    crt_combine_array,
    crt_split,
    default_irreducible,
    from_coeffs,
    inv,
    is_irreducible,
    is_prime,
    mul,
    neg,
    power,
    rank,
    rank_python,
    sub,
    to_coeffs,
    trace_map,
)

F2, F3, F5, F7, F73 = (FieldSpec.prime(p) for p in (2, 3, 5, 7, 73))
F4 = FieldSpec.prime_power(2, 2)
F9 = FieldSpec.prime_power(3, 2)
F8 = FieldSpec.prime_power(2, 3)
ALL_FIELDS = [F2, F3, F7, F73, F4, F8, F9, FieldSpec.prime(137)]


# -- primes and polynomials

def test_is_prime_small_table():
    sieve = [n for n in range(2, 500) if all(n % d for d in range(2, int(n ** 0.5) + 1))]
    assert [n for n in range(500) if is_prime(n)] == sieve


def test_is_prime_near_bound():
    assert is_prime(4294967291)  # largest prime below 2**32
    assert not is_prime(4294967295)
    assert not is_prime(3215031751)  # strong pseudoprime to bases 2, 3, 5, 7


def test_field_spec_validation():
    with pytest.raises(InvalidFieldError):
        FieldSpec.prime(9)
    with pytest.raises(InvalidFieldError):
        FieldSpec.prime_power(2, 2, [1, 0, 1])  # x^2 + 1 = (x+1)^2 over F_2
    with pytest.raises(InvalidFieldError):
        FieldSpec.prime_power(2, 1)
    with pytest.raises(NonDistinctPrimesError):
        FieldSpec.composite([3, 3])
    with pytest.raises(InvalidFieldError):
        FieldSpec.composite([2, 4])


def test_irreducibility_against_root_and_factor_search():
    # degree 2 and 3: irreducible iff no roots
    for p in (2, 3, 5):
        for m in (2, 3):
            for low in itertools.product(range(p), repeat=m):
                poly = list(low) + [1]
                has_root = any(sum(c * x ** i for i, c in enumerate(poly)) % p == 0
                               for x in range(p))
                assert is_irreducible(poly, p) == (not has_root)


def test_degree_four_reducible_without_roots():
    # (x^2+x+1)^2 = x^4 + x^2 + 1 over F_2 has no roots but is reducible
    assert not is_irreducible([1, 0, 1, 0, 1], 2)
    assert is_irreducible([1, 1, 0, 0, 1], 2)


def test_default_irreducible_is_lexicographically_smallest():
    assert default_irreducible(2, 2) == (1, 1, 1)
    assert default_irreducible(3, 2) == (1, 0, 1)
    for p, m in [(2, 3), (3, 2), (5, 2), (2, 4)]:
        chosen = default_irreducible(p, m)
        for low in itertools.product(range(p), repeat=m):
            if tuple(low) + (1,) == chosen:
                break
            assert not is_irreducible(list(low) + [1], p)


def test_coefficient_encoding_round_trip():
    for v in range(27):
        assert from_coeffs(to_coeffs(v, 3, 3), 3) == v
    assert to_coeffs(6, 2, 3) == [0, 1, 1]


def test_parse_and_flag_round_trip():
    for text in ["prime:7", "primepower:2:2", "primepower:3:2:2,2,1", "composite:2,3,5"]:
        spec = FieldSpec.parse(text)
        assert FieldSpec.parse(spec.flag()) == spec
    assert FieldSpec.parse("primepower:2:2").poly == (1, 1, 1)
    assert FieldSpec.parse("composite:137,73").primes == (73, 137)


# -- arithmetic examples

def test_inverse_in_f7():
    assert inv(3, F7) == 5


def test_wraparound_in_f73():
    assert add(59, 14, F73) == 0


def test_f4_x_times_x():
    x = from_coeffs([0, 1], 2)
    assert mul(x, x, F4) == from_coeffs([1, 1], 2)


def test_inverse_of_zero():
    with pytest.raises(DivisionByZero):
        inv(0, F7)
    with pytest.raises(DivisionByZero):
        inv(0, F4)


def test_mixed_field_operands():
    with pytest.raises(MixedFieldError):
        F7(3) + F73(3)
    with pytest.raises(MixedFieldError):
        F4(1) * F2(1)


def test_field_element_operators():
    a, b = F7(3), F7(5)
    assert (a * b).value == 1
    assert (a - b).value == 5
    assert (-a).value == 4
    assert (a / b).value == mul(3, inv(5, F7), F7)
    assert F4([0, 1]) ** 3 == F4(1)


def test_f4_multiplication_table():
    # hand table for F_2[x]/(x^2+x+1): 0, 1, x=2, x+1=3
    table = [[0, 0, 0, 0], [0, 1, 2, 3], [0, 2, 3, 1], [0, 3, 1, 2]]
    for a in range(4):
        for b in range(4):
            assert mul(a, b, F4) == table[a][b]


@pytest.mark.parametrize("spec", ALL_FIELDS, ids=lambda s: s.label())
def test_inverse_property_exhaustive(spec):
    for a in range(1, spec.cardinality):
        assert mul(a, inv(a, spec), spec) == 1


@pytest.mark.parametrize("spec", [F2, F5, F4, F9, F8], ids=lambda s: s.label())
def test_ring_axioms_exhaustive(spec):
    q = spec.cardinality
    for a, b, c in itertools.product(range(q), repeat=3):
        assert add(a, add(b, c, spec), spec) == add(add(a, b, spec), c, spec)
        assert mul(a, mul(b, c, spec), spec) == mul(mul(a, b, spec), c, spec)
        assert mul(a, add(b, c, spec), spec) == add(mul(a, b, spec), mul(a, c, spec), spec)
    for a, b in itertools.product(range(q), repeat=2):
        assert add(a, b, spec) == add(b, a, spec)
        assert mul(a, b, spec) == mul(b, a, spec)
        assert sub(add(a, b, spec), b, spec) == a
        assert add(a, neg(a, spec), spec) == 0


def test_multiplicative_group_order():
    for spec in (F4, F8, F9):
        for a in range(1, spec.cardinality):
            assert power(a, spec.cardinality - 1, spec) == 1


# -- trace map

def test_trace_examples_f4():
    assert trace_map(0, F4) == 0
    assert trace_map(1, F4) == 0
    assert trace_map(from_coeffs([0, 1], 2), F4) == 1


def test_trace_wrong_kind():
    with pytest.raises(WrongFieldKindError):
        trace_map(1, F7)


@pytest.mark.parametrize("spec", [F4, F8, F9, FieldSpec.prime_power(5, 2)],
                         ids=lambda s: s.label())
def test_trace_linearity(spec):
    rng = np.random.default_rng(0)
    q, p = spec.cardinality, spec.p
    for _ in range(1000):
        x, y = (int(v) for v in rng.integers(0, q, 2))
        alpha = int(rng.integers(0, p))
        lhs = trace_map(add(mul(alpha, x, spec), y, spec), spec)
        assert lhs == (alpha * trace_map(x, spec) + trace_map(y, spec)) % p


def test_trace_is_onto_and_balanced():
    for spec in (F4, F8, F9):
        counts = np.bincount([trace_map(x, spec) for x in range(spec.cardinality)],
                             minlength=spec.p)
        assert np.all(counts == spec.cardinality // spec.p)


# -- CRT maps

def test_crt_examples():
    assert crt_combine([14, 87], [73, 137]) == 87
    assert crt_combine([59, 48], [73, 137]) == 2103
    assert crt_combine([0, 0], [73, 137]) == 0
    assert crt_split(2103, [73, 137]) == [59, 48]
    assert crt_split(87, [73, 137]) == [14, 87]
    assert crt_split(0, [73, 137]) == [0, 0]


def test_crt_errors():
    with pytest.raises(DimensionMismatchError):
        crt_combine([1, 2], [73])
    with pytest.raises(NonDistinctPrimesError):
        crt_combine([1, 2], [73, 73])
    with pytest.raises(OutOfRangeError):
        crt_combine([73, 0], [73, 137])
    with pytest.raises(OutOfRangeError):
        crt_split(10001, [73, 137])


@given(st.integers(0, 10000))
def test_crt_round_trip_on_range(x):
    assert crt_combine(crt_split(x, [73, 137]), [73, 137]) == x


@given(st.lists(st.sampled_from([2, 3, 5, 7, 11, 13, 73, 137]), min_size=1, max_size=4,
                unique=True), st.data())
def test_crt_round_trip_on_residues(primes, data):
    residues = [data.draw(st.integers(0, p - 1)) for p in primes]
    assert crt_split(crt_combine(residues, primes), primes) == residues


def test_crt_combine_array_matches_scalar():
    rng = np.random.default_rng(1)
    a, b = rng.integers(0, 73, (5, 5)), rng.integers(0, 137, (5, 5))
    out = crt_combine_array([a, b], [73, 137])
    for i, j in np.ndindex(5, 5):
        assert out[i, j] == crt_combine([int(a[i, j]), int(b[i, j])], [73, 137])


# -- rank

def _independent(rows, p):
    """No nontrivial F_p combination of ``rows`` vanishes."""
    k = len(rows)
    for coeffs in itertools.product(range(p), repeat=k):
        if any(coeffs) and not np.any(np.dot(coeffs, rows) % p):
            return False
    return True


def brute_rank(M, p):
    """Largest linearly independent row subset, by exhaustion."""
    rows = np.asarray(M)
    for k in range(min(rows.shape), 0, -1):
        for idx in itertools.combinations(range(rows.shape[0]), k):
            if _independent(rows[list(idx)], p):
                return k
    return 0


def test_rank_examples():
    assert rank(FieldMatrix(np.zeros((3, 4), dtype=int), F5)) == 0
    assert rank(FieldMatrix(np.eye(3, 4, dtype=int), F2)) == 3
    assert rank(FieldMatrix([[2, 4], [1, 2]], F3)) == 1


def test_rank_composite_rejected():
    with pytest.raises(CompositeFieldRankError):
        rank(FieldMatrix([[1, 2], [3, 4]], FieldSpec.composite([2, 3])))


@settings(max_examples=150)
@given(st.sampled_from([2, 3]), st.integers(1, 5), st.integers(1, 5), st.data())
def test_rank_matches_brute_force(p, r, c, data):
    M = np.array(data.draw(st.lists(st.integers(0, p - 1), min_size=r * c, max_size=r * c)))
    M = M.reshape(r, c)
    spec = FieldSpec.prime(p)
    expected = brute_rank(M, p)
    assert rank(FieldMatrix(M, spec)) == expected
    assert rank_python(FieldMatrix(M, spec)) == expected


@pytest.mark.parametrize("spec", [F2, F3, F73, F4, F9], ids=lambda s: s.label())
def test_rank_invariances(spec):
    rng = np.random.default_rng(spec.cardinality)
    q = spec.cardinality
    for _ in range(60):
        r, c = (int(v) for v in rng.integers(1, 11, 2))
        A = rng.integers(0, q, (r, c))
        if rng.random() < 0.5 and r > 1:
            A[-1] = A[0]  # force some deficiency
        base = rank(FieldMatrix(A, spec))
        assert 0 <= base <= min(r, c)
        assert base == rank_python(FieldMatrix(A, spec))
        assert rank(FieldMatrix(A.T, spec)) == base
        perm = rng.permutation(r)
        assert rank(FieldMatrix(A[perm], spec)) == base
        i, s = int(rng.integers(r)), int(rng.integers(1, q))
        B = A.copy()
        B[i] = [mul(s, int(v), spec) for v in B[i]]
        assert rank(FieldMatrix(B, spec)) == base


def test_rank_leaves_input_untouched():
    A = np.array([[1, 2, 3], [4, 5, 6]])
    M = FieldMatrix(A, F7)
    before = M.entries.copy()
    rank(M)
    assert np.array_equal(M.entries, before)


def test_rank_large_prime_python_path():
    big = FieldSpec.prime(4294967291)
    M = FieldMatrix([[1, 2], [2, 4], [3, 7]], big)
    assert rank(M) == 2
    assert rank(FieldMatrix([[1, 2], [2, 4]], big)) == 1
