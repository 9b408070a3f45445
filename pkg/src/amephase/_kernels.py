"""Compiled inner loops: small-matrix rank, cut-rank sweeps and Metropolis sweeps.

Field arithmetic is passed as ``(kind, p, m, q, log, exp)``: ``kind == 0`` is
F_p with plain modular arithmetic, ``kind == 1`` is F_{p^m} with base-p digit
addition and log/antilog multiplication.
"""

import math

import numba as nb
import numpy as np

from .field import PRIME, PRIME_POWER, FieldSpec, log_tables

KIND_PRIME = 0
KIND_PRIME_POWER = 1

# int64 products must not overflow
_PRIME_KERNEL_BOUND = 1 << 31
_LOG_TABLE_BOUND = 1 << 22

_EMPTY = np.zeros(1, dtype=np.int64)


def arith_for(spec: FieldSpec):
    """Kernel arithmetic tuple for ``spec``, or None if only the Python path applies."""
    if spec.kind == PRIME and spec.p < _PRIME_KERNEL_BOUND:
        return (KIND_PRIME, spec.p, 1, spec.p, _EMPTY, _EMPTY)
    if spec.kind == PRIME_POWER and spec.cardinality <= _LOG_TABLE_BOUND:
        log, exp = log_tables(spec)
        return (KIND_PRIME_POWER, spec.p, spec.m, spec.cardinality, log, exp)
    return None


@nb.njit(cache=True, inline="always")
def _fsub(a, b, kind, p, m):
    if kind == 0:
        return (a - b) % p
    r = 0
    w = 1
    for _ in range(m):
        r += ((a % p - b % p) % p) * w
        a //= p
        b //= p
        w *= p
    return r


@nb.njit(cache=True, inline="always")
def _fmul(a, b, kind, p, q, log, exp):
    if kind == 0:
        return a * b % p
    if a == 0 or b == 0:
        return 0
    return exp[(log[a] + log[b]) % (q - 1)]


@nb.njit(cache=True)
def _finv(a, kind, p, q, log, exp):
    if kind == 1:
        return exp[(q - 1 - log[a]) % (q - 1)]
    t0, t1 = 0, 1
    r0, r1 = p, a
    while r1 != 0:
        qq = r0 // r1
        t0, t1 = t1, t0 - qq * t1
        r0, r1 = r1, r0 - qq * r1
    return t0 % p


@nb.njit(cache=True, nogil=True)
def _rank_inplace(A, nr, nc, kind, p, m, q, log, exp):
    r = 0
    for c in range(nc):
        piv = -1
        for i in range(r, nr):
            if A[i, c] != 0:
                piv = i
                break
        if piv < 0:
            continue
        if piv != r:
            for j in range(c, nc):
                t = A[r, j]
                A[r, j] = A[piv, j]
                A[piv, j] = t
        pinv = _finv(A[r, c], kind, p, q, log, exp)
        for i in range(r + 1, nr):
            if A[i, c] != 0:
                f = _fmul(A[i, c], pinv, kind, p, q, log, exp)
                for j in range(c, nc):
                    if A[r, j] != 0:
                        A[i, j] = _fsub(A[i, j], _fmul(f, A[r, j], kind, p, q, log, exp),
                                        kind, p, m)
        r += 1
        if r == nr:
            break
    return r


@nb.njit(cache=True, nogil=True)
def _matrix_rank(M, kind, p, m, q, log, exp):
    A = M.copy()
    return _rank_inplace(A, A.shape[0], A.shape[1], kind, p, m, q, log, exp)


def matrix_rank(M, kind, p, m, q, log, exp) -> int:
    M = np.ascontiguousarray(M, dtype=np.int64)
    return int(_matrix_rank(M, kind, p, m, q, log, exp))


@nb.njit(cache=True, inline="always")
def _cut_rank(P, key, rows, cols, sizes, buf, kind, p, m, q, log, exp):
    k = sizes[key]
    n = P.shape[0]
    nc = n - k
    for a in range(k):
        ra = rows[key, a]
        for b in range(nc):
            buf[a, b] = P[ra, cols[key, b]]
    return _rank_inplace(buf, k, nc, kind, p, m, q, log, exp)


@nb.njit(cache=True, nogil=True)
def cut_ranks(P, keys, rows, cols, sizes, out, kind, p, m, q, log, exp):
    """out[t] = rank of the cut matrix of class keys[t]."""
    n = P.shape[0]
    buf = np.zeros((n // 2 + 1, n), dtype=np.int64)
    for t in range(keys.shape[0]):
        out[t] = _cut_rank(P, keys[t], rows, cols, sizes, buf, kind, p, m, q, log, exp)


@nb.njit(cache=True, nogil=True)
def move_delta(P, cache, i, j, new, aff, rows, cols, sizes, new_ranks,
               kind, p, m, q, log, exp):
    """Cost change of setting P[i,j] = P[j,i] = new; fills new_ranks for classes aff.

    P is restored before returning.
    """
    n = P.shape[0]
    buf = np.zeros((n // 2 + 1, n), dtype=np.int64)
    old = P[i, j]
    P[i, j] = new
    P[j, i] = new
    delta = 0
    for t in range(aff.shape[0]):
        key = aff[t]
        r = _cut_rank(P, key, rows, cols, sizes, buf, kind, p, m, q, log, exp)
        new_ranks[t] = r
        k = sizes[key]
        d_new = k - r
        d_old = k - cache[key]
        delta += d_new * d_new - d_old * d_old
    P[i, j] = old
    P[j, i] = old
    return delta


@nb.njit(cache=True, nogil=True)
def _fadd(a, b, kind, p, m):
    if kind == 0:
        return (a + b) % p
    r = 0
    w = 1
    for _ in range(m):
        r += ((a % p + b % p) % p) * w
        a //= p
        b //= p
        w *= p
    return r


@nb.njit(cache=True, nogil=True)
def metropolis_sweep(P, cache, cost, active, pair_idx, offsets, uniforms, temps,
                     pairs, aff, rows, cols, sizes, kind, p, m, q, log, exp):
    """One Metropolis move for every active replica.

    P: (R, N, N) current matrices, cache: (R, K) ranks by class key,
    cost: (R,) current costs.  All three are updated in place for accepted
    moves.  Returns the accepted flags.
    """
    R = P.shape[0]
    n = P.shape[1]
    A = aff.shape[1]
    accepted = np.zeros(R, dtype=np.bool_)
    new_ranks = np.zeros(A, dtype=np.int64)
    buf = np.zeros((n // 2 + 1, n), dtype=np.int64)
    for r in range(R):
        if not active[r]:
            continue
        pid = pair_idx[r]
        i = pairs[pid, 0]
        j = pairs[pid, 1]
        old = P[r, i, j]
        new = _fadd(old, offsets[r], kind, p, m)
        Pr = P[r]
        Pr[i, j] = new
        Pr[j, i] = new
        delta = 0
        keys = aff[pid]
        for t in range(A):
            key = keys[t]
            rk = _cut_rank(Pr, key, rows, cols, sizes, buf, kind, p, m, q, log, exp)
            new_ranks[t] = rk
            k = sizes[key]
            d_new = k - rk
            d_old = k - cache[r, key]
            delta += d_new * d_new - d_old * d_old
        ok = delta <= 0
        if not ok:
            ok = uniforms[r] < math.exp(-delta / temps[r])
        if ok:
            accepted[r] = True
            cost[r] += delta
            for t in range(A):
                cache[r, keys[t]] = new_ranks[t]
        else:
            Pr[i, j] = old
            Pr[j, i] = old
    return accepted
