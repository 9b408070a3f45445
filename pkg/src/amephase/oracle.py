"""Explicit state vectors and reduced density matrices at desk scale.

This is the independent side of the rank/purity identity: states are built
amplitude by amplitude, partial traces are taken with dense linear algebra,
and purities are compared with the cut-rank prediction.

Basis index encoding is big-endian over parties (party 0 is the most
significant digit); F_{p^m} elements are ordered by their base-p coefficient
integer.  Square-free Z_d states are assembled from the per-prime states
through the CRT digit map.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import DualityViolationError, InstanceTooLargeError
from .field import COMPOSITE, PRIME_POWER, FieldSpec, log_tables, trace_table
from .phasecore import Bipartition, PhaseMatrix, certify_ame, enumerate_bipartitions, purity

DEFAULT_CAP = 1 << 20
EIGEN_DIM_LIMIT = 256


@dataclass
class StateVector:
    amplitudes: np.ndarray
    q: int
    n: int

    def check(self, tol: float = 1e-12):
        norm = np.linalg.norm(self.amplitudes)
        assert abs(norm - 1) < tol, f"norm {norm}"
        mod = np.abs(self.amplitudes)
        assert np.max(np.abs(mod - self.q ** (-self.n / 2))) < tol, "amplitudes not flat"
        return self


@dataclass
class DensityMatrix:
    matrix: np.ndarray
    q: int
    subsystem: Bipartition

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def check(self, tol: float = 1e-12):
        rho = self.matrix
        assert np.max(np.abs(rho - rho.conj().T)) < tol, "not Hermitian"
        assert abs(np.trace(rho) - 1) < tol, "trace != 1"
        assert np.linalg.eigvalsh(rho).min() > -tol, "not positive semidefinite"
        return self

    def to_text(self, digits: int = 6) -> str:
        rows = []
        for row in self.matrix:
            rows.append(" ".join(f"{z.real:+.{digits}f}{z.imag:+.{digits}f}j" for z in row))
        return "\n".join(rows)


def state_size(P: PhaseMatrix) -> int:
    return P.field.cardinality ** P.n


def _check_cap(P: PhaseMatrix, cap: int):
    total = state_size(P)
    if total > cap:
        raise InstanceTooLargeError(
            f"{P.field.cardinality}^{P.n} = {total} amplitudes exceeds the cap of {cap}; "
            "explicit state-vector verification is infeasible at this size, "
            "certify through cut ranks instead", required=total, cap=cap)


def _digits(n: int, q: int) -> np.ndarray:
    idx = np.arange(q ** n, dtype=np.int64)
    return np.stack([(idx // q ** (n - 1 - i)) % q for i in range(n)])


def _pp_add(a, b, p, m):
    out = np.zeros(np.broadcast(a, b).shape, dtype=np.int64)
    w = 1
    for _ in range(m):
        out += ((a // w % p + b // w % p) % p) * w
        w *= p
    return out


def _pp_mul(a, b, spec: FieldSpec):
    log, exp = log_tables(spec)
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    prod = exp[(log[a] + log[b]) % (spec.cardinality - 1)]
    return np.where((a == 0) | (b == 0), 0, prod)


def phase_exponents(P: PhaseMatrix) -> np.ndarray:
    """Exponent k in F_p of omega**k at every basis index."""
    spec = P.field
    n, q = P.n, spec.cardinality
    d = _digits(n, q)
    if spec.kind == PRIME_POWER:
        chi = np.zeros(q ** n, dtype=np.int64)
        for i in range(n):
            for j in range(i + 1, n):
                if P[i, j]:
                    term = _pp_mul(P[i, j], _pp_mul(d[i], d[j], spec), spec)
                    chi = _pp_add(chi, term, spec.p, spec.m)
        return trace_table(spec)[chi]
    p = spec.p
    chi = np.zeros(q ** n, dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            if P[i, j]:
                chi = (chi + int(P[i, j]) * (d[i] * d[j] % p)) % p
    return chi


def build_state(P: PhaseMatrix, cap: int = DEFAULT_CAP) -> StateVector:
    """Equal-weight superposition with phases omega**phi(q), omega = exp(2 pi i / p)."""
    _check_cap(P, cap)
    spec = P.field
    if spec.kind == COMPOSITE:
        return _build_composite(P, cap)
    n, q = P.n, spec.cardinality
    k = phase_exponents(P)
    amps = np.exp(2j * np.pi * k / spec.p) * q ** (-n / 2)
    return StateVector(amps, q, n)


def _build_composite(P: PhaseMatrix, cap: int) -> StateVector:
    from .crt import split_matrix

    n, d = P.n, P.field.cardinality
    parts = [build_state(C, cap) for C in split_matrix(P)]
    digits = _digits(n, d)
    amps = np.ones(d ** n, dtype=complex)
    for part in parts:
        pa = part.q
        sub_index = np.zeros(d ** n, dtype=np.int64)
        for i in range(n):
            sub_index = sub_index * pa + digits[i] % pa
        amps *= part.amplitudes[sub_index]
    return StateVector(amps, d, n)


def reduce(psi: StateVector, S: Bipartition) -> DensityMatrix:
    """Partial trace over the complement of S; rows/cols follow S's parties in order."""
    if S.n != psi.n:
        raise ValueError(f"bipartition of {S.n} parties on a {psi.n}-party state")
    q, n = psi.q, psi.n
    tensor = psi.amplitudes.reshape((q,) * n)
    A = tensor.transpose(S.members + S.outside).reshape(q ** S.size, q ** (n - S.size))
    return DensityMatrix(A @ A.conj().T, q, S)


def gram(psi: StateVector, S: Bipartition) -> np.ndarray:
    """The smaller of A A^dagger and A^dagger A for psi reshaped across S.

    Both share their nonzero spectrum, so purity and flatness of rho_S can be
    read off whichever is cheaper to form.
    """
    q, n = psi.q, psi.n
    if S.size <= n - S.size:
        return reduce(psi, S).matrix
    A = psi.amplitudes.reshape((q,) * n).transpose(S.members + S.outside)
    A = A.reshape(q ** S.size, q ** (n - S.size))
    return A.T @ A.conj()


def purity_exact(rho: DensityMatrix) -> float:
    """Tr(rho^2) as the squared Frobenius norm."""
    return float(np.vdot(rho.matrix, rho.matrix).real)


@dataclass
class CutCheck:
    mask: int
    size: int
    purity_exact: float
    purity_predicted: float
    flatness_residual: float
    identity_residual: float | None = None
    eigen_residual: float | None = None

    @property
    def residual(self) -> float:
        return abs(self.purity_exact - self.purity_predicted)


@dataclass
class DualityReport:
    n_parties: int
    q: int
    tolerance: float
    is_ame: bool
    cuts: list[CutCheck] = dc_field(default_factory=list)

    @property
    def max_residual(self) -> float:
        return max(c.residual for c in self.cuts)

    @property
    def max_flatness(self) -> float:
        return max(c.flatness_residual for c in self.cuts)

    @property
    def max_identity(self) -> float | None:
        vals = [c.identity_residual for c in self.cuts if c.identity_residual is not None]
        return max(vals) if vals else None

    @property
    def max_eigen(self) -> float | None:
        vals = [c.eigen_residual for c in self.cuts if c.eigen_residual is not None]
        return max(vals) if vals else None

    @property
    def ok(self) -> bool:
        worst = [self.max_residual, self.max_flatness]
        worst += [v for v in (self.max_identity, self.max_eigen) if v is not None]
        return max(worst) < self.tolerance


def verify_duality(P: PhaseMatrix, tolerance: float = 1e-10, cap: int = DEFAULT_CAP,
                   strict: bool = False) -> DualityReport:
    """Compare explicit purities with cut-rank predictions on every bipartition.

    Also checks rho^2 = purity * rho, and for AME matrices that every reduction
    with |S| <= N/2 equals q**-|S| times the identity.
    """
    psi = build_state(P, cap)
    q, n = psi.q, psi.n
    is_ame = certify_ame(P).is_ame
    report = DualityReport(n, q, tolerance, is_ame)
    for S in enumerate_bipartitions(n, n - 1, dedup=False):
        m = gram(psi, S)
        predicted = purity(P, S).value
        check = CutCheck(S.mask, S.size, float(np.vdot(m, m).real), predicted,
                         float(np.max(np.abs(m @ m - predicted * m))))
        if is_ame and S.size <= n // 2:
            level = float(q) ** -S.size
            check.identity_residual = float(np.max(np.abs(m - level * np.eye(len(m)))))
            if len(m) <= EIGEN_DIM_LIMIT:
                check.eigen_residual = float(np.max(np.abs(np.linalg.eigvalsh(m) - level)))
        report.cuts.append(check)
    if strict and not report.ok:
        raise DualityViolationError(
            f"duality residual {report.max_residual:.3e}, flatness {report.max_flatness:.3e} "
            f"exceed {tolerance:g} for {P!r}")
    return report


def schmidt_purity(P: PhaseMatrix, S: Bipartition, cap: int = DEFAULT_CAP) -> float:
    """Purity of S from the oracle alone (convenience wrapper)."""
    return purity_exact(reduce(build_state(P, cap), S))

