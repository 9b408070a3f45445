"""
Checking rank predictions against explicit density matrices
===========================================================

For small instances we can afford the full state vector.  Each reduced
density matrix should have purity q**-rank and a flat spectrum.
"""

import numpy as np

from amephase.field import FieldSpec
from amephase.oracle import build_state, reduce, verify_duality
from amephase.phasecore import Bipartition, PhaseMatrix, cut_rank

rng = np.random.default_rng(0)
P = PhaseMatrix.random(4, FieldSpec.prime(3), rng)
psi = build_state(P)
print("amplitudes:", psi.amplitudes.shape)

S = Bipartition.of([0, 2], 4)
rho = reduce(psi, S)
print("rank of cut block:", cut_rank(P, S))
print("eigenvalues of rho_S:", np.round(np.linalg.eigvalsh(rho.matrix), 6))

# every bipartition at once, including over F_4
for spec in (FieldSpec.prime(3), FieldSpec.prime_power(2, 2)):
    rep = verify_duality(PhaseMatrix.random(4, spec, rng))
    print(f"{spec.label()}: max residual {rep.max_residual:.1e}, flatness {rep.max_flatness:.1e}")
