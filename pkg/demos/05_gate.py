"""
When composite searches are pointless
=====================================

A composite AME state would need an AME state for every prime factor.  Known
nonexistence results for qubits therefore rule out several composite targets
before any search starts.
"""

from amephase.crt import crt_gate

for n in range(2, 10):
    print(n, crt_gate(n, [2, 3]))

gate = crt_gate(8, [2, 3])
print("\nreason:", gate.reason)
print("source:", gate.citation)
