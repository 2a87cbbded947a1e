"""A single FCFS node fed by one Poisson stream is an M/M/1 queue.

The open-network solver should reduce to the geometric law
P[N = n] = (1 - rho) rho^n, and the normalizer of the node is 1 - rho.
"""

import numpy as np

from kellynet import analyze_open, open_model

rho = 0.3
model = open_model([[1]], [rho])
report = analyze_open(model, n_max=10)
node = report.node(1)

print(f"load b = {node.b}, normalizer B = {node.B}")
print(" n   solver               geometric")
for n, p in enumerate(node.pmf):
    print(f"{n:2d}   {p:.17g}  {(1 - rho) * rho**n:.17g}")

err = np.max(np.abs(np.array(node.pmf) - (1 - rho) * rho ** np.arange(11)))
print(f"max abs difference: {err:.2e}, mass beyond n=10: {node.pmf_tail:.3e}")

# A position-indexed rate table only changes the first few terms; the tail
# stays geometric with ratio b / mu_default.
from kellynet import builtin_policy

fast_head = open_model([[1]], [0.5], policies=[builtin_policy("fcfs", [2.0], 1.0)])
print("\nfirst position served at rate 2, later ones at rate 1, b = 0.5:")
print("pmf[0:3] =", analyze_open(fast_head, n_max=2).node(1).pmf, "(expect 2/3, 1/6, 1/12)")
