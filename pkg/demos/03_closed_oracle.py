"""Closed networks: product form against a brute-force CTMC solve.

The oracle builds the chain of ordered FCFS queues (who is ahead of whom at
every node), solves it exactly, then sums over orderings. The product form
works on per-node type counts, with a multinomial coefficient per node.
"""

from kellynet import bundled_model, closed_oracle, solve_traffic, stationary_distribution
from kellynet.model import bundled_model_names

for name in bundled_model_names("closed"):
    model = bundled_model(name)
    traffic = solve_traffic(model)
    eq = stationary_distribution(model)
    oracle = closed_oracle(model)
    print(f"{name:10s} states {len(eq.states):3d}  ordered {oracle.ordered_state_count:3d}  "
          f"traffic residual {traffic.residual:.1e}  max diff {oracle.max_abs_diff:.1e}")

print("\nvisit ratio 1:2 tandem, two customers:")
eq = stationary_distribution(bundled_model("tandem12"))
for s, p in zip(eq.states, eq.probabilities):
    print("  ", s.as_dict(), f"{p:.6f}")
print("   expected 1/7, 2/7, 4/7 =", [round(x / 7, 6) for x in (1, 2, 4)])
