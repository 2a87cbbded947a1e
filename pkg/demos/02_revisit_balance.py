"""Global balance of the product form on a network with a revisiting route.

Type 1 follows route [1, 2, 1], type 2 follows [2, 3]. Node 1 therefore holds
type-1 customers at two different stages. For every state with at most four
customers we compare probability inflow (from all predecessor states) with
outflow, under FCFS and under processor sharing.
"""

from kellynet import balance_check, builtin_policy, bundled_model, interior_states, visit_rates
from kellynet.open_solver import composition_probability

model = bundled_model("revisit")
rates = visit_rates(model)
print("visit rates b_j:", rates.b)
for s in (1, 3):
    print(f"share of node-1 customers that are type 1 at stage {s}: "
          f"{composition_probability(1, 1, s, rates)}")

for kind in ("fcfs", "lcfs_pr", "ps"):
    m = model.with_policies([builtin_policy(kind)] * model.J)
    report = balance_check(m, interior_states(m, 4))
    print(f"{kind:8s} states checked {report.states_checked:4d}  "
          f"max relative residual {report.max_relative_residual:.2e}")

# With a service rate that depends on queue position the same check reports
# a large defect: read per position, the product form is exact only when the
# rate is the same at every position.
m = model.with_policies([builtin_policy("fcfs", [2.0], 1.0)] * model.J)
report = balance_check(m, interior_states(m, 3))
print(f"\nFCFS with mu(1)=2, mu(l>1)=1: max residual {report.max_relative_residual:.3f} "
      f"at {report.worst_state.to_json()}")
