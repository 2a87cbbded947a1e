"""Brute-force checks of the analytic solvers.

* :func:`balance_check` evaluates global balance of the open product form,
  state by state, against the generator built from explicit transition rates.
* :func:`closed_oracle` solves the ordered FCFS chain of a closed network
  directly and aggregates it over orderings.
* :func:`independence_check` recomputes joint queue-length probabilities of
  two nodes from detailed-state probabilities and compares them with the
  product of the marginals.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chain import CustomerTag, DetailedState, enumerate_states, is_consistent, predecessors, total_outflow
from .closed_solver import PopulationState, enumerate_states as enumerate_populations
from .closed_solver import stationary_distribution
from .errors import StateSpaceTooLargeError
from .model import ClosedNetworkModel, OpenNetworkModel
from .open_solver import OpenEquilibrium

BALANCE_THRESHOLD = 1e-10
ORACLE_THRESHOLD = 1e-10
INDEPENDENCE_THRESHOLD = 1e-12
DEFAULT_ORACLE_CAP = 50_000
DENSE_SOLVE_LIMIT = 2_000


@dataclass
class BalanceReport:
    states_checked: int
    states_skipped: int
    max_relative_residual: float
    worst_state: DetailedState | None
    threshold: float
    asymmetric_nodes: list[int]
    residuals: list[tuple[DetailedState, float]] | None = None

    @property
    def passed(self) -> bool:
        return self.max_relative_residual <= self.threshold

    def to_dict(self) -> dict:
        d = {
            "states_checked": self.states_checked,
            "states_skipped": self.states_skipped,
            "max_relative_residual": self.max_relative_residual,
            "worst_state": None if self.worst_state is None else self.worst_state.to_json(),
            "threshold": self.threshold,
            "passed": self.passed,
            "asymmetric_nodes": self.asymmetric_nodes,
        }
        if self.residuals is not None:
            d["residuals"] = [{"state": s.to_json(), "residual": r} for s, r in self.residuals]
        return d


def interior_states(model: OpenNetworkModel, max_customers: int, interior_margin: int = 1):
    """Consistent states with at most ``max_customers`` customers whose node
    lengths stay ``interior_margin`` below every capacity."""
    caps = [None if model.capacity(j) is None else model.capacity(j) - interior_margin
            for j in range(1, model.J + 1)]
    return enumerate_states(model, max_customers, caps)


def balance_check(model: OpenNetworkModel, state_sample, interior_margin: int = 1,
                  threshold: float = BALANCE_THRESHOLD, keep_residuals: bool = False) -> BalanceReport:
    """Relative global-balance defect of the product form at each sampled state.

    For every state the probability inflow from all predecessors is compared
    with the probability outflow; the residual is normalized by the outflow.
    States that are inconsistent with the routes (customers where no route
    stage lies) carry zero probability and are skipped and counted.
    """
    eq = OpenEquilibrium(model)
    caps = [model.capacity(j) for j in range(1, model.J + 1)]
    asym = [j for j, p in enumerate(model.policies, start=1) if not p.symmetric]
    checked = skipped = 0
    worst, worst_state = 0.0, None
    residuals = [] if keep_residuals else None
    for C in state_sample:
        if not is_consistent(C, model):
            skipped += 1
            continue
        for j, (q, cap) in enumerate(zip(C.nodes, caps), start=1):
            if cap is not None and len(q) > cap - interior_margin:
                raise ValueError(f"state {C} has {len(q)} customers at node {j}, "
                                 f"outside the interior window (cap {cap}, margin {interior_margin})")
        pi = eq.probability(C)
        if pi <= 0:
            skipped += 1
            continue
        inflow = math.fsum(eq.probability(prev) * ev.rate for prev, ev in predecessors(C, model, caps))
        outflow = pi * total_outflow(C, model)
        r = abs(inflow - outflow) / outflow
        checked += 1
        if keep_residuals:
            residuals.append((C, r))
        if worst_state is None or r > worst:
            worst, worst_state = r, C
    return BalanceReport(checked, skipped, worst, worst_state, threshold, asym, residuals)


# ------------------------------------------------------------ closed oracle

@dataclass
class OracleResult:
    ordered_state_count: int
    stationary_residual: float
    aggregated: dict[PopulationState, float]
    analytic: dict[PopulationState, float]
    max_abs_diff: float
    threshold: float = ORACLE_THRESHOLD
    probability_sum: float = 1.0

    @property
    def passed(self) -> bool:
        return self.stationary_residual <= self.threshold and self.max_abs_diff <= self.threshold

    def to_dict(self) -> dict:
        return {
            "ordered_state_count": self.ordered_state_count,
            "stationary_residual": self.stationary_residual,
            "max_abs_diff": self.max_abs_diff,
            "probability_sum": self.probability_sum,
            "threshold": self.threshold,
            "passed": self.passed,
            "states": [
                {"counts": s.to_json(), "oracle": self.aggregated.get(s, 0.0), "product_form": p}
                for s, p in sorted(self.analytic.items())
            ],
        }


def _distinct_orderings(counter: Counter):
    if not counter:
        yield ()
        return
    for item in sorted(counter):
        rest = counter.copy()
        rest[item] -= 1
        if not rest[item]:
            del rest[item]
        for tail in _distinct_orderings(rest):
            yield (item,) + tail


def _multinomial(counts) -> int:
    out = math.factorial(sum(counts))
    for c in counts:
        out //= math.factorial(c)
    return out


def ordered_state_count(model: ClosedNetworkModel) -> int:
    total = 0
    for pop in enumerate_populations(model):
        per_node: dict[int, list[int]] = {}
        for (j, _), n in pop.counts:
            per_node.setdefault(j, []).append(n)
        total += math.prod(_multinomial(c) for c in per_node.values())
    return total


def _ordered_states(model: ClosedNetworkModel):
    for pop in enumerate_populations(model):
        per_node = [Counter() for _ in range(model.J)]
        for (j, i), n in pop.counts:
            if n:
                per_node[j - 1][i] = n
        for combo in itertools.product(*(list(_distinct_orderings(c)) for c in per_node)):
            yield combo


def _stationary(Q: sp.csr_matrix) -> np.ndarray:
    n = Q.shape[0]
    A = Q.T.tolil()
    A[n - 1, :] = np.ones(n)
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    if n < DENSE_SOLVE_LIMIT:
        return np.linalg.solve(A.toarray(), rhs)
    return spla.spsolve(A.tocsc(), rhs)


def closed_oracle(model: ClosedNetworkModel, cap: int = DEFAULT_ORACLE_CAP,
                  threshold: float = ORACLE_THRESHOLD) -> OracleResult:
    """Exact stationary law of the ordered FCFS chain, aggregated over orderings."""
    count = ordered_state_count(model)
    if count > cap:
        raise StateSpaceTooLargeError(f"{count} ordered states exceed the oracle cap of {cap}", count)
    analytic = stationary_distribution(model).as_dict()

    states = list(_ordered_states(model))
    index = {s: n for n, s in enumerate(states)}
    routing: dict[tuple[int, int], list[tuple[tuple[int, int], float]]] = {}
    for (src, dst), p in model.switch_map.items():
        if p > 0:
            routing.setdefault(src, []).append((dst, p))

    rows, cols, vals = [], [], []
    for a, s in enumerate(states):
        for j, queue in enumerate(s, start=1):
            if not queue:
                continue
            head, rest = queue[0], queue[1:]
            after = s[: j - 1] + (rest,) + s[j:]
            for (k, i2), p in routing[(j, head)]:
                target = after[: k - 1] + (after[k - 1] + (i2,),) + after[k:]
                b = index[target]
                if b != a:
                    rows.append(a)
                    cols.append(b)
                    vals.append(model.rate(j) * p)
    n = len(states)
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    Q = Q - sp.diags(np.asarray(Q.sum(axis=1)).ravel())
    pi = _stationary(Q.tocsr())
    residual = float(np.max(np.abs(pi @ Q))) if n else 0.0

    pairs = sorted({p for s in analytic for p, _ in s.counts})
    aggregated: dict[PopulationState, float] = {}
    for s, p in zip(states, pi.tolist()):
        counts = dict.fromkeys(pairs, 0)
        for j, queue in enumerate(s, start=1):
            for i in queue:
                counts[(j, i)] += 1
        key = PopulationState.from_dict(counts)
        aggregated[key] = aggregated.get(key, 0.0) + p
    diff = max(abs(aggregated.get(s, 0.0) - p) for s, p in analytic.items())
    diff = max(diff, max((abs(p) for s, p in aggregated.items() if s not in analytic), default=0.0))
    return OracleResult(n, residual, aggregated, analytic, diff, threshold, math.fsum(pi.tolist()))


# ------------------------------------------------------------- independence

@dataclass
class IndependenceReport:
    n_bound: int
    pairs: dict[tuple[int, int], float] = field(default_factory=dict)
    threshold: float = INDEPENDENCE_THRESHOLD

    @property
    def max_error(self) -> float:
        return max(self.pairs.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.threshold

    def to_dict(self) -> dict:
        return {"n_bound": self.n_bound, "max_error": self.max_error, "threshold": self.threshold,
                "passed": self.passed, "pairs": {f"{a},{b}": e for (a, b), e in self.pairs.items()}}


def _queue_classes(model: OpenNetworkModel, j: int, n: int):
    """(representative queue, number of orderings) for each multiset of ``n`` tags at node ``j``."""
    tags = [CustomerTag(t, s) for t, s in model.stages_at(j)]
    for combo in itertools.combinations_with_replacement(tags, n):
        yield combo, _multinomial(Counter(combo).values())


def independence_check(model: OpenNetworkModel, nodes=None, n_bound: int = 5,
                       threshold: float = INDEPENDENCE_THRESHOLD) -> IndependenceReport:
    """Joint queue-length law of two nodes, rebuilt from detailed-state
    probabilities, against the product of the two marginal pmfs."""
    eq = OpenEquilibrium(model)
    nodes = list(range(1, model.J + 1)) if nodes is None else list(nodes)
    report = IndependenceReport(n_bound, threshold=threshold)
    pmfs = {j: eq.pmf(j, n_bound).pmf for j in nodes}
    for a, b in itertools.combinations(nodes, 2):
        others = math.prod(eq.B[k - 1] for k in range(1, model.J + 1) if k not in (a, b))
        worst = 0.0
        for na in range(n_bound + 1):
            for nb in range(n_bound + 1):
                joint = 0.0
                for qa, ma in _queue_classes(model, a, na):
                    for qb, mb in _queue_classes(model, b, nb):
                        nodes_ = [()] * model.J
                        nodes_[a - 1], nodes_[b - 1] = qa, qb
                        joint += ma * mb * eq.probability(DetailedState(tuple(nodes_)))
                joint /= others
                worst = max(worst, abs(joint - pmfs[a][na] * pmfs[b][nb]))
        report.pairs[(a, b)] = worst
    return report
