"""Closed multiclass networks: traffic equations and the product-form
stationary distribution over per-(node, type) populations.

The normalizing constant is obtained by brute-force enumeration of every
feasible population vector, so this module is meant for desk-scale models;
:class:`~kellynet.errors.StateSpaceTooLargeError` guards the enumeration.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import ReducibleChainError, StateSpaceTooLargeError
from .model import ClosedNetworkModel, Pair, computed_chains, model_fingerprint

DENSE_CHAIN_LIMIT = 500
POWER_TOL = 1e-14
POWER_MAX_ITER = 1_000_000
DEFAULT_STATE_CAP = 10**6


@dataclass(frozen=True)
class TrafficSolution:
    """Visit-rate vector per chain, each normalized to sum to one."""

    alpha: dict[Pair, float]
    chains: tuple[tuple[Pair, ...], ...]
    residual: float

    def chain_vector(self, c: int) -> np.ndarray:
        return np.array([self.alpha[p] for p in self.chains[c - 1]])

    def scaled(self, c: int, factor: float) -> "TrafficSolution":
        """Copy with chain ``c``'s visit rates multiplied by ``factor``."""
        alpha = dict(self.alpha)
        for p in self.chains[c - 1]:
            alpha[p] *= factor
        return TrafficSolution(alpha, self.chains, self.residual)


def _routing_matrix(model: ClosedNetworkModel, chain) -> np.ndarray:
    index = {p: n for n, p in enumerate(chain)}
    P = np.zeros((len(chain), len(chain)))
    for src, dst, p in model.switch:
        if src in index and dst in index:
            P[index[src], index[dst]] += p
    return P


def _fixed_point_dense(P: np.ndarray) -> np.ndarray:
    m = P.shape[0]
    A = np.vstack([P.T - np.eye(m), np.ones((1, m))])
    rhs = np.zeros(m + 1)
    rhs[-1] = 1.0
    x, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return x


def _fixed_point_power(P: np.ndarray) -> np.ndarray:
    # lazy chain (I + P)/2 has the same fixed point and is aperiodic
    lazy = 0.5 * (np.eye(P.shape[0]) + P)
    x = np.full(P.shape[0], 1.0 / P.shape[0])
    for _ in range(POWER_MAX_ITER):
        nxt = x @ lazy
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - x)) < POWER_TOL:
            return nxt
        x = nxt
    return x


def solve_traffic(model: ClosedNetworkModel) -> TrafficSolution:
    """Solve ``alpha_k(i') = sum alpha_j(i'') p(j,i''; k,i')`` chain by chain."""
    chains, irreducible = computed_chains(model)
    for chain, ok in zip(chains, irreducible):
        if not ok:
            raise ReducibleChainError(
                "chain containing " + ", ".join(f"({j},{i})" for j, i in chain) + " is not irreducible"
            )
    declared = model.chain_list()
    alpha: dict[Pair, float] = {}
    for chain in chains:
        P = _routing_matrix(model, chain)
        x = _fixed_point_dense(P) if len(chain) <= DENSE_CHAIN_LIMIT else _fixed_point_power(P)
        x = np.clip(x, 0.0, None)
        x /= x.sum()
        alpha.update(zip(chain, x.tolist()))
    residual = traffic_residual(model, alpha)
    return TrafficSolution(alpha, tuple(declared), residual)


def traffic_residual(model: ClosedNetworkModel, alpha: dict[Pair, float]) -> float:
    inflow = {p: 0.0 for p in alpha}
    for src, dst, p in model.switch:
        inflow[dst] = inflow.get(dst, 0.0) + alpha.get(src, 0.0) * p
    return max((abs(alpha.get(p, 0.0) - v) for p, v in inflow.items()), default=0.0)


@dataclass(frozen=True, order=True)
class PopulationState:
    """Number of customers of each (node, type) pair, stored as sorted items."""

    counts: tuple[tuple[Pair, int], ...]

    @classmethod
    def from_dict(cls, counts: dict[Pair, int]) -> "PopulationState":
        return cls(tuple(sorted(counts.items())))

    def as_dict(self) -> dict[Pair, int]:
        return dict(self.counts)

    def get(self, j: int, i: int) -> int:
        for pair, n in self.counts:
            if pair == (j, i):
                return n
        return 0

    def node_total(self, j: int) -> int:
        return sum(n for (node, _), n in self.counts if node == j)

    def node_totals(self, J: int) -> tuple[int, ...]:
        out = [0] * J
        for (node, _), n in self.counts:
            out[node - 1] += n
        return tuple(out)

    def to_json(self) -> list:
        return [[j, i, n] for (j, i), n in self.counts]


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """Weak compositions of ``total`` into ``parts`` parts, lexicographically descending."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def state_count(model: ClosedNetworkModel) -> int:
    pops = model.population_map
    count = 1
    for c, chain in enumerate(model.chain_list(), start=1):
        n = pops.get(c, 0)
        count *= math.comb(n + len(chain) - 1, n)
    return count


def enumerate_states(model: ClosedNetworkModel, part: int = 0, parts: int = 1) -> Iterator[PopulationState]:
    """Every feasible population vector exactly once.

    ``part``/``parts`` split the stream into disjoint round-robin slices so
    the enumeration can be distributed and merged back deterministically.
    """
    pops = model.population_map
    chains = model.chain_list()
    per_chain = [list(_compositions(pops.get(c, 0), len(chain))) for c, chain in enumerate(chains, start=1)]
    for ordinal, combo in enumerate(itertools.product(*per_chain)):
        if ordinal % parts != part:
            continue
        counts = {}
        for chain, comp in zip(chains, combo):
            counts.update(zip(chain, comp))
        yield PopulationState.from_dict(counts)


def unnormalized_weight(state: PopulationState, traffic: TrafficSolution, model: ClosedNetworkModel) -> float:
    """``prod_j n_j! prod_i (alpha_j(i)/mu_j)^{n_j(i)} / n_j(i)!``."""
    per_node: dict[int, list[tuple[float, int]]] = {}
    for (j, i), n in state.counts:
        per_node.setdefault(j, []).append((traffic.alpha[(j, i)] / model.rate(j), n))
    w = 1.0
    for items in per_node.values():
        w *= math.factorial(sum(n for _, n in items))
        for x, n in items:
            w *= x**n / math.factorial(n)
    return w


@dataclass
class ClosedEquilibrium:
    model_hash: str
    traffic: TrafficSolution
    states: list[PopulationState]
    probabilities: np.ndarray
    B_N: float
    J: int
    N: int

    kind = "closed"

    def probability(self, state: PopulationState) -> float:
        return float(self.probabilities[self.states.index(state)])

    def as_dict(self) -> dict[PopulationState, float]:
        return dict(zip(self.states, self.probabilities.tolist()))

    def marginal(self, j: int) -> np.ndarray:
        out = np.zeros(self.N + 1)
        for s, p in zip(self.states, self.probabilities):
            out[s.node_total(j)] += p
        return out

    def node_count_distribution(self) -> dict[tuple[int, ...], float]:
        """Joint law of the per-node totals ``(n_1, ..., n_J)``."""
        out: dict[tuple[int, ...], float] = {}
        for s, p in zip(self.states, self.probabilities):
            key = s.node_totals(self.J)
            out[key] = out.get(key, 0.0) + float(p)
        return out

    def to_dict(self) -> dict:
        return {
            "kind": "closed",
            "model_hash": self.model_hash,
            "B_N": self.B_N,
            "traffic": {
                "residual": self.traffic.residual,
                "alpha": [[j, i, a] for (j, i), a in sorted(self.traffic.alpha.items())],
            },
            "states": [{"counts": s.to_json(), "p": float(p)} for s, p in zip(self.states, self.probabilities)],
            "marginals": {str(j): self.marginal(j).tolist() for j in range(1, self.J + 1)},
        }

    def csv_rows(self):
        pairs = sorted({p for s in self.states for p, _ in s.counts})
        yield tuple(f"n_{j}_{i}" for j, i in pairs) + ("p",)
        for s, p in zip(self.states, self.probabilities):
            d = s.as_dict()
            yield tuple(d.get(pair, 0) for pair in pairs) + (float(p),)


def stationary_distribution(model: ClosedNetworkModel, cap: int = DEFAULT_STATE_CAP,
                            traffic: TrafficSolution | None = None) -> ClosedEquilibrium:
    """Normalized product-form distribution over all population vectors."""
    count = state_count(model)
    if count > cap:
        raise StateSpaceTooLargeError(f"{count} population states exceed the cap of {cap}", count)
    if traffic is None:
        traffic = solve_traffic(model)
    states = list(enumerate_states(model))
    weights = np.array([unnormalized_weight(s, traffic, model) for s in states])
    total = math.fsum(weights.tolist())
    probs = weights / total
    return ClosedEquilibrium(model_fingerprint(model), traffic, states, probs, 1.0 / total,
                             model.J, model.total_population)


def marginal_node_pmf(model: ClosedNetworkModel, j: int, cap: int = DEFAULT_STATE_CAP) -> np.ndarray:
    """``P[n_j = n]`` for ``n = 0..N`` (N the total population)."""
    return stationary_distribution(model, cap).marginal(j)
