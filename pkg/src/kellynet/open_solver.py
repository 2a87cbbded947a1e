"""Equilibrium of open networks in product form.

Every node behaves as an independent queue fed at its total visit rate
``b_j``; the probability of a detailed state is a product over nodes and
over queue positions of ``alpha_j(type, stage) / mu_j(l)``, scaled by the
per-node normalizer ``B_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chain import DetailedState
from .errors import InstabilityError
from .model import OpenNetworkModel, ServicePolicy, model_fingerprint

DEFAULT_TAIL = 1e-12
MIN_REPORT_N = 20
MAX_REPORT_N = 10_000


@dataclass(frozen=True)
class VisitRates:
    alpha: dict[tuple[int, int, int], float]
    b: tuple[float, ...]

    def at(self, j: int, i: int, s: int) -> float:
        return self.alpha.get((j, i, s), 0.0)


def visit_rates(model: OpenNetworkModel) -> VisitRates:
    """``alpha_j(i, s) = nu(i)`` when stage ``s`` of type ``i`` is at node ``j``."""
    alpha = {}
    for route, rate in zip(model.routes, model.nu):
        for s, j in enumerate(route.nodes, start=1):
            alpha[(j, route.type_id, s)] = rate
    b = [0.0] * model.J
    for (j, _, _), rate in alpha.items():
        b[j - 1] += rate
    return VisitRates(alpha, tuple(b))


@dataclass(frozen=True)
class NodeNormalizer:
    """``B = 1 / sum_n b^n / prod_{l<=n} mu(l)``.

    The series is summed exactly: ``truncation_n`` explicit terms (the length
    of the rate table) followed by a geometric tail with ratio
    ``b / mu_default`` in closed form, so ``tail_bound`` is always zero.
    """

    B: float
    truncation_n: int
    tail_bound: float
    b: float
    terms: tuple[float, ...] = field(repr=False)
    ratio: float = field(repr=False)

    def term(self, n: int) -> float:
        """Unnormalized weight ``b^n / prod_{l<=n} mu(l)``."""
        T = self.truncation_n
        if n <= T:
            return self.terms[n]
        return self.terms[T] * self.ratio ** (n - T)

    def remainder(self, n: int) -> float:
        """``sum_{m > n}`` of the unnormalized weights."""
        T = self.truncation_n
        geometric = self.terms[T] * self.ratio / (1.0 - self.ratio)
        if n >= T:
            return self.term(n) * self.ratio / (1.0 - self.ratio)
        return math.fsum(self.terms[n + 1:]) + geometric


def node_normalizer(b: float, policy: ServicePolicy) -> NodeNormalizer:
    if b < 0 or not math.isfinite(b):
        raise ValueError(f"visit rate must be finite and non-negative, got {b}")
    mu_star = policy.mu_default
    if b >= mu_star:
        raise InstabilityError(f"load {b:.12g} >= tail service rate {mu_star:.12g}; series diverges")
    terms = [1.0]
    for l in range(1, len(policy.mu_table) + 1):
        terms.append(terms[-1] * b / policy.mu(l))
    ratio = b / mu_star
    inv = math.fsum(terms) + terms[-1] * ratio / (1.0 - ratio)
    return NodeNormalizer(1.0 / inv, len(policy.mu_table), 0.0, b, tuple(terms), ratio)


@dataclass(frozen=True)
class NodePmf:
    pmf: np.ndarray
    tail: float


def _pmf(norm: NodeNormalizer, n_max: int) -> NodePmf:
    values = np.array([norm.B * norm.term(n) for n in range(n_max + 1)])
    return NodePmf(values, norm.B * norm.remainder(n_max))


def _normalizers(model: OpenNetworkModel, rates: VisitRates) -> list[NodeNormalizer]:
    out, unstable = [], []
    for j, policy in enumerate(model.policies, start=1):
        try:
            out.append(node_normalizer(rates.b[j - 1], policy))
        except InstabilityError:
            unstable.append(j)
    if unstable:
        raise InstabilityError(f"unstable node(s): {', '.join(map(str, unstable))}", unstable)
    return out


def queue_length_pmf(j: int, model: OpenNetworkModel, n_max: int) -> NodePmf:
    """``P[N_j = n]`` for ``n = 0..n_max`` and the probability mass beyond."""
    rates = visit_rates(model)
    try:
        norm = node_normalizer(rates.b[j - 1], model.policy(j))
    except InstabilityError as exc:
        raise InstabilityError(f"node {j}: {exc}", [j]) from None
    return _pmf(norm, n_max)


def composition_probability(j: int, i: int, s: int, rates: VisitRates) -> float:
    """Probability that a customer seen at node ``j`` is of type ``i`` at stage ``s``."""
    b = rates.b[j - 1]
    if b <= 0:
        raise ValueError(f"node {j} is never visited; composition undefined")
    return rates.at(j, i, s) / b


class OpenEquilibrium:
    """Precomputed visit rates and normalizers for repeated evaluation."""

    def __init__(self, model: OpenNetworkModel):
        self.model = model
        self.rates = visit_rates(model)
        self.normalizers = _normalizers(model, self.rates)
        self.B = tuple(nz.B for nz in self.normalizers)

    def node_probability(self, j: int, seq) -> float:
        policy = self.model.policy(j)
        p = self.B[j - 1]
        alpha = self.rates.alpha
        for l, (t, s) in enumerate(seq, start=1):
            p *= alpha.get((j, t, s), 0.0) / policy.mu(l)
        return p

    def probability(self, C: DetailedState) -> float:
        p = 1.0
        for j, seq in enumerate(C.nodes, start=1):
            p *= self.node_probability(j, seq)
        return p

    def pmf(self, j: int, n_max: int) -> NodePmf:
        return _pmf(self.normalizers[j - 1], n_max)


def detailed_state_probability(C: DetailedState, model: OpenNetworkModel) -> float:
    """Equilibrium probability of the detailed state ``C``."""
    return OpenEquilibrium(model).probability(C)


# ------------------------------------------------------------------- report

@dataclass
class NodeReport:
    node: int
    b: float
    stable: bool
    B: float | None
    pmf: list[float]
    pmf_tail: float | None
    composition: dict[tuple[int, int], float]

    def to_dict(self) -> dict:
        return {
            "node": self.node,
            "b": self.b,
            "B": self.B,
            "stable": self.stable,
            "pmf": list(self.pmf),
            "pmf_tail": self.pmf_tail,
            "composition": {f"({i},{s})": p for (i, s), p in self.composition.items()},
        }


@dataclass
class EquilibriumReport:
    model_hash: str
    n_max: int
    nodes: list[NodeReport]

    kind = "open"

    @property
    def stable(self) -> bool:
        return all(n.stable for n in self.nodes)

    def node(self, j: int) -> NodeReport:
        return self.nodes[j - 1]

    def to_dict(self) -> dict:
        return {"kind": "open", "model_hash": self.model_hash, "n_max": self.n_max,
                "stable": self.stable, "nodes": [n.to_dict() for n in self.nodes]}

    def csv_rows(self):
        yield ("node", "n", "p")
        for node in self.nodes:
            for n, p in enumerate(node.pmf):
                yield (node.node, n, p)


def default_n_max(normalizers, tail: float = DEFAULT_TAIL) -> int:
    """Smallest report length (at least 20) leaving less than ``tail`` mass per node."""
    n_max = MIN_REPORT_N
    for nz in normalizers:
        n = MIN_REPORT_N
        while n < MAX_REPORT_N and nz.B * nz.remainder(n) >= tail:
            n += 1
        n_max = max(n_max, n)
    return n_max


def analyze_open(model: OpenNetworkModel, n_max: int | None = None, strict: bool = True) -> EquilibriumReport:
    """Per-node loads, normalizers, queue-length pmfs and compositions.

    With ``strict`` an :class:`InstabilityError` naming every unstable node is
    raised; otherwise unstable nodes are reported with ``stable=False``.
    """
    rates = visit_rates(model)
    norms: list[NodeNormalizer | None] = []
    unstable = []
    for j, policy in enumerate(model.policies, start=1):
        try:
            norms.append(node_normalizer(rates.b[j - 1], policy))
        except InstabilityError:
            norms.append(None)
            unstable.append(j)
    if unstable and strict:
        raise InstabilityError(f"unstable node(s): {', '.join(map(str, unstable))}", unstable)
    if n_max is None:
        n_max = default_n_max([nz for nz in norms if nz is not None])

    nodes = []
    for j, nz in enumerate(norms, start=1):
        comp = {}
        if rates.b[j - 1] > 0:
            comp = {(i, s): composition_probability(j, i, s, rates) for i, s in model.stages_at(j)}
        if nz is None:
            nodes.append(NodeReport(j, rates.b[j - 1], False, None, [], None, comp))
            continue
        pmf = _pmf(nz, n_max)
        nodes.append(NodeReport(j, rates.b[j - 1], True, nz.B, pmf.pmf.tolist(), pmf.tail, comp))
    return EquilibriumReport(model_fingerprint(model), n_max, nodes)
