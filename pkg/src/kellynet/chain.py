"""Detailed Markov-chain state of an open network and its transitions.

A state records, for every node, the ordered sequence of customers present,
each tagged with its type and the stage of its route it is currently at.
Three operators change the state: a transfer to the next node on the route
(possibly the same node, i.e. feedback), a departure after the last stage,
and an exogenous arrival at the first node of a route.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

from .model import OpenNetworkModel


class CustomerTag(NamedTuple):
    type_id: int
    stage: int


@dataclass(frozen=True, slots=True)
class DetailedState:
    """``nodes[j-1]`` is the queue of node ``j``, head (position 1) first."""

    nodes: tuple[tuple[CustomerTag, ...], ...]

    @classmethod
    def empty(cls, J: int) -> "DetailedState":
        return cls(((),) * J)

    @classmethod
    def from_lists(cls, nodes: Sequence[Sequence[Sequence[int]]]) -> "DetailedState":
        return cls(tuple(tuple(CustomerTag(int(t), int(s)) for t, s in q) for q in nodes))

    def n(self, j: int) -> int:
        return len(self.nodes[j - 1])

    def tag(self, j: int, l: int) -> CustomerTag:
        return self.nodes[j - 1][l - 1]

    @property
    def J(self) -> int:
        return len(self.nodes)

    @property
    def total(self) -> int:
        return sum(len(q) for q in self.nodes)

    @property
    def queue_lengths(self) -> tuple[int, ...]:
        return tuple(len(q) for q in self.nodes)

    def type_counts(self, I: int) -> tuple[int, ...]:
        counts = [0] * I
        for q in self.nodes:
            for tag in q:
                counts[tag.type_id - 1] += 1
        return tuple(counts)

    def to_json(self) -> dict:
        return {"nodes": [[[t.type_id, t.stage] for t in q] for q in self.nodes]}

    @classmethod
    def from_json(cls, doc: dict) -> "DetailedState":
        return cls.from_lists(doc["nodes"])

    def __str__(self):
        return " | ".join(",".join(f"{t}.{s}" for t, s in q) or "-" for q in self.nodes)


class EventKind(str, enum.Enum):
    TRANSFER = "TRANSFER"
    DEPART = "DEPART"
    ARRIVE = "ARRIVE"


@dataclass(frozen=True)
class TransitionEvent:
    """One outgoing transition. After merging, ``source``/``target`` name the
    first contributing (position, insertion) pair and ``multiplicity`` counts
    how many fine-grained moves led to the same ``result``. A ``result`` of
    ``None`` marks a move blocked by a capacity (see ``enumerate_transitions``).
    """

    kind: EventKind
    rate: float
    result: DetailedState | None
    source: tuple[int, int] | None = None
    target: tuple[int, int] | None = None
    type_id: int | None = None
    multiplicity: int = 1


def is_consistent(C: DetailedState, model: OpenNetworkModel) -> bool:
    if C.J != model.J:
        return False
    for j, q in enumerate(C.nodes, start=1):
        for t, s in q:
            if not 1 <= t <= model.I:
                return False
            route = model.routes[t - 1].nodes
            if not 1 <= s <= len(route) or route[s - 1] != j:
                return False
    return True


def _set(nodes, j, seq):
    return nodes[: j - 1] + (seq,) + nodes[j:]


def _insert(seq, r, tag):
    return seq[: r - 1] + (tag,) + seq[r - 1:]


def apply_transfer(C: DetailedState, j: int, l: int, r: int, model: OpenNetworkModel) -> DetailedState:
    """Move the customer at position ``l`` of node ``j`` to position ``r`` of
    the next node on its route. Removal happens before insertion, so for
    feedback ``r`` ranges over ``1..n_j``."""
    n = C.n(j)
    if not 1 <= l <= n:
        raise ValueError(f"position {l} out of range 1..{n} at node {j}")
    t, s = C.tag(j, l)
    route = model.route(t).nodes
    if s >= len(route):
        raise ValueError(f"customer at ({j},{l}) is at its final stage; use apply_depart")
    k = route[s]
    removed = C.nodes[j - 1][: l - 1] + C.nodes[j - 1][l:]
    nodes = _set(C.nodes, j, removed)
    limit = len(nodes[k - 1]) + 1
    if not 1 <= r <= limit:
        raise ValueError(f"insertion position {r} out of range 1..{limit} at node {k}")
    return DetailedState(_set(nodes, k, _insert(nodes[k - 1], r, CustomerTag(t, s + 1))))


def apply_depart(C: DetailedState, j: int, l: int, model: OpenNetworkModel) -> DetailedState:
    n = C.n(j)
    if not 1 <= l <= n:
        raise ValueError(f"position {l} out of range 1..{n} at node {j}")
    t, s = C.tag(j, l)
    route = model.route(t).nodes
    if s != len(route) or route[-1] != j:
        raise ValueError(f"customer at ({j},{l}) is not at the final stage of its route")
    return DetailedState(_set(C.nodes, j, C.nodes[j - 1][: l - 1] + C.nodes[j - 1][l:]))


def apply_arrive(C: DetailedState, i: int, r: int, model: OpenNetworkModel) -> DetailedState:
    k = model.route(i).nodes[0]
    limit = C.n(k) + 1
    if not 1 <= r <= limit:
        raise ValueError(f"insertion position {r} out of range 1..{limit} at node {k}")
    return DetailedState(_set(C.nodes, k, _insert(C.nodes[k - 1], r, CustomerTag(i, 1))))


def _full(caps, k, n) -> bool:
    return caps is not None and caps[k - 1] is not None and n >= caps[k - 1]


def _fine_events(C: DetailedState, model: OpenNetworkModel, caps=None) -> Iterator[TransitionEvent]:
    nodes = C.nodes
    policies = model.policies
    routes = model.routes
    for j, seq in enumerate(nodes, start=1):
        n = len(seq)
        if n == 0:
            continue
        policy = policies[j - 1]
        grow = policy.gamma_row(n)
        for l, (t, s) in enumerate(seq, start=1):
            g = grow[l - 1]
            if g <= 0:
                continue
            base = policy.mu(l) * g
            route = routes[t - 1].nodes
            removed = seq[: l - 1] + seq[l:]
            if s == len(route):
                yield TransitionEvent(EventKind.DEPART, base, DetailedState(_set(nodes, j, removed)),
                                      source=(j, l), type_id=t)
                continue
            k = route[s]
            tag = CustomerTag(t, s + 1)
            if k == j:
                # feedback: queue shrinks to n-1, then the customer rejoins as the n-th member
                drow = policy.delta_row(n)
                for r, d in enumerate(drow, start=1):
                    if d > 0:
                        yield TransitionEvent(EventKind.TRANSFER, base * d,
                                              DetailedState(_set(nodes, j, _insert(removed, r, tag))),
                                              source=(j, l), target=(j, r), type_id=t)
            else:
                target = nodes[k - 1]
                if _full(caps, k, len(target)):
                    yield TransitionEvent(EventKind.TRANSFER, base, None, source=(j, l), type_id=t)
                    continue
                drow = policies[k - 1].delta_row(len(target) + 1)
                left = _set(nodes, j, removed)
                for r, d in enumerate(drow, start=1):
                    if d > 0:
                        yield TransitionEvent(EventKind.TRANSFER, base * d,
                                              DetailedState(_set(left, k, _insert(target, r, tag))),
                                              source=(j, l), target=(k, r), type_id=t)
    for route, rate in zip(routes, model.nu):
        if rate <= 0:
            continue
        k = route.nodes[0]
        target = nodes[k - 1]
        tag = CustomerTag(route.type_id, 1)
        if _full(caps, k, len(target)):
            yield TransitionEvent(EventKind.ARRIVE, rate, None, type_id=route.type_id)
            continue
        for r, d in enumerate(policies[k - 1].delta_row(len(target) + 1), start=1):
            if d > 0:
                yield TransitionEvent(EventKind.ARRIVE, rate * d,
                                      DetailedState(_set(nodes, k, _insert(target, r, tag))),
                                      target=(k, r), type_id=route.type_id)


def enumerate_transitions(C: DetailedState, model: OpenNetworkModel, merge: bool = True,
                          caps: Sequence[int | None] | None = None) -> list[TransitionEvent]:
    """All positive-rate transitions out of ``C``.

    With ``merge`` (the default) moves that lead to the same resulting state
    are combined into one event whose rate is the sum of theirs. With
    ``merge=False`` every (position, insertion position) pair is reported
    separately.

    With ``caps``, a move into a node already holding ``caps[k-1]`` customers
    is reported once, at its full rate, with ``result=None``; the insertion
    rule of the full node is never consulted.
    """
    if not merge:
        return list(_fine_events(C, model, caps))
    merged: dict = {}
    for ev in _fine_events(C, model, caps):
        key = ev.result if ev.result is not None else (ev.kind, ev.source, ev.type_id)
        prev = merged.get(key)
        if prev is None:
            merged[key] = ev
        else:
            merged[key] = TransitionEvent(prev.kind, prev.rate + ev.rate, prev.result,
                                                prev.source, prev.target, prev.type_id,
                                                prev.multiplicity + 1)
    return list(merged.values())


def total_outflow(C: DetailedState, model: OpenNetworkModel) -> float:
    """Total exit rate of ``C``: service effort in use plus all arrival rates."""
    out = 0.0
    for seq, policy in zip(C.nodes, model.policies):
        n = len(seq)
        if n:
            grow = policy.gamma_row(n)
            out += sum(policy.mu(l) * grow[l - 1] for l in range(1, n + 1))
    return out + sum(model.nu)


def _fits(nodes, caps) -> bool:
    return all(c is None or len(q) <= c for q, c in zip(nodes, caps))


def predecessors(C: DetailedState, model: OpenNetworkModel, caps: Sequence[int | None] | None = None):
    """Every ``(C_prev, event)`` with ``event`` a positive-rate transition from
    ``C_prev`` to ``C``.

    Candidates are generated by inverting the three operators; each is then
    confirmed (and its merged rate obtained) by forward enumeration. States
    exceeding ``caps`` (default: the model's ``sim_capacity``) are dropped.
    """
    if caps is None:
        caps = [model.capacity(j) for j in range(1, model.J + 1)]
    nodes = C.nodes
    candidates: dict[DetailedState, None] = {}

    def add(new_nodes):
        if _fits(new_nodes, caps):
            candidates.setdefault(DetailedState(new_nodes), None)

    for k, seq in enumerate(nodes, start=1):
        for r, (t, s) in enumerate(seq, start=1):
            removed = seq[: r - 1] + seq[r:]
            without = _set(nodes, k, removed)
            if s == 1:
                add(without)
                continue
            j = model.route(t).nodes[s - 2]
            prev_tag = CustomerTag(t, s - 1)
            source = without[j - 1]
            for l in range(1, len(source) + 2):
                add(_set(without, j, _insert(source, l, prev_tag)))

    for route in model.routes:
        j = route.nodes[-1]
        tag = CustomerTag(route.type_id, len(route.nodes))
        seq = nodes[j - 1]
        for l in range(1, len(seq) + 2):
            add(_set(nodes, j, _insert(seq, l, tag)))

    # a move into C never lands on a node longer than C's, so capping at C's
    # lengths avoids insertion rules beyond what the model defines
    lengths = C.queue_lengths
    out = []
    for prev in candidates:
        for ev in enumerate_transitions(prev, model, caps=lengths):
            if ev.result == C:
                out.append((prev, ev))
    return out


def node_sequences(model: OpenNetworkModel, j: int, n: int) -> Iterator[tuple[CustomerTag, ...]]:
    """All consistent queues of length ``n`` at node ``j``."""
    tags = [CustomerTag(t, s) for t, s in model.stages_at(j)]
    return itertools.product(tags, repeat=n)


def enumerate_states(model: OpenNetworkModel, max_total: int,
                     caps: Sequence[int | None] | None = None) -> Iterator[DetailedState]:
    """All consistent states with at most ``max_total`` customers in total
    (and per-node lengths within ``caps`` when given)."""
    per_node = []
    for j in range(1, model.J + 1):
        limit = max_total
        if caps is not None and caps[j - 1] is not None:
            limit = min(limit, caps[j - 1])
        if not model.stages_at(j):
            limit = 0
        per_node.append([seq for n in range(limit + 1) for seq in node_sequences(model, j, n)])

    def rec(j, budget, acc):
        if j == model.J:
            yield DetailedState(tuple(acc))
            return
        for seq in per_node[j]:
            if len(seq) <= budget:
                yield from rec(j + 1, budget - len(seq), acc + [seq])

    yield from rec(0, max_total, [])
