"""Network models: open networks with fixed per-type routes and closed
networks with class switching.

All node, type, stage and position indices are 1-based. Model objects are
frozen dataclasses built from tuples so they can be shared between worker
processes and hashed into a stable fingerprint.

Constructing a model never raises on semantic problems; call
:func:`validate_open` / :func:`validate_closed` to get the list of violated
invariants.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ModelParseError

ROW_SUM_TOL = 1e-12
POLICY_CHECK_BOUND = 64


class PolicyKind(str, enum.Enum):
    FCFS = "fcfs"
    LCFS_PR = "lcfs_pr"
    PS = "ps"
    EXPLICIT = "explicit"


@lru_cache(maxsize=None)
def _head_row(n: int) -> tuple[float, ...]:
    return (1.0,) + (0.0,) * (n - 1)


@lru_cache(maxsize=None)
def _tail_row(n: int) -> tuple[float, ...]:
    return (0.0,) * (n - 1) + (1.0,)


@lru_cache(maxsize=None)
def _uniform_row(n: int) -> tuple[float, ...]:
    return (1.0 / n,) * n


@dataclass(frozen=True)
class RouteSpec:
    """Fixed path ``r(i, 1), ..., r(i, f(i))`` of customer type ``type_id``."""

    type_id: int
    nodes: tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.nodes)

    def node_at(self, stage: int) -> int:
        return self.nodes[stage - 1]


@dataclass(frozen=True)
class ServicePolicy:
    """Position-dependent service rates plus allocation and insertion rules.

    ``mu(l)`` is the rate of the customer in position ``l`` (table entries,
    then ``mu_default`` beyond the table). ``gamma(n, l)`` is the share of
    service effort given to position ``l`` when ``n`` customers are present,
    ``delta(n, l)`` the probability that a customer joining a queue that then
    holds ``n`` customers takes position ``l``.

    For ``EXPLICIT`` policies the rules are given as lower-triangular row
    lists (row ``n`` has ``n`` entries); asking for a row past the end raises
    ``ValueError``.
    """

    kind: PolicyKind
    mu_table: tuple[float, ...] = ()
    mu_default: float = 1.0
    gamma_rows: tuple[tuple[float, ...], ...] | None = None
    delta_rows: tuple[tuple[float, ...], ...] | None = None

    def mu(self, l: int) -> float:
        if l <= len(self.mu_table):
            return self.mu_table[l - 1]
        return self.mu_default

    @property
    def max_n(self) -> int | None:
        """Largest queue length the policy is defined for (None = unbounded)."""
        if self.kind is not PolicyKind.EXPLICIT:
            return None
        return min(len(self.gamma_rows or ()), len(self.delta_rows or ()))

    def gamma_row(self, n: int) -> tuple[float, ...]:
        kind = self.kind
        if kind is PolicyKind.FCFS or kind is PolicyKind.LCFS_PR:
            return _head_row(n)
        if kind is PolicyKind.PS:
            return _uniform_row(n)
        return _explicit_row(self.gamma_rows, n, "gamma")

    def delta_row(self, n: int) -> tuple[float, ...]:
        kind = self.kind
        if kind is PolicyKind.FCFS:
            return _tail_row(n)
        if kind is PolicyKind.LCFS_PR:
            return _head_row(n)
        if kind is PolicyKind.PS:
            return _uniform_row(n)
        return _explicit_row(self.delta_rows, n, "delta")

    def gamma(self, n: int, l: int) -> float:
        return self.gamma_row(n)[l - 1]

    def delta(self, n: int, l: int) -> float:
        return self.delta_row(n)[l - 1]

    @property
    def symmetric(self) -> bool:
        """True when gamma and delta coincide on every row the policy defines."""
        if self.kind is PolicyKind.PS:
            return True
        if self.kind is not PolicyKind.EXPLICIT:
            return False
        return all(self.gamma_row(n) == self.delta_row(n) for n in range(1, self.max_n + 1))


def _explicit_row(rows, n, name):
    if rows is None or n > len(rows):
        defined = 0 if rows is None else len(rows)
        raise ValueError(f"explicit {name} rule defined for n <= {defined}, asked for n = {n}")
    return rows[n - 1]


def builtin_policy(kind, mu_table: Sequence[float] = (), mu_default: float = 1.0) -> ServicePolicy:
    """Service policy for a standard discipline.

    FCFS serves the head and appends at the tail, LCFS-PR serves and inserts
    at the head, PS shares effort and insertion uniformly.
    """
    try:
        kind = PolicyKind(kind.lower() if isinstance(kind, str) else kind)
    except ValueError:
        raise ValueError(f"unknown policy kind {kind!r}") from None
    if kind is PolicyKind.EXPLICIT:
        raise ValueError("explicit policies need gamma/delta rows; use ServicePolicy directly")
    return ServicePolicy(kind, tuple(float(m) for m in mu_table), float(mu_default))


@dataclass(frozen=True)
class OpenNetworkModel:
    """Open multiclass network: ``J`` nodes, ``I`` customer types.

    ``routes[i-1]``, ``nu[i-1]`` describe type ``i``; ``policies[j-1]`` and
    ``sim_capacity[j-1]`` describe node ``j``. Capacities only bound
    simulation and verification windows; the analytic model is uncapacitated.
    """

    J: int
    I: int
    routes: tuple[RouteSpec, ...]
    nu: tuple[float, ...]
    policies: tuple[ServicePolicy, ...]
    sim_capacity: tuple[int | None, ...] = ()
    name: str | None = field(default=None, compare=False)

    kind = "open"

    def route(self, i: int) -> RouteSpec:
        return self.routes[i - 1]

    def arrival_rate(self, i: int) -> float:
        return self.nu[i - 1]

    def policy(self, j: int) -> ServicePolicy:
        return self.policies[j - 1]

    def capacity(self, j: int) -> int | None:
        if j <= len(self.sim_capacity):
            return self.sim_capacity[j - 1]
        return None

    def stages_at(self, j: int) -> list[tuple[int, int]]:
        """All (type, stage) pairs whose route position is node ``j``."""
        return [
            (route.type_id, s)
            for route in self.routes
            for s, node in enumerate(route.nodes, start=1)
            if node == j
        ]

    def with_capacity(self, caps: Sequence[int | None]) -> "OpenNetworkModel":
        return OpenNetworkModel(self.J, self.I, self.routes, self.nu, self.policies,
                                tuple(caps), self.name)

    def with_policies(self, policies: Sequence[ServicePolicy]) -> "OpenNetworkModel":
        return OpenNetworkModel(self.J, self.I, self.routes, self.nu, tuple(policies),
                                self.sim_capacity, self.name)

    def with_rates(self, nu: Sequence[float]) -> "OpenNetworkModel":
        return OpenNetworkModel(self.J, self.I, self.routes, tuple(float(x) for x in nu),
                                self.policies, self.sim_capacity, self.name)


def open_model(routes, nu, policies=None, sim_capacity=None, J=None, name=None) -> OpenNetworkModel:
    """Convenience constructor: ``routes`` and ``nu`` are indexed by type."""
    routes = [tuple(int(x) for x in r) for r in routes]
    if J is None:
        J = max((max(r) for r in routes if r), default=1)
    if policies is None:
        policies = [builtin_policy("fcfs")] * J
    if sim_capacity is None:
        sim_capacity = [None] * J
    return OpenNetworkModel(
        J=J,
        I=len(routes),
        routes=tuple(RouteSpec(i, r) for i, r in enumerate(routes, start=1)),
        nu=tuple(float(x) for x in nu),
        policies=tuple(policies),
        sim_capacity=tuple(sim_capacity),
        name=name,
    )


Pair = tuple[int, int]


@dataclass(frozen=True)
class ClosedNetworkModel:
    """Closed network with FCFS nodes and (node, type) class switching.

    ``switch`` holds ``((j, i), (k, i2), p)`` entries; ``populations`` holds
    ``(chain_id, N)``. ``chains`` is an optional declared partition of the
    (node, type) pairs; when absent, chains are the connected components of
    the switching graph, numbered by their smallest pair.
    """

    J: int
    I: int
    mu: tuple[float, ...]
    switch: tuple[tuple[Pair, Pair, float], ...]
    populations: tuple[tuple[int, int], ...]
    chains: tuple[tuple[Pair, ...], ...] | None = None
    name: str | None = field(default=None, compare=False)

    kind = "closed"

    def rate(self, j: int) -> float:
        return self.mu[j - 1]

    @property
    def switch_map(self) -> dict[tuple[Pair, Pair], float]:
        out: dict[tuple[Pair, Pair], float] = {}
        for src, dst, p in self.switch:
            out[(src, dst)] = out.get((src, dst), 0.0) + p
        return out

    @property
    def pairs(self) -> list[Pair]:
        seen = set()
        for src, dst, _ in self.switch:
            seen.add(src)
            seen.add(dst)
        if self.chains:
            for chain in self.chains:
                seen.update(chain)
        return sorted(seen)

    @property
    def population_map(self) -> dict[int, int]:
        return dict(self.populations)

    @property
    def total_population(self) -> int:
        return sum(n for _, n in self.populations)

    def chain_list(self) -> list[tuple[Pair, ...]]:
        """Chains in id order (declared partition if given, else computed)."""
        if self.chains:
            return [tuple(sorted(c)) for c in self.chains]
        return computed_chains(self)[0]


def closed_model(mu, switch: Mapping, populations, chains=None, I=None, name=None) -> ClosedNetworkModel:
    """Convenience constructor. ``switch`` maps ``(j, i, k, i2) -> p``."""
    entries = tuple(((int(j), int(i)), (int(k), int(i2)), float(p))
                    for (j, i, k, i2), p in switch.items())
    if I is None:
        I = max((max(s[1], d[1]) for s, d, _ in entries), default=1)
    if isinstance(populations, Mapping):
        pops = tuple(sorted((int(c), int(n)) for c, n in populations.items()))
    else:
        pops = tuple((c, int(n)) for c, n in enumerate(populations, start=1))
    declared = None
    if chains is not None:
        declared = tuple(tuple(sorted((int(a), int(b)) for a, b in c)) for c in chains)
    return ClosedNetworkModel(J=len(mu), I=I, mu=tuple(float(m) for m in mu),
                              switch=entries, populations=pops, chains=declared, name=name)


def computed_chains(model: ClosedNetworkModel) -> tuple[list[tuple[Pair, ...]], list[bool]]:
    """Weakly connected components of the switching graph and, for each,
    whether it is strongly connected (i.e. irreducible)."""
    pairs = model.pairs
    index = {p: n for n, p in enumerate(pairs)}
    if not pairs:
        return [], []
    rows, cols = [], []
    for src, dst, p in model.switch:
        if p > 0:
            rows.append(index[src])
            cols.append(index[dst])
    graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(pairs), len(pairs)))
    _, weak = connected_components(graph, directed=True, connection="weak")
    n_strong, _ = connected_components(graph, directed=True, connection="strong")
    groups: dict[int, list[Pair]] = {}
    for p, label in zip(pairs, weak):
        groups.setdefault(int(label), []).append(p)
    chains = sorted((tuple(sorted(g)) for g in groups.values()), key=lambda c: c[0])
    irreducible = []
    for chain in chains:
        idx = [index[p] for p in chain]
        sub = graph[idx][:, idx]
        k, _ = connected_components(sub, directed=True, connection="strong")
        irreducible.append(k == 1)
    return chains, irreducible


# ---------------------------------------------------------------- validation

def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _check_rows(rows, name, path, needed, out):
    if rows is None:
        out.append(f"{path}.{name}: explicit policy requires a {name} matrix")
        return
    for n, row in enumerate(rows, start=1):
        if len(row) != n:
            out.append(f"{path}.{name}: {name} row {n} has {len(row)} entries, expected {n}")
            continue
        if any(not math.isfinite(v) or v < 0 for v in row):
            out.append(f"{path}.{name}: {name} row {n} has a negative or non-finite entry")
        total = math.fsum(row)
        if abs(total - 1.0) > ROW_SUM_TOL:
            out.append(f"{path}.{name}: {name} row {n} sums to {_fmt(total)}")
    if needed is not None and len(rows) < needed:
        out.append(f"{path}.{name}: {name} rows cover n <= {len(rows)} but sim_capacity is {needed}")


def _check_policy(policy: ServicePolicy, path: str, cap, out):
    for l, m in enumerate(policy.mu_table, start=1):
        if not (math.isfinite(m) and m > 0):
            out.append(f"{path}.mu.table[{l}]: rate {_fmt(m)} must be positive")
    if not (math.isfinite(policy.mu_default) and policy.mu_default > 0):
        out.append(f"{path}.mu.default: rate {_fmt(policy.mu_default)} must be positive")
    if policy.kind is PolicyKind.EXPLICIT:
        _check_rows(policy.gamma_rows, "gamma", path, cap, out)
        _check_rows(policy.delta_rows, "delta", path, cap, out)


def validate_open(model: OpenNetworkModel) -> list[str]:
    """Return every invariant violation of an open model (empty when valid)."""
    out: list[str] = []
    if model.J < 1:
        out.append(f"J: node count {model.J} must be >= 1")
    if model.I < 1:
        out.append(f"I: type count {model.I} must be >= 1")
    if len(model.policies) != model.J:
        out.append(f"policies: {len(model.policies)} policies for {model.J} nodes")
    if model.sim_capacity and len(model.sim_capacity) != model.J:
        out.append(f"sim_capacity: {len(model.sim_capacity)} entries for {model.J} nodes")
    if len(model.routes) != model.I:
        out.append(f"routes: {len(model.routes)} routes for {model.I} types")
    if len(model.nu) != model.I:
        out.append(f"nu: {len(model.nu)} arrival rates for {model.I} types")

    ids = [r.type_id for r in model.routes]
    for i in range(1, model.I + 1):
        if ids.count(i) != 1:
            out.append(f"routes: type {i} has {ids.count(i)} routes, expected exactly 1")
    for route in model.routes:
        path = f"routes[type {route.type_id}]"
        if not 1 <= route.type_id <= model.I:
            out.append(f"{path}: type id out of range 1..{model.I}")
        if len(route.nodes) < 1:
            out.append(f"{path}: route is empty")
        for s, node in enumerate(route.nodes, start=1):
            if not 1 <= node <= model.J:
                out.append(f"{path}.nodes[{s}]: node {node} out of range 1..{model.J}")

    for i, rate in enumerate(model.nu, start=1):
        if not (math.isfinite(rate) and rate > 0):
            out.append(f"nu[type {i}]: arrival rate {_fmt(rate)} must be positive")

    for j, policy in enumerate(model.policies, start=1):
        cap = model.capacity(j)
        if cap is not None and (not isinstance(cap, int) or cap < 1):
            out.append(f"nodes[{j}].sim_capacity: {cap!r} must be a positive integer")
            cap = None
        _check_policy(policy, f"nodes[{j}]", cap, out)
    return out


def validate_closed(model: ClosedNetworkModel) -> list[str]:
    """Return every invariant violation of a closed model (empty when valid)."""
    out: list[str] = []
    if model.J < 1:
        out.append(f"J: node count {model.J} must be >= 1")
    for j, m in enumerate(model.mu, start=1):
        if not (math.isfinite(m) and m > 0):
            out.append(f"nodes[{j}].mu: rate {_fmt(m)} must be positive")

    bad_pair = False
    rows: dict[Pair, list[float]] = {}
    for n, (src, dst, p) in enumerate(model.switch):
        for label, (node, typ) in (("from", src), ("to", dst)):
            if not 1 <= node <= model.J or not 1 <= typ <= model.I:
                out.append(f"switch[{n}].{label}: pair ({node},{typ}) out of range")
                bad_pair = True
        if not (math.isfinite(p) and 0 <= p <= 1):
            out.append(f"switch[{n}].p: probability {_fmt(p)} outside [0, 1]")
        rows.setdefault(src, []).append(p)
    for pair in model.pairs:
        total = math.fsum(rows.get(pair, ()))
        if abs(total - 1.0) > ROW_SUM_TOL:
            out.append(f"switch row ({pair[0]},{pair[1]}) sums to {_fmt(total)}")
    if bad_pair:
        return out

    computed, _ = computed_chains(model)
    if model.chains:
        owner: dict[Pair, int] = {}
        for c, chain in enumerate(model.chains, start=1):
            for pair in chain:
                if pair in owner:
                    out.append(f"chains: pair ({pair[0]},{pair[1]}) declared in chains {owner[pair]} and {c}")
                owner[pair] = c
        for pair in model.pairs:
            if pair not in owner:
                out.append(f"chains: pair ({pair[0]},{pair[1]}) not in any declared chain")
        for src, dst, p in model.switch:
            if p > 0 and src in owner and dst in owner and owner[src] != owner[dst]:
                out.append(
                    f"chain closure: switch ({src[0]},{src[1]})->({dst[0]},{dst[1]}) "
                    f"maps chain {owner[src]} into chain {owner[dst]}"
                )
        declared = {frozenset(c) for c in model.chains}
        for chain in computed:
            if frozenset(chain) not in declared and all(p in owner for p in chain):
                ids = sorted({owner[p] for p in chain})
                if len(ids) == 1:
                    out.append(f"chains: declared chain {ids[0]} is not connected by switching")
        n_chains = len(model.chains)
    else:
        n_chains = len(computed)

    pops = model.population_map
    for c in range(1, n_chains + 1):
        if c not in pops:
            out.append(f"populations: chain {c} has no population")
        elif pops[c] < 1:
            out.append(f"populations[{c}]: population {pops[c]} must be >= 1")
    for c in pops:
        if not 1 <= c <= n_chains:
            out.append(f"populations[{c}]: no such chain (model has {n_chains})")
    return out


def check_builtin_rows(policy: ServicePolicy, bound: int = POLICY_CHECK_BOUND) -> list[int]:
    """Queue lengths ``n <= bound`` whose gamma or delta row fails the sum rule."""
    bad = []
    for n in range(1, bound + 1):
        if abs(math.fsum(policy.gamma_row(n)) - 1) > ROW_SUM_TOL or \
                abs(math.fsum(policy.delta_row(n)) - 1) > ROW_SUM_TOL:
            bad.append(n)
    return bad


# --------------------------------------------------------------------- JSON

def _keys(obj, required, optional, path):
    if not isinstance(obj, dict):
        raise ModelParseError(f"{path}: expected an object")
    missing = [k for k in required if k not in obj]
    if missing:
        raise ModelParseError(f"{path}: missing key(s) {', '.join(missing)}")
    unknown = sorted(set(obj) - set(required) - set(optional))
    if unknown:
        raise ModelParseError(f"{path}: unknown key(s) {', '.join(unknown)}")


def _num(x, path) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ModelParseError(f"{path}: expected a number, got {x!r}")
    return float(x)


def _int(x, path) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise ModelParseError(f"{path}: expected an integer, got {x!r}")
    return x


def _matrix(rows, path):
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise ModelParseError(f"{path}: expected a list of rows")
    return tuple(tuple(_num(v, f"{path}[{n}]") for v in row) for n, row in enumerate(rows))


def _parse_open(doc) -> OpenNetworkModel:
    _keys(doc, ("kind", "nodes", "types"), ("name",), "model")
    nodes = doc["nodes"]
    types = doc["types"]
    if not isinstance(nodes, list) or not nodes:
        raise ModelParseError("nodes: expected a non-empty list")
    if not isinstance(types, list) or not types:
        raise ModelParseError("types: expected a non-empty list")

    by_id: dict[int, tuple[ServicePolicy, int | None]] = {}
    for n, node in enumerate(nodes):
        path = f"nodes[{n}]"
        _keys(node, ("id", "policy", "mu"), ("gamma", "delta", "sim_capacity"), path)
        nid = _int(node["id"], f"{path}.id")
        _keys(node["mu"], ("table", "default"), (), f"{path}.mu")
        table = node["mu"]["table"]
        if not isinstance(table, list):
            raise ModelParseError(f"{path}.mu.table: expected a list")
        table = tuple(_num(v, f"{path}.mu.table") for v in table)
        default = _num(node["mu"]["default"], f"{path}.mu.default")
        kind = node["policy"]
        try:
            kind = PolicyKind(kind)
        except ValueError:
            raise ModelParseError(f"{path}.policy: unknown policy {kind!r}") from None
        if kind is PolicyKind.EXPLICIT:
            if "gamma" not in node or "delta" not in node:
                raise ModelParseError(f"{path}: explicit policy requires gamma and delta")
            policy = ServicePolicy(kind, table, default,
                                   _matrix(node["gamma"], f"{path}.gamma"),
                                   _matrix(node["delta"], f"{path}.delta"))
        else:
            if "gamma" in node or "delta" in node:
                raise ModelParseError(f"{path}: gamma/delta only allowed for explicit policies")
            policy = ServicePolicy(kind, table, default)
        cap = node.get("sim_capacity")
        if cap is not None:
            cap = _int(cap, f"{path}.sim_capacity")
        if nid in by_id:
            raise ModelParseError(f"{path}.id: duplicate node id {nid}")
        by_id[nid] = (policy, cap)
    J = len(by_id)
    if sorted(by_id) != list(range(1, J + 1)):
        raise ModelParseError(f"nodes: ids must be 1..{J}, got {sorted(by_id)}")

    routes, rates = {}, {}
    for n, typ in enumerate(types):
        path = f"types[{n}]"
        _keys(typ, ("id", "route", "nu"), (), path)
        tid = _int(typ["id"], f"{path}.id")
        if not isinstance(typ["route"], list):
            raise ModelParseError(f"{path}.route: expected a list of node ids")
        if tid in routes:
            raise ModelParseError(f"{path}.id: duplicate type id {tid}")
        routes[tid] = tuple(_int(v, f"{path}.route") for v in typ["route"])
        rates[tid] = _num(typ["nu"], f"{path}.nu")
    I = len(routes)
    if sorted(routes) != list(range(1, I + 1)):
        raise ModelParseError(f"types: ids must be 1..{I}, got {sorted(routes)}")

    return OpenNetworkModel(
        J=J,
        I=I,
        routes=tuple(RouteSpec(i, routes[i]) for i in range(1, I + 1)),
        nu=tuple(rates[i] for i in range(1, I + 1)),
        policies=tuple(by_id[j][0] for j in range(1, J + 1)),
        sim_capacity=tuple(by_id[j][1] for j in range(1, J + 1)),
        name=doc.get("name"),
    )


def _pair(x, path) -> Pair:
    if not isinstance(x, list) or len(x) != 2:
        raise ModelParseError(f"{path}: expected [node, type]")
    return _int(x[0], path), _int(x[1], path)


def _parse_closed(doc) -> ClosedNetworkModel:
    _keys(doc, ("kind", "nodes", "switch", "populations"), ("name", "chains"), "model")
    nodes = doc["nodes"]
    if not isinstance(nodes, list) or not nodes:
        raise ModelParseError("nodes: expected a non-empty list")
    rates = {}
    for n, node in enumerate(nodes):
        _keys(node, ("id", "mu"), (), f"nodes[{n}]")
        nid = _int(node["id"], f"nodes[{n}].id")
        if nid in rates:
            raise ModelParseError(f"nodes[{n}].id: duplicate node id {nid}")
        rates[nid] = _num(node["mu"], f"nodes[{n}].mu")
    J = len(rates)
    if sorted(rates) != list(range(1, J + 1)):
        raise ModelParseError(f"nodes: ids must be 1..{J}, got {sorted(rates)}")

    if not isinstance(doc["switch"], list):
        raise ModelParseError("switch: expected a list")
    entries = []
    for n, entry in enumerate(doc["switch"]):
        _keys(entry, ("from", "to", "p"), (), f"switch[{n}]")
        entries.append((_pair(entry["from"], f"switch[{n}].from"),
                        _pair(entry["to"], f"switch[{n}].to"),
                        _num(entry["p"], f"switch[{n}].p")))

    pops = doc["populations"]
    if not isinstance(pops, dict):
        raise ModelParseError("populations: expected an object of chain id -> count")
    populations = []
    for key, value in pops.items():
        try:
            cid = int(key)
        except ValueError:
            raise ModelParseError(f"populations: chain id {key!r} is not an integer") from None
        populations.append((cid, _int(value, f"populations[{key}]")))

    chains = None
    if "chains" in doc:
        raw = doc["chains"]
        if not isinstance(raw, dict):
            raise ModelParseError("chains: expected an object of chain id -> [[node, type], ...]")
        ordered = sorted(raw.items(), key=lambda kv: int(kv[0]))
        chains = tuple(tuple(sorted(_pair(p, f"chains[{k}]") for p in v)) for k, v in ordered)

    I = max((max(s[1], d[1]) for s, d, _ in entries), default=1)
    return ClosedNetworkModel(J=J, I=I, mu=tuple(rates[j] for j in range(1, J + 1)),
                              switch=tuple(entries), populations=tuple(sorted(populations)),
                              chains=chains, name=doc.get("name"))


def model_from_dict(doc):
    """Build an open or closed model from its JSON document (strict)."""
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ModelParseError("model: missing top-level 'kind'")
    if doc["kind"] == "open":
        return _parse_open(doc)
    if doc["kind"] == "closed":
        return _parse_closed(doc)
    raise ModelParseError(f"kind: expected 'open' or 'closed', got {doc['kind']!r}")


def load_model(path):
    """Read a model file. Raises :class:`ModelParseError` on any read/schema problem."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ModelParseError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"{path}: invalid JSON: {exc}") from exc
    return model_from_dict(doc)


def model_to_dict(model) -> dict:
    if isinstance(model, OpenNetworkModel):
        nodes = []
        for j, policy in enumerate(model.policies, start=1):
            node = {"id": j, "policy": policy.kind.value,
                    "mu": {"table": list(policy.mu_table), "default": policy.mu_default}}
            if policy.kind is PolicyKind.EXPLICIT:
                node["gamma"] = [list(r) for r in policy.gamma_rows or ()]
                node["delta"] = [list(r) for r in policy.delta_rows or ()]
            if model.capacity(j) is not None:
                node["sim_capacity"] = model.capacity(j)
            nodes.append(node)
        types = [{"id": r.type_id, "route": list(r.nodes), "nu": rate}
                 for r, rate in zip(model.routes, model.nu)]
        return {"kind": "open", "nodes": nodes, "types": types}
    doc = {
        "kind": "closed",
        "nodes": [{"id": j, "mu": m} for j, m in enumerate(model.mu, start=1)],
        "switch": [{"from": list(s), "to": list(d), "p": p} for s, d, p in model.switch],
        "populations": {str(c): n for c, n in model.populations},
    }
    if model.chains:
        doc["chains"] = {str(c): [list(p) for p in chain]
                         for c, chain in enumerate(model.chains, start=1)}
    return doc


def model_fingerprint(model) -> str:
    """Stable sha256 of the canonical model document (name excluded)."""
    canon = json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def builtin_models_dir() -> Path:
    return Path(__file__).parent / "models"


def bundled_model(name: str):
    """Load one of the model files shipped with the package, e.g. ``"mm1"``."""
    return load_model(builtin_models_dir() / f"{name}.json")


def bundled_model_names(kind: str | None = None) -> list[str]:
    names = []
    for path in sorted(builtin_models_dir().glob("*.json")):
        doc = json.loads(path.read_text())
        if kind is None or doc.get("kind") == kind:
            names.append(path.stem)
    return names


