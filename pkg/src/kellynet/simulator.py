"""Event-by-event simulation of the open detailed chain and of closed FCFS
networks, with time-weighted occupancy statistics.

Each step draws one exponential holding time at the total exit rate and then
picks the next event with probability proportional to its rate; this is the
superposition of independent exponential clocks, one per event.

Replication ``r`` of a run seeded with ``seed`` uses
``PCG64(SeedSequence(seed, spawn_key=(r,)))``, so replications are
independent, reproducible, and can be executed in any order or in parallel.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .chain import DetailedState, EventKind, enumerate_transitions
from .closed_solver import ClosedEquilibrium
from .errors import InstabilityError, KellynetError
from .model import ClosedNetworkModel, OpenNetworkModel, model_fingerprint
from .open_solver import EquilibriumReport, node_normalizer, visit_rates

log = logging.getLogger(__name__)

RNG_NAME = "numpy.random.PCG64/SeedSequence(seed, spawn_key=(replication,))"
CAPACITY_TAIL = 1e-8
_BATCH = 4096


class CapacityError(KellynetError):
    """A transition was blocked by a capacity and blocking is configured as an error."""


@dataclass(frozen=True)
class SimConfig:
    seed: int
    horizon: float
    warmup: float = 0.0
    replications: int = 1
    capacity: tuple[int | None, ...] | None = None
    on_block: str = "reject"
    allow_unstable: bool = False
    debug: bool = False
    workers: int | None = None

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not (self.horizon > self.warmup >= 0):
            raise ValueError(f"need horizon > warmup >= 0, got horizon={self.horizon}, warmup={self.warmup}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.on_block not in ("reject", "error"):
            raise ValueError("on_block must be 'reject' or 'error'")


def make_rng(seed: int, replication: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replication,))))


class _Draws:
    """Buffered standard exponentials and uniforms from one generator."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self._exp: list[float] = []
        self._uni: list[float] = []

    def exp(self) -> float:
        if not self._exp:
            self._exp = self.rng.standard_exponential(_BATCH).tolist()[::-1]
        return self._exp.pop()

    def uniform(self) -> float:
        if not self._uni:
            self._uni = self.rng.random(_BATCH).tolist()[::-1]
        return self._uni.pop()


@dataclass
class ReplicationStats:
    """Raw time integrals of one replication (after warmup).

    ``hist[j-1][n]`` is the time node ``j`` spent with ``n`` customers,
    ``occupancy[key]`` the time integral of the number of customers with that
    key ((node, type, stage) for open runs, (node, type) for closed runs),
    ``joint`` the time spent at each vector of per-node totals.
    """

    index: int
    observed_time: float
    hist: list[list[float]]
    occupancy: dict[tuple, float]
    events: dict[str, int]
    rejected: dict[str, int]
    joint: dict[tuple[int, ...], float]
    arrivals: dict[int, int] = field(default_factory=dict)

    def pmf(self, j: int) -> np.ndarray:
        return np.asarray(self.hist[j - 1]) / self.observed_time

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "observed_time": self.observed_time,
            "hist": [list(h) for h in self.hist],
            "occupancy": [[*k, v] for k, v in sorted(self.occupancy.items())],
            "events": dict(sorted(self.events.items())),
            "rejected": dict(sorted(self.rejected.items())),
            "joint": [[list(k), v] for k, v in sorted(self.joint.items())],
            "arrivals": {str(k): v for k, v in sorted(self.arrivals.items())},
        }


@dataclass
class OccupancyStats:
    kind: str
    model_hash: str
    seed: int
    horizon: float
    warmup: float
    capacity: tuple[int, ...]
    replications: list[ReplicationStats]
    rng: str = RNG_NAME
    notes: list[str] = field(default_factory=list)

    @property
    def total_time(self) -> float:
        return math.fsum(r.observed_time for r in self.replications)

    def pmf(self, j: int) -> np.ndarray:
        """Pooled time-weighted distribution of node ``j``'s queue length."""
        width = max(len(r.hist[j - 1]) for r in self.replications)
        acc = np.zeros(width)
        for r in self.replications:
            h = np.asarray(r.hist[j - 1])
            acc[: len(h)] += h
        return acc / self.total_time

    def composition(self, j: int) -> dict[tuple, float]:
        """Pooled share of node-``j`` customer-time belonging to each key."""
        acc: dict[tuple, float] = {}
        for r in self.replications:
            for key, v in r.occupancy.items():
                if key[0] == j:
                    acc[key[1:]] = acc.get(key[1:], 0.0) + v
        total = math.fsum(acc.values())
        return {k: (v / total if total > 0 else 0.0) for k, v in sorted(acc.items())}

    def composition_by_rep(self, j: int) -> list[dict[tuple, float]]:
        out = []
        for r in self.replications:
            sub = {k[1:]: v for k, v in r.occupancy.items() if k[0] == j}
            total = math.fsum(sub.values())
            out.append({k: (v / total if total > 0 else 0.0) for k, v in sorted(sub.items())})
        return out

    def joint_distribution(self) -> dict[tuple[int, ...], float]:
        acc: dict[tuple[int, ...], float] = {}
        for r in self.replications:
            for k, v in r.joint.items():
                acc[k] = acc.get(k, 0.0) + v
        total = self.total_time
        return {k: v / total for k, v in sorted(acc.items())}

    def event_counts(self) -> dict[str, int]:
        acc: dict[str, int] = {}
        for r in self.replications:
            for k, v in r.events.items():
                acc[k] = acc.get(k, 0) + v
        return acc

    def merge(self, other: "OccupancyStats") -> "OccupancyStats":
        """Combine replications of two runs of the same model and settings."""
        if (self.kind, self.model_hash, self.horizon, self.warmup, self.capacity) != \
                (other.kind, other.model_hash, other.horizon, other.warmup, other.capacity):
            raise ValueError("cannot merge statistics from different models or settings")
        reps = sorted(self.replications + other.replications, key=lambda r: r.index)
        return OccupancyStats(self.kind, self.model_hash, self.seed, self.horizon, self.warmup,
                              self.capacity, reps, self.rng, sorted(set(self.notes + other.notes)))

    def to_dict(self) -> dict:
        J = len(self.capacity)
        return {
            "kind": self.kind,
            "model_hash": self.model_hash,
            "rng": self.rng,
            "numpy": np.__version__,
            "seed": self.seed,
            "horizon": self.horizon,
            "warmup": self.warmup,
            "capacity": list(self.capacity),
            "notes": list(self.notes),
            "pooled": {
                "pmf": {str(j): self.pmf(j).tolist() for j in range(1, J + 1)},
                "events": dict(sorted(self.event_counts().items())),
            },
            "replications": [r.to_dict() for r in self.replications],
        }

    def csv_rows(self):
        yield ("replication", "node", "n", "time_fraction")
        for r in self.replications:
            for j in range(1, len(self.capacity) + 1):
                for n, v in enumerate(r.pmf(j).tolist()):
                    yield (r.index, j, n, v)


# --------------------------------------------------------------- open runs

def capacity_for_tail(model: OpenNetworkModel, tail: float = CAPACITY_TAIL, nodes=None) -> tuple[int, ...]:
    """Per-node caps ``c`` with analytic ``P[N_j >= c] < tail`` (for ``nodes``,
    default all)."""
    rates = visit_rates(model)
    caps = []
    for j in nodes or range(1, model.J + 1):
        nz = node_normalizer(rates.b[j - 1], model.policy(j))
        c = 1
        while nz.B * nz.remainder(c - 1) >= tail:
            c += 1
        caps.append(c)
    return tuple(caps)


def _resolve_open_caps(model: OpenNetworkModel, config: SimConfig) -> tuple[tuple[int, ...], list[str]]:
    caps = list(config.capacity) if config.capacity is not None else \
        [model.capacity(j) for j in range(1, model.J + 1)]
    notes = []
    missing = [j for j, c in enumerate(caps, start=1) if c is None]
    if missing:
        try:
            auto = capacity_for_tail(model, nodes=missing)
        except InstabilityError as exc:
            raise ValueError(f"cannot size capacities automatically ({exc}); give sim_capacity") from None
        for j, c in zip(missing, auto):
            caps[j - 1] = c
            notes.append(f"node {j}: no sim_capacity given, using {c} (tail < {CAPACITY_TAIL:g})")
    for note in notes:
        log.warning(note)
    return tuple(caps), notes


def _run_open(model: OpenNetworkModel, caps: tuple[int, ...], config: SimConfig, rep: int,
              trajectory=None) -> ReplicationStats:
    draws = _Draws(make_rng(config.seed, rep))
    state = DetailedState.empty(model.J)
    t, horizon, warmup = 0.0, config.horizon, config.warmup
    dwell: dict[DetailedState, float] = {}
    events = {k.value: 0 for k in EventKind}
    rejected = {k.value: 0 for k in EventKind}
    arrivals = {r.type_id: 0 for r in model.routes}
    if trajectory is not None:
        trajectory.write(json.dumps({"replication": rep, "t": t, **state.to_json()}) + "\n")

    while True:
        evs = enumerate_transitions(state, model, caps=caps)
        total = math.fsum(ev.rate for ev in evs)
        t_next = t + draws.exp() / total if total > 0 else math.inf
        lo, hi = max(t, warmup), min(t_next, horizon)
        if hi > lo:
            dwell[state] = dwell.get(state, 0.0) + (hi - lo)
        if t_next >= horizon:
            break
        u = draws.uniform() * total
        chosen = evs[-1]
        for ev in evs:
            u -= ev.rate
            if u < 0:
                chosen = ev
                break
        counted = t_next >= warmup
        kind = chosen.kind.value
        if counted:
            events[kind] += 1
            if chosen.kind is EventKind.ARRIVE:
                arrivals[chosen.type_id] += 1
        if chosen.result is not None:
            state = chosen.result
            if trajectory is not None:
                trajectory.write(json.dumps({"replication": rep, "t": t_next, **state.to_json()}) + "\n")
        else:
            if config.on_block == "error":
                raise CapacityError(f"{kind} at t={t_next} blocked by capacity {caps}")
            if counted:
                rejected[kind] += 1
        t = t_next

    hist = [[0.0] * (c + 1) for c in caps]
    occupancy = {(j, i, s): 0.0 for j in range(1, model.J + 1) for i, s in model.stages_at(j)}
    joint: dict[tuple[int, ...], float] = {}
    for st, w in dwell.items():
        lengths = st.queue_lengths
        joint[lengths] = joint.get(lengths, 0.0) + w
        for j, q in enumerate(st.nodes, start=1):
            hist[j - 1][len(q)] += w
            for tag in q:
                occupancy[(j, tag.type_id, tag.stage)] += w
    return ReplicationStats(rep, horizon - warmup, hist, occupancy, events, rejected, joint, arrivals)


def _workers(config: SimConfig, trajectory) -> int:
    if trajectory is not None:
        return 1
    limit = config.workers
    if limit is None:
        env = os.environ.get("KELLYNET_THREADS")
        limit = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(limit, config.replications))


def _run_all(fn, args, config: SimConfig, trajectory=None) -> list[ReplicationStats]:
    reps = range(config.replications)
    workers = _workers(config, trajectory)
    if workers == 1:
        return [fn(*args, rep, trajectory) for rep in reps]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *args, rep) for rep in reps]
        return [f.result() for f in futures]


def simulate_open(model: OpenNetworkModel, config: SimConfig, trajectory=None) -> OccupancyStats:
    """Simulate the detailed chain of an open network.

    Events whose result would exceed a node capacity are rejected: time
    advances, the state is unchanged, and the rejection is counted. Nodes
    without a capacity (in the model or ``config.capacity``) get one sized
    so the analytic tail beyond it is below 1e-8.

    ``trajectory``, if given, is a text stream receiving one JSON line per
    state change; it forces sequential execution.
    """
    rates = visit_rates(model)
    unstable = []
    for j, policy in enumerate(model.policies, start=1):
        if rates.b[j - 1] >= policy.mu_default:
            unstable.append(j)
    notes = []
    if unstable:
        if not config.allow_unstable:
            raise InstabilityError(f"unstable node(s): {', '.join(map(str, unstable))}", unstable)
        notes.append(f"simulating unstable node(s) {unstable}")
        log.warning(notes[-1])
    caps, cap_notes = _resolve_open_caps(model, config)
    reps = _run_all(_run_open, (model, caps, config), config, trajectory)
    return OccupancyStats("open", model_fingerprint(model), config.seed, config.horizon, config.warmup,
                          caps, reps, notes=notes + cap_notes)


# ------------------------------------------------------------- closed runs

def _run_closed(model: ClosedNetworkModel, config: SimConfig, rep: int, trajectory=None) -> ReplicationStats:
    draws = _Draws(make_rng(config.seed, rep))
    chains = model.chain_list()
    pops = model.population_map
    pairs = sorted(p for chain in chains for p in chain)
    index = {p: n for n, p in enumerate(pairs)}
    routing: dict[tuple[int, int], tuple[list[tuple[int, int]], list[float]]] = {}
    for (src, dst), p in sorted(model.switch_map.items()):
        if p > 0:
            dests, probs = routing.setdefault(src, ([], []))
            dests.append(dst)
            probs.append(p)
    for src, (dests, probs) in routing.items():
        acc, cum = 0.0, []
        for p in probs:
            acc += p
            cum.append(acc)
        routing[src] = (dests, cum)
    chain_of = {p: c for c, chain in enumerate(chains) for p in chain}

    queues: list[list[int]] = [[] for _ in range(model.J)]
    counts = [0] * len(pairs)
    for c, chain in enumerate(chains, start=1):
        j, i = chain[0]
        queues[j - 1].extend([i] * pops.get(c, 0))
        counts[index[(j, i)]] += pops.get(c, 0)

    t, horizon, warmup = 0.0, config.horizon, config.warmup
    dwell: dict[tuple[int, ...], float] = {}
    events = {"COMPLETION": 0}
    while True:
        busy = [j for j in range(model.J) if queues[j]]
        total = math.fsum(model.mu[j] for j in busy)
        t_next = t + draws.exp() / total if total > 0 else math.inf
        lo, hi = max(t, warmup), min(t_next, horizon)
        if hi > lo:
            key = tuple(counts)
            dwell[key] = dwell.get(key, 0.0) + (hi - lo)
        if t_next >= horizon:
            break
        u = draws.uniform() * total
        node = busy[-1]
        for j in busy:
            u -= model.mu[j]
            if u < 0:
                node = j
                break
        typ = queues[node].pop(0)
        src = (node + 1, typ)
        dests, cum = routing[src]
        v = draws.uniform() * cum[-1]
        dst = dests[-1]
        for d, c in zip(dests, cum):
            if v < c:
                dst = d
                break
        queues[dst[0] - 1].append(dst[1])
        counts[index[src]] -= 1
        counts[index[dst]] += 1
        if t_next >= warmup:
            events["COMPLETION"] += 1
        if config.debug:
            per_chain = [0] * len(chains)
            for p, n in zip(pairs, counts):
                per_chain[chain_of[p]] += n
            assert per_chain == [pops.get(c, 0) for c in range(1, len(chains) + 1)], "population not conserved"
        t = t_next

    N = model.total_population
    hist = [[0.0] * (N + 1) for _ in range(model.J)]
    occupancy = {p: 0.0 for p in pairs}
    joint: dict[tuple[int, ...], float] = {}
    for key, w in dwell.items():
        totals = [0] * model.J
        for (j, i), n in zip(pairs, key):
            totals[j - 1] += n
            occupancy[(j, i)] += n * w
        for j, n in enumerate(totals):
            hist[j][n] += w
        joint[tuple(totals)] = joint.get(tuple(totals), 0.0) + w
    return ReplicationStats(rep, horizon - warmup, hist, occupancy, events, {}, joint)


def simulate_closed(model: ClosedNetworkModel, config: SimConfig) -> OccupancyStats:
    """Simulate a closed network of FCFS nodes with class switching.

    All customers of a chain start at the smallest (node, type) pair of the
    chain; use ``config.warmup`` to discard the start-up transient.
    """
    reps = _run_all(_run_closed, (model, config), config)
    N = model.total_population
    return OccupancyStats("closed", model_fingerprint(model), config.seed, config.horizon, config.warmup,
                          (N,) * model.J, reps)


def simulate(model, config: SimConfig, trajectory=None) -> OccupancyStats:
    if isinstance(model, OpenNetworkModel):
        return simulate_open(model, config, trajectory)
    return simulate_closed(model, config)


# -------------------------------------------------------------- comparison

@dataclass
class ComparisonReport:
    kind: str
    model_hash: str
    tv: dict[int, float]
    tv_by_rep: dict[int, list[float]]
    tv_spread: dict[int, float]
    composition_diff: dict[tuple, float] = field(default_factory=dict)
    composition_by_rep: dict[tuple, list[float]] = field(default_factory=dict)
    joint_tv: float | None = None

    @property
    def max_tv(self) -> float:
        return max(self.tv.values(), default=0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tv"] = {str(k): v for k, v in self.tv.items()}
        d["tv_by_rep"] = {str(k): v for k, v in self.tv_by_rep.items()}
        d["tv_spread"] = {str(k): v for k, v in self.tv_spread.items()}
        d["composition_diff"] = {str(k): v for k, v in self.composition_diff.items()}
        d["composition_by_rep"] = {str(k): v for k, v in self.composition_by_rep.items()}
        d["max_tv"] = self.max_tv
        return d


def total_variation(empirical, analytic) -> float:
    """TV distance after folding both vectors at the shorter length.

    The last bucket of the folded analytic vector carries all of the mass
    beyond it (one minus the prefix), so analytic tails are accounted for.
    """
    emp = np.asarray(empirical, dtype=float)
    ana = np.asarray(analytic, dtype=float)
    m = min(len(emp), len(ana))
    e = np.append(emp[: m - 1], emp[m - 1:].sum())
    a = np.append(ana[: m - 1], 1.0 - math.fsum(ana[: m - 1].tolist()))
    return 0.5 * float(np.abs(e - a).sum())


def _spread(values) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def compare_to_analytic(stats: OccupancyStats, report) -> ComparisonReport:
    """Distance between simulated occupancy and an analytic equilibrium report."""
    if stats.model_hash != report.model_hash:
        raise ValueError("statistics and report describe different models")
    J = len(stats.capacity)
    if isinstance(report, EquilibriumReport):
        analytic = {j: report.node(j).pmf for j in range(1, J + 1)}
    elif isinstance(report, ClosedEquilibrium):
        analytic = {j: report.marginal(j).tolist() for j in range(1, J + 1)}
    else:
        raise TypeError(f"unsupported report type {type(report).__name__}")

    tv, by_rep, spread = {}, {}, {}
    for j in range(1, J + 1):
        tv[j] = total_variation(stats.pmf(j), analytic[j])
        by_rep[j] = [total_variation(r.pmf(j), analytic[j]) for r in stats.replications]
        spread[j] = _spread(by_rep[j])
    out = ComparisonReport(stats.kind, stats.model_hash, tv, by_rep, spread)

    if isinstance(report, EquilibriumReport):
        for j in range(1, J + 1):
            comp = stats.composition(j)
            reps = stats.composition_by_rep(j)
            for (i, s), p in report.node(j).composition.items():
                out.composition_diff[(j, i, s)] = comp.get((i, s), 0.0) - p
                out.composition_by_rep[(j, i, s)] = [r.get((i, s), 0.0) - p for r in reps]
    else:
        emp = stats.joint_distribution()
        ana = report.node_count_distribution()
        keys = set(emp) | set(ana)
        out.joint_tv = 0.5 * math.fsum(abs(emp.get(k, 0.0) - ana.get(k, 0.0)) for k in keys)
    return out
