import io
import json
import math

import numpy as np
import pytest

from kellynet import (
    InstabilityError,
    analyze_open,
    bundled_model,
    closed_model,
    compare_to_analytic,
    open_model,
    simulate,
    simulate_closed,
    simulate_open,
    solve_traffic,
    stationary_distribution,
)
from kellynet.simulator import (
    CapacityError,
    OccupancyStats,
    ReplicationStats,
    SimConfig,
    capacity_for_tail,
    total_variation,
)


def cfg(seed=1, horizon=2e4, warmup=500.0, reps=1, **kw):
    return SimConfig(seed=seed, horizon=horizon, warmup=warmup, replications=reps, **kw)


class TestConfig:
    @pytest.mark.parametrize("kw", [
        dict(horizon=10.0, warmup=10.0),
        dict(horizon=10.0, warmup=-1.0),
        dict(horizon=10.0, replications=0),
        dict(horizon=10.0, seed=-1),
        dict(horizon=10.0, seed=2**64),
        dict(horizon=10.0, on_block="drop"),
    ])
    def test_rejects(self, kw):
        kw.setdefault("seed", 0)
        with pytest.raises(ValueError):
            SimConfig(**kw)

    def test_capacity_for_tail(self, mm1):
        # P[N >= c] = 0.3^c; first c below 1e-8 is 16
        assert capacity_for_tail(mm1) == (16,)


class TestOpen:
    def test_no_arrivals_freezes_empty(self):
        model = open_model([[1]], [0.0], sim_capacity=[5])
        stats = simulate_open(model, cfg(horizon=100.0, warmup=0.0))
        assert stats.pmf(1).tolist() == [1.0, 0, 0, 0, 0, 0]
        assert sum(stats.event_counts().values()) == 0

    def test_deterministic(self, revisit):
        a = simulate_open(revisit, cfg(seed=42, horizon=2000.0, warmup=100.0, reps=2))
        b = simulate_open(revisit, cfg(seed=42, horizon=2000.0, warmup=100.0, reps=2))
        c = simulate_open(revisit, cfg(seed=43, horizon=2000.0, warmup=100.0, reps=2))
        assert a.to_dict() == b.to_dict()
        assert a.to_dict() != c.to_dict()

    def test_parallel_matches_sequential(self, mm1):
        seq = simulate_open(mm1, cfg(horizon=3000.0, reps=3, workers=1))
        par = simulate_open(mm1, cfg(horizon=3000.0, reps=3, workers=3))
        assert seq.to_dict() == par.to_dict()

    def test_mm1_empty_probability(self, mm1):
        stats = simulate_open(mm1, cfg(seed=7, horizon=1e5, warmup=1e3))
        assert stats.pmf(1)[0] == pytest.approx(0.7, abs=0.01)

    def test_histogram_mass_is_observed_time(self, revisit):
        stats = simulate_open(revisit, cfg(horizon=3000.0, warmup=250.0, reps=2))
        for r in stats.replications:
            for h in r.hist:
                assert math.fsum(h) == pytest.approx(2750.0, rel=1e-12)
        assert stats.total_time == pytest.approx(5500.0)

    def test_arrival_rate_fidelity(self, revisit):
        # arrivals are Poisson(nu) whatever the state; rejected ones count too
        T = 4e4
        model = revisit.with_capacity([3, 3, 3])
        r = simulate_open(model, cfg(seed=3, horizon=T, warmup=0.0)).replications[0]
        assert r.rejected["ARRIVE"] > 0
        for i, nu in ((1, 0.2), (2, 0.25)):
            assert abs(r.arrivals[i] - nu * T) < 3 * math.sqrt(nu * T)
        assert sum(r.arrivals.values()) == r.events["ARRIVE"]

    def test_rejections_counted(self, mm1):
        stats = simulate_open(mm1, cfg(horizon=5000.0, capacity=(1,)))
        r = stats.replications[0]
        assert r.rejected["ARRIVE"] > 0
        assert r.rejected["ARRIVE"] <= r.events["ARRIVE"]
        assert len(r.hist[0]) == 2

    def test_blocking_as_error(self, mm1):
        with pytest.raises(CapacityError):
            simulate_open(mm1, cfg(horizon=5000.0, capacity=(1,), on_block="error"))

    def test_auto_capacity_noted(self):
        model = open_model([[1]], [0.3])
        stats = simulate_open(model, cfg(horizon=100.0, warmup=0.0))
        assert stats.capacity == (16,)
        assert any("no sim_capacity" in n for n in stats.notes)

    def test_unstable_refused(self):
        model = open_model([[1, 2, 2]], [0.6], sim_capacity=[10, 10])
        with pytest.raises(InstabilityError):
            simulate_open(model, cfg(horizon=100.0, warmup=0.0))
        stats = simulate_open(model, cfg(horizon=100.0, warmup=0.0, allow_unstable=True))
        assert any("unstable" in n for n in stats.notes)

    def test_trajectory_lines(self, mm1):
        buf = io.StringIO()
        simulate_open(mm1, cfg(horizon=50.0, warmup=0.0), trajectory=buf)
        lines = [json.loads(x) for x in buf.getvalue().splitlines()]
        assert lines[0] == {"replication": 0, "t": 0.0, "nodes": [[]]}
        times = [x["t"] for x in lines]
        assert times == sorted(times) and times[-1] < 50.0


class TestClosed:
    def test_symmetric_cycle(self):
        stats = simulate_closed(bundled_model("cycle2"), cfg(seed=5, horizon=1e5, warmup=1e3))
        joint = stats.joint_distribution()
        assert joint[(1, 1)] == pytest.approx(1 / 3, abs=0.01)

    def test_single_customer_time_shares(self):
        model = closed_model([1.0, 2.0, 0.5], {(1, 1, 2, 1): 1.0, (2, 1, 3, 1): 1.0, (3, 1, 1, 1): 1.0}, [1])
        t = solve_traffic(model)
        w = np.array([t.alpha[(j, 1)] / model.rate(j) for j in (1, 2, 3)])
        expected = w / w.sum()
        stats = simulate_closed(model, cfg(seed=9, horizon=1e5, warmup=100.0))
        got = [stats.pmf(j)[1] for j in (1, 2, 3)]
        assert got == pytest.approx(expected.tolist(), abs=0.01)

    def test_symmetric_nodes_look_alike(self):
        model = closed_model([1.0] * 3, {(1, 1, 2, 1): 1.0, (2, 1, 3, 1): 1.0, (3, 1, 1, 1): 1.0}, [2])
        stats = simulate_closed(model, cfg(seed=11, horizon=1e5, warmup=1e3))
        pmfs = [stats.pmf(j) for j in (1, 2, 3)]
        for p in pmfs[1:]:
            assert np.max(np.abs(p - pmfs[0])) < 0.02

    def test_conservation_in_debug_mode(self):
        stats = simulate_closed(bundled_model("two_chains"), cfg(horizon=2000.0, debug=True))
        for r in stats.replications:
            assert math.fsum(r.hist[0]) == pytest.approx(1500.0)

    def test_dispatch(self):
        stats = simulate(bundled_model("cycle2"), cfg(horizon=100.0, warmup=0.0))
        assert stats.kind == "closed" and stats.capacity == (2, 2)


def _synthetic(report, T=10.0):
    hist = [[p * T for p in node.pmf] for node in report.nodes]
    rep = ReplicationStats(0, T, hist, {}, {}, {}, {})
    return OccupancyStats("open", report.model_hash, 0, T, 0.0, tuple(len(h) - 1 for h in hist), [rep])


class TestCompare:
    def test_tv_folds_tail(self):
        assert total_variation([0.5, 0.5], [0.5, 0.25, 0.25]) == 0.0
        assert total_variation([1.0, 0.0], [0.5, 0.5]) == pytest.approx(0.5)

    def test_synthetic_stats_have_zero_distance(self, revisit):
        report = analyze_open(revisit, n_max=40)
        cmp = compare_to_analytic(_synthetic(report), report)
        assert cmp.max_tv <= 1e-12

    def test_model_mismatch(self, mm1, revisit):
        stats = _synthetic(analyze_open(mm1))
        with pytest.raises(ValueError, match="different models"):
            compare_to_analytic(stats, analyze_open(revisit))

    def test_mm1_tv(self, mm1):
        stats = simulate_open(mm1, cfg(seed=2, horizon=1e5, warmup=1e3))
        assert compare_to_analytic(stats, analyze_open(mm1)).max_tv <= 0.02

    def test_closed_comparison(self):
        model = bundled_model("cycle2")
        stats = simulate_closed(model, cfg(seed=4, horizon=5e4, warmup=1e3, reps=2))
        cmp = compare_to_analytic(stats, stationary_distribution(model))
        assert cmp.max_tv < 0.02 and cmp.joint_tv < 0.02
        assert len(cmp.tv_by_rep[1]) == 2

    def test_composition_shares(self, revisit):
        stats = simulate_open(revisit, cfg(seed=8, horizon=3e4, warmup=1e3))
        comp = stats.composition(1)
        assert comp[(1, 1)] == pytest.approx(0.5, abs=0.03)
        assert comp[(1, 3)] == pytest.approx(0.5, abs=0.03)

    def test_merge_is_order_independent(self, mm1):
        a = simulate_open(mm1, cfg(seed=1, horizon=2000.0))
        b = simulate_open(mm1, cfg(seed=2, horizon=2000.0))
        ab, ba = a.merge(b), b.merge(a)
        assert np.array_equal(ab.pmf(1), ba.pmf(1))
        assert ab.total_time == pytest.approx(2 * a.total_time)
        with pytest.raises(ValueError):
            a.merge(simulate_open(mm1, cfg(seed=1, horizon=3000.0)))

    def test_warmup_sensitivity(self, mm1):
        report = analyze_open(mm1)
        tvs = []
        for warmup in (1e3, 2e3):
            stats = simulate_open(mm1, cfg(seed=21, horizon=2e4, warmup=warmup, reps=4))
            tvs.append(compare_to_analytic(stats, report))
        se = np.std(tvs[0].tv_by_rep[1], ddof=1) / math.sqrt(4)
        assert abs(tvs[0].tv[1] - tvs[1].tv[1]) < max(se, 1e-3)
