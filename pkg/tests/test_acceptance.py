"""Acceptance criteria, one test each. Every test records a PASS/FAIL line
that is printed in the pytest terminal summary."""

import json
import time

import numpy as np
import pytest

from kellynet import (
    analyze_open,
    balance_check,
    bundled_model,
    closed_oracle,
    compare_to_analytic,
    independence_check,
    interior_states,
    queue_length_pmf,
    simulate_open,
    solve_traffic,
    stationary_distribution,
    visit_rates,
)
from kellynet.cli import main
from kellynet.model import builtin_models_dir, bundled_model_names
from kellynet.open_solver import composition_probability
from kellynet.simulator import SimConfig

HORIZON = 1e5
WARMUP = 1e3
REPS = 5


@pytest.fixture(scope="module")
def sim_runs():
    """Long simulations shared by criteria 3 and 4, with wall-clock times."""
    out = {}
    for name, seed in (("mm1", 2024), ("revisit", 2025)):
        model = bundled_model(name)
        t0 = time.perf_counter()
        stats = simulate_open(model, SimConfig(seed=seed, horizon=HORIZON, warmup=WARMUP, replications=REPS))
        out[name] = (model, stats, time.perf_counter() - t0)
    return out


def test_1_mm1_reduction(record_criterion, tmp_path):
    t0 = time.perf_counter()
    code = main(["analyze-open", "--model", str(builtin_models_dir() / "mm1.json"), "--out", str(tmp_path)])
    elapsed = time.perf_counter() - t0
    pmf = np.array(json.loads((tmp_path / "report.json").read_text())["nodes"][0]["pmf"][:21])
    err = float(np.max(np.abs(pmf - 0.7 * 0.3 ** np.arange(21))))
    ok = code == 0 and err <= 1e-14 and elapsed < 1.0
    record_criterion(1, "M/M/1 reduction", ok, f"max err {err:.2e} (<=1e-14), {elapsed:.3f} s (<1 s)")
    assert ok


def test_2_global_balance(record_criterion):
    t0 = time.perf_counter()
    worst = {}
    for name in ("revisit", "revisit_ps"):
        model = bundled_model(name)
        report = balance_check(model, interior_states(model, 4))
        worst[name] = (report.max_relative_residual, report.states_checked)
    elapsed = time.perf_counter() - t0
    ok = all(r <= 1e-10 for r, _ in worst.values()) and elapsed < 30
    detail = ", ".join(f"{k}: {r:.2e} over {n} states" for k, (r, n) in worst.items())
    record_criterion(2, "global balance, FCFS and PS", ok, f"{detail}, {elapsed:.2f} s (<30 s)")
    assert ok


def test_3_composition(record_criterion, sim_runs):
    model, stats, _ = sim_runs["revisit"]
    rates = visit_rates(model)
    exact = [composition_probability(1, 1, s, rates) for s in (1, 3)]
    comp = stats.composition(1)
    diffs = [abs(comp[(1, s)] - 0.5) for s in (1, 3)]
    ok = exact == [0.5, 0.5] and max(diffs) <= 0.02
    record_criterion(3, "composition at a revisited node", ok,
                     f"analytic {exact}, simulated ({comp[(1, 1)]:.4f}, {comp[(1, 3)]:.4f}), "
                     f"max dev {max(diffs):.4f} (<=0.02)")
    assert ok


def test_4_simulation_vs_pmf(record_criterion, sim_runs):
    worst, elapsed = {}, 0.0
    for name, (model, stats, secs) in sim_runs.items():
        tails = [queue_length_pmf(j, model, c).tail for j, c in enumerate(stats.capacity, start=1)]
        assert max(tails) < 1e-8, f"{name}: capacity leaves analytic tail {max(tails):.1e}"
        worst[name] = compare_to_analytic(stats, analyze_open(model)).max_tv
        elapsed += secs
    ok = all(v <= 0.02 for v in worst.values()) and elapsed < 60
    detail = ", ".join(f"{k}: max TV {v:.4f}" for k, v in worst.items())
    record_criterion(4, "simulated vs analytic pmf", ok, f"{detail} (<=0.02), {elapsed:.1f} s (<60 s)")
    assert ok


def test_5_closed_oracle(record_criterion):
    t0 = time.perf_counter()
    results = {name: closed_oracle(bundled_model(name)) for name in ("cycle2", "tandem12", "switch2")}
    elapsed = time.perf_counter() - t0
    diff = max(r.max_abs_diff for r in results.values())
    res = max(r.stationary_residual for r in results.values())
    ok = diff <= 1e-10 and res <= 1e-10 and elapsed < 10
    record_criterion(5, "closed-network oracle", ok,
                     f"max diff {diff:.2e}, max residual {res:.2e} (<=1e-10), {elapsed:.2f} s (<10 s)")
    assert ok


def test_6_traffic_equations(record_criterion):
    residual, scaling = 0.0, 0.0
    for name in bundled_model_names("closed"):
        model = bundled_model(name)
        t = solve_traffic(model)
        residual = max(residual, t.residual)
        base = stationary_distribution(model, traffic=t).probabilities
        for c in range(1, len(t.chains) + 1):
            scaled = stationary_distribution(model, traffic=t.scaled(c, 10.0)).probabilities
            scaling = max(scaling, float(np.max(np.abs(scaled - base))))
    ok = residual <= 1e-10 and scaling <= 1e-12
    record_criterion(6, "traffic equations and scale invariance", ok,
                     f"residual {residual:.2e} (<=1e-10), scaling change {scaling:.2e} (<=1e-12)")
    assert ok


def test_7_determinism(record_criterion, tmp_path):
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        code = main(["simulate", "--model", str(builtin_models_dir() / "revisit.json"), "--seed", "42",
                     "--horizon", "1e4", "--reps", "2", "--out", str(out)])
        assert code == 0
        outs.append([(out / f).read_bytes() for f in ("stats.json", "histograms.csv")])
    ok = outs[0] == outs[1]
    record_criterion(7, "deterministic simulation output", ok, "stats.json and histograms.csv byte-identical")
    assert ok


def test_8_independence(record_criterion):
    errors = {name: independence_check(bundled_model(name), n_bound=5).max_error
              for name in bundled_model_names("open")}
    worst = max(errors.values())
    ok = worst <= 1e-12
    record_criterion(8, "product-form independence", ok,
                     f"max error {worst:.2e} over {len(errors)} models (<=1e-12)")
    assert ok
