import json

import pytest

from kellynet import (
    ModelParseError,
    PolicyKind,
    ServicePolicy,
    builtin_policy,
    bundled_model,
    closed_model,
    open_model,
    validate_closed,
    validate_open,
)
from kellynet.model import (
    bundled_model_names,
    check_builtin_rows,
    computed_chains,
    model_fingerprint,
    model_from_dict,
    model_to_dict,
)


def explicit(gamma, delta, table=(), default=1.0):
    return ServicePolicy(PolicyKind.EXPLICIT, tuple(table), default,
                         tuple(map(tuple, gamma)), tuple(map(tuple, delta)))


class TestValidateOpen:
    def test_minimal_model_is_valid(self, fcfs):
        assert validate_open(open_model([[1]], [0.5], policies=[fcfs])) == []

    def test_gamma_row_sum(self):
        pol = explicit([[1.0], [0.6, 0.6]], [[1.0], [0.5, 0.5]])
        problems = validate_open(open_model([[1]], [0.5], policies=[pol]))
        assert len(problems) == 1
        assert "gamma row 2 sums to 1.2" in problems[0]

    def test_route_node_out_of_range(self):
        model = open_model([[1, 2, 4]], [0.5], J=3)
        problems = validate_open(model)
        assert len(problems) == 1
        assert "routes[type 1].nodes[3]" in problems[0] and "node 4" in problems[0]

    def test_nonpositive_rate_and_mu(self):
        pol = builtin_policy("ps", [0.0], 1.0)
        problems = validate_open(open_model([[1]], [0.0], policies=[pol]))
        assert any("nu[type 1]" in p for p in problems)
        assert any("mu.table[1]" in p for p in problems)

    def test_explicit_rows_must_cover_capacity(self):
        pol = explicit([[1.0], [1.0, 0.0]], [[1.0], [0.0, 1.0]])
        problems = validate_open(open_model([[1]], [0.5], policies=[pol], sim_capacity=[3]))
        assert any("sim_capacity is 3" in p for p in problems)

    def test_idempotent(self):
        pol = explicit([[1.0], [0.6, 0.6]], [[1.0], [0.2, 0.2]])
        model = open_model([[1, 5]], [-1.0], policies=[pol], J=1)
        first = validate_open(model)
        assert first == validate_open(model)
        assert len(first) == 4


class TestValidateClosed:
    def test_cyclic_tandem_valid(self):
        model = closed_model([1.0, 1.0], {(1, 1, 2, 1): 1.0, (2, 1, 1, 1): 1.0}, [2])
        assert validate_closed(model) == []

    def test_row_sum(self):
        model = closed_model([1.0, 1.0], {(1, 1, 2, 1): 0.9, (2, 1, 1, 1): 1.0}, [2])
        problems = validate_closed(model)
        assert problems == ["switch row (1,1) sums to 0.9"]

    def test_chain_closure(self):
        switch = {(1, 1, 2, 2): 1.0, (2, 2, 1, 1): 1.0}
        model = closed_model([1.0, 1.0], switch, {1: 1, 2: 1}, chains=[[(1, 1)], [(2, 2)]])
        problems = validate_closed(model)
        assert any(p.startswith("chain closure") for p in problems)

    def test_population_positivity(self):
        model = closed_model([1.0, 1.0], {(1, 1, 2, 1): 1.0, (2, 1, 1, 1): 1.0}, [0])
        assert validate_closed(model) == ["populations[1]: population 0 must be >= 1"]

    def test_missing_and_extra_population(self):
        model = closed_model([1.0, 1.0], {(1, 1, 2, 1): 1.0, (2, 1, 1, 1): 1.0}, {2: 1})
        problems = validate_closed(model)
        assert "populations: chain 1 has no population" in problems
        assert any("no such chain" in p for p in problems)

    def test_pair_without_outgoing_row(self):
        model = closed_model([1.0, 1.0], {(1, 1, 2, 1): 1.0}, [1])
        assert "switch row (2,1) sums to 0" in validate_closed(model)

    def test_idempotent(self):
        model = closed_model([1.0, -1.0], {(1, 1, 2, 1): 0.5}, [3, 4])
        assert validate_closed(model) == validate_closed(model)


class TestBuiltinPolicy:
    def test_ps(self):
        pol = builtin_policy("ps")
        assert [pol.gamma(4, l) for l in range(1, 5)] == [0.25] * 4
        assert [pol.delta(4, l) for l in range(1, 5)] == [0.25] * 4

    def test_fcfs_joins_tail(self):
        pol = builtin_policy(PolicyKind.FCFS)
        assert pol.delta(3, 3) == 1.0
        assert pol.delta(3, 1) == pol.delta(3, 2) == 0.0
        assert pol.gamma(3, 1) == 1.0

    def test_lcfs_pr_head(self):
        pol = builtin_policy("LCFS_PR")
        assert pol.gamma(2, 1) == 1.0 and pol.delta(2, 1) == 1.0
        assert pol.gamma(2, 2) == 0.0 and pol.delta(2, 2) == 0.0

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown policy"):
            builtin_policy("round_robin")

    @pytest.mark.parametrize("kind", ["fcfs", "lcfs_pr", "ps"])
    def test_row_sums_up_to_bound(self, kind):
        assert check_builtin_rows(builtin_policy(kind), 64) == []

    def test_mu_table_then_default(self):
        pol = builtin_policy("fcfs", [2.0, 3.0], 0.5)
        assert [pol.mu(l) for l in (1, 2, 3, 10)] == [2.0, 3.0, 0.5, 0.5]

    def test_symmetry_flag(self):
        assert builtin_policy("ps").symmetric
        assert not builtin_policy("fcfs").symmetric
        assert explicit([[1.0], [0.5, 0.5]], [[1.0], [0.5, 0.5]]).symmetric

    def test_explicit_row_past_end(self):
        pol = explicit([[1.0]], [[1.0]])
        with pytest.raises(ValueError, match="n <= 1"):
            pol.gamma_row(2)


class TestChains:
    def test_components_and_irreducibility(self):
        model = bundled_model("two_chains")
        chains, ok = computed_chains(model)
        assert chains == [((1, 1), (2, 1)), ((1, 2), (2, 2))]
        assert ok == [True, True]

    def test_absorbing_pair_is_reducible(self):
        model = closed_model([1.0, 1.0], {(1, 1, 2, 1): 1.0, (2, 1, 2, 1): 1.0}, [1])
        chains, ok = computed_chains(model)
        assert chains == [((1, 1), (2, 1))]
        assert ok == [False]

    def test_declared_chain_not_connected(self):
        switch = {(1, 1, 2, 1): 1.0, (2, 1, 1, 1): 1.0, (1, 2, 1, 2): 1.0}
        model = closed_model([1.0, 1.0], switch, [1], chains=[[(1, 1), (2, 1), (1, 2)]])
        assert any("not connected" in p for p in validate_closed(model))


class TestJson:
    def test_round_trip_bundled(self):
        for name in bundled_model_names():
            model = bundled_model(name)
            again = model_from_dict(json.loads(json.dumps(model_to_dict(model))))
            assert again == model
            assert model_fingerprint(again) == model_fingerprint(model)

    def test_bundled_models_are_valid(self):
        for name in bundled_model_names("open"):
            assert validate_open(bundled_model(name)) == []
        for name in bundled_model_names("closed"):
            assert validate_closed(bundled_model(name)) == []

    @pytest.mark.parametrize("mutate, message", [
        (lambda d: d.update(extra=1), "unknown key"),
        (lambda d: d["nodes"][0].update(colour="red"), "unknown key"),
        (lambda d: d["nodes"][0].pop("mu"), "missing key"),
        (lambda d: d["nodes"][0].update(policy="sjf"), "unknown policy"),
        (lambda d: d["types"][0].update(nu="fast"), "expected a number"),
        (lambda d: d["nodes"][0].update(id=2), "ids must be 1..1"),
        (lambda d: d.update(kind="mixed"), "expected 'open' or 'closed'"),
    ])
    def test_strict_open_parsing(self, mutate, message):
        doc = model_to_dict(bundled_model("mm1"))
        mutate(doc)
        with pytest.raises(ModelParseError, match=message):
            model_from_dict(doc)

    def test_strict_closed_parsing(self):
        doc = model_to_dict(bundled_model("cycle2"))
        doc["switch"][0]["weight"] = 1
        with pytest.raises(ModelParseError, match="unknown key"):
            model_from_dict(doc)

    def test_gamma_only_for_explicit(self):
        doc = model_to_dict(bundled_model("mm1"))
        doc["nodes"][0]["gamma"] = [[1.0]]
        with pytest.raises(ModelParseError, match="only allowed for explicit"):
            model_from_dict(doc)

    def test_explicit_parsed_then_validated(self):
        from kellynet import load_model
        from pathlib import Path
        model = load_model(Path(__file__).parent / "data" / "bad_gamma.json")
        assert model.policy(1).kind is PolicyKind.EXPLICIT
        assert validate_open(model) == ["nodes[1].gamma: gamma row 2 sums to 1.2"]

    def test_declared_chains_parsed(self):
        doc = model_to_dict(bundled_model("two_chains"))
        doc["chains"] = {"2": [[1, 2], [2, 2]], "1": [[1, 1], [2, 1]]}
        model = model_from_dict(doc)
        assert model.chain_list() == [((1, 1), (2, 1)), ((1, 2), (2, 2))]
        assert validate_closed(model) == []

    def test_fingerprint_ignores_name(self):
        a = open_model([[1]], [0.3], name="a")
        b = open_model([[1]], [0.3], name="b")
        assert model_fingerprint(a) == model_fingerprint(b)
        assert model_fingerprint(a) != model_fingerprint(open_model([[1]], [0.31]))
