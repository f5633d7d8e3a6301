from __future__ import annotations

import json
import math

import numpy as np
import pytest

from fcfs_match import (
    MatchingModel,
    ModelValidationError,
    UnknownIdentifier,
    check_crp,
    check_stability,
    compatible_agents,
    compatible_goods,
    load_model,
    max_stable_rho,
    save_model,
    unique_users,
    validate,
)
from fcfs_match.errors import (
    FrequencySumError,
    IsolatedAgentType,
    NonPositiveFrequency,
    NonPositiveRate,
)

from conftest import make_example3x3, make_single_pair, make_disjoint_pairs, random_stable_model


def test_example3x3_is_valid(example3x3):
    assert validate(example3x3) is example3x3


def test_frequency_sum_error():
    model = MatchingModel(
        agent_types=(("c1", 0.3), ("c2", 0.5), ("c3", 0.3)),
        good_types=(("s1", 0.5), ("s2", 0.5)),
        edges=frozenset({("s1", "c1"), ("s1", "c2"), ("s2", "c3")}),
        lambda_bar=0.5,
        mu_bar=1.0,
    )
    with pytest.raises(ModelValidationError) as exc:
        validate(model)
    assert any(isinstance(i, FrequencySumError) for i in exc.value.issues)


def test_isolated_agent_type_rejected():
    model = MatchingModel(
        agent_types=(("c1", 0.5), ("c2", 0.3), ("c3", 0.2)),
        good_types=(("s1", 0.5), ("s2", 0.5)),
        edges=frozenset({("s1", "c1"), ("s2", "c2")}),
        lambda_bar=0.5,
        mu_bar=1.0,
    )
    with pytest.raises(ModelValidationError) as exc:
        validate(model)
    assert any(isinstance(i, IsolatedAgentType) for i in exc.value.issues)


def test_all_violations_reported_together():
    model = MatchingModel(
        agent_types=(("c1", 0.7), ("c2", -0.1)),
        good_types=(("s1", 1.0),),
        edges=frozenset({("s1", "c1"), ("s9", "c1")}),
        lambda_bar=0.0,
        mu_bar=1.0,
    )
    with pytest.raises(ModelValidationError) as exc:
        validate(model)
    kinds = {type(i) for i in exc.value.issues}
    assert FrequencySumError in kinds
    assert NonPositiveFrequency in kinds
    assert NonPositiveRate in kinds
    assert UnknownIdentifier in kinds
    assert IsolatedAgentType in kinds  # c2 has no edge


def test_compatible_goods_examples(example3x3):
    assert compatible_goods(example3x3, ["c2"]).names == ("s1", "s3")
    assert compatible_goods(example3x3, []).names == ()
    assert compatible_goods(example3x3, ["c1", "c3"]).names == ("s1", "s2", "s3")


def test_compatible_agents_examples(example3x3):
    assert compatible_agents(example3x3, ["s1"]).names == ("c1", "c2")
    assert compatible_agents(example3x3, []).names == ()
    assert compatible_agents(example3x3, ["s2", "s3"]).names == ("c1", "c2", "c3")


def test_unique_users_examples(example3x3):
    assert unique_users(example3x3, ["s1", "s2"]).names == ("c1",)
    assert unique_users(example3x3, ["s1", "s2", "s3"]).names == ("c1", "c2", "c3")
    assert unique_users(example3x3, ["s1"]).names == ()


def test_unknown_identifier_raised(example3x3):
    with pytest.raises(UnknownIdentifier):
        compatible_goods(example3x3, ["nope"])


def test_subset_cached_sums(example3x3):
    sub = example3x3.agent_subset(["c1", "c3"])
    assert math.isclose(sub.freq, 0.5, rel_tol=1e-12)
    assert math.isclose(sub.rate, 0.7 * 0.5, rel_tol=1e-12)


def test_neighborhood_monotonicity():
    rng = np.random.default_rng(7)
    for _ in range(20):
        model = random_stable_model(rng)
        names = model.agent_names
        small = list(names[: len(names) // 2])
        grown = list(names)
        s_small = compatible_goods(model, small)
        s_big = compatible_goods(model, grown)
        assert set(s_small.names) <= set(s_big.names)
        for g_sub in (s_small, s_big):
            assert set(unique_users(model, g_sub).names) <= set(
                compatible_agents(model, g_sub).names
            )


def test_stability_examples(example3x3):
    assert check_stability(example3x3).stable
    hot = make_example3x3(lambda_bar=1.1)
    report = check_stability(hot)
    assert not report.stable
    assert report.witness.names == ("c1", "c2", "c3")
    assert check_stability(make_single_pair()).stable


def test_stability_boundary_counts_as_unstable():
    # lambda_C == mu_S(C) exactly: null-recurrent boundary is reported unstable
    model = make_single_pair(lam=1.0, mu=1.0)
    assert not check_stability(model).stable


def test_stability_monotone_in_lambda_bar():
    rng = np.random.default_rng(11)
    for _ in range(10):
        model = random_stable_model(rng)
        assert check_stability(model).stable
        assert check_stability(model.with_lambda_bar(model.lambda_bar * 0.5)).stable


def test_crp_examples(example3x3):
    assert check_crp(example3x3)
    assert not check_crp(make_disjoint_pairs())
    complete = MatchingModel(
        agent_types=(("c1", 0.6), ("c2", 0.4)),
        good_types=(("s1", 0.2), ("s2", 0.8)),
        edges=frozenset({("s1", "c1"), ("s1", "c2"), ("s2", "c1"), ("s2", "c2")}),
        lambda_bar=0.5,
        mu_bar=1.0,
    )
    assert check_crp(validate(complete))


def test_crp_implies_stable_below_one(example3x3):
    for rho in (0.5, 0.9, 0.99):
        assert check_stability(make_example3x3(lambda_bar=rho)).stable


def test_max_stable_rho_examples(example3x3):
    result = max_stable_rho(example3x3)
    assert result.value == pytest.approx(1.0, abs=1e-12)
    assert result.uncapped == pytest.approx(1.25, abs=1e-12)
    assert max_stable_rho(make_disjoint_pairs()).value == pytest.approx(0.8, abs=1e-12)
    single = max_stable_rho(make_single_pair())
    assert single.value == pytest.approx(1.0, abs=1e-12)
    assert single.uncapped == math.inf


def test_max_stable_rho_is_the_stability_threshold():
    rng = np.random.default_rng(3)
    for _ in range(10):
        model = random_stable_model(rng)
        limit = max_stable_rho(model).value * model.mu_bar
        assert check_stability(model.with_lambda_bar(limit * 0.999)).stable
        assert not check_stability(model.with_lambda_bar(limit * 1.001)).stable


def test_model_json_round_trip(tmp_path, example3x3):
    path = tmp_path / "m.json"
    save_model(example3x3, path)
    again = load_model(path)
    assert again == example3x3
    assert validate(again) is again


def test_load_model_rejects_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ModelValidationError):
        load_model(path)


def test_load_model_rejects_missing_keys(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"agents": []}), encoding="utf-8")
    with pytest.raises(ModelValidationError):
        load_model(path)
