import json
import math
import random

import pytest

import rpclink


def test_model_formulas_match_python():
    assert rpclink.appearance_prob(0.1, 10) == pytest.approx(1 - 0.9**10, rel=1e-12)
    y = 1 - (1 - 1e-4) ** 450
    assert rpclink.exclusion_prob(1e-4, [450, 450]) == pytest.approx(1 - y * y, rel=1e-12)
    assert rpclink.exclusion_prob(0.0, [3, 3]) == 1.0
    f1 = 1 - (1 - 0.9**10) * (1 - 0.9**20)
    assert rpclink.success_rate(0.9, 3, [0.1], [10, 20]) == pytest.approx(0.729 * f1, rel=1e-12)


def test_threshold_round_trip():
    theta = rpclink.transacting_threshold(3, 12.0, 0.01)
    assert theta == pytest.approx(-math.log(0.99) / 36.0, rel=1e-12)
    assert rpclink.window_transacting_probability(theta, 3, 12.0) == pytest.approx(0.01, abs=1e-12)


def test_interval_estimates():
    assert rpclink.estimate_k("MetaMask")["k"] == 3
    assert rpclink.estimate_k("Electrum")["theoretical_k"] == 1
    torus = rpclink.estimate_k("Torus", cycle=20.0)
    assert (torus["theoretical_k"], torus["k"]) == (51, 60)
    assert len(rpclink.profiles()) == 9


def test_ledger_windows_and_intersection(tmp_path):
    ledger = rpclink.Ledger.synthesize(300, 0.5, duration=3600, seed=1)
    assert len(ledger) == 300
    path = tmp_path / "l.jsonl"
    ledger.save(str(path))
    again = rpclink.Ledger.load(str(path))
    assert again.transaction_count == ledger.transaction_count

    expected = set()
    for i in range(48, 51):
        expected.update(ledger.block(i)[2])
    assert set(ledger.candidate_set(600.0, 3)) == expected

    assert rpclink.intersect([["a", "b"], ["b", "c"]]) == ["b"]
    assert rpclink.intersect([["z", "y"]]) == ["y", "z"]
    stats = ledger.measure(3)
    assert stats["total_transactions"] == ledger.transaction_count
    assert sum(stats["counts"].values()) == ledger.transaction_count


def test_attack_outcome_shape():
    ledger = rpclink.Ledger.synthesize(300, 0.5, duration=3600, seed=1)
    out = rpclink.attack(ledger, [600.0, 1800.0, 3000.0], 3)
    assert out["code"] in {"unique", "active_target", "ambiguous_normal", "empty_intersection"}
    assert len(out["windows"]) == 3
    manual = rpclink.intersect([ledger.candidate_set(t, 3) for t in (600.0, 1800.0, 3000.0)])
    unfiltered = rpclink.attack(ledger, [600.0, 1800.0, 3000.0], 3, filter=False)
    assert sorted(unfiltered["candidates"]) == manual or unfiltered["code"] == "unique"


def test_expected_success_is_reproducible():
    ledger = rpclink.Ledger.synthesize(2000, 1.0, duration=7200, seed=2)
    a = rpclink.expected_success(ledger, 3, 0.9, 3, samples=20000, seed=4)
    b = rpclink.expected_success(ledger, 3, 0.9, 3, samples=20000, seed=4)
    assert a.expected_p == b.expected_p
    assert 0.0 <= a.expected_p <= 0.729 + 1e-12
    assert a.to_dict()["samples"] == 20000


def test_detection_round_trip():
    trained = rpclink.train_classifier("MetaMask", radius=2, per_class=300, trees=20, seed=3)
    assert trained["holdout"]["accuracy"] > 0.95
    session = rpclink.synth_traffic("MetaMask", 1, 4, seed=9)[0]
    hits = rpclink.detect("MetaMask", trained["classifier"], session["csv"], session["flows"])
    assert hits == session["t_q"]


SCENARIO = """
name = "py"
seed = 3
trials = 3
alpha = 1.0
analytic_samples = 5000
[ledger]
num_users = 2000
rate = 1.0
duration = 14400.0
seed = 2
"""


def test_experiment_is_deterministic(tmp_path):
    a = rpclink.run_experiment(SCENARIO)
    b = rpclink.run_experiment(SCENARIO)
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    assert a["trials"] == 3
    summary = rpclink.run_experiment_to_directory(SCENARIO, str(tmp_path / "run"))
    assert summary["success_rate"] == a["success_rate"]
    assert (tmp_path / "run" / "report.json").exists()


def test_errors_carry_a_kind():
    with pytest.raises(rpclink.RpclinkError) as info:
        rpclink.scenario("trials = 1\nnot_a_key = 2\n")
    assert info.value.kind == "invalid_config"
    with pytest.raises(rpclink.RpclinkError) as info:
        rpclink.estimate_k("NoSuchWallet")
    assert isinstance(info.value, RuntimeError)


def test_intersection_properties():
    rng = random.Random(5)
    for _ in range(200):
        rounds = [[f"p{rng.randrange(30)}" for _ in range(12)] for _ in range(4)]
        result = set(rpclink.intersect(rounds))
        assert result == set.intersection(*map(set, rounds))
        assert rpclink.intersect(rounds[::-1]) == sorted(result)
