import numpy as np
import pytest

import cbandit


def small(seed=3, samples=800, arms=4):
    return cbandit.generate(num_samples=samples, num_arms=arms, num_binary=3, num_continuous=3,
                            num_informative=2, behavior_strength=0.8, seed=seed)


def test_generate_is_deterministic():
    a, _ = small()
    b, _ = small()
    assert len(a) == 800
    assert np.array_equal(a.contexts, b.contexts)
    assert a.actions == b.actions
    assert a.arm_names == ["arm0", "arm1", "arm2", "arm3"]


def test_tipw_arithmetic_and_tau_bound():
    pi = np.array([[1.0, 0.0]])
    p = np.array([[0.5, 0.5]])
    est = cbandit.value_tipw(pi, [0], np.array([1.0]), p, 0.0)
    assert est.mean == pytest.approx(2.0)
    assert est.estimator == "IPW"
    with pytest.raises(ValueError, match="tau < 1/k"):
        cbandit.value_tipw(pi, [0], np.array([1.0]), p, 0.5)
    assert cbandit.clip_propensity(0.01, 0.02, 10) == 0.02


def test_dr_with_zero_model_matches_tipw():
    data, truth = small()
    p = truth.propensity_matrix(data)
    pi = np.full(p.shape, 0.25)
    r = data.rewards
    dr = cbandit.value_dr(pi, data.actions, r, np.zeros_like(p), p, 0.05)
    ipw = cbandit.value_tipw(pi, data.actions, r, p, 0.05)
    assert dr.mean == pytest.approx(ipw.mean)


def test_learning_pipeline():
    data, truth = small(samples=1500)
    pm = cbandit.fit_multinomial_logit(data)
    rm = cbandit.fit_reward_models(data)
    props = pm.predict(data)
    assert np.allclose(props.sum(axis=1), 1.0)
    imputed = cbandit.impute_rewards(data.actions, data.rewards, "DR", rm.predict(data), props, 0.05)
    policy = cbandit.fit_policy(imputed, data)
    arms = policy.decide(data)
    assert len(arms) == 1500 and max(arms) < 4
    assert len(policy.ranking()) == 6
    tree = cbandit.fit_offset_tree(data, props, 0.05)
    assert tree.depth == 2


def test_gbm_and_oracle():
    data, truth = small(samples=600)
    model, balance = cbandit.fit_gbm_propensity(data, max_iterations=60)
    assert 1 <= model.chosen_iteration <= 60
    assert "iteration_curve" in balance
    values = truth.oracle_values(n_mc=5000, seed=1)
    assert values["optimal"][0] >= values["random"][0]


def test_experiment_and_ttest():
    data, _ = small()
    result, table = cbandit.run_experiment(data, {"propensity": "logit", "folds": 3, "taus": [0.0]})
    assert len(result["cells"]) == 5
    assert "DR" in table
    t = cbandit.t_test_independent([10, 11, 12], [0, 1, 2])
    assert t["t"] == pytest.approx(12.247, rel=1e-4)


def test_from_arrays_round_trip():
    x = np.array([[0.0, 1.0], [1.0, 0.5], [0.0, 0.2]])
    d = cbandit.Dataset.from_arrays(x, [0, 1, 1], [1, 0, 1], binary=[True, False], arm_names=["a", "b"])
    assert np.array_equal(d.contexts, x)
    assert d.feature_names == ["x0", "x1"]
    with pytest.raises(ValueError):
        cbandit.Dataset.from_arrays(x, [0, 1], [1, 0, 1], arm_names=["a", "b"])
