"""Off-policy evaluation and learning for contextual bandits."""

import json

from ._cbandit import (
    DataError,
    Dataset,
    FitError,
    GroundTruth,
    LinearPolicy,
    OffsetTreePolicy,
    PolicyValueEstimate,
    PropensityModel,
    RewardModel,
    clip_propensity,
    fit_gbm_propensity,
    fit_multinomial_logit,
    fit_offset_tree,
    fit_policy,
    fit_reward_models,
    impute_rewards,
    value_dm,
    value_dr,
    value_tipw,
)
from . import _cbandit

__all__ = [
    "DataError",
    "Dataset",
    "FitError",
    "GroundTruth",
    "LinearPolicy",
    "OffsetTreePolicy",
    "PolicyValueEstimate",
    "PropensityModel",
    "RewardModel",
    "clip_propensity",
    "fit_gbm_propensity",
    "fit_multinomial_logit",
    "fit_offset_tree",
    "fit_policy",
    "fit_reward_models",
    "generate",
    "impute_rewards",
    "run_experiment",
    "t_test_independent",
    "value_dm",
    "value_dr",
    "value_tipw",
]


def generate(**config):
    """Synthetic logged data; keyword arguments follow the simulator config keys."""
    return _cbandit._generate(json.dumps(config))


def run_experiment(data, config=None):
    """k-fold benchmark. Returns (result dict, markdown table)."""
    result, table = _cbandit._run_experiment(data, json.dumps(config or {}))
    return json.loads(result), table


def t_test_independent(a, b, alpha=0.05):
    return json.loads(_cbandit._t_test_independent(list(a), list(b), alpha))
