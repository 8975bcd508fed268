import numpy as np
import pytest

from conftest import random_instance, sim_config
from errors import BudgetExceededError, DomainError
from experiment import run_episode
from oracle import exhaustive_best, score_sequence, with_horizon
from policies import BDashPolicy, FixedPolicy, GreedyPolicy, RandomPolicy
from qoe import QoeWeights
from rl_agent import ActorCriticPolicy, TrainConfig, init_params, train
from sim_core import Action


def baseline_policies(config, rng):
    params = init_params(config.observation_dim, config.num_actions, (8, 8), seed=int(rng.integers(1000)))
    params.actor_biases[-1] = rng.normal(size=config.num_actions)
    return [BDashPolicy(), GreedyPolicy(), GreedyPolicy(allow_enhance=False), RandomPolicy(seed=int(rng.integers(1000))),
            FixedPolicy(Action.from_index(int(rng.integers(config.num_actions)))), ActorCriticPolicy(params)]


def test_oracle_dominates_on_short_instances():
    rng = np.random.default_rng(99)
    weights = QoeWeights(1, 1, 30)
    for _ in range(50):
        config = random_instance(rng, num_chunks=3, num_bitrates=int(rng.integers(1, 6)))
        result = exhaustive_best(config, weights)
        for policy in baseline_policies(config, rng):
            _, breakdown = run_episode(config, policy, weights)
            assert breakdown.weighted_total <= result.best_qoe


@pytest.fixture(scope="module")
def trained_agent():
    """Agent trained briefly on random five-chunk, ten-action instances"""
    config = TrainConfig(episodes=100, hidden=(16, 16), seed=4, log_every=0)
    params, _ = train(config, lambda rng: random_instance(rng, num_chunks=5, num_bitrates=5), QoeWeights(1, 1, 30))
    return ActorCriticPolicy(params, name='trained')


@pytest.mark.slow
def test_oracle_dominates_every_policy(trained_agent):
    rng = np.random.default_rng(2024)
    weights = QoeWeights(1, 1, 30)
    for _ in range(50):
        config = random_instance(rng, num_chunks=5, num_bitrates=5)
        assert config.num_actions == 10
        result = exhaustive_best(config, weights)
        assert result.evaluated == 10 ** 5
        for policy in [trained_agent, *baseline_policies(config, rng)]:
            _, breakdown = run_episode(config, policy, weights)
            assert breakdown.weighted_total <= result.best_qoe


def test_best_sequence_reproduces_best_qoe():
    rng = np.random.default_rng(3)
    for _ in range(10):
        config = random_instance(rng, num_chunks=3, num_bitrates=3)
        result = exhaustive_best(config, QoeWeights(1, 1, 60))
        assert score_sequence(config, QoeWeights(1, 1, 60), result.best_actions).weighted_total == result.best_qoe
        assert result.breakdown.weighted_total == result.best_qoe


def test_enumerates_every_sequence_of_a_five_chunk_video():
    rng = np.random.default_rng(21)
    config = random_instance(rng, num_chunks=5, num_bitrates=5)
    weights = QoeWeights(1, 1, 30)
    result = exhaustive_best(config, weights, workers=4)
    assert result.evaluated == 10 ** 5
    assert len(result.best_actions) == 5
    for policy in baseline_policies(config, rng):
        assert run_episode(config, policy, weights)[1].weighted_total <= result.best_qoe


def test_budget_is_enforced():
    with pytest.raises(BudgetExceededError):
        exhaustive_best(sim_config(num_chunks=7), QoeWeights())
    with pytest.raises(BudgetExceededError):
        exhaustive_best(sim_config(num_chunks=3), QoeWeights(), budget=999)


def test_single_chunk_picks_lowest_index_among_ties():
    config = sim_config(num_chunks=1)
    result = exhaustive_best(config, QoeWeights())
    row = config.mpd.row(1)
    assert row[8] == row[9] == row.max()
    assert result.best_actions == (8,)
    assert result.best_qoe == pytest.approx(row[8])


def test_zero_weights_keep_the_first_sequence():
    result = exhaustive_best(sim_config(num_chunks=3), QoeWeights(0, 0, 0))
    assert result.best_actions == (0, 0, 0)
    assert result.best_qoe == 0.0


def test_workers_do_not_change_the_answer():
    config = random_instance(np.random.default_rng(17), num_chunks=3, num_bitrates=4)
    serial = exhaustive_best(config, QoeWeights())
    parallel = exhaustive_best(config, QoeWeights(), workers=4)
    assert (serial.best_actions, serial.best_qoe, serial.evaluated) == \
           (parallel.best_actions, parallel.best_qoe, parallel.evaluated)


def test_horizon_truncates_the_video():
    config = sim_config(num_chunks=6, rate=2.5, profile='medium')
    result = exhaustive_best(config, QoeWeights(), horizon=2)
    assert result.evaluated == 100
    assert with_horizon(config, 2).mpd.num_chunks == 2
    assert with_horizon(config, None) is config
    with pytest.raises(DomainError):
        with_horizon(config, 0)
    with pytest.raises(DomainError):
        with_horizon(config, 7)


def test_result_serializes():
    result = exhaustive_best(sim_config(num_chunks=2), QoeWeights())
    payload = result.to_dict()
    assert payload['evaluated'] == 100
    assert payload['best_actions'] == list(result.best_actions)
    assert payload['breakdown']['num_chunks'] == 2
