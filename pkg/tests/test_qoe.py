import numpy as np
import pytest

from conftest import sim_config
from errors import ConfigError, DomainError
from qoe import WEIGHT_PRESETS, QoeWeights, chunk_reward, episode_qoe
from sim_core import StepOutcome, simulate


def outcome(chunk_index=2, psnr=37.2, bitrate=2.0, prev_bitrate=2.0, rebuffer=0.0) -> StepOutcome:
    return StepOutcome(chunk_index=chunk_index, action_index=0, bitrate_index=0, enhance=0, psnr=psnr,
                       rebuffer=rebuffer, bitrate=bitrate, prev_bitrate=prev_bitrate, throughput=4.0,
                       t_download=0.0, download_time=0.5, t_enhance=0.5, enhance_time=0.0, t_play=0.5,
                       buffer_download=0, buffer_playback=0, done=False)


@pytest.mark.parametrize("weights, out, expected", [
    ((1, 1, 30), outcome(psnr=37.20), 37.20),
    ((1, 1, 30), outcome(psnr=35.68, bitrate=4.0, prev_bitrate=2.0, rebuffer=0.1), 30.68),
    ((0, 0, 1), outcome(psnr=40.0, bitrate=3.5, prev_bitrate=2.0, rebuffer=0.5), -0.5),
])
def test_chunk_reward(weights, out, expected):
    assert chunk_reward(QoeWeights(*weights), out) == pytest.approx(expected)


def test_first_chunk_pays_no_variation():
    assert chunk_reward(QoeWeights(), outcome(chunk_index=1, psnr=35.0, bitrate=4.0, prev_bitrate=0.0)) == 35.0


def test_single_chunk_episode():
    result = episode_qoe(QoeWeights(1, 1, 30), [outcome(chunk_index=1, psnr=35.68)])
    assert (result.avg_psnr, result.avg_variation, result.avg_rebuffer) == (35.68, 0.0, 0.0)
    assert result.weighted_total == pytest.approx(35.68)


def test_two_chunk_episode():
    log = [outcome(chunk_index=1, psnr=35.68, bitrate=2.0, prev_bitrate=0.0),
           outcome(chunk_index=2, psnr=37.76, bitrate=3.0, prev_bitrate=2.0, rebuffer=0.2)]
    result = episode_qoe(QoeWeights(1, 1, 30), log)
    assert result.avg_psnr == pytest.approx(36.72)
    assert result.avg_variation == pytest.approx(1.0)
    assert result.avg_rebuffer == pytest.approx(0.1)
    assert result.weighted_total == pytest.approx(32.72)
    assert result.num_chunks == 2


def test_constant_bitrate_without_stalls():
    log = [outcome(chunk_index=i, psnr=36.0 + i) for i in range(1, 5)]
    result = episode_qoe(QoeWeights(2, 1, 30), log)
    assert result.weighted_total == pytest.approx(2 * result.avg_psnr)


def test_empty_log():
    with pytest.raises(DomainError):
        episode_qoe(QoeWeights(), [])


def test_rewards_sum_to_episode_qoe_identity():
    weights = QoeWeights(1, 1, 60)
    config = sim_config(num_chunks=12, rate=2.5, profile='low')
    log = simulate(config, [(3 * i) % 10 for i in range(12)])
    total = sum(chunk_reward(weights, o) for o in log)
    q = episode_qoe(weights, log)
    n = len(log)
    identity = n * q.avg_psnr - (n - 1) * q.avg_variation - 60 * n * q.avg_rebuffer
    assert total == pytest.approx(identity, abs=1e-9)


def test_more_rebuffering_lowers_qoe():
    base = [outcome(chunk_index=1), outcome(chunk_index=2, rebuffer=0.1)]
    worse = [outcome(chunk_index=1), outcome(chunk_index=2, rebuffer=0.3)]
    w = QoeWeights()
    assert episode_qoe(w, worse).weighted_total < episode_qoe(w, base).weighted_total


def test_weight_presets():
    assert QoeWeights.from_value('strict').as_tuple() == WEIGHT_PRESETS['strict'] == (1.0, 1.0, 90.0)
    assert QoeWeights.from_value([1, 1, 60]) == QoeWeights(1, 1, 60)
    with pytest.raises(ConfigError):
        QoeWeights.from_value('unknown')
    with pytest.raises(ConfigError):
        QoeWeights(1, -1, 30)
    with pytest.raises(ConfigError):
        QoeWeights.from_value([1, 2])


def test_breakdown_serializes():
    result = episode_qoe(QoeWeights(), [outcome(chunk_index=1)])
    assert set(result.to_dict()) == {'avg_psnr', 'avg_variation', 'avg_rebuffer', 'weighted_total', 'num_chunks'}
    assert np.isfinite(result.weighted_total)
