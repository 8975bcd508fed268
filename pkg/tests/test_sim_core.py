import numpy as np
import pandas as pd
import pytest

from conftest import constant_trace, flat_mpd, random_instance, sim_config
from errors import ConfigError, DomainError, SimulationError
from quality_model import COMPUTE_PROFILES, enhancement_time
from sim_core import (EPISODE_LOG_COLUMNS, Action, PipelineState, SimConfig, advance, episode_log_frame,
                      occupancy_by_formula, observe, reset, simulate, step, write_episode_log)

ULTRA_HIGH_TAU = enhancement_time(COMPUTE_PROFILES['ultra_high'])


def test_reset_starts_empty():
    state, obs = reset(sim_config())
    assert (state.buffer_download, state.buffer_playback, state.download_percent) == (0, 0, 0.0)
    assert obs.shape == (32,)
    assert np.all(obs[:5 + 8 + 8 + 1] == 0)


def test_reset_is_deterministic():
    config = sim_config()
    _, a = reset(config)
    _, b = reset(config)
    assert np.array_equal(a, b)


def test_config_rejects_bad_caps():
    with pytest.raises(ConfigError):
        sim_config(db_cap=0)


def test_first_chunk_base_case():
    config = SimConfig(mpd=flat_mpd(1), trace=constant_trace(2.0), profile=COMPUTE_PROFILES['high'])
    state, _ = reset(config)
    state, out, obs = step(state, Action(0, 0))
    assert out.download_time == pytest.approx(1.0)
    assert (out.t_download, out.t_enhance, out.enhance_time) == (0.0, pytest.approx(1.0), 0.0)
    assert out.t_play == pytest.approx(1.0)
    assert out.rebuffer == 0.0
    assert out.done and state.done
    assert np.all(obs == 0)


def test_two_chunk_enhanced_timeline():
    config = sim_config(num_chunks=2, rate=4.0, profile='ultra_high')
    first, second = simulate(config, [Action(0, 1), Action(0, 1)])
    tau = ULTRA_HIGH_TAU
    assert first.download_time == pytest.approx(0.5)
    assert first.t_enhance == pytest.approx(0.5)
    assert first.t_play == pytest.approx(0.5 + tau)
    assert second.t_download == pytest.approx(0.5)
    assert second.download_time == pytest.approx(0.5)
    assert second.t_enhance == pytest.approx(0.5 + tau)
    assert second.t_play == pytest.approx(0.5 + 2 * tau)
    assert second.rebuffer == pytest.approx(tau - 1.0)
    assert second.rebuffer == pytest.approx(0.1375, abs=1e-3)


def test_full_download_buffer_stalls_the_request():
    config = sim_config(num_chunks=4, rate=1000.0, profile='low', db_cap=1)
    outcomes = simulate(config, [Action(0, 1)] * 4)
    assert outcomes[2].t_download == outcomes[1].t_enhance
    assert outcomes[3].t_download == outcomes[2].t_enhance


def test_throughput_history_in_observation():
    config = sim_config(num_chunks=3, rate=4.0)
    state, _ = reset(config)
    state, out, obs = step(state, Action(2, 0))
    assert out.throughput == pytest.approx(4.0)
    assert obs[5] == pytest.approx(0.4)
    assert np.all(obs[6:13] == 0)
    assert obs[21] == pytest.approx(3.0 / 4.0)


def test_psnr_slots_follow_the_manifest_row():
    config = sim_config(num_chunks=3)
    state, obs = reset(config)
    assert np.allclose(obs[-10:], config.mpd.row(1) / 50.0)
    state, _, obs = step(state, 0)
    assert np.allclose(obs[-10:], config.mpd.row(2) / 50.0)


def test_enhancement_history_tracks_enhanced_chunks_only():
    config = sim_config(num_chunks=4, rate=20.0)
    state, _ = reset(config)
    state, _, _ = step(state, Action(0, 1))
    state, _, obs = step(state, Action(0, 0))
    enhance_slots = obs[13:21]
    assert enhance_slots[0] == pytest.approx(ULTRA_HIGH_TAU / 10.0)
    assert np.all(enhance_slots[1:] == 0)
    assert state.enhanced_count == 1


def test_step_errors():
    config = sim_config(num_chunks=1)
    state, _ = reset(config)
    with pytest.raises(SimulationError):
        step(state, 10)
    with pytest.raises(SimulationError):
        step(state, Action(5, 0))
    state, _, _ = step(state, 0)
    with pytest.raises(SimulationError):
        step(state, 0)


def test_occupancy_at_first_request():
    state, _ = reset(sim_config())
    assert occupancy_by_formula(state, 1) == (0, 0)


def test_occupancy_formula_on_hand_built_timeline():
    state = PipelineState(config=sim_config(), rng=np.random.default_rng(0), next_index=5)
    state.t_download = [0.0, 1.0, 2.0, 3.0]
    state.t_enhance = [0.5, 5.0, 6.0, 7.0]
    state.t_play = [10.0, 11.0, 12.0, 13.0]
    assert occupancy_by_formula(state, 4) == (2, 0)


def test_occupancy_of_undecided_chunk():
    state, _ = reset(sim_config())
    with pytest.raises(DomainError):
        occupancy_by_formula(state, 3)


def test_randomized_invariants():
    rng = np.random.default_rng(2024)
    steps = 0
    for _ in range(1000):
        config = random_instance(rng, num_chunks=int(rng.integers(1, 12)), num_bitrates=int(rng.integers(1, 6)))
        state, obs = reset(config)
        while not state.done:
            assert occupancy_by_formula(state, state.next_index) == (state.buffer_download, state.buffer_playback)
            assert 0 <= state.buffer_download <= config.db_cap
            assert 0 <= state.buffer_playback <= config.pb_cap
            assert np.all(np.isfinite(obs))
            action = int(rng.integers(config.num_actions))
            state, out, obs = step(state, action)
            steps += 1
            assert out.t_enhance >= out.t_download + out.download_time
            assert out.t_play >= out.t_enhance + out.enhance_time
            assert out.rebuffer >= 0.0
        for i in range(1, state.num_decided + 1):
            assert occupancy_by_formula(state, i)[0] <= config.db_cap
        assert all(b >= a for a, b in zip(state.t_download, state.t_download[1:]))
    assert steps >= 1000


def test_determinism_with_jitter():
    config = sim_config(num_chunks=10, rate=3.0, enhancement_jitter=0.3, seed=11)
    actions = [i % 10 for i in range(10)]
    assert simulate(config, actions) == simulate(config, actions)


def test_work_conservation_without_enhancement():
    num_chunks = 10
    config = sim_config(num_chunks=num_chunks, rate=100.0, db_cap=5, pb_cap=5)
    outcomes = simulate(config, [Action(4, 0)] * num_chunks)
    assert all(o.rebuffer == 0.0 for o in outcomes)
    assert outcomes[-1].t_play + 1.0 == pytest.approx(outcomes[0].download_time + num_chunks * 1.0)


def test_copy_is_independent():
    state, _ = reset(sim_config(num_chunks=4))
    state, _, _ = step(state, 1)
    clone = state.copy()
    step(clone, 3)
    assert state.num_decided == 1
    assert clone.num_decided == 2
    assert clone.config is state.config


def test_copy_replays_jittered_enhancement_times():
    state, _ = reset(sim_config(num_chunks=4, enhancement_jitter=0.3, seed=2))
    state, _, _ = step(state, 1)
    clone = state.copy()
    _, original, _ = step(state, 3)
    _, copied, _ = step(clone, 3)
    assert original == copied
    assert clone.t_play is not state.t_play


def test_advance_matches_step():
    config = sim_config(num_chunks=3, rate=2.5, enhancement_jitter=0.2, seed=5)
    stepped, advanced = reset(config)[0], reset(config)[0]
    for action in (3, 8, 1):
        stepped, by_step, obs = step(stepped, action)
        advanced, by_advance = advance(advanced, action)
        assert by_step == by_advance
    assert advanced.done
    assert not obs.any()


def test_episode_log(tmp_path):
    outcomes = simulate(sim_config(num_chunks=3), [0, 1, 2])
    frame = episode_log_frame(outcomes)
    assert list(frame.columns) == list(EPISODE_LOG_COLUMNS.values())
    assert frame['chunk'].tolist() == [1, 2, 3]
    path = tmp_path / 'episode.csv'
    write_episode_log(outcomes, str(path))
    assert len(pd.read_csv(path)) == 3


def test_observe_after_done_is_an_error():
    state, _ = reset(sim_config(num_chunks=1))
    state, _, _ = step(state, 0)
    with pytest.raises(SimulationError):
        observe(state)
