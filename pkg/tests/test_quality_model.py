import numpy as np
import pytest

from errors import CalibrationError, ConfigError, DomainError
from quality_model import (COMPUTE_PROFILES, DEFAULT_LADDER, MpdManifest, action_columns, base_psnr,
                           enhancement_gain, enhancement_time, fit_rate_quality, generate_mpd, load_mpd,
                           model_for_ladder, save_mpd)


@pytest.fixture
def model():
    return model_for_ladder(DEFAULT_LADDER, noise_sigma=0.0)


def test_calibration_anchors(model):
    assert base_psnr(model, 2.0) == pytest.approx(35.68, abs=1e-6)
    assert base_psnr(model, 3.0) == pytest.approx(37.76, abs=1e-6)
    assert base_psnr(model, 2.0) + enhancement_gain(model, 2.0) == pytest.approx(37.20, abs=1e-6)


def test_gain_decays_to_zero_at_top_rate(model):
    assert enhancement_gain(model, 4.0) == pytest.approx(0.0, abs=1e-12)
    gains = [enhancement_gain(model, r) for r in DEFAULT_LADDER]
    assert all(a > b for a, b in zip(gains, gains[1:]))


def test_fit_needs_two_distinct_rates():
    with pytest.raises(CalibrationError):
        fit_rate_quality([(2.0, 35.0), (2.0, 36.0)])
    with pytest.raises(CalibrationError):
        fit_rate_quality([(0.0, 30.0), (2.0, 35.0)])


def test_fit_recovers_log_linear_coefficients():
    model = fit_rate_quality([(1.0, 30.0), (np.e, 31.0)])
    assert model.beta1 == pytest.approx(1.0)
    assert model.beta0 == pytest.approx(30.0)
    assert (model.r_min, model.r_max) == (1.0, pytest.approx(np.e))


def test_psnr_outside_ladder_range(model):
    with pytest.raises(DomainError):
        base_psnr(model, 5.0)
    with pytest.raises(DomainError):
        enhancement_gain(model, 1.0)


def test_generate_mpd_shape_and_determinism():
    model = model_for_ladder(DEFAULT_LADDER)
    a = generate_mpd(model, 30, DEFAULT_LADDER, 1.0, seed=7)
    b = generate_mpd(model, 30, DEFAULT_LADDER, 1.0, seed=7)
    assert a.psnr_map.shape == (30, 10)
    assert a.num_actions == 10
    assert np.array_equal(a.psnr_map, b.psnr_map)


def test_chunk_jitter_shared_by_all_actions():
    template = generate_mpd(model_for_ladder(DEFAULT_LADDER, noise_sigma=0.0), 1, DEFAULT_LADDER, 1.0, seed=0).row(1)
    mpd = generate_mpd(model_for_ladder(DEFAULT_LADDER, noise_sigma=0.8), 20, DEFAULT_LADDER, 1.0, seed=3)
    for i in range(1, 21):
        offset = mpd.row(i) - template
        assert np.ptp(offset) < 1e-9


def test_chunk_jitter_has_configured_std():
    template = generate_mpd(model_for_ladder(DEFAULT_LADDER, noise_sigma=0.0), 1, DEFAULT_LADDER, 1.0, seed=0).row(1)
    mpd = generate_mpd(model_for_ladder(DEFAULT_LADDER, noise_sigma=0.5), 1000, DEFAULT_LADDER, 1.0, seed=11)
    jitter = mpd.psnr_map[:, 0] - template[0]
    assert abs(np.std(jitter) - 0.5) < 0.05
    assert abs(np.mean(jitter)) < 0.08


def test_zero_noise_rows_are_identical(model):
    mpd = generate_mpd(model, 5, DEFAULT_LADDER, 1.0, seed=1)
    assert np.allclose(mpd.psnr_map, mpd.psnr_map[0])
    assert mpd.row(1)[8] == pytest.approx(mpd.row(1)[9])


def test_single_rate_ladder_has_two_actions():
    model = model_for_ladder([2.0], noise_sigma=0.0)
    mpd = generate_mpd(model, 3, [2.0], 1.0, seed=0)
    assert mpd.num_actions == 2
    assert mpd.row(1)[1] > mpd.row(1)[0]


def test_action_columns_order():
    assert action_columns([2.0, 3.0]) == [(2.0, 0), (2.0, 1), (3.0, 0), (3.0, 1)]


def test_manifest_rejects_enhanced_below_plain():
    with pytest.raises(ConfigError):
        MpdManifest(1, (2.0,), 1.0, np.array([[36.0, 35.0]]))


def test_manifest_rejects_quality_dropping_with_rate():
    with pytest.raises(ConfigError):
        MpdManifest(1, (2.0, 3.0), 1.0, np.array([[37.0, 37.5, 36.0, 36.5]]))


def test_manifest_rejects_wrong_shape():
    with pytest.raises(ConfigError):
        MpdManifest(1, (2.0, 3.0), 1.0, np.array([[36.0, 37.0]]))


def test_row_index_is_one_based(model):
    mpd = generate_mpd(model, 2, DEFAULT_LADDER, 1.0, seed=0)
    with pytest.raises(DomainError):
        mpd.row(0)
    with pytest.raises(DomainError):
        mpd.row(3)


def test_manifest_file_round_trip(tmp_path):
    mpd = generate_mpd(model_for_ladder(DEFAULT_LADDER), 4, DEFAULT_LADDER, 1.0, seed=5)
    path = tmp_path / 'video.json'
    save_mpd(mpd, str(path))
    loaded = load_mpd(str(path))
    assert loaded.bitrate_ladder == mpd.bitrate_ladder
    assert np.array_equal(loaded.psnr_map, mpd.psnr_map)


def test_truncated_manifest():
    mpd = generate_mpd(model_for_ladder(DEFAULT_LADDER), 6, DEFAULT_LADDER, 1.0, seed=2)
    short = mpd.truncated(3)
    assert short.num_chunks == 3
    assert np.array_equal(short.psnr_map, mpd.psnr_map[:3])


@pytest.mark.parametrize("name, factor", [('ultra_high', 4.5), ('high', 5.0), ('medium', 6.0), ('low', 6.8)])
def test_enhancement_time_per_profile(name, factor):
    assert enhancement_time(COMPUTE_PROFILES[name]) == pytest.approx(factor * 25 / 98.9)


def test_enhancement_time_jitter_bounds():
    profile = COMPUTE_PROFILES['high']
    nominal = enhancement_time(profile)
    rng = np.random.default_rng(0)
    draws = [enhancement_time(profile, rng, jitter=0.2) for _ in range(200)]
    assert min(draws) >= 0.8 * nominal
    assert max(draws) <= 1.2 * nominal
    assert np.std(draws) > 0
