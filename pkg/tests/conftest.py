import numpy as np
import pytest

from config import AppConfig, default_config
from corpus_manager import CorpusManager
from quality_model import COMPUTE_PROFILES, DEFAULT_LADDER, MpdManifest, generate_mpd, model_for_ladder
from sim_core import SimConfig
from traces import BandwidthTrace


def constant_trace(rate: float, duration: float = 1000.0) -> BandwidthTrace:
    return BandwidthTrace(np.array([0.0]), np.array([rate]), duration)


def flat_mpd(num_chunks: int, ladder=DEFAULT_LADDER, chunk_duration: float = 1.0) -> MpdManifest:
    """Manifest without jitter: every row equals the calibrated template"""
    return generate_mpd(model_for_ladder(ladder, noise_sigma=0.0), num_chunks, ladder, chunk_duration, seed=0)


def sim_config(num_chunks: int = 5, rate: float = 4.0, profile: str = 'ultra_high',
               ladder=DEFAULT_LADDER, **kwargs) -> SimConfig:
    return SimConfig(mpd=flat_mpd(num_chunks, ladder), trace=constant_trace(rate),
                     profile=COMPUTE_PROFILES[profile], **kwargs)


def random_instance(rng: np.random.Generator, num_chunks: int, num_bitrates: int = 5) -> SimConfig:
    """Random ladder, piecewise trace, profile, caps and jitter"""
    ladder = np.sort(rng.choice(np.arange(1, 41) / 4.0, size=num_bitrates, replace=False))
    model = model_for_ladder(ladder.tolist(), noise_sigma=float(rng.uniform(0, 1.5)))
    mpd = generate_mpd(model, num_chunks, ladder.tolist(), float(rng.choice([0.5, 1.0, 2.0])),
                       seed=int(rng.integers(1000)))
    samples = int(rng.integers(1, 12))
    trace = BandwidthTrace.from_samples(np.cumsum(np.r_[0.0, rng.uniform(0.2, 3.0, samples - 1)]),
                                        rng.uniform(0.3, 12.0, samples))
    profile = list(COMPUTE_PROFILES.values())[int(rng.integers(4))]
    return SimConfig(mpd=mpd, trace=trace, profile=profile,
                     db_cap=int(rng.integers(1, 6)), pb_cap=int(rng.integers(1, 6)),
                     enhancement_jitter=float(rng.choice([0.0, 0.2])), seed=int(rng.integers(1000)))


@pytest.fixture
def small_config(tmp_path) -> AppConfig:
    config = default_config()
    config.corpus.output_dir = str(tmp_path / 'corpus')
    config.corpus.num_videos = 4
    config.corpus.min_chunks = 4
    config.corpus.max_chunks = 8
    config.corpus.num_traces = 4
    config.corpus.raw_trace_duration_s = 30
    config.evaluation.seeds = 2
    config.evaluation.output_dir = str(tmp_path / 'reports')
    config.training.episodes = 4
    config.training.log_every = 0
    config.training.checkpoint = str(tmp_path / 'checkpoints' / 'agent.json')
    config.training.curve = str(tmp_path / 'checkpoints' / 'curve.csv')
    return config


@pytest.fixture
def small_corpus(small_config) -> CorpusManager:
    manager = CorpusManager(small_config.corpus.output_dir)
    manager.generate(small_config)
    return manager
