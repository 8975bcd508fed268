"""
config.py

Versioned JSON configuration. One dataclass per section; a config file only
needs the keys it changes, and `--set section.key=value` overrides apply last.
"""

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Sequence

from errors import ConfigError
from quality_model import (CALIBRATION_POINTS, COMPUTE_PROFILES, DEFAULT_LADDER, DEFAULT_NOISE_SIGMA,
                           ENHANCED_PSNR_AT_MIN, ComputeProfile)
from qoe import QoeWeights
from rl_agent import TrainConfig
from sim_core import ObservationScales

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass
class QualitySection:
    ladder_mbps: List[float] = field(default_factory=lambda: list(DEFAULT_LADDER))
    chunk_duration_s: float = 1.0
    noise_sigma_db: float = DEFAULT_NOISE_SIGMA
    calibration_points: List[List[float]] = field(default_factory=lambda: [list(p) for p in CALIBRATION_POINTS])
    enhanced_psnr_at_min: float = ENHANCED_PSNR_AT_MIN


@dataclass
class CorpusSection:
    output_dir: str = 'corpus'
    num_videos: int = 40
    min_chunks: int = 60
    max_chunks: int = 180
    num_traces: int = 40
    raw_trace_dir: Optional[str] = None
    raw_trace_duration_s: int = 600
    train_max_range_mbps: List[float] = field(default_factory=lambda: [4.0, 10.0])
    test_mean_range_mbps: List[float] = field(default_factory=lambda: [2.0, 5.0])
    seed: int = 0


@dataclass
class SimulationSection:
    db_cap: int = 5
    pb_cap: int = 5
    k1: int = 8
    k2: int = 8
    enhancement_jitter: float = 0.0
    throughput_scale_mbps: float = 10.0
    time_scale_s: float = 10.0
    psnr_scale_db: float = 50.0

    def scales(self) -> ObservationScales:
        return ObservationScales(self.throughput_scale_mbps, self.time_scale_s, self.psnr_scale_db)


@dataclass
class QoeSection:
    weights: object = 'mild'


@dataclass
class TrainingSection:
    gamma: float = 0.9
    eta: float = 0.01
    actor_lr: float = 0.5
    critic_lr: float = 1e-4
    workers: int = 1
    episodes: int = 2000
    seed: int = 0
    hidden: List[int] = field(default_factory=lambda: [128, 128])
    reward_scale: float = 0.1
    average_over_episode: bool = True
    divergence_bound: float = 1e3
    divergence_patience: int = 50
    asynchronous: bool = False
    log_every: int = 100
    profiles: List[str] = field(default_factory=lambda: list(COMPUTE_PROFILES))
    allow_enhance: bool = True
    checkpoint: str = 'checkpoints/agent.json'
    curve: str = 'checkpoints/training_curve.csv'


@dataclass
class EvaluationSection:
    seeds: int = 20
    base_seed: int = 0
    split: str = 'test'
    profile: str = 'high'
    episodes_per_seed: Optional[int] = None
    workers: int = 1
    output_dir: str = 'reports'


@dataclass
class OracleSection:
    horizon: int = 5
    budget: int = 10 ** 6
    workers: int = 1


SECTIONS = {
    'quality': QualitySection,
    'corpus': CorpusSection,
    'simulation': SimulationSection,
    'qoe': QoeSection,
    'training': TrainingSection,
    'evaluation': EvaluationSection,
    'oracle': OracleSection,
}


@dataclass
class AppConfig:
    quality: QualitySection = field(default_factory=QualitySection)
    corpus: CorpusSection = field(default_factory=CorpusSection)
    simulation: SimulationSection = field(default_factory=SimulationSection)
    qoe: QoeSection = field(default_factory=QoeSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    oracle: OracleSection = field(default_factory=OracleSection)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> Dict:
        return asdict(self)

    def qoe_weights(self) -> QoeWeights:
        return QoeWeights.from_value(self.qoe.weights)

    def train_config(self) -> TrainConfig:
        t = self.training
        return TrainConfig(gamma=t.gamma, eta=t.eta, actor_lr=t.actor_lr, critic_lr=t.critic_lr,
                           workers=t.workers, episodes=t.episodes, seed=t.seed, hidden=tuple(t.hidden),
                           reward_scale=t.reward_scale, average_over_episode=t.average_over_episode,
                           divergence_bound=t.divergence_bound, divergence_patience=t.divergence_patience,
                           asynchronous=t.asynchronous, log_every=t.log_every)

    def training_profiles(self) -> List[ComputeProfile]:
        return [get_profile(name) for name in self.training.profiles]

    def validate(self):
        """Cross-field checks; raises ConfigError"""
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}, expected {SCHEMA_VERSION}")
        q, c = self.quality, self.corpus
        if not q.ladder_mbps:
            raise ConfigError("quality.ladder_mbps is empty")
        if q.chunk_duration_s <= 0:
            raise ConfigError("quality.chunk_duration_s must be positive")
        if not 1 <= c.min_chunks <= c.max_chunks:
            raise ConfigError("corpus chunk counts must satisfy 1 <= min_chunks <= max_chunks")
        if c.num_videos < 2 or (c.raw_trace_dir is None and c.num_traces < 2):
            raise ConfigError("the corpus needs at least two videos and two traces for a train/test split")
        for name in ('train_max_range_mbps', 'test_mean_range_mbps'):
            low, high = getattr(c, name)
            if not 0 < low <= high:
                raise ConfigError(f"corpus.{name} must be an interval of positive rates, got {[low, high]}")
        if self.evaluation.split not in ('train', 'test'):
            raise ConfigError(f"evaluation.split must be 'train' or 'test', got {self.evaluation.split}")
        if self.evaluation.seeds < 1:
            raise ConfigError("evaluation.seeds must be >= 1")
        get_profile(self.evaluation.profile)
        self.training_profiles()
        self.qoe_weights()
        self.train_config()


def get_profile(name: str) -> ComputeProfile:
    if name not in COMPUTE_PROFILES:
        raise ConfigError(f"unknown compute profile '{name}', expected one of {list(COMPUTE_PROFILES)}")
    return COMPUTE_PROFILES[name]


def default_config() -> AppConfig:
    return AppConfig()


def _merge_section(section_name: str, section, values: Dict):
    if not isinstance(values, dict):
        raise ConfigError(f"section '{section_name}' must be an object")
    known = {f.name for f in fields(section)}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"unknown key '{section_name}.{key}'")
        setattr(section, key, value)


def config_from_dict(data: Dict) -> AppConfig:
    """Merge a (possibly partial) config dict over the defaults"""
    config = default_config()
    for key, value in data.items():
        if key == 'schema_version':
            config.schema_version = value
        elif key in SECTIONS:
            _merge_section(key, getattr(config, key), value)
        else:
            raise ConfigError(f"unknown config section '{key}'")
    return config


def parse_override(text: str):
    """'section.key=value' -> (section, key, value); value is JSON or a plain string"""
    target, sep, raw = text.partition('=')
    section, dot, key = target.partition('.')
    if not sep or not dot or not section or not key:
        raise ConfigError(f"override '{text}' is not of the form section.key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return section, key, value


def apply_overrides(config: AppConfig, overrides: Sequence[str]) -> AppConfig:
    for text in overrides:
        section, key, value = parse_override(text)
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section '{section}' in override '{text}'")
        _merge_section(section, getattr(config, section), {key: value})
    return config


def load_config(path: Optional[str] = None, overrides: Sequence[str] = ()) -> AppConfig:
    """Defaults, then the JSON file at `path` (if any), then the overrides"""
    data: Dict = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
    config = apply_overrides(config_from_dict(data), overrides)
    config.validate()
    logger.debug(f"configuration loaded, hash {config_hash(config)[:12]}")
    return config


def save_config(config: AppConfig, path: str):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(config.to_dict(), f, indent=2, sort_keys=True)


def config_hash(config: AppConfig) -> str:
    """SHA-256 of the canonical JSON form; independent of key order"""
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()
