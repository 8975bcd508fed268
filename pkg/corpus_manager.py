"""
File-based corpus manager for the streaming simulator
Keeps synthetic video manifests, bandwidth traces and the train/test split on disk
"""
import glob
import json
import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from config import AppConfig, config_hash
from errors import ConfigError
from quality_model import MpdManifest, generate_mpd, load_mpd, model_for_ladder, save_mpd
from traces import (BandwidthTrace, TraceCorpusEntry, load_corpus_manifest, load_trace, save_corpus_manifest,
                    save_trace, scale_trace)

logger = logging.getLogger(__name__)

SPLITS = ('train', 'test')
# Train traces are max-scaled, test traces mean-scaled
SPLIT_SCALE_METHOD = {'train': 'max', 'test': 'mean'}


def synthesize_raw_trace(duration_s: int, seed: int, mean_mbps: float = 4.0, persistence: float = 0.9,
                         volatility: float = 0.25, fade_probability: float = 0.02) -> BandwidthTrace:
    """Synthetic 4G-like throughput, one sample per second.

    Log-throughput follows an AR(1) walk around ln(mean_mbps); occasional deep
    fades (2-6 s at 10-30% of the current rate) imitate handovers and blockage.

    Args:
        duration_s: number of one-second samples
        seed: generator seed
        mean_mbps: level the walk reverts to
        persistence: AR(1) coefficient in [0, 1)
        volatility: innovation standard deviation of the log-throughput
        fade_probability: per-second chance that a fade starts

    Returns:
        BandwidthTrace with strictly positive throughput
    """
    if duration_s < 1:
        raise ConfigError(f"trace duration must be >= 1 s, got {duration_s}")
    rng = np.random.default_rng(seed)
    level = np.log(mean_mbps)
    log_rate = np.empty(duration_s)
    log_rate[0] = level + rng.normal(0.0, volatility)
    for t in range(1, duration_s):
        log_rate[t] = level + persistence * (log_rate[t - 1] - level) + rng.normal(0.0, volatility)
    rates = np.exp(log_rate)

    t = 0
    while t < duration_s:
        if rng.random() < fade_probability:
            length = int(rng.integers(2, 7))
            rates[t:t + length] *= rng.uniform(0.1, 0.3)
            t += length
        else:
            t += 1
    return BandwidthTrace.from_samples(np.arange(duration_s, dtype=float), rates)


@dataclass
class CorpusSplit:
    """Named videos and scaled traces of one split"""
    name: str
    videos: List[Tuple[str, MpdManifest]]
    traces: List[Tuple[str, BandwidthTrace]]


class CorpusManager:
    """Manages the generated corpus under one directory"""

    def __init__(self, data_dir: str = "corpus"):
        """Initialize corpus manager

        Args:
            data_dir: Directory holding videos/, traces/ and corpus.json
        """
        self.data_dir = data_dir

    def ensure_data_directory(self):
        """Create the corpus directory tree if it doesn't exist"""
        for sub in ('videos', os.path.join('traces', 'raw'), os.path.join('traces', 'scaled')):
            path = os.path.join(self.data_dir, sub)
            if not os.path.exists(path):
                os.makedirs(path)
        logger.debug(f"corpus directory ready: {self.data_dir}")

    @property
    def summary_path(self) -> str:
        return os.path.join(self.data_dir, 'corpus.json')

    @property
    def trace_manifest_path(self) -> str:
        return os.path.join(self.data_dir, 'traces', 'corpus.json')

    def get_video_path(self, video_id: str) -> str:
        return os.path.join(self.data_dir, 'videos', f"{video_id}.json")

    def get_trace_path(self, trace_id: str, scaled: bool = True) -> str:
        return os.path.join(self.data_dir, 'traces', 'scaled' if scaled else 'raw', f"{trace_id}.csv")

    def _raw_traces(self, config: AppConfig, rng: np.random.Generator) -> List[BandwidthTrace]:
        c = config.corpus
        if c.raw_trace_dir:
            paths = sorted(glob.glob(os.path.join(c.raw_trace_dir, '*.csv')))
            if len(paths) < 2:
                raise ConfigError(f"raw_trace_dir {c.raw_trace_dir} needs at least two .csv traces")
            return [load_trace(p) for p in paths]
        return [synthesize_raw_trace(c.raw_trace_duration_s, int(rng.integers(2 ** 31)))
                for _ in range(c.num_traces)]

    def generate(self, config: AppConfig) -> Dict:
        """Write manifests, raw and scaled traces, the trace manifest and the split

        Args:
            config: full configuration (quality and corpus sections are used)

        Returns:
            Corpus summary dictionary (also written to corpus.json)
        """
        q, c = config.quality, config.corpus
        self.ensure_data_directory()
        rng = np.random.default_rng(c.seed)

        model = model_for_ladder(q.ladder_mbps, q.noise_sigma_db,
                                 points=[tuple(p) for p in q.calibration_points],
                                 enhanced_psnr_at_min=q.enhanced_psnr_at_min)
        video_ids = []
        for v in range(c.num_videos):
            num_chunks = int(rng.integers(c.min_chunks, c.max_chunks + 1))
            mpd = generate_mpd(model, num_chunks, q.ladder_mbps, q.chunk_duration_s, seed=int(rng.integers(2 ** 31)))
            video_id = f"video_{v:03d}"
            save_mpd(mpd, self.get_video_path(video_id))
            video_ids.append(video_id)
        print(f"💾 Saved {len(video_ids)} video manifests")

        raw_traces = self._raw_traces(config, rng)
        trace_ids = [f"trace_{k:03d}" for k in range(len(raw_traces))]

        video_order = rng.permutation(len(video_ids))
        trace_order = rng.permutation(len(trace_ids))
        split_videos = {
            'train': sorted(video_ids[k] for k in video_order[:len(video_ids) // 2]),
            'test': sorted(video_ids[k] for k in video_order[len(video_ids) // 2:]),
        }
        trace_split = {}
        for rank, k in enumerate(trace_order):
            trace_split[trace_ids[k]] = 'train' if rank < len(trace_ids) // 2 else 'test'

        entries = []
        for trace_id, raw in zip(trace_ids, raw_traces):
            split = trace_split[trace_id]
            method = SPLIT_SCALE_METHOD[split]
            low, high = c.train_max_range_mbps if split == 'train' else c.test_mean_range_mbps
            scale_seed = int(rng.integers(2 ** 31))
            target = float(np.random.default_rng(scale_seed).uniform(low, high))
            save_trace(raw, self.get_trace_path(trace_id, scaled=False))
            save_trace(scale_trace(raw, method, target), self.get_trace_path(trace_id))
            entries.append(TraceCorpusEntry(os.path.join('traces', 'scaled', f"{trace_id}.csv"),
                                            method, target, scale_seed))
        save_corpus_manifest(entries, self.trace_manifest_path)
        print(f"💾 Saved {len(entries)} raw and scaled traces")

        summary = {
            'config_hash': config_hash(config),
            'ladder_mbps': [float(r) for r in q.ladder_mbps],
            'chunk_duration_s': q.chunk_duration_s,
            'videos': split_videos,
            'traces': {s: sorted(t for t, ts in trace_split.items() if ts == s) for s in SPLITS},
        }
        with open(self.summary_path, 'w', encoding='utf-8') as f:
            json.dump(summary, f, indent=2)

        print(f"✅ Corpus generated in {self.data_dir}")
        logger.info(f"corpus: {len(video_ids)} videos, {len(trace_ids)} traces, hash {summary['config_hash'][:12]}")
        return summary

    def get_corpus_summary(self) -> Dict:
        """Load corpus.json

        Raises:
            ConfigError: the corpus has not been generated
        """
        if not os.path.exists(self.summary_path):
            raise ConfigError(f"no corpus found in {self.data_dir}; run the generate command first")
        with open(self.summary_path, 'r', encoding='utf-8') as f:
            return json.load(f)

    def list_traces(self) -> List[TraceCorpusEntry]:
        return load_corpus_manifest(self.trace_manifest_path)

    def load_split(self, split: str) -> CorpusSplit:
        """Videos and scaled traces assigned to `split`"""
        if split not in SPLITS:
            raise ConfigError(f"unknown split '{split}', expected one of {SPLITS}")
        summary = self.get_corpus_summary()
        videos = [(v, load_mpd(self.get_video_path(v))) for v in summary['videos'][split]]
        traces = [(t, load_trace(self.get_trace_path(t))) for t in summary['traces'][split]]
        if not videos or not traces:
            raise ConfigError(f"split '{split}' has no videos or no traces")
        return CorpusSplit(split, videos, traces)
