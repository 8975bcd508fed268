"""
experiment.py

Evaluation runs over a corpus split: policy resolution by name or checkpoint
path, single-episode playback, and the seeded multi-episode runner that
produces evaluation reports.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import AppConfig, SimulationSection, config_hash, get_profile
from corpus_manager import CorpusManager, CorpusSplit
from errors import UnknownPolicyError
from policies import BDashPolicy, FixedPolicy, GreedyPolicy, Policy, RandomPolicy, action_mask
from qoe import QoeBreakdown, QoeWeights, episode_qoe
from quality_model import ComputeProfile, MpdManifest
from rl_agent import ActorCriticPolicy, AgentParams, load_checkpoint, train
from sim_core import Action, SimConfig, StepOutcome, reset, step
from traces import BandwidthTrace

logger = logging.getLogger(__name__)

POLICY_NAMES = ('bdash', 'greedy', 'greedy-noenhance', 'random', 'fixed:<action index>', '<checkpoint.json>')


def make_sim_config(mpd: MpdManifest, trace: BandwidthTrace, profile: ComputeProfile,
                    sim: SimulationSection, seed: int = 0) -> SimConfig:
    return SimConfig(mpd=mpd, trace=trace, profile=profile, db_cap=sim.db_cap, pb_cap=sim.pb_cap,
                     k1=sim.k1, k2=sim.k2, enhancement_jitter=sim.enhancement_jitter, seed=seed,
                     scales=sim.scales())


class CorpusEnvFactory:
    """Draws a random (video, trace, compute profile) episode from one corpus split"""

    def __init__(self, split: CorpusSplit, profiles: Sequence[ComputeProfile], sim: SimulationSection):
        self.split = split
        self.profiles = list(profiles)
        self.sim = sim

    def __call__(self, rng: np.random.Generator) -> SimConfig:
        _, mpd = self.split.videos[int(rng.integers(len(self.split.videos)))]
        _, trace = self.split.traces[int(rng.integers(len(self.split.traces)))]
        profile = self.profiles[int(rng.integers(len(self.profiles)))]
        return make_sim_config(mpd, trace, profile, self.sim, seed=int(rng.integers(2 ** 31)))


@lru_cache(maxsize=8)
def _cached_checkpoint(path: str, mtime_ns: int, size: int) -> AgentParams:
    """Cache entry per (path, modification time, size)"""
    params, _ = load_checkpoint(path)
    return params


def _load_checkpoint_params(path: str) -> AgentParams:
    path = os.path.abspath(path)
    info = os.stat(path)
    return _cached_checkpoint(path, info.st_mtime_ns, info.st_size)


def build_policy(name: str, seed: int = 0) -> Policy:
    """Resolve a policy name or checkpoint path

    Args:
        name: bdash, greedy, greedy-noenhance, random, fixed:<action index>, or a checkpoint path
        seed: sampling seed for stochastic policies

    Returns:
        Policy instance

    Raises:
        UnknownPolicyError: the name matches nothing
    """
    if name == 'bdash':
        return BDashPolicy()
    if name == 'greedy':
        return GreedyPolicy()
    if name == 'greedy-noenhance':
        return GreedyPolicy(allow_enhance=False)
    if name == 'random':
        return RandomPolicy(seed)
    if name.startswith('fixed:'):
        try:
            return FixedPolicy(Action.from_index(int(name.split(':', 1)[1])))
        except ValueError:
            raise UnknownPolicyError(f"bad fixed policy '{name}', expected fixed:<action index>")
    if name.endswith('.json') and os.path.exists(name):
        label = os.path.splitext(os.path.basename(name))[0]
        return ActorCriticPolicy(_load_checkpoint_params(name), name=label, seed=seed)
    raise UnknownPolicyError(f"unknown policy '{name}', expected one of {list(POLICY_NAMES)}")


def run_episode(sim_config: SimConfig, policy: Policy, weights: QoeWeights) -> Tuple[List[StepOutcome], QoeBreakdown]:
    """Play one whole video with `policy`"""
    policy.reset()
    state, _ = reset(sim_config)
    outcomes = []
    while not state.done:
        state, outcome, _ = step(state, policy.decide(state))
        outcomes.append(outcome)
    return outcomes, episode_qoe(weights, outcomes)


class ExperimentRunner:
    """Runs training and the multi-seed evaluation protocol on a generated corpus"""

    def __init__(self, config: AppConfig, corpus: Optional[CorpusManager] = None):
        """
        Initialize the experiment runner

        Args:
            config: full application configuration
            corpus: corpus manager; defaults to the one at corpus.output_dir
        """
        self.config = config
        self.corpus = corpus or CorpusManager(config.corpus.output_dir)
        self._splits: Dict[str, CorpusSplit] = {}

    def get_split(self, split: str) -> CorpusSplit:
        if split not in self._splits:
            self._splits[split] = self.corpus.load_split(split)
        return self._splits[split]

    def train_agent(self, allow_enhance: Optional[bool] = None) -> Tuple[AgentParams, pd.DataFrame]:
        """Train on the train split across the configured compute profiles"""
        if allow_enhance is None:
            allow_enhance = self.config.training.allow_enhance
        factory = CorpusEnvFactory(self.get_split('train'), self.config.training_profiles(), self.config.simulation)
        num_actions = 2 * len(self.config.quality.ladder_mbps)
        mask = None if allow_enhance else action_mask(num_actions, False)
        return train(self.config.train_config(), factory, self.config.qoe_weights(), action_mask=mask)

    def _episode_plan(self, split: CorpusSplit, seed: int) -> List[Tuple[int, int, int]]:
        """(video index, trace index, simulator seed) per episode of one evaluation seed"""
        rng = np.random.default_rng([self.config.evaluation.base_seed, seed])
        trace_order = rng.permutation(len(split.traces))
        count = len(split.videos)
        if self.config.evaluation.episodes_per_seed is not None:
            count = min(count, self.config.evaluation.episodes_per_seed)
        return [(k, int(trace_order[k % len(trace_order)]), int(rng.integers(2 ** 31))) for k in range(count)]

    def _run_planned(self, policy_name: str, split: CorpusSplit, profile: ComputeProfile,
                     weights: QoeWeights, seed: int, episode_id: int,
                     plan: Tuple[int, int, int]) -> Tuple[Dict, List[float]]:
        video_index, trace_index, sim_seed = plan
        video_id, mpd = split.videos[video_index]
        trace_id, trace = split.traces[trace_index]
        sim_config = make_sim_config(mpd, trace, profile, self.config.simulation, seed=sim_seed)
        outcomes, breakdown = run_episode(sim_config, build_policy(policy_name, seed=sim_seed), weights)
        row = {
            'episode_id': episode_id,
            'seed': seed,
            'video': video_id,
            'trace': trace_id,
            'num_chunks': breakdown.num_chunks,
            'avg_psnr': breakdown.avg_psnr,
            'avg_variation': breakdown.avg_variation,
            'avg_rebuffer': breakdown.avg_rebuffer,
            'qoe': breakdown.weighted_total,
            'startup_delay': outcomes[0].t_play,
            'enhanced_fraction': float(np.mean([o.enhance for o in outcomes])),
        }
        return row, [o.psnr for o in outcomes]

    def evaluate(self, policy_name: str, split: Optional[str] = None, weights=None,
                 profile: Optional[str] = None, seeds: Optional[int] = None) -> Dict:
        """
        Evaluate a policy over several seeds

        Each seed pairs every video of the split with a trace through a seeded
        permutation. Aggregates are mean and standard deviation over the per-seed
        means.

        Returns:
            Report dictionary (JSON-ready)
        """
        ev = self.config.evaluation
        split_name = split or ev.split
        profile_name = profile or ev.profile
        weights = QoeWeights.from_value(weights) if weights is not None else self.config.qoe_weights()
        num_seeds = seeds or ev.seeds
        build_policy(policy_name)

        corpus_split = self.get_split(split_name)
        compute = get_profile(profile_name)
        jobs = []
        for seed in range(num_seeds):
            for plan in self._episode_plan(corpus_split, seed):
                jobs.append((seed, len(jobs), plan))

        def run(job):
            seed, episode_id, plan = job
            return self._run_planned(policy_name, corpus_split, compute, weights, seed, episode_id, plan)

        with ThreadPoolExecutor(max_workers=max(1, ev.workers)) as pool:
            results = list(pool.map(run, jobs))

        episodes = pd.DataFrame([row for row, _ in results]).sort_values('episode_id')
        psnr_values = np.sort(np.concatenate([np.asarray(p) for _, p in results]))
        seed_means = episodes.groupby('seed')[['avg_psnr', 'avg_variation', 'avg_rebuffer', 'qoe',
                                               'startup_delay']].mean()

        summary = {
            'num_episodes': int(len(episodes)),
            'mean_qoe': float(seed_means['qoe'].mean()),
            'std_qoe': float(seed_means['qoe'].std(ddof=0)),
            'mean_psnr': float(seed_means['avg_psnr'].mean()),
            'std_psnr': float(seed_means['avg_psnr'].std(ddof=0)),
            'mean_variation': float(seed_means['avg_variation'].mean()),
            'mean_rebuffer': float(seed_means['avg_rebuffer'].mean()),
            'mean_startup_delay': float(seed_means['startup_delay'].mean()),
            'enhanced_fraction': float(episodes['enhanced_fraction'].mean()),
        }
        logger.info(f"{policy_name} on {split_name}/{profile_name}: QoE {summary['mean_qoe']:.3f} "
                    f"± {summary['std_qoe']:.3f} over {num_seeds} seeds")

        return {
            'policy': policy_name if not policy_name.endswith('.json') else os.path.basename(policy_name),
            'split': split_name,
            'profile': profile_name,
            'scale_factor': compute.scale_factor,
            'weights': list(weights.as_tuple()),
            'seeds': num_seeds,
            'config_hash': config_hash(self.config),
            'summary': summary,
            'seed_means': seed_means['qoe'].tolist(),
            'episodes': episodes.to_dict(orient='records'),
            'psnr_cdf': psnr_values.tolist(),
        }
