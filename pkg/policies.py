"""
policies.py

Baseline decision policies sharing one interface: `decide(state) -> Action`.

- B-DASH: mean throughput of the last five chunks, largest ladder rate below it.
- Greedy: highest-PSNR action whose predicted download (+ enhancement) time
  fits into the playback runway.
- Fixed / random: reference points for tests and the oracle.
- mask_actions: the enhancement-disabled action set of the no-enhance agent.
"""

import logging
from typing import List, Optional, Sequence

import numpy as np

from errors import ConfigError
from quality_model import enhancement_time
from sim_core import Action, PipelineState, all_actions

logger = logging.getLogger(__name__)

BDASH_WINDOW = 5


def mask_actions(action_set: Sequence[Action], allow_enhance: bool) -> List[Action]:
    """Legal subset of `action_set`; without enhancement only p = 0 actions remain"""
    legal = [a for a in action_set if allow_enhance or a.enhance == 0]
    if not legal:
        raise ConfigError("action mask leaves no legal action")
    return legal


def action_mask(num_actions: int, allow_enhance: bool) -> np.ndarray:
    """Boolean mask over flat action indices"""
    legal = mask_actions(all_actions(num_actions // 2), allow_enhance)
    mask = np.zeros(num_actions, dtype=bool)
    mask[[a.index for a in legal]] = True
    return mask


def bdash_decide(throughput_history: Sequence[float], ladder: Sequence[float]) -> Action:
    """Rate-based choice: largest ladder rate not above the mean recent throughput.

    Args:
        throughput_history: recent per-chunk throughputs in Mbps (the last five are used)
        ladder: ascending bitrates in Mbps

    Returns:
        Action with enhance flag 0; the lowest rate when the history is empty
    """
    if len(ladder) == 0:
        raise ConfigError("bitrate ladder is empty")
    recent = list(throughput_history)[-BDASH_WINDOW:]
    if not recent:
        return Action(0, 0)
    predicted = float(np.mean(recent))
    feasible = [b for b, rate in enumerate(ladder) if rate <= predicted]
    return Action(feasible[-1] if feasible else 0, 0)


def greedy_decide(buffer_playback: int,
                  remaining_play: float,
                  throughput_history: Sequence[float],
                  enhance_time_history: Sequence[float],
                  psnr_row: Sequence[float],
                  ladder: Sequence[float],
                  chunk_duration: float,
                  fallback_enhance_time: float,
                  allowed: Optional[np.ndarray] = None) -> Action:
    """Maximum-PSNR action among those predicted not to stall.

    An action (R, p) qualifies when R*T/c_hat + p*tau_hat <= l^P + T*B^P. Ties go to
    the lower bitrate, then to p = 0. Without a qualifying action the lowest rate
    without enhancement is returned.
    """
    if len(ladder) == 0:
        raise ConfigError("bitrate ladder is empty")
    c_hat = float(np.mean(throughput_history)) if len(throughput_history) else float(ladder[0])
    tau_hat = float(np.mean(enhance_time_history)) if len(enhance_time_history) else fallback_enhance_time
    slack = remaining_play + chunk_duration * buffer_playback

    best: Optional[Action] = None
    best_psnr = -np.inf
    for action in all_actions(len(ladder)):
        if allowed is not None and not allowed[action.index]:
            continue
        predicted = ladder[action.bitrate_index] * chunk_duration / c_hat + action.enhance * tau_hat
        if predicted <= slack and psnr_row[action.index] > best_psnr:
            best, best_psnr = action, psnr_row[action.index]
    if best is None:
        logger.debug(f"no action fits the {slack:.3f} s runway, falling back to the lowest rate")
        return Action(0, 0)
    return best


class Policy:
    """Common interface; `decide` sees the simulator state at the decision instant"""
    name = 'policy'

    def reset(self):
        """Called at the start of every episode"""

    def decide(self, state: PipelineState) -> Action:
        raise NotImplementedError


class BDashPolicy(Policy):
    name = 'bdash'

    def decide(self, state: PipelineState) -> Action:
        return bdash_decide(state.throughput_history, state.config.mpd.bitrate_ladder)


class GreedyPolicy(Policy):
    name = 'greedy'

    def __init__(self, allow_enhance: bool = True):
        self.allow_enhance = allow_enhance

    def decide(self, state: PipelineState) -> Action:
        cfg = state.config
        allowed = None if self.allow_enhance else action_mask(cfg.num_actions, False)
        return greedy_decide(
            buffer_playback=state.buffer_playback,
            remaining_play=state.remaining_play,
            throughput_history=state.throughput_history[-cfg.k1:],
            enhance_time_history=state.enhance_time_history[-cfg.k2:],
            psnr_row=cfg.mpd.row(state.next_index),
            ladder=cfg.mpd.bitrate_ladder,
            chunk_duration=cfg.mpd.chunk_duration,
            fallback_enhance_time=enhancement_time(cfg.profile),
            allowed=allowed,
        )


class FixedPolicy(Policy):
    def __init__(self, action: Action):
        self.action = action
        self.name = f'fixed:{action.index}'

    def decide(self, state: PipelineState) -> Action:
        return self.action


class RandomPolicy(Policy):
    """Uniform over the legal actions; reseeded on every reset for reproducibility"""
    name = 'random'

    def __init__(self, seed: int = 0, allow_enhance: bool = True):
        self.seed = seed
        self.allow_enhance = allow_enhance
        self._episode = 0
        self.rng = np.random.default_rng(seed)

    def reset(self):
        self.rng = np.random.default_rng([self.seed, self._episode])
        self._episode += 1

    def decide(self, state: PipelineState) -> Action:
        legal = mask_actions(all_actions(len(state.config.mpd.bitrate_ladder)), self.allow_enhance)
        return legal[int(self.rng.integers(len(legal)))]
