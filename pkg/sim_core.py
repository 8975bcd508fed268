"""
sim_core.py

Discrete-event model of the two-buffer client: chunks are downloaded into the
download buffer, optionally enhanced one at a time, moved to the playback buffer
and played back-to-back.

For chunk i (1-based) with bitrate R_i and enhance flag p_i:

    t^D_i = 0                                                  (i = 1)
          = max(t^D_{i-1} + tau^D_{i-1}, t^E_{i-Bd})            otherwise
    tau^D_i = time to fetch R_i * T megabits from t^D_i
    t^E_i = t^D_i + tau^D_i                                    (i = 1)
          = max(t^E_{i-1} + tau^E_{i-1}, t^D_i + tau^D_i, t^P_{i-Bp})
    t^P_i = t^E_i + tau^E_i                                    (i = 1)
          = max(t^P_{i-1} + T, t^E_i + tau^E_i)
    tau^r_i = t^P_i - (t^P_{i-1} + T), and 0 for i = 1

Terms whose chunk index is < 1 are dropped. The engine keeps buffer occupancy
with two monotone counters; occupancy_by_formula re-derives it from scratch.
"""

import copy
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from errors import ConfigError, DomainError, SimulationError
from quality_model import ComputeProfile, MpdManifest, enhancement_time
from traces import BandwidthTrace, download_time

logger = logging.getLogger(__name__)

NUM_STATE_SCALARS = 5


@dataclass(frozen=True)
class Action:
    """(bitrate index, enhance flag); flat index = 2 * bitrate_index + enhance"""
    bitrate_index: int
    enhance: int = 0

    @property
    def index(self) -> int:
        return 2 * self.bitrate_index + self.enhance

    @classmethod
    def from_index(cls, index: int) -> 'Action':
        return cls(int(index) // 2, int(index) % 2)


def all_actions(num_bitrates: int) -> List[Action]:
    return [Action(b, p) for b in range(num_bitrates) for p in (0, 1)]


@dataclass(frozen=True)
class ObservationScales:
    """Divisors that bring observation features to roughly [0, 1]"""
    throughput_mbps: float = 10.0
    time_s: float = 10.0
    psnr_db: float = 50.0


@dataclass(frozen=True, eq=False)
class SimConfig:
    mpd: MpdManifest
    trace: BandwidthTrace
    profile: ComputeProfile
    db_cap: int = 5
    pb_cap: int = 5
    k1: int = 8
    k2: int = 8
    enhancement_jitter: float = 0.0
    seed: int = 0
    scales: ObservationScales = field(default_factory=ObservationScales)

    def __post_init__(self):
        for name in ('db_cap', 'pb_cap', 'k1', 'k2'):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.enhancement_jitter < 1.0:
            raise ConfigError(f"enhancement_jitter must be in [0, 1), got {self.enhancement_jitter}")

    @property
    def num_actions(self) -> int:
        return self.mpd.num_actions

    @property
    def observation_dim(self) -> int:
        return NUM_STATE_SCALARS + self.k1 + self.k2 + 1 + self.num_actions


@dataclass(frozen=True)
class StepOutcome:
    """Everything the QoE layer and the episode log need about one chunk"""
    chunk_index: int
    action_index: int
    bitrate_index: int
    enhance: int
    psnr: float
    rebuffer: float
    bitrate: float
    prev_bitrate: float
    throughput: float
    t_download: float
    download_time: float
    t_enhance: float
    enhance_time: float
    t_play: float
    buffer_download: int
    buffer_playback: int
    done: bool


@dataclass
class PipelineState:
    """Event timeline of one episode; single owner, mutated only by step()"""
    config: SimConfig
    rng: np.random.Generator
    next_index: int = 1
    enhanced_count: int = 0
    t_download: List[float] = field(default_factory=list)
    download_time: List[float] = field(default_factory=list)
    t_enhance: List[float] = field(default_factory=list)
    enhance_time: List[float] = field(default_factory=list)
    t_play: List[float] = field(default_factory=list)
    rebuffer: List[float] = field(default_factory=list)
    bitrates: List[float] = field(default_factory=list)
    throughput_history: List[float] = field(default_factory=list)
    enhance_time_history: List[float] = field(default_factory=list)
    prev_bitrate: float = 0.0
    # decision-instant view of the next chunk
    request_time: float = 0.0
    buffer_download: int = 0
    buffer_playback: int = 0
    elapsed_enhance: float = 0.0
    remaining_play: float = 0.0
    done: bool = False
    entered_enhancer: int = 0
    started_playing: int = 0

    @property
    def num_decided(self) -> int:
        return len(self.t_download)

    @property
    def download_percent(self) -> float:
        return (self.next_index - 1) / self.config.mpd.num_chunks

    @property
    def startup_delay(self) -> Optional[float]:
        return self.t_play[0] if self.t_play else None

    def copy(self) -> 'PipelineState':
        """Independent copy sharing only the immutable config.

        The generator is only drawn from under enhancement jitter, so without
        jitter the copy shares it.
        """
        clone = copy.copy(self)
        for name in _TIMELINE_FIELDS:
            setattr(clone, name, list(getattr(self, name)))
        if self.config.enhancement_jitter > 0:
            clone.rng = copy.deepcopy(self.rng)
        return clone


_TIMELINE_FIELDS = ('t_download', 'download_time', 't_enhance', 'enhance_time', 't_play', 'rebuffer',
                    'bitrates', 'throughput_history', 'enhance_time_history')


def reset(config: SimConfig) -> Tuple[PipelineState, np.ndarray]:
    """Fresh episode: chunk 1 is requested at t = 0 with empty buffers and histories"""
    state = PipelineState(config=config, rng=np.random.default_rng(config.seed))
    _refresh_decision_view(state)
    return state, observe(state)


def _coerce_action(config: SimConfig, action: Union[Action, int]) -> Action:
    if not isinstance(action, Action):
        index = int(action)
        if not 0 <= index < config.num_actions:
            raise SimulationError(f"action index {index} outside [0, {config.num_actions})")
        action = Action.from_index(index)
    if not 0 <= action.bitrate_index < len(config.mpd.bitrate_ladder):
        raise SimulationError(f"bitrate index {action.bitrate_index} outside the ladder")
    if action.enhance not in (0, 1):
        raise SimulationError(f"enhance flag must be 0 or 1, got {action.enhance}")
    return action


def _refresh_decision_view(state: PipelineState):
    """Advance the occupancy counters to the next request instant and derive l^E, l^P"""
    t = state.request_time
    decided = state.num_decided
    while state.entered_enhancer < decided and state.t_enhance[state.entered_enhancer] < t:
        state.entered_enhancer += 1
    while state.started_playing < decided and state.t_play[state.started_playing] < t:
        state.started_playing += 1

    m, p = state.entered_enhancer, state.started_playing
    state.buffer_download = (state.next_index - 1) - m
    state.buffer_playback = max(m - 1 - p, 0)

    state.elapsed_enhance = 0.0
    if m >= 1 and state.enhance_time[m - 1] > 0 and t < state.t_enhance[m - 1] + state.enhance_time[m - 1]:
        state.elapsed_enhance = t - state.t_enhance[m - 1]

    state.remaining_play = 0.0
    if p >= 1:
        state.remaining_play = max(state.config.mpd.chunk_duration - (t - state.t_play[p - 1]), 0.0)


def step(state: PipelineState, action: Union[Action, int]) -> Tuple[PipelineState, StepOutcome, np.ndarray]:
    """Decide chunk `state.next_index` with `action` and advance the timeline.

    Returns (state, outcome, next observation); the observation after the last
    chunk is all zeros.

    Raises:
        SimulationError: step after done, or action outside the action set
    """
    state, outcome = advance(state, action)
    if state.done:
        return state, outcome, np.zeros(state.config.observation_dim)
    return state, outcome, observe(state)


def advance(state: PipelineState, action: Union[Action, int]) -> Tuple[PipelineState, StepOutcome]:
    """step() without building the next observation"""
    if state.done:
        raise SimulationError("episode is done; call reset()")
    cfg = state.config
    action = _coerce_action(cfg, action)

    i = state.next_index
    T = cfg.mpd.chunk_duration
    rate = cfg.mpd.bitrate_ladder[action.bitrate_index]

    t_d = state.request_time
    tau_d = download_time(cfg.trace, t_d, rate * T)

    if i == 1:
        t_e = t_d + tau_d
    else:
        t_e = max(state.t_enhance[-1] + state.enhance_time[-1], t_d + tau_d)
        if i - cfg.pb_cap >= 1:
            t_e = max(t_e, state.t_play[i - cfg.pb_cap - 1])

    tau_e = enhancement_time(cfg.profile, state.rng, cfg.enhancement_jitter) if action.enhance else 0.0

    if i == 1:
        t_p = t_e + tau_e
        tau_r = 0.0
    else:
        t_p = max(state.t_play[-1] + T, t_e + tau_e)
        tau_r = t_p - (state.t_play[-1] + T)

    throughput = rate * T / tau_d
    outcome = StepOutcome(
        chunk_index=i,
        action_index=action.index,
        bitrate_index=action.bitrate_index,
        enhance=action.enhance,
        psnr=cfg.mpd.psnr(i, action.index),
        rebuffer=tau_r,
        bitrate=rate,
        prev_bitrate=state.prev_bitrate,
        throughput=throughput,
        t_download=t_d,
        download_time=tau_d,
        t_enhance=t_e,
        enhance_time=tau_e,
        t_play=t_p,
        buffer_download=state.buffer_download,
        buffer_playback=state.buffer_playback,
        done=i == cfg.mpd.num_chunks,
    )

    state.t_download.append(t_d)
    state.download_time.append(tau_d)
    state.t_enhance.append(t_e)
    state.enhance_time.append(tau_e)
    state.t_play.append(t_p)
    state.rebuffer.append(tau_r)
    state.bitrates.append(rate)
    state.throughput_history.append(throughput)
    if action.enhance:
        state.enhanced_count += 1
        state.enhance_time_history.append(tau_e)
    state.prev_bitrate = rate
    state.next_index = i + 1
    state.done = outcome.done

    if state.done:
        return state, outcome

    nxt = i + 1
    state.request_time = t_d + tau_d
    if nxt - cfg.db_cap >= 1:
        state.request_time = max(state.request_time, state.t_enhance[nxt - cfg.db_cap - 1])
    _refresh_decision_view(state)
    return state, outcome


def occupancy_by_formula(state: PipelineState, i: int) -> Tuple[int, int]:
    """Buffer occupancies at t^D_i straight from the argmax expressions.

    B^D_i = (i - 1) - max{j : t^E_j < t^D_i}
    B^P_i = max{j : t^E_j < t^D_i} - 1 - max{j : t^P_j < t^D_i}, floored at 0
    with j ranging over chunks 1..i-1 and the max of an empty set taken as 0.
    """
    if 1 <= i <= state.num_decided:
        t = state.t_download[i - 1]
    elif i == state.next_index and not state.done:
        t = state.request_time
    else:
        raise DomainError(f"chunk {i} has no request time yet")

    enhance_starts = np.asarray(state.t_enhance[:i - 1])
    play_starts = np.asarray(state.t_play[:i - 1])
    entered = np.nonzero(enhance_starts < t)[0]
    playing = np.nonzero(play_starts < t)[0]
    last_entered = int(entered.max()) + 1 if entered.size else 0
    last_playing = int(playing.max()) + 1 if playing.size else 0
    return (i - 1) - last_entered, max(last_entered - 1 - last_playing, 0)


def _history(values: Sequence[float], length: int, scale: float) -> np.ndarray:
    """Most recent first, zero-padded to `length`"""
    out = np.zeros(length)
    recent = list(values[-length:])[::-1]
    out[:len(recent)] = np.asarray(recent) / scale
    return out


def observe(state: PipelineState) -> np.ndarray:
    """Observation vector for deciding chunk `state.next_index`.

    Layout: [B^D, B^P, P, l^E, l^P, c history (k1), enhance-time history (k2),
    R_{i-1}, PSNR map row of chunk i (|A|)], each normalised.
    """
    if state.done:
        raise SimulationError("no observation after the last chunk")
    cfg = state.config
    scales = cfg.scales
    scalars = np.array([
        state.buffer_download / cfg.db_cap,
        state.buffer_playback / cfg.pb_cap,
        state.download_percent,
        state.elapsed_enhance / scales.time_s,
        state.remaining_play / scales.time_s,
    ])
    return np.concatenate([
        scalars,
        _history(state.throughput_history, cfg.k1, scales.throughput_mbps),
        _history(state.enhance_time_history, cfg.k2, scales.time_s),
        [state.prev_bitrate / max(cfg.mpd.bitrate_ladder)],
        cfg.mpd.row(state.next_index) / scales.psnr_db,
    ])


def simulate(config: SimConfig, actions: Sequence[Union[Action, int]]) -> List[StepOutcome]:
    """Run a whole action sequence from reset"""
    state, _ = reset(config)
    outcomes = []
    for action in actions:
        state, outcome, _ = step(state, action)
        outcomes.append(outcome)
    return outcomes


EPISODE_LOG_COLUMNS = {
    'chunk_index': 'chunk',
    'bitrate': 'bitrate_mbps',
    'enhance': 'enhance',
    't_download': 't_download',
    'download_time': 'download_time',
    't_enhance': 't_enhance',
    'enhance_time': 'enhance_time',
    't_play': 't_play',
    'rebuffer': 'rebuffer',
    'psnr': 'psnr',
    'buffer_download': 'buffer_download',
    'buffer_playback': 'buffer_playback',
}


def episode_log_frame(outcomes: Sequence[StepOutcome]) -> pd.DataFrame:
    """One row per chunk, in decision order"""
    rows = [{column: getattr(o, attr) for attr, column in EPISODE_LOG_COLUMNS.items()} for o in outcomes]
    return pd.DataFrame(rows, columns=list(EPISODE_LOG_COLUMNS.values()))


def write_episode_log(outcomes: Sequence[StepOutcome], path: str):
    episode_log_frame(outcomes).to_csv(path, index=False)
    logger.info(f"episode log with {len(outcomes)} chunks written to {path}")
