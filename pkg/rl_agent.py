"""
rl_agent.py

Actor-critic agent for chunk-level (bitrate, enhance) decisions.

Two separate tanh MLPs share the observation vector: the actor ends in a
(masked) softmax over the flat action set, the critic in a scalar state value.
Training follows the advantage actor-critic updates literally:

    A(s_i, a_i) = r_i + gamma * V(s_{i+1}) - V(s_i)
    theta <- theta + lr_actor * grad sum_i [A_i * ln pi(a_i | s_i) + eta * H(pi(s_i))]
    omega <- omega - lr_critic * grad 1/2 sum_i (r_i + gamma * V(s_{i+1}) - V(s_i))^2

with the bootstrap target held fixed. Workers collect full-episode rollouts in
parallel; their updates are applied one at a time in episode order, or as
rollouts finish in asynchronous mode.
"""

import json
import logging
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from errors import ConfigError, DomainError, TrainingError
from policies import Policy
from qoe import QoeWeights, chunk_reward, episode_qoe
from sim_core import Action, PipelineState, SimConfig, StepOutcome, observe, reset, step

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
DEFAULT_HIDDEN = (128, 128)

Layers = List[np.ndarray]


@dataclass(eq=False)
class AgentParams:
    """Actor (theta) and critic (omega) weights; weight matrices are (fan_in, fan_out)"""
    actor_weights: Layers
    actor_biases: Layers
    critic_weights: Layers
    critic_biases: Layers
    action_mask: Optional[np.ndarray] = None

    @property
    def input_dim(self) -> int:
        return int(self.actor_weights[0].shape[0])

    @property
    def hidden(self) -> Tuple[int, ...]:
        return tuple(int(w.shape[1]) for w in self.actor_weights[:-1])

    @property
    def num_actions(self) -> int:
        return int(self.actor_weights[-1].shape[1])

    def architecture(self) -> Dict:
        return {'input_dim': self.input_dim, 'hidden': list(self.hidden), 'num_actions': self.num_actions}

    def copy(self) -> 'AgentParams':
        return AgentParams(
            actor_weights=[w.copy() for w in self.actor_weights],
            actor_biases=[b.copy() for b in self.actor_biases],
            critic_weights=[w.copy() for w in self.critic_weights],
            critic_biases=[b.copy() for b in self.critic_biases],
            action_mask=None if self.action_mask is None else self.action_mask.copy(),
        )

    def is_finite(self) -> bool:
        arrays = self.actor_weights + self.actor_biases + self.critic_weights + self.critic_biases
        return all(np.all(np.isfinite(a)) for a in arrays)


def _init_mlp(rng: np.random.Generator, sizes: Sequence[int]) -> Tuple[Layers, Layers]:
    """Hidden layers U(-1/sqrt(fan_in), 1/sqrt(fan_in)); output layer all zeros"""
    weights, biases = [], []
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if k == len(sizes) - 2:
            weights.append(np.zeros((fan_in, fan_out)))
        else:
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def init_params(input_dim: int, num_actions: int, hidden: Sequence[int] = DEFAULT_HIDDEN,
                seed: int = 0, action_mask: Optional[np.ndarray] = None) -> AgentParams:
    """Fresh parameters: uniform initial policy and zero value everywhere"""
    if input_dim < 1 or num_actions < 1:
        raise ConfigError(f"invalid architecture {input_dim} -> {num_actions}")
    if action_mask is not None:
        action_mask = np.asarray(action_mask, dtype=bool)
        if action_mask.shape != (num_actions,) or not action_mask.any():
            raise ConfigError("action mask must cover every action and allow at least one")
    rng = np.random.default_rng(seed)
    actor_w, actor_b = _init_mlp(rng, [input_dim, *hidden, num_actions])
    critic_w, critic_b = _init_mlp(rng, [input_dim, *hidden, 1])
    return AgentParams(actor_w, actor_b, critic_w, critic_b, action_mask)


def _mlp_forward(weights: Layers, biases: Layers, x: np.ndarray) -> Tuple[np.ndarray, Layers]:
    """Linear output plus the input of every layer (for backprop)"""
    activations = [x]
    h = x
    for W, b in zip(weights[:-1], biases[:-1]):
        h = np.tanh(h @ W + b)
        activations.append(h)
    return h @ weights[-1] + biases[-1], activations


def _mlp_backward(weights: Layers, activations: Layers, grad_out: np.ndarray) -> Tuple[Layers, Layers]:
    grads_w: Layers = [None] * len(weights)
    grads_b: Layers = [None] * len(weights)
    delta = grad_out
    for k in range(len(weights) - 1, -1, -1):
        grads_w[k] = activations[k].T @ delta
        grads_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ weights[k].T) * (1.0 - activations[k] ** 2)
    return grads_w, grads_b


def _as_batch(params: AgentParams, obs: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(obs, dtype=float))
    if x.shape[1] != params.input_dim:
        raise DomainError(f"observation has {x.shape[1]} features, network expects {params.input_dim}")
    return x


def _masked_softmax(logits: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    if mask is not None:
        logits = np.where(mask, logits, -np.inf)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params: AgentParams, obs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Action probabilities and state value.

    A single observation gives (probs of shape (|A|,), scalar value); a batch of
    shape (B, d) gives ((B, |A|), (B,)). Masked actions get probability 0.
    """
    x = _as_batch(params, obs)
    logits, _ = _mlp_forward(params.actor_weights, params.actor_biases, x)
    values, _ = _mlp_forward(params.critic_weights, params.critic_biases, x)
    probs = _masked_softmax(logits, params.action_mask)
    values = values[:, 0]
    if np.ndim(obs) == 1:
        return probs[0], values[0]
    return probs, values


def critic_values(params: AgentParams, states: np.ndarray) -> np.ndarray:
    values, _ = _mlp_forward(params.critic_weights, params.critic_biases, _as_batch(params, states))
    return values[:, 0]


def advantage(r: float, v_next: float, v_cur: float, gamma: float, terminal: bool) -> float:
    return r + gamma * v_next * (0.0 if terminal else 1.0) - v_cur


def policy_entropy(probs: np.ndarray) -> np.ndarray:
    """Entropy in nats, 0 * ln 0 taken as 0; row-wise for a batch"""
    return stats.entropy(probs, axis=-1)


@dataclass
class Rollout:
    """One full episode of (s_i, a_i, r_i, s_{i+1}, done_i) transitions; rewards are raw QoE terms"""
    states: List[np.ndarray] = field(default_factory=list)
    actions: List[int] = field(default_factory=list)
    rewards: List[float] = field(default_factory=list)
    next_states: List[np.ndarray] = field(default_factory=list)
    dones: List[bool] = field(default_factory=list)
    outcomes: List[StepOutcome] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.actions)

    def state_matrix(self) -> np.ndarray:
        return np.vstack(self.states)

    def next_state_matrix(self) -> np.ndarray:
        return np.vstack(self.next_states)

    @property
    def total_reward(self) -> float:
        return float(np.sum(self.rewards))


def collect_rollout(params: AgentParams, sim_config: SimConfig, weights: QoeWeights,
                    rng: np.random.Generator, greedy: bool = False) -> Rollout:
    """Play one episode, sampling actions from the policy (argmax when greedy)"""
    rollout = Rollout()
    state, obs = reset(sim_config)
    while not state.done:
        probs, _ = forward(params, obs)
        if greedy:
            action = int(np.argmax(probs))
        else:
            action = int(rng.choice(probs.size, p=probs))
        state, outcome, next_obs = step(state, action)
        rollout.states.append(obs)
        rollout.actions.append(action)
        rollout.rewards.append(chunk_reward(weights, outcome))
        rollout.next_states.append(next_obs)
        rollout.dones.append(outcome.done)
        rollout.outcomes.append(outcome)
        obs = next_obs
    return rollout


def _bootstrap_targets(rollout: Rollout, next_values: np.ndarray, gamma: float,
                       reward_scale: float) -> np.ndarray:
    rewards = reward_scale * np.asarray(rollout.rewards, dtype=float)
    alive = 1.0 - np.asarray(rollout.dones, dtype=float)
    return rewards + gamma * next_values * alive


def compute_advantages(rollout: Rollout, values: np.ndarray, gamma: float,
                       next_values: Optional[np.ndarray] = None,
                       reward_scale: float = 1.0) -> np.ndarray:
    """Per-step advantages for a rollout.

    Args:
        rollout: transitions of one episode
        values: V(s_i) for every step
        gamma: discount
        next_values: V(s_{i+1}); defaults to the next step's entry of `values`
            (0 after the last step, which is terminal for full episodes)
        reward_scale: multiplier applied to the raw rewards
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (len(rollout),):
        raise DomainError(f"{values.size} values for a rollout of {len(rollout)} steps")
    if next_values is None:
        next_values = np.append(values[1:], 0.0)
    return _bootstrap_targets(rollout, np.asarray(next_values, dtype=float), gamma, reward_scale) - values


def actor_objective(params: AgentParams, states: np.ndarray, actions: Sequence[int],
                    advantages: np.ndarray, eta: float) -> float:
    """sum_i A_i * ln pi(a_i | s_i) + eta * H(pi(s_i))"""
    probs, _ = forward(params, np.atleast_2d(states))
    taken = probs[np.arange(len(actions)), np.asarray(actions)]
    return float(np.sum(advantages * np.log(taken)) + eta * np.sum(policy_entropy(probs)))


def actor_gradient(params: AgentParams, states: np.ndarray, actions: Sequence[int],
                   advantages: np.ndarray, eta: float) -> Tuple[Layers, Layers]:
    """Gradient of actor_objective with respect to the actor weights (advantages constant)"""
    x = _as_batch(params, states)
    logits, activations = _mlp_forward(params.actor_weights, params.actor_biases, x)
    probs = _masked_softmax(logits, params.action_mask)

    onehot = np.zeros_like(probs)
    onehot[np.arange(len(actions)), np.asarray(actions)] = 1.0
    log_probs = np.log(np.where(probs > 0, probs, 1.0))
    entropy = -np.sum(probs * log_probs, axis=1, keepdims=True)

    grad_logits = np.asarray(advantages, dtype=float)[:, None] * (onehot - probs)
    grad_logits -= eta * probs * (log_probs + entropy)
    return _mlp_backward(params.actor_weights, activations, grad_logits)


def critic_loss(params: AgentParams, states: np.ndarray, targets: np.ndarray) -> float:
    """1/2 sum_i (y_i - V(s_i))^2 for fixed targets y_i"""
    return float(0.5 * np.sum((np.asarray(targets) - critic_values(params, states)) ** 2))


def critic_gradient(params: AgentParams, states: np.ndarray, targets: np.ndarray) -> Tuple[Layers, Layers]:
    """Gradient of critic_loss with respect to the critic weights"""
    x = _as_batch(params, states)
    values, activations = _mlp_forward(params.critic_weights, params.critic_biases, x)
    grad_out = values - np.asarray(targets, dtype=float)[:, None]
    return _mlp_backward(params.critic_weights, activations, grad_out)


def _check_gradients(kind: str, grads_w: Layers, grads_b: Layers):
    if not all(np.all(np.isfinite(g)) for g in grads_w + grads_b):
        norms = [float(np.linalg.norm(g)) for g in grads_w]
        raise TrainingError(f"non-finite {kind} gradient", diagnostics={'weight_grad_norms': norms})


def _sgd(weights: Layers, biases: Layers, grads_w: Layers, grads_b: Layers,
         step_size: float) -> Tuple[Layers, Layers]:
    return ([w + step_size * g for w, g in zip(weights, grads_w)],
            [b + step_size * g for b, g in zip(biases, grads_b)])


def actor_update(params: AgentParams, rollout: Rollout, advantages: np.ndarray, lr: float,
                 eta: float, average_over_episode: bool = False) -> AgentParams:
    """One gradient-ascent step on the entropy-regularised policy objective"""
    grads_w, grads_b = actor_gradient(params, rollout.state_matrix(), rollout.actions, advantages, eta)
    _check_gradients('actor', grads_w, grads_b)
    step_size = lr / len(rollout) if average_over_episode else lr
    weights, biases = _sgd(params.actor_weights, params.actor_biases, grads_w, grads_b, step_size)
    return AgentParams(weights, biases, params.critic_weights, params.critic_biases, params.action_mask)


def critic_targets(params: AgentParams, rollout: Rollout, gamma: float, reward_scale: float = 1.0) -> np.ndarray:
    return _bootstrap_targets(rollout, critic_values(params, rollout.next_state_matrix()), gamma, reward_scale)


def critic_update(params: AgentParams, rollout: Rollout, gamma: float, lr: float,
                  reward_scale: float = 1.0, average_over_episode: bool = False) -> AgentParams:
    """One semi-gradient descent step on the squared TD error"""
    states = rollout.state_matrix()
    targets = critic_targets(params, rollout, gamma, reward_scale)
    loss = critic_loss(params, states, targets)
    if not np.isfinite(loss):
        raise TrainingError("non-finite critic loss", diagnostics={'loss': loss})
    grads_w, grads_b = critic_gradient(params, states, targets)
    _check_gradients('critic', grads_w, grads_b)
    step_size = lr / len(rollout) if average_over_episode else lr
    weights, biases = _sgd(params.critic_weights, params.critic_biases, grads_w, grads_b, -step_size)
    return AgentParams(params.actor_weights, params.actor_biases, weights, biases, params.action_mask)


@dataclass
class TrainConfig:
    gamma: float = 0.9
    eta: float = 0.01
    actor_lr: float = 0.5
    critic_lr: float = 1e-4
    workers: int = 1
    episodes: int = 2000
    seed: int = 0
    hidden: Tuple[int, ...] = DEFAULT_HIDDEN
    reward_scale: float = 0.1
    average_over_episode: bool = True
    divergence_bound: float = 1e3
    divergence_patience: int = 50
    asynchronous: bool = False
    log_every: int = 100

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.eta < 0:
            raise ConfigError(f"entropy weight must be non-negative, got {self.eta}")
        if self.workers < 1 or self.episodes < 0:
            raise ConfigError("workers must be >= 1 and episodes >= 0")
        if self.reward_scale <= 0 or self.divergence_bound <= 0 or self.divergence_patience < 1:
            raise ConfigError("reward_scale, divergence_bound and divergence_patience must be positive")
        self.hidden = tuple(int(h) for h in self.hidden)


EnvFactory = Callable[[np.random.Generator], SimConfig]

CURVE_COLUMNS = ['episode', 'worker', 'num_chunks', 'total_reward', 'mean_reward', 'qoe',
                 'entropy', 'mean_abs_advantage', 'critic_loss']


def _worker_rollout(params: AgentParams, env_factory: EnvFactory, weights: QoeWeights,
                    seed: int, episode: int) -> Rollout:
    rng = np.random.default_rng([seed, episode])
    return collect_rollout(params, env_factory(rng), weights, rng)


def _apply_rollout(params: AgentParams, rollout: Rollout, config: TrainConfig,
                   weights: QoeWeights) -> Tuple[AgentParams, Dict]:
    states = rollout.state_matrix()
    values = critic_values(params, states)
    next_values = critic_values(params, rollout.next_state_matrix())
    advantages = compute_advantages(rollout, values, config.gamma, next_values, config.reward_scale)
    probs, _ = forward(params, states)
    targets = advantages + values

    stats_row = {
        'num_chunks': len(rollout),
        'total_reward': rollout.total_reward,
        'mean_reward': rollout.total_reward / len(rollout),
        'qoe': episode_qoe(weights, rollout.outcomes).weighted_total,
        'entropy': float(np.mean(policy_entropy(probs))),
        'mean_abs_advantage': float(np.mean(np.abs(advantages))),
        'critic_loss': critic_loss(params, states, targets),
    }

    params = actor_update(params, rollout, advantages, config.actor_lr, config.eta,
                          config.average_over_episode)
    params = critic_update(params, rollout, config.gamma, config.critic_lr, config.reward_scale,
                           config.average_over_episode)
    return params, stats_row


class _Trainer:
    """Applies finished rollouts to the shared parameters and keeps the curve"""

    def __init__(self, config: TrainConfig, weights: QoeWeights, params: AgentParams):
        self.config = config
        self.weights = weights
        self.params = params
        self.rows: List[Dict] = []
        self.strikes = 0

    def apply(self, episode: int, worker: int, rollout: Rollout):
        config = self.config
        self.params, row = _apply_rollout(self.params, rollout, config, self.weights)
        row.update(episode=episode, worker=worker)
        self.rows.append(row)

        if row['mean_abs_advantage'] > config.divergence_bound:
            self.strikes += 1
            logger.warning(f"episode {episode}: mean |advantage| {row['mean_abs_advantage']:.3g} "
                           f"above bound ({self.strikes}/{config.divergence_patience})")
            if self.strikes >= config.divergence_patience:
                raise TrainingError("training diverged", diagnostics={
                    'episode': episode, 'mean_abs_advantage': row['mean_abs_advantage'],
                    'bound': config.divergence_bound})
        else:
            self.strikes = 0

        done = len(self.rows)
        if config.log_every and done % config.log_every == 0:
            recent = pd.DataFrame(self.rows[-config.log_every:])
            logger.info(f"episode {done}/{config.episodes}: mean QoE {recent['qoe'].mean():.3f}, "
                        f"entropy {recent['entropy'].mean():.3f}")

    def run_rounds(self, pool: ThreadPoolExecutor, env_factory: EnvFactory):
        config = self.config
        for round_start in range(0, config.episodes, config.workers):
            episodes = range(round_start, min(round_start + config.workers, config.episodes))
            snapshot = self.params
            futures = [pool.submit(_worker_rollout, snapshot, env_factory, self.weights, config.seed, e)
                       for e in episodes]
            for episode, future in zip(episodes, futures):
                self.apply(episode, episode - round_start, future.result())

    def run_asynchronous(self, pool: ThreadPoolExecutor, env_factory: EnvFactory):
        config = self.config
        pending: Dict = {}
        next_episode = 0

        def launch(worker: int):
            nonlocal next_episode
            future = pool.submit(_worker_rollout, self.params, env_factory, self.weights,
                                 config.seed, next_episode)
            pending[future] = (next_episode, worker)
            next_episode += 1

        for worker in range(min(config.workers, config.episodes)):
            launch(worker)
        while pending:
            finished, _ = wait(pending, return_when=FIRST_COMPLETED)
            for future in sorted(finished, key=lambda f: pending[f][0]):
                episode, worker = pending.pop(future)
                self.apply(episode, worker, future.result())
                if next_episode < config.episodes:
                    launch(worker)


def train(config: TrainConfig, env_factory: EnvFactory, weights: QoeWeights,
          action_mask: Optional[np.ndarray] = None,
          params: Optional[AgentParams] = None) -> Tuple[AgentParams, pd.DataFrame]:
    """Train the agent on episodes drawn from `env_factory`.

    By default each round collects `workers` rollouts in parallel with the
    round's parameters, then applies their updates one after another in episode
    order, so the result does not depend on thread timing. With `asynchronous`
    every worker picks up the current parameters as soon as its previous rollout
    has been applied, and updates land in completion order (not reproducible
    across runs when workers > 1). Episode e uses the generator seeded with
    (config.seed, e) for both the environment draw and action sampling.

    Returns:
        (final params, training curve with one row per episode)

    Raises:
        TrainingError: non-finite gradients, or mean |advantage| above
            divergence_bound for divergence_patience consecutive episodes
    """
    if params is None:
        sample = env_factory(np.random.default_rng(config.seed))
        params = init_params(sample.observation_dim, sample.num_actions, config.hidden, config.seed, action_mask)
    elif action_mask is not None:
        params = params.copy()
        params.action_mask = np.asarray(action_mask, dtype=bool)

    trainer = _Trainer(config, weights, params)
    mode = "asynchronous" if config.asynchronous else "synchronous"
    logger.info(f"training for {config.episodes} episodes with {config.workers} {mode} worker(s)")

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        if config.asynchronous:
            trainer.run_asynchronous(pool, env_factory)
        else:
            trainer.run_rounds(pool, env_factory)

    curve = pd.DataFrame(trainer.rows, columns=CURVE_COLUMNS)
    return trainer.params, curve


def _layers_to_json(weights: Layers, biases: Layers) -> List[Dict]:
    return [{'shape': list(w.shape), 'weight': w.ravel().tolist(), 'bias': b.tolist()}
            for w, b in zip(weights, biases)]


def _layers_from_json(layers: List[Dict]) -> Tuple[Layers, Layers]:
    weights = [np.asarray(layer['weight'], dtype=float).reshape(layer['shape']) for layer in layers]
    biases = [np.asarray(layer['bias'], dtype=float) for layer in layers]
    return weights, biases


def save_checkpoint(params: AgentParams, path: str, metadata: Optional[Dict] = None):
    """JSON checkpoint: format version, architecture, flat row-major arrays and the action mask"""
    payload = {
        'format_version': CHECKPOINT_FORMAT_VERSION,
        'architecture': params.architecture(),
        'actor': _layers_to_json(params.actor_weights, params.actor_biases),
        'critic': _layers_to_json(params.critic_weights, params.critic_biases),
        'action_mask': None if params.action_mask is None else params.action_mask.astype(int).tolist(),
        'metadata': metadata or {},
    }
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f)
    logger.info(f"checkpoint written to {path}")


def load_checkpoint(path: str) -> Tuple[AgentParams, Dict]:
    """Returns (params, metadata)"""
    with open(path, 'r', encoding='utf-8') as f:
        payload = json.load(f)
    if payload.get('format_version') != CHECKPOINT_FORMAT_VERSION:
        raise ConfigError(f"unsupported checkpoint format {payload.get('format_version')} in {path}")
    try:
        actor_w, actor_b = _layers_from_json(payload['actor'])
        critic_w, critic_b = _layers_from_json(payload['critic'])
    except (KeyError, ValueError) as e:
        raise ConfigError(f"corrupt checkpoint {path}: {e}") from e
    mask = payload.get('action_mask')
    params = AgentParams(actor_w, actor_b, critic_w, critic_b,
                         None if mask is None else np.asarray(mask, dtype=bool))
    if params.architecture() != payload.get('architecture'):
        raise ConfigError(f"checkpoint {path}: weights do not match the declared architecture")
    return params, payload.get('metadata', {})


class ActorCriticPolicy(Policy):
    """Trained agent behind the common policy interface; argmax unless `sample` is set"""

    def __init__(self, params: AgentParams, name: str = 'actor_critic', sample: bool = False, seed: int = 0):
        self.params = params
        self.name = name
        self.sample = sample
        self.rng = np.random.default_rng(seed)

    def decide(self, state: PipelineState) -> Action:
        probs, _ = forward(self.params, observe(state))
        if self.sample:
            return Action.from_index(int(self.rng.choice(probs.size, p=probs)))
        return Action.from_index(int(np.argmax(probs)))
