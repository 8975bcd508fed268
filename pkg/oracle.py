"""
oracle.py

Offline optimum by exhaustive enumeration of action sequences on small instances.

Sequences are visited depth-first in lexicographic order of action indices; a
prefix is simulated once and its state copied for every continuation but the
last, which reuses it. Only a strictly better QoE replaces the incumbent, so
ties resolve to the lexicographically smallest sequence.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

from errors import BudgetExceededError, DomainError
from qoe import QoeBreakdown, QoeWeights, episode_qoe
from sim_core import PipelineState, SimConfig, StepOutcome, advance, reset, simulate

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 10 ** 6
_SCREEN_TOLERANCE = 1e-9


@dataclass(frozen=True)
class OracleResult:
    best_qoe: float
    best_actions: Tuple[int, ...]
    breakdown: QoeBreakdown
    evaluated: int

    def to_dict(self) -> Dict:
        return {
            'best_qoe': self.best_qoe,
            'best_actions': list(self.best_actions),
            'breakdown': self.breakdown.to_dict(),
            'evaluated': self.evaluated,
        }


def with_horizon(config: SimConfig, horizon: Optional[int]) -> SimConfig:
    """Same instance restricted to the first `horizon` chunks"""
    if horizon is None or horizon == config.mpd.num_chunks:
        return config
    if not 1 <= horizon <= config.mpd.num_chunks:
        raise DomainError(f"horizon {horizon} outside [1, {config.mpd.num_chunks}]")
    return replace(config, mpd=config.mpd.truncated(horizon))


def score_sequence(config: SimConfig, weights: QoeWeights, actions: Sequence[int]) -> QoeBreakdown:
    """QoE of one action sequence simulated from scratch"""
    return episode_qoe(weights, simulate(config, actions))


class _Search:
    """Depth-first walk of one subtree.

    Running sums of PSNR, variation and re-buffering give each leaf's QoE up to
    rounding; the exact episode_qoe is computed only for leaves within
    `_SCREEN_TOLERANCE` of the incumbent, so the comparison stays exact.
    """

    def __init__(self, weights: QoeWeights, num_actions: int, num_chunks: int):
        self.weights = weights
        self.num_actions = num_actions
        self.num_chunks = num_chunks
        self.best: Optional[Tuple[float, Tuple[int, ...], QoeBreakdown]] = None
        self.evaluated = 0

    def _estimate(self, sums: Tuple[float, float, float]) -> float:
        n, w = self.num_chunks, self.weights
        variation = sums[1] / (n - 1) if n > 1 else 0.0
        return w.alpha1 * sums[0] / n - w.alpha2 * variation - w.alpha3 * sums[2] / n

    def _leaf(self, prefix: List[int], outcomes: List[StepOutcome], sums: Tuple[float, float, float]):
        self.evaluated += 1
        if self.best is not None:
            incumbent = self.best[0]
            if self._estimate(sums) < incumbent - _SCREEN_TOLERANCE * (1.0 + abs(incumbent)):
                return
        breakdown = episode_qoe(self.weights, outcomes)
        if self.best is None or breakdown.weighted_total > self.best[0]:
            self.best = (breakdown.weighted_total, tuple(prefix), breakdown)

    def visit(self, state: PipelineState, prefix: List[int], outcomes: List[StepOutcome],
              sums: Tuple[float, float, float]):
        if state.done:
            self._leaf(prefix, outcomes, sums)
            return
        last = self.num_actions - 1
        for action in range(self.num_actions):
            child, outcome = advance(state if action == last else state.copy(), action)
            prefix.append(action)
            outcomes.append(outcome)
            self.visit(child, prefix, outcomes, _accumulate(sums, outcome))
            prefix.pop()
            outcomes.pop()


def _accumulate(sums: Tuple[float, float, float], outcome: StepOutcome) -> Tuple[float, float, float]:
    variation = abs(outcome.bitrate - outcome.prev_bitrate) if outcome.chunk_index > 1 else 0.0
    return (sums[0] + outcome.psnr, sums[1] + variation, sums[2] + outcome.rebuffer)


def _search_subtree(config: SimConfig, weights: QoeWeights, first_action: int) -> _Search:
    search = _Search(weights, config.num_actions, config.mpd.num_chunks)
    state, _ = reset(config)
    state, outcome = advance(state, first_action)
    search.visit(state, [first_action], [outcome], _accumulate((0.0, 0.0, 0.0), outcome))
    return search


def exhaustive_best(config: SimConfig, weights: QoeWeights, horizon: Optional[int] = None,
                    budget: int = DEFAULT_BUDGET, workers: int = 1) -> OracleResult:
    """Best achievable episode QoE over every action sequence.

    Args:
        config: simulated instance
        weights: QoE weights
        horizon: number of chunks to plan over (default: the whole video)
        budget: maximum number of sequences to enumerate
        workers: subtrees (one per first action) searched concurrently

    Raises:
        BudgetExceededError: |A| ** horizon exceeds `budget`
    """
    config = with_horizon(config, horizon)
    num_actions, num_chunks = config.num_actions, config.mpd.num_chunks
    total = num_actions ** num_chunks
    if total > budget:
        raise BudgetExceededError(f"{num_actions}^{num_chunks} = {total} sequences exceed the budget of {budget}")

    logger.info(f"enumerating {total} sequences over {num_chunks} chunks")
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        subtrees = list(pool.map(lambda a: _search_subtree(config, weights, a), range(num_actions)))

    best, evaluated = None, 0
    for search in subtrees:
        evaluated += search.evaluated
        if best is None or search.best[0] > best[0]:
            best = search.best

    return OracleResult(best_qoe=best[0], best_actions=best[1], breakdown=best[2], evaluated=evaluated)
