"""
qoe.py

Per-chunk reward and episode QoE:

    r_i = a1 * PSNR(a_i) - a2 * |R_i - R_{i-1}| - a3 * tau^r_i
    QoE = a1 * mean PSNR - a2 * mean |R_i - R_{i-1}| (i >= 2) - a3 * mean tau^r

The first chunk pays no variation term so that the summed rewards and the
reported QoE describe the same quantity.
"""

from dataclasses import asdict, dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from errors import ConfigError, DomainError
from sim_core import StepOutcome

WEIGHT_PRESETS: Dict[str, Tuple[float, float, float]] = {
    'mild': (1.0, 1.0, 30.0),
    'moderate': (1.0, 1.0, 60.0),
    'strict': (1.0, 1.0, 90.0),
}


@dataclass(frozen=True)
class QoeWeights:
    alpha1: float = 1.0
    alpha2: float = 1.0
    alpha3: float = 30.0

    def __post_init__(self):
        if min(self.alpha1, self.alpha2, self.alpha3) < 0:
            raise ConfigError(f"QoE weights must be non-negative, got {self.as_tuple()}")

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.alpha1, self.alpha2, self.alpha3)

    @classmethod
    def from_value(cls, value) -> 'QoeWeights':
        """Accept a preset name, a 3-sequence or an existing QoeWeights"""
        if isinstance(value, QoeWeights):
            return value
        if isinstance(value, str):
            if value not in WEIGHT_PRESETS:
                raise ConfigError(f"unknown QoE preset '{value}', expected one of {list(WEIGHT_PRESETS)}")
            return cls(*WEIGHT_PRESETS[value])
        values = tuple(float(v) for v in value)
        if len(values) != 3:
            raise ConfigError(f"QoE weights need three values, got {len(values)}")
        return cls(*values)


@dataclass(frozen=True)
class QoeBreakdown:
    avg_psnr: float
    avg_variation: float
    avg_rebuffer: float
    weighted_total: float
    num_chunks: int

    def to_dict(self) -> Dict:
        return asdict(self)


def chunk_reward(w: QoeWeights, out: StepOutcome) -> float:
    """Reward for one decided chunk; variation is 0 for the first chunk"""
    variation = 0.0 if out.chunk_index == 1 else abs(out.bitrate - out.prev_bitrate)
    return w.alpha1 * out.psnr - w.alpha2 * variation - w.alpha3 * out.rebuffer


def episode_qoe(w: QoeWeights, log: Sequence[StepOutcome]) -> QoeBreakdown:
    """Episode averages of quality, bitrate variation and re-buffering"""
    if len(log) == 0:
        raise DomainError("episode log is empty")
    n = len(log)
    psnr = np.array([o.psnr for o in log])
    bitrates = np.array([o.bitrate for o in log])
    rebuffer = np.array([o.rebuffer for o in log])

    avg_psnr = float(psnr.sum() / n)
    avg_variation = float(np.abs(np.diff(bitrates)).sum() / (n - 1)) if n > 1 else 0.0
    avg_rebuffer = float(rebuffer.sum() / n)
    total = w.alpha1 * avg_psnr - w.alpha2 * avg_variation - w.alpha3 * avg_rebuffer
    return QoeBreakdown(avg_psnr, avg_variation, avg_rebuffer, float(total), n)
