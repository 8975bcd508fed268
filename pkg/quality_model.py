"""
quality_model.py

Synthetic video quality and enhancement-cost model.

Stands in for FFMPEG-measured PSNR and DNN enhancement timing: a logarithmic
rate-quality curve pinned to the 1K anchors (2 Mbps -> 35.68 dB, 3 Mbps ->
37.76 dB), an enhancement gain that decays linearly from 1.52 dB at the lowest
ladder rate to 0 at the top rate, and per-profile enhancement times derived
from the 98.9 FPS reference throughput.
"""

import json
import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from errors import CalibrationError, ConfigError, DomainError

logger = logging.getLogger(__name__)

# Measured PSNR anchors (bitrate Mbps, dB) at 1K resolution
CALIBRATION_POINTS: List[Tuple[float, float]] = [(2.0, 35.68), (3.0, 37.76)]
ENHANCED_PSNR_AT_MIN = 37.20
DEFAULT_LADDER: List[float] = [2.0, 2.5, 3.0, 3.5, 4.0]
DEFAULT_NOISE_SIGMA = 0.8
REFERENCE_FPS = 98.9
FRAMES_PER_CHUNK = 25

_RANGE_TOLERANCE = 1e-9
_MAX_JITTER_REDRAWS = 100


@dataclass(frozen=True)
class RateQualityModel:
    """PSNR(R) = beta0 + beta1 * ln(R) plus a linearly decaying enhancement gain"""
    beta0: float
    beta1: float
    gain_at_min: float
    noise_sigma: float
    r_min: float
    r_max: float

    def __post_init__(self):
        if not self.beta1 > 0:
            raise CalibrationError(f"beta1 must be positive, got {self.beta1}")
        if self.gain_at_min < 0 or self.noise_sigma < 0:
            raise CalibrationError("gain_at_min and noise_sigma must be non-negative")
        if not self.r_min < self.r_max:
            raise CalibrationError(f"r_min ({self.r_min}) must be below r_max ({self.r_max})")


@dataclass(frozen=True)
class ComputeProfile:
    """Client hardware class, expressed as a multiplier on reference enhancement time"""
    name: str
    scale_factor: float
    frames_per_chunk: int = FRAMES_PER_CHUNK
    reference_fps: float = REFERENCE_FPS

    def __post_init__(self):
        if self.scale_factor <= 0:
            raise ConfigError(f"scale_factor must be positive, got {self.scale_factor}")
        if self.frames_per_chunk < 1:
            raise ConfigError(f"frames_per_chunk must be >= 1, got {self.frames_per_chunk}")
        if self.reference_fps <= 0:
            raise ConfigError(f"reference_fps must be positive, got {self.reference_fps}")


COMPUTE_PROFILES: Dict[str, ComputeProfile] = {
    'ultra_high': ComputeProfile('ultra_high', 4.5),
    'high': ComputeProfile('high', 5.0),
    'medium': ComputeProfile('medium', 6.0),
    'low': ComputeProfile('low', 6.8),
}


def action_columns(ladder: Sequence[float]) -> List[Tuple[float, int]]:
    """Column order of a PSNR map row: ladder order, enhance flag 0 before 1"""
    return [(float(rate), flag) for rate in ladder for flag in (0, 1)]


@dataclass(frozen=True, eq=False)
class MpdManifest:
    """Per-chunk, per-action PSNR map plus the bitrate ladder.

    psnr_map has shape (num_chunks, 2 * len(bitrate_ladder)); row i-1 holds chunk i.
    """
    num_chunks: int
    bitrate_ladder: Tuple[float, ...]
    chunk_duration: float
    psnr_map: np.ndarray

    def __post_init__(self):
        if self.num_chunks < 1:
            raise ConfigError(f"num_chunks must be >= 1, got {self.num_chunks}")
        if len(self.bitrate_ladder) == 0:
            raise ConfigError("bitrate ladder is empty")
        if any(b <= a for a, b in zip(self.bitrate_ladder, self.bitrate_ladder[1:])):
            raise ConfigError(f"bitrate ladder must be strictly ascending: {list(self.bitrate_ladder)}")
        if self.chunk_duration <= 0:
            raise ConfigError(f"chunk_duration must be positive, got {self.chunk_duration}")
        expected = (self.num_chunks, 2 * len(self.bitrate_ladder))
        if self.psnr_map.shape != expected:
            raise ConfigError(f"psnr_map shape {self.psnr_map.shape} does not match {expected}")
        if not np.all(np.isfinite(self.psnr_map)):
            raise ConfigError("psnr_map contains non-finite values")
        plain = self.psnr_map[:, 0::2]
        enhanced = self.psnr_map[:, 1::2]
        if np.any(np.diff(plain, axis=1) < 0) or np.any(np.diff(enhanced, axis=1) < 0):
            raise ConfigError("PSNR must be nondecreasing in bitrate at a fixed enhance flag")
        if np.any(enhanced < plain):
            raise ConfigError("enhanced PSNR must not be below plain PSNR")

    @property
    def num_actions(self) -> int:
        return 2 * len(self.bitrate_ladder)

    def row(self, chunk_index: int) -> np.ndarray:
        """PSNR map row of chunk `chunk_index` (1-based)"""
        if not 1 <= chunk_index <= self.num_chunks:
            raise DomainError(f"chunk index {chunk_index} outside [1, {self.num_chunks}]")
        return self.psnr_map[chunk_index - 1]

    def psnr(self, chunk_index: int, action_index: int) -> float:
        return float(self.row(chunk_index)[action_index])

    def truncated(self, num_chunks: int) -> 'MpdManifest':
        """First `num_chunks` chunks of this manifest"""
        if not 1 <= num_chunks <= self.num_chunks:
            raise DomainError(f"cannot truncate {self.num_chunks} chunks to {num_chunks}")
        return replace(self, num_chunks=num_chunks, psnr_map=self.psnr_map[:num_chunks].copy())

    def to_dict(self) -> Dict:
        return {
            'num_chunks': self.num_chunks,
            'chunk_duration_s': self.chunk_duration,
            'ladder_mbps': [float(r) for r in self.bitrate_ladder],
            'psnr': self.psnr_map.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'MpdManifest':
        try:
            return cls(
                num_chunks=int(data['num_chunks']),
                bitrate_ladder=tuple(float(r) for r in data['ladder_mbps']),
                chunk_duration=float(data['chunk_duration_s']),
                psnr_map=np.asarray(data['psnr'], dtype=float),
            )
        except KeyError as e:
            raise ConfigError(f"manifest is missing field {e}") from e


def save_mpd(mpd: MpdManifest, path: str):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(mpd.to_dict(), f)


def load_mpd(path: str) -> MpdManifest:
    with open(path, 'r', encoding='utf-8') as f:
        return MpdManifest.from_dict(json.load(f))


def fit_rate_quality(points: Sequence[Tuple[float, float]],
                     gain_at_min: float = 0.0,
                     noise_sigma: float = 0.0,
                     r_min: Optional[float] = None,
                     r_max: Optional[float] = None) -> RateQualityModel:
    """Least-squares fit of dB = beta0 + beta1 * ln(Mbps).

    Args:
        points: (bitrate Mbps, PSNR dB) pairs; at least two distinct bitrates
        gain_at_min: enhancement gain at the lowest ladder rate (dB)
        noise_sigma: per-chunk jitter standard deviation (dB)
        r_min, r_max: ladder endpoints; default to the extreme calibration bitrates

    Returns:
        Calibrated RateQualityModel (exact fit for two points)

    Raises:
        CalibrationError: fewer than two distinct bitrates or non-positive bitrate
    """
    rates = np.array([p[0] for p in points], dtype=float)
    quality = np.array([p[1] for p in points], dtype=float)
    if len(np.unique(rates)) < 2:
        raise CalibrationError("calibration needs at least two distinct bitrates")
    if np.any(rates <= 0):
        raise CalibrationError("calibration bitrates must be positive")

    fit = stats.linregress(np.log(rates), quality)
    return RateQualityModel(
        beta0=float(fit.intercept),
        beta1=float(fit.slope),
        gain_at_min=gain_at_min,
        noise_sigma=noise_sigma,
        r_min=float(rates.min()) if r_min is None else float(r_min),
        r_max=float(rates.max()) if r_max is None else float(r_max),
    )


def model_for_ladder(ladder: Sequence[float], noise_sigma: float = DEFAULT_NOISE_SIGMA,
                     points: Sequence[Tuple[float, float]] = CALIBRATION_POINTS,
                     enhanced_psnr_at_min: float = ENHANCED_PSNR_AT_MIN) -> RateQualityModel:
    """Calibrated model spanning `ladder`.

    The gain anchor is the enhanced-vs-plain difference at the lowest calibration
    bitrate. A single-rate ladder gets r_max = 2 * r_min so the decay stays defined.
    """
    if len(ladder) == 0:
        raise ConfigError("bitrate ladder is empty")
    base = fit_rate_quality(points)
    anchor_rate = min(p[0] for p in points)
    gain = enhanced_psnr_at_min - (base.beta0 + base.beta1 * np.log(anchor_rate))
    r_min = float(ladder[0])
    r_max = float(ladder[-1]) if len(ladder) > 1 else 2.0 * r_min
    return replace(base, gain_at_min=float(max(gain, 0.0)), noise_sigma=noise_sigma,
                   r_min=r_min, r_max=r_max)


def _check_range(model: RateQualityModel, bitrate: float):
    if not (model.r_min - _RANGE_TOLERANCE <= bitrate <= model.r_max + _RANGE_TOLERANCE):
        raise DomainError(f"bitrate {bitrate} Mbps outside ladder range [{model.r_min}, {model.r_max}]")


def base_psnr(model: RateQualityModel, bitrate: float, chunk_jitter: float = 0.0) -> float:
    """PSNR of an unenhanced chunk at `bitrate` Mbps"""
    _check_range(model, bitrate)
    return float(model.beta0 + model.beta1 * np.log(bitrate) + chunk_jitter)


def enhancement_gain(model: RateQualityModel, bitrate: float) -> float:
    """Enhancement gain in dB, linear from gain_at_min at r_min to 0 at r_max"""
    _check_range(model, bitrate)
    return float(model.gain_at_min * (model.r_max - bitrate) / (model.r_max - model.r_min))


def _row_is_valid(row: np.ndarray) -> bool:
    plain, enhanced = row[0::2], row[1::2]
    return bool(np.all(np.isfinite(row)) and np.all(row > 0)
                and np.all(np.diff(plain) >= 0) and np.all(np.diff(enhanced) >= 0)
                and np.all(enhanced >= plain))


def generate_mpd(model: RateQualityModel, num_chunks: int, ladder: Sequence[float],
                 chunk_duration: float, seed: int) -> MpdManifest:
    """Generate a synthetic manifest.

    One zero-mean Gaussian jitter value (std noise_sigma) is drawn per chunk and
    shared by all of that chunk's actions; a draw that breaks the manifest
    invariants is rejected and redrawn.

    Args:
        model: calibrated rate-quality model
        num_chunks: N, at least 1
        ladder: ascending bitrates in Mbps, all inside [r_min, r_max]
        chunk_duration: T in seconds
        seed: generator seed; the manifest is a pure function of all arguments

    Returns:
        MpdManifest
    """
    if len(ladder) == 0:
        raise ConfigError("bitrate ladder is empty")
    if num_chunks < 1:
        raise ConfigError(f"num_chunks must be >= 1, got {num_chunks}")

    plain = np.array([base_psnr(model, r) for r in ladder])
    gains = np.array([enhancement_gain(model, r) for r in ladder])
    template = np.empty(2 * len(ladder))
    template[0::2] = plain
    template[1::2] = plain + gains

    rng = np.random.default_rng(seed)
    psnr_map = np.empty((num_chunks, template.size))
    rejected = 0
    for i in range(num_chunks):
        for _ in range(_MAX_JITTER_REDRAWS):
            row = template + rng.normal(0.0, model.noise_sigma)
            if _row_is_valid(row):
                break
            rejected += 1
        else:
            logger.warning(f"chunk {i + 1}: jitter rejected {_MAX_JITTER_REDRAWS} times, using zero jitter")
            row = template.copy()
        psnr_map[i] = row

    if rejected:
        logger.warning(f"rejected {rejected} jitter draws while generating {num_chunks} chunks")

    return MpdManifest(
        num_chunks=num_chunks,
        bitrate_ladder=tuple(float(r) for r in ladder),
        chunk_duration=float(chunk_duration),
        psnr_map=psnr_map,
    )


def enhancement_time(profile: ComputeProfile,
                     rng: Optional[np.random.Generator] = None,
                     jitter: float = 0.0) -> float:
    """Seconds needed to enhance one chunk on `profile`.

    With an rng and jitter > 0 the nominal time is multiplied by U(1 - jitter, 1 + jitter).
    """
    nominal = profile.scale_factor * profile.frames_per_chunk / profile.reference_fps
    if rng is None or jitter <= 0:
        return nominal
    return nominal * float(rng.uniform(1.0 - jitter, 1.0 + jitter))


if __name__ == "__main__":
    model = model_for_ladder(DEFAULT_LADDER, noise_sigma=0.0)
    print(f"beta0={model.beta0:.4f} beta1={model.beta1:.4f} gain_at_min={model.gain_at_min:.2f}")
    for rate in DEFAULT_LADDER:
        print(f"  {rate:.1f} Mbps: plain {base_psnr(model, rate):.2f} dB, "
              f"enhanced {base_psnr(model, rate) + enhancement_gain(model, rate):.2f} dB")
    for profile in COMPUTE_PROFILES.values():
        print(f"  {profile.name}: {enhancement_time(profile):.3f} s per chunk")
