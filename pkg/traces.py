"""
traces.py

Piecewise-constant bandwidth traces: CSV ingestion, validation, mean/max
re-scaling and exact download-completion queries.

A trace covers [0, total_duration) and repeats from t = 0 beyond that, so
download_time always terminates.
"""

import io
import json
import logging
from dataclasses import asdict, dataclass
from typing import Dict, List

import numpy as np
import pandas as pd

from errors import ConfigError, TraceParseError

logger = logging.getLogger(__name__)

SCALE_METHODS = ('mean', 'max')


@dataclass(frozen=True, eq=False)
class BandwidthTrace:
    """Throughput c(t) in Mbps, constant on [start_times[k], start_times[k+1])"""
    start_times: np.ndarray
    throughputs: np.ndarray
    total_duration: float

    def __post_init__(self):
        starts = np.asarray(self.start_times, dtype=float)
        rates = np.asarray(self.throughputs, dtype=float)
        if starts.ndim != 1 or starts.size == 0 or starts.shape != rates.shape:
            raise TraceParseError("trace needs matching, non-empty time and throughput columns")
        if starts[0] != 0:
            raise TraceParseError(f"first timestamp must be 0, got {starts[0]}")
        if np.any(np.diff(starts) <= 0):
            raise TraceParseError("timestamps must be strictly increasing")
        if np.any(rates <= 0):
            raise TraceParseError("throughput must be positive")
        if not self.total_duration > starts[-1]:
            raise TraceParseError(f"total_duration {self.total_duration} must exceed last start {starts[-1]}")

        # cumulative megabits at each segment start, plus one full period at the end
        durations = np.diff(np.append(starts, self.total_duration))
        cumulative = np.concatenate([[0.0], np.cumsum(rates * durations)])
        object.__setattr__(self, 'start_times', starts)
        object.__setattr__(self, 'throughputs', rates)
        object.__setattr__(self, '_cumulative', cumulative)

    @classmethod
    def from_samples(cls, start_times, throughputs) -> 'BandwidthTrace':
        """Build a trace whose last segment is as long as the one before it (1 s if alone)"""
        starts = np.asarray(start_times, dtype=float)
        last = starts[-1] - starts[-2] if starts.size > 1 else 1.0
        return cls(starts, np.asarray(throughputs, dtype=float), float(starts[-1] + last))

    @property
    def num_segments(self) -> int:
        return int(self.start_times.size)

    @property
    def segment_durations(self) -> np.ndarray:
        return np.diff(np.append(self.start_times, self.total_duration))

    @property
    def period_megabits(self) -> float:
        return float(self._cumulative[-1])

    def mean_throughput(self) -> float:
        """Time-weighted mean over one period"""
        return self.period_megabits / self.total_duration

    def max_throughput(self) -> float:
        return float(self.throughputs.max())

    def cumulative_megabits(self, t: float) -> float:
        """Integral of c over [0, t], following the wrap-around rule"""
        periods, offset = divmod(float(t), self.total_duration)
        k = int(np.searchsorted(self.start_times, offset, side='right')) - 1
        partial = self._cumulative[k] + self.throughputs[k] * (offset - self.start_times[k])
        return periods * self.period_megabits + float(partial)

    def integral(self, t0: float, t1: float) -> float:
        return self.cumulative_megabits(t1) - self.cumulative_megabits(t0)

    def scaled(self, factor: float) -> 'BandwidthTrace':
        return BandwidthTrace(self.start_times.copy(), self.throughputs * factor, self.total_duration)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'time_s': self.start_times, 'throughput_mbps': self.throughputs})


def parse_trace(text: str) -> BandwidthTrace:
    """Parse "time_s,throughput_mbps" lines (header optional).

    Raises:
        TraceParseError: empty input, malformed row, non-monotone timestamps or
            non-positive throughput; the message names the offending line
    """
    try:
        raw = pd.read_csv(io.StringIO(text), header=None, dtype=str, skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise TraceParseError("trace is empty")
    except pd.errors.ParserError as e:
        raise TraceParseError(f"malformed trace: {e}")

    if raw.shape[1] != 2:
        raise TraceParseError(f"expected 2 columns, found {raw.shape[1]}", line=1)

    raw.index = raw.index + 1  # 1-based line numbers
    raw = raw.dropna(how='all')
    if raw.empty:
        raise TraceParseError("trace is empty")

    values = raw.apply(lambda column: pd.to_numeric(column.str.strip(), errors='coerce'))
    first_line = raw.index[0]
    if values.loc[first_line].isna().all():
        values = values.drop(index=first_line)  # header row
        if values.empty:
            raise TraceParseError("trace has a header but no samples")

    bad = values[values.isna().any(axis=1)]
    if not bad.empty:
        raise TraceParseError("row is not two numbers", line=int(bad.index[0]))

    times = values.iloc[:, 0].to_numpy(dtype=float)
    rates = values.iloc[:, 1].to_numpy(dtype=float)
    lines = values.index.to_numpy()

    if times[0] != 0:
        raise TraceParseError(f"first timestamp must be 0, got {times[0]}", line=int(lines[0]))
    not_increasing = np.nonzero(np.diff(times) <= 0)[0]
    if not_increasing.size:
        raise TraceParseError("timestamps must be strictly increasing", line=int(lines[not_increasing[0] + 1]))
    non_positive = np.nonzero(rates <= 0)[0]
    if non_positive.size:
        raise TraceParseError("throughput must be positive", line=int(lines[non_positive[0]]))

    trace = BandwidthTrace.from_samples(times, rates)
    logger.debug(f"parsed trace: {trace.num_segments} segments over {trace.total_duration:.1f} s, "
                 f"mean {trace.mean_throughput():.3f} Mbps")
    return trace


def load_trace(path: str) -> BandwidthTrace:
    with open(path, 'r', encoding='utf-8') as f:
        return parse_trace(f.read())


def save_trace(trace: BandwidthTrace, path: str):
    trace.to_frame().to_csv(path, index=False, float_format='%.10g')


def _check_target(target: float):
    if not target > 0:
        raise ConfigError(f"scaling target must be positive, got {target}")


def scale_trace_mean(trace: BandwidthTrace, target: float) -> BandwidthTrace:
    """Rescale so the time-weighted mean throughput equals `target` Mbps"""
    _check_target(target)
    return trace.scaled(target / trace.mean_throughput())


def scale_trace_max(trace: BandwidthTrace, target: float) -> BandwidthTrace:
    """Rescale so the peak throughput equals `target` Mbps"""
    _check_target(target)
    return trace.scaled(target / trace.max_throughput())


def scale_trace(trace: BandwidthTrace, method: str, target: float) -> BandwidthTrace:
    logger.debug(f"scaling trace {method} throughput to {target} Mbps")
    if method == 'mean':
        return scale_trace_mean(trace, target)
    if method == 'max':
        return scale_trace_max(trace, target)
    raise ConfigError(f"unknown scale method '{method}', expected one of {SCALE_METHODS}")


def download_time(trace: BandwidthTrace, start: float, size: float) -> float:
    """Smallest tau with integral of c over [start, start + tau] equal to `size` megabits.

    Exact on piecewise-constant traces: whole periods are skipped arithmetically and
    the final segment is found by a search over cumulative megabits.
    """
    if size <= 0:
        raise ConfigError(f"download size must be positive, got {size}")
    if start < 0:
        raise ConfigError(f"download start must be non-negative, got {start}")

    target = trace.cumulative_megabits(start) + size
    periods, remainder = divmod(target, trace.period_megabits)
    k = int(np.searchsorted(trace._cumulative, remainder, side='right')) - 1
    k = min(k, trace.num_segments - 1)
    offset = trace.start_times[k] + (remainder - trace._cumulative[k]) / trace.throughputs[k]
    end = periods * trace.total_duration + float(offset)
    return end - start


@dataclass(frozen=True)
class TraceCorpusEntry:
    """One line of the trace corpus manifest"""
    path: str
    scale_method: str
    target_mbps: float
    seed: int

    def __post_init__(self):
        if self.scale_method not in SCALE_METHODS:
            raise ConfigError(f"unknown scale method '{self.scale_method}'")
        _check_target(self.target_mbps)


def save_corpus_manifest(entries: List[TraceCorpusEntry], path: str):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump([asdict(entry) for entry in entries], f, indent=2)


def load_corpus_manifest(path: str) -> List[TraceCorpusEntry]:
    with open(path, 'r', encoding='utf-8') as f:
        data: List[Dict] = json.load(f)
    try:
        return [TraceCorpusEntry(**item) for item in data]
    except TypeError as e:
        raise ConfigError(f"invalid trace corpus manifest {path}: {e}") from e
