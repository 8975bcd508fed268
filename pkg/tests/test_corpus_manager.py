import os

import numpy as np
import pytest

from corpus_manager import CorpusManager, synthesize_raw_trace
from errors import ConfigError
from traces import save_trace


def test_generate_writes_the_corpus_layout(small_config, small_corpus):
    root = small_config.corpus.output_dir
    assert os.path.exists(os.path.join(root, 'corpus.json'))
    assert os.path.exists(os.path.join(root, 'traces', 'corpus.json'))
    assert len(os.listdir(os.path.join(root, 'videos'))) == 4
    assert len(os.listdir(os.path.join(root, 'traces', 'raw'))) == 4
    assert len(os.listdir(os.path.join(root, 'traces', 'scaled'))) == 4


def test_split_is_half_and_half(small_corpus):
    summary = small_corpus.get_corpus_summary()
    assert len(summary['videos']['train']) == len(summary['videos']['test']) == 2
    assert len(summary['traces']['train']) == len(summary['traces']['test']) == 2
    assert not set(summary['videos']['train']) & set(summary['videos']['test'])


def test_trace_scaling_per_split(small_corpus):
    train = small_corpus.load_split('train')
    test = small_corpus.load_split('test')
    for _, trace in train.traces:
        assert 4.0 - 1e-6 <= trace.max_throughput() <= 10.0 + 1e-6
    for _, trace in test.traces:
        assert 2.0 - 1e-6 <= trace.mean_throughput() <= 5.0 + 1e-6
    methods = {entry.scale_method for entry in small_corpus.list_traces()}
    assert methods == {'max', 'mean'}


def test_video_lengths_within_bounds(small_config, small_corpus):
    for split in ('train', 'test'):
        for _, mpd in small_corpus.load_split(split).videos:
            assert small_config.corpus.min_chunks <= mpd.num_chunks <= small_config.corpus.max_chunks
            assert mpd.num_actions == 10


def test_regeneration_is_byte_identical(small_config, small_corpus):
    root = small_config.corpus.output_dir

    def snapshot():
        files = {}
        for folder, _, names in os.walk(root):
            for name in names:
                path = os.path.join(folder, name)
                with open(path, 'rb') as f:
                    files[os.path.relpath(path, root)] = f.read()
        return files

    before = snapshot()
    small_corpus.generate(small_config)
    assert snapshot() == before


def test_single_rate_ladder(small_config):
    small_config.quality.ladder_mbps = [2.0]
    manager = CorpusManager(small_config.corpus.output_dir)
    manager.generate(small_config)
    _, mpd = manager.load_split('test').videos[0]
    assert mpd.num_actions == 2


def test_missing_corpus(tmp_path):
    manager = CorpusManager(str(tmp_path / 'nothing'))
    with pytest.raises(ConfigError):
        manager.get_corpus_summary()
    with pytest.raises(ConfigError):
        manager.load_split('train')


def test_unknown_split(small_corpus):
    with pytest.raises(ConfigError):
        small_corpus.load_split('validation')


def test_raw_trace_directory(small_config, tmp_path):
    raw_dir = tmp_path / 'raw'
    raw_dir.mkdir()
    for k in range(4):
        save_trace(synthesize_raw_trace(20, seed=k), str(raw_dir / f"cell_{k}.csv"))
    small_config.corpus.raw_trace_dir = str(raw_dir)
    manager = CorpusManager(small_config.corpus.output_dir)
    summary = manager.generate(small_config)
    assert len(summary['traces']['train']) + len(summary['traces']['test']) == 4


def test_synthesized_trace():
    trace = synthesize_raw_trace(120, seed=4)
    assert trace.num_segments == 120
    assert trace.total_duration == pytest.approx(120.0)
    assert np.all(trace.throughputs > 0)
    again = synthesize_raw_trace(120, seed=4)
    assert np.array_equal(trace.throughputs, again.throughputs)
    with pytest.raises(ConfigError):
        synthesize_raw_trace(0, seed=1)
