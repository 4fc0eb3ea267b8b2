"""Unit tests for dataset generation, the binary container and splits."""
import json
import struct
import zlib

import numpy as np
import pytest

from dataset import (HEADER, MAGIC, Dataset, DatasetGenerator, export_png_manifest, generate_dataset,
                     load_dataset, save_dataset, split, split_sizes)
from errors import (ConfigurationError, DatasetChecksumError, DatasetFormatError, DatasetIntegrityError,
                    DatasetTruncatedError, DatasetVersionError, RangeError, ShutdownRequested)
from geometry import read_image
from signals import SignalHandler


def _tiny(count=6, labels=None, task_ids=None):
    rng = np.random.default_rng(0)
    return Dataset(frames=rng.integers(0, 256, size=(count, 6, 4, 4), dtype=np.uint8),
                   task_ids=np.asarray(task_ids if task_ids is not None else [3] * count, dtype=np.uint8),
                   labels=np.asarray(labels if labels is not None else np.arange(count) % 6, dtype=np.uint8),
                   seed=42)


def _rewrite_crc(data: bytearray) -> bytearray:
    body_end = len(data) - 4
    crc = zlib.crc32(bytes(data[HEADER.size:body_end]), zlib.crc32(bytes(data[:HEADER.size])))
    data[body_end:] = struct.pack('<I', crc)
    return data


class TestSplits:
    """Test cases for the 4:1:1 split."""

    @pytest.mark.parametrize('count, expected', [
        (3840, (2560, 640, 640)),
        (108000, (72000, 18000, 18000)),
        (6, (4, 1, 1)),
    ])
    def test_split_sizes(self, count, expected):
        """Test the reference split sizes."""
        assert split_sizes(count) == expected

    def test_indivisible_count(self):
        """Test that a size not divisible by 6 raises DatasetIntegrityError."""
        with pytest.raises(DatasetIntegrityError):
            split_sizes(100)

    def test_views_are_contiguous_and_disjoint(self):
        """Test that the views cover the dataset in order without overlap."""
        train, val, test = split(_tiny(12))
        assert list(train.indices) + list(val.indices) + list(test.indices) == list(range(12))
        assert (train.name, val.name, test.name) == ('train', 'val', 'test')
        np.testing.assert_array_equal(val.labels, _tiny(12).labels[8:10])

    def test_batches_count_passes(self):
        """Test batch contents, ordering and the pass counter."""
        train, _, _ = split(_tiny(12))
        batches = list(train.batches(3, order=np.array([7, 6, 5, 4, 3, 2, 1, 0])))
        assert train.passes == 1
        assert [len(b[0]) for b in batches] == [3, 3, 2]
        assert batches[0][0].tolist() == [7, 6, 5]
        assert batches[0][2].dtype == np.int64


class TestContainer:
    """Test cases for the binary dataset container."""

    def test_round_trip(self, temp_dir):
        """Test that save then load restores every field."""
        dataset = _tiny(12)
        loaded = load_dataset(save_dataset(dataset, temp_dir / 'd.odty'))
        assert loaded == dataset
        assert loaded.seed == 42

    def test_memory_mapped_load(self, temp_dir):
        """Test that a memory-mapped load sees the same records."""
        dataset = _tiny(6)
        loaded = load_dataset(save_dataset(dataset, temp_dir / 'd.odty'), mmap=True)
        assert np.array_equal(loaded.frames, dataset.frames)

    def test_header_layout(self, temp_dir):
        """Test the little-endian header fields and the record stride."""
        data = save_dataset(_tiny(6), temp_dir / 'd.odty').read_bytes()
        magic, version, width, height, count, seed = struct.unpack('<4sHHHIQ', data[:22])
        assert (magic, version, width, height, count, seed) == (MAGIC, 1, 4, 4, 6, 42)
        assert len(data) == 22 + 6 * (2 + 6 * 16) + 4

    def test_empty_dataset(self, temp_dir):
        """Test that a zero-record container loads."""
        empty = Dataset(np.zeros((0, 6, 4, 4), np.uint8), np.zeros(0, np.uint8), np.zeros(0, np.uint8))
        loaded = load_dataset(save_dataset(empty, temp_dir / 'e.odty'))
        assert len(loaded) == 0
        assert loaded.task_mode == 'empty'

    def test_bad_magic(self, temp_dir):
        """Test that a foreign file raises DatasetFormatError."""
        path = temp_dir / 'x.odty'
        path.write_bytes(b'OCKP' + bytes(40))
        with pytest.raises(DatasetFormatError):
            load_dataset(path)

    def test_unsupported_version(self, temp_dir):
        """Test that version 2 raises DatasetVersionError."""
        path = save_dataset(_tiny(), temp_dir / 'd.odty')
        data = bytearray(path.read_bytes())
        data[4:6] = struct.pack('<H', 2)
        path.write_bytes(bytes(data))
        with pytest.raises(DatasetVersionError):
            load_dataset(path)

    def test_truncated_record(self, temp_dir):
        """Test that a missing byte raises DatasetTruncatedError."""
        path = save_dataset(_tiny(), temp_dir / 'd.odty')
        path.write_bytes(path.read_bytes()[:-1])
        with pytest.raises(DatasetTruncatedError):
            load_dataset(path)

    def test_truncated_header(self, temp_dir):
        """Test that a file ending inside the header raises DatasetTruncatedError."""
        path = temp_dir / 'd.odty'
        path.write_bytes(MAGIC + bytes(6))
        with pytest.raises(DatasetTruncatedError):
            load_dataset(path)

    def test_count_mismatch(self, temp_dir):
        """Test that a header count differing from the records raises DatasetIntegrityError."""
        path = save_dataset(_tiny(), temp_dir / 'd.odty')
        data = bytearray(path.read_bytes())
        data[10:14] = struct.pack('<I', 7)
        path.write_bytes(bytes(data))
        with pytest.raises(DatasetIntegrityError):
            load_dataset(path)

    def test_flipped_pixel(self, temp_dir):
        """Test that a modified pixel raises DatasetChecksumError."""
        path = save_dataset(_tiny(), temp_dir / 'd.odty')
        data = bytearray(path.read_bytes())
        data[HEADER.size + 5] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(DatasetChecksumError):
            load_dataset(path)

    def test_label_out_of_range(self, temp_dir):
        """Test that a stored label of 6 raises DatasetIntegrityError."""
        path = save_dataset(_tiny(labels=[0, 1, 2, 3, 4, 6]), temp_dir / 'd.odty')
        with pytest.raises(DatasetIntegrityError):
            load_dataset(path)

    def test_task_id_out_of_range(self, temp_dir):
        """Test that a stored task id of 46 raises DatasetIntegrityError, even with a valid checksum."""
        path = save_dataset(_tiny(), temp_dir / 'd.odty')
        data = bytearray(path.read_bytes())
        data[HEADER.size] = 46
        path.write_bytes(bytes(_rewrite_crc(data)))
        with pytest.raises(DatasetIntegrityError):
            load_dataset(path)


class TestGeneration:
    """Test cases for dataset generation."""

    def test_separate_dataset(self, small_dataset):
        """Test sizes, the task mode and label range of a one-task dataset."""
        assert len(small_dataset) == 24
        assert small_dataset.frames.shape == (24, 6, 100, 100)
        assert small_dataset.task_mode == 'separate'
        assert set(small_dataset.task_ids.tolist()) == {1}
        assert small_dataset.labels.max() <= 5

    def test_joint_dataset(self, small_joint_dataset):
        """Test that a joint dataset mixes canonical tasks."""
        assert small_joint_dataset.task_mode == 'joint'
        assert set(small_joint_dataset.task_ids.tolist()) <= set(range(1, 13))

    def test_worker_count_does_not_change_result(self, registry):
        """Test that one and three workers generate identical datasets."""
        single = generate_dataset([2, 6], 12, seed=5, workers=1, registry=registry)
        pooled = generate_dataset([2, 6], 12, seed=5, workers=3, registry=registry)
        assert single == pooled

    def test_seed_changes_samples(self, registry):
        """Test that a different seed gives different frames."""
        a = generate_dataset([1], 6, seed=1, registry=registry)
        b = generate_dataset([1], 6, seed=2, registry=registry)
        assert not np.array_equal(a.frames, b.frames)

    @pytest.mark.parametrize('size', [0, 7, -6])
    def test_invalid_size(self, registry, size):
        """Test that sizes that are not positive multiples of 6 raise ConfigurationError."""
        with pytest.raises(ConfigurationError):
            generate_dataset([1], size, seed=0, registry=registry)

    def test_no_tasks(self, registry):
        """Test that an empty task list raises ConfigurationError."""
        with pytest.raises(ConfigurationError):
            generate_dataset([], 6, seed=0, registry=registry)

    def test_unknown_task(self, registry):
        """Test that task 46 raises RangeError before any work."""
        with pytest.raises(RangeError):
            generate_dataset([46], 6, seed=0, registry=registry)

    def test_shutdown_interrupts(self, registry):
        """Test that a pending shutdown request stops generation."""
        SignalHandler().shutdown_requested = True
        with pytest.raises(ShutdownRequested):
            DatasetGenerator(registry).generate([1], 6, seed=0)


class TestPngExport:
    """Test cases for the PNG manifest export."""

    def test_manifest_and_frames(self, temp_dir, small_dataset):
        """Test the directory layout, manifest fields and bit-exact pixels."""
        manifest_path = export_png_manifest(small_dataset, temp_dir / 'png', limit=2)
        manifest = json.loads(manifest_path.read_text())
        assert manifest['seed'] == 7
        assert [entry['index'] for entry in manifest['samples']] == [0, 1]
        entry = manifest['samples'][1]
        assert entry['label'] == int(small_dataset.labels[1])
        assert entry['frames'][4] == 'sample_00001/frame_4.png'
        pixels = read_image(temp_dir / 'png' / entry['frames'][4])
        assert np.array_equal(pixels, small_dataset.frames[1, 4])
