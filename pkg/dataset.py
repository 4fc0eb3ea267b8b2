"""
Riddle datasets: generation, the binary container, 4:1:1 splits and PNG export.

Container layout (little-endian):
    magic    4 bytes  b"ODTY"
    version  u16
    width    u16
    height   u16
    count    u32      number of records
    seed     u64      dataset seed
    records  count x (u8 task_id, u8 label, 6 x height x width u8 pixels)
    crc32    u32      over header and records

Labels are 0-based frame indices. Task mode is not stored: a dataset with a
single task id is a separate-task dataset, anything else is joint.
"""
import struct
import sys
import zlib
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from threading import Lock
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from config import config
from errors import (ConfigurationError, DatasetChecksumError, DatasetFormatError, DatasetIntegrityError,
                    DatasetTruncatedError, DatasetVersionError, ShutdownRequested)
from files import FileHandler
from geometry import FRAME_SIZE, write_png
from logger import Logger
from riddles import FRAMES_PER_SAMPLE, MAX_TASK_ID, TaskRegistry, default_registry, sample_at
from signals import SignalHandler

MAGIC = b"ODTY"
VERSION = 1
HEADER = struct.Struct('<4sHHHIQ')
CRC = struct.Struct('<I')
SPLIT_RATIO = (4, 1, 1)
# Samples per worker job during parallel generation.
CHUNK_SIZE = 64


def record_dtype(height: int = FRAME_SIZE, width: int = FRAME_SIZE) -> np.dtype:
    """Fixed-stride record layout."""
    return np.dtype([('task_id', 'u1'), ('label', 'u1'), ('frames', 'u1', (FRAMES_PER_SAMPLE, height, width))])


@dataclass(eq=False)
class Dataset:
    """
    An in-memory (or memory-mapped) riddle dataset.

    Attributes:
        frames: [n, 6, height, width] uint8 pixels.
        task_ids: [n] uint8 task ids in [1, 45].
        labels: [n] uint8 oddity positions in [0, 5].
        seed: Seed the samples were generated from.
    """
    frames: np.ndarray
    task_ids: np.ndarray
    labels: np.ndarray
    seed: int = 0
    version: int = VERSION

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def frame_size(self) -> Tuple[int, int]:
        return self.frames.shape[2], self.frames.shape[3]

    @property
    def task_mode(self) -> str:
        if len(self) == 0:
            return 'empty'
        return 'separate' if len(np.unique(self.task_ids)) == 1 else 'joint'

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.seed == other.seed and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.task_ids, other.task_ids) and np.array_equal(self.frames, other.frames))


class SplitView:
    """
    A contiguous, read-only slice of a dataset.

    `passes` counts full iterations so callers can check a split was read
    exactly as often as intended.
    """

    def __init__(self, dataset: Dataset, start: int, stop: int, name: str):
        self.dataset = dataset
        self.start = start
        self.stop = stop
        self.name = name
        self.passes = 0

    def __len__(self) -> int:
        return self.stop - self.start

    @property
    def indices(self) -> range:
        return range(self.start, self.stop)

    @property
    def frames(self) -> np.ndarray:
        return self.dataset.frames[self.start:self.stop]

    @property
    def labels(self) -> np.ndarray:
        return self.dataset.labels[self.start:self.stop]

    @property
    def task_ids(self) -> np.ndarray:
        return self.dataset.task_ids[self.start:self.stop]

    def batches(self, batch_size: int, order: Optional[np.ndarray] = None
                ) -> Iterator[Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
        """
        Yields (dataset indices, frames, labels, task_ids) batches.

        Args:
            batch_size: Samples per batch (the last batch may be smaller).
            order: Optional permutation of range(len(self)).
        """
        self.passes += 1
        positions = np.arange(len(self)) if order is None else np.asarray(order)
        for i in range(0, len(positions), batch_size):
            index = positions[i:i + batch_size] + self.start
            yield (index, np.asarray(self.dataset.frames[index]), self.dataset.labels[index].astype(np.int64),
                   self.dataset.task_ids[index].astype(np.int64))


def split_sizes(count: int) -> Tuple[int, int, int]:
    """
    Train/validation/test sizes at 4:1:1.

    Raises:
        DatasetIntegrityError: If count is not divisible by 6.
    """
    if count % sum(SPLIT_RATIO) != 0:
        raise DatasetIntegrityError(f"dataset size {count} is not divisible by {sum(SPLIT_RATIO)}")
    unit = count // sum(SPLIT_RATIO)
    return tuple(r * unit for r in SPLIT_RATIO)


def split(dataset: Dataset) -> Tuple[SplitView, SplitView, SplitView]:
    """Disjoint, exhaustive, order-stable train/validation/test views."""
    train, val, _ = split_sizes(len(dataset))
    n = len(dataset)
    return (SplitView(dataset, 0, train, 'train'),
            SplitView(dataset, train, train + val, 'val'),
            SplitView(dataset, train + val, n, 'test'))


def save_dataset(dataset: Dataset, path: Path) -> Path:
    """Writes the container; the file is replaced if it exists."""
    path = Path(path)
    FileHandler.ensure_dir(path.parent)
    height, width = dataset.frame_size
    records = np.empty(len(dataset), dtype=record_dtype(height, width))
    records['task_id'] = dataset.task_ids
    records['label'] = dataset.labels
    records['frames'] = dataset.frames
    header = HEADER.pack(MAGIC, dataset.version, width, height, len(dataset), dataset.seed)
    body = records.tobytes()
    with open(path, 'wb') as f:
        f.write(header)
        f.write(body)
        f.write(CRC.pack(zlib.crc32(body, zlib.crc32(header))))
    return path


def load_dataset(path: Path, mmap: bool = False) -> Dataset:
    """
    Reads a container written by `save_dataset`.

    Args:
        path: Container path.
        mmap: Map the records instead of reading them into memory.

    Raises:
        DatasetFormatError: Bad magic.
        DatasetVersionError: Unsupported version.
        DatasetTruncatedError: File shorter than its header or a partial record.
        DatasetIntegrityError: Header count differs from the records, or a record holds
            a task id or label outside its range.
        DatasetChecksumError: CRC32 mismatch.
    """
    path = Path(path)
    raw = np.memmap(path, dtype=np.uint8, mode='r') if mmap else np.fromfile(path, dtype=np.uint8)
    if len(raw) < len(MAGIC) or raw[:len(MAGIC)].tobytes() != MAGIC:
        raise DatasetFormatError(f"{path}: not a dataset container")
    if len(raw) < HEADER.size + CRC.size:
        raise DatasetTruncatedError(f"{path}: file ends inside the header")
    magic, version, width, height, count, seed = HEADER.unpack(raw[:HEADER.size].tobytes())
    if version != VERSION:
        raise DatasetVersionError(f"{path}: unsupported dataset version {version} (expected {VERSION})")

    dtype = record_dtype(height, width)
    body_size = len(raw) - HEADER.size - CRC.size
    if body_size % dtype.itemsize != 0:
        raise DatasetTruncatedError(f"{path}: partial record ({body_size} bytes, stride {dtype.itemsize})")
    if body_size // dtype.itemsize != count:
        raise DatasetIntegrityError(f"{path}: header declares {count} records, file holds {body_size // dtype.itemsize}")

    body = raw[HEADER.size:HEADER.size + body_size]
    (expected,) = CRC.unpack(raw[HEADER.size + body_size:].tobytes())
    if zlib.crc32(memoryview(body), zlib.crc32(raw[:HEADER.size].tobytes())) != expected:
        raise DatasetChecksumError(f"{path}: checksum mismatch")

    records = body.view(dtype) if count else np.empty(0, dtype=dtype)
    task_ids, labels = records['task_id'], records['label']
    if count and (task_ids.min() < 1 or task_ids.max() > MAX_TASK_ID):
        raise DatasetIntegrityError(f"{path}: task id outside [1, {MAX_TASK_ID}]")
    if count and labels.max() >= FRAMES_PER_SAMPLE:
        raise DatasetIntegrityError(f"{path}: label outside [0, {FRAMES_PER_SAMPLE - 1}]")
    frames = records['frames'] if mmap else np.ascontiguousarray(records['frames'])
    return Dataset(frames=frames, task_ids=np.array(task_ids), labels=np.array(labels), seed=seed, version=version)


def default_dataset_path(task_ids: Sequence[int], seed: int) -> Path:
    """Conventional location of a dataset under the configured data directory."""
    stem = f"task{task_ids[0]:02d}" if len(task_ids) == 1 else "joint"
    return config.data_dir / f"{stem}_seed{seed}.odty"


class DatasetGenerator:
    """
    Generates datasets with an optional thread pool.

    Every sample is a pure function of (seed, index), so the worker count does
    not change the result.
    """

    def __init__(self, registry: Optional[TaskRegistry] = None, logger: Optional[Logger] = None,
                 workers: int = 1, max_retries: int = 64):
        self.registry = registry or default_registry()
        self.logger = logger or Logger.null()
        self.workers = max(1, workers)
        self.max_retries = max_retries
        self._done = 0
        self._lock = Lock()

    def _fill(self, out: dict, seed: int, task_ids: Sequence[int], start: int, stop: int) -> int:
        """Generates samples [start, stop) into preallocated arrays; returns the count written."""
        size = out['frames'].shape[-1]
        for index in range(start, stop):
            if SignalHandler().is_shutdown_requested:
                return index - start
            sample = sample_at(self.registry, task_ids, seed, index, size=size, max_retries=self.max_retries)
            out['frames'][index] = sample.frames
            out['task_ids'][index] = sample.task_id
            out['labels'][index] = sample.label
        with self._lock:
            self._done += stop - start
        return stop - start

    def generate(self, task_ids: Sequence[int], size: int, seed: int, frame_size: int = FRAME_SIZE) -> Dataset:
        """
        Generates `size` samples over `task_ids` (one id: separate mode, several: joint mode).

        Raises:
            ConfigurationError: If size is not a positive multiple of 6 or no task ids are given.
            RangeError: For an unregistered task id.
            GenerationError: If a sample exhausts its retry budget.
            ShutdownRequested: If a shutdown signal interrupted generation.
        """
        if size <= 0 or size % sum(SPLIT_RATIO) != 0:
            raise ConfigurationError(f"dataset size must be a positive multiple of 6, got {size}")
        if not task_ids:
            raise ConfigurationError("no task ids given")
        task_ids = [int(t) for t in task_ids]
        for task_id in task_ids:
            self.registry.get(task_id)

        out = {
            'frames': np.zeros((size, FRAMES_PER_SAMPLE, frame_size, frame_size), dtype=np.uint8),
            'task_ids': np.zeros(size, dtype=np.uint8),
            'labels': np.zeros(size, dtype=np.uint8),
        }
        self._done = 0
        self.logger.log_info("Generating dataset", size=size, seed=seed, tasks=len(task_ids), workers=self.workers)

        chunks = [(start, min(start + CHUNK_SIZE, size)) for start in range(0, size, CHUNK_SIZE)]
        written = 0
        if self.workers == 1:
            for start, stop in chunks:
                written += self._fill(out, seed, task_ids, start, stop)
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as executor:
                futures = {
                    executor.submit(self._fill, out, seed, task_ids, start, stop): (start, stop)
                    for start, stop in chunks
                }
                for future in as_completed(futures):
                    try:
                        written += future.result()
                    except Exception:
                        start, stop = futures[future]
                        self.logger.log_error("Generation failed", start=start, stop=stop,
                                              details=SignalHandler.format_exception(*sys.exc_info()))
                        for pending in futures:
                            pending.cancel()
                        raise

        if written != size:
            raise ShutdownRequested(f"dataset generation interrupted after {written} of {size} samples")
        self.logger.log_info("Dataset generated", size=size, seed=seed)
        return Dataset(frames=out['frames'], task_ids=out['task_ids'], labels=out['labels'], seed=seed)


def generate_dataset(task_ids: Sequence[int], size: int, seed: int, workers: int = 1,
                     registry: Optional[TaskRegistry] = None, logger: Optional[Logger] = None,
                     max_retries: int = 64) -> Dataset:
    """Convenience wrapper around `DatasetGenerator.generate`."""
    return DatasetGenerator(registry, logger, workers, max_retries).generate(task_ids, size, seed)


def export_png_manifest(dataset: Dataset, directory: Path, limit: Optional[int] = None) -> Path:
    """
    Writes sample_XXXXX/frame_k.png for the first `limit` samples plus manifest.json.

    Returns:
        The manifest path.
    """
    directory = FileHandler.ensure_dir(directory)
    count = len(dataset) if limit is None else min(limit, len(dataset))
    entries = []
    for index in range(count):
        sample_dir = FileHandler.ensure_dir(directory / f"sample_{index:05d}")
        frames = []
        for k in range(FRAMES_PER_SAMPLE):
            write_png(dataset.frames[index, k], sample_dir / f"frame_{k}.png")
            frames.append(f"{sample_dir.name}/frame_{k}.png")
        entries.append({'index': index, 'task_id': int(dataset.task_ids[index]),
                        'label': int(dataset.labels[index]), 'frames': frames})
    return FileHandler.write_json(directory / 'manifest.json', {'seed': int(dataset.seed), 'samples': entries})
