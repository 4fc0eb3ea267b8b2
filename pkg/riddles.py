"""
Riddle generation: the task registry, keyed random streams, and assembly of
six-frame oddity samples from the concept families.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np
import yaml

from config import config
from errors import ConfigurationError, GenerationError, RangeError
from families import ConceptFamily, Figure, build_family, ink, match_ink
from geometry import BG_RANGE, FG_RANGE, FRAME_SIZE, Frame, render
from logger import Logger

CATEGORIES = (
    'topology',
    'euclidean_lines',
    'basic_figures',
    'symmetry',
    'chirality',
    'metric_properties',
    'proportions',
    'geometrical_transformations',
)

FRAMES_PER_SAMPLE = 6
MAX_TASK_ID = 45
DEFAULT_MAX_RETRIES = 64
# Draws allowed for the figure whose ink the oddity is matched to.
REFERENCE_ATTEMPTS = 8
# Every control point stays this far from the frame border.
FRAME_MARGIN = 0.03


@dataclass(frozen=True)
class TaskSpec:
    """One registered task: the family that draws it and the family's parameters."""
    task_id: int
    name: str
    category: str
    family: str
    params: Dict = field(default_factory=dict)
    canonical: bool = False

    def build(self) -> ConceptFamily:
        return build_family(self.family, self.params)


class TaskRegistry:
    """
    The roster of tasks, keyed by id.

    Raises:
        ConfigurationError: On duplicate ids, ids outside [1, 45], unknown
            categories or families, or invalid family parameters.
    """

    def __init__(self, specs: Sequence[TaskSpec]):
        self._specs: Dict[int, TaskSpec] = {}
        self._families: Dict[int, ConceptFamily] = {}
        for spec in specs:
            if spec.task_id in self._specs:
                raise ConfigurationError(f"duplicate task id {spec.task_id}")
            if not 1 <= spec.task_id <= MAX_TASK_ID:
                raise ConfigurationError(f"task id {spec.task_id} outside [1, {MAX_TASK_ID}]")
            if spec.category not in CATEGORIES:
                raise ConfigurationError(f"task {spec.task_id}: unknown category {spec.category!r}")
            self._families[spec.task_id] = spec.build()
            self._specs[spec.task_id] = spec

    @classmethod
    def load(cls, path: Path) -> "TaskRegistry":
        """Reads a roster from YAML (a top-level `tasks` list)."""
        with open(path, 'r') as f:
            data = yaml.safe_load(f) or {}
        try:
            specs = [TaskSpec(task_id=int(entry['id']), name=str(entry['name']),
                              category=str(entry['category']), family=str(entry['family']),
                              params=dict(entry.get('params') or {}),
                              canonical=bool(entry.get('canonical', False)))
                     for entry in data.get('tasks') or []]
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"{path}: malformed task entry ({e})") from e
        return cls(specs)

    def get(self, task_id: int) -> TaskSpec:
        if task_id not in self._specs:
            raise RangeError('task_id', task_id, 1, MAX_TASK_ID)
        return self._specs[task_id]

    def family(self, task_id: int) -> ConceptFamily:
        self.get(task_id)
        return self._families[task_id]

    @property
    def ids(self) -> List[int]:
        return sorted(self._specs)

    @property
    def canonical_ids(self) -> List[int]:
        return [i for i in self.ids if self._specs[i].canonical]

    def categories(self) -> Dict[str, List[int]]:
        grouped: Dict[str, List[int]] = {c: [] for c in CATEGORIES}
        for task_id in self.ids:
            grouped[self._specs[task_id].category].append(task_id)
        return grouped

    def __len__(self) -> int:
        return len(self._specs)

    def __iter__(self) -> Iterator[TaskSpec]:
        return (self._specs[i] for i in self.ids)

    def __contains__(self, task_id) -> bool:
        return task_id in self._specs


@lru_cache(maxsize=1)
def default_registry() -> TaskRegistry:
    """The roster from the configured tasks file."""
    return TaskRegistry.load(config.tasks_file)


class RngStream:
    """
    Counter-based generator keyed by (seed, index, *path).

    Distinct keys give disjoint Philox streams and the same key replays the
    same values, so samples can be generated in any order or in parallel.
    Unknown attributes are forwarded to the underlying numpy Generator.
    """

    def __init__(self, seed: int, index: int = 0, *path: int):
        self.seed = int(seed)
        self.key = (int(index),) + tuple(int(p) for p in path)
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.Philox(sequence))

    def spawn(self, tag: int) -> "RngStream":
        """An independent child stream."""
        return RngStream(self.seed, *self.key, tag)

    def __getattr__(self, name):
        return getattr(self.generator, name)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, key={self.key})"


@dataclass
class FrameSet:
    """Five concept-satisfying figures followed by the oddity."""
    figures: List[Figure]
    context: dict

    @property
    def oddity(self) -> Figure:
        return self.figures[-1]


@dataclass
class RiddleSample:
    """Six rasterized frames, shuffled, with the index of the oddity."""
    frames: np.ndarray
    label: int
    task_id: int
    figures: List[Figure]
    context: dict
    bg: np.ndarray
    fg: np.ndarray

    def frame(self, i: int) -> Frame:
        return Frame(self.frames[i], int(self.bg[i]), int(self.fg[i]))


def _inside(figure: Figure) -> bool:
    return all(shape.within_frame(FRAME_MARGIN) for shape in figure.shapes)


def _reference_ink(family: ConceptFamily, rng, context: dict) -> Optional[float]:
    for _ in range(REFERENCE_ATTEMPTS):
        reference = family.figure(rng, context, False)
        if reference is not None:
            return ink(reference)
    return None


def _attempt(family: ConceptFamily, rng) -> Optional[FrameSet]:
    """
    One try at a frame set; None when a figure fails its own checks.

    The oddity is rescaled to the ink of one more concept-satisfying figure
    drawn for the purpose, so ink carries no hint of the label.
    """
    context = family.context(rng)
    figures = []
    for i in range(FRAMES_PER_SAMPLE):
        odd = i == FRAMES_PER_SAMPLE - 1
        figure = family.figure(rng, context, odd)
        if odd and figure is not None and not family.matches_ink:
            target = _reference_ink(family, rng, context)
            figure = match_ink(rng, figure, target) if target is not None else None
        if figure is None or not _inside(figure) or family.holds(figure, context) == odd:
            return None
        figures.append(figure)
    return FrameSet(figures, context)


def generate_frame_set(spec: TaskSpec, rng, max_retries: int = DEFAULT_MAX_RETRIES,
                       registry: Optional[TaskRegistry] = None) -> FrameSet:
    """
    Draws five figures that satisfy the task's concept and one that violates it.

    Args:
        spec: The task.
        rng: RngStream (or numpy Generator) supplying all randomness.
        max_retries: Attempts before giving up.
        registry: Registry holding the task's family; built from the task itself otherwise.

    Raises:
        GenerationError: If no valid layout is found within max_retries attempts.
    """
    family = registry.family(spec.task_id) if registry is not None else spec.build()
    for _ in range(max_retries):
        frame_set = _attempt(family, rng)
        if frame_set is not None:
            return frame_set
    raise GenerationError(spec.task_id, max_retries, "figure layout")


def _all_distinct(frames: np.ndarray) -> bool:
    return np.unique(frames.reshape(len(frames), -1), axis=0).shape[0] == len(frames)


def generate_sample(spec: TaskSpec, rng, size: int = FRAME_SIZE, max_retries: int = DEFAULT_MAX_RETRIES,
                    registry: Optional[TaskRegistry] = None, logger: Optional[Logger] = None) -> RiddleSample:
    """
    Builds one rasterized, shuffled and uniqueness-checked riddle.

    Each frame gets its own background level in [235, 255] and foreground level
    in [0, 61]. The oddity's position after shuffling is the label (0-based).

    Raises:
        GenerationError: If the retry budget runs out on layout or uniqueness.
    """
    family = registry.family(spec.task_id) if registry is not None else spec.build()
    reason = "figure layout"
    for attempt in range(max_retries):
        frame_set = _attempt(family, rng)
        if frame_set is None:
            continue
        bg = rng.integers(BG_RANGE[0], BG_RANGE[1] + 1, size=FRAMES_PER_SAMPLE)
        fg = rng.integers(FG_RANGE[0], FG_RANGE[1] + 1, size=FRAMES_PER_SAMPLE)
        order = rng.permutation(FRAMES_PER_SAMPLE)
        frames = np.stack([render(frame_set.figures[j].shapes, int(bg[j]), int(fg[j]), size).pixels
                           for j in order])
        if not _all_distinct(frames):
            reason = "duplicate frames"
            if logger is not None:
                logger.log_debug("Duplicate frames in riddle, retrying", task_id=spec.task_id, attempt=attempt)
            continue
        label = int(np.flatnonzero(order == FRAMES_PER_SAMPLE - 1)[0])
        return RiddleSample(frames=frames, label=label, task_id=spec.task_id,
                            figures=[frame_set.figures[j] for j in order], context=frame_set.context,
                            bg=bg[order], fg=fg[order])
    raise GenerationError(spec.task_id, max_retries, reason)


def verify_sample(sample: RiddleSample, registry: Optional[TaskRegistry] = None) -> List[int]:
    """Indices of the frames whose stored geometry violates the task's concept."""
    registry = registry or default_registry()
    family = registry.family(sample.task_id)
    return [i for i, figure in enumerate(sample.figures) if not family.holds(figure, sample.context)]


def sample_at(registry: TaskRegistry, task_ids: Sequence[int], seed: int, index: int,
              size: int = FRAME_SIZE, max_retries: int = DEFAULT_MAX_RETRIES) -> RiddleSample:
    """
    The sample stored at `index` of a dataset with the given seed.

    With several task ids the task is drawn uniformly per sample.
    """
    stream = RngStream(seed, index)
    if len(task_ids) == 1:
        task_id = task_ids[0]
    else:
        task_id = task_ids[int(stream.spawn(0).integers(len(task_ids)))]
    return generate_sample(registry.get(task_id), stream.spawn(1), size=size,
                           max_retries=max_retries, registry=registry)
