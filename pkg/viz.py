"""
Activity dumps, grayscale heatmaps and accuracy tables.

Every emitter is a pure function of its inputs and overwrites its outputs
with identical bytes on reruns.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from files import FileHandler
from geometry import write_png
from oren import OReN, make_pairs
from riddles import FRAMES_PER_SAMPLE
from saccadic import S_I, BeliefTrace, SaccadeStream, SaccadicNet, saccadic_forward
from vision import vision_embed

HEATMAP_SCALE = 8
TABLE_COLUMNS = ('model', 'N', 'setup', 'task_id', 'test_accuracy', 'parameters', 'human')


def normalize_rows(matrix) -> np.ndarray:
    """
    Maps each row to [0, 1] by (v - min) / (max - min).

    Constant rows map to zeros.
    """
    m = np.asarray(matrix, dtype=np.float64)
    low = m.min(axis=-1, keepdims=True)
    span = m.max(axis=-1, keepdims=True) - low
    out = np.zeros_like(m)
    np.divide(m - low, span, out=out, where=span > 0)
    return out


@dataclass
class OReNActivity:
    """Relation outputs [6 groups, 6 pairs, N] and the six frame scores."""
    relations: np.ndarray
    scores: np.ndarray


@dataclass
class SaccadicActivity:
    """Membrane potentials [36, N] of one layer and the stream they were recorded on."""
    potentials: np.ndarray
    stream: SaccadeStream
    layer: int = 3
    trace: Optional[BeliefTrace] = None

    @property
    def order(self) -> np.ndarray:
        return pair_order(self.stream)

    @property
    def sorted_potentials(self) -> np.ndarray:
        return self.potentials[self.order]


def pair_order(stream: SaccadeStream) -> np.ndarray:
    """
    Step order grouping the evaluation window by viewed frame.

    Initialization steps keep their place; evaluation steps are stably sorted
    so frame 0's steps come first, then frame 1's, and so on.
    """
    window = np.argsort(stream.evaluation, kind='stable') + S_I
    return np.concatenate([np.arange(S_I), window])


def oren_activity(model: OReN, frames: np.ndarray) -> OReNActivity:
    """Relation activations and scores for one riddle in inference mode."""
    was_training = model.training
    model.eval()
    try:
        embeddings = vision_embed(model.vision, np.asarray(frames)[None])
        relations = model.relation(make_pairs(embeddings).reshape(FRAMES_PER_SAMPLE ** 2, -1))
        summed = relations.reshape(FRAMES_PER_SAMPLE, FRAMES_PER_SAMPLE, model.width).sum(axis=1)
        scores = model.score(summed).reshape(FRAMES_PER_SAMPLE)
    finally:
        model.train(was_training)
    return OReNActivity(relations=relations.data.reshape(FRAMES_PER_SAMPLE, FRAMES_PER_SAMPLE, model.width),
                        scores=scores.data.copy())


def saccadic_activity(net: SaccadicNet, frames: np.ndarray, stream: SaccadeStream, layer: int = 3) -> SaccadicActivity:
    """Potentials of `layer` (1-based) while viewing one riddle."""
    trace = saccadic_forward(net, frames, stream)
    return SaccadicActivity(potentials=trace.potentials[layer - 1], stream=stream, layer=layer, trace=trace)


def heatmap_pixels(matrix: np.ndarray, scale: int = HEATMAP_SCALE) -> np.ndarray:
    """Row-normalized grayscale image, each value drawn as a scale x scale block."""
    pixels = np.rint(normalize_rows(matrix) * 255.0).astype(np.uint8)
    return np.repeat(np.repeat(pixels, scale, axis=0), scale, axis=1)


def render_activity_maps(dump, directory: Path, scale: int = HEATMAP_SCALE) -> List[Path]:
    """
    Writes heatmaps for an OReN or saccadic activity dump.

    OReN: group_k.png (6 x N) per leading frame plus scores.csv.
    Saccadic: layer<L>.png and layer<L>_sorted.png (36 x N).
    """
    directory = FileHandler.ensure_dir(directory)
    paths = []
    if isinstance(dump, OReNActivity):
        for k, group in enumerate(dump.relations):
            paths.append(write_png(heatmap_pixels(group, scale), directory / f"group_{k}.png"))
        paths.append(FileHandler.write_csv(directory / 'scores.csv', ('frame', 'score'),
                                           ((k, float(q)) for k, q in enumerate(dump.scores))))
    else:
        stem = f"layer{dump.layer}"
        paths.append(write_png(heatmap_pixels(dump.potentials, scale), directory / f"{stem}.png"))
        paths.append(write_png(heatmap_pixels(dump.sorted_potentials, scale), directory / f"{stem}_sorted.png"))
    return paths


def write_potentials_csv(potentials: Sequence[np.ndarray], path: Path) -> Path:
    """Dumps per-layer [36, N] potentials as (step, layer, neuron, value) rows; steps and layers are 1-based."""
    def rows() -> Iterable[Tuple]:
        for layer, values in enumerate(potentials, start=1):
            for step, neuron in np.ndindex(values.shape):
                yield step + 1, layer, neuron, repr(float(values[step, neuron]))
    return FileHandler.write_csv(path, ('step', 'layer', 'neuron', 'value'), rows())


def accuracy_rows(reports, human: Optional[Dict[int, float]] = None, human_average: float = 0.668) -> List[list]:
    """One row per report, sorted by (model, N, task)."""
    human = human or {}
    rows = []
    for report in reports:
        cfg = report.config
        task_id = cfg.get('task_id') if cfg.get('setup') == 'separate' else ''
        baseline = human.get(task_id, human_average) if task_id != '' else human_average
        rows.append([cfg['model'], int(cfg['width']), cfg['setup'], task_id,
                     report.test_accuracy, report.parameter_count, baseline])
    # Joint rows (no task id) sort ahead of the per-task rows.
    return sorted(rows, key=lambda r: (r[0], r[1], -1 if r[3] == '' else r[3]))


def emit_accuracy_table(reports, directory: Path, human: Optional[Dict[int, float]] = None,
                        human_average: float = 0.668, stem: str = 'accuracy') -> Tuple[Path, Path]:
    """
    Writes <stem>.csv and <stem>.md with model, N, accuracy, parameter count and the human baseline.

    Returns:
        (csv path, markdown path)
    """
    directory = FileHandler.ensure_dir(directory)
    rows = accuracy_rows(reports, human, human_average)
    csv_path = FileHandler.write_csv(directory / f"{stem}.csv", TABLE_COLUMNS, rows)

    def cell(value) -> str:
        if isinstance(value, float):
            return f"{value:.4f}"
        return '' if value is None else str(value)

    lines = ["| " + " | ".join(TABLE_COLUMNS) + " |", "|" + "---|" * len(TABLE_COLUMNS)]
    lines += ["| " + " | ".join(cell(v) for v in row) + " |" for row in rows]
    md_path = directory / f"{stem}.md"
    md_path.write_text("\n".join(lines) + "\n")
    return csv_path, md_path
