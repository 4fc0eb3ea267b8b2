"""Unit tests for activity dumps, heatmaps and accuracy tables."""
import csv

import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from config import config
from experiment import RunReport
from files import FileHandler
from geometry import read_image
from oren import OReN, oren_forward
from riddles import RngStream
from saccadic import S_I, SaccadeStream, SaccadicNet, build_saccade_stream
from vision import TINY_LAYOUT
from viz import (TABLE_COLUMNS, accuracy_rows, emit_accuracy_table, heatmap_pixels, normalize_rows, oren_activity,
                 pair_order, render_activity_maps, saccadic_activity, write_potentials_csv)


def _report(model, width, setup, task_id, accuracy):
    return RunReport(name=f"{model}_{width}_{task_id}", config={'model': model, 'width': width, 'setup': setup,
                                                               'task_id': task_id},
                     test_accuracy=accuracy, parameter_count=100 * width)


class TestNormalize:
    """Test cases for row normalization."""

    def test_min_max(self):
        """Test that [1, 2, 3] maps to [0, 0.5, 1]."""
        assert normalize_rows([[1.0, 2.0, 3.0]]).tolist() == [[0.0, 0.5, 1.0]]

    def test_constant_row(self):
        """Test that a constant row maps to zeros."""
        assert normalize_rows([[4.0, 4.0], [0.0, 2.0]]).tolist() == [[0.0, 0.0], [0.0, 1.0]]

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 8)),
                  elements=st.floats(-1e6, 1e6, allow_nan=False)))
    def test_rows_in_unit_interval(self, matrix):
        """Test that every normalized value lies in [0, 1] and non-constant rows reach both ends."""
        out = normalize_rows(matrix)
        assert np.all((out >= 0.0) & (out <= 1.0))
        varied = matrix.max(axis=1) > matrix.min(axis=1)
        assert np.all(out[varied].max(axis=1) == 1.0)
        assert np.all(out[varied].min(axis=1) == 0.0)

    def test_heatmap_scale(self):
        """Test that each value becomes a scale x scale block of 0..255."""
        pixels = heatmap_pixels(np.array([[0.0, 1.0]]), scale=3)
        assert pixels.shape == (3, 6)
        assert pixels.dtype == np.uint8
        assert pixels[:, :3].max() == 0 and pixels[:, 3:].min() == 255


class TestPairOrder:
    """Test cases for the sorted saccadic view."""

    def test_is_permutation_keeping_initialization(self):
        """Test that the order permutes all steps and leaves the first 18 in place."""
        stream = build_saccade_stream(RngStream(9))
        order = pair_order(stream)
        assert sorted(order.tolist()) == list(range(36))
        assert order[:S_I].tolist() == list(range(S_I))

    def test_groups_by_frame(self):
        """Test that evaluation steps are grouped by the frame in view."""
        stream = build_saccade_stream(RngStream(2))
        viewed = stream.indices[pair_order(stream)][S_I:]
        assert viewed.tolist() == sorted(viewed.tolist())


class TestActivity:
    """Test cases for activity capture and rendering."""

    def test_oren_activity(self, rng, temp_dir):
        """Test relation shapes, agreement with the forward pass and the written maps."""
        model = OReN(4, np.random.default_rng(0), input_size=16, channels=2, layout=TINY_LAYOUT, dtype=np.float64)
        frames = rng.integers(0, 256, size=(6, 16, 16), dtype=np.uint8)
        activity = oren_activity(model, frames)
        assert activity.relations.shape == (6, 6, 4)
        assert np.all(activity.relations >= 0.0)
        scores = activity.scores - activity.scores.max()
        np.testing.assert_allclose(np.exp(scores) / np.exp(scores).sum(), oren_forward(model, frames))
        paths = render_activity_maps(activity, temp_dir / 'maps', scale=2)
        assert [p.name for p in paths] == [f"group_{k}.png" for k in range(6)] + ['scores.csv']
        assert read_image(paths[0]).shape == (12, 8)

    def test_saccadic_activity(self, rng, temp_dir):
        """Test layer potentials, the sorted map and the potentials CSV."""
        net = SaccadicNet('ssnu', 3, np.random.default_rng(0), input_size=16, channels=2, layout=TINY_LAYOUT,
                          dtype=np.float64)
        stream = SaccadeStream(np.tile(np.arange(6)[::-1], 6))
        activity = saccadic_activity(net, rng.integers(0, 256, size=(6, 16, 16), dtype=np.uint8), stream)
        assert activity.potentials.shape == (36, 3)
        np.testing.assert_array_equal(activity.sorted_potentials[:S_I], activity.potentials[:S_I])
        paths = render_activity_maps(activity, temp_dir / 'maps')
        assert [p.name for p in paths] == ['layer3.png', 'layer3_sorted.png']
        assert read_image(paths[1]).shape == (36 * 8, 3 * 8)

        path = write_potentials_csv(activity.trace.potentials, temp_dir / 'potentials.csv')
        with open(path, newline='') as f:
            rows = list(csv.reader(f))
        assert rows[0] == ['step', 'layer', 'neuron', 'value']
        assert len(rows) == 1 + 3 * 36 * 3
        assert rows[1][:3] == ['1', '1', '0']
        assert float(rows[-1][3]) == activity.trace.potentials[2][35, 2]


class TestAccuracyTable:
    """Test cases for the accuracy table."""

    def test_rows_sorted_with_human_baseline(self):
        """Test sort order, task ids as integers and the per-task human value."""
        reports = [_report('ssnu', 32, 'separate', 10, 0.9), _report('ssnu', 32, 'separate', 2, 0.8),
                   _report('lstm', 64, 'joint', None, 0.5), _report('ssnu', 16, 'separate', 3, 0.7)]
        rows = accuracy_rows(reports, human={2: 0.95}, human_average=0.668)
        assert [(r[0], r[1], r[3]) for r in rows] == [('lstm', 64, ''), ('ssnu', 16, 3), ('ssnu', 32, 2),
                                                      ('ssnu', 32, 10)]
        assert [r[6] for r in rows] == [0.668, 0.668, 0.95, 0.668]

    def test_emitted_files(self, temp_dir):
        """Test that the CSV reparses and the markdown has a row per report."""
        reports = [_report('oren', 32, 'separate', 1, 0.75), _report('snn', 32, 'separate', 1, 0.5)]
        csv_path, md_path = emit_accuracy_table(reports, temp_dir, human={1: 0.9})
        with open(csv_path, newline='') as f:
            rows = list(csv.reader(f))
        assert rows[0] == list(TABLE_COLUMNS)
        assert rows[1] == ['oren', '32', 'separate', '1', '0.75', '3200', '0.9']
        lines = md_path.read_text().splitlines()
        assert len(lines) == 4
        assert '0.7500' in lines[2]

    def test_rerun_is_byte_identical(self, temp_dir):
        """Test that emitting twice writes the same bytes."""
        reports = [_report('oren', 32, 'separate', 1, 0.75)]
        first = [p.read_bytes() for p in emit_accuracy_table(reports, temp_dir)]
        second = [p.read_bytes() for p in emit_accuracy_table(reports, temp_dir)]
        assert first == second

    def test_shipped_human_table_falls_back_to_average(self):
        """Test that the shipped table has no rows, so every task gets the configured human average."""
        human = FileHandler.load_human_accuracy(config.human_accuracy_file)
        assert human == {}
        rows = accuracy_rows([_report('ssnu', 32, 'separate', 8, 0.9), _report('oren', 32, 'separate', 27, 0.8)],
                             human=human, human_average=config.get_human_average())
        assert [r[6] for r in rows] == [0.668, 0.668]
