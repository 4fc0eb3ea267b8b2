"""Unit tests for the task registry, concept families and riddle generation."""
import numpy as np
import pytest

from errors import ConfigurationError, GenerationError, RangeError
from families import FAMILIES, MARGIN, ConceptFamily, Figure, build_family, ink, match_ink
from geometry import Shape
from riddles import (CATEGORIES, DEFAULT_MAX_RETRIES, FRAMES_PER_SAMPLE, MAX_TASK_ID, RngStream, TaskRegistry,
                     TaskSpec, generate_frame_set, generate_sample, sample_at, verify_sample)

SQUARE = np.array([[0.3, 0.3], [0.5, 0.3], [0.5, 0.5], [0.3, 0.5]])
# Tasks times attributes checked for label independence, for the Bonferroni bound.
NUISANCE_COMPARISONS = MAX_TASK_ID * 2
NUISANCE_PERMUTATIONS = 50000


class _Never(ConceptFamily):
    name = 'never'

    def figure(self, rng, context, odd):
        return None

    def holds(self, figure, context):
        return True


class _Blank(ConceptFamily):
    """Every figure is the same point, so frames only differ by gray levels."""
    name = 'blank'

    def figure(self, rng, context, odd):
        return Figure([Shape.point((0.5, 0.5))], {'odd': np.array([float(odd)])})

    def holds(self, figure, context):
        return figure.geometry['odd'][0] == 0.0


class _Squares(ConceptFamily):
    """Squares of side 0.2; the oddity is a 0.4 x 0.2 rectangle."""
    name = 'squares'

    def figure(self, rng, context, odd):
        corners = np.array([[0.0, 0.0], [0.4 if odd else 0.2, 0.0], [0.4 if odd else 0.2, 0.2], [0.0, 0.2]]) + 0.3
        return Figure([Shape.polygon(corners)], {'vertices': corners})

    def holds(self, figure, context):
        v = figure.geometry['vertices']
        sides = np.linalg.norm(v - np.roll(v, -1, axis=0), axis=1)
        return sides.max() / sides.min() < 1.01


def _squares_task(family: ConceptFamily):
    spec = TaskSpec(1, 'squares', 'basic_figures', 'quadrilateral')
    registry = TaskRegistry([spec])
    registry._families[1] = family
    return spec, RngStream(0), DEFAULT_MAX_RETRIES, registry


def _label_p_value(values: np.ndarray, labels: np.ndarray, rng, chunk: int = 2000) -> float:
    """
    Two-sided permutation p-value for the mean standardized value of the labelled frame.

    `values` holds one scalar per frame, shape [samples, 6]. Labels are shuffled
    across samples, which leaves the statistic's null distribution exact.
    """
    spread = values.std(axis=1, keepdims=True)
    scores = (values - values.mean(axis=1, keepdims=True)) / np.where(spread > 0.0, spread, 1.0)
    rows = np.arange(len(labels))
    observed = abs(scores[rows, labels].mean())
    extreme = 0
    for start in range(0, NUISANCE_PERMUTATIONS, chunk):
        count = min(chunk, NUISANCE_PERMUTATIONS - start)
        shuffled = rng.permuted(np.tile(labels, (count, 1)), axis=1)
        extreme += int((np.abs(scores[rows, shuffled].mean(axis=1)) >= observed).sum())
    return (extreme + 1) / (NUISANCE_PERMUTATIONS + 1)


class TestRngStream:
    """Test cases for keyed random streams."""

    def test_same_key_replays(self):
        """Test that equal keys produce equal draws."""
        assert RngStream(5, 3).random(4).tolist() == RngStream(5, 3).random(4).tolist()

    def test_distinct_keys_differ(self):
        """Test that the index and the seed both change the stream."""
        base = RngStream(5, 3).random(4).tolist()
        assert RngStream(5, 4).random(4).tolist() != base
        assert RngStream(6, 3).random(4).tolist() != base

    def test_spawn_extends_key(self):
        """Test that children are keyed by the parent's path plus the tag."""
        child = RngStream(1, 2).spawn(7)
        assert child.key == (2, 7)
        assert child.integers(1000, size=3).tolist() == RngStream(1, 2, 7).integers(1000, size=3).tolist()


class TestTaskRegistry:
    """Test cases for the task roster."""

    def test_roster_size(self, registry):
        """Test that all 45 tasks are registered and 1-12 are canonical."""
        assert len(registry) == 45
        assert registry.ids == list(range(1, 46))
        assert registry.canonical_ids == list(range(1, 13))

    def test_every_category_used(self, registry):
        """Test that each of the eight categories has tasks."""
        grouped = registry.categories()
        assert set(grouped) == set(CATEGORIES)
        assert all(grouped[c] for c in CATEGORIES)

    def test_unknown_task(self, registry):
        """Test that task 46 raises RangeError."""
        with pytest.raises(RangeError):
            registry.get(46)
        assert 46 not in registry

    def test_duplicate_ids(self):
        """Test that repeated ids raise ConfigurationError."""
        spec = TaskSpec(1, 'a', 'topology', 'closed_curve')
        with pytest.raises(ConfigurationError):
            TaskRegistry([spec, spec])

    def test_id_out_of_range(self):
        """Test that id 0 raises ConfigurationError."""
        with pytest.raises(ConfigurationError):
            TaskRegistry([TaskSpec(0, 'a', 'topology', 'closed_curve')])

    def test_unknown_category(self):
        """Test that an unknown category raises ConfigurationError."""
        with pytest.raises(ConfigurationError):
            TaskRegistry([TaskSpec(1, 'a', 'colour', 'closed_curve')])

    def test_load_malformed(self, temp_dir):
        """Test that an entry without an id raises ConfigurationError."""
        path = temp_dir / 'tasks.yaml'
        path.write_text("tasks:\n  - {name: a, category: topology, family: closed_curve}\n")
        with pytest.raises(ConfigurationError):
            TaskRegistry.load(path)


class TestFamilies:
    """Test cases for the concept families."""

    def test_unknown_family(self):
        """Test that an unknown family name raises ConfigurationError."""
        with pytest.raises(ConfigurationError):
            build_family('spiral')

    def test_unknown_parameter(self):
        """Test that a parameter the family does not take raises ConfigurationError."""
        with pytest.raises(ConfigurationError):
            build_family('midpoint', {'count': 3})

    def test_invalid_parameter_value(self):
        """Test that parameter validation surfaces as ConfigurationError."""
        with pytest.raises(ConfigurationError):
            build_family('points_on_line', {'count': 2})

    def test_every_family_used(self, registry):
        """Test that the roster exercises every family."""
        assert {spec.family for spec in registry} == set(FAMILIES)

    def test_points_on_line_holds(self):
        """Test the collinearity predicate on hand-made points."""
        family = build_family('points_on_line')
        straight = Figure([], {'points': np.array([[0.1, 0.1], [0.4, 0.4], [0.8, 0.8]])})
        bent = Figure([], {'points': np.array([[0.1, 0.1], [0.4, 0.5], [0.8, 0.8]])})
        assert family.holds(straight, {})
        assert not family.holds(bent, {})

    def test_closed_curve_holds(self):
        """Test that only a path returning to its start is closed."""
        family = build_family('closed_curve', {'sides': 3})
        triangle = np.array([[0.2, 0.2], [0.6, 0.2], [0.4, 0.6], [0.2, 0.2]])
        assert family.holds(Figure([], {'path': triangle}), {})
        assert not family.holds(Figure([], {'path': triangle[:-1]}), {})

    def test_axial_symmetry_lays_out(self):
        """Test that axial-symmetry figures fit the frame with their axis inside it."""
        for params in ({'half_vertices': 3}, {'half_vertices': 5, 'filled': True}):
            family = build_family('axial_symmetry', params)
            rng = np.random.default_rng(5)
            figures = [family.figure(rng, {}, odd) for odd in (False, True) * 100]
            assert all(f is not None for f in figures)
            assert all(MARGIN <= f.geometry['axis'].min() and f.geometry['axis'].max() <= 1.0 - MARGIN
                       for f in figures)
            assert [family.holds(f, {}) for f in figures[:4]] == [True, False, True, False]


class TestInk:
    """Test cases for ink measurement and ink matching."""

    def test_ink_by_shape_kind(self):
        """Test stroke, fill and point ink in frame units."""
        assert ink(Figure([Shape.segment((0.1, 0.5), (0.5, 0.5))])) == pytest.approx(0.4 * 0.02)
        assert ink(Figure([Shape.polygon(SQUARE, filled=True)])) == pytest.approx(0.04)
        assert ink(Figure([Shape.polygon(SQUARE)])) == pytest.approx(0.8 * 0.02)
        assert ink(Figure([Shape.point((0.5, 0.5))])) == pytest.approx(np.pi * 0.02 ** 2)

    @pytest.mark.parametrize('filled', [False, True])
    @pytest.mark.parametrize('ratio', [0.6, 1.0, 1.8])
    def test_match_reaches_target(self, rng, filled, ratio):
        """Test that the rescaled figure has the target ink and stays in the frame."""
        figure = Figure([Shape.polygon(SQUARE, filled=filled), Shape.point((0.4, 0.4))],
                        {'vertices': SQUARE.copy(), 'center': np.array([[0.4, 0.4]])})
        target = ink(figure) * ratio
        matched = match_ink(rng, figure, target)
        assert ink(matched) == pytest.approx(target)
        np.testing.assert_allclose(matched.geometry['vertices'], matched.shapes[0].points)
        np.testing.assert_allclose(matched.geometry['center'][0], matched.shapes[1].points[0])
        np.testing.assert_allclose(matched.geometry['center'][0], matched.geometry['vertices'].mean(axis=0))
        assert all(shape.within_frame(MARGIN) for shape in matched.shapes)
        assert matched.shapes[1].radius == figure.shapes[1].radius

    def test_match_keeps_concept(self, rng):
        """Test that ink matching keeps an oddity odd and a concept figure valid."""
        family = build_family('equilateral')
        normal = family.figure(rng, {}, False)
        odd = family.figure(rng, {}, True)
        assert family.holds(match_ink(rng, normal, 0.7 * ink(normal)), {})
        assert not family.holds(match_ink(rng, odd, 0.8 * ink(odd)), {})

    def test_points_only_unchanged(self, rng):
        """Test that a figure of points has no scale to adjust."""
        figure = Figure([Shape.point((0.5, 0.5))], {'odd': np.array([1.0])})
        assert match_ink(rng, figure, 1.0) is figure

    @pytest.mark.parametrize('target', [0.0, 10.0])
    def test_unreachable_target(self, rng, target):
        """Test that a target below the points' ink or beyond the frame gives None."""
        figure = Figure([Shape.segment((0.4, 0.5), (0.6, 0.5)), Shape.point((0.5, 0.6))])
        assert match_ink(rng, figure, target) is None

    def test_oddity_matched_to_concept_figure(self):
        """Test that a riddle's oddity is rescaled to the ink of a concept figure."""
        frame_set = generate_frame_set(*_squares_task(_Squares()))
        inks = [ink(f) for f in frame_set.figures]
        assert inks == pytest.approx([0.8 * 0.02] * 6)
        sides = np.linalg.norm(np.diff(frame_set.oddity.geometry['vertices'], axis=0), axis=1)
        assert sides.max() / sides.min() == pytest.approx(2.0)

    def test_family_matching_its_own_ink_left_alone(self):
        """Test that a family drawing size-matched oddities itself is not rescaled."""
        family = _Squares()
        family.matches_ink = True
        frame_set = generate_frame_set(*_squares_task(family))
        assert ink(frame_set.oddity) == pytest.approx(1.2 * 0.02)


class TestFrameSet:
    """Five concept figures and one oddity for every registered task."""

    @pytest.mark.parametrize('task_id', range(1, 46))
    def test_concept_split(self, registry, task_id):
        """Test that figures 1-5 satisfy the concept and figure 6 violates it."""
        frame_set = generate_frame_set(registry.get(task_id), RngStream(3, task_id), registry=registry)
        family = registry.family(task_id)
        assert len(frame_set.figures) == FRAMES_PER_SAMPLE
        assert [family.holds(f, frame_set.context) for f in frame_set.figures] == [True] * 5 + [False]

    def test_retry_budget_exhausted(self):
        """Test that a family that never lays out raises GenerationError."""
        spec = TaskSpec(1, 'never', 'topology', 'closed_curve')
        registry = TaskRegistry([spec])
        registry._families[1] = _Never()
        with pytest.raises(GenerationError) as excinfo:
            generate_frame_set(spec, RngStream(0), max_retries=3, registry=registry)
        assert excinfo.value.attempts == 3


class TestGenerateSample:
    """Test cases for rasterized riddles."""

    @pytest.mark.parametrize('task_id', [1, 5, 6, 9, 12, 13, 36, 45])
    def test_sample_invariants(self, registry, task_id):
        """Test shapes, gray levels, distinct frames and the oddity position."""
        sample = generate_sample(registry.get(task_id), RngStream(11, task_id), registry=registry)
        assert sample.frames.shape == (6, 100, 100)
        assert sample.frames.dtype == np.uint8
        assert 0 <= sample.label < 6
        assert len({frame.tobytes() for frame in sample.frames}) == 6
        for i in range(6):
            levels = set(np.unique(sample.frames[i]).tolist())
            assert levels == {int(sample.bg[i]), int(sample.fg[i])}
            assert 235 <= sample.bg[i] <= 255 and 0 <= sample.fg[i] <= 61
        assert verify_sample(sample, registry) == [sample.label]

    def test_frame_accessor(self, registry):
        """Test that frame(i) carries the per-frame levels."""
        sample = generate_sample(registry.get(2), RngStream(0), registry=registry)
        frame = sample.frame(3)
        assert frame.bg == sample.bg[3] and frame.fg == sample.fg[3]

    def test_sample_at_replays(self, registry):
        """Test that the same seed and index give the same sample."""
        a = sample_at(registry, [1, 2, 3], seed=4, index=17)
        b = sample_at(registry, [1, 2, 3], seed=4, index=17)
        assert a.task_id == b.task_id and a.label == b.label
        assert np.array_equal(a.frames, b.frames)

    def test_sample_at_joint_draws_listed_tasks(self, registry):
        """Test that joint sampling only uses the given task ids."""
        tasks = {sample_at(registry, [4, 7], seed=0, index=i).task_id for i in range(12)}
        assert tasks <= {4, 7}
        assert len(tasks) == 2

    def test_duplicate_frames_retried(self):
        """Test that identical layouts get distinct frames through their gray levels."""
        spec = TaskSpec(1, 'blank', 'topology', 'closed_curve')
        registry = TaskRegistry([spec])
        registry._families[1] = _Blank()
        sample = generate_sample(spec, RngStream(2), registry=registry)
        assert len({frame.tobytes() for frame in sample.frames}) == 6

    @pytest.mark.parametrize('task_id', [8, 28, 29])
    def test_axial_symmetry_tasks_generate(self, registry, task_id):
        """Test that every axial-symmetry task yields samples with only the oddity breaking symmetry."""
        for index in range(20):
            sample = sample_at(registry, [task_id], seed=0, index=index)
            assert verify_sample(sample, registry) == [sample.label]


@pytest.mark.slow
class TestLabelStatistics:
    """The oddity position is uniform over the six frames and no nuisance attribute gives it away."""

    def test_label_histogram(self, registry):
        """Test each position's share of 6000 samples is within 2% of 1/6."""
        counts = np.bincount([sample_at(registry, [1], seed=0, index=i).label for i in range(6000)], minlength=6)
        assert np.all(np.abs(counts / 6000.0 - 1.0 / 6.0) < 0.02)

    @pytest.mark.parametrize('task_id', range(1, MAX_TASK_ID + 1))
    def test_nuisance_independence(self, registry, task_id):
        """Test that neither the ink nor the foreground level of a frame predicts the label over 1000 samples."""
        samples = [sample_at(registry, [task_id], seed=1, index=i) for i in range(1000)]
        labels = np.array([s.label for s in samples])
        rng = np.random.default_rng(task_id)
        ink_pixels = np.array([(s.frames < 128).sum(axis=(1, 2)) for s in samples], dtype=np.float64)
        fg_levels = np.array([s.fg for s in samples], dtype=np.float64)
        for values in (ink_pixels, fg_levels):
            assert _label_p_value(values, labels, rng) > 0.01 / NUISANCE_COMPARISONS

    def test_p_value_flags_leaking_attribute(self):
        """Test that the permutation test catches an attribute that is larger on the oddity."""
        rng = np.random.default_rng(0)
        labels = rng.integers(6, size=1000)
        values = rng.normal(size=(1000, 6))
        assert _label_p_value(values, labels, rng) > 0.01 / NUISANCE_COMPARISONS
        values[np.arange(1000), labels] += 0.3
        assert _label_p_value(values, labels, rng) < 0.01 / NUISANCE_COMPARISONS
