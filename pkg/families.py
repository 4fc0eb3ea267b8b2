"""
Concept families for visual-oddity riddles.

A family draws figures that satisfy its concept (or, for the oddity, violate
it) and checks the concept on the figure's stored control points. Figures are
built around the origin and then placed at a random position, so position,
orientation and size are nuisance attributes drawn the same way for the
oddity and the other five frames. Riddle assembly rescales the oddity with
`match_ink` so its amount of ink follows the same distribution as the others.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from errors import ConfigurationError
from geometry import Shape, Transform2D, point_in_polygon, segment_distance, signed_area

MARGIN = 0.05
# Minimum clearance between separate strokes of one figure.
CLEARANCE = 0.05
LAYOUT_ATTEMPTS = 20


@dataclass
class Figure:
    """Shapes to draw plus the named control points the concept is checked on."""
    shapes: List[Shape]
    geometry: Dict[str, np.ndarray] = field(default_factory=dict)


def _unit(angle: float) -> np.ndarray:
    return np.array([np.cos(angle), np.sin(angle)])


def _rotate(points: np.ndarray, angle: float) -> np.ndarray:
    return Transform2D.rotation(angle).apply(points)


def _line_angle(p0, p1) -> float:
    """Direction of a line in degrees, in [0, 180)."""
    d = np.asarray(p1, dtype=np.float64) - np.asarray(p0, dtype=np.float64)
    return float(np.degrees(np.arctan2(d[1], d[0])) % 180.0)


def _line_difference(a: float, b: float) -> float:
    """Smallest angle between two undirected lines, in [0, 90]."""
    d = abs(a - b) % 180.0
    return min(d, 180.0 - d)


def _vertex_angle(vertex, end_a, end_b) -> float:
    """Interior angle at `vertex` in degrees, in [0, 180]."""
    u = np.asarray(end_a) - np.asarray(vertex)
    v = np.asarray(end_b) - np.asarray(vertex)
    cos = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
    return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))


def _point_line_distance(p, a, b) -> float:
    d = np.asarray(b) - np.asarray(a)
    w = np.asarray(p) - np.asarray(a)
    return float(abs(d[0] * w[1] - d[1] * w[0]) / np.linalg.norm(d))


def _projection(p, a, b) -> float:
    """Position of p's projection on a->b as a fraction of |ab|."""
    d = np.asarray(b) - np.asarray(a)
    return float(np.dot(np.asarray(p) - np.asarray(a), d) / np.dot(d, d))


def _signed(rng, low: float, high: float) -> float:
    """A magnitude in [low, high] with a random sign."""
    return float(rng.uniform(low, high) * rng.choice((-1.0, 1.0)))


def _offset(rng, points: np.ndarray, margin: float = MARGIN) -> Optional[np.ndarray]:
    """A random translation keeping every point inside the margin; None when the span is too wide."""
    low, high = points.min(axis=0), points.max(axis=0)
    if np.any(high - low > 1.0 - 2.0 * margin):
        return None
    return rng.uniform(margin - low, 1.0 - margin - high)


def _place(rng, geometry: Dict[str, np.ndarray], margin: float = MARGIN) -> Optional[Dict[str, np.ndarray]]:
    """Translates all arrays by one random offset keeping every point inside the margin."""
    offset = _offset(rng, np.vstack([g.reshape(-1, 2) for g in geometry.values()]), margin)
    if offset is None:
        return None
    return {name: g + offset for name, g in geometry.items()}


def _mirror(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Reflects points across the line through a and b."""
    d = (b - a) / np.linalg.norm(b - a)
    rel = points - a
    along = rel @ d
    return a + 2.0 * along[:, None] * d - rel


def _matched(points: np.ndarray, targets: np.ndarray, tolerance: float) -> bool:
    """True when every point has a target within `tolerance`."""
    distances = np.linalg.norm(points[:, None, :] - targets[None, :, :], axis=2)
    return bool(np.all(distances.min(axis=1) < tolerance))


def _star_polygon(rng, count: int, low: float, high: float) -> np.ndarray:
    """Irregular star-shaped polygon around the origin with `count` vertices."""
    step = 2.0 * np.pi / count
    angles = np.arange(count) * step + rng.uniform(-0.3, 0.3, size=count) * step
    radii = rng.uniform(low, high, size=count)
    return np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)


def _ink_terms(figure: Figure) -> Tuple[float, float, float]:
    """Ink split by how it grows with scale: fixed (points), linear (strokes), quadratic (fills)."""
    fixed = stroke = fill = 0.0
    for shape in figure.shapes:
        if shape.kind == 'point':
            fixed += len(shape.points) * np.pi * shape.radius ** 2
        elif shape.closed and shape.filled:
            fill += abs(signed_area(shape.points))
        else:
            path = np.vstack([shape.points, shape.points[:1]]) if shape.closed else shape.points
            stroke += float(np.linalg.norm(np.diff(path, axis=0), axis=1).sum()) * shape.thickness
    return fixed, stroke, fill


def ink(figure: Figure) -> float:
    """Foreground area of a figure in frame units: strokes as length times thickness, fills as area."""
    return sum(_ink_terms(figure))


def match_ink(rng, figure: Figure, target: float, margin: float = MARGIN) -> Optional[Figure]:
    """
    Rescales a figure about its center until its ink equals `target`, then places it anew.

    Point radii and stroke thickness are kept, so only the control points move.
    Figures made of points alone are returned unchanged.

    Returns:
        The rescaled figure, or None when no positive scale reaches the target
        or the rescaled figure no longer fits the frame.
    """
    fixed, stroke, fill = _ink_terms(figure)
    if stroke == 0.0 and fill == 0.0:
        return figure
    if target <= fixed:
        return None
    if fill > 0.0:
        scale = (np.sqrt(stroke ** 2 + 4.0 * fill * (target - fixed)) - stroke) / (2.0 * fill)
    else:
        scale = (target - fixed) / stroke
    points = np.vstack([s.points for s in figure.shapes] + [g.reshape(-1, 2) for g in figure.geometry.values()])
    center = (points.min(axis=0) + points.max(axis=0)) / 2.0
    offset = _offset(rng, (points - center) * scale, margin)
    if offset is None:
        return None
    t = Transform2D.translation(*(offset - center * scale)) @ Transform2D.scaling(scale)
    geometry = {name: t.apply(g.reshape(-1, 2)).reshape(g.shape) for name, g in figure.geometry.items()}
    return Figure([s.transformed(t) for s in figure.shapes], geometry)


class ConceptFamily:
    """Base class: subclasses draw figures and check their concept."""

    name = ''
    # True when figure() already draws the oddity's ink from the normal figures' distribution.
    matches_ink = False

    def context(self, rng) -> dict:
        """State shared by all six figures of one riddle."""
        return {}

    def figure(self, rng, context: dict, odd: bool) -> Optional[Figure]:
        raise NotImplementedError

    def holds(self, figure: Figure, context: dict) -> bool:
        raise NotImplementedError


class PointsOnLine(ConceptFamily):
    """Points lying on one straight line; the oddity has one point off the line."""

    name = 'points_on_line'

    def __init__(self, count: int = 3):
        if count < 3:
            raise ConfigurationError(f"{self.name}: count must be >= 3, got {count}")
        self.count = count

    def figure(self, rng, context, odd):
        length = rng.uniform(0.45, 0.8)
        angle = rng.uniform(0.0, np.pi)
        anchors = np.linspace(0.0, 1.0, self.count)
        jitter = 0.25 / (self.count - 1)
        anchors[1:-1] += rng.uniform(-jitter, jitter, size=self.count - 2)
        points = (anchors[:, None] - 0.5) * length * _unit(angle)
        if odd:
            k = rng.integers(1, self.count - 1)
            points[k] += _signed(rng, 0.06, 0.12) * _unit(angle + np.pi / 2)
        placed = _place(rng, {'points': points})
        if placed is None:
            return None
        return Figure([Shape.point(p) for p in placed['points']], placed)

    def holds(self, figure, context):
        points = figure.geometry['points']
        return max(_point_line_distance(p, points[0], points[-1]) for p in points[1:-1]) < 0.01


def _spread_segments(rng, segments: List[np.ndarray]) -> Optional[List[np.ndarray]]:
    """Places independent segments at random positions without touching each other."""
    for _ in range(LAYOUT_ATTEMPTS):
        placed = []
        for segment in segments:
            moved = _place(rng, {'s': segment})
            if moved is None:
                return None
            candidate = moved['s']
            if any(segment_distance(candidate[0], candidate[1], other[0], other[1]) < CLEARANCE
                   for other in placed):
                break
            placed.append(candidate)
        else:
            return placed
    return None


class Parallel(ConceptFamily):
    """Parallel segments; one segment of the oddity deviates by 15 to 40 degrees."""

    name = 'parallel'

    def __init__(self, count: int = 2):
        self.count = count

    def figure(self, rng, context, odd):
        angle = rng.uniform(0.0, np.pi)
        gap = rng.uniform(0.12, 0.2)
        angles = np.full(self.count, angle)
        if odd:
            angles[rng.integers(self.count)] += np.radians(_signed(rng, 15.0, 40.0))
        segments = []
        for j in range(self.count):
            center = (j - (self.count - 1) / 2.0) * gap * _unit(angle + np.pi / 2)
            center = center + rng.uniform(-0.1, 0.1) * _unit(angle)
            half = rng.uniform(0.25, 0.5) / 2.0 * _unit(angles[j])
            segments.append(np.stack([center - half, center + half]))
        for a in range(self.count):
            for b in range(a + 1, self.count):
                sa, sb = segments[a], segments[b]
                if segment_distance(sa[0], sa[1], sb[0], sb[1]) < CLEARANCE:
                    return None
        placed = _place(rng, {'segments': np.stack(segments)})
        if placed is None:
            return None
        return Figure([Shape.segment(*s) for s in placed['segments']], placed)

    def holds(self, figure, context):
        angles = [_line_angle(*s) for s in figure.geometry['segments']]
        return all(_line_difference(angles[0], a) < 0.5 for a in angles[1:])


class Angle(ConceptFamily):
    """
    Two strokes at a fixed angle, either meeting at a corner or crossing.

    The oddity's angle is off by 15 to 35 degrees.
    """

    name = 'angle'

    def __init__(self, angle: float = 90.0, crossing: bool = False):
        if not 20.0 <= angle <= 160.0:
            raise ConfigurationError(f"{self.name}: angle must be within [20, 160], got {angle}")
        self.angle = float(angle)
        self.crossing = crossing

    def figure(self, rng, context, odd):
        theta = rng.uniform(0.0, 2.0 * np.pi)
        target = self.angle
        if odd:
            delta = _signed(rng, 15.0, 35.0)
            target = self.angle + delta if 10.0 <= self.angle + delta <= 170.0 else self.angle - delta
        second = theta + np.radians(target)
        if self.crossing:
            a = np.stack([-rng.uniform(0.15, 0.3) * _unit(theta), rng.uniform(0.15, 0.3) * _unit(theta)])
            b = np.stack([-rng.uniform(0.15, 0.3) * _unit(second), rng.uniform(0.15, 0.3) * _unit(second)])
            placed = _place(rng, {'a': a, 'b': b})
            if placed is None:
                return None
            return Figure([Shape.segment(*placed['a']), Shape.segment(*placed['b'])], placed)

        ends = np.stack([rng.uniform(0.25, 0.4) * _unit(theta), rng.uniform(0.25, 0.4) * _unit(second)])
        placed = _place(rng, {'vertex': np.zeros((1, 2)), 'ends': ends})
        if placed is None:
            return None
        vertex, ends = placed['vertex'][0], placed['ends']
        return Figure([Shape.polyline([ends[0], vertex, ends[1]])], placed)

    def holds(self, figure, context):
        g = figure.geometry
        if self.crossing:
            measured = _line_difference(_line_angle(*g['a']), _line_angle(*g['b']))
            return abs(measured - min(self.angle, 180.0 - self.angle)) < 0.5
        return abs(_vertex_angle(g['vertex'][0], g['ends'][0], g['ends'][1]) - self.angle) < 0.5


class LengthRatio(ConceptFamily):
    """
    Segments whose lengths keep a fixed ratio (1 means equal lengths).

    The oddity scales one segment by a further factor of 1.3 to 1.6 (up or down),
    then all its segments are rescaled to the total length drawn before the change.
    """

    name = 'length_ratio'
    matches_ink = True

    def __init__(self, ratio: float = 1.0, count: int = 2):
        if ratio != 1.0 and count != 2:
            raise ConfigurationError(f"{self.name}: a ratio other than 1 needs exactly 2 segments")
        self.ratio = float(ratio)
        self.count = count

    def figure(self, rng, context, odd):
        if self.ratio == 1.0:
            lengths = np.full(self.count, rng.uniform(0.2, 0.35))
        else:
            base = rng.uniform(0.15, 0.5 / max(self.ratio, 1.0))
            lengths = np.array([base, base * self.ratio])
        if odd:
            total = lengths.sum()
            factor = rng.uniform(1.3, 1.6)
            j = rng.integers(self.count) if self.ratio == 1.0 else 1
            lengths[j] *= factor if rng.random() < 0.5 else 1.0 / factor
            lengths *= total / lengths.sum()
        segments = []
        for length in lengths:
            half = length / 2.0 * _unit(rng.uniform(0.0, np.pi))
            segments.append(np.stack([-half, half]))
        placed = _spread_segments(rng, segments)
        if placed is None:
            return None
        return Figure([Shape.segment(*s) for s in placed], {'segments': np.stack(placed)})

    def holds(self, figure, context):
        lengths = np.linalg.norm(figure.geometry['segments'][:, 1] - figure.geometry['segments'][:, 0], axis=1)
        if self.ratio == 1.0:
            return lengths.max() / lengths.min() < 1.01
        return abs(lengths[1] / lengths[0] - self.ratio) / self.ratio < 0.01


class Quadrilateral(ConceptFamily):
    """
    Squares (oddity: an area-matched rectangle) or rectangles (oddity: a
    parallelogram skewed by 15 to 30 degrees).
    """

    name = 'quadrilateral'

    def __init__(self, kind: str = 'square', filled: bool = False):
        if kind not in ('square', 'rectangle'):
            raise ConfigurationError(f"{self.name}: unknown kind {kind!r}")
        self.kind = kind
        self.filled = filled

    def figure(self, rng, context, odd):
        side = rng.uniform(0.25, 0.45)
        skew = 0.0
        if self.kind == 'square':
            aspect = rng.uniform(1.4, 1.8) if odd else 1.0
        else:
            aspect = rng.uniform(1.3, 2.0)
            skew = np.radians(rng.uniform(15.0, 30.0)) if odd else 0.0
        w, h = side * np.sqrt(aspect), side / np.sqrt(aspect)
        corners = np.array([[-w / 2, -h / 2], [w / 2, -h / 2], [w / 2, h / 2], [-w / 2, h / 2]])
        corners[:, 0] += corners[:, 1] * np.tan(skew)
        placed = _place(rng, {'vertices': _rotate(corners, rng.uniform(0.0, np.pi))})
        if placed is None:
            return None
        return Figure([Shape.polygon(placed['vertices'], filled=self.filled)], placed)

    def holds(self, figure, context):
        v = figure.geometry['vertices']
        angles = [_vertex_angle(v[i], v[i - 1], v[(i + 1) % 4]) for i in range(4)]
        if any(abs(a - 90.0) > 0.5 for a in angles):
            return False
        if self.kind == 'square':
            sides = np.linalg.norm(v - np.roll(v, -1, axis=0), axis=1)
            return sides.max() / sides.min() < 1.01
        return True


class ClosedCurve(ConceptFamily):
    """
    Closed outlines: a polygon with `sides` vertices, or a circle when sides is 0.

    The oddity leaves a gap in the outline.
    """

    name = 'closed_curve'

    def __init__(self, sides: int = 3):
        if sides != 0 and sides < 3:
            raise ConfigurationError(f"{self.name}: sides must be 0 or >= 3, got {sides}")
        self.sides = sides

    def figure(self, rng, context, odd):
        if self.sides == 0:
            radius = rng.uniform(0.15, 0.3)
            gap = np.radians(rng.uniform(40.0, 80.0)) if odd else 0.0
            start = rng.uniform(0.0, 2.0 * np.pi)
            path = Shape.arc((0.0, 0.0), radius, start, start + 2.0 * np.pi - gap).points
            if not odd:
                path[-1] = path[0]
        else:
            vertices = _rotate(_star_polygon(rng, self.sides, 0.18, 0.3), rng.uniform(0.0, 2.0 * np.pi))
            last = vertices[0]
            if odd:
                last = vertices[-1] + (1.0 - rng.uniform(0.3, 0.5)) * (vertices[0] - vertices[-1])
            path = np.vstack([vertices, last[None, :]])
        placed = _place(rng, {'path': path})
        if placed is None:
            return None
        return Figure([Shape.polyline(placed['path'])], placed)

    def holds(self, figure, context):
        path = figure.geometry['path']
        return float(np.linalg.norm(path[0] - path[-1])) < 1e-9


class Ellipse(ConceptFamily):
    """Circles; the oddity is an area-matched ellipse with axis ratio 1.5 to 1.9."""

    name = 'ellipse'

    def __init__(self, filled: bool = False):
        self.filled = filled

    def figure(self, rng, context, odd):
        radius = rng.uniform(0.15, 0.3)
        aspect = rng.uniform(1.5, 1.9) if odd else 1.0
        outline = Shape.circle((0.0, 0.0), radius / np.sqrt(aspect), aspect=aspect,
                               angle=rng.uniform(0.0, np.pi)).points
        placed = _place(rng, {'outline': outline, 'center': np.zeros((1, 2))})
        if placed is None:
            return None
        return Figure([Shape('circle', placed['outline'], filled=self.filled)], placed)

    def holds(self, figure, context):
        radii = np.linalg.norm(figure.geometry['outline'] - figure.geometry['center'], axis=1)
        return radii.max() / radii.min() < 1.01


class AxialSymmetry(ConceptFamily):
    """
    Polygons mirror-symmetric about a stored axis; the oddity pushes one vertex
    away from the axis or pulls it in by a factor of 1.5 to 2.
    """

    name = 'axial_symmetry'

    def __init__(self, half_vertices: int = 3, filled: bool = False):
        self.half_vertices = half_vertices
        self.filled = filled

    def figure(self, rng, context, odd):
        k = self.half_vertices
        height = rng.uniform(0.3, 0.5)
        ys = (np.arange(1, k + 1) / (k + 1) - 0.5) * height
        ys += rng.uniform(-0.25, 0.25, size=k) * height / (k + 1)
        right = np.stack([rng.uniform(0.06, 0.2, size=k), ys], axis=1)
        left = right[::-1] * np.array([-1.0, 1.0])
        if odd:
            i = rng.integers(k)
            factor = rng.uniform(1.5, 2.0)
            right[i, 0] *= factor if rng.random() < 0.5 else 1.0 / factor
        vertices = np.vstack([[[0.0, -height / 2]], right, [[0.0, height / 2]], left])
        angle = rng.uniform(0.0, 2.0 * np.pi)
        axis = np.array([[0.0, -height / 2], [0.0, height / 2]])
        placed = _place(rng, {'vertices': _rotate(vertices, angle), 'axis': _rotate(axis, angle)})
        if placed is None:
            return None
        return Figure([Shape.polygon(placed['vertices'], filled=self.filled)], placed)

    def holds(self, figure, context):
        vertices = figure.geometry['vertices']
        a, b = figure.geometry['axis']
        return _matched(_mirror(vertices, a, b), vertices, 0.005)


class PointSymmetry(ConceptFamily):
    """Polygons symmetric under a half turn; the oddity rescales one vertex radially."""

    name = 'point_symmetry'

    def __init__(self, half_vertices: int = 3, filled: bool = False):
        self.half_vertices = half_vertices
        self.filled = filled

    def figure(self, rng, context, odd):
        k = self.half_vertices
        step = np.pi / k
        angles = np.arange(k) * step + rng.uniform(-0.25, 0.25, size=k) * step
        radii = rng.uniform(0.12, 0.25, size=k)
        half = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
        vertices = np.vstack([half, -half])
        if odd:
            i = rng.integers(2 * k)
            factor = rng.uniform(1.35, 1.6) if rng.random() < 0.5 else rng.uniform(0.55, 0.7)
            vertices[i] *= factor
        placed = _place(rng, {'vertices': _rotate(vertices, rng.uniform(0.0, np.pi)), 'center': np.zeros((1, 2))})
        if placed is None:
            return None
        return Figure([Shape.polygon(placed['vertices'], filled=self.filled)], placed)

    def holds(self, figure, context):
        vertices = figure.geometry['vertices']
        center = figure.geometry['center'][0]
        return _matched(2.0 * center - vertices, vertices, 0.005)


class Chirality(ConceptFamily):
    """
    Rotated and rescaled copies of one chiral outline; the oddity is its mirror image.

    The concept is the orientation sign of the stored outline.
    """

    name = 'chirality'

    def __init__(self, shape: str = 'L', filled: bool = False):
        if shape not in ('L', 'flag'):
            raise ConfigurationError(f"{self.name}: unknown shape {shape!r}")
        self.shape = shape
        self.filled = filled

    def context(self, rng):
        height = rng.uniform(0.28, 0.38)
        t = rng.uniform(0.07, 0.09)
        if self.shape == 'L':
            w = height * rng.uniform(0.5, 0.65)
            base = np.array([[0, 0], [w, 0], [w, t], [t, t], [t, height], [0, height]], dtype=np.float64)
        else:
            w = height * rng.uniform(0.45, 0.6)
            f = height * rng.uniform(0.3, 0.4)
            base = np.array([[0, 0], [t, 0], [t + w, f / 2], [t, f], [t, height], [0, height]], dtype=np.float64)
        base -= (base.min(axis=0) + base.max(axis=0)) / 2.0
        return {'base': base, 'orientation': np.sign(signed_area(base))}

    def figure(self, rng, context, odd):
        vertices = context['base'] * rng.uniform(0.85, 1.15)
        if odd:
            vertices = vertices * np.array([-1.0, 1.0])
        placed = _place(rng, {'vertices': _rotate(vertices, rng.uniform(0.0, 2.0 * np.pi))})
        if placed is None:
            return None
        return Figure([Shape.polygon(placed['vertices'], filled=self.filled)], placed)

    def holds(self, figure, context):
        return bool(np.sign(signed_area(figure.geometry['vertices'])) == context['orientation'])


class Midpoint(ConceptFamily):
    """A segment with a point at its middle; the oddity's point sits 15 to 30 % off-center."""

    name = 'midpoint'

    def figure(self, rng, context, odd):
        half = rng.uniform(0.4, 0.75) / 2.0 * _unit(rng.uniform(0.0, np.pi))
        segment = np.stack([-half, half])
        tau = 0.5 + (_signed(rng, 0.15, 0.3) if odd else 0.0)
        point = segment[0] + tau * (segment[1] - segment[0])
        placed = _place(rng, {'segment': segment, 'point': point[None, :]})
        if placed is None:
            return None
        return Figure([Shape.segment(*placed['segment']), Shape.point(placed['point'][0])], placed)

    def holds(self, figure, context):
        segment = figure.geometry['segment']
        return abs(_projection(figure.geometry['point'][0], segment[0], segment[1]) - 0.5) < 0.01


class Proportion(ConceptFamily):
    """
    Three collinear points whose inner point splits the span at a fixed ratio.

    The ratio is either configured or drawn once per riddle from [0.2, 0.4];
    the oddity's ratio differs by 0.12 to 0.2. Ratios are compared as
    min(t, 1 - t) so the reading direction does not matter.
    """

    name = 'proportion'

    def __init__(self, ratio: Optional[float] = None):
        if ratio is not None and not 0.05 < ratio <= 0.5:
            raise ConfigurationError(f"{self.name}: ratio must be within (0.05, 0.5], got {ratio}")
        self.ratio = ratio

    def context(self, rng):
        return {'ratio': self.ratio if self.ratio is not None else float(rng.uniform(0.2, 0.4))}

    def figure(self, rng, context, odd):
        ratio = context['ratio']
        if odd:
            delta = rng.uniform(0.12, 0.2)
            ratio = ratio - delta if ratio - delta >= 0.05 else ratio + delta
        half = rng.uniform(0.45, 0.8) / 2.0 * _unit(rng.uniform(0.0, np.pi))
        a, c = -half, half
        if rng.random() < 0.5:
            a, c = c, a
        points = np.stack([a, a + ratio * (c - a), c])
        placed = _place(rng, {'points': points})
        if placed is None:
            return None
        return Figure([Shape.point(p) for p in placed['points']], placed)

    def holds(self, figure, context):
        a, b, c = figure.geometry['points']
        t = _projection(b, a, c)
        return abs(min(t, 1.0 - t) - context['ratio']) < 0.01


class CopyTransform(ConceptFamily):
    """
    Two copies of one outline related by a transformation fixed per riddle:
    a pure translation, a rotation by a fixed angle, or a fixed scaling.
    The oddity's second copy is rotated or scaled differently.
    """

    name = 'copy_transform'

    def __init__(self, mode: str = 'translation', filled: bool = False):
        if mode not in ('translation', 'rotation', 'scaling'):
            raise ConfigurationError(f"{self.name}: unknown mode {mode!r}")
        self.mode = mode
        self.filled = filled

    def context(self, rng):
        context = {'base': _star_polygon(rng, 5, 0.6, 1.0)}
        if self.mode == 'rotation':
            context['linear'] = Transform2D.rotation(np.radians(_signed(rng, 40.0, 140.0))).matrix[:2, :2]
        elif self.mode == 'scaling':
            context['linear'] = np.eye(2) * rng.uniform(1.5, 2.0)
        else:
            context['linear'] = np.eye(2)
        return context

    def figure(self, rng, context, odd):
        linear = context['linear']
        if odd:
            if self.mode == 'scaling':
                factor = rng.uniform(1.3, 1.5)
                linear = linear * (factor if rng.random() < 0.5 else 1.0 / factor)
            else:
                linear = Transform2D.rotation(np.radians(_signed(rng, 25.0, 60.0))).matrix[:2, :2] @ linear
        size = rng.uniform(0.07, 0.1)
        first = _rotate(context['base'] * size, rng.uniform(0.0, 2.0 * np.pi))
        reach = np.abs(linear).sum(axis=1).max() * size
        shift = rng.uniform(size + reach + CLEARANCE, 0.45) * _unit(rng.uniform(0.0, 2.0 * np.pi))
        second = first @ linear.T + shift
        placed = _place(rng, {'first': first, 'second': second})
        if placed is None:
            return None
        return Figure([Shape.polygon(placed['first'], filled=self.filled),
                       Shape.polygon(placed['second'], filled=self.filled)], placed)

    def holds(self, figure, context):
        first = figure.geometry['first'] - figure.geometry['first'].mean(axis=0)
        second = figure.geometry['second'] - figure.geometry['second'].mean(axis=0)
        solution, *_ = np.linalg.lstsq(first, second, rcond=None)
        return bool(np.abs(solution.T - context['linear']).max() < 1e-6)


class InsideOutside(ConceptFamily):
    """A point inside a closed outline; the oddity's point lies outside."""

    name = 'inside_outside'

    def __init__(self, container: str = 'circle'):
        if container not in ('circle', 'polygon'):
            raise ConfigurationError(f"{self.name}: unknown container {container!r}")
        self.container = container

    def figure(self, rng, context, odd):
        radius = rng.uniform(0.2, 0.3)
        if self.container == 'circle':
            outline = Shape.circle((0.0, 0.0), radius).points
        else:
            outline = _star_polygon(rng, 6, 0.8 * radius, radius)
        for _ in range(LAYOUT_ATTEMPTS):
            distance = rng.uniform(radius + 0.05, radius + 0.18) if odd else rng.uniform(0.0, 0.6 * radius)
            point = distance * _unit(rng.uniform(0.0, 2.0 * np.pi))
            if point_in_polygon(point, outline) == odd:
                continue
            edges = zip(outline, np.roll(outline, -1, axis=0))
            if min(segment_distance(point, point, a, b) for a, b in edges) >= 0.06:
                break
        else:
            return None
        placed = _place(rng, {'container': outline, 'point': point[None, :]})
        if placed is None:
            return None
        return Figure([Shape('circle' if self.container == 'circle' else 'polygon', placed['container']),
                       Shape.point(placed['point'][0])], placed)

    def holds(self, figure, context):
        return point_in_polygon(figure.geometry['point'][0], figure.geometry['container'])


class CircleCenter(ConceptFamily):
    """A circle with a point at its center; the oddity's point is 30 to 60 % of the radius off."""

    name = 'circle_center'

    def figure(self, rng, context, odd):
        radius = rng.uniform(0.15, 0.3)
        outline = Shape.circle((0.0, 0.0), radius).points
        point = (rng.uniform(0.3, 0.6) * radius if odd else 0.0) * _unit(rng.uniform(0.0, 2.0 * np.pi))
        placed = _place(rng, {'outline': outline, 'point': point[None, :]})
        if placed is None:
            return None
        return Figure([Shape('circle', placed['outline']), Shape.point(placed['point'][0])], placed)

    def holds(self, figure, context):
        center = figure.geometry['outline'].mean(axis=0)
        return float(np.linalg.norm(figure.geometry['point'][0] - center)) < 0.005


class Equilateral(ConceptFamily):
    """Equilateral triangles; the oddity moves one vertex radially so one pair of sides changes by over 20 %."""

    name = 'equilateral'

    def __init__(self, filled: bool = False):
        self.filled = filled

    def figure(self, rng, context, odd):
        radius = rng.uniform(0.15, 0.28)
        angles = rng.uniform(0.0, 2.0 * np.pi) + np.arange(3) * 2.0 * np.pi / 3.0
        radii = np.full(3, radius)
        if odd:
            radii[0] *= rng.uniform(1.45, 1.8) if rng.random() < 0.5 else rng.uniform(0.45, 0.6)
        vertices = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
        placed = _place(rng, {'vertices': vertices})
        if placed is None:
            return None
        return Figure([Shape.polygon(placed['vertices'], filled=self.filled)], placed)

    def holds(self, figure, context):
        v = figure.geometry['vertices']
        sides = np.linalg.norm(v - np.roll(v, -1, axis=0), axis=1)
        return sides.max() / sides.min() < 1.01


FAMILIES = {
    family.name: family
    for family in (PointsOnLine, Parallel, Angle, LengthRatio, Quadrilateral, ClosedCurve, Ellipse,
                   AxialSymmetry, PointSymmetry, Chirality, Midpoint, Proportion, CopyTransform,
                   InsideOutside, CircleCenter, Equilateral)
}


def build_family(name: str, params: Optional[dict] = None) -> ConceptFamily:
    """
    Instantiates a family by name.

    Raises:
        ConfigurationError: For an unknown family or parameter.
    """
    if name not in FAMILIES:
        raise ConfigurationError(f"unknown task family {name!r}")
    try:
        return FAMILIES[name](**(params or {}))
    except TypeError as e:
        raise ConfigurationError(f"family {name!r}: {e}") from e
