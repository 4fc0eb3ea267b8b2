"""
Two-dimensional geometry primitives and two-level rasterization onto grayscale frames.

Coordinates are normalized to [0, 1] with x to the right and y downwards;
pixel (x, y) is `frame.pixels[y, x]` and a normalized coordinate v maps to the
pixel coordinate v * size.
"""
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from errors import DimensionError, GeometryError, RangeError

FRAME_SIZE = 100
BG_RANGE = (235, 255)
FG_RANGE = (0, 61)

DEFAULT_THICKNESS = 0.02
DEFAULT_POINT_RADIUS = 0.02
CIRCLE_VERTICES = 64

SHAPE_KINDS = ('point', 'segment', 'polyline', 'polygon', 'circle', 'arc')
_CLOSED_KINDS = ('polygon', 'circle')


@dataclass
class Frame:
    """A square 8-bit grayscale raster with its background and foreground levels."""
    pixels: np.ndarray
    bg: int
    fg: Optional[int] = None

    @property
    def size(self) -> int:
        return self.pixels.shape[0]

    def copy(self) -> "Frame":
        return Frame(self.pixels.copy(), self.bg, self.fg)


@dataclass(frozen=True)
class Shape:
    """
    A drawable primitive in normalized coordinates.

    Circles and arcs are stored as their sampled outline so every kind
    transforms by mapping `points`.
    """
    kind: str
    points: np.ndarray
    filled: bool = False
    thickness: float = DEFAULT_THICKNESS
    radius: float = DEFAULT_POINT_RADIUS

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise GeometryError(f"unknown shape kind {self.kind!r}")
        points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        object.__setattr__(self, 'points', points)
        if self.kind in ('segment',) and len(points) != 2:
            raise GeometryError(f"segment needs 2 points, got {len(points)}")
        if self.kind in _CLOSED_KINDS and len(points) < 3:
            raise GeometryError(f"{self.kind} needs at least 3 vertices, got {len(points)}")

    @classmethod
    def point(cls, p, radius: float = DEFAULT_POINT_RADIUS) -> "Shape":
        return cls('point', [p], radius=radius)

    @classmethod
    def segment(cls, p0, p1, thickness: float = DEFAULT_THICKNESS) -> "Shape":
        return cls('segment', [p0, p1], thickness=thickness)

    @classmethod
    def polyline(cls, vertices, thickness: float = DEFAULT_THICKNESS) -> "Shape":
        return cls('polyline', vertices, thickness=thickness)

    @classmethod
    def polygon(cls, vertices, filled: bool = False, thickness: float = DEFAULT_THICKNESS) -> "Shape":
        return cls('polygon', vertices, filled=filled, thickness=thickness)

    @classmethod
    def circle(cls, center, radius: float, filled: bool = False, thickness: float = DEFAULT_THICKNESS,
               aspect: float = 1.0, angle: float = 0.0) -> "Shape":
        """A circle, or an ellipse with semi-axes (radius, radius * aspect) rotated by `angle`."""
        theta = np.linspace(0.0, 2.0 * np.pi, CIRCLE_VERTICES, endpoint=False)
        outline = np.stack([radius * np.cos(theta), radius * aspect * np.sin(theta)], axis=1)
        outline = Transform2D.rotation(angle).apply(outline) + np.asarray(center, dtype=np.float64)
        return cls('circle', outline, filled=filled, thickness=thickness)

    @classmethod
    def arc(cls, center, radius: float, start: float, end: float,
            thickness: float = DEFAULT_THICKNESS) -> "Shape":
        """An open circular arc from angle `start` to `end` (radians)."""
        count = max(2, int(np.ceil(CIRCLE_VERTICES * abs(end - start) / (2.0 * np.pi))) + 1)
        theta = np.linspace(start, end, count)
        outline = np.stack([np.cos(theta), np.sin(theta)], axis=1) * radius + np.asarray(center, dtype=np.float64)
        return cls('arc', outline, thickness=thickness)

    @property
    def closed(self) -> bool:
        return self.kind in _CLOSED_KINDS

    def transformed(self, t: "Transform2D") -> "Shape":
        return replace(self, points=t.apply(self.points))

    def within_frame(self, margin: float = 0.0) -> bool:
        """True when every control point lies inside [margin, 1 - margin]^2."""
        return bool(np.all(self.points >= margin) and np.all(self.points <= 1.0 - margin))


@dataclass(frozen=True)
class Transform2D:
    """Invertible affine transform as a 3x3 homogeneous matrix."""
    matrix: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=np.float64)
        if matrix.shape != (3, 3):
            raise DimensionError('matrix', (3, 3), matrix.shape, context='Transform2D')
        if abs(np.linalg.det(matrix[:2, :2])) < 1e-12:
            raise GeometryError("transform matrix is singular")
        object.__setattr__(self, 'matrix', matrix)

    @classmethod
    def identity(cls) -> "Transform2D":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, dx: float, dy: float) -> "Transform2D":
        matrix = np.eye(3)
        matrix[:2, 2] = (dx, dy)
        return cls(matrix)

    @classmethod
    def rotation(cls, angle: float, center=(0.0, 0.0)) -> "Transform2D":
        c, s = np.cos(angle), np.sin(angle)
        linear = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls._about(linear, center)

    @classmethod
    def scaling(cls, sx: float, sy: Optional[float] = None, center=(0.0, 0.0)) -> "Transform2D":
        sy = sx if sy is None else sy
        return cls._about(np.diag([sx, sy, 1.0]), center)

    @classmethod
    def reflection(cls, angle: float, through=(0.0, 0.0)) -> "Transform2D":
        """Mirror across the line through `through` with direction `angle`."""
        c, s = np.cos(2.0 * angle), np.sin(2.0 * angle)
        linear = np.array([[c, s, 0.0], [s, -c, 0.0], [0.0, 0.0, 1.0]])
        return cls._about(linear, through)

    @classmethod
    def _about(cls, linear: np.ndarray, center) -> "Transform2D":
        cx, cy = center
        to_origin = cls.translation(-cx, -cy).matrix
        back = cls.translation(cx, cy).matrix
        return cls(back @ linear @ to_origin)

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.matrix[:2, :2]))

    def __matmul__(self, other: "Transform2D") -> "Transform2D":
        """Composition: (a @ b) applies b first, then a."""
        return Transform2D(self.matrix @ other.matrix)

    def inverse(self) -> "Transform2D":
        return Transform2D(np.linalg.inv(self.matrix))

    def apply(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        flat = points.reshape(-1, 2)
        out = flat @ self.matrix[:2, :2].T + self.matrix[:2, 2]
        return out.reshape(points.shape)


def apply_transform(points, t: Transform2D) -> np.ndarray:
    """Exact affine image of an [k, 2] point array."""
    return t.apply(points)


def signed_area(points) -> float:
    """Shoelace area; the sign encodes the vertex orientation."""
    p = np.asarray(points, dtype=np.float64)
    x, y = p[:, 0], p[:, 1]
    return float(0.5 * (np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def point_in_polygon(point, vertices) -> bool:
    """Even-odd containment test of one point against a closed polygon."""
    px, py = point
    v0 = np.asarray(vertices, dtype=np.float64)
    v1 = np.roll(v0, -1, axis=0)
    crosses = (v0[:, 1] > py) != (v1[:, 1] > py)
    with np.errstate(divide='ignore', invalid='ignore'):
        x_cross = v0[:, 0] + (py - v0[:, 1]) * (v1[:, 0] - v0[:, 0]) / (v1[:, 1] - v0[:, 1])
    return bool(np.count_nonzero(crosses & (x_cross > px)) % 2)


def _check_level(name: str, value: int, bounds: Tuple[int, int]) -> int:
    low, high = bounds
    if not low <= value <= high:
        raise RangeError(name, value, low, high)
    return int(value)


def new_frame(bg: int, size: int = FRAME_SIZE) -> Frame:
    """
    A blank frame filled with the background level.

    Raises:
        RangeError: If bg is outside [235, 255].
    """
    bg = _check_level('bg', bg, BG_RANGE)
    return Frame(np.full((size, size), bg, dtype=np.uint8), bg)


def _round(values: np.ndarray) -> np.ndarray:
    """Round half up to integer pixel indices."""
    return np.floor(values + 0.5).astype(np.int64)


def _stroke_offsets(thickness_px: int) -> np.ndarray:
    return np.arange(-((thickness_px - 1) // 2), thickness_px // 2 + 1)


def _segment_mask(mask: np.ndarray, p0: np.ndarray, p1: np.ndarray, thickness_px: int) -> None:
    """Marks an integer-stepped segment widened along its minor axis."""
    (x0, y0), (x1, y1) = p0, p1
    steps = int(max(abs(_round(np.array(x1)) - _round(np.array(x0))),
                    abs(_round(np.array(y1)) - _round(np.array(y0)))))
    t = np.linspace(0.0, 1.0, steps + 1) if steps else np.zeros(1)
    xs = _round(x0 + t * (x1 - x0))
    ys = _round(y0 + t * (y1 - y0))
    offsets = _stroke_offsets(thickness_px)
    if abs(x1 - x0) >= abs(y1 - y0):
        xs, ys = np.repeat(xs, len(offsets)), (ys[:, None] + offsets).reshape(-1)
    else:
        xs, ys = (xs[:, None] + offsets).reshape(-1), np.repeat(ys, len(offsets))
    size = mask.shape[0]
    keep = (xs >= 0) & (xs < size) & (ys >= 0) & (ys < size)
    mask[ys[keep], xs[keep]] = True


def _fill_mask(mask: np.ndarray, vertices: np.ndarray) -> None:
    """Scanline fill: a pixel center is inside when an odd number of edges cross its row to its right."""
    size = mask.shape[0]
    v0 = vertices
    v1 = np.roll(vertices, -1, axis=0)
    rows = np.arange(size, dtype=np.float64)[:, None]
    y0, y1 = v0[:, 1][None, :], v1[:, 1][None, :]
    active = ((y0 <= rows) & (rows < y1)) | ((y1 <= rows) & (rows < y0))
    denominator = np.where(y1 == y0, 1.0, y1 - y0)
    x_cross = v0[:, 0][None, :] + (rows - y0) * (v1[:, 0] - v0[:, 0])[None, :] / denominator
    x_cross = np.where(active, x_cross, -np.inf)
    columns = np.arange(size, dtype=np.float64)
    crossings = (x_cross[:, None, :] > columns[None, :, None]).sum(axis=2)
    mask |= (crossings % 2) == 1


def _disc_mask(mask: np.ndarray, center: np.ndarray, radius_px: float) -> None:
    size = mask.shape[0]
    ys, xs = np.ogrid[:size, :size]
    mask |= (xs - center[0]) ** 2 + (ys - center[1]) ** 2 <= radius_px ** 2


def shape_mask(shape: Shape, size: int = FRAME_SIZE) -> np.ndarray:
    """Boolean coverage of `shape` on a size x size grid."""
    mask = np.zeros((size, size), dtype=bool)
    points = shape.points * size
    thickness_px = max(1, int(np.floor(shape.thickness * size + 0.5)))

    if shape.kind == 'point':
        for p in points:
            _disc_mask(mask, p, shape.radius * size)
    elif shape.closed and shape.filled:
        _fill_mask(mask, points)
    else:
        path = np.vstack([points, points[:1]]) if shape.closed else points
        for p0, p1 in zip(path[:-1], path[1:]):
            _segment_mask(mask, p0, p1, thickness_px)
    return mask


def rasterize(frame: Frame, shape: Shape, fg: int) -> Frame:
    """
    Draws `shape` with the foreground level onto a copy of `frame`.

    Raises:
        RangeError: If fg is outside [0, 61].
        GeometryError: If the frame was already drawn with another fg level.
    """
    fg = _check_level('fg', fg, FG_RANGE)
    if frame.fg is not None and frame.fg != fg:
        raise GeometryError(f"frame already uses fg={frame.fg}, cannot draw with fg={fg}")
    out = frame.copy()
    out.pixels[shape_mask(shape, frame.size)] = fg
    out.fg = fg
    return out


def render(shapes: Iterable[Shape], bg: int, fg: int, size: int = FRAME_SIZE) -> Frame:
    """A fresh frame with every shape drawn in the same foreground level."""
    frame = new_frame(bg, size)
    fg = _check_level('fg', fg, FG_RANGE)
    mask = np.zeros((size, size), dtype=bool)
    for shape in shapes:
        mask |= shape_mask(shape, size)
    frame.pixels[mask] = fg
    frame.fg = fg
    return frame


def frames_equal(a: Frame, b: Frame) -> bool:
    """True iff every pixel is identical."""
    if a.pixels.shape != b.pixels.shape:
        raise DimensionError('frame', a.pixels.shape, b.pixels.shape, context='frames_equal')
    return bool(np.array_equal(a.pixels, b.pixels))


def write_pgm(pixels: np.ndarray, path: Path) -> Path:
    """Writes a binary (P5) PGM file."""
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    height, width = pixels.shape
    path = Path(path)
    with open(path, 'wb') as f:
        f.write(f"P5\n{width} {height}\n255\n".encode('ascii'))
        f.write(pixels.tobytes())
    return path


def write_png(pixels: np.ndarray, path: Path) -> Path:
    """Writes an 8-bit grayscale PNG."""
    path = Path(path)
    Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8)).save(path, format='PNG')
    return path


def read_image(path: Path) -> np.ndarray:
    """Reads a grayscale PNG or PGM into a uint8 array."""
    with Image.open(path) as image:
        return np.asarray(image.convert('L'), dtype=np.uint8).copy()


def segments_intersect(a0: Sequence[float], a1: Sequence[float], b0: Sequence[float], b1: Sequence[float]) -> bool:
    """Proper or touching intersection test between two segments."""
    def orient(p, q, r):
        return np.sign((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))

    a0, a1, b0, b1 = (np.asarray(p, dtype=np.float64) for p in (a0, a1, b0, b1))
    o1, o2 = orient(a0, a1, b0), orient(a0, a1, b1)
    o3, o4 = orient(b0, b1, a0), orient(b0, b1, a1)
    if o1 != o2 and o3 != o4:
        return True

    def on_segment(p, q, r):
        return min(p[0], r[0]) <= q[0] <= max(p[0], r[0]) and min(p[1], r[1]) <= q[1] <= max(p[1], r[1])

    return bool((o1 == 0 and on_segment(a0, b0, a1)) or (o2 == 0 and on_segment(a0, b1, a1))
                or (o3 == 0 and on_segment(b0, a0, b1)) or (o4 == 0 and on_segment(b0, a1, b1)))


def segment_distance(a0, a1, b0, b1) -> float:
    """Minimum distance between two segments (0 when they intersect)."""
    if segments_intersect(a0, a1, b0, b1):
        return 0.0

    def point_distance(p, s0, s1):
        p, s0, s1 = (np.asarray(v, dtype=np.float64) for v in (p, s0, s1))
        d = s1 - s0
        t = np.clip(np.dot(p - s0, d) / max(np.dot(d, d), 1e-18), 0.0, 1.0)
        return float(np.linalg.norm(p - (s0 + t * d)))

    return min(point_distance(a0, b0, b1), point_distance(a1, b0, b1),
               point_distance(b0, a0, a1), point_distance(b1, a0, a1))
