"""
The convolutional vision model shared in structure by both reasoning networks,
and the frame preprocessing in front of it.
"""
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from autograd import Tensor
from errors import ConfigurationError, DimensionError
from geometry import FRAME_SIZE
from layers import KERNEL_SIZE, BatchNorm, Conv2D, Module, activation, dropout_forward, maxpool_forward

INPUT_SIZE = 80

# Five conv blocks, dropout after blocks 1, 3 and 5, pooling after blocks 2 and 4.
DEFAULT_LAYOUT = ('conv', 'dropout', 'conv', 'pool', 'conv', 'dropout', 'conv', 'pool', 'conv', 'dropout')

# Shrunk stack for 16x16 inputs in gradient checks and fast tests.
TINY_LAYOUT = ('conv', 'dropout', 'pool', 'conv')

BLOCK_KINDS = ('conv', 'pool', 'dropout')


def resize_frames(frames: np.ndarray, size: int = INPUT_SIZE) -> np.ndarray:
    """Bilinear rescale of uint8 frames [..., h, w] to [..., size, size]."""
    frames = np.asarray(frames, dtype=np.uint8)
    if frames.shape[-2:] == (size, size):
        return frames
    flat = frames.reshape(-1, *frames.shape[-2:])
    out = np.stack([
        np.asarray(Image.fromarray(frame).resize((size, size), Image.Resampling.BILINEAR), dtype=np.uint8)
        for frame in flat
    ])
    return out.reshape(*frames.shape[:-2], size, size)


def to_input(frames: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Maps uint8 pixels to [0, 1] and appends the channel axis."""
    return (np.asarray(frames, dtype=dtype) / 255.0)[..., None]


def prepare_frames(frames: np.ndarray, input_size: int = INPUT_SIZE, dtype=np.float32) -> np.ndarray:
    """
    Raw frames [..., h, w] -> network input [..., input_size, input_size, 1].

    Raises:
        DimensionError: Unless frames are FRAME_SIZE or input_size square.
    """
    frames = np.asarray(frames)
    side = frames.shape[-2:]
    if side not in ((FRAME_SIZE, FRAME_SIZE), (input_size, input_size)):
        raise DimensionError('frame', f"{FRAME_SIZE}x{FRAME_SIZE}", side, context='prepare_frames')
    if frames.dtype != np.uint8:
        frames = np.clip(np.rint(frames), 0, 255).astype(np.uint8)
    return to_input(resize_frames(frames, input_size), dtype)


class VisionModel(Module):
    """
    Conv stack mapping a [batch, s, s, 1] image to a flat embedding.

    Each conv block is a 5x5 valid convolution, batch norm and ReLU. With the
    default layout an 80x80 input yields a 3200-dimensional embedding.
    """

    def __init__(self, rng: np.random.Generator, input_size: int = INPUT_SIZE, channels: int = 32,
                 layout: Sequence[str] = DEFAULT_LAYOUT, dropout_rate: float = 0.3, dtype=np.float32):
        self.input_size = input_size
        self.channels = channels
        self.layout = tuple(layout)
        self.dropout_rate = dropout_rate
        self.convs = []
        self.norms = []

        c_in, side = 1, input_size
        for block in self.layout:
            if block == 'conv':
                self.convs.append(Conv2D(c_in, channels, rng, dtype))
                self.norms.append(BatchNorm(channels, dtype))
                c_in, side = channels, side - (KERNEL_SIZE - 1)
            elif block == 'pool':
                side = (side + 1) // 2
            elif block not in BLOCK_KINDS:
                raise ConfigurationError(f"unknown vision block {block!r}")
            if side < 1:
                raise ConfigurationError(f"vision layout {self.layout} collapses a {input_size}px input")
        self.embedding_dim = side * side * c_in

    def __call__(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        if x.ndim != 4 or x.shape[1:] != (self.input_size, self.input_size, 1):
            raise DimensionError('input', (self.input_size, self.input_size, 1), x.shape[1:], context='vision')
        k = 0
        for block in self.layout:
            if block == 'conv':
                x = activation(self.norms[k](self.convs[k](x)), 'relu')
                k += 1
            elif block == 'pool':
                x = maxpool_forward(x)
            else:
                x = dropout_forward(x, self.dropout_rate, self.training, rng)
        return x.reshape(x.shape[0], -1)


def vision_embed(model: VisionModel, frames: np.ndarray, rng: Optional[np.random.Generator] = None) -> Tensor:
    """
    Embeds frames with one shared set of weights.

    Args:
        model: The vision model.
        frames: Raw uint8 frames [..., 6, h, w] (100x100 or already at the input size).
        rng: Dropout generator (training mode only).

    Returns:
        Embeddings [..., 6, D].
    """
    x = prepare_frames(frames, model.input_size, model.convs[0].kernel.dtype)
    lead = x.shape[:-3]
    flat = Tensor(x.reshape(-1, model.input_size, model.input_size, 1))
    return model(flat, rng).reshape(*lead, model.embedding_dim)
