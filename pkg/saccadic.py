"""
The saccadic network: frames are presented one at a time along a synthetic
saccade stream, three recurrent layers accumulate evidence, and a sigmoid
readout states at every step whether the frame in view is the oddity.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from autograd import Tape, Tensor, backward
from errors import DimensionError
from layers import Dense, Module, activation
from losses import masked_binary_cross_entropy
from optim import Adam
from recurrent import SurrogateSpec, make_recurrent_layer
from riddles import FRAMES_PER_SAMPLE, RngStream
from vision import DEFAULT_LAYOUT, INPUT_SIZE, VisionModel, prepare_frames

# Initialization and evaluation saccades.
S_I = 18
S_E = 18
STREAM_STEPS = S_I + S_E
RECURRENT_DEPTH = 3


@dataclass(frozen=True)
class SaccadeStream:
    """36 frame indices made of six consecutive permutations of 0..5."""
    indices: np.ndarray

    def __post_init__(self):
        indices = np.asarray(self.indices, dtype=np.int64)
        if indices.shape != (STREAM_STEPS,):
            raise DimensionError('steps', STREAM_STEPS, indices.shape, context='SaccadeStream')
        blocks = np.sort(indices.reshape(-1, FRAMES_PER_SAMPLE), axis=1)
        if not np.array_equal(blocks, np.broadcast_to(np.arange(FRAMES_PER_SAMPLE), blocks.shape)):
            raise DimensionError('blocks', 'permutations of 0..5', indices.tolist(), context='SaccadeStream')
        object.__setattr__(self, 'indices', indices)

    @property
    def evaluation(self) -> np.ndarray:
        return self.indices[S_I:]

    def targets(self, label: int) -> np.ndarray:
        """1.0 at every step that shows the oddity."""
        return (self.indices == label).astype(np.float64)


def build_saccade_stream(rng) -> SaccadeStream:
    """Six independent uniform permutations of the six frames, concatenated."""
    return SaccadeStream(np.concatenate([rng.permutation(FRAMES_PER_SAMPLE) for _ in range(STREAM_STEPS // FRAMES_PER_SAMPLE)]))


@dataclass
class BeliefTrace:
    """
    Per-step oddity beliefs of one riddle.

    Attributes:
        p: [36] sigmoid outputs.
        potentials: One [36, N] membrane-potential record per recurrent layer.
        stream: The stream the riddle was viewed along.
    """
    p: np.ndarray
    stream: SaccadeStream
    potentials: List[np.ndarray] = field(default_factory=list)

    @property
    def decision(self) -> int:
        return integrate_decision(self.p, self.stream)


class SaccadicNet(Module):
    """
    Vision model, three recurrent layers of width N and a single sigmoid readout.

    The recurrent input is the frame embedding concatenated with the one-hot eye
    position (3206 values with the default vision model).
    """

    def __init__(self, kind: str, width: int, rng: np.random.Generator, input_size: int = INPUT_SIZE,
                 channels: int = 32, layout: Sequence[str] = DEFAULT_LAYOUT, dropout_rate: float = 0.3,
                 leak: float = 0.8, bias_init: float = -1.0, surrogate: Optional[SurrogateSpec] = None,
                 dtype=np.float32):
        self.kind = kind
        self.width = width
        self.vision = VisionModel(rng, input_size, channels, layout, dropout_rate, dtype)
        self.d_in = self.vision.embedding_dim + FRAMES_PER_SAMPLE
        self.layers = [
            make_recurrent_layer(kind, self.d_in if i == 0 else width, width, rng, leak=leak,
                                 bias_init=bias_init, surrogate=surrogate, dtype=dtype)
            for i in range(RECURRENT_DEPTH)
        ]
        self.readout = Dense(width, 1, rng, dtype)

    @property
    def dtype(self):
        return self.readout.weight.dtype

    def prepare(self, frames: np.ndarray) -> Tensor:
        return Tensor(prepare_frames(frames, self.vision.input_size, self.dtype))

    def __call__(self, x: Tensor, streams: np.ndarray,
                 rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, List[np.ndarray]]:
        """
        Runs whole streams.

        Args:
            x: Network input [batch, 6, s, s, 1].
            streams: Frame indices [batch, 36].
            rng: Dropout generator (training mode only).

        Returns:
            (beliefs [batch, 36], one [batch, 36, N] potential array per layer)
        """
        batch, count, side = x.shape[0], x.shape[1], x.shape[2]
        streams = np.asarray(streams, dtype=np.int64)
        if streams.shape != (batch, STREAM_STEPS):
            raise DimensionError('streams', (batch, STREAM_STEPS), streams.shape, context='SaccadicNet')
        # Frames are embedded once; each step gathers the embedding in view.
        embeddings = self.vision(x.reshape(batch * count, side, side, 1), rng)
        embeddings = embeddings.reshape(batch, count, self.vision.embedding_dim)
        rows = np.repeat(np.arange(batch)[:, None], STREAM_STEPS, axis=1)
        viewed = embeddings[rows, streams]
        eye = Tensor(np.eye(FRAMES_PER_SAMPLE, dtype=self.dtype)[streams])
        h = Tensor.concat([viewed, eye], axis=2)
        potentials = []
        for layer in self.layers:
            h, v = layer.run(h)
            potentials.append(v)
        beliefs = activation(self.readout(h), 'sigmoid').reshape(batch, STREAM_STEPS)
        return beliefs, potentials

    def loss(self, frames: np.ndarray, labels, streams: np.ndarray, rng: Optional[np.random.Generator] = None,
             mask: Optional[np.ndarray] = None) -> Tensor:
        beliefs, _ = self(self.prepare(frames), streams, rng)
        return masked_binary_cross_entropy(beliefs, stream_targets(streams, labels), mask)

    def train_batch(self, frames: np.ndarray, labels, optimizer: Adam, rng: np.random.Generator) -> float:
        """
        One Adam update on the masked BCE.

        Every sample is viewed along a stream drawn from `rng`, so repeated passes
        see new orders; only evaluation replays streams from dataset indices.
        """
        streams = np.stack([build_saccade_stream(rng).indices for _ in range(len(frames))])
        return saccadic_train_step(self, frames, labels, streams, optimizer, rng)

    def predict(self, frames: np.ndarray, indices: np.ndarray, seed: int = 0) -> np.ndarray:
        """Decisions with streams replayed from (seed, dataset index)."""
        streams = np.stack([evaluation_stream(seed, int(i)).indices for i in indices])
        beliefs, _ = run_inference(self, frames, streams)
        return integrate_decision(beliefs, streams)


def evaluation_stream(seed: int, index: int) -> SaccadeStream:
    """The reproducible test-time stream of one dataset sample."""
    return build_saccade_stream(RngStream(seed, index))


def stream_targets(streams: np.ndarray, labels) -> np.ndarray:
    """Per-step binary targets [batch, 36]: 1 where the stream shows the labeled frame."""
    streams = np.asarray(streams)
    return (streams == np.asarray(labels).reshape(-1, 1)).astype(np.float64)


def run_inference(net: SaccadicNet, frames: np.ndarray, streams: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Beliefs [batch, 36] and per-layer potentials in inference mode, without recording."""
    was_training = net.training
    net.eval()
    try:
        beliefs, potentials = net(net.prepare(frames), streams)
    finally:
        net.train(was_training)
    return beliefs.data, potentials


def saccadic_forward(net: SaccadicNet, frames: np.ndarray, stream: SaccadeStream) -> BeliefTrace:
    """
    Views one riddle along `stream` from freshly reset states.

    Args:
        frames: Raw frames [6, h, w].
    """
    beliefs, potentials = run_inference(net, np.asarray(frames)[None], stream.indices[None])
    return BeliefTrace(p=beliefs[0], stream=stream, potentials=[v[0] for v in potentials])


def integrate_decision(trace, stream) -> np.ndarray:
    """
    Frame with the highest mean belief over the evaluation window.

    Each frame appears three times in the window; ties go to the lowest index.

    Args:
        trace: Beliefs [36] or [batch, 36].
        stream: SaccadeStream or indices [36] / [batch, 36].

    Returns:
        The decision as an int for a single trace, else an array [batch].
    """
    indices = stream.indices if isinstance(stream, SaccadeStream) else np.asarray(stream)
    p = np.asarray(trace, dtype=np.float64)
    single = p.ndim == 1
    p, indices = np.atleast_2d(p)[:, S_I:], np.atleast_2d(indices)[:, S_I:]
    onehot = indices[..., None] == np.arange(FRAMES_PER_SAMPLE)
    scores = (p[..., None] * onehot).sum(axis=1) / onehot.sum(axis=1)
    decisions = np.argmax(scores, axis=1)
    return int(decisions[0]) if single else decisions


def saccadic_train_step(net: SaccadicNet, frames: np.ndarray, labels, streams: np.ndarray, optimizer: Adam,
                        rng: np.random.Generator, mask: Optional[np.ndarray] = None) -> float:
    """Forward over the streams, backpropagation through time and one Adam update."""
    net.train()
    optimizer.zero_grad()
    with Tape() as tape:
        loss = net.loss(frames, labels, streams, rng, mask)
    backward(loss, tape)
    optimizer.step()
    return loss.item()