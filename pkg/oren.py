"""
The oddity relation network.

Every frame is embedded by the shared vision model, every ordered pair of
embeddings goes through the relation MLP g, the six relations of each leading
frame are summed and scored by f, and a softmax over the six scores gives the
oddity probabilities.
"""
from typing import Optional, Sequence

import numpy as np

from autograd import Tape, Tensor, backward
from layers import Dense, Module, activation, dropout_forward
from losses import softmax, softmax_cross_entropy
from optim import Adam
from riddles import FRAMES_PER_SAMPLE
from vision import DEFAULT_LAYOUT, INPUT_SIZE, VisionModel, prepare_frames

RELATION_LAYERS = 4
SCORE_HIDDEN_LAYERS = 2


def make_pairs(embeddings: Tensor) -> Tensor:
    """
    Ordered concatenation of every embedding with every embedding.

    Args:
        embeddings: [..., 6, D].

    Returns:
        [..., 6, 6, 2D] where [..., k, i, :] = concat(e_k, e_i), k = i included.
    """
    *lead, count, dim = embeddings.shape
    full = tuple(lead) + (count, count, dim)
    left = embeddings.reshape(*lead, count, 1, dim).broadcast_to(full)
    right = embeddings.reshape(*lead, 1, count, dim).broadcast_to(full)
    return Tensor.concat([left, right], axis=-1)


class OReN(Module):
    """Vision model, relation MLP g (4 x N, ReLU, dropout) and score MLP f (2 x N ReLU + linear)."""

    def __init__(self, width: int, rng: np.random.Generator, input_size: int = INPUT_SIZE, channels: int = 32,
                 layout: Sequence[str] = DEFAULT_LAYOUT, dropout_rate: float = 0.3, dtype=np.float32):
        self.width = width
        self.dropout_rate = dropout_rate
        self.vision = VisionModel(rng, input_size, channels, layout, dropout_rate, dtype)
        d_pair = 2 * self.vision.embedding_dim
        self.g = [Dense(d_pair if i == 0 else width, width, rng, dtype) for i in range(RELATION_LAYERS)]
        self.f = [Dense(width, width, rng, dtype) for _ in range(SCORE_HIDDEN_LAYERS)]
        self.f.append(Dense(width, 1, rng, dtype))

    @property
    def dtype(self):
        return self.g[0].weight.dtype

    def relation(self, pairs: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        x = pairs
        for layer in self.g:
            x = dropout_forward(activation(layer(x), 'relu'), self.dropout_rate, self.training, rng)
        return x

    def score(self, summed: Tensor) -> Tensor:
        x = summed
        for layer in self.f[:-1]:
            x = activation(layer(x), 'relu')
        return self.f[-1](x)

    def scores_from_embeddings(self, embeddings: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        """[batch, 6, D] embeddings -> [batch, 6] scores q."""
        return score_frames(self, make_pairs(embeddings), rng)

    def __call__(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        """Network input [batch, 6, s, s, 1] -> scores [batch, 6]."""
        batch, count, side = x.shape[0], x.shape[1], x.shape[2]
        embeddings = self.vision(x.reshape(batch * count, side, side, 1), rng)
        return self.scores_from_embeddings(embeddings.reshape(batch, count, self.vision.embedding_dim), rng)

    def prepare(self, frames: np.ndarray) -> Tensor:
        return Tensor(prepare_frames(frames, self.vision.input_size, self.dtype))

    def loss(self, frames: np.ndarray, labels, rng: Optional[np.random.Generator] = None) -> Tensor:
        return softmax_cross_entropy(self(self.prepare(frames), rng), labels)

    def train_batch(self, frames: np.ndarray, labels, optimizer: Adam, rng: np.random.Generator) -> float:
        """One Adam update on the mean cross-entropy; dropout and batch statistics active."""
        return oren_train_step(self, frames, labels, optimizer, rng)

    def predict(self, frames: np.ndarray, indices: Optional[np.ndarray] = None, seed: int = 0) -> np.ndarray:
        """Predicted oddity position per sample (inference mode)."""
        return np.argmax(oren_forward(self, frames), axis=-1)


def score_frames(model: OReN, pairs: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
    """
    Scores from precomputed pairs.

    Args:
        pairs: [batch, 6, 6, 2D] grouped by leading frame.

    Returns:
        q [batch, 6]: f(sum_i g(pair[k, i])) for each k.
    """
    batch = pairs.shape[0]
    relations = model.relation(pairs.reshape(batch * FRAMES_PER_SAMPLE * FRAMES_PER_SAMPLE, -1), rng)
    summed = relations.reshape(batch, FRAMES_PER_SAMPLE, FRAMES_PER_SAMPLE, model.width).sum(axis=2)
    return model.score(summed.reshape(batch * FRAMES_PER_SAMPLE, model.width)).reshape(batch, FRAMES_PER_SAMPLE)


def oren_forward(model: OReN, frames: np.ndarray) -> np.ndarray:
    """
    Oddity probabilities in inference mode.

    Args:
        frames: Raw frames [6, h, w] or [batch, 6, h, w].

    Returns:
        softmax(q) with the same leading shape, [6] or [batch, 6].
    """
    single = np.ndim(frames) == 3
    batch = np.asarray(frames)[None] if single else np.asarray(frames)
    was_training = model.training
    model.eval()
    try:
        scores = model(model.prepare(batch)).data
    finally:
        model.train(was_training)
    probabilities = softmax(scores.astype(np.float64), axis=-1)
    return probabilities[0] if single else probabilities


def oren_train_step(model: OReN, frames: np.ndarray, labels, optimizer: Adam, rng: np.random.Generator) -> float:
    """Forward, backward and one Adam update; returns the batch loss."""
    model.train()
    optimizer.zero_grad()
    with Tape() as tape:
        loss = model.loss(frames, labels, rng)
    backward(loss, tape)
    optimizer.step()
    return loss.item()
