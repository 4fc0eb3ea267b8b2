"""Unit tests for saccade streams and the saccadic network."""
from unittest.mock import patch

import numpy as np
import pytest

from errors import DimensionError
from optim import Adam
from recurrent import RECURRENT_KINDS
from riddles import RngStream
from saccadic import (S_I, STREAM_STEPS, SaccadeStream, SaccadicNet, build_saccade_stream, evaluation_stream,
                      integrate_decision, run_inference, saccadic_forward, saccadic_train_step, stream_targets)
from vision import TINY_LAYOUT


def _tiny_net(kind='ssnu', seed=0, dtype=np.float64):
    return SaccadicNet(kind, 5, np.random.default_rng(seed), input_size=16, channels=2, layout=TINY_LAYOUT,
                       dtype=dtype)


def _frames(rng, batch=None):
    shape = (6, 16, 16) if batch is None else (batch, 6, 16, 16)
    return rng.integers(0, 256, size=shape, dtype=np.uint8)


def _fixed_stream():
    return SaccadeStream(np.tile(np.arange(6), 6))


class TestSaccadeStream:
    """Test cases for stream construction."""

    def test_built_stream_is_six_permutations(self):
        """Test that every block of six steps visits every frame once."""
        stream = build_saccade_stream(RngStream(0, 1))
        blocks = stream.indices.reshape(6, 6)
        assert all(sorted(block.tolist()) == list(range(6)) for block in blocks)
        assert len(stream.evaluation) == 18

    def test_each_frame_three_times_in_evaluation(self):
        """Test that the evaluation window shows every frame three times."""
        stream = build_saccade_stream(RngStream(4))
        assert np.bincount(stream.evaluation, minlength=6).tolist() == [3] * 6

    def test_wrong_length(self):
        """Test that a 35-step stream raises DimensionError."""
        with pytest.raises(DimensionError):
            SaccadeStream(np.zeros(35, dtype=int))

    def test_repeated_frame_in_block(self):
        """Test that a block that is not a permutation raises DimensionError."""
        indices = np.tile(np.arange(6), 6)
        indices[3] = 0
        with pytest.raises(DimensionError):
            SaccadeStream(indices)

    def test_evaluation_stream_replays(self):
        """Test that evaluation streams depend only on (seed, index)."""
        assert np.array_equal(evaluation_stream(3, 10).indices, evaluation_stream(3, 10).indices)
        assert not np.array_equal(evaluation_stream(3, 10).indices, evaluation_stream(3, 11).indices)

    def test_targets(self):
        """Test that targets mark the steps showing the labeled frame."""
        targets = _fixed_stream().targets(2)
        assert targets.sum() == 6
        assert np.flatnonzero(targets).tolist() == [2, 8, 14, 20, 26, 32]
        np.testing.assert_array_equal(stream_targets(_fixed_stream().indices[None], [2])[0], targets)


class TestIntegrateDecision:
    """Test cases for the mean-belief decision rule."""

    def test_highest_mean_wins(self):
        """Test that the frame with the highest evaluation-window mean is chosen."""
        stream = _fixed_stream()
        p = np.full(STREAM_STEPS, 0.1)
        p[S_I:][stream.evaluation == 3] = 0.9
        assert integrate_decision(p, stream) == 3

    def test_initialization_window_ignored(self):
        """Test that beliefs during the first 18 steps have no effect."""
        stream = _fixed_stream()
        p = np.full(STREAM_STEPS, 0.2)
        p[:S_I][stream.indices[:S_I] == 5] = 1.0
        p[S_I:][stream.evaluation == 1] = 0.3
        assert integrate_decision(p, stream) == 1

    def test_mean_not_peak(self):
        """Test that one spike loses against a consistently higher mean."""
        stream = _fixed_stream()
        p = np.zeros(STREAM_STEPS)
        window = p[S_I:]
        window[np.flatnonzero(stream.evaluation == 0)[0]] = 0.9
        window[stream.evaluation == 4] = 0.5
        assert integrate_decision(p, stream) == 4

    def test_ties_go_to_lowest_index(self):
        """Test that equal means pick the lowest frame."""
        assert integrate_decision(np.full(STREAM_STEPS, 0.5), _fixed_stream()) == 0

    def test_batched(self):
        """Test the batched form returns one decision per row."""
        streams = np.stack([_fixed_stream().indices] * 2)
        p = np.zeros((2, STREAM_STEPS))
        p[0, S_I:][streams[0, S_I:] == 2] = 1.0
        p[1, S_I:][streams[1, S_I:] == 5] = 1.0
        assert integrate_decision(p, streams).tolist() == [2, 5]


class TestSaccadicNet:
    """Test cases for the recurrent oddity detector."""

    def test_input_width(self):
        """Test that the recurrent input is the embedding plus a six-way one-hot."""
        net = _tiny_net()
        assert net.d_in == net.vision.embedding_dim + 6
        assert len(net.layers) == 3

    @pytest.mark.parametrize('kind', RECURRENT_KINDS)
    def test_forward_shapes(self, rng, kind):
        """Test belief and potential shapes for every recurrent kind."""
        net = _tiny_net(kind)
        streams = np.stack([build_saccade_stream(rng).indices for _ in range(2)])
        beliefs, potentials = run_inference(net, _frames(rng, 2), streams)
        assert beliefs.shape == (2, 36)
        assert np.all((beliefs > 0.0) & (beliefs < 1.0))
        assert [v.shape for v in potentials] == [(2, 36, 5)] * 3

    def test_stream_shape_checked(self, rng):
        """Test that streams of the wrong batch raise DimensionError."""
        net = _tiny_net()
        with pytest.raises(DimensionError):
            run_inference(net, _frames(rng, 2), _fixed_stream().indices[None])

    def test_single_trace(self, rng):
        """Test the one-riddle trace and its decision."""
        trace = saccadic_forward(_tiny_net(), _frames(rng), _fixed_stream())
        assert trace.p.shape == (36,)
        assert len(trace.potentials) == 3
        assert trace.potentials[2].shape == (36, 5)
        assert 0 <= trace.decision < 6

    def test_predict_replays_streams(self, rng):
        """Test that predictions are reproducible for the same seed and indices."""
        net = _tiny_net()
        frames = _frames(rng, 3)
        indices = np.array([4, 9, 2])
        assert net.predict(frames, indices, seed=1).tolist() == net.predict(frames, indices, seed=1).tolist()

    def test_masked_steps_do_not_affect_loss(self, rng):
        """Test that steps hidden by the mask do not contribute to the loss."""
        net = _tiny_net().eval()
        frames = _frames(rng, 1)
        stream = _fixed_stream().indices[None]
        mask = np.ones(36)
        mask[:2] = 0.0
        mask[stream[0] == 0] = 0.0
        mask[stream[0] == 1] = 0.0
        a = net.loss(frames, [0], stream, mask=mask).item()
        b = net.loss(frames, [1], stream, mask=mask).item()
        assert a == pytest.approx(b)

    @pytest.mark.parametrize('kind', ['snn', 'ssnu_r', 'lstm'])
    def test_train_step(self, rng, kind):
        """Test that a training step returns a finite loss and updates the weights."""
        net = _tiny_net(kind, dtype=np.float32)
        optimizer = Adam(net.trainable_parameters(), learning_rate=1e-3)
        before = net.readout.bias.data.copy()
        streams = np.stack([build_saccade_stream(rng).indices for _ in range(2)])
        loss = saccadic_train_step(net, _frames(rng, 2), [1, 4], streams, optimizer, rng)
        assert np.isfinite(loss)
        assert not np.array_equal(net.readout.bias.data, before)

    def test_train_batch_draws_streams_from_rng(self, rng):
        """Test that training streams come from the training generator and change between passes."""
        net = _tiny_net()
        optimizer = Adam(net.trainable_parameters(), learning_rate=1e-3)
        frames = _frames(rng, 2)
        with patch('saccadic.saccadic_train_step', return_value=0.5) as step:
            assert net.train_batch(frames, [1, 4], optimizer, np.random.default_rng(3)) == 0.5
            net.train_batch(frames, [1, 4], optimizer, np.random.default_rng(4))
        first, second = (call.args[3] for call in step.call_args_list)
        replay = np.random.default_rng(3)
        np.testing.assert_array_equal(first, np.stack([build_saccade_stream(replay).indices for _ in range(2)]))
        assert not np.array_equal(first, second)
