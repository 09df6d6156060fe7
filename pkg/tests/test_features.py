"""Tests for the backbone, spatial RNN, and hypercolumn readout.

Oracles: hand-derived shape arithmetic, a scalar bilinear interpolation
loop, a single-step GRU recurrence computed with numpy, and symmetry
arguments (constant inputs, horizontal flips).
"""

from __future__ import annotations

import numpy as np
import pytest
import torch

from photoadjust.features import (
    Backbone,
    BackboneConfig,
    DirectionalGRU,
    FeatureExtractor,
    HypercolumnSqueeze,
    SpatialRNN,
    bilinear_readout,
    map_coordinates,
)


class TestBackboneConfig:
    def test_toy_profile_defaults(self):
        cfg = BackboneConfig.toy()
        assert cfg.stem_channels == 8
        assert cfg.block_channels == (16, 32, 64)
        assert cfg.rnn_hidden == 16
        assert cfg.rnn_channels == 32
        assert cfg.context_dim == 64

    def test_full_profile_defaults(self):
        cfg = BackboneConfig.full()
        assert cfg.stem_channels == 64
        assert cfg.block_channels == (256, 512, 1024)
        assert cfg.rnn_hidden == 256
        assert cfg.rnn_channels == 1024
        assert cfg.context_dim == 512

    def test_validation(self):
        with pytest.raises(ValueError):
            BackboneConfig(block_channels=[])
        with pytest.raises(ValueError):
            BackboneConfig(context_dim=0)


class TestBackboneShapes:
    def test_toy_shapes_64(self):
        """Toy profile on 64x64: stem at full resolution, each block halves."""
        torch.manual_seed(0)
        net = Backbone(BackboneConfig.toy())
        maps = net(torch.randn(2, 3, 64, 64))
        assert maps.first_layer.shape == (2, 8, 64, 64)
        shapes = [tuple(m.shape) for m in maps.blocks]
        assert shapes == [(2, 16, 32, 32), (2, 32, 16, 16), (2, 64, 8, 8)]

    def test_full_shapes_64(self):
        """Full profile: 7x7/2 stem + pool, then strides [1, 2, 2]."""
        torch.manual_seed(0)
        net = Backbone(BackboneConfig.full())
        net.eval()
        with torch.no_grad():
            maps = net(torch.randn(1, 3, 64, 64))
        assert maps.first_layer.shape == (1, 64, 32, 32)
        shapes = [tuple(m.shape) for m in maps.blocks]
        assert shapes == [(1, 256, 16, 16), (1, 512, 8, 8), (1, 1024, 4, 4)]

    def test_constant_input_stays_constant(self):
        """Replicate padding: a constant image yields constant feature maps,
        so border pixels see the same statistics as interior pixels."""
        torch.manual_seed(1)
        net = Backbone(BackboneConfig.toy())
        x = torch.full((1, 3, 32, 32), 0.37)
        with torch.no_grad():
            maps = net(x)
        for m in [maps.first_layer] + maps.blocks:
            flat = m.reshape(m.shape[1], -1)
            spread = (flat.max(dim=1).values - flat.min(dim=1).values).abs().max()
            assert float(spread) < 1e-6


class TestDirectionalGRU:
    def test_single_step_matches_numpy_recurrence(self):
        """One sweep step equals the gated update computed by hand."""
        torch.manual_seed(2)
        cell = DirectionalGRU(in_channels=3, hidden=4).double()
        rng = np.random.default_rng(42)
        steps = [torch.tensor(rng.normal(size=(5, 3))) for _ in range(3)]
        out = cell(steps)

        w_in = cell.w_in.detach().numpy()
        u_gates = cell.u_gates.detach().numpy()
        u_cand = cell.u_cand.detach().numpy()
        bias = cell.bias.detach().numpy()
        scale = cell.norm_scale.detach().numpy()
        shift = cell.norm_shift.detach().numpy()

        def normalize(pre):
            mean = pre.mean(axis=0, keepdims=True)
            var = pre.var(axis=0, keepdims=True)
            return (pre - mean) / np.sqrt(var + 1e-5) * scale + shift

        def sigmoid(z):
            return 1.0 / (1.0 + np.exp(-z))

        h = np.zeros((5, 4))
        for t, x in enumerate(steps):
            pre = normalize(x.numpy() @ w_in) + bias
            wu, wr, wn = pre[:, :4], pre[:, 4:8], pre[:, 8:]
            gates = h @ u_gates
            u = sigmoid(wu + gates[:, :4])
            r = sigmoid(wr + gates[:, 4:])
            h = (1.0 - u) * h + u * np.tanh(wn + (r * h) @ u_cand)
            np.testing.assert_allclose(out[t].detach().numpy(), h, atol=1e-12)

    def test_normalization_uses_current_batch_only(self):
        """No running statistics: the same input always gives the same
        output, and statistics are per-step over the joint axis."""
        torch.manual_seed(3)
        cell = DirectionalGRU(3, 4).double()
        rng = np.random.default_rng(42)
        steps = [torch.tensor(rng.normal(size=(6, 3))) for _ in range(2)]
        a = [o.detach().numpy() for o in cell(steps)]
        b = [o.detach().numpy() for o in cell(steps)]
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)


class TestSpatialRNN:
    def _swap_direction_weights(self, rnn: SpatialRNN, d1: str, d2: str) -> None:
        """Swap the cell weights for two sweep directions, and the fuse
        conv's matching input-channel blocks so slot contents stay aligned."""
        with torch.no_grad():
            for name, p in rnn.cells[d1].named_parameters():
                other = dict(rnn.cells[d2].named_parameters())[name]
                tmp = p.clone()
                p.copy_(other)
                other.copy_(tmp)
            h = rnn.cells[d1].hidden
            i1 = rnn.DIRECTIONS.index(d1)
            i2 = rnn.DIRECTIONS.index(d2)
            w = rnn.fuse.weight
            b1 = w[:, i1 * h : (i1 + 1) * h].clone()
            b2 = w[:, i2 * h : (i2 + 1) * h].clone()
            w[:, i1 * h : (i1 + 1) * h] = b2
            w[:, i2 * h : (i2 + 1) * h] = b1

    def test_output_shape(self):
        torch.manual_seed(4)
        rnn = SpatialRNN(in_channels=6, hidden=5, out_channels=7)
        out = rnn(torch.randn(2, 6, 9, 11))
        assert out.shape == (2, 7, 9, 11)

    def test_horizontal_flip_equivariance_with_swapped_cells(self):
        """Flipping the input left-right and swapping the lr/rl cell weights
        flips the output left-right (the vertical sweeps are unaffected
        because their per-step statistics are flip-invariant)."""
        torch.manual_seed(5)
        rnn = SpatialRNN(in_channels=4, hidden=3, out_channels=6).double()
        x = torch.randn(2, 4, 5, 8, dtype=torch.float64)
        base = rnn(x)
        self._swap_direction_weights(rnn, "lr", "rl")
        flipped = rnn(torch.flip(x, dims=[3]))
        np.testing.assert_allclose(
            torch.flip(flipped, dims=[3]).detach().numpy(), base.detach().numpy(), atol=1e-10
        )

    def test_vertical_flip_equivariance_with_swapped_cells(self):
        torch.manual_seed(6)
        rnn = SpatialRNN(in_channels=4, hidden=3, out_channels=6).double()
        x = torch.randn(1, 4, 7, 6, dtype=torch.float64)
        base = rnn(x)
        self._swap_direction_weights(rnn, "tb", "bt")
        flipped = rnn(torch.flip(x, dims=[2]))
        np.testing.assert_allclose(
            torch.flip(flipped, dims=[2]).detach().numpy(), base.detach().numpy(), atol=1e-10
        )

    def test_information_propagates_across_full_width(self):
        """A disturbance in one corner reaches the opposite corner, which no
        finite stack of 3x3 convolutions of this depth could do."""
        torch.manual_seed(7)
        rnn = SpatialRNN(in_channels=2, hidden=4, out_channels=4).double()
        x = torch.zeros(1, 2, 6, 24, dtype=torch.float64)
        base = rnn(x)
        x2 = x.clone()
        x2[0, :, 0, 0] = 5.0
        moved = rnn(x2)
        corner_delta = (moved - base)[0, :, 5, 23].abs().max()
        assert float(corner_delta) > 1e-8


class TestMapCoordinates:
    def test_pixel_center_convention(self):
        """map = (pixel + 0.5) * scale - 0.5; image center maps to map center."""
        coords = torch.tensor([[[0.0, 0.0], [63.0, 63.0], [31.5, 31.5]]], dtype=torch.float64)
        mc = map_coordinates(coords, (8, 8), (64, 64))
        np.testing.assert_allclose(mc[0, 0].numpy(), [-0.4375, -0.4375], atol=1e-12)
        np.testing.assert_allclose(mc[0, 1].numpy(), [7.4375, 7.4375], atol=1e-12)
        np.testing.assert_allclose(mc[0, 2].numpy(), [3.5, 3.5], atol=1e-12)

    def test_same_resolution_is_identity(self):
        coords = torch.tensor([[[3.0, 5.0]]], dtype=torch.float64)
        np.testing.assert_allclose(
            map_coordinates(coords, (16, 16), (16, 16)).numpy(), [[[3.0, 5.0]]], atol=1e-12
        )


class TestBilinearReadout:
    def test_full_resolution_integer_coords_match_exactly(self):
        """At map resolution == image resolution, integer coordinates return
        the stored feature vectors."""
        rng = np.random.default_rng(42)
        fmap = torch.tensor(rng.normal(size=(1, 5, 6, 7)))
        coords = torch.tensor([[[2.0, 3.0], [0.0, 0.0], [5.0, 6.0]]], dtype=torch.float64)
        out = bilinear_readout(fmap, coords, (6, 7))
        np.testing.assert_allclose(out[0, 0].numpy(), fmap[0, :, 2, 3].numpy(), atol=1e-12)
        np.testing.assert_allclose(out[0, 1].numpy(), fmap[0, :, 0, 0].numpy(), atol=1e-12)
        np.testing.assert_allclose(out[0, 2].numpy(), fmap[0, :, 5, 6].numpy(), atol=1e-12)

    def test_matches_scalar_interpolation(self):
        """Fractional positions agree with a four-corner loop in numpy."""
        rng = np.random.default_rng(42)
        fmap_np = rng.normal(size=(1, 3, 4, 5))
        fmap = torch.tensor(fmap_np)
        coords_img = np.array([[7.3, 11.9], [2.0, 0.4], [15.0, 19.0], [0.0, 0.0]])
        out = bilinear_readout(
            fmap, torch.tensor(coords_img[None]), (16, 20)
        )[0].numpy()
        for p, (ri, ci) in enumerate(coords_img):
            r = np.clip((ri + 0.5) * 4 / 16 - 0.5, 0, 3)
            c = np.clip((ci + 0.5) * 5 / 20 - 0.5, 0, 4)
            r0, c0 = int(np.floor(r)), int(np.floor(c))
            r1, c1 = min(r0 + 1, 3), min(c0 + 1, 4)
            fr, fc = r - r0, c - c0
            for ch in range(3):
                v = (
                    fmap_np[0, ch, r0, c0] * (1 - fr) * (1 - fc)
                    + fmap_np[0, ch, r0, c1] * (1 - fr) * fc
                    + fmap_np[0, ch, r1, c0] * fr * (1 - fc)
                    + fmap_np[0, ch, r1, c1] * fr * fc
                )
                assert out[p, ch] == pytest.approx(v, abs=1e-12)

    def test_constant_map_reads_constant(self):
        fmap = torch.full((1, 2, 4, 4), 1.25, dtype=torch.float64)
        rng = np.random.default_rng(42)
        coords = torch.tensor(rng.uniform(0, 31, size=(1, 20, 2)))
        out = bilinear_readout(fmap, coords, (32, 32))
        np.testing.assert_allclose(out.numpy(), 1.25, atol=1e-12)

    def test_out_of_bounds_raises(self):
        fmap = torch.zeros(1, 2, 4, 4)
        with pytest.raises(ValueError, match="row"):
            bilinear_readout(fmap, torch.tensor([[[32.0, 0.0]]]), (32, 32))
        with pytest.raises(ValueError, match="column"):
            bilinear_readout(fmap, torch.tensor([[[0.0, -1.0]]]), (32, 32))

    def test_bad_coord_shape_raises(self):
        with pytest.raises(ValueError, match="B, P, 2"):
            bilinear_readout(torch.zeros(1, 2, 4, 4), torch.zeros(1, 5, 3), (8, 8))


class TestHypercolumnSqueeze:
    def test_per_source_normalization_defeats_scale(self):
        """Scaling any single source map by a large constant leaves the
        squeezed context nearly unchanged (each slice is unit-normalized)."""
        torch.manual_seed(8)
        sq = HypercolumnSqueeze([3, 5], context_dim=4).double()
        rng = np.random.default_rng(42)
        m1 = torch.tensor(rng.normal(size=(1, 3, 4, 4)))
        m2 = torch.tensor(rng.normal(size=(1, 5, 2, 2)))
        coords = torch.tensor(rng.uniform(0, 15, size=(1, 6, 2)))
        base = sq([m1, m2], coords, (16, 16)).detach().numpy()
        scaled = sq([m1 * 1000.0, m2], coords, (16, 16)).detach().numpy()
        np.testing.assert_allclose(scaled, base, atol=1e-5)

    def test_source_count_and_channel_validation(self):
        sq = HypercolumnSqueeze([3], context_dim=4)
        with pytest.raises(ValueError, match="source maps"):
            sq([torch.zeros(1, 3, 2, 2), torch.zeros(1, 3, 2, 2)], torch.zeros(1, 1, 2), (4, 4))
        with pytest.raises(ValueError, match="channels"):
            sq([torch.zeros(1, 5, 2, 2)], torch.zeros(1, 1, 2), (4, 4))


class TestFeatureExtractor:
    def test_context_shape(self):
        torch.manual_seed(9)
        fx = FeatureExtractor(BackboneConfig.toy())
        maps = fx.forward_maps(torch.randn(2, 3, 32, 32))
        coords = torch.tensor([[[0.0, 0.0], [31.0, 31.0]]] * 2)
        ctx = fx.context_at(maps, coords, (32, 32))
        assert ctx.shape == (2, 2, 64)
        first = fx.first_layer_at(maps, coords, (32, 32))
        assert first.shape == (2, 2, 8)

    def test_rnn_map_attached(self):
        torch.manual_seed(10)
        fx = FeatureExtractor(BackboneConfig.toy())
        maps = fx.forward_maps(torch.randn(1, 3, 32, 32))
        assert maps.rnn is not None
        assert maps.rnn.shape == (1, 32, 4, 4)
        assert len(maps.sources()) == 4
