import numpy as np
import pytest

from twostream_reid import autograd as ag
from twostream_reid import backbones as bb
from twostream_reid.errors import DimensionError, ParameterError


def small_vgg(input_shape=(3, 96, 96), seed=0, **kw):
    return bb.build_small_vgg(input_shape, np.random.default_rng(seed), **kw)


class TestGeometry:
    def test_small_vgg_square_trace(self):
        net = small_vgg((3, 96, 96))
        assert net.spatial_trace() == [(48, 48), (24, 24), (12, 12), (6, 6), (3, 3)]

    def test_small_vgg_plate_trace(self):
        net = small_vgg((3, 96, 48))
        assert net.spatial_trace() == [(48, 24), (24, 12), (12, 6), (6, 3), (3, 1)]

    def test_flat_dims(self):
        assert small_vgg((3, 96, 96)).flat_dim == 512 * 3 * 3
        assert small_vgg((3, 96, 48)).flat_dim == 512 * 3 * 1

    def test_embedding_is_512(self):
        net = small_vgg((3, 96, 48))
        patch = ag.Tensor(np.random.default_rng(1).random((3, 96, 48)))
        assert bb.embed(net, patch).shape == (512,)

    def test_lenet_traces(self):
        net = bb.build_lenet5_like((3, 96, 96), np.random.default_rng(0))
        assert net.spatial_trace() == [(48, 48), (24, 24)]
        assert bb.embed(net, ag.Tensor(np.zeros((3, 96, 96)))).shape == (512,)

    def test_too_small_input_rejected(self):
        with pytest.raises(ParameterError):
            small_vgg((3, 16, 16))

    def test_wrong_patch_shape_rejected(self):
        net = small_vgg((3, 96, 96))
        with pytest.raises(DimensionError):
            net.forward(ag.Tensor(np.zeros((3, 96, 48))))


class TestParameters:
    def test_same_seed_same_parameters(self):
        a, b = small_vgg(seed=7), small_vgg(seed=7)
        assert set(a.params) == set(b.params)
        for key in a.params:
            np.testing.assert_array_equal(a.params[key].data, b.params[key].data)

    def test_he_uniform_bound_and_zero_biases(self):
        net = small_vgg()
        w = net.params["conv0.w"].data
        bound = np.sqrt(6.0 / (3 * 9))
        assert np.all(np.abs(w) <= bound) and np.abs(w).max() > 0.5 * bound
        for key, tensor in net.params.items():
            if key.endswith(".b"):
                assert not tensor.data.any()

    def test_parameter_count_matches_manual_sum(self):
        net = bb.build_lenet5_like((3, 32, 32), np.random.default_rng(0))
        manual = (6 * 3 * 9 + 6) + (16 * 6 * 9 + 16)
        flat = 16 * 8 * 8
        manual += (120 * flat + 120) + (512 * 120 + 512)
        assert net.parameter_count() == manual

    def test_all_parameters_require_grad(self):
        net = small_vgg()
        assert all(t.requires_grad for t in net.params.values())


class TestForward:
    def test_batched_matches_single(self, rng):
        net = bb.build_lenet5_like((3, 32, 32), rng)
        batch = rng.random((3, 3, 32, 32))
        out = net.forward(ag.Tensor(batch)).data
        for i in range(3):
            single = net.forward(ag.Tensor(batch[i])).data
            np.testing.assert_allclose(out[i], single, rtol=1e-12, atol=1e-12)

    def test_embeddings_nonnegative(self, rng):
        # final ReLU means embeddings live in the nonnegative orthant
        net = bb.build_lenet5_like((3, 32, 32), rng)
        out = net.forward(ag.Tensor(rng.standard_normal((2, 3, 32, 32))))
        assert np.all(out.data >= 0)

    def test_float32_network_stays_float32(self, rng):
        net = bb.build_lenet5_like((3, 32, 32), rng, dtype=np.float32)
        out = net.forward(ag.Tensor(rng.random((3, 32, 32)), dtype=np.float32))
        assert out.data.dtype == np.float32


class TestSpecHeaders:
    def test_roundtrip(self):
        for spec in (bb.SMALL_VGG, bb.LENET5_LIKE):
            assert bb.spec_from_header(bb.spec_header(spec)) == spec

    def test_unknown_backbone_name(self):
        with pytest.raises(ParameterError):
            bb.build_backbone("alexnet", (3, 96, 96), np.random.default_rng(0))
