"""Embedding CNNs: Small-VGG and a LeNet5-style alternate.

Both map an RGB patch to a 512-feature vector. Small-VGG is five stages
of [3x3 conv -> ReLU -> 2x2 max pool] with filter counts
[64, 128, 128, 256, 512] followed by a 512-unit fully connected layer;
the LeNet variant is a lighter two-stage net with a 512-unit head so it
can stand in behind the same stream contract.
"""

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .errors import DimensionError, ParameterError

SMALL_VGG_FILTERS = [64, 128, 128, 256, 512]
EMBEDDING_DIM = 512


@dataclass(frozen=True)
class BackboneSpec:
    name: str
    conv_stages: list
    fc_units: list
    pool_after_each_stage: bool = True
    embedding_dim: int = EMBEDDING_DIM
    min_input: int = 32

    def __post_init__(self):
        if self.fc_units[-1] != self.embedding_dim:
            raise ParameterError("final FC width must equal embedding_dim")


SMALL_VGG = BackboneSpec("small-vgg", SMALL_VGG_FILTERS, [EMBEDDING_DIM], min_input=32)
LENET5_LIKE = BackboneSpec("lenet5", [6, 16], [120, EMBEDDING_DIM], min_input=16)

SPECS_BY_NAME = {SMALL_VGG.name: SMALL_VGG, LENET5_LIKE.name: LENET5_LIKE}


def he_uniform(rng, shape, fan_in, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Network:
    """A parameterized stage list: convs + pools, flatten, FC stack.

    Two networks built from the same spec and seed are parameter-
    identical; the forward pass is a pure function of (params, input).
    """

    def __init__(self, spec, input_shape, rng, dtype=None):
        dtype = np.dtype(dtype or ag.DEFAULT_DTYPE)
        c, h, w = input_shape
        if h < spec.min_input or w < spec.min_input:
            raise ParameterError(
                f"{spec.name} needs input >= {spec.min_input}x{spec.min_input}, got {h}x{w}"
            )
        self.spec = spec
        self.input_shape = tuple(input_shape)
        self.dtype = dtype
        self.params = {}

        trace = []
        for i, filters in enumerate(spec.conv_stages):
            self.params[f"conv{i}.w"] = ag.Tensor(
                he_uniform(rng, (filters, c, 3, 3), c * 9, dtype), requires_grad=True, dtype=dtype
            )
            self.params[f"conv{i}.b"] = ag.Tensor(
                np.zeros(filters, dtype=dtype), requires_grad=True, dtype=dtype
            )
            c = filters
            if spec.pool_after_each_stage:
                h, w = h // 2, w // 2
                if h < 1 or w < 1:
                    raise ParameterError(f"input too small: stage {i} pools to {h}x{w}")
            trace.append((h, w))
        self._pool_trace = trace

        width = c * h * w
        for i, units in enumerate(spec.fc_units):
            self.params[f"fc{i}.w"] = ag.Tensor(
                he_uniform(rng, (units, width), width, dtype), requires_grad=True, dtype=dtype
            )
            self.params[f"fc{i}.b"] = ag.Tensor(
                np.zeros(units, dtype=dtype), requires_grad=True, dtype=dtype
            )
            width = units
        self.flat_dim = self.spec.conv_stages[-1] * trace[-1][0] * trace[-1][1]

    def spatial_trace(self):
        """Post-pool (H, W) after each conv stage."""
        return list(self._pool_trace)

    def parameter_count(self):
        return sum(t.data.size for t in self.params.values())

    def forward(self, x, tape=None):
        """Patch (C,H,W) or batch (B,C,H,W) to a 512-dim embedding."""
        batched = x.data.ndim == 4
        expected = self.input_shape
        got = x.shape[1:] if batched else x.shape
        if tuple(got) != expected:
            raise DimensionError(f"patch shape {tuple(got)} != network input {expected}")
        out = x
        for i in range(len(self.spec.conv_stages)):
            out = ag.conv2d(out, self.params[f"conv{i}.w"], self.params[f"conv{i}.b"], tape)
            out = ag.relu(out, tape)
            if self.spec.pool_after_each_stage:
                out = ag.maxpool2x2(out, tape)
        flat = (out.shape[0], self.flat_dim) if batched else (self.flat_dim,)
        out = ag.reshape(out, flat, tape)
        for i in range(len(self.spec.fc_units)):
            out = ag.linear(out, self.params[f"fc{i}.w"], self.params[f"fc{i}.b"], tape)
            out = ag.relu(out, tape)
        return out


def build_small_vgg(input_shape, rng, dtype=None):
    return Network(SMALL_VGG, input_shape, rng, dtype=dtype)


def build_lenet5_like(input_shape, rng, dtype=None):
    return Network(LENET5_LIKE, input_shape, rng, dtype=dtype)


def build_backbone(name, input_shape, rng, dtype=None):
    if name not in SPECS_BY_NAME:
        raise ParameterError(f"unknown backbone {name!r}; choose from {sorted(SPECS_BY_NAME)}")
    return Network(SPECS_BY_NAME[name], input_shape, rng, dtype=dtype)


def embed(net, patch, tape=None):
    """Deterministic 512-vector for a patch matching net.input_shape."""
    return net.forward(patch, tape)


def spec_header(spec):
    return {
        "backbone": spec.name,
        "conv_stages": list(spec.conv_stages),
        "fc_units": list(spec.fc_units),
        "embedding_dim": spec.embedding_dim,
        "min_input": spec.min_input,
    }


def spec_from_header(header):
    return BackboneSpec(
        name=header["backbone"],
        conv_stages=list(header["conv_stages"]),
        fc_units=list(header["fc_units"]),
        embedding_dim=int(header["embedding_dim"]),
        min_input=int(header["min_input"]),
    )
