"""One-stream and two-stream Siamese classifiers.

Within a stream the two camera branches share one weight set: the same
:class:`~twostream_reid.backbones.Network` object embeds both patches,
so backward naturally accumulates both branch gradients. The two-stream
fusion concatenates the per-stream L1 distance vectors (512 + 512) and
classifies with a fully connected head (1024 -> 1024 -> 512 -> 256 -> 2,
ReLU and 20% dropout after each hidden layer).
"""

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from . import backbones, serialization
from .errors import DimensionError, FormatError, ParameterError

DROPOUT_RATE = 0.2
SHAPE_INPUT = (3, 96, 96)
PLATE_INPUT = (3, 96, 48)
MODALITY_SHAPES = {"shape": SHAPE_INPUT, "plate": PLATE_INPUT}

TWO_STREAM_HEAD = [1024, 512, 256, 2]
# one-stream baselines halve the first layer so capacity per input
# feature matches the fused head
ONE_STREAM_HEAD = [512, 256, 2]

KIND_TWO_STREAM = "two-stream"
KIND_ONE_STREAM_SHAPE = "one-stream-shape"
KIND_ONE_STREAM_PLATE = "one-stream-plate"
MODEL_KINDS = (KIND_TWO_STREAM, KIND_ONE_STREAM_SHAPE, KIND_ONE_STREAM_PLATE)

LABEL_MATCHING = "matching"
LABEL_NON_MATCHING = "non-matching"


@dataclass
class MatchDecision:
    """Softmax output over (non-matching, matching) plus the argmax label."""

    probs: np.ndarray
    label: str

    @classmethod
    def from_probs(cls, probs):
        # tie at (0.5, 0.5) resolves to non-matching
        label = LABEL_MATCHING if probs[1] > probs[0] else LABEL_NON_MATCHING
        return cls(probs=np.asarray(probs), label=label)


class Head:
    """Fully connected classifier stack ending in 2-class logits."""

    def __init__(self, input_dim, widths, rng, dtype=None):
        dtype = np.dtype(dtype or ag.DEFAULT_DTYPE)
        self.input_dim = input_dim
        self.widths = list(widths)
        self.dtype = dtype
        self.params = {}
        fan_in = input_dim
        for i, units in enumerate(self.widths):
            self.params[f"fc{i}.w"] = ag.Tensor(
                backbones.he_uniform(rng, (units, fan_in), fan_in, dtype),
                requires_grad=True, dtype=dtype,
            )
            self.params[f"fc{i}.b"] = ag.Tensor(
                np.zeros(units, dtype=dtype), requires_grad=True, dtype=dtype
            )
            fan_in = units

    def forward(self, x, training, rng, tape=None):
        out = x
        last = len(self.widths) - 1
        for i in range(len(self.widths)):
            out = ag.linear(out, self.params[f"fc{i}.w"], self.params[f"fc{i}.b"], tape)
            if i < last:
                out = ag.relu(out, tape)
                out = ag.dropout(out, DROPOUT_RATE, training, rng, tape)
        return out


class OneStreamModel:
    """Single-modality Siamese baseline (Siamese-Car or Siamese-Plate)."""

    def __init__(self, kind, net, head):
        self.kind = kind
        self.net = net
        self.head = head

    def parameters(self):
        out = {f"net.{k}": v for k, v in self.net.params.items()}
        out.update({f"head.{k}": v for k, v in self.head.params.items()})
        return out

    def forward_batch(self, patch1, patch2, training, rng, tape=None):
        e1 = self.net.forward(patch1, tape)
        e2 = self.net.forward(patch2, tape)
        d = ag.l1_distance(e1, e2, tape)
        return self.head.forward(d, training, rng, tape)


class TwoStreamModel:
    """Shape stream + plate stream fused by distance concatenation."""

    def __init__(self, shape_net, plate_net, head):
        self.kind = KIND_TWO_STREAM
        self.shape_net = shape_net
        self.plate_net = plate_net
        self.head = head

    def parameters(self):
        out = {f"shape.{k}": v for k, v in self.shape_net.params.items()}
        out.update({f"plate.{k}": v for k, v in self.plate_net.params.items()})
        out.update({f"head.{k}": v for k, v in self.head.params.items()})
        return out

    def forward_batch(self, shape1, plate1, shape2, plate2, training, rng, tape=None):
        ds = ag.l1_distance(
            self.shape_net.forward(shape1, tape), self.shape_net.forward(shape2, tape), tape
        )
        dp = ag.l1_distance(
            self.plate_net.forward(plate1, tape), self.plate_net.forward(plate2, tape), tape
        )
        if ds.data.ndim == 2:
            fused = ag.concat_rows(ds, dp, tape)
        else:
            fused = ag.concat(ds, dp, tape)
        return self.head.forward(fused, training, rng, tape)


def build_two_stream(backbone="small-vgg", seed=0, dtype=None):
    rng = np.random.default_rng(seed)
    shape_net = backbones.build_backbone(backbone, SHAPE_INPUT, rng, dtype=dtype)
    plate_net = backbones.build_backbone(backbone, PLATE_INPUT, rng, dtype=dtype)
    head = Head(2 * backbones.EMBEDDING_DIM, TWO_STREAM_HEAD, rng, dtype=dtype)
    return TwoStreamModel(shape_net, plate_net, head)


def build_one_stream(kind, backbone="small-vgg", seed=0, dtype=None, input_shape=None):
    if kind not in (KIND_ONE_STREAM_SHAPE, KIND_ONE_STREAM_PLATE):
        raise ParameterError(f"unknown one-stream kind {kind!r}")
    modality = "shape" if kind == KIND_ONE_STREAM_SHAPE else "plate"
    rng = np.random.default_rng(seed)
    net = backbones.build_backbone(
        backbone, input_shape or MODALITY_SHAPES[modality], rng, dtype=dtype
    )
    head = Head(backbones.EMBEDDING_DIM, ONE_STREAM_HEAD, rng, dtype=dtype)
    return OneStreamModel(kind, net, head)


def one_stream_forward(net, patch1, patch2, head, training=False, rng=None):
    """Single-pair inference through a shared-weight stream + head."""
    rng = rng or np.random.default_rng(0)
    e1 = backbones.embed(net, patch1)
    e2 = backbones.embed(net, patch2)
    d = ag.l1_distance(e1, e2)
    logits = head.forward(d, training, rng)
    _, probs = ag.softmax_cross_entropy(logits, 0)
    return MatchDecision.from_probs(probs.data)


def two_stream_forward(model, shape1, plate1, shape2, plate2, training=False, rng=None):
    """Single-pair inference through the fused two-stream classifier."""
    rng = rng or np.random.default_rng(0)
    logits = model.forward_batch(shape1, plate1, shape2, plate2, training, rng)
    _, probs = ag.softmax_cross_entropy(logits, 0)
    return MatchDecision.from_probs(probs.data)


def model_inputs(model, pair_arrays):
    """Order a loaded pair's arrays as the model's forward_batch expects."""
    shape1, plate1, shape2, plate2 = pair_arrays
    if model.kind == KIND_TWO_STREAM:
        return (shape1, plate1, shape2, plate2)
    if model.kind == KIND_ONE_STREAM_SHAPE:
        return (shape1, shape2)
    return (plate1, plate2)


def train_step(model, batch, optimizer, rng):
    """One forward/backward/update pass over a stacked batch.

    ``batch`` is ``(inputs, labels)`` where inputs is the tuple of
    stacked (B,C,H,W) arrays in forward_batch order and labels is a
    length-B int sequence (1 = matching). Returns the mean loss.
    """
    inputs, labels = batch
    if len(labels) == 0:
        raise ParameterError("empty batch")
    dtype = next(iter(model.parameters().values())).dtype
    tensors = [ag.Tensor(x, dtype=dtype) for x in inputs]
    tape = ag.Tape()
    logits = model.forward_batch(*tensors, True, rng, tape)
    loss, _ = ag.softmax_cross_entropy(logits, labels, tape)
    optimizer.zero_grad()
    ag.backward(tape, loss)
    optimizer.step()
    return float(loss.data)


MODEL_FORMAT_VERSION = 1


def save_model(model, path):
    header = {"format_version": MODEL_FORMAT_VERSION, "model_kind": model.kind,
              "head_widths": model.head.widths, "head_input_dim": model.head.input_dim}
    if model.kind == KIND_TWO_STREAM:
        header["shape_backbone"] = backbones.spec_header(model.shape_net.spec)
        header["plate_backbone"] = backbones.spec_header(model.plate_net.spec)
        header["shape_input"] = list(model.shape_net.input_shape)
        header["plate_input"] = list(model.plate_net.input_shape)
    else:
        header["backbone"] = backbones.spec_header(model.net.spec)
        header["input_shape"] = list(model.net.input_shape)
    serialization.save_params(path, header, model.parameters())


def _restore(params, prefix, target, dtype):
    for name, tensor in target.items():
        key = f"{prefix}.{name}"
        if key not in params:
            raise FormatError(f"missing parameter record {key!r}")
        if params[key].shape != tensor.data.shape:
            raise FormatError(f"parameter {key!r} has shape {params[key].shape}, "
                              f"expected {tensor.data.shape}")
        tensor.data = params[key].astype(dtype)


def load_model(path, expect_kind=None, dtype=None):
    header, params = serialization.load_params(path)
    if header.get("format_version") != MODEL_FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported model format {header.get('format_version')}")
    kind = header.get("model_kind")
    if kind not in MODEL_KINDS:
        raise FormatError(f"{path}: unknown model kind {kind!r}")
    if expect_kind is not None and kind != expect_kind:
        raise FormatError(f"{path}: model kind is {kind!r}, expected {expect_kind!r}")
    dtype = np.dtype(dtype or ag.DEFAULT_DTYPE)
    rng = np.random.default_rng(0)
    if kind == KIND_TWO_STREAM:
        shape_net = backbones.Network(
            backbones.spec_from_header(header["shape_backbone"]),
            tuple(header["shape_input"]), rng, dtype=dtype)
        plate_net = backbones.Network(
            backbones.spec_from_header(header["plate_backbone"]),
            tuple(header["plate_input"]), rng, dtype=dtype)
        head = Head(int(header["head_input_dim"]), header["head_widths"], rng, dtype=dtype)
        model = TwoStreamModel(shape_net, plate_net, head)
        _restore(params, "shape", shape_net.params, dtype)
        _restore(params, "plate", plate_net.params, dtype)
        _restore(params, "head", head.params, dtype)
    else:
        net = backbones.Network(
            backbones.spec_from_header(header["backbone"]),
            tuple(header["input_shape"]), rng, dtype=dtype)
        head = Head(int(header["head_input_dim"]), header["head_widths"], rng, dtype=dtype)
        model = OneStreamModel(kind, net, head)
        _restore(params, "net", net.params, dtype)
        _restore(params, "head", head.params, dtype)
    return model
