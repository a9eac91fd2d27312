"""Training loop: SGD with momentum, plateau decay, checkpoints, early stop.

The epoch log is split into two files on purpose: ``log.csv`` holds only
deterministic quantities (losses, validation metrics, learning rate) so
repeated runs with the same seed are byte-identical, while wall-clock
durations go to ``timing.csv``.
"""

import csv
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from . import metrics as mx
from . import siamese, synthdata
from .errors import DivergedError, ParameterError
from .optim import SGDMomentum
from .pairgen import pair_vehicle_ids
from .siamese import LABEL_MATCHING, LABEL_NON_MATCHING


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-2
    momentum: float = 0.9
    lr_decay: float = 0.1
    plateau_patience: int = 3
    early_stop_patience: int = 6
    divergence_threshold: float = 50.0
    seed: int = 0
    dtype: object = np.float32  # training runs in float32; the library default stays float64
    checkpoint_dir: str = "checkpoints"

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ParameterError("epochs and batch_size must be positive")
        if self.learning_rate <= 0 or not 0 <= self.momentum < 1:
            raise ParameterError("need learning_rate > 0 and momentum in [0,1)")
        if not 0 < self.lr_decay <= 1:
            raise ParameterError(f"lr_decay must be in (0,1], got {self.lr_decay}")
        if self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise ParameterError("patience values must be positive")


class PatchCache:
    """Decoded-patch cache keyed by manifest ref; loads lazily."""

    def __init__(self, root=None, dtype=np.float64):
        self.root = root
        self.dtype = dtype
        self._store = {}

    def get(self, ref):
        arr = self._store.get(ref)
        if arr is None:
            path = ref if self.root is None else os.path.join(self.root, ref)
            arr = synthdata.load_patch(path, dtype=self.dtype)
            self._store[ref] = arr
        return arr


def pair_true_label(pair):
    """Ground-truth decision label for a generated pair."""
    return LABEL_MATCHING if pair.is_positive else LABEL_NON_MATCHING


def _pair_label_int(pair):
    return 1 if pair.is_positive else 0


def _stacked_inputs(model, pairs, cache):
    arrays = tuple(
        np.stack([cache.get(getattr(pair, side)[slot]) for pair in pairs])
        for side, slot in (("cam1", 0), ("cam1", 1), ("cam2", 0), ("cam2", 1))
    )
    return siamese.model_inputs(model, arrays)


class TrainLog:
    FIELDS = ("epoch", "mean_loss", "P", "R", "F", "A", "lr")

    def __init__(self, path):
        self.path = path
        self.rows = []
        self._flush()

    def add(self, epoch, mean_loss, report, lr):
        # metric columns stay blank when there is no validation split
        r = report.rounded() if report else {k: "" for k in "PRFA"}
        fmt = (lambda v: f"{v:.1f}") if report else (lambda v: v)
        self.rows.append({
            "epoch": epoch, "mean_loss": f"{mean_loss:.6f}",
            "P": fmt(r["P"]), "R": fmt(r["R"]),
            "F": fmt(r["F"]), "A": fmt(r["A"]), "lr": repr(lr),
        })
        self._flush()

    def _flush(self):
        with open(self.path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.FIELDS, lineterminator="\n")
            writer.writeheader()
            writer.writerows(self.rows)


@dataclass
class TrainResult:
    best_checkpoint: str
    best_f: float
    best_epoch: int
    epochs_run: int
    history: list = field(default_factory=list)


def split_train_val(pairs, val_fraction=0.1, seed=0):
    """Vehicle-level split: no identity appears on both sides.

    Pairs mixing a train and a validation identity are dropped.
    """
    ids = sorted(pair_vehicle_ids(pairs))
    if len(ids) < 2:
        raise ParameterError("need at least two vehicle identities to split")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5A)))
    order = rng.permutation(len(ids))
    n_val = max(1, round(len(ids) * val_fraction))
    val_ids = {ids[i] for i in order[:n_val]}
    train, val = [], []
    for pair in pairs:
        touched = {pair.provenance[0], pair.provenance[2]}
        if touched <= val_ids:
            val.append(pair)
        elif not touched & val_ids:
            train.append(pair)
    return train, val


def _softmax_rows(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def predict_pairs(model, pairs, cache, batch_size=64):
    """Labels predicted for each pair, embedding every unique patch once."""
    if model.kind == siamese.KIND_TWO_STREAM:
        nets = ((model.shape_net, 0), (model.plate_net, 1))
    elif model.kind == siamese.KIND_ONE_STREAM_SHAPE:
        nets = ((model.net, 0),)
    else:
        nets = ((model.net, 1),)

    dtype = next(iter(model.parameters().values())).dtype
    embeddings = {}
    for net, slot in nets:
        refs = sorted({side[slot] for pair in pairs for side in (pair.cam1, pair.cam2)})
        for start in range(0, len(refs), batch_size):
            chunk = refs[start : start + batch_size]
            batch = np.stack([cache.get(r) for r in chunk]).astype(dtype, copy=False)
            out = net.forward(ag.Tensor(batch, dtype=dtype), None).data
            for ref, row in zip(chunk, out):
                embeddings[(slot, ref)] = row

    rows = []
    for pair in pairs:
        parts = [
            np.abs(embeddings[(slot, pair.cam1[slot])] - embeddings[(slot, pair.cam2[slot])])
            for _, slot in nets
        ]
        rows.append(np.concatenate(parts))
    predicted = []
    rng = np.random.default_rng(0)  # inert: dropout is identity at inference
    for start in range(0, len(rows), batch_size):
        block = np.asarray(rows[start : start + batch_size], dtype=dtype)
        logits = model.head.forward(ag.Tensor(block, dtype=dtype), False, rng, None).data
        probs = _softmax_rows(logits)
        predicted.extend(siamese.MatchDecision.from_probs(p).label for p in probs)
    return predicted


def evaluate_pairs(model, pairs, cache, batch_size=64):
    if not pairs:
        raise ParameterError("cannot evaluate an empty pair set")
    predicted = predict_pairs(model, pairs, cache, batch_size=batch_size)
    actual = [pair_true_label(pair) for pair in pairs]
    return mx.metrics(mx.confusion(predicted, actual))


def train(model, train_pairs, val_pairs, config, root=None):
    """Fit the model, checkpointing on best validation F; returns TrainResult.

    Raises DivergedError (carrying the best checkpoint so far, if any)
    when a batch loss goes non-finite or above the divergence threshold.
    """
    config.validate()
    if not train_pairs:
        raise ParameterError("empty training pair set")
    os.makedirs(config.checkpoint_dir, exist_ok=True)
    best_path = os.path.join(config.checkpoint_dir, "best.ckpt")
    log = TrainLog(os.path.join(config.checkpoint_dir, "log.csv"))
    timing_path = os.path.join(config.checkpoint_dir, "timing.csv")
    with open(timing_path, "w", newline="", encoding="utf-8") as fh:
        fh.write("epoch,seconds\n")

    cache = PatchCache(root=root, dtype=config.dtype)
    optimizer = SGDMomentum(
        model.parameters(), learning_rate=config.learning_rate, momentum=config.momentum
    )
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, 0x7E)))
    labels_all = np.array([_pair_label_int(pair) for pair in train_pairs])

    best_f, best_epoch, stale = -1.0, -1, 0
    history = []
    epochs_run = 0
    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = rng.permutation(len(train_pairs))
        losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            batch_pairs = [train_pairs[i] for i in idx]
            inputs = _stacked_inputs(model, batch_pairs, cache)
            loss = siamese.train_step(model, (inputs, labels_all[idx]), optimizer, rng)
            if not np.isfinite(loss) or loss > config.divergence_threshold:
                raise DivergedError(
                    f"loss {loss} at epoch {epoch} exceeds threshold "
                    f"{config.divergence_threshold}",
                    checkpoint_path=best_path if best_epoch >= 0 else None,
                )
            losses.append(loss)
        mean_loss = float(np.mean(losses))
        report = evaluate_pairs(model, val_pairs, cache) if val_pairs else None
        epochs_run = epoch + 1

        f_val = report.f_measure if report else -mean_loss
        if f_val > best_f:
            best_f, best_epoch, stale = f_val, epoch, 0
            siamese.save_model(model, best_path)
        else:
            stale += 1
            if stale % config.plateau_patience == 0:
                optimizer.scale_lr(config.lr_decay)

        log.add(epoch, mean_loss, report, optimizer.learning_rate)
        history.append({"epoch": epoch, "mean_loss": mean_loss, "report": report,
                        "lr": optimizer.learning_rate})
        with open(timing_path, "a", newline="", encoding="utf-8") as fh:
            fh.write(f"{epoch},{time.perf_counter() - started:.3f}\n")
        if stale >= config.early_stop_patience:
            break

    if best_epoch < 0:
        siamese.save_model(model, best_path)
        best_epoch, best_f = epochs_run - 1, 0.0
    return TrainResult(best_checkpoint=best_path, best_f=max(best_f, 0.0),
                       best_epoch=best_epoch, epochs_run=epochs_run, history=history)


def checkpoint_roundtrip(model, path):
    """Save, reload, and confirm every parameter survives byte-exactly."""
    siamese.save_model(model, path)
    clone = siamese.load_model(path, expect_kind=model.kind)
    ours, theirs = model.parameters(), clone.parameters()
    return set(ours) == set(theirs) and all(
        np.array_equal(ours[k].data, theirs[k].data) for k in ours
    )
