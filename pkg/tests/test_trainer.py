import os

import numpy as np
import pytest

from twostream_reid import autograd as ag
from twostream_reid import metrics as mx
from twostream_reid import pairgen as pg
from twostream_reid import siamese
from twostream_reid import synthdata as sd
from twostream_reid import trainer as tr
from twostream_reid.errors import DivergedError, ParameterError


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("corpus"))
    spec = sd.SynthSpec(n_vehicles=12, match_fraction=0.6, occurrences_per_camera=2,
                        shape_classes=3, seed=21)
    return sd.generate(spec, out)


@pytest.fixture(scope="module")
def pair_sets(corpus):
    ids = sorted({t.vehicle_id for t in corpus.tracks})
    train_ids, test_ids = pg.random_split(ids, 0.3, seed=2)
    spec = pg.PairSetSpec(n=2, lam=1, train_ids=train_ids, test_ids=test_ids, seed=2)
    return pg.build_sets(spec, corpus.tracks)


def plate_model(seed=0):
    return siamese.build_one_stream(
        siamese.KIND_ONE_STREAM_PLATE, "lenet5", seed=seed, dtype=np.float32
    )


def fake_report(f):
    return mx.MetricsReport(counts=mx.Confusion(), precision=f, recall=f,
                            f_measure=f, accuracy=f, degenerate=False)


class TestSplitTrainVal:
    def test_sides_are_identity_disjoint(self, pair_sets):
        train_pairs, _ = pair_sets
        tr_side, val_side = tr.split_train_val(train_pairs, 0.25, seed=0)
        assert tr_side and val_side
        assert not pg.pair_vehicle_ids(tr_side) & pg.pair_vehicle_ids(val_side)

    def test_mixed_pairs_are_dropped(self, pair_sets):
        train_pairs, _ = pair_sets
        tr_side, val_side = tr.split_train_val(train_pairs, 0.25, seed=0)
        assert len(tr_side) + len(val_side) <= len(train_pairs)

    def test_single_identity_rejected(self):
        occ = pg.Occurrence(0, "s", "p")
        pair = pg.PatchPair(("s", "p"), ("s", "p"), pg.POSITIVE, ("v", 0, "v", 0))
        with pytest.raises(ParameterError):
            tr.split_train_val([pair], 0.5, seed=0)


class TestPatchCache:
    def test_caches_decoded_arrays(self, corpus):
        cache = tr.PatchCache(root=corpus.root, dtype=np.float32)
        ref = corpus.tracks[0].occurrences[0].shape_ref
        assert cache.get(ref) is cache.get(ref)
        assert cache.get(ref).dtype == np.float32


class TestEvaluate:
    def test_matches_per_pair_inference(self, corpus, pair_sets):
        _, test_pairs = pair_sets
        model = plate_model(seed=5)
        cache = tr.PatchCache(root=corpus.root, dtype=np.float32)
        fast = tr.predict_pairs(model, test_pairs, cache, batch_size=7)
        slow = []
        for pair in test_pairs:
            a = ag.Tensor(cache.get(pair.cam1[1]), dtype=np.float32)
            b = ag.Tensor(cache.get(pair.cam2[1]), dtype=np.float32)
            slow.append(siamese.one_stream_forward(model.net, a, b, model.head).label)
        assert fast == slow

    def test_empty_pairs_rejected(self, corpus):
        cache = tr.PatchCache(root=corpus.root)
        with pytest.raises(ParameterError):
            tr.evaluate_pairs(plate_model(), [], cache)


class TestTrainLoop:
    def run(self, corpus, pair_sets, out, seed=3, **kw):
        train_pairs, _ = pair_sets
        tr_side, val_side = tr.split_train_val(train_pairs, 0.25, seed=1)
        config = tr.TrainConfig(epochs=kw.pop("epochs", 2), batch_size=16, seed=seed,
                                checkpoint_dir=out, **kw)
        model = plate_model(seed=seed)
        return tr.train(model, tr_side, val_side, config, root=corpus.root)

    def test_writes_checkpoint_and_logs(self, corpus, pair_sets, tmp_path):
        out = str(tmp_path / "run")
        result = self.run(corpus, pair_sets, out)
        assert os.path.isfile(result.best_checkpoint)
        assert os.path.isfile(os.path.join(out, "log.csv"))
        assert os.path.isfile(os.path.join(out, "timing.csv"))
        assert result.epochs_run == 2 and len(result.history) == 2
        siamese.load_model(result.best_checkpoint,
                           expect_kind=siamese.KIND_ONE_STREAM_PLATE)

    def test_log_is_deterministic(self, corpus, pair_sets, tmp_path):
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        self.run(corpus, pair_sets, a)
        self.run(corpus, pair_sets, b)
        assert open(os.path.join(a, "log.csv"), "rb").read() == \
               open(os.path.join(b, "log.csv"), "rb").read()
        assert open(os.path.join(a, "best.ckpt"), "rb").read() == \
               open(os.path.join(b, "best.ckpt"), "rb").read()

    def test_divergence_raises_with_context(self, corpus, pair_sets, tmp_path):
        with pytest.raises(DivergedError) as err:
            self.run(corpus, pair_sets, str(tmp_path / "div"),
                     divergence_threshold=1e-9)
        assert err.value.checkpoint_path is None  # nothing good was saved yet

    def test_early_stopping(self, corpus, pair_sets, tmp_path, monkeypatch):
        scripted = iter([0.9, 0.5, 0.5, 0.5, 0.5, 0.5])
        monkeypatch.setattr(tr, "evaluate_pairs", lambda *a, **k: fake_report(next(scripted)))
        result = self.run(corpus, pair_sets, str(tmp_path / "es"),
                          epochs=6, early_stop_patience=2)
        assert result.epochs_run == 3 and result.best_epoch == 0

    def test_plateau_decays_learning_rate(self, corpus, pair_sets, tmp_path, monkeypatch):
        scripted = iter([0.9, 0.5, 0.5, 0.5])
        monkeypatch.setattr(tr, "evaluate_pairs", lambda *a, **k: fake_report(next(scripted)))
        result = self.run(corpus, pair_sets, str(tmp_path / "pl"),
                          epochs=4, plateau_patience=2, early_stop_patience=10)
        lrs = [h["lr"] for h in result.history]
        assert lrs[0] == lrs[1] == 0.01
        assert lrs[2] == pytest.approx(0.001)

    def test_config_validation(self):
        with pytest.raises(ParameterError):
            tr.TrainConfig(epochs=0).validate()
        with pytest.raises(ParameterError):
            tr.TrainConfig(lr_decay=1.5).validate()


class TestCheckpointRoundtrip:
    def test_roundtrip_is_exact(self, tmp_path):
        model = plate_model(seed=8)
        assert tr.checkpoint_roundtrip(model, str(tmp_path / "rt.ckpt"))


class TestLabels:
    def test_pair_true_label(self):
        pos = pg.PatchPair(("s", "p"), ("s", "p"), pg.POSITIVE, ("a", 0, "a", 1))
        neg = pg.PatchPair(("s", "p"), ("s", "p"), pg.NEGATIVE, ("a", 0, "b", 1))
        assert tr.pair_true_label(pos) == siamese.LABEL_MATCHING
        assert tr.pair_true_label(neg) == siamese.LABEL_NON_MATCHING
