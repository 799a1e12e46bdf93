import numpy as np
import pytest

from hierbpr.checkpoint import load_checkpoint, save_checkpoint
from hierbpr.errors import ParseError
from hierbpr.evaluation import ColdItemSet, auc, split_leave_one_out
from hierbpr.hierarchy import AllocationScheme
from hierbpr.model import (
    KIND_HVBPR,
    KIND_RAND,
    PreferenceModel,
    make_baseline,
)
from hierbpr.synthdata import SynthConfig, make_corpus
from hierbpr.training import TrainConfig, train


@pytest.fixture(scope="module")
def trained_setup():
    cfg = SynthConfig(n_users=30, n_items=60, feature_dim=6, branching=(3,),
                      n_positives=4, planted_scheme=(2, 1), rng_seed=5)
    corpus, _ = make_corpus(cfg)
    tc, split = split_leave_one_out(corpus, 3)
    model = PreferenceModel.create(
        make_baseline(KIND_HVBPR, total_dims=6, visual_dims=3,
                      scheme=AllocationScheme((2, 1)), rng_seed=11),
        corpus)
    train(model, tc, TrainConfig(iterations=3, rng_seed=7))
    return corpus, tc, split, model


class TestRoundTrip:
    def test_parameters_survive(self, trained_setup, tmp_path):
        corpus, tc, split, model = trained_setup
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model, split=split,
                        seeds={"split": 3, "init": 11, "sample": 7},
                        item_train_count=tc.item_counts())
        bundle = load_checkpoint(path)
        assert bundle.config == model.config
        assert bundle.user_ids == corpus.user_ids
        assert bundle.item_ids == corpus.item_ids
        for name, arr in model.params.arrays().items():
            assert np.array_equal(arr, bundle.params.arrays()[name]), name
        assert np.array_equal(bundle.split.test_item, split.test_item)
        assert np.array_equal(bundle.split.val_item, split.val_item)
        assert bundle.seeds == {"split": 3, "init": 11, "sample": 7}
        assert bundle.feature_dim == corpus.feature_dim

    def test_hierarchy_reconstructed(self, trained_setup, tmp_path):
        corpus, _tc, split, model = trained_setup
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model, split=split)
        bundle = load_checkpoint(path)
        h0, h1 = corpus.hierarchy, bundle.hierarchy
        assert h0.node_ids == h1.node_ids
        assert np.array_equal(h0.parent, h1.parent)
        assert np.array_equal(bundle.item_leaf, corpus.item_leaf)

    def test_frozen_model_reproduces_scores(self, trained_setup, tmp_path):
        corpus, _tc, split, model = trained_setup
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model, split=split)
        frozen = load_checkpoint(path).frozen_model()
        table = model.item_table()
        for u in range(corpus.n_users):
            assert np.allclose(model.score_all(u, table), frozen.score_all(u),
                               atol=1e-12)

    def test_frozen_auc_matches_live(self, trained_setup, tmp_path):
        corpus, tc, split, model = trained_setup
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model, split=split,
                        item_train_count=tc.item_counts())
        bundle = load_checkpoint(path)
        frozen = bundle.frozen_model()
        live = auc(model, corpus, split)
        from_ckpt = auc(frozen, corpus, bundle.split)
        assert live.auc == pytest.approx(from_ckpt.auc, abs=1e-12)
        cold = ColdItemSet.from_training(tc, 5)
        live_cold = auc(model, corpus, split, setting="cold", cold_set=cold)
        ckpt_cold = auc(frozen, corpus, bundle.split, setting="cold",
                        cold_set=ColdItemSet(
                            5, bundle.item_train_count < 5))
        assert live_cold.auc == pytest.approx(ckpt_cold.auc, abs=1e-12)

    def test_to_model_rebinds(self, trained_setup, tmp_path):
        corpus, _tc, split, model = trained_setup
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model, split=split)
        rebound = load_checkpoint(path).to_model(corpus)
        assert rebound.score(0, 1) == pytest.approx(model.score(0, 1), abs=1e-12)

    def test_rank_dim_from_checkpoint(self, trained_setup, tmp_path):
        corpus, _tc, split, model = trained_setup
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model, split=split)
        frozen = load_checkpoint(path).frozen_model()
        live = model.rank_by_dimension(1, top_n=10)
        ckpt = frozen.rank_by_dimension(1, top_n=10)
        assert [i for i, _ in live] == [i for i, _ in ckpt]


class TestFormat:
    def test_byte_identical_writes(self, trained_setup, tmp_path):
        _corpus, tc, split, model = trained_setup
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        save_checkpoint(p1, model, split=split,
                        item_train_count=tc.item_counts())
        save_checkpoint(p2, model, split=split,
                        item_train_count=tc.item_counts())
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOTACKPT" + b"\x00" * 32)
        with pytest.raises(ParseError):
            load_checkpoint(path)

    def test_version_check(self, trained_setup, tmp_path):
        _corpus, _tc, split, model = trained_setup
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model, split=split)
        blob = bytearray(path.read_bytes())
        # Corrupt the version field inside the JSON header.
        idx = blob.find(b'"version":1')
        assert idx > 0
        blob[idx:idx + len(b'"version":1')] = b'"version":9'
        path.write_bytes(bytes(blob))
        with pytest.raises(ParseError):
            load_checkpoint(path)

    def test_rand_model_checkpoints(self, tmp_path):
        cfg = SynthConfig(n_users=10, n_items=20, feature_dim=4,
                          branching=(2,), n_positives=3,
                          planted_scheme=(1,), rng_seed=1)
        corpus, _ = make_corpus(cfg)
        _tc, split = split_leave_one_out(corpus, 1)
        model = PreferenceModel.create(make_baseline(KIND_RAND, rng_seed=9),
                                       corpus)
        path = tmp_path / "rand.ckpt"
        save_checkpoint(path, model, split=split)
        frozen = load_checkpoint(path).frozen_model()
        assert np.allclose(frozen.score_all(0), model.score_all(0))
