import numpy as np
import pytest

from hierbpr.errors import (
    EmptyCorpus,
    ExhaustedRejection,
    NonFiniteUpdate,
)
from hierbpr.evaluation import EvalSplit, auc, split_leave_one_out
from hierbpr.hierarchy import AllocationScheme
from hierbpr.ingestion import TrainingCorpus
from hierbpr.model import (
    KIND_HVBPR,
    KIND_VBPR,
    ModelConfig,
    PreferenceModel,
    make_baseline,
)
from hierbpr.synthdata import SynthConfig, make_corpus
from hierbpr.training import (
    RegWeights,
    TrainConfig,
    Trainer,
    per_triple_cost_probe,
    sample_triple,
    sgd_step,
    train,
)

from conftest import build_corpus, log_sigmoid, numeric_gradient, relative_error


def tiny_model(rng_seed=0, n_items=6, n_users=3, feature_dim=4,
               use_visual_bias=True, use_category_bias=False,
               n_latent=2, scheme=(2, 1)):
    """Two-layer tree, three leaves, randomized features and positives."""
    rng = np.random.default_rng(rng_seed)
    edges = [(f"leaf{k}", "root") for k in range(3)]
    items = {f"i{k}": f"leaf{k % 3}" for k in range(n_items)}
    features = {}
    for item in items:
        vec = rng.uniform(0.5, 1.5, size=feature_dim)
        vec *= rng.choice([-1.0, 1.0], size=feature_dim)
        features[item] = vec
    feedback = []
    for u in range(n_users):
        for k, item in enumerate(sorted(items)):
            if (u + k) % 2 == 0:
                feedback.append((f"u{u}", item))
    corpus = build_corpus(edges, items, features, feedback)
    scheme = AllocationScheme(scheme)
    config = ModelConfig(n_latent, scheme.total, scheme,
                         use_visual_bias=use_visual_bias,
                         use_category_bias=use_category_bias,
                         rng_seed=rng_seed + 1)
    model = PreferenceModel.create(config, corpus)
    # Spread the zero-initialized groups so gradients are generic.
    model.params.item_bias[:] = rng.normal(scale=0.1, size=n_items)
    model.params.visual_bias[:] = rng.normal(scale=0.1, size=feature_dim)
    if use_category_bias:
        model.params.category_bias[:] = rng.normal(
            scale=0.1, size=corpus.hierarchy.n_nodes)
    return model


def training_corpus_of(model):
    corpus = model.corpus
    return TrainingCorpus(
        train_pos=[p.copy() for p in corpus.positives],
        full_pos=[p.copy() for p in corpus.positives],
        users=np.arange(corpus.n_users),
        n_items=corpus.n_items,
    )


def analytic_gradients(model, triple, groups):
    """Parameter deltas from one unit-rate, unregularized step.

    With the rate at 1 and no shrinkage the in-place update equals the
    gradient of ln sigmoid(margin) at the pre-step parameters.
    """
    config = TrainConfig(learning_rate=1.0, reg=RegWeights(0, 0, 0, 0, 0, 0))
    before = {name: arr.copy() for name, arr in model.params.arrays().items()}
    saved = model.params.copy()
    sgd_step(model, triple, config)
    after = model.params.arrays()
    deltas = {name: after[name] - before[name] for name in groups}
    model.params = saved
    return deltas


class TestSampleTriple:
    def test_forced_negative(self):
        corpus = TrainingCorpus(
            train_pos=[np.array([0])],
            full_pos=[np.array([0])],
            users=np.array([0]),
            n_items=2,
        )
        rng = np.random.default_rng(0)
        for _ in range(50):
            u, i, j = sample_triple(corpus, rng)
            assert (u, i, j) == (0, 0, 1)

    def test_negative_never_positive(self):
        model = tiny_model()
        tc = training_corpus_of(model)
        rng = np.random.default_rng(7)
        for _ in range(10 ** 6):
            u, i, j = sample_triple(tc, rng)
            if j in tc.full_sets[u]:
                raise AssertionError(f"sampled positive {j} for user {u}")

    def test_user_distribution_uniform(self):
        n_users = 10
        corpus = TrainingCorpus(
            train_pos=[np.array([u % 3]) for u in range(n_users)],
            full_pos=[np.array([u % 3]) for u in range(n_users)],
            users=np.arange(n_users),
            n_items=50,
        )
        rng = np.random.default_rng(11)
        counts = np.zeros(n_users)
        draws = 10 ** 5
        for _ in range(draws):
            u, _, _ = sample_triple(corpus, rng)
            counts[u] += 1
        expected = draws / n_users
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        # chi-square critical value, 9 degrees of freedom, p = 0.01
        assert chi2 < 21.666

    def test_exhausted_rejection(self):
        corpus = TrainingCorpus(
            train_pos=[np.array([0, 1])],
            full_pos=[np.array([0, 1])],
            users=np.array([0]),
            n_items=2,
        )
        with pytest.raises(ExhaustedRejection):
            sample_triple(corpus, np.random.default_rng(0))


class TestSgdStep:
    def test_zero_rate_keeps_parameters(self):
        model = tiny_model()
        before = {k: v.copy() for k, v in model.params.arrays().items()}
        sgd_step(model, (0, 0, 1), TrainConfig(learning_rate=0.0))
        for name, arr in model.params.arrays().items():
            assert np.array_equal(arr, before[name]), name

    def test_saturated_sigmoid_pure_shrinkage(self):
        model = tiny_model(use_visual_bias=False)
        # Giant bias gap saturates the sigmoid: c underflows to exactly 0.
        model.params.item_bias[0] = 2000.0
        model.params.item_bias[1] = -2000.0
        reg = RegWeights(bias=0.1, latent=0.2, user_visual=0.2,
                         visual_bias=0.0, segments=0.3, category_bias=0.0)
        config = TrainConfig(learning_rate=0.5, reg=reg)
        p = model.params
        gu0 = p.user_latent[0].copy()
        bias0 = p.item_bias[0]
        seg0 = p.segments.backing.copy()
        trainer = Trainer(model, config)
        trainer.step(0, 0, 1)
        assert p.item_bias[0] == pytest.approx(bias0 * (1 - 0.5 * 0.1))
        assert np.allclose(p.user_latent[0], gu0 * (1 - 0.5 * 0.2))
        touched = {blk for blk, _, _ in
                   p.segments.assignment.blocks_for_leaf(int(model.item_leaf[0]))}
        touched |= {blk for blk, _, _ in
                    p.segments.assignment.blocks_for_leaf(int(model.item_leaf[1]))}
        for blk in range(p.segments.n_blocks):
            view = p.segments.blocks[blk]
            start = sum(b.shape[0] for b in p.segments.blocks[:blk])
            ref = seg0[start:start + view.shape[0]]
            if blk in touched:
                assert np.allclose(view, ref * (1 - 0.5 * 0.3))
            else:
                assert np.array_equal(view, ref)

    def test_finite_difference_all_groups(self):
        model = tiny_model(rng_seed=3)
        corpus = model.corpus
        rng = np.random.default_rng(5)
        checked = 0
        for _ in range(8):
            u = int(rng.integers(corpus.n_users))
            i, j = (int(x) for x in rng.choice(corpus.n_items, 2, replace=False))

            def objective():
                return log_sigmoid(model.score_margin(u, i, j))

            deltas = analytic_gradients(
                model, (u, i, j),
                ["item_bias", "item_latent", "user_latent", "user_visual",
                 "visual_bias", "segments"])
            spots = (
                [("item_bias", (i,)), ("item_bias", (j,))]
                + [("user_latent", (u, k)) for k in range(2)]
                + [("item_latent", (i, 0)), ("item_latent", (j, 1))]
                + [("user_visual", (u, k)) for k in range(3)]
                + [("visual_bias", (k,)) for k in range(4)]
            )
            # analytic_gradients restored model.params; fetch live references.
            arrays = model.params.arrays()
            for r in range(arrays["segments"].shape[0]):
                spots.append(("segments", (r, int(rng.integers(4)))))
            for name, idx in spots:
                numeric = numeric_gradient(objective, arrays[name], idx)
                analytic = deltas[name][idx]
                if abs(numeric) < 1e-9 and abs(analytic) < 1e-9:
                    continue
                err = relative_error(analytic, numeric)
                assert err < 1e-4, (name, idx, analytic, numeric)
                checked += 1
        assert checked > 100

    def test_category_bias_gradient(self):
        model = tiny_model(rng_seed=6, use_category_bias=True)
        rng = np.random.default_rng(1)
        u, i, j = 0, 0, 4  # distinct leaves by construction (0 % 3 != 4 % 3)

        def objective():
            return log_sigmoid(model.score_margin(u, i, j))

        deltas = analytic_gradients(model, (u, i, j), ["category_bias"])
        arrays = model.params.arrays()
        for leaf in (int(model.item_leaf[i]), int(model.item_leaf[j])):
            numeric = numeric_gradient(objective, arrays["category_bias"], (leaf,))
            assert relative_error(deltas["category_bias"][leaf], numeric) < 1e-4

    def test_shared_leaf_category_bias_cancels(self):
        model = tiny_model(rng_seed=8, use_category_bias=True)
        cb0 = model.params.category_bias.copy()
        # Items 0 and 3 share leaf0.
        sgd_step(model, (0, 0, 3),
                 TrainConfig(learning_rate=0.5,
                             reg=RegWeights(category_bias=0.2)))
        leaf = int(model.item_leaf[0])
        assert model.params.category_bias[leaf] == pytest.approx(
            cb0[leaf] * (1 - 0.5 * 0.2))

    def test_monotone_local_improvement(self):
        model = tiny_model(rng_seed=9)
        rng = np.random.default_rng(2)
        config = TrainConfig(learning_rate=1e-6,
                             reg=RegWeights(0, 0, 0, 0, 0, 0))
        for _ in range(20):
            u = int(rng.integers(model.corpus.n_users))
            i, j = (int(x) for x in
                    rng.choice(model.corpus.n_items, 2, replace=False))
            before = log_sigmoid(model.score_margin(u, i, j))
            sgd_step(model, (u, i, j), config)
            after = log_sigmoid(model.score_margin(u, i, j))
            assert after > before

    def test_untouched_parameters_bit_identical(self):
        model = tiny_model(rng_seed=12)
        p = model.params
        before = {name: arr.copy() for name, arr in p.arrays().items()}
        u, i, j = 1, 0, 5
        sgd_step(model, (u, i, j), TrainConfig(learning_rate=0.1))
        leaves = {int(model.item_leaf[i]), int(model.item_leaf[j])}
        touched_blocks = set()
        for leaf in leaves:
            touched_blocks |= {blk for blk, _, _ in
                               p.segments.assignment.blocks_for_leaf(leaf)}
        for name, arr in p.arrays().items():
            ref = before[name]
            if name == "item_bias":
                mask = np.ones(len(arr), dtype=bool)
                mask[[i, j]] = False
                assert np.array_equal(arr[mask], ref[mask])
            elif name == "item_latent":
                mask = np.ones(arr.shape[0], dtype=bool)
                mask[[i, j]] = False
                assert np.array_equal(arr[mask], ref[mask])
            elif name in ("user_latent", "user_visual"):
                mask = np.ones(arr.shape[0], dtype=bool)
                mask[u] = False
                assert np.array_equal(arr[mask], ref[mask])
            elif name == "segments":
                offset = 0
                for blk, view in enumerate(p.segments.blocks):
                    rows = view.shape[0]
                    if blk not in touched_blocks:
                        assert np.array_equal(
                            view, ref[offset:offset + rows]), blk
                    offset += rows

    def test_non_finite_margin_aborts(self):
        model = tiny_model()
        model.params.item_bias[0] = np.inf
        with pytest.raises(NonFiniteUpdate):
            sgd_step(model, (0, 0, 1), TrainConfig(learning_rate=0.1))

    def test_regularization_only_fixpoint(self):
        model = tiny_model(use_visual_bias=False, n_latent=2)
        model.params.item_bias[0] = 3000.0
        model.params.item_bias[1] = -3000.0
        reg = RegWeights(bias=0.0, latent=0.5, user_visual=0.5,
                         visual_bias=0.0, segments=0.5, category_bias=0.0)
        config = TrainConfig(learning_rate=0.2, reg=reg)
        trainer = Trainer(model, config)
        norms = []
        for _ in range(25):
            trainer.step(0, 0, 1)
            norms.append(float(np.linalg.norm(model.params.user_latent[0])))
        ratios = [norms[k + 1] / norms[k] for k in range(len(norms) - 1)]
        assert all(abs(r - 0.9) < 1e-9 for r in ratios)  # 1 - 0.2 * 0.5


class TestTrain:
    def test_empty_corpus(self):
        model = tiny_model()
        empty = TrainingCorpus(
            train_pos=[np.array([], dtype=np.int64)],
            full_pos=[np.array([], dtype=np.int64)],
            users=np.array([0]),
            n_items=model.corpus.n_items,
        )
        with pytest.raises(EmptyCorpus):
            train(model, empty, TrainConfig(iterations=1))

    def test_seed_determinism_bitwise(self):
        cfg = SynthConfig(n_users=25, n_items=50, feature_dim=6,
                          branching=(3,), n_positives=4,
                          planted_scheme=(2, 1), rng_seed=4)
        snapshots = []
        for _ in range(2):
            corpus, _ = make_corpus(cfg)
            tc, split = split_leave_one_out(corpus, 2)
            model = PreferenceModel.create(
                make_baseline(KIND_HVBPR, total_dims=6, visual_dims=3,
                              scheme=AllocationScheme((2, 1)), rng_seed=8),
                corpus)
            train(model, tc, TrainConfig(iterations=3, rng_seed=21))
            snapshots.append({k: v.copy()
                              for k, v in model.params.arrays().items()})
        for name in snapshots[0]:
            assert np.array_equal(snapshots[0][name], snapshots[1][name]), name

    def test_history_and_progress_sink(self):
        cfg = SynthConfig(n_users=20, n_items=40, feature_dim=5,
                          branching=(2,), n_positives=4,
                          planted_scheme=(2,), rng_seed=3)
        corpus, _ = make_corpus(cfg)
        tc, split = split_leave_one_out(corpus, 1)
        model = PreferenceModel.create(
            make_baseline(KIND_VBPR, total_dims=4, visual_dims=2, rng_seed=0),
            corpus)
        seen = []
        result = train(model, tc, TrainConfig(iterations=3, rng_seed=5),
                       split=split, progress=seen.append)
        assert [s.epoch for s in result.history] == [1, 2, 3]
        assert len(seen) == 3
        assert all(s.val_auc is not None for s in result.history)
        assert result.best_epoch is not None
        assert result.best_params is not None

    def test_early_stopping_patience(self):
        cfg = SynthConfig(n_users=20, n_items=40, feature_dim=5,
                          branching=(2,), n_positives=4,
                          planted_scheme=(2,), rng_seed=3)
        corpus, _ = make_corpus(cfg)
        tc, split = split_leave_one_out(corpus, 1)
        model = PreferenceModel.create(
            make_baseline(KIND_VBPR, total_dims=4, visual_dims=2, rng_seed=0),
            corpus)
        result = train(model, tc,
                       TrainConfig(iterations=50, rng_seed=5, patience=2),
                       split=split)
        assert len(result.history) < 50
        last = result.history[-1].epoch
        assert last - result.best_epoch >= 2

    def test_separable_corpus_reaches_high_training_auc(self):
        cfg = SynthConfig(n_users=60, n_items=120, feature_dim=16,
                          branching=(4,), n_positives=6,
                          planted_scheme=(4,), temperature=0.05,
                          center_scale=0.0, unit_norm_items=True, rng_seed=9)
        corpus, _ = make_corpus(cfg)
        tc, split = split_leave_one_out(corpus, 3)
        model = PreferenceModel.create(
            make_baseline(KIND_VBPR, total_dims=8, visual_dims=4, rng_seed=1),
            corpus)
        train(model, tc, TrainConfig(learning_rate=0.05, iterations=30,
                                     rng_seed=17))
        # Training AUC: held-out target replaced by a seeded train positive.
        rng = np.random.default_rng(0)
        targets = np.array([int(rng.choice(tc.train_pos[u]))
                            for u in range(corpus.n_users)])
        fake_split = EvalSplit(val_item=np.full(corpus.n_users, -1),
                               test_item=targets,
                               excluded_users=np.array([], dtype=np.int64))
        result = auc(model, corpus, fake_split)
        assert result.auc > 0.9


class TestCostProbe:
    def test_probe_reports_positive_timings(self):
        rows = per_triple_cost_probe(
            [{"n_latent": 2, "n_visual": 2, "feature_dim": 16}],
            n_steps=40)
        assert rows[0]["seconds_per_step"] > 0
        assert rows[0]["feature_dim"] == 16

    def test_mf_much_cheaper_than_visual(self):
        rows = per_triple_cost_probe(
            [{"n_latent": 10, "n_visual": 0, "feature_dim": 4096},
             {"n_latent": 10, "n_visual": 10, "feature_dim": 4096}],
            n_steps=100)
        assert rows[0]["seconds_per_step"] < 0.5 * rows[1]["seconds_per_step"]
