"""Pairwise ranking optimization via stochastic gradient ascent.

Each step samples a user plus a positive/non-positive item pair, then nudges
every touched parameter along the gradient of ln sigmoid(margin) with L2
shrinkage applied to touched parameters only (full-parameter decay per step
would break the per-triple cost bound). One epoch is as many sampled triples
as there are training interactions.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import evaluation
from .errors import EmptyCorpus, ExhaustedRejection, NonFiniteUpdate
from .ingestion import TrainingCorpus
from .model import KIND_RAND, ModelParams, PreferenceModel

_REJECTION_LIMIT = 1000
_USER_RESAMPLE_LIMIT = 100


@dataclass(frozen=True)
class RegWeights:
    """Per-group L2 strengths. Groups follow the parameter families."""

    bias: float = 0.01
    latent: float = 0.01
    user_visual: float = 0.01
    visual_bias: float = 0.0
    segments: float = 0.0
    category_bias: float = 0.01

    def __post_init__(self):
        for name in ("bias", "latent", "user_visual", "visual_bias",
                     "segments", "category_bias"):
            if getattr(self, name) < 0:
                raise ValueError(f"negative regularization for {name}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    reg: RegWeights = field(default_factory=RegWeights)
    iterations: int = 20
    rng_seed: int = 0
    patience: int | None = None

    def __post_init__(self):
        # A zero rate is a legal no-op step (handy for tests); negative is not.
        if self.learning_rate < 0:
            raise ValueError("learning rate must not be negative")
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1 when set")


@dataclass
class EpochStats:
    epoch: int
    val_auc: float | None
    train_loss: float
    seconds: float


@dataclass
class TrainResult:
    params: ModelParams
    best_params: ModelParams | None
    best_epoch: int | None
    best_val_auc: float | None
    history: list[EpochStats]


def _sigmoid(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _softplus(x: float) -> float:
    # log(1 + e^x), overflow-safe
    if x > 35.0:
        return x
    if x < -35.0:
        return math.exp(x)
    return math.log1p(math.exp(x))


def sample_triple(corpus: TrainingCorpus, rng: np.random.Generator
                  ) -> tuple[int, int, int]:
    """Uniform user, uniform training positive, rejection-sampled negative.

    The negative is drawn uniformly over all items and rejected while it sits
    in the user's full positive set (held-out items included). A user whose
    positives blanket the catalog is skipped and another drawn; if that keeps
    failing the corpus is unusable.
    """
    n_users = len(corpus.users)
    for _ in range(_USER_RESAMPLE_LIMIT):
        u = int(corpus.users[rng.integers(n_users)])
        pos = corpus.train_pos[u]
        i = int(pos[rng.integers(len(pos))])
        full = corpus.full_sets[u]
        for _ in range(_REJECTION_LIMIT):
            j = int(rng.integers(corpus.n_items))
            if j not in full:
                return u, i, j
    raise ExhaustedRejection(
        "could not sample a non-positive item for any drawn user")


class Trainer:
    """Owns the scratch buffers and applies single-triple updates in place.

    All partial derivatives are evaluated at the pre-step parameter values;
    the user vectors are snapshotted before mutation so the segment and item
    updates see the old state.
    """

    def __init__(self, model: PreferenceModel, config: TrainConfig):
        if model.config.kind == KIND_RAND:
            raise ValueError("the random baseline has nothing to train")
        self.model = model
        self.config = config
        p = model.params
        self.n_latent = model.config.n_latent
        self.n_visual = model.config.n_visual
        self.use_vb = model.config.use_visual_bias
        self.use_cb = model.config.use_category_bias
        self.item_bias = p.item_bias
        self.item_latent = p.item_latent
        self.user_latent = p.user_latent
        self.user_visual = p.user_visual
        self.visual_bias = p.visual_bias
        self.category_bias = p.category_bias
        self.segments = p.segments
        self.features = model.features.matrix
        self.leaves = model.item_leaf
        self.lr = config.learning_rate
        r = config.reg
        self.shrink_bias = 1.0 - self.lr * r.bias
        self.shrink_latent = 1.0 - self.lr * r.latent
        self.shrink_uv = 1.0 - self.lr * r.user_visual
        self.shrink_vb = 1.0 - self.lr * r.visual_bias
        self.shrink_cb = 1.0 - self.lr * r.category_bias
        self.seg_reg = r.segments
        feat_dim = model.features.feature_dim
        self._fd = np.empty(feat_dim)
        self._ti = np.empty(self.n_visual)
        self._tj = np.empty(self.n_visual)
        self._td = np.empty(self.n_visual)
        self._tu_old = np.empty(self.n_visual)
        self._su = np.empty(self.n_visual)
        self._gd = np.empty(self.n_latent)
        self._gu_old = np.empty(self.n_latent)
        max_rows = 0
        if self.segments is not None:
            max_rows = max((b.shape[0] for b in self.segments.blocks), default=0)
        self._scratch = np.empty((max_rows, feat_dim))
        # Per-leaf path resolved to (block array, theta range) once.
        self._paths: dict[int, tuple] = {}

    def _path(self, leaf: int) -> tuple:
        path = self._paths.get(leaf)
        if path is None:
            path = tuple(
                (self.segments.blocks[blk], blk, start, stop)
                for blk, start, stop in
                self.segments.assignment.blocks_for_leaf(leaf))
            self._paths[leaf] = path
        return path

    def margin(self, u: int, i: int, j: int) -> float:
        """x_ui - x_uj using the scratch buffers (leaves them populated)."""
        m = self.item_bias[i] - self.item_bias[j]
        if self.n_latent:
            np.subtract(self.item_latent[i], self.item_latent[j], out=self._gd)
            m += self.user_latent[u] @ self._gd
        if self.n_visual:
            features = self.features
            ti, tj = self._ti, self._tj
            for block, _, start, stop in self._path(int(self.leaves[i])):
                np.matmul(block, features[i], out=ti[start:stop])
            for block, _, start, stop in self._path(int(self.leaves[j])):
                np.matmul(block, features[j], out=tj[start:stop])
            np.subtract(ti, tj, out=self._td)
            m += self.user_visual[u] @ self._td
        if self.use_vb:
            np.subtract(self.features[i], self.features[j], out=self._fd)
            m += self.visual_bias @ self._fd
        if self.use_cb:
            m += (self.category_bias[self.leaves[i]]
                  - self.category_bias[self.leaves[j]])
        return float(m)

    def step(self, u: int, i: int, j: int) -> float:
        """One ascent step on ln sigmoid(margin); returns the step's loss."""
        m = self.margin(u, i, j)
        if not math.isfinite(m):
            raise NonFiniteUpdate(
                f"margin for triple ({u}, {i}, {j}) is {m}")
        c = _sigmoid(-m)
        lr = self.lr
        ac = lr * c

        ib = self.item_bias
        ib[i] = ib[i] * self.shrink_bias + ac
        ib[j] = ib[j] * self.shrink_bias - ac

        if self.n_latent:
            gu = self.user_latent[u]
            np.copyto(self._gu_old, gu)
            gu *= self.shrink_latent
            gu += ac * self._gd          # _gd = gamma_i - gamma_j from margin()
            gi = self.item_latent[i]
            gi *= self.shrink_latent
            gi += ac * self._gu_old
            gj = self.item_latent[j]
            gj *= self.shrink_latent
            gj -= ac * self._gu_old

        if self.n_visual:
            tu = self.user_visual[u]
            np.copyto(self._tu_old, tu)
            tu *= self.shrink_uv
            tu += ac * self._td          # _td = theta_i - theta_j from margin()
            path_i = self._path(int(self.leaves[i]))
            path_j = self._path(int(self.leaves[j]))
            if self.seg_reg:
                seg_shrink = 1.0 - lr * self.seg_reg
                touched = {blk: block for block, blk, _, _ in path_i}
                touched.update({blk: block for block, blk, _, _ in path_j})
                for blk in sorted(touched):
                    touched[blk] *= seg_shrink
            # Outer-product contributions, i before j, at the old theta_u.
            scratch = self._scratch
            su = self._su
            np.multiply(self._tu_old, ac, out=su)
            fi = self.features[i]
            for block, _, start, stop in path_i:
                work = scratch[: stop - start]
                np.multiply(su[start:stop, None], fi[None, :], out=work)
                block += work
            np.multiply(self._tu_old, -ac, out=su)
            fj = self.features[j]
            for block, _, start, stop in path_j:
                work = scratch[: stop - start]
                np.multiply(su[start:stop, None], fj[None, :], out=work)
                block += work

        if self.use_vb:
            vb = self.visual_bias
            vb *= self.shrink_vb
            self._fd *= ac               # _fd = f_i - f_j from margin()
            vb += self._fd

        if self.use_cb:
            cb = self.category_bias
            ci = self.leaves[i]
            cj = self.leaves[j]
            if ci != cj:
                cb[ci] = cb[ci] * self.shrink_cb + ac
                cb[cj] = cb[cj] * self.shrink_cb - ac
            else:
                cb[ci] = cb[ci] * self.shrink_cb

        return _softplus(-m)


def sgd_step(model: PreferenceModel, triple: tuple[int, int, int],
             config: TrainConfig) -> float:
    """Single-shot form of Trainer.step for tests and small experiments."""
    return Trainer(model, config).step(*triple)


def train(
    model: PreferenceModel,
    corpus: TrainingCorpus,
    config: TrainConfig,
    split=None,
    progress=None,
) -> TrainResult:
    """Run the SGD loop for ``config.iterations`` epochs.

    With a split supplied, validation AUC is computed after every epoch, the
    best-on-validation parameter snapshot is kept, and (if ``patience`` is
    set) training stops after that many epochs without improvement. The
    ``progress`` callable receives each EpochStats as it is produced.
    """
    if corpus.n_interactions == 0:
        raise EmptyCorpus("no training interactions")
    rng = np.random.default_rng(config.rng_seed)
    trainer = Trainer(model, config)
    steps_per_epoch = corpus.n_interactions

    history: list[EpochStats] = []
    best_params = None
    best_epoch = None
    best_auc = -1.0
    for epoch in range(1, config.iterations + 1):
        started = time.perf_counter()
        loss_sum = 0.0
        for _ in range(steps_per_epoch):
            u, i, j = sample_triple(corpus, rng)
            loss_sum += trainer.step(u, i, j)
        try:
            model.params.check_finite()
        except ValueError as exc:
            raise NonFiniteUpdate(f"after epoch {epoch}: {exc}") from None

        val_auc = None
        if split is not None:
            val_auc = evaluation.validation_auc(model, corpus, split)
            if val_auc > best_auc:
                best_auc = val_auc
                best_epoch = epoch
                best_params = model.params.copy()
        stats = EpochStats(epoch=epoch, val_auc=val_auc,
                           train_loss=loss_sum / steps_per_epoch,
                           seconds=time.perf_counter() - started)
        history.append(stats)
        if progress is not None:
            progress(stats)
        if (config.patience is not None and best_epoch is not None
                and epoch - best_epoch >= config.patience):
            break

    return TrainResult(
        params=model.params,
        best_params=best_params,
        best_epoch=best_epoch,
        best_val_auc=(best_auc if best_epoch is not None else None),
        history=history,
    )


def per_triple_cost_probe(
    configs: list[dict],
    n_steps: int = 300,
    n_items: int = 256,
    n_users: int = 64,
    seed: int = 0,
) -> list[dict]:
    """Measure mean wall time per SGD step across parameter scales.

    Each config dict supplies ``n_latent``, ``n_visual``, ``feature_dim``.
    Visual rows are split over a two-layer tree when there is more than one.
    Returns one record per config with ``seconds_per_step`` added.
    """
    from .synthdata import SynthConfig, make_corpus
    from .model import ModelConfig, PreferenceModel
    from .hierarchy import AllocationScheme

    results = []
    for cfg in configs:
        k = int(cfg.get("n_latent", 0))
        kp = int(cfg.get("n_visual", 0))
        feat = int(cfg["feature_dim"])
        if kp > 1:
            scheme = AllocationScheme((kp - kp // 2, kp // 2))
        elif kp == 1:
            scheme = AllocationScheme((1,))
        else:
            scheme = AllocationScheme(())
        synth = SynthConfig(
            n_users=n_users, n_items=n_items, feature_dim=feat,
            branching=(4,), n_positives=4, planted_scheme=(1,),
            rng_seed=seed)
        corpus, _ = make_corpus(synth)
        mconfig = ModelConfig(k, kp, scheme, use_visual_bias=True,
                              rng_seed=seed)
        model = PreferenceModel.create(mconfig, corpus)
        tconfig = TrainConfig(learning_rate=0.01, rng_seed=seed, iterations=1)
        trainer = Trainer(model, tconfig)
        rng = np.random.default_rng(seed)
        tc, _split = evaluation.split_leave_one_out(corpus, rng)
        triples = [sample_triple(tc, rng) for _ in range(n_steps)]
        for u, i, j in triples[: min(50, n_steps)]:
            trainer.step(u, i, j)          # warm-up: caches, code paths
        started = time.perf_counter()
        for u, i, j in triples:
            trainer.step(u, i, j)
        elapsed = time.perf_counter() - started
        record = dict(cfg)
        record["seconds_per_step"] = elapsed / n_steps
        results.append(record)
    return results
