"""The preference predictor and the baseline configurations it subsumes.

A score is the inner product of concatenated user/item factors plus item
offsets:

    score(u, i) = <theta_u, theta_i> + <gamma_u, gamma_i>
                  + <visual_bias, f_i> + item_bias_i (+ category_bias[leaf_i])

where theta_i is the hierarchical projection of the item's raw features.
Baselines are configurations of the same parameter system: BPR-MF drops the
visual half, VBPR allocates all visual rows at the root, VBPR-C adds a
per-leaf bias, and HVBPR spreads rows over several layers. RAND bypasses
parameters entirely with a seeded hash ranking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import FeatureStore, SegmentStore
from .errors import (
    DimensionOutOfRange,
    InvalidSchemeForBaseline,
    UnknownItem,
    UnknownUser,
)
from .hierarchy import AllocationScheme, LayerAssignment, assign_layers

KIND_RAND = "RAND"
KIND_BPRMF = "BPR-MF"
KIND_VBPR = "VBPR"
KIND_VBPRC = "VBPR-C"
KIND_HVBPR = "HVBPR"

KINDS = (KIND_RAND, KIND_BPRMF, KIND_VBPR, KIND_VBPRC, KIND_HVBPR)

LATENT_INIT_SCALE = 0.05


@dataclass(frozen=True)
class ModelConfig:
    """Dimensions, allocation scheme, and flags for one predictor."""

    n_latent: int
    n_visual: int
    scheme: AllocationScheme
    use_visual_bias: bool = True
    use_category_bias: bool = False
    rng_seed: int = 0
    kind: str = KIND_HVBPR

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.scheme.total != self.n_visual:
            raise ValueError(
                f"scheme {self.scheme} allocates {self.scheme.total} rows "
                f"but n_visual is {self.n_visual}")
        if self.kind != KIND_RAND and self.n_latent + self.n_visual < 1:
            raise ValueError("model needs at least one rating dimension")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_latent": self.n_latent,
            "n_visual": self.n_visual,
            "scheme": list(self.scheme.per_layer),
            "use_visual_bias": self.use_visual_bias,
            "use_category_bias": self.use_category_bias,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            n_latent=int(d["n_latent"]),
            n_visual=int(d["n_visual"]),
            scheme=AllocationScheme(tuple(d["scheme"])),
            use_visual_bias=bool(d["use_visual_bias"]),
            use_category_bias=bool(d["use_category_bias"]),
            rng_seed=int(d["rng_seed"]),
            kind=str(d["kind"]),
        )


def make_baseline(
    kind: str,
    *,
    total_dims: int = 20,
    visual_dims: int = 10,
    scheme: AllocationScheme | None = None,
    rng_seed: int = 0,
) -> ModelConfig:
    """Express a named baseline as a configuration.

    ``total_dims`` is the overall rating-dimension budget; visually-aware
    kinds split it into ``total_dims - visual_dims`` latent plus
    ``visual_dims`` visual rows. VBPR and VBPR-C force an all-root scheme;
    HVBPR requires an explicit (usually multi-layer) scheme whose total
    matches ``visual_dims``.
    """
    empty = AllocationScheme(())
    if kind == KIND_RAND:
        return ModelConfig(0, 0, empty, use_visual_bias=False,
                           rng_seed=rng_seed, kind=kind)
    if kind == KIND_BPRMF:
        return ModelConfig(total_dims, 0, empty, use_visual_bias=False,
                           rng_seed=rng_seed, kind=kind)
    if kind in (KIND_VBPR, KIND_VBPRC):
        if scheme is not None and scheme.depth_used > 1:
            raise InvalidSchemeForBaseline(
                f"{kind} uses a single root segment, got scheme {scheme}")
        root_scheme = AllocationScheme((visual_dims,))
        return ModelConfig(
            total_dims - visual_dims, visual_dims, root_scheme,
            use_visual_bias=True, use_category_bias=(kind == KIND_VBPRC),
            rng_seed=rng_seed, kind=kind)
    if kind == KIND_HVBPR:
        if scheme is None:
            raise InvalidSchemeForBaseline("HVBPR needs an allocation scheme")
        if scheme.total != visual_dims:
            raise InvalidSchemeForBaseline(
                f"scheme {scheme} allocates {scheme.total} rows, "
                f"expected {visual_dims}")
        return ModelConfig(total_dims - visual_dims, visual_dims, scheme,
                           use_visual_bias=True, rng_seed=rng_seed, kind=kind)
    raise ValueError(f"unknown baseline kind {kind!r}")


@dataclass
class ModelParams:
    """All learnable arrays. Shapes follow the owning ModelConfig."""

    item_bias: np.ndarray
    item_latent: np.ndarray
    user_latent: np.ndarray
    user_visual: np.ndarray
    visual_bias: np.ndarray
    segments: SegmentStore | None
    category_bias: np.ndarray | None

    def copy(self) -> "ModelParams":
        return ModelParams(
            item_bias=self.item_bias.copy(),
            item_latent=self.item_latent.copy(),
            user_latent=self.user_latent.copy(),
            user_visual=self.user_visual.copy(),
            visual_bias=self.visual_bias.copy(),
            segments=self.segments.copy() if self.segments is not None else None,
            category_bias=(self.category_bias.copy()
                           if self.category_bias is not None else None),
        )

    def arrays(self) -> dict[str, np.ndarray]:
        out = {
            "item_bias": self.item_bias,
            "item_latent": self.item_latent,
            "user_latent": self.user_latent,
            "user_visual": self.user_visual,
            "visual_bias": self.visual_bias,
        }
        if self.segments is not None:
            out["segments"] = self.segments.backing
        if self.category_bias is not None:
            out["category_bias"] = self.category_bias
        return out

    def check_finite(self) -> None:
        for name, arr in self.arrays().items():
            if arr.size and not np.isfinite(arr).all():
                raise ValueError(f"non-finite values in {name}")


def init_params(
    config: ModelConfig,
    n_users: int,
    n_items: int,
    n_nodes: int,
    feature_dim: int,
    assignment: LayerAssignment | None,
) -> ModelParams:
    """Seeded initialization.

    Draw order is fixed (user latent, item latent, user visual, segments) so
    identical configs always produce identical parameters. Latent factors are
    uniform in +-0.05, segments uniform in +-1/sqrt(F); biases start at zero.
    """
    rng = np.random.default_rng(config.rng_seed)
    k, kp = config.n_latent, config.n_visual
    user_latent = rng.uniform(-LATENT_INIT_SCALE, LATENT_INIT_SCALE, (n_users, k))
    item_latent = rng.uniform(-LATENT_INIT_SCALE, LATENT_INIT_SCALE, (n_items, k))
    user_visual = rng.uniform(-LATENT_INIT_SCALE, LATENT_INIT_SCALE, (n_users, kp))
    segments = None
    if kp > 0:
        if assignment is None:
            raise ValueError("visual dimensions need a layer assignment")
        segments = SegmentStore.create(assignment, feature_dim, rng)
    return ModelParams(
        item_bias=np.zeros(n_items),
        item_latent=item_latent,
        user_latent=user_latent,
        user_visual=user_visual,
        visual_bias=np.zeros(feature_dim),
        segments=segments,
        category_bias=np.zeros(n_nodes) if config.use_category_bias else None,
    )


# ------------------------------------------------------------- RAND scoring

_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _splitmix(x: np.ndarray) -> np.ndarray:
    x = (x + _GOLDEN).astype(np.uint64)
    x ^= x >> np.uint64(30)
    x *= _MIX1
    x ^= x >> np.uint64(27)
    x *= _MIX2
    x ^= x >> np.uint64(31)
    return x


def rand_scores(seed: int, user: int, n_items: int) -> np.ndarray:
    """Deterministic pseudo-random scores in [0, 1) for one user's row."""
    base = np.uint64((seed & 0xFFFFFFFF) ^ (user << 32))
    with np.errstate(over="ignore"):
        mixed = _splitmix(np.arange(n_items, dtype=np.uint64) ^ _splitmix(
            np.array([base], dtype=np.uint64))[0])
    return mixed.astype(np.float64) / float(2**64)


# ----------------------------------------------------------------- the model

class ItemTable:
    """Frozen per-item quantities for fast whole-catalog scoring.

    ``base`` folds every user-independent additive term (item bias, visual
    bias score, category bias) into one vector.
    """

    def __init__(self, theta: np.ndarray, latent: np.ndarray, base: np.ndarray,
                 rand_seed: int | None = None):
        self.theta = theta
        self.latent = latent
        self.base = base
        self.rand_seed = rand_seed

    @property
    def n_items(self) -> int:
        return len(self.base)

    def score_all(self, user: int, user_visual: np.ndarray,
                  user_latent: np.ndarray) -> np.ndarray:
        if self.rand_seed is not None:
            return rand_scores(self.rand_seed, user, self.n_items)
        out = self.base.copy()
        if self.theta.shape[1]:
            out += self.theta @ user_visual
        if self.latent.shape[1]:
            out += self.latent @ user_latent
        return out


class PreferenceModel:
    """Parameters plus the corpus-side stores needed to score pairs."""

    def __init__(self, config: ModelConfig, corpus, params: ModelParams,
                 assignment: LayerAssignment | None):
        self.config = config
        self.corpus = corpus
        self.params = params
        self.assignment = assignment
        self.features: FeatureStore = corpus.features
        self.item_leaf: np.ndarray = corpus.item_leaf

    @classmethod
    def create(cls, config: ModelConfig, corpus) -> "PreferenceModel":
        """Initialize parameters for ``corpus`` under ``config``."""
        assignment = None
        if config.n_visual > 0:
            assignment = assign_layers(corpus.hierarchy, config.scheme)
        params = init_params(config, corpus.n_users, corpus.n_items,
                             corpus.hierarchy.n_nodes, corpus.feature_dim,
                             assignment)
        return cls(config, corpus, params, assignment)

    # -- bounds ------------------------------------------------------------

    @property
    def n_users(self) -> int:
        return self.params.user_latent.shape[0]

    @property
    def n_items(self) -> int:
        return self.params.item_bias.shape[0]

    def _check_user(self, u: int) -> None:
        if not 0 <= u < self.n_users:
            raise UnknownUser(f"user index {u} out of range")

    def _check_item(self, i: int) -> None:
        if not 0 <= i < self.n_items:
            raise UnknownItem(f"item index {i} out of range")

    # -- scoring -----------------------------------------------------------

    def project(self, i: int) -> np.ndarray:
        """Visual projection theta_i of a registered item."""
        self._check_item(i)
        if self.params.segments is None:
            return np.zeros(0)
        return self.params.segments.project(
            self.features.vector(i), int(self.item_leaf[i]))

    def dimension_score(self, i: int, d: int) -> float:
        self._check_item(i)
        if self.params.segments is None:
            raise DimensionOutOfRange("model has no visual dimensions")
        return self.params.segments.dimension_score(
            self.features.vector(i), int(self.item_leaf[i]), d)

    def score(self, u: int, i: int) -> float:
        self._check_user(u)
        self._check_item(i)
        if self.config.kind == KIND_RAND:
            return float(rand_scores(self.config.rng_seed, u, self.n_items)[i])
        p = self.params
        total = float(p.item_bias[i])
        if self.config.n_latent:
            total += float(np.dot(p.user_latent[u], p.item_latent[i]))
        if self.config.n_visual:
            total += float(np.dot(p.user_visual[u], self.project(i)))
        if self.config.use_visual_bias:
            total += float(np.dot(p.visual_bias, self.features.vector(i)))
        if self.config.use_category_bias:
            total += float(p.category_bias[self.item_leaf[i]])
        return total

    def score_margin(self, u: int, i: int, j: int) -> float:
        """score(u, i) - score(u, j) with shared user terms factored."""
        self._check_user(u)
        self._check_item(i)
        self._check_item(j)
        if i == j:
            raise ValueError("margin needs two distinct items")
        if self.config.kind == KIND_RAND:
            row = rand_scores(self.config.rng_seed, u, self.n_items)
            return float(row[i] - row[j])
        p = self.params
        total = float(p.item_bias[i] - p.item_bias[j])
        if self.config.n_latent:
            total += float(np.dot(p.user_latent[u],
                                  p.item_latent[i] - p.item_latent[j]))
        if self.config.n_visual:
            total += float(np.dot(p.user_visual[u], self.project(i) - self.project(j)))
        if self.config.use_visual_bias:
            total += float(np.dot(p.visual_bias,
                                  self.features.vector(i) - self.features.vector(j)))
        if self.config.use_category_bias:
            total += float(p.category_bias[self.item_leaf[i]]
                           - p.category_bias[self.item_leaf[j]])
        return total

    # -- frozen-model helpers ------------------------------------------------

    def item_table(self) -> ItemTable:
        """Precompute per-item projections and offsets for evaluation."""
        p = self.params
        if self.config.kind == KIND_RAND:
            zeros = np.zeros((self.n_items, 0))
            return ItemTable(zeros, zeros, np.zeros(self.n_items),
                             rand_seed=self.config.rng_seed)
        if p.segments is not None:
            theta = p.segments.project_all(self.features.matrix, self.item_leaf)
        else:
            theta = np.zeros((self.n_items, 0))
        base = p.item_bias.copy()
        if self.config.use_visual_bias:
            base += self.features.matrix @ p.visual_bias
        if self.config.use_category_bias:
            base += p.category_bias[self.item_leaf]
        return ItemTable(theta, p.item_latent, base)

    def score_all(self, u: int, table: ItemTable | None = None) -> np.ndarray:
        self._check_user(u)
        if table is None:
            table = self.item_table()
        return table.score_all(u, self.params.user_visual[u],
                               self.params.user_latent[u])

    def rank_by_dimension(self, d: int, top_n: int,
                          candidates: np.ndarray | None = None,
                          category: int | None = None) -> list[tuple[int, float]]:
        """Top items by one visual dimension, ties broken by item id.

        ``category`` restricts candidates to items of one leaf node.
        """
        if self.params.segments is None or not 0 <= d < self.config.n_visual:
            raise DimensionOutOfRange(
                f"dimension {d} outside [0, {self.config.n_visual})")
        if candidates is None:
            candidates = np.arange(self.n_items)
        else:
            candidates = np.asarray(candidates, dtype=np.int64)
        if category is not None:
            candidates = candidates[self.item_leaf[candidates] == category]
        theta_col = self.params.segments.project_all(
            self.features.matrix[candidates], self.item_leaf[candidates])[:, d]
        ids = self.corpus.item_ids
        order = sorted(
            range(len(candidates)),
            key=lambda k: (-theta_col[k], ids[candidates[k]]),
        )
        return [(int(candidates[k]), float(theta_col[k])) for k in order[:top_n]]
