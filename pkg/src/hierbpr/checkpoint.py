"""Single-file model checkpoints.

Layout: 8-byte magic, little-endian u64 header length, a JSON header (config,
id maps, seeds, array directory), then raw little-endian array bytes. The
writer is fully deterministic (same model, same bytes), which is what makes
rerun-identity checks possible; zip-based containers embed timestamps.

Checkpoints carry the raw parameter blocks plus the frozen per-item
projections and visual-bias scores, so ranking and evaluation need only the
checkpoint and a feedback file, not the original feature matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionOutOfRange, ParseError
from .evaluation import EvalSplit
from .hierarchy import CategoryHierarchy, assign_layers, build_hierarchy
from .model import (
    KIND_RAND,
    ItemTable,
    ModelConfig,
    ModelParams,
    PreferenceModel,
)
from .embedding import SegmentStore

MAGIC = b"HBPRCKP1"
VERSION = 1

_DTYPES = {"float64": "<f8", "int64": "<i8"}


def _hierarchy_to_parts(h: CategoryHierarchy, item_ids) -> tuple[list, np.ndarray]:
    return list(h.node_ids), np.asarray(h.parent, dtype=np.int64)


def _hierarchy_from_parts(node_ids, parent, item_ids, item_leaf) -> CategoryHierarchy:
    edges = [(node_ids[k], node_ids[int(p)])
             for k, p in enumerate(parent) if p >= 0]
    leaves = {item_ids[k]: node_ids[int(leaf)]
              for k, leaf in enumerate(item_leaf)}
    return build_hierarchy(edges, leaves)


def save_checkpoint(
    path,
    model: PreferenceModel,
    split: EvalSplit | None = None,
    seeds: dict | None = None,
    item_train_count: np.ndarray | None = None,
) -> None:
    """Serialize params, id maps, hierarchy, and frozen item tables."""
    corpus = model.corpus
    table = model.item_table()
    p = model.params

    arrays: dict[str, np.ndarray] = {
        "parent": np.asarray(model.corpus.hierarchy.parent, dtype=np.int64),
        "item_leaf": np.asarray(corpus.item_leaf, dtype=np.int64),
        "item_bias": p.item_bias,
        "item_latent": p.item_latent,
        "user_latent": p.user_latent,
        "user_visual": p.user_visual,
        "visual_bias": p.visual_bias,
        "item_theta": table.theta,
        "item_base": table.base,
    }
    if p.segments is not None:
        arrays["segments"] = p.segments.backing
    if p.category_bias is not None:
        arrays["category_bias"] = p.category_bias
    if split is not None:
        arrays["split_val"] = np.asarray(split.val_item, dtype=np.int64)
        arrays["split_test"] = np.asarray(split.test_item, dtype=np.int64)
    if item_train_count is not None:
        arrays["item_train_count"] = np.asarray(item_train_count, dtype=np.int64)

    directory = []
    offset = 0
    payload = []
    for name in sorted(arrays):
        arr = arrays[name]
        kind = "int64" if arr.dtype.kind == "i" else "float64"
        arr = np.ascontiguousarray(arr).astype(_DTYPES[kind], copy=False)
        blob = arr.tobytes(order="C")
        directory.append({
            "name": name,
            "dtype": kind,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(blob),
        })
        payload.append(blob)
        offset += len(blob)

    header = {
        "version": VERSION,
        "config": model.config.to_dict(),
        "feature_dim": corpus.feature_dim,
        "user_ids": list(corpus.user_ids),
        "item_ids": list(corpus.item_ids),
        "node_ids": list(corpus.hierarchy.node_ids),
        "seeds": seeds,
        "arrays": directory,
    }
    header_bytes = json.dumps(header, sort_keys=True,
                              separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header_bytes).to_bytes(8, "little"))
        fh.write(header_bytes)
        for blob in payload:
            fh.write(blob)


@dataclass
class CheckpointBundle:
    """Everything a checkpoint restores, plus the frozen scoring view."""

    config: ModelConfig
    params: ModelParams
    hierarchy: CategoryHierarchy
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    item_leaf: np.ndarray
    item_theta: np.ndarray
    item_base: np.ndarray
    split: EvalSplit | None
    item_train_count: np.ndarray | None
    seeds: dict | None
    feature_dim: int

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def frozen_model(self) -> "FrozenModel":
        return FrozenModel(self)

    def to_model(self, corpus) -> PreferenceModel:
        """Rebind the restored parameters to a full corpus (features needed)."""
        if tuple(corpus.item_ids) != self.item_ids:
            raise ValueError("corpus item ids do not match the checkpoint")
        if tuple(corpus.user_ids) != self.user_ids:
            raise ValueError("corpus user ids do not match the checkpoint")
        assignment = (self.params.segments.assignment
                      if self.params.segments is not None else None)
        return PreferenceModel(self.config, corpus, self.params, assignment)

    def positives_from_pairs(self, pairs) -> tuple[list[np.ndarray], int]:
        """Map (user, item) id pairs onto the checkpoint's dense space."""
        user_index = {u: k for k, u in enumerate(self.user_ids)}
        item_index = {i: k for k, i in enumerate(self.item_ids)}
        sets: list[set[int]] = [set() for _ in self.user_ids]
        dropped = 0
        for u, i in pairs:
            ku = user_index.get(u)
            ki = item_index.get(i)
            if ku is None or ki is None:
                dropped += 1
                continue
            sets[ku].add(ki)
        return [np.array(sorted(s), dtype=np.int64) for s in sets], dropped


class FrozenModel:
    """Checkpoint-backed scorer: same surface evaluation needs, no features."""

    def __init__(self, bundle: CheckpointBundle):
        self.bundle = bundle
        self.config = bundle.config
        self._table = ItemTable(
            theta=bundle.item_theta,
            latent=bundle.params.item_latent,
            base=bundle.item_base,
            rand_seed=(bundle.config.rng_seed
                       if bundle.config.kind == KIND_RAND else None),
        )

    @property
    def n_items(self) -> int:
        return self.bundle.n_items

    @property
    def n_users(self) -> int:
        return self.bundle.n_users

    def item_table(self) -> ItemTable:
        return self._table

    def score_all(self, u: int, table: ItemTable | None = None) -> np.ndarray:
        table = table or self._table
        p = self.bundle.params
        return table.score_all(u, p.user_visual[u], p.user_latent[u])

    def rank_by_dimension(self, d: int, top_n: int,
                          category: int | None = None) -> list[tuple[int, float]]:
        theta = self.bundle.item_theta
        if not 0 <= d < theta.shape[1]:
            raise DimensionOutOfRange(
                f"dimension {d} outside [0, {theta.shape[1]})")
        candidates = np.arange(self.n_items)
        if category is not None:
            candidates = candidates[self.bundle.item_leaf[candidates] == category]
        col = theta[candidates, d]
        ids = self.bundle.item_ids
        order = sorted(range(len(candidates)),
                       key=lambda k: (-col[k], ids[candidates[k]]))
        return [(int(candidates[k]), float(col[k])) for k in order[:top_n]]


def load_checkpoint(path) -> CheckpointBundle:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ParseError(f"{path}: not a checkpoint (magic {magic!r})")
        header_len = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header["version"] != VERSION:
            raise ParseError(
                f"{path}: unsupported checkpoint version {header['version']}")
        payload = fh.read()

    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        start = entry["offset"]
        blob = payload[start:start + entry["nbytes"]]
        arr = np.frombuffer(blob, dtype=_DTYPES[entry["dtype"]]).copy()
        arrays[entry["name"]] = arr.reshape(entry["shape"])

    config = ModelConfig.from_dict(header["config"])
    item_ids = tuple(header["item_ids"])
    user_ids = tuple(header["user_ids"])
    hierarchy = _hierarchy_from_parts(header["node_ids"], arrays["parent"],
                                      item_ids, arrays["item_leaf"])

    segments = None
    if "segments" in arrays:
        assignment = assign_layers(hierarchy, config.scheme)
        segments = SegmentStore(assignment, header["feature_dim"],
                                backing=arrays["segments"])
    params = ModelParams(
        item_bias=arrays["item_bias"],
        item_latent=arrays["item_latent"],
        user_latent=arrays["user_latent"],
        user_visual=arrays["user_visual"],
        visual_bias=arrays["visual_bias"],
        segments=segments,
        category_bias=arrays.get("category_bias"),
    )
    split = None
    if "split_val" in arrays:
        split = EvalSplit(
            val_item=arrays["split_val"],
            test_item=arrays["split_test"],
            excluded_users=np.flatnonzero(arrays["split_test"] < 0),
        )
    return CheckpointBundle(
        config=config,
        params=params,
        hierarchy=hierarchy,
        user_ids=user_ids,
        item_ids=item_ids,
        item_leaf=arrays["item_leaf"],
        item_theta=arrays["item_theta"],
        item_base=arrays["item_base"],
        split=split,
        item_train_count=arrays.get("item_train_count"),
        seeds=header.get("seeds"),
        feature_dim=header["feature_dim"],
    )
