"""Input parsing, id densification, and corpus assembly.

Three artifacts feed a run: a feedback TSV (``user<TAB>item``, extra columns
ignored), a feature file (binary with an ``.ids`` sidecar, or CSV
``item_id,v1,...,vF``), and two hierarchy files (``child<TAB>parent`` edges
plus ``item<TAB>leaf`` assignments). String ids are densified to contiguous
integers in sorted-id order, which makes loading independent of input line
order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedding import FeatureStore
from .errors import DimensionMismatch, EmptyCorpus, OrphanItem, ParseError
from .hierarchy import CategoryHierarchy, build_hierarchy

FEATURE_MAGIC = b"VFEATB01"


# ---------------------------------------------------------------- text files

def read_feedback(path) -> list[tuple[str, str]]:
    """Parse (user, item) pairs, dropping duplicates but keeping order."""
    pairs: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) < 2 or not cols[0] or not cols[1]:
                raise ParseError(f"{path}:{lineno}: expected user<TAB>item")
            pair = (cols[0], cols[1])
            if pair not in seen:
                seen.add(pair)
                pairs.append(pair)
    return pairs


def write_feedback(path, pairs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for user, item in pairs:
            fh.write(f"{user}\t{item}\n")


def read_hierarchy_edges(path) -> list[tuple[str, str]]:
    edges = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) < 2 or not cols[0] or not cols[1]:
                raise ParseError(f"{path}:{lineno}: expected child<TAB>parent")
            edges.append((cols[0], cols[1]))
    return edges


def write_hierarchy_edges(path, edges) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for child, parent in edges:
            fh.write(f"{child}\t{parent}\n")


def read_item_leaves(path) -> dict[str, str]:
    leaves: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) < 2 or not cols[0] or not cols[1]:
                raise ParseError(f"{path}:{lineno}: expected item<TAB>node")
            leaves[cols[0]] = cols[1]
    return leaves


def write_item_leaves(path, leaves: dict[str, str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item, node in leaves.items():
            fh.write(f"{item}\t{node}\n")


# ------------------------------------------------------------- feature files

def write_features_binary(path, item_ids, matrix) -> None:
    """Binary feature file plus ``<path>.ids`` sidecar (one id per line).

    Layout: magic(8) item_count(u64) F(u64), then per item id_index(u64)
    followed by F little-endian float32 values. id_index is the line number
    of the item's id in the sidecar.
    """
    matrix = np.asarray(matrix, dtype="<f4")
    n, feat = matrix.shape
    if n != len(item_ids):
        raise ValueError("item_ids and matrix row count differ")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<QQ", n, feat))
        for k in range(n):
            fh.write(struct.pack("<Q", k))
            fh.write(matrix[k].tobytes())
    with open(str(path) + ".ids", "w", encoding="utf-8") as fh:
        for item_id in item_ids:
            fh.write(f"{item_id}\n")


def write_features_csv(path, item_ids, matrix) -> None:
    matrix = np.asarray(matrix, dtype=np.float32)
    with open(path, "w", encoding="utf-8") as fh:
        for item_id, row in zip(item_ids, matrix):
            fh.write(item_id + "," + ",".join(repr(float(v)) for v in row) + "\n")


def _read_features_binary(path) -> tuple[list[str], np.ndarray]:
    ids_path = str(path) + ".ids"
    if not Path(ids_path).exists():
        raise ParseError(f"{path}: missing id sidecar {ids_path}")
    with open(ids_path, "r", encoding="utf-8") as fh:
        ids = [line.rstrip("\n") for line in fh if line.strip()]
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != FEATURE_MAGIC:
            raise ParseError(f"{path}: bad magic {magic!r}")
        n, feat = struct.unpack("<QQ", fh.read(16))
        if n != len(ids):
            raise ParseError(
                f"{path}: header says {n} items, sidecar lists {len(ids)}")
        matrix = np.empty((n, feat), dtype=np.float32)
        filled = np.zeros(n, dtype=bool)
        record = struct.Struct("<Q")
        row_bytes = feat * 4
        for k in range(n):
            head = fh.read(8)
            if len(head) < 8:
                raise ParseError(f"{path}: truncated at record {k}")
            (idx,) = record.unpack(head)
            if idx >= n:
                raise ParseError(f"{path}: id_index {idx} out of range")
            payload = fh.read(row_bytes)
            if len(payload) < row_bytes:
                raise ParseError(f"{path}: truncated vector at record {k}")
            matrix[idx] = np.frombuffer(payload, dtype="<f4")
            filled[idx] = True
    if not filled.all():
        raise ParseError(f"{path}: missing vector for id_index "
                         f"{int(np.flatnonzero(~filled)[0])}")
    return ids, matrix


def _read_features_csv(path) -> tuple[list[str], np.ndarray]:
    ids: list[str] = []
    rows: list[np.ndarray] = []
    feat = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split(",")
            if len(cols) < 2:
                raise ParseError(f"{path}:{lineno}: expected item_id,v1,...")
            try:
                vec = np.array([float(v) for v in cols[1:]], dtype=np.float32)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric feature") from None
            if feat is None:
                feat = len(vec)
            elif len(vec) != feat:
                raise DimensionMismatch(
                    f"{path}:{lineno}: vector length {len(vec)} != {feat}")
            if not np.isfinite(vec).all():
                raise ParseError(f"{path}:{lineno}: non-finite feature value")
            ids.append(cols[0])
            rows.append(vec)
    if feat is None:
        raise ParseError(f"{path}: no feature rows")
    return ids, np.vstack(rows)


def read_features(path) -> tuple[list[str], np.ndarray]:
    """Read either format; binary is detected by its magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head == FEATURE_MAGIC:
        return _read_features_binary(path)
    return _read_features_csv(path)


# ------------------------------------------------------------------- corpora

@dataclass
class InteractionCorpus:
    """Everything a model needs: users, items, positives, tree, features."""

    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    positives: list[np.ndarray]
    hierarchy: CategoryHierarchy
    item_leaf: np.ndarray
    features: FeatureStore

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def feature_dim(self) -> int:
        return self.features.feature_dim

    @property
    def n_interactions(self) -> int:
        return int(sum(len(p) for p in self.positives))

    def user_index(self) -> dict[str, int]:
        return {u: k for k, u in enumerate(self.user_ids)}

    def item_index(self) -> dict[str, int]:
        return {i: k for k, i in enumerate(self.item_ids)}


@dataclass
class TrainingCorpus:
    """Leave-one-out training side: positives minus held-out items.

    ``full_pos`` keeps each user's complete positive set (train + held-out)
    for negative-sampling rejection and ranking-candidate exclusion.
    """

    train_pos: list[np.ndarray]
    full_pos: list[np.ndarray]
    users: np.ndarray
    n_items: int

    n_interactions: int = field(init=False)
    full_sets: list[frozenset] = field(init=False, repr=False)

    def __post_init__(self):
        self.n_interactions = int(sum(len(p) for p in self.train_pos))
        self.full_sets = [frozenset(p.tolist()) for p in self.full_pos]

    def item_counts(self) -> np.ndarray:
        """How often each item occurs in the training positives."""
        if self.n_interactions == 0:
            return np.zeros(self.n_items, dtype=np.int64)
        stacked = np.concatenate([p for p in self.train_pos if len(p)])
        return np.bincount(stacked, minlength=self.n_items)


def assemble_corpus(
    pairs: list[tuple[str, str]],
    feat_ids: list[str],
    feat_matrix: np.ndarray,
    edges: list[tuple[str, str]],
    leaf_map: dict[str, str],
    policy: str = "strict",
    feature_norm: str = "none",
) -> tuple[InteractionCorpus, dict]:
    """Cross-validate the three sources and densify ids.

    policy="strict" raises OrphanItem on any item missing a feature vector or
    leaf assignment; policy="prune" drops such items (and their feedback)
    and reports counts.
    """
    if policy not in ("strict", "prune"):
        raise ValueError(f"unknown policy {policy!r}")
    if feature_norm not in ("none", "l2"):
        raise ValueError(f"unknown feature_norm {feature_norm!r}")
    if not pairs:
        raise EmptyCorpus("no feedback pairs")

    have_feat = set(feat_ids)
    have_leaf = set(leaf_map)
    referenced = {item for _, item in pairs}
    universe = have_feat | have_leaf | referenced

    missing_feat = sorted(universe - have_feat)
    missing_leaf = sorted(universe - have_leaf)
    if policy == "strict":
        if missing_feat:
            raise OrphanItem(f"item {missing_feat[0]!r} has no feature vector")
        if missing_leaf:
            raise OrphanItem(f"item {missing_leaf[0]!r} has no category")
    catalog = sorted(have_feat & have_leaf)

    # In prune mode an item may name a category node the tree does not have;
    # strict mode lets build_hierarchy raise DanglingItemLeaf with the id.
    dangling: list[str] = []
    if edges and policy == "prune":
        node_universe = {n for edge in edges for n in edge}
        dangling = sorted(i for i in catalog if leaf_map[i] not in node_universe)
        if dangling:
            gone = set(dangling)
            catalog = [i for i in catalog if i not in gone]
    if not catalog:
        raise EmptyCorpus("no item has both features and a category")

    item_index = {item: k for k, item in enumerate(catalog)}
    kept_pairs = [(u, i) for u, i in pairs if i in item_index]
    dropped_pairs = len(pairs) - len(kept_pairs)
    if not kept_pairs:
        raise EmptyCorpus("no feedback pair references a usable item")

    users = sorted({u for u, _ in kept_pairs})
    user_index = {u: k for k, u in enumerate(users)}

    positives: list[set[int]] = [set() for _ in users]
    for u, i in kept_pairs:
        positives[user_index[u]].add(item_index[i])
    pos_arrays = [np.array(sorted(p), dtype=np.int64) for p in positives]

    hierarchy = build_hierarchy(edges, {i: leaf_map[i] for i in catalog})
    item_leaf = np.array([hierarchy.leaf_of_item[i] for i in catalog],
                         dtype=np.int64)
    item_leaf.flags.writeable = False

    feat_row = {item: k for k, item in enumerate(feat_ids)}
    matrix = np.ascontiguousarray(
        feat_matrix[[feat_row[i] for i in catalog]], dtype=np.float64)
    store = FeatureStore(matrix, tuple(catalog))
    if feature_norm == "l2":
        store = store.normalized()

    report = {
        "users": len(users),
        "items": len(catalog),
        "interactions": sum(len(p) for p in pos_arrays),
        "feature_dim": store.feature_dim,
        "policy": policy,
        "feature_norm": feature_norm,
        "pruned": {
            "items_missing_features": missing_feat,
            "items_missing_category": missing_leaf,
            "items_dangling_category": dangling,
            "feedback_pairs_dropped": dropped_pairs,
        },
    }
    corpus = InteractionCorpus(
        user_ids=tuple(users),
        item_ids=tuple(catalog),
        positives=pos_arrays,
        hierarchy=hierarchy,
        item_leaf=item_leaf,
        features=store,
    )
    return corpus, report


def load_corpus(
    feedback_path,
    features_path,
    hierarchy_path,
    item_leaves_path,
    policy: str = "strict",
    feature_norm: str = "none",
) -> tuple[InteractionCorpus, dict]:
    """Parse the three artifacts and assemble a validated corpus."""
    pairs = read_feedback(feedback_path)
    feat_ids, feat_matrix = read_features(features_path)
    edges = read_hierarchy_edges(hierarchy_path)
    leaf_map = read_item_leaves(item_leaves_path)
    return assemble_corpus(pairs, feat_ids, feat_matrix, edges, leaf_map,
                           policy=policy, feature_norm=feature_norm)
