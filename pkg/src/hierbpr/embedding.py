"""Segmented linear projection from raw feature space to visual dimensions.

Every node on an allocated layer owns an independent segment block (a
``width x F`` matrix). An item's projection stacks the blocks along its
root-to-leaf path, so row ranges high in the tree are shared by entire
subtrees while deeper rows are category-specific. The stacked matrix is
never materialized in the training hot path; per-layer matrix-vector
products give the same result.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionOutOfRange, MissingFeature, UnknownItem
from .hierarchy import LayerAssignment


class FeatureStore:
    """Dense per-item raw feature vectors.

    Rows are indexed by dense item index. Values are promoted to float64 on
    construction (feature files carry float32).
    """

    def __init__(self, matrix: np.ndarray, item_ids: tuple[str, ...] | None = None):
        matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise ValueError("feature matrix must be 2-D (items x F)")
        bad = np.flatnonzero(~np.isfinite(matrix).all(axis=1))
        if bad.size:
            which = item_ids[bad[0]] if item_ids else int(bad[0])
            raise ValueError(f"non-finite feature vector for item {which!r}")
        self.matrix = matrix
        self.item_ids = item_ids

    @property
    def n_items(self) -> int:
        return self.matrix.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.matrix.shape[1]

    def vector(self, item: int) -> np.ndarray:
        if not 0 <= item < self.n_items:
            raise MissingFeature(f"no feature vector for item index {item}")
        return self.matrix[item]

    def normalized(self) -> "FeatureStore":
        """Copy with every row scaled to unit L2 norm (zero rows stay zero)."""
        norms = np.linalg.norm(self.matrix, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        return FeatureStore(self.matrix / norms, self.item_ids)


class SegmentStore:
    """Per-node segment blocks backing the hierarchical projection.

    All blocks live in one contiguous ``(total_rows, F)`` float64 array;
    ``blocks[b]`` is a writable view. Block order follows the assignment's
    dense block ids.
    """

    def __init__(self, assignment: LayerAssignment, feature_dim: int,
                 backing: np.ndarray | None = None):
        self.assignment = assignment
        self.feature_dim = int(feature_dim)
        widths = [assignment.block_width(b) for b in range(assignment.n_blocks)]
        total = sum(widths)
        if backing is None:
            backing = np.zeros((total, feature_dim), dtype=np.float64)
        else:
            backing = np.ascontiguousarray(backing, dtype=np.float64)
            if backing.shape != (total, feature_dim):
                raise ValueError(
                    f"backing shape {backing.shape} != {(total, feature_dim)}")
        self.backing = backing
        self.blocks: list[np.ndarray] = []
        offset = 0
        for w in widths:
            self.blocks.append(self.backing[offset:offset + w])
            offset += w

    @classmethod
    def create(cls, assignment: LayerAssignment, feature_dim: int,
               rng: np.random.Generator, scale: float | None = None) -> "SegmentStore":
        """Seeded uniform init in [-scale, scale]; default scale 1/sqrt(F)."""
        store = cls(assignment, feature_dim)
        if scale is None:
            scale = 1.0 / np.sqrt(feature_dim)
        store.backing[:] = rng.uniform(-scale, scale, size=store.backing.shape)
        return store

    @property
    def n_visual(self) -> int:
        return self.assignment.n_visual

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def copy(self) -> "SegmentStore":
        return SegmentStore(self.assignment, self.feature_dim, self.backing.copy())

    def project(self, f: np.ndarray, leaf: int, out: np.ndarray | None = None) -> np.ndarray:
        """Visual projection of feature vector ``f`` under leaf node ``leaf``."""
        if out is None:
            out = np.empty(self.n_visual)
        for block, start, stop in self.assignment.blocks_for_leaf(leaf):
            np.matmul(self.blocks[block], f, out=out[start:stop])
        return out

    def dimension_score(self, f: np.ndarray, leaf: int, d: int) -> float:
        """Single visual dimension of the projection: one row dot product."""
        if not 0 <= d < self.n_visual:
            raise DimensionOutOfRange(
                f"dimension {d} outside [0, {self.n_visual})")
        for block, start, stop in self.assignment.blocks_for_leaf(leaf):
            if start <= d < stop:
                return float(np.dot(self.blocks[block][d - start], f))
        raise DimensionOutOfRange(f"dimension {d} not covered by any layer")

    def stacked_matrix(self, leaf: int) -> np.ndarray:
        """Materialized K' x F projection matrix for one leaf node."""
        out = np.empty((self.n_visual, self.feature_dim))
        for block, start, stop in self.assignment.blocks_for_leaf(leaf):
            out[start:stop] = self.blocks[block]
        return out

    def project_all(self, features: np.ndarray, leaves: np.ndarray) -> np.ndarray:
        """Projections for every item at once (frozen-model precompute)."""
        n = features.shape[0]
        out = np.zeros((n, self.n_visual))
        for leaf in np.unique(leaves):
            sel = np.flatnonzero(leaves == leaf)
            out[sel] = features[sel] @ self.stacked_matrix(int(leaf)).T
        return out

    def accumulate_gradient(self, leaf: int, upstream: np.ndarray, f: np.ndarray,
                            scale: float, grads: dict[int, np.ndarray]) -> None:
        """Add ``scale * outer(upstream[rows], f)`` to each path block's buffer.

        Blocks off the path are untouched; buffers are allocated lazily.
        """
        if upstream.shape != (self.n_visual,):
            raise ValueError(f"upstream must have length {self.n_visual}")
        for block, start, stop in self.assignment.blocks_for_leaf(leaf):
            buf = grads.get(block)
            if buf is None:
                buf = grads[block] = np.zeros_like(self.blocks[block])
            buf += scale * np.multiply.outer(upstream[start:stop], f)

    def add_scaled_outer(self, leaf: int, upstream: np.ndarray, f: np.ndarray,
                         scale: float, scratch: np.ndarray) -> None:
        """In-place ``block += scale * outer(upstream[rows], f)`` along the path.

        ``scratch`` must be a (max_rows, F) workspace; avoids per-step allocs.
        """
        for block, start, stop in self.assignment.blocks_for_leaf(leaf):
            w = stop - start
            work = scratch[:w]
            np.multiply(upstream[start:stop, None], f[None, :], out=work)
            target = self.blocks[block]
            if scale == 1.0:
                target += work
            else:
                work *= scale
                target += work

    def check_finite(self) -> None:
        if not np.isfinite(self.backing).all():
            raise ValueError("segment store contains non-finite values")


def project(item: int, segments: SegmentStore, features: FeatureStore,
            leaves: np.ndarray) -> np.ndarray:
    """Module-level form of the projection for a registered item index."""
    if not 0 <= item < len(leaves):
        raise UnknownItem(f"item index {item} out of range")
    return segments.project(features.vector(item), int(leaves[item]))


def dimension_score(item: int, d: int, segments: SegmentStore,
                    features: FeatureStore, leaves: np.ndarray) -> float:
    """Module-level form of the per-dimension score for a registered item."""
    if not 0 <= item < len(leaves):
        raise UnknownItem(f"item index {item} out of range")
    return segments.dimension_score(features.vector(item), int(leaves[item]), d)
