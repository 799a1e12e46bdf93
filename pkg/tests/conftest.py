"""Shared fixtures and oracle helpers for the test suite."""

import math

import numpy as np
import pytest

from hierbpr.ingestion import assemble_corpus

# Shape of the running example tree: three branches under the root, each
# with fine-grained leaves (layer 1 = root, layer 2 = branches, layer 3 = leaves).
TREE3_EDGES = [
    ("clothing", "root"),
    ("shoes", "root"),
    ("intimates", "root"),
    ("skirts", "clothing"),
    ("jeans", "clothing"),
    ("boots", "shoes"),
    ("flats", "shoes"),
    ("bras", "intimates"),
]

TREE3_LEAVES = ["skirts", "jeans", "boots", "flats", "bras"]


def build_corpus(edges, item_leaves, features, feedback, policy="strict"):
    """Assemble an in-memory corpus from plain dicts (test convenience)."""
    ids = sorted(features)
    matrix = np.array([features[i] for i in ids], dtype=float)
    corpus, _report = assemble_corpus(
        list(feedback), ids, matrix, list(edges), dict(item_leaves),
        policy=policy)
    return corpus


def tree3_corpus(rng=None, n_users=4, feature_dim=3):
    """Small corpus over the 3-layer tree with one item per leaf."""
    rng = np.random.default_rng(0 if rng is None else rng)
    items = {f"it_{leaf}": leaf for leaf in TREE3_LEAVES}
    features = {item: rng.normal(size=feature_dim) for item in items}
    users = [f"u{k}" for k in range(n_users)]
    feedback = []
    item_list = sorted(items)
    for k, user in enumerate(users):
        for item in item_list[k % 2::2]:
            feedback.append((user, item))
    return build_corpus(TREE3_EDGES, items, features, feedback)


def numeric_gradient(fn, arr, index, step=1e-5):
    """Central finite difference of fn() with respect to arr[index]."""
    original = arr[index]
    arr[index] = original + step
    hi = fn()
    arr[index] = original - step
    lo = fn()
    arr[index] = original
    return (hi - lo) / (2.0 * step)


def relative_error(analytic, numeric):
    denom = max(abs(analytic), abs(numeric), 1e-12)
    return abs(analytic - numeric) / denom


def log_sigmoid(x):
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


def auc_pair_counting(score, n_items, targets, positives, cold_mask=None):
    """Exhaustive pair counting: the independent AUC oracle.

    ``score(u, j)`` returns one scalar. Averages the per-user fraction of
    candidates scored strictly below the target, in user order, exactly as
    the metric definition reads.
    """
    fractions = []
    for u in range(len(targets)):
        t = int(targets[u])
        if t < 0:
            continue
        if cold_mask is not None and not cold_mask[t]:
            continue
        pos = set(int(p) for p in positives[u])
        candidates = [j for j in range(n_items)
                      if j not in pos and (cold_mask is None or cold_mask[j])]
        if not candidates:
            continue
        target_score = score(u, t)
        wins = 0
        for j in candidates:
            if score(u, j) < target_score:
                wins += 1
        fractions.append(wins / len(candidates))
    if not fractions:
        return None, 0
    return sum(fractions) / len(fractions), len(fractions)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
