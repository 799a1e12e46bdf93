"""Leave-one-out splitting and average-AUC evaluation.

Per user, one held-out validation item and one held-out test item are carved
from the positive set (users with two positives get a test item only; users
with one stay train-only). The metric is the mean, over evaluable users, of
the fraction of non-positive items ranked strictly below the held-out test
item. Ties count as failures: equal scores contribute zero. The cold-start
setting keeps only users whose test item occurred fewer than ``threshold``
times in training and ranks against cold non-positives alone.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import NoEvaluableUsers
from .ingestion import InteractionCorpus, TrainingCorpus


@dataclass
class EvalSplit:
    """Held-out validation/test item per user; -1 where none was assigned."""

    val_item: np.ndarray
    test_item: np.ndarray
    excluded_users: np.ndarray

    def n_test_users(self) -> int:
        return int((self.test_item >= 0).sum())


@dataclass
class ColdItemSet:
    """Items whose training occurrence count falls below the threshold."""

    threshold: int
    cold_mask: np.ndarray

    @classmethod
    def from_training(cls, corpus: TrainingCorpus, threshold: int = 5
                      ) -> "ColdItemSet":
        counts = corpus.item_counts()
        return cls(threshold=threshold, cold_mask=counts < threshold)

    @property
    def n_cold(self) -> int:
        return int(self.cold_mask.sum())


def split_leave_one_out(
    corpus: InteractionCorpus, rng
) -> tuple[TrainingCorpus, EvalSplit]:
    """Carve one validation and one test positive per user, seeded.

    ``rng`` may be an integer seed or a numpy Generator. Users are visited
    in dense-id order, so the split depends only on the seed and the corpus
    content, not on input file order.
    """
    rng = np.random.default_rng(rng)
    n_users = corpus.n_users
    val = np.full(n_users, -1, dtype=np.int64)
    test = np.full(n_users, -1, dtype=np.int64)
    train_pos: list[np.ndarray] = []
    for u in range(n_users):
        pos = corpus.positives[u]
        n = len(pos)
        if n >= 3:
            picks = rng.choice(n, size=2, replace=False)
            val[u] = pos[picks[0]]
            test[u] = pos[picks[1]]
            keep = np.delete(pos, picks)
        elif n == 2:
            k = int(rng.integers(2))
            test[u] = pos[k]
            keep = np.delete(pos, [k])
        else:
            keep = pos.copy()
        train_pos.append(keep)

    training = TrainingCorpus(
        train_pos=train_pos,
        full_pos=[p.copy() for p in corpus.positives],
        users=np.arange(n_users),
        n_items=corpus.n_items,
    )
    split = EvalSplit(val_item=val, test_item=test,
                      excluded_users=np.flatnonzero(test < 0))
    return training, split


@dataclass
class AucResult:
    auc: float
    users_evaluated: int
    approximate: bool = False


def _mean_user_auc(
    model,
    targets: np.ndarray,
    pos_lists: list[np.ndarray],
    n_items: int,
    cold_mask: np.ndarray | None,
    restrict_targets_to_cold: bool,
    sample_candidates: int | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[float, int]:
    table = model.item_table()
    total = 0.0
    count = 0
    for u in range(len(targets)):
        t = int(targets[u])
        if t < 0:
            continue
        if restrict_targets_to_cold and not cold_mask[t]:
            continue
        mask = np.ones(n_items, dtype=bool)
        mask[pos_lists[u]] = False
        if cold_mask is not None:
            mask &= cold_mask
        if sample_candidates is not None:
            idx = np.flatnonzero(mask)
            if len(idx) > sample_candidates:
                idx = rng.choice(idx, size=sample_candidates, replace=False)
            mask = np.zeros(n_items, dtype=bool)
            mask[idx] = True
        n_cand = int(mask.sum())
        if n_cand == 0:
            continue
        scores = model.score_all(u, table)
        frac = int((scores[mask] < scores[t]).sum()) / n_cand
        total += frac
        count += 1
    if count == 0:
        raise NoEvaluableUsers("no user has an evaluable held-out item")
    return total / count, count


def auc(
    model,
    corpus: InteractionCorpus,
    split: EvalSplit,
    setting: str = "warm",
    cold_set: ColdItemSet | None = None,
    sample_candidates: int | None = None,
    rng=None,
) -> AucResult:
    """Average test AUC under the warm or cold protocol.

    Candidates are all items outside the user's full positive set; the
    held-out validation item is therefore never a candidate. With
    ``sample_candidates`` set, each user's candidate pool is subsampled and
    the result flagged approximate.
    """
    if setting not in ("warm", "cold"):
        raise ValueError(f"unknown setting {setting!r}")
    if setting == "cold" and cold_set is None:
        raise ValueError("cold setting needs a ColdItemSet")
    if sample_candidates is not None:
        rng = np.random.default_rng(rng)
    value, count = _mean_user_auc(
        model,
        targets=split.test_item,
        pos_lists=corpus.positives,
        n_items=corpus.n_items,
        cold_mask=cold_set.cold_mask if setting == "cold" else None,
        restrict_targets_to_cold=(setting == "cold"),
        sample_candidates=sample_candidates,
        rng=rng,
    )
    return AucResult(auc=value, users_evaluated=count,
                     approximate=sample_candidates is not None)


def validation_auc(model, corpus: TrainingCorpus, split: EvalSplit) -> float:
    """Warm AUC against the held-out validation items (used per epoch)."""
    value, _ = _mean_user_auc(
        model,
        targets=split.val_item,
        pos_lists=corpus.full_pos,
        n_items=corpus.n_items,
        cold_mask=None,
        restrict_targets_to_cold=False,
    )
    return value


def evaluate_report(
    model,
    corpus: InteractionCorpus,
    split: EvalSplit,
    cold_set: ColdItemSet | None = None,
) -> dict:
    """Warm and cold AUC plus counts, config echo, and wall time."""
    started = time.perf_counter()
    warm = auc(model, corpus, split, setting="warm")
    report = {
        "config": model.config.to_dict(),
        "items_total": corpus.n_items,
        "warm": {"auc": warm.auc, "users_evaluated": warm.users_evaluated},
    }
    if cold_set is not None:
        cold = auc(model, corpus, split, setting="cold", cold_set=cold_set)
        report["cold"] = {"auc": cold.auc,
                          "users_evaluated": cold.users_evaluated}
        report["cold_items"] = cold_set.n_cold
        report["cold_threshold"] = cold_set.threshold
    report["wall_time_seconds"] = time.perf_counter() - started
    return report
