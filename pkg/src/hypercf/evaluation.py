"""Leave-one-out ranking metrics over 201-item candidate lists."""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .data import N_EVAL_NEGATIVES, Split
from .errors import DataError

DEFAULT_KS = (5, 10, 20)
CSV_COLUMNS = ("model", "dataset", "k", "hr", "ndcg", "users", "train_epoch_seconds", "test_seconds")


def rank_from_scores(scores: np.ndarray, items: np.ndarray, target: int = 0) -> np.ndarray:
    """1-based rank of column ``target`` along the last axis.

    Higher score ranks first; equal scores go to the smaller item index.
    """
    scores = np.asarray(scores, dtype=np.float64)
    items = np.asarray(items)
    s_t = scores[..., target:target + 1]
    i_t = items[..., target:target + 1]
    ahead = (scores > s_t) | ((scores == s_t) & (items < i_t))
    return 1 + ahead.sum(axis=-1)


def rank_candidates(model, u: int, candidates) -> int:
    """Rank of ``candidates[0]`` (the test item) among ``candidates`` for user ``u``."""
    candidates = np.asarray(candidates, dtype=np.int64)
    if candidates.ndim != 1 or len(candidates) != N_EVAL_NEGATIVES + 1:
        raise DataError(f"candidate list must hold {N_EVAL_NEGATIVES + 1} items, got {candidates.shape}")
    if len(np.unique(candidates)) != len(candidates):
        raise DataError("candidate list contains duplicates")
    scores = model.score(np.full(len(candidates), u), candidates)
    return int(rank_from_scores(scores, candidates))


def _check(ranks, k: int) -> np.ndarray:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise ValueError("no ranks given")
    return ranks


def hr_at_k(ranks, k: int) -> float:
    ranks = _check(ranks, k)
    return float(np.mean(ranks <= k))


def ndcg_at_k(ranks, k: int) -> float:
    ranks = _check(ranks, k)
    hits = ranks[ranks <= k].tolist()
    # fsum is correctly rounded, so the result does not depend on user order
    return math.fsum(1.0 / math.log2(r + 1) for r in hits) / ranks.size


@dataclass
class EvalReport:
    hr: dict[int, float]
    ndcg: dict[int, float]
    users: int
    test_seconds: float = 0.0
    train_epoch_seconds: float | None = None
    ranks: np.ndarray | None = field(default=None, repr=False)

    def rows(self, model: str, dataset: str, timing: bool = True) -> list[dict]:
        out = []
        for k in sorted(self.hr):
            out.append({
                "model": model,
                "dataset": dataset,
                "k": k,
                "hr": repr(self.hr[k]),
                "ndcg": repr(self.ndcg[k]),
                "users": self.users,
                "train_epoch_seconds": _fmt_time(self.train_epoch_seconds) if timing else "",
                "test_seconds": _fmt_time(self.test_seconds) if timing else "",
            })
        return out

    def table(self, model: str = "") -> str:
        head = f"{model} ({self.users} users)" if model else f"{self.users} users"
        lines = [head, f"{'k':>4} {'HR@k':>8} {'NDCG@k':>8}"]
        for k in sorted(self.hr):
            lines.append(f"{k:>4} {self.hr[k]:>8.4f} {self.ndcg[k]:>8.4f}")
        return "\n".join(lines)


def _fmt_time(seconds) -> str:
    return "" if seconds is None else f"{seconds:.6f}"


def score_candidates(model, candidates: np.ndarray, chunk: int = 256) -> np.ndarray:
    m = candidates.shape[0]
    scores = np.empty(candidates.shape)
    for lo in range(0, m, chunk):
        block = candidates[lo:lo + chunk]
        users = np.broadcast_to(np.arange(lo, lo + len(block))[:, None], block.shape)
        scores[lo:lo + chunk] = model.score(users.ravel(), block.ravel()).reshape(block.shape)
    return scores


def evaluate(model, split: Split, ks=DEFAULT_KS) -> EvalReport:
    """Rank every user's held-out item against its 200 negatives."""
    start = time.perf_counter()
    candidates = split.candidates()
    if candidates.shape[1] != N_EVAL_NEGATIVES + 1:
        raise DataError(f"expected {N_EVAL_NEGATIVES + 1} candidates per user, got {candidates.shape[1]}")
    ranks = rank_from_scores(score_candidates(model, candidates), candidates)
    report = EvalReport(
        hr={k: hr_at_k(ranks, k) for k in ks},
        ndcg={k: ndcg_at_k(ranks, k) for k in ks},
        users=len(ranks),
        ranks=ranks,
    )
    report.test_seconds = time.perf_counter() - start
    return report


def write_csv(rows: list[dict], path=None, columns=CSV_COLUMNS, comment: str | None = None) -> str:
    """Render ``rows`` as CSV; write to ``path`` when given. Returns the text."""
    buf = io.StringIO()
    if comment:
        for line in comment.splitlines():
            buf.write(f"# {line}\n")
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    writer.writerows(rows)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def uniform_rank_hr(k: int, n_candidates: int = N_EVAL_NEGATIVES + 1) -> float:
    """HR@k expected when the test item's rank is uniform over the list."""
    return min(k, n_candidates) / n_candidates


def uniform_rank_ndcg(k: int, n_candidates: int = N_EVAL_NEGATIVES + 1) -> float:
    return sum(1.0 / math.log2(r + 1) for r in range(1, min(k, n_candidates) + 1)) / n_candidates
