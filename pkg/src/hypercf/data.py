"""Interaction logs to leave-one-out splits.

Pipeline: :func:`load_interactions` -> :func:`build_dataset` (binarize,
deduplicate, filter users with fewer than five items, remap ids) ->
:func:`leave_one_out` -> :func:`sample_eval_negatives` -> :func:`save_split`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import seeding
from ._container import read_container, write_container
from .errors import DataError, FormatError

log = logging.getLogger(__name__)

SPLIT_MAGIC = "HYPERCF-SPLIT1"
MIN_INTERACTIONS = 5
N_EVAL_NEGATIVES = 200
MAX_MALFORMED_FRACTION = 0.01


class Interaction(NamedTuple):
    user: str
    item: str
    rating: float | None
    timestamp: int | None


@dataclass(frozen=True)
class FormatOptions:
    delimiter: str = "\t"
    columns: tuple[str, ...] = ("user", "item", "rating", "timestamp")
    header: bool = False
    timestamps: bool = True

    def __post_init__(self):
        missing = {"user", "item"} - set(self.columns)
        if missing:
            raise DataError(f"column order lacks {sorted(missing)}")
        if self.timestamps and "timestamp" not in self.columns:
            raise DataError("timestamps enabled but no timestamp column given")


FORMATS = {
    # GroupLens u.data
    "ml-100k": FormatOptions(),
    "tsv": FormatOptions(),
    # HetRec user_ratedmovies-timestamps.dat
    "hetrec": FormatOptions(columns=("user", "item", "rating", "timestamp"), header=True),
    # ml-latest ratings.csv
    "csv": FormatOptions(delimiter=",", header=True),
    # ml-1m / ml-10m ratings.dat
    "dat": FormatOptions(delimiter="::"),
    # user item [rating], no time information
    "pairs": FormatOptions(columns=("user", "item", "rating"), timestamps=False),
}


def _parse_timestamp(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        value = float(text)
        if not np.isfinite(value):
            raise
        return int(value)


def load_interactions(path, options: FormatOptions = FormatOptions(),
                      stats: dict | None = None) -> list[Interaction]:
    """Parse a delimited interaction log.

    Rows that are blank are ignored. Rows with missing columns, empty ids or
    unparsable numbers count as malformed; more than 1% malformed aborts.
    If ``stats`` is given it receives ``rows``, ``malformed`` and ``first_malformed``.
    """
    path = Path(path)
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    cols = {name: idx for idx, name in enumerate(options.columns)}
    width = len(options.columns)
    out: list[Interaction] = []
    malformed = 0
    first_bad = None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if options.header and lineno == 1:
                continue
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split(options.delimiter)
            try:
                if len(fields) < width:
                    raise ValueError(f"expected {width} fields, got {len(fields)}")
                user = fields[cols["user"]].strip()
                item = fields[cols["item"]].strip()
                if not user or not item:
                    raise ValueError("empty id")
                rating = float(fields[cols["rating"]]) if "rating" in cols else None
                ts = _parse_timestamp(fields[cols["timestamp"]].strip()) if options.timestamps else None
            except ValueError as exc:
                malformed += 1
                if first_bad is None:
                    first_bad = f"line {lineno}: {exc}"
                continue
            out.append(Interaction(user, item, rating, ts))
    total = len(out) + malformed
    if malformed:
        log.warning("%s: %d malformed rows of %d (first: %s)", path, malformed, total, first_bad)
    if total and malformed / total > MAX_MALFORMED_FRACTION:
        raise DataError(f"{path}: {malformed} of {total} rows malformed, first at {first_bad}")
    if stats is not None:
        stats.update(rows=len(out), malformed=malformed, first_malformed=first_bad)
    return out


@dataclass
class Dataset:
    """Binarized interactions in CSR form, rows sorted by item index."""

    user_ids: list[str]  # dense index -> raw id
    item_ids: list[str]
    indptr: np.ndarray  # (M + 1,)
    items: np.ndarray  # (n_actions,)
    timestamps: np.ndarray | None  # aligned with ``items``
    name: str = ""

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_actions(self) -> int:
        return len(self.items)

    @property
    def density(self) -> float:
        return self.n_actions / (self.n_users * self.n_items)

    @property
    def user_map(self) -> dict[str, int]:
        return {raw: idx for idx, raw in enumerate(self.user_ids)}

    @property
    def item_map(self) -> dict[str, int]:
        return {raw: idx for idx, raw in enumerate(self.item_ids)}

    def user_items(self, u: int) -> np.ndarray:
        return self.items[self.indptr[u]:self.indptr[u + 1]]

    def summary(self) -> str:
        return (f"users={self.n_users} items={self.n_items} actions={self.n_actions} "
                f"density={100 * self.density:.3f}%")


def build_dataset(interactions, min_interactions: int = MIN_INTERACTIONS, name: str = "") -> Dataset:
    """Binarize, collapse duplicates (latest timestamp wins), filter and remap.

    Users with fewer than ``min_interactions`` distinct items are removed and
    items left without interactions disappear; this repeats until nothing
    changes. Dense ids follow first appearance in the surviving log.
    """
    if not interactions:
        raise DataError("no interactions to build a dataset from")
    has_ts = all(x.timestamp is not None for x in interactions)
    latest: dict[tuple[str, str], int | None] = {}
    for x in interactions:
        key = (x.user, x.item)
        if key not in latest:
            latest[key] = x.timestamp
        elif has_ts and x.timestamp > latest[key]:
            latest[key] = x.timestamp
    pairs = list(latest.items())  # insertion order == first appearance

    while True:
        degree: dict[str, int] = {}
        for (user, _), _ts in pairs:
            degree[user] = degree.get(user, 0) + 1
        kept = [p for p in pairs if degree[p[0][0]] >= min_interactions]
        # items only exist through pairs, so dropping users already drops orphan items
        if len(kept) == len(pairs):
            break
        pairs = kept
    if not pairs:
        raise DataError(f"no user has at least {min_interactions} interactions")

    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    rows = np.empty(len(pairs), dtype=np.int64)
    cols = np.empty(len(pairs), dtype=np.int64)
    stamps = np.empty(len(pairs), dtype=np.int64)
    for n, ((user, item), ts) in enumerate(pairs):
        rows[n] = user_index.setdefault(user, len(user_index))
        cols[n] = item_index.setdefault(item, len(item_index))
        stamps[n] = ts if has_ts else 0
    order = np.lexsort((cols, rows))
    indptr = np.zeros(len(user_index) + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)
    return Dataset(list(user_index), list(item_index), indptr, cols[order],
                   stamps[order] if has_ts else None, name=name)


@dataclass
class Split:
    """Leave-one-out split: train positives (CSR), one test item, fixed negatives."""

    n_users: int
    n_items: int
    train_indptr: np.ndarray
    train_items: np.ndarray
    test_items: np.ndarray  # (M,)
    eval_negatives: np.ndarray | None = None  # (M, 200)
    name: str = ""
    seed: int = 0

    def train_positives(self, u: int) -> np.ndarray:
        return self.train_items[self.train_indptr[u]:self.train_indptr[u + 1]]

    def candidates(self) -> np.ndarray:
        """``(M, 201)`` candidate lists, test item first."""
        if self.eval_negatives is None:
            raise DataError("split has no evaluation negatives; run sample_eval_negatives")
        return np.concatenate([self.test_items[:, None], self.eval_negatives], axis=1)


def leave_one_out(dataset: Dataset, seed: int) -> Split:
    """Hold out each user's latest item (ties: larger item index), else a random one."""
    rng = seeding.stream(seed, "split")
    m = dataset.n_users
    test = np.empty(m, dtype=np.int64)
    train_parts = []
    for u in range(m):
        lo, hi = dataset.indptr[u], dataset.indptr[u + 1]
        items = dataset.items[lo:hi]
        if len(items) < 2:
            raise DataError(f"user {dataset.user_ids[u]} has {len(items)} interactions")
        if dataset.timestamps is not None:
            ts = dataset.timestamps[lo:hi]
            # items ascend within a row, so the last maximum has the largest index
            pick = len(ts) - 1 - int(np.argmax(ts[::-1]))
        else:
            pick = int(rng.integers(len(items)))
        test[u] = items[pick]
        train_parts.append(np.delete(items, pick))
    lengths = np.array([len(p) for p in train_parts], dtype=np.int64)
    indptr = np.concatenate([[0], np.cumsum(lengths)])
    return Split(m, dataset.n_items, indptr, np.concatenate(train_parts), test,
                 name=dataset.name, seed=seed)


def sample_eval_negatives(dataset: Dataset, split: Split, seed: int,
                          n_negatives: int = N_EVAL_NEGATIVES) -> Split:
    """Draw ``n_negatives`` distinct never-interacted items per user, once."""
    rng = seeding.stream(seed, "eval_negatives")
    negs = np.empty((split.n_users, n_negatives), dtype=np.int64)
    all_items = np.arange(dataset.n_items, dtype=np.int64)
    for u in range(split.n_users):
        pool = np.setdiff1d(all_items, dataset.user_items(u), assume_unique=True)
        if len(pool) < n_negatives:
            raise DataError(f"user {dataset.user_ids[u]} has only {len(pool)} "
                            f"non-interacted items, {n_negatives} needed")
        negs[u] = rng.choice(pool, size=n_negatives, replace=False)
    return replace(split, eval_negatives=negs)


def prepare_split(dataset: Dataset, seed: int) -> Split:
    split = leave_one_out(dataset, seed)
    return sample_eval_negatives(dataset, split, seed)


def save_split(split: Split, path, extra: dict | None = None) -> None:
    meta = {"name": split.name, "n_users": split.n_users, "n_items": split.n_items,
            "seed": int(split.seed)}
    if extra:
        meta["extra"] = extra
    arrays = {"train_indptr": split.train_indptr, "train_items": split.train_items,
              "test_items": split.test_items}
    if split.eval_negatives is not None:
        arrays["eval_negatives"] = split.eval_negatives
    write_container(path, SPLIT_MAGIC, meta, {k: np.asarray(v, dtype=np.int64) for k, v in arrays.items()})


def load_split(path) -> Split:
    meta, arrays = read_container(path, SPLIT_MAGIC)
    try:
        split = Split(meta["n_users"], meta["n_items"], arrays["train_indptr"], arrays["train_items"],
                      arrays["test_items"], arrays.get("eval_negatives"), name=meta.get("name", ""),
                      seed=meta.get("seed", 0))
    except KeyError as exc:
        raise FormatError(f"{path}: missing field {exc}") from exc
    if len(split.train_indptr) != split.n_users + 1 or len(split.test_items) != split.n_users:
        raise FormatError(f"{path}: array sizes disagree with header")
    return split
