from pathlib import Path

import numpy as np
import pytest

from hypercf.data import (
    FORMATS,
    FormatOptions,
    Interaction,
    build_dataset,
    leave_one_out,
    load_interactions,
    load_split,
    prepare_split,
    sample_eval_negatives,
    save_split,
)
from hypercf.errors import DataError, FormatError

ML100K = Path(__file__).resolve().parents[1] / "data" / "ml-100k" / "u.data"


def log_for(user_items, with_ts=True):
    """Interactions from ``{user: [item, ...]}``; timestamps increase in list order."""
    out = []
    t = 0
    for user, items in user_items.items():
        for item in items:
            t += 1
            out.append(Interaction(str(user), str(item), 1.0, t if with_ts else None))
    return out


def wide_log(n_users=4, n_items=300, per_user=6, seed=0, greedy=False):
    """Users with a few items each; three filler users make all ``n_items`` items exist.

    With ``greedy`` one extra user has interacted with every item.
    """
    rng = np.random.default_rng(seed)
    users = {f"u{u}": [f"i{i}" for i in rng.choice(n_items, per_user, replace=False)] for u in range(n_users)}
    for f, chunk in enumerate(np.array_split(np.arange(n_items), 3)):
        users[f"filler{f}"] = [f"i{i}" for i in chunk]
    if greedy:
        users["greedy"] = [f"i{i}" for i in range(n_items)]
    return log_for(users)


# ------------------------------------------------------------------ loading


def test_load_three_rows(tmp_path):
    p = tmp_path / "log.tsv"
    p.write_text("1\t10\t5\t100\n1\t11\t3\t101\n2\t10\t4\t102\n")
    rows = load_interactions(p)
    assert len(rows) == 3
    assert rows[0] == Interaction("1", "10", 5.0, 100)


def test_missing_timestamp_is_malformed(tmp_path):
    p = tmp_path / "log.tsv"
    good = "".join(f"{u}\t{i}\t1\t{u * 10 + i}\n" for u in range(20) for i in range(10))
    p.write_text(good + "7\t3\t4\n")
    stats = {}
    rows = load_interactions(p, stats=stats)
    assert len(rows) == 200
    assert stats["malformed"] == 1
    assert "line 201" in stats["first_malformed"]


def test_too_many_malformed_rows_abort(tmp_path):
    p = tmp_path / "log.tsv"
    p.write_text("1\t2\t3\t4\n" * 50 + "garbage\n")
    with pytest.raises(DataError, match="malformed"):
        load_interactions(p)


def test_unreadable_file_names_path(tmp_path):
    missing = tmp_path / "nope.tsv"
    with pytest.raises(DataError, match="nope.tsv"):
        load_interactions(missing)


def test_header_and_delimiter(tmp_path):
    p = tmp_path / "ratings.csv"
    p.write_text("userId,movieId,rating,timestamp\n1,2,3.5,99\n")
    assert load_interactions(p, FORMATS["csv"]) == [Interaction("1", "2", 3.5, 99)]


def test_custom_column_order_without_timestamps(tmp_path):
    p = tmp_path / "log.txt"
    p.write_text("a;u1\nb;u2\n")
    opts = FormatOptions(delimiter=";", columns=("item", "user"), timestamps=False)
    assert load_interactions(p, opts) == [Interaction("u1", "a", None, None), Interaction("u2", "b", None, None)]


def test_float_timestamps_accepted(tmp_path):
    p = tmp_path / "log.tsv"
    p.write_text("1\t2\t3\t881250949.0\n")
    assert load_interactions(p)[0].timestamp == 881250949


def test_timestamp_option_needs_column():
    with pytest.raises(DataError):
        FormatOptions(columns=("user", "item"), timestamps=True)


@pytest.mark.skipif(not ML100K.exists(), reason="run scripts/fetch_ml100k.py first")
def test_movielens_100k_line_count():
    with open(ML100K, "rb") as fh:
        lines = sum(1 for line in fh if line.strip())
    assert lines == 100_000
    assert len(load_interactions(ML100K, FORMATS["ml-100k"])) == lines


# ----------------------------------------------------------------- building


def test_five_interactions_retained():
    ds = build_dataset(log_for({"a": list("vwxyz")}))
    assert ds.n_users == 1 and ds.n_actions == 5


def test_four_interactions_rejected():
    with pytest.raises(DataError):
        build_dataset(log_for({"a": list("wxyz")}))


def test_duplicates_collapse_keep_latest():
    rows = log_for({"a": list("vwxyz")}) + [Interaction("a", "v", 2.0, 999), Interaction("a", "w", 2.0, -5)]
    ds = build_dataset(rows)
    assert ds.n_actions == 5
    items = ds.user_items(0)
    stamps = dict(zip(items.tolist(), ds.timestamps[ds.indptr[0]:ds.indptr[1]].tolist()))
    assert stamps[ds.item_map["v"]] == 999
    assert stamps[ds.item_map["w"]] == 2


def test_duplicates_set_oracle():
    rng = np.random.default_rng(0)
    rows = [Interaction(f"u{rng.integers(5)}", f"i{rng.integers(12)}", 1.0, int(t)) for t in range(300)]
    ds = build_dataset(rows)
    distinct = {}
    for r in rows:
        distinct.setdefault(r.user, set()).add(r.item)
    for raw, idx in ds.user_map.items():
        assert len(ds.user_items(idx)) == len(distinct[raw])


def test_filtering_and_remap_invariants():
    rng = np.random.default_rng(1)
    rows = [Interaction(f"u{rng.integers(40)}", f"i{rng.integers(60)}", 1.0, int(t)) for t in range(400)]
    ds = build_dataset(rows)
    degrees = np.diff(ds.indptr)
    assert degrees.min() >= 5
    assert sorted(ds.user_map.values()) == list(range(ds.n_users))
    assert sorted(ds.item_map.values()) == list(range(ds.n_items))
    assert len(set(ds.user_ids)) == ds.n_users
    assert np.bincount(ds.items, minlength=ds.n_items).min() >= 1
    for u in range(ds.n_users):
        row = ds.user_items(u)
        assert len(np.unique(row)) == len(row)
    assert ds.density == pytest.approx(ds.n_actions / (ds.n_users * ds.n_items), rel=1e-12)


def test_first_seen_order():
    ds = build_dataset(log_for({"b": list("zyxwv"), "a": list("vwxyz")}))
    assert ds.user_ids == ["b", "a"]
    assert ds.item_ids == list("zyxwv")


def test_empty_input():
    with pytest.raises(DataError):
        build_dataset([])


# ------------------------------------------------------------ leave one out


def test_latest_item_held_out():
    rows = [Interaction("u", it, 1.0, ts) for it, ts in zip("abcde", [10, 20, 30, 5, 1])]
    ds = build_dataset(rows)
    split = leave_one_out(ds, seed=0)
    assert ds.item_ids[split.test_items[0]] == "c"
    assert sorted(ds.item_ids[i] for i in split.train_positives(0)) == list("abde")


def test_timestamp_tie_goes_to_larger_item_index():
    rows = [Interaction("u", it, 1.0, ts) for it, ts in zip("abcde", [30, 30, 1, 2, 3])]
    ds = build_dataset(rows)
    split = leave_one_out(ds, seed=0)
    assert split.test_items[0] == max(ds.item_map["a"], ds.item_map["b"])


def test_random_holdout_is_seeded():
    ds = build_dataset(log_for({u: [f"i{i}" for i in range(u, u + 8)] for u in range(10)}, with_ts=False))
    a = leave_one_out(ds, seed=3)
    b = leave_one_out(ds, seed=3)
    assert a.test_items.tolist() == b.test_items.tolist()
    assert a.train_items.tolist() == b.train_items.tolist()


def test_split_partitions_each_user():
    ds = build_dataset(log_for({u: [f"i{(u * 7 + k) % 30}" for k in range(5 + u)] for u in range(12)}))
    split = leave_one_out(ds, seed=0)
    for u in range(ds.n_users):
        train = set(split.train_positives(u).tolist())
        assert split.test_items[u] not in train
        assert train | {int(split.test_items[u])} == set(ds.user_items(u).tolist())
        assert len(train) == len(ds.user_items(u)) - 1


# --------------------------------------------------------------- negatives


def test_eval_negatives_contract():
    ds = build_dataset(wide_log())
    split = prepare_split(ds, seed=4)
    cands = split.candidates()
    assert cands.shape == (ds.n_users, 201)
    for u in range(ds.n_users):
        negs = split.eval_negatives[u]
        assert len(set(negs.tolist())) == 200
        assert not set(negs.tolist()) & set(ds.user_items(u).tolist())
        assert cands[u, 0] == split.test_items[u]


def test_eval_negatives_seeded():
    ds = build_dataset(wide_log())
    a = prepare_split(ds, seed=4)
    b = prepare_split(ds, seed=4)
    c = prepare_split(ds, seed=5)
    assert a.eval_negatives.tobytes() == b.eval_negatives.tobytes()
    assert a.eval_negatives.tobytes() != c.eval_negatives.tobytes()


def test_eval_negatives_need_200_candidates():
    ds = build_dataset(wide_log(greedy=True))
    split = leave_one_out(ds, seed=0)
    with pytest.raises(DataError, match="greedy"):
        sample_eval_negatives(ds, split, seed=0)


# ---------------------------------------------------------------- split file


def test_split_file_round_trip(tmp_path):
    ds = build_dataset(wide_log(n_users=3))
    split = prepare_split(ds, seed=1)
    p = tmp_path / "s.split"
    save_split(split, p, extra={"source": "x"})
    assert p.read_bytes().startswith(b"HYPERCF-SPLIT1\n")
    back = load_split(p)
    for name in ("train_indptr", "train_items", "test_items", "eval_negatives"):
        assert getattr(back, name).tobytes() == getattr(split, name).tobytes()
    assert (back.n_users, back.n_items, back.seed) == (split.n_users, split.n_items, 1)
    p2 = tmp_path / "t.split"
    save_split(split, p2, extra={"source": "x"})
    assert p.read_bytes() == p2.read_bytes()


def test_split_file_wrong_magic(tmp_path):
    p = tmp_path / "s.split"
    p.write_bytes(b"HYPERCF1\n{}\n")
    with pytest.raises(FormatError):
        load_split(p)
