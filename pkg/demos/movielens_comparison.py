"""
GMF, MMF and QCF on MovieLens-100K
==================================

Fetch the data first with ``python scripts/fetch_ml100k.py``. Each model
trains for ``EPOCHS`` epochs with d=30 and Adam, then ranks every user's
latest item against 200 unseen items. Pass a number on the command line to
change the epoch count, e.g. ``python demos/movielens_comparison.py 5``.
"""

import sys
import time
from pathlib import Path

from hypercf import TrainConfig, build_dataset, evaluate, init_model, load_interactions, prepare_split, train
from hypercf.data import FORMATS

EPOCHS = int(sys.argv[1]) if len(sys.argv) > 1 else 30
path = Path(__file__).resolve().parents[1] / "data" / "ml-100k" / "u.data"

dataset = build_dataset(load_interactions(path, FORMATS["ml-100k"]), name="ml-100k")
print(dataset.summary())
split = prepare_split(dataset, seed=0)

cfg = TrainConfig(learning_rate=0.001, l2_lambda=0.001, epochs=EPOCHS, neg_ratio=4, seed=0)
results = {}
for kind in ("gmf", "mmf", "ccf", "qcf"):
    start = time.perf_counter()
    model = init_model(kind, split.n_users, split.n_items, dim=30, seed=0)
    trace = train(model, split, cfg)
    report = evaluate(model, split)
    results[kind] = report
    print(f"{kind}: loss {trace[-1].mean_loss:.4f}, {time.perf_counter() - start:.0f}s")

print(f"\n{'model':>6} {'HR@10':>7} {'NDCG@10':>8} {'HR@20':>7}")
for kind, rep in results.items():
    print(f"{kind:>6} {rep.hr[10]:7.4f} {rep.ndcg[10]:8.4f} {rep.hr[20]:7.4f}")

# difference that the directional check looks at
print(f"\nQCF - GMF on HR@10: {results['qcf'].hr[10] - results['gmf'].hr[10]:+.4f}")
