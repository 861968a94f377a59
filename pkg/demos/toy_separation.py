"""
Learning a two-user, two-item preference
========================================

User 0 likes item 0 and user 1 likes item 1. Every model kind should learn
to score the liked pairs near 1 and the others near 0. The loss traces are
per example, so QCF (four component terms) starts higher than GMF (one).
"""

import numpy as np

from hypercf import KINDS, TrainConfig, init_model, train
from hypercf.data import Split

split = Split(
    n_users=2, n_items=2,
    train_indptr=np.array([0, 1, 2]), train_items=np.array([0, 1]),
    test_items=np.array([0, 1]),
)
cfg = TrainConfig(epochs=200, learning_rate=0.05, l2_lambda=0.0, neg_ratio=1)

users, items = np.array([0, 0, 1, 1]), np.array([0, 1, 0, 1])
print(f"{'model':>9} {'loss@1':>8} {'loss@200':>9}   scores (u0i0 u0i1 u1i0 u1i1)")
for kind in KINDS:
    model = init_model(kind, 2, 2, dim=8, seed=0)
    trace = train(model, split, cfg)
    scores = model.score(users, items)
    print(f"{kind:>9} {trace[0].mean_loss:8.4f} {trace[-1].mean_loss:9.4f}   {np.round(scores, 3)}")
