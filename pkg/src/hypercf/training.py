"""Component-wise cross-entropy training with negative sampling.

Every pre-activation component of a user-item pair gets its own logistic
loss against the pair's label. L2 regularization covers the embedding rows a
batch touches (each distinct row once per batch) and, for QCF+, the dense
layer and output unit. Gradients are analytic: the loss derivative with
respect to a component ``c`` is ``sigmoid(c) - y``, chained through the
bilinear scoring forms. For a Hamilton product ``p ⊗ q`` with upstream
gradient ``g`` the adjoints are ``g ⊗ conj(q)`` for ``p`` and
``conj(p) ⊗ g`` for ``q``.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import seeding
from .errors import ConfigError
from .hypercomplex import cconj, cmul, qconj, qmatmul, qmul, sigmoid
from .model import Model

log = logging.getLogger(__name__)

LEARNING_RATE_GRID = (0.001, 0.005, 0.01, 0.05)
L2_GRID = (0.001, 0.005, 0.01, 0.05, 0.1)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    l2_lambda: float = 0.001
    batch_size: int = 256
    epochs: int = 30
    neg_ratio: int = 4
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        self.optimizer = self.optimizer.lower()
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be >= 0")
        if not self.l2_lambda >= 0:
            raise ConfigError("l2_lambda must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.neg_ratio < 1:
            raise ConfigError("neg_ratio must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------- losses


def _softplus(x):
    return np.logaddexp(0.0, x)


def component_loss(components, label) -> np.ndarray:
    """Sum over components of the logistic loss; shape ``components.shape[1:]``.

    Uses ``-log sigmoid(c) = softplus(-c)`` and ``-log(1 - sigmoid(c)) = softplus(c)``
    so saturated logits never produce ``log(0)``.
    """
    c = np.asarray(components, dtype=np.float64)
    y = np.asarray(label, dtype=np.float64)
    per = y * _softplus(-c) + (1.0 - y) * _softplus(c)
    out = per.sum(axis=0)
    return out if out.ndim else float(out)


def _l2_term(model: Model, users, items) -> float:
    uu = np.unique(users)
    ui = np.unique(items)
    total = float((model.table.users[:, uu] ** 2).sum() + (model.table.items[:, ui] ** 2).sum())
    if model.layer is not None:
        total += float((model.layer.weights ** 2).sum() + (model.head ** 2).sum())
    return total


def total_loss(model: Model, users, items, labels, l2_lambda: float) -> float:
    users = np.atleast_1d(np.asarray(users))
    if users.size == 0:
        raise ValueError("empty batch")
    items = np.atleast_1d(np.asarray(items))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.float64))
    data = float(np.sum(component_loss(model.components(users, items), labels)))
    return data + l2_lambda * _l2_term(model, users, items)


# ------------------------------------------------------------- gradients


@dataclass
class Gradients:
    """Gradient of a batch loss.

    Embedding gradients are row-sparse: ``users[:, r]`` is the gradient for
    user ``user_ids[r]`` (ids are unique and sorted).
    """

    user_ids: np.ndarray
    users: np.ndarray
    item_ids: np.ndarray
    items: np.ndarray
    layer: np.ndarray | None = None
    head: np.ndarray | None = None
    data_loss: float = 0.0

    def dense(self, model: Model) -> dict[str, np.ndarray]:
        out = {name: np.zeros_like(p) for name, p in model.parameters().items()}
        out["users"][:, self.user_ids] = self.users
        out["items"][:, self.item_ids] = self.items
        if self.layer is not None:
            out["layer"][...] = self.layer
            out["head"][...] = self.head
        return out


def _pair_grads(model: Model, u, i, y):
    """Per-example gradients ``(parts, B, d)`` for user and item rows, plus layer grads."""
    hu, hi = model.table.rows(u, i)
    kind = model.kind
    if kind == "qcf-plus":
        h = qmul(hu, hi)  # (4, B, d)
        layer = model.layer
        z = layer.forward(h)
        head = model.head[:, None, :]
        out = qmul(head, z).sum(axis=-1)  # (4, B)
        g = sigmoid(out) - y
        g_b = g[:, :, None]
        # output unit: out = sum_r head[r] ⊗ z[r]
        g_head = qmul(g_b, qconj(z)).sum(axis=1)
        g_z = qmul(qconj(head), g_b)
        g_pre = g_z * z * (1.0 - z)
        # dense layer: pre[b, r] = sum_s W[r, s] ⊗ h[b, s]; both adjoints are quaternion matmuls
        g_pre_t = g_pre.transpose(0, 2, 1)
        g_layer = qmatmul(g_pre_t, qconj(h))
        g_h = qmatmul(qconj(layer.weights).transpose(0, 2, 1), g_pre_t).transpose(0, 2, 1)
        gu = qmul(g_h, qconj(hi))
        gi = qmul(qconj(hu), g_h)
        return out, gu, gi, g_layer, g_head
    if kind == "qcf":
        out = qmul(hu, hi).sum(axis=-1)
        g = (sigmoid(out) - y)[:, :, None]
        return out, qmul(g, qconj(hi)), qmul(qconj(hu), g), None, None
    if kind == "ccf":
        out = cmul(hu, hi).sum(axis=-1)
        g = (sigmoid(out) - y)[:, :, None]
        return out, cmul(g, cconj(hi)), cmul(cconj(hu), g), None, None
    # gmf, mmf: a single logit summed over every part
    out = (hu * hi).sum(axis=(0, -1))[None]
    g = (sigmoid(out) - y)[:, :, None]
    return out, g * hi, g * hu, None, None


def _scatter_rows(ids, per_example):
    """Sum ``(parts, B, d)`` per-example gradients into one slot per distinct id."""
    uniq, inv = np.unique(ids, return_inverse=True)
    onehot = (inv[None, :] == np.arange(len(uniq))[:, None]).astype(np.float64)
    parts, batch, dim = per_example.shape
    flat = per_example.transpose(1, 0, 2).reshape(batch, parts * dim)
    acc = (onehot @ flat).reshape(len(uniq), parts, dim).transpose(1, 0, 2)
    return uniq, np.ascontiguousarray(acc)


def batch_gradients(model: Model, users, items, labels, l2_lambda: float) -> Gradients:
    """Exact gradient of :func:`total_loss` for one batch."""
    users = np.atleast_1d(np.asarray(users, dtype=np.int64))
    items = np.atleast_1d(np.asarray(items, dtype=np.int64))
    y = np.atleast_1d(np.asarray(labels, dtype=np.float64))
    out, gu, gi, g_layer, g_head = _pair_grads(model, users, items, y)
    data_loss = float(np.sum(component_loss(out, y)))

    uid, acc_u = _scatter_rows(users, gu)
    iid, acc_i = _scatter_rows(items, gi)
    if l2_lambda:
        acc_u += 2.0 * l2_lambda * model.table.users[:, uid]
        acc_i += 2.0 * l2_lambda * model.table.items[:, iid]
        if g_layer is not None:
            g_layer = g_layer + 2.0 * l2_lambda * model.layer.weights
            g_head = g_head + 2.0 * l2_lambda * model.head
    return Gradients(uid, acc_u, iid, acc_i, g_layer, g_head, data_loss)


def gradients(model: Model, u: int, i: int, label, l2_lambda: float) -> Gradients:
    """Gradient for a single ``(u, i, label)`` example."""
    return batch_gradients(model, [u], [i], [label], l2_lambda)


# -------------------------------------------------------------- sampling


def train_keys(train_indptr: np.ndarray, train_items: np.ndarray, n_items: int) -> np.ndarray:
    """Sorted ``user * n_items + item`` keys of the training positives."""
    users = np.repeat(np.arange(len(train_indptr) - 1, dtype=np.int64), np.diff(train_indptr))
    return np.sort(users * n_items + train_items.astype(np.int64))


def _is_positive(keys: np.ndarray, users: np.ndarray, items: np.ndarray, n_items: int) -> np.ndarray:
    q = users * n_items + items
    pos = np.searchsorted(keys, q)
    pos = np.minimum(pos, len(keys) - 1)
    return keys[pos] == q


def sample_training_batch(split, neg_ratio: int, rng: np.random.Generator, keys=None):
    """One epoch of labelled examples as ``(users, items, labels)`` arrays.

    Positives are shuffled; each is followed by ``neg_ratio`` items drawn
    uniformly from those the user has no training interaction with. Users
    who interacted with every item get no negatives.
    """
    indptr, train_items, n_items = split.train_indptr, split.train_items, split.n_items
    if len(train_items) == 0:
        raise ValueError("training set is empty")
    if keys is None:
        keys = train_keys(indptr, train_items, n_items)
    pos_users = np.repeat(np.arange(split.n_users, dtype=np.int64), np.diff(indptr))
    order = rng.permutation(len(train_items))
    pu = pos_users[order]
    pi = train_items[order].astype(np.int64)

    degree = np.diff(indptr)
    saturated = degree[pu] >= n_items
    if saturated.any():
        log.warning("%d users have no unobserved items; skipping their negatives",
                    len(np.unique(pu[saturated])))

    nu = np.repeat(pu, neg_ratio).reshape(-1, neg_ratio)
    ni = rng.integers(0, n_items, size=nu.shape, dtype=np.int64)
    bad = _is_positive(keys, nu, ni, n_items) & ~saturated[:, None]
    while bad.any():
        ni[bad] = rng.integers(0, n_items, size=int(bad.sum()), dtype=np.int64)
        bad[bad] = _is_positive(keys, nu[bad], ni[bad], n_items)

    users = np.concatenate([pu[:, None], nu], axis=1)
    items = np.concatenate([pi[:, None], ni], axis=1)
    labels = np.zeros(users.shape)
    labels[:, 0] = 1.0
    keep = np.ones(users.shape, dtype=bool)
    keep[saturated, 1:] = False
    return users[keep], items[keep], labels[keep]


# ------------------------------------------------------------ optimizers


@dataclass
class OptimizerState:
    name: str
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    scratch: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    @classmethod
    def create(cls, name: str, model: Model) -> OptimizerState:
        name = name.lower()
        if name == "sgd":
            return cls(name)
        if name == "adam":
            params = model.parameters()
            return cls(name, 0, {k: np.zeros_like(p) for k, p in params.items()},
                       {k: np.zeros_like(p) for k, p in params.items()})
        raise ConfigError(f"unknown optimizer {name!r}")


def _sparse_parts(grads: Gradients):
    yield "users", grads.user_ids, grads.users
    yield "items", grads.item_ids, grads.items


def optimizer_step(state: OptimizerState, model: Model, grads: Gradients, learning_rate: float) -> None:
    """Apply one update in place. SGD touches only the gradient's rows; Adam is dense."""
    params = model.parameters()
    for name, ids, g in _sparse_parts(grads):
        if g.shape != params[name][:, ids].shape:
            raise ValueError(f"gradient shape {g.shape} does not match {name}")
    dense = {}
    if grads.layer is not None:
        dense = {"layer": grads.layer, "head": grads.head}
    state.step += 1
    if state.name == "sgd":
        for name, ids, g in _sparse_parts(grads):
            params[name][:, ids] -= learning_rate * g
        for name, g in dense.items():
            params[name] -= learning_rate * g
        return

    t = state.step
    c1 = 1.0 - ADAM_BETA1 ** t
    c2 = 1.0 - ADAM_BETA2 ** t
    updates = [(name, (slice(None), ids), g) for name, ids, g in _sparse_parts(grads)]
    updates += [(name, Ellipsis, g) for name, g in dense.items()]
    for name, index, g in updates:
        m, v = state.m[name], state.v[name]
        m *= ADAM_BETA1
        v *= ADAM_BETA2
        m[index] += (1.0 - ADAM_BETA1) * g
        v[index] += (1.0 - ADAM_BETA2) * (g * g)
    # sqrt(v / c2) + eps == (sqrt(v) + eps * sqrt(c2)) / sqrt(c2), which saves a pass
    root_c2 = np.sqrt(c2)
    step_size = learning_rate * root_c2 / c1
    for name in state.m:
        scratch = state.scratch.get(name)
        if scratch is None:
            scratch = state.scratch[name] = np.empty_like(state.v[name])
        np.sqrt(state.v[name], out=scratch)
        scratch += ADAM_EPS * root_c2
        np.divide(state.m[name], scratch, out=scratch)
        scratch *= step_size
        params[name] -= scratch


# --------------------------------------------------------------- training


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    elapsed_seconds: float
    val_hr10: float | None = None

    def to_json(self) -> str:
        rec = {"epoch": self.epoch, "mean_loss": self.mean_loss,
               "elapsed_seconds": self.elapsed_seconds}
        if self.val_hr10 is not None:
            rec["val_hr10"] = self.val_hr10
        return json.dumps(rec)


def train(model: Model, split, cfg: TrainConfig, *, validate: bool = False,
          log_path=None, callback=None) -> list[EpochRecord]:
    """Train ``model`` in place and return the per-epoch trace.

    ``mean_loss`` is the data term averaged per example. With ``validate``
    the held-out HR@10 is recorded each epoch; it only observes, nothing
    is selected on it.
    """
    state = OptimizerState.create(cfg.optimizer, model)
    keys = train_keys(split.train_indptr, split.train_items, split.n_items)
    trace = []
    sink = open(log_path, "w") if log_path is not None else None
    try:
        for epoch in range(cfg.epochs):
            start = time.perf_counter()
            rng = seeding.stream(cfg.seed, "sampling", epoch)
            users, items, labels = sample_training_batch(split, cfg.neg_ratio, rng, keys)
            loss_sum = 0.0
            for lo in range(0, len(users), cfg.batch_size):
                hi = lo + cfg.batch_size
                grads = batch_gradients(model, users[lo:hi], items[lo:hi], labels[lo:hi], cfg.l2_lambda)
                optimizer_step(state, model, grads, cfg.learning_rate)
                loss_sum += grads.data_loss
            record = EpochRecord(epoch + 1, loss_sum / len(users), time.perf_counter() - start)
            if validate:
                from .evaluation import evaluate

                record.val_hr10 = evaluate(model, split, ks=(10,)).hr[10]
            log.info("epoch %d loss %.5f (%.2fs)", record.epoch, record.mean_loss, record.elapsed_seconds)
            trace.append(record)
            if sink is not None:
                sink.write(record.to_json() + "\n")
                sink.flush()
            if callback is not None:
                callback(record)
    finally:
        if sink is not None:
            sink.close()
    return trace
