"""Embedding tables and forward scoring for GMF, MMF, CCF, QCF and QCF+.

Parameters are stored per part as ``(parts, rows, dim)`` float64 arrays:
part 0 is the real part, parts 1..3 the ``i``, ``j``, ``k`` coefficients
(CCF uses parts 0..1; MMF has four independent real parts; GMF has one).

All forward functions accept scalar ids or integer arrays and return the
pre-activation components with the component axis first, e.g. shape ``(4,)``
for one QCF pair or ``(4, B)`` for a batch.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import seeding
from ._container import read_container, write_container
from .errors import ConfigError, FormatError
from .hypercomplex import cmul, complex_init, qmul, quaternion_init, sigmoid

KINDS = ("gmf", "mmf", "ccf", "qcf", "qcf-plus")
TABLE_PARTS = {"gmf": 1, "mmf": 4, "ccf": 2, "qcf": 4}
N_COMPONENTS = {"gmf": 1, "mmf": 1, "ccf": 2, "qcf": 4, "qcf-plus": 4}

CHECKPOINT_MAGIC = "HYPERCF1"

# std of the real-valued (GMF/MMF) initializer, the NCF default
REAL_INIT_STD = 0.01


def table_kind(kind: str) -> str:
    return "qcf" if kind == "qcf-plus" else kind


@dataclass
class EmbeddingTable:
    kind: str
    users: np.ndarray  # (parts, M, d)
    items: np.ndarray  # (parts, N, d)

    def __post_init__(self):
        if self.kind not in TABLE_PARTS:
            raise ConfigError(f"unknown table kind {self.kind!r}")
        parts = TABLE_PARTS[self.kind]
        if self.users.ndim != 3 or self.items.ndim != 3:
            raise ConfigError("embedding parts must be (parts, rows, dim) arrays")
        if self.users.shape[0] != parts or self.items.shape[0] != parts:
            raise ConfigError(f"{self.kind} needs {parts} parts, got "
                              f"{self.users.shape[0]} / {self.items.shape[0]}")
        if self.users.shape[2] != self.items.shape[2]:
            raise ConfigError("user and item parts must share the latent dimension")

    @property
    def dim(self) -> int:
        return self.users.shape[2]

    @property
    def n_users(self) -> int:
        return self.users.shape[1]

    @property
    def n_items(self) -> int:
        return self.items.shape[1]

    @property
    def user_parts(self) -> list[np.ndarray]:
        return list(self.users)

    @property
    def item_parts(self) -> list[np.ndarray]:
        return list(self.items)

    def rows(self, u, i) -> tuple[np.ndarray, np.ndarray]:
        """Gather ``(parts, ..., d)`` user and item rows, checking id ranges."""
        u = np.asarray(u)
        i = np.asarray(i)
        if u.size and (u.min() < 0 or u.max() >= self.n_users):
            raise IndexError(f"user id out of range [0, {self.n_users})")
        if i.size and (i.min() < 0 or i.max() >= self.n_items):
            raise IndexError(f"item id out of range [0, {self.n_items})")
        return self.users[:, u], self.items[:, i]


@dataclass
class QuaternionDenseLayer:
    """Quaternion affine map ``out[r] = sigmoid(sum_s W[r, s] ⊗ x[s])`` without bias."""

    weights: np.ndarray  # (4, out_dim, in_dim)

    def __post_init__(self):
        if self.weights.ndim != 3 or self.weights.shape[0] != 4:
            raise ConfigError("quaternion weights must have shape (4, out_dim, in_dim)")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[2]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]

    def preactivation(self, x: np.ndarray) -> np.ndarray:
        if x.shape[0] != 4 or x.shape[-1] != self.in_dim:
            raise ValueError(f"expected input (4, ..., {self.in_dim}), got {x.shape}")
        w = self.weights
        xa, xb, xc, xd = x
        wa, wb, wc, wd = (p.T for p in w)
        return np.stack([
            xa @ wa - xb @ wb - xc @ wc - xd @ wd,
            xb @ wa + xa @ wb + xd @ wc - xc @ wd,
            xc @ wa - xd @ wb + xa @ wc + xb @ wd,
            xd @ wa + xc @ wb - xb @ wc + xa @ wd,
        ])

    def forward(self, x: np.ndarray) -> np.ndarray:
        return sigmoid(self.preactivation(x))


def qdense_forward(layer: QuaternionDenseLayer, x: np.ndarray) -> np.ndarray:
    return layer.forward(np.asarray(x, dtype=np.float64))


@dataclass
class Model:
    """An embedding table plus, for QCF+, the quaternion hidden layer and output unit."""

    kind: str
    table: EmbeddingTable
    seed: int = 0
    layer: QuaternionDenseLayer | None = None
    head: np.ndarray | None = None  # (4, d) output-unit weights
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if table_kind(self.kind) != self.table.kind:
            raise ConfigError(f"{self.kind} model cannot use a {self.table.kind} table")
        if self.kind == "qcf-plus":
            d = self.table.dim
            if self.layer is None or self.head is None:
                raise ConfigError("qcf-plus needs a hidden layer and an output unit")
            if self.layer.weights.shape != (4, d, d) or self.head.shape != (4, d):
                raise ConfigError("qcf-plus layer must be (4, d, d) and head (4, d)")

    @property
    def dim(self) -> int:
        return self.table.dim

    def parameters(self) -> dict[str, np.ndarray]:
        params = {"users": self.table.users, "items": self.table.items}
        if self.layer is not None:
            params["layer"] = self.layer.weights
            params["head"] = self.head
        return params

    def components(self, u, i) -> np.ndarray:
        return forward(self, u, i)

    def score(self, u, i) -> np.ndarray:
        return predict(self.kind, self.components(u, i))


def init_model(kind: str, n_users: int, n_items: int, dim: int, seed: int) -> Model:
    """Fresh model; each table draws from its own ``init`` sub-stream of ``seed``."""
    if kind not in KINDS:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {', '.join(KINDS)}")
    if dim < 1:
        raise ConfigError("dim must be >= 1")
    tk = table_kind(kind)
    ru = seeding.stream(seed, "init", seeding.INIT_USERS)
    ri = seeding.stream(seed, "init", seeding.INIT_ITEMS)
    if tk == "qcf":
        users, items = quaternion_init(n_users, dim, ru), quaternion_init(n_items, dim, ri)
    elif tk == "ccf":
        users, items = complex_init(n_users, dim, ru), complex_init(n_items, dim, ri)
    else:
        parts = TABLE_PARTS[tk]
        users = ru.normal(0.0, REAL_INIT_STD, size=(parts, n_users, dim))
        items = ri.normal(0.0, REAL_INIT_STD, size=(parts, n_items, dim))
    table = EmbeddingTable(tk, users, items)
    layer = head = None
    if kind == "qcf-plus":
        layer = QuaternionDenseLayer(quaternion_init(dim, dim, seeding.stream(seed, "init", seeding.INIT_LAYER)))
        head = quaternion_init(1, dim, seeding.stream(seed, "init", seeding.INIT_HEAD))[:, 0, :]
    return Model(kind, table, seed=seed, layer=layer, head=head)


def _require(table: EmbeddingTable, kind: str) -> None:
    if table.kind != kind:
        raise ConfigError(f"expected a {kind} table, got {table.kind}")


def gmf_forward(table: EmbeddingTable, u, i) -> np.ndarray:
    _require(table, "gmf")
    hu, hi = table.rows(u, i)
    return (hu * hi).sum(axis=-1)


def mmf_forward(table: EmbeddingTable, u, i) -> np.ndarray:
    _require(table, "mmf")
    hu, hi = table.rows(u, i)
    return (hu * hi).sum(axis=(0, -1))[None]


def ccf_forward(table: EmbeddingTable, u, i) -> np.ndarray:
    _require(table, "ccf")
    hu, hi = table.rows(u, i)
    return cmul(hu, hi).sum(axis=-1)


def qcf_forward(table: EmbeddingTable, u, i) -> np.ndarray:
    _require(table, "qcf")
    hu, hi = table.rows(u, i)
    return qmul(hu, hi).sum(axis=-1)


def qcf_plus_forward(model: Model, u, i) -> np.ndarray:
    """Per-dimension Hamilton product -> quaternion dense layer -> quaternion output unit."""
    hu, hi = model.table.rows(u, i)
    hidden = model.layer.forward(qmul(hu, hi))
    head = model.head.reshape((4,) + (1,) * (hidden.ndim - 2) + (-1,))
    return qmul(head, hidden).sum(axis=-1)


_FORWARD = {"gmf": gmf_forward, "mmf": mmf_forward, "ccf": ccf_forward, "qcf": qcf_forward}


def forward(model: Model, u, i) -> np.ndarray:
    if model.kind == "qcf-plus":
        return qcf_plus_forward(model, u, i)
    return _FORWARD[model.kind](model.table, u, i)


def predict(kind: str, components) -> np.ndarray:
    """Mean of the component sigmoids: the ranking score in (0, 1)."""
    components = np.asarray(components, dtype=np.float64)
    expected = N_COMPONENTS.get(kind)
    if expected is None:
        raise ConfigError(f"unknown model kind {kind!r}")
    if components.shape[0] != expected:
        raise ValueError(f"{kind} expects {expected} components, got {components.shape[0]}")
    sig = sigmoid(components)
    if expected == 1:
        return sig[0]
    # real part added last: (sigma(a) + 1.5) / 4 comes out exact when b = c = d = 0
    return (sig[0] + sig[1:].sum(axis=0)) / expected


def save_checkpoint(model: Model, path, config: dict | None = None) -> None:
    meta = {
        "kind": model.kind,
        "dim": model.dim,
        "n_users": model.table.n_users,
        "n_items": model.table.n_items,
        "seed": int(model.seed),
        "config": config if config is not None else model.meta.get("config", {}),
    }
    write_container(path, CHECKPOINT_MAGIC, meta, model.parameters())


def load_checkpoint(path) -> Model:
    meta, arrays = read_container(Path(path), CHECKPOINT_MAGIC)
    kind = meta.get("kind")
    if kind not in KINDS:
        raise FormatError(f"{path}: unknown model kind {kind!r}")
    table = EmbeddingTable(table_kind(kind), arrays["users"], arrays["items"])
    layer = QuaternionDenseLayer(arrays["layer"]) if "layer" in arrays else None
    model = Model(kind, table, seed=meta["seed"], layer=layer, head=arrays.get("head"),
                  meta={"config": meta.get("config", {})})
    if (model.dim, table.n_users, table.n_items) != (meta["dim"], meta["n_users"], meta["n_items"]):
        raise FormatError(f"{path}: header does not match stored arrays")
    return model
