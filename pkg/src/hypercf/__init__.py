"""Collaborative filtering with complex and quaternion embeddings."""
from .hypercomplex import (
    Complex,
    Quaternion,
    complex_mul,
    hamilton_product,
    quaternion_init,
    quaternion_norm,
    split_sigmoid,
)
from .model import KINDS, EmbeddingTable, Model, QuaternionDenseLayer, init_model, predict
from .training import TrainConfig, train
from .data import FormatOptions, build_dataset, leave_one_out, load_interactions, prepare_split
from .evaluation import EvalReport, evaluate, hr_at_k, ndcg_at_k

__version__ = "0.1.0"
