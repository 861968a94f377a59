"""
Quaternion arithmetic behind the scoring function
=================================================

A user and an item each get a quaternion per latent dimension. Their
interaction is the Hamilton product, which mixes all four parts and does
not commute, so ``user ⊗ item`` and ``item ⊗ user`` score differently.
"""

import numpy as np

from hypercf import Quaternion, hamilton_product, quaternion_init, quaternion_norm, split_sigmoid

# the basis units: i*j = k but j*i = -k
i, j = Quaternion(0.0, 1.0, 0.0, 0.0), Quaternion(0.0, 0.0, 1.0, 0.0)
print("i*j =", hamilton_product(i, j))
print("j*i =", hamilton_product(j, i))

# a worked product
p, q = Quaternion(1.0, 2.0, 3.0, 4.0), Quaternion(5.0, 6.0, 7.0, 8.0)
pq = hamilton_product(p, q)
print("p*q =", pq)

# the norm is multiplicative, so products never blow up or shrink unexpectedly
print("|p*q| =", quaternion_norm(pq), " |p||q| =", quaternion_norm(p) * quaternion_norm(q))

# fields may be whole arrays: this multiplies 5 pairs at once
rng = np.random.default_rng(0)
a, b = rng.normal(size=(2, 4, 5))
print(np.round(np.array(hamilton_product(Quaternion(*a), Quaternion(*b))), 3))

# the split activation squashes every part separately
print(split_sigmoid(Quaternion(0.0, np.log(3.0), -50.0, 50.0)))

# initial embeddings: a random pure-imaginary axis, a phase and a small modulus
emb = quaternion_init(rows=1000, dim=16, rng=rng)
moduli = np.sqrt((emb ** 2).sum(axis=0))
print("init shape", emb.shape, " largest modulus", moduli.max().round(4), " bound", round(1 / np.sqrt(32), 4))
