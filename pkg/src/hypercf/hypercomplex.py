"""Complex and quaternion algebra used by the scoring functions.

Scalars are :class:`Complex` / :class:`Quaternion` named tuples. Their fields
may equally be numpy arrays, in which case every operation acts elementwise,
so the same functions serve both the scalar API and the vectorized models.
For stacked arrays (leading axis of length 4 or 2) use :func:`qmul`,
:func:`qconj` and :func:`cmul`.
"""
from __future__ import annotations

import math
from typing import NamedTuple, Union

import numpy as np

Real = Union[float, np.ndarray]


class Complex(NamedTuple):
    re: Real
    im: Real


class Quaternion(NamedTuple):
    """``a + b i + c j + d k``."""

    a: Real
    b: Real
    c: Real
    d: Real


def complex_mul(x: Complex, y: Complex) -> Complex:
    """Complex product; commutative."""
    return Complex(x.re * y.re - x.im * y.im, x.im * y.re + x.re * y.im)


def hamilton_product(p: Quaternion, q: Quaternion) -> Quaternion:
    """Hamilton product ``p ⊗ q`` (not commutative).

    >>> hamilton_product(Quaternion(0, 1, 0, 0), Quaternion(0, 0, 1, 0))
    Quaternion(a=0, b=0, c=0, d=1)
    """
    a1, b1, c1, d1 = p
    a2, b2, c2, d2 = q
    return Quaternion(
        a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
        a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
        a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
        a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
    )


def conjugate(q: Quaternion) -> Quaternion:
    return Quaternion(q[0], -q[1], -q[2], -q[3])


def quaternion_norm(q: Quaternion) -> float:
    a, b, c, d = q
    return math.sqrt(a * a + b * b + c * c + d * d)


def qmul(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Hamilton product of stacked quaternion arrays (leading axis 4), broadcasting."""
    return np.stack(hamilton_product(Quaternion(*p), Quaternion(*q)))


def qmatmul(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Quaternion matrix product ``out[n, m] = sum_k p[n, k] ⊗ q[k, m]``.

    ``p`` is ``(4, n, k)`` and ``q`` is ``(4, k, m)``; the Hamilton product
    with every scalar multiply replaced by a real matmul.
    """
    a1, b1, c1, d1 = p
    a2, b2, c2, d2 = q
    return np.stack([
        a1 @ a2 - b1 @ b2 - c1 @ c2 - d1 @ d2,
        a1 @ b2 + b1 @ a2 + c1 @ d2 - d1 @ c2,
        a1 @ c2 - b1 @ d2 + c1 @ a2 + d1 @ b2,
        a1 @ d2 + b1 @ c2 - c1 @ b2 + d1 @ a2,
    ])


def qconj(q: np.ndarray) -> np.ndarray:
    out = -np.asarray(q)
    out[0] = q[0]
    return out


def cmul(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Complex product of stacked arrays (leading axis 2), broadcasting."""
    return np.stack(complex_mul(Complex(*x), Complex(*y)))


def cconj(x: np.ndarray) -> np.ndarray:
    return np.stack([x[0], -x[1]])


def sigmoid(x):
    """Logistic function, overflow-free for any finite input."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def split_sigmoid(z):
    """Apply :func:`sigmoid` to every component of a Complex or Quaternion."""
    return type(z)(*(sigmoid(part) for part in z))


def quaternion_init(rows: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Sample a ``rows x dim`` quaternion matrix, returned as shape ``(4, rows, dim)``.

    Each entry is ``phi * (cos(theta) + u sin(theta))`` with ``u`` a uniformly
    random unit pure quaternion, ``theta ~ U(-pi, pi)`` and
    ``phi ~ U(0, 1/sqrt(2 dim))``. Draw order from ``rng``: axis normals
    ``(3, rows, dim)``, then theta, then phi.
    """
    if rows < 1 or dim < 1:
        raise ValueError(f"rows and dim must be >= 1, got rows={rows}, dim={dim}")
    sigma = 1.0 / math.sqrt(2.0 * dim)
    axis = rng.standard_normal((3, rows, dim))
    norm = np.sqrt((axis * axis).sum(axis=0))
    # a zero-length normal draw has probability zero; map it to the i axis
    degenerate = norm == 0.0
    if degenerate.any():
        axis[:, degenerate] = np.array([1.0, 0.0, 0.0])[:, None]
        norm[degenerate] = 1.0
    axis /= norm
    theta = rng.uniform(-math.pi, math.pi, size=(rows, dim))
    phi = rng.uniform(0.0, sigma, size=(rows, dim))
    out = np.empty((4, rows, dim))
    out[0] = phi * np.cos(theta)
    out[1:] = phi * np.sin(theta) * axis
    return out


def complex_init(rows: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Complex counterpart of :func:`quaternion_init`, shape ``(2, rows, dim)``."""
    if rows < 1 or dim < 1:
        raise ValueError(f"rows and dim must be >= 1, got rows={rows}, dim={dim}")
    sigma = 1.0 / math.sqrt(2.0 * dim)
    theta = rng.uniform(-math.pi, math.pi, size=(rows, dim))
    phi = rng.uniform(0.0, sigma, size=(rows, dim))
    return np.stack([phi * np.cos(theta), phi * np.sin(theta)])
