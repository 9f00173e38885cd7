"""Orthogonal 2-D Legendre basis for smooth multiplicative bias fields.

The supported basis holds up to ten functions of the normalized
coordinates (x1, x2) in [-1, 1]^2, in this fixed order:

    1, x1, P2(x1), P3(x1), x2, x1*x2, P2(x1)*x2, P2(x2), x1*P2(x2), P3(x2)

with P2(t) = (3t^2 - 1)/2 and P3(t) = (5t^3 - 3t)/2.  Distinct members
are orthogonal under the continuous inner product on the square, which
keeps the weight-solve systems well conditioned.  A bias field is the
pointwise dot product b(x) = w^T G(x) of a weight vector with the sampled
basis.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .imagegrid import RasterImage, domain_grid

#: (order in x1, order in x2) of each basis member, in the supported order.
BASIS_ORDERS = (
    (0, 0),
    (1, 0),
    (2, 0),
    (3, 0),
    (0, 1),
    (1, 1),
    (2, 1),
    (0, 2),
    (1, 2),
    (0, 3),
)

MAX_BASIS_COUNT = len(BASIS_ORDERS)


def legendre_1d(order: int, t):
    """Legendre polynomial P_order(t) for orders 0..3."""
    t = np.asarray(t, dtype=np.float64)
    if order == 0:
        out = np.ones_like(t)
    elif order == 1:
        out = t.copy()
    elif order == 2:
        out = (3.0 * t * t - 1.0) / 2.0
    elif order == 3:
        out = (5.0 * t * t * t - 3.0 * t) / 2.0
    else:
        raise ValueError(f"unsupported Legendre order {order} (0..3)")
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class BasisSet:
    """Basis functions sampled on a pixel grid, shape (count, height, width).

    Samples are read-only; a basis set is safe to share and to cache.
    """

    samples: np.ndarray

    def __post_init__(self):
        if self.samples.ndim != 3:
            raise ValueError("basis samples must have shape (count, height, width)")
        self.samples.setflags(write=False)

    @property
    def count(self) -> int:
        return self.samples.shape[0]

    @property
    def height(self) -> int:
        return self.samples.shape[1]

    @property
    def width(self) -> int:
        return self.samples.shape[2]

    def flat(self) -> np.ndarray:
        """(count, height*width) view of the samples."""
        return self.samples.reshape(self.count, -1)


@lru_cache(maxsize=8)
def build_basis(width: int, height: int, count: int = MAX_BASIS_COUNT) -> BasisSet:
    """Sample the first ``count`` basis functions on a width x height grid.

    Results are cached per grid size, so repeated solves on same-sized
    images never re-evaluate the polynomials.
    """
    if not 1 <= count <= MAX_BASIS_COUNT:
        raise ValueError(f"basis count must be in 1..{MAX_BASIS_COUNT}, got {count}")
    x1, x2 = domain_grid(width, height)
    samples = np.empty((count, height, width), dtype=np.float64)
    for k, (ox1, ox2) in enumerate(BASIS_ORDERS[:count]):
        samples[k] = legendre_1d(ox1, x1) * legendre_1d(ox2, x2)
    return BasisSet(samples)


def eval_bias(weights: np.ndarray, basis: BasisSet) -> np.ndarray:
    """Bias field b(x) = w^T G(x) from one weight column, shape (H, W)."""
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if weights.size != basis.count:
        raise ValueError(
            f"weight vector has {weights.size} entries, basis has {basis.count}"
        )
    return (weights @ basis.flat()).reshape(basis.height, basis.width)


def gram_matrix(basis: BasisSet) -> np.ndarray:
    """Continuous inner products int g_k g_l over [-1,1]^2, estimated by
    composite trapezoidal quadrature on the sample grid."""
    wx = np.ones(basis.width)
    wx[0] = wx[-1] = 0.5
    wx *= 2.0 / (basis.width - 1)
    wy = np.ones(basis.height)
    wy[0] = wy[-1] = 0.5
    wy *= 2.0 / (basis.height - 1)
    w2d = (wy[:, None] * wx[None, :]).ravel()
    flat = basis.flat()
    return (flat * w2d) @ flat.T


def orthogonality_ratio(basis: BasisSet) -> float:
    """Largest |G_kl| / sqrt(G_kk G_ll) over k != l; near 0 when orthogonal."""
    gram = gram_matrix(basis)
    diag = np.sqrt(np.diag(gram))
    normalized = np.abs(gram) / np.outer(diag, diag)
    np.fill_diagonal(normalized, 0.0)
    return float(normalized.max())


@dataclass(frozen=True)
class Moments:
    """Image/basis products fixed across iterations of the solver.

    Holds the flattened basis samples and, per channel j, the pointwise
    products I_j(x) G(x).  The weight solve aggregates the per-pixel
    outer products G(x) G(x)^T against iteration-dependent coefficients
    without ever re-evaluating a polynomial.
    """

    basis: BasisSet
    image_basis: np.ndarray  # (channels, count, pixels) = I_j(x) * G(x)

    @property
    def channels(self) -> int:
        return self.image_basis.shape[0]

    def weighted_gram(self, coeff: np.ndarray) -> np.ndarray:
        """sum_x coeff(x) G(x) G(x)^T for a flattened coefficient field.

        Accumulated with a fixed reduction order (no BLAS threading), so
        results never depend on the thread budget.
        """
        flat = self.basis.flat()
        return np.einsum("kp,lp->kl", flat * coeff, flat, optimize=False)

    def weighted_projection(self, j: int, coeff: np.ndarray) -> np.ndarray:
        """sum_x coeff(x) I_j(x) G(x) for a flattened coefficient field."""
        return np.einsum("kp,p->k", self.image_basis[j], coeff, optimize=False)


def precompute_moments(basis: BasisSet, image: RasterImage) -> Moments:
    """Build the per-pixel product tables used by the weight solve."""
    if (image.height, image.width) != (basis.height, basis.width):
        raise ValueError(
            f"image grid {image.height}x{image.width} does not match "
            f"basis grid {basis.height}x{basis.width}"
        )
    flat = basis.flat()
    image_basis = np.empty((image.channels, basis.count, flat.shape[1]))
    for j in range(image.channels):
        image_basis[j] = flat * image.channel(j).ravel()
    image_basis.setflags(write=False)
    return Moments(basis, image_basis)
