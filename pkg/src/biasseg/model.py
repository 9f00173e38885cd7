"""Energy functional: clustering data term, contour length, distance penalty.

The data term measures, per region and channel, the squared residual
between the observed intensity and the bias-modulated cluster constant,
weighted by the region's membership.  Two regularizers are added: the
smoothed arc length of every zero contour (weight nu) and a penalty that
keeps each level set close to a signed distance function (weight mu).
All integrals are discretized as plain pixel sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSet, eval_bias
from .imagegrid import RasterImage
from .levelset import (
    DEFAULT_EPSILON,
    LevelSetStack,
    dirac,
    gradient_magnitude,
    memberships,
)

#: Default weight of the arc-length term at 8-bit intensity scale.
DEFAULT_NU = 0.005 * 255.0 * 255.0


@dataclass
class ModelParams:
    """Weights and numerical settings of one segmentation problem.

    ``lambdas`` has one positive entry per region, ``gammas`` one per
    channel.  Defaults follow the reference working point for raw 8-bit
    intensities: unit region and channel weights, mu = 1, nu = 0.005*255^2,
    epsilon = 1, dt = 0.1, step magnitude a = 2, ten basis functions, and
    convergence when the cluster matrix moves by less than 0.001 in
    absolute sum.
    """

    lambdas: np.ndarray
    gammas: np.ndarray
    mu: float = 1.0
    nu: float = DEFAULT_NU
    epsilon: float = DEFAULT_EPSILON
    dt: float = 0.1
    a: float = 2.0
    basis_count: int = 10
    max_iters: int = 200
    tol: float = 1e-3

    def __post_init__(self):
        self.lambdas = np.atleast_1d(np.asarray(self.lambdas, dtype=np.float64))
        self.gammas = np.atleast_1d(np.asarray(self.gammas, dtype=np.float64))
        if np.any(self.lambdas <= 0) or np.any(self.gammas <= 0):
            raise ValueError("region and channel weights must be positive")
        if self.mu < 0 or self.nu < 0:
            raise ValueError("mu and nu must be nonnegative")
        if self.epsilon <= 0 or self.dt <= 0 or self.tol <= 0 or self.a <= 0:
            raise ValueError("epsilon, dt, tol and a must be positive")

    @property
    def n_phases(self) -> int:
        return self.lambdas.size

    @property
    def n_channels(self) -> int:
        return self.gammas.size

    @classmethod
    def default(cls, phases: int = 2, channels: int = 1, **overrides) -> "ModelParams":
        """Defaults for a given region/channel count, with keyword overrides."""
        return cls(
            lambdas=np.ones(phases), gammas=np.ones(channels), **overrides
        )


def _check_dims(image: RasterImage, basis: BasisSet, weights, centers, params) -> None:
    if (image.height, image.width) != (basis.height, basis.width):
        raise ValueError("image and basis grids differ")
    weights = np.asarray(weights)
    centers = np.asarray(centers)
    if weights.shape != (basis.count, image.channels):
        raise ValueError(
            f"weight matrix must be {basis.count}x{image.channels}, got {weights.shape}"
        )
    if centers.shape != (params.n_phases, image.channels):
        raise ValueError(
            f"cluster matrix must be {params.n_phases}x{image.channels}, "
            f"got {centers.shape}"
        )
    if params.n_channels != image.channels:
        raise ValueError("params.gammas length must equal the channel count")


def bias_fields(basis: BasisSet, weights: np.ndarray) -> np.ndarray:
    """Per-channel bias fields w_j^T G, shape (channels, height, width)."""
    weights = np.asarray(weights, dtype=np.float64)
    return np.stack([eval_bias(weights[:, j], basis) for j in range(weights.shape[1])])


def residual(
    image: RasterImage,
    basis: BasisSet,
    weights: np.ndarray,
    centers: np.ndarray,
    params: ModelParams,
    i: int,
) -> np.ndarray:
    """Region i residual e_i = sum_j gamma_j (I_j - b_j c_ij)^2 (1-based i)."""
    if not 1 <= i <= params.n_phases:
        raise ValueError(f"region index {i} out of 1..{params.n_phases}")
    _check_dims(image, basis, weights, centers, params)
    return residuals(image, basis, weights, centers, params)[i - 1]


def residuals(
    image: RasterImage,
    basis: BasisSet,
    weights: np.ndarray,
    centers: np.ndarray,
    params: ModelParams,
) -> np.ndarray:
    """All region residual fields, shape (N, height, width)."""
    _check_dims(image, basis, weights, centers, params)
    centers = np.asarray(centers, dtype=np.float64)
    bias = bias_fields(basis, weights)
    out = np.zeros((params.n_phases, image.height, image.width))
    for i in range(params.n_phases):
        for j in range(image.channels):
            diff = image.channel(j) - bias[j] * centers[i, j]
            out[i] += params.gammas[j] * diff * diff
    return out


def data_energy(
    image: RasterImage,
    basis: BasisSet,
    weights: np.ndarray,
    centers: np.ndarray,
    stack,
    params: ModelParams,
) -> float:
    """Clustering energy sum_i lambda_i sum_x e_i(x) M_i(x).

    ``stack`` may be a :class:`LevelSetStack` or a precomputed (N, H, W)
    membership array (useful for crisp indicator memberships).
    """
    member = (
        memberships(stack, params.epsilon)
        if isinstance(stack, LevelSetStack)
        else np.asarray(stack, dtype=np.float64)
    )
    res = residuals(image, basis, weights, centers, params)
    if member.shape != res.shape:
        raise ValueError("membership stack does not match the region/grid layout")
    return float(np.einsum("i,ixy,ixy->", params.lambdas, res, member))


def length_term(stack: LevelSetStack, epsilon: float = DEFAULT_EPSILON) -> float:
    """Smoothed total contour length sum_q sum_x dirac(phi_q) |grad phi_q|."""
    total = 0.0
    for q in range(stack.count):
        phi = stack.phis[q]
        total += float(np.sum(dirac(phi, epsilon) * gradient_magnitude(phi)))
    return total


def regularizer(stack: LevelSetStack) -> float:
    """Distance penalty sum_q sum_x (|grad phi_q| - 1)^2 / 2."""
    total = 0.0
    for q in range(stack.count):
        mag = gradient_magnitude(stack.phis[q])
        total += float(np.sum((mag - 1.0) ** 2) / 2.0)
    return total


def total_energy(
    image: RasterImage,
    basis: BasisSet,
    weights: np.ndarray,
    centers: np.ndarray,
    stack: LevelSetStack,
    params: ModelParams,
) -> float:
    """Full objective: data term + nu * length + mu * distance penalty."""
    return (
        data_energy(image, basis, weights, centers, stack, params)
        + params.nu * length_term(stack, params.epsilon)
        + params.mu * regularizer(stack)
    )
