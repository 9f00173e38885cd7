"""Alternating minimization: cluster centers, level set flow, weight solve.

One outer iteration updates the cluster matrix C by its closed form,
advances every level set by one explicit Euler step of the gradient
flow, then re-solves the basis weights W per channel from a symmetric
linear system.  Iteration stops once the absolute sum of cluster-center
changes drops below the tolerance, or at the iteration cap.

The weight solve never re-evaluates basis polynomials: the pixelwise
products it aggregates are precomputed once per run (see
:class:`~biasseg.basis.Moments`).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import BasisSet, Moments, build_basis, eval_bias, precompute_moments
from .imagegrid import LabelMap, RasterImage, load_image
from .levelset import (
    LevelSetStack,
    curvature,
    dirac,
    disk_init,
    init_binary_step,
    labels_from_stack,
    laplacian,
    membership_derivative,
    memberships,
    required_level_sets,
    threshold_init,
)
from .model import ModelParams, residuals, total_energy

#: Memberships summing below this are treated as an empty region.
EMPTY_REGION_EPS = 1e-12

#: Condition-number cap for the per-channel weight systems.
MAX_WEIGHT_CONDITION = 1e12

#: Floor applied to bias fields before dividing the observed image.
BIAS_DIVISION_FLOOR = 1e-6


@dataclass
class SolveConfig:
    """How a run is initialized and which updates are active.

    mode "full" alternates all three updates; "bias_frozen" pins the
    weights to the unit constant column (bias identically one) and skips
    the weight solve, reducing the model to its piecewise-constant
    special case.  init picks the level set seed: intensity thresholds,
    centered disks, or mask image files (one per level set).  w_init
    "random" draws the initial weights uniformly from [0, 1) with the
    given seed; "constant" starts from the unit constant column.
    """

    mode: str = "full"
    init: str = "threshold"
    mask_paths: tuple = ()
    seed: int = 42
    w_init: str = "random"

    def __post_init__(self):
        if self.mode not in ("full", "bias_frozen"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.init not in ("threshold", "disk", "mask"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.w_init not in ("random", "constant"):
            raise ValueError(f"unknown w_init {self.w_init!r}")
        if self.init == "mask" and not self.mask_paths:
            raise ValueError("init 'mask' needs mask_paths")


@dataclass
class SolveTrace:
    """Per-iteration record: energy, cluster snapshot, center movement."""

    iterations: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    center_history: list = field(default_factory=list)
    center_deltas: list = field(default_factory=list)
    converged: bool = False
    iterations_run: int = 0

    def append(self, iteration: int, energy: float, centers: np.ndarray, delta: float):
        self.iterations.append(iteration)
        self.energies.append(energy)
        self.center_history.append(np.array(centers, copy=True))
        self.center_deltas.append(delta)
        self.iterations_run = iteration

    def write_csv(self, path) -> None:
        """Columns: iter, energy, sum_dc, then c_11..c_NL row-major."""
        n, l = self.center_history[0].shape if self.center_history else (0, 0)
        names = [f"c_{i + 1}{j + 1}" for i in range(n) for j in range(l)]
        with open(path, "w", newline="") as fh:
            fh.write(",".join(["iter", "energy", "sum_dc"] + names) + "\n")
            for it, en, cs, dc in zip(
                self.iterations, self.energies, self.center_history, self.center_deltas
            ):
                row = [str(it), f"{en:.17g}", f"{dc:.17g}"]
                row += [f"{c:.17g}" for c in cs.ravel()]
                fh.write(",".join(row) + "\n")


@dataclass
class SolveResult:
    """Everything a finished run produces."""

    labels: LabelMap
    biases: np.ndarray  # (channels, height, width)
    corrected: RasterImage
    weights: np.ndarray  # (basis count, channels)
    centers: np.ndarray  # (phases, channels)
    stack: LevelSetStack
    trace: SolveTrace


def _memberships_of(stack, params: ModelParams) -> np.ndarray:
    if isinstance(stack, LevelSetStack):
        return memberships(stack, params.epsilon)
    return np.asarray(stack, dtype=np.float64)


def update_centers(
    image: RasterImage,
    basis: BasisSet,
    weights: np.ndarray,
    stack,
    params: ModelParams,
    prev: np.ndarray | None = None,
) -> np.ndarray:
    """Closed-form cluster update: c_ij = sum(I_j b_j M_i) / sum(b_j^2 M_i).

    ``stack`` may be a level set stack or an (N, H, W) membership array.
    A region whose denominator vanishes keeps its previous center (with a
    warning); without a previous matrix that case is an error.
    """
    member = _memberships_of(stack, params)
    n = params.n_phases
    centers = np.empty((n, image.channels))
    member_flat = member.reshape(n, -1)
    for j in range(image.channels):
        bias = eval_bias(np.asarray(weights)[:, j], basis).ravel()
        img = image.channel(j).ravel()
        # fixed-order reductions keep results independent of BLAS threading
        num = np.einsum("np,p->n", member_flat, img * bias, optimize=False)
        den = np.einsum("np,p->n", member_flat, bias * bias, optimize=False)
        for i in range(n):
            if den[i] < EMPTY_REGION_EPS:
                if prev is None:
                    raise ZeroDivisionError(
                        f"region {i + 1} channel {j + 1} has vanished membership "
                        "and no previous center to keep"
                    )
                warnings.warn(
                    f"region {i + 1} channel {j + 1}: vanished membership, "
                    "keeping previous center",
                    RuntimeWarning,
                    stacklevel=2,
                )
                centers[i, j] = np.asarray(prev)[i, j]
            else:
                centers[i, j] = num[i] / den[i]
    return centers


def data_term_flow(
    stack: LevelSetStack,
    image: RasterImage,
    basis: BasisSet,
    weights: np.ndarray,
    centers: np.ndarray,
    params: ModelParams,
    q: int,
    res: np.ndarray | None = None,
) -> np.ndarray:
    """Data contribution to d(phi_q)/dt: -sum_i lambda_i e_i dM_i/dphi_q."""
    if res is None:
        res = residuals(image, basis, weights, centers, params)
    flow = np.zeros((stack.height, stack.width))
    for i in range(1, params.n_phases + 1):
        deriv = membership_derivative(stack, i, q, params.epsilon)
        flow -= params.lambdas[i - 1] * res[i - 1] * deriv
    return flow


def update_levelsets(
    stack: LevelSetStack,
    image: RasterImage,
    basis: BasisSet,
    weights: np.ndarray,
    centers: np.ndarray,
    params: ModelParams,
) -> LevelSetStack:
    """One explicit Euler step of the gradient flow for every level set.

    d(phi_q)/dt = data flow + mu (lap phi_q - div n_q) + nu dirac(phi_q) div n_q
    with n_q the normalized gradient of phi_q.
    """
    res = residuals(image, basis, weights, centers, params)
    new_phis = np.empty_like(stack.phis)
    with np.errstate(over="ignore", invalid="ignore"):  # guarded by the check below
        for q in range(stack.count):
            phi = stack.phis[q]
            curv = curvature(phi)
            rhs = data_term_flow(stack, image, basis, weights, centers, params, q + 1, res)
            rhs += params.mu * (laplacian(phi) - curv)
            rhs += params.nu * dirac(phi, params.epsilon) * curv
            new_phis[q] = phi + params.dt * rhs
    if not np.all(np.isfinite(new_phis)):
        raise FloatingPointError(
            "level set update produced non-finite values; reduce dt or check inputs"
        )
    return LevelSetStack(new_phis, stack.n_phases)


def update_weights(
    image: RasterImage,
    basis: BasisSet,
    centers: np.ndarray,
    stack,
    params: ModelParams,
    moments: Moments | None = None,
) -> np.ndarray:
    """Per-channel weight solve w_j = A_j^{-1} v_j.

    A_j aggregates (sum_i lambda_i c_ij^2 M_i) G G^T over pixels and v_j
    aggregates (I_j sum_i lambda_i c_ij M_i) G.  The symmetric system is
    solved by a direct factorization; ill conditioning (estimate above
    1e12) is an error suggesting a smaller basis count.
    """
    if moments is None:
        moments = precompute_moments(basis, image)
    member = _memberships_of(stack, params)
    centers = np.asarray(centers, dtype=np.float64)
    member_flat = member.reshape(params.n_phases, -1)
    weights = np.empty((basis.count, image.channels))
    for j in range(image.channels):
        lam_c2 = params.lambdas * centers[:, j] ** 2
        lam_c = params.lambdas * centers[:, j]
        a_mat = moments.weighted_gram(lam_c2 @ member_flat)
        v = moments.weighted_projection(j, lam_c @ member_flat)
        cond = np.linalg.cond(a_mat)
        if not np.isfinite(cond) or cond > MAX_WEIGHT_CONDITION:
            raise np.linalg.LinAlgError(
                f"weight system for channel {j + 1} is ill conditioned "
                f"(estimate {cond:.3g}); try a smaller basis count"
            )
        w = np.linalg.solve(a_mat, v)
        # One refinement step keeps the residual at noise level.
        resid = v - a_mat @ w
        tol = 1e-8 * (1.0 + np.abs(v).max())
        if np.abs(resid).max() > tol:
            w = w + np.linalg.solve(a_mat, resid)
            resid = v - a_mat @ w
            if np.abs(resid).max() > tol:
                raise ArithmeticError(
                    f"weight solve residual {np.abs(resid).max():.3g} exceeds {tol:.3g}"
                )
        weights[:, j] = w
    return weights


def initial_weights(
    n_basis: int, n_channels: int, config: SolveConfig
) -> np.ndarray:
    """Starting weight matrix: seeded uniform [0, 1) draws, or the unit
    constant column when the bias is frozen or w_init is 'constant'."""
    if config.mode == "bias_frozen" or config.w_init == "constant":
        weights = np.zeros((n_basis, n_channels))
        weights[0, :] = 1.0
        return weights
    rng = np.random.default_rng(config.seed)
    return rng.random((n_basis, n_channels))


def initial_stack(
    image: RasterImage, config: SolveConfig, params: ModelParams
) -> LevelSetStack:
    """Build the starting level set stack per the configured strategy."""
    n = params.n_phases
    if config.init == "threshold":
        return threshold_init(image, n, a=params.a)
    if config.init == "disk":
        return disk_init(image.width, image.height, n, a=params.a)
    q = required_level_sets(n)
    if len(config.mask_paths) != q:
        raise ValueError(f"{n} phases need {q} mask files, got {len(config.mask_paths)}")
    phis = []
    for path in config.mask_paths:
        mask_img = load_image(path)
        if mask_img.channels != 1:
            raise ValueError(f"mask {path} must be single-channel")
        if (mask_img.height, mask_img.width) != (image.height, image.width):
            raise ValueError(f"mask {path} grid does not match the image")
        phis.append(init_binary_step(mask_img.channel(0) > 0, params.a))
    return LevelSetStack(np.stack(phis), n)


def run(
    image: RasterImage,
    config: SolveConfig | None = None,
    params: ModelParams | None = None,
) -> SolveResult:
    """Segment an image and estimate its bias by alternating minimization.

    Parameters
    ----------
    image : RasterImage
        Observed image; the channel count fixes L.
    config : SolveConfig, optional
        Initialization and mode; defaults to a full run with threshold
        initialization and seed 42.
    params : ModelParams, optional
        Model weights and numerics; defaults to two phases with the
        standard working point.

    Returns
    -------
    SolveResult
        Hard labels (argmax membership), per-channel bias fields,
        bias-corrected image (observed / bias, bias floored at 1e-6),
        final weight and cluster matrices, the final stack, and the
        iteration trace.  ``trace.converged`` reports whether the
        cluster-center criterion fired before the iteration cap.
    """
    config = config or SolveConfig()
    params = params or ModelParams.default(channels=image.channels)
    if params.n_channels != image.channels:
        raise ValueError(
            f"params expect {params.n_channels} channels, image has {image.channels}"
        )
    basis = build_basis(image.width, image.height, params.basis_count)
    moments = precompute_moments(basis, image)
    weights = initial_weights(params.basis_count, image.channels, config)
    stack = initial_stack(image, config, params)

    trace = SolveTrace()
    centers = None
    for iteration in range(1, params.max_iters + 1):
        new_centers = update_centers(image, basis, weights, stack, params, prev=centers)
        delta = np.inf if centers is None else float(np.abs(new_centers - centers).sum())
        centers = new_centers
        stack = update_levelsets(stack, image, basis, weights, centers, params)
        if config.mode == "full":
            weights = update_weights(image, basis, centers, stack, params, moments)
        energy = total_energy(image, basis, weights, centers, stack, params)
        trace.append(iteration, energy, centers, delta)
        if delta < params.tol:
            trace.converged = True
            break

    labels = labels_from_stack(stack, params.epsilon)
    biases = np.stack(
        [eval_bias(weights[:, j], basis) for j in range(image.channels)]
    )
    corrected = RasterImage(
        np.stack(
            [
                image.channel(j) / np.maximum(biases[j], BIAS_DIVISION_FLOOR)
                for j in range(image.channels)
            ],
            axis=2,
        )
    )
    return SolveResult(labels, biases, corrected, weights, centers, stack, trace)


def run_chan_vese(
    image: RasterImage,
    config: SolveConfig | None = None,
    params: ModelParams | None = None,
) -> SolveResult:
    """Piecewise-constant reduction: bias pinned to one, two phases, gray.

    Identical to :func:`run` with mode "bias_frozen"; provided as the
    classic two-region baseline for comparison runs.
    """
    config = config or SolveConfig()
    params = params or ModelParams.default()
    if image.channels != 1:
        raise ValueError("the piecewise-constant reduction is single-channel")
    if params.n_phases != 2:
        raise ValueError("the piecewise-constant reduction is two-phase")
    return run(image, replace(config, mode="bias_frozen"), params)
