"""Level set stacks, smoothed step functions, and membership encodings.

A stack of Q = ceil(log2 N) level set functions partitions the image
domain into N regions.  Each region i < N owns the binary code of i-1
over Q digits (most significant digit on phi_1), where digit 0 reads
"inside" (phi < 0, factor 1 - H(phi)) and digit 1 reads "outside"
(factor H(phi)).  Region N absorbs every remaining code; its code range
is decomposed into maximal aligned blocks so trailing free digits drop
out of the product entirely.  For N = 2 this yields the classic pair
1 - H(phi), H(phi); for N = 3 it yields

    M1 = (1 - H(phi1))(1 - H(phi2)),  M2 = (1 - H(phi1)) H(phi2),
    M3 = H(phi1),

and the memberships sum to one pointwise for every N.

The step function is the arctan-smoothed Heaviside with width epsilon;
its derivative is the Cauchy kernel used as the smoothed Dirac delta.
Spatial operators use central differences with replicate boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imagegrid import LabelMap, RasterImage

#: Smoothing width of the step function; intensity-free, so 1 works at any scale.
DEFAULT_EPSILON = 1.0

#: Floor added to gradient magnitudes before normalizing (curvature).
GRAD_FLOOR = 1e-10

#: Threshold fractions of the maximal intensity used to seed the level sets.
THRESHOLD_FRACTIONS = {2: (0.5,), 3: (0.8, 0.3)}


def heaviside(x, epsilon: float = DEFAULT_EPSILON):
    """Smoothed step H(x) = 1/2 [1 + (2/pi) arctan(x/epsilon)].

    Evaluated through |x| and reflected, so H(-x) == 1 - H(x) holds
    bit-exactly and H(x) + H(-x) == 1 without rounding residue.
    """
    x = np.asarray(x, dtype=np.float64)
    upper = 0.5 + np.arctan(np.abs(x) / epsilon) / np.pi
    out = np.where(x >= 0.0, upper, 1.0 - upper)
    if out.ndim == 0:
        return float(out)
    return out


def dirac(x, epsilon: float = DEFAULT_EPSILON):
    """Smoothed delta, the derivative of :func:`heaviside`:
    (1/pi) epsilon / (epsilon^2 + x^2)."""
    x = np.asarray(x, dtype=np.float64)
    out = epsilon / (np.pi * (epsilon * epsilon + x * x))
    if out.ndim == 0:
        return float(out)
    return out


def required_level_sets(n_phases: int) -> int:
    """Q = ceil(log2 N), the number of level set functions for N regions."""
    if n_phases < 2:
        raise ValueError("need at least 2 phases")
    return max(1, math.ceil(math.log2(n_phases)))


def _dyadic_blocks(lo: int, hi: int) -> list[tuple[int, int]]:
    """Cover [lo, hi) with maximal aligned (start, size) power-of-two blocks."""
    blocks = []
    while lo < hi:
        size = lo & -lo if lo else hi
        while lo + size > hi:
            size >>= 1
        blocks.append((lo, size))
        lo += size
    return blocks


def region_codes(n_phases: int) -> tuple[tuple[tuple, ...], ...]:
    """Membership codes per region: tuples over {0, 1, None} of length Q.

    Digit 1 selects H(phi_q), digit 0 selects 1 - H(phi_q), None drops the
    factor.  Regions 1..N-1 get one full code each; region N gets one code
    per aligned block of the leftover range [N-1, 2^Q).
    """
    q = required_level_sets(n_phases)
    codes = []
    for i in range(n_phases - 1):
        codes.append((tuple((i >> (q - 1 - d)) & 1 for d in range(q)),))
    last = []
    for start, size in _dyadic_blocks(n_phases - 1, 1 << q):
        bits = size.bit_length() - 1  # trailing free digits
        prefix = start >> bits
        code = [None] * q
        for d in range(q - bits):
            code[d] = (prefix >> (q - bits - 1 - d)) & 1
        last.append(tuple(code))
    codes.append(tuple(last))
    return tuple(codes)


@dataclass
class LevelSetStack:
    """Q level set fields encoding an N-region partition.

    ``phis`` has shape (Q, height, width); sign is negative inside the
    zero contour and positive outside.
    """

    phis: np.ndarray
    n_phases: int

    def __post_init__(self):
        self.phis = np.asarray(self.phis, dtype=np.float64)
        if self.phis.ndim != 3:
            raise ValueError("phis must have shape (Q, height, width)")
        q = required_level_sets(self.n_phases)
        if self.phis.shape[0] != q:
            raise ValueError(
                f"{self.n_phases} phases need {q} level sets, got {self.phis.shape[0]}"
            )
        if not np.all(np.isfinite(self.phis)):
            raise ValueError("level set values must be finite")

    @property
    def count(self) -> int:
        return self.phis.shape[0]

    @property
    def height(self) -> int:
        return self.phis.shape[1]

    @property
    def width(self) -> int:
        return self.phis.shape[2]

    def copy(self) -> "LevelSetStack":
        return LevelSetStack(self.phis.copy(), self.n_phases)


def membership(stack: LevelSetStack, i: int, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Membership field of region i (1-based), values in [0, 1]."""
    if not 1 <= i <= stack.n_phases:
        raise ValueError(f"region index {i} out of 1..{stack.n_phases}")
    h = heaviside(stack.phis, epsilon)
    total = np.zeros((stack.height, stack.width))
    for code in region_codes(stack.n_phases)[i - 1]:
        term = np.ones((stack.height, stack.width))
        for q, digit in enumerate(code):
            if digit is None:
                continue
            term = term * (h[q] if digit else 1.0 - h[q])
        total += term
    return total


def memberships(stack: LevelSetStack, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """All N membership fields stacked, shape (N, height, width)."""
    return np.stack(
        [membership(stack, i, epsilon) for i in range(1, stack.n_phases + 1)]
    )


def membership_derivative(
    stack: LevelSetStack, i: int, q: int, epsilon: float = DEFAULT_EPSILON
) -> np.ndarray:
    """Pointwise partial derivative of membership i with respect to phi_q.

    Both indices are 1-based.  Follows the product rule over the region's
    codes: the phi_q factor differentiates to +/- dirac(phi_q) and the
    remaining factors are kept.
    """
    if not 1 <= i <= stack.n_phases:
        raise ValueError(f"region index {i} out of 1..{stack.n_phases}")
    if not 1 <= q <= stack.count:
        raise ValueError(f"level set index {q} out of 1..{stack.count}")
    h = heaviside(stack.phis, epsilon)
    d = dirac(stack.phis[q - 1], epsilon)
    total = np.zeros((stack.height, stack.width))
    for code in region_codes(stack.n_phases)[i - 1]:
        digit_q = code[q - 1]
        if digit_q is None:
            continue
        term = d if digit_q else -d
        for p, digit in enumerate(code):
            if p == q - 1 or digit is None:
                continue
            term = term * (h[p] if digit else 1.0 - h[p])
        total += term
    return total


def _grad(field: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradient with replicate boundaries: (d/dx1, d/dx2)."""
    padded = np.pad(field, 1, mode="edge")
    gx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    gy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    return gx, gy


def gradient_magnitude(field: np.ndarray) -> np.ndarray:
    """|grad field| by central differences, replicate boundaries."""
    gx, gy = _grad(field)
    return np.sqrt(gx * gx + gy * gy)


def curvature(phi: np.ndarray) -> np.ndarray:
    """div(grad phi / |grad phi|) with the magnitude floored by 1e-10."""
    if phi.shape[0] < 3 or phi.shape[1] < 3:
        raise ValueError("curvature needs a grid of at least 3x3")
    gx, gy = _grad(phi)
    mag = np.sqrt(gx * gx + gy * gy) + GRAD_FLOOR
    nxx, _ = _grad(gx / mag)
    _, nyy = _grad(gy / mag)
    return nxx + nyy


def laplacian(phi: np.ndarray) -> np.ndarray:
    """5-point Laplacian with replicate boundaries."""
    if phi.shape[0] < 3 or phi.shape[1] < 3:
        raise ValueError("laplacian needs a grid of at least 3x3")
    padded = np.pad(phi, 1, mode="edge")
    return (
        padded[1:-1, 2:]
        + padded[1:-1, :-2]
        + padded[2:, 1:-1]
        + padded[:-2, 1:-1]
        - 4.0 * phi
    )


def init_binary_step(mask: np.ndarray, a: float) -> np.ndarray:
    """Two-valued field: -a where ``mask`` is true (inside), +a elsewhere."""
    if a <= 0:
        raise ValueError("step magnitude must be positive")
    mask = np.asarray(mask, dtype=bool)
    return np.where(mask, -a, a).astype(np.float64)


def threshold_init(
    image: RasterImage,
    n_phases: int = 3,
    fractions: tuple[float, ...] | None = None,
    a: float = 2.0,
) -> LevelSetStack:
    """Seed the level sets from intensity thresholds.

    Each level set starts as a binary step on a mask {intensity > f * max}.
    Default fractions are (0.8, 0.3) for three phases and (0.5,) for two;
    other phase counts need Q explicit fractions.  Fractions pair with the
    level sets in reverse order (phi_1 takes the smallest), so the initial
    dominant memberships are exactly the intensity bands the thresholds
    cut: the brightest band starts inside every contour and maps to
    region 1, the darkest to region N.  Multichannel images are
    thresholded on the channel mean.
    """
    if fractions is None:
        fractions = THRESHOLD_FRACTIONS.get(n_phases)
        if fractions is None:
            raise ValueError(
                f"no default threshold fractions for {n_phases} phases; pass fractions"
            )
    q = required_level_sets(n_phases)
    if len(fractions) != q:
        raise ValueError(f"{n_phases} phases need {q} fractions, got {len(fractions)}")
    field = image.data.mean(axis=2) if image.channels > 1 else image.channel(0)
    lo, hi = field.min(), field.max()
    if lo == hi:
        raise ValueError("constant image: thresholds coincide, cannot initialize")
    ordered = sorted(fractions)  # phi_1 separates the most, so smallest first
    phis = np.stack([init_binary_step(field > f * hi, a) for f in ordered])
    return LevelSetStack(phis, n_phases)


def disk_init(
    width: int, height: int, n_phases: int, a: float = 2.0
) -> LevelSetStack:
    """Seed phi_q as binary steps on centered disks of staggered radii."""
    q = required_level_sets(n_phases)
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    r2 = (rows - (height - 1) / 2.0) ** 2 + (cols - (width - 1) / 2.0) ** 2
    phis = []
    for k in range(q):
        radius = (0.25 + 0.10 * k) * min(width, height)
        phis.append(init_binary_step(r2 < radius * radius, a))
    return LevelSetStack(np.stack(phis), n_phases)


def labels_from_stack(
    stack: LevelSetStack, epsilon: float = DEFAULT_EPSILON
) -> LabelMap:
    """Hard labels via argmax over memberships (ties to the lower index)."""
    return LabelMap(np.argmax(memberships(stack, epsilon), axis=0).astype(np.int32) + 1)
