"""Synthetic phantoms: known piecewise-constant truth, known bias, noise.

A phantom composes the generative model the solver inverts: each pixel
takes its region's constant, is modulated by a bias field built from
known basis weights, and receives additive zero-mean Gaussian noise.
Phantoms are the ground-truth oracle of the test suite.

Phantom specs can be read from plain ``key=value`` files::

    width=128
    height=128
    # N x L constants, row-major (rows are regions)
    constants=60,160
    # M x L bias weights, row-major (rows are basis functions)
    bias_coeffs=1.0,0.3,-0.1
    noise_sigma=5.0
    seed=7
    shape=disk,64,64,36,1
    shape=rect,4,4,20,20,2

Shapes paint regions in order (later shapes override earlier ones) and
unpainted pixels belong to region N.  Supported shapes: ``disk,cx,cy,r,
region``; ``rect,x0,y0,x1,y1,region`` (half-open pixel bounds);
``halfplane,a,b,c,region`` (pixels with a*x + b*y <= c).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import product

import numpy as np

from .basis import build_basis, eval_bias
from .imagegrid import LabelMap, RasterImage

#: Bias fields dipping below this floor make division ill posed; reject them.
MIN_BIAS = 0.1


@dataclass(frozen=True)
class Shape:
    kind: str  # disk | rect | halfplane
    geometry: tuple
    region: int


@dataclass(frozen=True)
class PhantomSpec:
    width: int
    height: int
    shapes: tuple
    constants: np.ndarray  # (N, L) region constants per channel
    bias_coeffs: np.ndarray  # (M, L) basis weights per channel
    noise_sigma: np.ndarray  # (L,) per-channel noise levels
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "constants", np.atleast_2d(np.asarray(self.constants, dtype=np.float64))
        )
        object.__setattr__(
            self, "bias_coeffs", np.atleast_2d(np.asarray(self.bias_coeffs, dtype=np.float64))
        )
        sigma = np.atleast_1d(np.asarray(self.noise_sigma, dtype=np.float64))
        if sigma.size == 1 and self.constants.shape[1] > 1:
            sigma = np.full(self.constants.shape[1], sigma[0])
        object.__setattr__(self, "noise_sigma", sigma)
        if self.constants.shape[1] != self.bias_coeffs.shape[1]:
            raise ValueError("constants and bias_coeffs disagree on channel count")
        if self.noise_sigma.size != self.constants.shape[1]:
            raise ValueError("noise_sigma length must match the channel count")
        if np.any(self.noise_sigma < 0):
            raise ValueError("noise_sigma must be nonnegative")
        for j in range(self.constants.shape[1]):
            col = self.constants[:, j]
            if len(set(col.tolist())) != col.size:
                raise ValueError(f"channel {j + 1} constants are not distinct")
        for shape in self.shapes:
            if not 1 <= shape.region <= self.n_phases:
                raise ValueError(f"shape region {shape.region} out of range")

    @property
    def n_phases(self) -> int:
        return self.constants.shape[0]

    @property
    def n_channels(self) -> int:
        return self.constants.shape[1]

    @property
    def basis_count(self) -> int:
        return self.bias_coeffs.shape[0]


@dataclass(frozen=True)
class Phantom:
    """Observed image plus everything that generated it."""

    image: RasterImage
    truth: LabelMap
    biases: np.ndarray  # (L, H, W) true bias fields
    clean: RasterImage  # piecewise-constant true image

    @property
    def noise_free(self) -> np.ndarray:
        """(H, W, L) noise-free observation bias * clean."""
        return np.stack(
            [self.biases[j] * self.clean.channel(j) for j in range(self.biases.shape[0])],
            axis=2,
        )


def _shape_mask(shape: Shape, width: int, height: int) -> np.ndarray:
    rows = np.arange(height)[:, None].astype(float)
    cols = np.arange(width)[None, :].astype(float)
    if shape.kind == "disk":
        cx, cy, r = shape.geometry
        return (cols - cx) ** 2 + (rows - cy) ** 2 <= r * r
    if shape.kind == "rect":
        x0, y0, x1, y1 = shape.geometry
        return (cols >= x0) & (cols < x1) & (rows >= y0) & (rows < y1)
    if shape.kind == "halfplane":
        a, b, c = shape.geometry
        return a * cols + b * rows <= c
    raise ValueError(f"unknown shape kind {shape.kind!r}")


def region_map(spec: PhantomSpec) -> LabelMap:
    """Region index per pixel: shapes painted in order over background N."""
    labels = np.full((spec.height, spec.width), spec.n_phases, dtype=np.int32)
    for shape in spec.shapes:
        labels[_shape_mask(shape, spec.width, spec.height)] = shape.region
    return LabelMap(labels)


def make_phantom(spec: PhantomSpec) -> Phantom:
    """Generate the observed image, truth labels, bias fields, and clean image.

    Deterministic for a fixed seed.  Bias fields must stay above 0.1
    everywhere so the multiplicative model stays invertible.
    """
    truth = region_map(spec)
    basis = build_basis(spec.width, spec.height, spec.basis_count)
    biases = np.stack(
        [eval_bias(spec.bias_coeffs[:, j], basis) for j in range(spec.n_channels)]
    )
    if biases.min() <= MIN_BIAS:
        raise ValueError(
            f"bias field dips to {biases.min():.3g}, below the {MIN_BIAS} floor; "
            "shrink the non-constant coefficients"
        )
    clean = np.empty((spec.height, spec.width, spec.n_channels))
    for j in range(spec.n_channels):
        clean[:, :, j] = spec.constants[truth.labels - 1, j]
    rng = np.random.default_rng(spec.seed)
    observed = np.empty_like(clean)
    for j in range(spec.n_channels):
        observed[:, :, j] = biases[j] * clean[:, :, j]
        if spec.noise_sigma[j] > 0:
            observed[:, :, j] += rng.normal(
                0.0, spec.noise_sigma[j], size=(spec.height, spec.width)
            )
    return Phantom(RasterImage(observed), truth, biases, RasterImage(clean))


def sweep(
    spec: PhantomSpec, noise_levels, bias_scales
) -> list[PhantomSpec]:
    """Cartesian product of noise levels and bias scales over a template.

    A scale s multiplies every non-constant bias coefficient (rows 2..M),
    so the mean bias stays near the constant term.  Case k gets seed
    ``spec.seed + k`` so cases are independent yet reproducible.
    """
    noise_levels = list(noise_levels)
    bias_scales = list(bias_scales)
    if not noise_levels or not bias_scales:
        raise ValueError("noise level and bias scale lists must be nonempty")
    cases = []
    for k, (sigma, scale) in enumerate(product(noise_levels, bias_scales)):
        coeffs = spec.bias_coeffs.copy()
        coeffs[1:, :] *= scale
        cases.append(
            replace(
                spec,
                noise_sigma=np.full(spec.n_channels, sigma),
                bias_coeffs=coeffs,
                seed=spec.seed + k,
            )
        )
    return cases


def _parse_floats(value: str) -> list[float]:
    return [float(v) for v in value.split(",") if v.strip()]


def load_spec(path) -> PhantomSpec:
    """Read a phantom spec from a key=value file (see module docstring)."""
    values: dict[str, str] = {}
    shapes: list[Shape] = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key == "shape":
                parts = [p.strip() for p in value.split(",")]
                kind = parts[0]
                nums = [float(p) for p in parts[1:]]
                if len(nums) < 2:
                    raise ValueError(f"{path}:{lineno}: shape needs geometry and region")
                shapes.append(Shape(kind, tuple(nums[:-1]), int(nums[-1])))
            else:
                values[key] = value
    for required in ("width", "height", "constants", "bias_coeffs", "noise_sigma"):
        if required not in values:
            raise ValueError(f"{path}: missing required field '{required}'")
    width = int(values["width"])
    height = int(values["height"])
    constants = _parse_floats(values["constants"])
    bias_coeffs = _parse_floats(values["bias_coeffs"])
    sigma = _parse_floats(values["noise_sigma"])
    channels = int(values.get("channels", len(sigma)))
    if len(constants) % channels or len(bias_coeffs) % channels:
        raise ValueError(f"{path}: constants/bias_coeffs not divisible by channel count")
    return PhantomSpec(
        width=width,
        height=height,
        shapes=tuple(shapes),
        constants=np.asarray(constants).reshape(-1, channels),
        bias_coeffs=np.asarray(bias_coeffs).reshape(-1, channels),
        noise_sigma=np.asarray(sigma),
        seed=int(values.get("seed", 0)),
    )
