import numpy as np
import pytest

from biasseg.basis import build_basis
from biasseg.imagegrid import RasterImage, domain_grid
from biasseg.levelset import LevelSetStack, dirac, heaviside, init_binary_step
from biasseg.model import (
    ModelParams,
    data_energy,
    length_term,
    regularizer,
    residual,
    residuals,
    total_energy,
)


def _weights(first=1.0, count=10, channels=1):
    w = np.zeros((count, channels))
    w[0, :] = first
    return w


def test_params_defaults():
    p = ModelParams.default(phases=3, channels=2)
    assert p.lambdas.tolist() == [1.0, 1.0, 1.0]
    assert p.gammas.tolist() == [1.0, 1.0]
    assert p.nu == pytest.approx(0.005 * 255 * 255)
    assert (p.mu, p.epsilon, p.dt, p.a) == (1.0, 1.0, 0.1, 2.0)
    assert (p.basis_count, p.max_iters, p.tol) == (10, 200, 1e-3)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(lambdas=np.array([1.0, -1.0]), gammas=np.ones(1))
    with pytest.raises(ValueError):
        ModelParams.default(dt=0.0)


def test_residual_perfect_fit_is_zero():
    basis = build_basis(8, 8, 10)
    rng = np.random.default_rng(0)
    w = rng.normal(0, 0.2, 10)
    w[0] = 1.0
    from biasseg.basis import eval_bias

    bias = eval_bias(w, basis)
    c = 3.7
    img = RasterImage((bias * c)[:, :, None])
    params = ModelParams.default(phases=2)
    e1 = residual(img, basis, w[:, None], np.array([[c], [9.0]]), params, 1)
    assert np.max(np.abs(e1)) < 1e-22


def test_residual_constant_case():
    basis = build_basis(4, 4, 10)
    img = RasterImage(np.full((4, 4, 1), 5.0))
    params = ModelParams.default(phases=2)
    e = residual(img, basis, _weights(), np.array([[3.0], [0.0]]), params, 1)
    assert np.array_equal(e, np.full((4, 4), 4.0))


def test_residual_weighted_channels():
    basis = build_basis(3, 3, 10)
    data = np.zeros((3, 3, 2))
    data[:, :, 0] = 4.0  # residual (4-3)^2 = 1 against c=3
    data[:, :, 1] = 5.0  # residual (5-3)^2 = 4 against c=3
    img = RasterImage(data)
    params = ModelParams(lambdas=np.ones(2), gammas=np.array([2.0, 1.0]))
    e = residual(img, basis, _weights(channels=2), np.array([[3.0, 3.0], [0.0, 0.0]]), params, 1)
    assert np.array_equal(e, np.full((3, 3), 6.0))


def test_data_energy_crisp_halves():
    basis = build_basis(4, 4, 10)
    data = np.ones((4, 4, 1))
    data[:, 2:, 0] = 3.0
    img = RasterImage(data)
    params = ModelParams.default(phases=2)
    member = np.zeros((2, 4, 4))
    member[0, :, :2] = 1.0
    member[1, :, 2:] = 1.0
    good = data_energy(img, basis, _weights(), np.array([[1.0], [3.0]]), member, params)
    assert good == 0.0
    swapped = data_energy(img, basis, _weights(), np.array([[3.0], [1.0]]), member, params)
    assert swapped == pytest.approx(4.0 * 16)


def test_data_energy_brute_force_oracle():
    rng = np.random.default_rng(1)
    basis = build_basis(6, 5, 10)
    img = RasterImage(rng.uniform(0, 255, (5, 6, 2)))
    params = ModelParams(lambdas=np.array([1.5, 0.7, 1.1]), gammas=np.array([0.9, 1.3]))
    weights = rng.normal(0, 0.3, (10, 2))
    centers = rng.uniform(0, 255, (3, 2))
    stack = LevelSetStack(rng.normal(0, 2, (2, 5, 6)), 3)
    got = data_energy(img, basis, weights, centers, stack, params)
    # independent triple-loop summation
    from biasseg.basis import eval_bias
    from biasseg.levelset import membership

    total = 0.0
    for i in range(3):
        e_i = np.zeros((5, 6))
        for j in range(2):
            bias = eval_bias(weights[:, j], basis)
            e_i += params.gammas[j] * (img.channel(j) - bias * centers[i, j]) ** 2
        total += params.lambdas[i] * float((e_i * membership(stack, i + 1)).sum())
    assert got == pytest.approx(total, rel=1e-12)


def test_length_zero_for_constant():
    stack = LevelSetStack(np.full((1, 6, 6), 4.0), 2)
    assert length_term(stack) == 0.0


def test_length_increases_with_disk_radius():
    rows = np.arange(64)[:, None]
    cols = np.arange(64)[None, :]
    lengths = []
    for r in (5, 10, 20):
        mask = (rows - 32) ** 2 + (cols - 32) ** 2 < r * r
        stack = LevelSetStack(init_binary_step(mask, 2.0)[None], 2)
        lengths.append(length_term(stack))
    assert 0 < lengths[0] < lengths[1] < lengths[2]


def test_length_additive_over_level_sets():
    rng = np.random.default_rng(2)
    phis = rng.normal(0, 2, (2, 8, 8))
    both = length_term(LevelSetStack(phis, 3))
    parts = sum(
        length_term(LevelSetStack(phis[q][None], 2)) for q in range(2)
    )
    assert both == pytest.approx(parts, rel=1e-14)


def test_regularizer_exact_cases():
    # slope-1 ramp: zero penalty away from the replicate boundary
    cols = np.arange(16)[None, :].astype(float)
    ramp = np.broadcast_to(cols, (16, 16)).copy()
    stack = LevelSetStack(ramp[None], 2)
    from biasseg.levelset import gradient_magnitude

    mag = gradient_magnitude(ramp)
    assert np.all(mag[:, 1:-1] == 1.0)
    # constant field: (0-1)^2/2 per pixel
    const = LevelSetStack(np.full((1, 8, 8), 2.0), 2)
    assert regularizer(const) == pytest.approx(0.5 * 64)
    # slope-2 ramp: interior pixels contribute (2-1)^2/2
    mag2 = gradient_magnitude(2 * ramp)
    assert np.all(mag2[:, 1:-1] == 2.0)


def test_total_energy_composition():
    rng = np.random.default_rng(3)
    basis = build_basis(8, 8, 10)
    img = RasterImage(rng.uniform(0, 255, (8, 8, 1)))
    params = ModelParams.default(phases=2)
    weights = rng.normal(0, 0.3, (10, 1))
    centers = rng.uniform(0, 255, (2, 1))
    stack = LevelSetStack(rng.normal(0, 2, (1, 8, 8)), 2)
    total = total_energy(img, basis, weights, centers, stack, params)
    manual = (
        data_energy(img, basis, weights, centers, stack, params)
        + params.nu * length_term(stack, params.epsilon)
        + params.mu * regularizer(stack)
    )
    assert total == manual
    zeroed = ModelParams.default(phases=2, mu=0.0, nu=0.0)
    assert total_energy(img, basis, weights, centers, stack, zeroed) == data_energy(
        img, basis, weights, centers, stack, zeroed
    )


def test_all_terms_nonnegative():
    rng = np.random.default_rng(4)
    basis = build_basis(7, 7, 10)
    img = RasterImage(rng.uniform(0, 255, (7, 7, 1)))
    params = ModelParams.default(phases=2)
    for trial in range(5):
        weights = rng.normal(0, 1, (10, 1))
        centers = rng.uniform(-50, 300, (2, 1))
        stack = LevelSetStack(rng.normal(0, 3, (1, 7, 7)), 2)
        assert data_energy(img, basis, weights, centers, stack, params) >= 0
        assert length_term(stack) >= 0
        assert regularizer(stack) >= 0


def test_scale_ambiguity_of_data_energy():
    rng = np.random.default_rng(5)
    basis = build_basis(9, 9, 10)
    img = RasterImage(rng.uniform(0, 255, (9, 9, 1)))
    params = ModelParams.default(phases=2)
    weights = rng.normal(0, 0.4, (10, 1))
    centers = rng.uniform(10, 240, (2, 1))
    stack = LevelSetStack(rng.normal(0, 2, (1, 9, 9)), 2)
    base = data_energy(img, basis, weights, centers, stack, params)
    for s in (2.0, 0.125, 7.3):
        scaled = data_energy(img, basis, weights / s, s * centers, stack, params)
        assert scaled == pytest.approx(base, rel=1e-12)


def test_reduces_to_piecewise_constant_data_term():
    # with the unit constant bias the data term is the classic two-region
    # squared-difference energy
    rng = np.random.default_rng(6)
    basis = build_basis(10, 10, 10)
    img = RasterImage(rng.uniform(0, 255, (10, 10, 1)))
    params = ModelParams.default(phases=2)
    centers = np.array([[80.0], [190.0]])
    stack = LevelSetStack(rng.normal(0, 2, (1, 10, 10)), 2)
    got = data_energy(img, basis, _weights(), centers, stack, params)
    h = heaviside(stack.phis[0])
    cv = float(
        ((img.channel(0) - 80.0) ** 2 * (1 - h)).sum()
        + ((img.channel(0) - 190.0) ** 2 * h).sum()
    )
    assert got == pytest.approx(cv, rel=1e-12)


def test_dimension_mismatch_errors():
    basis = build_basis(8, 8, 10)
    img = RasterImage(np.zeros((8, 8, 1)))
    params = ModelParams.default(phases=2)
    with pytest.raises(ValueError):
        residuals(img, basis, np.zeros((9, 1)), np.zeros((2, 1)), params)
    with pytest.raises(ValueError):
        residuals(img, basis, np.zeros((10, 1)), np.zeros((3, 1)), params)
    with pytest.raises(ValueError):
        residual(img, basis, np.zeros((10, 1)), np.zeros((2, 1)), params, 3)
