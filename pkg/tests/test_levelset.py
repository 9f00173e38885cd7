import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biasseg.imagegrid import RasterImage
from biasseg.levelset import (
    LevelSetStack,
    curvature,
    dirac,
    disk_init,
    heaviside,
    init_binary_step,
    labels_from_stack,
    laplacian,
    membership,
    membership_derivative,
    memberships,
    region_codes,
    required_level_sets,
    threshold_init,
)

finite_floats = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


def test_heaviside_anchor_values():
    assert heaviside(0.0) == 0.5
    assert heaviside(1.0) == 0.75
    assert heaviside(-1.0) == 0.25


@settings(max_examples=200)
@given(finite_floats)
def test_heaviside_symmetry_exact(x):
    assert heaviside(x) + heaviside(-x) == 1.0
    assert heaviside(-x) == 1.0 - heaviside(x)


def test_heaviside_monotone():
    xs = np.linspace(-30, 30, 2001)
    hs = heaviside(xs)
    assert np.all(np.diff(hs) > 0)
    assert np.all((hs > 0) & (hs < 1))


def test_dirac_values_and_evenness():
    assert dirac(0.0) == 1 / np.pi
    assert dirac(1.0) == pytest.approx(1 / (2 * np.pi), rel=1e-15)
    xs = np.linspace(0, 50, 500)
    assert np.array_equal(dirac(xs), dirac(-xs))
    assert dirac(0.0) == max(dirac(x) for x in np.linspace(-5, 5, 101))


def test_dirac_integrates_to_one():
    # trapezoid quadrature over [-100, 100]
    xs = np.linspace(-100, 100, 200001)
    total = np.trapezoid(dirac(xs), xs)
    assert total == pytest.approx(1.0, abs=1e-2)


def test_dirac_is_derivative_of_heaviside():
    xs = np.linspace(-10, 10, 4001)
    h = 1e-4
    fd = (heaviside(xs + h) - heaviside(xs - h)) / (2 * h)
    assert np.max(np.abs(fd - dirac(xs))) < 1e-6


def test_required_level_sets():
    assert [required_level_sets(n) for n in (2, 3, 4, 5, 8, 9)] == [1, 2, 2, 3, 3, 4]


def test_region_codes_match_reference_formulas():
    assert region_codes(2) == (((0,),), ((1,),))
    assert region_codes(3) == (((0, 0),), ((0, 1),), ((1, None),))
    assert region_codes(4) == (((0, 0),), ((0, 1),), ((1, 0),), ((1, 1),))


def test_two_phase_membership_sign_convention():
    stack = LevelSetStack(np.full((1, 2, 2), 10.0), 2)
    assert membership(stack, 2)[0, 0] > 0.96
    assert membership(stack, 1)[0, 0] < 0.04


def test_three_phase_membership_formulas():
    rng = np.random.default_rng(0)
    phis = rng.normal(0, 3, (2, 6, 7))
    stack = LevelSetStack(phis, 3)
    h1, h2 = heaviside(phis[0]), heaviside(phis[1])
    assert np.array_equal(membership(stack, 1), (1 - h1) * (1 - h2))
    assert np.array_equal(membership(stack, 2), (1 - h1) * h2)
    assert np.array_equal(membership(stack, 3), h1)


def test_three_phase_region3_ignores_phi2():
    phis = np.stack([np.full((3, 3), 50.0), np.random.default_rng(1).normal(0, 5, (3, 3))])
    stack = LevelSetStack(phis, 3)
    assert np.all(membership(stack, 3) > 0.99)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_partition_of_unity(n):
    q = required_level_sets(n)
    phis = np.random.default_rng(n).normal(0, 4, (q, 8, 9))
    member = memberships(LevelSetStack(phis, n))
    assert np.all(member >= 0.0) and np.all(member <= 1.0)
    total = member.sum(axis=0)
    assert np.max(np.abs(total - 1.0)) < 1e-12


@pytest.mark.parametrize("n", [2, 3, 4])
def test_membership_derivative_matches_finite_differences(n):
    q_count = required_level_sets(n)
    rng = np.random.default_rng(10 + n)
    phis = rng.normal(0, 2, (q_count, 5, 6))
    stack = LevelSetStack(phis, n)
    h = 1e-4
    for i in range(1, n + 1):
        for q in range(1, q_count + 1):
            up, down = stack.copy(), stack.copy()
            up.phis[q - 1] += h
            down.phis[q - 1] -= h
            fd = (membership(up, i) - membership(down, i)) / (2 * h)
            assert np.max(np.abs(fd - membership_derivative(stack, i, q))) < 1e-6


def test_two_phase_derivative_is_dirac():
    phis = np.random.default_rng(3).normal(0, 2, (1, 4, 4))
    stack = LevelSetStack(phis, 2)
    assert np.array_equal(membership_derivative(stack, 2, 1), dirac(phis[0]))
    assert np.array_equal(membership_derivative(stack, 1, 1), -dirac(phis[0]))


def test_three_phase_derivative_signed_combination():
    phis = np.random.default_rng(4).normal(0, 2, (2, 4, 5))
    stack = LevelSetStack(phis, 3)
    expected = -dirac(phis[0]) * (1 - heaviside(phis[1]))
    assert np.array_equal(membership_derivative(stack, 1, 1), expected)
    assert np.array_equal(membership_derivative(stack, 3, 1), dirac(phis[0]))
    assert np.array_equal(membership_derivative(stack, 3, 2), np.zeros((4, 5)))


def test_curvature_of_circle_sdf():
    n = 101
    rows = np.arange(n)[:, None]
    cols = np.arange(n)[None, :]
    rho = np.sqrt((rows - 50.0) ** 2 + (cols - 50.0) ** 2)
    phi = rho - 30.0
    curv = curvature(phi)
    mask = (rho >= 5) & (rho <= 45)
    rel = np.abs(curv[mask] * rho[mask] - 1.0)
    assert rel.max() < 0.05


def test_curvature_flat_ramp_and_odd_symmetry():
    rows = np.arange(20)[:, None].astype(float)
    cols = np.arange(20)[None, :].astype(float)
    ramp = 0.7 * cols + 0.2 * rows
    assert np.max(np.abs(curvature(ramp)[2:-2, 2:-2])) < 1e-12
    phi = np.random.default_rng(5).normal(0, 3, (16, 16))
    assert np.allclose(curvature(-phi), -curvature(phi), atol=1e-12)


def test_laplacian_cases():
    rows = np.arange(12)[:, None].astype(float)
    cols = np.arange(12)[None, :].astype(float)
    quad = rows**2 + cols**2
    assert np.allclose(laplacian(quad)[1:-1, 1:-1], 4.0)
    assert np.array_equal(laplacian(np.full((5, 5), 3.0)), np.zeros((5, 5)))
    assert np.max(np.abs(laplacian(2 * cols + rows)[1:-1, 1:-1])) == 0.0


def test_small_grid_rejected():
    with pytest.raises(ValueError):
        curvature(np.zeros((2, 5)))
    with pytest.raises(ValueError):
        laplacian(np.zeros((5, 2)))


def test_init_binary_step():
    mask = np.zeros((4, 4), dtype=bool)
    mask[1:3, 1:3] = True
    phi = init_binary_step(mask, 2.0)
    assert set(np.unique(phi)) == {-2.0, 2.0}
    assert phi[1, 1] == -2.0 and phi[0, 0] == 2.0
    assert np.array_equal(init_binary_step(~mask, 2.0), -phi)
    assert np.all(init_binary_step(np.zeros((3, 3), dtype=bool), 1.5) == 1.5)
    with pytest.raises(ValueError):
        init_binary_step(mask, 0.0)


def test_threshold_init_fractions():
    data = np.zeros((10, 10, 1))
    data[:3] = 200.0
    data[3:6] = 100.0
    img = RasterImage(data)
    stack = threshold_init(img, 3)
    # thresholds are 160 and 60 for a max of 200; phi_1 takes the wider mask
    assert np.all(stack.phis[0][:6] == -2.0) and np.all(stack.phis[0][6:] == 2.0)
    assert np.all(stack.phis[1][:3] == -2.0) and np.all(stack.phis[1][3:] == 2.0)


def test_threshold_init_regions_match_bands():
    # the initial dominant memberships reproduce the threshold bands
    data = np.zeros((10, 10, 1))
    data[:3] = 200.0
    data[3:6] = 100.0
    img = RasterImage(data)
    labels = labels_from_stack(threshold_init(img, 3)).labels
    assert np.all(labels[:3] == 1)
    assert np.all(labels[3:6] == 2)
    assert np.all(labels[6:] == 3)


def test_threshold_init_all_above():
    data = np.full((4, 4, 1), 200.0)
    data[0, 0, 0] = 190.0
    stack = threshold_init(RasterImage(data), 3)
    assert np.all(stack.phis == -2.0)


def test_threshold_init_constant_image_errors():
    with pytest.raises(ValueError, match="constant"):
        threshold_init(RasterImage(np.full((4, 4, 1), 9.0)), 3)


def test_threshold_init_needs_fractions_for_odd_counts():
    img = RasterImage(np.linspace(0, 255, 64).reshape(8, 8, 1))
    with pytest.raises(ValueError):
        threshold_init(img, 5)
    stack = threshold_init(img, 5, fractions=(0.8, 0.5, 0.2))
    assert stack.count == 3


def test_disk_init_shapes():
    stack = disk_init(32, 24, 3)
    assert stack.count == 2
    assert stack.phis[0][12, 16] == -2.0
    assert stack.phis[0][0, 0] == 2.0


def test_labels_from_stack_two_phase():
    phis = np.array([[[-3.0, 4.0], [0.5, -0.1]]])
    labels = labels_from_stack(LevelSetStack(phis, 2))
    assert labels.labels.tolist() == [[1, 2], [2, 1]]


def test_stack_validation():
    with pytest.raises(ValueError):
        LevelSetStack(np.zeros((1, 4, 4)), 3)  # 3 phases need 2 level sets
    with pytest.raises(ValueError):
        LevelSetStack(np.full((1, 4, 4), np.inf), 2)


def test_membership_index_bounds():
    stack = LevelSetStack(np.zeros((2, 3, 3)), 3)
    with pytest.raises(ValueError):
        membership(stack, 0)
    with pytest.raises(ValueError):
        membership(stack, 4)
    with pytest.raises(ValueError):
        membership_derivative(stack, 1, 3)
    with pytest.raises(ValueError):
        membership_derivative(stack, 4, 1)
