import math

import numpy as np
import pytest

from phi4sqe.errors import GridError
from phi4sqe.littlewood_paley import (BesovSpec, active_blocks, besov_norm, dyadic_block, make_partition, para_geq,
                                      para_gt, para_leq, para_lt, partial_sum, partition_residual, resonance)
from phi4sqe.torus import BASIS_NORM, FourierField, l2_norm_squared, make_grid, pointwise_product, random_band_limited


PARTITION = make_partition()


def test_partition_of_unity(grid_n1):
    assert partition_residual(grid_n1) <= 1e-10


def test_partition_small_radius():
    assert PARTITION.chi(0.5) == 1.0
    assert all(PARTITION.block_profile(j, 0.5) == 0 for j in range(0, 6))


def test_partition_at_two():
    assert PARTITION.chi(2.0) == 0.0
    assert sum(PARTITION.block_profile(j, 2.0) for j in range(0, 6)) == pytest.approx(1.0, abs=1e-15)


def test_telescoping():
    r = np.linspace(0, 40, 801)
    J = 3
    total = sum(PARTITION.block_profile(j, r) for j in range(0, J + 1))
    assert np.allclose(total, PARTITION.theta(r / 2 ** (J + 1)) - PARTITION.theta(r), atol=1e-14)


def test_blocks_disjoint_beyond_neighbours():
    r = np.sqrt(np.arange(0, 3 * 64 ** 2 + 1))  # all lattice radii up to sqrt(3) 64
    for j in range(-1, 8):
        for i in range(j + 2, 8):
            assert not np.any(PARTITION.block_profile(j, r) * PARTITION.block_profile(i, r))


def test_block_of_e0(grid):
    e0 = FourierField.mode(grid, (0, 0, 0))
    assert np.array_equal(dyadic_block(e0, -1).coeff, e0.coeff)
    for j in active_blocks(grid)[1:]:
        assert not np.any(dyadic_block(e0, j).coeff)


def test_block_of_norm_two_mode(grid):
    F = FourierField.mode(grid, (2, 0, 0))
    nonzero = {j for j in active_blocks(grid) if np.any(dyadic_block(F, j).coeff)}
    assert nonzero and nonzero <= {0, 1}


def test_block_reconstruction(grid, rng):
    F = random_band_limited(grid, rng)
    total = sum((dyadic_block(F, j) for j in active_blocks(grid)), FourierField.zeros(grid))
    assert np.max(np.abs(total.coeff - F.coeff)) <= 1e-12 * np.max(np.abs(F.coeff))


def test_partial_sum_is_low_blocks(grid, rng):
    F = random_band_limited(grid, rng)
    low = dyadic_block(F, -1) + dyadic_block(F, 0)
    assert np.allclose(partial_sum(F, 1).coeff, low.coeff, atol=1e-14)
    assert not np.any(partial_sum(F, -1).coeff)


def test_negative_block_rejected(grid):
    with pytest.raises(ValueError):
        dyadic_block(FourierField.zeros(grid), -2)


def test_besov_zero(grid):
    assert besov_norm(FourierField.zeros(grid), BesovSpec(0.3)) == 0.0


@pytest.mark.parametrize("s", [-0.5, 0.0, 1.2])
def test_besov_e0(grid, s):
    e0 = FourierField.mode(grid, (0, 0, 0))
    assert besov_norm(e0, BesovSpec(s, 2.0)) == pytest.approx(2.0 ** -s, rel=1e-12)


def test_besov_monotone_in_regularity(grid, rng):
    F = random_band_limited(grid, rng)
    for p in [4.0 / 3.0, 2.0, math.inf]:
        for s, s_prime in [(-0.5, 0.0), (0.1, 0.45), (-1.0, 1.0)]:
            low = besov_norm(F, BesovSpec(s, p))
            high = besov_norm(F, BesovSpec(s_prime, p))
            # block j = -1 carries the factor 2^{-s}
            assert low <= 2.0 ** (s_prime - s) * high * (1 + 1e-12)
            assert besov_norm(dyadic_block(F, 1), BesovSpec(s, p)) <= besov_norm(dyadic_block(F, 1), BesovSpec(s_prime, p))


def test_besov_finite_r(grid, rng):
    F = random_band_limited(grid, rng)
    assert besov_norm(F, BesovSpec(0.0, 2.0, 2.0)) >= besov_norm(F, BesovSpec(0.0, 2.0))


def test_besov_spec_validates():
    with pytest.raises(ValueError):
        BesovSpec(0.0, p=0.5)


def test_paraproducts_of_e0(grid):
    e0 = FourierField.mode(grid, (0, 0, 0))
    assert not np.any(np.abs(para_lt(e0, e0).coeff) > 1e-15)
    assert not np.any(np.abs(para_gt(e0, e0).coeff) > 1e-15)
    expected = BASIS_NORM * e0
    assert np.allclose(resonance(e0, e0).coeff, expected.coeff, atol=1e-15)


def test_paraproducts_with_zero(grid, rng):
    f = random_band_limited(grid, rng)
    zero = FourierField.zeros(grid)
    for op in (para_lt, para_gt, resonance):
        assert not np.any(op(f, zero).coeff)


def test_bony_decomposition(grid_n1, rng):
    for _ in range(20):
        f = random_band_limited(grid_n1, rng, grid_n1.K // 2)
        g = random_band_limited(grid_n1, rng, grid_n1.K // 2)
        product = pointwise_product(f, g)
        split = para_lt(f, g) + resonance(f, g) + para_gt(f, g)
        assert math.sqrt(l2_norm_squared(split - product)) <= 1e-10 * math.sqrt(l2_norm_squared(product))


def test_combined_paraproducts(grid, rng):
    f = random_band_limited(grid, rng, grid.K // 2)
    g = random_band_limited(grid, rng, grid.K // 2)
    product = pointwise_product(f, g)
    assert np.allclose((para_leq(f, g) + para_gt(f, g)).coeff, product.coeff, atol=1e-12)
    assert np.allclose((para_geq(f, g) + para_lt(f, g)).coeff, product.coeff, atol=1e-12)


def test_resonance_symmetric(grid, rng):
    f = random_band_limited(grid, rng, grid.K // 2)
    g = random_band_limited(grid, rng, grid.K // 2)
    assert np.allclose(resonance(f, g).coeff, resonance(g, f).coeff, atol=1e-13)


def test_paraproduct_needs_cubic_safe_grid(rng):
    grid = make_grid(4, 9)
    f = random_band_limited(grid, rng)
    with pytest.raises(GridError):
        para_lt(f, f)
