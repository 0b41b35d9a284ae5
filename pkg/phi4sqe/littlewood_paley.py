"""Littlewood-Paley blocks, Besov norms and Bony paraproducts on the truncated torus.

The dyadic partition telescopes a single smooth step theta (1 on [0,1], 0 beyond 4/3):
chi = theta and phi(r) = theta(r/2) - theta(r), so chi + sum_j phi(2^-j r) = theta(2^-J-1 r)
holds algebraically for every truncation level J.

Products are evaluated pseudo-spectrally: each term of a paraproduct is a pointwise product
of two multiplier images, accumulated on the physical grid and transformed back once.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from phi4sqe.multipliers import smooth_step
from phi4sqe.torus import check_same_grid, from_physical, k_norm, lp_norm, inverse_transform, to_physical


PARTITION_PROFILE = "telescoped exp(-1/x) step, theta = 1 on [0,1], 0 on [4/3,inf)"


@dataclass(frozen=True)
class DyadicPartition:
    inner: float = 1.0
    outer: float = 4.0 / 3.0

    def theta(self, r):
        return smooth_step(r, self.inner, self.outer)

    def chi(self, r):
        return self.theta(r)

    def phi(self, r):
        r = np.asarray(r, dtype=float)
        return self.theta(r / 2.0) - self.theta(r)

    def block_profile(self, j, r):
        if j < -1:
            return np.zeros_like(np.asarray(r, dtype=float))
        if j == -1:
            return self.chi(r)
        return self.phi(2.0 ** -j * np.asarray(r, dtype=float))

    def j_max(self, grid):
        return math.ceil(math.log2(math.sqrt(3) * grid.K / 0.75)) + 1


PARTITION = DyadicPartition()


def make_partition():
    return PARTITION


@dataclass(frozen=True)
class BesovSpec:
    s: float
    p: float = 2.0
    r: float = math.inf

    def __post_init__(self):
        if self.p < 1 or self.r < 1:
            raise ValueError(f"Besov indices need p, r >= 1, got p={self.p}, r={self.r}")


# Block multipliers
@lru_cache(maxsize=256)
def block_weights(grid, j):
    weights = np.array(PARTITION.block_profile(j, k_norm(grid)), dtype=float)
    weights.setflags(write=False)
    return weights


@lru_cache(maxsize=256)
def partial_sum_weights(grid, j):
    """S_j = sum of blocks -1 .. j-1 (S_{-1} = 0)."""
    weights = np.zeros(grid.shape)
    for block in range(-1, j):
        weights = weights + block_weights(grid, block)
    weights.setflags(write=False)
    return weights


@lru_cache(maxsize=256)
def neighbour_weights(grid, j):
    # Δ_{-2} = 0 through block_profile
    weights = block_weights(grid, j - 1) + block_weights(grid, j) + block_weights(grid, j + 1)
    weights.setflags(write=False)
    return weights


@lru_cache(maxsize=64)
def active_blocks(grid):
    return tuple(j for j in range(-1, PARTITION.j_max(grid) + 1) if np.any(block_weights(grid, j)))


def dyadic_block(F, j):
    if j < -1:
        raise ValueError(f"dyadic blocks start at j = -1, got {j}")
    return F.multiply(block_weights(F.grid, j))


def partial_sum(F, j):
    return F.multiply(partial_sum_weights(F.grid, j))


def besov_norm(F, spec):
    terms = []
    for j in active_blocks(F.grid):
        block = dyadic_block(F, j)
        if not np.any(block.coeff):
            continue
        terms.append(2.0 ** (j * spec.s) * lp_norm(inverse_transform(block), spec.p))
    if not terms:
        return 0.0
    terms = np.asarray(terms)
    if math.isinf(spec.r):
        return float(terms.max())
    return float(np.sum(terms ** spec.r) ** (1.0 / spec.r))


# Paraproducts
def _product_grid(f, g):
    grid = check_same_grid(f, g)
    grid.require_cubic_safe()
    return grid


def para_lt(f, g):
    """f ⊘< g = sum_{j>=0} (S_j f)(Δ_{j+1} g)."""
    grid = _product_grid(f, g)
    blocks = active_blocks(grid)
    total = np.zeros((grid.M,) * 3)
    for j in range(0, blocks[-1]):
        if j + 1 not in blocks:
            continue
        low = f.multiply(partial_sum_weights(grid, j))
        high = g.multiply(block_weights(grid, j + 1))
        if not (np.any(low.coeff) and np.any(high.coeff)):
            continue
        total += to_physical(low) * to_physical(high)
    return from_physical(grid, total)


def para_gt(f, g):
    return para_lt(g, f)


def resonance(f, g):
    """f ⊘= g = sum_{j>=-1} Δ_j f (Δ_{j-1} + Δ_j + Δ_{j+1}) g."""
    grid = _product_grid(f, g)
    total = np.zeros((grid.M,) * 3)
    for j in active_blocks(grid):
        block = f.multiply(block_weights(grid, j))
        near = g.multiply(neighbour_weights(grid, j))
        if not (np.any(block.coeff) and np.any(near.coeff)):
            continue
        total += to_physical(block) * to_physical(near)
    return from_physical(grid, total)


def para_leq(f, g):
    return para_lt(f, g) + resonance(f, g)


def para_geq(f, g):
    return para_gt(f, g) + resonance(f, g)


def partition_residual(grid, samples=10_000):
    """Largest deviation of chi + sum_j phi(2^-j .) from 1 on [0, sqrt(3) K]."""
    r = np.linspace(0.0, math.sqrt(3) * grid.K, samples)
    total = PARTITION.chi(r)
    for j in range(0, PARTITION.j_max(grid) + 1):
        total = total + PARTITION.block_profile(j, r)
    return float(np.max(np.abs(total - 1.0)))
