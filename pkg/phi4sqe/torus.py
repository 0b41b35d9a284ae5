import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft

from phi4sqe.errors import GridError


# Normalization of e_k(x) = (2π)^{-3/2} e^{ik·x}
BASIS_NORM = (2 * math.pi) ** -1.5
VOLUME = (2 * math.pi) ** 3

# FFT threads inside a single transform (trajectories parallelize separately)
FFT_WORKERS = 1


# Truncated index set [-K, K]^3 and the physical grid of M^3 points
@dataclass(frozen=True)
class TorusGrid:
    K: int
    M: int

    @property
    def h(self):
        return 2 * math.pi / self.M

    @property
    def shape(self):
        return (2 * self.K + 1,) * 3

    @property
    def cubic_safe(self):
        return self.M >= 4 * self.K + 1

    def require_cubic_safe(self):
        if not self.cubic_safe:
            raise GridError(f"grid not alias-free for cubic products: M={self.M} < 4K+1={4 * self.K + 1}")


def make_grid(K, M):
    K, M = int(K), int(M)
    if K < 1:
        raise GridError(f"K must be >= 1, got {K}")
    if M < 2 * K + 1:
        raise GridError(f"aliasing certain: M={M} < 2K+1={2 * K + 1}")
    return TorusGrid(K, M)


@lru_cache(maxsize=32)
def wavenumbers(grid):
    k = np.arange(-grid.K, grid.K + 1)
    return k[:, None, None], k[None, :, None], k[None, None, :]


@lru_cache(maxsize=32)
def k_squared(grid):
    k1, k2, k3 = wavenumbers(grid)
    return (k1 ** 2 + k2 ** 2 + k3 ** 2).astype(float)


@lru_cache(maxsize=32)
def k_norm(grid):
    return np.sqrt(k_squared(grid))


def hermitize(coeff):
    return 0.5 * (coeff + np.conj(coeff[::-1, ::-1, ::-1]))


# Spectral coefficients <f, e_k> on [-K, K]^3; index (K, K, K) is k = 0
@dataclass(frozen=True, eq=False)
class FourierField:
    grid: TorusGrid
    coeff: np.ndarray

    def __post_init__(self):
        if self.coeff.shape != self.grid.shape:
            raise GridError(f"coefficient shape {self.coeff.shape} does not match grid {self.grid.shape}")

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape, dtype=complex))

    @classmethod
    def constant(cls, grid, value):
        """The constant function `value`, i.e. value * (2π)^{3/2} on e_0."""
        field = cls.zeros(grid)
        field.coeff[grid.K, grid.K, grid.K] = value * VOLUME * BASIS_NORM
        return field

    @classmethod
    def mode(cls, grid, k, amplitude=1.0):
        """amplitude * e_k (complex, not Hermitian unless k = 0)."""
        field = cls.zeros(grid)
        K = grid.K
        field.coeff[k[0] + K, k[1] + K, k[2] + K] = amplitude
        return field

    def __getitem__(self, k):
        K = self.grid.K
        return self.coeff[k[0] + K, k[1] + K, k[2] + K]

    def __add__(self, other):
        check_same_grid(self, other)
        return FourierField(self.grid, self.coeff + other.coeff)

    def __sub__(self, other):
        check_same_grid(self, other)
        return FourierField(self.grid, self.coeff - other.coeff)

    def __neg__(self):
        return FourierField(self.grid, -self.coeff)

    def __mul__(self, scalar):
        return FourierField(self.grid, scalar * self.coeff)

    __rmul__ = __mul__
    # numpy scalars on the left defer to __rmul__
    __array_ufunc__ = None

    def multiply(self, weights):
        return FourierField(self.grid, weights * self.coeff)

    @property
    def mean_coefficient(self):
        return self.coeff[self.grid.K, self.grid.K, self.grid.K]

    def is_hermitian(self, tol=1e-12):
        scale = max(1.0, float(np.max(np.abs(self.coeff), initial=0.0)))
        return bool(np.max(np.abs(self.coeff - np.conj(self.coeff[::-1, ::-1, ::-1]))) <= tol * scale)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.coeff)))


@dataclass(frozen=True, eq=False)
class RealField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.M,) * 3:
            raise GridError(f"sample shape {self.values.shape} does not match M={self.grid.M}")


def check_same_grid(*fields):
    grid = fields[0].grid
    for field in fields[1:]:
        if field.grid != grid:
            raise GridError(f"grid mismatch: {grid} vs {field.grid}")
    return grid


@lru_cache(maxsize=32)
def _fft_index(grid):
    # Rows of the M-point FFT holding k in [-K, K] and k3 in [0, K]
    full = np.arange(-grid.K, grid.K + 1) % grid.M
    half = np.arange(grid.K + 1)
    return np.ix_(full, full, half)


# Transforms
def forward_transform(f):
    grid = f.grid
    K, M = grid.K, grid.M
    spectrum = scipy.fft.rfftn(f.values, workers=FFT_WORKERS)
    scale = VOLUME * BASIS_NORM / M ** 3  # h^3 (2π)^{-3/2}

    coeff = np.empty(grid.shape, dtype=complex)
    coeff[:, :, K:] = scale * spectrum[_fft_index(grid)]
    coeff[:, :, :K] = np.conj(coeff[::-1, ::-1, 2 * K:K:-1])
    return FourierField(grid, hermitize(coeff))


def inverse_transform(F):
    grid = F.grid
    K, M = grid.K, grid.M
    half = np.zeros((M, M, M // 2 + 1), dtype=complex)
    half[_fft_index(grid)] = F.coeff[:, :, K:]
    values = scipy.fft.irfftn(half, s=(M, M, M), workers=FFT_WORKERS)
    return RealField(grid, values * (M ** 3 * BASIS_NORM))


def to_physical(F):
    return inverse_transform(F).values


def from_physical(grid, values):
    return forward_transform(RealField(grid, values))


# Norms and inner products
def lp_norm(f, p):
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    values = np.abs(f.values)
    if math.isinf(p):
        return float(values.max(initial=0.0))
    return float((f.grid.h ** 3 * np.sum(values ** p)) ** (1.0 / p))


def field_lp_norm(F, p):
    return lp_norm(inverse_transform(F), p)


def inner_product(f, g):
    check_same_grid(f, g)
    return complex(np.vdot(g.coeff, f.coeff))


def l2_norm_squared(F):
    return float(np.sum(np.abs(F.coeff) ** 2))


def pointwise_product(*fields):
    """Pseudo-spectral product of band-limited fields, exact on retained modes on an alias-free grid."""
    grid = check_same_grid(*fields)
    values = to_physical(fields[0])
    for field in fields[1:]:
        values = values * to_physical(field)
    return from_physical(grid, values)


def spatial_mean(F):
    return float(F.mean_coefficient.real * BASIS_NORM)


def random_band_limited(grid, rng, radius=None):
    """Random real field with standard normal modes on |k_i| <= radius (default K)."""
    radius = grid.K if radius is None else radius
    coeff = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    k1, k2, k3 = wavenumbers(grid)
    coeff = coeff * ((np.abs(k1) <= radius) & (np.abs(k2) <= radius) & (np.abs(k3) <= radius))
    return FourierField(grid, hermitize(coeff))
