from functools import lru_cache

import numpy as np

from phi4sqe.errors import GridError
from phi4sqe.torus import FourierField, k_squared, wavenumbers


# Profile choices, recorded in every run manifest
PSI1_PROFILE = "exp(-1/x) bump quotient on (1,2)"
PSI2_PROFILE = "linear ramp on [2,4]"


def _bump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    positive = x > 0
    out[positive] = np.exp(-1.0 / x[positive])
    return out


def smooth_step(r, start, stop):
    """C^inf nonincreasing step: 1 on [0, start], 0 on [stop, inf)."""
    s = (np.asarray(r, dtype=float) - start) / (stop - start)
    a, b = _bump(1.0 - s), _bump(s)
    return a / (a + b)


def psi1(r):
    value = smooth_step(r, 1.0, 2.0)
    return float(value) if np.ndim(value) == 0 else value


def psi2(r):
    value = np.clip((4.0 - np.asarray(r, dtype=float)) / 2.0, 0.0, 1.0)
    return float(value) if np.ndim(value) == 0 else value


PROFILES = {1: psi1, 2: psi2}


def support_radius(N, which):
    """Per-axis wavenumber beyond which psi_N^{(which)} vanishes."""
    return 2 ** (N + which)


@lru_cache(maxsize=64)
def cutoff_weights(grid, N, which):
    """psi_N^{(i),⊗3}(k) on the spectral cube."""
    if which not in PROFILES:
        raise ValueError(f"which must be 1 or 2, got {which}")
    if grid.K < support_radius(N, which):
        raise GridError(f"P_N^({which}) with N={N} needs K >= {support_radius(N, which)}, got K={grid.K}")
    profile = PROFILES[which]
    k1, k2, k3 = wavenumbers(grid)
    scale = 2.0 ** -N
    weights = profile(scale * np.abs(k1)) * profile(scale * np.abs(k2)) * profile(scale * np.abs(k3))
    weights.setflags(write=False)
    return weights


def apply_PN(F, N, which):
    return F.multiply(cutoff_weights(F.grid, N, which))


# Heat semigroup e^{t(Δ - m0^2)} and the exponential Euler primitive
def decay_rates(grid, m0):
    return k_squared(grid) + m0 ** 2


def heat_semigroup(F, t, m0):
    if t < 0:
        raise ValueError(f"heat semigroup needs t >= 0, got {t}")
    return F.multiply(np.exp(-t * decay_rates(F.grid, m0)))


@lru_cache(maxsize=64)
def duhamel_factors(grid, dt, m0):
    omega = decay_rates(grid, m0)
    decay = np.exp(-omega * dt)
    # (1 - e^{-ωΔt}) / ω without cancellation for small ωΔt
    gain = -np.expm1(-omega * dt) / omega
    decay.setflags(write=False)
    gain.setflags(write=False)
    return decay, gain


def duhamel_step(state, forcing, dt, m0):
    if state.grid != forcing.grid:
        raise GridError(f"grid mismatch: {state.grid} vs {forcing.grid}")
    decay, gain = duhamel_factors(state.grid, dt, m0)
    return FourierField(state.grid, decay * state.coeff + gain * forcing.coeff)
