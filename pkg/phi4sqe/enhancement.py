"""Ornstein-Uhlenbeck process Z and the renormalized stochastic objects built from it.

One NoiseIncrement per step drives Z here and the full equation in `solver`; the kick
sigma_k * xi_k is computed once by `ou_kick` and shared, so X~ - Z never sees noise.
"""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from phi4sqe.littlewood_paley import resonance
from phi4sqe.multipliers import apply_PN, decay_rates, duhamel_step, heat_semigroup
from phi4sqe.renorm import sample_mu0
from phi4sqe.torus import FourierField, from_physical, to_physical


logger = logging.getLogger(__name__)

# Burn-in horizon in units of the slowest relaxation time 1/m0^2
BURN_IN_RELAXATIONS = 10.0


@dataclass(frozen=True)
class NoiseIncrement:
    increment: FourierField
    dt: float
    stream: int = 0
    step: int = 0

    @property
    def grid(self):
        return self.increment.grid


def draw_noise(grid, dt, rng, stream=0, step=0):
    if dt < 0:
        raise ValueError(f"noise increment needs dt >= 0, got {dt}")
    std = math.sqrt(dt / 2.0)
    z = std * (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
    coeff = (z + np.conj(z[::-1, ::-1, ::-1])) / math.sqrt(2.0)
    return NoiseIncrement(FourierField(grid, coeff), dt, stream, step)


def seed_sequence(seed, stream, *key):
    return np.random.SeedSequence(entropy=seed, spawn_key=(stream,) + tuple(key))


# Deterministic Brownian increments per (seed, stream, fine step); coarse steps sum fine ones
class NoiseStream():
    def __init__(self, grid, seed, stream=0, dt_fine=0.01, substeps=1):
        self.grid = grid
        self.seed = seed
        self.stream = stream
        self.dt_fine = dt_fine
        self.substeps = substeps

    @property
    def dt(self):
        return self.dt_fine * self.substeps

    def fine(self, n):
        # Negative indices are burn-in steps before t = 0
        key = (1, n) if n >= 0 else (2, -n)
        rng = np.random.default_rng(seed_sequence(self.seed, self.stream, *key))
        return draw_noise(self.grid, self.dt_fine, rng, self.stream, n)

    def increment(self, n):
        first = n * self.substeps
        total = self.fine(first).increment.coeff.copy()
        for fine_step in range(first + 1, first + self.substeps):
            total += self.fine(fine_step).increment.coeff
        return NoiseIncrement(FourierField(self.grid, total), self.dt, self.stream, n)


def ou_kick(dW, m0):
    """Exact stochastic convolution over one step: sigma_k * dW_k / sqrt(dt)."""
    if dW.dt == 0:
        return FourierField.zeros(dW.grid)
    omega = decay_rates(dW.grid, m0)
    sigma = np.sqrt(-np.expm1(-2 * omega * dW.dt) / (2 * omega))
    return dW.increment.multiply(sigma / math.sqrt(dW.dt))


def step_Z(Z, dW, m0):
    if Z.grid != dW.grid:
        raise ValueError(f"grid mismatch: {Z.grid} vs {dW.grid}")
    return heat_semigroup(Z, dW.dt, m0) + ou_kick(dW, m0)


def wick_powers(Z, N, C1):
    Z.grid.require_cubic_safe()
    Z1 = apply_PN(Z, N, 1)
    u = to_physical(Z1)
    Z2 = from_physical(Z.grid, u ** 2 - C1)
    Z3 = from_physical(Z.grid, u ** 3 - 3 * C1 * u)
    return Z1, Z2, Z3


@dataclass(frozen=True)
class EnhancedState:
    t: float
    Z: FourierField
    Z1: FourierField
    Z2: FourierField
    Z3: FourierField
    Z02: FourierField
    Z03: FourierField
    Z22: FourierField
    Z23: FourierField
    J: FourierField  # ∫ e^{(t-s)(Δ-m0^2)} (P_N^(1))^2 Z2_s ds from the start of burn-in
    consts: object

    @property
    def grid(self):
        return self.Z.grid

    @property
    def N(self):
        return self.consts.N

    @property
    def m0(self):
        return self.consts.m0

    def P1(self, F):
        return apply_PN(F, self.N, 1)


def step_convolved(state, dt):
    """Advances Z02, Z03 and J over dt with the Wick forcings frozen at state.t."""
    P1 = state.P1
    return replace(
        state,
        t=state.t + dt,
        Z02=duhamel_step(state.Z02, P1(state.Z2), dt, state.m0),
        Z03=duhamel_step(state.Z03, P1(state.Z3), dt, state.m0),
        J=duhamel_step(state.J, P1(P1(state.Z2)), dt, state.m0),
    )


def resonance_objects(state):
    C2 = state.consts.C2
    grid = state.grid
    Z22 = resonance(state.Z2, state.P1(state.Z02)) - FourierField.constant(grid, C2)
    Z23 = resonance(state.Z2, state.P1(state.Z03)) - 3 * C2 * state.Z1
    return replace(state, Z22=Z22, Z23=Z23)


def enhance(t, Z, Z02, Z03, J, consts):
    Z1, Z2, Z3 = wick_powers(Z, consts.N, consts.C1)
    zero = FourierField.zeros(Z.grid)
    state = EnhancedState(t=t, Z=Z, Z1=Z1, Z2=Z2, Z3=Z3, Z02=Z02, Z03=Z03, Z22=zero, Z23=zero, J=J, consts=consts)
    return resonance_objects(state)


def advance_enhanced(state, dW):
    """One step: convolved objects with frozen forcing, exact OU update of Z, then Wick and resonance fields."""
    moved = step_convolved(state, dW.dt)
    Z = step_Z(state.Z, dW, state.m0)
    return enhance(moved.t, Z, moved.Z02, moved.Z03, moved.J, state.consts)


def initial_enhanced(Z, consts, t=0.0):
    zero = FourierField.zeros(Z.grid)
    return enhance(t, Z, zero, zero, zero, consts)


def default_burn_in(m0):
    return BURN_IN_RELAXATIONS / m0 ** 2


def burn_in_steps(burn_in_T, dt):
    return int(math.ceil(burn_in_T / dt - 1e-9)) if burn_in_T > 0 else 0


def burn_in_start(params, consts, rng, burn_in_T=None):
    """(step count, enhancement at t = -steps*dt with Z ~ μ0 and empty histories)."""
    if burn_in_T is None:
        burn_in_T = default_burn_in(params.m0)
    steps = burn_in_steps(burn_in_T, params.dt)
    return steps, initial_enhanced(sample_mu0(params.grid, params.m0, rng), consts, t=-steps * params.dt)


def burn_in_noise(params, rng, noise, n):
    return noise(n) if noise is not None else draw_noise(params.grid, params.dt, rng, step=n)


def init_enhanced(params, consts, rng, burn_in_T=None, noise=None):
    """Stationary Z ~ μ0 with histories started at -burn_in_T and evolved to t = 0.

    `noise` maps a (negative) step index to a NoiseIncrement; by default increments
    are drawn from `rng` after the initial sample.
    """
    steps, state = burn_in_start(params, consts, rng, burn_in_T)
    for n in range(-steps, 0):
        state = advance_enhanced(state, burn_in_noise(params, rng, noise, n))
    logger.debug("enhancement burn-in: %d steps of %g", steps, params.dt)
    return replace(state, t=0.0)
