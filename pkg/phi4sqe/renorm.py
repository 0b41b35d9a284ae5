import logging
import math
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from phi4sqe.errors import BudgetError, ConfigError
from phi4sqe.multipliers import apply_PN, psi1
from phi4sqe.torus import FourierField, TorusGrid, k_squared, to_physical


logger = logging.getLogger(__name__)

# C2 double sum guard
C2_MAX_N = 5
C2_CHUNK = 64  # outer points per joblib task, fixed so the reduction order never depends on workers

# pCN defaults
PCN_BETA = 0.2
PCN_STEPS = 10_000


@dataclass(frozen=True)
class RenormConstants:
    N: int
    m0: float
    C1: float
    C2: float

    def mass(self, lam):
        """C1 - 3λC2, the coefficient of the quadratic counterterm."""
        return self.C1 - 3 * lam * self.C2


@dataclass(frozen=True)
class ModelParams:
    N: int
    m0: float
    lam: float
    lam0: float
    T: float
    dt: float
    seed: int
    grid: TorusGrid

    def __post_init__(self):
        if self.N < 0:
            raise ConfigError(f"N must be >= 0, got {self.N}")
        if self.m0 <= 0:
            raise ConfigError(f"m0 must be positive, got {self.m0}")
        if self.lam0 <= 0:
            raise ConfigError(f"lambda0 must be positive, got {self.lam0}")
        # λ = 0 is admitted as the free-field control
        if not 0 <= self.lam <= self.lam0:
            raise ConfigError(f"0 <= λ <= λ0 violated: λ={self.lam}, λ0={self.lam0}")
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.T < 0 or (self.T > 0 and self.dt > self.T):
            raise ConfigError(f"Δt <= T violated: Δt={self.dt}, T={self.T}")

    @property
    def steps(self):
        return int(round(self.T / self.dt))


# Renormalization constants
def _axis_weights(N):
    """psi1(2^-N |l|)^2 for |l| < 2^{N+1} on the axis l = -R+1 .. R-1."""
    R = 2 ** (N + 1)
    axis = np.arange(-R + 1, R)
    return axis, psi1(2.0 ** -N * np.abs(axis)) ** 2


def compute_C1(N, m0):
    if m0 <= 0:
        raise ValueError(f"m0 must be positive, got {m0}")
    axis, w = _axis_weights(N)
    weights = w[:, None, None] * w[None, :, None] * w[None, None, :]
    ksq = (axis[:, None, None] ** 2 + axis[None, :, None] ** 2 + axis[None, None, :] ** 2).astype(float)
    return float(np.sum(weights / (ksq + m0 ** 2)) / (2 * (2 * math.pi) ** 3))


def _orbit_size(point):
    # Axis sign flips and permutations applied jointly to (l1, l2) leave the kernel invariant
    signs = 2 ** sum(1 for c in point if c != 0)
    perms = 6 // math.prod(math.factorial(point.count(v)) for v in set(point))
    return signs * perms


def _fundamental_domain(R):
    return [(x, y, z) for x in range(R) for y in range(x, R) for z in range(y, R)]


def _c2_inner(l1_chunk, N, m0):
    axis, w = _axis_weights(N)
    R = 2 ** (N + 1)
    m2 = m0 ** 2
    q = (axis ** 2).astype(float)
    out = np.empty(len(l1_chunk))
    for n, l1 in enumerate(l1_chunk):
        # l1_i >= 0, so the shifted weight a(l1 + l2) vanishes unless l2_i <= R - 1 - l1_i
        span = [2 * R - 1 - c for c in l1]
        a2 = [w[:s] for s in span]
        a12 = [w[c:c + s] for c, s in zip(l1, span)]
        q2 = [q[:s] for s in span]
        q12 = [((axis[:s] + c) ** 2).astype(float) for c, s in zip(l1, span)]

        weight = (a2[0] * a12[0])[:, None, None] * (a2[1] * a12[1])[None, :, None] * (a2[2] * a12[2])[None, None, :]
        l2sq = q2[0][:, None, None] + q2[1][None, :, None] + q2[2][None, None, :]
        l12sq = q12[0][:, None, None] + q12[1][None, :, None] + q12[2][None, None, :]
        l1sq = float(sum(c * c for c in l1))

        inner = np.sum(weight / ((l2sq + m2) * (l1sq + l2sq + l12sq + 3 * m2)))
        a1 = w[l1[0] + R - 1] * w[l1[1] + R - 1] * w[l1[2] + R - 1]
        out[n] = _orbit_size(l1) * a1 / (l1sq + m2) * inner
    return out


def c2_pair_estimate(N):
    R = 2 ** (N + 1)
    return len(_fundamental_domain(R)) * (2 * R - 1) ** 3


def compute_C2(N, m0, max_N=C2_MAX_N, n_jobs=1):
    if m0 <= 0:
        raise ValueError(f"m0 must be positive, got {m0}")
    if N > max_N:
        pairs = c2_pair_estimate(N)
        raise BudgetError(f"C2 double sum for N={N} exceeds guard N <= {max_N} (~{pairs:.3g} lattice pairs)", pairs)

    domain = _fundamental_domain(2 ** (N + 1))
    chunks = [domain[i:i + C2_CHUNK] for i in range(0, len(domain), C2_CHUNK)]
    logger.debug("C2(N=%d): %d outer points, ~%.3g pairs", N, len(domain), c2_pair_estimate(N))
    parts = Parallel(n_jobs=n_jobs)(delayed(_c2_inner)(chunk, N, m0) for chunk in chunks)
    return float(np.sum(np.concatenate(parts)) / (2 * (2 * math.pi) ** 6))


def renorm_constants(N, m0, n_jobs=1):
    return RenormConstants(N=N, m0=m0, C1=compute_C1(N, m0), C2=compute_C2(N, m0, n_jobs=n_jobs))


# Energy and measures
def energy_UN(phi, params, consts):
    phi.grid.require_cubic_safe()
    u = to_physical(apply_PN(phi, params.N, 1))
    mass = consts.mass(params.lam)
    density = 0.25 * params.lam * u ** 4 - 1.5 * params.lam * mass * u ** 2
    return float(phi.grid.h ** 3 * np.sum(density))


def mu0_variances(grid, m0):
    return 1.0 / (2.0 * (k_squared(grid) + m0 ** 2))


def sample_mu0(grid, m0, rng):
    std = np.sqrt(mu0_variances(grid, m0) / 2.0)
    z = std * (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
    # (z + conj z(-k)) / sqrt(2) keeps the per-mode law and is Hermitian; mode 0 becomes real
    return FourierField(grid, (z + np.conj(z[::-1, ::-1, ::-1])) / math.sqrt(2.0))


@dataclass(frozen=True)
class ChainResult:
    field: FourierField
    acceptance: float
    trace: np.ndarray  # Re <φ, e_0> after every step


def metropolis_muN(params, consts, n_steps, rng, beta=PCN_BETA, start=None):
    if not 0 < beta < 1:
        raise ValueError(f"pCN step must lie in (0, 1), got {beta}")
    grid = params.grid
    phi = sample_mu0(grid, params.m0, rng) if start is None else start
    energy = energy_UN(phi, params, consts)
    keep = math.sqrt(1.0 - beta ** 2)

    accepted = 0
    trace = np.empty(n_steps)
    for step in range(n_steps):
        proposal = keep * phi + beta * sample_mu0(grid, params.m0, rng)
        proposal_energy = energy_UN(proposal, params, consts)
        if math.log(rng.uniform()) < energy - proposal_energy:
            phi, energy = proposal, proposal_energy
            accepted += 1
        trace[step] = phi.mean_coefficient.real

    acceptance = accepted / n_steps if n_steps else 0.0
    logger.debug("pCN chain: %d steps, beta=%g, acceptance %.3f", n_steps, beta, acceptance)
    return ChainResult(field=phi, acceptance=acceptance, trace=trace)


def batch_means(samples, batches=20):
    """Mean and batch-means standard error of a correlated series."""
    samples = np.asarray(samples, dtype=float)
    size = len(samples) // batches
    if size < 1:
        raise ValueError(f"need at least {batches} samples, got {len(samples)}")
    means = samples[:size * batches].reshape(batches, size).mean(axis=1)
    return float(means.mean()), float(means.std(ddof=1) / math.sqrt(batches))
