"""Trajectory functionals behind the uniform-in-N moment bounds, and their ensemble reports.

Suprema over time are maxima over stored snapshots and B_inf norms use grid maxima, so
both are one-sided (lower) estimates of the continuum quantities.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from phi4sqe.errors import ConfigError
from phi4sqe.littlewood_paley import BesovSpec, besov_norm
from phi4sqe.multipliers import apply_PN, cutoff_weights, decay_rates
from phi4sqe.renorm import mu0_variances
from phi4sqe.solver import derive_X2
from phi4sqe.torus import field_lp_norm, k_squared, l2_norm_squared, pointwise_product, spatial_mean


# Quantities covered by the uniform bound; only these are red-flag checked
TIGHTNESS_QUANTITIES = ["holder_B43_alpha", "X_functional", "Y_functional_q", "sup_Xlt_B4", "sup_Xgeq_B43",
                        "XN0_Binf_sq"]
SUPPLEMENTARY_QUANTITIES = ["Xlt_T_L2sq", "X2_0_B43_shifted", "XN_T_B125", "Z22_mean", "Z22_unrenormalized_mean"]
ZS_NAMES = ["Z1", "P2Z", "Z2", "Z22", "Z02", "Z03", "Z23", "Z1Y", "Z1Y2", "Z03_holder"]

RED_FLAG_FACTOR = 3.0
MIN_ENSEMBLE = 30


@dataclass(frozen=True)
class ExponentSet:
    alpha: float = 0.45
    eps: float = 0.005
    gamma: float = 0.02
    eta: float = 0.55
    q: float = 1.1
    eps_tilde: float = 0.05

    def __post_init__(self):
        a, e, g, h, q, et = self.alpha, self.eps, self.gamma, self.eta, self.q, self.eps_tilde
        ranges = [
            (0 <= a < 0.5, f"α ∈ [0,1/2) violated: α={a}"),
            (0 < e <= 1 / 16, f"ε ∈ (0,1/16] violated: ε={e}"),
            (0 < g < 1 / 8, f"γ ∈ (0,1/8) violated: γ={g}"),
            (0.5 < h < 1, f"η ∈ (1/2,1) violated: η={h}"),
            (1 < q < 8 / 7, f"q ∈ (1,8/7) violated: q={q}"),
            (0 < et <= 1 / 16, f"ε̃ ∈ (0,1/16] violated: ε̃={et}"),
            (2 * e < g, f"2ε < γ violated: ε={e}, γ={g}"),
            (h > a + 2 * g, f"η > α + 2γ violated: η={h}, α={a}, γ={g}"),
            (2 * a + 4 * g + e < 1, f"2α + 4γ + ε < 1 violated: α={a}, γ={g}, ε={e}"),
        ]
        for ok, message in ranges:
            if not ok:
                raise ConfigError(message)


# One stored time point of the decomposition
@dataclass(frozen=True)
class Snapshot:
    t: float
    N: int
    X2: object
    Xlt: object
    Xgeq: object
    XN: object  # P_N^(2) X~


def take_snapshot(state, enhanced):
    params = state.params
    return Snapshot(t=state.t, N=params.N, X2=derive_X2(state.Xtilde, enhanced, params, t=state.t),
                    Xlt=state.Xlt, Xgeq=state.Xgeq, XN=apply_PN(state.Xtilde, params.N, 2))


def _require_series(snapshots):
    if len(snapshots) < 2:
        raise ValueError(f"need at least 2 snapshots, got {len(snapshots)}")


def _norm(F, norm):
    if isinstance(norm, BesovSpec):
        return besov_norm(F, norm)
    return field_lp_norm(F, norm)


def gradient_l2_squared(F):
    return float(np.sum(k_squared(F.grid) * np.abs(F.coeff) ** 2))


def holder_seminorm(series, eta, gamma, norm):
    """max over snapshot pairs s < t of s^η ‖F_t - F_s‖ / (t - s)^γ; `series` holds (t, field) pairs."""
    _require_series(series)
    if not 0 < gamma < 1:
        raise ValueError(f"γ must lie in (0, 1), got {gamma}")
    best = 0.0
    for i, (s, Fs) in enumerate(series):
        if s <= 0:
            continue  # weight s^η vanishes
        for t, Ft in series[i + 1:]:
            best = max(best, s ** eta * _norm(Ft - Fs, norm) / (t - s) ** gamma)
    return best


def functional_X(snapshots, exponents, lam):
    _require_series(snapshots)
    times = np.array([snap.t for snap in snapshots])
    density = [gradient_l2_squared(snap.Xgeq) + l2_norm_squared(snap.X2)
               + lam * field_lp_norm(apply_PN(snap.X2, snap.N, 1), 4) ** 4 for snap in snapshots]
    series = [(snap.t, snap.X2) for snap in snapshots]
    return float(trapezoid(density, times)) + holder_seminorm(series, exponents.eta, exponents.gamma, 4.0 / 3.0)


def functional_Y(snapshots, eps):
    _require_series(snapshots)
    times = np.array([snap.t for snap in snapshots])
    low = [besov_norm(snap.Xlt, BesovSpec(1 - eps, 4.0)) ** 3 for snap in snapshots]
    high = [besov_norm(snap.Xgeq, BesovSpec(1 + eps, 4.0 / 3.0)) for snap in snapshots]
    return float(trapezoid(low, times) + trapezoid(high, times))


def weighted_sup(snapshots, field, spec, eta, power=1):
    return max(snap.t ** eta * besov_norm(getattr(snap, field), spec) ** power for snap in snapshots)


# Sup-in-time norms of the enhancement
@dataclass(frozen=True)
class ZsSample:
    t: float
    values: dict
    Z03: object
    Z22_mean: float = 0.0
    Z22_raw_mean: float = 0.0


def zs_snapshot(enhanced, eps):
    inf = math.inf
    low = -(1 + eps) / 2
    Y = enhanced.P1(enhanced.Z03)
    values = {
        "Z1": besov_norm(enhanced.Z1, BesovSpec(low, inf)),
        "P2Z": besov_norm(apply_PN(enhanced.Z, enhanced.N, 2), BesovSpec(low, inf)),
        "Z2": besov_norm(enhanced.Z2, BesovSpec(-1 - eps / 24, inf)),
        "Z22": besov_norm(enhanced.Z22, BesovSpec(-eps / 4, inf)),
        "Z02": besov_norm(enhanced.Z02, BesovSpec(1 - eps / 2, inf)),
        "Z03": besov_norm(enhanced.Z03, BesovSpec(0.5 - eps / 4, inf)),
        "Z23": besov_norm(enhanced.Z23, BesovSpec(low, inf)),
        "Z1Y": besov_norm(pointwise_product(enhanced.Z1, Y), BesovSpec(low, inf)),
        "Z1Y2": besov_norm(pointwise_product(enhanced.Z1, Y, Y), BesovSpec(low, inf)),
    }
    mean, raw = resonance_means(enhanced)
    return ZsSample(t=enhanced.t, values=values, Z03=enhanced.Z03, Z22_mean=mean, Z22_raw_mean=raw)


def zs_sups(samples, eps, gamma):
    """The ten enhancement quantities; `samples` are ZsSample or EnhancedState objects."""
    samples = [s if isinstance(s, ZsSample) else zs_snapshot(s, eps) for s in samples]
    out = {name: max(s.values[name] for s in samples) for name in ZS_NAMES[:-1]}
    best = 0.0
    for i, first in enumerate(samples):
        for second in samples[i + 1:]:
            gap = field_lp_norm(second.Z03 - first.Z03, math.inf)
            best = max(best, gap / (second.t - first.t) ** gamma)
    out["Z03_holder"] = best
    return out


# Per-trajectory measures and ensemble reports
def measure_trajectory(snapshots, exponents, lam, zs_samples=()):
    ex = exponents
    shifted = ex.alpha + 2 * ex.gamma
    series = [(snap.t, snap.X2) for snap in snapshots]
    first, last = snapshots[0], snapshots[-1]
    Y = functional_Y(snapshots, ex.eps)
    measures = {
        "holder_B43_alpha": holder_seminorm(series, ex.eta, ex.gamma, BesovSpec(ex.alpha, 4.0 / 3.0)),
        "X_functional": functional_X(snapshots, ex, lam),
        "Y_functional_q": Y ** ex.q,
        "Y_functional": Y,
        "sup_Xlt_B4": weighted_sup(snapshots, "Xlt", BesovSpec(shifted, 4.0), ex.eta, power=3),
        "sup_Xgeq_B43": weighted_sup(snapshots, "Xgeq", BesovSpec(shifted, 4.0 / 3.0), ex.eta),
        "XN0_Binf_sq": besov_norm(first.XN, BesovSpec(-0.5 - ex.eps_tilde, math.inf)) ** 2,
        "Xlt_T_L2sq": l2_norm_squared(last.Xlt),
        "X2_0_B43_shifted": besov_norm(first.X2, BesovSpec(shifted - 2 * ex.eta, 4.0 / 3.0)),
        "XN_T_B125": besov_norm(last.XN, BesovSpec(-0.5 - ex.eps_tilde, 12.0 / 5.0)),
    }
    if zs_samples:
        measures["Z22_mean"] = float(np.mean([s.Z22_mean for s in zs_samples]))
        measures["Z22_unrenormalized_mean"] = float(np.mean([s.Z22_raw_mean for s in zs_samples]))
        measures.update({f"zs_{name}": value for name, value in zs_sups(zs_samples, ex.eps, ex.gamma).items()})
    return measures


def resonance_means(enhanced):
    mean = spatial_mean(enhanced.Z22)
    return mean, mean + enhanced.consts.C2


def besov_profile(snapshots, q, eps):
    """‖X2_s‖^q in B_1^{-1/2+ε} at every snapshot, for sup_s E[...]."""
    return [(snap.t, besov_norm(snap.X2, BesovSpec(-0.5 + eps, 1.0)) ** q) for snap in snapshots]


def ensemble_stats(values):
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return float(values.mean()), math.nan
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(values)))


@dataclass(frozen=True)
class ReportRow:
    N: int
    quantity: str
    mean: float
    se: float
    red_flag: bool


def red_flags(means_by_N, factor=RED_FLAG_FACTOR):
    """True when the means grow monotonically in N by more than `factor` overall."""
    means = [means_by_N[N] for N in sorted(means_by_N)]
    growing = all(b > a for a, b in zip(means, means[1:]))
    return growing and means[0] > 0 and means[-1] > factor * means[0]


def tightness_report(measures_by_N, profiles_by_N=None, factor=RED_FLAG_FACTOR, min_ensemble=MIN_ENSEMBLE):
    """Ensemble means and standard errors per (N, quantity); `measures_by_N` maps N to per-trajectory dicts."""
    if len(measures_by_N) < 2:
        raise ValueError(f"need at least 2 values of N, got {sorted(measures_by_N)}")
    for N, runs in measures_by_N.items():
        if len(runs) < min_ensemble:
            raise ValueError(f"insufficient ensemble for N={N}: {len(runs)} < {min_ensemble}")

    quantities = [q for q in TIGHTNESS_QUANTITIES + SUPPLEMENTARY_QUANTITIES
                  if all(q in run for runs in measures_by_N.values() for run in runs)]
    rows = []
    for quantity in quantities:
        stats = {N: ensemble_stats([run[quantity] for run in runs]) for N, runs in measures_by_N.items()}
        flagged = quantity in TIGHTNESS_QUANTITIES and red_flags({N: s[0] for N, s in stats.items()}, factor)
        rows.extend(ReportRow(N, quantity, mean, se, flagged) for N, (mean, se) in sorted(stats.items()))

    if profiles_by_N:
        for N, profiles in sorted(profiles_by_N.items()):
            # sup over time of the ensemble mean; profiles share snapshot times
            columns = np.array([[value for _, value in profile] for profile in profiles])
            means = columns.mean(axis=0)
            worst = int(np.argmax(means))
            mean, se = ensemble_stats(columns[:, worst])
            rows.append(ReportRow(N, "sup_E_X2_B1_q", mean, se, False))
    return rows


def free_field_X2_l2(grid, N, m0, t, burn_in_T=0.0):
    """E‖P_N^(2)(X~_t - Z_t)‖^2 for λ = 0 when X~ and Z start from independent μ0 draws at -burn_in_T."""
    weights = cutoff_weights(grid, N, 2) ** 2
    elapsed = t + burn_in_T
    return float(np.sum(weights * 2 * mu0_variances(grid, m0) * np.exp(-2 * elapsed * decay_rates(grid, m0))))


def resonance_trend(measures_by_N):
    """(N, mean, se, unrenormalized mean, se) of the resonance objects per N."""
    rows = []
    for N, runs in sorted(measures_by_N.items()):
        mean, se = ensemble_stats([run["Z22_mean"] for run in runs])
        raw, raw_se = ensemble_stats([run["Z22_unrenormalized_mean"] for run in runs])
        rows.append((N, mean, se, raw, raw_se))
    return rows


@dataclass(frozen=True)
class EstimatorReport:
    X_functional: float
    Y_functional: float
    holder_seminorm: float
    zs_sups: dict
    exponents: ExponentSet
    N: int
    seed: int
    dt: float
    ensemble: int


def estimator_report(measures, exponents, N, seed, dt):
    if not measures:
        raise ValueError("no trajectories to report")
    mean = lambda name: float(np.mean([run[name] for run in measures]))
    zs = {name: mean(f"zs_{name}") for name in ZS_NAMES if f"zs_{name}" in measures[0]}
    return EstimatorReport(X_functional=mean("X_functional"), Y_functional=mean("Y_functional"),
                           holder_seminorm=mean("holder_B43_alpha"), zs_sups=zs, exponents=exponents, N=N, seed=seed,
                           dt=dt, ensemble=len(measures))
