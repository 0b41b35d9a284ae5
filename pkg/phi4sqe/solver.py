import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from phi4sqe.enhancement import advance_enhanced, burn_in_noise, burn_in_start, ou_kick
from phi4sqe.errors import BlowUpError, StaleHistoryError
from phi4sqe.littlewood_paley import para_gt, para_leq, para_lt, resonance
from phi4sqe.multipliers import apply_PN, duhamel_step, heat_semigroup
from phi4sqe.torus import FourierField, from_physical, l2_norm_squared, pointwise_product, to_physical


logger = logging.getLogger(__name__)

# Coefficients beyond this magnitude count as blow-up
BLOW_UP_LIMIT = 1e100


@dataclass(frozen=True)
class SqeState:
    t: float
    Xtilde: FourierField
    Xlt: FourierField
    Xgeq: FourierField
    A_psi: FourierField  # ∫_0^t e^{(t-s)(Δ-m0^2)} (P_N^(1))^2 [u_s ⊘< Z2_s] ds
    J0snapshot: FourierField  # enhancement history J at t = 0, i.e. ∫_{-∞}^0
    params: object
    consts: object

    @property
    def grid(self):
        return self.Xtilde.grid


def check_finite(field, name, t, dt):
    if not field.is_finite() or np.max(np.abs(field.coeff), initial=0.0) > BLOW_UP_LIMIT:
        logger.debug("blow-up in %s at t=%g", name, t)
        raise BlowUpError(t, name, dt)
    return field


def require_synchronized(t, enhanced):
    if not math.isclose(t, enhanced.t, abs_tol=1e-9):
        raise StaleHistoryError(f"history at t={enhanced.t:.9g} used at t={t:.9g}")


# Full equation for X~
def sqe_drift(Xtilde, params, consts):
    """-λ P1[(P1 X~)^3 - 3(C1 - 3λC2) P1 X~]."""
    Xtilde.grid.require_cubic_safe()
    u = to_physical(apply_PN(Xtilde, params.N, 1))
    cubic = from_physical(Xtilde.grid, u ** 3 - 3 * consts.mass(params.lam) * u)
    return apply_PN(cubic, params.N, 1) * (-params.lam)


def step_Xtilde(Xtilde, params, consts, dW, t):
    drift = sqe_drift(Xtilde, params, consts)
    moved = duhamel_step(Xtilde, drift, dW.dt, params.m0) + ou_kick(dW, params.m0)
    return check_finite(moved, "Xtilde", t + dW.dt, dW.dt)


def step_sqe(state, enhanced, dW):
    require_synchronized(state.t, enhanced)
    Xtilde = step_Xtilde(state.Xtilde, state.params, state.consts, dW, state.t)
    return replace(state, t=state.t + dW.dt, Xtilde=Xtilde)


def init_coupled(Xtilde, params, consts, rng, burn_in_T=None, noise=None):
    """(X~_0, enhancement at t = 0) after co-evolving X~ and Z from -burn_in_T on shared noise.

    Z starts from μ0 and X~ from `Xtilde` (a μ_N draw); the enhancement histories start empty.
    """
    steps, enhanced = burn_in_start(params, consts, rng, burn_in_T)
    for n in range(-steps, 0):
        dW = burn_in_noise(params, rng, noise, n)
        Xtilde = step_Xtilde(Xtilde, params, consts, dW, enhanced.t)
        enhanced = advance_enhanced(enhanced, dW)
    logger.debug("joint burn-in: %d steps of %g", steps, params.dt)
    return Xtilde, replace(enhanced, t=0.0)


def derive_X2(Xtilde, enhanced, params, t=None):
    if t is not None:
        require_synchronized(t, enhanced)
    return apply_PN(Xtilde - enhanced.Z, params.N, 2) + params.lam * enhanced.Z03


def start_decomposition(Xtilde, enhanced, params, consts):
    """Split at t = 0: (X<, X>=) = (0, X2_0); histories of the split start empty."""
    require_synchronized(0.0, enhanced)
    zero = FourierField.zeros(Xtilde.grid)
    return SqeState(t=0.0, Xtilde=Xtilde, Xlt=zero, Xgeq=derive_X2(Xtilde, enhanced, params),
                    A_psi=zero, J0snapshot=enhanced.J, params=params, consts=consts)


# Histories of ∫ e^{(t-s)(Δ-m0^2)} (P1)^2 Z2_s ds, split at s = 0
def past_history(state):
    return heat_semigroup(state.J0snapshot, state.t, state.params.m0)


def recent_history(state, enhanced):
    require_synchronized(state.t, enhanced)
    return enhanced.J - past_history(state)


def shifted(w, enhanced, lam):
    return w - lam * enhanced.P1(enhanced.Z03)


# Coefficient functionals
def _Y(enhanced):
    return enhanced.P1(enhanced.Z03)


def coeff_Phi1(w, enhanced, lam):
    Y = _Y(enhanced)
    w2 = pointwise_product(w, w)
    first = para_leq(enhanced.Z1 - lam * Y, w2) * -3.0
    second = para_leq(pointwise_product(2.0 * enhanced.Z1 - lam * Y, Y), w) * (3.0 * lam)
    return first + second


def coeff_Phi2(w, enhanced, lam, past):
    """`past` is ∫_{-∞}^0 e^{(t-s)(Δ-m0^2)} (P1)^2 Z2_s ds at the current time."""
    Y = _Y(enhanced)
    u = shifted(w, enhanced, lam)
    out = para_gt(u, enhanced.Z2) * -3.0
    out = out + 3.0 * lam * enhanced.Z23
    out = out + pointwise_product(u, enhanced.Z22 - resonance(enhanced.Z2, past)) * (9.0 * lam)
    out = out - pointwise_product(3.0 * enhanced.Z1 - lam * Y, Y, Y) * lam ** 2
    return out


def coeff_Phi3(w, enhanced, lam):
    Y = _Y(enhanced)
    w2 = pointwise_product(w, w)
    first = para_gt(enhanced.Z1 - lam * Y, w2) * -3.0
    second = para_gt(pointwise_product(2.0 * enhanced.Z1 - lam * Y, Y), w) * (3.0 * lam)
    return first + second


def coeff_Psi1(w, enhanced, state):
    lam = state.params.lam
    u = shifted(w, enhanced, lam)
    return state.A_psi - para_lt(u, recent_history(state, enhanced))


def coeff_Psi2(w, enhanced, state):
    lam = state.params.lam
    u = shifted(w, enhanced, lam)
    recent = recent_history(state, enhanced)
    commuted = resonance(para_lt(u, recent), enhanced.Z2)
    return commuted - pointwise_product(u, resonance(recent, enhanced.Z2))


# Decomposed system
def step_decomposed(state, enhanced, dt):
    require_synchronized(state.t, enhanced)
    params = state.params
    lam, m0 = params.lam, params.m0
    P1 = enhanced.P1

    if lam == 0:
        zero = FourierField.zeros(state.grid)
        lt_forcing = ge_forcing = history_forcing = zero
    else:
        w = P1(state.Xlt) + P1(state.Xgeq)
        u = shifted(w, enhanced, lam)
        low = para_lt(u, enhanced.Z2)
        lt_forcing = P1(low) * (-3.0 * lam)
        history_forcing = P1(P1(low))

        rhs = pointwise_product(w, w, w) * -lam
        rhs = rhs + lam * coeff_Phi1(w, enhanced, lam)
        rhs = rhs + lam * coeff_Phi2(w, enhanced, lam, past_history(state))
        rhs = rhs + lam * coeff_Phi3(w, enhanced, lam)
        rhs = rhs - 3.0 * lam * resonance(P1(state.Xgeq), enhanced.Z2)
        rhs = rhs + 9.0 * lam ** 2 * resonance(coeff_Psi1(w, enhanced, state), enhanced.Z2)
        rhs = rhs + 9.0 * lam ** 2 * coeff_Psi2(w, enhanced, state)
        ge_forcing = P1(rhs)

    t = state.t + dt
    Xlt = check_finite(duhamel_step(state.Xlt, lt_forcing, dt, m0), "Xlt", t, dt)
    Xgeq = check_finite(duhamel_step(state.Xgeq, ge_forcing, dt, m0), "Xgeq", t, dt)
    A_psi = duhamel_step(state.A_psi, history_forcing, dt, m0)
    return replace(state, t=t, Xlt=Xlt, Xgeq=Xgeq, A_psi=A_psi)


def advance(state, enhanced, dW):
    """Full and decomposed systems over one step, both from the state at `enhanced.t`."""
    full = step_sqe(state, enhanced, dW)
    split = step_decomposed(state, enhanced, dW.dt)
    return replace(split, Xtilde=full.Xtilde)


def decomposition_defect(state, enhanced):
    X2 = derive_X2(state.Xtilde, enhanced, state.params, t=state.t)
    return math.sqrt(l2_norm_squared(state.Xlt + state.Xgeq - X2))
