import math
from dataclasses import replace

import numpy as np
import pytest

from phi4sqe.enhancement import (NoiseIncrement, NoiseStream, advance_enhanced, init_enhanced, initial_enhanced,
                                 seed_sequence, step_Z)
from phi4sqe.errors import BlowUpError, StaleHistoryError
from phi4sqe.littlewood_paley import dyadic_block, para_leq, resonance
from phi4sqe.multipliers import apply_PN, duhamel_step
from phi4sqe.renorm import energy_UN, metropolis_muN, sample_mu0
from phi4sqe.solver import (advance, coeff_Phi1, coeff_Phi2, coeff_Phi3, coeff_Psi1, coeff_Psi2, decomposition_defect,
                            derive_X2, init_coupled, past_history, start_decomposition, step_decomposed, step_sqe)
from phi4sqe.torus import FourierField, l2_norm_squared, pointwise_product, random_band_limited


def zero_noise(grid, dt):
    return NoiseIncrement(FourierField.zeros(grid), dt)


def norm(F):
    return math.sqrt(l2_norm_squared(F))


def zero_enhancement(grid, consts):
    zero = FourierField.zeros(grid)
    state = initial_enhanced(zero, consts)
    return replace(state, Z1=zero, Z2=zero, Z3=zero, Z22=zero, Z23=zero)


@pytest.fixture
def enhanced0(params0, consts0):
    return init_enhanced(params0, consts0, np.random.default_rng(5), burn_in_T=0.5)


@pytest.fixture
def state0(params0, consts0, enhanced0):
    xi = sample_mu0(params0.grid, params0.m0, np.random.default_rng(6))
    return start_decomposition(xi, enhanced0, params0, consts0)


def test_free_field_follows_ou(params0, consts0, enhanced0, rng):
    params = replace(params0, lam=0.0)
    state = start_decomposition(sample_mu0(params.grid, 1.0, rng), enhanced0, params, consts0)
    dW = NoiseStream(params.grid, seed=2, dt_fine=params.dt).increment(0)
    moved = step_sqe(state, enhanced0, dW)
    assert np.allclose(moved.Xtilde.coeff, step_Z(state.Xtilde, dW, 1.0).coeff, atol=1e-15)


def test_constant_field_step(params0, consts0, enhanced0):
    grid = params0.grid
    params = replace(params0, lam=0.5)
    c, dt = 3.0, params.dt
    state = start_decomposition(FourierField.mode(grid, (0, 0, 0), c), enhanced0, params, consts0)
    moved = step_sqe(state, enhanced0, zero_noise(grid, dt))

    ct = c * (2 * math.pi) ** -1.5
    forcing = -params.lam * (2 * math.pi) ** 1.5 * (ct ** 3 - 3 * consts0.mass(params.lam) * ct)
    expected = math.exp(-dt) * c + (1 - math.exp(-dt)) * forcing
    assert moved.Xtilde[(0, 0, 0)].real == pytest.approx(expected, rel=1e-12)
    assert moved.t == pytest.approx(dt)


def test_blow_up_detected(params0, consts0, enhanced0):
    params = replace(params0, lam=1.0)
    state = start_decomposition(FourierField.mode(params.grid, (0, 0, 0), 1e40), enhanced0, params, consts0)
    with pytest.raises(BlowUpError, match="reduce dt"):
        step_sqe(state, enhanced0, zero_noise(params.grid, params.dt))


def test_stale_history(state0, enhanced0):
    with pytest.raises(StaleHistoryError):
        step_sqe(state0, replace(enhanced0, t=0.1), zero_noise(state0.grid, 0.05))
    with pytest.raises(StaleHistoryError):
        coeff_Psi1(FourierField.zeros(state0.grid), replace(enhanced0, t=0.2), state0)


def test_derive_X2_free_field(params0, enhanced0, rng):
    params = replace(params0, lam=0.0)
    Xtilde = sample_mu0(params.grid, 1.0, rng)
    X2 = derive_X2(Xtilde, enhanced0, params)
    assert np.array_equal(X2.coeff, apply_PN(Xtilde - enhanced0.Z, 0, 2).coeff)


def test_derive_X2_affine_in_history(params0, enhanced0, rng):
    Xtilde = sample_mu0(params0.grid, 1.0, rng)
    doubled = replace(enhanced0, Z03=2 * enhanced0.Z03)
    gap = derive_X2(Xtilde, doubled, params0) - derive_X2(Xtilde, enhanced0, params0)
    assert np.allclose(gap.coeff, (params0.lam * enhanced0.Z03).coeff, atol=1e-14)


def test_split_starts_at_X2(state0, enhanced0):
    assert not np.any(state0.Xlt.coeff)
    assert np.array_equal(state0.Xgeq.coeff, derive_X2(state0.Xtilde, enhanced0, state0.params).coeff)
    assert decomposition_defect(state0, enhanced0) == 0.0


def test_phi_terms_vanish_at_zero_w(params0, enhanced0):
    zero = FourierField.zeros(params0.grid)
    lam = params0.lam
    assert not np.any(np.abs(coeff_Phi1(zero, enhanced0, lam).coeff) > 1e-15)
    assert not np.any(np.abs(coeff_Phi3(zero, enhanced0, lam).coeff) > 1e-15)


def test_phi_terms_vanish_without_enhancement(params0, consts0, rng):
    grid = params0.grid
    empty = zero_enhancement(grid, consts0)
    w = apply_PN(random_band_limited(grid, rng), 0, 1)
    for Phi in (coeff_Phi1(w, empty, 0.3), coeff_Phi2(w, empty, 0.3, FourierField.zeros(grid)),
                coeff_Phi3(w, empty, 0.3)):
        assert np.max(np.abs(Phi.coeff)) < 1e-14


def test_phi1_free_field(params0, enhanced0, rng):
    w = apply_PN(random_band_limited(params0.grid, rng), 0, 1)
    expected = para_leq(enhanced0.Z1, pointwise_product(w, w)) * -3.0
    assert np.allclose(coeff_Phi1(w, enhanced0, 0.0).coeff, expected.coeff, atol=1e-14)


def test_psi_vanish_at_start(state0, enhanced0, rng):
    w = apply_PN(random_band_limited(state0.grid, rng), 0, 1)
    assert not np.any(coeff_Psi1(w, enhanced0, state0).coeff)
    assert not np.any(coeff_Psi2(w, enhanced0, state0).coeff)


def test_psi2_constant_w(state0, enhanced0, rng):
    grid = state0.grid
    recent = apply_PN(random_band_limited(grid, rng), 0, 1)
    enhanced = replace(enhanced0, J=recent)
    state = replace(state0, params=replace(state0.params, lam=0.0), J0snapshot=FourierField.zeros(grid))
    c = 0.8
    w = FourierField.constant(grid, c)
    low = dyadic_block(recent, -1) + dyadic_block(recent, 0)
    expected = resonance(low, enhanced.Z2) * -c
    assert np.allclose(coeff_Psi2(w, enhanced, state).coeff, expected.coeff, atol=1e-12)


def test_past_history_decays(state0, enhanced0):
    later = replace(state0, t=1.0)
    assert norm(past_history(later)) < norm(past_history(state0))


def test_decomposed_without_enhancement(params0, consts0, rng):
    grid = params0.grid
    empty = zero_enhancement(grid, consts0)
    X = apply_PN(random_band_limited(grid, rng), 0, 1) * 0.5
    state = replace(start_decomposition(X, empty, params0, consts0), Xgeq=X)
    moved = step_decomposed(state, empty, params0.dt)
    assert not np.any(moved.Xlt.coeff)
    w = apply_PN(X, 0, 1)
    expected = duhamel_step(X, apply_PN(pointwise_product(w, w, w), 0, 1) * -params0.lam, params0.dt, 1.0)
    assert np.allclose(moved.Xgeq.coeff, expected.coeff, atol=1e-13)


def run_split(params, consts, dt, burn_in_T, seed):
    params = replace(params, dt=dt)
    noise = NoiseStream(params.grid, seed, dt_fine=dt)
    enhanced = init_enhanced(params, consts, np.random.default_rng(seed), burn_in_T=burn_in_T, noise=noise.increment)
    state = start_decomposition(sample_mu0(params.grid, 1.0, np.random.default_rng(seed + 1)), enhanced, params, consts)
    defects = []
    for n in range(params.steps):
        dW = noise.increment(n)
        state = advance(state, enhanced, dW)
        enhanced = advance_enhanced(enhanced, dW)
        X2 = derive_X2(state.Xtilde, enhanced, params, t=state.t)
        defects.append(decomposition_defect(state, enhanced) / norm(X2))
    return state, enhanced, defects


def test_split_consistency(params1, consts1):
    params = replace(params1, T=0.3)
    for dt in (0.1, 0.05, 0.025):
        state, enhanced, defects = run_split(params, consts1, dt, burn_in_T=0.2, seed=21)
        assert state.t == pytest.approx(0.3)
        assert max(defects) <= 1e-8
        assert norm(state.Xlt) > 0


def test_split_consistency_strong_coupling(params0, consts0):
    params = replace(params0, lam=1.0, T=0.5)
    _, _, defects = run_split(params, consts0, 0.05, burn_in_T=1.0, seed=4)
    assert max(defects) <= 1e-8


def strong_error_run(params, consts, substeps, dt_fine, seed):
    """X~ - Z at time T, driven by the fine noise realization summed over `substeps`."""
    noise = NoiseStream(params.grid, seed, dt_fine=dt_fine, substeps=substeps)
    params = replace(params, dt=noise.dt)
    enhanced = init_enhanced(params, consts, np.random.default_rng(seed), burn_in_T=0.0)
    state = start_decomposition(sample_mu0(params.grid, 1.0, np.random.default_rng(seed + 1)), enhanced, params,
                                consts)
    for n in range(params.steps):
        dW = noise.increment(n)
        state = step_sqe(state, enhanced, dW)
        enhanced = advance_enhanced(enhanced, dW)
    return state.Xtilde - enhanced.Z


@pytest.mark.slow
def test_integrator_first_order(params0, consts0):
    params = replace(params0, lam=1.0, T=0.5)
    dt_fine = 0.00625 / 8
    errors = np.zeros(4)
    for seed in (31, 32, 33):
        reference = strong_error_run(params, consts0, 1, dt_fine, seed)
        for i, substeps in enumerate((64, 32, 16, 8)):
            errors[i] += norm(strong_error_run(params, consts0, substeps, dt_fine, seed) - reference)
    order = math.log2(errors[0] / errors[-1]) / 3
    assert order >= 0.8


def test_joint_burn_in_free_field(params0, consts0, rng):
    params = replace(params0, lam=0.0)
    start = sample_mu0(params.grid, 1.0, rng)
    Xtilde, enhanced = init_coupled(start, params, consts0, rng, burn_in_T=10.0)
    assert enhanced.t == 0.0
    # independent starts give ~26 here; every mode of X~ - Z decays by e^{-10}
    assert l2_norm_squared(apply_PN(Xtilde - enhanced.Z, 0, 2)) <= 1e-6


def test_joint_burn_in_without_steps(params0, consts0, rng):
    start = sample_mu0(params0.grid, 1.0, rng)
    Xtilde, enhanced = init_coupled(start, params0, consts0, rng, burn_in_T=0.0)
    assert Xtilde is start
    assert enhanced.t == 0.0 and l2_norm_squared(enhanced.J) == 0.0


def test_joint_burn_in_shares_enhancement(params0, consts0):
    zero = FourierField.zeros(params0.grid)
    _, coupled = init_coupled(zero, params0, consts0, np.random.default_rng(5), burn_in_T=0.5)
    alone = init_enhanced(params0, consts0, np.random.default_rng(5), burn_in_T=0.5)
    for name in ["Z", "Z02", "Z03", "J", "Z22"]:
        assert np.array_equal(getattr(coupled, name).coeff, getattr(alone, name).coeff), name


def test_joint_burn_in_follows_full_equation(params0, consts0):
    start = sample_mu0(params0.grid, 1.0, np.random.default_rng(3))
    noise = NoiseStream(params0.grid, seed=3, dt_fine=params0.dt)
    Xtilde, _ = init_coupled(start, params0, consts0, np.random.default_rng(4), burn_in_T=0.1, noise=noise.increment)

    enhanced = replace(initial_enhanced(FourierField.zeros(params0.grid), consts0), t=-0.1)
    state = replace(start_decomposition(start, replace(enhanced, t=0.0), params0, consts0), t=-0.1)
    for n in (-2, -1):
        dW = noise.increment(n)
        state = step_sqe(state, enhanced, dW)
        enhanced = replace(enhanced, t=enhanced.t + dW.dt)
    assert np.allclose(Xtilde.coeff, state.Xtilde.coeff, rtol=0, atol=1e-13)


@pytest.mark.slow
def test_stationary_after_joint_burn_in(params0, consts0):
    params = replace(params0, lam=0.1, T=1.0, dt=0.05)
    series = {"X_l2sq": ([], []), "energy_UN": ([], [])}

    def record(phase, Xtilde):
        series["X_l2sq"][phase].append(l2_norm_squared(apply_PN(Xtilde, 0, 2)))
        series["energy_UN"][phase].append(energy_UN(Xtilde, params, consts0))

    for i in range(200):
        rng = np.random.default_rng(seed_sequence(params.seed, i, 0))
        chain = metropolis_muN(params, consts0, 500, rng)
        noise = NoiseStream(params.grid, params.seed, stream=i, dt_fine=params.dt)
        Xtilde, enhanced = init_coupled(chain.field, params, consts0, rng, noise=noise.increment)
        state = start_decomposition(Xtilde, enhanced, params, consts0)
        record(0, state.Xtilde)
        for n in range(params.steps):
            dW = noise.increment(n)
            state = step_sqe(state, enhanced, dW)
            enhanced = advance_enhanced(enhanced, dW)
        record(1, state.Xtilde)

    for name, (start, end) in series.items():
        start, end = np.array(start), np.array(end)
        se = math.sqrt((start.var(ddof=1) + end.var(ddof=1)) / len(start))
        assert abs(end.mean() - start.mean()) <= 3 * se, name
