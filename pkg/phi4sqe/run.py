"""Run orchestration for the four subcommands.

Trajectory i of a run uses stream id i: its initial data come from SeedSequence(seed,
spawn_key=(i, 0)), its burn-in and time-step noise from NoiseStream(seed, i).
Workers only compute; every file is written by the calling process in trajectory order.
"""

import logging
import math
import os
from dataclasses import asdict, dataclass

import numpy as np
from joblib import Parallel, delayed

import phi4sqe
from phi4sqe import storage
from phi4sqe.config import emit_config
from phi4sqe.enhancement import NoiseStream, advance_enhanced, burn_in_steps, default_burn_in, seed_sequence
from phi4sqe.errors import BlowUpError, BudgetError, ConfigError, GridError
from phi4sqe.estimators import (besov_profile, estimator_report, measure_trajectory, resonance_trend,
                                take_snapshot, tightness_report, zs_snapshot)
from phi4sqe.littlewood_paley import PARTITION_PROFILE, para_gt, para_lt, partition_residual, resonance
from phi4sqe.multipliers import PSI1_PROFILE, PSI2_PROFILE, apply_PN, heat_semigroup
from phi4sqe.renorm import batch_means, compute_C1, compute_C2, energy_UN, metropolis_muN, renorm_constants
from phi4sqe.solver import advance, decomposition_defect, derive_X2, init_coupled, start_decomposition
from phi4sqe.torus import (FourierField, field_lp_norm, from_physical, l2_norm_squared, make_grid, pointwise_product,
                           random_band_limited, spatial_mean, to_physical)


logger = logging.getLogger(__name__)

# Exit codes
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOW_UP = 3
EXIT_SELFCHECK = 4

OBSERVABLES_FILE = "observables.csv"
CSV_HEADER_OBSERVABLES = ["trajectory", "step", "t", "XN_l2sq", "X2_l2sq", "Xlt_l2sq", "Xgeq_l2sq", "Xtilde_mean",
                          "energy_UN", "split_defect"]
CSV_HEADER_RENORM = ["N", "C1", "C2", "C1_ratio", "C2_increment"]
CSV_HEADER_REPORT = ["N", "quantity", "mean", "se", "red_flag"]
CSV_HEADER_RESONANCE = ["N", "Z22_mean", "Z22_se", "unrenormalized_mean", "unrenormalized_se"]
SEED_RULE = "trajectory i: SeedSequence(seed, spawn_key=(i, 0)) for initial data, (i, 1, n) / (i, 2, n) for steps"

# Self-check tolerances
SELFCHECK_GRID = (8, 33)
SELFCHECK_PAIRS = 20
SELFCHECK_SEED = 2024

# Batches for pCN chain summaries
PCN_BATCHES = 20


@dataclass
class TrajectoryResult:
    index: int
    observables: list
    measures: dict
    profile: list
    snapshots: list  # (step, t, Xtilde)
    enhanced: object
    acceptance: float
    pcn_mean: tuple  # batch means (mean, se) of Re <φ, e_0> along the chain, or None


def observables_row(index, step, state, enhanced):
    params = state.params
    X2 = derive_X2(state.Xtilde, enhanced, params, t=state.t)
    return [index, step, state.t, l2_norm_squared(apply_PN(state.Xtilde, params.N, 2)), l2_norm_squared(X2),
            l2_norm_squared(state.Xlt), l2_norm_squared(state.Xgeq), spatial_mean(state.Xtilde),
            energy_UN(state.Xtilde, params, state.consts), decomposition_defect(state, enhanced)]


def run_trajectory(config, consts, index):
    params = config.params
    exponents = config.exponents
    rng = np.random.default_rng(seed_sequence(params.seed, index, 0))

    chain = metropolis_muN(params, consts, config.pcn_steps, rng, beta=config.pcn_beta)
    noise = NoiseStream(params.grid, params.seed, stream=index, dt_fine=params.dt)
    Xtilde, enhanced = init_coupled(chain.field, params, consts, rng, burn_in_T=config.burn_in_T,
                                    noise=noise.increment)
    state = start_decomposition(Xtilde, enhanced, params, consts)

    observables = [observables_row(index, 0, state, enhanced)]
    snapshots = [take_snapshot(state, enhanced)]
    zs = [zs_snapshot(enhanced, exponents.eps)]
    stored = [(0, state.t, state.Xtilde)]
    for n in range(params.steps):
        dW = noise.increment(n)
        state = advance(state, enhanced, dW)
        enhanced = advance_enhanced(enhanced, dW)
        step = n + 1
        if step % config.snapshot_every == 0 or step == params.steps:
            observables.append(observables_row(index, step, state, enhanced))
            snapshots.append(take_snapshot(state, enhanced))
            zs.append(zs_snapshot(enhanced, exponents.eps))
            stored.append((step, state.t, state.Xtilde))

    measures, profile = {}, []
    if len(snapshots) >= 2:
        measures = measure_trajectory(snapshots, exponents, params.lam, zs_samples=zs)
        profile = besov_profile(snapshots, exponents.q, exponents.eps)
    logger.debug("trajectory %d done: %d snapshots, pCN acceptance %.3f", index, len(snapshots), chain.acceptance)
    pcn_mean = batch_means(chain.trace, PCN_BATCHES) if len(chain.trace) >= PCN_BATCHES else None
    return TrajectoryResult(index, observables, measures, profile, stored, enhanced, chain.acceptance, pcn_mean)


def manifest_record(config, consts, status):
    params = config.params
    burn_in_T = default_burn_in(params.m0) if config.burn_in_T is None else config.burn_in_T
    return {
        "version": phi4sqe.__version__,
        "mode": config.mode,
        "status": status,
        "config": emit_config(config),
        "N": params.N,
        "m0": params.m0,
        "lambda": params.lam,
        "T": params.T,
        "dt": params.dt,
        "seed": params.seed,
        "grid": {"K": params.grid.K, "M": params.grid.M},
        "ensemble": config.ensemble,
        "burn_in_T": burn_in_T,
        "burn_in_steps": burn_in_steps(burn_in_T, params.dt),
        "C1": consts.C1,
        "C2": consts.C2,
        "profiles": {"psi1": PSI1_PROFILE, "psi2": PSI2_PROFILE, "partition": PARTITION_PROFILE},
        "seed_rule": SEED_RULE,
    }


def run_simulate(config, threads=1):
    params = config.params
    out = config.output_dir
    consts = renorm_constants(params.N, params.m0, n_jobs=threads)

    manifest_path = os.path.join(out, storage.MANIFEST_FILE)
    print(f"Writing to '{manifest_path}'...")
    storage.write_json(manifest_path, manifest_record(config, consts, "running"))

    print(f"Simulating {config.ensemble} trajectories (N={params.N}, λ={params.lam}, T={params.T}, Δt={params.dt})...")
    results = Parallel(n_jobs=min(threads, config.ensemble))(
        delayed(run_trajectory)(config, consts, index) for index in range(config.ensemble))

    path = os.path.join(out, OBSERVABLES_FILE)
    print(f"Writing to '{path}'...")
    storage.write_csv(path, CSV_HEADER_OBSERVABLES, [row for result in results for row in result.observables])

    for result in results:
        for step, t, Xtilde in result.snapshots:
            storage.write_field(os.path.join(out, "fields", f"traj{result.index:04d}_step{step:06d}.phi4"), Xtilde,
                                params.m0, t)
        storage.write_enhanced(os.path.join(out, "fields", f"traj{result.index:04d}_enhanced.phi4"), result.enhanced)

    if results[0].measures:
        names = list(results[0].measures)
        path = os.path.join(out, storage.MEASURES_FILE)
        print(f"Writing to '{path}'...")
        storage.write_csv(path, ["trajectory"] + names,
                          [[result.index] + [result.measures[name] for name in names] for result in results])
        storage.write_csv(os.path.join(out, storage.PROFILES_FILE), ["trajectory", "t", "X2_B1_q"],
                          [[result.index, t, value] for result in results for t, value in result.profile])

    record = manifest_record(config, consts, "complete")
    record["pcn_acceptance"] = [result.acceptance for result in results]
    record["pcn_trace_mean"] = [result.pcn_mean for result in results]
    if results[0].measures:
        report = estimator_report([result.measures for result in results], config.exponents, params.N, params.seed,
                                  params.dt)
        record["estimator_report"] = asdict(report)
    storage.write_json(manifest_path, record)
    print("-> Done")
    return EXIT_OK


def renorm_table(N_max, m0, n_jobs=1):
    rows = []
    previous = None
    for N in range(N_max + 1):
        C1, C2 = compute_C1(N, m0), compute_C2(N, m0, n_jobs=n_jobs)
        ratio = C1 / previous[0] if previous else math.nan
        increment = C2 - previous[1] if previous else math.nan
        rows.append([N, C1, C2, ratio, increment])
        previous = (C1, C2)
    return rows


def run_renorm_table(config, threads=1):
    rows = renorm_table(config.params.N, config.params.m0, n_jobs=threads)
    for N, C1, C2, ratio, increment in rows:
        print(f"-> N={N}: C1={C1:.6g} C2={C2:.6g} ratio={ratio:.4g} increment={increment:.4g}")
    path = os.path.join(config.output_dir, "renorm.csv")
    print(f"Writing to '{path}'...")
    storage.write_csv(path, CSV_HEADER_RENORM, rows)
    return EXIT_OK


def load_run(directory):
    """(N, per-trajectory measures, per-trajectory profiles) of one simulate output directory."""
    manifest = storage.read_json(os.path.join(directory, storage.MANIFEST_FILE))
    if manifest.get("status") != "complete":
        raise ConfigError(f"run '{directory}' is not complete")
    header, rows = storage.read_csv(os.path.join(directory, storage.MEASURES_FILE))
    measures = [{name: float(value) for name, value in zip(header[1:], row[1:])} for row in rows]

    profiles = {}
    profile_path = os.path.join(directory, storage.PROFILES_FILE)
    if os.path.exists(profile_path):
        _, rows = storage.read_csv(profile_path)
        for trajectory, t, value in rows:
            profiles.setdefault(int(trajectory), []).append((float(t), float(value)))
    return manifest["N"], measures, [profiles[k] for k in sorted(profiles)]


def run_tightness(config, threads=1):
    if not config.runs:
        raise ConfigError("tightness-report needs [tightness] runs = <dir>, <dir>, ...")
    measures_by_N, profiles_by_N = {}, {}
    for directory in config.runs:
        N, measures, profiles = load_run(directory)
        measures_by_N.setdefault(N, []).extend(measures)
        profiles_by_N.setdefault(N, []).extend(profiles)

    try:
        rows = tightness_report(measures_by_N, profiles_by_N, factor=config.red_flag_factor,
                                min_ensemble=config.min_ensemble)
    except ValueError as e:
        raise ConfigError(str(e)) from e

    path = os.path.join(config.output_dir, "tightness.csv")
    print(f"Writing to '{path}'...")
    storage.write_csv(path, CSV_HEADER_REPORT, [[r.N, r.quantity, r.mean, r.se, r.red_flag] for r in rows])

    if all("Z22_mean" in run for runs in measures_by_N.values() for run in runs):
        path = os.path.join(config.output_dir, "resonance.csv")
        print(f"Writing to '{path}'...")
        storage.write_csv(path, CSV_HEADER_RESONANCE, resonance_trend(measures_by_N))

    flagged = sorted({r.quantity for r in rows if r.red_flag})
    for quantity in flagged:
        print(f"-> Red flag! '{quantity}' grows by more than {config.red_flag_factor}x across N")
    return EXIT_OK


# Exact-identity suite
@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self):
        return math.isfinite(self.value) and self.value <= self.tolerance


def _relative(error, scale):
    return error / scale if scale > 0 else error


def selfcheck_suite(seed=SELFCHECK_SEED):
    grid = make_grid(*SELFCHECK_GRID)
    rng = np.random.default_rng(seed)
    checks = [CheckResult("partition of unity", partition_residual(grid), 1e-10)]

    bony = 0.0
    for _ in range(SELFCHECK_PAIRS):
        f = random_band_limited(grid, rng, grid.K // 2)
        g = random_band_limited(grid, rng, grid.K // 2)
        product = pointwise_product(f, g)
        split = para_lt(f, g) + resonance(f, g) + para_gt(f, g)
        bony = max(bony, _relative(math.sqrt(l2_norm_squared(split - product)), math.sqrt(l2_norm_squared(product))))
    checks.append(CheckResult("Bony decomposition", bony, 1e-10))

    m0, t = 1.0, 0.3
    heat = 0.0
    for k in [(0, 0, 0), (1, 0, 0), (1, -2, 3), (grid.K, grid.K, -grid.K)]:
        moved = heat_semigroup(FourierField.mode(grid, k), t, m0)
        expected = math.exp(-t * (sum(c * c for c in k) + m0 ** 2))
        heat = max(heat, abs(moved[k] - expected))
    checks.append(CheckResult("heat semigroup", heat, 1e-14))

    F = random_band_limited(grid, rng, grid.K)
    physical = field_lp_norm(F, 2) ** 2
    checks.append(CheckResult("Parseval", _relative(abs(physical - l2_norm_squared(F)), l2_norm_squared(F)), 1e-10))

    back = from_physical(grid, to_physical(F))
    checks.append(CheckResult("transform round-trip", float(np.max(np.abs(back.coeff - F.coeff))), 1e-12))

    nested = 0.0
    for N in (0, 1):
        once = apply_PN(F, N, 1)
        nested = max(nested, float(np.max(np.abs(apply_PN(once, N, 2).coeff - once.coeff))))
    checks.append(CheckResult("P2 P1 = P1", nested, 0.0))
    return checks


def run_selfcheck(config, threads=1):
    checks = selfcheck_suite()
    for check in checks:
        status = "ok" if check.passed else "FAILED"
        print(f"-> {check.name}: {check.value:.3g} (tolerance {check.tolerance:g}) {status}")
    failed = [check.name for check in checks if not check.passed]
    if failed:
        print(f"Error! Self-check failed: {', '.join(failed)}")
        write_error(config.output_dir, EXIT_SELFCHECK, "SelfcheckFailure", f"failed: {', '.join(failed)}")
        return EXIT_SELFCHECK
    return EXIT_OK


RUNNERS = {
    "simulate": run_simulate,
    "renorm-table": run_renorm_table,
    "tightness-report": run_tightness,
    "selfcheck": run_selfcheck,
}


def write_error(directory, code, kind, message):
    if directory and os.path.isdir(directory):
        storage.write_json(os.path.join(directory, storage.ERROR_FILE),
                           {"code": code, "kind": kind, "message": message})


def run(config, threads=1):
    """Runs `config.mode`; returns the exit code and records failures in error.json."""
    try:
        return RUNNERS[config.mode](config, threads)
    except (ConfigError, GridError, BudgetError) as e:
        print(f"Error! {e}")
        write_error(config.output_dir, EXIT_CONFIG, type(e).__name__, str(e))
        return EXIT_CONFIG
    except BlowUpError as e:
        print(f"Error! Numerical blow-up: {e}")
        write_error(config.output_dir, EXIT_BLOW_UP, type(e).__name__, str(e))
        return EXIT_BLOW_UP
