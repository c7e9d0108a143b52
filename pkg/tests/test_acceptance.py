"""End-to-end acceptance checks for the pause laboratory.

Each test covers one numbered acceptance criterion and the terminal summary
prints one PASS/FAIL line per criterion (see conftest). The slow tests share
a single truncated eigenbasis path for the bundled 12-qubit instance through
session fixtures; the spin-vector runs use pinned seeds so every number here
is reproducible. Statistical comparisons carry explicit counting-noise
bands; deterministic master-equation comparisons use tight tolerances.
"""

import math
import time

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.stats import norm

from pauselab.analysis import (fit_decay, fit_decay_bootstrap,
                               pause_time_to_target, runs_test, tts_condition)
from pauselab.instance import (brute_force_spectrum, bundled_instance,
                               load_instance)
from pauselab.quantum import (AmePauseScanner, BathParams, build_hamiltonian,
                              get_path, gibbs_populations, lowest_eigs,
                              matrix_element_scaling, min_gap,
                              relaxation_rate, spectral_density, _davies_ops,
                              _instance_parts, _superoperator, _z_elements)
from pauselab.schedule import AnnealPlan, synthetic_schedule
from pauselab.svmc_engine import SvmcParams, equilibrium_angles, run_many

# Pause-location grids. The master-equation grid is denser around the
# minimum gap; the long spin-vector row drops a few flat tail points to
# keep the repetition count affordable at t_p = 100 t_a.
GRID_AME = np.array([0.38, 0.40, 0.42, 0.44, 0.46, 0.48,
                     0.50, 0.54, 0.58, 0.62, 0.66])
GRID_SVMC = np.array([0.38, 0.42, 0.46, 0.50, 0.54, 0.58, 0.62, 0.66])
GRID_SVMC_LONG = np.array([0.38, 0.42, 0.46, 0.50, 0.58, 0.66])


@pytest.fixture(scope="session")
def anneal12():
    return bundled_instance("I12_0")


@pytest.fixture(scope="session")
def sched():
    return synthetic_schedule()


@pytest.fixture(scope="session")
def gap_info(anneal12, sched):
    return min_gap(anneal12, sched)


@pytest.fixture(scope="session")
def path16(anneal12, sched):
    return get_path(anneal12, sched, m=16, slices=1024)


@pytest.fixture(scope="session")
def scanner_cold(path16):
    return AmePauseScanner(path16, BathParams(temperature=12.0), t_a=1.0)


@pytest.fixture(scope="session")
def scanner_hot(path16):
    return AmePauseScanner(path16, BathParams(temperature=40.0), t_a=1.0)


def _pause_success(instance, schedule, *, s_p, t_p, t_a, temperature, reps,
                   seed, variant="transverse-field-restricted"):
    """Ground-state probability of one seeded spin-vector batch."""
    params = SvmcParams(temperature=temperature, seed=seed, variant=variant)
    if t_p > 0:
        plan = AnnealPlan(t_a=t_a, s_p=s_p, t_p=t_p)
    else:
        plan = AnnealPlan(t_a=t_a)
    return run_many(instance, schedule, plan, params, reps).success_prob


def _assert_single_interior_peak(s_grid, values, baseline, s_gap, *,
                                 above_tol, pair_slack):
    """One contiguous bump over baseline, rising then falling, peaked
    strictly inside the grid and past the minimum-gap location.

    Returns (peak location, peak height). ``above_tol`` sets how far a
    point must climb over the no-pause baseline to count as part of the
    bump; ``pair_slack`` allows counting noise between neighbours.
    """
    s_grid = np.asarray(s_grid, dtype=float)
    values = np.asarray(values, dtype=float)
    k = int(np.argmax(values))
    assert 0 < k < values.size - 1, "peak sits on the grid edge"
    assert s_grid[k] > s_gap, "peak must fall after the minimum gap"
    assert values[k] > baseline + above_tol, "no bump resolvable over baseline"
    above = np.nonzero(values > baseline + above_tol)[0]
    assert np.all(np.diff(above) == 1), "above-baseline region is split"
    assert above[0] <= k <= above[-1]
    segment = values[above[0]:above[-1] + 1]
    kk = k - int(above[0])
    assert np.all(np.diff(segment[:kk + 1]) >= -pair_slack), \
        "left flank is not rising"
    assert np.all(np.diff(segment[kk:]) <= pair_slack), \
        "right flank is not falling"
    return float(s_grid[k]), float(values[k])


def _loglinear(s_values, t_stars):
    """Slope and R^2 of log10(t*) against pause location."""
    x = np.asarray(s_values, dtype=float)
    y = np.log10(np.asarray(t_stars, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(((y - fitted) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    return float(slope), 1.0 - ss_res / ss_tot


def test_criterion_01_exact_classical_spectrum(anneal12, acceptance_log):
    t0 = time.perf_counter()
    spec = brute_force_spectrum(anneal12, max_levels=3)
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0

    ground = spec.configs(0)
    assert len(ground) == 2
    assert {c.label for c in ground} == {"000110110000", "111001001111"}

    split = spec.gap(2, 1)
    assert split == pytest.approx(0.0781, abs=1e-3)

    # every first-excited configuration pairs with a second-excited one
    # by flipping qubit 8 (the ninth qubit) and nothing else
    first = {c.value for c in spec.configs(1)}
    second = {c.value for c in spec.configs(2)}
    assert len(first) == 2 and len(second) == 2
    assert {v ^ (1 << 8) for v in first} == second

    acceptance_log(1, f"doublet split {split:.6f} GHz, "
                      f"enumerated in {elapsed * 1e3:.1f} ms")


def test_criterion_02_pause_benefit_threshold(acceptance_log):
    tts_condition(0.9, 0.5, 1.0)  # warm the call path before timing
    t0 = time.perf_counter()
    rate_us = tts_condition(0.95, 0.69, 1.0)
    rate_sweep = tts_condition(0.73, 0.35, 1.0e4)
    elapsed = time.perf_counter() - t0
    assert elapsed < 1e-3

    assert 1.0 / rate_us == pytest.approx(0.72, abs=0.01)
    assert 1.0 / rate_sweep == pytest.approx(14_000.0, abs=500.0)

    acceptance_log(2, f"1/gamma_min = {1.0 / rate_us:.4f} us and "
                      f"{1.0 / rate_sweep:.0f} sweeps "
                      f"({elapsed * 1e6:.0f} us wall)")


def test_criterion_03_stationary_state_is_truncated_gibbs(anneal12, sched,
                                                          acceptance_log):
    bath = BathParams(temperature=12.0)
    s_hold = 0.46
    sl = lowest_eigs(build_hamiltonian(anneal12, sched, s_hold), 16, s=s_hold)
    rate = relaxation_rate(sl, bath, anneal12)
    hold = 10.0 / rate.total

    _, _, zvec = _instance_parts(anneal12)
    T, K = _davies_ops(sl.energies, _z_elements(sl.vectors, zvec), bath)
    L = _superoperator(T, K)
    rho0 = np.zeros((16, 16), dtype=complex)
    rho0[0, 0] = 1.0
    held = (expm(L * hold) @ rho0.reshape(-1)).reshape(16, 16)

    dev = held - np.diag(gibbs_populations(sl, bath))
    dev = 0.5 * (dev + dev.conj().T)
    trace_distance = 0.5 * float(np.abs(np.linalg.eigvalsh(dev)).sum())
    assert trace_distance <= 1e-4

    acceptance_log(3, f"trace distance {trace_distance:.2e} after "
                      f"{hold:.1f} us (10 / {rate.total:.4f} per us) "
                      f"at s = {s_hold}")


def test_criterion_04_detailed_balance_and_equilibrium(acceptance_log):
    # spectral function obeys detailed balance across the sign of omega
    bath = BathParams(temperature=12.0)
    rng = np.random.default_rng(0)
    omegas = rng.uniform(0.01, 12.0, size=1000)
    g_pos = spectral_density(omegas, bath)
    g_neg = spectral_density(-omegas, bath)
    kms_dev = float(np.max(np.abs(
        g_neg / (np.exp(-bath.beta * omegas) * g_pos) - 1.0)))
    assert kms_dev < 1e-12

    # two-rotor stationary ensemble against quadrature of the Boltzmann
    # weight on a 16 x 16 joint angle histogram
    inst = load_instance("n 2\nJ 0 1 0.8\nh 0 0.3\nh 1 -0.2\n")
    A = B = 1.0
    params = SvmcParams(variant="standard", temperature=60.0, seed=13)

    nq = 2048
    mid = (np.arange(nq) + 0.5) * math.pi / nq
    c1 = np.cos(mid)[:, None]
    c2 = np.cos(mid)[None, :]
    energy = (-A * (np.sin(mid)[:, None] + np.sin(mid)[None, :])
              + B * (0.8 * c1 * c2 + 0.3 * c1 - 0.2 * c2))
    dens = np.exp(-params.beta * energy)
    dens /= dens.sum()
    q = dens.reshape(16, nq // 16, 16, nq // 16).sum(axis=(1, 3))

    samples = equilibrium_angles(inst, A, B, params, sweeps=30_000_000,
                                 burn_in=300_000, record_every=150)
    edges = np.linspace(0.0, math.pi, 17)
    counts, _, _ = np.histogram2d(samples[:, 0], samples[:, 1],
                                  bins=(edges, edges))
    expected = samples.shape[0] * q
    assert expected.min() > 20.0, "a bin is too empty for the chi^2 bands"
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    z_worst = float((np.abs(counts - expected)
                     / np.sqrt(expected * (1.0 - q))).max())

    dof = 255
    assert chi2 <= dof + 3.0 * math.sqrt(2.0 * dof)
    assert z_worst <= 3.5

    acceptance_log(4, f"KMS max rel dev {kms_dev:.1e}; joint histogram "
                      f"chi2 {chi2:.1f} / dof {dof}, worst bin "
                      f"{z_worst:.2f} sigma")


def test_criterion_05_pause_location_peak(anneal12, sched, gap_info,
                                          scanner_cold, acceptance_log):
    # master equation rows are deterministic up to integrator roundoff
    tps_ame = [1.0, 10.0, 100.0]
    mat = scanner_cold.scan(GRID_AME, tps_ame)
    ame_peaks = [
        _assert_single_interior_peak(GRID_AME, mat[:, j],
                                     scanner_cold.baseline_p0, gap_info.s,
                                     above_tol=1e-3, pair_slack=1e-9)
        for j in range(len(tps_ame))
    ]
    for (s0, h0), (s1, h1) in zip(ame_peaks, ame_peaks[1:]):
        assert s1 >= s0 - 1e-12, "peak location moved backwards"
        assert h1 >= h0 - 1e-12, "peak height dropped"

    # spin-vector rows with counting-noise bands; the cross-row height
    # comparison allows two pooled standard errors of slack
    t_a = 1000.0
    temperature = 12.0
    base = _pause_success(anneal12, sched, s_p=None, t_p=0.0, t_a=t_a,
                          temperature=temperature, reps=3000, seed=5000)
    rows = [(1.0e3, GRID_SVMC, 3000, 5001),
            (1.0e4, GRID_SVMC, 1500, 5002),
            (1.0e5, GRID_SVMC_LONG, 1000, 5003)]
    svmc_peaks = []
    for t_p, grid, reps, seed in rows:
        vals = np.array([
            _pause_success(anneal12, sched, s_p=float(s), t_p=t_p, t_a=t_a,
                           temperature=temperature, reps=reps,
                           seed=seed + 10 * i)
            for i, s in enumerate(grid)
        ])
        sig = math.sqrt(float((vals * (1.0 - vals)).max()) / reps)
        s_pk, h_pk = _assert_single_interior_peak(
            grid, vals, base, gap_info.s, above_tol=5.0 * sig,
            pair_slack=4.0 * sig)
        svmc_peaks.append((s_pk, h_pk, sig))
    for (s0, h0, g0), (s1, h1, g1) in zip(svmc_peaks, svmc_peaks[1:]):
        assert s1 >= s0 - 1e-12, "peak location moved backwards"
        assert h1 >= h0 - 2.0 * math.hypot(g0, g1), "peak height dropped"

    ame_txt = " -> ".join(f"{s:.2f}/{h:.3f}" for s, h in ame_peaks)
    svmc_txt = " -> ".join(f"{s:.2f}/{h:.3f}" for s, h, _ in svmc_peaks)
    acceptance_log(5, f"peaks (s_p/P0) ame {ame_txt}; svmc {svmc_txt}")


def test_criterion_06_standard_beats_restricted_late(anneal12, sched,
                                                     acceptance_log):
    reps = 10_000
    kw = dict(s_p=0.80, t_p=1.0e4, t_a=1000.0, temperature=40.0, reps=reps)
    p_std = _pause_success(anneal12, sched, variant="standard", seed=6001,
                           **kw)
    p_tf = _pause_success(anneal12, sched,
                          variant="transverse-field-restricted", seed=6002,
                          **kw)
    assert p_std > p_tf

    pool = 0.5 * (p_std + p_tf)
    z = (p_std - p_tf) / math.sqrt(2.0 * pool * (1.0 - pool) / reps)
    p_value = float(norm.sf(z))
    assert p_value < 1e-6

    acceptance_log(6, f"late pause at s_p=0.80: standard {p_std:.3f} vs "
                      f"restricted {p_tf:.3f} (z = {z:.1f}, "
                      f"one-sided p = {p_value:.1e})")


def test_criterion_07_pause_time_to_target_scaling(anneal12, sched,
                                                   scanner_cold,
                                                   acceptance_log):
    # master equation: pause time reaching P0 = 0.90 at each location
    ame_ladders = {
        0.44: np.array([0.5, 1.0, 2.0, 4.0, 8.0]),
        0.46: np.array([3.0, 6.0, 12.0, 24.0, 48.0]),
        0.48: np.array([40.0, 80.0, 160.0, 320.0]),
        0.50: np.array([500.0, 1000.0, 2000.0, 4000.0]),
    }
    ame_s, ame_t = [], []
    for s_p, ts in sorted(ame_ladders.items()):
        curve = np.array([scanner_cold.p0_with_pause(s_p, float(t))
                          for t in ts])
        assert curve[0] < 0.90 < curve[-1], "ladder must bracket the target"
        res = pause_time_to_target([s_p], ts, curve[None, :], 0.90)
        assert len(res.crossings) == 1 and not res.omitted
        ame_s.append(s_p)
        ame_t.append(res.crossings[0].t_star)
    assert np.all(np.diff(ame_t) > 0)
    ame_slope, ame_r2 = _loglinear(ame_s, ame_t)
    assert ame_r2 >= 0.95

    # spin-vector ladders: pause sweeps reaching P0 = 0.30, pinned seeds
    target = 0.30
    reps = 700
    svmc_ladders = {
        0.42: (np.array([600.0, 1100.0, 2000.0, 3600.0, 6600.0]), 7001),
        0.44: (np.array([1200.0, 2300.0, 4300.0, 8000.0, 15000.0]), 7002),
        0.46: (np.array([5000.0, 9500.0, 18000.0, 34000.0, 64000.0]), 7003),
        0.48: (np.array([12000.0, 30000.0, 72000.0, 136000.0, 258000.0]),
               7004),
    }
    sv_s, sv_t = [], []
    for s_p, (ts, seed) in sorted(svmc_ladders.items()):
        curve = np.array([
            _pause_success(anneal12, sched, s_p=s_p, t_p=float(t),
                           t_a=1000.0, temperature=12.0, reps=reps,
                           seed=seed + 10 * i)
            for i, t in enumerate(ts)
        ])
        assert curve[0] < target < curve[-1], "ladder must bracket the target"
        res = pause_time_to_target([s_p], ts, curve[None, :], target,
                                   unit="sweep")
        assert len(res.crossings) == 1 and not res.omitted
        sv_s.append(s_p)
        sv_t.append(res.crossings[0].t_star)
    assert np.all(np.diff(sv_t) > 0)
    sv_slope, sv_r2 = _loglinear(sv_s, sv_t)
    assert sv_r2 >= 0.95

    # the exponents themselves are recorded, not matched to each other
    acceptance_log(7, f"d log10 t*/d s_p: ame {ame_slope:.1f} "
                      f"(R2 {ame_r2:.3f}), svmc {sv_slope:.1f} "
                      f"(R2 {sv_r2:.3f})")


def test_criterion_08_perturbative_element_scaling(anneal12, acceptance_log):
    lam = np.geomspace(1e-3, 1e-1, 9)
    result = matrix_element_scaling(anneal12, lam)
    assert result.parity_ok
    assert result.dropped == ()

    ll = np.log(result.lambdas)
    lv = np.log(result.values)
    decade = float(np.polyfit(ll[:5], lv[:5], 1)[0])
    windows = [float(np.polyfit(ll[i:i + 3], lv[i:i + 3], 1)[0])
               for i in range(3)]
    assert max(abs(w - decade) for w in windows) <= 0.3
    assert abs(result.slope - decade) <= 0.3

    acceptance_log(8, f"lowest-decade slope {decade:.4f} -> integer "
                      f"{round(decade)}; full-grid slope {result.slope:.4f}")


def test_criterion_09_relaxation_fit_recovery(acceptance_log):
    # noiseless curves invert exactly
    rng = np.random.default_rng(42)
    t = np.geomspace(0.05, 50.0, 16)
    worst = 0.0
    for _ in range(100):
        alpha = rng.uniform(0.4, 1.0)
        beta = rng.uniform(0.05, alpha - 0.02)
        gamma = 10.0 ** rng.uniform(-2, 2)
        p = alpha - beta * np.exp(-gamma * t)
        fit = fit_decay(np.column_stack([t, p]))
        worst = max(worst,
                    abs(fit.alpha - alpha) / alpha,
                    abs(fit.beta - beta) / beta,
                    abs(fit.gamma - gamma) / gamma)
    assert worst < 1e-6

    # binomial counting noise: truth within three bootstrap deviations
    t_b = np.geomspace(1.0, 300.0, 14)
    truth = {"alpha": 0.95, "beta": 0.69, "gamma": 1.0 / 54.0}
    p_true = truth["alpha"] - truth["beta"] * np.exp(-truth["gamma"] * t_b)
    noisy = np.random.default_rng(7).binomial(10_000, p_true) / 10_000
    out = fit_decay_bootstrap(np.column_stack([t_b, noisy]), shots=10_000,
                              n_boot=500, seed=1)
    worst_pull = 0.0
    for key, val in truth.items():
        lo, hi = out["ci"][key]
        sigma = (hi - lo) / 3.92
        worst_pull = max(worst_pull,
                         abs(getattr(out["fit"], key) - val) / sigma)
    assert worst_pull <= 3.0

    # a two-scale curve leaves serially-correlated single-fit residuals
    t_two = np.geomspace(1.0, 2e4, 40)
    p_two = (0.92 - 0.30 * np.exp(-0.043 * t_two)
             - 0.25 * np.exp(-8.5e-4 * t_two))
    noisy_two = np.random.default_rng(3).binomial(10_000, p_two) / 10_000
    single = fit_decay(np.column_stack([t_two, noisy_two]))
    p_runs = runs_test(noisy_two - single.predict(t_two))
    assert p_runs < 0.05

    acceptance_log(9, f"noiseless worst rel err {worst:.1e}; bootstrap "
                      f"worst pull {worst_pull:.2f} sigma; two-scale "
                      f"runs-test p {p_runs:.1e}")


def test_criterion_10_colder_bath_ordering(anneal12, sched, scanner_cold,
                                           scanner_hot, acceptance_log):
    # master equation: cold curve dominates the hot one everywhere
    t_p = 100.0
    cold = np.array([scanner_cold.p0_with_pause(float(s), t_p)
                     for s in GRID_AME])
    hot = np.array([scanner_hot.p0_with_pause(float(s), t_p)
                    for s in GRID_AME])
    assert np.all(cold >= hot - 1e-6)
    ame_margin = float((cold - hot).min())

    # spin-vector dynamics reverses the ordering at late pause locations
    grid = np.array([0.42, 0.46, 0.50, 0.60, 0.70, 0.80])
    reps = 1000
    zs = []
    for i, s in enumerate(grid):
        p_cold = _pause_success(anneal12, sched, s_p=float(s), t_p=1.0e4,
                                t_a=1000.0, temperature=12.0, reps=reps,
                                seed=6200 + 10 * i)
        p_hot = _pause_success(anneal12, sched, s_p=float(s), t_p=1.0e4,
                               t_a=1000.0, temperature=40.0, reps=reps,
                               seed=6201 + 10 * i)
        pool = 0.5 * (p_cold + p_hot)
        se = math.sqrt(2.0 * pool * (1.0 - pool) / reps)
        zs.append((p_cold - p_hot) / se)
    zs = np.array(zs)
    assert zs.max() >= 3.0, "cold bath never wins"
    assert zs.min() <= -3.0, "ordering never reverses"

    s_cold = float(grid[int(np.argmax(zs))])
    s_hot = float(grid[int(np.argmin(zs))])
    acceptance_log(10, f"ame min cold-hot margin {ame_margin:+.3f}; svmc "
                       f"cold wins at s_p={s_cold} (z={zs.max():.1f}), "
                       f"hot wins at s_p={s_hot} (z={zs.min():.1f})")
