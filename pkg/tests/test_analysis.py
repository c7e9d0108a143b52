import numpy as np
import pytest

from pauselab.analysis import (DecayFit, FitError, TwoScaleFit, fit_decay,
                               fit_decay_bootstrap, make_tts_report,
                               optimal_pause, p0_model, pause_time_to_target,
                               runs_test, tts, tts_condition)


def test_p0_model_frozen_value():
    # 0.95 - 0.26/e, fixed by hand before the code existed
    assert p0_model(0.95, 0.69, 1.0 / 54.0, 54.0) == pytest.approx(
        0.854351345295425, abs=1e-12)


def test_p0_model_limits():
    assert p0_model(0.9, 0.4, 2.0, 0.0) == pytest.approx(0.4)
    assert p0_model(0.9, 0.4, 2.0, 1e6) == pytest.approx(0.9)
    arr = p0_model(0.9, 0.4, 2.0, np.array([0.0, 1e6]))
    assert arr == pytest.approx([0.4, 0.9])


def test_tts_frozen_values():
    assert tts(0.5, 1.0, 0.0) == pytest.approx(6.643856189774724, abs=1e-12)
    # halving per-run failure odds scales the run count logarithmically
    assert tts(0.99, 1.0) == pytest.approx(1.0, abs=1e-9)


def test_tts_rejects_degenerate_probability():
    with pytest.raises(ValueError):
        tts(0.0, 1.0)
    with pytest.raises(ValueError):
        tts(1.0, 1.0)


def test_tts_condition_reference_rows():
    assert 1.0 / tts_condition(0.95, 0.69, 1.0) == pytest.approx(
        0.7161218107379456, abs=1e-12)
    assert 1.0 / tts_condition(0.73, 0.35, 1e4) == pytest.approx(
        13570.997427621176, abs=1e-6)


def test_optimal_pause_matches_slope_root():
    p_g, p_a, gamma, t_a = 0.95, 0.69, 10.0, 1.0
    t_star = optimal_pause(p_g, p_a, gamma, t_a)
    assert t_star > 0
    # at the optimum the TTS derivative vanishes: check by finite difference
    eps = 1e-6
    lo = tts(p0_model(p_g, p_a, gamma, t_star - eps), t_a, t_star - eps)
    hi = tts(p0_model(p_g, p_a, gamma, t_star + eps), t_a, t_star + eps)
    mid = tts(p0_model(p_g, p_a, gamma, t_star), t_a, t_star)
    assert mid <= lo + 1e-12
    assert mid <= hi + 1e-12


def test_optimal_pause_zero_when_rate_too_small():
    gamma_min = tts_condition(0.95, 0.69, 1.0)
    assert optimal_pause(0.95, 0.69, 0.5 * gamma_min, 1.0) == 0.0


def test_fit_decay_noiseless_left_inverse():
    rng = np.random.default_rng(42)
    t = np.geomspace(0.05, 50.0, 16)
    for _ in range(100):
        alpha = rng.uniform(0.4, 1.0)
        beta = rng.uniform(0.05, alpha - 0.02)
        gamma = 10.0 ** rng.uniform(-2, 2)
        p = alpha - beta * np.exp(-gamma * t)
        fit = fit_decay(np.column_stack([t, p]))
        assert fit.alpha == pytest.approx(alpha, rel=1e-6)
        assert fit.beta == pytest.approx(beta, rel=1e-6)
        assert fit.gamma == pytest.approx(gamma, rel=1e-6)


def test_fit_decay_units_tagged():
    t = np.geomspace(1, 1e4, 8)
    p = 0.7 - 0.3 * np.exp(-t / 500.0)
    fit = fit_decay(np.column_stack([t, p]), unit="sweep")
    assert fit.unit == "sweep"
    assert fit.to_dict()["rate_unit"] == "1/sweep"
    with pytest.raises(ValueError):
        fit_decay(np.column_stack([t, p]), unit="minutes")


def test_fit_decay_needs_enough_points():
    t = np.array([1.0, 2.0, 3.0])
    p = 0.5 - 0.2 * np.exp(-t)
    with pytest.raises(ValueError):
        fit_decay(np.column_stack([t, p]))


def test_fixed_alpha_mode_pins_plateau():
    # the leading point is the no-pause anneal, so beta pins exactly
    t = np.concatenate([[0.0], np.geomspace(0.1, 100.0, 12)])
    p = 0.9 - 0.5 * np.exp(-0.8 * t)
    fit = fit_decay(np.column_stack([t, p]), mode="fixed-alpha")
    assert fit.fixed_alpha
    # plateau mean equals alpha to the precision the tail sets
    assert fit.alpha == pytest.approx(0.9, abs=1e-6)
    assert fit.gamma == pytest.approx(0.8, rel=1e-3)


def test_two_scale_recovers_both_rates():
    t = np.geomspace(1.0, 2e4, 24)
    p = 0.92 - 0.3 * np.exp(-0.043 * t) - 0.25 * np.exp(-8.5e-4 * t)
    fit = fit_decay(np.column_stack([t, p]), mode="two-scale")
    assert isinstance(fit, TwoScaleFit)
    assert fit.gamma1 == pytest.approx(0.043, rel=1e-4)
    assert fit.gamma2 == pytest.approx(8.5e-4, rel=1e-4)
    assert fit.gamma1 > fit.gamma2


def test_single_scale_fit_of_two_scale_data_shows_structure():
    rng = np.random.default_rng(3)
    t = np.geomspace(1.0, 2e4, 40)
    p = 0.92 - 0.3 * np.exp(-0.043 * t) - 0.25 * np.exp(-8.5e-4 * t)
    shots = 10_000
    noisy = rng.binomial(shots, p) / shots
    single = fit_decay(np.column_stack([t, noisy]))
    assert runs_test(noisy - single.predict(t)) < 0.05


def test_runs_test_on_plain_noise_is_calibrated():
    rng = np.random.default_rng(11)
    pvals = [runs_test(rng.normal(size=60)) for _ in range(200)]
    # should reject about 5% of the time, not wildly more
    assert np.mean(np.array(pvals) < 0.05) < 0.12


def test_bootstrap_brackets_truth():
    rng = np.random.default_rng(5)
    t = np.geomspace(0.1, 60.0, 14)
    truth = dict(alpha=0.88, beta=0.42, gamma=0.25)
    p = truth["alpha"] - truth["beta"] * np.exp(-truth["gamma"] * t)
    shots = 10_000
    noisy = rng.binomial(shots, p) / shots
    out = fit_decay_bootstrap(np.column_stack([t, noisy]), shots=shots,
                              n_boot=300, seed=9)
    for key, val in truth.items():
        lo, hi = out["ci"][key]
        width = hi - lo
        assert lo - 1.5 * width < val < hi + 1.5 * width


def test_pause_time_to_target_interpolation_identity():
    gammas = {0.44: 0.9, 0.47: 0.2, 0.50: 0.05}
    s_values = np.array(sorted(gammas))
    t_values = np.geomspace(0.1, 400.0, 300)
    p = np.array([[p0_model(0.95, 0.3, gammas[s], t) for t in t_values]
                  for s in s_values])
    res = pause_time_to_target(s_values, t_values, p, target=0.9)
    assert not res.omitted
    for crossing in res.crossings:
        exact = -np.log((0.95 - 0.9) / (0.95 - 0.3)) / gammas[crossing.s_p]
        assert crossing.t_star == pytest.approx(exact, rel=2e-3)
        assert crossing.monotone


def test_pause_time_to_target_omits_unreachable():
    s_values = [0.4, 0.6]
    t_values = [1.0, 10.0, 100.0]
    p = np.array([[0.2, 0.5, 0.8], [0.1, 0.15, 0.2]])
    res = pause_time_to_target(s_values, t_values, p, target=0.7)
    assert len(res.crossings) == 1
    assert res.crossings[0].s_p == 0.4
    assert len(res.omitted) == 1
    assert res.omitted[0][0] == 0.6


def test_pause_time_to_target_median_window():
    s_values = [0.5]
    t_values = np.linspace(1, 9, 9)
    p = np.array([[0.1, 0.3, 0.499, 0.5, 0.501, 0.7, 0.8, 0.9, 0.95]])
    res = pause_time_to_target(s_values, t_values, p, target=0.5,
                               mode="median-window", window=0.01)
    assert res.crossings[0].t_star == pytest.approx(4.0)
    assert res.crossings[0].lo <= 4.0 <= res.crossings[0].hi


def test_tts_report_reduces_with_fast_rate():
    report = make_tts_report(0.95, 0.69, 10.0, 1.0)
    assert report.verdict == "reduces"
    assert report.t_p_optimal > 0
    assert report.tts_at(report.t_p_optimal) < report.tts_at(0.0)


def test_tts_report_table_one_rows_do_not_reduce():
    # measured relaxation far slower than the break-even rate
    ame = make_tts_report(0.95, 0.69, 1.0 / 54.0, 1.0)
    assert ame.verdict == "does-not-reduce"
    assert ame.t_p_optimal == 0.0
    svmc = make_tts_report(0.73, 0.35, 1.0 / 21000.0, 1e4, unit="sweep")
    assert svmc.verdict == "does-not-reduce"


def test_tts_report_refuses_unit_mix():
    with pytest.raises(ValueError):
        make_tts_report(0.9, 0.4, 0.5, 1.0, unit="us", fit_unit="sweep")


def test_decay_fit_predict_round_trip():
    fit = DecayFit(alpha=0.8, beta=0.3, gamma=0.5, residual=0.0)
    t = np.array([0.0, 1.0, 10.0])
    assert fit.predict(t) == pytest.approx(0.8 - 0.3 * np.exp(-0.5 * t))
    assert fit.p_g == 0.8
    assert fit.p_a == pytest.approx(0.5)
