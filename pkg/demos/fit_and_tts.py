"""From a pause-duration curve to a time-to-solution verdict.

A pause of duration t_p relaxes the ground-state probability along
P0(t_p) = alpha - beta exp(-gamma t_p). Fitting that curve gives the
relaxation rate; whether the pause actually pays off in wall-clock
time-to-solution depends on how that rate compares with a closed-form
threshold. This script walks the full chain on synthetic counting data:
simulate, fit, bootstrap, decide.
"""

import numpy as np

from pauselab.analysis import (fit_decay, fit_decay_bootstrap, make_tts_report,
                               p0_model, tts, tts_condition)

rng = np.random.default_rng(20)
alpha, beta, gamma = 0.95, 0.69, 1.0 / 54.0   # rate in 1/us
t_a = 50.0
shots = 10_000

t_p = np.concatenate([[0.0], np.geomspace(2.0, 400.0, 13)])
p_true = p0_model(alpha, alpha - beta, gamma, t_p)
observed = rng.binomial(shots, p_true) / shots

fit = fit_decay(np.column_stack([t_p, observed]))
print("single-exponential fit of the simulated pause curve:")
print(f"  alpha = {fit.alpha:.4f} (true {alpha})")
print(f"  beta  = {fit.beta:.4f} (true {beta})")
print(f"  gamma = {fit.gamma:.5f} 1/us (true {gamma:.5f})")
print(f"  residual rms {fit.residual:.2e}")

boot = fit_decay_bootstrap(np.column_stack([t_p, observed]), shots=shots,
                           n_boot=400, seed=1)
lo, hi = boot["ci"]["gamma"]
print(f"  bootstrap 95% interval for gamma: [{lo:.5f}, {hi:.5f}]")

gamma_min = tts_condition(fit.p_g, fit.p_a, t_a)
print(f"\nfor a {t_a:g} us anneal a pause pays off only if gamma exceeds "
      f"{gamma_min:.5f} 1/us")
print(f"fitted gamma {'exceeds' if fit.gamma > gamma_min else 'misses'} it")

report = make_tts_report(fit.p_g, fit.p_a, fit.gamma, t_a)
print(f"\nverdict: pausing {report.verdict.replace('-', ' ')} time to solution")
print(f"  no pause: tts = {tts(fit.p_a, t_a):.2f} us")
if report.t_p_optimal > 0:
    print(f"  best pause t_p = {report.t_p_optimal:.1f} us, "
          f"tts = {report.tts_at(report.t_p_optimal):.2f} us")

print("\nthe same curve under a fast 1 us anneal (a higher rate bar):")
fast = make_tts_report(fit.p_g, fit.p_a, fit.gamma, 1.0)
print(f"  required gamma {fast.gamma_min_required:.4f} 1/us; verdict: "
      f"pausing {fast.verdict.replace('-', ' ')} time to solution")
