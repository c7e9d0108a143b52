"""Mid-anneal pause scan with seeded spin-vector Monte Carlo.

The transverse-field-restricted update rule reproduces the pause
phenomenology of the master equation: a resurgence peak just past the
minimum gap that grows and drifts later with longer pauses. A standard
unrestricted chain instead keeps equilibrating at any pause location, so
a late pause helps it and not the restricted chain. Runs in about two
minutes at the default repetition count.
"""

import numpy as np

from pauselab.instance import bundled_instance
from pauselab.schedule import AnnealPlan, synthetic_schedule
from pauselab.svmc_engine import SvmcParams, run_many

instance = bundled_instance("I12_0")
sched = synthetic_schedule()
reps = 400
t_a = 1000.0


def success(variant, temperature, s_p, t_p, seed):
    params = SvmcParams(temperature=temperature, seed=seed, variant=variant)
    plan = AnnealPlan(t_a=t_a, s_p=s_p, t_p=t_p) if t_p else AnnealPlan(t_a=t_a)
    batch = run_many(instance, sched, plan, params, reps)
    return batch.success_prob, batch.error_2sigma


base, err = success("transverse-field-restricted", 12.0, None, 0.0, 101)
print(f"restricted chain, {t_a:g} sweeps, 12 mK, {reps} repetitions")
print(f"no pause: P0 = {base:.3f} +/- {err:.3f}")

print("\npause scan at t_p = 10000 sweeps:")
print("  s_p    P0      2 sigma")
for i, s_p in enumerate([0.38, 0.42, 0.46, 0.50, 0.58, 0.66]):
    p, e = success("transverse-field-restricted", 12.0, s_p, 1.0e4, 201 + i)
    marker = "  <- resurgence peak region" if 0.40 < s_p < 0.48 else ""
    print(f"  {s_p:.2f}  {p:.3f}  {e:.3f}{marker}")

print("\nsame pause, colder against hotter bath (restricted chain):")
print("  s_p    12 mK   40 mK")
for i, s_p in enumerate([0.42, 0.50, 0.80]):
    p_cold, _ = success("transverse-field-restricted", 12.0, s_p, 1.0e4,
                        301 + i)
    p_hot, _ = success("transverse-field-restricted", 40.0, s_p, 1.0e4,
                       401 + i)
    print(f"  {s_p:.2f}  {p_cold:.3f}   {p_hot:.3f}")
print("(the ordering reverses past the gap window: a hotter chain keeps")
print(" hopping between basins while the cold restricted one freezes)")

print("\nlate pause at s_p = 0.80, 40 mK, standard against restricted:")
p_std, e_std = success("standard", 40.0, 0.80, 1.0e4, 501)
p_tf, e_tf = success("transverse-field-restricted", 40.0, 0.80, 1.0e4, 502)
print(f"  standard   P0 = {p_std:.3f} +/- {e_std:.3f}")
print(f"  restricted P0 = {p_tf:.3f} +/- {e_tf:.3f}")
