"""Planar-rotor Monte Carlo dynamics on the semiclassical anneal potential.

Each qubit is a rotor with angle theta_i in [0, pi] and the ensemble walks
the potential

    e(theta) = -A * sum_i sin(theta_i)
               + B * (sum_{i<j} J_ij cos(theta_i) cos(theta_j)
                      + sum_i h_i cos(theta_i))

under Metropolis updates, one attempt per rotor per sweep in fixed index
order. Sweeps are the unit of time; the anneal advances s linearly by one
grid step per sweep and a pause holds s fixed for extra sweeps. Two
proposal rules are supported: fresh angles uniform on [0, pi] (standard)
and moves restricted to a window of width pi * min(1, A/B) around the
current angle, reflected back into [0, pi] at the boundaries. The second
rule freezes the dynamics out as the transverse field shrinks.

Two interchangeable implementations are provided: a compiled kernel and a
plain-python mirror. Both draw two variates per update attempt (proposal,
acceptance) from the same Mersenne Twister stream, so equal seeds give
bit-identical samples, which the test suite asserts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .instance import IsingInstance, SpinConfig, all_config_energies, ising_energy
from .schedule import AnnealPlan, AnnealSchedule, eval_schedule
from .units import temperature_to_ghz

__all__ = [
    "RotorState",
    "SvmcParams",
    "AnnealSample",
    "SvmcBatch",
    "canonical_variant",
    "semiclassical_energy",
    "propose_angle",
    "sweep",
    "run_anneal",
    "run_many",
    "equilibrium_angles",
]

_PI = math.pi
_HALF_PI = math.pi / 2.0

_VARIANT_ALIASES = {
    "standard": "standard",
    "svmc": "standard",
    "restricted": "restricted",
    "transverse-field-restricted": "restricted",
    "svmc-tf": "restricted",
}


def canonical_variant(name: str) -> str:
    """Map accepted variant spellings to 'standard' or 'restricted'."""
    try:
        return _VARIANT_ALIASES[name.lower()]
    except KeyError:
        raise ValueError(
            f"unknown variant {name!r}; use one of {sorted(_VARIANT_ALIASES)}"
        ) from None


class DriftError(RuntimeError):
    """Incremental energy bookkeeping drifted past the guard threshold."""


@dataclass
class RotorState:
    """Angles of the n rotors, each in [0, pi]."""

    angles: np.ndarray

    def __post_init__(self):
        self.angles = np.array(self.angles, dtype=float)
        if self.angles.ndim != 1 or self.angles.size == 0:
            raise ValueError("angles must be a nonempty 1-d array")
        if np.any(self.angles < 0) or np.any(self.angles > _PI):
            raise ValueError("angles must lie in [0, pi]")

    @property
    def n(self) -> int:
        return self.angles.size

    @classmethod
    def initial(cls, n: int) -> "RotorState":
        """All rotors at pi/2, the driver-aligned start of the anneal."""
        return cls(np.full(n, _HALF_PI))

    @classmethod
    def from_config(cls, config: SpinConfig) -> "RotorState":
        """theta = 0 where sigma_z = +1 (bit 0), pi where -1 (bit 1)."""
        bits = np.array([config.bit(i) for i in range(config.n)], dtype=float)
        return cls(bits * _PI)

    def copy(self) -> "RotorState":
        return RotorState(self.angles.copy())

    def readout(self, rng) -> SpinConfig:
        """Project to bits: 0 below pi/2, 1 above, fair coin at exactly pi/2.

        Coin flips consume rng draws in qubit index order, one per
        undecided rotor.
        """
        bits = []
        for theta in self.angles:
            if theta < _HALF_PI:
                bits.append("0")
            elif theta > _HALF_PI:
                bits.append("1")
            else:
                bits.append("0" if rng.random() < 0.5 else "1")
        return SpinConfig("".join(reversed(bits)))


@dataclass(frozen=True)
class SvmcParams:
    """Variant, temperature, default sweep counts and the master seed."""

    variant: str = "standard"
    temperature: float = 12.0
    temperature_unit: str = "mK"
    sweeps_anneal: int = 10_000
    sweeps_pause: int = 0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variant", canonical_variant(self.variant))
        temperature_to_ghz(self.temperature, self.temperature_unit)
        if self.sweeps_anneal < 0 or self.sweeps_pause < 0:
            raise ValueError("sweep counts must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")

    @property
    def beta(self) -> float:
        """Inverse temperature in 1/GHz (energies are in GHz)."""
        return 1.0 / temperature_to_ghz(self.temperature, self.temperature_unit)

    def default_plan(self, s_p: float | None = None, t_p: float | None = None) -> AnnealPlan:
        return AnnealPlan(
            t_a=float(self.sweeps_anneal),
            s_p=s_p,
            t_p=float(self.sweeps_pause if t_p is None else t_p),
        )


def semiclassical_energy(state: RotorState, instance: IsingInstance,
                         A: float, B: float) -> float:
    """The rotor potential e(theta) in GHz at driver/problem weights A, B."""
    if state.n != instance.n:
        raise ValueError("state size does not match instance")
    c = np.cos(state.angles)
    s = np.sin(state.angles)
    J = instance.coupling_matrix()
    h = instance.field_vector()
    return float(-A * s.sum() + B * (0.5 * c @ J @ c + h @ c))


def _reflect(theta: float) -> float:
    while theta < 0.0 or theta > _PI:
        if theta < 0.0:
            theta = -theta
        else:
            theta = 2.0 * _PI - theta
    return theta


def proposal_window(A: float, B: float) -> float:
    """Half-width of the restricted proposal window, pi * min(1, A/B)."""
    if B <= 0.0:
        return _PI
    return _PI * min(1.0, A / B)


def propose_angle(variant: str, theta: float, A: float, B: float, rng) -> float:
    """One proposal draw. Standard: uniform on [0, pi]. Restricted: a step
    inside the +/- pi*min(1, A/B) window, reflected into [0, pi].

    Exactly one variate is consumed in every case (also when the window has
    collapsed to zero and the proposal is the current angle), keeping the
    stream layout identical across variants.
    """
    u = rng.random()
    if canonical_variant(variant) == "standard":
        return u * _PI
    w = proposal_window(A, B)
    if w <= 0.0:
        return theta
    return _reflect(theta + (2.0 * u - 1.0) * w)


def sweep(state: RotorState, instance: IsingInstance, A: float, B: float,
          beta: float, variant: str, rng) -> int:
    """One Metropolis pass over all rotors in index order, in place.

    Returns the number of accepted moves. The acceptance variate is drawn
    whether or not the move is downhill, matching the compiled kernel.
    """
    variant = canonical_variant(variant)
    restricted = variant == "restricted"
    J = instance.coupling_matrix()
    h = instance.field_vector()
    theta = state.angles
    c = np.cos(theta)
    sn = np.sin(theta)
    w = proposal_window(A, B)
    accepted = 0
    for i in range(instance.n):
        u = rng.random()
        if restricted:
            if w <= 0.0:
                new = theta[i]
            else:
                new = _reflect(theta[i] + (2.0 * u - 1.0) * w)
        else:
            new = u * _PI
        cn = math.cos(new)
        sn_new = math.sin(new)
        f = h[i]
        for j in range(instance.n):
            f += J[i, j] * c[j]
        dE = -A * (sn_new - sn[i]) + B * f * (cn - c[i])
        ua = rng.random()
        if dE <= 0.0 or ua < math.exp(-beta * dE):
            theta[i] = new
            c[i] = cn
            sn[i] = sn_new
            accepted += 1
    return accepted


# ---------------------------------------------------------------------------
# Compiled anneal kernel and its python mirror


@njit(cache=True, nogil=True)
def _mc_kernel(seed, a_arr, b_arr, w_arr, restricted, J, h, beta, theta,
               guard_every, traj_every, traj_out, bits_out):
    np.random.seed(seed)
    n = theta.shape[0]
    c = np.cos(theta)
    sn = np.sin(theta)
    x_sum = 0.0
    z_sum = 0.0
    for i in range(n):
        x_sum += sn[i]
        zi = h[i] * c[i]
        for j in range(i + 1, n):
            zi += J[i, j] * c[i] * c[j]
        z_sum += zi
    accepted = 0
    n_rec = 0
    pi = math.pi
    for t in range(a_arr.shape[0]):
        A = a_arr[t]
        B = b_arr[t]
        W = w_arr[t]
        for i in range(n):
            u = np.random.random()
            if restricted:
                if W <= 0.0:
                    new = theta[i]
                else:
                    new = theta[i] + (2.0 * u - 1.0) * W
                    while new < 0.0 or new > pi:
                        if new < 0.0:
                            new = -new
                        else:
                            new = 2.0 * pi - new
            else:
                new = u * pi
            cn = math.cos(new)
            sn_new = math.sin(new)
            f = h[i]
            for j in range(n):
                f += J[i, j] * c[j]
            dE = -A * (sn_new - sn[i]) + B * f * (cn - c[i])
            ua = np.random.random()
            if dE <= 0.0 or ua < math.exp(-beta * dE):
                theta[i] = new
                x_sum += sn_new - sn[i]
                z_sum += f * (cn - c[i])
                c[i] = cn
                sn[i] = sn_new
                accepted += 1
        if guard_every > 0 and (t + 1) % guard_every == 0:
            x_chk = 0.0
            z_chk = 0.0
            for i in range(n):
                x_chk += sn[i]
                zi = h[i] * c[i]
                for j in range(i + 1, n):
                    zi += J[i, j] * c[i] * c[j]
                z_chk += zi
            if abs(-A * (x_chk - x_sum) + B * (z_chk - z_sum)) > 1e-8:
                return -1, accepted
            x_sum = x_chk
            z_sum = z_chk
        if traj_every > 0 and (t + 1) % traj_every == 0 and n_rec < traj_out.shape[0]:
            for i in range(n):
                traj_out[n_rec, i] = theta[i]
            n_rec += 1
    for i in range(n):
        if theta[i] < 0.5 * pi:
            bits_out[i] = 0
        elif theta[i] > 0.5 * pi:
            bits_out[i] = 1
        else:
            bits_out[i] = 0 if np.random.random() < 0.5 else 1
    return 0, accepted


def _mc_python(seed, a_arr, b_arr, w_arr, restricted, J, h, beta, theta,
               guard_every, traj_every, traj_out, bits_out):
    """Line-for-line mirror of _mc_kernel on numpy's legacy generator.

    Exists to pin the kernel's semantics: the test suite checks both paths
    produce identical bits, angles and acceptance counts for equal seeds.
    """
    rs = np.random.RandomState(seed)
    draw = rs.random_sample
    n = theta.shape[0]
    c = np.cos(theta)
    sn = np.sin(theta)
    x_sum = float(sn.sum())
    z_sum = 0.0
    for i in range(n):
        zi = h[i] * c[i]
        for j in range(i + 1, n):
            zi += J[i, j] * c[i] * c[j]
        z_sum += zi
    accepted = 0
    n_rec = 0
    pi = math.pi
    for t in range(a_arr.shape[0]):
        A = a_arr[t]
        B = b_arr[t]
        W = w_arr[t]
        for i in range(n):
            u = draw()
            if restricted:
                if W <= 0.0:
                    new = theta[i]
                else:
                    new = theta[i] + (2.0 * u - 1.0) * W
                    while new < 0.0 or new > pi:
                        if new < 0.0:
                            new = -new
                        else:
                            new = 2.0 * pi - new
            else:
                new = u * pi
            cn = math.cos(new)
            sn_new = math.sin(new)
            f = h[i]
            for j in range(n):
                f += J[i, j] * c[j]
            dE = -A * (sn_new - sn[i]) + B * f * (cn - c[i])
            ua = draw()
            if dE <= 0.0 or ua < math.exp(-beta * dE):
                theta[i] = new
                x_sum += sn_new - sn[i]
                z_sum += f * (cn - c[i])
                c[i] = cn
                sn[i] = sn_new
                accepted += 1
        if guard_every > 0 and (t + 1) % guard_every == 0:
            x_chk = float(np.sin(theta).sum())
            z_chk = 0.0
            for i in range(n):
                zi = h[i] * c[i]
                for j in range(i + 1, n):
                    zi += J[i, j] * c[i] * c[j]
                z_chk += zi
            if abs(-A * (x_chk - x_sum) + B * (z_chk - z_sum)) > 1e-8:
                return -1, accepted
            x_sum = x_chk
            z_sum = z_chk
        if traj_every > 0 and (t + 1) % traj_every == 0 and n_rec < traj_out.shape[0]:
            traj_out[n_rec] = theta
            n_rec += 1
    for i in range(n):
        if theta[i] < 0.5 * pi:
            bits_out[i] = 0
        elif theta[i] > 0.5 * pi:
            bits_out[i] = 1
        else:
            bits_out[i] = 0 if draw() < 0.5 else 1
    return 0, accepted


def _sweep_arrays(schedule: AnnealSchedule, plan: AnnealPlan):
    """Per-sweep (s, A, B, window) arrays with pause sweeps spliced in.

    The ramp visits t_a points linearly from 0 to 1; pause sweeps run at
    exactly s_p and are inserted before the first ramp sweep with s >= s_p.
    """
    t_a = int(plan.t_a)
    t_p = int(plan.t_p)
    if t_a != plan.t_a or t_p != plan.t_p:
        raise ValueError("sweep counts must be whole numbers")
    if t_a == 0:
        ramp = np.empty(0)
    elif t_a == 1:
        ramp = np.array([1.0])
    else:
        ramp = np.arange(t_a) / (t_a - 1.0)
    if plan.has_pause:
        cut = int(np.searchsorted(ramp, plan.s_p, side="left"))
        svals = np.concatenate([ramp[:cut], np.full(t_p, plan.s_p), ramp[cut:]])
    else:
        svals = ramp
    if svals.size:
        A, B = eval_schedule(schedule, svals)
    else:
        A = B = np.empty(0)
    with np.errstate(divide="ignore"):
        ratio = np.where(B > 0, A / np.where(B > 0, B, 1.0), np.inf)
    window = _PI * np.minimum(1.0, ratio)
    return svals, np.asarray(A, dtype=float), np.asarray(B, dtype=float), window


@dataclass(eq=False)
class AnnealSample:
    """Readout of one anneal: the sampled config and bookkeeping."""

    config: SpinConfig
    energy: float               # classical Ising energy (dimensionless units)
    accepted: int
    final_angles: RotorState
    seed: int
    trajectory: np.ndarray | None = None


def run_anneal(instance: IsingInstance, schedule: AnnealSchedule,
               plan: AnnealPlan, params: SvmcParams,
               initial: RotorState | None = None, record_every: int = 0,
               guard_every: int = 1000, seed: int | None = None,
               compiled: bool = True) -> AnnealSample:
    """One seeded anneal in sweeps; returns the sampled configuration.

    plan.t_a and plan.t_p are integer sweep counts. The rotor ensemble
    starts at pi/2 everywhere unless an initial state is given. With
    record_every > 0 the angles after every record_every-th sweep are
    returned as a trajectory.
    """
    if initial is None:
        initial = RotorState.initial(instance.n)
    if initial.n != instance.n:
        raise ValueError("initial state size does not match instance")
    theta = initial.angles.copy()
    svals, a_arr, b_arr, w_arr = _sweep_arrays(schedule, plan)
    J = instance.coupling_matrix()
    h = instance.field_vector()
    n_rec = svals.size // record_every if record_every > 0 else 0
    traj = np.zeros((n_rec, instance.n))
    bits = np.zeros(instance.n, dtype=np.uint8)
    use_seed = params.seed if seed is None else seed
    runner = _mc_kernel if compiled else _mc_python
    status, accepted = runner(
        int(use_seed) & 0xFFFFFFFF, a_arr, b_arr, w_arr,
        params.variant == "restricted", J, h, params.beta, theta,
        guard_every, record_every, traj, bits)
    if status != 0:
        raise DriftError("incremental energy drifted beyond 1e-8 GHz")
    label = "".join(str(int(b)) for b in bits[::-1])
    config = SpinConfig(label)
    return AnnealSample(
        config=config,
        energy=ising_energy(instance, config),
        accepted=int(accepted),
        final_angles=RotorState(theta),
        seed=int(use_seed),
        trajectory=traj if record_every > 0 else None,
    )


@dataclass(eq=False)
class SvmcBatch:
    """Repetition batch: per-repetition samples plus success statistics."""

    instance: IsingInstance
    plan: AnnealPlan
    params: SvmcParams
    seeds: np.ndarray
    values: np.ndarray          # sampled configs as integers
    energies: np.ndarray
    is_ground: np.ndarray
    ground_energy: float

    @property
    def repetitions(self) -> int:
        return self.values.size

    @property
    def successes(self) -> int:
        return int(self.is_ground.sum())

    @property
    def success_prob(self) -> float:
        return self.successes / self.repetitions

    @property
    def error_2sigma(self) -> float:
        """Two-sigma binomial error bar on the success probability."""
        p = self.success_prob
        return 2.0 * math.sqrt(p * (1.0 - p) / self.repetitions)

    def csv_rows(self):
        """Rows `seed,rep,bitstring,ising_energy,is_ground`."""
        n = self.instance.n
        for r in range(self.repetitions):
            label = format(int(self.values[r]), f"0{n}b")
            yield (f"{int(self.seeds[r])},{r},{label},"
                   f"{self.energies[r]:.12f},{int(self.is_ground[r])}")

    def summary(self) -> dict:
        return {
            "repetitions": self.repetitions,
            "successes": self.successes,
            "success_prob": self.success_prob,
            "error_2sigma": self.error_2sigma,
            "variant": self.params.variant,
            "temperature": self.params.temperature,
            "temperature_unit": self.params.temperature_unit,
            "sweeps_anneal": int(self.plan.t_a),
            "s_p": self.plan.s_p,
            "sweeps_pause": int(self.plan.t_p),
            "seed": self.params.seed,
        }


def derived_seeds(master_seed: int, repetitions: int) -> np.ndarray:
    """Stable per-repetition 32-bit seeds derived from the master seed."""
    return np.random.SeedSequence(master_seed).generate_state(repetitions)


def run_many(instance: IsingInstance, schedule: AnnealSchedule,
             plan: AnnealPlan, params: SvmcParams, repetitions: int,
             guard_every: int = 1000) -> SvmcBatch:
    """Independent repetitions with derived seeds, aggregated by counts."""
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    svals, a_arr, b_arr, w_arr = _sweep_arrays(schedule, plan)
    J = instance.coupling_matrix()
    h = instance.field_vector()
    restricted = params.variant == "restricted"
    beta = params.beta
    seeds = derived_seeds(params.seed, repetitions)
    ground = float(all_config_energies(instance).min())
    n = instance.n
    values = np.zeros(repetitions, dtype=np.int64)
    energies = np.zeros(repetitions)
    traj = np.zeros((0, n))
    bits = np.zeros(n, dtype=np.uint8)
    weights = 1 << np.arange(n, dtype=np.int64)
    for r in range(repetitions):
        theta = np.full(n, _HALF_PI)
        status, _ = _mc_kernel(int(seeds[r]), a_arr, b_arr, w_arr, restricted,
                               J, h, beta, theta, guard_every, 0, traj, bits)
        if status != 0:
            raise DriftError(
                f"incremental energy drifted beyond 1e-8 GHz (rep {r})")
        values[r] = int(bits.astype(np.int64) @ weights)
        energies[r] = ising_energy(instance, SpinConfig.from_int(int(values[r]), n))
    is_ground = np.abs(energies - ground) < 1e-9
    return SvmcBatch(
        instance=instance,
        plan=plan,
        params=params,
        seeds=seeds,
        values=values,
        energies=energies,
        is_ground=is_ground,
        ground_energy=ground,
    )


def equilibrium_angles(instance: IsingInstance, A: float, B: float,
                       params: SvmcParams, sweeps: int, burn_in: int = 0,
                       record_every: int = 1) -> np.ndarray:
    """Angle samples from a fixed-(A, B) chain, one row per record.

    Used to compare the stationary ensemble against quadrature of the
    Boltzmann density on small systems.
    """
    if burn_in >= sweeps:
        raise ValueError("burn_in must be smaller than sweeps")
    n = instance.n
    a_arr = np.full(sweeps, float(A))
    b_arr = np.full(sweeps, float(B))
    w_arr = np.full(sweeps, proposal_window(A, B))
    J = instance.coupling_matrix()
    h = instance.field_vector()
    theta = np.full(n, _HALF_PI)
    n_rec = sweeps // record_every
    traj = np.zeros((n_rec, n))
    bits = np.zeros(n, dtype=np.uint8)
    status, _ = _mc_kernel(int(params.seed) & 0xFFFFFFFF, a_arr, b_arr, w_arr,
                           params.variant == "restricted", J, h, params.beta,
                           theta, 0, record_every, traj, bits)
    if status != 0:
        raise DriftError("incremental energy drifted beyond 1e-8 GHz")
    skip = burn_in // record_every
    return traj[skip:]
