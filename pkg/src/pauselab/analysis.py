"""Relaxation-curve fits, pause-time-to-target extraction, and the
time-to-solution metric for paused anneals.

Ground-state probability after a pause of length t_p at a good pause point
follows P0(t_p) = P_G - (P_G - P_a) * exp(-gamma * t_p): P_a is the
no-pause value, P_G the thermal plateau, gamma the relaxation rate. The
time to reach the ground state with 99% confidence by repeated runs is
TTS(t_p) = ln(0.01) / ln(1 - P0(t_p)) * (t_a + t_p); pausing lowers TTS
only when gamma clears a closed-form threshold.

All rates and times carry a unit tag ('us' or 'sweep'); mixing units in
one report is an error rather than a silent conversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, least_squares

__all__ = [
    "TIME_UNITS",
    "DecayFit",
    "TwoScaleFit",
    "TargetCrossing",
    "PauseTargetResult",
    "TtsReport",
    "FitError",
    "p0_model",
    "fit_decay",
    "fit_decay_bootstrap",
    "runs_test",
    "pause_time_to_target",
    "tts",
    "tts_condition",
    "optimal_pause",
    "make_tts_report",
]

TIME_UNITS = ("us", "sweep")


class FitError(RuntimeError):
    """A fit failed to converge or produced out-of-domain parameters."""


def _check_unit(unit: str) -> str:
    if unit not in TIME_UNITS:
        raise ValueError(f"unknown time unit {unit!r}; expected one of {TIME_UNITS}")
    return unit


def p0_model(p_g: float, p_a: float, gamma: float, t_p) -> float | np.ndarray:
    """P0(t_p) = P_G - (P_G - P_a) exp(-gamma t_p)."""
    if not 0.0 <= p_a <= p_g <= 1.0:
        raise ValueError("need 0 <= P_a <= P_G <= 1")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    out = p_g - (p_g - p_a) * np.exp(-gamma * np.asarray(t_p, dtype=float))
    return float(out) if np.ndim(t_p) == 0 else out


@dataclass(frozen=True)
class DecayFit:
    """Single-exponential relaxation fit P0(t) = alpha - beta exp(-gamma t)."""

    alpha: float
    beta: float
    gamma: float
    residual: float
    unit: str = "us"
    at_bound: bool = False
    fixed_alpha: bool = False

    def __post_init__(self):
        _check_unit(self.unit)

    @property
    def p_g(self) -> float:
        return self.alpha

    @property
    def p_a(self) -> float:
        return self.alpha - self.beta

    def predict(self, t):
        out = self.alpha - self.beta * np.exp(-self.gamma * np.asarray(t, dtype=float))
        return float(out) if np.ndim(t) == 0 else out

    def to_dict(self) -> dict:
        return {"model": "single", "alpha": self.alpha, "beta": self.beta,
                "gamma": self.gamma, "residual_rms": self.residual,
                "rate_unit": f"1/{self.unit}", "at_bound": self.at_bound,
                "fixed_alpha": self.fixed_alpha}


@dataclass(frozen=True)
class TwoScaleFit:
    """Two-exponential fit with ordered rates gamma1 > gamma2."""

    alpha: float
    beta1: float
    gamma1: float
    beta2: float
    gamma2: float
    residual: float
    unit: str = "us"
    at_bound: bool = False

    def __post_init__(self):
        _check_unit(self.unit)

    @property
    def p_a(self) -> float:
        return self.alpha - self.beta1 - self.beta2

    def predict(self, t):
        t = np.asarray(t, dtype=float)
        out = (self.alpha - self.beta1 * np.exp(-self.gamma1 * t)
               - self.beta2 * np.exp(-self.gamma2 * t))
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {"model": "two-scale", "alpha": self.alpha,
                "beta1": self.beta1, "gamma1": self.gamma1,
                "beta2": self.beta2, "gamma2": self.gamma2,
                "residual_rms": self.residual, "rate_unit": f"1/{self.unit}",
                "at_bound": self.at_bound}


def _as_points(points):
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("points must be a sequence of (t_p, P0) pairs")
    t, p = arr[:, 0], arr[:, 1]
    if np.any(t < 0):
        raise ValueError("t_p values must be nonnegative")
    if np.unique(t).size != t.size:
        raise ValueError("t_p values must be distinct")
    order = np.argsort(t)
    return t[order], p[order]


def _rms(x) -> float:
    return float(np.sqrt(np.mean(np.square(x))))


def _gamma_grid(t: np.ndarray, points_per_decade: int = 6) -> np.ndarray:
    t_pos = t[t > 0]
    lo = 0.01 / t_pos.max()
    hi = 10.0 / t_pos.min()
    n = max(8, int(math.ceil(math.log10(hi / lo) * points_per_decade)))
    return np.geomspace(lo, hi, n)


def _linear_coeffs(t, p, gammas):
    """Least-squares (alpha, beta_k) for fixed decay rates; returns rss too."""
    cols = [np.ones_like(t)] + [-np.exp(-g * t) for g in gammas]
    design = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(design, p, rcond=None)
    rss = float(np.sum((design @ coef - p) ** 2))
    return coef, rss


def fit_decay(points, mode: str = "single", unit: str = "us"):
    """Fit the relaxation curve by multi-start nonlinear least squares.

    mode 'single' fits (alpha, beta, gamma); 'fixed-alpha' pins alpha to
    the mean of the largest-t_p plateau (points with t_p within a factor of
    3 of the maximum) and beta to alpha - P0 at the smallest t_p, leaving
    only gamma free; 'two-scale' fits a second decay channel with rates
    reported fast-first. Starting rates scan log-spaced decades implied by
    the time span, the best start is polished by bounded least squares.
    """
    _check_unit(unit)
    t, p = _as_points(points)
    if mode in ("single", "fixed-alpha") and t.size < 4:
        raise ValueError("need at least 4 points")
    if mode == "two-scale" and t.size < 6:
        raise ValueError("need at least 6 points for two scales")
    grid = _gamma_grid(t)
    tiny = 1e-12

    if mode == "single":
        best = None
        for g0 in grid:
            coef, rss = _linear_coeffs(t, p, [g0])
            if best is None or rss < best[1]:
                best = ((coef[0], coef[1], g0), rss)
        (a0, b0, g0), _ = best
        x0 = np.array([min(max(a0, 0.0), 1.0),
                       min(max(b0, tiny), 1.0), g0])

        def resid(x):
            return x[0] - x[1] * np.exp(-x[2] * t) - p

        sol = least_squares(resid, x0, bounds=([0.0, 0.0, tiny], [1.0, 1.0, np.inf]),
                            xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if not sol.success:
            raise FitError(f"single-exponential fit did not converge: {sol.message}")
        a, b, g = sol.x
        at_bound = bool(np.any(np.isclose(sol.x[:2], 0.0))
                        or np.isclose(a, 1.0) or np.isclose(b, 1.0)
                        or a - b < -1e-9)
        return DecayFit(alpha=float(a), beta=float(b), gamma=float(g),
                        residual=_rms(sol.fun), unit=unit, at_bound=at_bound)

    if mode == "fixed-alpha":
        plateau = t >= t.max() / 3.0
        alpha = float(p[plateau].mean())
        beta = alpha - float(p[np.argmin(t)])
        if beta <= 0:
            raise FitError("fixed-alpha mode needs a rising curve "
                           "(plateau above the earliest point)")

        def resid(x):
            return alpha - beta * np.exp(-x[0] * t) - p

        best = None
        for g0 in grid:
            sol = least_squares(resid, np.array([g0]), bounds=([tiny], [np.inf]),
                                xtol=1e-15, ftol=1e-15, gtol=1e-15)
            if sol.success and (best is None or sol.cost < best.cost):
                best = sol
        if best is None:
            raise FitError("fixed-alpha fit did not converge")
        return DecayFit(alpha=alpha, beta=beta, gamma=float(best.x[0]),
                        residual=_rms(best.fun), unit=unit, fixed_alpha=True)

    if mode == "two-scale":
        best = None
        for i, g1 in enumerate(grid):
            for g2 in grid[:i]:
                if g1 / g2 < 3.0:
                    continue
                coef, rss = _linear_coeffs(t, p, [g1, g2])
                if best is None or rss < best[1]:
                    best = ((coef[0], coef[1], coef[2], g1, g2), rss)
        (a0, b10, b20, g10, g20), _ = best
        x0 = np.array([min(max(a0, 0.0), 1.0),
                       min(max(b10, tiny), 1.0), g10,
                       min(max(b20, tiny), 1.0), g20])

        def resid(x):
            return (x[0] - x[1] * np.exp(-x[2] * t)
                    - x[3] * np.exp(-x[4] * t) - p)

        sol = least_squares(resid, x0, bounds=([0.0, 0.0, tiny, 0.0, tiny],
                                               [1.0, 1.0, np.inf, 1.0, np.inf]),
                            xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if not sol.success:
            raise FitError(f"two-scale fit did not converge: {sol.message}")
        a, b1, g1, b2, g2 = sol.x
        if g1 < g2:
            b1, g1, b2, g2 = b2, g2, b1, g1
        if abs(g1 - g2) < 1e-12 * max(g1, 1.0):
            raise FitError("two-scale fit collapsed to equal rates")
        at_bound = bool(np.isclose(a, 1.0) or min(b1, b2) < 10 * tiny)
        return TwoScaleFit(alpha=float(a), beta1=float(b1), gamma1=float(g1),
                           beta2=float(b2), gamma2=float(g2),
                           residual=_rms(sol.fun), unit=unit, at_bound=at_bound)

    raise ValueError(f"unknown fit mode {mode!r}")


def fit_decay_bootstrap(points, mode: str = "single", unit: str = "us",
                        shots: int | None = None, n_boot: int = 1000,
                        seed: int = 0) -> dict:
    """Percentile confidence intervals for fit parameters.

    With shots given, each P0 is resampled as a binomial proportion at
    that shot count (simulator-style counting noise); otherwise residuals
    are resampled with replacement. Resamples that fail to fit are
    dropped and counted.
    """
    t, p = _as_points(points)
    center = fit_decay(np.column_stack([t, p]), mode=mode, unit=unit)
    rng = np.random.default_rng(seed)
    resid = p - center.predict(t)
    samples: dict[str, list] = {}
    failures = 0
    for _ in range(n_boot):
        if shots is not None:
            clipped = np.clip(p, 0.0, 1.0)
            p_new = rng.binomial(shots, clipped) / shots
        else:
            p_new = center.predict(t) + rng.choice(resid, size=resid.size,
                                                   replace=True)
        try:
            fit = fit_decay(np.column_stack([t, p_new]), mode=mode, unit=unit)
        except (FitError, ValueError):
            failures += 1
            continue
        for key, val in fit.to_dict().items():
            if isinstance(val, float):
                samples.setdefault(key, []).append(val)
    ci = {key: (float(np.percentile(vals, 2.5)),
                float(np.percentile(vals, 97.5)))
          for key, vals in samples.items() if key != "residual_rms"}
    return {"fit": center, "ci": ci, "n_boot": n_boot, "failures": failures}


def runs_test(residuals) -> float:
    """Two-sided p-value of the Wald-Wolfowitz runs test on residual signs.

    Small p flags serial structure (a systematically wrong model); zero
    residuals are dropped.
    """
    signs = np.sign(np.asarray(residuals, dtype=float))
    signs = signs[signs != 0]
    n_pos = int((signs > 0).sum())
    n_neg = int((signs < 0).sum())
    n = n_pos + n_neg
    if n_pos == 0 or n_neg == 0:
        return 1.0
    runs = 1 + int(np.sum(signs[1:] != signs[:-1]))
    mean = 2.0 * n_pos * n_neg / n + 1.0
    var = 2.0 * n_pos * n_neg * (2.0 * n_pos * n_neg - n) / (n * n * (n - 1.0))
    if var <= 0:
        return 1.0
    z = (runs - mean) / math.sqrt(var)
    return math.erfc(abs(z) / math.sqrt(2.0))


@dataclass(frozen=True)
class TargetCrossing:
    """Pause time where P0 first reaches the target at one pause location."""

    s_p: float
    t_star: float
    lo: float
    hi: float
    monotone: bool = True


@dataclass(frozen=True)
class PauseTargetResult:
    target: float
    mode: str
    crossings: tuple
    omitted: tuple              # (s_p, reason) for unreachable locations
    unit: str = "us"

    def as_arrays(self):
        s = np.array([c.s_p for c in self.crossings])
        t = np.array([c.t_star for c in self.crossings])
        return s, t


def pause_time_to_target(s_values, t_values, p_matrix, target: float,
                         mode: str = "interpolate", window: float = 0.01,
                         unit: str = "us") -> PauseTargetResult:
    """Pause time t_p* reaching P0 = target at each pause location.

    p_matrix[i, j] is P0 at s_values[i], t_values[j]. 'interpolate'
    connects the bracketing points with a straight line in (t_p, P0);
    'median-window' returns the median and interquartile range of the t_p
    whose P0 lies within +/- window of the target (for noisy curves).
    Locations that never reach the target are omitted and reported;
    non-monotone curves are flagged on the crossing, not rejected.
    """
    _check_unit(unit)
    s_values = np.asarray(s_values, dtype=float)
    t_values = np.asarray(t_values, dtype=float)
    p_matrix = np.asarray(p_matrix, dtype=float)
    if p_matrix.shape != (s_values.size, t_values.size):
        raise ValueError("p_matrix shape must be (len(s_values), len(t_values))")
    order = np.argsort(t_values)
    t_values = t_values[order]
    p_matrix = p_matrix[:, order]
    crossings, omitted = [], []
    for i, s_p in enumerate(s_values):
        curve = p_matrix[i]
        monotone = bool(np.all(np.diff(curve) >= -1e-12))
        if mode == "median-window":
            hits = np.abs(curve - target) <= window
            if not hits.any():
                omitted.append((float(s_p), "no samples within the window"))
                continue
            t_hit = t_values[hits]
            crossings.append(TargetCrossing(
                s_p=float(s_p), t_star=float(np.median(t_hit)),
                lo=float(np.percentile(t_hit, 25)),
                hi=float(np.percentile(t_hit, 75)), monotone=monotone))
            continue
        if mode != "interpolate":
            raise ValueError(f"unknown mode {mode!r}")
        above = np.nonzero(curve >= target)[0]
        if above.size == 0:
            omitted.append((float(s_p), "target above the curve"))
            continue
        j = int(above[0])
        if j == 0:
            t_star = float(t_values[0])
        else:
            p0, p1 = curve[j - 1], curve[j]
            t0, t1 = t_values[j - 1], t_values[j]
            t_star = float(t0 + (target - p0) * (t1 - t0) / (p1 - p0))
        crossings.append(TargetCrossing(s_p=float(s_p), t_star=t_star,
                                        lo=t_star, hi=t_star,
                                        monotone=monotone))
    return PauseTargetResult(target=target, mode=mode,
                             crossings=tuple(crossings),
                             omitted=tuple(omitted), unit=unit)


def tts(p0: float, t_a: float, t_p: float = 0.0) -> float:
    """Expected time to hit the ground state with 99% confidence.

    TTS = ln(0.01) / ln(1 - P0) * (t_a + t_p), in the unit of t_a.
    """
    if not 0.0 < p0 < 1.0:
        raise ValueError("TTS is defined only for 0 < P0 < 1")
    if t_a <= 0 or t_p < 0:
        raise ValueError("need t_a > 0 and t_p >= 0")
    return math.log(0.01) / math.log1p(-p0) * (t_a + t_p)


def tts_condition(p_g: float, p_a: float, t_a: float) -> float:
    """Minimum relaxation rate for a pause to lower TTS at all.

    gamma_min = -(1 - P_a) ln(1 - P_a) / (t_a (P_G - P_a)); a pause helps
    exactly when the fitted gamma exceeds this.
    """
    if not 0.0 < p_a < 1.0 or not 0.0 < p_g < 1.0:
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    if p_g <= p_a:
        raise ValueError("P_G must exceed P_a; no finite rate qualifies")
    if t_a <= 0:
        raise ValueError("t_a must be positive")
    return -(1.0 - p_a) * math.log1p(-p_a) / (t_a * (p_g - p_a))


def _tts_slope_sign_fn(p_g, p_a, gamma, t_a):
    """g(t_p) with the sign of dTTS/dt_p: L - (t_a + t_p) L'."""

    def g(t_p):
        p0 = p_g - (p_g - p_a) * math.exp(-gamma * t_p)
        lnval = -math.log1p(-p0)
        dp = (p_g - p_a) * gamma * math.exp(-gamma * t_p)
        return lnval - (t_a + t_p) * dp / (1.0 - p0)

    return g


def optimal_pause(p_g: float, p_a: float, gamma: float, t_a: float) -> float:
    """Pause length minimizing TTS; 0 when no interior minimum exists."""
    if gamma <= 0:
        return 0.0
    if not 0.0 < p_a < p_g < 1.0:
        raise ValueError("need 0 < P_a < P_G < 1")
    g = _tts_slope_sign_fn(p_g, p_a, gamma, t_a)
    if g(0.0) >= 0.0:
        return 0.0
    hi = 20.0 / gamma
    while g(hi) <= 0.0:
        hi *= 2.0
        if hi > 1e9 / gamma:
            raise FitError("TTS derivative never turns positive")
    return float(brentq(g, 0.0, hi, xtol=1e-15, rtol=1e-10))


@dataclass(frozen=True)
class TtsReport:
    """Verdict on whether pausing can lower the time to solution."""

    p_g: float
    p_a: float
    t_a: float
    gamma: float
    gamma_min_required: float
    t_p_optimal: float
    verdict: str                # 'reduces' or 'does-not-reduce'
    unit: str = "us"

    def __post_init__(self):
        _check_unit(self.unit)

    def tts_at(self, t_p) -> float | np.ndarray:
        p0 = p0_model(self.p_g, self.p_a, self.gamma, t_p)
        if np.ndim(t_p) == 0:
            return tts(float(p0), self.t_a, float(t_p))
        return np.array([tts(float(v), self.t_a, float(x))
                         for v, x in zip(p0, np.asarray(t_p, dtype=float))])

    def curve(self, n: int = 200, span: float = 5.0):
        """(t_p, TTS) table out to span/gamma, for plotting."""
        t_p = np.linspace(0.0, span / self.gamma, n)
        return t_p, self.tts_at(t_p)

    def to_dict(self) -> dict:
        return {"P_G": self.p_g, "P_a": self.p_a, "t_a": self.t_a,
                "gamma": self.gamma,
                "gamma_min_required": self.gamma_min_required,
                "t_p_optimal": self.t_p_optimal, "verdict": self.verdict,
                "time_unit": self.unit, "rate_unit": f"1/{self.unit}",
                "tts_no_pause": self.tts_at(0.0)}


def make_tts_report(p_g: float, p_a: float, gamma: float, t_a: float,
                    unit: str = "us", fit_unit: str | None = None) -> TtsReport:
    """Assemble the pausing-advantage report; refuses mismatched units."""
    _check_unit(unit)
    if fit_unit is not None and fit_unit != unit:
        raise ValueError(
            f"rate fitted in 1/{fit_unit} cannot enter a {unit}-domain report")
    gamma_min = tts_condition(p_g, p_a, t_a)
    reduces = gamma > gamma_min
    t_opt = optimal_pause(p_g, p_a, gamma, t_a) if reduces else 0.0
    return TtsReport(p_g=p_g, p_a=p_a, t_a=t_a, gamma=gamma,
                     gamma_min_required=gamma_min, t_p_optimal=t_opt,
                     verdict="reduces" if reduces else "does-not-reduce",
                     unit=unit)
