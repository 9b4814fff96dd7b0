"""Ramsey DC sensitivity, optimal sensing time, the concentration figure of
merit eta_N, and overlapping Allan deviation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .constants import DEFAULT, TWO_PI

Contrast = float | Callable[[float], float]


@dataclass(frozen=True)
class SensitivityParams:
    sigma: float  # per-shot contrast noise
    tau: float  # s
    tau_d: float  # dead time, s
    contrast: Contrast  # C(tau): number or function of tau
    dm: int = 1

    def __post_init__(self) -> None:
        if self.sigma <= 0 or self.tau <= 0 or self.tau_d < 0:
            raise ValueError("sigma, tau must be positive and tau_d >= 0")
        if self.dm not in (1, 2):
            raise ValueError("dm must be 1 or 2")
        if self.contrast_at(self.tau) <= 0:
            raise ValueError("contrast must be positive")

    def contrast_at(self, tau: float) -> float:
        c = self.contrast
        return float(c(tau)) if callable(c) else float(c)


def ramsey_sensitivity(p: SensitivityParams, gamma_hz_per_t: float = DEFAULT.sensitivity_gamma_hz_per_t) -> float:
    """eta = sigma sqrt(tau + tau_D) / (dm C(tau) gamma tau), in T/sqrt(Hz)."""
    gamma = TWO_PI * gamma_hz_per_t
    return p.sigma * math.sqrt(p.tau + p.tau_d) / (p.dm * p.contrast_at(p.tau) * gamma * p.tau)


def stretched_contrast(c0: float, t2star: float, p: float) -> Callable[[float], float]:
    return lambda tau: c0 * math.exp(-((tau / t2star) ** p))


def optimal_tau(t2star: float, p_exponent: float, tau_d: float) -> float:
    """Sensing time minimizing eta for C(tau) = C0 exp[-(tau/T2*)^p].

    Minimizes log eta over log tau; C0 and sigma drop out.
    """
    if t2star <= 0 or p_exponent <= 0 or tau_d < 0:
        raise ValueError("need t2star > 0, p > 0, tau_d >= 0")

    def log_eta(u: float) -> float:
        tau = t2star * math.exp(u)
        return 0.5 * math.log(tau + tau_d) - math.log(tau) + (tau / t2star) ** p_exponent

    res = minimize_scalar(log_eta, bounds=(math.log(1e-4), math.log(10.0)), method="bounded", options={"xatol": 1e-10})
    return t2star * math.exp(res.x)


# --------------------------------------------------------------------------
# figure of merit versus nitrogen concentration


@dataclass(frozen=True)
class FomSpec:
    n_min_ppm: float = 0.01
    n_max_ppm: float = 100.0
    n_points: int = 201
    n_nv: float = 0.4
    t2_strain: float = 5e-6  # SQ only; inf removes the channel
    t2_13c: float = 100e-6
    a_nv_n: float = DEFAULT.a_nv_n  # rad/s per ppm
    a_nv_nv: float = DEFAULT.a_nv_nv  # rad/s per ppm NV
    # bath half-width rule: delta = delta_ref * [N] / n_ref
    delta_ref_hz: float = 80e3
    n_ref_ppm: float = 0.75
    norm_ppm: float = 0.1

    def __post_init__(self) -> None:
        if not 0 < self.n_nv <= 1:
            raise ValueError("n_nv must lie in (0, 1]")
        if not 0 < self.n_min_ppm < self.n_max_ppm or self.n_points < 2:
            raise ValueError("need 0 < n_min < n_max and n_points >= 2")
        if self.t2_strain <= 0 or self.t2_13c <= 0 or self.delta_ref_hz <= 0 or self.n_ref_ppm <= 0:
            raise ValueError("times and bath width must be positive")

    @property
    def concentrations(self) -> np.ndarray:
        return np.geomspace(self.n_min_ppm, self.n_max_ppm, self.n_points)

    def delta(self, n_ppm: np.ndarray) -> np.ndarray:
        return self.delta_ref_hz * np.asarray(n_ppm) / self.n_ref_ppm


def fom_t2star(spec: FomSpec, n_ppm: np.ndarray | float, dm: int, omega_n: float = 0.0) -> np.ndarray:
    """T2* (s) from 13C, strain (SQ only), driven NV-N and NV-NV channels."""
    n = np.asarray(n_ppm, dtype=float)
    d = spec.delta(n)
    magnetic = 1.0 / spec.t2_13c + spec.a_nv_n * n * d**2 / (d**2 + omega_n**2) + spec.a_nv_nv * spec.n_nv * n / 4.0
    strain = 0.0 if dm == 2 else 1.0 / spec.t2_strain
    return 1.0 / (dm * magnetic + strain)


def eta_n_raw(spec: FomSpec, n_ppm: np.ndarray | float, dm: int, omega_n: float = 0.0) -> np.ndarray:
    n = np.asarray(n_ppm, dtype=float)
    return 1.0 / (dm * np.sqrt(spec.n_nv * n * fom_t2star(spec, n, dm, omega_n)))


@dataclass
class EtaCurve:
    dm: int
    omega_n: float
    n_ppm: np.ndarray
    t2star: np.ndarray
    eta: np.ndarray  # normalized: SQ, zero drive, norm_ppm -> 1
    meta: dict = field(default_factory=dict)

    def as_rows(self) -> np.ndarray:
        return np.column_stack((self.n_ppm, self.t2star * 1e6, self.eta))


def eta_n_sweep(spec: FomSpec, settings: Sequence[tuple[int, float]] = ((1, 0.0), (2, 0.0), (2, 2e6))) -> list[EtaCurve]:
    """eta_N([N]) for each (dm, drive Hz) setting, on the concentration grid of ``spec``."""
    ref = float(eta_n_raw(spec, spec.norm_ppm, 1, 0.0))
    n = spec.concentrations
    curves = []
    for dm, omega in settings:
        if dm not in (1, 2):
            raise ValueError("dm must be 1 or 2")
        curves.append(EtaCurve(dm, omega, n, fom_t2star(spec, n, dm, omega), eta_n_raw(spec, n, dm, omega) / ref))
    return curves


def crossover_ppm(spec: FomSpec) -> float:
    """[N] where undriven eta_DQ / eta_SQ reaches 1/2.

    With strain absent from DQ, that ratio is sqrt(T2_SQ / T2_DQ) / 2, which
    equals 1/2 exactly where the SQ strain rate matches the magnetic rate.
    Below it strain dominates SQ; above it the nitrogen bath does.
    """

    def f(u: float) -> float:
        n = math.exp(u)
        return float(eta_n_raw(spec, n, 2) / eta_n_raw(spec, n, 1)) - 0.5

    lo, hi = math.log(1e-6), math.log(1e6)
    if f(lo) * f(hi) > 0:
        raise ValueError("no crossover: strain never matches the magnetic rate")
    return math.exp(brentq(f, lo, hi, xtol=1e-12))


# --------------------------------------------------------------------------
# Allan deviation


def allan_deviation(
    series: Sequence[float], cadence: float, taus: Sequence[float]
) -> tuple[np.ndarray, np.ndarray]:
    """Overlapping Allan deviation of a fractional-frequency-like series.

    Each tau is rounded to a whole number m of samples. Taus needing more
    than half the record are dropped with a warning. Returns the taus
    actually used and the deviations.
    """
    y = np.asarray(series, dtype=float)
    if cadence <= 0:
        raise ValueError("cadence must be positive")
    n = y.size
    # offset-free (Allan variance ignores constants), then integrate: n+1 points
    x = np.concatenate(([0.0], np.cumsum(y - y[0]))) if n else np.zeros(1)
    used, devs, dropped = [], [], []
    for tau in taus:
        m = int(round(tau / cadence))
        if m < 1 or 2 * m > n:
            dropped.append(tau)
            continue
        d = x[2 * m :] - 2.0 * x[m:-m] + x[: -2 * m]
        avar = np.sum(d**2) / (2.0 * m**2 * d.size)
        used.append(m * cadence)
        devs.append(math.sqrt(avar))
    if dropped:
        warnings.warn(f"dropped {len(dropped)} tau value(s) outside the series span", stacklevel=2)
    return np.array(used), np.array(devs)
