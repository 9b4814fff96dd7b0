"""Ramsey free-induction decay: synthesis, fitting, spectra and DC fringes.

Signal model, with Dm = 1 (SQ) or 2 (DQ):

    s(t) = C0 exp[-(t/T2*)^p] sum_i cos(2 pi Dm f_i (t - tau0_i))

Line frequencies ``f_i`` are physical detunings. A DQ measurement at the same
detuning oscillates at ``2 f_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .constants import DEFAULT, TWO_PI, Constants
from .lm import FitError, levenberg_marquardt

# 14N hyperfine splitting of the NV ground state (external constant, not fitted
# by default); used only to build a default triplet of detunings.
NV14_HYPERFINE_HZ = 2.158e6

P_BOUNDS = (0.5, 3.0)


@dataclass(frozen=True)
class RamseyParams:
    c0: float
    t2star: float
    p: float
    lines: tuple[tuple[float, float], ...]  # (f_i [Hz], tau0_i [s])
    dm: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "lines", tuple((float(f), float(t)) for f, t in self.lines))
        if not 0 < self.c0 <= 1:
            raise ValueError("c0 must lie in (0, 1]")
        if self.t2star <= 0:
            raise ValueError("t2star must be positive")
        if not P_BOUNDS[0] <= self.p <= P_BOUNDS[1]:
            raise ValueError(f"p must lie in {P_BOUNDS}")
        if not 1 <= len(self.lines) <= 3:
            raise ValueError("need 1 to 3 lines")
        if self.dm not in (1, 2):
            raise ValueError("dm must be 1 or 2")

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([f for f, _ in self.lines])

    @property
    def tau0(self) -> np.ndarray:
        return np.array([t for _, t in self.lines])


def hyperfine_triplet(detuning: float, splitting: float = NV14_HYPERFINE_HZ) -> tuple[tuple[float, float], ...]:
    return tuple((detuning + k * splitting, 0.0) for k in (-1, 0, 1))


def envelope(params: RamseyParams, times: np.ndarray) -> np.ndarray:
    return params.c0 * np.exp(-((np.asarray(times) / params.t2star) ** params.p))


def synthesize_ramsey(
    params: RamseyParams,
    times: Sequence[float],
    noise_sd: float = 0.0,
    seed: int | None = None,
) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if np.any(t < 0):
        raise ValueError("times must be nonnegative")
    osc = np.zeros_like(t)
    for f, t0 in params.lines:
        osc += np.cos(TWO_PI * params.dm * f * (t - t0))
    s = envelope(params, t) * osc
    if noise_sd > 0:
        s = s + np.random.default_rng(seed).normal(0.0, noise_sd, t.shape)
    return s


@dataclass
class FitResult:
    params: RamseyParams
    stderr: dict[str, float]
    residual_norm: float
    converged: bool
    p_at_bound: bool = False
    n_iter: int = 0
    message: str = ""
    covariance_diag: dict[str, float] = field(default_factory=dict)

    def as_record(self) -> dict:
        rec = {
            "c0": self.params.c0,
            "t2star_s": self.params.t2star,
            "p": self.params.p,
            "dm": self.params.dm,
            "lines": [{"f_hz": f, "tau0_s": t} for f, t in self.params.lines],
            "stderr": dict(self.stderr),
            "covariance_diag": dict(self.covariance_diag),
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "p_at_bound": self.p_at_bound,
        }
        return rec


# --------------------------------------------------------------------------
# fitting. Internally time is scaled by the record span, frequencies are in
# cycles per span and each line carries a phase phi_i = 2 pi f_i tau0_i.
# x = [c0, T, p, f_1..f_n, phi_1..phi_n]


def _model_jac(x: np.ndarray, t: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    c0, T, p = x[:3]
    f = x[3 : 3 + n]
    phi = x[3 + n :]
    u = t / T
    up = u**p
    env = np.exp(-up)
    arg = TWO_PI * np.outer(t, f) - phi  # (m, n)
    cos_a, sin_a = np.cos(arg), np.sin(arg)
    osc = cos_a.sum(axis=1)
    model = c0 * env * osc
    jac = np.empty((t.size, 3 + 2 * n))
    jac[:, 0] = env * osc
    jac[:, 1] = model * p * up / T
    with np.errstate(divide="ignore", invalid="ignore"):
        logu = np.where(u > 0, np.log(np.where(u > 0, u, 1.0)), 0.0)
    jac[:, 2] = -model * up * logu
    amp = (c0 * env)[:, None]
    jac[:, 3 : 3 + n] = -amp * sin_a * TWO_PI * t[:, None]
    jac[:, 3 + n :] = amp * sin_a
    return model, jac


def _peak_frequencies(t: np.ndarray, s: np.ndarray, n: int, pad: int = 16) -> np.ndarray:
    """n strongest local maxima of the zero-padded spectrum (cycles per unit t)."""
    tu = np.linspace(t[0], t[-1], t.size)
    su = np.interp(tu, t, s) - np.mean(s)
    dt = tu[1] - tu[0]
    nfft = pad * tu.size
    mag = np.abs(np.fft.rfft(su * np.hanning(su.size), nfft))
    freq = np.fft.rfftfreq(nfft, dt)
    interior = np.r_[False, (mag[1:-1] > mag[:-2]) & (mag[1:-1] >= mag[2:]), False]
    interior[0] = mag[0] > mag[1]
    idx = np.flatnonzero(interior)
    idx = idx[np.argsort(mag[idx])[::-1]]
    resolution = 1.0 / (t[-1] - t[0])
    chosen: list[float] = []
    for i in idx:
        if all(abs(freq[i] - c) > 0.5 * resolution for c in chosen):
            chosen.append(freq[i])
        if len(chosen) == n:
            break
    while len(chosen) < n:
        chosen.append(chosen[-1] + resolution if chosen else resolution)
    return np.sort(np.array(chosen))


def _linear_stage(t: np.ndarray, s: np.ndarray, f: np.ndarray, T: float, p: float):
    env = np.exp(-((t / T) ** p))
    arg = TWO_PI * np.outer(t, f)
    design = np.hstack((env[:, None] * np.cos(arg), env[:, None] * np.sin(arg)))
    coef, *_ = np.linalg.lstsq(design, s, rcond=None)
    resid = s - design @ coef
    n = f.size
    a, b = coef[:n], coef[n:]
    return float(resid @ resid), np.hypot(a, b), np.arctan2(b, a)


def _initial_guess(t: np.ndarray, s: np.ndarray, n: int) -> np.ndarray:
    f = _peak_frequencies(t, s, n)
    best = None
    for T in np.geomspace(0.02, 20.0, 41):
        cost, amp, phi = _linear_stage(t, s, f, T, 1.0)
        if best is None or cost < best[0]:
            best = (cost, T, amp, phi)
    _, T, amp, phi = best
    c0 = float(np.clip(np.mean(amp), 1e-6, 1.0))
    return np.concatenate(([c0, T, 1.0], f, phi))


def _to_internal(guess: RamseyParams, span: float) -> np.ndarray:
    f = guess.frequencies * guess.dm
    phi = TWO_PI * guess.frequencies * guess.dm * guess.tau0
    return np.concatenate(([guess.c0, guess.t2star / span, guess.p], f * span, phi))


def fit_ramsey(
    times: Sequence[float],
    signal: Sequence[float],
    n_lines: int,
    initial_guess: RamseyParams | None = None,
    *,
    dm: int = 1,
    sigma: Sequence[float] | None = None,
    restarts: int = 0,
    seed: int = 0,
    max_iter: int = 500,
) -> FitResult:
    """Least-squares fit of C0, T2*, p and per-line (f_i, tau0_i).

    Returned frequencies are divided by ``dm``. Fitting DQ data with
    ``dm=1`` therefore reports the doubled, apparent frequencies.
    ``tau0_i`` is reported with its phase wrapped into (-pi, pi].
    Raises FitError (carrying the best point) if the fit does not converge.
    """
    t = np.asarray(times, dtype=float)
    s = np.asarray(signal, dtype=float)
    if t.shape != s.shape or t.ndim != 1:
        raise ValueError("times and signal must be equal-length 1-D arrays")
    if not 1 <= n_lines <= 3:
        raise ValueError("n_lines must be 1..3")
    n_free = 3 + 2 * n_lines
    if t.size < 10 * n_free:
        raise ValueError(f"need at least {10 * n_free} samples for {n_free} parameters")
    order = np.argsort(t)
    t, s = t[order], s[order]
    span = float(t[-1])
    if span <= 0:
        raise ValueError("time record must have positive span")
    if initial_guess is not None and span < initial_guess.t2star:
        raise ValueError("record span shorter than the T2* guess")
    w = np.ones_like(t) if sigma is None else 1.0 / np.asarray(sigma, float)[order]
    ts = t / span

    x0 = _to_internal(initial_guess, span) if initial_guess is not None else _initial_guess(ts, s, n_lines)
    lower = np.concatenate(([1e-9, 1e-4, P_BOUNDS[0]], np.zeros(n_lines), np.full(n_lines, -np.inf)))
    upper = np.concatenate(([1.0, 1e3, P_BOUNDS[1]], np.full(n_lines, np.inf), np.full(n_lines, np.inf)))

    def resid(x: np.ndarray) -> np.ndarray:
        return w * (_model_jac(x, ts, n_lines)[0] - s)

    def jac(x: np.ndarray) -> np.ndarray:
        return w[:, None] * _model_jac(x, ts, n_lines)[1]

    starts = [x0]
    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        xr = x0.copy()
        xr[1] *= math.exp(rng.normal(0, 0.5))
        xr[3 : 3 + n_lines] += rng.normal(0, 0.3, n_lines)
        xr[3 + n_lines :] += rng.normal(0, 1.0, n_lines)
        starts.append(np.clip(xr, lower, upper))
    best = None
    for x_start in starts:
        res = levenberg_marquardt(resid, jac, x_start, lower, upper, max_iter=max_iter)
        if best is None or res.cost < best.cost:
            best = res

    result = _package(best, span, n_lines, dm, weighted=sigma is not None)
    if not best.converged:
        raise FitError(f"Ramsey fit did not converge: {best.message}", result)
    return result


def _package(res, span: float, n: int, dm: int, weighted: bool) -> FitResult:
    x = res.x
    cov = res.covariance(scale_by_residual=not weighted)
    phi = (x[3 + n :] + math.pi) % TWO_PI - math.pi
    f_app = x[3 : 3 + n]  # cycles per span
    with np.errstate(divide="ignore", invalid="ignore"):
        tau0_scaled = np.where(f_app > 0, phi / (TWO_PI * f_app), 0.0)
    order = np.argsort(f_app)
    names = ["c0", "t2star", "p"]
    scale = [1.0, span, 1.0]
    err = {nm: float(math.sqrt(max(cov[i, i], 0.0))) * sc for i, (nm, sc) in enumerate(zip(names, scale))}
    lines = []
    for rank, i in enumerate(order):
        fi = f_app[i] / span / dm
        lines.append((fi, tau0_scaled[i] * span))
        jf, jp = 3 + i, 3 + n + i
        err[f"f{rank}"] = math.sqrt(max(cov[jf, jf], 0.0)) / span / dm
        if f_app[i] > 0:
            g = np.zeros(x.size)
            g[jp] = 1.0 / (TWO_PI * f_app[i])
            g[jf] = -phi[i] / (TWO_PI * f_app[i] ** 2)
            err[f"tau0_{rank}"] = math.sqrt(max(g @ cov @ g, 0.0)) * span
        else:
            err[f"tau0_{rank}"] = float("inf")
    c0 = float(min(max(x[0], 1e-9), 1.0))
    p = float(np.clip(x[2], *P_BOUNDS))
    params = RamseyParams(c0, float(x[1] * span), p, tuple(lines), dm)
    p_at_bound = bool(res.at_bound[2])
    return FitResult(
        params=params,
        stderr=err,
        residual_norm=float(math.sqrt(2.0 * res.cost)),
        converged=res.converged,
        p_at_bound=p_at_bound,
        n_iter=res.n_iter,
        message=res.message,
        covariance_diag={k: v**2 for k, v in err.items()},
    )


def ramsey_spectrum(
    times: Sequence[float], signal: Sequence[float], pad: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Magnitude of the discrete Fourier transform of a uniformly sampled record."""
    t = np.asarray(times, dtype=float)
    s = np.asarray(signal, dtype=float)
    if t.size < 2:
        raise ValueError("need at least two samples")
    dt = np.diff(t)
    if np.any(dt <= 0) or not np.allclose(dt, dt[0], rtol=1e-6, atol=0.0):
        raise ValueError("time grid must be uniform and increasing")
    nfft = pad * t.size
    mag = np.abs(np.fft.rfft(s - s.mean(), nfft))
    return np.fft.rfftfreq(nfft, dt[0]), mag


def fringe_period(dm: int, tau: float, const: Constants = DEFAULT) -> float:
    """Field period 2 pi / (dm gamma tau) of the Ramsey fringe, tesla."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return TWO_PI / (dm * const.gamma_rad_per_s_t * tau)


def dc_fringe(
    contrast: float, dm: int, tau: float, b_values: Sequence[float], const: Constants = DEFAULT
) -> np.ndarray:
    """S(B) = C sin(dm gamma B tau)."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if dm not in (1, 2):
        raise ValueError("dm must be 1 or 2")
    b = np.asarray(b_values, dtype=float)
    return contrast * np.sin(dm * const.gamma_rad_per_s_t * b * tau)
