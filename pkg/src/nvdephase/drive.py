"""Spin-bath driving: NV dephasing versus bath Rabi frequency.

    1/T2*(W) = dm * gamma * d^2 / (d^2 + W^2) + 1/T2_other

W (drive Rabi frequency) and d (bath half-width) are ordinary frequencies in
Hz. gamma is an angular rate in rad/s, so "2 pi x 7 kHz" is stored as
2*pi*7e3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .constants import TWO_PI
from .lm import FitError, levenberg_marquardt


@dataclass(frozen=True)
class DriveModel:
    gamma_nvn: float  # rad/s
    delta_n: float  # Hz
    dm: int = 2
    t2_other: float = math.inf  # s

    def __post_init__(self) -> None:
        if self.gamma_nvn < 0:
            raise ValueError("gamma_nvn must be >= 0")
        if self.delta_n <= 0:
            raise ValueError("delta_n must be > 0")
        if self.t2_other <= 0:
            raise ValueError("t2_other must be > 0")
        if self.dm not in (1, 2):
            raise ValueError("dm must be 1 or 2")


def drive_limited_rate(model: DriveModel, omega_n: float | np.ndarray) -> float | np.ndarray:
    w = np.asarray(omega_n, dtype=float)
    if np.any(w < 0):
        raise ValueError("omega_n must be >= 0")
    d2 = model.delta_n**2
    out = model.dm * model.gamma_nvn * d2 / (d2 + w**2)
    return float(out) if out.ndim == 0 else out


def total_t2_with_drive(model: DriveModel, omega_n: float | np.ndarray) -> float | np.ndarray:
    return 1.0 / (drive_limited_rate(model, omega_n) + 1.0 / model.t2_other)


@dataclass(frozen=True)
class DrivePoint:
    omega_n: float  # Hz
    t2star: float  # s
    sigma_t2: float = 0.0


@dataclass
class DriveFit:
    model: DriveModel
    stderr: dict[str, float]
    chi2: float
    dof: int
    converged: bool
    weighted: bool
    delta_at_bound: bool
    delta_identifiable: bool
    # True where W < delta: the bath is not coherently driven there
    incoherent_regime: list[bool] = field(default_factory=list)

    def as_record(self) -> dict:
        return {
            "gamma_nvn_rad_s": self.model.gamma_nvn,
            "gamma_nvn_khz_over_2pi": self.model.gamma_nvn / TWO_PI / 1e3,
            "delta_n_hz": self.model.delta_n,
            "t2_other_s": self.model.t2_other,
            "dm": self.model.dm,
            "stderr": dict(self.stderr),
            "chi2": self.chi2,
            "dof": self.dof,
            "converged": self.converged,
            "weighted": self.weighted,
            "delta_at_bound": self.delta_at_bound,
            "delta_identifiable": self.delta_identifiable,
            "incoherent_regime": list(self.incoherent_regime),
        }


# internal units: gamma in 2 pi x kHz, delta in kHz, T2_other in us
_SCALE = np.array([TWO_PI * 1e3, 1e3, 1e-6])


def _t2_and_jac(x: np.ndarray, w: np.ndarray, dm: int) -> tuple[np.ndarray, np.ndarray]:
    g, d, t2o = x * _SCALE
    q = d**2 + w**2
    lor = d**2 / q
    rate = dm * g * lor + 1.0 / t2o
    t2 = 1.0 / rate
    drate = np.column_stack(
        (
            dm * lor,
            dm * g * 2.0 * d * w**2 / q**2,
            np.full_like(w, -1.0 / t2o**2),
        )
    )
    jac = -(t2**2)[:, None] * drate * _SCALE
    return t2, jac


def _initial(w: np.ndarray, t2: np.ndarray, dm: int) -> np.ndarray:
    t2o = 1.05 * t2.max()
    excess = np.clip(1.0 / t2 - 1.0 / t2o, 1e-30, None)
    g = excess[np.argmin(w)] / dm
    half = excess < 0.5 * excess.max()
    d = float(w[half].min()) if np.any(half) else float(np.median(w[w > 0])) if np.any(w > 0) else 1e5
    d = max(d, 1e3)
    return np.array([g, d, t2o]) / _SCALE


def fit_drive_model(
    data: Sequence[DrivePoint] | Sequence[tuple[float, float, float]],
    dm: int = 2,
    *,
    delta_bounds: tuple[float, float] = (1e3, 1e8),
    rank_rtol: float = 1e-3,
    max_iter: int = 500,
) -> DriveFit:
    """Weighted least squares of T2*(W) over gamma, delta and T2_other.

    Weights are 1/sigma^2 when every point carries sigma > 0, else the fit
    is unweighted and errors are scaled by the residual variance. delta
    counts as unidentifiable when the column-normalized Jacobian has a
    singular value below ``rank_rtol`` of the largest. Non-convergence
    raises FitError unless delta is unidentifiable, in which case the fit
    comes back flagged with ``converged=False``.
    """
    pts = [p if isinstance(p, DrivePoint) else DrivePoint(*p) for p in data]
    if len(pts) < 4:
        raise ValueError("need at least 4 points")
    w = np.array([p.omega_n for p in pts], float)
    t2 = np.array([p.t2star for p in pts], float)
    sig = np.array([p.sigma_t2 for p in pts], float)
    if np.any(w < 0) or np.any(t2 <= 0) or np.any(sig < 0):
        raise ValueError("need omega >= 0, t2star > 0, sigma >= 0")
    weighted = bool(np.all(sig > 0))
    wt = 1.0 / sig if weighted else np.ones_like(t2) / np.median(t2)

    lower = np.array([0.0, delta_bounds[0], 1e-9]) / _SCALE
    upper = np.array([np.inf, delta_bounds[1], np.inf]) / _SCALE

    res = levenberg_marquardt(
        lambda x: wt * (_t2_and_jac(x, w, dm)[0] - t2),
        lambda x: wt[:, None] * _t2_and_jac(x, w, dm)[1],
        _initial(w, t2, dm),
        lower,
        upper,
        max_iter=max_iter,
    )
    x = res.x
    cov = res.covariance(scale_by_residual=not weighted) * np.outer(_SCALE, _SCALE)
    err = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    g, d, t2o = x * _SCALE

    # identifiability: log-parameter Jacobian, columns normalized
    jl = res.jac * x[None, :]
    norms = np.linalg.norm(jl, axis=0)
    sv = np.linalg.svd(jl / np.where(norms > 0, norms, 1.0), compute_uv=False)
    identifiable = bool(norms[1] > 0 and sv[-1] > rank_rtol * sv[0])

    fit = DriveFit(
        model=DriveModel(g, d, dm, t2o),
        stderr={"gamma_nvn": err[0], "delta_n": err[1], "t2_other": err[2]},
        chi2=float(2.0 * res.cost) if weighted else float(np.sum((t2 - _t2_and_jac(x, w, dm)[0]) ** 2)),
        dof=len(pts) - 3,
        converged=res.converged,
        weighted=weighted,
        delta_at_bound=bool(res.at_bound[1]),
        delta_identifiable=identifiable,
        incoherent_regime=[bool(wi < d) for wi in w],
    )
    # with delta unidentifiable the cost has a flat valley and no isolated
    # minimum; the flagged best point is returned instead of an error
    if not res.converged and identifiable:
        raise FitError(f"drive fit did not converge: {res.message}", fit)
    return fit


def model_curve(model: DriveModel, omegas: Sequence[float]) -> np.ndarray:
    """(W, T2*) samples for plotting."""
    w = np.asarray(omegas, dtype=float)
    return np.column_stack((w, total_t2_with_drive(model, w)))
