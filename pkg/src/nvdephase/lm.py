"""Small Levenberg-Marquardt solver with box bounds enforced by projection."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class FitError(RuntimeError):
    """Fit did not converge; ``result`` holds the best point reached."""

    def __init__(self, message: str, result: object) -> None:
        super().__init__(message)
        self.result = result


@dataclass
class LMResult:
    x: np.ndarray
    cost: float  # 0.5 * sum(r^2)
    jac: np.ndarray
    n_iter: int
    converged: bool
    message: str
    at_bound: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))

    def covariance(self, scale_by_residual: bool = True) -> np.ndarray:
        """(J^T J)^-1, optionally scaled by the residual variance."""
        jtj = self.jac.T @ self.jac
        cov = np.linalg.pinv(jtj)
        if scale_by_residual:
            m, n = self.jac.shape
            dof = max(m - n, 1)
            cov = cov * (2.0 * self.cost / dof)
        return cov

    def stderr(self, scale_by_residual: bool = True) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance(scale_by_residual)), 0.0, None))


def levenberg_marquardt(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    lower: np.ndarray | None = None,
    upper: np.ndarray | None = None,
    *,
    max_iter: int = 500,
    xtol: float = 1e-13,
    ftol: float = 1e-15,
    lam0: float = 1e-3,
) -> LMResult:
    """Minimize 0.5*|r(x)|^2 by damped Gauss-Newton steps.

    Damping uses the Marquardt diagonal ``diag(J^T J)``. Variables resting on
    a bound with the gradient pointing outward are held fixed for the step,
    and every trial point is clipped into ``[lower, upper]``. Stops when the relative step is below
    ``xtol``, the relative cost drop of an accepted step is below ``ftol``,
    or the damping grows beyond use.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, float)
    x = np.clip(x, lower, upper)
    r = residual(x)
    cost = 0.5 * float(r @ r)
    jac = jacobian(x)
    lam = lam0
    converged, message = False, "maximum iterations reached"
    it = 0
    for it in range(1, max_iter + 1):
        g = jac.T @ r
        # variables pinned on a bound with the descent direction pointing out
        active = ((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0))
        free = ~active
        jf = jac[:, free]
        jtj = jf.T @ jf
        gf = g[free]
        diag = np.maximum(np.diag(jtj), 1e-300)
        if gf.size == 0 or np.max(np.abs(gf) / np.sqrt(diag)) <= 1e-14 * max(np.sqrt(2 * cost), 1e-300):
            converged, message = True, "gradient below tolerance"
            break
        accepted = False
        while lam < 1e16:
            a = jtj + lam * np.diag(diag)
            try:
                step_f = np.linalg.solve(a, -gf)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            step = np.zeros(n)
            step[free] = step_f
            x_new = np.clip(x + step, lower, upper)
            r_new = residual(x_new)
            cost_new = 0.5 * float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            converged, message = True, "no further decrease possible"
            break
        dx = x_new - x
        drop = cost - cost_new
        x, r, cost = x_new, r_new, cost_new
        jac = jacobian(x)
        lam = max(lam / 10.0, 1e-12)
        if np.all(np.abs(dx) <= xtol * (np.abs(x) + xtol)):
            converged, message = True, "step below xtol"
            break
        if drop <= ftol * cost:
            converged, message = True, "cost decrease below ftol"
            break
    span = np.where(np.isfinite(upper - lower), upper - lower, np.inf)
    at_bound = (np.abs(x - lower) <= 1e-9 * span) | (np.abs(upper - x) <= 1e-9 * span)
    return LMResult(x, cost, jac, it, converged, message, at_bound)
