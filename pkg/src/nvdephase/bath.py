"""Monte Carlo model of the dipolar nitrogen bath around a single NV.

Each configuration places spins uniformly in a sphere around the NV. Its
linewidth is the square root of the second moment of the secular dipolar
shifts. The ensemble dephasing time is taken from the median linewidth.
The spin-1/2 prefactor is frozen at the value that maps 1 ppm onto
9.6 us (see ``scripts/calibrate_bath.py``).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .constants import G_ELECTRON, HBAR, MU0_OVER_4PI, MU_B, PPM_TO_PER_M3

# mu0/4pi * g^2 muB^2 / hbar, rad/s * m^3
DIPOLAR_J = MU0_OVER_4PI * G_ELECTRON**2 * MU_B**2 / HBAR

EXCLUSION_RADIUS = 0.15e-9
MAGIC_ANGLE_DEG = math.degrees(math.acos(1.0 / math.sqrt(3.0)))

# Calibrated with scripts/calibrate_bath.py (1 ppm -> 9.6 us, 10^5 configs,
# 400 spins per configuration). Bare spin-1/2 value would be 0.5.
SPIN_PREFACTOR = 0.3029

DEFAULT_SPINS = 400
BLOCK_SIZE = 256


@dataclass(frozen=True)
class BathConfig:
    positions: np.ndarray  # (n, 3), metres
    density_ppm: float
    region_radius: float
    seed: int | Sequence[int]

    @property
    def count(self) -> int:
        return len(self.positions)


def expected_count(density_ppm: float, radius: float) -> float:
    return density_ppm * PPM_TO_PER_M3 * 4.0 / 3.0 * math.pi * radius**3


def radius_for_count(density_ppm: float, count: int) -> float:
    return (3.0 * count / (4.0 * math.pi * density_ppm * PPM_TO_PER_M3)) ** (1.0 / 3.0)


def _positions(rng: np.random.Generator, n: int, radius: float, r_min: float) -> np.ndarray:
    u = rng.random(n)
    r = np.cbrt(r_min**3 + u * (radius**3 - r_min**3))
    cos_t = rng.uniform(-1.0, 1.0, n)
    phi = rng.uniform(0.0, 2.0 * math.pi, n)
    sin_t = np.sqrt(1.0 - cos_t**2)
    return np.column_stack((r * sin_t * np.cos(phi), r * sin_t * np.sin(phi), r * cos_t))


def _stream(seed: int | Sequence[int], index: int) -> np.random.Generator:
    root = list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]
    return np.random.default_rng(root + [index])


def sample_bath(
    density_ppm: float,
    region_radius: float,
    seed: int | Sequence[int],
    *,
    index: int = 0,
    exclusion_radius: float = EXCLUSION_RADIUS,
    min_count: int = 100,
    check_pairs: bool = True,
) -> BathConfig:
    """Draw ``round(n V)`` spins uniformly in a sphere centred on the NV.

    No spin is placed within ``exclusion_radius`` of the NV. With
    ``check_pairs`` any spin closer than that to another bath spin is redrawn.
    """
    if density_ppm < 0 or region_radius <= 0:
        raise ValueError("density must be >= 0 and radius > 0")
    rng = _stream(seed, index)
    if density_ppm == 0:
        return BathConfig(np.zeros((0, 3)), 0.0, region_radius, seed)
    mean = expected_count(density_ppm, region_radius)
    if mean < 1:
        raise ValueError(f"expected spin count {mean:.3g} < 1; enlarge the region")
    if mean < min_count:
        raise ValueError(f"expected spin count {mean:.3g} below convergence guard {min_count}")
    n = int(round(mean))
    pos = _positions(rng, n, region_radius, exclusion_radius)
    if check_pairs:
        from scipy.spatial import cKDTree

        for _ in range(100):
            pairs = cKDTree(pos).query_pairs(exclusion_radius, output_type="ndarray")
            if len(pairs) == 0:
                break
            redo = np.unique(pairs[:, 1])
            pos[redo] = _positions(rng, len(redo), region_radius, exclusion_radius)
        else:
            raise RuntimeError("could not satisfy the pair exclusion")
    return BathConfig(pos, density_ppm, region_radius, seed)


def couplings(
    positions: np.ndarray, nv_axis: Sequence[float] = (0.0, 0.0, 1.0), prefactor: float = 1.0
) -> np.ndarray:
    """Secular dipolar shifts b_j (rad/s) of every bath spin."""
    axis = np.asarray(nv_axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    r = np.linalg.norm(positions, axis=1)
    cos_t = positions @ axis / r
    return prefactor * DIPOLAR_J * (1.0 - 3.0 * cos_t**2) / r**3


def config_linewidth(
    config: BathConfig | np.ndarray,
    nv_axis: Sequence[float] = (0.0, 0.0, 1.0),
    prefactor: float = SPIN_PREFACTOR,
) -> float:
    """Root second moment sqrt(sum b_j^2) of one configuration, rad/s."""
    pos = config.positions if isinstance(config, BathConfig) else np.asarray(config)
    if len(pos) == 0:
        return 0.0
    b = couplings(pos, nv_axis, prefactor)
    return float(math.sqrt(b @ b))


@dataclass
class EnsembleResult:
    density_ppm: float
    n_configs: int
    linewidths: np.ndarray  # rad/s, in configuration order
    t2_ensemble: float  # s
    q10: float
    q50: float
    q90: float

    def as_record(self) -> dict[str, float]:
        return {
            "density_ppm": self.density_ppm,
            "n_configs": self.n_configs,
            "t2_us": self.t2_ensemble * 1e6,
            "q10_rad_s": self.q10,
            "q50_rad_s": self.q50,
            "q90_rad_s": self.q90,
        }


def _block(
    start: int,
    stop: int,
    density_ppm: float,
    radius: float,
    seed: int | Sequence[int],
    axis: np.ndarray,
    prefactor: float,
    exclusion_radius: float,
) -> np.ndarray:
    n = int(round(expected_count(density_ppm, radius)))
    out = np.empty(stop - start)
    for k, idx in enumerate(range(start, stop)):
        pos = _positions(_stream(seed, idx), n, radius, exclusion_radius)
        b = couplings(pos, axis, prefactor)
        out[k] = math.sqrt(b @ b)
    return out


def linewidth_samples(
    density_ppm: float,
    n_configs: int,
    seed: int | Sequence[int],
    *,
    n_spins: int = DEFAULT_SPINS,
    nv_axis: Sequence[float] = (0.0, 0.0, 1.0),
    prefactor: float = SPIN_PREFACTOR,
    exclusion_radius: float = EXCLUSION_RADIUS,
    threads: int = 1,
    region_radius: float | None = None,
) -> np.ndarray:
    """Per-configuration linewidths in configuration-index order.

    Configuration ``i`` draws from its own stream keyed by ``(seed, i)``, so
    the result does not depend on ``threads``. Pair exclusion between bath
    spins is skipped here; only the NV exclusion sphere is enforced.
    """
    if density_ppm <= 0:
        raise ValueError("density must be positive")
    if n_spins < 100:
        raise ValueError("need at least 100 spins per configuration")
    radius = region_radius or radius_for_count(density_ppm, n_spins)
    axis = np.asarray(nv_axis, dtype=float)
    bounds = [(s, min(s + BLOCK_SIZE, n_configs)) for s in range(0, n_configs, BLOCK_SIZE)]
    args = (density_ppm, radius, seed, axis, prefactor, exclusion_radius)
    if threads <= 1:
        parts = [_block(a, b, *args) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda ab: _block(ab[0], ab[1], *args), bounds))
    return np.concatenate(parts) if parts else np.zeros(0)


def ensemble_t2(
    density_ppm: float,
    n_configs: int = 10_000,
    seed: int | Sequence[int] = 0,
    **kwargs,
) -> EnsembleResult:
    """Ensemble T2* = 1 / median linewidth, with 10/50/90 % quantiles."""
    if n_configs < 100:
        raise ValueError("n_configs must be at least 100")
    widths = linewidth_samples(density_ppm, n_configs, seed, **kwargs)
    q10, q50, q90 = np.quantile(np.sort(widths), [0.1, 0.5, 0.9])
    return EnsembleResult(density_ppm, n_configs, widths, 1.0 / q50, q10, q50, q90)


def calibrate_prefactor(target_t2: float = 9.6e-6, n_configs: int = 100_000, seed: int = 2018) -> float:
    """Prefactor s making the 1 ppm ensemble T2* equal ``target_t2``.

    The linewidth is linear in s, so one unit-prefactor run suffices.
    """
    widths = linewidth_samples(1.0, n_configs, seed, prefactor=1.0)
    return float(1.0 / (target_t2 * np.median(widths)))


def mean_nearest_neighbour(density_ppm: float) -> float:
    """Poisson mean nearest-neighbour distance, Gamma(4/3) (4 pi n / 3)^(-1/3)."""
    n = density_ppm * PPM_TO_PER_M3
    return math.gamma(4.0 / 3.0) * (4.0 * math.pi * n / 3.0) ** (-1.0 / 3.0)


# --------------------------------------------------------------------------
# orthogonal distance regression through the origin


@dataclass(frozen=True)
class ConcentrationPoint:
    n_ppm: float
    sigma_n: float
    t2star: float  # s
    sigma_t2: float

    def __post_init__(self) -> None:
        if self.n_ppm <= 0 or self.t2star <= 0:
            raise ValueError("concentration and T2* must be positive")
        if self.sigma_n < 0 or self.sigma_t2 < 0:
            raise ValueError("uncertainties must be nonnegative")

    @property
    def rate(self) -> float:
        return 1.0 / self.t2star

    @property
    def sigma_rate(self) -> float:
        return self.sigma_t2 / self.t2star**2


@dataclass(frozen=True)
class OdrResult:
    slope: float
    stderr: float
    chi2: float
    dof: int
    weighted: bool


def odr_through_origin(
    x: np.ndarray, y: np.ndarray, sx: np.ndarray, sy: np.ndarray
) -> OdrResult:
    """Fit y = A x minimizing orthogonal distances weighted per axis.

    For a straight line the inner minimization over the true x has a closed
    form, leaving ``sum r_i^2`` with ``r_i = (y - A x) / sqrt(sy^2 + A^2 sx^2)``.
    The standard error is the Gauss-Newton one on these reduced residuals,
    scaled by the reduced chi-square (the usual ODR convention). If every
    uncertainty is zero the fit falls back to unweighted total least squares.
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    sx, sy = np.asarray(sx, float), np.asarray(sy, float)
    if len(x) < 2:
        raise ValueError("need at least two points")
    weighted = bool(np.any(sx > 0) or np.any(sy > 0))
    if not weighted:
        sx = sy = np.ones_like(x)
    if np.any(sy**2 + sx**2 == 0):
        raise ValueError("each point needs a nonzero uncertainty on some axis")

    def chi2(a: float) -> float:
        return float(np.sum((y - a * x) ** 2 / (sy**2 + a**2 * sx**2)))

    def dchi2(a: float) -> float:
        w = sy**2 + a**2 * sx**2
        e = y - a * x
        return float(np.sum(-2.0 * x * e / w - 2.0 * a * sx**2 * e**2 / w**2))

    a0 = float(np.sum(x * y) / np.sum(x * x))
    lo, hi = (a0 / 10, a0 * 10) if a0 > 0 else (a0 * 10, a0 / 10) if a0 < 0 else (-1.0, 1.0)
    a = float(minimize_scalar(chi2, bounds=(lo, hi), method="bounded", options={"xatol": abs(a0) * 1e-12}).x)
    # polish on the stationarity condition; function-value search stops near sqrt(eps)
    h = abs(a) * 1e-6 or 1e-9
    if dchi2(a - h) * dchi2(a + h) < 0:
        a = float(brentq(dchi2, a - h, a + h, xtol=1e-15 * abs(a) or 1e-300, rtol=4 * np.finfo(float).eps))
    w = sy**2 + a**2 * sx**2
    jac = -x / np.sqrt(w) - (y - a * x) * a * sx**2 / w**1.5
    dof = len(x) - 1
    res_var = chi2(a) / dof if dof > 0 else 1.0
    jj = float(jac @ jac)
    stderr = math.sqrt(res_var / jj) if jj > 0 else float("inf")
    return OdrResult(a, stderr, chi2(a), dof, weighted)


def odr_fit_linear(points: Sequence[ConcentrationPoint]) -> OdrResult:
    """Fit 1/T2* = A [N] (A in s^-1 per ppm) to concentration points."""
    x = np.array([p.n_ppm for p in points])
    y = np.array([p.rate for p in points])
    sx = np.array([p.sigma_n for p in points])
    sy = np.array([p.sigma_rate for p in points])
    return odr_through_origin(x, y, sx, sy)
