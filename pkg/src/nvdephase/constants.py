"""Physical constants and model coefficients shared across modules.

Every value lives on one frozen dataclass so a scenario can override any of
them (``dataclasses.replace``) and probe how results depend on the choice.
Units are SI unless the field name says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

TWO_PI = 2.0 * math.pi

# CODATA values
MU0_OVER_4PI = 1.0e-7  # T m / A
MU_B = 9.2740100783e-24  # J / T
HBAR = 1.054571817e-34  # J s
G_ELECTRON = 2.0023

PPM_TO_PER_CM3 = 1.76e17
PPM_TO_PER_M3 = PPM_TO_PER_CM3 * 1.0e6


@dataclass(frozen=True)
class Constants:
    d_hz: float = 2.870e9
    gamma_hz_per_t: float = 28.025e9
    # P1 electron Zeeman factor g*muB/h; same number as gamma_hz_per_t for g = 2.0025
    p1_gamma_hz_per_t: float = 28.025e9
    dd_dt_hz_per_k: float = -74.0e3

    # dephasing-rate coefficients, angular (rad/s) per unit
    a_nn_dipolar: float = TWO_PI * 9.1e3  # per ppm, dipolar N-N estimate
    a_nv_n: float = TWO_PI * 16.6e3  # per ppm, fitted NV-N
    a_nv_13c: float = TWO_PI * 160.0e3  # per percent 13C
    a_nv_nv: float = TWO_PI * 33.0e3  # per ppm NV

    # gamma used when converting field to phase in sensitivity formulas
    sensitivity_gamma_hz_per_t: float = 28.0e9

    @property
    def gamma_rad_per_s_t(self) -> float:
        return TWO_PI * self.gamma_hz_per_t

    def override(self, **kwargs: float) -> "Constants":
        unknown = set(kwargs) - {f.name for f in fields(self)}
        if unknown:
            raise KeyError(f"unknown constant(s): {sorted(unknown)}")
        return replace(self, **kwargs)

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


DEFAULT = Constants()


def ppm_to_per_m3(n_ppm: float) -> float:
    return n_ppm * PPM_TO_PER_M3


def per_m3_to_ppm(n_per_m3: float) -> float:
    return n_per_m3 / PPM_TO_PER_M3
