"""Dephasing budget: per-mechanism rates and their sum per sensing basis.

Rate conventions differ by mechanism and each channel keeps its own:

* dipolar spin channels (N, 13C, NV-NV): 1/T2* equals the angular coupling
  rate, e.g. 2 pi x 9.1 kHz/ppm.
* strain gradient across the probed spot: 1/T2* = pi * grad * length.
* magnetic field gradient: 1/T2* = grad * bias taken as a frequency in Hz,
  without a 2 pi.

Rates are stored in s^-1. The budget report prints them in us^-1, the unit
used by the bundled reference tables.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

from .constants import DEFAULT, PPM_TO_PER_CM3, Constants

C13_NATURAL_PERCENT = 1.1


class Kind(str, enum.Enum):
    NITROGEN = "Nitrogen"
    CARBON13 = "Carbon13"
    OTHER_SPINS = "OtherSpins"
    STRAIN = "StrainGradient"
    FIELD_GRADIENT = "FieldGradient"
    TEMPERATURE = "TempFluctuation"
    NVNV = "NVNV"


# DQ weight per kind: magnetic couplings double, common-mode shifts cancel
BASIS_SCALING = {
    Kind.NITROGEN: 2,
    Kind.CARBON13: 2,
    Kind.OTHER_SPINS: 2,
    Kind.FIELD_GRADIENT: 2,
    Kind.NVNV: 2,
    Kind.STRAIN: 0,
    Kind.TEMPERATURE: 0,
}


class OutOfRegimeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DephasingChannel:
    kind: Kind
    label: str
    magnitude: str  # human-readable input, e.g. "0.05 ppm"
    rate: float  # s^-1
    method: str = "estimate"
    basis_scaling: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.basis_scaling is None:
            object.__setattr__(self, "basis_scaling", BASIS_SCALING[self.kind])
        if not self.rate >= 0:
            raise ValueError(f"{self.label}: rate must be >= 0")
        if self.basis_scaling not in (0, 1, 2):
            raise ValueError(f"{self.label}: basis_scaling must be 0, 1 or 2")

    @property
    def t2star(self) -> float:
        return math.inf if self.rate == 0 else 1.0 / self.rate


# --------------------------------------------------------------------------
# single-mechanism rates


def dipolar_rate_nn(n_ppm: float, const: Constants = DEFAULT) -> float:
    if n_ppm < 0:
        raise ValueError("n_ppm must be >= 0")
    return const.a_nn_dipolar * n_ppm


def rate_13c(c13_percent: float, const: Constants = DEFAULT) -> float:
    if c13_percent < 0:
        raise ValueError("c13_percent must be >= 0")
    if c13_percent > C13_NATURAL_PERCENT:
        warnings.warn(
            f"13C abundance {c13_percent}% exceeds natural abundance; dilute-bath coefficient may not hold",
            OutOfRegimeWarning,
            stacklevel=2,
        )
    return const.a_nv_13c * c13_percent


def calibrate_13c(t2_dq: float, n_ppm: float, c13_percent: float, const: Constants = DEFAULT) -> float:
    """13C coefficient (rad/s per %) from a DQ T2* measurement.

    The DQ rate is halved to the SQ-equivalent before the nitrogen
    contribution (fitted NV-N coefficient) is removed.
    """
    if t2_dq <= 0 or c13_percent <= 0 or n_ppm < 0:
        raise ValueError("t2_dq and c13_percent must be positive, n_ppm >= 0")
    num = 1.0 / (2.0 * t2_dq) - const.a_nv_n * n_ppm
    if num < -1e-12 * (1.0 / (2.0 * t2_dq)):
        raise ValueError("nitrogen contribution exceeds the measured rate")
    return max(num, 0.0) / c13_percent


def strain_limit(gradient_hz_per_um: float, length_um: float) -> float:
    """T2* (s) set by a linear strain gradient over the probed length."""
    if gradient_hz_per_um < 0 or length_um < 0:
        raise ValueError("gradient and length must be >= 0")
    spread = gradient_hz_per_um * length_um
    return math.inf if spread == 0 else 1.0 / (math.pi * spread)


def field_gradient_limit(coeff_mhz_per_gauss: float, bias_gauss: float) -> float:
    """Rate (s^-1) from a bias-proportional field inhomogeneity."""
    if coeff_mhz_per_gauss < 0 or bias_gauss < 0:
        raise ValueError("coefficient and bias must be >= 0")
    return coeff_mhz_per_gauss * bias_gauss * 1e6


def empirical_nvn_rate(n_ppm: float, const: Constants = DEFAULT) -> float:
    if n_ppm < 0:
        raise ValueError("n_ppm must be >= 0")
    return const.a_nv_n * n_ppm


def nvnv_rate(n_ppm: float, n_nv: float, const: Constants = DEFAULT) -> float:
    """NV-NV rate with [NV] = n_nv [N] / 4 (one of four orientations resonant)."""
    if n_ppm < 0 or not 0 <= n_nv <= 1:
        raise ValueError("need n_ppm >= 0 and 0 <= n_nv <= 1")
    return const.a_nv_nv * n_nv * n_ppm / 4.0


def temperature_rate(temp_sd_kelvin: float, const: Constants = DEFAULT) -> float:
    """Rate from a quasi-static temperature spread, |dD/dT| dT in Hz."""
    if temp_sd_kelvin < 0:
        raise ValueError("temperature spread must be >= 0")
    return abs(const.dd_dt_hz_per_k) * temp_sd_kelvin


def ppm_to_cm3(n_ppm: float) -> float:
    return n_ppm * PPM_TO_PER_CM3


def cm3_to_ppm(n_cm3: float) -> float:
    return n_cm3 / PPM_TO_PER_CM3


# --------------------------------------------------------------------------
# samples and budgets


@dataclass(frozen=True)
class ExtraChannel:
    """Externally measured rate (e.g. from SEDOR), in us^-1."""

    label: str
    rate_per_us: float
    kind: Kind = Kind.NITROGEN
    method: str = "SEDOR"

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.rate_per_us < 0:
            raise ValueError(f"{self.label}: rate must be >= 0")


@dataclass(frozen=True)
class SampleSpec:
    name: str = "sample"
    n_ppm: float = 0.0
    c13_percent: float = 0.0
    strain_gradient: float = 0.0  # Hz/um
    spot_length: float = 0.0  # um
    grad_coeff: float = 0.0  # MHz/G
    bias_gauss: float = 0.0
    # "dipolar" adds the N-N dipolar estimate; "extra" leaves nitrogen to
    # the extra channels (SEDOR rows)
    nitrogen_source: str = "dipolar"
    nitrogen_isotope: str = "14N"
    n_nv: float = 0.0  # N-to-NV conversion; 0 omits the NV-NV channel
    temp_sd_kelvin: float = 0.0
    extra_channels: tuple[ExtraChannel, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "extra_channels",
            tuple(e if isinstance(e, ExtraChannel) else ExtraChannel(**e) for e in self.extra_channels),
        )
        for name in ("n_ppm", "c13_percent", "strain_gradient", "spot_length", "grad_coeff", "bias_gauss", "n_nv", "temp_sd_kelvin"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.nitrogen_source not in ("dipolar", "extra"):
            raise ValueError("nitrogen_source must be 'dipolar' or 'extra'")


def channels_for(spec: SampleSpec, const: Constants = DEFAULT) -> list[DephasingChannel]:
    """Channels with nonzero magnitude, in table order."""
    out: list[DephasingChannel] = []
    if spec.strain_gradient > 0 and spec.spot_length > 0:
        t2 = strain_limit(spec.strain_gradient, spec.spot_length)
        out.append(
            DephasingChannel(Kind.STRAIN, "strain", f"{spec.strain_gradient / 1e6:g} MHz/um", 1.0 / t2)
        )
    if spec.nitrogen_source == "dipolar" and spec.n_ppm > 0:
        out.append(
            DephasingChannel(
                Kind.NITROGEN, spec.nitrogen_isotope, f"{spec.n_ppm:g} ppm", dipolar_rate_nn(spec.n_ppm, const), "dipolar estimate"
            )
        )
    for e in spec.extra_channels:
        out.append(DephasingChannel(e.kind, e.label, "", e.rate_per_us * 1e6, e.method))
    if spec.c13_percent > 0:
        out.append(
            DephasingChannel(Kind.CARBON13, "13C", f"{spec.c13_percent:g} %", rate_13c(spec.c13_percent, const), "calibration")
        )
    if spec.grad_coeff > 0 and spec.bias_gauss > 0:
        out.append(
            DephasingChannel(
                Kind.FIELD_GRADIENT,
                f"field gradient @ {spec.bias_gauss:g} G",
                f"{spec.grad_coeff:g} MHz/G",
                field_gradient_limit(spec.grad_coeff, spec.bias_gauss),
            )
        )
    if spec.n_nv > 0 and spec.n_ppm > 0:
        out.append(DephasingChannel(Kind.NVNV, "NV-NV", f"{spec.n_nv:g} x [N]", nvnv_rate(spec.n_ppm, spec.n_nv, const)))
    if spec.temp_sd_kelvin > 0:
        out.append(
            DephasingChannel(Kind.TEMPERATURE, "temperature", f"{spec.temp_sd_kelvin:g} K", temperature_rate(spec.temp_sd_kelvin, const))
        )
    return out


def _inv(rate: float) -> float:
    return math.inf if rate == 0 else 1.0 / rate


@dataclass
class BudgetReport:
    name: str
    channels: list[DephasingChannel]
    sq_rate: float
    dq2_rate: float  # sum of SQ-basis rates of DQ-sensitive channels
    notes: list[str] = field(default_factory=list)

    @property
    def sq_t2(self) -> float:
        return _inv(self.sq_rate)

    @property
    def dq_rate(self) -> float:
        return sum(c.basis_scaling * c.rate for c in self.channels)

    @property
    def dq_t2(self) -> float:
        return _inv(self.dq_rate)

    @property
    def dq2_t2(self) -> float:
        """2 x T2,DQ*, the SQ-equivalent number the tables list."""
        return _inv(self.dq2_rate)

    def total(self, basis: str) -> tuple[float, float]:
        basis = basis.upper()
        if basis == "SQ":
            return self.sq_rate, self.sq_t2
        if basis == "DQ":
            return self.dq_rate, self.dq_t2
        if basis in ("DQX2", "DQ2", "DQ×2"):
            return self.dq2_rate, self.dq2_t2
        raise ValueError(f"unknown basis {basis!r}")

    def rows(self) -> list[dict]:
        return [
            {
                "channel": c.label,
                "kind": c.kind.value,
                "magnitude": c.magnitude,
                "rate_per_us": c.rate * 1e-6,
                "t2_us": c.t2star * 1e6,
                "method": c.method,
            }
            for c in self.channels
        ]

    def as_record(self) -> dict:
        return {
            "name": self.name,
            "channels": self.rows(),
            "total_sq": {"rate_per_us": self.sq_rate * 1e-6, "t2_us": self.sq_t2 * 1e6},
            "total_dq_x2": {"rate_per_us": self.dq2_rate * 1e-6, "t2_us": self.dq2_t2 * 1e6},
            "total_dq": {"rate_per_us": self.dq_rate * 1e-6, "t2_us": self.dq_t2 * 1e6},
            "notes": list(self.notes),
        }

    def to_text(self) -> str:
        head = ("channel", "magnitude", "1/us", "us", "method")
        body = [
            (r["channel"], r["magnitude"], f"{r['rate_per_us']:.5g}", f"{r['t2_us']:.4g}", r["method"]) for r in self.rows()
        ]
        body.append(("total SQ", "", f"{self.sq_rate * 1e-6:.5g}", f"{self.sq_t2 * 1e6:.4g}", ""))
        body.append(("total DQ x2 (no strain)", "", f"{self.dq2_rate * 1e-6:.5g}", f"{self.dq2_t2 * 1e6:.4g}", ""))
        widths = [max(len(row[i]) for row in [head, *body]) for i in range(len(head))]
        lines = [f"# {self.name}"]
        for row in [head, *body]:
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        lines.extend(f"# note: {n}" for n in self.notes)
        return "\n".join(lines) + "\n"


def combine_channels(channels: Sequence[DephasingChannel], name: str = "budget") -> BudgetReport:
    channels = list(channels)
    if not channels:
        raise ValueError("budget has no channels")
    sq = sum(c.rate for c in channels)
    dq2 = sum(c.rate for c in channels if c.basis_scaling == 2)
    return BudgetReport(name, channels, sq, dq2)


def combine_budget(spec: SampleSpec, const: Constants = DEFAULT) -> BudgetReport:
    """Per-channel rates plus SQ, DQ and 2 x DQ totals for one sample."""
    return combine_channels(channels_for(spec, const), spec.name)


def compare_totals(report: BudgetReport, expected: dict[str, float], threshold: float = 0.01) -> list[str]:
    """Notes on listed totals (us^-1) that disagree with the row sum beyond rounding."""
    notes = []
    for key, ours in (("total_sq", report.sq_rate * 1e-6), ("total_dq_x2", report.dq2_rate * 1e-6)):
        if key in expected:
            listed = expected[key]
            rel = ours / listed - 1.0
            if abs(rel) > threshold:
                notes.append(f"{key}: listed {listed:g} /us, rows sum to {ours:.4g} /us ({rel:+.1%})")
    return notes

