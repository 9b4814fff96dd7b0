"""NV and substitutional-nitrogen (P1) spin Hamiltonians.

The NV ground state is written in the Zeeman basis ordered
``(|+1>, |0>, |-1>)``; the P1 centre lives in the product basis
``|m_S> (x) |m_I>`` with both quantum numbers in descending order.
All Hamiltonians are in frequency units (hertz, i.e. H/h).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .constants import DEFAULT, Constants


class PerturbationRegimeError(ValueError):
    """Raised when a perturbative formula is asked to work outside its regime."""


@dataclass(frozen=True)
class FieldVector:
    """Magnetic field in tesla, NV axis along z."""

    bx: float = 0.0
    by: float = 0.0
    bz: float = 0.0

    def __post_init__(self) -> None:
        comps = (self.bx, self.by, self.bz)
        if not all(math.isfinite(c) for c in comps):
            raise ValueError(f"field components must be finite, got {comps}")
        if math.sqrt(sum(c * c for c in comps)) >= 1.0:
            raise ValueError("field magnitude must be below 1 T")

    @classmethod
    def tilted(cls, magnitude: float, tilt_deg: float, azimuth_deg: float = 0.0) -> "FieldVector":
        th, ph = math.radians(tilt_deg), math.radians(azimuth_deg)
        return cls(
            magnitude * math.sin(th) * math.cos(ph),
            magnitude * math.sin(th) * math.sin(ph),
            magnitude * math.cos(th),
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.bx, self.by, self.bz], dtype=float)

    @property
    def perp(self) -> float:
        return math.hypot(self.bx, self.by)


@dataclass(frozen=True)
class StrainParams:
    """Strain / electric-field terms (M_x, M_y, M_z) in hertz."""

    mx: float = 0.0
    my: float = 0.0
    mz: float = 0.0

    def __post_init__(self) -> None:
        comps = (self.mx, self.my, self.mz)
        if not all(math.isfinite(c) for c in comps):
            raise ValueError(f"strain components must be finite, got {comps}")
        if any(abs(c) >= DEFAULT.d_hz for c in comps):
            raise ValueError("strain components must be smaller than the zero-field splitting")

    @property
    def perp(self) -> float:
        return math.hypot(self.mx, self.my)


@dataclass(frozen=True)
class NVLevels:
    e_minus1: float
    e_0: float
    e_plus1: float

    @property
    def f_minus1(self) -> float:
        return self.e_minus1 - self.e_0

    @property
    def f_plus1(self) -> float:
        return self.e_plus1 - self.e_0

    @property
    def dq_splitting(self) -> float:
        return self.f_plus1 - self.f_minus1


def build_nv_hamiltonian(
    b: FieldVector, m: StrainParams | None = None, const: Constants = DEFAULT
) -> np.ndarray:
    """Ground-state NV Hamiltonian H/h (Hz) in the ``(|+1>, |0>, |-1>)`` basis.

    Uses ``M_perp = -(M_x + i M_y)`` and ``B_perp = (B_x + i B_y)/sqrt(2)``.
    """
    m = m or StrainParams()
    g = const.gamma_hz_per_t
    d = const.d_hz
    b_perp = g * (b.bx + 1j * b.by) / math.sqrt(2.0)
    m_perp = -(m.mx + 1j * m.my)
    zeeman = g * b.bz
    return np.array(
        [
            [d + m.mz + zeeman, np.conj(b_perp), m_perp],
            [b_perp, 0.0, np.conj(b_perp)],
            [np.conj(m_perp), b_perp, d + m.mz - zeeman],
        ],
        dtype=complex,
    )


# label order used by the assignment below
_NV_LABELS = (+1, 0, -1)


def nv_levels_exact(h: np.ndarray) -> NVLevels:
    """Diagonalize an NV Hamiltonian and label levels by Zeeman-state overlap.

    Labels come from the permutation maximizing the summed overlap
    ``|<m|psi>|^2``. Eigenvectors are ranked by descending energy, and on a tie
    the permutation that appears first wins, so at ``B_z = 0`` with transverse
    strain the ``+1`` label goes to the upper level. This matches the sign
    convention of :func:`nv_transitions_strain`.
    """
    h = np.asarray(h)
    if h.shape != (3, 3):
        raise ValueError("expected a 3x3 matrix")
    if not np.allclose(h, h.conj().T, rtol=0.0, atol=1e-9 * max(1.0, np.abs(h).max())):
        raise ValueError("matrix is not Hermitian")
    vals, vecs = np.linalg.eigh(h)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    overlap = np.abs(vecs) ** 2  # overlap[basis, eig]
    best, best_score = None, -np.inf
    for perm in itertools.permutations(range(3)):
        score = sum(overlap[i, perm[i]] for i in range(3))
        if score > best_score + 1e-12:
            best, best_score = perm, score
    energies = {lab: vals[best[i]] for i, lab in enumerate(_NV_LABELS)}
    return NVLevels(e_minus1=energies[-1], e_0=energies[0], e_plus1=energies[+1])


def _zeeman(bz: float, const: Constants) -> float:
    if not math.isfinite(bz) or abs(bz) >= 1.0:
        raise ValueError(f"invalid bz: {bz}")
    return const.gamma_hz_per_t * bz


def nv_transitions_strain(
    bz: float, m: StrainParams, const: Constants = DEFAULT
) -> tuple[float, float]:
    """Closed-form (f_-1, f_+1) for an on-axis field with arbitrary strain.

    ``E_{+-1} = D + M_z +- sqrt((gamma B_z)^2 + |M_perp|^2)``. For ``B_z < 0``
    the roles of the two branches swap so the labels follow the Zeeman states.
    """
    z = _zeeman(bz, const)
    root = math.hypot(z, m.perp)
    sign = -1.0 if z < 0 else 1.0
    base = const.d_hz + m.mz
    return base - sign * root, base + sign * root


def nv_transitions_strain_series(
    bz: float, m: StrainParams, const: Constants = DEFAULT
) -> tuple[float, float]:
    """Second-order expansion of :func:`nv_transitions_strain` in |M_perp|/(gamma B_z)."""
    z = _zeeman(bz, const)
    if z == 0.0:
        raise PerturbationRegimeError("strain expansion needs a nonzero bias field")
    shift = z + m.perp**2 / (2.0 * z)
    base = const.d_hz + m.mz
    return base - shift, base + shift


def nv_transitions_offaxis(
    bz: float,
    b_perp: float,
    const: Constants = DEFAULT,
    *,
    zeeman_denominators: bool = False,
    max_ratio: float = 0.1,
) -> tuple[float, float]:
    """Second-order (f_-1, f_+1) for a small transverse field, zero strain.

    With the default ``zeeman_denominators=False`` the energy denominators are
    approximated by D, giving the common-mode shift ``3|gamma B_perp|^2 / D``
    on both lines. With ``True`` the full second-order denominators
    ``D +- gamma B_z`` are kept; the error is then fourth order in B_perp.
    ``b_perp`` is the magnitude sqrt(B_x^2 + B_y^2) in tesla.
    """
    z = _zeeman(bz, const)
    d = const.d_hz
    g_perp = const.gamma_hz_per_t * abs(b_perp)
    if g_perp > max_ratio * d:
        raise PerturbationRegimeError(
            f"gamma*B_perp = {g_perp:.3g} Hz is not small against D = {d:.3g} Hz"
        )
    # |gamma B_perp|^2 with B_perp = (B_x + i B_y)/sqrt(2)
    v2 = g_perp**2 / 2.0
    if not zeeman_denominators:
        shift = 3.0 * v2 / d
        return d + shift - z, d + shift + z
    e_plus = v2 / (d + z)
    e_minus = v2 / (d - z)
    e_zero = -(e_plus + e_minus)
    return d - z + e_minus - e_zero, d + z + e_plus - e_zero


# --------------------------------------------------------------------------
# P1 centre


@dataclass(frozen=True)
class NitrogenSpecies:
    isotope: str
    nuclear_spin: float
    a_par: float
    a_perp: float
    p_par: float = 0.0
    g: float = 2.0025
    electron_spin: float = 0.5

    def __post_init__(self) -> None:
        if self.isotope == "N14":
            if self.nuclear_spin != 1:
                raise ValueError("N14 has nuclear spin 1")
        elif self.isotope == "N15":
            if self.nuclear_spin != 0.5 or self.p_par != 0.0:
                raise ValueError("N15 has nuclear spin 1/2 and no quadrupole term")
        else:
            raise ValueError(f"unknown isotope {self.isotope!r}")

    @property
    def dim(self) -> int:
        return 2 * int(round(2 * self.nuclear_spin + 1))


N14 = NitrogenSpecies("N14", 1.0, a_par=114.0e6, a_perp=81.3e6, p_par=-3.97e6)
N15 = NitrogenSpecies("N15", 0.5, a_par=-159.7e6, a_perp=-113.83e6)

# tetrahedral angle between two <111> directions
JT_ANGLE_DEG = math.degrees(math.acos(-1.0 / 3.0))


def _jt_axes() -> np.ndarray:
    th = math.radians(JT_ANGLE_DEG)
    axes = [(0.0, 0.0, 1.0)]
    for k in range(3):
        ph = 2.0 * math.pi * k / 3.0
        axes.append((math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)))
    return np.array(axes)


# the four Jahn-Teller axes in the NV frame (NV axis = [111] = z)
JT_AXES = _jt_axes()


def spin_ops(s: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Spin matrices (Sx, Sy, Sz) with m ordered from +s down to -s."""
    m = np.arange(s, -s - 1, -1)
    n = len(m)
    sp = np.zeros((n, n))
    for i in range(1, n):
        sp[i - 1, i] = math.sqrt(s * (s + 1) - m[i] * (m[i] + 1))
    sx = (sp + sp.T) / 2.0
    sy = (sp - sp.T) / 2.0j
    return sx.astype(complex), sy, np.diag(m).astype(complex)


def _rotation_to_z(axis: np.ndarray) -> np.ndarray:
    """Rotation matrix R with R @ axis = z."""
    axis = axis / np.linalg.norm(axis)
    z = np.array([0.0, 0.0, 1.0])
    v = np.cross(axis, z)
    c = float(axis @ z)
    if np.linalg.norm(v) < 1e-15:
        return np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx / (1.0 + c)


def _resolve_axis(jt_axis: int | Sequence[float]) -> np.ndarray:
    if isinstance(jt_axis, (int, np.integer)):
        if not 0 <= jt_axis < 4:
            raise ValueError(f"jt_axis index must be 0..3, got {jt_axis}")
        return JT_AXES[jt_axis]
    vec = np.asarray(jt_axis, dtype=float)
    if vec.shape != (3,) or not np.all(np.isfinite(vec)) or np.linalg.norm(vec) == 0:
        raise ValueError(f"invalid jt_axis {jt_axis!r}")
    vec = vec / np.linalg.norm(vec)
    if not np.any(np.abs(JT_AXES @ vec) > 1 - 1e-9):
        raise ValueError("jt_axis must be one of the four <111> directions")
    return vec


def build_p1_hamiltonian(
    b: FieldVector,
    species: NitrogenSpecies = N14,
    jt_axis: int | Sequence[float] = 0,
    const: Constants = DEFAULT,
) -> np.ndarray:
    """P1 Hamiltonian H/h (Hz) in the Jahn-Teller frame of ``jt_axis``.

    The field (given in the NV frame) is rotated so that the JT axis becomes z;
    the isotropic electron Zeeman term then keeps all three components.
    The nuclear Zeeman term is omitted.
    """
    axis = _resolve_axis(jt_axis)
    b_local = _rotation_to_z(axis) @ b.as_array()
    sx, sy, sz = spin_ops(species.electron_spin)
    ix, iy, iz = spin_ops(species.nuclear_spin)
    one_s, one_i = np.eye(sx.shape[0]), np.eye(ix.shape[0])
    gam = const.p1_gamma_hz_per_t * species.g / 2.0025
    h = gam * np.kron(b_local[0] * sx + b_local[1] * sy + b_local[2] * sz, one_i)
    h = h + species.a_par * np.kron(sz, iz)
    h = h + species.a_perp * (np.kron(sx, ix) + np.kron(sy, iy))
    i_sq = species.nuclear_spin * (species.nuclear_spin + 1.0)
    h = h + species.p_par * np.kron(one_s, iz @ iz - i_sq / 3.0 * one_i)
    return h


@dataclass(frozen=True)
class SpectralLine:
    frequency: float
    relative_amplitude: float
    label: str
    allowed: bool
    orientation: int = 0
    m_i: float = 0.0

    def __post_init__(self) -> None:
        if self.relative_amplitude < 0:
            raise ValueError("relative_amplitude must be nonnegative")


def _transverse_ops(species: NitrogenSpecies, b_local: np.ndarray) -> list[np.ndarray]:
    """Electron-spin operators perpendicular to the local field (RF drive)."""
    sx, sy, sz = spin_ops(species.electron_spin)
    one_i = np.eye(int(round(2 * species.nuclear_spin + 1)))
    n = b_local / np.linalg.norm(b_local)
    e1 = np.cross(n, [1.0, 0.0, 0.0] if abs(n[0]) < 0.9 else [0.0, 1.0, 0.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return [np.kron(e[0] * sx + e[1] * sy + e[2] * sz, one_i) for e in (e1, e2)]


def p1_lines(
    b: FieldVector,
    species: NitrogenSpecies = N14,
    *,
    forbidden_amplitude: float = 0.1,
    const: Constants = DEFAULT,
) -> list[SpectralLine]:
    """ESR lines (Delta m_S = 1) of all four JT orientations, sorted by frequency.

    Lines are classified by their transition strength under an RF field
    perpendicular to B: per orientation the ``2I+1`` strongest are the allowed
    (Delta m_I = 0) lines and the next ``4I`` are the first-order forbidden
    (Delta m_I = +-1) ones. Allowed lines are tagged with m_I from their
    frequency order and the sign of A_par. The field must be large enough
    that the electron Zeeman term separates the two m_S manifolds.
    """
    if b.as_array() @ b.as_array() == 0.0:
        raise ValueError("p1_lines needs a nonzero field")
    n_nuc = int(round(2 * species.nuclear_spin + 1))
    mi_values = np.arange(-species.nuclear_spin, species.nuclear_spin + 1)
    lines: list[SpectralLine] = []
    for k in range(4):
        b_local = _rotation_to_z(JT_AXES[k]) @ b.as_array()
        h = build_p1_hamiltonian(b, species, k, const)
        vals, vecs = np.linalg.eigh(h)
        lower, upper = range(n_nuc), range(n_nuc, 2 * n_nuc)
        ops = _transverse_ops(species, b_local)
        cands = []
        for i in lower:
            for j in upper:
                w = sum(abs(vecs[:, j].conj() @ op @ vecs[:, i]) ** 2 for op in ops)
                cands.append((w, float(vals[j] - vals[i]), i, j))
        cands.sort(key=lambda c: -c[0])
        allowed = sorted(cands[:n_nuc], key=lambda c: c[1])
        forbidden = cands[n_nuc : n_nuc + 2 * (n_nuc - 1)]
        mi_order = mi_values if species.a_par >= 0 else mi_values[::-1]
        for (w, f, i, j), mi in zip(allowed, mi_order):
            lines.append(SpectralLine(f, 1.0, f"JT{k} mI {mi:+g}", True, k, float(mi)))
        for w, f, i, j in forbidden:
            lines.append(
                SpectralLine(f, forbidden_amplitude, f"JT{k} forbidden {i}->{j}", False, k, float("nan"))
            )
    lines.sort(key=lambda ln: ln.frequency)
    return lines


def group_lines(
    lines: Sequence[SpectralLine], tol_hz: float = 1.0e3, allowed_only: bool = True
) -> list[tuple[float, float]]:
    """Cluster lines closer than ``tol_hz``; returns (mean frequency, summed weight)."""
    sel = sorted((ln for ln in lines if ln.allowed or not allowed_only), key=lambda ln: ln.frequency)
    groups: list[list[SpectralLine]] = []
    for ln in sel:
        if groups and ln.frequency - groups[-1][-1].frequency <= tol_hz:
            groups[-1].append(ln)
        else:
            groups.append([ln])
    out = []
    for g in groups:
        w = sum(ln.relative_amplitude for ln in g)
        f = sum(ln.frequency * ln.relative_amplitude for ln in g) / w if w else g[0].frequency
        out.append((f, w))
    return out


def lorentzian_sum(
    freqs: np.ndarray, lines: Sequence[SpectralLine], hwhm: float
) -> np.ndarray:
    freqs = np.asarray(freqs, dtype=float)
    out = np.zeros_like(freqs)
    for ln in lines:
        out += ln.relative_amplitude * hwhm**2 / ((freqs - ln.frequency) ** 2 + hwhm**2)
    return out


@dataclass
class DeerSpectrum:
    lines: list[SpectralLine]
    frequency: np.ndarray
    amplitude: np.ndarray

    def groups(self, tol_hz: float = 1.0e3) -> list[tuple[float, float]]:
        return group_lines(self.lines, tol_hz)


def p1_deer_spectrum(
    b0: float,
    misalignment_deg: float = 0.0,
    species: NitrogenSpecies = N14,
    hwhm: float = 0.5e6,
    *,
    azimuth_deg: float = 0.0,
    forbidden_amplitude: float = 0.1,
    freqs: np.ndarray | None = None,
    const: Constants = DEFAULT,
) -> DeerSpectrum:
    """NV-detected DEER spectrum of the P1 bath.

    The bias field of magnitude ``b0`` is tilted by ``misalignment_deg`` from
    the NV axis towards azimuth ``azimuth_deg`` (0 deg points at JT axis 1).
    ``freqs`` defaults to a 100-500 MHz grid with hwhm/4 spacing.
    """
    if hwhm <= 0:
        raise ValueError("hwhm must be positive")
    b = FieldVector.tilted(b0, misalignment_deg, azimuth_deg)
    lines = p1_lines(b, species, forbidden_amplitude=forbidden_amplitude, const=const)
    if freqs is None:
        step = hwhm / 4.0
        freqs = np.arange(100.0e6, 500.0e6 + step / 2, step)
    return DeerSpectrum(lines, np.asarray(freqs, float), lorentzian_sum(freqs, lines, hwhm))
