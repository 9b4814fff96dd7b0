"""Independent reference calculations used by the test suite.

None of these import the code under test beyond plain data containers.
"""

from __future__ import annotations

import math

import mpmath as mp
import numpy as np

D_HZ = 2.870e9
GAMMA = 28.025e9


def mp_nv_frequencies(bx, by, bz, mx=0.0, my=0.0, mz=0.0, *, d=D_HZ, gamma=GAMMA, dps=50):
    """(f_-1, f_+1) from a 50-digit diagonalization.

    Levels are labelled by energy order, which is safe for 0 < gamma*B_z < D
    and small transverse terms: |0> lowest, |-1> middle, |+1> top.
    """
    with mp.workdps(dps):
        g = mp.mpf(gamma)
        bp = g * (mp.mpf(bx) + 1j * mp.mpf(by)) / mp.sqrt(2)
        mp_ = -(mp.mpf(mx) + 1j * mp.mpf(my))
        z = g * mp.mpf(bz)
        dd = mp.mpf(d) + mp.mpf(mz)
        h = mp.matrix(
            [
                [dd + z, mp.conj(bp), mp_],
                [bp, 0, mp.conj(bp)],
                [mp.conj(mp_), bp, dd - z],
            ]
        )
        e, _ = mp.eighe(h)
        e = sorted(mp.re(e[i]) for i in range(3))
        return e[1] - e[0], e[2] - e[0]


def _spin(s):
    m = np.arange(s, -s - 1, -1)
    n = len(m)
    jp = np.zeros((n, n), dtype=complex)
    for i in range(1, n):
        jp[i - 1, i] = math.sqrt(s * (s + 1) - m[i] * (m[i] + 1))
    jm = jp.conj().T
    return [(jp + jm) / 2, (jp - jm) / 2j, np.diag(m).astype(complex)]


def p1_lab_hamiltonian(b, axis, *, s_nuc, a_par, a_perp, p_par=0.0, gamma=GAMMA):
    """P1 Hamiltonian in the NV frame with the hyperfine tensor written as
    A = A_perp 1 + (A_par - A_perp) n n^T about the unit JT axis n."""
    n = np.asarray(axis, float) / np.linalg.norm(axis)
    s_ops = _spin(0.5)
    i_ops = _spin(s_nuc)
    d_i = i_ops[0].shape[0]
    one_s, one_i = np.eye(2), np.eye(d_i)
    tensor = a_perp * np.eye(3) + (a_par - a_perp) * np.outer(n, n)
    h = sum(gamma * b[a] * np.kron(s_ops[a], one_i) for a in range(3))
    for a in range(3):
        for c in range(3):
            if tensor[a, c] != 0.0:
                h = h + tensor[a, c] * np.kron(s_ops[a], i_ops[c])
    i_n = sum(n[a] * i_ops[a] for a in range(3))
    h = h + p_par * np.kron(one_s, i_n @ i_n - s_nuc * (s_nuc + 1) / 3 * one_i)
    return h


def n15_on_axis_lines(b, a_par, a_perp, gamma=GAMMA):
    """The two allowed lines of a spin-1/2 nucleus with the field along the
    hyperfine axis: (gB + sqrt(gB^2 + A_perp^2))/2 -+ A_par/2."""
    z = gamma * b
    centre = 0.5 * (z + math.hypot(z, a_perp))
    return sorted((centre - a_par / 2, centre + a_par / 2))


def tetrahedral_axes():
    """The four <111> directions with one of them along z, by explicit
    rotation of the cube diagonals."""
    diag = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float) / math.sqrt(3)
    z = diag[0]
    # Rodrigues rotation taking [111]/sqrt3 onto z
    k = np.cross(z, [0, 0, 1.0])
    s, c = np.linalg.norm(k), z[2]
    k /= s
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    r = np.eye(3) + s * kx + (1 - c) * kx @ kx
    return diag @ r.T


def sorted_eigs(h):
    return np.sort(np.linalg.eigvalsh(h))


def allan_direct(y, m):
    """Overlapping Allan variance by explicit loops over block means."""
    n = len(y)
    means = [sum(y[i : i + m]) / m for i in range(n - m + 1)]
    diffs = [(means[i + m] - means[i]) ** 2 for i in range(n - 2 * m + 1)]
    return sum(diffs) / (2 * len(diffs))


def eta_mp(sigma, tau, tau_d, contrast, dm, gamma_hz_per_t, dps=30):
    with mp.workdps(dps):
        return mp.mpf(sigma) * mp.sqrt(mp.mpf(tau) + tau_d) / (
            dm * mp.mpf(contrast) * 2 * mp.pi * mp.mpf(gamma_hz_per_t) * mp.mpf(tau)
        )


def p1_allowed_lines_lab(b, axes, *, s_nuc, a_par, a_perp, p_par=0.0, gamma=GAMMA):
    """Allowed (strongest 2I+1 per orientation) Delta m_S = 1 lines.

    Strength is the squared matrix element of the electron spin component
    perpendicular to B, computed as |<j|S|i>|^2 minus the parallel part.
    Returns a sorted list of (frequency, orientation index).
    """
    b = np.asarray(b, float)
    bhat = b / np.linalg.norm(b)
    n_nuc = int(round(2 * s_nuc + 1))
    s_ops = [np.kron(op, np.eye(n_nuc)) for op in _spin(0.5)]
    s_par = sum(bhat[a] * s_ops[a] for a in range(3))
    out = []
    for k, axis in enumerate(axes):
        h = p1_lab_hamiltonian(b, axis, s_nuc=s_nuc, a_par=a_par, a_perp=a_perp, p_par=p_par, gamma=gamma)
        e, v = np.linalg.eigh(h)
        cands = []
        for i in range(n_nuc):
            for j in range(n_nuc, 2 * n_nuc):
                tot = sum(abs(v[:, j].conj() @ op @ v[:, i]) ** 2 for op in s_ops)
                par = abs(v[:, j].conj() @ s_par @ v[:, i]) ** 2
                cands.append((tot - par, e[j] - e[i]))
        cands.sort(key=lambda c: -c[0])
        out.extend((f, k) for _, f in cands[:n_nuc])
    return sorted(out)
