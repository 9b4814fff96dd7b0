import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from nvdephase.sensitivity import (
    FomSpec,
    SensitivityParams,
    allan_deviation,
    crossover_ppm,
    eta_n_raw,
    eta_n_sweep,
    fom_t2star,
    optimal_tau,
    ramsey_sensitivity,
    stretched_contrast,
)

import oracles

SQ = SensitivityParams(sigma=0.0321, tau=1.308e-6, tau_d=70e-6 - 1.308e-6, contrast=0.026, dm=1)


def test_eta_matches_mp_oracle():
    eta = ramsey_sensitivity(SQ)
    ref = oracles.eta_mp(0.0321, 1.308e-6, 70e-6 - 1.308e-6, 0.026, 1, 28e9)
    assert eta == pytest.approx(float(ref), rel=1e-12)
    assert f"{eta * 1e9:.6g}" == f"{float(ref) * 1e9:.6g}"
    assert eta * 1e9 == pytest.approx(44.9, abs=0.05)


def test_eta_dm_halves_and_sqrt_tau():
    dq = SensitivityParams(SQ.sigma, SQ.tau, SQ.tau_d, SQ.contrast, 2)
    assert ramsey_sensitivity(dq) == pytest.approx(ramsey_sensitivity(SQ) / 2, rel=1e-15)
    e1 = ramsey_sensitivity(SensitivityParams(0.03, 1e-6, 0.0, 0.02))
    e4 = ramsey_sensitivity(SensitivityParams(0.03, 4e-6, 0.0, 0.02))
    assert e1 / e4 == pytest.approx(2.0, rel=1e-12)


@settings(max_examples=100)
@given(st.floats(0.01, 100), st.floats(0.01, 100))
def test_eta_homogeneous(k_sigma, k_c):
    base = ramsey_sensitivity(SensitivityParams(0.03, 2e-6, 10e-6, 0.01))
    s = ramsey_sensitivity(SensitivityParams(0.03 * k_sigma, 2e-6, 10e-6, 0.01))
    c = ramsey_sensitivity(SensitivityParams(0.03, 2e-6, 10e-6, 0.01 * k_c))
    assert s == pytest.approx(k_sigma * base, rel=1e-12)
    assert c == pytest.approx(base / k_c, rel=1e-12)


def test_sensitivity_ratio_identity():
    tau_sq, tau_dq, tau_d = 1.308e-6, 23.99e-6, 46e-6
    s_sq, s_dq = 0.0321, 0.0290
    a = ramsey_sensitivity(SensitivityParams(s_sq, tau_sq, tau_d, 0.026, 1))
    b = ramsey_sensitivity(SensitivityParams(s_dq, tau_dq, tau_d, 0.026, 2))
    ident = 2 * (tau_dq / tau_sq) * (s_sq / s_dq) * math.sqrt((tau_sq + tau_d) / (tau_dq + tau_d))
    assert a / b == pytest.approx(ident, rel=1e-12)


def test_callable_contrast_and_validation():
    c = stretched_contrast(0.03, 5e-6, 1.0)
    p = SensitivityParams(0.03, 5e-6, 0.0, c)
    assert p.contrast_at(5e-6) == pytest.approx(0.03 / math.e)
    for kw in (dict(sigma=0), dict(tau=0), dict(tau_d=-1), dict(dm=3), dict(contrast=0.0)):
        args = dict(sigma=0.03, tau=1e-6, tau_d=0.0, contrast=0.02, dm=1) | kw
        with pytest.raises(ValueError):
            SensitivityParams(**args)


# ---------------------------------------------------------- optimal tau


def _tau_opt_ref(t2, p, tau_d):
    # stationarity of log eta: 1/(2(tau+tau_d)) - 1/tau + p tau^(p-1)/t2^p = 0
    f = lambda tau: 0.5 / (tau + tau_d) - 1 / tau + p * tau ** (p - 1) / t2**p
    return brentq(f, 1e-6 * t2, 10 * t2, xtol=1e-16)


def test_optimal_tau_limits():
    assert optimal_tau(5e-6, 1.0, 0.0) == pytest.approx(2.5e-6, rel=1e-6)
    assert optimal_tau(5e-6, 1.0, 100 * 5e-6) == pytest.approx(5e-6, rel=0.1)


@pytest.mark.parametrize("p", [1.0, 1.5, 2.0])
@pytest.mark.parametrize("ratio", [0.0, 0.3, 3.0, 30.0])
def test_optimal_tau_matches_stationarity(p, ratio):
    t2 = 7e-6
    assert optimal_tau(t2, p, ratio * t2) == pytest.approx(_tau_opt_ref(t2, p, ratio * t2), rel=1e-6)


def test_optimal_tau_nondecreasing_in_dead_time():
    taus = [optimal_tau(5e-6, 1.5, td) for td in np.geomspace(1e-9, 1e-2, 40)]
    assert np.all(np.diff(taus) >= -1e-12)
    with pytest.raises(ValueError):
        optimal_tau(-1, 1, 0)


# -------------------------------------------------------------- eta_N


FIG = FomSpec()


def test_fom_t2_channels():
    # SQ at 1 ppm, undriven: hand sum of the four rates
    rate = 1 / 100e-6 + 1 / 5e-6 + FIG.a_nv_n * 1.0 + FIG.a_nv_nv * 0.4 / 4
    assert fom_t2star(FIG, 1.0, 1) == pytest.approx(1 / rate)
    rate_dq = 2 * (1 / 100e-6 + FIG.a_nv_n + FIG.a_nv_nv * 0.1)
    assert fom_t2star(FIG, 1.0, 2) == pytest.approx(1 / rate_dq)


def test_curves_ordered():
    sq, dq, dqd = eta_n_sweep(FIG)
    assert sq.eta[np.argmin(abs(sq.n_ppm - 0.1))] == pytest.approx(1.0, rel=1e-12)
    assert np.all(dqd.eta <= dq.eta * (1 + 1e-12))
    assert np.all(dq.eta <= sq.eta * (1 + 1e-12))
    assert sq.as_rows().shape == (FIG.n_points, 3)


def test_crossover_closed_form():
    # eta_DQ/eta_SQ = 1/2 where the strain rate equals the magnetic rate
    n_ref = (1 / FIG.t2_strain - 1 / FIG.t2_13c) / (FIG.a_nv_n + FIG.a_nv_nv * FIG.n_nv / 4)
    n = crossover_ppm(FIG)
    assert n == pytest.approx(n_ref, rel=1e-9)
    assert 0.3 <= n <= 3.0


def test_high_density_ratio():
    r = float(eta_n_raw(FIG, 100.0, 2) / eta_n_raw(FIG, 100.0, 1))
    assert r == pytest.approx(1 / math.sqrt(2), rel=0.05)
    r_inf = float(eta_n_raw(FIG, 1e6, 2) / eta_n_raw(FIG, 1e6, 1))
    assert r_inf == pytest.approx(1 / math.sqrt(2), rel=1e-4)


def test_no_strain_constant_ratio():
    spec = FomSpec(t2_strain=math.inf)
    n = spec.concentrations
    ratio = eta_n_raw(spec, n, 2) / eta_n_raw(spec, n, 1)
    assert np.allclose(ratio, 1 / math.sqrt(2), rtol=1e-12)
    with pytest.raises(ValueError):
        crossover_ppm(spec)


def test_fom_validation():
    with pytest.raises(ValueError):
        FomSpec(n_nv=0)
    with pytest.raises(ValueError):
        FomSpec(n_min_ppm=10, n_max_ppm=1)
    with pytest.raises(ValueError):
        eta_n_sweep(FIG, ((3, 0.0),))


# --------------------------------------------------------------- Allan


def test_allan_matches_direct_loops():
    y = np.random.default_rng(3).normal(size=300)
    taus, dev = allan_deviation(y, 0.5, [0.5, 1.0, 2.5, 10.0])
    for t, d in zip(taus, dev):
        m = int(round(t / 0.5))
        assert d**2 == pytest.approx(oracles.allan_direct(list(y), m), rel=1e-10)


def test_allan_white_noise_slope():
    rng = np.random.default_rng(0)
    y = rng.normal(0, 2.0, 100_000)
    taus, dev = allan_deviation(y, 1.0, np.geomspace(1, 1000, 20))
    slope = np.polyfit(np.log(taus), np.log(dev), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.03)
    assert np.allclose(dev, 2.0 / np.sqrt(taus), rtol=0.1)


def test_allan_drift_and_constant():
    c = 0.3
    t = np.arange(1000.0)
    taus, dev = allan_deviation(c * t, 1.0, [1, 5, 50])
    assert np.allclose(dev, c * taus / math.sqrt(2), rtol=1e-9)
    _, dev0 = allan_deviation(np.full(100, 4.2), 1.0, [1, 10])
    assert np.all(dev0 == 0)


def test_allan_drops_long_taus():
    with pytest.warns(UserWarning):
        taus, _ = allan_deviation(np.zeros(100), 1.0, [1, 10, 60])
    assert list(taus) == [1, 10]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        allan_deviation(np.zeros(100), 1.0, [50])
    with pytest.raises(ValueError):
        allan_deviation(np.zeros(10), 0.0, [1])
