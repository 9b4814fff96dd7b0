import math
import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvdephase.budget import (
    DephasingChannel,
    ExtraChannel,
    Kind,
    OutOfRegimeWarning,
    SampleSpec,
    calibrate_13c,
    channels_for,
    cm3_to_ppm,
    combine_budget,
    combine_channels,
    compare_totals,
    dipolar_rate_nn,
    empirical_nvn_rate,
    field_gradient_limit,
    nvnv_rate,
    ppm_to_cm3,
    rate_13c,
    strain_limit,
    temperature_rate,
)
from nvdephase.constants import DEFAULT

US = 1e-6

SAMPLE_A = SampleSpec("A", n_ppm=0.05, c13_percent=0.01, strain_gradient=2.8e3, spot_length=21.6, grad_coeff=0.000056, bias_gauss=20)
SAMPLE_B = SampleSpec(
    "B", n_ppm=0.75, c13_percent=0.01, strain_gradient=2.8e3, spot_length=21.6, grad_coeff=0.000056, bias_gauss=85,
    nitrogen_source="extra",
    extra_channels=(ExtraChannel("14N (allowed)", 0.056), ExtraChannel("14N (forbidden)", 0.0047)),
)
SAMPLE_C = SampleSpec(
    "C", n_ppm=10, c13_percent=0.05, strain_gradient=2.8e3, spot_length=15.9, grad_coeff=0.000022, bias_gauss=100,
    nitrogen_source="extra", nitrogen_isotope="15N",
    extra_channels=(
        ExtraChannel("15N (allowed)", 0.59),
        ExtraChannel("15N (forbidden)", 0.15),
        ExtraChannel("14N (5% of 15N)", 0.0391, method="estimated"),
    ),
)


# ---------------------------------------------------------- single channels


def test_dipolar_nn():
    assert 1 / dipolar_rate_nn(1.0) / US == pytest.approx(17.49, abs=0.01)
    assert 1 / dipolar_rate_nn(0.05) / US == pytest.approx(350, rel=0.01)
    assert dipolar_rate_nn(0.0) == 0.0
    with pytest.raises(ValueError):
        dipolar_rate_nn(-1)


def test_rate_13c():
    assert 1 / rate_13c(0.01) / US == pytest.approx(1 / (2 * math.pi * 160e3 * 0.01) / US)
    assert 1 / rate_13c(0.01) / US == pytest.approx(99.47, abs=0.01)
    assert 1 / rate_13c(0.05) / US == pytest.approx(20, rel=0.01)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rate_13c(1.07)
    with pytest.warns(OutOfRegimeWarning):
        rate_13c(5.0)
    assert 1 / rate_13c(1.07) / US == pytest.approx(0.93, abs=0.005)


def test_calibrate_13c():
    a = calibrate_13c(445e-9, 0.4, 1.07)
    assert a / (2 * math.pi * 1e3) == pytest.approx(160, rel=0.01)
    # hand arithmetic: 1 / (2 * 500 ns) = 1e6 s^-1
    assert calibrate_13c(500e-9, 0.0, 1.0) == pytest.approx(1e6)
    assert calibrate_13c(500e-9, 0.0, 1.0) / (2 * math.pi * 1e3) == pytest.approx(159.15, abs=0.01)
    n_zero = 1 / (2 * 500e-9) / DEFAULT.a_nv_n
    assert calibrate_13c(500e-9, n_zero, 1.0) == pytest.approx(0.0, abs=1e-6)
    with pytest.raises(ValueError):
        calibrate_13c(500e-9, 2 * n_zero, 1.0)


def test_strain_limit():
    assert strain_limit(2.8e3, 20) / US == pytest.approx(5.68, abs=0.01)
    assert 1 / strain_limit(2.8e3, 21.6) * US == pytest.approx(0.190, abs=0.0005)
    assert strain_limit(0.0, 20) == math.inf


def test_field_gradient():
    assert 1 / field_gradient_limit(0.000056, 20) / US == pytest.approx(893, abs=1)
    assert 1 / field_gradient_limit(0.000056, 85) / US == pytest.approx(210, abs=0.2)
    assert 1 / field_gradient_limit(0.000022, 100) / US == pytest.approx(455, abs=0.5)


def test_empirical_and_nvnv():
    assert 1 / empirical_nvn_rate(1.0) / US == pytest.approx(9.59, abs=0.01)
    assert 1 / empirical_nvn_rate(0.75) / US == pytest.approx(12.8, abs=0.05)
    assert nvnv_rate(4.0, 0.5) == pytest.approx(DEFAULT.a_nv_nv * 0.5)
    with pytest.raises(ValueError):
        nvnv_rate(1.0, 1.5)


def test_temperature_channel():
    assert temperature_rate(0.1) == pytest.approx(7.4e3)
    ch = DephasingChannel(Kind.TEMPERATURE, "T", "0.1 K", temperature_rate(0.1))
    assert ch.basis_scaling == 0


@settings(max_examples=100)
@given(st.floats(0, 1e4, allow_nan=False))
def test_unit_roundtrip(n):
    assert cm3_to_ppm(ppm_to_cm3(n)) == pytest.approx(n, rel=1e-15, abs=0)
    assert ppm_to_cm3(1.0) == 1.76e17


# --------------------------------------------------------------- combining


def test_channel_validation():
    with pytest.raises(ValueError):
        DephasingChannel(Kind.NITROGEN, "x", "", -1.0)
    with pytest.raises(ValueError):
        DephasingChannel(Kind.NITROGEN, "x", "", 1.0, basis_scaling=3)
    with pytest.raises(ValueError):
        combine_channels([])
    with pytest.raises(ValueError):
        SampleSpec(n_ppm=-1)
    with pytest.raises(ValueError):
        SampleSpec(nitrogen_source="sedor")


def _rates(report):
    return {c.label: c.rate * US for c in report.channels}


def test_table_a():
    r = combine_budget(SAMPLE_A)
    rates = _rates(r)
    assert rates["strain"] == pytest.approx(0.190, rel=0.05)
    assert rates["14N"] == pytest.approx(0.0029, rel=0.05)
    assert rates["13C"] == pytest.approx(0.01, rel=0.05)
    assert rates["field gradient @ 20 G"] == pytest.approx(0.00112, rel=0.05)
    assert r.sq_rate * US == pytest.approx(0.2035, rel=0.05)
    assert r.sq_t2 / US == pytest.approx(4.9, rel=0.05)
    assert r.dq2_rate * US == pytest.approx(0.014, rel=0.05)
    assert r.dq2_t2 / US == pytest.approx(71, rel=0.05)


def test_table_b():
    r = combine_budget(SAMPLE_B)
    assert r.sq_t2 / US == pytest.approx(3.8, rel=0.05)
    assert r.dq2_t2 / US == pytest.approx(13.1, rel=0.05)
    assert _rates(r)["field gradient @ 85 G"] == pytest.approx(0.00474, rel=0.01)


def test_table_c_and_listed_total_gap():
    r = combine_budget(SAMPLE_C)
    rows = 0.140 + 0.59 + 0.15 + 0.0391 + 0.05 + 0.0022  # listed rows, 1/us
    assert r.sq_rate * US == pytest.approx(rows, rel=0.01)
    assert r.sq_rate * US == pytest.approx(1.01, rel=0.05)
    assert r.dq2_rate * US == pytest.approx(0.87, rel=0.05)
    notes = compare_totals(r, {"total_sq": 1.01, "total_dq_x2": 0.87})
    assert len(notes) == 2
    assert "total_sq" in notes[0]


def test_dq_totals_basis_rule():
    r = combine_budget(SAMPLE_A)
    magnetic = sum(c.rate for c in r.channels if c.kind != Kind.STRAIN)
    assert r.dq2_rate == pytest.approx(magnetic)
    assert r.dq_rate == pytest.approx(2 * magnetic)
    assert r.dq2_t2 == pytest.approx(2 * r.dq_t2)
    assert r.total("SQ") == (r.sq_rate, r.sq_t2)
    assert r.total("dq")[0] == r.dq_rate
    with pytest.raises(ValueError):
        r.total("TQ")


def test_report_serialization():
    r = combine_budget(SAMPLE_C)
    rec = r.as_record()
    assert [row["channel"] for row in rec["channels"]] == [c.label for c in r.channels]
    assert rec["total_sq"]["t2_us"] == pytest.approx(r.sq_t2 / US)
    text = r.to_text()
    assert "total SQ" in text and "15N (allowed)" in text


channel_st = st.builds(
    DephasingChannel,
    kind=st.sampled_from(list(Kind)),
    label=st.just("c"),
    magnitude=st.just(""),
    rate=st.floats(0, 1e7, allow_nan=False),
)
# physical rates are >= 1 s^-1; smaller additions vanish in float rounding


@settings(max_examples=200)
@given(st.lists(channel_st, min_size=1, max_size=8), channel_st.filter(lambda c: c.rate >= 1.0))
def test_additivity_and_monotonicity(chs, extra):
    r = combine_channels(chs)
    assert r.sq_rate == sum(c.rate for c in chs)
    r2 = combine_channels([*chs, extra])
    assert r2.sq_t2 < r.sq_t2 or (r.sq_t2 == math.inf and r2.sq_t2 < math.inf)
    if extra.basis_scaling == 2:
        assert r2.dq2_rate > r.dq2_rate
    else:
        assert r2.dq2_rate == r.dq2_rate


def test_channels_for_optional_channels():
    spec = SampleSpec(n_ppm=1.0, n_nv=0.4, temp_sd_kelvin=0.01)
    kinds = [c.kind for c in channels_for(spec)]
    assert kinds == [Kind.NITROGEN, Kind.NVNV, Kind.TEMPERATURE]
    assert channels_for(SampleSpec()) == []
