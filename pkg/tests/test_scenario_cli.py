import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvdephase import cli, tasks
from nvdephase.io import dumps_record, format_columns, read_columns, sha256_file
from nvdephase.lm import FitError
from nvdephase.scenario import (
    ScenarioError,
    dump_scenario,
    load_scenario,
    parse_scenario_text,
    validate_scenario,
)
from nvdephase.tasks import check_metrics

BUDGET = """
name: tiny
seed: 3
constants:
  a_nn_dipolar_2pi_khz_per_ppm: 9.1
sample:
  n_ppm: 0.05
  c13_percent: 0.01
  strain_gradient_khz_per_um: 2.8
  spot_length_um: 21.6
  grad_coeff_mhz_per_gauss: 0.000056
  bias_gauss: 20
budget: {}
expected:
  total_sq: {value: 0.2035, rtol: 0.05}
"""

MC = """
name: mc
seed: 5
montecarlo:
  densities_ppm: [1, 3]
  n_configs: 600
  n_spins: 200
"""


# ------------------------------------------------------------------ parsing


def test_units_converted():
    scn = parse_scenario_text(BUDGET)
    assert scn.task == "budget"
    assert scn.seed == 3
    assert scn.sample["strain_gradient"] == pytest.approx(2800.0)
    assert scn.sample["spot_length"] == pytest.approx(21.6e-6)
    assert scn.sample["bias"] == pytest.approx(2e-3)
    assert scn.constants["a_nn_dipolar"] == pytest.approx(2 * math.pi * 9.1e3)
    spec = scn.sample_spec()
    assert spec.spot_length == pytest.approx(21.6)
    assert spec.bias_gauss == pytest.approx(20)


def test_drive_units():
    scn = parse_scenario_text("drive: {gamma_nvn_2pi_khz: 7, delta_n_khz: 80, t2_other_us: 27}")
    assert scn.params == pytest.approx({"gamma_nvn": 2 * math.pi * 7e3, "delta_n": 8e4, "t2_other": 27e-6})


def test_missing_unit_is_error():
    with pytest.raises(ScenarioError) as info:
        parse_scenario_text("drive: {gamma_nvn_2pi_khz: 7, delta_n: 80}")
    assert any("missing unit" in i.message and i.path == "drive.delta_n" for i in info.value.issues)


def test_unknown_keys_warn():
    scn = parse_scenario_text("colour: red\ndrive: {delta_n_khz: 80, speed_mph: 3}")
    paths = {w.path for w in scn.warnings}
    assert paths == {"colour", "drive.speed_mph"}


def test_task_count_and_yaml_errors():
    with pytest.raises(ScenarioError):
        parse_scenario_text("drive: {}\nbudget: {}")
    with pytest.raises(ScenarioError):
        parse_scenario_text("name: x")
    with pytest.raises(ScenarioError) as info:
        parse_scenario_text("drive:\n  delta_n_khz: [1, 2\n", "bad.yaml")
    assert info.value.issues[0].path.startswith("bad.yaml:")
    with pytest.raises(ScenarioError):
        parse_scenario_text("drive: {delta_n_khz: fast}")
    with pytest.raises(ScenarioError):
        parse_scenario_text("seed: -1\ndrive: {}")
    with pytest.raises(ScenarioError):
        load_scenario("/nonexistent/scenario.yaml")


def test_validation_flags_invariants():
    scn = parse_scenario_text("sample: {n_ppm: -1}\nbudget: {}")
    issues = validate_scenario(scn)
    assert any(i.severity == "error" and i.path == "sample.n" for i in issues)
    scn = parse_scenario_text("ramsey: {c0: 2, t2star_us: 5, lines: [{f_mhz: 1}], t_max_us: 20}")
    assert any(i.path == "ramsey.c0" for i in validate_scenario(scn))
    assert validate_scenario(parse_scenario_text(BUDGET)) == []


@settings(max_examples=60, deadline=None)
@given(
    g=st.floats(0, 1e6),
    d=st.floats(1, 1e8),
    t2=st.floats(1e-9, 1),
    dm=st.sampled_from([1, 2]),
    seed=st.integers(0, 2**31),
)
def test_dump_parse_roundtrip(g, d, t2, dm, seed):
    src = parse_scenario_text(f"seed: {seed}\ndrive: {{gamma_nvn_rad_per_s: {g!r}, delta_n_hz: {d!r}, t2_other_s: {t2!r}, dm: {dm}}}")
    back = parse_scenario_text(dump_scenario(src))
    assert back.params == src.params
    assert back.seed == src.seed


def test_dump_roundtrip_bundled():
    for name in ("table_s5.yaml", "fig4c.yaml", "fig_s9.yaml"):
        src = load_scenario(tasks.data_path(name))
        back = parse_scenario_text(dump_scenario(src))
        assert back.params == src.params
        assert back.sample == src.sample
        assert back.expected == src.expected


# ----------------------------------------------------------------------- io


def test_columns_roundtrip(tmp_path):
    rows = np.array([[1.0, -2.5e-7], [3.0, 4.0e12]])
    p = tmp_path / "x.txt"
    p.write_text(format_columns(["a", "b"], rows))
    assert np.array_equal(read_columns(p, 2), rows)
    p.write_text("# c\n1, 2\n\n3 4\n")
    assert read_columns(p).tolist() == [[1, 2], [3, 4]]
    p.write_text("1 2\n3\n")
    with pytest.raises(ValueError, match=r"x\.txt:2"):
        read_columns(p, 2)


def test_records_are_strict_json():
    text = dumps_record({"b": float("nan"), "a": [float("inf"), np.float64(1.5)]})
    obj = json.loads(text)
    assert list(obj) == ["a", "b"]
    assert obj["a"][1] == 1.5


def test_check_metrics_forms():
    checks = check_metrics({"x": 1.0, "y": 5.0}, {"x": {"value": 1.04, "rtol": 0.05}, "y": {"min": 0, "max": 4}, "z": {"value": 1}})
    assert [c.passed for c in checks] == [True, False, False]
    assert checks[0].line().startswith("PASS")


# ---------------------------------------------------------------------- CLI


def _write(tmp_path, text, name="s.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_cli_budget_run(tmp_path, capsys):
    scn = _write(tmp_path, BUDGET)
    out = tmp_path / "out"
    assert cli.main(["budget", "--scenario", str(scn), "--out", str(out)]) == 0
    rec = json.loads((out / "run_record.json").read_text())
    assert rec["scenario_sha256"] == sha256_file(scn)
    assert rec["seed"] == 3
    for name, digest in rec["outputs"].items():
        assert sha256_file(out / name) == digest
    assert "PASS" in capsys.readouterr().out


def test_cli_records_format(tmp_path, capsys):
    scn = _write(tmp_path, BUDGET)
    assert cli.main(["budget", "--scenario", str(scn), "--out", str(tmp_path / "o"), "--format", "records"]) == 0
    doc = json.loads(capsys.readouterr().out.split("\nPASS")[0])
    assert doc["name"] == "tiny"


def test_cli_exit_codes(tmp_path, monkeypatch):
    out = str(tmp_path / "o")
    bad_target = _write(tmp_path, BUDGET.replace("value: 0.2035", "value: 0.5"), "t.yaml")
    assert cli.main(["budget", "--scenario", str(bad_target), "--out", out]) == 0  # checks print only
    assert cli.main(["reproduce", "nope"]) == 2
    assert cli.main(["budget", "--out", out]) == 2
    assert cli.main(["drive-fit", "--scenario", str(_write(tmp_path, BUDGET)), "--out", out]) == 2
    assert cli.main(["budget", "--scenario", str(_write(tmp_path, "budget: {}\nsample: {n_ppm: -1}", "n.yaml")), "--out", out]) == 2
    assert cli.main(["budget", "--scenario", str(tmp_path / "missing.yaml"), "--out", out]) == 2
    assert cli.main(["montecarlo", "--scenario", str(_write(tmp_path, MC, "m.yaml")), "--threads", "0"]) == 2

    def boom(*a, **k):
        raise FitError("no", None)

    monkeypatch.setattr(cli, "run_task", boom)
    assert cli.main(["budget", "--scenario", str(_write(tmp_path, BUDGET)), "--out", out]) == 1


def test_cli_reproduce_failure_exit(tmp_path, monkeypatch):
    monkeypatch.setitem(cli.REPRODUCE_TARGETS, "table-s3", str(_write(tmp_path, BUDGET.replace("value: 0.2035", "value: 0.5"))))
    monkeypatch.setattr(cli, "data_path", lambda name: Path(name))
    assert cli.main(["reproduce", "table-s3", "--out", str(tmp_path / "o")]) == 1


def test_cli_validate(tmp_path, capsys):
    assert cli.main(["validate", str(_write(tmp_path, BUDGET))]) == 0
    assert "ok (budget)" in capsys.readouterr().out
    assert cli.main(["validate", str(_write(tmp_path, "budget: {}\nsample: {n_ppm: -1}", "n.yaml"))]) == 2
    assert cli.main(["validate", str(_write(tmp_path, "drive: {delta_n: 1}", "u.yaml"))]) == 2
    assert cli.main(["validate"]) == 2


def test_cli_seed_override(tmp_path):
    scn = _write(tmp_path, MC, "m.yaml")
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["montecarlo", "--scenario", str(scn), "--out", str(a)])
    cli.main(["montecarlo", "--scenario", str(scn), "--out", str(b), "--seed", "6"])
    assert json.loads((b / "run_record.json").read_text())["seed"] == 6
    assert (a / "sweep.txt").read_bytes() != (b / "sweep.txt").read_bytes()


def _outputs(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "run_record.json"}


def test_cli_thread_determinism(tmp_path):
    scn = _write(tmp_path, MC, "m.yaml")
    runs = []
    for threads in (1, 4, 1):
        out = tmp_path / f"t{threads}_{len(runs)}"
        assert cli.main(["montecarlo", "--scenario", str(scn), "--out", str(out), "--threads", str(threads)]) == 0
        runs.append(_outputs(out))
    assert runs[0] == runs[1] == runs[2]
    assert runs[0]
