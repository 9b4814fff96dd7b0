"""Scenario files: YAML trees whose physical keys carry a unit suffix.

A key such as ``t2_other_us`` is split into the field ``t2_other`` and the
unit ``us``. The value is converted to the field's canonical unit when
parsed. Canonical units are SI, except for a few fields that keep the unit
their model function takes (ppm, percent, degrees, Hz/um, MHz/G).
Serialization always writes canonical suffixes, so a parse of a serialized
scenario reproduces the parsed fields exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .budget import ExtraChannel, SampleSpec
from .constants import DEFAULT, TWO_PI, Constants

# unit name -> factor to the canonical unit (canonical listed first)
UNITS: dict[str, dict[str, float]] = {
    "freq": {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9},
    "field": {"t": 1.0, "mt": 1e-3, "ut": 1e-6, "gauss": 1e-4},
    "length": {"m": 1.0, "um": 1e-6, "nm": 1e-9},
    "conc": {"ppm": 1.0},
    "percent": {"percent": 1.0},
    "angle": {"deg": 1.0},
    "strain_grad": {"hz_per_um": 1.0, "khz_per_um": 1e3, "mhz_per_um": 1e6},
    "grad_coeff": {"mhz_per_gauss": 1.0},
    "rate": {"rad_per_s": 1.0, "2pi_hz": TWO_PI, "2pi_khz": TWO_PI * 1e3},
    "rate_per_ppm": {"rad_per_s_per_ppm": 1.0, "2pi_khz_per_ppm": TWO_PI * 1e3},
    "rate_per_percent": {"rad_per_s_per_percent": 1.0, "2pi_khz_per_percent": TWO_PI * 1e3},
    "inv_time": {"per_s": 1.0, "per_us": 1e6},
    "gyro": {"hz_per_t": 1.0, "ghz_per_t": 1e9},
    "temp_coeff": {"hz_per_k": 1.0, "khz_per_k": 1e3},
    "temperature": {"k": 1.0},
}

DIMENSIONLESS = None
LIST = "list"


def _sub(schema: dict) -> tuple[str, dict]:
    return (LIST, schema)


SCHEMAS: dict[str, dict[str, Any]] = {
    "constants": {
        "d": "freq",
        "gamma": "gyro",
        "p1_gamma": "gyro",
        "dd_dt": "temp_coeff",
        "a_nn_dipolar": "rate_per_ppm",
        "a_nv_n": "rate_per_ppm",
        "a_nv_13c": "rate_per_percent",
        "a_nv_nv": "rate_per_ppm",
        "sensitivity_gamma": "gyro",
    },
    "sample": {
        "name": DIMENSIONLESS,
        "n": "conc",
        "c13": "percent",
        "strain_gradient": "strain_grad",
        "spot_length": "length",
        "grad_coeff": "grad_coeff",
        "bias": "field",
        "nitrogen_source": DIMENSIONLESS,
        "nitrogen_isotope": DIMENSIONLESS,
        "n_nv": DIMENSIONLESS,
        "temp_sd": "temperature",
        "extra_channels": _sub({"label": DIMENSIONLESS, "rate": "inv_time", "kind": DIMENSIONLESS, "method": DIMENSIONLESS}),
    },
    "spectrum": {
        "species": DIMENSIONLESS,
        "b_field": "field",
        "misalignment": "angle",
        "azimuth": "angle",
        "hwhm": "freq",
        "forbidden_amplitude": DIMENSIONLESS,
        "f_min": "freq",
        "f_max": "freq",
        "group_tol": "freq",
    },
    "budget": {"label": DIMENSIONLESS},
    "ramsey": {
        "c0": DIMENSIONLESS,
        "t2star": "time",
        "p": DIMENSIONLESS,
        "dm": DIMENSIONLESS,
        "lines": _sub({"f": "freq", "tau0": "time"}),
        "t_max": "time",
        "n_samples": DIMENSIONLESS,
        "noise_sd": DIMENSIONLESS,
        "fit": DIMENSIONLESS,
        "data_file": DIMENSIONLESS,
        "n_lines_fit": DIMENSIONLESS,
        "fit_dm": DIMENSIONLESS,
    },
    "drive": {
        "gamma_nvn": "rate",
        "delta_n": "freq",
        "dm": DIMENSIONLESS,
        "t2_other": "time",
        "omega_min": "freq",
        "omega_max": "freq",
        "n_points": DIMENSIONLESS,
        "data_file": DIMENSIONLESS,
        "fit": DIMENSIONLESS,
        "compare_min_omega": "freq",
    },
    "montecarlo": {
        "densities": "conc",
        "n_configs": DIMENSIONLESS,
        "n_spins": DIMENSIONLESS,
        "prefactor": DIMENSIONLESS,
        "nv_axis": DIMENSIONLESS,
        "exclusion_radius": "length",
        "reference_density": "conc",
        "reference_t2": "time",
        "odr_points": _sub({"n": "conc", "sigma_n": "conc", "t2": "time", "sigma_t2": "time", "label": DIMENSIONLESS}),
    },
    "sensitivity": {
        "sigma": DIMENSIONLESS,
        "tau": "time",
        "tau_d": "time",
        "contrast": DIMENSIONLESS,
        "dm": DIMENSIONLESS,
        "t2star": "time",
        "p": DIMENSIONLESS,
        "n_min": "conc",
        "n_max": "conc",
        "n_points": DIMENSIONLESS,
        "n_nv": DIMENSIONLESS,
        "t2_strain": "time",
        "t2_13c": "time",
        "delta_ref": "freq",
        "n_ref": "conc",
        "omega_drive": "freq",
        "allan_noise_sd": DIMENSIONLESS,
        "allan_samples": DIMENSIONLESS,
        "allan_cadence": "time",
        "probe_n": "conc",
    },
}

TASKS = ("spectrum", "budget", "ramsey", "drive", "montecarlo", "sensitivity")
TOP_LEVEL = {"name", "seed", "constants", "sample", "expected", "description", *TASKS}

CONSTANT_FIELDS = {
    "d": "d_hz",
    "gamma": "gamma_hz_per_t",
    "p1_gamma": "p1_gamma_hz_per_t",
    "dd_dt": "dd_dt_hz_per_k",
    "a_nn_dipolar": "a_nn_dipolar",
    "a_nv_n": "a_nv_n",
    "a_nv_13c": "a_nv_13c",
    "a_nv_nv": "a_nv_nv",
    "sensitivity_gamma": "sensitivity_gamma_hz_per_t",
}


class ScenarioError(ValueError):
    """Parse or validation failure; ``issues`` lists every problem found."""

    def __init__(self, issues: list["Issue"]) -> None:
        super().__init__("; ".join(str(i) for i in issues))
        self.issues = issues


@dataclass(frozen=True)
class Issue:
    severity: str  # "error" | "warning"
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.path}: {self.message}"


@dataclass
class Scenario:
    name: str
    seed: int
    task: str
    params: dict[str, Any]  # canonical units
    constants: dict[str, float] = field(default_factory=dict)  # canonical units
    sample: dict[str, Any] | None = None
    expected: dict[str, Any] = field(default_factory=dict)
    description: str = ""
    warnings: list[Issue] = field(default_factory=list)

    def const(self) -> Constants:
        return DEFAULT.override(**{CONSTANT_FIELDS[k]: v for k, v in self.constants.items()})

    def sample_spec(self) -> SampleSpec:
        s = dict(self.sample or {})
        extras = tuple(
            ExtraChannel(
                label=e.get("label", f"extra {i}"),
                rate_per_us=e.get("rate", 0.0) * 1e-6,
                **{k: e[k] for k in ("kind", "method") if k in e},
            )
            for i, e in enumerate(s.pop("extra_channels", []) or [])
        )
        kw = {
            "name": s.get("name", self.name),
            "n_ppm": s.get("n", 0.0),
            "c13_percent": s.get("c13", 0.0),
            "strain_gradient": s.get("strain_gradient", 0.0),
            "spot_length": s.get("spot_length", 0.0) * 1e6,
            "grad_coeff": s.get("grad_coeff", 0.0),
            "bias_gauss": s.get("bias", 0.0) * 1e4,
            "n_nv": s.get("n_nv", 0.0),
            "temp_sd_kelvin": s.get("temp_sd", 0.0),
            "extra_channels": extras,
        }
        for key in ("nitrogen_source", "nitrogen_isotope"):
            if key in s:
                kw[key] = s[key]
        return SampleSpec(**kw)


# --------------------------------------------------------------------------
# parsing


def _match_key(key: str, schema: dict) -> tuple[str, Any, float] | None:
    """(field, schema entry, factor) for ``key``; factor None means missing unit."""
    if key in schema:
        entry = schema[key]
        if entry is DIMENSIONLESS or (isinstance(entry, tuple) and entry[0] == LIST):
            return key, entry, 1.0
        return key, entry, None
    for base, entry in schema.items():
        if isinstance(entry, str) and key.startswith(base + "_"):
            unit = key[len(base) + 1 :]
            if unit in UNITS[entry]:
                return base, entry, UNITS[entry][unit]
    return None


def _convert(value: Any, factor: float, path: str, issues: list[Issue]) -> Any:
    if isinstance(value, list):
        return [_convert(v, factor, f"{path}[{i}]", issues) for i, v in enumerate(value)]
    if isinstance(value, str):
        # YAML 1.1 leaves "1e-9" (no dot) as a string
        try:
            value = float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        issues.append(Issue("error", path, f"expected a number, got {value!r}"))
        return value
    return value * factor if factor != 1.0 else value


def _parse_block(block: Any, schema: dict, path: str, issues: list[Issue]) -> dict[str, Any]:
    if block is None:
        return {}
    if not isinstance(block, dict):
        issues.append(Issue("error", path, "expected a mapping"))
        return {}
    out: dict[str, Any] = {}
    for key, value in block.items():
        key = str(key)
        where = f"{path}.{key}"
        m = _match_key(key, schema)
        if m is None:
            issues.append(Issue("warning", where, "unknown key ignored"))
            continue
        base, entry, factor = m
        if factor is None:
            units = ", ".join(UNITS[entry])
            issues.append(Issue("error", where, f"missing unit suffix (one of: {units})"))
            continue
        if base in out:
            issues.append(Issue("error", where, f"field '{base}' given twice"))
            continue
        if isinstance(entry, tuple):
            if not isinstance(value, list):
                issues.append(Issue("error", where, "expected a list"))
                continue
            out[base] = [_parse_block(v, entry[1], f"{where}[{i}]", issues) for i, v in enumerate(value)]
        elif entry is DIMENSIONLESS:
            out[base] = value
        else:
            out[base] = _convert(value, factor, where, issues)
    return out


def parse_scenario_text(text: str, source: str = "<scenario>") -> Scenario:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ScenarioError([Issue("error", where, f"YAML parse error: {getattr(exc, 'problem', exc)}")]) from None
    if not isinstance(doc, dict):
        raise ScenarioError([Issue("error", source, "top level must be a mapping")])
    issues: list[Issue] = []
    for key in doc:
        if key not in TOP_LEVEL:
            issues.append(Issue("warning", str(key), "unknown key ignored"))
    tasks = [t for t in TASKS if t in doc]
    if len(tasks) != 1:
        issues.append(Issue("error", "<root>", f"exactly one task block required, found {tasks or 'none'}"))
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        issues.append(Issue("error", "seed", "seed must be a nonnegative integer"))
        seed = 0
    constants = _parse_block(doc.get("constants"), SCHEMAS["constants"], "constants", issues)
    sample = _parse_block(doc.get("sample"), SCHEMAS["sample"], "sample", issues) if "sample" in doc else None
    task = tasks[0] if tasks else ""
    params = _parse_block(doc.get(task), SCHEMAS[task], task, issues) if task else {}
    expected = doc.get("expected") or {}
    if not isinstance(expected, dict):
        issues.append(Issue("error", "expected", "expected a mapping"))
        expected = {}
    errors = [i for i in issues if i.severity == "error"]
    if errors:
        raise ScenarioError(issues)
    scn = Scenario(
        name=str(doc.get("name", Path(source).stem)),
        seed=seed,
        task=task,
        params=params,
        constants=constants,
        sample=sample,
        expected=expected,
        description=str(doc.get("description", "")),
        warnings=[i for i in issues if i.severity == "warning"],
    )
    return scn


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError([Issue("error", str(path), f"cannot read: {exc.strerror}")]) from None
    return parse_scenario_text(text, str(path))


# --------------------------------------------------------------------------
# validation: domain invariants, no computation


def _check(issues: list[Issue], cond: bool, path: str, message: str) -> None:
    if not cond:
        issues.append(Issue("error", path, message))


def validate_scenario(scn: Scenario) -> list[Issue]:
    """Invariant violations plus any parse warnings. Empty list means clean."""
    issues = list(scn.warnings)
    try:
        scn.const()
    except (KeyError, ValueError) as exc:
        issues.append(Issue("error", "constants", str(exc)))
    for k, v in scn.constants.items():
        _check(issues, isinstance(v, (int, float)) and v > 0 or k == "dd_dt", f"constants.{k}", "must be positive")
    if scn.sample is not None:
        for k, v in scn.sample.items():
            if isinstance(v, (int, float)) and not isinstance(v, bool):
                _check(issues, v >= 0, f"sample.{k}", "must be nonnegative")
        for i, e in enumerate(scn.sample.get("extra_channels", []) or []):
            _check(issues, e.get("rate", 0) >= 0, f"sample.extra_channels[{i}].rate", "must be nonnegative")
        if not any(i.severity == "error" for i in issues):
            try:
                scn.sample_spec()
            except (ValueError, TypeError) as exc:
                issues.append(Issue("error", "sample", str(exc)))
    p = scn.params
    t = scn.task
    if t == "budget":
        _check(issues, scn.sample is not None, "sample", "budget task needs a sample block")
    elif t == "spectrum":
        _check(issues, p.get("species", "14N") in ("14N", "15N"), "spectrum.species", "must be 14N or 15N")
        _check(issues, p.get("b_field", 0) > 0, "spectrum.b_field", "must be positive")
        _check(issues, p.get("hwhm", 0.5e6) > 0, "spectrum.hwhm", "must be positive")
        _check(issues, 0 <= p.get("misalignment", 0.0) < 90, "spectrum.misalignment", "must lie in [0, 90) deg")
    elif t == "ramsey":
        if p.get("data_file") is None:
            _check(issues, 0 < p.get("c0", 0) <= 1, "ramsey.c0", "must lie in (0, 1]")
            _check(issues, p.get("t2star", 0) > 0, "ramsey.t2star", "must be positive")
            _check(issues, 0.5 <= p.get("p", 1.0) <= 3, "ramsey.p", "must lie in [0.5, 3]")
            _check(issues, 1 <= len(p.get("lines", [])) <= 3, "ramsey.lines", "need 1 to 3 lines")
            _check(issues, p.get("t_max", 0) > 0, "ramsey.t_max", "must be positive")
            _check(issues, p.get("noise_sd", 0) >= 0, "ramsey.noise_sd", "must be nonnegative")
        _check(issues, p.get("dm", 1) in (1, 2), "ramsey.dm", "must be 1 or 2")
    elif t == "drive":
        _check(issues, p.get("dm", 2) in (1, 2), "drive.dm", "must be 1 or 2")
        _check(issues, p.get("gamma_nvn", 0) >= 0, "drive.gamma_nvn", "must be nonnegative")
        _check(issues, p.get("delta_n", 1) > 0, "drive.delta_n", "must be positive")
        _check(issues, p.get("t2_other", 1) > 0, "drive.t2_other", "must be positive")
    elif t == "montecarlo":
        dens = p.get("densities", [])
        dens = dens if isinstance(dens, list) else [dens]
        _check(issues, all(d > 0 for d in dens), "montecarlo.densities", "must be positive")
        _check(issues, p.get("n_configs", 10_000) >= 100, "montecarlo.n_configs", "must be at least 100")
        _check(issues, p.get("n_spins", 400) >= 100, "montecarlo.n_spins", "must be at least 100")
        for i, pt in enumerate(p.get("odr_points", [])):
            for k in ("n", "t2"):
                _check(issues, pt.get(k, 0) > 0, f"montecarlo.odr_points[{i}].{k}", "must be positive")
            for k in ("sigma_n", "sigma_t2"):
                _check(issues, pt.get(k, 0) >= 0, f"montecarlo.odr_points[{i}].{k}", "must be nonnegative")
    elif t == "sensitivity":
        for k in ("sigma", "tau", "contrast", "t2star", "t2_strain", "t2_13c", "delta_ref", "n_ref"):
            if k in p:
                _check(issues, p[k] > 0, f"sensitivity.{k}", "must be positive")
        if "tau_d" in p:
            _check(issues, p["tau_d"] >= 0, "sensitivity.tau_d", "must be nonnegative")
        _check(issues, 0 < p.get("n_nv", 0.4) <= 1, "sensitivity.n_nv", "must lie in (0, 1]")
        _check(issues, p.get("dm", 1) in (1, 2), "sensitivity.dm", "must be 1 or 2")
    return issues


# --------------------------------------------------------------------------
# serialization


def _canonical_key(base: str, entry: Any) -> str:
    if entry is DIMENSIONLESS or isinstance(entry, tuple):
        return base
    return f"{base}_{next(iter(UNITS[entry]))}"


def _emit_block(block: dict[str, Any], schema: dict) -> dict[str, Any]:
    out = {}
    for base, value in block.items():
        entry = schema[base]
        if isinstance(entry, tuple):
            out[base] = [_emit_block(v, entry[1]) for v in value]
        else:
            out[_canonical_key(base, entry)] = value
    return out


def scenario_to_dict(scn: Scenario) -> dict[str, Any]:
    doc: dict[str, Any] = {"name": scn.name, "seed": scn.seed}
    if scn.description:
        doc["description"] = scn.description
    if scn.constants:
        doc["constants"] = _emit_block(scn.constants, SCHEMAS["constants"])
    if scn.sample is not None:
        doc["sample"] = _emit_block(scn.sample, SCHEMAS["sample"])
    doc[scn.task] = _emit_block(scn.params, SCHEMAS[scn.task])
    if scn.expected:
        doc["expected"] = scn.expected
    return doc


def dump_scenario(scn: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(scn), sort_keys=False)

