"""Task runners behind the CLI: scenario in, text/record files and metrics out."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import bath, budget, drive, ramsey, sensitivity, spin_models
from .constants import TWO_PI
from .io import dumps_record, format_columns, read_columns
from .scenario import Scenario


@dataclass
class TaskOutput:
    files: dict[str, str]  # file name -> content
    metrics: dict[str, float]
    summary: str
    records: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Check:
    name: str
    observed: float
    target: str
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<34s} observed {self.observed:.6g}  target {self.target}"


def data_path(name: str) -> Path:
    return Path(str(resources.files("nvdephase") / "data" / name))


def resolve_data_file(ref: str, base_dir: Path | None) -> Path:
    if ref.startswith("package:"):
        return data_path(ref.split(":", 1)[1])
    p = Path(ref)
    if not p.is_absolute() and base_dir is not None:
        p = base_dir / p
    return p


def check_metrics(metrics: dict[str, float], expected: dict[str, Any]) -> list[Check]:
    """Compare metrics with ``{value, rtol|atol}`` or ``{min, max}`` targets."""
    checks = []
    for name, spec in expected.items():
        obs = metrics.get(name, math.nan)
        if not isinstance(spec, dict):
            spec = {"value": spec, "rtol": 0.05}
        if "value" in spec:
            v = float(spec["value"])
            if "atol" in spec:
                tol = float(spec["atol"])
                ok = abs(obs - v) <= tol
                target = f"{v:g} +- {tol:g}"
            else:
                rtol = float(spec.get("rtol", 0.05))
                ok = abs(obs - v) <= rtol * abs(v)
                target = f"{v:g} (rtol {rtol:g})"
        else:
            lo = float(spec.get("min", -math.inf))
            hi = float(spec.get("max", math.inf))
            ok = lo <= obs <= hi
            target = f"[{lo:g}, {hi:g}]"
        checks.append(Check(name, float(obs), target, bool(ok and math.isfinite(obs))))
    return checks


# --------------------------------------------------------------------------


def run_budget(scn: Scenario, **_: Any) -> TaskOutput:
    report = budget.combine_budget(scn.sample_spec(), scn.const())
    listed = {k: v["value"] for k, v in scn.expected.items() if k in ("total_sq", "total_dq_x2") and isinstance(v, dict)}
    report.notes.extend(budget.compare_totals(report, listed))
    metrics = {f"rate[{c.label}]": c.rate * 1e-6 for c in report.channels}
    metrics.update(
        total_sq=report.sq_rate * 1e-6,
        total_dq_x2=report.dq2_rate * 1e-6,
        t2_sq_us=report.sq_t2 * 1e6,
        t2_dq_x2_us=report.dq2_t2 * 1e6,
        t2_dq_us=report.dq_t2 * 1e6,
    )
    text = report.to_text()
    return TaskOutput({"budget.txt": text, "budget.json": dumps_record(report.as_record())}, metrics, text, report.as_record())


def run_spectrum(scn: Scenario, **_: Any) -> TaskOutput:
    p = scn.params
    species = spin_models.N15 if p.get("species", "14N") == "15N" else spin_models.N14
    hwhm = p.get("hwhm", 0.5e6)
    f_min, f_max = p.get("f_min", 100e6), p.get("f_max", 500e6)
    freqs = np.arange(f_min, f_max + hwhm / 8, hwhm / 4)
    spec = spin_models.p1_deer_spectrum(
        p["b_field"],
        p.get("misalignment", 0.0),
        species,
        hwhm,
        azimuth_deg=p.get("azimuth", 0.0),
        forbidden_amplitude=p.get("forbidden_amplitude", 0.1),
        freqs=freqs,
        const=scn.const(),
    )
    groups = spec.groups(p.get("group_tol", 1e3))
    line_rows = [
        (ln.frequency, ln.relative_amplitude, float(ln.allowed), ln.orientation, ln.m_i) for ln in spec.lines
    ]
    files = {
        "lines.txt": format_columns(["freq_hz", "amplitude", "allowed", "orientation", "m_i"], line_rows),
        "groups.txt": format_columns(["freq_hz", "weight"], groups),
        "spectrum.txt": format_columns(["freq_hz", "amplitude"], np.column_stack((spec.frequency, spec.amplitude))),
    }
    gf = np.array([g[0] for g in groups])
    metrics = {
        "n_groups": float(len(groups)),
        "group_f_min_mhz": float(gf.min() / 1e6),
        "group_f_max_mhz": float(gf.max() / 1e6),
    }
    for i, (f, w) in enumerate(groups):
        metrics[f"group{i}_mhz"] = f / 1e6
        metrics[f"group{i}_weight"] = w
    summary = "\n".join(f"group {i}: {f / 1e6:10.4f} MHz  weight {w:g}" for i, (f, w) in enumerate(groups)) + "\n"
    return TaskOutput(files, metrics, summary, {"groups": groups})


def run_ramsey(scn: Scenario, base_dir: Path | None = None, **_: Any) -> TaskOutput:
    p = scn.params
    files: dict[str, str] = {}
    if p.get("data_file"):
        data = read_columns(resolve_data_file(p["data_file"], base_dir), 2)
        t, s = data[:, 0], data[:, 1]
        n_lines = int(p.get("n_lines_fit", 1))
    else:
        params = ramsey.RamseyParams(
            p["c0"], p["t2star"], p.get("p", 1.0), tuple((ln["f"], ln.get("tau0", 0.0)) for ln in p["lines"]), int(p.get("dm", 1))
        )
        t = np.linspace(0.0, p["t_max"], int(p.get("n_samples", 400)))
        s = ramsey.synthesize_ramsey(params, t, p.get("noise_sd", 0.0), scn.seed)
        files["signal.txt"] = format_columns(["time_s", "signal"], np.column_stack((t, s)))
        n_lines = int(p.get("n_lines_fit", len(params.lines)))
    freq, mag = ramsey.ramsey_spectrum(t, s)
    files["spectrum.txt"] = format_columns(["freq_hz", "magnitude"], np.column_stack((freq, mag)))
    metrics = {"spectrum_peak_hz": float(freq[np.argmax(mag)])}
    summary = f"spectrum peak {metrics['spectrum_peak_hz'] / 1e6:.4f} MHz\n"
    record: dict[str, Any] = {}
    if p.get("fit", True):
        fit = ramsey.fit_ramsey(t, s, n_lines, dm=int(p.get("fit_dm", 1)))
        record = fit.as_record()
        files["fit.json"] = dumps_record(record)
        metrics.update(fit_c0=fit.params.c0, fit_t2star_us=fit.params.t2star * 1e6, fit_p=fit.params.p)
        for i, (f, t0) in enumerate(fit.params.lines):
            metrics[f"fit_f{i}_mhz"] = f / 1e6
        summary += f"fit: C0 {fit.params.c0:.4f}  T2* {fit.params.t2star * 1e6:.4f} us  p {fit.params.p:.3f}\n"
        summary += "".join(f"     line {i}: {f / 1e6:.5f} MHz\n" for i, (f, _) in enumerate(fit.params.lines))
    return TaskOutput(files, metrics, summary, record)


def run_drive(scn: Scenario, base_dir: Path | None = None, **_: Any) -> TaskOutput:
    p = scn.params
    dm = int(p.get("dm", 2))
    model = drive.DriveModel(p["gamma_nvn"], p["delta_n"], dm, p.get("t2_other", math.inf))
    omegas = np.geomspace(p.get("omega_min", 1e3), p.get("omega_max", 1e7), int(p.get("n_points", 201)))
    files = {"model_curve.txt": format_columns(["omega_hz", "t2star_s"], drive.model_curve(model, omegas))}
    metrics = {
        "t2_zero_drive_us": float(drive.total_t2_with_drive(model, 0.0)) * 1e6,
        "t2_saturation_us": float(drive.total_t2_with_drive(model, 1e3 * model.delta_n)) * 1e6,
    }
    summary = (
        f"model: T2*(0) = {metrics['t2_zero_drive_us']:.3f} us, "
        f"T2*(1000 delta) = {metrics['t2_saturation_us']:.3f} us\n"
    )
    record: dict[str, Any] = {"model": {"gamma_nvn_rad_s": model.gamma_nvn, "delta_n_hz": model.delta_n, "dm": dm, "t2_other_s": model.t2_other}}
    if p.get("data_file"):
        data = read_columns(resolve_data_file(p["data_file"], base_dir), 3)
        w, t2, sig = data.T
        sel = w >= p.get("compare_min_omega", 0.0)
        dev = np.abs(drive.total_t2_with_drive(model, w[sel]) / t2[sel] - 1.0)
        metrics["model_max_rel_dev"] = float(dev.max())
        summary += f"model vs data ({sel.sum()} points): max relative deviation {dev.max():.3f}\n"
        # noiseless round trip at the data drive values
        truth = drive.total_t2_with_drive(model, w)
        rt = drive.fit_drive_model([(a, b, 0.0) for a, b in zip(w, truth)], dm)
        metrics["roundtrip_max_rel"] = max(
            abs(rt.model.gamma_nvn / model.gamma_nvn - 1),
            abs(rt.model.delta_n / model.delta_n - 1),
            abs(rt.model.t2_other / model.t2_other - 1) if math.isfinite(model.t2_other) else 0.0,
        )
        if p.get("fit", True):
            fit = drive.fit_drive_model(list(zip(w, t2, sig)), dm)
            record["fit"] = fit.as_record()
            files["fit.json"] = dumps_record(fit.as_record())
            files["fit_curve.txt"] = format_columns(["omega_hz", "t2star_s"], drive.model_curve(fit.model, omegas))
            metrics.update(
                fit_gamma_2pi_khz=fit.model.gamma_nvn / TWO_PI / 1e3,
                fit_delta_khz=fit.model.delta_n / 1e3,
                fit_t2_other_us=fit.model.t2_other * 1e6,
                fit_delta_identifiable=float(fit.delta_identifiable),
            )
            summary += (
                f"fit: gamma = 2pi x {metrics['fit_gamma_2pi_khz']:.3f} kHz, delta = {metrics['fit_delta_khz']:.2f} kHz, "
                f"T2_other = {metrics['fit_t2_other_us']:.2f} us\n"
            )
    return TaskOutput(files, metrics, summary, record)


def run_montecarlo(scn: Scenario, threads: int = 1, **_: Any) -> TaskOutput:
    p = scn.params
    dens = p.get("densities", [])
    dens = dens if isinstance(dens, list) else [dens]
    kw = dict(
        n_spins=int(p.get("n_spins", bath.DEFAULT_SPINS)),
        prefactor=p.get("prefactor", bath.SPIN_PREFACTOR),
        nv_axis=tuple(p.get("nv_axis", (0.0, 0.0, 1.0))),
        exclusion_radius=p.get("exclusion_radius", bath.EXCLUSION_RADIUS),
        threads=threads,
    )
    files: dict[str, str] = {}
    metrics: dict[str, float] = {}
    summary = ""
    record: dict[str, Any] = {}
    if dens:
        rows = []
        for k, n in enumerate(dens):
            res = bath.ensemble_t2(n, int(p.get("n_configs", 10_000)), [scn.seed, k], **kw)
            rows.append((n, res.t2_ensemble * 1e6, res.q10, res.q90))
        rows_a = np.array(rows)
        files["sweep.txt"] = format_columns(["density_ppm", "t2_us", "q10_rad_s", "q90_rad_s"], rows_a)
        if len(dens) >= 2:
            slope = np.polyfit(np.log(rows_a[:, 0]), np.log(1.0 / rows_a[:, 1]), 1)[0]
            metrics["loglog_slope"] = float(slope)
        ref_n = p.get("reference_density", 1.0)
        ref_t2 = p.get("reference_t2", 9.6e-6)
        pred = ref_t2 * ref_n / rows_a[:, 0] * 1e6
        metrics["max_rel_dev_from_reference"] = float(np.max(np.abs(rows_a[:, 1] / pred - 1.0)))
        for n, t2, *_ in rows:
            metrics[f"t2_us[{n:g}ppm]"] = t2
        summary += "".join(f"{n:8.3g} ppm  T2* {t2:10.4f} us\n" for n, t2, *_ in rows)
        record["sweep"] = rows
    pts = p.get("odr_points", [])
    if pts:
        cps = [bath.ConcentrationPoint(q["n"], q.get("sigma_n", 0.0), q["t2"], q.get("sigma_t2", 0.0)) for q in pts]
        fit = bath.odr_fit_linear(cps)
        metrics["odr_a_2pi_khz_per_ppm"] = fit.slope / TWO_PI / 1e3
        metrics["odr_stderr_2pi_khz_per_ppm"] = fit.stderr / TWO_PI / 1e3
        metrics["odr_inv_a_us_ppm"] = 1e6 / fit.slope
        record["odr"] = {
            "slope_rad_s_per_ppm": fit.slope,
            "stderr": fit.stderr,
            "chi2": fit.chi2,
            "dof": fit.dof,
            "weighted": fit.weighted,
            "points": [dict(q) for q in pts],
        }
        files["odr.json"] = dumps_record(record["odr"])
        summary += (
            f"ODR: A = 2pi x {metrics['odr_a_2pi_khz_per_ppm']:.2f} +- {metrics['odr_stderr_2pi_khz_per_ppm']:.2f} kHz/ppm "
            f"(1/A = {metrics['odr_inv_a_us_ppm']:.2f} us ppm)\n"
        )
    return TaskOutput(files, metrics, summary, record)


def run_sensitivity(scn: Scenario, **_: Any) -> TaskOutput:
    p = scn.params
    const = scn.const()
    files: dict[str, str] = {}
    metrics: dict[str, float] = {}
    summary = ""
    if "sigma" in p and "tau" in p:
        sp = sensitivity.SensitivityParams(p["sigma"], p["tau"], p.get("tau_d", 0.0), p.get("contrast", 1.0), int(p.get("dm", 1)))
        eta = sensitivity.ramsey_sensitivity(sp, const.sensitivity_gamma_hz_per_t)
        metrics["eta_nt_per_rthz"] = eta * 1e9
        summary += f"eta = {eta * 1e9:.4f} nT/sqrt(Hz)\n"
    if "t2star" in p:
        tau = sensitivity.optimal_tau(p["t2star"], p.get("p", 1.0), p.get("tau_d", 0.0))
        metrics["tau_opt_over_t2"] = tau / p["t2star"]
        summary += f"tau_opt = {tau * 1e6:.4f} us ({tau / p['t2star']:.4f} T2*)\n"
    fom_keys = {"n_min", "n_max", "n_points", "n_nv", "t2_strain", "t2_13c", "delta_ref", "n_ref", "omega_drive", "probe_n"}
    if fom_keys & set(p):
        spec = sensitivity.FomSpec(
            n_min_ppm=p.get("n_min", 0.01),
            n_max_ppm=p.get("n_max", 100.0),
            n_points=int(p.get("n_points", 201)),
            n_nv=p.get("n_nv", 0.4),
            t2_strain=p.get("t2_strain", 5e-6),
            t2_13c=p.get("t2_13c", 100e-6),
            a_nv_n=const.a_nv_n,
            a_nv_nv=const.a_nv_nv,
            delta_ref_hz=p.get("delta_ref", 80e3),
            n_ref_ppm=p.get("n_ref", 0.75),
        )
        omega = p.get("omega_drive", 2e6)
        sq, dq, dqd = sensitivity.eta_n_sweep(spec, ((1, 0.0), (2, 0.0), (2, omega)))
        files["eta_n.txt"] = format_columns(
            ["n_ppm", "eta_sq", "eta_dq", "eta_dq_drive"], np.column_stack((sq.n_ppm, sq.eta, dq.eta, dqd.eta))
        )
        probe = p.get("probe_n", 100.0)
        ratio = float(sensitivity.eta_n_raw(spec, probe, 2) / sensitivity.eta_n_raw(spec, probe, 1))
        ordered = bool(np.all(dqd.eta <= dq.eta * (1 + 1e-12)) and np.all(dq.eta <= sq.eta * (1 + 1e-12)))
        metrics.update(
            crossover_ppm=sensitivity.crossover_ppm(spec),
            dq_sq_ratio_at_probe=ratio,
            curves_ordered=float(ordered),
        )
        summary += (
            f"eta_N crossover at {metrics['crossover_ppm']:.3f} ppm; DQ/SQ at {probe:g} ppm = {ratio:.4f}; "
            f"ordering {'holds' if ordered else 'violated'}\n"
        )
    if "allan_noise_sd" in p:
        n = int(p.get("allan_samples", 100_000))
        cad = p.get("allan_cadence", 1.0)
        series = np.random.default_rng(scn.seed).normal(0.0, p["allan_noise_sd"], n)
        taus = cad * np.unique(np.geomspace(1, n // 100, 20).astype(int))
        used, adev = sensitivity.allan_deviation(series, cad, taus)
        files["allan.txt"] = format_columns(["tau_s", "adev"], np.column_stack((used, adev)))
        metrics["allan_slope"] = float(np.polyfit(np.log(used), np.log(adev), 1)[0])
        summary += f"Allan slope {metrics['allan_slope']:.4f}\n"
    return TaskOutput(files, metrics, summary, {"metrics": metrics})


RUNNERS: dict[str, Callable[..., TaskOutput]] = {
    "budget": run_budget,
    "spectrum": run_spectrum,
    "ramsey": run_ramsey,
    "drive": run_drive,
    "montecarlo": run_montecarlo,
    "sensitivity": run_sensitivity,
}


def run_task(scn: Scenario, *, threads: int = 1, base_dir: Path | None = None) -> TaskOutput:
    out = RUNNERS[scn.task](scn, threads=threads, base_dir=base_dir)
    out.files["metrics.json"] = dumps_record(out.metrics)
    return out
