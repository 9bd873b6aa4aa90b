"""Experiment configuration, orchestration and output files.

Config files are flat ``key = value`` lines with dotted keys, ``#`` comments::

    method = mgdl
    preset = desk-2dsin-k10-mgdl1
    seed = 3
    mgdl.width = 64
    grade1.epochs = 200

Per-grade keys ``gradeK.t_max``, ``gradeK.t_min``, ``gradeK.epochs`` override the
preset's schedule lists entry by entry.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import convex, fdm, pml
from .grid import GridSpec, build_grid
from .helmholtz import StencilOrder, discretize, to_complex
from .metrics import rse
from .mgdl import MgdlModel, cumulative_eval, run_adaptive, schedules_from, train_sgdl
from .optim import LrSchedule
from .presets import HyperPreset, SgdlPlan, get_preset
from .report import RunReport

METHODS = ("mgdl", "sgdl", "fdm", "pml-mgdl", "certify")


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip()]


def _ints(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x.strip()]


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


@dataclass
class ExperimentConfig:
    method: str = "mgdl"
    preset: str | None = None
    seed: int = 0
    out: str = "runs/latest"
    deterministic: bool = False
    overrides: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.method in ("mgdl", "sgdl", "fdm") and self.preset is None and "problem.kind" not in self.overrides:
            raise ConfigError(f"method {self.method} needs a preset or problem.kind")

    @classmethod
    def from_mapping(cls, items: dict[str, str]) -> "ExperimentConfig":
        items = dict(items)
        try:
            return cls(method=items.pop("method", "mgdl"), preset=items.pop("preset", None),
                       seed=int(items.pop("seed", 0)), out=items.pop("out", "runs/latest"),
                       deterministic=_bool(items.pop("deterministic", "false")), overrides=items)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_mapping(parse_config_text(Path(path).read_text()))

    def get(self, key: str, default=None):
        return self.overrides.get(key, default)

    def echo(self) -> dict[str, Any]:
        return {"method": self.method, "preset": self.preset, "seed": self.seed, "out": self.out,
                "deterministic": self.deterministic, **{k: self.overrides[k] for k in sorted(self.overrides)}}

    # resolved settings -------------------------------------------------------

    def hyper_preset(self) -> HyperPreset:
        base = get_preset(self.preset) if self.preset else HyperPreset(
            "inline", "sin", 2, 10.0, 40, 20, (1e-2,), (1e-3,), (500,), width=64)
        o = self.overrides
        upd: dict[str, Any] = {}
        for key, attr, conv in (("problem.kind", "problem", str), ("problem.d", "d", int),
                                ("problem.kappa", "kappa", float), ("problem.m", "m", int),
                                ("problem.m_test", "m_test", int), ("problem.theta", "theta", float),
                                ("problem.phi", "phi", float), ("mgdl.width", "width", int),
                                ("mgdl.grade_tol", "grade_tol", float),
                                ("mgdl.first_layer_scale", "first_layer_scale", float),
                                ("mgdl.phase_bias", "phase_bias", _bool)):
            if key in o:
                upd[attr] = conv(o[key])
        if "mgdl.structure" in o:
            upd["structure"] = tuple(_ints(o["mgdl.structure"])) or None
        tmax = list(_floats(o["mgdl.t_max"])) if "mgdl.t_max" in o else list(base.t_max)
        tmin = list(_floats(o["mgdl.t_min"])) if "mgdl.t_min" in o else list(base.t_min)
        epochs = list(_ints(o["mgdl.epochs"])) if "mgdl.epochs" in o else list(base.epochs)
        for key, value in o.items():
            head, _, tail = key.partition(".")
            if head.startswith("grade") and head[5:].isdigit() and tail in ("t_max", "t_min", "epochs"):
                k = int(head[5:]) - 1
                target = {"t_max": tmax, "t_min": tmin, "epochs": epochs}[tail]
                while len(target) <= k:
                    target.append(target[-1])
                target[k] = int(value) if tail == "epochs" else float(value)
        n = max(len(tmax), len(tmin), len(epochs))
        for lst in (tmax, tmin, epochs):
            while len(lst) < n:
                lst.append(lst[-1])
        upd.update(t_max=tuple(tmax), t_min=tuple(tmin), epochs=tuple(epochs))
        sg = base.sgdl or SgdlPlan(2 + n - 1, 1e-3, 1e-4, sum(epochs), width=upd.get("width", base.width))
        sg_upd = {}
        for key, attr, conv in (("sgdl.hidden", "hidden", int), ("sgdl.t_max", "t_max", float),
                                ("sgdl.t_min", "t_min", float), ("sgdl.epochs", "epochs", int),
                                ("sgdl.width", "width", int), ("sgdl.n_sine", "n_sine", int)):
            if key in o:
                sg_upd[attr] = conv(o[key])
        upd["sgdl"] = dataclasses.replace(sg, **sg_upd)
        preset = dataclasses.replace(base, **upd)
        return preset

    def adaptive_config(self, preset: HyperPreset):
        cfg = preset.adaptive_config()
        if "mgdl.max_grades" in self.overrides:
            cfg.max_grades = int(self.overrides["mgdl.max_grades"])
        if "mgdl.loss_delta_tol" in self.overrides:
            cfg.loss_delta_tol = float(self.overrides["mgdl.loss_delta_tol"])
        if "mgdl.polish" in self.overrides:
            cfg.polish = _bool(self.overrides["mgdl.polish"])
        return cfg

    @property
    def order(self) -> StencilOrder:
        return StencilOrder(self.overrides.get("problem.order", "second"))


# orchestration ------------------------------------------------------------------

@dataclass
class RunArtifacts:
    report: RunReport
    fields: dict[str, tuple[np.ndarray, np.ndarray, tuple[str, ...] | None, tuple[str, ...] | None]] = \
        field(default_factory=dict)
    extra_json: dict[str, Any] = field(default_factory=dict)


def _model_values(model, x, channels):
    out = model(x)
    return to_complex(out) if channels == 2 else out[:, 0]


def _grade_metrics(report: RunReport, model: MgdlModel, preset: HyperPreset, spec, train_x, test_x):
    exact_tr, exact_te = spec.exact(train_x), spec.exact(test_x)
    for l, g in enumerate(report.grades, 1):
        sub = MgdlModel(model.input_dim, model.channels, model.grades[:l])
        g["tr_rse"] = rse(_model_values(sub, train_x, model.channels), exact_tr)
        g["te_rse"] = rse(_model_values(sub, test_x, model.channels), exact_te)


def run_experiment(cfg: ExperimentConfig) -> RunArtifacts:
    report = RunReport(config=cfg.echo(), method=cfg.method)
    runner = {"mgdl": _run_mgdl, "sgdl": _run_sgdl, "fdm": _run_fdm, "pml-mgdl": _run_pml,
              "certify": _run_certify}[cfg.method]
    return runner(cfg, report)


def _run_mgdl(cfg: ExperimentConfig, report: RunReport) -> RunArtifacts:
    preset = cfg.hyper_preset()
    spec = preset.problem_spec()
    system = discretize(spec, order=cfg.order)
    art = RunArtifacts(report)
    model, report = run_adaptive(system, cfg.adaptive_config(preset), cfg.seed, report)
    x_tr, x_te = system.grid.interior_points, preset.test_points()
    if model.grades:
        _grade_metrics(report, model, preset, spec, x_tr, x_te)
        report.metrics["tr_rse"] = report.grades[-1]["tr_rse"]
        report.metrics["te_rse"] = report.grades[-1]["te_rse"]
    u = _model_values(model, x_tr, system.channels) if model.grades else np.zeros(system.n, spec.dtype)
    report.metrics["final_loss"] = system.loss(to_channels_safe(u, system.channels))
    art.fields["field.csv"] = (x_tr, u, None, None)
    art.fields["residual.csv"] = (x_tr, system.residual(to_channels_safe(u, system.channels)), None, None)
    return art


def to_channels_safe(u, channels):
    u = np.asarray(u)
    return np.stack([u.real, u.imag], axis=1) if channels == 2 else np.real(u).reshape(-1, 1)


def _run_sgdl(cfg: ExperimentConfig, report: RunReport) -> RunArtifacts:
    preset = cfg.hyper_preset()
    spec = preset.problem_spec()
    system = discretize(spec, order=cfg.order)
    sg = preset.sgdl
    sched = LrSchedule(sg.t_max, min(sg.t_min, sg.t_max), sg.epochs)
    mlp, report = train_sgdl(system, sg.hidden, sg.width, sched, cfg.seed, sg.n_sine,
                             frequency_rescale(preset.first_layer_scale, preset.width, sg.width),
                             report=report, phase_bias=preset.phase_bias)
    x_tr, x_te = system.grid.interior_points, preset.test_points()
    vals = lambda x: to_complex(mlp(x)) if system.channels == 2 else mlp(x)[:, 0]  # noqa: E731
    if report.status == "ok":
        report.metrics["tr_rse"] = rse(vals(x_tr), spec.exact(x_tr))
        report.metrics["te_rse"] = rse(vals(x_te), spec.exact(x_te))
        for g in report.grades:
            g["tr_rse"], g["te_rse"] = report.metrics["tr_rse"], report.metrics["te_rse"]
    report.metrics["architecture"] = {"hidden": sg.hidden, "width": sg.width, "n_sine": sg.n_sine}
    art = RunArtifacts(report)
    art.fields["field.csv"] = (x_tr, vals(x_tr), None, None)
    return art


def frequency_rescale(scale: float, width: int, other: int, fan_in: int = 2) -> float:
    """Same first-layer frequency bound for a network of another width."""
    if scale == 1.0 or width == other:
        return scale
    return scale * math.sqrt((fan_in + other) / (fan_in + width))


def _run_fdm(cfg: ExperimentConfig, report: RunReport) -> RunArtifacts:
    preset = cfg.hyper_preset()
    spec = preset.problem_spec()
    out = fdm.fdm_reference_run(spec, test_points=preset.test_points(), order=cfg.order,
                                method=cfg.get("fdm.solver", "auto"))
    sol = out.pop("solution")
    report.metrics.update(out)
    art = RunArtifacts(report)
    art.fields["field.csv"] = (sol.grid.interior_points, sol.values, None, None)
    if _bool(cfg.get("fdm.dump_system", "false")):
        art.extra_json["dump_system"] = True
        art.extra_json["_system"] = fdm.assemble(spec, sol.grid, cfg.order)
    return art


def _run_pml(cfg: ExperimentConfig, report: RunReport) -> RunArtifacts:
    o = cfg.overrides
    h = float(o.get("pml.h", 10.0))
    collar = int(o.get("pml.collar", 20))
    grid, pcfg = pml.padded_grid(h, collar)
    pcfg = dataclasses.replace(pcfg, a0=float(o.get("pml.a0", 1.79)), f0=float(o.get("pml.f0", 25.0)),
                               frequency=float(o.get("pml.frequency", 25.0)))
    if "pml.velocity_csv" in o:
        vel = pml.VelocityModel.from_csv(o["pml.velocity_csv"])
    elif "pml.homogeneous_velocity" in o:
        vel = pml.VelocityModel.homogeneous(float(o["pml.homogeneous_velocity"]))
    else:
        vel = pml.VelocityModel()
    src = pml.SourceSpec((float(o.get("pml.source_x", 1000.0)), float(o.get("pml.source_y", 800.0))))
    preset = cfg.hyper_preset() if cfg.preset or "mgdl.epochs" in o else None
    if preset is None:
        preset = HyperPreset("pml", "sin", 2, 0.0, grid.m, grid.m, (1e-2, 1e-3, 1e-3), (1e-3, 1e-3, 1e-3),
                             (300, 300, 300), width=int(o.get("mgdl.width", 64)),
                             first_layer_scale=float(o.get("mgdl.first_layer_scale", 1.0)))
    acfg = cfg.adaptive_config(preset)
    model, report = pml.pml_mgdl_train(vel, pcfg, grid, src, acfg, cfg.seed)
    report.config = cfg.echo()
    # 5-point direct solve as the reference wavefield
    matrix, rhs = pml.assemble_pml_system(vel, pcfg, grid, src)
    ref, res, used = fdm.solve_linear(matrix, rhs)
    field_u = pml.wavefield(model, grid)
    report.metrics.update({"reference_solver": used, "reference_residual": res,
                           "rse_vs_5point": rse(field_u, ref) if np.any(ref) else None,
                           "h": h, "collar": collar, "grid_m": grid.m})
    art = RunArtifacts(report)
    phys = np.all((grid.interior_points >= vel.domain[0]) & (grid.interior_points <= vel.domain[1]), axis=1)
    art.fields["field.csv"] = (grid.interior_points[phys], field_u[phys], ("x", "y"), ("re", "im"))
    art.fields["reference.csv"] = (grid.interior_points[phys], ref[phys], ("x", "y"), ("re", "im"))
    return art


def _run_certify(cfg: ExperimentConfig, report: RunReport) -> RunArtifacts:
    o = cfg.overrides
    count = int(o.get("certify.instances", 5))
    ns = _ints(o.get("certify.n", "2,3,4,5,6"))
    ps = _ints(o.get("certify.p", "1,2"))
    restarts = int(o.get("certify.restarts", 20))
    epochs = int(o.get("certify.epochs", 3000))
    certs = []
    for i in range(count):
        n, p = ns[i % len(ns)], ps[i % len(ps)]
        slc = convex.random_instance(n, p, seed=cfg.seed * 1000 + i)
        width = int(o["certify.width"]) if "certify.width" in o else None
        rep = convex.certify(slc, width, restarts, epochs, seed=cfg.seed * 1000 + i)
        certs.append({"n": n, "p": p, **rep.as_dict()})
    report.metrics["certificates"] = certs
    report.metrics["max_gap"] = max((c["gap"] for c in certs), default=0.0)
    report.metrics["all_reconstructions_ok"] = all(c["reconstruction_ok"] for c in certs)
    return RunArtifacts(report)


# outputs --------------------------------------------------------------------------

LOSS_HEADER = ("grade", "epoch", "loss", "lr", "elapsed_seconds")


def write_loss_csv(report: RunReport, path: str | Path, deterministic: bool = False) -> None:
    """Timing is wall-clock, so the reproducible mode writes it as nan to keep the file byte-stable."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOSS_HEADER)
        for row in report.curves:
            elapsed = "nan" if deterministic else f"{row.elapsed_seconds:.3f}"
            w.writerow([row.grade, row.epoch, repr(float(row.loss)), repr(float(row.lr)), elapsed])


def write_outputs(artifacts: RunArtifacts | RunReport, directory: str | Path, deterministic: bool = False,
                  residual: bool = True) -> list[Path]:
    """report.json always; loss.csv when curves exist; field CSVs for every exported field."""
    if isinstance(artifacts, RunReport):
        artifacts = RunArtifacts(artifacts)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    report = artifacts.report
    path = directory / "report.json"
    report.dump(path)
    written.append(path)
    if report.curves:
        path = directory / "loss.csv"
        write_loss_csv(report, path, deterministic)
        written.append(path)
    for name, (pts, vals, names, vnames) in artifacts.fields.items():
        if name == "residual.csv" and not residual:
            continue
        path = directory / name
        fdm.write_field_csv(path, pts, vals, names, vnames)
        written.append(path)
    if "_system" in artifacts.extra_json:
        fdm.dump_system(artifacts.extra_json["_system"], directory / "system")
        written.append(directory / "system")
    return written


def load_report_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def finite_or_none(x: float) -> float | None:
    return x if math.isfinite(x) else None
