"""Experiment driver: presets, config parsing, trajectory persistence, and
summary statistics.

Output contract:
  * records go to CSV with the fixed header ``CSV_HEADER``, floats printed
    with 17 significant digits (lossless round trip), absent values empty;
  * the run summary goes to ``<out>.summary.json`` with deterministic
    formatting; wall time is reported in the returned summary only, so the
    persisted files are bit-identical across reruns of the same config.
"""
from __future__ import annotations

import concurrent.futures
import dataclasses
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diagnostics import rotation_z_generator
from .fields import FieldModel, builtin_field, polynomial_field
from .integrators import IterationScheme, SolverSettings
from .minkowski import Position4, Velocity4
from .trajectory import (METHODS, NONREL_METHODS, RECORD_COLUMNS,
                         integrate, integrate_nonrel, limit_study)

CSV_HEADER = ("n,tau,t,x1,x2,x3,gamma,u1,u2,u3,energy,energy_rel_err,"
              "mass_shell,discrete_energy,noether")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class Preset:
    field_factory: object
    x0: tuple
    u0: tuple
    h: float
    tau_end: float
    record_noether: bool = False


PRESETS = {
    "example1": Preset(lambda: builtin_field("example1"),
                       (0.0, 1.0, 0.1), (0.09, 0.05, 0.2), 0.02, 1e4),
    "example2": Preset(lambda: builtin_field("example2"),
                       (0.0, 1.0, 0.1), (0.09, 0.55, 0.3), 0.001, 1e3),
    "example3": Preset(lambda: builtin_field("example3"),
                       (0.0, 1.0, 0.1), (0.09, 0.55, 0.3), 0.004, 1e4),
    "axisym": Preset(lambda: builtin_field("axisym"),
                     (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), 0.01, 1e3,
                     record_noether=True),
    "constant-eb": Preset(lambda: builtin_field("constant-eb"),
                          (0.0, 1.0, 0.1), (0.09, 0.05, 0.2), 0.02, 2e3),
}


@dataclass
class ExperimentConfig:
    """Everything a single run needs; mirrors the JSON config schema."""

    method: str
    h: float
    tau_end: float
    preset: str | None = None
    field: dict | None = None
    x0: tuple | None = None
    u0: tuple | None = None
    out: str | None = None
    record_every: int = 1
    tol: float = 1e-14
    max_iter: int = 50
    scheme: str = "fixed-point"
    perturb: dict | None = None
    record_noether: bool | None = None
    epsilon: float | None = None

    @staticmethod
    def from_dict(data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(ExperimentConfig)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"method", "h", "tau_end"} - set(data)
        if missing and "preset" in data:
            preset = PRESETS.get(data["preset"])
            if preset is None:
                raise ConfigError(f"unknown preset {data['preset']!r}")
            data = dict(data)
            data.setdefault("h", preset.h)
            data.setdefault("tau_end", preset.tau_end)
            missing = {"method", "h", "tau_end"} - set(data)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        return ExperimentConfig(**data)

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; "
                              f"choose from {METHODS}")
        if not (isinstance(self.h, (int, float)) and self.h > 0):
            raise ConfigError("h must be positive")
        if not (isinstance(self.tau_end, (int, float)) and self.tau_end > 0):
            raise ConfigError("tau_end must be positive")
        if int(self.record_every) < 1:
            raise ConfigError("record_every must be >= 1")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if int(self.max_iter) < 1:
            raise ConfigError("max_iter must be >= 1")
        if self.scheme not in ("fixed-point", "newton"):
            raise ConfigError("scheme must be 'fixed-point' or 'newton'")
        if self.preset is None and self.field is None:
            raise ConfigError("either a preset or an inline field is required")
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; "
                              f"choose from {sorted(PRESETS)}")
        if self.n_steps() < 1:
            raise ConfigError("tau_end must cover at least one step")
        if self.perturb is not None:
            base = self.perturb.get("base")
            count = self.perturb.get("count")
            if not (isinstance(base, (int, float)) and base > 0):
                raise ConfigError("perturb.base must be positive")
            if not (isinstance(count, int) and count >= 1):
                raise ConfigError("perturb.count must be a positive integer")

    def n_steps(self) -> int:
        return int(round(self.tau_end / self.h))

    def build_model(self) -> FieldModel:
        if self.field is not None:
            phi_terms = self.field.get("phi", [])
            a_terms = self.field.get("A")
            try:
                return polynomial_field(phi_terms, a_terms)
            except ValueError as e:
                raise ConfigError(f"bad inline field: {e}") from None
        return PRESETS[self.preset].field_factory()

    def initial_data(self):
        preset = PRESETS.get(self.preset) if self.preset else None
        x0 = self.x0 if self.x0 is not None else (preset.x0 if preset else None)
        u0 = self.u0 if self.u0 is not None else (preset.u0 if preset else None)
        if x0 is None or u0 is None:
            raise ConfigError("x0 and u0 are required without a preset")
        return np.asarray(x0, dtype=float), np.asarray(u0, dtype=float)

    def solver_settings(self) -> SolverSettings:
        scheme = (IterationScheme.NEWTON if self.scheme == "newton"
                  else IterationScheme.FIXED_POINT)
        return SolverSettings(tol=self.tol, max_iter=int(self.max_iter),
                              scheme=scheme)

    def wants_noether(self) -> bool:
        if self.record_noether is not None:
            return bool(self.record_noether)
        return bool(self.preset and PRESETS[self.preset].record_noether)

    def default_out(self) -> str:
        tag = self.preset or "field"
        return f"{tag}_{self.method}_h{self.h:g}.csv"


def format_float(v: float) -> str:
    """17-significant-digit decimal rendering; empty string for NaN."""
    if math.isnan(v):
        return ""
    return f"{v:.17g}"


def write_records_csv(path, records: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in records:
            cells = [str(int(row[0]))]
            cells += [format_float(v) for v in row[1:]]
            fh.write(",".join(cells) + "\n")


def read_records_csv(path) -> np.ndarray:
    """Read a records CSV back into the numeric layout (NaN for empty)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no record file at {path}")
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header in {path}: {header!r}")
        rows = []
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            rows.append([float(c) if c else math.nan
                         for c in line.split(",")])
    if not rows:
        raise ValueError(f"record file {path} has no data rows")
    out = np.array(rows, dtype=float)
    if out.shape[1] != len(RECORD_COLUMNS):
        raise ValueError(f"record file {path} has {out.shape[1]} columns")
    return out


def recorded_stats(records: np.ndarray) -> dict:
    """Maxima over the recorded rows only; recomputable from the CSV."""
    def dev(col):
        vals = records[:, col]
        if math.isnan(vals[0]):
            return float("nan")
        return float(np.max(np.abs(vals - vals[0])))

    return {
        "max_energy_rel_err": float(np.max(np.abs(records[:, 11]))),
        "max_mass_shell_dev": dev(12),
        "max_discrete_energy_dev": dev(13),
        "max_noether_dev": dev(14),
    }


def _run_single(cfg: ExperimentConfig, model, x0, u0, out_path: Path) -> dict:
    settings = cfg.solver_settings()
    gen = rotation_z_generator() if cfg.wants_noether() else None
    start = time.perf_counter()
    if cfg.method in NONREL_METHODS:
        result = integrate_nonrel(model, cfg.method, x0, u0, cfg.h,
                                  cfg.n_steps(), int(cfg.record_every),
                                  settings)
    else:
        result = integrate(model, cfg.method, Position4(0.0, x0),
                           Velocity4.on_shell(u0), cfg.h, cfg.n_steps(),
                           int(cfg.record_every), settings, gen=gen)
    wall = time.perf_counter() - start
    write_records_csv(out_path, result.records)

    summary = dataclasses.asdict(result.summary)
    summary["recorded"] = recorded_stats(result.records)
    summary["records_path"] = str(out_path)
    summary_path = out_path.with_suffix(out_path.suffix + ".summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    summary["summary_path"] = str(summary_path)
    summary["wall_time_s"] = wall
    return summary


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Integrate per the config, write records and summary files.

    With a perturbation list the runs (one per perturbed initial value)
    execute concurrently on the shared immutable field model and write
    suffixed files; the returned summary holds one entry per run.
    """
    cfg.validate()
    model = cfg.build_model()
    x0, u0 = cfg.initial_data()
    out = Path(cfg.out) if cfg.out else Path(cfg.default_out())

    if cfg.perturb is None:
        return _run_single(cfg, model, x0, u0, out)

    base = float(cfg.perturb["base"])
    count = int(cfg.perturb["count"])
    jobs = []
    for k in range(count):
        xk = x0.copy()
        xk[1] += k * base
        path = out.with_name(f"{out.stem}_k{k}{out.suffix}")
        jobs.append((xk, path))
    with concurrent.futures.ThreadPoolExecutor(
            max_workers=min(count, 8)) as pool:
        futures = [pool.submit(_run_single, cfg, model, xk, u0, path)
                   for xk, path in jobs]
        summaries = [f.result() for f in futures]
    return {"perturbed_runs": summaries,
            "perturb": {"base": base, "count": count}}


def run_limit_study(cfg: dict) -> dict:
    """Sup-norm trajectory differences between the scaled relativistic
    explicit method and the classic pusher, one row per epsilon."""
    epsilons = cfg.get("epsilons")
    if not epsilons:
        raise ConfigError("limit study needs a non-empty epsilon list")
    h = cfg.get("h")
    tau_end = cfg.get("tau_end")
    if not (isinstance(h, (int, float)) and h > 0):
        raise ConfigError("h must be positive")
    if not (isinstance(tau_end, (int, float)) and tau_end > 0):
        raise ConfigError("tau_end must be positive")
    preset_name = cfg.get("preset", "example1")
    preset = PRESETS.get(preset_name)
    if preset is None:
        raise ConfigError(f"unknown preset {preset_name!r}")
    for eps in epsilons:
        if eps != 0.0 and not (0.0 < eps <= 0.5):
            raise ConfigError("epsilon values must lie in (0, 0.5] (or be 0)")
    model = preset.field_factory()
    x0 = np.asarray(cfg.get("x0", preset.x0), dtype=float)
    v0 = np.asarray(cfg.get("u0", preset.u0), dtype=float)
    rows = limit_study(model, x0, v0, float(h), float(tau_end), epsilons)
    table = [{"epsilon": r.epsilon, "sup_diff": r.sup_diff} for r in rows]
    ratios = []
    for a, b in zip(rows, rows[1:]):
        if a.sup_diff > 0 and b.sup_diff > 0:
            ratios.append({"epsilon_from": a.epsilon, "epsilon_to": b.epsilon,
                           "diff_ratio": a.sup_diff / b.sup_diff})
    return {"preset": preset_name, "h": h, "tau_end": tau_end,
            "table": table, "ratios": ratios}


@dataclass(frozen=True)
class FigureSeries:
    """Figure-ready energy-error series with its step-size envelope."""

    tau: np.ndarray
    energy_rel_err: np.ndarray
    h: float
    envelope: float          # c * h^2
    envelope_constant: float


def emit_figure_data(records_path, c: float, max_points: int = 2000
                     ) -> FigureSeries:
    """Subsampled (tau, energy_rel_err) series plus the +-c h^2 envelope."""
    rec = read_records_csv(records_path)
    ns = rec[:, 0]
    if len(rec) < 2:
        raise ValueError("need at least two rows to infer the step size")
    h = float((rec[1, 1] - rec[0, 1]) / (ns[1] - ns[0]))
    stride = max(1, len(rec) // max_points)
    sub = rec[::stride]
    if (len(rec) - 1) % stride:
        sub = np.vstack([sub, rec[-1]])
    return FigureSeries(tau=sub[:, 1].copy(),
                        energy_rel_err=sub[:, 11].copy(),
                        h=h, envelope=c * h * h, envelope_constant=float(c))
