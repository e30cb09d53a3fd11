"""High-level trajectory driver: runs a method for n steps through the
selected kernel backend, returning recorded rows and streaming statistics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .diagnostics import LorentzGenerator
from .fields import FieldModel
from .integrators import (DEFAULT_SETTINGS, IterationScheme, NoConvergenceError,
                          SolverSettings, check_step_size, initial_phase_state,
                          start_half_step, start_nonrel_half_step)
from .minkowski import Position4, SingularMatrixError, Velocity4

#: Column names of a record row, in storage order.
RECORD_COLUMNS = ("n", "tau", "t", "x1", "x2", "x3", "gamma", "u1", "u2", "u3",
                  "energy", "energy_rel_err", "mass_shell", "discrete_energy",
                  "noether")

RELATIVISTIC_METHODS = ("explicit", "dgrad-midpoint", "dgrad-avf",
                        "variational")
NONREL_METHODS = ("boris", "nonrel-dgrad", "nonrel-dgrad-avf",
                  "nonrel-variational")
METHODS = RELATIVISTIC_METHODS + NONREL_METHODS

_HALFSTEP_IDS = {"explicit": 0, "dgrad-midpoint": 1, "dgrad-avf": 2}
_NONREL_IDS = {"boris": 0, "nonrel-dgrad": 1, "nonrel-dgrad-avf": 2,
               "nonrel-variational": 3}


@dataclass(frozen=True)
class RunSummary:
    """Streaming statistics over every computed step of a run."""

    method: str
    h: float
    n_steps: int
    backend: str
    energy_baseline: float
    max_energy_rel_err: float
    max_energy_err_over_scale: float
    mass_shell_baseline: float
    max_mass_shell_dev: float
    discrete_energy_baseline: float
    max_discrete_energy_dev: float
    noether_baseline: float
    max_noether_dev: float
    solver_total_iterations: int
    solver_max_iterations: int
    newton_fallbacks: int
    max_gamma: float


@dataclass(frozen=True, eq=False)
class RunResult:
    """Recorded rows (see RECORD_COLUMNS) plus the run summary."""

    records: np.ndarray
    summary: RunSummary

    def column(self, name: str) -> np.ndarray:
        return self.records[:, RECORD_COLUMNS.index(name)]


def _summary_from_vec(method, h, n_steps, vec) -> RunSummary:
    return RunSummary(
        method=method, h=h, n_steps=n_steps, backend=backend.BACKEND,
        energy_baseline=float(vec[0]),
        max_energy_rel_err=float(vec[1]),
        max_energy_err_over_scale=float(vec[2]),
        mass_shell_baseline=float(vec[3]),
        max_mass_shell_dev=float(vec[4]),
        discrete_energy_baseline=float(vec[5]),
        max_discrete_energy_dev=float(vec[6]),
        noether_baseline=float(vec[7]),
        max_noether_dev=float(vec[8]),
        solver_total_iterations=int(vec[9]),
        solver_max_iterations=int(vec[10]),
        newton_fallbacks=int(vec[11]),
        max_gamma=float(vec[12]))


def kernel_and_handle(model, kernels=None):
    """Kernel module plus a packed field handle.

    Models without a packed kernel representation fall back to the
    pure-Python loops, which drive the model object directly.
    """
    kern = kernels or backend.kernels
    try:
        return kern, kern.prepare_field(model)
    except TypeError:
        from . import _kernels_py
        return _kernels_py, _kernels_py.prepare_field(model)


def _raise_for_status(status, info, method):
    kern = backend.kernels
    if status == kern.STATUS_SINGULAR:
        raise SingularMatrixError(
            f"{method}: singular linear system at step {int(info[0])}")
    if status == kern.STATUS_NO_CONVERGENCE:
        raise NoConvergenceError(
            f"{method}: implicit solve failed at step {int(info[0])} "
            f"(residual {info[2]:.3e})", int(info[1]), float(info[2]),
            int(info[0]))


def integrate(model: FieldModel, method: str, x0: Position4, u0: Velocity4,
              h: float, n_steps: int, record_every: int = 1,
              settings: SolverSettings | None = None,
              gen: LorentzGenerator | None = None,
              kernels=None) -> RunResult:
    """Integrate a relativistic method from on-shell initial data.

    The run advances n_steps steps and records rows at every multiple of
    record_every plus the final step.  Statistics in the summary cover every
    step regardless of the recording stride.
    """
    if method not in RELATIVISTIC_METHODS:
        raise ValueError(f"unknown relativistic method {method!r}; "
                         f"choose from {RELATIVISTIC_METHODS}")
    if h <= 0.0:
        raise ValueError("h must be positive")
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if record_every < 1:
        raise ValueError("record_every must be at least 1")
    settings = settings or DEFAULT_SETTINGS
    kern, handle = kernel_and_handle(model, kernels)
    gen_mat = None if gen is None else gen.L
    u0_arr = u0.as_array()

    if method == "variational":
        check_step_size(model, x0.x, h)
        p0 = initial_phase_state(model, x0, u0).p.as_array()
        rec, vec, status, info = kern.run_variational_loop(
            handle, x0.as_array(), p0, u0_arr, h, n_steps, record_every,
            settings.tol, settings.max_iter, gen_mat)
    else:
        u_half = start_half_step(model, x0, u0, h)
        scheme = 1 if settings.scheme == IterationScheme.NEWTON else 0
        rec, vec, status, info = kern.run_halfstep_loop(
            handle, _HALFSTEP_IDS[method], x0.as_array(), u_half.as_array(),
            u0_arr, h, n_steps, record_every, settings.tol, settings.max_iter,
            scheme, gen_mat)

    _raise_for_status(status, info, method)
    return RunResult(records=rec,
                     summary=_summary_from_vec(method, h, n_steps, vec))


def integrate_nonrel(model: FieldModel, method: str, x0, v0, h: float,
                     n_steps: int, record_every: int = 1,
                     settings: SolverSettings | None = None,
                     kernels=None) -> RunResult:
    """Integrate a non-relativistic limit method from initial (x0, v0)."""
    if method not in NONREL_METHODS:
        raise ValueError(f"unknown non-relativistic method {method!r}; "
                         f"choose from {NONREL_METHODS}")
    if h <= 0.0:
        raise ValueError("h must be positive")
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if record_every < 1:
        raise ValueError("record_every must be at least 1")
    settings = settings or DEFAULT_SETTINGS
    kern, handle = kernel_and_handle(model, kernels)
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    v_half = start_nonrel_half_step(model, x0, v0, h)
    rec, vec, status, info = kern.run_nonrel_loop(
        handle, _NONREL_IDS[method], x0, v_half, v0, h, n_steps, record_every,
        settings.tol, settings.max_iter)
    _raise_for_status(status, info, method)
    return RunResult(records=rec,
                     summary=_summary_from_vec(method, h, n_steps, vec))


@dataclass(frozen=True)
class LimitStudyRow:
    epsilon: float
    sup_diff: float


def limit_study(model: FieldModel, x0, v0, h: float, tau_end: float,
                epsilons, kernels=None) -> list[LimitStudyRow]:
    """Compare the scaled relativistic explicit method against the classic
    pusher on the rescaled variables.

    For each epsilon the relativistic run uses potentials (eps^2 phi, eps A),
    initial momentum eps v0, and step h/eps, so its grid coincides with the
    pusher's; the reported value is the sup-norm position difference over the
    grid.  Differences shrink as O(eps^2); epsilon 0 denotes the exact limit
    and reports 0 by construction.
    """
    if h <= 0.0 or tau_end <= 0.0:
        raise ValueError("h and tau_end must be positive")
    n_steps = int(round(tau_end / h))
    if n_steps < 1:
        raise ValueError("tau_end must cover at least one step")
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    base = integrate_nonrel(model, "boris", x0, v0, h, n_steps,
                            kernels=kernels)
    base_xyz = base.records[:, 3:6]

    rows = []
    for eps in epsilons:
        eps = float(eps)
        if eps == 0.0:
            rows.append(LimitStudyRow(0.0, 0.0))
            continue
        if not 0.0 < eps <= 0.5:
            raise ValueError("epsilon values must lie in (0, 0.5] (or be 0)")
        scaled = model.scaled(eps * eps, eps)
        x0_rel = Position4(0.0, x0)
        u0_rel = Velocity4.on_shell(eps * v0)
        res = integrate(scaled, "explicit", x0_rel, u0_rel, h / eps, n_steps,
                        kernels=kernels)
        diff = float(np.max(np.abs(res.records[:, 3:6] - base_xyz)))
        rows.append(LimitStudyRow(eps, diff))
    return rows
