"""Conserved-quantity evaluators, finite-difference structure checks, the
high-accuracy reference oracle, and convergence-order measurement."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import FieldModel
from .integrators import HalfStepState, PhaseState
from .minkowski import Position4, Velocity4, minkowski_apply

#: Default finite-difference perturbation; balances truncation and round-off
#: for central differences on unit-scale states.
DEFAULT_FD_EPS = 1e-6


def energy(model: FieldModel, x, gamma: float) -> float:
    """Physical energy gamma + phi(x)."""
    return float(gamma) + model.phi(np.asarray(x, dtype=float))


def mass_shell(u4: Velocity4) -> float:
    """Mass-shell invariant (-gamma^2 + |u|^2) / 2; -1/2 on the shell."""
    return 0.5 * (-u4.gamma**2 + float(u4.u @ u4.u))


@dataclass(frozen=True, eq=False)
class LorentzGenerator:
    """Generator L of a one-parameter group with M L + L^T M = 0."""

    L: np.ndarray

    def __post_init__(self):
        L = np.asarray(self.L, dtype=float)
        if L.shape != (4, 4):
            raise ValueError("generator must be 4x4")
        m = np.diag([-1.0, 1.0, 1.0, 1.0])
        defect = np.max(np.abs(m @ L + L.T @ m))
        if defect > 1e-15 * max(1.0, float(np.max(np.abs(L)))):
            raise ValueError(f"M L + L^T M = 0 violated by {defect:.3e}")
        object.__setattr__(self, "L", L.copy())


def rotation_z_generator() -> LorentzGenerator:
    """Spatial rotation about the x3 axis."""
    L = np.zeros((4, 4))
    L[1, 2] = -1.0
    L[2, 1] = 1.0
    return LorentzGenerator(L)


def noether(model: FieldModel, x4: Position4, u4: Velocity4,
            gen: LorentzGenerator) -> float:
    """Invariant p^T L x with p = M u + A(x)."""
    x = x4.as_array()
    p = minkowski_apply(u4.as_array()) + model.aug_A(x)
    return float(p @ (gen.L @ x))


@dataclass(frozen=True)
class ConservedReport:
    """Snapshot of the conserved quantities at one state."""

    energy: float
    mass_shell: float
    discrete_energy: float | None = None
    noether: float | None = None


def conserved_report(model: FieldModel, x4: Position4, u4: Velocity4,
                     gen: LorentzGenerator | None = None,
                     discrete_energy: float | None = None) -> ConservedReport:
    return ConservedReport(
        energy=energy(model, x4.x, u4.gamma),
        mass_shell=mass_shell(u4),
        discrete_energy=discrete_energy,
        noether=None if gen is None else noether(model, x4, u4, gen))


def fd_jacobian(step_map, state, fd_eps: float = DEFAULT_FD_EPS) -> np.ndarray:
    """Central finite-difference Jacobian of a map on a flat state vector."""
    state = np.asarray(state, dtype=float)
    n = state.size
    jac = np.empty((n, n))
    for i in range(n):
        dp = state.copy()
        dm = state.copy()
        dp[i] += fd_eps
        dm[i] -= fd_eps
        jac[:, i] = (np.asarray(step_map(dp)) - np.asarray(step_map(dm))) \
            / (2.0 * fd_eps)
    return jac


def fd_jacobian_det(step_map, state, fd_eps: float = DEFAULT_FD_EPS) -> float:
    """Determinant of the FD Jacobian of a one-step map on the 8D state.

    A volume-preserving map yields 1 up to finite-difference error.
    """
    return float(np.linalg.det(fd_jacobian(step_map, state, fd_eps)))


def symplectic_structure(n: int = 4) -> np.ndarray:
    """Canonical structure matrix [[0, I], [-I, 0]] on (x, p) pairs."""
    j = np.zeros((2 * n, 2 * n))
    j[:n, n:] = np.eye(n)
    j[n:, :n] = -np.eye(n)
    return j


def fd_symplectic_defect(step_map, state, fd_eps: float = DEFAULT_FD_EPS
                         ) -> float:
    """Max-norm of D^T J D - J for the FD Jacobian D of a map on (x, p)."""
    d = fd_jacobian(step_map, state, fd_eps)
    j = symplectic_structure(state.size // 2)
    return float(np.max(np.abs(d.T @ j @ d - j)))


def halfstep_map(model: FieldModel, h: float, method: str = "explicit",
                 settings=None):
    """One-step map on the flat 8-vector (x, u_half) for FD checks."""
    from .integrators import DEFAULT_SETTINGS, dg_lf_step, explicit_lf_step
    from .fields import DiscreteGradientKind
    settings = settings or DEFAULT_SETTINGS

    def step(s):
        st = HalfStepState.from_array(s)
        if method == "explicit":
            out = explicit_lf_step(model, st, h)
        elif method in ("dgrad-midpoint", "dgrad-avf"):
            kind = (DiscreteGradientKind.MIDPOINT if method.endswith("midpoint")
                    else DiscreteGradientKind.AVF)
            out = dg_lf_step(model, kind, st, h, settings)
        else:
            raise ValueError(f"no half-step map for method {method!r}")
        return out.as_array()

    return step


def variational_map(model: FieldModel, h: float, settings=None):
    """One-step map on the flat 8-vector (x, p) for FD checks."""
    from .integrators import DEFAULT_SETTINGS, variational_step
    settings = settings or DEFAULT_SETTINGS

    def step(s):
        return variational_step(model, PhaseState.from_array(s), h,
                                settings).as_array()

    return step


def explicit_phase_map(model: FieldModel, h: float):
    """Explicit step rewritten on (x, p) via p = M u + A(x).

    Volume-preserving but not symplectic for nonlinear vector potentials;
    serves as the negative control for the symplecticity check.
    """
    from .integrators import explicit_lf_step

    def step(s):
        s = np.asarray(s, dtype=float)
        x, p = s[:4], s[4:]
        u = minkowski_apply(p - model.aug_A(x))
        st = HalfStepState(Position4.from_array(x), Velocity4.from_array(u))
        out = explicit_lf_step(model, st, h)
        x_new = out.x.as_array()
        p_new = minkowski_apply(out.u_half.as_array()) + model.aug_A(x_new)
        return np.concatenate([x_new, p_new])

    return step


@dataclass(frozen=True, eq=False)
class ReferenceTrajectory:
    """Output of the reference oracle: recorded rows plus the final state."""

    records: np.ndarray
    x_final: Position4
    u_final: Velocity4
    max_energy_rel_err: float
    max_mass_shell_dev: float
    max_noether_dev: float


def reference_solve(model: FieldModel, x0: Position4, u0: Velocity4,
                    tau_end: float, h_ref: float, record_every: int = 1,
                    gen: LorentzGenerator | None = None
                    ) -> ReferenceTrajectory:
    """High-accuracy oracle: classical 4th-order one-step integration of the
    first-order 8D system with fixed step ~h_ref (global error O(h_ref^4)).

    The step is shrunk so an integer number of steps lands exactly on tau_end.
    """
    if h_ref <= 0.0:
        raise ValueError("h_ref must be positive")
    n_steps = max(1, int(np.ceil(tau_end / h_ref - 1e-12)))
    h = tau_end / n_steps
    from .trajectory import kernel_and_handle
    kern, handle = kernel_and_handle(model)
    rec, summary, _, _ = kern.run_rk4_loop(
        handle, x0.as_array(), u0.as_array(), h, n_steps, record_every,
        None if gen is None else gen.L)
    last = rec[-1]
    return ReferenceTrajectory(
        records=rec,
        x_final=Position4.from_array(last[2:6]),
        u_final=Velocity4.from_array(last[6:10]),
        max_energy_rel_err=float(summary[1]),
        max_mass_shell_dev=float(summary[4]),
        max_noether_dev=float(summary[8]))


#: Errors at (or below) this scale are treated as exact; the observed order
#: is then reported as NaN.
CONVERGENCE_ERROR_FLOOR = 1e-12


def convergence_order(method: str, model: FieldModel, x0: Position4,
                      u0: Velocity4, tau_end: float, h_list,
                      h_ref: float = 1e-4, settings=None):
    """Global error at tau_end against the reference oracle for each h.

    Returns a list of (h, error, observed_order) with observed_order the
    log-ratio against the previous h (NaN for the first entry and whenever an
    error sits at round-off level).  ``h_list`` must be decreasing with at
    least three entries, each dividing tau_end into whole steps.
    """
    from .trajectory import integrate

    h_list = [float(h) for h in h_list]
    if len(h_list) < 3:
        raise ValueError("need at least three step sizes")
    if any(h2 >= h1 for h1, h2 in zip(h_list, h_list[1:])):
        raise ValueError("h_list must be strictly decreasing")

    ref = reference_solve(model, x0, u0, tau_end, h_ref,
                          record_every=max(1, int(round(tau_end / h_ref))))
    y_ref = np.concatenate([ref.x_final.as_array(), ref.u_final.as_array()])

    out = []
    prev = None
    for h in h_list:
        n_steps = int(round(tau_end / h))
        if abs(n_steps * h - tau_end) > 1e-9 * tau_end:
            raise ValueError(f"h={h} does not divide tau_end={tau_end}")
        res = integrate(model, method, x0, u0, h, n_steps,
                        record_every=n_steps, settings=settings)
        last = res.records[-1]
        y = np.concatenate([last[2:6], last[6:10]])
        err = float(np.max(np.abs(y - y_ref)))
        if prev is None or err <= CONVERGENCE_ERROR_FLOOR \
                or prev[1] <= CONVERGENCE_ERROR_FLOOR:
            order = float("nan")
        else:
            order = float(np.log(prev[1] / err) / np.log(prev[0] / h))
        out.append((h, err, order))
        prev = (h, err)
    return out
