"""One-step maps of the three relativistic leapfrog integrators and their
non-relativistic limits.

The relativistic steppers advance either a half-step state (position at a grid
point, momentum at the preceding half grid point) or a phase state (position
and conjugate momentum at a grid point).  All steppers are pure functions;
long runs go through the kernel loops in ``trajectory``, which drive the same
maps.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .fields import (DiscreteGradientKind, FieldModel, cross_matrix,
                     dg_faraday, discrete_gradient, faraday)
from .minkowski import (Momentum4, Position4, SingularMatrixError, Velocity4,
                        minkowski_apply, minkowski_matrix, solve4)


class StepSizeError(ValueError):
    """Step size too large for the local field strength."""


class NoConvergenceError(RuntimeError):
    """An implicit solve failed to reach the residual tolerance."""

    def __init__(self, message: str, iterations: int, residual: float,
                 step_index: int | None = None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.step_index = step_index


class IterationScheme(enum.Enum):
    FIXED_POINT = "fixed-point"
    NEWTON = "newton"


@dataclass(frozen=True)
class SolverSettings:
    """Controls for the implicit solves (discrete-gradient and variational)."""

    tol: float = 1e-14
    max_iter: int = 50
    scheme: IterationScheme = IterationScheme.FIXED_POINT

    def __post_init__(self):
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


DEFAULT_SETTINGS = SolverSettings()

#: Finite-difference step for the Newton-fallback Jacobian.
FD_JACOBIAN_STEP = 1e-7


@dataclass(frozen=True, eq=False)
class HalfStepState:
    """State (x^n, u^{n-1/2}) of the staggered one-step formulation."""

    x: Position4
    u_half: Velocity4
    step_index: int = 0

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.x.as_array(), self.u_half.as_array()])

    @staticmethod
    def from_array(a, step_index: int = 0) -> "HalfStepState":
        a = np.asarray(a, dtype=float)
        return HalfStepState(Position4.from_array(a[:4]),
                             Velocity4.from_array(a[4:8]), step_index)


@dataclass(frozen=True, eq=False)
class PhaseState:
    """State (x^n, p^n) of the variational one-step map."""

    x: Position4
    p: Momentum4
    step_index: int = 0

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.x.as_array(), self.p.as_array()])

    @staticmethod
    def from_array(a, step_index: int = 0) -> "PhaseState":
        a = np.asarray(a, dtype=float)
        return PhaseState(Position4.from_array(a[:4]), Momentum4(a[4:8]),
                          step_index)


def check_step_size(model: FieldModel, x0, h: float) -> None:
    """Reject h when || h/2 M^{-1} F(x0) || >= 1 (solvability safeguard)."""
    f = faraday(model, np.asarray(x0, dtype=float))
    z = 0.5 * h * np.diag([-1.0, 1.0, 1.0, 1.0]) @ f
    norm = float(np.max(np.sum(np.abs(z), axis=1)))
    if norm >= 1.0:
        raise StepSizeError(
            f"step size h={h} too large for the field at the start "
            f"(||h/2 M^-1 F|| = {norm:.3g} >= 1)")


def start_half_step(model: FieldModel, x0: Position4, u0: Velocity4,
                    h: float) -> Velocity4:
    """First half-step momentum from on-shell initial data.

    Takes the spatial part of u0 + h/2 M^{-1} F(x0) u0 and restores gamma from
    the shell relation, so the start is exactly on-shell.
    """
    check_step_size(model, x0.x, h)
    f = faraday(model, x0.x)
    ut = u0.as_array() + 0.5 * h * minkowski_apply(f @ u0.as_array())
    return Velocity4.on_shell(ut[1:])


def explicit_lf_step(model: FieldModel, s: HalfStepState,
                     h: float) -> HalfStepState:
    """One explicit leapfrog step: a 4x4 solve, then a position drift.

    The update matrix pair (M -+ h/2 F) is skew-adapted to the metric, so the
    mass shell of the half-step momentum is preserved to round-off.
    """
    x = s.x.as_array()
    u = s.u_half.as_array()
    f = faraday(model, x[1:])
    m = minkowski_matrix()
    u_new = solve4(m - 0.5 * h * f, m @ u + 0.5 * h * (f @ u))
    return HalfStepState(Position4.from_array(x + h * u_new),
                         Velocity4.from_array(u_new), s.step_index + 1)


def reversed_explicit_lf_step(model: FieldModel, s: HalfStepState,
                              h: float) -> HalfStepState:
    """Inverse of ``explicit_lf_step``: drift back, then the -h momentum solve
    at the recovered position (the superscript-swapped step)."""
    x = s.x.as_array()
    u = s.u_half.as_array()
    x_prev = x - h * u
    f = faraday(model, x_prev[1:])
    m = minkowski_matrix()
    u_prev = solve4(m + 0.5 * h * f, m @ u - 0.5 * h * (f @ u))
    return HalfStepState(Position4.from_array(x_prev),
                         Velocity4.from_array(u_prev), s.step_index - 1)


def _dg_system(model, kind, x, u, h, u_plus):
    """Discrete-gradient field tensor for the current iterate, with the
    previous position reconstructed as x^n - h u^{n-1/2}."""
    xs = x[1:]
    x_old_half = xs - 0.5 * h * u[1:]
    x_new_half = xs + 0.5 * h * u_plus[1:]
    return dg_faraday(model, kind, x_new_half, x_old_half, xs)


def _dg_residual_for(m, f, u, u_plus, h):
    return m @ (u_plus - u) - 0.5 * h * (f @ (u_plus + u))


def dg_momentum_solve(model, kind, x, u, h, settings):
    """Solve the implicit discrete-gradient momentum relation.

    Returns (u_plus, iterations, used_newton_fallback).  Fixed-point iteration
    with the residual measured against the freshly assembled tensor, falling
    back to Newton on finite-difference Jacobians.
    """
    m = minkowski_matrix()
    scale = 1.0 + float(np.max(np.abs(u)))
    u_plus = u.copy()
    iterations = 0

    if settings.scheme == IterationScheme.FIXED_POINT:
        f = _dg_system(model, kind, x, u, h, u_plus)
        for _ in range(settings.max_iter):
            u_next = solve4(m - 0.5 * h * f, m @ u + 0.5 * h * (f @ u))
            f = _dg_system(model, kind, x, u, h, u_next)
            residual = float(np.max(np.abs(
                _dg_residual_for(m, f, u, u_next, h))))
            iterations += 1
            u_plus = u_next
            if residual <= settings.tol * scale:
                return u_plus, iterations, False

    newton_iters = 0
    residual = np.inf
    for _ in range(settings.max_iter):
        f = _dg_system(model, kind, x, u, h, u_plus)
        g = _dg_residual_for(m, f, u, u_plus, h)
        residual = float(np.max(np.abs(g)))
        if residual <= settings.tol * scale:
            return u_plus, iterations + newton_iters, True
        jac = np.empty((4, 4))
        for col in range(4):
            dv = np.zeros(4)
            dv[col] = FD_JACOBIAN_STEP
            fp = _dg_system(model, kind, x, u, h, u_plus + dv)
            fm = _dg_system(model, kind, x, u, h, u_plus - dv)
            gp = _dg_residual_for(m, fp, u, u_plus + dv, h)
            gm = _dg_residual_for(m, fm, u, u_plus - dv, h)
            jac[:, col] = (gp - gm) / (2.0 * FD_JACOBIAN_STEP)
        u_plus = u_plus - solve4(jac, g)
        newton_iters += 1
    raise NoConvergenceError(
        f"discrete-gradient solve stalled at residual {residual:.3e}",
        iterations + newton_iters, residual)


def dg_lf_step(model: FieldModel, kind: DiscreteGradientKind, s: HalfStepState,
               h: float, settings: SolverSettings = DEFAULT_SETTINGS
               ) -> HalfStepState:
    """One energy-preserving leapfrog step with a discrete gradient.

    Implicit in the new momentum because the discrete gradient spans the
    half-step positions; the previous position is reconstructed as
    x^n - h u^{n-1/2}, which keeps the stepper a self-contained map on the
    half-step state.
    """
    x = s.x.as_array()
    u = s.u_half.as_array()
    try:
        u_plus, _, _ = dg_momentum_solve(model, kind, x, u, h, settings)
    except NoConvergenceError as e:
        raise NoConvergenceError(str(e), e.iterations, e.residual,
                                 s.step_index) from None
    return HalfStepState(Position4.from_array(x + h * u_plus),
                         Velocity4.from_array(u_plus), s.step_index + 1)


def variational_solve(model, x, p, h, settings):
    """Newton solve of the implicit variational update.

    Iterates on the half-step momentum u (with x_new = x + h u derived), so
    the residual is free of the 1/h round-off amplification a position
    iterate would carry.  Exact Jacobian; a single iteration suffices for
    linear vector potentials.  Returns (x_new, p_new, u_half, iterations).
    """
    m = minkowski_matrix()
    a_x = model.aug_A(x)
    ajac_x = model.aug_A_jac(x)
    lhs = m - 0.5 * h * ajac_x.T
    scale = 1.0 + float(np.max(np.abs(p)))

    u = minkowski_apply(p - a_x)
    x_new = x + h * u
    iterations = 0
    residual = np.inf
    converged = False
    for _ in range(settings.max_iter):
        x_new = x + h * u
        r = lhs @ u + 0.5 * (a_x + model.aug_A(x_new)) - p
        residual = float(np.max(np.abs(r)))
        iterations += 1
        if residual <= settings.tol * scale:
            converged = True
            break
        jac = lhs + 0.5 * h * model.aug_A_jac(x_new)
        u = u - solve4(jac, r)
    if not converged:
        raise NoConvergenceError(
            f"variational solve stalled at residual {residual:.3e}",
            iterations, residual)

    p_new = ((m + 0.5 * h * model.aug_A_jac(x_new).T) @ u
             + 0.5 * (a_x + model.aug_A(x_new)))
    return x_new, p_new, u, iterations


def variational_step(model: FieldModel, s: PhaseState, h: float,
                     settings: SolverSettings = DEFAULT_SETTINGS) -> PhaseState:
    """One step of the variational (symplectic) leapfrog in (x, p) variables."""
    try:
        x_new, p_new, _, _ = variational_solve(model, s.x.as_array(),
                                               s.p.as_array(), h, settings)
    except NoConvergenceError as e:
        raise NoConvergenceError(str(e), e.iterations, e.residual,
                                 s.step_index) from None
    return PhaseState(Position4.from_array(x_new), Momentum4(p_new),
                      s.step_index + 1)


def variational_two_step_residual(model: FieldModel, x_prev: Position4,
                                  x_cur: Position4, x_next: Position4,
                                  h: float) -> np.ndarray:
    """Residual of the two-step form of the variational method.

    Zero (to solver tolerance) on consecutive position triples produced by
    ``variational_step``; serves as a cross-check between the one-step and
    two-step formulations.
    """
    xm = x_prev.as_array()
    x0 = x_cur.as_array()
    xp = x_next.as_array()
    m = minkowski_matrix()
    ajac = model.aug_A_jac(x0)
    return (m @ (xp - 2.0 * x0 + xm) / h**2
            - ajac.T @ (xp - xm) / (2.0 * h)
            + (model.aug_A(xp) - model.aug_A(xm)) / (2.0 * h))


def grid_momentum(u_minus: Velocity4, u_plus: Velocity4) -> Velocity4:
    """Grid-point momentum: component-wise average of the half-step values."""
    return Velocity4(0.5 * (u_minus.gamma + u_plus.gamma),
                     0.5 * (u_minus.u + u_plus.u))


def phase_from_half_step(model: FieldModel, s: HalfStepState,
                         h: float) -> PhaseState:
    """Conjugate momentum consistent with a half-step state.

    Uses the variational map's own definition of p^n with the previous
    position reconstructed as x^n - h u^{n-1/2}.  For constant fields the
    variational trajectory launched from this state coincides with the
    explicit leapfrog trajectory launched from ``s``.
    """
    x = s.x.as_array()
    u = s.u_half.as_array()
    m = minkowski_matrix()
    x_prev = x - h * u
    p = ((m + 0.5 * h * model.aug_A_jac(x).T) @ u
         + 0.5 * (model.aug_A(x_prev) + model.aug_A(x)))
    return PhaseState(s.x, Momentum4(p), s.step_index)


def initial_phase_state(model: FieldModel, x0: Position4,
                        u0: Velocity4) -> PhaseState:
    """Canonical initial state p^0 = M u^0 + A(x^0) from on-shell data."""
    x = x0.as_array()
    p = minkowski_apply(u0.as_array()) + model.aug_A(x)
    return PhaseState(x0, Momentum4(p), 0)


# ---------------------------------------------------------------------------
# Non-relativistic limit methods (3D states, coordinate time as the clock).


def _solve3(a, b):
    """Cramer solve of a 3x3 system (well-conditioned update matrices only)."""
    a = np.asarray(a, dtype=float)
    det = (a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
           - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
           + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]))
    if det == 0.0:
        raise SingularMatrixError("singular 3x3 system")
    out = np.empty(3)
    for col in range(3):
        mm = a.copy()
        mm[:, col] = b
        out[col] = (mm[0, 0] * (mm[1, 1] * mm[2, 2] - mm[1, 2] * mm[2, 1])
                    - mm[0, 1] * (mm[1, 0] * mm[2, 2] - mm[1, 2] * mm[2, 0])
                    + mm[0, 2] * (mm[1, 0] * mm[2, 1] - mm[1, 1] * mm[2, 0]))
        out[col] /= det
    return out


def start_nonrel_half_step(model: FieldModel, x0, v0, h: float) -> np.ndarray:
    """Half-step velocity v^{1/2} = v0 + h/2 (E + v0 x B) at the start."""
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    return v0 + 0.5 * h * (model.E(x0) + np.cross(v0, model.B(x0)))


def boris_step(model: FieldModel, x, v_half, h: float):
    """One step of the classical leapfrog pusher for E + v x B forces.

    Solves v+ - v- = h E(x) + h/2 (v+ + v-) x B(x) in closed form; the update
    matrix I + h/2 B_hat has determinant 1 + |h B / 2|^2 > 0, so the step
    never degenerates.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v_half, dtype=float)
    b = 0.5 * h * model.B(x)
    rhs = v - np.cross(b, v) + h * model.E(x)
    b2 = float(b @ b)
    v_new = (rhs - np.cross(b, rhs) + b * float(b @ rhs)) / (1.0 + b2)
    return x + h * v_new, v_new


def nonrel_dg_solve(model, kind, x, v, h, settings):
    """Implicit velocity update of the energy-preserving pusher variant.

    Returns (v_plus, iterations)."""
    b = 0.5 * h * model.B(x)
    b2 = float(b @ b)
    x_old_half = x - 0.5 * h * v
    scale = 1.0 + float(np.max(np.abs(v)))
    v_plus = v.copy()
    residual = np.inf
    iterations = 0
    for _ in range(settings.max_iter):
        g = discrete_gradient(model, kind, x + 0.5 * h * v_plus, x_old_half)
        rhs = v - np.cross(b, v) - h * g
        v_next = (rhs - np.cross(b, rhs) + b * float(b @ rhs)) / (1.0 + b2)
        g = discrete_gradient(model, kind, x + 0.5 * h * v_next, x_old_half)
        residual = float(np.max(np.abs(
            v_next - v + h * g + np.cross(b, v_next + v))))
        iterations += 1
        v_plus = v_next
        if residual <= settings.tol * scale:
            return v_plus, iterations
    raise NoConvergenceError("non-relativistic discrete-gradient solve stalled",
                             iterations, residual)


def nonrel_dg_step(model: FieldModel, kind: DiscreteGradientKind, state,
                   h: float, settings: SolverSettings = DEFAULT_SETTINGS):
    """Energy-preserving variant of ``boris_step``: the electric force is the
    discrete gradient between the half-step positions."""
    x = np.asarray(state[0], dtype=float)
    v = np.asarray(state[1], dtype=float)
    v_plus, _ = nonrel_dg_solve(model, kind, x, v, h, settings)
    return x + h * v_plus, v_plus


def nonrel_variational_solve(model, x, v, h, settings):
    """Implicit velocity update of the variational limit method.

    Returns (v_plus, iterations)."""
    bhat = cross_matrix(model.B(x))
    ajac = model.A_jac(x)
    lhs = np.eye(3) + 0.5 * h * bhat - 0.5 * h * ajac
    rhs_lin = (np.eye(3) - 0.5 * h * bhat + 0.5 * h * ajac) @ v + h * model.E(x)
    a_back = model.A(x - h * v)
    scale = 1.0 + float(np.max(np.abs(v)))
    v_plus = v.copy()
    residual = np.inf
    iterations = 0
    for _ in range(settings.max_iter):
        rhs = rhs_lin - 0.5 * (model.A(x + h * v_plus) - a_back)
        v_next = _solve3(lhs, rhs)
        rhs = rhs_lin - 0.5 * (model.A(x + h * v_next) - a_back)
        residual = float(np.max(np.abs(lhs @ v_next - rhs)))
        iterations += 1
        v_plus = v_next
        if residual <= settings.tol * scale:
            return v_plus, iterations
    raise NoConvergenceError("non-relativistic variational solve stalled",
                             iterations, residual)


def nonrel_variational_step(model: FieldModel, state, h: float,
                            settings: SolverSettings = DEFAULT_SETTINGS):
    """Variational limit method: the leapfrog pusher plus the gauge-correction
    terms A'(x) v_bar - (A(x^{n+1}) - A(x^{n-1})) / 2h.

    The correction vanishes identically for linear A (constant B), where the
    step reduces to ``boris_step``.
    """
    x = np.asarray(state[0], dtype=float)
    v = np.asarray(state[1], dtype=float)
    v_plus, _ = nonrel_variational_solve(model, x, v, h, settings)
    return x + h * v_plus, v_plus
