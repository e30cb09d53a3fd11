"""Pure-Python stepping loops (fallback backend).

Drives the one-step maps from ``integrators`` over long runs while recording
trajectory rows and streaming conservation statistics over every step.  The
compiled backend in ``_kernels`` mirrors the same update formulas, records
layout, and summary vector; ``leapfrog4d.backend`` picks whichever is
available.

Records layout (one row per recorded grid index n):
    [n, tau, t, x1, x2, x3, gamma, u1, u2, u3,
     energy, energy_rel_err, mass_shell, discrete_energy, noether]
with NaN marking columns that do not apply to a method.  Row n carries the
grid-point momentum (average of the two adjacent half-step values; the
supplied initial data at n = 0), the half-step energy
gamma^{n+1/2} + phi(x^{n+1/2}) evaluated at the spatial midpoint of the step
leaving x^n, and the mass shell of u^{n+1/2}.

Summary vector layout:
    [0] energy baseline (first recorded energy)
    [1] max |energy - baseline| / |baseline|           over all steps
    [2] max |energy - baseline| / scale_n              (cancellation-safe)
    [3] mass-shell baseline      [4] max |mass shell - baseline|
    [5] discrete-energy baseline [6] max |discrete energy - baseline|
    [7] invariant baseline       [8] max |invariant - baseline|
    [9] total implicit-solver iterations  [10] max iterations in one step
    [11] Newton fallback count   [12] max gamma seen   [13] unused
"""
from __future__ import annotations

import math

import numpy as np

from .fields import DiscreteGradientKind, faraday
from .integrators import (IterationScheme, NoConvergenceError, SolverSettings,
                          boris_step, dg_momentum_solve, nonrel_dg_solve,
                          nonrel_variational_solve, variational_solve)
from .minkowski import SingularMatrixError, minkowski_apply, minkowski_matrix, solve4

BACKEND = "python"

REC_COLS = 15
SUM_LEN = 14
STATUS_OK = 0
STATUS_NO_CONVERGENCE = 1
STATUS_SINGULAR = 2

_METHOD_KINDS = {1: DiscreteGradientKind.MIDPOINT, 2: DiscreteGradientKind.AVF}


def prepare_field(model):
    """The Python backend drives the model object directly."""
    return model


def n_record_rows(n_steps: int, record_every: int) -> int:
    return -(-n_steps // record_every) + 1


class _Tape:
    """Row buffer plus streaming maxima over every step."""

    def __init__(self, n_steps, record_every, h):
        self.rec = np.full((n_record_rows(n_steps, record_every), REC_COLS),
                           np.nan)
        self.row = 0
        self.n_steps = n_steps
        self.record_every = record_every
        self.h = h
        self.sum = np.full(SUM_LEN, np.nan)
        for i in (1, 2, 4, 6, 8, 9, 10, 11, 13):
            self.sum[i] = 0.0
        self.sum[12] = -np.inf

    def update(self, n, x4, ugrid4, energy, scale, mass_shell, de, noe):
        s = self.sum
        if n == 0:
            s[0], s[3], s[5], s[7] = energy, mass_shell, de, noe
        err = (energy - s[0]) / abs(s[0]) if s[0] != 0.0 else energy - s[0]
        s[1] = max(s[1], abs(err))
        s[2] = max(s[2], abs(energy - s[0]) / scale)
        if not math.isnan(mass_shell) and not math.isnan(s[3]):
            s[4] = max(s[4], abs(mass_shell - s[3]))
        if not math.isnan(de) and not math.isnan(s[5]):
            s[6] = max(s[6], abs(de - s[5]))
        if not math.isnan(noe) and not math.isnan(s[7]):
            s[8] = max(s[8], abs(noe - s[7]))
        s[12] = max(s[12], ugrid4[0])
        if n % self.record_every == 0 or n == self.n_steps:
            r = self.rec[self.row]
            r[0] = n
            r[1] = n * self.h
            r[2:6] = x4
            r[6:10] = ugrid4
            r[10] = energy
            r[11] = err
            r[12] = mass_shell
            r[13] = de
            r[14] = noe
            self.row += 1

    def iterations(self, iters, fallback=False):
        self.sum[9] += iters
        if iters > self.sum[10]:
            self.sum[10] = iters
        if fallback:
            self.sum[11] += 1

    def done(self, status=STATUS_OK, info=(0, 0, 0.0)):
        return self.rec[:self.row], self.sum, status, np.array(info, dtype=float)


def _noether_grid(model, x4, ugrid4, gen):
    p = minkowski_apply(ugrid4) + model.aug_A(x4)
    return float(p @ (gen @ x4))


def _rel_scale(gamma, phi_mid):
    return max(1.0, abs(gamma) + abs(phi_mid))


def run_halfstep_loop(model, method, x0, u_half0, u0_grid, h, n_steps,
                      record_every, tol, max_iter, scheme, gen=None):
    """Explicit (method 0) or discrete-gradient (1 midpoint, 2 AVF) loop.

    The supplied u_half0 is the already-kicked momentum u^{1/2}, so iteration
    n = 0 drifts without a momentum solve; every later iteration advances the
    momentum from (x^n, u^{n-1/2}) before drifting.
    """
    settings = SolverSettings(tol=tol, max_iter=max_iter,
                              scheme=IterationScheme.NEWTON if scheme == 1
                              else IterationScheme.FIXED_POINT)
    m = minkowski_matrix()
    x = np.array(x0, dtype=float)
    u_minus = np.array(u_half0, dtype=float)
    u0_grid = np.asarray(u0_grid, dtype=float)
    tape = _Tape(n_steps, record_every, h)
    kind = _METHOD_KINDS.get(method)
    for n in range(n_steps + 1):
        if n == 0:
            u_new = u_minus
        else:
            try:
                if method == 0:
                    f = faraday(model, x[1:])
                    u_new = solve4(m - 0.5 * h * f,
                                   m @ u_minus + 0.5 * h * (f @ u_minus))
                else:
                    u_new, iters, fell_back = dg_momentum_solve(
                        model, kind, x, u_minus, h, settings)
                    tape.iterations(iters, fell_back)
            except SingularMatrixError:
                return tape.done(STATUS_SINGULAR, (n, 0, 0.0))
            except NoConvergenceError as e:
                return tape.done(STATUS_NO_CONVERGENCE,
                                 (n, e.iterations, e.residual))
        phi_mid = model.phi(x[1:] + 0.5 * h * u_new[1:])
        energy = u_new[0] + phi_mid
        ugrid = u0_grid if n == 0 else 0.5 * (u_minus + u_new)
        ms = 0.5 * (-u_new[0] ** 2 + float(u_new[1:] @ u_new[1:]))
        de = energy if method != 0 else np.nan
        noe = _noether_grid(model, x, ugrid, gen) if gen is not None else np.nan
        tape.update(n, x, ugrid, energy, _rel_scale(u_new[0], phi_mid), ms,
                    de, noe)
        if n < n_steps:
            x = x + h * u_new
            u_minus = u_new
    return tape.done()


def run_variational_loop(model, x0, p0, u0_grid, h, n_steps, record_every,
                         tol, max_iter, gen=None):
    """Variational one-step map on (x, p); diagnostics as in the other loops."""
    settings = SolverSettings(tol=tol, max_iter=max_iter)
    x = np.array(x0, dtype=float)
    p = np.array(p0, dtype=float)
    u0_grid = np.asarray(u0_grid, dtype=float)
    tape = _Tape(n_steps, record_every, h)
    u_old = None
    for n in range(n_steps + 1):
        try:
            x_new, p_new, u_new, iters = variational_solve(model, x, p, h,
                                                           settings)
            tape.iterations(iters)
        except SingularMatrixError:
            return tape.done(STATUS_SINGULAR, (n, 0, 0.0))
        except NoConvergenceError as e:
            return tape.done(STATUS_NO_CONVERGENCE,
                             (n, e.iterations, e.residual))
        phi_mid = model.phi(x[1:] + 0.5 * h * u_new[1:])
        energy = u_new[0] + phi_mid
        de = u_new[0] + 0.5 * (model.phi(x[1:]) + model.phi(x_new[1:]))
        ugrid = u0_grid if n == 0 else 0.5 * (u_old + u_new)
        ms = 0.5 * (-u_new[0] ** 2 + float(u_new[1:] @ u_new[1:]))
        noe = float(p @ (gen @ x)) if gen is not None else np.nan
        tape.update(n, x, ugrid, energy, _rel_scale(u_new[0], phi_mid), ms,
                    de, noe)
        if n < n_steps:
            x, p, u_old = x_new, p_new, u_new
    return tape.done()


def run_nonrel_loop(model, method, x0, v_half0, v0_grid, h, n_steps,
                    record_every, tol, max_iter):
    """Non-relativistic loops: 0 classic pusher, 1/2 discrete-gradient kinds,
    3 variational.  Time equals tau; the gamma column is written as 1.
    As in the relativistic loops, iteration 0 drifts with the supplied
    half-step velocity without a solve."""
    settings = SolverSettings(tol=tol, max_iter=max_iter)
    x = np.array(x0, dtype=float)
    v_minus = np.array(v_half0, dtype=float)
    v0_grid = np.asarray(v0_grid, dtype=float)
    tape = _Tape(n_steps, record_every, h)
    kind = _METHOD_KINDS.get(method)
    for n in range(n_steps + 1):
        if n == 0:
            v_new = v_minus
        else:
            try:
                if method == 0:
                    _, v_new = boris_step(model, x, v_minus, h)
                elif method == 3:
                    v_new, iters = nonrel_variational_solve(model, x, v_minus,
                                                            h, settings)
                    tape.iterations(iters)
                else:
                    v_new, iters = nonrel_dg_solve(model, kind, x, v_minus, h,
                                                   settings)
                    tape.iterations(iters)
            except SingularMatrixError:
                return tape.done(STATUS_SINGULAR, (n, 0, 0.0))
            except NoConvergenceError as e:
                return tape.done(STATUS_NO_CONVERGENCE,
                                 (n, e.iterations, e.residual))
        phi_mid = model.phi(x + 0.5 * h * v_new)
        energy = 0.5 * float(v_new @ v_new) + phi_mid
        vgrid = v0_grid if n == 0 else 0.5 * (v_minus + v_new)
        x4 = np.concatenate([[n * h], x])
        ugrid4 = np.concatenate([[1.0], vgrid])
        de = energy if method in (1, 2) else np.nan
        scale = max(1.0, 0.5 * float(v_new @ v_new) + abs(phi_mid))
        tape.update(n, x4, ugrid4, energy, scale, np.nan, de, np.nan)
        if n < n_steps:
            x = x + h * v_new
            v_minus = v_new
    return tape.done()


def run_rk4_loop(model, x0, u0, h, n_steps, record_every, gen=None):
    """Classical 4th-order reference integration of the first-order system
    x' = u, u' = M^{-1} F(x) u."""
    y = np.concatenate([np.asarray(x0, dtype=float),
                        np.asarray(u0, dtype=float)])
    tape = _Tape(n_steps, record_every, h)

    def rhs(y):
        f = faraday(model, y[1:4])
        return np.concatenate([y[4:], minkowski_apply(f @ y[4:])])

    for n in range(n_steps + 1):
        x4, u4 = y[:4], y[4:]
        phi_x = model.phi(x4[1:])
        energy = u4[0] + phi_x
        ms = 0.5 * (-u4[0] ** 2 + float(u4[1:] @ u4[1:]))
        noe = _noether_grid(model, x4, u4, gen) if gen is not None else np.nan
        tape.update(n, x4, u4, energy, _rel_scale(u4[0], phi_x), ms, np.nan,
                    noe)
        if n < n_steps:
            k1 = rhs(y)
            k2 = rhs(y + 0.5 * h * k1)
            k3 = rhs(y + 0.5 * h * k2)
            k4 = rhs(y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return tape.done()
