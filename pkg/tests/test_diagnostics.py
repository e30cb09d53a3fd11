"""Conserved quantities, FD structure checks, reference oracle, convergence."""
import numpy as np
import pytest

from leapfrog4d import (HalfStepState, Position4, Velocity4,
                        axisymmetric_field, convergence_order, energy,
                        fd_jacobian_det, fd_symplectic_defect,
                        initial_phase_state, mass_shell, noether,
                        quadratic_well_field, quartic_well_field,
                        reference_solve, rotation_z_generator, start_half_step,
                        zero_field)
from leapfrog4d.diagnostics import (LorentzGenerator, explicit_phase_map,
                                    halfstep_map, variational_map)

RNG = np.random.default_rng(20240820)

X0 = Position4(0.0, [0.0, 1.0, 0.1])
U0 = Velocity4.on_shell([0.09, 0.05, 0.2])


def test_energy_values():
    m = quadratic_well_field()
    g0 = np.sqrt(1.0506)
    assert energy(m, [0.0, 1.0, 0.1], g0) == pytest.approx(2.03 + g0,
                                                           abs=1e-14)
    assert energy(zero_field(), [1, 2, 3], 1.7) == 1.7
    assert energy(zero_field(), [0, 0, 0], 1.0) == 1.0


def test_mass_shell_values():
    assert mass_shell(Velocity4(1.0, [0, 0, 0])) == -0.5
    assert mass_shell(Velocity4(2.0, [1, 1, 1])) == -0.5
    assert mass_shell(Velocity4.on_shell([0.3, -0.2, 0.9])) == pytest.approx(
        -0.5, abs=1e-15)


def test_lorentz_generator_validation():
    with pytest.raises(ValueError):
        LorentzGenerator(np.eye(4))
    gen = rotation_z_generator()
    m = np.diag([-1.0, 1, 1, 1])
    assert np.max(np.abs(m @ gen.L + gen.L.T @ m)) == 0.0


def test_noether_axisymmetric_value():
    m = axisymmetric_field()
    x4 = Position4(0.0, [1.0, 0.0, 0.0])
    u4 = Velocity4.on_shell([0.0, 1.0, 0.0])
    val = noether(m, x4, u4, rotation_z_generator())
    assert val == pytest.approx(4.0 / 3.0, abs=1e-15)


def test_noether_zero_generator():
    gen = LorentzGenerator(np.zeros((4, 4)))
    m = axisymmetric_field()
    assert noether(m, X0, U0, gen) == 0.0


def test_fd_jacobian_det_identity_map():
    det = fd_jacobian_det(lambda s: s, np.ones(8) * 0.5)
    assert det == pytest.approx(1.0, abs=1e-10)


def test_fd_jacobian_det_explicit_step():
    model = quadratic_well_field()
    h = 0.01
    for _ in range(5):
        x = Position4(RNG.uniform(-1, 1), RNG.uniform(-1, 1, 3))
        u = Velocity4.on_shell(RNG.uniform(-0.4, 0.4, 3))
        s = HalfStepState(x, start_half_step(model, x, u, h)).as_array()
        det = fd_jacobian_det(halfstep_map(model, h, "explicit"), s)
        assert det == pytest.approx(1.0, abs=1e-6)


def test_fd_jacobian_det_dg_step():
    model = quartic_well_field()
    h = 0.01
    for _ in range(3):
        x = Position4(RNG.uniform(-1, 1), RNG.uniform(0.5, 1.2, 3))
        u = Velocity4.on_shell(RNG.uniform(-0.4, 0.4, 3))
        s = HalfStepState(x, start_half_step(model, x, u, h)).as_array()
        det = fd_jacobian_det(halfstep_map(model, h, "dgrad-midpoint"), s)
        assert det == pytest.approx(1.0, abs=1e-5)


def test_fd_symplectic_defect_variational():
    model = quadratic_well_field()
    h = 0.01
    for _ in range(3):
        x = Position4(RNG.uniform(-1, 1), RNG.uniform(-1, 1, 3))
        u = Velocity4.on_shell(RNG.uniform(-0.4, 0.4, 3))
        s = initial_phase_state(model, x, u).as_array()
        defect = fd_symplectic_defect(variational_map(model, h), s)
        assert defect <= 1e-5


def test_fd_symplectic_defect_zero_field_affine():
    s = initial_phase_state(zero_field(), X0, U0).as_array()
    defect = fd_symplectic_defect(variational_map(zero_field(), 0.01), s)
    assert defect <= 1e-9


def test_fd_symplectic_defect_negative_control():
    # the explicit step on (x, p) is volume-preserving but NOT symplectic
    # for a nonlinear vector potential; the defect must be clearly visible
    model = quadratic_well_field()
    h = 0.01
    s = initial_phase_state(model, X0, U0).as_array()
    defect = fd_symplectic_defect(explicit_phase_map(model, h), s)
    det = fd_jacobian_det(explicit_phase_map(model, h), s)
    assert defect > 1e-4
    assert det == pytest.approx(1.0, abs=1e-5)


def test_reference_solve_zero_field_straight_line():
    ref = reference_solve(zero_field(), X0, U0, 5.0, 0.01)
    expected = X0.as_array() + 5.0 * U0.as_array()
    assert np.max(np.abs(ref.x_final.as_array() - expected)) <= 1e-14 * 10
    assert np.max(np.abs(ref.u_final.as_array() - U0.as_array())) <= 1e-14


def test_reference_solve_conserves_mass_shell():
    model = quadratic_well_field()
    ref = reference_solve(model, X0, U0, 10.0, 1e-4, record_every=1000)
    assert ref.max_mass_shell_dev <= 1e-12


def test_reference_solve_conserves_energy():
    model = quartic_well_field()
    u0 = Velocity4.on_shell([0.09, 0.55, 0.3])
    ref = reference_solve(model, X0, u0, 10.0, 2e-4, record_every=100)
    assert ref.max_energy_rel_err <= 1e-10


def test_reference_solve_fourth_order_self_convergence():
    # the h^4 error coefficient is trajectory-dependent; this initial value
    # sits in the clean asymptotic regime
    model = quartic_well_field()
    u0 = Velocity4.on_shell([0.2, 0.1, 0.3])
    fine = reference_solve(model, X0, u0, 5.0, 0.004 / 16)
    err = []
    for h in (0.008, 0.004):
        ref = reference_solve(model, X0, u0, 5.0, h)
        err.append(np.max(np.abs(ref.x_final.as_array()
                                 - fine.x_final.as_array())))
    ratio = err[0] / err[1]
    assert 10.0 <= ratio <= 24.0  # 4th order: ~16x per halving


def test_reference_solve_conserves_rotation_invariant():
    model = axisymmetric_field()
    x0 = Position4(0.0, [1.0, 0.0, 0.0])
    u0 = Velocity4.on_shell([0.0, 1.0, 0.0])
    ref = reference_solve(model, x0, u0, 100.0, 5e-4, record_every=1000,
                          gen=rotation_z_generator())
    assert ref.max_noether_dev <= 1e-10


def test_convergence_order_explicit():
    model = quadratic_well_field()
    rows = convergence_order("explicit", model, X0, U0, 5.0,
                             [0.04, 0.02, 0.01], h_ref=5e-4)
    for h, err, order in rows[1:]:
        assert 1.8 <= order <= 2.2


def test_convergence_order_variational():
    model = quadratic_well_field()
    rows = convergence_order("variational", model, X0, U0, 5.0,
                             [0.04, 0.02, 0.01], h_ref=5e-4)
    for h, err, order in rows[1:]:
        assert 1.8 <= order <= 2.2


def test_convergence_order_zero_field_nan_sentinel():
    rows = convergence_order("explicit", zero_field(), X0, U0, 5.0,
                             [0.05, 0.025, 0.0125], h_ref=1e-3)
    for h, err, order in rows:
        assert err <= 1e-12
        assert np.isnan(order)


def test_convergence_order_input_validation():
    model = quadratic_well_field()
    with pytest.raises(ValueError):
        convergence_order("explicit", model, X0, U0, 5.0, [0.04, 0.02])
    with pytest.raises(ValueError):
        convergence_order("explicit", model, X0, U0, 5.0, [0.01, 0.02, 0.04])


def test_diagnostics_are_deterministic():
    m = quartic_well_field()
    vals = {energy(m, [0.3, -0.2, 0.5], 1.25) for _ in range(10)}
    assert len(vals) == 1
    u = Velocity4.on_shell([0.1, 0.2, 0.3])
    assert len({mass_shell(u) for _ in range(10)}) == 1
