"""Metric operations, 4x4 solves, Cayley transform, determinants."""
import numpy as np
import pytest

from leapfrog4d import (Position4, SingularMatrixError, Velocity4, cayley,
                        constant_eb_field, det4, faraday, minkowski_apply,
                        minkowski_matrix, solve4)

RNG = np.random.default_rng(20240817)


def test_minkowski_apply_flips_time_component():
    assert np.array_equal(minkowski_apply([1, 0, 0, 0]), [-1, 0, 0, 0])
    assert np.array_equal(minkowski_apply([0, 1, 2, 3]), [0, 1, 2, 3])
    assert np.array_equal(minkowski_apply([2, -1, 0, 5]), [-2, -1, 0, 5])


def test_minkowski_matrix_is_involution():
    m = minkowski_matrix()
    assert np.array_equal(m @ m, np.eye(4))


def test_solve4_metric_is_its_own_inverse():
    y = solve4(minkowski_matrix(), [1, 2, 3, 4])
    assert np.array_equal(y, [-1, 2, 3, 4])


def test_solve4_identity():
    b = np.array([0.3, -1.2, 4.0, 0.0])
    assert np.array_equal(solve4(np.eye(4), b), b)


def test_solve4_leapfrog_system_residual():
    # the update system of one explicit step, checked by substitution
    model = constant_eb_field(e0=(1, 0, 0), b0=(0, 0, 1))
    f = faraday(model, np.zeros(3))
    h = 0.1
    m = minkowski_matrix()
    u = np.array([1.0, 0.0, 0.0, 0.0])
    a = m - 0.5 * h * f
    b = m @ u + 0.5 * h * (f @ u)
    y = solve4(a, b)
    resid = np.max(np.abs(a @ y - b))
    assert resid <= 1e-13 * (np.max(np.abs(a)) * np.max(np.abs(y))
                             + np.max(np.abs(b)))


def test_solve4_random_roundtrip():
    for _ in range(200):
        a = RNG.normal(size=(4, 4)) + 4.0 * np.eye(4)
        x = RNG.normal(size=4)
        y = solve4(a, a @ x)
        assert np.max(np.abs(y - x)) <= 1e-12 * max(1.0, np.max(np.abs(x)))


def test_solve4_singular_raises():
    a = np.ones((4, 4))
    with pytest.raises(SingularMatrixError):
        solve4(a, np.ones(4))
    with pytest.raises(SingularMatrixError):
        solve4(np.zeros((4, 4)), np.ones(4))


def test_solve4_rejects_bad_shapes():
    with pytest.raises(ValueError):
        solve4(np.eye(3), np.ones(3))
    with pytest.raises(ValueError):
        solve4(np.eye(4), np.ones(3))


def _skew_z(e, b, h):
    model = constant_eb_field(e0=e, b0=b)
    f = faraday(model, np.zeros(3))
    return 0.5 * h * minkowski_matrix() @ f


def test_cayley_of_zero_is_identity():
    assert np.allclose(cayley(np.zeros((4, 4))), np.eye(4), atol=1e-15)


def test_cayley_is_metric_orthogonal():
    z = _skew_z((1, 0, 0), (0, 0, 1), 0.02)
    c = cayley(z)
    m = minkowski_matrix()
    assert np.max(np.abs(c.T @ m @ c - m)) <= 1e-12
    assert abs(abs(det4(c)) - 1.0) <= 1e-12


def test_cayley_singular_argument_raises():
    with pytest.raises(SingularMatrixError):
        cayley(np.eye(4))  # I - Z singular


def test_cayley_inverse_pairing():
    for _ in range(50):
        e = RNG.normal(size=3)
        b = RNG.normal(size=3)
        h = RNG.uniform(0.001, 0.5)
        z = _skew_z(e, b, h)
        assert np.max(np.abs(cayley(z) @ cayley(-z) - np.eye(4))) <= 1e-12


def test_metric_adapted_skewness_of_step_operator():
    # M Z + Z^T M vanishes for Z = h/2 M^{-1} F at round-off level
    m = minkowski_matrix()
    for _ in range(100):
        e = RNG.normal(size=3)
        b = RNG.normal(size=3)
        h = RNG.uniform(1e-4, 1.0)
        z = _skew_z(e, b, h)
        lhs = np.max(np.abs(m @ z + z.T @ m))
        assert lhs <= 1e-15 * max(1.0, np.max(np.abs(m @ z)))


def test_cayley_orthogonality_random_fields():
    m = minkowski_matrix()
    for _ in range(100):
        z = _skew_z(RNG.normal(size=3), RNG.normal(size=3),
                    RNG.uniform(1e-4, 1.0))
        c = cayley(z)
        assert np.max(np.abs(c.T @ m @ c - m)) <= 1e-12 * max(
            1.0, np.max(np.abs(c)) ** 2)


def test_det4_metric_and_identity():
    assert det4(minkowski_matrix()) == -1.0
    assert det4(np.eye(4)) == 1.0
    assert det4(np.zeros((4, 4))) == 0.0


def test_det4_cayley_has_unit_magnitude():
    z = _skew_z((1, 0, 0), (0, 0, 1), 0.02)
    assert abs(abs(det4(cayley(z))) - 1.0) <= 1e-12


def test_det4_matches_elimination_on_random_matrices():
    for _ in range(100):
        a = RNG.normal(size=(4, 4))
        assert det4(a) == pytest.approx(np.linalg.det(a), rel=1e-10, abs=1e-12)


def test_position4_roundtrip_and_validation():
    p = Position4(1.5, [1.0, 2.0, 3.0])
    assert np.array_equal(p.as_array(), [1.5, 1.0, 2.0, 3.0])
    assert np.array_equal(Position4.from_array(p.as_array()).x, p.x)
    with pytest.raises(ValueError):
        Position4(np.nan, [0, 0, 0])
    with pytest.raises(ValueError):
        Position4(0.0, [np.inf, 0, 0])


def test_velocity4_on_shell():
    u = Velocity4.on_shell([0.09, 0.05, 0.2])
    assert u.gamma == pytest.approx(np.sqrt(1.0506), abs=1e-15)
    assert 0.5 * (-u.gamma**2 + u.u @ u.u) == pytest.approx(-0.5, abs=1e-15)
    with pytest.raises(ValueError):
        Velocity4(-1.0, [0, 0, 0])
