"""Field models, derived E/B consistency, discrete gradients, tensors."""
import numpy as np
import pytest

from leapfrog4d import (DiscreteGradientKind, avf_dgrad, axisymmetric_field,
                        builtin_field, constant_eb_field, dg_faraday,
                        discrete_gradient, faraday, midpoint_dgrad,
                        polynomial_field, quadratic_well_field,
                        quartic_uniform_b_field, quartic_well_field,
                        zero_field)

RNG = np.random.default_rng(20240818)

ALL_BUILTINS = ["example1", "example2", "example3", "axisym", "constant-eb",
                "zero"]
WITH_A = ["example1", "example2", "example3", "axisym", "constant-eb"]


def random_points(n, lo=-2.0, hi=2.0):
    return RNG.uniform(lo, hi, size=(n, 3))


def test_quadratic_well_values():
    m = quadratic_well_field()
    x = np.array([0.0, 1.0, 0.1])
    assert m.phi(x) == pytest.approx(2.03, abs=1e-15)
    assert np.allclose(m.E(x), [1.0, -4.0, -0.6], atol=1e-15)
    assert np.allclose(m.B(x), [0.0, 0.0, 1.0], atol=1e-15)


def test_quartic_well_values():
    m = quartic_well_field()
    x = np.array([0.5, -1.0, 2.0])
    phi = 0.5**3 - (-1.0) ** 3 + 0.5**4 / 5 + (-1.0) ** 4 + 2.0**4
    assert m.phi(x) == pytest.approx(phi, rel=1e-15)
    grad = np.array([3 * 0.25 + 0.8 * 0.125, -3 * 1.0 + 4 * (-1.0) ** 3,
                     4 * 8.0])
    assert np.allclose(m.grad_phi(x), grad, rtol=1e-15)


def test_uniform_b_gauge():
    m = quartic_uniform_b_field()
    for x in random_points(20):
        assert np.allclose(m.B(x), [0, 0, 1], atol=1e-15)
        assert np.allclose(m.A(x), 0.5 * np.array([-x[1], x[0], 0.0]),
                           atol=1e-15)


def test_derived_e_matches_finite_differences():
    eps = 1e-6
    for name in ALL_BUILTINS:
        m = builtin_field(name)
        for x in random_points(10, -1.5, 1.5):
            e = m.E(x)
            for i in range(3):
                dp = x.copy()
                dm = x.copy()
                dp[i] += eps
                dm[i] -= eps
                fd = -(m.phi(dp) - m.phi(dm)) / (2 * eps)
                assert e[i] == pytest.approx(fd, abs=1e-6)


def test_derived_b_matches_finite_differences_of_a():
    eps = 1e-6
    for name in WITH_A:
        m = builtin_field(name)
        for x in random_points(10, 0.5, 1.5):
            b = m.B(x)
            curl = np.zeros(3)
            for j in range(3):
                dp = x.copy()
                dm = x.copy()
                dp[j] += eps
                dm[j] -= eps
                da = (m.A(dp) - m.A(dm)) / (2 * eps)
                # accumulate dA_i/dx_j into the curl
                curl[0] += da[2] * (j == 1) - da[1] * (j == 2)
                curl[1] += da[0] * (j == 2) - da[2] * (j == 0)
                curl[2] += da[1] * (j == 0) - da[0] * (j == 1)
            assert np.allclose(b, curl, atol=1e-6)


def test_curl_of_jacobian_equals_stated_b():
    for name in WITH_A:
        m = builtin_field(name)
        for x in random_points(100):
            j = m.A_jac(x)
            curl = np.array([j[2, 1] - j[1, 2], j[0, 2] - j[2, 0],
                             j[1, 0] - j[0, 1]])
            assert np.max(np.abs(curl - m.B(x))) <= 1e-12 * max(
                1.0, float(np.max(np.abs(m.B(x)))))


def test_faraday_block_structure():
    m = constant_eb_field(e0=(1, 0, 0), b0=(0, 0, 0))
    f = faraday(m, np.zeros(3))
    assert np.array_equal(f[0], [0, -1, 0, 0])
    assert np.array_equal(f[:, 0], [0, 1, 0, 0])
    assert np.count_nonzero(f[1:, 1:]) == 0

    m = constant_eb_field(e0=(0, 0, 0), b0=(0, 0, 1))
    f = faraday(m, np.zeros(3))
    assert np.array_equal(f[1:, 1:], [[0, 1, 0], [-1, 0, 0], [0, 0, 0]])


def test_faraday_quadratic_well_point():
    m = quadratic_well_field()
    f = faraday(m, np.array([0.0, 1.0, 0.1]))
    assert np.allclose(f[0, 1:], [-1.0, 4.0, 0.6], atol=1e-15)  # -E
    assert np.allclose(f[1:, 0], [1.0, -4.0, -0.6], atol=1e-15)  # E
    assert np.allclose(f[1:, 1:], [[0, 1, 0], [-1, 0, 0], [0, 0, 0]],
                       atol=1e-15)


def test_faraday_is_skew():
    for name in ALL_BUILTINS:
        m = builtin_field(name)
        for x in random_points(5):
            f = faraday(m, x)
            assert np.array_equal(f, -f.T)


def test_midpoint_dgrad_linear_potential_is_exact():
    m = constant_eb_field(e0=(0.7, -0.3, 1.1))
    for _ in range(10):
        a, b = RNG.normal(size=3), RNG.normal(size=3)
        g = midpoint_dgrad(m, a, b)
        assert np.allclose(g, [-0.7, 0.3, -1.1], atol=1e-14)


def test_dgrads_reduce_to_gradient_at_coincident_points():
    m = quartic_well_field()
    x = np.array([0.3, -0.8, 0.5])
    assert np.allclose(midpoint_dgrad(m, x, x), m.grad_phi(x), atol=1e-15)
    assert np.allclose(avf_dgrad(m, x, x), m.grad_phi(x), rtol=1e-14)


def test_midpoint_dgrad_secant_identity():
    m = quartic_well_field()
    x_old = np.array([0.0, 1.0, 0.1])
    x_new = np.array([0.1, 1.05, 0.12])
    g = midpoint_dgrad(m, x_new, x_old)
    lhs = g @ (x_new - x_old)
    rhs = m.phi(x_new) - m.phi(x_old)
    assert lhs == pytest.approx(rhs, abs=1e-14)


def test_avf_dgrad_secant_identity_quartic():
    m = quartic_well_field()
    x_old = np.array([0.0, 1.0, 0.1])
    x_new = np.array([0.1, 1.05, 0.12])
    g = avf_dgrad(m, x_new, x_old)
    assert g @ (x_new - x_old) == pytest.approx(m.phi(x_new) - m.phi(x_old),
                                                abs=1e-13)


def test_avf_equals_midpoint_gradient_for_quadratic():
    m = quadratic_well_field()
    for _ in range(20):
        a, b = RNG.normal(size=3), RNG.normal(size=3)
        mid_grad = m.grad_phi(0.5 * (a + b))
        assert np.allclose(avf_dgrad(m, a, b), mid_grad, atol=1e-14)


def test_dgrad_secant_identity_all_builtins():
    for name in ALL_BUILTINS:
        m = builtin_field(name)
        for kind in DiscreteGradientKind:
            for _ in range(25):
                a, b = RNG.normal(size=3), RNG.normal(size=3)
                g = discrete_gradient(m, kind, a, b)
                lhs = g @ (a - b)
                rhs = m.phi(a) - m.phi(b)
                tol = 1e-12 * (1 + abs(m.phi(a)) + abs(m.phi(b)))
                assert abs(lhs - rhs) <= tol


def test_dg_faraday_constant_e_equals_field_tensor():
    m = constant_eb_field(e0=(1, 0.5, -0.2), b0=(0.3, 0, 1))
    x_mid = np.array([0.4, -0.1, 0.9])
    for kind in DiscreteGradientKind:
        fbar = dg_faraday(m, kind, x_mid + 0.05, x_mid - 0.03, x_mid)
        assert np.allclose(fbar, faraday(m, x_mid), atol=1e-14)


def test_dg_faraday_zero_field_and_skewness():
    z = zero_field()
    fbar = dg_faraday(z, DiscreteGradientKind.MIDPOINT,
                      np.ones(3), np.zeros(3), np.zeros(3))
    assert np.count_nonzero(fbar) == 0

    m = quartic_well_field()
    fbar = dg_faraday(m, DiscreteGradientKind.AVF,
                      np.array([0.1, 1.05, 0.12]), np.array([0.0, 1.0, 0.1]),
                      np.array([0.05, 1.02, 0.11]))
    assert np.array_equal(fbar, -fbar.T)


def test_axisymmetric_rotation_invariance():
    m = axisymmetric_field()
    for s in (0.1, 1.0, np.pi):
        c, sn = np.cos(s), np.sin(s)
        rot = np.array([[c, -sn, 0], [sn, c, 0], [0, 0, 1.0]])
        e_sl = np.eye(4)
        e_sl[1:, 1:] = rot
        for x in random_points(20):
            x4 = np.concatenate([[0.123], x])
            lhs = e_sl.T @ m.aug_A(e_sl @ x4)
            assert np.max(np.abs(lhs - m.aug_A(x4))) <= 1e-12


def test_polynomial_field_matches_quadratic_builtin():
    poly = polynomial_field(
        [(1, 2, 0, 0), (2, 0, 2, 0), (3, 0, 0, 2), (-1, 1, 0, 0)])
    ref = quadratic_well_field()
    for x in random_points(20):
        assert poly.phi(x) == pytest.approx(ref.phi(x), rel=1e-14, abs=1e-14)
        assert np.allclose(poly.grad_phi(x), ref.grad_phi(x), atol=1e-13)


def test_polynomial_field_with_vector_potential():
    # A = (-x2/2, x1/2, 0) gives B = (0, 0, 1)
    poly = polynomial_field([], [[(-0.5, 0, 1, 0)], [(0.5, 1, 0, 0)], []])
    for x in random_points(10):
        assert np.allclose(poly.B(x), [0, 0, 1], atol=1e-15)


def test_polynomial_degree_cap():
    with pytest.raises(ValueError):
        polynomial_field([(1.0, 7, 0, 0)])
    with pytest.raises(ValueError):
        polynomial_field([], [[(1.0, 0, 0, 7)], [], []])


def test_aug_a_jacobian_structure():
    m = quartic_well_field()
    x4 = np.array([2.0, 0.3, -0.4, 0.7])
    j = m.aug_A_jac(x4)
    assert np.count_nonzero(j[:, 0]) == 0
    assert np.allclose(j[0, 1:], -m.grad_phi(x4[1:]), atol=1e-15)
    assert np.allclose(j[1:, 1:], m.A_jac(x4[1:]), atol=1e-15)


def test_unknown_builtin_name():
    with pytest.raises(ValueError):
        builtin_field("example9")
