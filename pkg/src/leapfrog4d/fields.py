"""Electromagnetic field models and discrete gradients of the scalar potential.

A field model supplies the scalar potential phi, the vector potential A, and
their derivatives.  E = -grad phi and B = curl A are derived.  The augmented
4D potential is (-phi; A); because all models are time-independent its 4x4
Jacobian has a zero first column.

Built-in models keep phi polynomial and draw A from one of three gauges
(zero, linear for a constant B, or an axially symmetric gauge for
B = (0, 0, r) with r = sqrt(x1^2 + x2^2)), which is exactly the structure the
compiled kernels evaluate.
"""
from __future__ import annotations

import enum
from typing import Sequence

import numpy as np

MAX_POLY_DEGREE = 6

#: 5-node Gauss-Legendre rule on [0, 1]; exact for polynomials of degree <= 9.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)
AVF_NODES = 0.5 * (1.0 + _GL_X)
AVF_WEIGHTS = 0.5 * _GL_W


class DiscreteGradientKind(enum.Enum):
    MIDPOINT = "midpoint"
    AVF = "avf"


def cross_matrix(b) -> np.ndarray:
    """Matrix b_hat with b_hat @ v = b x v."""
    b = np.asarray(b, dtype=float)
    return np.array([
        [0.0, -b[2], b[1]],
        [b[2], 0.0, -b[0]],
        [-b[1], b[0], 0.0],
    ])


class Polynomial3:
    """Polynomial in three variables as a list of monomial terms (c, i, j, k)."""

    def __init__(self, terms: Sequence[Sequence[float]] = ()):
        terms = [t for t in terms if float(t[0]) != 0.0]
        self.coefs = np.array([float(t[0]) for t in terms])
        self.expos = np.array([[int(t[1]), int(t[2]), int(t[3])] for t in terms],
                              dtype=np.int32).reshape(len(terms), 3)
        if np.any(self.expos < 0):
            raise ValueError("monomial exponents must be non-negative")

    @property
    def terms(self) -> list[tuple[float, int, int, int]]:
        return [(float(c), int(e[0]), int(e[1]), int(e[2]))
                for c, e in zip(self.coefs, self.expos)]

    def max_degree_per_var(self) -> int:
        return int(self.expos.max()) if len(self.coefs) else 0

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        s = 0.0
        for c, e in zip(self.coefs, self.expos):
            s += c * x[0] ** e[0] * x[1] ** e[1] * x[2] ** e[2]
        return float(s)

    def diff(self, var: int) -> "Polynomial3":
        terms = []
        for c, e in zip(self.coefs, self.expos):
            if e[var] > 0:
                ne = list(e)
                ne[var] -= 1
                terms.append((c * e[var], ne[0], ne[1], ne[2]))
        return Polynomial3(terms)

    def __sub__(self, other: "Polynomial3") -> "Polynomial3":
        terms = self.terms + [(-c, i, j, k) for c, i, j, k in other.terms]
        return Polynomial3(terms)


class FieldModel:
    """Base interface: phi, grad_phi, A and its Jacobian; E, B derived."""

    def phi(self, x) -> float:
        raise NotImplementedError

    def grad_phi(self, x) -> np.ndarray:
        raise NotImplementedError

    def A(self, x) -> np.ndarray:
        raise NotImplementedError

    def A_jac(self, x) -> np.ndarray:
        """3x3 Jacobian J[i, j] = dA_i/dx_j."""
        raise NotImplementedError

    def E(self, x) -> np.ndarray:
        return -self.grad_phi(x)

    def B(self, x) -> np.ndarray:
        """Magnetic field as the curl of A, read off the Jacobian."""
        j = self.A_jac(x)
        return np.array([j[2, 1] - j[1, 2], j[0, 2] - j[2, 0], j[1, 0] - j[0, 1]])

    def aug_A(self, x4) -> np.ndarray:
        """Augmented potential (-phi; A) at a space-time point."""
        xs = np.asarray(x4, dtype=float)[1:]
        return np.concatenate([[-self.phi(xs)], self.A(xs)])

    def aug_A_jac(self, x4) -> np.ndarray:
        """4x4 Jacobian of the augmented potential; first column is zero."""
        xs = np.asarray(x4, dtype=float)[1:]
        out = np.zeros((4, 4))
        out[0, 1:] = -self.grad_phi(xs)
        out[1:, 1:] = self.A_jac(xs)
        return out

    def kernel_spec(self):
        """Packed representation for the compiled kernels, or None."""
        return None


class AKind(enum.IntEnum):
    """Vector-potential gauge families understood by the kernels."""

    ZERO = 0
    LINEAR = 1    # A = scale * (B0 x x) / 2, constant B = scale * B0
    AXIAL_R = 2   # A = scale * r/3 * (-x2, x1, 0), B = scale * (0, 0, r)
    POLY = 3      # per-component polynomials


def _axial_A(x) -> np.ndarray:
    r = float(np.hypot(x[0], x[1]))
    return np.array([-x[1] * r / 3.0, x[0] * r / 3.0, 0.0])


def _axial_A_jac(x) -> np.ndarray:
    r = float(np.hypot(x[0], x[1]))
    out = np.zeros((3, 3))
    if r == 0.0:
        return out
    out[0, 0] = -x[0] * x[1] / (3.0 * r)
    out[0, 1] = -r / 3.0 - x[1] * x[1] / (3.0 * r)
    out[1, 0] = r / 3.0 + x[0] * x[0] / (3.0 * r)
    out[1, 1] = x[0] * x[1] / (3.0 * r)
    return out


class StructuredField(FieldModel):
    """Polynomial scalar potential combined with one of the gauge families."""

    def __init__(self, phi_poly: Polynomial3, a_kind: AKind = AKind.ZERO,
                 b0=None, a_polys: Sequence[Polynomial3] | None = None,
                 a_scale: float = 1.0):
        self.phi_poly = phi_poly
        self.grad_polys = [phi_poly.diff(v) for v in range(3)]
        self.a_kind = AKind(a_kind)
        self.a_scale = float(a_scale)
        self.b0 = np.zeros(3) if b0 is None else np.asarray(b0, dtype=float).copy()
        if self.a_kind == AKind.POLY:
            if a_polys is None or len(a_polys) != 3:
                raise ValueError("POLY gauge needs three component polynomials")
            self.a_polys = list(a_polys)
            self.a_jac_polys = [[p.diff(v) for v in range(3)] for p in self.a_polys]
        else:
            self.a_polys = None
            self.a_jac_polys = None

    def scaled(self, phi_factor: float, a_factor: float) -> "StructuredField":
        """A copy with phi and A multiplied by constants (momentum rescalings)."""
        phi = Polynomial3([(c * phi_factor, i, j, k)
                           for c, i, j, k in self.phi_poly.terms])
        return StructuredField(phi, self.a_kind, b0=self.b0,
                               a_polys=self.a_polys,
                               a_scale=self.a_scale * a_factor)

    def phi(self, x) -> float:
        return self.phi_poly(x)

    def grad_phi(self, x) -> np.ndarray:
        return np.array([g(x) for g in self.grad_polys])

    def A(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.a_kind == AKind.ZERO:
            return np.zeros(3)
        if self.a_kind == AKind.LINEAR:
            return self.a_scale * 0.5 * np.cross(self.b0, x)
        if self.a_kind == AKind.AXIAL_R:
            return self.a_scale * _axial_A(x)
        return self.a_scale * np.array([p(x) for p in self.a_polys])

    def A_jac(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.a_kind == AKind.ZERO:
            return np.zeros((3, 3))
        if self.a_kind == AKind.LINEAR:
            return self.a_scale * 0.5 * cross_matrix(self.b0)
        if self.a_kind == AKind.AXIAL_R:
            return self.a_scale * _axial_A_jac(x)
        return self.a_scale * np.array(
            [[self.a_jac_polys[i][j](x) for j in range(3)] for i in range(3)])

    def B(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.a_kind == AKind.ZERO:
            return np.zeros(3)
        if self.a_kind == AKind.LINEAR:
            return self.a_scale * self.b0
        if self.a_kind == AKind.AXIAL_R:
            return self.a_scale * np.array([0.0, 0.0, float(np.hypot(x[0], x[1]))])
        return super().B(x)

    def kernel_spec(self) -> dict:
        spec = {
            "phi": self.phi_poly.terms,
            "grad_phi": [g.terms for g in self.grad_polys],
            "a_kind": int(self.a_kind),
            "a_scale": self.a_scale,
            "b0": self.b0.tolist(),
        }
        if self.a_kind == AKind.POLY:
            spec["a"] = [p.terms for p in self.a_polys]
            spec["a_jac"] = [[self.a_jac_polys[i][j].terms for j in range(3)]
                             for i in range(3)]
        return spec


def quadratic_well_field() -> StructuredField:
    """phi = x1^2 + 2 x2^2 + 3 x3^2 - x1 with B = (0, 0, r)."""
    phi = Polynomial3([(1, 2, 0, 0), (2, 0, 2, 0), (3, 0, 0, 2), (-1, 1, 0, 0)])
    return StructuredField(phi, AKind.AXIAL_R)


def _quartic_poly() -> Polynomial3:
    return Polynomial3([(1, 3, 0, 0), (-1, 0, 3, 0), (0.2, 4, 0, 0),
                        (1, 0, 4, 0), (1, 0, 0, 4)])


def quartic_well_field() -> StructuredField:
    """phi = x1^3 - x2^3 + x1^4/5 + x2^4 + x3^4 with B = (0, 0, r)."""
    return StructuredField(_quartic_poly(), AKind.AXIAL_R)


def quartic_uniform_b_field() -> StructuredField:
    """The quartic potential with a uniform B = (0, 0, 1)."""
    return StructuredField(_quartic_poly(), AKind.LINEAR, b0=(0.0, 0.0, 1.0))


def constant_eb_field(e0=(1.0, 0.0, 0.0), b0=(0.0, 0.0, 1.0)) -> StructuredField:
    """Uniform E and B: phi = -E0.x and A = B0 x x / 2."""
    e0 = np.asarray(e0, dtype=float)
    phi = Polynomial3([(-e0[0], 1, 0, 0), (-e0[1], 0, 1, 0), (-e0[2], 0, 0, 1)])
    return StructuredField(phi, AKind.LINEAR, b0=b0)


def axisymmetric_field() -> StructuredField:
    """phi = |x|^2 with B = (0, 0, r); invariant under rotations about x3."""
    phi = Polynomial3([(1, 2, 0, 0), (1, 0, 2, 0), (1, 0, 0, 2)])
    return StructuredField(phi, AKind.AXIAL_R)


def zero_field() -> StructuredField:
    return StructuredField(Polynomial3(), AKind.ZERO)


def polynomial_field(phi_terms, a_terms=None) -> StructuredField:
    """User-defined field from monomial term lists (degree <= 6 per variable).

    ``phi_terms`` is a list of (c, i, j, k); ``a_terms``, when given, holds one
    such list per component of A.
    """
    phi = Polynomial3(phi_terms)
    if phi.max_degree_per_var() > MAX_POLY_DEGREE:
        raise ValueError(f"phi degree exceeds {MAX_POLY_DEGREE} per variable")
    if a_terms is None:
        return StructuredField(phi, AKind.ZERO)
    if len(a_terms) != 3:
        raise ValueError("A needs exactly three component term lists")
    a_polys = [Polynomial3(t) for t in a_terms]
    for p in a_polys:
        if p.max_degree_per_var() > MAX_POLY_DEGREE:
            raise ValueError(f"A degree exceeds {MAX_POLY_DEGREE} per variable")
    return StructuredField(phi, AKind.POLY, a_polys=a_polys)


#: Models behind the CLI preset names.
BUILTIN_FIELDS = {
    "example1": quadratic_well_field,
    "example2": quartic_well_field,
    "example3": quartic_uniform_b_field,
    "axisym": axisymmetric_field,
    "constant-eb": constant_eb_field,
    "zero": zero_field,
}


def builtin_field(name: str, **params) -> StructuredField:
    try:
        factory = BUILTIN_FIELDS[name]
    except KeyError:
        raise ValueError(f"unknown field preset {name!r}; "
                         f"choose from {sorted(BUILTIN_FIELDS)}") from None
    return factory(**params)


def faraday(model: FieldModel, x) -> np.ndarray:
    """Skew-symmetric field tensor at a spatial point.

    First row (0, -E^T), first column (0; E), lower-right block -B_hat.
    """
    x = np.asarray(x, dtype=float)
    e = model.E(x)
    out = np.zeros((4, 4))
    out[0, 1:] = -e
    out[1:, 0] = e
    out[1:, 1:] = -cross_matrix(model.B(x))
    return out


def midpoint_dgrad(model: FieldModel, x_new, x_old) -> np.ndarray:
    """Midpoint discrete gradient of phi between two spatial points.

    Satisfies g . (x_new - x_old) = phi(x_new) - phi(x_old) exactly and
    reduces to grad phi at coincident points (the correction is 0/0 there, so
    points closer than 1e-12 relative fall back to the plain gradient).
    """
    x_new = np.asarray(x_new, dtype=float)
    x_old = np.asarray(x_old, dtype=float)
    mid = 0.5 * (x_new + x_old)
    dx = x_new - x_old
    g = model.grad_phi(mid)
    nd2 = float(dx @ dx)
    if np.sqrt(nd2) < 1e-12 * (1.0 + float(np.linalg.norm(mid))):
        return g
    corr = (model.phi(x_new) - model.phi(x_old) - float(g @ dx)) / nd2
    return g + corr * dx


def avf_dgrad(model: FieldModel, x_new, x_old) -> np.ndarray:
    """Average-vector-field discrete gradient: the line integral of grad phi.

    Uses the fixed 5-node Gauss-Legendre rule, exact for polynomial phi of
    degree <= 9; non-polynomial models accept the quadrature error.
    """
    x_new = np.asarray(x_new, dtype=float)
    x_old = np.asarray(x_old, dtype=float)
    dx = x_new - x_old
    out = np.zeros(3)
    for theta, w in zip(AVF_NODES, AVF_WEIGHTS):
        out += w * model.grad_phi(x_old + theta * dx)
    return out


def discrete_gradient(model: FieldModel, kind: DiscreteGradientKind,
                      x_new, x_old) -> np.ndarray:
    if kind == DiscreteGradientKind.MIDPOINT:
        return midpoint_dgrad(model, x_new, x_old)
    return avf_dgrad(model, x_new, x_old)


def dg_faraday(model: FieldModel, kind: DiscreteGradientKind,
               x_new_half, x_old_half, x_mid) -> np.ndarray:
    """Field tensor with the discrete gradient in place of grad phi.

    First row (0, g^T), first column (0; -g) for g the discrete gradient
    between the half-step points; the magnetic block is evaluated at x_mid.
    Skew-symmetric by construction.
    """
    g = discrete_gradient(model, kind, x_new_half, x_old_half)
    out = np.zeros((4, 4))
    out[0, 1:] = g
    out[1:, 0] = -g
    out[1:, 1:] = -cross_matrix(model.B(np.asarray(x_mid, dtype=float)))
    return out
