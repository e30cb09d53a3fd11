"""Minkowski-metric linear algebra: 4-vectors, 4x4 solves, Cayley transform.

Everything here is exact, fixed-size float64 arithmetic.  The 4x4 solver uses
Gaussian elimination with partial pivoting; the compiled kernels mirror the
same elimination order so that both code paths agree to round-off.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Diagonal of the space-time metric matrix diag(-1, 1, 1, 1).
MINKOWSKI_DIAG = np.array([-1.0, 1.0, 1.0, 1.0])

#: Relative pivot threshold below which a 4x4 system is declared singular.
PIVOT_RTOL = 1e-14


class SingularMatrixError(ValueError):
    """A 4x4 elimination hit a pivot below the singularity threshold."""


def minkowski_matrix() -> np.ndarray:
    """The metric matrix diag(-1, 1, 1, 1) as a fresh 4x4 array."""
    return np.diag(MINKOWSKI_DIAG)


def minkowski_apply(v) -> np.ndarray:
    """Apply the metric to a 4-vector: flips the sign of the time component.

    The metric is involutive, so this is also its inverse.
    """
    out = np.array(v, dtype=float)
    out[0] = -out[0]
    return out


def solve4(a_mat, b) -> np.ndarray:
    """Solve the 4x4 system ``a_mat @ y = b`` by partially pivoted elimination.

    Raises SingularMatrixError when a pivot falls below
    ``PIVOT_RTOL * max|a_mat|``.
    """
    m = np.array(a_mat, dtype=float)
    if m.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got shape {m.shape}")
    rhs = np.array(b, dtype=float)
    if rhs.shape != (4,):
        raise ValueError(f"expected a 4-vector, got shape {rhs.shape}")
    norm = float(np.max(np.abs(m)))
    for col in range(4):
        piv = col + int(np.argmax(np.abs(m[col:, col])))
        if m[piv, col] == 0.0 or abs(m[piv, col]) < PIVOT_RTOL * norm:
            raise SingularMatrixError(
                f"pivot {m[piv, col]:.3e} below threshold in column {col}")
        if piv != col:
            m[[col, piv]] = m[[piv, col]]
            rhs[[col, piv]] = rhs[[piv, col]]
        for row in range(col + 1, 4):
            f = m[row, col] / m[col, col]
            if f != 0.0:
                m[row, col + 1:] -= f * m[col, col + 1:]
                rhs[row] -= f * rhs[col]
    out = np.empty(4)
    for row in range(3, -1, -1):
        out[row] = (rhs[row] - m[row, row + 1:] @ out[row + 1:]) / m[row, row]
    return out


def cayley(z) -> np.ndarray:
    """Cayley transform ``(I - Z)^{-1} (I + Z)`` of a 4x4 matrix.

    Computed as four solves against ``I - Z`` rather than an explicit inverse.
    When Z satisfies M Z + Z^T M = 0 the result C is M-orthogonal
    (C^T M C = M) and has |det C| = 1.
    """
    z = np.asarray(z, dtype=float)
    a = np.eye(4) - z
    rhs = np.eye(4) + z
    return np.column_stack([solve4(a, rhs[:, j]) for j in range(4)])


def det4(a_mat) -> float:
    """Determinant of a 4x4 matrix via pivoted elimination; 0 for singular."""
    m = np.array(a_mat, dtype=float)
    if m.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got shape {m.shape}")
    det = 1.0
    for col in range(4):
        piv = col + int(np.argmax(np.abs(m[col:, col])))
        if m[piv, col] == 0.0:
            return 0.0
        if piv != col:
            m[[col, piv]] = m[[piv, col]]
            det = -det
        det *= m[col, col]
        for row in range(col + 1, 4):
            f = m[row, col] / m[col, col]
            if f != 0.0:
                m[row, col + 1:] -= f * m[col, col + 1:]
    return float(det)


def _as_vec3(v, name: str) -> np.ndarray:
    out = np.asarray(v, dtype=float)
    if out.shape != (3,):
        raise ValueError(f"{name} must have 3 components, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} must be finite")
    return out.copy()


@dataclass(frozen=True, eq=False)
class Position4:
    """Space-time position (t; x) parametrized by proper time."""

    t: float
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "x", _as_vec3(self.x, "x"))
        if not np.isfinite(self.t):
            raise ValueError("t must be finite")

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.t], self.x])

    @staticmethod
    def from_array(a) -> "Position4":
        a = np.asarray(a, dtype=float)
        return Position4(a[0], a[1:4])


@dataclass(frozen=True, eq=False)
class Velocity4:
    """Augmented momentum (gamma; u), gamma = dt/dtau and u = dx/dtau."""

    gamma: float
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "u", _as_vec3(self.u, "u"))
        if not np.isfinite(self.gamma) or self.gamma <= 0.0:
            raise ValueError("gamma must be finite and positive")

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.gamma], self.u])

    @staticmethod
    def from_array(a) -> "Velocity4":
        a = np.asarray(a, dtype=float)
        return Velocity4(a[0], a[1:4])

    @staticmethod
    def on_shell(u3) -> "Velocity4":
        """Velocity with gamma = sqrt(1 + |u|^2) for a given spatial momentum."""
        u3 = _as_vec3(u3, "u")
        return Velocity4(float(np.sqrt(1.0 + u3 @ u3)), u3)


@dataclass(frozen=True, eq=False)
class Momentum4:
    """Conjugate momentum p = M u + A(x)."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.shape != (4,):
            raise ValueError(f"p must have 4 components, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("p must be finite")
        object.__setattr__(self, "p", p.copy())

    def as_array(self) -> np.ndarray:
        return self.p.copy()
