# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled stepping loops (preferred backend).

Mirrors leapfrog4d._kernels_py: same update formulas, records layout, and
summary vector; see that module for the layout documentation.  Field models
arrive as packed polynomial tables plus a gauge family for the vector
potential, so the loops run without touching Python objects and release the
GIL.
"""
from libc.math cimport fabs, hypot, isnan, sqrt, NAN, INFINITY

import numpy as np

BACKEND = "compiled"

cdef enum:
    C_REC_COLS = 15
    C_SUM_LEN = 14

cdef enum:
    C_OK = 0
    C_NO_CONVERGENCE = 1
    C_SINGULAR = 2

REC_COLS = C_REC_COLS
SUM_LEN = C_SUM_LEN
STATUS_OK = C_OK
STATUS_NO_CONVERGENCE = C_NO_CONVERGENCE
STATUS_SINGULAR = C_SINGULAR

cdef double PIVOT_RTOL = 1e-14
cdef double FD_STEP = 1e-7

cdef double GL_NODES[5]
cdef double GL_WTS[5]
_nodes, _wts = np.polynomial.legendre.leggauss(5)
for _i in range(5):
    GL_NODES[_i] = 0.5 * (1.0 + _nodes[_i])
    GL_WTS[_i] = 0.5 * _wts[_i]
del _nodes, _wts, _i


# --------------------------------------------------------------------------
# Field tables

cdef class FieldTable:
    """Packed field model: polynomial term slots plus the A-gauge family.

    Slots (term ranges in ``off``): 0 phi, 1-3 grad phi, 4-6 A components,
    7-15 row-major A Jacobian (slots 4+ populated for the polynomial gauge).
    """
    cdef double[::1] coefs
    cdef int[::1] expos
    cdef int[::1] off
    cdef int a_kind
    cdef double a_scale
    cdef double[::1] b0


ctypedef struct FT:
    const double* coefs
    const int* expos
    const int* off
    int a_kind
    double a_scale
    const double* b0


cdef void ft_bind(FieldTable table, FT* ft):
    ft.coefs = &table.coefs[0]
    ft.expos = &table.expos[0]
    ft.off = &table.off[0]
    ft.a_kind = table.a_kind
    ft.a_scale = table.a_scale
    ft.b0 = &table.b0[0]


def prepare_field(model):
    """Pack a field model's kernel spec into a FieldTable."""
    spec = model.kernel_spec()
    if spec is None:
        raise TypeError(
            f"{type(model).__name__} has no packed kernel representation; "
            "use the pure-Python backend for custom models")
    slots = [spec["phi"]] + list(spec["grad_phi"])
    if spec["a_kind"] == 3:
        slots += list(spec["a"])
        for row in spec["a_jac"]:
            slots += list(row)
    else:
        slots += [[]] * 12

    coefs = []
    expos = []
    off = [0]
    for terms in slots:
        for c, i, j, k in terms:
            coefs.append(float(c))
            expos += [int(i), int(j), int(k)]
        off.append(len(coefs))
    if not coefs:
        coefs = [0.0]
        expos = [0, 0, 0]

    table = FieldTable()
    table.coefs = np.asarray(coefs, dtype=np.float64)
    table.expos = np.asarray(expos, dtype=np.int32)
    table.off = np.asarray(off, dtype=np.int32)
    table.a_kind = int(spec["a_kind"])
    table.a_scale = float(spec["a_scale"])
    table.b0 = np.asarray(spec["b0"], dtype=np.float64)
    return table


cdef inline double poly_slot(FT* ft, int slot, const double* xs) noexcept nogil:
    cdef int k, e, i
    cdef double s = 0.0, m
    for k in range(ft.off[slot], ft.off[slot + 1]):
        m = ft.coefs[k]
        e = ft.expos[3 * k]
        for i in range(e):
            m *= xs[0]
        e = ft.expos[3 * k + 1]
        for i in range(e):
            m *= xs[1]
        e = ft.expos[3 * k + 2]
        for i in range(e):
            m *= xs[2]
        s += m
    return s


cdef inline double ft_phi(FT* ft, const double* xs) noexcept nogil:
    return poly_slot(ft, 0, xs)


cdef inline void ft_gradphi(FT* ft, const double* xs, double* g) noexcept nogil:
    g[0] = poly_slot(ft, 1, xs)
    g[1] = poly_slot(ft, 2, xs)
    g[2] = poly_slot(ft, 3, xs)


cdef inline void ft_A(FT* ft, const double* xs, double* a) noexcept nogil:
    cdef double r, s = ft.a_scale
    if ft.a_kind == 0:
        a[0] = 0.0
        a[1] = 0.0
        a[2] = 0.0
    elif ft.a_kind == 1:
        a[0] = s * (0.5 * (ft.b0[1] * xs[2] - ft.b0[2] * xs[1]))
        a[1] = s * (0.5 * (ft.b0[2] * xs[0] - ft.b0[0] * xs[2]))
        a[2] = s * (0.5 * (ft.b0[0] * xs[1] - ft.b0[1] * xs[0]))
    elif ft.a_kind == 2:
        r = hypot(xs[0], xs[1])
        a[0] = s * (-xs[1] * r / 3.0)
        a[1] = s * (xs[0] * r / 3.0)
        a[2] = 0.0
    else:
        a[0] = s * poly_slot(ft, 4, xs)
        a[1] = s * poly_slot(ft, 5, xs)
        a[2] = s * poly_slot(ft, 6, xs)


cdef inline void ft_Ajac(FT* ft, const double* xs, double* j) noexcept nogil:
    """Row-major 3x3 Jacobian dA_i/dx_j."""
    cdef double r, s = ft.a_scale
    cdef int i
    for i in range(9):
        j[i] = 0.0
    if ft.a_kind == 0:
        return
    if ft.a_kind == 1:
        j[1] = s * (-0.5 * ft.b0[2])
        j[2] = s * (0.5 * ft.b0[1])
        j[3] = s * (0.5 * ft.b0[2])
        j[5] = s * (-0.5 * ft.b0[0])
        j[6] = s * (-0.5 * ft.b0[1])
        j[7] = s * (0.5 * ft.b0[0])
        return
    if ft.a_kind == 2:
        r = hypot(xs[0], xs[1])
        if r == 0.0:
            return
        j[0] = s * (-xs[0] * xs[1] / (3.0 * r))
        j[1] = s * (-r / 3.0 - xs[1] * xs[1] / (3.0 * r))
        j[3] = s * (r / 3.0 + xs[0] * xs[0] / (3.0 * r))
        j[4] = s * (xs[0] * xs[1] / (3.0 * r))
        return
    for i in range(9):
        j[i] = s * poly_slot(ft, 7 + i, xs)


cdef inline void ft_B(FT* ft, const double* xs, double* b) noexcept nogil:
    cdef double s = ft.a_scale
    if ft.a_kind == 0:
        b[0] = 0.0
        b[1] = 0.0
        b[2] = 0.0
    elif ft.a_kind == 1:
        b[0] = s * ft.b0[0]
        b[1] = s * ft.b0[1]
        b[2] = s * ft.b0[2]
    elif ft.a_kind == 2:
        b[0] = 0.0
        b[1] = 0.0
        b[2] = s * hypot(xs[0], xs[1])
    else:
        b[0] = s * (poly_slot(ft, 7 + 7, xs) - poly_slot(ft, 7 + 5, xs))
        b[1] = s * (poly_slot(ft, 7 + 2, xs) - poly_slot(ft, 7 + 6, xs))
        b[2] = s * (poly_slot(ft, 7 + 3, xs) - poly_slot(ft, 7 + 1, xs))


# --------------------------------------------------------------------------
# Small dense linear algebra (row-major 4x4, mirrors minkowski.solve4)

cdef inline int solve4_c(double* a, double* b, double* out) noexcept nogil:
    """Partially pivoted elimination; destroys a and b.  0 ok, 1 singular."""
    cdef int col, row, piv, i
    cdef double norm = 0.0, av, f, tmp
    for i in range(16):
        av = fabs(a[i])
        if av > norm:
            norm = av
    for col in range(4):
        piv = col
        av = fabs(a[4 * col + col])
        for row in range(col + 1, 4):
            if fabs(a[4 * row + col]) > av:
                av = fabs(a[4 * row + col])
                piv = row
        if a[4 * piv + col] == 0.0 or fabs(a[4 * piv + col]) < PIVOT_RTOL * norm:
            return 1
        if piv != col:
            for i in range(4):
                tmp = a[4 * col + i]
                a[4 * col + i] = a[4 * piv + i]
                a[4 * piv + i] = tmp
            tmp = b[col]
            b[col] = b[piv]
            b[piv] = tmp
        for row in range(col + 1, 4):
            f = a[4 * row + col] / a[4 * col + col]
            if f != 0.0:
                for i in range(col + 1, 4):
                    a[4 * row + i] -= f * a[4 * col + i]
                b[row] -= f * b[col]
    for row in range(3, -1, -1):
        tmp = b[row]
        for i in range(row + 1, 4):
            tmp -= a[4 * row + i] * out[i]
        out[row] = tmp / a[4 * row + row]
    return 0


cdef inline void mat4vec(const double* a, const double* v, double* out) noexcept nogil:
    cdef int i
    for i in range(4):
        out[i] = (a[4 * i] * v[0] + a[4 * i + 1] * v[1]
                  + a[4 * i + 2] * v[2] + a[4 * i + 3] * v[3])


cdef inline void minkowski_vec(const double* v, double* out) noexcept nogil:
    out[0] = -v[0]
    out[1] = v[1]
    out[2] = v[2]
    out[3] = v[3]


cdef inline double max_abs4(const double* v) noexcept nogil:
    cdef double m = fabs(v[0])
    cdef int i
    for i in range(1, 4):
        if fabs(v[i]) > m:
            m = fabs(v[i])
    return m


cdef inline void cross3(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


cdef inline int solve3_c(const double* a, const double* b, double* out) noexcept nogil:
    """Cramer solve of a 3x3 system (mirrors integrators._solve3)."""
    cdef double det, d
    cdef double mm[9]
    cdef int col, i
    det = (a[0] * (a[4] * a[8] - a[5] * a[7])
           - a[1] * (a[3] * a[8] - a[5] * a[6])
           + a[2] * (a[3] * a[7] - a[4] * a[6]))
    if det == 0.0:
        return 1
    for col in range(3):
        for i in range(9):
            mm[i] = a[i]
        mm[col] = b[0]
        mm[3 + col] = b[1]
        mm[6 + col] = b[2]
        d = (mm[0] * (mm[4] * mm[8] - mm[5] * mm[7])
             - mm[1] * (mm[3] * mm[8] - mm[5] * mm[6])
             + mm[2] * (mm[3] * mm[7] - mm[4] * mm[6]))
        out[col] = d / det
    return 0


# --------------------------------------------------------------------------
# Field tensors

cdef inline void fill_faraday(FT* ft, const double* xs, double* f) noexcept nogil:
    cdef double g[3]
    cdef double b[3]
    ft_gradphi(ft, xs, g)
    ft_B(ft, xs, b)
    f[0] = 0.0
    f[1] = g[0]
    f[2] = g[1]
    f[3] = g[2]
    f[4] = -g[0]
    f[8] = -g[1]
    f[12] = -g[2]
    f[5] = 0.0
    f[6] = b[2]
    f[7] = -b[1]
    f[9] = -b[2]
    f[10] = 0.0
    f[11] = b[0]
    f[13] = b[1]
    f[14] = -b[0]
    f[15] = 0.0


cdef inline void dgrad_c(FT* ft, int kind, const double* xnew,
                         const double* xold, double* g) noexcept nogil:
    """Discrete gradient of phi: kind 1 midpoint, kind 2 average vector field."""
    cdef double mid[3]
    cdef double dx[3]
    cdef double pt[3]
    cdef double gq[3]
    cdef double nd2, corr, theta
    cdef int i, q
    for i in range(3):
        mid[i] = 0.5 * (xnew[i] + xold[i])
        dx[i] = xnew[i] - xold[i]
    if kind == 1:
        ft_gradphi(ft, mid, g)
        nd2 = dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2]
        if sqrt(nd2) < 1e-12 * (1.0 + sqrt(mid[0] * mid[0] + mid[1] * mid[1]
                                           + mid[2] * mid[2])):
            return
        corr = (ft_phi(ft, xnew) - ft_phi(ft, xold)
                - (g[0] * dx[0] + g[1] * dx[1] + g[2] * dx[2])) / nd2
        for i in range(3):
            g[i] = g[i] + corr * dx[i]
    else:
        g[0] = 0.0
        g[1] = 0.0
        g[2] = 0.0
        for q in range(5):
            theta = GL_NODES[q]
            for i in range(3):
                pt[i] = xold[i] + theta * dx[i]
            ft_gradphi(ft, pt, gq)
            for i in range(3):
                g[i] += GL_WTS[q] * gq[i]


cdef inline void fill_dg_faraday(const double* g, const double* b,
                                 double* f) noexcept nogil:
    f[0] = 0.0
    f[1] = g[0]
    f[2] = g[1]
    f[3] = g[2]
    f[4] = -g[0]
    f[8] = -g[1]
    f[12] = -g[2]
    f[5] = 0.0
    f[6] = b[2]
    f[7] = -b[1]
    f[9] = -b[2]
    f[10] = 0.0
    f[11] = b[0]
    f[13] = b[1]
    f[14] = -b[0]
    f[15] = 0.0


cdef inline void aug_A_c(FT* ft, const double* x4, double* out) noexcept nogil:
    cdef double a[3]
    ft_A(ft, x4 + 1, a)
    out[0] = -ft_phi(ft, x4 + 1)
    out[1] = a[0]
    out[2] = a[1]
    out[3] = a[2]


cdef inline void aug_Ajac_c(FT* ft, const double* x4, double* out) noexcept nogil:
    """Row-major 4x4 Jacobian of the augmented potential; first column zero."""
    cdef double g[3]
    cdef double j3[9]
    cdef int i, jj
    ft_gradphi(ft, x4 + 1, g)
    ft_Ajac(ft, x4 + 1, j3)
    for i in range(16):
        out[i] = 0.0
    out[1] = -g[0]
    out[2] = -g[1]
    out[3] = -g[2]
    for i in range(3):
        for jj in range(3):
            out[4 * (i + 1) + (jj + 1)] = j3[3 * i + jj]


# --------------------------------------------------------------------------
# Step solvers

cdef inline int explicit_step_c(FT* ft, double h, const double* x,
                                const double* u, double* u_new) noexcept nogil:
    cdef double f[16]
    cdef double a[16]
    cdef double fu[4]
    cdef double rhs[4]
    cdef double c = 0.5 * h
    cdef int i
    fill_faraday(ft, x + 1, f)
    for i in range(16):
        a[i] = -c * f[i]
    a[0] += -1.0
    a[5] += 1.0
    a[10] += 1.0
    a[15] += 1.0
    mat4vec(f, u, fu)
    minkowski_vec(u, rhs)
    for i in range(4):
        rhs[i] += c * fu[i]
    return solve4_c(a, rhs, u_new)


cdef inline void dg_tensor_c(FT* ft, int kind, double h, const double* x,
                             const double* u, const double* u_plus,
                             const double* b_mid, double* f) noexcept nogil:
    cdef double xold[3]
    cdef double xnew[3]
    cdef double g[3]
    cdef int i
    for i in range(3):
        xold[i] = x[1 + i] - 0.5 * h * u[1 + i]
        xnew[i] = x[1 + i] + 0.5 * h * u_plus[1 + i]
    dgrad_c(ft, kind, xnew, xold, g)
    fill_dg_faraday(g, b_mid, f)


cdef inline double dg_residual_c(const double* f, double h, const double* u,
                                 const double* u_plus, double* r) noexcept nogil:
    """r = M(u+ - u) - h/2 F (u+ + u); returns the max norm."""
    cdef double du[4]
    cdef double su[4]
    cdef double fs[4]
    cdef double c = 0.5 * h
    cdef int i
    for i in range(4):
        du[i] = u_plus[i] - u[i]
        su[i] = u_plus[i] + u[i]
    mat4vec(f, su, fs)
    minkowski_vec(du, r)
    for i in range(4):
        r[i] -= c * fs[i]
    return max_abs4(r)


cdef int dg_solve_c(FT* ft, int kind, double h, const double* x,
                    const double* u, double tol, int max_iter, int scheme,
                    double* u_plus, long* iters, int* fellback,
                    double* resid) noexcept nogil:
    """0 ok, 1 no convergence, 2 singular."""
    cdef double f[16]
    cdef double a[16]
    cdef double fu[4]
    cdef double rhs[4]
    cdef double u_next[4]
    cdef double r[4]
    cdef double g[4]
    cdef double jac[16]
    cdef double jcol[16]
    cdef double up[4]
    cdef double um[4]
    cdef double rp[4]
    cdef double rm[4]
    cdef double b_mid[3]
    cdef double c = 0.5 * h
    cdef double scale, residual
    cdef int i, col, it
    scale = 1.0 + max_abs4(u)
    for i in range(4):
        u_plus[i] = u[i]
    iters[0] = 0
    fellback[0] = 0
    resid[0] = INFINITY
    ft_B(ft, x + 1, b_mid)

    if scheme == 0:
        dg_tensor_c(ft, kind, h, x, u, u_plus, b_mid, f)
        for it in range(max_iter):
            for i in range(16):
                a[i] = -c * f[i]
            a[0] += -1.0
            a[5] += 1.0
            a[10] += 1.0
            a[15] += 1.0
            mat4vec(f, u, fu)
            minkowski_vec(u, rhs)
            for i in range(4):
                rhs[i] += c * fu[i]
            if solve4_c(a, rhs, u_next) != 0:
                return 2
            dg_tensor_c(ft, kind, h, x, u, u_next, b_mid, f)
            residual = dg_residual_c(f, h, u, u_next, r)
            iters[0] += 1
            for i in range(4):
                u_plus[i] = u_next[i]
            if residual <= tol * scale:
                resid[0] = residual
                return 0

    fellback[0] = 1
    for it in range(max_iter):
        dg_tensor_c(ft, kind, h, x, u, u_plus, b_mid, f)
        residual = dg_residual_c(f, h, u, u_plus, g)
        resid[0] = residual
        if residual <= tol * scale:
            return 0
        for col in range(4):
            for i in range(4):
                up[i] = u_plus[i]
                um[i] = u_plus[i]
            up[col] += FD_STEP
            um[col] -= FD_STEP
            dg_tensor_c(ft, kind, h, x, u, up, b_mid, f)
            dg_residual_c(f, h, u, up, rp)
            dg_tensor_c(ft, kind, h, x, u, um, b_mid, f)
            dg_residual_c(f, h, u, um, rm)
            for i in range(4):
                jac[4 * i + col] = (rp[i] - rm[i]) / (2.0 * FD_STEP)
        for i in range(16):
            jcol[i] = jac[i]
        for i in range(4):
            r[i] = g[i]
        if solve4_c(jcol, r, u_next) != 0:
            return 2
        for i in range(4):
            u_plus[i] -= u_next[i]
        iters[0] += 1
    dg_tensor_c(ft, kind, h, x, u, u_plus, b_mid, f)
    resid[0] = dg_residual_c(f, h, u, u_plus, g)
    if resid[0] <= tol * scale:
        return 0
    return 1


cdef int variational_solve_c(FT* ft, double h, const double* x,
                             const double* p, double tol, int max_iter,
                             double* x_new, double* p_new, double* u_half,
                             long* iters, double* resid) noexcept nogil:
    """Newton iteration on the half-step momentum (x_new = x + h u derived),
    avoiding the 1/h round-off amplification of a position iterate."""
    cdef double a_x[4]
    cdef double ajac_x[16]
    cdef double lhs[16]
    cdef double a_new[4]
    cdef double ajac_new[16]
    cdef double r[4]
    cdef double jac[16]
    cdef double tmp4[4]
    cdef double du[4]
    cdef double c = 0.5 * h
    cdef double scale, residual
    cdef int i, jj, it, converged
    aug_A_c(ft, x, a_x)
    aug_Ajac_c(ft, x, ajac_x)
    # lhs = M - h/2 A'(x)^T
    for i in range(4):
        for jj in range(4):
            lhs[4 * i + jj] = -c * ajac_x[4 * jj + i]
    lhs[0] += -1.0
    lhs[5] += 1.0
    lhs[10] += 1.0
    lhs[15] += 1.0
    scale = 1.0 + max_abs4(p)

    for i in range(4):
        tmp4[i] = p[i] - a_x[i]
    minkowski_vec(tmp4, u_half)

    iters[0] = 0
    converged = 0
    residual = INFINITY
    for it in range(max_iter):
        for i in range(4):
            x_new[i] = x[i] + h * u_half[i]
        aug_A_c(ft, x_new, a_new)
        mat4vec(lhs, u_half, r)
        for i in range(4):
            r[i] += 0.5 * (a_x[i] + a_new[i]) - p[i]
        residual = max_abs4(r)
        iters[0] += 1
        if residual <= tol * scale:
            converged = 1
            break
        aug_Ajac_c(ft, x_new, ajac_new)
        for i in range(16):
            jac[i] = lhs[i] + 0.5 * h * ajac_new[i]
        if solve4_c(jac, r, du) != 0:
            return 2
        for i in range(4):
            u_half[i] -= du[i]
    resid[0] = residual
    if not converged:
        return 1

    aug_A_c(ft, x_new, a_new)
    aug_Ajac_c(ft, x_new, ajac_new)
    # p_new = (M + h/2 A'(x_new)^T) u_half + (A(x) + A(x_new)) / 2
    for i in range(4):
        for jj in range(4):
            jac[4 * i + jj] = c * ajac_new[4 * jj + i]
    jac[0] += -1.0
    jac[5] += 1.0
    jac[10] += 1.0
    jac[15] += 1.0
    mat4vec(jac, u_half, p_new)
    for i in range(4):
        p_new[i] += 0.5 * (a_x[i] + a_new[i])
    return 0


cdef inline void boris_update_c(const double* b, const double* rhs,
                                double* v_new) noexcept nogil:
    """v_new = (rhs - b x rhs + b (b . rhs)) / (1 + |b|^2)."""
    cdef double cr[3]
    cdef double b2 = b[0] * b[0] + b[1] * b[1] + b[2] * b[2]
    cdef double bd = b[0] * rhs[0] + b[1] * rhs[1] + b[2] * rhs[2]
    cdef int i
    cross3(b, rhs, cr)
    for i in range(3):
        v_new[i] = (rhs[i] - cr[i] + b[i] * bd) / (1.0 + b2)


cdef inline void boris_step_c(FT* ft, double h, const double* x,
                              const double* v, double* v_new) noexcept nogil:
    cdef double bvec[3]
    cdef double b[3]
    cdef double e[3]
    cdef double g[3]
    cdef double cr[3]
    cdef double rhs[3]
    cdef int i
    ft_B(ft, x, bvec)
    ft_gradphi(ft, x, g)
    for i in range(3):
        b[i] = 0.5 * h * bvec[i]
        e[i] = -g[i]
    cross3(b, v, cr)
    for i in range(3):
        rhs[i] = v[i] - cr[i] + h * e[i]
    boris_update_c(b, rhs, v_new)


cdef int nonrel_dg_solve_c(FT* ft, int kind, double h, const double* x,
                           const double* v, double tol, int max_iter,
                           double* v_plus, long* iters, double* resid) noexcept nogil:
    cdef double bvec[3]
    cdef double b[3]
    cdef double xold[3]
    cdef double xnew[3]
    cdef double g[3]
    cdef double cr[3]
    cdef double rhs[3]
    cdef double v_next[3]
    cdef double sv[3]
    cdef double scale, residual
    cdef int i, it
    ft_B(ft, x, bvec)
    scale = 1.0
    for i in range(3):
        b[i] = 0.5 * h * bvec[i]
        xold[i] = x[i] - 0.5 * h * v[i]
        if fabs(v[i]) > scale - 1.0:
            scale = 1.0 + fabs(v[i])
        v_plus[i] = v[i]
    iters[0] = 0
    for it in range(max_iter):
        for i in range(3):
            xnew[i] = x[i] + 0.5 * h * v_plus[i]
        dgrad_c(ft, kind, xnew, xold, g)
        cross3(b, v, cr)
        for i in range(3):
            rhs[i] = v[i] - cr[i] - h * g[i]
        boris_update_c(b, rhs, v_next)
        for i in range(3):
            xnew[i] = x[i] + 0.5 * h * v_next[i]
        dgrad_c(ft, kind, xnew, xold, g)
        residual = 0.0
        for i in range(3):
            sv[i] = v_next[i] + v[i]
        cross3(b, sv, cr)
        for i in range(3):
            rhs[i] = v_next[i] - v[i] + h * g[i] + cr[i]
            if fabs(rhs[i]) > residual:
                residual = fabs(rhs[i])
        iters[0] += 1
        for i in range(3):
            v_plus[i] = v_next[i]
        resid[0] = residual
        if residual <= tol * scale:
            return 0
    return 1


cdef int nonrel_var_solve_c(FT* ft, double h, const double* x,
                            const double* v, double tol, int max_iter,
                            double* v_plus, long* iters, double* resid) noexcept nogil:
    cdef double bvec[3]
    cdef double g[3]
    cdef double ajac[9]
    cdef double lhs[9]
    cdef double rhs_lin[3]
    cdef double rhs[3]
    cdef double a_back[3]
    cdef double a_fwd[3]
    cdef double pt[3]
    cdef double v_next[3]
    cdef double bhat[9]
    cdef double mm[9]
    cdef double scale, residual, row_res
    cdef int i, jj, it
    ft_B(ft, x, bvec)
    ft_Ajac(ft, x, ajac)
    ft_gradphi(ft, x, g)
    bhat[0] = 0.0
    bhat[1] = -bvec[2]
    bhat[2] = bvec[1]
    bhat[3] = bvec[2]
    bhat[4] = 0.0
    bhat[5] = -bvec[0]
    bhat[6] = -bvec[1]
    bhat[7] = bvec[0]
    bhat[8] = 0.0
    for i in range(9):
        lhs[i] = 0.5 * h * bhat[i] - 0.5 * h * ajac[i]
        mm[i] = -0.5 * h * bhat[i] + 0.5 * h * ajac[i]
    lhs[0] += 1.0
    lhs[4] += 1.0
    lhs[8] += 1.0
    mm[0] += 1.0
    mm[4] += 1.0
    mm[8] += 1.0
    for i in range(3):
        rhs_lin[i] = (mm[3 * i] * v[0] + mm[3 * i + 1] * v[1]
                      + mm[3 * i + 2] * v[2]) + h * (-g[i])
        pt[i] = x[i] - h * v[i]
    ft_A(ft, pt, a_back)
    scale = 1.0
    for i in range(3):
        if fabs(v[i]) > scale - 1.0:
            scale = 1.0 + fabs(v[i])
        v_plus[i] = v[i]
    iters[0] = 0
    for it in range(max_iter):
        for i in range(3):
            pt[i] = x[i] + h * v_plus[i]
        ft_A(ft, pt, a_fwd)
        for i in range(3):
            rhs[i] = rhs_lin[i] - 0.5 * (a_fwd[i] - a_back[i])
        if solve3_c(lhs, rhs, v_next) != 0:
            return 2
        for i in range(3):
            pt[i] = x[i] + h * v_next[i]
        ft_A(ft, pt, a_fwd)
        residual = 0.0
        for i in range(3):
            rhs[i] = rhs_lin[i] - 0.5 * (a_fwd[i] - a_back[i])
            row_res = (lhs[3 * i] * v_next[0] + lhs[3 * i + 1] * v_next[1]
                       + lhs[3 * i + 2] * v_next[2]) - rhs[i]
            if fabs(row_res) > residual:
                residual = fabs(row_res)
        iters[0] += 1
        for i in range(3):
            v_plus[i] = v_next[i]
        resid[0] = residual
        if residual <= tol * scale:
            return 0
    return 1


# --------------------------------------------------------------------------
# Recording tape

ctypedef struct Tape:
    double* rec
    long row
    long n_steps
    long record_every
    double h
    double e0, ms0, de0, noe0
    double max_err, max_err_scale, max_ms, max_de, max_noe
    double tot_iters, max_iters, fallbacks, max_gamma


cdef void tape_init(Tape* t, double* rec, long n_steps, long record_every,
                    double h) noexcept nogil:
    t.rec = rec
    t.row = 0
    t.n_steps = n_steps
    t.record_every = record_every
    t.h = h
    t.e0 = NAN
    t.ms0 = NAN
    t.de0 = NAN
    t.noe0 = NAN
    t.max_err = 0.0
    t.max_err_scale = 0.0
    t.max_ms = 0.0
    t.max_de = 0.0
    t.max_noe = 0.0
    t.tot_iters = 0.0
    t.max_iters = 0.0
    t.fallbacks = 0.0
    t.max_gamma = -INFINITY


cdef void tape_update(Tape* t, long n, const double* x4, const double* ug4,
                      double energy, double scale, double ms, double de,
                      double noe) noexcept nogil:
    cdef double err
    cdef double* r
    cdef int i
    if n == 0:
        t.e0 = energy
        t.ms0 = ms
        t.de0 = de
        t.noe0 = noe
    if t.e0 != 0.0:
        err = (energy - t.e0) / fabs(t.e0)
    else:
        err = energy - t.e0
    if fabs(err) > t.max_err:
        t.max_err = fabs(err)
    if fabs(energy - t.e0) / scale > t.max_err_scale:
        t.max_err_scale = fabs(energy - t.e0) / scale
    if not isnan(ms) and not isnan(t.ms0):
        if fabs(ms - t.ms0) > t.max_ms:
            t.max_ms = fabs(ms - t.ms0)
    if not isnan(de) and not isnan(t.de0):
        if fabs(de - t.de0) > t.max_de:
            t.max_de = fabs(de - t.de0)
    if not isnan(noe) and not isnan(t.noe0):
        if fabs(noe - t.noe0) > t.max_noe:
            t.max_noe = fabs(noe - t.noe0)
    if ug4[0] > t.max_gamma:
        t.max_gamma = ug4[0]
    if n % t.record_every == 0 or n == t.n_steps:
        r = t.rec + t.row * C_REC_COLS
        r[0] = <double> n
        r[1] = n * t.h
        for i in range(4):
            r[2 + i] = x4[i]
            r[6 + i] = ug4[i]
        r[10] = energy
        r[11] = err
        r[12] = ms
        r[13] = de
        r[14] = noe
        t.row += 1


cdef void tape_iterations(Tape* t, long iters, int fallback) noexcept nogil:
    t.tot_iters += iters
    if iters > t.max_iters:
        t.max_iters = <double> iters
    if fallback:
        t.fallbacks += 1.0


cdef void tape_summary(Tape* t, double* s) noexcept nogil:
    s[0] = t.e0
    s[1] = t.max_err
    s[2] = t.max_err_scale
    s[3] = t.ms0
    s[4] = t.max_ms
    s[5] = t.de0
    s[6] = t.max_de
    s[7] = t.noe0
    s[8] = t.max_noe
    s[9] = t.tot_iters
    s[10] = t.max_iters
    s[11] = t.fallbacks
    s[12] = t.max_gamma
    s[13] = 0.0


cdef inline double noether_grid_c(FT* ft, const double* x4, const double* ug4,
                                  const double* gen) noexcept nogil:
    cdef double p[4]
    cdef double a4[4]
    cdef double gx[4]
    cdef int i
    minkowski_vec(ug4, p)
    aug_A_c(ft, x4, a4)
    for i in range(4):
        p[i] += a4[i]
    mat4vec(gen, x4, gx)
    return p[0] * gx[0] + p[1] * gx[1] + p[2] * gx[2] + p[3] * gx[3]


cdef inline double rel_scale_c(double gamma, double phi_mid) noexcept nogil:
    cdef double s = fabs(gamma) + fabs(phi_mid)
    if s < 1.0:
        s = 1.0
    return s


def n_record_rows(n_steps, record_every):
    return -(-int(n_steps) // int(record_every)) + 1


# --------------------------------------------------------------------------
# Loop drivers

def run_halfstep_loop(FieldTable table, int method, x0, u_half0, u0_grid,
                      double h, long n_steps, long record_every, double tol,
                      int max_iter, int scheme, gen=None):
    cdef FT ft
    ft_bind(table, &ft)
    rec_np = np.full((n_record_rows(n_steps, record_every), C_REC_COLS), np.nan)
    summary = np.full(C_SUM_LEN, np.nan)
    info = np.zeros(3)
    cdef double[:, ::1] rec_mv = rec_np
    cdef double[::1] sum_mv = summary
    cdef double[::1] info_mv = info
    x0_a = np.ascontiguousarray(x0, dtype=np.float64)
    u_a = np.ascontiguousarray(u_half0, dtype=np.float64)
    ug_a = np.ascontiguousarray(u0_grid, dtype=np.float64)
    cdef double[::1] x_mv = x0_a.copy()
    cdef double[::1] u_mv = u_a.copy()
    cdef double[::1] ug_mv = ug_a
    cdef const double* genp = NULL
    gen_a = None
    cdef double[:, ::1] gen_mv
    if gen is not None:
        gen_a = np.ascontiguousarray(gen, dtype=np.float64)
        gen_mv = gen_a
        genp = &gen_mv[0, 0]

    cdef Tape t
    cdef int status = C_OK
    cdef long n
    cdef long iters
    cdef int fellback
    cdef double u_new[4]
    cdef double ugrid[4]
    cdef double residual, phi_mid, energy, ms, de, noe
    cdef double mid[3]
    cdef double* x = &x_mv[0]
    cdef double* u = &u_mv[0]
    cdef const double* ug0 = &ug_mv[0]
    cdef int i

    # u_half0 is the already-kicked u^{1/2}: iteration 0 drifts without a
    # momentum solve, later iterations kick from (x^n, u^{n-1/2}) first.
    with nogil:
        tape_init(&t, &rec_mv[0, 0], n_steps, record_every, h)
        for n in range(n_steps + 1):
            if n == 0:
                for i in range(4):
                    u_new[i] = u[i]
            elif method == 0:
                if explicit_step_c(&ft, h, x, u, u_new) != 0:
                    status = C_SINGULAR
                    info_mv[0] = <double> n
                    break
            else:
                status = dg_solve_c(&ft, method, h, x, u, tol, max_iter,
                                    scheme, u_new, &iters, &fellback,
                                    &residual)
                tape_iterations(&t, iters, fellback)
                if status != 0:
                    info_mv[0] = <double> n
                    info_mv[1] = <double> iters
                    info_mv[2] = residual
                    break
            for i in range(3):
                mid[i] = x[1 + i] + 0.5 * h * u_new[1 + i]
            phi_mid = ft_phi(&ft, mid)
            energy = u_new[0] + phi_mid
            if n == 0:
                for i in range(4):
                    ugrid[i] = ug0[i]
            else:
                for i in range(4):
                    ugrid[i] = 0.5 * (u[i] + u_new[i])
            ms = 0.5 * (-u_new[0] * u_new[0]
                        + (u_new[1] * u_new[1] + u_new[2] * u_new[2]
                           + u_new[3] * u_new[3]))
            de = energy if method != 0 else NAN
            noe = noether_grid_c(&ft, x, ugrid, genp) if genp != NULL else NAN
            tape_update(&t, n, x, ugrid, energy,
                        rel_scale_c(u_new[0], phi_mid), ms, de, noe)
            if n < n_steps:
                for i in range(4):
                    x[i] = x[i] + h * u_new[i]
                    u[i] = u_new[i]
        tape_summary(&t, &sum_mv[0])
    return rec_np[:t.row], summary, status, info


def run_variational_loop(FieldTable table, x0, p0, u0_grid, double h,
                         long n_steps, long record_every, double tol,
                         int max_iter, gen=None):
    cdef FT ft
    ft_bind(table, &ft)
    rec_np = np.full((n_record_rows(n_steps, record_every), C_REC_COLS), np.nan)
    summary = np.full(C_SUM_LEN, np.nan)
    info = np.zeros(3)
    cdef double[:, ::1] rec_mv = rec_np
    cdef double[::1] sum_mv = summary
    cdef double[::1] info_mv = info
    x_a = np.ascontiguousarray(x0, dtype=np.float64).copy()
    p_a = np.ascontiguousarray(p0, dtype=np.float64).copy()
    ug_a = np.ascontiguousarray(u0_grid, dtype=np.float64)
    cdef double[::1] x_mv = x_a
    cdef double[::1] p_mv = p_a
    cdef double[::1] ug_mv = ug_a
    cdef const double* genp = NULL
    gen_a = None
    cdef double[:, ::1] gen_mv
    if gen is not None:
        gen_a = np.ascontiguousarray(gen, dtype=np.float64)
        gen_mv = gen_a
        genp = &gen_mv[0, 0]

    cdef Tape t
    cdef int status = C_OK
    cdef long n, iters
    cdef double x_new[4]
    cdef double p_new[4]
    cdef double u_new[4]
    cdef double u_old[4]
    cdef double ugrid[4]
    cdef double gx[4]
    cdef double mid[3]
    cdef double residual, phi_mid, energy, ms, de, noe
    cdef double* x = &x_mv[0]
    cdef double* p = &p_mv[0]
    cdef const double* ug0 = &ug_mv[0]
    cdef int i

    with nogil:
        tape_init(&t, &rec_mv[0, 0], n_steps, record_every, h)
        for n in range(n_steps + 1):
            status = variational_solve_c(&ft, h, x, p, tol, max_iter, x_new,
                                         p_new, u_new, &iters, &residual)
            tape_iterations(&t, iters, 0)
            if status != 0:
                info_mv[0] = <double> n
                info_mv[1] = <double> iters
                info_mv[2] = residual
                break
            for i in range(3):
                mid[i] = x[1 + i] + 0.5 * h * u_new[1 + i]
            phi_mid = ft_phi(&ft, mid)
            energy = u_new[0] + phi_mid
            de = u_new[0] + 0.5 * (ft_phi(&ft, x + 1) + ft_phi(&ft, x_new + 1))
            if n == 0:
                for i in range(4):
                    ugrid[i] = ug0[i]
            else:
                for i in range(4):
                    ugrid[i] = 0.5 * (u_old[i] + u_new[i])
            ms = 0.5 * (-u_new[0] * u_new[0]
                        + (u_new[1] * u_new[1] + u_new[2] * u_new[2]
                           + u_new[3] * u_new[3]))
            if genp != NULL:
                mat4vec(genp, x, gx)
                noe = p[0] * gx[0] + p[1] * gx[1] + p[2] * gx[2] + p[3] * gx[3]
            else:
                noe = NAN
            tape_update(&t, n, x, ugrid, energy,
                        rel_scale_c(u_new[0], phi_mid), ms, de, noe)
            if n < n_steps:
                for i in range(4):
                    x[i] = x_new[i]
                    p[i] = p_new[i]
                    u_old[i] = u_new[i]
        tape_summary(&t, &sum_mv[0])
    return rec_np[:t.row], summary, status, info


def run_nonrel_loop(FieldTable table, int method, x0, v_half0, v0_grid,
                    double h, long n_steps, long record_every, double tol,
                    int max_iter):
    cdef FT ft
    ft_bind(table, &ft)
    rec_np = np.full((n_record_rows(n_steps, record_every), C_REC_COLS), np.nan)
    summary = np.full(C_SUM_LEN, np.nan)
    info = np.zeros(3)
    cdef double[:, ::1] rec_mv = rec_np
    cdef double[::1] sum_mv = summary
    cdef double[::1] info_mv = info
    x_a = np.ascontiguousarray(x0, dtype=np.float64).copy()
    v_a = np.ascontiguousarray(v_half0, dtype=np.float64).copy()
    vg_a = np.ascontiguousarray(v0_grid, dtype=np.float64)
    cdef double[::1] x_mv = x_a
    cdef double[::1] v_mv = v_a
    cdef double[::1] vg_mv = vg_a

    cdef Tape t
    cdef int status = C_OK
    cdef long n, iters
    cdef double v_new[3]
    cdef double x4[4]
    cdef double ug4[4]
    cdef double mid[3]
    cdef double residual, phi_mid, energy, de, scale, v2
    cdef double* x = &x_mv[0]
    cdef double* v = &v_mv[0]
    cdef const double* vg0 = &vg_mv[0]
    cdef int i

    # iteration 0 drifts with the supplied half-step velocity (no solve)
    with nogil:
        tape_init(&t, &rec_mv[0, 0], n_steps, record_every, h)
        for n in range(n_steps + 1):
            if n == 0:
                for i in range(3):
                    v_new[i] = v[i]
            elif method == 0:
                boris_step_c(&ft, h, x, v, v_new)
            elif method == 3:
                status = nonrel_var_solve_c(&ft, h, x, v, tol, max_iter,
                                            v_new, &iters, &residual)
                tape_iterations(&t, iters, 0)
            else:
                status = nonrel_dg_solve_c(&ft, method, h, x, v, tol,
                                           max_iter, v_new, &iters, &residual)
                tape_iterations(&t, iters, 0)
            if status != 0:
                if status == 2:
                    status = C_SINGULAR
                else:
                    status = C_NO_CONVERGENCE
                info_mv[0] = <double> n
                info_mv[1] = <double> iters
                info_mv[2] = residual
                break
            for i in range(3):
                mid[i] = x[i] + 0.5 * h * v_new[i]
            phi_mid = ft_phi(&ft, mid)
            v2 = v_new[0] * v_new[0] + v_new[1] * v_new[1] + v_new[2] * v_new[2]
            energy = 0.5 * v2 + phi_mid
            x4[0] = n * h
            ug4[0] = 1.0
            for i in range(3):
                x4[1 + i] = x[i]
                ug4[1 + i] = vg0[i] if n == 0 else 0.5 * (v[i] + v_new[i])
            de = energy if (method == 1 or method == 2) else NAN
            scale = 0.5 * v2 + fabs(phi_mid)
            if scale < 1.0:
                scale = 1.0
            tape_update(&t, n, x4, ug4, energy, scale, NAN, de, NAN)
            if n < n_steps:
                for i in range(3):
                    x[i] = x[i] + h * v_new[i]
                    v[i] = v_new[i]
        tape_summary(&t, &sum_mv[0])
    return rec_np[:t.row], summary, status, info


cdef inline void rk4_rhs_c(FT* ft, const double* y, double* out) noexcept nogil:
    cdef double f[16]
    cdef double fu[4]
    fill_faraday(ft, y + 1, f)
    mat4vec(f, y + 4, fu)
    out[0] = y[4]
    out[1] = y[5]
    out[2] = y[6]
    out[3] = y[7]
    out[4] = -fu[0]
    out[5] = fu[1]
    out[6] = fu[2]
    out[7] = fu[3]


def run_rk4_loop(FieldTable table, x0, u0, double h, long n_steps,
                 long record_every, gen=None):
    cdef FT ft
    ft_bind(table, &ft)
    rec_np = np.full((n_record_rows(n_steps, record_every), C_REC_COLS), np.nan)
    summary = np.full(C_SUM_LEN, np.nan)
    info = np.zeros(3)
    cdef double[:, ::1] rec_mv = rec_np
    cdef double[::1] sum_mv = summary
    y_a = np.concatenate([np.ascontiguousarray(x0, dtype=np.float64),
                          np.ascontiguousarray(u0, dtype=np.float64)]).copy()
    cdef double[::1] y_mv = y_a
    cdef const double* genp = NULL
    gen_a = None
    cdef double[:, ::1] gen_mv
    if gen is not None:
        gen_a = np.ascontiguousarray(gen, dtype=np.float64)
        gen_mv = gen_a
        genp = &gen_mv[0, 0]

    cdef Tape t
    cdef long n
    cdef double k1[8]
    cdef double k2[8]
    cdef double k3[8]
    cdef double k4[8]
    cdef double yt[8]
    cdef double phi_x, energy, ms, noe
    cdef double* y = &y_mv[0]
    cdef int i

    with nogil:
        tape_init(&t, &rec_mv[0, 0], n_steps, record_every, h)
        for n in range(n_steps + 1):
            phi_x = ft_phi(&ft, y + 1)
            energy = y[4] + phi_x
            ms = 0.5 * (-y[4] * y[4]
                        + (y[5] * y[5] + y[6] * y[6] + y[7] * y[7]))
            noe = noether_grid_c(&ft, y, y + 4, genp) if genp != NULL else NAN
            tape_update(&t, n, y, y + 4, energy, rel_scale_c(y[4], phi_x), ms,
                        NAN, noe)
            if n < n_steps:
                rk4_rhs_c(&ft, y, k1)
                for i in range(8):
                    yt[i] = y[i] + 0.5 * h * k1[i]
                rk4_rhs_c(&ft, yt, k2)
                for i in range(8):
                    yt[i] = y[i] + 0.5 * h * k2[i]
                rk4_rhs_c(&ft, yt, k3)
                for i in range(8):
                    yt[i] = y[i] + h * k3[i]
                rk4_rhs_c(&ft, yt, k4)
                for i in range(8):
                    y[i] = y[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i]
                                               + 2.0 * k3[i] + k4[i])
        tape_summary(&t, &sum_mv[0])
    return rec_np[:t.row], summary, C_OK, info
