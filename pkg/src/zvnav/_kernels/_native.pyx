# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; signature- and semantics-identical to ``_reference``."""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, exp, isfinite, sin, sqrt, tanh
from libc.string cimport memcpy, memset
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


# ---------------------------------------------------------------------------
# small fixed-size helpers
# ---------------------------------------------------------------------------


cdef inline void _quat_mul(double* a, double* b, double* out) nogil:
    out[0] = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
    out[1] = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2]
    out[2] = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1]
    out[3] = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]


cdef inline void _quat_from_rotvec(double* rv, double* out) nogil:
    cdef double angle = sqrt(rv[0] * rv[0] + rv[1] * rv[1] + rv[2] * rv[2])
    cdef double half, s
    if angle < 1e-300:
        out[0] = 1.0
        out[1] = 0.0
        out[2] = 0.0
        out[3] = 0.0
        return
    half = 0.5 * angle
    s = sin(half) / angle
    out[0] = cos(half)
    out[1] = rv[0] * s
    out[2] = rv[1] * s
    out[3] = rv[2] * s


cdef inline void _quat_rotmat(double* q, double* R) nogil:
    cdef double w = q[0], x = q[1], y = q[2], z = q[3]
    R[0] = w * w + x * x - y * y - z * z
    R[1] = 2.0 * (x * y - w * z)
    R[2] = 2.0 * (w * y + x * z)
    R[3] = 2.0 * (w * z + x * y)
    R[4] = w * w - x * x + y * y - z * z
    R[5] = 2.0 * (y * z - w * x)
    R[6] = 2.0 * (x * z - w * y)
    R[7] = 2.0 * (y * z + w * x)
    R[8] = w * w - x * x - y * y + z * z


cdef inline void _rotvec_matrix(double* rv, double* R) nogil:
    """Rodrigues formula, matching the reference small-angle branch."""
    cdef double angle = sqrt(rv[0] * rv[0] + rv[1] * rv[1] + rv[2] * rv[2])
    cdef double K[9]
    cdef double KK[9]
    cdef double a, b
    cdef int i, j, k
    K[0] = 0.0; K[1] = -rv[2]; K[2] = rv[1]
    K[3] = rv[2]; K[4] = 0.0; K[5] = -rv[0]
    K[6] = -rv[1]; K[7] = rv[0]; K[8] = 0.0
    for i in range(3):
        for j in range(3):
            KK[3 * i + j] = 0.0
            for k in range(3):
                KK[3 * i + j] += K[3 * i + k] * K[3 * k + j]
    if angle < 1e-12:
        a = 1.0
        b = 0.5
    else:
        a = sin(angle) / angle
        b = (1.0 - cos(angle)) / (angle * angle)
    for i in range(9):
        R[i] = a * K[i] + b * KK[i]
    R[0] += 1.0
    R[4] += 1.0
    R[8] += 1.0


cdef inline void _mat9_mul(double* A, double* B, double* C) nogil:
    cdef int i, j, k
    cdef double acc
    for i in range(9):
        for j in range(9):
            acc = 0.0
            for k in range(9):
                acc += A[9 * i + k] * B[9 * k + j]
            C[9 * i + j] = acc


cdef inline void _mat9_mul_bt(double* A, double* B, double* C) nogil:
    """C = A @ B.T"""
    cdef int i, j, k
    cdef double acc
    for i in range(9):
        for j in range(9):
            acc = 0.0
            for k in range(9):
                acc += A[9 * i + k] * B[9 * j + k]
            C[9 * i + j] = acc


# ---------------------------------------------------------------------------
# filter loop
# ---------------------------------------------------------------------------


def eskf_run(
    double[::1] t,
    double[:, ::1] accel,
    double[:, ::1] gyro,
    cnp.uint8_t[::1] flags,
    double[::1] q0,
    double[:, ::1] P0,
    double sig_a,
    double sig_w,
    double sig_zupt,
    double g,
):
    """See ``_reference.eskf_run``."""
    cdef Py_ssize_t n = t.shape[0]
    pos_arr = np.zeros((n, 3))
    vel_arr = np.zeros((n, 3))
    quat_arr = np.zeros((n, 4))
    applied_arr = np.zeros(n, dtype=np.uint8)
    P_arr = np.empty((9, 9))
    cdef double[:, ::1] pos = pos_arr
    cdef double[:, ::1] vel = vel_arr
    cdef double[:, ::1] quat = quat_arr
    cdef cnp.uint8_t[::1] applied = applied_arr
    cdef double[:, ::1] P_out = P_arr

    cdef double p[3]
    cdef double v[3]
    cdef double q[4]
    cdef double q_tmp[4]
    cdef double dq[4]
    cdef double P[81]
    cdef double F[81]
    cdef double T1[81]
    cdef double T2[81]
    cdef double R[9]
    cdef double E[9]
    cdef double rv[3]
    cdef double a_nav[3]
    cdef double S[9]
    cdef double Sinv[9]
    cdef double K[27]
    cdef double dx[9]
    cdef double det, qa, qw, dt, r, qnorm
    cdef Py_ssize_t k, i, j, m
    cdef bint finite

    for i in range(3):
        p[i] = 0.0
        v[i] = 0.0
    for i in range(4):
        q[i] = q0[i]
        quat[0, i] = q[i]
    for i in range(9):
        for j in range(9):
            P[9 * i + j] = P0[i, j]

    r = sig_zupt * sig_zupt

    for k in range(1, n):
        dt = t[k] - t[k - 1]
        _quat_rotmat(q, R)

        # nominal state
        for i in range(3):
            p[i] += v[i] * dt
        for i in range(3):
            a_nav[i] = R[3 * i] * accel[k, 0] + R[3 * i + 1] * accel[k, 1] + R[3 * i + 2] * accel[k, 2]
        a_nav[2] -= g
        for i in range(3):
            v[i] += a_nav[i] * dt
        rv[0] = gyro[k, 0] * dt
        rv[1] = gyro[k, 1] * dt
        rv[2] = gyro[k, 2] * dt
        _quat_from_rotvec(rv, dq)
        _quat_mul(q, dq, q_tmp)
        qnorm = sqrt(q_tmp[0] * q_tmp[0] + q_tmp[1] * q_tmp[1] + q_tmp[2] * q_tmp[2] + q_tmp[3] * q_tmp[3])
        for i in range(4):
            q[i] = q_tmp[i] / qnorm

        # error-state transition
        memset(F, 0, 81 * sizeof(double))
        for i in range(9):
            F[9 * i + i] = 1.0
        F[0 * 9 + 3] = dt
        F[1 * 9 + 4] = dt
        F[2 * 9 + 5] = dt
        # -(R @ skew(a)) * dt into rows 3:6, cols 6:9
        for i in range(3):
            F[(3 + i) * 9 + 6] = -(R[3 * i + 1] * accel[k, 2] - R[3 * i + 2] * accel[k, 1]) * dt
            F[(3 + i) * 9 + 7] = -(R[3 * i + 2] * accel[k, 0] - R[3 * i] * accel[k, 2]) * dt
            F[(3 + i) * 9 + 8] = -(R[3 * i] * accel[k, 1] - R[3 * i + 1] * accel[k, 0]) * dt
        rv[0] = -rv[0]
        rv[1] = -rv[1]
        rv[2] = -rv[2]
        _rotvec_matrix(rv, E)
        for i in range(3):
            for j in range(3):
                F[(6 + i) * 9 + 6 + j] = E[3 * i + j]

        _mat9_mul(F, P, T1)
        _mat9_mul_bt(T1, F, P)
        qa = sig_a * sig_a * dt
        qw = sig_w * sig_w * dt
        P[3 * 9 + 3] += qa
        P[4 * 9 + 4] += qa
        P[5 * 9 + 5] += qa
        P[6 * 9 + 6] += qw
        P[7 * 9 + 7] += qw
        P[8 * 9 + 8] += qw
        for i in range(9):
            for j in range(i + 1, 9):
                det = 0.5 * (P[9 * i + j] + P[9 * j + i])
                P[9 * i + j] = det
                P[9 * j + i] = det

        if flags[k]:
            # S = P[3:6,3:6] + r I, inverted in closed form
            for i in range(3):
                for j in range(3):
                    S[3 * i + j] = P[(3 + i) * 9 + 3 + j]
                S[3 * i + i] += r
            det = (
                S[0] * (S[4] * S[8] - S[5] * S[7])
                - S[1] * (S[3] * S[8] - S[5] * S[6])
                + S[2] * (S[3] * S[7] - S[4] * S[6])
            )
            Sinv[0] = (S[4] * S[8] - S[5] * S[7]) / det
            Sinv[1] = (S[2] * S[7] - S[1] * S[8]) / det
            Sinv[2] = (S[1] * S[5] - S[2] * S[4]) / det
            Sinv[3] = (S[5] * S[6] - S[3] * S[8]) / det
            Sinv[4] = (S[0] * S[8] - S[2] * S[6]) / det
            Sinv[5] = (S[2] * S[3] - S[0] * S[5]) / det
            Sinv[6] = (S[3] * S[7] - S[4] * S[6]) / det
            Sinv[7] = (S[1] * S[6] - S[0] * S[7]) / det
            Sinv[8] = (S[0] * S[4] - S[1] * S[3]) / det
            # K = P[:, 3:6] @ Sinv
            for i in range(9):
                for j in range(3):
                    K[3 * i + j] = (
                        P[9 * i + 3] * Sinv[j]
                        + P[9 * i + 4] * Sinv[3 + j]
                        + P[9 * i + 5] * Sinv[6 + j]
                    )
            for i in range(9):
                dx[i] = -(K[3 * i] * v[0] + K[3 * i + 1] * v[1] + K[3 * i + 2] * v[2])
            for i in range(3):
                p[i] += dx[i]
                v[i] += dx[3 + i]
            rv[0] = dx[6]
            rv[1] = dx[7]
            rv[2] = dx[8]
            _quat_from_rotvec(rv, dq)
            _quat_mul(q, dq, q_tmp)
            qnorm = sqrt(q_tmp[0] * q_tmp[0] + q_tmp[1] * q_tmp[1] + q_tmp[2] * q_tmp[2] + q_tmp[3] * q_tmp[3])
            for i in range(4):
                q[i] = q_tmp[i] / qnorm
            # P = IKH P IKH^T + r K K^T with IKH = I except columns 3:6 -= K
            memset(F, 0, 81 * sizeof(double))
            for i in range(9):
                F[9 * i + i] = 1.0
            for i in range(9):
                for j in range(3):
                    F[9 * i + 3 + j] -= K[3 * i + j]
            _mat9_mul(F, P, T1)
            _mat9_mul_bt(T1, F, T2)
            for i in range(9):
                for j in range(9):
                    P[9 * i + j] = T2[9 * i + j] + r * (
                        K[3 * i] * K[3 * j] + K[3 * i + 1] * K[3 * j + 1] + K[3 * i + 2] * K[3 * j + 2]
                    )
            for i in range(9):
                for j in range(i + 1, 9):
                    det = 0.5 * (P[9 * i + j] + P[9 * j + i])
                    P[9 * i + j] = det
                    P[9 * j + i] = det
            applied[k] = 1

        finite = True
        for i in range(3):
            if not (isfinite(p[i]) and isfinite(v[i])):
                finite = False
        for i in range(4):
            if not isfinite(q[i]):
                finite = False
        if not finite:
            raise ArithmeticError(f"non-finite state at step {k}")

        for i in range(3):
            pos[k, i] = p[i]
            vel[k, i] = v[i]
        for i in range(4):
            quat[k, i] = q[i]

    for i in range(9):
        for j in range(9):
            P_out[i, j] = P[9 * i + j]
    return pos_arr, vel_arr, quat_arr, applied_arr, P_arr


# ---------------------------------------------------------------------------
# LSTM recurrences
# ---------------------------------------------------------------------------


cdef inline double _sigmoid(double x) nogil:
    return 1.0 / (1.0 + exp(-x))


def lstm_seq_forward(double[:, :, ::1] xp, double[:, ::1] Wh):
    """See ``_reference.lstm_seq_forward``."""
    cdef Py_ssize_t B = xp.shape[0]
    cdef Py_ssize_t T = xp.shape[1]
    cdef Py_ssize_t H4 = xp.shape[2]
    cdef Py_ssize_t H = H4 // 4
    h_arr = np.empty((B, T, H))
    c_arr = np.empty((B, T, H))
    gates_arr = np.empty((B, T, H4))
    tc_arr = np.empty((B, T, H))
    # contiguous per-step buffers keep the BLAS panels cache-friendly
    G_arr = np.empty((B, H4))
    act_arr = np.empty((B, H4))
    hp_arr = np.zeros((B, H))
    cp_arr = np.zeros((B, H))
    tcp_arr = np.empty((B, H))
    cdef double[:, :, ::1] h = h_arr
    cdef double[:, :, ::1] c = c_arr
    cdef double[:, :, ::1] gates = gates_arr
    cdef double[:, :, ::1] tc = tc_arr
    cdef double[:, ::1] G = G_arr
    cdef double[:, ::1] act = act_arr
    cdef double[:, ::1] hp = hp_arr
    cdef double[:, ::1] cp = cp_arr
    cdef double[:, ::1] tcp = tcp_arr

    cdef double gi, gf, gg, go, c_t, tc_t
    cdef Py_ssize_t ts, i, j
    cdef int m_ = <int> H4, n_ = <int> B, k_ = <int> H
    cdef int lda = <int> H4, ldb = <int> H, ldc = <int> H4
    cdef double one = 1.0
    cdef double* G_ptr = &G[0, 0]
    cdef double* Wh_ptr = &Wh[0, 0]
    cdef double* hp_ptr = &hp[0, 0]

    # views for the vectorized transcendentals (NumPy's SIMD loops beat
    # scalar libm by a wide margin, and match the reference bit-for-bit)
    sig_lo = G_arr[:, 0 : 2 * H]
    sig_hi = G_arr[:, 3 * H : 4 * H]
    act_lo = act_arr[:, 0 : 2 * H]
    act_mid = act_arr[:, 2 * H : 3 * H]
    act_hi = act_arr[:, 3 * H : 4 * H]

    for ts in range(T):
        # G = xp[:, ts, :] + h_prev @ Wh
        for i in range(B):
            memcpy(&G[i, 0], &xp[i, ts, 0], H4 * sizeof(double))
        if ts > 0:
            # Fortran view: G^T (4H,B) += Wh^T (4H,H) @ h_prev^T (H,B)
            dgemm("N", "N", &m_, &n_, &k_, &one, Wh_ptr, &lda, hp_ptr, &ldb, &one, G_ptr, &ldc)
        np.negative(sig_lo, out=act_lo)
        np.exp(act_lo, out=act_lo)
        np.negative(sig_hi, out=act_hi)
        np.exp(act_hi, out=act_hi)
        np.tanh(G_arr[:, 2 * H : 3 * H], out=act_mid)
        for i in range(B):
            for j in range(H):
                gi = 1.0 / (1.0 + act[i, j])
                gf = 1.0 / (1.0 + act[i, H + j])
                gg = act[i, 2 * H + j]
                go = 1.0 / (1.0 + act[i, 3 * H + j])
                c_t = gf * cp[i, j] + gi * gg
                gates[i, ts, j] = gi
                gates[i, ts, H + j] = gf
                gates[i, ts, 2 * H + j] = gg
                gates[i, ts, 3 * H + j] = go
                c[i, ts, j] = c_t
                cp[i, j] = c_t
        np.tanh(cp_arr, out=tcp_arr)
        for i in range(B):
            for j in range(H):
                tc_t = tcp[i, j]
                go = gates[i, ts, 3 * H + j]
                tc[i, ts, j] = tc_t
                h[i, ts, j] = go * tc_t
                hp[i, j] = go * tc_t
    return h_arr, c_arr, gates_arr, tc_arr


def lstm_seq_backward(
    double[:, :, ::1] dh_out,
    double[:, :, ::1] c,
    double[:, :, ::1] gates,
    double[:, :, ::1] tc,
    double[:, ::1] Wh,
):
    """See ``_reference.lstm_seq_backward``."""
    cdef Py_ssize_t B = tc.shape[0]
    cdef Py_ssize_t T = tc.shape[1]
    cdef Py_ssize_t H = tc.shape[2]
    cdef Py_ssize_t H4 = 4 * H
    dgates_arr = np.empty((B, T, H4))
    dh_rec_arr = np.zeros((B, H))
    dc_arr = np.zeros((B, H))
    dG_arr = np.empty((B, H4))
    cdef double[:, :, ::1] dgates = dgates_arr
    cdef double[:, ::1] dh_rec = dh_rec_arr
    cdef double[:, ::1] dc = dc_arr
    cdef double[:, ::1] dG = dG_arr

    cdef double gi, gf, gg, go, tc_t, dh, do, di, dg, df, c_prev, dci
    cdef Py_ssize_t ts, i, j
    cdef int m_ = <int> H, n_ = <int> B, k_ = <int> H4
    cdef int lda = <int> H4, ldb = <int> H4, ldc_ = <int> H
    cdef double one = 1.0, zero = 0.0
    cdef double* Wh_ptr = &Wh[0, 0]
    cdef double* dG_ptr = &dG[0, 0]

    for ts in range(T - 1, -1, -1):
        for i in range(B):
            for j in range(H):
                gi = gates[i, ts, j]
                gf = gates[i, ts, H + j]
                gg = gates[i, ts, 2 * H + j]
                go = gates[i, ts, 3 * H + j]
                tc_t = tc[i, ts, j]
                dh = dh_out[i, ts, j] + dh_rec[i, j]
                do = dh * tc_t
                dci = dc[i, j] + dh * go * (1.0 - tc_t * tc_t)
                di = dci * gg
                dg = dci * gi
                c_prev = c[i, ts - 1, j] if ts > 0 else 0.0
                df = dci * c_prev
                dG[i, j] = di * gi * (1.0 - gi)
                dG[i, H + j] = df * gf * (1.0 - gf)
                dG[i, 2 * H + j] = dg * (1.0 - gg * gg)
                dG[i, 3 * H + j] = do * go * (1.0 - go)
                dc[i, j] = dci * gf
            memcpy(&dgates[i, ts, 0], &dG[i, 0], H4 * sizeof(double))
        # dh_rec = dG @ Wh.T; Fortran view: dh_rec^T (H,B) = Wh^T' (H,4H) @ dG^T (4H,B)
        dgemm("T", "N", &m_, &n_, &k_, &one, Wh_ptr, &lda, dG_ptr, &ldb, &zero,
              &dh_rec[0, 0], &ldc_)
    return dgates_arr


# ---------------------------------------------------------------------------
# detector statistics
# ---------------------------------------------------------------------------


def shoe_statistics(
    double[:, ::1] accel,
    double[:, ::1] gyro,
    int window,
    double sigma_a2,
    double sigma_w2,
    double g,
):
    """See ``_reference.shoe_statistics``."""
    cdef Py_ssize_t T = accel.shape[0]
    cdef Py_ssize_t m = T - window + 1
    if m < 1:
        raise ValueError(f"sequence of {T} samples shorter than window {window}")
    out_arr = np.empty(m)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t k, i
    cdef double ax, ay, az, norm, ux, uy, uz, acc_term, gyro_term, dx, dy, dz

    for k in range(m):
        ax = 0.0
        ay = 0.0
        az = 0.0
        for i in range(k, k + window):
            ax += accel[i, 0]
            ay += accel[i, 1]
            az += accel[i, 2]
        ax /= window
        ay /= window
        az /= window
        norm = sqrt(ax * ax + ay * ay + az * az)
        if norm < 1e-9:
            raise ValueError(
                f"mean acceleration near zero at window {k}; gravity direction undefined"
            )
        ux = g * ax / norm
        uy = g * ay / norm
        uz = g * az / norm
        acc_term = 0.0
        gyro_term = 0.0
        for i in range(k, k + window):
            dx = accel[i, 0] - ux
            dy = accel[i, 1] - uy
            dz = accel[i, 2] - uz
            acc_term += dx * dx + dy * dy + dz * dz
            gyro_term += gyro[i, 0] * gyro[i, 0] + gyro[i, 1] * gyro[i, 1] + gyro[i, 2] * gyro[i, 2]
        out[k] = (acc_term / sigma_a2 + gyro_term / sigma_w2) / window
    return out_arr


def ared_statistics(double[:, ::1] gyro, int window):
    """See ``_reference.ared_statistics``."""
    cdef Py_ssize_t T = gyro.shape[0]
    cdef Py_ssize_t m = T - window + 1
    if m < 1:
        raise ValueError(f"sequence of {T} samples shorter than window {window}")
    out_arr = np.empty(m)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t k, i
    cdef double acc
    for k in range(m):
        acc = 0.0
        for i in range(k, k + window):
            acc += gyro[i, 0] * gyro[i, 0] + gyro[i, 1] * gyro[i, 1] + gyro[i, 2] * gyro[i, 2]
        out[k] = acc / window
    return out_arr
