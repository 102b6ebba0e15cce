"""Pure-NumPy kernels: the reference semantics for the compiled backend.

Each function here has a signature-identical counterpart in ``_native``
(Cython). Keep the math in exact correspondence; the test suite asserts
numerical agreement between the two backends.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _quat_mul(a, b):
    w = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
    x = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2]
    y = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1]
    z = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]
    return np.array([w, x, y, z])


def _quat_from_rotvec(rv):
    angle = np.sqrt(rv[0] ** 2 + rv[1] ** 2 + rv[2] ** 2)
    if angle < 1e-300:
        return np.array([1.0, 0.0, 0.0, 0.0])
    half = 0.5 * angle
    s = np.sin(half) / angle
    return np.array([np.cos(half), rv[0] * s, rv[1] * s, rv[2] * s])


def _quat_rotmat(q):
    w, x, y, z = q
    return np.array(
        [
            [w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (w * y + x * z)],
            [2 * (w * z + x * y), w * w - x * x + y * y - z * z, 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z],
        ]
    )


def _skew(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def _rotvec_matrix(rv):
    """Rodrigues formula for expm(skew(rv))."""
    angle = np.sqrt(rv[0] ** 2 + rv[1] ** 2 + rv[2] ** 2)
    K = _skew(rv)
    if angle < 1e-12:
        return np.eye(3) + K + 0.5 * (K @ K)
    a = np.sin(angle) / angle
    b = (1.0 - np.cos(angle)) / (angle * angle)
    return np.eye(3) + a * K + b * (K @ K)


def eskf_run(t, accel, gyro, flags, q0, P0, sig_a, sig_w, sig_zupt, g):
    """Strapdown propagation + zero-velocity Kalman updates over a whole log.

    State starts at p = v = 0 with attitude ``q0`` and covariance ``P0``.
    ``flags[k] == 1`` applies a zero-velocity update after propagating to
    sample k. Returns (pos, vel, quat, applied, P_final).

    Raises ArithmeticError on a non-finite state (message carries the step).
    """
    n = t.shape[0]
    pos = np.zeros((n, 3))
    vel = np.zeros((n, 3))
    quat = np.zeros((n, 4))
    applied = np.zeros(n, dtype=np.uint8)

    p = np.zeros(3)
    v = np.zeros(3)
    q = np.asarray(q0, dtype=float).copy()
    P = np.asarray(P0, dtype=float).copy()
    quat[0] = q

    g_nav = np.array([0.0, 0.0, -g])
    r_zupt = sig_zupt * sig_zupt
    eye9 = np.eye(9)

    for k in range(1, n):
        dt = t[k] - t[k - 1]
        a_k = accel[k]
        w_k = gyro[k]

        R = _quat_rotmat(q)
        # nominal state: position uses the pre-update velocity
        p = p + v * dt
        v = v + (R @ a_k + g_nav) * dt
        q = _quat_mul(q, _quat_from_rotvec(w_k * dt))
        q = q / np.sqrt(q @ q)

        F = eye9.copy()
        F[0:3, 3:6] = dt * np.eye(3)
        F[3:6, 6:9] = -(R @ _skew(a_k)) * dt
        F[6:9, 6:9] = _rotvec_matrix(-w_k * dt)
        P = F @ P @ F.T
        qa = sig_a * sig_a * dt
        qw = sig_w * sig_w * dt
        P[3, 3] += qa
        P[4, 4] += qa
        P[5, 5] += qa
        P[6, 6] += qw
        P[7, 7] += qw
        P[8, 8] += qw
        P = 0.5 * (P + P.T)

        if flags[k]:
            S = P[3:6, 3:6] + r_zupt * np.eye(3)
            K = P[:, 3:6] @ np.linalg.inv(S)
            dx = K @ (-v)
            p = p + dx[0:3]
            v = v + dx[3:6]
            q = _quat_mul(q, _quat_from_rotvec(dx[6:9]))
            q = q / np.sqrt(q @ q)
            IKH = eye9.copy()
            IKH[:, 3:6] -= K
            P = IKH @ P @ IKH.T + r_zupt * (K @ K.T)
            P = 0.5 * (P + P.T)
            applied[k] = 1

        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v)) and np.all(np.isfinite(q))):
            raise ArithmeticError(f"non-finite state at step {k}")

        pos[k] = p
        vel[k] = v
        quat[k] = q

    return pos, vel, quat, applied, P


def lstm_seq_forward(xp, Wh):
    """Run one LSTM layer over a batch of sequences.

    ``xp`` is the input projection ``x @ Wx + b`` for all timesteps,
    shape (B, T, 4H) with gate blocks ordered (input, forget, cell, output).
    Hidden and cell states start at zero. Returns (h, c, gates, tc) where
    ``gates`` holds post-activation gate values and ``tc`` is tanh(c).
    """
    B, T, H4 = xp.shape
    H = H4 // 4
    h = np.empty((B, T, H))
    c = np.empty((B, T, H))
    gates = np.empty((B, T, H4))
    tc = np.empty((B, T, H))
    h_prev = np.zeros((B, H))
    c_prev = np.zeros((B, H))
    for ts in range(T):
        G = xp[:, ts, :] + h_prev @ Wh
        gi = 1.0 / (1.0 + np.exp(-G[:, 0:H]))
        gf = 1.0 / (1.0 + np.exp(-G[:, H : 2 * H]))
        gg = np.tanh(G[:, 2 * H : 3 * H])
        go = 1.0 / (1.0 + np.exp(-G[:, 3 * H : 4 * H]))
        c_t = gf * c_prev + gi * gg
        tc_t = np.tanh(c_t)
        h_t = go * tc_t
        gates[:, ts, 0:H] = gi
        gates[:, ts, H : 2 * H] = gf
        gates[:, ts, 2 * H : 3 * H] = gg
        gates[:, ts, 3 * H : 4 * H] = go
        c[:, ts, :] = c_t
        tc[:, ts, :] = tc_t
        h[:, ts, :] = h_t
        h_prev = h_t
        c_prev = c_t
    return h, c, gates, tc


def lstm_seq_backward(dh_out, c, gates, tc, Wh):
    """Backpropagate through the recurrence of one LSTM layer.

    ``dh_out`` is the loss gradient w.r.t. the layer's hidden outputs
    (contributions from above only; recurrent flow is handled here).
    Returns pre-activation gate gradients, shape (B, T, 4H).
    """
    B, T, H = tc.shape
    dgates = np.empty((B, T, 4 * H))
    dh_rec = np.zeros((B, H))
    dc = np.zeros((B, H))
    WhT = Wh.T
    for ts in range(T - 1, -1, -1):
        gi = gates[:, ts, 0:H]
        gf = gates[:, ts, H : 2 * H]
        gg = gates[:, ts, 2 * H : 3 * H]
        go = gates[:, ts, 3 * H : 4 * H]
        tc_t = tc[:, ts, :]
        dh = dh_out[:, ts, :] + dh_rec
        do = dh * tc_t
        dc = dc + dh * go * (1.0 - tc_t * tc_t)
        di = dc * gg
        dg = dc * gi
        c_prev = c[:, ts - 1, :] if ts > 0 else 0.0
        df = dc * c_prev
        dG = dgates[:, ts, :]
        dG[:, 0:H] = di * gi * (1.0 - gi)
        dG[:, H : 2 * H] = df * gf * (1.0 - gf)
        dG[:, 2 * H : 3 * H] = dg * (1.0 - gg * gg)
        dG[:, 3 * H : 4 * H] = do * go * (1.0 - go)
        dh_rec = dG @ WhT
        dc = dc * gf
    return dgates


def shoe_statistics(accel, gyro, window, sigma_a2, sigma_w2, g):
    """Windowed stance test statistic combining gravity deviation and gyro energy.

    Windows are forward-anchored: the value at index k covers samples
    k .. k+window-1. Output length is T - window + 1.
    """
    T = accel.shape[0]
    m = T - window + 1
    if m < 1:
        raise ValueError(f"sequence of {T} samples shorter than window {window}")
    aw = sliding_window_view(accel, window, axis=0)  # (m, 3, N)
    abar = aw.mean(axis=2)
    norms = np.sqrt((abar * abar).sum(axis=1))
    if np.any(norms < 1e-9):
        k = int(np.argmax(norms < 1e-9))
        raise ValueError(f"mean acceleration near zero at window {k}; gravity direction undefined")
    unit = abar / norms[:, None]
    resid = aw - g * unit[:, :, None]
    acc_term = (resid * resid).sum(axis=(1, 2)) / sigma_a2
    gw = sliding_window_view(gyro, window, axis=0)
    gyro_term = (gw * gw).sum(axis=(1, 2)) / sigma_w2
    return (acc_term + gyro_term) / window


def ared_statistics(gyro, window):
    """Windowed mean of squared angular-rate norms (forward-anchored)."""
    T = gyro.shape[0]
    m = T - window + 1
    if m < 1:
        raise ValueError(f"sequence of {T} samples shorter than window {window}")
    gw = sliding_window_view(gyro, window, axis=0)
    return (gw * gw).sum(axis=(1, 2)) / window
