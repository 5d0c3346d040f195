"""Hot numeric kernels, compiled with numba when available.

Every kernel is written once as a plain loop implementation. When numba is
importable (and ``LTPID_DISABLE_NUMBA`` is not set) the exported name is the
``@njit``-compiled version; otherwise it is the plain function. The
uncompiled implementations stay importable under ``*_numpy`` aliases so the
two paths can be timed and cross-checked, see ``benchmarks/bench_kernels.py``.
"""
from __future__ import annotations

import math
import os

import numpy as np

_DISABLE = os.environ.get("LTPID_DISABLE_NUMBA", "").strip().lower() in {
    "1", "true", "yes", "on",
}

NUMBA_ENABLED = False
if not _DISABLE:
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False


def _jit(fn):
    if NUMBA_ENABLED:
        return njit(cache=True, nogil=True)(fn)
    return fn


def _ltp_simulate_impl(A, B, C, u, x0):
    # x(t+1) = A(t) x(t) + B(t) u(t), y(t) = C(t) x(t); matrices cycle with
    # period P. Index p = t % P selects the matrix acting at 1-based time t+1.
    n_tags = A.shape[0]
    nx = A.shape[1]
    n_steps = u.shape[0]
    y = np.empty(n_steps)
    x = x0.copy()
    x_next = np.empty(nx)
    for t in range(n_steps):
        p = t % n_tags
        acc = 0.0
        for j in range(nx):
            acc += C[p, j] * x[j]
        y[t] = acc
        for i in range(nx):
            s = 0.0
            for j in range(nx):
                s += A[p, i, j] * x[j]
            x_next[i] = s + B[p, i] * u[t]
        for i in range(nx):
            x[i] = x_next[i]
    return y


def _ltp_impulse_impl(A, B, C, n_taps):
    # Column tau of the result holds the lag-i Markov coefficients
    # C(tau) A(tau-1) ... A(tau-i+1) B(tau-i), built by propagating the row
    # vector C(tau) backwards through the periodic A matrices.
    n_tags = A.shape[0]
    nx = A.shape[1]
    g = np.empty((n_taps, n_tags))
    row = np.empty(nx)
    row_next = np.empty(nx)
    for p in range(n_tags):
        for j in range(nx):
            row[j] = C[p, j]
        for i in range(1, n_taps + 1):
            q = (p - i) % n_tags
            acc = 0.0
            for j in range(nx):
                acc += row[j] * B[q, j]
            g[i - 1, p] = acc
            for j2 in range(nx):
                s = 0.0
                for j in range(nx):
                    s += row[j] * A[q, j, j2]
                row_next[j2] = s
            for j in range(nx):
                row[j] = row_next[j]
    return g


def _pendulum_discretize_impl(base_length, swing_length, gravity, mass,
                              omega, ts, period, substeps):
    # One RK4 sweep per tag over the joint system [M | v] with
    # dM = A_c(t) M, dv = A_c(t) v + b_c(t), starting from M = I, v = 0.
    # A(tau) = M(ts), B(tau) = v(ts). The three columns share the same
    # tangent coefficients, evaluated once per RK4 stage time.
    A = np.empty((period, 2, 2))
    B = np.empty((period, 2))
    h = ts / substeps
    S = np.empty((2, 3))
    k1 = np.empty((2, 3))
    k2 = np.empty((2, 3))
    k3 = np.empty((2, 3))
    k4 = np.empty((2, 3))
    for p in range(period):
        t0 = p * ts
        for i in range(2):
            for j in range(3):
                S[i, j] = 0.0
        S[0, 0] = 1.0
        S[1, 1] = 1.0
        for step in range(substeps):
            t = t0 + step * h

            length = base_length + swing_length * math.cos(omega * t)
            a21 = -gravity / length
            a22 = 2.0 * omega * swing_length * math.sin(omega * t) / length
            forcing = 1.0 / (mass * length)
            for col in range(3):
                k1[0, col] = S[1, col]
                k1[1, col] = a21 * S[0, col] + a22 * S[1, col]
            k1[1, 2] += forcing

            tm = t + 0.5 * h
            length = base_length + swing_length * math.cos(omega * tm)
            a21 = -gravity / length
            a22 = 2.0 * omega * swing_length * math.sin(omega * tm) / length
            forcing = 1.0 / (mass * length)
            for col in range(3):
                x1 = S[0, col] + 0.5 * h * k1[0, col]
                x2 = S[1, col] + 0.5 * h * k1[1, col]
                k2[0, col] = x2
                k2[1, col] = a21 * x1 + a22 * x2
            k2[1, 2] += forcing
            for col in range(3):
                x1 = S[0, col] + 0.5 * h * k2[0, col]
                x2 = S[1, col] + 0.5 * h * k2[1, col]
                k3[0, col] = x2
                k3[1, col] = a21 * x1 + a22 * x2
            k3[1, 2] += forcing

            te = t + h
            length = base_length + swing_length * math.cos(omega * te)
            a21 = -gravity / length
            a22 = 2.0 * omega * swing_length * math.sin(omega * te) / length
            forcing = 1.0 / (mass * length)
            for col in range(3):
                x1 = S[0, col] + h * k3[0, col]
                x2 = S[1, col] + h * k3[1, col]
                k4[0, col] = x2
                k4[1, col] = a21 * x1 + a22 * x2
            k4[1, 2] += forcing

            for i in range(2):
                for j in range(3):
                    S[i, j] += (h / 6.0) * (k1[i, j] + 2.0 * k2[i, j]
                                            + 2.0 * k3[i, j] + k4[i, j])
        for i in range(2):
            A[p, i, 0] = S[i, 0]
            A[p, i, 1] = S[i, 1]
            B[p, i] = S[i, 2]
    return A, B


def _pendulum_nonlinear_impl(base_length, swing_length, gravity, mass,
                             omega, ts, substeps, u, psi0, dpsi0):
    # Full nonlinear swing equation under zero-order-held input, RK4 at
    # substep ts/substeps. Returns the angle at each sample instant.
    n_steps = u.shape[0]
    y = np.empty(n_steps)
    h = ts / substeps
    x1 = psi0
    x2 = dpsi0
    for k in range(n_steps):
        y[k] = x1
        t0 = k * ts
        force = u[k]
        for step in range(substeps):
            t = t0 + step * h

            length = base_length + swing_length * math.cos(omega * t)
            a1 = x2
            b1 = (-gravity / length * math.sin(x1)
                  + 2.0 * omega * swing_length * math.sin(omega * t)
                  / length * x2
                  + force * math.cos(x1) / (mass * length))

            tm = t + 0.5 * h
            length = base_length + swing_length * math.cos(omega * tm)
            p1 = x1 + 0.5 * h * a1
            p2 = x2 + 0.5 * h * b1
            a2 = p2
            b2 = (-gravity / length * math.sin(p1)
                  + 2.0 * omega * swing_length * math.sin(omega * tm)
                  / length * p2
                  + force * math.cos(p1) / (mass * length))

            p1 = x1 + 0.5 * h * a2
            p2 = x2 + 0.5 * h * b2
            a3 = p2
            b3 = (-gravity / length * math.sin(p1)
                  + 2.0 * omega * swing_length * math.sin(omega * tm)
                  / length * p2
                  + force * math.cos(p1) / (mass * length))

            te = t + h
            length = base_length + swing_length * math.cos(omega * te)
            p1 = x1 + h * a3
            p2 = x2 + h * b3
            a4 = p2
            b4 = (-gravity / length * math.sin(p1)
                  + 2.0 * omega * swing_length * math.sin(omega * te)
                  / length * p2
                  + force * math.cos(p1) / (mass * length))

            x1 += (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
            x2 += (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
    return y


ltp_simulate_numpy = _ltp_simulate_impl
ltp_impulse_numpy = _ltp_impulse_impl
pendulum_discretize_numpy = _pendulum_discretize_impl
pendulum_nonlinear_numpy = _pendulum_nonlinear_impl

ltp_simulate = _jit(_ltp_simulate_impl)
ltp_impulse = _jit(_ltp_impulse_impl)
pendulum_discretize = _jit(_pendulum_discretize_impl)
pendulum_nonlinear = _jit(_pendulum_nonlinear_impl)
