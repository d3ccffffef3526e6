"""Segment runners for the batched integrator.

One runner advances a whole constant-dose span for a batch of states with
an embedded Dormand-Prince 5(4) pair, recording every accepted step into
caller-owned buffers.  For landscapes with constant interaction and a
linear rate function the runner is a cached numba kernel taking the model
parameters as arrays; otherwise a numpy implementation with identical
semantics is used.
"""

from __future__ import annotations

import numpy as np

from .landscape import Landscape

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba ships with the target env
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):  # pragma: no cover
        def wrap(fn):
            return fn
        return wrap

# Dormand-Prince 5(4) tableau, identical to the scalar engine's pair.
# The last stage row equals the 5th-order weights (FSAL): the stage-7
# evaluation point is the proposed solution itself.
_DP_A = np.zeros((7, 6))
_DP_A[1, :1] = (1 / 5,)
_DP_A[2, :2] = (3 / 40, 9 / 40)
_DP_A[3, :3] = (44 / 45, -56 / 15, 32 / 9)
_DP_A[4, :4] = (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729)
_DP_A[5, :5] = (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656)
_DP_A[6, :6] = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
_DP_ERR = np.array([35 / 384 - 5179 / 57600, 0.0, 500 / 1113 - 7571 / 16695,
                    125 / 192 - 393 / 640, -2187 / 6784 + 92097 / 339200,
                    11 / 84 - 187 / 2100, -1 / 40])


@njit(cache=True)
def _rhs_kernel(y, dose, out, r, g, uc, p1, p2, e1, sig, cc, slope, eps, full):
    for i in range(y.shape[0]):
        u = y[i, 0]
        n = y[i, 1]
        b0 = -p1 * (u - p2) ** e1
        b0p = -e1 * p1 * (u - p2) ** (e1 - 1)
        for j in range(r.shape[0]):
            w = u - uc[j]
            ex = r[j] * np.exp(-g[j] * w * w)
            b0 += ex
            b0p += ex * (-2.0 * g[j] * w)
        b1 = 0.0
        b1p = 0.0
        for j in range(sig.shape[0]):
            c1 = sig[j, 0]
            c2 = sig[j, 1]
            c3 = sig[j, 2]
            c45 = sig[j, 3] * sig[j, 4]
            z = sig[j, 3] * (sig[j, 4] * u - sig[j, 5])
            s = np.exp(-abs(z))
            if z >= 0.0:
                den = c2 * s + c3
                b1 += c1 * s / den + sig[j, 6]
            else:
                den = c2 + c3 * s
                b1 += c1 / den + sig[j, 6]
            b1p += -c1 * c3 * c45 * s / (den * den)
        bp = b0p - dose * b1p
        bv = b0 - dose * b1 - cc * n
        if full:
            out[i, 0] = eps * slope * n * bp
            out[i, 1] = n * bv
        else:
            out[i, 0] = eps * bp
            out[i, 1] = bv / slope


@njit(cache=True)
def _segment_kernel(y, t0, t1, dose, h, rtol, atol, rec_t, rec_y,
                    r, g, uc, p1, p2, e1, sig, cc, slope, eps, full):
    n_samp = y.shape[0]
    k = np.empty((7, n_samp, 2))
    yw = np.empty((n_samp, 2))
    t = t0
    m = 0
    max_rec = rec_t.shape[0]
    while t < t1 - 1e-14:
        if m >= max_rec:
            return m, t, h, True
        if h > t1 - t:
            h = t1 - t
        if h < 1e-13 * max(1.0, abs(t)):
            return m, t, h, False
        _rhs_kernel(y, dose, k[0], r, g, uc, p1, p2, e1, sig, cc, slope, eps, full)
        for s in range(1, 7):
            for i in range(n_samp):
                for d in range(2):
                    acc = 0.0
                    for q in range(s):
                        acc += _DP_A[s, q] * k[q, i, d]
                    yw[i, d] = y[i, d] + h * acc
            _rhs_kernel(yw, dose, k[s], r, g, uc, p1, p2, e1, sig, cc, slope, eps, full)
        # FSAL: yw now holds the 5th-order proposal
        err_norm = 0.0
        for i in range(n_samp):
            acc = 0.0
            for d in range(2):
                e_id = 0.0
                for q in range(7):
                    e_id += _DP_ERR[q] * k[q, i, d]
                e_id *= h
                ay = abs(y[i, d])
                ay5 = abs(yw[i, d])
                sc = atol + rtol * (ay if ay > ay5 else ay5)
                acc += (e_id / sc) ** 2
            acc = np.sqrt(acc * 0.5)
            if acc > err_norm:
                err_norm = acc
        if err_norm <= 1.0 or h <= 1e-12:
            t = t + h
            rec_t[m] = t
            for i in range(n_samp):
                y[i, 0] = yw[i, 0]
                y[i, 1] = yw[i, 1]
                rec_y[m, i, 0] = yw[i, 0]
                rec_y[m, i, 1] = yw[i, 1]
            m += 1
        if err_norm > 0.0:
            fac = 0.9 * err_norm ** -0.2
            if fac < 0.2:
                fac = 0.2
            elif fac > 5.0:
                fac = 5.0
            h = h * fac
        else:
            h = h * 5.0
    return m, t, h, True


def get_segment_runner(L: Landscape, system: str):
    """runner(y, t0, t1, dose, h, rtol, atol, rec_t, rec_y) ->
    (n_recorded, t_reached, h_next, ok).

    Records the state after every accepted step (not the initial one);
    returns when t1 is reached or the buffers fill; ok=False flags a step
    underflow.
    """
    if _HAVE_NUMBA and L.interaction.is_constant and L.rate.is_linear:
        r = np.asarray(L.r, dtype=float)
        g = np.asarray(L.g, dtype=float)
        uc = np.asarray(L.u_centers, dtype=float)
        p1, p2 = float(L.poly[0]), float(L.poly[1])
        e1 = int(2 * L.poly[2])
        sig = np.ascontiguousarray(np.asarray(L.sigmoids, dtype=float).reshape(-1, 7))
        cc = float(L.interaction.const)
        slope = float(L.rate.slope)
        eps = float(L.epsilon)
        full = system == "full"

        def runner(y, t0, t1, dose, h, rtol, atol, rec_t, rec_y):
            return _segment_kernel(y, t0, t1, dose, h, rtol, atol, rec_t, rec_y,
                                   r, g, uc, p1, p2, e1, sig, cc, slope, eps, full)

        return runner
    return _numpy_runner(L, system)


def _numpy_runner(L: Landscape, system: str):
    from .dynamics import f_full, f_reduced

    field = f_full if system == "full" else f_reduced

    def runner(y, t0, t1, dose, h, rtol, atol, rec_t, rec_y):
        t = t0
        m = 0
        max_rec = rec_t.shape[0]
        k = np.empty((7, *y.shape))
        while t < t1 - 1e-14:
            if m >= max_rec:
                return m, t, h, True
            h = min(h, t1 - t)
            if h < 1e-13 * max(1.0, abs(t)):
                return m, t, h, False
            k[0] = field(y, dose, L)
            for s in range(1, 7):
                yi = y + h * np.tensordot(_DP_A[s, :s], k[:s], axes=(0, 0))
                k[s] = field(yi, dose, L)
            y5 = yi  # FSAL: the last stage point is the proposal
            err = h * np.tensordot(_DP_ERR, k, axes=(0, 0))
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
            err_norm = np.sqrt(np.mean((err / scale) ** 2, axis=1)).max()
            if err_norm <= 1.0 or h <= 1e-12:
                t = t + h
                y[...] = y5
                rec_t[m] = t
                rec_y[m] = y
                m += 1
            factor = 0.9 * err_norm ** -0.2 if err_norm > 0 else 5.0
            h = h * min(5.0, max(0.2, factor))
        return m, t, h, True

    return runner
