"""Hot inner loops, each with a numba and a numpy implementation.

The public names dispatch on :data:`fbm_bipolar._backend.BACKEND`; the
``*_numpy`` / ``*_numba`` variants stay importable so the benchmark and the
cross-backend tests can call both.
"""
from __future__ import annotations

import numpy as np
from scipy import signal

from ._backend import USE_NUMBA, njit

__all__ = [
    "exp_filter",
    "exp_filter_numpy",
    "exp_filter_numba",
    "lattice_sum_kernel",
    "lattice_sum_numpy",
    "lattice_sum_numba",
    "singular_integral",
    "singular_integral_numpy",
    "singular_integral_numba",
]


# ---------------------------------------------------------------------------
# z[k+1] = decay * z[k] + weight * inc[k], one independent recursion per row
# ---------------------------------------------------------------------------

def exp_filter_numpy(inc, decay, weight, z0):
    inc = np.atleast_2d(np.asarray(inc, dtype=np.float64))
    n_rows, n_steps = inc.shape
    out = np.empty((n_rows, n_steps + 1))
    out[:, 0] = z0
    for i in range(n_rows):
        if n_steps == 0:
            continue
        zi = np.array([decay[i] * z0[i]])
        y, _ = signal.lfilter([weight[i]], [1.0, -decay[i]], inc[i], zi=zi)
        out[i, 1:] = y
    return out


@njit
def _exp_filter_loop(inc, decay, weight, z0):
    n_rows, n_steps = inc.shape
    out = np.empty((n_rows, n_steps + 1))
    for i in range(n_rows):
        z = z0[i]
        out[i, 0] = z
        d = decay[i]
        w = weight[i]
        for k in range(n_steps):
            z = d * z + w * inc[i, k]
            out[i, k + 1] = z
    return out


def exp_filter_numba(inc, decay, weight, z0):
    inc = np.ascontiguousarray(np.atleast_2d(inc), dtype=np.float64)
    return _exp_filter_loop(
        inc,
        np.ascontiguousarray(decay, dtype=np.float64),
        np.ascontiguousarray(weight, dtype=np.float64),
        np.ascontiguousarray(z0, dtype=np.float64),
    )


# ---------------------------------------------------------------------------
# sum_{1<=i,j<=M} (i^2 + j^2)^(-s), rows reduced in a fixed order
# ---------------------------------------------------------------------------

def lattice_sum_numpy(s, M, block=512):
    j2 = np.arange(1, M + 1, dtype=np.float64) ** 2
    total = 0.0
    for start in range(1, M + 1, block):
        i2 = np.arange(start, min(start + block, M + 1), dtype=np.float64)[:, None] ** 2
        rows = np.sum((i2 + j2[None, :]) ** (-s), axis=1)
        for r in rows:
            total += r
    return float(total)


@njit
def _lattice_loop(s, M):
    total = 0.0
    for i in range(1, M + 1):
        row = 0.0
        i2 = float(i) * float(i)
        if s == 1.0:  # the divergence checks; division beats scalar pow
            for j in range(1, M + 1):
                row += 1.0 / (i2 + float(j) * float(j))
        else:
            for j in range(1, M + 1):
                row += (i2 + float(j) * float(j)) ** (-s)
        total += row
    return total


def lattice_sum_numba(s, M, block=512):
    return float(_lattice_loop(float(s), int(M)))


# ---------------------------------------------------------------------------
# int_s^t (phi(r) - phi(s)) (s/r)^(1/2-H) (r-s)^(H-3/2) dr, phi piecewise linear
# on `grid`; the power factor is integrated exactly cell by cell.
# ---------------------------------------------------------------------------

def _cell_moments(x_lo, x_hi, a):
    # int x^a dx and int x^(a+1) dx over [x_lo, x_hi]; a + 1 < 0 < a + 2
    m0 = (x_hi ** (a + 1.0) - np.where(x_lo > 0, x_lo, 1.0) ** (a + 1.0)) / (a + 1.0)
    m1 = (x_hi ** (a + 2.0) - x_lo ** (a + 2.0)) / (a + 2.0)
    return m0, m1


def singular_integral_numpy(s_points, grid, phi_vals, t, H):
    s_points = np.asarray(s_points, dtype=np.float64)
    a = H - 1.5
    out = np.empty_like(s_points)
    for idx, s in enumerate(s_points):
        phi_s = np.interp(s, grid, phi_vals)
        inner = grid[(grid > s) & (grid < t)]
        r = np.concatenate(([s], inner, [t]))
        g = (np.interp(r, grid, phi_vals) - phi_s) * (s / r) ** (0.5 - H)
        g[0] = 0.0
        x = r - s
        h = np.diff(x)
        beta = np.diff(g) / h
        alpha = g[:-1] - beta * x[:-1]
        m0, m1 = _cell_moments(x[:-1], x[1:], a)
        # first cell starts at x = 0 where alpha vanishes and x^(a+1) is unbounded
        m0[0] = 0.0
        alpha[0] = 0.0
        out[idx] = np.sum(alpha * m0 + beta * m1)
    return out


@njit
def _singular_loop(s_points, grid, phi_vals, t, H):
    a = H - 1.5
    n = grid.shape[0]
    phi_t = np.interp(t, grid, phi_vals)
    out = np.empty(s_points.shape[0])
    for idx in range(s_points.shape[0]):
        s = s_points[idx]
        phi_s = np.interp(s, grid, phi_vals)
        acc = 0.0
        x_prev = 0.0
        g_prev = 0.0
        p1_prev = 0.0  # x_prev^(a+1), unused while x_prev = 0
        p2_prev = 0.0  # x_prev^(a+2)
        k = np.searchsorted(grid, s, side="right")
        done = False
        while not done:
            if k < n and grid[k] < t:
                r = grid[k]
                phi_r = phi_vals[k]
            else:
                r = t
                phi_r = phi_t
                done = True
            g = (phi_r - phi_s) * (s / r) ** (0.5 - H)
            x = r - s
            if x > x_prev:
                p1 = x ** (a + 1.0)
                p2 = p1 * x
                beta = (g - g_prev) / (x - x_prev)
                acc += beta * (p2 - p2_prev) / (a + 2.0)
                if x_prev > 0.0:
                    alpha = g_prev - beta * x_prev
                    acc += alpha * (p1 - p1_prev) / (a + 1.0)
                p1_prev = p1
                p2_prev = p2
            x_prev = x
            g_prev = g
            k += 1
        out[idx] = acc
    return out


def singular_integral_numba(s_points, grid, phi_vals, t, H):
    return _singular_loop(
        np.ascontiguousarray(s_points, dtype=np.float64),
        np.ascontiguousarray(grid, dtype=np.float64),
        np.ascontiguousarray(phi_vals, dtype=np.float64),
        float(t),
        float(H),
    )


if USE_NUMBA:
    exp_filter = exp_filter_numba
    lattice_sum_kernel = lattice_sum_numba
    singular_integral = singular_integral_numba
else:
    exp_filter = exp_filter_numpy
    lattice_sum_kernel = lattice_sum_numpy
    singular_integral = singular_integral_numpy
