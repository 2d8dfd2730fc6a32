"""Scalar fractional Brownian motion for H <= 1/2.

Covariance, the Volterra kernel and its time derivative, the transfer operator
K*, exact samplers, and Wiener integrals of deterministic integrands.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterator, Optional

import numpy as np
from scipy import integrate, linalg, special

from . import kernels

log = logging.getLogger(__name__)

ROUGH_REGIME = (0.25, 0.5)
DEFAULT_POINTS_PER_UNIT = 2 ** 10


class DomainError(ValueError):
    """Argument outside the domain of a kernel or operator."""


@dataclass(frozen=True)
class HurstParam:
    h: float

    def __post_init__(self):
        if not 0.0 < self.h < 1.0:
            raise DomainError(f"Hurst parameter must lie in (0, 1), got {self.h}")

    @property
    def regime(self) -> str:
        lo, hi = ROUGH_REGIME
        if lo < self.h < hi:
            return "rough (1/4, 1/2)"
        if self.h == 0.5:
            return "brownian"
        if self.h <= lo:
            return "below 1/4"
        return "smooth (1/2, 1)"

    def require_rough_regime(self) -> str:
        lo, hi = ROUGH_REGIME
        if not lo < self.h < hi:
            raise DomainError(f"operation needs 1/4 < H < 1/2, got H={self.h}")
        return self.regime

    def __float__(self):
        return self.h


def _hval(h) -> float:
    return float(h.h if isinstance(h, HurstParam) else HurstParam(float(h)).h)


@dataclass
class SampledFunction:
    """Function values on a monotone grid.

    ``kind="smooth"`` means piecewise-linear interpolation between nodes and an
    optional ``derivative`` array; ``kind="step"`` means ``grid`` holds the
    breakpoints t_1 < ... < t_{n+1} and ``values`` the n step heights a_i on
    (t_i, t_{i+1}].
    """

    grid: np.ndarray
    values: np.ndarray
    derivative: Optional[np.ndarray] = None
    kind: str = "smooth"

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if np.any(np.diff(self.grid) <= 0):
            raise DomainError("grid must be strictly increasing")
        expected = self.grid.size - 1 if self.kind == "step" else self.grid.size
        if self.values.size != expected:
            raise DomainError("values do not match the grid")

    @classmethod
    def from_callable(cls, fn: Callable, grid, dfn: Optional[Callable] = None):
        grid = np.asarray(grid, dtype=np.float64)
        der = None if dfn is None else np.asarray(dfn(grid), dtype=np.float64)
        return cls(grid, np.asarray(fn(grid), dtype=np.float64), der)

    @classmethod
    def step(cls, breakpoints, heights):
        return cls(breakpoints, heights, kind="step")

    def same_grid(self, other: "SampledFunction") -> bool:
        return self.grid.shape == other.grid.shape and np.array_equal(self.grid, other.grid)


@dataclass
class FbmPath:
    times: np.ndarray
    values: np.ndarray
    hurst: float
    seed: int
    method: str = field(default="circulant")

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "value"])
            for t, v in zip(self.times, self.values):
                w.writerow([f"{t:.17g}", f"{v:.17g}"])
        return path


def uniform_grid(t_end: float, points_per_unit: int = DEFAULT_POINTS_PER_UNIT, t_start: float = 0.0):
    n = max(1, int(round((t_end - t_start) * points_per_unit)))
    return np.linspace(t_start, t_end, n + 1)


# ---------------------------------------------------------------------------
# covariance and kernel
# ---------------------------------------------------------------------------

def fbm_covariance(t, s, h):
    """R(t, s) = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2."""
    h = _hval(h)
    t = np.asarray(t, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if np.any(t < 0) or np.any(s < 0):
        raise DomainError("fBm covariance needs non-negative times")
    r = 0.5 * (t ** (2 * h) + s ** (2 * h) - np.abs(t - s) ** (2 * h))
    return float(r) if r.ndim == 0 else r


def hurst_constant_analytic(h) -> float:
    """Closed-form normalisation sqrt(2H / ((1-2H) B(1-2H, H+1/2)))."""
    h = _hval(h)
    if h == 0.5:
        return 1.0
    return float(np.sqrt(2 * h / ((1 - 2 * h) * special.beta(1 - 2 * h, h + 0.5))))


def _unit_kernel(t, s, h):
    # kernel with c_H = 1, incomplete-beta form of the F correction
    t = np.asarray(t, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if h == 0.5:
        return np.ones(np.broadcast(t, s).shape)
    a, b = h + 0.5, 1.0 - 2.0 * h
    w = (t - s) / t
    tail = special.betainc(a, b, w) * special.beta(a, b)
    return (t / s) ** (h - 0.5) * (t - s) ** (h - 0.5) + (0.5 - h) * s ** (h - 0.5) * tail


def _unit_kernel_squared_integral(t, h):
    # int_0^t K_1(t,s)^2 ds; the endpoint powers s^{2H-1}, (t-s)^{2H-1} go into the QAWS weight
    def reg(s):
        s = min(max(s, t * 1e-15), t * (1 - 1e-15))
        return float(_unit_kernel(t, s, h)) ** 2 * s ** (1 - 2 * h) * (t - s) ** (1 - 2 * h)

    val, _ = integrate.quad(reg, 0.0, t, weight="alg", wvar=(2 * h - 1, 2 * h - 1), limit=200,
                            epsabs=0.0, epsrel=1e-12)
    return val


@lru_cache(maxsize=64)
def hurst_constant(h) -> float:
    """c_H pinned by int_0^1 K(1, s)^2 ds = 1.

    K is linear in c_H, so the root of the normalisation equation is the
    reciprocal square root of the unit-constant integral.
    """
    h = _hval(h)
    if h == 0.5:
        return 1.0
    if h > 0.5:
        raise DomainError("kernel implemented for H <= 1/2 only")
    return 1.0 / np.sqrt(_unit_kernel_squared_integral(1.0, h))


def _check_kernel_args(t, s):
    t = np.asarray(t, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if np.any(s <= 0) or np.any(s >= t):
        raise DomainError("kernel needs 0 < s < t (singular on the diagonal)")
    return t, s


def _volterra_F(z, h, c):
    # F(z) = c (1/2 - H) int_0^{z-1} r^{H-3/2} (1 - (1+r)^{H-1/2}) dr
    def g(r):
        if r == 0.0:
            return 0.5 - h
        return -np.expm1((h - 0.5) * np.log1p(r)) / r

    upper = z - 1.0
    head, _ = integrate.quad(g, 0.0, min(upper, 1.0), weight="alg", wvar=(h - 0.5, 0.0),
                             epsabs=0.0, epsrel=1e-12)
    tail = 0.0
    if upper > 1.0:
        tail, _ = integrate.quad(lambda r: g(r) * r ** (h - 0.5), 1.0, upper, limit=200,
                                 epsabs=0.0, epsrel=1e-12)
    return c * (0.5 - h) * (head + tail)


def kernel_KH(t, s, h, method: str = "beta"):
    """Volterra kernel K^H(t, s) for 0 < s < t.

    ``method="beta"`` uses the incomplete-beta closed form; ``"quad"`` evaluates
    c_H (t-s)^{H-1/2} + s^{H-1/2} F(t/s) with F by singular quadrature.
    """
    h = _hval(h)
    t, s = _check_kernel_args(t, s)
    if h > 0.5:
        raise DomainError("kernel implemented for H <= 1/2 only")
    c = hurst_constant(h)
    if method == "beta":
        out = c * _unit_kernel(t, s, h)
    elif method == "quad":
        tb, sb = np.broadcast_arrays(t, s)
        out = np.array([
            c * (ti - si) ** (h - 0.5) + si ** (h - 0.5) * _volterra_F(ti / si, h, c)
            for ti, si in zip(tb.ravel(), sb.ravel())
        ]).reshape(tb.shape)
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(out) if np.ndim(out) == 0 else out


def kernel_dKdt(t, s, h):
    """dK/dt = c_H (H - 1/2) (t - s)^{H-3/2} (s/t)^{1/2-H}."""
    h = _hval(h)
    t, s = _check_kernel_args(t, s)
    out = hurst_constant(h) * (h - 0.5) * (t - s) ** (h - 1.5) * (s / t) ** (0.5 - h)
    return float(out) if np.ndim(out) == 0 else out


def kernel_bound_constant(h, t: float = 1.0, n: int = 400) -> float:
    """Smallest C with K(t, s) <= C (t-s)^{H-1/2} s^{H-1/2} on an interior s-grid at time t."""
    h = _hval(h)
    s = t * (np.arange(1, n) / n)
    ratio = kernel_KH(t, s, h) / ((t - s) ** (h - 0.5) * s ** (h - 0.5))
    return float(np.max(ratio))


def kernel_variance(t, h) -> float:
    """int_0^t K(t, s)^2 ds by singular quadrature (should equal t^{2H})."""
    h = _hval(h)
    return hurst_constant(h) ** 2 * _unit_kernel_squared_integral(float(t), h)


def kernel_covariance(t, s, h) -> float:
    """int_0^{min(t,s)} K(t, r) K(s, r) dr (should equal R(t, s))."""
    h = _hval(h)
    hi, lo = max(t, s), min(t, s)
    if lo <= 0:
        return 0.0
    if hi == lo:
        return kernel_variance(hi, h)
    c2 = hurst_constant(h) ** 2

    def reg(r):
        r = min(max(r, lo * 1e-15), lo * (1 - 1e-15))
        return float(_unit_kernel(hi, r, h) * _unit_kernel(lo, r, h)) * r ** (1 - 2 * h) * (lo - r) ** (0.5 - h)

    val, _ = integrate.quad(reg, 0.0, lo, weight="alg", wvar=(2 * h - 1, h - 0.5), limit=200,
                            epsabs=0.0, epsrel=1e-12)
    return c2 * val


# ---------------------------------------------------------------------------
# transfer operator K*
# ---------------------------------------------------------------------------

def _check_cover(phi: SampledFunction, t: float):
    if phi.kind != "smooth":
        raise DomainError("K* expects a sampled (piecewise-linear) function")
    if phi.grid[0] > 0 or phi.grid[-1] < t * (1 - 1e-12):
        raise DomainError("integrand grid does not cover [0, t]")


def kstar_eval(phi: SampledFunction, s_points, t: float, h) -> np.ndarray:
    """(K*_t phi)(s) at points 0 < s < t, phi piecewise linear on its grid."""
    h = _hval(h)
    _check_cover(phi, t)
    s_points = np.atleast_1d(np.asarray(s_points, dtype=np.float64))
    if np.any(s_points <= 0) or np.any(s_points >= t):
        raise DomainError("K* evaluation points must lie in (0, t)")
    phi_s = np.interp(s_points, phi.grid, phi.values)
    local = kernel_KH(t, s_points, h) * phi_s
    if h == 0.5:
        return local
    sing = kernels.singular_integral(s_points, phi.grid, phi.values, t, h)
    return local + hurst_constant(h) * (h - 0.5) * sing


def kstar_apply(phi: SampledFunction, t: float, h) -> SampledFunction:
    """K*_t phi on phi's grid; NaN at s = 0 and s >= t where the kernel is singular."""
    _check_cover(phi, t)
    out = np.full(phi.grid.shape, np.nan)
    inside = (phi.grid > 0) & (phi.grid < t)
    out[inside] = kstar_eval(phi, phi.grid[inside], t, h)
    return SampledFunction(phi.grid, out)


def kstar_inner(phi: SampledFunction, psi: SampledFunction, t: float, h, epsrel: float = 1e-9) -> float:
    """L^2(0, t) inner product of K*_t phi and K*_t psi."""
    h = _hval(h)

    def integrand(s):
        s = min(max(s, t * 1e-13), t * (1 - 1e-13))
        return float(kstar_eval(phi, s, t, h)[0] * kstar_eval(psi, s, t, h)[0])

    # interior breakpoints help QAGS locate the kinks of the interpolants
    brk = np.union1d(phi.grid, psi.grid)
    brk = brk[(brk > 0) & (brk < t)]
    if brk.size > 40:
        brk = brk[:: int(np.ceil(brk.size / 40))]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        val, err = integrate.quad(integrand, 0.0, t, points=brk if brk.size else None, limit=400,
                                  epsabs=0.0, epsrel=epsrel)
    if caught:
        # roundoff stalls at ~1e-9 relative; the estimate is still well inside MC error
        log.debug("kstar_inner: %s (abs err %.2g)", caught[0].message, err)
    return val


def kstar_norm_sq(phi: SampledFunction, t: float, h, epsrel: float = 1e-9) -> float:
    """|K*_t phi|^2 in L^2(0, t): the variance of the Wiener integral of phi."""
    return kstar_inner(phi, phi, t, h, epsrel=epsrel)


def wiener_variance_covariance(phi: Callable, dphi: Callable, t: float, h) -> float:
    """Variance of int_0^t phi dbeta^H from the covariance R alone.

    phi(t)^2 t^{2H} - 2 phi(t) int phi'(s) R(t,s) ds + int int phi'(u) phi'(v) R(u,v) du dv.
    Independent of the kernel; used as a cross-check for K*.
    """
    h = _hval(h)
    pt = float(phi(t))
    cross, _ = integrate.quad(lambda s: dphi(s) * fbm_covariance(t, s, h), 0.0, t, limit=200)
    # symmetric double integral over the triangle v < u
    tri, _ = integrate.dblquad(
        lambda v, u: dphi(u) * dphi(v) * fbm_covariance(u, v, h), 0.0, t, 0.0, lambda u: u,
        epsabs=1e-12, epsrel=1e-10,
    )
    return pt * pt * t ** (2 * h) - 2 * pt * cross + 2 * tri


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def derive_rng(*keys: int) -> np.random.Generator:
    """Counter-style generator: the stream depends only on the integer keys."""
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def fgn_autocovariance(n: int, h: float, dt: float) -> np.ndarray:
    k = np.arange(n + 1, dtype=np.float64)
    return 0.5 * dt ** (2 * h) * (np.abs(k + 1) ** (2 * h) - 2 * k ** (2 * h) + np.abs(k - 1) ** (2 * h))


@lru_cache(maxsize=32)
def _circulant_sqrt_eigs(n: int, h: float, dt: float):
    gam = fgn_autocovariance(n, h, dt)
    row = np.concatenate([gam[:n], gam[n:n + 1], gam[n - 1:0:-1]])
    eig = np.fft.fft(row).real
    if eig.min() < -1e-10 * eig.max():
        return None
    return np.sqrt(np.clip(eig, 0.0, None) / (2 * n))


@lru_cache(maxsize=32)
def _dense_factor(times_key: tuple, h: float):
    times = np.asarray(times_key)
    cov = fbm_covariance(times[1:, None], times[None, 1:], h)
    return linalg.cholesky(cov + 1e-14 * np.eye(cov.shape[0]) * cov.max(), lower=True)


def _is_uniform(times: np.ndarray) -> bool:
    d = np.diff(times)
    return d.size > 0 and np.allclose(d, d[0], rtol=1e-10, atol=0.0)


def _increments_from_normals(sq, normals):
    # normals: (..., 2, 2n) -> real part of the circulant synthesis
    n = sq.size // 2
    z = normals[..., 0, :] + 1j * normals[..., 1, :]
    return np.fft.fft(sq * z, axis=-1).real[..., :n]


def sample_fbm(times, h, seed: int, *, rng: Optional[np.random.Generator] = None) -> FbmPath:
    """Exact Gaussian sample of fBm on ``times`` (times[0] must be 0).

    Uniform grids use circulant embedding of the increment covariance, with a
    dense Cholesky fallback if the embedding is not non-negative definite;
    non-uniform grids go straight to the dense factorisation.
    """
    h = _hval(h)
    times = np.asarray(times, dtype=np.float64)
    if times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise DomainError("grid must start at 0 and be strictly increasing")
    rng = rng if rng is not None else np.random.default_rng(seed)
    n = times.size - 1
    if _is_uniform(times):
        sq = _circulant_sqrt_eigs(n, h, float(times[1] - times[0]))
        if sq is not None:
            inc = _increments_from_normals(sq, rng.standard_normal((2, 2 * n)))
            values = np.concatenate([[0.0], np.cumsum(inc)])
            return FbmPath(times, values, h, seed, "circulant")
        log.warning("circulant embedding not PSD (n=%d, H=%.3f); using dense factorisation", n, h)
    L = _dense_factor(tuple(times), h)
    values = np.concatenate([[0.0], L @ rng.standard_normal(n)])
    return FbmPath(times, values, h, seed, "dense")


def sample_fbm_increments(n: int, dt: float, h, rng: np.random.Generator, size: Optional[int] = None):
    """n fGn increments on a uniform grid of step dt; ``size`` stacks independent rows."""
    h = _hval(h)
    sq = _circulant_sqrt_eigs(n, h, float(dt))
    if sq is None:
        log.warning("circulant embedding not PSD (n=%d, H=%.3f); using dense factorisation", n, h)
        times = np.arange(n + 1) * dt
        L = _dense_factor(tuple(times), h)
        shape = (n,) if size is None else (size, n)
        vals = rng.standard_normal(shape) @ L.T
        return np.diff(np.concatenate([np.zeros(vals.shape[:-1] + (1,)), vals], axis=-1), axis=-1)
    shape = (2, 2 * n) if size is None else (size, 2, 2 * n)
    return _increments_from_normals(sq, rng.standard_normal(shape))


def iter_fbm_ensemble(times, h, n_paths: int, master_seed: int, chunk: int = 4096) -> Iterator[np.ndarray]:
    """Yield (chunk, len(times)) blocks of paths; sample i is drawn from keys (master_seed, i).

    Results depend only on (master_seed, i), never on chunking.
    """
    h = _hval(h)
    times = np.asarray(times, dtype=np.float64)
    if not _is_uniform(times) or times[0] != 0.0:
        raise DomainError("ensemble sampler needs a uniform grid starting at 0")
    n = times.size - 1
    sq = _circulant_sqrt_eigs(n, h, float(times[1] - times[0]))
    for start in range(0, n_paths, chunk):
        stop = min(start + chunk, n_paths)
        if sq is None:
            block = np.stack([sample_fbm(times, h, 0, rng=derive_rng(master_seed, i)).values
                              for i in range(start, stop)])
        else:
            normals = np.stack([derive_rng(master_seed, i).standard_normal((2, 2 * n))
                                for i in range(start, stop)])
            inc = _increments_from_normals(sq, normals)
            block = np.concatenate([np.zeros((stop - start, 1)), np.cumsum(inc, axis=1)], axis=1)
        yield block


# ---------------------------------------------------------------------------
# Wiener integrals of deterministic integrands
# ---------------------------------------------------------------------------

def _trapz_weights(grid: np.ndarray) -> np.ndarray:
    d = np.diff(grid)
    w = np.zeros_like(grid)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def wiener_integral_batch(phi: SampledFunction, times: np.ndarray, paths: np.ndarray) -> np.ndarray:
    """Pathwise int phi dbeta^H for each row of ``paths`` sampled on ``times``."""
    paths = np.atleast_2d(paths)
    if phi.kind == "step":
        beta = np.stack([np.interp(phi.grid, times, p) for p in paths])
        return np.diff(beta, axis=1) @ phi.values
    n = phi.grid.size
    if times.size < n or not np.allclose(times[:n], phi.grid, rtol=0, atol=1e-14):
        raise DomainError("integrand grid must coincide with the path grid")
    dphi = phi.derivative if phi.derivative is not None else np.gradient(phi.values, phi.grid)
    w = _trapz_weights(phi.grid) * dphi
    return phi.values[-1] * paths[:, n - 1] - paths[:, :n] @ w


def wiener_integral_pathwise(phi: SampledFunction, path: FbmPath) -> float:
    """int_0^t phi dbeta^H on one path.

    C^1 integrands use phi(t) beta(t) - int phi'(s) beta(s) ds; step functions use
    the finite sum of a_i (beta(t_{i+1}) - beta(t_i)).
    """
    return float(wiener_integral_batch(phi, path.times, path.values[None, :])[0])
