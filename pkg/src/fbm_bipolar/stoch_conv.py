"""Stochastic convolution z(t) = int S(t-s) dB^H(s) on the sine model, mode by mode.

Each mode k carries an independent scalar fBm beta_k.  On a sampled path,
interpolated linearly between grid nodes, the convolution obeys the exact
recursion

    z_{j+1} = E z_j + phi1 (beta_{j+1} - beta_j),  E = exp(-lam dt), phi1 = (1 - E) / (lam dt),

which equals beta(t) - lam int_0^t exp(-lam (t-s)) beta(s) ds for that path.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import integrate, special

from . import kernels
from .fbm import (
    DomainError,
    FbmPath,
    HurstParam,
    SampledFunction,
    _hval,
    derive_rng,
    fgn_autocovariance,
    hurst_constant,
    kernel_KH,
    iter_fbm_ensemble,
    sample_fbm,
    sample_fbm_increments,
    uniform_grid,
)
from .spectral import SpectralVelocityField, mode_eigenvalues, mode_kappa
from .special import dirichlet_beta, lattice_sum, riemann_zeta

log = logging.getLogger(__name__)

BURN_IN_RATE = 20.0


def _phi1(lam, dt):
    """(1 - exp(-lam dt)) / (lam dt), equal to 1 at lam = 0."""
    x = np.asarray(lam, dtype=np.float64) * dt
    out = np.ones_like(x)
    nz = x > 0
    out[nz] = -np.expm1(-x[nz]) / x[nz]
    return out


def filter_coefficients(lam, dt):
    lam = np.asarray(lam, dtype=np.float64)
    return np.exp(-lam * dt), _phi1(lam, dt)


def convolve_increments(increments, lam, dt, z0=None):
    """Run the exact recursion on rows of increments; returns (rows, steps + 1) trajectories."""
    inc = np.atleast_2d(np.asarray(increments, dtype=np.float64))
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), (inc.shape[0],))
    decay, weight = filter_coefficients(lam, dt)
    z0 = np.zeros(inc.shape[0]) if z0 is None else np.broadcast_to(np.asarray(z0, dtype=np.float64), (inc.shape[0],))
    return kernels.exp_filter(inc, decay, weight, np.ascontiguousarray(z0))


# ---------------------------------------------------------------------------
# noise realisation
# ---------------------------------------------------------------------------

@dataclass
class NoiseRealization:
    """Independent scalar fBm paths for every mode (m, n) with 1 <= m, n <= truncation.

    ``values[m-1, n-1]`` is sampled on ``t_start + times``; the logical path is
    re-zeroed at logical time 0, so beta_k(0) = 0 whatever the window.
    """

    values: np.ndarray
    dt: float
    t_start: float
    hurst: float
    truncation: int
    master_seed: int
    meta: dict = field(default_factory=dict)

    @classmethod
    def sample(
        cls,
        M: int,
        h,
        t_end: float,
        master_seed: int,
        points_per_unit: int = 2 ** 10,
        t_start: float = 0.0,
    ) -> "NoiseRealization":
        """Per-mode streams are keyed by (master_seed, m, n), so any sub-lattice is reproducible."""
        h = _hval(h)
        if t_start > 0 or t_end < 0:
            raise DomainError("noise window must contain logical time 0")
        phys = uniform_grid(t_end - t_start, points_per_unit)
        dt = float(phys[1] - phys[0])
        n_steps = phys.size - 1
        if not math.isclose(t_start / dt, round(t_start / dt), abs_tol=1e-9):
            raise DomainError("t_start must be a multiple of the time step")
        values = np.empty((M, M, n_steps + 1))
        for m in range(1, M + 1):
            for n in range(1, M + 1):
                inc = sample_fbm_increments(n_steps, dt, h, derive_rng(master_seed, m, n))
                values[m - 1, n - 1, 0] = 0.0
                np.cumsum(inc, out=values[m - 1, n - 1, 1:])
        return cls(values, dt, float(t_start), h, M, int(master_seed))

    @property
    def n_steps(self) -> int:
        return self.values.shape[-1] - 1

    @property
    def t_end(self) -> float:
        return self.t_start + self.n_steps * self.dt

    def _index(self, t: float) -> int:
        x = (t - self.t_start) / self.dt
        k = int(round(x))
        if abs(x - k) > 1e-7 or k < 0 or k > self.n_steps:
            raise DomainError(f"time {t} is not a grid node inside [{self.t_start}, {self.t_end}]")
        return k

    def covers(self, a: float, b: float) -> bool:
        return self.t_start - 1e-12 <= a <= b <= self.t_end + 1e-12

    def beta(self, t: float) -> np.ndarray:
        """(M, M) array of beta_k(t), re-zeroed at logical 0."""
        return self.values[..., self._index(t)] - self.values[..., self._index(0.0)]

    def mode_path(self, m: int, n: int) -> FbmPath:
        """Path of mode (m, n) on [0, t_end] as an FbmPath."""
        i0 = self._index(0.0)
        v = self.values[m - 1, n - 1, i0:] - self.values[m - 1, n - 1, i0]
        return FbmPath(np.arange(v.size) * self.dt, v, self.hurst, self.master_seed, "circulant")

    def increments(self, a: float, b: float) -> np.ndarray:
        """(M*M, steps) increments over [a, b] in row-major mode order."""
        ia, ib = self._index(a), self._index(b)
        seg = self.values[..., ia:ib + 1].reshape(self.truncation ** 2, -1)
        return np.diff(seg, axis=1)

    def shift(self, s: float) -> "NoiseRealization":
        """theta_s: logical time tau of the result is tau + s of this path."""
        self._index(s)
        return NoiseRealization(self.values, self.dt, self.t_start - s, self.hurst, self.truncation,
                                self.master_seed, dict(self.meta))


@dataclass
class ConvolutionSample:
    t: float
    field: SpectralVelocityField
    truncation: int


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def mode_convolution(path: FbmPath, lam: float, t: float) -> float:
    """beta(t) - lam int_0^t exp(-lam (t-s)) beta(s) ds for the piecewise-linear path."""
    times = np.asarray(path.times)
    if t < times[0] or t > times[-1] + 1e-12:
        raise DomainError(f"t={t} outside the path domain [{times[0]}, {times[-1]}]")
    if t == times[0]:
        return 0.0
    k = int(np.searchsorted(times, t, side="right")) - 1
    k = min(k, times.size - 1)
    z = 0.0
    if k > 0:
        dts = np.diff(times[:k + 1])
        inc = np.diff(path.values[:k + 1])
        if np.allclose(dts, dts[0], rtol=1e-10, atol=0.0):
            z = float(convolve_increments(inc[None, :], lam, float(dts[0]))[0, -1])
        else:
            for d, b in zip(dts, inc):
                e, w = filter_coefficients(np.array([lam]), d)
                z = float(e[0] * z + w[0] * b)
    rest = t - times[k]
    if rest > 1e-15 and k + 1 < times.size:
        slope = (path.values[k + 1] - path.values[k]) / (times[k + 1] - times[k])
        e, w = filter_coefficients(np.array([lam]), rest)
        z = float(e[0] * z + w[0] * slope * rest)
    return z


def convolution_trajectories(noise: NoiseRealization, a: float, b: float, z0: Optional[np.ndarray] = None):
    """Per-mode convolution on [a, b] started from z0 at a; returns (M, M, steps + 1)."""
    M = noise.truncation
    lam = mode_eigenvalues(M).ravel()
    init = None if z0 is None else np.asarray(z0).ravel()
    out = convolve_increments(noise.increments(a, b), lam, noise.dt, init)
    return out.reshape(M, M, -1)


def convolution_field(noise: NoiseRealization, t: float) -> ConvolutionSample:
    """z(t) = int_0^t S(t-s) dB^H(s) over all modes up to the truncation."""
    h = HurstParam(noise.hurst)
    if h.h <= 0.25:
        raise DomainError(
            f"stochastic convolution needs 4H > 1 (H > 1/4); got H={h.h}, 4H={4 * h.h:g}"
        )
    M = noise.truncation
    if t == 0:
        return ConvolutionSample(0.0, SpectralVelocityField.zeros(M), M)
    traj = convolution_trajectories(noise, 0.0, t)
    return ConvolutionSample(t, SpectralVelocityField(traj[..., -1]), M)


# ---------------------------------------------------------------------------
# variance oracles
# ---------------------------------------------------------------------------

def _lower_gamma(a: float, x: float) -> float:
    return float(special.gammainc(a, x) * special.gamma(a))


def conv_variance(lam: float, t: float, h) -> float:
    """Var int_0^t exp(-lam (t-s)) dbeta^H(s) for the continuum fBm.

    Reversing time, W(u) = beta(t) - beta(t-u) is an fBm and the integral is
    exp(-lam t) W(t) + lam int_0^t exp(-lam u) W(u) du; every term below is a
    one-dimensional integral against the covariance.
    """
    h = _hval(h)
    if t < 0 or lam < 0:
        raise DomainError("need t >= 0 and lam >= 0")
    if t == 0:
        return 0.0
    t2h = t ** (2 * h)
    if lam == 0:
        return t2h
    L = lam * t
    eL = math.exp(-L)
    g = lam ** (-2 * h - 1) * _lower_gamma(2 * h + 1, L)
    # J = int_0^t exp(-lam x) (t - x)^{2H} dx
    cut = min(t, 60.0 / lam)
    J, _ = integrate.quad(lambda x: math.exp(-lam * x) * (t - x) ** (2 * h), 0.0, cut,
                          epsabs=0.0, epsrel=1e-12, limit=200)
    one_m = -math.expm1(-L)
    t1 = eL * eL * t2h
    t2 = lam * eL * (t2h * one_m / lam + g - J)
    t3 = lam * lam * (one_m / lam * g - (g - eL * J) / (2 * lam))
    return t1 + t2 + t3


def conv_variance_stationary(lam: float, h) -> float:
    """lim_{t -> inf} conv_variance = Gamma(2H + 1) / (2 lam^{2H})."""
    h = _hval(h)
    return special.gamma(2 * h + 1) / (2.0 * lam ** (2 * h))


def conv_variance_discrete(lam: float, steps: Optional[int], dt: float, h) -> float:
    """Exact variance of the recursion output after ``steps`` steps (None: stationary limit)."""
    h = _hval(h)
    if lam == 0:
        if steps is None:
            raise DomainError("lam = 0 has no stationary limit")
        return (steps * dt) ** (2 * h)
    E = math.exp(-lam * dt)
    w = float(_phi1(np.array([lam]), dt)[0])
    one_m_e2 = -math.expm1(-2 * lam * dt)
    d_max = int(min(steps if steps is not None else 10 ** 9, math.ceil(42.0 / (lam * dt)) + 2))
    gam = fgn_autocovariance(d_max, h, dt)[:d_max]
    d = np.arange(d_max, dtype=np.float64)
    Ed = np.exp(-lam * dt * d)
    if steps is not None:
        Ed = Ed * -np.expm1(-2 * lam * dt * (steps - d))
    s = gam[0] * Ed[0] + 2.0 * np.sum(gam[1:] * Ed[1:])
    return w * w * s / one_m_e2


# ---------------------------------------------------------------------------
# weighted singular integral and the undamped divergence witness
# ---------------------------------------------------------------------------

def _g_series(x: np.ndarray, a: float, log_shift: np.ndarray) -> np.ndarray:
    """exp(-log_shift) * sum_{k>=1} x^{k+a} / (k! (k + a)), summed in log space.

    This is int_0^x (e^y - 1) y^{a-1} dy, valid for a > -1.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    out = np.zeros_like(x)
    pos = x > 0
    if not np.any(pos):
        return out
    xp = x[pos]
    k_max = int(np.max(xp) + 12.0 * np.sqrt(np.max(xp)) + 40)
    k = np.arange(1, k_max + 1, dtype=np.float64)[:, None]
    logt = (k + a) * np.log(xp)[None, :] - special.gammaln(k + 1) - np.log(k + a) - log_shift[pos][None, :]
    out[pos] = np.sum(np.exp(logt), axis=0)
    return out


def lemma2_inner(h, x) -> np.ndarray:
    """int_0^x (e^y - 1) y^{H - 3/2} dy."""
    a = _hval(h) - 0.5
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    return _g_series(x, a, np.zeros_like(x))


def lemma2_inner_by_parts(h) -> float:
    """Inner integral over (0, 1] from two integrations by parts (independent oracle).

    With a = H - 1/2: (e - 1)/a - (e - int_0^1 e^y y^{a+1} dy) / (a (a + 1)).
    """
    a = _hval(h) - 0.5
    rest, _ = integrate.quad(lambda y: math.exp(y) * y ** (a + 1), 0.0, 1.0, epsabs=0.0, epsrel=1e-13)
    return (math.e - 1) / a - (math.e - rest) / (a * (a + 1))


def _lemma2_integrand(x: np.ndarray, a: float) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    g = _g_series(x, a, x)  # e^{-x} G(x)
    return g * g


def _gauss_panels(f, edges: np.ndarray, order: int = 40) -> np.ndarray:
    """Per-panel Gauss-Legendre integrals of a vectorised f."""
    xg, wg = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    nodes = mid + half * xg[None, :]
    vals = f(nodes.ravel()).reshape(nodes.shape)
    return np.sum(vals * wg[None, :], axis=1) * half[:, 0]


def _panel_edges(upper: float) -> np.ndarray:
    # geometric panels near 0 (integrand ~ x^{2H+1}), unit panels beyond
    small = np.geomspace(1e-12, 1.0, 25)
    if upper <= 1.0:
        e = np.concatenate([[0.0], small[small < upper], [upper]])
        return np.unique(e)
    big = np.arange(2.0, math.floor(upper) + 1.0)
    e = np.concatenate([[0.0], small, big[big < upper], [upper]])
    return np.unique(e)


def lemma2_scan(h, lambda_uppers: Sequence[float]) -> np.ndarray:
    """lemma2_integral at each upper limit, from one cumulative panel sweep."""
    a = _hval(h) - 0.5
    ups = np.asarray(lambda_uppers, dtype=np.float64)
    if np.any(ups <= 0):
        raise DomainError("lambda_upper must be positive")
    edges = np.unique(np.concatenate([_panel_edges(float(ups.max())), ups]))
    cum = np.concatenate([[0.0], np.cumsum(_gauss_panels(lambda x: _lemma2_integrand(x, a), edges))])
    return cum[np.searchsorted(edges, ups)]


def lemma2_integral(h, lambda_upper: float) -> float:
    """int_0^Lambda e^{-2x} (int_0^x (e^y - 1) y^{H - 3/2} dy)^2 dx."""
    return float(lemma2_scan(h, [lambda_upper])[0])


def ttv_divergence_witness(a: float, lambda_list: Iterable[float]) -> np.ndarray:
    """int_0^Lambda (int_0^x (e^y - 1) y^{a - 1} dy)^2 dx without the e^{-2x} damping.

    The integrand grows like e^{2x} x^{2a-2}, so log(value) grows with slope ~2.
    """
    if not -1.0 < a < 1.0:
        raise DomainError("exponent a must lie in (-1, 1)")
    lams = np.asarray(list(lambda_list), dtype=np.float64)
    edges = np.unique(np.concatenate([_panel_edges(float(lams.max())), lams]))

    def f(x):
        g = _g_series(x, a, np.zeros_like(np.atleast_1d(x)))
        return g * g

    cum = np.concatenate([[0.0], np.cumsum(_gauss_panels(f, edges))])
    return cum[np.searchsorted(edges, lams)]


def log_slope(lams, values) -> float:
    """Least-squares slope of log(values) against lams."""
    return float(np.polyfit(np.asarray(lams, dtype=np.float64), np.log(values), 1)[0])


# ---------------------------------------------------------------------------
# I1 / I2 diagnostics
# ---------------------------------------------------------------------------

def i1_term(lam: float, t: float, h) -> float:
    """2 int_0^t exp(-2 lam (t-s)) K(t, s)^2 ds."""
    h = _hval(h)

    def f(u):  # u = t - s
        s = t - u
        if s <= 0 or u <= 0:
            return 0.0
        return math.exp(-2 * lam * u) * float(kernel_KH(t, s, h)) ** 2

    if lam > 0 and 40.0 / lam < 0.5 * t:
        # weight below e^{-80} past u = 40/lam; what is left is the u^{2H-1} edge at u = 0
        def g(u):
            u = max(u, 1e-13 * t)
            return f(u) / u ** (2 * h - 1)

        val, _ = integrate.quad(g, 0.0, 40.0 / lam, weight="alg", wvar=(2 * h - 1, 0.0),
                                epsabs=0.0, epsrel=1e-9, limit=400)
        return 2.0 * val
    pts = [p for p in (0.5 / lam, 5.0 / lam, 0.5 * t) if 0 < p < t] if lam > 0 else [0.5 * t]
    val, _ = integrate.quad(f, 0.0, t, points=sorted(set(pts)), epsabs=0.0, epsrel=1e-9, limit=400)
    return 2.0 * val


def _i2_inner(lam: float, t: float, s: float, h: float) -> float:
    """int_s^t (exp(-lam (t-r)) - exp(-lam (t-s))) dK/dr(r, s) dr."""
    c = hurst_constant(h)
    base = math.exp(-lam * (t - s))

    def f(r):  # divided difference times (r/s)^{H-1/2}; weight (r-s)^{H-1/2}
        d = r - s
        if d <= 0:
            dd = base * lam
        elif lam * d < 1.0:
            dd = base * math.expm1(lam * d) / d
        else:
            dd = (math.exp(-lam * (t - r)) - base) / d
        return dd * (r / s) ** (h - 0.5)

    val, _ = integrate.quad(f, s, t, weight="alg", wvar=(h - 0.5, 0.0), epsabs=0.0, epsrel=1e-9, limit=200)
    return c * (h - 0.5) * val


def i2_term(lam: float, t: float, h) -> float:
    """2 int_0^t (int_s^t (S(t-r) - S(t-s)) dK/dr(r, s) dr)^2 ds for one mode."""
    h = _hval(h)

    def f(u):
        s = t - u
        if s <= 0 or u <= 0:
            return 0.0
        return _i2_inner(lam, t, s, h) ** 2

    pts = [p for p in (1.0 / lam, 10.0 / lam, 0.5 * t) if 0 < p < t] if lam > 0 else [0.5 * t]
    val, _ = integrate.quad(f, 0.0, t, points=sorted(set(pts)), epsabs=0.0, epsrel=1e-7, limit=400)
    return 2.0 * val


@dataclass
class I1I2Report:
    hurst: float
    t: float
    truncation: int
    kappas: np.ndarray
    i1: np.ndarray
    i2: np.ndarray
    i1_partial: np.ndarray
    i2_partial: np.ndarray
    constant_fit: float
    bound: float
    bound_holds: bool

    def rows(self):
        return [
            (M, float(self.i1_partial[M - 1] + self.i2_partial[M - 1]), self.bound)
            for M in range(1, self.truncation + 1)
        ]


def _distinct_kappa_table(M: int):
    """Unique m^2 + n^2 over the lattice, with an index map back to (M, M)."""
    kap = mode_kappa(M)
    uniq, inv = np.unique(kap, return_inverse=True)
    return uniq, inv.reshape(M, M)


def i1_i2_diagnostics(h, t: float = 1.0, M_max: int = 8) -> I1I2Report:
    """Per-mode I1, I2 quadratures, square-lattice partial sums and the fitted beta/zeta bound.

    The unspecified constant C is fitted on mode (1, 1): C = (I1 + I2)_{11} lam_{11}^{2H};
    the bound is C * 2 beta_D(4H) zeta(4H).
    """
    hp = HurstParam(_hval(h))
    hp.require_rough_regime()
    hv = hp.h
    uniq, idx = _distinct_kappa_table(M_max)
    i1u = np.array([i1_term(k * k, t, hv) for k in uniq])
    i2u = np.array([i2_term(k * k, t, hv) for k in uniq])
    i1 = i1u[idx]
    i2 = i2u[idx]
    i1_part = np.array([i1[:M, :M].sum() for M in range(1, M_max + 1)])
    i2_part = np.array([i2[:M, :M].sum() for M in range(1, M_max + 1)])
    lam11 = 4.0
    C = (i1[0, 0] + i2[0, 0]) * lam11 ** (2 * hv)
    bound = C * 2.0 * dirichlet_beta(4 * hv) * riemann_zeta(4 * hv)
    holds = bool(np.all(i1_part + i2_part <= bound))
    return I1I2Report(hv, t, M_max, uniq.astype(float), i1, i2, i1_part, i2_part, C, bound, holds)


def variance_partial_sums(h, t: float, Ms: Sequence[int]) -> np.ndarray:
    """E|z(t)|^2 summed over the M x M square for each M, from the continuum per-mode oracle."""
    hv = _hval(h)
    M_top = int(max(Ms))
    uniq, idx = _distinct_kappa_table(M_top)
    var_u = np.array([conv_variance(float(k * k), t, hv) for k in uniq])
    var = var_u[idx]
    return np.array([var[:M, :M].sum() for M in Ms])


# ---------------------------------------------------------------------------
# z = beta - lam Y identity
# ---------------------------------------------------------------------------

def _y_quadrature(path_t, path_v, lam: float, t: float, refine: int, lam_step: float = 2e-3) -> float:
    """Trapezoid value of int_0^t exp(-lam (t-s)) beta(s) ds on a sub-grid of the path grid.

    Each path cell is split into r = ceil(lam dt / lam_step) * refine pieces, so the
    sub-grid is node-aligned (beta is linear on every piece) and lam * step <= lam_step.
    Only the window where the weight exceeds exp(-40) is integrated.
    """
    dt = path_t[1] - path_t[0]
    r = max(1, int(math.ceil(lam * dt / lam_step))) * int(refine)
    k_lo = 0 if lam == 0 else max(0, int(math.floor((t - 40.0 / lam) / dt)))
    k_hi = int(round(t / dt))
    s = np.linspace(path_t[k_lo], path_t[k_hi], (k_hi - k_lo) * r + 1)
    f = np.exp(-lam * (t - s)) * np.interp(s, path_t, path_v)
    return float(integrate.trapezoid(f, s))


@dataclass
class YIdentityReport:
    t: float
    refine: int
    residuals: np.ndarray
    max_residual: float
    worst_mode: tuple


def y_identity_check(noise: NoiseRealization, t: float, refine: int = 1, lambdas=None) -> YIdentityReport:
    """Residual |z_k(t) - (beta_k(t) - lam_k Y_k(t))| per mode.

    ``refine`` multiplies the Y quadrature resolution with the path held fixed
    (the path grid is the noise grid; refinement acts on the quadrature sub-grid);
    z comes from the exact recursion, so the residual is pure quadrature error.
    ``lambdas`` overrides the eigenvalues (for synthetic checks such as lam = 0).
    """
    if t <= 0:
        raise DomainError("y_identity_check needs t > 0")
    M = noise.truncation
    lam = mode_eigenvalues(M) if lambdas is None else np.broadcast_to(np.asarray(lambdas, float), (M, M))
    z = convolve_increments(noise.increments(0.0, t), lam.ravel(), noise.dt).reshape(M, M, -1)[..., -1]
    res = np.zeros((M, M))
    for m in range(1, M + 1):
        for n in range(1, M + 1):
            p = noise.mode_path(m, n)
            k = int(round(t / noise.dt))
            pt, pv = p.times[:k + 1], p.values[:k + 1]
            L = float(lam[m - 1, n - 1])
            Y = _y_quadrature(pt, pv, L, t, refine)
            res[m - 1, n - 1] = abs(z[m - 1, n - 1] - (pv[-1] - L * Y))
    worst = np.unravel_index(np.argmax(res), res.shape)
    return YIdentityReport(t, refine, res, float(res.max()), (int(worst[0]) + 1, int(worst[1]) + 1))


# ---------------------------------------------------------------------------
# stationary fractional O-U process
# ---------------------------------------------------------------------------

@dataclass
class FouSample:
    field: SpectralVelocityField
    t: float
    t_burn: float
    bias_bound: np.ndarray


def fou_sample(noise: NoiseRealization, t: float, t_burn: float) -> FouSample:
    """Z(t) = int_{t - T_burn}^t S(t-r) dB^H(r): the stationary process truncated at t - T_burn.

    ``bias_bound`` is exp(-lam T_burn) times the stationary standard deviation per mode.
    """
    if t_burn <= 0:
        raise DomainError("T_burn must be positive")
    a = t - t_burn
    if not noise.covers(a, t):
        raise DomainError(f"noise window [{noise.t_start}, {noise.t_end}] does not cover [{a}, {t}]")
    M = noise.truncation
    lam = mode_eigenvalues(M)
    traj = convolution_trajectories(noise, a, t)
    bias = np.exp(-lam * t_burn) * np.sqrt(conv_variance_stationary_grid(M, noise.hurst))
    if float(lam.min()) * t_burn < BURN_IN_RATE:
        log.warning("lam1 * T_burn = %.3g < %g: burn-in bias may exceed tolerances", lam.min() * t_burn, BURN_IN_RATE)
    return FouSample(SpectralVelocityField(traj[..., -1]), t, t_burn, bias)


def conv_variance_stationary_grid(M: int, h) -> np.ndarray:
    return conv_variance_stationary(mode_eigenvalues(M), _hval(h))


def fou_ensemble(
    lam: float,
    h,
    dt: float,
    n_samples: int,
    master_seed: int,
    t_burn: float,
    times: Sequence[float] = (0.0,),
    chunk: int = 2048,
) -> np.ndarray:
    """(n_samples, len(times)) stationary O-U samples of one mode, burn-in from -t_burn.

    Sample i uses the fBm stream keyed by (master_seed, i).
    """
    times = np.asarray(times, dtype=np.float64)
    t_last = float(times.max())
    grid = uniform_grid(t_burn + t_last, int(round(1.0 / dt)))
    idx = np.rint((times + t_burn) / dt).astype(int)
    out = np.empty((n_samples, times.size))
    row = 0
    for block in iter_fbm_ensemble(grid, h, n_samples, master_seed, chunk):
        traj = convolve_increments(np.diff(block, axis=1), np.full(block.shape[0], lam), dt)
        out[row:row + block.shape[0]] = traj[:, idx]
        row += block.shape[0]
    return out


# ---------------------------------------------------------------------------
# time averages
# ---------------------------------------------------------------------------

def birkhoff_average(values, times, horizon: float) -> float:
    """(1 / n) int_0^n f(t) dt by the trapezoid rule on a uniform trajectory grid."""
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if times[0] != 0.0 and not math.isclose(times[0], 0.0, abs_tol=1e-12):
        raise DomainError("trajectory must start at t = 0")
    d = np.diff(times)
    if d.size == 0 or not np.allclose(d, d[0], rtol=1e-9, atol=0):
        raise DomainError("trajectory grid must be uniform")
    k = int(round(horizon / d[0]))
    if k > times.size - 1 or k < 1:
        raise DomainError("horizon exceeds the trajectory")
    return float(integrate.trapezoid(values[:k + 1], times[:k + 1]) / (k * d[0]))


def h1_norm_sq_series(traj: np.ndarray, M: int) -> np.ndarray:
    """|Z(t)|^2_{H_0^1} = sum kappa_k Z_k(t)^2 along a (M, M, steps) trajectory."""
    return np.einsum("mn,mnk->k", mode_kappa(M), traj * traj)


def lattice_partial_sums(s: float, Ms: Sequence[int]) -> np.ndarray:
    return np.array([lattice_sum(s, int(M)) for M in Ms])
