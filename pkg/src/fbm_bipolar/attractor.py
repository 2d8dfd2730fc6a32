"""Random dynamical system experiments: cocycle, pullback attraction, absorbing radii, ergodic limits."""
from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .fbm import DomainError, _hval
from .fluid import FluidParams
from .solver import EnergyConstants, SolveConfig, Trajectory, g2, integrate_v
from .spectral import LAMBDA1, SpectralVelocityField, mode_eigenvalues, mode_kappa
from .special import dirichlet_beta, lattice_sum, riemann_zeta
from .stoch_conv import (
    BURN_IN_RATE,
    NoiseRealization,
    birkhoff_average,
    conv_variance_discrete,
    conv_variance_stationary,
    convolution_trajectories,
    fou_ensemble,
    h1_norm_sq_series,
)

log = logging.getLogger(__name__)


def beta_zeta_4() -> float:
    return dirichlet_beta(4.0) * riemann_zeta(4.0)


# ---------------------------------------------------------------------------
# stationary Z along the noise window
# ---------------------------------------------------------------------------

def stationary_z(noise: NoiseRealization, a: float, b: float, dt: float) -> np.ndarray:
    """Z(theta_t omega) for t in [a, b] every dt, shape (K+1, M, M).

    Z is the convolution started from zero at the noise window start, so every
    caller sees the same samples; [window start, a] must span the burn-in.
    """
    burn = BURN_IN_RATE / LAMBDA1
    if a - noise.t_start < burn - 1e-12:
        raise DomainError(f"noise window starts at {noise.t_start}; need burn-in {burn} before t={a}")
    if not noise.covers(a, b):
        raise DomainError(f"noise window [{noise.t_start}, {noise.t_end}] does not cover [{a}, {b}]")
    s = int(round(dt / noise.dt))
    if s < 1 or not math.isclose(s * noise.dt, dt, rel_tol=1e-9):
        raise DomainError("dt must be a multiple of the noise step")
    traj = convolution_trajectories(noise, noise.t_start, b)
    i0 = int(round((a - noise.t_start) / noise.dt))
    return np.moveaxis(traj[..., i0::s], -1, 0).copy()


def cocycle_evaluate(t: float, noise: NoiseRealization, u0: SpectralVelocityField,
                     cfg: Optional[SolveConfig] = None, return_traj: bool = False):
    """phi(t, omega, u0) = v(t; 0, u0 - Z(omega)) + Z(theta_t omega)."""
    cfg = cfg or SolveConfig(M=u0.truncation)
    if t < 0:
        raise DomainError("cocycle time must be >= 0")
    if t == 0:
        out = u0.copy()
        return (out, None) if return_traj else out
    Z = stationary_z(noise, 0.0, t, cfg.dt)
    traj = integrate_v(u0.coeffs - Z[0], Z, cfg.dt, cfg)
    out = SpectralVelocityField(traj.u[-1])
    return (out, traj) if return_traj else out


# ---------------------------------------------------------------------------
# condition check
# ---------------------------------------------------------------------------

@dataclass
class ConditionVerdict:
    c0: float
    C1: float
    lhs: float
    threshold: float
    passed: bool
    margin: float
    c2_window: tuple
    c2_window_nonempty: bool


def condition_check(c0: float, C1: float) -> ConditionVerdict:
    """c0 C1^2 < 1 / (beta_D(4) zeta(4)), and the C2 window (c0 C1 beta_D(4) zeta(4), 1/C1)."""
    bz = beta_zeta_4()
    thr = 1.0 / bz
    lhs = c0 * C1 * C1
    window = (c0 * C1 * bz, 1.0 / C1 if C1 > 0 else math.inf)
    return ConditionVerdict(c0, C1, lhs, thr, lhs < thr, thr - lhs, window, window[0] < window[1])


def condition_threshold_C1(c0: float) -> float:
    return math.sqrt(1.0 / (c0 * beta_zeta_4()))


# ---------------------------------------------------------------------------
# absorbing radii
# ---------------------------------------------------------------------------

def default_r2(k: EnergyConstants, mean_z_h1: float) -> float:
    """Half the margin in (C1/C2) E|Z|_{H1}^2 < 2 - r2."""
    gap = 2.0 - k.c5 * mean_z_h1
    if gap <= 0:
        raise DomainError("no admissible r2: (C1/C2) E|Z|^2 >= 2")
    return 0.5 * gap


@dataclass
class Radii:
    rho_H: float
    rho_1: float
    T_w: float
    r2: float
    tail_bound: float
    g2_integral: float
    sup_z_sq: float


def absorbing_radius_estimate(noise: NoiseRealization, r2: float, k: EnergyConstants,
                              params: FluidParams, T_w: float = 10.0, dt: float = 2 ** -10) -> Radii:
    """rho_H = 4 int_{-T_w}^0 g2(s) e^{(1+s) r2} ds + 2 sup_{[-1,0]} |Z|^2, and rho_1 = max(C, C~).

    ``tail_bound`` assumes g2 on (-inf, -T_w) stays below its window maximum:
    4 max g2 e^{(1 - T_w) r2} / r2.
    """
    if r2 <= 0:
        raise DomainError("r2 must be positive")
    Z = stationary_z(noise, -T_w, 0.0, dt)
    M = Z.shape[1]
    lam = mode_eigenvalues(M)
    s = -T_w + dt * np.arange(Z.shape[0])
    z_sq = np.einsum("kmn,kmn->k", Z, Z)
    z_h1 = np.einsum("mn,kmn->k", np.sqrt(lam), Z * Z)
    z_V = np.einsum("mn,kmn->k", lam, Z * Z)
    g = g2(z_sq, z_h1, k, params)
    tr = lambda f, sel=slice(None): float(np.trapezoid(f[sel], s[sel]))
    gint = tr(g * np.exp((1.0 + s) * r2))
    last = s >= -1.0 - 1e-12
    sup_z = float(z_sq[last].max())
    rho_H = 4.0 * gint + 2.0 * sup_z
    g_last = tr(g, last)
    z1_last = tr(z_h1, last)
    C = k.c6 * (g_last + k.c5 * rho_H * z1_last + 2.0 * gint)
    Ct = 2.0 * k.c6 * (g_last + k.c5 * rho_H * z1_last + 2.0 * tr(z_V, last))
    tail = 4.0 * float(g.max()) * math.exp((1.0 - T_w) * r2) / r2
    return Radii(rho_H, max(C, Ct), T_w, r2, tail, gint, sup_z)


# ---------------------------------------------------------------------------
# pullback
# ---------------------------------------------------------------------------

@dataclass
class PullbackExperiment:
    t0_list: Sequence[float]
    initial_set: Sequence[SpectralVelocityField]
    noise: Optional[NoiseRealization]
    cfg: SolveConfig = field(default_factory=SolveConfig)
    radii: Optional[Radii] = None

    def __post_init__(self):
        t0 = list(self.t0_list)
        if any(x >= 0 for x in t0) or any(b >= a for a, b in zip(t0, t0[1:])):
            raise DomainError("t0_list must be negative and strictly decreasing")


@dataclass
class PullbackReport:
    t0_list: list
    diameters: list
    distances: list
    monotone: bool
    max_u_sq_last_unit: list
    rho_H: Optional[float]
    absorbed: Optional[bool]
    condition: Optional[dict] = None


def _z_for(exp: PullbackExperiment, t0: float) -> np.ndarray:
    M = exp.cfg.M
    K = int(round(-t0 / exp.cfg.dt))
    if exp.noise is None:
        return np.zeros((K + 1, M, M))
    return stationary_z(exp.noise, t0, 0.0, exp.cfg.dt)


def pullback_run(exp: PullbackExperiment, condition: Optional[ConditionVerdict] = None) -> PullbackReport:
    """Distances at t = 0 between trajectories started at each t0 from every initial condition."""
    if condition is not None and not condition.passed:
        log.warning("condition_check fails (c0 C1^2 = %.4g); running anyway", condition.lhs)
    diam, dists, max_last = [], [], []
    for t0 in exp.t0_list:
        Z = _z_for(exp, t0)
        finals = []
        worst = 0.0
        for u0 in exp.initial_set:
            tr = integrate_v(u0.coeffs - Z[0], Z, exp.cfg.dt, exp.cfg, t0=t0)
            finals.append(tr.u[-1])
            sel = tr.times >= -1.0 - 1e-12
            worst = max(worst, float(tr.u_sq()[sel].max()))
        pair = {}
        for (i, a), (j, b) in itertools.combinations(enumerate(finals), 2):
            pair[f"{i}-{j}"] = float(np.linalg.norm(a - b))
        dists.append(pair)
        diam.append(max(pair.values()) if pair else 0.0)
        max_last.append(worst)
    monotone = all(b < a for a, b in zip(diam, diam[1:]))
    rho = exp.radii.rho_H if exp.radii is not None else None
    absorbed = None if rho is None else all(m <= rho for m in max_last)
    return PullbackReport(list(exp.t0_list), diam, dists, monotone, max_last, rho, absorbed,
                          None if condition is None else asdict(condition))


def linearized_decay_rate(params: FluidParams, lambda1: float = LAMBDA1, kappa1: float = 2.0) -> float:
    """Decay rate of small differences in mode (1,1): lambda1 + mu0 eps^{-alpha/2} kappa1."""
    return lambda1 + params.n_bound * kappa1


def deepest_t0(r2: float, u0_sq_max: float, target: float = 1e-8) -> float:
    """Most negative t0 needed for e^{r2 (1 + t0)} |u0|^2 < target."""
    return -1.0 - math.log(max(u0_sq_max, 1e-300) / target) / r2


# ---------------------------------------------------------------------------
# ergodic limit
# ---------------------------------------------------------------------------

@dataclass
class ErgodicReport:
    horizons: list
    time_averages: list
    ensemble_mean: float
    ensemble_se: float
    discrete_oracle: float
    continuum_oracle: float
    displayed_bound: float
    lattice_partial_sums: dict
    discrepancy_flag: bool
    rel_diff_at_max_horizon: float
    converging: bool
    notes: list = field(default_factory=list)


def ensemble_h1_mean(M: int, h, dt: float, n_samples: int, master_seed: int):
    """Mean and standard error of |Z|_{H1}^2 over n_samples independent stationary draws.

    Mode (m, n) uses burn-in 20/lam at step dt and its own seed (master_seed, m, n).
    """
    hv = _hval(h)
    kap = mode_kappa(M)
    lam = mode_eigenvalues(M)
    total = np.zeros(n_samples)
    for m in range(1, M + 1):
        for n in range(1, M + 1):
            L = float(lam[m - 1, n - 1])
            steps = max(2, int(math.ceil(BURN_IN_RATE / L / dt)))
            seed = int(np.random.SeedSequence([master_seed, m, n]).generate_state(1)[0])
            x = fou_ensemble(L, hv, dt, n_samples, seed, steps * dt)[:, 0]
            total += kap[m - 1, n - 1] * x * x
    return float(total.mean()), float(total.std(ddof=1) / math.sqrt(n_samples))


def ergodic_limit_study(noise: NoiseRealization, horizons: Sequence[float], n_ensemble: int = 10_000,
                        ensemble_seed: int = 1, c0: float = 1.0,
                        lattice_Ms: Sequence[int] = (10, 100, 1000)) -> ErgodicReport:
    """Birkhoff averages of |Z(theta_t omega)|_{H1}^2 against an independent ensemble mean."""
    hs = list(horizons)
    if any(b <= a for a, b in zip(hs, hs[1:])):
        raise DomainError("horizons must increase")
    M = noise.truncation
    dt = noise.dt
    Z = stationary_z(noise, 0.0, hs[-1], dt)
    series = h1_norm_sq_series(np.moveaxis(Z, 0, -1), M)
    times = dt * np.arange(series.size)
    avgs = [birkhoff_average(series, times, H) for H in hs]
    mean, se = ensemble_h1_mean(M, noise.hurst, dt, n_ensemble, ensemble_seed)
    kap = mode_kappa(M)
    lam = mode_eigenvalues(M)
    disc = float(sum(kap[i, j] * conv_variance_discrete(float(lam[i, j]), None, dt, noise.hurst)
                     for i in range(M) for j in range(M)))
    cont = float(np.sum(kap * conv_variance_stationary(lam, noise.hurst)))
    display = 2.0 * c0 * beta_zeta_4()
    partial = {int(m): lattice_sum(1.0, int(m)) for m in lattice_Ms}
    flag = any(v > display for v in partial.values())
    notes = [
        "lattice sums are sum (m^2+n^2)^{-1} = sum lambda^{-1/2}, which diverge logarithmically",
        "c0 is configured, not derived",
    ]
    if flag:
        notes.append("partial lattice sums exceed the displayed closed form 2 c0 beta_D(4) zeta(4)")
    conv = len(avgs) < 3 or abs(avgs[-1] - avgs[-2]) < abs(avgs[-2] - avgs[-3])
    return ErgodicReport(hs, avgs, mean, se, disc, cont, display, partial, flag,
                         abs(avgs[-1] - mean) / mean, conv, notes)


def write_report(obj, path) -> Path:
    path = Path(path)

    def default(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o))

    payload = asdict(obj) if hasattr(obj, "__dataclass_fields__") else obj
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=default))
    return path
