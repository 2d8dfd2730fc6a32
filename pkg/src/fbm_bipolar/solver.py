"""Pathwise solver for u = v + z on the sine model.

The v-equation dv/dt + A v + B(v + z) + N(v + z) = 0 is advanced by
exponential Euler with the nonlinearity frozen at the left point:

    v <- E v - ((1 - E) / lam) [B(v + z) + N(v + z)],  E = exp(-lam dt).

The Picard iteration for the mild form u = S(.)u0 + z + J1(u) + J2(u) uses the
same left-point exponential quadrature, so its fixed point is the stepping
solution at matched resolution.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .fbm import DomainError
from .fluid import B_op, FluidParams, N_op
from .spectral import LAMBDA1, SpectralVelocityField, collocation, mode_eigenvalues, mode_kappa
from .stoch_conv import NoiseRealization, convolution_trajectories

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Numerical failure (non-finite state or non-contraction); carries a state dump."""

    def __init__(self, msg: str, dump: Optional[dict] = None):
        super().__init__(msg)
        self.dump = dump or {}


@dataclass
class SolveConfig:
    dt: float = 2 ** -10
    M: int = 8
    tol: float = 1e-12
    max_picard: int = 60
    T_final: float = 1.0
    params: FluidParams = field(default_factory=FluidParams)
    use_B: bool = True
    use_N: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError("dt must be positive")
        if not self.tol > 0:
            raise DomainError("tolerance must be positive")
        if self.M < 1:
            raise DomainError("M must be >= 1")

    @property
    def lam(self) -> np.ndarray:
        return self.params.mu1 * mode_eigenvalues(self.M)


@dataclass
class SolverState:
    t: float
    v: SpectralVelocityField
    z: SpectralVelocityField
    energy: tuple = (0.0, 0.0, 0.0)  # |v|^2, |v|_V^2, running int |v|_V^2 dt


def _norms(c: np.ndarray, lam: np.ndarray):
    return float(np.sum(c * c)), float(np.sum(lam * c * c))


def nonlinear_term(u: np.ndarray, cfg: SolveConfig) -> np.ndarray:
    """Coefficients of B(u) + N(u), honouring the on/off switches."""
    out = np.zeros_like(u)
    if not (cfg.use_B or cfg.use_N):
        return out
    f = SpectralVelocityField(u)
    colloc = collocation(cfg.M)
    if cfg.use_B:
        out += B_op(f, colloc).coeffs
    if cfg.use_N:
        out += N_op(f, cfg.params, colloc).coeffs
    return out


def _weights(lam: np.ndarray, dt: float):
    E = np.exp(-lam * dt)
    W = -np.expm1(-lam * dt) / lam
    return E, W


def step_v_equation(state: SolverState, dt: float, z_next: SpectralVelocityField, cfg: SolveConfig) -> SolverState:
    """One exponential-Euler step of the v-equation; z_next is z at t + dt."""
    if dt > cfg.dt * (1 + 1e-12):
        raise DomainError(f"dt={dt} exceeds the configured maximum {cfg.dt}")
    lam = cfg.lam
    E, W = _weights(lam, dt)
    v = state.v.coeffs
    vn = E * v - W * nonlinear_term(v + state.z.coeffs, cfg)
    if not np.all(np.isfinite(vn)):
        raise SolverError(f"non-finite state at t={state.t + dt}",
                          {"t": state.t, "v": v.tolist(), "z": state.z.coeffs.tolist()})
    n2, nV = _norms(vn, lam)
    _, nV_old = _norms(v, lam)
    running = state.energy[2] + 0.5 * dt * (nV_old + nV)
    return SolverState(state.t + dt, SpectralVelocityField(vn), z_next, (n2, nV, running))


@dataclass
class Trajectory:
    times: np.ndarray
    v: np.ndarray  # (K+1, M, M)
    z: np.ndarray  # (K+1, M, M)
    lam: np.ndarray

    @property
    def u(self) -> np.ndarray:
        return self.v + self.z

    def v_sq(self):
        return np.einsum("kmn,kmn->k", self.v, self.v)

    def v_V_sq(self):
        return np.einsum("mn,kmn->k", self.lam, self.v * self.v)

    def u_sq(self):
        u = self.u
        return np.einsum("kmn,kmn->k", u, u)

    def z_sq(self):
        return np.einsum("kmn,kmn->k", self.z, self.z)

    def z_H1_sq(self):
        return np.einsum("mn,kmn->k", np.sqrt(self.lam), self.z * self.z)

    def int_v_V_sq(self) -> float:
        vv = self.v_V_sq()
        return float(np.sum(0.5 * np.diff(self.times) * (vv[1:] + vv[:-1])))

    def state(self, k: int = -1) -> SolverState:
        return SolverState(float(self.times[k]), SpectralVelocityField(self.v[k]), SpectralVelocityField(self.z[k]))

    def to_csv(self, path, stride: int = 1) -> Path:
        path = Path(path)
        cols = (self.v_sq(), self.v_V_sq(), self.u_sq(), self.z_sq())
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "|v|2", "|v|V2", "|u|2", "|z|2"])
            for k in range(0, self.times.size, stride):
                w.writerow([f"{self.times[k]:.17g}"] + [f"{c[k]:.17g}" for c in cols])
        return path


def integrate_v(v0: np.ndarray, z: np.ndarray, dt: float, cfg: SolveConfig, t0: float = 0.0) -> Trajectory:
    """Step the v-equation along a given z trajectory sampled every dt: z has shape (K+1, M, M)."""
    K = z.shape[0] - 1
    lam = cfg.lam
    E, W = _weights(lam, dt)
    v = np.empty_like(z)
    v[0] = v0
    for k in range(K):
        v[k + 1] = E * v[k] - W * nonlinear_term(v[k] + z[k], cfg)
        if not np.all(np.isfinite(v[k + 1])):
            raise SolverError(f"non-finite state at step {k + 1} (t={t0 + (k + 1) * dt})",
                              {"step": k, "v": v[k].tolist(), "z": z[k].tolist()})
    times = t0 + dt * np.arange(K + 1)
    return Trajectory(times, v, z, lam)


def _stride(noise: NoiseRealization, dt: float) -> int:
    s = int(round(dt / noise.dt))
    if s < 1 or not math.isclose(s * noise.dt, dt, rel_tol=1e-9):
        raise DomainError(f"solver dt={dt} must be a multiple of the noise step {noise.dt}")
    return s


def z_on_grid(noise: Optional[NoiseRealization], M: int, a: float, b: float, dt: float, z0=None) -> np.ndarray:
    """(K+1, M, M) convolution from z0 at a, sampled every dt on [a, b]; zeros if noise is None."""
    K = int(round((b - a) / dt))
    if noise is None:
        out = np.zeros((K + 1, M, M))
        if z0 is not None:
            out[:] = np.exp(-mode_eigenvalues(M) * dt * np.arange(K + 1)[:, None, None]) * z0
        return out
    if noise.truncation != M:
        raise DomainError("noise truncation differs from the solver truncation")
    s = _stride(noise, dt)
    traj = convolution_trajectories(noise, a, a + K * dt, z0)
    return np.moveaxis(traj[..., ::s], -1, 0).copy()


def global_solve(u0: SpectralVelocityField, noise: Optional[NoiseRealization], T_final: float,
                 cfg: Optional[SolveConfig] = None) -> Trajectory:
    """u = v + z on [0, T_final] with z(0) = 0, so v(0) = u0."""
    cfg = cfg or SolveConfig(M=u0.truncation)
    z = z_on_grid(noise, cfg.M, 0.0, T_final, cfg.dt)
    return integrate_v(u0.coeffs, z, cfg.dt, cfg)


# ---------------------------------------------------------------------------
# Picard iteration for the mild form
# ---------------------------------------------------------------------------

@dataclass
class PicardResult:
    times: np.ndarray
    u: np.ndarray
    distances: list
    ratios: list
    iterations: int
    window: float
    shrinks: int


def x_norm(d: np.ndarray, lam: np.ndarray, dt: float) -> float:
    """max_t |d(t)| + (int |d|_V^2 dt)^{1/2} on the stored grid (left-point rule)."""
    sup = float(np.sqrt(np.max(np.einsum("kmn,kmn->k", d, d))))
    integral = float(np.sum(np.einsum("mn,kmn->k", lam, d[:-1] * d[:-1])) * dt)
    return sup + math.sqrt(integral)


def _picard_once(u0, z, dt, cfg: SolveConfig):
    lam = cfg.lam
    E, W = _weights(lam, dt)
    K = z.shape[0] - 1
    free = np.exp(-lam[None] * dt * np.arange(K + 1)[:, None, None]) * u0 + z
    u = free.copy()
    dists, ratios = [], []
    it = 0
    for it in range(1, cfg.max_picard + 1):
        J = np.zeros_like(u)
        for k in range(K):
            J[k + 1] = E * J[k] - W * nonlinear_term(u[k], cfg)
        new = free + J
        d = x_norm(new - u, lam, dt)
        u = new
        if dists and dists[-1] > 1e-12:
            ratios.append(d / dists[-1])
        dists.append(d)
        if d <= cfg.tol:
            break
    return u, dists, ratios, it


def picard_local_solve(u0: SpectralVelocityField, noise: Optional[NoiseRealization], T_window: float,
                       cfg: Optional[SolveConfig] = None, target_ratio: float = 0.5) -> PicardResult:
    """Fixed point of the mild form on [0, T0], shrinking T0 until the contraction ratio is <= target.

    Ratios d_{k+1}/d_k are recorded while d_k > 1e-12; the first one (k = 1) is
    excluded from the contraction test.
    """
    cfg = cfg or SolveConfig(M=u0.truncation)
    T0 = T_window
    shrinks = 0
    while True:
        K = int(round(T0 / cfg.dt))
        if K < 1:
            raise SolverError("Picard iteration does not contract on any window >= dt",
                              {"T_window": T_window, "shrinks": shrinks})
        z = z_on_grid(noise, cfg.M, 0.0, K * cfg.dt, cfg.dt)
        u, dists, ratios, it = _picard_once(u0.coeffs, z, cfg.dt, cfg)
        tail = ratios[1:]
        converged = dists[-1] <= cfg.tol
        if converged and (not tail or max(tail) <= target_ratio):
            times = cfg.dt * np.arange(K + 1)
            return PicardResult(times, u, dists, ratios, it, K * cfg.dt, shrinks)
        T0 = 0.5 * K * cfg.dt
        shrinks += 1
        log.info("Picard window shrunk to %g (ratios %s)", T0, tail[:3])


# ---------------------------------------------------------------------------
# energy inequality with g2
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyConstants:
    C1: float
    C2: float
    r1: float
    c0: float = 1.0
    lambda1: float = LAMBDA1

    @classmethod
    def choose(cls, C1: float, c0: float = 1.0, lambda1: float = LAMBDA1) -> "EnergyConstants":
        """C2 = geometric centre of (c0 C1 beta_D(4) zeta(4), 1/C1); r1 = half the remaining gap.

        The gap condition C1 C2 + r1 <= lambda1^{1/2} / 2 drops the |v|_V^2 term.
        """
        from .special import dirichlet_beta, riemann_zeta

        lo = c0 * C1 * dirichlet_beta(4) * riemann_zeta(4)
        hi = 1.0 / C1
        C2 = math.sqrt(lo * hi) if lo < hi else hi
        r1 = 0.5 * (0.5 * math.sqrt(lambda1) - C1 * C2)
        if r1 <= 0:
            raise DomainError("no admissible r1: C1 C2 >= lambda1^{1/2}/2")
        return cls(C1, C2, r1, c0, lambda1)

    @property
    def c5(self) -> float:
        return self.C1 / self.C2

    @property
    def c6(self) -> float:
        """Inverse of the |v|_V^2 coefficient 1/2 - (C1 C2 + r1)/lambda1^{1/2}."""
        return 1.0 / (0.5 - (self.C1 * self.C2 + self.r1) / math.sqrt(self.lambda1))


def g2(z_sq, z_h1_sq, k: EnergyConstants, params: FluidParams):
    """(C1/C2)|Z|^2|Z|_{H1}^2 + C1 C2 |Z|_{H1}^2 + mu0^2 / (4 r1 eps^alpha) |Z|_{H1}^2."""
    z_sq = np.asarray(z_sq)
    z_h1_sq = np.asarray(z_h1_sq)
    return (k.c5 * z_sq * z_h1_sq + k.C1 * k.C2 * z_h1_sq
            + params.mu0 ** 2 / (4 * k.r1 * params.eps ** params.alpha) * z_h1_sq)


@dataclass
class EnergyReport:
    lhs: np.ndarray
    rhs: np.ndarray
    slack: np.ndarray
    raw_violations: int
    violations: int
    first_violation: Optional[int]
    max_excess: float


def energy_monitor(traj: Trajectory, k: EnergyConstants, params: FluidParams) -> EnergyReport:
    """Check (|v_{j+1}|^2 - |v_j|^2)/dt + (lambda1/2 - c5 |Z_j|_{H1}^2)|v_j|^2 <= g2(Z_j) at every step.

    ``slack`` is |v_{j+1} - v_j|^2 / dt, the quadratic part of the difference
    quotient (O(dt) for a differentiable path).  ``violations`` counts excess
    beyond slack, ``raw_violations`` excess beyond zero.
    """
    dt = np.diff(traj.times)
    v2 = traj.v_sq()
    zs, zh = traj.z_sq(), traj.z_H1_sq()
    coef = 0.5 * k.lambda1 - k.c5 * zh[:-1]
    lhs = (v2[1:] - v2[:-1]) / dt + coef * v2[:-1]
    rhs = g2(zs[:-1], zh[:-1], k, params)
    dv = np.diff(traj.v, axis=0)
    slack = np.einsum("kmn,kmn->k", dv, dv) / dt
    excess = lhs - rhs
    raw = excess > 0
    bad = excess > slack
    first = int(np.argmax(bad)) if bad.any() else None
    return EnergyReport(lhs, rhs, slack, int(raw.sum()), int(bad.sum()), first, float(excess.max()))


def gronwall_envelope(times, coef, g, v0_sq: float) -> np.ndarray:
    """Solution of y' = -coef(t) y + g(t), y(t0) = v0_sq, by exact integrating factor on a fine grid.

    coef and g are sampled on ``times`` and interpolated linearly.
    """
    times = np.asarray(times, dtype=np.float64)
    coef = np.broadcast_to(np.asarray(coef, dtype=np.float64), times.shape)
    g = np.broadcast_to(np.asarray(g, dtype=np.float64), times.shape)
    dt = np.diff(times)
    P = np.concatenate([[0.0], np.cumsum(0.5 * dt * (coef[1:] + coef[:-1]))])
    integrand = np.exp(P) * g
    I = np.concatenate([[0.0], np.cumsum(0.5 * dt * (integrand[1:] + integrand[:-1]))])
    return np.exp(-P) * (v0_sq + I)


@dataclass
class AprioriReport:
    sup_v_sq: float
    sup_bound: float
    int_vV: float
    int_bound: float
    holds: bool


def apriori_check(traj: Trajectory, k: EnergyConstants, params: FluidParams) -> AprioriReport:
    """sup|v|^2 <= (|v0|^2 + int g2) exp(c5 int |Z|_{H1}^2) and
    int |v|_V^2 <= c6 (|v0|^2 + int g2 + c5 int |Z|_{H1}^2 |v|^2)."""
    t = traj.times
    v2 = traj.v_sq()
    zh = traj.z_H1_sq()
    gg = g2(traj.z_sq(), zh, k, params)
    tr = lambda f: float(np.sum(0.5 * np.diff(t) * (f[1:] + f[:-1])))
    sup_bound = (v2[0] + tr(gg)) * math.exp(k.c5 * tr(zh))
    int_bound = k.c6 * (v2[0] + tr(gg) + k.c5 * tr(zh * v2))
    sup_v = float(v2.max())
    iv = traj.int_v_V_sq()
    return AprioriReport(sup_v, sup_bound, iv, int_bound, sup_v <= sup_bound and iv <= int_bound)


def replace_config(cfg: SolveConfig, **kw) -> SolveConfig:
    return replace(cfg, **kw)
