"""Fluid nonlinearities on the sine model: deformation tensor, forms a and b, B(u), N(u).

All grid work happens on the midpoint collocation grid of
:mod:`fbm_bipolar.spectral`, sized by the 3/2 rule, so the polynomial
identities (orthogonality, antisymmetry, duality) hold to round-off.

Normalisation used throughout: with u = sum u_k e_k and kappa_k = m^2 + n^2,

    |u|^2 = sum u_k^2,  |grad u|^2 = sum kappa_k u_k^2,  a(u, v) = 1/2 sum kappa_k^2 u_k v_k,

so (A u, u) = 2 a(u, u) coefficient-wise and c1 = c2 = 1/2 against |u|_V = |A^{1/2} u|.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .fbm import DomainError
from .spectral import Collocation, SpectralVelocityField, collocation, mode_eigenvalues, norm_H1

log = logging.getLogger(__name__)

A_FORM_C1 = 0.5
A_FORM_C2 = 0.5


@dataclass(frozen=True)
class FluidParams:
    mu0: float = 2.0
    mu1: float = 1.0
    eps: float = 2.0
    alpha: float = 0.5

    def __post_init__(self):
        if not self.eps > 0:
            raise DomainError("eps must be positive")
        if not self.mu0 > 0:
            raise DomainError("mu0 must be positive")
        if not 0 < self.alpha <= 1:
            raise DomainError("alpha must lie in (0, 1]")
        if self.mu1 != 1.0:
            log.warning("mu1=%g overrides the fixed value 1; A is scaled by mu1", self.mu1)

    def viscosity(self, e_sq):
        """mu(u) = 2 mu0 (eps + |e|^2)^{-alpha/2} from pointwise |e|^2."""
        return 2.0 * self.mu0 * (self.eps + e_sq) ** (-0.5 * self.alpha)

    @property
    def n_bound(self) -> float:
        """mu0 eps^{-alpha/2}: duality bound of N against |.|_{H_0^1} x |.|_{H_0^1}."""
        return self.mu0 * self.eps ** (-0.5 * self.alpha)


@dataclass
class CollocationField:
    """Grid arrays indexed [i(x1), j(x2)] on an N x N midpoint grid."""

    x: np.ndarray
    values: dict

    def __getitem__(self, key):
        return self.values[key]


def _grid(u: SpectralVelocityField, colloc: Collocation | None) -> Collocation:
    return collocation(u.truncation) if colloc is None else colloc


def _strain(colloc: Collocation, u):
    d11, d12, d21, d22 = colloc.gradient(u)
    return d11, 0.5 * (d12 + d21), d22


def deformation_tensor(u: SpectralVelocityField, colloc: Collocation | None = None) -> CollocationField:
    """e_ij = (d_j u_i + d_i u_j) / 2 on the grid; e11 + e22 = 0 by construction."""
    c = _grid(u, colloc)
    e11, e12, e22 = _strain(c, u)
    return CollocationField(c.x, {"e11": e11, "e12": e12, "e22": e22})


def strain_norm_sq(u: SpectralVelocityField, colloc: Collocation | None = None):
    """Pointwise |e(u)|^2 = e_ij e_ij."""
    c = _grid(u, colloc)
    e11, e12, e22 = _strain(c, u)
    return e11 ** 2 + 2.0 * e12 ** 2 + e22 ** 2


def a_form(u: SpectralVelocityField, v: SpectralVelocityField) -> float:
    return 0.5 * float(np.sum(mode_eigenvalues(u.truncation) * u.coeffs * v.coeffs))


def b_trilinear(u, v, w, colloc: Collocation | None = None) -> float:
    """b(u, v, w) = sum_ij int u_i (d_i v_j) w_j dx."""
    c = _grid(u, colloc)
    u1, u2 = c.velocity(u)
    d11, d12, d21, d22 = c.gradient(v)
    w1, w2 = c.velocity(w)
    g = (u1 * d11 + u2 * d12) * w1 + (u1 * d21 + u2 * d22) * w2
    return c.integrate(g)


def convection(u, v, colloc: Collocation | None = None) -> SpectralVelocityField:
    """B(u, v): projection of (u . grad) v, so that <B(u, v), w> = b(u, v, w)."""
    c = _grid(u, colloc)
    u1, u2 = c.velocity(u)
    d11, d12, d21, d22 = c.gradient(v)
    return c.project(u1 * d11 + u2 * d12, u1 * d21 + u2 * d22)


def B_op(u: SpectralVelocityField, colloc: Collocation | None = None) -> SpectralVelocityField:
    return convection(u, u, colloc)


def N_op(u: SpectralVelocityField, params: FluidParams, colloc: Collocation | None = None) -> SpectralVelocityField:
    """Element with <N(u), v> = int mu(u) e_ij(u) e_ij(v) dx.

    Tested against each e_k: e11(e_k) = c nm cos cos, e12(e_k) = c (m^2 - n^2)/2 sin sin.
    """
    c = _grid(u, colloc)
    e11, e12, e22 = _strain(c, u)
    mu = params.viscosity(e11 ** 2 + 2.0 * e12 ** 2 + e22 ** 2)
    t_diag = mu * (e11 - e22)
    t_off = mu * e12
    coef = c.n * c.m * (c.C.T @ t_diag @ c.C) + (c.m ** 2 - c.n ** 2) * (c.S.T @ t_off @ c.S)
    return SpectralVelocityField(c.weight * c.norm_c * coef)


def n_pairing(u, v, params: FluidParams, colloc: Collocation | None = None) -> float:
    """int mu(u) e_ij(u) e_ij(v) dx evaluated directly on the grid."""
    c = _grid(u, colloc)
    eu = _strain(c, u)
    ev = _strain(c, v)
    mu = params.viscosity(eu[0] ** 2 + 2.0 * eu[1] ** 2 + eu[2] ** 2)
    return c.integrate(mu * (eu[0] * ev[0] + 2.0 * eu[1] * ev[1] + eu[2] * ev[2]))


# ---------------------------------------------------------------------------
# empirical Ladyzhenskaya-type constant of b
# ---------------------------------------------------------------------------

def _interp_norm(f: SpectralVelocityField) -> float:
    return np.sqrt(f.norm() * norm_H1(f))


def b_ratio(u, v, w, colloc: Collocation | None = None) -> float:
    """|b(u,v,w)| / (|u|^{1/2}|u|_{H1}^{1/2} |v|_{H1} |w|^{1/2}|w|_{H1}^{1/2})."""
    den = _interp_norm(u) * norm_H1(v) * _interp_norm(w)
    return abs(b_trilinear(u, v, w, colloc)) / den


def _b_gradients(u, v, w, c: Collocation):
    """Riesz representatives of b with respect to u, v and w."""
    u1, u2 = c.velocity(u)
    w1, w2 = c.velocity(w)
    dv = c.gradient(v)
    dw = c.gradient(w)
    # d/du: f_i = d_i v_j w_j
    gu = c.project(dv[0] * w1 + dv[2] * w2, dv[1] * w1 + dv[3] * w2)
    # d/dv: b(u, v, w) = -b(u, w, v)
    gv = -c.project(u1 * dw[0] + u2 * dw[1], u1 * dw[2] + u2 * dw[3])
    gw = c.project(u1 * dv[0] + u2 * dv[1], u1 * dv[2] + u2 * dv[3])
    return gu, gv, gw


def _log_ratio_ascent(u, v, w, c: Collocation, steps: int, lr: float):
    kappa = (c.m ** 2 + c.n ** 2)
    best = b_ratio(u, v, w, c)
    for _ in range(steps):
        b = b_trilinear(u, v, w, c)
        if b == 0.0:
            break
        gu, gv, gw = _b_gradients(u, v, w, c)
        # gradient of log|b| - 1/2 log|.| - 1/2 log|.|_H1 per slot
        nu, hu = u.norm() ** 2, norm_H1(u) ** 2
        nv = norm_H1(v) ** 2
        nw, hw = w.norm() ** 2, norm_H1(w) ** 2
        du = gu.coeffs / b - 0.5 * u.coeffs / nu - 0.5 * kappa * u.coeffs / hu
        dv = gv.coeffs / b - kappa * v.coeffs / nv
        dw = gw.coeffs / b - 0.5 * w.coeffs / nw - 0.5 * kappa * w.coeffs / hw
        un = SpectralVelocityField(u.coeffs + lr * du * np.sqrt(nu))
        vn = SpectralVelocityField(v.coeffs + lr * dv * np.sqrt(nv / kappa.max()))
        wn = SpectralVelocityField(w.coeffs + lr * dw * np.sqrt(nw))
        r = b_ratio(un, vn, wn, c)
        if r > best:
            u, v, w, best = un, vn, wn, r
            lr *= 1.2
        else:
            lr *= 0.5
            if lr < 1e-8:
                break
    return best


@dataclass
class C1Estimate:
    value: float
    samples: int
    truncation: int
    caveat: str = "empirical maximum over sampled triples: a lower estimate of C1"


def estimate_C1(
    n_samples: int = 1000,
    M: int = 8,
    seed: int = 0,
    ascent_starts: int = 8,
    ascent_steps: int = 200,
    return_ratios: bool = False,
):
    """Lower estimate of the constant C1 in |b(u,v,w)| <= C1 |u|^{1/2}|u|_{H1}^{1/2}|v|_{H1}|w|^{1/2}|w|_{H1}^{1/2}.

    Samples ``n_samples`` random triples, then runs a log-ratio ascent from the first
    ``ascent_starts`` of them.  Samples are drawn from a stream keyed by ``seed`` only,
    so a larger ensemble always contains the smaller one.
    """
    if n_samples < 1:
        raise DomainError("need at least one sample")
    c = collocation(M)
    rng = np.random.default_rng(seed)
    ratios = np.empty(n_samples)
    triples = []
    for i in range(n_samples):
        decay = rng.uniform(0.0, 4.0, size=3)
        t = [SpectralVelocityField.random(M, rng, d) for d in decay]
        ratios[i] = b_ratio(*t, c)
        triples.append(t)
    best = float(ratios.max())
    # fixed start indices keep the estimate nondecreasing in n_samples
    for i in range(min(ascent_starts, n_samples)):
        best = max(best, _log_ratio_ascent(*triples[i], c, ascent_steps, 0.05))
    est = C1Estimate(best, n_samples, M)
    return (est, ratios) if return_ratios else est
