"""Stream-function sine model of the square [0, pi]^2.

A velocity field is a coefficient array ``coeffs[m-1, n-1]`` on the basis

    e_mn = 2 / (pi sqrt(m^2 + n^2)) * grad_perp(sin(m x1) sin(n x2)),

which is divergence free with zero normal flow.  The operator A acts
diagonally with eigenvalue (m^2 + n^2)^2 (the proven lower bound for the true
bipolar Stokes operator, taken with equality).  Grid work uses the midpoint
collocation grid x_j = (j + 1/2) pi / N, whose quadrature integrates cosine
polynomials of degree < 2N exactly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .fbm import DomainError

SURROGATE_NOTE = (
    "surrogate diagonalisation: stream-function sine basis with lambda_mn = (m^2+n^2)^2; "
    "incompressible with zero normal flow but not full no-slip"
)
LAMBDA1 = 4.0


@dataclass
class SpectralVelocityField:
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.ndim != 2 or self.coeffs.shape[0] != self.coeffs.shape[1]:
            raise DomainError("coefficient array must be M x M")

    @property
    def truncation(self) -> int:
        return self.coeffs.shape[0]

    @classmethod
    def zeros(cls, M: int) -> "SpectralVelocityField":
        return cls(np.zeros((M, M)))

    @classmethod
    def single_mode(cls, M: int, m: int, n: int, amplitude: float = 1.0) -> "SpectralVelocityField":
        c = np.zeros((M, M))
        c[m - 1, n - 1] = amplitude
        return cls(c)

    @classmethod
    def random(cls, M: int, rng: np.random.Generator, decay: float = 1.0, norm: float | None = None):
        """Gaussian coefficients with variance (m^2 + n^2)^{-decay}."""
        c = rng.standard_normal((M, M)) * mode_kappa(M) ** (-0.5 * decay)
        f = cls(c)
        if norm is not None:
            f = f * (norm / f.norm())
        return f

    def copy(self) -> "SpectralVelocityField":
        return SpectralVelocityField(self.coeffs.copy())

    def __add__(self, other):
        return SpectralVelocityField(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return SpectralVelocityField(self.coeffs - other.coeffs)

    def __mul__(self, a: float):
        return SpectralVelocityField(self.coeffs * a)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralVelocityField(-self.coeffs)

    def dot(self, other) -> float:
        """L^2 inner product (Parseval)."""
        return float(np.sum(self.coeffs * other.coeffs))

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.coeffs ** 2)))

    def to_csv(self, path) -> Path:
        path = Path(path)
        M = self.truncation
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m", "n", "amplitude"])
            for m in range(1, M + 1):
                for n in range(1, M + 1):
                    w.writerow([m, n, f"{self.coeffs[m - 1, n - 1]:.17g}"])
        return path

    @classmethod
    def from_csv(cls, path) -> "SpectralVelocityField":
        rows = list(csv.DictReader(Path(path).open()))
        M = max(int(r["m"]) for r in rows)
        c = np.zeros((M, M))
        for r in rows:
            c[int(r["m"]) - 1, int(r["n"]) - 1] = float(r["amplitude"])
        return cls(c)


# ---------------------------------------------------------------------------
# mode lattice and diagonal operators
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _mn(M: int):
    m = np.arange(1, M + 1, dtype=np.float64)
    return np.meshgrid(m, m, indexing="ij")


def mode_kappa(M: int) -> np.ndarray:
    """m^2 + n^2 on the M x M lattice (Dirichlet-Laplacian eigenvalue)."""
    mm, nn = _mn(M)
    return mm ** 2 + nn ** 2


def mode_eigenvalues(M: int) -> np.ndarray:
    return mode_kappa(M) ** 2


def eigenvalue(m: int, n: int) -> float:
    if m < 1 or n < 1:
        raise DomainError("mode indices are positive integers")
    return float((m * m + n * n) ** 2)


def semigroup_apply(field: SpectralVelocityField, t: float) -> SpectralVelocityField:
    if t < 0:
        raise DomainError("semigroup defined for t >= 0")
    return SpectralVelocityField(field.coeffs * np.exp(-t * mode_eigenvalues(field.truncation)))


def frac_power_apply(field: SpectralVelocityField, alpha: float) -> SpectralVelocityField:
    return SpectralVelocityField(field.coeffs * mode_eigenvalues(field.truncation) ** alpha)


def norm_F(field: SpectralVelocityField, alpha: float) -> float:
    """|A^alpha field|; alpha = 1/2 is the V norm, alpha = 1/4 the H_0^1 norm."""
    return frac_power_apply(field, alpha).norm()


def norm_V(field: SpectralVelocityField) -> float:
    return norm_F(field, 0.5)


def norm_H1(field: SpectralVelocityField) -> float:
    return norm_F(field, 0.25)


# ---------------------------------------------------------------------------
# collocation grid
# ---------------------------------------------------------------------------

def min_grid_size(M: int) -> int:
    """Smallest N with 2N > 3M: cubic products of degree-M fields integrate exactly."""
    return (3 * M) // 2 + 1


class Collocation:
    """Midpoint grid tables and exact transforms for truncation M on an N x N grid."""

    def __init__(self, M: int, N: int | None = None):
        N = min_grid_size(M) if N is None else int(N)
        if 2 * N <= 3 * M:
            raise DomainError(f"grid N={N} violates the dealiasing margin 2N > 3M for M={M}")
        self.M, self.N = M, N
        self.x = (np.arange(N) + 0.5) * np.pi / N
        k = np.arange(1, M + 1)
        self.S = np.sin(np.outer(self.x, k))
        self.C = np.cos(np.outer(self.x, k))
        self.weight = (np.pi / N) ** 2
        mm, nn = _mn(M)
        self.m, self.n = mm, nn
        self.norm_c = 2.0 / (np.pi * np.sqrt(mm ** 2 + nn ** 2))

    def _amp(self, field):
        coeffs = field.coeffs if isinstance(field, SpectralVelocityField) else field
        if coeffs.shape != (self.M, self.M):
            raise DomainError("field truncation does not match the collocation tables")
        return coeffs * self.norm_c

    def velocity(self, field):
        """(u1, u2) on the grid, arrays indexed [i(x1), j(x2)]."""
        A = self._amp(field)
        u1 = self.S @ (A * self.n) @ self.C.T
        u2 = -self.C @ (A * self.m) @ self.S.T
        return u1, u2

    def gradient(self, field):
        """(du1/dx1, du1/dx2, du2/dx1, du2/dx2) on the grid."""
        A = self._amp(field)
        d11 = self.C @ (A * self.n * self.m) @ self.C.T
        d12 = -self.S @ (A * self.n ** 2) @ self.S.T
        d21 = self.S @ (A * self.m ** 2) @ self.S.T
        return d11, d12, d21, -d11

    def project(self, f1, f2) -> SpectralVelocityField:
        """L^2 projection of a grid vector field onto the basis (discrete Leray projection).

        Equivalent to sine-transforming the vorticity d1 f2 - d2 f1 and dividing by
        m^2 + n^2: by parts, <f, e_mn> = c_mn <curl f, sin m x1 sin n x2>.
        Exact for fields in the grid's parity class (f1 ~ sin.cos, f2 ~ cos.sin).
        """
        a = self.n * (self.S.T @ f1 @ self.C) - self.m * (self.C.T @ f2 @ self.S)
        return SpectralVelocityField(self.weight * self.norm_c * a)

    def integrate(self, g) -> float:
        return float(self.weight * np.sum(g))

    def grid_dump(self, field, path) -> Path:
        path = Path(path)
        u1, u2 = self.velocity(field)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x1", "x2", "u1", "u2"])
            for i, x1 in enumerate(self.x):
                for j, x2 in enumerate(self.x):
                    w.writerow([f"{x1:.17g}", f"{x2:.17g}", f"{u1[i, j]:.17g}", f"{u2[i, j]:.17g}"])
        return path


@lru_cache(maxsize=16)
def collocation(M: int, N: int | None = None) -> Collocation:
    return Collocation(M, N)


def project_divergence_free(f1, f2, M: int) -> SpectralVelocityField:
    """Leray projection of a grid vector field (sampled on the midpoint grid) onto the M x M basis."""
    f1 = np.asarray(f1, dtype=np.float64)
    return collocation(M, f1.shape[0]).project(f1, np.asarray(f2, dtype=np.float64))
