"""Matérn covariance kernels, their 1-D spectral densities and Chebyshev gridding.

Fourier convention: ``k̂(ξ) = ∫ k(d) e^{-2πiξd} dd`` so that
``k(d) = ∫₀^∞ 2 k̂(ξ) cos(2πξd) dξ``. Frequencies are in cycles per x-unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special

from .errors import DomainError

FOUR_PI_SQ = 4.0 * math.pi**2

# below this scaled lag the two-term series equals k to double precision
_SMALL_Z = 1e-8


@dataclass(frozen=True)
class MaternParams:
    nu: float
    rho: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.nu) and self.nu > 0):
            raise DomainError(f"nu must be > 0, got {self.nu}")
        if not (np.isfinite(self.rho) and self.rho > 0):
            raise DomainError(f"rho must be > 0, got {self.rho}")


@dataclass(frozen=True)
class HyperBox:
    """Hyperparameter box plus the interval ``[a, b]`` the GP lives on."""

    nu_lo: float = 1.5
    nu_hi: float = 3.5
    rho_lo: float = 0.1
    rho_hi: float = 0.5
    a: float = -1.0
    b: float = 1.0

    def __post_init__(self) -> None:
        # degenerate (single-kernel) boxes are allowed, inverted ones are not
        if not self.nu_lo <= self.nu_hi:
            raise DomainError(f"nu bounds inverted: [{self.nu_lo}, {self.nu_hi}]")
        if not self.rho_lo <= self.rho_hi:
            raise DomainError(
                f"rho bounds inverted: [{self.rho_lo}, {self.rho_hi}]"
            )
        if not self.a < self.b:
            raise DomainError(f"interval must satisfy a < b: [{self.a}, {self.b}]")
        if self.nu_lo <= 0 or self.rho_lo <= 0:
            raise DomainError("nu and rho bounds must be positive")

    @classmethod
    def reference_box(cls) -> HyperBox:
        return cls()

    @classmethod
    def parse(cls, text: str) -> HyperBox:
        """Parse ``"a,b,nu0,nu1,rho0,rho1"``."""
        try:
            a, b, nu0, nu1, rho0, rho1 = (float(v) for v in text.split(","))
        except ValueError as e:
            raise DomainError(
                f"box must be 'a,b,nu0,nu1,rho0,rho1', got {text!r}"
            ) from e
        return cls(nu_lo=nu0, nu_hi=nu1, rho_lo=rho0, rho_hi=rho1, a=a, b=b)

    @property
    def lag_max(self) -> float:
        return self.b - self.a

    @property
    def is_degenerate(self) -> bool:
        return self.nu_lo == self.nu_hi and self.rho_lo == self.rho_hi

    def contains(self, p: MaternParams, rtol: float = 1e-12) -> bool:
        nu_tol = rtol * max(abs(self.nu_hi), 1.0)
        rho_tol = rtol * max(abs(self.rho_hi), 1.0)
        return (
            self.nu_lo - nu_tol <= p.nu <= self.nu_hi + nu_tol
            and self.rho_lo - rho_tol <= p.rho <= self.rho_hi + rho_tol
        )

    def strictly_contains(self, p: MaternParams) -> bool:
        return self.nu_lo < p.nu < self.nu_hi and self.rho_lo < p.rho < self.rho_hi

    def as_tuple(self) -> tuple[float, float, float, float, float, float]:
        return (self.a, self.b, self.nu_lo, self.nu_hi, self.rho_lo, self.rho_hi)


def matern_kernel(r: ArrayLike, p: MaternParams) -> NDArray[np.float64] | float:
    """Matérn covariance ``k_{ν,ρ}(r)`` with unit variance.

    ``k(r) = 2^{1-ν}/Γ(ν) · z^ν K_ν(z)`` with ``z = √(2ν) r / ρ``; ``k(0) = 1``
    exactly. Evaluated in log space through the exponentially scaled Bessel
    function so large lags underflow to zero cleanly.
    """
    r_arr = np.asarray(r, dtype=np.float64)
    if np.any(r_arr < 0) or not np.all(np.isfinite(r_arr)):
        raise DomainError("lag must be finite and non-negative")

    nu = p.nu
    z = math.sqrt(2.0 * nu) * r_arr / p.rho
    out = np.ones_like(z)

    big = z >= _SMALL_Z
    if np.any(big):
        zb = z[big]
        log_k = (
            (1.0 - nu) * math.log(2.0)
            - special.gammaln(nu)
            + nu * np.log(zb)
            + np.log(special.kve(nu, zb))
            - zb
        )
        out[big] = np.exp(log_k)

    small = (z > 0) & ~big
    if np.any(small):
        half_z = z[small] / 2.0
        if nu > 1.0:
            out[small] = 1.0 - half_z**2 / (nu - 1.0)
        elif nu < 1.0:
            ratio = special.gamma(1.0 - nu) / special.gamma(1.0 + nu)
            out[small] = 1.0 - ratio * half_z ** (2.0 * nu)
        else:
            out[small] = 1.0 + half_z**2 * np.log(half_z)

    if out.ndim == 0:
        return float(out)
    return out


def _log_density_constant(p: MaternParams) -> float:
    """``log C(ν,ρ)``, ``C = 2√π Γ(ν+½)(2ν)^ν / (Γ(ν) ρ^{2ν})``."""
    nu = p.nu
    return (
        math.log(2.0)
        + 0.5 * math.log(math.pi)
        + special.gammaln(nu + 0.5)
        + nu * math.log(2.0 * nu)
        - special.gammaln(nu)
        - 2.0 * nu * math.log(p.rho)
    )


def log_spectral_density(xi: ArrayLike, p: MaternParams) -> NDArray[np.float64]:
    xi = np.asarray(xi, dtype=np.float64)
    q = 2.0 * p.nu / p.rho**2 + FOUR_PI_SQ * xi**2
    return _log_density_constant(p) - (p.nu + 0.5) * np.log(q)


def matern_spectral_density(
    xi: ArrayLike, p: MaternParams
) -> NDArray[np.float64] | float:
    """``k̂(ξ) = C(ν,ρ) (2ν/ρ² + 4π²ξ²)^{-(ν+½)}``, even and strictly positive."""
    out = np.exp(log_spectral_density(xi, p))
    if out.ndim == 0:
        return float(out)
    return out


def log_spectral_density_table(
    nus: ArrayLike, rhos: ArrayLike, xi: ArrayLike
) -> NDArray[np.float64]:
    """``log k̂`` for paired ``(nus[r], rhos[r])`` rows against every ``xi`` column."""
    nu = np.asarray(nus, dtype=np.float64).ravel()
    rho = np.asarray(rhos, dtype=np.float64).ravel()
    xi = np.asarray(xi, dtype=np.float64).ravel()
    log_c = (
        math.log(2.0)
        + 0.5 * math.log(math.pi)
        + special.gammaln(nu + 0.5)
        + nu * np.log(2.0 * nu)
        - special.gammaln(nu)
        - 2.0 * nu * np.log(rho)
    )
    q = (2.0 * nu / rho**2)[:, None] + FOUR_PI_SQ * xi[None, :] ** 2
    return log_c[:, None] - (nu + 0.5)[:, None] * np.log(q)


def spectral_density_derivative(xi: ArrayLike, p: MaternParams) -> NDArray[np.float64]:
    """``dk̂/dξ``."""
    xi = np.asarray(xi, dtype=np.float64)
    q = 2.0 * p.nu / p.rho**2 + FOUR_PI_SQ * xi**2
    return -(p.nu + 0.5) * 2.0 * FOUR_PI_SQ * xi / q * np.exp(log_spectral_density(xi, p))


def log_spectral_density_grad(
    xi: ArrayLike, p: MaternParams
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Partial derivatives ``(∂/∂ν, ∂/∂ρ) log k̂(ξ)``."""
    xi = np.asarray(xi, dtype=np.float64)
    nu, rho = p.nu, p.rho
    q = 2.0 * nu / rho**2 + FOUR_PI_SQ * xi**2

    d_nu = (
        special.digamma(nu + 0.5)
        - special.digamma(nu)
        + math.log(2.0 * nu)
        + 1.0
        - 2.0 * math.log(rho)
        - np.log(q)
        - (nu + 0.5) * (2.0 / rho**2) / q
    )
    d_rho = -2.0 * nu / rho + (nu + 0.5) * (4.0 * nu / rho**3) / q
    return d_nu, d_rho


def spectral_tail_bound(xi_max: float, p: MaternParams) -> float:
    """Upper bound on ``∫_{Ξ}^∞ 2k̂(ξ) dξ`` from ``k̂ ≤ C (4π²ξ²)^{-(ν+½)}``."""
    if xi_max <= 0:
        return math.inf
    nu = p.nu
    log_bound = (
        math.log(2.0)
        + _log_density_constant(p)
        - (nu + 0.5) * math.log(FOUR_PI_SQ)
        - 2.0 * nu * math.log(xi_max)
        - math.log(2.0 * nu)
    )
    return math.exp(log_bound)


def tail_cutoff(p: MaternParams, tol: float) -> float:
    """Smallest ``Ξ`` with ``spectral_tail_bound(Ξ, p) ≤ tol`` (closed form)."""
    nu = p.nu
    log_xi = (
        math.log(2.0)
        + _log_density_constant(p)
        - (nu + 0.5) * math.log(FOUR_PI_SQ)
        - math.log(2.0 * nu)
        - math.log(tol)
    ) / (2.0 * nu)
    return math.exp(log_xi)


def chebyshev_nodes(lo: float, hi: float, p: int) -> NDArray[np.float64]:
    """First-kind Chebyshev points mapped affinely to ``[lo, hi]``, ascending."""
    if p < 1:
        raise DomainError(f"need at least one node, got p={p}")
    if not lo < hi:
        raise DomainError(f"need lo < hi, got [{lo}, {hi}]")
    k = np.arange(p)
    # sin form is exactly odd in k, so the nodes are symmetric and the
    # single node of p=1 sits on the midpoint.
    x = np.sin(np.pi * (2 * k - p + 1) / (2 * p))
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    return mid + half * x


def hyper_grid(lo: float, hi: float, p: int) -> NDArray[np.float64]:
    """Chebyshev nodes on ``[lo, hi]``; a single point for a degenerate range."""
    if lo == hi:
        return np.array([lo], dtype=np.float64)
    return chebyshev_nodes(lo, hi, p)
