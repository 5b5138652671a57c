"""Fourier representation of a Matérn GP on a quadrature rule.

With ``γ_i = √(2 w_i k̂(ξ_i))`` the random expansion
``f(x) = Σ γ_i (α_i cos(2πξ_i x) + β_i sin(2πξ_i x))``, ``α, β ~ N(0, 1)``,
is a GP whose covariance is the effective kernel
``k'(d) = Σ 2 w_i k̂(ξ_i) cos(2πξ_i d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special

from .errors import DomainError
from .kernels import MaternParams, matern_kernel, matern_spectral_density
from .logger import get_logger
from .rule import QuadratureRule

logger = get_logger("fourier")

L2_START = 200
L2_MAX = 1600
L2_RTOL = 0.01

# relative slack on interval checks, absorbs endpoint roundoff
_EDGE = 1e-12


def gamma_coefficients(rule: QuadratureRule, p: MaternParams) -> NDArray[np.float64]:
    if not rule.box.contains(p):
        raise DomainError(
            f"(nu={p.nu}, rho={p.rho}) lies outside the rule's box "
            f"nu in [{rule.box.nu_lo}, {rule.box.nu_hi}], "
            f"rho in [{rule.box.rho_lo}, {rule.box.rho_hi}]"
        )
    return np.sqrt(2.0 * rule.weights * matern_spectral_density(rule.nodes, p))


def check_locations(rule: QuadratureRule, xs: NDArray[np.float64]) -> None:
    box = rule.box
    slack = _EDGE * max(abs(box.a), abs(box.b), 1.0)
    if xs.size and (xs.min() < box.a - slack or xs.max() > box.b + slack):
        raise DomainError(f"locations must lie in [{box.a}, {box.b}]")


def effective_kernel(
    rule: QuadratureRule, p: MaternParams, d: ArrayLike
) -> NDArray[np.float64] | float:
    d_arr = np.asarray(d, dtype=np.float64)
    lag_max = rule.box.lag_max
    if np.any(np.abs(d_arr) > lag_max * (1.0 + _EDGE)):
        raise DomainError(f"|d| must not exceed the lag domain {lag_max}")
    g2 = gamma_coefficients(rule, p) ** 2
    out = np.cos(2.0 * math.pi * np.multiply.outer(d_arr, rule.nodes)) @ g2
    if out.ndim == 0:
        return float(out)
    return out


def basis_row(
    rule: QuadratureRule, gammas: ArrayLike, x: float
) -> NDArray[np.float64]:
    """``[γ cos(2πξx), γ sin(2πξx)]``, length ``2m``."""
    return design_matrix(rule, gammas, np.array([x], dtype=np.float64))[0]


def design_matrix(
    rule: QuadratureRule, gammas: ArrayLike, xs: ArrayLike
) -> NDArray[np.float64]:
    """Stacked basis rows, shape ``(N, 2m)``."""
    xs = np.asarray(xs, dtype=np.float64).ravel()
    check_locations(rule, xs)
    gammas = np.asarray(gammas, dtype=np.float64)
    arg = 2.0 * math.pi * np.outer(xs, rule.nodes)
    return np.hstack([np.cos(arg) * gammas, np.sin(arg) * gammas])


@dataclass(frozen=True, eq=False)
class FourierExpansion:
    rule: QuadratureRule
    params: MaternParams
    gammas: NDArray[np.float64]

    @classmethod
    def from_rule(cls, rule: QuadratureRule, params: MaternParams) -> FourierExpansion:
        return cls(rule, params, gamma_coefficients(rule, params))

    @property
    def m(self) -> int:
        return self.rule.m

    @property
    def basis_size(self) -> int:
        return 2 * self.rule.m

    def design_matrix(self, xs: ArrayLike) -> NDArray[np.float64]:
        return design_matrix(self.rule, self.gammas, xs)

    def effective_kernel(self, d: ArrayLike) -> NDArray[np.float64] | float:
        return effective_kernel(self.rule, self.params, d)


def l2_kernel_error(
    rule: QuadratureRule,
    p: MaternParams,
    *,
    approximation: Callable[[NDArray[np.float64]], NDArray[np.float64]] | None = None,
) -> float:
    """``(∬_{[a,b]²} (k'(x−y) − k(x−y))² dx dy)^{1/2}`` by tensor Gauss-Legendre.

    The node count starts at 200 per axis and doubles until the value moves
    by less than 1% relative. ``approximation`` replaces ``k'`` (a callable of
    the lag array).
    """
    gamma_coefficients(rule, p)
    if approximation is None:

        def approximation(d: NDArray[np.float64]) -> NDArray[np.float64]:
            return np.asarray(effective_kernel(rule, p, d))

    a, b = rule.box.a, rule.box.b

    def l2(order: int) -> float:
        t, w = np.polynomial.legendre.leggauss(order)
        x = 0.5 * (b - a) * t + 0.5 * (a + b)
        w = 0.5 * (b - a) * w
        d = np.subtract.outer(x, x)
        exact = np.asarray(matern_kernel(np.abs(d).ravel(), p)).reshape(d.shape)
        diff = np.asarray(approximation(d)) - exact
        return math.sqrt(float(w @ (diff**2) @ w))

    order = L2_START
    previous = l2(order)
    while order < L2_MAX:
        order *= 2
        current = l2(order)
        if abs(current - previous) <= L2_RTOL * abs(current):
            return current
        previous = current
    logger.warning(f"L2 error not settled at {order} nodes per axis")
    return previous


def standard_normals(seed: np.random.SeedSequence, size: int) -> NDArray[np.float64]:
    # uniform in (0, 1) from 53 random bits, mapped by the inverse normal CDF
    rng = np.random.Generator(np.random.PCG64(seed))
    u = (rng.integers(0, 1 << 53, size=size).astype(np.float64) + 0.5) * 2.0**-53
    return special.ndtri(u)


def sample_prior(
    expansion: FourierExpansion,
    seed: int,
    xs: ArrayLike,
    *,
    draws: int | None = None,
    coefficients: ArrayLike | None = None,
) -> NDArray[np.float64]:
    """Prior draws at ``xs``: shape ``(len(xs),)`` or ``(draws, len(xs))``.

    Draw ``k`` uses the ``k``-th spawned child stream of ``seed``, so any
    subset of draws is reproducible on its own. ``coefficients`` of shape
    ``(2m,)`` or ``(draws, 2m)`` bypasses the generator.
    """
    X = expansion.design_matrix(xs)
    count = 1 if draws is None else draws
    if coefficients is None:
        children = np.random.SeedSequence(seed).spawn(count)
        coeffs = np.stack([standard_normals(child, expansion.basis_size) for child in children])
    else:
        coeffs = np.asarray(coefficients, dtype=np.float64).reshape(count, expansion.basis_size)
    values = coeffs @ X.T
    return values[0] if draws is None else values
