"""Type-3 nonuniform exponential sums ``f_ℓ = Σ_j c_j e^{i ω_ℓ x_j}``.

The fast path is the Gaussian-window construction. Sources and targets are
centred, the sources are spread onto a uniform x-grid with the window
``e^{−y²/4τ}``, and the grid sums ``h Σ_k F_k e^{iωkh}`` are evaluated at the
targets as a uniform-to-nonuniform sum: deconvolve by the Fourier
coefficients of a periodic Gaussian ``e^{−θ²/4σ}``, oversampled inverse FFT,
Gaussian interpolation at ``θ = ωh``. Dividing by the transform of the
x-window, ``√(4πτ) e^{−τω²}``, gives the sums.

Each of the four error terms (x-grid aliasing, x-window truncation, FFT-grid
aliasing, θ-window truncation) is held below ``tol/5 · Σ|c_j|`` by its own
bound, so ``max_ℓ |f̂_ℓ − f_ℓ| ≤ tol · Σ|c_j|``.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import fft

from .errors import DomainError, NufftError
from .logger import get_logger

logger = get_logger("nufft")

TOL_MIN = 1e-14
TOL_MAX = 1e-4
DIRECT_THRESHOLD = 2e7
MAX_GRID = 2**24

# τS²: the x-window deconvolution amplifies by at most e^{τS²}
_AMPLIFICATION = 1.0
# FFT length over the number of x-grid modes
_OVERSAMPLING = 2
# keeps the θ-window stencil shorter than the FFT grid for every tol
_MIN_FFT = 64

_DIRECT_BLOCK = 1 << 22


def direct_exp_sums(
    x: ArrayLike, c: ArrayLike, omega: ArrayLike
) -> NDArray[np.complex128]:
    """Exact ``O(N·M)`` evaluation, blocked over targets."""
    x = np.asarray(x, dtype=np.float64).ravel()
    c = np.asarray(c, dtype=np.complex128).ravel()
    omega = np.asarray(omega, dtype=np.float64).ravel()
    if x.shape != c.shape:
        raise DomainError("sources and coefficients must have equal length")

    out = np.zeros(omega.size, dtype=np.complex128)
    if x.size == 0 or omega.size == 0:
        return out
    step = max(1, _DIRECT_BLOCK // x.size)
    for start in range(0, omega.size, step):
        block = omega[start : start + step]
        out[start : start + step] = np.exp(1j * np.outer(block, x)) @ c
    return out


class ExpSumPlan:
    """Reusable plan for ``Σ_j c_j e^{i ω_ℓ x_j}`` with fixed sources and targets."""

    def __init__(
        self,
        sources: ArrayLike,
        targets: ArrayLike,
        tol: float = 1e-10,
        *,
        force_fast: bool = False,
        max_grid: int = MAX_GRID,
        direct_threshold: float = DIRECT_THRESHOLD,
    ) -> None:
        if not TOL_MIN <= tol <= TOL_MAX:
            raise DomainError(f"tol must lie in [{TOL_MIN}, {TOL_MAX}], got {tol}")
        x = np.ascontiguousarray(sources, dtype=np.float64).ravel()
        omega = np.ascontiguousarray(targets, dtype=np.float64).ravel()
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(omega))):
            raise DomainError("sources and targets must be finite")

        self.sources = x
        self.targets = omega
        self.tol = float(tol)
        self.grid_size = 0

        work = x.size * omega.size
        self.uses_fast_path = bool(
            x.size and omega.size and (force_fast or work > direct_threshold)
        )
        if not self.uses_fast_path:
            logger.debug(f"Direct summation for N={x.size}, M={omega.size}")
            return

        self._plan(max_grid)
        logger.debug(
            f"Fast path for N={x.size}, M={omega.size}: "
            f"x-grid {2 * self._K + 1}, FFT {self.grid_size}, "
            f"stencils {2 * self._q_src + 1}/{2 * self._q_tgt + 1}"
        )

    @property
    def n_sources(self) -> int:
        return int(self.sources.size)

    @property
    def n_targets(self) -> int:
        return int(self.targets.size)

    def _plan(self, max_grid: int) -> None:
        x, omega = self.sources, self.targets
        x_lo, x_hi = float(x.min()), float(x.max())
        w_lo, w_hi = float(omega.min()), float(omega.max())
        x_c, X = 0.5 * (x_lo + x_hi), 0.5 * (x_hi - x_lo)
        w_c, S = 0.5 * (w_lo + w_hi), 0.5 * (w_hi - w_lo)
        # a single target still needs a finite window
        S = max(S, 1.0 / max(X, 1.0))

        t = math.log(5.0 / self.tol)
        a = _AMPLIFICATION
        tau = a / S**2

        # x-grid aliasing: 2.2·e^{−τ((2π/h − S)² − S²)} ≤ e^{−t}
        t_alias = t + math.log(2.2)
        h = 2.0 * math.pi / (S * (1.0 + math.sqrt(1.0 + t_alias / a)))
        # x-window truncation: e^{a − D²/4τ} ≤ e^{−t}, D the reach past the nearest point
        reach = 2.0 * math.sqrt(tau * (t + a))
        q_src = int(math.ceil(reach / h + 0.5))
        K = int(math.ceil(X / h)) + q_src + 1
        n_grid = 2 * K + 1

        L = fft.next_fast_len(max(_OVERSAMPLING * n_grid, _MIN_FFT))
        if L > max_grid:
            raise NufftError(
                f"space-bandwidth product {X * S:.3g} needs an FFT of {L} > {max_grid}",
                grid_size=L,
            )
        delta = 2.0 * math.pi / L
        # FFT-grid aliasing: e^{−σL(L−2K)} with the deconvolution gain e^{a}
        t_fft = t + a + math.log(3.0)
        sigma = t_fft / (L * (L - 2 * K))
        # θ-window truncation against the mode gain e^{σK²}
        reach_t = 2.0 * math.sqrt(sigma * (t + a + sigma * K**2 + math.log(5.0)))
        q_tgt = int(math.ceil(reach_t / delta + 0.5))
        if 2 * q_tgt + 1 > L:
            raise NufftError(f"stencil {2 * q_tgt + 1} exceeds FFT grid {L}", grid_size=L)

        xt = x - x_c
        k0 = np.rint(xt / h).astype(np.int64)
        self._src_idx = k0 + K
        self._src_dx = xt - k0 * h
        self._src_phase = np.exp(1j * w_c * xt)

        k = np.arange(-K, K + 1, dtype=np.float64)
        self._deconv = h * math.sqrt(math.pi / sigma) * np.exp(sigma * k**2)
        self._modes = np.mod(np.arange(-K, K + 1), L)

        wt = omega - w_c
        theta = wt * h
        r0 = np.rint(theta / delta).astype(np.int64)
        self._tgt_r0 = r0
        self._tgt_d = theta - r0 * delta
        self._tgt_post = (
            np.exp(1j * omega * x_c)
            * np.exp(tau * wt**2)
            / (math.sqrt(4.0 * math.pi * tau) * L)
        )

        self._h, self._tau, self._sigma, self._delta = h, tau, sigma, delta
        self._K, self._q_src, self._q_tgt = K, q_src, q_tgt
        self.grid_size = L

    def _spread(self, c: NDArray[np.complex128]) -> NDArray[np.complex128]:
        n_grid = 2 * self._K + 1
        cp = c * self._src_phase
        re, im = cp.real, cp.imag
        g_re = np.zeros(n_grid)
        g_im = np.zeros(n_grid)
        dx, h, four_tau = self._src_dx, self._h, 4.0 * self._tau
        # grid point (k0 + o)h sits at distance dx − oh from the source
        for o in range(-self._q_src, self._q_src + 1):
            w = np.exp(-((dx - o * h) ** 2) / four_tau)
            idx = self._src_idx + o
            g_re += np.bincount(idx, weights=re * w, minlength=n_grid)
            g_im += np.bincount(idx, weights=im * w, minlength=n_grid)
        return g_re + 1j * g_im

    def _interpolate(self, u: NDArray[np.complex128]) -> NDArray[np.complex128]:
        L = self.grid_size
        d, delta, four_sigma = self._tgt_d, self._delta, 4.0 * self._sigma
        out = np.zeros(self.n_targets, dtype=np.complex128)
        for o in range(-self._q_tgt, self._q_tgt + 1):
            w = np.exp(-((d - o * delta) ** 2) / four_sigma)
            out += u[np.mod(self._tgt_r0 + o, L)] * w
        return out * self._tgt_post

    def execute(self, c: ArrayLike) -> NDArray[np.complex128]:
        c = np.asarray(c, dtype=np.complex128).ravel()
        if c.size != self.n_sources:
            raise DomainError(
                f"expected {self.n_sources} coefficients, got {c.size}"
            )
        if not self.uses_fast_path:
            return direct_exp_sums(self.sources, c, self.targets)

        g = self._spread(c)
        b = np.zeros(self.grid_size, dtype=np.complex128)
        b[self._modes] = g * self._deconv
        u = fft.ifft(b) * self.grid_size
        return self._interpolate(u)


def fast_exp_sums(plan: ExpSumPlan, c: ArrayLike) -> NDArray[np.complex128]:
    return plan.execute(c)
