"""Weight-space GP regression on a Fourier expansion.

The design matrix is ``X = [γ cos(2πξx), γ sin(2πξx)]`` (``N × 2m``). Every
data-dependent quantity reduces to the hyperparameter-free exponential sums
in ``TrigSums``: with ``ξ' = (ξ, −ξ)`` and ``X'_{jk} = e^{2πiξ'_k x_j}``,
``X = X'BD`` for the block matrix ``B`` of ``cos = (e⁺ + e⁻)/2`` and
``sin = (e⁺ − e⁻)/2i`` and ``D = diag(γ, γ)``, so
``XᵀX = Dᵀ(BᵀX'ᵀX'B)D``. ``X'ᵀX'`` needs the ``2m²+m`` distinct sums at
``ω = 2π(ξ'_p + ξ'_q)``, evaluated by one type-3 plan. A new ``(ν, ρ)``
only changes ``D``; a new ``σ²`` only changes the diagonal shift of the
eigendecomposition.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg, optimize
from scipy.sparse.linalg import LinearOperator, cg

from .errors import DomainError, NumericalError
from .fourier import check_locations, design_matrix, gamma_coefficients
from .kernels import MaternParams, log_spectral_density_grad, matern_kernel
from .logger import get_logger
from .nufft import ExpSumPlan
from .parallel import chunks, thread_map
from .rule import QuadratureRule

logger = get_logger("regression")

NUFFT_TOL = 1e-13
ORACLE_MAX_N = 5000
SIGMA2_BOUNDS = (1e-8, 1e4)
PREDICT_BATCH = 4096

# negative eigenvalues of XᵀX beyond this fraction of its norm are a bug, not roundoff
_PSD_SLACK = 1e-10


@dataclass(frozen=True, eq=False)
class Dataset:
    xs: NDArray[np.float64]
    ys: NDArray[np.float64]

    def __post_init__(self) -> None:
        xs = np.ascontiguousarray(self.xs, dtype=np.float64).ravel()
        ys = np.ascontiguousarray(self.ys, dtype=np.float64).ravel()
        if xs.shape != ys.shape:
            raise DomainError(f"xs and ys differ in length: {xs.size} vs {ys.size}")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise DomainError("data must be finite")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def N(self) -> int:
        return int(self.xs.size)


def _require_data(data: Dataset) -> None:
    if data.N == 0:
        raise DomainError("dataset is empty")


def _require_sigma2(sigma2: float) -> None:
    if not (np.isfinite(sigma2) and sigma2 > 0):
        raise DomainError(f"sigma2 must be > 0, got {sigma2}")


@dataclass(frozen=True, eq=False)
class TrigSums:
    """Hyperparameter-free data sums.

    ``core`` is ``BᵀX'ᵀX'B``, i.e. ``[[Σcc, Σcs], [Σsc, Σss]]`` without the
    ``γ`` factors. ``rhs_cos``/``rhs_sin`` are ``Σ y cos(2πξx)`` and
    ``Σ y sin(2πξx)``.
    """

    core: NDArray[np.float64]
    rhs_cos: NDArray[np.float64]
    rhs_sin: NDArray[np.float64]
    yty: float
    N: int
    imag_residue: float
    seconds: float

    @property
    def m(self) -> int:
        return int(self.rhs_cos.size)


def _pair_frequencies(nodes: NDArray[np.float64]) -> tuple[NDArray, NDArray, NDArray]:
    ext = np.concatenate([nodes, -nodes])
    p, q = np.triu_indices(ext.size)
    return 2.0 * math.pi * (ext[p] + ext[q]), p, q


def trig_sums(
    rule: QuadratureRule,
    data: Dataset,
    *,
    tol: float = NUFFT_TOL,
    force_fast: bool = False,
) -> TrigSums:
    _require_data(data)
    check_locations(rule, data.xs)
    start = time.perf_counter()
    m = rule.m

    omega, p, q = _pair_frequencies(rule.nodes)
    targets = np.concatenate([omega, 2.0 * math.pi * rule.nodes])
    plan = ExpSumPlan(data.xs, targets, tol, force_fast=force_fast)
    pair_sums = plan.execute(np.ones(data.N))[: omega.size]
    data_sums = plan.execute(data.ys)[omega.size :]

    G = np.empty((2 * m, 2 * m), dtype=np.complex128)
    G[p, q] = pair_sums
    G[q, p] = pair_sums
    half = 0.5 * np.eye(m)
    B = np.block([[half, -0.5j * np.eye(m)], [half, 0.5j * np.eye(m)]])
    core_c = B.T @ G @ B
    scale = max(float(np.max(np.abs(core_c.real))), 1.0)
    imag_residue = float(np.max(np.abs(core_c.imag))) / scale
    core = 0.5 * (core_c.real + core_c.real.T)

    seconds = time.perf_counter() - start
    logger.debug(
        f"Trig sums for N={data.N}, m={m} in {seconds:.3f}s "
        f"({'fast' if plan.uses_fast_path else 'direct'}), imag residue {imag_residue:.1e}"
    )
    return TrigSums(
        core=core,
        rhs_cos=data_sums.real.copy(),
        rhs_sin=data_sums.imag.copy(),
        yty=float(data.ys @ data.ys),
        N=data.N,
        imag_residue=imag_residue,
        seconds=seconds,
    )


@dataclass(frozen=True, eq=False)
class NormalSystem:
    XtX: NDArray[np.float64]
    Xty: NDArray[np.float64]
    m: int
    N: int
    sums: TrigSums

    @classmethod
    def from_sums(cls, sums: TrigSums, gammas: ArrayLike) -> NormalSystem:
        g = np.asarray(gammas, dtype=np.float64)
        g2 = np.concatenate([g, g])
        return cls(
            XtX=sums.core * np.outer(g2, g2),
            Xty=g2 * np.concatenate([sums.rhs_cos, sums.rhs_sin]),
            m=sums.m,
            N=sums.N,
            sums=sums,
        )


def form_rhs(
    rule: QuadratureRule,
    gammas: ArrayLike,
    data: Dataset,
    *,
    tol: float = NUFFT_TOL,
    force_fast: bool = False,
) -> NDArray[np.float64]:
    """``Xᵀy`` from the real and imaginary parts of ``Σ y_j e^{2πiξx_j}``."""
    _require_data(data)
    check_locations(rule, data.xs)
    plan = ExpSumPlan(data.xs, 2.0 * math.pi * rule.nodes, tol, force_fast=force_fast)
    sums = plan.execute(data.ys)
    g = np.asarray(gammas, dtype=np.float64)
    return np.concatenate([g * sums.real, g * sums.imag])


def form_normal_matrix(
    rule: QuadratureRule,
    gammas: ArrayLike,
    data: Dataset,
    *,
    tol: float = NUFFT_TOL,
    force_fast: bool = False,
) -> NormalSystem:
    return NormalSystem.from_sums(
        trig_sums(rule, data, tol=tol, force_fast=force_fast), gammas
    )


@dataclass(frozen=True, eq=False)
class RegressionFit:
    rule: QuadratureRule
    params: MaternParams
    gammas: NDArray[np.float64]
    sigma2: float
    U: NDArray[np.float64]
    S: NDArray[np.float64]
    beta: NDArray[np.float64]
    system: NormalSystem | None
    solve_seconds: float = 0.0

    @classmethod
    def prior(
        cls, rule: QuadratureRule, params: MaternParams, sigma2: float = 1.0
    ) -> RegressionFit:
        """The fit to no data: ``β̄ = 0`` and the prior covariance."""
        _require_sigma2(sigma2)
        size = 2 * rule.m
        return cls(
            rule=rule,
            params=params,
            gammas=gamma_coefficients(rule, params),
            sigma2=sigma2,
            U=np.eye(size),
            S=np.zeros(size),
            beta=np.zeros(size),
            system=None,
        )

    @property
    def m(self) -> int:
        return self.rule.m

    @property
    def N(self) -> int:
        return 0 if self.system is None else self.system.N

    @property
    def fft_seconds(self) -> float:
        return 0.0 if self.system is None else self.system.sums.seconds


def _solve(
    rule: QuadratureRule,
    params: MaternParams,
    gammas: NDArray[np.float64],
    system: NormalSystem,
    sigma2: float,
    eig: tuple[NDArray[np.float64], NDArray[np.float64]] | None = None,
) -> RegressionFit:
    start = time.perf_counter()
    if eig is None:
        S, U = linalg.eigh(system.XtX)
        S, U = S[::-1], U[:, ::-1]
        norm = max(float(np.abs(S).max()), np.finfo(float).tiny)
        if S[-1] < -_PSD_SLACK * norm:
            raise NumericalError(
                f"normal matrix is not PSD: eigenvalue {S[-1]:.3e} vs norm {norm:.3e}"
            )
        S = np.maximum(S, 0.0)
    else:
        S, U = eig
    beta = U @ ((U.T @ system.Xty) / (S + sigma2))
    return RegressionFit(
        rule=rule,
        params=params,
        gammas=gammas,
        sigma2=float(sigma2),
        U=U,
        S=S,
        beta=beta,
        system=system,
        solve_seconds=time.perf_counter() - start,
    )


def fit(
    rule: QuadratureRule,
    p: MaternParams,
    data: Dataset,
    sigma2: float,
    *,
    sums: TrigSums | None = None,
    tol: float = NUFFT_TOL,
    force_fast: bool = False,
) -> RegressionFit:
    """``β̄ = U(S + σ²I)⁻¹UᵀXᵀy`` from one eigendecomposition of ``XᵀX``."""
    _require_sigma2(sigma2)
    gammas = gamma_coefficients(rule, p)
    if sums is None:
        sums = trig_sums(rule, data, tol=tol, force_fast=force_fast)
    elif sums.N != data.N:
        raise DomainError("cached sums belong to a different dataset")
    return _solve(rule, p, gammas, NormalSystem.from_sums(sums, gammas), sigma2)


def refit(
    fit: RegressionFit,
    params: MaternParams | None = None,
    sigma2: float | None = None,
) -> RegressionFit:
    """Refit without new exponential sums.

    A new ``σ²`` alone reuses the eigendecomposition; new ``(ν, ρ)`` rescales
    the cached sums and decomposes again.
    """
    if fit.system is None:
        raise DomainError("cannot refit the prior")
    sigma2 = fit.sigma2 if sigma2 is None else sigma2
    _require_sigma2(sigma2)
    if params is None or params == fit.params:
        return _solve(fit.rule, fit.params, fit.gammas, fit.system, sigma2, (fit.S, fit.U))
    gammas = gamma_coefficients(fit.rule, params)
    system = NormalSystem.from_sums(fit.system.sums, gammas)
    return _solve(fit.rule, params, gammas, system, sigma2)


def posterior_mean_at(fit: RegressionFit, x: ArrayLike) -> NDArray[np.float64] | float:
    x_arr = np.asarray(x, dtype=np.float64)
    out = design_matrix(fit.rule, fit.gammas, x_arr.ravel()) @ fit.beta
    return float(out[0]) if x_arr.ndim == 0 else out.reshape(x_arr.shape)


def posterior_variance_at(fit: RegressionFit, x: ArrayLike) -> NDArray[np.float64] | float:
    """``σ² φ(x)ᵀ U (S + σ²I)⁻¹ Uᵀ φ(x)``, the posterior variance of the latent ``f``."""
    x_arr = np.asarray(x, dtype=np.float64)
    proj = design_matrix(fit.rule, fit.gammas, x_arr.ravel()) @ fit.U
    out = fit.sigma2 * (proj**2 @ (1.0 / (fit.S + fit.sigma2)))
    return float(out[0]) if x_arr.ndim == 0 else out.reshape(x_arr.shape)


def predict(
    fit: RegressionFit, xs: ArrayLike, *, batch: int = PREDICT_BATCH
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Posterior mean and variance at ``xs``, in row batches on the thread pool."""
    xs = np.asarray(xs, dtype=np.float64).ravel()

    def run(sl: slice) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        part = xs[sl]
        return (
            np.asarray(posterior_mean_at(fit, part)),
            np.asarray(posterior_variance_at(fit, part)),
        )

    parts = thread_map(run, chunks(xs.size, batch))
    if not parts:
        return np.empty(0), np.empty(0)
    return (
        np.concatenate([mean for mean, _ in parts]),
        np.concatenate([var for _, var in parts]),
    )


def exact_gp_oracle(
    p: MaternParams, data: Dataset, sigma2: float, xstar: ArrayLike
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Dense posterior mean and variance with the exact Matérn kernel."""
    _require_data(data)
    _require_sigma2(sigma2)
    if data.N > ORACLE_MAX_N:
        raise DomainError(f"dense oracle limited to N <= {ORACLE_MAX_N}, got {data.N}")
    xstar = np.asarray(xstar, dtype=np.float64).ravel()

    lags = np.abs(np.subtract.outer(data.xs, data.xs))
    K = np.asarray(matern_kernel(lags.ravel(), p)).reshape(lags.shape)
    K[np.diag_indices_from(K)] += sigma2
    try:
        factor = linalg.cho_factor(K, lower=True)
    except linalg.LinAlgError as e:
        raise NumericalError(f"K + sigma2*I is not positive definite: {e}") from e

    cross_lags = np.abs(np.subtract.outer(xstar, data.xs))
    Ks = np.asarray(matern_kernel(cross_lags.ravel(), p)).reshape(cross_lags.shape)
    mean = Ks @ linalg.cho_solve(factor, data.ys)
    reduction = np.einsum("ij,ji->i", Ks, linalg.cho_solve(factor, Ks.T))
    return mean, 1.0 - reduction


def _log_marginal_likelihood(fit: RegressionFit) -> float:
    assert fit.system is not None
    s2 = fit.sigma2
    N, size = fit.system.N, 2 * fit.m
    quad = (fit.system.sums.yty - fit.system.Xty @ fit.beta) / s2
    logdet = float(np.sum(np.log(fit.S + s2))) + (N - size) * math.log(s2)
    value = -0.5 * (quad + logdet + N * math.log(2.0 * math.pi))
    if not math.isfinite(value):
        raise NumericalError(f"log marginal likelihood is {value}")
    return value


def log_marginal_likelihood(
    rule: QuadratureRule,
    p: MaternParams,
    data: Dataset,
    sigma2: float,
    *,
    sums: TrigSums | None = None,
) -> float:
    """``log N(y | 0, XXᵀ + σ²I)`` via the inversion and determinant lemmas."""
    return _log_marginal_likelihood(fit(rule, p, data, sigma2, sums=sums))


class LikelihoodGradient(NamedTuple):
    nu: float
    rho: float
    sigma2: float

    def as_array(self) -> NDArray[np.float64]:
        return np.array([self.nu, self.rho, self.sigma2])


def _gradient(fit: RegressionFit) -> LikelihoodGradient:
    assert fit.system is not None
    s2 = fit.sigma2
    U, S, beta = fit.U, fit.S, fit.beta

    # γ_i = √(2w k̂) so ∂γ/∂θ = γ · ½ ∂log k̂/∂θ, and ∂(XXᵀ)/∂θ = X diag(2r) Xᵀ
    d_nu, d_rho = log_spectral_density_grad(fit.rule.nodes, fit.params)
    hat = (U**2) @ (S / (S + s2))
    grads = []
    for d in (d_nu, d_rho):
        r = 0.5 * np.concatenate([d, d])
        grads.append(float(r @ (beta**2 - hat)))

    # C⁻¹y = (y − Xβ̄)/σ², tr C⁻¹ = (N − Σ S/(S+σ²))/σ²
    resid_sq = fit.system.sums.yty - 2.0 * beta @ fit.system.Xty + beta @ (fit.system.XtX @ beta)
    trace = (fit.system.N - float(np.sum(S / (S + s2)))) / s2
    d_sigma2 = 0.5 * resid_sq / s2**2 - 0.5 * trace
    return LikelihoodGradient(grads[0], grads[1], float(d_sigma2))


def gradient_log_likelihood(
    rule: QuadratureRule,
    p: MaternParams,
    data: Dataset,
    sigma2: float,
    *,
    sums: TrigSums | None = None,
) -> LikelihoodGradient:
    """Gradient of ``log_marginal_likelihood`` in ``(ν, ρ, σ²)``."""
    if not rule.box.strictly_contains(p):
        raise DomainError(f"(nu={p.nu}, rho={p.rho}) must lie strictly inside the box")
    return _gradient(fit(rule, p, data, sigma2, sums=sums))


def dense_weight_space_solve(
    rule: QuadratureRule,
    gammas: ArrayLike,
    data: Dataset,
    sigma2: float,
) -> NDArray[np.float64]:
    """``(XᵀX + σ²I)⁻¹Xᵀy`` by QR of the augmented least-squares system."""
    _require_data(data)
    _require_sigma2(sigma2)
    X = design_matrix(rule, gammas, data.xs)
    size = X.shape[1]
    A = np.vstack([X, math.sqrt(sigma2) * np.eye(size)])
    b = np.concatenate([data.ys, np.zeros(size)])
    Q, R = linalg.qr(A, mode="economic")
    return linalg.solve_triangular(R, Q.T @ b)


class CGResult(NamedTuple):
    x: NDArray[np.float64]
    iterations: int
    converged: bool
    residual_norms: list[float]
    iterates: list[NDArray[np.float64]]


def low_rank_operator(
    rule: QuadratureRule,
    gammas: ArrayLike,
    xs: ArrayLike,
    sigma2: float,
    *,
    tol: float = NUFFT_TOL,
    force_fast: bool = False,
) -> LinearOperator:
    """``v ↦ X(Xᵀv) + σ²v`` by one analysis and one synthesis exponential sum."""
    _require_sigma2(sigma2)
    xs = np.asarray(xs, dtype=np.float64).ravel()
    check_locations(rule, xs)
    g = np.asarray(gammas, dtype=np.float64)
    freqs = 2.0 * math.pi * rule.nodes
    analysis = ExpSumPlan(xs, freqs, tol, force_fast=force_fast)
    synthesis = ExpSumPlan(freqs, xs, tol, force_fast=force_fast)

    def matvec(v: NDArray[np.float64]) -> NDArray[np.float64]:
        v = np.asarray(v, dtype=np.float64).ravel()
        sums = analysis.execute(v)
        # Xᵀv = [γ Re, γ Im]; X a = Re Σ γ(a_c − i a_s) e^{iωx}
        coeffs = g * (g * sums.real) - 1j * g * (g * sums.imag)
        return synthesis.execute(coeffs).real + sigma2 * v

    return LinearOperator((xs.size, xs.size), matvec=matvec, rmatvec=matvec, dtype=np.float64)


def cg_solve(
    operator: LinearOperator,
    rhs: ArrayLike,
    tol: float = 1e-10,
    *,
    maxiter: int | None = None,
    track: bool = False,
) -> CGResult:
    """Conjugate gradients; ``track`` records every iterate and its residual norm.

    On hitting ``maxiter`` the last iterate comes back with ``converged=False``.
    """
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol}")
    b = np.asarray(rhs, dtype=np.float64).ravel()
    iterates: list[NDArray[np.float64]] = []
    residuals: list[float] = []
    count = 0

    def callback(xk: NDArray[np.float64]) -> None:
        nonlocal count
        count += 1
        if track:
            iterates.append(xk.copy())
            residuals.append(float(np.linalg.norm(b - operator.matvec(xk))))

    x, info = cg(operator, b, rtol=tol, atol=0.0, maxiter=maxiter, callback=callback)
    if info < 0:
        raise NumericalError(f"CG breakdown (info={info})")
    if info > 0:
        logger.warning(f"CG stopped at {count} iterations without converging")
    return CGResult(x, count, info == 0, residuals, iterates)


@dataclass(frozen=True)
class FitStep:
    step: int
    nu: float
    rho: float
    sigma2: float
    log_likelihood: float
    gradient_norm: float


def fit_hyperparameters(
    rule: QuadratureRule,
    data: Dataset,
    init: MaternParams,
    sigma2: float,
    *,
    steps: int = 50,
    tol: float = NUFFT_TOL,
    force_fast: bool = False,
) -> list[FitStep]:
    """Box-constrained ascent on the log marginal likelihood over ``(ν, ρ, log σ²)``.

    The exponential sums are evaluated once; each step costs one ``O(m³)``
    eigendecomposition. Returns the initial point and every accepted step.
    """
    _require_sigma2(sigma2)
    box = rule.box
    if not box.contains(init):
        raise DomainError(f"initial (nu={init.nu}, rho={init.rho}) outside the box")
    sums = trig_sums(rule, data, tol=tol, force_fast=force_fast)
    logger.info(f"Exponential sums computed once in {sums.seconds:.3f}s")

    nu_pad = 1e-9 * max(box.nu_hi - box.nu_lo, 1.0)
    rho_pad = 1e-9 * max(box.rho_hi - box.rho_lo, 1.0)
    bounds = [
        (box.nu_lo + nu_pad, box.nu_hi - nu_pad),
        (box.rho_lo + rho_pad, box.rho_hi - rho_pad),
        tuple(math.log(v) for v in SIGMA2_BOUNDS),
    ]
    evaluated: dict[tuple[float, ...], tuple[float, NDArray[np.float64]]] = {}

    def evaluate(theta: NDArray[np.float64]) -> tuple[float, NDArray[np.float64]]:
        key = tuple(float(v) for v in theta)
        if key not in evaluated:
            nu, rho, log_s2 = key
            current = fit(rule, MaternParams(nu, rho), data, math.exp(log_s2), sums=sums)
            value = _log_marginal_likelihood(current)
            grad = _gradient(current).as_array()
            grad[2] *= current.sigma2
            if not np.all(np.isfinite(grad)):
                raise NumericalError(f"non-finite gradient at {key}")
            evaluated[key] = (value, grad)
        return evaluated[key]

    def record(theta: NDArray[np.float64]) -> FitStep:
        value, grad = evaluate(theta)
        step = FitStep(
            step=len(trajectory),
            nu=float(theta[0]),
            rho=float(theta[1]),
            sigma2=math.exp(float(theta[2])),
            log_likelihood=value,
            gradient_norm=float(np.linalg.norm(grad)),
        )
        logger.info(
            f"step {step.step}: nu={step.nu:.4f} rho={step.rho:.4f} "
            f"sigma2={step.sigma2:.4g} lml={value:.6f}"
        )
        return step

    theta0 = np.array([init.nu, init.rho, math.log(sigma2)])
    theta0 = np.clip(theta0, [b[0] for b in bounds], [b[1] for b in bounds])
    trajectory: list[FitStep] = []
    trajectory.append(record(theta0))
    if steps == 0:
        return trajectory

    def objective(theta: NDArray[np.float64]) -> tuple[float, NDArray[np.float64]]:
        value, grad = evaluate(theta)
        return -value, -grad

    def callback(theta: NDArray[np.float64]) -> None:
        trajectory.append(record(theta))

    optimize.minimize(
        objective,
        theta0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        callback=callback,
        options={"maxiter": steps},
    )
    return trajectory
