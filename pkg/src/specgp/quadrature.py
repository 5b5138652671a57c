"""Generalized quadrature over the Matérn integrand family.

Each integrand is ``φ(ξ) = 2k̂_{ν,ρ}(ξ) cos(2πξt)`` for ``(ν, ρ, t)`` on a
Chebyshev grid over the hyperparameter box and the lag interval. A rule
``(ξ_i, w_i)`` is good when ``Σ w_i φ(ξ_i)`` reproduces ``k_{ν,ρ}(t)`` for every
integrand. Construction runs in stages:

1. ``build_integrand_family``: tail cut ``Ξ_max`` and a converged composite
   Gauss-Legendre grid on ``[0, Ξ_max]``.
2. ``select_nodes``: numerical rank of the √w-scaled family from a
   Khatri-Rao sketch, nodes from the column pivots of its row basis.
3. ``solve_weights``: nonnegative least squares on a working set of
   integrands, grown with the worst rows of the full residual table.
4. ``refine_rule``: node elimination with bounded Gauss-Newton polish.
5. ``validate_rule``: pointwise error on an independent uniform grid.
"""

from __future__ import annotations

import math
from contextlib import ExitStack, contextmanager
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, NamedTuple, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg, optimize

from .config import EPS_MAX, EPS_MIN
from .errors import BuildError, DomainError
from .kernels import (
    FOUR_PI_SQ,
    HyperBox,
    MaternParams,
    chebyshev_nodes,
    hyper_grid,
    log_spectral_density_table,
    matern_kernel,
    tail_cutoff,
)
from .logger import get_logger
from .parallel import chunks, thread_map
from .rule import QuadratureRule
from .stages import BuildReport, StageHook, default_hooks

logger = get_logger("quadrature")

PANEL_ORDER = 16
GRADED_LEVELS = 4
MAX_DOUBLINGS = 6
M_CAP = 200
VALIDATION_GRID = (200, 40, 40)

# sketch partials are reduced over this many fixed groups, whatever the thread count
_GROUPS = 8
_BLOCK = 256
_WORKING_PAIRS = 16
_WORKING_LAGS = 64
_EXCHANGE = 2048


def composite_gauss_legendre(
    breaks: ArrayLike, order: int = PANEL_ORDER
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Gauss-Legendre nodes and weights on every panel ``[breaks[k], breaks[k+1]]``."""
    breaks = np.asarray(breaks, dtype=np.float64)
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * np.diff(breaks)
    mid = 0.5 * (breaks[1:] + breaks[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _panel_breaks(xi_max: float, width: float) -> NDArray[np.float64]:
    # geometric panels toward 0 inside the first panel, uniform ones after
    first = min(width, xi_max)
    graded = first * 0.5 ** np.arange(GRADED_LEVELS, 0, -1)
    n_uniform = max(int(math.ceil((xi_max - first) / width)), 0)
    uniform = np.linspace(first, xi_max, n_uniform + 1) if n_uniform else np.array([first])
    return np.concatenate([[0.0], graded, uniform])


def _spaced_indices(size: int, count: int) -> NDArray[np.intp]:
    count = min(size, count)
    return np.unique(np.rint(np.linspace(0, size - 1, count)).astype(np.intp))


class IntegrandFamily:
    """Integrands ``2k̂_{ν,ρ}(ξ) cos(2πξt)`` over a ``(ν, ρ, t)`` grid.

    Integrand ``idx`` is the pair ``idx // n_lags`` (row-major over ``nus`` then
    ``rhos``) at lag ``idx % n_lags``. Nothing of size ``p²n`` by fine-grid is
    tabulated; rows are produced on demand.
    """

    def __init__(
        self,
        box: HyperBox,
        epsilon: float,
        nus: NDArray[np.float64],
        rhos: NDArray[np.float64],
        lags: NDArray[np.float64],
        xi: NDArray[np.float64],
        w: NDArray[np.float64],
        xi_max: float,
    ) -> None:
        self.box = box
        self.epsilon = epsilon
        self.nus = nus
        self.rhos = rhos
        self.lags = lags
        self.xi = xi
        self.w = w
        self.xi_max = xi_max
        self.pair_nu = np.repeat(nus, rhos.size)
        self.pair_rho = np.tile(rhos, nus.size)

    @property
    def n_pairs(self) -> int:
        return int(self.pair_nu.size)

    @property
    def n_lags(self) -> int:
        return int(self.lags.size)

    @property
    def n_integrands(self) -> int:
        return self.n_pairs * self.n_lags

    @property
    def n_fine(self) -> int:
        return int(self.xi.size)

    def split(self, idx: ArrayLike) -> tuple[NDArray[np.intp], NDArray[np.intp]]:
        pair, lag = np.divmod(np.asarray(idx, dtype=np.intp), self.n_lags)
        return pair, lag

    def density(
        self, pairs: ArrayLike, xi: ArrayLike | None = None
    ) -> NDArray[np.float64]:
        """``2k̂`` for the given pair indices (rows) at ``xi`` (columns)."""
        pairs = np.asarray(pairs, dtype=np.intp)
        xi = self.xi if xi is None else xi
        return 2.0 * np.exp(
            log_spectral_density_table(self.pair_nu[pairs], self.pair_rho[pairs], xi)
        )

    def rows(self, idx: ArrayLike, xi: ArrayLike | None = None) -> NDArray[np.float64]:
        pair, lag = self.split(idx)
        xi = self.xi if xi is None else np.asarray(xi, dtype=np.float64)
        return self.density(pair, xi) * np.cos(2.0 * math.pi * np.outer(self.lags[lag], xi))

    def row_derivatives(self, idx: ArrayLike, xi: ArrayLike) -> NDArray[np.float64]:
        """``dφ/dξ`` for the given integrands at ``xi``."""
        pair, lag = self.split(idx)
        xi = np.asarray(xi, dtype=np.float64)
        nu = self.pair_nu[pair][:, None]
        rho = self.pair_rho[pair][:, None]
        t = self.lags[lag][:, None]
        q = 2.0 * nu / rho**2 + FOUR_PI_SQ * xi[None, :] ** 2
        arg = 2.0 * math.pi * t * xi[None, :]
        log_slope = -(nu + 0.5) * 2.0 * FOUR_PI_SQ * xi[None, :] / q
        return self.density(pair, xi) * (
            log_slope * np.cos(arg) - 2.0 * math.pi * t * np.sin(arg)
        )

    @cached_property
    def target_table(self) -> NDArray[np.float64]:
        """``k_{ν,ρ}(t)`` for every pair (rows) and lag (columns)."""

        def block(sl: slice) -> NDArray[np.float64]:
            return np.stack(
                [
                    np.asarray(matern_kernel(self.lags, MaternParams(nu, rho)))
                    for nu, rho in zip(self.pair_nu[sl], self.pair_rho[sl])
                ]
            )

        return np.vstack(thread_map(block, chunks(self.n_pairs, _BLOCK)))

    def targets(self, idx: ArrayLike) -> NDArray[np.float64]:
        pair, lag = self.split(idx)
        return self.target_table[pair, lag]

    def working_rows(self) -> NDArray[np.intp]:
        """A spread subset of integrands, corners and both lag endpoints included."""
        nu_idx = _spaced_indices(self.nus.size, _WORKING_PAIRS)
        rho_idx = _spaced_indices(self.rhos.size, _WORKING_PAIRS)
        lag_idx = _spaced_indices(self.n_lags, _WORKING_LAGS)
        pairs = (nu_idx[:, None] * self.rhos.size + rho_idx[None, :]).ravel()
        return (pairs[:, None] * self.n_lags + lag_idx[None, :]).ravel()

    def residual_table(
        self, nodes: ArrayLike, weights: ArrayLike
    ) -> NDArray[np.float64]:
        """``Σ w_i φ(ξ_i) − k(t)`` for every integrand, shaped ``(n_pairs, n_lags)``."""
        nodes = np.asarray(nodes, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        cw = weights[:, None] * np.cos(2.0 * math.pi * np.outer(nodes, self.lags))
        targets = self.target_table

        def block(sl: slice) -> NDArray[np.float64]:
            pairs = np.arange(sl.start, sl.stop)
            return self.density(pairs, nodes) @ cw - targets[sl]

        return np.vstack(thread_map(block, chunks(self.n_pairs, _BLOCK)))

    def max_residual(self, nodes: ArrayLike, weights: ArrayLike) -> tuple[float, int]:
        table = np.abs(self.residual_table(nodes, weights))
        flat = int(np.argmax(table))
        return float(table.flat[flat]), flat


def _convergence_pairs(
    nus: NDArray[np.float64], rhos: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """The corners, every ν at the smallest ρ, and the central grid pair."""
    pairs = {(float(nu), float(rho)) for nu in (nus[0], nus[-1]) for rho in (rhos[0], rhos[-1])}
    rho_min = float(rhos.min())
    pairs.update((float(nu), rho_min) for nu in nus)
    pairs.add((float(nus[nus.size // 2]), float(rhos[rhos.size // 2])))
    ordered = sorted(pairs)
    return (
        np.array([nu for nu, _ in ordered]),
        np.array([rho for _, rho in ordered]),
    )


def build_integrand_family(
    box: HyperBox,
    p: int,
    n: int,
    epsilon: float,
    *,
    lags: ArrayLike | None = None,
    panel_order: int = PANEL_ORDER,
) -> IntegrandFamily:
    if p < 1 or n < 1:
        raise DomainError(f"need p >= 1 and n >= 1, got p={p}, n={n}")
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")

    nus = hyper_grid(box.nu_lo, box.nu_hi, p)
    rhos = hyper_grid(box.rho_lo, box.rho_hi, p)
    if lags is None:
        lag_grid = chebyshev_nodes(0.0, box.lag_max, n)
        if n >= 2:
            # first-kind nodes never touch the ends; zero lag carries k(0) = 1
            lag_grid = np.concatenate([[0.0], lag_grid, [box.lag_max]])
    else:
        lag_grid = np.asarray(lags, dtype=np.float64).ravel()
        if np.any(lag_grid < 0) or np.any(lag_grid > box.lag_max):
            raise DomainError(f"lags must lie in [0, {box.lag_max}]")

    # tail bound grows as rho shrinks, so the smallest rho decides per nu
    rho_min = float(rhos.min())
    xi_max = max(tail_cutoff(MaternParams(float(nu), rho_min), epsilon / 10) for nu in nus)
    xi_max = max(xi_max, 1.0 / box.lag_max)

    sample_nu, sample_rho = _convergence_pairs(nus, rhos)

    def integrals(width: float) -> tuple[NDArray, NDArray, NDArray]:
        xi, w = composite_gauss_legendre(_panel_breaks(xi_max, width), panel_order)
        dens = 2.0 * np.exp(log_spectral_density_table(sample_nu, sample_rho, xi))
        cos = np.cos(2.0 * math.pi * np.outer(lag_grid, xi))
        return xi, w, (dens * w) @ cos.T

    width = min(1.0 / box.lag_max, xi_max)
    xi, w, current = integrals(width)
    change = math.inf
    for _ in range(MAX_DOUBLINGS):
        width /= 2.0
        xi_fine, w_fine, finer = integrals(width)
        change = float(np.max(np.abs(finer - current)))
        if change <= epsilon / 20:
            break
        xi, w, current = xi_fine, w_fine, finer
    else:
        raise BuildError(
            "integrand_family",
            f"fine grid not converged after {MAX_DOUBLINGS} doublings "
            f"(last change {change:.3e})",
        )

    exact = np.stack(
        [
            np.asarray(matern_kernel(lag_grid, MaternParams(float(nu), float(rho))))
            for nu, rho in zip(sample_nu, sample_rho)
        ]
    )
    deviation = float(np.max(np.abs(current - exact)))
    if deviation > epsilon / 5:
        raise BuildError(
            "integrand_family",
            f"fine grid misses the kernel by {deviation:.3e} > {epsilon / 5:.3e}",
        )

    logger.debug(
        f"Family {nus.size}x{rhos.size}x{lag_grid.size}, Xi_max={xi_max:.4g}, "
        f"{xi.size} fine nodes, grid change {change:.2e}, deviation {deviation:.2e}"
    )
    return IntegrandFamily(box, epsilon, nus, rhos, lag_grid, xi, w, xi_max)


def _sketch(fam: IntegrandFamily, k: int, seed: int) -> NDArray[np.float64]:
    rng = np.random.Generator(np.random.PCG64(seed))
    g = rng.standard_normal((k, fam.n_pairs))
    h = rng.standard_normal((k, fam.n_lags))

    def group(sl: slice) -> NDArray[np.float64]:
        acc = np.zeros((k, fam.n_fine))
        for sub in chunks(sl.stop - sl.start, _BLOCK):
            pairs = np.arange(sl.start + sub.start, sl.start + sub.stop)
            acc += g[:, pairs] @ fam.density(pairs)
        return acc

    size = max(1, math.ceil(fam.n_pairs / _GROUPS))
    partials = thread_map(group, chunks(fam.n_pairs, size))
    gk = partials[0]
    for part in partials[1:]:
        gk += part
    hc = h @ np.cos(2.0 * math.pi * np.outer(fam.lags, fam.xi))
    return gk * hc / math.sqrt(k)


def select_nodes(
    fam: IntegrandFamily,
    epsilon: float,
    *,
    m_cap: int = M_CAP,
    seed: int = 0,
    threshold_scale: float = 1.0,
) -> NDArray[np.intp]:
    """Indices into ``fam.xi`` of the selected nodes, ascending."""
    k = 2 * m_cap + 16
    if fam.n_integrands <= k:
        Y = fam.rows(np.arange(fam.n_integrands))
    else:
        Y = _sketch(fam, k, seed)
    # per-integrand scale: YᵀY sums over every integrand
    Y = Y / math.sqrt(fam.n_integrands)

    sqrt_w = np.sqrt(fam.w)
    _, s, vt = linalg.svd(Y * sqrt_w, full_matrices=False)
    tau = threshold_scale * epsilon / (4.0 * float(np.linalg.norm(sqrt_w)))
    rank = max(int(np.count_nonzero(s > tau)), 1)
    if rank > m_cap:
        raise BuildError(
            "select_nodes", f"numerical rank {rank} exceeds the node cap {m_cap}"
        )

    _, piv = linalg.qr(vt[:rank], mode="r", pivoting=True)
    idx = np.sort(piv[:rank])
    logger.debug(f"Rank {rank} at threshold {tau:.3e} (sigma_max {s[0]:.3e})")
    return idx


class WeightSolve(NamedTuple):
    weights: NDArray[np.float64]
    residual: float
    rows: NDArray[np.intp]


def solve_weights(
    fam: IntegrandFamily, nodes: ArrayLike, *, max_rounds: int = 4
) -> WeightSolve:
    """Nonnegative weights for ``nodes``; zero weights mark removable nodes."""
    nodes = np.asarray(nodes, dtype=np.float64)
    if nodes.size == 0 or np.any(nodes <= 0) or np.unique(nodes).size != nodes.size:
        raise DomainError("nodes must be distinct and positive")

    epsilon = fam.epsilon
    rows = fam.working_rows()
    weights = np.zeros_like(nodes)
    residual = math.inf
    for round_ in range(max_rounds):
        A = fam.rows(rows, nodes)
        scale = np.linalg.norm(A, axis=0)
        scale[scale == 0] = 1.0
        u, _ = optimize.nnls(A / scale, fam.targets(rows), maxiter=50 * nodes.size)
        weights = u / scale

        table = np.abs(fam.residual_table(nodes, weights))
        residual = float(table.max())
        logger.debug(f"NNLS round {round_}: {rows.size} rows, residual {residual:.3e}")
        if residual <= epsilon / 4 or round_ == max_rounds - 1:
            break
        worst = np.argsort(table.ravel(), kind="stable")[::-1][:_EXCHANGE]
        fresh = np.setdiff1d(worst, rows)
        if fresh.size == 0:
            break
        rows = np.union1d(rows, fresh)

    if residual > epsilon / 2:
        raise BuildError(
            "solve_weights",
            f"residual {residual:.3e} exceeds {epsilon / 2:.3e} with {nodes.size} nodes",
        )
    return WeightSolve(weights, residual, rows)


def _polish(
    fam: IntegrandFamily,
    rows: NDArray[np.intp],
    targets: NDArray[np.float64],
    nodes: NDArray[np.float64],
    weights: NDArray[np.float64],
) -> tuple[NDArray[np.float64], NDArray[np.float64]] | None:
    m = nodes.size

    def residual(theta: NDArray[np.float64]) -> NDArray[np.float64]:
        return fam.rows(rows, theta[:m]) @ theta[m:] - targets

    def jacobian(theta: NDArray[np.float64]) -> NDArray[np.float64]:
        xi, w = theta[:m], theta[m:]
        return np.hstack([fam.row_derivatives(rows, xi) * w, fam.rows(rows, xi)])

    lower = np.zeros(2 * m)
    upper = np.concatenate([np.full(m, 1.5 * fam.xi_max), np.full(m, np.inf)])
    x0 = np.clip(np.concatenate([nodes, weights]), lower, upper)
    sol = optimize.least_squares(
        residual,
        x0,
        jac=jacobian,
        bounds=(lower, upper),
        method="trf",
        x_scale="jac",
        max_nfev=50,
    )
    xi, w = sol.x[:m], sol.x[m:]
    order = np.argsort(xi, kind="stable")
    xi, w = xi[order], w[order]
    if np.any(w <= 0) or np.any(xi <= 0) or np.any(np.diff(xi) <= 0):
        return None
    return xi, w


def refine_rule(
    rule: QuadratureRule,
    fam: IntegrandFamily,
    *,
    max_removals: int = 16,
    candidates: int = 3,
    rows: NDArray[np.intp] | None = None,
) -> QuadratureRule:
    """Drop nodes one at a time while a polished rule keeps residual ≤ ε/2.

    Returns ``rule`` itself when no removal is accepted.
    """
    epsilon = rule.epsilon
    start, _ = fam.max_residual(rule.nodes, rule.weights)
    if start > 10 * epsilon:
        logger.warning(f"Refinement skipped: residual {start:.3e} above 10*eps")
        return rule

    rows = fam.working_rows() if rows is None else rows
    targets = fam.targets(rows)
    nodes, weights = rule.nodes.copy(), rule.weights.copy()
    removed = 0
    while removed < max_removals and nodes.size > 1:
        significance = weights * np.linalg.norm(fam.rows(rows, nodes), axis=0)
        accepted = None
        for cand in np.argsort(significance, kind="stable")[:candidates]:
            keep = np.delete(np.arange(nodes.size), cand)
            trial = _polish(fam, rows, targets, nodes[keep], weights[keep])
            if trial is None:
                continue
            residual, _ = fam.max_residual(*trial)
            if residual <= epsilon / 2:
                accepted = trial
                break
        if accepted is None:
            logger.info(f"Refinement stopped at m={nodes.size}: no removable node")
            break
        nodes, weights = accepted
        removed += 1
        logger.debug(f"Removed a node, m={nodes.size}")

    if removed == 0:
        return rule
    return QuadratureRule(
        nodes, weights, rule.box, epsilon, loose=rule.loose, meta=dict(rule.meta)
    )


@dataclass(frozen=True)
class ValidationReport:
    max_error: float
    argmax: tuple[float, float, float]
    grid: tuple[int, int, int]


def validate_rule(
    rule: QuadratureRule,
    box: HyperBox | None = None,
    grid_density: Sequence[int] = (50, 20, 20),
) -> ValidationReport:
    """Max of ``|k(d) − Σ 2w_i k̂(ξ_i) cos(2πξ_i d)|`` over a uniform ``(d, ν, ρ)`` grid.

    ``argmax`` is the ``(d, ν, ρ)`` where it occurs.
    """
    box = box or rule.box
    n_d, n_nu, n_rho = grid_density
    d = np.linspace(0.0, box.lag_max, n_d)
    nus = np.unique(np.linspace(box.nu_lo, box.nu_hi, n_nu))
    rhos = np.unique(np.linspace(box.rho_lo, box.rho_hi, n_rho))
    pair_nu = np.repeat(nus, rhos.size)
    pair_rho = np.tile(rhos, nus.size)
    cw = rule.weights[:, None] * np.cos(2.0 * math.pi * np.outer(rule.nodes, d))

    def block(sl: slice) -> NDArray[np.float64]:
        dens = 2.0 * np.exp(log_spectral_density_table(pair_nu[sl], pair_rho[sl], rule.nodes))
        exact = np.stack(
            [
                np.asarray(matern_kernel(d, MaternParams(nu, rho)))
                for nu, rho in zip(pair_nu[sl], pair_rho[sl])
            ]
        )
        return np.abs(dens @ cw - exact)

    errors = np.vstack(thread_map(block, chunks(pair_nu.size, 64)))
    pair, lag = divmod(int(np.argmax(errors)), d.size)
    return ValidationReport(
        max_error=float(errors[pair, lag]),
        argmax=(float(d[lag]), float(pair_nu[pair]), float(pair_rho[pair])),
        grid=(d.size, nus.size, rhos.size),
    )


def build_rule(
    box: HyperBox,
    epsilon: float,
    p: int = 100,
    n: int = 200,
    *,
    hooks: list[StageHook] | None = None,
    m_cap: int = M_CAP,
    seed: int = 0,
    refine: bool = True,
    validation_grid: Sequence[int] = VALIDATION_GRID,
    report: BuildReport | None = None,
) -> QuadratureRule:
    """Build a rule certified to ``epsilon`` (``loose`` when only ``2·epsilon``)."""
    if not EPS_MIN <= epsilon <= EPS_MAX:
        raise DomainError(f"epsilon must lie in [{EPS_MIN}, {EPS_MAX}], got {epsilon}")
    hooks = default_hooks() if hooks is None else hooks
    report = BuildReport() if report is None else report

    @contextmanager
    def stage(name: str) -> Iterator[None]:
        with ExitStack() as stack:
            for hook in hooks:
                stack.enter_context(hook(name, report))
            try:
                yield
            except BuildError:
                raise
            except Exception as e:
                raise BuildError(name, str(e)) from e

    with stage("integrand_family"):
        fam = build_integrand_family(box, p, n, epsilon)
        report.node_counts["integrand_family"] = fam.n_fine

    scales = (1.0, 0.25, 0.0625)
    for attempt, scale in enumerate(scales):
        try:
            with stage("select_nodes"):
                idx = select_nodes(
                    fam, epsilon, m_cap=m_cap, seed=seed, threshold_scale=scale
                )
                report.node_counts["select_nodes"] = int(idx.size)
            with stage("solve_weights"):
                solved = solve_weights(fam, fam.xi[idx])
                keep = solved.weights > 0
                report.node_counts["solve_weights"] = int(np.count_nonzero(keep))
            break
        except BuildError as e:
            if e.stage != "solve_weights" or attempt == len(scales) - 1:
                raise
            report.notes.append(f"retry with rank threshold x{scales[attempt + 1]}")
            logger.warning(f"Node set insufficient ({e}), retrying with a tighter threshold")

    report.residual = solved.residual
    meta = {"p": str(p), "n": str(n), "seed": str(seed)}
    rule = QuadratureRule(fam.xi[idx][keep], solved.weights[keep], box, epsilon, meta=meta)

    refined = rule
    if refine:
        with stage("refine_rule"):
            refined = refine_rule(rule, fam, rows=solved.rows)
            report.node_counts["refine_rule"] = refined.m

    with stage("validate_rule"):
        check = validate_rule(refined, box, validation_grid)
        if check.max_error >= 2 * epsilon and refined is not rule:
            report.notes.append("refined rule failed validation, kept the unrefined one")
            refined = rule
            check = validate_rule(rule, box, validation_grid)
        if check.max_error >= 2 * epsilon:
            raise BuildError(
                "validate_rule",
                f"max error {check.max_error:.3e} at (d, nu, rho)={check.argmax}",
            )

    report.max_error = check.max_error
    report.argmax = check.argmax
    report.loose = check.max_error >= epsilon
    logger.info(
        f"Built rule with m={refined.m}, max error {check.max_error:.3e}"
        + (" (loose)" if report.loose else "")
    )
    return QuadratureRule(
        refined.nodes,
        refined.weights,
        box,
        epsilon,
        loose=report.loose,
        meta=refined.meta,
    )
