import math

import numpy as np
import pytest
from scipy import integrate

from specgp.errors import DomainError
from specgp.kernels import (
    HyperBox,
    MaternParams,
    chebyshev_nodes,
    hyper_grid,
    log_spectral_density_grad,
    log_spectral_density_table,
    matern_kernel,
    matern_spectral_density,
    spectral_density_derivative,
    spectral_tail_bound,
    tail_cutoff,
)


def test_kernel_is_one_at_zero_lag():
    assert matern_kernel(0.0, MaternParams(2.5, 0.3)) == 1.0


@pytest.mark.parametrize(
    "nu, closed_form",
    [
        (0.5, lambda s: np.exp(-s)),
        (1.5, lambda s: (1 + math.sqrt(3) * s) * np.exp(-math.sqrt(3) * s)),
        (2.5, lambda s: (1 + math.sqrt(5) * s + 5 * s**2 / 3) * np.exp(-math.sqrt(5) * s)),
    ],
)
def test_half_integer_closed_forms(nu, closed_form):
    rho = 0.5
    r = np.linspace(0.0, 3.0, 31)
    np.testing.assert_allclose(
        matern_kernel(r, MaternParams(nu, rho)), closed_form(r / rho), rtol=1e-12, atol=1e-15
    )


def test_kernel_value_at_half():
    value = matern_kernel(0.5, MaternParams(1.5, 0.5))
    expected = (1 + math.sqrt(3)) * math.exp(-math.sqrt(3))
    assert value == pytest.approx(expected, rel=1e-12)
    assert value == pytest.approx(0.483352, abs=1e-5)


def test_kernel_tail_underflows_cleanly():
    value = matern_kernel(10.0, MaternParams(1.5, 0.1))
    assert 0.0 <= value < 1e-10


def test_kernel_is_continuous_near_zero():
    p = MaternParams(2.0, 0.2)
    tiny = matern_kernel(np.array([1e-12, 1e-10, 1e-9]), p)
    np.testing.assert_allclose(tiny, 1.0, atol=1e-12)


def test_kernel_rejects_negative_lag():
    with pytest.raises(DomainError):
        matern_kernel(np.array([0.1, -0.2]), MaternParams(1.5, 0.3))


@pytest.mark.parametrize("nu, rho", [(0.0, 0.3), (-1.0, 0.3), (1.5, 0.0), (float("nan"), 0.3)])
def test_params_reject_nonpositive(nu, rho):
    with pytest.raises(DomainError):
        MaternParams(nu, rho)


def test_density_is_even():
    p = MaternParams(1.7, 0.23)
    xi = np.array([0.1, 1.0, 10.0])
    np.testing.assert_array_equal(matern_spectral_density(xi, p), matern_spectral_density(-xi, p))


def test_density_integrates_to_one():
    p = MaternParams(2.5, 0.3)
    total, _ = integrate.quad(
        lambda x: 2.0 * matern_spectral_density(x, p), 0.0, np.inf, epsabs=1e-13, limit=200
    )
    assert total == pytest.approx(1.0, abs=1e-8)


def test_density_matches_numerical_fourier_transform():
    p = MaternParams(1.5, 0.5)
    xi = 1.0
    # k is even, so its transform is 2∫₀^∞ k(d) cos(2πξd) dd
    half, _ = integrate.quad(
        lambda d: matern_kernel(d, p), 0.0, np.inf, weight="cos", wvar=2.0 * math.pi * xi, epsabs=1e-12
    )
    assert matern_spectral_density(xi, p) == pytest.approx(2.0 * half, rel=1e-6)


def test_density_table_matches_pointwise():
    nus = np.array([1.5, 2.25, 3.5])
    rhos = np.array([0.1, 0.3, 0.5])
    xi = np.linspace(0.0, 20.0, 11)
    table = np.exp(log_spectral_density_table(nus, rhos, xi))
    for row, (nu, rho) in enumerate(zip(nus, rhos)):
        np.testing.assert_allclose(table[row], matern_spectral_density(xi, MaternParams(nu, rho)), rtol=1e-13)


def test_density_derivative_matches_finite_difference():
    p = MaternParams(2.2, 0.35)
    xi = np.array([0.3, 1.1, 4.0])
    h = 1e-6
    fd = (matern_spectral_density(xi + h, p) - matern_spectral_density(xi - h, p)) / (2 * h)
    np.testing.assert_allclose(spectral_density_derivative(xi, p), fd, rtol=1e-6)


def test_log_density_gradient_matches_finite_difference():
    nu, rho = 2.2, 0.35
    xi = np.array([0.0, 0.7, 3.0, 12.0])
    d_nu, d_rho = log_spectral_density_grad(xi, MaternParams(nu, rho))

    def log_k(n, r):
        return np.log(matern_spectral_density(xi, MaternParams(n, r)))

    h = 1e-6
    fd_nu = (log_k(nu + h, rho) - log_k(nu - h, rho)) / (2 * h)
    fd_rho = (log_k(nu, rho + h) - log_k(nu, rho - h)) / (2 * h)
    np.testing.assert_allclose(d_nu, fd_nu, rtol=1e-6, atol=1e-7)
    np.testing.assert_allclose(d_rho, fd_rho, rtol=1e-6, atol=1e-7)


def test_tail_cutoff_inverts_tail_bound():
    p = MaternParams(1.5, 0.1)
    xi_max = tail_cutoff(p, 1e-6)
    assert spectral_tail_bound(xi_max, p) == pytest.approx(1e-6, rel=1e-10)


def test_tail_bound_dominates_true_tail():
    p = MaternParams(2.5, 0.3)
    xi_max = tail_cutoff(p, 1e-7)
    tail, _ = integrate.quad(lambda x: 2.0 * matern_spectral_density(x, p), xi_max, np.inf)
    assert tail <= 1e-7


def test_chebyshev_single_node_is_midpoint():
    np.testing.assert_array_equal(chebyshev_nodes(0.0, 2.0, 1), [1.0])


def test_chebyshev_two_nodes():
    np.testing.assert_allclose(chebyshev_nodes(-1.0, 1.0, 2), [-1 / math.sqrt(2), 1 / math.sqrt(2)], rtol=1e-15)


def test_chebyshev_nodes_symmetric_and_interior():
    nodes = chebyshev_nodes(0.1, 0.5, 3)
    assert np.all((nodes > 0.1) & (nodes < 0.5))
    assert np.all(np.diff(nodes) > 0)
    np.testing.assert_allclose(nodes + nodes[::-1], 0.6, rtol=1e-14)


def test_chebyshev_rejects_bad_arguments():
    with pytest.raises(DomainError):
        chebyshev_nodes(0.0, 1.0, 0)
    with pytest.raises(DomainError):
        chebyshev_nodes(1.0, 1.0, 3)


def test_hyper_grid_collapses_degenerate_range():
    np.testing.assert_array_equal(hyper_grid(2.5, 2.5, 10), [2.5])
    assert hyper_grid(1.5, 3.5, 10).size == 10


def test_box_parse_and_lag_max():
    box = HyperBox.parse("-1,1,1.5,3.5,0.1,0.5")
    assert box == HyperBox.reference_box()
    assert box.lag_max == 2.0
    assert box.as_tuple() == (-1.0, 1.0, 1.5, 3.5, 0.1, 0.5)


@pytest.mark.parametrize("text", ["-1,1,3.5,1.5,0.1,0.5", "1,-1,1.5,3.5,0.1,0.5", "a,b", "-1,1,1.5"])
def test_box_parse_rejects(text):
    with pytest.raises(DomainError):
        HyperBox.parse(text)


def test_box_contains():
    box = HyperBox()
    assert box.contains(MaternParams(1.5, 0.5))
    assert not box.strictly_contains(MaternParams(1.5, 0.5))
    assert box.strictly_contains(MaternParams(2.0, 0.3))
    assert not box.contains(MaternParams(4.0, 0.3))
    assert HyperBox(nu_lo=2.0, nu_hi=2.0, rho_lo=0.2, rho_hi=0.2).is_degenerate
