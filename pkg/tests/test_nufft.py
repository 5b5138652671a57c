import math

import numpy as np
import pytest

from specgp.errors import DomainError, NufftError
from specgp.nufft import ExpSumPlan, direct_exp_sums, fast_exp_sums


def _bound(c, tol):
    # absolute error scale of a type-3 sum
    return tol * float(np.sum(np.abs(c)))


def _max_error(plan, c, exact):
    return float(np.max(np.abs(plan.execute(c) - exact)))


@pytest.mark.parametrize("force_fast", [False, True])
def test_single_source_at_origin(force_fast):
    omega = np.array([-50.0, -1.0, 0.0, 3.0, 75.0])
    plan = ExpSumPlan([0.0], omega, 1e-10, force_fast=force_fast)
    assert plan.uses_fast_path == force_fast
    np.testing.assert_allclose(plan.execute([1.0]), np.ones(omega.size), atol=1e-8)


@pytest.mark.parametrize("force_fast", [False, True])
def test_matches_discrete_fourier_transform(force_fast, rng):
    n, dx = 64, 1.0 / 64
    x = np.arange(n) * dx
    omega = 2.0 * math.pi * np.arange(n) / (n * dx)
    c = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    plan = ExpSumPlan(x, omega, 1e-12, force_fast=force_fast)
    expected = n * np.fft.ifft(c)
    assert _max_error(plan, c, expected) <= _bound(c, 1e-12)


def test_fast_path_matches_direct(rng):
    x = rng.uniform(-1.0, 1.0, 10_000)
    omega = rng.uniform(-200.0, 200.0, 1_000)
    c = rng.standard_normal(x.size)
    plan = ExpSumPlan(x, omega, 1e-10, force_fast=True)
    assert plan.uses_fast_path
    assert plan.grid_size > 0
    assert _max_error(plan, c, direct_exp_sums(x, c, omega)) <= _bound(c, 1e-10)


@pytest.mark.slow
def test_fast_path_error_bound_over_random_instances():
    rng = np.random.default_rng(20240611)
    for _ in range(50):
        bandwidth = rng.uniform(50.0, 700.0)
        x = rng.uniform(-1.0, 1.0, 10_000)
        omega = rng.uniform(-bandwidth, bandwidth, 1_000)
        c = rng.standard_normal(x.size) + 1j * rng.standard_normal(x.size)
        exact = direct_exp_sums(x, c, omega)
        for tol in (1e-6, 1e-9, 1e-12):
            plan = ExpSumPlan(x, omega, tol, force_fast=True)
            assert _max_error(plan, c, exact) <= _bound(c, tol), (bandwidth, tol)


@pytest.mark.parametrize("tol", [1e-6, 1e-9, 1e-12])
def test_fast_path_error_bound_per_tolerance(tol, rng):
    x = rng.uniform(-1.0, 1.0, 3_000)
    omega = rng.uniform(-500.0, 500.0, 400)
    c = rng.standard_normal(x.size)
    plan = ExpSumPlan(x, omega, tol, force_fast=True)
    assert _max_error(plan, c, direct_exp_sums(x, c, omega)) <= _bound(c, tol)


def test_fast_path_with_large_offset_in_both_supports(rng):
    x = rng.uniform(3.0, 5.0, 2_000)
    omega = rng.uniform(400.0, 900.0, 300)
    c = rng.standard_normal(x.size) + 1j * rng.standard_normal(x.size)
    plan = ExpSumPlan(x, omega, 1e-8, force_fast=True)
    assert _max_error(plan, c, direct_exp_sums(x, c, omega)) <= _bound(c, 1e-8)


def test_sources_on_the_grid_edge(rng):
    # points at both ends of the support land at the outermost x-grid cells
    x = np.concatenate([[-1.0, 1.0], rng.uniform(-1.0, 1.0, 500), [-1.0, 1.0]])
    omega = rng.uniform(-300.0, 300.0, 200)
    c = rng.standard_normal(x.size)
    plan = ExpSumPlan(x, omega, 1e-12, force_fast=True)
    assert _max_error(plan, c, direct_exp_sums(x, c, omega)) <= _bound(c, 1e-12)


def test_conjugate_symmetry_for_real_coefficients(rng):
    x = rng.uniform(-1.0, 1.0, 500)
    w = rng.uniform(0.0, 300.0, 40)
    c = rng.standard_normal(x.size)
    out = fast_exp_sums(ExpSumPlan(x, np.concatenate([w, -w]), 1e-10, force_fast=True), c)
    np.testing.assert_allclose(out[40:], np.conj(out[:40]), rtol=0, atol=2 * _bound(c, 1e-10))


def test_zero_coefficients_give_exact_zero(rng):
    x = rng.uniform(-1.0, 1.0, 300)
    plan = ExpSumPlan(x, rng.uniform(-50.0, 50.0, 30), 1e-10, force_fast=True)
    assert np.all(plan.execute(np.zeros(x.size)) == 0)


def test_fast_path_is_linear(rng):
    x = rng.uniform(-1.0, 1.0, 400)
    omega = rng.uniform(-80.0, 80.0, 50)
    plan = ExpSumPlan(x, omega, 1e-10, force_fast=True)
    c1, c2 = rng.standard_normal(x.size), rng.standard_normal(x.size)
    combined = plan.execute(c1 + 2.0 * c2)
    scale = _bound(c1, 1e-10) + 2.0 * _bound(c2, 1e-10)
    np.testing.assert_allclose(
        combined, plan.execute(c1) + 2.0 * plan.execute(c2), rtol=0, atol=2 * scale
    )


def test_plan_is_reusable(rng):
    x = rng.uniform(-1.0, 1.0, 400)
    omega = rng.uniform(-80.0, 80.0, 50)
    plan = ExpSumPlan(x, omega, 1e-10, force_fast=True)
    c = rng.standard_normal(x.size)
    first = plan.execute(c)
    plan.execute(rng.standard_normal(x.size))
    np.testing.assert_array_equal(plan.execute(c), first)


def test_direct_path_below_threshold():
    plan = ExpSumPlan(np.linspace(-1, 1, 100), np.linspace(0, 10, 20))
    assert not plan.uses_fast_path
    assert plan.grid_size == 0


def test_empty_targets():
    plan = ExpSumPlan([0.0, 0.5], [], force_fast=True)
    assert plan.execute([1.0, 2.0]).shape == (0,)


@pytest.mark.parametrize("tol", [1e-15, 1e-3, 0.0])
def test_tolerance_out_of_range(tol):
    with pytest.raises(DomainError):
        ExpSumPlan([0.0], [1.0], tol)


def test_grid_cap_raises():
    with pytest.raises(NufftError) as exc:
        ExpSumPlan(np.linspace(-1, 1, 10), np.linspace(-1e5, 1e5, 10), force_fast=True, max_grid=1024)
    assert exc.value.grid_size > 1024


def test_wrong_coefficient_length():
    plan = ExpSumPlan([0.0, 1.0], [1.0])
    with pytest.raises(DomainError):
        plan.execute([1.0])


def test_non_finite_inputs_rejected():
    with pytest.raises(DomainError):
        ExpSumPlan([0.0, np.nan], [1.0])
