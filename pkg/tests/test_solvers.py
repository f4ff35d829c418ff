import math

import numpy as np
import pytest

from sdelab import (
    Coefficient,
    PathLattice,
    RngStream,
    SdeModel,

    euler_maruyama,
    frozen_coefficient_step,
    milstein,
    sample_brownian_lattice,
    solve_until_exit,
    transformed_milstein,
)
from sdelab.errors import DivergenceError, ValidationError
from sdelab.estimation import fit_rate
from sdelab.solvers import make_stepper

def const_model(mu, sigma, x0=0.0, horizon=1.0):
    return SdeModel(drift=Coefficient.constant(mu),
                    diffusion=Coefficient.constant(sigma), x0=x0, horizon=horizon)

@pytest.fixture(scope="module")
def driver():
    times = np.linspace(0.0, 1.0, 65)
    return sample_brownian_lattice(RngStream(100, ("drv",)), times, paths=200)

def test_euler_zero_coefficients(driver):
    path = euler_maruyama(const_model(0.0, 0.0), 1.5, driver)
    assert np.array_equal(path.values, np.full_like(path.values, 1.5))

def test_euler_constant_drift_exact(driver):
    path = euler_maruyama(const_model(2.0, 0.0), 0.0, driver)
    expected = 2.0 * driver.times
    assert np.max(np.abs(path.values - expected)) <= 1e-12

def test_euler_additive_exact(driver):
    # from zero the recursion reproduces the cumulative sums bit for bit
    path = euler_maruyama(const_model(0.0, 1.0), 0.0, driver)
    assert np.array_equal(path.values, driver.values)
    # a nonzero start shifts the association order; still exact to rounding
    path = euler_maruyama(const_model(0.0, 1.0), 0.5, driver)
    assert np.max(np.abs(path.values - (0.5 + driver.values))) <= 1e-14

def test_milstein_equals_euler_for_constant_sigma(ou_model, driver):
    a = euler_maruyama(ou_model, 0.0, driver)
    b = milstein(ou_model, 0.0, driver)
    assert np.array_equal(a.values, b.values)

def test_milstein_single_step_multiplicative():
    model = SdeModel(drift=Coefficient.constant(0.0),
                     diffusion=Coefficient.polynomial([0.0, 1.0]),
                     x0=1.0, horizon=1.0)
    w = 0.7
    drv = PathLattice([0.0, 1.0], [0.0, w])
    path = milstein(model, 1.0, drv)
    assert path.values[-1] == pytest.approx(1.0 + w + 0.5 * (w * w - 1.0), abs=1e-14)

def test_milstein_zero_sigma_constant(driver):
    path = milstein(const_model(0.0, 0.0), 0.3, driver)
    assert np.array_equal(path.values, np.full_like(path.values, 0.3))

def test_determinism_bitwise(indicator_model, indicator_transform, driver):
    a = transformed_milstein(indicator_model, indicator_transform, 0.0, driver)
    b = transformed_milstein(indicator_model, indicator_transform, 0.0, driver)
    assert np.array_equal(a.values, b.values)

def test_transformed_identity_matches_milstein(ou_model, driver):
    from sdelab.transforms import identity_transform
    a = milstein(ou_model, 0.0, driver)
    b = transformed_milstein(ou_model, identity_transform(), 0.0, driver)
    assert np.max(np.abs(a.values - b.values)) <= 1e-14

def test_transformed_additive_roundtrip(brownian_model, indicator_transform):
    times = np.linspace(0.0, 1.0, 257)
    drv = sample_brownian_lattice(RngStream(101, ("add",)), times, paths=100)
    path = transformed_milstein(brownian_model, indicator_transform, 0.0, drv)
    g = indicator_transform
    # the carried pair stays consistent: inverting G(x) returns x to 1e-8
    back = g.invert(np.asarray(g.value(path.values.ravel())))
    assert np.max(np.abs(back - path.values.ravel())) <= 1e-8

def test_transformed_self_convergence_rate(indicator_model, indicator_transform):
    """Self-convergence slope of the reference scheme on the jump model."""
    reps = 2000
    ms = [16, 32, 64, 128, 256, 512]
    points = []
    for m in ms:
        times = np.linspace(0.0, 1.0, 2 * m + 1)
        drv = sample_brownian_lattice(RngStream(102, ("sc", m)), times, paths=reps)
        fine = transformed_milstein(indicator_model, indicator_transform, 0.0, drv)
        coarse_driver = PathLattice(times[::2], drv.values[:, ::2])
        coarse = transformed_milstein(indicator_model, indicator_transform, 0.0,
                                      coarse_driver)
        diff = np.abs(fine.final() - coarse.final())
        points.append((m, float(np.mean(diff)),
                       float(np.std(diff, ddof=1) / math.sqrt(reps))))
    rate = fit_rate(points)
    assert rate.slope <= -0.7

def test_scheme_matches_independent_ou_recursion(ou_model):
    """Oracle: the exact discrete recursion x_{j+1} = x_j - x_j dt + dW_j."""
    times = np.linspace(0.0, 1.0, 129)
    drv = sample_brownian_lattice(RngStream(105, ("ou",)), times, paths=50)
    path = euler_maruyama(ou_model, 0.0, drv)
    x = np.zeros(drv.values.shape[0])
    expected = [x]
    dt = times[1] - times[0]
    for j in range(times.size - 1):
        x = x - x * dt + (drv.values[:, j + 1] - drv.values[:, j])
        expected.append(x)
    expected = np.stack(expected, axis=-1)
    assert np.max(np.abs(path.values - expected)) <= 1e-14
    assert np.array_equal(path.values, milstein(ou_model, 0.0, drv).values)


def test_milstein_order_one_for_lipschitz_model(ou_model):
    """Self-convergence slope <= -0.9 (sigma constant: Euler coincides)."""
    reps = 2000
    points = []
    for m in [16, 32, 64, 128, 256]:
        times = np.linspace(0.0, 1.0, 2 * m + 1)
        drv = sample_brownian_lattice(RngStream(106, ("ord", m)), times, paths=reps)
        fine = milstein(ou_model, 0.0, drv)
        coarse = milstein(ou_model, 0.0, PathLattice(times[::2], drv.values[:, ::2]))
        diff = np.abs(fine.final() - coarse.final())
        points.append((m, float(np.mean(diff)),
                       float(np.std(diff, ddof=1) / math.sqrt(reps))))
    rate = fit_rate(points)
    assert rate.slope <= -0.9


def test_divergence_error():
    model = SdeModel(drift=Coefficient.polynomial([0.0, 0.0, 0.0, 1e150]),
                     diffusion=Coefficient.constant(0.0), x0=1e130, horizon=1.0)
    drv = PathLattice([0.0, 0.5, 1.0], [0.0, 0.1, 0.2])
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError) as exc:
            euler_maruyama(model, 1e130, drv)
    assert exc.value.step_index is not None

def test_frozen_coefficient_step_examples():
    seg = PathLattice([0.5, 0.625, 0.75], [1.0, 1.3, 0.9])
    model = const_model(5.0, 0.0)
    vals = frozen_coefficient_step(model, 2.0, 0.5, seg)
    assert np.array_equal(vals, np.full(3, 2.0))

    model = const_model(0.0, 1.0)
    vals = frozen_coefficient_step(model, 0.0, 0.5, seg)
    assert vals == pytest.approx([0.0, 0.3, -0.1])

    model = SdeModel(drift=Coefficient.constant(0.0),
                     diffusion=Coefficient.polynomial([2.0, 1.0]),
                     x0=0.0, horizon=1.0)
    vals = frozen_coefficient_step(model, 1.0, 0.5, seg)
    assert vals == pytest.approx([1.0, 1.0 + 3.0 * 0.3, 1.0 - 3.0 * 0.1])

def test_frozen_step_requires_matching_start():
    seg = PathLattice([0.5, 0.75], [1.0, 0.9])
    with pytest.raises(ValidationError):
        frozen_coefficient_step(const_model(0.0, 1.0), 0.0, 0.25, seg)

def test_exit_never_for_constant_path():
    drv = PathLattice(np.linspace(0, 1, 11), np.zeros(11))
    path, tau = solve_until_exit(const_model(0.0, 0.0), 0.0, drv, (-1.0, 1.0))
    assert tau == 1.0
    assert np.array_equal(path.values, np.zeros(11))

def test_exit_deterministic_drift():
    drv = PathLattice(np.linspace(0, 1, 101), np.zeros(101))
    path, tau = solve_until_exit(const_model(1.0, 0.0), 0.0, drv, (-1.0, 0.5))
    assert tau == pytest.approx(0.5, abs=0.011)
    # frozen at the exit value afterwards
    k = int(np.searchsorted(drv.times, tau))
    assert np.all(path.values[k:] == path.values[k])

def test_exit_requires_interior_start():
    drv = PathLattice([0.0, 1.0], [0.0, 0.0])
    with pytest.raises(ValidationError):
        solve_until_exit(const_model(0.0, 0.0), 2.0, drv, (-1.0, 1.0))

def test_exit_probability_scaling(indicator_model):
    """P(exit of (-dt^{1/4}, dt^{1/4}) before dt) drops fast in dt."""
    reps = 100_000
    probs = []
    for k, delta in enumerate((2.0**-4, 2.0**-6)):
        times = np.linspace(0.0, delta, 257)
        drv = sample_brownian_lattice(RngStream(103, ("exit", k)), times, paths=reps)
        half = delta**0.25
        model = SdeModel(drift=indicator_model.drift, diffusion=indicator_model.diffusion,
                         x0=0.0, horizon=delta)
        _, tau = solve_until_exit(model, 0.0, drv, (-half, half))
        probs.append(float(np.mean(tau < delta)))
    assert probs[0] / max(probs[1], 1e-12) >= 8.0

def test_localization_coincidence(indicator_model):
    from sdelab import localize_model
    loc = localize_model(indicator_model, 0.0, (0.1, 0.2, 0.4, 0.6, 0.8))
    times = np.linspace(0.0, 1.0, 513)
    drv = sample_brownian_lattice(RngStream(104, ("loc",)), times, paths=1000)
    interval = (-0.2, 0.2)
    path_a, tau_a = solve_until_exit(indicator_model, 0.0, drv, interval, "euler")
    path_b, tau_b = solve_until_exit(loc, 0.0, drv, interval, "euler")
    tau = np.minimum(tau_a, tau_b)
    mask = times[None, :] <= tau[:, None]
    diff = np.where(mask, path_a.values - path_b.values, 0.0)
    assert np.max(np.abs(diff)) <= 1e-10

def test_make_stepper_validation(ou_model):
    with pytest.raises(ValidationError):
        make_stepper("transformed-milstein", ou_model)
    with pytest.raises(ValidationError):
        make_stepper("rk4", ou_model)
