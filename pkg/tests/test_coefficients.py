import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdelab import (
    Coefficient,
    SdeModel,
    eval_one_sided,
    jump_height,
    localize_model,
    validate_assumptions,
)
from sdelab.coefficients import bump_plateau, poly_inf_abs, poly_sup_abs, ramp_plateau
from sdelab.errors import AmbiguousValueError, DegenerateDiffusionError, ValidationError


def test_indicator_one_sided_limits(indicator_model):
    mu = indicator_model.drift
    assert eval_one_sided(mu, 0.0, "left") == 0.0
    assert eval_one_sided(mu, 0.0, "right") == 1.0
    assert eval_one_sided(mu, 0.0, "at") == 1.0  # explicit breakpoint value


def test_polynomial_at():
    f = Coefficient.polynomial([0.0, 0.0, 1.0])  # x^2
    assert eval_one_sided(f, 2.0, "at") == 4.0


def test_at_ambiguous_without_explicit_value():
    f = Coefficient([0.0], [[0.0], [1.0]])  # no explicit value at 0
    with pytest.raises(AmbiguousValueError):
        eval_one_sided(f, 0.0, "at")
    # vectorized evaluation falls back to the right limit
    assert f(0.0) == 1.0


def test_breakpoints_must_increase():
    with pytest.raises(ValidationError):
        Coefficient([1.0, 0.0], [[0.0], [1.0], [2.0]])
    with pytest.raises(ValidationError):
        Coefficient([0.0], [[1.0]])  # wrong piece count


def test_horizon_positive(indicator_model):
    with pytest.raises(ValidationError):
        SdeModel(drift=indicator_model.drift, diffusion=indicator_model.diffusion,
                 x0=0.0, horizon=0.0)


@given(
    coeffs_left=st.lists(st.floats(-5, 5), min_size=1, max_size=4),
    coeffs_right=st.lists(st.floats(-5, 5), min_size=1, max_size=4),
    xi=st.floats(-3, 3),
)
@settings(max_examples=100, deadline=None)
def test_one_sided_limits_match_adjacent_pieces(coeffs_left, coeffs_right, xi):
    f = Coefficient([xi], [coeffs_left, coeffs_right])
    left = np.polynomial.polynomial.polyval(xi, np.asarray(coeffs_left))
    right = np.polynomial.polynomial.polyval(xi, np.asarray(coeffs_right))
    assert eval_one_sided(f, xi, "left") == pytest.approx(left, abs=1e-12)
    assert eval_one_sided(f, xi, "right") == pytest.approx(right, abs=1e-12)


@given(x=st.floats(-10, 10), coeffs=st.lists(st.floats(-3, 3), min_size=1, max_size=5))
@settings(max_examples=100, deadline=None)
def test_single_piece_matches_polyval(x, coeffs):
    f = Coefficient.polynomial(coeffs)
    assert f(x) == pytest.approx(
        float(np.polynomial.polynomial.polyval(x, np.asarray(coeffs))), rel=1e-12, abs=1e-12
    )


def test_poly_extrema_helpers():
    # |x^2 - 1| on [-2, 2]: sup 3 at the ends, inf 0 at the roots
    assert poly_sup_abs([-1.0, 0.0, 1.0], -2.0, 2.0) == pytest.approx(3.0)
    assert poly_inf_abs([-1.0, 0.0, 1.0], -2.0, 2.0) == 0.0
    assert math.isinf(poly_sup_abs([0.0, 0.0, 1.0], 0.0, math.inf))
    assert poly_inf_abs([2.0], -math.inf, math.inf) == 2.0


def test_jump_height_examples(indicator_model):
    assert jump_height(indicator_model, 0.0) == pytest.approx(1.0)

    flat = SdeModel(drift=Coefficient.constant(0.0), diffusion=Coefficient.constant(1.0),
                    x0=0.0, horizon=1.0)
    with pytest.raises(ValidationError):
        jump_height(flat, 0.3)

    affine = SdeModel(
        drift=Coefficient.indicator_right(0.0, 1.0),
        diffusion=Coefficient.polynomial([2.0, 1.0]),
        x0=0.0, horizon=1.0,
    )
    assert jump_height(affine, 0.0) == pytest.approx(0.5)


def test_jump_height_degenerate_sigma():
    model = SdeModel(
        drift=Coefficient.indicator_right(0.0, 1.0),
        diffusion=Coefficient.polynomial([0.0, 1.0]),  # sigma(0) = 0
        x0=0.0, horizon=1.0,
    )
    with pytest.raises(DegenerateDiffusionError):
        jump_height(model, 0.0)


def test_validate_assumptions_indicator(indicator_model):
    rep = validate_assumptions(indicator_model, (0.0, 0.5))
    assert rep.jump1 and rep.jump2 and rep.jump3
    assert rep.jump_heights[0.0] == pytest.approx(1.0)
    assert rep.a1 and rep.a2 and rep.a3


def test_validate_assumptions_no_breakpoint(ou_model):
    rep = validate_assumptions(ou_model, (0.0, 0.5))
    assert not rep.jump3
    assert rep.a1 and rep.a2 and rep.a3


def test_validate_assumptions_degenerate_window():
    model = SdeModel(
        drift=Coefficient.constant(0.0),
        diffusion=Coefficient.polynomial([0.0, 1.0]),  # sigma(x) = x
        x0=1.0, horizon=1.0,
    )
    rep = validate_assumptions(model, (0.0, 0.5))
    assert not rep.jump2
    assert rep.sigma_inf_window == 0.0


def test_validate_assumptions_is_pure(indicator_model):
    a = validate_assumptions(indicator_model, (0.0, 0.5))
    b = validate_assumptions(indicator_model, (0.0, 0.5))
    assert a == b


def test_localize_model_plateaus():
    model = SdeModel(drift=Coefficient.constant(3.0), diffusion=Coefficient.constant(2.0),
                     x0=0.0, horizon=1.0)
    loc = localize_model(model, 0.0, (0.1, 0.2, 0.3, 0.4, 0.5))
    # outside delta2: mu* = 0, sigma* = sgn = 1
    assert loc.drift(0.45) == pytest.approx(0.0, abs=1e-12)
    assert loc.diffusion(0.45) == pytest.approx(1.0, abs=1e-12)
    # inside delta0: untouched
    assert loc.drift(0.15) == pytest.approx(3.0, abs=1e-12)
    assert loc.diffusion(0.15) == pytest.approx(2.0, abs=1e-12)
    # transition band values at x = 0.35 (eta1 = 1/2 there, eta2 = 1)
    assert loc.drift(0.35) == pytest.approx(1.5, abs=1e-9)
    assert loc.diffusion(0.35) == pytest.approx(2.0 * 0.5 + 1.0, abs=1e-9)
    # monotone ramps across [0.3, 0.4]
    xs = np.linspace(0.3, 0.4, 101)
    eta1 = bump_plateau(0.0, 0.3, 0.4)(xs)
    eta2 = ramp_plateau(0.0, 0.2, 0.3)(xs)
    assert np.all(np.diff(eta1) <= 1e-12)
    assert np.all(eta2 == 1.0)


def test_localize_model_radii_validation(indicator_model):
    with pytest.raises(ValidationError):
        localize_model(indicator_model, 0.0, (0.2, 0.1, 0.3, 0.4, 0.5))


def test_localize_model_nondegeneracy_and_lipschitz(indicator_affine_model):
    xi, delta = 0.0, 0.5
    radii = (0.1, 0.2, 0.3, 0.4, delta)
    loc = localize_model(indicator_affine_model, xi, radii)
    grid = np.linspace(xi - 2 * delta, xi + 2 * delta, 10_000)
    sig = loc.diffusion(grid)
    target = min(1.0, indicator_affine_model.diffusion.inf_abs(xi - delta, xi + delta))
    assert np.min(np.abs(sig)) >= target - 1e-9
    # sigma* is globally Lipschitz; mu* keeps the model's own drift jump at
    # xi, so its quotients are checked away from grid pairs straddling it
    vals = loc.diffusion(grid)
    quot = np.abs(np.diff(vals)) / np.diff(grid)
    assert np.all(np.isfinite(quot)) and np.max(quot) < 1e3
    vals = loc.drift(grid)
    quot = np.abs(np.diff(vals)) / np.diff(grid)
    straddles = (grid[:-1] < xi) & (grid[1:] >= xi)
    assert np.all(np.isfinite(quot))
    assert np.max(quot[~straddles]) < 1e3


def test_localize_model_lipschitz_everywhere_for_smooth_drift():
    model = SdeModel(drift=Coefficient.polynomial([0.0, -1.0]),
                     diffusion=Coefficient.polynomial([2.0, 1.0]),
                     x0=0.0, horizon=1.0)
    loc = localize_model(model, 0.0, (0.1, 0.2, 0.3, 0.4, 0.5))
    grid = np.linspace(-1.0, 1.0, 10_000)
    for coef in (loc.drift, loc.diffusion):
        vals = coef(grid)
        quot = np.abs(np.diff(vals)) / np.diff(grid)
        assert np.all(np.isfinite(quot))
        assert np.max(quot) < 1e3


def test_localized_coefficients_match_inside_inner_ball(indicator_model):
    loc = localize_model(indicator_model, 0.0, (0.1, 0.2, 0.4, 0.6, 0.8))
    xs = np.linspace(-0.19, 0.19, 401)
    assert np.array_equal(loc.drift(xs), indicator_model.drift(xs))
    assert np.array_equal(loc.diffusion(xs), indicator_model.diffusion(xs))


def test_coefficient_algebra():
    f = Coefficient.indicator_right(0.0, 2.0)
    g = Coefficient.polynomial([1.0, 1.0])  # 1 + x
    prod = f * g
    xs = np.array([-1.0, 0.5, 2.0])
    assert prod(xs) == pytest.approx(f(xs) * g(xs))
    s = f + g
    assert s(xs) == pytest.approx(f(xs) + g(xs))
    assert (2.0 * g)(xs) == pytest.approx(2.0 * g(xs))


def test_model_json_roundtrip(indicator_affine_model):
    text = indicator_affine_model.to_json()
    back = SdeModel.from_json(text)
    xs = np.linspace(-2, 2, 101)
    assert np.array_equal(back.drift(xs), indicator_affine_model.drift(xs))
    assert np.array_equal(back.diffusion(xs), indicator_affine_model.diffusion(xs))
    assert back.x0 == indicator_affine_model.x0
    assert back.horizon == indicator_affine_model.horizon
    # document-level fields present
    doc = json.loads(text)
    assert set(doc) == {"drift", "diffusion", "x0", "horizon"}
    assert set(doc["drift"]) == {"breakpoints", "pieces", "breakpoint_values"}
