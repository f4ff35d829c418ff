import math

import numpy as np
import pytest

from sdelab import (
    CouplingExperimentConfig,
    CouplingKind,
    check_recursion_bounds,
    conditional_expectation_oracle,
    global_coupling_distance,
    global_l1_coupling_gap,
    local_coupling_distances,
    occupation_lower_bound_check,
)
from sdelab.couplings import DistanceEstimate, _mean_se
from sdelab.errors import ValidationError
from sdelab.transforms import identity_transform

BRIDGE_ABS_MOMENT = math.sqrt(2.0 * math.pi) / 8.0


def ou_bridge_variance(delta: float) -> float:
    i2 = 0.5 * (1.0 - math.exp(-2.0 * delta))
    i1 = 1.0 - math.exp(-delta)
    return i2 - i1 * i1 / delta


def cfg_for(model, n, *, transform=None, m=64, reps=2000, p=2.0, seed=0,
            kind=CouplingKind.INDEPENDENT_RESAMPLE, workers=None):
    return CouplingExperimentConfig(model=model, transform=transform, n=n, m=m,
                                    replications=reps, p=p, seed=seed, kind=kind,
                                    workers=workers)


def test_config_validation(ou_model):
    with pytest.raises(ValidationError):
        CouplingExperimentConfig(model=ou_model)  # neither n nor coarse_times
    with pytest.raises(ValidationError):
        CouplingExperimentConfig(model=ou_model, n=4, coarse_times=[0.0, 1.0])
    # 5 intervals with a 0.65 gap violate max dt <= 2T/n = 0.4
    cfg = CouplingExperimentConfig(model=ou_model,
                                   coarse_times=[0.0, 0.1, 0.2, 0.3, 0.95, 1.0])
    with pytest.raises(ValidationError):
        cfg.coarse_grid()
    with pytest.raises(ValidationError):
        CouplingExperimentConfig(model=ou_model, n=4, p=0.5)


def test_explicit_grid_accepted(ou_model):
    cfg = CouplingExperimentConfig(model=ou_model, coarse_times=[0.0, 0.5, 1.0])
    assert cfg.coarse_grid() == pytest.approx([0.0, 0.5, 1.0])


def test_mean_se_helper():
    vals = np.array([1.0, 2.0, 3.0, 4.0])
    mean, se = _mean_se(float(vals.sum()), float((vals**2).sum()), 4)
    assert mean == pytest.approx(2.5)
    assert se == pytest.approx(np.std(vals, ddof=1) / 2.0)


def test_distance_estimate_root_scale():
    d = DistanceEstimate(mean_power=4.0, se_power=0.4, replications=100, p=2.0)
    assert d.estimate == pytest.approx(2.0)
    assert d.std_error == pytest.approx(0.4 * 2.0 / (2.0 * 4.0))


def test_additive_model_distance_vanishes(brownian_model):
    est = global_coupling_distance(cfg_for(brownian_model, 4, reps=500))
    assert est.mean_power <= 1e-28  # endpoint pinning, up to float roundoff


def test_ou_one_interval_matches_gaussian_oracle(ou_model):
    est = global_coupling_distance(cfg_for(ou_model, 1, m=256, reps=50_000, seed=3))
    target = 2.0 * ou_bridge_variance(1.0)
    assert abs(est.mean_power - target) <= 3.0 * est.se_power


def test_symmetry_under_role_swap(ou_model):
    cfg = cfg_for(ou_model, 4, reps=10_000, seed=4)
    a = global_coupling_distance(cfg)
    b = global_coupling_distance(cfg, swap_roles=True)
    assert abs(a.mean_power - b.mean_power) <= 3.0 * math.hypot(a.se_power, b.se_power)


def test_determinism_across_worker_counts(indicator_model, indicator_transform):
    base = cfg_for(indicator_model, 8, transform=indicator_transform,
                   reps=3000, seed=11, workers=1)
    multi = cfg_for(indicator_model, 8, transform=indicator_transform,
                    reps=3000, seed=11, workers=4)
    a = global_coupling_distance(base)
    b = global_coupling_distance(multi)
    assert a.mean_power == b.mean_power
    assert a.se_power == b.se_power


def test_local_distances_additive_zero(brownian_model):
    est = local_coupling_distances(cfg_for(brownian_model, 4, reps=500,
                                           transform=identity_transform()))
    assert est.mean_power <= 1e-28
    assert max(est.per_interval["mean"]) <= 1e-28


def test_local_distances_ou_oracle(ou_model):
    est = local_coupling_distances(cfg_for(ou_model, 2, m=128, reps=40_000, seed=9,
                                           transform=identity_transform()))
    target = 2.0 * ou_bridge_variance(0.5)
    for mean, se in zip(est.per_interval["mean"], est.per_interval["se"]):
        assert abs(mean - target) <= 3.0 * se
    assert est.mean_power == pytest.approx(float(np.sum(est.per_interval["mean"])))


def test_local_distances_indicator_nonneg(indicator_model, indicator_transform):
    est = local_coupling_distances(cfg_for(indicator_model, 4, reps=1000,
                                           transform=indicator_transform))
    assert all(v >= 0.0 for v in est.per_interval["mean"])
    assert math.isfinite(est.mean_power)


def test_local_requires_p2(ou_model):
    with pytest.raises(ValidationError):
        local_coupling_distances(cfg_for(ou_model, 2, p=1.0,
                                         transform=identity_transform()))


def test_recursion_identity_and_trivial(brownian_model, ou_model):
    triv = check_recursion_bounds(cfg_for(brownian_model, 4, reps=500,
                                          transform=identity_transform()))
    assert np.max(np.abs(triv.D)) <= 1e-28
    assert np.max(np.abs(triv.L)) <= 1e-28

    rep = check_recursion_bounds(cfg_for(ou_model, 4, reps=20_000, seed=9,
                                         transform=identity_transform()))
    # same-sample identity: residuals are zero up to roundoff
    assert np.max(np.abs(rep.residuals)) <= 5.0 * np.maximum(rep.residual_ses, 1e-300).min() \
        or np.max(np.abs(rep.residuals)) <= 1e-12
    assert 0.25 <= rep.ratio <= 4.0


def test_recursion_ratio_stability(ou_model):
    r4 = check_recursion_bounds(cfg_for(ou_model, 4, reps=20_000, seed=9,
                                        transform=identity_transform()))
    r8 = check_recursion_bounds(cfg_for(ou_model, 8, reps=20_000, seed=9,
                                        transform=identity_transform()))
    drift = max(r4.ratio, r8.ratio) / min(r4.ratio, r8.ratio)
    assert drift < 2.0


def test_occupation_inconclusive_far_jump(indicator_model, indicator_transform):
    from sdelab import Coefficient, SdeModel
    far = SdeModel(drift=indicator_model.drift, diffusion=indicator_model.diffusion,
                   x0=10.0, horizon=0.01)
    rep = occupation_lower_bound_check(
        cfg_for(far, 4, transform=indicator_transform, reps=2000), xi=0.0)
    assert not rep.conclusive


def test_occupation_positive_at_jump(indicator_model, indicator_transform):
    rep = occupation_lower_bound_check(
        cfg_for(indicator_model, 16, transform=indicator_transform,
                reps=4000, seed=2), xi=0.0)
    assert rep.conclusive
    assert rep.c_lower_95 > 0.0
    assert rep.c_hat > 0.0


def test_l1_gap_closed_form(brownian_model):
    cfg = cfg_for(brownian_model, 4, m=256, reps=20_000, p=1.0, seed=5,
                  kind=CouplingKind.NEGATION)
    est = global_l1_coupling_gap(cfg)
    assert abs(est.mean_power - BRIDGE_ABS_MOMENT) <= 3.0 * est.se_power
    assert est.extra["min_sigma_abs"] == pytest.approx(1.0)


def test_l1_gap_zero_sigma():
    from sdelab import Coefficient, SdeModel
    silent = SdeModel(drift=Coefficient.constant(1.0),
                      diffusion=Coefficient.constant(0.0), x0=0.0, horizon=1.0)
    est = global_l1_coupling_gap(cfg_for(silent, 4, p=1.0, reps=200,
                                         kind=CouplingKind.NEGATION))
    assert est.mean_power == 0.0


def test_l1_gap_requires_p1(brownian_model):
    with pytest.raises(ValidationError):
        global_l1_coupling_gap(cfg_for(brownian_model, 4, p=2.0))


def test_l1_gap_rate_quick(ou_model):
    from sdelab import fit_rate
    points = []
    for n in (8, 32, 128):
        est = global_l1_coupling_gap(cfg_for(ou_model, n, m=32, reps=3000, p=1.0,
                                             seed=6, kind=CouplingKind.NEGATION))
        assert est.p == 1.0
        points.append((n, est.estimate, est.std_error))
    rate = fit_rate(points)
    assert -0.65 <= rate.slope <= -0.35


def test_oracle_zero_error_when_measurable(brownian_model):
    rep = conditional_expectation_oracle(cfg_for(brownian_model, 2, reps=200, seed=7),
                                         inner=8)
    assert rep.error_sq <= 1e-30


def test_oracle_ou_error_matches_conditional_variance(ou_model):
    rep = conditional_expectation_oracle(cfg_for(ou_model, 1, m=256, reps=4000, seed=7),
                                         inner=64)
    target = ou_bridge_variance(1.0)
    assert abs(rep.error_sq - target) <= 3.0 * rep.error_sq_se
    assert abs(rep.identity_ratio - 1.0) <= 0.1


def test_oracle_requires_p2_and_inner(ou_model):
    with pytest.raises(ValidationError):
        conditional_expectation_oracle(cfg_for(ou_model, 1, p=1.0), inner=8)
    with pytest.raises(ValidationError):
        conditional_expectation_oracle(cfg_for(ou_model, 1), inner=1)
