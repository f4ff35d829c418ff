"""Acceptance suite: one test per criterion, at the stated tolerances.

Each test prints one PASS line with the measured quantities; a failure
carries the full experiment report in the assertion message.  Criteria 1-4,
6, 7, 9 and 10 run the same experiment specs `sdelab verify` uses, so the
CLI suite and this module stay in lockstep.
"""

import math
import os
import subprocess
import sys
import time

import numpy as np

from sdelab import (
    CouplingExperimentConfig,
    RngStream,
    build_jump_removal_transform,
    global_coupling_distance,
    lamperti_transform,
    lipschitz_certificate,
    make_builtin_method,
    mean_cost,
    run_adaptive,
    sample_brownian_lattice,
    transformed_coefficients,
)
from sdelab.adaptive import (
    BrownianPathOracle,
    final_time_method_error,
    global_l1_error,
)
from sdelab.cli import default_verify_suite, get_model, run_experiment
from sdelab.estimation import fit_rate
from sdelab.noise import PathLattice
from sdelab.solvers import euler_maruyama

SEED = 2024
SUITE = {spec.experiment_id: spec for spec in default_verify_suite(seed=SEED)}


def _run_suite_spec(experiment_id: str):
    spec = SUITE[experiment_id]
    t0 = time.perf_counter()
    result = run_experiment(spec)
    elapsed = time.perf_counter() - t0
    status = "PASS" if result.passed else "FAIL"
    print(f"[{experiment_id}] {status} ({elapsed:.0f}s)")
    for c in result.checks:
        print(f"    [{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
    assert result.passed, result.report_text()
    return result


def test_criterion_01_final_time_rate():
    _run_suite_spec("c1-final-time-rate")


def test_criterion_02_global_l1_rate():
    _run_suite_spec("c2-global-l1-rate-ou")
    _run_suite_spec("c2-global-l1-rate-indicator")


def test_criterion_03_closed_form_oracles():
    _run_suite_spec("c3-bridge-moments")


def test_criterion_04_conditional_variance_identity():
    _run_suite_spec("c4-oracle-identity-ou")
    _run_suite_spec("c4-oracle-identity-indicator")


def test_criterion_05_error_dominates_half_coupling_distance():
    """Every built-in method's RMS error >= half the coupling distance."""
    n, reps = 32, 4000
    model_id, model = get_model("indicator-drift")
    transform = build_jump_removal_transform(model)
    dist_cfg = CouplingExperimentConfig(model=model, transform=transform, n=n,
                                        m=64, replications=10_000, p=2.0,
                                        seed=SEED)
    dist = global_coupling_distance(dist_cfg)
    half = 0.5 * dist.estimate
    lines = []
    for name in ("uniform-euler", "uniform-milstein", "uniform-transformed-milstein",
                 "conditional-expectation-oracle", "largest-increment-bisection"):
        method = make_builtin_method(name, model, n, transform=transform,
                                     **({"seed": SEED} if name == "conditional-expectation-oracle" else {}))
        cfg = CouplingExperimentConfig(model=model, transform=transform, n=n,
                                       m=64, replications=reps, p=2.0,
                                       seed=SEED + 1, block_size=1024)
        err = final_time_method_error(method, cfg, ref_multiplier=16)
        rms = err.estimate
        combined = 3.0 * math.hypot(err.std_error, 0.5 * dist.std_error)
        ok = rms >= half - combined
        lines.append(f"{name}: rms={rms:.5f} >= half-dist={half:.5f} - {combined:.5f}")
        assert ok, lines[-1]
    print("[c5-lemma-lower-bound] PASS")
    for line in lines:
        print("    " + line)


def test_criterion_06_recursion_and_equivalence():
    _run_suite_spec("c6-recursion-ou")
    _run_suite_spec("c6-recursion-indicator")


def test_criterion_07_occupation_bound():
    _run_suite_spec("c7-occupation")


def test_criterion_08_transform_suite():
    t0 = time.perf_counter()
    model_id, model = get_model("indicator-drift")
    _, affine = get_model("indicator-affine")

    # jump removal: transformed drift continuous while the raw drift jumps
    for m in (model, affine):
        g = build_jump_removal_transform(m)
        mu = m.drift
        raw_jump = abs(mu.limit_right(0.0) - mu.limit_left(0.0))
        assert raw_jump == 1.0

        def mu_tilde(x):
            sg = m.diffusion(x)
            return g.deriv(x) * mu(x) + 0.5 * g.second_deriv(x) * sg * sg

        resid = abs(mu_tilde(1e-12) - mu_tilde(-1e-12))
        assert resid <= 1e-8

    # Lamperti normalization on the window
    h = lamperti_transform(affine, 0.0, 0.5)
    tm = transformed_coefficients(h, affine)
    ys = np.linspace(h.value(-0.5), h.value(0.5), 1000)
    assert np.max(np.abs(tm.diffusion(ys) - 1.0)) <= 1e-8

    # round-trip inversion
    g = build_jump_removal_transform(model)
    rng = np.random.default_rng(SEED)
    xs = rng.uniform(-2, 2, 1000)
    assert np.max(np.abs(g.invert(np.asarray(g.value(xs))) - xs)) <= 1e-9

    # Lipschitz certificates: finite and grid-stable
    assert g.g_min > 0
    tmg = transformed_coefficients(g, model)
    c1 = lipschitz_certificate(tmg.drift, (-1.0, 1.0), 10_000)
    c2 = lipschitz_certificate(tmg.drift, (-1.0, 1.0), 20_000)
    assert math.isfinite(c1) and math.isfinite(c2) and c2 < 2.0 * c1
    assert math.isfinite(lipschitz_certificate(g.value, (-2.0, 2.0), 10_000))
    print(f"[c8-transform-suite] PASS ({time.perf_counter() - t0:.0f}s): "
          f"mu~ jump <= 1e-8, |sigma^H - 1| <= 1e-8, roundtrip <= 1e-9, "
          f"certificates {c1:.3f}/{c2:.3f}")


def test_criterion_09_localization():
    _run_suite_spec("c9-localization")


def test_criterion_10_density_gate():
    _run_suite_spec("c10-density-gate")


def test_criterion_11_adaptive_harness():
    t0 = time.perf_counter()
    model_id, model = get_model("ou")

    # cost exactness
    method = make_builtin_method("uniform-euler", model, 16)
    cost = mean_cost(method, model, replications=50, seed=SEED)
    assert cost.mean == 16.0 and cost.std_error == 0.0

    # query consistency: identical values on re-query, exactly
    oracle = BrownianPathOracle(RngStream(SEED, ("c11",)), horizon=1.0)
    v1 = oracle.query(0.37)
    oracle.query(0.11)
    assert oracle.query(0.37) == v1

    # nonadaptive embedding: harness output == direct fixed-grid evaluation
    n = 16
    fine = np.linspace(0.0, 1.0, n * 8 + 1)
    lat = sample_brownian_lattice(RngStream(SEED, ("c11-emb",)), fine)
    out, k = run_adaptive(method, model.x0,
                          BrownianPathOracle.from_lattice(lat, RngStream(SEED + 1)))
    direct = euler_maruyama(model, model.x0, PathLattice(fine[::8], lat.values[::8]))
    assert k == n
    emb_gap = float(np.max(np.abs(out.values - direct.values)))
    assert emb_gap <= 1e-12

    # Euler-in-adaptive-interface L1 rate
    points = []
    for nn in (8, 16, 32, 64, 128, 256, 512):
        cfg = CouplingExperimentConfig(model=model, n=nn, m=64,
                                       replications=1000, p=1.0, seed=SEED)
        m_nn = make_builtin_method("uniform-euler", model, nn)
        est = global_l1_error(m_nn, cfg, ref_multiplier=4)
        points.append((nn, est.mean_power, est.se_power))
    rate = fit_rate(points)
    assert -0.60 <= rate.slope <= -0.40, f"slope {rate.slope}"
    print(f"[c11-adaptive-harness] PASS ({time.perf_counter() - t0:.0f}s): "
          f"cost=16 exact, embedding gap {emb_gap:.2e}, slope {rate.slope:.3f}")


def test_criterion_12_verify_determinism(tmp_path):
    """`sdelab verify` with one seed: byte-identical CSVs at 1 and 8 workers."""
    t0 = time.perf_counter()
    outs = {}
    for workers in (1, 8):
        out_dir = tmp_path / f"w{workers}"
        env = dict(os.environ, SDELAB_THREADS=str(workers))
        proc = subprocess.run(
            [sys.executable, "-m", "sdelab.cli", "verify", "--out", str(out_dir),
             "--seed", "7", "--scale", "0.01"],
            capture_output=True, text=True, env=env,
        )
        assert proc.returncode in (0, 1), proc.stderr
        outs[workers] = {
            p.name: p.read_bytes() for p in sorted(out_dir.glob("*.csv"))
        }
    assert set(outs[1]) == set(outs[8]) and len(outs[1]) >= 8
    for name in outs[1]:
        assert outs[1][name] == outs[8][name], f"CSV differs across workers: {name}"
    print(f"[c12-determinism] PASS ({time.perf_counter() - t0:.0f}s): "
          f"{len(outs[1])} CSVs byte-identical at 1 and 8 workers")
