"""Reproducible experiment runner and model catalog.

One experiment spec = one invocation = one CSV plus a human-readable report.
Every output embeds the resolved spec and the code version, and a fixed seed
reproduces the files byte for byte regardless of the worker count.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .coefficients import Coefficient, SdeModel, localize_model
from .couplings import (
    CouplingExperimentConfig,
    check_recursion_bounds,
    conditional_expectation_oracle,
    global_coupling_distance,
    global_l1_coupling_gap,
)
from .adaptive import ZeroPathMethod, global_l1_error
from .couplings import occupation_lower_bound_check
from .errors import SdeLabError, ValidationError
from .estimation import fit_rate, kernel_density_at
from .noise import CouplingKind, RngStream, bridge_abs_integral_estimate, sample_brownian_lattice
from .solvers import solve_until_exit
from .transforms import Transform, build_jump_removal_transform, identity_transform

BRIDGE_ABS_MOMENT = math.sqrt(2.0 * math.pi) / 8.0          # E int_0^1 |B^{0,1}|
ZERO_PATH_L1 = (2.0 / 3.0) * math.sqrt(2.0 / math.pi)       # E int_0^1 |W_s| ds
GAUSS_DENSITY_AT_0 = 1.0 / math.sqrt(2.0 * math.pi)

EXPERIMENT_KINDS = (
    "final-time-rate",
    "global-l1-rate",
    "recursion-check",
    "occupation-check",
    "oracle-identity",
    "bridge-moments",
    "localization-check",
    "density-gate",
)


# -- model catalog ------------------------------------------------------------


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    description: str
    criteria: tuple
    model: SdeModel
    has_drift_jump: bool


def _indicator_drift_model() -> SdeModel:
    return SdeModel(
        drift=Coefficient.indicator_right(0.0, 1.0),
        diffusion=Coefficient.constant(1.0),
        x0=0.0,
        horizon=1.0,
    )


def _ou_model() -> SdeModel:
    return SdeModel(
        drift=Coefficient.polynomial([0.0, -1.0]),
        diffusion=Coefficient.constant(1.0),
        x0=0.0,
        horizon=1.0,
    )


def _brownian_model() -> SdeModel:
    return SdeModel(
        drift=Coefficient.constant(0.0),
        diffusion=Coefficient.constant(1.0),
        x0=0.0,
        horizon=1.0,
    )


def _indicator_affine_model() -> SdeModel:
    return SdeModel(
        drift=Coefficient.indicator_right(0.0, 1.0),
        diffusion=Coefficient.polynomial([2.0, 1.0]),
        x0=0.0,
        horizon=1.0,
    )


def catalog() -> dict[str, CatalogEntry]:
    return {
        "brownian": CatalogEntry(
            "brownian", "mu = 0, sigma = 1: additive baseline, closed-form moments",
            ("bridge-moments",), _brownian_model(), False),
        "ou": CatalogEntry(
            "ou", "mu(x) = -x, sigma = 1: Lipschitz baseline with Gaussian oracles",
            ("global-l1-rate", "oracle-identity", "recursion-check"), _ou_model(), False),
        "indicator-drift": CatalogEntry(
            "indicator-drift",
            "mu = 1_[0,inf) (jump height 1 at xi = 0), sigma = 1: the rate-experiment model",
            ("final-time-rate", "global-l1-rate", "oracle-identity", "recursion-check",
             "occupation-check", "localization-check", "density-gate"),
            _indicator_drift_model(), True),
        "indicator-affine": CatalogEntry(
            "indicator-affine",
            "mu = 1_[0,inf), sigma(x) = 2 + x: non-constant diffusion for the transform suite",
            (), _indicator_affine_model(), True),
    }


def get_model(ref) -> tuple[str, SdeModel]:
    """Resolve a model reference: catalog name or inline JSON dict."""
    if isinstance(ref, str):
        entries = catalog()
        if ref not in entries:
            raise ValidationError(f"unknown model {ref!r}; known: {sorted(entries)}")
        return ref, entries[ref].model
    if isinstance(ref, dict):
        return "inline", SdeModel.from_dict(ref)
    raise ValidationError("model must be a catalog name or an inline model dict")


def default_transform(name: str, model: SdeModel) -> Transform:
    if any(model.drift.limit_left(b) != model.drift.limit_right(b)
           for b in model.drift.breakpoints):
        return build_jump_removal_transform(model)
    return identity_transform()


def list_builtin_models() -> list[dict]:
    out = []
    for entry in catalog().values():
        mu = entry.model.drift
        jumps = {float(b): mu.limit_right(b) - mu.limit_left(b) for b in mu.breakpoints}
        out.append({
            "name": entry.name,
            "description": entry.description,
            "criteria": list(entry.criteria),
            "drift_jumps": jumps,
            "model": entry.model.to_dict(),
        })
    return out


# -- experiment specs ---------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    """Validated description of one experiment run."""

    kind: str
    model: object = "indicator-drift"
    n_list: tuple = (8, 16, 32, 64, 128, 256, 512)
    m: int = 64
    replications: int = 10_000
    p: float = 2.0
    seed: int = 0
    params: dict = field(default_factory=dict)
    experiment_id: str = ""

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValidationError(f"unknown experiment kind {self.kind!r}")
        if not self.n_list or any(int(n) < 1 for n in self.n_list):
            raise ValidationError("n_list must hold positive integers")
        if self.m < 1 or self.replications < 1:
            raise ValidationError("m and replications must be positive")
        if not self.experiment_id:
            object.__setattr__(self, "experiment_id", self.kind)

    def to_dict(self) -> dict:
        model = self.model if isinstance(self.model, str) else dict(self.model)
        return {
            "kind": self.kind,
            "model": model,
            "n_list": [int(n) for n in self.n_list],
            "m": int(self.m),
            "replications": int(self.replications),
            "p": float(self.p),
            "seed": int(self.seed),
            "params": dict(self.params),
            "experiment_id": self.experiment_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        unknown = set(d) - {"kind", "model", "n_list", "m", "replications",
                            "p", "seed", "params", "experiment_id"}
        if unknown:
            raise ValidationError(f"unknown spec fields: {sorted(unknown)}")
        if "kind" not in d:
            raise ValidationError("spec requires a 'kind' field")
        return cls(
            kind=d["kind"],
            model=d.get("model", "indicator-drift"),
            n_list=tuple(d.get("n_list", (8, 16, 32, 64, 128, 256, 512))),
            m=int(d.get("m", 64)),
            replications=int(d.get("replications", 10_000)),
            p=float(d.get("p", 2.0)),
            seed=int(d.get("seed", 0)),
            params=dict(d.get("params", {})),
            experiment_id=d.get("experiment_id", ""),
        )


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    rows: list
    checks: list
    workers: int | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def csv_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# sdelab {__version__}\n")
        buf.write("# spec: " + json.dumps(self.spec.to_dict(), sort_keys=True) + "\n")
        buf.write(f"# reproduce: sdelab run <this spec> --seed {self.spec.seed}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["experiment_id", "model_id", "n", "m", "p",
                         "estimate", "std_error", "extra", "seed"])
        for row in self.rows:
            writer.writerow([
                row["experiment_id"], row["model_id"], row["n"], row["m"],
                repr(float(row["p"])), repr(float(row["estimate"])),
                repr(float(row["std_error"])),
                json.dumps(row.get("extra", {}), sort_keys=True),
                row["seed"],
            ])
        return buf.getvalue()

    def report_text(self) -> str:
        lines = [f"sdelab {__version__} :: {self.spec.experiment_id}",
                 "spec: " + json.dumps(self.spec.to_dict(), sort_keys=True), ""]
        for c in self.checks:
            lines.append(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
        lines.append("")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.spec.experiment_id}.csv"
        report_path = out / f"{self.spec.experiment_id}.report.txt"
        csv_path.write_text(self.csv_text())
        report_path.write_text(self.report_text())
        return csv_path, report_path


def _row(spec: ExperimentSpec, model_id: str, n: int, estimate: float,
         std_error: float, extra: dict | None = None, m: int | None = None,
         p: float | None = None) -> dict:
    return {
        "experiment_id": spec.experiment_id,
        "model_id": model_id,
        "n": int(n),
        "m": int(spec.m if m is None else m),
        "p": float(spec.p if p is None else p),
        "estimate": float(estimate),
        "std_error": float(std_error),
        "extra": extra or {},
        "seed": int(spec.seed),
    }


def _cfg(spec: ExperimentSpec, model: SdeModel, n: int, *, transform=None,
         p=None, kind=CouplingKind.INDEPENDENT_RESAMPLE, m=None,
         workers=None) -> CouplingExperimentConfig:
    return CouplingExperimentConfig(
        model=model, transform=transform, n=int(n),
        m=int(spec.m if m is None else m),
        replications=spec.replications,
        p=float(spec.p if p is None else p),
        seed=spec.seed, kind=kind, workers=workers,
    )


# -- experiment kinds ---------------------------------------------------------


def _run_final_time_rate(spec: ExperimentSpec, workers) -> tuple[list, list]:
    model_id, model = get_model(spec.model)
    transform = default_transform(model_id, model)
    band = tuple(spec.params.get("slope_band", (-0.90, -0.60)))
    m_check = int(spec.params.get("m_check", 0))
    rows, points = [], []
    for n in spec.n_list:
        est = global_coupling_distance(_cfg(spec, model, n, transform=transform,
                                            p=2.0, workers=workers))
        rows.append(_row(spec, model_id, n, est.estimate, est.std_error,
                         extra={"mean_power": est.mean_power, "se_power": est.se_power},
                         p=2.0))
        points.append((n, est.estimate, est.std_error))
    rate = fit_rate(points)
    checks = [Check(
        "final-time slope in band",
        band[0] <= rate.slope <= band[1],
        f"slope={rate.slope:.4f} ci=+-{rate.slope_ci_half_width:.4f} "
        f"r2={rate.r_squared:.4f} band={band}")]
    if m_check:
        points2 = []
        for n in spec.n_list:
            est = global_coupling_distance(_cfg(spec, model, n, transform=transform,
                                                p=2.0, m=m_check, workers=workers))
            rows.append(_row(spec, model_id, n, est.estimate, est.std_error,
                             extra={"mean_power": est.mean_power}, m=m_check, p=2.0))
            points2.append((n, est.estimate, est.std_error))
        rate2 = fit_rate(points2)
        shift = abs(rate2.slope - rate.slope)
        checks.append(Check(
            f"slope shift under m={spec.m}->{m_check}",
            shift < float(spec.params.get("m_shift_tol", 0.05)),
            f"shift={shift:.4f} (m={spec.m}: {rate.slope:.4f}, m={m_check}: {rate2.slope:.4f})"))
    rows.append(_row(spec, model_id, 0, rate.slope, rate.slope_ci_half_width,
                     extra={"what": "fitted-slope", "r_squared": rate.r_squared,
                            "intercept": rate.intercept, "excluded": list(rate.excluded)},
                     p=2.0))
    return rows, checks


def _run_global_l1_rate(spec: ExperimentSpec, workers) -> tuple[list, list]:
    model_id, model = get_model(spec.model)
    transform = default_transform(model_id, model)
    band = tuple(spec.params.get("slope_band", (-0.60, -0.40)))
    rows, points = [], []
    for n in spec.n_list:
        est = global_l1_coupling_gap(_cfg(spec, model, n, transform=transform, p=1.0,
                                          kind=CouplingKind.NEGATION, workers=workers))
        rows.append(_row(spec, model_id, n, est.estimate, est.std_error,
                         extra=est.extra, p=1.0))
        points.append((n, est.estimate, est.std_error))
    rate = fit_rate(points)
    checks = [Check(
        "global-L1 gap slope in band",
        band[0] <= rate.slope <= band[1],
        f"slope={rate.slope:.4f} ci=+-{rate.slope_ci_half_width:.4f} band={band}")]
    rows.append(_row(spec, model_id, 0, rate.slope, rate.slope_ci_half_width,
                     extra={"what": "fitted-slope", "r_squared": rate.r_squared},
                     p=1.0))
    return rows, checks


def _run_recursion_check(spec: ExperimentSpec, workers) -> tuple[list, list]:
    model_id, model = get_model(spec.model)
    transform = default_transform(model_id, model)
    se_mult = float(spec.params.get("identity_se_mult", 5.0))
    ratio_factor = float(spec.params.get("ratio_factor", 16.0))
    rows, checks, ratios = [], [], []
    for n in spec.n_list:
        rep = check_recursion_bounds(_cfg(spec, model, n, transform=transform,
                                          p=2.0, workers=workers))
        rows.append(_row(spec, model_id, n, rep.ratio, 0.0, extra=rep.to_dict(), p=2.0))
        ok = np.all(np.abs(rep.residuals) <= se_mult * np.maximum(rep.residual_ses, 1e-300))
        checks.append(Check(
            f"identity D_i = D_(i-1) + 2m_i + d_i at n={n}",
            bool(ok),
            f"max |residual|/se = "
            f"{float(np.max(np.abs(rep.residuals) / np.maximum(rep.residual_ses, 1e-300))):.3g}"))
        ratios.append(rep.ratio)
    finite = [r for r in ratios if math.isfinite(r) and r > 0]
    spread = max(finite) / min(finite) if finite else math.inf
    checks.append(Check(
        "ratio D_n / sum L_i stable across n",
        len(finite) == len(ratios) and spread <= ratio_factor,
        f"ratios={['%.3f' % r for r in ratios]} spread={spread:.2f} <= {ratio_factor}"))
    return rows, checks


def _run_occupation_check(spec: ExperimentSpec, workers) -> tuple[list, list]:
    model_id, model = get_model(spec.model)
    transform = default_transform(model_id, model)
    xi = float(spec.params.get("xi", 0.0))
    stability = float(spec.params.get("stability_factor", 4.0))
    rows, checks, c_hats = [], [], []
    for n in spec.n_list:
        rep = occupation_lower_bound_check(
            _cfg(spec, model, n, transform=transform, p=2.0, workers=workers), xi)
        rows.append(_row(spec, model_id, n, rep.c_hat if rep.conclusive else float("nan"),
                         0.0, extra=rep.to_dict(), p=2.0))
        checks.append(Check(
            f"c_hat > 0 at 95% bootstrap confidence (n={n})",
            rep.conclusive and rep.c_lower_95 > 0.0,
            f"c_hat={rep.c_hat:.4g} ci=[{rep.c_lower_95:.4g}, {rep.c_upper_95:.4g}]"))
        c_hats.append(rep.c_hat)
    if all(math.isfinite(c) and c > 0 for c in c_hats):
        spread = max(c_hats) / min(c_hats)
        checks.append(Check("c_hat stability across n", spread <= stability,
                            f"spread={spread:.2f} <= {stability}"))
    else:
        checks.append(Check("c_hat stability across n", False, "inconclusive estimates"))
    return rows, checks


def _run_oracle_identity(spec: ExperimentSpec, workers) -> tuple[list, list]:
    model_id, model = get_model(spec.model)
    transform = default_transform(model_id, model)
    inner = int(spec.params.get("inner", 64))
    tol = float(spec.params.get("ratio_tol", 0.10))
    rows, checks = [], []
    for n in spec.n_list:
        rep = conditional_expectation_oracle(
            _cfg(spec, model, n, transform=transform, p=2.0, workers=workers), inner=inner)
        rows.append(_row(spec, model_id, n, rep.error_sq, rep.error_sq_se,
                         extra=rep.to_dict(), p=2.0))
        checks.append(Check(
            f"conditional-variance identity at n={n}",
            abs(rep.identity_ratio - 1.0) <= tol,
            f"ratio={rep.identity_ratio:.4f} (+- {rep.identity_ratio_se:.4f}) tol={tol}"))
    return rows, checks


def _run_bridge_moments(spec: ExperimentSpec, workers) -> tuple[list, list]:
    rows, checks = [], []
    stream = RngStream(spec.seed, ("bridge-moments",))
    paths = spec.replications
    m_bridge = int(spec.params.get("bridge_substeps", 256))

    mean, se = bridge_abs_integral_estimate(stream.child("unit"), 0.0, 1.0, m_bridge, paths)
    rows.append(_row(spec, "bridge", 1, mean, se,
                     extra={"target": BRIDGE_ABS_MOMENT, "what": "E int |B^{0,1}|"}, p=1.0))
    checks.append(Check("bridge moment E int_0^1 |B|",
                        abs(mean - BRIDGE_ABS_MOMENT) <= 0.01,
                        f"{mean:.5f} vs {BRIDGE_ABS_MOMENT:.5f} +- 0.01"))

    for s, t in ((0.0, 0.25), (0.5, 0.75)):
        mean_st, se_st = bridge_abs_integral_estimate(
            stream.child(f"scale-{s}-{t}"), s, t, m_bridge, paths)
        target = (t - s) ** 1.5 * BRIDGE_ABS_MOMENT
        rows.append(_row(spec, "bridge", 1, mean_st, se_st,
                         extra={"target": target, "interval": [s, t]}, p=1.0))
        checks.append(Check(f"bridge scaling on [{s}, {t}]",
                            abs(mean_st - target) <= 3.0 * se_st,
                            f"{mean_st:.6f} vs {target:.6f} +- 3*{se_st:.2g}"))

    # OU one-interval squared coupling distance against the Gaussian oracle;
    # the substep count keeps scheme bias well under one standard error
    ou = _ou_model()
    ou_target = 2.0 * _ou_bridge_variance(1.0)
    cfg = CouplingExperimentConfig(
        model=ou, transform=None, n=1, m=int(spec.params.get("ou_substeps", 512)),
        replications=paths, p=2.0, seed=spec.seed, workers=workers)
    est = global_coupling_distance(cfg)
    rows.append(_row(spec, "ou", 1, est.mean_power, est.se_power,
                     extra={"target": ou_target, "what": "one-interval E|X1-X1~|^2"}, p=2.0))
    checks.append(Check("OU one-interval squared coupling distance",
                        abs(est.mean_power - ou_target) <= 3.0 * est.se_power,
                        f"{est.mean_power:.5f} vs {ou_target:.5f} "
                        f"(3 SE = {3 * est.se_power:.5f})"))

    # zero-path L1 error against E int |W|
    bm = _brownian_model()
    zp_cfg = CouplingExperimentConfig(
        model=bm, transform=None, n=int(spec.params.get("zero_path_n", 8)),
        m=spec.m, replications=paths, p=1.0, seed=spec.seed, workers=workers)
    zp = global_l1_error(ZeroPathMethod(bm), zp_cfg, ref_multiplier=2)
    rows.append(_row(spec, "brownian", zp_cfg.n, zp.estimate, zp.std_error,
                     extra={"target": ZERO_PATH_L1, "what": "zero-path L1 error"}, p=1.0))
    checks.append(Check("zero-path L1 error vs Brownian motion",
                        abs(zp.estimate - ZERO_PATH_L1) <= 3.0 * zp.std_error,
                        f"{zp.estimate:.5f} vs {ZERO_PATH_L1:.5f} +- 3*{zp.std_error:.2g}"))
    return rows, checks


def _ou_bridge_variance(delta: float) -> float:
    """Var(int_0^d e^{s-d} dB_s) = int e^{2(s-d)} ds - (int e^{s-d} ds)^2 / d."""
    i2 = 0.5 * (1.0 - math.exp(-2.0 * delta))
    i1 = 1.0 - math.exp(-delta)
    return i2 - i1 * i1 / delta


def _run_localization_check(spec: ExperimentSpec, workers) -> tuple[list, list]:
    model_id, model = get_model(spec.model)
    xi = float(spec.params.get("xi", 0.0))
    radii = tuple(spec.params.get("radii", (0.1, 0.2, 0.4, 0.6, 0.8)))
    tol = float(spec.params.get("tol", 1e-10))
    steps = int(spec.params.get("steps", 512))
    local = localize_model(model, xi, radii)
    interval = (xi - radii[1], xi + radii[1])  # coefficients coincide on B_{delta0}
    stream = RngStream(spec.seed, ("localization",))
    times = np.linspace(0.0, model.horizon, steps + 1)
    driver = sample_brownian_lattice(stream.child("driver"), times,
                                     paths=spec.replications)
    path_a, exit_a = solve_until_exit(model, model.x0, driver, interval, "euler")
    path_b, exit_b = solve_until_exit(local, local.x0, driver, interval, "euler")
    exit_both = np.minimum(exit_a, exit_b)
    mask = times[None, :] <= exit_both[:, None]
    max_diff = float(np.max(np.abs(np.where(mask, path_a.values - path_b.values, 0.0))))
    rows = [_row(spec, model_id, steps, max_diff, 0.0,
                 extra={"radii": list(radii), "interval": list(interval)}, p=1.0)]
    checks = [Check("pathwise coincidence up to exit", max_diff <= tol,
                    f"max diff {max_diff:.3g} <= {tol}")]
    return rows, checks


def _run_density_gate(spec: ExperimentSpec, workers) -> tuple[list, list]:
    model_id, model = get_model(spec.model)
    transform = default_transform(model_id, model)
    xi = float(spec.params.get("xi", 0.0))
    t_star = float(spec.params.get("t_star", 1.0))
    steps = int(spec.params.get("steps", 1024))
    scheme = "transformed-milstein" if isinstance(transform, Transform) and \
        getattr(transform, "breakpoints", np.empty(0)).size else "milstein"
    est = kernel_density_at(model, t_star, xi, replications=spec.replications,
                            seed=spec.seed, steps=steps, scheme=scheme,
                            transform=transform if scheme == "transformed-milstein" else None)
    rows = [_row(spec, model_id, steps, est.value or 0.0, est.std_error or 0.0,
                 extra={"bandwidth": est.bandwidth, "lower_99": est.lower_99,
                        "t_star": t_star, "xi": xi}, p=1.0)]
    checks = [Check("density at the jump positive (99% bootstrap)",
                    est.positive_at_99(),
                    f"estimate={est.value:.4f} lower99={est.lower_99:.4f}"
                    if not est.is_point_mass else "point mass diagnostic")]

    gauss_r = int(spec.params.get("gauss_replications", 100_000))
    gauss = kernel_density_at(_brownian_model(), 1.0, 0.0, replications=gauss_r,
                              seed=spec.seed + 1, steps=64, scheme="milstein")
    rows.append(_row(spec, "brownian", 64, gauss.value, gauss.std_error,
                     extra={"target": GAUSS_DENSITY_AT_0}, p=1.0))
    checks.append(Check("Gaussian density sanity",
                        abs(gauss.value - GAUSS_DENSITY_AT_0) <= 0.02,
                        f"{gauss.value:.4f} vs {GAUSS_DENSITY_AT_0:.4f} +- 0.02"))
    return rows, checks


_RUNNERS = {
    "final-time-rate": _run_final_time_rate,
    "global-l1-rate": _run_global_l1_rate,
    "recursion-check": _run_recursion_check,
    "occupation-check": _run_occupation_check,
    "oracle-identity": _run_oracle_identity,
    "bridge-moments": _run_bridge_moments,
    "localization-check": _run_localization_check,
    "density-gate": _run_density_gate,
}


def run_experiment(spec: ExperimentSpec, out_dir=None,
                   workers: int | None = None) -> ExperimentResult:
    """Execute one spec; optionally write its CSV and report files."""
    rows, checks = _RUNNERS[spec.kind](spec, workers)
    result = ExperimentResult(spec=spec, rows=rows, checks=checks, workers=workers)
    if out_dir is not None:
        result.write(out_dir)
    return result


# -- verify suite -------------------------------------------------------------


def default_verify_suite(seed: int = 2024, scale: float = 1.0) -> list[ExperimentSpec]:
    """The CLI-level acceptance suite (one spec per experiment-kind criterion)."""

    def reps(r):
        return max(100, int(round(r * scale)))

    return [
        ExperimentSpec(kind="final-time-rate", model="indicator-drift",
                       n_list=(8, 16, 32, 64, 128, 256, 512), m=64,
                       replications=reps(10_000), p=2.0, seed=seed,
                       params={"m_check": 128},
                       experiment_id="c1-final-time-rate"),
        ExperimentSpec(kind="global-l1-rate", model="ou",
                       n_list=(8, 16, 32, 64, 128, 256, 512), m=64,
                       replications=reps(10_000), p=1.0, seed=seed,
                       experiment_id="c2-global-l1-rate-ou"),
        ExperimentSpec(kind="global-l1-rate", model="indicator-drift",
                       n_list=(8, 16, 32, 64, 128, 256, 512), m=64,
                       replications=reps(10_000), p=1.0, seed=seed,
                       experiment_id="c2-global-l1-rate-indicator"),
        ExperimentSpec(kind="bridge-moments", model="brownian", n_list=(1,),
                       m=64, replications=reps(100_000), p=1.0, seed=seed,
                       experiment_id="c3-bridge-moments"),
        ExperimentSpec(kind="oracle-identity", model="ou", n_list=(1, 4),
                       m=64, replications=reps(10_000), p=2.0, seed=seed,
                       experiment_id="c4-oracle-identity-ou"),
        ExperimentSpec(kind="oracle-identity", model="indicator-drift",
                       n_list=(8, 32), m=64, replications=reps(10_000), p=2.0,
                       seed=seed, experiment_id="c4-oracle-identity-indicator"),
        ExperimentSpec(kind="recursion-check", model="ou", n_list=(8, 16, 32, 64),
                       m=64, replications=reps(10_000), p=2.0, seed=seed,
                       experiment_id="c6-recursion-ou"),
        ExperimentSpec(kind="recursion-check", model="indicator-drift",
                       n_list=(8, 16, 32, 64), m=64, replications=reps(10_000),
                       p=2.0, seed=seed, experiment_id="c6-recursion-indicator"),
        ExperimentSpec(kind="occupation-check", model="indicator-drift",
                       n_list=(16, 32), m=64, replications=reps(10_000), p=2.0,
                       seed=seed, experiment_id="c7-occupation"),
        ExperimentSpec(kind="localization-check", model="indicator-drift",
                       n_list=(1,), m=64, replications=reps(1_000), p=1.0,
                       seed=seed, experiment_id="c9-localization"),
        ExperimentSpec(kind="density-gate", model="indicator-drift", n_list=(1,),
                       m=64, replications=reps(20_000), p=1.0, seed=seed,
                       params={"gauss_replications": reps(100_000)},
                       experiment_id="c10-density-gate"),
    ]


def verify(out_dir, seed: int = 2024, scale: float = 1.0,
           workers: int | None = None, echo=print) -> bool:
    all_ok = True
    for spec in default_verify_suite(seed=seed, scale=scale):
        result = run_experiment(spec, out_dir=out_dir, workers=workers)
        status = "PASS" if result.passed else "FAIL"
        all_ok = all_ok and result.passed
        echo(f"[{status}] {spec.experiment_id}")
        for c in result.checks:
            echo(f"    [{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
    echo(f"verify: {'PASS' if all_ok else 'FAIL'}")
    return all_ok


# -- entry point --------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sdelab",
                                     description="coupling-of-noise SDE laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment spec (JSON file)")
    p_run.add_argument("spec", type=Path)
    p_run.add_argument("--out", type=Path, default=Path("results"))
    p_run.add_argument("--workers", type=int, default=None)

    sub.add_parser("models", help="list the built-in model catalog")

    p_ver = sub.add_parser("verify", help="run the acceptance suite")
    p_ver.add_argument("--out", type=Path, default=Path("verify-results"))
    p_ver.add_argument("--seed", type=int, default=2024)
    p_ver.add_argument("--scale", type=float, default=1.0)
    p_ver.add_argument("--workers", type=int, default=None)

    args = parser.parse_args(argv)

    if args.command == "models":
        print(json.dumps(list_builtin_models(), indent=2, sort_keys=True))
        return 0

    if args.command == "run":
        try:
            spec_dict = json.loads(args.spec.read_text())
            spec = ExperimentSpec.from_dict(spec_dict)
        except (OSError, json.JSONDecodeError, ValidationError) as exc:
            print(f"usage error: {exc}", file=sys.stderr)
            return 2
        try:
            result = run_experiment(spec, out_dir=args.out, workers=args.workers)
        except SdeLabError as exc:
            print(f"experiment failed: {exc} (seed {spec.seed})", file=sys.stderr)
            return 1
        print(result.report_text(), end="")
        return 0 if result.passed else 1

    if args.command == "verify":
        ok = verify(args.out, seed=args.seed, scale=args.scale, workers=args.workers)
        return 0 if ok else 1

    return 2


if __name__ == "__main__":
    sys.exit(main())
