"""Coupling-of-noise experiments.

Every experiment walks the coarse grid interval by interval: fine driver
increments and their coupled counterparts are generated per interval, states
advance through the m substeps, and only what the estimator needs is kept.
Replications are processed in fixed-size blocks with block-owned random
streams, so results are bitwise reproducible for a given seed no matter how
many workers run the blocks.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .coefficients import SdeModel
from .errors import DivergenceError, ValidationError
from .estimation import bootstrap_means
from .noise import CouplingKind, RngStream, coupled_increments
from .solvers import MilsteinStepper, TransformedMilsteinStepper
from .transforms import Transform


def resolve_workers(explicit: int | None = None) -> int:
    if explicit is not None:
        return max(1, int(explicit))
    env = os.environ.get("SDELAB_THREADS")
    return max(1, int(env)) if env else 1


@dataclass(frozen=True, eq=False)
class CouplingExperimentConfig:
    """Shared experiment configuration.

    The coarse grid is uniform with n intervals unless explicit times are
    given (which must start at 0, end at the horizon, and satisfy the grid
    gap condition max dt <= 2 T / n).  Each coarse interval carries m equal
    fine substeps.  block_size fixes the replication blocking and therefore
    the random-stream layout; it is part of the reproducibility contract.
    """

    model: SdeModel
    transform: Transform | None = None
    n: int | None = None
    coarse_times: np.ndarray | None = None
    m: int = 64
    replications: int = 10_000
    p: float = 2.0
    seed: int = 0
    kind: CouplingKind = CouplingKind.INDEPENDENT_RESAMPLE
    block_size: int = 8192
    workers: int | None = None

    def __post_init__(self):
        if (self.n is None) == (self.coarse_times is None):
            raise ValidationError("specify exactly one of n or coarse_times")
        if self.n is not None and self.n < 1:
            raise ValidationError("n must be at least 1")
        if self.m < 1 or self.replications < 1:
            raise ValidationError("m and replications must be positive")
        if self.p < 1:
            raise ValidationError("p must be at least 1")

    def coarse_grid(self) -> np.ndarray:
        T = self.model.horizon
        if self.n is not None:
            return np.linspace(0.0, T, self.n + 1)
        t = np.asarray(self.coarse_times, dtype=float)
        if t[0] != 0.0 or t[-1] != T:
            raise ValidationError("coarse times must start at 0 and end at the horizon")
        if not np.all(np.diff(t) > 0):
            raise ValidationError("coarse times must be strictly increasing")
        n = t.size - 1
        if np.max(np.diff(t)) > 2.0 * T / n + 1e-12:
            raise ValidationError("coarse grid violates the gap condition max dt <= 2T/n")
        return t

    def n_intervals(self) -> int:
        return int(self.coarse_grid().size - 1)

    def make_reference_stepper(self):
        """Transformed Milstein when a transform is present, else Milstein."""
        if self.transform is not None:
            return TransformedMilsteinStepper(self.model, self.transform)
        return MilsteinStepper(self.model)

    def make_transformed_stepper(self):
        if self.transform is None:
            raise ValidationError("this experiment requires a transform (identity is fine)")
        return TransformedMilsteinStepper(self.model, self.transform)


@dataclass(frozen=True)
class DistanceEstimate:
    """Monte Carlo estimate of a coupling distance.

    mean_power is the sample mean of the per-replication quantity |.|^p (or
    the L1 integral), se_power its standard error (sample std / sqrt(R)).
    estimate / std_error expose the p-th root with a delta-method error, the
    scale on which rates are fitted.
    """

    mean_power: float
    se_power: float
    replications: int
    p: float
    per_interval: dict | None = None
    extra: dict = field(default_factory=dict)

    @property
    def estimate(self) -> float:
        return self.mean_power ** (1.0 / self.p) if self.mean_power > 0 else 0.0

    @property
    def std_error(self) -> float:
        if self.mean_power <= 0 or self.p == 1:
            return self.se_power
        root = self.mean_power ** (1.0 / self.p)
        return self.se_power * root / (self.p * self.mean_power)


def _advance(stepper, state, t0: float, dt: float, incr: np.ndarray):
    t = t0
    for j in range(incr.shape[-1]):
        state = stepper.step(state, t, dt, incr[..., j])
        t += dt
    return state


def _ypos(stepper, state):
    if isinstance(stepper, TransformedMilsteinStepper):
        return state[1]
    return state


def _stack_states(states):
    """Concatenate states along the path axis so one step advances them all."""
    if isinstance(states[0], tuple):
        return tuple(np.concatenate([s[k] for s in states])
                     for k in range(len(states[0])))
    return np.concatenate(states)


def _split_state(state, size: int, parts: int):
    if isinstance(state, tuple):
        return [tuple(comp[i * size:(i + 1) * size] for comp in state)
                for i in range(parts)]
    return [state[i * size:(i + 1) * size] for i in range(parts)]


def _run_blocks(cfg: CouplingExperimentConfig, block_fn):
    R, bs = cfg.replications, cfg.block_size
    layout = [(bi, min(bs, R - bi * bs)) for bi in range((R + bs - 1) // bs)]
    workers = resolve_workers(cfg.workers)
    if workers == 1:
        return [_guard(block_fn, bi, size) for bi, size in layout]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_guard, block_fn, bi, size) for bi, size in layout]
        return [f.result() for f in futures]


def _guard(block_fn, bi, size):
    try:
        return block_fn(bi, size)
    except DivergenceError as exc:
        raise DivergenceError(
            f"{exc} (replication block {bi})", step_index=exc.step_index
        ) from exc


def _mean_se(total: float, total_sq: float, count: int) -> tuple[float, float]:
    mean = total / count
    if count < 2:
        return mean, 0.0
    var = max(0.0, (total_sq - count * mean * mean) / (count - 1))
    return mean, math.sqrt(var / count)


def global_coupling_distance(cfg: CouplingExperimentConfig,
                             swap_roles: bool = False) -> DistanceEstimate:
    """E|X_T - X~_T|^p for the globally coupled pair under the reference scheme.

    Per replication: sample the fine driver per coarse interval, couple its
    bridges, and advance X under W and X~ under W~ from the same x0.  With
    swap_roles the two drivers exchange places (a symmetry check; the law of
    the estimator must not change).
    """
    grid = cfg.coarse_grid()
    m = cfg.m

    def block(bi, size):
        stream = RngStream(cfg.seed, ("global-distance", bi))
        gen_w = stream.child("driver").generator
        gen_b = stream.child("bridge").generator
        stepper = cfg.make_reference_stepper()
        s = stepper.init_state(np.full(2 * size, cfg.model.x0))
        for i in range(grid.size - 1):
            delta = grid[i + 1] - grid[i]
            dw, dwt = coupled_increments(gen_w, gen_b, delta, m, size, cfg.kind)
            if swap_roles:
                dw, dwt = dwt, dw
            incr = np.concatenate([dw, dwt], axis=0)
            s = _advance(stepper, s, grid[i], delta / m, incr)
        pos = stepper.position(s)
        d = np.abs(pos[:size] - pos[size:]) ** cfg.p
        return float(np.sum(d)), float(np.sum(d * d)), size

    results = _run_blocks(cfg, block)
    total = sum(r[0] for r in results)
    total_sq = sum(r[1] for r in results)
    count = sum(r[2] for r in results)
    mean, se = _mean_se(total, total_sq, count)
    return DistanceEstimate(mean_power=mean, se_power=se, replications=count, p=cfg.p)


def local_coupling_distances(cfg: CouplingExperimentConfig) -> DistanceEstimate:
    """Per-interval distances of the transformed process and their sum.

    The transformed process Y runs under W on the full fine lattice; on each
    coarse interval a fresh solve restarts from the true Y_{t_{i-1}} under
    the coupled increments, and |Y_{t_i} - Y~^(i)|^2 is recorded.
    """
    if cfg.p != 2:
        raise ValidationError("local coupling distances are defined for p = 2")
    grid = cfg.coarse_grid()
    m = cfg.m
    n = grid.size - 1

    def block(bi, size):
        stream = RngStream(cfg.seed, ("local-distance", bi))
        gen_w = stream.child("driver").generator
        gen_b = stream.child("bridge").generator
        stepper = cfg.make_transformed_stepper()
        s = stepper.init_state(np.full(size, cfg.model.x0))
        l_sum = np.zeros(n)
        l_sq = np.zeros(n)
        totals = np.zeros(size)
        for i in range(n):
            delta = grid[i + 1] - grid[i]
            dw, dwt = coupled_increments(gen_w, gen_b, delta, m, size, cfg.kind)
            # advance the main path under W and the restarted local solve
            # under W~ in one stacked pass
            stacked = _advance(stepper, _stack_states([s, s]), grid[i], delta / m,
                               np.concatenate([dw, dwt], axis=0))
            s, s_loc = _split_state(stacked, size, 2)
            l_path = (_ypos(stepper, s) - _ypos(stepper, s_loc)) ** 2
            l_sum[i] += float(np.sum(l_path))
            l_sq[i] += float(np.sum(l_path**2))
            totals += l_path
        return l_sum, l_sq, float(np.sum(totals)), float(np.sum(totals**2)), size

    results = _run_blocks(cfg, block)
    count = sum(r[4] for r in results)
    l_sum = np.sum([r[0] for r in results], axis=0)
    l_sq = np.sum([r[1] for r in results], axis=0)
    tot = sum(r[2] for r in results)
    tot_sq = sum(r[3] for r in results)
    means = l_sum / count
    variances = np.maximum(0.0, (l_sq - count * means**2) / (count - 1))
    ses = np.sqrt(variances / count)
    mean, se = _mean_se(tot, tot_sq, count)
    grid_ = cfg.coarse_grid()
    per_interval = {
        "t_left": grid_[:-1].tolist(),
        "t_right": grid_[1:].tolist(),
        "mean": means.tolist(),
        "se": ses.tolist(),
    }
    return DistanceEstimate(mean_power=mean, se_power=se, replications=count,
                            p=2.0, per_interval=per_interval)


@dataclass(frozen=True)
class RecursionReport:
    """Empirical faces of the two-sided recursion for the coupled distances.

    Arrays are indexed by coarse interval i = 1..n.  The identity
    D_i = D_{i-1} + 2 m_i + d_i is estimated on common samples, so the
    residuals are zero up to floating-point roundoff by construction; their
    reported combined SEs bound the Monte Carlo scale.
    """

    n: int
    D: np.ndarray
    L: np.ndarray
    m_terms: np.ndarray
    d_terms: np.ndarray
    se_D: np.ndarray
    se_L: np.ndarray
    se_m: np.ndarray
    se_d: np.ndarray
    residuals: np.ndarray
    residual_ses: np.ndarray
    c1_hat: float
    c2_hat: float
    ratio: float
    excluded_intervals: tuple
    replications: int

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "D": self.D.tolist(),
            "L": self.L.tolist(),
            "m_terms": self.m_terms.tolist(),
            "d_terms": self.d_terms.tolist(),
            "residuals": self.residuals.tolist(),
            "c1_hat": self.c1_hat,
            "c2_hat": self.c2_hat,
            "ratio": self.ratio,
            "excluded_intervals": list(self.excluded_intervals),
        }


def check_recursion_bounds(cfg: CouplingExperimentConfig) -> RecursionReport:
    """Estimate D_i, L_i, m_i, d_i and the implied recursion constants."""
    if cfg.p != 2:
        raise ValidationError("the recursion decomposition requires p = 2")
    grid = cfg.coarse_grid()
    m = cfg.m
    n = grid.size - 1

    def block(bi, size):
        stream = RngStream(cfg.seed, ("recursion", bi))
        gen_w = stream.child("driver").generator
        gen_b = stream.child("bridge").generator
        stepper = cfg.make_transformed_stepper()
        x0 = np.full(size, cfg.model.x0)
        s = stepper.init_state(x0)
        st = stepper.init_state(x0)
        sums = {k: np.zeros(n) for k in ("D", "L", "m", "d")}
        sqs = {k: np.zeros(n) for k in ("D", "L", "m", "d")}
        for i in range(n):
            delta = grid[i + 1] - grid[i]
            dw, dwt = coupled_increments(gen_w, gen_b, delta, m, size, cfg.kind)
            y_prev, yt_prev = _ypos(stepper, s), _ypos(stepper, st)
            # stack [Y under W, Y~ under W~, local restart under W~]
            stacked = _advance(stepper, _stack_states([s, st, s]), grid[i],
                               delta / m, np.concatenate([dw, dwt, dwt], axis=0))
            s, st, s_loc = _split_state(stacked, size, 3)
            y, yt, y_loc = _ypos(stepper, s), _ypos(stepper, st), _ypos(stepper, s_loc)
            a = y_prev - yt_prev
            inc_diff = (y - y_prev) - (yt - yt_prev)
            vals = {
                "D": (y - yt) ** 2,
                "L": (y - y_loc) ** 2,
                "m": a * inc_diff,
                "d": inc_diff**2,
            }
            for k, v in vals.items():
                sums[k][i] += float(np.sum(v))
                sqs[k][i] += float(np.sum(v**2))
        return sums, sqs, size

    results = _run_blocks(cfg, block)
    count = sum(r[2] for r in results)
    means, ses = {}, {}
    for k in ("D", "L", "m", "d"):
        total = np.sum([r[0][k] for r in results], axis=0)
        total_sq = np.sum([r[1][k] for r in results], axis=0)
        mu = total / count
        var = np.maximum(0.0, (total_sq - count * mu**2) / (count - 1))
        means[k], ses[k] = mu, np.sqrt(var / count)

    d_prev = np.concatenate([[0.0], means["D"][:-1]])
    se_d_prev = np.concatenate([[0.0], ses["D"][:-1]])
    residuals = means["D"] - d_prev - 2.0 * means["m"] - means["d"]
    residual_ses = np.sqrt(ses["D"] ** 2 + se_d_prev**2 + 4.0 * ses["m"] ** 2 + ses["d"] ** 2)

    usable_c1 = d_prev > 10.0 * se_d_prev
    nn = float(n)
    c1_hat = float(np.max(nn * np.abs(means["m"][usable_c1]) / d_prev[usable_c1])) \
        if np.any(usable_c1) else 0.0
    usable_l = means["L"] > 10.0 * ses["L"]
    excluded = tuple(int(i + 1) for i in np.nonzero(~usable_l)[0])
    if np.any(usable_l):
        c2_vals = (means["D"][usable_l] - (1.0 - c1_hat / nn) * d_prev[usable_l]) / means["L"][usable_l]
        c2_hat = float(np.min(c2_vals))
    else:
        c2_hat = math.nan
    total_l = float(np.sum(means["L"]))
    ratio = float(means["D"][-1] / total_l) if total_l > 0 else math.nan

    return RecursionReport(
        n=n, D=means["D"], L=means["L"], m_terms=means["m"], d_terms=means["d"],
        se_D=ses["D"], se_L=ses["L"], se_m=ses["m"], se_d=ses["d"],
        residuals=residuals, residual_ses=residual_ses,
        c1_hat=c1_hat, c2_hat=c2_hat, ratio=ratio,
        excluded_intervals=excluded, replications=count,
    )


@dataclass(frozen=True)
class OccupationReport:
    """Lower-bound constant for L_i >= c dt_i^2 P(X near the jump)."""

    n: int
    L: np.ndarray
    q: np.ndarray
    occupation_prob: np.ndarray
    usable: np.ndarray
    c_hat: float
    c_lower_95: float
    c_upper_95: float
    conclusive: bool
    replications: int

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "L": self.L.tolist(),
            "q": self.q.tolist(),
            "occupation_prob": self.occupation_prob.tolist(),
            "usable": self.usable.astype(int).tolist(),
            "c_hat": self.c_hat,
            "c_lower_95": self.c_lower_95,
            "c_upper_95": self.c_upper_95,
            "conclusive": self.conclusive,
        }


def occupation_lower_bound_check(cfg: CouplingExperimentConfig, xi: float,
                                 bootstrap: int = 1000) -> OccupationReport:
    """Estimate c in the occupation-time lower bound near the jump position.

    Per interval the local coupling distance L_i and the weight
    q_i = dt_i^2 * P(X_{t_{i-1}} in [xi - sqrt(dt_i), xi + sqrt(dt_i)]) are
    estimated; c_hat = min L_i / q_i over intervals whose occupation weight
    is resolved (q_i above 10 of its standard errors).  A multinomial
    bootstrap over replications gives the 95% interval for c_hat.
    """
    if cfg.p != 2:
        raise ValidationError("the occupation bound requires p = 2")
    grid = cfg.coarse_grid()
    m = cfg.m
    n = grid.size - 1
    deltas = np.diff(grid)

    def block(bi, size):
        stream = RngStream(cfg.seed, ("occupation", bi))
        gen_w = stream.child("driver").generator
        gen_b = stream.child("bridge").generator
        stepper = cfg.make_transformed_stepper()
        s = stepper.init_state(np.full(size, cfg.model.x0))
        l_paths = np.empty((size, n))
        ind_paths = np.empty((size, n))
        for i in range(n):
            delta = deltas[i]
            x_start = stepper.position(s)
            half = math.sqrt(delta)
            ind_paths[:, i] = (np.abs(x_start - xi) <= half).astype(float)
            dw, dwt = coupled_increments(gen_w, gen_b, delta, m, size, cfg.kind)
            stacked = _advance(stepper, _stack_states([s, s]), grid[i], delta / m,
                               np.concatenate([dw, dwt], axis=0))
            s, s_loc = _split_state(stacked, size, 2)
            l_paths[:, i] = (_ypos(stepper, s) - _ypos(stepper, s_loc)) ** 2
        return l_paths, ind_paths, size

    results = _run_blocks(cfg, block)
    l_all = np.concatenate([r[0] for r in results], axis=0)
    ind_all = np.concatenate([r[1] for r in results], axis=0)
    count = l_all.shape[0]
    l_mean = np.mean(l_all, axis=0)
    p_hat = np.mean(ind_all, axis=0)
    q = deltas**2 * p_hat
    se_p = np.sqrt(np.maximum(p_hat * (1.0 - p_hat), 0.0) / count)
    usable = (p_hat > 0) & (p_hat > 10.0 * se_p)
    conclusive = bool(np.any(usable))
    if conclusive:
        ratios = l_mean[usable] / q[usable]
        c_hat = float(np.min(ratios))
        gen = RngStream(cfg.seed, ("occupation", "bootstrap")).generator
        # resample L and the occupation indicators jointly (paired per path)
        k = int(np.sum(usable))
        stacked = np.concatenate([l_all[:, usable], ind_all[:, usable]], axis=1)
        boot = bootstrap_means(stacked, bootstrap, gen)
        boot_l, boot_p = boot[:, :k], boot[:, k:]
        boot_q = deltas[usable] ** 2 * boot_p
        with np.errstate(divide="ignore", invalid="ignore"):
            boot_c = np.min(np.where(boot_q > 0, boot_l / boot_q, np.inf), axis=1)
        c_lo = float(np.quantile(boot_c, 0.025))
        c_hi = float(np.quantile(boot_c, 0.975))
    else:
        c_hat, c_lo, c_hi = math.nan, math.nan, math.nan
    return OccupationReport(
        n=n, L=l_mean, q=q, occupation_prob=p_hat, usable=usable,
        c_hat=c_hat, c_lower_95=c_lo, c_upper_95=c_hi,
        conclusive=conclusive, replications=count,
    )


def global_l1_coupling_gap(cfg: CouplingExperimentConfig) -> DistanceEstimate:
    """Time-integrated gap between frozen-coefficient values under W and W~.

    Per replication and coarse interval the frozen-coefficient values differ
    by sigma(X_{t_{i-1}}) (B_s - B~_s); the fine-lattice trapezoid of the
    absolute difference accumulates over intervals.  The post-hoc minimum of
    |sigma(X_{t_{i-1}})| is reported in extra.
    """
    if cfg.p != 1:
        raise ValidationError("the global coupling gap is an L1 quantity; set p = 1")
    grid = cfg.coarse_grid()
    m = cfg.m
    n = grid.size - 1

    def block(bi, size):
        stream = RngStream(cfg.seed, ("l1-gap", bi))
        gen_w = stream.child("driver").generator
        gen_b = stream.child("bridge").generator
        stepper = cfg.make_reference_stepper()
        s = stepper.init_state(np.full(size, cfg.model.x0))
        gap = np.zeros(size)
        min_sigma = np.full(size, np.inf)
        frac = np.arange(1, m + 1) / m
        for i in range(n):
            delta = grid[i + 1] - grid[i]
            dt = delta / m
            x_start = stepper.position(s)
            sval = np.abs(np.asarray(cfg.model.diffusion(x_start)))
            min_sigma = np.minimum(min_sigma, sval)
            dw, dwt = coupled_increments(gen_w, gen_b, delta, m, size, cfg.kind)
            w_rel = np.cumsum(dw, axis=-1)
            wt_rel = np.cumsum(dwt, axis=-1)
            b = w_rel - frac * w_rel[..., -1:]
            bt = wt_rel - frac * wt_rel[..., -1:]
            diff = np.abs(b - bt)
            integral = dt * np.sum(diff[..., :-1], axis=-1)
            gap += sval * integral
            s = _advance(stepper, s, grid[i], dt, dw)
        return float(np.sum(gap)), float(np.sum(gap**2)), float(np.min(min_sigma)), size

    results = _run_blocks(cfg, block)
    count = sum(r[3] for r in results)
    mean, se = _mean_se(sum(r[0] for r in results), sum(r[1] for r in results), count)
    min_sigma = min(r[2] for r in results)
    return DistanceEstimate(mean_power=mean, se_power=se, replications=count, p=1.0,
                            extra={"min_sigma_abs": min_sigma})


@dataclass(frozen=True)
class OracleReport:
    """Nested-MC conditional expectation error and the variance identity."""

    error_sq: float
    error_sq_se: float
    inner: int
    distance: DistanceEstimate
    identity_ratio: float
    identity_ratio_se: float
    replications: int

    @property
    def error(self) -> float:
        return math.sqrt(max(0.0, self.error_sq))

    def to_dict(self) -> dict:
        return {
            "error_sq": self.error_sq,
            "error_sq_se": self.error_sq_se,
            "inner": self.inner,
            "identity_ratio": self.identity_ratio,
            "identity_ratio_se": self.identity_ratio_se,
            "distance_sq": self.distance.mean_power,
            "distance_sq_se": self.distance.se_power,
        }


def conditional_expectation_oracle(cfg: CouplingExperimentConfig,
                                   inner: int = 64) -> OracleReport:
    """Best-possible final-time approximation from the coarse observations.

    For each outer replication the coarse Brownian values are fixed, `inner`
    independent bridge fillings are solved to T, and the unbiased
    within-group variance estimates E[Var(X_T | coarse values)] -- the
    squared error of the conditional expectation.  The identity ratio
    2 error^2 / E|X_T - X~_T|^2 (expected ~1) is computed against an
    independent run of the global coupling distance on the same grid.
    """
    if cfg.p != 2:
        raise ValidationError("the oracle identity requires p = 2")
    if inner < 2:
        raise ValidationError("inner must be at least 2")
    grid = cfg.coarse_grid()
    m = cfg.m
    n = grid.size - 1
    outer_block = max(1, cfg.block_size // inner)
    oracle_cfg = replace(cfg, block_size=outer_block)

    def block(bi, size):
        stream = RngStream(cfg.seed, ("oracle", bi))
        gen_c = stream.child("coarse").generator
        gen_f = stream.child("fill").generator
        stepper = cfg.make_reference_stepper()
        s = stepper.init_state(np.full((size, inner), cfg.model.x0))
        for i in range(n):
            delta = grid[i + 1] - grid[i]
            dt = delta / m
            dwc = gen_c.standard_normal(size) * math.sqrt(delta)
            dv = gen_f.standard_normal((size, inner, m)) * math.sqrt(dt)
            db = dv - np.mean(dv, axis=-1, keepdims=True)
            incr = db + dwc[:, None, None] / m
            s = _advance(stepper, s, grid[i], dt, incr)
        finals = stepper.position(s)
        v = np.var(finals, axis=1, ddof=1)
        return float(np.sum(v)), float(np.sum(v**2)), size

    results = _run_blocks(oracle_cfg, block)
    count = sum(r[2] for r in results)
    err_sq, err_se = _mean_se(sum(r[0] for r in results), sum(r[1] for r in results), count)

    dist = global_coupling_distance(replace(cfg, kind=CouplingKind.INDEPENDENT_RESAMPLE))
    if dist.mean_power > 0:
        ratio = 2.0 * err_sq / dist.mean_power
        rel = math.sqrt((err_se / err_sq) ** 2 + (dist.se_power / dist.mean_power) ** 2) \
            if err_sq > 0 else 0.0
        ratio_se = abs(ratio) * rel
    else:
        ratio, ratio_se = math.nan, math.nan
    return OracleReport(
        error_sq=err_sq, error_sq_se=err_se, inner=inner, distance=dist,
        identity_ratio=ratio, identity_ratio_se=ratio_se, replications=count,
    )
