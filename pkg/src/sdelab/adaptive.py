"""Adaptive Brownian-evaluation methods, their cost and their global error.

A method chooses each evaluation time from previously observed data, decides
when to stop, and maps the observed data to an output path.  The Brownian
path is realized lazily: every query is answered by exact conditional
sampling against the already-known knots, so one consistent path underlies
any query pattern.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .coefficients import SdeModel
from .couplings import CouplingExperimentConfig, DistanceEstimate, _mean_se, _run_blocks
from .errors import NonTerminationError, RangeError, ValidationError
from .noise import PathLattice, RngStream
from .solvers import make_stepper, run_scheme
from .transforms import Transform

DEFAULT_QUERY_CAP = 10**6


@dataclass
class ObservedData:
    """x0 plus the queried times and observed Brownian values, in order."""

    x0: float
    times: list = field(default_factory=list)
    values: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class OutputPath:
    """Piecewise-constant path on a declared grid (right-open intervals)."""

    knots: np.ndarray
    values: np.ndarray

    def __init__(self, knots, values):
        k = np.asarray(knots, dtype=float)
        v = np.asarray(values, dtype=float)
        if k.ndim != 1 or k.shape != v.shape[-1:] or k.size == 0:
            raise ValidationError("knots and values must align")
        if k.size > 1 and not np.all(np.diff(k) > 0):
            raise ValidationError("knots must be strictly increasing")
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", v)

    def evaluate(self, ts):
        idx = np.clip(np.searchsorted(self.knots, ts, side="right") - 1, 0, self.knots.size - 1)
        return self.values[..., idx]

    def value_at(self, t: float) -> float:
        return float(np.asarray(self.evaluate(np.asarray(t))))


class BrownianPathOracle:
    """Lazily refined Brownian path supporting exact conditional queries.

    Querying a known knot returns the stored value; a time beyond the current
    span extends the path with a fresh Gaussian increment; an interior time
    is sampled from the bridge law between the bracketing knots.
    """

    def __init__(self, stream: RngStream, horizon: float):
        self.horizon = float(horizon)
        self.gen = stream.generator
        self.times = np.array([0.0])
        self.values = np.array([0.0])
        self.queries = 0

    @classmethod
    def from_lattice(cls, lattice: PathLattice, stream: RngStream) -> "BrownianPathOracle":
        if lattice.values.ndim != 1:
            raise ValidationError("oracle wraps a single path")
        oracle = cls(stream, horizon=float(lattice.times[-1]))
        oracle.times = lattice.times.copy()
        oracle.values = lattice.values.copy()
        return oracle

    def query(self, t: float) -> float:
        t = float(t)
        if not 0.0 <= t <= self.horizon:
            raise RangeError(f"query time {t} outside [0, {self.horizon}]")
        self.queries += 1
        idx = np.searchsorted(self.times, t)
        if idx < self.times.size and self.times[idx] == t:
            return float(self.values[idx])
        if t > self.times[-1]:
            value = self.values[-1] + math.sqrt(t - self.times[-1]) * self.gen.standard_normal()
        else:
            a, b = self.times[idx - 1], self.times[idx]
            wa, wb = self.values[idx - 1], self.values[idx]
            mean = wa + (t - a) / (b - a) * (wb - wa)
            var = (t - a) * (b - t) / (b - a)
            value = mean + math.sqrt(var) * self.gen.standard_normal()
        self.times = np.insert(self.times, idx, t)
        self.values = np.insert(self.values, idx, value)
        return float(value)


class AdaptiveMethod:
    """Evaluation-point policy, stopping rule and output map."""

    name = "abstract"
    is_fixed_grid = False

    def next_time(self, data: ObservedData) -> float:
        raise NotImplementedError

    def should_stop(self, data: ObservedData) -> bool:
        raise NotImplementedError

    def output(self, data: ObservedData) -> OutputPath:
        raise NotImplementedError

    def final_value(self, data: ObservedData) -> float:
        return self.output(data).value_at(max(data.times))


def run_adaptive(method: AdaptiveMethod, x0: float, oracle: BrownianPathOracle,
                 cap: int = DEFAULT_QUERY_CAP):
    """Drive a method against one lazily simulated path.

    Returns (output path, cost) where cost is the number of Brownian
    evaluations until the stop policy fired.  Exceeding `cap` queries raises
    NonTerminationError (the method class requires almost-surely finite cost).
    """
    if cap < 1:
        raise ValidationError("cap must be at least 1")
    data = ObservedData(x0=float(x0))
    while True:
        t = float(method.next_time(data))
        y = oracle.query(t)
        data.times.append(t)
        data.values.append(y)
        if method.should_stop(data):
            break
        if data.k >= cap:
            raise NonTerminationError(f"method {method.name!r} exceeded {cap} queries")
    return method.output(data), data.k


@dataclass(frozen=True)
class CostEstimate:
    mean: float
    std_error: float
    replications: int
    budget: int | None = None

    @property
    def within_budget(self) -> bool | None:
        return None if self.budget is None else self.mean <= self.budget


def mean_cost(method: AdaptiveMethod, model: SdeModel, replications: int,
              seed: int, budget: int | None = None,
              cap: int = DEFAULT_QUERY_CAP) -> CostEstimate:
    """Monte Carlo mean of the number of evaluations, with standard error."""
    if replications < 1:
        raise ValidationError("replications must be positive")
    root = RngStream(seed, ("mean-cost",))
    costs = np.empty(replications)
    for r in range(replications):
        oracle = BrownianPathOracle(root.child(r), model.horizon)
        _, nu = run_adaptive(method, model.x0, oracle, cap=cap)
        costs[r] = nu
    se = float(np.std(costs, ddof=1) / math.sqrt(replications)) if replications > 1 else 0.0
    return CostEstimate(mean=float(np.mean(costs)), std_error=se,
                        replications=replications, budget=budget)


# -- built-in methods ---------------------------------------------------------


class FixedGridSchemeMethod(AdaptiveMethod):
    """Scheme on the uniform grid, output piecewise-constant interpolated."""

    is_fixed_grid = True

    def __init__(self, model: SdeModel, n: int, scheme: str,
                 transform: Transform | None = None, name: str | None = None):
        if n < 1:
            raise ValidationError("n must be at least 1")
        self.model = model
        self.n = int(n)
        self.scheme = scheme
        self.transform = transform
        self.name = name or f"uniform-{scheme}"
        self.grid = np.linspace(0.0, model.horizon, self.n + 1)

    def next_time(self, data: ObservedData) -> float:
        return float(self.grid[data.k + 1])

    def should_stop(self, data: ObservedData) -> bool:
        return data.k >= self.n

    def states_batch(self, coarse_values: np.ndarray) -> np.ndarray:
        """Scheme states on the grid for a batch of coarse value rows."""
        driver = PathLattice(self.grid, coarse_values)
        stepper = make_stepper(self.scheme, self.model, self.transform)
        return run_scheme(stepper, self.model.x0, driver).values

    def output(self, data: ObservedData) -> OutputPath:
        w = np.concatenate([[0.0], np.asarray(data.values, dtype=float)])
        states = self.states_batch(w)
        return OutputPath(self.grid, states)


class ZeroPathMethod(AdaptiveMethod):
    """Queries W_T once and outputs the zero path (test utility)."""

    name = "zero-path"
    is_fixed_grid = True
    grid_free = True  # output ignores the experiment grid entirely

    def __init__(self, model: SdeModel):
        self.model = model
        self.n = 1
        self.grid = np.array([0.0, model.horizon])

    def next_time(self, data: ObservedData) -> float:
        return self.model.horizon

    def should_stop(self, data: ObservedData) -> bool:
        return data.k >= 1

    def states_batch(self, coarse_values: np.ndarray) -> np.ndarray:
        return np.zeros_like(coarse_values)

    def output(self, data: ObservedData) -> OutputPath:
        return OutputPath(self.grid, np.zeros(2))


class ConditionalExpectationOracleMethod(AdaptiveMethod):
    """Nested-MC conditional expectation of X_T given the uniform-grid values.

    The inner bridge fillings are deterministic functions of the observed
    data (their stream is keyed by a hash of the observed values), so the
    method is pure in the sense of the adaptive class.
    """

    is_fixed_grid = True
    name = "conditional-expectation-oracle"

    def __init__(self, model: SdeModel, n: int, inner: int = 64,
                 fill_substeps: int = 64, transform: Transform | None = None,
                 seed: int = 0):
        if inner < 2:
            raise ValidationError("inner must be at least 2")
        self.model = model
        self.n = int(n)
        self.inner = int(inner)
        self.fill_substeps = int(fill_substeps)
        self.transform = transform
        self.seed = int(seed)
        self.grid = np.linspace(0.0, model.horizon, self.n + 1)

    def next_time(self, data: ObservedData) -> float:
        return float(self.grid[data.k + 1])

    def should_stop(self, data: ObservedData) -> bool:
        return data.k >= self.n

    def final_value_batch(self, coarse_values: np.ndarray,
                          gen: np.random.Generator) -> np.ndarray:
        """ghat for a batch of coarse rows, inner fills drawn from gen."""
        vals = np.atleast_2d(np.asarray(coarse_values, dtype=float))
        size = vals.shape[0]
        incs = np.diff(vals, axis=-1)
        m = self.fill_substeps
        stepper = make_stepper(
            "transformed-milstein" if self.transform is not None else "milstein",
            self.model, self.transform)
        s = stepper.init_state(np.full((size, self.inner), self.model.x0))
        for i in range(self.n):
            delta = self.grid[i + 1] - self.grid[i]
            dt = delta / m
            dv = gen.standard_normal((size, self.inner, m)) * math.sqrt(dt)
            db = dv - np.mean(dv, axis=-1, keepdims=True)
            incr = db + incs[:, i][:, None, None] / m
            t = self.grid[i]
            for j in range(m):
                s = stepper.step(s, t, dt, incr[..., j])
                t += dt
        return np.mean(stepper.position(s), axis=1)

    def final_value(self, data: ObservedData) -> float:
        w = np.concatenate([[0.0], np.asarray(data.values, dtype=float)])
        label = hashlib.blake2b(w.tobytes(), digest_size=8).hexdigest()
        gen = RngStream(self.seed, ("oracle-fills", label)).generator
        return float(self.final_value_batch(w[None, :], gen)[0])

    def output(self, data: ObservedData) -> OutputPath:
        g = self.final_value(data)
        return OutputPath(np.array([0.0]), np.array([g]))


class LargestIncrementBisectionMethod(AdaptiveMethod):
    """Adaptive exemplar: repeatedly bisect the largest-|increment| interval.

    The first query is the horizon; afterwards the midpoint of the knot
    interval with the largest absolute observed increment is queried, until
    the fixed budget is exhausted.  Output is the piecewise-constant
    interpolation of a scheme run on the sorted observed lattice.
    """

    is_fixed_grid = False
    name = "largest-increment-bisection"

    def __init__(self, model: SdeModel, budget: int, scheme: str = "euler",
                 transform: Transform | None = None):
        if budget < 1:
            raise ValidationError("budget must be at least 1")
        self.model = model
        self.budget = int(budget)
        self.scheme = scheme
        self.transform = transform

    def _knots(self, data: ObservedData):
        t = np.concatenate([[0.0], np.asarray(data.times, dtype=float)])
        w = np.concatenate([[0.0], np.asarray(data.values, dtype=float)])
        order = np.argsort(t)
        return t[order], w[order]

    def next_time(self, data: ObservedData) -> float:
        if data.k == 0:
            return self.model.horizon
        t, w = self._knots(data)
        i = int(np.argmax(np.abs(np.diff(w))))
        return 0.5 * (t[i] + t[i + 1])

    def should_stop(self, data: ObservedData) -> bool:
        return data.k >= self.budget

    def output(self, data: ObservedData) -> OutputPath:
        t, w = self._knots(data)
        driver = PathLattice(t, w)
        stepper = make_stepper(self.scheme, self.model, self.transform)
        states = run_scheme(stepper, self.model.x0, driver).values
        return OutputPath(t, states)


BUILTIN_METHOD_NAMES = (
    "uniform-euler",
    "uniform-milstein",
    "uniform-transformed-milstein",
    "conditional-expectation-oracle",
    "largest-increment-bisection",
)


def make_builtin_method(name: str, model: SdeModel, n: int,
                        transform: Transform | None = None, **kw) -> AdaptiveMethod:
    if name == "uniform-euler":
        return FixedGridSchemeMethod(model, n, "euler", name=name)
    if name == "uniform-milstein":
        return FixedGridSchemeMethod(model, n, "milstein", name=name)
    if name == "uniform-transformed-milstein":
        if transform is None:
            raise ValidationError(f"{name} requires a transform")
        return FixedGridSchemeMethod(model, n, "transformed-milstein",
                                     transform=transform, name=name)
    if name == "conditional-expectation-oracle":
        return ConditionalExpectationOracleMethod(model, n, transform=transform, **kw)
    if name == "largest-increment-bisection":
        return LargestIncrementBisectionMethod(model, budget=n, **kw)
    raise ValidationError(f"unknown method {name!r}; built-ins: {BUILTIN_METHOD_NAMES}")


# -- error measurement --------------------------------------------------------


def _check_method_grid(method: AdaptiveMethod, grid: np.ndarray) -> None:
    if not method.is_fixed_grid or getattr(method, "grid_free", False):
        return
    mg = np.asarray(getattr(method, "grid"))
    if mg.size != grid.size or not np.allclose(mg, grid, rtol=0, atol=1e-15):
        raise ValidationError("method grid must match the experiment coarse grid")


def _coarse_from_stream(stream: RngStream, grid: np.ndarray, mf: int, size: int):
    """Coarse Brownian values implied by the fine per-interval increments."""
    gen = stream.generator
    n = grid.size - 1
    coarse = np.zeros((size, n + 1))
    for i in range(n):
        dt = (grid[i + 1] - grid[i]) / mf
        z = gen.standard_normal((size, mf))
        coarse[:, i + 1] = coarse[:, i] + np.sum(z, axis=-1) * math.sqrt(dt)
    return coarse


def global_l1_error(method: AdaptiveMethod, cfg: CouplingExperimentConfig,
                    ref_multiplier: int = 16) -> DistanceEstimate:
    """E || X_ref - method output ||_{L1([0,T])} by fine-lattice trapezoid.

    The reference solution runs the reference scheme on a lattice
    ref_multiplier times finer than the experiment's fine lattice; the method
    sees the same Brownian path (its grid values coincide with the fine
    lattice's).  Fixed-grid methods are evaluated in a vectorized two-pass
    sweep over the identical increment stream; general methods fall back to
    per-path lazy oracles.
    """
    grid = cfg.coarse_grid()
    mf = cfg.m * ref_multiplier
    _check_method_grid(method, grid)

    if method.is_fixed_grid:
        def block(bi, size):
            stream = RngStream(cfg.seed, ("adaptive-l1", bi))
            coarse = _coarse_from_stream(stream.child("driver"), grid, mf, size)
            states = method.states_batch(coarse)
            stepper = cfg.make_reference_stepper()
            s = stepper.init_state(np.full(size, cfg.model.x0))
            gen2 = stream.child("driver").generator  # identical replay
            gap = np.zeros(size)
            for i in range(grid.size - 1):
                dt = (grid[i + 1] - grid[i]) / mf
                z = gen2.standard_normal((size, mf))
                out_i = states[:, i]
                prev = stepper.position(s)
                for j in range(mf):
                    s = stepper.step(s, grid[i] + j * dt, dt, z[:, j] * math.sqrt(dt))
                    cur = stepper.position(s)
                    # right-open piecewise-constant output: the knot at the
                    # coarse boundary already carries the next interval value
                    cur_out = states[:, i + 1] if j == mf - 1 else out_i
                    gap += 0.5 * dt * (np.abs(prev - out_i) + np.abs(cur - cur_out))
                    prev = cur
            return float(np.sum(gap)), float(np.sum(gap**2)), size

        results = _run_blocks(cfg, block)
    else:
        fine_knots = (grid.size - 1) * mf + 1
        block_size = max(1, min(cfg.block_size, 8_000_000 // fine_knots))
        path_cfg = replace(cfg, block_size=block_size)
        fine_times = _fine_times(grid, mf)

        def block(bi, size):
            stream = RngStream(cfg.seed, ("adaptive-l1-generic", bi))
            gaps = np.empty(size)
            for r in range(size):
                lattice = _sample_fine_path(stream.child("driver", r), fine_times)
                oracle = BrownianPathOracle.from_lattice(lattice, stream.child("refine", r))
                out, _ = run_adaptive(method, cfg.model.x0, oracle)
                stepper = cfg.make_reference_stepper()
                ref = run_scheme(stepper, cfg.model.x0, lattice).values
                diff = np.abs(ref - out.evaluate(fine_times))
                gaps[r] = float(np.trapezoid(diff, fine_times))
            return float(np.sum(gaps)), float(np.sum(gaps**2)), size

        results = _run_blocks(path_cfg, block)

    count = sum(r[2] for r in results)
    mean, se = _mean_se(sum(r[0] for r in results), sum(r[1] for r in results), count)
    return DistanceEstimate(mean_power=mean, se_power=se, replications=count, p=1.0,
                            extra={"ref_multiplier": ref_multiplier, "method": method.name})


def final_time_method_error(method: AdaptiveMethod, cfg: CouplingExperimentConfig,
                            ref_multiplier: int = 16) -> DistanceEstimate:
    """Root-mean-square final-time error of a method against the reference."""
    grid = cfg.coarse_grid()
    mf = cfg.m * ref_multiplier
    _check_method_grid(method, grid)

    if method.is_fixed_grid:
        def block(bi, size):
            stream = RngStream(cfg.seed, ("adaptive-final", bi))
            coarse = _coarse_from_stream(stream.child("driver"), grid, mf, size)
            if isinstance(method, ConditionalExpectationOracleMethod):
                ghat = method.final_value_batch(coarse, stream.child("fills").generator)
            else:
                ghat = method.states_batch(coarse)[:, -1]
            stepper = cfg.make_reference_stepper()
            s = stepper.init_state(np.full(size, cfg.model.x0))
            gen2 = stream.child("driver").generator
            for i in range(grid.size - 1):
                dt = (grid[i + 1] - grid[i]) / mf
                z = gen2.standard_normal((size, mf))
                for j in range(mf):
                    s = stepper.step(s, grid[i] + j * dt, dt, z[:, j] * math.sqrt(dt))
            err = (stepper.position(s) - ghat) ** 2
            return float(np.sum(err)), float(np.sum(err**2)), size

        results = _run_blocks(cfg, block)
    else:
        fine_knots = (grid.size - 1) * mf + 1
        block_size = max(1, min(cfg.block_size, 8_000_000 // fine_knots))
        path_cfg = replace(cfg, block_size=block_size)
        fine_times = _fine_times(grid, mf)

        def block(bi, size):
            stream = RngStream(cfg.seed, ("adaptive-final-generic", bi))
            lattices = np.empty((size, fine_times.size))
            ghat = np.empty(size)
            for r in range(size):
                lattice = _sample_fine_path(stream.child("driver", r), fine_times)
                lattices[r] = lattice.values
                oracle = BrownianPathOracle.from_lattice(lattice, stream.child("refine", r))
                data = ObservedData(x0=cfg.model.x0)
                while True:
                    t = float(method.next_time(data))
                    data.times.append(t)
                    data.values.append(oracle.query(t))
                    if method.should_stop(data):
                        break
                    if data.k >= DEFAULT_QUERY_CAP:
                        raise NonTerminationError(f"method {method.name!r} did not stop")
                ghat[r] = method.final_value(data)
            driver = PathLattice(fine_times, lattices)
            stepper = cfg.make_reference_stepper()
            ref = run_scheme(stepper, cfg.model.x0, driver).final()
            err = (ref - ghat) ** 2
            return float(np.sum(err)), float(np.sum(err**2)), size

        results = _run_blocks(path_cfg, block)

    count = sum(r[2] for r in results)
    mean, se = _mean_se(sum(r[0] for r in results), sum(r[1] for r in results), count)
    return DistanceEstimate(mean_power=mean, se_power=se, replications=count, p=2.0,
                            extra={"ref_multiplier": ref_multiplier, "method": method.name})


def _fine_times(grid: np.ndarray, mf: int) -> np.ndarray:
    parts = [np.array([0.0])]
    for i in range(grid.size - 1):
        parts.append(np.linspace(grid[i], grid[i + 1], mf + 1)[1:])
    return np.concatenate(parts)


def _sample_fine_path(stream: RngStream, fine_times: np.ndarray) -> PathLattice:
    gen = stream.generator
    dt = np.diff(fine_times)
    incr = gen.standard_normal(dt.size) * np.sqrt(dt)
    values = np.concatenate([[0.0], np.cumsum(incr)])
    return PathLattice(fine_times, values)
