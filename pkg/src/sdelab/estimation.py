"""Statistical backbone: Monte Carlo CIs, kernel density, rate regression."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .coefficients import SdeModel
from .errors import InsufficientDataError, ValidationError
from .noise import RngStream, sample_brownian_lattice
from .solvers import make_stepper, run_scheme


def mc_mean_ci(samples, level: float = 0.95) -> tuple[float, float]:
    """Sample mean with a normal-approximation CI half-width."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise InsufficientDataError("need at least 2 samples")
    if not 0.0 < level < 1.0:
        raise ValidationError("level must be in (0, 1)")
    z = stats.norm.ppf(0.5 * (1.0 + level))
    mean = float(np.mean(x))
    half = float(z * np.std(x, ddof=1) / math.sqrt(x.size))
    return mean, half


def bootstrap_means(values: np.ndarray, resamples: int, gen: np.random.Generator,
                    chunk: int = 200) -> np.ndarray:
    """Multinomial-weight bootstrap of column means.

    `values` has replications along axis 0; returns (resamples, ...) means.
    """
    r = values.shape[0]
    out = []
    flat = values.reshape(r, -1)
    for start in range(0, resamples, chunk):
        b = min(chunk, resamples - start)
        counts = gen.multinomial(r, np.full(r, 1.0 / r), size=b).astype(float)
        out.append(counts @ flat / r)
    boot = np.concatenate(out, axis=0)
    return boot.reshape((resamples,) + values.shape[1:])


@dataclass(frozen=True)
class RateEstimate:
    """OLS fit of log error against log n with a t-based slope CI."""

    slope: float
    intercept: float
    r_squared: float
    slope_ci_half_width: float
    count: int
    level: float
    excluded: tuple = ()
    monotone: bool = True

    def slope_interval(self) -> tuple[float, float]:
        return self.slope - self.slope_ci_half_width, self.slope + self.slope_ci_half_width


def fit_rate(points, level: float = 0.95) -> RateEstimate:
    """Fit the convergence exponent from (n, error, se) triples.

    Points whose error is below 3x its standard error are excluded (and
    reported); at least 3 usable points are required.
    """
    usable, excluded = [], []
    for n, err, se in points:
        if err <= 0:
            raise ValidationError(f"errors must be positive (n={n}: {err})")
        if err < 3.0 * se:
            excluded.append(int(n))
        else:
            usable.append((float(n), float(err)))
    if len(usable) < 3:
        raise InsufficientDataError(
            f"only {len(usable)} usable points after exclusion {excluded}"
        )
    usable.sort(key=lambda q: q[0])
    ns = np.array([q[0] for q in usable])
    errs = np.array([q[1] for q in usable])
    x = np.log(ns)
    y = np.log(errs)
    k = x.size
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    ssr = float(np.sum(resid**2))
    sst = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if sst == 0.0 else 1.0 - ssr / sst
    sigma2 = ssr / (k - 2) if k > 2 else 0.0
    slope_se = math.sqrt(sigma2 / sxx)
    t_mult = stats.t.ppf(0.5 * (1.0 + level), k - 2)
    half = float(t_mult * slope_se)
    monotone = bool(np.all(np.diff(errs) <= 0))
    return RateEstimate(
        slope=slope, intercept=intercept, r_squared=r2,
        slope_ci_half_width=half, count=k, level=level,
        excluded=tuple(excluded), monotone=monotone,
    )


@dataclass(frozen=True)
class DensityEstimate:
    """Gaussian-kernel density value at one point, or a point-mass diagnostic."""

    value: float | None
    std_error: float | None
    bandwidth: float | None
    replications: int
    point_mass_at: float | None = None
    lower_99: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def is_point_mass(self) -> bool:
        return self.point_mass_at is not None

    def positive_at_99(self) -> bool:
        return self.lower_99 is not None and self.lower_99 > 0.0


def kernel_density_at(model: SdeModel, t_star: float, xi: float, *,
                      replications: int, seed: int, steps: int = 1024,
                      scheme: str = "milstein", transform=None,
                      bootstrap: int = 1000, block_size: int = 4096) -> DensityEstimate:
    """Kernel density of the solution at (t_star, xi) from simulated paths.

    Uses the requested reference scheme to t_star, a Gaussian kernel with the
    Silverman-type bandwidth h = R^{-1/5} * sample std, and a bootstrap for
    the standard error and the one-sided 99% lower confidence bound.
    """
    if not 0.0 < t_star <= model.horizon:
        raise ValidationError("t_star must lie in (0, horizon]")
    stepper = make_stepper(scheme, model, transform)
    times = np.linspace(0.0, t_star, steps + 1)
    finals = []
    root = RngStream(seed)
    n_blocks = (replications + block_size - 1) // block_size
    for bi in range(n_blocks):
        size = min(block_size, replications - bi * block_size)
        driver = sample_brownian_lattice(root.child("kde", bi), times, paths=size)
        path = run_scheme(stepper, model.x0, driver)
        finals.append(path.final())
    x = np.concatenate(finals)
    sd = float(np.std(x, ddof=1))
    if sd <= 1e-13 * max(1.0, float(np.max(np.abs(x)))):
        return DensityEstimate(value=None, std_error=None, bandwidth=None,
                               replications=replications, point_mass_at=float(x[0]))
    h = replications ** (-0.2) * sd
    kernel_vals = np.exp(-0.5 * ((xi - x) / h) ** 2) / (h * math.sqrt(2.0 * math.pi))
    est = float(np.mean(kernel_vals))
    boot = bootstrap_means(kernel_vals[:, None], bootstrap,
                           root.child("kde-boot").generator)[:, 0]
    se = float(np.std(boot, ddof=1))
    lower99 = float(np.quantile(boot, 0.01))
    return DensityEstimate(value=est, std_error=se, bandwidth=h,
                           replications=replications, lower_99=lower99,
                           extra={"sample_std": sd})
