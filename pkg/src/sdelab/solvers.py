"""Pathwise SDE schemes on a lattice.

All schemes are deterministic functions of (model, x0, driver): identical
inputs produce bitwise-identical outputs.  States are numpy arrays batched
over independent paths, so one call advances every replication at once.
Breakpoint evaluation uses the 'at' convention of the coefficients module
(explicit value if declared, right limit otherwise).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficients import Coefficient, SdeModel
from .errors import DivergenceError, ValidationError
from .noise import PathLattice
from .transforms import Transform

SCHEMES = ("euler", "milstein", "transformed-milstein")


@dataclass(frozen=True, eq=False)
class SolutionPath:
    """Scheme output on the driver lattice; values[..., 0] equals x0."""

    times: np.ndarray
    values: np.ndarray
    scheme: str
    driver: PathLattice

    def final(self):
        return self.values[..., -1]


def _fast_eval(coef):
    """Evaluator specialized to the coefficient structure (hot-loop helper)."""
    if isinstance(coef, Coefficient) and coef.breakpoints.size == 0 \
            and coef.pieces[0].size == 1:
        c = float(coef.pieces[0][0])
        return lambda x: c
    return coef


class EulerStepper:
    scheme = "euler"

    def __init__(self, model: SdeModel):
        self.model = model
        self._mu = _fast_eval(model.drift)
        self._sg = _fast_eval(model.diffusion)

    def init_state(self, x0):
        return np.asarray(x0, dtype=float).copy()

    def step(self, state, t, dt, dw):
        return state + self._mu(state) * dt + self._sg(state) * dw

    def position(self, state):
        return state

    def freeze(self, keep_new, new_state, old_state):
        return np.where(keep_new, new_state, old_state)


class MilsteinStepper:
    scheme = "milstein"

    def __init__(self, model: SdeModel):
        self.model = model
        self.sigma_deriv = model.diffusion.derivative()
        self._mu = _fast_eval(model.drift)
        self._sg = _fast_eval(model.diffusion)
        self._sgp = _fast_eval(self.sigma_deriv)

    def init_state(self, x0):
        return np.asarray(x0, dtype=float).copy()

    def step(self, state, t, dt, dw):
        sg = self._sg(state)
        corr = self._sgp(state)
        out = state + self._mu(state) * dt + sg * dw
        if not (isinstance(corr, float) and corr == 0.0):
            out = out + 0.5 * sg * corr * (dw * dw - dt)
        return out

    def position(self, state):
        return state

    def freeze(self, keep_new, new_state, old_state):
        return np.where(keep_new, new_state, old_state)


class TransformedMilsteinStepper:
    """Milstein on the transformed coefficients, carried in both charts.

    The state holds (x, y) with y = G(x); coefficient evaluations of the
    transformed equation at y are computed directly at x (no inversion), and
    the single inversion per step maps the advanced y back through G^{-1}
    with a warm-started Newton iteration safeguarded by the certified
    monotonicity of G.
    """

    scheme = "transformed-milstein"

    def __init__(self, model: SdeModel, transform: Transform):
        self.model = model
        self.transform = transform
        self.sigma_deriv = model.diffusion.derivative()
        self._mu = _fast_eval(model.drift)
        self._sg = _fast_eval(model.diffusion)
        self._sgp = _fast_eval(self.sigma_deriv)

    def init_state(self, x0):
        x = np.asarray(x0, dtype=float).copy()
        y = np.asarray(self.transform.value(x), dtype=float)
        return (x, y)

    def step(self, state, t, dt, dw):
        x, y = state
        gp, g2 = self.transform.deriv_and_second(x)
        mu = self._mu(x)
        sg = self._sg(x)
        sgp = self._sgp(x)
        sg_t = gp * sg
        dw2 = dw * dw - dt
        y_next = (y + (gp * mu + 0.5 * g2 * sg * sg) * dt + sg_t * dw
                  + 0.5 * sg_t * ((g2 * sg + gp * sgp) / gp) * dw2)
        x_next = self._invert(y_next, warm=x + sg * dw)
        return (x_next, y_next)

    def _invert(self, y, warm):
        g = self.transform
        x = np.asarray(warm, dtype=float).copy()
        tol = 1e-12 * np.maximum(1.0, np.abs(y))
        for _ in range(50):
            v, d = g.value_and_deriv(x)
            r = v - y
            if np.all(np.abs(r) <= tol):
                return x
            x = x - r / d
        # rare: fall back to the certified bracketed inversion
        bad = np.abs(np.asarray(g.value(x), dtype=float) - y) > tol
        if np.any(bad):
            fixed = g.invert(y)
            x = np.where(bad, fixed, x)
        return x

    def position(self, state):
        return state[0]

    def freeze(self, keep_new, new_state, old_state):
        return (
            np.where(keep_new, new_state[0], old_state[0]),
            np.where(keep_new, new_state[1], old_state[1]),
        )


def make_stepper(scheme: str, model: SdeModel, transform: Transform | None = None):
    if scheme == "euler":
        return EulerStepper(model)
    if scheme == "milstein":
        return MilsteinStepper(model)
    if scheme == "transformed-milstein":
        if transform is None:
            raise ValidationError("transformed-milstein requires a transform")
        return TransformedMilsteinStepper(model, transform)
    raise ValidationError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def run_scheme(stepper, x0, driver: PathLattice) -> SolutionPath:
    """Advance a stepper over the whole driver lattice, recording the path."""
    t = driver.times
    w = driver.values
    batch = w.shape[:-1]
    x0_arr = np.broadcast_to(np.asarray(x0, dtype=float), batch).copy()
    state = stepper.init_state(x0_arr)
    out = np.empty(batch + (t.size,))
    out[..., 0] = stepper.position(state)
    for j in range(t.size - 1):
        dt = t[j + 1] - t[j]
        dw = w[..., j + 1] - w[..., j]
        state = stepper.step(state, t[j], dt, dw)
        pos = stepper.position(state)
        if not np.all(np.isfinite(pos)):
            raise DivergenceError(f"non-finite state at step {j + 1}", step_index=j + 1)
        out[..., j + 1] = pos
    return SolutionPath(times=t, values=out, scheme=stepper.scheme, driver=driver)


def euler_maruyama(model: SdeModel, x0, driver: PathLattice) -> SolutionPath:
    """x_{j+1} = x_j + mu(x_j) dt_j + sigma(x_j) dW_j."""
    return run_scheme(EulerStepper(model), x0, driver)


def milstein(model: SdeModel, x0, driver: PathLattice) -> SolutionPath:
    """Euler plus the 0.5 sigma sigma' (dW^2 - dt) correction."""
    return run_scheme(MilsteinStepper(model), x0, driver)


def transformed_milstein(model: SdeModel, transform: Transform, x0,
                         driver: PathLattice) -> SolutionPath:
    """Milstein applied to the transform-regularized equation, mapped back.

    This is the high-accuracy reference scheme for discontinuous-drift
    models: it advances Y = G(X) with Lipschitz coefficients and returns
    X = G^{-1}(Y) at every lattice time.
    """
    return run_scheme(TransformedMilsteinStepper(model, transform), x0, driver)


def frozen_coefficient_step(model: SdeModel, x_prev, t_prev: float,
                            segment: PathLattice) -> np.ndarray:
    """Affine-in-noise values x_prev + sigma(x_prev) (W_t - W_{t_prev}).

    The segment lattice must start at t_prev; the returned array holds the
    frozen-coefficient values at every segment time (the first equals x_prev).
    """
    if segment.times[0] != t_prev:
        raise ValidationError("segment must start at t_prev")
    x_prev = np.asarray(x_prev, dtype=float)
    sg = model.diffusion(x_prev)
    incr = segment.values - segment.values[..., :1]
    return x_prev[..., None] + np.asarray(sg)[..., None] * incr


def solve_until_exit(model: SdeModel, x0, driver: PathLattice,
                     interval: tuple[float, float], scheme: str = "euler",
                     transform: Transform | None = None):
    """Run a scheme and freeze each path at its first value outside (a, b).

    Returns (SolutionPath, exit_times); exit_times is the first lattice time
    whose state left the open interval, or the final time if none did.
    """
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise ValidationError("interval must satisfy a < b")
    x0_arr = np.asarray(x0, dtype=float)
    if np.any(x0_arr <= a) or np.any(x0_arr >= b):
        raise ValidationError("x0 must lie inside the open interval")
    stepper = make_stepper(scheme, model, transform)
    t = driver.times
    w = driver.values
    batch = w.shape[:-1]
    state = stepper.init_state(np.broadcast_to(x0_arr, batch).copy())
    out = np.empty(batch + (t.size,))
    out[..., 0] = stepper.position(state)
    alive = np.ones(batch, dtype=bool)
    exit_time = np.full(batch, t[-1])
    for j in range(t.size - 1):
        dt = t[j + 1] - t[j]
        dw = w[..., j + 1] - w[..., j]
        new_state = stepper.step(state, t[j], dt, dw)
        pos = stepper.position(new_state)
        if not np.all(np.isfinite(pos)):
            raise DivergenceError(f"non-finite state at step {j + 1}", step_index=j + 1)
        # advance only paths still alive; freeze the rest at their exit value
        state = stepper.freeze(alive, new_state, state)
        pos = stepper.position(state)
        out[..., j + 1] = pos
        exited_now = alive & ((pos <= a) | (pos >= b))
        exit_time = np.where(exited_now, t[j + 1], exit_time)
        alive = alive & ~exited_now
    path = SolutionPath(times=t, values=out, scheme=stepper.scheme, driver=driver)
    if batch == ():
        return path, float(exit_time)
    return path, exit_time
