"""Piecewise-polynomial SDE coefficients and structural assumption checks.

A coefficient is a scalar function given by polynomial pieces on the open
intervals between sorted breakpoints, with optional explicit values at the
breakpoints themselves.  This representation keeps one-sided limits,
derivatives and Lipschitz constants exactly computable, which the assumption
checkers rely on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import AmbiguousValueError, DegenerateDiffusionError, ValidationError

ONE_SIDED_TOL = 1e-12      # agreement tolerance for one-sided limits
JUMP_TOL = 1e-12           # |jump| above this counts as a real jump


def _as_poly(coeffs) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError("polynomial coefficients must be a non-empty 1-d sequence")
    return arr


def _poly_real_roots(coeffs: np.ndarray) -> np.ndarray:
    """Real roots of a polynomial in ascending-coefficient form."""
    c = np.trim_zeros(coeffs, "b")
    if c.size <= 1:
        return np.empty(0)
    roots = npoly.polyroots(c)
    scale = max(1.0, float(np.max(np.abs(roots.real))) if roots.size else 1.0)
    real = roots[np.abs(roots.imag) <= 1e-10 * scale].real
    return np.sort(real)


def _candidates(coeffs: np.ndarray, a: float, b: float) -> np.ndarray:
    """Finite stationary points and endpoints of a polynomial on [a, b]."""
    pts = []
    if math.isfinite(a):
        pts.append(a)
    if math.isfinite(b):
        pts.append(b)
    deriv = npoly.polyder(coeffs)
    for r in _poly_real_roots(deriv):
        if a <= r <= b:
            pts.append(float(r))
    return np.asarray(pts, dtype=float)


def poly_sup_abs(coeffs, a: float, b: float) -> float:
    """sup of |p| over [a, b]; inf for nonconstant p on an unbounded interval."""
    c = np.trim_zeros(_as_poly(coeffs), "b")
    if c.size <= 1:
        return abs(float(c[0])) if c.size else 0.0
    if not (math.isfinite(a) and math.isfinite(b)):
        return math.inf
    cand = _candidates(c, a, b)
    return float(np.max(np.abs(npoly.polyval(cand, c)))) if cand.size else 0.0


def poly_inf_abs(coeffs, a: float, b: float) -> float:
    """inf of |p| over [a, b] (0 whenever p has a root there)."""
    c = _as_poly(coeffs)
    for r in _poly_real_roots(c):
        if a <= r <= b:
            return 0.0
    trimmed = np.trim_zeros(c, "b")
    if trimmed.size == 0:
        return 0.0
    cand = _candidates(c, a, b)
    vals = [abs(float(npoly.polyval(x, c))) for x in cand]
    return min(vals) if vals else abs(float(npoly.polyval(0.0, c)))


@dataclass(frozen=True, eq=False)
class Coefficient:
    """Scalar piecewise-polynomial function.

    Parameters
    ----------
    breakpoints : array-like
        Strictly increasing jump/kink positions (possibly empty).
    pieces : sequence of array-like
        One ascending-degree coefficient list per open interval between
        consecutive breakpoints; ``len(pieces) == len(breakpoints) + 1``.
    breakpoint_values : array-like, optional
        Explicit value at each breakpoint; NaN entries (the default) fall
        back to the right limit.
    """

    breakpoints: np.ndarray
    pieces: tuple
    breakpoint_values: np.ndarray = field(default=None)

    def __init__(self, breakpoints, pieces, breakpoint_values=None):
        bp = np.asarray(breakpoints, dtype=float)
        if bp.ndim != 1:
            raise ValidationError("breakpoints must be one-dimensional")
        if bp.size > 1 and not np.all(np.diff(bp) > 0):
            raise ValidationError("breakpoints must be strictly increasing")
        ps = tuple(_as_poly(p) for p in pieces)
        if len(ps) != bp.size + 1:
            raise ValidationError(
                f"expected {bp.size + 1} pieces for {bp.size} breakpoints, got {len(ps)}"
            )
        if breakpoint_values is None:
            bv = np.full(bp.size, np.nan)
        else:
            bv = np.asarray(breakpoint_values, dtype=float)
            if bv.shape != bp.shape:
                raise ValidationError("breakpoint_values must align with breakpoints")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "pieces", ps)
        object.__setattr__(self, "breakpoint_values", bv)
        # evaluation fast paths: explicit breakpoint values only need special
        # handling when they differ from the default right limit
        differs = tuple(
            bool(not np.isnan(v) and v != npoly.polyval(b, ps[j + 1]))
            for j, (b, v) in enumerate(zip(bp, bv))
        )
        object.__setattr__(self, "_explicit_differs", any(differs))
        object.__setattr__(self, "_piece_consts",
                           np.array([p[0] for p in ps]) if all(p.size == 1 for p in ps) else None)

    @classmethod
    def constant(cls, c: float) -> "Coefficient":
        return cls([], [[float(c)]])

    @classmethod
    def polynomial(cls, coeffs) -> "Coefficient":
        return cls([], [coeffs])

    @classmethod
    def indicator_right(cls, xi: float = 0.0, height: float = 1.0) -> "Coefficient":
        """height * 1_{[xi, inf)} with the explicit value `height` at xi."""
        return cls([xi], [[0.0], [height]], [height])

    # -- evaluation ---------------------------------------------------------

    def __call__(self, x):
        xs = np.asarray(x, dtype=float)
        scalar = xs.ndim == 0
        xs = np.atleast_1d(xs)
        if self.breakpoints.size == 0:
            out = np.asarray(npoly.polyval(xs, self.pieces[0]), dtype=float)
        else:
            idx = np.searchsorted(self.breakpoints, xs, side="right")
            if self._piece_consts is not None:
                out = self._piece_consts[idx]
            else:
                out = np.empty_like(xs)
                for i in range(len(self.pieces)):
                    mask = idx == i
                    if np.any(mask):
                        out[mask] = npoly.polyval(xs[mask], self.pieces[i])
            if self._explicit_differs:
                explicit = ~np.isnan(self.breakpoint_values)
                for j in np.nonzero(explicit)[0]:
                    hit = xs == self.breakpoints[j]
                    if np.any(hit):
                        out = np.where(hit, self.breakpoint_values[j], out)
        return float(out[0]) if scalar else out

    def derivative(self) -> "Coefficient":
        return Coefficient(self.breakpoints.copy(), [npoly.polyder(p) for p in self.pieces])

    def piece_interval(self, i: int) -> tuple[float, float]:
        lo = -math.inf if i == 0 else float(self.breakpoints[i - 1])
        hi = math.inf if i == len(self.pieces) - 1 else float(self.breakpoints[i])
        return lo, hi

    def piece_index(self, x: float) -> int:
        """Index of the open interval containing a non-breakpoint x."""
        return int(np.searchsorted(self.breakpoints, x, side="right"))

    def is_breakpoint(self, x: float) -> bool:
        return bool(np.any(self.breakpoints == x))

    def limit_left(self, x: float) -> float:
        i = int(np.searchsorted(self.breakpoints, x, side="left"))
        if i < self.breakpoints.size and self.breakpoints[i] == x:
            return float(npoly.polyval(x, self.pieces[i]))
        return float(npoly.polyval(x, self.pieces[self.piece_index(x)]))

    def limit_right(self, x: float) -> float:
        return float(npoly.polyval(x, self.pieces[self.piece_index(x)]))

    def lipschitz_constant(self, a: float = -math.inf, b: float = math.inf) -> float:
        """sup of |derivative| over [a, b] across all covering pieces."""
        best = 0.0
        d = self.derivative()
        for i, p in enumerate(d.pieces):
            lo, hi = d.piece_interval(i)
            lo, hi = max(lo, a), min(hi, b)
            if lo > hi:
                continue
            best = max(best, poly_sup_abs(p, lo, hi))
        return best

    def inf_abs(self, a: float, b: float) -> float:
        """inf of |self| over [a, b], ignoring explicit breakpoint values."""
        best = math.inf
        for i, p in enumerate(self.pieces):
            lo, hi = self.piece_interval(i)
            lo, hi = max(lo, a), min(hi, b)
            if lo > hi:
                continue
            best = min(best, poly_inf_abs(p, lo, hi))
        return best

    def continuous_at(self, x: float) -> bool:
        left, right = self.limit_left(x), self.limit_right(x)
        if not math.isclose(left, right, rel_tol=ONE_SIDED_TOL, abs_tol=ONE_SIDED_TOL):
            return False
        if self.is_breakpoint(x):
            j = int(np.searchsorted(self.breakpoints, x))
            v = self.breakpoint_values[j]
            if not np.isnan(v) and not math.isclose(v, right, rel_tol=ONE_SIDED_TOL, abs_tol=ONE_SIDED_TOL):
                return False
        return True

    # -- algebra (kept exact: results are again piecewise polynomials) ------

    def _piece_at(self, rep: float) -> np.ndarray:
        return self.pieces[self.piece_index(rep)]

    def _combine(self, other: "Coefficient", op) -> "Coefficient":
        bp = np.union1d(self.breakpoints, other.breakpoints)
        pieces = []
        for i in range(bp.size + 1):
            lo = -math.inf if i == 0 else bp[i - 1]
            hi = math.inf if i == bp.size else bp[i]
            if math.isfinite(lo) and math.isfinite(hi):
                rep = 0.5 * (lo + hi)
            elif math.isfinite(lo):
                rep = lo + 1.0
            elif math.isfinite(hi):
                rep = hi - 1.0
            else:
                rep = 0.0
            pieces.append(op(self._piece_at(rep), other._piece_at(rep)))
        return Coefficient(bp, pieces)

    def __mul__(self, other):
        if isinstance(other, Coefficient):
            return self._combine(other, npoly.polymul)
        return Coefficient(self.breakpoints.copy(), [np.asarray(p) * float(other) for p in self.pieces])

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, Coefficient):
            return self._combine(other, npoly.polyadd)
        return self + Coefficient.constant(float(other))

    __radd__ = __add__

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "breakpoints": [float(b) for b in self.breakpoints],
            "pieces": [[float(c) for c in p] for p in self.pieces],
            "breakpoint_values": [None if np.isnan(v) else float(v) for v in self.breakpoint_values],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Coefficient":
        bv = d.get("breakpoint_values")
        if bv is not None:
            bv = [np.nan if v is None else v for v in bv]
        return cls(d.get("breakpoints", []), d["pieces"], bv)


@dataclass(frozen=True, eq=False)
class SdeModel:
    """Scalar autonomous SDE: drift, diffusion, initial value and horizon."""

    drift: object
    diffusion: object
    x0: float
    horizon: float

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValidationError("horizon must be positive")

    def to_dict(self) -> dict:
        return {
            "drift": self.drift.to_dict(),
            "diffusion": self.diffusion.to_dict(),
            "x0": float(self.x0),
            "horizon": float(self.horizon),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "SdeModel":
        return cls(
            drift=Coefficient.from_dict(d["drift"]),
            diffusion=Coefficient.from_dict(d["diffusion"]),
            x0=float(d["x0"]),
            horizon=float(d["horizon"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "SdeModel":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class AssumptionReport:
    """Structural flags plus the numeric certificates backing them."""

    a1: bool
    a2: bool
    a3: bool
    jump1: bool
    jump2: bool
    jump3: bool
    jump_heights: dict
    drift_lipschitz: tuple
    diffusion_lipschitz: tuple
    sigma_inf_window: float
    window: tuple

    def all_jump_conditions(self) -> bool:
        return self.jump1 and self.jump2 and self.jump3


def eval_one_sided(f: Coefficient, x: float, side: str) -> float:
    """Evaluate a coefficient from the left, the right, or 'at' the point.

    'at' returns the explicit breakpoint value when one is declared; when the
    point is not a breakpoint, or both one-sided limits agree, it returns the
    common value.  Disagreeing sides without an explicit value raise
    AmbiguousValueError.
    """
    x = float(x)
    if side == "left":
        return f.limit_left(x)
    if side == "right":
        return f.limit_right(x)
    if side != "at":
        raise ValidationError(f"unknown side {side!r}")
    if f.is_breakpoint(x):
        j = int(np.searchsorted(f.breakpoints, x))
        v = f.breakpoint_values[j]
        if not np.isnan(v):
            return float(v)
    left, right = f.limit_left(x), f.limit_right(x)
    if math.isclose(left, right, rel_tol=ONE_SIDED_TOL, abs_tol=ONE_SIDED_TOL):
        return right
    raise AmbiguousValueError(
        f"one-sided limits disagree at x={x}: left={left}, right={right}"
    )


def model_breakpoints(model: SdeModel) -> np.ndarray:
    return np.union1d(model.drift.breakpoints, model.diffusion.breakpoints)


def jump_height(model: SdeModel, xi: float) -> float:
    """One-sided jump of mu/sigma - sigma'/2 at a model breakpoint."""
    xi = float(xi)
    if not np.any(model_breakpoints(model) == xi):
        raise ValidationError(f"x={xi} is not a breakpoint of drift or diffusion")
    mu, sg = model.drift, model.diffusion
    sgp = sg.derivative()
    s_left, s_right = sg.limit_left(xi), sg.limit_right(xi)
    if s_left == 0.0 or s_right == 0.0:
        raise DegenerateDiffusionError(f"diffusion one-sided limit vanishes at {xi}")
    right = mu.limit_right(xi) / s_right - sgp.limit_right(xi) / 2.0
    left = mu.limit_left(xi) / s_left - sgp.limit_left(xi) / 2.0
    return right - left


def validate_assumptions(model: SdeModel, window: tuple[float, float]) -> AssumptionReport:
    """Decide the structural flags exactly from the piecewise representation.

    `window` is (xi, delta); the jump conditions are checked on
    [xi - delta, xi + delta] while the global conditions ignore it.
    """
    xi, delta = float(window[0]), float(window[1])
    if not delta > 0:
        raise ValidationError("window radius must be positive")
    mu, sg = model.drift, model.diffusion
    lo, hi = xi - delta, xi + delta

    drift_lip = tuple(
        poly_sup_abs(npoly.polyder(p), *mu.piece_interval(i)) for i, p in enumerate(mu.pieces)
    )
    diff_lip = tuple(
        poly_sup_abs(npoly.polyder(p), *sg.piece_interval(i)) for i, p in enumerate(sg.pieces)
    )
    a1 = all(math.isfinite(c) for c in drift_lip)

    sigma_continuous = all(sg.continuous_at(b) for b in sg.breakpoints)
    sigma_nonzero_at_drift_bps = all(
        sg.limit_left(b) != 0.0 and sg.limit_right(b) != 0.0 and eval_breakpoint_nonzero(sg, b)
        for b in mu.breakpoints
    )
    a2 = sigma_continuous and all(math.isfinite(c) for c in diff_lip) and sigma_nonzero_at_drift_bps

    sgp = sg.derivative()
    a3 = all(
        math.isfinite(poly_sup_abs(npoly.polyder(p), *sgp.piece_interval(i)))
        for i, p in enumerate(sgp.pieces)
    )

    # (jump1): drift Lipschitz on each side of xi within the window; interior
    # drift breakpoints other than xi must be continuity points.
    interior = [b for b in mu.breakpoints if lo <= b <= hi and b != xi]
    jump1 = all(mu.continuous_at(b) for b in interior)

    # (jump2): diffusion non-degenerate and C^1-regular on the window apart
    # from a possible kink at xi.
    sigma_inf = sg.inf_abs(lo, hi)
    sg_interior = [b for b in sg.breakpoints if lo <= b <= hi]
    jump2 = sigma_inf > 0.0 and all(sg.continuous_at(b) for b in sg_interior) and all(
        sgp.continuous_at(b) for b in sg_interior if b != xi
    )

    heights: dict[float, float] = {}
    for b in model_breakpoints(model):
        try:
            heights[float(b)] = jump_height(model, float(b))
        except DegenerateDiffusionError:
            heights[float(b)] = math.nan
    h = heights.get(xi, 0.0) if np.any(model_breakpoints(model) == xi) else 0.0
    jump3 = bool(not math.isnan(h) and abs(h) > JUMP_TOL)

    return AssumptionReport(
        a1=a1,
        a2=a2,
        a3=a3,
        jump1=jump1,
        jump2=jump2,
        jump3=jump3,
        jump_heights=heights,
        drift_lipschitz=drift_lip,
        diffusion_lipschitz=diff_lip,
        sigma_inf_window=sigma_inf,
        window=(xi, delta),
    )


def eval_breakpoint_nonzero(sg: Coefficient, b: float) -> bool:
    try:
        return eval_one_sided(sg, float(b), "at") != 0.0
    except AmbiguousValueError:
        return True  # sides disagree; both one-sided limits already checked


# -- localization ------------------------------------------------------------

_SMOOTHSTEP = np.array([0.0, 0.0, 0.0, 10.0, -15.0, 6.0])  # 10u^3 - 15u^4 + 6u^5


def _ramp(u_of_x_shift: float, u_of_x_scale: float) -> np.ndarray:
    """Quintic smoothstep composed with u = scale*x + shift, as poly coeffs."""
    inner = npoly.Polynomial([u_of_x_shift, u_of_x_scale])
    outer = npoly.Polynomial(_SMOOTHSTEP)
    return outer(inner).coef


def bump_plateau(xi: float, r_in: float, r_out: float) -> Coefficient:
    """Smooth bump: 1 on B_{r_in}(xi), 0 outside B_{r_out}(xi)."""
    w = r_out - r_in
    up = _ramp(-(xi - r_out) / w, 1.0 / w)          # 0 at xi-r_out -> 1 at xi-r_in
    down = _ramp((xi + r_out) / w, -1.0 / w)        # 1 at xi+r_in -> 0 at xi+r_out
    return Coefficient(
        [xi - r_out, xi - r_in, xi + r_in, xi + r_out],
        [[0.0], up, [1.0], down, [0.0]],
    )


def ramp_plateau(xi: float, r_in: float, r_out: float) -> Coefficient:
    """Smooth outer ramp: 0 on B_{r_in}(xi), 1 outside B_{r_out}(xi)."""
    w = r_out - r_in
    down = _ramp((xi - r_in) / w, -1.0 / w)         # 1 at xi-r_out -> 0 at xi-r_in
    up = _ramp(-(xi + r_in) / w, 1.0 / w)           # 0 at xi+r_in -> 1 at xi+r_out
    return Coefficient(
        [xi - r_out, xi - r_in, xi + r_in, xi + r_out],
        [[1.0], down, [0.0], up, [1.0]],
    )


def localize_model(model: SdeModel, xi: float, radii: tuple) -> SdeModel:
    """Localized coefficients mu* = eta1*mu, sigma* = eta1*sigma + eta2*sgn.

    `radii` is (delta_star, delta0, delta1, delta2, delta), strictly
    increasing.  eta1 is 1 on B_{delta1} and 0 outside B_{delta2}; eta2 is 0
    on B_{delta0} and 1 outside B_{delta1}.  The sign factor is the constant
    sign of sigma on B_delta(xi), where sigma must be non-degenerate; this
    keeps |sigma*| bounded away from zero everywhere and the result exactly
    piecewise polynomial.
    """
    d_star, d0, d1, d2, d = (float(r) for r in radii)
    if not (0 < d_star < d0 < d1 < d2 < d):
        raise ValidationError("radii must satisfy 0 < delta* < delta0 < delta1 < delta2 < delta")
    xi = float(xi)
    if model.diffusion.inf_abs(xi - d, xi + d) <= 0.0:
        raise ValidationError("diffusion must be non-degenerate on the outer window")
    sign = 1.0 if model.diffusion(xi) > 0 else -1.0

    eta1 = bump_plateau(xi, d1, d2)
    eta2 = ramp_plateau(xi, d0, d1)
    drift = eta1 * model.drift
    diffusion = eta1 * model.diffusion + sign * eta2
    return SdeModel(drift=drift, diffusion=diffusion, x0=model.x0, horizon=model.horizon)
