"""Brownian path lattices, bridge decomposition and the noise couplings.

The path representation is a lattice of strictly increasing times with values
attached, optionally batched over a leading axis of independent paths.  All
randomness flows through counter-based splittable streams, so every draw is
replayable from a master seed and a label path, independent of worker count.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import RangeError, ValidationError


def _label_to_int(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.blake2b(str(label).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """Counter-based splittable stream keyed by (seed, label path).

    Children are derived by appending labels; the same (seed, path) always
    yields the same Philox generator, so replications, intervals and purposes
    can own independent streams without any shared state.
    """

    def __init__(self, seed: int, path: tuple = ()):
        self.seed = int(seed)
        self.path = tuple(_label_to_int(p) for p in path)
        self._generator = None

    def child(self, *labels) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(labels))

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
            key = ss.generate_state(2, np.uint64)
            self._generator = np.random.Generator(np.random.Philox(key=key))
        return self._generator

    def standard_normal(self, size=None) -> np.ndarray:
        return self.generator.standard_normal(size)


@dataclass(frozen=True, eq=False)
class PathLattice:
    """Times with path values; values may carry a leading batch axis."""

    times: np.ndarray
    values: np.ndarray

    def __init__(self, times, values):
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.size == 0:
            raise ValidationError("times must be a non-empty 1-d array")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValidationError("times must be strictly increasing")
        if v.shape[-1] != t.size:
            raise ValidationError("values must match times along the last axis")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def n_paths(self) -> int:
        return 1 if self.values.ndim == 1 else int(self.values.shape[0])

    def value_at(self, t: float):
        idx = np.searchsorted(self.times, t)
        if idx >= self.times.size or self.times[idx] != t:
            raise RangeError(f"time {t} is not a lattice knot")
        return self.values[..., idx]


class CouplingKind(Enum):
    INDEPENDENT_RESAMPLE = "independent-resample"
    NEGATION = "negation"


@dataclass(frozen=True, eq=False)
class BridgeDecomposition:
    """W split into its coarse piecewise-linear interpolation and bridges.

    wbar + b == lattice.values exactly, and b vanishes at the coarse knots.
    """

    lattice: PathLattice
    coarse_indices: np.ndarray
    wbar: np.ndarray
    b: np.ndarray

    def coarse_times(self) -> np.ndarray:
        return self.lattice.times[self.coarse_indices]


def sample_brownian_lattice(stream: RngStream, times, paths: int | None = None) -> PathLattice:
    """Brownian values on a lattice: independent N(0, dt) increments from 0."""
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValidationError("times must be a non-empty 1-d array")
    if t[0] != 0.0:
        raise ValidationError("driver lattices must start at time 0")
    if t.size > 1 and not np.all(np.diff(t) > 0):
        raise ValidationError("times must be strictly increasing")
    dt = np.diff(t)
    shape = (t.size - 1,) if paths is None else (paths, t.size - 1)
    z = stream.standard_normal(shape)
    incr = z * np.sqrt(dt)
    values = np.concatenate(
        [np.zeros(shape[:-1] + (1,)), np.cumsum(incr, axis=-1)], axis=-1
    )
    return PathLattice(t, values)


def refine_lattice(stream: RngStream, lattice: PathLattice, new_times) -> PathLattice:
    """Insert knots sampled from the Brownian bridge law given the neighbors.

    Each inserted value conditions on the nearest already-known knot to the
    left (original or previously inserted) and the nearest original knot to
    the right: mean is the linear interpolation, variance (s-a)(b-s)/(b-a).
    Existing knot values are unchanged.
    """
    new = np.atleast_1d(np.asarray(new_times, dtype=float))
    if new.size == 0:
        return lattice
    if new.size > 1 and not np.all(np.diff(new) > 0):
        raise ValidationError("new_times must be strictly increasing")
    t = lattice.times
    if np.any(new <= t[0]) or np.any(new >= t[-1]):
        raise RangeError("new times must lie strictly inside the lattice span")
    if np.any(np.isin(new, t)):
        raise ValidationError("new times must be disjoint from existing knots")

    merged = np.union1d(t, new)
    batch = lattice.values.shape[:-1]
    values = np.full(batch + (merged.size,), np.nan)
    old_pos = np.searchsorted(merged, t)
    values[..., old_pos] = lattice.values
    known = np.zeros(merged.size, dtype=bool)
    known[old_pos] = True

    z = stream.standard_normal(batch + (new.size,)) if batch else stream.standard_normal(new.size)
    new_pos = np.searchsorted(merged, new)
    for k, pos in enumerate(new_pos):
        left = pos - 1  # already known: processed left-to-right
        right = pos + 1
        while not known[right]:
            right += 1
        a, b_, s = merged[left], merged[right], merged[pos]
        mean = values[..., left] + (s - a) / (b_ - a) * (values[..., right] - values[..., left])
        var = (s - a) * (b_ - s) / (b_ - a)
        values[..., pos] = mean + np.sqrt(var) * z[..., k]
        known[pos] = True
    return PathLattice(merged, values)


def bridge_decompose(lattice: PathLattice, coarse_indices) -> BridgeDecomposition:
    """Split W into the coarse piecewise-linear part and the bridge part."""
    ci = np.asarray(coarse_indices, dtype=int)
    if ci.size < 2 or ci[0] != 0 or ci[-1] != lattice.times.size - 1:
        raise ValidationError("coarse indices must include the first and last fine index")
    if not np.all(np.diff(ci) > 0):
        raise ValidationError("coarse indices must be strictly increasing")
    t = lattice.times
    ct = t[ci]
    seg = np.clip(np.searchsorted(ct, t, side="right") - 1, 0, ci.size - 2)
    left, right = ci[seg], ci[seg + 1]
    w_right = (t - t[left]) / (t[right] - t[left])
    wbar = (1.0 - w_right) * lattice.values[..., left] + w_right * lattice.values[..., right]
    # keep the decomposition exact at the coarse knots
    wbar[..., ci] = lattice.values[..., ci]
    b = lattice.values - wbar
    return BridgeDecomposition(lattice=lattice, coarse_indices=ci, wbar=wbar, b=b)


def resample_bridges(decomp: BridgeDecomposition, stream: RngStream) -> np.ndarray:
    """Fresh independent Brownian bridges pinned to zero at the coarse knots."""
    t = decomp.lattice.times
    batch = decomp.lattice.values.shape[:-1]
    btilde = np.zeros(batch + (t.size,))
    ci = decomp.coarse_indices
    for i0, i1 in zip(ci[:-1], ci[1:]):
        if i1 - i0 < 2:
            continue
        sub = t[i0:i1 + 1]
        dt = np.diff(sub)
        z = stream.standard_normal(batch + (dt.size,))
        v = np.cumsum(z * np.sqrt(dt), axis=-1)
        frac = (sub[1:] - sub[0]) / (sub[-1] - sub[0])
        bridge = v - frac * v[..., -1:]
        btilde[..., i0 + 1:i1 + 1] = bridge
    return btilde


def couple(decomp: BridgeDecomposition, stream: RngStream, kind: CouplingKind) -> PathLattice:
    """Coupled driver sharing the coarse interpolation, with replaced bridges."""
    if kind is CouplingKind.NEGATION:
        btilde = -decomp.b
    elif kind is CouplingKind.INDEPENDENT_RESAMPLE:
        btilde = resample_bridges(decomp, stream)
    else:
        raise ValidationError(f"unknown coupling kind {kind!r}")
    return PathLattice(decomp.lattice.times, decomp.wbar + btilde)


def coupled_increments(gen: np.random.Generator, gen_bridge: np.random.Generator,
                       delta: float, m: int, paths: int, kind: CouplingKind):
    """Fine increments of W and of the coupled W-tilde over one coarse interval.

    Streaming building block: the interval of length `delta` carries m equal
    substeps.  Returns (dW, dWt), each of shape (paths, m); both sum to the
    same coarse increment, so the coupled paths agree at coarse knots.
    """
    dt = delta / m
    z = gen.standard_normal((paths, m))
    dw = z * np.sqrt(dt)
    total = np.sum(dw, axis=-1, keepdims=True)
    dwbar = np.broadcast_to(total / m, dw.shape)
    db = dw - dwbar
    if kind is CouplingKind.NEGATION:
        dbt = -db
    elif kind is CouplingKind.INDEPENDENT_RESAMPLE:
        zv = gen_bridge.standard_normal((paths, m))
        dv = zv * np.sqrt(dt)
        dbt = dv - np.sum(dv, axis=-1, keepdims=True) / m
    else:
        raise ValidationError(f"unknown coupling kind {kind!r}")
    return dw, dwbar + dbt


def dump_coupling_csv(path, decomp: BridgeDecomposition, wtilde: PathLattice) -> None:
    """Debug dump of a single-path coupling: time, W, Wbar, B, Btilde, Wtilde."""
    if decomp.lattice.values.ndim != 1:
        raise ValidationError("path dump supports single (unbatched) paths only")
    btilde = wtilde.values - decomp.wbar
    rows = np.column_stack([
        decomp.lattice.times, decomp.lattice.values, decomp.wbar,
        decomp.b, btilde, wtilde.values,
    ])
    header = "time,W,Wbar,B,Btilde,Wtilde"
    np.savetxt(path, rows, delimiter=",", header=header, comments="")


def bridge_abs_integral_estimate(stream: RngStream, s: float, t: float,
                                 m: int, paths: int):
    """Monte Carlo estimate of E int_s^t |B^{s,t}_u| du (mean, std error).

    The bridge is sampled exactly on m equal substeps and integrated by the
    trapezoid rule (the pinned endpoints contribute zero).
    """
    if not t > s:
        raise ValidationError("need t > s")
    delta = t - s
    dt = delta / m
    z = stream.standard_normal((paths, m))
    v = np.cumsum(z * np.sqrt(dt), axis=-1)
    frac = np.arange(1, m + 1) / m
    bridge = v - frac * v[..., -1:]
    absb = np.abs(bridge)
    # trapezoid over knots 0..m; both pinned endpoints contribute zero
    integral = dt * np.sum(absb[..., :-1], axis=-1)
    mean = float(np.mean(integral))
    se = float(np.std(integral, ddof=1) / np.sqrt(paths))
    return mean, se
