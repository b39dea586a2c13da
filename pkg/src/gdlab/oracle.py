"""Closed-form ground truth for the catalog germs.

Each known answer is a scale-invariant predicate on unit directions
plus a sampler of directions satisfying it; together they support
precision (estimated directions near the true set, via exact angular
distance to the set) and recall (true directions near the estimate)
without ever discretizing the truth.
"""

from __future__ import annotations

import json
import math
from importlib import resources

import numpy as np

from .errors import ValidationError
from .sphere import DirectionSet, min_angles_deg

__all__ = [
    "ConePredicate", "oracle_gd_predicate", "oracle_table",
    "compare_estimate_to_oracle",
]

_EXACT = 1e-12


class ConePredicate:
    """Membership, exact angular distance, and sampler for a known cone."""

    __slots__ = ("n", "kind", "_dist", "_sample")

    def __init__(self, n, kind, dist, sample):
        self.n = n
        self.kind = kind
        self._dist = dist
        self._sample = sample

    def angular_distance_deg(self, dirs) -> np.ndarray:
        dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
        if dirs.shape[1] != self.n:
            raise ValidationError(
                f"predicate in dimension {self.n}, directions in "
                f"{dirs.shape[1]}")
        return self._dist(dirs)

    def membership(self, dirs) -> np.ndarray:
        return self.angular_distance_deg(dirs) <= _EXACT

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        if count < 0:
            raise ValidationError("sample count must be >= 0")
        return self._sample(count, rng)


def _uniform_sphere(count, n, rng):
    raw = rng.standard_normal((count, n))
    return raw / np.linalg.norm(raw, axis=1)[:, None]


def _full_sphere(n):
    return ConePredicate(
        n, "full_sphere",
        lambda dirs: np.zeros(dirs.shape[0]),
        lambda count, rng: _uniform_sphere(count, n, rng))


def _empty(n):
    return ConePredicate(
        n, "empty",
        lambda dirs: np.full(dirs.shape[0], np.inf),
        lambda count, rng: np.empty((0, n)))


def _band3():
    # z^2 <= x^2 + y^2 on S^2: polar angle from the nearest pole >= 45 deg.
    def dist(dirs):
        polar = np.degrees(np.arccos(np.clip(np.abs(dirs[:, 2]), 0.0, 1.0)))
        return np.clip(45.0 - polar, 0.0, None)

    def sample(count, rng):
        out = np.empty((0, 3))
        while out.shape[0] < count:
            cand = _uniform_sphere(2 * count + 16, 3, rng)
            keep = cand[:, 2] ** 2 <= cand[:, 0] ** 2 + cand[:, 1] ** 2
            out = np.vstack([out, cand[keep]])
        return out[:count]

    return ConePredicate(3, "band", dist, sample)


def _pm_e1(n):
    def dist(dirs):
        return np.degrees(np.arccos(np.clip(np.abs(dirs[:, 0]), 0.0, 1.0)))

    def sample(count, rng):
        out = np.zeros((count, n))
        out[:, 0] = rng.choice([-1.0, 1.0], size=count)
        return out

    return ConePredicate(n, "pm_e1", dist, sample)


def _plane_trace_dist(dirs):
    # angle to the nearer of the great circles {x=0}, {y=0} on S^2
    ax = np.degrees(np.arcsin(np.clip(np.abs(dirs[:, 0]), 0.0, 1.0)))
    ay = np.degrees(np.arcsin(np.clip(np.abs(dirs[:, 1]), 0.0, 1.0)))
    return np.minimum(ax, ay)


def _b0_arcs3():
    # xy = 0 and z^2 > x^2 + y^2: the polar arcs of the two vertical
    # plane traces, |polar| < 45 deg around each pole.
    def dist(dirs):
        planes = _plane_trace_dist(dirs)
        polar = np.degrees(np.arccos(np.clip(np.abs(dirs[:, 2]), 0.0, 1.0)))
        over = np.clip(polar - 45.0, 0.0, None)
        return np.where(polar <= 45.0, planes, np.hypot(planes, over))

    def sample(count, rng):
        t = np.radians(rng.uniform(-45.0, 45.0, size=count))
        z_sign = rng.choice([-1.0, 1.0], size=count)
        in_x0 = rng.random(count) < 0.5
        s, c = np.sin(t), np.cos(t)
        out = np.zeros((count, 3))
        out[:, 2] = z_sign * c
        out[in_x0, 1] = s[in_x0]
        out[~in_x0, 0] = s[~in_x0]
        return out

    return ConePredicate(3, "b0_arcs", dist, sample)


def _planes_union_band3():
    band = _band3()
    arcs = _b0_arcs3()

    def dist(dirs):
        return np.minimum(_plane_trace_dist(dirs),
                          band.angular_distance_deg(dirs))

    def sample(count, rng):
        which = rng.integers(0, 3, size=count)
        out = np.empty((count, 3))
        n_band = int(np.count_nonzero(which == 0))
        if n_band:
            out[which == 0] = band.sample(n_band, rng)
        for code, plane_axis in ((1, 0), (2, 1)):
            mask = which == code
            m = int(np.count_nonzero(mask))
            if not m:
                continue
            t = 2.0 * np.pi * rng.random(m)
            circ = np.zeros((m, 3))
            circ[:, plane_axis] = np.sin(t)
            circ[:, 2] = np.cos(t)
            out[mask] = circ
        return out

    return ConePredicate(3, "planes_union_band", dist, sample)


_BUILDERS = {
    "full_sphere": _full_sphere,
    "empty": _empty,
    "band": lambda n: _band3(),
    "pm_e1": _pm_e1,
    "b0_arcs": lambda n: _b0_arcs3(),
    "planes_union_band": lambda n: _planes_union_band3(),
}


def _load_table():
    with resources.files("gdlab").joinpath("oracle_table.json").open() as fh:
        return json.load(fh)


_TABLE = None


def oracle_table() -> list:
    """Rows (name, n, power, predicate) of every known answer."""
    global _TABLE
    if _TABLE is None:
        _TABLE = _load_table()
    return _TABLE


def oracle_gd_predicate(name: str, n: int, power: int) -> ConePredicate:
    """Exact predicate for the stated iterate of a catalog germ."""
    if power < 1:
        raise ValidationError("power must be >= 1")
    for row in oracle_table():
        if row["name"] != name:
            continue
        if row["n"] not in ("any", n):
            continue
        if row["power"] not in ("any", power):
            continue
        return _BUILDERS[row["predicate"]](n)
    raise ValidationError(
        f"no oracle entry for ({name!r}, n={n}, power={power})")


def compare_estimate_to_oracle(dirset: DirectionSet, pred: ConePredicate,
                               theta: float, n_probe: int = 4096,
                               seed: int = 0, threshold: float = 0.98,
                               ) -> dict:
    """Precision and recall of an estimated net against a known answer.

    Precision asks whether each estimated direction lies within theta of
    the true set; recall asks whether sampled true directions lie within
    theta of the estimate.  Empty sides are vacuous: an empty estimate
    has perfect precision, an empty truth perfect recall.
    """
    if dirset.n != pred.n:
        raise ValidationError("ambient dimension mismatch")
    if theta <= 0:
        raise ValidationError("theta must be positive")
    if dirset.is_empty:
        precision = 1.0
    else:
        dist = pred.angular_distance_deg(dirset.dirs)
        precision = float(np.mean(dist <= theta))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x0AC1]))
    draws = pred.sample(n_probe, rng)
    if draws.shape[0] == 0:
        recall = 1.0
    elif dirset.is_empty:
        recall = 0.0
    else:
        recall = float(np.mean(min_angles_deg(dirset, draws) <= theta))
    return {
        "precision": precision,
        "recall": recall,
        "theta": float(theta),
        "n_probe": int(n_probe),
        "pass": bool(precision >= threshold and recall >= threshold),
    }
