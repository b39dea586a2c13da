"""Direction sets on the unit sphere: nets, distances, unions, coverage.

A DirectionSet is an angular epsilon-net: unit vectors pairwise at least
theta_net/2 apart, sorted lexicographically.  It stands for the union of
closed caps of radius theta_net around its directions.  No antipodal
identification is performed anywhere: a and -a are distinct directions.
"""

from __future__ import annotations

import math
import struct

import numpy as np
from scipy.spatial import cKDTree

from .errors import ReportIOError, ValidationError

__all__ = [
    "DirectionSet", "ConeRep", "build_net", "empty_net", "net_insert",
    "min_angles_deg", "hausdorff_angle", "union_dirsets", "covers",
    "coverage_fraction", "probe_grid", "save_net", "load_net",
    "export_dirs_csv", "chord_of_angle", "angle_of_chord",
    "DEFAULT_THETA_NET",
]

_UNIT_TOL = 1e-9


def default_theta_net(n: int) -> float:
    """Net resolution in degrees: finer in low dimension, coarser above 4."""
    return 1.5 if n <= 4 else 3.0


DEFAULT_THETA_NET = default_theta_net


def chord_of_angle(theta_deg: float) -> float:
    return 2.0 * math.sin(math.radians(theta_deg) / 2.0)


def angle_of_chord(chord) -> np.ndarray:
    half = np.clip(np.asarray(chord, dtype=float) / 2.0, 0.0, 1.0)
    return np.degrees(2.0 * np.arcsin(half))


class DirectionSet:
    """Canonical net of unit directions at a fixed angular resolution.

    A set may carry the ``saturated`` mark: the stored directions are then
    only a witness sample and the set stands for the whole sphere S^{n-1}.
    Distance and coverage queries against a saturated set are answered
    analytically (the full sphere is within zero degrees of everything).
    The mark is only ever produced behind an explicit certificate, never
    by plain net construction.
    """

    __slots__ = ("n", "dirs", "theta_net", "saturated", "_tree")

    def __init__(self, n: int, dirs: np.ndarray, theta_net: float,
                 saturated: bool = False):
        dirs = np.ascontiguousarray(np.asarray(dirs, dtype=float))
        if dirs.size == 0:
            dirs = np.empty((0, n), dtype=float)
        if dirs.ndim != 2 or dirs.shape[1] != n:
            raise ValidationError(
                f"direction array of shape {dirs.shape} in dimension {n}")
        if saturated and dirs.shape[0] == 0:
            raise ValidationError("a saturated set needs witness directions")
        dirs.flags.writeable = False
        self.n = n
        self.dirs = dirs
        self.theta_net = float(theta_net)
        self.saturated = bool(saturated)
        self._tree = None

    def __len__(self):
        return self.dirs.shape[0]

    @property
    def is_empty(self) -> bool:
        return self.dirs.shape[0] == 0

    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.dirs)
        return self._tree

    def __eq__(self, other):
        return (isinstance(other, DirectionSet)
                and self.n == other.n
                and self.theta_net == other.theta_net
                and self.saturated == other.saturated
                and self.dirs.shape == other.dirs.shape
                and bool(np.all(self.dirs == other.dirs)))

    def __repr__(self):
        tag = ", saturated" if self.saturated else ""
        return (f"DirectionSet(n={self.n}, size={len(self)}, "
                f"theta_net={self.theta_net}{tag})")


class ConeRep:
    """Half-cone {t*a : a in base, t >= 0}; empty base = the empty cone."""

    __slots__ = ("base",)

    def __init__(self, base: DirectionSet):
        self.base = base

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def is_empty(self) -> bool:
        return self.base.is_empty

    def __eq__(self, other):
        return isinstance(other, ConeRep) and self.base == other.base

    def __repr__(self):
        return f"ConeRep({self.base!r})"


def empty_net(n: int, theta_net: float) -> DirectionSet:
    return DirectionSet(n, np.empty((0, n)), theta_net)


def _voxel_dedup(arr: np.ndarray, cell: float) -> np.ndarray:
    """Keep the lexicographically first point of each voxel.

    Cell size guarantees same-voxel points are already within the net
    conflict radius, so dropping them costs at most theta_net/2 of
    represented-set accuracy.
    """
    keys = np.floor(arr / cell).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return arr[np.sort(first)]


def _greedy_select(arr: np.ndarray, min_chord: float) -> np.ndarray:
    """Greedy packing in row order; returns the accepted-row mask.

    Equivalent to inserting rows one by one and keeping a row iff no
    earlier kept row is within min_chord, but runs in vectorized waves.
    """
    count = arr.shape[0]
    accepted = np.ones(count, dtype=bool)
    if count <= 1:
        return accepted
    pairs = cKDTree(arr).query_pairs(min_chord, output_type="ndarray")
    while len(pairs):
        alive = accepted[pairs[:, 0]] & accepted[pairs[:, 1]]
        pairs = pairs[alive]
        if not len(pairs):
            break
        # A row is settled once no active conflict with a smaller row
        # remains; conflicts from settled rows are final rejections.
        conflicted = np.zeros(count, dtype=bool)
        conflicted[pairs[:, 1]] = True
        settled = accepted & ~conflicted
        final = settled[pairs[:, 0]]
        accepted[pairs[final, 1]] = False
        pairs = pairs[~final]
    return accepted


def coarse_dedup(dirs, n: int, theta_net: float) -> np.ndarray:
    """Normalize and voxel-thin raw directions without greedy packing.

    Keeps one representative per theta_net/2 voxel, which preserves any
    coverage statement at tolerances well above theta_net while cutting
    dense regions by orders of magnitude.
    """
    arr = np.asarray(dirs, dtype=float).reshape(-1, n)
    if arr.shape[0] == 0:
        return np.empty((0, n))
    norms = np.linalg.norm(arr, axis=1)
    keep = norms > 1e-12
    arr = arr[keep] / norms[keep, None]
    if arr.shape[0] == 0:
        return np.empty((0, n))
    cell = chord_of_angle(theta_net / 2.0) / math.sqrt(n)
    return _voxel_dedup(np.unique(arr, axis=0), cell)


def build_net(dirs, n: int, theta_net: float) -> DirectionSet:
    """Canonicalize raw directions into a net by sort-then-greedy."""
    arr = np.asarray(dirs, dtype=float).reshape(-1, n)
    if arr.shape[0] == 0:
        return empty_net(n, theta_net)
    norms = np.linalg.norm(arr, axis=1)
    keep = norms > 1e-12
    arr = arr[keep] / norms[keep, None]
    if arr.shape[0] == 0:
        return empty_net(n, theta_net)
    arr = np.unique(arr, axis=0)  # exact dedup; rows end up sorted
    min_chord = chord_of_angle(theta_net / 2.0)
    if arr.shape[0] > 4096:
        arr = _voxel_dedup(arr, min_chord / math.sqrt(n))
    accepted = _greedy_select(arr, min_chord)
    return DirectionSet(n, arr[accepted], theta_net)


def net_insert(net: DirectionSet, a) -> DirectionSet:
    """Insert one direction if it keeps the net property."""
    a = np.asarray(a, dtype=float).reshape(net.n)
    norm = np.linalg.norm(a)
    if abs(norm - 1.0) > _UNIT_TOL:
        raise ValidationError(f"direction has norm {norm!r}, expected unit")
    if not net.is_empty:
        dist, _ = net.tree().query(a, k=1)
        if angle_of_chord(dist) < net.theta_net / 2.0:
            return net
    merged = np.vstack([net.dirs, a[None, :]])
    order = np.lexsort(merged.T[::-1])
    return DirectionSet(net.n, merged[order], net.theta_net, net.saturated)


def _sphere_stand_in(net: DirectionSet) -> np.ndarray:
    """Witness directions plus a fixed coarse grid standing for S^{n-1}.

    Used when a saturated set sits on the far side of a sup: the sup then
    runs over the whole sphere, which is approximated by a deterministic
    probe grid united with the witness sample.
    """
    return np.vstack([net.dirs, probe_grid(net.n, 6.0)])


def min_angles_deg(net: DirectionSet, queries: np.ndarray) -> np.ndarray:
    """Angle from each query direction to the nearest net direction."""
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    if net.saturated:
        return np.zeros(queries.shape[0])
    if net.is_empty:
        return np.full(queries.shape[0], np.inf)
    dist, _ = net.tree().query(queries, k=1)
    return angle_of_chord(dist)


def hausdorff_angle(d1: DirectionSet, d2: DirectionSet,
                    mode: str = "symmetric") -> float:
    """Sup-min angular distance between nets, in degrees."""
    if d1.n != d2.n:
        raise ValidationError("ambient dimension mismatch")
    if d1.is_empty and d2.is_empty:
        return 0.0
    if d1.is_empty or d2.is_empty:
        return math.inf

    def into(src: DirectionSet, dst: DirectionSet) -> float:
        if dst.saturated:
            return 0.0
        queries = _sphere_stand_in(src) if src.saturated else src.dirs
        return float(np.max(min_angles_deg(dst, queries)))

    if mode == "d1_into_d2":
        return into(d1, d2)
    if mode != "symmetric":
        raise ValidationError(f"unknown mode {mode!r}")
    return max(into(d1, d2), into(d2, d1))


def union_dirsets(d1: DirectionSet, d2: DirectionSet) -> DirectionSet:
    if d1.n != d2.n:
        raise ValidationError("ambient dimension mismatch")
    if d1.theta_net != d2.theta_net:
        raise ValidationError(
            f"net resolution mismatch: {d1.theta_net} vs {d2.theta_net}")
    if d1.is_empty:
        return d2
    if d2.is_empty:
        return d1
    merged = build_net(np.vstack([d1.dirs, d2.dirs]), d1.n, d1.theta_net)
    if d1.saturated or d2.saturated:
        return DirectionSet(d1.n, merged.dirs, d1.theta_net, saturated=True)
    return merged


def covers(d1: DirectionSet, d2: DirectionSet, theta_deg: float) -> bool:
    """True iff every direction of d2 is within theta of d1."""
    if d1.n != d2.n:
        raise ValidationError("ambient dimension mismatch")
    if d1.saturated:
        return True
    if d2.is_empty:
        return True
    if d1.is_empty:
        return False
    targets = _sphere_stand_in(d2) if d2.saturated else d2.dirs
    return bool(np.max(min_angles_deg(d1, targets)) <= theta_deg)


def coverage_fraction(net: DirectionSet, probes: np.ndarray,
                      theta_deg: float) -> float:
    """Fraction of probe directions within theta of the net."""
    probes = np.atleast_2d(probes)
    if net.saturated:
        return 1.0
    if net.is_empty:
        return 0.0
    return float(np.mean(min_angles_deg(net, probes) <= theta_deg))


def probe_grid(n: int, resolution_deg: float, seed: int = 0,
               count=None) -> np.ndarray:
    """Probe directions on S^{n-1}.

    For n <= 3 the grid is deterministic with spacing close to the
    resolution; above that a resolution-spaced grid is astronomically
    large, so a seeded uniform sample is returned instead and the
    resolution only enters the coverage tolerance.
    """
    if n < 1 or resolution_deg <= 0:
        raise ValidationError("need n >= 1 and a positive resolution")
    if n == 1:
        return np.array([[-1.0], [1.0]])
    if n == 2:
        steps = max(int(math.ceil(360.0 / resolution_deg)), 4)
        angles = 2.0 * np.pi * np.arange(steps) / steps
        return np.column_stack([np.cos(angles), np.sin(angles)])
    if n == 3:
        res_rad = math.radians(resolution_deg)
        total = int(math.ceil(4.0 * math.pi / (res_rad * res_rad)))
        i = np.arange(total)
        z = 1.0 - (2.0 * i + 1.0) / total
        radius = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        phi = i * (math.pi * (3.0 - math.sqrt(5.0)))
        return np.column_stack([radius * np.cos(phi),
                                radius * np.sin(phi), z])
    total = int(count) if count else 8192
    rng = np.random.default_rng(np.random.SeedSequence([seed, n, total]))
    raw = rng.standard_normal((total, n))
    return raw / np.linalg.norm(raw, axis=1)[:, None]


# ---------------------------------------------------------------------------
# persistence

_NET_MAGIC = b"GDNT"
_NET_VERSION = 2
_NET_HEADER = struct.Struct("<4sIIdQI")
_NET_FLAG_SATURATED = 1


def save_net(dirset: DirectionSet, path: str):
    from .reportio import atomic_write_bytes
    flags = _NET_FLAG_SATURATED if dirset.saturated else 0
    header = _NET_HEADER.pack(_NET_MAGIC, _NET_VERSION, dirset.n,
                              dirset.theta_net, len(dirset), flags)
    body = np.ascontiguousarray(dirset.dirs, dtype="<f8").tobytes()
    atomic_write_bytes(path, header + body)


def load_net(path: str) -> DirectionSet:
    try:
        with open(path, "rb") as handle:
            blob = handle.read()
    except OSError as exc:
        raise ReportIOError(f"cannot read {path}: {exc}") from exc
    if len(blob) < _NET_HEADER.size:
        raise ReportIOError(f"{path}: truncated net file")
    magic, version, n, theta_net, count, flags = _NET_HEADER.unpack_from(blob)
    if magic != _NET_MAGIC:
        raise ReportIOError(f"{path}: bad magic {magic!r}")
    if version != _NET_VERSION:
        raise ReportIOError(f"{path}: unsupported version {version}")
    expected = _NET_HEADER.size + count * n * 8
    if len(blob) != expected:
        raise ReportIOError(f"{path}: expected {expected} bytes, "
                            f"got {len(blob)}")
    dirs = np.frombuffer(blob, dtype="<f8", offset=_NET_HEADER.size)
    return DirectionSet(n, dirs.reshape(count, n), theta_net,
                        bool(flags & _NET_FLAG_SATURATED))


def export_dirs_csv(dirset: DirectionSet, path: str):
    from .reportio import atomic_write_text
    lines = [",".join(f"x{i + 1}" for i in range(dirset.n))]
    for row in dirset.dirs:
        lines.append(",".join("%.17g" % val for val in row))
    atomic_write_text(path, "\n".join(lines) + "\n")
