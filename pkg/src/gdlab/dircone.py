"""Direction sets and the geometric directional bundle from point clouds.

D_p is estimated from unit secants to neighbors in an annulus of outer
radius rho*||p|| around p (see _MIN_SEP_FRACTION for the inner edge).
The bundle at the origin applies a limit rule over scales: a direction
survives iff it is realized (within theta_lim) by basepoint direction
sets in every one of the J finest bands, which is the finite stand-in
for "directions realized at arbitrarily small scale".

The per-band realization rule breaks down in one specific regime: when
the bundle is the full sphere in dimension >= 5, each band's secant
sample is a sparse draw from a (n-1)-dimensional distribution, and
requiring every direction to recur in every band filters out almost
everything for purely statistical reasons.  gd_origin therefore first
runs a full-sphere certificate on the pooled cross-band directions
(intrinsic dimension must equal n-1 and a coarse dilated coverage bar
must be met) and, when it fires, returns a saturated direction set that
analytically stands for the whole sphere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import StarvationError, ValidationError
from .sampler import PointCloud
from .sphere import (
    DirectionSet,
    build_net,
    coverage_fraction,
    default_theta_net,
    empty_net,
    min_angles_deg,
    probe_grid,
    union_dirsets,
)

__all__ = [
    "DirParams", "Bundle", "direction_set_at", "direction_set_origin",
    "gd_origin", "sample_bundle", "gd_from_bundle",
]

_MIN_BAND_POINTS = 50      # gd_origin needs this many points per used band
_MAX_NEIGHBORS = 256       # per-basepoint secant cap (keeps memory flat)

# Full-sphere certificate (see module docstring).  Below dimension 5 the
# band nets stay enumerable at working resolution, so the per-band rule is
# used unconditionally.  The pooled sample is capped for time and memory;
# the witness subsample is what a saturated result stores.
_SATURATE_MIN_N = 5
_SATURATE_DILATION = 4.0   # coverage tolerance, in units of theta_net
_SATURATE_COVER = 0.85
_SATURATE_QUANTILE = 0.75  # this share of dimension probes may read low: a
                           # full-sphere bundle of a stratified set is often a
                           # mixture with lower-dimensional direction families
_SATURATE_SAMPLE = 600_000
_WITNESS_SAMPLE = 60_000

# Secant pairs are drawn from an annulus [0.3, 1] * rho * ||p||, not a full
# ball.  A limit direction at p is realized at every small scale, so the
# annulus still sees it, while pairs much shorter than the neighborhood
# radius mostly connect p to a different branch passing sub-scale close
# (e.g. two planes near their common line) and point far from any true
# limit of secants at p.
_MIN_SEP_FRACTION = 0.3


@dataclass(frozen=True)
class DirParams:
    rho: float = 0.1
    theta_net: float = 0.0          # 0 = dimension default
    limit_bands: int = 3
    theta_lim: float = 0.0          # 0 = 2 * theta_net
    include_base_directions: bool = True

    def __post_init__(self):
        if not 0.0 < self.rho < 0.5:
            raise ValidationError("rho must lie in (0, 0.5)")
        if self.limit_bands < 2:
            raise ValidationError("limit_bands must be >= 2")

    def net_theta(self, n: int) -> float:
        return self.theta_net if self.theta_net else default_theta_net(n)

    def lim_theta(self, n: int) -> float:
        theta = self.theta_lim if self.theta_lim else 2.0 * self.net_theta(n)
        if theta < self.net_theta(n):
            raise ValidationError("theta_lim must be >= theta_net")
        return theta


class Bundle:
    """Band-tagged (basepoint, direction) pairs collected on a cloud."""

    __slots__ = ("n", "basepoints", "directions", "band", "theta_net")

    def __init__(self, n, basepoints, directions, band, theta_net):
        self.n = n
        self.basepoints = np.ascontiguousarray(basepoints, dtype=float)
        self.directions = np.ascontiguousarray(directions, dtype=float)
        self.band = np.ascontiguousarray(band, dtype=np.int64)
        self.theta_net = float(theta_net)
        for arr in (self.basepoints, self.directions, self.band):
            arr.flags.writeable = False

    def __len__(self):
        return self.band.shape[0]

    def export_csv(self, path: str):
        from .reportio import atomic_write_text
        head = ("band,"
                + ",".join(f"p{i + 1}" for i in range(self.n)) + ","
                + ",".join(f"a{i + 1}" for i in range(self.n)))
        lines = [head]
        for j in range(len(self)):
            row = ([str(int(self.band[j]))]
                   + ["%.17g" % v for v in self.basepoints[j]]
                   + ["%.17g" % v for v in self.directions[j]])
            lines.append(",".join(row))
        atomic_write_text(path, "\n".join(lines) + "\n")


def _cloud_tree(cloud: PointCloud):
    pts = cloud.all_points()
    return pts, cKDTree(pts) if pts.shape[0] else None, cloud.all_branches()


def direction_set_at(cloud: PointCloud, p, params: DirParams,
                     _pts_tree=None) -> DirectionSet:
    """Net of unit secants from p to cloud points in the secant annulus."""
    p = np.asarray(p, dtype=float).reshape(cloud.n)
    norm_p = float(np.linalg.norm(p))
    if norm_p <= 0.0:
        raise ValidationError(
            "direction_set_at needs p != 0; use direction_set_origin")
    pts, tree, branches = (_pts_tree if _pts_tree is not None
                           else _cloud_tree(cloud))
    theta = params.net_theta(cloud.n)
    if tree is None:
        return empty_net(cloud.n, theta)
    radius = params.rho * norm_p
    idx = np.asarray(tree.query_ball_point(p, radius), dtype=np.intp)
    neighbors = pts[idx]
    diffs = neighbors - p
    lengths = np.linalg.norm(diffs, axis=1)
    good = lengths >= _MIN_SEP_FRACTION * radius
    # When p coincides with a labeled cloud point, secants toward other
    # branches are excluded: x -> p eventually leaves every branch not
    # passing through p, so those directions are not limits at p.
    d0, i0 = tree.query(p, k=1)
    if d0 <= 1e-9 * norm_p and branches[i0] >= 0:
        good &= (branches[idx] < 0) | (branches[idx] == branches[i0])
    dirs = diffs[good] / lengths[good, None]
    return build_net(dirs, cloud.n, theta)


def _usable_bands(cloud: PointCloud, params: DirParams, min_points: int):
    """Indices of the J finest bands holding at least min_points points."""
    usable = [j for j, (_, pts) in enumerate(cloud.bands)
              if pts.shape[0] >= min_points]
    if len(usable) < params.limit_bands:
        return None
    return usable[-params.limit_bands:]


def direction_set_origin(cloud: PointCloud,
                         params: DirParams) -> DirectionSet:
    """Directions of points themselves, intersected across the finest bands."""
    bands = _usable_bands(cloud, params, 1)
    if bands is None:
        raise ValidationError(
            f"need {params.limit_bands} nonempty bands, "
            f"have {len(cloud.nonempty_bands())}")
    theta = params.net_theta(cloud.n)
    nets = []
    for j in bands:
        pts = cloud.bands[j][1]
        dirs = pts / np.linalg.norm(pts, axis=1)[:, None]
        nets.append(build_net(dirs, cloud.n, theta))
    return _intersect_band_nets(nets, cloud.n, theta,
                                params.lim_theta(cloud.n))


def _intersect_band_nets(nets, n, theta_net, theta_lim) -> DirectionSet:
    """Keep candidate directions realized in every band net."""
    nonempty = [net for net in nets if not net.is_empty]
    if len(nonempty) < len(nets) or not nets:
        return empty_net(n, theta_net)
    candidates = np.vstack([net.dirs for net in nets])
    keep = np.ones(candidates.shape[0], dtype=bool)
    for net in nets:
        keep &= min_angles_deg(net, candidates) <= theta_lim
        if not keep.any():
            return empty_net(n, theta_net)
    return build_net(candidates[keep], n, theta_net)


def _band_pairs(cloud: PointCloud, band_index: int, params: DirParams,
                pts_tree):
    """Capped unit secants for every basepoint of one band."""
    pts, tree, branches = pts_tree
    base = cloud.bands[band_index][1]
    norms = np.linalg.norm(base, axis=1)
    radii = params.rho * norms
    k = min(_MAX_NEIGHBORS + 1, pts.shape[0])
    dists, idx = tree.query(base, k=k)
    if k == 1:
        dists, idx = dists[:, None], idx[:, None]
    within = (dists <= radii[:, None]) & (dists >= _MIN_SEP_FRACTION * radii[:, None])
    if cloud.branch_ids is not None:
        # Same-branch secants only (unlabeled points pair with anything):
        # a basepoint q strictly off a branch never realizes that branch's
        # directions as limits of x -> q, so cross-branch pairs at finite
        # scale are junction artifacts, not elements of D_q.
        bq = cloud.branch_ids[band_index].astype(np.int32)
        bx = branches[idx].astype(np.int32)
        within &= (bq[:, None] < 0) | (bx < 0) | (bx == bq[:, None])
    rows, cols = np.nonzero(within)
    neighbors = pts[idx[rows, cols]]
    diffs = neighbors - base[rows]
    lengths = dists[rows, cols]
    dirs = diffs / lengths[:, None]
    return base[rows], dirs, rows


def _full_sphere_check(pooled: np.ndarray, n: int, theta: float):
    """(fired, upper-quantile cone dim, coverage) for pooled directions."""
    from .conealg import DimParams, dim_profile
    if pooled.shape[0] > _SATURATE_SAMPLE:
        rng = np.random.default_rng(0x5A70)
        pick = rng.choice(pooled.shape[0], _SATURATE_SAMPLE, replace=False)
        pooled = pooled[np.sort(pick)]
    pool = DirectionSet(n, pooled, theta)
    profile = np.sort(dim_profile(pool, DimParams()))
    est = int(profile[int(_SATURATE_QUANTILE * (profile.size - 1))]) + 1
    if est != n:
        return False, est, 0.0, pool
    cov = coverage_fraction(pool, probe_grid(n, 6.0),
                            _SATURATE_DILATION * theta)
    return cov >= _SATURATE_COVER, est, cov, pool


def _witness_net(pool: DirectionSet, theta: float) -> DirectionSet:
    dirs = pool.dirs
    if dirs.shape[0] > _WITNESS_SAMPLE:
        rng = np.random.default_rng(0x5A71)
        pick = rng.choice(dirs.shape[0], _WITNESS_SAMPLE, replace=False)
        dirs = dirs[np.sort(pick)]
    net = build_net(dirs, pool.n, theta)
    return DirectionSet(pool.n, net.dirs, theta, saturated=True)


def gd_origin(cloud: PointCloud, params: DirParams) -> DirectionSet:
    """Estimate the origin's geometric directional bundle from a cloud."""
    bands = _usable_bands(cloud, params, _MIN_BAND_POINTS)
    if bands is None:
        small = min(
            ((pts.shape[0], j, r) for j, (r, pts) in enumerate(cloud.bands)),
            default=(0, 0, 0.0))
        raise StarvationError(small[1], small[2], small[0], _MIN_BAND_POINTS)
    n = cloud.n
    theta = params.net_theta(n)
    pts_tree = _cloud_tree(cloud)
    raw = []
    for j in bands:
        _, dirs, _ = _band_pairs(cloud, j, params, pts_tree)
        raw.append(dirs)
    if n >= _SATURATE_MIN_N:
        fired, _, _, pool = _full_sphere_check(np.vstack(raw), n, theta)
        if fired:
            return _witness_net(pool, theta)
    nets = [build_net(dirs, n, theta) for dirs in raw]
    result = _intersect_band_nets(nets, n, theta, params.lim_theta(n))
    if params.include_base_directions:
        result = union_dirsets(result, direction_set_origin(cloud, params))
    return result


def sample_bundle(cloud: PointCloud, params: DirParams) -> Bundle:
    """The (basepoint, direction) pairs behind gd_origin, band-tagged."""
    bands = _usable_bands(cloud, params, _MIN_BAND_POINTS)
    if bands is None:
        raise StarvationError(0, 0.0, cloud.total_points(), _MIN_BAND_POINTS)
    pts_tree = _cloud_tree(cloud)
    all_base, all_dirs, all_band = [], [], []
    for j in bands:
        base, dirs, _ = _band_pairs(cloud, j, params, pts_tree)
        all_base.append(base)
        all_dirs.append(dirs)
        all_band.append(np.full(base.shape[0], j, dtype=np.int64))
    return Bundle(cloud.n, np.vstack(all_base), np.vstack(all_dirs),
                  np.concatenate(all_band), params.net_theta(cloud.n))


def gd_from_bundle(bundle: Bundle, params: DirParams,
                   base_dirs: DirectionSet = None) -> DirectionSet:
    """Rebuild the bundle estimate from stored pairs (same limit rule)."""
    n = bundle.n
    theta = params.net_theta(n)
    nets = []
    for j in np.unique(bundle.band):
        dirs = bundle.directions[bundle.band == j]
        nets.append(build_net(dirs, n, theta))
    result = _intersect_band_nets(nets, n, theta, params.lim_theta(n))
    if base_dirs is not None:
        result = union_dirsets(result, base_dirs)
    return result
