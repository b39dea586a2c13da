"""Structure analysis: local dimension, decomposition, plane unions, splits.

Local dimension comes from the singular-value profile of centered
neighborhoods at nested scales with median voting.  The same machinery,
moved to tangent coordinates on the sphere, measures the intrinsic
dimension of direction sets.  A greedy seeded RANSAC answers whether a
direction set fits inside a finite union of m-dimensional subspace
traces, and a pointwise dimension classifier splits a union-of-planes
cone into its finitely-covered and thick parts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ValidationError
from .sampler import PointCloud
from .sphere import DirectionSet, chord_of_angle

__all__ = [
    "DimParams", "PlaneUnionDecision", "UNDETERMINED",
    "local_dimension_at", "decompose_by_local_dimension",
    "dim_profile", "estimate_dim", "cone_dimension",
    "finite_plane_union_test",
    "split_b0_bplus",
]

UNDETERMINED = -1
_LOCAL_RADIUS_FACTOR = 0.3    # neighborhood radius as a fraction of ||p||
_SPHERE_RADIUS_CAP_DEG = 30.0  # tangent-coordinate neighborhoods stay local
_NOISE_FOLD = 0.01
_LAMBDA_BANDS = 3             # bands a class must reach to count in Lambda_0
_LAMBDA_MIN_SHARE = 0.05      # minimum share of a fine band to count as present


@dataclass(frozen=True)
class DimParams:
    k_neighbors: int = 40
    pca_gap: float = 0.2
    scale_votes: int = 3

    def __post_init__(self):
        if self.k_neighbors < 2:
            raise ValidationError("k_neighbors must be >= 2")
        if not 0.0 < self.pca_gap < 1.0:
            raise ValidationError("pca_gap must lie in (0, 1)")
        if self.scale_votes < 1:
            raise ValidationError("scale_votes must be >= 1")

    def check_for_dim(self, n: int):
        if self.k_neighbors < 2 * n:
            raise ValidationError(
                f"k_neighbors={self.k_neighbors} below 2*n={2 * n}")

    def vote_counts(self, k: int, floor: int):
        counts = []
        for i in range(self.scale_votes):
            counts.append(max(int(round(k * 0.7 ** i)), floor))
        return counts


@dataclass
class PlaneUnionDecision:
    contained: bool
    planes: list
    residual_fraction: float
    max_planes_used: int


def _count_dims(offsets: np.ndarray, pca_gap: float) -> np.ndarray:
    """Singular values above pca_gap * largest, per batch row.

    offsets has shape (batch, k, dim) and is already relative to the base
    point, which is itself a member of the set; no mean-centering.  Zero
    rows contribute nothing, so padded entries are harmless.
    """
    sv = np.linalg.svd(offsets, compute_uv=False)
    top = sv[:, 0]
    counts = np.sum(sv > pca_gap * np.maximum(top[:, None], 1e-300), axis=1)
    counts[top <= 1e-300] = 0
    return counts


def _median_int(values) -> int:
    ordered = sorted(int(v) for v in values)
    return ordered[(len(ordered) - 1) // 2]


def _batched_local_dims(pts: np.ndarray, base: np.ndarray, radii: np.ndarray,
                        params: DimParams, tree=None) -> np.ndarray:
    """Local dimension per base point; UNDETERMINED where neighbors lack."""
    n = pts.shape[1]
    k = params.k_neighbors
    if tree is None:
        tree = cKDTree(pts)
    count = base.shape[0]
    out = np.full(count, UNDETERMINED, dtype=np.int64)
    if pts.shape[0] <= k:
        return out
    dists, idx = tree.query(base, k=k + 1)
    # Drop the self column when base points belong to the cloud.
    self_col = dists[:, 0] <= 1e-15
    neigh_idx = np.where(self_col[:, None], idx[:, 1:], idx[:, :-1])
    neigh_dist = np.where(self_col[:, None], dists[:, 1:], dists[:, :-1])
    determined = neigh_dist[:, -1] <= radii
    if not determined.any():
        return out
    rows = np.flatnonzero(determined)
    votes = []
    sizes = params.vote_counts(k, max(n + 2, 4))
    for start in range(0, rows.size, 65536):
        chunk = rows[start:start + 65536]
        offsets = pts[neigh_idx[chunk]] - base[chunk][:, None, :]
        chunk_votes = np.stack(
            [_count_dims(offsets[:, :size, :], params.pca_gap)
             for size in sizes], axis=1)
        votes.append(chunk_votes)
    votes = np.concatenate(votes, axis=0)
    med = np.sort(votes, axis=1)[:, (votes.shape[1] - 1) // 2]
    out[rows] = med
    return out


def local_dimension_at(cloud: PointCloud, p, params: DimParams) -> int:
    """Dimension of the cloud near p, or UNDETERMINED."""
    params.check_for_dim(cloud.n)
    p = np.asarray(p, dtype=float).reshape(1, cloud.n)
    norm = float(np.linalg.norm(p))
    if norm <= 0:
        raise ValidationError("local dimension needs p != 0")
    pts = cloud.all_points()
    radius = np.array([_LOCAL_RADIUS_FACTOR * norm])
    return int(_batched_local_dims(pts, p, radius, params)[0])


def decompose_by_local_dimension(cloud: PointCloud, params: DimParams):
    """Partition the cloud by local dimension; returns ({i: cloud}, m0)."""
    params.check_for_dim(cloud.n)
    if cloud.total_points() == 0:
        return {}, 0
    pts = cloud.all_points()
    tree = cKDTree(pts)
    band_dims = []
    for j, (_, band_pts) in enumerate(cloud.bands):
        if band_pts.shape[0] == 0:
            band_dims.append(np.empty(0, dtype=np.int64))
            continue
        norms = np.linalg.norm(band_pts, axis=1)
        dims = _batched_local_dims(pts, band_pts,
                                   _LOCAL_RADIUS_FACTOR * norms, params,
                                   tree=tree)
        if cloud.dim_hints is not None:
            # Sampling-time certificates (regular points of an implicit
            # branch) are exact and see past the neighborhood resolution;
            # they take precedence over the PCA vote.
            hints = cloud.dim_hints[j]
            dims = np.where(hints >= 0, hints.astype(np.int64), dims)
        band_dims.append(dims)
    all_dims = np.concatenate(band_dims)
    determined = all_dims[all_dims != UNDETERMINED]
    if determined.size == 0:
        raise ValidationError("no point had enough neighbors to classify")

    # Fold sub-1% classes into the nearest kept class (ties upward).
    kept = {int(v): int(c) for v, c in
            zip(*np.unique(determined, return_counts=True))}
    total = determined.size
    while len(kept) > 1:
        value, count = min(kept.items(), key=lambda item: (item[1], item[0]))
        if count >= _NOISE_FOLD * total:
            break
        del kept[value]
        target = min(kept, key=lambda j: (abs(j - value), -j))
        kept[target] += count
    remap = {}
    kept_sorted = sorted(kept)
    for value in np.unique(determined):
        value = int(value)
        remap[value] = (value if value in kept
                        else min(kept_sorted,
                                 key=lambda j: (abs(j - value), -j)))

    # Rebuild per-class clouds, preserving band structure.
    classes = {}
    for value in kept_sorted:
        bands = []
        hint_bands = [] if cloud.dim_hints is not None else None
        branch_bands = [] if cloud.branch_ids is not None else None
        for j, ((radius, band_pts), dims) in enumerate(
                zip(cloud.bands, band_dims)):
            if dims.size == 0:
                bands.append((radius, np.empty((0, cloud.n))))
                if hint_bands is not None:
                    hint_bands.append(np.empty(0, dtype=np.int8))
                if branch_bands is not None:
                    branch_bands.append(np.empty(0, dtype=np.int16))
                continue
            mapped = np.array([remap.get(int(d), UNDETERMINED)
                               for d in dims])
            keep = mapped == value
            bands.append((radius, band_pts[keep]))
            if hint_bands is not None:
                hint_bands.append(cloud.dim_hints[j][keep])
            if branch_bands is not None:
                branch_bands.append(cloud.branch_ids[j][keep])
        classes[value] = PointCloud(cloud.n, bands, cloud.seed,
                                    f"{cloud.desc_hash}-dim{value}",
                                    dim_hints=hint_bands,
                                    branch_ids=branch_bands)

    # Lambda_0: classes holding a stable share of each of the finest bands.
    # Presence means at least 5% of the classified points in the band, so
    # classes that fade out with scale (coarse-scale resolution artifacts)
    # do not survive into the germ decomposition.
    det_per_band = [sum(c.bands[j][1].shape[0] for c in classes.values())
                    for j in range(len(cloud.bands))]
    finest = [j for j, d in enumerate(det_per_band) if d > 0][-_LAMBDA_BANDS:]
    lambda0 = {}
    for value, sub in classes.items():
        if all(sub.bands[j][1].shape[0] >=
               _LAMBDA_MIN_SHARE * det_per_band[j] for j in finest):
            lambda0[value] = sub
    if not lambda0:
        raise ValidationError("no dimension class reaches the finest bands")
    m0 = min(lambda0)
    return lambda0, m0


# ---------------------------------------------------------------------------
# intrinsic dimension of direction sets

def _tangent_neighborhoods(dirset: DirectionSet, probes: np.ndarray,
                           k: int, cap_deg: float = _SPHERE_RADIUS_CAP_DEG):
    """Log-map neighbor coordinates around each probe; (m, k, n) + mask."""
    tree = dirset.tree()
    dists, idx = tree.query(probes, k=min(k + 1, len(dirset)))
    if dists.ndim == 1:
        dists, idx = dists[:, None], idx[:, None]
    self_col = dists[:, 0] <= 1e-15
    neigh_idx = np.where(self_col[:, None], idx[:, 1:], idx[:, :-1])
    neigh_dist = np.where(self_col[:, None], dists[:, 1:], dists[:, :-1])
    cap = 2.0 * math.sin(math.radians(cap_deg) / 2.0)
    valid = neigh_dist <= cap
    vecs = dirset.dirs[neigh_idx]              # (m, k, n)
    radial = np.sum(vecs * probes[:, None, :], axis=2)
    tangent = vecs - radial[..., None] * probes[:, None, :]
    tnorm = np.linalg.norm(tangent, axis=2)
    angles = np.arctan2(tnorm, radial)
    safe = np.maximum(tnorm, 1e-300)
    logmap = tangent * (angles / safe)[..., None]
    logmap[~valid] = 0.0
    return logmap, valid


def dim_profile(dirset: DirectionSet, params: DimParams,
                n_probe: int = 200) -> np.ndarray:
    """Per-probe intrinsic dimension votes across the set.

    The profile is what mixtures need: a union of families of different
    dimensions shows up as a step in the sorted profile, which a single
    median would flatten.
    """
    if dirset.is_empty:
        return np.empty(0, dtype=np.int64)
    size = len(dirset)
    if size == 1:
        return np.zeros(1, dtype=np.int64)
    stride = max(size // n_probe, 1)
    probes = dirset.dirs[::stride]
    k = min(params.k_neighbors, size - 1)
    logmap, _ = _tangent_neighborhoods(dirset, probes, k)
    votes = []
    for count in params.vote_counts(k, min(4, k)):
        votes.append(_count_dims(logmap[:, :count, :], params.pca_gap))
    votes = np.stack(votes, axis=1)
    return np.sort(votes, axis=1)[:, (votes.shape[1] - 1) // 2]


def estimate_dim(dirset: DirectionSet, params: DimParams,
                 n_probe: int = 200) -> int:
    """Intrinsic dimension of a direction set; empty nets give UNDETERMINED."""
    if dirset.saturated:
        return dirset.n - 1
    if dirset.is_empty:
        return UNDETERMINED
    return _median_int(dim_profile(dirset, params, n_probe))


def cone_dimension(dirset: DirectionSet, params: DimParams) -> int:
    """Dimension of the half-cone over the net; 0 for the empty cone."""
    est = estimate_dim(dirset, params)
    return 0 if est == UNDETERMINED else est + 1


# ---------------------------------------------------------------------------
# finite unions of subspace traces

def _angles_to_subspace(dirs: np.ndarray, basis: np.ndarray) -> np.ndarray:
    proj = dirs @ basis.T @ basis
    pnorm = np.clip(np.linalg.norm(proj, axis=1), 0.0, 1.0)
    return np.degrees(np.arccos(pnorm))


def _canonical_basis(basis: np.ndarray) -> np.ndarray:
    rows = []
    for row in basis:
        lead = row[np.abs(row) > 1e-9]
        rows.append(row if (lead.size == 0 or lead[0] > 0) else -row)
    rows = np.array(rows)
    order = np.lexsort(rows.T[::-1])
    return rows[order]


def _fit_subspace(dirs: np.ndarray, m: int) -> np.ndarray:
    _, _, vt = np.linalg.svd(dirs, full_matrices=False)
    return vt[:m] if vt.shape[0] >= m else np.vstack(
        [vt, np.zeros((m - vt.shape[0], dirs.shape[1]))])


def finite_plane_union_test(dirset: DirectionSet, m: int,
                            max_planes: int = 16,
                            angular_tol: float = 0.0,
                            seed: int = 0,
                            trials: int = 1000) -> PlaneUnionDecision:
    """Greedy RANSAC cover of the net by m-dimensional subspace traces."""
    n = dirset.n
    if not 1 <= m < n:
        raise ValidationError(f"need 1 <= m < n, got m={m}, n={n}")
    if angular_tol <= 0:
        angular_tol = 2.0 * dirset.theta_net
    if dirset.saturated:
        # The whole sphere has positive measure off every finite union of
        # proper subspace traces.
        return PlaneUnionDecision(False, [], 1.0, 0)
    total = len(dirset)
    if total == 0:
        return PlaneUnionDecision(True, [], 0.0, 0)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB1A])
                                )
    remaining = dirset.dirs.copy()
    planes = []
    for _ in range(max_planes):
        if remaining.shape[0] == 0:
            break
        if remaining.shape[0] <= m:
            basis = _canonical_basis(_fit_subspace(remaining, m))
            planes.append((m, basis))
            remaining = remaining[
                _angles_to_subspace(remaining, basis) > angular_tol]
            continue
        best = None
        for _ in range(trials):
            pick = rng.choice(remaining.shape[0], size=m, replace=False)
            sample = remaining[pick]
            q, r = np.linalg.qr(sample.T)
            if np.min(np.abs(np.diag(r))) < 1e-9:
                continue
            basis = q[:, :m].T
            inliers = _angles_to_subspace(remaining, basis) <= angular_tol
            if inliers.sum() >= m:
                basis = _fit_subspace(remaining[inliers], m)
                inliers = _angles_to_subspace(remaining, basis) <= angular_tol
            basis = _canonical_basis(basis)
            key = (int(inliers.sum()), tuple(-basis.ravel()))
            if best is None or key > best[0]:
                best = (key, basis, inliers)
        if best is None:
            break
        _, basis, inliers = best
        if not inliers.any():
            break
        planes.append((m, basis))
        remaining = remaining[~inliers]
    residual = remaining.shape[0] / total
    return PlaneUnionDecision(residual <= 0.005, planes, residual,
                              len(planes))


# ---------------------------------------------------------------------------
# B0 / B+ split of a union-of-planes cone

# A direction is "thin" when its local net patch is covered by a couple of
# (k-1)-dimensional subsphere arcs.  Plain pointwise PCA is the wrong tool
# at plane crossings: two arcs through one direction span a 2-dimensional
# tangent fit even though the structure is a union of curves.  Flats are
# affine in log-map coordinates because a neighboring plane's trace passes
# near, not through, the probed direction.
_SPLIT_RADIUS_FACTOR = 4.0   # neighborhood radius in units of theta_net
_SPLIT_SLAB_FACTOR = 0.30    # flat inlier slab in units of theta_net;
                             # kept below the net row spacing so one slab
                             # cannot swallow two rows of a thick patch
_SPLIT_RESIDUAL = 0.15       # uncovered weight fraction certifying thickness
_SPLIT_FLATS = 2             # flats allowed before calling the patch thick
_SPLIT_MAX_NEIGHBORS = 96
_SPLIT_TRIALS = 128          # sampled affine flat candidates
# Where a thin stratum meets a thick region, the probe window of the last
# thin rows is dominated by the thick side and the raw labels erode the
# stratum.  A thick label within this many net units of an originally
# thin label is flipped back; original labels only, so the flip cannot
# cascade into the thick interior.
_SPLIT_RESCUE = 1.7


def _greedy_flat_residual(tan: np.ndarray, dim: int, tau: float,
                          radius: float, rng: np.random.Generator) -> float:
    """Uncovered weight fraction after greedily removing _SPLIT_FLATS flats.

    tan holds log-map neighbor coordinates (degree-scaled, rows in the
    tangent space); flats of dimension dim are traces of nearby
    (dim+1)-plane cones, so they need not pass through the origin.
    Neighbors are weighted toward the origin so that thick structure far
    out in the patch does not certify thickness at the probed direction.
    """
    m = tan.shape[0]
    if m == 0:
        return 0.0
    norms = np.linalg.norm(tan, axis=1)
    weights = np.exp(-4.0 * (norms / radius) ** 2)
    if dim == 0:
        # Flats are points: the origin and each neighbor are candidates.
        offsets = np.vstack([np.zeros((1, tan.shape[1])), tan])
        bases = np.zeros((offsets.shape[0], 0, tan.shape[1]))
    elif dim == 1:
        # Through-origin candidates from each neighbor direction, plus
        # seeded affine candidates through sampled neighbor pairs.
        units = tan / np.maximum(norms, 1e-300)[:, None]
        offsets = [np.zeros((m, tan.shape[1]))]
        bases = [units[:, None, :]]
        if m >= 2:
            first = rng.integers(0, m, size=_SPLIT_TRIALS)
            second = (first + 1 + rng.integers(0, m - 1,
                                               size=_SPLIT_TRIALS)) % m
            span = tan[second] - tan[first]
            span /= np.maximum(np.linalg.norm(span, axis=1), 1e-300)[:, None]
            offsets.append(tan[first])
            bases.append(span[:, None, :])
        offsets = np.vstack(offsets)
        bases = np.vstack(bases)
    else:
        # Seeded affine candidates through dim+1 sampled neighbors.
        if m < dim + 1:
            return 1.0
        picks = np.array([rng.choice(m, size=dim + 1, replace=False)
                          for _ in range(_SPLIT_TRIALS)])
        offsets = tan[picks[:, 0]]
        aff_bases = []
        for rows in picks:
            diffs = tan[rows[1:]] - tan[rows[0]]
            q, _ = np.linalg.qr(diffs.T)
            aff_bases.append(q.T[:dim])
        bases = np.stack(aff_bases)
    diff = tan[None, :, :] - offsets[:, None, :]
    dist_sq = np.sum(diff ** 2, axis=2)
    if bases.shape[1]:
        proj = np.einsum("cdn,cmn->cmd", bases, diff)
        dist_sq = dist_sq - np.sum(proj ** 2, axis=2)
    inlier_all = dist_sq <= tau * tau
    alive = np.ones(m, dtype=bool)
    total = float(weights.sum())
    covered = 0.0
    for _ in range(_SPLIT_FLATS):
        if not alive.any():
            break
        gains = ((inlier_all & alive[None, :]) * weights[None, :]).sum(axis=1)
        best = int(np.argmax(gains))
        if gains[best] <= 0.0:
            break
        covered += float(gains[best])
        alive &= ~inlier_all[best]
    return (total - covered) / total


def split_b0_bplus(dirset: DirectionSet, k: int, params: DimParams,
                   radius_cap_deg: float = 0.0, seed: int = 0):
    """Split net directions into a thin part B0 and a thick part B+.

    B+ collects directions whose local patch of the net is genuinely
    k-dimensional as a cone (more than (k-1)-dimensional on the sphere):
    the patch is not covered by a few (k-1)-dimensional great subspheres
    through the direction.  B0 is the complement, the part lying in
    finitely many k-planes.  Returns (B0, Bplus), an exact partition.
    """
    if k < 1 or k > dirset.n:
        raise ValidationError("split_b0_bplus needs 1 <= k <= n")
    if dirset.is_empty:
        empty = DirectionSet(dirset.n, np.empty((0, dirset.n)),
                             dirset.theta_net)
        return empty, empty
    dirs = dirset.dirs
    size = len(dirset)
    radius = (radius_cap_deg if radius_cap_deg > 0
              else _SPLIT_RADIUS_FACTOR * dirset.theta_net)
    tau = _SPLIT_SLAB_FACTOR * dirset.theta_net
    chord = chord_of_angle(radius)
    kk = min(_SPLIT_MAX_NEIGHBORS + 1, size)
    dists, idx = dirset.tree().query(dirs, k=kk)
    if kk == 1:
        dists, idx = dists[:, None], idx[:, None]
    rng = np.random.default_rng(seed)
    thick = np.zeros(size, dtype=bool)
    min_evidence = max(4, 2 * k)
    for i in range(size):
        near = (dists[i] <= chord) & (dists[i] > 1e-12)
        hood = idx[i][near]
        if hood.shape[0] < min_evidence:
            continue
        nbrs = dirs[hood]
        v = dirs[i]
        cosang = np.clip(nbrs @ v, -1.0, 1.0)
        tan = nbrs - cosang[:, None] * v[None, :]
        tnorm = np.linalg.norm(tan, axis=1)
        keep = tnorm > 1e-12
        if keep.sum() < min_evidence:
            continue
        angles = np.degrees(np.arccos(cosang[keep]))
        logmap = tan[keep] / tnorm[keep, None] * angles[:, None]
        resid = _greedy_flat_residual(logmap, k - 1, tau, radius, rng)
        thick[i] = resid > _SPLIT_RESIDUAL
    # Junction rescue against original labels (see _SPLIT_RESCUE).
    if thick.any() and not thick.all():
        thin_tree = cKDTree(dirs[~thick])
        reach = chord_of_angle(_SPLIT_RESCUE * dirset.theta_net)
        near_thin, _ = thin_tree.query(dirs[thick], k=1)
        flips = np.flatnonzero(thick)[near_thin <= reach]
        thick[flips] = False
    bplus = DirectionSet(dirset.n, dirs[thick], dirset.theta_net)
    b0 = DirectionSet(dirset.n, dirs[~thick], dirset.theta_net)
    return b0, bplus
