"""Multi-scale point clouds of described sets near the origin.

Clouds hold points in dyadic annuli r_j/2 < ||p|| <= r_j with r_j = r0/2^j.
Implicit sets are sampled by annulus rejection plus batched Gauss-Newton
projection onto the equation residuals; curves by parameter-interval
bisection; cones over sphere curves and linear subspaces directly; unions
and products by combining member samplers.  The origin itself is never
emitted.  All draws come from one seeded generator per band, so clouds are
a pure function of (description, schedule, seed).
"""

from __future__ import annotations

import functools
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyConeError,
    GdlabError,
    ReportIOError,
    StarvationError,
    ValidationError,
)
from .expr import Lit
from .setdesc import (
    Catalog,
    Constraint,
    Implicit,
    LinearSubspace,
    ParamCurve,
    Point0,
    Product,
    SetDescription,
    SphereConeOverCurve,
    UnionSet,
    curve_points,
    desc_hash,
    resolve,
)
from .sphere import ConeRep, chord_of_angle

__all__ = [
    "ScaleSchedule", "PointCloud", "sample_multiscale", "resample_cone",
    "project_to_implicit", "save_cloud", "load_cloud", "export_cloud_csv",
    "RETRY_FACTOR", "STARVE_FRACTION",
]

RETRY_FACTOR = 50          # draw budget per band, as a multiple of the quota
STARVE_FRACTION = 0.05     # below this fraction of quota a band has starved
_CONVERGE_TOL = 1e-9       # residual target relative to per-band magnitude


@dataclass(frozen=True)
class ScaleSchedule:
    """Dyadic annuli r_j = r0 / 2^j, j = 0..band_count-1."""

    r0: float = 2.0 ** -4
    band_count: int = 10
    per_band: int = 0      # 0 = dimension default (6000 for n<=3, else 8000)

    def __post_init__(self):
        if self.band_count < 4:
            raise ValidationError("band_count must be >= 4")
        if self.per_band and self.per_band < 100:
            raise ValidationError("per_band must be >= 100")
        if not 0 < self.r0 < 1:
            raise ValidationError("r0 must lie in (0, 1)")

    def quota(self, n: int) -> int:
        if self.per_band:
            return self.per_band
        return 6000 if n <= 3 else 8000

    def radii(self) -> np.ndarray:
        return self.r0 * np.exp2(-np.arange(self.band_count))


class PointCloud:
    """Immutable banded point cloud; bands are (radius, points) pairs.

    dim_hints, when present, holds one int8 array per band with the local
    dimension certified at sampling time for points that are regular points
    of an implicit branch system (-1 where no certificate applies).
    branch_ids, when present, tags each point with the index of the branch
    system that claimed it (-1 where no branch claims the point).
    """

    __slots__ = ("n", "bands", "seed", "desc_hash", "dim_hints", "branch_ids")

    def __init__(self, n: int, bands, seed: int, desc_hash: str,
                 dim_hints=None, branch_ids=None):
        frozen = []
        for radius, pts in bands:
            pts = np.ascontiguousarray(np.asarray(pts, dtype=float))
            if pts.size == 0:
                pts = np.empty((0, n))
            pts.flags.writeable = False
            frozen.append((float(radius), pts))
        self.n = n
        self.bands = tuple(frozen)
        self.seed = int(seed)
        self.desc_hash = desc_hash
        self.dim_hints = self._frozen_band_arrays(
            dim_hints, np.int8, "dim_hints")
        self.branch_ids = self._frozen_band_arrays(
            branch_ids, np.int16, "branch_ids")

    def _frozen_band_arrays(self, arrays, dtype, label):
        if arrays is None:
            return None
        if len(arrays) != len(self.bands):
            raise ValidationError(f"{label} must match the band count")
        kept = []
        for (_, pts), arr in zip(self.bands, arrays):
            arr = np.ascontiguousarray(np.asarray(arr, dtype=dtype))
            if arr.shape != (pts.shape[0],):
                raise ValidationError(f"{label} entries must match band sizes")
            arr.flags.writeable = False
            kept.append(arr)
        return tuple(kept)

    @property
    def band_count(self) -> int:
        return len(self.bands)

    def total_points(self) -> int:
        return sum(pts.shape[0] for _, pts in self.bands)

    def nonempty_bands(self):
        return [j for j, (_, pts) in enumerate(self.bands) if pts.shape[0]]

    def all_points(self) -> np.ndarray:
        chunks = [pts for _, pts in self.bands if pts.shape[0]]
        if not chunks:
            return np.empty((0, self.n))
        return np.vstack(chunks)

    def all_hints(self) -> np.ndarray:
        """Per-point dimension certificates, -1 where absent."""
        if self.dim_hints is None:
            return np.full(self.total_points(), -1, dtype=np.int8)
        chunks = [h for h in self.dim_hints if h.shape[0]]
        if not chunks:
            return np.empty(0, dtype=np.int8)
        return np.concatenate(chunks)

    def all_branches(self) -> np.ndarray:
        """Per-point claiming branch index, -1 where absent."""
        if self.branch_ids is None:
            return np.full(self.total_points(), -1, dtype=np.int16)
        chunks = [b for b in self.branch_ids if b.shape[0]]
        if not chunks:
            return np.empty(0, dtype=np.int16)
        return np.concatenate(chunks)

    def __repr__(self):
        sizes = [pts.shape[0] for _, pts in self.bands]
        return f"PointCloud(n={self.n}, bands={sizes})"


def check_cloud(cloud: PointCloud):
    """Assert the band-membership and dyadic invariants (test helper)."""
    radii = [r for r, _ in cloud.bands]
    for j in range(1, len(radii)):
        if not math.isclose(radii[j], radii[j - 1] / 2.0, rel_tol=1e-12):
            raise ValidationError("band radii are not dyadic")
    for radius, pts in cloud.bands:
        if pts.shape[0] == 0:
            continue
        norms = np.linalg.norm(pts, axis=1)
        if not (np.all(norms > radius / 2.0) and np.all(norms <= radius)):
            raise ValidationError("band membership violated")


# ---------------------------------------------------------------------------
# zero-set branch decomposition
#
# Equations are often given in factored or sum-of-squares form, e.g.
# f*g = 0 or f^2 + g^2 = 0.  The zero set splits exactly into
# {f=0} u {g=0} resp. {f=0, g=0}; sampling each branch separately keeps
# Gauss-Newton away from the flat valleys those forms create.

def _provably_nonneg(e) -> bool:
    from .expr import Add as EAdd, Lit as ELit, Mul as EMul, Pow as EPow
    if isinstance(e, ELit):
        return e.value >= 0
    if isinstance(e, EPow):
        return e.exponent % 2 == 0
    if isinstance(e, EMul):
        return _provably_nonneg(e.left) and _provably_nonneg(e.right)
    if isinstance(e, EAdd):
        return _provably_nonneg(e.left) and _provably_nonneg(e.right)
    return False


def _zero_branches(e):
    """Conjunction lists whose union of zero sets equals {e = 0}."""
    from .expr import Add as EAdd, Lit as ELit, Mul as EMul
    from .expr import Neg as ENeg, Pow as EPow
    if isinstance(e, ENeg):
        return _zero_branches(e.operand)
    if isinstance(e, EPow):
        return _zero_branches(e.base)
    if isinstance(e, EMul):
        if isinstance(e.left, ELit) and e.left.value != 0:
            return _zero_branches(e.right)
        if isinstance(e.right, ELit) and e.right.value != 0:
            return _zero_branches(e.left)
        return _zero_branches(e.left) + _zero_branches(e.right)
    if (isinstance(e, EAdd) and _provably_nonneg(e.left)
            and _provably_nonneg(e.right)):
        combined = []
        for left in _zero_branches(e.left):
            for right in _zero_branches(e.right):
                combined.append(left + right)
        return combined
    return [[e]]


@functools.lru_cache(maxsize=256)
def _implicit_branches(desc: Implicit):
    """Split an implicit system into better-conditioned branch systems."""
    from .setdesc import Constraint
    systems = [[]]
    for eq in desc.equations:
        options = _zero_branches(eq)
        systems = [conj + option for conj in systems for option in options]
        if len(systems) > 16:
            return (desc,)
    if systems == [list(desc.equations)]:
        return (desc,)
    out = []
    seen = set()
    for conj in systems:
        key = tuple(sorted(c.to_text() for c in conj))
        if key in seen:
            continue
        seen.add(key)
        constraints = tuple(Constraint(c, "eq") for c in conj)
        out.append(Implicit(desc.n, constraints + desc.sign_conditions))
    return tuple(out)


# ---------------------------------------------------------------------------
# sampling-time dimension certificates
#
# Pointwise PCA on the cloud can only resolve features larger than the
# neighborhood radius; strata whose cross-sections shrink faster than
# ||p|| (quasi-homogeneous branches) look lower-dimensional at every
# feasible density.  The sampler still knows the defining equations, so
# for each point that is a regular point of its branch system (Jacobian
# rank stable under an ambient jitter) the implicit function theorem
# gives the local dimension exactly: n minus the rank.  These values ride
# along as optional per-point hints; singular points carry -1 and are
# left to the PCA estimator.

_HINT_RANK_TOL = 0.1    # normalized Jacobian singular values below this do not count
_HINT_JITTER = 0.05     # jitter radius for the rank stability test, relative to ||p||
_HINT_CLAIM_TOL = 1e-6  # branch membership bound, relative to band equation scale


def _shift_expr(e, off: int):
    """Rename every variable x_i to x_{i+off} (for product factor lifting)."""
    from .expr import Add as EAdd, Lit as ELit, Mul as EMul, Neg as ENeg
    from .expr import Pow as EPow, Sqrt as ESqrt, Sub as ESub, Var as EVar
    if off == 0 or isinstance(e, ELit):
        return e
    if isinstance(e, EVar):
        return EVar(f"x{int(e.name[1:]) + off}")
    if isinstance(e, EAdd):
        return EAdd(_shift_expr(e.left, off), _shift_expr(e.right, off))
    if isinstance(e, ESub):
        return ESub(_shift_expr(e.left, off), _shift_expr(e.right, off))
    if isinstance(e, EMul):
        return EMul(_shift_expr(e.left, off), _shift_expr(e.right, off))
    if isinstance(e, ENeg):
        return ENeg(_shift_expr(e.operand, off))
    if isinstance(e, EPow):
        return EPow(_shift_expr(e.base, off), e.exponent)
    if isinstance(e, ESqrt):
        return ESqrt(_shift_expr(e.operand, off))
    raise ValidationError(f"cannot shift {type(e).__name__}")


def _lift_implicit(desc: Implicit, off: int, n: int) -> Implicit:
    cons = tuple(Constraint(_shift_expr(c.expr, off), c.op)
                 for c in desc.constraints)
    return Implicit(n, cons)


def _hint_providers(desc: SetDescription, n: int | None = None,
                    off: int = 0):
    """Certificate providers covering the implicit parts of a description.

    Returns ("imp", system) and ("sub", orthonormal basis) entries; an
    empty tuple means no certificates are available (parametric parts).
    """
    if isinstance(desc, Catalog):
        desc = resolve(desc)
    if n is None:
        n = desc.ambient_dim
    if isinstance(desc, Implicit):
        return tuple(("imp", _lift_implicit(b, off, n))
                     for b in _implicit_branches(desc))
    if isinstance(desc, LinearSubspace):
        basis = desc.orthonormal_basis()
        lifted = np.zeros((basis.shape[0], n))
        lifted[:, off:off + desc.ambient_dim] = basis
        return (("sub", lifted),)
    if isinstance(desc, UnionSet):
        out = []
        for member in desc.members:
            out.extend(_hint_providers(member, n, off))
        return tuple(out)
    if isinstance(desc, Product):
        lefts = _hint_providers(desc.left, n, off)
        rights = _hint_providers(desc.right, n, off + desc.left.ambient_dim)
        if not lefts or not rights:
            return ()
        if any(kind != "imp" for kind, _ in lefts + rights):
            return ()
        combos = []
        for _, lsys in lefts:
            for _, rsys in rights:
                combos.append(("imp", Implicit(
                    n, lsys.constraints + rsys.constraints)))
        return tuple(combos) if len(combos) <= 16 else ()
    return ()


def _implicit_point_hints(system: Implicit, pts: np.ndarray,
                          rng: np.random.Generator) -> np.ndarray:
    """n - rank(J) where the rank is jitter-stable, else -1."""
    count, n = pts.shape
    if not system.equations:
        return np.full(count, n, dtype=np.int8)
    jac = _eval_jacobian(system, pts)
    row_scale = np.median(np.linalg.norm(jac, axis=2), axis=0)
    row_scale = np.maximum(row_scale, 1e-300)

    def ranks(j):
        sv = np.linalg.svd(j / row_scale[None, :, None], compute_uv=False)
        return (sv > _HINT_RANK_TOL).sum(axis=1)

    base = ranks(jac)
    stable = np.ones(count, dtype=bool)
    amp = _HINT_JITTER * np.linalg.norm(pts, axis=1)
    for _ in range(2):
        u = rng.standard_normal((count, n))
        u /= np.maximum(np.linalg.norm(u, axis=1), 1e-300)[:, None]
        stable &= ranks(_eval_jacobian(system, pts + amp[:, None] * u)) == base
    return np.where(stable, n - base, -1).astype(np.int8)


def _band_dim_hints(providers, pts: np.ndarray, radius: float, n: int,
                    rng: np.random.Generator):
    """Claim each point by the first provider it satisfies; certify there.

    Returns (hints, branches): certified local dimension per point and the
    index of the claiming provider, both -1 where nothing applies.
    """
    count = pts.shape[0]
    hints = np.full(count, -1, dtype=np.int8)
    branches = np.full(count, -1, dtype=np.int16)
    unclaimed = np.ones(count, dtype=bool)
    for which, (kind, payload) in enumerate(providers):
        if not unclaimed.any():
            break
        idx = np.flatnonzero(unclaimed)
        sub = pts[idx]
        if kind == "sub":
            proj = (sub @ payload.T) @ payload
            near = np.linalg.norm(sub - proj, axis=1) <= 1e-8 * radius
            hints[idx[near]] = payload.shape[0]
            branches[idx[near]] = which
            unclaimed[idx[near]] = False
            continue
        scales = _equation_scales(payload, radius, rng)
        if scales.size:
            on_set = _scaled_residual(
                payload, sub, _HINT_CLAIM_TOL * scales) <= 1.0
        else:
            on_set = np.ones(len(sub), dtype=bool)
        on_set &= _sign_mask(payload, sub)
        if not on_set.any():
            continue
        claimed = idx[on_set]
        hints[claimed] = _implicit_point_hints(payload, pts[claimed], rng)
        branches[claimed] = which
        unclaimed[claimed] = False
    return hints, branches


# ---------------------------------------------------------------------------
# Gauss-Newton projection onto implicit varieties

@functools.lru_cache(maxsize=256)
def _jacobian_exprs(desc: Implicit):
    names = [f"x{i + 1}" for i in range(desc.n)]
    return tuple(tuple(eq.diff(name) for name in names)
                 for eq in desc.equations)


def _eval_equations(desc: Implicit, pts: np.ndarray) -> np.ndarray:
    env = {f"x{i + 1}": pts[:, i] for i in range(desc.n)}
    count = pts.shape[0]
    cols = [np.broadcast_to(np.asarray(eq.evaluate(env), dtype=float),
                            (count,))
            for eq in desc.equations]
    return np.column_stack(cols) if cols else np.empty((count, 0))


def _eval_jacobian(desc: Implicit, pts: np.ndarray) -> np.ndarray:
    env = {f"x{i + 1}": pts[:, i] for i in range(desc.n)}
    count = pts.shape[0]
    rows = []
    for eq_parts in _jacobian_exprs(desc):
        cols = [np.broadcast_to(np.asarray(d.evaluate(env), dtype=float),
                                (count,))
                for d in eq_parts]
        rows.append(np.stack(cols, axis=1))
    return np.stack(rows, axis=1)  # (count, n_eq, n)


def _scaled_residual(desc: Implicit, pts: np.ndarray,
                     tols: np.ndarray) -> np.ndarray:
    res = _eval_equations(desc, pts)
    if res.shape[1] == 0:
        return np.zeros(pts.shape[0])
    with np.errstate(invalid="ignore"):
        ratio = np.max(np.abs(res) / tols, axis=1)
    return np.where(np.isfinite(ratio), ratio, np.inf)


@functools.lru_cache(maxsize=256)
def _hessian_exprs(desc: Implicit):
    names = [f"x{i + 1}" for i in range(desc.n)]
    out = []
    for eq in desc.equations:
        firsts = [eq.diff(name) for name in names]
        out.append(tuple(tuple(d.diff(name) for name in names)
                         for d in firsts))
    return tuple(out)


def _curvature_fold(desc: Implicit, pts: np.ndarray,
                    res: np.ndarray) -> np.ndarray:
    """sum_k res_k * Hess(f_k), the curvature term of the residual energy."""
    env = {f"x{i + 1}": pts[:, i] for i in range(desc.n)}
    m, n = pts.shape
    acc = np.zeros((m, n, n))
    for k, rows in enumerate(_hessian_exprs(desc)):
        w = res[:, k]
        for i in range(n):
            for j in range(i, n):
                e = rows[i][j]
                if isinstance(e, Lit):
                    val = float(e.value)
                    if val == 0.0:
                        continue
                    term = w * val
                else:
                    term = w * np.broadcast_to(
                        np.asarray(e.evaluate(env), dtype=float), (m,))
                acc[:, i, j] += term
                if j > i:
                    acc[:, j, i] += term
    return acc


def _gn_project_batch(desc: Implicit, starts: np.ndarray, tols: np.ndarray,
                      step_cap: float, max_iter: int,
                      curvature: bool = False,
                      retract_radii: np.ndarray | None = None):
    """Project each start onto the equation zero set; returns (pts, ok).

    Damped Newton on the residual energy F = sum f_i^2 / 2.  The plain
    mode uses the Gauss-Newton model J^T J, which converges fast onto
    smooth sheets near the start but cannot walk the curved valleys that
    surround singular strata (its directions all lie along J^T f).  With
    curvature=True the model adds sum f_i Hess(f_i), which bends steps
    along those valleys; since the energy of homogeneous equations also
    decays radially inward, that mode should be combined with
    retract_radii, which renormalizes every trial back to its start's
    radius and confines the descent to each point's own sphere.
    """
    pts = np.array(starts, dtype=float)
    count = pts.shape[0]
    if not desc.equations:
        return pts, np.ones(count, dtype=bool)
    eye = np.eye(desc.n)[None]
    ratio = _scaled_residual(desc, pts, tols)
    active = ratio > 1.0
    failed = np.zeros(count, dtype=bool)
    damp = np.full(count, 1e-3)
    stall = np.zeros(count, dtype=np.int64)
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        sub = pts[idx]
        res = _eval_equations(desc, sub)
        jac = _eval_jacobian(desc, sub)
        grad = np.einsum("mk,mkn->mn", res, jac)
        hess = jac.transpose(0, 2, 1) @ jac
        if curvature:
            hess = hess + _curvature_fold(desc, sub, res)
        scale = np.einsum("mkn,mkn->m", jac, jac) / desc.n + 1e-300
        system = hess + (damp[idx] * scale)[:, None, None] * eye
        try:
            step = np.linalg.solve(system, grad[..., None])[..., 0]
        except np.linalg.LinAlgError:
            system += (scale * 1e-6)[:, None, None] * eye
            step = np.linalg.solve(system, grad[..., None])[..., 0]
        lengths = np.linalg.norm(step, axis=1)
        too_long = lengths > step_cap
        if too_long.any():
            step[too_long] *= (step_cap / lengths[too_long])[:, None]
        trial = sub - step
        if retract_radii is not None:
            norms = np.maximum(np.linalg.norm(trial, axis=1), 1e-300)
            trial *= (retract_radii[idx] / norms)[:, None]
        new_ratio = _scaled_residual(desc, trial, tols)
        accept = new_ratio < ratio[idx]
        progress = new_ratio <= np.maximum(0.97 * ratio[idx], 1.0)
        take = idx[accept]
        pts[take] = trial[accept]
        ratio[take] = new_ratio[accept]
        damp[take] = np.maximum(damp[take] / 3.0, 1e-14)
        damp[idx[~accept]] *= 4.0
        stall[idx] = np.where(progress, 0, stall[idx] + 1)
        give_up = (stall[idx] >= 12) | (damp[idx] > 1e9)
        failed[idx[give_up]] = True
        active[idx[give_up]] = False
        active[idx[new_ratio <= 1.0]] = False
    ok = (ratio <= 1.0) & ~failed & np.all(np.isfinite(pts), axis=1)
    return pts, ok


def _equation_scales(desc: Implicit, radius: float,
                     rng: np.random.Generator) -> np.ndarray:
    """Typical |equation| magnitude at the band radius, per equation."""
    if not desc.equations:
        return np.empty(0)
    probes = rng.standard_normal((64, desc.n))
    probes *= radius / np.linalg.norm(probes, axis=1)[:, None]
    vals = np.abs(_eval_equations(desc, probes))
    scale = np.median(vals, axis=0)
    return np.maximum(scale, 1e-280)


def project_to_implicit(desc: Implicit, start, tol: float,
                        max_iter: int = 80) -> np.ndarray:
    """Project one point onto the zero set of an implicit description."""
    start = np.asarray(start, dtype=float).reshape(1, desc.n)
    tols = np.full(max(len(desc.equations), 1), tol)
    cap = max(float(np.linalg.norm(start)), 1.0)
    pts, ok = _gn_project_batch(desc, start, tols, cap, max_iter)
    if not ok[0]:
        raise GdlabError("projection did not converge within max_iter")
    return pts[0]


# ---------------------------------------------------------------------------
# per-band sampling strategies

def _annulus_seeds(count: int, n: int, radius: float,
                   rng: np.random.Generator) -> np.ndarray:
    dirs = rng.standard_normal((count, n))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    low, high = (radius / 2.0) ** n, radius ** n
    radii = (low + (high - low) * rng.random(count)) ** (1.0 / n)
    return dirs * radii[:, None]


def _in_band(pts: np.ndarray, radius: float) -> np.ndarray:
    norms = np.linalg.norm(pts, axis=1)
    return (norms > radius / 2.0) & (norms <= radius)


def _sign_mask(desc: Implicit, pts: np.ndarray) -> np.ndarray:
    env = {f"x{i + 1}": pts[:, i] for i in range(desc.n)}
    count = pts.shape[0]
    ok = np.ones(count, dtype=bool)
    for cond in desc.sign_conditions:
        vals = np.broadcast_to(
            np.asarray(cond.expr.evaluate(env), dtype=float), (count,))
        if cond.op == "gt":
            ok &= vals > 0
        elif cond.op == "lt":
            ok &= vals < 0
        elif cond.op == "ge":
            ok &= vals >= 0
        else:
            ok &= vals <= 0
    return ok


def _implicit_branch_band(desc: Implicit, radius: float, quota: int,
                          rng: np.random.Generator) -> np.ndarray:
    kept = []
    got = 0
    budget = RETRY_FACTOR * quota
    drawn = 0
    tols = _CONVERGE_TOL * _equation_scales(desc, radius, rng)
    batch = max(quota, 512)
    while got < quota and drawn < budget:
        size = min(batch, budget - drawn)
        drawn += size
        seeds = _annulus_seeds(size, desc.n, radius, rng)
        pts, ok = _gn_project_batch(desc, seeds, tols,
                                    step_cap=0.4 * radius, max_iter=80)
        if not ok.all():
            # Starts that stall under the Gauss-Newton model sit in the
            # basins of singular strata; retry them with the curvature
            # model, pinned to their own radius so the band is kept.
            hard = seeds[~ok]
            fixed, fixed_ok = _gn_project_batch(
                desc, hard, tols, step_cap=0.4 * radius, max_iter=120,
                curvature=True, retract_radii=np.linalg.norm(hard, axis=1))
            pts = np.vstack([pts[ok], fixed[fixed_ok]])
        else:
            pts = pts[ok]
        pts = pts[_in_band(pts, radius)]
        if pts.shape[0]:
            pts = pts[_sign_mask(desc, pts)]
        if pts.shape[0]:
            kept.append(pts)
            got += pts.shape[0]
    if not kept:
        return np.empty((0, desc.n))
    return np.vstack(kept)


def _implicit_band(desc: Implicit, radius: float, quota: int,
                   rng: np.random.Generator) -> np.ndarray:
    branches = _implicit_branches(desc)
    if len(branches) == 1:
        return _implicit_branch_band(branches[0], radius, quota, rng)
    share = -(-quota // len(branches))
    parts = [_implicit_branch_band(b, radius, share, rng) for b in branches]
    got = sum(p.shape[0] for p in parts)
    if got < quota:
        deficit = quota - got
        for b in branches:
            extra = _implicit_branch_band(b, radius, deficit, rng)
            if extra.shape[0]:
                parts.append(extra)
    parts = [p for p in parts if p.shape[0]]
    if not parts:
        return np.empty((0, desc.n))
    return np.vstack(parts)


def _curve_band_intervals(desc: ParamCurve, radius: float) -> np.ndarray:
    """Parameter subintervals whose image lies in the band (closed form)."""
    a, b = float(desc.domain[0]), float(desc.domain[1])
    span = b - a
    grid_size = min(max(65537, int(span / (radius / 32.0))), 1 << 21)
    ts = np.linspace(a, b, grid_size)
    norms = np.linalg.norm(curve_points(desc.coords, ts), axis=1)

    def crossings(level):
        diff = norms - level
        sign_change = np.flatnonzero(diff[:-1] * diff[1:] < 0)
        roots = []
        for i in sign_change:
            lo, hi = ts[i], ts[i + 1]
            flo = diff[i]
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                fmid = (np.linalg.norm(
                    curve_points(desc.coords, np.array([mid]))[0]) - level)
                if flo * fmid <= 0:
                    hi = mid
                else:
                    lo, flo = mid, fmid
            roots.append(0.5 * (lo + hi))
        roots.extend(ts[np.flatnonzero(diff == 0)])
        return roots

    cuts = sorted(set([a, b] + crossings(radius / 2.0) + crossings(radius)))
    intervals = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi - lo <= 0:
            continue
        mid = 0.5 * (lo + hi)
        norm = np.linalg.norm(curve_points(desc.coords, np.array([mid]))[0])
        if radius / 2.0 < norm <= radius:
            intervals.append((lo, hi))
    return np.array(intervals) if intervals else np.empty((0, 2))


def _curve_band(desc: ParamCurve, radius: float, quota: int,
                rng: np.random.Generator) -> np.ndarray:
    intervals = _curve_band_intervals(desc, radius)
    if intervals.shape[0] == 0:
        return np.empty((0, desc.n))
    lengths = intervals[:, 1] - intervals[:, 0]
    weights = lengths / lengths.sum()
    kept = []
    got = 0
    drawn = 0
    budget = RETRY_FACTOR * quota
    while got < quota and drawn < budget:
        size = min(max(quota, 256), budget - drawn)
        drawn += size
        which = rng.choice(len(weights), size=size, p=weights)
        ts = intervals[which, 0] + lengths[which] * rng.random(size)
        pts = curve_points(desc.coords, ts)
        pts = pts[_in_band(pts, radius)]
        if pts.shape[0]:
            kept.append(pts)
            got += pts.shape[0]
    if not kept:
        return np.empty((0, desc.n))
    return np.vstack(kept)


def _spherecone_band(desc: SphereConeOverCurve, radius: float, quota: int,
                     rng: np.random.Generator) -> np.ndarray:
    a, b = float(desc.domain[0]), float(desc.domain[1])
    ts = a + (b - a) * rng.random(quota)
    units = curve_points(desc.coords, ts)
    radii = radius / 2.0 + (radius / 2.0) * rng.random(quota)
    return units * radii[:, None]


def _subspace_band(desc: LinearSubspace, radius: float, quota: int,
                   rng: np.random.Generator) -> np.ndarray:
    q = desc.orthonormal_basis()
    coeffs = rng.standard_normal((quota, q.shape[0]))
    vecs = coeffs @ q
    norms = np.linalg.norm(vecs, axis=1)
    good = norms > 1e-12
    vecs, norms = vecs[good], norms[good]
    radii = radius / 2.0 + (radius / 2.0) * rng.random(vecs.shape[0])
    return vecs * (radii / norms)[:, None]


def _union_band(desc: UnionSet, radius: float, quota: int,
                rng: np.random.Generator) -> np.ndarray:
    members = desc.members
    share = -(-quota // len(members))  # ceil
    parts = [_band_points(m, radius, share, rng) for m in members]
    got = sum(p.shape[0] for p in parts)
    if got < quota:
        # Some members may be thin or empty; let the rest fill the gap.
        deficit = quota - got
        for m in members:
            extra = _band_points(m, radius, deficit, rng)
            if extra.shape[0]:
                parts.append(extra)
    parts = [p for p in parts if p.shape[0]]
    if not parts:
        return np.empty((0, desc.ambient_dim))
    return np.vstack(parts)


def _contains_origin(desc: SetDescription) -> bool:
    from .setdesc import membership_mask
    try:
        return bool(membership_mask(
            desc, np.zeros((1, desc.ambient_dim)), 1e-12)[0])
    except ValidationError:
        # Parametric curves: test the closed-form distance at the origin.
        return False


def _product_band(desc: Product, radius: float, quota: int,
                  rng: np.random.Generator) -> np.ndarray:
    nl = desc.left.ambient_dim
    nr = desc.right.ambient_dim
    parts = []

    # Degenerate arms {0} x B and A x {0} when the factor contains 0.
    arm_quota = max(quota // 20, 1)
    if _contains_origin(desc.left):
        right = _band_points(desc.right, radius, arm_quota, rng)
        if right.shape[0]:
            parts.append(np.hstack([np.zeros((right.shape[0], nl)), right]))
    if _contains_origin(desc.right):
        left = _band_points(desc.left, radius, arm_quota, rng)
        if left.shape[0]:
            parts.append(np.hstack([left, np.zeros((left.shape[0], nr))]))

    # Generic points: split the norm between factors at binned mixing
    # angles; factor norms in (s/2, s] keep the pair inside the band.
    bins = 16
    angles = (np.arange(bins) + 0.5) * (math.pi / 2.0) / bins
    share = -(-quota // bins)
    for phi in angles:
        r_left = radius * math.cos(phi)
        r_right = radius * math.sin(phi)
        left = _band_points(desc.left, r_left, share, rng)
        right = _band_points(desc.right, r_right, share, rng)
        take = min(left.shape[0], right.shape[0])
        if take:
            pair = np.hstack([left[:take], right[:take]])
            pair = pair[_in_band(pair, radius)]
            if pair.shape[0]:
                parts.append(pair)
    if not parts:
        return np.empty((0, desc.ambient_dim))
    return np.vstack(parts)


def _band_points(desc: SetDescription, radius: float, quota: int,
                 rng: np.random.Generator) -> np.ndarray:
    if isinstance(desc, Catalog):
        return _band_points(resolve(desc), radius, quota, rng)
    if isinstance(desc, Point0):
        return np.empty((0, desc.n))
    if isinstance(desc, Implicit):
        return _implicit_band(desc, radius, quota, rng)
    if isinstance(desc, ParamCurve):
        return _curve_band(desc, radius, quota, rng)
    if isinstance(desc, SphereConeOverCurve):
        return _spherecone_band(desc, radius, quota, rng)
    if isinstance(desc, LinearSubspace):
        return _subspace_band(desc, radius, quota, rng)
    if isinstance(desc, UnionSet):
        return _union_band(desc, radius, quota, rng)
    if isinstance(desc, Product):
        return _product_band(desc, radius, quota, rng)
    raise ValidationError(f"cannot sample {type(desc).__name__}")


def _truncate_sorted(pts: np.ndarray, quota: int) -> np.ndarray:
    """Canonicalize a band: lexicographic sort, then even thinning."""
    if pts.shape[0] == 0:
        return pts
    order = np.lexsort(pts.T[::-1])
    pts = pts[order]
    if pts.shape[0] > quota:
        pick = np.unique(np.round(
            np.linspace(0, pts.shape[0] - 1, quota)).astype(int))
        pts = pts[pick]
    return pts


def sample_multiscale(desc: SetDescription, sched: ScaleSchedule,
                      seed: int) -> PointCloud:
    """Sample every band of the schedule; deterministic in (desc, sched, seed)."""
    resolved = resolve(desc)
    n = resolved.ambient_dim
    quota = sched.quota(n)
    providers = _hint_providers(resolved)
    bands = []
    hint_bands = []
    branch_bands = []
    for j, radius in enumerate(sched.radii()):
        rng = np.random.default_rng(
            np.random.SeedSequence([int(seed), j, 0x5A11]))
        pts = _band_points(resolved, float(radius), quota, rng)
        if pts.shape[0] < max(1.0, STARVE_FRACTION * quota):
            raise StarvationError(j, float(radius), pts.shape[0], quota)
        pts = _truncate_sorted(pts, quota)
        bands.append((float(radius), pts))
        if providers:
            hrng = np.random.default_rng(
                np.random.SeedSequence([int(seed), j, 0x41D7]))
            hints, branches = _band_dim_hints(
                providers, pts, float(radius), n, hrng)
            hint_bands.append(hints)
            branch_bands.append(branches)
    return PointCloud(n, bands, seed, desc_hash(desc),
                      dim_hints=hint_bands if providers else None,
                      branch_ids=branch_bands if providers else None)


# ---------------------------------------------------------------------------
# cone resampling

_RESAMPLE_NB_FACTOR = 2.2   # tangent-shape neighborhood, in units of theta_net
_RESAMPLE_RANK_FRAC = 0.25  # rms spread below this fraction of the
                            # neighborhood radius does not count as a
                            # direction the represented set extends in


def _net_tangent_bases(net: DirectionSet):
    """Per-direction jitter bases spanning the net's local tangent shape.

    Resampling must not change the dimension of the represented set:
    an isolated net direction stands for a ray, a row of directions for
    a curve trace, a patch for a surface.  The returned list holds one
    (d_i, n) orthonormal basis per net direction, where d_i is the
    number of tangent components along which the neighborhood actually
    spreads; jitter is confined to that span.
    """
    dirs = net.dirs
    size = len(net)
    radius_chord = chord_of_angle(_RESAMPLE_NB_FACTOR * net.theta_net)
    tree = net.tree()
    groups = tree.query_ball_point(dirs, radius_chord)
    bases = []
    for i in range(size):
        idx = [j for j in groups[i] if j != i]
        if not idx:
            bases.append(np.empty((0, net.n)))
            continue
        a = dirs[i]
        tan = dirs[idx] - np.outer(dirs[idx] @ a, a)
        scale = math.sqrt(len(idx))
        _, svals, vt = np.linalg.svd(tan / scale, full_matrices=False)
        keep = svals >= _RESAMPLE_RANK_FRAC * radius_chord
        bases.append(vt[:int(np.count_nonzero(keep))])
    return bases


def resample_cone(cone: ConeRep, sched: ScaleSchedule,
                  seed: int) -> PointCloud:
    """Fill the schedule with points t*a, a jittered off the cone's net.

    Jitter stays inside the local tangent span of the net (see
    _net_tangent_bases), reaching up to theta_net/2 per component: it
    fills the gaps between net directions without thickening the cone
    transversally.  A saturated net stands for the whole sphere, so its
    bands are drawn uniformly instead of off the witness sample.
    """
    if cone.is_empty:
        raise EmptyConeError("cannot resample an empty cone")
    net = cone.base
    n = net.n
    quota = sched.quota(n)
    if net.saturated:
        bands = []
        for j, radius in enumerate(sched.radii()):
            rng = np.random.default_rng(
                np.random.SeedSequence([int(seed), j, 0xC0DE]))
            dirs = rng.standard_normal((quota, n))
            dirs /= np.linalg.norm(dirs, axis=1)[:, None]
            radii = radius / 2.0 + (radius / 2.0) * rng.random(quota)
            pts = dirs * radii[:, None]
            bands.append((float(radius), _truncate_sorted(pts, quota)))
        return PointCloud(n, bands, seed, f"cone-full-{n}")
    max_jitter = math.radians(net.theta_net / 2.0)
    bases = _net_tangent_bases(net)
    ranks = np.array([b.shape[0] for b in bases])
    max_rank = int(ranks.max()) if len(ranks) else 0
    stacked = np.zeros((len(bases), max_rank, n))
    for i, basis in enumerate(bases):
        stacked[i, :basis.shape[0]] = basis
    bands = []
    for j, radius in enumerate(sched.radii()):
        rng = np.random.default_rng(
            np.random.SeedSequence([int(seed), j, 0xC0DE]))
        pick = rng.integers(0, len(net), size=quota)
        dirs = net.dirs[pick]
        if max_rank:
            coeff = max_jitter * (2.0 * rng.random((quota, max_rank)) - 1.0)
            offsets = np.einsum("qc,qcn->qn", coeff, stacked[pick])
            jittered = dirs + offsets
            jittered /= np.linalg.norm(jittered, axis=1)[:, None]
        else:
            jittered = dirs
        radii = radius / 2.0 + (radius / 2.0) * rng.random(quota)
        pts = jittered * radii[:, None]
        bands.append((float(radius), _truncate_sorted(pts, quota)))
    return PointCloud(n, bands, seed, f"cone-{len(net)}-{net.theta_net:g}")


# ---------------------------------------------------------------------------
# persistence

_CLOUD_MAGIC = b"GDCL"
_CLOUD_VERSION = 1        # bands of points only
_CLOUD_VERSION_HINTS = 2  # bands carry dimension certificates + branch ids
_CLOUD_HEADER = struct.Struct("<4sIIIQ")
_BAND_HEADER = struct.Struct("<dQ")


def save_cloud(cloud: PointCloud, path: str):
    from .reportio import atomic_write_bytes
    with_hints = cloud.dim_hints is not None or cloud.branch_ids is not None
    version = _CLOUD_VERSION_HINTS if with_hints else _CLOUD_VERSION
    blob = [_CLOUD_HEADER.pack(_CLOUD_MAGIC, version, cloud.n,
                               cloud.band_count, cloud.seed)]
    for j, (radius, pts) in enumerate(cloud.bands):
        blob.append(_BAND_HEADER.pack(radius, pts.shape[0]))
        blob.append(np.ascontiguousarray(pts, dtype="<f8").tobytes())
        if with_hints:
            count = pts.shape[0]
            hints = (cloud.dim_hints[j] if cloud.dim_hints is not None
                     else np.full(count, -1, dtype=np.int8))
            branches = (cloud.branch_ids[j] if cloud.branch_ids is not None
                        else np.full(count, -1, dtype=np.int16))
            blob.append(hints.tobytes())
            blob.append(branches.astype("<i2").tobytes())
    atomic_write_bytes(path, b"".join(blob))


def load_cloud(path: str, desc_hash_value: str = "") -> PointCloud:
    try:
        with open(path, "rb") as handle:
            blob = handle.read()
    except OSError as exc:
        raise ReportIOError(f"cannot read {path}: {exc}") from exc
    if len(blob) < _CLOUD_HEADER.size:
        raise ReportIOError(f"{path}: truncated cloud file")
    magic, version, n, band_count, seed = _CLOUD_HEADER.unpack_from(blob)
    if magic != _CLOUD_MAGIC:
        raise ReportIOError(f"{path}: bad magic {magic!r}")
    if version not in (_CLOUD_VERSION, _CLOUD_VERSION_HINTS):
        raise ReportIOError(f"{path}: unsupported version {version}")
    with_hints = version == _CLOUD_VERSION_HINTS
    offset = _CLOUD_HEADER.size
    bands = []
    hint_bands = []
    branch_bands = []
    for _ in range(band_count):
        if offset + _BAND_HEADER.size > len(blob):
            raise ReportIOError(f"{path}: truncated band header")
        radius, count = _BAND_HEADER.unpack_from(blob, offset)
        offset += _BAND_HEADER.size
        need = count * n * 8
        if offset + need > len(blob):
            raise ReportIOError(f"{path}: truncated band data")
        pts = np.frombuffer(blob, dtype="<f8", count=count * n,
                            offset=offset).reshape(count, n)
        offset += need
        bands.append((radius, pts))
        if with_hints:
            if offset + count * 3 > len(blob):
                raise ReportIOError(f"{path}: truncated band hints")
            hint_bands.append(np.frombuffer(blob, dtype=np.int8, count=count,
                                            offset=offset))
            offset += count
            branch_bands.append(np.frombuffer(blob, dtype="<i2", count=count,
                                              offset=offset))
            offset += count * 2
    return PointCloud(n, bands, seed, desc_hash_value,
                      dim_hints=hint_bands if with_hints else None,
                      branch_ids=branch_bands if with_hints else None)


def export_cloud_csv(cloud: PointCloud, path: str):
    from .reportio import atomic_write_text
    lines = ["band," + ",".join(f"x{i + 1}" for i in range(cloud.n))]
    for j, (_, pts) in enumerate(cloud.bands):
        for row in pts:
            lines.append(f"{j}," + ",".join("%.17g" % val for val in row))
    atomic_write_text(path, "\n".join(lines) + "\n")
