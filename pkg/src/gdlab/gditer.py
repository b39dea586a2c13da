"""Bundle-operator iteration: chains, stabilization degree, bound checks.

Each step resamples the previous half-cone as a fresh multi-scale cloud
and recomputes the limit bundle at the origin, so degree m is computed
from the degree m-1 cone as a set, not from the original samples.  A
degree counts as the stabilization degree only when the next two
consecutive Hausdorff gaps both stay below theta_eq; a single small gap
can be a net artifact.  When stabilization fires at an intermediate
degree even though the first cone is not covered by finitely many
hyperplanes, the chain can only have stopped on the full sphere, so a
declaration without near-full sphere coverage is suppressed as a
resolution artifact.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .conealg import (DimParams, cone_dimension, decompose_by_local_dimension,
                      finite_plane_union_test)
from .dircone import DirParams, gd_origin
from .errors import ValidationError
from .sampler import PointCloud, ScaleSchedule, sample_multiscale, resample_cone
from .setdesc import SetDescription, UnionSet
from .sphere import (ConeRep, DirectionSet, covers, empty_net, hausdorff_angle,
                     probe_grid, coverage_fraction, union_dirsets)

__all__ = [
    "ChainStep", "StabilizationReport", "apply_gd",
    "iterate_to_stabilization", "check_monotone_chain",
    "union_additivity_check",
]

_FULL_SPHERE_COVER = 0.99   # coverage that counts as "is the full sphere"
_SPHERE_PROBE_DEG = 6.0     # probe resolution for the full-sphere check
_NOT_DETECTED = "not detected within max_degree"


@dataclass
class ChainStep:
    """One degree of the chain with its comparison to the previous cone."""

    degree: int
    net_size: int
    cone_dim: int
    hausdorff_gap_to_prev: float   # degrees; inf for the first step
    covered_prev: bool
    net: DirectionSet = field(repr=False, compare=False, default=None)

    def summary(self) -> dict:
        return {
            "degree": self.degree,
            "net_size": self.net_size,
            "cone_dim": self.cone_dim,
            "hausdorff_gap_to_prev": self.hausdorff_gap_to_prev,
            "covered_prev": self.covered_prev,
        }


@dataclass
class StabilizationReport:
    n: int
    chain: list
    stabilized_at: object          # int, or _NOT_DETECTED
    theorem_bound: int
    refined_bound: int
    bound_satisfied: bool
    m0: int
    theta_eq: float
    params: dict
    seed: int
    diagnostics: list
    timings_ms: dict

    @property
    def detected(self) -> bool:
        return isinstance(self.stabilized_at, int)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "chain": [step.summary() for step in self.chain],
            "stabilized_at": self.stabilized_at,
            "theorem_bound": self.theorem_bound,
            "refined_bound": self.refined_bound,
            "bound_satisfied": self.bound_satisfied,
            "m0": self.m0,
            "theta_eq": self.theta_eq,
            "params": self.params,
            "seed": self.seed,
            "diagnostics": list(self.diagnostics),
        }


def apply_gd(obj, params: DirParams, sched: ScaleSchedule,
             seed: int) -> ConeRep:
    """One application of the bundle operator to a germ or a half-cone.

    Descriptions are sampled from scratch; cones are resampled from
    their nets.  The empty cone maps to the empty cone (removing the
    origin from the point germ leaves nothing to take limits through),
    and a saturated cone maps to itself: every direction is a limit of
    secants inside the full half-cone, so its bundle is again the whole
    sphere and resampling would only rediscover that at quadratic cost.
    """
    if isinstance(obj, ConeRep):
        if obj.is_empty:
            return ConeRep(empty_net(obj.n, obj.base.theta_net))
        if obj.base.saturated:
            return ConeRep(obj.base)
        cloud = resample_cone(obj, sched, seed)
    elif isinstance(obj, SetDescription):
        cloud = sample_multiscale(obj, sched, seed)
    elif isinstance(obj, PointCloud):
        cloud = obj
    else:
        raise ValidationError(
            f"apply_gd takes a description or a cone, got {type(obj).__name__}")
    return ConeRep(gd_origin(cloud, params))


def _full_sphere_fraction(net: DirectionSet, theta_lim: float,
                          seed: int) -> float:
    probes = probe_grid(net.n, _SPHERE_PROBE_DEG, seed=seed)
    return coverage_fraction(net, probes, max(theta_lim, _SPHERE_PROBE_DEG))


def _hyperplane_cover(net: DirectionSet, n: int, seed: int) -> bool:
    if n < 2:
        return True
    return finite_plane_union_test(net, n - 1, seed=seed).contained


def iterate_to_stabilization(desc: SetDescription, max_degree: int,
                             params: DirParams, sched: ScaleSchedule,
                             dim_params: DimParams, seed: int,
                             ) -> StabilizationReport:
    """Iterate the bundle operator and detect the stabilization degree.

    Declares stabilized_at = the first degree m whose next two gaps are
    both <= theta_eq = 2 * theta_lim.  An intermediate-degree
    declaration (1 < m < n-1) additionally requires either C_1 inside
    finitely many hyperplanes or C_m nearly covering the sphere;
    otherwise it is suppressed and iteration continues.
    """
    t_start = time.monotonic()
    n = desc.ambient_dim
    if max_degree < 1:
        raise ValidationError("max_degree must be >= 1")
    if max_degree < n - 1:
        warnings.warn(
            f"max_degree {max_degree} below the guaranteed degree {n - 1}",
            stacklevel=2)
    theta_lim = params.lim_theta(n)
    theta_eq = 2.0 * theta_lim
    diagnostics = []
    timings = {}

    t0 = time.monotonic()
    cloud = sample_multiscale(desc, sched, seed)
    timings["sample_ms"] = 1000.0 * (time.monotonic() - t0)

    t0 = time.monotonic()
    try:
        classes, m0 = decompose_by_local_dimension(cloud, dim_params)
    except Exception as exc:  # decomposition is advisory, never fatal
        diagnostics.append(f"decompose failed: {exc}")
        classes, m0 = {}, 0
    timings["decompose_ms"] = 1000.0 * (time.monotonic() - t0)

    theorem_bound = max(n - 1, 1)
    refined_bound = max(n - (m0 - 1), 1) if m0 >= 2 else theorem_bound

    chain = []
    gaps = []
    cone = apply_gd(cloud, params, sched, seed)
    chain.append(ChainStep(1, len(cone.base),
                           cone_dimension(cone.base, dim_params),
                           float("inf"), True, cone.base))
    plane_cover = None
    stabilized_at = None
    target = min(max_degree, max(refined_bound, 1))
    degree = 1
    while degree < target + 2 and degree < max_degree + 1:
        degree += 1
        step_seed = seed + degree
        nxt = apply_gd(cone, params, sched, step_seed)
        gap = hausdorff_angle(nxt.base, cone.base)
        cov = covers(nxt.base, cone.base, theta_lim)
        gaps.append(gap)
        chain.append(ChainStep(degree, len(nxt.base),
                               cone_dimension(nxt.base, dim_params),
                               gap, cov, nxt.base))
        if not cov:
            diagnostics.append(
                f"chain not monotone at degree {degree}: previous cone "
                f"not covered within {theta_lim:g} deg")
        cone = nxt
        if stabilized_at is None and len(gaps) >= 2:
            cand = degree - 2
            if cand >= 1 and gaps[-2] <= theta_eq and gaps[-1] <= theta_eq:
                if 1 < cand < n - 1:
                    if plane_cover is None:
                        plane_cover = _hyperplane_cover(chain[0].net, n, seed)
                    frac = _full_sphere_fraction(chain[cand - 1].net,
                                                 theta_lim, seed)
                    if not plane_cover and frac < _FULL_SPHERE_COVER:
                        diagnostics.append(
                            f"suppressed stabilization at {cand}: C_1 not in "
                            f"finitely many hyperplanes and C_{cand} covers "
                            f"only {frac:.3f} of the sphere")
                        continue
                stabilized_at = cand
                break

    bound_ok = (stabilized_at is not None
                and stabilized_at <= theorem_bound
                and stabilized_at <= refined_bound)
    timings["iterate_ms"] = 1000.0 * (time.monotonic() - t_start)
    return StabilizationReport(
        n=n,
        chain=chain,
        stabilized_at=(stabilized_at if stabilized_at is not None
                       else _NOT_DETECTED),
        theorem_bound=theorem_bound,
        refined_bound=refined_bound,
        bound_satisfied=bound_ok,
        m0=m0,
        theta_eq=theta_eq,
        params={
            "rho": params.rho,
            "theta_net": params.net_theta(n),
            "theta_lim": theta_lim,
            "limit_bands": params.limit_bands,
            "r0": sched.r0,
            "band_count": sched.band_count,
            "per_band": sched.quota(n),
            "max_degree": max_degree,
        },
        seed=seed,
        diagnostics=diagnostics,
        timings_ms=timings,
    )


def check_monotone_chain(report: StabilizationReport,
                         theta: float = 0.0) -> bool:
    """True iff each cone covers its predecessor within theta degrees."""
    chain = report.chain
    if len(chain) < 2:
        raise ValidationError("monotone check needs a chain of length >= 2")
    tol = theta if theta > 0 else report.theta_eq / 2.0
    for prev, step in zip(chain, chain[1:]):
        if prev.net is None or step.net is None:
            return all(s.covered_prev for s in chain[1:])
        if not covers(step.net, prev.net, tol):
            return False
    return True


def union_additivity_check(desc_a: SetDescription, desc_b: SetDescription,
                           q: int, params: DirParams, sched: ScaleSchedule,
                           seed: int) -> dict:
    """Compare GD^q of a union against the union of the GD^q cones.

    The operator distributes over finite unions, so the two results
    must agree up to accumulated net blur: one dilation per side per
    application.
    """
    if desc_a.ambient_dim != desc_b.ambient_dim:
        raise ValidationError("union additivity needs equal ambient dims")
    if q < 1:
        raise ValidationError("q must be >= 1")
    n = desc_a.ambient_dim
    theta_lim = params.lim_theta(n)

    def power(obj):
        cone = apply_gd(obj, params, sched, seed)
        for step in range(1, q):
            cone = apply_gd(cone, params, sched, seed + step)
        return cone

    joint = power(UnionSet((desc_a, desc_b)))
    separate = union_dirsets(power(desc_a).base, power(desc_b).base)
    gap = hausdorff_angle(joint.base, separate)
    tol = 2.0 * theta_lim * q
    return {
        "n": n,
        "q": q,
        "gap": float(gap),
        "tolerance": tol,
        "pass": bool(gap <= tol),
        "joint_size": len(joint.base),
        "separate_size": len(separate),
    }
