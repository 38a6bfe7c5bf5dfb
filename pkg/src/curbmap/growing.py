"""Dual-range region growing that clusters curb candidate points into ordered instances.

Seeds are picked at random from the un-queried set; each seed splits its
neighborhood into two arms by azimuth and grows each arm step by step. A
growth step first searches a short radius with a wide angular gate; if that
finds nothing (e.g. a parked car interrupted the curb), a longer radius with
a narrow gate takes over. Geometry is 2D throughout; z rides along.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import InputValidationError


@dataclass(frozen=True)
class GrowParams:
    r1: float = 2.6  # first growing range, meters
    alpha1: float = np.deg2rad(30.0)  # first valid half-angle
    range2_factor: float = 3.0  # second range = range2_factor * r1
    alpha2: float = np.deg2rad(10.0)  # second valid half-angle
    psi: int = 6  # minimum seed-neighborhood size
    capture_radius: float = 0.4  # sweep radius around the iteration point

    def __post_init__(self):
        if self.r1 <= 0:
            raise InputValidationError("r1 must be positive")
        if not 0 < self.alpha2 <= self.alpha1 < np.pi:
            raise InputValidationError("need 0 < alpha2 <= alpha1 < pi")
        if self.range2_factor < 1:
            raise InputValidationError("range2_factor must be >= 1")
        if self.psi < 1:
            raise InputValidationError("psi must be >= 1")
        if self.capture_radius < 0:
            raise InputValidationError("capture_radius must be non-negative")

    @property
    def r2(self) -> float:
        return self.range2_factor * self.r1


@dataclass
class GrowState:
    """Shared growing state: candidate points, un-queried flags, spatial index."""

    points: np.ndarray  # (N, 3)
    todo: np.ndarray  # (N,) bool
    kdtree: cKDTree  # built over (x, y) once; consumption is tracked via todo
    results: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def build(cls, points: np.ndarray) -> "GrowState":
        points = np.asarray(points, dtype=np.float64)
        if not np.all(np.isfinite(points)):
            raise InputValidationError("candidate points contain NaN or Inf")
        return cls(points, np.ones(len(points), dtype=bool), cKDTree(points[:, :2]))


def _angles_within(vectors: np.ndarray, direction: np.ndarray, half_angle: float) -> np.ndarray:
    """Boolean mask of 2D vectors whose bearing is within half_angle of direction."""
    norms = np.linalg.norm(vectors, axis=1)
    cos = vectors @ direction / np.maximum(norms, 1e-300)
    return cos >= np.cos(half_angle) - 1e-12


def curbgrow(p: np.ndarray, d: np.ndarray, state: GrowState, params: GrowParams
             ) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    """One growth step from point p along unit direction d (both 2D work, 3D carry).

    Returns (consumed indices sorted by distance from p, next p, next d, flag).
    Stage 1: radius r1, gate alpha1; points within capture_radius of p are
    swept up regardless of bearing so slightly lateral points are not left
    behind as stragglers. Stage 2 (only if stage 1 is empty): radius
    range2_factor*r1, gate alpha2. The next iteration point is the farthest
    consumed point and the direction is re-aimed at it.
    """
    p2 = np.asarray(p, dtype=np.float64)[:2]
    d2 = np.asarray(d, dtype=np.float64)[:2]
    swept: list[np.ndarray] = []
    for stage, (radius, half_angle) in enumerate(
        ((params.r1, params.alpha1), (params.r2, params.alpha2))
    ):
        idx = np.asarray(state.kdtree.query_ball_point(p2, radius), dtype=np.int64)
        if len(idx):
            idx = idx[state.todo[idx]]
        if len(idx) == 0:
            continue
        offsets = state.points[idx, :2] - p2
        dist = np.linalg.norm(offsets, axis=1)
        gated = (dist > 0) & _angles_within(offsets, d2, half_angle)
        if stage == 0 and params.capture_radius > 0:
            capture = (dist > 0) & (dist <= params.capture_radius) & ~gated
            if capture.any():
                cap_idx = idx[capture]
                cap_order = np.argsort(dist[capture], kind="stable")
                cap_idx = cap_idx[cap_order]
                state.todo[cap_idx] = False
                swept.append(cap_idx)
        idx, dist = idx[gated], dist[gated]
        if len(idx) == 0:
            continue
        order = np.argsort(dist, kind="stable")
        idx = idx[order]
        state.todo[idx] = False
        consumed = np.concatenate(swept + [idx]) if swept else idx
        next_p = state.points[idx[-1]]
        step = next_p[:2] - p2
        next_d = step / np.linalg.norm(step)
        return consumed, next_p, next_d, True
    leftover = np.concatenate(swept) if swept else np.empty(0, dtype=np.int64)
    return leftover, np.asarray(p, dtype=np.float64), d2, False


def split_by_azimuth(neighbors: np.ndarray, p_init: np.ndarray
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Split neighbor indices-free points into two arms around p_init.

    The reference azimuth is that of the farthest neighbor; arm 1 collects
    neighbors within 90 degrees of it, arm 2 the rest. Returns index masks.
    """
    offsets = np.asarray(neighbors, dtype=np.float64)[:, :2] - np.asarray(p_init)[:2]
    dist = np.linalg.norm(offsets, axis=1)
    if len(offsets) == 0:
        raise InputValidationError("neighbors must be non-empty")
    ref = offsets[np.argmax(dist)]
    ref = ref / max(np.linalg.norm(ref), 1e-300)
    arm1 = _angles_within(offsets, ref, np.pi / 2)
    return arm1, ~arm1


def _grow_arm(seed_idx: np.ndarray, p_init2: np.ndarray, state: GrowState,
              params: GrowParams) -> list[int]:
    """Sort an arm's seed points by distance, then extend it until growth stops."""
    if len(seed_idx) == 0:
        return []
    dist = np.linalg.norm(state.points[seed_idx, :2] - p_init2, axis=1)
    order = np.argsort(dist, kind="stable")
    result = list(seed_idx[order])
    p = state.points[result[-1]]
    step = p[:2] - p_init2
    d = step / np.linalg.norm(step)
    flag = True
    while flag:
        new_idx, p, d, flag = curbgrow(p, d, state, params)
        result.extend(new_idx)
    return result


def _bridge_instances(polylines: list[np.ndarray], params: GrowParams) -> list[np.ndarray]:
    """Join instances whose facing endpoints satisfy the second-growth rule.

    Random seeding can start a new instance on the far side of an occlusion
    gap before the near side grows across it; once consumed, those points can
    never be bridged by growing alone. This pass applies the same gate the
    second growth uses (gap <= range2_factor * r1, directions aligned within
    alpha2) to instance endpoints, so the result no longer depends on seed
    order.
    """
    from .postprocess import _assemble_chains, _outgoing_direction

    n = len(polylines)
    cos_limit = np.cos(params.alpha2)
    candidates = []
    for i in range(n):
        for j in range(i + 1, n):
            for end_i in (False, True):
                for end_j in (False, True):
                    a = polylines[i][-1 if end_i else 0][:2]
                    b = polylines[j][-1 if end_j else 0][:2]
                    gap_vec = b - a
                    gap = np.linalg.norm(gap_vec)
                    if gap == 0 or gap > params.r2:
                        continue
                    gap_dir = gap_vec / gap
                    out_i = _outgoing_direction(polylines[i], end_i, 5, params.r1 / 2)
                    out_j = _outgoing_direction(polylines[j], end_j, 5, params.r1 / 2)
                    if out_i @ gap_dir < cos_limit or (-out_j) @ gap_dir < cos_limit:
                        continue
                    candidates.append((gap, i, end_i, j, end_j))
    if not candidates:
        return polylines
    candidates.sort(key=lambda c: c[0])
    used: set[tuple[int, bool]] = set()
    component = list(range(n))

    def find(a: int) -> int:
        while component[a] != a:
            component[a] = component[component[a]]
            a = component[a]
        return a

    links = []
    for gap, i, end_i, j, end_j in candidates:
        if (i, end_i) in used or (j, end_j) in used or find(i) == find(j):
            continue
        used.add((i, end_i))
        used.add((j, end_j))
        component[find(i)] = find(j)
        links.append((i, end_i, j, end_j))
    return _assemble_chains(polylines, links, n)


def cluster(candidates: np.ndarray, params: GrowParams = GrowParams(),
            seed: int = 0) -> list[np.ndarray]:
    """Cluster and order curb candidate points into polyline point arrays.

    Repeatedly seeds at a random un-queried point, queries its r1
    neighborhood, and either discards it (fewer than psi neighbors) or grows
    two arms outward. The returned arrays are ordered end-to-end:
    reversed arm 1, the seed, then arm 2. A final pass bridges instances
    that the second growth would have joined under a different seed order.
    """
    candidates = np.asarray(candidates, dtype=np.float64)
    if len(candidates) == 0:
        return []
    state = GrowState.build(candidates)
    rng = np.random.default_rng(seed)
    polylines: list[np.ndarray] = []

    while True:
        remaining = np.flatnonzero(state.todo)
        if len(remaining) == 0:
            break
        init = int(rng.choice(remaining))
        p_init = state.points[init]
        nei = np.asarray(state.kdtree.query_ball_point(p_init[:2], params.r1), dtype=np.int64)
        nei = nei[state.todo[nei] & (nei != init)]
        # Remove both the seed and its neighborhood from the un-queried set;
        # a sub-psi neighborhood is discarded as isolated noise.
        state.todo[init] = False
        state.todo[nei] = False
        if len(nei) < params.psi:
            continue
        arm1_mask, arm2_mask = split_by_azimuth(state.points[nei], p_init)
        arm1 = _grow_arm(nei[arm1_mask], p_init[:2], state, params)
        arm2 = _grow_arm(nei[arm2_mask], p_init[:2], state, params)
        order = arm1[::-1] + [init] + arm2
        poly = state.points[order]
        # Drop exact duplicates that would break the polyline invariant.
        keep = np.ones(len(poly), dtype=bool)
        keep[1:] = np.linalg.norm(np.diff(poly, axis=0), axis=1) > 0
        poly = poly[keep]
        if len(poly) >= 2:
            polylines.append(poly)
    polylines = _bridge_instances(polylines, params)
    state.results = polylines
    return polylines
