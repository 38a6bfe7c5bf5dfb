"""Merge per-tile curb polylines into a global curb-instance map.

Curbs split at tile borders are relinked when their endpoints are close and
their end orientations agree, instance ids are renumbered from 1, and each
instance is resampled to a fixed interval.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputValidationError
from .geometry import CIMap, CurbPolyline


@dataclass(frozen=True)
class LinkParams:
    d_link: float = 0.5  # max endpoint gap, meters
    theta_link: float = np.deg2rad(20.0)  # max orientation difference
    tail_window: int = 5  # endpoint points used for the orientation fit

    def __post_init__(self):
        if self.d_link <= 0:
            raise InputValidationError("d_link must be positive")
        if not 0 < self.theta_link < np.pi / 2:
            raise InputValidationError("theta_link must be in (0, pi/2)")
        if self.tail_window < 2:
            raise InputValidationError("tail_window must be >= 2")


def _outgoing_direction(points: np.ndarray, at_end: bool, window: int,
                        radius: float = 0.5) -> np.ndarray:
    """Unit 2D direction of the least-squares line over the endpoint tail,
    oriented from the curb interior toward the endpoint.

    The tail is the trailing run of points within `radius` of the endpoint,
    but at least `window` points; raw (unresampled) polylines can order
    near-equidistant points noisily, so a pure point-count window is too
    short to estimate orientation reliably.
    """
    ordered = points if at_end else points[::-1]
    dist = np.linalg.norm(ordered[:, :2] - ordered[-1, :2], axis=1)
    within = np.flatnonzero(dist > radius)
    n = len(ordered) - (within[-1] + 1) if len(within) else len(ordered)
    tail = ordered[-max(n, min(window, len(ordered))):]
    xy = tail[:, :2]
    centered = xy - xy.mean(axis=0)
    # Principal axis of the tail points.
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    direction = vt[0]
    outward = xy[-1] - xy[0]
    if direction @ outward < 0:
        direction = -direction
    norm = np.linalg.norm(direction)
    return direction / norm if norm > 0 else np.array([1.0, 0.0])


def _adjacent(tile_a, tile_b) -> bool:
    if tile_a is None or tile_b is None:
        return True
    return max(abs(tile_a[0] - tile_b[0]), abs(tile_a[1] - tile_b[1])) <= 1


def _endpoint(points: np.ndarray, at_end: bool) -> np.ndarray:
    return points[-1] if at_end else points[0]


def merge_tiles(per_tile_curbs, params: LinkParams = LinkParams()) -> CIMap:
    """Link split curbs across adjacent tiles and renumber instances 1..N.

    per_tile_curbs: iterable of (tile_index, list of (M, 3) point arrays or
    CurbPolyline). Linking is greedy closest-pair-first; each endpoint is
    used at most once and links that would close a cycle are skipped.
    """
    pieces: list[np.ndarray] = []
    tiles: list = []
    for tile_index, polylines in per_tile_curbs:
        for poly in polylines:
            pts = poly.points if isinstance(poly, CurbPolyline) else np.asarray(poly, float)
            pieces.append(pts)
            tiles.append(tile_index)

    n = len(pieces)
    window = params.tail_window
    cos_limit = np.cos(params.theta_link)

    # Candidate links between endpoints of curbs from adjacent, distinct tiles.
    candidates = []
    for i in range(n):
        for j in range(i + 1, n):
            if tiles[i] == tiles[j] or not _adjacent(tiles[i], tiles[j]):
                continue
            for end_i in (False, True):
                for end_j in (False, True):
                    gap = np.linalg.norm(
                        _endpoint(pieces[i], end_i)[:2] - _endpoint(pieces[j], end_j)[:2]
                    )
                    if gap >= params.d_link:
                        continue
                    out_i = _outgoing_direction(pieces[i], end_i, window, params.d_link)
                    out_j = _outgoing_direction(pieces[j], end_j, window, params.d_link)
                    # Head-to-tail continuity: i leaves along out_i, j is
                    # entered against its own outgoing direction.
                    if out_i @ (-out_j) < cos_limit:
                        continue
                    candidates.append((gap, i, end_i, j, end_j))
    candidates.sort(key=lambda c: c[0])

    used: set[tuple[int, bool]] = set()
    component = list(range(n))

    def find(a: int) -> int:
        while component[a] != a:
            component[a] = component[component[a]]
            a = component[a]
        return a

    links: list[tuple[int, bool, int, bool]] = []
    for gap, i, end_i, j, end_j in candidates:
        if (i, end_i) in used or (j, end_j) in used:
            continue
        if find(i) == find(j):
            continue
        used.add((i, end_i))
        used.add((j, end_j))
        component[find(i)] = find(j)
        links.append((i, end_i, j, end_j))

    curbs = _assemble_chains(pieces, links, n)
    return CIMap(curbs=[CurbPolyline(k + 1, pts) for k, pts in enumerate(curbs)])


def _assemble_chains(pieces, links, n) -> list[np.ndarray]:
    """Concatenate linked pieces into chains, flipping as needed."""
    # neighbor[(piece, end)] = (other piece, other end)
    neighbor: dict[tuple[int, bool], tuple[int, bool]] = {}
    for i, end_i, j, end_j in links:
        neighbor[(i, end_i)] = (j, end_j)
        neighbor[(j, end_j)] = (i, end_i)

    degree = [sum(((i, False) in neighbor, (i, True) in neighbor)) for i in range(n)]
    visited = [False] * n
    chains: list[np.ndarray] = []
    for start in range(n):
        if visited[start] or degree[start] == 2:
            continue
        # Walk from a free end of the chain.
        visited[start] = True
        start_end = not ((start, False) in neighbor)  # enter at the unlinked side
        parts = [pieces[start] if start_end else pieces[start][::-1]]
        cursor = (start, start_end)
        while cursor in neighbor:
            nxt, nxt_end = neighbor[cursor]
            visited[nxt] = True
            pts = pieces[nxt][::-1] if nxt_end else pieces[nxt]
            parts.append(pts)
            cursor = (nxt, not nxt_end)
        chain = np.concatenate(parts)
        keep = np.ones(len(chain), dtype=bool)
        keep[1:] = np.linalg.norm(np.diff(chain, axis=0), axis=1) > 0
        chains.append(chain[keep])
    return chains


def resample_polyline(curb: CurbPolyline, interval: float = 0.1) -> CurbPolyline:
    """Resample a polyline at equal 2D arc-length steps, retaining vertices.

    Samples are placed at every multiple of `interval` of cumulative 2D arc
    length; original vertices are kept as anchors so the output traces the
    input exactly (arc length is preserved). Endpoints are preserved exactly.
    """
    if interval <= 0:
        raise InputValidationError("interval must be positive")
    pts = curb.points
    seg = np.linalg.norm(np.diff(pts[:, :2], axis=0), axis=1)
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    total = cum[-1]
    if total == 0:
        return curb
    n_steps = int(np.floor(total / interval + 1e-9))
    stations = np.unique(np.concatenate((np.arange(n_steps + 1) * interval, cum)))
    stations = stations[(stations >= 0) & (stations <= total)]
    # Collapse stations that coincide within float noise.
    keep = np.ones(len(stations), dtype=bool)
    keep[1:] = np.diff(stations) > 1e-12
    stations = stations[keep]
    out = np.column_stack([np.interp(stations, cum, pts[:, k]) for k in range(3)])
    out[0] = pts[0]
    out[-1] = pts[-1]
    keep = np.ones(len(out), dtype=bool)
    keep[1:] = np.linalg.norm(np.diff(out, axis=0), axis=1) > 0
    return CurbPolyline(curb.instance_id, out[keep], curb.source_tile)


def resample_ci_map(ci: CIMap, interval: float = 0.1) -> CIMap:
    return CIMap(
        curbs=[resample_polyline(c, interval) for c in ci.curbs],
        metadata=dict(ci.metadata),
    )
