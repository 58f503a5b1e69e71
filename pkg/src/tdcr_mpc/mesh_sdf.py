"""Inside-positive signed distance queries against a watertight triangle mesh.

The sign comes from angle-weighted pseudonormals at the closest feature
(face, edge or vertex), which stay well defined where plain face normals are
ambiguous. Distances are exact point-to-mesh distances; queries run against a
median-split AABB tree, with a fully vectorized all-triangles path for small
meshes and for the test oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MeshInvalid

# feature codes produced by the closest-point kernel
FACE, VERT_A, VERT_B, VERT_C, EDGE_AB, EDGE_BC, EDGE_CA = range(7)

_LEAF_SIZE = 4
_BRUTE_MAX_TRIS = 4096          # below this, batched queries skip the tree
_GRAD_FALLBACK_DIST = 1e-9      # |d| under which the gradient uses the pseudonormal


@dataclass
class SdfResult:
    distance: float             # mm, positive inside the mesh
    closest_point: np.ndarray
    gradient: np.ndarray        # unit direction of increasing distance


@dataclass
class _Bvh:
    bb_min: np.ndarray
    bb_max: np.ndarray
    left: np.ndarray            # child index or -1 for leaves
    right: np.ndarray
    start: np.ndarray           # leaf triangle range into `order`
    count: np.ndarray
    order: np.ndarray


class SafeZone:
    """Immutable watertight mesh with precomputed pseudonormals and an AABB tree."""

    def __init__(self, vertices, triangles):
        vertices = np.ascontiguousarray(vertices, dtype=float)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        _validate_mesh(vertices, triangles)
        triangles = _orient_outward(vertices, triangles)
        self.vertices = vertices
        self.triangles = triangles
        self._precompute()
        self.bvh = _build_bvh(self._tri_bb_min, self._tri_bb_max)

    # -- precomputation -------------------------------------------------

    def _precompute(self):
        v, t = self.vertices, self.triangles
        a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
        self._a = a
        self._ab = b - a
        self._ac = c - a
        fn = np.cross(self._ab, self._ac)
        area2 = np.linalg.norm(fn, axis=1)
        if np.any(area2 < 1e-12):
            bad = np.where(area2 < 1e-12)[0]
            raise MeshInvalid(f"degenerate triangles: {bad.tolist()}")
        self.face_normals = fn / area2[:, None]

        # angle-weighted vertex pseudonormals
        vpn = np.zeros_like(v)
        edges = [b - a, c - b, a - c]
        for corner in range(3):
            e_out = edges[corner]
            e_in = -edges[corner - 1]
            cosang = np.einsum("ij,ij->i", e_out, e_in) / (
                np.linalg.norm(e_out, axis=1) * np.linalg.norm(e_in, axis=1)
            )
            ang = np.arccos(np.clip(cosang, -1.0, 1.0))
            np.add.at(vpn, t[:, corner], ang[:, None] * self.face_normals)
        self.vertex_pseudonormals = vpn / np.linalg.norm(vpn, axis=1)[:, None]

        # edge pseudonormals: normalized sum of the two adjacent face normals
        edge_map: dict[tuple[int, int], np.ndarray] = {}
        for ti, tri in enumerate(t):
            for k in range(3):
                key = tuple(sorted((tri[k], tri[(k + 1) % 3])))
                edge_map[key] = edge_map.get(key, 0.0) + self.face_normals[ti]
        epn = np.empty((len(t), 3, 3))
        for ti, tri in enumerate(t):
            for k, (i0, i1) in enumerate(((0, 1), (1, 2), (2, 0))):
                n = edge_map[tuple(sorted((tri[i0], tri[i1])))]
                epn[ti, k] = n / np.linalg.norm(n)
        self.edge_pseudonormals = epn
        self.corner_pseudonormals = self.vertex_pseudonormals[t]   # (T,3,3)

        pts = v[t]                                                  # (T,3,3)
        self._tri_bb_min = pts.min(axis=1)
        self._tri_bb_max = pts.max(axis=1)

        # scalar products reused by the distance-only kernel
        self._ab2 = np.einsum("ij,ij->i", self._ab, self._ab)
        self._ac2 = np.einsum("ij,ij->i", self._ac, self._ac)
        self._abac = np.einsum("ij,ij->i", self._ab, self._ac)

    # -- feature normal lookup -------------------------------------------

    def feature_normal(self, tri_idx, feature):
        """Pseudonormal of the feature closest to the query (vectorized)."""
        tri_idx = np.asarray(tri_idx)
        feature = np.asarray(feature)
        out = self.face_normals[tri_idx].copy()
        for code, k in ((VERT_A, 0), (VERT_B, 1), (VERT_C, 2)):
            m = feature == code
            out[m] = self.corner_pseudonormals[tri_idx[m], k]
        for code, k in ((EDGE_AB, 0), (EDGE_BC, 1), (EDGE_CA, 2)):
            m = feature == code
            out[m] = self.edge_pseudonormals[tri_idx[m], k]
        return out


def _validate_mesh(vertices, triangles):
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise MeshInvalid("vertices must be (V, 3)")
    if triangles.ndim != 2 or triangles.shape[1] != 3:
        raise MeshInvalid("triangles must be (T, 3)")
    if triangles.size == 0:
        raise MeshInvalid("empty mesh")
    if triangles.min() < 0 or triangles.max() >= len(vertices):
        raise MeshInvalid("triangle index out of range")
    if np.any(
        (triangles[:, 0] == triangles[:, 1])
        | (triangles[:, 1] == triangles[:, 2])
        | (triangles[:, 2] == triangles[:, 0])
    ):
        raise MeshInvalid("triangle with repeated vertex")

    # watertight + consistent winding: every directed edge appears exactly once
    # and its reverse exactly once
    directed = {}
    for tri in triangles:
        for k in range(3):
            e = (int(tri[k]), int(tri[(k + 1) % 3]))
            directed[e] = directed.get(e, 0) + 1
    bad = []
    for (i, j), cnt in directed.items():
        if cnt != 1 or directed.get((j, i), 0) != 1:
            bad.append((i, j))
    if bad:
        raise MeshInvalid(
            f"mesh is not watertight/consistently wound; {len(bad)} offending edges",
            edges=bad,
        )


def _orient_outward(vertices, triangles):
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    volume = np.sum(np.einsum("ij,ij->i", a, np.cross(b, c))) / 6.0
    if volume < 0:
        return triangles[:, [0, 2, 1]].copy()
    return triangles


# -- mesh file loading ----------------------------------------------------


def load_mesh(path) -> SafeZone:
    """Load and validate a safe-zone mesh from ASCII OBJ or binary STL."""
    path = Path(path)
    if not path.exists():
        raise OSError(f"mesh file not found: {path}")
    suffix = path.suffix.lower()
    if suffix == ".obj":
        verts, tris = _read_obj(path)
    elif suffix == ".stl":
        verts, tris = _read_stl_binary(path)
    else:
        raise OSError(f"unsupported mesh format: {suffix} (expected .obj or .stl)")
    return SafeZone(verts, tris)


def _read_obj(path):
    verts, tris = [], []
    with open(path) as f:
        for line_no, line in enumerate(f, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                refs = parts[1:]
                if len(refs) != 3:
                    raise MeshInvalid(f"non-triangle face at line {line_no}")
                idx = []
                for r in refs:
                    i = int(r.split("/")[0])
                    if i <= 0:
                        raise MeshInvalid(f"unsupported vertex reference at line {line_no}")
                    idx.append(i - 1)
                tris.append(idx)
    if not verts or not tris:
        raise MeshInvalid(f"no geometry found in {path}")
    return np.array(verts, dtype=float), np.array(tris, dtype=np.int64)


def _read_stl_binary(path, dedup_tol=1e-6):
    raw = path.read_bytes()
    if len(raw) < 84:
        raise OSError(f"not a binary STL: {path}")
    n = int(np.frombuffer(raw[80:84], dtype=np.uint32)[0])
    if len(raw) != 84 + 50 * n:
        raise OSError(f"binary STL size mismatch in {path}")
    rec = np.frombuffer(raw[84:], dtype=np.uint8).reshape(n, 50)
    coords = rec[:, 12:48].copy().view(np.float32).reshape(n, 3, 3).astype(float)
    flat = coords.reshape(-1, 3)
    keys = np.round(flat / dedup_tol).astype(np.int64)
    _, first_idx, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    verts = flat[first_idx]
    tris = inverse.reshape(n, 3).astype(np.int64)
    return verts, tris


# -- closest point on triangles (vectorized over pairs) --------------------


def _closest_point_kernel(p, a, ab, ac):
    """Closest point on each triangle for each query, plus the feature code.

    p: (..., 3) broadcastable against a/ab/ac: (..., 3). Implements the
    barycentric region classification; all arrays evaluate elementwise so BVH
    and brute-force paths produce bit-identical results.
    """
    ap = p - a
    d1 = np.sum(ab * ap, axis=-1)
    d2 = np.sum(ac * ap, axis=-1)
    bp = ap - ab
    d3 = np.sum(ab * bp, axis=-1)
    d4 = np.sum(ac * bp, axis=-1)
    cp = ap - ac
    d5 = np.sum(ab * cp, axis=-1)
    d6 = np.sum(ac * cp, axis=-1)

    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    in_a = (d1 <= 0) & (d2 <= 0)
    in_b = (d3 >= 0) & (d4 <= d3)
    in_c = (d6 >= 0) & (d5 <= d6)
    on_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    on_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    on_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)

    with np.errstate(divide="ignore", invalid="ignore"):
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = va + vb + vc
        v_face = vb / denom
        w_face = vc / denom
    t_ab = np.nan_to_num(t_ab)
    t_ac = np.nan_to_num(t_ac)
    t_bc = np.nan_to_num(t_bc)
    v_face = np.nan_to_num(v_face)
    w_face = np.nan_to_num(w_face)

    # masks applied in reverse priority so the scalar first-true-wins order
    # (A, B, AB, C, CA, BC, face) is preserved
    feature = np.full(d1.shape, FACE, dtype=np.int8)
    closest = a + v_face[..., None] * ab + w_face[..., None] * ac

    def assign(mask, code, point):
        np.copyto(feature, code, where=mask)
        np.copyto(closest, point, where=mask[..., None])

    assign(on_bc, EDGE_BC, a + ab + t_bc[..., None] * (ac - ab))
    assign(on_ac, EDGE_CA, a + t_ac[..., None] * ac)
    assign(in_c, VERT_C, a + ac)
    assign(on_ab, EDGE_AB, a + t_ab[..., None] * ab)
    assign(in_b, VERT_B, a + ab)
    assign(in_a, VERT_A, np.broadcast_to(a, closest.shape))

    diff = p - closest
    dist2 = np.sum(diff * diff, axis=-1)
    return closest, feature, dist2


def _lex_smaller(p, q):
    """Lexicographic (x, y, z) strict comparison of two points."""
    if p[0] != q[0]:
        return p[0] < q[0]
    if p[1] != q[1]:
        return p[1] < q[1]
    return p[2] < q[2]


def _reduce_candidates(closest, feature, dist2, tri_idx):
    """Pick the winning triangle: smallest distance, ties broken by the
    lexicographically smallest closest point (deterministic at the medial axis)."""
    best = int(np.argmin(dist2))
    ties = np.where(dist2 == dist2[best])[0]
    if len(ties) > 1:
        for cand in ties:
            if cand != best and _lex_smaller(closest[cand], closest[best]):
                best = int(cand)
    return closest[best], int(feature[best]), float(dist2[best]), int(tri_idx[best])


# -- query paths -----------------------------------------------------------


def _query_brute(zone: SafeZone, points):
    """All-triangles closest point for a batch of queries (Q, 3)."""
    Q = points.shape[0]
    T = len(zone.triangles)
    out_closest = np.empty((Q, 3))
    out_feature = np.empty(Q, dtype=np.int8)
    out_tri = np.empty(Q, dtype=np.int64)
    all_tri = np.arange(T)
    chunk = max(1, 2_000_000 // max(T, 1))
    for s in range(0, Q, chunk):
        e = min(Q, s + chunk)
        p = points[s:e, None, :]
        closest, feature, dist2 = _closest_point_kernel(
            p, zone._a[None], zone._ab[None], zone._ac[None]
        )
        rows = np.arange(e - s)
        best = np.argmin(dist2, axis=1)
        best_d2 = dist2[rows, best]
        out_closest[s:e] = closest[rows, best]
        out_feature[s:e] = feature[rows, best]
        out_tri[s:e] = best
        # exact distance ties (medial axis): re-reduce those rows deterministically
        tie_rows = np.where((dist2 == best_d2[:, None]).sum(axis=1) > 1)[0]
        for qi in tie_rows:
            c, f, _, t = _reduce_candidates(closest[qi], feature[qi], dist2[qi], all_tri)
            out_closest[s + qi] = c
            out_feature[s + qi] = f
            out_tri[s + qi] = t
    return out_closest, out_feature, out_tri


def _dist2_kernel(ap2, d1, d2, ab2, ac2, abac):
    """Squared point-triangle distance from scalar products only.

    Mirrors the region classification of _closest_point_kernel but avoids all
    3-vector temporaries; used to cull candidates before the full kernel runs.
    """
    d3 = d1 - ab2
    d4 = d2 - abac
    d5 = d1 - abac
    d6 = d2 - ac2
    bp2 = ap2 - d1 - d3
    cp2 = ap2 - d2 - d6

    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide="ignore", invalid="ignore"):
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = va + vb + vc
        v_face = vb / denom
        w_face = vc / denom
    t_ab = np.nan_to_num(t_ab)
    t_ac = np.nan_to_num(t_ac)
    t_bc = np.nan_to_num(t_bc)
    v_face = np.nan_to_num(v_face)
    w_face = np.nan_to_num(w_face)

    dist2 = ap2 - v_face * d1 - w_face * d2
    np.copyto(dist2, bp2 - t_bc * (d4 - d3), where=(va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0))
    np.copyto(dist2, ap2 - t_ac * d2, where=(vb <= 0) & (d2 >= 0) & (d6 <= 0))
    np.copyto(dist2, cp2, where=(d6 >= 0) & (d5 <= d6))
    np.copyto(dist2, ap2 - t_ab * d1, where=(vc <= 0) & (d1 >= 0) & (d3 <= 0))
    np.copyto(dist2, bp2, where=(d3 >= 0) & (d4 <= d3))
    np.copyto(dist2, ap2, where=(d1 <= 0) & (d2 <= 0))
    return np.maximum(dist2, 0.0)


def _query_culled(zone: SafeZone, points):
    """Batched closest points with AABB culling; exact, matches the brute path.

    Upper bound per query from the nearest mesh vertex, lower bounds from the
    triangle AABBs; surviving pairs go through the scalar distance kernel and
    only a near-tie band reaches the full kernel.
    """
    Q = points.shape[0]
    T = len(zone.triangles)
    out_closest = np.empty((Q, 3))
    out_feature = np.empty(Q, dtype=np.int8)
    out_tri = np.empty(Q, dtype=np.int64)
    chunk = max(1, 4_000_000 // max(T, 1))
    for s in range(0, Q, chunk):
        e = min(Q, s + chunk)
        p = points[s:e]
        # nearest-vertex upper bound and per-triangle AABB lower bound, per axis
        # to avoid (q, T, 3) temporaries
        acc_v = np.zeros((e - s, len(zone.vertices)))
        aabb2 = np.zeros((e - s, T))
        for ax in range(3):
            dv = p[:, ax, None] - zone.vertices[None, :, ax]
            dv *= dv
            acc_v += dv
            lo = zone._tri_bb_min[None, :, ax] - p[:, ax, None]
            np.maximum(lo, 0.0, out=lo)
            hi = p[:, ax, None] - zone._tri_bb_max[None, :, ax]
            np.maximum(hi, 0.0, out=hi)
            lo += hi
            lo *= lo
            aabb2 += lo
        ub2 = acc_v.min(axis=1)
        qi, ti = np.nonzero(aabb2 <= ub2[:, None])
        a = zone._a[ti]
        ap = p[qi] - a
        ap2 = np.einsum("ij,ij->i", ap, ap)
        d1 = np.einsum("ij,ij->i", zone._ab[ti], ap)
        d2 = np.einsum("ij,ij->i", zone._ac[ti], ap)
        dist2 = _dist2_kernel(ap2, d1, d2, zone._ab2[ti], zone._ac2[ti], zone._abac[ti])

        starts = np.flatnonzero(np.r_[True, qi[1:] != qi[:-1]])
        group_min = np.minimum.reduceat(dist2, starts)
        per_pair_min = group_min[np.cumsum(np.r_[True, qi[1:] != qi[:-1]]) - 1]
        band = dist2 <= per_pair_min * (1.0 + 1e-9) + 1e-18
        bq, bt = qi[band], ti[band]
        closest, feature, bdist2 = _closest_point_kernel(
            p[bq], zone._a[bt], zone._ab[bt], zone._ac[bt]
        )
        # winner per query by (dist2, lexicographic point, triangle index),
        # identical to the _reduce_candidates comparator
        order = np.lexsort(
            (bt, closest[:, 2], closest[:, 1], closest[:, 0], bdist2, bq)
        )
        firsts = order[np.flatnonzero(np.r_[True, bq[order][1:] != bq[order][:-1]])]
        rows = s + bq[firsts]
        out_closest[rows] = closest[firsts]
        out_feature[rows] = feature[firsts]
        out_tri[rows] = bt[firsts]
    return out_closest, out_feature, out_tri


def _query_bvh_single(zone: SafeZone, p):
    """Stack-based tree descent for one query point."""
    bvh = zone.bvh
    best_d2 = np.inf
    best = (None, FACE, np.inf, -1)
    stack = [0]
    while stack:
        node = stack.pop()
        lo = bvh.bb_min[node] - p
        hi = p - bvh.bb_max[node]
        dd = np.maximum(lo, 0.0) + np.maximum(hi, 0.0)
        if dd @ dd > best_d2:
            continue
        if bvh.left[node] < 0:
            s, c = bvh.start[node], bvh.count[node]
            tri_idx = bvh.order[s : s + c]
            closest, feature, dist2 = _closest_point_kernel(
                p[None, :], zone._a[tri_idx], zone._ab[tri_idx], zone._ac[tri_idx]
            )
            c_pt, c_ft, c_d2, c_tri = _reduce_candidates(closest, feature, dist2, tri_idx)
            if c_d2 < best_d2 or (
                c_d2 == best_d2 and best[0] is not None and _lex_smaller(c_pt, best[0])
            ):
                best = (c_pt, c_ft, c_d2, c_tri)
                best_d2 = c_d2
        else:
            # visit nearer child first
            l, r = int(bvh.left[node]), int(bvh.right[node])
            dl = _aabb_dist2(bvh.bb_min[l], bvh.bb_max[l], p)
            dr = _aabb_dist2(bvh.bb_min[r], bvh.bb_max[r], p)
            if dl <= dr:
                stack.extend((r, l))
            else:
                stack.extend((l, r))
    return best


def _aabb_dist2(bb_min, bb_max, p):
    d = np.maximum(bb_min - p, 0.0) + np.maximum(p - bb_max, 0.0)
    return float(d @ d)


def _closest_points(zone: SafeZone, points, use_bvh=None):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if use_bvh is None:
        # default: vectorized AABB-culled evaluation, exact and tie-stable
        return _query_culled(zone, points)
    if not use_bvh:
        return _query_brute(zone, points)
    Q = points.shape[0]
    out_closest = np.empty((Q, 3))
    out_feature = np.empty(Q, dtype=np.int8)
    out_tri = np.empty(Q, dtype=np.int64)
    for qi in range(Q):
        c, f, _, t = _query_bvh_single(zone, points[qi])
        out_closest[qi] = c
        out_feature[qi] = f
        out_tri[qi] = t
    return out_closest, out_feature, out_tri


def signed_distance_batch(zone: SafeZone, points, use_bvh=None):
    """Signed distances, closest points and gradients for (Q, 3) queries.

    Returns (d, closest, grad): d positive inside the mesh; grad is the unit
    direction of increasing d, falling back to the feature pseudonormal within
    1e-9 of the surface.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if not np.all(np.isfinite(points)):
        raise ValueError("query points must be finite")
    closest, feature, tri = _closest_points(zone, points, use_bvh)
    normals = zone.feature_normal(tri, feature)
    diff = points - closest
    dist = np.linalg.norm(diff, axis=1)
    outside = np.einsum("ij,ij->i", diff, normals) >= 0.0
    d = np.where(outside, -dist, dist)
    grad = np.where(outside[:, None], -diff, diff)
    small = dist <= _GRAD_FALLBACK_DIST
    safe = np.where(small, 1.0, dist)
    grad = grad / safe[:, None]
    grad[small] = -normals[small]
    return d, closest, grad


def signed_distance(zone: SafeZone, p, use_bvh=None) -> SdfResult:
    """Signed distance of a single point (positive inside)."""
    d, closest, grad = signed_distance_batch(zone, np.asarray(p, dtype=float)[None, :], use_bvh)
    return SdfResult(distance=float(d[0]), closest_point=closest[0], gradient=grad[0])


def sdf_gradient(zone: SafeZone, p, use_bvh=None) -> np.ndarray:
    """Unit gradient of the signed distance at p."""
    return signed_distance(zone, p, use_bvh).gradient


# -- BVH construction -------------------------------------------------------


def _build_bvh(tri_bb_min, tri_bb_max) -> _Bvh:
    T = len(tri_bb_min)
    centroids = 0.5 * (tri_bb_min + tri_bb_max)
    order = np.arange(T)
    bb_min, bb_max, left, right, start, count = [], [], [], [], [], []

    def build(lo, hi):
        idx = len(bb_min)
        sel = order[lo:hi]
        bb_min.append(tri_bb_min[sel].min(axis=0))
        bb_max.append(tri_bb_max[sel].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(lo)
        count.append(hi - lo)
        if hi - lo <= _LEAF_SIZE:
            return idx
        ext = bb_max[idx] - bb_min[idx]
        axis = int(np.argmax(ext))
        mid = (lo + hi) // 2
        part = np.argsort(centroids[sel, axis], kind="stable")
        order[lo:hi] = sel[part]
        left[idx] = build(lo, mid)
        right[idx] = build(mid, hi)
        count[idx] = 0
        return idx

    import sys

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 10000))
    try:
        build(0, T)
    finally:
        sys.setrecursionlimit(old_limit)
    return _Bvh(
        bb_min=np.array(bb_min),
        bb_max=np.array(bb_max),
        left=np.array(left),
        right=np.array(right),
        start=np.array(start),
        count=np.array(count),
        order=order,
    )
