"""Procedural builders and file IO for the shipped safe-zone test meshes.

All builders return (vertices, triangles) with outward-oriented windings.
Shipped meshes live under data/meshes/ and are regenerated by
scripts/gen_meshes.py.
"""

from __future__ import annotations

import struct
from importlib import resources
from pathlib import Path

import numpy as np


def box_mesh(min_corner, max_corner):
    """Axis-aligned box: 8 vertices, 12 triangles, outward winding."""
    lo = np.asarray(min_corner, dtype=float)
    hi = np.asarray(max_corner, dtype=float)
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    verts = np.array(
        [
            [x0, y0, z0],
            [x1, y0, z0],
            [x1, y1, z0],
            [x0, y1, z0],
            [x0, y0, z1],
            [x1, y0, z1],
            [x1, y1, z1],
            [x0, y1, z1],
        ]
    )
    tris = np.array(
        [
            [0, 2, 1], [0, 3, 2],        # bottom (z = z0), normal -z
            [4, 5, 6], [4, 6, 7],        # top, normal +z
            [0, 1, 5], [0, 5, 4],        # y = y0, normal -y
            [2, 3, 7], [2, 7, 6],        # y = y1, normal +y
            [1, 2, 6], [1, 6, 5],        # x = x1, normal +x
            [3, 0, 4], [3, 4, 7],        # x = x0, normal -x
        ],
        dtype=np.int64,
    )
    return verts, tris


def unit_cube():
    """Side-1 cube centered at the origin."""
    return box_mesh([-0.5, -0.5, -0.5], [0.5, 0.5, 0.5])


def _resample_polyline(points, n_samples):
    """Resample a polyline to n_samples points equally spaced in arc length."""
    pts = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, cum[-1], n_samples)
    out = np.empty((n_samples, 3))
    for d in range(3):
        out[:, d] = np.interp(targets, cum, pts[:, d])
    return out


def tube_along_path(path_points, radius, sides=12, rings=None):
    """Watertight capped tube swept along a polyline.

    Cross-section is a regular polygon with `sides` vertices transported along
    the path without roll (parallel transport of the frame). Vertex count is
    rings*sides + 2 (two cap centers).
    """
    path = np.asarray(path_points, dtype=float)
    if rings is not None:
        path = _resample_polyline(path, rings)
    m = len(path)
    if m < 2:
        raise ValueError("tube path needs at least 2 points")

    # tangents: central differences inside, one-sided at the ends
    tangents = np.empty_like(path)
    tangents[0] = path[1] - path[0]
    tangents[-1] = path[-1] - path[-2]
    tangents[1:-1] = path[2:] - path[:-2]
    tangents /= np.linalg.norm(tangents, axis=1)[:, None]

    # parallel-transported normal
    t0 = tangents[0]
    ref = np.array([1.0, 0.0, 0.0])
    if abs(t0 @ ref) > 0.9:
        ref = np.array([0.0, 1.0, 0.0])
    normal = ref - (ref @ t0) * t0
    normal /= np.linalg.norm(normal)

    theta = 2.0 * np.pi * np.arange(sides) / sides
    ring_cos, ring_sin = np.cos(theta), np.sin(theta)

    verts = np.empty((m * sides + 2, 3))
    for i in range(m):
        if i > 0:
            # rotate the frame normal from the previous tangent to the current one
            a, b = tangents[i - 1], tangents[i]
            cross = np.cross(a, b)
            c = float(a @ b)
            if np.linalg.norm(cross) > 1e-12:
                axis = cross / np.linalg.norm(cross)
                ang = np.arctan2(np.linalg.norm(cross), c)
                normal = (
                    normal * np.cos(ang)
                    + np.cross(axis, normal) * np.sin(ang)
                    + axis * (axis @ normal) * (1 - np.cos(ang))
                )
                normal -= (normal @ b) * b
                normal /= np.linalg.norm(normal)
        binormal = np.cross(tangents[i], normal)
        ring = path[i] + radius * (ring_cos[:, None] * normal + ring_sin[:, None] * binormal)
        verts[i * sides : (i + 1) * sides] = ring

    c_start = m * sides
    c_end = m * sides + 1
    verts[c_start] = path[0]
    verts[c_end] = path[-1]

    tris = []
    for i in range(m - 1):
        for k in range(sides):
            k2 = (k + 1) % sides
            a = i * sides + k
            b = i * sides + k2
            c = (i + 1) * sides + k2
            d = (i + 1) * sides + k
            tris.append([a, b, c])
            tris.append([a, c, d])
    for k in range(sides):
        k2 = (k + 1) % sides
        tris.append([c_start, k2, k])                          # start cap
        tris.append([c_end, (m - 1) * sides + k, (m - 1) * sides + k2])  # end cap
    tris = np.array(tris, dtype=np.int64)

    # normalize to outward orientation
    a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    volume = np.sum(np.einsum("ij,ij->i", a, np.cross(b, c))) / 6.0
    if volume < 0:
        tris = tris[:, [0, 2, 1]]
    return verts, tris


def winding_tube():
    """Curved tube safe zone: straight riser into a sideways bend, 350 vertices."""
    path = [(0.0, 0.0, -25.0), (0.0, 0.0, 100.0)]
    bend_radius = 80.0
    for ang in np.linspace(0.0, np.deg2rad(78.0), 26)[1:]:
        path.append(
            (bend_radius * (1 - np.cos(ang)), 0.0, 100.0 + bend_radius * np.sin(ang))
        )
    exit_dir = np.array([np.sin(np.deg2rad(78.0)), 0.0, np.cos(np.deg2rad(78.0))])
    path.append(tuple(np.asarray(path[-1]) + 25.0 * exit_dir))
    # 29-gon cross-section: near-round walls so margin sliding stays smooth
    return tube_along_path(path, radius=33.0, sides=29, rings=12)


def inverted_u():
    """Arch-shaped tube: up one leg, over the top, down the other."""
    path = [(0.0, 0.0, -25.0), (0.0, 0.0, 130.0)]
    arch_radius = 40.0
    for ang in np.linspace(0.0, np.pi, 20)[1:]:
        path.append(
            (arch_radius * (1 - np.cos(ang)), 0.0, 130.0 + arch_radius * np.sin(ang))
        )
    path.append((80.0, 0.0, 60.0))
    return tube_along_path(path, radius=30.0, sides=12, rings=34)


def halfspace_box():
    """Large box whose +x face acts as the wall for exterior-target runs."""
    return box_mesh([-150.0, -150.0, -20.0], [60.0, 150.0, 260.0])


BUILTIN_MESHES = {
    "unit_cube": unit_cube,
    "winding_tube": winding_tube,
    "inverted_u": inverted_u,
    "halfspace_box": halfspace_box,
}


def write_obj(path, verts, tris):
    """Write an ASCII OBJ file (triangles only)."""
    with open(path, "w") as f:
        f.write("# generated safe-zone mesh\n")
        for v in np.asarray(verts, dtype=float):
            f.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for t in np.asarray(tris, dtype=np.int64):
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def write_stl_binary(path, verts, tris):
    """Write a binary STL file."""
    verts = np.asarray(verts, dtype=float)
    tris = np.asarray(tris, dtype=np.int64)
    with open(path, "wb") as f:
        f.write(b"\0" * 80)
        f.write(struct.pack("<I", len(tris)))
        for t in tris:
            a, b, c = verts[t[0]], verts[t[1]], verts[t[2]]
            n = np.cross(b - a, c - a)
            norm = np.linalg.norm(n)
            n = n / norm if norm > 0 else n
            rec = struct.pack(
                "<12fH",
                *n.astype(np.float32),
                *a.astype(np.float32),
                *b.astype(np.float32),
                *c.astype(np.float32),
                0,
            )
            f.write(rec)


def mesh_path(name: str) -> Path:
    """Path of a shipped builtin mesh file by name."""
    base = resources.files("tdcr_mpc").joinpath("data", "meshes", f"{name}.obj")
    return Path(str(base))


def generate_builtin_meshes(out_dir):
    """Write every builtin mesh as OBJ into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, builder in BUILTIN_MESHES.items():
        verts, tris = builder()
        write_obj(out / f"{name}.obj", verts, tris)
    return sorted(out.glob("*.obj"))
