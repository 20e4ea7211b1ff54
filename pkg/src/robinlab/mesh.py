"""Triangulated 2D domains with oriented boundary data.

Meshes are built from a :class:`DomainSpec` (rectangle, disk, or simple
polygon), carry counterclockwise triangles, per-edge outward unit normals on
the boundary, and are immutable after construction.  Rectangles use a uniform
right-triangle grid; disks use deterministic radial-ring meshing with all
boundary vertices snapped onto the circle; polygons are ear-clipped and then
uniformly refined down to the target mesh size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "MeshError",
    "DomainSpec",
    "Mesh",
    "Subdomain",
    "generate_mesh",
    "refine",
    "shrink_subdomain",
    "write_mesh_text",
    "read_mesh_text",
]

_GEOM_TOL = 1e-12


def _cross2(u, v):
    """z-component of the cross product of 2D vectors (broadcasts)."""
    u = np.asarray(u)
    v = np.asarray(v)
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


class MeshError(ValueError):
    """Invalid domain specification or mesh construction failure."""


@dataclass(frozen=True)
class DomainSpec:
    """Description of the domain to triangulate.

    Exactly one geometry is active, selected by ``kind``:

    * ``"rectangle"``: axis-aligned rectangle given by ``corners``.
    * ``"disk"``: circle of ``radius`` around ``center``, whose boundary is a
      regular inscribed polygon with ``segments`` sides.
    * ``"polygon"``: simple (non self-intersecting) polygon with CCW or CW
      ``vertices``.

    ``h`` is the target mesh size; generated meshes satisfy
    ``max triangle diameter <= 2 h``.
    """

    kind: str
    h: float
    corners: Optional[tuple] = None
    center: tuple = (0.0, 0.0)
    radius: float = 0.0
    segments: int = 0
    vertices: Optional[tuple] = None
    tag: str = ""

    @classmethod
    def rectangle(cls, corner0, corner1, h, tag="rectangle"):
        return cls(kind="rectangle", h=float(h),
                   corners=(tuple(map(float, corner0)), tuple(map(float, corner1))),
                   tag=tag)

    @classmethod
    def unit_square(cls, h, tag="square"):
        return cls.rectangle((0.0, 0.0), (1.0, 1.0), h, tag=tag)

    @classmethod
    def disk(cls, center=(0.0, 0.0), radius=1.0, segments=64, h=0.1, tag="disk"):
        return cls(kind="disk", h=float(h), center=tuple(map(float, center)),
                   radius=float(radius), segments=int(segments), tag=tag)

    @classmethod
    def polygon(cls, vertices, h, tag="polygon"):
        verts = tuple((float(x), float(y)) for x, y in vertices)
        return cls(kind="polygon", h=float(h), vertices=verts, tag=tag)

    def validate(self):
        if not math.isfinite(self.h) or self.h <= 0:
            raise MeshError(f"target mesh size must be positive, got {self.h}")
        if self.kind == "rectangle":
            if self.corners is None:
                raise MeshError("rectangle spec requires corners")
            (x0, y0), (x1, y1) = self.corners
            if not (x1 > x0 and y1 > y0):
                raise MeshError(f"degenerate rectangle corners {self.corners}")
        elif self.kind == "disk":
            if self.radius <= 0:
                raise MeshError(f"disk radius must be positive, got {self.radius}")
            if self.segments < 3:
                raise MeshError(f"disk needs >= 3 boundary segments, got {self.segments}")
        elif self.kind == "polygon":
            if self.vertices is None or len(self.vertices) < 3:
                raise MeshError("polygon spec requires at least 3 vertices")
            _validate_simple_polygon(np.asarray(self.vertices, dtype=float))
        else:
            raise MeshError(f"unknown domain kind {self.kind!r}")

    @property
    def label(self):
        return self.tag or self.kind


class Mesh:
    """Immutable triangulation of a 2D domain.

    Attributes
    ----------
    vertices : (NV, 2) float array
    triangles : (NT, 3) int array, counterclockwise
    boundary_edges : (NB, 2) int array, oriented so the domain lies on the left
    boundary_normals : (NB, 2) float array, outward unit normals (constant per edge)
    domain_tag : str
        Label of the source :class:`DomainSpec`.
    """

    def __init__(self, vertices, triangles, spec=None, domain_tag=""):
        vertices = np.ascontiguousarray(vertices, dtype=float)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must be an (NV, 2) array")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshError("triangles must be an (NT, 3) array")
        if not np.all(np.isfinite(vertices)):
            raise MeshError("vertex coordinates must be finite")
        if triangles.min(initial=0) < 0 or triangles.max(initial=-1) >= len(vertices):
            raise MeshError("triangle indices out of range")

        self.vertices = vertices
        self.triangles = triangles
        self.spec = spec
        self.domain_tag = domain_tag or (spec.label if spec is not None else "mesh")

        areas = _signed_areas(vertices, triangles)
        if np.any(areas <= 0):
            bad = int(np.argmin(areas))
            raise MeshError(f"triangle {bad} has non-positive signed area {areas[bad]:.3e}")
        self._areas = areas

        self.boundary_edges, self.boundary_normals = _boundary_data(vertices, triangles)
        _check_connected(len(vertices), triangles)

        for arr in (self.vertices, self.triangles, self._areas,
                    self.boundary_edges, self.boundary_normals):
            arr.flags.writeable = False

    # -- derived geometry ---------------------------------------------------

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_triangles(self):
        return len(self.triangles)

    @property
    def triangle_areas(self):
        return self._areas

    @cached_property
    def boundary_lengths(self):
        p = self.vertices[self.boundary_edges[:, 0]]
        q = self.vertices[self.boundary_edges[:, 1]]
        return np.linalg.norm(q - p, axis=1)

    @cached_property
    def h_max(self):
        """Maximum triangle diameter (longest edge over all triangles)."""
        v = self.vertices
        t = self.triangles
        e0 = np.linalg.norm(v[t[:, 1]] - v[t[:, 0]], axis=1)
        e1 = np.linalg.norm(v[t[:, 2]] - v[t[:, 1]], axis=1)
        e2 = np.linalg.norm(v[t[:, 0]] - v[t[:, 2]], axis=1)
        return float(np.max(np.stack([e0, e1, e2])))

    @cached_property
    def boundary_vertices(self):
        return np.unique(self.boundary_edges)

    @cached_property
    def boundary_distances(self):
        """Distance from every vertex to the boundary polyline."""
        return _distances_to_segments(self.vertices,
                                      self.vertices[self.boundary_edges[:, 0]],
                                      self.vertices[self.boundary_edges[:, 1]])

    def triangle_centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def __repr__(self):
        return (f"Mesh({self.domain_tag!r}, NV={self.num_vertices}, "
                f"NT={self.num_triangles}, NB={len(self.boundary_edges)})")


@dataclass(frozen=True)
class Subdomain:
    """Compactly contained triangle subset of a parent mesh."""

    mesh: Mesh
    triangle_indices: np.ndarray
    description: str = ""

    def __post_init__(self):
        idx = np.asarray(self.triangle_indices, dtype=np.int64)
        object.__setattr__(self, "triangle_indices", idx)
        verts = np.unique(self.mesh.triangles[idx])
        if np.intersect1d(verts, self.mesh.boundary_vertices).size:
            raise MeshError("subdomain touches the boundary")

    @property
    def area(self):
        return float(self.mesh.triangle_areas[self.triangle_indices].sum())


# ---------------------------------------------------------------------------
# generation

def generate_mesh(spec: DomainSpec) -> Mesh:
    """Triangulate a domain specification.

    Raises :class:`MeshError` for degenerate polygons or when the requested
    boundary segment count cannot meet the ``<= 2 h`` diameter contract.
    """
    spec.validate()
    if spec.kind == "rectangle":
        mesh = _mesh_rectangle(spec)
    elif spec.kind == "disk":
        mesh = _mesh_disk(spec)
    else:
        mesh = _mesh_polygon(spec)
    if mesh.h_max > 2.0 * spec.h * (1.0 + 1e-12):
        raise MeshError(
            f"cannot reach target size: max diameter {mesh.h_max:.4g} > 2h = {2*spec.h:.4g}"
            " (for disks, increase the boundary segment count)")
    return mesh


def _mesh_rectangle(spec):
    (x0, y0), (x1, y1) = spec.corners
    nx = max(1, math.ceil((x1 - x0) / spec.h))
    ny = max(1, math.ceil((y1 - y0) / spec.h))
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return Mesh(verts, np.array(tris), spec=spec)


def _disk_rings(spec):
    n, radius = spec.segments, spec.radius
    rings = max(1, math.ceil(radius / spec.h))
    cx, cy = spec.center
    verts = [(cx, cy)]
    for k in range(1, rings + 1):
        r = radius * k / rings
        ang = 2.0 * np.pi * np.arange(n) / n
        verts.extend(zip(cx + r * np.cos(ang), cy + r * np.sin(ang)))

    def vid(k, j):  # ring k >= 1, angular index modulo n
        return 1 + (k - 1) * n + (j % n)

    tris = []
    for j in range(n):
        tris.append((0, vid(1, j), vid(1, j + 1)))
    for k in range(1, rings):
        for j in range(n):
            a, b = vid(k, j), vid(k, j + 1)
            c, d = vid(k + 1, j), vid(k + 1, j + 1)
            tris.append((a, c, d))
            tris.append((a, d, b))
    return np.array(verts), np.array(tris)


def _mesh_disk(spec):
    verts, tris = _disk_rings(spec)
    return Mesh(verts, tris, spec=spec)


def _mesh_polygon(spec):
    poly = np.asarray(spec.vertices, dtype=float)
    if _polygon_signed_area(poly) < 0:
        poly = poly[::-1].copy()
    tris = _ear_clip(poly)
    mesh = Mesh(poly, tris, spec=spec)
    while mesh.h_max > 2.0 * spec.h:
        mesh = refine(mesh)
    return mesh


def refine(mesh: Mesh) -> Mesh:
    """Uniform 4-to-1 refinement by edge midpoints.

    On disk-tagged meshes, new boundary vertices are snapped back onto the
    circle; all other coordinates (and the original boundary vertex set) are
    preserved exactly.
    """
    verts = list(map(tuple, mesh.vertices))
    midpoint = {}

    def mid(i, j):
        key = (i, j) if i < j else (j, i)
        m = midpoint.get(key)
        if m is None:
            m = len(verts)
            p = 0.5 * (mesh.vertices[i] + mesh.vertices[j])
            verts.append((p[0], p[1]))
            midpoint[key] = m
        return m

    tris = []
    for a, b, c in mesh.triangles:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        tris.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])

    new_verts = np.array(verts)
    new_tris = np.array(tris)

    spec = mesh.spec
    if spec is not None and spec.kind == "disk":
        # snap refined boundary vertices onto the circle
        edges, _ = _boundary_data(new_verts, new_tris)
        bv = np.unique(edges)
        center = np.asarray(spec.center)
        rel = new_verts[bv] - center
        norms = np.linalg.norm(rel, axis=1)
        new_verts[bv] = center + rel * (spec.radius / norms)[:, None]

    return Mesh(new_verts, new_tris, spec=spec, domain_tag=mesh.domain_tag)


def shrink_subdomain(mesh: Mesh, margin: float) -> Subdomain:
    """Triangles whose every vertex is at distance >= margin from the boundary.

    The result is compactly contained in the domain (Subdomain invariant).
    Raises :class:`MeshError` naming the largest feasible margin when no
    triangle qualifies.
    """
    if not margin > 0:
        raise MeshError(f"margin must be positive, got {margin}")
    dist = mesh.boundary_distances
    tri_min = dist[mesh.triangles].min(axis=1)
    keep = np.flatnonzero(tri_min >= margin)
    if keep.size == 0:
        raise MeshError(
            f"margin {margin:.4g} leaves no interior triangles; "
            f"largest feasible margin is {tri_min.max():.6g}")
    return Subdomain(mesh, keep, description=f"shrink by margin {margin:g}")


# ---------------------------------------------------------------------------
# text format: line 1 "NV NT NB"; NV lines "x y"; NT lines "i j k";
# NB lines "i j nx ny".  17 significant digits.

def write_mesh_text(mesh: Mesh, path):
    lines = [f"{mesh.num_vertices} {mesh.num_triangles} {len(mesh.boundary_edges)}"]
    lines.extend(f"{x:.16e} {y:.16e}" for x, y in mesh.vertices)
    lines.extend(f"{i} {j} {k}" for i, j, k in mesh.triangles)
    lines.extend(f"{i} {j} {nx:.16e} {ny:.16e}"
                 for (i, j), (nx, ny) in zip(mesh.boundary_edges, mesh.boundary_normals))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh_text(path, domain_tag="") -> Mesh:
    with open(path) as fh:
        tokens = fh.read().split()
    it = iter(tokens)
    nv, nt, nb = int(next(it)), int(next(it)), int(next(it))
    verts = np.array([[float(next(it)), float(next(it))] for _ in range(nv)])
    tris = np.array([[int(next(it)), int(next(it)), int(next(it))] for _ in range(nt)])
    stored = [(int(next(it)), int(next(it)), float(next(it)), float(next(it)))
              for _ in range(nb)]
    mesh = Mesh(verts, tris, domain_tag=domain_tag or "file")
    if len(mesh.boundary_edges) != nb:
        raise MeshError("stored boundary does not match triangulation")
    rebuilt = {(i, j) for i, j in mesh.boundary_edges}
    if any((i, j) not in rebuilt for i, j, _, _ in stored):
        raise MeshError("stored boundary edges do not match triangulation")
    return mesh


# ---------------------------------------------------------------------------
# internals

def _signed_areas(verts, tris):
    p0 = verts[tris[:, 0]]
    p1 = verts[tris[:, 1]]
    p2 = verts[tris[:, 2]]
    return 0.5 * _cross2(p1 - p0, p2 - p0)


def _boundary_data(verts, tris):
    """Oriented boundary edges (domain on the left) and outward unit normals."""
    # undirected edge census; boundary edges appear in exactly one triangle
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    owners = np.tile(np.arange(len(tris)), 3)
    key = np.sort(edges, axis=1)
    order = np.lexsort((key[:, 1], key[:, 0]))
    key, edges, owners = key[order], edges[order], owners[order]
    new_group = np.ones(len(key), dtype=bool)
    new_group[1:] = np.any(key[1:] != key[:-1], axis=1)
    group_id = np.cumsum(new_group) - 1
    counts = np.bincount(group_id)
    single = counts[group_id] == 1
    if np.any(counts > 2):
        raise MeshError("non-manifold edge (edge shared by more than two triangles)")

    bedges = edges[single]
    bowners = owners[single]
    # deterministic ordering by oriented indices
    order = np.lexsort((bedges[:, 1], bedges[:, 0]))
    bedges, bowners = bedges[order], bowners[order]

    p = verts[bedges[:, 0]]
    q = verts[bedges[:, 1]]
    tang = q - p
    lengths = np.linalg.norm(tang, axis=1)
    if np.any(lengths <= 0):
        raise MeshError("zero-length boundary edge")
    normals = np.column_stack([tang[:, 1], -tang[:, 0]]) / lengths[:, None]

    centroids = verts[tris[bowners]].mean(axis=1)
    outward = np.einsum("ij,ij->i", normals, 0.5 * (p + q) - centroids)
    if np.any(outward <= 0):
        raise MeshError("boundary normal orientation check failed")
    return bedges, normals


def _check_connected(nv, tris):
    # BFS over the vertex adjacency induced by triangle edges
    adj = [[] for _ in range(nv)]
    for a, b, c in tris:
        adj[a].extend((b, c))
        adj[b].extend((a, c))
        adj[c].extend((a, b))
    seen = np.zeros(nv, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for w in adj[u]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    if not seen.all():
        raise MeshError("mesh is not connected")


def _distances_to_segments(points, seg_a, seg_b, chunk=8192):
    """Min distance from each point to a set of segments, chunked over points."""
    d = seg_b - seg_a                      # (NS, 2)
    dd = np.einsum("ij,ij->i", d, d)
    out = np.empty(len(points))
    for lo in range(0, len(points), chunk):
        p = points[lo:lo + chunk]          # (NP, 2)
        w = p[:, None, :] - seg_a[None]    # (NP, NS, 2)
        t = np.clip(np.einsum("pse,se->ps", w, d) / dd, 0.0, 1.0)
        closest = seg_a[None] + t[..., None] * d[None]
        out[lo:lo + chunk] = np.linalg.norm(p[:, None, :] - closest, axis=2).min(axis=1)
    return out


def _polygon_signed_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _validate_simple_polygon(poly):
    n = len(poly)
    scale = float(np.abs(poly).max()) or 1.0
    tol = _GEOM_TOL * scale
    for i in range(n):
        for j in range(i + 1, n):
            if np.linalg.norm(poly[i] - poly[j]) <= tol:
                raise MeshError(f"degenerate polygon: vertices {i} and {j} coincide")
    for i in range(n):
        a, b, c = poly[i - 1], poly[i], poly[(i + 1) % n]
        if abs(_cross2(b - a, c - b)) <= tol * tol:
            raise MeshError(f"degenerate polygon: vertex {i} is collinear with its neighbours")
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]):
                raise MeshError(f"polygon is not simple: edges {i} and {j} intersect")


def _segments_cross(p, p2, q, q2):
    d1 = _cross2(p2 - p, q - p)
    d2 = _cross2(p2 - p, q2 - p)
    d3 = _cross2(q2 - q, p - q)
    d4 = _cross2(q2 - q, p2 - q)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def _ear_clip(poly):
    """Triangulate a simple CCW polygon by ear clipping (deterministic)."""
    n = len(poly)
    idx = list(range(n))
    tris = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 2 * n * n:
            raise MeshError("ear clipping failed to terminate")
        clipped = False
        for k in range(len(idx)):
            i0 = idx[k - 1]
            i1 = idx[k]
            i2 = idx[(k + 1) % len(idx)]
            a, b, c = poly[i0], poly[i1], poly[i2]
            if _cross2(b - a, c - a) <= 0:
                continue
            if any(_point_in_triangle(poly[m], a, b, c)
                   for m in idx if m not in (i0, i1, i2)):
                continue
            tris.append((i0, i1, i2))
            idx.pop(k)
            clipped = True
            break
        if not clipped:
            raise MeshError("ear clipping failed (polygon may be degenerate)")
    tris.append(tuple(idx))
    return np.array(tris)


def _point_in_triangle(p, a, b, c):
    d1 = _cross2(b - a, p - a)
    d2 = _cross2(c - b, p - b)
    d3 = _cross2(a - c, p - c)
    return d1 > 0 and d2 > 0 and d3 > 0
