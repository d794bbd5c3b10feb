"""Surface extraction, smoothing, watertightness audit and tet quality."""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from skimage import measure

from .errors import CorruptFile, DomainError, EmptyMask, IoError
from .ranking import robust_stats
from .volume import index_to_world

WELD_TOL_MM = 1e-6
SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise DomainError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    def volume(self):
        """Signed enclosed volume (mm³); positive for outward orientation."""
        p = self.vertices[self.triangles]
        return float(np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6.0)

    def edges(self):
        """Undirected edges (sorted pairs), one row per triangle side."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.sort(e, axis=1)

    def euler_characteristic(self):
        n_edges = len(np.unique(self.edges(), axis=0))
        n_verts = len(np.unique(self.triangles))
        return n_verts - n_edges + len(self.triangles)


def weld(vertices, triangles, tol=WELD_TOL_MM):
    """Merge vertices closer than ``tol`` (grid-snapped keys) and drop
    triangles that collapse. Vertex order follows the sorted keys."""
    keys = np.round(np.asarray(vertices) / tol).astype(np.int64)
    uniq, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    verts = np.asarray(vertices)[first]
    tris = inverse.reshape(-1)[np.asarray(triangles)]
    ok = (tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2]) & (tris[:, 0] != tris[:, 2])
    tris = tris[ok]
    p = verts[tris]
    area2 = np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    return verts, tris[area2 > 0]


def marching_cubes(mask):
    """Iso-0.5 surface of a binary mask in world mm, outward oriented.

    The mask is zero-padded so surfaces touching the volume border close.
    Uses the classic Lorensen case table: on binary fields scikit-image's
    Lewiner variant emits cancelling duplicate triangles in ambiguous cells.
    """
    fg = np.asarray(mask.values, dtype=bool)
    if not fg.any():
        raise EmptyMask("marching cubes on an empty mask")
    field = np.pad(fg, 1).astype(np.float32)
    verts, faces, _, _ = measure.marching_cubes(field, level=0.5, method="lorensen",
                                                allow_degenerate=False)
    world = index_to_world(mask, verts.astype(np.float64) - 1.0)
    verts, tris = weld(world, faces)
    out = SurfaceMesh(verts, tris)
    if out.volume() < 0:
        out = SurfaceMesh(verts, tris[:, ::-1].copy())
    return out


def _uniform_laplacian(n_vertices, triangles):
    e = np.unique(np.sort(np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]), axis=1), axis=0)
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    adj = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_vertices, n_vertices))
    deg = np.asarray(adj.sum(axis=1)).ravel()
    deg[deg == 0] = 1.0
    return sparse.diags(1.0 / deg) @ adj


def smooth(mesh, iterations=25, lamb=0.5, mu=-0.53):
    """Taubin lambda/mu smoothing with uniform umbrella weights.

    Each iteration applies a shrinking step (``lamb`` > 0) followed by an
    inflating step (``mu`` < -``lamb``), which low-pass filters the surface
    without the volume loss of plain Laplacian smoothing. Connectivity is
    never modified.
    """
    if iterations < 0:
        raise DomainError("iterations must be >= 0")
    v = mesh.vertices.copy()
    if iterations == 0 or len(mesh.triangles) == 0:
        return SurfaceMesh(v, mesh.triangles.copy())
    avg = _uniform_laplacian(len(v), mesh.triangles)
    for _ in range(iterations):
        v = v + lamb * (avg @ v - v)
        v = v + mu * (avg @ v - v)
    return SurfaceMesh(v, mesh.triangles.copy())


@dataclass(frozen=True)
class WatertightReport:
    is_watertight: bool
    boundary_edges: int
    nonmanifold_edges: int
    misoriented_edges: int
    component_count: int
    self_intersections_checked: bool
    self_intersections: int = 0

    def as_dict(self):
        return dict(self.__dict__)


def _segment_hits_triangle(p0, p1, a, b, c, eps=1e-12):
    # vectorized Moller-Trumbore restricted to the closed segment p0-p1
    d = p1 - p0
    e1 = b - a
    e2 = c - a
    h = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, h)
    ok = np.abs(det) > eps
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = p0 - a
    u = inv * np.einsum("ij,ij->i", s, h)
    q = np.cross(s, e1)
    v = inv * np.einsum("ij,ij->i", d, q)
    t = inv * np.einsum("ij,ij->i", e2, q)
    return ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t >= 0) & (t <= 1)


def count_self_intersections(mesh):
    """Number of triangle pairs without a shared vertex whose edges cross.

    Coplanar overlaps are not detected.
    """
    tris = mesh.triangles
    if len(tris) < 2:
        return 0
    p = mesh.vertices[tris]
    centroid = p.mean(axis=1)
    radius = np.linalg.norm(p - centroid[:, None, :], axis=2).max()
    pairs = cKDTree(centroid).query_pairs(2.0 * radius + 1e-12, output_type="ndarray")
    if len(pairs) == 0:
        return 0
    ti, tj = tris[pairs[:, 0]], tris[pairs[:, 1]]
    shared = (ti[:, :, None] == tj[:, None, :]).any(axis=(1, 2))
    pairs = pairs[~shared]
    if len(pairs) == 0:
        return 0
    hit = np.zeros(len(pairs), dtype=bool)
    for first, second in ((0, 1), (1, 0)):
        src, dst = p[pairs[:, first]], p[pairs[:, second]]
        for k in range(3):
            hit |= _segment_hits_triangle(src[:, k], src[:, (k + 1) % 3],
                                          dst[:, 0], dst[:, 1], dst[:, 2])
    return int(hit.sum())


def watertight_check(mesh, check_self_intersections=False):
    """Combinatorial audit: every edge must border exactly two triangles that
    traverse it in opposite directions."""
    t = mesh.triangles
    directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    undirected = np.sort(directed, axis=1)
    keys, inverse, counts = np.unique(undirected, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    boundary = int(np.sum(counts == 1))
    nonmanifold = int(np.sum(counts > 2))
    forward = (directed[:, 0] < directed[:, 1]).astype(np.int64)
    n_forward = np.bincount(inverse, weights=forward, minlength=len(keys))
    misoriented = int(np.sum((counts == 2) & (n_forward != 1)))

    used = np.unique(t)
    if len(used):
        remap = np.full(len(mesh.vertices), -1)
        remap[used] = np.arange(len(used))
        e = remap[keys]
        graph = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(len(used),) * 2)
        n_comp = int(connected_components(graph, directed=False)[0])
    else:
        n_comp = 0
    n_self = count_self_intersections(mesh) if check_self_intersections else 0
    return WatertightReport(
        is_watertight=bool(len(t) > 0 and boundary == 0 and nonmanifold == 0 and misoriented == 0),
        boundary_edges=boundary,
        nonmanifold_edges=nonmanifold,
        misoriented_edges=misoriented,
        component_count=n_comp,
        self_intersections_checked=bool(check_self_intersections),
        self_intersections=n_self,
    )


# --------------------------------------------------------------------------
# tetrahedra


@dataclass(frozen=True, eq=False)
class TetMesh:
    nodes: np.ndarray
    tets: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.nodes, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.tets, dtype=np.int64).reshape(-1, 4)
        if len(n) < 4:
            raise DomainError("a tet mesh needs at least 4 nodes")
        if t.size and (t.min() < 0 or t.max() >= len(n)):
            raise DomainError("tet index out of range")
        object.__setattr__(self, "nodes", n)
        object.__setattr__(self, "tets", t)


# corner k followed by the three vertices it shares an edge with
_CORNERS = ((0, 1, 2, 3), (1, 2, 0, 3), (2, 0, 1, 3), (3, 2, 1, 0))


def scaled_jacobians(points):
    """Scaled Jacobian of each tet in an (n, 4, 3) array.

    ``sqrt(2) * J / max_k(L_k1 L_k2 L_k3)``, where ``J`` is the signed
    determinant of the edge vectors at a corner (identical at all four) and
    the denominator is the largest product of the three edge lengths meeting
    at a corner. Equals 1 for a regular tet, is negated by any odd vertex
    permutation, and is 0 for degenerate elements.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 4, 3)
    jac = None
    lam = np.zeros(len(p))
    for k, a, b, c in _CORNERS:
        ea, eb, ec = p[:, a] - p[:, k], p[:, b] - p[:, k], p[:, c] - p[:, k]
        if jac is None:
            jac = np.einsum("ij,ij->i", ea, np.cross(eb, ec))
        prod = (np.linalg.norm(ea, axis=1) * np.linalg.norm(eb, axis=1)
                * np.linalg.norm(ec, axis=1))
        lam = np.maximum(lam, prod)
    out = np.zeros(len(p))
    ok = lam > 0
    out[ok] = SQRT2 * jac[ok] / lam[ok]
    return np.clip(out, -1.0, 1.0)


def scaled_jacobian(tet):
    """Scaled Jacobian of one tetrahedron given as four points."""
    return float(scaled_jacobians(np.asarray(tet, dtype=np.float64)[None])[0])


@dataclass(frozen=True)
class MeshQualityReport:
    scaled_jacobian: np.ndarray
    median: float
    variance: float
    skewness: float
    invalid_count: int

    @property
    def element_count(self):
        return int(len(self.scaled_jacobian))

    def as_dict(self):
        return {
            "median": self.median,
            "variance": self.variance,
            "skewness": self.skewness,
            "invalid_count": self.invalid_count,
            "element_count": self.element_count,
        }


def tet_quality_report(mesh):
    if len(mesh.tets) == 0:
        raise DomainError("quality report of a mesh without elements")
    sj = scaled_jacobians(mesh.nodes[mesh.tets])
    med, var, skew = robust_stats(sj)
    return MeshQualityReport(sj, med, var, skew, int(np.count_nonzero(sj < 0)))


def _data_lines(path):
    try:
        with open(os.fspath(path)) as fh:
            raw = fh.read().splitlines()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    lines = []
    for line in raw:
        line = line.split("#", 1)[0].strip()
        if line:
            lines.append(line.split())
    if not lines:
        raise CorruptFile(f"{path}: no data")
    return lines


def _ints(tokens, path):
    try:
        return [int(t) for t in tokens]
    except ValueError as exc:
        raise CorruptFile(f"{path}: expected integers in {tokens}") from exc


def read_tetmesh(node_path, ele_path):
    """Read a TetGen-style ``.node``/``.ele`` pair (0- or 1-based)."""
    lines = _data_lines(node_path)
    head = _ints(lines[0][:4] + ["0"] * (4 - len(lines[0][:4])), node_path)
    n_nodes, dim, n_attr, n_mark = head
    if dim != 3 or n_nodes < 0 or n_mark not in (0, 1) or n_attr < 0:
        raise CorruptFile(f"{node_path}: bad header {lines[0]}")
    body = lines[1:]
    if len(body) != n_nodes:
        raise CorruptFile(f"{node_path}: header says {n_nodes} nodes, found {len(body)}")
    width = 4 + n_attr + n_mark
    if any(len(row) != width for row in body):
        raise CorruptFile(f"{node_path}: node rows must have {width} fields")
    ids = np.array(_ints([row[0] for row in body], node_path))
    base = int(ids[0]) if len(ids) else 0
    if base not in (0, 1) or not np.array_equal(ids, np.arange(base, base + n_nodes)):
        raise CorruptFile(f"{node_path}: node ids must run consecutively from 0 or 1")
    try:
        nodes = np.array([[float(x) for x in row[1:4]] for row in body])
    except ValueError as exc:
        raise CorruptFile(f"{node_path}: bad coordinate") from exc

    lines = _data_lines(ele_path)
    head = _ints(lines[0][:3] + ["0"] * (3 - len(lines[0][:3])), ele_path)
    n_tets, per, n_eattr = head
    if per != 4 or n_tets < 0 or n_eattr < 0:
        raise CorruptFile(f"{ele_path}: bad header {lines[0]} (only 4-node tets)")
    body = lines[1:]
    if len(body) != n_tets:
        raise CorruptFile(f"{ele_path}: header says {n_tets} elements, found {len(body)}")
    if any(len(row) != 5 + n_eattr for row in body):
        raise CorruptFile(f"{ele_path}: element rows must have {5 + n_eattr} fields")
    tets = np.array([_ints(row[1:5], ele_path) for row in body], dtype=np.int64).reshape(-1, 4) - base
    if tets.size and (tets.min() < 0 or tets.max() >= n_nodes):
        raise CorruptFile(f"{ele_path}: node reference out of range")
    return TetMesh(nodes, tets)


def write_tetmesh(mesh, node_path, ele_path, base=0):
    with open(os.fspath(node_path), "w") as fh:
        fh.write(f"{len(mesh.nodes)} 3 0 0\n")
        for i, (x, y, z) in enumerate(mesh.nodes):
            fh.write(f"{i + base} {float(x)!r} {float(y)!r} {float(z)!r}\n")
    with open(os.fspath(ele_path), "w") as fh:
        fh.write(f"{len(mesh.tets)} 4 0\n")
        for i, t in enumerate(mesh.tets):
            fh.write(f"{i + base} " + " ".join(str(int(k) + base) for k in t) + "\n")


_STL_RECORD = np.dtype([("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])


def write_stl(mesh, path, header=b"segaeval binary STL"):
    """Binary STL: 80-byte header, uint32 count, 50 bytes per triangle."""
    p = mesh.vertices[mesh.triangles]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    n = np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)
    rec = np.zeros(len(p), dtype=_STL_RECORD)
    rec["normal"] = n
    rec["v"] = p
    try:
        with open(os.fspath(path), "wb") as fh:
            fh.write(header[:80].ljust(80, b"\0"))
            fh.write(struct.pack("<I", len(rec)))
            fh.write(rec.tobytes())
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_stl(path):
    """Read a binary STL written by :func:`write_stl` (vertices welded)."""
    with open(os.fspath(path), "rb") as fh:
        blob = fh.read()
    if len(blob) < 84:
        raise CorruptFile("STL shorter than its header")
    (count,) = struct.unpack_from("<I", blob, 80)
    if len(blob) != 84 + 50 * count:
        raise CorruptFile(f"STL declares {count} triangles but has {len(blob)} bytes")
    rec = np.frombuffer(blob, dtype=_STL_RECORD, offset=84, count=count)
    pts = rec["v"].astype(np.float64).reshape(-1, 3)
    verts, inv = np.unique(pts, axis=0, return_inverse=True)
    return SurfaceMesh(verts, inv.reshape(-1, 3))
