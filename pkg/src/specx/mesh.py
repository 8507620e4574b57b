"""Triangle meshes, differential-geometric matrices, subdomains, and OFF I/O.

Meshes are immutable after construction: geometry caches (stiffness, vertex
areas, edge tables) are built lazily and shared between readers. Flat tori
keep their exact metric in a per-face chart (`corners`) with periodic
identification, so the stored vertex positions are only combinatorial
anchors for them.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

from . import _kernels


class MeshError(ValueError):
    pass


class NonManifoldError(MeshError):
    pass


class OrientationError(MeshError):
    pass


class DegenerateTriangleError(MeshError):
    pass


class TriMesh:
    """Oriented triangle mesh, possibly with boundary.

    vertices: (V, 3) positions; triangles: (F, 3) vertex indices with
    consistent orientation; corners: (F, 3, 3) per-face corner positions
    (defaults to vertex lookup; flat tori store the unwrapped chart here);
    orig_vertex_ids keeps labels across subdomain extraction.
    """

    def __init__(self, vertices, triangles, genus_hint=None, corners=None,
                 orig_vertex_ids=None, chart_meta=None, validate=True):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError("vertices must be (V, 3)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must be (F, 3)")
        if corners is None:
            corners = self.vertices[self.triangles]
        self.corners = np.ascontiguousarray(corners, dtype=float)
        if orig_vertex_ids is None:
            orig_vertex_ids = np.arange(len(self.vertices))
        self.orig_vertex_ids = np.asarray(orig_vertex_ids, dtype=np.int64)
        self.chart_meta = dict(chart_meta) if chart_meta else None
        self._cache = {}
        if validate:
            self.boundary_loops = self._trace_boundary()
        else:
            self.boundary_loops = []
        v = len(self.vertices)
        e = self.num_edges
        f = len(self.triangles)
        b = len(self.boundary_loops)
        if genus_hint is None:
            genus_hint = (2 - b - (v - e + f)) // 2 if self.is_connected else 0
        self.genus_hint = int(genus_hint)
        if validate and self.is_connected:
            if v - e + f != 2 - 2 * self.genus_hint - b:
                raise MeshError(
                    f"Euler formula violated: V-E+F={v - e + f}, "
                    f"expected {2 - 2 * self.genus_hint - b}")

    # -- combinatorics ------------------------------------------------------

    def _edge_tables(self):
        if "edges" in self._cache:
            return self._cache["edges"]
        tri = self.triangles
        undirected = {}
        for t in range(len(tri)):
            for k in range(3):
                i, j = int(tri[t, k]), int(tri[t, (k + 1) % 3])
                if i == j:
                    raise MeshError(f"degenerate face {t} repeats vertex {i}")
                key = (min(i, j), max(i, j))
                undirected[key] = undirected.get(key, 0) + 1
        if any(c > 2 for c in undirected.values()):
            raise NonManifoldError("edge shared by more than 2 triangles")
        directed = {}
        for t in range(len(tri)):
            for k in range(3):
                i, j = int(tri[t, k]), int(tri[t, (k + 1) % 3])
                if (i, j) in directed:
                    raise OrientationError(
                        f"directed edge ({i},{j}) appears twice: "
                        f"inconsistent face orientation")
                directed[(i, j)] = (t, k)
        boundary_directed = {}
        for (i, j) in directed:
            if (j, i) not in directed:
                # boundary half-edge oriented opposite the face loop
                if j in boundary_directed:
                    raise NonManifoldError(
                        f"vertex {j} has multiple boundary fans")
                boundary_directed[j] = i
        tables = {"directed": directed, "undirected": undirected,
                  "boundary_next": boundary_directed}
        self._cache["edges"] = tables
        return tables

    def _trace_boundary(self):
        nxt = self._edge_tables()["boundary_next"]
        seen = set()
        loops = []
        for start in sorted(nxt):
            if start in seen:
                continue
            loop = [start]
            seen.add(start)
            cur = nxt[start]
            while cur != start:
                if cur in seen:
                    raise NonManifoldError("boundary loops intersect")
                loop.append(cur)
                seen.add(cur)
                cur = nxt[cur]
            loops.append(np.asarray(loop, dtype=np.int64))
        loops.sort(key=lambda ring: int(ring.min()))
        return loops

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_edges(self):
        return len(self._edge_tables()["undirected"])

    @property
    def is_closed(self):
        return len(self.boundary_loops) == 0

    @property
    def is_connected(self):
        if "connected" not in self._cache:
            adj = self.adjacency
            ncomp, _ = connected_components(adj, directed=False)
            self._cache["connected"] = ncomp == 1
        return self._cache["connected"]

    @property
    def adjacency(self):
        if "adjacency" not in self._cache:
            tri = self.triangles
            i = np.concatenate([tri[:, 0], tri[:, 1], tri[:, 2]])
            j = np.concatenate([tri[:, 1], tri[:, 2], tri[:, 0]])
            n = self.num_vertices
            a = sp.coo_matrix((np.ones(len(i)), (i, j)), shape=(n, n))
            self._cache["adjacency"] = ((a + a.T) > 0).tocsr()
        return self._cache["adjacency"]

    # -- metric quantities --------------------------------------------------

    @property
    def face_geometry(self):
        """(cotangents (F,3), areas (F,)) computed from the face charts."""
        if "geometry" not in self._cache:
            cots, areas = _kernels.tri_geometry(self.corners)
            if np.any(areas <= 0.0):
                bad = int(np.argmin(areas))
                raise DegenerateTriangleError(
                    f"triangle {bad} has zero area")
            self._cache["geometry"] = (cots, areas)
        return self._cache["geometry"]

    @property
    def vertex_areas(self):
        """Barycentric vertex areas: one third of incident face areas."""
        if "vertex_areas" not in self._cache:
            _, areas = self.face_geometry
            va = np.zeros(self.num_vertices)
            np.add.at(va, self.triangles.ravel(),
                      np.repeat(areas / 3.0, 3))
            self._cache["vertex_areas"] = va
        return self._cache["vertex_areas"]

    @property
    def stiffness(self):
        """Cotangent Dirichlet form as a CSR matrix; row sums are zero."""
        if "stiffness" not in self._cache:
            cots, _ = self.face_geometry
            tri = self.triangles
            ii, jj, vv = [], [], []
            for k in range(3):
                a = tri[:, (k + 1) % 3]
                b = tri[:, (k + 2) % 3]
                w = 0.5 * cots[:, k]
                ii.extend([a, b, a, b])
                jj.extend([b, a, a, b])
                vv.extend([-w, -w, w, w])
            n = self.num_vertices
            mat = sp.coo_matrix(
                (np.concatenate(vv),
                 (np.concatenate(ii), np.concatenate(jj))),
                shape=(n, n)).tocsr()
            mat.sum_duplicates()
            self._cache["stiffness"] = mat
        return self._cache["stiffness"]

    @property
    def edge_lengths(self):
        """Sparse symmetric matrix of metric edge lengths (from face charts)."""
        if "edge_lengths" not in self._cache:
            tri = self.triangles
            co = self.corners
            ii, jj, vv = [], [], []
            for k in range(3):
                a = tri[:, k]
                b = tri[:, (k + 1) % 3]
                ln = np.linalg.norm(co[:, (k + 1) % 3] - co[:, k], axis=1)
                ii.append(a)
                jj.append(b)
                vv.append(ln)
            n = self.num_vertices
            mat = sp.coo_matrix(
                (np.concatenate(vv),
                 (np.concatenate(ii), np.concatenate(jj))),
                shape=(n, n)).tocsr()
            mat = mat.maximum(mat.T)
            self._cache["edge_lengths"] = mat
        return self._cache["edge_lengths"]

    @property
    def mean_edge_length(self):
        el = self.edge_lengths
        return float(el.sum() / el.nnz)

    def scaled(self, factor):
        """Uniformly scaled copy (same conformal class)."""
        return TriMesh(self.vertices * factor, self.triangles,
                       genus_hint=self.genus_hint,
                       corners=self.corners * factor,
                       orig_vertex_ids=self.orig_vertex_ids,
                       chart_meta=self.chart_meta)


@dataclass
class ConformalDensity:
    """Nonnegative per-vertex density multiplying the background metric."""

    f: np.ndarray

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)

    def validate(self, mesh):
        if self.f.shape != (mesh.num_vertices,):
            raise MeshError("density shape mismatch")
        if np.any(self.f < -1e-12):
            raise MeshError("density must be nonnegative")
        if area(mesh, self) <= 0.0:
            raise MeshError("density has zero total mass")
        zero = self.f <= 0.0
        if np.any(np.all(zero[mesh.triangles], axis=1)):
            raise MeshError("density vanishes on a whole triangle; "
                            "zeros must be isolated")
        return self


@dataclass
class MeshMeasure:
    """Vertex-lumped Radon measure (volume-type or boundary-curve-type)."""

    kind: str  # "volume" | "curve"
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.kind not in ("volume", "curve"):
            raise MeshError(f"unknown measure kind {self.kind!r}")

    @property
    def mass(self):
        return float(self.weights.sum())

    def scaled(self, c):
        return MeshMeasure(self.kind, self.weights * c)


@dataclass
class SymmetricForm:
    """Sparse symmetric quadratic form on vertex functions."""

    matrix: sp.spmatrix

    @property
    def dimension(self):
        return self.matrix.shape[0]

    @property
    def diagonal(self):
        return self.matrix.diagonal()

    def __call__(self, u, v=None):
        if v is None:
            v = u
        return float(u @ (self.matrix @ v))


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

_ICO_T = (1.0 + math.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array([
    (-1, _ICO_T, 0), (1, _ICO_T, 0), (-1, -_ICO_T, 0), (1, -_ICO_T, 0),
    (0, -1, _ICO_T), (0, 1, _ICO_T), (0, -1, -_ICO_T), (0, 1, -_ICO_T),
    (_ICO_T, 0, -1), (_ICO_T, 0, 1), (-_ICO_T, 0, -1), (-_ICO_T, 0, 1),
], dtype=float)
_ICO_FACES = np.array([
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
], dtype=np.int64)


def build_sphere_mesh(subdivisions):
    """Icosahedron subdivided and projected to the unit sphere.

    V = 10 * 4**subdivisions + 2.
    """
    if subdivisions < 0:
        raise MeshError("subdivisions must be >= 0")
    verts = _ICO_VERTS / np.linalg.norm(_ICO_VERTS, axis=1, keepdims=True)
    faces = _ICO_FACES.copy()
    for _ in range(subdivisions):
        verts, faces = _subdivide(verts, faces)
    verts = verts / np.linalg.norm(verts, axis=1, keepdims=True)
    return TriMesh(verts, faces, genus_hint=0)


def _subdivide(verts, faces):
    verts = list(map(tuple, verts))
    cache = {}

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key not in cache:
            p = np.asarray(verts[i]) + np.asarray(verts[j])
            p /= np.linalg.norm(p)
            cache[key] = len(verts)
            verts.append(tuple(p))
        return cache[key]

    out = []
    for (a, b, c) in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])
    return np.asarray(verts, dtype=float), np.asarray(out, dtype=np.int64)


def build_torus_mesh(modulus, resolution):
    """Flat torus for the lattice Z + modulus*Z on a resolution^2 grid.

    Vertex positions store the wrapped 2D chart (third coordinate 0); the
    exact flat metric lives in the per-face unwrapped chart, so triangles
    crossing the periodic seam carry correct geometry.
    """
    tau = complex(modulus)
    if tau.imag <= 0.0:
        raise MeshError("modulus must satisfy Im tau > 0")
    res = int(resolution)
    if res < 3:
        raise MeshError("resolution must be >= 3")
    basis = np.array([[1.0, 0.0, 0.0], [tau.real, tau.imag, 0.0]])

    def pos(i, j):
        return (i / res) * basis[0] + (j / res) * basis[1]

    verts = np.array([pos(i, j) for j in range(res) for i in range(res)])

    def vid(i, j):
        return (j % res) * res + (i % res)

    faces = []
    corner_idx = []
    for j in range(res):
        for i in range(res):
            faces.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)))
            corner_idx.append(((i, j), (i + 1, j), (i + 1, j + 1)))
            faces.append((vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)))
            corner_idx.append(((i, j), (i + 1, j + 1), (i, j + 1)))
    corners = np.array([[pos(i, j) for (i, j) in tri] for tri in corner_idx])
    return TriMesh(verts, np.asarray(faces, dtype=np.int64), genus_hint=1,
                   corners=corners,
                   chart_meta={"tau_re": tau.real, "tau_im": tau.imag,
                               "res": res})


# ---------------------------------------------------------------------------
# spec operations
# ---------------------------------------------------------------------------

def stiffness_matrix(mesh):
    """Cotangent Dirichlet form; depends only on the conformal class."""
    return SymmetricForm(mesh.stiffness)


def mass_matrix(mesh, density=None):
    """Lumped (diagonal) mass matrix for the metric density*g0."""
    f = _density_values(mesh, density)
    w = f * mesh.vertex_areas
    if w.sum() <= 0.0:
        raise MeshError("mass matrix has zero total mass")
    return SymmetricForm(sp.diags(w).tocsr())


def area(mesh, density=None):
    """Total area of the metric density*g0 (equals mass-matrix trace)."""
    f = _density_values(mesh, density)
    return float(np.sum(f * mesh.vertex_areas))


def _density_values(mesh, density):
    if density is None:
        return np.ones(mesh.num_vertices)
    if isinstance(density, ConformalDensity):
        return density.f
    return np.asarray(density, dtype=float)


def curve_measure(mesh, loop_ids=None):
    """Length measure of selected boundary loops.

    Vertex weights are half-sums of incident boundary edge lengths; total
    mass equals the length of the selected loops.
    """
    if loop_ids is None:
        loop_ids = list(range(len(mesh.boundary_loops)))
    loop_ids = list(loop_ids)
    if not loop_ids:
        raise MeshError("empty boundary loop selection")
    if any(i < 0 or i >= len(mesh.boundary_loops) for i in loop_ids):
        raise MeshError("loop id out of range (interior loops do not exist)")
    lengths = mesh.edge_lengths
    w = np.zeros(mesh.num_vertices)
    for lid in loop_ids:
        loop = mesh.boundary_loops[lid]
        for k in range(len(loop)):
            i, j = int(loop[k]), int(loop[(k + 1) % len(loop)])
            ell = lengths[i, j]
            w[i] += 0.5 * ell
            w[j] += 0.5 * ell
    return MeshMeasure("curve", w)


def volume_measure(mesh, density=None):
    """Vertex-lumped area measure of density*g0."""
    f = _density_values(mesh, density)
    return MeshMeasure("volume", f * mesh.vertex_areas)


def geodesic_distances(mesh, sources):
    """Graph geodesic distances (Dijkstra on metric edge lengths)."""
    return dijkstra(mesh.edge_lengths, directed=False, indices=sources)


def puncture(mesh, centers, radius):
    """Remove metric disks around center vertices; returns the subdomain.

    radius is a scalar or one value per center. Whole triangles inside each
    disk are removed (no remeshing); one new boundary loop appears per
    center and the Euler characteristic drops by one per hole. Original
    vertex labels are kept in orig_vertex_ids.
    """
    centers = [int(c) for c in centers]
    if not centers:
        return mesh
    radii = np.broadcast_to(np.asarray(radius, dtype=float),
                            (len(centers),))
    if np.any(radii <= 0.0):
        raise MeshError("puncture radius must be positive")
    dist = np.atleast_2d(geodesic_distances(mesh, centers))
    for p in range(len(centers)):
        for q in range(p + 1, len(centers)):
            if dist[p, centers[q]] <= radii[p] + radii[q]:
                raise MeshError(
                    f"puncture disks at {centers[p]} and {centers[q]} overlap")
    tri = mesh.triangles
    removed = np.zeros(len(tri), dtype=bool)
    for p in range(len(centers)):
        inside = dist[p] <= radii[p]
        rm = np.all(inside[tri], axis=1)
        star = np.any(tri == centers[p], axis=1)
        if not np.all(rm[star]):
            raise MeshError(
                f"radius {radii[p]} below mesh resolution at vertex "
                f"{centers[p]}")
        removed |= rm
    keep = ~removed
    new_tri_old = tri[keep]
    used = np.unique(new_tri_old)
    remap = -np.ones(mesh.num_vertices, dtype=np.int64)
    remap[used] = np.arange(len(used))
    sub = TriMesh(mesh.vertices[used], remap[new_tri_old],
                  genus_hint=mesh.genus_hint,
                  corners=mesh.corners[keep],
                  orig_vertex_ids=mesh.orig_vertex_ids[used],
                  chart_meta=mesh.chart_meta)
    expected = len(mesh.boundary_loops) + len(centers)
    if len(sub.boundary_loops) != expected:
        raise MeshError(
            f"puncture produced {len(sub.boundary_loops)} boundary loops, "
            f"expected {expected}; holes may merge (radius too large)")
    return sub


# ---------------------------------------------------------------------------
# OFF file I/O
# ---------------------------------------------------------------------------

def save_mesh(mesh, path):
    """Write ASCII OFF; flat tori get a sidecar `<path>.chart` with tau/res."""
    path = str(path)
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.num_vertices} {len(mesh.triangles)} 0\n")
        for p in mesh.vertices:
            fh.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")
        for t in mesh.triangles:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")
    if mesh.chart_meta:
        with open(path + ".chart", "w") as fh:
            fh.write(f"tau_re={float(mesh.chart_meta['tau_re'])!r}\n")
            fh.write(f"tau_im={float(mesh.chart_meta['tau_im'])!r}\n")
            fh.write(f"res={int(mesh.chart_meta['res'])}\n")


def load_mesh(path):
    """Read an ASCII OFF file; a `<path>.chart` sidecar restores a flat torus."""
    path = str(path)
    sidecar = path + ".chart"
    if os.path.exists(sidecar):
        meta = {}
        with open(sidecar) as fh:
            for line in fh:
                line = line.strip()
                if not line or "=" not in line:
                    continue
                key, val = line.split("=", 1)
                meta[key.strip()] = val.strip()
        try:
            tau = complex(float(meta["tau_re"]), float(meta["tau_im"]))
            res = int(meta["res"])
        except (KeyError, ValueError) as exc:
            raise MeshError(f"bad chart sidecar {sidecar}: {exc}") from exc
        torus = build_torus_mesh(tau, res)
        nv, nf = _off_counts(path)
        if nv != torus.num_vertices or nf != len(torus.triangles):
            raise MeshError("OFF file does not match its chart sidecar")
        return torus
    verts, faces = _parse_off(path)
    return TriMesh(verts, faces)


def _off_counts(path):
    for kind, payload in _off_tokens(path):
        if kind == "counts":
            return payload
    raise MeshError("OFF file missing counts line")


def _off_tokens(path):
    with open(path) as fh:
        lines = [ln.split("#", 1)[0].strip() for ln in fh]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0] != "OFF":
        raise MeshError("not an OFF file (missing OFF header)")
    if len(lines) < 2:
        raise MeshError("OFF file truncated")
    counts = lines[1].split()
    if len(counts) < 2:
        raise MeshError("bad OFF counts line")
    yield "counts", (int(counts[0]), int(counts[1]))
    yield "body", lines[2:]


def _parse_off(path):
    it = _off_tokens(path)
    _, (nv, nf) = next(it)
    _, body = next(it)
    if len(body) < nv + nf:
        raise MeshError("OFF file truncated")
    try:
        verts = np.array([[float(x) for x in body[i].split()[:3]]
                          for i in range(nv)])
        faces = []
        for i in range(nv, nv + nf):
            toks = body[i].split()
            if int(toks[0]) != 3:
                raise MeshError("only triangle faces are supported")
            faces.append([int(x) for x in toks[1:4]])
    except (ValueError, IndexError) as exc:
        raise MeshError(f"OFF parse error: {exc}") from exc
    faces = np.asarray(faces, dtype=np.int64)
    if nf and (faces.min() < 0 or faces.max() >= nv):
        raise MeshError("face index out of range")
    return verts, faces
