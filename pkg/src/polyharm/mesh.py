"""Conforming triangulations refined by newest-vertex bisection.

Each triangle ``(v0, v1, v2)`` is counter-clockwise and its refinement edge is
``(v0, v1)``.  Bisection inserts the midpoint ``p`` of the refinement edge and
produces the children ``(v2, v0, p)`` and ``(v1, v2, p)``.

Every triangle remembers its root in the initial mesh and its bisection path,
encoded as an integer with a leading one bit (``1`` is the root itself,
``2 * code + c`` is child ``c``).  The path codes are what makes overlays of
two refinements of the same initial mesh possible.
"""

from __future__ import annotations

import io
from functools import cached_property

import numpy as np

__all__ = [
    "Triangulation",
    "MeshError",
    "refine_nvb",
    "uniform_red",
    "overlay",
    "initial_mesh",
    "read_mesh",
    "write_mesh",
    "check_conforming",
    "check_initial_condition",
    "ancestor_map",
]


class MeshError(ValueError):
    pass


class Triangulation:
    def __init__(self, vertices, triangles, roots=None, codes=None, coarse=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float).reshape(-1, 2)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64).reshape(-1, 3)
        nt = len(self.triangles)
        self.roots = np.arange(nt, dtype=np.int64) if roots is None else np.asarray(roots, dtype=np.int64)
        self.codes = np.ones(nt, dtype=np.int64) if codes is None else np.asarray(codes, dtype=np.int64)
        # the initial mesh of the genealogy forest
        self.coarse = self if coarse is None else coarse
        for arr in (self.vertices, self.triangles, self.roots, self.codes):
            arr.setflags(write=False)

    def __repr__(self):
        return f"Triangulation(nvert={self.nvert}, nelem={self.nelem})"

    @property
    def nvert(self) -> int:
        return len(self.vertices)

    @property
    def nelem(self) -> int:
        return len(self.triangles)

    @cached_property
    def corners(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape ``(nelem, 3, 2)``."""
        return self.vertices[self.triangles]

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.corners
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def h(self) -> np.ndarray:
        """Square root of the triangle areas."""
        return np.sqrt(self.areas)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @cached_property
    def grad_lambda(self) -> np.ndarray:
        """Gradients of the barycentric coordinates, shape ``(nelem, 3, 2)``."""
        p = self.corners
        area2 = 2.0 * self.areas
        g = np.empty_like(p)
        for i in range(3):
            a = p[:, (i + 1) % 3]
            b = p[:, (i + 2) % 3]
            # rotate (b - a) clockwise and scale; points into the triangle towards vertex i
            g[:, i, 0] = (a[:, 1] - b[:, 1]) / area2
            g[:, i, 1] = (b[:, 0] - a[:, 0]) / area2
        return g

    @cached_property
    def _edge_data(self):
        t = self.triangles
        # local edge j joins local vertices j and j+1; local edge 0 is the refinement edge
        pairs = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1).reshape(-1, 2)
        pairs = np.sort(pairs, axis=1)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        elem_edges = inverse.reshape(-1, 3)
        ne = len(edges)
        owner = np.repeat(np.arange(len(t)), 3)
        local = np.tile(np.arange(3), len(t))
        order = np.lexsort((owner, inverse))
        inv_sorted = inverse[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = inv_sorted[1:] != inv_sorted[:-1]
        counts = np.bincount(inverse, minlength=ne)
        if np.any(counts > 2):
            raise MeshError("an edge is shared by more than two triangles")
        edge_elems = -np.ones((ne, 2), dtype=np.int64)
        edge_local = -np.ones((ne, 2), dtype=np.int64)
        edge_elems[inv_sorted[first], 0] = owner[order][first]
        edge_local[inv_sorted[first], 0] = local[order][first]
        second = ~first
        edge_elems[inv_sorted[second], 1] = owner[order][second]
        edge_local[inv_sorted[second], 1] = local[order][second]
        return edges, elem_edges, edge_elems, edge_local

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted vertex pairs, shape ``(nedge, 2)``."""
        return self._edge_data[0]

    @property
    def elem_edges(self) -> np.ndarray:
        """Edge id of local edge ``j`` (vertices ``j, j+1``) of each triangle."""
        return self._edge_data[1]

    @property
    def edge_elems(self) -> np.ndarray:
        """``(T+, T-)`` per edge with ``T+`` the lower triangle id; ``-1`` on the boundary."""
        return self._edge_data[2]

    @property
    def edge_local(self) -> np.ndarray:
        return self._edge_data[3]

    @property
    def nedge(self) -> int:
        return len(self.edges)

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_elems[:, 1] < 0)

    @cached_property
    def edge_geometry(self):
        """Start point, end point, length, unit normal and unit tangent per edge.

        The normal is the outer normal of ``T+``; the tangent is the normal
        rotated by +90 degrees.
        """
        tp = self.edge_elems[:, 0]
        lp = self.edge_local[:, 0]
        a = self.vertices[self.triangles[tp, lp]]
        b = self.vertices[self.triangles[tp, (lp + 1) % 3]]
        d = b - a
        length = np.hypot(d[:, 0], d[:, 1])
        tangent = d / length[:, None]
        normal = np.column_stack([tangent[:, 1], -tangent[:, 0]])
        return a, b, length, normal, tangent

    @property
    def depth(self) -> np.ndarray:
        return np.array([int(c).bit_length() - 1 for c in self.codes], dtype=np.int64)

    def same_forest(self, other: "Triangulation") -> bool:
        a, b = self.coarse, other.coarse
        return a is b or (
            a.nvert == b.nvert
            and a.nelem == b.nelem
            and np.array_equal(a.vertices, b.vertices)
            and np.array_equal(a.triangles, b.triangles)
        )

    def total_area(self) -> float:
        return float(self.areas.sum())


def _midpoint_split(mesh: Triangulation, edge_marks: np.ndarray) -> Triangulation:
    """Refine every triangle according to the marked edges (closed under NVB)."""
    t = mesh.triangles
    ee = mesh.elem_edges
    marked = edge_marks.copy()
    while True:
        need = marked[ee].any(axis=1) & ~marked[ee[:, 0]]
        if not need.any():
            break
        marked[ee[need, 0]] = True

    nv = mesh.nvert
    medges = np.flatnonzero(marked)
    mid_id = -np.ones(mesh.nedge, dtype=np.int64)
    mid_id[medges] = nv + np.arange(len(medges))
    ends = mesh.vertices[mesh.edges[medges]]
    new_vertices = np.vstack([mesh.vertices, 0.5 * (ends[:, 0] + ends[:, 1])])

    v0, v1, v2 = t[:, 0], t[:, 1], t[:, 2]
    m0 = mid_id[ee[:, 0]]
    m1 = mid_id[ee[:, 1]]
    m2 = mid_id[ee[:, 2]]
    bis = m0 >= 0
    left = bis & (m2 >= 0)   # child (v2, v0, m0) bisected again
    right = bis & (m1 >= 0)  # child (v1, v2, m0) bisected again

    tris, roots, codes = [], [], []

    keep = ~bis
    tris.append(t[keep])
    roots.append(mesh.roots[keep])
    codes.append(mesh.codes[keep])

    def emit(mask, cols, code_fn):
        idx = np.flatnonzero(mask)
        if len(idx):
            tris.append(np.column_stack([c[idx] for c in cols]))
            roots.append(mesh.roots[idx])
            codes.append(code_fn(mesh.codes[idx]))

    # left child kept whole or split into (m0, v2, m2), (v0, m0, m2)
    emit(bis & ~left, (v2, v0, m0), lambda c: 2 * c)
    emit(left, (m0, v2, m2), lambda c: 4 * c)
    emit(left, (v0, m0, m2), lambda c: 4 * c + 1)
    # right child kept whole or split into (m0, v1, m1), (v2, m0, m1)
    emit(bis & ~right, (v1, v2, m0), lambda c: 2 * c + 1)
    emit(right, (m0, v1, m1), lambda c: 4 * c + 2)
    emit(right, (v2, m0, m1), lambda c: 4 * c + 3)

    return Triangulation(
        new_vertices,
        np.vstack(tris),
        np.concatenate(roots),
        np.concatenate(codes),
        coarse=mesh.coarse,
    )


def refine_nvb(mesh: Triangulation, marks) -> Triangulation:
    """Smallest conforming NVB refinement in which every marked triangle is bisected."""
    marks = np.unique(np.asarray(marks, dtype=np.int64).reshape(-1))
    if marks.size == 0:
        return mesh
    if marks.min() < 0 or marks.max() >= mesh.nelem:
        raise MeshError("marked triangles must be leaves of the current mesh")
    edge_marks = np.zeros(mesh.nedge, dtype=bool)
    edge_marks[mesh.elem_edges[marks, 0]] = True
    return _midpoint_split(mesh, edge_marks)


def uniform_red(mesh: Triangulation) -> Triangulation:
    """Bisect all three edges of every triangle (four children per triangle)."""
    return _midpoint_split(mesh, np.ones(mesh.nedge, dtype=bool))


def overlay(ta: Triangulation, tb: Triangulation) -> Triangulation:
    """Coarsest common refinement of two meshes from the same initial mesh."""
    if not ta.same_forest(tb):
        raise MeshError("meshes do not share an initial triangulation")
    keys_a = set(zip(ta.roots.tolist(), ta.codes.tolist()))
    keys_b = set(zip(tb.roots.tolist(), tb.codes.tolist()))

    def covered(mesh, other_keys):
        # triangles of ``mesh`` contained in (or equal to) a leaf of the other mesh
        out = np.zeros(mesh.nelem, dtype=bool)
        for i, (r, c) in enumerate(zip(mesh.roots.tolist(), mesh.codes.tolist())):
            while c >= 1:
                if (r, c) in other_keys:
                    out[i] = True
                    break
                c >>= 1
        return out

    sel_a = covered(ta, keys_b)
    sel_b = covered(tb, keys_a)
    # drop duplicates: triangles present in both meshes come from ``ta``
    if sel_b.any():
        dup = np.array(
            [(r, c) in keys_a for r, c in zip(tb.roots[sel_b].tolist(), tb.codes[sel_b].tolist())],
            dtype=bool,
        )
        idx_b = np.flatnonzero(sel_b)[~dup]
    else:
        idx_b = np.zeros(0, dtype=np.int64)
    idx_a = np.flatnonzero(sel_a)

    corners = np.concatenate([ta.corners[idx_a], tb.corners[idx_b]]).reshape(-1, 2)
    roots = np.concatenate([ta.roots[idx_a], tb.roots[idx_b]])
    codes = np.concatenate([ta.codes[idx_a], tb.codes[idx_b]])
    order = np.lexsort((codes, roots))
    corners = corners.reshape(-1, 3, 2)[order].reshape(-1, 2)
    verts, inverse = np.unique(corners, axis=0, return_inverse=True)
    tris = inverse.reshape(-1, 3)
    return Triangulation(verts, tris, roots[order], codes[order], coarse=ta.coarse)


def ancestor_map(fine: Triangulation, coarse: Triangulation) -> np.ndarray:
    """Index of the ``coarse`` triangle containing each ``fine`` triangle.

    ``fine`` must be a refinement of ``coarse`` within one forest.
    """
    if not fine.same_forest(coarse):
        raise MeshError("meshes do not share an initial triangulation")
    lookup = {key: i for i, key in enumerate(zip(coarse.roots.tolist(), coarse.codes.tolist()))}
    out = np.empty(fine.nelem, dtype=np.int64)
    for i, (r, c) in enumerate(zip(fine.roots.tolist(), fine.codes.tolist())):
        while (r, c) not in lookup:
            c >>= 1
            if c == 0:
                raise MeshError("first mesh is not a refinement of the second")
        out[i] = lookup[(r, c)]
    return out


def initial_mesh(domain: str) -> Triangulation:
    """Initial triangulations satisfying the matching refinement-edge condition.

    ``square``: the unit square cut by both diagonals; the refinement edges
    are the boundary edges.  ``lshape``: ``(-1,1)^2 \\ [0,1]x[-1,0]`` as three
    unit squares, each cut by the diagonal through the re-entrant corner,
    which is the refinement edge of both halves.
    """
    if domain == "square":
        v = [(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5)]
        t = [(0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)]
    elif domain == "lshape":
        v = [(-1, -1), (0, -1), (-1, 0), (0, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
        t = [
            # [-1,0]x[-1,0], diagonal (0,0)-(-1,-1)
            (3, 0, 1), (0, 3, 2),
            # [-1,0]x[0,1], diagonal (0,0)-(-1,1)
            (5, 3, 6), (3, 5, 2),
            # [0,1]x[0,1], diagonal (0,0)-(1,1)
            (3, 7, 6), (7, 3, 4),
        ]
    elif domain == "unit-triangle":
        v = [(0, 0), (1, 0), (0, 1)]
        t = [(1, 2, 0)]
    else:
        raise MeshError(f"unknown domain {domain!r}")
    return Triangulation(np.array(v, dtype=float), np.array(t))


def write_mesh(mesh: Triangulation, path_or_file) -> None:
    buf = io.StringIO()
    buf.write(f"vertices {mesh.nvert}\n")
    for x, y in mesh.vertices:
        buf.write(f"{x:.17g} {y:.17g}\n")
    buf.write(f"triangles {mesh.nelem}\n")
    for a, b, c in mesh.triangles:
        buf.write(f"{a} {b} {c}\n")
    text = buf.getvalue()
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w") as fh:
            fh.write(text)


def read_mesh(path_or_file) -> Triangulation:
    """Read the plain-text format; the result starts a fresh genealogy forest."""
    if hasattr(path_or_file, "read"):
        lines = path_or_file.read().splitlines()
    else:
        with open(path_or_file) as fh:
            lines = fh.read().splitlines()
    lines = [ln.strip() for ln in lines if ln.strip()]
    try:
        head, n = lines[0].split()
        if head != "vertices":
            raise MeshError("expected 'vertices N' header")
        n = int(n)
        verts = np.array([[float(s) for s in ln.split()] for ln in lines[1 : 1 + n]]).reshape(-1, 2)
        head, m = lines[1 + n].split()
        if head != "triangles":
            raise MeshError("expected 'triangles M' header")
        m = int(m)
        tris = np.array([[int(s) for s in ln.split()] for ln in lines[2 + n : 2 + n + m]]).reshape(-1, 3)
    except (IndexError, ValueError) as exc:
        raise MeshError(f"malformed mesh file: {exc}") from exc
    if len(verts) != n or len(tris) != m:
        raise MeshError("mesh file is truncated")
    return Triangulation(verts, tris)


def check_conforming(mesh: Triangulation, tol: float = 1e-12) -> bool:
    """Brute-force check: positive areas, no edge in more than two triangles,
    and no vertex in the relative interior of an edge (no hanging nodes)."""
    if np.any(mesh.areas <= 0):
        return False
    try:
        edges = mesh.edges
    except MeshError:
        return False
    v = mesh.vertices
    a = v[edges[:, 0]]
    b = v[edges[:, 1]]
    d = b - a
    len2 = (d**2).sum(axis=1)
    chunk = max(1, 2_000_000 // max(mesh.nvert, 1))
    for s in range(0, len(edges), chunk):
        aa, dd, ll = a[s : s + chunk], d[s : s + chunk], len2[s : s + chunk]
        rel = v[None, :, :] - aa[:, None, :]
        tpar = (rel * dd[:, None, :]).sum(axis=2) / ll[:, None]
        cross = rel[:, :, 0] * dd[:, None, 1] - rel[:, :, 1] * dd[:, None, 0]
        inside = (tpar > tol) & (tpar < 1 - tol) & (np.abs(cross) <= tol * np.sqrt(ll)[:, None])
        if inside.any():
            return False
    return True


def check_initial_condition(mesh: Triangulation) -> bool:
    """Matching refinement edges across every interior edge."""
    ee = mesh.elem_edges
    for e in range(mesh.nedge):
        tp, tm = mesh.edge_elems[e]
        if tm < 0:
            continue
        if (ee[tp, 0] == e) != (ee[tm, 0] == e):
            return False
    return True
